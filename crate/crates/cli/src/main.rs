//! `ewa`: experience-weighted attraction learning on random games.
//!
//! Exit codes: 0 success, 1 configuration/domain/I-O error, 2 resource
//! (memory budget) error, 3 finished with some failed cells or grid points.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ewa_core::classifier::Engine;
use ewa_core::sweep::{RunManifest, SweepConfig};

use commands::{AreaConfig, BoundaryConfig, ClassifyConfig, GenerateConfig, Job, SimulateConfig, SweepKind};

#[derive(Parser, Debug)]
#[command(name = "ewa", version, about = "Simulate, classify and sweep EWA learning on random p-player games")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML file with the command's settings (unknown keys are an error).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a payoff tensor and write it (binary plus a CSV preview).
    Generate(GenerateArgs),
    /// Run one trajectory and export it with its payoff series.
    Simulate(SimulateArgs),
    /// Classify many initial conditions of one game.
    Classify(ClassifyArgs),
    /// Convergence heat map over the (alpha, Gamma) grid.
    Sweep(SweepArgs),
    /// Limit-cycle fraction map over the (alpha, Gamma) grid.
    LimitCycles(SweepArgs),
    /// Fixed-point multiplicity map over the (alpha, Gamma) grid.
    Multiplicity(SweepArgs),
    /// Theoretical stability boundary alpha/beta versus Gamma.
    Boundary(BoundaryArgs),
    /// Area of the unstable region for a range of p.
    Area(AreaArgs),
    /// Re-run a command from its manifest.json.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
struct GameArgs {
    #[arg(long = "p")]
    players: Option<usize>,
    #[arg(long = "n")]
    actions: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    game: GameArgs,
    /// Rows in entries.csv.
    #[arg(long)]
    rows: Option<usize>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    game: GameArgs,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Index of the random initial condition.
    #[arg(long)]
    init: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    stride: Option<u64>,
    /// Integrate the continuous flow with this RK4 step instead of the map.
    #[arg(long, value_name = "STEP")]
    flow: Option<f64>,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[command(flatten)]
    game: GameArgs,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    initial_conditions: Option<usize>,
    #[arg(long)]
    max_steps: Option<u64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long = "p")]
    players: Option<usize>,
    #[arg(long = "n")]
    actions: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    alpha_count: Option<usize>,
    #[arg(long)]
    gamma_count: Option<usize>,
    #[arg(long)]
    n_games: Option<usize>,
    #[arg(long)]
    initial_conditions: Option<usize>,
    #[arg(long)]
    max_steps: Option<u64>,
    /// Skip the theory boundary overlay.
    #[arg(long)]
    no_theory: bool,
}

#[derive(Args, Debug)]
struct BoundaryArgs {
    /// Player counts, comma separated.
    #[arg(long = "p", value_delimiter = ',')]
    players: Option<Vec<usize>>,
    #[arg(long)]
    gamma_count: Option<usize>,
}

#[derive(Args, Debug)]
struct AreaArgs {
    #[arg(long)]
    p_min: Option<usize>,
    #[arg(long)]
    p_max: Option<usize>,
    #[arg(long)]
    gamma_nodes: Option<usize>,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    manifest: PathBuf,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn build_job(cli: Cli) -> ewa_core::Result<Job> {
    let file = cli.common.config.as_deref();
    let mut job = match cli.command {
        Command::Generate(a) => {
            let mut c: GenerateConfig = config::load(file, &GenerateConfig::default())?;
            set(&mut c.players, a.game.players);
            set(&mut c.actions, a.game.actions);
            set(&mut c.gamma, a.game.gamma);
            set(&mut c.csv_rows, a.rows);
            Job::Generate(c)
        }
        Command::Simulate(a) => {
            let mut c: SimulateConfig = config::load(file, &SimulateConfig::default())?;
            set(&mut c.players, a.game.players);
            set(&mut c.actions, a.game.actions);
            set(&mut c.gamma, a.game.gamma);
            set(&mut c.alpha, a.alpha);
            set(&mut c.beta, a.beta);
            set(&mut c.init, a.init);
            set(&mut c.steps, a.steps);
            set(&mut c.stride, a.stride);
            if let Some(h) = a.flow {
                c.engine = Engine::Flow { step: Some(h) };
            }
            Job::Simulate(c)
        }
        Command::Classify(a) => {
            let mut c: ClassifyConfig = config::load(file, &ClassifyConfig::default())?;
            set(&mut c.players, a.game.players);
            set(&mut c.actions, a.game.actions);
            set(&mut c.gamma, a.game.gamma);
            set(&mut c.alpha, a.alpha);
            set(&mut c.beta, a.beta);
            set(&mut c.classifier.n_initial_conditions, a.initial_conditions);
            set(&mut c.classifier.max_steps, a.max_steps);
            Job::Classify(c)
        }
        Command::Sweep(a) => sweep_job(SweepKind::Sweep, file, a)?,
        Command::LimitCycles(a) => sweep_job(SweepKind::LimitCycles, file, a)?,
        Command::Multiplicity(a) => sweep_job(SweepKind::Multiplicity, file, a)?,
        Command::Boundary(a) => {
            let mut c: BoundaryConfig = config::load(file, &BoundaryConfig::default())?;
            set(&mut c.players, a.players);
            set(&mut c.gamma.count, a.gamma_count);
            Job::Boundary(c)
        }
        Command::Area(a) => {
            let mut c: AreaConfig = config::load(file, &AreaConfig::default())?;
            set(&mut c.p_min, a.p_min);
            set(&mut c.p_max, a.p_max);
            set(&mut c.gamma_nodes, a.gamma_nodes);
            Job::Area(c)
        }
        Command::Replay(a) => {
            if file.is_some() {
                return Err(ewa_core::Error::Config("replay takes its settings from the manifest, not --config".into()));
            }
            let mut job = Job::from_manifest(&RunManifest::read(&a.manifest)?)?;
            // Reproduce the recorded seed; only scheduling and location may change.
            job.override_common(None, cli.common.workers, cli.common.out);
            return Ok(job);
        }
    };
    job.override_common(cli.common.seed, cli.common.workers, cli.common.out);
    Ok(job)
}

fn sweep_job(kind: SweepKind, file: Option<&std::path::Path>, a: SweepArgs) -> ewa_core::Result<Job> {
    let mut c: SweepConfig = config::load(file, &kind.defaults())?;
    set(&mut c.players, a.players);
    set(&mut c.actions, a.actions);
    set(&mut c.beta, a.beta);
    set(&mut c.alpha.count, a.alpha_count);
    set(&mut c.gamma.count, a.gamma_count);
    set(&mut c.n_games, a.n_games);
    set(&mut c.classifier.n_initial_conditions, a.initial_conditions);
    set(&mut c.classifier.max_steps, a.max_steps);
    if a.no_theory {
        c.theory_overlay = false;
    }
    Ok(Job::Sweep(kind, c))
}

fn exit_code(e: &ewa_core::Error) -> u8 {
    match e {
        ewa_core::Error::Resource { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let job = match build_job(cli) {
        Ok(job) => job,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(job.workers()).build_global() {
        eprintln!("error: cannot start worker pool: {e}");
        return ExitCode::from(1);
    }
    match job.run() {
        Ok(outcome) => {
            for name in &outcome.outputs {
                println!("{}", outcome.out_dir.join(name).display());
            }
            println!("{}", outcome.out_dir.join("manifest.json").display());
            if outcome.partial_failures > 0 {
                eprintln!("warning: {} cells or grid points failed; see the error column", outcome.partial_failures);
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
