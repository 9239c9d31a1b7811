//! Configurations and runners for every subcommand. Each runner writes its
//! CSV files plus a `manifest.json` that `ewa replay` can re-run.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ewa_core::classifier::{classify_many, distinct_fixed_points, write_reports_csv, AttractorClass, ClassCounts, ClassifierConfig, Engine};
use ewa_core::dynamics::{autocorrelation, diff_series, init_random, integrate_sc, run_map, FlowStepper, Sampling};
use ewa_core::ensemble::{write_entries_csv, write_tensor, GameParams, PayoffTensor, DEFAULT_MEMORY_BUDGET};
use ewa_core::rng;
use ewa_core::sweep::{emit_outputs, preflight_output_dir, run_sweep, GridAxis, MapValue, RunManifest, SweepConfig};
use ewa_core::theory::{area_asymptote, boundary_curve, unstable_area, QuadratureRule, DEFAULT_HERMITE_NODES};
use ewa_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Largest lag reported in `volatility.csv`.
const VOLATILITY_MAX_LAG: usize = 50;

/// What a finished command reports back to `main`.
#[derive(Debug)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub outputs: Vec<String>,
    /// Rows (cells, grid points) that failed without aborting the run.
    pub partial_failures: usize,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn finish<C: Serialize>(command: &str, config: &C, dir: &Path, start: Instant, outputs: Vec<String>, partial_failures: usize) -> Result<Outcome> {
    RunManifest::new(command, config, start.elapsed().as_secs_f64(), outputs.clone())?.write(&dir.join("manifest.json"))?;
    Ok(Outcome { out_dir: dir.to_path_buf(), outputs, partial_failures })
}

fn quote(e: &Option<String>) -> String {
    e.as_ref().map(|s| format!("\"{}\"", s.replace('"', "'"))).unwrap_or_default()
}

fn game(players: usize, actions: usize, alpha: f64, beta: f64, gamma: f64, seed: u64, budget: u64) -> Result<GameParams> {
    let params = GameParams { players, actions, alpha, beta, gamma, seed };
    params.validate()?;
    params.check_budget(budget)?;
    Ok(params)
}

fn tensor_for(params: &GameParams, budget: u64, zero: bool) -> Result<PayoffTensor> {
    if zero {
        PayoffTensor::zeros(params)
    } else {
        PayoffTensor::generate_with_budget(params, budget)
    }
}

// ---------------------------------------------------------------- generate

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateConfig {
    pub players: usize,
    pub actions: usize,
    pub gamma: f64,
    pub seed: u64,
    /// Rows of `entries.csv` (action tuples in lexicographic order).
    pub csv_rows: usize,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub memory_budget: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            players: 2,
            actions: 50,
            gamma: 0.0,
            seed: 0,
            csv_rows: 1000,
            out_dir: PathBuf::from("out"),
            workers: 0,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

pub fn generate(config: &GenerateConfig) -> Result<Outcome> {
    let start = Instant::now();
    let params = game(config.players, config.actions, 0.0, 0.0, config.gamma, config.seed, config.memory_budget)?;
    preflight_output_dir(&config.out_dir)?;
    let tensor = PayoffTensor::generate_with_budget(&params, config.memory_budget)?;
    write_tensor(&tensor, create(&config.out_dir, "tensor.bin")?)?;
    write_entries_csv(&tensor, config.csv_rows, create(&config.out_dir, "entries.csv")?)?;
    finish("generate", config, &config.out_dir, start, vec!["tensor.bin".into(), "entries.csv".into()], 0)
}

// ---------------------------------------------------------------- simulate

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub players: usize,
    pub actions: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Seed of the payoff tensor.
    pub seed: u64,
    /// Index of the random initial condition.
    pub init: u64,
    pub engine: Engine,
    /// Map iterations, or RK4 steps for the flow.
    pub steps: u64,
    pub stride: u64,
    /// Flat component indices `mu * N + i` to record; all when absent.
    pub components: Option<Vec<usize>>,
    pub zero_payoffs: bool,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub memory_budget: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            players: 3,
            actions: 20,
            alpha: 0.01,
            beta: 0.05,
            gamma: -0.5,
            seed: 0,
            init: 0,
            engine: Engine::Map,
            steps: 20_000,
            stride: 10,
            components: None,
            zero_payoffs: false,
            out_dir: PathBuf::from("out"),
            workers: 0,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

pub fn simulate(config: &SimulateConfig) -> Result<Outcome> {
    let start = Instant::now();
    let params = game(config.players, config.actions, config.alpha, config.beta, config.gamma, config.seed, config.memory_budget)?;
    if config.steps == 0 || config.stride == 0 {
        return Err(Error::Config("steps and stride must be at least 1".into()));
    }
    preflight_output_dir(&config.out_dir)?;
    let tensor = tensor_for(&params, config.memory_budget, config.zero_payoffs)?;
    let profile = init_random(&params, rng::init_seed(params.seed, config.init));
    let mut sampling = Sampling::every(config.stride);
    sampling.components = config.components.clone();
    let traj = match config.engine {
        Engine::Map => run_map(&tensor, &profile, config.steps, &sampling)?,
        Engine::Flow { step } => {
            let r = params.r().ok_or_else(|| Error::Config("the flow needs alpha > 0".into()))?;
            let h = step.unwrap_or_else(|| FlowStepper::default_step(r));
            integrate_sc(&tensor, &profile, r, config.steps as f64 * h, h, &sampling)?
        }
    };
    traj.write_csv(create(&config.out_dir, "trajectory.csv")?)?;

    let deltas = diff_series(&traj.payoff_sum);
    let mut w = create(&config.out_dir, "payoff.csv")?;
    writeln!(w, "time,payoff_sum,delta,abs_delta")?;
    for (k, (t, s)) in traj.times.iter().zip(&traj.payoff_sum).enumerate() {
        match k.checked_sub(1).map(|j| deltas[j]) {
            Some(d) => writeln!(w, "{t},{s},{d},{}", d.abs())?,
            None => writeln!(w, "{t},{s},,")?,
        }
    }
    w.flush()?;

    let abs: Vec<f64> = deltas.iter().map(|d| d.abs()).collect();
    let mut w = create(&config.out_dir, "volatility.csv")?;
    writeln!(w, "lag,abs_delta_autocorrelation")?;
    let max_lag = VOLATILITY_MAX_LAG.min(abs.len().saturating_sub(2));
    // A converged run has a constant series and no autocorrelation.
    if let Ok(acf) = autocorrelation(&abs, max_lag) {
        for (lag, v) in acf.iter().enumerate() {
            writeln!(w, "{lag},{v}")?;
        }
    }
    w.flush()?;
    let outputs = ["trajectory.csv", "payoff.csv", "volatility.csv"].map(String::from).to_vec();
    finish("simulate", config, &config.out_dir, start, outputs, 0)
}

// ---------------------------------------------------------------- classify

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyConfig {
    pub players: usize,
    pub actions: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub seed: u64,
    pub classifier: ClassifierConfig,
    pub zero_payoffs: bool,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub memory_budget: u64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            players: 2,
            actions: 50,
            alpha: 0.1,
            beta: 0.05,
            gamma: -0.5,
            seed: 0,
            classifier: ClassifierConfig::default(),
            zero_payoffs: false,
            out_dir: PathBuf::from("out"),
            workers: 0,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

pub fn classify(config: &ClassifyConfig) -> Result<Outcome> {
    let start = Instant::now();
    let params = game(config.players, config.actions, config.alpha, config.beta, config.gamma, config.seed, config.memory_budget)?;
    config.classifier.validate()?;
    preflight_output_dir(&config.out_dir)?;
    let tensor = tensor_for(&params, config.memory_budget, config.zero_payoffs)?;
    let outcomes = classify_many(&tensor, &params, &config.classifier)?;
    write_reports_csv(&outcomes, create(&config.out_dir, "reports.csv")?)?;

    let counts = ClassCounts::from_outcomes(&outcomes);
    let points: Vec<_> = outcomes
        .iter()
        .filter_map(|o| match &o.report {
            Ok(r) => match &r.class {
                AttractorClass::FixedPoint { location } => Some(location.clone()),
                _ => None,
            },
            Err(_) => None,
        })
        .collect();
    let distinct = distinct_fixed_points(&points, config.classifier.fp_identity_tol).len();
    let total = counts.total() as f64;
    let mut w = create(&config.out_dir, "summary.csv")?;
    writeln!(w, "fixed_point,limit_cycle,non_convergent,failed,fixed_point_fraction,distinct_fixed_points")?;
    writeln!(
        w,
        "{},{},{},{},{},{distinct}",
        counts.fixed_point,
        counts.limit_cycle,
        counts.non_convergent,
        counts.failed,
        counts.fixed_point as f64 / total
    )?;
    w.flush()?;
    finish("classify", config, &config.out_dir, start, vec!["reports.csv".into(), "summary.csv".into()], counts.failed)
}

// ------------------------------------------------- sweep and its variants

/// Which heat map a sweep-type command produces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepKind {
    Sweep,
    LimitCycles,
    Multiplicity,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Sweep => "sweep",
            Self::LimitCycles => "limit-cycles",
            Self::Multiplicity => "multiplicity",
        }
    }

    pub fn defaults(self) -> SweepConfig {
        let base = SweepConfig::default();
        match self {
            Self::Sweep => base,
            Self::LimitCycles => SweepConfig { map_value: MapValue::LimitCycle, ..base },
            Self::Multiplicity => SweepConfig {
                n_games: 5,
                classifier: ClassifierConfig { n_initial_conditions: 20, ..base.classifier },
                map_value: MapValue::Multiplicity,
                ..base
            },
        }
    }
}

pub fn sweep(kind: SweepKind, config: &SweepConfig) -> Result<Outcome> {
    config.validate()?;
    preflight_output_dir(&config.out_dir)?;
    let result = run_sweep(config)?;
    let files = emit_outputs(&result, kind.name(), &config.out_dir)?;
    let outputs = [&files.heatmap_csv, &files.boundary_csv, &files.svg]
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    Ok(Outcome { out_dir: config.out_dir.clone(), outputs, partial_failures: result.failed_cells() })
}

// ---------------------------------------------------------------- boundary

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundaryConfig {
    pub players: Vec<usize>,
    pub gamma: GridAxis,
    pub hermite_nodes: usize,
    pub out_dir: PathBuf,
    pub workers: usize,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self {
            players: vec![2],
            gamma: GridAxis::linear(-1.0, 0.0, 21),
            hermite_nodes: DEFAULT_HERMITE_NODES,
            out_dir: PathBuf::from("out"),
            workers: 0,
        }
    }
}

pub fn boundary(config: &BoundaryConfig) -> Result<Outcome> {
    let start = Instant::now();
    config.gamma.validate("gamma")?;
    if config.players.is_empty() {
        return Err(Error::Config("players list is empty".into()));
    }
    let rule = QuadratureRule::gauss_hermite(config.hermite_nodes)?;
    preflight_output_dir(&config.out_dir)?;
    let gammas = config.gamma.values();
    let mut w = create(&config.out_dir, "boundary.csv")?;
    writeln!(w, "p,gamma,critical_alpha_over_beta,error")?;
    let mut failures = 0;
    for &p in &config.players {
        for (g, v) in gammas.iter().zip(boundary_curve(p, &gammas, &rule)) {
            match v {
                Ok(v) => writeln!(w, "{p},{g},{v},")?,
                Err(e) => {
                    failures += 1;
                    writeln!(w, "{p},{g},,{}", quote(&Some(e.to_string())))?
                }
            }
        }
    }
    w.flush()?;
    finish("boundary", config, &config.out_dir, start, vec!["boundary.csv".into()], failures)
}

// -------------------------------------------------------------------- area

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AreaConfig {
    pub p_min: usize,
    pub p_max: usize,
    /// Gauss-Legendre nodes in `Γ ∈ [-1, 0]`.
    pub gamma_nodes: usize,
    pub hermite_nodes: usize,
    pub out_dir: PathBuf,
    pub workers: usize,
}

impl Default for AreaConfig {
    fn default() -> Self {
        Self { p_min: 2, p_max: 11, gamma_nodes: 8, hermite_nodes: DEFAULT_HERMITE_NODES, out_dir: PathBuf::from("out"), workers: 0 }
    }
}

pub fn area(config: &AreaConfig) -> Result<Outcome> {
    let start = Instant::now();
    if config.p_min < 2 || config.p_max < config.p_min {
        return Err(Error::Config(format!("need 2 <= p_min <= p_max, got {}..{}", config.p_min, config.p_max)));
    }
    if config.gamma_nodes == 0 {
        return Err(Error::Config("gamma_nodes must be at least 1".into()));
    }
    let rule = QuadratureRule::gauss_hermite(config.hermite_nodes)?;
    preflight_output_dir(&config.out_dir)?;
    let mut w = create(&config.out_dir, "area.csv")?;
    writeln!(w, "p,area,asymptote,relative_deviation,error")?;
    let mut failures = 0;
    for p in config.p_min..=config.p_max {
        let asym = area_asymptote(p);
        match unstable_area(p, &rule, config.gamma_nodes) {
            Ok(a) => writeln!(w, "{p},{a},{asym},{},", (a - asym) / asym)?,
            Err(e) => {
                failures += 1;
                writeln!(w, "{p},,{asym},,{}", quote(&Some(e.to_string())))?
            }
        }
    }
    w.flush()?;
    finish("area", config, &config.out_dir, start, vec!["area.csv".into()], failures)
}

// ------------------------------------------------------------------ replay

/// A command with its fully resolved configuration.
#[derive(Clone, Debug, PartialEq)]
pub enum Job {
    Generate(GenerateConfig),
    Simulate(SimulateConfig),
    Classify(ClassifyConfig),
    Sweep(SweepKind, SweepConfig),
    Boundary(BoundaryConfig),
    Area(AreaConfig),
}

impl Job {
    pub fn from_manifest(manifest: &RunManifest) -> Result<Self> {
        fn cfg<T: serde::de::DeserializeOwned>(m: &RunManifest) -> Result<T> {
            serde_json::from_value(m.config.clone()).map_err(|e| Error::Format(format!("manifest config: {e}")))
        }
        Ok(match manifest.command.as_str() {
            "generate" => Self::Generate(cfg(manifest)?),
            "simulate" => Self::Simulate(cfg(manifest)?),
            "classify" => Self::Classify(cfg(manifest)?),
            "sweep" => Self::Sweep(SweepKind::Sweep, cfg(manifest)?),
            "limit-cycles" => Self::Sweep(SweepKind::LimitCycles, cfg(manifest)?),
            "multiplicity" => Self::Sweep(SweepKind::Multiplicity, cfg(manifest)?),
            "boundary" => Self::Boundary(cfg(manifest)?),
            "area" => Self::Area(cfg(manifest)?),
            other => return Err(Error::Format(format!("unknown command {other:?} in manifest"))),
        })
    }

    pub fn workers(&self) -> usize {
        match self {
            Self::Generate(c) => c.workers,
            Self::Simulate(c) => c.workers,
            Self::Classify(c) => c.workers,
            Self::Sweep(_, c) => c.workers,
            Self::Boundary(c) => c.workers,
            Self::Area(c) => c.workers,
        }
    }

    /// Apply the common `--seed`, `--workers` and `--out` overrides.
    pub fn override_common(&mut self, seed: Option<u64>, workers: Option<usize>, out: Option<PathBuf>) {
        let (seed_slot, workers_slot, out_slot): (Option<&mut u64>, &mut usize, &mut PathBuf) = match self {
            Self::Generate(c) => (Some(&mut c.seed), &mut c.workers, &mut c.out_dir),
            Self::Simulate(c) => (Some(&mut c.seed), &mut c.workers, &mut c.out_dir),
            Self::Classify(c) => (Some(&mut c.seed), &mut c.workers, &mut c.out_dir),
            Self::Sweep(_, c) => (Some(&mut c.seed), &mut c.workers, &mut c.out_dir),
            Self::Boundary(c) => (None, &mut c.workers, &mut c.out_dir),
            Self::Area(c) => (None, &mut c.workers, &mut c.out_dir),
        };
        if let Some(s) = seed {
            match seed_slot {
                Some(slot) => *slot = s,
                None => eprintln!("note: --seed is ignored by the deterministic theory commands"),
            }
        }
        if let Some(w) = workers {
            *workers_slot = w;
        }
        if let Some(o) = out {
            *out_slot = o;
        }
    }

    pub fn run(&self) -> Result<Outcome> {
        match self {
            Self::Generate(c) => generate(c),
            Self::Simulate(c) => simulate(c),
            Self::Classify(c) => classify(c),
            Self::Sweep(kind, c) => sweep(*kind, c),
            Self::Boundary(c) => boundary(c),
            Self::Area(c) => area(c),
        }
    }
}
