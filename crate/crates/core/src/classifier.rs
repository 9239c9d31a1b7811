//! Long-run classification of learning trajectories.
//!
//! A trajectory is run in batches. After each batch the states it visited are
//! checked, in this order, for
//!
//! 1. a fixed point: every component satisfies `(max - min) / max < fp_rel_tol`
//!    over the batch;
//! 2. a limit cycle: the smallest `τ` in `1..=batch/2` such that every state
//!    `x(t0 + kτ)` inside the batch has all components within `lc_rel_tol`
//!    (relative to `x(t0)`) of the batch's first state `x(t0)`.
//!
//! If neither test passes before `max_steps`, the trajectory is reported as
//! non-convergent (chaotic or a very long transient).

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{init_random, Dynamics, FlowStepper, MapStepper, StrategyProfile, OBSERVABLE_FLOOR};
use crate::ensemble::{GameParams, PayoffTensor};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_MAX_STEPS: u64 = 500_000;
pub const DEFAULT_BATCH: u64 = 10_000;
pub const DEFAULT_FP_REL_TOL: f64 = 0.01;
pub const DEFAULT_LC_REL_TOL: f64 = 0.001;
pub const DEFAULT_FP_IDENTITY_TOL: f64 = 0.1;
pub const DEFAULT_INITIAL_CONDITIONS: usize = 500;
pub const DEFAULT_MULTIPLICITY_INITIAL_CONDITIONS: usize = 100;

/// Which dynamics the classifier iterates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Engine {
    /// The discrete map at the game's `(α, β)`.
    #[default]
    Map,
    /// The continuous flow at `r = β/α`; one "step" is one RK4 step of the
    /// given size (default `0.1 min(1, r)`).
    Flow { step: Option<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub max_steps: u64,
    pub batch: u64,
    pub fp_rel_tol: f64,
    pub lc_rel_tol: f64,
    pub fp_identity_tol: f64,
    pub n_initial_conditions: usize,
    pub engine: Engine,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            max_steps: DEFAULT_MAX_STEPS,
            batch: DEFAULT_BATCH,
            fp_rel_tol: DEFAULT_FP_REL_TOL,
            lc_rel_tol: DEFAULT_LC_REL_TOL,
            fp_identity_tol: DEFAULT_FP_IDENTITY_TOL,
            n_initial_conditions: DEFAULT_INITIAL_CONDITIONS,
            engine: Engine::Map,
        }
    }
}

impl ClassifierConfig {
    /// Defaults with the initial-condition count used for multiplicity studies.
    pub fn multiplicity() -> Self {
        Self { n_initial_conditions: DEFAULT_MULTIPLICITY_INITIAL_CONDITIONS, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("fp_rel_tol", self.fp_rel_tol),
            ("lc_rel_tol", self.lc_rel_tol),
            ("fp_identity_tol", self.fp_identity_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.batch < 2 {
            return Err(Error::Config(format!("batch must be at least 2, got {}", self.batch)));
        }
        if self.max_steps == 0 || self.max_steps % self.batch != 0 {
            return Err(Error::Config(format!(
                "batch ({}) must divide max_steps ({})",
                self.batch, self.max_steps
            )));
        }
        if self.n_initial_conditions == 0 {
            return Err(Error::Config("n_initial_conditions must be at least 1".into()));
        }
        if let Engine::Flow { step: Some(h) } = self.engine {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Config(format!("flow step must be positive, got {h}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum AttractorClass {
    FixedPoint { location: StrategyProfile },
    LimitCycle { period: u64 },
    NonConvergent,
}

impl AttractorClass {
    pub fn label(&self) -> &'static str {
        match self {
            Self::FixedPoint { .. } => "fixed_point",
            Self::LimitCycle { .. } => "limit_cycle",
            Self::NonConvergent => "non_convergent",
        }
    }

    pub fn is_fixed_point(&self) -> bool {
        matches!(self, Self::FixedPoint { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttractorReport {
    pub class: AttractorClass,
    pub steps_used: u64,
}

/// Verdict of the detector on a single batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchVerdict {
    FixedPoint,
    LimitCycle { period: u64 },
    Undecided,
}

/// Apply the fixed-point and limit-cycle tests to one batch of states,
/// stored consecutively with `dim` components each.
pub fn detect_batch(states: &[f64], dim: usize, fp_rel_tol: f64, lc_rel_tol: f64) -> BatchVerdict {
    if dim == 0 || states.len() < 2 * dim {
        return BatchVerdict::Undecided;
    }
    let len = states.len() / dim;
    let at = |t: usize, i: usize| states[t * dim + i].max(OBSERVABLE_FLOOR);

    let is_fixed = (0..dim).all(|i| {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for t in 0..len {
            let v = at(t, i);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (hi - lo) / hi < fp_rel_tol
    });
    if is_fixed {
        return BatchVerdict::FixedPoint;
    }

    let matches_start = |t: usize| (0..dim).all(|i| (at(t, i) - at(0, i)).abs() <= lc_rel_tol * at(0, i));
    for tau in 1..=len / 2 {
        if (1..)
            .map(|k| k * tau)
            .take_while(|&t| t < len)
            .all(|t| matches_start(t))
        {
            return BatchVerdict::LimitCycle { period: tau as u64 };
        }
    }
    BatchVerdict::Undecided
}

fn start_stepper<'a>(
    tensor: &'a PayoffTensor,
    params: &GameParams,
    start: &StrategyProfile,
    engine: Engine,
) -> Result<Box<dyn Dynamics + 'a>> {
    Ok(match engine {
        Engine::Map => Box::new(MapStepper::new(tensor, params.alpha, params.beta, start)?),
        Engine::Flow { step } => {
            let r = params
                .r()
                .filter(|r| *r > 0.0)
                .ok_or_else(|| Error::Config("the flow engine needs alpha > 0 and beta > 0".into()))?;
            let h = step.unwrap_or_else(|| FlowStepper::default_step(r));
            Box::new(FlowStepper::new(tensor, r, h, start)?)
        }
    })
}

/// Classify the trajectory started from `init_random(params, init_seed)`.
pub fn classify(
    tensor: &PayoffTensor,
    params: &GameParams,
    init_seed: u64,
    config: &ClassifierConfig,
) -> Result<AttractorReport> {
    config.validate()?;
    let start = init_random(params, init_seed);
    classify_from(tensor, params, &start, config)
}

pub fn classify_from(
    tensor: &PayoffTensor,
    params: &GameParams,
    start: &StrategyProfile,
    config: &ClassifierConfig,
) -> Result<AttractorReport> {
    config.validate()?;
    let mut stepper = start_stepper(tensor, params, start, config.engine)?;
    let dim = start.as_slice().len();
    let batch = config.batch as usize;
    let mut states = vec![0.0; batch * dim];
    let mut steps = 0u64;
    while steps < config.max_steps {
        for t in 0..batch {
            stepper.step().map_err(|e| Error::Classification { steps, reason: e.to_string() })?;
            steps += 1;
            let s = stepper.state();
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::Classification { steps, reason: "non-finite state".into() });
            }
            states[t * dim..(t + 1) * dim].copy_from_slice(s);
        }
        match detect_batch(&states, dim, config.fp_rel_tol, config.lc_rel_tol) {
            BatchVerdict::FixedPoint => {
                return Ok(AttractorReport {
                    class: AttractorClass::FixedPoint { location: stepper.profile() },
                    steps_used: steps,
                })
            }
            BatchVerdict::LimitCycle { period } => {
                return Ok(AttractorReport { class: AttractorClass::LimitCycle { period }, steps_used: steps })
            }
            BatchVerdict::Undecided => {}
        }
    }
    Ok(AttractorReport { class: AttractorClass::NonConvergent, steps_used: steps })
}

/// One classified trajectory of an ensemble run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOutcome {
    pub game_seed: u64,
    pub init_seed: u64,
    pub report: std::result::Result<AttractorReport, String>,
}

/// Classify `config.n_initial_conditions` trajectories of one game in
/// parallel; initial condition `i` uses `rng::init_seed(params.seed, i)`.
pub fn classify_many(tensor: &PayoffTensor, params: &GameParams, config: &ClassifierConfig) -> Result<Vec<TrajectoryOutcome>> {
    config.validate()?;
    Ok((0..config.n_initial_conditions as u64)
        .into_par_iter()
        .map(|i| {
            let init_seed = rng::init_seed(params.seed, i);
            TrajectoryOutcome {
                game_seed: params.seed,
                init_seed,
                report: classify(tensor, params, init_seed, config).map_err(|e| e.to_string()),
            }
        })
        .collect())
}

/// Counts of the three outcomes; failed trajectories are counted separately.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub fixed_point: usize,
    pub limit_cycle: usize,
    pub non_convergent: usize,
    pub failed: usize,
}

impl ClassCounts {
    pub fn from_outcomes(outcomes: &[TrajectoryOutcome]) -> Self {
        let mut c = Self::default();
        for o in outcomes {
            match &o.report {
                Ok(r) => match r.class {
                    AttractorClass::FixedPoint { .. } => c.fixed_point += 1,
                    AttractorClass::LimitCycle { .. } => c.limit_cycle += 1,
                    AttractorClass::NonConvergent => c.non_convergent += 1,
                },
                Err(_) => c.failed += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.fixed_point + self.limit_cycle + self.non_convergent + self.failed
    }
}

/// Fraction of initial conditions that end on a fixed point. A trajectory
/// whose state becomes non-finite counts as not converged.
pub fn convergence_fraction(tensor: &PayoffTensor, params: &GameParams, config: &ClassifierConfig) -> Result<f64> {
    let outcomes = classify_many(tensor, params, config)?;
    let counts = ClassCounts::from_outcomes(&outcomes);
    Ok(counts.fixed_point as f64 / counts.total() as f64)
}

/// Whether two fixed points are the same: every component pair within
/// `tol` relative distance.
pub fn same_fixed_point(a: &StrategyProfile, b: &StrategyProfile, tol: f64) -> bool {
    a.max_relative_distance(b) < tol
}

/// Greedy clustering of fixed-point locations; returns one representative per
/// distinct point, in order of first appearance.
pub fn distinct_fixed_points(points: &[StrategyProfile], tol: f64) -> Vec<StrategyProfile> {
    let mut reps: Vec<StrategyProfile> = Vec::new();
    for p in points {
        if !reps.iter().any(|r| same_fixed_point(r, p, tol)) {
            reps.push(p.clone());
        }
    }
    reps
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameMultiplicity {
    pub game_seed: u64,
    pub fixed_points_found: usize,
    pub distinct: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityResult {
    /// Fraction of games with at least two distinct fixed points.
    pub fraction: f64,
    pub games: Vec<GameMultiplicity>,
}

/// Seed of the `game`-th payoff draw derived from a base seed.
pub fn game_seed(base: u64, game: u64) -> u64 {
    rng::mix_seed(base, &[rng::STREAM_GAME, game])
}

/// For `n_games` independent payoff draws, count the distinct fixed points
/// reached from `config.n_initial_conditions` random starts.
pub fn multiplicity_study(params: &GameParams, config: &ClassifierConfig, n_games: usize) -> Result<MultiplicityResult> {
    config.validate()?;
    if n_games == 0 {
        return Err(Error::Config("n_games must be at least 1".into()));
    }
    let mut games = Vec::with_capacity(n_games);
    for g in 0..n_games as u64 {
        let game_params = params.with_seed(game_seed(params.seed, g));
        let tensor = PayoffTensor::generate(&game_params)?;
        let outcomes = classify_many(&tensor, &game_params, config)?;
        let points: Vec<StrategyProfile> = outcomes
            .into_iter()
            .filter_map(|o| match o.report {
                Ok(AttractorReport { class: AttractorClass::FixedPoint { location }, .. }) => Some(location),
                _ => None,
            })
            .collect();
        let distinct = distinct_fixed_points(&points, config.fp_identity_tol).len();
        games.push(GameMultiplicity { game_seed: game_params.seed, fixed_points_found: points.len(), distinct });
    }
    let multiple = games.iter().filter(|g| g.distinct >= 2).count();
    Ok(MultiplicityResult { fraction: multiple as f64 / n_games as f64, games })
}

/// CSV with one row per trajectory: `game_seed,init_seed,class,period,steps_used,error`.
pub fn write_reports_csv<W: Write>(outcomes: &[TrajectoryOutcome], mut w: W) -> Result<()> {
    writeln!(w, "game_seed,init_seed,class,period,steps_used,error")?;
    for o in outcomes {
        match &o.report {
            Ok(r) => {
                let period = match r.class {
                    AttractorClass::LimitCycle { period } => period.to_string(),
                    _ => String::new(),
                };
                writeln!(w, "{},{},{},{},{},", o.game_seed, o.init_seed, r.class.label(), period, r.steps_used)?;
            }
            Err(e) => writeln!(w, "{},{},error,,,\"{}\"", o.game_seed, o.init_seed, e.replace('"', "'"))?,
        }
    }
    w.flush()?;
    Ok(())
}
