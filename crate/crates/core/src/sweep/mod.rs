//! Parallel sweeps over the `(α, Γ)` plane at fixed `β`, with the theory
//! boundary overlaid.
//!
//! Every cell, game and initial condition has its own seed, derived from the
//! base seed and the indices with [`rng::mix_seed`]; results therefore do not
//! depend on the worker count or on scheduling.

mod output;

pub use output::{emit_outputs, fraction_color, preflight_output_dir, write_boundary_csv, write_heatmap_csv, write_svg, MapValue, RunManifest, OutputFiles};

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{classify_many, distinct_fixed_points, AttractorClass, ClassCounts, ClassifierConfig};
use crate::ensemble::{GameParams, PayoffTensor, DEFAULT_MEMORY_BUDGET};
use crate::error::{Error, Result};
use crate::rng;
use crate::theory::{critical_inverse_r, QuadratureRule};

/// Desk-scale defaults: far fewer initial conditions and steps than the
/// classifier's full settings.
pub const DESK_INITIAL_CONDITIONS: usize = 50;
pub const DESK_MAX_STEPS: u64 = 100_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl GridAxis {
    pub fn linear(min: f64, max: f64, count: usize) -> Self {
        Self { min, max, count, spacing: Spacing::Linear }
    }

    pub fn log(min: f64, max: f64, count: usize) -> Self {
        Self { min, max, count, spacing: Spacing::Log }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config(format!("{name} grid is empty")));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::Config(format!("{name} grid needs finite min <= max")));
        }
        if self.spacing == Spacing::Log && !(self.min > 0.0) {
            return Err(Error::Config(format!("log-spaced {name} grid needs min > 0")));
        }
        Ok(())
    }

    /// Position of `v` on the axis scale (log for log spacing).
    pub fn scale(&self, v: f64) -> f64 {
        match self.spacing {
            Spacing::Linear => v,
            Spacing::Log => v.ln(),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let (a, b) = (self.scale(self.min), self.scale(self.max));
        (0..self.count)
            .map(|k| {
                let t = a + (b - a) * k as f64 / (self.count - 1) as f64;
                let v = match self.spacing {
                    Spacing::Linear => t,
                    Spacing::Log => t.exp(),
                };
                // Pin the end points exactly.
                if k == 0 {
                    self.min
                } else if k == self.count - 1 {
                    self.max
                } else {
                    v
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub players: usize,
    pub actions: usize,
    pub beta: f64,
    pub seed: u64,
    pub alpha: GridAxis,
    pub gamma: GridAxis,
    pub n_games: usize,
    pub classifier: ClassifierConfig,
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses all available cores.
    pub workers: usize,
    pub memory_budget: u64,
    /// Compute the theory boundary for the `Γ <= 0` part of the grid.
    pub theory_overlay: bool,
    /// Statistic that colours the SVG heat map.
    pub map_value: MapValue,
    /// Replace every payoff tensor by zeros (testing hook).
    pub zero_payoffs: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            players: 2,
            actions: 50,
            beta: 0.05,
            seed: 0,
            alpha: GridAxis::linear(0.01, 0.4, 8),
            gamma: GridAxis::linear(-1.0, 0.0, 8),
            n_games: 1,
            classifier: ClassifierConfig {
                n_initial_conditions: DESK_INITIAL_CONDITIONS,
                max_steps: DESK_MAX_STEPS,
                ..ClassifierConfig::default()
            },
            out_dir: PathBuf::from("out"),
            workers: 0,
            memory_budget: DEFAULT_MEMORY_BUDGET,
            theory_overlay: true,
            map_value: MapValue::FixedPoint,
            zero_payoffs: false,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.alpha.validate("alpha")?;
        self.gamma.validate("gamma")?;
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if self.n_games == 0 {
            return Err(Error::Config("n_games must be at least 1".into()));
        }
        self.classifier.validate()?;
        // Every cell must describe a valid game.
        for a in [self.alpha.min, self.alpha.max] {
            for g in [self.gamma.min, self.gamma.max] {
                GameParams { players: self.players, actions: self.actions, alpha: a, beta: self.beta, gamma: g, seed: 0 }
                    .validate()
                    .map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        Ok(())
    }

    /// Fails before anything is generated if one tensor exceeds the budget.
    pub fn check_memory(&self) -> Result<()> {
        GameParams { players: self.players, actions: self.actions, alpha: 0.0, beta: 0.0, gamma: 0.0, seed: 0 }
            .check_budget(self.memory_budget)
    }

    /// Seed of game `game` in cell `(ai, gi)`.
    pub fn cell_seed(&self, ai: usize, gi: usize, game: usize) -> u64 {
        rng::mix_seed(self.seed, &[ai as u64, gi as u64, game as u64])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub alpha_index: usize,
    pub gamma_index: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub fixed_point: f64,
    pub limit_cycle: f64,
    pub non_convergent: f64,
    /// Fraction of games with two or more distinct fixed points.
    pub multiplicity: f64,
    /// Mean steps until a fixed point or cycle was detected; `None` if none was.
    pub mean_steps: Option<f64>,
    /// Trajectories that failed numerically (counted as non-convergent).
    pub failed: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub gamma: f64,
    /// Critical `α/β`; `None` when the solver reported an error.
    pub inverse_r: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatMapResult {
    pub config: SweepConfig,
    pub cells: Vec<CellResult>,
    pub boundary: Vec<BoundaryPoint>,
    pub elapsed_seconds: f64,
}

impl HeatMapResult {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }
}

fn run_cell(config: &SweepConfig, ai: usize, gi: usize, alpha: f64, gamma: f64) -> CellResult {
    let mut cell = CellResult {
        alpha_index: ai,
        gamma_index: gi,
        alpha,
        gamma,
        fixed_point: 0.0,
        limit_cycle: 0.0,
        non_convergent: 0.0,
        multiplicity: 0.0,
        mean_steps: None,
        failed: 0,
        error: None,
    };
    let mut counts = ClassCounts::default();
    let mut steps_sum = 0u64;
    let mut converged = 0u64;
    let mut multiple = 0usize;
    for game in 0..config.n_games {
        let params = GameParams {
            players: config.players,
            actions: config.actions,
            alpha,
            beta: config.beta,
            gamma,
            seed: config.cell_seed(ai, gi, game),
        };
        let tensor = if config.zero_payoffs {
            PayoffTensor::zeros(&params)
        } else {
            params.check_budget(config.memory_budget).and_then(|_| PayoffTensor::generate_with_budget(&params, config.memory_budget))
        };
        let outcomes = match tensor.and_then(|t| classify_many(&t, &params, &config.classifier)) {
            Ok(o) => o,
            Err(e) => {
                cell.error = Some(e.to_string());
                return cell;
            }
        };
        let c = ClassCounts::from_outcomes(&outcomes);
        counts.fixed_point += c.fixed_point;
        counts.limit_cycle += c.limit_cycle;
        counts.non_convergent += c.non_convergent;
        counts.failed += c.failed;
        let mut points = Vec::new();
        for o in outcomes {
            if let Ok(r) = o.report {
                match r.class {
                    AttractorClass::FixedPoint { location } => {
                        points.push(location);
                        steps_sum += r.steps_used;
                        converged += 1;
                    }
                    AttractorClass::LimitCycle { .. } => {
                        steps_sum += r.steps_used;
                        converged += 1;
                    }
                    AttractorClass::NonConvergent => {}
                }
            }
        }
        if distinct_fixed_points(&points, config.classifier.fp_identity_tol).len() >= 2 {
            multiple += 1;
        }
    }
    let total = counts.total() as f64;
    cell.fixed_point = counts.fixed_point as f64 / total;
    cell.limit_cycle = counts.limit_cycle as f64 / total;
    // Computed as the remainder so that the three fractions sum to one.
    cell.non_convergent = (counts.non_convergent + counts.failed) as f64 / total;
    cell.failed = counts.failed;
    cell.multiplicity = multiple as f64 / config.n_games as f64;
    cell.mean_steps = (converged > 0).then(|| steps_sum as f64 / converged as f64);
    cell
}

/// Theory boundary at each `Γ <= 0` of the grid.
pub fn theory_boundary(players: usize, gammas: &[f64]) -> Vec<BoundaryPoint> {
    let rule = QuadratureRule::default();
    gammas
        .par_iter()
        .filter(|g| (-1.0..=0.0).contains(*g))
        .map(|&gamma| match critical_inverse_r(players, gamma, &rule) {
            Ok(v) => BoundaryPoint { gamma, inverse_r: Some(v), error: None },
            Err(e) => BoundaryPoint { gamma, inverse_r: None, error: Some(e.to_string()) },
        })
        .collect()
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Run every cell of the grid. Per-cell failures are recorded in the result;
/// configuration and memory problems are reported before any work starts.
pub fn run_sweep(config: &SweepConfig) -> Result<HeatMapResult> {
    config.validate()?;
    if !config.zero_payoffs {
        config.check_memory()?;
    }
    let start = Instant::now();
    let alphas = config.alpha.values();
    let gammas = config.gamma.values();
    let cells_idx: Vec<(usize, usize)> =
        (0..gammas.len()).flat_map(|gi| (0..alphas.len()).map(move |ai| (ai, gi))).collect();
    let pool = thread_pool(config.workers)?;
    let (cells, boundary) = pool.install(|| {
        let cells: Vec<CellResult> = cells_idx
            .par_iter()
            .map(|&(ai, gi)| run_cell(config, ai, gi, alphas[ai], gammas[gi]))
            .collect();
        let boundary = if config.theory_overlay { theory_boundary(config.players, &gammas) } else { Vec::new() };
        (cells, boundary)
    });
    Ok(HeatMapResult { config: config.clone(), cells, boundary, elapsed_seconds: start.elapsed().as_secs_f64() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_values() {
        assert_eq!(GridAxis::linear(0.0, 1.0, 3).values(), vec![0.0, 0.5, 1.0]);
        assert_eq!(GridAxis::linear(0.2, 1.0, 1).values(), vec![0.2]);
        let v = GridAxis::log(0.01, 1.0, 3).values();
        assert_eq!(v[0], 0.01);
        assert!((v[1] - 0.1).abs() < 1e-15);
        assert_eq!(v[2], 1.0);
        assert!(GridAxis::log(0.0, 1.0, 3).validate("a").is_err());
        assert!(GridAxis::linear(0.0, 1.0, 0).validate("a").is_err());
    }

    #[test]
    fn seeds_depend_on_every_index() {
        let c = SweepConfig::default();
        let s = c.cell_seed(1, 2, 0);
        assert_ne!(s, c.cell_seed(2, 1, 0));
        assert_ne!(s, c.cell_seed(1, 2, 1));
        assert_eq!(s, c.cell_seed(1, 2, 0));
    }

    #[test]
    fn memory_preflight() {
        let c = SweepConfig { players: 8, actions: 40, ..SweepConfig::default() };
        assert!(matches!(c.check_memory(), Err(Error::Resource { .. })));
        assert!(matches!(run_sweep(&c), Err(Error::Resource { .. })));
    }

    #[test]
    fn zero_payoff_cell_converges() {
        let c = SweepConfig {
            alpha: GridAxis::linear(0.1, 0.1, 1),
            gamma: GridAxis::linear(-0.5, -0.5, 1),
            actions: 5,
            zero_payoffs: true,
            theory_overlay: false,
            classifier: ClassifierConfig { n_initial_conditions: 4, max_steps: 20_000, ..ClassifierConfig::default() },
            ..SweepConfig::default()
        };
        let r = run_sweep(&c).unwrap();
        assert_eq!(r.cells.len(), 1);
        assert_eq!(r.cells[0].fixed_point, 1.0);
        assert_eq!(r.cells[0].multiplicity, 0.0);
        assert!(r.cells[0].mean_steps.unwrap() <= 20_000.0);
    }
}
