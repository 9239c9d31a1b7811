//! Learning dynamics: the discrete experience-weighted attraction map and its
//! continuous-time (Sato-Crutchfield) limit.
//!
//! Strategies are kept in the rescaled convention: each player's row of
//! `x` sums to `N`, so the uniform strategy is the all-ones row and the
//! probabilities are `x / N`.

mod flow;
mod map;
mod series;
mod trajectory;

pub use flow::{integrate_sc, sc_derivative, FlowStepper};
pub use map::{ewa_step, run_map, MapStepper};
pub use series::{autocorrelation, diff_series, payoff_sum_series};
pub use trajectory::{read_trajectory, RunKind, TrajectoryRecord, Sampling, Trajectory, OBSERVABLE_FLOOR, TRAJECTORY_MAGIC};

use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::ensemble::{Contraction, GameParams, PayoffTensor};
use crate::error::{Error, Result};
use crate::rng;

/// Tolerance on the rescaled row sums, relative to `N`.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Mixed strategies of all players, rescaled so that every row sums to `N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    players: usize,
    actions: usize,
    x: Vec<f64>,
}

impl StrategyProfile {
    /// Validate strictly positive components and rows summing to `N`.
    pub fn new(players: usize, actions: usize, x: Vec<f64>) -> Result<Self> {
        if x.len() != players * actions {
            return Err(Error::Contract(format!(
                "{} components for a {players}x{actions} profile",
                x.len()
            )));
        }
        if let Some(bad) = x.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Contract(format!("strategy component {bad} is not strictly positive")));
        }
        let n = actions as f64;
        for (mu, row) in x.chunks_exact(actions).enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - n).abs() > ROW_SUM_TOL * n {
                return Err(Error::Contract(format!("row {mu} sums to {sum}, expected {n}")));
            }
        }
        Ok(Self { players, actions, x })
    }

    /// Rescale each row of positive weights so that it sums to `N`.
    pub fn from_unnormalized(players: usize, actions: usize, mut x: Vec<f64>) -> Result<Self> {
        if x.len() != players * actions || x.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Contract("weights must be finite and strictly positive".into()));
        }
        let n = actions as f64;
        for row in x.chunks_exact_mut(actions) {
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v *= n / sum);
        }
        Ok(Self { players, actions, x })
    }

    /// Build from log-coordinates, projecting each row onto `sum = N`.
    pub fn from_log(players: usize, actions: usize, mut y: Vec<f64>) -> Result<Self> {
        if y.len() != players * actions || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("log-coordinates must be finite".into()));
        }
        project_log_rows(&mut y, actions);
        let x = y.iter().map(|v| v.exp()).collect();
        Ok(Self { players, actions, x })
    }

    pub fn uniform(players: usize, actions: usize) -> Self {
        Self { players, actions, x: vec![1.0; players * actions] }
    }

    pub fn players(&self) -> usize {
        self.players
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.x
    }

    pub fn row(&self, mu: usize) -> &[f64] {
        &self.x[mu * self.actions..(mu + 1) * self.actions]
    }

    /// Player `mu`'s choice probabilities, `x / N`.
    pub fn probabilities(&self, mu: usize) -> Vec<f64> {
        let n = self.actions as f64;
        self.row(mu).iter().map(|v| v / n).collect()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.x
    }

    /// Largest componentwise relative distance `|a - b| / max(a, b)`.
    pub fn max_relative_distance(&self, other: &Self) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .map(|(a, b)| (a - b).abs() / a.max(*b))
            .fold(0.0, f64::max)
    }
}

/// Random interior starting point: each row uniform on the simplex (flat
/// Dirichlet), scaled to sum to `N`.
pub fn init_random(params: &GameParams, init_seed: u64) -> StrategyProfile {
    let (p, n) = (params.players, params.actions);
    if n == 1 {
        return StrategyProfile::uniform(p, 1);
    }
    let mut rng = rng::stream(init_seed);
    let mut x = Vec::with_capacity(p * n);
    for _ in 0..p {
        let row: Vec<f64> = (0..n)
            .map(|_| {
                let e: f64 = Exp1.sample(&mut rng);
                // Exp1 can return exactly 0 with negligible probability.
                e.max(f64::MIN_POSITIVE)
            })
            .collect();
        let sum: f64 = row.iter().sum();
        x.extend(row.iter().map(|v| v * n as f64 / sum));
    }
    StrategyProfile { players: p, actions: n, x }
}

/// Subtract `ln(sum_i e^{y_i} / N)` from each row so that `sum_i e^{y_i} = N`.
pub(crate) fn project_log_rows(y: &mut [f64], actions: usize) {
    let n = actions as f64;
    for row in y.chunks_exact_mut(actions) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = row.iter().map(|v| (v - m).exp()).sum();
        let shift = m + (s / n).ln();
        row.iter_mut().for_each(|v| *v -= shift);
    }
}

/// Scratch space for evaluating every player's expected payoffs.
#[derive(Clone, Debug)]
pub(crate) struct PayoffWorkspace {
    contraction: Contraction,
    pub(crate) payoffs: Vec<f64>,
}

impl PayoffWorkspace {
    pub(crate) fn new(players: usize, actions: usize) -> Self {
        Self { contraction: Contraction::new(players, actions), payoffs: vec![0.0; players * actions] }
    }

    /// Fill `self.payoffs` (p x N) from the state `x`.
    pub(crate) fn evaluate(&mut self, tensor: &PayoffTensor, x: &[f64]) -> Result<()> {
        let n = tensor.actions();
        for mu in 0..tensor.players() {
            let out = &mut self.payoffs[mu * n..(mu + 1) * n];
            self.contraction.expected_payoffs(tensor, mu, x, out);
        }
        if self.payoffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("expected payoffs are not finite".into()));
        }
        Ok(())
    }
}

/// `sum_mu sum_i (x_i^mu / N) a_i^mu` for payoffs `a` evaluated at `x`.
pub(crate) fn total_payoff(x: &[f64], payoffs: &[f64], actions: usize) -> f64 {
    x.iter().zip(payoffs).map(|(x, a)| x * a).sum::<f64>() / actions as f64
}

/// Common interface of the map and flow steppers used by the classifier and
/// trajectory recorder.
pub trait Dynamics {
    fn step(&mut self) -> Result<()>;
    /// Current state, `p x N` row-major, rescaled convention.
    fn state(&self) -> &[f64];
    fn time(&self) -> f64;
    /// Total expected payoff at the current state.
    fn total_payoff(&mut self) -> Result<f64>;
    fn profile(&self) -> StrategyProfile;
}
