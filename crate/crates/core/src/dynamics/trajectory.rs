use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Dynamics, StrategyProfile};
use crate::ensemble::{read_array, GameParams};
use crate::error::{Error, Result};

/// Components are floored at this value when written to observables; the
/// state itself is never floored.
pub const OBSERVABLE_FLOOR: f64 = 1e-150;

pub const TRAJECTORY_MAGIC: &[u8; 8] = b"EWATRAJE";
const TRAJECTORY_VERSION: u32 = 1;

/// Which dynamics produced a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunKind {
    Map { alpha: f64, beta: f64, steps: u64 },
    Flow { r: f64, step: f64, horizon: f64 },
}

/// What to record while running.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    /// Record every `stride`-th step (and the initial state).
    pub stride: u64,
    /// Flat indices `mu * N + i` of the recorded components; `None` records all.
    pub components: Option<Vec<usize>>,
}

impl Sampling {
    pub fn every(stride: u64) -> Self {
        Self { stride: stride.max(1), components: None }
    }

    pub fn with_components(mut self, components: Vec<usize>) -> Self {
        self.components = Some(components);
        self
    }
}

impl Default for Sampling {
    fn default() -> Self {
        Self::every(1)
    }
}

/// Sampled run of the learning dynamics.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub params: GameParams,
    pub kind: RunKind,
    pub components: Vec<usize>,
    pub times: Vec<f64>,
    /// One row per sample, holding the selected components (floored at
    /// [`OBSERVABLE_FLOOR`]).
    pub samples: Vec<Vec<f64>>,
    /// Total expected payoff `sum_mu sum_i (x_i^mu / N) a_i^mu` per sample.
    pub payoff_sum: Vec<f64>,
    pub final_state: StrategyProfile,
}

impl Trajectory {
    pub(crate) fn record<D: Dynamics>(
        dynamics: &mut D,
        params: GameParams,
        kind: RunKind,
        steps: u64,
        sampling: &Sampling,
    ) -> Result<Self> {
        let dim = dynamics.state().len();
        let components = sampling.components.clone().unwrap_or_else(|| (0..dim).collect());
        if let Some(bad) = components.iter().find(|c| **c >= dim) {
            return Err(Error::Contract(format!("component {bad} out of range (dimension {dim})")));
        }
        let stride = sampling.stride.max(1);
        let capacity = (steps / stride + 1) as usize;
        let mut traj = Self {
            params,
            kind,
            components,
            times: Vec::with_capacity(capacity),
            samples: Vec::with_capacity(capacity),
            payoff_sum: Vec::with_capacity(capacity),
            final_state: dynamics.profile(),
        };
        traj.push(dynamics)?;
        for k in 1..=steps {
            dynamics.step()?;
            if k % stride == 0 {
                traj.push(dynamics)?;
            }
        }
        traj.final_state = dynamics.profile();
        Ok(traj)
    }

    fn push<D: Dynamics>(&mut self, dynamics: &mut D) -> Result<()> {
        let payoff = dynamics.total_payoff()?;
        let state = dynamics.state();
        self.times.push(dynamics.time());
        self.samples.push(self.components.iter().map(|&c| state[c].max(OBSERVABLE_FLOOR)).collect());
        self.payoff_sum.push(payoff);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with columns `time, x<mu>_<i> (1-based), payoff_sum`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.params.actions;
        let mut header = vec!["time".to_string()];
        header.extend(self.components.iter().map(|c| format!("x{}_{}", c / n + 1, c % n + 1)));
        header.push("payoff_sum".into());
        writeln!(w, "{}", header.join(","))?;
        for ((t, row), s) in self.times.iter().zip(&self.samples).zip(&self.payoff_sum) {
            let mut line = t.to_string();
            for v in row {
                line.push(',');
                line.push_str(&v.to_string());
            }
            line.push(',');
            line.push_str(&s.to_string());
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Compact binary form: the tensor-style header (magic, version, p, N,
    /// gamma, seed) followed by the component list and `(time, components...,
    /// payoff_sum)` records, all little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(TRAJECTORY_MAGIC)?;
        w.write_all(&TRAJECTORY_VERSION.to_le_bytes())?;
        w.write_all(&(self.params.players as u32).to_le_bytes())?;
        w.write_all(&(self.params.actions as u32).to_le_bytes())?;
        w.write_all(&self.params.gamma.to_le_bytes())?;
        w.write_all(&self.params.seed.to_le_bytes())?;
        w.write_all(&(self.components.len() as u32).to_le_bytes())?;
        for c in &self.components {
            w.write_all(&(*c as u32).to_le_bytes())?;
        }
        w.write_all(&(self.times.len() as u64).to_le_bytes())?;
        for ((t, row), s) in self.times.iter().zip(&self.samples).zip(&self.payoff_sum) {
            w.write_all(&t.to_le_bytes())?;
            for v in row {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&s.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Samples decoded from [`Trajectory::write_binary`].
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub players: usize,
    pub actions: usize,
    pub gamma: f64,
    pub seed: u64,
    pub components: Vec<usize>,
    pub times: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
    pub payoff_sum: Vec<f64>,
}

pub fn read_trajectory<R: Read>(mut r: R) -> Result<TrajectoryRecord> {
    let magic: [u8; 8] = read_array(&mut r)?;
    if &magic != TRAJECTORY_MAGIC {
        return Err(Error::Format("not a trajectory file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != TRAJECTORY_VERSION {
        return Err(Error::Format(format!("unsupported trajectory version {version}")));
    }
    let players = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let actions = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let gamma = f64::from_le_bytes(read_array(&mut r)?);
    let seed = u64::from_le_bytes(read_array(&mut r)?);
    let n_components = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let components = (0..n_components)
        .map(|_| Ok(u32::from_le_bytes(read_array(&mut r)?) as usize))
        .collect::<Result<Vec<_>>>()?;
    let n_samples = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let mut times = Vec::with_capacity(n_samples);
    let mut samples = Vec::with_capacity(n_samples);
    let mut payoff_sum = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        times.push(f64::from_le_bytes(read_array(&mut r)?));
        let row = (0..n_components)
            .map(|_| Ok(f64::from_le_bytes(read_array(&mut r)?)))
            .collect::<Result<Vec<_>>>()?;
        samples.push(row);
        payoff_sum.push(f64::from_le_bytes(read_array(&mut r)?));
    }
    Ok(TrajectoryRecord { players, actions, gamma, seed, components, times, samples, payoff_sum })
}
