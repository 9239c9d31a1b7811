//! Random p-player games with correlated Gaussian payoffs.
//!
//! For every action tuple `(i_1, ..., i_p)` the p payoffs are one draw from a
//! p-variate normal with variance `1/N^(p-1)` and pairwise covariance
//! `Gamma / ((p-1) N^(p-1))`; distinct tuples are independent. `Gamma = -1`
//! makes the game zero-sum, `Gamma = p-1` gives every player the same payoff.
//!
//! Player `mu`'s payoffs are stored as a dense rank-p array indexed by
//! `(i_mu, i_mu+1, ..., i_mu-1)`: own action first, opponents in cyclic order,
//! row-major. Contracting with the opponents' strategies then walks the last
//! (contiguous) axis first.

mod io;

pub(crate) use io::read_array;
pub use io::{read_tensor, write_entries_csv, write_tensor, TENSOR_MAGIC, TENSOR_VERSION};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::StrategyProfile;
use crate::error::{Error, Result};
use crate::rng;

/// Default ceiling on the memory used by one payoff tensor (2 GiB).
pub const DEFAULT_MEMORY_BUDGET: u64 = 2 * 1024 * 1024 * 1024;

/// Model parameters of one game: players, actions, learning rates, competition
/// parameter and the seed of the payoff draw.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    pub players: usize,
    pub actions: usize,
    /// Memory-loss rate, in `[0, 1]`.
    pub alpha: f64,
    /// Intensity of choice, non-negative.
    pub beta: f64,
    /// Competition parameter, in `[-1, players - 1]`.
    pub gamma: f64,
    pub seed: u64,
}

impl GameParams {
    /// Build and validate against [`DEFAULT_MEMORY_BUDGET`].
    pub fn new(
        players: usize,
        actions: usize,
        alpha: f64,
        beta: f64,
        gamma: f64,
        seed: u64,
    ) -> Result<Self> {
        let params = Self { players, actions, alpha, beta, gamma, seed };
        params.validate()?;
        params.check_budget(DEFAULT_MEMORY_BUDGET)?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.players < 2 {
            return Err(Error::Domain(format!("need at least 2 players, got {}", self.players)));
        }
        if self.actions < 1 {
            return Err(Error::Domain("need at least 1 action per player".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Domain(format!("alpha = {} outside [0, 1]", self.alpha)));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Domain(format!("beta = {} must be finite and >= 0", self.beta)));
        }
        let upper = (self.players - 1) as f64;
        if !(-1.0..=upper).contains(&self.gamma) {
            return Err(Error::Domain(format!(
                "gamma = {} outside [-1, {}]",
                self.gamma, upper
            )));
        }
        Ok(())
    }

    /// Number of stored payoff entries, `p * N^p`; `None` on overflow.
    pub fn tensor_entries(&self) -> Option<u128> {
        let per_player = (self.actions as u128).checked_pow(self.players as u32)?;
        per_player.checked_mul(self.players as u128)
    }

    pub fn tensor_bytes(&self) -> Option<u128> {
        self.tensor_entries()?.checked_mul(std::mem::size_of::<f64>() as u128)
    }

    pub fn check_budget(&self, budget: u64) -> Result<()> {
        match self.tensor_bytes() {
            Some(needed) if needed <= budget as u128 => Ok(()),
            Some(needed) => Err(Error::Resource { needed, budget }),
            None => Err(Error::Resource { needed: u128::MAX, budget }),
        }
    }

    /// `r = beta / alpha`, the only parameter surviving the continuum limit.
    pub fn r(&self) -> Option<f64> {
        (self.alpha > 0.0).then(|| self.beta / self.alpha)
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_learning(self, alpha: f64, beta: f64) -> Self {
        Self { alpha, beta, ..self }
    }
}

/// Lower-triangular factor `L` (row-major, p x p) with `L L^T` equal to the
/// equicorrelation matrix `(1 - c) I + c J`.
///
/// The matrix is only positive semidefinite at the ends of the admissible
/// range, so pivots that vanish up to roundoff zero their whole column.
pub fn equicorrelation_factor(p: usize, c: f64) -> Vec<f64> {
    let mut l = vec![0.0; p * p];
    let entry = |i: usize, j: usize| if i == j { 1.0 } else { c };
    for j in 0..p {
        let mut diag = entry(j, j);
        for k in 0..j {
            diag -= l[j * p + k] * l[j * p + k];
        }
        if diag <= 1e-12 {
            continue;
        }
        let pivot = diag.sqrt();
        l[j * p + j] = pivot;
        for i in (j + 1)..p {
            let mut s = entry(i, j);
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = s / pivot;
        }
    }
    l
}

/// The quenched payoffs of all players.
#[derive(Clone, Debug, PartialEq)]
pub struct PayoffTensor {
    params: GameParams,
    tables: Vec<Vec<f64>>,
}

impl PayoffTensor {
    /// Draw a game from the correlated Gaussian ensemble.
    pub fn generate(params: &GameParams) -> Result<Self> {
        Self::generate_with_budget(params, DEFAULT_MEMORY_BUDGET)
    }

    pub fn generate_with_budget(params: &GameParams, budget: u64) -> Result<Self> {
        params.validate()?;
        params.check_budget(budget)?;
        let p = params.players;
        let n = params.actions;
        let len = n.pow(p as u32);
        let factor = equicorrelation_factor(p, params.gamma / (p - 1) as f64);
        let scale = (n as f64).powf(-((p - 1) as f64) / 2.0);

        let mut tables = vec![vec![0.0; len]; p];
        let mut rng = rng::stream(params.seed);
        let mut tuple = vec![0usize; p];
        let mut normals = vec![0.0; p];
        let strides: Vec<usize> = (0..p).map(|k| n.pow((p - 1 - k) as u32)).collect();

        // Tuples in lexicographic order of (i_1, ..., i_p).
        for _ in 0..len {
            for g in normals.iter_mut() {
                *g = StandardNormal.sample(&mut rng);
            }
            for mu in 0..p {
                let mut value = 0.0;
                for k in 0..=mu {
                    value += factor[mu * p + k] * normals[k];
                }
                let idx: usize = (0..p).map(|k| tuple[(mu + k) % p] * strides[k]).sum();
                tables[mu][idx] = scale * value;
            }
            for pos in (0..p).rev() {
                tuple[pos] += 1;
                if tuple[pos] < n {
                    break;
                }
                tuple[pos] = 0;
            }
        }
        Ok(Self { params: *params, tables })
    }

    /// A game in which every payoff is zero.
    pub fn zeros(params: &GameParams) -> Result<Self> {
        params.validate()?;
        params.check_budget(DEFAULT_MEMORY_BUDGET)?;
        let len = params.actions.pow(params.players as u32);
        Ok(Self { params: *params, tables: vec![vec![0.0; len]; params.players] })
    }

    /// Wrap explicit per-player tables (own action first, opponents cyclic).
    pub fn from_tables(params: &GameParams, tables: Vec<Vec<f64>>) -> Result<Self> {
        params.validate()?;
        let len = params.actions.pow(params.players as u32);
        if tables.len() != params.players || tables.iter().any(|t| t.len() != len) {
            return Err(Error::Contract(format!(
                "expected {} tables of {} entries",
                params.players, len
            )));
        }
        if tables.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Contract("payoff entries must be finite".into()));
        }
        Ok(Self { params: *params, tables })
    }

    pub fn params(&self) -> &GameParams {
        &self.params
    }

    pub fn players(&self) -> usize {
        self.params.players
    }

    pub fn actions(&self) -> usize {
        self.params.actions
    }

    /// Player `mu`'s table in storage order.
    pub fn table(&self, mu: usize) -> &[f64] {
        &self.tables[mu]
    }

    /// Payoff to player `mu` when the players choose `tuple = (i_1, ..., i_p)`.
    pub fn payoff(&self, mu: usize, tuple: &[usize]) -> f64 {
        let p = self.players();
        let n = self.actions();
        let idx = (0..p).fold(0, |acc, k| acc * n + tuple[(mu + k) % p]);
        self.tables[mu][idx]
    }

    /// Same tensor with different learning rates; the payoffs do not depend on them.
    pub fn with_learning(mut self, alpha: f64, beta: f64) -> Result<Self> {
        let params = self.params.with_learning(alpha, beta);
        params.validate()?;
        self.params = params;
        Ok(self)
    }

    /// Expected payoff of each of player `mu`'s actions against the other
    /// players' current strategies.
    ///
    /// The contraction uses the rescaled strategies (rows summing to N)
    /// directly, which keeps the result O(1) under the `N^-(p-1)` payoff
    /// scaling.
    pub fn expected_payoff_vector(&self, mu: usize, profile: &StrategyProfile) -> Result<Vec<f64>> {
        if profile.players() != self.players() || profile.actions() != self.actions() {
            return Err(Error::Contract(format!(
                "profile is {}x{}, game is {}x{}",
                profile.players(),
                profile.actions(),
                self.players(),
                self.actions()
            )));
        }
        if mu >= self.players() {
            return Err(Error::Contract(format!("player index {mu} out of range")));
        }
        let mut scratch = Contraction::new(self.players(), self.actions());
        let mut out = vec![0.0; self.actions()];
        scratch.expected_payoffs(self, mu, profile.as_slice(), &mut out);
        Ok(out)
    }
}

/// Reusable buffers for the payoff contraction.
#[derive(Clone, Debug)]
pub(crate) struct Contraction {
    front: Vec<f64>,
    back: Vec<f64>,
}

impl Contraction {
    pub(crate) fn new(players: usize, actions: usize) -> Self {
        let len = actions.pow(players.saturating_sub(1) as u32);
        Self { front: vec![0.0; len], back: vec![0.0; len] }
    }

    /// Contract player `mu`'s table with the opponents' rows of `x` (p x N, row-major).
    pub(crate) fn expected_payoffs(&mut self, tensor: &PayoffTensor, mu: usize, x: &[f64], out: &mut [f64]) {
        let p = tensor.players();
        let n = tensor.actions();
        let table = tensor.table(mu);
        // Last axis belongs to player mu - 1 (= mu + p - 1).
        let last = (mu + p - 1) % p;
        let row = &x[last * n..(last + 1) * n];
        let mut len = table.len() / n;
        if p == 2 {
            contract_last(table, row, out);
            return;
        }
        contract_last(table, row, &mut self.front[..len]);
        for k in (1..p - 1).rev() {
            let kappa = (mu + k) % p;
            let row = &x[kappa * n..(kappa + 1) * n];
            let next = len / n;
            if k == 1 {
                contract_last(&self.front[..len], row, out);
            } else {
                contract_last(&self.front[..len], row, &mut self.back[..next]);
                std::mem::swap(&mut self.front, &mut self.back);
            }
            len = next;
        }
    }
}

#[inline]
fn contract_last(src: &[f64], row: &[f64], dst: &mut [f64]) {
    let n = row.len();
    for (d, chunk) in dst.iter_mut().zip(src.chunks_exact(n)) {
        *d = chunk.iter().zip(row).map(|(a, b)| a * b).sum();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p: usize, n: usize, gamma: f64, seed: u64) -> GameParams {
        GameParams::new(p, n, 0.1, 0.05, gamma, seed).unwrap()
    }

    #[test]
    fn rejects_gamma_outside_range() {
        assert!(matches!(GameParams::new(3, 4, 0.1, 0.05, -1.01, 0), Err(Error::Domain(_))));
        assert!(matches!(GameParams::new(3, 4, 0.1, 0.05, 2.01, 0), Err(Error::Domain(_))));
        assert!(GameParams::new(3, 4, 0.1, 0.05, 2.0, 0).is_ok());
        assert!(GameParams::new(3, 4, 0.1, 0.05, -1.0, 0).is_ok());
    }

    #[test]
    fn rejects_oversized_tensor() {
        let p = GameParams { players: 10, actions: 10, alpha: 0.1, beta: 0.1, gamma: 0.0, seed: 0 };
        assert!(matches!(p.check_budget(DEFAULT_MEMORY_BUDGET), Err(Error::Resource { .. })));
        assert!(matches!(
            GameParams::new(10, 10, 0.1, 0.1, 0.0, 0),
            Err(Error::Resource { .. })
        ));
        let small = params(2, 4, 0.0, 0);
        assert!(matches!(
            PayoffTensor::generate_with_budget(&small, 100),
            Err(Error::Resource { .. })
        ));
    }

    #[test]
    fn r_is_beta_over_alpha() {
        assert_eq!(params(2, 2, 0.0, 0).r(), Some(0.5));
        let frozen = GameParams { alpha: 0.0, ..params(2, 2, 0.0, 0) };
        assert_eq!(frozen.r(), None);
    }

    #[test]
    fn factor_reproduces_equicorrelation() {
        for (p, c) in [(2, -1.0), (3, -0.5), (4, 0.3), (3, 1.0), (4, -1.0 / 3.0)] {
            let l = equicorrelation_factor(p, c);
            for i in 0..p {
                for j in 0..p {
                    let v: f64 = (0..p).map(|k| l[i * p + k] * l[j * p + k]).sum();
                    let want = if i == j { 1.0 } else { c };
                    assert!((v - want).abs() < 1e-12, "p={p} c={c} ({i},{j}) {v}");
                }
            }
        }
    }

    #[test]
    fn zero_sum_two_player_is_exact() {
        let t = PayoffTensor::generate(&params(2, 7, -1.0, 11)).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(t.payoff(0, &[i, j]), -t.payoff(1, &[i, j]));
                // Player 2's table is indexed (own, opponent).
                assert_eq!(t.table(0)[i * 7 + j] + t.table(1)[j * 7 + i], 0.0);
            }
        }
    }

    #[test]
    fn fully_cooperative_is_exact() {
        let t = PayoffTensor::generate(&params(3, 4, 2.0, 5)).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    let v = t.payoff(0, &[a, b, c]);
                    assert_eq!(v, t.payoff(1, &[a, b, c]));
                    assert_eq!(v, t.payoff(2, &[a, b, c]));
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let p = params(3, 5, -0.5, 99);
        assert_eq!(PayoffTensor::generate(&p).unwrap(), PayoffTensor::generate(&p).unwrap());
        let other = PayoffTensor::generate(&p.with_seed(100)).unwrap();
        assert_ne!(PayoffTensor::generate(&p).unwrap(), other);
    }

    #[test]
    fn independent_players_are_uncorrelated() {
        // 2 x 317^2 ~ 1e5 tuples.
        let p = params(2, 317, 0.0, 3);
        let t = PayoffTensor::generate(&p).unwrap();
        let m = 317 * 317;
        let (mut s1, mut s2, mut s12) = (0.0, 0.0, 0.0);
        for i in 0..317 {
            for j in 0..317 {
                let a = t.payoff(0, &[i, j]);
                let b = t.payoff(1, &[i, j]);
                s1 += a;
                s2 += b;
                s12 += a * b;
            }
        }
        let mf = m as f64;
        let cov = s12 / mf - (s1 / mf) * (s2 / mf);
        let var = 1.0 / 317.0;
        // Standard error of the sample covariance of independent normals is var / sqrt(M).
        assert!(cov.abs() < 4.0 * var / mf.sqrt(), "cov = {cov}");
    }

    #[test]
    fn contraction_of_single_entry() {
        let p = GameParams::new(2, 2, 0.1, 0.1, 0.0, 0).unwrap();
        let t = PayoffTensor::from_tables(&p, vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0; 4]]).unwrap();
        // Opponent plays (2, 0): a boundary point, so go through the raw contraction.
        let x = [1.0, 1.0, 2.0, 0.0];
        let mut a = [0.0; 2];
        Contraction::new(2, 2).expected_payoffs(&t, 0, &x, &mut a);
        assert_eq!(a, [2.0, 0.0]);
    }

    #[test]
    fn zero_tensor_gives_zero_payoffs() {
        let p = params(3, 3, 0.0, 0);
        let t = PayoffTensor::zeros(&p).unwrap();
        let x = StrategyProfile::uniform(3, 3);
        for mu in 0..3 {
            assert_eq!(t.expected_payoff_vector(mu, &x).unwrap(), vec![0.0; 3]);
        }
    }

    #[test]
    fn dimension_mismatch_is_a_contract_violation() {
        let t = PayoffTensor::zeros(&params(2, 3, 0.0, 0)).unwrap();
        let x = StrategyProfile::uniform(2, 4);
        assert!(matches!(t.expected_payoff_vector(0, &x), Err(Error::Contract(_))));
        assert!(matches!(
            t.expected_payoff_vector(5, &StrategyProfile::uniform(2, 3)),
            Err(Error::Contract(_))
        ));
    }
}
