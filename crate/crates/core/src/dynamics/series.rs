use super::Trajectory;
use crate::error::{Error, Result};

/// Total expected payoff at every sample of the trajectory.
pub fn payoff_sum_series(trajectory: &Trajectory) -> Vec<f64> {
    trajectory.payoff_sum.clone()
}

/// Consecutive differences `s[t+1] - s[t]`.
pub fn diff_series(series: &[f64]) -> Vec<f64> {
    series.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Biased sample autocorrelation at lags `0..=max_lag`:
/// `c_k / c_0` with `c_k = (1/n) sum_t (s_t - m)(s_{t+k} - m)`.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n <= max_lag + 1 {
        return Err(Error::Contract(format!(
            "series of length {n} too short for lag {max_lag}"
        )));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let c0 = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if !(c0 > 0.0) {
        return Err(Error::Degenerate("constant series has no autocorrelation".into()));
    }
    Ok((0..=max_lag)
        .map(|k| {
            let ck: f64 = centered.iter().zip(&centered[k..]).map(|(a, b)| a * b).sum();
            ck / n as f64 / c0
        })
        .collect())
}
