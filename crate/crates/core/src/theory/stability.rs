//! Stability of the effective fixed point and the boundary it traces in the
//! `(α/β, Γ)` plane.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fixed_point::{solve_order_parameters, OrderParameters, TheoryPoint};
use super::quadrature::{gauss_legendre, QuadratureRule};
use crate::error::{Error, Result};

/// Bracket of `1/r` searched for the boundary.
pub const INVERSE_R_MIN: f64 = 1e-6;
pub const INVERSE_R_MAX: f64 = 1e3;
/// Absolute tolerance of the bisection in `1/r`.
pub const INVERSE_R_TOL: f64 = 1e-6;
/// Log-spaced points in the monotonicity guard scan.
pub const GUARD_POINTS: usize = 20;

/// `∫Dz (dx/dz)² / q^{p-1}`, i.e. `∫Dz (1/(r x) - Γ q^{p-2} χ)^{-2}`.
pub fn stability_lhs(point: &TheoryPoint, params: &OrderParameters, rule: &QuadratureRule) -> Result<f64> {
    let mut sum = 0.0;
    for (z, w) in rule.nodes.iter().zip(&rule.weights) {
        let d = super::fixed_point::dx_dz(point, params, *z)?;
        sum += w * d * d;
    }
    Ok(sum / params.q.powi(point.p as i32 - 1))
}

/// `1 / ((p-1) q^{p-2})`.
pub fn stability_rhs(point: &TheoryPoint, params: &OrderParameters) -> f64 {
    1.0 / ((point.p - 1) as f64 * params.q.powi(point.p as i32 - 2))
}

pub fn is_stable(point: &TheoryPoint, params: &OrderParameters, rule: &QuadratureRule) -> Result<bool> {
    Ok(stability_lhs(point, params, rule)? < stability_rhs(point, params))
}

/// Solve and test; a missing fixed point counts as unstable.
pub fn stable_at(p: usize, gamma: f64, inverse_r: f64, rule: &QuadratureRule) -> Result<bool> {
    let point = TheoryPoint::from_inverse_r(p, gamma, inverse_r)?;
    match solve_order_parameters(&point, rule) {
        Ok(params) => match is_stable(&point, &params, rule) {
            Ok(stable) => Ok(stable),
            Err(Error::Singular { .. }) => Ok(false),
            Err(e) => Err(e),
        },
        Err(Error::NoFixedPoint(_)) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Smallest `1/r = α/β` in `[1e-6, 1e3]` with a stable fixed point.
///
/// Stability is assumed monotone in `1/r`; a scan over log-spaced points
/// checks for a single unstable-to-stable change before bisecting.
pub fn critical_inverse_r(p: usize, gamma: f64, rule: &QuadratureRule) -> Result<f64> {
    TheoryPoint::new(p, gamma, 1.0)?;
    let (lo, hi) = (INVERSE_R_MIN.ln(), INVERSE_R_MAX.ln());
    let grid: Vec<f64> = (0..GUARD_POINTS)
        .map(|k| (lo + (hi - lo) * k as f64 / (GUARD_POINTS - 1) as f64).exp())
        .collect();
    let flags = grid.iter().map(|g| stable_at(p, gamma, *g, rule)).collect::<Result<Vec<_>>>()?;
    let changes = flags.windows(2).filter(|w| w[0] != w[1]).count();
    let Some(first) = flags.iter().position(|s| *s) else {
        return Err(Error::BoundaryOutOfRange(format!(
            "no stable fixed point for 1/r <= {INVERSE_R_MAX} (p={p}, gamma={gamma})"
        )));
    };
    if changes > 1 {
        return Err(Error::Degenerate(format!(
            "stability is not monotone in 1/r (p={p}, gamma={gamma}, {changes} changes)"
        )));
    }
    if first == 0 {
        return Ok(INVERSE_R_MIN);
    }
    let (mut a, mut b) = (grid[first - 1], grid[first]);
    while b - a > INVERSE_R_TOL {
        let m = 0.5 * (a + b);
        if stable_at(p, gamma, m, rule)? {
            b = m;
        } else {
            a = m;
        }
    }
    Ok(b)
}

/// Boundary at each `Γ`, evaluated in parallel.
pub fn boundary_curve(p: usize, gammas: &[f64], rule: &QuadratureRule) -> Vec<Result<f64>> {
    gammas.par_iter().map(|g| critical_inverse_r(p, *g, rule)).collect()
}

/// `∫_{-1}^{0} dΓ (α/β)_c(Γ)` by Gauss-Legendre quadrature.
pub fn unstable_area(p: usize, rule: &QuadratureRule, n_gamma_nodes: usize) -> Result<f64> {
    if p < 2 {
        return Err(Error::Domain(format!("need at least two players, got {p}")));
    }
    let (nodes, weights) = gauss_legendre(n_gamma_nodes, -1.0, 0.0)?;
    let values = boundary_curve(p, &nodes, rule);
    let mut area = 0.0;
    for (v, w) in values.into_iter().zip(&weights) {
        area += w * v?;
    }
    Ok(area)
}

/// `√(e (p-1))`, the large-`p` estimate of the unstable area.
pub fn area_asymptote(p: usize) -> f64 {
    (std::f64::consts::E * (p - 1) as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LargePTargets {
    pub boundary_inverse_r: f64,
    pub rho: f64,
}

/// Large-`p` predictions: `1/r = √(e (p-1))` and `ρ = (1/2 + Γ) √(e/(p-1))`.
pub fn large_p_targets(p: usize, gamma: f64) -> LargePTargets {
    let n = (p - 1) as f64;
    let e = std::f64::consts::E;
    LargePTargets { boundary_inverse_r: (e * n).sqrt(), rho: (0.5 + gamma) * (e / n).sqrt() }
}
