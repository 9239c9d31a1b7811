//! Self-consistent fixed point of the effective single-action process.
//!
//! At a fixed point the effective strategy `x(z)` solves
//!
//! ```text
//! Γ q^{p-2} χ x - (1/r) ln x + q^{(p-1)/2} z - ρ = 0
//! ```
//!
//! for a standard Gaussian `z`, and the order parameters close through
//! `∫Dz dx/dz = q^{(p-1)/2} χ`, `∫Dz x² = q`, `∫Dz x = 1`.
//!
//! With `c = -Γ r q^{p-2} χ`, `s = q^{(p-1)/2}` and `L = r (s z - ρ)` the
//! positive solution is `x = W(c e^L) / c`, which is evaluated in log form,
//! `ln x = L - W(c e^L) = ln W - ln c`, so that neither tail overflows. The same
//! substitution gives `dx/dz = s r x / (1 + W)`.

use serde::{Deserialize, Serialize};

use super::lambert::{lambert_w, lambert_w0_exp, Branch};
use super::quadrature::QuadratureRule;
use crate::error::{Error, Result};

/// Largest `q` the solver accepts before declaring divergence.
const Q_MAX: f64 = 1e12;
/// Relative change below which Newton polishing is attempted.
const POLISH_TRIGGER: f64 = 1e-4;
/// How far (relative) a polished solution may move from the damped iterate.
const POLISH_RADIUS: f64 = 0.05;
const MAX_POLISH_STEPS: usize = 30;
/// Iterations without a new smallest step after which the damped iteration
/// is declared non-convergent.
const STALL_WINDOW: usize = 500;
/// Required accuracy of the three closure relations on success.
pub const RELATION_TOL: f64 = 1e-8;

/// Parameters of the effective process on the theory side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryPoint {
    pub p: usize,
    pub gamma: f64,
    /// `r = β / α`.
    pub r: f64,
}

impl TheoryPoint {
    pub fn new(p: usize, gamma: f64, r: f64) -> Result<Self> {
        if p < 2 {
            return Err(Error::Domain(format!("need at least two players, got {p}")));
        }
        if !(-1.0..=0.0).contains(&gamma) {
            return Err(Error::Domain(format!("theory requires gamma in [-1, 0], got {gamma}")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Domain(format!("r must be positive and finite, got {r}")));
        }
        Ok(Self { p, gamma, r })
    }

    pub fn from_inverse_r(p: usize, gamma: f64, inverse_r: f64) -> Result<Self> {
        Self::new(p, gamma, 1.0 / inverse_r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderParameters {
    pub q: f64,
    pub chi: f64,
    pub rho: f64,
    /// Largest violation of the three closure relations.
    pub residual: f64,
}

/// Solver knobs; the defaults are what [`solve_order_parameters`] uses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Weight of the previous iterate when mixing.
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Starting `(q, χ, ρ)`; `(1, r, 0)` when absent.
    pub initial: Option<(f64, f64, f64)>,
    /// Allow Newton polishing of the damped iterate.
    pub polish: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { damping: 0.5, tol: 1e-10, max_iter: 10_000, initial: None, polish: true }
    }
}

/// Everything that is constant across quadrature nodes.
#[derive(Clone, Copy, Debug)]
struct Kernel {
    r: f64,
    s: f64,
    c: f64,
    ln_c: f64,
    rho: f64,
}

impl Kernel {
    fn new(point: &TheoryPoint, q: f64, chi: f64, rho: f64) -> Result<Self> {
        if !(q > 0.0 && q.is_finite() && chi.is_finite() && rho.is_finite()) {
            return Err(Error::NoFixedPoint(format!("order parameters left the domain (q={q}, chi={chi}, rho={rho})")));
        }
        let p = point.p as i32;
        let s = q.powf(0.5 * (p - 1) as f64);
        let c = -point.gamma * point.r * q.powi(p - 2) * chi;
        if point.gamma < 0.0 && !(c > 0.0) {
            return Err(Error::NoFixedPoint(format!("Lambert W argument not positive (chi = {chi})")));
        }
        let ln_c = if c > 0.0 { c.ln() } else { f64::NEG_INFINITY };
        Ok(Self { r: point.r, s, c, ln_c, rho })
    }

    /// `(ln x, W)` at `z`.
    fn log_x(&self, z: f64) -> (f64, f64) {
        let l = self.r * (self.s * z - self.rho);
        if !(self.c > 0.0) {
            return (l, 0.0);
        }
        let u = lambert_w0_exp(self.ln_c + l);
        // W + ln W = ln c + L, so L - W = ln W - ln c; the second form does
        // not cancel when W is large.
        let ln_x = if u > 1.0 { u.ln() - self.ln_c } else { l - u };
        (ln_x, u)
    }

    /// `(x, dx/dz)` at `z`.
    fn eval(&self, z: f64) -> (f64, f64) {
        let (ln_x, u) = self.log_x(z);
        let x = ln_x.exp();
        (x, self.s * self.r * x / (1.0 + u))
    }
}

#[derive(Clone, Copy, Debug)]
struct Moments {
    /// `∫ dx/dz`
    i1: f64,
    /// `∫ x²`
    i2: f64,
    /// `∫ x`
    i3: f64,
}

fn moments(kernel: &Kernel, rule: &QuadratureRule) -> Moments {
    let mut m = Moments { i1: 0.0, i2: 0.0, i3: 0.0 };
    for (z, w) in rule.nodes.iter().zip(&rule.weights) {
        let (x, dx) = kernel.eval(*z);
        m.i1 += w * dx;
        m.i2 += w * x * x;
        m.i3 += w * x;
    }
    m
}

fn check_params(point: &TheoryPoint, params: &OrderParameters) -> Result<Kernel> {
    Kernel::new(point, params.q, params.chi, params.rho)
}

/// Positive solution `x(z)` of the fixed-point equation (principal branch).
pub fn x_of_z(point: &TheoryPoint, params: &OrderParameters, z: f64) -> Result<f64> {
    Ok(check_params(point, params)?.log_x(z).0.exp())
}

/// `ln x(z)`, finite even where `x` itself under- or overflows.
pub fn ln_x_of_z(point: &TheoryPoint, params: &OrderParameters, z: f64) -> Result<f64> {
    Ok(check_params(point, params)?.log_x(z).0)
}

/// `q^{(p-1)/2} / (1/(r x) - Γ q^{p-2} χ)` at `x = x(z)`.
pub fn dx_dz(point: &TheoryPoint, params: &OrderParameters, z: f64) -> Result<f64> {
    let kernel = check_params(point, params)?;
    // The denominator equals (1 + W) / (r x) > 0; x (and with it dx/dz) may
    // underflow to zero deep in the tail, which is harmless.
    let (_, dx) = kernel.eval(z);
    if !(dx.is_finite() && dx >= 0.0) {
        return Err(Error::Singular { z });
    }
    Ok(dx)
}

/// Residual of the pointwise fixed-point equation at `z`, with `x` taken from
/// its log representation, divided by the largest of its terms (or 1 when all
/// terms are smaller) so that it measures lost digits rather than magnitude.
pub fn pointwise_residual(point: &TheoryPoint, params: &OrderParameters, z: f64) -> Result<f64> {
    let ln_x = ln_x_of_z(point, params, z)?;
    let p = point.p as i32;
    let s = params.q.powf(0.5 * (p - 1) as f64);
    let a = point.gamma * params.q.powi(p - 2) * params.chi;
    let gamma_term = if a == 0.0 { 0.0 } else { a * ln_x.exp() };
    let terms = [gamma_term, -ln_x / point.r, s * z, -params.rho];
    let scale = terms.iter().fold(1.0f64, |m, t| m.max(t.abs()));
    Ok(terms.iter().sum::<f64>() / scale)
}

/// Relative violations of the closure relations
/// `[∫dx/dz = sχ, ∫x² = q, ∫x = 1]`.
pub fn closure_relations(point: &TheoryPoint, params: &OrderParameters, rule: &QuadratureRule) -> Result<[f64; 3]> {
    let kernel = check_params(point, params)?;
    let m = moments(&kernel, rule);
    let s_chi = kernel.s * params.chi;
    Ok([(m.i1 - s_chi) / s_chi, (m.i2 - params.q) / params.q, m.i3 - 1.0])
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| if b.is_nan() { f64::NAN } else { a.max(b.abs()) })
}

/// Solve `∫Dz x = 1` for `ρ` at fixed `(q, χ)`. Newton runs on `ln ∫Dz x`,
/// which is exactly linear in `ρ` at `Γ = 0` and strictly decreasing in
/// general; once a sign change is seen the iterate is kept inside the bracket.
fn solve_rho(point: &TheoryPoint, rule: &QuadratureRule, q: f64, chi: f64, guess: f64) -> Result<f64> {
    let f = |rho: f64| -> Result<(f64, f64)> {
        let kernel = Kernel::new(point, q, chi, rho)?;
        let m = moments(&kernel, rule);
        let value = m.i3.ln();
        // dx/dρ = -(dx/dz) / s
        let slope = -m.i1 / (kernel.s * m.i3);
        if value.is_nan() || slope.is_nan() {
            return Err(Error::NoFixedPoint("normalization integral is NaN".into()));
        }
        Ok((value, slope))
    };

    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut rho = guess;
    let mut reach = 1.0 / point.r;
    for _ in 0..200 {
        let (value, slope) = f(rho)?;
        if value == 0.0 {
            return Ok(rho);
        }
        if value > 0.0 {
            lo = rho;
        } else {
            hi = rho;
        }
        let mut next = rho - value / slope;
        if !(next > lo && next < hi) {
            next = if lo.is_finite() && hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                // No bracket yet and Newton is unusable: walk outward.
                reach *= 2.0;
                if value > 0.0 { rho + reach } else { rho - reach }
            };
        }
        if !next.is_finite() || reach > 1e12 {
            return Err(Error::NoFixedPoint("cannot bracket rho".into()));
        }
        if (next - rho).abs() <= 4.0 * f64::EPSILON * (1.0 + next.abs()) || hi - lo <= 4.0 * f64::EPSILON * (1.0 + rho.abs()) {
            return Ok(next);
        }
        rho = next;
    }
    Ok(rho)
}

/// One application of the closure map: `ρ` from normalization, then
/// `(q, χ) -> (∫x², ∫(dx/dz) / s)`.
fn closure_map(point: &TheoryPoint, rule: &QuadratureRule, q: f64, chi: f64, rho_guess: f64) -> Result<(f64, f64, f64)> {
    let rho = solve_rho(point, rule, q, chi, rho_guess)?;
    let kernel = Kernel::new(point, q, chi, rho)?;
    let m = moments(&kernel, rule);
    let q_new = m.i2;
    let chi_new = m.i1 / kernel.s;
    if !(q_new.is_finite() && chi_new.is_finite() && q_new > 0.0 && q_new < Q_MAX) {
        return Err(Error::NoFixedPoint(format!("iteration diverged (q -> {q_new})")));
    }
    Ok((q_new, chi_new, rho))
}

pub fn solve_order_parameters(point: &TheoryPoint, rule: &QuadratureRule) -> Result<OrderParameters> {
    solve_with(point, rule, &SolverOptions::default())
}

pub fn solve_with(point: &TheoryPoint, rule: &QuadratureRule, options: &SolverOptions) -> Result<OrderParameters> {
    TheoryPoint::new(point.p, point.gamma, point.r)?;
    let (mut q, mut chi, mut rho) = options.initial.unwrap_or((1.0, point.r, 0.0));
    let d = options.damping;
    let mut converged = false;
    let (mut best_change, mut best_at) = (f64::INFINITY, 0);
    for it in 0..options.max_iter {
        let (q_new, chi_new, rho_new) = closure_map(point, rule, q, chi, rho)?;
        rho = rho_new;
        let q_next = d * q + (1.0 - d) * q_new;
        let chi_next = d * chi + (1.0 - d) * chi_new;
        let change = ((q_next - q) / q).abs().max(((chi_next - chi) / chi).abs());
        q = q_next;
        chi = chi_next;
        if change < options.tol {
            converged = true;
            break;
        }
        if change < best_change {
            (best_change, best_at) = (change, it);
        } else if it - best_at > STALL_WINDOW {
            return Err(Error::NoFixedPoint(format!("iteration stalled at relative change {best_change:.3e}")));
        }
        // Near a fold the damped iteration only converges algebraically.
        if options.polish && change < POLISH_TRIGGER && it % 50 == 0 {
            if let Some(sol) = newton_polish(point, rule, q, chi, rho) {
                if sol.residual < 1e-3 * RELATION_TOL {
                    return Ok(sol);
                }
            }
        }
    }
    if !converged {
        return Err(Error::NoFixedPoint(format!("no convergence within {} iterations", options.max_iter)));
    }
    let rho = solve_rho(point, rule, q, chi, rho)?;
    let mut best = finish(point, rule, q, chi, rho)?;
    if options.polish {
        if let Some(sol) = newton_polish(point, rule, q, chi, rho) {
            if sol.residual < best.residual {
                best = sol;
            }
        }
    }
    if !(best.residual < RELATION_TOL) {
        return Err(Error::NoFixedPoint(format!("closure residual {} above tolerance", best.residual)));
    }
    Ok(best)
}

fn finish(point: &TheoryPoint, rule: &QuadratureRule, q: f64, chi: f64, rho: f64) -> Result<OrderParameters> {
    let mut params = OrderParameters { q, chi, rho, residual: 0.0 };
    params.residual = max_abs(&closure_relations(point, &params, rule)?);
    Ok(params)
}

/// Newton iteration on `G(q, χ) = (∫x² - q, ∫(dx/dz)/s - χ)` with a central
/// difference Jacobian. Returns the polished point if it stays close to the
/// start and improves the residual.
fn newton_polish(point: &TheoryPoint, rule: &QuadratureRule, q0: f64, chi0: f64, rho0: f64) -> Option<OrderParameters> {
    let g = |q: f64, chi: f64, rho: f64| -> Option<([f64; 2], f64)> {
        let (qn, chin, rho) = closure_map(point, rule, q, chi, rho).ok()?;
        Some(([qn - q, chin - chi], rho))
    };
    let (mut q, mut chi, mut rho) = (q0, chi0, rho0);
    let (mut gv, r0) = g(q, chi, rho)?;
    rho = r0;
    let norm = |gv: &[f64; 2], q: f64, chi: f64| (gv[0] / q).abs().max((gv[1] / chi).abs());
    for _ in 0..MAX_POLISH_STEPS {
        let hq = 1e-5 * q;
        let hc = 1e-5 * chi.abs().max(1e-12);
        let (gqp, _) = g(q + hq, chi, rho)?;
        let (gqm, _) = g(q - hq, chi, rho)?;
        let (gcp, _) = g(q, chi + hc, rho)?;
        let (gcm, _) = g(q, chi - hc, rho)?;
        let j = [
            [(gqp[0] - gqm[0]) / (2.0 * hq), (gcp[0] - gcm[0]) / (2.0 * hc)],
            [(gqp[1] - gqm[1]) / (2.0 * hq), (gcp[1] - gcm[1]) / (2.0 * hc)],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if !(det.abs() > 0.0 && det.is_finite()) {
            break;
        }
        let dq = -(j[1][1] * gv[0] - j[0][1] * gv[1]) / det;
        let dc = -(-j[1][0] * gv[0] + j[0][0] * gv[1]) / det;
        let (q_next, chi_next) = (q + dq, chi + dc);
        if !(q_next > 0.0) || ((q_next - q0) / q0).abs() > POLISH_RADIUS || ((chi_next - chi0) / chi0).abs() > POLISH_RADIUS {
            return None;
        }
        let (g_next, rho_next) = g(q_next, chi_next, rho)?;
        let before = norm(&gv, q, chi);
        let after = norm(&g_next, q_next, chi_next);
        if after >= before {
            // At the rounding floor.
            break;
        }
        q = q_next;
        chi = chi_next;
        rho = rho_next;
        gv = g_next;
        if after < 1e-15 || after > 0.5 * before && after < 1e-12 {
            break;
        }
    }
    let sol = finish(point, rule, q, chi, rho).ok()?;
    sol.residual.is_finite().then_some(sol)
}

/// Closed-form solutions on the `Γ = 0` line: `q^{p-1} = -W(-(p-1) r²) / ((p-1) r²)`
/// with `χ = r` and `ρ = r q^{p-1} / 2`. Returns the principal-branch
/// solution first; empty when `(p-1) r² > 1/e`.
pub fn gamma_zero_solutions(p: usize, r: f64) -> Result<Vec<(Branch, OrderParameters)>> {
    TheoryPoint::new(p, 0.0, r)?;
    let k = (p - 1) as f64 * r * r;
    let y = -k;
    if y < -1.0 / std::f64::consts::E {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(2);
    for branch in [Branch::Principal, Branch::MinusOne] {
        let w = lambert_w(branch, y)?;
        let qp1 = -w / k;
        let q = qp1.powf(1.0 / (p - 1) as f64);
        out.push((branch, OrderParameters { q, chi: r, rho: 0.5 * r * qp1, residual: 0.0 }));
        if y == -1.0 / std::f64::consts::E || w == -1.0 {
            // Both branches meet at the fold.
            out.push((Branch::MinusOne, out[0].1));
            break;
        }
    }
    Ok(out)
}

/// The `Γ = 0` marginal point: `r = 1/√((p-1)e)`, `q = e^{1/(p-1)}`,
/// `χ = r`, `ρ = √(e/(p-1)) / 2`.
pub fn gamma_zero_boundary(p: usize) -> (f64, OrderParameters) {
    let e = std::f64::consts::E;
    let n = (p - 1) as f64;
    let r = 1.0 / (n * e).sqrt();
    (r, OrderParameters { q: (1.0 / n).exp(), chi: r, rho: 0.5 * (e / n).sqrt(), residual: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule() -> QuadratureRule {
        QuadratureRule::default()
    }

    #[test]
    fn point_validation() {
        assert!(TheoryPoint::new(1, 0.0, 1.0).is_err());
        assert!(TheoryPoint::new(2, 0.1, 1.0).is_err());
        assert!(TheoryPoint::new(2, -1.1, 1.0).is_err());
        assert!(TheoryPoint::new(2, -0.5, 0.0).is_err());
        assert!(TheoryPoint::new(2, -1.0, 1e-3).is_ok());
    }

    #[test]
    fn gamma_zero_origin() {
        let pt = TheoryPoint::new(2, 0.0, 0.7).unwrap();
        let op = OrderParameters { q: 1.3, chi: 0.4, rho: 0.0, residual: 0.0 };
        assert_eq!(x_of_z(&pt, &op, 0.0).unwrap(), 1.0);
        let x = x_of_z(&pt, &op, 0.8).unwrap();
        assert!((dx_dz(&pt, &op, 0.8).unwrap() - 0.7 * 1.3f64.sqrt() * x).abs() < 1e-15);
    }

    #[test]
    fn small_gamma_approaches_gamma_zero() {
        let op = OrderParameters { q: 1.2, chi: 0.9, rho: 0.3, residual: 0.0 };
        let a = TheoryPoint::new(3, 0.0, 0.8).unwrap();
        for gamma in [-1e-8, -1e-12] {
            let b = TheoryPoint::new(3, gamma, 0.8).unwrap();
            // x_Γ = x_0 (1 - c x_0 + O(c²)) with c = -Γ r q χ.
            let c = -gamma * 0.8 * 1.2 * 0.9;
            for z in [-3.0, -0.5, 0.0, 1.0, 4.0] {
                let xa = x_of_z(&a, &op, z).unwrap();
                let xb = x_of_z(&b, &op, z).unwrap();
                assert!(xb <= xa);
                assert!((xa - xb).abs() <= 1.01 * c * xa * xa + 1e-15 * xa, "z={z}: {xa} vs {xb}");
            }
        }
        let b = TheoryPoint::new(3, -1e-12, 0.8).unwrap();
        for z in [-3.0, 0.0, 1.0] {
            let xa = x_of_z(&a, &op, z).unwrap();
            assert!((xa - x_of_z(&b, &op, z).unwrap()).abs() < 1e-8 * xa);
        }
    }

    #[test]
    fn non_positive_chi_leaves_validity_region() {
        let pt = TheoryPoint::new(2, -0.5, 1.0).unwrap();
        let op = OrderParameters { q: 1.0, chi: -0.1, rho: 0.0, residual: 0.0 };
        assert!(matches!(x_of_z(&pt, &op, 0.0), Err(Error::NoFixedPoint(_))));
    }

    #[test]
    fn solver_matches_gamma_zero_closed_form() {
        let pt = TheoryPoint::new(2, 0.0, 0.5).unwrap();
        let sol = solve_order_parameters(&pt, &rule()).unwrap();
        let w = lambert_w(Branch::Principal, -0.25).unwrap();
        assert!((sol.q - (-w / 0.25)).abs() < 1e-8, "q = {}", sol.q);
        assert!((sol.chi - 0.5).abs() < 1e-8);
        assert!((sol.rho - 0.25 * sol.q).abs() < 1e-8);
    }

    #[test]
    fn gamma_zero_branches() {
        let sols = gamma_zero_solutions(3, 0.3).unwrap();
        assert_eq!(sols.len(), 2);
        assert!(sols[0].1.q < sols[1].1.q);
        for (_, op) in &sols {
            let qp1 = op.q * op.q;
            // q^{p-1} = exp((p-1) r² q^{p-1})
            assert!((qp1 - (2.0 * 0.09 * qp1).exp()).abs() < 1e-12 * qp1);
        }
        assert!(gamma_zero_solutions(2, 0.7).unwrap().is_empty());
    }

    #[test]
    fn negative_gamma_solution_satisfies_relations() {
        let pt = TheoryPoint::new(3, -0.5, 0.3).unwrap();
        let r = rule();
        let sol = solve_order_parameters(&pt, &r).unwrap();
        assert!(sol.residual < RELATION_TOL);
        let rel = closure_relations(&pt, &sol, &r).unwrap();
        assert!(rel.iter().all(|v| v.abs() < RELATION_TOL));
        for z in &r.nodes {
            assert!(pointwise_residual(&pt, &sol, *z).unwrap().abs() < 1e-12);
        }
    }
}
