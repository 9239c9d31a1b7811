//! Gaussian quadrature rules.
//!
//! [`QuadratureRule::gauss_hermite`] integrates against the standard normal
//! measure `Dz = exp(-z^2/2) dz / sqrt(2 pi)`. Nodes are the roots of the
//! orthonormal Hermite polynomials, found by Newton iteration (on the
//! Hermite functions) from the classical asymptotic starting points and mirrored so that the rule is
//! exactly symmetric; the variable change `z = sqrt(2) t` maps them to `Dz`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of Gauss-Hermite nodes for the fixed-point solver.
pub const DEFAULT_HERMITE_NODES: usize = 201;

/// Nodes and weights for the standard Gaussian measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::gauss_hermite(DEFAULT_HERMITE_NODES).expect("default rule")
    }
}

impl QuadratureRule {
    pub fn gauss_hermite(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("quadrature needs at least one node".into()));
        }
        let (t, w) = hermite_physicists(n);
        let nodes = t.iter().map(|t| t * std::f64::consts::SQRT_2).collect();
        let weights = w.iter().map(|w| w / PI.sqrt()).collect();
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫ Dz f(z)`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(z, w)| w * f(*z)).sum()
    }
}

/// Gauss-Hermite rule for the weight `exp(-t^2)`, nodes ascending.
fn hermite_physicists(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = PI.powf(-0.25);
    let m = n.div_ceil(2);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    // Largest roots first; x[i] holds the i-th largest.
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        if n % 2 == 1 && i == m - 1 {
            z = 0.0;
        }
        let mut pp = 0.0;
        for _ in 0..100 {
            let (p1, p2) = hermite_orthonormal(n, z, pim4);
            pp = (2.0 * n as f64).sqrt() * p2;
            // Newton on h_n(z) exp(-z^2/2): much less prone to overshooting
            // into the neighbouring root than on the bare polynomial.
            let dz = p1 / (pp - z * p1);
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        if n % 2 == 1 && i == m - 1 {
            z = 0.0;
            let (_, p2) = hermite_orthonormal(n, 0.0, pim4);
            pp = (2.0 * n as f64).sqrt() * p2;
        } else {
            let (_, p2) = hermite_orthonormal(n, z, pim4);
            pp = if p2 != 0.0 { (2.0 * n as f64).sqrt() * p2 } else { pp };
        }
        x[i] = z;
        w[i] = 2.0 / (pp * pp);
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..m {
        nodes[n - 1 - i] = x[i];
        nodes[i] = -x[i];
        weights[n - 1 - i] = w[i];
        weights[i] = w[i];
    }
    (nodes, weights)
}

/// Orthonormal Hermite polynomials `(h_n(z), h_{n-1}(z))` (without the
/// Gaussian factor) by the three-term recurrence.
fn hermite_orthonormal(n: usize, z: f64, pim4: f64) -> (f64, f64) {
    let mut p1 = pim4;
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        p1 = z * (2.0 / j as f64).sqrt() * p2 - ((j - 1) as f64 / j as f64).sqrt() * p3;
    }
    (p1, p2)
}

/// Gauss-Legendre nodes and weights on `[a, b]`, nodes ascending.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::Domain("quadrature needs at least one node".into()));
    }
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() <= 1e-16 {
                break;
            }
        }
        if n % 2 == 1 && i == n / 2 {
            z = 0.0;
            dp = legendre(n, 0.0).1;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = mid - half * z;
        nodes[n - 1 - i] = mid + half * z;
        weights[i] = half * w;
        weights[n - 1 - i] = half * w;
    }
    Ok((nodes, weights))
}

/// `(P_n(z), P_n'(z))`.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = 1.0;
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        p1 = ((2 * j - 1) as f64 * z * p2 - (j - 1) as f64 * p3) / j as f64;
    }
    (p1, n as f64 * (z * p1 - p2) / (z * z - 1.0))
}
