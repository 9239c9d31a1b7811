//! Real branches of the Lambert W function, `W e^W = y`.
//!
//! Both branches are refined with Halley's method. Initial guesses:
//!
//! * near the branch point `y = -1/e`: the series
//!   `W = -1 + s - s^2/3 + 11 s^3/72` with `s = ±sqrt(2 (e y + 1))`
//!   (`+` for the principal branch, `-` for the lower one);
//! * principal branch, moderate `y`: `ln(1 + y)`, corrected by Winitzki's factor;
//! * principal branch, `y > e`: `L1 - L2 + L2 / L1` with `L1 = ln y`, `L2 = ln L1`;
//! * lower branch, `y` close to zero: the same asymptotic form in `ln(-y)`.

use std::f64::consts::E;

use crate::error::{Error, Result};

/// Real branch of the Lambert W function.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// `W >= -1`, defined for `y >= -1/e`.
    Principal,
    /// `W <= -1`, defined for `-1/e <= y < 0`.
    MinusOne,
}

const BRANCH_POINT: f64 = -1.0 / E;
const MAX_ITER: usize = 64;

pub fn lambert_w(branch: Branch, y: f64) -> Result<f64> {
    if y.is_nan() {
        return Err(Error::Domain("Lambert W of NaN".into()));
    }
    // Tolerate roundoff in arguments computed as -1/e.
    if y < BRANCH_POINT {
        if y > BRANCH_POINT - 4.0 * f64::EPSILON {
            return Ok(-1.0);
        }
        return Err(Error::Domain(format!("Lambert W undefined for y = {y} < -1/e")));
    }
    if y == BRANCH_POINT {
        return Ok(-1.0);
    }
    match branch {
        Branch::Principal => {
            if y == 0.0 {
                return Ok(0.0);
            }
            if y == f64::INFINITY {
                return Ok(f64::INFINITY);
            }
            Ok(halley(y, principal_guess(y)))
        }
        Branch::MinusOne => {
            if y >= 0.0 {
                return Err(Error::Domain(format!("lower branch undefined for y = {y} >= 0")));
            }
            Ok(halley(y, lower_guess(y)))
        }
    }
}

fn branch_series(s: f64) -> f64 {
    -1.0 + s - s * s / 3.0 + 11.0 / 72.0 * s * s * s
}

fn principal_guess(y: f64) -> f64 {
    if y < -0.32 {
        branch_series((2.0 * (E * y + 1.0)).max(0.0).sqrt())
    } else if y <= E {
        let l = y.ln_1p();
        l * (1.0 - (1.0 + l).ln() / (2.0 + l))
    } else {
        let l1 = y.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    }
}

fn lower_guess(y: f64) -> f64 {
    if y < -0.25 {
        branch_series(-(2.0 * (E * y + 1.0)).max(0.0).sqrt())
    } else {
        let l1 = (-y).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    }
}

fn halley(y: f64, mut w: f64) -> f64 {
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - y;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let next = w - f / denom;
        if !next.is_finite() {
            break;
        }
        let done = (next - w).abs() <= 4.0 * f64::EPSILON * (1.0 + next.abs());
        w = next;
        if done {
            break;
        }
    }
    w
}

/// Principal branch evaluated at `y = e^ln_y`, usable when `y` itself would
/// overflow or underflow.
pub fn lambert_w0_exp(ln_y: f64) -> f64 {
    if ln_y < -700.0 {
        // W(y) = y e^{-W(y)} and W is below 1e-300 here.
        return ln_y.exp();
    }
    if ln_y < 700.0 {
        return lambert_w(Branch::Principal, ln_y.exp()).expect("positive argument");
    }
    // Solve w + ln w = ln_y by Newton; converges from the asymptotic guess.
    let mut w = ln_y - ln_y.ln();
    for _ in 0..MAX_ITER {
        let f = w + w.ln() - ln_y;
        let next = w - f / (1.0 + 1.0 / w);
        let done = (next - w).abs() <= 4.0 * f64::EPSILON * next;
        w = next;
        if done {
            break;
        }
    }
    w
}
