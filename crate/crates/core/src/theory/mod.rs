//! Fixed-point theory of the effective process: order parameters, their
//! stability, and the resulting boundary in the `(α/β, Γ)` plane (`Γ <= 0`).

mod fixed_point;
mod lambert;
mod quadrature;
mod stability;

pub use fixed_point::{
    closure_relations, dx_dz, gamma_zero_boundary, gamma_zero_solutions, ln_x_of_z, pointwise_residual,
    solve_order_parameters, solve_with, x_of_z, OrderParameters, SolverOptions, TheoryPoint, RELATION_TOL,
};
pub use lambert::{lambert_w, lambert_w0_exp, Branch};
pub use quadrature::{gauss_legendre, QuadratureRule, DEFAULT_HERMITE_NODES};
pub use stability::{
    area_asymptote, boundary_curve, critical_inverse_r, is_stable, large_p_targets, stability_lhs, stability_rhs,
    stable_at, unstable_area, LargePTargets, GUARD_POINTS, INVERSE_R_MAX, INVERSE_R_MIN, INVERSE_R_TOL,
};
