use super::map::{check_shape, profile_from_state};
use super::trajectory::{RunKind, Sampling, Trajectory};
use super::{project_log_rows, total_payoff, Dynamics, PayoffWorkspace, StrategyProfile};
use crate::ensemble::PayoffTensor;
use crate::error::{Error, Result};

/// Right-hand side of the continuous-time learning flow,
/// `dx_i/dt = x_i (-(1/r) ln x_i + a_i - rho)`, with `rho` fixed per player
/// by requiring the row derivative to sum to zero.
pub fn sc_derivative(tensor: &PayoffTensor, profile: &StrategyProfile, r: f64) -> Result<Vec<f64>> {
    if !(r > 0.0) {
        return Err(Error::Contract(format!("r = {r} must be positive")));
    }
    check_shape(tensor, profile)?;
    let n = tensor.actions();
    let x = profile.as_slice();
    let mut ws = PayoffWorkspace::new(tensor.players(), n);
    ws.evaluate(tensor, x)?;
    let mut out = vec![0.0; x.len()];
    for ((xr, ar), dr) in x.chunks_exact(n).zip(ws.payoffs.chunks_exact(n)).zip(out.chunks_exact_mut(n)) {
        let growth: Vec<f64> = xr.iter().zip(ar).map(|(x, a)| -x.ln() / r + a).collect();
        let rho = xr.iter().zip(&growth).map(|(x, g)| x * g).sum::<f64>() / n as f64;
        for ((d, x), g) in dr.iter_mut().zip(xr).zip(&growth) {
            *d = x * (g - rho);
        }
    }
    Ok(out)
}

/// Classical fixed-step RK4 on `y = ln x`, re-projecting every row onto
/// `sum x = N` after each step.
#[derive(Clone, Debug)]
pub struct FlowStepper<'a> {
    tensor: &'a PayoffTensor,
    r: f64,
    h: f64,
    y: Vec<f64>,
    x: Vec<f64>,
    ws: PayoffWorkspace,
    payoffs_fresh: bool,
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
    stage_x: Vec<f64>,
    steps: u64,
}

impl<'a> FlowStepper<'a> {
    pub fn new(tensor: &'a PayoffTensor, r: f64, step: f64, start: &StrategyProfile) -> Result<Self> {
        if !(r > 0.0) || !(step > 0.0) || !r.is_finite() || !step.is_finite() {
            return Err(Error::Contract(format!("need r > 0 and step > 0, got r = {r}, step = {step}")));
        }
        check_shape(tensor, start)?;
        let x = start.as_slice().to_vec();
        let y: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        let len = x.len();
        Ok(Self {
            tensor,
            r,
            h: step,
            y,
            x,
            ws: PayoffWorkspace::new(tensor.players(), tensor.actions()),
            payoffs_fresh: false,
            k: [vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]],
            stage: vec![0.0; len],
            stage_x: vec![0.0; len],
            steps: 0,
        })
    }

    /// Default step: `0.1 * min(1, r)`.
    pub fn default_step(r: f64) -> f64 {
        0.1 * r.min(1.0)
    }

    pub fn log_state(&self) -> &[f64] {
        &self.y
    }

    /// `dy/dt` at log-state `y` whose linear values are `x`, payoffs already in `ws`.
    fn log_rate(&self, y: &[f64], x: &[f64], out: &mut [f64]) {
        let n = self.tensor.actions();
        let inv_r = 1.0 / self.r;
        for (((yr, xr), ar), or) in y
            .chunks_exact(n)
            .zip(x.chunks_exact(n))
            .zip(self.ws.payoffs.chunks_exact(n))
            .zip(out.chunks_exact_mut(n))
        {
            for ((o, y), a) in or.iter_mut().zip(yr).zip(ar) {
                *o = -inv_r * y + a;
            }
            let rho = xr.iter().zip(or.iter()).map(|(x, g)| x * g).sum::<f64>() / n as f64;
            or.iter_mut().for_each(|o| *o -= rho);
        }
    }

    fn stage_rate(&mut self, scale: f64, from: usize, into: usize) -> Result<()> {
        for ((s, y), k) in self.stage.iter_mut().zip(&self.y).zip(&self.k[from]) {
            *s = y + scale * k;
        }
        for (sx, s) in self.stage_x.iter_mut().zip(&self.stage) {
            *sx = s.exp();
        }
        self.ws.evaluate(self.tensor, &self.stage_x)?;
        let mut out = std::mem::take(&mut self.k[into]);
        self.log_rate(&self.stage, &self.stage_x, &mut out);
        self.k[into] = out;
        Ok(())
    }
}

impl Dynamics for FlowStepper<'_> {
    fn step(&mut self) -> Result<()> {
        let h = self.h;
        if !self.payoffs_fresh {
            self.ws.evaluate(self.tensor, &self.x)?;
        }
        let mut k0 = std::mem::take(&mut self.k[0]);
        self.log_rate(&self.y, &self.x, &mut k0);
        self.k[0] = k0;
        self.stage_rate(0.5 * h, 0, 1)?;
        self.stage_rate(0.5 * h, 1, 2)?;
        self.stage_rate(h, 2, 3)?;
        for (i, y) in self.y.iter_mut().enumerate() {
            *y += h / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
        }
        project_log_rows(&mut self.y, self.tensor.actions());
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration { last_time: self.time() });
        }
        for (x, y) in self.x.iter_mut().zip(&self.y) {
            *x = y.exp();
        }
        self.payoffs_fresh = false;
        self.steps += 1;
        Ok(())
    }

    fn state(&self) -> &[f64] {
        &self.x
    }

    fn time(&self) -> f64 {
        self.steps as f64 * self.h
    }

    fn total_payoff(&mut self) -> Result<f64> {
        if !self.payoffs_fresh {
            self.ws.evaluate(self.tensor, &self.x)?;
            self.payoffs_fresh = true;
        }
        Ok(total_payoff(&self.x, &self.ws.payoffs, self.tensor.actions()))
    }

    fn profile(&self) -> StrategyProfile {
        profile_from_state(self.tensor, &self.x)
    }
}

/// Integrate the continuous-time flow from `profile` up to time `horizon`
/// with fixed step `step` (the last step lands exactly on a multiple of `step`
/// at or beyond `horizon`).
pub fn integrate_sc(
    tensor: &PayoffTensor,
    profile: &StrategyProfile,
    r: f64,
    horizon: f64,
    step: f64,
    sampling: &Sampling,
) -> Result<Trajectory> {
    if !(horizon > 0.0) {
        return Err(Error::Contract(format!("horizon = {horizon} must be positive")));
    }
    let mut stepper = FlowStepper::new(tensor, r, step, profile)?;
    let steps = (horizon / step - 1e-9).ceil().max(1.0) as u64;
    let kind = RunKind::Flow { r, step, horizon };
    Trajectory::record(&mut stepper, *tensor.params(), kind, steps, sampling)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ewa_step, init_random};
    use crate::ensemble::GameParams;

    #[test]
    fn uniform_profile_of_zero_game_is_stationary() {
        let params = GameParams::new(3, 4, 0.1, 0.1, 0.0, 0).unwrap();
        let t = PayoffTensor::zeros(&params).unwrap();
        let d = sc_derivative(&t, &StrategyProfile::uniform(3, 4), 2.0).unwrap();
        assert!(d.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn derivative_rows_sum_to_zero() {
        let params = GameParams::new(3, 5, 0.1, 0.1, -0.5, 1).unwrap();
        let t = PayoffTensor::generate(&params).unwrap();
        for seed in 0..10 {
            let x = init_random(&params, seed);
            let d = sc_derivative(&t, &x, 0.7).unwrap();
            for row in d.chunks_exact(5) {
                assert!(row.iter().sum::<f64>().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_matching_game_has_uniform_rest_point() {
        // Pi^1 = Pi^2 = [[0, 1], [1, 0]]: at x = (1, 1) both actions earn 1.
        let params = GameParams::new(2, 2, 0.1, 0.1, 1.0, 0).unwrap();
        let table = vec![0.0, 1.0, 1.0, 0.0];
        let t = PayoffTensor::from_tables(&params, vec![table.clone(), table]).unwrap();
        let d = sc_derivative(&t, &StrategyProfile::uniform(2, 2), 1.3).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn rejects_nonpositive_r() {
        let params = GameParams::new(2, 2, 0.1, 0.1, 0.0, 0).unwrap();
        let t = PayoffTensor::zeros(&params).unwrap();
        assert!(sc_derivative(&t, &StrategyProfile::uniform(2, 2), 0.0).is_err());
    }

    #[test]
    fn zero_game_flows_to_uniform() {
        let params = GameParams::new(2, 6, 0.1, 0.1, 0.0, 0).unwrap();
        let t = PayoffTensor::zeros(&params).unwrap();
        let r = 0.8;
        let traj = integrate_sc(&t, &init_random(&params, 5), r, 50.0 * r, 0.05, &Sampling::every(100)).unwrap();
        assert!(traj.final_state.as_slice().iter().all(|v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn rest_point_is_preserved() {
        let params = GameParams::new(2, 2, 0.1, 0.1, 1.0, 0).unwrap();
        let table = vec![0.0, 1.0, 1.0, 0.0];
        let t = PayoffTensor::from_tables(&params, vec![table.clone(), table]).unwrap();
        let traj = integrate_sc(&t, &StrategyProfile::uniform(2, 2), 1.0, 20.0, 0.1, &Sampling::every(1)).unwrap();
        for sample in &traj.samples {
            assert!(sample.iter().all(|v| (v - 1.0).abs() < 1e-10 * 20.0));
        }
    }

    #[test]
    fn map_fixed_points_are_flow_rest_points() {
        // Both pictures share the rest-point equation -(1/r) ln x + a - rho = 0.
        let params = GameParams::new(2, 12, 0.4, 0.05, -0.5, 21).unwrap();
        let t = PayoffTensor::generate(&params).unwrap();
        let mut x = init_random(&params, 3);
        for _ in 0..3000 {
            x = ewa_step(&t, &x).unwrap();
        }
        let d = sc_derivative(&t, &x, params.r().unwrap()).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-10), "{d:?}");
    }
}
