use super::{project_log_rows, total_payoff, Dynamics, PayoffWorkspace, StrategyProfile};
use super::trajectory::{RunKind, Sampling, Trajectory};
use crate::ensemble::PayoffTensor;
use crate::error::{Error, Result};

/// Iterates `x(t+1) ∝ x(t)^(1-alpha) exp(beta a(x(t)))` with every row
/// renormalized to sum to `N`.
///
/// The state is carried in log-coordinates, so components may become
/// arbitrarily small without reaching zero.
#[derive(Clone, Debug)]
pub struct MapStepper<'a> {
    tensor: &'a PayoffTensor,
    alpha: f64,
    beta: f64,
    log_x: Vec<f64>,
    x: Vec<f64>,
    ws: PayoffWorkspace,
    payoffs_fresh: bool,
    steps: u64,
}

impl<'a> MapStepper<'a> {
    pub fn new(tensor: &'a PayoffTensor, alpha: f64, beta: f64, start: &StrategyProfile) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) || !(beta >= 0.0) {
            return Err(Error::Contract(format!("alpha = {alpha}, beta = {beta} out of range")));
        }
        check_shape(tensor, start)?;
        let x = start.as_slice().to_vec();
        let log_x = x.iter().map(|v| v.ln()).collect();
        Ok(Self {
            tensor,
            alpha,
            beta,
            log_x,
            x,
            ws: PayoffWorkspace::new(tensor.players(), tensor.actions()),
            payoffs_fresh: false,
            steps: 0,
        })
    }

    pub fn log_state(&self) -> &[f64] {
        &self.log_x
    }

    fn refresh_payoffs(&mut self) -> Result<()> {
        if !self.payoffs_fresh {
            self.ws.evaluate(self.tensor, &self.x)?;
            self.payoffs_fresh = true;
        }
        Ok(())
    }
}

impl Dynamics for MapStepper<'_> {
    fn step(&mut self) -> Result<()> {
        self.refresh_payoffs()?;
        let keep = 1.0 - self.alpha;
        for (y, a) in self.log_x.iter_mut().zip(&self.ws.payoffs) {
            *y = keep * *y + self.beta * a;
        }
        project_log_rows(&mut self.log_x, self.tensor.actions());
        if self.log_x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration { last_time: self.steps as f64 });
        }
        for (x, y) in self.x.iter_mut().zip(&self.log_x) {
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
        self.steps as f64
    }

    fn total_payoff(&mut self) -> Result<f64> {
        self.refresh_payoffs()?;
        Ok(total_payoff(&self.x, &self.ws.payoffs, self.tensor.actions()))
    }

    fn profile(&self) -> StrategyProfile {
        profile_from_state(self.tensor, &self.x)
    }
}

pub(super) fn check_shape(tensor: &PayoffTensor, profile: &StrategyProfile) -> Result<()> {
    if profile.players() != tensor.players() || profile.actions() != tensor.actions() {
        return Err(Error::Contract(format!(
            "profile is {}x{}, game is {}x{}",
            profile.players(),
            profile.actions(),
            tensor.players(),
            tensor.actions()
        )));
    }
    Ok(())
}

/// Profile for a stepper state. Components whose log-coordinate lies below
/// the smallest positive double are reported as that value; the row sums are
/// unaffected at any meaningful precision.
pub(super) fn profile_from_state(tensor: &PayoffTensor, x: &[f64]) -> StrategyProfile {
    let (p, n) = (tensor.players(), tensor.actions());
    let x = x.iter().map(|v| v.max(f64::MIN_POSITIVE)).collect();
    StrategyProfile::new(p, n, x).expect("stepper state is finite and normalized")
}

/// One step of the discrete learning map with the tensor's `alpha` and `beta`.
pub fn ewa_step(tensor: &PayoffTensor, profile: &StrategyProfile) -> Result<StrategyProfile> {
    let params = tensor.params();
    let mut stepper = MapStepper::new(tensor, params.alpha, params.beta, profile)?;
    stepper.step()?;
    Ok(stepper.profile())
}

/// Iterate the map for `steps` steps, sampling according to `sampling`.
pub fn run_map(
    tensor: &PayoffTensor,
    profile: &StrategyProfile,
    steps: u64,
    sampling: &Sampling,
) -> Result<Trajectory> {
    let params = *tensor.params();
    let mut stepper = MapStepper::new(tensor, params.alpha, params.beta, profile)?;
    let kind = RunKind::Map { alpha: params.alpha, beta: params.beta, steps };
    Trajectory::record(&mut stepper, params, kind, steps, sampling)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::init_random;
    use crate::ensemble::GameParams;

    #[test]
    fn zero_payoffs_full_memory_loss_gives_uniform() {
        let params = GameParams::new(2, 4, 1.0, 0.3, 0.0, 0).unwrap();
        let t = PayoffTensor::zeros(&params).unwrap();
        let x0 = init_random(&params, 8);
        let x1 = ewa_step(&t, &x0).unwrap();
        for v in x1.as_slice() {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_payoffs_no_memory_loss_is_identity() {
        let params = GameParams::new(3, 3, 0.0, 0.3, 0.0, 0).unwrap();
        let t = PayoffTensor::zeros(&params).unwrap();
        let x0 = init_random(&params, 9);
        let x1 = ewa_step(&t, &x0).unwrap();
        for (a, b) in x0.as_slice().iter().zip(x1.as_slice()) {
            assert!((a - b).abs() < 1e-13 * a.max(1.0));
        }
    }

    #[test]
    fn zero_intensity_relaxes_to_uniform() {
        let params = GameParams::new(2, 5, 0.2, 0.0, -0.5, 3).unwrap();
        let t = PayoffTensor::generate(&params).unwrap();
        let mut x = init_random(&params, 1);
        for _ in 0..400 {
            x = ewa_step(&t, &x).unwrap();
        }
        assert!(x.as_slice().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rows_stay_normalized_and_positive() {
        let params = GameParams::new(3, 6, 0.01, 0.5, -0.5, 4).unwrap();
        let t = PayoffTensor::generate(&params).unwrap();
        let mut stepper = MapStepper::new(&t, 0.01, 0.5, &init_random(&params, 2)).unwrap();
        for _ in 0..2000 {
            stepper.step().unwrap();
            for row in stepper.state().chunks_exact(6) {
                let s: f64 = row.iter().sum();
                assert!((s - 6.0).abs() < 1e-9 * 6.0);
            }
            // Positivity lives in the log-coordinates; linear values may underflow.
            assert!(stepper.log_state().iter().all(|y| y.is_finite()));
            assert!(stepper.profile().as_slice().iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let params = GameParams::new(2, 3, 0.1, 0.1, 0.0, 0).unwrap();
        let t = PayoffTensor::zeros(&params).unwrap();
        assert!(matches!(ewa_step(&t, &StrategyProfile::uniform(2, 4)), Err(Error::Contract(_))));
    }
}
