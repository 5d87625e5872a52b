//! Constant-stepsize stochastic approximation with Polyak–Ruppert averaging.
//!
//! The recursion is `θ_{t+1} = (1 − η)θ_t + η(L_{t+1}θ_t + b_{t+1})`, whose
//! attractor is the solution of `θ = L̄θ + b̄`. The averaged estimate is the
//! mean of `θ_{n₀}, …, θ_{n−1}`.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::vec::Vec;


use crate::linalg::{self, Matrix, Vector};
use crate::model::{Observation, ObservationModel, TabularModel};
use crate::{Error, Result};

pub const DEFAULT_GUARD: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct SAConfig {
    pub stepsize: f64,
    pub burn_in: usize,
    pub horizon: usize,
    pub seed: u64,
    pub record_iterates: bool,
    /// Initial iterate; zero when `None`.
    pub theta0: Option<Vector>,
    /// Blow-up threshold on `‖θ_t‖₂`.
    pub guard: f64,
}

impl SAConfig {
    pub fn new(stepsize: f64, burn_in: usize, horizon: usize, seed: u64) -> Self {
        SAConfig {
            stepsize,
            burn_in,
            horizon,
            seed,
            record_iterates: false,
            theta0: None,
            guard: DEFAULT_GUARD,
        }
    }

    pub fn from_schedule(schedule: &Schedule, horizon: usize, seed: u64) -> Self {
        Self::new(schedule.stepsize, schedule.burn_in, horizon, seed)
    }

    pub fn recording(mut self) -> Self {
        self.record_iterates = true;
        self
    }

    pub fn with_theta0(mut self, theta0: Vector) -> Self {
        self.theta0 = Some(theta0);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stepsize > 0.0 && self.stepsize < 1.0) {
            return Err(Error::InvalidArgument(format!("stepsize {} outside (0, 1)", self.stepsize)));
        }
        if self.burn_in >= self.horizon {
            return Err(Error::InvalidArgument(format!(
                "burn-in {} must be below the horizon {}",
                self.burn_in, self.horizon
            )));
        }
        if !(self.guard > 0.0) {
            return Err(Error::InvalidArgument("blow-up guard must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SATrace {
    pub last_iterate: Vector,
    pub average: Vector,
    /// `θ_0, …, θ_n` when recording was requested.
    pub history: Option<Vec<Vector>>,
    pub seed: u64,
    pub burn_in: usize,
    pub horizon: usize,
}

impl SATrace {
    /// `Δ_t = θ_t − θ̄`, available when the history was recorded.
    pub fn delta(&self, t: usize, theta_bar: &Vector) -> Option<Vector> {
        self.history.as_ref().and_then(|h| h.get(t)).map(|th| th - theta_bar)
    }
}

/// Runs the recursion on an arbitrary observation stream. `next` fills the
/// observation for step `t + 1`; `observer` sees every new iterate.
pub fn sa_run_stream<N, O>(dim: usize, config: &SAConfig, mut next: N, mut observer: O) -> Result<SATrace>
where
    N: FnMut(&mut Observation),
    O: FnMut(usize, &Vector, &Observation),
{
    config.validate()?;
    let mut theta = match &config.theta0 {
        Some(t) if t.len() == dim => t.clone(),
        Some(t) => {
            return Err(Error::DimensionMismatch(format!("theta0 has length {}, model has {dim}", t.len())));
        }
        None => Vector::zeros(dim),
    };
    let eta = config.stepsize;
    let mut obs = Observation::zeros(dim);
    let mut sum = Vector::zeros(dim);
    let mut tmp = Vector::zeros(dim);
    let mut history = config.record_iterates.then(|| {
        let mut h = Vec::with_capacity(config.horizon + 1);
        h.push(theta.clone());
        h
    });
    for t in 0..config.horizon {
        if t >= config.burn_in {
            sum += &theta;
        }
        next(&mut obs);
        tmp.copy_from(&obs.b);
        tmp.gemv(1.0, &obs.l, &theta, 1.0);
        theta *= 1.0 - eta;
        theta.axpy(eta, &tmp, 1.0);
        let norm = theta.norm();
        if !(norm <= config.guard) {
            return Err(Error::NumericalBlowup {
                step: t + 1,
                guard: config.guard,
            });
        }
        observer(t + 1, &theta, &obs);
        if let Some(h) = history.as_mut() {
            h.push(theta.clone());
        }
    }
    let average = sum / (config.horizon - config.burn_in) as f64;
    Ok(SATrace {
        last_iterate: theta,
        average,
        history,
        seed: config.seed,
        burn_in: config.burn_in,
        horizon: config.horizon,
    })
}

/// Runs the recursion along one trajectory of `model` seeded by `config.seed`.
pub fn sa_run<M: ObservationModel>(model: &M, config: &SAConfig) -> Result<SATrace> {
    sa_run_observed(model, config, |_, _, _| {})
}

pub fn sa_run_observed<M, O>(model: &M, config: &SAConfig, observer: O) -> Result<SATrace>
where
    M: ObservationModel,
    O: FnMut(usize, &Vector, &Observation),
{
    let mut cursor = model.start(config.seed);
    sa_run_stream(model.dim(), config, |obs| model.observe(&mut cursor, obs), observer)
}

/// `θ̄ = (I − L̄)⁻¹ b̄`.
pub fn solve_fixed_point(l_bar: &Matrix, b_bar: &Vector) -> Result<Vector> {
    if !l_bar.is_square() || l_bar.nrows() != b_bar.len() {
        return Err(Error::DimensionMismatch(format!(
            "L is {}x{}, b has length {}",
            l_bar.nrows(),
            l_bar.ncols(),
            b_bar.len()
        )));
    }
    let d = b_bar.len();
    let a = Matrix::identity(d, d) - l_bar;
    let theta = linalg::solve_vec(&a, b_bar)?;
    // One refinement step keeps the residual at rounding level.
    let resid = b_bar - &a * &theta;
    let theta = theta + linalg::solve_vec(&a, &resid)?;
    Ok(theta)
}

/// Problem-scale constants entering the stepsize choice and the bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceConstants {
    /// `½ λ_max(L̄ + L̄ᵀ)`.
    pub kappa: f64,
    /// `‖L̄‖_op`.
    pub gamma_max: f64,
    pub sigma_l: f64,
    pub sigma_b: f64,
    pub sigma_bar: f64,
    pub dim: usize,
    pub t_mix: usize,
    pub sigma_l_moment: f64,
    pub sigma_b_moment: f64,
    /// Lipschitz forms under the discrete metric; absent for models without a
    /// finite state space.
    pub sigma_l_lipschitz: Option<f64>,
    pub sigma_b_lipschitz: Option<f64>,
}

impl InstanceConstants {
    /// Constants from moment-only noise scales.
    pub fn from_parts(l_bar: &Matrix, sigma_l: f64, sigma_b: f64, sigma_bar: f64, t_mix: usize) -> Result<Self> {
        let kappa = 0.5 * linalg::lambda_max_sym(&(l_bar + l_bar.transpose()));
        if !(kappa < 1.0) {
            return Err(Error::Unstable { kappa });
        }
        Ok(InstanceConstants {
            kappa,
            gamma_max: linalg::op_norm(l_bar),
            sigma_l,
            sigma_b,
            sigma_bar,
            dim: l_bar.nrows(),
            t_mix,
            sigma_l_moment: sigma_l,
            sigma_b_moment: sigma_b,
            sigma_l_lipschitz: None,
            sigma_b_lipschitz: None,
        })
    }

    /// `σ_L² d + γ_max²`.
    pub fn noise_scale(&self) -> f64 {
        self.sigma_l * self.sigma_l * self.dim as f64 + self.gamma_max * self.gamma_max
    }
}

/// Constants of a finite-state model. `σ_L` and `σ_b` are the larger of the
/// second-moment and discrete-metric Lipschitz values.
pub fn instance_constants(model: &TabularModel) -> Result<InstanceConstants> {
    let d = model.dim();
    let s_n = model.num_states();
    let xi = model.stationary().weights();
    let l_bar = model.mean_l();
    let b_bar = model.mean_b();

    let mut l_moment: f64 = 0.0;
    let mut b_moment: f64 = 0.0;
    for s in 0..s_n {
        let basis = &model.noise()[s];
        for c in basis.row_covariances(d) {
            l_moment = l_moment.max(linalg::lambda_max_sym(&c));
        }
    }
    let mut b_noise = Vector::zeros(d);
    for s in 0..s_n {
        b_noise.axpy(xi[s], &model.noise()[s].b_variances(d), 1.0);
    }
    b_moment = b_moment.max(b_noise.max());
    for j in 0..d {
        let mut c = Matrix::zeros(d, d);
        let mut var_b = 0.0;
        for s in 0..s_n {
            let r = (model.mean_l_at(s).row(j) - l_bar.row(j)).transpose();
            c += &r * r.transpose() * xi[s];
            let e = model.mean_b_at(s)[j] - b_bar[j];
            var_b += xi[s] * e * e;
        }
        l_moment = l_moment.max(linalg::lambda_max_sym(&c));
        b_moment = b_moment.max(var_b);
    }
    let sigma_l_moment = (0.5 * l_moment).sqrt();
    let sigma_b_moment = (0.5 * b_moment).sqrt();

    let mut l_lip: f64 = 0.0;
    let mut b_lip: f64 = 0.0;
    for x in 0..s_n {
        for y in (x + 1)..s_n {
            let (nx, ny) = (&model.noise()[x].terms, &model.noise()[y].terms);
            let mut dl = linalg::op_norm(&(model.mean_l_at(x) - model.mean_l_at(y)));
            let mut db = (model.mean_b_at(x) - model.mean_b_at(y)).norm();
            for k in 0..nx.len().max(ny.len()) {
                let zero_l = Matrix::zeros(d, d);
                let zero_b = Vector::zeros(d);
                let (zx, bx) = nx.get(k).map(|(a, b)| (a, b)).unwrap_or((&zero_l, &zero_b));
                let (zy, by) = ny.get(k).map(|(a, b)| (a, b)).unwrap_or((&zero_l, &zero_b));
                dl += crate::rng::SQRT3 * linalg::op_norm(&(zx - zy));
                db += crate::rng::SQRT3 * (bx - by).norm();
            }
            l_lip = l_lip.max(dl / d as f64);
            b_lip = b_lip.max(db / (d as f64).sqrt());
        }
    }

    let theta = crate::model::ObservationModel::fixed_point(model)?;
    let sigma_bar = crate::diagnostics::effective_noise(model, &theta);
    let mut out = InstanceConstants::from_parts(
        l_bar,
        sigma_l_moment.max(l_lip),
        sigma_b_moment.max(b_lip),
        sigma_bar,
        model.mixing_time(),
    )?;
    out.sigma_l_moment = sigma_l_moment;
    out.sigma_b_moment = sigma_b_moment;
    out.sigma_l_lipschitz = Some(l_lip);
    out.sigma_b_lipschitz = Some(b_lip);
    Ok(out)
}


#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub stepsize: f64,
    pub burn_in: usize,
    /// Whether `n / ln²n ≥ 2 t_mix (σ_L²d + γ_max²) ln d / (1 − κ)²` holds.
    pub sample_size_ok: bool,
}

/// `η = (c (σ_L²d + γ_max²)(1 − κ) n² t_mix)^{−1/3}`, `n₀ = ⌊n/2⌋`.
pub fn theorem1_schedule(c: f64, constants: &InstanceConstants, n: usize) -> Schedule {
    let nf = n as f64;
    let scale = constants.noise_scale();
    let one_minus = 1.0 - constants.kappa;
    let stepsize = 1.0 / (c * scale * one_minus * nf * nf * constants.t_mix as f64).cbrt();
    let ln_n = nf.ln();
    let needed = 2.0 * constants.t_mix as f64 * scale * (constants.dim as f64).ln() / (one_minus * one_minus);
    Schedule {
        stepsize,
        burn_in: n / 2,
        sample_size_ok: nf / (ln_n * ln_n) >= needed,
    }
}

/// Leading and higher-order terms of the averaged-iterate bound:
/// `(c′/n) tr((I − L̄)⁻¹(Σ_MG + Σ_Mkv)(I − L̄)⁻ᵀ)` and
/// `c′ (σ̄² d t_mix / ((1 − κ)² n))^{4/3} ln²n`.
pub fn theorem1_terms(
    constants: &InstanceConstants,
    sigma_mg: &Matrix,
    sigma_mkv: &Matrix,
    l_bar: &Matrix,
    n: usize,
    c_prime: f64,
) -> Result<(f64, f64)> {
    let nf = n as f64;
    let trace = linalg::resolvent_trace(l_bar, &(sigma_mg + sigma_mkv))?;
    let one_minus = 1.0 - constants.kappa;
    let inner = constants.sigma_bar * constants.sigma_bar * constants.dim as f64 * constants.t_mix as f64
        / (one_minus * one_minus * nf);
    let ln_n = nf.ln();
    Ok((c_prime * trace / nf, c_prime * inner.powf(4.0 / 3.0) * ln_n * ln_n))
}

pub fn theorem1_bound(
    constants: &InstanceConstants,
    sigma_mg: &Matrix,
    sigma_mkv: &Matrix,
    l_bar: &Matrix,
    n: usize,
    c_prime: f64,
) -> Result<f64> {
    let (a, b) = theorem1_terms(constants, sigma_mg, sigma_mkv, l_bar, n, c_prime)?;
    Ok(a + b)
}

/// `τ = ⌈2 t_mix ln(d S)⌉`, at least 1.
pub fn default_tau(t_mix: usize, dim: usize, states: usize) -> usize {
    let v = (2.0 * t_mix as f64 * ((dim * states) as f64).ln()).ceil();
    if v < 1.0 {
        1
    } else {
        v as usize
    }
}

/// Last-iterate bound `e^{−½η(1−κ)t}‖Δ₀‖² + c η σ̄² τ d / (1 − κ)`.
pub fn prop1_bound(constants: &InstanceConstants, delta0_norm: f64, eta: f64, tau: usize, t: usize, c: f64) -> f64 {
    let one_minus = 1.0 - constants.kappa;
    let decay = (-0.5 * eta * one_minus * t as f64).exp();
    let plateau = c * eta * constants.sigma_bar * constants.sigma_bar * tau as f64 * constants.dim as f64 / one_minus;
    decay * delta0_norm * delta0_norm + plateau
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::TransitionKernel;
    use crate::model::{NoiseSpec, TabularModel};
    use alloc::vec;
    use approx::assert_relative_eq;

    fn constant_model(l: Matrix, b: Vector) -> TabularModel {
        let k = TransitionKernel::from_rows(&[vec![1.0]]).unwrap();
        TabularModel::new(k, vec![l], vec![b], NoiseSpec::None).unwrap()
    }

    fn constants(kappa: f64, scale: f64, t_mix: usize) -> InstanceConstants {
        InstanceConstants {
            kappa,
            gamma_max: scale.sqrt(),
            sigma_l: 0.0,
            sigma_b: 0.0,
            sigma_bar: 0.0,
            dim: 1,
            t_mix,
            sigma_l_moment: 0.0,
            sigma_b_moment: 0.0,
            sigma_l_lipschitz: None,
            sigma_b_lipschitz: None,
        }
    }

    #[test]
    fn noiseless_contracts_geometrically() {
        let b = Vector::from_vec(vec![1.0, -2.0]);
        let m = constant_model(Matrix::identity(2, 2) * 0.5, b.clone());
        let cfg = SAConfig::new(0.1, 0, 50, 1).recording();
        let tr = sa_run(&m, &cfg).unwrap();
        let theta_bar = &b * 2.0;
        let h = tr.history.unwrap();
        for t in 1..50 {
            let ratio = (&h[t + 1] - &theta_bar).norm() / (&h[t] - &theta_bar).norm();
            assert_relative_eq!(ratio, 0.95, epsilon = 1e-12);
        }
    }

    #[test]
    fn fixed_point_start_stays_put() {
        let b = Vector::from_vec(vec![0.3, 0.7]);
        let m = constant_model(Matrix::zeros(2, 2), b.clone());
        let cfg = SAConfig::new(0.2, 0, 30, 1).with_theta0(b.clone()).recording();
        let tr = sa_run(&m, &cfg).unwrap();
        for th in tr.history.unwrap() {
            assert_relative_eq!(th, b.clone(), epsilon = 1e-15);
        }
    }

    #[test]
    fn average_is_mean_of_history() {
        let m = constant_model(Matrix::identity(1, 1) * 0.5, Vector::from_vec(vec![1.0]));
        let tr = sa_run(&m, &SAConfig::new(0.3, 4, 20, 1).recording()).unwrap();
        let h = tr.history.as_ref().unwrap();
        let mean: f64 = h[4..20].iter().map(|v| v[0]).sum::<f64>() / 16.0;
        assert_relative_eq!(tr.average[0], mean, max_relative = 1e-12);
    }

    #[test]
    fn blowup_detected() {
        let m = constant_model(Matrix::identity(1, 1) * 30.0, Vector::from_vec(vec![1.0]));
        let err = sa_run(&m, &SAConfig::new(0.5, 0, 1000, 1)).unwrap_err();
        assert!(matches!(err, Error::NumericalBlowup { .. }));
    }

    #[test]
    fn invalid_config_rejected() {
        let m = constant_model(Matrix::zeros(1, 1), Vector::from_vec(vec![1.0]));
        assert!(sa_run(&m, &SAConfig::new(1.5, 0, 10, 1)).is_err());
        assert!(sa_run(&m, &SAConfig::new(0.5, 10, 10, 1)).is_err());
    }

    #[test]
    fn fixed_point_examples() {
        let b = Vector::from_vec(vec![1.0, 2.0]);
        assert_eq!(solve_fixed_point(&Matrix::zeros(2, 2), &b).unwrap(), b);
        let s = solve_fixed_point(&Matrix::from_element(1, 1, 0.5), &Vector::from_vec(vec![1.0])).unwrap();
        assert_relative_eq!(s[0], 2.0, epsilon = 1e-15);
        let err = solve_fixed_point(&Matrix::identity(2, 2), &b).unwrap_err();
        assert!(matches!(err, Error::SingularSystem { .. }));
    }

    #[test]
    fn kappa_and_gamma_examples() {
        let c = InstanceConstants::from_parts(&Matrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 0.5]), 0.0, 0.0, 0.0, 1)
            .unwrap();
        assert_relative_eq!(c.kappa, 0.5, epsilon = 1e-15);
        assert_relative_eq!(c.gamma_max, 0.5, epsilon = 1e-15);
        let c = InstanceConstants::from_parts(&Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]), 0.0, 0.0, 0.0, 1)
            .unwrap();
        assert_relative_eq!(c.kappa, 0.5, epsilon = 1e-15);
        assert_relative_eq!(c.gamma_max, 1.0, epsilon = 1e-15);
        let err = InstanceConstants::from_parts(&Matrix::identity(1, 1), 0.0, 0.0, 0.0, 1).unwrap_err();
        assert!(matches!(err, Error::Unstable { .. }));
    }

    #[test]
    fn zero_noise_gives_zero_sigma_bar() {
        let m = constant_model(Matrix::identity(2, 2) * 0.2, Vector::from_vec(vec![1.0, 1.0]));
        let c = instance_constants(&m).unwrap();
        assert_eq!(c.sigma_bar, 0.0);
        assert_eq!(c.sigma_l, 0.0);
    }

    #[test]
    fn schedule_spot_check() {
        let s = theorem1_schedule(1.0, &constants(0.0, 1.0, 1), 1000);
        assert_eq!(s.stepsize, 0.01);
        assert_eq!(s.burn_in, 500);
        let s2 = theorem1_schedule(2.0, &constants(0.0, 1.0, 1), 1000);
        assert_relative_eq!(s2.stepsize / s.stepsize, 2f64.powf(-1.0 / 3.0), epsilon = 1e-14);
    }

    #[test]
    fn theorem1_bound_scaling() {
        let c = constants(0.2, 1.0, 2);
        let l = Matrix::from_element(1, 1, 0.2);
        let s = Matrix::from_element(1, 1, 0.64);
        let (a1, h1) = theorem1_terms(&c, &s, &Matrix::zeros(1, 1), &l, 1000, 1.0).unwrap();
        let (a4, _) = theorem1_terms(&c, &s, &Matrix::zeros(1, 1), &l, 4000, 1.0).unwrap();
        // tr = 0.64 / 0.8² = 1.
        assert_relative_eq!(a1, 1e-3, epsilon = 1e-15);
        assert_relative_eq!(a1 / a4, 4.0, epsilon = 1e-12);
        assert_eq!(h1, 0.0);
    }

    #[test]
    fn prop1_bound_shape() {
        let mut c = constants(0.5, 1.0, 1);
        c.sigma_bar = 1.0;
        let plateau = prop1_bound(&c, 0.0, 0.1, 4, 0, 1.0);
        assert_relative_eq!(prop1_bound(&c, 2.0, 0.1, 4, 0, 1.0), 4.0 + plateau, epsilon = 1e-14);
        assert_relative_eq!(prop1_bound(&c, 0.0, 0.05, 4, 0, 1.0), plateau / 2.0, epsilon = 1e-14);
        // The transient part drops by e after 2/(η(1−κ)) = 40 steps.
        let tr0 = prop1_bound(&c, 1.0, 0.1, 4, 0, 1.0) - plateau;
        let tr40 = prop1_bound(&c, 1.0, 0.1, 4, 40, 1.0) - plateau;
        assert_relative_eq!(tr0 / tr40, core::f64::consts::E, epsilon = 1e-12);
    }
}
