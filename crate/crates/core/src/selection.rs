//! Choosing the TD(λ) trace parameter from a single trajectory.
//!
//! For every λ on a grid the TD(λ) estimate is computed on one shared
//! trajectory, and an upper bound on its squared `L²(ξ)` distance to the true
//! value function is estimated by plug-in:
//!
//! `c α(M̂_λ, z_λ) · prior + c (β²σ̄²d(t + 1/(1−γλ)) / (μ²(1−κ_λ)²(1−γλ)²n))^{4/3} ln²n
//!  + (c/n) tr((I − M̂_λ)⁻¹(Σ̂_Mkv + Σ̂_MG)(I − M̂_λ)⁻ᵀ)`
//!
//! with `z_λ = (1−λ)γ/(1−λγ)`. The grid point with the smallest estimate wins;
//! ties go to the smaller λ.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;


use crate::diagnostics::psd_part;
use crate::engine::{sa_run_stream, SAConfig};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{ObservationModel, TdInstance, TdLambdaModel};
use crate::rng::{self, categorical, unit_uniform, SQRT3};
use crate::{Error, Result};

const TIE_TOL: f64 = 1e-12;

/// `α(M, z) = 1 + λ_max((I − M)⁻¹(z²I − MMᵀ)(I − M)⁻ᵀ)`.
pub fn approximation_factor(m: &Matrix, z: f64) -> Result<f64> {
    let d = m.nrows();
    let inner = Matrix::identity(d, d) * (z * z) - m * m.transpose();
    Ok(1.0 + linalg::lambda_max_sym(&linalg::resolvent_sandwich(m, &inner)?))
}

/// `z_λ = (1 − λ)γ / (1 − λγ)`, which also bounds `κ_λ`.
pub fn contraction_level(gamma: f64, lambda: f64) -> f64 {
    (1.0 - lambda) * gamma / (1.0 - lambda * gamma)
}

/// `M_λ = (1 − λ)γ B^{−1/2} ΦᵀD P(I − λγP)⁻¹ Φ B^{−1/2}`.
pub fn m_lambda(inst: &TdInstance, lambda: f64) -> Result<Matrix> {
    let s = inst.num_states();
    let c = inst.gamma() * lambda;
    let p = inst.kernel().probs();
    let res = linalg::inverse(&(Matrix::identity(s, s) - p * c))?;
    let w = linalg::inv_sqrt_spd(inst.b_matrix())?;
    let phi = inst.features();
    let core = phi.transpose() * Matrix::from_diagonal(inst.stationary().weights()) * p * res * phi;
    Ok(&w * core * &w * ((1.0 - lambda) * inst.gamma()))
}

pub fn build_m_lambda(model: &TdLambdaModel) -> Result<Matrix> {
    m_lambda(model.instance(), model.lambda())
}

/// `½ λ_max(M + Mᵀ)`.
pub fn kappa_of(m: &Matrix) -> f64 {
    0.5 * linalg::lambda_max_sym(&(m + m.transpose()))
}

/// Uniform grid `{0, γ/(m−1), …, γ}`.
pub fn default_grid(gamma: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return alloc::vec![0.0];
    }
    (0..points).map(|i| gamma * i as f64 / (points - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaCandidate {
    pub lambda: f64,
    pub m_lambda: Matrix,
    pub kappa: f64,
    pub alpha: f64,
    pub est_cov_trace: f64,
    pub higher_order: f64,
    pub total_error: f64,
    pub stepsize: f64,
    pub theta_hat: Option<Vector>,
    /// Set when this candidate could not be evaluated.
    pub failure: Option<String>,
}

impl LambdaCandidate {
    fn failed(lambda: f64, d: usize, err: &Error) -> Self {
        LambdaCandidate {
            lambda,
            m_lambda: Matrix::zeros(d, d),
            kappa: f64::NAN,
            alpha: f64::NAN,
            est_cov_trace: f64::NAN,
            higher_order: f64::NAN,
            total_error: f64::INFINITY,
            stepsize: f64::NAN,
            theta_hat: None,
            failure: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    pub grid: Vec<f64>,
    pub horizon: usize,
    pub seed: u64,
    /// Prior guess of `inf_V ‖V − V*‖²` over the feature span.
    pub approx_error_prior: f64,
    /// Constant `c` of the error bound.
    pub c: f64,
    /// Constant `c` of the stepsize rule.
    pub stepsize_c: f64,
    /// Mixing time assumed for the pair chain; the instance's when `None`.
    pub t_mix: Option<usize>,
}

impl SelectionConfig {
    pub fn new(grid: Vec<f64>, horizon: usize, seed: u64, approx_error_prior: f64) -> Self {
        SelectionConfig {
            grid,
            horizon,
            seed,
            approx_error_prior,
            c: 1.0,
            stepsize_c: 1.0,
            t_mix: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub selected: Option<usize>,
    pub candidates: Vec<LambdaCandidate>,
}

impl Selection {
    pub fn selected_lambda(&self) -> Option<f64> {
        self.selected.map(|i| self.candidates[i].lambda)
    }
}

/// Argmin of `total_error` among evaluated candidates, ties to smaller λ.
pub fn pick(candidates: &[LambdaCandidate]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        if c.failure.is_some() || !c.total_error.is_finite() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(j) => {
                let b = &candidates[j];
                let tol = TIE_TOL * b.total_error.abs().max(c.total_error.abs());
                if c.total_error < b.total_error - tol {
                    Some(i)
                } else if (c.total_error - b.total_error).abs() <= tol && c.lambda < b.lambda {
                    Some(i)
                } else {
                    Some(j)
                }
            }
        };
    }
    best
}

/// One shared trajectory `s_0, …, s_n` with noisy rewards `R_0, …, R_{n−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedTrajectory {
    pub states: Vec<usize>,
    pub rewards: Vec<f64>,
}

pub fn sample_shared(inst: &TdInstance, n: usize, seed: u64) -> SharedTrajectory {
    let mut r = rng::stream(seed);
    let mut acc = 0.0;
    let cum: Vec<f64> = inst
        .stationary()
        .weights()
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    let mut states = Vec::with_capacity(n + 1);
    let mut rewards = Vec::with_capacity(n);
    let mut s = categorical(&mut r, &cum);
    states.push(s);
    let h = inst.reward_half_width();
    for _ in 0..n {
        let noise = if h > 0.0 { unit_uniform(&mut r) * (h / SQRT3) } else { 0.0 };
        rewards.push(inst.rewards()[s] + noise);
        s = inst.kernel().next_state(&mut r, s);
        states.push(s);
    }
    SharedTrajectory { states, rewards }
}

struct BoundInputs {
    beta: f64,
    mu: f64,
    sigma_bar_sq: f64,
    dim: usize,
    t_eff: f64,
    decay: f64,
    kappa: f64,
    n: usize,
}

/// `(β²σ̄²d(t + 1/(1−γλ)) / (μ²(1−κ)²(1−γλ)²n))^{4/3} ln²n`, without `c`.
fn higher_order_term(b: &BoundInputs) -> f64 {
    let one_c = 1.0 - b.decay;
    let one_k = 1.0 - b.kappa;
    let nf = b.n as f64;
    let inner = b.beta * b.beta * b.sigma_bar_sq * b.dim as f64 * (b.t_eff + 1.0 / one_c)
        / (b.mu * b.mu * one_k * one_k * one_c * one_c * nf);
    let ln_n = nf.ln();
    inner.max(0.0).powf(4.0 / 3.0) * ln_n * ln_n
}

/// Stepsize for the ν-normalized recursion:
/// `(1−γλ)^{2/3} / (c((ς⁴+1) d (1−κ_λ) n² (t + 1/(1−γλ))))^{1/3}`.
pub fn tdlambda_stepsize(c: f64, varsigma4: f64, dim: usize, kappa: f64, n: usize, t_mix: usize, decay: f64) -> f64 {
    let nf = n as f64;
    let one_c = 1.0 - decay;
    one_c.powf(2.0 / 3.0)
        / (c * (varsigma4 + 1.0) * dim as f64 * (1.0 - kappa) * nf * nf * (t_mix as f64 + 1.0 / one_c)).cbrt()
}

/// Plug-in evaluation of a single λ on the shared trajectory.
pub fn evaluate_candidate(
    inst: &TdInstance,
    traj: &SharedTrajectory,
    lambda: f64,
    config: &SelectionConfig,
) -> Result<LambdaCandidate> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} outside [0, 1)")));
    }
    let n = traj.rewards.len();
    let d = inst.dim();
    let gamma = inst.gamma();
    let decay = gamma * lambda;
    let phi = |s: usize| inst.feature(s);

    // Empirical feature moments and TD(λ) operator.
    let mut b_hat = Matrix::zeros(d, d);
    let mut k_hat = Matrix::zeros(d, d);
    let mut traces = Vec::with_capacity(n);
    let mut g = Vector::zeros(d);
    for t in 0..n {
        let (s, s_next) = (traj.states[t], traj.states[t + 1]);
        g *= decay;
        g += phi(s);
        b_hat.ger(1.0, phi(s), phi(s), 1.0);
        let psi = phi(s) - phi(s_next) * gamma;
        k_hat.ger(1.0, &g, &psi, 1.0);
        traces.push(g.clone());
    }
    b_hat = linalg::symmetrize(&(b_hat / n as f64));
    k_hat /= n as f64;
    let w = linalg::inv_sqrt_spd(&b_hat)?;
    let beta = linalg::lambda_max_sym(&b_hat);
    let mu = linalg::lambda_min_sym(&b_hat);
    let nu = 1.0 / beta;
    let m_hat = Matrix::identity(d, d) - &w * &k_hat * &w;
    let kappa = kappa_of(&m_hat);
    let varsigma4 = (0..inst.num_states())
        .filter(|s| traj.states.contains(s))
        .map(|s| (&w * phi(s)).norm_squared())
        .fold(0.0, f64::max);
    let t_base = config.t_mix.unwrap_or(inst.pair_mixing_time());
    let t_eff = t_base + (decay / (1.0 - decay)).ceil() as usize;

    let stepsize = tdlambda_stepsize(config.stepsize_c, varsigma4, d, kappa.min(1.0 - 1e-12), n, t_base, decay);
    let cfg = SAConfig::new(stepsize, n / 2, n, config.seed);
    let mut t = 0;
    let run = sa_run_stream(
        d,
        &cfg,
        |obs| {
            let (s, s_next) = (traj.states[t], traj.states[t + 1]);
            let gt = &traces[t];
            obs.l.fill_with_identity();
            obs.l.ger(-nu, gt, phi(s), 1.0);
            obs.l.ger(nu * gamma, gt, phi(s_next), 1.0);
            obs.b.copy_from(gt);
            obs.b *= nu * traj.rewards[t];
            obs.state = None;
            t += 1;
        },
        |_, _, _| {},
    )?;
    let theta = run.average;

    // Residual split: reward noise against the per-state mean reward.
    let s_n = inst.num_states();
    let mut r_sum = alloc::vec![0.0; s_n];
    let mut r_cnt = alloc::vec![0usize; s_n];
    for t in 0..n {
        r_sum[traj.states[t]] += traj.rewards[t];
        r_cnt[traj.states[t]] += 1;
    }
    let r_hat: Vec<f64> = r_sum.iter().zip(&r_cnt).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect();
    let mut mg = Matrix::zeros(d, d);
    let mut drift = Vec::with_capacity(n);
    let mut fourth = 0.0;
    for t in 0..n {
        let (s, s_next) = (traj.states[t], traj.states[t + 1]);
        let wg = &w * &traces[t];
        let noise = traj.rewards[t] - r_hat[s];
        mg.ger(noise * noise, &wg, &wg, 1.0);
        let td = r_hat[s] - phi(s).dot(&theta) + gamma * phi(s_next).dot(&theta);
        drift.push(wg * td);
        let full = td + noise;
        fourth += full.powi(4);
    }
    mg /= n as f64;
    let mkv = long_run_centered(&drift, crate::diagnostics::lag_window(t_eff, n));
    let sigma = psd_part(&mg) + psd_part(&mkv);
    let est_cov_trace = linalg::resolvent_trace(&m_hat, &sigma)?;
    let alpha = approximation_factor(&m_hat, contraction_level(gamma, lambda))?;
    let sigma_bar_sq = varsigma4.sqrt() * (fourth / n as f64).sqrt();
    let higher = higher_order_term(&BoundInputs {
        beta,
        mu,
        sigma_bar_sq,
        dim: d,
        t_eff: t_base as f64,
        decay,
        kappa,
        n,
    });
    let c = config.c;
    let total_error = c * alpha * config.approx_error_prior + c * higher + c * est_cov_trace / n as f64;
    Ok(LambdaCandidate {
        lambda,
        m_lambda: m_hat,
        kappa,
        alpha,
        est_cov_trace,
        higher_order: c * higher,
        total_error,
        stepsize,
        theta_hat: Some(theta),
        failure: None,
    })
}

fn long_run_centered(u: &[Vector], w: usize) -> Matrix {
    let n = u.len();
    let d = u[0].len();
    let mean = u.iter().fold(Vector::zeros(d), |a, v| a + v) / n as f64;
    let c: Vec<Vector> = u.iter().map(|v| v - &mean).collect();
    let mut total = Matrix::zeros(d, d);
    for k in 0..=w.min(n - 1) {
        let mut ck = Matrix::zeros(d, d);
        for t in 0..n - k {
            ck.ger(1.0, &c[t + k], &c[t], 1.0);
        }
        ck /= n as f64;
        if k == 0 {
            total += ck;
        } else {
            total += &ck + ck.transpose();
        }
    }
    linalg::symmetrize(&total)
}

/// Runs the plug-in recipe on every grid point.
pub fn select_lambda(inst: &TdInstance, config: &SelectionConfig) -> Result<Selection> {
    if config.grid.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    if config.horizon < 2 {
        return Err(Error::InvalidArgument("selection needs a horizon of at least 2".into()));
    }
    let traj = sample_shared(inst, config.horizon, config.seed);
    let candidates: Vec<LambdaCandidate> = config
        .grid
        .iter()
        .map(|&l| {
            evaluate_candidate(inst, &traj, l, config).unwrap_or_else(|e| LambdaCandidate::failed(l, inst.dim(), &e))
        })
        .collect();
    Ok(Selection {
        selected: pick(&candidates),
        candidates,
    })
}

/// The same objective with every plug-in replaced by its exact value.
pub fn evaluate_exact(inst: &TdInstance, lambda: f64, n: usize, approx_error_prior: f64, c: f64) -> Result<LambdaCandidate> {
    let model = TdLambdaModel::new(inst.clone(), lambda)?;
    let d = inst.dim();
    let decay = model.trace_decay();
    let m = m_lambda(inst, lambda)?;
    let kappa = kappa_of(&m);
    let theta = model.fixed_point()?;
    let mom = model.moments(&theta)?;
    // Moments carry ν²; the objective is stated in B-whitened coordinates.
    let w = linalg::inv_sqrt_spd(inst.b_matrix())?;
    let scale = 1.0 / (inst.nu() * inst.nu());
    let sigma = &w * (&mom.sigma_mg + &mom.sigma_mkv) * &w * scale;
    let est_cov_trace = linalg::resolvent_trace(&m, &sigma)?;
    let alpha = approximation_factor(&m, contraction_level(inst.gamma(), lambda))?;
    let varsigma4 = (0..inst.num_states())
        .map(|s| (&w * inst.feature(s)).norm_squared())
        .fold(0.0, f64::max);
    // E[(ψᵀθ − R)⁴] with R = r + w, w uniform on [−h, h].
    let (p, xi) = (inst.kernel().probs(), inst.stationary().weights());
    let v = inst.reward_variance();
    let h = inst.reward_half_width();
    let mut fourth = 0.0;
    for s in 0..inst.num_states() {
        for t in 0..inst.num_states() {
            let a = inst.feature(s).dot(&theta) - inst.gamma() * inst.feature(t).dot(&theta) - inst.rewards()[s];
            fourth += xi[s] * p[(s, t)] * (a.powi(4) + 6.0 * a * a * v + h.powi(4) / 5.0);
        }
    }
    let higher = higher_order_term(&BoundInputs {
        beta: inst.beta(),
        mu: inst.mu(),
        sigma_bar_sq: varsigma4.sqrt() * fourth.sqrt(),
        dim: d,
        t_eff: inst.pair_mixing_time() as f64,
        decay,
        kappa,
        n,
    });
    Ok(LambdaCandidate {
        lambda,
        m_lambda: m,
        kappa,
        alpha,
        est_cov_trace,
        higher_order: c * higher,
        total_error: c * alpha * approx_error_prior + c * higher + c * est_cov_trace / n as f64,
        stepsize: f64::NAN,
        theta_hat: Some(theta),
        failure: None,
    })
}

/// Exact-quantity counterpart of [`select_lambda`].
pub fn select_lambda_exact(inst: &TdInstance, grid: &[f64], n: usize, approx_error_prior: f64, c: f64) -> Selection {
    let candidates: Vec<LambdaCandidate> = grid
        .iter()
        .map(|&l| {
            evaluate_exact(inst, l, n, approx_error_prior, c)
                .unwrap_or_else(|e| LambdaCandidate::failed(l, inst.dim(), &e))
        })
        .collect();
    Selection {
        selected: pick(&candidates),
        candidates,
    }
}
