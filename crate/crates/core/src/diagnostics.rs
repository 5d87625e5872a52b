//! Instance-dependent noise functionals.
//!
//! Exact quantities are computed for finite-state models from their tables;
//! plug-in estimates work from a single trajectory of residuals.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::SymmetricEigen;

use crate::engine::{self, InstanceConstants};
use crate::linalg::{self, Matrix, Vector};
use crate::markov::green_apply;
use crate::model::{Observation, ObservationModel, TabularModel};
use crate::{Error, Result};

/// Target for the certified truncation remainder of the lag sum.
pub const MKV_TAIL_TOL: f64 = 1e-10;

/// Per-state drift `ε_Mkv(s) = b(s) + L(s)θ̄ − θ̄` and conditional covariance of
/// `ε_MG(s) = (b₁(s) − b(s)) + (L₁(s) − L(s))θ̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDecomposition {
    pub eps_mkv: Vec<Vector>,
    pub eps_mg_cov: Vec<Matrix>,
}

pub fn noise_decomposition(model: &TabularModel, theta: &Vector) -> NoiseDecomposition {
    let s_n = model.num_states();
    let eps_mkv = (0..s_n)
        .map(|s| model.mean_b_at(s) + model.mean_l_at(s) * theta - theta)
        .collect();
    let eps_mg_cov = (0..s_n).map(|s| model.noise()[s].covariance_at(theta)).collect();
    NoiseDecomposition { eps_mkv, eps_mg_cov }
}

fn stack_rows(rows: &[Vector]) -> Matrix {
    let d = rows.first().map_or(0, |r| r.len());
    Matrix::from_fn(rows.len(), d, |i, j| rows[i][j])
}

/// `Σ*_MG = E_ξ[cov(ε_MG(s) | s)]`.
pub fn sigma_mg_exact(model: &TabularModel) -> Result<Matrix> {
    let theta = model.fixed_point()?;
    Ok(sigma_mg_at(model, &theta))
}

pub fn sigma_mg_at(model: &TabularModel, theta: &Vector) -> Matrix {
    let d = theta.len();
    let xi = model.stationary().weights();
    let mut out = Matrix::zeros(d, d);
    for s in 0..model.num_states() {
        out += model.noise()[s].covariance_at(theta) * xi[s];
    }
    linalg::symmetrize(&out)
}

/// Number of lags after which the remainder of the autocovariance sum of a
/// mean-zero `f` is certified below `tol` in Frobenius norm, using
/// `‖δₓPᵏ − ξ‖_TV ≤ 2^{−⌊k/t_mix⌋}`.
pub fn certified_lag(t_mix: usize, f_sup: f64, dim: usize, tol: f64) -> usize {
    if f_sup == 0.0 {
        return 0;
    }
    // |C_k|_entry ≤ 2‖f‖²∞ 2^{−⌊k/t⌋}; the two-sided remainder past K is at most
    // 8 t ‖f‖²∞ 2^{−⌊K/t⌋} per entry, times d for the Frobenius norm.
    let t = t_mix.max(1) as f64;
    let lead = 8.0 * t * f_sup * f_sup * dim as f64;
    if lead <= tol {
        return 0;
    }
    let blocks = (lead / tol).log2().ceil();
    (blocks * t) as usize + t_mix
}

/// `Σ*_Mkv = C₀ + Σ_{k≥1}(C_k + C_kᵀ)` with `C_k = Σ ξ(x)Pᵏ(x,y) ε(x)ε(y)ᵀ`.
pub fn sigma_mkv_exact(model: &TabularModel) -> Result<Matrix> {
    Ok(sigma_mkv_exact_with(model, None)?.0)
}

/// As [`sigma_mkv_exact`], optionally overriding the truncation lag; returns the
/// lag used.
pub fn sigma_mkv_exact_with(model: &TabularModel, lag_cap: Option<usize>) -> Result<(Matrix, usize)> {
    let theta = model.fixed_point()?;
    let dec = noise_decomposition(model, &theta);
    let f = stack_rows(&dec.eps_mkv);
    let d = theta.len();
    let lags = lag_cap.unwrap_or_else(|| certified_lag(model.mixing_time(), f.amax(), d, MKV_TAIL_TOL));
    let xi = model.stationary().weights();
    let dxf = Matrix::from_diagonal(xi) * &f;
    let mut total = f.transpose() * &dxf;
    let p = model.kernel().probs();
    let mut pf = f.clone();
    for _ in 0..lags {
        pf = p * &pf;
        let ck = dxf.transpose() * &pf;
        total += &ck + ck.transpose();
    }
    Ok((linalg::symmetrize(&total), lags))
}

/// Closed form `FᵀDF + FᵀD(P𝒜F) + transpose` through the Green operator.
pub fn sigma_mkv_green(model: &TabularModel) -> Result<Matrix> {
    let theta = model.fixed_point()?;
    let f = stack_rows(&noise_decomposition(model, &theta).eps_mkv);
    let g = green_apply(model.kernel(), model.stationary(), &f)?;
    let dxf = Matrix::from_diagonal(model.stationary().weights()) * &f;
    let cross = dxf.transpose() * model.kernel().probs() * g;
    Ok(linalg::symmetrize(&(f.transpose() * &dxf + &cross + cross.transpose())))
}

/// `σ̄ = max_j ½ (E[⟨e_j, (L₁ − L̄)θ + (b₁ − b̄)⟩²])^{1/2}` at `p = 2`.
pub fn effective_noise(model: &TabularModel, theta: &Vector) -> f64 {
    let d = theta.len();
    let xi = model.stationary().weights();
    let drift = model.mean_l() * theta + model.mean_b();
    let mut second = Vector::zeros(d);
    for s in 0..model.num_states() {
        let m = model.mean_l_at(s) * theta + model.mean_b_at(s) - &drift;
        let cov = model.noise()[s].covariance_at(theta);
        for j in 0..d {
            second[j] += xi[s] * (m[j] * m[j] + cov[(j, j)]);
        }
    }
    second.iter().map(|v| 0.5 * v.max(0.0).sqrt()).fold(0.0, f64::max)
}

/// `σ_L‖θ‖₂ + σ_b`, the bound `σ̄` must respect.
pub fn effective_noise_upper(constants: &InstanceConstants, theta: &Vector) -> f64 {
    constants.sigma_l * theta.norm() + constants.sigma_b
}

/// `Λ = E_{X∼ξ}[cov_{Y∼P(X,·)} g₀(Y)]` with `g₀ = (I − L̄)⁻¹ 𝒜[L(·)θ̄ + b(·)]`.
pub fn lambda_matrix(model: &TabularModel) -> Result<Matrix> {
    let theta = model.fixed_point()?;
    let d = theta.len();
    let s_n = model.num_states();
    let f = Matrix::from_fn(s_n, d, |s, j| (model.mean_l_at(s) * &theta + model.mean_b_at(s))[j]);
    let a = Matrix::identity(d, d) - model.mean_l();
    // Rows of G are g₀(y)ᵀ, so G = (𝒜F)(I − L̄)⁻ᵀ.
    let g = linalg::solve(&a, &green_apply(model.kernel(), model.stationary(), &f)?.transpose())?.transpose();
    let p = model.kernel().probs();
    let pg = p * &g;
    let xi = model.stationary().weights();
    let mut out = Matrix::zeros(d, d);
    for x in 0..s_n {
        if xi[x] == 0.0 {
            continue;
        }
        let mut second = Matrix::zeros(d, d);
        for y in 0..s_n {
            if p[(x, y)] > 0.0 {
                let gy = g.row(y).transpose();
                second += &gy * gy.transpose() * p[(x, y)];
            }
        }
        let m = pg.row(x).transpose();
        out += (second - &m * m.transpose()) * xi[x];
    }
    Ok(linalg::symmetrize(&out))
}

/// `ε_n = n^{−1/2} (tr((I − L̄)⁻¹Σ*_Mkv(I − L̄)⁻ᵀ))^{1/2}`.
pub fn local_radius(model: &TabularModel, n: usize) -> Result<f64> {
    let sigma = sigma_mkv_exact(model)?;
    radius_from(model.mean_l(), &sigma, n)
}

/// Radius including the martingale part, `Σ*_MG + Σ*_Mkv`.
pub fn combined_radius(model: &TabularModel, n: usize) -> Result<f64> {
    let sigma = sigma_mkv_exact(model)? + sigma_mg_exact(model)?;
    radius_from(model.mean_l(), &sigma, n)
}

pub fn radius_from(l_bar: &Matrix, sigma: &Matrix, n: usize) -> Result<f64> {
    Ok((linalg::resolvent_trace(l_bar, sigma)?.max(0.0) / n as f64).sqrt())
}

/// `w = 4 t_mix ⌈ln n⌉`.
pub fn lag_window(t_mix: usize, n: usize) -> usize {
    4 * t_mix * (n as f64).ln().ceil() as usize
}

/// Which plug-in split was used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorVariant {
    /// Residuals pooled by visited state.
    StatePooled,
    /// No state labels: lag-0 minus lag-1 covariance as the martingale part.
    Lag1Smoothed,
}

impl EstimatorVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorVariant::StatePooled => "state-pooled",
            EstimatorVariant::Lag1Smoothed => "lag1-smoothed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSigmas {
    pub sigma_mg: Matrix,
    pub sigma_mkv: Matrix,
    pub variant: EstimatorVariant,
    pub lag_window: usize,
    pub samples: usize,
}

/// Replays `n` observations from `seed` and returns the residuals
/// `L_tθ + b_t − θ` with their state labels.
pub fn collect_residuals<M: ObservationModel>(
    model: &M,
    seed: u64,
    n: usize,
    theta: &Vector,
) -> (Vec<Vector>, Vec<Option<usize>>) {
    let mut cur = model.start(seed);
    let mut obs = Observation::zeros(model.dim());
    let mut res = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    for _ in 0..n {
        model.observe(&mut cur, &mut obs);
        res.push(&obs.l * theta + &obs.b - theta);
        states.push(obs.state);
    }
    (res, states)
}

fn autocov(u: &[Vector], lag: usize) -> Matrix {
    let d = u[0].len();
    let n = u.len();
    let mut c = Matrix::zeros(d, d);
    for t in 0..n.saturating_sub(lag) {
        c.ger(1.0, &u[t + lag], &u[t], 1.0);
    }
    c / n as f64
}

fn long_run(u: &[Vector], w: usize) -> Matrix {
    let mut total = autocov(u, 0);
    for k in 1..=w.min(u.len().saturating_sub(1)) {
        let c = autocov(u, k);
        total += &c + c.transpose();
    }
    linalg::symmetrize(&total)
}

fn centered(u: &[Vector]) -> Vec<Vector> {
    let mean = u.iter().fold(Vector::zeros(u[0].len()), |acc, v| acc + v) / u.len() as f64;
    u.iter().map(|v| v - &mean).collect()
}

/// Projection onto the PSD cone (negative eigenvalues set to zero).
pub fn psd_part(m: &Matrix) -> Matrix {
    let eig = SymmetricEigen::new(linalg::symmetrize(m));
    let vals = Vector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|v| v.max(0.0)));
    linalg::symmetrize(&(&eig.eigenvectors * Matrix::from_diagonal(&vals) * eig.eigenvectors.transpose()))
}

/// Plug-in `(Σ̂_MG, Σ̂_Mkv)` from residuals with a flat lag window `w`.
///
/// With state labels the martingale part is the within-state covariance and
/// the Markov part is the long-run covariance of the per-state mean residual.
/// Without labels the lag-1 autocovariance stands in for the smooth part.
/// Both outputs are projected onto the PSD cone.
pub fn empirical_sigmas(residuals: &[Vector], states: &[Option<usize>], w: usize) -> Result<EmpiricalSigmas> {
    let n = residuals.len();
    let needed = (10 * w).max(2);
    if n < needed {
        return Err(Error::InsufficientData { needed, got: n });
    }
    if !states.is_empty() && states.len() != n {
        return Err(Error::DimensionMismatch(format!("{n} residuals but {} state labels", states.len())));
    }
    let d = residuals[0].len();
    let labels: Option<Vec<usize>> = if states.is_empty() {
        None
    } else {
        states.iter().copied().collect()
    };
    match labels {
        Some(labels) => {
            let s_n = labels.iter().max().copied().unwrap_or(0) + 1;
            let mut sums = alloc::vec![Vector::zeros(d); s_n];
            let mut counts = alloc::vec![0usize; s_n];
            for (r, &s) in residuals.iter().zip(&labels) {
                sums[s] += r;
                counts[s] += 1;
            }
            for (s, c) in sums.iter_mut().zip(&counts) {
                if *c > 0 {
                    *s /= *c as f64;
                }
            }
            let mut mg = Matrix::zeros(d, d);
            for (r, &s) in residuals.iter().zip(&labels) {
                let e = r - &sums[s];
                mg.ger(1.0, &e, &e, 1.0);
            }
            mg /= n as f64;
            let means: Vec<Vector> = labels.iter().map(|&s| sums[s].clone()).collect();
            let mkv = long_run(&centered(&means), w);
            Ok(EmpiricalSigmas {
                sigma_mg: psd_part(&mg),
                sigma_mkv: psd_part(&mkv),
                variant: EstimatorVariant::StatePooled,
                lag_window: w,
                samples: n,
            })
        }
        None => {
            let u = centered(residuals);
            let total = long_run(&u, w);
            let mg = autocov(&u, 0) - linalg::symmetrize(&autocov(&u, 1));
            let mg = psd_part(&mg);
            let mkv = psd_part(&(total - &mg));
            Ok(EmpiricalSigmas {
                sigma_mg: mg,
                sigma_mkv: mkv,
                variant: EstimatorVariant::Lag1Smoothed,
                lag_window: w,
                samples: n,
            })
        }
    }
}

/// Everything the theory says about one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceReport {
    pub constants: InstanceConstants,
    pub theta_bar: Vector,
    pub sigma_mg: Matrix,
    pub sigma_mkv: Matrix,
    pub lambda: Option<Matrix>,
    /// `tr((I − L̄)⁻¹(Σ_MG + Σ_Mkv)(I − L̄)⁻ᵀ)`.
    pub leading_trace: f64,
    /// `tr((I − L̄)⁻¹Σ_Mkv(I − L̄)⁻ᵀ)`.
    pub markov_trace: f64,
    pub horizons: Vec<HorizonReport>,
    pub provenance: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonReport {
    pub n: usize,
    pub epsilon_n: f64,
    pub combined_radius: f64,
    pub theorem1_bound: f64,
}

impl InstanceReport {
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        constants: InstanceConstants,
        l_bar: &Matrix,
        theta_bar: Vector,
        sigma_mg: Matrix,
        sigma_mkv: Matrix,
        lambda: Option<Matrix>,
        horizons: &[usize],
        c_prime: f64,
        provenance: String,
    ) -> Result<Self> {
        let leading_trace = linalg::resolvent_trace(l_bar, &(&sigma_mg + &sigma_mkv))?;
        let markov_trace = linalg::resolvent_trace(l_bar, &sigma_mkv)?;
        let mut rows = Vec::with_capacity(horizons.len());
        for &n in horizons {
            rows.push(HorizonReport {
                n,
                epsilon_n: (markov_trace.max(0.0) / n as f64).sqrt(),
                combined_radius: (leading_trace.max(0.0) / n as f64).sqrt(),
                theorem1_bound: engine::theorem1_bound(&constants, &sigma_mg, &sigma_mkv, l_bar, n, c_prime)?,
            });
        }
        Ok(InstanceReport {
            constants,
            theta_bar,
            sigma_mg,
            sigma_mkv,
            lambda,
            leading_trace,
            markov_trace,
            horizons: rows,
            provenance,
        })
    }
}

/// Exact report for a finite-state model.
pub fn instance_report(model: &TabularModel, horizons: &[usize], c_prime: f64) -> Result<InstanceReport> {
    let constants = engine::instance_constants(model)?;
    let theta = model.fixed_point()?;
    let (mkv, lags) = sigma_mkv_exact_with(model, None)?;
    let mg = sigma_mg_exact(model)?;
    let lambda = lambda_matrix(model)?;
    InstanceReport::assemble(
        constants,
        model.mean_l(),
        theta,
        mg,
        mkv,
        Some(lambda),
        horizons,
        c_prime,
        format!("exact; lag sum truncated at {lags}"),
    )
}

/// Exact report for TD(λ), from the pair-chain moment recursions.
pub fn tdlambda_report(model: &crate::model::TdLambdaModel, horizons: &[usize], c_prime: f64) -> Result<InstanceReport> {
    let constants = model.instance_constants()?;
    let theta = model.fixed_point()?;
    let mom = model.moments(&theta)?;
    InstanceReport::assemble(
        constants,
        model.mean_l(),
        theta,
        mom.sigma_mg,
        mom.sigma_mkv,
        None,
        horizons,
        c_prime,
        format!("exact trace moments; {} lags", mom.lags),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::TransitionKernel;
    use crate::model::{NoiseBasis, NoiseSpec};
    use alloc::vec;
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn vec1(v: f64) -> Vector {
        Vector::from_vec(vec![v])
    }

    fn two_state_scalar() -> TabularModel {
        let k = TransitionKernel::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        TabularModel::new(k, vec![scalar(0.2), scalar(0.4)], vec![vec1(1.0), vec1(-1.0)], NoiseSpec::None).unwrap()
    }

    #[test]
    fn noiseless_has_zero_mg() {
        assert_eq!(sigma_mg_exact(&two_state_scalar()).unwrap(), scalar(0.0));
    }

    #[test]
    fn single_state_has_zero_mkv() {
        let k = TransitionKernel::from_rows(&[vec![1.0]]).unwrap();
        let m = TabularModel::new(k, vec![scalar(0.5)], vec![vec1(1.0)], NoiseSpec::None).unwrap();
        assert!(sigma_mkv_exact(&m).unwrap().amax() < 1e-15);
    }

    #[test]
    fn two_routes_agree_on_two_state() {
        let m = two_state_scalar();
        let a = sigma_mkv_exact(&m).unwrap();
        let b = sigma_mkv_green(&m).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-10);
    }

    #[test]
    fn two_state_scalar_closed_form() {
        // For a two-state chain with second eigenvalue ρ = 0.7 the lag-k
        // covariance is ρᵏ C₀, so Σ = C₀ (1 + ρ)/(1 − ρ).
        let m = two_state_scalar();
        let theta = m.fixed_point().unwrap();
        let dec = noise_decomposition(&m, &theta);
        let xi = m.stationary().weights();
        let c0 = xi[0] * dec.eps_mkv[0][0].powi(2) + xi[1] * dec.eps_mkv[1][0].powi(2);
        let expected = c0 * 1.7 / 0.3;
        assert_relative_eq!(sigma_mkv_exact(&m).unwrap()[(0, 0)], expected, max_relative = 1e-10);
    }

    #[test]
    fn drift_is_centered() {
        let m = two_state_scalar();
        let theta = m.fixed_point().unwrap();
        let dec = noise_decomposition(&m, &theta);
        let xi = m.stationary().weights();
        let mean = dec.eps_mkv[0][0] * xi[0] + dec.eps_mkv[1][0] * xi[1];
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn mg_scales_quadratically_with_noise() {
        let k = TransitionKernel::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let build = |a: f64| {
            TabularModel::new(
                k.clone(),
                vec![scalar(0.2), scalar(0.4)],
                vec![vec1(1.0), vec1(-1.0)],
                NoiseSpec::Entrywise {
                    l_half_width: 0.0,
                    b_half_width: a,
                },
            )
            .unwrap()
        };
        let s1 = sigma_mg_exact(&build(0.5)).unwrap()[(0, 0)];
        let s2 = sigma_mg_exact(&build(1.0)).unwrap()[(0, 0)];
        assert_relative_eq!(s2 / s1, 4.0, epsilon = 1e-12);
        assert_relative_eq!(s1, 0.25 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn pure_b_noise_sigma_bar() {
        // Constant tables plus additive noise of variance v: σ̄ = √v / 2.
        let k = TransitionKernel::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let v: f64 = 0.3;
        let basis = NoiseBasis {
            terms: vec![(Matrix::zeros(2, 2), Vector::from_vec(vec![v.sqrt(), 0.0]))],
        };
        let m = TabularModel::new(
            k,
            vec![Matrix::zeros(2, 2); 2],
            vec![Vector::from_vec(vec![1.0, 1.0]); 2],
            NoiseSpec::Basis(vec![basis.clone(), basis]),
        )
        .unwrap();
        let theta = m.fixed_point().unwrap();
        assert_relative_eq!(effective_noise(&m, &theta), v.sqrt() / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn deterministic_kernel_has_zero_lambda() {
        let k =TransitionKernel::from_rows(&[vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let m = TabularModel::new(k, vec![scalar(0.1), scalar(0.3)], vec![vec1(1.0), vec1(2.0)], NoiseSpec::None)
            .unwrap();
        assert!(lambda_matrix(&m).unwrap().amax() < 1e-14);
    }

    #[test]
    fn lambda_identity_on_three_states() {
        let k = TransitionKernel::from_rows(&[
            vec![0.5, 0.3, 0.2],
            vec![0.1, 0.6, 0.3],
            vec![0.4, 0.4, 0.2],
        ])
        .unwrap();
        let l = vec![
            Matrix::from_row_slice(2, 2, &[0.1, 0.2, 0.0, 0.3]),
            Matrix::from_row_slice(2, 2, &[0.2, -0.1, 0.1, 0.0]),
            Matrix::from_row_slice(2, 2, &[-0.3, 0.0, 0.2, 0.1]),
        ];
        let b = vec![
            Vector::from_vec(vec![1.0, 0.0]),
            Vector::from_vec(vec![0.5, -1.0]),
            Vector::from_vec(vec![-1.0, 2.0]),
        ];
        let m = TabularModel::new(k, l, b, NoiseSpec::None).unwrap();
        let lam = lambda_matrix(&m).unwrap();
        let sandwich = linalg::resolvent_sandwich(m.mean_l(), &sigma_mkv_exact(&m).unwrap()).unwrap();
        assert_relative_eq!(lam, sandwich, max_relative = 1e-8, epsilon = 1e-12);
        let n = 1000;
        assert_relative_eq!(local_radius(&m, n).unwrap().powi(2) * n as f64, lam.trace(), max_relative = 1e-8);
    }

    #[test]
    fn certified_lag_is_sound() {
        let k = TransitionKernel::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let m = TabularModel::new(k, vec![scalar(0.2), scalar(0.4)], vec![vec1(1.0), vec1(-1.0)], NoiseSpec::None)
            .unwrap();
        let (a, lags) = sigma_mkv_exact_with(&m, None).unwrap();
        let (b, _) = sigma_mkv_exact_with(&m, Some(2 * lags)).unwrap();
        assert!(linalg::frob_dist(&a, &b) <= 1e-10);
    }

    #[test]
    fn insufficient_data() {
        let r = vec![vec1(0.0); 50];
        let err = empirical_sigmas(&r, &[], 10).unwrap_err();
        assert_eq!(err, Error::InsufficientData { needed: 100, got: 50 });
    }

    #[test]
    fn zero_window_is_lag_zero_covariance() {
        let r: Vec<Vector> = (0..100).map(|t| vec1(((t * 7) % 5) as f64)).collect();
        let labels: Vec<Option<usize>> = (0..100).map(|t| Some((t * 7) % 5)).collect();
        let est = empirical_sigmas(&r, &labels, 0).unwrap();
        let u = centered(&r);
        let var = u.iter().map(|v| v[0] * v[0]).sum::<f64>() / 100.0;
        assert_relative_eq!(est.sigma_mkv[(0, 0)], var, epsilon = 1e-12);
        assert!(est.sigma_mg.amax() < 1e-12);
    }
}
