//! Vector autoregression fitted through its Yule–Walker equations.
//!
//! The parameter is `Θ = [A₁ … A_k]` (an `m × km` matrix) vectorized column by
//! column, so `d = k m²`. With `Y_t = (X_t, …, X_{t−k+1})` the observations are
//! `L = I − ν (Y_tY_tᵀ ⊗ I_m)` and `b = ν vec(X_{t+1}Y_tᵀ)`.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::vec::Vec;

use nalgebra::SymmetricEigen;

use super::{Observation, ObservationModel};
use crate::linalg::{self, Matrix, Vector};
use crate::rng::{self, unit_uniform, StreamRng};
use crate::{Error, Result};

const DOUBLING_STEPS: usize = 64;
const SERIES_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCertificate {
    pub p: Matrix,
    pub q: Matrix,
    pub beta: f64,
    pub mu: f64,
    pub t_mix_bound: usize,
    /// `‖RᵀPR − P + Q‖_F`.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct VarModel {
    coeffs: Vec<Matrix>,
    m: usize,
    noise_cov: Matrix,
    noise_root: Matrix,
    companion: Matrix,
    h_star: Matrix,
    gammas: Vec<Matrix>,
    nu: f64,
    l_bar: Matrix,
    b_bar: Vector,
    cert: LyapunovCertificate,
    warmup: usize,
}

#[derive(Debug, Clone)]
pub struct VarCursor {
    rng: StreamRng,
    /// `(X_t, X_{t−1}, …, X_{t−k+1})` stacked.
    y: Vector,
    eps: Vector,
    next: Vector,
}

impl VarCursor {
    pub fn window(&self) -> &Vector {
        &self.y
    }
}

/// Companion matrix `[A₁ … A_k; I 0 …; …; 0 … I 0]`.
pub fn companion_matrix(coeffs: &[Matrix]) -> Matrix {
    let k = coeffs.len();
    let m = coeffs[0].nrows();
    let mut r = Matrix::zeros(k * m, k * m);
    for (j, a) in coeffs.iter().enumerate() {
        r.view_mut((0, j * m), (m, m)).copy_from(a);
    }
    for j in 1..k {
        r.view_mut((j * m, (j - 1) * m), (m, m)).fill_with_identity();
    }
    r
}

/// `Σ_{i≥0} Aⁱ Q (Aᵀ)ⁱ` by squaring.
fn doubling_sum(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    let mut s = q.clone();
    let mut pow = a.clone();
    for _ in 0..DOUBLING_STEPS {
        let incr = &pow * &s * pow.transpose();
        s += &incr;
        pow = &pow * &pow;
        if incr.norm() <= SERIES_TOL * s.norm().max(1e-300) * 1e-4 || pow.amax() == 0.0 {
            return Ok(linalg::symmetrize(&s));
        }
        if !s.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    Err(Error::UnstableSystem {
        spectral_radius: linalg::spectral_radius(a),
    })
}

fn check_stable(r: &Matrix) -> Result<f64> {
    let rho = linalg::spectral_radius(r);
    if !(rho < 1.0) {
        return Err(Error::UnstableSystem { spectral_radius: rho });
    }
    Ok(rho)
}

/// `Q = I`, `P = Σ (Rᵀ)ⁱRⁱ`, `β = λ_max(P)`, `μ = 1` and the mixing-time bound
/// `⌈c k + c (β/μ)(1 + ln(β/μ))⌉`.
pub fn lyapunov_certificate(r: &Matrix, k: usize, c: f64) -> Result<LyapunovCertificate> {
    if !r.is_square() {
        return Err(Error::DimensionMismatch("companion matrix must be square".into()));
    }
    check_stable(r)?;
    let n = r.nrows();
    let q = Matrix::identity(n, n);
    let p = doubling_sum(&r.transpose(), &q)?;
    let residual = (r.transpose() * &p * r - &p + &q).norm();
    let beta = linalg::lambda_max_sym(&p);
    let mu = 1.0;
    let ratio = beta / mu;
    let t_mix_bound = (c * k as f64 + c * ratio * (1.0 + ratio.ln())).ceil().max(1.0) as usize;
    Ok(LyapunovCertificate {
        p,
        q,
        beta,
        mu,
        t_mix_bound,
        residual,
    })
}

fn psd_root(cov: &Matrix) -> Result<Matrix> {
    let eig = SymmetricEigen::new(linalg::symmetrize(cov));
    let scale = cov.amax().max(1.0);
    if eig.eigenvalues.iter().any(|&v| v < -1e-12 * scale) {
        return Err(Error::InvalidArgument("noise covariance is not positive semidefinite".into()));
    }
    let roots = Vector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|v| v.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * Matrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Builds the model. `noise_cov` is the covariance of `ε`; the noise itself is
/// `C u` with `C C ᵀ = noise_cov` and `u` uniform with independent unit-variance
/// coordinates, so it is bounded.
pub fn var_model(coeffs: Vec<Matrix>, noise_cov: Matrix) -> Result<VarModel> {
    VarModel::new(coeffs, noise_cov)
}

/// `Γ₀, …, Γ_{max_lag}` with `Γ_i = E[X_{t+i} X_tᵀ]`.
pub fn var_exact_covariances(model: &VarModel, max_lag: usize) -> Vec<Matrix> {
    let mut out = model.gammas.clone();
    extend_gammas(&model.coeffs, &mut out, max_lag);
    out.truncate(max_lag + 1);
    out
}

/// Continues `Γ_i = Σ_j A_j Γ_{i−j}` (with `Γ_{−l} = Γ_lᵀ`) up to `max_lag`.
fn extend_gammas(coeffs: &[Matrix], gammas: &mut Vec<Matrix>, max_lag: usize) {
    let m = coeffs[0].nrows();
    while gammas.len() <= max_lag {
        let i = gammas.len() as isize;
        let mut g = Matrix::zeros(m, m);
        for (j, a) in coeffs.iter().enumerate() {
            let lag = i - (j as isize + 1);
            let gl = if lag >= 0 {
                gammas[lag as usize].clone()
            } else {
                gammas[(-lag) as usize].transpose()
            };
            g += a * gl;
        }
        gammas.push(g);
    }
}

impl VarModel {
    pub fn new(coeffs: Vec<Matrix>, noise_cov: Matrix) -> Result<Self> {
        let k = coeffs.len();
        if k == 0 {
            return Err(Error::InvalidArgument("VAR order must be at least 1".into()));
        }
        let m = coeffs[0].nrows();
        if m == 0 || coeffs.iter().any(|a| a.nrows() != m || a.ncols() != m) {
            return Err(Error::DimensionMismatch("coefficient matrices must all be m x m".into()));
        }
        if noise_cov.nrows() != m || noise_cov.ncols() != m {
            return Err(Error::DimensionMismatch(format!("noise covariance must be {m}x{m}")));
        }
        if coeffs.iter().chain(core::iter::once(&noise_cov)).any(|a| a.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidArgument("non-finite VAR coefficient or covariance".into()));
        }
        let companion = companion_matrix(&coeffs);
        let rho = check_stable(&companion)?;
        let noise_root = psd_root(&noise_cov)?;
        let mut q_eps = Matrix::zeros(k * m, k * m);
        q_eps.view_mut((0, 0), (m, m)).copy_from(&noise_cov);
        let h_star = doubling_sum(&companion, &q_eps)?;
        let mut gammas: Vec<Matrix> = (0..k).map(|i| h_star.view((0, i * m), (m, m)).into_owned()).collect();
        extend_gammas(&coeffs, &mut gammas, k);
        let h_min = linalg::lambda_min_sym(&h_star);
        if !(h_min > 1e-10) {
            return Err(Error::DegenerateFeatures { min_eigenvalue: h_min });
        }
        let nu = 1.0 / linalg::lambda_max_sym(&h_star);
        let d = k * m * m;
        let l_bar = Matrix::identity(d, d) - linalg::kron(&h_star, &Matrix::identity(m, m)) * nu;
        let mut stacked = Matrix::zeros(m, k * m);
        for i in 0..k {
            stacked.view_mut((0, i * m), (m, m)).copy_from(&gammas[i + 1]);
        }
        let b_bar = Vector::from_column_slice(stacked.as_slice()) * nu;
        let cert = lyapunov_certificate(&companion, k, 1.0)?;
        let warmup = if rho > 0.0 {
            (1e-12f64.ln() / rho.ln()).ceil() as usize + k
        } else {
            k
        };
        Ok(VarModel {
            coeffs,
            m,
            noise_cov,
            noise_root,
            companion,
            h_star,
            gammas,
            nu,
            l_bar,
            b_bar,
            cert,
            warmup,
        })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    pub fn process_dim(&self) -> usize {
        self.m
    }

    pub fn coefficients(&self) -> &[Matrix] {
        &self.coeffs
    }

    pub fn noise_covariance(&self) -> &Matrix {
        &self.noise_cov
    }

    pub fn companion(&self) -> &Matrix {
        &self.companion
    }

    /// `H* = E[Y_tY_tᵀ]`, the block matrix `[Γ_{j−i}]`.
    pub fn h_star(&self) -> &Matrix {
        &self.h_star
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn certificate(&self) -> &LyapunovCertificate {
        &self.cert
    }

    /// `vec([A₁ … A_k])`.
    pub fn theta_star(&self) -> Vector {
        let (k, m) = (self.order(), self.m);
        let mut stacked = Matrix::zeros(m, k * m);
        for (i, a) in self.coeffs.iter().enumerate() {
            stacked.view_mut((0, i * m), (m, m)).copy_from(a);
        }
        Vector::from_column_slice(stacked.as_slice())
    }

    /// Splits a parameter vector back into `[A₁, …, A_k]`.
    pub fn unvec(&self, theta: &Vector) -> Vec<Matrix> {
        let (k, m) = (self.order(), self.m);
        let stacked = Matrix::from_column_slice(m, k * m, theta.as_slice());
        (0..k).map(|i| stacked.view((0, i * m), (m, m)).into_owned()).collect()
    }

    /// Stationary covariance of the residual `L_tθ* + b_t − θ* = ν vec(ε_{t+1}Y_tᵀ)`.
    /// It is a martingale difference, so this is also its long-run covariance.
    pub fn residual_covariance(&self) -> Matrix {
        linalg::kron(&self.h_star, &self.noise_cov) * (self.nu * self.nu)
    }

    fn step(&self, cur: &mut VarCursor) {
        let m = self.m;
        for e in cur.eps.iter_mut() {
            *e = unit_uniform(&mut cur.rng);
        }
        cur.next.gemv(1.0, &self.noise_root, &cur.eps, 0.0);
        cur.next.gemv(1.0, &self.companion.rows(0, m), &cur.y, 1.0);
    }

    fn shift(&self, cur: &mut VarCursor) {
        let (m, km) = (self.m, self.m * self.order());
        for i in (m..km).rev() {
            cur.y[i] = cur.y[i - m];
        }
        cur.y.rows_mut(0, m).copy_from(&cur.next);
    }
}

impl ObservationModel for VarModel {
    type Cursor = VarCursor;

    fn dim(&self) -> usize {
        self.b_bar.len()
    }

    fn mean_l(&self) -> &Matrix {
        &self.l_bar
    }

    fn mean_b(&self) -> &Vector {
        &self.b_bar
    }

    fn mixing_time(&self) -> usize {
        self.cert.t_mix_bound
    }

    fn start(&self, seed: u64) -> VarCursor {
        let m = self.m;
        let mut cur = VarCursor {
            rng: rng::stream(seed),
            y: Vector::zeros(m * self.order()),
            eps: Vector::zeros(m),
            next: Vector::zeros(m),
        };
        for _ in 0..self.warmup {
            self.step(&mut cur);
            self.shift(&mut cur);
        }
        cur
    }

    fn observe(&self, cur: &mut VarCursor, out: &mut Observation) {
        self.step(cur);
        let m = self.m;
        let km = cur.y.len();
        out.l.fill_with_identity();
        for a in 0..km {
            for b in 0..km {
                let v = self.nu * cur.y[a] * cur.y[b];
                for i in 0..m {
                    out.l[(i + a * m, i + b * m)] -= v;
                }
            }
        }
        for a in 0..km {
            for i in 0..m {
                out.b[i + a * m] = self.nu * cur.next[i] * cur.y[a];
            }
        }
        out.state = None;
        self.shift(cur);
    }
}
