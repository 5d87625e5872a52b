//! Temporal-difference policy evaluation with linear features.
//!
//! TD(0) lives on the pair chain `z = (s, s⁺)` and is exposed both through a
//! direct sampler and through an equivalent [`TabularModel`] used by the
//! exact diagnostics. TD(λ) additionally carries the eligibility trace
//! `g_t = φ(s_t) + γλ g_{t−1}`, so its driving process is not finite; exact
//! stationary moments come from linear recursions on the pair chain instead.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;


use super::{NoiseBasis, NoiseSpec, Observation, ObservationModel, TabularModel};
use crate::engine::InstanceConstants;
use crate::linalg::{self, Matrix, Vector};
use crate::markov::{StationaryDistribution, TransitionKernel};
use crate::rng::{self, categorical, unit_uniform, StreamRng, SQRT3};
use crate::{Error, Result};

const DEGENERATE_TOL: f64 = 1e-10;
const MOMENT_LAG_CAP: usize = 200_000;

/// Shared data of a policy-evaluation problem.
#[derive(Debug, Clone)]
pub struct TdInstance {
    kernel: TransitionKernel,
    xi: StationaryDistribution,
    xi_cumulative: Vec<f64>,
    phi: Matrix,
    phis: Vec<Vector>,
    rewards: Vector,
    gamma: f64,
    reward_half_width: f64,
    b_mat: Matrix,
    beta: f64,
    nu: f64,
    pair_t_mix: usize,
}

impl TdInstance {
    /// `phi` is `S × d` (row `s` is `φ(s)ᵀ`); rewards are perturbed by
    /// uniform noise on `[−reward_half_width, reward_half_width]`.
    pub fn new(kernel: TransitionKernel, phi: Matrix, rewards: Vector, gamma: f64, reward_half_width: f64) -> Result<Self> {
        let s = kernel.num_states();
        if phi.nrows() != s || rewards.len() != s {
            return Err(Error::DimensionMismatch(format!(
                "{s} states but {} feature rows and {} rewards",
                phi.nrows(),
                rewards.len()
            )));
        }
        if phi.ncols() == 0 {
            return Err(Error::InvalidArgument("feature dimension must be positive".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidArgument(format!("discount {gamma} outside [0, 1)")));
        }
        if !(reward_half_width >= 0.0) || !reward_half_width.is_finite() {
            return Err(Error::InvalidArgument("reward noise half-width must be finite and nonnegative".into()));
        }
        if phi.iter().chain(rewards.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite feature or reward".into()));
        }
        let xi = crate::markov::stationary_distribution(&kernel)?;
        let d_xi = Matrix::from_diagonal(xi.weights());
        let b_mat = linalg::symmetrize(&(phi.transpose() * &d_xi * &phi));
        let mu = linalg::lambda_min_sym(&b_mat);
        if !(mu > DEGENERATE_TOL) {
            return Err(Error::DegenerateFeatures { min_eigenvalue: mu });
        }
        let beta = linalg::lambda_max_sym(&b_mat);
        let base_t_mix = match kernel.mixing() {
            Some(c) => c.t_mix,
            None => crate::markov::tv_mixing_time(&kernel, 0.5, crate::markov::DEFAULT_MIX_CAP)?.t_mix,
        };
        let mut acc = 0.0;
        let xi_cumulative = xi
            .weights()
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let phis = (0..s).map(|i| phi.row(i).transpose()).collect();
        Ok(TdInstance {
            kernel,
            xi,
            xi_cumulative,
            phi,
            phis,
            rewards,
            gamma,
            reward_half_width,
            b_mat,
            beta,
            nu: 1.0 / beta,
            // A TV bound on the pair chain after t steps is one on P after t − 1.
            pair_t_mix: base_t_mix + 1,
        })
    }

    pub fn kernel(&self) -> &TransitionKernel {
        &self.kernel
    }

    pub fn stationary(&self) -> &StationaryDistribution {
        &self.xi
    }

    pub fn features(&self) -> &Matrix {
        &self.phi
    }

    pub fn feature(&self, s: usize) -> &Vector {
        &self.phis[s]
    }

    pub fn rewards(&self) -> &Vector {
        &self.rewards
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn num_states(&self) -> usize {
        self.kernel.num_states()
    }

    pub fn dim(&self) -> usize {
        self.phi.ncols()
    }

    /// `B = ΦᵀDΦ` with `D = diag(ξ)`.
    pub fn b_matrix(&self) -> &Matrix {
        &self.b_mat
    }

    /// `λ_max(B)`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `λ_min(B)`.
    pub fn mu(&self) -> f64 {
        linalg::lambda_min_sym(&self.b_mat)
    }

    /// Scaling `ν = 1/β` applied to every observation.
    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn reward_half_width(&self) -> f64 {
        self.reward_half_width
    }

    pub fn reward_variance(&self) -> f64 {
        self.reward_half_width * self.reward_half_width / 3.0
    }

    /// Mixing time of the pair chain `(s_t, s_{t+1})`.
    pub fn pair_mixing_time(&self) -> usize {
        self.pair_t_mix
    }

    fn d_xi(&self) -> Matrix {
        Matrix::from_diagonal(self.xi.weights())
    }

    /// `Σ₀ = ΦᵀDΦ`.
    pub fn sigma0(&self) -> Matrix {
        self.b_mat.clone()
    }

    /// `Σ₁ = ΦᵀDPΦ`.
    pub fn sigma1(&self) -> Matrix {
        self.phi.transpose() * self.d_xi() * self.kernel.probs() * &self.phi
    }

    /// True value function `V* = (I − γP)⁻¹ r`.
    pub fn value_function(&self) -> Result<Vector> {
        let s = self.num_states();
        linalg::solve_vec(&(Matrix::identity(s, s) - self.kernel.probs() * self.gamma), &self.rewards)
    }

    /// `(I − cP)⁻¹`.
    fn resolvent(&self, c: f64) -> Result<Matrix> {
        let s = self.num_states();
        linalg::inverse(&(Matrix::identity(s, s) - self.kernel.probs() * c))
    }

    /// `ΦᵀD(I − γλP)⁻¹Φ`, the stationary `E[g_t φ(s_t)ᵀ]`.
    pub fn trace_feature_moment(&self, lambda: f64) -> Result<Matrix> {
        Ok(self.phi.transpose() * self.d_xi() * self.resolvent(self.gamma * lambda)? * &self.phi)
    }

    /// `‖φ(s) − φ(s')‖`-free bound `max_s ‖φ(s)‖₂`.
    pub fn max_feature_norm(&self) -> f64 {
        self.phis.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    fn start_cursor(&self, seed: u64) -> TdCursor {
        let mut rng = rng::stream(seed);
        let s = categorical(&mut rng, &self.xi_cumulative);
        let next = self.kernel.next_state(&mut rng, s);
        TdCursor {
            rng,
            s,
            next,
            g: Vector::zeros(self.dim()),
        }
    }

    fn advance(&self, cur: &mut TdCursor) {
        cur.s = cur.next;
        cur.next = self.kernel.next_state(&mut cur.rng, cur.s);
    }

    fn draw_reward(&self, rng: &mut StreamRng, s: usize) -> f64 {
        let r = self.rewards[s];
        if self.reward_half_width > 0.0 {
            r + unit_uniform(rng) * (self.reward_half_width / SQRT3)
        } else {
            r
        }
    }

    /// `L = I − ν x (φ(s) − γφ(s⁺))ᵀ`, `b = ν R x`, then advance the chain.
    fn td_observation(&self, cur: &mut TdCursor, x: &Vector, out: &mut Observation) {
        let reward = self.draw_reward(&mut cur.rng, cur.s);
        out.l.fill_with_identity();
        out.l.ger(-self.nu, x, &self.phis[cur.s], 1.0);
        out.l.ger(self.nu * self.gamma, x, &self.phis[cur.next], 1.0);
        out.b.copy_from(x);
        out.b *= self.nu * reward;
        out.state = Some(cur.s * self.num_states() + cur.next);
        self.advance(cur);
    }

    /// Per-pair tables `L(z)`, `b(z)` and reward-noise bases on the pair chain.
    fn pair_tables(&self) -> (Vec<Matrix>, Vec<Vector>, Vec<NoiseBasis>) {
        let (s_n, d) = (self.num_states(), self.dim());
        let mut ls = Vec::with_capacity(s_n * s_n);
        let mut bs = Vec::with_capacity(s_n * s_n);
        let mut noise = Vec::with_capacity(s_n * s_n);
        let scale = self.reward_half_width / SQRT3;
        for s in 0..s_n {
            for t in 0..s_n {
                let phi = self.feature(s);
                let psi = phi - self.feature(t) * self.gamma;
                ls.push(Matrix::identity(d, d) - phi * psi.transpose() * self.nu);
                bs.push(phi * (self.nu * self.rewards[s]));
                let mut basis = NoiseBasis::default();
                if scale > 0.0 {
                    basis.terms.push((Matrix::zeros(d, d), phi * (self.nu * scale)));
                }
                noise.push(basis);
            }
        }
        (ls, bs, noise)
    }
}

#[derive(Debug, Clone)]
pub struct TdCursor {
    rng: StreamRng,
    s: usize,
    next: usize,
    g: Vector,
}

impl TdCursor {
    pub fn state(&self) -> usize {
        self.s
    }

    pub fn next_state(&self) -> usize {
        self.next
    }

    pub fn trace(&self) -> &Vector {
        &self.g
    }
}

/// TD(0): `L = I − ν φ(s)(φ(s) − γφ(s⁺))ᵀ`, `b = ν R(s) φ(s)`.
#[derive(Debug, Clone)]
pub struct Td0Model {
    inst: TdInstance,
    pairs: TabularModel,
}

pub fn td0_model(kernel: TransitionKernel, phi: Matrix, rewards: Vector, gamma: f64, reward_half_width: f64) -> Result<Td0Model> {
    Td0Model::new(TdInstance::new(kernel, phi, rewards, gamma, reward_half_width)?)
}

impl Td0Model {
    pub fn new(inst: TdInstance) -> Result<Self> {
        let (ls, bs, noise) = inst.pair_tables();
        let pairs = TabularModel::new(inst.kernel.pair_chain()?, ls, bs, NoiseSpec::Basis(noise))?;
        Ok(Td0Model { inst, pairs })
    }

    pub fn instance(&self) -> &TdInstance {
        &self.inst
    }

    /// The same model written as a finite table over the pair chain.
    pub fn as_tabular(&self) -> &TabularModel {
        &self.pairs
    }
}

/// Solves `Σ₀θ = γΣ₁θ + ΦᵀDr`.
pub fn td0_exact_solution(model: &Td0Model) -> Result<Vector> {
    let inst = &model.inst;
    let rhs = inst.phi.transpose() * (inst.xi.weights().component_mul(&inst.rewards));
    linalg::solve_vec(&(inst.sigma0() - inst.sigma1() * inst.gamma), &rhs)
}

impl ObservationModel for Td0Model {
    type Cursor = TdCursor;

    fn dim(&self) -> usize {
        self.inst.dim()
    }

    fn mean_l(&self) -> &Matrix {
        self.pairs.mean_l()
    }

    fn mean_b(&self) -> &Vector {
        self.pairs.mean_b()
    }

    fn mixing_time(&self) -> usize {
        self.pairs.mixing_time()
    }

    fn start(&self, seed: u64) -> TdCursor {
        self.inst.start_cursor(seed)
    }

    fn observe(&self, cur: &mut TdCursor, out: &mut Observation) {
        self.inst.td_observation(cur, &self.inst.phis[cur.s], out);
    }

    fn fixed_point(&self) -> Result<Vector> {
        td0_exact_solution(self)
    }

    fn error_weight(&self) -> Option<&Matrix> {
        Some(&self.inst.b_mat)
    }
}

/// TD(λ): `L = I − ν g_t(φ(s_t) − γφ(s_{t+1}))ᵀ`, `b = ν R_t g_t`.
#[derive(Debug, Clone)]
pub struct TdLambdaModel {
    inst: TdInstance,
    lambda: f64,
    l_bar: Matrix,
    b_bar: Vector,
    warmup: usize,
}

pub fn tdlambda_model(
    kernel: TransitionKernel,
    phi: Matrix,
    rewards: Vector,
    gamma: f64,
    lambda: f64,
    reward_half_width: f64,
) -> Result<TdLambdaModel> {
    TdLambdaModel::new(TdInstance::new(kernel, phi, rewards, gamma, reward_half_width)?, lambda)
}

/// Solves `ΦᵀD(I − γλP)⁻¹(I − γP)Φ θ = ΦᵀD(I − γλP)⁻¹ r`.
pub fn tdlambda_exact_solution(model: &TdLambdaModel) -> Result<Vector> {
    let inst = &model.inst;
    let s = inst.num_states();
    let left = inst.phi.transpose() * inst.d_xi() * inst.resolvent(model.trace_decay())?;
    let sys = &left * (Matrix::identity(s, s) - inst.kernel.probs() * inst.gamma) * &inst.phi;
    linalg::solve_vec(&sys, &(&left * &inst.rewards))
}

/// Exact stationary second-order quantities of TD(λ) at a parameter `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TdLambdaMoments {
    /// Covariance of the reward-noise part `ν g_t w_t`.
    pub sigma_mg: Matrix,
    /// Long-run covariance of the conditional mean residual `ν g_t δ(z_t)`.
    pub sigma_mkv: Matrix,
    /// `E[e eᵀ]` for the full residual `e = L_tθ + b_t − θ`.
    pub residual_second_moment: Matrix,
    /// `E[g_t g_tᵀ]`.
    pub trace_second_moment: Matrix,
    pub sigma_l: f64,
    pub sigma_b: f64,
    /// Number of autocovariance lags summed.
    pub lags: usize,
}

impl TdLambdaModel {
    pub fn new(inst: TdInstance, lambda: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&lambda) {
            return Err(Error::InvalidArgument(format!("lambda {lambda} outside [0, 1)")));
        }
        let c = inst.gamma * lambda;
        let d = inst.dim();
        let s = inst.num_states();
        let left = inst.phi.transpose() * inst.d_xi() * inst.resolvent(c)?;
        let k = &left * (Matrix::identity(s, s) - inst.kernel.probs() * inst.gamma) * &inst.phi;
        let l_bar = Matrix::identity(d, d) - k * inst.nu;
        let b_bar = &left * &inst.rewards * inst.nu;
        let warmup = if c > 0.0 {
            (1e-12f64.ln() / c.ln()).ceil() as usize
        } else {
            0
        };
        Ok(TdLambdaModel {
            inst,
            lambda,
            l_bar,
            b_bar,
            warmup,
        })
    }

    /// Overrides the number of trace warm-up steps taken by [`ObservationModel::start`].
    pub fn with_warmup(mut self, steps: usize) -> Self {
        self.warmup = steps;
        self
    }

    pub fn instance(&self) -> &TdInstance {
        &self.inst
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `γλ`.
    pub fn trace_decay(&self) -> f64 {
        self.inst.gamma * self.lambda
    }

    pub fn warmup(&self) -> usize {
        self.warmup
    }

    /// Exact stationary moments at `θ`, summing lags until they vanish.
    pub fn moments(&self, theta: &Vector) -> Result<TdLambdaMoments> {
        let inst = &self.inst;
        let (s_n, d) = (inst.num_states(), inst.dim());
        let zn = s_n * s_n;
        let c = self.trace_decay();
        let nu2 = inst.nu * inst.nu;
        let p = inst.kernel.probs();
        let xi = inst.xi.weights();

        // Pair chain Q and its stationary law π(s, s⁺) = ξ(s)P(s, s⁺).
        let mut qt = Matrix::zeros(zn, zn);
        for a in 0..s_n {
            for b in 0..s_n {
                for e in 0..s_n {
                    qt[(b * s_n + e, a * s_n + b)] = p[(b, e)];
                }
            }
        }
        let pi: Vec<f64> = (0..zn).map(|z| xi[z / s_n] * p[(z / s_n, z % s_n)]).collect();
        let first = |z: usize| z / s_n;
        let psi: Vec<Vector> = (0..zn)
            .map(|z| inst.feature(first(z)) - inst.feature(z % s_n) * inst.gamma)
            .collect();
        let delta: Vec<f64> = (0..zn)
            .map(|z| inst.rewards[first(z)] - psi[z].dot(theta))
            .collect();

        // m1(z) = E[g 1{z}], m2(z) = E[g gᵀ 1{z}].
        let ident = Matrix::identity(zn, zn);
        let rhs1 = Matrix::from_fn(zn, d, |z, j| pi[z] * inst.feature(first(z))[j]);
        let m1 = linalg::solve(&(&ident - &qt * c), &rhs1)?;
        let prev = &qt * &m1;
        let rhs2 = Matrix::from_fn(zn, d * d, |z, col| {
            let (i, j) = (col % d, col / d);
            let f = inst.feature(first(z));
            pi[z] * f[i] * f[j] + c * (f[i] * prev[(z, j)] + prev[(z, i)] * f[j])
        });
        let m2 = linalg::solve(&(&ident - &qt * (c * c)), &rhs2)?;
        let unvec = |row: nalgebra::DMatrixView<'_, f64>| Matrix::from_fn(d, d, |i, j| row[(0, i + j * d)]);

        let mut gg = Matrix::zeros(d, d);
        let mut c0 = Matrix::zeros(d, d);
        for z in 0..zn {
            let mz = unvec(m2.rows(z, 1));
            c0 += &mz * (delta[z] * delta[z]);
            gg += mz;
        }
        let c0 = c0 * nu2;
        let sigma_mg = linalg::symmetrize(&(&gg * (nu2 * inst.reward_variance())));

        // Lag recursions: V_k(z) = E[δ(z₀)g₀ 1{z_k = z}], W_k(z) = E[δ(z₀)g₀g_kᵀ 1{z_k = z}].
        let mut v = Matrix::from_fn(zn, d, |z, j| delta[z] * m1[(z, j)]);
        let mut w = Matrix::from_fn(zn, d * d, |z, col| delta[z] * m2[(z, col)]);
        let mut total = c0.clone();
        let scale = c0.norm().max(f64::MIN_POSITIVE);
        let mut quiet = 0;
        let mut lags = 0;
        for k in 1..=MOMENT_LAG_CAP {
            v = &qt * &v;
            let mut next = &qt * &w * c;
            for z in 0..zn {
                let f = inst.feature(first(z));
                for j in 0..d {
                    for i in 0..d {
                        next[(z, i + j * d)] += v[(z, i)] * f[j];
                    }
                }
            }
            w = next;
            let mut ck = Matrix::zeros(d, d);
            for z in 0..zn {
                ck += unvec(w.rows(z, 1)) * delta[z];
            }
            ck *= nu2;
            total += &ck + ck.transpose();
            lags = k;
            if ck.norm() <= 1e-17 * scale {
                quiet += 1;
                if quiet >= 8 {
                    break;
                }
            } else {
                quiet = 0;
            }
            if k == MOMENT_LAG_CAP {
                return Err(Error::NotMixedWithinCap {
                    cap: MOMENT_LAG_CAP,
                    threshold: 1e-17,
                });
            }
        }

        // Moment forms of σ_L and σ_b.
        let mut sigma_l_sq: f64 = 0.0;
        let mut sigma_b_sq: f64 = 0.0;
        for j in 0..d {
            let mut second = Matrix::zeros(d, d);
            let mut first_moment = Vector::zeros(d);
            let (mut rg2, mut rg, mut g2) = (0.0, 0.0, 0.0);
            for z in 0..zn {
                let m2jj = m2[(z, j + j * d)];
                second += &psi[z] * psi[z].transpose() * m2jj;
                first_moment.axpy(m1[(z, j)], &psi[z], 1.0);
                let r = inst.rewards[first(z)];
                rg2 += m2jj * r * r;
                rg += m1[(z, j)] * r;
                g2 += m2jj;
            }
            let cov = (second - &first_moment * first_moment.transpose()) * nu2;
            sigma_l_sq = sigma_l_sq.max(linalg::lambda_max_sym(&cov));
            sigma_b_sq = sigma_b_sq
                .max(nu2 * (rg2 - rg * rg))
                .max(nu2 * inst.reward_variance() * g2);
        }

        let sigma_mkv = linalg::symmetrize(&total);
        Ok(TdLambdaMoments {
            residual_second_moment: linalg::symmetrize(&(&c0 + &sigma_mg)),
            sigma_mg,
            sigma_mkv,
            trace_second_moment: linalg::symmetrize(&gg),
            sigma_l: (0.5 * sigma_l_sq.max(0.0)).sqrt(),
            sigma_b: (0.5 * sigma_b_sq.max(0.0)).sqrt(),
            lags,
        })
    }

    /// Instance constants from the exact moments at the fixed point.
    pub fn instance_constants(&self) -> Result<InstanceConstants> {
        let theta = tdlambda_exact_solution(self)?;
        let mom = self.moments(&theta)?;
        let sigma_bar = (0..self.dim())
            .map(|j| 0.5 * mom.residual_second_moment[(j, j)].max(0.0).sqrt())
            .fold(0.0, f64::max);
        InstanceConstants::from_parts(&self.l_bar, mom.sigma_l, mom.sigma_b, sigma_bar, self.mixing_time())
    }
}

impl ObservationModel for TdLambdaModel {
    type Cursor = TdCursor;

    fn dim(&self) -> usize {
        self.inst.dim()
    }

    fn mean_l(&self) -> &Matrix {
        &self.l_bar
    }

    fn mean_b(&self) -> &Vector {
        &self.b_bar
    }

    /// Pair-chain mixing time plus `⌈γλ/(1 − γλ)⌉` for the trace memory.
    fn mixing_time(&self) -> usize {
        let c = self.trace_decay();
        self.inst.pair_t_mix + (c / (1.0 - c)).ceil() as usize
    }

    fn start(&self, seed: u64) -> TdCursor {
        let mut cur = self.inst.start_cursor(seed);
        let c = self.trace_decay();
        for _ in 0..self.warmup {
            cur.g *= c;
            cur.g += self.inst.feature(cur.s);
            self.inst.advance(&mut cur);
        }
        cur
    }

    fn observe(&self, cur: &mut TdCursor, out: &mut Observation) {
        cur.g *= self.trace_decay();
        cur.g += &self.inst.phis[cur.s];
        let g = core::mem::replace(&mut cur.g, Vector::zeros(0));
        self.inst.td_observation(cur, &g, out);
        cur.g = g;
        out.state = None;
    }

    fn fixed_point(&self) -> Result<Vector> {
        tdlambda_exact_solution(self)
    }

    fn error_weight(&self) -> Option<&Matrix> {
        Some(&self.inst.b_mat)
    }
}

/// Five states, three features: the small instance used throughout tests.
#[doc(hidden)]
pub fn sample_instance(gamma: f64, reward_half_width: f64) -> TdInstance {
    let kernel = TransitionKernel::from_rows(&[
        vec![0.1, 0.4, 0.2, 0.2, 0.1],
        vec![0.3, 0.1, 0.3, 0.1, 0.2],
        vec![0.2, 0.2, 0.1, 0.3, 0.2],
        vec![0.1, 0.3, 0.2, 0.1, 0.3],
        vec![0.3, 0.1, 0.1, 0.3, 0.2],
    ])
    .unwrap();
    let phi = Matrix::from_row_slice(
        5,
        3,
        &[1.0, 0.0, 0.2, 0.0, 1.0, -0.3, 0.5, 0.5, 0.0, -0.4, 0.2, 1.0, 0.3, -0.6, 0.4],
    );
    let r = Vector::from_vec(vec![1.0, -0.5, 0.3, 0.8, -1.0]);
    TdInstance::new(kernel, phi, r, gamma, reward_half_width).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gather<M: ObservationModel>(m: &M, seed: u64, n: usize) -> Vec<(Matrix, Vector)> {
        let mut cur = m.start(seed);
        let mut obs = Observation::zeros(m.dim());
        (0..n)
            .map(|_| {
                m.observe(&mut cur, &mut obs);
                (obs.l.clone(), obs.b.clone())
            })
            .collect()
    }

    #[test]
    fn degenerate_features_rejected() {
        let k = TransitionKernel::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let phi = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let err = td0_model(k, phi, Vector::zeros(2), 0.5, 0.0).unwrap_err();
        assert!(matches!(err, Error::DegenerateFeatures { .. }));
    }

    #[test]
    fn tabular_features_without_discount_recover_rewards() {
        let inst = sample_instance(0.0, 0.0);
        let k = inst.kernel().clone();
        let m = td0_model(k, Matrix::identity(5, 5), inst.rewards().clone(), 0.0, 0.0).unwrap();
        let theta = td0_exact_solution(&m).unwrap();
        assert_relative_eq!(theta, inst.rewards().clone(), epsilon = 1e-12);
    }

    #[test]
    fn constant_feature_gives_discounted_mean_reward() {
        let inst = sample_instance(0.7, 0.0);
        let ones = Matrix::from_element(5, 1, 1.0);
        let m = td0_model(inst.kernel().clone(), ones.clone(), inst.rewards().clone(), 0.7, 0.0).unwrap();
        let expected = inst.stationary().expect(inst.rewards().as_slice()) / 0.3;
        assert_relative_eq!(td0_exact_solution(&m).unwrap()[0], expected, epsilon = 1e-12);
        for lambda in [0.0, 0.4, 0.9] {
            let ml = tdlambda_model(inst.kernel().clone(), ones.clone(), inst.rewards().clone(), 0.7, lambda, 0.0)
                .unwrap();
            assert_relative_eq!(tdlambda_exact_solution(&ml).unwrap()[0], expected, epsilon = 1e-10);
        }
    }

    #[test]
    fn well_specified_recovers_value_function() {
        let inst = sample_instance(0.8, 0.0);
        let v = inst.value_function().unwrap();
        // Features spanning V* exactly.
        let phi = Matrix::from_fn(5, 2, |s, j| if j == 0 { v[s] } else { (s as f64 - 2.0).powi(2) });
        let m = td0_model(inst.kernel().clone(), phi.clone(), inst.rewards().clone(), 0.8, 0.0).unwrap();
        let theta = td0_exact_solution(&m).unwrap();
        assert_relative_eq!(&phi * &theta, v, epsilon = 1e-9);
    }

    #[test]
    fn pair_table_mean_matches_closed_form() {
        let m = Td0Model::new(sample_instance(0.6, 0.5)).unwrap();
        let inst = m.instance();
        let k = inst.sigma0() - inst.sigma1() * 0.6;
        let expected = Matrix::identity(3, 3) - k * inst.nu();
        assert_relative_eq!(m.mean_l().clone(), expected, epsilon = 1e-12);
        let theta = td0_exact_solution(&m).unwrap();
        let resid = &theta - m.mean_l() * &theta - m.mean_b();
        assert!(resid.amax() < 1e-9);
    }

    #[test]
    fn lambda_zero_is_td0_pathwise() {
        let inst = sample_instance(0.6, 0.5);
        let m0 = Td0Model::new(inst.clone()).unwrap();
        let ml = TdLambdaModel::new(inst, 0.0).unwrap();
        assert_eq!(ml.warmup(), 0);
        assert_eq!(gather(&m0, 17, 500), gather(&ml, 17, 500));
        assert_relative_eq!(
            tdlambda_exact_solution(&ml).unwrap(),
            td0_exact_solution(&m0).unwrap(),
            epsilon = 1e-12
        );
        assert_relative_eq!(ml.mean_l().clone(), m0.mean_l().clone(), epsilon = 1e-12);
    }

    #[test]
    fn trace_moment_matches_truncated_series() {
        let inst = sample_instance(0.9, 0.0);
        let lambda = 0.5;
        let c = 0.45f64;
        let d_xi = Matrix::from_diagonal(inst.stationary().weights());
        let mut sum = Matrix::zeros(3, 3);
        let mut pk = Matrix::identity(5, 5);
        let mut ck = 1.0;
        while ck > 1e-16 {
            sum += inst.features().transpose() * &d_xi * &pk * inst.features() * ck;
            pk = &pk * inst.kernel().probs();
            ck *= c;
        }
        assert_relative_eq!(inst.trace_feature_moment(lambda).unwrap(), sum, epsilon = 1e-12);
    }

    #[test]
    fn trace_stays_bounded() {
        let inst = sample_instance(0.9, 0.3);
        let bound = inst.max_feature_norm() / (1.0 - 0.9 * 0.7);
        let m = TdLambdaModel::new(inst, 0.7).unwrap().with_warmup(0);
        let mut cur = m.start(2);
        let mut obs = Observation::zeros(3);
        for _ in 0..10_000 {
            m.observe(&mut cur, &mut obs);
            assert!(cur.trace().norm() <= bound + 1e-12);
        }
    }

    #[test]
    fn lambda_zero_moments_match_pair_table() {
        let inst = sample_instance(0.6, 0.5);
        let ml = TdLambdaModel::new(inst, 0.0).unwrap();
        let theta = tdlambda_exact_solution(&ml).unwrap();
        let mom = ml.moments(&theta).unwrap();
        // At λ = 0, E[ggᵀ] = B.
        assert_relative_eq!(mom.trace_second_moment, ml.instance().b_matrix().clone(), epsilon = 1e-12);
        let nu = ml.instance().nu();
        let expected_mg = ml.instance().b_matrix() * (nu * nu * 0.25 / 3.0);
        assert_relative_eq!(mom.sigma_mg, expected_mg, epsilon = 1e-14);
    }
}
