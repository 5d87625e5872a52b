//! Finite-state Markov chain primitives.
//!
//! Kernels are dense row-stochastic matrices. Ergodicity is decided by a
//! spectral test: the chain is ergodic when exactly one eigenvalue of `P` has
//! modulus within `1e-9` of one. That rules out both reducible chains with
//! several closed classes and periodic chains.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DVector;
use rand::RngCore;

use crate::linalg::{Matrix, Vector};
use crate::rng::{self, categorical};
use crate::{Error, Result};

/// Row sums must be within this of one.
pub const ROW_SUM_TOL: f64 = 1e-12;
const UNIT_MODULUS_TOL: f64 = 1e-9;
const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;
/// Cap used for the mixing certificate cached on construction.
pub const DEFAULT_MIX_CAP: usize = 10_000;

/// Row-stochastic transition matrix `P(x, ·)`.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    probs: Matrix,
    cumulative: Vec<Vec<f64>>,
    ergodic: bool,
    stationary: Option<StationaryDistribution>,
    mixing: Option<MixingCertificate>,
}

/// Probability vector `ξ` with `ξP = ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    weights: Vector,
}

/// Smallest `t` at which the worst-pair total variation drops to `threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingCertificate {
    pub t_mix: usize,
    pub threshold: f64,
    pub max_tv_at_tmix: f64,
}

/// Law of the initial state of a sampled trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    State(usize),
    Distribution(Vec<f64>),
}

impl TransitionKernel {
    pub fn new(probs: Matrix) -> Result<Self> {
        let s = probs.nrows();
        if s == 0 || probs.ncols() != s {
            return Err(Error::InvalidKernel(format!(
                "expected a non-empty square matrix, got {}x{}",
                probs.nrows(),
                probs.ncols()
            )));
        }
        for (i, row) in probs.row_iter().enumerate() {
            let mut sum = 0.0;
            for &p in row.iter() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidKernel(format!("row {i}: entry {p} outside [0, 1]")));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidKernel(format!("row {i} sums to {sum}")));
            }
        }
        let cumulative = probs
            .row_iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .map(|&p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        let unit = count_unit_modulus(&probs);
        let mut kernel = TransitionKernel {
            probs,
            cumulative,
            ergodic: unit == 1,
            stationary: None,
            mixing: None,
        };
        if kernel.ergodic {
            kernel.stationary = Some(solve_stationary(&kernel.probs)?);
            kernel.mixing = tv_mixing_time(&kernel, 0.5, DEFAULT_MIX_CAP).ok();
        }
        Ok(kernel)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let s = rows.len();
        if rows.iter().any(|r| r.len() != s) {
            return Err(Error::InvalidKernel("rows must all have length equal to the row count".into()));
        }
        Self::new(Matrix::from_fn(s, s, |i, j| rows[i][j]))
    }

    /// Kernel whose every row equals `row` (an i.i.d. chain).
    pub fn rank_one(row: &[f64]) -> Result<Self> {
        let s = row.len();
        Self::new(Matrix::from_fn(s, s, |_, j| row[j]))
    }

    pub fn num_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn probs(&self) -> &Matrix {
        &self.probs
    }

    pub fn is_ergodic(&self) -> bool {
        self.ergodic
    }

    /// Cached stationary distribution; `None` when the chain is not ergodic.
    pub fn stationary(&self) -> Option<&StationaryDistribution> {
        self.stationary.as_ref()
    }

    /// Cached mixing certificate at threshold 1/2.
    pub fn mixing(&self) -> Option<&MixingCertificate> {
        self.mixing.as_ref()
    }

    pub fn next_state<R: RngCore + ?Sized>(&self, rng: &mut R, state: usize) -> usize {
        categorical(rng, &self.cumulative[state])
    }

    pub fn power(&self, k: usize) -> Matrix {
        let s = self.num_states();
        let mut out = Matrix::identity(s, s);
        for _ in 0..k {
            out = &out * &self.probs;
        }
        out
    }

    /// `(P + I) / 2`.
    pub fn lazy(&self) -> Result<Self> {
        let s = self.num_states();
        Self::new((&self.probs + Matrix::identity(s, s)) * 0.5)
    }

    /// Chain on ordered pairs `(s, s⁺)`, indexed `s * S + s⁺`.
    pub fn pair_chain(&self) -> Result<Self> {
        let s = self.num_states();
        let mut q = Matrix::zeros(s * s, s * s);
        for a in 0..s {
            for b in 0..s {
                for c in 0..s {
                    q[(a * s + b, b * s + c)] = self.probs[(b, c)];
                }
            }
        }
        Self::new(q)
    }

    fn require_ergodic(&self) -> Result<&StationaryDistribution> {
        self.stationary.as_ref().ok_or_else(|| Error::NonErgodic {
            unit_modulus: count_unit_modulus(&self.probs),
        })
    }
}

fn count_unit_modulus(p: &Matrix) -> usize {
    crate::linalg::eigen_moduli(p)
        .into_iter()
        .filter(|&m| m >= 1.0 - UNIT_MODULUS_TOL)
        .count()
}

fn solve_stationary(p: &Matrix) -> Result<StationaryDistribution> {
    let s = p.nrows();
    let mut a = p.transpose() - Matrix::identity(s, s);
    for j in 0..s {
        a[(s - 1, j)] = 1.0;
    }
    let mut rhs = Vector::zeros(s);
    rhs[s - 1] = 1.0;
    let mut w = crate::linalg::solve_vec(&a, &rhs)?;
    for v in w.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let total = w.sum();
    w /= total;
    let residual = (p.transpose() * &w - &w).amax();
    if residual > STATIONARY_RESIDUAL_TOL {
        return Err(Error::SingularSystem { min_singular: residual });
    }
    Ok(StationaryDistribution { weights: w })
}

impl StationaryDistribution {
    pub fn weights(&self) -> &Vector {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `E_ξ[f]` for each column of the per-state stack `f` (S × m).
    pub fn expect_rows(&self, f: &Matrix) -> Vector {
        f.transpose() * &self.weights
    }

    pub fn expect(&self, f: &[f64]) -> f64 {
        f.iter().zip(self.weights.iter()).map(|(a, b)| a * b).sum()
    }
}

/// Stationary distribution of an ergodic kernel.
pub fn stationary_distribution(kernel: &TransitionKernel) -> Result<StationaryDistribution> {
    kernel.require_ergodic().cloned()
}

fn worst_pair_tv(pt: &Matrix) -> f64 {
    let s = pt.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..s {
        for j in (i + 1)..s {
            let tv: f64 = (0..s).map(|k| (pt[(i, k)] - pt[(j, k)]).abs()).sum::<f64>() * 0.5;
            worst = worst.max(tv);
        }
    }
    worst
}

/// Exact total-variation mixing time by repeated matrix powering.
pub fn tv_mixing_time(kernel: &TransitionKernel, threshold: f64, t_cap: usize) -> Result<MixingCertificate> {
    if t_cap == 0 {
        return Err(Error::InvalidArgument("t_cap must be at least 1".into()));
    }
    let mut pt = kernel.probs.clone();
    for t in 1..=t_cap {
        let tv = worst_pair_tv(&pt);
        if tv <= threshold {
            return Ok(MixingCertificate {
                t_mix: t,
                threshold,
                max_tv_at_tmix: tv,
            });
        }
        pt = &pt * &kernel.probs;
    }
    Err(Error::NotMixedWithinCap { cap: t_cap, threshold })
}

/// Draws `n` states `s_0, …, s_{n−1}`; deterministic in `seed`.
pub fn sample_trajectory(kernel: &TransitionKernel, init: &Initial, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::InvalidArgument("trajectory length must be at least 1".into()));
    }
    let s = kernel.num_states();
    let mut rng = rng::stream(seed);
    let first = match init {
        Initial::State(x) if *x < s => *x,
        Initial::State(x) => {
            return Err(Error::InvalidArgument(format!("initial state {x} out of range")));
        }
        Initial::Distribution(w) => {
            if w.len() != s {
                return Err(Error::DimensionMismatch(format!(
                    "initial distribution has {} entries for {s} states",
                    w.len()
                )));
            }
            let mut acc = 0.0;
            let cum: Vec<f64> = w
                .iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect();
            categorical(&mut rng, &cum)
        }
    };
    let mut path = Vec::with_capacity(n);
    path.push(first);
    let mut cur = first;
    for _ in 1..n {
        cur = kernel.next_state(&mut rng, cur);
        path.push(cur);
    }
    Ok(path)
}

/// Green operator: returns `g` with `(I − P) g = f − E_ξ f` and `E_ξ g = 0`,
/// applied column-wise to the per-state stack `f` (S × m).
pub fn green_apply(kernel: &TransitionKernel, xi: &StationaryDistribution, f: &Matrix) -> Result<Matrix> {
    kernel.require_ergodic()?;
    let s = kernel.num_states();
    if f.nrows() != s || xi.len() != s {
        return Err(Error::DimensionMismatch(format!(
            "green_apply: kernel has {s} states, f has {} rows, xi has {} entries",
            f.nrows(),
            xi.len()
        )));
    }
    let mut aug = Matrix::zeros(s + 1, s);
    aug.view_mut((0, 0), (s, s))
        .copy_from(&(Matrix::identity(s, s) - &kernel.probs));
    for j in 0..s {
        aug[(s, j)] = xi.weights[j];
    }
    let means = xi.expect_rows(f);
    let mut rhs = Matrix::zeros(s + 1, f.ncols());
    for c in 0..f.ncols() {
        for i in 0..s {
            rhs[(i, c)] = f[(i, c)] - means[c];
        }
    }
    let svd = aug.clone().svd(true, true);
    let g = svd
        .solve(&rhs, 1e-13)
        .map_err(|_| Error::SingularSystem { min_singular: 0.0 })?;
    let scale = f.amax().max(1.0);
    let resid = (&aug * &g - &rhs).amax();
    if resid > 1e-10 * scale {
        return Err(Error::SingularSystem { min_singular: resid });
    }
    Ok(g)
}

/// Convenience wrapper of [`green_apply`] for a single per-state function.
pub fn green_apply_vec(kernel: &TransitionKernel, xi: &StationaryDistribution, f: &[f64]) -> Result<Vector> {
    let g = green_apply(kernel, xi, &Matrix::from_column_slice(f.len(), 1, f))?;
    Ok(DVector::from_iterator(f.len(), g.column(0).iter().copied()))
}
