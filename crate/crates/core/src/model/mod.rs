//! Observation models.
//!
//! A model maps a trajectory of some underlying Markov process to a stream of
//! pairs `(L_t, b_t)` whose stationary means are `(L̄, b̄)`. Randomness is
//! confined to a per-run [`ObservationModel::Cursor`] built from a seed, so a
//! model value is immutable and can be shared between concurrent runs.

use alloc::vec::Vec;

use rand::RngCore;

use crate::linalg::{Matrix, Vector};
use crate::rng::unit_uniform;
use crate::Result;

mod tabular;
mod td;
mod var;

pub use tabular::{tabular_model, NoiseSpec, TabularCursor, TabularModel};
pub use td::{
    td0_exact_solution, td0_model, tdlambda_exact_solution, tdlambda_model, Td0Model, TdCursor, TdInstance,
    TdLambdaModel, TdLambdaMoments,
};
#[doc(hidden)]
pub use td::sample_instance;
pub use var::{lyapunov_certificate, var_exact_covariances, var_model, LyapunovCertificate, VarCursor, VarModel};

/// One observed pair, reused across steps to avoid reallocating.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub l: Matrix,
    pub b: Vector,
    /// Index of the finite state that generated the pair, when there is one.
    pub state: Option<usize>,
}

impl Observation {
    pub fn zeros(d: usize) -> Self {
        Observation {
            l: Matrix::zeros(d, d),
            b: Vector::zeros(d),
            state: None,
        }
    }
}

/// Generator of `(L_t, b_t)` along a single trajectory.
pub trait ObservationModel {
    type Cursor;

    fn dim(&self) -> usize;
    fn mean_l(&self) -> &Matrix;
    fn mean_b(&self) -> &Vector;
    /// Mixing time of the process that drives the observations.
    fn mixing_time(&self) -> usize;
    /// Starts a trajectory (at, or warmed up to, stationarity).
    fn start(&self, seed: u64) -> Self::Cursor;
    /// Writes the next observation into `out` and advances the cursor.
    fn observe(&self, cursor: &mut Self::Cursor, out: &mut Observation);

    fn fixed_point(&self) -> Result<Vector> {
        crate::engine::solve_fixed_point(self.mean_l(), self.mean_b())
    }

    /// Weighting `Q` for the error norm `‖x‖²_Q = xᵀQx`, if the model has a
    /// natural one.
    fn error_weight(&self) -> Option<&Matrix> {
        None
    }
}

/// Bounded additive noise `Σ_k ω_k (Z_k, ζ_k)` with `ω_k` i.i.d. uniform of
/// unit variance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NoiseBasis {
    pub terms: Vec<(Matrix, Vector)>,
}

impl NoiseBasis {
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Independent uniform noise on every entry of `L` (half-width `l_half`)
    /// and of `b` (half-width `b_half`).
    pub fn entrywise(d: usize, l_half: f64, b_half: f64) -> Self {
        let mut terms = Vec::new();
        if l_half > 0.0 {
            let scale = l_half / crate::rng::SQRT3;
            for j in 0..d {
                for i in 0..d {
                    let mut z = Matrix::zeros(d, d);
                    z[(i, j)] = scale;
                    terms.push((z, Vector::zeros(d)));
                }
            }
        }
        if b_half > 0.0 {
            let scale = b_half / crate::rng::SQRT3;
            for i in 0..d {
                let mut zeta = Vector::zeros(d);
                zeta[i] = scale;
                terms.push((Matrix::zeros(d, d), zeta));
            }
        }
        NoiseBasis { terms }
    }

    pub fn add_sample<R: RngCore + ?Sized>(&self, rng: &mut R, l: &mut Matrix, b: &mut Vector) {
        for (z, zeta) in &self.terms {
            let w = unit_uniform(rng);
            *l += z * w;
            b.axpy(w, zeta, 1.0);
        }
    }

    /// Covariance of `Zθ + ζ`.
    pub fn covariance_at(&self, theta: &Vector) -> Matrix {
        let d = theta.len();
        let mut out = Matrix::zeros(d, d);
        for (z, zeta) in &self.terms {
            let v = z * theta + zeta;
            out += &v * v.transpose();
        }
        out
    }

    /// `E[(row_j Z)ᵀ(row_j Z)]` for every row `j`.
    pub fn row_covariances(&self, d: usize) -> Vec<Matrix> {
        (0..d)
            .map(|j| {
                let mut c = Matrix::zeros(d, d);
                for (z, _) in &self.terms {
                    let r = z.row(j).transpose();
                    c += &r * r.transpose();
                }
                c
            })
            .collect()
    }

    /// Per-coordinate variance of `ζ`.
    pub fn b_variances(&self, d: usize) -> Vector {
        let mut v = Vector::zeros(d);
        for (_, zeta) in &self.terms {
            v += zeta.component_mul(zeta);
        }
        v
    }
}
