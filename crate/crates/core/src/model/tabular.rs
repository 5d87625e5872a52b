use alloc::format;
use alloc::vec::Vec;

use super::{NoiseBasis, Observation, ObservationModel};
use crate::linalg::{Matrix, Vector};
use crate::markov::{tv_mixing_time, StationaryDistribution, TransitionKernel, DEFAULT_MIX_CAP};
use crate::rng::{self, categorical, StreamRng};
use crate::{Error, Result};

/// Noise added to the tabulated means at every step.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    None,
    /// Independent uniform noise on each entry, given by half-widths.
    Entrywise { l_half_width: f64, b_half_width: f64 },
    /// One basis per state.
    Basis(Vec<NoiseBasis>),
}

/// Finite-state model: `L_t = L(s_t) + Z_t`, `b_t = b(s_t) + ζ_t`.
#[derive(Debug, Clone)]
pub struct TabularModel {
    kernel: TransitionKernel,
    xi: StationaryDistribution,
    xi_cumulative: Vec<f64>,
    l_table: Vec<Matrix>,
    b_table: Vec<Vector>,
    noise: Vec<NoiseBasis>,
    l_bar: Matrix,
    b_bar: Vector,
    t_mix: usize,
}

#[derive(Debug, Clone)]
pub struct TabularCursor {
    rng: StreamRng,
    state: usize,
}

impl TabularCursor {
    pub fn state(&self) -> usize {
        self.state
    }
}

pub fn tabular_model(
    kernel: TransitionKernel,
    l_table: Vec<Matrix>,
    b_table: Vec<Vector>,
    noise: NoiseSpec,
) -> Result<TabularModel> {
    TabularModel::new(kernel, l_table, b_table, noise)
}

impl TabularModel {
    pub fn new(kernel: TransitionKernel, l_table: Vec<Matrix>, b_table: Vec<Vector>, noise: NoiseSpec) -> Result<Self> {
        let s = kernel.num_states();
        let xi = crate::markov::stationary_distribution(&kernel)?;
        if l_table.len() != s || b_table.len() != s {
            return Err(Error::DimensionMismatch(format!(
                "{s} states but {} L entries and {} b entries",
                l_table.len(),
                b_table.len()
            )));
        }
        let d = b_table[0].len();
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        for (i, (l, b)) in l_table.iter().zip(&b_table).enumerate() {
            if l.nrows() != d || l.ncols() != d || b.len() != d {
                return Err(Error::DimensionMismatch(format!("state {i}: expected {d}x{d} L and length-{d} b")));
            }
            if l.iter().chain(b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("state {i}: non-finite table entry")));
            }
        }
        let noise = match noise {
            NoiseSpec::None => (0..s).map(|_| NoiseBasis::default()).collect(),
            NoiseSpec::Entrywise {
                l_half_width,
                b_half_width,
            } => {
                if l_half_width < 0.0 || b_half_width < 0.0 {
                    return Err(Error::InvalidArgument("noise half-widths must be nonnegative".into()));
                }
                let basis = NoiseBasis::entrywise(d, l_half_width, b_half_width);
                (0..s).map(|_| basis.clone()).collect()
            }
            NoiseSpec::Basis(bases) => {
                if bases.len() != s {
                    return Err(Error::DimensionMismatch(format!("{s} states but {} noise bases", bases.len())));
                }
                for basis in &bases {
                    if basis.terms.iter().any(|(z, zeta)| z.nrows() != d || z.ncols() != d || zeta.len() != d) {
                        return Err(Error::DimensionMismatch("noise basis element has wrong shape".into()));
                    }
                }
                bases
            }
        };
        let w = xi.weights();
        let mut l_bar = Matrix::zeros(d, d);
        let mut b_bar = Vector::zeros(d);
        for i in 0..s {
            l_bar += &l_table[i] * w[i];
            b_bar.axpy(w[i], &b_table[i], 1.0);
        }
        let t_mix = match kernel.mixing() {
            Some(cert) => cert.t_mix,
            None => tv_mixing_time(&kernel, 0.5, DEFAULT_MIX_CAP)?.t_mix,
        };
        let mut acc = 0.0;
        let xi_cumulative = w
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(TabularModel {
            kernel,
            xi,
            xi_cumulative,
            l_table,
            b_table,
            noise,
            l_bar,
            b_bar,
            t_mix,
        })
    }

    pub fn kernel(&self) -> &TransitionKernel {
        &self.kernel
    }

    pub fn stationary(&self) -> &StationaryDistribution {
        &self.xi
    }

    pub fn num_states(&self) -> usize {
        self.kernel.num_states()
    }

    pub fn l_table(&self) -> &[Matrix] {
        &self.l_table
    }

    pub fn b_table(&self) -> &[Vector] {
        &self.b_table
    }

    pub fn noise(&self) -> &[NoiseBasis] {
        &self.noise
    }

    pub fn mean_l_at(&self, s: usize) -> &Matrix {
        &self.l_table[s]
    }

    pub fn mean_b_at(&self, s: usize) -> &Vector {
        &self.b_table[s]
    }

    /// Draws one observation at state `s` without advancing any chain.
    pub fn sample_at(&self, rng: &mut StreamRng, s: usize, out: &mut Observation) {
        out.l.copy_from(&self.l_table[s]);
        out.b.copy_from(&self.b_table[s]);
        self.noise[s].add_sample(rng, &mut out.l, &mut out.b);
        out.state = Some(s);
    }
}

impl ObservationModel for TabularModel {
    type Cursor = TabularCursor;

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
        self.t_mix
    }

    fn start(&self, seed: u64) -> TabularCursor {
        let mut rng = rng::stream(seed);
        let state = categorical(&mut rng, &self.xi_cumulative);
        TabularCursor { rng, state }
    }

    fn observe(&self, cursor: &mut TabularCursor, out: &mut Observation) {
        self.sample_at(&mut cursor.rng, cursor.state, out);
        cursor.state = self.kernel.next_state(&mut cursor.rng, cursor.state);
    }
}
