#![allow(dead_code)]

use markov_lsa::markov::TransitionKernel;
use markov_lsa::model::{NoiseSpec, TabularModel, TdInstance, VarModel};
use markov_lsa::rng::{stream, StreamRng};
use markov_lsa::{Matrix, Vector};
use rand::Rng;

pub fn rng(seed: u64) -> StreamRng {
    stream(seed ^ 0x5eed_0f_7e57)
}

/// Dense kernel with every entry at least `floor / s`.
pub fn random_kernel(r: &mut StreamRng, s: usize, floor: f64) -> TransitionKernel {
    let mut p = Matrix::zeros(s, s);
    for i in 0..s {
        let mut row: Vec<f64> = (0..s).map(|_| floor / s as f64 + r.random::<f64>()).collect();
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= total);
        // Fix the rounding so each row sums to 1 within the validation tolerance.
        let head: f64 = row[..s - 1].iter().sum();
        row[s - 1] = 1.0 - head;
        for j in 0..s {
            p[(i, j)] = row[j];
        }
    }
    TransitionKernel::new(p).unwrap()
}

pub fn random_matrix(r: &mut StreamRng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * (2.0 * r.random::<f64>() - 1.0))
}

pub fn random_vector(r: &mut StreamRng, d: usize, scale: f64) -> Vector {
    Vector::from_fn(d, |_, _| scale * (2.0 * r.random::<f64>() - 1.0))
}

/// Tabular model whose per-state `L(s)` have operator norm at most `0.9 / √d`-ish,
/// so the averaged operator is comfortably stable.
pub fn random_tabular(seed: u64, s: usize, d: usize, noisy: bool) -> TabularModel {
    let mut r = rng(seed);
    let k = random_kernel(&mut r, s, 0.5);
    let l = (0..s).map(|_| random_matrix(&mut r, d, d, 0.6 / d as f64)).collect();
    let b = (0..s).map(|_| random_vector(&mut r, d, 1.0)).collect();
    let noise = if noisy {
        NoiseSpec::Entrywise {
            l_half_width: 0.1,
            b_half_width: 0.5,
        }
    } else {
        NoiseSpec::None
    };
    TabularModel::new(k, l, b, noise).unwrap()
}

pub fn random_td(seed: u64, s: usize, d: usize, gamma: f64, reward_half_width: f64) -> TdInstance {
    let mut r = rng(seed);
    let k = random_kernel(&mut r, s, 0.5);
    loop {
        let phi = random_matrix(&mut r, s, d, 1.0);
        let rewards = random_vector(&mut r, s, 1.0);
        if let Ok(inst) = TdInstance::new(k.clone(), phi, rewards, gamma, reward_half_width) {
            return inst;
        }
    }
}

/// Stable VAR(k) with spectral radius pushed below 0.9.
pub fn random_var(seed: u64, m: usize, k: usize) -> VarModel {
    let mut r = rng(seed);
    loop {
        let coeffs: Vec<Matrix> = (0..k).map(|_| random_matrix(&mut r, m, m, 0.4 / (m * k) as f64)).collect();
        let a = random_matrix(&mut r, m, m, 1.0);
        let cov = &a * a.transpose() + Matrix::identity(m, m) * 0.5;
        if let Ok(v) = VarModel::new(coeffs, cov) {
            return v;
        }
    }
}
