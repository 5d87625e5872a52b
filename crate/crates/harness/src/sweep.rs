//! Replicated sweeps over horizons.

use std::io::Write;

use markov_lsa::engine::{theorem1_bound, theorem1_schedule, InstanceConstants, SAConfig};
use markov_lsa::linalg;
use markov_lsa::rng::cell_seed;
use markov_lsa::{Matrix, Vector};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::{ErrorNorm, ExperimentConfig, ScheduleKind};
use crate::error::{Context, HarnessError};
use crate::model::AnyModel;

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub n: usize,
    pub replication: usize,
    pub seed: u64,
    /// `None` when the run failed; `status` then names the error category.
    pub sq_error: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSummary {
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
    pub completed: usize,
    pub theorem1_bound: Option<f64>,
    pub eps_n_sq: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub cells: Vec<CellResult>,
    pub summaries: Vec<HorizonSummary>,
    pub fit: Option<SlopeFit>,
}

impl SweepResult {
    pub fn partial(&self) -> bool {
        self.cells.iter().any(|c| c.sq_error.is_none())
    }
}

/// Ordinary least squares of `y` on `x` with a 95% t interval for the slope.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Option<SlopeFit> {
    let k = x.len();
    if k < 2 || k != y.len() {
        return None;
    }
    let kf = k as f64;
    let mx = x.iter().sum::<f64>() / kf;
    let my = y.iter().sum::<f64>() / kf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    if k < 3 {
        return Some(SlopeFit {
            slope,
            lo: f64::NAN,
            hi: f64::NAN,
        });
    }
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let se = (rss / (kf - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, kf - 2.0).map(|d| d.inverse_cdf(0.975)).unwrap_or(f64::NAN);
    Some(SlopeFit {
        slope,
        lo: slope - t * se,
        hi: slope + t * se,
    })
}

struct Prepared {
    theta_bar: Vector,
    weight: Option<Matrix>,
    constants: Option<InstanceConstants>,
    sigmas: Option<(Matrix, Matrix)>,
}

fn prepare(model: &AnyModel, spec: &ExperimentConfig) -> Result<Prepared, HarnessError> {
    let theta_bar = model.fixed_point()?;
    let weight = match spec.norm {
        ErrorNorm::Euclidean => None,
        ErrorNorm::Weighted => Some(model.error_weight().unwrap_or_else(|| Matrix::identity(model.dim(), model.dim()))),
    };
    let constants = match spec.schedule {
        ScheduleKind::Theorem1 => Some(model.constants()?),
        ScheduleKind::Explicit => model.constants().ok(),
    };
    let sigmas = model.exact_sigmas().ok();
    Ok(Prepared {
        theta_bar,
        weight,
        constants,
        sigmas,
    })
}

fn cell_config(spec: &ExperimentConfig, constants: Option<&InstanceConstants>, n: usize, seed: u64) -> SAConfig {
    match (spec.schedule, constants) {
        (ScheduleKind::Theorem1, Some(k)) => SAConfig::from_schedule(&theorem1_schedule(spec.c, k, n), n, seed),
        _ => {
            let burn = (spec.burn_in_fraction * n as f64).floor() as usize;
            SAConfig::new(spec.stepsize.unwrap_or(f64::NAN), burn, n, seed)
        }
    }
}

fn sq_error(delta: &Vector, weight: Option<&Matrix>) -> f64 {
    match weight {
        Some(q) => delta.dot(&(q * delta)),
        None => delta.norm_squared(),
    }
}

/// Runs every `(n, replication)` cell; failures are recorded, not fatal.
pub fn run_sweep(model: &AnyModel, spec: &ExperimentConfig) -> Result<SweepResult, HarnessError> {
    let prep = prepare(model, spec)?;
    let cells: Vec<(usize, usize)> = spec
        .horizons
        .iter()
        .flat_map(|&n| (0..spec.replications).map(move |r| (n, r)))
        .collect();
    let results: Vec<CellResult> = cells
        .par_iter()
        .map(|&(n, r)| {
            let seed = cell_seed(spec.base_seed, n as u64, r as u64);
            let cfg = cell_config(spec, prep.constants.as_ref(), n, seed);
            match model.run(&cfg) {
                Ok(trace) => CellResult {
                    n,
                    replication: r,
                    seed,
                    sq_error: Some(sq_error(&(trace.average - &prep.theta_bar), prep.weight.as_ref())),
                    status: "ok".into(),
                },
                Err(e) => CellResult {
                    n,
                    replication: r,
                    seed,
                    sq_error: None,
                    status: e.category().as_str().into(),
                },
            }
        })
        .collect();

    let mut summaries = Vec::with_capacity(spec.horizons.len());
    for &n in &spec.horizons {
        let vals: Vec<f64> = results.iter().filter(|c| c.n == n).filter_map(|c| c.sq_error).collect();
        let k = vals.len();
        let mean = if k > 0 { vals.iter().sum::<f64>() / k as f64 } else { f64::NAN };
        let stderr = if k > 1 {
            (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64 / k as f64).sqrt()
        } else {
            f64::NAN
        };
        let theorem1 = match (&prep.constants, &prep.sigmas) {
            (Some(c), Some((mg, mkv))) => Some(theorem1_bound(c, mg, mkv, model.mean_l(), n, spec.c_prime).during("theorem-1 bound")?),
            _ => None,
        };
        let eps = match &prep.sigmas {
            Some((_, mkv)) if model.family() != crate::config::Family::Var => {
                Some(linalg::resolvent_trace(model.mean_l(), mkv).during("local radius")? / n as f64)
            }
            _ => None,
        };
        summaries.push(HorizonSummary {
            n,
            mean,
            stderr,
            completed: k,
            theorem1_bound: theorem1,
            eps_n_sq: eps,
        });
    }
    let pts: Vec<(f64, f64)> = summaries
        .iter()
        .filter(|s| s.mean > 0.0 && s.mean.is_finite())
        .map(|s| ((s.n as f64).ln(), s.mean.ln()))
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Ok(SweepResult {
        cells: results,
        summaries,
        fit: ols_slope(&x, &y),
    })
}

pub const CSV_HEADER: [&str; 13] = [
    "row",
    "n",
    "replication",
    "seed",
    "sq_error",
    "mean",
    "stderr",
    "theorem1_bound",
    "eps_n_sq",
    "slope",
    "slope_lo",
    "slope_hi",
    "status",
];

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// One row per cell, an `agg` row per horizon and a final `fit` row.
pub fn write_csv<W: Write>(result: &SweepResult, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for c in &result.cells {
        w.write_record([
            "cell".to_string(),
            c.n.to_string(),
            c.replication.to_string(),
            c.seed.to_string(),
            fmt_opt(c.sq_error),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            c.status.clone(),
        ])?;
    }
    for s in &result.summaries {
        w.write_record([
            "agg".to_string(),
            s.n.to_string(),
            String::new(),
            String::new(),
            String::new(),
            fmt(s.mean),
            fmt(s.stderr),
            fmt_opt(s.theorem1_bound),
            fmt_opt(s.eps_n_sq),
            String::new(),
            String::new(),
            String::new(),
            format!("{} ok", s.completed),
        ])?;
    }
    if let Some(f) = result.fit {
        let mut row = vec![String::from("fit")];
        row.extend(std::iter::repeat_n(String::new(), 8));
        row.extend([fmt(f.slope), fmt(f.lo), fmt(f.hi), String::new()]);
        w.write_record(row)?;
    }
    w.flush().map_err(|e| HarnessError::io("writing sweep csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ols_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 1.5 * v).collect();
        let f = ols_slope(&x, &y).unwrap();
        assert_relative_eq!(f.slope, -1.5, epsilon = 1e-12);
        assert_relative_eq!(f.lo, -1.5, epsilon = 1e-9);
        assert_relative_eq!(f.hi, -1.5, epsilon = 1e-9);
    }

    #[test]
    fn ols_interval_matches_hand_computation() {
        // Residuals ±0.1 around y = x: se² = rss/(k−2)/sxx = 0.04/2/5.
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [0.1, 0.9, 2.1, 2.9];
        let f = ols_slope(&x, &y).unwrap();
        assert_relative_eq!(f.slope, 0.96, epsilon = 1e-12);
        let rss: f64 = [0.1 - 0.06, 0.9 - 1.02, 2.1 - 1.98, 2.9 - 2.94].iter().map(|r: &f64| r * r).sum();
        let se = (rss / 2.0 / 5.0f64).sqrt();
        // t_{0.975, 2} = 4.302652729749464
        assert_relative_eq!(f.hi - f.slope, 4.302652729749464 * se, epsilon = 1e-9);
    }

    #[test]
    fn ols_degenerate() {
        assert!(ols_slope(&[1.0], &[2.0]).is_none());
        assert!(ols_slope(&[1.0, 1.0], &[2.0, 3.0]).is_none());
    }
}
