//! Models built from a config, behind one enum.

use markov_lsa::diagnostics::{self, InstanceReport};
use markov_lsa::engine::{sa_run, InstanceConstants, SAConfig, SATrace};
use markov_lsa::markov::TransitionKernel;
use markov_lsa::model::{
    NoiseSpec, ObservationModel, TabularModel, Td0Model, TdInstance, TdLambdaModel, VarModel,
};
use markov_lsa::{Matrix, Vector};

use crate::config::{Family, LoadedConfig, ModelConfig};
use crate::error::{Context, HarnessError};

#[derive(Debug, Clone)]
pub enum AnyModel {
    Tabular(TabularModel),
    Td0(Td0Model),
    TdLambda(TdLambdaModel),
    Var(VarModel),
}

macro_rules! dispatch {
    ($self:expr, $m:ident => $e:expr) => {
        match $self {
            AnyModel::Tabular($m) => $e,
            AnyModel::Td0($m) => $e,
            AnyModel::TdLambda($m) => $e,
            AnyModel::Var($m) => $e,
        }
    };
}

impl AnyModel {
    pub fn family(&self) -> Family {
        match self {
            AnyModel::Tabular(_) => Family::Tabular,
            AnyModel::Td0(_) => Family::Td0,
            AnyModel::TdLambda(_) => Family::Tdlambda,
            AnyModel::Var(_) => Family::Var,
        }
    }

    pub fn dim(&self) -> usize {
        dispatch!(self, m => m.dim())
    }

    pub fn mean_l(&self) -> &Matrix {
        dispatch!(self, m => m.mean_l())
    }

    pub fn mixing_time(&self) -> usize {
        dispatch!(self, m => m.mixing_time())
    }

    pub fn fixed_point(&self) -> Result<Vector, HarnessError> {
        dispatch!(self, m => m.fixed_point()).during("exact fixed point")
    }

    pub fn error_weight(&self) -> Option<Matrix> {
        dispatch!(self, m => m.error_weight().cloned())
    }

    pub fn run(&self, config: &SAConfig) -> markov_lsa::Result<SATrace> {
        dispatch!(self, m => sa_run(m, config))
    }

    /// Kernel of the underlying finite chain, if any.
    pub fn kernel(&self) -> Option<&TransitionKernel> {
        match self {
            AnyModel::Tabular(m) => Some(m.kernel()),
            AnyModel::Td0(m) => Some(m.instance().kernel()),
            AnyModel::TdLambda(m) => Some(m.instance().kernel()),
            AnyModel::Var(_) => None,
        }
    }

    pub fn td_instance(&self) -> Option<&TdInstance> {
        match self {
            AnyModel::Td0(m) => Some(m.instance()),
            AnyModel::TdLambda(m) => Some(m.instance()),
            _ => None,
        }
    }

    /// Constants for the theorem-1 schedule; unavailable for VAR.
    pub fn constants(&self) -> Result<InstanceConstants, HarnessError> {
        match self {
            AnyModel::Tabular(m) => markov_lsa::engine::instance_constants(m).during("instance constants"),
            AnyModel::Td0(m) => markov_lsa::engine::instance_constants(m.as_tabular()).during("instance constants"),
            AnyModel::TdLambda(m) => m.instance_constants().during("instance constants"),
            AnyModel::Var(_) => Err(HarnessError::Numerical {
                operation: "instance constants".into(),
                source: markov_lsa::Error::InvalidArgument(
                    "VAR observations are unbounded; use an explicit schedule".into(),
                ),
            }),
        }
    }

    /// Exact `(Σ_MG, Σ_Mkv)` at the fixed point.
    pub fn exact_sigmas(&self) -> Result<(Matrix, Matrix), HarnessError> {
        match self {
            AnyModel::Tabular(m) => exact_tabular(m),
            AnyModel::Td0(m) => exact_tabular(m.as_tabular()),
            AnyModel::TdLambda(m) => {
                let theta = m.fixed_point().during("exact fixed point")?;
                let mom = m.moments(&theta).during("TD(lambda) moments")?;
                Ok((mom.sigma_mg, mom.sigma_mkv))
            }
            AnyModel::Var(m) => {
                let d = m.dim();
                Ok((m.residual_covariance(), Matrix::zeros(d, d)))
            }
        }
    }

    /// Full diagnostics report; VAR has no theorem-1 constants.
    pub fn report(&self, horizons: &[usize], c_prime: f64) -> Result<InstanceReport, HarnessError> {
        match self {
            AnyModel::Tabular(m) => diagnostics::instance_report(m, horizons, c_prime).during("diagnose"),
            AnyModel::Td0(m) => diagnostics::instance_report(m.as_tabular(), horizons, c_prime).during("diagnose"),
            AnyModel::TdLambda(m) => diagnostics::tdlambda_report(m, horizons, c_prime).during("diagnose"),
            AnyModel::Var(_) => Err(self.constants().expect_err("VAR has no constants")),
        }
    }
}

fn exact_tabular(m: &TabularModel) -> Result<(Matrix, Matrix), HarnessError> {
    Ok((
        diagnostics::sigma_mg_exact(m).during("exact martingale covariance")?,
        diagnostics::sigma_mkv_exact(m).during("exact Markov covariance")?,
    ))
}

fn matrix(rows: &[Vec<f64>]) -> Option<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return None;
    }
    Some(Matrix::from_row_iterator(r, c, rows.iter().flatten().copied()))
}

pub fn build(cfg: &LoadedConfig) -> Result<AnyModel, HarnessError> {
    let m = &cfg.config.model;
    let need = |what: &str| cfg.error("model", "family", format!("family `{}` needs `{what}`", m.family.as_str()));
    match m.family {
        Family::Tabular => {
            let kernel = kernel(cfg, m)?;
            let l_table = m.l_table.as_ref().ok_or_else(|| need("l_table"))?;
            let b_table = m.b_table.as_ref().ok_or_else(|| need("b_table"))?;
            let l = l_table
                .iter()
                .map(|rows| matrix(rows))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| cfg.error("model", "l_table", "ragged matrix in l_table"))?;
            let b = b_table.iter().map(|v| Vector::from_column_slice(v)).collect();
            let noise = if m.l_half_width > 0.0 || m.b_half_width > 0.0 {
                NoiseSpec::Entrywise {
                    l_half_width: m.l_half_width,
                    b_half_width: m.b_half_width,
                }
            } else {
                NoiseSpec::None
            };
            TabularModel::new(kernel, l, b, noise).during("building tabular model").map(AnyModel::Tabular)
        }
        Family::Td0 | Family::Tdlambda => {
            let kernel = kernel(cfg, m)?;
            let features = m.features.as_ref().ok_or_else(|| need("features"))?;
            let phi = matrix(features).ok_or_else(|| cfg.error("model", "features", "ragged feature matrix"))?;
            let rewards = Vector::from_column_slice(m.rewards.as_ref().ok_or_else(|| need("rewards"))?);
            let gamma = m.gamma.ok_or_else(|| need("gamma"))?;
            let inst = TdInstance::new(kernel, phi, rewards, gamma, m.reward_half_width).during("building TD instance")?;
            if m.family == Family::Td0 {
                return Td0Model::new(inst).during("building TD(0) model").map(AnyModel::Td0);
            }
            let lambda = m.lambda.ok_or_else(|| need("lambda"))?;
            let mut model = TdLambdaModel::new(inst, lambda).during("building TD(lambda) model")?;
            if let Some(w) = m.warmup {
                model = model.with_warmup(w);
            }
            Ok(AnyModel::TdLambda(model))
        }
        Family::Var => {
            let coeffs = m
                .coefficients
                .as_ref()
                .ok_or_else(|| need("coefficients"))?
                .iter()
                .map(|rows| matrix(rows))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| cfg.error("model", "coefficients", "ragged coefficient matrix"))?;
            let cov = matrix(m.noise_cov.as_ref().ok_or_else(|| need("noise_cov"))?)
                .ok_or_else(|| cfg.error("model", "noise_cov", "ragged noise covariance"))?;
            VarModel::new(coeffs, cov).during("building VAR model").map(AnyModel::Var)
        }
    }
}

fn kernel(cfg: &LoadedConfig, m: &ModelConfig) -> Result<TransitionKernel, HarnessError> {
    let rows = match (&m.kernel, &m.kernel_file) {
        (Some(k), None) => k.clone(),
        (None, Some(f)) => crate::config::read_kernel_file(&cfg.resolve(f))?,
        (Some(_), Some(_)) => return Err(cfg.error("model", "kernel_file", "give either `kernel` or `kernel_file`")),
        (None, None) => return Err(cfg.error("model", "family", "missing `kernel` or `kernel_file`")),
    };
    let p = matrix(&rows).ok_or_else(|| cfg.error("model", "kernel", "ragged kernel rows"))?;
    TransitionKernel::new(p).during("reading transition kernel")
}
