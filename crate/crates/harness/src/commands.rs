//! Subcommand bodies. Each returns the human-readable summary and writes
//! its CSV artifact when the config names one.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use markov_lsa::engine::{theorem1_schedule, SAConfig};
use markov_lsa::markov::tv_mixing_time;
use markov_lsa::model::{var_exact_covariances, ObservationModel, Observation, VarModel};
use markov_lsa::rng::cell_seed;
use markov_lsa::selection::{self, LambdaCandidate, SelectionConfig};
use markov_lsa::Matrix;
use rayon::prelude::*;

use crate::config::{DiagnoseConfig, LoadedConfig, MixingConfig, ScheduleKind};
use crate::error::{Context, HarnessError};
use crate::model::{build, AnyModel};
use crate::sweep::{fmt, fmt_opt, run_sweep, write_csv};

fn create(path: &str) -> Result<BufWriter<File>, HarnessError> {
    let p = Path::new(path);
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(format!("creating {}", dir.display()), e))?;
    }
    File::create(p)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::io(format!("creating {path}"), e))
}

fn csv_to(path: &str) -> Result<csv::Writer<BufWriter<File>>, HarnessError> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn finish(mut w: csv::Writer<BufWriter<File>>, path: &str) -> Result<(), HarnessError> {
    w.flush().map_err(|e| HarnessError::io(format!("writing {path}"), e))
}

fn vec_str(v: &markov_lsa::Vector) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn diagnose(cfg: &LoadedConfig) -> Result<String, HarnessError> {
    let model = build(cfg)?;
    let dc = cfg.config.diagnose.clone().unwrap_or_else(DiagnoseConfig::default);
    let mut out = String::new();
    let mut rows: Vec<(String, String, f64)> = Vec::new();
    writeln!(out, "family      {}", model.family().as_str()).ok();
    writeln!(out, "dim         {}", model.dim()).ok();
    if let AnyModel::Var(v) = &model {
        let theta = model.fixed_point()?;
        let (mg, _) = model.exact_sigmas()?;
        let trace = markov_lsa::linalg::resolvent_trace(model.mean_l(), &mg).during("diagnose")?;
        let k = selection::kappa_of(model.mean_l());
        writeln!(out, "kappa       {k:.6}").ok();
        writeln!(out, "t_mix bound {}", v.certificate().t_mix_bound).ok();
        writeln!(out, "tr Sigma_MG {:.6e}", mg.trace()).ok();
        writeln!(out, "leading tr  {trace:.6e}").ok();
        writeln!(out, "theta_bar   {}", vec_str(&theta)).ok();
        rows.extend([
            ("kappa".into(), String::new(), k),
            ("t_mix".into(), String::new(), v.certificate().t_mix_bound as f64),
            ("tr_sigma_mg".into(), String::new(), mg.trace()),
            ("tr_sigma_mkv".into(), String::new(), 0.0),
            ("leading_trace".into(), String::new(), trace),
        ]);
        for &n in &dc.horizons {
            rows.push(("combined_radius".into(), n.to_string(), (trace / n as f64).sqrt()));
        }
    } else {
        let r = model.report(&dc.horizons, dc.c_prime)?;
        let k = &r.constants;
        writeln!(out, "kappa       {:.6}", k.kappa).ok();
        writeln!(out, "gamma_max   {:.6}", k.gamma_max).ok();
        writeln!(out, "t_mix       {}", k.t_mix).ok();
        writeln!(out, "sigma_L     {:.6}", k.sigma_l).ok();
        writeln!(out, "sigma_b     {:.6}", k.sigma_b).ok();
        writeln!(out, "sigma_bar   {:.6}", k.sigma_bar).ok();
        writeln!(out, "tr Sigma_MG {:.6e}", r.sigma_mg.trace()).ok();
        writeln!(out, "tr Sigma_Mkv {:.6e}", r.sigma_mkv.trace()).ok();
        writeln!(out, "leading tr  {:.6e}", r.leading_trace).ok();
        writeln!(out, "markov tr   {:.6e}", r.markov_trace).ok();
        if let Some(l) = &r.lambda {
            writeln!(out, "tr Lambda    {:.6e}", l.trace()).ok();
        }
        writeln!(out, "theta_bar   {}", vec_str(&r.theta_bar)).ok();
        writeln!(out, "provenance  {}", r.provenance).ok();
        writeln!(out, "{:>10} {:>14} {:>14} {:>14}", "n", "eps_n", "radius", "theorem1").ok();
        rows.extend([
            ("kappa".into(), String::new(), k.kappa),
            ("gamma_max".into(), String::new(), k.gamma_max),
            ("t_mix".into(), String::new(), k.t_mix as f64),
            ("sigma_l".into(), String::new(), k.sigma_l),
            ("sigma_b".into(), String::new(), k.sigma_b),
            ("sigma_bar".into(), String::new(), k.sigma_bar),
            ("tr_sigma_mg".into(), String::new(), r.sigma_mg.trace()),
            ("tr_sigma_mkv".into(), String::new(), r.sigma_mkv.trace()),
            ("leading_trace".into(), String::new(), r.leading_trace),
            ("markov_trace".into(), String::new(), r.markov_trace),
        ]);
        for h in &r.horizons {
            writeln!(out, "{:>10} {:>14.6e} {:>14.6e} {:>14.6e}", h.n, h.epsilon_n, h.combined_radius, h.theorem1_bound).ok();
            rows.push(("eps_n".into(), h.n.to_string(), h.epsilon_n));
            rows.push(("combined_radius".into(), h.n.to_string(), h.combined_radius));
            rows.push(("theorem1_bound".into(), h.n.to_string(), h.theorem1_bound));
        }
    }
    if let Some(path) = &dc.csv {
        let mut w = csv_to(path)?;
        w.write_record(["quantity", "n", "value"])?;
        for (q, n, v) in rows {
            w.write_record([q, n, fmt(v)])?;
        }
        finish(w, path)?;
    }
    Ok(out)
}

pub fn run(cfg: &LoadedConfig, horizon: Option<usize>, seed: Option<u64>) -> Result<String, HarnessError> {
    let model = build(cfg)?;
    let exp = cfg.experiment()?;
    let rc = cfg.config.run.clone();
    let n = horizon
        .or(rc.as_ref().and_then(|r| r.horizon))
        .unwrap_or(*exp.horizons.last().expect("validated non-empty"));
    let seed = seed.or(rc.as_ref().and_then(|r| r.seed)).unwrap_or(cell_seed(exp.base_seed, n as u64, 0));
    let config = match exp.schedule {
        ScheduleKind::Theorem1 => SAConfig::from_schedule(&theorem1_schedule(exp.c, &model.constants()?, n), n, seed),
        ScheduleKind::Explicit => SAConfig::new(
            exp.stepsize.expect("validated"),
            (exp.burn_in_fraction * n as f64).floor() as usize,
            n,
            seed,
        ),
    };
    let trace = model.run(&config).during("stochastic approximation run")?;
    let theta_bar = model.fixed_point()?;
    let err = (&trace.average - &theta_bar).norm_squared();
    let mut out = String::new();
    writeln!(out, "n           {n}").ok();
    writeln!(out, "seed        {seed}").ok();
    writeln!(out, "stepsize    {:.6e}", config.stepsize).ok();
    writeln!(out, "burn_in     {}", config.burn_in).ok();
    writeln!(out, "theta_hat   {}", vec_str(&trace.average)).ok();
    writeln!(out, "theta_last  {}", vec_str(&trace.last_iterate)).ok();
    writeln!(out, "theta_bar   {}", vec_str(&theta_bar)).ok();
    writeln!(out, "sq_error    {err:.6e}").ok();
    if let Some(path) = rc.and_then(|r| r.csv) {
        let mut w = csv_to(&path)?;
        w.write_record(["coord", "theta_hat", "theta_last", "theta_bar"])?;
        for i in 0..theta_bar.len() {
            w.write_record([i.to_string(), fmt(trace.average[i]), fmt(trace.last_iterate[i]), fmt(theta_bar[i])])?;
        }
        finish(w, &path)?;
    }
    Ok(out)
}

pub fn sweep(cfg: &LoadedConfig) -> Result<String, HarnessError> {
    let model = build(cfg)?;
    let exp = cfg.experiment()?;
    let result = run_sweep(&model, exp)?;
    if let Some(path) = &exp.csv {
        write_csv(&result, create(path)?)?;
    }
    let mut out = String::new();
    writeln!(out, "{:>10} {:>14} {:>14} {:>14} {:>14}", "n", "mean_mse", "stderr", "theorem1", "eps_n_sq").ok();
    for s in &result.summaries {
        writeln!(
            out,
            "{:>10} {:>14.6e} {:>14.6e} {:>14} {:>14}",
            s.n,
            s.mean,
            s.stderr,
            s.theorem1_bound.map(|v| format!("{v:.6e}")).unwrap_or("-".into()),
            s.eps_n_sq.map(|v| format!("{v:.6e}")).unwrap_or("-".into()),
        )
        .ok();
    }
    if let Some(f) = result.fit {
        writeln!(out, "slope {:.4} (95% CI {:.4} .. {:.4})", f.slope, f.lo, f.hi).ok();
    }
    if result.partial() {
        let failed = result.cells.iter().filter(|c| c.sq_error.is_none()).count();
        writeln!(out, "warning: {failed} cells failed; see the status column").ok();
    }
    Ok(out)
}

pub struct SelectionOutcome {
    pub selected: Option<usize>,
    pub candidates: Vec<LambdaCandidate>,
}

/// The plug-in recipe with candidates evaluated in parallel on one trajectory.
pub fn run_selection(cfg: &LoadedConfig) -> Result<SelectionOutcome, HarnessError> {
    let model = build(cfg)?;
    let inst = model
        .td_instance()
        .ok_or_else(|| cfg.error("model", "family", "select-lambda needs a td0 or tdlambda model"))?;
    let sc = cfg
        .config
        .selection
        .as_ref()
        .ok_or_else(|| HarnessError::config(&cfg.path, None, "missing [selection] table"))?;
    let grid = sc.grid.clone().unwrap_or_else(|| selection::default_grid(inst.gamma(), sc.grid_points));
    if grid.iter().any(|&l| !(0.0..=inst.gamma()).contains(&l)) {
        return Err(cfg.error("selection", "grid", "grid points must lie in [0, gamma]"));
    }
    let mut config = SelectionConfig::new(grid.clone(), sc.horizon, sc.seed, sc.approx_error_prior);
    config.c = sc.c;
    config.stepsize_c = sc.stepsize_c;
    config.t_mix = sc.t_mix;
    let traj = selection::sample_shared(inst, sc.horizon, sc.seed);
    let candidates: Vec<LambdaCandidate> = grid
        .par_iter()
        .map(|&l| {
            selection::evaluate_candidate(inst, &traj, l, &config).unwrap_or_else(|e| LambdaCandidate {
                lambda: l,
                m_lambda: Matrix::zeros(inst.dim(), inst.dim()),
                kappa: f64::NAN,
                alpha: f64::NAN,
                est_cov_trace: f64::NAN,
                higher_order: f64::NAN,
                total_error: f64::INFINITY,
                stepsize: f64::NAN,
                theta_hat: None,
                failure: Some(format!("{}: {e}", e.category().as_str())),
            })
        })
        .collect();
    Ok(SelectionOutcome {
        selected: selection::pick(&candidates),
        candidates,
    })
}

pub fn select_lambda(cfg: &LoadedConfig) -> Result<String, HarnessError> {
    let res = run_selection(cfg)?;
    let mut out = String::new();
    writeln!(out, "{:>8} {:>10} {:>10} {:>14} {:>14} {:>14}", "lambda", "kappa", "alpha", "trace_est", "higher", "total").ok();
    for (i, c) in res.candidates.iter().enumerate() {
        let mark = if Some(i) == res.selected { " *" } else { "" };
        match &c.failure {
            None => writeln!(
                out,
                "{:>8.4} {:>10.6} {:>10.6} {:>14.6e} {:>14.6e} {:>14.6e}{mark}",
                c.lambda, c.kappa, c.alpha, c.est_cov_trace, c.higher_order, c.total_error
            ),
            Some(f) => writeln!(out, "{:>8.4} failed: {f}", c.lambda),
        }
        .ok();
    }
    match res.selected {
        Some(i) => writeln!(out, "selected lambda = {}", res.candidates[i].lambda).ok(),
        None => writeln!(out, "no candidate could be evaluated").ok(),
    };
    if let Some(path) = cfg.config.selection.as_ref().and_then(|s| s.csv.clone()) {
        let mut w = csv_to(&path)?;
        w.write_record(["lambda", "kappa", "alpha", "est_cov_trace", "higher_order", "total_error", "selected", "status"])?;
        for (i, c) in res.candidates.iter().enumerate() {
            w.write_record([
                fmt(c.lambda),
                fmt(c.kappa),
                fmt(c.alpha),
                fmt(c.est_cov_trace),
                fmt(c.higher_order),
                fmt(c.total_error),
                u8::from(Some(i) == res.selected).to_string(),
                c.failure.clone().unwrap_or_else(|| "ok".into()),
            ])?;
        }
        finish(w, &path)?;
    }
    Ok(out)
}

/// Per-replication coefficient estimates from averaged SA.
pub fn var_estimates(model: &VarModel, cfg: &crate::config::VarFitConfig) -> Vec<(u64, markov_lsa::Result<Vec<Matrix>>)> {
    let n = cfg.horizon;
    (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let seed = cell_seed(cfg.base_seed, n as u64, r as u64);
            let burn = (cfg.burn_in_fraction * n as f64).floor() as usize;
            let run = markov_lsa::engine::sa_run(model, &SAConfig::new(cfg.stepsize, burn, n, seed));
            (seed, run.map(|t| model.unvec(&t.average)))
        })
        .collect()
}

fn empirical_gammas(model: &VarModel, seed: u64, n: usize, max_lag: usize) -> Vec<Matrix> {
    let m = model.process_dim();
    let mut cur = model.start(seed);
    let mut obs = Observation::zeros(model.dim());
    let mut xs = Vec::with_capacity(n);
    for _ in 0..n {
        model.observe(&mut cur, &mut obs);
        xs.push(cur.window().rows(0, m).into_owned());
    }
    (0..=max_lag)
        .map(|k| {
            let mut g = Matrix::zeros(m, m);
            for t in 0..n.saturating_sub(k) {
                g.ger(1.0, &xs[t + k], &xs[t], 1.0);
            }
            g / n as f64
        })
        .collect()
}

pub fn var_fit(cfg: &LoadedConfig) -> Result<String, HarnessError> {
    let model = build(cfg)?;
    let AnyModel::Var(var) = &model else {
        return Err(cfg.error("model", "family", "var-fit needs a var model"));
    };
    let vc = cfg
        .config
        .var_fit
        .as_ref()
        .ok_or_else(|| HarnessError::config(&cfg.path, None, "missing [var_fit] table"))?;
    let truth = var.coefficients();
    let ests = var_estimates(var, vc);
    let mut errs: Vec<f64> = Vec::new();
    let mut failed = 0;
    for (_, e) in &ests {
        match e {
            Ok(a) => errs.push(a.iter().zip(truth).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)),
            Err(_) => failed += 1,
        }
    }
    errs.sort_by(f64::total_cmp);
    let median = if errs.is_empty() {
        f64::NAN
    } else if errs.len() % 2 == 1 {
        errs[errs.len() / 2]
    } else {
        0.5 * (errs[errs.len() / 2 - 1] + errs[errs.len() / 2])
    };
    let max_lag = vc.max_lag.unwrap_or(var.order());
    let exact = var_exact_covariances(var, max_lag);
    let emp = empirical_gammas(var, cell_seed(vc.base_seed, vc.horizon as u64, 0), vc.horizon, max_lag);
    let mut out = String::new();
    writeln!(out, "order {} dim {} horizon {} replications {}", var.order(), var.process_dim(), vc.horizon, vc.replications).ok();
    writeln!(out, "median max |A_hat - A| = {median:.6e}").ok();
    if failed > 0 {
        writeln!(out, "warning: {failed} replications failed").ok();
    }
    if let Some((_, Ok(first))) = ests.first() {
        for (i, a) in first.iter().enumerate() {
            writeln!(out, "A{} (replication 0) = {:?}", i + 1, a.as_slice()).ok();
        }
    }
    for (k, (g, e)) in exact.iter().zip(&emp).enumerate() {
        writeln!(out, "Gamma_{k}: exact {:?} empirical {:?}", g.as_slice(), e.as_slice()).ok();
    }
    if let Some(path) = &vc.csv {
        let mut w = csv_to(path)?;
        w.write_record(["replication", "seed", "lag", "row", "col", "estimate", "truth", "abs_error", "status"])?;
        for (r, (seed, est)) in ests.iter().enumerate() {
            match est {
                Ok(a) => {
                    for (i, (ai, ti)) in a.iter().zip(truth).enumerate() {
                        for row in 0..ai.nrows() {
                            for col in 0..ai.ncols() {
                                let (x, y) = (ai[(row, col)], ti[(row, col)]);
                                w.write_record([
                                    r.to_string(),
                                    seed.to_string(),
                                    (i + 1).to_string(),
                                    row.to_string(),
                                    col.to_string(),
                                    fmt(x),
                                    fmt(y),
                                    fmt((x - y).abs()),
                                    "ok".into(),
                                ])?;
                            }
                        }
                    }
                }
                Err(e) => w.write_record([
                    r.to_string(),
                    seed.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    e.category().as_str().into(),
                ])?,
            }
        }
        finish(w, path)?;
    }
    if let Some(path) = &vc.gamma_csv {
        let mut w = csv_to(path)?;
        w.write_record(["lag", "row", "col", "exact", "empirical"])?;
        for (k, (g, e)) in exact.iter().zip(&emp).enumerate() {
            for row in 0..g.nrows() {
                for col in 0..g.ncols() {
                    w.write_record([k.to_string(), row.to_string(), col.to_string(), fmt(g[(row, col)]), fmt(e[(row, col)])])?;
                }
            }
        }
        finish(w, path)?;
    }
    Ok(out)
}

pub fn mixing(cfg: &LoadedConfig) -> Result<String, HarnessError> {
    let model = build(cfg)?;
    let mc = cfg.config.mixing.clone().unwrap_or_else(MixingConfig::default);
    let mut out = String::new();
    let mut rows: Vec<(String, String, String)> = Vec::new();
    match model.kernel() {
        Some(k) => {
            let cert = tv_mixing_time(k, mc.threshold, mc.cap).during("mixing time")?;
            writeln!(out, "t_mix       {}", cert.t_mix).ok();
            writeln!(out, "threshold   {}", cert.threshold).ok();
            writeln!(out, "max TV      {:.6e}", cert.max_tv_at_tmix).ok();
            rows.push(("t_mix".into(), String::new(), cert.t_mix.to_string()));
            rows.push(("threshold".into(), String::new(), fmt(cert.threshold)));
            rows.push(("max_tv".into(), String::new(), fmt(cert.max_tv_at_tmix)));
            let xi = markov_lsa::markov::stationary_distribution(k).during("stationary distribution")?;
            writeln!(out, "stationary  {}", vec_str(xi.weights())).ok();
            for (i, w) in xi.weights().iter().enumerate() {
                rows.push(("stationary".into(), i.to_string(), fmt(*w)));
            }
        }
        None => {
            let AnyModel::Var(v) = &model else { unreachable!("only VAR lacks a kernel") };
            let c = v.certificate();
            writeln!(out, "t_mix bound {} (Lyapunov certificate)", c.t_mix_bound).ok();
            writeln!(out, "beta        {:.6e}", c.beta).ok();
            writeln!(out, "mu          {:.6e}", c.mu).ok();
            rows.push(("t_mix_bound".into(), String::new(), c.t_mix_bound.to_string()));
            rows.push(("beta".into(), String::new(), fmt(c.beta)));
            rows.push(("mu".into(), String::new(), fmt(c.mu)));
            rows.push(("residual".into(), String::new(), fmt_opt(Some(c.residual))));
        }
    }
    if let Some(path) = &mc.csv {
        let mut w = csv_to(path)?;
        w.write_record(["quantity", "index", "value"])?;
        for (q, i, v) in rows {
            w.write_record([q, i, v])?;
        }
        finish(w, path)?;
    }
    Ok(out)
}
