use std::path::{Path, PathBuf};
use std::process::Command;

use markov_lsa::diagnostics::collect_residuals;
use markov_lsa::model::ObservationModel;
use markov_lsa::rng::cell_seed;
use mlsa::config::{self, ExperimentConfig};
use mlsa::model::{build, AnyModel};
use mlsa::sweep::{run_sweep, CSV_HEADER};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn mlsa(args: &[&str], threads: Option<&str>) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mlsa"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("MLSA_THREADS", t),
        None => cmd.env_remove("MLSA_THREADS"),
    };
    cmd.output().unwrap()
}

fn stdout(o: &std::process::Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn mixing_on_rank_one_kernel_is_one() {
    let cfg = configs().join("rank_one.toml");
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("m.csv");
    let out = stdout(&mlsa(
        &["mixing", cfg.to_str().unwrap(), "--set", &format!("mixing.csv=\"{}\"", csv.display())],
        None,
    ));
    assert!(out.contains("t_mix       1\n"), "{out}");
    let text = std::fs::read_to_string(csv).unwrap();
    assert!(text.starts_with("quantity,index,value\nt_mix,,1\n"), "{text}");
}

#[test]
fn diagnose_reports_instance_quantities() {
    let cfg = configs().join("td0_five_state.toml");
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    let out = stdout(&mlsa(
        &["diagnose", cfg.to_str().unwrap(), "--set", &format!("diagnose.csv=\"{}\"", csv.display())],
        None,
    ));
    for key in ["kappa", "t_mix", "tr Sigma_MG", "tr Sigma_Mkv", "65536"] {
        assert!(out.contains(key), "missing {key}: {out}");
    }
    let loaded = config::load(&cfg, &[]).unwrap();
    let AnyModel::Td0(m) = build(&loaded).unwrap() else { panic!() };
    let mkv = markov_lsa::diagnostics::sigma_mkv_exact(m.as_tabular()).unwrap();
    let eps = (markov_lsa::linalg::resolvent_trace(m.as_tabular().mean_l(), &mkv).unwrap() / 65536.0).sqrt();
    let mut rdr = csv::Reader::from_path(csv).unwrap();
    let row = rdr
        .records()
        .map(|r| r.unwrap())
        .find(|r| &r[0] == "eps_n" && &r[1] == "65536")
        .unwrap();
    let got: f64 = row[2].parse().unwrap();
    assert!((got - eps).abs() <= 1e-12 * eps, "{got} vs {eps}");
}

fn small_sweep_args(csv: &Path) -> Vec<String> {
    let cfg = configs().join("td0_five_state.toml");
    vec![
        "sweep".into(),
        cfg.to_str().unwrap().into(),
        "--set".into(),
        "experiment.horizons=[1024, 2048, 4096]".into(),
        "--set".into(),
        "experiment.replications=6".into(),
        "--set".into(),
        format!("experiment.csv=\"{}\"", csv.display()),
    ]
}

#[test]
fn sweep_csv_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (i, threads) in [None, Some("1"), Some("3")].into_iter().enumerate() {
        let csv = dir.path().join(format!("s{i}.csv"));
        let args = small_sweep_args(&csv);
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        stdout(&mlsa(&args, threads));
        outputs.push(std::fs::read(csv).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn sweep_csv_schema_and_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let args = small_sweep_args(&csv);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    stdout(&mlsa(&args, None));
    let mut rdr = csv::Reader::from_path(&csv).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, CSV_HEADER);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.iter().filter(|r| &r[0] == "cell").count(), 18);
    assert_eq!(rows.iter().filter(|r| &r[0] == "agg").count(), 3);
    assert_eq!(rows.iter().filter(|r| &r[0] == "fit").count(), 1);
    for agg in rows.iter().filter(|r| &r[0] == "agg") {
        let vals: Vec<f64> = rows
            .iter()
            .filter(|r| &r[0] == "cell" && r[1] == agg[1])
            .map(|r| r[4].parse().unwrap())
            .collect();
        let mean: f64 = agg[5].parse().unwrap();
        let direct = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!((mean - direct).abs() <= 1e-12 * direct);
        let seeds: Vec<u64> = rows
            .iter()
            .filter(|r| &r[0] == "cell" && r[1] == agg[1])
            .map(|r| r[3].parse().unwrap())
            .collect();
        let n: u64 = agg[1].parse().unwrap();
        assert_eq!(seeds, (0..6).map(|r| cell_seed(7, n, r)).collect::<Vec<_>>());
    }
}

#[test]
fn noiseless_sweep_converges_geometrically() {
    let text = r#"
[model]
family = "tabular"
kernel = [[1.0]]
l_table = [[[0.5, 0.1], [0.0, 0.3]]]
b_table = [[1.0, -2.0]]

[experiment]
horizons = [1024, 16384]
replications = 2
schedule = "explicit"
stepsize = 0.2
"#;
    let cfg = config::parse(Path::new("noiseless.toml"), text.into(), &[]).unwrap();
    let res = run_sweep(&build(&cfg).unwrap(), cfg.experiment().unwrap()).unwrap();
    assert!(res.summaries[1].mean <= 1e-12, "{:?}", res.summaries);
}

#[test]
fn config_errors_exit_with_category_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "[model]\nfamily = \"td0\"\n\n[experiment]\nhorizons = [8, 4]\n").unwrap();
    let o = mlsa(&["sweep", p.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("error[config]: "), "{err}");
    assert!(err.contains("bad.toml:5:"), "{err}");
}

#[test]
fn numerical_failures_name_the_operation() {
    let cfg = configs().join("ar1.toml");
    let o = mlsa(&["var-fit", cfg.to_str().unwrap(), "--set", "model.coefficients=[[[1.01]]]"], None);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("building VAR model"), "{err}");
    assert!(err.starts_with("error[input]") || err.starts_with("error[numerical]"), "{err}");
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let cfg = configs().join("rank_one.toml");
    let o = mlsa(&["mixing", cfg.to_str().unwrap()], Some("many"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn var_fit_recovers_ar1_coefficient() {
    let cfg = configs().join("ar1.toml");
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&mlsa(
        &[
            "var-fit",
            cfg.to_str().unwrap(),
            "--set",
            &format!("var_fit.csv=\"{}\"", dir.path().join("a.csv").display()),
            "--set",
            &format!("var_fit.gamma_csv=\"{}\"", dir.path().join("g.csv").display()),
        ],
        None,
    ));
    let line = out.lines().find(|l| l.starts_with("median")).unwrap();
    let v: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(v <= 0.02, "{out}");
}

#[test]
fn select_lambda_writes_table() {
    let cfg = configs().join("tdlambda_five_state.toml");
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sel.csv");
    let out = stdout(&mlsa(
        &[
            "select-lambda",
            cfg.to_str().unwrap(),
            "--set",
            "selection.horizon=8192",
            "--set",
            &format!("selection.csv=\"{}\"", csv.display()),
        ],
        None,
    ));
    assert!(out.contains("selected lambda"), "{out}");
    let mut rdr = csv::Reader::from_path(csv).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 11);
    assert_eq!(rows.iter().filter(|r| &r[6] == "1").count(), 1);
}

#[test]
fn replication_streams_are_uncorrelated() {
    let cfg = config::load(&configs().join("td0_five_state.toml"), &[]).unwrap();
    let AnyModel::Td0(m) = build(&cfg).unwrap() else { panic!() };
    let theta = m.fixed_point().unwrap();
    let n = 1 << 15;
    let series: Vec<Vec<f64>> = (0..4)
        .map(|r| {
            let (res, _) = collect_residuals(&m, cell_seed(7, n as u64, r), n, &theta);
            res.iter().map(|v| v[0]).collect()
        })
        .collect();
    let corr = |a: &[f64], b: &[f64]| {
        let ma = a.iter().sum::<f64>() / a.len() as f64;
        let mb = b.iter().sum::<f64>() / b.len() as f64;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    };
    for i in 0..4 {
        for j in i + 1..4 {
            let c = corr(&series[i], &series[j]);
            assert!(c.abs() <= 4.0 / (n as f64).sqrt(), "streams {i},{j}: {c}");
        }
    }
}

#[test]
fn calibrated_bound_dominates_empirical_mse() {
    for (file, horizons) in [
        ("td0_five_state.toml", "[4096, 8192, 16384]"),
        ("tabular_noisy.toml", "[4096, 8192, 16384]"),
    ] {
        let cfg = config::load(
            &configs().join(file),
            &[format!("experiment.horizons={horizons}"), "experiment.replications=20".into()],
        )
        .unwrap();
        let spec: &ExperimentConfig = cfg.experiment().unwrap();
        let res = run_sweep(&build(&cfg).unwrap(), spec).unwrap();
        for s in &res.summaries {
            let bound = s.theorem1_bound.unwrap();
            assert!(s.mean <= bound, "{file} n={}: mse {} > bound {bound}", s.n, s.mean);
        }
    }
}
