use std::fs;
use std::path::Path;
use std::process::Command;

use clap::Parser;
use fbsde_bench::{run, BenchError, Cli, ExperimentConfig, Figure};
use jumpfbsde::mfg::MfgParams;
use jumpfbsde::report::csv_body;

fn config(args: &[&str], out: &Path) -> ExperimentConfig {
    let mut all = vec!["fbsde-bench", "--out", out.to_str().unwrap()];
    all.extend_from_slice(args);
    ExperimentConfig::from_cli(&Cli::parse_from(all)).expect("valid configuration")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn bench() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fbsde-bench"))
}

#[test]
fn zero_training_writes_only_the_initial_epoch_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&["--model", "bs", "--train-iters", "0", "--steps", "10"], dir.path());
    let out = run(&cfg).unwrap();
    assert!(out.success(), "{:?}", out.failures);
    let body = csv_body(&read(dir.path(), "epochs/bs_Global_seed0.csv"));
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines.len(), 2, "{body}");
    assert_eq!(lines[0], jumpfbsde::report::EPOCH_COLUMNS);
    assert!(lines[1].starts_with("0,0,"));
}

#[test]
fn same_seed_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args =
        ["--model", "merton", "--algo", "global,sumlocal2", "--train-iters", "20", "--steps", "10", "--seed", "3"];
    for dir in [&a, &b] {
        assert!(run(&config(&args, dir.path())).unwrap().success());
    }
    for name in [
        "epochs/merton_Global_seed3.csv",
        "epochs/merton_SumLocal2_seed3.csv",
        "summary.csv",
        "plot_y0.csv",
        "plot_y0.svg",
    ] {
        assert_eq!(csv_body(&read(a.path(), name)), csv_body(&read(b.path(), name)), "{name}");
    }
}

#[test]
fn parallel_cells_match_sequential_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--model", "bs", "--algo", "global,sumlocal1", "--seed", "1,2", "--train-iters", "10", "--steps", "8"];
    assert!(run(&config(&args, a.path())).unwrap().success());
    let mut par = args.to_vec();
    par.extend_from_slice(&["--parallel", "3"]);
    assert!(run(&config(&par, b.path())).unwrap().success());
    assert_eq!(read(a.path(), "summary.csv"), read(b.path(), "summary.csv"));
    assert_eq!(read(a.path(), "plot_y0.csv"), read(b.path(), "plot_y0.csv"));
}

#[test]
fn compare_all_reports_every_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        config(&["--experiment", "compare-all", "--model", "bs", "--train-iters", "2", "--steps", "5"], dir.path());
    assert!(run(&cfg).unwrap().success());
    let body = csv_body(&read(dir.path(), "summary.csv"));
    assert_eq!(body.lines().count(), 1 + 7, "{body}");
    let table = read(dir.path(), "summary.md");
    assert_eq!(table.lines().filter(|l| l.starts_with("| ") && !l.starts_with("| Algorithm")).count(), 7);
    let timings = read(dir.path(), "timings.csv");
    assert_eq!(timings.lines().count(), 8);
    assert!(read(dir.path(), "manifest.txt").contains("input_hash="));
}

#[test]
fn trajectory_price_column_recomputes_from_state_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&["--experiment", "mfg", "--train-iters", "5", "--steps", "12", "--n-mc", "50"], dir.path());
    let out = run(&cfg).unwrap();
    assert!(out.success(), "{:?}", out.failures);
    let text = read(dir.path(), "trajectories/mfg_Global_seed0.csv");
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let p = MfgParams::default();
    let mut rows = 0;
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let own = v[col("mean_consumption")];
        assert!((own - v[col("qhat")] - v[col("alpha_hat")]).abs() <= 1e-10 * (1.0 + own.abs()));
        let expected = p.p0 + p.p1 * (p.pi * v[col("qhat_st")] + (1.0 - p.pi) * own);
        let price = v[col("price")];
        assert!((price - expected).abs() <= 1e-10 * (1.0 + expected.abs()), "{price} vs {expected}");
        let consumption = v[col("consumption")];
        assert!((consumption - v[col("q")] - v[col("alpha")]).abs() <= 1e-10 * (1.0 + consumption.abs()));
        rows += 1;
    }
    assert_eq!(rows, 5 * 13);
    assert!(csv_body(&read(dir.path(), "costs.csv")).lines().count() == 2);
}

#[test]
fn zero_cost_poa_is_rejected_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("zero.toml");
    fs::write(
        &cfg_path,
        "[run]\nexperiment = \"poa\"\npi_list = [0.5]\nn_mc = 20\n\n[solver]\nsteps = 8\nn_train = 2\n\n\
         [mfg]\na = 0.0\nc = 0.0\nk_charge = 0.0\np0 = 0.0\np1 = 0.0\nf0 = 0.0\nf1 = 0.0\nh0 = 0.0\nh1 = 0.0\nh2 = 0.0\n",
    )
    .unwrap();
    let status = bench().arg("--config").arg(&cfg_path).arg("--out").arg(dir.path().join("out")).output().unwrap();
    assert!(!status.status.success());
    let err = String::from_utf8_lossy(&status.stderr);
    assert!(err.contains("A > 0") || err.contains("positive planner cost"), "{err}");
    assert!(
        !dir.path().join("out/poa.csv").exists()
            || csv_body(&read(&dir.path().join("out"), "poa.csv")).lines().count() == 1
    );
}

#[test]
fn bad_configuration_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.toml");
    fs::write(&cfg_path, "[run]\nexperimnt = \"price\"\n").unwrap();
    let out = bench().arg("--config").arg(&cfg_path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bench().args(["--model", "heston"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bench().args(["--experiment", "mfg", "--algo", "sumlocal1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = ExperimentConfig::from_cli(&Cli::parse_from(["fbsde-bench", "--pi-list", "0.5,1.5"])).unwrap_err();
    assert!(matches!(err, BenchError::Usage(_)));
}

#[test]
fn successful_binary_run_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = bench()
        .args(["--model", "bs", "--train-iters", "1", "--steps", "4", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("summary.md").exists());
}

#[test]
fn figure_rendering_is_idempotent() {
    let mut fig = Figure::new("t <x>", "epoch");
    fig.x = vec![1.0, 2.0, 3.0];
    fig.series = vec![("a".into(), vec![0.2, 0.21, 0.22]), ("b".into(), vec![0.3, 0.3])];
    assert_eq!(fig.to_svg(), fig.clone().to_svg());
    assert_eq!(fig.to_csv(), "epoch,a,b\n1,0.2,0.3\n2,0.21,0.3\n3,0.22,\n");
    assert!(fig.to_svg().contains("t &lt;x&gt;"));
}

#[test]
fn empty_figure_writes_header_only() {
    let fig = Figure::new("empty", "pi");
    assert_eq!(fig.to_csv(), "pi\n");
    let svg = fig.to_svg();
    assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    assert!(!svg.contains("polyline"));
}
