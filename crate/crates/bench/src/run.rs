use std::fmt::Write;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use jumpfbsde::mfg::{
    evaluate_cost, mfc_transform, mfg_algorithm_name, price_of_anarchy_paired, rollout, solve_mfg, trajectory_rows,
    CostEstimate, MfgParams, NoiseLayout, Regime, EVALUATION_INDEX,
};
use jumpfbsde::models::{make_spec, FbsdeSpec};
use jumpfbsde::oracles::{coupling_reference, reference_price};
use jumpfbsde::report::{commented, epoch_csv, trajectory_csv};
use jumpfbsde::solvers::{content_hash, train, Algorithm, TrainingReport};

use crate::config::{Experiment, ExperimentConfig};
use crate::plot::Figure;
use crate::BenchError;

/// Pass threshold of the pricing summary.
pub const PRICE_TOLERANCE: f64 = 4e-3;

/// What a finished run produced.
#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub files: Vec<String>,
    /// Cells that did not complete, with the reason.
    pub failures: Vec<String>,
}

impl RunOutcome {
    pub fn success(&self) -> bool {
        self.failures.is_empty()
    }
}

struct Writer<'a> {
    cfg: &'a ExperimentConfig,
    files: Vec<String>,
}

impl Writer<'_> {
    fn write(&mut self, name: &str, content: &str) -> Result<(), BenchError> {
        let path = self.cfg.out_path(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        }
        fs::write(&path, content).map_err(|e| io_error(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }
}

fn io_error(path: &Path, e: std::io::Error) -> BenchError {
    BenchError::Io(format!("{}: {e}", path.display()))
}

/// Runs `job` over `0..n` on `workers` threads; results come back in index order.
fn sharded<T: Send>(n: usize, workers: usize, job: impl Fn(usize) -> T + Sync) -> Vec<T> {
    if workers <= 1 || n <= 1 {
        return (0..n).map(job).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.min(n) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let out = job(i);
                slots.lock().expect("result slots")[i] = Some(out);
            });
        }
    });
    slots.into_inner().expect("result slots").into_iter().map(|v| v.expect("every cell ran")).collect()
}

/// Manifest text: configuration echo plus a content hash of it and the config file.
pub fn manifest(cfg: &ExperimentConfig) -> String {
    let echo = cfg.describe();
    let hash = content_hash(&format!("{echo}\n{}", cfg.source));
    let mut out = format!("version={}\ninput_hash={hash}\n{echo}\n", env!("CARGO_PKG_VERSION"));
    if !cfg.source.is_empty() {
        out.push_str("[config file]\n");
        out.push_str(&cfg.source);
        if !cfg.source.ends_with('\n') {
            out.push('\n');
        }
    }
    out
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome, BenchError> {
    let mut w = Writer { cfg, files: Vec::new() };
    w.write("manifest.txt", &manifest(cfg))?;
    let failures = match cfg.experiment {
        Experiment::Price | Experiment::CompareAll => run_price(cfg, &mut w)?,
        Experiment::Mfg => run_mfg(cfg, &mut w, Regime::Equilibrium)?,
        Experiment::Mfc => run_mfg(cfg, &mut w, Regime::Planner)?,
        Experiment::Poa => run_poa(cfg, &mut w)?,
    };
    Ok(RunOutcome { files: w.files, failures })
}

fn pricing_spec(cfg: &ExperimentConfig) -> Result<FbsdeSpec, BenchError> {
    let reference = if cfg.coupled { Some(coupling_reference(cfg.model, &cfg.market)?) } else { None };
    Ok(make_spec(cfg.model, &cfg.market, cfg.coupled, reference)?)
}

fn epoch_file(prefix: &str, algorithm: Algorithm, seed: u64) -> String {
    format!("epochs/{prefix}_{}_seed{seed}.csv", algorithm.name())
}

fn cells(cfg: &ExperimentConfig) -> Vec<(Algorithm, u64)> {
    cfg.algorithms.iter().flat_map(|&a| cfg.seeds.iter().map(move |&s| (a, s))).collect()
}

/// Seed-averaged `Y₀` per recorded epoch.
fn averaged_trace(reports: &[&TrainingReport]) -> Vec<f64> {
    let len = reports.iter().map(|r| r.epochs.len()).min().unwrap_or(0);
    (0..len).map(|i| reports.iter().map(|r| r.epochs[i].y0).sum::<f64>() / reports.len() as f64).collect()
}

fn convergence_figure(
    title: &str,
    cfg: &ExperimentConfig,
    done: &[((Algorithm, u64), TrainingReport)],
    name: impl Fn(Algorithm) -> String,
) -> Figure {
    let mut fig = Figure::new(title, "epoch");
    for &a in &cfg.algorithms {
        let reports: Vec<&TrainingReport> = done.iter().filter(|((b, _), _)| *b == a).map(|(_, r)| r).collect();
        if reports.is_empty() {
            continue;
        }
        let trace = averaged_trace(&reports);
        if trace.len() > fig.x.len() {
            fig.x = (1..=trace.len()).map(|e| e as f64).collect();
        }
        fig.series.push((name(a), trace));
    }
    fig
}

fn run_price(cfg: &ExperimentConfig, w: &mut Writer<'_>) -> Result<Vec<String>, BenchError> {
    let spec = pricing_spec(cfg)?;
    let reference = reference_price(cfg.model, &cfg.market)?;
    let cells = cells(cfg);
    let prefix = format!("{}{}", cfg.model.name(), if cfg.coupled { "_coupled" } else { "" });
    let results = sharded(cells.len(), cfg.parallel, |i| {
        let (a, seed) = cells[i];
        cfg.pricing_config(a, seed).and_then(|c| Ok(train(&spec, &c)?))
    });
    let mut failures = Vec::new();
    let mut done = Vec::new();
    let mut timings = String::from("algorithm,seed,seconds\n");
    for (&(a, seed), result) in cells.iter().zip(results) {
        match result {
            Ok(report) => {
                let body = format!("{}{}", commented(&report.header), epoch_csv(&report));
                w.write(&epoch_file(&prefix, a, seed), &body)?;
                let _ = writeln!(timings, "{},{seed},{:.3}", a.name(), report.seconds);
                if let Some(d) = &report.divergence {
                    failures.push(format!("{} seed {seed}: {d}", a.name()));
                }
                done.push(((a, seed), report));
            }
            Err(e) => failures.push(format!("{} seed {seed}: {e}", a.name())),
        }
    }
    w.write("timings.csv", &timings)?;

    let mut summary = commented(&format!(
        "model={} coupled={} reference={reference} tolerance={PRICE_TOLERANCE}",
        cfg.model.name(),
        cfg.coupled
    ));
    summary.push_str("algorithm,seeds,y0,reference,abs_error,within_tolerance\n");
    let mut table =
        format!("| Algorithm | Y0 | Error | Within {PRICE_TOLERANCE} | Time (s) |\n|---|---|---|---|---|\n");
    for &a in &cfg.algorithms {
        let runs: Vec<&TrainingReport> = done.iter().filter(|((b, _), _)| *b == a).map(|(_, r)| r).collect();
        if runs.is_empty() {
            continue;
        }
        let y0 = runs.iter().map(|r| r.final_y0).sum::<f64>() / runs.len() as f64;
        let secs = runs.iter().map(|r| r.seconds).sum::<f64>() / runs.len() as f64;
        let err = (y0 - reference).abs();
        let ok = err <= PRICE_TOLERANCE;
        let _ = writeln!(summary, "{},{},{y0},{reference},{err},{}", a.name(), runs.len(), u8::from(ok));
        let _ =
            writeln!(table, "| {} | {y0:.4} | {err:.1e} | {} | {secs:.1} |", a.name(), if ok { "yes" } else { "no" });
    }
    let _ = writeln!(table, "\nReference value: {reference:.4}");
    w.write("summary.csv", &summary)?;
    w.write("summary.md", &table)?;

    let mut fig = convergence_figure(&format!("Y0 by epoch, {prefix}"), cfg, &done, |a| a.name().to_string());
    if !fig.x.is_empty() {
        fig.series.push(("reference".into(), vec![reference; fig.x.len()]));
    }
    w.write("plot_y0.csv", &fig.to_csv())?;
    w.write("plot_y0.svg", &fig.to_svg())?;
    Ok(failures)
}

fn cost_row(table: &mut String, label: &str, seed: u64, c: &CostEstimate) {
    let _ = writeln!(table, "{label},{seed},{},{}", c.value, c.std_error);
}

fn run_mfg(cfg: &ExperimentConfig, w: &mut Writer<'_>, regime: Regime) -> Result<Vec<String>, BenchError> {
    let base = &cfg.mfg;
    let trained = match regime {
        Regime::Equilibrium => base.clone(),
        Regime::Planner => mfc_transform(base),
    };
    let tag = match regime {
        Regime::Equilibrium => "mfg",
        Regime::Planner => "mfc",
    };
    let cells = cells(cfg);
    let results = sharded(cells.len(), cfg.parallel, |i| {
        let (a, seed) = cells[i];
        let c = cfg.mfg_config(a, seed)?;
        let (policy, report) = solve_mfg(&trained, &c)?;
        let cost = evaluate_cost(&policy, base, cfg.n_mc, seed)?;
        let paths = rollout(&policy, base, NoiseLayout::independent(cfg.trajectory_paths), seed, EVALUATION_INDEX)?;
        Ok::<_, BenchError>((report, cost, trajectory_rows(base, &paths)))
    });
    let mut failures = Vec::new();
    let mut done = Vec::new();
    let mut costs = commented(&format!("regime={regime:?} costs under the original coefficients"));
    costs.push_str("algorithm,seed,value,std_error\n");
    let mut timings = String::from("algorithm,seed,seconds\n");
    let mut first_rows = None;
    for (&(a, seed), result) in cells.iter().zip(results) {
        match result {
            Ok((report, cost, rows)) => {
                let name = mfg_algorithm_name(a);
                w.write(&epoch_file(tag, a, seed), &format!("{}{}", commented(&report.header), epoch_csv(&report)))?;
                w.write(&format!("trajectories/{tag}_{name}_seed{seed}.csv"), &trajectory_csv(&rows))?;
                cost_row(&mut costs, name, seed, &cost);
                let _ = writeln!(timings, "{name},{seed},{:.3}", report.seconds);
                if let Some(d) = &report.divergence {
                    failures.push(format!("{name} seed {seed}: {d}"));
                }
                first_rows.get_or_insert(rows);
                done.push(((a, seed), report));
            }
            Err(e) => failures.push(format!("{} seed {seed}: {e}", mfg_algorithm_name(a))),
        }
    }
    w.write("costs.csv", &costs)?;
    w.write("timings.csv", &timings)?;
    let fig = convergence_figure(&format!("Y0 by epoch, {tag}"), cfg, &done, |a| mfg_algorithm_name(a).to_string());
    w.write("plot_y0.csv", &fig.to_csv())?;
    w.write("plot_y0.svg", &fig.to_svg())?;
    let fig = trajectory_figure(tag, first_rows.as_deref().unwrap_or(&[]));
    w.write("plot_trajectory.csv", &fig.to_csv())?;
    w.write("plot_trajectory.svg", &fig.to_svg())?;
    Ok(failures)
}

/// Consumption, aggregate consumption, price, intensity and activations along the first path.
fn trajectory_figure(tag: &str, rows: &[jumpfbsde::mfg::TrajectoryRow]) -> Figure {
    let path: Vec<_> = rows.iter().filter(|r| r.path == 0).collect();
    let mut fig = Figure::new(format!("First path, {tag}"), "t");
    fig.x = path.iter().map(|r| r.t).collect();
    fig.series = vec![
        ("consumption".into(), path.iter().map(|r| r.consumption).collect()),
        ("mean_consumption".into(), path.iter().map(|r| r.mean_consumption).collect()),
        ("price_per_100".into(), path.iter().map(|r| r.price / 100.0).collect()),
        ("lambda0".into(), path.iter().map(|r| r.lambda0).collect()),
        ("dsm_active".into(), path.iter().map(|r| f64::from(u8::from(r.active))).collect()),
    ];
    fig
}

struct PoaCell {
    pi: f64,
    seed: u64,
    mfg: CostEstimate,
    mfc: CostEstimate,
}

fn run_poa(cfg: &ExperimentConfig, w: &mut Writer<'_>) -> Result<Vec<String>, BenchError> {
    let algorithm = cfg.algorithms[0];
    let grid: Vec<(f64, u64)> = cfg.pi_list.iter().flat_map(|&pi| cfg.seeds.iter().map(move |&s| (pi, s))).collect();
    let results = sharded(grid.len(), cfg.parallel, |i| {
        let (pi, seed) = grid[i];
        let base = MfgParams { pi, ..cfg.mfg.clone() };
        let c = cfg.mfg_config(algorithm, seed)?;
        let estimate = |p: &MfgParams| -> Result<CostEstimate, BenchError> {
            let (policy, report) = solve_mfg(p, &c)?;
            if let Some(d) = report.divergence {
                return Err(BenchError::Run(d));
            }
            Ok(evaluate_cost(&policy, &base, cfg.n_mc, seed)?)
        };
        let mfg = estimate(&base)?;
        let mfc = estimate(&mfc_transform(&base))?;
        Ok::<_, BenchError>(PoaCell { pi, seed, mfg, mfc })
    });
    let mut out =
        commented(&format!("algorithm={} p1={} n_mc={}", mfg_algorithm_name(algorithm), cfg.mfg.p1, cfg.n_mc));
    out.push_str("pi,p1,seed,v_mfg,se_mfg,v_mfc,se_mfc,poa,poa_se\n");
    let mut table = String::from("| pi | V MFG | V MFC | PoA |\n|---|---|---|---|\n");
    let mut failures = Vec::new();
    let mut fig = Figure::new(format!("Price of Anarchy, p1 = {}", cfg.mfg.p1), "pi");
    let mut poa_series = Vec::new();
    for (&(pi, seed), result) in grid.iter().zip(results) {
        let cell = match result {
            Ok(c) => c,
            Err(e) => {
                failures.push(format!("pi {pi} seed {seed}: {e}"));
                continue;
            }
        };
        match price_of_anarchy_paired(&cell.mfg, &cell.mfc) {
            Ok(poa) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    cell.pi,
                    cfg.mfg.p1,
                    cell.seed,
                    cell.mfg.value,
                    cell.mfg.std_error,
                    cell.mfc.value,
                    cell.mfc.std_error,
                    poa.value,
                    poa.std_error
                );
                let _ = writeln!(
                    table,
                    "| {} | {:.3} (±{:.3}) | {:.3} (±{:.3}) | {:.6} |",
                    cell.pi, cell.mfg.value, cell.mfg.std_error, cell.mfc.value, cell.mfc.std_error, poa.value
                );
                fig.x.push(cell.pi);
                poa_series.push(poa.value);
            }
            Err(e) => failures.push(format!("pi {pi} seed {seed}: {e}")),
        }
    }
    fig.series.push(("poa".into(), poa_series));
    w.write("poa.csv", &out)?;
    w.write("poa.md", &table)?;
    w.write("plot_poa.csv", &fig.to_csv())?;
    w.write("plot_poa.svg", &fig.to_svg())?;
    Ok(failures)
}
