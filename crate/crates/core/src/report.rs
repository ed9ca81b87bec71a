//! Plain-text CSV rendering. Wall-clock times are kept out of these bodies so that reruns compare byte for byte.

use std::fmt::Write;

use crate::mfg::TrajectoryRow;
use crate::solvers::TrainingReport;

pub const EPOCH_COLUMNS: &str = "epoch,iteration,y0,loss";
pub const TRAJECTORY_COLUMNS: &str =
    "path,step,t,q,qhat,qhat_st,alpha,alpha_hat,consumption,mean_consumption,price,lambda0,active";

/// Prefixes every line of `header` with `# `.
pub fn commented(header: &str) -> String {
    header.lines().map(|l| format!("# {l}\n")).collect()
}

/// Drops comment lines.
pub fn csv_body(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect()
}

/// Column line plus one row per recorded epoch, starting with the untrained snapshot.
pub fn epoch_csv(report: &TrainingReport) -> String {
    let mut out = format!("{EPOCH_COLUMNS}\n");
    for e in std::iter::once(&report.initial).chain(&report.epochs) {
        let _ = writeln!(out, "{},{},{},{}", e.epoch, e.iteration, e.y0, e.loss);
    }
    out
}

pub fn trajectory_csv(rows: &[TrajectoryRow]) -> String {
    let mut out = format!("{TRAJECTORY_COLUMNS}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.path,
            r.step,
            r.t,
            r.q,
            r.qhat,
            r.qhat_st,
            r.alpha,
            r.alpha_hat,
            r.consumption,
            r.mean_consumption,
            r.price,
            r.lambda0,
            u8::from(r.active)
        );
    }
    out
}
