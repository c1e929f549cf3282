use std::fmt::Write as _;
use std::path::Path;

use super::write_atomic;
use crate::dilo::TrajectoryDiagnostics;
use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "iter,loss,grad_norm,grad_norm_exact,mae,wallclock_ms";

/// One parsed metrics line; optional columns are `None` when empty.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub iter: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub grad_norm_exact: Option<f64>,
    pub mae: Option<f64>,
    pub wallclock_ms: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

pub fn render_metrics(diag: &TrajectoryDiagnostics) -> String {
    let mut out = String::with_capacity(64 * (diag.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for k in 0..diag.len() {
        writeln!(
            out,
            "{k},{:.16e},{:.16e},{},{},{}",
            diag.loss[k],
            diag.grad_norm[k],
            opt(diag.grad_norm_exact[k]),
            opt(diag.mae[k]),
            opt(diag.wallclock_ms[k]),
        )
        .expect("writing to a string");
    }
    out
}

/// Writes the per-iteration CSV; values use 17 significant digits so
/// re-parsing reproduces them exactly.
pub fn emit_metrics(path: impl AsRef<Path>, diag: &TrajectoryDiagnostics) -> Result<()> {
    write_atomic(path.as_ref(), render_metrics(diag).as_bytes())
}

pub fn parse_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::Config(format!("{}: unexpected metrics header", path.display())));
    }
    let bad = |n: usize, what: &str| Error::Config(format!("{}:{}: {what}", path.display(), n + 2));
    lines
        .enumerate()
        .map(|(n, line)| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 6 {
                return Err(bad(n, "expected 6 columns"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n, "malformed number"));
            let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
            Ok(MetricsRow {
                iter: cols[0].parse().map_err(|_| bad(n, "malformed iteration"))?,
                loss: num(cols[1])?,
                grad_norm: num(cols[2])?,
                grad_norm_exact: opt(cols[3])?,
                mae: opt(cols[4])?,
                wallclock_ms: opt(cols[5])?,
            })
        })
        .collect()
}
