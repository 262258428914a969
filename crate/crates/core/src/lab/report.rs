use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::lab::stability::StabilityReport;

pub const STABILITY_HEADER: &str =
    "n,k,mass,l1_to_limit,max_to_limit,tk_distance,increment,decay_constant,energy_ratio";

/// Fixed-width scientific formatting used by every CSV writer.
pub fn num(v: f64) -> String {
    format!("{:.12e}", v + 0.0)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), num)
}

/// One row per `(n, k)`.
pub fn stability_csv(report: &StabilityReport) -> String {
    let mut s = String::from(STABILITY_HEADER);
    s.push('\n');
    for r in &report.rows {
        for (k, d) in report.k_list.iter().zip(&r.tk_distances) {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.n,
                num(*k),
                num(r.mass),
                num(r.l1_to_limit),
                num(r.max_to_limit),
                num(*d),
                opt(r.increment),
                opt(r.decay_constant),
                num(r.energy_ratio)
            );
        }
    }
    s
}

/// The CSV with whitespace separators and a `#` header for gnuplot.
pub fn to_gnuplot(csv: &str) -> String {
    let mut out = String::new();
    for (i, line) in csv.lines().enumerate() {
        if i == 0 {
            out.push_str("# ");
        }
        out.push_str(&line.replace(',', " "));
        out.push('\n');
    }
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Writes `<stem>.csv`, `<stem>.dat` and `<stem>.json` into `dir`.
pub fn emit_report(report: &StabilityReport, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let csv = stability_csv(report);
    let paths = [
        dir.join(format!("{stem}.csv")),
        dir.join(format!("{stem}.dat")),
        dir.join(format!("{stem}.json")),
    ];
    std::fs::write(&paths[0], &csv)?;
    std::fs::write(&paths[1], to_gnuplot(&csv))?;
    write_json(&paths[2], report)?;
    Ok(paths.to_vec())
}
