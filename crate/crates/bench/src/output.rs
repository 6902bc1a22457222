use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::json;
use tgms_core::eval::CurvePoint;
use tgms_core::seeds::Provenance;
use tgms_core::Result;

pub fn header(command: &str, provenance: &Provenance) -> serde_json::Value {
    json!({ "kind": "header", "command": command, "provenance": provenance })
}

/// Writes a header line followed by one JSON record per line.
pub fn write_jsonl<T: Serialize>(path: &Path, header: &serde_json::Value, rows: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", serde_json::to_string(header)?)?;
    for r in rows {
        writeln!(w, "{}", serde_json::to_string(r)?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, header: &serde_json::Value, value: &T) -> Result<()> {
    let v = json!({ "header": header, "data": value });
    std::fs::write(path, serde_json::to_string_pretty(&v)?)?;
    Ok(())
}

/// Budget table: mean ± std of the per-seed error, mean accuracy and fidelity where available.
pub fn curve_table(label: &str, points: &[CurvePoint]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {label}");
    let _ = writeln!(s, "{:>7}  {:>12}  {:>10}  {:>9}  {:>9}", "budget", "error", "std", "accuracy", "fidelity");
    for p in points {
        let acc = if p.accuracy.is_empty() {
            "-".to_string()
        } else {
            format!("{:.4}", p.accuracy.iter().sum::<f64>() / p.accuracy.len() as f64)
        };
        let fid = p.mean_fidelity.map_or("-".to_string(), |f| format!("{f:.4}"));
        let _ = writeln!(s, "{:>7}  {:>12.6}  {:>10.6}  {:>9}  {:>9}", p.budget, p.mean_error, p.std_error, acc, fid);
    }
    s
}
