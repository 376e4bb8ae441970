//! Field-wise comparison of two result records, the regression tool behind
//! "did this refactor change any number".  Compares the `results` objects
//! under per-field tolerances, reports every difference, and additionally
//! measures the L-infinity gap between profile artifacts on shared grid
//! nodes (so an h versus h/2 pair reports its refinement error).

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value;

use crate::CliError;

pub struct CompareReport {
    /// Human-readable difference lines, one per differing field.
    pub lines: Vec<String>,
    /// Number of fields whose difference exceeded their tolerance.
    pub failures: usize,
}

fn load(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read record {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{} is not a record: {e}", path.display())))
}

fn str_field<'a>(doc: &'a Value, key: &str, path: &Path) -> Result<&'a str, CliError> {
    doc.get(key).and_then(Value::as_str).ok_or_else(|| {
        CliError::Validation(format!(
            "{} lacks the string field `{key}` expected of a record",
            path.display()
        ))
    })
}

/// Tolerance lookup: explicit per-field setting, else the default.
fn tol_for(key: &str, tols: &BTreeMap<String, f64>, default_tol: f64) -> f64 {
    tols.get(key).copied().unwrap_or(default_tol)
}

fn compare_values(
    key: &str,
    a: &Value,
    b: &Value,
    tol: f64,
    lines: &mut Vec<String>,
    failures: &mut usize,
) {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN));
            let diff = (x - y).abs();
            if diff > 0.0 || x != y {
                let ok = diff <= tol;
                if !ok {
                    *failures += 1;
                }
                lines.push(format!(
                    "{key}: a = {x}, b = {y}, |diff| = {diff:e} ({})",
                    if ok { "within tolerance" } else { "EXCEEDS tolerance" }
                ));
            }
        }
        _ if a == b => {}
        (Value::Null, _) | (_, Value::Null) => {
            *failures += 1;
            lines.push(format!("{key}: present in only one record (a = {a}, b = {b})"));
        }
        _ => {
            *failures += 1;
            lines.push(format!("{key}: a = {a}, b = {b} (differs)"));
        }
    }
}

/// Largest |value_a - value_b| over profile rows whose x coordinates match;
/// refinements by integer factors keep the coarse nodes, so an h vs h/2 pair
/// compares on the coarse grid.  Returns None when either run has no profile
/// artifact or no nodes align.
fn profile_linf(dir_a: &Path, dir_b: &Path) -> Option<f64> {
    let parse = |dir: &Path| -> Option<Vec<(f64, Vec<f64>)>> {
        let text = std::fs::read_to_string(dir.join("profile.csv")).ok()?;
        let mut rows = Vec::new();
        for line in text.lines().skip(1) {
            let mut cols = line.split(',').map(str::trim).map(str::parse::<f64>);
            let x = cols.next()?.ok()?;
            let rest: Result<Vec<f64>, _> = cols.collect();
            rows.push((x, rest.ok()?));
        }
        Some(rows)
    };
    let a = parse(dir_a)?;
    let b = parse(dir_b)?;
    let width = a.first()?.1.len();
    if width != b.first()?.1.len() {
        return None;
    }

    let scale = a.last()?.0.max(1.0);
    let mut best = None;
    let mut j = 0usize;
    for (xa, va) in &a {
        while j < b.len() && b[j].0 < xa - 1e-9 * scale {
            j += 1;
        }
        if j < b.len() && (b[j].0 - xa).abs() <= 1e-9 * scale {
            let d = va
                .iter()
                .zip(&b[j].1)
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max);
            best = Some(best.map_or(d, |cur: f64| cur.max(d)));
        }
    }
    best
}

/// Compares two records on disk.  Schema mismatches (different commands,
/// or files that are not records) are validation errors; numeric differences
/// make up the report.
pub fn compare(
    path_a: &Path,
    path_b: &Path,
    tols: &BTreeMap<String, f64>,
    default_tol: f64,
) -> Result<CompareReport, CliError> {
    let doc_a = load(path_a)?;
    let doc_b = load(path_b)?;

    let schema_a = str_field(&doc_a, "schema", path_a)?;
    let schema_b = str_field(&doc_b, "schema", path_b)?;
    if schema_a != schema_b {
        return Err(CliError::Validation(format!(
            "schema mismatch: `{schema_a}` vs `{schema_b}`"
        )));
    }
    let cmd_a = str_field(&doc_a, "command", path_a)?;
    let cmd_b = str_field(&doc_b, "command", path_b)?;
    if cmd_a != cmd_b {
        return Err(CliError::Validation(format!(
            "schema mismatch: records compare `{cmd_a}` against `{cmd_b}`"
        )));
    }

    let empty = serde_json::Map::new();
    let results_a = doc_a.get("results").and_then(Value::as_object).unwrap_or(&empty);
    let results_b = doc_b.get("results").and_then(Value::as_object).unwrap_or(&empty);

    let mut keys: Vec<&String> = results_a.keys().chain(results_b.keys()).collect();
    keys.sort();
    keys.dedup();

    let mut lines = Vec::new();
    let mut failures = 0usize;
    for key in keys {
        let a = results_a.get(key.as_str()).unwrap_or(&Value::Null);
        let b = results_b.get(key.as_str()).unwrap_or(&Value::Null);
        if a == &Value::Null && b == &Value::Null {
            continue;
        }
        let tol = tol_for(key, tols, default_tol);
        compare_values(key, a, b, tol, &mut lines, &mut failures);
    }

    let dir_a = path_a.parent().unwrap_or(Path::new("."));
    let dir_b = path_b.parent().unwrap_or(Path::new("."));
    if let Some(d) = profile_linf(dir_a, dir_b) {
        if d > 0.0 {
            lines.push(format!("profile_linf_diff = {d:e}"));
            // Gate only when the caller asked for a profile tolerance; by
            // default the refinement error is reported, not judged.
            if let Some(&t) = tols.get("profile_linf_diff") {
                if d > t {
                    failures += 1;
                }
            }
        }
    }

    Ok(CompareReport { lines, failures })
}
