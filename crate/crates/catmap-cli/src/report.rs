//! Merges run directories into one markdown and JSON report and recomputes
//! fits over the pooled rows.

use crate::error::{config_err, CliError};
use catmap::fup::fit_beta;
use catmap::stats::{loglog_fit, mann_kendall};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

struct Run {
    name: String,
    summary: Value,
    rows: Vec<BTreeMap<String, String>>,
}

fn load_run(dir: &Path, name: String) -> Result<Option<Run>, CliError> {
    let path = dir.join("summary.json");
    if !path.is_file() {
        return Ok(None);
    }
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(&path)?)
        .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    let csv_path = dir.join("results.csv");
    if csv_path.is_file() {
        let mut rd = csv::Reader::from_path(&csv_path)?;
        let headers = rd.headers()?.clone();
        for rec in rd.records() {
            let rec = rec?;
            rows.push(headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect());
        }
    }
    Ok(Some(Run { name, summary, rows }))
}

fn find_runs(dir: &Path) -> Result<Vec<Run>, CliError> {
    let mut runs = Vec::new();
    if let Some(r) = load_run(dir, ".".into())? {
        runs.push(r);
    }
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
    subdirs.sort();
    for d in subdirs {
        let name = d.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        if let Some(r) = load_run(&d, name)? {
            runs.push(r);
        }
    }
    Ok(runs)
}

fn experiment(run: &Run) -> &str {
    run.summary["experiment"].as_str().unwrap_or("unknown")
}

/// `(N, value)` pairs from the rows of every run of one experiment.
fn pooled(runs: &[&Run], column: &str, keep: impl Fn(&BTreeMap<String, String>) -> bool) -> Vec<(usize, f64)> {
    let mut pts: Vec<(usize, f64)> = runs
        .iter()
        .flat_map(|r| r.rows.iter())
        .filter(|row| keep(row))
        .filter_map(|row| Some((row.get("n")?.parse().ok()?, row.get(column)?.parse().ok()?)))
        .collect();
    pts.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts
}

fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn pooled_sections(runs: &[Run]) -> BTreeMap<String, Value> {
    let mut by_kind: BTreeMap<&str, Vec<&Run>> = BTreeMap::new();
    for r in runs {
        by_kind.entry(experiment(r)).or_default().push(r);
    }
    let mut out = BTreeMap::new();
    for (kind, rs) in by_kind {
        let v = match kind {
            "deloc" => {
                // one minimum per N, the smallest over runs
                let mut per_n: BTreeMap<usize, f64> = BTreeMap::new();
                for (n, m) in pooled(&rs, "min_mass", |_| true) {
                    let e = per_n.entry(n).or_insert(m);
                    *e = e.min(m);
                }
                let masses: Vec<f64> = per_n.values().copied().collect();
                let (at, min) = per_n.iter().map(|(n, m)| (*n, *m)).fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
                let mk = (masses.len() >= 3).then(|| mann_kendall(&masses));
                json!({
                    "runs": rs.len(),
                    "n_values": masses.len(),
                    "min_mass": finite(min),
                    "argmin_n": at,
                    "mann_kendall_z": mk.map(|m| finite(m.z)),
                    "significant_decrease": mk.map(|m| m.significant_decrease(0.05)),
                })
            }
            "fup" => {
                let pts = pooled(&rs, "norm", |_| true);
                let fit = fit_beta(&pts).ok();
                json!({
                    "runs": rs.len(),
                    "points": pts.len(),
                    "beta_hat": fit.as_ref().map(|f| finite(f.beta_hat)),
                    "r_squared": fit.as_ref().map(|f| finite(f.r_squared)),
                })
            }
            "words" => {
                let pts = pooled(&rs, "norm", |row| row.get("kind").is_some_and(|k| k == "all2"));
                let fit = loglog_fit(&pts.iter().map(|p| p.0 as f64).collect::<Vec<_>>(), &pts.iter().map(|p| p.1).collect::<Vec<_>>());
                json!({
                    "runs": rs.len(),
                    "points": pts.len(),
                    "beta_hat": fit.map(|f| finite(-f.slope)),
                    "r_squared": fit.map(|f| finite(f.r_squared)),
                })
            }
            "qe" => {
                let pts = pooled(&rs, "variance", |_| true);
                let fit = loglog_fit(&pts.iter().map(|p| p.0 as f64).collect::<Vec<_>>(), &pts.iter().map(|p| p.1).collect::<Vec<_>>());
                json!({
                    "runs": rs.len(),
                    "points": pts.len(),
                    "slope": fit.map(|f| finite(f.slope)),
                    "r_squared": fit.map(|f| finite(f.r_squared)),
                })
            }
            "egorov" => {
                let max = rs.iter().filter_map(|r| r.summary["summary"]["max_defect"].as_f64()).fold(0.0, f64::max);
                json!({ "runs": rs.len(), "max_defect": max })
            }
            _ => json!({ "runs": rs.len() }),
        };
        out.insert(kind.to_string(), v);
    }
    out
}

fn markdown(runs: &[Run], pooled: &BTreeMap<String, Value>) -> String {
    let mut md = String::from("# catmap report\n\n## Runs\n\n| directory | experiment | config hash | summary |\n|---|---|---|---|\n");
    for r in runs {
        let hash = r.summary["config_hash"].as_str().unwrap_or("");
        md += &format!("| {} | {} | `{}` | `{}` |\n", r.name, experiment(r), &hash[..hash.len().min(12)], r.summary["summary"]);
    }
    md += "\n## Pooled results\n\n";
    for (kind, v) in pooled {
        md += &format!("### {kind}\n\n");
        if let Some(obj) = v.as_object() {
            for (k, x) in obj {
                md += &format!("- {k}: {x}\n");
            }
        }
        md += "\n";
    }
    md
}

/// Writes `report.md` and `report.json` into `out` and returns the JSON.
pub fn report(results: &Path, out: &Path) -> Result<Value, CliError> {
    if !results.is_dir() {
        return Err(CliError::MissingResults(results.display().to_string()));
    }
    let runs = find_runs(results)?;
    if runs.is_empty() {
        return Err(CliError::MissingResults(results.display().to_string()));
    }
    let pooled = pooled_sections(&runs);
    let json = json!({
        "runs": runs.iter().map(|r| json!({
            "directory": r.name,
            "experiment": experiment(r),
            "config_hash": r.summary["config_hash"],
            "summary": r.summary["summary"],
        })).collect::<Vec<_>>(),
        "pooled": pooled,
    });
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&json).expect("json") + "\n")?;
    std::fs::write(out.join("report.md"), markdown(&runs, &pooled))?;
    Ok(json)
}
