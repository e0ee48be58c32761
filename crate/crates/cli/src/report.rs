use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{CliError, CliResult};

/// One trial: always carries `seed` (the configuration seed) and `trial`.
pub type Record = BTreeMap<String, Value>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: Experiment,
    pub config: ExperimentConfig,
    pub version: String,
    pub records: Vec<Record>,
    pub aggregates: BTreeMap<String, Value>,
    pub wall_clock_secs: f64,
}

impl ExperimentReport {
    /// The report with the wall-clock field zeroed, for reproducibility checks.
    pub fn body(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v["wall_clock_secs"] = json!(0.0);
        v
    }
}

fn median(sorted: &[f64]) -> f64 {
    let m = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[m]
    } else {
        0.5 * (sorted[m - 1] + sorted[m])
    }
}

/// Mean, min, median and max of every numeric field, plus the pass frequency.
/// Fields are folded in trial order.
pub fn aggregate(records: &[Record]) -> BTreeMap<String, Value> {
    let mut out = BTreeMap::new();
    if records.is_empty() {
        out.insert("empty".to_string(), json!(true));
        return out;
    }
    out.insert("empty".to_string(), json!(false));
    out.insert("trials".to_string(), json!(records.len()));
    let keys: BTreeSet<&String> = records.iter().flat_map(|r| r.keys()).collect();
    for key in keys {
        if key == "seed" || key == "trial" || key == "trial_seed" {
            continue;
        }
        let values: Vec<&Value> = records.iter().filter_map(|r| r.get(key)).collect();
        if values.iter().all(|v| v.is_boolean()) {
            let hits = values.iter().filter(|v| v.as_bool() == Some(true)).count();
            out.insert(format!("{key}_frequency"), json!(hits as f64 / values.len() as f64));
            continue;
        }
        let nums: Option<Vec<f64>> = values.iter().map(|v| v.as_f64()).collect();
        if let Some(mut nums) = nums {
            let mean = nums.iter().sum::<f64>() / nums.len() as f64;
            nums.sort_by(f64::total_cmp);
            out.insert(
                key.clone(),
                json!({
                    "mean": mean,
                    "min": nums[0],
                    "median": median(&nums),
                    "max": nums[nums.len() - 1],
                }),
            );
        }
    }
    out
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let display = path.display().to_string();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(&display, e))?;
    tmp.write_all(contents).map_err(|e| CliError::io(&display, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(&display, e))?;
    tmp.persist(path).map_err(|e| CliError::io(&display, e.error))?;
    Ok(())
}

pub fn read_report(path: &Path) -> CliResult<ExperimentReport> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn key_of(r: &Record) -> CliResult<(u64, u64)> {
    let get = |k: &str| {
        r.get(k)
            .and_then(Value::as_u64)
            .ok_or_else(|| CliError::Config(format!("record without integer `{k}`")))
    };
    Ok((get("seed")?, get("trial")?))
}

fn cell(v: Option<&Value>) -> String {
    match v {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    }
}

/// Merges reports of one experiment into a CSV table ordered by `(seed, trial)`.
pub fn summarize(reports: &[ExperimentReport]) -> CliResult<String> {
    let first = reports
        .first()
        .ok_or_else(|| CliError::Config("nothing to summarize".into()))?;
    let mut rows: BTreeMap<(u64, u64), &Record> = BTreeMap::new();
    for report in reports {
        if report.experiment != first.experiment {
            return Err(CliError::MixedExperiments(
                first.experiment.to_string(),
                report.experiment.to_string(),
            ));
        }
        for r in &report.records {
            let key = key_of(r)?;
            if rows.insert(key, r).is_some() {
                return Err(CliError::DuplicateRecord {
                    seed: key.0,
                    trial: key.1,
                });
            }
        }
    }
    let extra: BTreeSet<&String> = rows
        .values()
        .flat_map(|r| r.keys())
        .filter(|k| *k != "seed" && *k != "trial")
        .collect();
    let mut header = vec!["seed".to_string(), "trial".to_string()];
    header.extend(extra.iter().map(|k| k.to_string()));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for r in rows.values() {
        let line: Vec<String> = header.iter().map(|k| cell(r.get(k))).collect();
        w.write_record(&line).expect("in-memory write");
    }
    let bytes = w.into_inner().expect("in-memory flush");
    Ok(String::from_utf8(bytes).expect("utf-8 csv"))
}
