use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{RunManifest, METRICS_FILE, SUMMARY_FILE};
use crate::error::{Error, Result};
use crate::trainer::{mean, stderr, Summary};
use crate::util::read_json;

#[derive(Debug, Deserialize)]
struct MetricsRow {
    episode: usize,
    seed: u64,
    #[allow(dead_code)]
    raw_reward: f64,
    norm_reward: f64,
    mean_entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutput {
    pub curves: PathBuf,
    pub auc: PathBuf,
    pub methods: Vec<String>,
}

fn method_name(dir: &Path, taken: &[String]) -> String {
    let base = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let mut name = base.clone();
    let mut i = 2;
    while taken.contains(&name) {
        name = format!("{base}-{i}");
        i += 1;
    }
    name
}

/// Aggregates train run directories (one method each) into plot-ready CSVs:
/// `curves.csv` with per-episode mean and standard error across seeds, and
/// `auc.csv` with each run's summary AUC.
pub fn cmd_report(run_dirs: &[PathBuf], out: &Path) -> Result<ReportOutput> {
    if run_dirs.is_empty() {
        return Err(Error::InvalidArgument(
            "report needs at least one run directory".into(),
        ));
    }
    let mut env: Option<String> = None;
    let mut methods = Vec::new();
    let mut curve_rows = Vec::new();
    let mut auc_rows = Vec::new();
    for dir in run_dirs {
        let manifest = RunManifest::load(dir)?;
        match &env {
            None => env = Some(manifest.env.clone()),
            Some(e) if *e != manifest.env => {
                return Err(Error::InvalidArgument(format!(
                    "runs mix environments: {e} and {} ({})",
                    manifest.env,
                    dir.display()
                )))
            }
            _ => {}
        }
        let summary: Summary = read_json(&dir.join(SUMMARY_FILE))?;
        let path = dir.join(METRICS_FILE);
        let mut reader = csv::Reader::from_path(&path).map_err(|e| match e.kind() {
            csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
                Error::MissingFile(path.clone())
            }
            _ => Error::Csv(e),
        })?;
        let mut by_episode: BTreeMap<usize, Vec<(u64, f64, f64)>> = BTreeMap::new();
        for row in reader.deserialize::<MetricsRow>() {
            let row = row?;
            by_episode.entry(row.episode).or_default().push((
                row.seed,
                row.norm_reward,
                row.mean_entropy,
            ));
        }
        let name = method_name(dir, &methods);
        for (episode, mut vals) in by_episode {
            vals.sort_by_key(|v| v.0);
            let norm: Vec<f64> = vals.iter().map(|v| v.1).collect();
            let ent: Vec<f64> = vals.iter().map(|v| v.2).collect();
            curve_rows.push([
                name.clone(),
                episode.to_string(),
                vals.len().to_string(),
                mean(&norm).to_string(),
                stderr(&norm).to_string(),
                mean(&ent).to_string(),
                stderr(&ent).to_string(),
            ]);
        }
        auc_rows.push([
            name.clone(),
            summary.env.clone(),
            summary.selector.clone(),
            summary.objective.clone(),
            summary.auc.to_string(),
            summary.auc_stderr.to_string(),
            summary.seeds.len().to_string(),
        ]);
        methods.push(name);
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let curves = out.join("curves.csv");
    let mut w = csv::Writer::from_path(&curves)?;
    w.write_record([
        "method",
        "episode",
        "n_seeds",
        "norm_reward_mean",
        "norm_reward_stderr",
        "entropy_mean",
        "entropy_stderr",
    ])?;
    for r in &curve_rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(&curves, e))?;
    let auc = out.join("auc.csv");
    let mut w = csv::Writer::from_path(&auc)?;
    w.write_record([
        "method",
        "env",
        "selector",
        "objective",
        "auc",
        "auc_stderr",
        "n_seeds",
    ])?;
    for r in &auc_rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(&auc, e))?;
    Ok(ReportOutput {
        curves,
        auc,
        methods,
    })
}
