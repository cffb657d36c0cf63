use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maps a raw return into [0, 1] with fixed bounds. Returns outside the
/// bounds (possible only for truncated episodes) are clamped.
pub fn normalize(raw: f64, bounds: (f64, f64)) -> f64 {
    ((raw - bounds.0) / (bounds.1 - bounds.0)).clamp(0.0, 1.0)
}

/// Mean of normalized rewards.
pub fn auc(normalized: &[f64]) -> Result<f64> {
    if normalized.is_empty() {
        return Err(Error::InvalidArgument("AUC of an empty curve".into()));
    }
    if let Some(v) = normalized.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!(
            "normalized reward {v} outside [0, 1]"
        )));
    }
    Ok(normalized.iter().sum::<f64>() / normalized.len() as f64)
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Standard error of the mean (sample standard deviation / sqrt n); zero
/// for fewer than two values.
pub fn stderr(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (var / v.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub seed: u64,
    pub raw_reward: f64,
    pub norm_reward: f64,
    pub mean_entropy: f64,
    pub steps: usize,
    /// Action-policy entropy at every step.
    pub entropies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub episodes: usize,
    pub auc: f64,
    pub mean_raw_reward: f64,
    pub final_norm_reward: f64,
    pub initial_entropy: f64,
    pub final_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub env: String,
    pub selector: String,
    pub objective: String,
    pub bounds: (f64, f64),
    /// Window used for the initial/final summary statistics.
    pub window: usize,
    pub episodes: Vec<EpisodeMetrics>,
    pub seeds: Vec<SeedSummary>,
    pub auc_mean: f64,
    pub auc_stderr: f64,
}

impl MetricsReport {
    /// Sorts episodes by (seed, episode) and fills the summaries.
    pub fn build(
        env: String,
        selector: String,
        objective: String,
        bounds: (f64, f64),
        window: usize,
        mut episodes: Vec<EpisodeMetrics>,
    ) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::InvalidArgument(
                "metrics report has no episodes".into(),
            ));
        }
        episodes.sort_by_key(|e| (e.seed, e.episode));
        for e in &episodes {
            if !(e.raw_reward.is_finite() && e.mean_entropy.is_finite()) {
                return Err(Error::non_finite(
                    "episode metrics",
                    format!("seed {} episode {}", e.seed, e.episode),
                ));
            }
        }
        let mut seeds = Vec::new();
        for chunk in episodes.chunk_by(|a, b| a.seed == b.seed) {
            let norm: Vec<f64> = chunk.iter().map(|e| e.norm_reward).collect();
            let ent: Vec<f64> = chunk.iter().map(|e| e.mean_entropy).collect();
            let w = window.min(chunk.len()).max(1);
            seeds.push(SeedSummary {
                seed: chunk[0].seed,
                episodes: chunk.len(),
                auc: auc(&norm)?,
                mean_raw_reward: mean(&chunk.iter().map(|e| e.raw_reward).collect::<Vec<_>>()),
                final_norm_reward: mean(&norm[norm.len() - w..]),
                initial_entropy: mean(&ent[..w]),
                final_entropy: mean(&ent[ent.len() - w..]),
            });
        }
        let aucs: Vec<f64> = seeds.iter().map(|s| s.auc).collect();
        Ok(MetricsReport {
            env,
            selector,
            objective,
            bounds,
            window,
            auc_mean: mean(&aucs),
            auc_stderr: stderr(&aucs),
            episodes,
            seeds,
        })
    }

    pub fn seed_aucs(&self) -> Vec<f64> {
        self.seeds.iter().map(|s| s.auc).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "episode",
            "seed",
            "raw_reward",
            "norm_reward",
            "mean_entropy",
            "selector",
            "objective",
        ])?;
        for e in &self.episodes {
            w.write_record([
                e.episode.to_string(),
                e.seed.to_string(),
                e.raw_reward.to_string(),
                e.norm_reward.to_string(),
                e.mean_entropy.to_string(),
                self.selector.clone(),
                self.objective.clone(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("metrics csv", e))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn summary(&self) -> Summary {
        Summary {
            env: self.env.clone(),
            selector: self.selector.clone(),
            objective: self.objective.clone(),
            bounds: self.bounds,
            window: self.window,
            auc: self.auc_mean,
            auc_stderr: self.auc_stderr,
            seeds: self.seeds.clone(),
        }
    }
}

/// The JSON summary written next to the metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub env: String,
    pub selector: String,
    pub objective: String,
    pub bounds: (f64, f64),
    pub window: usize,
    pub auc: f64,
    pub auc_stderr: f64,
    pub seeds: Vec<SeedSummary>,
}
