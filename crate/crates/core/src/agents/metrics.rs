use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::select::Stage;
use crate::error::{Error, Result};
use crate::fmt::sig6;

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub stage: Stage,
    /// Mean over the episode's steps of `Σ_n Tr(P_n,t)`, unscaled.
    pub avg_sum_mse: f64,
    pub avg_sum_aoi: f64,
    /// Exploration rates at the end of the episode.
    pub epsilon: f64,
    pub xi: f64,
    /// Mean minibatch loss, absent before the first update.
    pub loss: Option<f64>,
}

/// Counters accumulated over a whole training run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounters {
    pub steps: usize,
    /// Executed actions checked against the scheduling constraint.
    pub checked_actions: usize,
    pub explored: usize,
    pub se_executed: usize,
    pub updates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub metrics: Vec<EpisodeMetrics>,
    pub counters: RunCounters,
}

pub const METRICS_HEADER: [&str; 7] = ["episode", "stage", "avg_sum_mse", "avg_sum_aoi", "epsilon", "xi", "loss"];

pub fn write_metrics<W: Write>(out: W, metrics: &[EpisodeMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for m in metrics {
        w.write_record([
            m.episode.to_string(),
            m.stage.name().to_string(),
            sig6(m.avg_sum_mse),
            sig6(m.avg_sum_aoi),
            sig6(m.epsilon),
            sig6(m.xi),
            m.loss.map(sig6).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))
}

pub fn write_metrics_csv(path: &Path, metrics: &[EpisodeMetrics]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_metrics(file, metrics)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<EpisodeMetrics>> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().ne(METRICS_HEADER) {
        return Err(Error::validation(format!("{}: not a training metrics file", path.display())));
    }
    let bad = |line: u64, what: &str| Error::validation(format!("{}:{line}: bad {what}", path.display()));
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize, what: &str| rec[i].parse::<f64>().map_err(|_| bad(line, what));
        let stage = match &rec[1] {
            "loose" => Stage::Loose,
            "tight" => Stage::Tight,
            "conventional" => Stage::Conventional,
            _ => return Err(bad(line, "stage")),
        };
        out.push(EpisodeMetrics {
            episode: rec[0].parse().map_err(|_| bad(line, "episode"))?,
            stage,
            avg_sum_mse: num(2, "avg_sum_mse")?,
            avg_sum_aoi: num(3, "avg_sum_aoi")?,
            epsilon: num(4, "epsilon")?,
            xi: num(5, "xi")?,
            loss: if rec[6].is_empty() { None } else { Some(num(6, "loss")?) },
        });
    }
    Ok(out)
}
