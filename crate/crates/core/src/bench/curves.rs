use std::path::Path;

use crate::agents::EpisodeMetrics;
use crate::error::{Error, Result};
use crate::fmt::sig6;

pub const DEFAULT_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub episode: usize,
    pub avg_sum_mse: f64,
    pub smoothed_mse: f64,
    pub avg_sum_aoi: f64,
    pub smoothed_aoi: f64,
}

/// Trailing moving average: point `i` averages episodes `i+1−window ..= i`,
/// or all episodes so far while fewer than `window` exist.
pub fn moving_average(xs: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::validation("smoothing window must be positive"));
    }
    Ok((0..xs.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            xs[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect())
}

pub fn export_curves(metrics: &[EpisodeMetrics], window: usize) -> Result<Vec<CurvePoint>> {
    let mse: Vec<f64> = metrics.iter().map(|m| m.avg_sum_mse).collect();
    let aoi: Vec<f64> = metrics.iter().map(|m| m.avg_sum_aoi).collect();
    let sm = moving_average(&mse, window)?;
    let sa = moving_average(&aoi, window)?;
    Ok(metrics
        .iter()
        .enumerate()
        .map(|(i, m)| CurvePoint {
            episode: m.episode,
            avg_sum_mse: mse[i],
            smoothed_mse: sm[i],
            avg_sum_aoi: aoi[i],
            smoothed_aoi: sa[i],
        })
        .collect())
}

pub fn write_curves_csv(path: &Path, points: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["episode", "avg_sum_mse", "smoothed_mse", "avg_sum_aoi", "smoothed_aoi"])?;
    for p in points {
        w.write_record([
            p.episode.to_string(),
            sig6(p.avg_sum_mse),
            sig6(p.smoothed_mse),
            sig6(p.avg_sum_aoi),
            sig6(p.smoothed_aoi),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
