//! Threshold-sweep curves, latency distributions and run-to-run bands.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points on the common x-grid used when banding runs.
pub const BAND_GRID_POINTS: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDataset {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    pub run_id: u64,
}

impl ScoredDataset {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>, run_id: u64) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::LengthMismatch { expected: labels.len(), actual: scores.len() });
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("scores".into()));
        }
        Ok(Self { scores, labels, run_id })
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn negatives(&self) -> usize {
        self.labels.len() - self.positives()
    }

    /// `(tp, fp)` after each distinct threshold, from the highest score down.
    fn sweep(&self) -> Vec<(f64, usize, usize)> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        let mut out = Vec::new();
        let (mut tp, mut fp) = (0, 0);
        let mut i = 0;
        while i < order.len() {
            let threshold = self.scores[order[i]];
            while i < order.len() && self.scores[order[i]] == threshold {
                if self.labels[order[i]] {
                    tp += 1;
                } else {
                    fp += 1;
                }
                i += 1;
            }
            out.push((threshold, tp, fp));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Roc,
    Pr,
    LatencyCdf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub kind: CurveKind,
    /// `(x, y)`: (FPR, TPR) for ROC, (recall, precision) for PR,
    /// (latency, CDF) for latency.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
    pub band: Option<Band>,
    /// Latency only: fraction of streams without a detection.
    pub censored_mass: Option<f64>,
}

fn require_both(ds: &ScoredDataset) -> Result<(usize, usize)> {
    let (p, n) = (ds.positives(), ds.negatives());
    if p == 0 || n == 0 {
        return Err(Error::SingleClass(format!("{p} positives, {n} negatives")));
    }
    Ok((p, n))
}

pub fn roc_curve(ds: &ScoredDataset) -> Result<CurveReport> {
    let (p, n) = require_both(ds)?;
    let mut points = vec![(0.0, 0.0)];
    let mut auc = 0.0;
    for (_, tp, fp) in ds.sweep() {
        let (x0, y0) = *points.last().unwrap();
        let (x, y) = (fp as f64 / n as f64, tp as f64 / p as f64);
        auc += (x - x0) * (y + y0) / 2.0;
        points.push((x, y));
    }
    Ok(CurveReport { kind: CurveKind::Roc, points, auc, band: None, censored_mass: None })
}

/// Precision-recall curve; the PR-AUC is the average precision
/// `sum (R_i - R_{i-1}) P_i`. Precision with no predicted positives is 1.
pub fn pr_curve(ds: &ScoredDataset) -> Result<CurveReport> {
    let (p, _) = require_both(ds)?;
    let mut points = vec![(0.0, 1.0)];
    let mut auc = 0.0;
    let mut prev_recall = 0.0;
    for (_, tp, fp) in ds.sweep() {
        let recall = tp as f64 / p as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        auc += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push((recall, precision));
    }
    Ok(CurveReport { kind: CurveKind::Pr, points, auc, band: None, censored_mass: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Frames with `score >= threshold` are flagged.
    pub threshold: f64,
    /// No nominal frames were present.
    pub degenerate: bool,
}

pub fn f1_best(ds: &ScoredDataset) -> Result<F1Report> {
    let p = ds.positives();
    if p == 0 {
        return Err(Error::SingleClass("no positive labels".into()));
    }
    let degenerate = ds.negatives() == 0;
    let mut best = F1Report { precision: 1.0, recall: 0.0, f1: 0.0, threshold: f64::INFINITY, degenerate };
    for (threshold, tp, fp) in ds.sweep() {
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / p as f64;
        let f1 = if tp == 0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        // Sweep runs from high to low thresholds; strict improvement keeps
        // the higher threshold on ties.
        if f1 > best.f1 {
            best = F1Report { precision, recall, f1, threshold, degenerate };
        }
    }
    Ok(best)
}

/// One stream's onset and first alarm at or after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyObservation {
    pub onset: usize,
    pub first_alarm: Option<usize>,
}

/// Empirical CDF of `first_alarm - onset` on `0..=horizon` frames. Streams
/// without an alarm are censored; they never count toward the CDF.
pub fn latency_cdf(observations: &[LatencyObservation], horizon: usize) -> Result<CurveReport> {
    if observations.is_empty() {
        return Err(Error::Empty("no latency observations".into()));
    }
    let mut latencies = Vec::with_capacity(observations.len());
    let mut censored = 0usize;
    for o in observations {
        match o.first_alarm {
            Some(a) if a < o.onset => {
                return Err(Error::InvalidParameter(format!("alarm {a} precedes onset {}", o.onset)))
            }
            Some(a) => latencies.push(a - o.onset),
            None => censored += 1,
        }
    }
    let total = observations.len() as f64;
    let mut counts = vec![0usize; horizon + 1];
    for l in latencies {
        if l <= horizon {
            counts[l] += 1;
        }
    }
    let mut acc = 0usize;
    let points: Vec<(f64, f64)> = counts
        .iter()
        .enumerate()
        .map(|(x, c)| {
            acc += c;
            (x as f64, acc as f64 / total)
        })
        .collect();
    let auc = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    Ok(CurveReport {
        kind: CurveKind::LatencyCdf,
        points,
        auc,
        band: None,
        censored_mass: Some(censored as f64 / total),
    })
}

/// Rank-`ceil(q n)` order statistic (nearest-rank percentile).
fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

fn interpolate(points: &[(f64, f64)], kind: CurveKind, grid: &[f64]) -> Vec<f64> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    // Collapse repeated x to the largest y.
    let mut dedup: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        match dedup.last_mut() {
            Some(last) if last.0 == p.0 => last.1 = last.1.max(p.1),
            _ => dedup.push(p),
        }
    }
    if kind == CurveKind::Pr {
        // Interpolated precision: best precision at any recall >= r.
        for i in (0..dedup.len().saturating_sub(1)).rev() {
            dedup[i].1 = dedup[i].1.max(dedup[i + 1].1);
        }
    }
    grid.iter()
        .map(|&x| {
            let idx = dedup.partition_point(|p| p.0 < x);
            if idx == 0 {
                dedup[0].1
            } else if idx == dedup.len() {
                dedup[dedup.len() - 1].1
            } else {
                let (x0, y0) = dedup[idx - 1];
                let (x1, y1) = dedup[idx];
                if x1 == x0 {
                    y1
                } else {
                    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
                }
            }
        })
        .collect()
}

/// Pointwise mean and 5th/95th percentile envelope across runs.
pub fn run_bands(reports: &[CurveReport]) -> Result<CurveReport> {
    if reports.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, actual: reports.len() });
    }
    let kind = reports[0].kind;
    if reports.iter().any(|r| r.kind != kind) {
        return Err(Error::InvalidParameter("cannot band curves of different kinds".into()));
    }
    if reports.iter().any(|r| r.points.is_empty()) {
        return Err(Error::Empty("curve without points".into()));
    }
    let lo = reports.iter().flat_map(|r| r.points.iter().map(|p| p.0)).fold(f64::INFINITY, f64::min);
    let hi = reports.iter().flat_map(|r| r.points.iter().map(|p| p.0)).fold(f64::NEG_INFINITY, f64::max);
    let grid: Vec<f64> = (0..BAND_GRID_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (BAND_GRID_POINTS - 1) as f64)
        .collect();
    let curves: Vec<Vec<f64>> = reports.iter().map(|r| interpolate(&r.points, kind, &grid)).collect();
    let runs = reports.len() as f64;
    let mut points = Vec::with_capacity(grid.len());
    let mut low = Vec::with_capacity(grid.len());
    let mut high = Vec::with_capacity(grid.len());
    let mut column = vec![0.0; reports.len()];
    for (i, &x) in grid.iter().enumerate() {
        for (c, curve) in column.iter_mut().zip(&curves) {
            *c = curve[i];
        }
        let mean = column.iter().sum::<f64>() / runs;
        column.sort_by(f64::total_cmp);
        // Clamp so the envelope always contains the mean.
        low.push(nearest_rank(&column, 0.05).min(mean));
        high.push(nearest_rank(&column, 0.95).max(mean));
        points.push((x, mean));
    }
    let censored_mass = if kind == CurveKind::LatencyCdf {
        Some(reports.iter().map(|r| r.censored_mass.unwrap_or(0.0)).sum::<f64>() / runs)
    } else {
        None
    };
    Ok(CurveReport {
        kind,
        points,
        auc: reports.iter().map(|r| r.auc).sum::<f64>() / runs,
        band: Some(Band { low, high }),
        censored_mass,
    })
}

/// Per-frame false-positive rate mapped to alarms per hour.
pub fn false_alarms_per_hour(fpr: f64, frames_per_second: f64) -> f64 {
    fpr * frames_per_second * 3600.0
}

pub fn false_alarms_per_day(fpr: f64, frames_per_second: f64) -> f64 {
    24.0 * false_alarms_per_hour(fpr, frames_per_second)
}
