//! One-sided CUSUM accumulator over the per-frame Mahalanobis statistic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::ChiSquared;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CusumState {
    pub s: f64,
    pub drift: f64,
    pub alarm_threshold: f64,
    pub frame_count: usize,
    /// Index (0-based, counted by `frame_count`) of the first alarm.
    pub first_alarm: Option<usize>,
}

impl CusumState {
    pub fn new(drift: f64, alarm_threshold: f64) -> Result<Self> {
        if !drift.is_finite() {
            return Err(Error::InvalidParameter(format!("drift must be finite, got {drift}")));
        }
        if alarm_threshold.is_nan() || alarm_threshold <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "alarm threshold must be positive, got {alarm_threshold}"
            )));
        }
        Ok(Self { s: 0.0, drift, alarm_threshold, frame_count: 0, first_alarm: None })
    }

    pub fn alarmed(&self) -> bool {
        self.first_alarm.is_some()
    }

    /// `S_m = max(0, S_{m-1} + d2 - drift)`. Returns `true` on the frame
    /// that first pushes `S_m` above the alarm threshold.
    pub fn step(&mut self, d2: f64) -> bool {
        self.s = (self.s + (d2 - self.drift)).max(0.0);
        let index = self.frame_count;
        self.frame_count += 1;
        if self.first_alarm.is_none() && self.s > self.alarm_threshold {
            self.first_alarm = Some(index);
            return true;
        }
        false
    }

    /// Clears the accumulator and the alarm record, keeping the frame counter.
    pub fn reset(&mut self) {
        self.s = 0.0;
        self.first_alarm = None;
    }
}

/// Functional form of [`CusumState::step`].
pub fn cusum_step(state: &CusumState, d2: f64) -> (CusumState, bool) {
    let mut next = state.clone();
    let alarm = next.step(d2);
    (next, alarm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub streams: usize,
    pub seed: u64,
    pub h_min: f64,
    pub h_max: f64,
    pub ratio: f64,
    /// Simulated runs are censored at `max_run_factor * target_arl` frames.
    pub max_run_factor: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self { streams: 10_000, seed: 0x5eed, h_min: 0.5, h_max: 1e5, ratio: 1.005, max_run_factor: 50.0 }
    }
}

impl CalibrationOptions {
    pub fn grid(&self) -> Vec<f64> {
        let mut grid = Vec::new();
        let mut h = self.h_min;
        while h <= self.h_max {
            grid.push(h);
            h *= self.ratio;
        }
        grid
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CusumCalibration {
    pub dim: usize,
    pub drift: f64,
    pub target_arl: f64,
    pub alarm_threshold: f64,
    pub arl: f64,
    pub arl_ci_low: f64,
    pub arl_ci_high: f64,
    pub streams: usize,
}

/// One nominal stream, extended lazily. Records of the running maximum give
/// the first-passage time for every level already reached.
struct LazyStream {
    rng: ChaCha8Rng,
    s: f64,
    frames: usize,
    records: Vec<(f64, usize)>,
}

impl LazyStream {
    fn new(seed: u64, id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id);
        Self { rng, s: 0.0, frames: 0, records: Vec::new() }
    }

    fn peak(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.0)
    }

    fn run_length(&mut self, h: f64, dist: &ChiSquared<f64>, drift: f64, cap: usize) -> usize {
        while self.peak() <= h && self.frames < cap {
            let d2: f64 = self.rng.sample(dist);
            self.s = (self.s + d2 - drift).max(0.0);
            self.frames += 1;
            if self.s > self.peak() {
                self.records.push((self.s, self.frames));
            }
        }
        let idx = self.records.partition_point(|r| r.0 <= h);
        self.records.get(idx).map_or(cap, |r| r.1)
    }
}

/// Monte Carlo average run length of CUSUM on `chi2_d` nominal statistics.
pub fn simulate_arl(dim: usize, drift: f64, h: f64, streams: usize, seed: u64, cap: usize) -> Result<(f64, f64)> {
    let dist = ChiSquared::new(dim as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let runs: Vec<f64> = (0..streams as u64)
        .map(|i| LazyStream::new(seed, i).run_length(h, &dist, drift, cap) as f64)
        .collect();
    Ok(mean_sd(&runs))
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// Smallest grid threshold whose simulated nominal ARL reaches `target_arl`.
///
/// All candidate thresholds share the same simulated streams, so the ARL
/// estimate is monotone in `h` and the search is a bisection over the grid.
pub fn calibrate_cusum(
    dim: usize,
    drift: f64,
    target_arl: f64,
    opts: &CalibrationOptions,
) -> Result<CusumCalibration> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be at least 1".into()));
    }
    if !(target_arl >= 1.0) {
        return Err(Error::InvalidParameter(format!("target ARL must be >= 1, got {target_arl}")));
    }
    if opts.streams < 2 || !(opts.ratio > 1.0) || !(opts.h_min > 0.0) {
        return Err(Error::InvalidParameter("invalid calibration options".into()));
    }
    let dist = ChiSquared::new(dim as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let cap = (opts.max_run_factor * target_arl).ceil().max(1.0) as usize;
    let grid = opts.grid();
    let mut streams: Vec<LazyStream> =
        (0..opts.streams as u64).map(|i| LazyStream::new(opts.seed, i)).collect();
    let mut evaluate = |h: f64| -> (f64, f64) {
        let runs: Vec<f64> =
            streams.iter_mut().map(|s| s.run_length(h, &dist, drift, cap) as f64).collect();
        mean_sd(&runs)
    };

    // Exponential search upward, then bisection. Streams only extend as far
    // as the largest threshold evaluated so far.
    let last = grid.len() - 1;
    let (mut lo, mut hi);
    let mut best = evaluate(grid[0]);
    if best.0 >= target_arl {
        lo = 0;
        hi = 0;
    } else {
        lo = 0;
        let mut step = 1;
        loop {
            let cand = (lo + step).min(last);
            let est = evaluate(grid[cand]);
            if est.0 >= target_arl {
                hi = cand;
                best = est;
                break;
            }
            if cand == last {
                return Err(Error::Unreachable(format!(
                    "ARL {:.1} at h = {} is below target {target_arl}",
                    est.0, grid[last]
                )));
            }
            lo = cand;
            step *= 2;
        }
    }
    while hi > lo + 1 {
        let mid = (lo + hi) / 2;
        let est = evaluate(grid[mid]);
        if est.0 >= target_arl {
            hi = mid;
            best = est;
        } else {
            lo = mid;
        }
    }
    let half_width = 1.96 * best.1 / (opts.streams as f64).sqrt();
    Ok(CusumCalibration {
        dim,
        drift,
        target_arl,
        alarm_threshold: grid[hi],
        arl: best.0,
        arl_ci_low: best.0 - half_width,
        arl_ci_high: best.0 + half_width,
        streams: opts.streams,
    })
}
