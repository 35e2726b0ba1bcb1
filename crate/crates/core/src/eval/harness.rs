//! Ablation, domain-shift and latency suites over seeded synthetic runs.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::CusumState;
use crate::error::{Error, Result};
use crate::eval::metrics::{
    f1_best, latency_cdf, pr_curve, roc_curve, run_bands, CurveReport, LatencyObservation, ScoredDataset,
};
use crate::hos::HosFeatures;
use crate::pipeline::{FeatureConfig, FeatureExtractor};
use crate::signature::{fit_vectors, NominalModel, DEFAULT_SHRINKAGE};
use crate::synth::{generate, generate_fused, LabeledStream, ScenarioSpec, ShiftRegime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "wpt+hos")]
    WptHos,
    #[serde(rename = "wpt-only")]
    WptOnly,
    #[serde(rename = "hos-only")]
    HosOnly,
    #[serde(rename = "second-order")]
    SecondOrder,
    #[serde(rename = "single-source")]
    SingleSource,
    #[serde(rename = "fused-source")]
    FusedSource,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::WptHos,
        Method::WptOnly,
        Method::HosOnly,
        Method::SecondOrder,
        Method::SingleSource,
        Method::FusedSource,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::WptHos => "wpt+hos",
            Method::WptOnly => "wpt-only",
            Method::HosOnly => "hos-only",
            Method::SecondOrder => "second-order",
            Method::SingleSource => "single-source",
            Method::FusedSource => "fused-source",
        }
    }

    fn fused(self) -> bool {
        self == Method::FusedSource
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        let m = match key.as_str() {
            "wpt+hos" | "wpt-hos" => Method::WptHos,
            "wpt-only" | "wpt" => Method::WptOnly,
            "hos-only" | "hos" => Method::HosOnly,
            "second-order" | "second-order-only" => Method::SecondOrder,
            "single-source" | "single" => Method::SingleSource,
            "fused-source" | "fused" => Method::FusedSource,
            _ => return Err(Error::UnknownMethod(s.to_string())),
        };
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessOptions {
    pub features: FeatureConfig,
    pub shrinkage: f64,
    /// Length of the separately generated nominal training stream.
    pub train_frames: usize,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        Self { features: FeatureConfig::default(), shrinkage: DEFAULT_SHRINKAGE, train_frames: 400 }
    }
}

/// SplitMix64 finalizer; derives independent sub-seeds from a run seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const TRAIN_TAG: u64 = 1;

/// Nominal training scenario paired with `spec`.
pub fn training_spec(spec: &ScenarioSpec, frames: usize) -> ScenarioSpec {
    ScenarioSpec { frames, seed: derive_seed(spec.seed, TRAIN_TAG), ..spec.nominal() }
}

fn method_features(method: Method, ex: &FeatureExtractor, frame: &[f64]) -> Result<Vec<f64>> {
    let cfg = ex.config();
    match method {
        Method::WptHos | Method::SingleSource | Method::FusedSource => Ok(ex.signature(frame, 0)?.values),
        Method::WptOnly => Ok(ex.node_features(frame)?.iter().map(|f| f.energy).collect()),
        Method::SecondOrder => {
            let nodes = ex.node_features(frame)?;
            Ok(nodes.iter().map(|f| f.energy).chain(nodes.iter().map(|f| f.r0)).collect())
        }
        Method::HosOnly => {
            let h = HosFeatures::compute(frame, &cfg.lags, cfg.epsilon)?;
            Ok(vec![h.cumulant_energy, h.normalized])
        }
    }
}

fn stream_for(method: Method, spec: &ScenarioSpec) -> Result<LabeledStream> {
    if method.fused() {
        generate_fused(spec)
    } else {
        generate(spec)
    }
}

fn featurize(method: Method, ex: &FeatureExtractor, stream: &LabeledStream) -> Result<Vec<Vec<f64>>> {
    stream.frames.iter().map(|f| method_features(method, ex, f)).collect()
}

/// Fits the method's nominal model on a fresh training stream.
pub fn fit_method(method: Method, spec: &ScenarioSpec, opts: &HarnessOptions) -> Result<NominalModel> {
    let ex = FeatureExtractor::new(opts.features.clone())?;
    let train = stream_for(method, &training_spec(spec, opts.train_frames))?;
    fit_vectors(&featurize(method, &ex, &train)?, opts.shrinkage)
}

/// Per-frame `D^2` for one method on the stream generated from `spec`.
pub fn score_method(method: Method, spec: &ScenarioSpec, opts: &HarnessOptions) -> Result<ScoredDataset> {
    let ex = FeatureExtractor::new(opts.features.clone())?;
    let model = fit_method(method, spec, opts)?;
    let test = stream_for(method, spec)?;
    let scores = featurize(method, &ex, &test)?
        .iter()
        .map(|f| model.mahalanobis_sq(f))
        .collect::<Result<Vec<f64>>>()?;
    ScoredDataset::new(scores, test.labels, spec.seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub method: Method,
    pub roc_auc: f64,
    pub pr_auc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone)]
pub struct MethodRun {
    pub row: AblationRow,
    pub roc: CurveReport,
    pub pr: CurveReport,
}

fn run_method(method: Method, spec: &ScenarioSpec, opts: &HarnessOptions) -> Result<MethodRun> {
    let ds = score_method(method, spec, opts)?;
    let roc = roc_curve(&ds)?;
    let pr = pr_curve(&ds)?;
    let f = f1_best(&ds)?;
    let row = AblationRow {
        method,
        roc_auc: roc.auc,
        pr_auc: pr.auc,
        precision: f.precision,
        recall: f.recall,
        f1: f.f1,
    };
    Ok(MethodRun { row, roc, pr })
}

/// One run of every method on a shared scenario.
pub fn ablation_harness(spec: &ScenarioSpec, methods: &[Method], opts: &HarnessOptions) -> Result<Vec<AblationRow>> {
    methods.iter().map(|&m| run_method(m, spec, opts).map(|r| r.row)).collect()
}

/// Bands across runs; a single run is paired with itself for a zero-width band.
fn band(reports: Vec<CurveReport>) -> Result<CurveReport> {
    if reports.len() == 1 {
        run_bands(&[reports[0].clone(), reports[0].clone()])
    } else {
        run_bands(&reports)
    }
}

fn mean_row(method: Method, rows: &[AblationRow]) -> AblationRow {
    let n = rows.len() as f64;
    let avg = |f: fn(&AblationRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    AblationRow {
        method,
        roc_auc: avg(|r| r.roc_auc),
        pr_auc: avg(|r| r.pr_auc),
        precision: avg(|r| r.precision),
        recall: avg(|r| r.recall),
        f1: avg(|r| r.f1),
    }
}

#[derive(Debug, Clone)]
pub struct MethodSummary {
    pub mean: AblationRow,
    pub runs: Vec<AblationRow>,
    pub roc: CurveReport,
    pub pr: CurveReport,
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::Empty("no run seeds".into()));
    }
    Ok(())
}

/// Ablation table averaged over runs, one scenario per seed.
pub fn ablation_suite(
    base: &ScenarioSpec,
    methods: &[Method],
    seeds: &[u64],
    opts: &HarnessOptions,
) -> Result<Vec<MethodSummary>> {
    check_seeds(seeds)?;
    methods
        .iter()
        .map(|&m| {
            let runs = seeds
                .par_iter()
                .map(|&s| run_method(m, &ScenarioSpec { seed: s, ..base.clone() }, opts))
                .collect::<Result<Vec<MethodRun>>>()?;
            let rows: Vec<AblationRow> = runs.iter().map(|r| r.row.clone()).collect();
            Ok(MethodSummary {
                mean: mean_row(m, &rows),
                roc: band(runs.iter().map(|r| r.roc.clone()).collect())?,
                pr: band(runs.iter().map(|r| r.pr.clone()).collect())?,
                runs: rows,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRow {
    pub regime: ShiftRegime,
    pub method: Method,
    pub mean_auc: f64,
    pub band_low: f64,
    pub band_high: f64,
    pub aucs: Vec<f64>,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// ROC-AUC per regime and method; the nominal model is shared across regimes.
pub fn domain_shift_suite(
    base: &ScenarioSpec,
    methods: &[Method],
    seeds: &[u64],
    opts: &HarnessOptions,
) -> Result<Vec<ShiftRow>> {
    check_seeds(seeds)?;
    let mut rows = Vec::new();
    for &regime in &ShiftRegime::ALL {
        for &method in methods {
            let aucs = seeds
                .par_iter()
                .map(|&s| {
                    let spec = ScenarioSpec { seed: s, regime, ..base.clone() };
                    roc_curve(&score_method(method, &spec, opts)?).map(|r| r.auc)
                })
                .collect::<Result<Vec<f64>>>()?;
            let mean_auc = aucs.iter().sum::<f64>() / aucs.len() as f64;
            let mut sorted = aucs.clone();
            sorted.sort_by(f64::total_cmp);
            rows.push(ShiftRow {
                regime,
                method,
                mean_auc,
                band_low: percentile(&sorted, 0.05).min(mean_auc),
                band_high: percentile(&sorted, 0.95).max(mean_auc),
                aucs,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyOptions {
    pub drift: f64,
    pub alarm_threshold: f64,
    /// Streams simulated per run seed.
    pub streams_per_run: usize,
    pub horizon: usize,
}

/// First alarm at or after `onset`. Earlier alarms count as false alarms and
/// restart the statistic.
pub fn first_alarm_after(scores: &[f64], onset: usize, drift: f64, h: f64) -> Result<(Option<usize>, usize)> {
    let mut state = CusumState::new(drift, h)?;
    let mut false_alarms = 0;
    for (m, &d2) in scores.iter().enumerate() {
        if state.step(d2) {
            if m >= onset {
                return Ok((Some(m), false_alarms));
            }
            false_alarms += 1;
            state.reset();
        }
    }
    Ok((None, false_alarms))
}

#[derive(Debug, Clone)]
pub struct LatencySummary {
    pub curve: CurveReport,
    pub false_alarms: usize,
    pub observations: Vec<LatencyObservation>,
}

/// Detection-latency CDF of the WPT+HOS detector with CUSUM alarming.
pub fn latency_suite(
    base: &ScenarioSpec,
    seeds: &[u64],
    opts: &HarnessOptions,
    lat: &LatencyOptions,
) -> Result<LatencySummary> {
    check_seeds(seeds)?;
    if lat.streams_per_run == 0 {
        return Err(Error::InvalidParameter("streams per run must be positive".into()));
    }
    let per_run = seeds
        .par_iter()
        .map(|&seed| {
            (0..lat.streams_per_run)
                .map(|i| {
                    let spec = ScenarioSpec { seed: derive_seed(seed, 100 + i as u64), ..base.clone() };
                    let ds = score_method(Method::WptHos, &spec, opts)?;
                    let (alarm, fa) = first_alarm_after(&ds.scores, spec.onset_frame, lat.drift, lat.alarm_threshold)?;
                    Ok((LatencyObservation { onset: spec.onset_frame, first_alarm: alarm }, fa))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let curves = per_run
        .iter()
        .map(|run| latency_cdf(&run.iter().map(|r| r.0).collect::<Vec<_>>(), lat.horizon))
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<(LatencyObservation, usize)> = per_run.into_iter().flatten().collect();
    Ok(LatencySummary {
        curve: band(curves)?,
        false_alarms: all.iter().map(|r| r.1).sum(),
        observations: all.into_iter().map(|r| r.0).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::AnomalySpec;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.name()));
        }
        assert!(matches!("bogus".parse::<Method>(), Err(Error::UnknownMethod(_))));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 1), derive_seed(1, 2));
        assert_ne!(derive_seed(1, 1), derive_seed(2, 1));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }

    #[test]
    fn feature_dimensions() {
        let ex = FeatureExtractor::new(FeatureConfig::default()).unwrap();
        let frame: Vec<f64> = (0..1024).map(|i| ((i * 37 % 11) as f64).sin()).collect();
        let dims: Vec<usize> =
            Method::ALL.iter().map(|&m| method_features(m, &ex, &frame).unwrap().len()).collect();
        assert_eq!(dims, vec![12, 4, 2, 8, 12, 12]);
    }

    #[test]
    fn cusum_latency_restarts_after_false_alarm() {
        let scores = [100.0, 0.0, 0.0, 0.0, 100.0];
        let (alarm, fa) = first_alarm_after(&scores, 3, 1.0, 50.0).unwrap();
        assert_eq!(alarm, Some(4));
        assert_eq!(fa, 1);
        assert_eq!(first_alarm_after(&[0.0; 5], 0, 1.0, 5.0).unwrap(), (None, 0));
    }

    #[test]
    fn null_scenario_is_chance() {
        let spec = ScenarioSpec {
            anomaly: AnomalySpec::MeanShift { energy_scale: 1.0 },
            frames: 600,
            onset_frame: 300,
            ..ScenarioSpec::benchmark(11)
        };
        let rows = ablation_harness(&spec, &Method::ALL, &HarnessOptions::default()).unwrap();
        for r in rows {
            assert!((r.roc_auc - 0.5).abs() < 0.08, "{} {}", r.method, r.roc_auc);
        }
    }
}
