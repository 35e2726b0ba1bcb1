//! Subcommand implementations. Each returns the process exit status.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use noisesig_core::detector::{calibrate_cusum, CalibrationOptions, CusumCalibration, CusumState, DetectorConfig};
use noisesig_core::eval::{
    ablation_suite, derive_seed, domain_shift_suite, false_alarms_per_hour, latency_suite, AblationRow,
    HarnessOptions, LatencyOptions, Method,
};
use noisesig_core::hos::{bispectrum, cumulant_grid};
use noisesig_core::residual::build_mask;
use noisesig_core::synth::{generate, generate_fused, RNG_ALGORITHM};
use noisesig_core::{fit_nominal, CumulantGrid, FeatureExtractor, ScenarioSpec};

use crate::formats::{self, fmt_f64, DetectionSummary, LogRow, ModelFile, StreamLabels};
use crate::{Command, PipelineConfig, Suite, Failure, EX_ALARM, EX_CONFIG, EX_DATAERR, EX_OK, EX_USAGE};

pub fn dispatch(cfg: &PipelineConfig, command: Command) -> Result<i32> {
    match command {
        Command::Generate { scenario, frames, onset, nominal, fused, out, labels } => {
            let out = output(out, cfg).ok_or_else(|| Failure::new(EX_USAGE, "generate needs --out"))?;
            let labels = labels.unwrap_or_else(|| formats::labels_path(&out));
            let spec = scenario_for(cfg, scenario.as_deref(), frames, onset, nominal)?;
            let (csv, sidecar) = cmd_generate(&spec, fused)?;
            formats::write_text(&out, &csv)?;
            formats::write_json(&labels, &sidecar)?;
            Ok(EX_OK)
        }
        Command::Fit { input, out, force } => {
            let input = input_path(input, cfg)?;
            let model = cmd_fit(cfg, &input, force)?;
            emit(output(out, cfg).as_deref(), &formats::to_json(&model))?;
            Ok(EX_OK)
        }
        Command::Detect { model, input, out } => {
            let model: ModelFile = formats::read_json(&model)?;
            let frames = load_frames(&input_path(input, cfg)?, cfg)?;
            let (rows, summary) = cmd_detect(cfg, &model, &frames)?;
            let out = output(out, cfg);
            emit(out.as_deref(), &formats::log_to_csv(&rows))?;
            if let Some(path) = &out {
                formats::write_json(&path.with_extension("summary.json"), &summary)?;
            }
            Ok(if summary.first_alarm.is_some() { EX_ALARM } else { EX_OK })
        }
        Command::Featurize { input, out } => {
            let frames = load_frames(&input_path(input, cfg)?, cfg)?;
            emit(output(out, cfg).as_deref(), &cmd_featurize(cfg, &frames)?)?;
            Ok(EX_OK)
        }
        Command::Decompose { input, out, frame } => {
            let frames = load_frames(&input_path(input, cfg)?, cfg)?;
            emit(output(out, cfg).as_deref(), &cmd_decompose(cfg, &frames, frame)?)?;
            Ok(EX_OK)
        }
        Command::Calibrate { dim, out } => {
            let report = cmd_calibrate(cfg, dim)?;
            emit(output(out, cfg).as_deref(), &formats::to_json(&report))?;
            Ok(EX_OK)
        }
        Command::Evaluate { suite, runs, scenario, frames, streams, frame_rate, out_dir } => {
            let spec = scenario_for(cfg, scenario.as_deref(), frames, None, false)?;
            let opts = EvaluateOptions { suite, runs, streams, frame_rate, train_frames: 400 };
            for (name, text) in cmd_evaluate(cfg, &spec, &opts)? {
                formats::write_text(&out_dir.join(name), &text)?;
            }
            Ok(EX_OK)
        }
        Command::Bispectrum { input, out, size, tau_max, frame } => {
            let frames = load_frames(&input_path(input, cfg)?, cfg)?;
            emit(output(out, cfg).as_deref(), &cmd_bispectrum(&frames, size, tau_max, frame)?)?;
            Ok(EX_OK)
        }
    }
}

fn output(arg: Option<PathBuf>, cfg: &PipelineConfig) -> Option<PathBuf> {
    arg.or_else(|| cfg.output.clone())
}

fn input_path(arg: Option<PathBuf>, cfg: &PipelineConfig) -> Result<PathBuf> {
    Ok(arg.or_else(|| cfg.input.clone()).ok_or_else(|| Failure::new(EX_USAGE, "no input stream (--input)"))?)
}

/// Writes to `path`, or stdout when absent.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => formats::write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Reads a stream whose frames match the configured frame length.
pub fn load_frames(path: &Path, cfg: &PipelineConfig) -> Result<Vec<Vec<f64>>> {
    let text = formats::read_text(path)?;
    let frames = formats::stream_from_csv(&text)
        .with_context(|| format!("malformed stream {}", path.display()))
        .context(Failure::new(EX_DATAERR, "malformed stream"))?;
    if let Some(f) = frames.first() {
        if f.len() != cfg.features.frame_length {
            return Err(Failure::new(
                EX_DATAERR,
                format!("stream frames have {} samples, config expects {}", f.len(), cfg.features.frame_length),
            )
            .into());
        }
    }
    Ok(frames)
}

/// Scenario from a file or the built-in benchmark, with overrides applied.
pub fn scenario_for(
    cfg: &PipelineConfig,
    path: Option<&Path>,
    frames: Option<usize>,
    onset: Option<usize>,
    nominal: bool,
) -> Result<ScenarioSpec> {
    let seed = cfg.resolved_seed()?;
    let mut spec = match path {
        Some(p) => {
            let mut s: ScenarioSpec = formats::read_json(p)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            s
        }
        None => ScenarioSpec {
            frame_length: cfg.features.frame_length,
            ..ScenarioSpec::benchmark(seed.unwrap_or(0))
        },
    };
    if let Some(n) = frames {
        spec.frames = n;
        spec.onset_frame = onset.unwrap_or(n / 2);
    } else if let Some(m) = onset {
        spec.onset_frame = m;
    }
    if nominal {
        spec = spec.nominal();
    }
    if spec.frames == 0 {
        spec.onset_frame = 0;
    }
    spec.validate().context(Failure::new(EX_CONFIG, "invalid scenario"))?;
    Ok(spec)
}

pub fn cmd_generate(spec: &ScenarioSpec, fused: bool) -> Result<(String, StreamLabels)> {
    let stream = if fused { generate_fused(spec)? } else { generate(spec)? };
    let labels = StreamLabels {
        rng: RNG_ALGORITHM.into(),
        frames: stream.len(),
        frame_length: spec.frame_length,
        fused,
        scenario: spec.clone(),
        labels: stream.labels,
    };
    Ok((formats::stream_to_csv(&stream.frames), labels))
}

pub fn cmd_fit(cfg: &PipelineConfig, input: &Path, force: bool) -> Result<ModelFile> {
    let frames = load_frames(input, cfg)?;
    let sidecar = formats::labels_path(input);
    if sidecar.exists() && !force {
        let labels: StreamLabels = formats::read_json(&sidecar)?;
        if let Some(m) = labels.labels.iter().position(|&l| l) {
            return Err(Failure::new(
                EX_DATAERR,
                format!("training stream has anomalous labels (first at frame {m}); pass --force to fit anyway"),
            )
            .into());
        }
    }
    let ex = FeatureExtractor::new(cfg.features.clone())?;
    let d = ex.dim();
    if frames.len() < d + 1 {
        return Err(Failure::new(EX_DATAERR, format!("need at least {} frames to fit, got {}", d + 1, frames.len())).into());
    }
    let sigs = frames.iter().enumerate().map(|(m, f)| ex.signature(f, m)).collect::<noisesig_core::Result<Vec<_>>>()?;
    let degenerate = sigs.iter().filter(|s| s.is_degenerate()).count();
    let model = fit_nominal(&sigs, cfg.gamma)?;
    Ok(ModelFile::new(cfg.features.clone(), ex.selection().feature_names(), &model, degenerate))
}

/// Threshold from config, else calibrated to the target ARL (default ten
/// times `frames`).
pub fn alarm_threshold(cfg: &PipelineConfig, dim: usize, drift: f64, frames: usize) -> Result<f64> {
    if let Some(h) = cfg.h_c {
        return Ok(h);
    }
    let target = cfg.target_arl.unwrap_or(10.0 * frames.max(1) as f64);
    Ok(calibrate(cfg, dim, drift, target)?.alarm_threshold)
}

fn calibrate(cfg: &PipelineConfig, dim: usize, drift: f64, target: f64) -> Result<CusumCalibration> {
    let mut opts = CalibrationOptions { streams: cfg.calibration_streams, ..Default::default() };
    if let Some(seed) = cfg.resolved_seed()? {
        opts.seed = seed;
    }
    Ok(calibrate_cusum(dim, drift, target, &opts)?)
}

pub fn cmd_detect(cfg: &PipelineConfig, model: &ModelFile, frames: &[Vec<f64>]) -> Result<(Vec<LogRow>, DetectionSummary)> {
    let hash = cfg.features.hash();
    if model.config_hash != hash {
        return Err(Failure::new(
            EX_DATAERR,
            format!("model config hash {} does not match current config {hash}", model.config_hash),
        )
        .into());
    }
    let nominal = model.model().context(Failure::new(EX_DATAERR, "unusable model file"))?;
    let ex = FeatureExtractor::new(cfg.features.clone())?;
    let det = DetectorConfig::new(cfg.alpha, nominal.dim())?;
    let drift = cfg.drift();
    let h = alarm_threshold(cfg, nominal.dim(), drift, frames.len())?;
    let mut state = CusumState::new(drift, h)?;
    let mut rows = Vec::with_capacity(frames.len());
    for (m, frame) in frames.iter().enumerate() {
        let d2 = nominal.mahalanobis_sq(&ex.signature(frame, m)?.values)?;
        let alarm = state.step(d2);
        rows.push(LogRow { frame_index: m, d2, decision: d2 > det.eta, s: state.s, alarm });
        if alarm {
            state.reset();
        }
    }
    let summary = DetectionSummary {
        config_hash: hash,
        dim: det.dim,
        alpha: det.alpha,
        eta: det.eta,
        nu: drift,
        h_c: h,
        frames: rows.len(),
        flagged_frames: rows.iter().filter(|r| r.decision).count(),
        first_alarm: rows.iter().find(|r| r.alarm).map(|r| r.frame_index),
    };
    Ok((rows, summary))
}

pub fn cmd_featurize(cfg: &PipelineConfig, frames: &[Vec<f64>]) -> Result<String> {
    let ex = FeatureExtractor::new(cfg.features.clone())?;
    let rows = frames
        .iter()
        .enumerate()
        .map(|(m, f)| Ok((m, ex.signature(f, m)?.values)))
        .collect::<Result<Vec<_>>>()?;
    Ok(formats::features_to_csv(&ex.selection().feature_names(), &rows))
}

fn pick(frames: &[Vec<f64>], frame: Option<usize>) -> Result<Vec<(usize, &[f64])>> {
    match frame {
        Some(m) if m >= frames.len() => {
            Err(Failure::new(EX_USAGE, format!("frame {m} out of range ({} frames)", frames.len())).into())
        }
        Some(m) => Ok(vec![(m, frames[m].as_slice())]),
        None => Ok(frames.iter().enumerate().map(|(m, f)| (m, f.as_slice())).collect()),
    }
}

pub fn cmd_decompose(cfg: &PipelineConfig, frames: &[Vec<f64>], frame: Option<usize>) -> Result<String> {
    let ex = FeatureExtractor::new(cfg.features.clone())?;
    let mut out = String::from("frame_index,level,node,index,coefficient,kept\n");
    for (m, x) in pick(frames, frame)? {
        let a = ex.analyze(x)?;
        let mask = build_mask(&a.tree, &a.policy)?;
        let depth = a.tree.depth();
        let node_len = a.tree.config().node_len(depth);
        for (u, (w, keep)) in a.tree.leaves().iter().zip(mask.bits()).enumerate() {
            let _ = writeln!(out, "{m},{depth},{},{},{},{}", u / node_len, u % node_len, fmt_f64(*w), u8::from(*keep));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub config_hash: String,
    #[serde(flatten)]
    pub calibration: CusumCalibration,
}

pub fn cmd_calibrate(cfg: &PipelineConfig, dim: Option<usize>) -> Result<CalibrationReport> {
    let dim = dim.unwrap_or_else(|| cfg.features.dim());
    let target = cfg.target_arl.ok_or_else(|| Failure::new(EX_USAGE, "calibrate needs --target-arl"))?;
    let drift = cfg.nu.unwrap_or(dim as f64 + 1.0);
    Ok(CalibrationReport { config_hash: cfg.features.hash(), calibration: calibrate(cfg, dim, drift, target)? })
}

pub fn cmd_bispectrum(frames: &[Vec<f64>], size: usize, tau_max: usize, frame: Option<usize>) -> Result<String> {
    let picked = pick(frames, frame)?;
    if picked.is_empty() {
        return Err(Failure::new(EX_DATAERR, "stream has no frames").into());
    }
    let grids = picked.iter().map(|(_, x)| cumulant_grid(x, tau_max)).collect::<noisesig_core::Result<Vec<_>>>()?;
    let b = bispectrum(&CumulantGrid::average(&grids)?, size)?;
    let mut out = String::from("omega1,omega2,re,im\n");
    for m1 in 0..b.size() {
        for m2 in 0..b.size() {
            let v = b.get(m1, m2);
            let _ = writeln!(out, "{},{},{},{}", fmt_f64(b.omega(m1)), fmt_f64(b.omega(m2)), fmt_f64(v.re), fmt_f64(v.im));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct EvaluateOptions {
    pub suite: Suite,
    pub runs: usize,
    pub streams: usize,
    pub frame_rate: f64,
    pub train_frames: usize,
}

#[derive(Debug, Serialize)]
struct AblationReport<'a> {
    seeds: &'a [u64],
    mean: Vec<AblationRow>,
    runs: Vec<Vec<AblationRow>>,
}

#[derive(Debug, Serialize)]
struct LatencyReport {
    seeds: Vec<u64>,
    drift: f64,
    alarm_threshold: f64,
    horizon: usize,
    streams: usize,
    censored_mass: Option<f64>,
    false_alarms: usize,
    nominal_frames: usize,
    false_alarms_per_hour: f64,
}

fn file_stem(m: Method) -> String {
    m.name().replace('+', "_")
}

/// Report files as `(name, contents)`, in a fixed order.
pub fn cmd_evaluate(cfg: &PipelineConfig, spec: &ScenarioSpec, opts: &EvaluateOptions) -> Result<Vec<(String, String)>> {
    if opts.runs == 0 {
        return Err(Failure::new(EX_USAGE, "--runs must be positive").into());
    }
    if spec.anomaly.is_none() || spec.frames == 0 {
        return Err(Failure::new(EX_CONFIG, "evaluation needs an anomalous scenario with frames").into());
    }
    let seeds: Vec<u64> = (0..opts.runs as u64).map(|r| derive_seed(spec.seed, 1000 + r)).collect();
    let harness = HarnessOptions { features: cfg.features.clone(), shrinkage: cfg.gamma, train_frames: opts.train_frames };
    let mut files = Vec::new();
    let want = |s: Suite| opts.suite == s || opts.suite == Suite::All;

    if want(Suite::Ablation) {
        let summaries = ablation_suite(spec, &Method::ALL, &seeds, &harness)?;
        let mean: Vec<AblationRow> = summaries.iter().map(|s| s.mean.clone()).collect();
        files.push(("ablation.txt".into(), formats::ablation_text(&mean)));
        let report = AblationReport { seeds: &seeds, runs: summaries.iter().map(|s| s.runs.clone()).collect(), mean };
        files.push(("ablation.json".into(), formats::to_json(&report)));
        for s in &summaries {
            files.push((format!("roc_{}.csv", file_stem(s.mean.method)), formats::curve_to_csv(&s.roc)));
            files.push((format!("pr_{}.csv", file_stem(s.mean.method)), formats::curve_to_csv(&s.pr)));
        }
    }
    if want(Suite::Shift) {
        let rows = domain_shift_suite(spec, &[Method::WptHos, Method::WptOnly], &seeds, &harness)?;
        files.push(("shift.txt".into(), formats::shift_text(&rows)));
        files.push(("shift.json".into(), formats::to_json(&rows)));
    }
    if want(Suite::Latency) {
        if opts.streams == 0 {
            return Err(Failure::new(EX_USAGE, "--streams must be positive").into());
        }
        let dim = cfg.features.dim();
        let drift = cfg.drift();
        let horizon = spec.frames - spec.onset_frame;
        let lat = LatencyOptions {
            drift,
            alarm_threshold: alarm_threshold(cfg, dim, drift, spec.frames)?,
            streams_per_run: opts.streams,
            horizon,
        };
        let summary = latency_suite(spec, &seeds, &harness, &lat)?;
        let nominal_frames = summary.observations.iter().map(|o| o.onset).sum::<usize>();
        let rate = if nominal_frames == 0 { 0.0 } else { summary.false_alarms as f64 / nominal_frames as f64 };
        files.push(("latency.csv".into(), formats::curve_to_csv(&summary.curve)));
        let report = LatencyReport {
            seeds: seeds.clone(),
            drift,
            alarm_threshold: lat.alarm_threshold,
            horizon,
            streams: summary.observations.len(),
            censored_mass: summary.curve.censored_mass,
            false_alarms: summary.false_alarms,
            nominal_frames,
            false_alarms_per_hour: false_alarms_per_hour(rate, opts.frame_rate),
        };
        files.push(("latency.json".into(), formats::to_json(&report)));
    }
    Ok(files)
}
