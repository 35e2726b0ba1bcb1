//! On-disk formats. CSV files use ',' separators, a mandatory header and LF
//! line endings; floats are written in shortest round-trip form so
//! write -> read -> write is byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use noisesig_core::eval::{AblationRow, CurveReport, ShiftRow};
use noisesig_core::{FeatureConfig, NominalModel, ScenarioSpec};

pub const STREAM_HEADER: &str = "frame_index,sample_index,value";
pub const LOG_HEADER: &str = "frame_index,D2,decision,S_m,alarm_flag";
pub const CURVE_HEADER: &str = "x,mean,band_low,band_high";
pub const MODEL_FORMAT: &str = "noisesig-model/1";

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v}")
    }
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field.parse().with_context(|| format!("line {line}: bad number {field:?}"))
}

fn parse_usize(field: &str, line: usize) -> Result<usize> {
    field.parse().with_context(|| format!("line {line}: bad index {field:?}"))
}

fn parse_flag(field: &str, line: usize) -> Result<bool> {
    match field {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => bail!("line {line}: expected 0 or 1, got {field:?}"),
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

/// Data rows of a CSV document after checking the header.
fn rows<'a>(text: &'a str, header: &str) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)>> {
    ensure!(!text.contains('\r'), "CR line endings are not accepted");
    let mut lines = text.lines();
    let first = lines.next().unwrap_or("");
    ensure!(first == header, "expected header {header:?}, found {first:?}");
    let width = header.split(',').count();
    let body: Vec<(usize, Vec<&str>)> = lines.enumerate().map(|(i, l)| (i + 2, l.split(',').collect())).collect();
    if let Some((line, f)) = body.iter().find(|(_, f)| f.len() != width) {
        bail!("line {line}: expected {width} fields, found {}", f.len());
    }
    Ok(body.into_iter())
}

// ---------------------------------------------------------------------------
// Streams

pub fn stream_to_csv(frames: &[Vec<f64>]) -> String {
    let mut out = String::with_capacity(frames.iter().map(|f| f.len() * 24).sum::<usize>() + 32);
    out.push_str(STREAM_HEADER);
    out.push('\n');
    for (m, frame) in frames.iter().enumerate() {
        for (i, v) in frame.iter().enumerate() {
            let _ = writeln!(out, "{m},{i},{}", fmt_f64(*v));
        }
    }
    out
}

/// Frames in order; indices must be contiguous and frames equally long.
pub fn stream_from_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut frames: Vec<Vec<f64>> = Vec::new();
    for (line, f) in rows(text, STREAM_HEADER)? {
        let (m, i) = (parse_usize(f[0], line)?, parse_usize(f[1], line)?);
        let v = parse_f64(f[2], line)?;
        ensure!(v.is_finite(), "line {line}: non-finite sample");
        if m == frames.len() && i == 0 {
            frames.push(Vec::new());
        }
        let count = frames.len();
        match frames.last_mut() {
            Some(frame) if m + 1 == count && i == frame.len() => frame.push(v),
            _ => bail!("line {line}: out-of-order index ({m}, {i})"),
        }
    }
    if let Some(first) = frames.first() {
        let n = first.len();
        if let Some(bad) = frames.iter().position(|f| f.len() != n) {
            bail!("frame {bad} has {} samples, expected {n}", frames[bad].len());
        }
    }
    Ok(frames)
}

/// Sidecar describing a generated stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamLabels {
    pub rng: String,
    pub frames: usize,
    pub frame_length: usize,
    pub fused: bool,
    pub scenario: ScenarioSpec,
    pub labels: Vec<bool>,
}

/// `stream.csv` -> `stream.labels.json`.
pub fn labels_path(stream: &Path) -> PathBuf {
    stream.with_extension("labels.json")
}

// ---------------------------------------------------------------------------
// Models

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub config_hash: String,
    pub features: FeatureConfig,
    pub feature_names: Vec<String>,
    pub dim: usize,
    pub gamma: f64,
    pub samples: usize,
    pub mean: Vec<f64>,
    /// Row-major, shrinkage already applied.
    pub covariance: Vec<f64>,
    pub degenerate_frames: usize,
}

impl ModelFile {
    pub fn new(features: FeatureConfig, names: Vec<String>, model: &NominalModel, degenerate_frames: usize) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            config_hash: features.hash(),
            features,
            feature_names: names,
            dim: model.dim(),
            gamma: model.shrinkage(),
            samples: model.samples(),
            mean: model.mean().to_vec(),
            covariance: model.covariance_row_major(),
            degenerate_frames,
        }
    }

    pub fn model(&self) -> Result<NominalModel> {
        ensure!(self.format == MODEL_FORMAT, "unsupported model format {:?}", self.format);
        ensure!(
            self.features.hash() == self.config_hash,
            "model file is inconsistent: stored hash does not match its feature configuration"
        );
        ensure!(self.mean.len() == self.dim, "model mean has {} entries, expected {}", self.mean.len(), self.dim);
        Ok(NominalModel::from_parts(self.mean.clone(), self.covariance.clone(), self.gamma, self.samples)?)
    }
}

// ---------------------------------------------------------------------------
// Detection logs

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub frame_index: usize,
    pub d2: f64,
    pub decision: bool,
    pub s: f64,
    pub alarm: bool,
}

pub fn log_to_csv(rows: &[LogRow]) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.frame_index,
            fmt_f64(r.d2),
            u8::from(r.decision),
            fmt_f64(r.s),
            u8::from(r.alarm)
        );
    }
    out
}

pub fn log_from_csv(text: &str) -> Result<Vec<LogRow>> {
    rows(text, LOG_HEADER)?
        .map(|(line, f)| {
            Ok(LogRow {
                frame_index: parse_usize(f[0], line)?,
                d2: parse_f64(f[1], line)?,
                decision: parse_flag(f[2], line)?,
                s: parse_f64(f[3], line)?,
                alarm: parse_flag(f[4], line)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub config_hash: String,
    pub dim: usize,
    pub alpha: f64,
    pub eta: f64,
    pub nu: f64,
    pub h_c: f64,
    pub frames: usize,
    pub flagged_frames: usize,
    pub first_alarm: Option<usize>,
}

// ---------------------------------------------------------------------------
// Feature dumps

pub fn features_to_csv(names: &[String], rows: &[(usize, Vec<f64>)]) -> String {
    let mut out = format!("frame_index,{}\n", names.join(","));
    for (m, values) in rows {
        out.push_str(&m.to_string());
        for v in values {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

pub fn features_from_csv(text: &str) -> Result<(Vec<String>, Vec<(usize, Vec<f64>)>)> {
    let header = text.lines().next().unwrap_or("");
    let names: Vec<String> = header.split(',').skip(1).map(String::from).collect();
    ensure!(header.starts_with("frame_index,") && !names.is_empty(), "bad feature header {header:?}");
    let body = rows(text, header)?
        .map(|(line, f)| {
            let values = f[1..].iter().map(|v| parse_f64(v, line)).collect::<Result<Vec<f64>>>()?;
            Ok((parse_usize(f[0], line)?, values))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((names, body))
}

// ---------------------------------------------------------------------------
// Curves and tables

pub fn curve_to_csv(curve: &CurveReport) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for (i, (x, y)) in curve.points.iter().enumerate() {
        let (lo, hi) = match &curve.band {
            Some(b) => (b.low[i], b.high[i]),
            None => (*y, *y),
        };
        let _ = writeln!(out, "{},{},{},{}", fmt_f64(*x), fmt_f64(*y), fmt_f64(lo), fmt_f64(hi));
    }
    out
}

/// `(x, mean, band_low, band_high)` rows.
pub fn curve_from_csv(text: &str) -> Result<Vec<[f64; 4]>> {
    rows(text, CURVE_HEADER)?
        .map(|(line, f)| {
            Ok([parse_f64(f[0], line)?, parse_f64(f[1], line)?, parse_f64(f[2], line)?, parse_f64(f[3], line)?])
        })
        .collect()
}

pub fn ablation_text(rows: &[AblationRow]) -> String {
    let mut out = format!(
        "{:<14} {:>8} {:>8} {:>10} {:>8} {:>8}\n",
        "method", "ROC-AUC", "PR-AUC", "Precision*", "Recall*", "F1*"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<14} {:>8.3} {:>8.3} {:>10.3} {:>8.3} {:>8.3}",
            r.method.name(),
            r.roc_auc,
            r.pr_auc,
            r.precision,
            r.recall,
            r.f1
        );
    }
    out
}

pub fn shift_text(rows: &[ShiftRow]) -> String {
    let mut out = format!("{:<9} {:<14} {:>8} {:>9} {:>9}\n", "regime", "method", "ROC-AUC", "band_low", "band_high");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<9} {:<14} {:>8.3} {:>9.3} {:>9.3}",
            r.regime.name(),
            r.method.name(),
            r.mean_auc,
            r.band_low,
            r.band_high
        );
    }
    out
}
