//! Pipeline configuration: one JSON document, overridable from flags.

use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use noisesig_core::signature::DEFAULT_SHRINKAGE;
use noisesig_core::{FeatureConfig, FilterKind, LagSet, NodeSelection, ThresholdMode};

use crate::{formats, Failure, EX_CONFIG};

pub const SEED_ENV: &str = "NOISESIG_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    #[serde(flatten)]
    pub features: FeatureConfig,
    pub gamma: f64,
    pub alpha: f64,
    /// CUSUM drift; `d + 1` when unset.
    pub nu: Option<f64>,
    /// CUSUM alarm threshold; calibrated at `target_arl` when unset.
    pub h_c: Option<f64>,
    pub target_arl: Option<f64>,
    pub seed: Option<u64>,
    pub calibration_streams: usize,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            gamma: DEFAULT_SHRINKAGE,
            alpha: 0.05,
            nu: None,
            h_c: None,
            target_arl: None,
            seed: None,
            calibration_streams: 10_000,
            input: None,
            output: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = formats::read_text(path)?;
        serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))
            .context(Failure::new(EX_CONFIG, "invalid configuration file"))
    }

    pub fn validate(&self) -> Result<()> {
        let check = || -> Result<()> {
            let f = &self.features;
            ensure!(f.depth >= 1, "depth must be at least 1");
            ensure!(
                f.depth < usize::BITS as usize && f.frame_length % (1 << f.depth) == 0 && f.frame_length > 0,
                "frame length {} is not divisible by 2^{}",
                f.frame_length,
                f.depth
            );
            ensure!(self.alpha > 0.0 && self.alpha < 1.0, "alpha must lie in (0,1), got {}", self.alpha);
            ensure!(self.gamma >= 0.0 && self.gamma.is_finite(), "gamma must be nonnegative, got {}", self.gamma);
            if let Some(nu) = self.nu {
                ensure!(nu.is_finite() && nu >= 0.0, "nu must be nonnegative, got {nu}");
            }
            if let Some(h) = self.h_c {
                ensure!(h.is_finite() && h > 0.0, "h_c must be positive, got {h}");
            }
            if let Some(a) = self.target_arl {
                ensure!(a >= 1.0, "target ARL must be at least 1, got {a}");
            }
            ensure!(self.calibration_streams >= 2, "calibration_streams must be at least 2");
            noisesig_core::FeatureExtractor::new(f.clone())?;
            Ok(())
        };
        check().context(Failure::new(EX_CONFIG, "invalid configuration"))
    }

    /// Flag, then config file, then `NOISESIG_SEED`.
    pub fn resolved_seed(&self) -> Result<Option<u64>> {
        if self.seed.is_some() {
            return Ok(self.seed);
        }
        match std::env::var(SEED_ENV) {
            Ok(s) => Ok(Some(
                s.trim()
                    .parse()
                    .with_context(|| format!("{SEED_ENV}={s:?} is not an unsigned integer"))
                    .context(Failure::new(EX_CONFIG, "invalid seed"))?,
            )),
            Err(_) => Ok(None),
        }
    }

    pub fn drift(&self) -> f64 {
        self.nu.unwrap_or(self.features.dim() as f64 + 1.0)
    }
}

/// Flags shared by every subcommand. Each mirrors a config key.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON pipeline configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// haar | db4 | db8
    #[arg(long, global = true)]
    pub filter: Option<FilterKind>,
    #[arg(long, global = true)]
    pub depth: Option<usize>,
    #[arg(long, global = true)]
    pub frame_length: Option<usize>,
    /// `universal` or `fixed:<lambda>`
    #[arg(long, global = true, value_parser = parse_threshold)]
    pub threshold: Option<ThresholdMode>,
    /// Node list `j:k,j:k,...`
    #[arg(long, global = true, value_parser = parse_nodes)]
    pub nodes: Option<NodeSelection>,
    /// Lag list `t1:t2,t1:t2,...`
    #[arg(long, global = true, value_parser = parse_lags)]
    pub lags: Option<LagSet>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Ridge shrinkage.
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Per-frame false-alarm rate.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub nu: Option<f64>,
    #[arg(long = "h-c", global = true)]
    pub h_c: Option<f64>,
    #[arg(long, global = true)]
    pub target_arl: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub calibration_streams: Option<usize>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        let f = &mut cfg.features;
        if let Some(v) = self.filter {
            f.filter = v;
        }
        if let Some(v) = self.depth {
            f.depth = v;
            if self.nodes.is_none() && f.nodes.as_ref().is_some_and(|n| n.nodes().iter().any(|&(j, _)| j > v)) {
                f.nodes = None;
            }
        }
        if let Some(v) = self.frame_length {
            f.frame_length = v;
        }
        if let Some(v) = &self.threshold {
            f.threshold = v.clone();
        }
        if let Some(v) = &self.nodes {
            f.nodes = Some(v.clone());
        }
        if let Some(v) = &self.lags {
            f.lags = v.clone();
        }
        if let Some(v) = self.epsilon {
            f.epsilon = v;
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if self.nu.is_some() {
            cfg.nu = self.nu;
        }
        if self.h_c.is_some() {
            cfg.h_c = self.h_c;
        }
        if self.target_arl.is_some() {
            cfg.target_arl = self.target_arl;
        }
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        if let Some(v) = self.calibration_streams {
            cfg.calibration_streams = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn pairs(s: &str) -> std::result::Result<Vec<(usize, usize)>, String> {
    s.split(',')
        .map(|item| {
            let (a, b) = item.trim().split_once(':').ok_or_else(|| format!("expected a:b, got {item:?}"))?;
            let a = a.trim().parse().map_err(|_| format!("bad index {a:?}"))?;
            let b = b.trim().parse().map_err(|_| format!("bad index {b:?}"))?;
            Ok((a, b))
        })
        .collect()
}

pub fn parse_nodes(s: &str) -> std::result::Result<NodeSelection, String> {
    NodeSelection::new(pairs(s)?).map_err(|e| e.to_string())
}

pub fn parse_lags(s: &str) -> std::result::Result<LagSet, String> {
    LagSet::new(pairs(s)?).map_err(|e| e.to_string())
}

pub fn parse_threshold(s: &str) -> std::result::Result<ThresholdMode, String> {
    match s.split_once(':') {
        None if s == "universal" => Ok(ThresholdMode::Universal),
        Some(("fixed", v)) => {
            let lambda: f64 = v.parse().map_err(|_| format!("bad threshold {v:?}"))?;
            if lambda.is_finite() && lambda >= 0.0 {
                Ok(ThresholdMode::Fixed { lambda })
            } else {
                Err(format!("threshold must be finite and nonnegative, got {v}"))
            }
        }
        _ => Err(format!("expected `universal` or `fixed:<lambda>`, got {s:?}")),
    }
}
