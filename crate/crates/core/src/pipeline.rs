//! Frame-to-signature processing under a single hashed configuration.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::hos::{LagSet, DEFAULT_EPSILON};
use crate::residual::{build_mask, split_and_reconstruct, SplitResult, ThresholdMode, ThresholdPolicy};
use crate::signature::{build_signature, node_features, NodeFeatures, NodeSelection, SignatureVector};
use crate::wpt::{forward_wpt, CoefficientTree, FilterKind, QmfPair, WptConfig};

/// Everything that determines how a frame becomes a signature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub filter: FilterKind,
    pub depth: usize,
    pub frame_length: usize,
    pub threshold: ThresholdMode,
    /// `None` selects every leaf.
    pub nodes: Option<NodeSelection>,
    pub lags: LagSet,
    pub epsilon: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            filter: FilterKind::Db8,
            depth: 2,
            frame_length: 1024,
            threshold: ThresholdMode::Universal,
            nodes: None,
            lags: LagSet::default(),
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl FeatureConfig {
    pub fn wpt_config(&self) -> Result<WptConfig> {
        WptConfig::new(self.frame_length, self.depth)
    }

    pub fn selection(&self) -> NodeSelection {
        self.nodes.clone().unwrap_or_else(|| NodeSelection::leaves(self.depth))
    }

    pub fn dim(&self) -> usize {
        3 * self.selection().len()
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Intermediate products for one frame.
#[derive(Debug, Clone)]
pub struct FrameAnalysis {
    pub tree: CoefficientTree,
    pub policy: ThresholdPolicy,
    pub split: SplitResult,
}

#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    config: FeatureConfig,
    qmf: QmfPair,
    wpt: WptConfig,
    selection: NodeSelection,
}

impl FeatureExtractor {
    pub fn new(config: FeatureConfig) -> Result<Self> {
        let wpt = config.wpt_config()?;
        let selection = config.selection();
        selection.validate(&wpt)?;
        if config.epsilon.is_nan() || config.epsilon <= 0.0 {
            return Err(crate::Error::InvalidConfig(format!("epsilon must be positive, got {}", config.epsilon)));
        }
        let qmf = config.filter.qmf();
        Ok(Self { config, qmf, wpt, selection })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn selection(&self) -> &NodeSelection {
        &self.selection
    }

    pub fn qmf(&self) -> &QmfPair {
        &self.qmf
    }

    pub fn dim(&self) -> usize {
        3 * self.selection.len()
    }

    pub fn analyze(&self, frame: &[f64]) -> Result<FrameAnalysis> {
        let tree = forward_wpt(frame, &self.qmf, &self.wpt)?;
        let policy = ThresholdPolicy::resolve(&self.config.threshold, &tree)?;
        let mask = build_mask(&tree, &policy)?;
        let split = split_and_reconstruct(&tree, &mask, &self.qmf)?;
        Ok(FrameAnalysis { tree, policy, split })
    }

    pub fn signature(&self, frame: &[f64], frame_index: usize) -> Result<SignatureVector> {
        let a = self.analyze(frame)?;
        build_signature(
            &a.tree,
            &a.split.residual_tree,
            &self.selection,
            &self.config.lags,
            self.config.epsilon,
            frame_index,
        )
    }

    /// Per-node descriptors in selection order.
    pub fn node_features(&self, frame: &[f64]) -> Result<Vec<NodeFeatures>> {
        let a = self.analyze(frame)?;
        self.selection
            .nodes()
            .iter()
            .map(|&(j, k)| {
                node_features(&a.tree, &a.split.residual_tree, j, k, &self.config.lags, self.config.epsilon)
            })
            .collect()
    }
}
