//! Per-frame signature vectors and the nominal Gaussian model.
//!
//! A signature stacks three blocks over the selected nodes, in selection
//! order: node energies `E`, cumulant energies `CE` and normalized cumulant
//! energies `NCE`. The nominal model scores a signature by its squared
//! Mahalanobis distance, evaluated through the Cholesky factor of the
//! regularized covariance.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hos::{HosFeatures, LagSet};
use crate::wpt::{node_energy, CoefficientTree, WptConfig};

/// Default relative ridge shrinkage.
pub const DEFAULT_SHRINKAGE: f64 = 1e-3;

/// Ordered, duplicate-free list of packet nodes `(level, node)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, usize)>", into = "Vec<(usize, usize)>")]
pub struct NodeSelection(Vec<(usize, usize)>);

impl NodeSelection {
    pub fn new(nodes: Vec<(usize, usize)>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidConfig("node selection must be nonempty".into()));
        }
        let mut seen = HashSet::new();
        for n in &nodes {
            if !seen.insert(*n) {
                return Err(Error::InvalidConfig(format!("duplicate node ({},{})", n.0, n.1)));
            }
        }
        Ok(Self(nodes))
    }

    /// Every leaf at `depth`, in node order.
    pub fn leaves(depth: usize) -> Self {
        Self((0..1usize << depth).map(|k| (depth, k)).collect())
    }

    pub fn nodes(&self) -> &[(usize, usize)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self, cfg: &WptConfig) -> Result<()> {
        self.0.iter().try_for_each(|&(j, k)| cfg.check_node(j, k))
    }

    /// Column names `E_j_k`, `CE_j_k`, `NCE_j_k` in signature order.
    pub fn feature_names(&self) -> Vec<String> {
        ["E", "CE", "NCE"]
            .iter()
            .flat_map(|prefix| self.0.iter().map(move |(j, k)| format!("{prefix}_{j}_{k}")))
            .collect()
    }
}

impl TryFrom<Vec<(usize, usize)>> for NodeSelection {
    type Error = Error;

    fn try_from(v: Vec<(usize, usize)>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<NodeSelection> for Vec<(usize, usize)> {
    fn from(s: NodeSelection) -> Self {
        s.0
    }
}

/// Descriptors of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeFeatures {
    pub energy: f64,
    pub cumulant_energy: f64,
    pub normalized: f64,
    /// Zero-lag autocorrelation of the residual coefficients.
    pub r0: f64,
    pub degenerate: bool,
}

/// Energy from the full tree, HOS features from the residual tree.
pub fn node_features(
    tree: &CoefficientTree,
    residual: &CoefficientTree,
    level: usize,
    node: usize,
    lags: &LagSet,
    epsilon: f64,
) -> Result<NodeFeatures> {
    let energy = node_energy(tree, level, node)?;
    let z = residual.node(level, node)?;
    if z.len() < lags.tau_max() + 2 || z.iter().all(|&v| v == 0.0) {
        let r0 = if z.is_empty() { 0.0 } else { crate::hos::zero_lag_autocorr(z)? };
        return Ok(NodeFeatures { energy, cumulant_energy: 0.0, normalized: 0.0, r0, degenerate: true });
    }
    let hos = HosFeatures::compute(z, lags, epsilon)?;
    Ok(NodeFeatures {
        energy,
        cumulant_energy: hos.cumulant_energy,
        normalized: hos.normalized,
        r0: hos.r0,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignatureVector {
    pub values: Vec<f64>,
    pub frame_index: usize,
    /// Positions in the node selection whose HOS features were zeroed.
    pub degenerate_nodes: Vec<usize>,
}

impl SignatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_degenerate(&self) -> bool {
        !self.degenerate_nodes.is_empty()
    }
}

pub fn build_signature(
    tree: &CoefficientTree,
    residual: &CoefficientTree,
    selection: &NodeSelection,
    lags: &LagSet,
    epsilon: f64,
    frame_index: usize,
) -> Result<SignatureVector> {
    if tree.config() != residual.config() {
        return Err(Error::InvalidConfig("tree and residual tree disagree in shape".into()));
    }
    let n = selection.len();
    let mut values = vec![0.0; 3 * n];
    let mut degenerate_nodes = Vec::new();
    for (i, &(j, k)) in selection.nodes().iter().enumerate() {
        let f = node_features(tree, residual, j, k, lags, epsilon)?;
        values[i] = f.energy;
        values[n + i] = f.cumulant_energy;
        values[2 * n + i] = f.normalized;
        if f.degenerate {
            degenerate_nodes.push(i);
        }
    }
    Ok(SignatureVector { values, frame_index, degenerate_nodes })
}

/// Gaussian model of nominal signatures.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalModel {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    /// Lower Cholesky factor `L` of the covariance; the whitener is `L^{-1}`.
    chol: DMatrix<f64>,
    shrinkage: f64,
    samples: usize,
}

impl NominalModel {
    /// Builds a model from known moments (no shrinkage applied).
    pub fn from_moments(mean: Vec<f64>, covariance: Vec<f64>) -> Result<Self> {
        Self::from_parts(mean, covariance, 0.0, 0)
    }

    /// Rebuilds a model from persisted parts; `covariance` is row-major.
    pub fn from_parts(mean: Vec<f64>, covariance: Vec<f64>, shrinkage: f64, samples: usize) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::Empty("model dimension is zero".into()));
        }
        if covariance.len() != d * d {
            return Err(Error::DimensionMismatch { expected: d * d, actual: covariance.len() });
        }
        if mean.iter().chain(&covariance).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters".into()));
        }
        let covariance = DMatrix::from_row_slice(d, d, &covariance);
        let chol = checked_cholesky(&covariance)?;
        Ok(Self { mean: DVector::from_vec(mean), covariance, chol, shrinkage, samples })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Covariance flattened row-major.
    pub fn covariance_row_major(&self) -> Vec<f64> {
        let d = self.dim();
        (0..d).flat_map(|r| (0..d).map(move |c| (r, c))).map(|(r, c)| self.covariance[(r, c)]).collect()
    }

    pub fn shrinkage(&self) -> f64 {
        self.shrinkage
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// `W x` with `W = L^{-1}`, so that `W^T W = Sigma^{-1}`.
    pub fn whiten(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: x.len() });
        }
        let mut y = vec![0.0; d];
        for i in 0..d {
            let mut acc = x[i];
            for k in 0..i {
                acc -= self.chol[(i, k)] * y[k];
            }
            y[i] = acc / self.chol[(i, i)];
        }
        Ok(y)
    }

    /// `x^T Sigma^{-1} x` through the whitener.
    pub fn whitened_norm_sq(&self, x: &[f64]) -> Result<f64> {
        Ok(self.whiten(x)?.iter().map(|v| v * v).sum())
    }

    pub fn mahalanobis_sq(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: f.len() });
        }
        let centered: Vec<f64> = f.iter().zip(self.mean.iter()).map(|(a, b)| a - b).collect();
        self.whitened_norm_sq(&centered)
    }
}

fn checked_cholesky(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (cov + cov.transpose()) * 0.5;
    let min_eigenvalue = SymmetricEigen::new(sym).eigenvalues.min();
    if !(min_eigenvalue > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue });
    }
    cov.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite { min_eigenvalue })
}

/// Sample mean and ridge-shrunk covariance of raw feature vectors.
///
/// `Sigma = S + gamma * (tr S / d) * I`; when `tr S = 0` the ridge is `gamma * I`.
pub fn fit_vectors(samples: &[Vec<f64>], gamma: f64) -> Result<NominalModel> {
    let d = samples.first().map(Vec::len).ok_or_else(|| Error::Empty("no training samples".into()))?;
    if d == 0 {
        return Err(Error::Empty("zero-dimensional features".into()));
    }
    if samples.len() < d + 1 {
        return Err(Error::TooFewSamples { needed: d + 1, actual: samples.len() });
    }
    if gamma.is_nan() || gamma < 0.0 {
        return Err(Error::InvalidParameter(format!("shrinkage must be >= 0, got {gamma}")));
    }
    let n = samples.len();
    let mut mean = vec![0.0; d];
    for s in samples {
        if s.len() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: s.len() });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training features".into()));
        }
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for s in samples {
        for (c, (v, m)) in centered.iter_mut().zip(s.iter().zip(&mean)) {
            *c = v - m;
        }
        for r in 0..d {
            let cr = centered[r];
            for c in r..d {
                cov[r * d + c] += cr * centered[c];
            }
        }
    }
    for r in 0..d {
        for c in r..d {
            let v = cov[r * d + c] / (n - 1) as f64;
            cov[r * d + c] = v;
            cov[c * d + r] = v;
        }
    }
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    let scale = if trace > 0.0 { trace / d as f64 } else { 1.0 };
    for i in 0..d {
        cov[i * d + i] += gamma * scale;
    }
    NominalModel::from_parts(mean, cov, gamma, n)
}

pub fn fit_nominal(signatures: &[SignatureVector], gamma: f64) -> Result<NominalModel> {
    let vectors: Vec<Vec<f64>> = signatures.iter().map(|s| s.values.clone()).collect();
    fit_vectors(&vectors, gamma)
}

pub fn mahalanobis_sq(f: &SignatureVector, model: &NominalModel) -> Result<f64> {
    model.mahalanobis_sq(&f.values)
}
