//! Orthonormal wavelet packet analysis and synthesis.
//!
//! A two-channel paraunitary filterbank `(h, g)` is applied recursively to
//! both branches of every node. Convolution is circular, so each split is an
//! exact isometry of the parent node onto its two children:
//!
//! ```text
//! w[j+1][2k  ][u] = sum_i h[i] * w[j][k][(2u + i) mod M]
//! w[j+1][2k+1][u] = sum_i g[i] * w[j][k][(2u + i) mod M]
//! ```
//!
//! where `M = N / 2^j` is the parent node length. Synthesis is the adjoint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when validating user-supplied filters.
pub const FILTER_TOLERANCE: f64 = 1e-8;

const HAAR: [f64; 2] = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];

// Daubechies scaling filters, positive-leading convention.
const DB4: [f64; 4] = [
    0.482_962_913_144_534_16,
    0.836_516_303_737_807_9,
    0.224_143_868_042_013_4,
    -0.129_409_522_551_260_37,
];

const DB8: [f64; 8] = [
    0.230_377_813_308_896_5,
    0.714_846_570_552_915_7,
    0.630_880_767_929_858_9,
    -0.027_983_769_416_859_854,
    -0.187_034_811_719_093_09,
    0.030_841_381_835_560_764,
    0.032_883_011_666_885_2,
    -0.010_597_401_785_069_032,
];

/// Built-in orthonormal filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Haar,
    Db4,
    Db8,
}

impl FilterKind {
    pub const ALL: [FilterKind; 3] = [FilterKind::Haar, FilterKind::Db4, FilterKind::Db8];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Haar => "haar",
            FilterKind::Db4 => "db4",
            FilterKind::Db8 => "db8",
        }
    }

    pub fn lowpass(self) -> &'static [f64] {
        match self {
            FilterKind::Haar => &HAAR,
            FilterKind::Db4 => &DB4,
            FilterKind::Db8 => &DB8,
        }
    }

    pub fn qmf(self) -> QmfPair {
        QmfPair::from_lowpass(self.lowpass()).expect("built-in filters are orthonormal")
    }
}

impl std::str::FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "haar" | "db1" => Ok(FilterKind::Haar),
            "db4" | "daubechies4" | "d4" => Ok(FilterKind::Db4),
            "db8" | "daubechies8" | "d8" => Ok(FilterKind::Db8),
            other => Err(Error::InvalidFilter(format!("unknown filter name '{other}'"))),
        }
    }
}

impl std::fmt::Display for FilterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Largest violation of the double-shift orthonormality conditions
/// `sum_n a[n] b[n - 2m] = [a == b && m == 0]`.
pub fn orthonormality_defect(a: &[f64], b: &[f64], same: bool) -> f64 {
    let len = a.len() as isize;
    let mut worst: f64 = 0.0;
    let max_shift = len / 2;
    for m in -max_shift..=max_shift {
        let mut acc = 0.0;
        for n in 0..len {
            let idx = n - 2 * m;
            if (0..len).contains(&idx) {
                acc += a[n as usize] * b[idx as usize];
            }
        }
        let target = if same && m == 0 { 1.0 } else { 0.0 };
        worst = worst.max((acc - target).abs());
    }
    worst
}

/// Alternating-flip highpass: `g[n] = (-1)^n h[L-1-n]`.
pub fn derive_highpass(lowpass: &[f64]) -> Result<Vec<f64>> {
    let len = lowpass.len();
    if len < 2 || len % 2 != 0 {
        return Err(Error::InvalidFilter(format!(
            "tap count must be even and at least 2, got {len}"
        )));
    }
    if lowpass.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidFilter("non-finite tap".into()));
    }
    let defect = orthonormality_defect(lowpass, lowpass, true);
    if defect > FILTER_TOLERANCE {
        return Err(Error::InvalidFilter(format!(
            "lowpass violates double-shift orthonormality by {defect:e}"
        )));
    }
    Ok((0..len)
        .map(|n| {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            sign * lowpass[len - 1 - n]
        })
        .collect())
}

/// Analysis lowpass/highpass pair of a paraunitary two-channel filterbank.
#[derive(Debug, Clone, PartialEq)]
pub struct QmfPair {
    lowpass: Vec<f64>,
    highpass: Vec<f64>,
}

impl QmfPair {
    pub fn from_lowpass(lowpass: &[f64]) -> Result<Self> {
        let highpass = derive_highpass(lowpass)?;
        let cross = orthonormality_defect(lowpass, &highpass, false);
        if cross > FILTER_TOLERANCE {
            return Err(Error::InvalidFilter(format!(
                "lowpass/highpass cross-orthogonality violated by {cross:e}"
            )));
        }
        Ok(Self {
            lowpass: lowpass.to_vec(),
            highpass,
        })
    }

    pub fn lowpass(&self) -> &[f64] {
        &self.lowpass
    }

    pub fn highpass(&self) -> &[f64] {
        &self.highpass
    }

    pub fn len(&self) -> usize {
        self.lowpass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lowpass.is_empty()
    }

    /// Splits `parent` into `(low, high)` halves with circular indexing.
    pub fn analyze(&self, parent: &[f64], low: &mut [f64], high: &mut [f64]) {
        let m = parent.len();
        debug_assert!(m >= 2 && m % 2 == 0);
        debug_assert_eq!(low.len(), m / 2);
        debug_assert_eq!(high.len(), m / 2);
        for u in 0..m / 2 {
            let mut lo = 0.0;
            let mut hi = 0.0;
            for (i, (&h, &g)) in self.lowpass.iter().zip(&self.highpass).enumerate() {
                let x = parent[(2 * u + i) % m];
                lo += h * x;
                hi += g * x;
            }
            low[u] = lo;
            high[u] = hi;
        }
    }

    /// Adjoint of [`QmfPair::analyze`]: overwrites `parent`.
    pub fn synthesize(&self, low: &[f64], high: &[f64], parent: &mut [f64]) {
        let m = parent.len();
        debug_assert_eq!(low.len(), m / 2);
        debug_assert_eq!(high.len(), m / 2);
        parent.fill(0.0);
        for u in 0..m / 2 {
            let (lo, hi) = (low[u], high[u]);
            for (i, (&h, &g)) in self.lowpass.iter().zip(&self.highpass).enumerate() {
                parent[(2 * u + i) % m] += h * lo + g * hi;
            }
        }
    }
}

/// Boundary convention. Only circular extension is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WptConfig {
    pub depth: usize,
    pub frame_length: usize,
    #[serde(default)]
    pub boundary: Boundary,
}

impl WptConfig {
    pub fn new(frame_length: usize, depth: usize) -> Result<Self> {
        let cfg = Self {
            depth,
            frame_length,
            boundary: Boundary::Periodic,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::InvalidConfig("depth must be at least 1".into()));
        }
        if self.depth >= usize::BITS as usize || self.frame_length == 0 {
            return Err(Error::InvalidConfig(format!(
                "depth {} too large for frame length {}",
                self.depth, self.frame_length
            )));
        }
        if self.frame_length % (1usize << self.depth) != 0 {
            return Err(Error::InvalidConfig(format!(
                "frame length {} is not divisible by 2^{}",
                self.frame_length, self.depth
            )));
        }
        Ok(())
    }

    pub fn node_len(&self, level: usize) -> usize {
        self.frame_length >> level
    }

    pub fn nodes_at(&self, level: usize) -> usize {
        1 << level
    }

    pub fn check_node(&self, level: usize, node: usize) -> Result<()> {
        if level > self.depth || node >= self.nodes_at(level) {
            return Err(Error::IndexOutOfRange(format!(
                "node ({level},{node}) outside depth {}",
                self.depth
            )));
        }
        Ok(())
    }
}

/// Dense wavelet packet coefficients for every level `0..=J`.
///
/// Level `j` is stored as one length-`N` buffer; node `k` occupies the
/// contiguous slice `[k * N/2^j, (k+1) * N/2^j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTree {
    config: WptConfig,
    levels: Vec<Vec<f64>>,
}

impl CoefficientTree {
    pub fn config(&self) -> &WptConfig {
        &self.config
    }

    pub fn depth(&self) -> usize {
        self.config.depth
    }

    pub fn level(&self, level: usize) -> &[f64] {
        &self.levels[level]
    }

    pub fn leaves(&self) -> &[f64] {
        &self.levels[self.config.depth]
    }

    pub fn node(&self, level: usize, node: usize) -> Result<&[f64]> {
        self.config.check_node(level, node)?;
        let len = self.config.node_len(level);
        Ok(&self.levels[level][node * len..(node + 1) * len])
    }

    /// Builds every level above the leaves by synthesis.
    ///
    /// Internal nodes are the synthesis of their children, so the root is
    /// the signal represented by `leaves`.
    pub fn from_leaves(leaves: Vec<f64>, qmf: &QmfPair, cfg: &WptConfig) -> Result<Self> {
        cfg.validate()?;
        if leaves.len() != cfg.frame_length {
            return Err(Error::LengthMismatch {
                expected: cfg.frame_length,
                actual: leaves.len(),
            });
        }
        let mut levels = vec![Vec::new(); cfg.depth + 1];
        levels[cfg.depth] = leaves;
        for level in (0..cfg.depth).rev() {
            let parent_len = cfg.node_len(level);
            let child_len = parent_len / 2;
            let mut buf = vec![0.0; cfg.frame_length];
            let children = &levels[level + 1];
            for (k, parent) in buf.chunks_exact_mut(parent_len).enumerate() {
                let low = &children[2 * k * child_len..(2 * k + 1) * child_len];
                let high = &children[(2 * k + 1) * child_len..(2 * k + 2) * child_len];
                qmf.synthesize(low, high, parent);
            }
            levels[level] = buf;
        }
        Ok(Self { config: *cfg, levels })
    }
}

pub fn forward_wpt(frame: &[f64], qmf: &QmfPair, cfg: &WptConfig) -> Result<CoefficientTree> {
    cfg.validate()?;
    if frame.len() != cfg.frame_length {
        return Err(Error::LengthMismatch {
            expected: cfg.frame_length,
            actual: frame.len(),
        });
    }
    let mut levels = Vec::with_capacity(cfg.depth + 1);
    levels.push(frame.to_vec());
    for level in 0..cfg.depth {
        let parent_len = cfg.node_len(level);
        let half = parent_len / 2;
        let mut next = vec![0.0; cfg.frame_length];
        for (parent, children) in levels[level]
            .chunks_exact(parent_len)
            .zip(next.chunks_exact_mut(parent_len))
        {
            let (low, high) = children.split_at_mut(half);
            qmf.analyze(parent, low, high);
        }
        levels.push(next);
    }
    Ok(CoefficientTree { config: *cfg, levels })
}

/// Reconstructs a frame from its leaf-level coefficients.
pub fn inverse_wpt(leaves: &[f64], qmf: &QmfPair, cfg: &WptConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if leaves.len() != cfg.frame_length {
        return Err(Error::LengthMismatch {
            expected: cfg.frame_length,
            actual: leaves.len(),
        });
    }
    let mut current = leaves.to_vec();
    let mut scratch = vec![0.0; cfg.frame_length];
    for level in (0..cfg.depth).rev() {
        let parent_len = cfg.node_len(level);
        let half = parent_len / 2;
        for (children, parent) in current
            .chunks_exact(parent_len)
            .zip(scratch.chunks_exact_mut(parent_len))
        {
            let (low, high) = children.split_at(half);
            qmf.synthesize(low, high, parent);
        }
        std::mem::swap(&mut current, &mut scratch);
    }
    Ok(current)
}

/// Basis vector for node `(level, node)` at translation `shift`.
pub fn synthesize_atom(
    level: usize,
    node: usize,
    shift: usize,
    qmf: &QmfPair,
    cfg: &WptConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    cfg.check_node(level, node)?;
    let len = cfg.node_len(level);
    if shift >= len {
        return Err(Error::IndexOutOfRange(format!(
            "translation {shift} outside node of length {len}"
        )));
    }
    let mut current = vec![0.0; cfg.frame_length];
    current[node * len + shift] = 1.0;
    let mut scratch = vec![0.0; cfg.frame_length];
    for lvl in (0..level).rev() {
        let parent_len = cfg.node_len(lvl);
        let half = parent_len / 2;
        for (children, parent) in current
            .chunks_exact(parent_len)
            .zip(scratch.chunks_exact_mut(parent_len))
        {
            let (low, high) = children.split_at(half);
            qmf.synthesize(low, high, parent);
        }
        std::mem::swap(&mut current, &mut scratch);
    }
    Ok(current)
}

pub fn node_energy(tree: &CoefficientTree, level: usize, node: usize) -> Result<f64> {
    Ok(tree.node(level, node)?.iter().map(|w| w * w).sum())
}
