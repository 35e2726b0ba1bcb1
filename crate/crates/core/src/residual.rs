//! Structure/residual separation by hard masking of leaf coefficients.
//!
//! Leaves form an orthonormal basis, so the kept and discarded coefficient
//! sets reconstruct to complementary orthogonal projections of the frame.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wpt::{inverse_wpt, CoefficientTree, QmfPair, WptConfig};

/// Normal-consistency constant for the median absolute deviation.
pub const MAD_SCALE: f64 = 0.6745;

/// How the leaf threshold is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ThresholdMode {
    /// `sigma_hat * sqrt(2 ln N)` shared by every leaf.
    #[default]
    Universal,
    /// A single fixed threshold.
    Fixed { lambda: f64 },
    /// One threshold per leaf node, in node order.
    PerNode { lambdas: Vec<f64> },
}

/// A resolved threshold policy for one tree.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdPolicy {
    pub sigma: f64,
    /// Per leaf node; `f64::INFINITY` means nothing is kept.
    pub lambdas: Vec<f64>,
    /// Set when the noise estimate collapsed to zero.
    pub degenerate: bool,
}

impl ThresholdPolicy {
    pub fn resolve(mode: &ThresholdMode, tree: &CoefficientTree) -> Result<Self> {
        let cfg = tree.config();
        let leaves = cfg.nodes_at(cfg.depth);
        let sigma = estimate_sigma(tree)?;
        match mode {
            ThresholdMode::Universal => {
                if sigma > 0.0 {
                    let lambda = universal_threshold(sigma, cfg.frame_length)?;
                    Ok(Self { sigma, lambdas: vec![lambda; leaves], degenerate: false })
                } else {
                    Ok(Self { sigma, lambdas: vec![f64::INFINITY; leaves], degenerate: true })
                }
            }
            ThresholdMode::Fixed { lambda } => {
                check_lambda(*lambda)?;
                Ok(Self { sigma, lambdas: vec![*lambda; leaves], degenerate: false })
            }
            ThresholdMode::PerNode { lambdas } => {
                if lambdas.len() != leaves {
                    return Err(Error::LengthMismatch { expected: leaves, actual: lambdas.len() });
                }
                for &l in lambdas {
                    check_lambda(l)?;
                }
                Ok(Self { sigma, lambdas: lambdas.clone(), degenerate: false })
            }
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::InvalidParameter(format!("threshold must be positive, got {lambda}")));
    }
    Ok(())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median absolute deviation estimate of the noise level from node (1,1).
pub fn estimate_sigma(tree: &CoefficientTree) -> Result<f64> {
    if tree.depth() < 1 {
        return Err(Error::InvalidConfig("sigma estimate needs depth >= 1".into()));
    }
    let mut mags: Vec<f64> = tree.node(1, 1)?.iter().map(|w| w.abs()).collect();
    Ok(median(&mut mags) / MAD_SCALE)
}

pub fn universal_threshold(sigma: f64, n: usize) -> Result<f64> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    if n < 2 {
        return Err(Error::InvalidParameter(format!("frame length must be at least 2, got {n}")));
    }
    Ok(sigma * (2.0 * (n as f64).ln()).sqrt())
}

/// Keep-bits over the leaf level, laid out like [`CoefficientTree::leaves`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    depth: usize,
    node_len: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn from_bits(cfg: &WptConfig, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != cfg.frame_length {
            return Err(Error::LengthMismatch { expected: cfg.frame_length, actual: bits.len() });
        }
        Ok(Self { depth: cfg.depth, node_len: cfg.node_len(cfg.depth), bits })
    }

    pub fn all(cfg: &WptConfig, keep: bool) -> Self {
        Self {
            depth: cfg.depth,
            node_len: cfg.node_len(cfg.depth),
            bits: vec![keep; cfg.frame_length],
        }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Covered nodes: the full leaf level.
    pub fn node_set(&self) -> Vec<(usize, usize)> {
        (0..1usize << self.depth).map(|k| (self.depth, k)).collect()
    }

    pub fn kept_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn node_bits(&self, node: usize) -> &[bool] {
        &self.bits[node * self.node_len..(node + 1) * self.node_len]
    }
}

/// `M[u] = 1` iff `|w[u]| > lambda` for the leaf that owns `u`.
pub fn build_mask(tree: &CoefficientTree, policy: &ThresholdPolicy) -> Result<Mask> {
    let cfg = tree.config();
    let leaves = cfg.nodes_at(cfg.depth);
    if policy.lambdas.len() != leaves {
        return Err(Error::LengthMismatch { expected: leaves, actual: policy.lambdas.len() });
    }
    let node_len = cfg.node_len(cfg.depth);
    let bits = tree
        .leaves()
        .chunks_exact(node_len)
        .zip(&policy.lambdas)
        .flat_map(|(coeffs, &lambda)| coeffs.iter().map(move |w| w.abs() > lambda))
        .collect();
    Mask::from_bits(cfg, bits)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    /// Structured estimate `s_hat`.
    pub structured: Vec<f64>,
    /// Residual estimate `v_hat`.
    pub residual: Vec<f64>,
    /// Masked leaf coefficients, kept.
    pub kept: Vec<f64>,
    /// Masked leaf coefficients, discarded.
    pub discarded: Vec<f64>,
    /// Full packet tree of the residual; its root equals `residual`.
    pub residual_tree: CoefficientTree,
}

pub fn split_and_reconstruct(
    tree: &CoefficientTree,
    mask: &Mask,
    qmf: &QmfPair,
) -> Result<SplitResult> {
    let cfg = tree.config();
    if mask.depth != cfg.depth || mask.bits.len() != cfg.frame_length {
        return Err(Error::DimensionMismatch {
            expected: cfg.frame_length,
            actual: mask.bits.len(),
        });
    }
    let (kept, discarded): (Vec<f64>, Vec<f64>) = tree
        .leaves()
        .iter()
        .zip(&mask.bits)
        .map(|(&w, &keep)| if keep { (w, 0.0) } else { (0.0, w) })
        .unzip();
    let structured = inverse_wpt(&kept, qmf, cfg)?;
    let residual_tree = CoefficientTree::from_leaves(discarded.clone(), qmf, cfg)?;
    let residual = residual_tree.level(0).to_vec();
    Ok(SplitResult { structured, residual, kept, discarded, residual_tree })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wpt::{forward_wpt, FilterKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    fn sq(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn universal_threshold_values() {
        // sqrt(2 ln 1024) = sqrt(20 ln 2)
        let expected = (20.0 * std::f64::consts::LN_2).sqrt();
        assert!((universal_threshold(1.0, 1024).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 3.7233).abs() < 1e-4);
        assert!((universal_threshold(0.5, 1024).unwrap() - 0.5 * expected).abs() < 1e-12);
        assert!((universal_threshold(1.0, 2).unwrap() - 1.177_410_022_515_474_7).abs() < 1e-12);
        assert!(universal_threshold(0.0, 8).is_err());
        assert!(universal_threshold(-1.0, 8).is_err());
    }

    #[test]
    fn sigma_estimate_monte_carlo() {
        let cfg = WptConfig::new(4096, 1).unwrap();
        let qmf = FilterKind::Db4.qmf();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let trials = 1000;
        let mut inside = 0;
        for t in 0..trials {
            let x = gaussian(4096, 1.0, &mut rng);
            let s = estimate_sigma(&forward_wpt(&x, &qmf, &cfg).unwrap()).unwrap();
            if (0.93..=1.07).contains(&s) {
                inside += 1;
            }
            if t < 20 {
                // MAD is scale equivariant.
                let y: Vec<f64> = x.iter().map(|v| 2.5 * v).collect();
                let s2 = estimate_sigma(&forward_wpt(&y, &qmf, &cfg).unwrap()).unwrap();
                assert!((s2 - 2.5 * s).abs() < 1e-12);
            }
        }
        assert!(inside as f64 >= 0.95 * trials as f64, "{inside}");
    }

    #[test]
    fn constant_frame_is_degenerate() {
        let cfg = WptConfig::new(64, 3).unwrap();
        let qmf = FilterKind::Db4.qmf();
        let tree = forward_wpt(&[3.5; 64], &qmf, &cfg).unwrap();
        let sigma = estimate_sigma(&tree).unwrap();
        assert!(sigma < 1e-12);
        // Exactly zero for Haar.
        let tree_h = forward_wpt(&[3.5; 64], &FilterKind::Haar.qmf(), &cfg).unwrap();
        let policy = ThresholdPolicy::resolve(&ThresholdMode::Universal, &tree_h).unwrap();
        assert!(policy.degenerate);
        let mask = build_mask(&tree_h, &policy).unwrap();
        assert_eq!(mask.kept_count(), 0);
        let split = split_and_reconstruct(&tree_h, &mask, &FilterKind::Haar.qmf()).unwrap();
        assert!(split.structured.iter().all(|&v| v == 0.0));
        for v in &split.residual {
            assert!((v - 3.5).abs() < 1e-12);
        }
    }

    #[test]
    fn haar_mask_example() {
        let cfg = WptConfig::new(2, 1).unwrap();
        let qmf = FilterKind::Haar.qmf();
        let tree = forward_wpt(&[10.0, 10.0], &qmf, &cfg).unwrap();
        let policy =
            ThresholdPolicy::resolve(&ThresholdMode::Fixed { lambda: 3.0 }, &tree).unwrap();
        let mask = build_mask(&tree, &policy).unwrap();
        assert_eq!(mask.bits(), &[true, false]);
        let split = split_and_reconstruct(&tree, &mask, &qmf).unwrap();
        assert!((split.structured[0] - 10.0).abs() < 1e-12);
        assert!((split.structured[1] - 10.0).abs() < 1e-12);
        assert!(split.residual.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn ties_go_to_residual() {
        let cfg = WptConfig::new(2, 1).unwrap();
        let qmf = FilterKind::Haar.qmf();
        let tree = forward_wpt(&[1.0, 1.0], &qmf, &cfg).unwrap();
        let lambda = tree.leaves()[0].abs();
        let policy = ThresholdPolicy::resolve(&ThresholdMode::Fixed { lambda }, &tree).unwrap();
        assert_eq!(build_mask(&tree, &policy).unwrap().kept_count(), 0);
    }

    #[test]
    fn identity_and_zero_masks() {
        let cfg = WptConfig::new(64, 3).unwrap();
        let qmf = FilterKind::Db8.qmf();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = gaussian(64, 1.0, &mut rng);
        let tree = forward_wpt(&x, &qmf, &cfg).unwrap();

        let keep = split_and_reconstruct(&tree, &Mask::all(&cfg, true), &qmf).unwrap();
        let drop = split_and_reconstruct(&tree, &Mask::all(&cfg, false), &qmf).unwrap();
        for i in 0..64 {
            assert!((keep.structured[i] - x[i]).abs() < 1e-12);
            assert!(keep.residual[i].abs() < 1e-15);
            assert!(drop.structured[i].abs() < 1e-15);
            assert!((drop.residual[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn per_node_policy_shape_is_checked() {
        let cfg = WptConfig::new(64, 2).unwrap();
        let tree = forward_wpt(&[1.0; 64], &FilterKind::Haar.qmf(), &cfg).unwrap();
        let bad = ThresholdMode::PerNode { lambdas: vec![1.0; 3] };
        assert!(ThresholdPolicy::resolve(&bad, &tree).is_err());
        let neg = ThresholdMode::PerNode { lambdas: vec![1.0, 1.0, -1.0, 1.0] };
        assert!(ThresholdPolicy::resolve(&neg, &tree).is_err());
        let ok = ThresholdMode::PerNode { lambdas: vec![1.0, 2.0, 3.0, 4.0] };
        assert_eq!(ThresholdPolicy::resolve(&ok, &tree).unwrap().lambdas, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn projection_beats_random_competitors() {
        let cfg = WptConfig::new(64, 3).unwrap();
        let qmf = FilterKind::Db4.qmf();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let x = gaussian(64, 1.0, &mut rng);
        let tree = forward_wpt(&x, &qmf, &cfg).unwrap();
        let bits: Vec<bool> = (0..64).map(|_| rng.random_bool(0.4)).collect();
        let mask = Mask::from_bits(&cfg, bits.clone()).unwrap();
        let split = split_and_reconstruct(&tree, &mask, &qmf).unwrap();
        let best: f64 = x.iter().zip(&split.structured).map(|(a, b)| (a - b).powi(2)).sum();
        for _ in 0..100 {
            // Random element of the kept subspace.
            let coeffs: Vec<f64> = bits
                .iter()
                .map(|&b| if b { 3.0 * rng.sample::<f64, _>(StandardNormal) } else { 0.0 })
                .collect();
            let t = inverse_wpt(&coeffs, &qmf, &cfg).unwrap();
            let err: f64 = x.iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum();
            assert!(best <= err + 1e-12);
            // Perturbing the projection along the subspace only increases the error.
            let eps = 1e-3;
            let err_pert: f64 = x
                .iter()
                .zip(split.structured.iter().zip(&t))
                .map(|(a, (s, d))| (a - s - eps * d).powi(2))
                .sum();
            assert!(err_pert >= best - 1e-12);
        }
    }

    #[test]
    fn universal_threshold_suppresses_noise() {
        let cfg = WptConfig::new(1024, 4).unwrap();
        let qmf = FilterKind::Db4.qmf();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trials = 1000;
        let mut kept = 0usize;
        for _ in 0..trials {
            let x = gaussian(1024, 1.0, &mut rng);
            let tree = forward_wpt(&x, &qmf, &cfg).unwrap();
            let policy = ThresholdPolicy::resolve(&ThresholdMode::Universal, &tree).unwrap();
            kept += build_mask(&tree, &policy).unwrap().kept_count();
        }
        let frac = kept as f64 / (trials * 1024) as f64;
        assert!(frac <= 0.02, "{frac}");
    }

    #[test]
    fn residual_tree_root_is_residual() {
        let cfg = WptConfig::new(128, 3).unwrap();
        let qmf = FilterKind::Db4.qmf();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = gaussian(128, 1.0, &mut rng);
        let tree = forward_wpt(&x, &qmf, &cfg).unwrap();
        let policy = ThresholdPolicy::resolve(&ThresholdMode::Fixed { lambda: 1.0 }, &tree).unwrap();
        let mask = build_mask(&tree, &policy).unwrap();
        let split = split_and_reconstruct(&tree, &mask, &qmf).unwrap();
        assert_eq!(split.residual_tree.leaves(), split.discarded.as_slice());
        let e = sq(&x);
        assert!((sq(&split.structured) + sq(&split.residual) - e).abs() <= 1e-10 * e);
    }
}
