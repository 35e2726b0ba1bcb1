//! Third-order cumulant estimation, bispectrum and cumulant-energy features.

use std::f64::consts::PI;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default `epsilon` guarding the cubic normalisation.
pub const DEFAULT_EPSILON: f64 = 1e-12;

/// Ordered set of nonnegative lag pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, usize)>", into = "Vec<(usize, usize)>")]
pub struct LagSet(Vec<(usize, usize)>);

impl LagSet {
    pub fn new(lags: Vec<(usize, usize)>) -> Result<Self> {
        if lags.is_empty() {
            return Err(Error::InvalidConfig("lag set must be nonempty".into()));
        }
        Ok(Self(lags))
    }

    pub fn lags(&self) -> &[(usize, usize)] {
        &self.0
    }

    pub fn tau_max(&self) -> usize {
        self.0.iter().map(|&(a, b)| a.max(b)).max().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for LagSet {
    fn default() -> Self {
        Self(vec![(0, 0), (1, 0), (1, 1), (2, 0), (2, 1), (2, 2)])
    }
}

impl TryFrom<Vec<(usize, usize)>> for LagSet {
    type Error = Error;

    fn try_from(v: Vec<(usize, usize)>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LagSet> for Vec<(usize, usize)> {
    fn from(l: LagSet) -> Self {
        l.0
    }
}

fn centered(z: &[f64]) -> Vec<f64> {
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    z.iter().map(|v| v - mean).collect()
}

fn check_length(len: usize, tau_max: usize) -> Result<()> {
    if len <= tau_max + 1 {
        return Err(Error::TooShort { needed: tau_max + 1, actual: len });
    }
    Ok(())
}

fn triple_average(zc: &[f64], tau1: usize, tau2: usize) -> f64 {
    let span = zc.len() - tau1.max(tau2);
    let mut acc = 0.0;
    for u in 0..span {
        acc += zc[u] * zc[u + tau1] * zc[u + tau2];
    }
    acc / span as f64
}

/// Biased third-order cumulant estimate on mean-centred data.
pub fn third_cumulant(z: &[f64], tau1: usize, tau2: usize) -> Result<f64> {
    check_length(z.len(), tau1.max(tau2))?;
    Ok(triple_average(&centered(z), tau1, tau2))
}

/// `(1/L) sum (z - mean)^2`.
pub fn zero_lag_autocorr(z: &[f64]) -> Result<f64> {
    if z.is_empty() {
        return Err(Error::Empty("zero-lag autocorrelation of an empty sequence".into()));
    }
    Ok(centered(z).iter().map(|v| v * v).sum::<f64>() / z.len() as f64)
}

/// Cumulant estimates over the square `0 <= tau1, tau2 <= tau_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantGrid {
    tau_max: usize,
    values: Vec<f64>,
    source_length: usize,
    mean_removed: bool,
}

impl CumulantGrid {
    pub fn tau_max(&self) -> usize {
        self.tau_max
    }

    pub fn source_length(&self) -> usize {
        self.source_length
    }

    pub fn mean_removed(&self) -> bool {
        self.mean_removed
    }

    pub fn get(&self, tau1: usize, tau2: usize) -> Option<f64> {
        (tau1 <= self.tau_max && tau2 <= self.tau_max)
            .then(|| self.values[tau1 * (self.tau_max + 1) + tau2])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Element-wise mean of several grids with the same support.
    pub fn average(grids: &[CumulantGrid]) -> Result<CumulantGrid> {
        let first = grids.first().ok_or_else(|| Error::Empty("no grids to average".into()))?;
        let mut values = vec![0.0; first.values.len()];
        for g in grids {
            if g.tau_max != first.tau_max {
                return Err(Error::DimensionMismatch { expected: first.tau_max, actual: g.tau_max });
            }
            for (acc, v) in values.iter_mut().zip(&g.values) {
                *acc += v;
            }
        }
        let n = grids.len() as f64;
        values.iter_mut().for_each(|v| *v /= n);
        Ok(CumulantGrid {
            tau_max: first.tau_max,
            values,
            source_length: grids.iter().map(|g| g.source_length).sum(),
            mean_removed: grids.iter().all(|g| g.mean_removed),
        })
    }

    /// Value at any integer lag pair, extended from the estimated quadrant by
    /// `C(a,b) = C(b,a) = C(-a, b-a)`. Zero outside the estimated support.
    pub fn symmetric_value(&self, tau1: i64, tau2: i64) -> f64 {
        let shift = tau1.min(tau2).min(0);
        let (p, q) = if shift == 0 {
            (tau1, tau2)
        } else if shift == tau1 {
            (-tau1, tau2 - tau1)
        } else {
            (-tau2, tau1 - tau2)
        };
        if p.max(q) > self.tau_max as i64 {
            0.0
        } else {
            self.values[p as usize * (self.tau_max + 1) + q as usize]
        }
    }
}

pub fn cumulant_grid(z: &[f64], tau_max: usize) -> Result<CumulantGrid> {
    check_length(z.len(), tau_max)?;
    let zc = centered(z);
    let side = tau_max + 1;
    let mut values = vec![0.0; side * side];
    for t1 in 0..side {
        for t2 in 0..=t1 {
            let c = triple_average(&zc, t1, t2);
            values[t1 * side + t2] = c;
            values[t2 * side + t1] = c;
        }
    }
    Ok(CumulantGrid { tau_max, values, source_length: z.len(), mean_removed: true })
}

/// Bispectrum sampled at `omega_m = 2 pi m / K`, row index `m1`, column `m2`.
#[derive(Debug, Clone, PartialEq)]
pub struct BispectrumGrid {
    size: usize,
    values: Vec<Complex<f64>>,
}

impl BispectrumGrid {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn omega(&self, m: usize) -> f64 {
        2.0 * PI * m as f64 / self.size as f64
    }

    pub fn get(&self, m1: usize, m2: usize) -> Complex<f64> {
        self.values[m1 * self.size + m2]
    }

    pub fn values(&self) -> &[Complex<f64>] {
        &self.values
    }

    pub fn max_magnitude(&self) -> f64 {
        self.values.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Location and magnitude of the largest `|B|` in the non-redundant
    /// triangle `0 <= omega1 <= omega2`, `omega1 + omega2 <= pi`.
    pub fn principal_peak(&self) -> (usize, usize, f64) {
        let mut best = (0, 0, -1.0);
        for m1 in 0..self.size {
            for m2 in m1..self.size {
                if 2 * (m1 + m2) > self.size {
                    break;
                }
                let mag = self.get(m1, m2).norm();
                if mag > best.2 {
                    best = (m1, m2, mag);
                }
            }
        }
        best
    }

    /// Inverse 2-D DFT, returned on lags `-T..=T` (row-major, side `2T+1`).
    pub fn inverse_lags(&self, tau_max: usize) -> Vec<f64> {
        let k = self.size;
        let side = 2 * tau_max + 1;
        let mut out = vec![0.0; side * side];
        for (ia, a) in (-(tau_max as i64)..=tau_max as i64).enumerate() {
            for (ib, b) in (-(tau_max as i64)..=tau_max as i64).enumerate() {
                let mut acc = Complex::new(0.0, 0.0);
                for m1 in 0..k {
                    for m2 in 0..k {
                        let phase = self.omega(m1) * a as f64 + self.omega(m2) * b as f64;
                        acc += self.get(m1, m2) * Complex::from_polar(1.0, phase);
                    }
                }
                out[ia * side + ib] = acc.re / (k * k) as f64;
            }
        }
        out
    }
}

/// Two-dimensional DFT of the symmetrised cumulant grid.
pub fn bispectrum(grid: &CumulantGrid, size: usize) -> Result<BispectrumGrid> {
    let t = grid.tau_max as i64;
    let side = (2 * t + 1) as usize;
    if size < side {
        return Err(Error::InvalidParameter(format!(
            "bispectrum grid size {size} must be at least 2*tau_max+1 = {side}"
        )));
    }
    let twiddle = |m: usize, lag: i64| {
        let w = 2.0 * PI * m as f64 / size as f64;
        Complex::from_polar(1.0, -w * lag as f64)
    };
    // partial[a][m2] = sum_b C(a,b) e^{-i w_m2 b}
    let mut partial = vec![Complex::new(0.0, 0.0); side * size];
    for (ia, a) in (-t..=t).enumerate() {
        for m2 in 0..size {
            let mut acc = Complex::new(0.0, 0.0);
            for b in -t..=t {
                let c = grid.symmetric_value(a, b);
                if c != 0.0 {
                    acc += twiddle(m2, b) * c;
                }
            }
            partial[ia * size + m2] = acc;
        }
    }
    let mut values = vec![Complex::new(0.0, 0.0); size * size];
    for m1 in 0..size {
        for (ia, a) in (-t..=t).enumerate() {
            let tw = twiddle(m1, a);
            for m2 in 0..size {
                values[m1 * size + m2] += tw * partial[ia * size + m2];
            }
        }
    }
    Ok(BispectrumGrid { size, values })
}

fn lag_values<'a>(grid: &'a CumulantGrid, lags: &'a LagSet) -> impl Iterator<Item = Result<f64>> + 'a {
    lags.lags().iter().map(move |&(a, b)| {
        grid.get(a, b).ok_or_else(|| {
            Error::IndexOutOfRange(format!("lag ({a},{b}) outside grid with tau_max {}", grid.tau_max))
        })
    })
}

/// Sum of squared cumulants over the lag set.
pub fn cumulant_energy(grid: &CumulantGrid, lags: &LagSet) -> Result<f64> {
    lag_values(grid, lags).try_fold(0.0, |acc, c| c.map(|v| acc + v * v))
}

pub fn normalized_cumulant_energy(
    grid: &CumulantGrid,
    lags: &LagSet,
    r0: f64,
    epsilon: f64,
) -> Result<f64> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    if r0.is_nan() || r0 < 0.0 {
        return Err(Error::InvalidParameter(format!("r0 must be nonnegative, got {r0}")));
    }
    Ok(cumulant_energy(grid, lags)? / (r0 * r0 * r0 + epsilon))
}

/// Cumulant-energy features of one coefficient sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HosFeatures {
    pub cumulant_energy: f64,
    pub normalized: f64,
    pub r0: f64,
}

impl HosFeatures {
    pub fn compute(z: &[f64], lags: &LagSet, epsilon: f64) -> Result<Self> {
        let grid = cumulant_grid(z, lags.tau_max())?;
        let r0 = zero_lag_autocorr(z)?;
        Ok(Self {
            cumulant_energy: cumulant_energy(&grid, lags)?,
            normalized: normalized_cumulant_energy(&grid, lags, r0, epsilon)?,
            r0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Exp1, StandardNormal};

    fn gaussian(n: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    fn skewed(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.sample::<f64, _>(Exp1) - 1.0).collect()
    }

    /// Direct triple-loop oracle, independent of the centring helper.
    fn brute_cumulant(z: &[f64], t1: usize, t2: usize) -> f64 {
        let l = z.len();
        let mean: f64 = z.iter().sum::<f64>() / l as f64;
        let span = l - t1.max(t2);
        (0..span).map(|u| (z[u] - mean) * (z[u + t1] - mean) * (z[u + t2] - mean)).sum::<f64>()
            / span as f64
    }

    #[test]
    fn constant_sequence_has_zero_cumulant() {
        let z = [4.25; 32];
        for (a, b) in LagSet::default().lags() {
            assert_eq!(third_cumulant(&z, *a, *b).unwrap(), 0.0);
        }
        assert_eq!(zero_lag_autocorr(&z).unwrap(), 0.0);
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = skewed(257, &mut rng);
        let grid = cumulant_grid(&z, 5).unwrap();
        for t1 in 0..=5 {
            for t2 in 0..=5 {
                let b = brute_cumulant(&z, t1, t2);
                assert!((grid.get(t1, t2).unwrap() - b).abs() < 1e-12);
                assert_eq!(grid.get(t1, t2), grid.get(t2, t1));
            }
        }
    }

    #[test]
    fn length_checks() {
        assert!(third_cumulant(&[1.0, 2.0, 3.0], 2, 0).is_err());
        assert!(third_cumulant(&[1.0, 2.0, 3.0, 4.0], 2, 1).is_ok());
        assert!(cumulant_grid(&[1.0; 3], 2).is_err());
        assert!(zero_lag_autocorr(&[]).is_err());
    }

    #[test]
    fn r0_examples() {
        assert_eq!(zero_lag_autocorr(&[1.0, -1.0]).unwrap(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let r0 = zero_lag_autocorr(&gaussian(8192, 2.0, &mut rng)).unwrap();
        assert!((r0 - 4.0).abs() < 0.2, "{r0}");
    }

    #[test]
    fn exponential_third_moment() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let est: Vec<f64> =
            (0..40).map(|_| third_cumulant(&skewed(65536, &mut rng), 0, 0).unwrap()).collect();
        let mean = est.iter().sum::<f64>() / est.len() as f64;
        let sd = (est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (est.len() - 1) as f64).sqrt();
        let se = sd / (est.len() as f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn centering_removes_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let z = skewed(1024, &mut rng);
        let shifted: Vec<f64> = z.iter().map(|v| v + 123.0).collect();
        let a = cumulant_grid(&z, 4).unwrap();
        let b = cumulant_grid(&shifted, 4).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn energy_definitions() {
        let zero = cumulant_grid(&[0.0; 16], 2).unwrap();
        let lags = LagSet::default();
        assert_eq!(cumulant_energy(&zero, &lags).unwrap(), 0.0);
        assert_eq!(normalized_cumulant_energy(&zero, &lags, 0.0, DEFAULT_EPSILON).unwrap(), 0.0);
        assert!(normalized_cumulant_energy(&zero, &lags, 1.0, 0.0).is_err());

        let single = CumulantGrid { tau_max: 0, values: vec![3.0], source_length: 2, mean_removed: true };
        let one = LagSet::new(vec![(0, 0)]).unwrap();
        assert_eq!(cumulant_energy(&single, &one).unwrap(), 9.0);
        assert!(cumulant_energy(&single, &lags).is_err());
        assert!(LagSet::new(vec![]).is_err());
    }

    #[test]
    fn gaussian_energy_below_skewed() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let lags = LagSet::default();
        let trials = 200;
        let mut wins = 0;
        for _ in 0..trials {
            let g = cumulant_grid(&gaussian(8192, 1.0, &mut rng), 2).unwrap();
            let s = cumulant_grid(&skewed(8192, &mut rng), 2).unwrap();
            if cumulant_energy(&g, &lags).unwrap() < cumulant_energy(&s, &lags).unwrap() {
                wins += 1;
            }
        }
        assert!(wins as f64 >= 0.95 * trials as f64);
    }

    #[test]
    fn normalized_energy_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let lags = LagSet::default();
        let z = skewed(8192, &mut rng);
        let scaled: Vec<f64> = z.iter().map(|v| 10.0 * v).collect();
        let a = HosFeatures::compute(&z, &lags, DEFAULT_EPSILON).unwrap();
        let b = HosFeatures::compute(&scaled, &lags, DEFAULT_EPSILON).unwrap();
        assert!((a.normalized - b.normalized).abs() <= 0.01 * a.normalized);
        assert!((b.cumulant_energy / a.cumulant_energy - 1e6).abs() < 1.0);
    }

    #[test]
    fn normalized_energy_ignores_gaussian_scale() {
        // Rank-sum comparison of N for sigma = 1 vs sigma = 5.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let lags = LagSet::default();
        let n = 200;
        let a: Vec<f64> = (0..n)
            .map(|_| HosFeatures::compute(&gaussian(8192, 1.0, &mut rng), &lags, DEFAULT_EPSILON).unwrap().normalized)
            .collect();
        let b: Vec<f64> = (0..n)
            .map(|_| HosFeatures::compute(&gaussian(8192, 5.0, &mut rng), &lags, DEFAULT_EPSILON).unwrap().normalized)
            .collect();
        let mut u = 0.0;
        for x in &a {
            for y in &b {
                if x > y {
                    u += 1.0;
                } else if x == y {
                    u += 0.5;
                }
            }
        }
        let nf = n as f64;
        let mean = nf * nf / 2.0;
        let sd = (nf * nf * (2.0 * nf + 1.0) / 12.0).sqrt();
        // Two-sided 1% critical value.
        assert!(((u - mean) / sd).abs() < 2.576);
    }

    #[test]
    fn bispectrum_of_impulse_is_constant() {
        let grid = CumulantGrid { tau_max: 0, values: vec![2.5], source_length: 4, mean_removed: true };
        let b = bispectrum(&grid, 8).unwrap();
        for v in b.values() {
            assert!((v - Complex::new(2.5, 0.0)).norm() < 1e-14);
        }
        let zero = cumulant_grid(&[0.0; 32], 3).unwrap();
        assert_eq!(bispectrum(&zero, 16).unwrap().max_magnitude(), 0.0);
        assert!(bispectrum(&zero, 6).is_err());
    }

    #[test]
    fn symmetric_extension_matches_direct_lags() {
        // Negative-lag values must equal the estimator applied to the
        // equivalent nonnegative lag triple.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = skewed(512, &mut rng);
        let grid = cumulant_grid(&z, 4).unwrap();
        assert_eq!(grid.symmetric_value(-2, 1), grid.get(2, 3).unwrap());
        assert_eq!(grid.symmetric_value(1, -2), grid.get(3, 2).unwrap());
        assert_eq!(grid.symmetric_value(-1, -3), grid.get(3, 2).unwrap());
        assert_eq!(grid.symmetric_value(-3, 2), 0.0);
    }

    #[test]
    fn bispectrum_conjugate_symmetry_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z = skewed(2048, &mut rng);
        let grid = cumulant_grid(&z, 3).unwrap();
        let k = 9;
        let b = bispectrum(&grid, k).unwrap();
        for m1 in 0..k {
            for m2 in 0..k {
                let mirrored = b.get((k - m1) % k, (k - m2) % k);
                assert!((mirrored - b.get(m1, m2).conj()).norm() < 1e-9);
            }
        }
        let back = b.inverse_lags(3);
        let side = 7;
        for (ia, a) in (-3i64..=3).enumerate() {
            for (ib, bb) in (-3i64..=3).enumerate() {
                assert!((back[ia * side + ib] - grid.symmetric_value(a, bb)).abs() < 1e-9);
            }
        }
    }
}
