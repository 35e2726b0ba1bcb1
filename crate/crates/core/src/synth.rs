//! Seeded generation of labelled frame streams.
//!
//! Every frame draws from its own ChaCha8 stream: the generator is seeded
//! with `ChaCha8Rng::seed_from_u64(seed)` and then switched to stream
//! `(frame_index << 4) | channel`, where `channel` is one of the `CHANNEL_*`
//! constants. Streams are therefore reproducible frame by frame and
//! independent of how many frames are generated.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the random source, recorded in stream metadata.
pub const RNG_ALGORITHM: &str = "chacha8/seed_from_u64/stream=(frame<<4)|channel";

pub const CHANNEL_NOISE_A: u64 = 0;
pub const CHANNEL_NOISE_B: u64 = 1;
pub const CHANNEL_ANOMALY: u64 = 2;

pub fn frame_rng(seed: u64, frame: usize, channel: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((frame as u64) << 4) | channel);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    /// Cycles per sample, in `(0, 0.5)`.
    pub frequency: f64,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct StructureSpec {
    pub tones: Vec<Tone>,
    /// Linear baseline slope per sample within a frame.
    #[serde(default)]
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnomalySpec {
    #[default]
    None,
    /// Sparse shots `scale * (Exp(1) - 1)` arriving with probability `rate` per sample.
    /// With `power_matched`, the Gaussian background is attenuated so the
    /// per-sample variance stays at `noise_sigma^2`.
    SkewedImpulsive {
        rate: f64,
        scale: f64,
        #[serde(default)]
        power_matched: bool,
    },
    /// Tones at `f1`, `f2` and `f1 + f2`; when `coupled`, the third phase is
    /// the sum of the first two.
    Qpc {
        f1: f64,
        f2: f64,
        coupling: f64,
        #[serde(default = "default_true")]
        coupled: bool,
    },
    /// Broadband noise energy multiplied by `energy_scale`.
    MeanShift { energy_scale: f64 },
}

fn default_true() -> bool {
    true
}

impl AnomalySpec {
    pub fn is_none(&self) -> bool {
        matches!(self, AnomalySpec::None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShiftRegime {
    #[default]
    Matched,
    Mild,
    Moderate,
    Severe,
}

impl ShiftRegime {
    pub const ALL: [ShiftRegime; 4] =
        [ShiftRegime::Matched, ShiftRegime::Mild, ShiftRegime::Moderate, ShiftRegime::Severe];

    /// Anomaly amplitude multiplier.
    pub fn multiplier(self) -> f64 {
        match self {
            ShiftRegime::Matched => 1.0,
            ShiftRegime::Mild => 0.8,
            ShiftRegime::Moderate => 0.6,
            ShiftRegime::Severe => 0.4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ShiftRegime::Matched => "matched",
            ShiftRegime::Mild => "mild",
            ShiftRegime::Moderate => "moderate",
            ShiftRegime::Severe => "severe",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub frame_length: usize,
    pub frames: usize,
    pub seed: u64,
    #[serde(default)]
    pub structure: StructureSpec,
    pub noise_sigma: f64,
    #[serde(default)]
    pub anomaly: AnomalySpec,
    #[serde(default)]
    pub onset_frame: usize,
    #[serde(default)]
    pub regime: ShiftRegime,
}

impl ScenarioSpec {
    /// Two high-band tones in unit-variance noise; power-matched skewed
    /// shots after the midpoint.
    pub fn benchmark(seed: u64) -> Self {
        Self {
            frame_length: 1024,
            frames: 400,
            seed,
            structure: StructureSpec {
                tones: vec![
                    Tone { frequency: 0.3125, amplitude: 4.0, phase: 0.0 },
                    Tone { frequency: 0.40625, amplitude: 2.0, phase: 0.7 },
                ],
                slope: 0.0,
            },
            noise_sigma: 1.0,
            anomaly: AnomalySpec::SkewedImpulsive { rate: 0.1, scale: 2.0, power_matched: true },
            onset_frame: 200,
            regime: ShiftRegime::Matched,
        }
    }

    pub fn nominal(&self) -> Self {
        Self { anomaly: AnomalySpec::None, onset_frame: 0, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_length == 0 {
            return Err(Error::InvalidConfig("frame length must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise sigma {} invalid", self.noise_sigma)));
        }
        let freq_ok = |f: f64| f > 0.0 && f < 0.5;
        for t in &self.structure.tones {
            if !freq_ok(t.frequency) {
                return Err(Error::InvalidConfig(format!("tone frequency {} outside (0, 0.5)", t.frequency)));
            }
        }
        if self.frames > 0 && self.onset_frame >= self.frames {
            return Err(Error::InvalidConfig(format!(
                "onset frame {} not before frame count {}",
                self.onset_frame, self.frames
            )));
        }
        match self.anomaly {
            AnomalySpec::None => {}
            AnomalySpec::SkewedImpulsive { rate, scale, power_matched } => {
                if !(0.0..=1.0).contains(&rate) || !scale.is_finite() {
                    return Err(Error::InvalidConfig(format!("impulsive rate {rate} / scale {scale} invalid")));
                }
                if power_matched && rate * scale * scale >= self.noise_sigma * self.noise_sigma {
                    return Err(Error::InvalidConfig(format!(
                        "shot variance {} exceeds the noise variance it replaces",
                        rate * scale * scale
                    )));
                }
            }
            AnomalySpec::Qpc { f1, f2, coupling, .. } => {
                if !freq_ok(f1) || !freq_ok(f2) || !freq_ok(f1 + f2) || !coupling.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "coupled triple ({f1}, {f2}, {}) must lie in (0, 0.5)",
                        f1 + f2
                    )));
                }
            }
            AnomalySpec::MeanShift { energy_scale } => {
                if !(energy_scale > 0.0) {
                    return Err(Error::InvalidConfig(format!("energy scale {energy_scale} must be positive")));
                }
            }
        }
        Ok(())
    }

    pub fn is_anomalous(&self, frame: usize) -> bool {
        !self.anomaly.is_none() && frame >= self.onset_frame
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledStream {
    pub frames: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
    pub spec: ScenarioSpec,
}

impl LabeledStream {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

fn structure(spec: &ScenarioSpec, frame: usize, out: &mut [f64]) {
    let n0 = frame * spec.frame_length;
    for (i, x) in out.iter_mut().enumerate() {
        let n = (n0 + i) as f64;
        let mut s = spec.structure.slope * i as f64;
        for t in &spec.structure.tones {
            s += t.amplitude * (2.0 * PI * t.frequency * n + t.phase).cos();
        }
        *x = s;
    }
}

fn noise_gain(spec: &ScenarioSpec, frame: usize) -> f64 {
    match spec.anomaly {
        AnomalySpec::MeanShift { energy_scale } if spec.is_anomalous(frame) => {
            (1.0 + spec.regime.multiplier() * (energy_scale - 1.0)).max(0.0).sqrt()
        }
        AnomalySpec::SkewedImpulsive { rate, scale, power_matched: true } if spec.is_anomalous(frame) => {
            // A shot contributes rate * (gain * scale)^2 of variance per sample.
            let g = spec.regime.multiplier() * scale;
            (1.0 - rate * g * g / (spec.noise_sigma * spec.noise_sigma)).max(0.0).sqrt()
        }
        _ => 1.0,
    }
}

fn add_noise(spec: &ScenarioSpec, frame: usize, channel: u64, weight: f64, out: &mut [f64]) {
    let mut rng = frame_rng(spec.seed, frame, channel);
    let sigma = spec.noise_sigma * noise_gain(spec, frame) * weight;
    for x in out.iter_mut() {
        *x += sigma * rng.sample::<f64, _>(StandardNormal);
    }
}

fn add_anomaly(spec: &ScenarioSpec, frame: usize, out: &mut [f64]) {
    if !spec.is_anomalous(frame) {
        return;
    }
    let gain = spec.regime.multiplier();
    let mut rng = frame_rng(spec.seed, frame, CHANNEL_ANOMALY);
    match spec.anomaly {
        AnomalySpec::None | AnomalySpec::MeanShift { .. } => {}
        AnomalySpec::SkewedImpulsive { rate, scale, .. } => {
            for x in out.iter_mut() {
                let hit = rng.random::<f64>() < rate;
                let shot: f64 = rng.sample(Exp1);
                if hit {
                    *x += gain * scale * (shot - 1.0);
                }
            }
        }
        AnomalySpec::Qpc { f1, f2, coupling, coupled } => {
            let p1 = 2.0 * PI * rng.random::<f64>();
            let p2 = 2.0 * PI * rng.random::<f64>();
            let free = 2.0 * PI * rng.random::<f64>();
            let p3 = if coupled { p1 + p2 } else { free };
            for (i, x) in out.iter_mut().enumerate() {
                let n = i as f64;
                *x += gain
                    * ((2.0 * PI * f1 * n + p1).cos()
                        + (2.0 * PI * f2 * n + p2).cos()
                        + coupling * (2.0 * PI * (f1 + f2) * n + p3).cos());
            }
        }
    }
}

fn labels(spec: &ScenarioSpec) -> Vec<bool> {
    (0..spec.frames).map(|f| spec.is_anomalous(f)).collect()
}

/// `x[n] = s[n] + v[n]` (plus anomaly) for every frame, single source.
pub fn generate(spec: &ScenarioSpec) -> Result<LabeledStream> {
    spec.validate()?;
    let frames = (0..spec.frames)
        .map(|f| {
            let mut x = vec![0.0; spec.frame_length];
            structure(spec, f, &mut x);
            add_noise(spec, f, CHANNEL_NOISE_A, 1.0, &mut x);
            add_anomaly(spec, f, &mut x);
            x
        })
        .collect();
    Ok(LabeledStream { frames, labels: labels(spec), spec: spec.clone() })
}

/// Average of two sources that share structure and anomaly but carry
/// independent noise.
pub fn generate_fused(spec: &ScenarioSpec) -> Result<LabeledStream> {
    spec.validate()?;
    let frames = (0..spec.frames)
        .map(|f| {
            let mut x = vec![0.0; spec.frame_length];
            structure(spec, f, &mut x);
            add_noise(spec, f, CHANNEL_NOISE_A, 0.5, &mut x);
            add_noise(spec, f, CHANNEL_NOISE_B, 0.5, &mut x);
            add_anomaly(spec, f, &mut x);
            x
        })
        .collect();
    Ok(LabeledStream { frames, labels: labels(spec), spec: spec.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(x: &[f64]) -> (f64, f64, f64) {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let m3 = x.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
        let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
        (m2, m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    }

    #[test]
    fn deterministic_and_frame_local() {
        let spec = ScenarioSpec::benchmark(42);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        let short = generate(&ScenarioSpec { frames: 250, ..spec.clone() }).unwrap();
        assert_eq!(&a.frames[..250], short.frames.as_slice());
        let other = generate(&ScenarioSpec::benchmark(43)).unwrap();
        assert_ne!(a.frames[0], other.frames[0]);
    }

    #[test]
    fn labels_follow_onset() {
        let spec = ScenarioSpec::benchmark(1);
        let s = generate(&spec).unwrap();
        assert_eq!(s.labels.len(), 400);
        assert!(s.labels[..200].iter().all(|&l| !l));
        assert!(s.labels[200..].iter().all(|&l| l));
        let nominal = generate(&spec.nominal()).unwrap();
        assert!(nominal.labels.iter().all(|&l| !l));
    }

    #[test]
    fn nominal_noise_is_gaussian() {
        let spec = ScenarioSpec {
            frame_length: 1000,
            frames: 1000,
            seed: 9,
            structure: StructureSpec::default(),
            noise_sigma: 1.0,
            anomaly: AnomalySpec::None,
            onset_frame: 0,
            regime: ShiftRegime::Matched,
        };
        let s = generate(&spec).unwrap();
        let all: Vec<f64> = s.frames.concat();
        let (var, skew, kurt) = moments(&all);
        assert!((var - 1.0).abs() < 0.01);
        assert!(skew.abs() < 0.05 && kurt.abs() < 0.05, "{skew} {kurt}");
    }

    #[test]
    fn impulsive_anomaly_is_skewed() {
        let spec = ScenarioSpec { structure: StructureSpec::default(), onset_frame: 0, ..ScenarioSpec::benchmark(5) };
        let s = generate(&spec).unwrap();
        let (_, skew, _) = moments(&s.frames.concat());
        assert!(skew > 0.2, "{skew}");
    }

    #[test]
    fn fused_noise_has_half_variance() {
        let spec = ScenarioSpec {
            structure: StructureSpec::default(),
            anomaly: AnomalySpec::None,
            ..ScenarioSpec::benchmark(6)
        };
        let s = generate_fused(&spec).unwrap();
        let (var, _, _) = moments(&s.frames.concat());
        assert!((var - 0.5).abs() < 0.01, "{var}");
    }

    #[test]
    fn regime_scales_anomaly() {
        let base = ScenarioSpec {
            structure: StructureSpec::default(),
            noise_sigma: 0.0,
            onset_frame: 0,
            anomaly: AnomalySpec::Qpc { f1: 0.12, f2: 0.18, coupling: 1.0, coupled: true },
            ..ScenarioSpec::benchmark(3)
        };
        let matched = generate(&base).unwrap();
        let severe = generate(&ScenarioSpec { regime: ShiftRegime::Severe, ..base }).unwrap();
        for (a, b) in matched.frames[0].iter().zip(&severe.frames[0]) {
            assert!((0.4 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn validation() {
        let mut spec = ScenarioSpec::benchmark(0);
        spec.onset_frame = 400;
        assert!(spec.validate().is_err());
        let mut spec = ScenarioSpec::benchmark(0);
        spec.structure.tones[0].frequency = 0.5;
        assert!(spec.validate().is_err());
        let spec = ScenarioSpec {
            anomaly: AnomalySpec::Qpc { f1: 0.3, f2: 0.25, coupling: 1.0, coupled: true },
            ..ScenarioSpec::benchmark(0)
        };
        assert!(spec.validate().is_err());
        let empty = ScenarioSpec { frames: 0, ..ScenarioSpec::benchmark(0) };
        assert!(generate(&empty).unwrap().is_empty());
    }
}
