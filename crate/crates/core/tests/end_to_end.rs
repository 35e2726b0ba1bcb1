use noisesig_core::detector::{cusum_step, detection_probability};
use noisesig_core::eval::{ablation_harness, roc_curve, score_method, HarnessOptions, Method};
use noisesig_core::synth::{generate, generate_fused, StructureSpec, Tone};
use noisesig_core::{
    decide, fit_nominal, AnomalySpec, CusumState, DetectorConfig, FeatureConfig, FeatureExtractor, ScenarioSpec,
};

fn small() -> FeatureConfig {
    FeatureConfig { frame_length: 256, ..Default::default() }
}

#[test]
fn structure_plus_residual_is_the_frame() {
    let spec = ScenarioSpec { frame_length: 256, frames: 5, onset_frame: 2, ..ScenarioSpec::benchmark(3) };
    let ex = FeatureExtractor::new(small()).unwrap();
    for frame in generate(&spec).unwrap().frames {
        let a = ex.analyze(&frame).unwrap();
        for ((x, s), v) in frame.iter().zip(&a.split.structured).zip(&a.split.residual) {
            assert!((x - (s + v)).abs() < 1e-10);
        }
        assert_eq!(a.split.residual_tree.level(0), a.split.residual.as_slice());
    }
}

fn one_tone(frequency: f64) -> Vec<f64> {
    let spec = ScenarioSpec {
        frame_length: 256,
        frames: 1,
        structure: StructureSpec { tones: vec![Tone { frequency, amplitude: 5.0, phase: 0.2 }], slope: 0.0 },
        noise_sigma: 0.3,
        anomaly: AnomalySpec::None,
        onset_frame: 0,
        ..ScenarioSpec::benchmark(1)
    };
    generate(&spec).unwrap().frames.remove(0)
}

fn energy(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

#[test]
fn low_band_tone_lands_in_the_structured_part() {
    let a = FeatureExtractor::new(small()).unwrap().analyze(&one_tone(0.1)).unwrap();
    assert!(a.policy.sigma < 0.5, "sigma {}", a.policy.sigma);
    let (s, v) = (energy(&a.split.structured), energy(&a.split.residual));
    assert!(s > 50.0 * v, "structured {s}, residual {v}");
}

/// The noise level is read from node (1,1), so a strong tone in the upper
/// half-band inflates it and the universal threshold keeps nothing.
#[test]
fn upper_band_tone_inflates_the_noise_estimate() {
    let frame = one_tone(0.3125);
    let a = FeatureExtractor::new(small()).unwrap().analyze(&frame).unwrap();
    assert!(a.policy.sigma > 3.0, "sigma {}", a.policy.sigma);
    assert_eq!(energy(&a.split.structured), 0.0);
    assert!(a.split.residual.iter().zip(&frame).all(|(v, x)| (v - x).abs() < 1e-10));
}

#[test]
fn nominal_pipeline_fits_and_scores() {
    let ex = FeatureExtractor::new(small()).unwrap();
    let train = ScenarioSpec { frame_length: 256, frames: 200, ..ScenarioSpec::benchmark(10) }.nominal();
    let sigs: Vec<_> =
        generate(&train).unwrap().frames.iter().enumerate().map(|(m, f)| ex.signature(f, m).unwrap()).collect();
    let model = fit_nominal(&sigs, 1e-3).unwrap();
    assert_eq!(model.dim(), 12);

    let test = ScenarioSpec { seed: 11, ..train };
    let d2: Vec<f64> = generate(&test)
        .unwrap()
        .frames
        .iter()
        .enumerate()
        .map(|(m, f)| model.mahalanobis_sq(&ex.signature(f, m).unwrap().values).unwrap())
        .collect();
    let mean = d2.iter().sum::<f64>() / d2.len() as f64;
    assert!(mean > 3.0 && mean < 20.0, "nominal mean D2 {mean}");

    let cfg = DetectorConfig::new(0.05, model.dim()).unwrap();
    let flagged = d2.iter().filter(|&&v| decide(v, &cfg)).count();
    assert!(flagged < d2.len() / 5, "{flagged} of {} flagged", d2.len());

    let mut state = CusumState::new(model.dim() as f64 + 1.0, 1e6).unwrap();
    for &v in &d2 {
        let (next, alarm) = cusum_step(&state, v);
        assert!(!alarm);
        assert!(next.s >= 0.0);
        state = next;
    }
}

#[test]
fn power_increases_with_shift() {
    let eta = DetectorConfig::new(0.05, 12).unwrap().eta;
    let p: Vec<f64> = [0.0, 4.0, 16.0, 64.0].iter().map(|&l| detection_probability(12, l, eta).unwrap()).collect();
    assert!((p[0] - 0.05).abs() < 1e-9);
    assert!(p.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn strong_energy_anomaly_separates_for_energy_methods() {
    let spec = ScenarioSpec {
        frame_length: 256,
        frames: 80,
        onset_frame: 40,
        anomaly: AnomalySpec::MeanShift { energy_scale: 2.0 },
        ..ScenarioSpec::benchmark(4)
    };
    let opts = HarnessOptions { features: small(), train_frames: 120, ..Default::default() };
    let rows = ablation_harness(&spec, &[Method::WptOnly, Method::SecondOrder], &opts).unwrap();
    for r in rows {
        assert!(r.roc_auc > 0.95, "{}: {}", r.method, r.roc_auc);
        assert!(r.f1 > 0.9 && r.f1 <= 1.0);
    }
}

#[test]
fn fused_stream_averages_noise() {
    let spec = ScenarioSpec {
        frame_length: 256,
        frames: 20,
        structure: StructureSpec::default(),
        anomaly: AnomalySpec::None,
        onset_frame: 0,
        ..ScenarioSpec::benchmark(2)
    };
    let var = |frames: &[Vec<f64>]| {
        let all: Vec<f64> = frames.concat();
        all.iter().map(|x| x * x).sum::<f64>() / all.len() as f64
    };
    let single = var(&generate(&spec).unwrap().frames);
    let fused = var(&generate_fused(&spec).unwrap().frames);
    assert!((single - 1.0).abs() < 0.05, "{single}");
    assert!((fused - 0.5).abs() < 0.05, "{fused}");
}

#[test]
fn scoring_is_deterministic() {
    let spec = ScenarioSpec { frame_length: 256, frames: 30, onset_frame: 15, ..ScenarioSpec::benchmark(8) };
    let opts = HarnessOptions { features: small(), train_frames: 60, ..Default::default() };
    let a = score_method(Method::WptHos, &spec, &opts).unwrap();
    let b = score_method(Method::WptHos, &spec, &opts).unwrap();
    assert_eq!(a, b);
    let auc = roc_curve(&a).unwrap().auc;
    assert!((0.0..=1.0).contains(&auc));
}
