//! Shared fixtures for the criterion benchmarks.

use noisesig_core::synth::{generate, ScenarioSpec};

/// Frames of the default benchmark scenario.
pub fn benchmark_frames(frames: usize, seed: u64) -> Vec<Vec<f64>> {
    let spec = ScenarioSpec { frames, onset_frame: frames / 2, ..ScenarioSpec::benchmark(seed) };
    generate(&spec).expect("benchmark scenario is valid").frames
}
