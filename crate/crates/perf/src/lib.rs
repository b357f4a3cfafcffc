//! Fixtures shared by the benchmarks.

use rs_sfm_core::bench::{sample_rng, sample_scene, Scene};
use rs_sfm_core::{lookup, BenchConfig};

/// Noiseless scene of problem `label` drawn with `seed`.
pub fn fixture(label: &str, seed: u64) -> Scene {
    let spec = lookup(label).expect("cataloged problem");
    let cfg = BenchConfig {
        spec: spec.label.clone(),
        ..BenchConfig::default()
    };
    sample_scene(&cfg, &spec, &mut sample_rng(seed, 0)).expect("scene")
}
