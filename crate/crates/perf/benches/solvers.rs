use criterion::{black_box, criterion_group, criterion_main, Criterion};
use nalgebra::Vector3;
use rs_sfm_core::bench::{sample_planted_curves, sample_rng};
use rs_sfm_core::camera::{project_point, RSCamera};
use rs_sfm_core::solvers::{solve_lines_with, solve_points_linear};
use rs_sfm_core::{lookup, ransac, BenchConfig, LineStrategy, RansacConfig, TrackerConfig};
use rs_sfm_perf::fixture;

fn line_solvers(c: &mut Criterion) {
    let mut g = c.benchmark_group("line_solvers");
    g.sample_size(10);
    for label in ["δ1(5)", "d1(4,3)P", "d1(3³)P", "d1(2⁵)PC"] {
        let scene = fixture(label, 1);
        let tracker = TrackerConfig::default();
        // warm the cached start instance outside the timing
        solve_lines_with(&scene.spec, &scene.obs, &tracker, LineStrategy::Parameter).expect("solvable");
        g.bench_function(format!("parameter {label}"), |b| {
            b.iter(|| solve_lines_with(&scene.spec, black_box(&scene.obs), &tracker, LineStrategy::Parameter))
        });
    }
    let scene = fixture("δ1(5)", 1);
    g.bench_function("multi-homogeneous δ1(5)", |b| {
        b.iter(|| {
            solve_lines_with(
                &scene.spec,
                black_box(&scene.obs),
                &TrackerConfig::default(),
                LineStrategy::MultiHomogeneous,
            )
        })
    });
    g.finish();
}

fn point_solvers(c: &mut Criterion) {
    for label in ["d1[2×2]", "d2[2×3]", "d3[8×2]"] {
        let scene = fixture(label, 1);
        c.bench_function(&format!("points {label}"), |b| {
            b.iter(|| solve_points_linear(black_box(&scene.obs), scene.spec.d))
        });
    }
}

fn projection(c: &mut Criterion) {
    let cam = RSCamera::from_coeffs(
        &[Vector3::zeros(), Vector3::new(0.1, -0.2, 0.05), Vector3::new(0.02, 0.01, -0.03)],
        &[Vector3::zeros(), Vector3::new(0.05, 0.1, -0.02)],
    );
    let p = nalgebra::Vector4::new(0.3, -0.2, 3.0, 1.0);
    c.bench_function("project_point d=2 δ=1", |b| b.iter(|| project_point(&cam, black_box(&p))));
}

fn robust(c: &mut Criterion) {
    let spec = lookup("δ1(5)").expect("cataloged problem");
    let cfg = BenchConfig {
        spec: spec.label.clone(),
        ..BenchConfig::default()
    };
    let planted = sample_planted_curves(&cfg, &spec, 7, 3, 10, &mut sample_rng(3, 0)).expect("curves");
    let mut g = c.benchmark_group("ransac");
    g.sample_size(10);
    g.bench_function("δ1(5) 10 curves", |b| {
        b.iter(|| ransac(black_box(&planted.curves), &spec, &RansacConfig::default()))
    });
    g.finish();
}

criterion_group!(benches, line_solvers, point_solvers, projection, robust);
criterion_main!(benches);
