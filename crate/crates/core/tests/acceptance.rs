//! Acceptance suite: one pass/fail line per criterion, tolerances pinned here.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{Vector3, Vector4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use rs_sfm_core::bench::{
    recall_curve, run_experiment, sample_planted_curves, sample_rng, sample_scene, score_candidates,
};
use rs_sfm_core::camera::{line_curve_factorization, scanline_poly, PluckerLine, RSCamera};
use rs_sfm_core::curvespace::{
    linear_map_d1delta0, plane_rep, plane_rep_d0, plucker_distance, recover_rotation, recover_rotation_d0,
    triangulate_d1delta0, CurveError, CurveHD,
};
use rs_sfm_core::poly::{uni_roots, UniPoly};
use rs_sfm_core::solvers::{catalog, lookup, solve_lines_with};
use rs_sfm_core::{ransac, BenchConfig, LineStrategy, Motion, RansacConfig, TrackerConfig};

struct Outcome {
    pass: bool,
    detail: String,
    /// Advisory criteria report but never fail the suite.
    advisory: bool,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome {
        pass,
        detail,
        advisory: false,
    }
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> Vector3<f64> {
    let n = Normal::new(0.0, sigma).unwrap();
    Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng))
}

fn random_camera(rng: &mut ChaCha8Rng, d: usize, delta: usize) -> RSCamera {
    let c: Vec<Vector3<f64>> = (0..=d).map(|_| gauss(rng, 0.5)).collect();
    let a: Vec<Vector3<f64>> = (0..=delta).map(|_| gauss(rng, 0.5)).collect();
    RSCamera::from_coeffs(&c, &a)
}

fn random_line(rng: &mut ChaCha8Rng) -> PluckerLine {
    PluckerLine::through(&(gauss(rng, 1.0) + Vector3::z() * 3.0), &(gauss(rng, 1.0) + Vector3::z() * 3.0))
}

fn distinct_count(roots: &[rs_sfm_core::C64]) -> usize {
    let scale = 1.0 + roots.iter().fold(0.0f64, |m, r| m.max(r.norm()));
    let mut kept: Vec<rs_sfm_core::C64> = Vec::new();
    for r in roots {
        if kept.iter().all(|k| (k - r).norm() > 1e-6 * scale) {
            kept.push(*r);
        }
    }
    kept.len()
}

const GRID: [(usize, usize); 9] = [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2), (2, 0), (2, 1), (2, 2)];

fn order_theorem() -> Outcome {
    let t0 = Instant::now();
    let mut worst = 1.0f64;
    for (d, delta) in GRID {
        let mut rng = sample_rng(101, (d * 3 + delta) as u64);
        let mut good = 0;
        for _ in 0..100 {
            let cam = random_camera(&mut rng, d, delta);
            let x = Vector4::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(1.0..5.0), 1.0);
            let p = scanline_poly(&cam, &x);
            let order = 1 + d + 2 * delta;
            if p.degree() == order && uni_roots(&p).is_ok_and(|r| distinct_count(&r) == order) {
                good += 1;
            }
        }
        worst = worst.min(good as f64 / 100.0);
    }
    let dt = t0.elapsed();
    outcome(
        worst >= 0.99 && dt < Duration::from_secs(10),
        format!("min fraction {worst:.2} (need >= 0.99), {:.2}s (need < 10s)", dt.as_secs_f64()),
    )
}

fn curve_structure() -> Outcome {
    let t0 = Instant::now();
    let mut max_rem = 0.0f64;
    let mut wrong_degree = 0;
    for (d, delta) in GRID {
        let mut rng = sample_rng(202, (d * 3 + delta) as u64);
        for _ in 0..100 {
            let cam = random_camera(&mut rng, d, delta);
            let f = line_curve_factorization(&cam, &random_line(&mut rng));
            max_rem = max_rem.max(f.remainder_u0).max(f.remainder_u1);
            if f.common.degree() != d + 2 * delta {
                wrong_degree += 1;
            }
        }
    }
    let dt = t0.elapsed();
    outcome(
        max_rem < 1e-9 && wrong_degree == 0 && dt < Duration::from_secs(10),
        format!(
            "max remainder {max_rem:.1e} (need < 1e-9), {wrong_degree} wrong degrees, {:.2}s",
            dt.as_secs_f64()
        ),
    )
}

fn root_sum(cam: &RSCamera, x: &Vector4<f64>) -> f64 {
    uni_roots(&scanline_poly(cam, x)).unwrap().iter().map(|r| r.re).sum()
}

fn equal_x_sums() -> Outcome {
    let mut rng = sample_rng(303, 0);
    let mut worst_agree = 0.0f64;
    let mut smallest_gap = f64::INFINITY;
    for _ in 0..100 {
        for (d, delta, agree) in [(2, 1, true), (1, 1, false)] {
            let cam = random_camera(&mut rng, d, delta);
            let sums: Vec<f64> = (0..3)
                .map(|_| {
                    let x = Vector4::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(1.0..5.0), 1.0);
                    root_sum(&cam, &x)
                })
                .collect();
            let spread = sums.iter().fold(f64::MIN, |m, s| m.max(*s)) - sums.iter().fold(f64::MAX, |m, s| m.min(*s));
            if agree {
                worst_agree = worst_agree.max(spread);
            } else {
                smallest_gap = smallest_gap.min(spread);
            }
        }
    }
    outcome(
        worst_agree < 1e-9 && smallest_gap > 1e-3,
        format!("d=2 spread {worst_agree:.1e} (need < 1e-9), d=1 spread >= {smallest_gap:.1e} (need > 1e-3)"),
    )
}

fn plane_representation() -> Outcome {
    let mut rng = sample_rng(404, 0);
    let mut span = 0.0f64;
    let mut round1 = 0.0f64;
    let mut round23 = 0.0f64;
    let mut failures = 0;
    let mut draws = 0;
    while draws < 100 {
        let a1 = gauss(&mut rng, 0.5);
        if a1[2].abs() <= 0.05 {
            continue;
        }
        draws += 1;
        let Ok(rep) = plane_rep_d0(&a1) else {
            failures += 1;
            continue;
        };
        let cam = RSCamera::from_coeffs(&[Vector3::zeros()], &[Vector3::zeros(), a1]);
        let curve = CurveHD::from_line(&cam, &random_line(&mut rng)).unwrap();
        span = span.max(rep.span_residual(&curve.vector()));
        match recover_rotation_d0(&rep) {
            Ok(back) => round1 = round1.max((back - a1).amax()),
            Err(_) => failures += 1,
        }
        for delta in [2usize, 3] {
            let coeffs: Vec<Vector3<f64>> = std::iter::once(a1).chain((1..delta).map(|_| gauss(&mut rng, 0.3))).collect();
            match plane_rep(&coeffs).and_then(|r| recover_rotation(&r)) {
                Ok(back) => {
                    for (b, c) in back.iter().zip(&coeffs) {
                        round23 = round23.max((b - c).amax());
                    }
                }
                Err(_) => failures += 1,
            }
        }
    }
    outcome(
        span < 1e-9 && round1 < 1e-8 && round23 < 1e-7 && failures == 0,
        format!(
            "span residual {span:.1e} (< 1e-9), δ=1 roundtrip {round1:.1e} (< 1e-8), δ=2,3 roundtrip {round23:.1e} (< 1e-7), {failures} failures"
        ),
    )
}

fn triangulation() -> Outcome {
    let mut rng = sample_rng(505, 0);
    let mut worst = 0.0f64;
    let mut failures = 0;
    let mut draws = 0;
    while draws < 100 {
        let v = gauss(&mut rng, 0.5);
        if v[2].abs() <= 0.05 {
            continue;
        }
        draws += 1;
        let cam = RSCamera::from_coeffs(&[Vector3::zeros(), v], &[Vector3::zeros()]);
        let line = random_line(&mut rng);
        let curve = linear_map_d1delta0(&cam).unwrap().apply(&line).unwrap();
        match triangulate_d1delta0(&cam, &curve) {
            Ok(back) => worst = worst.max(plucker_distance(&back, &line)),
            Err(_) => failures += 1,
        }
    }
    // curves on the Ξ = 0 hyperplane
    let mut degenerate_ok = 0;
    for _ in 0..10 {
        let v = gauss(&mut rng, 0.5) + Vector3::z();
        let (a, b, c) = (v[0], v[1], v[2]);
        // layout [Z0, Z1, Z2, Y0, Y1]
        let w = [c * c, a * c, a * a, -b * c, -a * b];
        let ww: f64 = w.iter().map(|x| x * x).sum();
        let r: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dot: f64 = r.iter().zip(&w).map(|(x, y)| x * y).sum();
        let p: Vec<f64> = r.iter().zip(&w).map(|(x, y)| x - dot / ww * y).collect();
        let curve = CurveHD::new(p[..3].to_vec(), p[3..].to_vec()).unwrap();
        let cam = RSCamera::from_coeffs(&[Vector3::zeros(), v], &[Vector3::zeros()]);
        if matches!(triangulate_d1delta0(&cam, &curve), Err(CurveError::DegenerateXi)) {
            degenerate_ok += 1;
        }
    }
    outcome(
        worst < 1e-9 && failures == 0 && degenerate_ok == 10,
        format!("roundtrip {worst:.1e} (need < 1e-9), {failures} failures, degenerate flagged {degenerate_ok}/10"),
    )
}

fn point_solvers() -> Outcome {
    let mut worst = 0.0f64;
    let mut failures = 0;
    for label in ["d1[2×2]", "d2[2×3]", "d3[8×2]"] {
        let spec = lookup(label).unwrap();
        let cfg = BenchConfig {
            spec: spec.label.clone(),
            ..BenchConfig::default()
        };
        for i in 0..100 {
            let scene = sample_scene(&cfg, &spec, &mut sample_rng(606, i)).unwrap();
            match rs_sfm_core::solve(&spec, &scene.obs, &TrackerConfig::default()) {
                Ok(sol) => match score_candidates(&sol, &scene).projective_error {
                    Some(e) => worst = worst.max(e),
                    None => failures += 1,
                },
                Err(_) => failures += 1,
            }
        }
    }
    let roots = uni_roots(&UniPoly::new(vec![7.5, 11.0, -7.5, 1.0])).unwrap();
    let mut re: Vec<f64> = roots.iter().map(|r| r.re).collect();
    re.sort_by(f64::total_cmp);
    let cubic = re
        .iter()
        .zip([-0.5, 3.0, 5.0])
        .map(|(a, b)| (a - b).abs())
        .chain(roots.iter().map(|r| r.im.abs()))
        .fold(0.0, f64::max);
    outcome(
        worst < 1e-8 && failures == 0 && cubic < 1e-10,
        format!("projective error {worst:.1e} (need < 1e-8), {failures} failures, cubic roots off by {cubic:.1e}"),
    )
}

fn homotopy_degrees() -> Outcome {
    let t0 = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    for label in ["δ1(5)", "δ1(4,3)", "δ1(3³)", "d1(4,3)P", "d1(3³)P", "d1(2⁵)PC"] {
        let spec = lookup(label).unwrap();
        let cfg = BenchConfig {
            spec: spec.label.clone(),
            ..BenchConfig::default()
        };
        let mut exact = 0;
        let mut truth_missed = 0;
        for i in 0..20 {
            let scene = sample_scene(&cfg, &spec, &mut sample_rng(707, i)).unwrap();
            let tracker = TrackerConfig {
                rng_seed: i,
                ..TrackerConfig::default()
            };
            let Ok(sol) = solve_lines_with(&spec, &scene.obs, &tracker, LineStrategy::MultiHomogeneous) else {
                continue;
            };
            let dg = &sol.diagnostics;
            if dg.distinct == spec.degree && sol.candidates.len() == spec.degree {
                exact += 1;
            }
            let no_failed_path = dg.converged + dg.diverged == dg.paths;
            if no_failed_path && !(score_candidates(&sol, &scene).worst() < 1e-6) {
                truth_missed += 1;
            }
        }
        pass &= exact >= 18 && truth_missed == 0;
        lines.push(format!("{label} {exact}/20"));
    }
    let dt = t0.elapsed();
    pass &= dt < Duration::from_secs(300);
    outcome(
        pass,
        format!("{} (need >= 18/20, truth found), {:.0}s (need < 300s)", lines.join(", "), dt.as_secs_f64()),
    )
}

fn noiseless_stability() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for spec in catalog().into_iter().filter(|s| s.implemented) {
        let cfg = BenchConfig {
            spec: spec.label.clone(),
            samples: 1000,
            rng_seed: 808,
            ..BenchConfig::default()
        };
        let results = run_experiment(&cfg).unwrap();
        let ok = results.iter().filter(|r| r.record.worst() < 1e-3).count();
        pass &= ok >= 900;
        parts.push(format!("{} {ok}", spec.label));
    }
    outcome(pass, format!("{} of 1000 (need >= 900)", parts.join(", ")))
}

fn noise_behavior() -> Outcome {
    let mut in_band = true;
    let mut monotone = true;
    let mut parts = Vec::new();
    let thresholds: Vec<f64> = (0..=180).map(f64::from).collect();
    for spec in catalog().into_iter().filter(|s| s.implemented && s.d == 1 && s.delta == 0 && s.lines.len() > 1) {
        let cfg = BenchConfig {
            spec: spec.label.clone(),
            samples: 1000,
            noise_sigma: 1.0,
            motion_norm: Some(0.2),
            rng_seed: 909,
            ..BenchConfig::default()
        };
        let results = run_experiment(&cfg).unwrap();
        let angles: Vec<Option<f64>> = results.iter().map(|r| r.record.velocity_angle.map(f64::to_degrees)).collect();
        let frac = angles.iter().filter(|a| a.is_some_and(|a| a < 20.0)).count() as f64 / angles.len() as f64;
        in_band &= (0.10..=0.40).contains(&frac);
        for metric in [
            angles.clone(),
            results.iter().map(|r| r.record.line_angle.map(f64::to_degrees)).collect(),
        ] {
            let curve = recall_curve(&metric, &thresholds).unwrap();
            monotone &= curve.windows(2).all(|w| w[1].1 >= w[0].1) && curve.iter().all(|c| (0.0..=1.0).contains(&c.1));
        }
        parts.push(format!("{} {frac:.3}", spec.label));
    }
    Outcome {
        pass: in_band && monotone,
        detail: format!(
            "velocity < 20°: {} (band [0.10, 0.40]), recall monotone {monotone}",
            parts.join(", ")
        ),
        advisory: true,
    }
}

fn ransac_planted() -> Outcome {
    let spec = lookup("δ1(5)").unwrap();
    let cfg = BenchConfig {
        spec: spec.label.clone(),
        ..BenchConfig::default()
    };
    let mut good = 0;
    for run in 0..50u64 {
        let planted = sample_planted_curves(&cfg, &spec, 7, 3, 10, &mut sample_rng(1010, run)).unwrap();
        let rc = RansacConfig {
            iterations: 1000,
            rng_seed: run,
            ..RansacConfig::default()
        };
        let Ok(result) = ransac(&planted.curves, &spec, &rc) else {
            continue;
        };
        let truth = planted.camera.rotation_coeff(1);
        let recovered = match &result.model.motion {
            Motion::Rotation { a1 } => (a1 - truth).amax() < 1e-6 * (1.0 + truth.amax()),
            _ => false,
        };
        if recovered && result.n_inliers == 7 && result.inliers == planted.inliers {
            good += 1;
        }
    }
    outcome(good >= 48, format!("{good}/50 runs exact (need >= 48)"))
}

fn main() -> ExitCode {
    // the test harness passes flags such as --nocapture; a filter argument
    // restricts the run to the named criteria
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "order theorem", order_theorem),
        (2, "image-curve structure", curve_structure),
        (3, "equal scanline sums", equal_x_sums),
        (4, "plane representation", plane_representation),
        (5, "triangulation", triangulation),
        (6, "degree-one point solvers", point_solvers),
        (7, "homotopy solver degrees", homotopy_degrees),
        (8, "noiseless stability", noiseless_stability),
        (9, "noise behavior", noise_behavior),
        (10, "RANSAC planted inliers", ransac_planted),
    ];
    let mut failed = false;
    for (n, name, run) in criteria {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let t0 = Instant::now();
        let o = run();
        let tag = match (o.pass, o.advisory) {
            (true, _) => "PASS",
            (false, true) => "FAIL (advisory)",
            (false, false) => "FAIL",
        };
        println!("criterion {n:>2} {tag}: {name}: {} [{:.1}s]", o.detail, t0.elapsed().as_secs_f64());
        failed |= !o.pass && !o.advisory;
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
