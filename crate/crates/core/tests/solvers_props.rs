use rs_sfm_core::bench::{candidate_vector, point_truth_vector, projective_distance, sample_rng, sample_scene};
use rs_sfm_core::poly::eval_and_jacobian;
use rs_sfm_core::solvers::{
    assemble_constraints, catalog, decode_solution, encode_solution, lookup, solve, solve_points_linear, to_complex,
    Measurement, Motion, ObservationSet, PointObs, SolverError,
};
use rs_sfm_core::{BenchConfig, TrackerConfig};

fn cfg_for(label: &str) -> BenchConfig {
    BenchConfig {
        spec: label.to_string(),
        ..BenchConfig::default()
    }
}

#[test]
fn catalog_is_balanced_with_expected_degrees() {
    let all = catalog();
    assert!(all.iter().all(|s| s.is_balanced()), "unbalanced catalog entry");
    for (label, degree) in [
        ("δ1(5)", 10),
        ("δ1(4,3)", 30),
        ("δ1(3³)", 54),
        ("d1(4,3)P", 2),
        ("d1(3³)P", 5),
        ("d1(2⁵)PC", 10),
    ] {
        let spec = lookup(label).unwrap();
        assert_eq!(spec.degree, degree, "{label}");
        assert!(spec.implemented, "{label}");
    }
    assert_eq!(all.iter().filter(|s| s.implemented).count(), 13);
    assert!(matches!(lookup("nonsense"), Err(SolverError::UnknownLabel(_))));
}

#[test]
fn system_sizes() {
    for (label, n) in [("δ1(5)", 5), ("d1(3³)P", 9)] {
        let spec = lookup(label).unwrap();
        let scene = sample_scene(&cfg_for(label), &spec, &mut sample_rng(1, 0)).unwrap();
        let sys = assemble_constraints(&spec, &scene.obs).unwrap();
        assert_eq!(sys.n_unknowns(), n, "{label}");
        assert_eq!(sys.equations().len(), n, "{label}");
    }
}

#[test]
fn constraints_vanish_at_truth() {
    for spec in catalog()
        .into_iter()
        .filter(|s| s.implemented && s.measurement == Measurement::LinePoints)
    {
        for i in 0..5 {
            let scene = sample_scene(&cfg_for(&spec.label), &spec, &mut sample_rng(2, i)).unwrap();
            let (motion, structure) = scene.truth.clone().unwrap();
            let x = encode_solution(&spec, &motion, &structure).unwrap();
            let (m2, s2) = decode_solution(&spec, &x);
            assert_eq!(encode_solution(&spec, &m2, &s2).unwrap(), x, "{}", spec.label);
            let sys = assemble_constraints(&spec, &scene.obs).unwrap();
            let (f, _) = eval_and_jacobian(&sys, &to_complex(&x));
            let worst = f.iter().map(|v| v.norm()).fold(0.0, f64::max);
            assert!(worst < 1e-10, "{}: residual {worst:.1e}", spec.label);
        }
    }
}

#[test]
fn translation_solvers_respect_gauge() {
    for label in ["d1(4,3)P", "d1(2⁵)PC"] {
        let spec = lookup(label).unwrap();
        let scene = sample_scene(&cfg_for(label), &spec, &mut sample_rng(3, 0)).unwrap();
        let sol = solve(&spec, &scene.obs, &TrackerConfig::default()).unwrap();
        assert!(!sol.candidates.is_empty());
        for c in &sol.candidates {
            match &c.motion {
                Motion::Translation { coeffs } => assert_eq!(coeffs[0][0], 0.0, "{label}"),
                other => panic!("{label}: unexpected motion {other:?}"),
            }
        }
    }
}

#[test]
fn rotation_solver_finds_truth() {
    let spec = lookup("δ1(5)").unwrap();
    for i in 0..5 {
        let scene = sample_scene(&cfg_for(&spec.label), &spec, &mut sample_rng(4, i)).unwrap();
        let sol = solve(&spec, &scene.obs, &TrackerConfig::default()).unwrap();
        let Some((Motion::Rotation { a1 }, _)) = &scene.truth else {
            panic!("rotation truth expected")
        };
        assert!(sol
            .real_candidates()
            .any(|c| matches!(&c.motion, Motion::Rotation { a1: b } if (b - a1).amax() < 1e-6)));
    }
}

/// Every coordinate scaled by `1 ± eps` with a fixed sign pattern.
fn perturb(obs: &ObservationSet, eps: f64) -> ObservationSet {
    let ObservationSet::Points(pts) = obs else {
        return obs.clone();
    };
    let mut k = 0usize;
    let mut sign = || {
        k += 1;
        if k.count_ones() % 2 == 0 { 1.0 } else { -1.0 }
    };
    ObservationSet::Points(
        pts.iter()
            .map(|p| {
                p.iter()
                    .map(|o| PointObs {
                        x: o.x.map(|x| x * (1.0 + eps * sign())),
                        y: o.y * (1.0 + eps * sign()),
                    })
                    .collect()
            })
            .collect(),
    )
}

fn output_shift(obs: &ObservationSet, d: usize, eps: f64) -> (f64, f64) {
    let a = solve_points_linear(obs, d).unwrap();
    let b = solve_points_linear(&perturb(obs, eps), d).unwrap();
    let moved = projective_distance(&candidate_vector(&a.candidates[0]), &candidate_vector(&b.candidates[0]));
    (moved, b.candidates[0].residual)
}

#[test]
fn linear_point_solvers_are_well_conditioned() {
    let eps = 1e-8;
    for label in ["d1[2×2]", "d2[2×3]", "d3[8×2]"] {
        let spec = lookup(label).unwrap();
        for i in 0..10 {
            let scene = sample_scene(&cfg_for(label), &spec, &mut sample_rng(5, i)).unwrap();
            let exact = solve_points_linear(&scene.obs, spec.d).unwrap();
            assert!(projective_distance(&candidate_vector(&exact.candidates[0]), &point_truth_vector(&scene)) < 1e-8);
            let (moved, residual) = output_shift(&scene.obs, spec.d, eps);
            // the perturbed data is still solved exactly, so any shift is the
            // problem's own sensitivity
            assert!(residual < 1e-9, "{label}: residual {residual:.1e}");
            if spec.d == 1 {
                assert!(moved < 100.0 * eps, "{label}: output moved {moved:.1e}");
            }
            // continuity: the shift scales linearly with the perturbation
            let (smaller, _) = output_shift(&scene.obs, spec.d, eps / 10.0);
            let ratio = moved / smaller;
            assert!((ratio - 10.0).abs() < 1.0, "{label}: shift ratio {ratio:.2}");
        }
    }
}

#[test]
fn unimplemented_specs_are_refused() {
    let spec = catalog().into_iter().find(|s| !s.implemented).unwrap();
    let obs = ObservationSet::Lines(Vec::new());
    assert!(matches!(
        solve(&spec, &obs, &TrackerConfig::default()),
        Err(SolverError::Unimplemented { .. })
    ));
}
