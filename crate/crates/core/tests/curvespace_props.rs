use nalgebra::{DMatrix, Vector3, Vector6};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rs_sfm_core::camera::{ImagePoint, PluckerLine, RSCamera};
use rs_sfm_core::curvespace::{
    eval_curve, fit_curve, linear_map_d1delta0, parabola_fit, plane_rep, plane_rep_d0, plucker_distance,
    recover_rotation, recover_rotation_d0, triangulate_d1delta0, CurveError, CurveHD,
};

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-r..r).prop_map(Vector3::from)
}

fn line() -> impl Strategy<Value = PluckerLine> {
    (vec3(1.0), vec3(1.0)).prop_map(|(a, b)| PluckerLine::through(&(a + Vector3::z() * 3.0), &(b + Vector3::z() * 3.0)))
}

fn translation_camera() -> impl Strategy<Value = RSCamera> {
    vec3(0.5)
        .prop_filter("forward motion", |v| v[2].abs() > 0.05)
        .prop_map(|v| RSCamera::from_coeffs(&[Vector3::zeros(), v], &[Vector3::zeros()]))
}

fn rotation_path(delta: usize) -> impl Strategy<Value = Vec<Vector3<f64>>> {
    (vec3(0.5).prop_filter("γ₁ away from zero", |a| a[2].abs() > 0.05), prop::collection::vec(vec3(0.3), delta - 1))
        .prop_map(|(a1, rest)| std::iter::once(a1).chain(rest).collect())
}

fn rank(m: &DMatrix<f64>, rel: f64) -> usize {
    let sv = m.singular_values();
    let smax = sv.max();
    sv.iter().filter(|s| **s > rel * smax).count()
}

/// Samples of `curve` on `n` scanlines spread over [−1, 1].
fn samples(curve: &CurveHD, n: usize) -> Vec<ImagePoint> {
    (0..n)
        .filter_map(|i| {
            let x = -1.0 + 2.0 * (i as f64 + 0.37) / n as f64;
            eval_curve(curve, x).ok().map(|y| ImagePoint::new(x, y))
        })
        .collect()
}

proptest! {
    #[test]
    fn fit_recovers_generic_curve(d in 1usize..4, z in prop::collection::vec(-1.0f64..1.0, 4), y in prop::collection::vec(0.2f64..1.0, 3)) {
        let curve = CurveHD::new(z[..=d].to_vec(), y[..d].to_vec()).unwrap();
        let pts = samples(&curve, 2 * d + 1);
        prop_assume!(pts.len() == 2 * d + 1);
        // design matrix of the homogeneous fit has a one-dimensional kernel
        let a = DMatrix::from_fn(2 * d + 1, 2 * d + 1, |r, c| {
            let p = &pts[r];
            if c <= d { p.x.powi(c as i32) } else { -p.y * p.x.powi((c - d - 1) as i32) }
        });
        prop_assume!(a.singular_values().max() < 1e6);
        prop_assert_eq!(rank(&a, 1e-12), 2 * d);
        let fit = fit_curve(&pts, d).unwrap();
        prop_assert!(fit.curve.distance(&curve) < 1e-6, "distance {}", fit.curve.distance(&curve));
        prop_assert!(fit.residuals.iter().all(|r| r.abs() < 1e-9));
    }

    #[test]
    fn vector_roundtrip(d in 1usize..5, v in prop::collection::vec(-1.0f64..1.0, 9)) {
        let v = &v[..2 * d + 1];
        prop_assume!(v.iter().any(|c| c.abs() > 1e-3));
        let c = CurveHD::from_vector(d, v).unwrap();
        let back = CurveHD::from_vector(d, &c.vector()).unwrap();
        prop_assert!(c.distance(&back) < 1e-14);
        let n: f64 = c.vector().iter().map(|x| x * x).sum();
        prop_assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_images_lie_in_plane_rep(a in rotation_path(1), l in line()) {
        let rep = plane_rep_d0(&a[0]).unwrap();
        let cam = RSCamera::from_coeffs(&[Vector3::zeros()], &[Vector3::zeros(), a[0]]);
        let curve = CurveHD::from_line(&cam, &l).unwrap();
        prop_assert!(rep.span_residual(&curve.vector()) < 1e-9);
        let back = recover_rotation_d0(&rep).unwrap();
        prop_assert!((back - a[0]).amax() < 1e-8);
    }

    #[test]
    fn higher_rotation_roundtrip(a in (2usize..4).prop_flat_map(rotation_path)) {
        let back = recover_rotation(&plane_rep(&a).unwrap()).unwrap();
        prop_assert_eq!(back.len(), a.len());
        for (b, t) in back.iter().zip(&a) {
            prop_assert!((b - t).amax() < 1e-7);
        }
    }

    #[test]
    fn triangulation_inverts_linear_map(cam in translation_camera(), l in line()) {
        let map = linear_map_d1delta0(&cam).unwrap();
        prop_assert_eq!(map.rank(), 5);
        let curve = map.apply(&l).unwrap();
        // the map agrees with projecting the line directly
        prop_assert!(curve.distance(&CurveHD::from_line(&cam, &l).unwrap()) < 1e-9);
        let back = triangulate_d1delta0(&cam, &curve).unwrap();
        prop_assert!(plucker_distance(&back, &l) < 1e-9);
    }

    #[test]
    fn motion_line_spans_the_kernel(cam in translation_camera()) {
        let v = cam.center_coeff(1);
        let k = linear_map_d1delta0(&cam).unwrap().m * Vector6::new(0.0, 0.0, 0.0, v[0], v[1], v[2]);
        prop_assert!(k.amax() < 1e-15);
    }
}

/// Images of random lines under random cameras span the whole curve space.
#[test]
fn images_span_curve_space() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut v3 = || Vector3::from_fn(|_, _| rng.gen_range(-0.5..0.5));
    for d in 0..=2 {
        for delta in 0..=2 {
            if d + delta == 0 {
                continue;
            }
            let order = 1 + d + 2 * delta;
            let n = 2 * order + 1;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let c: Vec<Vector3<f64>> = (0..=d).map(|_| v3()).collect();
                    let a: Vec<Vector3<f64>> = (0..=delta).map(|_| v3()).collect();
                    let l = PluckerLine::through(&(v3() + Vector3::z() * 3.0), &(v3() + Vector3::z() * 3.0));
                    CurveHD::from_line(&RSCamera::from_coeffs(&c, &a), &l).unwrap().vector()
                })
                .collect();
            let m = DMatrix::from_fn(n, n, |r, c| rows[r][c]);
            assert_eq!(rank(&m, 1e-10), n, "d={d}, δ={delta}");
        }
    }
}

#[test]
fn fit_needs_enough_points() {
    let pts = [ImagePoint::new(0.0, 1.0), ImagePoint::new(1.0, 2.0), ImagePoint::new(2.0, 0.0)];
    assert!(matches!(fit_curve(&pts, 2), Err(CurveError::RankDeficient(_))));
}

#[test]
fn parabola_examples() {
    let sq: Vec<ImagePoint> = [-1.0, 0.0, 2.0].iter().map(|&x| ImagePoint::new(x, x * x)).collect();
    let (a, b, c) = parabola_fit(&sq).unwrap();
    assert!((a - 1.0).abs() < 1e-12 && b.abs() < 1e-12 && c.abs() < 1e-12);
    let lin: Vec<ImagePoint> = (0..6).map(|i| ImagePoint::new(i as f64, 2.0 * i as f64 + 1.0)).collect();
    let (a, b, c) = parabola_fit(&lin).unwrap();
    assert!(a.abs() < 1e-12 && (b - 2.0).abs() < 1e-12 && (c - 1.0).abs() < 1e-12);
    let same_x = [ImagePoint::new(1.0, 0.0), ImagePoint::new(1.0, 1.0), ImagePoint::new(1.0, 2.0)];
    assert!(parabola_fit(&same_x).is_err());
}
