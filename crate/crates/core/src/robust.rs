//! RANSAC over image curves with per-structure reprojection errors.

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::sample_rng;
use crate::camera::ImagePoint;
use crate::poly::TrackerConfig;
use crate::solvers::{
    solve, Candidate, Measurement, Motion, ObservationSet, ProblemSpec, SolverError, Structure, StructureClass,
};

#[derive(Debug, Error)]
pub enum RobustError {
    #[error("endpoint planes coincide")]
    DegenerateEndpoints,
    #[error("line through the endpoints is not determined")]
    SingularLineSolve,
    #[error("center point does not fix the line")]
    ZeroDenominator,
    #[error("no minimal sample produced a model")]
    NoValidModel,
    #[error("curve has {got} points, needs {needed}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("no reprojection error for '{0}'")]
    Unsupported(String),
    #[error("need {needed} curves, got {got}")]
    NotEnoughCurves { needed: usize, got: usize },
    #[error("model does not match the error model")]
    ModelMismatch,
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Projective point `[x : y : 1]`.
fn hom(u: &ImagePoint) -> Vector3<f64> {
    Vector3::new(u.x, u.y, 1.0)
}

/// Height of the image line `l` on scanline `x`, if it crosses it.
fn height_on_scanline(l: &Vector3<f64>, x: f64) -> Option<f64> {
    // u = r × l with r = (1, 0, −x)
    (l[1].abs() > 1e-14 * l.norm()).then(|| (-x * l[0] - l[2]) / l[1])
}

/// Mean scanline distance between `pts` and the curve traced by `line_at`,
/// skipping the indices in `skip`.
fn mean_error(pts: &[ImagePoint], skip: &[usize], line_at: impl Fn(f64) -> Vector3<f64>) -> f64 {
    let mut total = 0.0;
    let mut n = 0;
    for (j, u) in pts.iter().enumerate() {
        if skip.contains(&j) {
            continue;
        }
        total += match height_on_scanline(&line_at(u.x), u.x) {
            Some(y) => (u.y - y).abs(),
            None => f64::INFINITY,
        };
        n += 1;
    }
    total / n as f64
}

fn need(pts: &[ImagePoint], n: usize) -> Result<(), RobustError> {
    if pts.len() < n {
        return Err(RobustError::TooFewPoints {
            needed: n,
            got: pts.len(),
        });
    }
    Ok(())
}

/// Reprojection error of a curve under a rotating camera `A(x) = x·a1`.
///
/// The plane of the line is fixed by the first and last points; the error is
/// the mean distance of the interior points, in image units.
pub fn reproj_error_d0delta1(pts: &[ImagePoint], a1: &Vector3<f64>) -> Result<f64, RobustError> {
    need(pts, 3)?;
    let cam = Motion::Rotation { a1: *a1 }.camera();
    let n = pts.len();
    let m1 = cam.rotation(pts[0].x).transpose() * hom(&pts[0]);
    let mn = cam.rotation(pts[n - 1].x).transpose() * hom(&pts[n - 1]);
    let q = m1.cross(&mn);
    if q.norm() <= 1e-12 * m1.norm() * mn.norm() {
        return Err(RobustError::DegenerateEndpoints);
    }
    Ok(mean_error(pts, &[0, n - 1], |x| cam.rotation(x) * q))
}

/// Image line of the world line through `l` with direction `delta` seen
/// from `c` by a translating camera.
fn translated_image(l: &Vector3<f64>, delta: &Vector3<f64>, c: &Vector3<f64>) -> Vector3<f64> {
    delta.cross(&(l - c))
}

/// Reprojection error of a curve under `C(x) = x·v` for a line of direction
/// `delta`, with the line fixed by the first and last points.
pub fn reproj_error_d1_parallel(
    pts: &[ImagePoint],
    v: &Vector3<f64>,
    delta: &Vector3<f64>,
) -> Result<f64, RobustError> {
    need(pts, 3)?;
    let n = pts.len();
    let dx = delta.cross_matrix();
    let row = |u: &ImagePoint| (hom(u).transpose() * dx).transpose();
    let (r1, rn) = (row(&pts[0]), row(&pts[n - 1]));
    let a = Matrix3::from_rows(&[r1.transpose(), rn.transpose(), Vector3::x().transpose()]);
    let b = Vector3::new(r1.dot(&(v * pts[0].x)), rn.dot(&(v * pts[n - 1].x)), 0.0);
    let sv = a.singular_values();
    if sv.min() <= 1e-12 * sv.max() {
        return Err(RobustError::SingularLineSolve);
    }
    let l = a.lu().solve(&b).ok_or(RobustError::SingularLineSolve)?;
    Ok(mean_error(pts, &[0, n - 1], |x| translated_image(&l, delta, &(v * x))))
}

/// Reprojection error of a curve under `C(x) = x·v` for a line
/// `P₀ + λ P_d` with `P₀ = (0, 0, 1)` and direction `delta`; λ is fixed by
/// the middle point.
pub fn reproj_error_d1_pc(
    pts: &[ImagePoint],
    v: &Vector3<f64>,
    delta: &Vector3<f64>,
    pd: &Vector3<f64>,
) -> Result<f64, RobustError> {
    let (lambda, c) = coplanar_lambda(pts, v, delta, pd)?;
    let l = Vector3::z() + pd * lambda;
    Ok(mean_error(pts, &[c], |x| translated_image(&l, delta, &(v * x))))
}

/// λ of the coplanar line through the middle point, with that point's index.
pub fn coplanar_lambda(
    pts: &[ImagePoint],
    v: &Vector3<f64>,
    delta: &Vector3<f64>,
    pd: &Vector3<f64>,
) -> Result<(f64, usize), RobustError> {
    need(pts, 2)?;
    let c = pts.len().div_ceil(2) - 1;
    let u = hom(&pts[c]);
    let w = u.transpose() * delta.cross_matrix();
    let den = w.dot(&pd.transpose());
    if den.abs() <= 1e-12 * u.norm() * delta.norm() * pd.norm() {
        return Err(RobustError::ZeroDenominator);
    }
    let num = w.dot(&(v * pts[c].x - Vector3::z()).transpose());
    Ok((num / den, c))
}

/// Which reprojection error scores a problem's models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorModel {
    Rotation,
    Parallel,
    Coplanar,
}

impl ErrorModel {
    pub fn for_spec(spec: &ProblemSpec) -> Result<Self, RobustError> {
        match (spec.d, spec.delta, spec.structure_class, &spec.measurement) {
            (0, 1, StructureClass::Generic, Measurement::LinePoints) => Ok(Self::Rotation),
            (1, 0, StructureClass::Parallel, Measurement::LinePoints) => Ok(Self::Parallel),
            (1, 0, StructureClass::ParallelCoplanar, Measurement::LinePoints) => Ok(Self::Coplanar),
            _ => Err(RobustError::Unsupported(spec.label.clone())),
        }
    }

    /// Error of `pts` under a solver candidate, in image units.
    pub fn error(&self, pts: &[ImagePoint], model: &Candidate) -> Result<f64, RobustError> {
        match (self, &model.motion, &model.structure) {
            (Self::Rotation, Motion::Rotation { a1 }, _) => reproj_error_d0delta1(pts, a1),
            (Self::Parallel, Motion::Translation { coeffs }, Structure::ParallelLines { direction, .. }) => {
                reproj_error_d1_parallel(pts, &coeffs[0], direction)
            }
            (Self::Coplanar, Motion::Translation { coeffs }, Structure::CoplanarLines { direction, pd_z, .. }) => {
                reproj_error_d1_pc(pts, &coeffs[0], direction, &Vector3::new(0.0, 1.0, *pd_z))
            }
            _ => Err(RobustError::ModelMismatch),
        }
    }
}

/// Inlier thresholds in pixels per error model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub rotation: f64,
    pub parallel: f64,
    pub coplanar: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            rotation: 0.4,
            parallel: 1.0,
            coplanar: 7.0,
        }
    }
}

impl Thresholds {
    pub fn get(&self, model: ErrorModel) -> f64 {
        match model {
            ErrorModel::Rotation => self.rotation,
            ErrorModel::Parallel => self.parallel,
            ErrorModel::Coplanar => self.coplanar,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub iterations: usize,
    pub thresholds: Thresholds,
    /// Pixels per image unit, used to compare errors with the thresholds.
    pub focal: f64,
    pub rng_seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            thresholds: Thresholds::default(),
            focal: 768.0,
            rng_seed: 0,
        }
    }
}

/// Best model found by [`ransac`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RansacResult {
    pub spec: String,
    pub model: Candidate,
    pub inliers: Vec<bool>,
    /// Per-curve errors in pixels; `None` where the error is undefined.
    pub errors: Vec<Option<f64>>,
    pub n_inliers: usize,
    pub total_inlier_error: f64,
    /// Iteration that first produced the model.
    pub iteration: usize,
    /// Distinct minimal samples that were solved.
    pub solved_samples: usize,
}

/// Indices `0, …, n−1` of `len` points spread from first to last.
pub fn spread_indices(len: usize, n: usize) -> Vec<usize> {
    if n == 1 {
        return vec![len / 2];
    }
    (0..n)
        .map(|k| ((k * (len - 1)) as f64 / (n - 1) as f64).round() as usize)
        .collect()
}

struct Scored {
    errors: Vec<Option<f64>>,
    inliers: Vec<bool>,
    n_inliers: usize,
    total: f64,
}

fn score_model(curves: &[Vec<ImagePoint>], model: &Candidate, kind: ErrorModel, cfg: &RansacConfig) -> Scored {
    let threshold = cfg.thresholds.get(kind);
    let errors: Vec<Option<f64>> = curves
        .iter()
        .map(|c| kind.error(c, model).ok().map(|e| e * cfg.focal).filter(|e| e.is_finite()))
        .collect();
    let inliers: Vec<bool> = errors.iter().map(|e| e.is_some_and(|e| e < threshold)).collect();
    let total = errors
        .iter()
        .zip(&inliers)
        .filter(|(_, &i)| i)
        .map(|(e, _)| e.unwrap_or(0.0))
        .sum();
    Scored {
        n_inliers: inliers.iter().filter(|&&i| i).count(),
        errors,
        inliers,
        total,
    }
}

/// Draws minimal samples of curves, solves each and keeps the model with
/// the most inliers; ties go to the lower total inlier error, then to the
/// earlier iteration.
pub fn ransac(curves: &[Vec<ImagePoint>], spec: &ProblemSpec, cfg: &RansacConfig) -> Result<RansacResult, RobustError> {
    let kind = ErrorModel::for_spec(spec)?;
    let k = spec.lines.len();
    if curves.len() < k {
        return Err(RobustError::NotEnoughCurves {
            needed: k,
            got: curves.len(),
        });
    }
    let tracker = TrackerConfig {
        rng_seed: cfg.rng_seed,
        ..TrackerConfig::default()
    };
    // the same ordered sample always yields the same models
    let mut memo: HashMap<Vec<usize>, Vec<Candidate>> = HashMap::new();
    let mut best: Option<(RansacResult, f64)> = None;
    for it in 0..cfg.iterations {
        let mut rng = sample_rng(cfg.rng_seed, it as u64);
        let picked = sample(&mut rng, curves.len(), k).into_vec();
        if picked.iter().zip(&spec.lines).any(|(&c, &n)| curves[c].len() < n) {
            continue;
        }
        let models = memo.entry(picked.clone()).or_insert_with(|| {
            let obs = ObservationSet::Lines(
                picked
                    .iter()
                    .zip(&spec.lines)
                    .map(|(&c, &n)| spread_indices(curves[c].len(), n).into_iter().map(|j| curves[c][j]).collect())
                    .collect(),
            );
            match solve(spec, &obs, &tracker) {
                Ok(sol) => sol.candidates.into_iter().filter(|c| c.real).collect(),
                Err(e) => {
                    log::debug!("sample {picked:?}: {e}");
                    Vec::new()
                }
            }
        });
        for model in models.iter() {
            let s = score_model(curves, model, kind, cfg);
            let better = match &best {
                None => true,
                Some((b, total)) => s.n_inliers > b.n_inliers || (s.n_inliers == b.n_inliers && s.total < *total),
            };
            if better {
                best = Some((
                    RansacResult {
                        spec: spec.label.clone(),
                        model: model.clone(),
                        inliers: s.inliers,
                        errors: s.errors,
                        n_inliers: s.n_inliers,
                        total_inlier_error: s.total,
                        iteration: it,
                        solved_samples: 0,
                    },
                    s.total,
                ));
            }
        }
    }
    let (mut out, _) = best.ok_or(RobustError::NoValidModel)?;
    out.solved_samples = memo.len();
    Ok(out)
}
