//! Synthetic experiments: scene sampling, noise, error metrics, stability and
//! recall runs with CSV output.

use std::io::Write;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, UnitSphere};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{depth_at, line_point_at_scanline, project_line, project_point, ImagePoint, PluckerLine, RSCamera};
use crate::poly::TrackerConfig;
use crate::solvers::{
    lookup, solve, Candidate, Measurement, Motion, ObservationSet, PointObs, ProblemSpec, SolutionSet,
    SolverError, Structure, StructureClass,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no valid scene after {0} attempts")]
    SamplingExhausted(usize),
    #[error("no solver for '{0}'")]
    Unimplemented(String),
    #[error("no records")]
    EmptyRecords,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub const MAX_RETRIES: usize = 1000;

/// Experiment settings; image quantities in pixels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    pub sigma_motion: f64,
    pub focal: f64,
    pub width: u32,
    pub height: u32,
    pub noise_sigma: f64,
    pub samples: usize,
    pub rng_seed: u64,
    pub spec: String,
    /// Depth range for sampled structure.
    pub depth_min: f64,
    pub depth_max: f64,
    /// Rescale sampled motion coefficients to this norm.
    pub motion_norm: Option<f64>,
    /// Minimal visible fraction of the frame width for a sampled line.
    pub min_visible: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sigma_motion: 0.2,
            focal: 768.0,
            width: 640,
            height: 480,
            noise_sigma: 0.0,
            samples: 1000,
            rng_seed: 0,
            spec: "δ1(5)".into(),
            depth_min: 1.0,
            depth_max: 5.0,
            motion_norm: None,
            min_visible: 0.2,
        }
    }
}

impl BenchConfig {
    /// Half extents of the frame in normalized coordinates.
    pub fn half_frame(&self) -> (f64, f64) {
        (
            0.5 * self.width as f64 / self.focal,
            0.5 * self.height as f64 / self.focal,
        )
    }
}

/// A sampled instance with its ground truth.
#[derive(Debug, Clone)]
pub struct Scene {
    pub spec: ProblemSpec,
    pub camera: RSCamera,
    pub lines: Vec<PluckerLine>,
    pub points: Vec<Vector3<f64>>,
    /// Truth in the solver gauge (line problems).
    pub truth: Option<(Motion, Structure)>,
    pub obs: ObservationSet,
}

/// Per-sample seeded generator.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn gaussian3(rng: &mut ChaCha8Rng, sigma: f64) -> Vector3<f64> {
    let n = Normal::new(0.0, sigma).expect("positive sigma");
    Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng))
}

fn unit3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let v: [f64; 3] = UnitSphere.sample(rng);
    Vector3::from(v)
}

fn motion_coeff(cfg: &BenchConfig, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let v = gaussian3(rng, cfg.sigma_motion);
    match cfg.motion_norm {
        Some(n) => v.normalize() * n,
        None => v,
    }
}

/// World point seen at image point `u` with the given depth.
pub fn back_project(cam: &RSCamera, u: &ImagePoint, depth: f64) -> Vector3<f64> {
    let a = cam.cayley_params(u.x);
    let s = (1.0 + a.norm_squared()).powi(2);
    cam.center(u.x) + cam.rotation(u.x).transpose() * u.homogeneous() * (depth / s)
}

fn random_frame_point(cfg: &BenchConfig, rng: &mut ChaCha8Rng) -> ImagePoint {
    let (w, h) = cfg.half_frame();
    ImagePoint::new(rng.gen_range(-w..w), rng.gen_range(-h..h))
}

/// Image of `line` at scanline `x` if inside the frame and in front of the camera.
pub fn visible_image(cfg: &BenchConfig, cam: &RSCamera, line: &PluckerLine, x: f64) -> Option<ImagePoint> {
    let (_, h) = cfg.half_frame();
    let u = project_line(cam, line, x).ok()?;
    if u.y.abs() > h {
        return None;
    }
    let p = line_point_at_scanline(cam, line, x)?;
    (depth_at(cam, x, &p) > 0.0).then_some(u)
}

fn visible_fraction(cfg: &BenchConfig, cam: &RSCamera, line: &PluckerLine) -> f64 {
    let (w, _) = cfg.half_frame();
    let n = 200;
    let hits = (0..n)
        .filter(|k| {
            let x = -w + 2.0 * w * (*k as f64 + 0.5) / n as f64;
            visible_image(cfg, cam, line, x).is_some()
        })
        .count();
    hits as f64 / n as f64
}

/// `n` image points on the visible part of the line image, uniform in x.
pub fn sample_on_line(
    cfg: &BenchConfig,
    cam: &RSCamera,
    line: &PluckerLine,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<ImagePoint>> {
    let (w, _) = cfg.half_frame();
    let mut out = Vec::with_capacity(n);
    let mut tries = 0;
    while out.len() < n {
        tries += 1;
        if tries > 100 * n + MAX_RETRIES {
            return None;
        }
        let x = rng.gen_range(-w..w);
        if let Some(u) = visible_image(cfg, cam, line, x) {
            out.push(u);
        }
    }
    Some(out)
}

fn random_depth(cfg: &BenchConfig, rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(cfg.depth_min..cfg.depth_max)
}

fn sample_camera(spec: &ProblemSpec, cfg: &BenchConfig, rng: &mut ChaCha8Rng) -> RSCamera {
    let mut c = vec![Vector3::zeros()];
    for _ in 0..spec.d {
        c.push(motion_coeff(cfg, rng));
    }
    let mut a = vec![Vector3::zeros()];
    for _ in 0..spec.delta {
        a.push(motion_coeff(cfg, rng));
    }
    RSCamera::from_coeffs(&c, &a)
}

fn sample_lines(
    spec: &ProblemSpec,
    cfg: &BenchConfig,
    cam: &RSCamera,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<PluckerLine>> {
    let direction = unit3(rng);
    // plane containing the shared direction for coplanar scenes
    let anchor = back_project(cam, &random_frame_point(cfg, rng), random_depth(cfg, rng));
    let normal = direction.cross(&unit3(rng)).normalize();
    let mut lines = Vec::new();
    for _ in 0..count {
        let mut found = None;
        for _ in 0..MAX_RETRIES {
            let u = random_frame_point(cfg, rng);
            let line = match spec.structure_class {
                StructureClass::Generic => {
                    let p1 = back_project(cam, &u, random_depth(cfg, rng));
                    let p2 = back_project(cam, &random_frame_point(cfg, rng), random_depth(cfg, rng));
                    PluckerLine::through(&p1, &p2)
                }
                StructureClass::Parallel => {
                    let p = back_project(cam, &u, random_depth(cfg, rng));
                    PluckerLine::through(&p, &(p + direction))
                }
                StructureClass::ParallelCoplanar => {
                    // intersect the viewing ray with the plane
                    let o = cam.center(u.x);
                    let ray = back_project(cam, &u, 1.0) - o;
                    let den = normal.dot(&ray);
                    if den.abs() < 1e-9 {
                        continue;
                    }
                    let s = normal.dot(&(anchor - o)) / den;
                    if s < cfg.depth_min || s > cfg.depth_max {
                        continue;
                    }
                    let p = o + ray * s;
                    PluckerLine::through(&p, &(p + direction))
                }
            };
            if visible_fraction(cfg, cam, &line) >= cfg.min_visible {
                found = Some(line);
                break;
            }
        }
        lines.push(found?);
    }
    Some(lines)
}

/// Truth of a line scene expressed in the solver's unknowns.
pub fn truth_in_gauge(spec: &ProblemSpec, cam: &RSCamera, lines: &[PluckerLine]) -> Option<(Motion, Structure)> {
    match spec.structure_class {
        StructureClass::Generic if spec.d == 0 && spec.delta == 1 => {
            let planes = lines
                .iter()
                .map(|l| {
                    let m = l.moment;
                    (m[2].abs() > 1e-12 * m.norm()).then(|| m / m[2])
                })
                .collect::<Option<Vec<_>>>()?;
            Some((Motion::Rotation { a1: cam.rotation_coeff(1) }, Structure::Planes(planes)))
        }
        StructureClass::Parallel | StructureClass::ParallelCoplanar if spec.d == 1 && spec.delta == 0 => {
            let dir = lines[0].direction;
            if dir[0].abs() < 1e-12 * dir.norm() {
                return None;
            }
            let v = cam.center_coeff(1);
            let v = v - dir * (v[0] / dir[0]);
            let slice: Vec<Vector3<f64>> = lines
                .iter()
                .map(|l| {
                    let q = l.closest_point();
                    q - dir * (q[0] / dir[0])
                })
                .collect();
            let dir = dir / dir[0];
            if spec.structure_class == StructureClass::Parallel {
                let s = 1.0 / slice[0][2];
                if !s.is_finite() {
                    return None;
                }
                Some((
                    Motion::Translation { coeffs: vec![v * s] },
                    Structure::ParallelLines {
                        direction: dir,
                        points: slice.iter().map(|p| p * s).collect(),
                    },
                ))
            } else {
                let (p1, p2) = (slice[0], slice[1]);
                let dy = p2[1] - p1[1];
                if dy.abs() < 1e-12 {
                    return None;
                }
                let slope = (p2[2] - p1[2]) / dy;
                let z0 = p1[2] - slope * p1[1];
                let s = 1.0 / z0;
                if !s.is_finite() {
                    return None;
                }
                Some((
                    Motion::Translation { coeffs: vec![v * s] },
                    Structure::CoplanarLines {
                        direction: dir,
                        pd_z: slope,
                        lambdas: slice.iter().map(|p| p[1] * s).collect(),
                    },
                ))
            }
        }
        _ => None,
    }
}

/// Smallest separation of two images of one point, relative to the half width.
const MIN_SCANLINE_GAP: f64 = 0.05;

/// Smallest spread of all scanlines of a point scene, relative to the half width.
const MIN_SCENE_SPAN: f64 = 1.0;

/// Point with prescribed in-frame scanline roots `r1`, `r2` and image height
/// `y1` on the first, for a translating camera.
fn point_through_scanlines(cam: &RSCamera, r1: f64, r2: f64, y1: f64) -> Option<Vector3<f64>> {
    // x row: X1 − x X3 = a(x) − x c(x) =: h(x)
    let h = |x: f64| {
        let c = cam.center(x);
        c[0] - x * c[2]
    };
    let x3 = (h(r1) - h(r2)) / (r2 - r1);
    let x1 = h(r1) + r1 * x3;
    let c1 = cam.center(r1);
    let x2 = y1 * (x3 - c1[2]) + c1[1];
    let p = Vector3::new(x1, x2, x3);
    p.iter().all(|v| v.is_finite()).then_some(p)
}

// Scenes are built point by point: two scanlines are drawn inside the frame,
// the point seen on both is solved for, and it is kept only when every image
// the problem needs is in the frame and in front of the camera. Images are
// scale free, so no depth range applies. Scenes whose scanlines crowd into a
// narrow band of the frame are redrawn.
fn sample_point_scene(
    spec: &ProblemSpec,
    cfg: &BenchConfig,
    points: usize,
    images: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Scene, BenchError> {
    let (w, hh) = cfg.half_frame();
    for _ in 0..MAX_RETRIES {
        let cam = sample_camera(spec, cfg, rng);
        let mut world = Vec::new();
        let mut obs = Vec::new();
        for _ in 0..points {
            let mut ok = None;
            for _ in 0..MAX_RETRIES {
                let (r1, r2) = (rng.gen_range(-w..w), rng.gen_range(-w..w));
                if (r1 - r2).abs() < MIN_SCANLINE_GAP * w {
                    continue;
                }
                let Some(p) = point_through_scanlines(&cam, r1, r2, rng.gen_range(-hh..hh)) else {
                    continue;
                };
                let Ok(proj) = project_point(&cam, &p.push(1.0)) else {
                    continue;
                };
                let visible: Vec<ImagePoint> = proj
                    .images
                    .into_iter()
                    .filter(|u| u.x.abs() <= w && u.y.abs() <= hh && depth_at(&cam, u.x, &p) > 0.0)
                    .collect();
                // the prescribed scanlines first, then any further visible roots
                let mut chosen: Vec<ImagePoint> = Vec::new();
                for r in [r1, r2] {
                    if let Some(u) = visible.iter().find(|u| (u.x - r).abs() <= 1e-9 * (1.0 + r.abs())) {
                        chosen.push(*u);
                    }
                }
                if chosen.len() < 2 {
                    continue;
                }
                for u in &visible {
                    if chosen.len() < images && chosen.iter().all(|c| (c.x - u.x).abs() >= MIN_SCANLINE_GAP * w) {
                        chosen.push(*u);
                    }
                }
                if chosen.len() == images {
                    chosen.sort_by(|a, b| a.x.total_cmp(&b.x));
                    ok = Some((p, chosen));
                    break;
                }
            }
            let Some((p, imgs)) = ok else { break };
            world.push(p);
            obs.push(imgs.into_iter().map(PointObs::from).collect::<Vec<_>>());
        }
        let xs = obs.iter().flatten().filter_map(|o: &PointObs| o.x);
        let span = xs.clone().fold(f64::MIN, f64::max) - xs.fold(f64::MAX, f64::min);
        if world.len() == points && span >= MIN_SCENE_SPAN * w {
            return Ok(Scene {
                spec: spec.clone(),
                camera: cam,
                lines: Vec::new(),
                points: world,
                truth: None,
                obs: ObservationSet::Points(obs),
            });
        }
    }
    Err(BenchError::SamplingExhausted(MAX_RETRIES))
}

/// Samples a camera, structure and noiseless observations for `spec`.
pub fn sample_scene(cfg: &BenchConfig, spec: &ProblemSpec, rng: &mut ChaCha8Rng) -> Result<Scene, BenchError> {
    if !spec.implemented {
        return Err(BenchError::Unimplemented(spec.label.clone()));
    }
    if let Measurement::WorldPoints { points, images } = spec.measurement {
        return sample_point_scene(spec, cfg, points, images, rng);
    }
    for _ in 0..MAX_RETRIES {
        let cam = sample_camera(spec, cfg, rng);
        let Some(lines) = sample_lines(spec, cfg, &cam, spec.lines.len(), rng) else {
            continue;
        };
        let Some(truth) = truth_in_gauge(spec, &cam, &lines) else {
            continue;
        };
        let obs: Option<Vec<Vec<ImagePoint>>> = lines
            .iter()
            .zip(&spec.lines)
            .map(|(l, n)| sample_on_line(cfg, &cam, l, *n, rng))
            .collect();
        let Some(obs) = obs else { continue };
        return Ok(Scene {
            spec: spec.clone(),
            camera: cam,
            lines,
            points: Vec::new(),
            truth: Some(truth),
            obs: ObservationSet::Lines(obs),
        });
    }
    Err(BenchError::SamplingExhausted(MAX_RETRIES))
}

/// Curves of one consistent scene mixed with curves of unrelated scenes.
#[derive(Debug, Clone)]
pub struct PlantedCurves {
    /// Image points of each curve, sorted by scanline.
    pub curves: Vec<Vec<ImagePoint>>,
    pub inliers: Vec<bool>,
    pub camera: RSCamera,
    /// World lines of the inlier curves, in curve order.
    pub lines: Vec<PluckerLine>,
}

fn sorted_curve(cfg: &BenchConfig, cam: &RSCamera, line: &PluckerLine, n: usize, rng: &mut ChaCha8Rng) -> Option<Vec<ImagePoint>> {
    let mut pts = sample_on_line(cfg, cam, line, n, rng)?;
    pts.sort_by(|a, b| a.x.total_cmp(&b.x));
    Some(pts)
}

/// `n_inliers` curves seen by one camera and `n_outliers` curves from
/// independently drawn scenes, shuffled, with `points` samples per curve.
pub fn sample_planted_curves(
    cfg: &BenchConfig,
    spec: &ProblemSpec,
    n_inliers: usize,
    n_outliers: usize,
    points: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PlantedCurves, BenchError> {
    if !matches!(spec.measurement, Measurement::LinePoints) {
        return Err(BenchError::Unimplemented(spec.label.clone()));
    }
    let draw = |count: usize, rng: &mut ChaCha8Rng| -> Option<(RSCamera, Vec<PluckerLine>, Vec<Vec<ImagePoint>>)> {
        let cam = sample_camera(spec, cfg, rng);
        let lines = sample_lines(spec, cfg, &cam, count, rng)?;
        let curves = lines
            .iter()
            .map(|l| sorted_curve(cfg, &cam, l, points, rng))
            .collect::<Option<Vec<_>>>()?;
        Some((cam, lines, curves))
    };
    let mut inlier_scene = None;
    for _ in 0..MAX_RETRIES {
        if let Some(s) = draw(n_inliers, rng) {
            inlier_scene = Some(s);
            break;
        }
    }
    let (camera, lines, good) = inlier_scene.ok_or(BenchError::SamplingExhausted(MAX_RETRIES))?;
    let mut bad = Vec::new();
    let mut tries = 0;
    while bad.len() < n_outliers {
        tries += 1;
        if tries > MAX_RETRIES {
            return Err(BenchError::SamplingExhausted(MAX_RETRIES));
        }
        if let Some((_, _, mut c)) = draw(1, rng) {
            bad.push(c.remove(0));
        }
    }
    let mut tagged: Vec<(bool, Vec<ImagePoint>, Option<PluckerLine>)> = good
        .into_iter()
        .zip(lines)
        .map(|(c, l)| (true, c, Some(l)))
        .chain(bad.into_iter().map(|c| (false, c, None)))
        .collect();
    tagged.shuffle(rng);
    Ok(PlantedCurves {
        inliers: tagged.iter().map(|t| t.0).collect(),
        lines: tagged.iter().filter_map(|t| t.2.clone()).collect(),
        curves: tagged.into_iter().map(|t| t.1).collect(),
        camera,
    })
}

/// Independent Gaussian noise of `sigma_px` pixels on every coordinate.
pub fn add_noise(obs: &ObservationSet, sigma_px: f64, focal: f64, seed: u64) -> ObservationSet {
    if sigma_px == 0.0 {
        return obs.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = sigma_px / focal;
    let mut g = move || -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        z * s
    };
    match obs {
        ObservationSet::Lines(lines) => ObservationSet::Lines(
            lines
                .iter()
                .map(|l| l.iter().map(|u| ImagePoint::new(u.x + g(), u.y + g())).collect())
                .collect(),
        ),
        ObservationSet::Points(pts) => ObservationSet::Points(
            pts.iter()
                .map(|p| {
                    p.iter()
                        .map(|o| PointObs {
                            x: o.x.map(|x| x + g()),
                            y: o.y + g(),
                        })
                        .collect()
                })
                .collect(),
        ),
    }
}

// ---------------------------------------------------------------------------
// Error metrics

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Ok,
    NoRealCandidate,
    SolverFailed,
}

/// Errors of the best candidate; `None` where a metric does not apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub velocity_angle: Option<f64>,
    pub line_angle: Option<f64>,
    pub axis_angle: Option<f64>,
    pub norm_rel: Option<f64>,
    /// Projective distance of the point-solver output to truth.
    pub projective_error: Option<f64>,
    pub solver_status: SolveStatus,
    pub n_candidates: usize,
    pub n_real: usize,
}

impl ErrorRecord {
    pub fn failed(status: SolveStatus, n_candidates: usize) -> Self {
        Self {
            velocity_angle: None,
            line_angle: None,
            axis_angle: None,
            norm_rel: None,
            projective_error: None,
            solver_status: status,
            n_candidates,
            n_real: 0,
        }
    }

    /// Applicable errors (angles in radians, relative norms).
    pub fn errors(&self) -> Vec<f64> {
        [
            self.velocity_angle,
            self.line_angle,
            self.axis_angle,
            self.norm_rel,
            self.projective_error,
        ]
        .into_iter()
        .flatten()
        .collect()
    }

    /// Largest applicable error, infinite on failure.
    pub fn worst(&self) -> f64 {
        if self.solver_status != SolveStatus::Ok {
            return f64::INFINITY;
        }
        self.errors().into_iter().fold(0.0, f64::max)
    }
}

/// Angle between two vectors, clamped to [0, π].
pub fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let n = a.norm() * b.norm();
    if n == 0.0 {
        return std::f64::consts::PI;
    }
    a.cross(b).norm().atan2(a.dot(b))
}

/// Smallest angle between `truth` and `v + αΔ` over real α.
pub fn angle_modulo_direction(v: &Vector3<f64>, direction: &Vector3<f64>, truth: &Vector3<f64>) -> f64 {
    let dn = direction.normalize();
    // component of v orthogonal to Δ carries the recoverable part
    let vp = v - dn * v.dot(&dn);
    let tp = truth.dot(&dn);
    if vp.norm() < 1e-14 * v.norm().max(1e-300) {
        return angle_between(&(dn * tp.signum()), truth);
    }
    let vh = vp.normalize();
    let b = truth.dot(&vh);
    if b > 0.0 {
        // projection of truth onto span(v, Δ) is reachable
        let p = vh * b + dn * tp;
        angle_between(&p, truth)
    } else {
        // supremum attained in the limit α → ±∞
        angle_between(&(dn * tp.signum()), truth)
    }
}

fn folded_angle(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let t = angle_between(a, b);
    t.min(std::f64::consts::PI - t)
}

/// Sign making most observed depths positive for a translating candidate.
pub fn orientation_sign(candidate: &Candidate, obs: &ObservationSet) -> f64 {
    let ObservationSet::Lines(lines) = obs else {
        return 1.0;
    };
    let cam = candidate.motion.camera();
    let world = candidate.structure.lines();
    let mut votes = 0.0;
    for (line, pts) in world.iter().zip(lines) {
        for u in pts {
            if let Some(p) = line_point_at_scanline(&cam, line, u.x) {
                votes += depth_at(&cam, u.x, &p).signum();
            }
        }
    }
    if votes < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn score_one(c: &Candidate, truth: &(Motion, Structure), true_velocity: Option<Vector3<f64>>, obs: &ObservationSet) -> ErrorRecord {
    let mut rec = ErrorRecord::failed(SolveStatus::Ok, 0);
    match (&c.motion, &truth.0) {
        (Motion::Rotation { a1 }, Motion::Rotation { a1: t }) => {
            rec.axis_angle = Some(angle_between(a1, t));
            rec.norm_rel = Some((a1 - t).norm() / t.norm());
        }
        (Motion::Translation { coeffs }, Motion::Translation { .. }) => {
            let dir = match &c.structure {
                Structure::ParallelLines { direction, .. } | Structure::CoplanarLines { direction, .. } => *direction,
                _ => Vector3::x(),
            };
            let v = coeffs[0] * orientation_sign(c, obs);
            if let Some(tv) = true_velocity {
                rec.velocity_angle = Some(angle_modulo_direction(&v, &dir, &tv));
            }
            let tdir = match &truth.1 {
                Structure::ParallelLines { direction, .. } | Structure::CoplanarLines { direction, .. } => *direction,
                _ => Vector3::x(),
            };
            rec.line_angle = Some(folded_angle(&dir, &tdir));
        }
        _ => {}
    }
    rec
}

/// Scores the real candidate closest to the truth of `scene`.
pub fn score_candidates(solutions: &SolutionSet, scene: &Scene) -> ErrorRecord {
    score_candidates_with(solutions, scene, &scene.obs)
}

/// As `score_candidates`, orienting candidates with the observations actually solved.
pub fn score_candidates_with(solutions: &SolutionSet, scene: &Scene, obs: &ObservationSet) -> ErrorRecord {
    let n = solutions.candidates.len();
    let real: Vec<&Candidate> = solutions.real_candidates().collect();
    if real.is_empty() {
        return ErrorRecord::failed(SolveStatus::NoRealCandidate, n);
    }
    let mut best: Option<ErrorRecord> = None;
    for c in &real {
        let rec = match &scene.truth {
            Some(t) => score_one(c, t, (scene.camera.d() >= 1).then(|| scene.camera.center_coeff(1)), obs),
            None => point_record(c, scene),
        };
        if best.as_ref().map_or(true, |b| rec.worst() < b.worst()) {
            best = Some(rec);
        }
    }
    let mut best = best.expect("non-empty");
    best.n_candidates = n;
    best.n_real = real.len();
    best
}

/// Kernel vector of the linear point solver at the truth of a point scene.
pub fn point_truth_vector(scene: &Scene) -> Vec<f64> {
    let d = scene.camera.d();
    let mut v = Vec::new();
    for row in 0..3 {
        for k in 1..=d {
            v.push(scene.camera.center_coeff(k)[row]);
        }
    }
    for p in &scene.points {
        v.extend_from_slice(p.as_slice());
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Unit vector of a point-solver candidate in the layout of [`point_truth_vector`].
pub fn candidate_vector(c: &Candidate) -> Vec<f64> {
    let mut v = Vec::new();
    if let Motion::Translation { coeffs } = &c.motion {
        for row in 0..3 {
            v.extend(coeffs.iter().map(|k| k[row]));
        }
    }
    if let Structure::Points(p) = &c.structure {
        for x in p {
            v.extend_from_slice(x.as_slice());
        }
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Projective distance between unit vectors, sign-folded.
pub fn projective_distance(a: &[f64], b: &[f64]) -> f64 {
    let p: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let m: f64 = a.iter().zip(b).map(|(x, y)| (x + y).powi(2)).sum::<f64>().sqrt();
    p.min(m)
}

fn point_record(c: &Candidate, scene: &Scene) -> ErrorRecord {
    let mut rec = ErrorRecord::failed(SolveStatus::Ok, 0);
    let truth = point_truth_vector(scene);
    rec.projective_error = Some(projective_distance(&truth, &candidate_vector(c)));
    if let Motion::Translation { coeffs } = &c.motion {
        rec.velocity_angle = Some(angle_between(&coeffs[0], &scene.camera.center_coeff(1)));
    }
    rec
}

// ---------------------------------------------------------------------------
// Experiments

/// Outcome of one sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleResult {
    pub index: usize,
    pub record: ErrorRecord,
    pub paths: usize,
    pub failed_paths: usize,
}

fn tracker_for(cfg: &BenchConfig, index: usize) -> TrackerConfig {
    TrackerConfig {
        rng_seed: cfg.rng_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index as u64,
        ..TrackerConfig::default()
    }
}

/// Samples, perturbs, solves and scores one instance.
pub fn run_sample(cfg: &BenchConfig, spec: &ProblemSpec, index: usize) -> Result<SampleResult, BenchError> {
    let mut rng = sample_rng(cfg.rng_seed, index as u64);
    let scene = sample_scene(cfg, spec, &mut rng)?;
    let noise_seed: u64 = rng.gen();
    let obs = add_noise(&scene.obs, cfg.noise_sigma, cfg.focal, noise_seed);
    Ok(match solve(spec, &obs, &tracker_for(cfg, index)) {
        Ok(sol) => SampleResult {
            index,
            record: score_candidates_with(&sol, &scene, &obs),
            paths: sol.diagnostics.paths,
            failed_paths: sol
                .diagnostics
                .paths
                .saturating_sub(sol.diagnostics.converged + sol.diagnostics.diverged),
        },
        Err(SolverError::Unimplemented { label, .. }) => return Err(BenchError::Unimplemented(label)),
        Err(_) => SampleResult {
            index,
            record: ErrorRecord::failed(SolveStatus::SolverFailed, 0),
            paths: 0,
            failed_paths: 0,
        },
    })
}

/// Runs `cfg.samples` independent samples, ordered by index.
pub fn run_experiment(cfg: &BenchConfig) -> Result<Vec<SampleResult>, BenchError> {
    let spec = lookup(&cfg.spec)?;
    if !spec.implemented {
        return Err(BenchError::Unimplemented(spec.label));
    }
    (0..cfg.samples)
        .into_par_iter()
        .map(|i| run_sample(cfg, &spec, i))
        .collect()
}

/// Fraction of errors at or below each threshold; missing errors count as misses.
pub fn recall_curve(errors: &[Option<f64>], thresholds: &[f64]) -> Result<Vec<(f64, f64)>, BenchError> {
    if errors.is_empty() {
        return Err(BenchError::EmptyRecords);
    }
    let n = errors.len() as f64;
    Ok(thresholds
        .iter()
        .map(|t| {
            let hit = errors.iter().filter(|e| e.is_some_and(|e| e <= *t)).count();
            (*t, hit as f64 / n)
        })
        .collect())
}

/// Log10 histogram bin edges used for stability output.
pub const HIST_LOG10_MIN: f64 = -16.0;
pub const HIST_LOG10_MAX: f64 = 2.0;
pub const HIST_BINS_PER_DECADE: usize = 2;

/// Counts of `log10(error)` in fixed bins; the first and last bins are open.
pub fn log_histogram(errors: &[f64]) -> Vec<(f64, f64, usize)> {
    let nb = ((HIST_LOG10_MAX - HIST_LOG10_MIN) as usize) * HIST_BINS_PER_DECADE;
    let w = 1.0 / HIST_BINS_PER_DECADE as f64;
    let mut counts = vec![0usize; nb];
    for e in errors {
        let l = if *e > 0.0 { e.log10() } else { f64::NEG_INFINITY };
        let k = ((l - HIST_LOG10_MIN) / w).floor();
        let k = if k.is_nan() { 0 } else { k.clamp(0.0, (nb - 1) as f64) as usize };
        counts[k] += 1;
    }
    (0..nb)
        .map(|k| (HIST_LOG10_MIN + k as f64 * w, HIST_LOG10_MIN + (k + 1) as f64 * w, counts[k]))
        .collect()
}

/// Serializes a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{:.16e}", v)
    } else {
        v.to_string()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Writes a `#`-prefixed JSON metadata line.
pub fn write_metadata<W: Write>(w: &mut W, meta: &serde_json::Value) -> Result<(), BenchError> {
    writeln!(w, "# {}", meta)?;
    Ok(())
}

pub fn metadata(cfg: &BenchConfig, extra: serde_json::Value) -> serde_json::Value {
    serde_json::json!({
        "seed": cfg.rng_seed,
        "config": cfg,
        "version": env!("CARGO_PKG_VERSION"),
        "extra": extra,
    })
}

/// Per-sample rows.
pub fn write_samples_csv<W: Write>(mut w: W, cfg: &BenchConfig, results: &[SampleResult]) -> Result<(), BenchError> {
    write_metadata(&mut w, &metadata(cfg, serde_json::json!({"table": "samples"})))?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "sample",
        "status",
        "velocity_angle",
        "line_angle",
        "axis_angle",
        "norm_rel",
        "projective_error",
        "n_candidates",
        "n_real",
        "paths",
        "failed_paths",
    ])?;
    for r in results {
        let status = serde_json::to_value(r.record.solver_status)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        out.write_record([
            r.index.to_string(),
            status,
            fmt_opt(r.record.velocity_angle),
            fmt_opt(r.record.line_angle),
            fmt_opt(r.record.axis_angle),
            fmt_opt(r.record.norm_rel),
            fmt_opt(r.record.projective_error),
            r.record.n_candidates.to_string(),
            r.record.n_real.to_string(),
            r.paths.to_string(),
            r.failed_paths.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

type Metric = (&'static str, fn(&ErrorRecord) -> Option<f64>);

const METRICS: [Metric; 5] = [
    ("velocity_angle", |r| r.velocity_angle),
    ("line_angle", |r| r.line_angle),
    ("axis_angle", |r| r.axis_angle),
    ("norm_rel", |r| r.norm_rel),
    ("projective_error", |r| r.projective_error),
];

fn applicable(results: &[SampleResult], f: fn(&ErrorRecord) -> Option<f64>) -> bool {
    results.iter().any(|r| f(&r.record).is_some())
}

/// Log-binned error histogram per applicable metric; failures are counted separately.
pub fn write_histogram_csv<W: Write>(mut w: W, cfg: &BenchConfig, results: &[SampleResult]) -> Result<(), BenchError> {
    let bins = serde_json::json!({
        "table": "histogram",
        "bins": "log10(error), width 1/2 decade, first and last bins open",
        "failed_samples": results.iter().filter(|r| r.record.solver_status != SolveStatus::Ok).count(),
    });
    write_metadata(&mut w, &metadata(cfg, bins))?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["metric", "log10_lo", "log10_hi", "count"])?;
    for (name, f) in METRICS {
        if !applicable(results, f) {
            continue;
        }
        let errs: Vec<f64> = results.iter().filter_map(|r| f(&r.record)).collect();
        for (lo, hi, c) in log_histogram(&errs) {
            out.write_record([name.to_string(), lo.to_string(), hi.to_string(), c.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Default recall thresholds: 0° to 180° in 1° steps.
pub fn default_thresholds_deg() -> Vec<f64> {
    (0..=180).map(|d| d as f64).collect()
}

/// Recall per applicable angular metric; relative norm errors use threshold/100.
pub fn write_recall_csv<W: Write>(mut w: W, cfg: &BenchConfig, results: &[SampleResult]) -> Result<(), BenchError> {
    write_metadata(
        &mut w,
        &metadata(cfg, serde_json::json!({"table": "recall", "norm_rel_threshold": "threshold_deg / 100"})),
    )?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["threshold_deg", "metric", "recall"])?;
    let deg = default_thresholds_deg();
    for (name, f) in METRICS.iter().take(4) {
        if !applicable(results, *f) {
            continue;
        }
        let errs: Vec<Option<f64>> = results.iter().map(|r| f(&r.record)).collect();
        let thresholds: Vec<f64> = if *name == "norm_rel" {
            deg.iter().map(|d| d / 100.0).collect()
        } else {
            deg.iter().map(|d| d.to_radians()).collect()
        };
        for ((_, r), d) in recall_curve(&errs, &thresholds)?.into_iter().zip(&deg) {
            out.write_record([d.to_string(), name.to_string(), fmt_f64(r)])?;
        }
    }
    out.flush()?;
    Ok(())
}
