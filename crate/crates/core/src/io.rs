//! JSON files read and written by the command-line tools.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{sample_on_line, sample_rng, truth_in_gauge, BenchConfig};
use crate::camera::{depth_at, project_line, project_point, ImagePoint, PluckerLine, RSCamera, WorldPoint};
use crate::robust::RansacResult;
use crate::solvers::{lookup, Measurement, Motion, ObservationSet, PointObs, SolutionSet, SolverError, Structure};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("{path}:{line}:{column}: {message}")]
    Schema {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Provenance stored in every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub seed: u64,
    pub config: serde_json::Value,
    pub version: String,
}

impl Metadata {
    pub fn new(seed: u64, config: serde_json::Value) -> Self {
        Self {
            seed,
            config,
            version: VERSION.to_string(),
        }
    }
}

/// Parses JSON, reporting schema errors with their position.
pub fn parse_json<T: DeserializeOwned>(text: &str, path: &str) -> Result<T, IoError> {
    serde_json::from_str(text).map_err(|e| IoError::Schema {
        path: path.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let name = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| IoError::File {
        path: name.clone(),
        source,
    })?;
    parse_json(&text, &name)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value).expect("serializable value");
    fs::write(path, text + "\n").map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

/// Camera coefficients, index = power of x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraFile {
    #[serde(default = "origin")]
    pub center: Vec<Vector3<f64>>,
    #[serde(default = "origin")]
    pub rotation: Vec<Vector3<f64>>,
}

fn origin() -> Vec<Vector3<f64>> {
    vec![Vector3::zeros()]
}

impl CameraFile {
    pub fn camera(&self) -> Result<RSCamera, IoError> {
        if self.center.is_empty() || self.rotation.is_empty() {
            return Err(IoError::Invalid("camera needs at least one coefficient per path".into()));
        }
        Ok(RSCamera::from_coeffs(&self.center, &self.rotation))
    }

    pub fn from_camera(cam: &RSCamera) -> Self {
        Self {
            center: (0..=cam.d()).map(|k| cam.center_coeff(k)).collect(),
            rotation: (0..=cam.delta()).map(|k| cam.rotation_coeff(k)).collect(),
        }
    }
}

/// World line with the scanlines to observe it on, or a sample count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFile {
    pub direction: Vector3<f64>,
    pub moment: Vector3<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scanlines: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

/// Image frame in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameFile {
    pub focal: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for FrameFile {
    fn default() -> Self {
        let b = BenchConfig::default();
        Self {
            focal: b.focal,
            width: b.width,
            height: b.height,
        }
    }
}

/// Input of the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    #[serde(default)]
    pub spec: Option<String>,
    pub camera: CameraFile,
    /// World points as `[x, y, z]` or homogeneous `[x, y, z, w]`.
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
    #[serde(default)]
    pub lines: Vec<LineFile>,
    #[serde(default)]
    pub frame: FrameFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationsFile {
    pub metadata: Metadata,
    #[serde(default)]
    pub spec: Option<String>,
    pub observations: ObservationSet,
}

/// Ground truth written next to simulated observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFile {
    pub metadata: Metadata,
    pub spec: Option<String>,
    pub camera: CameraFile,
    pub lines: Vec<PluckerLine>,
    pub points: Vec<Vec<f64>>,
    /// Truth in the solver's unknowns, for line problems.
    pub motion: Option<Motion>,
    pub structure: Option<Structure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionsFile {
    pub metadata: Metadata,
    pub solutions: SolutionSet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RansacFile {
    pub metadata: Metadata,
    pub result: RansacResult,
}

/// Curves as lists of `[x, y]` pairs.
pub type CurvesFile = Vec<Vec<[f64; 2]>>;

pub fn curves_from_file(c: &CurvesFile) -> Vec<Vec<ImagePoint>> {
    c.iter()
        .map(|pts| pts.iter().map(|p| ImagePoint::new(p[0], p[1])).collect())
        .collect()
}

pub fn curves_to_file(c: &[Vec<ImagePoint>]) -> CurvesFile {
    c.iter().map(|pts| pts.iter().map(|p| [p.x, p.y]).collect()).collect()
}

fn homogeneous_point(p: &[f64]) -> Option<WorldPoint> {
    let xw = match p.len() {
        3 => WorldPoint::new(p[0], p[1], p[2], 1.0),
        4 => WorldPoint::new(p[0], p[1], p[2], p[3]),
        _ => return None,
    };
    (xw.iter().all(|v| v.is_finite()) && xw.norm() > 0.0).then_some(xw)
}

/// Projects a scene into observations and its ground truth.
///
/// Points are observed at every real scanline in front of the camera; a
/// point problem keeps the first images it needs. Lines are observed on
/// their listed scanlines or on `samples` (else the problem's count)
/// scanlines drawn in the visible part of the frame.
pub fn simulate(scene: &SceneFile, seed: u64) -> Result<(ObservationsFile, GroundTruthFile), IoError> {
    let cam = scene.camera.camera()?;
    let spec = scene.spec.as_deref().map(lookup).transpose()?;
    let meta = Metadata::new(seed, serde_json::to_value(scene).expect("serializable scene"));
    if !scene.points.is_empty() && !scene.lines.is_empty() {
        return Err(IoError::Invalid("a scene holds either points or lines".into()));
    }
    let observations = if scene.lines.is_empty() {
        let wanted = match spec.as_ref().map(|s| &s.measurement) {
            Some(Measurement::WorldPoints { points, images }) => {
                if *points != scene.points.len() {
                    return Err(IoError::Invalid(format!("expected {points} points")));
                }
                Some(*images)
            }
            Some(Measurement::LinePoints) => return Err(IoError::Invalid("line problem without lines".into())),
            None => None,
        };
        let mut obs = Vec::new();
        for (i, p) in scene.points.iter().enumerate() {
            let xw = homogeneous_point(p).ok_or_else(|| IoError::Invalid(format!("point {i}: need 3 or 4 finite coordinates")))?;
            let proj = project_point(&cam, &xw).map_err(|e| IoError::Invalid(format!("point {i}: {e}")))?;
            let mut imgs: Vec<PointObs> = proj
                .images
                .into_iter()
                .filter(|u| xw[3] == 0.0 || depth_at(&cam, u.x, &(xw.xyz() / xw[3])) > 0.0)
                .map(PointObs::from)
                .collect();
            if let Some(n) = wanted {
                if imgs.len() < n {
                    return Err(IoError::Invalid(format!("point {i} has {} images, needs {n}", imgs.len())));
                }
                imgs.truncate(n);
            }
            obs.push(imgs);
        }
        ObservationSet::Points(obs)
    } else {
        let cfg = BenchConfig {
            focal: scene.frame.focal,
            width: scene.frame.width,
            height: scene.frame.height,
            ..BenchConfig::default()
        };
        if let Some(s) = &spec {
            if s.lines.len() != scene.lines.len() {
                return Err(IoError::Invalid(format!("expected {} lines", s.lines.len())));
            }
        }
        let mut obs = Vec::new();
        for (i, l) in scene.lines.iter().enumerate() {
            let line = PluckerLine::new(l.direction, l.moment).map_err(|e| IoError::Invalid(format!("line {i}: {e}")))?;
            let pts = match (&l.scanlines, l.samples.or(spec.as_ref().map(|s| s.lines[i]))) {
                (Some(xs), _) => xs
                    .iter()
                    .map(|&x| project_line(&cam, &line, x))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| IoError::Invalid(format!("line {i}: {e}")))?,
                (None, Some(n)) => {
                    let mut rng = sample_rng(seed, i as u64);
                    let mut pts = sample_on_line(&cfg, &cam, &line, n, &mut rng)
                        .ok_or_else(|| IoError::Invalid(format!("line {i} is not visible")))?;
                    pts.sort_by(|a, b| a.x.total_cmp(&b.x));
                    pts
                }
                (None, None) => return Err(IoError::Invalid(format!("line {i} needs scanlines or samples"))),
            };
            obs.push(pts);
        }
        ObservationSet::Lines(obs)
    };
    let lines: Vec<PluckerLine> = scene
        .lines
        .iter()
        .map(|l| PluckerLine {
            direction: l.direction,
            moment: l.moment,
        })
        .collect();
    let truth = spec
        .as_ref()
        .filter(|s| s.measurement == Measurement::LinePoints)
        .and_then(|s| truth_in_gauge(s, &cam, &lines));
    let (motion, structure) = truth.unzip();
    let truth_file = GroundTruthFile {
        metadata: meta.clone(),
        spec: spec.as_ref().map(|s| s.label.clone()),
        camera: scene.camera.clone(),
        lines,
        points: scene.points.clone(),
        motion,
        structure,
    };
    Ok((
        ObservationsFile {
            metadata: meta,
            spec: spec.map(|s| s.label),
            observations,
        },
        truth_file,
    ))
}
