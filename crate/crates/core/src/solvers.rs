//! Minimal solvers: linear point solvers for δ = 0 and homotopy solvers for
//! line problems, plus the catalog of minimal problems with their degrees.

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{ImagePoint, PluckerLine, RSCamera};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::poly::{
    homotopy_solve_with, is_real, parameter_homotopy, HomotopySolutions, MPoly, ParametricSystem,
    PathStatus, PolyError, PolySystem, StartSystem, TrackerConfig, C64,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    /// The label could not be parsed.
    #[error("unknown problem label '{0}'")]
    UnknownLabel(String),
    /// The problem is cataloged but has no solver.
    #[error("no solver for '{label}' (cataloged degree {degree})")]
    Unimplemented { label: String, degree: usize },
    /// Point counts do not satisfy the balance rule of the problem class.
    #[error("problem is not balanced: {0}")]
    NotBalanced(String),
    /// Observations do not match the problem layout.
    #[error("observations do not match the problem: {0}")]
    BadObservations(String),
    /// The linear system does not have a one-dimensional kernel.
    #[error("kernel dimension is not one (singular value ratio {0:.3e})")]
    KernelDimensionError(f64),
    /// Image x-coordinate sums of two points disagree for d = 2.
    #[error("x-coordinate sums disagree by {0:.3e}")]
    XSumMismatch(f64),
    /// Path tracking failed.
    #[error("tracker: {0}")]
    Tracker(#[from] PolyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureClass {
    Generic,
    Parallel,
    ParallelCoplanar,
}

/// What is measured in the images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measurement {
    /// Points sampled on line images, counts in `ProblemSpec::lines`.
    LinePoints,
    /// World points, each seen `images` times.
    WorldPoints { points: usize, images: usize },
}

/// Entry of the problem catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub label: String,
    pub d: usize,
    pub delta: usize,
    /// Points per line image, descending.
    pub lines: Vec<usize>,
    pub structure_class: StructureClass,
    pub measurement: Measurement,
    /// Joint degrees of freedom (camera plus shared structure).
    pub gamma: usize,
    /// Degrees of freedom per line.
    pub lambda: usize,
    /// Largest useful number of points per line image.
    pub max_points: usize,
    pub degree: usize,
    pub implemented: bool,
}

impl ProblemSpec {
    /// `Γ + Λℓ = ΣNᵢ` with `Λ < Nᵢ ≤ max_points`; point problems count
    /// unknowns against image constraints.
    pub fn is_balanced(&self) -> bool {
        match self.measurement {
            Measurement::LinePoints => {
                let total: usize = self.lines.iter().sum();
                self.gamma + self.lambda * self.lines.len() == total
                    && self
                        .lines
                        .iter()
                        .all(|&n| n > self.lambda && n <= self.max_points)
            }
            Measurement::WorldPoints { points, images } => {
                let order = 1 + self.d + 2 * self.delta;
                let unknowns = if self.d == 0 {
                    3 * self.delta + 2 * points
                } else {
                    3 * (self.d + self.delta) - 1 + 3 * points
                };
                // for d ≥ 2, fully observed points share their x-sum
                let tied = if self.d >= 2 && images == order && points > 1 { points - 1 } else { 0 };
                let constraints = 2 * images * points - tied;
                unknowns == constraints
            }
        }
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }
}

const SUPERSCRIPTS: [char; 10] = ['⁰', '¹', '²', '³', '⁴', '⁵', '⁶', '⁷', '⁸', '⁹'];

fn superscript(n: usize) -> String {
    n.to_string()
        .chars()
        .map(|c| SUPERSCRIPTS[c.to_digit(10).unwrap() as usize])
        .collect()
}

fn compress_counts(n: &[usize]) -> String {
    let mut parts = Vec::new();
    let mut i = 0;
    while i < n.len() {
        let mut j = i;
        while j < n.len() && n[j] == n[i] {
            j += 1;
        }
        let e = j - i;
        parts.push(if e > 1 {
            format!("{}{}", n[i], superscript(e))
        } else {
            n[i].to_string()
        });
        i = j;
    }
    parts.join(",")
}

fn prefix(d: usize, delta: usize) -> String {
    let mut s = String::new();
    if d > 0 {
        s.push_str(&format!("d{d}"));
    }
    if delta > 0 {
        s.push_str(&format!("δ{delta}"));
    }
    s
}

fn line_label(d: usize, delta: usize, n: &[usize], class: StructureClass) -> String {
    let suffix = match class {
        StructureClass::Generic => "",
        StructureClass::Parallel => "P",
        StructureClass::ParallelCoplanar => "PC",
    };
    format!("{}({}){}", prefix(d, delta), compress_counts(n), suffix)
}

fn point_label(d: usize, delta: usize, points: usize, images: usize) -> String {
    format!("{}[{}×{}]", prefix(d, delta), points, images)
}

#[allow(clippy::too_many_arguments)]
fn line_entry(
    d: usize,
    delta: usize,
    n: &[usize],
    class: StructureClass,
    gamma: usize,
    lambda: usize,
    max_points: usize,
    degree: usize,
    implemented: bool,
) -> ProblemSpec {
    ProblemSpec {
        label: line_label(d, delta, n, class),
        d,
        delta,
        lines: n.to_vec(),
        structure_class: class,
        measurement: Measurement::LinePoints,
        gamma,
        lambda,
        max_points,
        degree,
        implemented,
    }
}

fn point_entry(d: usize, delta: usize, points: usize, images: usize, degree: usize) -> ProblemSpec {
    let implemented = delta == 0 && degree == 1;
    ProblemSpec {
        label: point_label(d, delta, points, images),
        d,
        delta,
        lines: Vec::new(),
        structure_class: StructureClass::Generic,
        measurement: Measurement::WorldPoints { points, images },
        gamma: 0,
        lambda: 0,
        max_points: 0,
        degree,
        implemented,
    }
}

/// All cataloged minimal problems.
pub fn catalog() -> Vec<ProblemSpec> {
    use StructureClass::*;
    vec![
        line_entry(0, 1, &[5], Generic, 3, 2, 5, 10, true),
        line_entry(0, 1, &[4, 3], Generic, 3, 2, 5, 30, true),
        line_entry(0, 1, &[3, 3, 3], Generic, 3, 2, 5, 54, true),
        line_entry(1, 0, &[4, 3], Parallel, 3, 2, 4, 2, true),
        line_entry(1, 0, &[3, 3, 3], Parallel, 3, 2, 4, 5, true),
        line_entry(1, 0, &[4, 2, 2], ParallelCoplanar, 5, 1, 4, 2, true),
        line_entry(1, 0, &[3, 3, 2], ParallelCoplanar, 5, 1, 4, 4, true),
        line_entry(1, 0, &[3, 2, 2, 2], ParallelCoplanar, 5, 1, 4, 6, true),
        line_entry(1, 0, &[2, 2, 2, 2, 2], ParallelCoplanar, 5, 1, 4, 10, true),
        line_entry(2, 0, &[6, 6, 5], Generic, 5, 4, 6, 30, false),
        line_entry(2, 0, &[6, 5, 5, 5], Generic, 5, 4, 6, 131, false),
        line_entry(2, 0, &[5, 5, 5, 5, 5], Generic, 5, 4, 6, 680, false),
        line_entry(3, 0, &[8, 8], Generic, 8, 4, 8, 25, false),
        line_entry(1, 1, &[8], Generic, 4, 4, 8, 20, false),
        line_entry(2, 1, &[10], Generic, 6, 4, 10, 104, false),
        line_entry(3, 1, &[12], Generic, 8, 4, 12, 320, false),
        line_entry(4, 1, &[14], Generic, 10, 4, 14, 760, false),
        line_entry(5, 1, &[16], Generic, 12, 4, 16, 1540, false),
        line_entry(1, 2, &[11], Generic, 7, 4, 11, 1964, false),
        point_entry(1, 0, 2, 2, 1),
        point_entry(2, 0, 2, 3, 1),
        point_entry(2, 0, 5, 2, 1),
        point_entry(3, 0, 8, 2, 1),
        point_entry(1, 1, 1, 4, 48),
        point_entry(2, 2, 1, 7, 9609),
        point_entry(1, 1, 5, 2, 598),
        point_entry(2, 1, 8, 2, 2993),
        point_entry(0, 2, 3, 2, 1136),
    ]
}

/// Parsed form of a label: `(d, δ, counts, class)` or a point problem.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedLabel {
    Lines {
        d: usize,
        delta: usize,
        counts: Vec<usize>,
        class: StructureClass,
    },
    Points {
        d: usize,
        delta: usize,
        points: usize,
        images: usize,
    },
}

/// Parses labels such as `δ1(3³)`, `d1(2^5)PC`, `delta1(4,3)`, `d3[8x2]`.
pub fn parse_label(label: &str) -> Result<ParsedLabel, SolverError> {
    let bad = || SolverError::UnknownLabel(label.to_string());
    let s = label.trim().replace("delta", "δ").replace('x', "×");
    let mut chars = s.chars().peekable();
    let read_num = |chars: &mut std::iter::Peekable<std::str::Chars>| -> Option<usize> {
        let mut t = String::new();
        while let Some(c) = chars.peek() {
            if c.is_ascii_digit() {
                t.push(*c);
                chars.next();
            } else {
                break;
            }
        }
        t.parse().ok()
    };
    let mut d = 0;
    let mut delta = 0;
    if chars.peek() == Some(&'d') {
        chars.next();
        d = read_num(&mut chars).ok_or_else(bad)?;
    }
    if chars.peek() == Some(&'δ') {
        chars.next();
        delta = read_num(&mut chars).ok_or_else(bad)?;
    }
    match chars.next() {
        Some('(') => {
            let rest: String = chars.collect();
            let close = rest.find(')').ok_or_else(bad)?;
            let inner = &rest[..close];
            let suffix = &rest[close + 1..];
            let class = match suffix {
                "" => StructureClass::Generic,
                "P" => StructureClass::Parallel,
                "PC" => StructureClass::ParallelCoplanar,
                _ => return Err(bad()),
            };
            let mut counts = Vec::new();
            for item in inner.split(',') {
                let item = item.trim();
                let (base, exp) = if let Some((b, e)) = item.split_once('^') {
                    (b.to_string(), e.parse::<usize>().map_err(|_| bad())?)
                } else {
                    let base: String = item.chars().take_while(|c| c.is_ascii_digit()).collect();
                    let sup: String = item.chars().skip(base.chars().count()).collect();
                    let exp = if sup.is_empty() {
                        1
                    } else {
                        sup.chars()
                            .map(|c| SUPERSCRIPTS.iter().position(|s| *s == c))
                            .try_fold(0usize, |acc, v| v.map(|v| acc * 10 + v))
                            .ok_or_else(bad)?
                    };
                    (base, exp)
                };
                let n: usize = base.parse().map_err(|_| bad())?;
                counts.extend(std::iter::repeat(n).take(exp));
            }
            if counts.is_empty() {
                return Err(bad());
            }
            counts.sort_unstable_by(|a, b| b.cmp(a));
            Ok(ParsedLabel::Lines {
                d,
                delta,
                counts,
                class,
            })
        }
        Some('[') => {
            let rest: String = chars.collect();
            let inner = rest.strip_suffix(']').ok_or_else(bad)?;
            let (p, k) = inner.split_once('×').ok_or_else(bad)?;
            Ok(ParsedLabel::Points {
                d,
                delta,
                points: p.trim().parse().map_err(|_| bad())?,
                images: k.trim().parse().map_err(|_| bad())?,
            })
        }
        _ => Err(bad()),
    }
}

/// Finds a problem by label. Point problems of the degree-1 family
/// (`δ = 0`, `p = 3d − 1`, two images) are recognized for every `d ≥ 1`.
pub fn lookup(label: &str) -> Result<ProblemSpec, SolverError> {
    let parsed = parse_label(label)?;
    for spec in catalog() {
        if parse_label(&spec.label)? == parsed {
            return Ok(spec);
        }
    }
    if let ParsedLabel::Points {
        d,
        delta: 0,
        points,
        images: 2,
    } = parsed
    {
        if d >= 1 && points == 3 * d - 1 {
            return Ok(point_entry(d, 0, points, 2, 1));
        }
    }
    Err(SolverError::UnknownLabel(label.to_string()))
}

// ---------------------------------------------------------------------------
// Observations and solutions

/// One image of a world point; `x` may be omitted where it is implied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointObs {
    pub x: Option<f64>,
    pub y: f64,
}

impl From<ImagePoint> for PointObs {
    fn from(p: ImagePoint) -> Self {
        Self { x: Some(p.x), y: p.y }
    }
}

/// Labeled image measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationSet {
    /// Per line, the sampled points of its image curve.
    Lines(Vec<Vec<ImagePoint>>),
    /// Per world point, its images.
    Points(Vec<Vec<PointObs>>),
}

impl ObservationSet {
    pub fn line_counts(&self) -> Vec<usize> {
        match self {
            ObservationSet::Lines(l) => l.iter().map(|v| v.len()).collect(),
            ObservationSet::Points(_) => Vec::new(),
        }
    }
}

/// Camera motion of a candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    /// Pure rotation with `A(x) = x·a1`, `C = 0`.
    Rotation { a1: Vector3<f64> },
    /// Pure translation `C(x) = Σ_k x^k coeffs[k−1]`, `R = I`.
    Translation { coeffs: Vec<Vector3<f64>> },
}

impl Motion {
    pub fn camera(&self) -> RSCamera {
        match self {
            Motion::Rotation { a1 } => RSCamera::from_coeffs(&[Vector3::zeros()], &[Vector3::zeros(), *a1]),
            Motion::Translation { coeffs } => {
                let mut c = vec![Vector3::zeros()];
                c.extend_from_slice(coeffs);
                RSCamera::from_coeffs(&c, &[Vector3::zeros()])
            }
        }
    }
}

/// Reconstructed structure of a candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    /// Planes through the camera center, `q = (q₁, q₂, 1)`.
    Planes(Vec<Vector3<f64>>),
    /// Shared direction `Δ = (1, Δ₂, Δ₃)`, one point `(0, L_y, L_z)` per line.
    ParallelLines {
        direction: Vector3<f64>,
        points: Vec<Vector3<f64>>,
    },
    /// Lines `P₀ + λᵢ P_d` with direction Δ in the plane through `P₀ = (0,0,1)`.
    CoplanarLines {
        direction: Vector3<f64>,
        pd_z: f64,
        lambdas: Vec<f64>,
    },
    /// World points in the `X₄ = 1` chart.
    Points(Vec<Vector3<f64>>),
}

impl Structure {
    /// World lines for line structures.
    pub fn lines(&self) -> Vec<PluckerLine> {
        let through = |p: Vector3<f64>, d: Vector3<f64>| PluckerLine {
            direction: d,
            moment: p.cross(&d),
        };
        match self {
            Structure::ParallelLines { direction, points } => {
                points.iter().map(|p| through(*p, *direction)).collect()
            }
            Structure::CoplanarLines {
                direction,
                pd_z,
                lambdas,
            } => lambdas
                .iter()
                .map(|l| through(Vector3::new(0.0, *l, 1.0 + l * pd_z), *direction))
                .collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub motion: Motion,
    pub structure: Structure,
    /// Largest relative constraint residual.
    pub residual: f64,
    pub real: bool,
    /// Largest imaginary part of the raw solution.
    pub max_imag: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub paths: usize,
    pub converged: usize,
    pub diverged: usize,
    pub singular: usize,
    /// Distinct finite regular solutions before the real filter.
    pub distinct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSet {
    pub spec: String,
    pub candidates: Vec<Candidate>,
    pub diagnostics: Diagnostics,
}

impl SolutionSet {
    pub fn real_candidates(&self) -> impl Iterator<Item = &Candidate> {
        self.candidates.iter().filter(|c| c.real)
    }
}

// ---------------------------------------------------------------------------
// Constraint assembly

fn cayley_mpoly(a: &MPoly, b: &MPoly, c: &MPoly) -> [[MPoly; 3]; 3] {
    let n = a.nvars();
    let one = MPoly::constant(n, 1.0);
    let aa = a.mul(a);
    let bb = b.mul(b);
    let cc = c.mul(c);
    let ab = a.mul(b);
    let ac = a.mul(c);
    let bc = b.mul(c);
    [
        [one.add(&aa).sub(&bb).sub(&cc), ab.sub(c).scale(2.0), ac.add(b).scale(2.0)],
        [ab.add(c).scale(2.0), one.sub(&aa).add(&bb).sub(&cc), bc.sub(a).scale(2.0)],
        [ac.sub(b).scale(2.0), bc.add(a).scale(2.0), one.sub(&aa).sub(&bb).add(&cc)],
    ]
}

fn cross_mpoly(a: &[MPoly; 3], b: &[MPoly; 3]) -> [MPoly; 3] {
    [
        a[1].mul(&b[2]).sub(&a[2].mul(&b[1])),
        a[2].mul(&b[0]).sub(&a[0].mul(&b[2])),
        a[0].mul(&b[1]).sub(&a[1].mul(&b[0])),
    ]
}

fn line_spec(spec: &ProblemSpec) -> Result<(), SolverError> {
    if spec.measurement != Measurement::LinePoints {
        return Err(SolverError::BadObservations("expected a line problem".into()));
    }
    if !spec.is_balanced() {
        return Err(SolverError::NotBalanced(spec.label.clone()));
    }
    Ok(())
}

fn check_counts(spec: &ProblemSpec, obs: &[Vec<ImagePoint>]) -> Result<(), SolverError> {
    let counts: Vec<usize> = obs.iter().map(|l| l.len()).collect();
    if counts != spec.lines {
        return Err(SolverError::BadObservations(format!(
            "point counts {:?} do not match {:?}",
            counts, spec.lines
        )));
    }
    Ok(())
}

/// Unknown layout and variable groups of a line problem.
pub fn unknown_layout(spec: &ProblemSpec) -> (usize, Vec<Vec<usize>>) {
    let l = spec.lines.len();
    match (spec.d, spec.delta, spec.structure_class) {
        (0, 1, _) => {
            let mut g = vec![vec![0, 1, 2]];
            for i in 0..l {
                g.push(vec![3 + 2 * i, 4 + 2 * i]);
            }
            (3 + 2 * l, g)
        }
        (1, 0, StructureClass::Parallel) => {
            let n = 3 + 2 * l;
            (n, vec![vec![0, 1], (2..n).collect()])
        }
        _ => {
            let n = 5 + l;
            let mut g = vec![vec![0, 1], vec![2, 3, 4]];
            for i in 0..l {
                g.push(vec![5 + i]);
            }
            (n, g)
        }
    }
}

fn check_line_problem(spec: &ProblemSpec) -> Result<(), SolverError> {
    line_spec(spec)?;
    let supported = matches!(
        (spec.d, spec.delta, spec.structure_class),
        (0, 1, StructureClass::Generic) | (1, 0, StructureClass::Parallel) | (1, 0, StructureClass::ParallelCoplanar)
    );
    if !spec.implemented || !supported {
        return Err(SolverError::Unimplemented {
            label: spec.label.clone(),
            degree: spec.degree,
        });
    }
    Ok(())
}

/// Point-on-line constraints with the image coordinates as parameters, in
/// the order `x, y` of each point, line after line. Unknown layout:
/// - pure rotation: `[α, β, γ, q₁¹, q₂¹, …]` with `q³ = 1`;
/// - parallel: `[Δ₂, Δ₃, b₁, c₁, L_y¹, L_y², L_z², …]` with `Δ₁ = 1`, `a₁ = 0`, `L_z¹ = 1`;
/// - parallel coplanar: `[Δ₂, Δ₃, b₁, c₁, P_zd, λ₁, …]`.
pub fn assemble_parametric(spec: &ProblemSpec) -> Result<ParametricSystem, SolverError> {
    check_line_problem(spec)?;
    let (n, _) = unknown_layout(spec);
    let m = 2 * spec.lines.iter().sum::<usize>();
    let nv = n + m;
    let var = |i: usize| MPoly::var(nv, i);
    let cst = |c: f64| MPoly::constant(nv, c);
    let mut eqs = Vec::new();
    let mut next = n;
    let mut coords = || {
        let xy = (var(next), var(next + 1));
        next += 2;
        xy
    };
    let dot_u = |x: &MPoly, y: &MPoly, w: &[MPoly; 3]| w[0].mul(x).add(&w[1].mul(y)).add(&w[2]);
    if spec.d == 0 {
        for (i, &count) in spec.lines.iter().enumerate() {
            let q = [var(3 + 2 * i), var(4 + 2 * i), cst(1.0)];
            for _ in 0..count {
                let (x, y) = coords();
                let r = cayley_mpoly(&var(0).mul(&x), &var(1).mul(&x), &var(2).mul(&x));
                let w: [MPoly; 3] = std::array::from_fn(|k| {
                    r[k][0].mul(&q[0]).add(&r[k][1].mul(&q[1])).add(&r[k][2].mul(&q[2]))
                });
                eqs.push(dot_u(&x, &y, &w));
            }
        }
    } else {
        let dir = [cst(1.0), var(0), var(1)];
        for (i, &count) in spec.lines.iter().enumerate() {
            let point: [MPoly; 3] = if spec.structure_class == StructureClass::Parallel {
                if i == 0 {
                    [cst(0.0), var(4), cst(1.0)]
                } else {
                    [cst(0.0), var(3 + 2 * i), var(4 + 2 * i)]
                }
            } else {
                let lam = var(5 + i);
                [cst(0.0), lam.clone(), cst(1.0).add(&lam.mul(&var(4)))]
            };
            for _ in 0..count {
                let (x, y) = coords();
                let c = [cst(0.0), var(2).mul(&x), var(3).mul(&x)];
                let diff: [MPoly; 3] = std::array::from_fn(|k| c[k].sub(&point[k]));
                eqs.push(dot_u(&x, &y, &cross_mpoly(&dir, &diff)));
            }
        }
    }
    Ok(ParametricSystem::new(eqs, n)?)
}

/// Image coordinates flattened in the parameter order of `assemble_parametric`.
pub fn observation_params(spec: &ProblemSpec, obs: &ObservationSet) -> Result<Vec<f64>, SolverError> {
    let ObservationSet::Lines(lines) = obs else {
        return Err(SolverError::BadObservations("expected line observations".into()));
    };
    check_counts(spec, lines)?;
    Ok(lines.iter().flatten().flat_map(|u| [u.x, u.y]).collect())
}

/// Point-on-line constraints at the observed image points (see
/// `assemble_parametric` for the unknown layout).
pub fn assemble_constraints(spec: &ProblemSpec, obs: &ObservationSet) -> Result<PolySystem, SolverError> {
    check_line_problem(spec)?;
    let params = observation_params(spec, obs)?;
    Ok(assemble_parametric(spec)?.instantiate(&params)?)
}

/// Decodes a solution vector of `assemble_constraints` into motion and structure.
pub fn decode_solution(spec: &ProblemSpec, x: &[f64]) -> (Motion, Structure) {
    let l = spec.lines.len();
    match (spec.d, spec.delta, spec.structure_class) {
        (0, _, _) => (
            Motion::Rotation {
                a1: Vector3::new(x[0], x[1], x[2]),
            },
            Structure::Planes(
                (0..l)
                    .map(|i| Vector3::new(x[3 + 2 * i], x[4 + 2 * i], 1.0))
                    .collect(),
            ),
        ),
        (_, _, StructureClass::Parallel) => {
            let mut pts = vec![Vector3::new(0.0, x[4], 1.0)];
            for i in 1..l {
                pts.push(Vector3::new(0.0, x[3 + 2 * i], x[4 + 2 * i]));
            }
            (
                Motion::Translation {
                    coeffs: vec![Vector3::new(0.0, x[2], x[3])],
                },
                Structure::ParallelLines {
                    direction: Vector3::new(1.0, x[0], x[1]),
                    points: pts,
                },
            )
        }
        _ => (
            Motion::Translation {
                coeffs: vec![Vector3::new(0.0, x[2], x[3])],
            },
            Structure::CoplanarLines {
                direction: Vector3::new(1.0, x[0], x[1]),
                pd_z: x[4],
                lambdas: x[5..5 + l].to_vec(),
            },
        ),
    }
}

/// Inverse of `decode_solution` (used to evaluate constraints at known truth).
pub fn encode_solution(spec: &ProblemSpec, motion: &Motion, structure: &Structure) -> Option<Vec<f64>> {
    match (motion, structure) {
        (Motion::Rotation { a1 }, Structure::Planes(q)) => {
            let mut x = vec![a1[0], a1[1], a1[2]];
            for p in q {
                x.push(p[0] / p[2]);
                x.push(p[1] / p[2]);
            }
            Some(x)
        }
        (Motion::Translation { coeffs }, Structure::ParallelLines { direction, points }) => {
            let v = coeffs.first()?;
            let mut x = vec![direction[1] / direction[0], direction[2] / direction[0], v[1], v[2]];
            x.push(points.first()?[1]);
            for p in points.iter().skip(1) {
                x.push(p[1]);
                x.push(p[2]);
            }
            let _ = spec;
            Some(x)
        }
        (
            Motion::Translation { coeffs },
            Structure::CoplanarLines {
                direction,
                pd_z,
                lambdas,
            },
        ) => {
            let v = coeffs.first()?;
            let mut x = vec![direction[1] / direction[0], direction[2] / direction[0], v[1], v[2], *pd_z];
            x.extend_from_slice(lambdas);
            Some(x)
        }
        _ => None,
    }
}

/// How line problems are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineStrategy {
    /// Track every path of a multi-homogeneous start system.
    MultiHomogeneous,
    /// Track the cataloged number of paths from a cached generic instance.
    #[default]
    Parameter,
}

/// Solutions of one generic instance, used as start points.
#[derive(Debug, Clone)]
pub struct StartInstance {
    pub params: Vec<f64>,
    pub solutions: Vec<Vec<C64>>,
}

/// Attempts at finding a generic instance with the full solution count.
const START_ATTEMPTS: u64 = 20;

fn start_cache() -> &'static Mutex<HashMap<String, Arc<StartInstance>>> {
    static CACHE: OnceLock<Mutex<HashMap<String, Arc<StartInstance>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Solves random image data until the number of solutions equals the
/// cataloged degree; deterministic per problem.
pub fn start_instance(spec: &ProblemSpec) -> Result<Arc<StartInstance>, SolverError> {
    if let Some(s) = start_cache().lock().expect("cache lock").get(&spec.label) {
        return Ok(s.clone());
    }
    let sys = assemble_parametric(spec)?;
    let (_, groups) = unknown_layout(spec);
    let mut best: Option<StartInstance> = None;
    for attempt in 0..START_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + attempt);
        let params: Vec<f64> = (0..sys.n_params()).map(|_| rng.gen_range(-0.4..0.4)).collect();
        let cfg = TrackerConfig {
            rng_seed: attempt,
            ..TrackerConfig::default()
        };
        let Ok(out) = homotopy_solve_with(
            &sys.instantiate(&params)?,
            &StartSystem::MultiHomogeneous(groups.clone()),
            &cfg,
        ) else {
            continue;
        };
        let found = out.solutions.len();
        if best.as_ref().map_or(true, |b| found > b.solutions.len()) {
            best = Some(StartInstance {
                params,
                solutions: out.solutions,
            });
        }
        if found == spec.degree {
            break;
        }
    }
    let best = best.ok_or(SolverError::Tracker(PolyError::NoConvergedPaths))?;
    if best.solutions.len() != spec.degree {
        log::warn!(
            "{}: start instance has {} of {} solutions",
            spec.label,
            best.solutions.len(),
            spec.degree
        );
    }
    let best = Arc::new(best);
    start_cache()
        .lock()
        .expect("cache lock")
        .insert(spec.label.clone(), best.clone());
    Ok(best)
}

fn to_solution_set(spec: &ProblemSpec, out: HomotopySolutions) -> SolutionSet {
    let diagnostics = Diagnostics {
        paths: out.paths.len(),
        converged: out.count(PathStatus::Converged),
        diverged: out.count(PathStatus::Diverged),
        singular: out.count(PathStatus::Singular),
        distinct: out.solutions.len(),
    };
    let candidates = out
        .solutions
        .iter()
        .zip(&out.residuals)
        .map(|(s, r)| {
            let re: Vec<f64> = s.iter().map(|c| c.re).collect();
            let (motion, structure) = decode_solution(spec, &re);
            Candidate {
                motion,
                structure,
                residual: *r,
                real: is_real(s),
                max_imag: s.iter().fold(0.0f64, |m, c| m.max(c.im.abs())),
            }
        })
        .collect();
    SolutionSet {
        spec: spec.label.clone(),
        candidates,
        diagnostics,
    }
}

/// Solves a line problem with the chosen strategy.
pub fn solve_lines_with(
    spec: &ProblemSpec,
    obs: &ObservationSet,
    cfg: &TrackerConfig,
    strategy: LineStrategy,
) -> Result<SolutionSet, SolverError> {
    let out = match strategy {
        LineStrategy::MultiHomogeneous => {
            let sys = assemble_constraints(spec, obs)?;
            let (_, groups) = unknown_layout(spec);
            homotopy_solve_with(&sys, &StartSystem::MultiHomogeneous(groups), cfg)?
        }
        LineStrategy::Parameter => {
            check_line_problem(spec)?;
            let params = observation_params(spec, obs)?;
            let sys = assemble_parametric(spec)?;
            let start = start_instance(spec)?;
            parameter_homotopy(&sys, &start.params, &start.solutions, &params, cfg)?
        }
    };
    Ok(to_solution_set(spec, out))
}

fn solve_lines(spec: &ProblemSpec, obs: &ObservationSet, cfg: &TrackerConfig) -> Result<SolutionSet, SolverError> {
    solve_lines_with(spec, obs, cfg, LineStrategy::default())
}

fn require(spec: &ProblemSpec, d: usize, delta: usize, class: &[StructureClass]) -> Result<(), SolverError> {
    if spec.d != d || spec.delta != delta || !class.contains(&spec.structure_class) || !spec.implemented {
        return Err(SolverError::Unimplemented {
            label: spec.label.clone(),
            degree: spec.degree,
        });
    }
    Ok(())
}

/// Pure rotation `δ1(5)`, `δ1(4,3)`, `δ1(3³)`.
pub fn solve_rot_lines(obs: &ObservationSet, spec: &ProblemSpec, cfg: &TrackerConfig) -> Result<SolutionSet, SolverError> {
    require(spec, 0, 1, &[StructureClass::Generic])?;
    solve_lines(spec, obs, cfg)
}

/// Pure translation with parallel lines, `d1(4,3)P`, `d1(3³)P`.
pub fn solve_trans_parallel(obs: &ObservationSet, spec: &ProblemSpec, cfg: &TrackerConfig) -> Result<SolutionSet, SolverError> {
    require(spec, 1, 0, &[StructureClass::Parallel])?;
    solve_lines(spec, obs, cfg)
}

/// Pure translation with parallel coplanar lines.
pub fn solve_trans_parallel_coplanar(
    obs: &ObservationSet,
    spec: &ProblemSpec,
    cfg: &TrackerConfig,
) -> Result<SolutionSet, SolverError> {
    require(spec, 1, 0, &[StructureClass::ParallelCoplanar])?;
    solve_lines(spec, obs, cfg)
}

// ---------------------------------------------------------------------------
// Linear point solvers

/// Tolerance on the x-sum consistency for the d = 2 solver.
pub const XSUM_TOL: f64 = 1e-6;

/// Rows of the two linear constraints for image `(x, y)` of point `pi`.
fn point_rows(d: usize, npts: usize, pi: usize, x: f64, y: f64, want_x_row: bool) -> Vec<Vec<f64>> {
    let cols = 3 * d + 3 * npts;
    let px = 3 * d + 3 * pi;
    let mut rows = Vec::new();
    if want_x_row {
        // X1 − a(x) − x X3 + x c(x) = 0
        let mut r = vec![0.0; cols];
        for k in 1..=d {
            r[k - 1] = -x.powi(k as i32);
            r[2 * d + k - 1] = x.powi(k as i32 + 1);
        }
        r[px] = 1.0;
        r[px + 2] = -x;
        rows.push(r);
    }
    // y (X3 − c(x)) − X2 + b(x) = 0
    let mut r = vec![0.0; cols];
    for k in 1..=d {
        r[d + k - 1] = x.powi(k as i32);
        r[2 * d + k - 1] = -y * x.powi(k as i32);
    }
    r[px + 1] = -1.0;
    r[px + 2] = y;
    rows.push(r);
    rows
}

/// Degree-one point solvers for translating cameras (`δ = 0`, gauge `C(0) = 0`).
///
/// Accepts two points with two images each (`d = 1`), two points with three
/// images each where the third x of the second point may be omitted (`d = 2`),
/// or `3d − 1` points with two images each.
pub fn solve_points_linear(obs: &ObservationSet, d: usize) -> Result<SolutionSet, SolverError> {
    let ObservationSet::Points(pts) = obs else {
        return Err(SolverError::BadObservations("expected point observations".into()));
    };
    if d == 0 {
        return Err(SolverError::BadObservations("d must be at least 1".into()));
    }
    let npts = pts.len();
    let tie_sums = d == 2 && npts == 2 && pts.iter().all(|p| p.len() == 3);
    let label;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    if tie_sums {
        label = point_label(2, 0, 2, 3);
        let xs = |p: &[PointObs], k: usize| -> Result<f64, SolverError> {
            p[k].x.ok_or_else(|| SolverError::BadObservations("missing x coordinate".into()))
        };
        let z = xs(&pts[0], 0)? + xs(&pts[0], 1)? + xs(&pts[0], 2)? - xs(&pts[1], 0)? - xs(&pts[1], 1)?;
        if let Some(x23) = pts[1][2].x {
            let scale = 1.0 + pts.iter().flatten().filter_map(|p| p.x).fold(0.0f64, |m, v| m.max(v.abs()));
            if (x23 - z).abs() > XSUM_TOL * scale {
                return Err(SolverError::XSumMismatch((x23 - z).abs()));
            }
        }
        for (pi, p) in pts.iter().enumerate() {
            for (k, o) in p.iter().enumerate() {
                let last = pi == 1 && k == 2;
                let x = if last { z } else { xs(p, k)? };
                rows.extend(point_rows(d, npts, pi, x, o.y, !last));
            }
        }
    } else {
        if npts != 3 * d - 1 || pts.iter().any(|p| p.len() != 2) {
            return Err(SolverError::BadObservations(format!(
                "d = {d} needs {} points with 2 images each",
                3 * d - 1
            )));
        }
        label = point_label(d, 0, npts, 2);
        for (pi, p) in pts.iter().enumerate() {
            for o in p {
                let x = o.x.ok_or_else(|| SolverError::BadObservations("missing x coordinate".into()))?;
                rows.extend(point_rows(d, npts, pi, x, o.y, true));
            }
        }
    }
    let cols = 3 * d + 3 * npts;
    debug_assert_eq!(rows.len() + 1, cols);
    let nrows = rows.len().max(cols);
    let mut a = DMatrix::<f64>::zeros(nrows, cols);
    for (r, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            a[(r, c)] = *v;
        }
    }
    for mut r in a.row_iter_mut() {
        let n = r.norm();
        if n > 0.0 {
            r /= n;
        }
    }
    // column scaling keeps powers of x from dominating the conditioning
    let scales: Vec<f64> = (0..cols)
        .map(|c| a.column(c).amax().max(f64::MIN_POSITIVE))
        .collect();
    for c in 0..cols {
        let s = scales[c];
        a.column_mut(c).scale_mut(1.0 / s);
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    let smax = sv[order[cols - 1]];
    let ratio = sv[order[1]] / smax;
    if ratio < 1e-10 {
        return Err(SolverError::KernelDimensionError(ratio));
    }
    let mut v: Vec<f64> = (0..cols).map(|c| vt[(order[0], c)] / scales[c]).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    // orientation: most observed depths X3 − c(x) positive
    let depth_sign: f64 = pts
        .iter()
        .enumerate()
        .flat_map(|(pi, p)| p.iter().filter_map(move |o| o.x.map(|x| (pi, x))))
        .map(|(pi, x)| {
            let c: f64 = (1..=d).map(|k| v[2 * d + k - 1] * x.powi(k as i32)).sum();
            (v[3 * d + 3 * pi + 2] - c).signum()
        })
        .sum();
    if depth_sign < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let coeffs: Vec<Vector3<f64>> = (0..d).map(|k| Vector3::new(v[k], v[d + k], v[2 * d + k])).collect();
    let points: Vec<Vector3<f64>> = (0..npts)
        .map(|i| Vector3::new(v[3 * d + 3 * i], v[3 * d + 3 * i + 1], v[3 * d + 3 * i + 2]))
        .collect();
    let residual = rows
        .iter()
        .map(|r| r.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>().abs())
        .fold(0.0, f64::max);
    Ok(SolutionSet {
        spec: label,
        candidates: vec![Candidate {
            motion: Motion::Translation { coeffs },
            structure: Structure::Points(points),
            residual,
            real: true,
            max_imag: 0.0,
        }],
        diagnostics: Diagnostics {
            paths: 0,
            converged: 1,
            diverged: 0,
            singular: 0,
            distinct: 1,
        },
    })
}

/// Dispatches to the solver of an implemented problem.
pub fn solve(spec: &ProblemSpec, obs: &ObservationSet, cfg: &TrackerConfig) -> Result<SolutionSet, SolverError> {
    if !spec.implemented {
        return Err(SolverError::Unimplemented {
            label: spec.label.clone(),
            degree: spec.degree,
        });
    }
    match spec.measurement {
        Measurement::WorldPoints { .. } => solve_points_linear(obs, spec.d),
        Measurement::LinePoints => match spec.structure_class {
            StructureClass::Generic => solve_rot_lines(obs, spec, cfg),
            StructureClass::Parallel => solve_trans_parallel(obs, spec, cfg),
            StructureClass::ParallelCoplanar => solve_trans_parallel_coplanar(obs, spec, cfg),
        },
    }
}

/// Complex evaluation helper for tests and diagnostics.
pub fn to_complex(x: &[f64]) -> Vec<C64> {
    x.iter().map(|v| C64::new(*v, 0.0)).collect()
}
