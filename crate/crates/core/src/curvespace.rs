//! Image curves `y·f(x) = g(x)` of world lines, curve fitting, the plane
//! representation of pure rotations and the pure-translation triangulation.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{cayley, ImagePoint, PluckerLine, RSCamera};
use crate::poly::UniPoly;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurveError {
    /// Too few or degenerate samples for a unique fit.
    #[error("rank-deficient fit: {0}")]
    RankDeficient(String),
    /// Denominator of the curve vanishes at the query.
    #[error("curve has a pole at x = {0}")]
    PoleAtX(f64),
    /// The γ pivot of the plane representation is (numerically) zero.
    #[error("plane representation pivot γ is degenerate")]
    PivotDegenerate,
    /// The matrix is not the plane representation of any rotation path.
    #[error("matrix is not a plane representation of a rotation path")]
    NotInImage,
    /// Curve lies on the tangency locus where triangulation is ambiguous.
    #[error("triangulation denominator Ξ vanishes")]
    DegenerateXi,
    /// Camera motion has no depth component (c₁ = 0).
    #[error("motion parallel to the image plane: no unique triangulation")]
    ParallelMotion,
    /// Invalid input shape or degree.
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Curve `y·f(x) = g(x)` with `deg g ≤ D`, `deg f ≤ D − 1`, stored as a
/// unit-norm vector `[Z_0..Z_D, Y_0..Y_{D−1}]` with first nonzero entry positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveHD {
    #[serde(rename = "D")]
    pub degree: usize,
    #[serde(rename = "Z")]
    pub z: Vec<f64>,
    #[serde(rename = "Y")]
    pub y: Vec<f64>,
}

impl CurveHD {
    pub fn new(z: Vec<f64>, y: Vec<f64>) -> Result<Self, CurveError> {
        if z.len() < 2 || y.len() + 1 != z.len() {
            return Err(CurveError::Invalid("need |Z| = |Y| + 1 ≥ 2".into()));
        }
        let degree = y.len();
        Self::from_vector(degree, &[z, y].concat())
    }

    /// From the stacked vector `[Z, Y]`.
    pub fn from_vector(degree: usize, v: &[f64]) -> Result<Self, CurveError> {
        if v.len() != 2 * degree + 1 {
            return Err(CurveError::Invalid("vector length must be 2D+1".into()));
        }
        let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(CurveError::Invalid("zero coefficient vector".into()));
        }
        let lead = v.iter().find(|c| c.abs() > 1e-14 * n).copied().unwrap_or(1.0);
        let s = lead.signum() / n;
        let v: Vec<f64> = v.iter().map(|c| c * s).collect();
        Ok(Self {
            degree,
            z: v[..=degree].to_vec(),
            y: v[degree + 1..].to_vec(),
        })
    }

    /// Image curve of `line` under `cam`, with `D` equal to the camera order.
    pub fn from_line(cam: &RSCamera, line: &PluckerLine) -> Result<Self, CurveError> {
        let u = cam.to_poly().line_image_poly(line);
        let dd = cam.order();
        let z: Vec<f64> = (0..=dd).map(|k| u[1].coeff(k)).collect();
        let y: Vec<f64> = (0..dd).map(|k| u[2].coeff(k)).collect();
        Self::from_vector(dd, &[z, y].concat())
    }

    pub fn vector(&self) -> Vec<f64> {
        [self.z.clone(), self.y.clone()].concat()
    }

    pub fn numerator(&self) -> UniPoly {
        UniPoly::new(self.z.clone())
    }

    pub fn denominator(&self) -> UniPoly {
        UniPoly::new(self.y.clone())
    }

    /// Coefficients rescaled to the chart `Z_0 = −1`, if `Z_0 ≠ 0`.
    pub fn chart_z0(&self) -> Option<Vec<f64>> {
        let z0 = self.z[0];
        if z0.abs() < 1e-14 {
            return None;
        }
        Some(self.vector().iter().map(|c| -c / z0).collect())
    }

    /// Sine-like projective distance between two curves of the same degree.
    pub fn distance(&self, other: &Self) -> f64 {
        let a = self.vector();
        let b = other.vector();
        // |a ∧ b| keeps full precision near zero, unlike sqrt(1 − (a·b)²)
        let mut s = 0.0;
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                let w = a[i] * b[j] - a[j] * b[i];
                s += w * w;
            }
        }
        s.sqrt()
    }
}

/// Fit result: curve plus per-point algebraic residuals `y·f(x) − g(x)`.
#[derive(Debug, Clone)]
pub struct CurveFit {
    pub curve: CurveHD,
    pub residuals: Vec<f64>,
}

/// Homogeneous least-squares fit of a curve in `H_D`.
pub fn fit_curve(points: &[ImagePoint], degree: usize) -> Result<CurveFit, CurveError> {
    if degree == 0 {
        return Err(CurveError::Invalid("D must be at least 1".into()));
    }
    let cols = 2 * degree + 1;
    if points.len() < 2 * degree {
        return Err(CurveError::RankDeficient(format!(
            "{} points cannot determine a curve with D = {}",
            points.len(),
            degree
        )));
    }
    let rows = points.len().max(cols);
    let mut a = DMatrix::<f64>::zeros(rows, cols);
    for (r, p) in points.iter().enumerate() {
        let mut xp = 1.0;
        for k in 0..=degree {
            a[(r, k)] = -xp;
            if k < degree {
                a[(r, degree + 1 + k)] = p.y * xp;
            }
            xp *= p.x;
        }
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    let smax = sv[order[cols - 1]];
    if sv[order[1]] < 1e-10 * smax {
        return Err(CurveError::RankDeficient(
            "second-smallest singular value vanishes".into(),
        ));
    }
    let v: Vec<f64> = vt.row(order[0]).iter().copied().collect();
    let curve = CurveHD::from_vector(degree, &v)?;
    let residuals = points
        .iter()
        .map(|p| p.y * curve.denominator().eval(p.x) - curve.numerator().eval(p.x))
        .collect();
    Ok(CurveFit { curve, residuals })
}

/// `g(x) / f(x)`.
pub fn eval_curve(c: &CurveHD, x: f64) -> Result<f64, CurveError> {
    let f = c.denominator().eval(x);
    let ynorm = c.y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if f.abs() < 1e-12 * ynorm || ynorm == 0.0 {
        return Err(CurveError::PoleAtX(x));
    }
    Ok(c.numerator().eval(x) / f)
}

/// Least-squares parabola `y = Z₂x² + Z₁x + Z₀`, returned as `(Z₂, Z₁, Z₀)`.
pub fn parabola_fit(points: &[ImagePoint]) -> Result<(f64, f64, f64), CurveError> {
    if points.len() < 3 {
        return Err(CurveError::RankDeficient("need at least 3 points".into()));
    }
    let a = DMatrix::from_fn(points.len(), 3, |r, c| points[r].x.powi(2 - c as i32));
    let b = DVector::from_iterator(points.len(), points.iter().map(|p| p.y));
    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    if sv.min() <= 1e-12 * smax {
        return Err(CurveError::RankDeficient(
            "fewer than 3 distinct scanlines".into(),
        ));
    }
    let sol = svd
        .solve(&b, 0.0)
        .map_err(|e| CurveError::RankDeficient(e.to_string()))?;
    Ok((sol[0], sol[1], sol[2]))
}

// ---------------------------------------------------------------------------
// Pure rotation: plane representation

/// Normal form of the 3-dimensional span of plane-image coefficient vectors
/// for a pure-rotation camera with `A(0) = 0`.
///
/// Rows correspond to the plane coordinates `(1, q₁, q₂)` of `q = (q₁, q₂, 1)`.
/// Columns follow the curve layout `[Z_0..Z_{2δ+1}, Y_0..Y_{2δ}]`; the columns
/// `Z_0`, `Y_1`, `Y_0` hold the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneRep {
    pub delta: usize,
    pub m: DMatrix<f64>,
}

impl PlaneRep {
    pub fn curve_degree(&self) -> usize {
        1 + 2 * self.delta
    }

    /// Pivot column indices for rows (1, q₁, q₂).
    pub fn pivots(&self) -> [usize; 3] {
        let dd = self.curve_degree();
        [0, dd + 2, dd + 1]
    }

    /// Columns reordered as `[Z_top..Z_0, Y_top..Y_0]` (descending powers).
    pub fn descending_layout(&self) -> DMatrix<f64> {
        let dd = self.curve_degree();
        let mut idx: Vec<usize> = (0..=dd).rev().collect();
        idx.extend((dd + 1..2 * dd + 1).rev());
        DMatrix::from_fn(3, idx.len(), |r, c| self.m[(r, idx[c])])
    }

    /// Relative distance of a curve coefficient vector from the row span.
    pub fn span_residual(&self, curve: &[f64]) -> f64 {
        let q = self.m.transpose().qr().q();
        let v = DVector::from_column_slice(curve);
        let proj = &q * (q.transpose() * &v);
        (v - proj).norm() / curve.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Coefficients (rows 1, q₁, q₂) before normalization.
fn plane_rows(coeffs: &[Vector3<f64>]) -> DMatrix<f64> {
    let delta = coeffs.len();
    let mut a = vec![Vector3::zeros()];
    a.extend_from_slice(coeffs);
    let cam = RSCamera::from_coeffs(&[Vector3::zeros()], &a);
    let pc = cam.to_poly();
    let dd = 1 + 2 * delta;
    let mut m = DMatrix::<f64>::zeros(3, 2 * dd + 1);
    // plane normals e3 (constant row), e1 (q1 row), e2 (q2 row)
    for (row, k) in [2usize, 0, 1].into_iter().enumerate() {
        let l: [UniPoly; 3] = std::array::from_fn(|i| pc.rot[i][k].clone());
        let g = l[0].mul(&UniPoly::x()).add(&l[2]).scale(-1.0);
        for p in 0..=dd {
            m[(row, p)] = g.coeff(p);
        }
        for p in 0..dd {
            m[(row, dd + 1 + p)] = l[1].coeff(p);
        }
    }
    m
}

/// Plane representation for `A(x) = Σ_{j≥1} A_j x^j` (`coeffs[j−1] = A_j`).
pub fn plane_rep(coeffs: &[Vector3<f64>]) -> Result<PlaneRep, CurveError> {
    if coeffs.is_empty() {
        return Err(CurveError::Invalid("rotation path must have degree ≥ 1".into()));
    }
    if coeffs[0][2].abs() < 1e-10 {
        return Err(CurveError::PivotDegenerate);
    }
    let m = plane_rows(coeffs);
    let rep = PlaneRep {
        delta: coeffs.len(),
        m: DMatrix::zeros(0, 0),
    };
    let piv = rep.pivots();
    let p = Matrix3::from_fn(|r, c| m[(r, piv[c])]);
    let pinv = p.try_inverse().ok_or(CurveError::PivotDegenerate)?;
    let pinv = DMatrix::from_fn(3, 3, |r, c| pinv[(r, c)]);
    Ok(PlaneRep {
        delta: coeffs.len(),
        m: pinv * m,
    })
}

/// Plane representation for `R(x) = cayley(x·(α, β, γ))`.
pub fn plane_rep_d0(a1: &Vector3<f64>) -> Result<PlaneRep, CurveError> {
    plane_rep(&[*a1])
}

/// Reads the rotation path back from its plane representation.
pub fn recover_rotation(rep: &PlaneRep) -> Result<Vec<Vector3<f64>>, CurveError> {
    let delta = rep.delta;
    if !(1..=3).contains(&delta) {
        return Err(CurveError::Invalid("rotation recovery supports δ ∈ {1,2,3}".into()));
    }
    let dd = rep.curve_degree();
    if rep.m.nrows() != 3 || rep.m.ncols() != 2 * dd + 1 {
        return Err(CurveError::Invalid("plane representation has the wrong shape".into()));
    }
    let n = &rep.m;
    let zc = |k: usize| k;
    let yc = |k: usize| dd + 1 + k;
    let mut al = vec![0.0; delta + 1];
    let mut be = vec![0.0; delta + 1];
    let mut ga = vec![0.0; delta + 1];
    al[1] = -n[(2, zc(1))] / 2.0;
    let top = n[(1, yc(2 * delta))];
    let mut gamma_candidates = Vec::new();
    if top.abs() > 1e-12 {
        gamma_candidates.push(-n[(2, zc(2 * delta + 1))] / (2.0 * top));
    }
    if delta == 1 {
        // 2γ(1 − β) = n2[Z2] with β = (1 + 2γ n1[Z1]) / 2
        let qa = -2.0 * n[(1, zc(1))];
        let qb = 1.0;
        let qc = -n[(2, zc(2))];
        if qa.abs() < 1e-14 {
            gamma_candidates.push(-qc / qb);
        } else {
            let disc = qb * qb - 4.0 * qa * qc;
            if disc >= 0.0 {
                let s = disc.sqrt();
                gamma_candidates.push((-qb + s) / (2.0 * qa));
                gamma_candidates.push((-qb - s) / (2.0 * qa));
            }
        }
    }
    let mut best: Option<(f64, Vec<Vector3<f64>>)> = None;
    for g1 in gamma_candidates {
        if !g1.is_finite() || g1.abs() < 1e-10 {
            continue;
        }
        ga[1] = g1;
        be[1] = (1.0 + 2.0 * g1 * n[(1, zc(1))]) / 2.0;
        for i in 1..delta {
            let conv = |u: &[f64], v: &[f64], s: usize| -> f64 {
                (1..s).map(|k| u[k] * v[s - k]).sum()
            };
            let sum_ab = conv(&al, &be, i + 1);
            ga[i + 1] = g1 * n[(1, yc(i + 1))] - sum_ab;
            let r12 = 2.0 * (conv(&al, &be, i) - ga[i]);
            let sum_bg = conv(&be, &ga, i + 1);
            al[i + 1] = (-n[(2, zc(i + 1))] - r12) / 2.0 - sum_bg;
            let r11 = conv(&al, &al, i) - conv(&be, &be, i) - conv(&ga, &ga, i);
            let sum_ag = conv(&al, &ga, i + 1);
            be[i + 1] = (2.0 * g1 * n[(1, zc(i + 1))] + r11) / 2.0 + sum_ag;
        }
        let coeffs: Vec<Vector3<f64>> = (1..=delta)
            .map(|k| Vector3::new(al[k], be[k], ga[k]))
            .collect();
        let coeffs = polish_rotation(n, coeffs);
        if let Ok(err) = rep_mismatch(n, &coeffs) {
            if best.as_ref().map_or(true, |(e, _)| err < *e) {
                best = Some((err, coeffs));
            }
        }
    }
    match best {
        Some((err, c)) if err <= 1e-6 * (1.0 + n.amax()) => Ok(c),
        _ => Err(CurveError::NotInImage),
    }
}

/// δ = 1 convenience form returning `(α, β, γ)`.
pub fn recover_rotation_d0(rep: &PlaneRep) -> Result<Vector3<f64>, CurveError> {
    if rep.delta != 1 {
        return Err(CurveError::Invalid("expected a δ = 1 representation".into()));
    }
    Ok(recover_rotation(rep)?[0])
}

fn rep_mismatch(n: &DMatrix<f64>, coeffs: &[Vector3<f64>]) -> Result<f64, CurveError> {
    let r = plane_rep(coeffs)?;
    Ok((&r.m - n).amax())
}

/// Gauss–Newton refinement of the read-off coefficients against all entries.
fn polish_rotation(n: &DMatrix<f64>, mut coeffs: Vec<Vector3<f64>>) -> Vec<Vector3<f64>> {
    let k = coeffs.len() * 3;
    let flat = |c: &[Vector3<f64>]| -> Vec<f64> { c.iter().flat_map(|v| v.iter().copied()).collect() };
    let unflat = |v: &[f64]| -> Vec<Vector3<f64>> {
        v.chunks(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect()
    };
    let resid = |c: &[Vector3<f64>]| -> Option<DVector<f64>> {
        let r = plane_rep(c).ok()?;
        Some(DVector::from_iterator(n.len(), (&r.m - n).iter().copied()))
    };
    for _ in 0..4 {
        let x = flat(&coeffs);
        let Some(r0) = resid(&coeffs) else { break };
        let mut jac = DMatrix::<f64>::zeros(n.len(), k);
        let mut ok = true;
        for j in 0..k {
            let h = 1e-6 * (1.0 + x[j].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            match (resid(&unflat(&xp)), resid(&unflat(&xm))) {
                (Some(rp), Some(rm)) => jac.set_column(j, &((rp - rm) / (2.0 * h))),
                _ => ok = false,
            }
        }
        if !ok {
            break;
        }
        let Ok(step) = jac.svd(true, true).solve(&r0, 1e-12) else { break };
        let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - s).collect();
        let cand = unflat(&cand);
        match resid(&cand) {
            Some(r1) if r1.norm() < r0.norm() => coeffs = cand,
            _ => break,
        }
    }
    coeffs
}

// ---------------------------------------------------------------------------
// Pure translation, d = 1

/// Linear map from Plücker vectors `(q, Δ)` to curve coefficients
/// `(Y₀, Y₁, Z₀, Z₁, Z₂)` for a camera with `C(x) = x(a₁, b₁, c₁)`, `R = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraMapD1 {
    pub m: SMatrix<f64, 5, 6>,
}

impl CameraMapD1 {
    pub fn rank(&self) -> usize {
        let sv = self.m.singular_values();
        let smax = sv.max();
        sv.iter().filter(|s| **s > 1e-12 * smax).count()
    }

    /// Image curve of `line` (D = 2).
    pub fn apply(&self, line: &PluckerLine) -> Result<CurveHD, CurveError> {
        let v = self.m * nalgebra::Vector6::from_column_slice(&line.to_vector());
        CurveHD::new(vec![v[2], v[3], v[4]], vec![v[0], v[1]])
    }
}

fn motion_d1(cam: &RSCamera) -> Result<Vector3<f64>, CurveError> {
    if cam.d() != 1 || cam.delta() != 0 {
        return Err(CurveError::Invalid("expected a camera with d = 1, δ = 0".into()));
    }
    Ok(cam.center_coeff(1))
}

pub fn linear_map_d1delta0(cam: &RSCamera) -> Result<CameraMapD1, CurveError> {
    let v = motion_d1(cam)?;
    let (a, b, c) = (v[0], v[1], v[2]);
    #[rustfmt::skip]
    let m = SMatrix::<f64, 5, 6>::from_row_slice(&[
        0.0, 1.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, -c, 0.0, a,
        0.0, 0.0, -1.0, 0.0, 0.0, 0.0,
        -1.0, 0.0, 0.0, -b, a, 0.0,
        0.0, 0.0, 0.0, 0.0, -c, b,
    ]);
    Ok(CameraMapD1 { m })
}

/// Unique world line imaged as `curve` by a `d = 1`, `δ = 0` camera.
pub fn triangulate_d1delta0(cam: &RSCamera, curve: &CurveHD) -> Result<PluckerLine, CurveError> {
    let v = motion_d1(cam)?;
    if curve.degree != 2 {
        return Err(CurveError::Invalid("expected a curve with D = 2".into()));
    }
    let (a, b, c) = (v[0], v[1], v[2]);
    if c.abs() <= 1e-12 * v.norm() || v.norm() == 0.0 {
        return Err(CurveError::ParallelMotion);
    }
    let (z0, z1, z2) = (curve.z[0], curve.z[1], curve.z[2]);
    let (y0, y1) = (curve.y[0], curve.y[1]);
    let xi = -b * c * y0 - a * b * y1 + c * c * z0 + a * c * z1 + a * a * z2;
    let scale = v.norm_squared() * curve.vector().iter().map(|x| x * x).sum::<f64>().sqrt();
    if xi.abs() < 1e-9 * scale {
        return Err(CurveError::DegenerateXi);
    }
    let q = Vector3::new((-a * z2 + b * y1 - c * z1) / c, y0, -z0);
    let d1 = (-a * y0 * z2 + b * y0 * y1 - c * y1 * z0) / xi;
    let d2 = (-a * a * z2 * z2 + 2.0 * a * b * y1 * z2 - a * c * z1 * z2 - b * b * y1 * y1
        + b * c * y1 * z1
        - c * c * z0 * z2)
        / (c * xi);
    let d3 = (a * y1 * z2 - b * y1 * y1 - c * y0 * z2 + c * y1 * z1) / xi;
    Ok(PluckerLine {
        direction: Vector3::new(d1, d2, d3),
        moment: q,
    })
}

/// Projective distance between two Plücker lines (0 when equal up to scale).
pub fn plucker_distance(a: &PluckerLine, b: &PluckerLine) -> f64 {
    let va = nalgebra::Vector6::from_column_slice(&a.to_vector()).normalize();
    let vb = nalgebra::Vector6::from_column_slice(&b.to_vector()).normalize();
    (va - vb).norm().min((va + vb).norm())
}

/// The normalized Cayley rotation, used for metric comparisons.
pub fn normalized_rotation(a: &Vector3<f64>) -> Matrix3<f64> {
    cayley(a) / (1.0 + a.norm_squared())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_rep_matches_closed_form_delta1() {
        let (a, b, g) = (0.1, 0.2, 0.3);
        let rep = plane_rep_d0(&Vector3::new(a, b, g)).unwrap();
        let m = rep.descending_layout();
        // columns (Z3, Z2, Z1, Z0, Y2, Y1, Y0)
        #[rustfmt::skip]
        let expect = [
            [(a * a * a - a * b * b + a * g * g) / g, a * a - b * b + g * g + 2.0 * b,
             (-2.0 * a * b + a) / g, 1.0, (-2.0 * a * a * b - 2.0 * b * g * g) / g, 0.0, 0.0],
            [(-a * a + b * b + g * g) / (2.0 * g), -a, (2.0 * b - 1.0) / (2.0 * g), 0.0,
             a * b / g, 1.0, 0.0],
            [-2.0 * a * b, -2.0 * b * g + 2.0 * g, -2.0 * a, 0.0, -a * a + b * b - g * g, 0.0, 1.0],
        ];
        for r in 0..3 {
            for c in 0..7 {
                assert!((m[(r, c)] - expect[r][c]).abs() < 1e-13, "({r},{c})");
            }
        }
        let back = recover_rotation_d0(&rep).unwrap();
        assert!((back - Vector3::new(a, b, g)).amax() < 1e-12);
    }

    #[test]
    fn linear_map_unit_motion() {
        let cam = RSCamera::from_coeffs(
            &[Vector3::zeros(), Vector3::new(0.0, 0.0, 1.0)],
            &[Vector3::zeros()],
        );
        let map = linear_map_d1delta0(&cam).unwrap();
        assert!(map.m.iter().all(|v| [0.0, 1.0, -1.0].contains(v)));
        assert_eq!(map.rank(), 5);
        let kernel = nalgebra::Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((map.m * kernel).norm() == 0.0);
    }

    #[test]
    fn parabola_examples() {
        let pts: Vec<ImagePoint> = [-1.0, 0.5, 2.0].iter().map(|&x| ImagePoint::new(x, x * x)).collect();
        let (a, b, c) = parabola_fit(&pts).unwrap();
        assert!((a - 1.0).abs() < 1e-12 && b.abs() < 1e-12 && c.abs() < 1e-12);
        let pts: Vec<ImagePoint> = [0.0, 1.0, 2.0, 3.0].iter().map(|&x| ImagePoint::new(x, 2.0 * x + 1.0)).collect();
        let (a, b, c) = parabola_fit(&pts).unwrap();
        assert!(a.abs() < 1e-12 && (b - 2.0).abs() < 1e-12 && (c - 1.0).abs() < 1e-12);
        let pts = vec![ImagePoint::new(1.0, 0.0); 4];
        assert!(matches!(parabola_fit(&pts), Err(CurveError::RankDeficient(_))));
    }

    #[test]
    fn fit_parabola_in_h2() {
        let pts: Vec<ImagePoint> = [-1.0, 0.5, 2.0, 3.0].iter().map(|&x| ImagePoint::new(x, x * x)).collect();
        let fit = fit_curve(&pts, 2).unwrap();
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));
        assert!((eval_curve(&fit.curve, 1.5).unwrap() - 2.25).abs() < 1e-12);
        let line = CurveHD::new(vec![0.0, 1.0], vec![1.0]).unwrap();
        assert!((eval_curve(&line, 3.0).unwrap() - 3.0).abs() < 1e-15);
    }
}
