//! Polynomial rolling-shutter camera and forward projection of points and lines.

use nalgebra::{DMatrix, Matrix3, Matrix3x4, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::{uni_roots, UniPoly};

pub type WorldPoint = Vector4<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    /// Coefficient matrices do not have three rows.
    #[error("camera coefficient matrices must have 3 rows")]
    BadShape,
    /// The point lies on every scanline plane.
    #[error("scanline polynomial vanishes identically")]
    DegeneratePoint,
    /// The image point at this scanline is at infinity.
    #[error("image point at scanline x = {0} is at infinity")]
    AtInfinity(f64),
    /// Plücker coordinates violate the incidence relation or vanish.
    #[error("invalid Plücker coordinates")]
    InvalidLine,
    /// Gauge requested but C(0) or A(0) is nonzero.
    #[error("camera violates the gauge C(0)=0, A(0)=0")]
    GaugeViolation,
}

/// Image point: `x` is the scanline coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagePoint {
    pub x: f64,
    pub y: f64,
}

impl ImagePoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn homogeneous(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, 1.0)
    }
}

/// Unnormalized Cayley rotation of the quaternion `(α, β, γ, 1)`.
pub fn cayley(v: &Vector3<f64>) -> Matrix3<f64> {
    let (a, b, c) = (v[0], v[1], v[2]);
    Matrix3::new(
        1.0 + a * a - b * b - c * c,
        2.0 * (a * b - c),
        2.0 * (a * c + b),
        2.0 * (a * b + c),
        1.0 - a * a + b * b - c * c,
        2.0 * (b * c - a),
        2.0 * (a * c - b),
        2.0 * (b * c + a),
        1.0 - a * a - b * b + c * c,
    )
}

/// Cross-product matrix `[v]_x`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0)
}

/// Camera with center path `C(x)` of degree `d` and Cayley path `A(x)` of degree `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct RSCamera {
    d: usize,
    delta: usize,
    /// Column j holds the coefficient of `x^j` in the center path.
    c: DMatrix<f64>,
    /// Column j holds the coefficient of `x^j` in `(α, β, γ)`.
    a: DMatrix<f64>,
}

impl RSCamera {
    pub fn new(c: DMatrix<f64>, a: DMatrix<f64>) -> Result<Self, CameraError> {
        if c.nrows() != 3 || a.nrows() != 3 || c.ncols() == 0 || a.ncols() == 0 {
            return Err(CameraError::BadShape);
        }
        Ok(Self {
            d: c.ncols() - 1,
            delta: a.ncols() - 1,
            c,
            a,
        })
    }

    /// Build from coefficient vectors, index = power of x.
    pub fn from_coeffs(c: &[Vector3<f64>], a: &[Vector3<f64>]) -> Self {
        let cm = DMatrix::from_fn(3, c.len(), |r, k| c[k][r]);
        let am = DMatrix::from_fn(3, a.len(), |r, k| a[k][r]);
        Self::new(cm, am).expect("non-empty coefficient lists")
    }

    /// Global-shutter camera at the origin.
    pub fn static_camera() -> Self {
        Self::from_coeffs(&[Vector3::zeros()], &[Vector3::zeros()])
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn center_coeffs(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn rotation_coeffs(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn center_coeff(&self, k: usize) -> Vector3<f64> {
        Vector3::new(self.c[(0, k)], self.c[(1, k)], self.c[(2, k)])
    }

    pub fn rotation_coeff(&self, k: usize) -> Vector3<f64> {
        Vector3::new(self.a[(0, k)], self.a[(1, k)], self.a[(2, k)])
    }

    /// Camera order `1 + d + 2δ`.
    pub fn order(&self) -> usize {
        1 + self.d + 2 * self.delta
    }

    pub fn check_gauge(&self) -> Result<(), CameraError> {
        let scale = 1.0 + self.c.amax() + self.a.amax();
        if self.center_coeff(0).amax() > 1e-12 * scale || self.rotation_coeff(0).amax() > 1e-12 * scale
        {
            return Err(CameraError::GaugeViolation);
        }
        Ok(())
    }

    pub fn center(&self, x: f64) -> Vector3<f64> {
        eval_path(&self.c, x)
    }

    pub fn cayley_params(&self, x: f64) -> Vector3<f64> {
        eval_path(&self.a, x)
    }

    /// Unnormalized rotation at scanline `x`.
    pub fn rotation(&self, x: f64) -> Matrix3<f64> {
        cayley(&self.cayley_params(x))
    }

    pub fn to_poly(&self) -> PolyCamera {
        let cp = path_polys(&self.c);
        let ap = path_polys(&self.a);
        PolyCamera {
            rot: cayley_poly(&ap),
            center: cp,
        }
    }
}

fn eval_path(m: &DMatrix<f64>, x: f64) -> Vector3<f64> {
    let mut out = Vector3::zeros();
    for k in (0..m.ncols()).rev() {
        out = out * x + m.column(k);
    }
    out
}

fn path_polys(m: &DMatrix<f64>) -> [UniPoly; 3] {
    std::array::from_fn(|r| UniPoly::new(m.row(r).iter().copied().collect()))
}

fn cayley_poly(p: &[UniPoly; 3]) -> [[UniPoly; 3]; 3] {
    let one = UniPoly::constant(1.0);
    let (a, b, c) = (&p[0], &p[1], &p[2]);
    let aa = a.mul(a);
    let bb = b.mul(b);
    let cc = c.mul(c);
    let ab = a.mul(b);
    let ac = a.mul(c);
    let bc = b.mul(c);
    [
        [
            one.add(&aa).sub(&bb).sub(&cc),
            ab.sub(c).scale(2.0),
            ac.add(b).scale(2.0),
        ],
        [
            ab.add(c).scale(2.0),
            one.sub(&aa).add(&bb).sub(&cc),
            bc.sub(a).scale(2.0),
        ],
        [
            ac.sub(b).scale(2.0),
            bc.add(a).scale(2.0),
            one.sub(&aa).sub(&bb).add(&cc),
        ],
    ]
}

/// Camera with polynomial rotation matrix `R(x)` and center `C(x)`.
///
/// Closed under global similarity transforms, which a Cayley path is not.
#[derive(Debug, Clone)]
pub struct PolyCamera {
    pub rot: [[UniPoly; 3]; 3],
    pub center: [UniPoly; 3],
}

impl PolyCamera {
    /// Camera seeing the world transformed by `X -> s Q X + t`.
    pub fn transformed(&self, q: &Matrix3<f64>, t: &Vector3<f64>, s: f64) -> Self {
        // R'(x) = R(x) Q^T, C'(x) = s Q C(x) + t
        let rot = std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                (0..3).fold(UniPoly::zero(), |acc, k| acc.add(&self.rot[i][k].scale(q[(j, k)])))
            })
        });
        let center = std::array::from_fn(|i| {
            (0..3)
                .fold(UniPoly::constant(t[i]), |acc, k| {
                    acc.add(&self.center[k].scale(s * q[(i, k)]))
                })
        });
        Self { rot, center }
    }

    fn rot_times(&self, w: &[UniPoly; 3]) -> [UniPoly; 3] {
        std::array::from_fn(|i| {
            (0..3).fold(UniPoly::zero(), |acc, k| acc.add(&self.rot[i][k].mul(&w[k])))
        })
    }

    /// `P(x) X` as three polynomials in x.
    pub fn project_poly(&self, xw: &WorldPoint) -> [UniPoly; 3] {
        let w: [UniPoly; 3] =
            std::array::from_fn(|i| UniPoly::constant(xw[i]).sub(&self.center[i].scale(xw[3])));
        self.rot_times(&w)
    }

    /// `r(x) P(x) X` with `r(x) = (1, 0, -x)`.
    pub fn scanline_poly(&self, xw: &WorldPoint) -> UniPoly {
        let p = self.project_poly(xw);
        p[0].sub(&p[2].mul(&UniPoly::x()))
    }

    pub fn project_point(&self, xw: &WorldPoint) -> Result<Projection, CameraError> {
        let poly = self.scanline_poly(xw);
        let scale = xw.norm() * self.magnitude();
        if poly.max_abs() <= 1e-13 * scale {
            return Err(CameraError::DegeneratePoint);
        }
        let pp = self.project_poly(xw);
        if poly.degree() == 0 {
            return Ok(Projection {
                images: Vec::new(),
                complex_count: 0,
            });
        }
        let roots = uni_roots(&poly).map_err(|_| CameraError::DegeneratePoint)?;
        let mut images = Vec::new();
        for r in &roots {
            if r.im.abs() < 1e-7 * (1.0 + r.re.abs()) {
                let x = r.re;
                let depth = pp[2].eval(x);
                if depth.abs() > 1e-9 * xw.norm() {
                    images.push(ImagePoint::new(x, pp[1].eval(x) / depth));
                }
            }
        }
        images.sort_by(|a, b| a.x.total_cmp(&b.x));
        Ok(Projection {
            images,
            complex_count: roots.len(),
        })
    }

    /// Homogeneous image line `l(x) = R(x)(q + Δ × C(x))` as polynomials.
    pub fn line_poly(&self, line: &PluckerLine) -> [UniPoly; 3] {
        let d = line.direction;
        let c = &self.center;
        let cross: [UniPoly; 3] = [
            c[2].scale(d[1]).sub(&c[1].scale(d[2])),
            c[0].scale(d[2]).sub(&c[2].scale(d[0])),
            c[1].scale(d[0]).sub(&c[0].scale(d[1])),
        ];
        let w: [UniPoly; 3] =
            std::array::from_fn(|i| cross[i].add(&UniPoly::constant(line.moment[i])));
        self.rot_times(&w)
    }

    /// Affine components `(u1, u2, u0)` of `u(x) = r(x) × l(x)`.
    pub fn line_image_poly(&self, line: &PluckerLine) -> [UniPoly; 3] {
        let l = self.line_poly(line);
        let r = [UniPoly::constant(1.0), UniPoly::zero(), UniPoly::x().scale(-1.0)];
        [
            r[1].mul(&l[2]).sub(&r[2].mul(&l[1])),
            r[2].mul(&l[0]).sub(&r[0].mul(&l[2])),
            r[0].mul(&l[1]).sub(&r[1].mul(&l[0])),
        ]
    }

    fn magnitude(&self) -> f64 {
        let m = self.rot.iter().flatten().fold(0.0f64, |m, p| m.max(p.max_abs()));
        let c = self.center.iter().fold(0.0f64, |m, p| m.max(p.max_abs()));
        m * (1.0 + c)
    }
}

/// Result of projecting a world point.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// Real images in front of or behind the camera, sorted by scanline.
    pub images: Vec<ImagePoint>,
    /// Number of complex scanlines, the order witness.
    pub complex_count: usize,
}

/// World line in Plücker coordinates `[Δ : q]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PluckerLine {
    pub direction: Vector3<f64>,
    pub moment: Vector3<f64>,
}

impl PluckerLine {
    pub fn new(direction: Vector3<f64>, moment: Vector3<f64>) -> Result<Self, CameraError> {
        let dn = direction.norm();
        let qn = moment.norm();
        if dn == 0.0 && qn == 0.0 {
            return Err(CameraError::InvalidLine);
        }
        if direction.dot(&moment).abs() > 1e-10 * dn * qn.max(f64::MIN_POSITIVE) && qn > 0.0 {
            return Err(CameraError::InvalidLine);
        }
        Ok(Self { direction, moment })
    }

    /// Line through `p1` and `p2`: `Δ = p2 − p1`, `q = p1 × p2`.
    pub fn through(p1: &Vector3<f64>, p2: &Vector3<f64>) -> Self {
        Self {
            direction: p2 - p1,
            moment: p1.cross(p2),
        }
    }

    /// Point on the line closest to the origin.
    pub fn closest_point(&self) -> Vector3<f64> {
        self.direction.cross(&self.moment) / self.direction.norm_squared()
    }

    /// Stacked `(q, Δ)` vector.
    pub fn to_vector(&self) -> [f64; 6] {
        [
            self.moment[0],
            self.moment[1],
            self.moment[2],
            self.direction[0],
            self.direction[1],
            self.direction[2],
        ]
    }
}

/// `P(x) = cayley(A(x)) [I | −C(x)]`.
pub fn camera_matrix(cam: &RSCamera, x: f64) -> Matrix3x4<f64> {
    let r = cam.rotation(x);
    let c = cam.center(x);
    let mut p = Matrix3x4::zeros();
    p.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    p.set_column(3, &(-(r * c)));
    p
}

/// Scanline polynomial `r(x) P(x) X`, degree at most `1 + d + 2δ`.
pub fn scanline_poly(cam: &RSCamera, xw: &WorldPoint) -> UniPoly {
    cam.to_poly().scanline_poly(xw)
}

pub fn project_point(cam: &RSCamera, xw: &WorldPoint) -> Result<Projection, CameraError> {
    cam.to_poly().project_point(xw)
}

/// Image of `line` on scanline `x`.
pub fn project_line(cam: &RSCamera, line: &PluckerLine, x: f64) -> Result<ImagePoint, CameraError> {
    let l = cam.rotation(x) * (line.moment + line.direction.cross(&cam.center(x)));
    // u = r × l with r = (1, 0, −x): (x l2, −x l1 − l3, l2)
    let u0 = l[1];
    if u0.abs() <= 1e-12 * l.norm() || l.norm() == 0.0 {
        return Err(CameraError::AtInfinity(x));
    }
    Ok(ImagePoint::new(x, (-x * l[0] - l[2]) / u0))
}

/// Point-on-line constraint `uᵀ R(x)[Δ]ₓ(C(x) − L1)` at scanline `u.x`.
pub fn point_line_residual(
    u: &ImagePoint,
    cam: &RSCamera,
    direction: &Vector3<f64>,
    l1: &Vector3<f64>,
) -> f64 {
    let x = u.x;
    let w = direction.cross(&(cam.center(x) - l1));
    u.homogeneous().dot(&(cam.rotation(x) * w))
}

/// World point of `line` seen on scanline `x` (intersection with the scanline plane).
pub fn line_point_at_scanline(cam: &RSCamera, line: &PluckerLine, x: f64) -> Option<Vector3<f64>> {
    let r = Vector3::new(1.0, 0.0, -x);
    let n = cam.rotation(x).transpose() * r;
    let c = cam.center(x);
    let p0 = line.closest_point();
    let denom = n.dot(&line.direction);
    if denom.abs() < 1e-14 * n.norm() * line.direction.norm() {
        return None;
    }
    let s = -n.dot(&(p0 - c)) / denom;
    Some(p0 + line.direction * s)
}

/// Depth `(R(x)(X − C(x)))_3` of a world point on scanline `x`.
pub fn depth_at(cam: &RSCamera, x: f64, p: &Vector3<f64>) -> f64 {
    (cam.rotation(x) * (p - cam.center(x)))[2]
}

/// Homogeneous factorization of a line image: `u0 = t·ũ`, `u1 = v·ũ`.
#[derive(Debug, Clone)]
pub struct CurveFactorization {
    /// Common factor in the chart t = 1.
    pub common: UniPoly,
    /// Homogeneous degree `1 + d + 2δ` of `u`.
    pub degree: usize,
    /// Remainder size of dividing `u0` by `t`, relative to the coefficients.
    pub remainder_u0: f64,
    /// Remainder size of dividing `u1` by `v`, plus mismatch of the quotient.
    pub remainder_u1: f64,
}

/// Factor the image curve of `line` as in the degree count of line images.
pub fn line_curve_factorization(cam: &RSCamera, line: &PluckerLine) -> CurveFactorization {
    let pc = cam.to_poly();
    let u = pc.line_image_poly(line);
    let deg = cam.order();
    let scale = u.iter().fold(0.0f64, |m, p| m.max(p.max_abs())).max(f64::MIN_POSITIVE);
    // homogeneous u0 = Σ c_k v^k t^{D−k}: t divides it iff c_D = 0
    let rem0 = u[2].coeff(deg).abs() / scale;
    let common = UniPoly::new((0..deg).map(|k| u[2].coeff(k)).collect());
    // u1 = Σ e_k v^k t^{D−k}: v divides it iff e_0 = 0, quotient must equal ũ
    let mut rem1 = u[0].coeff(0).abs();
    for k in 0..deg {
        rem1 = rem1.max((u[0].coeff(k + 1) - common.coeff(k)).abs());
    }
    CurveFactorization {
        common,
        degree: deg,
        remainder_u0: rem0,
        remainder_u1: rem1 / scale,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cayley_examples() {
        assert_eq!(cayley(&Vector3::zeros()), Matrix3::identity());
        let m = cayley(&Vector3::new(1.0, 0.0, 0.0));
        let expect = Matrix3::new(2.0, 0.0, 0.0, 0.0, 0.0, -2.0, 0.0, 2.0, 0.0);
        assert_eq!(m, expect);
    }

    #[test]
    fn static_projection() {
        let cam = RSCamera::static_camera();
        let p = scanline_poly(&cam, &Vector4::new(1.0, 0.0, 2.0, 1.0));
        assert_eq!(p.coeffs(), &[1.0, -2.0]);
        let pr = project_point(&cam, &Vector4::new(0.0, 0.0, 1.0, 1.0)).unwrap();
        assert_eq!(pr.images, vec![ImagePoint::new(0.0, 0.0)]);
        let l = PluckerLine::new(Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0)).unwrap();
        let u = project_line(&cam, &l, 0.0).unwrap();
        assert!(u.x.abs() < 1e-15 && u.y.abs() < 1e-15);
    }

    #[test]
    fn camera_matrix_examples() {
        let cam = RSCamera::from_coeffs(
            &[Vector3::zeros(), Vector3::new(0.0, 0.0, 1.0)],
            &[Vector3::zeros()],
        );
        let p = camera_matrix(&cam, 2.0);
        assert_eq!(p.column(3).into_owned(), Vector3::new(0.0, 0.0, -2.0));
        assert_eq!(p.fixed_view::<3, 3>(0, 0).into_owned(), Matrix3::identity());
    }
}
