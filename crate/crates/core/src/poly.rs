//! Polynomial substrate: univariate roots, sparse multivariate polynomials and a
//! projective predictor-corrector homotopy tracker for small square systems.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

pub type C64 = Complex64;

/// Relative threshold below which trailing coefficients are dropped.
pub const TRIM_RELATIVE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    /// All coefficients are numerically zero.
    #[error("polynomial is numerically zero")]
    ZeroPolynomial,
    /// Root finding needs degree at least one.
    #[error("polynomial has degree 0")]
    ConstantPolynomial,
    /// Number of equations differs from number of unknowns.
    #[error("system is not square: {equations} equations, {unknowns} unknowns")]
    NotSquare { equations: usize, unknowns: usize },
    /// An equation is constant.
    #[error("equation {0} has total degree 0")]
    ConstantEquation(usize),
    /// Start system root count exceeds the configured budget.
    #[error("start system has {paths} paths, budget is {max}")]
    PathBudgetExceeded { paths: usize, max: usize },
    /// Every tracked path failed or diverged.
    #[error("no path converged to a finite regular solution")]
    NoConvergedPaths,
    /// Variable groups do not partition the unknowns.
    #[error("variable groups must partition the unknowns")]
    BadGroups,
}

// ---------------------------------------------------------------------------
// Univariate polynomials

/// Real univariate polynomial with ascending coefficients, trimmed so that the
/// leading coefficient is nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct UniPoly {
    coeffs: Vec<f64>,
}

impl UniPoly {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        while coeffs.len() > 1 {
            let last = *coeffs.last().unwrap();
            if last.abs() < TRIM_RELATIVE * scale || last == 0.0 {
                coeffs.pop();
            } else {
                break;
            }
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: vec![0.0] }
    }

    pub fn constant(c: f64) -> Self {
        Self { coeffs: vec![c] }
    }

    /// The monomial `x`.
    pub fn x() -> Self {
        Self { coeffs: vec![0.0, 1.0] }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Coefficient of `x^k`, zero beyond the degree.
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn eval_c(&self, x: C64) -> C64 {
        self.coeffs
            .iter()
            .rev()
            .fold(C64::new(0.0, 0.0), |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() == 1 {
            return Self::zero();
        }
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Self::new((0..n).map(|k| self.coeff(k) + other.coeff(k)).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Self::new((0..n).map(|k| self.coeff(k) - other.coeff(k)).collect())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    /// Euclidean division: `self = q * divisor + r` with `deg r < deg divisor`.
    pub fn div_rem(&self, divisor: &Self) -> (Self, Self) {
        let dd = divisor.degree();
        let lead = divisor.coeffs[dd];
        if self.degree() < dd {
            return (Self::zero(), self.clone());
        }
        let mut rem = self.coeffs.clone();
        let mut quot = vec![0.0; self.degree() - dd + 1];
        for k in (0..quot.len()).rev() {
            let c = rem[k + dd] / lead;
            quot[k] = c;
            for (j, dc) in divisor.coeffs.iter().enumerate() {
                rem[k + j] -= c * dc;
            }
        }
        rem.truncate(dd.max(1));
        if dd == 0 {
            rem = vec![0.0];
        }
        // keep the raw remainder (no relative trim) so callers can read its size
        (Self::new(quot), Self { coeffs: rem })
    }
}

/// All complex roots (with multiplicity) via companion-matrix eigenvalues,
/// each refined by one Newton step.
pub fn uni_roots(p: &UniPoly) -> Result<Vec<C64>, PolyError> {
    if p.is_zero() {
        return Err(PolyError::ZeroPolynomial);
    }
    let n = p.degree();
    if n == 0 {
        return Err(PolyError::ConstantPolynomial);
    }
    let lead = p.coeffs[n];
    let mut comp = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        comp[(i, n - 1)] = -p.coeffs[i] / lead;
    }
    let eig = comp.complex_eigenvalues();
    let dp = p.derivative();
    Ok(eig
        .iter()
        .map(|&r| {
            let d = dp.eval_c(r);
            if d.norm() > 0.0 {
                let step = p.eval_c(r) / d;
                let polished = r - step;
                if p.eval_c(polished).norm() <= p.eval_c(r).norm() {
                    return polished;
                }
            }
            r
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Multivariate polynomials

/// Sparse real multivariate polynomial keyed by exponent vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MPoly {
    nvars: usize,
    terms: BTreeMap<Vec<u16>, f64>,
}

impl MPoly {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        if c != 0.0 {
            p.terms.insert(vec![0; nvars], c);
        }
        p
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut p = Self::zero(nvars);
        p.terms.insert(e, 1.0);
        p
    }

    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (Vec<u16>, f64)>) -> Self {
        let mut p = Self::zero(nvars);
        for (e, c) in terms {
            assert_eq!(e.len(), nvars);
            p.add_term(e, c);
        }
        p
    }

    fn add_term(&mut self, e: Vec<u16>, c: f64) {
        let entry = self.terms.entry(e).or_insert(0.0);
        *entry += c;
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u16>, &f64)> {
        self.terms.iter()
    }

    pub fn total_degree(&self) -> usize {
        self.terms
            .iter()
            .filter(|(_, c)| **c != 0.0)
            .map(|(e, _)| e.iter().map(|&k| k as usize).sum())
            .max()
            .unwrap_or(0)
    }

    /// Degree in the given subset of variables.
    pub fn degree_in(&self, vars: &[usize]) -> usize {
        self.terms
            .iter()
            .filter(|(_, c)| **c != 0.0)
            .map(|(e, _)| vars.iter().map(|&v| e[v] as usize).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), *c);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Vec<u16> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }

    pub fn eval(&self, x: &[C64]) -> C64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                e.iter()
                    .zip(x)
                    .fold(C64::new(*c, 0.0), |acc, (&k, xi)| acc * xi.powu(k as u32))
            })
            .sum()
    }

    /// Sum of absolute term values at `x`, a natural scale for residuals.
    pub fn eval_abs_terms(&self, x: &[C64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                e.iter()
                    .zip(x)
                    .fold(c.abs(), |acc, (&k, xi)| acc * xi.norm().powi(k as i32))
            })
            .sum()
    }
}

/// Square polynomial system.
#[derive(Debug, Clone)]
pub struct PolySystem {
    n_unknowns: usize,
    equations: Vec<MPoly>,
}

impl PolySystem {
    pub fn new(equations: Vec<MPoly>) -> Result<Self, PolyError> {
        let n = equations.first().map(|e| e.nvars()).unwrap_or(0);
        if equations.len() != n || equations.iter().any(|e| e.nvars() != n) {
            return Err(PolyError::NotSquare {
                equations: equations.len(),
                unknowns: n,
            });
        }
        if let Some(i) = equations.iter().position(|e| e.total_degree() == 0) {
            return Err(PolyError::ConstantEquation(i));
        }
        Ok(Self {
            n_unknowns: n,
            equations,
        })
    }

    pub fn n_unknowns(&self) -> usize {
        self.n_unknowns
    }

    pub fn equations(&self) -> &[MPoly] {
        &self.equations
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.equations.iter().map(|e| e.total_degree()).collect()
    }

    pub fn bezout_number(&self) -> usize {
        self.degrees()
            .iter()
            .fold(1usize, |acc, &d| acc.saturating_mul(d))
    }

    /// Relative residual of each equation: |f_i(x)| / (1 + sum of |terms|).
    pub fn relative_residual(&self, x: &[C64]) -> f64 {
        self.equations
            .iter()
            .map(|e| e.eval(x).norm() / (1.0 + e.eval_abs_terms(x)))
            .fold(0.0, f64::max)
    }
}

/// Polynomial system whose coefficients depend polynomially on parameters:
/// variables `0..n` are unknowns, the remaining `m` are parameters.
#[derive(Debug, Clone)]
pub struct ParametricSystem {
    n_unknowns: usize,
    n_params: usize,
    equations: Vec<MPoly>,
}

impl ParametricSystem {
    pub fn new(equations: Vec<MPoly>, n_unknowns: usize) -> Result<Self, PolyError> {
        let nv = equations.first().map(|e| e.nvars()).unwrap_or(0);
        if equations.len() != n_unknowns || nv < n_unknowns || equations.iter().any(|e| e.nvars() != nv) {
            return Err(PolyError::NotSquare {
                equations: equations.len(),
                unknowns: n_unknowns,
            });
        }
        Ok(Self {
            n_unknowns,
            n_params: nv - n_unknowns,
            equations,
        })
    }

    pub fn n_unknowns(&self) -> usize {
        self.n_unknowns
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn equations(&self) -> &[MPoly] {
        &self.equations
    }

    /// The system at fixed parameter values.
    pub fn instantiate(&self, params: &[f64]) -> Result<PolySystem, PolyError> {
        assert_eq!(params.len(), self.n_params);
        let n = self.n_unknowns;
        let eqs = self
            .equations
            .iter()
            .map(|e| {
                MPoly::from_terms(
                    n,
                    e.terms().map(|(ex, c)| {
                        let f: f64 = ex[n..]
                            .iter()
                            .zip(params)
                            .map(|(&k, p)| p.powi(k as i32))
                            .product();
                        (ex[..n].to_vec(), c * f)
                    }),
                )
            })
            .collect();
        PolySystem::new(eqs)
    }
}

/// Values and Jacobian of `sys` at `point`.
pub fn eval_and_jacobian(sys: &PolySystem, point: &[C64]) -> (DVector<C64>, DMatrix<C64>) {
    assert_eq!(point.len(), sys.n_unknowns);
    let compiled = Compiled::new(&sys.equations, &vec![0; sys.equations.len()], false);
    let n = sys.n_unknowns;
    let mut vals = vec![C64::new(0.0, 0.0); n];
    let mut jac = vec![C64::new(0.0, 0.0); n * n];
    compiled.eval(point, &mut vals, &mut jac);
    (
        DVector::from_vec(vals),
        DMatrix::from_row_slice(n, n, &jac),
    )
}

/// Flattened term lists for fast evaluation with gradients.
#[derive(Debug, Clone)]
struct Compiled {
    nz: usize,
    max_pow: usize,
    // per equation: terms of (coeff, sparse factors (var, power))
    eqs: Vec<Vec<(f64, Vec<(usize, u16)>)>>,
}

impl Compiled {
    /// With `homogenize`, variable 0 is the homogenizing coordinate and
    /// equation i is padded to degree `deg_i + pad[i]`.
    fn new(eqs: &[MPoly], pad: &[usize], homogenize: bool) -> Self {
        let n = eqs.first().map(|e| e.nvars()).unwrap_or(0);
        Self::with_params(eqs, n, pad, homogenize)
    }

    /// Variables from `n_unknowns` on are parameters: they take no part in
    /// homogenization and follow the unknowns in the column layout.
    fn with_params(eqs: &[MPoly], n_unknowns: usize, pad: &[usize], homogenize: bool) -> Self {
        let n = eqs.first().map(|e| e.nvars()).unwrap_or(0);
        let nz = if homogenize { n + 1 } else { n };
        let unknowns: Vec<usize> = (0..n_unknowns).collect();
        let mut max_pow = 1;
        let compiled = eqs
            .iter()
            .zip(pad)
            .map(|(eq, &pd)| {
                let deg = eq.degree_in(&unknowns) + pd;
                eq.terms()
                    .filter(|(_, c)| **c != 0.0)
                    .map(|(e, c)| {
                        let mut f: Vec<(usize, u16)> = Vec::new();
                        if homogenize {
                            let tdeg: usize = e[..n_unknowns].iter().map(|&k| k as usize).sum();
                            let h = (deg - tdeg) as u16;
                            if h > 0 {
                                f.push((0, h));
                            }
                        }
                        let off = usize::from(homogenize);
                        for (v, &k) in e.iter().enumerate() {
                            if k > 0 {
                                f.push((v + off, k));
                            }
                        }
                        for &(_, k) in &f {
                            max_pow = max_pow.max(k as usize);
                        }
                        (*c, f)
                    })
                    .collect()
            })
            .collect();
        Self {
            nz,
            max_pow,
            eqs: compiled,
        }
    }

    /// Writes values and the row-major Jacobian (rows = equations, `nz` columns).
    fn eval(&self, z: &[C64], vals: &mut [C64], jac: &mut [C64]) {
        let nz = self.nz;
        let mp = self.max_pow + 1;
        let mut pw = vec![C64::new(1.0, 0.0); nz * mp];
        for v in 0..nz {
            for k in 1..mp {
                pw[v * mp + k] = pw[v * mp + k - 1] * z[v];
            }
        }
        let zero = C64::new(0.0, 0.0);
        for (i, eq) in self.eqs.iter().enumerate() {
            let mut val = zero;
            let row = &mut jac[i * nz..(i + 1) * nz];
            row.iter_mut().for_each(|r| *r = zero);
            for (c, factors) in eq {
                let m = factors.len();
                let mut mono = C64::new(*c, 0.0);
                for &(v, k) in factors {
                    mono *= pw[v * mp + k as usize];
                }
                val += mono;
                for j in 0..m {
                    let (v, k) = factors[j];
                    let mut d = C64::new(*c * k as f64, 0.0) * pw[v * mp + k as usize - 1];
                    for (l, &(w, kw)) in factors.iter().enumerate() {
                        if l != j {
                            d *= pw[w * mp + kw as usize];
                        }
                    }
                    row[v] += d;
                }
            }
            vals[i] = val;
        }
    }
}

// ---------------------------------------------------------------------------
// Homotopy continuation

/// Tracker tolerances and budgets.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrackerConfig {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub corrector_tol: f64,
    pub max_corrector_iters: usize,
    pub endpoint_tol: f64,
    pub dedup_tol: f64,
    pub max_paths: usize,
    pub rng_seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            initial_step: 0.02,
            min_step: 1e-13,
            max_step: 0.1,
            corrector_tol: 1e-10,
            max_corrector_iters: 5,
            endpoint_tol: 1e-8,
            dedup_tol: 1e-6,
            max_paths: 20_000,
            rng_seed: 0,
        }
    }
}

/// Start system choice.
#[derive(Debug, Clone)]
pub enum StartSystem {
    /// `x_i^{d_i} = 1`.
    TotalDegree,
    /// Products of random linear forms, one factor per unit of degree in each
    /// variable group (the groups must partition the unknowns).
    MultiHomogeneous(Vec<Vec<usize>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathStatus {
    /// Reached a finite regular solution.
    Converged,
    /// Endpoint at or near infinity.
    Diverged,
    /// Step size collapsed or the endpoint is singular.
    Singular,
}

#[derive(Debug, Clone)]
pub struct PathReport {
    pub status: PathStatus,
    /// Affine endpoint when the path ended at a finite point.
    pub endpoint: Option<Vec<C64>>,
    pub steps: usize,
    pub t_reached: f64,
}

/// Output of a homotopy run.
#[derive(Debug, Clone)]
pub struct HomotopySolutions {
    /// Distinct finite regular solutions.
    pub solutions: Vec<Vec<C64>>,
    /// Relative residual of each solution.
    pub residuals: Vec<f64>,
    pub paths: Vec<PathReport>,
}

impl HomotopySolutions {
    pub fn count(&self, status: PathStatus) -> usize {
        self.paths.iter().filter(|p| p.status == status).count()
    }

    /// Number of paths that did not reach a finite regular endpoint.
    pub fn failed_paths(&self) -> usize {
        self.paths.len() - self.count(PathStatus::Converged)
    }
}

/// Whether every coordinate is numerically real.
pub fn is_real(x: &[C64]) -> bool {
    x.iter().all(|c| c.im.abs() < 1e-6 * (1.0 + c.re.abs()))
}

fn random_complex(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

enum StartEval {
    TotalDegree(Vec<usize>),
    Products(Vec<Vec<Vec<(usize, C64)>>>),
}

impl StartEval {
    fn eval(&self, z: &[C64], vals: &mut [C64], jac: &mut [C64]) {
        let nz = z.len();
        let zero = C64::new(0.0, 0.0);
        jac.iter_mut().for_each(|v| *v = zero);
        match self {
            StartEval::TotalDegree(degs) => {
                for (i, &d) in degs.iter().enumerate() {
                    let xi = z[i + 1];
                    let x0 = z[0];
                    vals[i] = xi.powu(d as u32) - x0.powu(d as u32);
                    jac[i * nz + i + 1] = xi.powu(d as u32 - 1) * d as f64;
                    jac[i * nz] = -x0.powu(d as u32 - 1) * d as f64;
                }
            }
            StartEval::Products(eqs) => {
                for (i, factors) in eqs.iter().enumerate() {
                    let lin: Vec<C64> = factors
                        .iter()
                        .map(|f| f.iter().map(|&(v, a)| a * z[v]).sum())
                        .collect();
                    vals[i] = lin.iter().product();
                    for (k, f) in factors.iter().enumerate() {
                        let others: C64 = lin
                            .iter()
                            .enumerate()
                            .filter(|(j, _)| *j != k)
                            .map(|(_, l)| *l)
                            .product();
                        for &(v, a) in f {
                            jac[i * nz + v] += a * others;
                        }
                    }
                }
            }
        }
    }
}

enum HomotopyKind {
    /// `(1 − t)F + tγG`.
    Straight {
        target: Compiled,
        start: StartEval,
        gamma: C64,
    },
    /// `F(z; p(t))` along `p(t) = (1 − t)p₁ + tp₀ + t(1 − t)b`.
    Parameter {
        system: Compiled,
        target: Vec<C64>,
        start: Vec<C64>,
        bump: Vec<C64>,
    },
}

struct Homotopy {
    n: usize,
    kind: HomotopyKind,
    patch: Vec<C64>,
}

impl Homotopy {
    /// Fills the (n+1)x(n+1) Jacobian in z and returns (H, dH/dt).
    fn eval(&self, z: &[C64], t: f64, jac: &mut DMatrix<C64>) -> (Vec<C64>, Vec<C64>) {
        let n = self.n;
        let nz = n + 1;
        let mut h = vec![C64::new(0.0, 0.0); nz];
        let mut ht = vec![C64::new(0.0, 0.0); nz];
        match &self.kind {
            HomotopyKind::Straight { target, start, gamma } => {
                let mut fv = vec![C64::new(0.0, 0.0); n];
                let mut fj = vec![C64::new(0.0, 0.0); n * nz];
                let mut gv = fv.clone();
                let mut gj = fj.clone();
                target.eval(z, &mut fv, &mut fj);
                start.eval(z, &mut gv, &mut gj);
                let a = 1.0 - t;
                let b = gamma * t;
                for i in 0..n {
                    h[i] = fv[i] * a + gv[i] * b;
                    ht[i] = gv[i] * gamma - fv[i];
                    for j in 0..nz {
                        jac[(i, j)] = fj[i * nz + j] * a + gj[i * nz + j] * b;
                    }
                }
            }
            HomotopyKind::Parameter {
                system,
                target,
                start,
                bump,
            } => {
                let m = target.len();
                let cols = nz + m;
                let mut w: Vec<C64> = z.to_vec();
                let mut dp = Vec::with_capacity(m);
                for k in 0..m {
                    w.push(target[k] * (1.0 - t) + start[k] * t + bump[k] * (t * (1.0 - t)));
                    dp.push(start[k] - target[k] + bump[k] * (1.0 - 2.0 * t));
                }
                let mut fv = vec![C64::new(0.0, 0.0); n];
                let mut fj = vec![C64::new(0.0, 0.0); n * cols];
                system.eval(&w, &mut fv, &mut fj);
                for i in 0..n {
                    h[i] = fv[i];
                    let row = &fj[i * cols..(i + 1) * cols];
                    ht[i] = row[nz..].iter().zip(&dp).map(|(a, b)| a * b).sum();
                    for j in 0..nz {
                        jac[(i, j)] = row[j];
                    }
                }
            }
        }
        let mut pz = C64::new(-1.0, 0.0);
        for j in 0..nz {
            jac[(n, j)] = self.patch[j];
            pz += self.patch[j] * z[j];
        }
        h[n] = pz;
        (h, ht)
    }

    fn tangent(&self, z: &[C64], t: f64, jac: &mut DMatrix<C64>) -> Option<Vec<C64>> {
        let (_, ht) = self.eval(z, t, jac);
        let rhs = DVector::from_iterator(ht.len(), ht.iter().map(|v| -v));
        let sol = jac.clone().lu().solve(&rhs)?;
        Some(sol.iter().copied().collect())
    }

    fn newton(
        &self,
        z: &mut [C64],
        t: f64,
        cfg: &TrackerConfig,
        jac: &mut DMatrix<C64>,
        max_first: f64,
    ) -> bool {
        let mut prev = f64::INFINITY;
        let mut first = true;
        for _ in 0..cfg.max_corrector_iters {
            let (h, _) = self.eval(z, t, jac);
            let rhs = DVector::from_iterator(h.len(), h.iter().map(|v| -v));
            let Some(dz) = jac.clone().lu().solve(&rhs) else {
                return false;
            };
            let step = dz.iter().fold(0.0f64, |m, c| m.max(c.norm()));
            let scale = z.iter().fold(0.0f64, |m, c| m.max(c.norm()));
            for (zi, d) in z.iter_mut().zip(dz.iter()) {
                *zi += d;
            }
            if !step.is_finite() {
                return false;
            }
            if first && step > max_first {
                return false;
            }
            first = false;
            if step <= cfg.corrector_tol * (1.0 + scale) {
                return true;
            }
            if step > NEWTON_CONTRACTION * prev {
                // stagnation at the roundoff floor of an ill-conditioned point
                return prev <= NEWTON_FLOOR * (1.0 + scale);
            }
            prev = step;
        }
        false
    }

    fn track(&self, mut z: Vec<C64>, cfg: &TrackerConfig) -> (Vec<C64>, f64, usize, bool) {
        let nz = self.n + 1;
        let mut jac = DMatrix::<C64>::zeros(nz, nz);
        let mut t = 1.0f64;
        let mut h = cfg.initial_step;
        let mut successes = 0;
        let mut steps = 0;
        while t > 0.0 {
            h = h.min(t).min(cfg.max_step);
            if t > ENDGAME_FINAL_T {
                // approach t = 0 geometrically so converging paths stay separated
                h = h.min(ENDGAME_RATIO * t);
            }
            let t1 = if h >= t { 0.0 } else { t - h };
            let dt = t1 - t;
            let mut ok = false;
            if let Some(pred) = self.rk4(&z, t, dt, &mut jac) {
                let stride = pred
                    .iter()
                    .zip(&z)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
                let zmax = z.iter().fold(0.0f64, |m, c| m.max(c.norm()));
                let max_first = CORRECTOR_TRUST * stride + cfg.corrector_tol * (1.0 + zmax);
                let mut cand = pred;
                if self.newton(&mut cand, t1, cfg, &mut jac, max_first) {
                    z = cand;
                    t = t1;
                    ok = true;
                }
            }
            steps += 1;
            if ok {
                successes += 1;
                if successes >= 3 {
                    h *= 2.0;
                    successes = 0;
                }
                let zmax = z.iter().fold(0.0f64, |m, c| m.max(c.norm()));
                if t < 0.05 && z[0].norm() < 1e-8 * zmax {
                    return (z, t, steps, false);
                }
            } else {
                successes = 0;
                h *= 0.5;
                if h < cfg.min_step {
                    return (z, t, steps, false);
                }
            }
        }
        (z, 0.0, steps, true)
    }

    fn rk4(&self, z: &[C64], t: f64, dt: f64, jac: &mut DMatrix<C64>) -> Option<Vec<C64>> {
        let axpy = |a: &[C64], s: f64, b: &[C64]| -> Vec<C64> {
            a.iter().zip(b).map(|(x, y)| x + y * s).collect()
        };
        let k1 = self.tangent(z, t, jac)?;
        let k2 = self.tangent(&axpy(z, dt / 2.0, &k1), t + dt / 2.0, jac)?;
        let k3 = self.tangent(&axpy(z, dt / 2.0, &k2), t + dt / 2.0, jac)?;
        let k4 = self.tangent(&axpy(z, dt, &k3), t + dt, jac)?;
        let out: Vec<C64> = (0..z.len())
            .map(|i| z[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0))
            .collect();
        if out.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            Some(out)
        } else {
            None
        }
    }
}

/// Newton refinement of an affine solution; returns the refined point when the
/// iteration converges with a well-conditioned Jacobian.
fn refine_affine(sys: &PolySystem, x: &[C64], tol: f64) -> Option<Vec<C64>> {
    let mut x = x.to_vec();
    let n = x.len();
    let compiled = Compiled::new(&sys.equations, &vec![0; n], false);
    let mut vals = vec![C64::new(0.0, 0.0); n];
    let mut jac = vec![C64::new(0.0, 0.0); n * n];
    let mut converged = false;
    for _ in 0..8 {
        compiled.eval(&x, &mut vals, &mut jac);
        let j = DMatrix::from_row_slice(n, n, &jac);
        let rhs = DVector::from_iterator(n, vals.iter().map(|v| -v));
        let dx = j.lu().solve(&rhs)?;
        let step = dx.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        let scale = x.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        for (xi, d) in x.iter_mut().zip(dx.iter()) {
            *xi += d;
        }
        if step <= 1e-13 * (1.0 + scale) {
            converged = true;
            break;
        }
    }
    if !converged && sys.relative_residual(&x) > tol * 1e-3 {
        return None;
    }
    compiled.eval(&x, &mut vals, &mut jac);
    let mut j = DMatrix::from_row_slice(n, n, &jac);
    // equilibrate so the test ignores the scaling of equations and unknowns
    for mut r in j.row_iter_mut() {
        let m = r.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        if m > 0.0 {
            r.unscale_mut(m);
        }
    }
    for mut c in j.column_iter_mut() {
        let m = c.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        if m > 0.0 {
            c.unscale_mut(m);
        }
    }
    let sv = j.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smax == 0.0 || smin < 1e-12 * smax {
        return None;
    }
    Some(x)
}

/// Enumerates start solutions of a product of random linear forms.
fn product_start(
    sys: &PolySystem,
    groups: &[Vec<usize>],
    patch: &[C64],
    rng: &mut ChaCha8Rng,
    max_paths: usize,
) -> Result<(StartEval, Vec<usize>, Vec<Vec<C64>>), PolyError> {
    let n = sys.n_unknowns;
    let mut seen = vec![false; n];
    for g in groups {
        for &v in g {
            if v >= n || seen[v] {
                return Err(PolyError::BadGroups);
            }
            seen[v] = true;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(PolyError::BadGroups);
    }
    // degrees[i][g]
    let degrees: Vec<Vec<usize>> = sys
        .equations
        .iter()
        .map(|e| groups.iter().map(|g| e.degree_in(g)).collect())
        .collect();
    // factors[i] = list of (group, linear form over z incl. z0)
    let mut factors: Vec<Vec<(usize, Vec<(usize, C64)>)>> = Vec::new();
    for deg in &degrees {
        let mut fs = Vec::new();
        for (g, &dg) in deg.iter().enumerate() {
            for _ in 0..dg {
                let mut form = vec![(0usize, random_complex(rng))];
                for &v in &groups[g] {
                    form.push((v + 1, random_complex(rng)));
                }
                fs.push((g, form));
            }
        }
        factors.push(fs);
    }
    // enumerate choices with exact group counts
    let mut remaining: Vec<usize> = groups.iter().map(|g| g.len()).collect();
    let mut choice = vec![0usize; n];
    let mut combos: Vec<Vec<usize>> = Vec::new();
    fn rec(
        i: usize,
        factors: &[Vec<(usize, Vec<(usize, C64)>)>],
        remaining: &mut [usize],
        choice: &mut [usize],
        combos: &mut Vec<Vec<usize>>,
        max_paths: usize,
    ) -> bool {
        if i == factors.len() {
            combos.push(choice.to_vec());
            return combos.len() <= max_paths;
        }
        for (k, (g, _)) in factors[i].iter().enumerate() {
            if remaining[*g] > 0 {
                remaining[*g] -= 1;
                choice[i] = k;
                let ok = rec(i + 1, factors, remaining, choice, combos, max_paths);
                remaining[*g] += 1;
                if !ok {
                    return false;
                }
            }
        }
        true
    }
    if !rec(0, &factors, &mut remaining, &mut choice, &mut combos, max_paths) {
        return Err(PolyError::PathBudgetExceeded {
            paths: combos.len(),
            max: max_paths,
        });
    }
    let nz = n + 1;
    let mut starts = Vec::with_capacity(combos.len());
    for combo in &combos {
        let mut a = DMatrix::<C64>::zeros(nz, nz);
        for (i, &k) in combo.iter().enumerate() {
            for &(v, c) in &factors[i][k].1 {
                a[(i, v)] = c;
            }
        }
        for j in 0..nz {
            a[(n, j)] = patch[j];
        }
        let mut rhs = DVector::<C64>::zeros(nz);
        rhs[n] = C64::new(1.0, 0.0);
        if let Some(z) = a.lu().solve(&rhs) {
            starts.push(z.iter().copied().collect());
        }
    }
    let total: Vec<usize> = degrees.iter().map(|d| d.iter().sum()).collect();
    let eval = StartEval::Products(
        factors
            .into_iter()
            .map(|fs| fs.into_iter().map(|(_, f)| f).collect())
            .collect(),
    );
    Ok((eval, total, starts))
}


/// Near t = 0 steps are capped at this fraction of t ...
const ENDGAME_RATIO: f64 = 0.5;
/// ... until t drops below this value, when the last step lands on t = 0.
const ENDGAME_FINAL_T: f64 = 1e-6;

/// Required contraction factor between successive corrector updates.
const NEWTON_CONTRACTION: f64 = 0.2;

/// Corrector updates below this relative size count as converged when
/// contraction stalls.
const NEWTON_FLOOR: f64 = 1e-7;

/// Largest first corrector update relative to the predictor stride.
const CORRECTOR_TRUST: f64 = 0.1;

/// Rounds of re-tracking for suspect paths, each with 8x smaller steps.
pub const RETRACK_ROUNDS: usize = 2;

/// Solves a square system with a gamma-twisted total-degree homotopy.
pub fn homotopy_solve(sys: &PolySystem, cfg: &TrackerConfig) -> Result<HomotopySolutions, PolyError> {
    homotopy_solve_with(sys, &StartSystem::TotalDegree, cfg)
}

/// Solves a square system with the chosen start system.
pub fn homotopy_solve_with(
    sys: &PolySystem,
    start: &StartSystem,
    cfg: &TrackerConfig,
) -> Result<HomotopySolutions, PolyError> {
    let n = sys.n_unknowns;
    let nz = n + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let gamma = C64::from_polar(1.0, theta);
    let patch: Vec<C64> = (0..nz).map(|_| random_complex(&mut rng)).collect();
    let degrees = sys.degrees();

    let (start_eval, start_degrees, starts) = match start {
        StartSystem::TotalDegree => {
            let count = sys.bezout_number();
            if count > cfg.max_paths {
                return Err(PolyError::PathBudgetExceeded {
                    paths: count,
                    max: cfg.max_paths,
                });
            }
            let mut starts = Vec::with_capacity(count);
            for idx in 0..count {
                let mut rem = idx;
                let mut z = vec![C64::new(1.0, 0.0); nz];
                for (i, &d) in degrees.iter().enumerate() {
                    let k = rem % d;
                    rem /= d;
                    z[i + 1] = C64::from_polar(1.0, std::f64::consts::TAU * k as f64 / d as f64);
                }
                let s: C64 = z.iter().zip(&patch).map(|(a, b)| a * b).sum();
                starts.push(z.iter().map(|v| v / s).collect::<Vec<_>>());
            }
            (StartEval::TotalDegree(degrees.clone()), degrees.clone(), starts)
        }
        StartSystem::MultiHomogeneous(groups) => {
            product_start(sys, groups, &patch, &mut rng, cfg.max_paths)?
        }
    };
    let pad: Vec<usize> = degrees
        .iter()
        .zip(&start_degrees)
        .map(|(d, s)| s.saturating_sub(*d))
        .collect();
    let hom = Homotopy {
        n,
        kind: HomotopyKind::Straight {
            target: Compiled::new(&sys.equations, &pad, true),
            start: start_eval,
            gamma,
        },
        patch,
    };
    track_all(sys, &hom, &starts, cfg)
}

/// Tracks a parameter homotopy from solutions at `start_params` to the
/// system at `target_params`.
pub fn parameter_homotopy(
    sys: &ParametricSystem,
    start_params: &[f64],
    start_solutions: &[Vec<C64>],
    target_params: &[f64],
    cfg: &TrackerConfig,
) -> Result<HomotopySolutions, PolyError> {
    let n = sys.n_unknowns;
    let target = sys.instantiate(target_params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let patch: Vec<C64> = (0..=n).map(|_| random_complex(&mut rng)).collect();
    // the bump keeps interior parameters off the real discriminant
    let scale = target_params
        .iter()
        .chain(start_params)
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-3);
    let bump: Vec<C64> = (0..sys.n_params)
        .map(|_| random_complex(&mut rng) * scale)
        .collect();
    let starts: Vec<Vec<C64>> = start_solutions
        .iter()
        .map(|x| {
            let mut z = vec![C64::new(1.0, 0.0)];
            z.extend_from_slice(x);
            let s: C64 = z.iter().zip(&patch).map(|(a, b)| a * b).sum();
            z.iter().map(|v| v / s).collect()
        })
        .collect();
    let hom = Homotopy {
        n,
        kind: HomotopyKind::Parameter {
            system: Compiled::with_params(&sys.equations, n, &vec![0; n], true),
            target: target_params.iter().map(|v| C64::new(*v, 0.0)).collect(),
            start: start_params.iter().map(|v| C64::new(*v, 0.0)).collect(),
            bump,
        },
        patch,
    };
    track_all(&target, &hom, &starts, cfg)
}

fn track_all(
    sys: &PolySystem,
    hom: &Homotopy,
    starts: &[Vec<C64>],
    cfg: &TrackerConfig,
) -> Result<HomotopySolutions, PolyError> {

    let run = |z: &Vec<C64>, cfg: &TrackerConfig| -> PathReport {
        let (z, t, steps, reached) = hom.track(z.clone(), cfg);
        let zmax = z.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        if z[0].norm() < 1e-8 * zmax {
            return PathReport {
                status: PathStatus::Diverged,
                endpoint: None,
                steps,
                t_reached: t,
            };
        }
        let x: Vec<C64> = z[1..].iter().map(|v| v / z[0]).collect();
        // paths stopping early at small t may still sit next to a regular root
        if !reached && t > 1e-3 {
            return PathReport {
                status: PathStatus::Singular,
                endpoint: Some(x),
                steps,
                t_reached: t,
            };
        }
        match refine_affine(sys, &x, cfg.endpoint_tol) {
            Some(xr) if sys.relative_residual(&xr) < cfg.endpoint_tol => PathReport {
                status: PathStatus::Converged,
                endpoint: Some(xr),
                steps,
                t_reached: t,
            },
            _ => {
                let big = x.iter().fold(0.0f64, |m, c| m.max(c.norm()));
                PathReport {
                    status: if big > 1e7 {
                        PathStatus::Diverged
                    } else {
                        PathStatus::Singular
                    },
                    endpoint: Some(x),
                    steps,
                    t_reached: t,
                }
            }
        }
    };
    let mut paths: Vec<PathReport> = starts.par_iter().map(|z| run(z, cfg)).collect();

    // Re-track paths that collided on one endpoint (path jumping) or stalled
    // mid-way, with progressively smaller steps.
    for round in 1..=RETRACK_ROUNDS {
        let mut suspect: Vec<usize> = paths
            .iter()
            .enumerate()
            .filter(|(_, p)| p.status == PathStatus::Singular && p.t_reached > 1e-3)
            .map(|(i, _)| i)
            .collect();
        let conv: Vec<usize> = (0..paths.len())
            .filter(|&i| paths[i].status == PathStatus::Converged)
            .collect();
        for (k, &i) in conv.iter().enumerate() {
            for &j in &conv[k + 1..] {
                let (a, b) = (paths[i].endpoint.as_ref(), paths[j].endpoint.as_ref());
                if let (Some(a), Some(b)) = (a, b) {
                    if same_point(a, b, cfg.dedup_tol) {
                        suspect.push(i);
                        suspect.push(j);
                    }
                }
            }
        }
        suspect.sort_unstable();
        suspect.dedup();
        if suspect.is_empty() {
            break;
        }
        let f = 8f64.powi(round as i32);
        let strict = TrackerConfig {
            initial_step: cfg.initial_step / f,
            max_step: cfg.max_step / f,
            ..cfg.clone()
        };
        let redone: Vec<(usize, PathReport)> = suspect
            .par_iter()
            .map(|&i| (i, run(&starts[i], &strict)))
            .collect();
        for (i, r) in redone {
            paths[i] = r;
        }
    }

    let mut found: Vec<Vec<C64>> = paths
        .iter()
        .filter(|p| p.status == PathStatus::Converged)
        .filter_map(|p| p.endpoint.clone())
        .collect();
    if found.is_empty() {
        return Err(PolyError::NoConvergedPaths);
    }
    found.sort_by(|a, b| {
        for (x, y) in a.iter().zip(b) {
            let o = x
                .re
                .total_cmp(&y.re)
                .then(x.im.total_cmp(&y.im));
            if o != std::cmp::Ordering::Equal {
                return o;
            }
        }
        std::cmp::Ordering::Equal
    });
    let mut solutions: Vec<Vec<C64>> = Vec::new();
    for s in found {
        let dup = solutions.iter().any(|u| same_point(u, &s, cfg.dedup_tol));
        if !dup {
            solutions.push(s);
        }
    }
    // real coefficients: complex roots come in conjugate pairs
    let mut extra = Vec::new();
    for s in &solutions {
        if is_real(s) {
            continue;
        }
        let c: Vec<C64> = s.iter().map(|v| v.conj()).collect();
        let known = solutions
            .iter()
            .chain(extra.iter())
            .any(|u| same_point(u, &c, cfg.dedup_tol));
        if !known {
            if let Some(r) = refine_affine(sys, &c, cfg.endpoint_tol) {
                if sys.relative_residual(&r) < cfg.endpoint_tol {
                    extra.push(r);
                }
            }
        }
    }
    solutions.extend(extra);
    let residuals = solutions.iter().map(|s| sys.relative_residual(s)).collect();
    Ok(HomotopySolutions {
        solutions,
        residuals,
        paths,
    })
}

/// Relative max-norm closeness.
pub fn same_point(a: &[C64], b: &[C64], tol: f64) -> bool {
    let scale = a.iter().fold(0.0f64, |m, c| m.max(c.norm()));
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).norm() <= tol * (1.0 + scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn cubic_roots() {
        let p = UniPoly::new(vec![7.5, 11.0, -7.5, 1.0]);
        let mut r: Vec<f64> = uni_roots(&p).unwrap().iter().map(|z| z.re).collect();
        r.sort_by(f64::total_cmp);
        for (a, b) in r.iter().zip([-0.5, 3.0, 5.0]) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn roots_of_unity_and_linear() {
        let r = uni_roots(&UniPoly::new(vec![-1.0, 1.0])).unwrap();
        assert!((r[0] - c(1.0)).norm() < 1e-14);
        let r = uni_roots(&UniPoly::new(vec![-1.0, 0.0, 0.0, 0.0, 1.0])).unwrap();
        for target in [c(1.0), c(-1.0), C64::i(), -C64::i()] {
            assert!(r.iter().any(|z| (z - target).norm() < 1e-12));
        }
        assert_eq!(uni_roots(&UniPoly::zero()), Err(PolyError::ZeroPolynomial));
    }

    #[test]
    fn trim_and_division() {
        let p = UniPoly::new(vec![1.0, 2.0, 1e-15]);
        assert_eq!(p.degree(), 1);
        let a = UniPoly::new(vec![1.0, 1.0]);
        let b = UniPoly::new(vec![-2.0, 0.5, 3.0]);
        let (q, r) = a.mul(&b).div_rem(&a);
        assert!(r.max_abs() < 1e-14);
        assert!(q.sub(&b).max_abs() < 1e-14);
    }

    #[test]
    fn jacobian_examples() {
        let x = MPoly::var(2, 0);
        let y = MPoly::var(2, 1);
        let sys = PolySystem::new(vec![
            x.mul(&y).sub(&MPoly::constant(2, 1.0)),
            x.sub(&y),
        ])
        .unwrap();
        let (v, j) = eval_and_jacobian(&sys, &[c(1.0), c(1.0)]);
        assert!(v.norm() < 1e-15);
        let expect = [[1.0, 1.0], [1.0, -1.0]];
        for r in 0..2 {
            for k in 0..2 {
                assert!((j[(r, k)] - c(expect[r][k])).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn decoupled_system() {
        let x = MPoly::var(2, 0);
        let y = MPoly::var(2, 1);
        let sys = PolySystem::new(vec![x.mul(&x).sub(&MPoly::constant(2, 1.0)), y.sub(&x)]).unwrap();
        let out = homotopy_solve(&sys, &TrackerConfig::default()).unwrap();
        assert_eq!(out.solutions.len(), 2);
        for s in &out.solutions {
            assert!((s[0] - s[1]).norm() < 1e-10);
            assert!((s[0].norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn grouped_start_matches_total_degree() {
        // bilinear system: (x + 2)(y - 1) + 0.3 x = 0, x y - 0.5 = 0 -> 2 solutions
        let x = MPoly::var(2, 0);
        let y = MPoly::var(2, 1);
        let one = MPoly::constant(2, 1.0);
        let f1 = x.add(&one.scale(2.0)).mul(&y.sub(&one)).add(&x.scale(0.3));
        let f2 = x.mul(&y).sub(&one.scale(0.5));
        let sys = PolySystem::new(vec![f1, f2]).unwrap();
        let cfg = TrackerConfig::default();
        let a = homotopy_solve(&sys, &cfg).unwrap();
        let b = homotopy_solve_with(&sys, &StartSystem::MultiHomogeneous(vec![vec![0], vec![1]]), &cfg)
            .unwrap();
        assert_eq!(a.solutions.len(), b.solutions.len());
        assert_eq!(b.paths.len(), 2);
    }
}
