//! Finsler gauges `H`, their duals `H°`, and numerical checks of the standard
//! gauge identities.
//!
//! A gauge is positive, even, 1-homogeneous and C² away from the origin with a
//! uniformly convex unit ball. Built-in variants come with closed-form duals;
//! a custom black-box gauge gets its derivatives by finite differences and its
//! dual by projected ascent on the unit sphere.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sampling::{self, dot, norm2};

/// Black-box evaluator of a 1-homogeneous convex function.
pub type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum GaugeSpec {
    Euclidean,
    /// `(Σ|ξ_i|^q)^{1/q}` with `1 < q < ∞`.
    EllQ { q: f64 },
    /// `sqrt(⟨Aξ, ξ⟩)` with `A` symmetric positive definite.
    Quadratic { matrix: DMatrix<f64> },
    Custom { name: String, eval: Evaluator },
}

impl fmt::Debug for GaugeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GaugeSpec::Euclidean => write!(f, "Euclidean"),
            GaugeSpec::EllQ { q } => write!(f, "EllQ {{ q: {q} }}"),
            GaugeSpec::Quadratic { matrix } => write!(f, "Quadratic {{ matrix: {matrix:?} }}"),
            GaugeSpec::Custom { name, .. } => write!(f, "Custom {{ name: {name:?} }}"),
        }
    }
}

impl GaugeSpec {
    pub fn label(&self) -> String {
        match self {
            GaugeSpec::Euclidean => "euclidean".into(),
            GaugeSpec::EllQ { q } => format!("ell_q(q={q})"),
            GaugeSpec::Quadratic { matrix } => {
                let rows: Vec<String> = matrix
                    .row_iter()
                    .map(|r| {
                        let xs: Vec<String> = r.iter().map(|x| format!("{x}")).collect();
                        format!("[{}]", xs.join(","))
                    })
                    .collect();
                format!("quadratic({})", rows.join(","))
            }
            GaugeSpec::Custom { name, .. } => format!("custom({name})"),
        }
    }

    pub fn has_analytic_dual(&self) -> bool {
        !matches!(self, GaugeSpec::Custom { .. })
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if dim < 2 {
            return Err(Error::InvalidParams(format!("dimension must be >= 2, got {dim}")));
        }
        match self {
            GaugeSpec::Euclidean | GaugeSpec::Custom { .. } => Ok(()),
            GaugeSpec::EllQ { q } => {
                if q.is_finite() && *q > 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParams(format!("ell_q needs 1 < q < inf, got {q}")))
                }
            }
            GaugeSpec::Quadratic { matrix } => {
                if matrix.nrows() != dim || matrix.ncols() != dim {
                    return Err(Error::InvalidParams(format!(
                        "quadratic matrix is {}x{}, dimension is {dim}",
                        matrix.nrows(),
                        matrix.ncols()
                    )));
                }
                if matrix.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidParams("quadratic matrix has non-finite entries".into()));
                }
                let asym = (matrix - matrix.transpose()).abs().max();
                if asym > 1e-12 * matrix.abs().max().max(1.0) {
                    return Err(Error::InvalidParams("quadratic matrix is not symmetric".into()));
                }
                let eig = SymmetricEigen::new(matrix.clone()).eigenvalues;
                if eig.iter().any(|&l| l <= 0.0) {
                    return Err(Error::InvalidParams(
                        "quadratic matrix is not positive definite".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DualMode {
    Analytic,
    Numerical,
}

/// Equivalence, gradient, Hessian and convexity constants of a gauge,
/// estimated on the Euclidean unit sphere (all are direction-only quantities
/// by homogeneity) and widened by a 1% margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub alpha1: f64,
    pub alpha2: f64,
    pub m: f64,
    pub mbar: f64,
    pub lambda: f64,
    /// Smallest sampled eigenvalue of `D²(H²)` on the unit sphere.
    pub d2_h2_min_eig: f64,
    pub budget: usize,
    pub seed: u64,
    /// Hessian samples skipped because they fell inside the axis cone.
    pub excluded_axis_samples: usize,
    pub axis_cone: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct GaugeOptions {
    pub dual_mode: Option<DualMode>,
    pub budget: usize,
    pub seed: u64,
}

impl Default for GaugeOptions {
    fn default() -> Self {
        GaugeOptions { dual_mode: None, budget: 10_000, seed: 0 }
    }
}

/// Settings of the projected-ascent dual for black-box gauges.
pub const DUAL_RESTARTS: usize = 8;
pub const DUAL_TOL: f64 = 1e-8;
pub const DUAL_MAX_ITER: usize = 500;
const AXIS_CONE: f64 = 1e-6;
const SAFETY: f64 = 0.01;

#[derive(Clone, Debug)]
pub struct Gauge {
    spec: GaugeSpec,
    dim: usize,
    dual_mode: DualMode,
    inverse: Option<DMatrix<f64>>,
    cert: Certificate,
}

impl Gauge {
    pub fn new(spec: GaugeSpec, dim: usize) -> Result<Gauge> {
        Gauge::with_options(spec, dim, GaugeOptions::default())
    }

    pub fn euclidean(dim: usize) -> Result<Gauge> {
        Gauge::new(GaugeSpec::Euclidean, dim)
    }

    pub fn with_options(spec: GaugeSpec, dim: usize, opts: GaugeOptions) -> Result<Gauge> {
        spec.validate(dim)?;
        let dual_mode = match (opts.dual_mode, spec.has_analytic_dual()) {
            (Some(DualMode::Analytic), false) => {
                return Err(Error::InvalidParams(
                    "custom gauges have no analytic dual".into(),
                ))
            }
            (Some(m), _) => m,
            (None, true) => DualMode::Analytic,
            (None, false) => DualMode::Numerical,
        };
        let inverse = match &spec {
            GaugeSpec::Quadratic { matrix } => Some(
                matrix
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| Error::InvalidParams("singular quadratic matrix".into()))?,
            ),
            _ => None,
        };
        let placeholder = Certificate {
            alpha1: 0.0,
            alpha2: 0.0,
            m: 0.0,
            mbar: 0.0,
            lambda: 0.0,
            d2_h2_min_eig: 0.0,
            budget: 0,
            seed: opts.seed,
            excluded_axis_samples: 0,
            axis_cone: AXIS_CONE,
        };
        let mut gauge = Gauge { spec, dim, dual_mode, inverse, cert: placeholder };
        if opts.budget == 0 {
            return invalid("certification budget must be positive");
        }
        gauge.cert = gauge.certify(opts.budget, opts.seed);
        Ok(gauge)
    }

    pub fn spec(&self) -> &GaugeSpec {
        &self.spec
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn dual_mode(&self) -> DualMode {
        self.dual_mode
    }
    pub fn certificate(&self) -> &Certificate {
        &self.cert
    }
    pub fn alpha1(&self) -> f64 {
        self.cert.alpha1
    }
    pub fn alpha2(&self) -> f64 {
        self.cert.alpha2
    }
    pub fn m(&self) -> f64 {
        self.cert.m
    }
    pub fn mbar(&self) -> f64 {
        self.cert.mbar
    }
    pub fn lambda(&self) -> f64 {
        self.cert.lambda
    }
    pub fn label(&self) -> String {
        self.spec.label()
    }

    /// Copy of this gauge with a different dual evaluation mode.
    pub fn with_dual_mode(&self, mode: DualMode) -> Result<Gauge> {
        if mode == DualMode::Analytic && !self.spec.has_analytic_dual() {
            return Err(Error::InvalidParams("custom gauges have no analytic dual".into()));
        }
        let mut g = self.clone();
        g.dual_mode = mode;
        Ok(g)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return invalid(format!("expected a vector of length {}, got {}", self.dim, x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return invalid("non-finite vector entry");
        }
        Ok(())
    }

    fn check_nonzero(&self, x: &[f64]) -> Result<()> {
        self.check_input(x)?;
        if x.iter().all(|&v| v == 0.0) {
            return Err(Error::Domain("H is not differentiable at the origin".into()));
        }
        Ok(())
    }

    /// `H(ξ)`.
    pub fn eval_h(&self, xi: &[f64]) -> Result<f64> {
        self.check_input(xi)?;
        Ok(self.h(xi))
    }

    /// `∇H(ξ)`, 0-homogeneous, undefined at the origin.
    pub fn grad_h(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.check_nonzero(xi)?;
        Ok(self.grad(xi))
    }

    /// `D²H(ξ)`, analytic for built-ins and finite-difference for custom gauges.
    pub fn hess_h(&self, xi: &[f64]) -> Result<DMatrix<f64>> {
        self.check_nonzero(xi)?;
        Ok(self.hess(xi))
    }

    /// `H°(x) = sup_{H(ξ) ≤ 1} ⟨ξ, x⟩`.
    pub fn eval_dual(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        if x.iter().all(|&v| v == 0.0) {
            return Ok(0.0);
        }
        match self.dual_mode {
            DualMode::Analytic => Ok(self.dual_analytic(x)),
            DualMode::Numerical => self.dual_numerical(x).map(|r| r.0),
        }
    }

    /// `∇H°(x)`; in numerical mode this is the maximizer of the dual problem.
    pub fn grad_dual(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_nonzero(x)?;
        match self.dual_mode {
            DualMode::Analytic => Ok(self.dual_grad_analytic(x)),
            DualMode::Numerical => self.dual_numerical(x).map(|r| r.1),
        }
    }

    /// The field `H^{p-1}(ξ)∇H(ξ)`, extended by zero at the origin.
    pub fn flux(&self, xi: &[f64], p: f64) -> Result<Vec<f64>> {
        self.check_input(xi)?;
        if xi.iter().all(|&v| v == 0.0) {
            return Ok(vec![0.0; self.dim]);
        }
        let hp = self.h(xi).powf(p - 1.0);
        Ok(self.grad(xi).into_iter().map(|g| hp * g).collect())
    }

    /// Exact Lebesgue measure of the unit ball of `H°` for built-in gauges.
    pub fn exact_wulff_volume(&self) -> Option<f64> {
        use statrs::function::gamma::gamma;
        let n = self.dim as f64;
        let ball = std::f64::consts::PI.powf(n / 2.0) / gamma(n / 2.0 + 1.0);
        match &self.spec {
            GaugeSpec::Euclidean => Some(ball),
            GaugeSpec::EllQ { q } => {
                let qd = q / (q - 1.0);
                Some((2.0 * gamma(1.0 + 1.0 / qd)).powf(n) / gamma(1.0 + n / qd))
            }
            GaugeSpec::Quadratic { matrix } => Some(ball * matrix.determinant().sqrt()),
            GaugeSpec::Custom { .. } => None,
        }
    }

    pub(crate) fn h(&self, xi: &[f64]) -> f64 {
        match &self.spec {
            GaugeSpec::Euclidean => norm2(xi),
            GaugeSpec::EllQ { q } => lq_norm(xi, *q),
            GaugeSpec::Quadratic { matrix } => quad_form(matrix, xi).max(0.0).sqrt(),
            GaugeSpec::Custom { eval, .. } => eval(xi),
        }
    }

    pub(crate) fn grad(&self, xi: &[f64]) -> Vec<f64> {
        match &self.spec {
            GaugeSpec::Euclidean => {
                let n = norm2(xi);
                xi.iter().map(|x| x / n).collect()
            }
            GaugeSpec::EllQ { q } => lq_grad(xi, *q),
            GaugeSpec::Quadratic { matrix } => {
                let ax = mat_vec(matrix, xi);
                let h = dot(&ax, xi).sqrt();
                ax.into_iter().map(|v| v / h).collect()
            }
            GaugeSpec::Custom { eval, .. } => fd_gradient(eval.as_ref(), xi),
        }
    }

    pub(crate) fn hess(&self, xi: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        match &self.spec {
            GaugeSpec::Euclidean => {
                let r = norm2(xi);
                DMatrix::from_fn(n, n, |i, j| {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    (delta - xi[i] * xi[j] / (r * r)) / r
                })
            }
            GaugeSpec::EllQ { q } => {
                let h = lq_norm(xi, *q);
                let g = lq_grad(xi, *q);
                DMatrix::from_fn(n, n, |i, j| {
                    let diag = if i == j { (xi[i].abs() / h).powf(q - 2.0) } else { 0.0 };
                    (q - 1.0) / h * (diag - g[i] * g[j])
                })
            }
            GaugeSpec::Quadratic { matrix } => {
                let ax = mat_vec(matrix, xi);
                let h = dot(&ax, xi).sqrt();
                DMatrix::from_fn(n, n, |i, j| (matrix[(i, j)] - ax[i] * ax[j] / (h * h)) / h)
            }
            GaugeSpec::Custom { eval, .. } => fd_hessian(eval.as_ref(), xi),
        }
    }

    fn dual_analytic(&self, x: &[f64]) -> f64 {
        match &self.spec {
            GaugeSpec::Euclidean => norm2(x),
            GaugeSpec::EllQ { q } => lq_norm(x, q / (q - 1.0)),
            GaugeSpec::Quadratic { .. } => {
                let inv = self.inverse.as_ref().expect("quadratic inverse");
                quad_form(inv, x).max(0.0).sqrt()
            }
            GaugeSpec::Custom { .. } => unreachable!("custom gauges use the numerical dual"),
        }
    }

    fn dual_grad_analytic(&self, x: &[f64]) -> Vec<f64> {
        match &self.spec {
            GaugeSpec::Euclidean => {
                let n = norm2(x);
                x.iter().map(|v| v / n).collect()
            }
            GaugeSpec::EllQ { q } => lq_grad(x, q / (q - 1.0)),
            GaugeSpec::Quadratic { .. } => {
                let inv = self.inverse.as_ref().expect("quadratic inverse");
                let ax = mat_vec(inv, x);
                let h = dot(&ax, x).sqrt();
                ax.into_iter().map(|v| v / h).collect()
            }
            GaugeSpec::Custom { .. } => unreachable!("custom gauges use the numerical dual"),
        }
    }

    /// Projected ascent of `d ↦ ⟨d, x⟩ / H(d)` on the Euclidean unit sphere,
    /// i.e. of `⟨ξ, x⟩` over the unit `H`-sphere after radial retraction.
    /// Returns the supremum and the maximizer `ξ* = d*/H(d*)`.
    fn dual_numerical(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let objective = |d: &[f64]| {
            let h = self.h(d);
            let g = self.grad(d);
            let dx = dot(d, x);
            let val = dx / h;
            let grad: Vec<f64> = x
                .iter()
                .zip(&g)
                .map(|(xi, gi)| xi / h - dx * gi / (h * h))
                .collect();
            (val, grad)
        };
        // ∇²(a/H) with a = ⟨d, x⟩
        let hessian = |d: &[f64]| {
            let n = self.dim;
            let h = self.h(d);
            let g = self.grad(d);
            let hs = self.hess(d);
            let a = dot(d, x);
            DMatrix::from_fn(n, n, |i, j| {
                -(x[i] * g[j] + g[i] * x[j]) / (h * h) - a * hs[(i, j)] / (h * h)
                    + 2.0 * a * g[i] * g[j] / (h * h * h)
            })
        };
        let mut starts = vec![sampling::scale(x, 1.0 / norm2(x))];
        let mut rng = sampling::rng(0x5EED_D0A1);
        for _ in 0..DUAL_RESTARTS {
            // Random directions, reflected into the half-space where ⟨d, x⟩ ≥ 0.
            let d = sampling::unit_direction(&mut rng, self.dim);
            let sign = if dot(&d, x) < 0.0 { -1.0 } else { 1.0 };
            starts.push(sampling::scale(&d, sign));
        }
        let mut best: Option<AscentResult> = None;
        let mut best_lower = f64::NEG_INFINITY;
        for s in starts {
            let r = sphere_ascent(&objective, Some(&hessian), s, DUAL_MAX_ITER, DUAL_TOL);
            best_lower = best_lower.max(r.value);
            if r.converged && best.as_ref().is_none_or(|b| r.value > b.value) {
                best = Some(r);
            }
        }
        match best {
            Some(r) => {
                let h = self.h(&r.point);
                Ok((r.value, r.point.iter().map(|v| v / h).collect()))
            }
            None => Err(Error::DualEvaluation { best_lower_bound: best_lower }),
        }
    }

    fn certify(&self, budget: usize, seed: u64) -> Certificate {
        let n = self.dim;
        let mut rng = sampling::stream_rng(seed, 0);
        let axis_sensitive = matches!(self.spec, GaugeSpec::EllQ { q } if q < 2.0);
        let (mut hmin, mut hmax) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut dmin, mut dmax) = (vec![0.0; n], vec![0.0; n]);
        let (mut m, mut mbar) = (0.0f64, 0.0f64);
        let mut lambda = f64::INFINITY;
        let mut d2h2 = f64::INFINITY;
        let mut excluded = 0usize;
        for _ in 0..budget {
            let d = sampling::unit_direction(&mut rng, n);
            let h = self.h(&d);
            if h < hmin {
                hmin = h;
                dmin.clone_from(&d);
            }
            if h > hmax {
                hmax = h;
                dmax.clone_from(&d);
            }
            let g = self.grad(&d);
            m = m.max(norm2(&g));
            if axis_sensitive && d.iter().any(|v| v.abs() < AXIS_CONE) {
                excluded += 1;
                continue;
            }
            let hs = self.hess(&d);
            mbar = mbar.max(spectral_norm(&hs));
            // On the unit H-sphere: ξ = d/H(d), D²H(ξ) = H(d) D²H(d).
            lambda = lambda.min(h * tangent_min_eig(&hs, &g));
            let d2 = DMatrix::from_fn(n, n, |i, j| 2.0 * (g[i] * g[j] + h * hs[(i, j)]));
            d2h2 = d2h2.min(min_eig(&d2));
        }
        // Local polish of the extreme directions; sampling alone leaves a gap
        // that the 1% margin may not cover in higher dimensions.
        let hfun = |sign: f64| {
            move |d: &[f64]| {
                let v = sign * self.h(d);
                let g: Vec<f64> = self.grad(d).into_iter().map(|x| sign * x).collect();
                (v, g)
            }
        };
        let lo = sphere_ascent(&hfun(-1.0), None, dmin, 2000, 1e-12);
        let hi = sphere_ascent(&hfun(1.0), None, dmax, 2000, 1e-12);
        hmin = hmin.min(-lo.value);
        hmax = hmax.max(hi.value);
        Certificate {
            alpha1: hmin * (1.0 - SAFETY),
            alpha2: hmax * (1.0 + SAFETY),
            m: m * (1.0 + SAFETY),
            mbar: mbar * (1.0 + SAFETY),
            lambda: lambda * (1.0 - SAFETY),
            d2_h2_min_eig: d2h2,
            budget,
            seed,
            excluded_axis_samples: excluded,
            axis_cone: AXIS_CONE,
        }
    }
}

fn lq_norm(x: &[f64], q: f64) -> f64 {
    let amax = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if amax == 0.0 {
        return 0.0;
    }
    let s: f64 = x.iter().map(|v| (v.abs() / amax).powf(q)).sum();
    amax * s.powf(1.0 / q)
}

fn lq_grad(x: &[f64], q: f64) -> Vec<f64> {
    let h = lq_norm(x, q);
    x.iter().map(|v| v.signum() * (v.abs() / h).powf(q - 1.0)).collect()
}

fn quad_form(a: &DMatrix<f64>, x: &[f64]) -> f64 {
    dot(&mat_vec(a, x), x)
}

fn mat_vec(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (a * DVector::from_column_slice(x)).iter().copied().collect()
}

fn fd_gradient(f: &(dyn Fn(&[f64]) -> f64 + Send + Sync), x: &[f64]) -> Vec<f64> {
    let h = 6e-6 * norm2(x);
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let fp = f(&y);
            y[i] = x[i] - h;
            let fm = f(&y);
            y[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

fn fd_hessian(f: &(dyn Fn(&[f64]) -> f64 + Send + Sync), x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let h = 1.2e-4 * norm2(x);
    let mut y = x.to_vec();
    let mut at = |di: (usize, f64), dj: (usize, f64)| {
        y.copy_from_slice(x);
        y[di.0] += di.1;
        y[dj.0] += dj.1;
        f(&y)
    };
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = (at((i, h), (j, h)) - at((i, h), (j, -h)) - at((i, -h), (j, h))
                + at((i, -h), (j, -h)))
                / (4.0 * h * h);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()))
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Smallest eigenvalue of `m` restricted to the orthogonal complement of `normal`.
pub(crate) fn tangent_min_eig(m: &DMatrix<f64>, normal: &[f64]) -> f64 {
    let basis = tangent_basis(normal);
    let sym = (m + m.transpose()) * 0.5;
    min_eig(&(basis.transpose() * sym * &basis))
}

/// Orthonormal basis of `normal^⊥`, as the columns of an `N × (N-1)` matrix.
fn tangent_basis(normal: &[f64]) -> DMatrix<f64> {
    let n = normal.len();
    let nn = norm2(normal);
    let u = DVector::from_iterator(n, normal.iter().map(|v| v / nn));
    // Householder reflector mapping u to ±e_0; its other columns span u^⊥.
    let mut w = u.clone();
    w[0] += if u[0] >= 0.0 { 1.0 } else { -1.0 };
    let wn = w.norm_squared();
    let q = DMatrix::identity(n, n) - (&w * w.transpose()) * (2.0 / wn);
    q.columns(1, n - 1).into_owned()
}

const STALL_WINDOW: usize = 50;

pub(crate) struct AscentResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    #[allow(dead_code)]
    pub iterations: usize,
}

/// Euclidean Hessian of an objective on the sphere, used for Newton steps.
pub(crate) type HessFn<'a> = &'a dyn Fn(&[f64]) -> DMatrix<f64>;

/// Maximize `f` over the Euclidean unit sphere by projected gradient ascent
/// with Barzilai-Borwein steps and monotone backtracking. When a Hessian is
/// supplied, a Riemannian Newton step is tried first at every iterate and
/// kept if it increases `f`; gradient ascent alone crawls on gauges whose
/// curvature degenerates near the coordinate planes (ℓ^q with q < 2).
///
/// Converged when the tangential gradient falls below `tol` relative to
/// `|f| + |∇f|`, when the value has stopped moving at the `tol²` level over
/// `STALL_WINDOW` iterations, or when no step increases `f` at all.
pub(crate) fn sphere_ascent<F>(
    f: &F,
    hess: Option<HessFn<'_>>,
    start: Vec<f64>,
    max_iter: usize,
    tol: f64,
) -> AscentResult
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let normalize = |v: Vec<f64>| {
        let n = norm2(&v);
        v.into_iter().map(|x| x / n).collect::<Vec<f64>>()
    };
    let tangent = |d: &[f64], g: &[f64]| {
        let c = dot(g, d);
        g.iter().zip(d).map(|(gi, di)| gi - c * di).collect::<Vec<f64>>()
    };
    let mut d = normalize(start);
    let (mut val, mut g) = f(&d);
    let scale = val.abs() + norm2(&g) + 1e-300;
    let mut gt = tangent(&d, &g);
    let mut step = 0.5 / (norm2(&gt) + 1e-300);
    let mut history = Vec::with_capacity(max_iter);
    for it in 0..max_iter {
        let gn = norm2(&gt);
        let stalled = it >= STALL_WINDOW
            && (val - history[it - STALL_WINDOW]) <= tol * tol * val.abs().max(1e-300);
        if gn <= tol * scale || stalled {
            return AscentResult { point: d, value: val, converged: true, iterations: it };
        }
        history.push(val);

        let mut accepted = None;
        if let Some(hf) = hess {
            if let Some(v) = newton_direction(&hf(&d), &g, &d) {
                let mut s = 1.0;
                for _ in 0..8 {
                    let cand = normalize(d.iter().zip(&v).map(|(a, b)| a + s * b).collect());
                    let (cv, cg) = f(&cand);
                    if cv > val {
                        accepted = Some((cand, cv, cg));
                        break;
                    }
                    s *= 0.5;
                }
            }
        }
        if accepted.is_none() {
            let mut s = step.min(1.0 / gn);
            for _ in 0..60 {
                let cand = normalize(d.iter().zip(&gt).map(|(a, b)| a + s * b).collect());
                let (cv, cg) = f(&cand);
                if cv >= val + 1e-4 * s * gn * gn * 0.5 || (cv >= val && s * gn < 1e-14) {
                    accepted = Some((cand, cv, cg));
                    break;
                }
                s *= 0.5;
            }
        }
        let Some((nd, nv, ng)) = accepted else {
            // No step increases f even by rounding: stationary to machine precision.
            return AscentResult { point: d, value: val, converged: true, iterations: it };
        };
        let ngt = tangent(&nd, &ng);
        let sd: Vec<f64> = nd.iter().zip(&d).map(|(a, b)| a - b).collect();
        let yd: Vec<f64> = ngt.iter().zip(&gt).map(|(a, b)| b - a).collect();
        let sy = dot(&sd, &yd);
        step = if sy > 0.0 { dot(&sd, &sd) / sy } else { 2.0 * step };
        d = nd;
        val = nv;
        g = ng;
        gt = ngt;
    }
    let converged = norm2(&gt) <= tol * scale;
    AscentResult { point: d, value: val, converged, iterations: max_iter }
}

/// Newton step for maximization in the tangent space at `d`, or `None` when
/// the Riemannian Hessian is not negative definite.
fn newton_direction(h: &DMatrix<f64>, g: &[f64], d: &[f64]) -> Option<Vec<f64>> {
    let n = d.len();
    let basis = tangent_basis(d);
    let radial = dot(g, d);
    let sym = (h + h.transpose()) * 0.5 - DMatrix::identity(n, n) * radial;
    let neg = -(basis.transpose() * sym * &basis);
    let chol = neg.cholesky()?;
    let rhs = basis.transpose() * DVector::from_column_slice(g);
    let c = chol.solve(&rhs);
    let v = basis * c;
    Some(v.iter().copied().collect())
}

/// One checked identity, serialized as `{identity, max_abs_err, max_rel_err, samples, seed}`
/// plus the tolerance it was held to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub identity: String,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub samples: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub gauge: String,
    pub dimension: usize,
    pub dual_mode: DualMode,
    pub checks: Vec<IdentityCheck>,
    pub samples: usize,
    pub seed: u64,
    pub sampled_lambda: f64,
    pub sampled_d2_h2_min_eig: f64,
    pub excluded_axis_samples: usize,
    pub passed: bool,
}

impl IdentityReport {
    pub fn check(&self, name: &str) -> Option<&IdentityCheck> {
        self.checks.iter().find(|c| c.identity == name)
    }
}

#[derive(Default)]
struct ErrAcc {
    abs: f64,
    rel: f64,
}

impl ErrAcc {
    fn push(&mut self, abs: f64, scale: f64) {
        let abs = if abs.is_nan() { f64::INFINITY } else { abs };
        self.abs = self.abs.max(abs);
        self.rel = self.rel.max(abs / scale.max(1e-300));
    }
}

/// Check the dual-norm identities, Euler's relation, the Hessian null
/// direction, homogeneity and sampled uniform convexity at random points.
/// A failed identity marks the report; it is not an error.
pub fn verify_identities(gauge: &Gauge, samples: usize, seed: u64, tol: f64) -> Result<IdentityReport> {
    if samples == 0 {
        return invalid("samples must be >= 1");
    }
    let n = gauge.dim();
    let mut rng = sampling::stream_rng(seed, 1);
    let names = [
        "H(grad H°(x)) = 1",
        "H°(grad H(x)) = 1",
        "H(x) grad H°(grad H(x)) = x",
        "H°(x) grad H(grad H°(x)) = x",
        "<grad H(x), x> = H(x)",
        "D2H(x) x = 0",
        "H(s x) = |s| H(x)",
        "uniform convexity >= lambda",
        "D2(H^2) positive definite",
    ];
    let mut acc: Vec<ErrAcc> = names.iter().map(|_| ErrAcc::default()).collect();
    let axis_sensitive = matches!(gauge.spec(), GaugeSpec::EllQ { q } if *q < 2.0);
    let mut excluded = 0usize;
    let mut lambda_min = f64::INFINITY;
    let mut d2h2_min = f64::INFINITY;
    for _ in 0..samples {
        let dir = sampling::unit_direction(&mut rng, n);
        let r = 10f64.powf(rng.random_range(-2.0..2.0));
        let x = sampling::scale(&dir, r);
        let xn = norm2(&x);

        let gd = gauge.grad_dual(&x)?;
        let e0 = (gauge.eval_h(&gd)? - 1.0).abs();
        acc[0].push(e0, 1.0);
        let gh = gauge.grad_h(&x)?;
        let e1 = (gauge.eval_dual(&gh)? - 1.0).abs();
        acc[1].push(e1, 1.0);

        let hx = gauge.h(&x);
        let chain1: Vec<f64> = gauge.grad_dual(&gh)?.iter().map(|v| hx * v).collect();
        acc[2].push(norm2(&sampling::sub(&chain1, &x)), xn);
        let hdx = gauge.eval_dual(&x)?;
        let chain2: Vec<f64> = gauge.grad_h(&gd)?.iter().map(|v| hdx * v).collect();
        acc[3].push(norm2(&sampling::sub(&chain2, &x)), xn);

        acc[4].push((dot(&gh, &x) - hx).abs(), hx);

        let s = [0.5, 2.0, -3.0][rng.random_range(0..3)];
        let hs = gauge.h(&sampling::scale(&x, s));
        acc[6].push((hs - s.abs() * hx).abs(), s.abs() * hx);

        if axis_sensitive && dir.iter().any(|v| v.abs() < AXIS_CONE) {
            excluded += 1;
            continue;
        }
        let hess = gauge.hess(&x);
        let hxv: Vec<f64> = (&hess * DVector::from_column_slice(&x)).iter().copied().collect();
        acc[5].push(norm2(&hxv), spectral_norm(&hess) * xn);

        // Uniform convexity on the unit H-sphere: D²H(x/H(x)) = H(x) D²H(x).
        let lam = hx * tangent_min_eig(&hess, &gh);
        lambda_min = lambda_min.min(lam);
        acc[7].push((gauge.lambda() - lam).max(0.0), gauge.lambda().max(1e-300));

        let hu = gauge.h(&dir);
        let hess_u = gauge.hess(&dir);
        let gu = gauge.grad(&dir);
        let d2 = DMatrix::from_fn(n, n, |i, j| 2.0 * (gu[i] * gu[j] + hu * hess_u[(i, j)]));
        let e = min_eig(&d2);
        d2h2_min = d2h2_min.min(e);
        acc[8].push((-e).max(0.0), 1.0);
    }
    let checks: Vec<IdentityCheck> = names
        .iter()
        .zip(&acc)
        .enumerate()
        .map(|(k, (name, a))| {
            // The convexity rows pass on any strictly positive sampled curvature.
            let passed = if k >= 7 { a.abs == 0.0 } else { a.rel <= tol };
            IdentityCheck {
                identity: name.to_string(),
                max_abs_err: a.abs,
                max_rel_err: a.rel,
                samples,
                seed,
                tolerance: if k >= 7 { 0.0 } else { tol },
                passed,
            }
        })
        .collect();
    let passed = checks.iter().all(|c| c.passed);
    Ok(IdentityReport {
        gauge: gauge.label(),
        dimension: n,
        dual_mode: gauge.dual_mode(),
        checks,
        samples,
        seed,
        sampled_lambda: lambda_min,
        sampled_d2_h2_min_eig: d2h2_min,
        excluded_axis_samples: excluded,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub identity: String,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub samples: usize,
    pub skipped: usize,
    pub seed: u64,
    pub fd_step: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Finite-difference divergence of `x ↦ ∇H(∇H°(x))` against `(N-1)/H°(x)`.
/// Points closer than `10·fd_step` to the origin are skipped and counted.
pub fn divergence_identity_check(
    gauge: &Gauge,
    samples: usize,
    fd_step: f64,
    seed: u64,
    tol: f64,
) -> Result<DivergenceReport> {
    if !(fd_step > 0.0) {
        return invalid("fd_step must be positive");
    }
    let n = gauge.dim();
    let mut rng = sampling::stream_rng(seed, 2);
    let mut acc = ErrAcc::default();
    let mut skipped = 0;
    let mut used = 0;
    for _ in 0..samples {
        let dir = sampling::unit_direction(&mut rng, n);
        let x = sampling::scale(&dir, 10f64.powf(rng.random_range(-1.3..1.3)));
        if norm2(&x) < 10.0 * fd_step {
            skipped += 1;
            continue;
        }
        let div = fd_divergence(gauge, &x, fd_step)?;
        let exact = (n as f64 - 1.0) / gauge.eval_dual(&x)?;
        acc.push((div - exact).abs(), exact.abs());
        used += 1;
    }
    Ok(DivergenceReport {
        identity: "div(grad H(grad H°(x))) = (N-1)/H°(x)".into(),
        max_abs_err: acc.abs,
        max_rel_err: acc.rel,
        samples: used,
        skipped,
        seed,
        fd_step,
        tolerance: tol,
        passed: used > 0 && acc.rel <= tol,
    })
}

/// Central-difference divergence of `x ↦ ∇H(∇H°(x))`.
pub fn fd_divergence(gauge: &Gauge, x: &[f64], fd_step: f64) -> Result<f64> {
    let mut y = x.to_vec();
    let mut div = 0.0;
    for i in 0..x.len() {
        y[i] = x[i] + fd_step;
        let fp = gauge.grad_h(&gauge.grad_dual(&y)?)?[i];
        y[i] = x[i] - fd_step;
        let fm = gauge.grad_h(&gauge.grad_dual(&y)?)?[i];
        y[i] = x[i];
        div += (fp - fm) / (2.0 * fd_step);
    }
    Ok(div)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WulffVolume {
    pub kappa: f64,
    pub stderr: f64,
    pub budget: usize,
    pub seed: u64,
}

/// Monte-Carlo measure of the unit ball of `H°` (the Frank diagram).
pub fn wulff_volume(gauge: &Gauge, budget: usize, seed: u64) -> Result<WulffVolume> {
    if budget < 10_000 {
        return invalid(format!("budget must be >= 1e4, got {budget}"));
    }
    let n = gauge.dim();
    // H°(x) >= |x|/alpha2, so the ball sits inside the cube of half-width alpha2.
    let half = gauge.alpha2() * 1.01;
    let mut rng = sampling::stream_rng(seed, 3);
    let mut hits = 0usize;
    let mut x = vec![0.0; n];
    for _ in 0..budget {
        for v in x.iter_mut() {
            *v = rng.random_range(-half..half);
        }
        if gauge.eval_dual(&x)? < 1.0 {
            hits += 1;
        }
    }
    let frac = hits as f64 / budget as f64;
    let cube = (2.0 * half).powi(n as i32);
    Ok(WulffVolume {
        kappa: cube * frac,
        stderr: cube * (frac * (1.0 - frac) / budget as f64).sqrt(),
        budget,
        seed,
    })
}

/// Plain-text gauge description, e.g.
///
/// ```toml
/// variant = "quadratic"
/// dimension = 2
/// matrix = [[4.0, 0.0], [0.0, 1.0]]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeConfig {
    pub variant: String,
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual_mode: Option<DualMode>,
}

impl GaugeConfig {
    pub fn from_toml_str(s: &str) -> Result<GaugeConfig> {
        toml::from_str(s).map_err(|e| Error::InvalidInput(format!("gauge config: {e}")))
    }

    pub fn spec(&self) -> Result<GaugeSpec> {
        match self.variant.as_str() {
            "euclidean" => Ok(GaugeSpec::Euclidean),
            "ell_q" => {
                let q = self.q.ok_or_else(|| Error::InvalidInput("ell_q needs key `q`".into()))?;
                Ok(GaugeSpec::EllQ { q })
            }
            "quadratic" => {
                let rows = self
                    .matrix
                    .as_ref()
                    .ok_or_else(|| Error::InvalidInput("quadratic needs key `matrix`".into()))?;
                let n = rows.len();
                if rows.iter().any(|r| r.len() != n) {
                    return invalid("quadratic matrix must be square");
                }
                Ok(GaugeSpec::Quadratic {
                    matrix: DMatrix::from_fn(n, n, |i, j| rows[i][j]),
                })
            }
            other => invalid(format!("unknown gauge variant `{other}`")),
        }
    }

    pub fn build(&self, seed: u64) -> Result<Gauge> {
        Gauge::with_options(
            self.spec()?,
            self.dimension,
            GaugeOptions { dual_mode: self.dual_mode, seed, ..GaugeOptions::default() },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quad(entries: &[f64], n: usize) -> GaugeSpec {
        GaugeSpec::Quadratic { matrix: DMatrix::from_row_slice(n, n, entries) }
    }

    #[test]
    fn euclidean_values() {
        let g = Gauge::euclidean(2).unwrap();
        assert_eq!(g.eval_h(&[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(g.grad_h(&[0.0, 2.0]).unwrap(), vec![0.0, 1.0]);
        let h = g.hess_h(&[1.0, 0.0]).unwrap();
        assert_relative_eq!(h, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]), epsilon = 1e-15);
        assert_eq!(g.eval_dual(&[3.0, 4.0]).unwrap(), 5.0);
    }

    #[test]
    fn ell2_matches_euclidean() {
        let g = Gauge::new(GaugeSpec::EllQ { q: 2.0 }, 3).unwrap();
        let e = Gauge::euclidean(3).unwrap();
        let x = [0.3, -1.2, 2.5];
        assert_relative_eq!(g.eval_h(&x).unwrap(), e.eval_h(&x).unwrap(), max_relative = 1e-15);
    }

    #[test]
    fn quadratic_value_and_dual() {
        let g = Gauge::new(quad(&[4.0, 0.0, 0.0, 1.0], 2), 2).unwrap();
        assert_eq!(g.eval_h(&[1.0, 0.0]).unwrap(), 2.0);
        // A^{-1} = diag(1/4, 1)
        assert_relative_eq!(g.eval_dual(&[2.0, 0.0]).unwrap(), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn origin_is_a_domain_error() {
        let g = Gauge::euclidean(2).unwrap();
        assert!(matches!(g.grad_h(&[0.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(g.hess_h(&[0.0, 0.0]), Err(Error::Domain(_))));
        assert_eq!(g.eval_h(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(g.flux(&[0.0, 0.0], 1.5).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn non_finite_input_rejected() {
        let g = Gauge::euclidean(2).unwrap();
        assert!(matches!(g.eval_h(&[f64::NAN, 0.0]), Err(Error::InvalidInput(_))));
        assert!(matches!(g.eval_dual(&[1.0, f64::INFINITY]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn spec_validation() {
        assert!(Gauge::new(GaugeSpec::EllQ { q: 1.0 }, 2).is_err());
        assert!(Gauge::new(GaugeSpec::EllQ { q: f64::INFINITY }, 2).is_err());
        assert!(Gauge::new(quad(&[1.0, 2.0, 0.0, 1.0], 2), 2).is_err());
        assert!(Gauge::new(quad(&[1.0, 0.0, 0.0, -1.0], 2), 2).is_err());
        assert!(Gauge::new(GaugeSpec::Euclidean, 1).is_err());
    }

    #[test]
    fn euclidean_certificate() {
        let g = Gauge::euclidean(3).unwrap();
        let c = g.certificate();
        assert_relative_eq!(c.alpha1, 0.99, max_relative = 1e-10);
        assert_relative_eq!(c.alpha2, 1.01, max_relative = 1e-10);
        assert_relative_eq!(c.m, 1.01, max_relative = 1e-10);
        assert_relative_eq!(c.mbar, 1.01, max_relative = 1e-10);
        assert_relative_eq!(c.lambda, 0.99, max_relative = 1e-10);
    }

    #[test]
    fn quadratic_certificate_brackets_eigenvalues() {
        let g = Gauge::new(quad(&[4.0, 0.0, 0.0, 1.0], 2), 2).unwrap();
        assert!(g.alpha1() <= 1.0 && g.alpha1() > 0.98);
        assert!(g.alpha2() >= 2.0 && g.alpha2() < 2.03);
    }

    #[test]
    fn custom_gauge_uses_numerical_dual() {
        let eval: Evaluator = Arc::new(|x: &[f64]| (4.0 * x[0] * x[0] + x[1] * x[1]).sqrt());
        let g = Gauge::new(GaugeSpec::Custom { name: "ellipse".into(), eval }, 2).unwrap();
        assert_eq!(g.dual_mode(), DualMode::Numerical);
        let x: [f64; 2] = [0.7, -1.3];
        let exact = (x[0] * x[0] / 4.0 + x[1] * x[1]).sqrt();
        assert_relative_eq!(g.eval_dual(&x).unwrap(), exact, max_relative = 1e-9);
        let gr = g.grad_h(&[1.0, 1.0]).unwrap();
        let s5 = 5f64.sqrt();
        assert_relative_eq!(gr[0], 4.0 / s5, max_relative = 1e-8);
        assert_relative_eq!(gr[1], 1.0 / s5, max_relative = 1e-8);
    }

    #[test]
    fn tangent_eigen_ignores_normal_direction() {
        // diag(0, 2, 3) restricted to e_0^⊥ has min eigenvalue 2.
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 2.0, 3.0]));
        assert_relative_eq!(tangent_min_eig(&m, &[1.0, 0.0, 0.0]), 2.0, max_relative = 1e-12);
        assert_relative_eq!(tangent_min_eig(&m, &[-1.0, 0.0, 0.0]), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn config_round_trip() {
        let cfg = GaugeConfig::from_toml_str(
            "variant = \"quadratic\"\ndimension = 2\nmatrix = [[4.0, 0.0], [0.0, 1.0]]\n",
        )
        .unwrap();
        let g = cfg.build(0).unwrap();
        assert_eq!(g.eval_h(&[1.0, 0.0]).unwrap(), 2.0);
        assert!(GaugeConfig::from_toml_str("variant = \"ell_q\"\ndimension = 2\n")
            .unwrap()
            .spec()
            .is_err());
        assert!(GaugeConfig::from_toml_str("variant = \"x\"\ndimension = 2\nbogus = 1\n").is_err());
    }
}
