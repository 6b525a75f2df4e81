//! Radial two-point boundary-value problems, comparison checks and the
//! Liouville rigidity check.
//!
//! The solver discretizes the divergence form
//! `-t^{1-N}(t^{N-1}|v'|^{p-2}v')' - γv^{p-1}/t^p = f v^{p-1}` on a log-uniform
//! grid. In `x = ln t` the flux is `e^{(N-p)x}φ(v_x)`, `φ(s) = |s|^{p-2}s`, and
//! each interior equation is multiplied by `t^p`:
//!
//! `ρ_i = -(E₊φ(s₊) - E₋φ(s₋))/h - γv_i^{p-1} - t_i^p f_i v_i^{p-1}`,
//!
//! with `E± = e^{±(N-p)h/2}` and one-sided slopes `s±`. The relative residual
//! divides by the sum of the absolute values of the terms.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::radial::{self, log_grid, RadialProfile, GRADIENT_FLOOR};
use crate::spectrum::{solve_exponents, Branch, ProblemParams};

pub const NEWTON_MAX_ITER: usize = 200;
pub const NEWTON_TOL: f64 = 1e-9;
pub const LIOUVILLE_TOL: f64 = 1e-6;
pub const ORDER_TOL: f64 = 1e-10;
const POLISH_STEPS: usize = 3;
const CONTINUATION_STAGE_ITER: usize = 60;
/// Intermediate continuation stages only provide starting points; a nearly
/// flat p-harmonic stage cannot be resolved below ~1e-6 in double precision.
const STAGE_TOL: f64 = 1e-4;

pub type CoefficientFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Right-hand side of the radial equation.
#[derive(Clone)]
pub enum Reaction {
    /// `-Δ_p v = 0`: neither the Hardy potential nor a reaction.
    Zero,
    /// `-Δ_p v - γv^{p-1}/t^p = 0`.
    HardyOnly,
    /// `-Δ_p v - γv^{p-1}/t^p = v^{p*-1}`.
    DoublyCritical,
    /// `-Δ_p v - γv^{p-1}/t^p = f(t)v^{p-1}`.
    Custom { name: String, f: CoefficientFn },
}

impl std::fmt::Debug for Reaction {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.write_str(&self.label())
    }
}

impl Reaction {
    pub fn label(&self) -> String {
        match self {
            Reaction::Zero => "zero".into(),
            Reaction::HardyOnly => "hardy-only".into(),
            Reaction::DoublyCritical => "doubly-critical".into(),
            Reaction::Custom { name, .. } => format!("custom:{name}"),
        }
    }

    fn gamma(&self, params: &ProblemParams) -> f64 {
        match self {
            Reaction::Zero => 0.0,
            _ => params.gamma,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BvpSpec {
    pub params: ProblemParams,
    pub a: f64,
    pub b: f64,
    pub va: f64,
    pub vb: f64,
    pub reaction: Reaction,
}

impl BvpSpec {
    pub fn new(params: ProblemParams, interval: (f64, f64), values: (f64, f64), reaction: Reaction) -> Result<BvpSpec> {
        let s = BvpSpec { params, a: interval.0, b: interval.1, va: values.0, vb: values.1, reaction };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validated()?;
        if !(self.a > 0.0 && self.b > self.a && self.b.is_finite()) {
            return invalid(format!("need 0 < a < b, got ({}, {})", self.a, self.b));
        }
        if !(self.va > 0.0 && self.vb > 0.0 && self.va.is_finite() && self.vb.is_finite()) {
            return invalid(format!("boundary values must be positive, got ({}, {})", self.va, self.vb));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialGuess {
    /// The pure power through both boundary values.
    LogLinear,
    /// Affine in `ln t`.
    AffineLog,
    /// Straight line in `t`.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BvpOptions {
    pub points: usize,
    /// Combine the solutions on `n` and `2n-1` points, `(4v_fine - v_coarse)/3`.
    pub richardson: bool,
    pub initial: InitialGuess,
}

impl Default for BvpOptions {
    fn default() -> Self {
        BvpOptions { points: 2048, richardson: true, initial: InitialGuess::LogLinear }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BvpSolution {
    pub profile: RadialProfile,
    pub iterations: usize,
    /// Max relative residual of the discrete system at exit (finest solve).
    pub residual: f64,
    pub residual_history: Vec<f64>,
    pub floored_points: usize,
    /// Max relative residual of `radial_operator` on the returned profile
    /// (finite-difference derivatives), reported for information.
    pub operator_residual: f64,
}

struct System<'a> {
    spec: &'a BvpSpec,
    t: Vec<f64>,
    h: f64,
    gamma: f64,
    fcoef: Vec<f64>,
    /// Homotopy weight on the potential and reaction terms.
    lambda: f64,
    ep: f64,
    em: f64,
}

struct Eval {
    rho: Vec<f64>,
    mag: Vec<f64>,
    floored: usize,
}

fn phi_parts(s: f64, floor: f64, p: f64) -> (f64, f64, bool) {
    let mut a = s.abs();
    let mut fl = false;
    if a < floor {
        a = floor;
        fl = true;
    }
    if p == 2.0 {
        return (s, 1.0, false);
    }
    let w = a.powf(p - 2.0);
    (w * s, (p - 1.0) * w, fl)
}

impl<'a> System<'a> {
    fn new(spec: &'a BvpSpec, n: usize) -> Result<System<'a>> {
        let t = log_grid(spec.a, spec.b, n)?;
        let h = (spec.b.ln() - spec.a.ln()) / (n - 1) as f64;
        let pp = &spec.params;
        let fcoef = match &spec.reaction {
            Reaction::Custom { f, .. } => t.iter().map(|&x| f(x) * x.powf(pp.p)).collect(),
            _ => vec![0.0; n],
        };
        if fcoef.iter().any(|x: &f64| !x.is_finite()) {
            return invalid("reaction coefficient is not finite on the grid");
        }
        let e = (pp.dim() - pp.p) * h / 2.0;
        Ok(System { gamma: spec.reaction.gamma(pp), spec, t, h, fcoef, lambda: 1.0, ep: e.exp(), em: (-e).exp() })
    }

    fn eval(&self, v: &[f64], jac: Option<(&mut [f64], &mut [f64], &mut [f64])>) -> Eval {
        let p = self.spec.params.p;
        let n = v.len();
        let h = self.h;
        let ps = self.spec.params.p_star();
        let crit = matches!(self.spec.reaction, Reaction::DoublyCritical);
        let mut rho = vec![0.0; n];
        let mut mag = vec![0.0; n];
        let mut floored = 0;
        let mut jac = jac;
        for i in 1..n - 1 {
            let sp = (v[i + 1] - v[i]) / h;
            let sm = (v[i] - v[i - 1]) / h;
            let (fp, dfp, flp) = phi_parts(sp, GRADIENT_FLOOR * 0.5 * (v[i] + v[i + 1]).abs(), p);
            let (fm, dfm, flm) = phi_parts(sm, GRADIENT_FLOOR * 0.5 * (v[i] + v[i - 1]).abs(), p);
            floored += usize::from(flp || flm);
            let vp1 = v[i].powf(p - 1.0);
            let a = -self.ep * fp / h;
            let b = self.em * fm / h;
            let c = -self.lambda * self.gamma * vp1;
            let d = self.lambda
                * if crit {
                    -self.t[i].powf(p) * v[i].powf(ps - 1.0)
                } else {
                    -self.fcoef[i] * vp1
                };
            rho[i] = a + b + c + d;
            mag[i] = a.abs() + b.abs() + c.abs() + d.abs();
            if let Some((lo, di, up)) = jac.as_mut() {
                let h2 = h * h;
                up[i] = -self.ep * dfp / h2;
                lo[i] = -self.em * dfm / h2;
                let vp2 = (p - 1.0) * v[i].powf(p - 2.0);
                let dd = self.lambda
                    * if crit {
                        -self.t[i].powf(p) * (ps - 1.0) * v[i].powf(ps - 2.0)
                    } else {
                        -self.fcoef[i] * vp2
                    };
                di[i] = (self.ep * dfp + self.em * dfm) / h2 - self.lambda * self.gamma * vp2 + dd;
            }
        }
        Eval { rho, mag, floored }
    }
}

fn rel_max(e: &Eval) -> f64 {
    let n = e.rho.len();
    (1..n - 1).map(|i| e.rho[i].abs() / e.mag[i].max(1e-300)).fold(0.0, f64::max)
}

/// Sum of squared residuals, scaled by the term magnitudes of a fixed reference iterate.
fn merit(e: &Eval, scale: &[f64]) -> f64 {
    let n = e.rho.len();
    (1..n - 1).map(|i| (e.rho[i] / scale[i].max(1e-300)).powi(2)).sum()
}

/// Thomas algorithm on interior rows `1..n-1`; `rhs` is overwritten with the solution.
fn tridiag_solve(lo: &[f64], di: &[f64], up: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = rhs.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let l = if i > 1 { lo[i] } else { 0.0 };
        let den = di[i] - l * c[i - 1];
        if den == 0.0 || !den.is_finite() {
            return Err(Error::InternalConsistency("singular Newton Jacobian".into()));
        }
        c[i] = if i < n - 2 { up[i] / den } else { 0.0 };
        d[i] = (rhs[i] - l * d[i - 1]) / den;
    }
    for i in (1..n - 1).rev() {
        rhs[i] = d[i] - if i < n - 2 { c[i] * rhs[i + 1] } else { 0.0 };
    }
    rhs[0] = 0.0;
    rhs[n - 1] = 0.0;
    Ok(())
}

struct RawSolve {
    t: Vec<f64>,
    v: Vec<f64>,
    iterations: usize,
    residual: f64,
    history: Vec<f64>,
    floored: usize,
}

fn initial_values(spec: &BvpSpec, t: &[f64], initial: InitialGuess) -> Vec<f64> {
    let (la, lb) = (spec.a.ln(), spec.b.ln());
    let mut v: Vec<f64> = t
        .iter()
        .map(|&t| match initial {
            InitialGuess::LogLinear => spec.va * (spec.vb / spec.va).powf((t.ln() - la) / (lb - la)),
            InitialGuess::AffineLog => spec.va + (spec.vb - spec.va) * (t.ln() - la) / (lb - la),
            InitialGuess::Linear => spec.va + (spec.vb - spec.va) * (t - spec.a) / (spec.b - spec.a),
        })
        .collect();
    let n = v.len();
    v[0] = spec.va;
    v[n - 1] = spec.vb;
    v
}

/// `A + B t^{-(N-p)/(p-1)}` through the boundary data: the radial p-harmonic
/// function, monotone between the data.
fn p_harmonic_values(spec: &BvpSpec, t: &[f64]) -> Vec<f64> {
    let pp = &spec.params;
    let m = (pp.dim() - pp.p) / (pp.p - 1.0);
    let (ka, kb) = (spec.a.powf(-m), spec.b.powf(-m));
    let bb = (spec.va - spec.vb) / (ka - kb);
    let aa = spec.va - bb * ka;
    let mut v: Vec<f64> = t.iter().map(|&x| aa + bb * x.powf(-m)).collect();
    let n = v.len();
    v[0] = spec.va;
    v[n - 1] = spec.vb;
    v
}

fn newton(spec: &BvpSpec, n: usize, initial: InitialGuess) -> Result<RawSolve> {
    let mut sys = System::new(spec, n)?;
    let v = initial_values(spec, &sys.t, initial);
    match newton_from(&sys, v, NEWTON_MAX_ITER, NEWTON_TOL) {
        Ok(r) => Ok(r),
        Err(Error::Solver { reason, iterations, residual_history }) => {
            continuation(&mut sys).map_err(|_| Error::Solver { reason, iterations, residual_history })
        }
        Err(e) => Err(e),
    }
}

/// Fallback when Newton stalls from the initial guess: start from the
/// p-harmonic interpolant with the potential and reaction switched off, then
/// raise their weight to 1, halving the increment after a failed stage.
fn continuation(sys: &mut System) -> Result<RawSolve> {
    let mut v = p_harmonic_values(sys.spec, &sys.t);
    let mut lambda = 0.0;
    let mut dl: f64 = 0.25;
    let mut iterations = 0;
    let mut history = vec![];
    sys.lambda = 0.0;
    let first = newton_from(sys, v.clone(), CONTINUATION_STAGE_ITER, STAGE_TOL)?;
    iterations += first.iterations;
    history.extend(&first.history);
    v = first.v;
    while lambda < 1.0 {
        let next = (lambda + dl).min(1.0);
        sys.lambda = next;
        match newton_from(sys, v.clone(), CONTINUATION_STAGE_ITER, STAGE_TOL) {
            Ok(r) => {
                iterations += r.iterations;
                history.extend(&r.history);
                v = r.v;
                lambda = next;
                dl = (2.0 * dl).min(0.5);
            }
            Err(_) if dl > 1e-3 => dl /= 2.0,
            Err(e) => return Err(e),
        }
    }
    let mut last = newton_from(sys, v, NEWTON_MAX_ITER, NEWTON_TOL)?;
    last.iterations += iterations;
    history.extend(&last.history);
    last.history = history;
    Ok(last)
}

fn newton_from(sys: &System, mut v: Vec<f64>, max_iter: usize, tol: f64) -> Result<RawSolve> {
    let n = v.len();
    let mut lo = vec![0.0; n];
    let mut di = vec![0.0; n];
    let mut up = vec![0.0; n];
    let mut e = sys.eval(&v, Some((&mut lo, &mut di, &mut up)));
    let mut history = vec![rel_max(&e)];
    for it in 0..max_iter {
        let r = rel_max(&e);
        if r <= tol {
            // a few undamped polishing steps, kept only while they help
            let mut iterations = it;
            let (mut v, mut e, mut r) = (v, e, r);
            for _ in 0..POLISH_STEPS {
                let mut step: Vec<f64> = e.rho.iter().map(|x| -x).collect();
                if tridiag_solve(&lo, &di, &up, &mut step).is_err() {
                    break;
                }
                let cand: Vec<f64> = v.iter().zip(&step).map(|(x, d)| x + d).collect();
                if !cand.iter().all(|&x| x > 0.0 && x.is_finite()) {
                    break;
                }
                let ec = sys.eval(&cand, Some((&mut lo, &mut di, &mut up)));
                let rc = rel_max(&ec);
                if rc >= r {
                    break;
                }
                (v, e, r) = (cand, ec, rc);
                iterations += 1;
                history.push(r);
            }
            return Ok(RawSolve { t: sys.t.clone(), v, iterations, residual: r, history, floored: e.floored });
        }
        let mut step: Vec<f64> = e.rho.iter().map(|x| -x).collect();
        tridiag_solve(&lo, &di, &up, &mut step)?;
        let m0 = merit(&e, &e.mag);
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = v.iter().zip(&step).map(|(x, d)| x + lambda * d).collect();
            if cand.iter().all(|&x| x > 0.0 && x.is_finite()) {
                let ec = sys.eval(&cand, None);
                let mc = merit(&ec, &e.mag);
                if mc < m0 * (1.0 - 1e-4 * lambda) || rel_max(&ec) <= tol {
                    accepted = Some(cand);
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some(c) => v = c,
            None => {
                return Err(Error::Solver {
                    reason: "damped Newton step could not reduce the residual while keeping v > 0".into(),
                    iterations: it,
                    residual_history: history,
                })
            }
        }
        e = sys.eval(&v, Some((&mut lo, &mut di, &mut up)));
        history.push(rel_max(&e));
    }
    let r = rel_max(&e);
    if r <= tol {
        return Ok(RawSolve { t: sys.t.clone(), v, iterations: max_iter, residual: r, history, floored: e.floored });
    }
    Err(Error::Solver {
        reason: format!("no convergence in {max_iter} Newton iterations"),
        iterations: max_iter,
        residual_history: history,
    })
}

/// Damped-Newton solve of the Dirichlet problem on a log-uniform grid of
/// `opts.points` points, optionally Richardson-extrapolated from a second
/// solve on `2n-1` points.
pub fn bvp_solve(spec: &BvpSpec, opts: BvpOptions) -> Result<BvpSolution> {
    spec.validate()?;
    if opts.points < 5 {
        return invalid("need at least 5 grid points");
    }
    let coarse = newton(spec, opts.points, opts.initial)?;
    let (v, iterations, residual, history, floored) = if opts.richardson {
        let fine = newton(spec, 2 * opts.points - 1, opts.initial)?;
        let v: Vec<f64> = coarse.v.iter().enumerate().map(|(i, c)| (4.0 * fine.v[2 * i] - c) / 3.0).collect();
        let mut hist = coarse.history.clone();
        hist.extend(&fine.history);
        (v, coarse.iterations + fine.iterations, coarse.residual.max(fine.residual), hist, coarse.floored.max(fine.floored))
    } else {
        (coarse.v.clone(), coarse.iterations, coarse.residual, coarse.history.clone(), coarse.floored)
    };
    if v.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Solver {
            reason: "extrapolated solution lost positivity".into(),
            iterations,
            residual_history: history,
        });
    }
    let profile = RadialProfile::from_values(coarse.t, v)?;
    let operator_residual = operator_residual(spec, &profile)?;
    Ok(BvpSolution { profile, iterations, residual, residual_history: history, floored_points: floored, operator_residual })
}

fn reaction_rhs(spec: &BvpSpec, profile: &RadialProfile) -> Vec<f64> {
    let p = spec.params.p;
    let ps = spec.params.p_star();
    profile
        .t()
        .iter()
        .zip(profile.v())
        .map(|(&t, &v)| match &spec.reaction {
            Reaction::Zero | Reaction::HardyOnly => 0.0,
            Reaction::DoublyCritical => v.powf(ps - 1.0),
            Reaction::Custom { f, .. } => f(t) * v.powf(p - 1.0),
        })
        .collect()
}

fn operator_residual(spec: &BvpSpec, profile: &RadialProfile) -> Result<f64> {
    let pp = spec.params.with_gamma(spec.reaction.gamma(&spec.params))?;
    let rhs = reaction_rhs(spec, profile);
    let n = profile.len();
    let op = radial::radial_operator(&pp, profile)?;
    // one-sided stencils at the two ends are first order; skip them
    Ok((2..n - 2)
        .map(|i| (op.values[i] - rhs[i]).abs() / (op.magnitude[i] + rhs[i].abs()).max(1e-300))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    /// `(sub - super)/super`, positive on a crossing.
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypotheses {
    /// Largest relative excess of `L[sub] - fsub·sub^{p-1}` above 0.
    pub sub_residual: f64,
    /// Largest relative excess of `fsuper·super^{p-1} - L[super]` above 0.
    pub super_residual: f64,
    pub coefficients_ordered: bool,
    pub boundary_ordered: bool,
    pub inf_super: f64,
    pub tolerance: f64,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub values: Vec<(f64, f64)>,
    pub slope: Option<f64>,
    pub decreasing: bool,
    /// The finite-R heuristic: strictly decreasing with slope below -0.01, or
    /// nonincreasing and eventually 0.
    pub certifies: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub ordered: bool,
    pub worst: Violation,
    pub tolerance: f64,
    pub hypotheses: Option<Hypotheses>,
    pub growth: Option<GrowthReport>,
}

/// Raw ordering detector: `sub ≤ super` on the common grid up to
/// `ORDER_TOL` relative to `super`.
pub fn ordering_report(sub: &RadialProfile, sup: &RadialProfile) -> Result<ComparisonReport> {
    same_grid(sub, sup)?;
    let mut worst = Violation { t: sub.t()[0], magnitude: f64::NEG_INFINITY };
    for ((t, a), b) in sub.t().iter().zip(sub.v()).zip(sup.v()) {
        let m = (a - b) / b.abs().max(1e-300);
        if m > worst.magnitude {
            worst = Violation { t: *t, magnitude: m };
        }
    }
    Ok(ComparisonReport { ordered: worst.magnitude <= ORDER_TOL, worst, tolerance: ORDER_TOL, hypotheses: None, growth: None })
}

fn same_grid(a: &RadialProfile, b: &RadialProfile) -> Result<()> {
    if a.len() != b.len() || a.t().iter().zip(b.t()).any(|(x, y)| (x - y).abs() > 1e-12 * x) {
        return invalid("profiles must share a grid");
    }
    Ok(())
}

/// Check the hypotheses of the comparison principle on the grid, then the
/// conclusion `sub ≤ super`. `fsub`, `fsuper` are the coefficients `f` in
/// `-Δ_p w - γw^{p-1}/t^p = f w^{p-1}`. End points are excluded from the
/// residual tests (one-sided stencils).
pub fn verify_comparison(
    params: &ProblemParams,
    sub: &RadialProfile,
    sup: &RadialProfile,
    fsub: &[f64],
    fsuper: &[f64],
    residual_tol: f64,
) -> Result<ComparisonReport> {
    same_grid(sub, sup)?;
    let n = sub.len();
    if fsub.len() != n || fsuper.len() != n {
        return invalid("coefficients must live on the profile grid");
    }
    if !sub.is_strictly_positive() || !sup.is_strictly_positive() {
        return invalid("comparison needs strictly positive profiles");
    }
    let p = params.p;
    let lsub = radial::radial_operator(params, sub)?;
    let lsup = radial::radial_operator(params, sup)?;
    let mut hs: f64 = 0.0;
    let mut hp: f64 = 0.0;
    for i in 1..n - 1 {
        let r = fsub[i] * sub.v()[i].powf(p - 1.0);
        hs = hs.max((lsub.values[i] - r) / (lsub.magnitude[i] + r.abs()).max(1e-300));
        let r = fsuper[i] * sup.v()[i].powf(p - 1.0);
        hp = hp.max((r - lsup.values[i]) / (lsup.magnitude[i] + r.abs()).max(1e-300));
    }
    let hyp = Hypotheses {
        sub_residual: hs,
        super_residual: hp,
        coefficients_ordered: fsub.iter().zip(fsuper).all(|(a, b)| a <= b),
        boundary_ordered: sub.v()[0] <= sup.v()[0] && sub.v()[n - 1] <= sup.v()[n - 1],
        inf_super: sup.v().iter().cloned().fold(f64::INFINITY, f64::min),
        tolerance: residual_tol,
        verified: false,
    };
    let verified =
        hs <= residual_tol && hp <= residual_tol && hyp.coefficients_ordered && hyp.boundary_ordered && hyp.inf_super > 0.0;
    if !verified {
        return invalid(format!("comparison hypotheses not verified: {hyp:?}"));
    }
    let mut rep = ordering_report(sub, sup)?;
    rep.hypotheses = Some(Hypotheses { verified, ..hyp });
    Ok(rep)
}

fn cumulative(x: &[f64], f: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; f.len()];
    for i in 1..f.len() {
        c[i] = c[i - 1] + 0.5 * (f[i] + f[i - 1]) * (x[i] - x[i - 1]);
    }
    c
}

fn integral_to(x: &[f64], f: &[f64], cum: &[f64], xr: f64) -> f64 {
    let k = x.partition_point(|&xi| xi <= xr).clamp(1, x.len() - 1);
    let (x0, x1) = (x[k - 1], x[k]);
    let fr = f[k - 1] + (f[k] - f[k - 1]) * (xr - x0) / (x1 - x0);
    cum[k - 1] + 0.5 * (f[k - 1] + fr) * (xr - x0)
}

/// `(1/R)∫_{R<H°<2R} u^p |∇ ln v|^{p-1} dx` for each `R`, computed radially as
/// `(Nκ/R)∫_R^{2R} u^p |v'/v|^{p-1} t^{N-1} dt` on `H°`-annuli.
pub fn exterior_growth_check(
    params: &ProblemParams,
    u: &RadialProfile,
    v: &RadialProfile,
    radii: &[f64],
    kappa: f64,
) -> Result<GrowthReport> {
    same_grid(u, v)?;
    if !v.is_strictly_positive() {
        return invalid("v must be strictly positive");
    }
    if !(kappa > 0.0) {
        return invalid("kappa must be positive");
    }
    let rmax = radii.iter().cloned().fold(0.0, f64::max);
    if radii.is_empty() || radii.iter().any(|&r| !(r >= u.t_min())) || u.t_max() < 4.0 * rmax {
        return invalid(format!("need radii >= t_min and t_max >= 4 max(R); t_max = {}", u.t_max()));
    }
    let (n, p) = (params.dim(), params.p);
    let x: Vec<f64> = u.t().iter().map(|t| t.ln()).collect();
    let f: Vec<f64> = (0..u.len())
        .map(|i| {
            let t = u.t()[i];
            n * kappa * u.v()[i].abs().powf(p) * (v.dv()[i] / v.v()[i]).abs().powf(p - 1.0) * t.powf(n)
        })
        .collect();
    let cum = cumulative(&x, &f);
    let values: Vec<(f64, f64)> = radii
        .iter()
        .map(|&r| (r, (integral_to(&x, &f, &cum, (2.0 * r).ln()) - integral_to(&x, &f, &cum, r.ln())).max(0.0) / r))
        .collect();
    let decreasing = values.windows(2).all(|w| w[1].1 < w[0].1);
    let nonincreasing = values.windows(2).all(|w| w[1].1 <= w[0].1);
    let slope = if values.iter().all(|v| v.1 > 0.0) && values.len() >= 2 {
        radial::norm_curve_slope(&values).ok().map(|s| s.0)
    } else {
        None
    };
    let certifies = (decreasing && slope.is_some_and(|s| s < -0.01))
        || (nonincreasing && values.last().is_some_and(|v| v.1 == 0.0));
    Ok(GrowthReport { values, slope, decreasing, certifies })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiouvilleReport {
    pub branch: Branch,
    pub mu: f64,
    pub c: f64,
    pub interval: (f64, f64),
    pub deviation: f64,
    pub widened_interval: (f64, f64),
    pub widened_deviation: f64,
    /// `(points, deviation)` over the refinement ladder.
    pub refinement: Vec<(usize, f64)>,
    pub refinement_monotone: bool,
    pub tolerance: f64,
    pub passed: bool,
}

/// Max relative deviation of a profile from `c t^{-μ}`.
pub fn power_deviation(profile: &RadialProfile, c: f64, mu: f64) -> f64 {
    profile
        .t()
        .iter()
        .zip(profile.v())
        .map(|(t, v)| {
            let w = c * t.powf(-mu);
            (v - w).abs() / w
        })
        .fold(0.0, f64::max)
}

/// Solve the homogeneous problem with pure-power data `c a^{-μ}`, `c b^{-μ}`
/// and compare with `c t^{-μ}`; repeat on the interval widened 10× on each
/// side and over the ladder `points`, `4·points`, `16·points`.
pub fn liouville_check(
    params: &ProblemParams,
    branch: Branch,
    interval: (f64, f64),
    c: f64,
    points: usize,
) -> Result<LiouvilleReport> {
    if !(c > 0.0) {
        return invalid("c must be positive");
    }
    let e = solve_exponents(params)?;
    let mu = match branch {
        Branch::Origin => e.mu1,
        Branch::Infinity => e.mu2,
    };
    let solve = |iv: (f64, f64), n: usize| -> Result<f64> {
        let spec = BvpSpec::new(*params, iv, (c * iv.0.powf(-mu), c * iv.1.powf(-mu)), Reaction::HardyOnly)?;
        let sol = bvp_solve(&spec, BvpOptions { points: n, richardson: true, initial: InitialGuess::AffineLog })?;
        Ok(power_deviation(&sol.profile, c, mu))
    };
    let widened = (interval.0 / 10.0, interval.1 * 10.0);
    let refinement: Vec<(usize, f64)> = [points, 4 * points, 16 * points]
        .iter()
        .map(|&n| solve(interval, n).map(|d| (n, d)))
        .collect::<Result<_>>()?;
    let deviation = refinement[0].1;
    let widened_deviation = solve(widened, points)?;
    // deviations at this level are rounding, not discretization
    let floor = LIOUVILLE_TOL / 100.0;
    let refinement_monotone = refinement.windows(2).all(|w| w[1].1 <= w[0].1 || w[1].1 <= floor);
    let passed = refinement.iter().all(|r| r.1 <= LIOUVILLE_TOL) && widened_deviation <= LIOUVILLE_TOL && refinement_monotone;
    Ok(LiouvilleReport {
        branch,
        mu,
        c,
        interval,
        deviation,
        widened_interval: widened,
        widened_deviation,
        refinement,
        refinement_monotone,
        tolerance: LIOUVILLE_TOL,
        passed,
    })
}

/// One (sub, super) pair of the seeded suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCase {
    pub kind: String,
    pub description: String,
    pub verified: bool,
    pub ordered: bool,
    pub worst: Option<Violation>,
    /// Why the hypotheses were not verified, or why the pair could not be built.
    pub rejection: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSuite {
    pub seed: u64,
    pub residual_tol: f64,
    pub cases: Vec<PairCase>,
    pub verified: usize,
    pub verified_ordered: usize,
    /// At least one verified pair, and every verified pair ordered.
    pub passed: bool,
}

pub const SUITE_POINTS: usize = 1025;

fn pair_case(kind: &str, description: String, params: &ProblemParams, build: Result<(RadialProfile, RadialProfile, Vec<f64>)>, tol: f64) -> PairCase {
    let mut case = PairCase { kind: kind.into(), description, verified: false, ordered: false, worst: None, rejection: None };
    match build.and_then(|(sub, sup, f)| verify_comparison(params, &sub, &sup, &f, &f, tol)) {
        Ok(rep) => {
            case.verified = true;
            case.ordered = rep.ordered;
            case.worst = Some(rep.worst);
        }
        Err(e) => case.rejection = Some(e.to_string()),
    }
    case
}

fn bvp_opts() -> BvpOptions {
    BvpOptions { points: SUITE_POINTS, ..BvpOptions::default() }
}

/// Seeded (sub, super) pairs for one parameter set. Each round draws three
/// pairs:
///
/// * `synthesized`: the synthesized origin supersolution for `f = A t^{-α}`
///   against the BVP solution with the same coefficient and boundary data
///   scaled by `s ∈ [0.5, 1]`, on `[R/1000, 0.9R]`;
/// * `scaled-power`: `c t^{-μ}` below `t^{-μ}` on `[0.1, 10]`, `μ = μ1` or `μ2`;
/// * `hardy-bvp`: two Hardy-only BVP solutions on `[0.2, 5]` with ordered data
///   of power-law type between `t^{-μ1}` and `t^{-μ2}`.
///
/// Pairs whose hypotheses do not verify are kept in the report but do not
/// count towards the verdict.
pub fn seeded_pair_suite(params: &ProblemParams, seed: u64, rounds: usize, residual_tol: f64) -> Result<PairSuite> {
    use rand::Rng;
    let pp = params.validated()?;
    if rounds == 0 {
        return invalid("need at least one round");
    }
    let p = pp.p;
    let ex = solve_exponents(&pp)?;
    let mut cases = vec![];
    for k in 0..rounds {
        let mut rng = crate::sampling::stream_rng(seed, k as u64);
        let a = rng.random_range(0.5..2.0);
        let lo_alpha = (p - 2.0).max(0.0) + 0.1;
        let alpha = rng.random_range(lo_alpha..p - 0.1);
        let s = rng.random_range(0.5..1.0);
        let build = (|| {
            let sp = crate::spectrum::supersolution_params(&pp, a, alpha, Branch::Origin)?;
            let (lo, hi) = (sp.r * 1e-3, sp.r * 0.9);
            let grid = log_grid(lo, hi, SUITE_POINTS)?;
            let sup = RadialProfile::from_fn(grid.clone(), |t| sp.v(t), |t| sp.dv(t), |t| sp.d2v(t))?;
            let f: CoefficientFn = Arc::new(move |t: f64| a * t.powf(-alpha));
            let spec = BvpSpec::new(
                pp,
                (lo, hi),
                (s * sp.v(lo), s * sp.v(hi)),
                Reaction::Custom { name: "A t^-alpha".into(), f: f.clone() },
            )?;
            let sol = bvp_solve(&spec, bvp_opts())?;
            let coef = grid.iter().map(|&t| f(t)).collect();
            Ok((sol.profile, sup, coef))
        })();
        cases.push(pair_case("synthesized", format!("A={a}, alpha={alpha}, scale={s}"), &pp, build, residual_tol));

        let (name, mu) = if k % 2 == 0 { ("mu1", ex.mu1) } else { ("mu2", ex.mu2) };
        let c = rng.random_range(0.2..1.0);
        let build = (|| {
            let grid = log_grid(0.1, 10.0, SUITE_POINTS)?;
            let sub = RadialProfile::power(grid.clone(), c, mu)?;
            let sup = RadialProfile::power(grid, 1.0, mu)?;
            Ok((sub, sup, vec![0.0; SUITE_POINTS]))
        })();
        cases.push(pair_case("scaled-power", format!("{c}·t^-{name} below t^-{name}"), &pp, build, residual_tol));

        // data on t^{-m} with m inside (μ1, μ2) keep both solutions free of critical points
        let (a0, b0) = (0.2f64, 5.0f64);
        let gap = ex.mu2 - ex.mu1;
        let m = ex.mu1 + gap * rng.random_range(0.3..0.7);
        let r = (b0 / a0).powf(-m);
        let lift = 0.2 * gap * (b0 / a0).ln();
        let (ua, ub) = ((lift * rng.random_range(0.0..1.0)).exp(), (lift * rng.random_range(0.0..1.0)).exp());
        let build = (|| {
            let lo = bvp_solve(&BvpSpec::new(pp, (a0, b0), (1.0, r), Reaction::HardyOnly)?, bvp_opts())?;
            let hi = bvp_solve(&BvpSpec::new(pp, (a0, b0), (ua, ub * r), Reaction::HardyOnly)?, bvp_opts())?;
            Ok((lo.profile, hi.profile, vec![0.0; SUITE_POINTS]))
        })();
        cases.push(pair_case("hardy-bvp", format!("data (1, {r}) below ({ua}, {})", ub * r), &pp, build, residual_tol));
    }
    let verified = cases.iter().filter(|c| c.verified).count();
    let verified_ordered = cases.iter().filter(|c| c.verified && c.ordered).count();
    Ok(PairSuite { seed, residual_tol, cases, verified, verified_ordered, passed: verified > 0 && verified == verified_ordered })
}
