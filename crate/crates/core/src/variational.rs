//! The Hardy–Sobolev quotient
//! `S(γ) = inf ∫(H(∇u)^p - γ|u|^p/H°(x)^p) / (∫|u|^{p*})^{p/p*}`
//! restricted to `H°`-radial functions, discretized on a log-uniform grid
//! with Dirichlet-zero ends, and its minimization.
//!
//! In `x = ln t` the radial integrals become
//! `L(v) = Nκ∫(|v_x|^p - γ|v|^p) e^{(N-p)x} dx` and `D(v) = Nκ∫|v|^{p*} e^{Nx} dx`.
//! Gradient terms live on cells (midpoint rule), the others on nodes
//! (trapezoid rule).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::radial::{decay_fit, gradient_decay_fit, log_grid, DecayFit, RadialProfile};
use crate::sampling;
use crate::spectrum::{solve_exponents, ProblemParams};

pub const DEFAULT_RANGE: (f64, f64) = (1e-4, 1e4);
pub const WIDE_RANGE: (f64, f64) = (1e-5, 1e5);
pub const DEFAULT_POINTS: usize = 1601;
pub const SELF_TEST_TOL: f64 = 1e-3;
pub const DECAY_TOL: f64 = 0.05;
/// Slack allowed in the energy history once the Armijo decrease is below
/// rounding.
pub const ENERGY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotientSetup {
    pub params: ProblemParams,
    pub kappa: f64,
    pub range: (f64, f64),
    pub t: Vec<f64>,
    pub h: f64,
    /// Node weights `Nκ t_i^N h` (halved at the ends): `∫ g dt/t·t^N Nκ ≈ Σ w_i g_i`.
    pub weights: Vec<f64>,
    /// Cell weights `Nκ e^{(N-p)x_{j+1/2}} h^{1-p}` for `|v_{j+1} - v_j|^p`.
    pub cell_weights: Vec<f64>,
    /// Relative error of the quadrature on `∫ t^{N-1} t^{-N+1/2} dt`.
    pub self_test_error: f64,
}

impl QuotientSetup {
    pub fn new(params: &ProblemParams, kappa: f64, range: (f64, f64), points: usize) -> Result<QuotientSetup> {
        let pp = params.validated()?;
        if !(kappa > 0.0 && kappa.is_finite()) {
            return invalid("kappa must be positive");
        }
        if points < 16 {
            return invalid("need at least 16 grid points");
        }
        let t = log_grid(range.0, range.1, points)?;
        let n = pp.dim();
        let p = pp.p;
        let h = (range.1.ln() - range.0.ln()) / (points - 1) as f64;
        let mut weights: Vec<f64> = t.iter().map(|&ti| n * kappa * ti.powf(n) * h).collect();
        weights[0] *= 0.5;
        weights[points - 1] *= 0.5;
        let cell_weights = t
            .windows(2)
            .map(|w| n * kappa * ((w[0] * w[1]).sqrt()).powf(n - p) * h.powf(1.0 - p))
            .collect();
        let mut s = QuotientSetup { params: pp, kappa, range, t, h, weights, cell_weights, self_test_error: 0.0 };
        s.self_test_error = s.quadrature_self_test();
        if !(s.self_test_error <= SELF_TEST_TOL) {
            return Err(Error::InternalConsistency(format!("quadrature self-test error {:e}", s.self_test_error)));
        }
        Ok(s)
    }

    pub fn default_for(params: &ProblemParams, kappa: f64) -> Result<QuotientSetup> {
        QuotientSetup::new(params, kappa, DEFAULT_RANGE, DEFAULT_POINTS)
    }

    fn quadrature_self_test(&self) -> f64 {
        let n = self.params.dim();
        let nk = n * self.kappa;
        let approx: f64 = self.t.iter().zip(&self.weights).map(|(t, w)| w / nk * t.powf(-n + 0.5)).sum();
        let (a, b) = self.range;
        let exact = 2.0 * (b.sqrt() - a.sqrt());
        (approx / exact - 1.0).abs()
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuotientParts {
    pub numerator: f64,
    pub denominator: f64,
    pub quotient: f64,
    /// Gradient plus Hardy parts taken with absolute values, over the same
    /// denominator power.
    pub term_scale: f64,
}

fn check_len(setup: &QuotientSetup, v: &[f64]) -> Result<()> {
    if v.len() != setup.len() {
        return invalid(format!("{} values for a {}-point grid", v.len(), setup.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return invalid("profile values must be finite");
    }
    Ok(())
}

pub fn quotient_parts(setup: &QuotientSetup, v: &[f64]) -> Result<QuotientParts> {
    check_len(setup, v)?;
    let pp = &setup.params;
    let (p, ps) = (pp.p, pp.p_star());
    let mut grad = 0.0;
    for (j, w) in setup.cell_weights.iter().enumerate() {
        grad += w * (v[j + 1] - v[j]).abs().powf(p);
    }
    let mut pot = 0.0;
    let mut den = 0.0;
    for i in 0..v.len() {
        let a = v[i].abs();
        pot += setup.weights[i] * a.powf(p) * setup.t[i].powf(-p);
        den += setup.weights[i] * a.powf(ps);
    }
    if !(den > 0.0) {
        return invalid("zero profile");
    }
    let numerator = grad - pp.gamma * pot;
    let quotient = numerator / den.powf(p / ps);
    if !quotient.is_finite() {
        return invalid("quotient is not finite on the grid");
    }
    let term_scale = (grad + pp.gamma * pot) / den.powf(p / ps);
    Ok(QuotientParts { numerator, denominator: den, quotient, term_scale })
}

pub fn quotient_values(setup: &QuotientSetup, v: &[f64]) -> Result<f64> {
    Ok(quotient_parts(setup, v)?.quotient)
}

/// Quotient of a profile whose grid matches the setup's.
pub fn rayleigh_quotient(setup: &QuotientSetup, profile: &RadialProfile) -> Result<f64> {
    if profile.len() != setup.len() || profile.t().iter().zip(&setup.t).any(|(a, b)| (a - b).abs() > 1e-12 * b) {
        return invalid("profile grid does not match the quotient setup");
    }
    quotient_values(setup, profile.v())
}

/// Exact gradient of the discrete quotient with respect to the nodal values.
pub fn quotient_gradient(setup: &QuotientSetup, v: &[f64]) -> Result<Vec<f64>> {
    let parts = quotient_parts(setup, v)?;
    let pp = &setup.params;
    let (p, ps) = (pp.p, pp.p_star());
    let n = v.len();
    let mut dl = vec![0.0; n];
    for (j, w) in setup.cell_weights.iter().enumerate() {
        let d = v[j + 1] - v[j];
        let f = w * p * d.abs().powf(p - 1.0) * d.signum();
        dl[j + 1] += f;
        dl[j] -= f;
    }
    let dpow = parts.denominator.powf(p / ps);
    let c = (p / ps) * parts.numerator / (dpow * parts.denominator);
    Ok((0..n)
        .map(|i| {
            let a = v[i].abs();
            let s = v[i].signum();
            let wl = dl[i] - pp.gamma * setup.weights[i] * p * a.powf(p - 1.0) * s * setup.t[i].powf(-p);
            let wd = setup.weights[i] * ps * a.powf(ps - 1.0) * s;
            wl / dpow - c * wd
        })
        .collect())
}

/// Symmetric tridiagonal matrix on the interior nodes.
struct Tri {
    lo: Vec<f64>,
    di: Vec<f64>,
    up: Vec<f64>,
}

impl Tri {
    /// Thomas algorithm; `None` unless every pivot is positive.
    fn solve_spd(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        let n = rhs.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut x = vec![0.0; n];
        for i in 1..n - 1 {
            let l = if i > 1 { self.lo[i] } else { 0.0 };
            let den = self.di[i] - l * c[i - 1];
            if !(den > 0.0) {
                return None;
            }
            c[i] = if i < n - 2 { self.up[i] / den } else { 0.0 };
            d[i] = (rhs[i] - l * d[i - 1]) / den;
        }
        for i in (1..n - 1).rev() {
            x[i] = d[i] - if i < n - 2 { c[i] * x[i + 1] } else { 0.0 };
        }
        Some(x)
    }

    fn form(&self, x: &[f64]) -> f64 {
        let n = x.len();
        (1..n - 1).map(|i| x[i] * (self.di[i] * x[i] + self.lo[i] * x[i - 1] + self.up[i] * x[i + 1])).sum()
    }
}

/// Variable-coefficient Dirichlet form `Σ_j c_j |Δ_j|^{p-2} (Δ_j u)²`
/// (`|Δ_j|` floored at `1e-8 max|v|`), i.e. the principal part of the
/// Hessian of the numerator divided by `p(p-1)`.
fn dirichlet_form(setup: &QuotientSetup, v: &[f64]) -> Tri {
    let p = setup.params.p;
    let n = v.len();
    let floor = 1e-8 * v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let cw: Vec<f64> = setup
        .cell_weights
        .iter()
        .enumerate()
        .map(|(j, w)| w * (v[j + 1] - v[j]).abs().max(floor).powf(p - 2.0))
        .collect();
    let mut t = Tri { lo: vec![0.0; n], di: vec![0.0; n], up: vec![0.0; n] };
    for i in 1..n - 1 {
        t.di[i] = cw[i - 1] + cw[i];
        t.lo[i] = -cw[i - 1];
        t.up[i] = -cw[i];
    }
    t
}

/// Descent metric `A - γP - θQ(p*-1)/(p-1)·M`: the Dirichlet form minus the
/// Hardy and (a fraction θ of) the critical-mass parts of the Hessian of a
/// normalized quotient. Positive definite for θ < 1 up to the near-zero
/// dilation mode; θ is halved until the factorization succeeds.
fn descent_metric(setup: &QuotientSetup, v: &[f64], q: f64, g: &[f64]) -> (Vec<f64>, f64) {
    let pp = &setup.params;
    let (p, ps) = (pp.p, pp.p_star());
    let n = v.len();
    let floor = 1e-8 * v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let base = dirichlet_form(setup, v);
    let mut theta = 0.9;
    let mut gamma = pp.gamma;
    loop {
        let mut b = Tri { lo: base.lo.clone(), di: base.di.clone(), up: base.up.clone() };
        for i in 1..n - 1 {
            let a = v[i].abs().max(floor);
            let hardy = gamma * setup.weights[i] * setup.t[i].powf(-p) * a.powf(p - 2.0);
            let mass = theta * q * (ps - 1.0) / (p - 1.0) * setup.weights[i] * a.powf(ps - 2.0);
            b.di[i] -= hardy + mass;
        }
        if let Some(x) = b.solve_spd(g) {
            return (x, theta);
        }
        if theta > 1e-3 {
            theta *= 0.5;
        } else if gamma > 0.0 {
            theta = 0.0;
            gamma = 0.0;
        } else {
            return (base.solve_spd(g).unwrap_or_else(|| g.to_vec()), 0.0);
        }
    }
}

/// Scale-free size of the gradient in the Dirichlet form `A(v)`:
/// `sqrt(gᵀA⁻¹g · vᵀA v) / Q`. Invariant under `v → λv`.
pub fn relative_grad_norm(setup: &QuotientSetup, v: &[f64], g: &[f64], q: f64) -> f64 {
    let a = dirichlet_form(setup, v);
    let gag = a.solve_spd(g).map(|x| sampling::dot(g, &x)).unwrap_or(f64::INFINITY);
    (gag.max(0.0) * a.form(v)).sqrt() / q.abs().max(1e-300)
}

/// Rescale so that the discrete `∫|v|^{p*}` equals 1.
pub fn normalize(setup: &QuotientSetup, v: &mut [f64]) -> Result<()> {
    let den = quotient_parts(setup, v)?.denominator;
    let s = den.powf(-1.0 / setup.params.p_star());
    v.iter_mut().for_each(|x| *x *= s);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// `(1 + t^{p/(p-1)})^{-(N-p)/p}`.
    Talenti,
    /// `t^{-μ1}` for `t < 1`, `t^{-μ2}` for `t ≥ 1`.
    PowerTruncated,
    Custom(Vec<f64>),
}

pub fn talenti(params: &ProblemParams, t: f64) -> f64 {
    let p = params.p;
    (1.0 + t.powf(p / (p - 1.0))).powf(-(params.dim() - p) / p)
}

fn initial_values(setup: &QuotientSetup, init: &Init) -> Result<Vec<f64>> {
    let n = setup.len();
    let mut v: Vec<f64> = match init {
        Init::Talenti => setup.t.iter().map(|&t| talenti(&setup.params, t)).collect(),
        Init::PowerTruncated => {
            let e = solve_exponents(&setup.params)?;
            setup.t.iter().map(|&t| if t < 1.0 { t.powf(-e.mu1) } else { t.powf(-e.mu2) }).collect()
        }
        Init::Custom(v) => {
            check_len(setup, v)?;
            v.clone()
        }
    };
    if v[1..n - 1].iter().any(|&x| !(x > 0.0)) {
        return invalid("initial profile must be positive in the interior");
    }
    v[0] = 0.0;
    v[n - 1] = 0.0;
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub grad_tol: f64,
    pub max_iters: usize,
    pub armijo: f64,
    /// Interior values may shrink by at most this factor per step.
    pub clip: f64,
    pub check_every: usize,
    pub seed: u64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions { grad_tol: 1e-8, max_iters: 100_000, armijo: 1e-4, clip: 0.1, check_every: 100, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    MaxIters,
    /// No step of any length decreased the quotient.
    LineSearch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizationResult {
    pub s_estimate: f64,
    pub initial_quotient: f64,
    pub profile: RadialProfile,
    pub iterations: usize,
    pub energy_history: Vec<f64>,
    pub grad_norm: f64,
    pub termination: Termination,
    /// Largest relative mismatch of the spot-checked directional derivatives.
    pub gradient_check_max: f64,
    pub range: (f64, f64),
}

impl MinimizationResult {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

/// Random smooth relative perturbation `d_i = v_i Σ_k a_k sin(kπy_i)`,
/// `y = (x - x_0)/(x_n - x_0)`, `k ≤ 8`, `a_k ∈ [-1, 1]`.
pub fn random_direction(v: &[f64], rng: &mut sampling::SeededRng) -> Vec<f64> {
    use rand::Rng;
    let n = v.len();
    let a: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    (0..n)
        .map(|i| {
            let y = i as f64 / (n - 1) as f64;
            let m: f64 = a.iter().enumerate().map(|(k, ak)| ak * ((k + 1) as f64 * std::f64::consts::PI * y).sin()).sum();
            v[i] * m
        })
        .collect()
}

/// Relative mismatch between the analytic directional derivative along a
/// random smooth direction and its central difference, relative to
/// `max(|∂_d Q|, 1e-3 Q)` (at a critical point `∂_d Q` itself vanishes).
pub fn gradient_fd_error(setup: &QuotientSetup, v: &[f64], g: &[f64], rng: &mut sampling::SeededRng) -> Result<f64> {
    let d = random_direction(v, rng);
    let eps = 1e-4;
    let at = |s: f64| -> Result<f64> {
        let w: Vec<f64> = v.iter().zip(&d).map(|(a, b)| a + s * eps * b).collect();
        quotient_values(setup, &w)
    };
    // fourth-order central difference
    let fd = (8.0 * (at(1.0)? - at(-1.0)?) - (at(2.0)? - at(-2.0)?)) / (12.0 * eps);
    let an = sampling::dot(g, &d);
    let scale = quotient_parts(setup, v)?.term_scale;
    Ok((fd - an).abs() / an.abs().max(1e-3 * scale).max(1e-300))
}

/// Normalized gradient descent on the discrete quotient, preconditioned by the
/// weighted Dirichlet form `A(v)` (a Sobolev gradient), with Armijo
/// backtracking, step clipping for positivity and projection onto
/// `∫|v|^{p*} = 1` after every step.
pub fn minimize_quotient(setup: &QuotientSetup, init: &Init, opts: MinimizeOptions) -> Result<MinimizationResult> {
    let mut v = initial_values(setup, init)?;
    normalize(setup, &mut v)?;
    let n = v.len();
    let mut q = quotient_values(setup, &v)?;
    let initial_quotient = q;
    let mut history = vec![q];
    let mut rng = sampling::rng(opts.seed);
    let mut lambda: f64 = 1.0;
    let mut check_max: f64 = 0.0;
    let mut termination = Termination::MaxIters;
    let mut grad_norm;
    let mut iterations = 0;
    let interior_gradient = |v: &[f64]| -> Result<Vec<f64>> {
        let mut g = quotient_gradient(setup, v)?;
        g[0] = 0.0;
        g[n - 1] = 0.0;
        Ok(g)
    };
    let mut g = interior_gradient(&v)?;
    grad_norm = relative_grad_norm(setup, &v, &g, q);
    for it in 0..=opts.max_iters {
        if opts.check_every > 0 && it % opts.check_every == 0 {
            check_max = check_max.max(gradient_fd_error(setup, &v, &g, &mut rng)?);
        }
        iterations = it;
        if grad_norm <= opts.grad_tol {
            termination = Termination::Converged;
            break;
        }
        if it == opts.max_iters {
            break;
        }
        let (pg, _) = descent_metric(setup, &v, q, &g);
        let gbg = sampling::dot(&g, &pg);
        let rounding = 0.1 * ENERGY_SLACK * q.abs();
        let mut accepted = None;
        let mut lam = (2.0 * lambda).min(1.0);
        for _ in 0..60 {
            let mut cand: Vec<f64> = v.iter().zip(&pg).map(|(a, b)| a - lam * b).collect();
            for i in 1..n - 1 {
                cand[i] = cand[i].max(opts.clip * v[i]);
            }
            if normalize(setup, &mut cand).is_ok() {
                if let Ok(qc) = quotient_values(setup, &cand) {
                    let want = opts.armijo * lam * gbg;
                    // below rounding the quotient cannot see the decrease; then
                    // require a smaller gradient and stay within the slack
                    let ok = if want > rounding {
                        qc <= q - want
                    } else {
                        qc <= q + rounding
                    };
                    if ok {
                        let gc = interior_gradient(&cand)?;
                        let nc = relative_grad_norm(setup, &cand, &gc, qc);
                        if want > rounding || nc < grad_norm {
                            accepted = Some((cand, qc, gc, nc));
                            break;
                        }
                    }
                }
            }
            lam *= 0.5;
        }
        match accepted {
            Some((c, qc, gc, nc)) => {
                v = c;
                q = qc;
                g = gc;
                grad_norm = nc;
                lambda = lam;
                history.push(q);
            }
            None => {
                termination = Termination::LineSearch;
                break;
            }
        }
    }
    let profile = RadialProfile::from_values_nonnegative(setup.t.clone(), v)?;
    Ok(MinimizationResult {
        s_estimate: q,
        initial_quotient,
        profile,
        iterations,
        energy_history: history,
        grad_norm,
        termination,
        gradient_check_max: check_max,
        range: setup.range,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SGammaRow {
    pub gamma: f64,
    #[serde(rename = "S")]
    pub s: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub inner_fit: Option<f64>,
    pub outer_fit: Option<f64>,
    pub termination: Termination,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SGammaCurve {
    pub rows: Vec<SGammaRow>,
    pub strictly_decreasing: bool,
    pub all_positive: bool,
}

/// Minimize at one `γ` and summarize the run as a table row. Failed or
/// unconverged runs are flagged rather than returned as errors.
pub fn s_gamma_row(
    params: &ProblemParams,
    kappa: f64,
    range: (f64, f64),
    points: usize,
    init: &Init,
    opts: MinimizeOptions,
) -> Result<(SGammaRow, Option<MinimizationResult>)> {
    let setup = QuotientSetup::new(params, kappa, range, points)?;
    Ok(match minimize_quotient(&setup, init, opts) {
        Ok(r) => {
            let audit = minimizer_decay_audit(&r, params, None).ok();
            let row = SGammaRow {
                gamma: params.gamma,
                s: r.s_estimate,
                iterations: r.iterations,
                grad_norm: r.grad_norm,
                inner_fit: audit.as_ref().map(|a| a.inner.exponent),
                outer_fit: audit.as_ref().map(|a| a.outer.exponent),
                termination: r.termination,
                flagged: !r.converged(),
            };
            (row, Some(r))
        }
        Err(_) => (
            SGammaRow {
                gamma: params.gamma,
                s: f64::NAN,
                iterations: 0,
                grad_norm: f64::NAN,
                inner_fit: None,
                outer_fit: None,
                termination: Termination::LineSearch,
                flagged: true,
            },
            None,
        ),
    })
}

impl SGammaCurve {
    /// Rows sorted by `γ`, with the monotonicity and sign verdicts.
    pub fn from_rows(mut rows: Vec<SGammaRow>) -> SGammaCurve {
        rows.sort_by(|a, b| a.gamma.total_cmp(&b.gamma));
        let strictly_decreasing = rows.windows(2).all(|w| w[1].s < w[0].s);
        let all_positive = rows.iter().all(|r| r.s > 0.0);
        SGammaCurve { rows, strictly_decreasing, all_positive }
    }
}

/// One minimization per `γ` (sorted ascending), each started from the
/// previous minimizer; the first starts from `init`.
#[allow(clippy::too_many_arguments)]
pub fn s_gamma_curve(
    n: usize,
    p: f64,
    kappa: f64,
    gammas: &[f64],
    range: (f64, f64),
    points: usize,
    init: &Init,
    opts: MinimizeOptions,
) -> Result<SGammaCurve> {
    let mut gs = gammas.to_vec();
    gs.sort_by(f64::total_cmp);
    let mut rows = vec![];
    let mut warm: Option<Vec<f64>> = None;
    for &g in &gs {
        let pp = ProblemParams::new(n, p, g)?;
        let start = match &warm {
            Some(w) => Init::Custom(w.clone()),
            None => init.clone(),
        };
        let (row, res) = s_gamma_row(&pp, kappa, range, points, &start, opts)?;
        if let Some(r) = res {
            warm = Some(r.profile.v().to_vec());
        }
        rows.push(row);
    }
    Ok(SGammaCurve::from_rows(rows))
}

pub fn write_s_gamma_csv<W: std::io::Write>(rows: &[SGammaRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["gamma", "S", "iterations", "grad_norm", "inner_fit", "outer_fit"])?;
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.12e}")).unwrap_or_default();
    for r in rows {
        wr.write_record([
            format!("{:.12e}", r.gamma),
            format!("{:.12e}", r.s),
            r.iterations.to_string(),
            format!("{:.6e}", r.grad_norm),
            opt(r.inner_fit),
            opt(r.outer_fit),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayAudit {
    pub inner: DecayFit,
    pub outer: DecayFit,
    pub inner_gradient: DecayFit,
    pub outer_gradient: DecayFit,
    /// `(μ1, μ2, μ1 + 1, μ2 + 1)`.
    pub targets: (f64, f64, f64, f64),
    /// Relative errors in the same order (absolute where the target is 0).
    pub errors: (f64, f64, f64, f64),
    pub tolerance: f64,
    pub passed: bool,
}

/// One-decade fit windows centred at `√t_min` and `√t_max`. The truncation
/// perturbs the local exponent by `O(t_min/t)` and the reaction term by
/// `O(t)` (relative to the profile scale 1), so the centre balances the two.
pub fn audit_windows(range: (f64, f64)) -> ((f64, f64), (f64, f64)) {
    let (a, b) = range;
    let (ci, co) = (a.sqrt(), b.sqrt());
    let r = 10f64.sqrt();
    ((ci / r, ci * r), (co / r, co * r))
}

fn rel_err(fit: f64, target: f64) -> f64 {
    if target.abs() < 1e-12 {
        fit.abs()
    } else {
        (fit - target).abs() / target.abs()
    }
}

/// Fit the minimizer's inner and outer decay (values and `|v'|`) and compare
/// with `μ1`, `μ2`, `μ1 + 1`, `μ2 + 1`. At `μ1 = 0` the inner gradient
/// target is not meaningful (`v'` vanishes faster), so it is reported but
/// not judged.
pub fn minimizer_decay_audit(
    result: &MinimizationResult,
    params: &ProblemParams,
    windows: Option<((f64, f64), (f64, f64))>,
) -> Result<DecayAudit> {
    if !result.converged() {
        return invalid("decay audit needs a converged minimizer");
    }
    audit_profile(&result.profile, params, windows.unwrap_or_else(|| audit_windows(result.range)))
}

/// The audit on an arbitrary profile (e.g. an exact power).
pub fn audit_profile(
    profile: &RadialProfile,
    params: &ProblemParams,
    (wi, wo): ((f64, f64), (f64, f64)),
) -> Result<DecayAudit> {
    let e = solve_exponents(params)?;
    let inner = decay_fit(profile, wi)?;
    let outer = decay_fit(profile, wo)?;
    let inner_gradient = gradient_decay_fit(profile, wi)?;
    let outer_gradient = gradient_decay_fit(profile, wo)?;
    let targets = (e.mu1, e.mu2, e.mu1 + 1.0, e.mu2 + 1.0);
    let errors = (
        rel_err(inner.exponent, targets.0),
        rel_err(outer.exponent, targets.1),
        rel_err(inner_gradient.exponent, targets.2),
        rel_err(outer_gradient.exponent, targets.3),
    );
    let judge_inner_grad = e.mu1 > 0.0;
    let passed = errors.0 <= DECAY_TOL
        && errors.1 <= DECAY_TOL
        && (!judge_inner_grad || errors.2 <= DECAY_TOL)
        && errors.3 <= DECAY_TOL;
    Ok(DecayAudit { inner, outer, inner_gradient, outer_gradient, targets, errors, tolerance: DECAY_TOL, passed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationSensitivity {
    pub range: (f64, f64),
    pub wide_range: (f64, f64),
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "S_wide")]
    pub s_wide: f64,
    pub relative_change: f64,
    pub audit: Option<DecayAudit>,
    pub wide_audit: Option<DecayAudit>,
}

/// Rerun a minimization on the wider range with the same grid spacing and
/// report how `S` and the decay fits move.
pub fn truncation_sensitivity(
    base: &MinimizationResult,
    setup: &QuotientSetup,
    init: &Init,
    opts: MinimizeOptions,
    wide_range: (f64, f64),
) -> Result<TruncationSensitivity> {
    let decades = (wide_range.1 / wide_range.0).ln() / setup.h;
    let points = decades.round() as usize + 1;
    let wide = QuotientSetup::new(&setup.params, setup.kappa, wide_range, points)?;
    let init = match init {
        Init::Custom(_) => Init::Talenti,
        other => other.clone(),
    };
    let r = minimize_quotient(&wide, &init, opts)?;
    Ok(TruncationSensitivity {
        range: setup.range,
        wide_range,
        s: base.s_estimate,
        s_wide: r.s_estimate,
        relative_change: (r.s_estimate - base.s_estimate).abs() / base.s_estimate.abs(),
        audit: minimizer_decay_audit(base, &setup.params, None).ok(),
        wide_audit: minimizer_decay_audit(&r, &setup.params, None).ok(),
    })
}
