//! Sampled checks of the gauge inequalities, the power-split lemma, the Hardy
//! quotient and the pointwise logarithmic estimate.
//!
//! Each check writes an inequality as `lhs ≥ rhs` and records the relative
//! margin `(lhs - rhs) / scale`. The scale is `max(|lhs|, |rhs|, Σ|terms|,
//! 1e-300)`, where the term sum covers the cancelling pieces of either side,
//! so that exact identities (`p = 2` in the Euclidean case) are not flagged
//! for rounding. A sample violates when its margin is below `-SLACK`.
//!
//! Samples are split into `SHARDS` fixed streams derived from the seed, so a
//! report does not depend on the number of threads.

use std::thread;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gauge::Gauge;
use crate::radial::RadialProfile;
use crate::sampling::{self, dot, heavy_mixture, norm2, sub, unit_direction, SeededRng};
use crate::spectrum::ProblemParams;

pub const SLACK: f64 = 1e-12;
pub const SHARDS: u64 = 8;
/// Relative safety margin applied to oracle extrema before freezing.
pub const ORACLE_MARGIN: f64 = 0.01;
/// Largest share of either Hardy integral allowed in the outer 2% of the grid.
pub const HARDY_TAIL_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantSource {
    ClosedForm,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub inequality: String,
    pub gauge: Option<String>,
    pub p: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta: Option<f64>,
    pub samples: usize,
    pub seed: u64,
    pub violations: usize,
    /// Smallest relative margin seen; negative values are violations.
    pub worst_margin: f64,
    pub constant: f64,
    pub constant_source: ConstantSource,
    pub slack: f64,
    pub passed: bool,
}

struct Sides {
    lhs: f64,
    rhs: f64,
    terms: f64,
}

impl Sides {
    fn margin(&self) -> f64 {
        let scale = self.lhs.abs().max(self.rhs.abs()).max(self.terms).max(1e-300);
        (self.lhs - self.rhs) / scale
    }
}

#[derive(Clone, Copy)]
struct Tally {
    violations: usize,
    worst: f64,
}

fn run_sharded<F>(samples: usize, seed: u64, f: F) -> Result<Tally>
where
    F: Fn(&mut SeededRng) -> Result<Option<Sides>> + Sync,
{
    if samples == 0 {
        return invalid("samples must be >= 1");
    }
    let base = samples / SHARDS as usize;
    let rem = samples % SHARDS as usize;
    let f = &f;
    let shards: Vec<Result<Tally>> = thread::scope(|s| {
        let handles: Vec<_> = (0..SHARDS)
            .map(|k| {
                let count = base + usize::from((k as usize) < rem);
                s.spawn(move || {
                    let mut rng = sampling::stream_rng(seed, k);
                    let mut t = Tally { violations: 0, worst: f64::INFINITY };
                    for _ in 0..count {
                        if let Some(sides) = f(&mut rng)? {
                            let m = sides.margin();
                            if m.is_nan() {
                                return Err(Error::InternalConsistency("NaN inequality margin".into()));
                            }
                            if m < -SLACK {
                                t.violations += 1;
                            }
                            t.worst = t.worst.min(m);
                        }
                    }
                    Ok(t)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("shard panicked")).collect()
    });
    let mut total = Tally { violations: 0, worst: f64::INFINITY };
    for t in shards {
        let t = t?;
        total.violations += t.violations;
        total.worst = total.worst.min(t.worst);
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn report(
    inequality: &str,
    gauge: Option<&Gauge>,
    p: f64,
    delta: Option<f64>,
    samples: usize,
    seed: u64,
    tally: Tally,
    constant: f64,
    source: ConstantSource,
) -> InequalityReport {
    InequalityReport {
        inequality: inequality.to_string(),
        gauge: gauge.map(|g| g.label()),
        p,
        delta,
        samples,
        seed,
        violations: tally.violations,
        worst_margin: tally.worst,
        constant,
        constant_source: source,
        slack: SLACK,
        passed: tally.violations == 0,
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidParams(format!("need p > 1, got {p}")));
    }
    Ok(())
}

fn hp(g: &Gauge, xi: &[f64], p: f64) -> f64 {
    if xi.iter().all(|&x| x == 0.0) {
        0.0
    } else {
        g.h(xi).powf(p)
    }
}

fn flux(g: &Gauge, xi: &[f64], p: f64) -> Vec<f64> {
    if xi.iter().all(|&x| x == 0.0) {
        return vec![0.0; xi.len()];
    }
    let s = g.h(xi).powf(p - 1.0);
    g.grad(xi).into_iter().map(|x| s * x).collect()
}

/// `H^p(η) - H^p(η') - p⟨H^{p-1}(η')∇H(η'), η - η'⟩` and the sum of the
/// absolute values of its three terms.
fn bregman(g: &Gauge, eta: &[f64], etap: &[f64], p: f64) -> (f64, f64) {
    let a = hp(g, eta, p);
    let b = hp(g, etap, p);
    let c = p * dot(&flux(g, etap, p), &sub(eta, etap));
    (a - b - c, a.abs() + b.abs() + c.abs())
}

/// Pair `(η, η')`: independent draws from the heavy-tailed mixture, or with
/// probability 1/4 a near pair `|η - η'| = 10^{-6..-1}|η'|`.
fn sample_pair(rng: &mut SeededRng, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let etap = heavy_mixture(rng, dim);
    let eta = if rng.random_range(0..4) == 0 {
        let r = 10f64.powf(rng.random_range(-6.0..-1.0)) * norm2(&etap);
        let d = unit_direction(rng, dim);
        etap.iter().zip(&d).map(|(x, y)| x + r * y).collect()
    } else {
        heavy_mixture(rng, dim)
    };
    (eta, etap)
}

/// `C̃_p = ((p-1)α2^{p-2}M² + α2^{p-1}M̄)·max{1, 4^{2-p}, 2·4^{2-p}}` from the
/// gauge certificate.
pub fn monotonicity_constant(gauge: &Gauge, p: f64) -> f64 {
    let (a2, m, mb) = (gauge.alpha2(), gauge.m(), gauge.mbar());
    let f = 4f64.powf(2.0 - p);
    ((p - 1.0) * a2.powf(p - 2.0) * m * m + a2.powf(p - 1.0) * mb) * 1f64.max(f).max(2.0 * f)
}

/// `|H^{p-1}(η)∇H(η) - H^{p-1}(η')∇H(η')| ≤ C̃_p(|η|+|η'|)^{p-2}|η-η'|`.
pub fn check_vector_monotonicity(gauge: &Gauge, p: f64, samples: usize, seed: u64) -> Result<InequalityReport> {
    check_p(p)?;
    let c = monotonicity_constant(gauge, p);
    if !c.is_finite() {
        return Err(Error::InvalidParams(format!("monotonicity constant is not finite for {}", gauge.label())));
    }
    let dim = gauge.dim();
    let tally = run_sharded(samples, seed, |rng| {
        let (eta, etap) = sample_pair(rng, dim);
        let s = norm2(&eta) + norm2(&etap);
        if s == 0.0 {
            return Ok(None);
        }
        let fa = flux(gauge, &eta, p);
        let fb = flux(gauge, &etap, p);
        Ok(Some(Sides {
            lhs: c * s.powf(p - 2.0) * norm2(&sub(&eta, &etap)),
            rhs: norm2(&sub(&fa, &fb)),
            terms: norm2(&fa) + norm2(&fb),
        }))
    })?;
    Ok(report("vector-monotonicity", Some(gauge), p, None, samples, seed, tally, c, ConstantSource::ClosedForm))
}

/// `Ĉ(p) = 1/(2^{p-1} - 1)`.
pub fn convexity_constant_p_ge_2(p: f64) -> f64 {
    1.0 / (2f64.powf(p - 1.0) - 1.0)
}

/// `H^p(η) ≥ H^p(η') + pH^{p-1}(η')⟨∇H(η'), η-η'⟩ + Ĉ(p)H^p(η-η')` with
/// `Ĉ(p) = 1/(2^{p-1}-1)`.
pub fn check_convexity_p_ge_2(gauge: &Gauge, p: f64, samples: usize, seed: u64) -> Result<InequalityReport> {
    if !(p >= 2.0) || !p.is_finite() {
        return Err(Error::InvalidParams(format!("need p >= 2, got {p}")));
    }
    let c = convexity_constant_p_ge_2(p);
    let dim = gauge.dim();
    let tally = run_sharded(samples, seed, |rng| {
        let (eta, etap) = sample_pair(rng, dim);
        Ok(Some(convexity_sides(gauge, p, &eta, &etap, c, false)))
    })?;
    Ok(report("convexity-p-ge-2", Some(gauge), p, None, samples, seed, tally, c, ConstantSource::ClosedForm))
}

fn convexity_sides(g: &Gauge, p: f64, eta: &[f64], etap: &[f64], c: f64, singular: bool) -> Sides {
    let a = hp(g, eta, p);
    let b = hp(g, etap, p);
    let lin = p * dot(&flux(g, etap, p), &sub(eta, etap));
    let d = sub(eta, etap);
    let last = if singular {
        let s = g_or_zero(g, eta) + g_or_zero(g, etap);
        let hd = g_or_zero(g, &d);
        if hd == 0.0 {
            0.0
        } else {
            c * s.powf(p - 2.0) * hd * hd
        }
    } else {
        c * hp(g, &d, p)
    };
    Sides { lhs: a, rhs: b + lin + last, terms: a.abs() + b.abs() + lin.abs() + last.abs() }
}

fn g_or_zero(g: &Gauge, xi: &[f64]) -> f64 {
    if xi.iter().all(|&x| x == 0.0) {
        0.0
    } else {
        g.h(xi)
    }
}

/// `(H^p(η) - H^p(η') - pH^{p-1}(η')⟨∇H(η'), η-η'⟩) / ([H(η)+H(η')]^{p-2}H²(η-η'))`,
/// or `None` when `η` and `η'` are too close for the quotient to be resolved.
pub fn convexity_ratio(gauge: &Gauge, p: f64, eta: &[f64], etap: &[f64]) -> Option<f64> {
    let d = sub(eta, etap);
    let hd = g_or_zero(gauge, &d);
    let s = g_or_zero(gauge, eta) + g_or_zero(gauge, etap);
    if s == 0.0 || hd <= 1e-6 * s {
        return None;
    }
    let (num, _) = bregman(gauge, eta, etap, p);
    let r = num / (s.powf(p - 2.0) * hd * hd);
    r.is_finite().then_some(r)
}

/// Resolution of a brute-force constant search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleGrid {
    pub samples: usize,
    pub polish_starts: usize,
    pub polish_steps: usize,
    pub seed: u64,
}

impl OracleGrid {
    pub fn convexity_default(seed: u64) -> OracleGrid {
        OracleGrid { samples: 20_000, polish_starts: 8, polish_steps: 1500, seed }
    }

    pub fn power_split_default() -> OracleGrid {
        OracleGrid { samples: 2000, polish_starts: 1, polish_steps: 200, seed: 0 }
    }

    /// The same search with `factor` times more samples and polish steps.
    pub fn refined(&self, factor: usize) -> OracleGrid {
        OracleGrid {
            samples: self.samples * factor,
            polish_starts: self.polish_starts,
            polish_steps: self.polish_steps * factor,
            seed: self.seed,
        }
    }
}

/// A constant found by an oracle search and frozen with a safety margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConstant {
    pub inequality: String,
    pub p: f64,
    pub gauge: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta: Option<f64>,
    /// Raw infimum (or supremum) found by the search.
    pub extremum: f64,
    /// Frozen value used by the checks.
    pub constant: f64,
    pub margin: f64,
    pub oracle_grid: OracleGrid,
}

/// Relative change of the raw extremum between two oracle runs.
pub fn oracle_change(a: &OracleConstant, b: &OracleConstant) -> f64 {
    (a.extremum - b.extremum).abs() / a.extremum.abs().max(b.extremum.abs())
}

/// One constants-manifest record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub inequality: String,
    pub p: f64,
    pub gauge: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta: Option<f64>,
    pub constant: f64,
    pub extremum: f64,
    pub oracle_grid: OracleGrid,
    pub refined_extremum: f64,
    pub refinement_change: f64,
    pub date: String,
}

impl ManifestEntry {
    pub fn new(c: &OracleConstant, refined: &OracleConstant, date: &str) -> ManifestEntry {
        ManifestEntry {
            inequality: c.inequality.clone(),
            p: c.p,
            gauge: c.gauge.clone(),
            delta: c.delta,
            constant: c.constant,
            extremum: c.extremum,
            oracle_grid: c.oracle_grid,
            refined_extremum: refined.extremum,
            refinement_change: oracle_change(c, refined),
            date: date.to_string(),
        }
    }
}

/// Infimum search for `C_p` in the `1 < p < 2` convexity inequality.
///
/// Candidates are the degenerate pairs `η = 0`, `η = sη'` on a grid of `s`, and
/// random pairs with `|η'| = 1`, `|η| = 10^{-3..3}`. The smallest ratios are
/// polished by a shrinking random local search. The frozen constant is the
/// infimum deflated by `ORACLE_MARGIN`.
pub fn oracle_convexity_constant(gauge: &Gauge, p: f64, grid: OracleGrid) -> Result<OracleConstant> {
    if !(p > 1.0 && p < 2.0) {
        return Err(Error::InvalidParams(format!("need 1 < p < 2, got {p}")));
    }
    let dim = gauge.dim();
    let ratio = |eta: &[f64], etap: &[f64]| -> Result<Option<f64>> {
        match convexity_ratio(gauge, p, eta, etap) {
            Some(r) if r <= 0.0 => Err(Error::InequalityStructure(format!(
                "convexity ratio {r:e} <= 0 at eta={eta:?}, eta'={etap:?}"
            ))),
            r => Ok(r),
        }
    };
    let mut cands: Vec<(f64, Vec<f64>, Vec<f64>)> = vec![];
    let mut rng = sampling::stream_rng(grid.seed, 0);
    let mut e1 = vec![0.0; dim];
    e1[0] = 1.0;
    let mut bases = vec![e1];
    for _ in 0..3 {
        bases.push(unit_direction(&mut rng, dim));
    }
    for b in &bases {
        let zero = vec![0.0; dim];
        if let Some(r) = ratio(&zero, b)? {
            cands.push((r, zero, b.clone()));
        }
        for k in 0..64 {
            let s = -10.0 + 20.0 * k as f64 / 63.0;
            let eta: Vec<f64> = b.iter().map(|x| s * x).collect();
            if let Some(r) = ratio(&eta, b)? {
                cands.push((r, eta, b.clone()));
            }
        }
    }
    for _ in 0..grid.samples {
        let etap = unit_direction(&mut rng, dim);
        let rho = 10f64.powf(rng.random_range(-3.0..3.0));
        let eta: Vec<f64> = unit_direction(&mut rng, dim).into_iter().map(|x| rho * x).collect();
        if let Some(r) = ratio(&eta, &etap)? {
            cands.push((r, eta, etap));
        }
    }
    if cands.is_empty() {
        return Err(Error::InternalConsistency("oracle found no resolvable pairs".into()));
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = cands[0].0;
    for (j, (r0, eta0, etap0)) in cands.iter().take(grid.polish_starts).enumerate() {
        let mut rng = sampling::stream_rng(grid.seed, 1 + j as u64);
        let (mut r, mut eta, mut etap) = (*r0, eta0.clone(), etap0.clone());
        let mut sigma = 0.1;
        let mut fails = 0;
        for _ in 0..grid.polish_steps {
            let np = sampling::normal_vec(&mut rng, dim);
            let ne = sampling::normal_vec(&mut rng, dim);
            let cand_p: Vec<f64> = etap.iter().zip(&np).map(|(x, y)| x + sigma * y).collect();
            let n = norm2(&cand_p);
            let cand_p: Vec<f64> = cand_p.into_iter().map(|x| x / n).collect();
            let sc = norm2(&eta).max(1e-3);
            let cand_e: Vec<f64> = eta.iter().zip(&ne).map(|(x, y)| x + sigma * sc * y).collect();
            match ratio(&cand_e, &cand_p)? {
                Some(rc) if rc < r => {
                    r = rc;
                    eta = cand_e;
                    etap = cand_p;
                    fails = 0;
                }
                _ => {
                    fails += 1;
                    if fails >= 20 {
                        sigma *= 0.5;
                        fails = 0;
                        if sigma < 1e-9 {
                            break;
                        }
                    }
                }
            }
        }
        best = best.min(r);
    }
    Ok(OracleConstant {
        inequality: "convexity-p-lt-2".into(),
        p,
        gauge: Some(gauge.label()),
        delta: None,
        extremum: best,
        constant: best * (1.0 - ORACLE_MARGIN),
        margin: ORACLE_MARGIN,
        oracle_grid: grid,
    })
}

/// `H^p(η) ≥ H^p(η') + pH^{p-1}(η')⟨∇H(η'), η-η'⟩ + C_p[H(η)+H(η')]^{p-2}H²(η-η')`
/// for `1 < p < 2`, with a frozen oracle constant, on fresh samples.
pub fn check_convexity_p_lt_2(
    gauge: &Gauge,
    p: f64,
    constant: &OracleConstant,
    samples: usize,
    seed: u64,
) -> Result<InequalityReport> {
    if !(p > 1.0 && p < 2.0) {
        return Err(Error::InvalidParams(format!("need 1 < p < 2, got {p}")));
    }
    if constant.p != p || constant.inequality != "convexity-p-lt-2" {
        return invalid("oracle constant belongs to a different inequality or p");
    }
    let c = constant.constant;
    let dim = gauge.dim();
    let tally = run_sharded(samples, seed, |rng| {
        let (eta, etap) = sample_pair(rng, dim);
        if norm2(&eta) + norm2(&etap) == 0.0 {
            return Ok(None);
        }
        Ok(Some(convexity_sides(gauge, p, &eta, &etap, c, true)))
    })?;
    Ok(report("convexity-p-lt-2", Some(gauge), p, None, samples, seed, tally, c, ConstantSource::Oracle))
}

fn power_split_k(p: f64, delta: f64) -> f64 {
    1.0 / (1.0 + 2f64.powf(p + 1.0) * delta)
}

/// `sup_{0 ≤ a < 1} (k - a^p)/(1-a)^p` with `k = 1/(1 + 2^{p+1}δ)`: the best
/// `C_δ` by homogeneity (`a + b = 1`). A uniform grid in `a` followed by a
/// golden-section refinement around the best node; frozen value inflated by
/// `ORACLE_MARGIN`.
pub fn oracle_power_split_constant(p: f64, delta: f64, grid: OracleGrid) -> Result<OracleConstant> {
    check_p(p)?;
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParams(format!("need delta > 0, got {delta}")));
    }
    if grid.samples < 3 {
        return invalid("power-split oracle needs at least 3 grid points");
    }
    let k = power_split_k(p, delta);
    let f = |a: f64| (k - a.powf(p)) / (1.0 - a).powf(p);
    let n = grid.samples;
    let (mut ib, mut fb) = (0, f(0.0));
    for i in 1..n {
        let v = f(i as f64 / n as f64);
        if v > fb {
            ib = i;
            fb = v;
        }
    }
    let mut lo = (ib as f64 - 1.0).max(0.0) / n as f64;
    let mut hi = (ib as f64 + 1.0) / n as f64;
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..grid.polish_steps {
        let x1 = hi - phi * (hi - lo);
        let x2 = lo + phi * (hi - lo);
        if f(x1) >= f(x2) {
            hi = x2;
        } else {
            lo = x1;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let sup = fb.max(f(0.5 * (lo + hi)));
    if !(sup > 0.0) || !sup.is_finite() {
        return Err(Error::InequalityStructure(format!("power-split supremum {sup}")));
    }
    Ok(OracleConstant {
        inequality: "power-split".into(),
        p,
        gauge: None,
        delta: Some(delta),
        extremum: sup,
        constant: sup * (1.0 + ORACLE_MARGIN),
        margin: ORACLE_MARGIN,
        oracle_grid: grid,
    })
}

/// `a^p ≥ (a+b)^p/(1 + 2^{p+1}δ) - C_δ b^p` on fresh `a, b ∈ [0, 10³]`; with
/// probability 1/4 one of them is shrunk by `10^{-6..0}` to probe the ends.
pub fn check_power_split(p: f64, delta: f64, constant: &OracleConstant, samples: usize, seed: u64) -> Result<InequalityReport> {
    check_p(p)?;
    if constant.inequality != "power-split" || constant.p != p || constant.delta != Some(delta) {
        return invalid("oracle constant belongs to a different inequality, p or delta");
    }
    let k = power_split_k(p, delta);
    let c = constant.constant;
    let tally = run_sharded(samples, seed, |rng| {
        let mut a = rng.random_range(0.0..1e3);
        let mut b = rng.random_range(0.0..1e3);
        match rng.random_range(0..8) {
            0 => a *= 10f64.powf(rng.random_range(-6.0..0.0)),
            1 => b *= 10f64.powf(rng.random_range(-6.0..0.0)),
            _ => {}
        }
        let l = a.powf(p);
        let r1 = k * (a + b).powf(p);
        let r2 = c * b.powf(p);
        Ok(Some(Sides { lhs: l, rhs: r1 - r2, terms: l + r1 + r2 }))
    })?;
    Ok(report("power-split", None, p, Some(delta), samples, seed, tally, c, ConstantSource::Oracle))
}

/// Both sides of the pointwise logarithmic estimate at one tuple. The left side
/// is `H^{p-1}(∇u)⟨∇H(∇u), ∇ψ1⟩ + H^{p-1}(∇v)⟨∇H(∇v), ∇ψ2⟩` with
/// `ψ1 = u - v^p u^{1-p}`, `ψ2 = v - u^p v^{1-p}`, in expanded form.
pub fn log_pointwise_sides(
    gauge: &Gauge,
    p: f64,
    c: f64,
    u: f64,
    v: f64,
    du: &[f64],
    dv: &[f64],
) -> Result<(f64, f64, f64)> {
    if !(u > 0.0) || !(v > 0.0) || !u.is_finite() || !v.is_finite() {
        return invalid(format!("u and v must be positive, got u={u}, v={v}"));
    }
    let hu = hp(gauge, du, p);
    let hv = hp(gauge, dv, p);
    let (ru, rv) = (v / u, u / v);
    let t = [
        hu,
        -p * ru.powf(p - 1.0) * dot(&flux(gauge, du, p), dv),
        (p - 1.0) * ru.powf(p) * hu,
        hv,
        -p * rv.powf(p - 1.0) * dot(&flux(gauge, dv, p), du),
        (p - 1.0) * rv.powf(p) * hv,
    ];
    let lhs: f64 = t.iter().sum();
    let terms: f64 = t.iter().map(|x| x.abs()).sum();
    let a: Vec<f64> = du.iter().map(|x| x / u).collect();
    let b: Vec<f64> = dv.iter().map(|x| x / v).collect();
    let d = sub(&a, &b);
    let w = u.powf(p) + v.powf(p);
    let rhs = if p >= 2.0 {
        c * w * hp(gauge, &d, p)
    } else {
        let hd = g_or_zero(gauge, &d);
        if hd == 0.0 {
            0.0
        } else {
            c * w * (g_or_zero(gauge, &a) + g_or_zero(gauge, &b)).powf(p - 2.0) * hd * hd
        }
    };
    Ok((lhs, rhs, terms))
}

/// Pointwise logarithmic estimate on random tuples `(u, v, ∇u, ∇v)`, with
/// `u, v ∈ 10^{[-2, 2]}` and mixture gradients; with probability 1/4 the log
/// gradients nearly agree. `c` is `Ĉ(p)` for `p ≥ 2` and a frozen convexity
/// oracle constant for `p < 2`.
pub fn check_log_pointwise(
    gauge: &Gauge,
    p: f64,
    c: f64,
    source: ConstantSource,
    samples: usize,
    seed: u64,
) -> Result<InequalityReport> {
    check_p(p)?;
    if !(c > 0.0) {
        return Err(Error::InvalidParams(format!("constant must be positive, got {c}")));
    }
    let dim = gauge.dim();
    let tally = run_sharded(samples, seed, |rng| {
        let u = 10f64.powf(rng.random_range(-2.0..2.0));
        let v = 10f64.powf(rng.random_range(-2.0..2.0));
        let du = heavy_mixture(rng, dim);
        let dv: Vec<f64> = if rng.random_range(0..4) == 0 {
            let r = 10f64.powf(rng.random_range(-6.0..-1.0)) * norm2(&du);
            let e = unit_direction(rng, dim);
            du.iter().zip(&e).map(|(x, y)| (x + r * y) * v / u).collect()
        } else {
            heavy_mixture(rng, dim)
        };
        if norm2(&du) + norm2(&dv) == 0.0 {
            return Ok(None);
        }
        let (lhs, rhs, terms) = log_pointwise_sides(gauge, p, c, u, v, &du, &dv)?;
        Ok(Some(Sides { lhs, rhs, terms }))
    })?;
    Ok(report("log-pointwise", Some(gauge), p, None, samples, seed, tally, c, source))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardyQuotient {
    pub quotient: f64,
    pub numerator: f64,
    pub denominator: f64,
    /// Largest share of either integral carried by the outer 2% of the grid.
    pub tail_fraction: f64,
}

/// `∫H^p(∇u) / ∫|u|^p/H°^p` for `u = v(H°(x))`, both integrals reduced to
/// `Nκ∫(·)t^{N-1}dt` (trapezoid in `ln t`). Profiles whose integrals are not
/// dominated by the interior of the grid are rejected.
pub fn hardy_quotient_detail(params: &ProblemParams, profile: &RadialProfile, kappa: f64) -> Result<HardyQuotient> {
    if !(kappa > 0.0) {
        return invalid(format!("kappa must be positive, got {kappa}"));
    }
    let (n, p) = (params.dim(), params.p);
    let t = profile.t();
    let f: Vec<f64> = t.iter().zip(profile.dv()).map(|(t, d)| d.abs().powf(p) * t.powf(n)).collect();
    let g: Vec<f64> = t.iter().zip(profile.v()).map(|(t, v)| v.abs().powf(p) * t.powf(n - p)).collect();
    if f.iter().chain(&g).any(|x| !x.is_finite()) {
        return invalid("Hardy integrand is not finite on the grid");
    }
    let len = t.len();
    let edge = (len / 50).max(2);
    let integrate = |y: &[f64], lo: usize, hi: usize| -> f64 {
        (lo..hi).map(|i| 0.5 * (y[i] + y[i + 1]) * (t[i + 1].ln() - t[i].ln())).sum()
    };
    let scale = n * kappa;
    let num = scale * integrate(&f, 0, len - 1);
    let den = scale * integrate(&g, 0, len - 1);
    if !(den > 0.0) {
        return invalid("zero profile");
    }
    let mut tail: f64 = 0.0;
    for (y, total) in [(&f, num), (&g, den)] {
        if total > 0.0 {
            let s = scale * (integrate(y, 0, edge) + integrate(y, len - 1 - edge, len - 1));
            tail = tail.max(s / total);
        }
    }
    if tail > HARDY_TAIL_FRACTION {
        return invalid(format!("divergent tail: outer grid carries {tail:.3e} of a Hardy integral"));
    }
    Ok(HardyQuotient { quotient: num / den, numerator: num, denominator: den, tail_fraction: tail })
}

pub fn hardy_quotient(params: &ProblemParams, profile: &RadialProfile, kappa: f64) -> Result<f64> {
    hardy_quotient_detail(params, profile, kappa).map(|h| h.quotient)
}

fn bump(y: f64) -> (f64, f64, f64) {
    if y.abs() >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let s = 1.0 - y * y;
    let b = (-1.0 / s).exp();
    let g = -2.0 * y / (s * s);
    let dg = -(2.0 + 6.0 * y * y) / (s * s * s);
    (b, b * g, b * (g * g + dg))
}

/// Random smooth compactly supported profile on `grid`: a sum of one to four
/// bumps `c·exp(-1/(1-y²))`, `y = (ln t - m)/w`, with `c ∈ [0.1, 10]`,
/// `m ∈ [-4, 4]`, `w ∈ [0.5, 3]`. Derivatives are analytic.
pub fn random_smooth_profile(grid: Vec<f64>, rng: &mut SeededRng) -> Result<RadialProfile> {
    let k = rng.random_range(1..=4);
    let bumps: Vec<(f64, f64, f64)> = (0..k)
        .map(|_| (rng.random_range(0.1..10.0), rng.random_range(-4.0..4.0), rng.random_range(0.5..3.0)))
        .collect();
    let eval = move |t: f64, order: usize| -> f64 {
        bumps
            .iter()
            .map(|&(c, m, w)| {
                let (b, db, d2b) = bump((t.ln() - m) / w);
                match order {
                    0 => c * b,
                    1 => c * db / (w * t),
                    _ => c * (d2b / (w * w * t * t) - db / (w * t * t)),
                }
            })
            .sum()
    };
    let e0 = eval.clone();
    let e1 = eval.clone();
    RadialProfile::from_fn_nonnegative(grid, move |t| e0(t, 0), move |t| e1(t, 1), move |t| eval(t, 2))
}

fn smooth_step(y: f64) -> f64 {
    let f = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    let (a, b) = (f(1.0 - y), f(y));
    a / (a + b)
}

/// `t^{-(N-p)/p}·Ψ(|ln t|/L)` with `Ψ = 1` on `[0, 1]` and a smooth cut to 0 on
/// `[1, 2]`, sampled on a log grid over `|ln t| ≤ 2L + 1`. Derivatives are
/// finite differences.
pub fn near_extremal_profile(params: &ProblemParams, l: f64, points: usize) -> Result<RadialProfile> {
    if !(l > 0.0) {
        return invalid("cutoff length must be positive");
    }
    let a = params.mu_crit();
    let grid = crate::radial::log_grid((-2.0 * l - 1.0).exp(), (2.0 * l + 1.0).exp(), points)?;
    let v = grid.iter().map(|&t| t.powf(-a) * smooth_step(t.ln().abs() / l - 1.0)).collect();
    RadialProfile::from_values_nonnegative(grid, v)
}
