//! Hardy constant, decay exponents and the explicit supersolution data.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The triple `(N, p, γ)` with `1 < p < N` and `0 ≤ γ < C_H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    #[serde(rename = "N")]
    pub n: usize,
    pub p: f64,
    pub gamma: f64,
}

impl ProblemParams {
    pub fn new(n: usize, p: f64, gamma: f64) -> Result<ProblemParams> {
        let c_h = hardy_constant(n, p)?;
        if !gamma.is_finite() || gamma < 0.0 || gamma >= c_h {
            return Err(Error::InvalidParams(format!(
                "need 0 <= gamma < C_H = {c_h}, got gamma = {gamma}"
            )));
        }
        Ok(ProblemParams { n, p, gamma })
    }

    /// Re-validate after deserialization.
    pub fn validated(self) -> Result<ProblemParams> {
        ProblemParams::new(self.n, self.p, self.gamma)
    }

    pub fn dim(&self) -> f64 {
        self.n as f64
    }

    pub fn c_h(&self) -> f64 {
        ((self.dim() - self.p) / self.p).powf(self.p)
    }

    /// Critical Sobolev exponent `Np/(N-p)`.
    pub fn p_star(&self) -> f64 {
        self.dim() * self.p / (self.dim() - self.p)
    }

    /// `(N-p)/p`, the double root at `γ = C_H`.
    pub fn mu_crit(&self) -> f64 {
        (self.dim() - self.p) / self.p
    }

    /// `(N-p)/(p-1)`, the fundamental-solution exponent.
    pub fn mu_fund(&self) -> f64 {
        (self.dim() - self.p) / (self.p - 1.0)
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<ProblemParams> {
        ProblemParams::new(self.n, self.p, gamma)
    }
}

/// `C_H = ((N-p)/p)^p`.
pub fn hardy_constant(n: usize, p: f64) -> Result<f64> {
    let nf = n as f64;
    if n < 2 || !p.is_finite() || p <= 1.0 || p >= nf {
        return Err(Error::InvalidParams(format!("need N >= 2 and 1 < p < N, got N = {n}, p = {p}")));
    }
    Ok(((nf - p) / p).powf(p))
}

/// `(p-1)μ^p - (N-p)μ^{p-1} + γ`, which equals `μ^{p-2}[(p-1)μ² - (N-p)μ] + γ`
/// for `μ > 0` and extends continuously to `γ` at `μ = 0`.
pub fn characteristic(params: &ProblemParams, mu: f64) -> Result<f64> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::Domain(format!("characteristic needs mu >= 0, got {mu}")));
    }
    Ok(char_unchecked(params, mu))
}

fn char_unchecked(pp: &ProblemParams, mu: f64) -> f64 {
    let p = pp.p;
    (p - 1.0) * mu.powf(p) - (pp.dim() - p) * mu.powf(p - 1.0) + pp.gamma
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentPair {
    pub mu1: f64,
    pub mu2: f64,
    pub res1: f64,
    pub res2: f64,
}

/// Roots `μ1 ≤ (N-p)/p ≤ μ2` of the characteristic, by bisection on the two
/// brackets where it is strictly monotone.
pub fn solve_exponents(params: &ProblemParams) -> Result<ExponentPair> {
    let pp = params.validated()?;
    let mc = pp.mu_crit();
    let mf = pp.mu_fund();
    let (mu1, mu2) = if pp.gamma == 0.0 {
        (0.0, mf)
    } else {
        // decreasing on [0, mc] from γ > 0 to γ - C_H < 0; increasing on [mc, mf] back to γ
        (bisect(&pp, 0.0, mc, true), bisect(&pp, mc, mf, false))
    };
    Ok(ExponentPair {
        mu1,
        mu2,
        res1: char_unchecked(&pp, mu1).abs(),
        res2: char_unchecked(&pp, mu2).abs(),
    })
}

fn bisect(pp: &ProblemParams, mut lo: f64, mut hi: f64, decreasing: bool) -> f64 {
    // Run to adjacent floats: for tiny γ a bracket-width stopping rule leaves a
    // residual far larger than γ itself, and the supersolution checks see it.
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let c = char_unchecked(pp, mid);
        if c == 0.0 {
            return mid;
        }
        if (c > 0.0) == decreasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if char_unchecked(pp, lo).abs() <= char_unchecked(pp, hi).abs() {
        lo
    } else {
        hi
    }
}

/// `h` as a function of `s = δ t^e` for a signed perturbation exponent `e`
/// (`e = ε > 0` near the origin, `e = -ε < 0` near infinity):
///
/// `-|μ - (μ-e)s|^{p-2}{μ²(p-1) - (N-p)μ - [(p-1)(μ-e)² - (N-p)(μ-e)]s} - γ|1-s|^{p-2}(1-s)`.
pub fn h_tilde(params: &ProblemParams, mu: f64, e: f64, s: f64) -> f64 {
    let p = params.p;
    let nmp = params.dim() - p;
    let me = mu - e;
    let c1 = (p - 1.0) * me * me - nmp * me;
    let k = me / mu;
    if mu > 0.0 && s.abs() < 1.0 && k * s < 1.0 {
        // h = -χ(μ)(1-ks)^{p-2} + γ[(1-ks)^{p-2} - (1-s)^{p-1}] + μ^{p-2}c1 s(1-ks)^{p-2},
        // k = (μ-e)/μ, χ the characteristic. The bracket goes through expm1 so that
        // small s keeps full relative precision near a root.
        let lead = mu.powf(p - 2.0);
        let chi = lead * (mu * mu * (p - 1.0) - nmp * mu) + params.gamma;
        let a = (p - 2.0) * (-k * s).ln_1p();
        let b = (p - 1.0) * (-s).ln_1p();
        return -chi * a.exp() + params.gamma * b.exp() * (a - b).exp_m1() + lead * c1 * s * a.exp();
    }
    let brace = mu * mu * (p - 1.0) - nmp * mu - c1 * s;
    let lead = (mu - me * s).abs().powf(p - 2.0);
    let one = 1.0 - s;
    -lead * brace - params.gamma * one.abs().powf(p - 2.0) * one
}

/// The profile `h(t)` of the origin supersolution `(1 - δt^ε) t^{-μ}`.
pub fn h_profile(params: &ProblemParams, mu: f64, delta: f64, epsilon: f64, t: f64) -> f64 {
    h_tilde(params, mu, epsilon, delta * t.powf(epsilon))
}

/// `g(t) = h(t) / (|1 - δt^e|^{p-2}(1 - δt^e) t^p)` for a signed exponent `e`.
pub fn g_profile(params: &ProblemParams, mu: f64, delta: f64, e: f64, t: f64) -> f64 {
    let s = delta * t.powf(e);
    let one = 1.0 - s;
    h_tilde(params, mu, e, s) / (one.abs().powf(params.p - 2.0) * one * t.powf(params.p))
}

/// Closed-form `d h_tilde / ds` at `s = 0`, valid for `μ > 0`.
pub fn h_tilde_slope(params: &ProblemParams, mu: f64, e: f64) -> f64 {
    let p = params.p;
    let nmp = params.dim() - p;
    let me = mu - e;
    let g = params.gamma;
    g * (p - 1.0) - (p - 2.0) * g * me / mu + mu.powf(p - 2.0) * me * ((p - 1.0) * me - nmp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Origin,
    Infinity,
}

/// Data of the supersolution `v = (1 - δ t^e) t^{-μ}` with `e = ±ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupersolutionParams {
    pub branch: Branch,
    #[serde(rename = "A")]
    pub a: f64,
    pub alpha: f64,
    pub mu: f64,
    pub delta: f64,
    /// Magnitude of the perturbation exponent: `(p-α)/2` or `(α-p)/2`.
    pub epsilon: f64,
    #[serde(rename = "R")]
    pub r: f64,
    /// `ln R`, kept because `R` underflows when `ε` is small.
    pub ln_r: f64,
    pub delta_h: f64,
    /// `dh/ds` at 0 in the variable `s = δ t^{±ε}`.
    pub h_prime0: f64,
    pub h_prime0_richardson_gap: f64,
    pub grid_points: usize,
    pub grid_range: (f64, f64),
    /// The infinity-branch recipe mirrors the origin one; it is inferred.
    pub inferred_recipe: bool,
}

impl SupersolutionParams {
    /// Signed exponent `e` in `1 - δ t^e`.
    pub fn signed_exponent(&self) -> f64 {
        match self.branch {
            Branch::Origin => self.epsilon,
            Branch::Infinity => -self.epsilon,
        }
    }

    pub fn g(&self, params: &ProblemParams, t: f64) -> f64 {
        g_profile(params, self.mu, self.delta, self.signed_exponent(), t)
    }

    /// The supersolution itself.
    pub fn v(&self, t: f64) -> f64 {
        (1.0 - self.delta * t.powf(self.signed_exponent())) * t.powf(-self.mu)
    }

    /// `v'(t)`.
    pub fn dv(&self, t: f64) -> f64 {
        let e = self.signed_exponent();
        t.powf(-self.mu - 1.0) * (-self.mu + self.delta * (self.mu - e) * t.powf(e))
    }

    /// `v''(t)`.
    pub fn d2v(&self, t: f64) -> f64 {
        let e = self.signed_exponent();
        let k = e - self.mu;
        self.mu * (self.mu + 1.0) * t.powf(-self.mu - 2.0) - self.delta * k * (k - 1.0) * t.powf(k - 2.0)
    }
}

pub const DELTA_GRID_POINTS: usize = 512;
pub const DELTA_GRID_RANGE: (f64, f64) = (1e-8, 1.0);

/// Synthesize `(δ, ε, R)` so that `g ≥ A t^{-α}` on `(0, R)` (origin branch,
/// `α < p`, `μ = μ1`) or on `(R, ∞)` (infinity branch, `α > p`, `μ = μ2`).
pub fn supersolution_params(
    params: &ProblemParams,
    a: f64,
    alpha: f64,
    branch: Branch,
) -> Result<SupersolutionParams> {
    let pp = params.validated()?;
    let p = pp.p;
    if !(a > 0.0) || !a.is_finite() || !alpha.is_finite() {
        return Err(Error::InvalidParams(format!("need A > 0 and finite alpha, got A = {a}")));
    }
    let ex = solve_exponents(&pp)?;
    let (mu, epsilon, e) = match branch {
        Branch::Origin if alpha < p => (ex.mu1, (p - alpha) / 2.0, (p - alpha) / 2.0),
        Branch::Infinity if alpha > p => (ex.mu2, (alpha - p) / 2.0, -(alpha - p) / 2.0),
        _ => {
            return Err(Error::InvalidParams(format!(
                "alpha = {alpha} is on the wrong side of p = {p} for the {branch:?} branch"
            )))
        }
    };
    if pp.gamma == 0.0 && p != 2.0 {
        return Err(Error::InternalConsistency(
            "h has no finite nonzero slope at 0 when gamma = 0 and p != 2 (h ~ s^(p-1))".into(),
        ));
    }

    // One-sided differences; h(0) = 0 up to the root residual, so subtract it.
    // h is linear only for s well below μ/|μ-e|, which is tiny when μ1 is
    // (small γ with p < 2), so the steps are taken relative to that scale.
    let h0 = h_tilde(&pp, mu, e, 0.0);
    let scale = if mu > 0.0 { (mu / (mu - e).abs()).min(1.0) } else { 1.0 };
    let (s1, s2) = (1e-6 * scale, 1e-7 * scale);
    let d1 = (h_tilde(&pp, mu, e, s1) - h0) / s1;
    let d2 = (h_tilde(&pp, mu, e, s2) - h0) / s2;
    // Richardson on the O(step) error of the forward difference.
    let h_prime0 = (10.0 * d2 - d1) / 9.0;
    let gap = (d2 - d1).abs() / h_prime0.abs().max(1e-300);
    if !(h_prime0 > 0.0) {
        return Err(Error::InternalConsistency(format!(
            "h'(0) = {h_prime0} is not positive"
        )));
    }
    if gap > 1e-3 {
        return Err(Error::InternalConsistency(format!(
            "h'(0) finite differences disagree (relative gap {gap:e})"
        )));
    }

    let (lo, hi) = DELTA_GRID_RANGE;
    let mut delta_h = 0.0;
    for k in 0..DELTA_GRID_POINTS {
        let s = lo * (hi / lo).powf(k as f64 / (DELTA_GRID_POINTS - 1) as f64);
        let h = h_tilde(&pp, mu, e, s);
        if 2.0 * h_prime0 * s >= h && h >= 0.5 * h_prime0 * s && h > 0.0 {
            delta_h = s;
        } else {
            break;
        }
    }
    if delta_h == 0.0 {
        return Err(Error::InternalConsistency(
            "the band h'(0)s/2 <= h(s) <= 2h'(0)s fails at the first grid point".into(),
        ));
    }
    let delta = delta_h.min(0.5);
    let ratio = delta * h_prime0 / (2.0 * a);
    let ln_r = match branch {
        Branch::Origin => (ratio.ln() / (p - alpha - epsilon)).min(0.0),
        Branch::Infinity => (-ratio.ln() / (alpha - p - epsilon)).max(0.0),
    };
    let r = ln_r.exp();
    Ok(SupersolutionParams {
        branch,
        a,
        alpha,
        mu,
        delta,
        epsilon,
        r,
        ln_r,
        delta_h,
        h_prime0,
        h_prime0_richardson_gap: gap,
        grid_points: DELTA_GRID_POINTS,
        grid_range: DELTA_GRID_RANGE,
        inferred_recipe: branch == Branch::Infinity,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GBoundCheck {
    pub points: usize,
    pub t_range: (f64, f64),
    /// `min g(t) t^α / A` over the grid; at least 1 on pass.
    pub min_ratio: f64,
    pub argmin_t: f64,
    /// `min (1 - δ t^e)` over the grid.
    pub min_one_minus_s: f64,
    pub passed: bool,
}

/// Evaluate `g(t) ≥ A t^{-α}` on a log grid strictly inside the validity
/// region: eight decades below `R` for the origin branch, above for infinity.
/// The ratio `g t^α / A` is formed in log space since `R` can be extreme.
pub fn check_g_bound(params: &ProblemParams, sp: &SupersolutionParams, points: usize) -> GBoundCheck {
    let decades = 8.0;
    let p = params.p;
    let e = sp.signed_exponent();
    let mut min_ratio = f64::INFINITY;
    let mut argmin = f64::NAN;
    let mut min_one = f64::INFINITY;
    let ln_ts: Vec<f64> = (0..points)
        .map(|k| {
            let f = decades * (1.0 - k as f64 / points as f64) * std::f64::consts::LN_10;
            match sp.branch {
                Branch::Origin => sp.ln_r - f,
                Branch::Infinity => sp.ln_r + f,
            }
        })
        .collect();
    for &lt in &ln_ts {
        let s = sp.delta * (e * lt).exp();
        let one = 1.0 - s;
        let h = h_tilde(params, sp.mu, e, s);
        let ratio = h / (one.abs().powf(p - 2.0) * one) * ((sp.alpha - p) * lt).exp() / sp.a;
        if !(ratio >= min_ratio) {
            min_ratio = ratio;
            argmin = lt.exp();
        }
        min_one = min_one.min(one);
    }
    let (a, b) = (ln_ts[0].exp(), ln_ts[points - 1].exp());
    GBoundCheck {
        points,
        t_range: (a.min(b), a.max(b)),
        min_ratio,
        argmin_t: argmin,
        min_one_minus_s: min_one,
        passed: min_ratio >= 1.0 && min_one > 0.0,
    }
}

/// One row of an exponent table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub p: f64,
    pub gamma: f64,
    #[serde(rename = "C_H")]
    pub c_h: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub res1: f64,
    pub res2: f64,
}

impl ExponentRow {
    pub fn compute(params: &ProblemParams) -> Result<ExponentRow> {
        let e = solve_exponents(params)?;
        Ok(ExponentRow {
            n: params.n,
            p: params.p,
            gamma: params.gamma,
            c_h: params.c_h(),
            mu1: e.mu1,
            mu2: e.mu2,
            res1: e.res1,
            res2: e.res2,
        })
    }
}

/// CSV with header `N,p,gamma,C_H,mu1,mu2,res1,res2`.
pub fn write_exponent_table<W: Write>(rows: &[ExponentRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_exponent_table<R: Read>(r: R) -> Result<Vec<ExponentRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pp(n: usize, p: f64, g: f64) -> ProblemParams {
        ProblemParams::new(n, p, g).unwrap()
    }

    #[test]
    fn hardy_values() {
        assert_eq!(hardy_constant(4, 2.0).unwrap(), 1.0);
        assert_eq!(hardy_constant(3, 2.0).unwrap(), 0.25);
        assert_relative_eq!(hardy_constant(5, 3.0).unwrap(), 8.0 / 27.0, max_relative = 1e-15);
        assert!(hardy_constant(3, 3.0).is_err());
        assert!(hardy_constant(3, 1.0).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(ProblemParams::new(4, 2.0, 1.0).is_err());
        assert!(ProblemParams::new(4, 2.0, -0.1).is_err());
        let p = pp(4, 2.0, 0.5);
        assert_eq!(p.p_star(), 4.0);
    }

    #[test]
    fn characteristic_values() {
        let p = pp(4, 2.0, 0.75);
        assert_relative_eq!(characteristic(&p, 0.5).unwrap(), 0.0, epsilon = 1e-15);
        let z = pp(5, 3.0, 0.0);
        assert_eq!(characteristic(&z, 0.0).unwrap(), 0.0);
        assert_relative_eq!(characteristic(&z, z.mu_fund()).unwrap(), 0.0, epsilon = 1e-15);
        assert!(matches!(characteristic(&p, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn exponents_quadratic_case() {
        let e = solve_exponents(&pp(4, 2.0, 0.75)).unwrap();
        assert_relative_eq!(e.mu1, 0.5, epsilon = 1e-12);
        assert_relative_eq!(e.mu2, 1.5, epsilon = 1e-12);
        let z = solve_exponents(&pp(5, 3.0, 0.0)).unwrap();
        assert_eq!((z.mu1, z.mu2), (0.0, 1.0));
    }

    #[test]
    fn h_at_zero() {
        let p = pp(5, 3.0, 0.2);
        let e = solve_exponents(&p).unwrap();
        assert!(h_profile(&p, e.mu1, 0.3, 0.4, 0.0).abs() < 1e-10);
        let z = pp(5, 3.0, 0.0);
        assert_eq!(h_profile(&z, 0.0, 0.3, 0.4, 0.0), 0.0);
        let mu: f64 = 0.37;
        let expect = -mu.powf(1.0) * (mu * mu * 2.0 - mu * 2.0) - 0.2;
        assert_relative_eq!(h_profile(&p, mu, 0.3, 0.4, 0.0), expect, max_relative = 1e-14);
    }

    #[test]
    fn origin_epsilon_example() {
        let p = pp(4, 2.0, 0.5);
        let sp = supersolution_params(&p, 1.0, 1.0, Branch::Origin).unwrap();
        assert_eq!(sp.epsilon, 0.5);
        assert!(sp.delta <= 0.5);
        assert!(sp.r <= 1.0);
        assert!(check_g_bound(&p, &sp, 200).passed);
    }

    #[test]
    fn wrong_side_alpha_rejected() {
        let p = pp(4, 2.0, 0.5);
        assert!(supersolution_params(&p, 1.0, 3.0, Branch::Origin).is_err());
        assert!(supersolution_params(&p, 1.0, 1.0, Branch::Infinity).is_err());
        assert!(supersolution_params(&p, 0.0, 1.0, Branch::Origin).is_err());
    }

    #[test]
    fn table_round_trip() {
        let rows = vec![ExponentRow::compute(&pp(4, 2.0, 0.75)).unwrap()];
        let mut buf = Vec::new();
        write_exponent_table(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("N,p,gamma,C_H,mu1,mu2,res1,res2\n"));
        assert_eq!(read_exponent_table(&buf[..]).unwrap(), rows);
    }
}
