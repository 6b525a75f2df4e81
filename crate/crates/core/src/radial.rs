//! Profiles `v(t)` of functions `u(x) = v(H°(x))` and the reduced operator.
//!
//! For such `u`, `-Δ_p^H u = -(p-1)|v'|^{p-2}v'' - (N-1)|v'|^{p-2}v'/t` for every
//! admissible gauge, so everything here is one-dimensional and gauge-free
//! apart from the Wulff volume `κ` in the radial quadrature.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::spectrum::ProblemParams;

/// Relative floor for `|v'|` in `|v'|^{p-2}` when `p < 2`: the floor is
/// `GRADIENT_FLOOR · |v|/t`, so that it is invariant under `v → λv` and
/// `t → Rt` and never binds on power laws.
pub const GRADIENT_FLOOR: f64 = 1e-14;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeSource {
    Analytic,
    FiniteDifference,
}

/// Strictly increasing `n`-point grid, uniform in `ln t`.
pub fn log_grid(t_min: f64, t_max: f64, n: usize) -> Result<Vec<f64>> {
    if !(t_min > 0.0) || !(t_max > t_min) || !t_max.is_finite() || n < 3 {
        return invalid(format!("bad log grid [{t_min}, {t_max}] with {n} points"));
    }
    let (a, b) = (t_min.ln(), t_max.ln());
    let mut t: Vec<f64> = (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect();
    t[0] = t_min;
    t[n - 1] = t_max;
    Ok(t)
}

/// Values of a radial function and its first two derivatives on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    t: Vec<f64>,
    v: Vec<f64>,
    dv: Vec<f64>,
    d2v: Vec<f64>,
    source: DerivativeSource,
}

impl RadialProfile {
    /// Profile with analytic derivatives; values must be strictly positive.
    pub fn from_fn(
        grid: Vec<f64>,
        v: impl Fn(f64) -> f64,
        dv: impl Fn(f64) -> f64,
        d2v: impl Fn(f64) -> f64,
    ) -> Result<RadialProfile> {
        check_grid(&grid)?;
        let vals: Vec<f64> = grid.iter().map(|&t| v(t)).collect();
        check_values(&vals, true)?;
        Ok(RadialProfile {
            dv: grid.iter().map(|&t| dv(t)).collect(),
            d2v: grid.iter().map(|&t| d2v(t)).collect(),
            v: vals,
            t: grid,
            source: DerivativeSource::Analytic,
        })
    }

    /// As [`RadialProfile::from_fn`], but zeros are allowed.
    pub fn from_fn_nonnegative(
        grid: Vec<f64>,
        v: impl Fn(f64) -> f64,
        dv: impl Fn(f64) -> f64,
        d2v: impl Fn(f64) -> f64,
    ) -> Result<RadialProfile> {
        check_grid(&grid)?;
        let vals: Vec<f64> = grid.iter().map(|&t| v(t)).collect();
        check_values(&vals, false)?;
        Ok(RadialProfile {
            dv: grid.iter().map(|&t| dv(t)).collect(),
            d2v: grid.iter().map(|&t| d2v(t)).collect(),
            v: vals,
            t: grid,
            source: DerivativeSource::Analytic,
        })
    }

    /// The power law `c t^{-μ}` with exact derivatives.
    pub fn power(grid: Vec<f64>, c: f64, mu: f64) -> Result<RadialProfile> {
        RadialProfile::from_fn(
            grid,
            |t| c * t.powf(-mu),
            |t| -mu * c * t.powf(-mu - 1.0),
            |t| mu * (mu + 1.0) * c * t.powf(-mu - 2.0),
        )
    }

    /// Profile with second-order finite-difference derivatives in `x = ln t`.
    /// The grid must be uniform in `ln t`; values strictly positive.
    pub fn from_values(grid: Vec<f64>, values: Vec<f64>) -> Result<RadialProfile> {
        RadialProfile::build_fd(grid, values, true)
    }

    /// As [`RadialProfile::from_values`], but zeros are allowed (compactly
    /// supported data, Dirichlet-zero minimizers).
    pub fn from_values_nonnegative(grid: Vec<f64>, values: Vec<f64>) -> Result<RadialProfile> {
        RadialProfile::build_fd(grid, values, false)
    }

    fn build_fd(grid: Vec<f64>, values: Vec<f64>, strict: bool) -> Result<RadialProfile> {
        check_grid(&grid)?;
        if values.len() != grid.len() {
            return invalid(format!("{} values for {} grid points", values.len(), grid.len()));
        }
        check_values(&values, strict)?;
        let h = log_step(&grid)?;
        let (vx, vxx) = log_derivatives(&values, h);
        let dv = vx.iter().zip(&grid).map(|(d, t)| d / t).collect();
        let d2v = vxx.iter().zip(&vx).zip(&grid).map(|((dd, d), t)| (dd - d) / (t * t)).collect();
        Ok(RadialProfile { t: grid, v: values, dv, d2v, source: DerivativeSource::FiniteDifference })
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }
    pub fn v(&self) -> &[f64] {
        &self.v
    }
    pub fn dv(&self) -> &[f64] {
        &self.dv
    }
    pub fn d2v(&self) -> &[f64] {
        &self.d2v
    }
    pub fn len(&self) -> usize {
        self.t.len()
    }
    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
    pub fn source(&self) -> DerivativeSource {
        self.source
    }
    pub fn t_min(&self) -> f64 {
        self.t[0]
    }
    pub fn t_max(&self) -> f64 {
        self.t[self.t.len() - 1]
    }
    pub fn is_strictly_positive(&self) -> bool {
        self.v.iter().all(|&v| v > 0.0)
    }

    /// Same profile with every value multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> RadialProfile {
        RadialProfile {
            t: self.t.clone(),
            v: self.v.iter().map(|x| c * x).collect(),
            dv: self.dv.iter().map(|x| c * x).collect(),
            d2v: self.d2v.iter().map(|x| c * x).collect(),
            source: self.source,
        }
    }

    /// Two-column CSV with header `t,v`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t", "v"])?;
        for (t, v) in self.t.iter().zip(&self.v) {
            wtr.write_record([format!("{t:e}"), format!("{v:e}")])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Read a `t,v` CSV; derivatives come from finite differences.
    pub fn read_csv<R: Read>(r: R) -> Result<RadialProfile> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut t = vec![];
        let mut v = vec![];
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 2 {
                return invalid(format!("expected 2 columns, got {}", rec.len()));
            }
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| Error::InvalidInput(format!("bad number {s:?}: {e}")))
            };
            t.push(parse(&rec[0])?);
            v.push(parse(&rec[1])?);
        }
        RadialProfile::from_values_nonnegative(t, v)
    }

    /// Inner and outer default fit windows `[10 t_min, 100 t_min]` and
    /// `[t_max/100, t_max/10]`.
    pub fn default_windows(&self) -> ((f64, f64), (f64, f64)) {
        let (a, b) = (self.t_min(), self.t_max());
        ((10.0 * a, 100.0 * a), (b / 100.0, b / 10.0))
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 3 {
        return invalid("grid needs at least 3 points");
    }
    if !(grid[0] > 0.0) || grid.iter().any(|t| !t.is_finite()) {
        return invalid("grid must be finite with t_min > 0");
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("grid must be strictly increasing");
    }
    Ok(())
}

fn check_values(v: &[f64], strict: bool) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return invalid("profile values must be finite");
    }
    if strict && v.iter().any(|&x| x <= 0.0) {
        return invalid("profile values must be strictly positive");
    }
    if !strict && v.iter().any(|&x| x < 0.0) {
        return invalid("profile values must be nonnegative");
    }
    if v.iter().all(|&x| x == 0.0) {
        return invalid("zero profile");
    }
    Ok(())
}

/// Uniform `ln t` spacing of a grid, or an error if it is not log-uniform.
pub fn log_step(grid: &[f64]) -> Result<f64> {
    let n = grid.len();
    let h = (grid[n - 1].ln() - grid[0].ln()) / (n - 1) as f64;
    for w in grid.windows(2) {
        if ((w[1].ln() - w[0].ln()) - h).abs() > 1e-9 * h.max(1e-300) + 1e-12 {
            return invalid("finite differences need a grid uniform in ln t");
        }
    }
    Ok(h)
}

/// Second-order first and second derivatives in `x` of samples on a uniform
/// `x`-grid of step `h`, with one-sided stencils at the ends.
pub(crate) fn log_derivatives(v: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let n = v.len();
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    for i in 1..n - 1 {
        d1[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
        d2[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h);
    }
    d1[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    d1[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
    if n >= 4 {
        d2[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / (h * h);
        d2[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) / (h * h);
    } else {
        d2[0] = d2[1];
        d2[n - 1] = d2[n - 2];
    }
    (d1, d2)
}

/// Pointwise values of `-Δ_p^H u - γ u^{p-1}/t^p` with bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorValues {
    pub values: Vec<f64>,
    /// `|principal terms| + |potential term|` at each point, for relative errors.
    pub magnitude: Vec<f64>,
    /// Indices where the `|v'|` floor was used.
    pub floored: Vec<usize>,
}

/// `-(p-1)|s|^{p-2}s' - (N-1)|s|^{p-2}s/t - γv^{p-1}/t^p` with `s = v'`.
pub fn radial_operator(params: &ProblemParams, profile: &RadialProfile) -> Result<OperatorValues> {
    let pp = params.validated()?;
    let p = pp.p;
    let nm1 = pp.dim() - 1.0;
    let n = profile.len();
    let mut values = Vec::with_capacity(n);
    let mut magnitude = Vec::with_capacity(n);
    let mut floored = vec![];
    for i in 0..n {
        let (t, v, s, ds) = (profile.t[i], profile.v[i], profile.dv[i], profile.d2v[i]);
        let mut a = s.abs();
        let floor = GRADIENT_FLOOR * v.abs() / t;
        if p < 2.0 && a < floor {
            a = floor;
            floored.push(i);
        }
        let w = if p == 2.0 { 1.0 } else { a.powf(p - 2.0) };
        let t1 = -(p - 1.0) * w * ds;
        let t2 = -nm1 * w * s / t;
        let t3 = -pp.gamma * v.abs().powf(p - 1.0) / t.powf(p);
        values.push(t1 + t2 + t3);
        magnitude.push(t1.abs() + t2.abs() + t3.abs());
    }
    Ok(OperatorValues { values, magnitude, floored })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub max_abs: f64,
    /// Relative to `|terms of the operator| + |rhs| + 1e-300` pointwise.
    pub max_rel: f64,
    pub argmax_t: f64,
    pub grid_size: usize,
    pub floored_points: usize,
}

/// Compare the operator on a strictly positive profile with a right-hand side.
pub fn residual_report(params: &ProblemParams, profile: &RadialProfile, rhs: &[f64]) -> Result<ResidualReport> {
    if rhs.len() != profile.len() {
        return invalid(format!("rhs has {} points, grid has {}", rhs.len(), profile.len()));
    }
    if !profile.is_strictly_positive() {
        return invalid("residuals need a strictly positive profile");
    }
    let op = radial_operator(params, profile)?;
    let mut rep = ResidualReport {
        max_abs: 0.0,
        max_rel: 0.0,
        argmax_t: profile.t[0],
        grid_size: profile.len(),
        floored_points: op.floored.len(),
    };
    for i in 0..profile.len() {
        let r = (op.values[i] - rhs[i]).abs();
        let rel = r / (op.magnitude[i] + rhs[i].abs() + 1e-300);
        rep.max_abs = rep.max_abs.max(r);
        if rel > rep.max_rel {
            rep.max_rel = rel;
            rep.argmax_t = profile.t[i];
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Negated log-log slope.
    pub exponent: f64,
    pub amplitude: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub points: usize,
}

pub const MIN_FIT_POINTS: usize = 8;

/// Least-squares fit of `ln v = ln c - μ ln t` over the grid points in `window`.
pub fn decay_fit(profile: &RadialProfile, window: (f64, f64)) -> Result<DecayFit> {
    fit_power(&profile.t, &profile.v, window, "v")
}

/// The same fit for `|v'|`; the expected exponent is `μ + 1`.
pub fn gradient_decay_fit(profile: &RadialProfile, window: (f64, f64)) -> Result<DecayFit> {
    let (lo, hi) = window;
    let d: Vec<f64> = profile.dv.iter().map(|x| x.abs()).collect();
    let vmax = profile
        .t
        .iter()
        .zip(&profile.v)
        .filter(|(t, _)| **t >= lo && **t <= hi)
        .fold(0.0f64, |a, (t, v)| a.max(v.abs() / t));
    let dmax = profile
        .t
        .iter()
        .zip(&d)
        .filter(|(t, _)| **t >= lo && **t <= hi)
        .fold(0.0f64, |a, (_, x)| a.max(*x));
    if dmax <= 1e-12 * vmax {
        return invalid("degenerate gradient fit: v' vanishes on the window");
    }
    fit_power(&profile.t, &d, window, "|v'|")
}

fn fit_power(t: &[f64], y: &[f64], window: (f64, f64), what: &str) -> Result<DecayFit> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo) {
        return invalid(format!("bad window [{lo}, {hi}]"));
    }
    if lo < t[0] * (1.0 - 1e-12) || hi > t[t.len() - 1] * (1.0 + 1e-12) {
        return invalid(format!("window [{lo:e}, {hi:e}] leaves the grid"));
    }
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(ti, _)| **ti >= lo * (1.0 - 1e-12) && **ti <= hi * (1.0 + 1e-12))
        .map(|(a, b)| (*a, *b))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return invalid(format!("window holds {} points, need {MIN_FIT_POINTS}", pts.len()));
    }
    if pts.iter().any(|(_, v)| !(*v > 0.0)) {
        return invalid(format!("nonpositive {what} in fit window"));
    }
    let m = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|(a, _)| a.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, b)| b.ln()).collect();
    let xm = xs.iter().sum::<f64>() / m;
    let ym = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let icept = ym - slope * xm;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - icept - slope * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - ym) * (y - ym)).sum();
    let r2 = if ss_tot <= 1e-28 * m { 1.0 } else { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) };
    Ok(DecayFit { exponent: -slope, amplitude: icept.exp(), r_squared: r2, window, points: pts.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    /// `B_R^{H°} = {H° < R}` intersected with the grid range.
    Ball,
    /// The complement `{H° > R}` intersected with the grid range.
    Complement,
}

/// `(R, ‖u‖_{L^{p*}})` over balls or their complements, with the radial
/// quadrature `∫ f(H°) dx = Nκ ∫ f(t) t^{N-1} dt` (trapezoid in `ln t`).
pub fn localized_norm_curve(
    params: &ProblemParams,
    profile: &RadialProfile,
    radii: &[f64],
    kappa: f64,
    region: Region,
) -> Result<Vec<(f64, f64)>> {
    let pp = params.validated()?;
    if !(kappa > 0.0) {
        return invalid("kappa must be positive");
    }
    let ps = pp.p_star();
    let f: Vec<f64> = profile
        .t
        .iter()
        .zip(&profile.v)
        .map(|(t, v)| pp.dim() * kappa * v.abs().powf(ps) * t.powf(pp.dim()))
        .collect();
    // cumulative ∫ f dx in x = ln t
    let x: Vec<f64> = profile.t.iter().map(|t| t.ln()).collect();
    let mut cum = vec![0.0; f.len()];
    for i in 1..f.len() {
        cum[i] = cum[i - 1] + 0.5 * (f[i] + f[i - 1]) * (x[i] - x[i - 1]);
    }
    let total = cum[f.len() - 1];
    radii
        .iter()
        .map(|&r| {
            if !(r >= profile.t_min() && r <= profile.t_max()) {
                return invalid(format!("radius {r} outside the grid"));
            }
            let xr = r.ln();
            let k = x.partition_point(|&xi| xi <= xr).clamp(1, x.len() - 1);
            let (x0, x1) = (x[k - 1], x[k]);
            let fr = f[k - 1] + (f[k] - f[k - 1]) * (xr - x0) / (x1 - x0);
            let inner = cum[k - 1] + 0.5 * (f[k - 1] + fr) * (xr - x0);
            let val = match region {
                Region::Ball => inner,
                Region::Complement => (total - inner).max(0.0),
            };
            Ok((r, val.powf(1.0 / ps)))
        })
        .collect()
}

/// Log-log slope of a norm curve: `σ` in `‖u‖ ≈ C R^σ` (ball) or `C R^{-σ}`
/// (complement), returned as the raw slope with its `r²`.
pub fn norm_curve_slope(curve: &[(f64, f64)]) -> Result<(f64, f64)> {
    let t: Vec<f64> = curve.iter().map(|c| c.0).collect();
    let y: Vec<f64> = curve.iter().map(|c| c.1).collect();
    if curve.len() < 2 || y.iter().any(|v| !(*v > 0.0)) {
        return invalid("norm curve needs >= 2 positive entries");
    }
    let m = t.len() as f64;
    let xs: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let xm = xs.iter().sum::<f64>() / m;
    let ym = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - ym - slope * (x - xm)).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - ym).powi(2)).sum();
    let r2 = if ss_tot <= 1e-28 * m { 1.0 } else { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) };
    Ok((slope, r2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_endpoints_and_step() {
        let g = log_grid(1e-2, 1e2, 5).unwrap();
        assert_eq!(g[0], 1e-2);
        assert_eq!(g[4], 1e2);
        assert_relative_eq!(g[2], 1.0, epsilon = 1e-14);
        assert_relative_eq!(log_step(&g).unwrap(), 10f64.ln(), max_relative = 1e-12);
        assert!(log_grid(0.0, 1.0, 10).is_err());
    }

    #[test]
    fn zero_profile_rejected() {
        let g = log_grid(1.0, 2.0, 10).unwrap();
        assert!(RadialProfile::from_values(g.clone(), vec![0.0; 10]).is_err());
        assert!(RadialProfile::from_values_nonnegative(g, vec![0.0; 10]).is_err());
    }

    #[test]
    fn fd_derivatives_of_power() {
        let g = log_grid(0.1, 10.0, 401).unwrap();
        let v: Vec<f64> = g.iter().map(|t| t.powf(-1.5)).collect();
        let p = RadialProfile::from_values(g.clone(), v).unwrap();
        for i in [0, 17, 200, 400] {
            let t = g[i];
            assert_relative_eq!(p.dv()[i], -1.5 * t.powf(-2.5), max_relative = 1e-3);
            assert_relative_eq!(p.d2v()[i], 3.75 * t.powf(-3.5), max_relative = 1e-2);
        }
    }

    #[test]
    fn exact_power_fit() {
        let g = log_grid(1e-2, 1e2, 200).unwrap();
        let p = RadialProfile::power(g, 5.0, 1.5).unwrap();
        let f = decay_fit(&p, (0.1, 10.0)).unwrap();
        assert_relative_eq!(f.exponent, 1.5, max_relative = 1e-12);
        assert_relative_eq!(f.amplitude, 5.0, max_relative = 1e-12);
        assert_eq!(f.r_squared, 1.0);
        let gf = gradient_decay_fit(&p, (0.1, 10.0)).unwrap();
        assert_relative_eq!(gf.exponent, 2.5, max_relative = 1e-12);
    }

    #[test]
    fn seven_point_window_rejected() {
        let g = log_grid(1.0, 1e3, 31).unwrap();
        let p = RadialProfile::power(g.clone(), 1.0, 1.0).unwrap();
        // 10 points per decade: [1, 10^0.6] holds exactly 7
        let r = decay_fit(&p, (1.0, 10f64.powf(0.6)));
        assert!(r.is_err());
        assert_eq!(decay_fit(&p, (1.0, 10f64.powf(0.7))).unwrap().points, 8);
    }

    #[test]
    fn constant_gradient_fit_is_degenerate() {
        let g = log_grid(1.0, 1e3, 31).unwrap();
        let p = RadialProfile::from_fn(g, |_| 2.0, |_| 0.0, |_| 0.0).unwrap();
        assert!(gradient_decay_fit(&p, (2.0, 500.0)).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = log_grid(1.0, 10.0, 11).unwrap();
        let p = RadialProfile::power(g, 2.0, 0.5).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = RadialProfile::read_csv(&buf[..]).unwrap();
        assert_eq!(q.t(), p.t());
        assert_eq!(q.v(), p.v());
        assert_eq!(q.source(), DerivativeSource::FiniteDifference);
    }
}
