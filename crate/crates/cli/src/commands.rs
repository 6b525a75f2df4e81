//! The subcommands. Each returns the checks it ran, a JSON results block and
//! any CSV tables; nothing here touches the file system.

use std::thread;

use anisolab::comparison::{exterior_growth_check, liouville_check, seeded_pair_suite};
use anisolab::gauge::{divergence_identity_check, verify_identities, wulff_volume, DualMode};
use anisolab::inequalities::*;
use anisolab::radial::{log_grid, residual_report, RadialProfile};
use anisolab::sampling::{self, derive_seed};
use anisolab::spectrum::*;
use anisolab::variational::*;
use anisolab::Result;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{InitCfg, RunConfig};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: Option<f64>,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, tol: f64) -> Check {
        Check { name: name.into(), passed: value <= tol, value, tolerance: Some(tol) }
    }

    fn flag(name: impl Into<String>, passed: bool) -> Check {
        Check { name: name.into(), passed, value: if passed { 1.0 } else { 0.0 }, tolerance: None }
    }

    fn with_value(name: impl Into<String>, passed: bool, value: f64) -> Check {
        Check { name: name.into(), passed, value, tolerance: None }
    }
}

#[derive(Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub results: Value,
    /// `(file suffix, contents)`.
    pub csv: Vec<(String, Vec<u8>)>,
    pub extra_json: Vec<(String, Value)>,
}

pub struct Context {
    pub jobs: usize,
    /// `YYYY-MM-DD`, used in the constants manifest.
    pub date: String,
}

fn to_json<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report serializes")
}

fn grid(cfg: &RunConfig) -> Result<Vec<f64>> {
    log_grid(cfg.grid.t_min, cfg.grid.t_max, cfg.grid.points)
}

pub fn exponents(cfg: &RunConfig) -> Result<Outcome> {
    let base = cfg.problem_params()?;
    let tol = cfg.tolerances.exponent_residual;
    let mut out = Outcome::default();
    let mut rows = vec![];
    for &g in &cfg.params.gammas {
        let pp = base.with_gamma(g)?;
        let row = ExponentRow::compute(&pp)?;
        out.checks.push(Check::at_most(format!("residual gamma={g}"), row.res1.max(row.res2), tol));
        let ordered = 0.0 <= row.mu1 && row.mu1 < pp.mu_crit() && pp.mu_crit() < row.mu2 && row.mu2 <= pp.mu_fund();
        out.checks.push(Check::flag(format!("ordering gamma={g}"), ordered));
        rows.push(row);
    }
    let mut buf = vec![];
    write_exponent_table(&rows, &mut buf)?;
    out.csv.push((String::new(), buf));
    out.results = json!({ "rows": rows });
    Ok(out)
}

pub fn gauge_check(cfg: &RunConfig) -> Result<Outcome> {
    let gc = cfg.gauge_config();
    let gauge = gc.build(cfg.seed)?;
    let t = &cfg.tolerances;
    let tol = match gauge.dual_mode() {
        DualMode::Analytic => t.identity_analytic,
        DualMode::Numerical => t.identity_numerical,
    };
    let s = &cfg.samples;
    let ids = verify_identities(&gauge, s.identities, cfg.seed, tol)?;
    let div = divergence_identity_check(&gauge, s.divergence, t.fd_step, cfg.seed, t.divergence)?;
    let vol = wulff_volume(&gauge, s.volume, cfg.seed)?;
    let mut out = Outcome::default();
    for c in &ids.checks {
        out.checks.push(Check { name: c.identity.clone(), passed: c.passed, value: c.max_rel_err, tolerance: Some(c.tolerance) });
    }
    out.checks.push(Check::at_most(div.identity.clone(), div.max_rel_err, div.tolerance));
    let exact = gauge.exact_wulff_volume();
    if let Some(k) = exact {
        out.checks.push(Check::at_most("Wulff volume within 3 stderr", (vol.kappa - k).abs(), 3.0 * vol.stderr));
    }
    out.results = json!({
        "gauge": gauge.label(),
        "certificate": to_json(gauge.certificate()),
        "identities": to_json(&ids),
        "divergence": to_json(&div),
        "wulff_volume": to_json(&vol),
        "exact_wulff_volume": exact,
    });
    Ok(out)
}

pub fn residual(cfg: &RunConfig) -> Result<Outcome> {
    let pp = cfg.problem_params()?;
    let ex = solve_exponents(&pp)?;
    let t = grid(cfg)?;
    let zero = vec![0.0; t.len()];
    let tol = cfg.tolerances.power_residual;
    let mut out = Outcome::default();
    let mut reports = serde_json::Map::new();
    for (name, mu) in [("mu1", ex.mu1), ("mu2", ex.mu2)] {
        let prof = RadialProfile::power(t.clone(), 1.0, mu)?;
        let rep = residual_report(&pp, &prof, &zero)?;
        out.checks.push(Check::at_most(format!("t^-{name} relative residual"), rep.max_rel, tol));
        reports.insert(name.into(), json!({ "mu": mu, "report": to_json(&rep) }));
    }
    out.results = Value::Object(reports);
    Ok(out)
}

pub fn supersolution(cfg: &RunConfig) -> Result<Outcome> {
    let pp = cfg.problem_params()?;
    let sc = &cfg.supersolution;
    let mut out = Outcome::default();
    let mut res = serde_json::Map::new();
    for (name, branch, alpha) in [
        ("origin", Branch::Origin, sc.alpha_origin.unwrap()),
        ("infinity", Branch::Infinity, sc.alpha_infinity.unwrap()),
    ] {
        let sp = supersolution_params(&pp, sc.a, alpha, branch)?;
        let chk = check_g_bound(&pp, &sp, sc.grid_points);
        out.checks.push(Check::with_value(format!("{name}: g >= A t^-alpha"), chk.passed, chk.min_ratio));
        out.checks.push(Check::at_most(format!("{name}: delta <= 1/2"), sp.delta, 0.5));
        out.checks.push(Check::flag(format!("{name}: epsilon = |p - alpha|/2"), sp.epsilon == (pp.p - alpha).abs() / 2.0));
        res.insert(name.into(), json!({ "params": to_json(&sp), "g_bound": to_json(&chk) }));
    }
    out.results = Value::Object(res);
    Ok(out)
}

pub fn inequalities(cfg: &RunConfig, ctx: &Context) -> Result<Outcome> {
    let gauge = cfg.gauge_config().build(cfg.seed)?;
    let p = cfg.inequalities.p.unwrap();
    let delta = cfg.inequalities.delta;
    let n = cfg.samples.inequalities;
    let seed = |k: u64| derive_seed(cfg.seed, k);
    let refine_tol = cfg.tolerances.oracle_refinement;
    let mut out = Outcome::default();
    let mut reports = vec![];
    let mut manifest = vec![];

    reports.push(check_vector_monotonicity(&gauge, p, n, seed(1))?);
    let log_constant = if p >= 2.0 {
        reports.push(check_convexity_p_ge_2(&gauge, p, n, seed(2))?);
        (convexity_constant_p_ge_2(p), ConstantSource::ClosedForm)
    } else {
        let cgrid = OracleGrid::convexity_default(seed(3));
        let o = oracle_convexity_constant(&gauge, p, cgrid)?;
        let o4 = oracle_convexity_constant(&gauge, p, cgrid.refined(4))?;
        out.checks.push(Check::at_most("convexity-p-lt-2 oracle stability", oracle_change(&o, &o4), refine_tol));
        manifest.push(ManifestEntry::new(&o, &o4, &ctx.date));
        reports.push(check_convexity_p_lt_2(&gauge, p, &o, n, seed(2))?);
        (o.constant, ConstantSource::Oracle)
    };
    let split_grid = OracleGrid::power_split_default();
    let o = oracle_power_split_constant(p, delta, split_grid)?;
    let o4 = oracle_power_split_constant(p, delta, split_grid.refined(4))?;
    out.checks.push(Check::at_most("power-split oracle stability", oracle_change(&o, &o4), refine_tol));
    manifest.push(ManifestEntry::new(&o, &o4, &ctx.date));
    reports.push(check_power_split(p, delta, &o, n, seed(4))?);
    reports.push(check_log_pointwise(&gauge, p, log_constant.0, log_constant.1, n, seed(5))?);
    for r in &reports {
        out.checks.push(Check::with_value(format!("{} violations", r.inequality), r.passed, r.violations as f64));
    }

    // Hardy runs on the radial reduction with the configured (N, p).
    let pp = cfg.problem_params()?;
    let c_h = pp.c_h();
    let t = grid(cfg)?;
    let mut rng = sampling::stream_rng(cfg.seed, 6);
    let mut below = 0usize;
    let mut min_q = f64::INFINITY;
    for _ in 0..cfg.samples.hardy_profiles {
        let prof = random_smooth_profile(t.clone(), &mut rng)?;
        let q = hardy_quotient(&pp, &prof, 1.0)?;
        min_q = min_q.min(q);
        if q < c_h * (1.0 - SLACK) {
            below += 1;
        }
    }
    out.checks.push(Check::with_value("hardy quotient >= C_H", below == 0, below as f64));
    let mut family = vec![];
    for l in [4.0, 8.0, 16.0] {
        let q = hardy_quotient(&pp, &near_extremal_profile(&pp, l, 4001)?, 1.0)?;
        family.push(json!({ "L": l, "quotient": q, "excess": q / c_h - 1.0 }));
    }
    let last = family.last().unwrap()["excess"].as_f64().unwrap();
    out.checks.push(Check::at_most("near-extremal family approaches C_H", last, cfg.tolerances.hardy_extremal));

    out.results = json!({
        "gauge": gauge.label(),
        "reports": reports,
        "hardy": { "C_H": c_h, "profiles": cfg.samples.hardy_profiles, "min_quotient": min_q, "below": below, "near_extremal": family },
    });
    out.extra_json.push(("constants".into(), to_json(&manifest)));
    Ok(out)
}

fn init(cfg: &RunConfig) -> Init {
    match cfg.variational.init {
        InitCfg::Talenti => Init::Talenti,
        InitCfg::PowerTruncated => Init::PowerTruncated,
    }
}

fn minimize_options(cfg: &RunConfig) -> MinimizeOptions {
    MinimizeOptions {
        grad_tol: cfg.variational.grad_tol,
        max_iters: cfg.variational.max_iters,
        seed: cfg.seed,
        ..MinimizeOptions::default()
    }
}

pub fn minimize(cfg: &RunConfig) -> Result<Outcome> {
    let pp = cfg.problem_params()?;
    let v = &cfg.variational;
    let setup = QuotientSetup::new(&pp, v.kappa, (cfg.grid.t_min, cfg.grid.t_max), cfg.grid.points)?;
    let r = minimize_quotient(&setup, &init(cfg), minimize_options(cfg))?;
    let mut out = Outcome::default();
    out.checks.push(Check::at_most("converged (relative gradient norm)", r.grad_norm, v.grad_tol));
    let monotone = r.energy_history.windows(2).all(|w| w[1] <= w[0] + ENERGY_SLACK * w[0].abs());
    out.checks.push(Check::flag("energy nonincreasing", monotone));
    let audit = if r.converged() { Some(minimizer_decay_audit(&r, &pp, None)?) } else { None };
    if let Some(a) = &audit {
        let worst = [a.errors.0, a.errors.1, a.errors.2, a.errors.3].into_iter().fold(0.0, f64::max);
        out.checks.push(Check::at_most("decay exponents", worst, a.tolerance));
    }
    let mut talenti_q = None;
    if pp.gamma == 0.0 {
        let tv: Vec<f64> = setup.t.iter().map(|&t| talenti(&pp, t)).collect();
        let q = quotient_values(&setup, &tv)?;
        out.checks.push(Check::at_most("S against the Talenti quotient", (r.s_estimate / q - 1.0).abs(), cfg.tolerances.talenti));
        talenti_q = Some(q);
    }
    let sens = if v.sensitivity {
        Some(truncation_sensitivity(&r, &setup, &init(cfg), minimize_options(cfg), WIDE_RANGE)?)
    } else {
        None
    };
    out.results = json!({
        "S": r.s_estimate,
        "initial_quotient": r.initial_quotient,
        "iterations": r.iterations,
        "grad_norm": r.grad_norm,
        "termination": to_json(&r.termination),
        "gradient_check_max": r.gradient_check_max,
        "quadrature_self_test_error": setup.self_test_error,
        "range": r.range,
        "decay_audit": audit.as_ref().map(to_json),
        "talenti_quotient": talenti_q,
        "truncation_sensitivity": sens.as_ref().map(to_json),
    });
    let mut buf = vec![];
    r.profile.write_csv(&mut buf)?;
    out.csv.push(("-profile".into(), buf));
    Ok(out)
}

/// Every γ starts from the configured initial profile, so the table does not
/// depend on `--jobs`.
pub fn sweep(cfg: &RunConfig, ctx: &Context) -> Result<Outcome> {
    let base = cfg.problem_params()?;
    let gammas = &cfg.params.gammas;
    let range = (cfg.grid.t_min, cfg.grid.t_max);
    let (kappa, points, start, opts) = (cfg.variational.kappa, cfg.grid.points, init(cfg), minimize_options(cfg));
    let jobs = ctx.jobs.clamp(1, gammas.len());
    let mut rows = vec![None; gammas.len()];
    thread::scope(|s| -> Result<()> {
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                let start = &start;
                s.spawn(move || -> Result<Vec<(usize, SGammaRow)>> {
                    let mut mine = vec![];
                    for (i, &g) in gammas.iter().enumerate().skip(j).step_by(jobs) {
                        let pp = base.with_gamma(g)?;
                        mine.push((i, s_gamma_row(&pp, kappa, range, points, start, opts)?.0));
                    }
                    Ok(mine)
                })
            })
            .collect();
        for h in handles {
            for (i, row) in h.join().expect("sweep worker panicked")? {
                rows[i] = Some(row);
            }
        }
        Ok(())
    })?;
    let curve = SGammaCurve::from_rows(rows.into_iter().map(|r| r.expect("every gamma ran")).collect());
    let mut out = Outcome::default();
    let flagged = curve.rows.iter().filter(|r| r.flagged).count();
    out.checks.push(Check::with_value("all members converged", flagged == 0, flagged as f64));
    out.checks.push(Check::flag("S strictly decreasing in gamma", curve.strictly_decreasing));
    out.checks.push(Check::flag("S positive", curve.all_positive));
    let mut buf = vec![];
    write_s_gamma_csv(&curve.rows, &mut buf)?;
    out.csv.push((String::new(), buf));
    out.results = to_json(&curve);
    Ok(out)
}

pub fn liouville(cfg: &RunConfig) -> Result<Outcome> {
    let pp = cfg.problem_params()?;
    let l = &cfg.liouville;
    let mut out = Outcome::default();
    let mut reports = vec![];
    for &b in &l.branches {
        let rep = liouville_check(&pp, b, (l.a, l.b), l.c, l.points)?;
        let worst = rep.refinement.iter().map(|x| x.1).fold(rep.deviation.max(rep.widened_deviation), f64::max);
        out.checks.push(Check::with_value(format!("{b:?} branch pure power"), rep.passed, worst));
        reports.push(rep);
    }
    out.results = json!({ "reports": reports });
    Ok(out)
}

pub fn compare(cfg: &RunConfig) -> Result<Outcome> {
    let pp = cfg.problem_params()?;
    let suite = seeded_pair_suite(&pp, cfg.seed, cfg.samples.pair_rounds, cfg.tolerances.comparison_residual)?;
    let mut out = Outcome::default();
    out.checks.push(Check::with_value("verified pairs stay ordered", suite.passed, suite.verified as f64));
    let radii = &cfg.compare.radii;
    let mu2 = solve_exponents(&pp)?.mu2;
    let (lo, hi) = (radii[0] / 10.0, 5.0 * radii[radii.len() - 1]);
    let pts = (400.0 * (hi / lo).log10()).ceil() as usize;
    let u = RadialProfile::power(log_grid(lo, hi, pts)?, 1.0, mu2)?;
    let growth = exterior_growth_check(&pp, &u, &u, radii, cfg.variational.kappa)?;
    out.checks.push(Check::flag("exterior growth sequence decreasing", growth.decreasing && growth.certifies));
    out.results = json!({ "pairs": to_json(&suite), "growth": { "mu2": mu2, "report": to_json(&growth) } });
    Ok(out)
}
