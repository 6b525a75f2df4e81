//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the libtest
//! harness so the lines always reach the console and the timings are not
//! shared with other tests.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::thread;
use std::time::{Duration, Instant};

use anisolab::comparison::*;
use anisolab::gauge::*;
use anisolab::inequalities::*;
use anisolab::radial::*;
use anisolab::sampling;
use anisolab::spectrum::*;
use anisolab::variational::*;
use nalgebra::DMatrix;
use rand::Rng;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict { passed, detail: detail.into() }
}

fn quadratic_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| match (i as i64 - j as i64).abs() {
        0 => 1.0 + i as f64,
        1 => 0.3,
        _ => 0.0,
    })
}

fn builtin_specs(n: usize) -> Vec<GaugeSpec> {
    vec![
        GaugeSpec::Euclidean,
        GaugeSpec::EllQ { q: 3.0 },
        GaugeSpec::EllQ { q: 1.5 },
        GaugeSpec::Quadratic { matrix: quadratic_matrix(n) },
    ]
}

fn random_params<R: Rng>(rng: &mut R, p: Option<f64>, min_frac: f64) -> ProblemParams {
    let n = rng.random_range(2..=8usize);
    let p = p.unwrap_or_else(|| loop {
        let p = rng.random_range(1.1..(n as f64 - 0.1));
        if (p - 2.0).abs() > 1e-3 {
            break p;
        }
    });
    let c_h = hardy_constant(n, p).unwrap();
    ProblemParams::new(n, p, rng.random_range(min_frac..0.99) * c_h).unwrap()
}

fn c1_exponents() -> Verdict {
    let start = Instant::now();
    let mut rng = sampling::rng(1001);
    let mut worst_closed: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(3..=10usize);
        let pp = ProblemParams::new(n, 2.0, rng.random_range(0.0..0.999) * hardy_constant(n, 2.0).unwrap()).unwrap();
        let e = solve_exponents(&pp).unwrap();
        // μ² - (N-2)μ + γ = 0
        let b = n as f64 - 2.0;
        let disc = (b * b - 4.0 * pp.gamma).sqrt();
        let (r1, r2) = ((b - disc) / 2.0, (b + disc) / 2.0);
        worst_closed = worst_closed.max((e.mu1 - r1).abs()).max((e.mu2 - r2).abs());
    }
    let mut worst_res: f64 = 0.0;
    let mut ordered = true;
    for _ in 0..100 {
        let n = rng.random_range(2..=8usize);
        let p = loop {
            let p = rng.random_range(1.05..(n as f64 - 0.05));
            if (p - 2.0).abs() > 1e-3 {
                break p;
            }
        };
        let pp = ProblemParams::new(n, p, rng.random_range(0.0..0.999) * hardy_constant(n, p).unwrap()).unwrap();
        let e = solve_exponents(&pp).unwrap();
        ordered &= 0.0 <= e.mu1 && e.mu1 < pp.mu_crit() && pp.mu_crit() < e.mu2 && e.mu2 <= pp.mu_fund();
        worst_res = worst_res.max(e.res1).max(e.res2);
    }
    let el = start.elapsed();
    verdict(
        worst_closed <= 1e-10 && worst_res <= 1e-10 && ordered && el < Duration::from_secs(1),
        format!("closed-form gap {worst_closed:.1e}, residual {worst_res:.1e}, ordered {ordered}, {el:.2?}"),
    )
}

fn c2_identities() -> Verdict {
    let start = Instant::now();
    let jobs: Vec<_> = (2..=4)
        .flat_map(|n| builtin_specs(n).into_iter().map(move |s| (n, s)))
        .flat_map(|(n, s)| [(n, s.clone(), DualMode::Analytic), (n, s, DualMode::Numerical)])
        .collect();
    let results: Vec<(String, bool, f64)> = thread::scope(|sc| {
        let hs: Vec<_> = jobs
            .iter()
            .map(|(n, spec, mode)| {
                sc.spawn(move || {
                    let g = Gauge::new(spec.clone(), *n).unwrap().with_dual_mode(*mode).unwrap();
                    let tol = if *mode == DualMode::Analytic { 1e-8 } else { 1e-5 };
                    let rep = verify_identities(&g, 1000, 7, tol).unwrap();
                    let worst = rep.checks.iter().map(|c| c.max_rel_err).fold(0.0, f64::max);
                    (format!("{} N={n} {mode:?}", spec.label()), rep.passed, worst)
                })
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let el = start.elapsed();
    let failed: Vec<&String> = results.iter().filter(|r| !r.1).map(|r| &r.0).collect();
    let worst = |m: &str| results.iter().filter(|r| r.0.ends_with(m)).map(|r| r.2).fold(0.0, f64::max);
    verdict(
        failed.is_empty() && el < Duration::from_secs(10),
        format!(
            "{} gauge/mode runs, worst analytic {:.1e}, worst numerical {:.1e}, failed {failed:?}, {el:.2?}",
            results.len(),
            worst("Analytic"),
            worst("Numerical")
        ),
    )
}

fn c3_divergence() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    let mut count = 0;
    for n in [2, 3, 4] {
        for spec in builtin_specs(n) {
            let g = Gauge::new(spec, n).unwrap();
            let r = divergence_identity_check(&g, 100, 1e-4, 11, 1e-3).unwrap();
            ok &= r.passed && r.samples == 100;
            worst = worst.max(r.max_rel_err);
            count += 1;
        }
    }
    verdict(ok, format!("{count} gauges (incl. ell_q and quadratic), worst relative error {worst:.1e}"))
}

fn c4_power_residuals() -> Verdict {
    let mut rng = sampling::rng(1004);
    let grid = log_grid(1e-4, 1e4, 2048).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let pp = random_params(&mut rng, None, 0.01);
        let e = solve_exponents(&pp).unwrap();
        let c = 10f64.powf(rng.random_range(-1.0..1.0));
        for mu in [e.mu1, e.mu2] {
            let prof = RadialProfile::power(grid.clone(), c, mu).unwrap();
            let r = residual_report(&pp, &prof, &vec![0.0; prof.len()]).unwrap();
            worst = worst.max(r.max_rel);
        }
    }
    verdict(worst <= 1e-8, format!("worst relative residual {worst:.1e} over 20 parameter sets, both branches"))
}

fn c5_supersolutions() -> Verdict {
    let mut rng = sampling::rng(1005);
    let mut ok = true;
    let mut min_ratio = f64::INFINITY;
    let mut max_delta: f64 = 0.0;
    for branch in [Branch::Origin, Branch::Infinity] {
        for _ in 0..20 {
            let pp = random_params(&mut rng, None, 0.01);
            let a = 10f64.powf(rng.random_range(-1.0..1.0));
            let alpha = match branch {
                Branch::Origin => pp.p - rng.random_range(0.01..1.99),
                Branch::Infinity => pp.p + rng.random_range(0.01..1.99),
            };
            let sp = match supersolution_params(&pp, a, alpha, branch) {
                Ok(sp) => sp,
                Err(_) => {
                    ok = false;
                    continue;
                }
            };
            let chk = check_g_bound(&pp, &sp, 200);
            ok &= chk.passed && sp.delta <= 0.5 && sp.epsilon == (pp.p - alpha).abs() / 2.0;
            min_ratio = min_ratio.min(chk.min_ratio);
            max_delta = max_delta.max(sp.delta);
        }
    }
    verdict(ok, format!("40 syntheses, min g·t^α/A {min_ratio:.4}, max δ {max_delta}"))
}

fn c6_inequalities() -> Verdict {
    let start = Instant::now();
    let n = 10_000;
    let mut reports: Vec<InequalityReport> = vec![];
    let mut stability: f64 = 0.0;
    let gauges = [Gauge::euclidean(3).unwrap(), Gauge::new(GaugeSpec::Quadratic { matrix: quadratic_matrix(3) }, 3).unwrap()];
    for g in &gauges {
        for p in [1.5, 2.0, 3.0] {
            reports.push(check_vector_monotonicity(g, p, n, 1).unwrap());
            let c = if p >= 2.0 {
                reports.push(check_convexity_p_ge_2(g, p, n, 2).unwrap());
                (convexity_constant_p_ge_2(p), ConstantSource::ClosedForm)
            } else {
                let grid = OracleGrid::convexity_default(3);
                let o = oracle_convexity_constant(g, p, grid).unwrap();
                let o4 = oracle_convexity_constant(g, p, grid.refined(4)).unwrap();
                stability = stability.max(oracle_change(&o, &o4));
                reports.push(check_convexity_p_lt_2(g, p, &o, n, 2).unwrap());
                (o.constant, ConstantSource::Oracle)
            };
            reports.push(check_log_pointwise(g, p, c.0, c.1, n, 5).unwrap());
        }
    }
    for (p, d) in [(1.5, 0.1), (2.0, 0.1), (3.0, 0.05)] {
        let grid = OracleGrid::power_split_default();
        let o = oracle_power_split_constant(p, d, grid).unwrap();
        let o4 = oracle_power_split_constant(p, d, grid.refined(4)).unwrap();
        stability = stability.max(oracle_change(&o, &o4));
        reports.push(check_power_split(p, d, &o, n, 4).unwrap());
    }
    let el = start.elapsed();
    let violations: usize = reports.iter().map(|r| r.violations).sum();
    // ℓ^q is reported on its own: the p ≥ 2 convexity constant needs an inner-product norm
    let ell = Gauge::new(GaugeSpec::EllQ { q: 3.0 }, 3).unwrap();
    let ell_v = check_convexity_p_ge_2(&ell, 2.0, n, 2).unwrap().violations;
    println!("  note: ell_q(q=3) convexity p=2 has {ell_v}/{n} violations (not part of the criterion)");
    verdict(
        violations == 0 && stability < 0.01 && el < Duration::from_secs(60),
        format!("{} reports x {n} samples, {violations} violations, oracle change {stability:.1e}, {el:.2?}", reports.len()),
    )
}

fn c7_hardy() -> Verdict {
    let mut rng = sampling::rng(1007);
    let grid = log_grid(1e-4, 1e4, 2048).unwrap();
    let mut below = 0;
    let mut min_ratio = f64::INFINITY;
    let params: Vec<ProblemParams> =
        [(3, 2.0), (4, 1.5), (5, 3.0), (6, 2.5)].iter().map(|&(n, p)| ProblemParams::new(n, p, 0.0).unwrap()).collect();
    for k in 0..1000 {
        let pp = &params[k % params.len()];
        let prof = random_smooth_profile(grid.clone(), &mut rng).unwrap();
        let q = hardy_quotient(pp, &prof, 1.0).unwrap();
        min_ratio = min_ratio.min(q / pp.c_h());
        if q < pp.c_h() {
            below += 1;
        }
    }
    let mut worst_excess: f64 = 0.0;
    for pp in &params {
        let q = hardy_quotient(pp, &near_extremal_profile(pp, 16.0, 8192).unwrap(), 1.0).unwrap();
        worst_excess = worst_excess.max(q / pp.c_h() - 1.0);
    }
    verdict(
        below == 0 && worst_excess <= 0.05,
        format!("1000 profiles, min quotient/C_H {min_ratio:.4}; near-extremal excess {:.2}%", 100.0 * worst_excess),
    )
}

fn c8_variational() -> Verdict {
    let start = Instant::now();
    let pp = ProblemParams::new(4, 2.0, 0.0).unwrap();
    let setup = QuotientSetup::default_for(&pp, PI * PI / 2.0).unwrap();
    let r = minimize_quotient(&setup, &Init::PowerTruncated, MinimizeOptions::default()).unwrap();
    let tv: Vec<f64> = setup.t.iter().map(|&t| talenti(&pp, t)).collect();
    let oracle = quotient_values(&setup, &tv).unwrap();
    let gap = (r.s_estimate / oracle - 1.0).abs();
    let c_h = hardy_constant(4, 2.0).unwrap();
    let gammas: Vec<f64> = (0..5).map(|k| 0.9 * c_h * k as f64 / 4.0).collect();
    let curve =
        s_gamma_curve(4, 2.0, 1.0, &gammas, DEFAULT_RANGE, DEFAULT_POINTS, &Init::Talenti, MinimizeOptions::default())
            .unwrap();
    let el = start.elapsed();
    let s: Vec<String> = curve.rows.iter().map(|r| format!("{:.4}", r.s)).collect();
    let converged = r.converged() && curve.rows.iter().all(|r| !r.flagged);
    verdict(
        gap <= 0.02 && curve.strictly_decreasing && curve.all_positive && converged && el < Duration::from_secs(300),
        format!("S = {:.6} vs Talenti {oracle:.6} ({gap:.1e}); S(γ) = [{}]; {el:.2?}", r.s_estimate, s.join(", ")),
    )
}

fn c9_decay() -> Verdict {
    let pp = ProblemParams::new(4, 2.0, 0.75).unwrap();
    let setup = QuotientSetup::default_for(&pp, 1.0).unwrap();
    let r = minimize_quotient(&setup, &Init::Talenti, MinimizeOptions::default()).unwrap();
    if !r.converged() {
        return verdict(false, format!("minimizer did not converge: {:?}", r.termination));
    }
    let a = minimizer_decay_audit(&r, &pp, None).unwrap();
    let exact = (a.targets.0 - 0.5).abs() < 1e-12 && (a.targets.1 - 1.5).abs() < 1e-12;
    verdict(
        a.passed && exact && a.tolerance == 0.05,
        format!(
            "exponents ({:.4}, {:.4}, {:.4}, {:.4}) vs (0.5, 1.5, 1.5, 2.5), errors ({:.2}%, {:.2}%, {:.2}%, {:.2}%)",
            a.inner.exponent,
            a.outer.exponent,
            a.inner_gradient.exponent,
            a.outer_gradient.exponent,
            100.0 * a.errors.0,
            100.0 * a.errors.1,
            100.0 * a.errors.2,
            100.0 * a.errors.3
        ),
    )
}

fn c10_liouville() -> Verdict {
    let mut ok = true;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (n, p, frac) in [(4, 2.0, 0.75), (3, 1.5, 0.4), (5, 3.0, 0.6), (6, 2.5, 0.2)] {
        let pp = ProblemParams::new(n, p, frac * hardy_constant(n, p).unwrap()).unwrap();
        for b in [Branch::Origin, Branch::Infinity] {
            let r = liouville_check(&pp, b, (0.1, 10.0), 1.0, 512).unwrap();
            ok &= r.passed && r.tolerance == 1e-6 && r.refinement.len() >= 3;
            let w = r.refinement.iter().map(|x| x.1).fold(r.deviation.max(r.widened_deviation), f64::max);
            worst = worst.max(w);
            count += 1;
        }
    }
    verdict(ok, format!("{count} cases, worst relative deviation {worst:.1e} (incl. 10x widening, 4x/16x refinement)"))
}

fn c11_comparison() -> Verdict {
    let mut ok = true;
    let (mut verified, mut total) = (0, 0);
    for (k, (n, p, frac)) in [(4, 2.0, 0.75), (3, 2.5, 0.4), (5, 1.7, 0.6), (6, 3.0, 0.3)].into_iter().enumerate() {
        let pp = ProblemParams::new(n, p, frac * hardy_constant(n, p).unwrap()).unwrap();
        let s = seeded_pair_suite(&pp, 100 + k as u64, 4, 1e-5).unwrap();
        ok &= s.passed;
        verified += s.verified;
        total += s.cases.len();
    }
    let radii = [10.0, 20.0, 40.0, 80.0];
    let mut slopes = vec![];
    for (n, p, frac) in [(4, 2.0, 0.75), (3, 1.5, 0.3), (5, 3.0, 0.8)] {
        let pp = ProblemParams::new(n, p, frac * hardy_constant(n, p).unwrap()).unwrap();
        let mu = solve_exponents(&pp).unwrap().mu2;
        let u = RadialProfile::power(log_grid(1.0, 400.0, 4000).unwrap(), 1.0, mu).unwrap();
        let g = exterior_growth_check(&pp, &u, &u, &radii, 1.0).unwrap();
        ok &= g.decreasing && g.certifies;
        slopes.push(format!("{:.3}", g.slope.unwrap()));
    }
    verdict(ok, format!("{verified}/{total} pairs verified, all ordered: {ok}; growth slopes [{}]", slopes.join(", ")))
}

const SUITE_CONFIG: &str = r#"
seed = 42

[params]
N = 4
p = 2.0
gamma = 0.75
gammas = [0.0, 0.225, 0.45, 0.675, 0.9]

[gauge]
variant = "quadratic"
dimension = 3
matrix = [[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 1.5]]
"#;

const SUITE: [&str; 9] =
    ["exponents", "gauge-check", "residual", "supersolution", "inequalities", "minimize", "sweep", "liouville", "compare"];

fn run_suite(out: &Path, config: &Path, jobs: &str) -> Result<(), String> {
    for cmd in SUITE {
        let o = Command::new(env!("CARGO_BIN_EXE_anisolab"))
            .args([cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", jobs])
            .env_remove("ANISOLAB_OUT")
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(format!("{cmd} exited with {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)));
        }
    }
    Ok(())
}

fn strip_volatile(text: &str) -> String {
    text.lines().filter(|l| !l.contains("\"timestamp\"") && !l.contains("\"date\"")).collect::<Vec<_>>().join("\n")
}

fn read_dir(dir: &Path) -> BTreeMap<String, String> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), strip_volatile(&std::fs::read_to_string(e.path()).unwrap()))
        })
        .collect()
}

fn c12_cli_determinism() -> Verdict {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("suite.toml");
    std::fs::write(&config, SUITE_CONFIG).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    if let Err(e) = run_suite(&a, &config, "4").and_then(|_| run_suite(&b, &config, "2")) {
        return verdict(false, e);
    }
    let el = start.elapsed();
    let (ra, rb) = (read_dir(&a), read_dir(&b));
    let same = ra == rb;
    let hashed = ra.keys().all(|k| k.split(['-', '.']).any(|part| part.len() == 12));
    verdict(
        same && hashed && ra.len() >= SUITE.len() && el < Duration::from_secs(600),
        format!("{} files per run, identical modulo timestamps: {same}, two runs in {el:.2?}", ra.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 12] = [
        ("exponent solver", c1_exponents),
        ("gauge identities", c2_identities),
        ("divergence identity", c3_divergence),
        ("exact-solution residual", c4_power_residuals),
        ("supersolution synthesis", c5_supersolutions),
        ("inequality suite", c6_inequalities),
        ("Hardy quotient", c7_hardy),
        ("variational minimization", c8_variational),
        ("decay audit", c9_decay),
        ("Liouville", c10_liouville),
        ("comparison", c11_comparison),
        ("CLI determinism", c12_cli_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|x| *x == id) {
            continue;
        }
        let v = f();
        let tag = if v.passed { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {tag}: {name}: {}", v.detail);
        if !v.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
