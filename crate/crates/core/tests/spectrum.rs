use anisolab::sampling;
use anisolab::spectrum::*;
use anisolab::Error;
use proptest::prelude::*;
use rand::Rng;

fn random_params<R: Rng>(rng: &mut R, p_fixed: Option<f64>, gamma_zero: bool) -> ProblemParams {
    let n = rng.random_range(2..=8usize);
    let p = p_fixed.unwrap_or_else(|| rng.random_range(1.05..(n as f64 - 0.05)));
    let c_h = hardy_constant(n, p).unwrap();
    let gamma = if gamma_zero { 0.0 } else { rng.random_range(0.0..0.999) * c_h };
    ProblemParams::new(n, p, gamma).unwrap()
}

/// Independent root oracle: scan a fine uniform grid for sign changes of the
/// characteristic written as μ^{p-2}[(p-1)μ² - (N-p)μ] + γ, then refine each by
/// regula falsi.
fn sign_change_roots(pp: &ProblemParams) -> Vec<f64> {
    let f = |mu: f64| {
        if mu == 0.0 {
            return pp.gamma;
        }
        mu.powf(pp.p - 2.0) * ((pp.p - 1.0) * mu * mu - (pp.dim() - pp.p) * mu) + pp.gamma
    };
    let top = pp.mu_fund() * 1.001;
    let m = 200_000;
    let mut roots = vec![];
    for k in 0..m {
        let (mut a, mut b) = (top * k as f64 / m as f64, top * (k + 1) as f64 / m as f64);
        let (mut fa, mut fb) = (f(a), f(b));
        if fa == 0.0 {
            roots.push(a);
            continue;
        }
        if fa * fb < 0.0 {
            for _ in 0..200 {
                let c = b - fb * (b - a) / (fb - fa);
                let fc = f(c);
                if fc * fa < 0.0 {
                    b = c;
                    fb = fc;
                } else {
                    a = c;
                    fa = fc;
                }
            }
            roots.push(if fa.abs() < fb.abs() { a } else { b });
        }
    }
    roots
}

#[test]
fn p2_matches_quadratic_formula() {
    let mut rng = sampling::rng(100);
    for _ in 0..100 {
        let n = rng.random_range(3..=10usize);
        let pp = ProblemParams::new(n, 2.0, rng.random_range(0.0..0.999) * hardy_constant(n, 2.0).unwrap())
            .unwrap();
        let e = solve_exponents(&pp).unwrap();
        let b = n as f64 - 2.0;
        let disc = (b * b - 4.0 * pp.gamma).sqrt();
        assert!((e.mu1 - (b - disc) / 2.0).abs() <= 1e-10, "{pp:?} {e:?}");
        assert!((e.mu2 - (b + disc) / 2.0).abs() <= 1e-10, "{pp:?} {e:?}");
    }
}

#[test]
fn n5_p3_gamma02_against_sign_change_oracle() {
    let pp = ProblemParams::new(5, 3.0, 0.2).unwrap();
    let e = solve_exponents(&pp).unwrap();
    let roots = sign_change_roots(&pp);
    assert_eq!(roots.len(), 2);
    assert!(e.mu1 > 0.0 && e.mu1 < 2.0 / 3.0 && e.mu2 > 2.0 / 3.0 && e.mu2 < 1.0);
    assert!((e.mu1 - roots[0]).abs() < 1e-9 && (e.mu2 - roots[1]).abs() < 1e-9);
    assert!(e.res1 <= 1e-10 && e.res2 <= 1e-10);
}

#[test]
fn random_params_against_sign_change_oracle() {
    let mut rng = sampling::rng(101);
    for _ in 0..20 {
        let pp = random_params(&mut rng, None, false);
        if pp.gamma < 1e-6 {
            continue;
        }
        let e = solve_exponents(&pp).unwrap();
        let roots = sign_change_roots(&pp);
        assert_eq!(roots.len(), 2, "{pp:?}");
        assert!((e.mu1 - roots[0]).abs() < 1e-8, "{pp:?} {e:?} {roots:?}");
        assert!((e.mu2 - roots[1]).abs() < 1e-8, "{pp:?} {e:?} {roots:?}");
    }
}

#[test]
fn root_ordering_and_residuals() {
    let mut rng = sampling::rng(102);
    for k in 0..1000 {
        let pp = random_params(&mut rng, None, k % 10 == 0);
        let e = solve_exponents(&pp).unwrap();
        assert!(0.0 <= e.mu1 && e.mu1 < pp.mu_crit() && pp.mu_crit() < e.mu2 && e.mu2 <= pp.mu_fund(), "{pp:?} {e:?}");
        assert_eq!(e.mu1 == 0.0, pp.gamma == 0.0);
        assert!(e.res1 <= 1e-10 && e.res2 <= 1e-10, "{pp:?} {e:?}");
        assert!(characteristic(&pp, e.mu1).unwrap().abs() <= 1e-10);
    }
}

#[test]
fn continuity_in_gamma() {
    for (n, p) in [(4, 2.0), (5, 3.0), (3, 1.5), (6, 2.5)] {
        let c_h = hardy_constant(n, p).unwrap();
        let mut prev = (0.0f64, f64::INFINITY);
        for k in 0..=50 {
            let g = c_h * k as f64 / 51.0;
            let e = solve_exponents(&ProblemParams::new(n, p, g).unwrap()).unwrap();
            assert!(e.mu1 >= prev.0 && e.mu2 <= prev.1);
            prev = (e.mu1, e.mu2);
        }
        let pp = ProblemParams::new(n, p, c_h * (1.0 - 1e-6)).unwrap();
        let e = solve_exponents(&pp).unwrap();
        assert!((e.mu1 - pp.mu_crit()).abs() < 1e-2 && (e.mu2 - pp.mu_crit()).abs() < 1e-2);
    }
}

#[test]
fn gamma_at_hardy_constant_rejected() {
    assert!(matches!(ProblemParams::new(4, 2.0, 1.0), Err(Error::InvalidParams(_))));
}

#[test]
fn slope_closed_form_matches_differences() {
    let mut rng = sampling::rng(103);
    for _ in 0..200 {
        let pp = random_params(&mut rng, None, false);
        if pp.gamma == 0.0 {
            continue;
        }
        let e = solve_exponents(&pp).unwrap();
        for (mu, eps) in [(e.mu1, 0.3), (e.mu2, -0.3)] {
            let h = 1e-5 * (mu / (mu - eps).abs()).min(1.0);
            let fd = (h_tilde(&pp, mu, eps, h) - h_tilde(&pp, mu, eps, -h)) / (2.0 * h);
            let an = h_tilde_slope(&pp, mu, eps);
            assert!((fd - an).abs() <= 1e-6 * (1.0 + an.abs()), "{pp:?} {fd} {an}");
            assert!(an > 0.0, "{pp:?} mu={mu} {an}");
        }
    }
}

/// `(−Δ_p v − γ v^{p−1}/t^p) / v^{p−1}` from closed-form `v', v''` of
/// `v = (1 − δ t^e) t^{−μ}`, an oracle independent of the `h` algebra.
fn g_from_operator(pp: &ProblemParams, mu: f64, delta: f64, e: f64, t: f64) -> f64 {
    let p = pp.p;
    let v = (1.0 - delta * t.powf(e)) * t.powf(-mu);
    let s = -mu * t.powf(-mu - 1.0) + delta * (mu - e) * t.powf(e - mu - 1.0);
    let ds = mu * (mu + 1.0) * t.powf(-mu - 2.0) - delta * (mu - e) * (mu - e + 1.0) * t.powf(e - mu - 2.0);
    let lap = -(p - 1.0) * s.abs().powf(p - 2.0) * ds - (pp.dim() - 1.0) * s.abs().powf(p - 2.0) * s / t;
    (lap - pp.gamma * v.powf(p - 1.0) / t.powf(p)) / v.powf(p - 1.0)
}

#[test]
fn g_profile_matches_operator_oracle() {
    let mut rng = sampling::rng(104);
    for _ in 0..100 {
        let pp = random_params(&mut rng, None, false);
        let e = solve_exponents(&pp).unwrap();
        for (mu, ex) in [(e.mu1, 0.4), (e.mu2, -0.4), (0.7 * e.mu2, 0.2)] {
            let t: f64 = 10f64.powf(rng.random_range(-3.0..3.0));
            let delta = if ex > 0.0 { 0.5 * t.powf(-ex).min(1.0) } else { 0.5 * t.powf(-ex).min(1.0) };
            let a = g_profile(&pp, mu, delta, ex, t);
            let b = g_from_operator(&pp, mu, delta, ex, t);
            let scale = a.abs().max(b.abs()).max(t.powf(-pp.p));
            assert!((a - b).abs() <= 1e-8 * scale, "{pp:?} mu={mu} t={t} {a} {b}");
        }
    }
}

#[test]
fn supersolutions_both_branches() {
    let mut rng = sampling::rng(105);
    for branch in [Branch::Origin, Branch::Infinity] {
        let mut done = 0;
        while done < 20 {
            let pp = random_params(&mut rng, None, false);
            if pp.gamma < 1e-3 * pp.c_h() {
                continue;
            }
            let a = 10f64.powf(rng.random_range(-1.0..1.0));
            let alpha = match branch {
                Branch::Origin => pp.p - rng.random_range(0.01..1.99),
                Branch::Infinity => pp.p + rng.random_range(0.01..1.99),
            };
            let sp = supersolution_params(&pp, a, alpha, branch).unwrap();
            let want_eps = match branch {
                Branch::Origin => (pp.p - alpha) / 2.0,
                Branch::Infinity => (alpha - pp.p) / 2.0,
            };
            assert_eq!(sp.epsilon, want_eps);
            assert!(sp.delta <= 0.5 && sp.delta > 0.0);
            match branch {
                Branch::Origin => assert!(sp.r <= 1.0),
                Branch::Infinity => assert!(sp.r >= 1.0),
            }
            let chk = check_g_bound(&pp, &sp, 200);
            assert!(chk.passed, "{pp:?} {sp:?} {chk:?}");
            // the bound again, through the operator oracle
            for k in 0..200 {
                let f = 8.0 * (1.0 - k as f64 / 200.0);
                let t = match branch {
                    Branch::Origin => sp.r * 10f64.powf(-f),
                    Branch::Infinity => sp.r * 10f64.powf(f),
                };
                if !(1e-30..1e30).contains(&t) {
                    continue;
                }
                let g = g_from_operator(&pp, sp.mu, sp.delta, sp.signed_exponent(), t);
                assert!(g >= a * t.powf(-alpha) * (1.0 - 1e-9), "{pp:?} {sp:?} t={t} g={g} bound={} h={}", a * t.powf(-alpha), sp.g(&pp, t));
            }
            let an = h_tilde_slope(&pp, sp.mu, sp.signed_exponent());
            assert!((sp.h_prime0 - an).abs() <= 1e-6 * an, "{} {an}", sp.h_prime0);
            done += 1;
        }
    }
}

#[test]
fn gamma_zero_p2_supersolution() {
    let pp = ProblemParams::new(4, 2.0, 0.0).unwrap();
    let sp = supersolution_params(&pp, 2.0, 1.0, Branch::Origin).unwrap();
    assert!(check_g_bound(&pp, &sp, 200).passed);
}

#[test]
fn gamma_zero_p_ne_2_is_degenerate() {
    let pp = ProblemParams::new(4, 3.0, 0.0).unwrap();
    assert!(matches!(
        supersolution_params(&pp, 1.0, 2.0, Branch::Origin),
        Err(Error::InternalConsistency(_))
    ));
}

proptest! {
    #[test]
    fn characteristic_vanishes_at_both_roots(n in 2usize..9, pf in 0.02f64..0.98, gf in 0.0f64..0.999) {
        let p = 1.0 + pf * (n as f64 - 1.0);
        let pp = ProblemParams::new(n, p, gf * hardy_constant(n, p).unwrap()).unwrap();
        let e = solve_exponents(&pp).unwrap();
        prop_assert!(characteristic(&pp, e.mu1).unwrap().abs() <= 1e-10);
        prop_assert!(characteristic(&pp, e.mu2).unwrap().abs() <= 1e-10);
    }

    #[test]
    fn origin_supersolution_positive_factor(n in 3usize..7, gf in 0.05f64..0.95, af in 0.05f64..0.95) {
        let pp = ProblemParams::new(n, 2.0, gf * hardy_constant(n, 2.0).unwrap()).unwrap();
        let sp = supersolution_params(&pp, 1.0, 2.0 - 2.0 * af, Branch::Origin).unwrap();
        let chk = check_g_bound(&pp, &sp, 64);
        prop_assert!(chk.min_one_minus_s > 0.0);
    }
}
