use anisolab::radial::*;
use anisolab::sampling;
use anisolab::spectrum::*;
use proptest::prelude::*;
use rand::Rng;

fn random_params<R: Rng>(rng: &mut R) -> ProblemParams {
    let n = rng.random_range(2..=8usize);
    let p = rng.random_range(1.1..(n as f64 - 0.1));
    let g = rng.random_range(0.0..0.99) * hardy_constant(n, p).unwrap();
    ProblemParams::new(n, p, g).unwrap()
}

fn grid() -> Vec<f64> {
    log_grid(1e-4, 1e4, 2048).unwrap()
}

#[test]
fn fundamental_solution_is_p_harmonic() {
    for (n, p) in [(3, 2.0), (4, 1.5), (5, 3.0), (6, 2.5)] {
        let pp = ProblemParams::new(n, p, 0.0).unwrap();
        let prof = RadialProfile::power(grid(), 1.0, pp.mu_fund()).unwrap();
        let r = residual_report(&pp, &prof, &vec![0.0; prof.len()]).unwrap();
        assert!(r.max_rel <= 1e-10, "{n} {p} {r:?}");
    }
}

#[test]
fn exact_power_solutions_both_branches() {
    let mut rng = sampling::rng(200);
    for _ in 0..20 {
        let pp = random_params(&mut rng);
        let e = solve_exponents(&pp).unwrap();
        let c = 10f64.powf(rng.random_range(-1.0..1.0));
        for mu in [e.mu1, e.mu2] {
            if mu == 0.0 {
                continue;
            }
            let prof = RadialProfile::power(grid(), c, mu).unwrap();
            let r = residual_report(&pp, &prof, &vec![0.0; prof.len()]).unwrap();
            assert!(r.max_rel <= 1e-8, "{pp:?} mu={mu} {r:?}");
            assert_eq!(r.floored_points, 0);
        }
    }
}

#[test]
fn operator_on_power_matches_characteristic() {
    // L[c t^{-μ}] = -c^{p-1} char(μ) t^{-μ(p-1)-p}
    let mut rng = sampling::rng(201);
    for _ in 0..50 {
        let pp = random_params(&mut rng);
        let mu = rng.random_range(0.05..3.0);
        let c = rng.random_range(0.5..2.0);
        let prof = RadialProfile::power(grid(), c, mu).unwrap();
        let op = radial_operator(&pp, &prof).unwrap();
        let ch = characteristic(&pp, mu).unwrap();
        for i in (0..prof.len()).step_by(97) {
            let t = prof.t()[i];
            let want = -c.powf(pp.p - 1.0) * ch * t.powf(-mu * (pp.p - 1.0) - pp.p);
            assert!((op.values[i] - want).abs() <= 1e-10 * op.magnitude[i], "{pp:?} mu={mu}");
        }
    }
}

#[test]
fn constant_profile_gives_potential_term() {
    let pp = ProblemParams::new(4, 1.5, 0.1).unwrap();
    let prof = RadialProfile::from_fn(grid(), |_| 3.0, |_| 0.0, |_| 0.0).unwrap();
    let op = radial_operator(&pp, &prof).unwrap();
    for (i, t) in prof.t().iter().enumerate() {
        assert_eq!(op.values[i], -0.1 * 3f64.powf(0.5) / t.powf(1.5));
    }
    assert_eq!(op.floored.len(), prof.len());
}

#[test]
fn operator_homogeneity() {
    let mut rng = sampling::rng(202);
    for _ in 0..20 {
        let pp = random_params(&mut rng);
        let prof = RadialProfile::from_fn(
            grid(),
            |t| 1.0 / (1.0 + t * t),
            |t| -2.0 * t / (1.0 + t * t).powi(2),
            |t| (6.0 * t * t - 2.0) / (1.0 + t * t).powi(3),
        )
        .unwrap();
        let lam: f64 = rng.random_range(0.1..10.0);
        let a = radial_operator(&pp, &prof).unwrap();
        let b = radial_operator(&pp, &prof.scaled(lam)).unwrap();
        let f = lam.powf(pp.p - 1.0);
        for i in 0..prof.len() {
            assert!((b.values[i] - f * a.values[i]).abs() <= 1e-10 * f * a.magnitude[i]);
        }
    }
}

#[test]
fn zero_profile_residual_rejected() {
    let pp = ProblemParams::new(4, 2.0, 0.0).unwrap();
    let g = log_grid(1.0, 2.0, 10).unwrap();
    let mut v = vec![1.0; 10];
    v[3] = 0.0;
    let prof = RadialProfile::from_values_nonnegative(g, v).unwrap();
    assert!(residual_report(&pp, &prof, &[0.0; 10]).is_err());
    let ok = RadialProfile::power(log_grid(1.0, 2.0, 10).unwrap(), 1.0, 1.0).unwrap();
    assert!(residual_report(&pp, &ok, &[0.0; 9]).is_err());
}

fn fd_residual(n: usize) -> f64 {
    // smooth non-solution; compare FD operator to the analytic one
    let pp = ProblemParams::new(4, 2.5, 0.2).unwrap();
    let g = log_grid(0.1, 10.0, n).unwrap();
    let v = |t: f64| (-t).exp() + 0.5;
    let fd = RadialProfile::from_values(g.clone(), g.iter().map(|&t| v(t)).collect()).unwrap();
    let an = RadialProfile::from_fn(g, v, |t| -(-t).exp(), |t| (-t).exp()).unwrap();
    let a = radial_operator(&pp, &an).unwrap();
    let b = radial_operator(&pp, &fd).unwrap();
    a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn finite_differences_converge_at_second_order() {
    let e1 = fd_residual(201);
    let e2 = fd_residual(401);
    let e3 = fd_residual(801);
    assert!(e1 / e2 >= 3.5 && e2 / e3 >= 3.5, "{e1} {e2} {e3}");
    assert!((e2 / e3).log2() >= 1.8);
}

#[test]
fn perturbed_power_fit() {
    let pp = ProblemParams::new(4, 2.0, 0.75).unwrap();
    let mu = solve_exponents(&pp).unwrap().mu1;
    let g = grid();
    let prof = RadialProfile::from_fn(
        g,
        |t| t.powf(-mu) * (1.0 + 0.01 * t.ln().sin()),
        |t| t.powf(-mu - 1.0) * (-mu * (1.0 + 0.01 * t.ln().sin()) + 0.01 * t.ln().cos()),
        |_| 0.0,
    )
    .unwrap();
    let (inner, outer) = prof.default_windows();
    for w in [inner, outer] {
        let f = decay_fit(&prof, w).unwrap();
        assert!((f.exponent - mu).abs() <= 0.02, "{f:?}");
    }
}

#[test]
fn localized_norm_exponent() {
    for (n, p, g) in [(4, 2.0, 0.75), (5, 3.0, 0.2), (3, 1.5, 0.01)] {
        let pp = ProblemParams::new(n, p, g).unwrap();
        let mu = solve_exponents(&pp).unwrap().mu1;
        let prof = RadialProfile::power(log_grid(1e-8, 1.0, 2048).unwrap(), 1.0, mu).unwrap();
        let radii: Vec<f64> = (0..8).map(|k| 1e-4 * 2f64.powi(k)).collect();
        let curve = localized_norm_curve(&pp, &prof, &radii, 1.0, Region::Ball).unwrap();
        let (slope, _) = norm_curve_slope(&curve).unwrap();
        let sigma = (pp.dim() - mu * pp.p_star()) / pp.p_star();
        assert!(sigma > 0.0);
        assert!((slope - sigma).abs() <= 0.02 * sigma, "{slope} {sigma}");
        // closed-form oracle for each radius, missing only the (0, t_min) piece
        for (r, val) in &curve {
            let e = pp.dim() - mu * pp.p_star();
            let exact = (pp.dim() * (r.powf(e) - 1e-8f64.powf(e)) / e).powf(1.0 / pp.p_star());
            assert!((val - exact).abs() <= 1e-4 * exact);
        }
    }
}

#[test]
fn localized_norm_complement_decay() {
    let pp = ProblemParams::new(4, 2.0, 0.75).unwrap();
    let mu = solve_exponents(&pp).unwrap().mu2;
    let prof = RadialProfile::power(log_grid(1.0, 1e8, 2048).unwrap(), 1.0, mu).unwrap();
    let radii: Vec<f64> = (0..8).map(|k| 10.0 * 2f64.powi(k)).collect();
    let curve = localized_norm_curve(&pp, &prof, &radii, 1.0, Region::Complement).unwrap();
    let (slope, _) = norm_curve_slope(&curve).unwrap();
    let sigma2 = (mu * pp.p_star() - pp.dim()) / pp.p_star();
    assert!((-slope - sigma2).abs() <= 0.02 * sigma2, "{slope} {sigma2}");
}

#[test]
fn norm_curve_constant_for_support_away_from_origin() {
    let pp = ProblemParams::new(3, 2.0, 0.0).unwrap();
    let g = log_grid(1e-3, 10.0, 400).unwrap();
    let v: Vec<f64> = g.iter().map(|&t| if t > 1.0 { (t - 1.0).powi(2) * (-t).exp() } else { 0.0 }).collect();
    let prof = RadialProfile::from_values_nonnegative(g, v).unwrap();
    let curve = localized_norm_curve(&pp, &prof, &[0.01, 0.1, 0.5], 1.0, Region::Ball).unwrap();
    assert!(curve.iter().all(|c| c.1 == 0.0));
    let outer = localized_norm_curve(&pp, &prof, &[0.01, 0.1, 0.5], 1.0, Region::Complement).unwrap();
    assert!(outer[0].1 > 0.0 && outer[0].1 == outer[2].1);
    assert!(localized_norm_curve(&pp, &prof, &[20.0], 1.0, Region::Ball).is_err());
}

proptest! {
    #[test]
    fn fit_is_exact_on_power_laws(c in 0.01f64..100.0, mu in -3.0f64..3.0) {
        let prof = RadialProfile::power(log_grid(1e-3, 1e3, 300).unwrap(), c, mu).unwrap();
        let f = decay_fit(&prof, (1e-2, 1e2)).unwrap();
        prop_assert!((f.exponent - mu).abs() <= 1e-12 * (1.0 + mu.abs()));
        prop_assert!((f.amplitude - c).abs() <= 1e-10 * c);
        prop_assert!(f.r_squared >= 1.0 - 1e-12);
    }
}
