use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use proptest::prelude::*;

use crgen_core::binomial_tails::{
    binary_entropy, binomial_cdf, binomial_cdf_exact, biased_point_mass_lb, choose_exact, correlated_weight_pmf, ln_choose,
};
use crgen_core::bounds::{interactive_lb, lsh_exponents, nu_correlated, nu_list, rho_bar, CrBoundQuery};
use crgen_core::gaussian_tails::{
    mills_ratio, mills_sandwich, normal_pdf, orthant_probability, q_inverse, q_tail, sheppard_disagreement, TailParams,
};
use crgen_core::sources::sample_bgs;
use crgen_core::Samples;

fn rational_cdf(n: u32, num: u32, den: u32, r: u32) -> f64 {
    let p = BigRational::new(BigInt::from(num), BigInt::from(den));
    let q = BigRational::one() - &p;
    let mut total = BigRational::zero();
    for i in 0..=r {
        let c = BigRational::from_integer(BigInt::from(choose_exact(n, i)));
        let mut term = c;
        for _ in 0..i {
            term *= &p;
        }
        for _ in i..n {
            term *= &q;
        }
        total += term;
    }
    total.to_f64().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn mills_sandwich_holds(t in 1e-6f64..10.0) {
        let lam = mills_ratio(t).unwrap();
        let (lo, hi) = mills_sandwich(t);
        prop_assert!(lo <= lam * (1.0 + 1e-12) && lam <= hi * (1.0 + 1e-12));
    }

    #[test]
    fn mills_is_density_over_tail(t in 0.0f64..30.0) {
        let direct = normal_pdf(t) / q_tail(t).unwrap();
        prop_assert!((mills_ratio(t).unwrap() / direct - 1.0).abs() < 1e-10);
    }

    #[test]
    fn q_inverse_round_trip(e in -600.0f64..-0.01) {
        let p = e.exp();
        let t = q_inverse(p).unwrap();
        prop_assert!((q_tail(t).unwrap() / p - 1.0).abs() < 1e-10);
    }

    #[test]
    fn q_tail_symmetry(t in -37.0f64..37.0) {
        let s = q_tail(t).unwrap() + q_tail(-t).unwrap();
        prop_assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn q_power_and_ratio_monotone(t in 0.1f64..9.9, dt in 1e-3f64..0.1, a in 0.05f64..0.95) {
        let (t1, t2) = (t, t + dt);
        let pw = |x: f64| q_tail(x).unwrap().powf(1.0 / (x * x));
        prop_assert!(pw(t1) <= pw(t2) * (1.0 + 1e-12));
        let ratio = |x: f64| q_tail(a * x).unwrap() / q_tail(x).unwrap();
        prop_assert!(ratio(t1) <= ratio(t2) * (1.0 + 1e-12));
    }

    #[test]
    fn q_delta_sandwich(t in 0.0f64..8.0, delta in 0.0f64..=1.0) {
        let (qt, qd) = (q_tail(t).unwrap(), q_tail(delta * t).unwrap());
        prop_assert!(qt <= qd * (1.0 + 1e-12));
        prop_assert!(qd <= qt.powf(delta * delta) * (1.0 + 1e-12));
    }

    #[test]
    fn orthant_lower_bound(t in 0.0f64..6.0, rho in 0.0f64..0.99, frac in 0.0f64..=1.0) {
        let max_delta = ((1.0 - rho) / (1.0 + rho)).sqrt();
        let p = TailParams::new(t, rho, frac * max_delta).unwrap();
        let l = p.orthant();
        prop_assert!(l >= q_tail(t).unwrap() * q_tail(p.delta * t).unwrap() * (1.0 - 1e-10));
        prop_assert!(l <= q_tail(t).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn sheppard_matches_orthants(rho in -0.99f64..0.99) {
        // Pr[sign differs] = 2·Pr[X > 0, Y < 0] = 2·(1/2 − L(0, ·; ρ)).
        let l = orthant_probability(0.0, 0.0, rho).unwrap();
        prop_assert!((sheppard_disagreement(rho).unwrap() - (1.0 - 2.0 * l)).abs() < 1e-12);
    }

    #[test]
    fn exact_cdf_matches_rationals(n in 1u32..=64, num in 0u32..=1024, frac in 0.0f64..=1.0) {
        let r = (frac * f64::from(n)) as u32;
        let p = f64::from(num) / 1024.0;
        let want = rational_cdf(n, num, 1024, r);
        let got = binomial_cdf_exact(n, p, r).unwrap();
        prop_assert!((got - want).abs() <= 1e-13 * want.max(1e-300) + 1e-300, "{got} vs {want}");
        let log_space = binomial_cdf(u64::from(n), p, u64::from(r)).unwrap();
        prop_assert!((log_space - want).abs() <= 1e-11 * want + 1e-300, "{log_space} vs {want}");
    }

    #[test]
    fn ln_choose_matches_integers(n in 0u32..=64, frac in 0.0f64..=1.0) {
        let k = (frac * f64::from(n)) as u32;
        let exact = (choose_exact(n, k) as f64).ln();
        prop_assert!((ln_choose(u64::from(n), u64::from(k)) - exact).abs() <= 1e-12 * exact.max(1.0));
    }

    #[test]
    fn weight_table_marginals(n in 1usize..=24, rho in -1.0f64..=1.0) {
        let table = correlated_weight_pmf(n, rho).unwrap();
        for a in 0..=n {
            let want = choose_exact(n as u32, a as u32) as f64 / 2f64.powi(n as i32);
            prop_assert!((table.row_sum(a) - want).abs() < 1e-14);
            prop_assert!((table.col_sum(a) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn point_mass_bound_is_symmetric(m in 10u64..2000, eps in 0.05f64..0.5, alpha in 0.0f64..0.04) {
        let plus = biased_point_mass_lb(m, eps, alpha, 0.3);
        let minus = biased_point_mass_lb(m, eps, -alpha, 0.3);
        if let (Ok(a), Ok(b)) = (plus, minus) {
            prop_assert!((a.lower_bound - b.lower_bound).abs() <= 1e-15 * a.lower_bound);
        }
    }

    #[test]
    fn nu_nonnegative_and_increasing_in_eps(eps in 0.01f64..0.49, step in 0.001f64..0.01, ep in 0.001f64..0.2, alpha in 0.2f64..=1.0) {
        let q1 = CrBoundQuery::new(eps, ep, alpha, 64).unwrap();
        let q2 = CrBoundQuery::new(eps + step, ep, alpha, 64).unwrap();
        if let (Ok(a), Ok(b)) = (nu_correlated(&q1), nu_correlated(&q2)) {
            prop_assert!(a >= 0.0);
            prop_assert!(b >= a * (1.0 - 1e-12), "nu should grow with eps: {a} -> {b}");
        }
    }

    #[test]
    fn interactive_relation(eps in 0.05f64..=0.5, k in 10u64..5000, gamma in 1e-6f64..=1.0, slack in 0.0f64..10.0) {
        if let Ok(nu) = nu_list(eps, k, 1) {
            let lb = interactive_lb(eps, k, 1, gamma, slack).unwrap();
            let want = nu * k as f64 / 2.0 - 1.5 * (1.0 / gamma).log2() - slack;
            prop_assert!((lb - want).abs() <= 1e-9 * want.abs().max(1.0));
        }
    }

    #[test]
    fn rho_bar_in_unit_interval(p2 in 0.001f64..0.9, gap in 0.001f64..0.09) {
        let p1 = p2 + gap;
        let r = rho_bar(p1, p2).unwrap();
        prop_assert!(r > 0.0 && r < 1.0);
    }
}

#[test]
fn nu_grows_with_noise() {
    let nus: Vec<f64> = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5]
        .iter()
        .map(|&e| nu_correlated(&CrBoundQuery::new(e, 0.01, 1.0, 100).unwrap()).unwrap())
        .collect();
    assert!(nus.windows(2).all(|w| w[1] > w[0]), "{nus:?}");
    let direct = 1.0 - binary_entropy(0.01).unwrap();
    assert!((nus[5] - direct).abs() < 1e-15);
}

#[test]
fn lsh_ratio_bounds() {
    for i in 1..1000 {
        let (f0, fcr) = lsh_exponents(f64::from(i) / 1000.0).unwrap();
        let ratio = f0 / fcr;
        assert!(ratio > 1.0 && ratio < 1.0 / std::f64::consts::LN_2);
    }
}

#[test]
fn orthant_matches_monte_carlo() {
    let n = 400_000;
    for (i, &(t, phi, rho)) in [(0.0, 0.0, 0.5), (1.0, 0.8, 0.5), (1.5, 0.6, 0.8), (0.5, 1.0, 0.0), (2.0, 0.7, 0.3)].iter().enumerate() {
        let pair = sample_bgs(rho, n, 500 + i as u64).unwrap();
        let (Samples::Real(x), Samples::Real(y)) = (&pair.x, &pair.y) else { unreachable!() };
        let hits = x.iter().zip(y).filter(|(a, b)| **a > t && **b > phi * t).count();
        let p = orthant_probability(t, phi, rho).unwrap();
        let emp = hits as f64 / n as f64;
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((emp - p).abs() <= 4.0 * sd, "L({t},{phi};{rho}) = {p}, empirical {emp}");
    }
}
