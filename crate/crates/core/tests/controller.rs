use proptest::prelude::*;
use rateless_nca::channel::{ComplexGain, ConditionalLaw, Quadrature};
use rateless_nca::controller::*;
use rateless_nca::engine::ExperimentConfig;
use rateless_nca::utility::{rate_control, Utility};

fn params() -> NcaParams {
    ExperimentConfig::default().nca_params().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rate_control_matches_grid(q in 0.0f64..6000.0, v_exp in 2.0f64..5.0, k in 1.0f64..200.0) {
        let v = 10f64.powf(v_exp) * k;
        let u = Utility::Log { scale: k };
        let d = 8.0 * k;
        let x = rate_control(q, v, &u, d);
        let obj = |x: f64| v * u.value(x) - x * x - 2.0 * q * x;
        let n = 20_000;
        let best = (0..=n).map(|j| d * j as f64 / n as f64).fold((0.0, f64::MIN), |b, x| {
            let f = obj(x);
            if f > b.1 { (x, f) } else { b }
        });
        prop_assert!((x - best.0).abs() <= 1e-3 * d);
        prop_assert!(q + x <= v / (2.0 * k) || x == 0.0);
    }

    #[test]
    fn power_is_optimal_and_supported(
        re in -2.0f64..2.0, im in -2.0f64..2.0, rho in 0.0f64..=1.0,
        q in 0.0f64..5000.0, z in 0.0f64..10000.0,
    ) {
        let p = params();
        let rule = Quadrature::default_rule();
        let law = ConditionalLaw::new(ComplexGain::new(re, im), rho);
        let c = power_for_user(q, z, &law, &p, rule);
        prop_assert!((0.0..=p.p_peak).contains(&c.power));
        let obj = |pw: f64| q * p.k * law.expected_mi(pw, p.i_max, rule) - z * pw;
        let grid = (0..=400).map(|j| obj(p.p_peak * j as f64 / 400.0)).fold(f64::MIN, f64::max);
        prop_assert!(obj(c.power) >= grid - 1e-6 * grid.abs().max(1e-12));
    }
}

#[test]
fn larger_backlog_wins_with_identical_channels() {
    let p = params();
    let rule = Quadrature::default_rule();
    let law = ConditionalLaw::new(ComplexGain::new(0.8, 0.5), 0.8);
    let z = 200.0;
    for (q1, q2) in [(400.0, 300.0), (2000.0, 1999.0), (50.0, 0.0)] {
        let c = [power_for_user(q1, z, &law, &p, rule), power_for_user(q2, z, &law, &p, rule)];
        assert!(c[0].value >= c[1].value);
        assert_eq!(schedule(&c, p.eps_power).0, Some(0));
    }
}

#[test]
fn permuted_ties_resolve_to_the_same_user() {
    let tie = PowerChoice { power: 3.0, value: 7.0 };
    let low = PowerChoice { power: 2.0, value: 1.0 };
    let c = [low, tie, tie, low];
    assert_eq!(schedule(&c, 1e-3).0, Some(1));
    let perms: [[usize; 4]; 4] = [[2, 1, 0, 3], [3, 2, 1, 0], [2, 0, 3, 1], [0, 1, 2, 3]];
    for perm in perms {
        let relabeled: Vec<(usize, PowerChoice)> = perm.iter().map(|&i| (i, c[i])).collect();
        assert_eq!(schedule_labeled(&relabeled, 1e-3).0, Some(1), "{perm:?}");
    }
}

#[test]
fn power_floor_suppresses_transmission() {
    let c = [PowerChoice { power: 1e-6, value: 1e-3 }];
    assert_eq!(schedule(&c, 1e-3), (None, 0.0));
    let c = [PowerChoice { power: 0.5, value: 1.0 }];
    assert_eq!(schedule(&c, 1e-3), (Some(0), 0.5));
}

#[test]
fn rho_one_power_matches_stationary_point_and_grid() {
    let p = params();
    let rule = Quadrature::default_rule();
    let h = ComplexGain::new(0.4, 0.2);
    let y = h.norm_sqr();
    for (q, z) in [(100.0, 50.0), (10.0, 200.0), (1.0, 900.0)] {
        let got = power_for_user_at(q, z, h, 1.0, &p, rule).unwrap().power;
        let analytic = (q * p.k / (z * std::f64::consts::LN_2) - 1.0 / y).clamp(0.0, p.p_peak);
        assert!((got - analytic).abs() <= 1e-6 * p.p_peak);
        let obj = |pw: f64| q * p.k * (1.0 + y * pw).log2() - z * pw;
        let n = 10_000;
        let grid = (0..=n)
            .map(|j| p.p_peak * j as f64 / n as f64)
            .max_by(|a, b| obj(*a).total_cmp(&obj(*b)))
            .unwrap();
        assert!((got - grid).abs() <= p.p_peak / n as f64);
    }
}
