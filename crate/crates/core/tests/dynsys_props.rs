use latent_atlas::dynsys::{
    integrate, iterate_map, step_map, DoublePendulum, SystemId, SystemSpec,
};
use num_rational::BigRational;
use num_traits::ToPrimitive;
use proptest::prelude::*;

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

fn logistic() -> SystemSpec {
    SystemSpec::new(SystemId::LogisticMap, 0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn limit_cycle_radius_is_closed_form(r0 in 0.05f64..20.0, th in 0.0f64..std::f64::consts::TAU) {
        let spec = SystemSpec::new(SystemId::LimitCycle, 0);
        let t = integrate(&spec, &[r0 * th.cos(), r0 * th.sin()], 5.0, 0.01).unwrap();
        for (i, row) in (0..t.steps()).map(|i| (i, t.state(i))) {
            let want = 1.0 + (r0 - 1.0) * (-(i as f64) * 0.01).exp();
            prop_assert!((row[0].hypot(row[1]) - want).abs() < 1e-6);
        }
    }

    #[test]
    fn hopf_reaches_unit_circle(x in -2.0f64..2.0, y in -2.0f64..2.0) {
        prop_assume!(x.hypot(y) > 1e-3);
        let spec = SystemSpec::new(SystemId::Hopf, 0).with_param("mu", 1.0);
        let t = integrate(&spec, &[x, y], 20.0, 0.01).unwrap();
        let last = t.state(t.steps() - 1);
        prop_assert!((last[0].hypot(last[1]) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn hopf_radius_decreases_monotonically_from_outside(r0 in 1.05f64..2.5, th in 0.0f64..std::f64::consts::TAU) {
        let spec = SystemSpec::new(SystemId::Hopf, 0).with_param("mu", 1.0);
        let t = integrate(&spec, &[r0 * th.cos(), r0 * th.sin()], 5.0, 0.01).unwrap();
        let radii: Vec<f64> = (0..t.steps()).map(|i| t.state(i)[0].hypot(t.state(i)[1])).collect();
        prop_assert!(radii.windows(2).all(|w| w[1] <= w[0] + 1e-12 && w[1] >= 1.0 - 1e-9));
    }

    #[test]
    fn pendulum_energy_is_conserved(a in -0.35f64..0.35, b in -0.35f64..0.35, w1 in -1.0f64..1.0, w2 in -1.0f64..1.0) {
        let spec = SystemSpec::new(SystemId::DoublePendulum, 0);
        let t = integrate(&spec, &[a, b, w1, w2], 5.0, 0.01).unwrap();
        prop_assert_eq!(t.steps(), 501);
        let p = DoublePendulum { g: 9.81 };
        let e0 = p.energy(t.state(0));
        for i in 0..t.steps() {
            prop_assert!(((p.energy(t.state(i)) - e0) / e0).abs() < 1e-3);
        }
    }

    #[test]
    fn logistic_stays_in_unit_interval(x0 in 1e-6f64..(1.0 - 1e-6)) {
        let t = iterate_map(&logistic(), x0, 500).unwrap();
        prop_assert!(t.as_flat().iter().all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn logistic_step_is_correctly_rounded(x0 in 1e-3f64..0.999) {
        let spec = logistic();
        let r = exact(3.57);
        let one = exact(1.0);
        let mut x = x0;
        for _ in 0..200 {
            let next = step_map(&spec, x).unwrap();
            let e = exact(x);
            let want = (&r * &e * (&one - &e)).to_f64().unwrap();
            prop_assert!((next - want).abs() <= 2.0 * f64::EPSILON * want);
            x = next;
        }
    }
}

#[test]
fn logistic_orbit_tracks_exact_orbit() {
    let (r, one) = (exact(3.57), exact(1.0));
    let x0 = 0.3141592653589793;
    let t = iterate_map(&logistic(), x0, 10).unwrap();
    let mut e = exact(x0);
    for i in 0..10 {
        let got = t.state(i)[0];
        let want = e.to_f64().unwrap();
        assert!((got - want).abs() < 1e-12, "step {i}: {got} vs {want}");
        e = &r * &e * (&one - &e);
    }
}

#[test]
fn logistic_rejects_boundary_points() {
    for x in [0.0, 1.0, -0.1, f64::NAN] {
        assert!(step_map(&logistic(), x).is_err());
    }
    assert!(step_map(&SystemSpec::new(SystemId::Lorenz63, 0), 0.5).is_err());
}
