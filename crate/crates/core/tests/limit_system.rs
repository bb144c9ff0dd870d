use std::f64::consts::{PI, TAU};

use hybrid_kuramoto::limit_system::{
    divergence_check, divergence_check_with_step, integrate_limit, limit_equilibria, lyapunov_L, poincare_return,
    poincare_return_with, section_anchor, LimitParams, PoincareConfig,
};
use proptest::prelude::*;

fn base() -> LimitParams {
    LimitParams::new(1.0, 1.0, 0.5, 0.5, 0.0).unwrap()
}

#[test]
fn tangency_gives_a_single_equilibrium() {
    assert_eq!(limit_equilibria(&base()), vec![PI / 2.0]);
    let p = LimitParams::new(1.0, 1.0, -0.7, 0.7, 0.3).unwrap();
    assert_eq!(limit_equilibria(&p).len(), 1);
}

#[test]
fn dissipation_identity_along_trajectories() {
    let p = LimitParams::new(1.3, 0.6, 0.4, 0.9, 0.2).unwrap();
    let max_defect = |dt: f64| {
        let tr = integrate_limit(&p, 2.0, 0.0, dt, 5.0).unwrap();
        tr.windows(3)
            .map(|w| {
                let dl = (lyapunov_L(&p, w[2][1], w[2][2]) - lyapunov_L(&p, w[0][1], w[0][2])) / (2.0 * dt);
                (dl + p.d * w[1][1] * w[1][1]).abs()
            })
            .fold(0.0, f64::max)
    };
    let (a, b) = (max_defect(1e-2), max_defect(5e-3));
    assert!(a < 1e-3);
    assert!(a / b > 3.5 && a / b < 4.5, "{a} {b}");
}

#[test]
fn lyapunov_function_decreases_while_moving() {
    let p = LimitParams::new(1.0, 0.3, 0.2, 1.0, 0.0).unwrap();
    let tr = integrate_limit(&p, 3.0, 0.0, 1e-3, 30.0).unwrap();
    for w in tr.windows(2) {
        if w[0][1].abs() > 1e-6 {
            assert!(lyapunov_L(&p, w[1][1], w[1][2]) < lyapunov_L(&p, w[0][1], w[0][2]));
        }
    }
}

#[test]
fn return_map_is_monotone_in_the_initial_velocity() {
    let p = LimitParams::new(1.0, 1.0, 0.5, 0.8, 0.0).unwrap();
    let cfg = PoincareConfig { dt: 1e-4, t_max: 50.0 };
    let ps: Vec<f64> = (0..12)
        .map(|i| poincare_return_with(&p, 3.0 + 0.6 * i as f64, &cfg).unwrap())
        .filter(|r| r.crossed)
        .map(|r| r.p)
        .collect();
    assert!(ps.len() >= 10);
    assert!(ps.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn return_lands_on_the_section() {
    let p = LimitParams::new(2.0, 0.5, 0.3, 0.6, 1.0).unwrap();
    let r = poincare_return_with(&p, 4.0, &PoincareConfig { dt: 1e-4, t_max: 50.0 }).unwrap();
    assert!(r.crossed && r.tau > 0.0 && r.p > 0.0);
    assert!(r.energy_residual.abs() < 1e-9);
    let theta0 = section_anchor(&p).unwrap();
    let tr = integrate_limit(&p, 4.0, theta0, 1e-5, r.tau).unwrap();
    let end = tr.last().unwrap();
    assert!((end[2] - theta0 - TAU).abs() < 1e-4);
}

#[test]
fn captured_orbit_does_not_cross() {
    assert!(!poincare_return(&base(), 0.01).unwrap().crossed);
}

#[test]
fn divergence_finite_differences_are_exact_for_all_steps() {
    let p = LimitParams::new(4.0, 2.0, 0.1, 3.0, -1.0).unwrap();
    for h in [1e-3, 5e-4, 2.5e-4, 1e-5] {
        assert!(divergence_check_with_step(&p, 100, h, 3) <= 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn divergence_is_minus_d_over_m(m in 0.1f64..5.0, d in 0.1f64..5.0, w in -2.0f64..2.0,
                                    lr in 0.0f64..3.0, th in -PI..PI, seed in any::<u64>()) {
        let p = LimitParams::new(m, d, w, lr, th).unwrap();
        prop_assert!(divergence_check(&p, 100, seed) <= 1e-6);
    }

    #[test]
    fn equilibria_count_follows_the_coupling(w in -2.0f64..2.0, lr in 0.0f64..3.0, th in -PI..PI) {
        let p = LimitParams::new(1.0, 1.0, w, lr, th).unwrap();
        let eq = limit_equilibria(&p);
        if lr > w.abs() * (1.0 + 1e-9) {
            prop_assert_eq!(eq.len(), 2);
        } else if lr < w.abs() * (1.0 - 1e-9) {
            prop_assert!(eq.is_empty());
        }
        for e in eq {
            prop_assert!(e > -PI && e <= PI);
            prop_assert!((w + lr * (th - e).sin()).abs() < 1e-12);
        }
    }
}
