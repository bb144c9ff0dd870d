use hybrid_kuramoto::classifier::{
    classify, detect_fpls, detect_fss, detect_opss, detect_pls, detect_pss, equivalence_audit, CaseSpec,
    SuiteConfig, Tolerances, Verdict,
};
use hybrid_kuramoto::equilibria::{enumerate_equilibria, gauge_anchor};
use hybrid_kuramoto::integrator::{integrate, random_initial_state, IntegratorConfig, Trajectory};
use hybrid_kuramoto::limit_system::autonomy_audit;
use hybrid_kuramoto::model::{momentum, normalize_frame, Ensemble, State};

fn run(e: &Ensemble, s: &State, t_end: f64) -> Trajectory {
    integrate(e, s, &IntegratorConfig::rk4(1e-3, t_end, 10)).unwrap()
}

fn hybrid_three() -> Ensemble {
    let e = Ensemble::new(1, vec![0.0, 1.2, 0.8], vec![1.0, 0.7, 1.5], vec![0.6, -0.1, -0.4], 1.0).unwrap();
    let e = normalize_frame(&e).unwrap().ensemble;
    e.with_coupling(4.0 * e.omega_max()).unwrap()
}

#[test]
fn synchronizing_pair() {
    let e = Ensemble::new(1, vec![0.0, 1.0], vec![1.0, 1.0], vec![0.5, -0.5], 2.0).unwrap();
    let tr = run(&e, &random_initial_state(&e, 4), 200.0);
    let tol = Tolerances::default();
    assert_eq!(detect_fss(&tr, &tol).verdict, Verdict::True);
    assert_eq!(detect_pls(&tr, &tol).verdict, Verdict::True);
    let opss = detect_opss(&tr, &tol);
    assert_eq!(opss.verdict, Verdict::True);
    let set = enumerate_equilibria(&e).unwrap();
    assert!((opss.r_star - (2.0 + 3f64.sqrt()).sqrt() / 2.0).abs() < 1e-4);
    assert!(set.classes.iter().any(|c| (c.r - opss.r_star).abs() < 1e-4));
}

#[test]
fn synchronizing_hybrid_triple_matches_a_class() {
    let e = hybrid_three();
    let set = enumerate_equilibria(&e).unwrap();
    let tr = run(&e, &random_initial_state(&e, 9), 500.0);
    let fpls = detect_fpls(&tr, &Tolerances::default(), Some(&set));
    assert_eq!(fpls.verdict, Verdict::True);
    assert!(fpls.nearest_distance.unwrap() <= 1e-4);
    assert_eq!(detect_pss(&tr, &Tolerances::default()).verdict, Verdict::NotApplicable);
}

#[test]
fn autonomy_audit_for_every_oscillator() {
    let e = hybrid_three();
    let tr = run(&e, &random_initial_state(&e, 9), 500.0);
    for j in 0..e.len() {
        let rep = autonomy_audit(&tr, j, &Tolerances::default()).unwrap().unwrap();
        assert!(rep.tail_deviation <= 1e-5, "{rep:?}");
        assert!(rep.equilibrium_distance <= 1e-4, "{rep:?}");
    }
}

#[test]
fn autonomy_audit_from_equilibrium_is_exact() {
    let e = hybrid_three();
    let set = enumerate_equilibria(&e).unwrap();
    let tr = run(&e, &State::at_rest(&e, gauge_anchor(&set.classes[0], &e, 0.0)), 20.0);
    let rep = autonomy_audit(&tr, 2, &Tolerances::default()).unwrap().unwrap();
    assert!(rep.tail_deviation < 1e-12 && rep.equilibrium_distance < 1e-12);
}

#[test]
fn autonomy_audit_needs_settled_order_parameter() {
    let e = Ensemble::first_order(vec![1.0, 1.0], vec![0.8, -0.8], 1.0).unwrap();
    let tr = run(&e, &State::at_rest(&e, vec![0.0, 0.0]), 100.0);
    assert!(autonomy_audit(&tr, 0, &Tolerances::default()).unwrap().is_none());
}

#[test]
fn verdicts_are_shift_invariant() {
    let e = hybrid_three();
    let s = random_initial_state(&e, 21);
    let shifted = State::new(0.0, s.theta.iter().map(|x| x + 1.7).collect(), s.v.clone());
    let set = enumerate_equilibria(&e).unwrap();
    let a = classify(&run(&e, &s, 300.0), &Tolerances::default(), Some(&set));
    let b = classify(&run(&e, &shifted, 300.0), &Tolerances::default(), Some(&set));
    assert_eq!(a.verdicts, b.verdicts);
    assert_eq!(a.witness.fpls.nearest_class, b.witness.fpls.nearest_class);
    let m_shift = momentum(&e, &shifted).unwrap() - momentum(&e, &s).unwrap();
    assert!((m_shift - 1.7 * e.damping().iter().sum::<f64>()).abs() < 1e-12);
}

#[test]
fn classification_is_deterministic() {
    let e = hybrid_three();
    let s = random_initial_state(&e, 5);
    let a = classify(&run(&e, &s, 100.0), &Tolerances::default(), None);
    let b = classify(&run(&e, &s, 100.0), &Tolerances::default(), None);
    assert_eq!(a, b);
}

#[test]
fn equilibrium_start_suite_is_all_true() {
    let mut cases = Vec::new();
    for e in [
        hybrid_three(),
        Ensemble::new(1, vec![0.0, 1.0], vec![1.0, 1.0], vec![0.5, -0.5], 2.0).unwrap(),
    ] {
        let set = enumerate_equilibria(&e).unwrap();
        let theta = gauge_anchor(&set.classes[0], &e, 0.0);
        cases.push(CaseSpec {
            v: Some(vec![0.0; e.n_inertial()]),
            theta: Some(theta),
            ensemble: e,
        });
    }
    let suite = SuiteConfig {
        cases,
        integrator: IntegratorConfig::rk4(1e-3, 20.0, 10),
        ..SuiteConfig::default()
    };
    let rep = equivalence_audit(&suite, 0).unwrap();
    assert!(rep.passed());
    for c in &rep.cases {
        assert_eq!(c.report.verdicts.theorem_states(), [Verdict::True; 4]);
        assert!(c.report.witness.fpls.nearest_distance.unwrap() < 1e-9);
    }
    assert_eq!(rep.agreement_matrix, [[2; 4]; 4]);
}
