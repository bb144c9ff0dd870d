//! Finite-horizon detectors for the synchronization states and the
//! empirical equivalence audit.
//!
//! Every detector looks at the trailing window of a trajectory (the last
//! `tail_fraction` of the horizon) and returns a three-valued verdict. The
//! "true" and "false" thresholds are separated by a factor [`HYSTERESIS`];
//! anything in between is [`Verdict::Inconclusive`], which asks for a longer
//! run rather than guessing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{apriori_check, phase_diameter, wrap_step};
use crate::equilibria::{enumerate_equilibria, nearest_class, EquilibriumSet, MAX_SWEEP_N};
use crate::error::{param, Result};
use crate::integrator::{integrate, random_initial_state, IntegratorConfig, Trajectory};
use crate::model::{frequencies, normalize_frame, stationarity_residual, Ensemble, State};

/// Ratio between the "false" and the "true" threshold of every detector.
pub const HYSTERESIS: f64 = 1e3;
/// Shortest horizon on which detectors decide anything.
pub const MIN_HORIZON: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub freq_tol: f64,
    pub lock_var_tol: f64,
    pub op_var_tol: f64,
    pub opss_margin: f64,
    pub tail_fraction: f64,
    pub diameter_cap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            freq_tol: 1e-6,
            lock_var_tol: 1e-6,
            op_var_tol: 1e-6,
            opss_margin: 1e-6,
            tail_fraction: 0.2,
            diameter_cap: 100.0 * std::f64::consts::TAU,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.freq_tol,
            self.lock_var_tol,
            self.op_var_tol,
            self.opss_margin,
            self.diameter_cap,
        ];
        if all.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(param("tolerances must be positive and finite"));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction < 1.0) {
            return Err(param("tail_fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    True,
    False,
    Inconclusive,
    NotApplicable,
}

impl Verdict {
    pub fn is_decided(self) -> bool {
        matches!(self, Verdict::True | Verdict::False)
    }

    fn from_bands(is_true: bool, is_false: bool) -> Self {
        if is_false {
            Verdict::False
        } else if is_true {
            Verdict::True
        } else {
            Verdict::Inconclusive
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::True => "true",
            Verdict::False => "false",
            Verdict::Inconclusive => "inconclusive",
            Verdict::NotApplicable => "not_applicable",
        })
    }
}

/// Index of the first sample inside the trailing window.
fn tail_start(trajectory: &Trajectory, tol: &Tolerances) -> usize {
    let t_end = trajectory.last().state.t;
    let cut = t_end - tol.tail_fraction * trajectory.horizon();
    trajectory
        .samples
        .iter()
        .position(|s| s.state.t >= cut)
        .unwrap_or(trajectory.samples.len() - 1)
}

fn short(trajectory: &Trajectory) -> bool {
    trajectory.horizon() < MIN_HORIZON || trajectory.samples.len() < 2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FssDetection {
    pub verdict: Verdict,
    /// Largest `|θ̇_j|` over the trailing window.
    pub tail_max_frequency: f64,
}

pub fn detect_fss(trajectory: &Trajectory, tol: &Tolerances) -> FssDetection {
    let ens = &trajectory.ensemble;
    let tail_max_frequency = trajectory.samples[tail_start(trajectory, tol)..]
        .iter()
        .map(|s| {
            frequencies(ens, &s.state)
                .expect("trajectory states match their ensemble")
                .iter()
                .fold(0.0_f64, |m, w| m.max(w.abs()))
        })
        .fold(0.0, f64::max);
    let verdict = if short(trajectory) {
        Verdict::Inconclusive
    } else {
        Verdict::from_bands(
            tail_max_frequency < tol.freq_tol,
            tail_max_frequency > HYSTERESIS * tol.freq_tol,
        )
    };
    FssDetection {
        verdict,
        tail_max_frequency,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlsDetection {
    pub verdict: Verdict,
    /// Largest phase diameter over the whole run.
    pub max_diameter: f64,
    /// Growth of the running maximum diameter inside the trailing window.
    pub tail_increase: f64,
}

/// Phase-locking: the running phase diameter stays below `diameter_cap`
/// and has stopped growing in the trailing window. Continued growth beyond
/// `10³·lock_var_tol` in the window counts as unbounded.
pub fn detect_pls(trajectory: &Trajectory, tol: &Tolerances) -> PlsDetection {
    let start = tail_start(trajectory, tol);
    let mut running = 0.0_f64;
    let mut at_tail = 0.0;
    for (i, s) in trajectory.samples.iter().enumerate() {
        if i == start {
            at_tail = running;
        }
        running = running.max(phase_diameter(&s.state.theta));
    }
    if start == 0 {
        at_tail = phase_diameter(&trajectory.first().state.theta);
    }
    let tail_increase = running - at_tail;
    let verdict = if running > tol.diameter_cap {
        Verdict::False
    } else if short(trajectory) && trajectory.ensemble.len() > 1 {
        Verdict::Inconclusive
    } else {
        Verdict::from_bands(
            tail_increase < tol.lock_var_tol,
            tail_increase > HYSTERESIS * tol.lock_var_tol,
        )
    };
    PlsDetection {
        verdict,
        max_diameter: running,
        tail_increase,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FplsDetection {
    pub verdict: Verdict,
    /// Largest total variation of `θ_j − θ_k` over the trailing window.
    pub tail_variation: f64,
    /// `max_j |g_j|` at the final configuration.
    pub residual: f64,
    pub nearest_class: Option<usize>,
    pub nearest_distance: Option<f64>,
}

/// Full phase-locking: every pairwise difference has stopped moving and the
/// final configuration is stationary. When an equilibrium set is supplied,
/// the nearest class (anchored by the run's conserved quantity) is attached.
pub fn detect_fpls(trajectory: &Trajectory, tol: &Tolerances, equilibria: Option<&EquilibriumSet>) -> FplsDetection {
    let ens = &trajectory.ensemble;
    let n = ens.len();
    let tail = &trajectory.samples[tail_start(trajectory, tol)..];
    let mut tv = vec![0.0; n * n];
    for w in tail.windows(2) {
        let (a, b) = (&w[0].state.theta, &w[1].state.theta);
        for j in 0..n {
            for k in j + 1..n {
                tv[j * n + k] += ((b[j] - b[k]) - (a[j] - a[k])).abs();
            }
        }
    }
    let tail_variation = tv.iter().copied().fold(0.0, f64::max);
    let last = trajectory.last();
    let residual = stationarity_residual(ens, &last.state.theta)
        .expect("trajectory states match their ensemble")
        .iter()
        .fold(0.0_f64, |m, g| m.max(g.abs()));
    let hit = equilibria.and_then(|set| nearest_class(set, ens, &last.state.theta, last.momentum));
    let verdict = if short(trajectory) {
        Verdict::Inconclusive
    } else {
        Verdict::from_bands(
            tail_variation < tol.lock_var_tol && residual < 10.0 * tol.freq_tol,
            tail_variation > HYSTERESIS * tol.lock_var_tol || residual > HYSTERESIS * 10.0 * tol.freq_tol,
        )
    };
    FplsDetection {
        verdict,
        tail_variation,
        residual,
        nearest_class: hit.as_ref().map(|h| h.index),
        nearest_distance: hit.map(|h| h.distance),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpssDetection {
    pub verdict: Verdict,
    /// Largest peak-to-peak range of `Re Z` or `Im Z` in the trailing window.
    pub z_variation: f64,
    #[serde(rename = "R_star")]
    pub r_star: f64,
    #[serde(rename = "Theta_star")]
    pub theta_star: f64,
    /// `ω_M / λ`.
    pub threshold: f64,
}

pub fn detect_opss(trajectory: &Trajectory, tol: &Tolerances) -> OpssDetection {
    let ens = &trajectory.ensemble;
    let tail = &trajectory.samples[tail_start(trajectory, tol)..];
    let range = |f: &dyn Fn(usize) -> f64| {
        let (lo, hi) = (0..tail.len()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            let x = f(i);
            (lo.min(x), hi.max(x))
        });
        hi - lo
    };
    let z_variation = range(&|i| tail[i].order.z_re).max(range(&|i| tail[i].order.z_im));
    let count = tail.len() as f64;
    let r_star = tail.iter().map(|s| s.order.r).sum::<f64>() / count;
    let re = tail.iter().map(|s| s.order.z_re).sum::<f64>() / count;
    let im = tail.iter().map(|s| s.order.z_im).sum::<f64>() / count;
    let theta_star = im.atan2(re);
    let threshold = ens.omega_max() / ens.coupling();
    let verdict = if short(trajectory) {
        Verdict::Inconclusive
    } else {
        Verdict::from_bands(
            z_variation < tol.op_var_tol && r_star >= threshold - tol.opss_margin,
            z_variation > HYSTERESIS * tol.op_var_tol || r_star < threshold - HYSTERESIS * tol.opss_margin,
        )
    };
    OpssDetection {
        verdict,
        z_variation,
        r_star,
        theta_star,
        threshold,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PssDetection {
    pub verdict: Verdict,
    /// Largest circular distance `|θ_j − θ_k| mod 2π` in the trailing window.
    pub tail_max_spread: Option<f64>,
}

/// Phase synchronization; only meaningful for identical frequencies.
pub fn detect_pss(trajectory: &Trajectory, tol: &Tolerances) -> PssDetection {
    let ens = &trajectory.ensemble;
    if !ens.has_identical_frequencies() {
        return PssDetection {
            verdict: Verdict::NotApplicable,
            tail_max_spread: None,
        };
    }
    let n = ens.len();
    let spread = trajectory.samples[tail_start(trajectory, tol)..]
        .iter()
        .map(|s| {
            let th = &s.state.theta;
            let mut m = 0.0_f64;
            for j in 0..n {
                for k in j + 1..n {
                    m = m.max(wrap_step(th[j] - th[k]).abs());
                }
            }
            m
        })
        .fold(0.0, f64::max);
    let verdict = if short(trajectory) && n > 1 {
        Verdict::Inconclusive
    } else {
        Verdict::from_bands(spread < tol.lock_var_tol, spread > HYSTERESIS * tol.lock_var_tol)
    };
    PssDetection {
        verdict,
        tail_max_spread: Some(spread),
    }
}

/// The four states of the equivalence theorem, in matrix order.
pub const THEOREM_STATES: [&str; 4] = ["FPLS", "PLS", "FSS", "OPSS"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    #[serde(rename = "PSS")]
    pub pss: Verdict,
    #[serde(rename = "FPLS")]
    pub fpls: Verdict,
    #[serde(rename = "PLS")]
    pub pls: Verdict,
    #[serde(rename = "FSS")]
    pub fss: Verdict,
    #[serde(rename = "OPSS")]
    pub opss: Verdict,
}

impl Verdicts {
    pub fn theorem_states(&self) -> [Verdict; 4] {
        [self.fpls, self.pls, self.fss, self.opss]
    }

    /// All four theorem verdicts decided and not all equal.
    pub fn disagree(&self) -> bool {
        let v = self.theorem_states();
        v.iter().all(|x| x.is_decided()) && v.iter().any(|x| *x != v[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub fss: FssDetection,
    pub pls: PlsDetection,
    pub fpls: FplsDetection,
    pub opss: OpssDetection,
    pub pss: PssDetection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    /// Verdicts after the structural implications were applied.
    pub verdicts: Verdicts,
    /// Detector outputs before the implications were applied.
    pub raw: Verdicts,
    pub witness: Witness,
    /// `agreement[a][b]`: theorem states `a` and `b` are both decided and equal.
    pub agreement: [[bool; 4]; 4],
    /// Raw verdicts that contradicted a structural implication.
    pub contradictions: Vec<String>,
}

impl ClassificationReport {
    /// A disagreement among decided theorem verdicts, or a raw verdict that
    /// contradicted a structural implication.
    pub fn flagged(&self) -> bool {
        self.verdicts.disagree() || !self.contradictions.is_empty()
    }
}

/// Runs every detector and applies the finite-horizon implications
/// `FPLS ⇒ PLS ∧ FSS` and `PSS ⇒ FPLS`.
pub fn classify(trajectory: &Trajectory, tol: &Tolerances, equilibria: Option<&EquilibriumSet>) -> ClassificationReport {
    let witness = Witness {
        fss: detect_fss(trajectory, tol),
        pls: detect_pls(trajectory, tol),
        fpls: detect_fpls(trajectory, tol, equilibria),
        opss: detect_opss(trajectory, tol),
        pss: detect_pss(trajectory, tol),
    };
    let raw = Verdicts {
        pss: witness.pss.verdict,
        fpls: witness.fpls.verdict,
        pls: witness.pls.verdict,
        fss: witness.fss.verdict,
        opss: witness.opss.verdict,
    };
    let mut v = raw.clone();
    let mut contradictions = Vec::new();
    if v.pss == Verdict::True && v.fpls != Verdict::True {
        if v.fpls == Verdict::False {
            contradictions.push("PSS true but FPLS false".to_string());
        }
        v.fpls = Verdict::True;
    }
    if v.fpls == Verdict::True {
        for (name, slot) in [("PLS", &mut v.pls), ("FSS", &mut v.fss)] {
            if *slot == Verdict::False {
                contradictions.push(format!("FPLS true but {name} false"));
            }
            *slot = Verdict::True;
        }
    }
    let states = v.theorem_states();
    let mut agreement = [[false; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            agreement[a][b] = states[a].is_decided() && states[a] == states[b];
        }
    }
    ClassificationReport {
        verdicts: v,
        raw,
        witness,
        agreement,
        contradictions,
    }
}

/// Random ensemble family used by the audit: `N` uniform in
/// `[n_min, n_max]`, number of first-order oscillators uniform in `0..=N`,
/// `ω_j ~ U[−1, 1]` moved to the co-rotating frame, `m_j, d_j ~ U[0.5, 2]`
/// and `λ = lambda_factor · ω_M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomSuite {
    pub count: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub lambda_factor: f64,
    pub seed: u64,
}

impl Default for RandomSuite {
    fn default() -> Self {
        Self {
            count: 50,
            n_min: 2,
            n_max: 6,
            lambda_factor: 4.0,
            seed: 0,
        }
    }
}

/// An explicit audit case; missing initial data is drawn from the case seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSpec {
    pub ensemble: Ensemble,
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    #[serde(default)]
    pub v: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub cases: Vec<CaseSpec>,
    pub random: Option<RandomSuite>,
    pub integrator: IntegratorConfig,
    pub tolerances: Tolerances,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            cases: Vec::new(),
            random: None,
            integrator: IntegratorConfig {
                dt: 1e-3,
                t_end: 500.0,
                sample_every: 10,
                ..IntegratorConfig::default()
            },
            tolerances: Tolerances::default(),
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Draws the normalized random ensembles of a [`RandomSuite`].
pub fn random_ensembles(suite: &RandomSuite) -> Result<Vec<Ensemble>> {
    if suite.n_min == 0 || suite.n_min > suite.n_max {
        return Err(param("random suite needs 1 ≤ n_min ≤ n_max"));
    }
    if !(suite.lambda_factor > 0.0) {
        return Err(param("lambda_factor must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(suite.seed);
    let mut out = Vec::with_capacity(suite.count);
    while out.len() < suite.count {
        let n = rng.gen_range(suite.n_min..=suite.n_max);
        let n_first = rng.gen_range(0..=n);
        let omega: Vec<f64> = (0..n).map(|_| uniform(&mut rng, -1.0, 1.0)).collect();
        let damping: Vec<f64> = (0..n).map(|_| uniform(&mut rng, 0.5, 2.0)).collect();
        let inertia: Vec<f64> = (0..n)
            .map(|j| {
                let m = uniform(&mut rng, 0.5, 2.0);
                if j < n_first {
                    0.0
                } else {
                    m
                }
            })
            .collect();
        let raw = Ensemble::new(n_first, inertia, damping, omega, 1.0)?;
        let norm = normalize_frame(&raw)?.ensemble;
        if norm.omega_max() <= 1e-9 {
            continue;
        }
        out.push(norm.with_coupling(suite.lambda_factor * norm.omega_max())?);
    }
    Ok(out)
}

/// `count` two-oscillator ensembles below the locking threshold `λ = 2ω_M`
/// (`λ ∈ [0.1, 0.9]·2ω_M`), with mixed orders and random `m`, `d`.
pub fn drift_suite(count: usize, seed: u64) -> Result<Vec<Ensemble>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n_first = rng.gen_range(0..=2);
            let w = uniform(&mut rng, 0.3, 1.0);
            let d: Vec<f64> = (0..2).map(|_| uniform(&mut rng, 0.5, 2.0)).collect();
            let m: Vec<f64> = (0..2)
                .map(|j| {
                    let m = uniform(&mut rng, 0.5, 2.0);
                    if j < n_first {
                        0.0
                    } else {
                        m
                    }
                })
                .collect();
            let frac = uniform(&mut rng, 0.1, 0.9);
            Ensemble::new(n_first, m, d, vec![w, -w], frac * 2.0 * w)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub id: usize,
    #[serde(rename = "N")]
    pub n_osc: usize,
    pub n: usize,
    pub lambda: f64,
    pub omega_max: f64,
    pub report: ClassificationReport,
    /// Largest a priori envelope violation along the run (≤ 0 when it held).
    pub apriori_max_violation: f64,
    pub momentum_drift: f64,
    pub equilibrium_classes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditFlag {
    pub case: usize,
    pub reason: String,
    #[serde(skip)]
    pub trajectory: Option<Box<Trajectory>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub cases: Vec<CaseReport>,
    /// `agreement_matrix[a][b]`: cases where theorem states `a` and `b` were
    /// both decided and equal (order as in [`THEOREM_STATES`]).
    pub agreement_matrix: [[u64; 4]; 4],
    pub flags: Vec<AuditFlag>,
    pub inconclusive_cases: usize,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.flags.is_empty()
    }
}

/// Expands a suite into `(ensemble, initial state)` pairs in case-id order.
pub fn suite_cases(suite: &SuiteConfig, seed: u64) -> Result<Vec<(Ensemble, State)>> {
    let mut cases = Vec::new();
    for (id, spec) in suite.cases.iter().enumerate() {
        let ens = spec.ensemble.clone();
        let drawn = random_initial_state(&ens, seed.wrapping_add(id as u64));
        let theta = spec.theta.clone().unwrap_or(drawn.theta);
        let v = spec.v.clone().unwrap_or(drawn.v);
        cases.push((ens, State::new(0.0, theta, v)));
    }
    if let Some(random) = &suite.random {
        for ens in random_ensembles(random)? {
            let id = cases.len() as u64;
            let s = random_initial_state(&ens, seed.wrapping_add(id));
            cases.push((ens, s));
        }
    }
    Ok(cases)
}

/// Integrates every case, runs all detectors and collects disagreement
/// flags. Cases run in parallel; the report is in case-id order.
pub fn equivalence_audit(suite: &SuiteConfig, seed: u64) -> Result<AuditReport> {
    suite.integrator.validate()?;
    suite.tolerances.validate()?;
    let cases = suite_cases(suite, seed)?;
    let results: Vec<(CaseReport, Option<AuditFlag>)> = cases
        .par_iter()
        .enumerate()
        .map(|(id, (ens, s0))| audit_case(id, ens, s0, suite))
        .collect();
    let mut report = AuditReport {
        cases: Vec::with_capacity(results.len()),
        agreement_matrix: [[0; 4]; 4],
        flags: Vec::new(),
        inconclusive_cases: 0,
    };
    for (case, flag) in results {
        for a in 0..4 {
            for b in 0..4 {
                report.agreement_matrix[a][b] += u64::from(case.report.agreement[a][b]);
            }
        }
        if case.report.verdicts.theorem_states().iter().any(|v| !v.is_decided()) {
            report.inconclusive_cases += 1;
        }
        report.flags.extend(flag);
        report.cases.push(case);
    }
    Ok(report)
}

fn audit_case(id: usize, ens: &Ensemble, s0: &State, suite: &SuiteConfig) -> (CaseReport, Option<AuditFlag>) {
    let base = |report: ClassificationReport| CaseReport {
        id,
        n_osc: ens.len(),
        n: ens.n_first(),
        lambda: ens.coupling(),
        omega_max: ens.omega_max(),
        report,
        apriori_max_violation: f64::NAN,
        momentum_drift: f64::NAN,
        equilibrium_classes: None,
    };
    let traj = match integrate(ens, s0, &suite.integrator) {
        Ok(t) => t,
        Err(fault) => {
            let report = classify(&fault.partial, &suite.tolerances, None);
            let flag = AuditFlag {
                case: id,
                reason: format!("integration fault: {}", fault.error),
                trajectory: Some(fault.partial),
            };
            return (base(report), Some(flag));
        }
    };
    let set = (ens.len() <= MAX_SWEEP_N.min(12) && ens.is_normalized())
        .then(|| enumerate_equilibria(ens).ok())
        .flatten();
    let report = classify(&traj, &suite.tolerances, set.as_ref());
    let flag = report.flagged().then(|| AuditFlag {
        case: id,
        reason: if report.contradictions.is_empty() {
            format!("theorem verdicts disagree: {:?}", report.verdicts)
        } else {
            report.contradictions.join("; ")
        },
        trajectory: Some(Box::new(traj.clone())),
    });
    let case = CaseReport {
        apriori_max_violation: apriori_check(ens, &traj).max_violation(),
        momentum_drift: traj.last().momentum - traj.first().momentum,
        equilibrium_classes: set.map(|s| s.len()),
        ..base(report)
    };
    (case, flag)
}
