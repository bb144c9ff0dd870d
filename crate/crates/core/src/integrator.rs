//! Time stepping for the hybrid system.
//!
//! The mixed first/second-order model is integrated as one ODE on the
//! flattened state `y = [θ_1..θ_N, v_{n+1}..v_N]`. Two methods are offered:
//! classical fixed-step RK4 (the default, bit-reproducible) and an adaptive
//! Dormand–Prince 5(4) pair for ensembles with small inertias.
//!
//! Random initial conditions come from ChaCha8 (`rand_chacha`) seeded with
//! `seed_from_u64(seed)`. Phases are drawn first, `θ_j = 2π·u`, then the
//! inertial velocities, `v_j = 2u − 1`, where each `u` is `rand`'s standard
//! `f64` sample (top 53 bits of a `u64`, scaled by `2^-53`).

use std::f64::consts::TAU;
use std::io::{BufRead, Write};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{order_parameter, EnergyLedger, OrderParameterSample, ThetaUnwrapper};
use crate::error::{param, Error, Result};
use crate::model::{momentum_unchecked, rhs_flat, Ensemble, State};

/// Absolute tolerance on the phase at a localized crossing.
pub const CROSSING_TOL: f64 = 1e-10;
/// Upper bound on bisection halvings when localizing a crossing.
pub const CROSSING_MAX_BISECTIONS: usize = 64;

/// An autonomous ODE `ẏ = f(y)` on a flat state vector.
pub trait Flow {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

/// The hybrid Kuramoto flow on `[θ, v]`.
#[derive(Debug, Clone, Copy)]
pub struct HybridFlow<'a>(pub &'a Ensemble);

impl Flow for HybridFlow<'_> {
    fn dim(&self) -> usize {
        self.0.len() + self.0.n_inertial()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        rhs_flat(self.0, y, dy);
    }
}

/// Scratch space for classical RK4.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `y` in place from `t` to `t + h`.
    pub fn step<F: Flow + ?Sized>(&mut self, flow: &F, t: f64, y: &mut [f64], h: f64) {
        let n = y.len();
        flow.rhs(t, y, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k1[i];
        }
        flow.rhs(t + 0.5 * h, &self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k2[i];
        }
        flow.rhs(t + 0.5 * h, &self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = y[i] + h * self.k3[i];
        }
        flow.rhs(t + h, &self.tmp, &mut self.k4);
        for i in 0..n {
            y[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

// Dormand–Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive Dormand–Prince 5(4) stepper.
#[derive(Debug, Clone)]
pub struct DormandPrince {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y5: Vec<f64>,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl DormandPrince {
    pub fn new(dim: usize, abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; dim]),
            tmp: vec![0.0; dim],
            y5: vec![0.0; dim],
            abs_tol,
            rel_tol,
        }
    }

    /// Attempts one step of size `h`. On acceptance `y` is advanced and the
    /// return value carries `(accepted, suggested next step)`.
    pub fn try_step<F: Flow + ?Sized>(&mut self, flow: &F, t: f64, y: &mut [f64], h: f64) -> (bool, f64) {
        let n = y.len();
        for s in 0..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (r, a) in DP_A[s].iter().enumerate().take(s) {
                    acc += h * a * self.k[r][i];
                }
                self.tmp[i] = acc;
            }
            flow.rhs(t + DP_C[s] * h, &self.tmp, &mut self.k[s]);
        }
        let mut err2 = 0.0;
        for i in 0..n {
            let mut y5 = y[i];
            let mut y4 = y[i];
            for s in 0..7 {
                y5 += h * DP_B5[s] * self.k[s][i];
                y4 += h * DP_B4[s] * self.k[s][i];
            }
            self.y5[i] = y5;
            let scale = self.abs_tol + self.rel_tol * y[i].abs().max(y5.abs());
            let e = (y5 - y4) / scale;
            err2 += e * e;
        }
        let err = (err2 / n.max(1) as f64).sqrt();
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        if err <= 1.0 && err.is_finite() {
            y.copy_from_slice(&self.y5);
            (true, h * factor)
        } else {
            (false, h * factor.min(1.0))
        }
    }
}

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Rk4Fixed,
    Rk45Adaptive,
}

/// Integration settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    /// Base step (the fixed step for RK4, the initial step for RK45).
    pub dt: f64,
    /// Horizon.
    #[serde(rename = "T")]
    pub t_end: f64,
    /// Keep every `sample_every`-th step (the final step is always kept).
    pub sample_every: usize,
    pub method: Method,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Seed for random initial conditions.
    pub seed: u64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 100.0,
            sample_every: 1,
            method: Method::Rk4Fixed,
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            seed: 0,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(dt: f64, t_end: f64, sample_every: usize) -> Self {
        Self {
            dt,
            t_end,
            sample_every,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(param(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(param(format!("T = {} must be non-negative", self.t_end)));
        }
        if self.sample_every == 0 {
            return Err(param("sample_every must be at least 1"));
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(param("tolerances must be positive"));
        }
        Ok(())
    }
}

/// One stored point of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub state: State,
    /// Order parameter with `Θ` unwrapped along the run.
    pub order: OrderParameterSample,
    /// Conserved quantity `M`.
    pub momentum: f64,
    /// Running energy-ledger residual.
    pub energy_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryMeta {
    pub config: IntegratorConfig,
    pub wall_clock_secs: f64,
    pub steps: usize,
}

/// A sampled solution together with its per-sample diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub ensemble: Ensemble,
    pub samples: Vec<Sample>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn first(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory always holds the initial sample")
    }

    pub fn horizon(&self) -> f64 {
        self.last().state.t - self.first().state.t
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.state.t)
    }

    /// Rebuilds a trajectory (and its diagnostics) from bare states, e.g.
    /// after reading a CSV file.
    pub fn from_states(ensemble: Ensemble, states: Vec<State>) -> Result<Self> {
        let first = states.first().ok_or_else(|| param("trajectory has no samples"))?;
        let mut builder = SampleBuilder::new(&ensemble, first)?;
        let mut samples = Vec::with_capacity(states.len());
        for s in states {
            ensemble.check_state(&s)?;
            samples.push(builder.sample(s));
        }
        if samples.windows(2).any(|w| w[1].state.t <= w[0].state.t) {
            return Err(param("sample times must be strictly increasing"));
        }
        Ok(Self {
            ensemble,
            samples,
            meta: TrajectoryMeta::default(),
        })
    }

    /// Writes `t,theta_1..theta_N,v_{n+1}..v_N,R,Theta,M,E_residual` with
    /// 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.ensemble.len();
        let nf = self.ensemble.n_first();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|j| format!("theta_{j}")));
        header.extend((nf + 1..=n).map(|j| format!("v_{j}")));
        header.extend(["R", "Theta", "M", "E_residual"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::new();
        for s in &self.samples {
            line.clear();
            push_num(&mut line, s.state.t);
            for x in s.state.theta.iter().chain(&s.state.v) {
                line.push(',');
                push_num(&mut line, *x);
            }
            for x in [s.order.r, s.order.theta, s.momentum, s.energy_residual] {
                line.push(',');
                push_num(&mut line, x);
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Reads the state columns of a trajectory CSV; diagnostics are recomputed.
    pub fn read_csv<R: BufRead>(ensemble: Ensemble, reader: R) -> Result<Self> {
        let n = ensemble.len();
        let ni = ensemble.n_inertial();
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| param("empty trajectory file"))?
            .map_err(|e| param(e.to_string()))?;
        let expected = 1 + n + ni + 4;
        if header.split(',').count() != expected {
            return Err(param(format!(
                "trajectory header has {} columns, ensemble implies {expected}",
                header.split(',').count()
            )));
        }
        let mut states = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| param(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| param(format!("line {}: {e}", lineno + 2)))?;
            if vals.len() != expected {
                return Err(param(format!("line {}: expected {expected} columns", lineno + 2)));
            }
            states.push(State::new(vals[0], vals[1..=n].to_vec(), vals[n + 1..n + 1 + ni].to_vec()));
        }
        Self::from_states(ensemble, states)
    }
}

fn push_num(out: &mut String, x: f64) {
    use std::fmt::Write as _;
    let _ = write!(out, "{x:.16e}");
}

/// Builds samples incrementally: unwraps `Θ`, tracks `M` and the energy ledger.
struct SampleBuilder<'a> {
    ensemble: &'a Ensemble,
    unwrap: ThetaUnwrapper,
    ledger: EnergyLedger,
}

impl<'a> SampleBuilder<'a> {
    fn new(ensemble: &'a Ensemble, initial: &State) -> Result<Self> {
        Ok(Self {
            ensemble,
            unwrap: ThetaUnwrapper::default(),
            ledger: EnergyLedger::new(ensemble, initial)?,
        })
    }

    fn sample(&mut self, state: State) -> Sample {
        let mut order = order_parameter(&state.theta);
        order.theta = self.unwrap.push(order.theta, order.r);
        let momentum = momentum_unchecked(self.ensemble, &state.theta, &state.v);
        let energy_residual = self.ledger.push(&state);
        Sample {
            state,
            order,
            momentum,
            energy_residual,
        }
    }
}

/// Integration stopped on non-finite values; `partial` ends at the last good sample.
#[derive(Debug, Clone)]
pub struct IntegrationFault {
    pub error: Error,
    pub partial: Box<Trajectory>,
}

impl std::fmt::Display for IntegrationFault {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (last good sample at t = {})", self.error, self.partial.last().state.t)
    }
}

impl std::error::Error for IntegrationFault {}

/// One RK4 step of the hybrid system.
pub fn step(ensemble: &Ensemble, state: &State, dt: f64) -> Result<State> {
    if !(dt > 0.0) {
        return Err(param(format!("dt = {dt} must be positive")));
    }
    ensemble.check_state(state)?;
    let flow = HybridFlow(ensemble);
    let mut y = state.to_vec();
    Rk4::new(y.len()).step(&flow, state.t, &mut y, dt);
    let next = State::from_slice(state.t + dt, ensemble.len(), &y);
    if !next.is_finite() {
        return Err(Error::Integration {
            t: state.t,
            message: "non-finite state after step".into(),
        });
    }
    Ok(next)
}

/// Integrates from `initial` to `initial.t + config.t_end`.
pub fn integrate(
    ensemble: &Ensemble,
    initial: &State,
    config: &IntegratorConfig,
) -> std::result::Result<Trajectory, IntegrationFault> {
    let started = Instant::now();
    let fail = |error: Error, samples: Vec<Sample>| IntegrationFault {
        error,
        partial: Box::new(Trajectory {
            ensemble: ensemble.clone(),
            samples,
            meta: TrajectoryMeta {
                config: config.clone(),
                ..Default::default()
            },
        }),
    };
    if let Err(e) = config.validate().and_then(|_| ensemble.check_state(initial)) {
        return Err(fail(e, Vec::new()));
    }
    if !initial.is_finite() {
        return Err(fail(
            Error::Integration {
                t: initial.t,
                message: "non-finite initial state".into(),
            },
            Vec::new(),
        ));
    }
    let mut builder = match SampleBuilder::new(ensemble, initial) {
        Ok(b) => b,
        Err(e) => return Err(fail(e, Vec::new())),
    };
    let n = ensemble.len();
    let flow = HybridFlow(ensemble);
    let t0 = initial.t;
    let t_final = t0 + config.t_end;
    let mut samples = vec![builder.sample(initial.clone())];
    let mut y = initial.to_vec();
    let mut steps = 0usize;

    match config.method {
        Method::Rk4Fixed => {
            let mut rk = Rk4::new(y.len());
            let total = if config.t_end == 0.0 {
                0
            } else {
                (config.t_end / config.dt - 1e-9).ceil().max(1.0) as usize
            };
            for i in 0..total {
                let t = t0 + i as f64 * config.dt;
                let t_next = if i + 1 == total {
                    t_final
                } else {
                    t0 + (i + 1) as f64 * config.dt
                };
                rk.step(&flow, t, &mut y, t_next - t);
                steps += 1;
                if y.iter().any(|x| !x.is_finite()) {
                    return Err(fail(
                        Error::Integration {
                            t,
                            message: "non-finite state (the exact flow is bounded)".into(),
                        },
                        samples,
                    ));
                }
                if (i + 1) % config.sample_every == 0 || i + 1 == total {
                    samples.push(builder.sample(State::from_slice(t_next, n, &y)));
                }
            }
        }
        Method::Rk45Adaptive => {
            let mut dp = DormandPrince::new(y.len(), config.abs_tol, config.rel_tol);
            let mut t = t0;
            let mut h = config.dt;
            let mut accepted = 0usize;
            let h_min = 1e-14 * (1.0 + t_final.abs());
            while t < t_final {
                let last = t + h >= t_final;
                let h_try = if last { t_final - t } else { h };
                let (ok, h_next) = dp.try_step(&flow, t, &mut y, h_try);
                steps += 1;
                if !ok {
                    if h_next < h_min || !h_next.is_finite() {
                        return Err(fail(
                            Error::Integration {
                                t,
                                message: "step size underflow".into(),
                            },
                            samples,
                        ));
                    }
                    h = h_next;
                    continue;
                }
                t = if last { t_final } else { t + h_try };
                accepted += 1;
                if y.iter().any(|x| !x.is_finite()) {
                    return Err(fail(
                        Error::Integration {
                            t,
                            message: "non-finite state (the exact flow is bounded)".into(),
                        },
                        samples,
                    ));
                }
                if accepted % config.sample_every == 0 || t >= t_final {
                    samples.push(builder.sample(State::from_slice(t, n, &y)));
                }
                h = h_next;
            }
        }
    }
    Ok(Trajectory {
        ensemble: ensemble.clone(),
        samples,
        meta: TrajectoryMeta {
            config: config.clone(),
            wall_clock_secs: started.elapsed().as_secs_f64(),
            steps,
        },
    })
}

/// Random initial state: phases uniform on `[0, 2π)`, inertial velocities
/// uniform on `[−1, 1)`, from ChaCha8 seeded with `seed`.
pub fn random_initial_state(ensemble: &Ensemble, seed: u64) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = (0..ensemble.len()).map(|_| TAU * rng.gen::<f64>()).collect();
    let v = (0..ensemble.n_inertial()).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
    State::new(0.0, theta, v)
}

/// Outcome of a crossing search.
#[derive(Debug, Clone, PartialEq)]
pub enum Crossing {
    Found { t: f64, y: Vec<f64> },
    NotFound(NotFound),
}

#[derive(Debug, Clone, PartialEq)]
pub enum NotFound {
    /// The coordinate does not start below the target moving upward.
    Precondition,
    /// The horizon elapsed first.
    Horizon,
    /// The caller's stop predicate fired at this time.
    Stopped { t: f64 },
    /// Non-finite values appeared.
    Fault { t: f64 },
}

/// First time coordinate `coord` of the flow reaches `target`, starting
/// from `(t0, y0)`.
///
/// Steps with fixed RK4 of size `dt`; the step bracketing the crossing is
/// bisected on its length (re-integrating from the step start) until the
/// coordinate is within [`CROSSING_TOL`] of the target. `stop` is checked
/// after every full step and aborts the search (e.g. capture by an
/// equilibrium).
#[allow(clippy::too_many_arguments)]
pub fn locate_crossing<F, S>(
    flow: &F,
    t0: f64,
    y0: &[f64],
    coord: usize,
    target: f64,
    dt: f64,
    horizon: f64,
    mut stop: S,
) -> Crossing
where
    F: Flow + ?Sized,
    S: FnMut(f64, &[f64]) -> bool,
{
    let dim = y0.len();
    let mut dy = vec![0.0; dim];
    flow.rhs(t0, y0, &mut dy);
    if !(y0[coord] < target && dy[coord] > 0.0) || !(dt > 0.0) {
        return Crossing::NotFound(NotFound::Precondition);
    }
    let mut rk = Rk4::new(dim);
    let mut y = y0.to_vec();
    let mut trial = vec![0.0; dim];
    let mut i = 0usize;
    loop {
        let t = t0 + i as f64 * dt;
        if t - t0 >= horizon {
            return Crossing::NotFound(NotFound::Horizon);
        }
        trial.copy_from_slice(&y);
        rk.step(flow, t, &mut trial, dt);
        if trial.iter().any(|x| !x.is_finite()) {
            return Crossing::NotFound(NotFound::Fault { t });
        }
        if trial[coord] >= target {
            if trial[coord] - target <= CROSSING_TOL {
                return Crossing::Found { t: t + dt, y: trial };
            }
            let (mut lo, mut hi) = (0.0, dt);
            let mut best = (dt, trial.clone());
            for _ in 0..CROSSING_MAX_BISECTIONS {
                let mid = 0.5 * (lo + hi);
                trial.copy_from_slice(&y);
                rk.step(flow, t, &mut trial, mid);
                let gap = trial[coord] - target;
                if gap.abs() <= (best.1[coord] - target).abs() {
                    best = (mid, trial.clone());
                }
                if gap.abs() <= CROSSING_TOL {
                    break;
                }
                if gap < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Crossing::Found { t: t + best.0, y: best.1 };
        }
        y.copy_from_slice(&trial);
        i += 1;
        if stop(t0 + i as f64 * dt, &y) {
            return Crossing::NotFound(NotFound::Stopped { t: t0 + i as f64 * dt });
        }
    }
}

/// Crossing of phase `j` of the full model through `target`.
pub fn locate_phase_crossing(
    ensemble: &Ensemble,
    state: &State,
    j: usize,
    target: f64,
    dt: f64,
    horizon: f64,
) -> Result<Option<(f64, State)>> {
    ensemble.check_state(state)?;
    if j >= ensemble.len() {
        return Err(param(format!("oscillator index {j} out of range")));
    }
    let flow = HybridFlow(ensemble);
    Ok(
        match locate_crossing(&flow, state.t, &state.to_vec(), j, target, dt, horizon, |_, _| false) {
            Crossing::Found { t, y } => Some((t, State::from_slice(t, ensemble.len(), &y))),
            Crossing::NotFound(_) => None,
        },
    )
}
