//! Order parameter, phase statistics and the identities used to audit runs:
//! the energy ledger, the a priori velocity envelope and the
//! Landau–Kolmogorov derivative inequality.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::integrator::Trajectory;
use crate::model::{frequencies, rhs_flat, Ensemble, State};

/// Below this magnitude the mean phase is considered undefined and held.
pub const UNWRAP_R_FLOOR: f64 = 1e-8;

/// `Z = R e^{iΘ} = (1/N) Σ e^{iθ_j}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderParameterSample {
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "Theta")]
    pub theta: f64,
    #[serde(rename = "Z_re")]
    pub z_re: f64,
    #[serde(rename = "Z_im")]
    pub z_im: f64,
}

/// Order parameter of one configuration. `theta` is the principal angle;
/// unwrapping happens at the series level.
pub fn order_parameter(theta: &[f64]) -> OrderParameterSample {
    let n = theta.len().max(1) as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for &th in theta {
        let (s, c) = th.sin_cos();
        re += c;
        im += s;
    }
    let (z_re, z_im) = (re / n, im / n);
    OrderParameterSample {
        r: z_re.hypot(z_im),
        theta: z_im.atan2(z_re),
        z_re,
        z_im,
    }
}

/// Incremental shortest-arc unwrapping.
///
/// The first accepted angle is mapped into `[0, 2π)`; every later angle is
/// shifted by a multiple of 2π so the step from the previous value lies in
/// `(−π, π]`. Samples with `R` below [`UNWRAP_R_FLOOR`] repeat the previous
/// value.
#[derive(Debug, Clone, Default)]
pub struct ThetaUnwrapper {
    last: Option<f64>,
}

impl ThetaUnwrapper {
    pub fn push(&mut self, angle: f64, r: f64) -> f64 {
        self.push_flagged(angle, r).0
    }

    /// Like [`push`](Self::push) but also reports whether the sample was held.
    pub fn push_flagged(&mut self, angle: f64, r: f64) -> (f64, bool) {
        if r < UNWRAP_R_FLOOR {
            return (self.last.unwrap_or(0.0), true);
        }
        let value = match self.last {
            None => angle.rem_euclid(TAU),
            Some(prev) => prev + wrap_step(angle - prev),
        };
        self.last = Some(value);
        (value, false)
    }
}

/// Reduces `x` into `(−π, π]`.
pub fn wrap_step(x: f64) -> f64 {
    let mut y = x.rem_euclid(TAU);
    if y > PI {
        y -= TAU;
    }
    y
}

/// Unwraps a series of angles (all treated as well defined).
pub fn unwrap_angle_series(samples: &[f64]) -> Vec<f64> {
    let mut u = ThetaUnwrapper::default();
    samples.iter().map(|&a| u.push(a, 1.0)).collect()
}

/// Unwraps `(angle, R)` pairs; the returned flags mark held samples.
pub fn unwrap_order_parameter_series(samples: &[(f64, f64)]) -> (Vec<f64>, Vec<bool>) {
    let mut u = ThetaUnwrapper::default();
    samples.iter().map(|&(a, r)| u.push_flagged(a, r)).unzip()
}

/// `max_j θ_j − min_j θ_j` on lifted phases.
pub fn phase_diameter(theta: &[f64]) -> f64 {
    let (lo, hi) = theta
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if theta.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

fn pair_cos_sum(theta: &[f64]) -> f64 {
    let mut acc = 0.0;
    for j in 0..theta.len() {
        for k in j + 1..theta.len() {
            acc += (theta[k] - theta[j]).cos();
        }
    }
    acc
}

/// Running energy balance
///
/// ```text
/// [Σ m_j v_j²/2 + ∫₀ᵗ Σ d_j θ̇_j² ds]
///   − [Σ m_j v_j²(0)/2 + Σ ω_j (θ_j(t) − θ_j(0)) + (λ/N) Σ_{j<k} cos(θ_k − θ_j) |₀ᵗ]
/// ```
///
/// with the dissipation integral accumulated by the trapezoid rule over the
/// pushed samples.
#[derive(Debug, Clone)]
pub struct EnergyLedger {
    ensemble: Ensemble,
    theta0: Vec<f64>,
    kinetic0: f64,
    pair0: f64,
    dissipated: f64,
    last: Option<(f64, f64)>,
    buf_y: Vec<f64>,
    buf_dy: Vec<f64>,
}

impl EnergyLedger {
    pub fn new(ensemble: &Ensemble, initial: &State) -> Result<Self> {
        ensemble.check_state(initial)?;
        let dim = ensemble.len() + ensemble.n_inertial();
        Ok(Self {
            ensemble: ensemble.clone(),
            theta0: initial.theta.clone(),
            kinetic0: kinetic(ensemble, &initial.v),
            pair0: pair_cos_sum(&initial.theta),
            dissipated: 0.0,
            last: None,
            buf_y: vec![0.0; dim],
            buf_dy: vec![0.0; dim],
        })
    }

    /// Adds the next sample (in time order) and returns the residual there.
    pub fn push(&mut self, state: &State) -> f64 {
        let e = &self.ensemble;
        let n = e.len();
        self.buf_y[..n].copy_from_slice(&state.theta);
        self.buf_y[n..].copy_from_slice(&state.v);
        rhs_flat(e, &self.buf_y, &mut self.buf_dy);
        let rate: f64 = e
            .damping()
            .iter()
            .zip(&self.buf_dy[..n])
            .map(|(d, w)| d * w * w)
            .sum();
        if let Some((t_prev, rate_prev)) = self.last {
            self.dissipated += 0.5 * (rate + rate_prev) * (state.t - t_prev);
        }
        self.last = Some((state.t, rate));
        let work: f64 = e
            .omega()
            .iter()
            .zip(state.theta.iter().zip(&self.theta0))
            .map(|(w, (t, t0))| w * (t - t0))
            .sum();
        let pair = e.coupling() / n as f64 * (pair_cos_sum(&state.theta) - self.pair0);
        (kinetic(e, &state.v) + self.dissipated) - (self.kinetic0 + work + pair)
    }
}

fn kinetic(e: &Ensemble, v: &[f64]) -> f64 {
    e.inertia()[e.n_first()..]
        .iter()
        .zip(v)
        .map(|(m, v)| 0.5 * m * v * v)
        .sum()
}

/// Energy-ledger residual at every sample of a trajectory.
pub fn energy_ledger(trajectory: &Trajectory) -> Vec<f64> {
    let Some(first) = trajectory.samples.first() else {
        return Vec::new();
    };
    let mut ledger = EnergyLedger::new(&trajectory.ensemble, &first.state)
        .expect("trajectory states match their ensemble");
    trajectory.samples.iter().map(|s| ledger.push(&s.state)).collect()
}

/// Sup-norm estimates for the Landau–Kolmogorov inequality
/// `‖f'‖ ≤ 2 ‖f‖^{1/2} ‖f''‖^{1/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LkReport {
    pub sup_f: f64,
    pub sup_df: f64,
    pub sup_ddf: f64,
    pub satisfied: bool,
}

/// Checks the Landau–Kolmogorov inequality on uniformly spaced samples.
///
/// Derivatives come from second-order central differences; each sup
/// estimate is granted a slack of `10 h²` in the direction that favors the
/// inequality.
pub fn lk_check(f: &[f64], h: f64) -> Result<LkReport> {
    if f.len() < 5 {
        return Err(param(format!("lk_check needs at least 5 samples, got {}", f.len())));
    }
    if !(h > 0.0) {
        return Err(param("sample spacing must be positive"));
    }
    let sup_f = f.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let (mut sup_df, mut sup_ddf) = (0.0_f64, 0.0_f64);
    for w in f.windows(3) {
        sup_df = sup_df.max(((w[2] - w[0]) / (2.0 * h)).abs());
        sup_ddf = sup_ddf.max(((w[2] - 2.0 * w[1] + w[0]) / (h * h)).abs());
    }
    let slack = 10.0 * h * h;
    let satisfied = sup_df - slack <= 2.0 * ((sup_f + slack) * (sup_ddf + slack)).sqrt();
    Ok(LkReport {
        sup_f,
        sup_df,
        sup_ddf,
        satisfied,
    })
}

/// Worst excess of observed velocities over the a priori envelope.
///
/// For first-order oscillators the bound is `(|ω_j| + λ)/d_j`. For inertial
/// ones it is `|v_j(0)| e^{−d_j t/m_j} + S_j (1 − e^{−d_j t/m_j})` where the
/// checked saturation level is `S_j = (|ω_j| + λ)/d_j`; the alternative level
/// `(|ω_j| + λ)/m_j` is evaluated alongside and reported separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriReport {
    /// Per oscillator: `max_t (|θ̇_j| − bound_j(t))` with the damping-form level.
    pub worst: Vec<f64>,
    /// Same with the `(|ω|+λ)/m` level (inertial oscillators only).
    pub worst_inertia_form: Vec<Option<f64>>,
    pub saturation: Vec<f64>,
    pub saturation_inertia_form: Vec<Option<f64>>,
}

impl AprioriReport {
    /// Largest violation over all oscillators (≤ 0 means the bound held).
    pub fn max_violation(&self) -> f64 {
        self.worst.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_violation_inertia_form(&self) -> Option<f64> {
        self.worst_inertia_form.iter().flatten().copied().reduce(f64::max)
    }
}

pub fn apriori_check(ensemble: &Ensemble, trajectory: &Trajectory) -> AprioriReport {
    let n = ensemble.len();
    let nf = ensemble.n_first();
    let lam = ensemble.coupling();
    let saturation: Vec<f64> = (0..n)
        .map(|j| (ensemble.omega()[j].abs() + lam) / ensemble.damping()[j])
        .collect();
    let saturation_inertia_form: Vec<Option<f64>> = (0..n)
        .map(|j| (j >= nf).then(|| (ensemble.omega()[j].abs() + lam) / ensemble.inertia()[j]))
        .collect();
    let mut worst = vec![f64::NEG_INFINITY; n];
    let mut worst_inertia_form: Vec<Option<f64>> =
        (0..n).map(|j| (j >= nf).then_some(f64::NEG_INFINITY)).collect();
    let Some(first) = trajectory.samples.first() else {
        return AprioriReport {
            worst,
            worst_inertia_form,
            saturation,
            saturation_inertia_form,
        };
    };
    let t0 = first.state.t;
    let v0 = &first.state.v;
    for s in &trajectory.samples {
        let t = s.state.t - t0;
        let freq = frequencies(ensemble, &s.state).expect("trajectory states match their ensemble");
        for j in 0..n {
            if j < nf {
                worst[j] = worst[j].max(freq[j].abs() - saturation[j]);
            } else {
                let i = j - nf;
                let decay = (-ensemble.damping()[j] * t / ensemble.inertia()[j]).exp();
                let init = v0[i].abs() * decay;
                let obs = s.state.v[i].abs();
                worst[j] = worst[j].max(obs - (init + saturation[j] * (1.0 - decay)));
                if let (Some(w), Some(level)) = (&mut worst_inertia_form[j], saturation_inertia_form[j]) {
                    *w = w.max(obs - (init + level * (1.0 - decay)));
                }
            }
        }
    }
    AprioriReport {
        worst,
        worst_inertia_form,
        saturation,
        saturation_inertia_form,
    }
}

/// Landau–Kolmogorov check applied to each oscillator's frequency series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyLk {
    pub per_oscillator: Vec<LkReport>,
    pub all_satisfied: bool,
}

/// Runs [`lk_check`] on `θ̇_j(t)` over the uniformly spaced prefix of the
/// trajectory. Returns `None` when fewer than 5 uniform samples exist.
pub fn frequency_lk(trajectory: &Trajectory) -> Option<FrequencyLk> {
    let samples = &trajectory.samples;
    if samples.len() < 5 {
        return None;
    }
    let h = samples[1].state.t - samples[0].state.t;
    let uniform = samples
        .windows(2)
        .take_while(|w| ((w[1].state.t - w[0].state.t) - h).abs() <= 1e-9 * h.max(1.0))
        .count()
        + 1;
    if uniform < 5 {
        return None;
    }
    let freqs: Vec<Vec<f64>> = samples[..uniform]
        .iter()
        .map(|s| frequencies(&trajectory.ensemble, &s.state).expect("consistent trajectory"))
        .collect();
    let per_oscillator: Vec<LkReport> = (0..trajectory.ensemble.len())
        .map(|j| {
            let series: Vec<f64> = freqs.iter().map(|f| f[j]).collect();
            lk_check(&series, h).expect("at least 5 samples")
        })
        .collect();
    let all_satisfied = per_oscillator.iter().all(|r| r.satisfied);
    Some(FrequencyLk {
        per_oscillator,
        all_satisfied,
    })
}

/// Summary written next to a simulated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    #[serde(rename = "R_final")]
    pub r_final: f64,
    #[serde(rename = "Theta_final")]
    pub theta_final: f64,
    pub max_phase_diameter: f64,
    pub max_energy_residual: f64,
    pub apriori_worst: f64,
    pub apriori_worst_inertia_form: Option<f64>,
    pub momentum_drift: f64,
    pub lk: Option<FrequencyLk>,
}

impl DiagnosticsReport {
    pub fn from_trajectory(trajectory: &Trajectory) -> Self {
        let last = trajectory.last();
        let apriori = apriori_check(&trajectory.ensemble, trajectory);
        Self {
            r_final: last.order.r,
            theta_final: last.order.theta,
            max_phase_diameter: trajectory
                .samples
                .iter()
                .map(|s| phase_diameter(&s.state.theta))
                .fold(0.0, f64::max),
            max_energy_residual: trajectory
                .samples
                .iter()
                .map(|s| s.energy_residual.abs())
                .fold(0.0, f64::max),
            apriori_worst: apriori.max_violation(),
            apriori_worst_inertia_form: apriori.max_violation_inertia_form(),
            momentum_drift: last.momentum - trajectory.first().momentum,
            lk: frequency_lk(trajectory),
        }
    }
}
