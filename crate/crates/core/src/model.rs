//! The hybrid ensemble and its vector field.
//!
//! Oscillators `1..=n` are first order, `n+1..=N` carry inertia:
//!
//! ```text
//! d_j θ̇_j              = ω_j + (λ/N) Σ_k sin(θ_k − θ_j),   j ≤ n
//! m_j θ̈_j + d_j θ̇_j    = ω_j + (λ/N) Σ_k sin(θ_k − θ_j),   j > n
//! ```
//!
//! Phases are kept lifted on the real line. Reducing them mod 2π is a view
//! used by diagnostics, never part of the state.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Model parameters of a hybrid ensemble.
///
/// Indexing is zero-based in code: oscillator `j` (0-based) is first order
/// iff `j < n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnsembleJson", into = "EnsembleJson")]
pub struct Ensemble {
    n_first: usize,
    inertia: Vec<f64>,
    damping: Vec<f64>,
    omega: Vec<f64>,
    coupling: f64,
    omega_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleJson {
    #[serde(rename = "N")]
    big_n: usize,
    n: usize,
    m: Vec<f64>,
    d: Vec<f64>,
    omega: Vec<f64>,
    lambda: f64,
}

impl TryFrom<EnsembleJson> for Ensemble {
    type Error = Error;

    fn try_from(raw: EnsembleJson) -> Result<Self> {
        if raw.m.len() != raw.big_n || raw.d.len() != raw.big_n || raw.omega.len() != raw.big_n {
            return Err(param(format!(
                "arrays m, d, omega must have length N = {} (got {}, {}, {})",
                raw.big_n,
                raw.m.len(),
                raw.d.len(),
                raw.omega.len()
            )));
        }
        Ensemble::new(raw.n, raw.m, raw.d, raw.omega, raw.lambda)
    }
}

impl From<Ensemble> for EnsembleJson {
    fn from(e: Ensemble) -> Self {
        EnsembleJson {
            big_n: e.len(),
            n: e.n_first,
            m: e.inertia,
            d: e.damping,
            omega: e.omega,
            lambda: e.coupling,
        }
    }
}

impl Ensemble {
    /// Validates and builds an ensemble.
    ///
    /// `inertia[j]` must be exactly `0.0` for `j < n_first` and positive
    /// otherwise; all dampings must be positive and the coupling positive.
    pub fn new(
        n_first: usize,
        inertia: Vec<f64>,
        damping: Vec<f64>,
        omega: Vec<f64>,
        coupling: f64,
    ) -> Result<Self> {
        let n = omega.len();
        if n == 0 {
            return Err(param("ensemble needs at least one oscillator"));
        }
        if inertia.len() != n || damping.len() != n {
            return Err(param("inertia, damping and omega must have equal length"));
        }
        if n_first > n {
            return Err(param(format!("n = {n_first} exceeds N = {n}")));
        }
        for (j, &m) in inertia.iter().enumerate() {
            if j < n_first && m != 0.0 {
                return Err(param(format!(
                    "m[{}] = {m} but oscillator {} is first order (must be exactly 0)",
                    j,
                    j + 1
                )));
            }
            if j >= n_first && !(m > 0.0 && m.is_finite()) {
                return Err(param(format!(
                    "m[{}] = {m} but oscillator {} is inertial (must be > 0)",
                    j,
                    j + 1
                )));
            }
        }
        if let Some((j, d)) = damping
            .iter()
            .enumerate()
            .find(|(_, d)| !(**d > 0.0 && d.is_finite()))
        {
            return Err(param(format!("d[{j}] = {d} must be positive")));
        }
        if omega.iter().any(|w| !w.is_finite()) {
            return Err(param("natural frequencies must be finite"));
        }
        if !(coupling > 0.0 && coupling.is_finite()) {
            return Err(param(format!("lambda = {coupling} must be positive")));
        }
        let omega_max = max_abs(&omega);
        Ok(Self {
            n_first,
            inertia,
            damping,
            omega,
            coupling,
            omega_max,
        })
    }

    /// Purely first-order ensemble with the given dampings.
    pub fn first_order(damping: Vec<f64>, omega: Vec<f64>, coupling: f64) -> Result<Self> {
        let n = omega.len();
        Self::new(n, vec![0.0; n], damping, omega, coupling)
    }

    /// Oscillator count `N`.
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// Number of first-order oscillators `n`.
    pub fn n_first(&self) -> usize {
        self.n_first
    }

    /// Number of inertial oscillators `N − n`.
    pub fn n_inertial(&self) -> usize {
        self.len() - self.n_first
    }

    pub fn is_inertial(&self, j: usize) -> bool {
        j >= self.n_first
    }

    pub fn inertia(&self) -> &[f64] {
        &self.inertia
    }

    pub fn damping(&self) -> &[f64] {
        &self.damping
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    /// `ω_M = max_j |ω_j|`, cached at construction.
    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    /// Same oscillators with a different coupling strength.
    pub fn with_coupling(&self, coupling: f64) -> Result<Self> {
        Self::new(
            self.n_first,
            self.inertia.clone(),
            self.damping.clone(),
            self.omega.clone(),
            coupling,
        )
    }

    /// True when `Σ ω_j` vanishes to the normalization tolerance.
    pub fn is_normalized(&self) -> bool {
        let sum: f64 = self.omega.iter().sum();
        sum.abs() <= 1e-12 * self.omega_max.max(1.0) * (self.len() as f64)
    }

    /// True when every natural frequency is (numerically) zero.
    pub fn has_identical_frequencies(&self) -> bool {
        self.omega_max <= 1e-12
    }

    pub(crate) fn check_state(&self, state: &State) -> Result<()> {
        if state.theta.len() != self.len() || state.v.len() != self.n_inertial() {
            return Err(param(format!(
                "state has {} phases and {} velocities, ensemble expects {} and {}",
                state.theta.len(),
                state.v.len(),
                self.len(),
                self.n_inertial()
            )));
        }
        Ok(())
    }
}

fn max_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Phases and inertial velocities at one instant.
///
/// `v[i]` is the velocity of oscillator `n + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub t: f64,
    pub theta: Vec<f64>,
    pub v: Vec<f64>,
}

impl State {
    pub fn new(t: f64, theta: Vec<f64>, v: Vec<f64>) -> Self {
        Self { t, theta, v }
    }

    /// A state with all inertial velocities at rest.
    pub fn at_rest(ensemble: &Ensemble, theta: Vec<f64>) -> Self {
        Self {
            t: 0.0,
            theta,
            v: vec![0.0; ensemble.n_inertial()],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.theta.iter().all(|x| x.is_finite())
            && self.v.iter().all(|x| x.is_finite())
    }

    /// Flattens to `[θ_1..θ_N, v_{n+1}..v_N]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.theta.len() + self.v.len());
        y.extend_from_slice(&self.theta);
        y.extend_from_slice(&self.v);
        y
    }

    pub fn from_slice(t: f64, n_osc: usize, y: &[f64]) -> Self {
        Self {
            t,
            theta: y[..n_osc].to_vec(),
            v: y[n_osc..].to_vec(),
        }
    }
}

/// Result of moving to the co-rotating frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub ensemble: Ensemble,
    /// `(Σ ω) / (Σ d)`: the rate subtracted from every phase velocity.
    pub drift: f64,
}

impl Normalized {
    /// Expresses a state given in the original frame at time `t` in the
    /// co-rotating frame: `θ ← θ − drift·t`, `v ← v − drift`.
    pub fn shift_state(&self, state: &State) -> State {
        State {
            t: state.t,
            theta: state.theta.iter().map(|x| x - self.drift * state.t).collect(),
            v: state.v.iter().map(|x| x - self.drift).collect(),
        }
    }
}

/// Replaces `ω_j` by `ω_j − d_j (Σω)/(Σd)` so that the frequencies sum to zero.
pub fn normalize_frame(ensemble: &Ensemble) -> Result<Normalized> {
    let sum_w: f64 = ensemble.omega.iter().sum();
    let sum_d: f64 = ensemble.damping.iter().sum();
    if !(sum_d > 0.0) {
        return Err(param("dampings must be positive"));
    }
    let drift = sum_w / sum_d;
    let mut omega: Vec<f64> = ensemble
        .omega
        .iter()
        .zip(&ensemble.damping)
        .map(|(w, d)| w - d * drift)
        .collect();
    // Push the leftover round-off into the largest-damping entry.
    let residual: f64 = omega.iter().sum();
    if residual != 0.0 {
        let (k, _) = ensemble
            .damping
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (j, &d)| if d > acc.1 { (j, d) } else { acc });
        omega[k] -= residual;
    }
    let normalized = Ensemble::new(
        ensemble.n_first,
        ensemble.inertia.clone(),
        ensemble.damping.clone(),
        omega,
        ensemble.coupling,
    )?;
    Ok(Normalized {
        ensemble: normalized,
        drift,
    })
}

/// Coupling force `(λ/N) Σ_k sin(θ_k − θ_j)` for every `j`, written into `out`.
///
/// Uses the mean-field identity `Σ_k sin(θ_k − θ_j) = S cos θ_j − C sin θ_j`
/// with `S = Σ sin θ_k`, `C = Σ cos θ_k`.
pub(crate) fn coupling_forces(coupling: f64, theta: &[f64], out: &mut [f64]) {
    let n = theta.len();
    let (mut s, mut c) = (0.0, 0.0);
    for &th in theta {
        let (sn, cs) = th.sin_cos();
        s += sn;
        c += cs;
    }
    let k = coupling / n as f64;
    for (o, &th) in out.iter_mut().zip(theta) {
        let (sn, cs) = th.sin_cos();
        *o = k * (s * cs - c * sn);
    }
}

/// Right-hand side on the flattened state `y = [θ, v]`.
pub(crate) fn rhs_flat(ensemble: &Ensemble, y: &[f64], dy: &mut [f64]) {
    let n = ensemble.len();
    let nf = ensemble.n_first;
    let (theta, v) = y.split_at(n);
    let (dtheta, dv) = dy.split_at_mut(n);
    coupling_forces(ensemble.coupling, theta, dtheta);
    for j in 0..n {
        let force = ensemble.omega[j] + dtheta[j];
        if j < nf {
            dtheta[j] = force / ensemble.damping[j];
        } else {
            let i = j - nf;
            dv[i] = (force - ensemble.damping[j] * v[i]) / ensemble.inertia[j];
            dtheta[j] = v[i];
        }
    }
}

/// Time derivative of the state.
///
/// Returns `(θ̇, v̇)`: `θ̇` has length `N`, `v̇` has length `N − n`.
pub fn vector_field(ensemble: &Ensemble, state: &State) -> Result<(Vec<f64>, Vec<f64>)> {
    ensemble.check_state(state)?;
    let y = state.to_vec();
    let mut dy = vec![0.0; y.len()];
    rhs_flat(ensemble, &y, &mut dy);
    let dv = dy.split_off(ensemble.len());
    Ok((dy, dv))
}

/// Instantaneous frequencies `θ̇_j` of all oscillators (first-order ones are
/// evaluated from the vector field, inertial ones read from the state).
pub fn frequencies(ensemble: &Ensemble, state: &State) -> Result<Vec<f64>> {
    vector_field(ensemble, state).map(|(dtheta, _)| dtheta)
}

/// Stationarity residuals `g_j(θ) = ω_j + (λ/N) Σ_k sin(θ_k − θ_j)`.
pub fn stationarity_residual(ensemble: &Ensemble, theta: &[f64]) -> Result<Vec<f64>> {
    if theta.len() != ensemble.len() {
        return Err(param(format!(
            "expected {} phases, got {}",
            ensemble.len(),
            theta.len()
        )));
    }
    let n = theta.len();
    let k = ensemble.coupling / n as f64;
    // Direct pairwise sum; the residual is used as an equilibrium certificate.
    Ok((0..n)
        .map(|j| {
            let s: f64 = theta.iter().map(|tk| (tk - theta[j]).sin()).sum();
            ensemble.omega[j] + k * s
        })
        .collect())
}

/// Conserved quantity `M = Σ d_j θ_j + Σ_{j>n} m_j v_j`.
pub fn momentum(ensemble: &Ensemble, state: &State) -> Result<f64> {
    ensemble.check_state(state)?;
    Ok(momentum_unchecked(ensemble, &state.theta, &state.v))
}

pub(crate) fn momentum_unchecked(ensemble: &Ensemble, theta: &[f64], v: &[f64]) -> f64 {
    let nf = ensemble.n_first;
    let phase: f64 = ensemble.damping.iter().zip(theta).map(|(d, t)| d * t).sum();
    let kinetic: f64 = ensemble.inertia[nf..].iter().zip(v).map(|(m, v)| m * v).sum();
    phase + kinetic
}
