//! The single-oscillator limit system
//!
//! ```text
//! m v̇ = −d v + ω + λR* sin(Θ* − θ),    θ̇ = v
//! ```
//!
//! obtained once the order parameter of a run has settled at
//! `R* e^{iΘ*}`. Its divergence is the constant `−d/m`, it has two, one or
//! no equilibria depending on `λR*` versus `|ω|`, and running orbits are
//! probed with a return map on the section `θ = θ₀ (mod 2π)`, `v > 0`.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{detect_opss, Tolerances, Verdict};
use crate::diagnostics::wrap_step;
use crate::error::{param, Error, Result};
use crate::integrator::{locate_crossing, Crossing, Flow, NotFound, Rk4, Trajectory};

/// Relative tolerance under which `λR* = |ω|` is treated as tangency.
pub const TANGENCY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitParams {
    pub m: f64,
    pub d: f64,
    pub omega: f64,
    #[serde(rename = "lamR")]
    pub lam_r: f64,
    #[serde(rename = "Theta_star", default)]
    pub theta_star: f64,
}

impl LimitParams {
    pub fn new(m: f64, d: f64, omega: f64, lam_r: f64, theta_star: f64) -> Result<Self> {
        let p = Self {
            m,
            d,
            omega,
            lam_r,
            theta_star,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.m.is_finite()) || !(self.d > 0.0 && self.d.is_finite()) {
            return Err(param("limit system needs m > 0 and d > 0"));
        }
        if !(self.lam_r >= 0.0 && self.lam_r.is_finite()) {
            return Err(param("lamR must be non-negative"));
        }
        if !self.omega.is_finite() || !self.theta_star.is_finite() {
            return Err(param("omega and Theta_star must be finite"));
        }
        Ok(())
    }
}

/// `(v̇, θ̇)`.
pub fn limit_vector_field(p: &LimitParams, v: f64, theta: f64) -> (f64, f64) {
    (
        (-p.d * v + p.omega + p.lam_r * (p.theta_star - theta).sin()) / p.m,
        v,
    )
}

/// Solutions of `ω + λR* sin(Θ* − θ) = 0`, wrapped into `(−π, π]`.
///
/// The first angle (when present) is the one with `cos(Θ* − θ) ≥ 0`, the
/// stable equilibrium of the limit system and the anchor of the return-map
/// section.
pub fn equilibrium_angles(omega: f64, lam_r: f64, theta_star: f64) -> Vec<f64> {
    // λR* = 0 has no isolated equilibria (a circle of them when ω = 0).
    if lam_r <= 0.0 {
        return Vec::new();
    }
    let q = -omega / lam_r;
    if q.abs() > 1.0 + TANGENCY_TOL {
        return Vec::new();
    }
    let q = q.clamp(-1.0, 1.0);
    let a = wrap_step(theta_star - q.asin());
    if 1.0 - q.abs() <= TANGENCY_TOL {
        return vec![a];
    }
    vec![a, wrap_step(theta_star - PI + q.asin())]
}

pub fn limit_equilibria(p: &LimitParams) -> Vec<f64> {
    equilibrium_angles(p.omega, p.lam_r, p.theta_star)
}

/// Central finite-difference estimate of `∂v̇/∂v + ∂θ̇/∂θ` at `samples`
/// random points (`v ∈ [−10, 10]`, `θ ∈ (−π, π]`); returns the largest
/// deviation from `−d/m`. Uses `h = 1e-5`.
pub fn divergence_check(p: &LimitParams, samples: usize, seed: u64) -> f64 {
    divergence_check_with_step(p, samples, 1e-5, seed)
}

pub fn divergence_check_with_step(p: &LimitParams, samples: usize, h: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exact = -p.d / p.m;
    (0..samples)
        .map(|_| {
            let v = 20.0 * rng.gen::<f64>() - 10.0;
            let theta = TAU * rng.gen::<f64>() - PI;
            let dv = (limit_vector_field(p, v + h, theta).0 - limit_vector_field(p, v - h, theta).0) / (2.0 * h);
            let dth = (limit_vector_field(p, v, theta + h).1 - limit_vector_field(p, v, theta - h).1) / (2.0 * h);
            (dv + dth - exact).abs()
        })
        .fold(0.0, f64::max)
}

/// `L = m v²/2 − ω θ − λR* cos(Θ* − θ)` on the lifted plane; along
/// solutions `dL/dt = −d v²`.
#[allow(non_snake_case)]
pub fn lyapunov_L(p: &LimitParams, v: f64, theta_lifted: f64) -> f64 {
    0.5 * p.m * v * v - p.omega * theta_lifted - p.lam_r * (p.theta_star - theta_lifted).cos()
}

/// Limit field augmented with `q = ∫ v² dt`: state `(v, θ, q)`.
struct Augmented<'a>(&'a LimitParams);

impl Flow for Augmented<'_> {
    fn dim(&self) -> usize {
        3
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let (a, b) = limit_vector_field(self.0, y[0], y[1]);
        dy[0] = a;
        dy[1] = b;
        dy[2] = y[0] * y[0];
    }
}

/// Fixed-step RK4 solution of the limit system from `(v, θ)`, returning
/// `(t, v, θ)` at every step.
pub fn integrate_limit(p: &LimitParams, v: f64, theta: f64, dt: f64, t_end: f64) -> Result<Vec<[f64; 3]>> {
    p.validate()?;
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(param("dt must be positive and t_end non-negative"));
    }
    let flow = Augmented(p);
    let mut rk = Rk4::new(3);
    let mut y = [v, theta, 0.0];
    let steps = (t_end / dt).round() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    out.push([0.0, v, theta]);
    for i in 0..steps {
        rk.step(&flow, i as f64 * dt, &mut y, dt);
        out.push([(i + 1) as f64 * dt, y[0], y[1]]);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoincareConfig {
    pub dt: f64,
    /// Give up (uncrossed) after this much time.
    pub t_max: f64,
}

impl Default for PoincareConfig {
    fn default() -> Self {
        Self { dt: 1e-5, t_max: 200.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoincareResult {
    pub v0: f64,
    /// First return time; NaN when the orbit did not return.
    pub tau: f64,
    /// Velocity at the return; NaN when the orbit did not return.
    #[serde(rename = "P")]
    pub p: f64,
    /// `(P² − v0²) − [4πω/m − (2d/m)∫₀^τ v² dt]`.
    pub energy_residual: f64,
    /// `P − e^{(d/m)τ} v0`.
    pub exp_identity_residual: f64,
    pub crossed: bool,
}

/// Section anchor `θ₀`: the stable equilibrium angle.
pub fn section_anchor(p: &LimitParams) -> Result<f64> {
    limit_equilibria(p).first().copied().ok_or_else(|| {
        Error::Refused(format!(
            "drift regime: lamR = {} < |omega| = {}, the return-map section does not exist",
            p.lam_r,
            p.omega.abs()
        ))
    })
}

pub fn poincare_return(p: &LimitParams, v0: f64) -> Result<PoincareResult> {
    poincare_return_with(p, v0, &PoincareConfig::default())
}

/// Integrates from `(v0, θ₀)` until `θ = θ₀ + 2π`. An orbit whose velocity
/// reaches zero first is captured by an equilibrium and reported as not
/// crossed.
pub fn poincare_return_with(p: &LimitParams, v0: f64, cfg: &PoincareConfig) -> Result<PoincareResult> {
    p.validate()?;
    if !(v0 > 0.0 && v0.is_finite()) {
        return Err(param("v0 must be positive"));
    }
    if !(cfg.dt > 0.0) || !(cfg.t_max > 0.0) {
        return Err(param("Poincaré dt and t_max must be positive"));
    }
    let theta0 = section_anchor(p)?;
    let flow = Augmented(p);
    let missed = PoincareResult {
        v0,
        tau: f64::NAN,
        p: f64::NAN,
        energy_residual: f64::NAN,
        exp_identity_residual: f64::NAN,
        crossed: false,
    };
    match locate_crossing(&flow, 0.0, &[v0, theta0, 0.0], 1, theta0 + TAU, cfg.dt, cfg.t_max, |_, y| {
        y[0] <= 0.0
    }) {
        Crossing::Found { t, y } => {
            let (pv, q) = (y[0], y[2]);
            let energy_residual = (pv * pv - v0 * v0) - (2.0 * TAU * p.omega / p.m - 2.0 * p.d / p.m * q);
            Ok(PoincareResult {
                v0,
                tau: t,
                p: pv,
                energy_residual,
                exp_identity_residual: pv - (p.d / p.m * t).exp() * v0,
                crossed: true,
            })
        }
        Crossing::NotFound(NotFound::Fault { t }) => Err(Error::Integration {
            t,
            message: "non-finite limit-system state".into(),
        }),
        Crossing::NotFound(_) => Ok(missed),
    }
}

/// Return map over a grid of initial velocities, computed in parallel and
/// reported in grid order.
pub fn poincare_sweep(p: &LimitParams, v0_grid: &[f64], cfg: &PoincareConfig) -> Result<Vec<PoincareResult>> {
    v0_grid.par_iter().map(|&v0| poincare_return_with(p, v0, cfg)).collect()
}

pub fn write_poincare_csv<W: Write>(results: &[PoincareResult], mut w: W) -> std::io::Result<()> {
    writeln!(w, "v0,tau,P,energy_residual,exp_identity_residual,crossed")?;
    for r in results {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.v0, r.tau, r.p, r.energy_residual, r.exp_identity_residual, r.crossed
        )?;
    }
    Ok(())
}

/// How closely one oscillator of a full run follows the limit system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutonomyReport {
    pub oscillator: usize,
    #[serde(rename = "R_star")]
    pub r_star: f64,
    #[serde(rename = "Theta_star")]
    pub theta_star: f64,
    /// `sup_tail |R − R*| + |Θ − Θ*|` with `Θ` unwrapped.
    pub tail_deviation: f64,
    /// Distance of the final `(θ̇_j, θ_j mod 2π)` to the nearest limit
    /// equilibrium `(0, θ_eq)`; infinite when the limit system has none.
    pub equilibrium_distance: f64,
    pub equilibria: Vec<f64>,
}

/// Compares oscillator `j` (0-based) of a full trajectory with its limit
/// system. Returns `None` unless the order-parameter detector says the run
/// settled.
pub fn autonomy_audit(trajectory: &Trajectory, j: usize, tol: &Tolerances) -> Result<Option<AutonomyReport>> {
    let ens = &trajectory.ensemble;
    if j >= ens.len() {
        return Err(param(format!("oscillator index {j} out of range")));
    }
    let opss = detect_opss(trajectory, tol);
    if opss.verdict != Verdict::True {
        return Ok(None);
    }
    let start = trajectory
        .samples
        .iter()
        .position(|s| s.state.t >= trajectory.last().state.t - tol.tail_fraction * trajectory.horizon())
        .unwrap_or(0);
    let tail = &trajectory.samples[start..];
    let count = tail.len() as f64;
    let r_star = tail.iter().map(|s| s.order.r).sum::<f64>() / count;
    let theta_lifted = tail.iter().map(|s| s.order.theta).sum::<f64>() / count;
    let tail_deviation = tail
        .iter()
        .map(|s| (s.order.r - r_star).abs() + (s.order.theta - theta_lifted).abs())
        .fold(0.0, f64::max);
    let theta_star = wrap_step(theta_lifted);
    let equilibria = equilibrium_angles(ens.omega()[j], ens.coupling() * r_star, theta_star);
    let last = &trajectory.last().state;
    let freq = crate::model::frequencies(ens, last)?[j];
    let equilibrium_distance = equilibria
        .iter()
        .map(|e| freq.hypot(wrap_step(last.theta[j] - e)))
        .fold(f64::INFINITY, f64::min);
    Ok(Some(AutonomyReport {
        oscillator: j,
        r_star,
        theta_star,
        tail_deviation,
        equilibrium_distance,
        equilibria,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> LimitParams {
        LimitParams::new(1.0, 1.0, 0.5, 0.5, 0.0).unwrap()
    }

    #[test]
    fn vector_field_examples() {
        assert_eq!(limit_vector_field(&base(), 1.0, 0.0), (-0.5, 1.0));
        let p = LimitParams::new(2.0, 3.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(limit_vector_field(&p, 1.0, 0.7), (-1.5, 1.0));
        let p = LimitParams::new(1.0, 1.0, 0.3, 1.0, 0.2).unwrap();
        for th in limit_equilibria(&p) {
            let (a, b) = limit_vector_field(&p, 0.0, th);
            assert!(a.abs() < 1e-15 && b == 0.0);
        }
    }

    #[test]
    fn equilibria_count() {
        let two = LimitParams::new(1.0, 1.0, 0.3, 1.0, 0.0).unwrap();
        assert_eq!(limit_equilibria(&two).len(), 2);
        assert_eq!(limit_equilibria(&base()).len(), 1);
        assert!((section_anchor(&base()).unwrap() - PI / 2.0).abs() < 1e-15);
        let drift = LimitParams::new(1.0, 1.0, 0.6, 0.5, 0.0).unwrap();
        assert!(limit_equilibria(&drift).is_empty());
        assert!(matches!(poincare_return(&drift, 1.0), Err(Error::Refused(_))));
        let sym = LimitParams::new(1.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        let mut e = limit_equilibria(&sym);
        e.sort_by(f64::total_cmp);
        assert_eq!(e, vec![0.0, PI]);
    }

    #[test]
    fn divergence_is_constant() {
        let p = LimitParams::new(4.0, 2.0, 0.3, 1.2, 0.4).unwrap();
        assert!(divergence_check(&p, 100, 1) <= 1e-6);
        assert!(divergence_check(&base(), 100, 2) <= 1e-6);
    }

    #[test]
    fn lyapunov_examples() {
        let p = LimitParams::new(1.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(lyapunov_L(&p, 0.0, 0.0), -1.0);
    }

    #[test]
    fn slow_orbit_is_captured() {
        let r = poincare_return(&base(), 0.01).unwrap();
        assert!(!r.crossed);
        assert!(r.tau.is_nan());
    }

    #[test]
    fn csv_header() {
        let mut buf = Vec::new();
        write_poincare_csv(&[], &mut buf).unwrap();
        assert_eq!(buf, b"v0,tau,P,energy_residual,exp_identity_residual,crossed\n");
    }
}
