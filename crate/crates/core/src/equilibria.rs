//! Phase-locked equilibria modulo the common phase shift.
//!
//! An equilibrium satisfies `ω_j + λ r sin(Ψ − ψ_j) = 0` with
//! `r e^{iΨ} = (1/N) Σ e^{iψ_j}`. For `x = λr` and a sign vector `σ`, the
//! relative angles `Δ_j = Ψ − ψ_j` are fixed by
//!
//! ```text
//! sin Δ_j = −ω_j / x,    cos Δ_j = σ_j √(1 − (ω_j/x)²)
//! ```
//!
//! and self-consistency of the order parameter reduces to one scalar
//! equation per sign vector,
//!
//! ```text
//! H_σ(x) = x − (λ/N) Σ_j σ_j √(1 − (ω_j/x)²) = 0,    x ∈ [ω_M, λ].
//! ```
//!
//! [`enumerate_equilibria`] sweeps all `2^N` sign vectors, roots every
//! `H_σ`, rebuilds the angles and validates the result. A grid-plus-Newton
//! search on the torus ([`brute_force_equilibria`]) serves as an
//! independent oracle for small `N`.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{order_parameter, wrap_step};
use crate::error::{param, Error, Result};
use crate::model::{stationarity_residual, Ensemble};

/// Default number of uniform cells used to bracket roots of `H_σ`.
pub const DEFAULT_CELLS: usize = 4096;
/// Largest `N` for which the exhaustive sign sweep runs.
pub const MAX_SWEEP_N: usize = 20;
/// Largest `N` accepted by the brute-force oracle.
pub const MAX_ORACLE_N: usize = 4;

const ROOT_DEDUP: f64 = 1e-9;
const CLASS_DEDUP: f64 = 1e-8;
const TRIG_TOL: f64 = 1e-10;
const CONSISTENCY_TOL: f64 = 1e-9;
const RESIDUAL_TOL: f64 = 1e-9;

/// One equilibrium class: relative angles `Δ_j = Ψ − ψ_j` plus a
/// representative with `Ψ = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumClass {
    pub r: f64,
    pub sigma: Vec<i8>,
    #[serde(rename = "Delta")]
    pub delta: Vec<f64>,
    pub representative: Vec<f64>,
    pub residual: f64,
    /// `r = 0` configuration, outside the `H_σ` parametrization (only
    /// produced for identical frequencies).
    #[serde(default)]
    pub degenerate: bool,
}

/// Result of [`enumerate_equilibria`], sorted by `r` descending.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EquilibriumSet {
    pub classes: Vec<EquilibriumClass>,
    /// Set when `ω ≡ 0` and `N ≥ 4`: zero-order-parameter equilibria may
    /// form continua and are not listed.
    pub degenerate_family: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl EquilibriumSet {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

fn h_sigma(lambda: f64, omega: &[f64], sigma: &[i8], x: f64) -> f64 {
    let n = omega.len() as f64;
    let s: f64 = omega
        .iter()
        .zip(sigma)
        .map(|(w, &sg)| f64::from(sg) * cos_term(*w, x))
        .sum();
    x - lambda / n * s
}

fn cos_term(w: f64, x: f64) -> f64 {
    let q = w / x;
    (1.0 - q * q).max(0.0).sqrt()
}

/// Roots of `H_σ` on `[ω_M, λ]`.
///
/// Uniform subdivision into [`DEFAULT_CELLS`] cells, bisection on every sign
/// change, and a golden-section probe at interior local minima of `|H|` to
/// catch tangential roots. Returns an empty list when `λ < ω_M`.
pub fn solve_h_sigma(ensemble: &Ensemble, sigma: &[i8]) -> Result<Vec<f64>> {
    solve_h_sigma_with(ensemble, sigma, DEFAULT_CELLS)
}

pub fn solve_h_sigma_with(ensemble: &Ensemble, sigma: &[i8], cells: usize) -> Result<Vec<f64>> {
    if sigma.len() != ensemble.len() || sigma.iter().any(|s| s.abs() != 1) {
        return Err(param("sign vector must have N entries of ±1"));
    }
    if cells == 0 {
        return Err(param("cell count must be positive"));
    }
    let lambda = ensemble.coupling();
    let w_max = ensemble.omega_max();
    if lambda < w_max {
        return Ok(Vec::new());
    }
    if ensemble.has_identical_frequencies() {
        let x = lambda * sigma.iter().map(|&s| f64::from(s)).sum::<f64>() / ensemble.len() as f64;
        return Ok(if x > 0.0 { vec![x] } else { Vec::new() });
    }
    let omega = ensemble.omega();
    let h = |x: f64| h_sigma(lambda, omega, sigma, x);
    let nodes = grid(w_max, lambda, cells);
    let values: Vec<f64> = nodes.iter().map(|&x| h(x)).collect();
    Ok(refine_roots(&h, &nodes, &values))
}

fn grid(lo: f64, hi: f64, cells: usize) -> Vec<f64> {
    (0..=cells)
        .map(|i| if i == cells { hi } else { lo + (hi - lo) * i as f64 / cells as f64 })
        .collect()
}

/// Turns sampled values of a scalar function into isolated roots.
fn refine_roots(h: &dyn Fn(f64) -> f64, nodes: &[f64], values: &[f64]) -> Vec<f64> {
    let scale = nodes.last().map_or(1.0, |x| x.abs().max(1.0));
    let mut roots = Vec::new();
    for (i, (&x, &v)) in nodes.iter().zip(values).enumerate() {
        if v == 0.0 {
            roots.push(x);
        }
        if i + 1 < nodes.len() {
            let (x1, v1) = (nodes[i + 1], values[i + 1]);
            if v != 0.0 && v1 != 0.0 && (v < 0.0) != (v1 < 0.0) {
                roots.push(bisect(h, x, x1, v));
            }
        }
        if i > 0 && i + 1 < nodes.len() {
            let (vl, vr) = (values[i - 1], values[i + 1]);
            let same_sign = (vl < 0.0) == (v < 0.0) && (v < 0.0) == (vr < 0.0);
            if same_sign && v != 0.0 && v.abs() <= vl.abs() && v.abs() <= vr.abs() {
                let (xm, hm) = golden_min_abs(h, nodes[i - 1], nodes[i + 1]);
                if hm.abs() <= 1e-12 * scale {
                    roots.push(xm);
                }
            }
        }
    }
    roots.sort_by(|a, b| a.total_cmp(b));
    roots.dedup_by(|a, b| (*a - *b).abs() <= ROOT_DEDUP);
    roots
}

fn bisect(h: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, mut ha: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let hm = h(m);
        if hm == 0.0 {
            return m;
        }
        if (hm < 0.0) == (ha < 0.0) {
            a = m;
            ha = hm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn golden_min_abs(h: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (h(c).abs(), h(d).abs());
    for _ in 0..100 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = h(c).abs();
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = h(d).abs();
        }
    }
    let x = 0.5 * (a + b);
    (x, h(x))
}

fn wrap_angle(x: f64) -> f64 {
    wrap_step(x)
}

/// Rebuilds the relative angles for a root `r` of `H_σ` and validates the
/// class invariants; inconsistent `(r, σ)` pairings are rejected.
pub fn reconstruct_phases(ensemble: &Ensemble, r: f64, sigma: &[i8]) -> Result<EquilibriumClass> {
    let n = ensemble.len();
    if sigma.len() != n {
        return Err(param("sign vector must have N entries"));
    }
    if !(r > 0.0 && r <= 1.0 + 1e-12) {
        return Err(param(format!("candidate rejected: r = {r} outside (0, 1]")));
    }
    let x = ensemble.coupling() * r;
    let mut delta = Vec::with_capacity(n);
    for (j, (&w, &sg)) in ensemble.omega().iter().zip(sigma).enumerate() {
        let s = -w / x;
        if s.abs() > 1.0 + 1e-12 {
            return Err(param(format!("candidate rejected: |ω_{}/(λr)| = {} > 1", j + 1, s.abs())));
        }
        let s = s.clamp(-1.0, 1.0);
        let c = f64::from(sg) * (1.0 - s * s).max(0.0).sqrt();
        let d = wrap_angle(s.atan2(c));
        if (d.sin() - s).abs() > TRIG_TOL || (d.cos() - c).abs() > TRIG_TOL {
            return Err(param(format!("candidate rejected: angle {j} inconsistent")));
        }
        delta.push(d);
    }
    let sum_cos: f64 = delta.iter().map(|d| d.cos()).sum();
    let sum_sin: f64 = delta.iter().map(|d| d.sin()).sum();
    if (sum_cos - r * n as f64).abs() > CONSISTENCY_TOL {
        return Err(param(format!(
            "candidate rejected: self-consistency defect {:e}",
            sum_cos - r * n as f64
        )));
    }
    if sum_sin.abs() > CONSISTENCY_TOL {
        return Err(param(format!("candidate rejected: Σ sin Δ = {sum_sin:e}")));
    }
    let representative: Vec<f64> = delta.iter().map(|d| -d).collect();
    let residual = max_abs(&stationarity_residual(ensemble, &representative)?);
    if residual > RESIDUAL_TOL {
        return Err(param(format!("candidate rejected: stationarity residual {residual:e}")));
    }
    Ok(EquilibriumClass {
        r,
        sigma: sigma.to_vec(),
        delta,
        representative,
        residual,
        degenerate: false,
    })
}

fn max_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn sigma_of(bits: u64, n: usize) -> Vec<i8> {
    (0..n).map(|j| if bits >> j & 1 == 1 { -1 } else { 1 }).collect()
}

/// Largest circular distance between two angle sequences.
pub fn circular_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| wrap_step(x - y).abs())
        .fold(0.0, f64::max)
}

fn push_unique(classes: &mut Vec<EquilibriumClass>, c: EquilibriumClass) {
    if !classes
        .iter()
        .any(|k| circular_distance(&k.delta, &c.delta) <= CLASS_DEDUP)
    {
        classes.push(c);
    }
}

fn sort_classes(classes: &mut [EquilibriumClass]) {
    classes.sort_by(|a, b| {
        b.r.total_cmp(&a.r).then_with(|| {
            a.delta
                .iter()
                .zip(&b.delta)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
}

/// All equilibrium classes of a normalized ensemble.
pub fn enumerate_equilibria(ensemble: &Ensemble) -> Result<EquilibriumSet> {
    enumerate_equilibria_with(ensemble, DEFAULT_CELLS)
}

pub fn enumerate_equilibria_with(ensemble: &Ensemble, cells: usize) -> Result<EquilibriumSet> {
    let n = ensemble.len();
    if n > MAX_SWEEP_N {
        return Err(Error::Refused(format!(
            "N = {n} exceeds the exhaustive sign sweep limit of {MAX_SWEEP_N} (2^N sign vectors); \
             reduce N or study subsets of oscillators"
        )));
    }
    if !ensemble.is_normalized() {
        return Err(param("ensemble must be normalized (Σω = 0); apply normalize_frame first"));
    }
    let lambda = ensemble.coupling();
    if lambda < ensemble.omega_max() {
        return Ok(EquilibriumSet {
            note: Some("no solution: λ < ω_M while r ≤ 1".into()),
            ..Default::default()
        });
    }
    let total: u64 = 1 << n;
    let mut candidates: Vec<EquilibriumClass> = if ensemble.has_identical_frequencies() {
        (0..total)
            .filter_map(|bits| {
                let sigma = sigma_of(bits, n);
                let sum: i32 = sigma.iter().map(|&s| i32::from(s)).sum();
                (sum > 0).then(|| reconstruct_phases(ensemble, f64::from(sum) / n as f64, &sigma).ok())?
            })
            .collect()
    } else {
        sweep_sign_vectors(ensemble, cells)
    };
    sort_classes(&mut candidates);
    let mut classes = Vec::new();
    for c in candidates {
        push_unique(&mut classes, c);
    }

    let mut set = EquilibriumSet::default();
    if ensemble.has_identical_frequencies() {
        if n <= 3 {
            for psi in brute_force_equilibria(ensemble, default_oracle_grid(n))? {
                let (r, delta) = relative_angles(&psi);
                if r > 1e-6 {
                    continue;
                }
                let residual = max_abs(&stationarity_residual(ensemble, &psi)?);
                let sigma = delta.iter().map(|d| if d.cos() >= 0.0 { 1 } else { -1 }).collect();
                push_unique(
                    &mut classes,
                    EquilibriumClass {
                        r: 0.0,
                        sigma,
                        representative: delta.iter().map(|d| -d).collect(),
                        delta,
                        residual,
                        degenerate: true,
                    },
                );
            }
        } else {
            set.degenerate_family = true;
            set.note = Some("degenerate r = 0 family (possible continuum) not listed".into());
        }
    }
    sort_classes(&mut classes);
    set.classes = classes;
    Ok(set)
}

/// Gray-code sweep: consecutive sign vectors differ in one entry, so the
/// sampled `H_σ` values are updated in `O(cells)` per vector.
fn sweep_sign_vectors(ensemble: &Ensemble, cells: usize) -> Vec<EquilibriumClass> {
    let n = ensemble.len();
    let lambda = ensemble.coupling();
    let omega = ensemble.omega();
    let nodes = grid(ensemble.omega_max(), lambda, cells);
    let scale = lambda / n as f64;
    // terms[j][i] = (λ/N) √(1 − (ω_j/x_i)²)
    let terms: Vec<Vec<f64>> = omega
        .iter()
        .map(|&w| nodes.iter().map(|&x| scale * cos_term(w, x)).collect())
        .collect();
    let total: u64 = 1 << n;
    let chunk: u64 = 1 << n.saturating_sub(6).min(14);
    let starts: Vec<u64> = (0..total).step_by(chunk as usize).collect();
    let mut out: Vec<(u64, Vec<EquilibriumClass>)> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + chunk).min(total);
            let mut found = Vec::new();
            let mut gray = start ^ (start >> 1);
            let mut values: Vec<f64> = nodes
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    x - (0..n)
                        .map(|j| if gray >> j & 1 == 1 { -terms[j][i] } else { terms[j][i] })
                        .sum::<f64>()
                })
                .collect();
            for idx in start..end {
                if idx > start {
                    let flip = idx.trailing_zeros() as usize;
                    gray ^= 1 << flip;
                    // σ_flip changed sign: H moves by ±2 (λ/N) term.
                    let sign = if gray >> flip & 1 == 1 { 2.0 } else { -2.0 };
                    for (v, t) in values.iter_mut().zip(&terms[flip]) {
                        *v += sign * t;
                    }
                }
                let sigma = sigma_of(gray, n);
                let h = |x: f64| h_sigma(lambda, omega, &sigma, x);
                // Exact re-evaluation at the sampled nodes removes drift from
                // the incremental updates before bracketing.
                if !values.iter().any(|v| v.abs() <= 1e-6 * lambda.max(1.0))
                    && values.windows(2).all(|w| (w[0] < 0.0) == (w[1] < 0.0))
                    && !has_interior_dip(&values)
                {
                    continue;
                }
                let exact: Vec<f64> = nodes.iter().map(|&x| h(x)).collect();
                for x in refine_roots(&h, &nodes, &exact) {
                    if let Ok(c) = reconstruct_phases(ensemble, x / lambda, &sigma) {
                        found.push(c);
                    }
                }
            }
            (start, found)
        })
        .collect();
    out.sort_by_key(|(s, _)| *s);
    out.into_iter().flat_map(|(_, v)| v).collect()
}

fn has_interior_dip(values: &[f64]) -> bool {
    values
        .windows(3)
        .any(|w| w[1].abs() <= w[0].abs() && w[1].abs() <= w[2].abs() && w[1].abs() <= 1e-3)
}

/// Shifts a class representative along its orbit `ψ + s·1` so that
/// `Σ d_j ψ_j = c0` (the conserved quantity of a run at rest).
pub fn gauge_anchor(class: &EquilibriumClass, ensemble: &Ensemble, c0: f64) -> Vec<f64> {
    anchor(&class.representative, ensemble.damping(), c0)
}

fn anchor(psi: &[f64], damping: &[f64], c0: f64) -> Vec<f64> {
    let sum_d: f64 = damping.iter().sum();
    let weighted: f64 = damping.iter().zip(psi).map(|(d, p)| d * p).sum();
    let s = (c0 - weighted) / sum_d;
    psi.iter().map(|p| p + s).collect()
}

/// Closest anchored class to a lifted configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearestClass {
    pub index: usize,
    /// `max_j |θ_j − anchored_j|`.
    pub distance: f64,
    pub anchored: Vec<f64>,
}

/// Matches `theta` against every class lifted by `2π` integer offsets and
/// anchored to the conserved quantity `c0`.
pub fn nearest_class(set: &EquilibriumSet, ensemble: &Ensemble, theta: &[f64], c0: f64) -> Option<NearestClass> {
    set.classes
        .iter()
        .enumerate()
        .map(|(index, class)| {
            let psi = &class.representative;
            let (mut re, mut im) = (0.0, 0.0);
            for (t, p) in theta.iter().zip(psi) {
                let (s, c) = (t - p).sin_cos();
                re += c;
                im += s;
            }
            let shift = im.atan2(re);
            let lifted: Vec<f64> = theta
                .iter()
                .zip(psi)
                .map(|(t, p)| p + TAU * ((t - p - shift) / TAU).round())
                .collect();
            let anchored = anchor(&lifted, ensemble.damping(), c0);
            let distance = theta
                .iter()
                .zip(&anchored)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            NearestClass {
                index,
                distance,
                anchored,
            }
        })
        .min_by(|a, b| a.distance.total_cmp(&b.distance))
}

/// `(r, Δ)` of a configuration, with `Δ_j = Ψ − ψ_j` wrapped into `(−π, π]`.
/// When `r` vanishes `Ψ` is taken as 0.
pub fn relative_angles(psi: &[f64]) -> (f64, Vec<f64>) {
    let z = order_parameter(psi);
    let big_psi = if z.r > 1e-9 { z.theta } else { 0.0 };
    (z.r, psi.iter().map(|p| wrap_angle(big_psi - p)).collect())
}

/// Enumerator versus oracle, compared on `Δ` sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub enumerated: usize,
    pub oracle: usize,
    /// Largest distance from an oracle configuration to its matched class.
    pub max_delta_error: f64,
    pub unmatched_oracle: Vec<Vec<f64>>,
    pub unmatched_enumerated: Vec<usize>,
    pub agree: bool,
}

/// Matches every oracle configuration to an enumerated class within `tol`
/// (circular distance of `Δ` sequences).
pub fn compare_with_oracle(set: &EquilibriumSet, oracle: &[Vec<f64>], tol: f64) -> OracleComparison {
    let mut used = vec![false; set.classes.len()];
    let mut unmatched_oracle = Vec::new();
    let mut max_delta_error = 0.0_f64;
    for psi in oracle {
        let (_, delta) = relative_angles(psi);
        let best = set
            .classes
            .iter()
            .enumerate()
            .map(|(i, c)| (i, circular_distance(&c.delta, &delta)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((i, dist)) if dist <= tol => {
                used[i] = true;
                max_delta_error = max_delta_error.max(dist);
            }
            _ => unmatched_oracle.push(delta),
        }
    }
    let unmatched_enumerated: Vec<usize> = (0..used.len()).filter(|&i| !used[i]).collect();
    OracleComparison {
        enumerated: set.classes.len(),
        oracle: oracle.len(),
        max_delta_error,
        agree: unmatched_oracle.is_empty() && unmatched_enumerated.is_empty() && set.classes.len() == oracle.len(),
        unmatched_oracle,
        unmatched_enumerated,
    }
}

/// Grid resolution used by the oracle when none is given.
pub fn default_oracle_grid(n: usize) -> usize {
    match n {
        0..=2 => 720,
        3 => 240,
        _ => 60,
    }
}

/// Independent oracle: grid scan of the torus with `ψ_1 = 0`, damped
/// Newton on `g_2..g_N` from every cell where `Σ g_j²` is a local minimum,
/// then de-duplication. Returned configurations have `ψ_1 = 0` and other
/// entries in `(−π, π]`.
pub fn brute_force_equilibria(ensemble: &Ensemble, grid_per_axis: usize) -> Result<Vec<Vec<f64>>> {
    let n = ensemble.len();
    if n > MAX_ORACLE_N {
        return Err(Error::Refused(format!("brute-force oracle supports N ≤ {MAX_ORACLE_N}, got {n}")));
    }
    if grid_per_axis < 4 {
        return Err(param("grid needs at least 4 points per axis"));
    }
    if n == 1 {
        return Ok(if ensemble.omega()[0].abs() <= 1e-12 { vec![vec![0.0]] } else { Vec::new() });
    }
    let dims = n - 1;
    let g = grid_per_axis;
    let cells = g.pow(dims as u32);
    let at = |idx: usize| -> Vec<f64> {
        let mut psi = vec![0.0; n];
        let mut rem = idx;
        for slot in psi.iter_mut().skip(1) {
            *slot = TAU * (rem % g) as f64 / g as f64 - PI;
            rem /= g;
        }
        psi
    };
    let objective: Vec<f64> = (0..cells)
        .into_par_iter()
        .map(|idx| {
            let res = stationarity_residual(ensemble, &at(idx)).expect("dimension matches");
            res.iter().map(|x| x * x).sum()
        })
        .collect();
    let offsets: Vec<Vec<isize>> = (0..3usize.pow(dims as u32))
        .map(|k| {
            let mut rem = k;
            (0..dims)
                .map(|_| {
                    let o = (rem % 3) as isize - 1;
                    rem /= 3;
                    o
                })
                .collect()
        })
        .filter(|o: &Vec<isize>| o.iter().any(|&x| x != 0))
        .collect();
    let neighbor = |idx: usize, off: &[isize]| -> usize {
        let mut rem = idx;
        let mut out = 0;
        let mut mult = 1;
        for &o in off {
            let c = (rem % g) as isize;
            rem /= g;
            out += ((c + o).rem_euclid(g as isize) as usize) * mult;
            mult *= g;
        }
        out
    };
    let seeds: Vec<usize> = (0..cells)
        .filter(|&idx| offsets.iter().all(|off| objective[idx] <= objective[neighbor(idx, off)]))
        .collect();
    let scale = ensemble.coupling().max(ensemble.omega_max()).max(1.0);
    let roots: Vec<Vec<f64>> = seeds
        .par_iter()
        .filter_map(|&idx| newton(ensemble, at(idx)))
        .filter(|psi| {
            max_abs(&stationarity_residual(ensemble, psi).expect("dimension matches")) <= 1e-11 * scale
        })
        .map(|psi| psi.iter().map(|p| wrap_angle(p - psi[0])).collect())
        .collect();
    let mut unique: Vec<Vec<f64>> = Vec::new();
    for r in roots {
        if !unique.iter().any(|u| circular_distance(u, &r) <= 1e-6) {
            unique.push(r);
        }
    }
    unique.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(unique)
}

fn newton(ensemble: &Ensemble, mut psi: Vec<f64>) -> Option<Vec<f64>> {
    let n = psi.len();
    let k = ensemble.coupling() / n as f64;
    let norm = |psi: &[f64]| -> f64 {
        stationarity_residual(ensemble, psi)
            .expect("dimension matches")
            .iter()
            .skip(1)
            .map(|x| x * x)
            .sum::<f64>()
    };
    let mut f = norm(&psi);
    for _ in 0..100 {
        if f.sqrt() <= 1e-14 {
            break;
        }
        let g = stationarity_residual(ensemble, &psi).expect("dimension matches");
        let mut jac = DMatrix::<f64>::zeros(n - 1, n - 1);
        for a in 1..n {
            let mut diag = 0.0;
            for b in 0..n {
                if b == a {
                    continue;
                }
                let c = k * (psi[b] - psi[a]).cos();
                diag -= c;
                if b >= 1 {
                    jac[(a - 1, b - 1)] = c;
                }
            }
            jac[(a - 1, a - 1)] = diag;
        }
        let rhs = DVector::from_iterator(n - 1, g[1..].iter().map(|x| -x));
        let step = jac.svd(true, true).solve(&rhs, 1e-12).ok()?;
        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let trial: Vec<f64> = psi
                .iter()
                .enumerate()
                .map(|(j, p)| if j == 0 { *p } else { p + alpha * step[j - 1] })
                .collect();
            let ft = norm(&trial);
            if ft < f {
                psi = trial;
                f = ft;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    psi.iter().all(|p| p.is_finite()).then_some(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_6;

    fn pair(w: f64, lambda: f64) -> Ensemble {
        Ensemble::first_order(vec![1.0, 1.0], vec![w, -w], lambda).unwrap()
    }

    #[test]
    fn h_sigma_two_oscillators() {
        // x⁴ − 4x² + 1 = 0 for ω = ±0.5, λ = 2, σ = (+,+)
        let roots = solve_h_sigma(&pair(0.5, 2.0), &[1, 1]).unwrap();
        let expected = [(2.0 - 3f64.sqrt()).sqrt(), (2.0 + 3f64.sqrt()).sqrt()];
        assert_eq!(roots.len(), 2, "{roots:?}");
        for (r, e) in roots.iter().zip(expected) {
            assert!((r - e).abs() < 1e-12, "{r} vs {e}");
        }
        assert!(solve_h_sigma(&pair(0.5, 2.0), &[1, -1]).unwrap().is_empty());
        assert!(solve_h_sigma(&pair(0.5, 0.4), &[1, 1]).unwrap().is_empty());
    }

    #[test]
    fn reconstruct_two_oscillators() {
        let e = pair(0.5, 2.0);
        let x = (2.0 + 3f64.sqrt()).sqrt();
        let c = reconstruct_phases(&e, x / 2.0, &[1, 1]).unwrap();
        let gap = c.representative[1] - c.representative[0];
        assert!((gap + FRAC_PI_6).abs() < 1e-12);
        assert!((c.delta[0] - -(0.5 / x).asin()).abs() < 1e-12);

        let x = (2.0 - 3f64.sqrt()).sqrt();
        let c = reconstruct_phases(&e, x / 2.0, &[1, 1]).unwrap();
        let gap = wrap_step(c.representative[1] - c.representative[0]);
        assert!((gap + 5.0 * FRAC_PI_6).abs() < 1e-12, "{gap}");

        // a root paired with the wrong sign vector fails self-consistency
        assert!(reconstruct_phases(&e, x / 2.0, &[1, -1]).is_err());
    }

    #[test]
    fn coherent_state_for_identical_frequencies() {
        let e = Ensemble::first_order(vec![1.0; 3], vec![0.0; 3], 1.0).unwrap();
        let c = reconstruct_phases(&e, 1.0, &[1, 1, 1]).unwrap();
        assert_eq!(c.delta, vec![0.0; 3]);
    }

    #[test]
    fn enumerate_two_oscillators() {
        let set = enumerate_equilibria(&pair(0.5, 2.0)).unwrap();
        assert_eq!(set.len(), 2);
        let gaps: Vec<f64> = set
            .classes
            .iter()
            .map(|c| wrap_step(c.representative[1] - c.representative[0]))
            .collect();
        assert!((gaps[0] + FRAC_PI_6).abs() < 1e-12);
        assert!((gaps[1] + 5.0 * FRAC_PI_6).abs() < 1e-12);
        assert!(set.classes[0].r > set.classes[1].r);
        assert!(enumerate_equilibria(&pair(0.5, 0.9)).unwrap().is_empty());
        assert!(enumerate_equilibria(&pair(0.5, 0.3)).unwrap().is_empty());
    }

    #[test]
    fn identical_frequencies_three_oscillators() {
        let e = Ensemble::first_order(vec![1.0; 3], vec![0.0; 3], 1.0).unwrap();
        let set = enumerate_equilibria(&e).unwrap();
        assert!(!set.degenerate_family);
        assert_eq!(set.classes[0].r, 1.0);
        let r_third = set.classes.iter().filter(|c| (c.r - 1.0 / 3.0).abs() < 1e-12).count();
        assert_eq!(r_third, 3);
        let splay: Vec<_> = set.classes.iter().filter(|c| c.degenerate).collect();
        assert_eq!(splay.len(), 2);
        assert!(splay.iter().all(|c| c.r == 0.0 && c.residual < 1e-9));
        assert_eq!(set.len(), 6);
    }

    #[test]
    fn identical_frequencies_four_oscillators_flags_family() {
        let e = Ensemble::first_order(vec![1.0; 4], vec![0.0; 4], 1.0).unwrap();
        let set = enumerate_equilibria(&e).unwrap();
        assert!(set.degenerate_family);
        assert!(set.classes.iter().all(|c| c.r > 0.0));
    }

    #[test]
    fn refuses_large_n() {
        let e = Ensemble::first_order(vec![1.0; 21], vec![0.0; 21], 1.0).unwrap();
        assert!(matches!(enumerate_equilibria(&e), Err(Error::Refused(_))));
        let e = Ensemble::first_order(vec![1.0; 5], vec![0.0; 5], 1.0).unwrap();
        assert!(matches!(brute_force_equilibria(&e, 10), Err(Error::Refused(_))));
    }

    #[test]
    fn gauge_anchor_examples() {
        let e = Ensemble::first_order(vec![1.0, 1.0], vec![0.0, 0.0], 1.0).unwrap();
        let class = EquilibriumClass {
            r: 0.0,
            sigma: vec![1, -1],
            delta: vec![0.0, -PI],
            representative: vec![0.0, PI],
            residual: 0.0,
            degenerate: true,
        };
        let a = gauge_anchor(&class, &e, 0.0);
        assert!((a[0] + PI / 2.0).abs() < 1e-15 && (a[1] - PI / 2.0).abs() < 1e-15);
        assert_eq!(gauge_anchor(&class, &e, PI), class.representative);
    }

    #[test]
    fn oracle_two_oscillators() {
        let roots = brute_force_equilibria(&pair(0.5, 2.0), 720).unwrap();
        let mut gaps: Vec<f64> = roots.iter().map(|p| p[1]).collect();
        gaps.sort_by(f64::total_cmp);
        assert_eq!(gaps.len(), 2);
        assert!((gaps[0] + 5.0 * FRAC_PI_6).abs() < 1e-9);
        assert!((gaps[1] + FRAC_PI_6).abs() < 1e-9);

        let roots = brute_force_equilibria(&pair(0.0, 1.0), 720).unwrap();
        let mut gaps: Vec<f64> = roots.iter().map(|p| p[1]).collect();
        gaps.sort_by(f64::total_cmp);
        assert_eq!(gaps.len(), 2);
        assert!(gaps[0].abs() < 1e-9 && (gaps[1] - PI).abs() < 1e-9);
    }

    #[test]
    fn nearest_class_recovers_lifted_offsets() {
        let e = pair(0.5, 2.0);
        let set = enumerate_equilibria(&e).unwrap();
        let base = gauge_anchor(&set.classes[1], &e, 0.0);
        let theta = vec![base[0] + TAU * 3.0, base[1] - TAU];
        let c0: f64 = theta.iter().sum();
        let hit = nearest_class(&set, &e, &theta, c0).unwrap();
        assert_eq!(hit.index, 1);
        assert!(hit.distance < 1e-12);
    }
}
