//! Mild-solution time stepping shared by the periodic and Dirichlet solvers.
//!
//! One step solves the Duhamel fixed point
//!
//!   v ↦ S(Δ) u + ∫₀^Δ S(Δ-τ) v^p dτ
//!
//! with the integral approximated by the exponential midpoint rule and the
//! fixed point by Picard iteration (one correction minimum, more until the
//! tolerance is met). The linear propagator `S` is exact in both settings
//! (Fourier multiplier on the torus, eigenbasis on bounded domains), so the
//! stepping is stiffness-free.

use crate::error::{MixheatError, Result};
use crate::grid::SpectralGrid;
use crate::operator::OperatorParams;
use crate::spectral::{symbol_array, TailDiagnostic, Transform};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Exact linear semigroup applied to raw sample vectors.
pub trait Propagator {
    fn len(&self) -> usize;
    /// Volume element used in discrete integrals.
    fn cell_volume(&self) -> f64;
    /// `S(t) v`, `t ≥ 0`.
    fn semigroup(&mut self, v: &[f64], t: f64) -> Vec<f64>;
    /// `L v` (the generator of the semigroup).
    fn generator(&mut self, v: &[f64]) -> Vec<f64>;
}

/// Fourier-multiplier propagator on a periodic grid.
///
/// Caches the per-mode decay factors for each step size it sees, since the
/// adaptive loop reuses the same `dt` for long stretches.
pub struct PeriodicPropagator {
    params: OperatorParams,
    grid: SpectralGrid,
    transform: Transform,
    symbols: Vec<f64>,
    exp_cache: HashMap<u64, Vec<f64>>,
}

impl PeriodicPropagator {
    pub fn new(params: OperatorParams, grid: SpectralGrid) -> Self {
        let transform = Transform::new(grid);
        let symbols = symbol_array(&params, grid);
        PeriodicPropagator { params, grid, transform, symbols, exp_cache: HashMap::new() }
    }

    pub fn params(&self) -> OperatorParams {
        self.params
    }

    pub fn grid(&self) -> SpectralGrid {
        self.grid
    }

    fn multiplier(&mut self, t: f64) -> &[f64] {
        if self.exp_cache.len() > 64 {
            self.exp_cache.clear();
        }
        let key = t.to_bits();
        if !self.exp_cache.contains_key(&key) {
            let mult: Vec<f64> = self.symbols.iter().map(|m| (-m * t).exp()).collect();
            self.exp_cache.insert(key, mult);
        }
        &self.exp_cache[&key]
    }
}

impl Propagator for PeriodicPropagator {
    fn len(&self) -> usize {
        self.grid.len()
    }

    fn cell_volume(&self) -> f64 {
        self.grid.cell_volume()
    }

    fn semigroup(&mut self, v: &[f64], t: f64) -> Vec<f64> {
        if t == 0.0 {
            return v.to_vec();
        }
        let mut freq = self.transform.forward(v);
        let mult = self.multiplier(t);
        for (c, &m) in freq.iter_mut().zip(mult) {
            *c *= m;
        }
        self.transform.inverse_real(freq)
    }

    fn generator(&mut self, v: &[f64]) -> Vec<f64> {
        let mut freq = self.transform.forward(v);
        for (c, &m) in freq.iter_mut().zip(&self.symbols) {
            *c *= -m;
        }
        self.transform.inverse_real(freq)
    }
}

/// Controls for the adaptive semilinear solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControls {
    /// Initial (and maximal) step size.
    pub dt0: f64,
    /// Step rule factor: dt = min(dt0, c_dt ‖u‖_∞^{1-p}).
    pub c_dt: f64,
    /// Relative Picard fixed-point tolerance.
    pub picard_tol: f64,
    /// Maximum Picard iterations per step before rejection.
    pub picard_max: usize,
    /// Sup-norm cap U_max; crossing it (with dt collapse) is blow-up.
    pub blowup_threshold: f64,
    /// Time horizon for the GLOBAL verdict.
    pub t_max: f64,
}

impl Default for StepControls {
    fn default() -> Self {
        StepControls {
            dt0: 0.1,
            c_dt: 0.05,
            picard_tol: 1e-8,
            picard_max: 12,
            blowup_threshold: 1e8,
            t_max: 200.0,
        }
    }
}

impl StepControls {
    pub fn validate(&self, sup_u0: f64) -> Result<()> {
        if !(self.c_dt > 0.0 && self.c_dt <= 1.0) {
            return Err(MixheatError::InvalidParams(format!(
                "c_dt must lie in (0, 1] (got {})",
                self.c_dt
            )));
        }
        if self.picard_tol <= 0.0 {
            return Err(MixheatError::InvalidParams("picard_tol must be positive".into()));
        }
        if self.dt0 <= 0.0 || !self.dt0.is_finite() {
            return Err(MixheatError::InvalidParams("dt0 must be positive".into()));
        }
        if self.blowup_threshold <= sup_u0 {
            return Err(MixheatError::InvalidParams(format!(
                "blowup_threshold {} must exceed ‖u0‖_∞ = {}",
                self.blowup_threshold, sup_u0
            )));
        }
        Ok(())
    }
}

/// Outcome of one evolution run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    GlobalToHorizon,
    BlewUp,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::GlobalToHorizon => "GLOBAL_TO_HORIZON",
            Verdict::BlewUp => "BLEW_UP",
            Verdict::Inconclusive => "INCONCLUSIVE",
        };
        f.write_str(s)
    }
}

/// Stored state snapshot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub values: Vec<f64>,
}

/// Time series and verdict of one evolution run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub times: Vec<f64>,
    /// Step sizes actually used (length `times.len() - 1`).
    pub dts: Vec<f64>,
    pub sup_norms: Vec<f64>,
    pub l1_norms: Vec<f64>,
    /// Kaplan functional J(t) when eigenfunction weights were supplied.
    pub kaplan: Option<Vec<f64>>,
    pub verdict: Verdict,
    /// Estimated blow-up time (BLEW_UP only).
    pub t_est: Option<f64>,
    pub inconclusive_reason: Option<String>,
    /// Total mass removed by negativity clamping.
    pub clamp_mass: f64,
    /// Set when clamp_mass exceeds 1e-8 of the initial mass.
    pub clamp_flagged: bool,
    #[serde(skip)]
    pub snapshots: Vec<Snapshot>,
    pub blowup_threshold: f64,
    pub p: f64,
    pub cell_volume: f64,
    pub tail: Option<TailDiagnostic>,
}

impl RunReport {
    pub fn final_snapshot(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }
}

pub(crate) fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn l1_norm(v: &[f64], cell: f64) -> f64 {
    cell * v.iter().map(|x| x.abs()).sum::<f64>()
}

fn pow_clamped(v: &[f64], p: f64) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0).powf(p)) .collect()
}

fn axpy(base: &[f64], scale: f64, add: &[f64]) -> Vec<f64> {
    base.iter().zip(add).map(|(b, a)| b + scale * a).collect()
}

/// Result of one accepted semilinear step.
pub struct StepOutcome {
    pub values: Vec<f64>,
    pub clamp_mass: f64,
    pub picard_iters: usize,
}

/// One mild-solution step of size `dt` from state `u ≥ 0`.
///
/// Returns `PicardDiverged` when the fixed point escapes (reject and halve).
pub fn step_semilinear(
    prop: &mut dyn Propagator,
    p: f64,
    u: &[f64],
    dt: f64,
    controls: &StepControls,
) -> Result<StepOutcome> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(MixheatError::InvalidParams(format!("step size must be > 0 (got {dt})")));
    }
    let su_half = prop.semigroup(u, dt / 2.0);
    let su_full = prop.semigroup(&su_half, dt / 2.0);

    // iterate on (midpoint, endpoint); the τ = Δ/4 value comes from the
    // quadratic through (0, u), (Δ/2, mid), (Δ, end)
    let mut mid = su_half.clone();
    let mut end = su_full.clone();
    let escape = 16.0 * controls.blowup_threshold;
    let mut iters = 0;
    loop {
        iters += 1;
        let quarter: Vec<f64> = u
            .iter()
            .zip(&mid)
            .zip(&end)
            .map(|((&u0, &m), &g)| 0.375 * u0 + 0.75 * m - 0.125 * g)
            .collect();
        let nq = pow_clamped(&quarter, p);
        mid = axpy(&su_half, dt / 2.0, &prop.semigroup(&nq, dt / 4.0));

        let nm = pow_clamped(&mid, p);
        let end_new = axpy(&su_full, dt, &prop.semigroup(&nm, dt / 2.0));

        let sup = sup_norm(&end_new);
        if !sup.is_finite() || sup > escape {
            return Err(MixheatError::PicardDiverged);
        }
        let delta = end
            .iter()
            .zip(&end_new)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        end = end_new;
        if delta <= controls.picard_tol * sup.max(1.0) {
            break;
        }
        if iters >= controls.picard_max {
            return Err(MixheatError::PicardDiverged);
        }
    }

    let cell = prop.cell_volume();
    let mut clamp_mass = 0.0;
    for v in &mut end {
        if *v < 0.0 {
            clamp_mass -= *v * cell;
            *v = 0.0;
        }
    }
    Ok(StepOutcome { values: end, clamp_mass, picard_iters: iters })
}

/// Fit `c (T - t)^{-1/(p-1)}` through the last three sup-norm samples and
/// solve for `T` (least squares in log space over the single unknown `T`).
///
/// The search bracket is `(t_last, t_last + max(2 dt_last, 4 τ_flat)]` where
/// `τ_flat = sup_last^{1-p}/(p-1)` is the remaining lifetime of the flat
/// solution started from the last sup norm; the true blow-up time of the
/// run sits on that scale.
fn fit_blowup_time(times: &[f64], sups: &[f64], p: f64, dt_last: f64) -> f64 {
    let n = times.len();
    let t_last = times[n - 1];
    let tau_flat = sups[n - 1].powf(1.0 - p) / (p - 1.0);
    let width = (2.0 * dt_last).max(4.0 * tau_flat);
    if n < 3 {
        return t_last + tau_flat.min(width);
    }
    let q = 1.0 / (p - 1.0);
    let ts = &times[n - 3..];
    let ms = &sups[n - 3..];
    let sse = |cand: f64| -> f64 {
        let r: Vec<f64> =
            ts.iter().zip(ms).map(|(&t, &m)| m.ln() + q * (cand - t).ln()).collect();
        let mean = r.iter().sum::<f64>() / 3.0;
        r.iter().map(|x| (x - mean).powi(2)).sum()
    };
    // times can coincide at the f64 resolution floor very close to blow-up
    if ts[0] == ts[2] {
        return t_last + tau_flat.min(width);
    }
    // golden-section search on (t_last, t_last + width]
    let mut lo = t_last + 1e-12 * width;
    let mut hi = t_last + width;
    let phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = sse(x1);
    let mut f2 = sse(x2);
    for _ in 0..200 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = sse(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = sse(x2);
        }
    }
    let t_fit = 0.5 * (lo + hi);
    t_fit.clamp(t_last + 1e-300, t_last + width)
}

const MAX_SNAPSHOTS: usize = 96;
const MAX_STEPS: usize = 4_000_000;
const DT_UNDERFLOW: f64 = 1e-14;
/// Required dt collapse factor relative to dt0 for a BLEW_UP verdict.
const DT_COLLAPSE: f64 = 1e4;

struct SeriesRecorder {
    times: Vec<f64>,
    dts: Vec<f64>,
    sups: Vec<f64>,
    l1s: Vec<f64>,
    kaplan: Option<Vec<f64>>,
    snapshots: Vec<Snapshot>,
    stride: usize,
    steps_since_snapshot: usize,
    cell: f64,
}

impl SeriesRecorder {
    fn new(with_kaplan: bool, cell: f64) -> Self {
        SeriesRecorder {
            times: Vec::new(),
            dts: Vec::new(),
            sups: Vec::new(),
            l1s: Vec::new(),
            kaplan: if with_kaplan { Some(Vec::new()) } else { None },
            snapshots: Vec::new(),
            stride: 1,
            steps_since_snapshot: 0,
            cell,
        }
    }

    /// Returns false when the row for time `t` already existed and was
    /// overwritten instead of appended.
    fn record(&mut self, t: f64, u: &[f64], weights: Option<&[f64]>, force_snapshot: bool) -> bool {
        let kaplan_value = weights
            .map(|w| self.cell * u.iter().zip(w).map(|(a, b)| a * b).sum::<f64>());
        // very close to blow-up the step can fall below the f64 resolution of
        // t; overwrite the stalled row so times stay strictly increasing
        if self.times.last() == Some(&t) {
            *self.sups.last_mut().unwrap() = sup_norm(u);
            *self.l1s.last_mut().unwrap() = l1_norm(u, self.cell);
            if let (Some(series), Some(j)) = (self.kaplan.as_mut(), kaplan_value) {
                *series.last_mut().unwrap() = j;
            }
            if let Some(snap) = self.snapshots.last_mut() {
                if snap.t == t {
                    snap.values = u.to_vec();
                }
            }
            return false;
        }
        self.times.push(t);
        self.sups.push(sup_norm(u));
        self.l1s.push(l1_norm(u, self.cell));
        if let (Some(series), Some(j)) = (self.kaplan.as_mut(), kaplan_value) {
            series.push(j);
        }
        self.steps_since_snapshot += 1;
        if force_snapshot || self.steps_since_snapshot >= self.stride {
            self.snapshots.push(Snapshot { t, values: u.to_vec() });
            self.steps_since_snapshot = 0;
            if self.snapshots.len() >= MAX_SNAPSHOTS {
                // thin to every other snapshot, keeping the first
                let mut keep = Vec::with_capacity(self.snapshots.len() / 2 + 1);
                for (i, snap) in self.snapshots.drain(..).enumerate() {
                    if i % 2 == 0 {
                        keep.push(snap);
                    }
                }
                self.snapshots = keep;
                self.stride *= 2;
            }
        }
        true
    }

    fn record_step(&mut self, t: f64, dt: f64, u: &[f64], weights: Option<&[f64]>) {
        if self.record(t, u, weights, false) {
            self.dts.push(dt);
        } else if let Some(last) = self.dts.last_mut() {
            *last += dt;
        }
    }
}

/// Evolve `u' = L u + u^p` from `u0` under the adaptive step rule.
///
/// `kaplan_weights`, when given, must be the L¹-normalized principal
/// eigenfunction on the same mesh; the report then carries J(t) = ∫ u ψ dx.
pub fn solve_semilinear(
    prop: &mut dyn Propagator,
    p: f64,
    u0: &[f64],
    controls: &StepControls,
    kaplan_weights: Option<&[f64]>,
) -> Result<RunReport> {
    if p <= 1.0 {
        return Err(MixheatError::InvalidParams(format!("nonlinearity must satisfy p > 1 (got {p})")));
    }
    if u0.len() != prop.len() {
        return Err(MixheatError::MeshMismatch(format!(
            "initial data has {} values, propagator expects {}",
            u0.len(),
            prop.len()
        )));
    }
    if !u0.iter().all(|v| v.is_finite()) {
        return Err(MixheatError::NonFinite { context: "solve_semilinear initial data" });
    }
    let sup0 = sup_norm(u0);
    if u0.iter().any(|&v| v < -1e-12 * sup0.max(1.0)) {
        return Err(MixheatError::InvalidParams("initial data must be non-negative".into()));
    }
    controls.validate(sup0)?;
    if let Some(w) = kaplan_weights {
        if w.len() != u0.len() {
            return Err(MixheatError::MeshMismatch(
                "Kaplan weights do not match the mesh".into(),
            ));
        }
    }

    let cell = prop.cell_volume();
    let mut rec = SeriesRecorder::new(kaplan_weights.is_some(), cell);
    let mut u: Vec<f64> = u0.iter().map(|&v| v.max(0.0)).collect();
    let mut t = 0.0;
    rec.record(t, &u, kaplan_weights, true);

    let mass0 = cell * u.iter().sum::<f64>();
    let mut clamp_total = 0.0;
    let mut halvings_dt = f64::INFINITY; // dt ceiling from rejected steps
    let mut verdict = Verdict::Inconclusive;
    let mut reason: Option<String> = None;
    let mut t_est = None;

    let horizon_eps = 1e-12 * controls.t_max.max(1.0);
    for _step in 0..MAX_STEPS {
        if t >= controls.t_max - horizon_eps {
            verdict = Verdict::GlobalToHorizon;
            break;
        }
        let sup = sup_norm(&u);
        let dt_rule = if sup > 0.0 {
            controls.dt0.min(controls.c_dt * sup.powf(1.0 - p))
        } else {
            controls.dt0
        };
        let mut dt = dt_rule.min(halvings_dt).min(controls.t_max - t);
        if dt < DT_UNDERFLOW {
            verdict = Verdict::Inconclusive;
            reason = Some("dt underflow without crossing the blow-up threshold".into());
            break;
        }
        match step_semilinear(prop, p, &u, dt, controls) {
            Ok(out) => {
                u = out.values;
                clamp_total += out.clamp_mass;
                t += dt;
                rec.record_step(t, dt, &u, kaplan_weights);
                halvings_dt = f64::INFINITY;
                if sup_norm(&u) >= controls.blowup_threshold {
                    let collapsed = dt <= controls.dt0 / DT_COLLAPSE;
                    if collapsed {
                        verdict = Verdict::BlewUp;
                        t_est = Some(fit_blowup_time(&rec.times, &rec.sups, p, dt));
                    } else {
                        verdict = Verdict::Inconclusive;
                        reason = Some(format!(
                            "sup-norm crossed {} but dt only fell to {dt:.3e} (no collapse)",
                            controls.blowup_threshold
                        ));
                    }
                    break;
                }
            }
            Err(MixheatError::PicardDiverged) => {
                halvings_dt = dt / 2.0;
                dt = halvings_dt;
                if dt < DT_UNDERFLOW {
                    verdict = Verdict::Inconclusive;
                    reason = Some("dt underflow during step rejection".into());
                    break;
                }
            }
            Err(e) => return Err(e),
        }
    }
    if rec.times.len() >= MAX_STEPS {
        reason = Some("step budget exceeded".into());
    }

    // make sure the final state is snapshotted
    if rec.snapshots.last().map(|s| s.t) != rec.times.last().copied() {
        rec.snapshots.push(Snapshot { t, values: u.clone() });
    }

    let clamp_flagged = clamp_total > 1e-8 * mass0.abs().max(f64::MIN_POSITIVE);
    Ok(RunReport {
        times: rec.times,
        dts: rec.dts,
        sup_norms: rec.sups,
        l1_norms: rec.l1s,
        kaplan: rec.kaplan,
        verdict,
        t_est,
        inconclusive_reason: reason,
        clamp_mass: clamp_total,
        clamp_flagged,
        snapshots: rec.snapshots,
        blowup_threshold: controls.blowup_threshold,
        p,
        cell_volume: cell,
        tail: None,
    })
}

/// Pointwise ordering statistics of a lockstep pair run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ComparisonStats {
    /// min over (x, t) of (u_B - u_A)
    pub min_gap: f64,
    pub t_of_min: f64,
    pub steps: usize,
}

/// Evolve two problems with a shared step sequence so their reports live on
/// identical time grids, tracking the pointwise gap `u_B - u_A` online.
///
/// Requires `u0_a ≤ u0_b` pointwise. The run ends at the horizon or when
/// either solution crosses the blow-up threshold.
pub fn solve_pair_lockstep(
    prop: &mut dyn Propagator,
    p: f64,
    u0_a: &[f64],
    u0_b: &[f64],
    controls: &StepControls,
) -> Result<(RunReport, RunReport, ComparisonStats)> {
    if u0_a.len() != u0_b.len() || u0_a.len() != prop.len() {
        return Err(MixheatError::MeshMismatch("lockstep pair on different meshes".into()));
    }
    if u0_a.iter().zip(u0_b).any(|(a, b)| a > b) {
        return Err(MixheatError::InvalidParams(
            "lockstep comparison requires u0_A ≤ u0_B pointwise".into(),
        ));
    }
    let sup0 = sup_norm(u0_b).max(sup_norm(u0_a));
    controls.validate(sup0)?;

    let cell = prop.cell_volume();
    let mut rec_a = SeriesRecorder::new(false, cell);
    let mut rec_b = SeriesRecorder::new(false, cell);
    let mut ua: Vec<f64> = u0_a.iter().map(|&v| v.max(0.0)).collect();
    let mut ub: Vec<f64> = u0_b.iter().map(|&v| v.max(0.0)).collect();
    let mut t = 0.0;
    rec_a.record(t, &ua, None, true);
    rec_b.record(t, &ub, None, true);

    let mut stats = ComparisonStats { min_gap: f64::INFINITY, t_of_min: 0.0, steps: 0 };
    let track_gap = |t: f64, ua: &[f64], ub: &[f64], stats: &mut ComparisonStats| {
        let gap = ua
            .iter()
            .zip(ub)
            .map(|(a, b)| b - a)
            .fold(f64::INFINITY, f64::min);
        if gap < stats.min_gap {
            stats.min_gap = gap;
            stats.t_of_min = t;
        }
        stats.steps += 1;
    };
    track_gap(t, &ua, &ub, &mut stats);

    let mut clamp_a = 0.0;
    let mut clamp_b = 0.0;
    let mut verdict_a = Verdict::Inconclusive;
    let mut verdict_b = Verdict::Inconclusive;
    let mut t_est_b = None;
    let mut reason_a: Option<String> = None;
    let mut reason_b: Option<String> = None;
    let mut halvings_dt = f64::INFINITY;

    let horizon_eps = 1e-12 * controls.t_max.max(1.0);
    for _ in 0..MAX_STEPS {
        if t >= controls.t_max - horizon_eps {
            verdict_a = Verdict::GlobalToHorizon;
            verdict_b = Verdict::GlobalToHorizon;
            break;
        }
        let rule = |sup: f64| {
            if sup > 0.0 {
                controls.dt0.min(controls.c_dt * sup.powf(1.0 - p))
            } else {
                controls.dt0
            }
        };
        let dt_rule = rule(sup_norm(&ua)).min(rule(sup_norm(&ub)));
        let dt = dt_rule.min(halvings_dt).min(controls.t_max - t);
        if dt < DT_UNDERFLOW {
            reason_a = Some("dt underflow in lockstep run".into());
            reason_b = reason_a.clone();
            break;
        }
        let step_a = step_semilinear(prop, p, &ua, dt, controls);
        let step_b = step_semilinear(prop, p, &ub, dt, controls);
        match (step_a, step_b) {
            (Ok(oa), Ok(ob)) => {
                ua = oa.values;
                ub = ob.values;
                clamp_a += oa.clamp_mass;
                clamp_b += ob.clamp_mass;
                t += dt;
                rec_a.record_step(t, dt, &ua, None);
                rec_b.record_step(t, dt, &ub, None);
                track_gap(t, &ua, &ub, &mut stats);
                halvings_dt = f64::INFINITY;
                let crossed_b = sup_norm(&ub) >= controls.blowup_threshold;
                let crossed_a = sup_norm(&ua) >= controls.blowup_threshold;
                if crossed_a || crossed_b {
                    let collapsed = dt <= controls.dt0 / DT_COLLAPSE;
                    if crossed_b {
                        verdict_b = if collapsed { Verdict::BlewUp } else { Verdict::Inconclusive };
                        if collapsed {
                            t_est_b = Some(fit_blowup_time(&rec_b.times, &rec_b.sups, p, dt));
                        }
                    } else {
                        reason_b = Some("pair run stopped at partner blow-up".into());
                    }
                    if crossed_a {
                        verdict_a = if collapsed { Verdict::BlewUp } else { Verdict::Inconclusive };
                    } else {
                        reason_a = Some("pair run stopped at partner blow-up".into());
                    }
                    break;
                }
            }
            (Err(MixheatError::PicardDiverged), _) | (_, Err(MixheatError::PicardDiverged)) => {
                halvings_dt = dt / 2.0;
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }

    let t_est_a = if verdict_a == Verdict::BlewUp {
        Some(fit_blowup_time(&rec_a.times, &rec_a.sups, p, *rec_a.dts.last().unwrap_or(&controls.dt0)))
    } else {
        None
    };

    let finish = |rec: SeriesRecorder,
                  u: Vec<f64>,
                  t: f64,
                  verdict: Verdict,
                  t_est: Option<f64>,
                  reason: Option<String>,
                  clamp: f64|
     -> RunReport {
        let mut snapshots = rec.snapshots;
        if snapshots.last().map(|s| s.t) != rec.times.last().copied() {
            snapshots.push(Snapshot { t, values: u });
        }
        RunReport {
            times: rec.times,
            dts: rec.dts,
            sup_norms: rec.sups,
            l1_norms: rec.l1s,
            kaplan: None,
            verdict,
            t_est,
            inconclusive_reason: reason,
            clamp_mass: clamp,
            clamp_flagged: false,
            snapshots,
            blowup_threshold: controls.blowup_threshold,
            p,
            cell_volume: cell,
            tail: None,
        }
    };
    let report_a = finish(rec_a, ua, t, verdict_a, t_est_a, reason_a, clamp_a);
    let report_b = finish(rec_b, ub, t, verdict_b, t_est_b, reason_b, clamp_b);
    Ok((report_a, report_b, stats))
}

/// Pointwise ordering verdict between two runs on the same grid and times.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub min_gap: f64,
    pub pass: bool,
    pub times_checked: usize,
}

/// Compare two reports produced on the same mesh and time grid: the minimum
/// over stored snapshots of `u_B - u_A`. PASS when the gap stays above
/// `-1e-10`.
pub fn comparison_check(a: &RunReport, b: &RunReport) -> Result<ComparisonReport> {
    if (a.cell_volume - b.cell_volume).abs() > 1e-15 {
        return Err(MixheatError::MeshMismatch("comparison across different meshes".into()));
    }
    if a.times.len() != b.times.len()
        || a.times
            .iter()
            .zip(&b.times)
            .any(|(x, y)| (x - y).abs() > 1e-12 * x.abs().max(1.0))
    {
        return Err(MixheatError::MeshMismatch("comparison across different time grids".into()));
    }
    if a.snapshots.len() != b.snapshots.len() {
        return Err(MixheatError::MeshMismatch("snapshot sequences differ".into()));
    }
    let mut min_gap = f64::INFINITY;
    for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
        if sa.values.len() != sb.values.len() {
            return Err(MixheatError::MeshMismatch("snapshot sizes differ".into()));
        }
        for (x, y) in sa.values.iter().zip(&sb.values) {
            min_gap = min_gap.min(y - x);
        }
    }
    Ok(ComparisonReport { min_gap, pass: min_gap >= -1e-10, times_checked: a.snapshots.len() })
}
