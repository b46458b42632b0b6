//! Blow-up machinery: Kaplan's eigenfunction method with its closed-form
//! time bound, rate and doubling-time diagnostics, the monotonicity
//! condition on initial data, and blow-up set estimation.
//!
//! Kaplan's device: projecting the equation on the L¹-normalized principal
//! eigenfunction gives `J(t) = ∫ u ψ dx` with `J' ≥ J^p - λ₁ J` (Jensen),
//! so `J(0) > λ₁^{1/(p-1)}` certifies finite-time blow-up with
//!
//!   T ≤ -[(p-1) λ₁]^{-1} ln(1 - λ₁ J(0)^{1-p}).

use crate::dirichlet::BoundedDomain;
use crate::error::{MixheatError, Result};
use crate::stepper::{RunReport, Verdict};
use serde::{Deserialize, Serialize};

/// Kaplan threshold and (when it applies) the closed-form blow-up time bound.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KaplanCertificate {
    pub j0: f64,
    pub lambda1: f64,
    pub p: f64,
    /// `λ₁^{1/(p-1)}`.
    pub threshold: f64,
    /// Finite iff `j0 > threshold`.
    pub bound_time: Option<f64>,
}

/// `-[(p-1)λ₁]^{-1} ln(1 - λ₁ J₀^{1-p})` when `J₀ > λ₁^{1/(p-1)}`.
pub fn kaplan_time_bound(j0: f64, lambda1: f64, p: f64) -> Result<KaplanCertificate> {
    if !(j0 > 0.0 && lambda1 > 0.0 && p > 1.0) {
        return Err(MixheatError::InvalidParams(format!(
            "kaplan_time_bound needs J₀ > 0, λ₁ > 0, p > 1 (got {j0}, {lambda1}, {p})"
        )));
    }
    let threshold = lambda1.powf(1.0 / (p - 1.0));
    let inner = 1.0 - lambda1 * j0.powf(1.0 - p);
    let bound_time =
        if inner > 0.0 { Some(-inner.ln() / ((p - 1.0) * lambda1)) } else { None };
    Ok(KaplanCertificate { j0, lambda1, p, threshold, bound_time })
}

/// The Kaplan series J(t) of a Dirichlet run together with the discrete
/// slack in the differential inequality `J' ≥ J^p - λ₁ J - ε_h`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KaplanSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Largest observed violation of `J' ≥ J^p - λ₁ J` (one-sided finite
    /// differences); the Jensen gap is resolution-dependent so this is
    /// reported, not asserted.
    pub epsilon_h: f64,
}

/// Recover J(t) from a run. Prefers the series recorded during stepping;
/// otherwise integrates the stored snapshots against `psi_l1`.
pub fn kaplan_functional(
    run: &RunReport,
    psi_l1: &[f64],
    lambda1: f64,
) -> Result<KaplanSeries> {
    let (times, values): (Vec<f64>, Vec<f64>) = if let Some(series) = &run.kaplan {
        if let Some(snap) = run.snapshots.first() {
            if snap.values.len() != psi_l1.len() {
                return Err(MixheatError::MeshMismatch(format!(
                    "run has {} nodes, ψ has {}",
                    snap.values.len(),
                    psi_l1.len()
                )));
            }
        }
        (run.times.clone(), series.clone())
    } else {
        let mut ts = Vec::with_capacity(run.snapshots.len());
        let mut js = Vec::with_capacity(run.snapshots.len());
        for snap in &run.snapshots {
            if snap.values.len() != psi_l1.len() {
                return Err(MixheatError::MeshMismatch(format!(
                    "snapshot has {} nodes, ψ has {}",
                    snap.values.len(),
                    psi_l1.len()
                )));
            }
            let j = run.cell_volume
                * snap.values.iter().zip(psi_l1).map(|(u, w)| u * w).sum::<f64>();
            ts.push(snap.t);
            js.push(j);
        }
        (ts, js)
    };
    if values.iter().any(|&j| j < -1e-12) {
        return Err(MixheatError::Numerical("Kaplan functional went negative".into()));
    }
    let p = run.p;
    let mut epsilon_h: f64 = 0.0;
    for i in 0..times.len().saturating_sub(1) {
        let dt = times[i + 1] - times[i];
        if dt <= 0.0 {
            continue;
        }
        let deriv = (values[i + 1] - values[i]) / dt;
        let rhs = values[i].powf(p) - lambda1 * values[i];
        epsilon_h = epsilon_h.max(rhs - deriv);
    }
    Ok(KaplanSeries { times, values, epsilon_h: epsilon_h.max(0.0) })
}

/// Log-log fit of the sup norm against `T_est - t` near blow-up.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// `-1/(p-1)`, the natural ODE rate.
    pub target: f64,
    pub pass: bool,
    pub samples: usize,
}

/// Fit the blow-up rate over the last two decades of `T_est - t`.
/// PASS when the slope matches `-1/(p-1)` within 10%.
pub fn rate_fit(run: &RunReport) -> Result<RateFit> {
    let t_est = match (run.verdict, run.t_est) {
        (Verdict::BlewUp, Some(t)) => t,
        _ => {
            return Err(MixheatError::InvalidParams(
                "rate fit needs a BLEW_UP run with an estimated blow-up time".into(),
            ))
        }
    };
    let q = 1.0 / (run.p - 1.0);
    let taus: Vec<(f64, f64)> = run
        .times
        .iter()
        .zip(&run.sup_norms)
        .filter(|(&t, &m)| t_est > t && m > 0.0)
        .map(|(&t, &m)| (t_est - t, m))
        .collect();
    let tau_min = taus.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let window: Vec<(f64, f64)> =
        taus.into_iter().filter(|&(tau, _)| tau <= 100.0 * tau_min).collect();
    if window.len() < 10 {
        return Err(MixheatError::TooFewSamples { needed: 10, got: window.len() });
    }
    let logs: Vec<(f64, f64)> = window.iter().map(|&(t, m)| (t.ln(), m.ln())).collect();
    let n = logs.len() as f64;
    let sx: f64 = logs.iter().map(|p| p.0).sum();
    let sy: f64 = logs.iter().map(|p| p.1).sum();
    let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let target = -q;
    let pass = (slope - target).abs() <= 0.1 * q;
    Ok(RateFit { slope, intercept, target, pass, samples: logs.len() })
}

/// Doubling times of the running maximum and the products
/// `(t_{n+1} - t_n) M_n^{p-1}` whose boundedness encodes the natural rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DoublingDiagnostic {
    /// `(t_n, M_n)` with `M_n = 2 M_{n-1}`.
    pub entries: Vec<(f64, f64)>,
    pub products: Vec<f64>,
    /// Last three products within a factor 3 of each other.
    pub bounded: bool,
}

pub fn doubling_diagnostic(run: &RunReport) -> Result<DoublingDiagnostic> {
    if run.verdict != Verdict::BlewUp {
        return Err(MixheatError::InvalidParams(
            "doubling diagnostic needs a BLEW_UP run".into(),
        ));
    }
    // running maximum M(t)
    let mut entries: Vec<(f64, f64)> = Vec::new();
    let mut running: f64 = 0.0;
    for (&t, &m) in run.times.iter().zip(&run.sup_norms) {
        running = running.max(m);
        match entries.last() {
            None if running > 0.0 => entries.push((t, running)),
            Some(&(_, m_prev)) if running >= 2.0 * m_prev => entries.push((t, running)),
            _ => {}
        }
    }
    let products: Vec<f64> = entries
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * w[0].1.powf(run.p - 1.0))
        .collect();
    if products.len() < 4 {
        return Err(MixheatError::TooFewDoublings { needed: 4, got: products.len() });
    }
    let last3 = &products[products.len() - 3..];
    let hi = last3.iter().fold(0.0f64, |a, &b| a.max(b));
    let lo = last3.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let bounded = lo > 0.0 && hi / lo <= 3.0;
    Ok(DoublingDiagnostic { entries, products, bounded })
}

/// Product of the doubling construction for the pure ODE `u' = u^p`:
/// `(t_{n+1} - t_n) M_n^{p-1} = (1 - 2^{1-p})/(p - 1)` for every n.
pub fn ode_doubling_product(p: f64) -> f64 {
    (1.0 - 2f64.powf(1.0 - p)) / (p - 1.0)
}

/// Least node-wise threshold for the monotonicity condition
/// `L u₀ + μ u₀^p ≥ 0`: the minimum over nodes with `u₀ > 1e-12` of
/// `(-L u₀)/u₀^p`, clipped to `[0, 1)`.
///
/// `None` when no admissible μ < 1 exists at the easiest node, or when
/// `L u₀ < 0` somewhere `u₀` vanishes. Zero quotients report machine
/// epsilon (any positive μ works there).
pub fn monotone_initial_check(generator_u0: &[f64], u0: &[f64], p: f64) -> Option<f64> {
    const FLOOR: f64 = 1e-12;
    let scale = generator_u0.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let zero_tol = 1e-12 * scale.max(1.0);
    let mut quotient_min = f64::INFINITY;
    for (&lu, &u) in generator_u0.iter().zip(u0) {
        if u <= FLOOR {
            if lu < -zero_tol {
                return None;
            }
            continue;
        }
        quotient_min = quotient_min.min(-lu / u.powf(p));
    }
    if !quotient_min.is_finite() {
        return None;
    }
    if quotient_min >= 1.0 {
        None
    } else if quotient_min <= 0.0 {
        Some(f64::EPSILON)
    } else {
        Some(quotient_min)
    }
}

/// Geometry for [`blowup_set_estimate`]: the torus has no boundary.
pub enum SetGeometry<'a> {
    Torus,
    Domain(&'a BoundedDomain),
}

/// Nodes that carried the blow-up at the final computed time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlowupSet {
    pub nodes: Vec<usize>,
    /// True iff every node sits at least `delta_cells` mesh cells away from
    /// the boundary (vacuously true on the torus).
    pub interior_flag: bool,
    pub theta: f64,
    pub delta_cells: f64,
}

/// Nodes where the final state exceeds `θ · max(U_max, final sup)`; with
/// θ = 1 this is exactly the set of nodes achieving the final maximum.
pub fn blowup_set_estimate(
    run: &RunReport,
    theta: f64,
    delta_cells: f64,
    geometry: &SetGeometry,
) -> Result<BlowupSet> {
    if run.verdict != Verdict::BlewUp {
        return Err(MixheatError::InvalidParams("blow-up set needs a BLEW_UP run".into()));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(MixheatError::InvalidParams(format!("θ must lie in (0, 1] (got {theta})")));
    }
    let snap = run
        .final_snapshot()
        .ok_or_else(|| MixheatError::Numerical("run carries no snapshots".into()))?;
    let final_sup = snap.values.iter().fold(0.0f64, |a, &v| a.max(v));
    let cutoff = theta * final_sup.max(run.blowup_threshold);
    let nodes: Vec<usize> = snap
        .values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= cutoff)
        .map(|(i, _)| i)
        .collect();
    if nodes.is_empty() {
        return Err(MixheatError::Numerical("empty blow-up set on a BLEW_UP run".into()));
    }
    let interior_flag = match geometry {
        SetGeometry::Torus => true,
        SetGeometry::Domain(domain) => {
            let margin = delta_cells * domain.spacing();
            nodes.iter().all(|&k| domain.boundary_distance(k) >= margin)
        }
    };
    Ok(BlowupSet { nodes, interior_flag, theta, delta_cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirichlet::{assemble, principal_eigenpair, solve_dirichlet, DomainKind};
    use crate::grid::SpectralGrid;
    use crate::operator::OperatorParams;
    use crate::stepper::{solve_semilinear, PeriodicPropagator, StepControls};

    #[test]
    fn kaplan_bound_closed_form() {
        // p = 2, λ₁ = 1, J₀ = 2 → ln 2
        let cert = kaplan_time_bound(2.0, 1.0, 2.0).unwrap();
        assert!((cert.bound_time.unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(cert.threshold, 1.0);
    }

    #[test]
    fn kaplan_bound_matches_ode_integration() {
        // integrate J' = J² - J with RK4 until J explodes; remaining time ~ 1/J
        let (j0, lambda, p) = (2.0, 1.0, 2.0);
        let mut j: f64 = j0;
        let mut t = 0.0;
        while j < 1e9 {
            let dt = 1e-5 * j.powf(1.0 - p).min(1.0);
            let f = |x: f64| x.powf(p) - lambda * x;
            let k1 = f(j);
            let k2 = f(j + 0.5 * dt * k1);
            let k3 = f(j + 0.5 * dt * k2);
            let k4 = f(j + dt * k3);
            j += dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
            t += dt;
        }
        t += 1.0 / j; // analytic tail of the dominant J² growth
        let cert = kaplan_time_bound(j0, lambda, p).unwrap();
        assert!(
            (t - cert.bound_time.unwrap()).abs() < 1e-4,
            "ODE time {t} vs bound {}",
            cert.bound_time.unwrap()
        );
    }

    #[test]
    fn kaplan_bound_boundary_and_limit_cases() {
        // J₀ exactly at the threshold: the log is singular, no certificate
        let cert = kaplan_time_bound(1.0, 1.0, 2.0).unwrap();
        assert!(cert.bound_time.is_none());
        // below threshold
        assert!(kaplan_time_bound(0.5, 1.0, 2.0).unwrap().bound_time.is_none());
        // λ₁ → 0 recovers the pure ODE time J₀^{1-p}/(p-1)
        let cert = kaplan_time_bound(2.0, 1e-8, 2.0).unwrap();
        let ode = 2f64.powf(-1.0);
        assert!((cert.bound_time.unwrap() - ode).abs() < 1e-6 * ode);
        // invalid inputs
        assert!(kaplan_time_bound(-1.0, 1.0, 2.0).is_err());
        assert!(kaplan_time_bound(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn kaplan_bound_monotone_in_j0_and_lambda() {
        // strictly decreasing in J₀; strictly increasing in λ₁ for fixed J₀
        // above threshold (more dissipation delays the certified time):
        // K = J₀^{1-p} g(λ₁ J₀^{1-p})/(p-1) with g(x) = -ln(1-x)/x increasing
        let p = 2.5;
        let mut prev = f64::INFINITY;
        for j0 in [1.5, 2.0, 3.0, 5.0, 10.0] {
            let b = kaplan_time_bound(j0, 1.0, p).unwrap().bound_time.unwrap();
            assert!(b < prev, "bound not decreasing in J₀");
            prev = b;
        }
        let mut prev = 0.0;
        for lambda in [0.1, 0.3, 0.5, 0.8] {
            let b = kaplan_time_bound(2.0, lambda, p).unwrap().bound_time.unwrap();
            assert!(b > prev, "bound not increasing in λ₁");
            prev = b;
        }
    }

    fn ode_run(p: f64, u0: f64) -> RunReport {
        let grid = SpectralGrid::new(1, 1.0, 8).unwrap();
        let mut prop =
            PeriodicPropagator::new(OperatorParams::new(1.0, 0.0, 0.5).unwrap(), grid);
        // steep nonlinearities need a lower cap: the step rule reaches
        // dt ~ c_dt U^{1-p} at the crossing, which must stay above the
        // 1e-14 underflow floor
        let blowup_threshold = if p > 2.5 { 1e5 } else { 1e8 };
        let controls = StepControls { blowup_threshold, ..Default::default() };
        solve_semilinear(&mut prop, p, &vec![u0; 8], &controls, None).unwrap()
    }

    #[test]
    fn rate_fit_on_ode_family() {
        let run2 = ode_run(2.0, 1.0);
        let fit2 = rate_fit(&run2).unwrap();
        assert!((fit2.slope + 1.0).abs() < 0.02, "p=2 slope {}", fit2.slope);
        assert!(fit2.pass);

        let run3 = ode_run(3.0, 1.0);
        let fit3 = rate_fit(&run3).unwrap();
        assert!((fit3.slope + 0.5).abs() < 0.02, "p=3 slope {}", fit3.slope);
        assert!(fit3.pass);
    }

    #[test]
    fn doubling_products_match_ode_value() {
        for p in [1.5, 2.0, 3.0] {
            let run = ode_run(p, 1.0);
            let doubling = doubling_diagnostic(&run).unwrap();
            assert!(doubling.bounded, "p = {p} not bounded: {:?}", doubling.products);
            let expect = ode_doubling_product(p);
            // skip the first product: t₀ is not a doubling time of the ODE
            for (i, &prod) in doubling.products.iter().enumerate().skip(1) {
                assert!(
                    (prod - expect).abs() < 0.05 * expect,
                    "p = {p}, product[{i}] = {prod}, expected {expect}"
                );
            }
        }
        // p = 2 products converge to 1/2
        assert!((ode_doubling_product(2.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn doubling_rejects_global_runs() {
        let grid = SpectralGrid::new(1, 10.0, 64).unwrap();
        let mut prop =
            PeriodicPropagator::new(OperatorParams::new(1.0, 0.0, 0.5).unwrap(), grid);
        let u0: Vec<f64> =
            (0..grid.len()).map(|i| 1e-4 * (-grid.position(i)[0].powi(2)).exp()).collect();
        let controls = StepControls { t_max: 1.0, ..Default::default() };
        let run = solve_semilinear(&mut prop, 3.0, &u0, &controls, None).unwrap();
        assert!(doubling_diagnostic(&run).is_err());
    }

    #[test]
    fn rate_and_doubling_agree() {
        // bounded doubling products should come with a passing rate fit
        for p in [1.5, 2.0, 2.5, 3.0] {
            let run = ode_run(p, 2.0);
            let doubling = doubling_diagnostic(&run).unwrap();
            let fit = rate_fit(&run).unwrap();
            assert!(doubling.bounded);
            assert!(fit.pass, "p = {p}: slope {} target {}", fit.slope, fit.target);
        }
    }

    #[test]
    fn monotone_check_eigenfunction_cases() {
        let domain = BoundedDomain::new(DomainKind::Interval, 1.0, 64).unwrap();
        let params = OperatorParams::new(1.0, 1.0, 0.5).unwrap();
        let system = assemble(&params, &domain).unwrap();
        let eigen = principal_eigenpair(&system).unwrap();
        let p = 2.0;

        // L u₀ = -λ₁ u₀ for u₀ = ε ψ: quotient λ₁ (ε ψ)^{1-p} blows up as ε → 0
        let small: Vec<f64> = eigen.psi.iter().map(|v| 1e-3 * v).collect();
        let l_small: Vec<f64> =
            (&system.a * nalgebra::DVector::from_column_slice(&small) * -1.0)
                .iter()
                .copied()
                .collect();
        assert_eq!(monotone_initial_check(&l_small, &small, p), None);

        // large amplitude: μ* = λ₁ (A max ψ)^{1-p} lands in (0, 1)
        let amp = 4.0 * eigen.lambda1 / eigen.psi.max();
        let large: Vec<f64> = eigen.psi.iter().map(|v| amp * v).collect();
        let l_large: Vec<f64> =
            (&system.a * nalgebra::DVector::from_column_slice(&large) * -1.0)
                .iter()
                .copied()
                .collect();
        let mu = monotone_initial_check(&l_large, &large, p).unwrap();
        assert!(mu > 0.0 && mu < 1.0, "μ* = {mu}");
        let predicted = eigen.lambda1 * (amp * eigen.psi.max()).powf(1.0 - p);
        assert!((mu - predicted).abs() < 1e-6 * predicted);
    }

    #[test]
    fn monotone_check_constant_data() {
        // constant on the torus: L u₀ = 0, any μ > 0 works
        let zero = vec![0.0; 16];
        let u0 = vec![2.0; 16];
        assert_eq!(monotone_initial_check(&zero, &u0, 2.0), Some(f64::EPSILON));
    }

    #[test]
    fn blowup_set_constant_data_is_everything() {
        let run = ode_run(2.0, 1.0);
        let set = blowup_set_estimate(&run, 0.01, 2.0, &SetGeometry::Torus).unwrap();
        assert_eq!(set.nodes.len(), 8);
        assert!(set.interior_flag);
        // θ = 1: only the maximum achievers (here everything, data constant)
        let set1 = blowup_set_estimate(&run, 1.0, 2.0, &SetGeometry::Torus).unwrap();
        assert_eq!(set1.nodes.len(), 8);
    }

    #[test]
    fn blowup_set_centered_spike_is_interior() {
        let domain = BoundedDomain::new(DomainKind::Interval, 1.0, 64).unwrap();
        let params = OperatorParams::new(1.0, 1.0, 0.5).unwrap();
        let system = assemble(&params, &domain).unwrap();
        let eigen = principal_eigenpair(&system).unwrap();
        // concentrated data well above the Kaplan threshold
        let u0: Vec<f64> = domain
            .positions()
            .iter()
            .map(|p| 30.0 * (-(p[0] * p[0]) / 0.08).exp())
            .collect();
        let controls = StepControls { t_max: 20.0, ..Default::default() };
        let run = solve_dirichlet(&system, &eigen, 2.0, &u0, &controls).unwrap();
        assert_eq!(run.verdict, Verdict::BlewUp);
        let set =
            blowup_set_estimate(&run, 0.01, 2.0, &SetGeometry::Domain(&domain)).unwrap();
        assert!(set.interior_flag, "blow-up set touched the boundary");
        assert!(!set.nodes.is_empty());
        // the spike concentrates: the set is a small neighborhood of 0
        for &k in &set.nodes {
            assert!(domain.positions()[k][0].abs() < 0.5);
        }
    }
}
