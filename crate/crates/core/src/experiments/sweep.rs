//! `τ_max` sweeps over one shared disturbance realization.

use rayon::prelude::*;
use serde::Serialize;

use super::run::{run_scenario, RunRecord, RunStatus};
use super::scenario::Scenario;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub tau_max: usize,
    pub tau_inf: usize,
    pub delta_sigma_inf: usize,
    pub max_deviation: f64,
    /// `None` when the run did not finish.
    pub v_bound: Option<f64>,
    pub v_observed: Option<f64>,
    pub status: RunStatus,
    pub disturbance_digest: u64,
}

impl SweepRow {
    pub fn from_record(r: &RunRecord) -> Self {
        Self {
            tau_max: r.scenario.tau_max,
            tau_inf: r.delays.tau_inf,
            delta_sigma_inf: r.delays.delta_sigma_inf,
            max_deviation: r.max_deviation,
            v_bound: r.bound.as_ref().map(|b| b.v_bound),
            v_observed: r.bound.as_ref().map(|b| b.v_observed),
            status: r.status,
            disturbance_digest: r.disturbance_digest,
        }
    }
}

/// Runs `base` once per entry of `taus` (in parallel) and returns the records
/// in input order. The seed is untouched, so every run sees the same noise.
/// Actuator delays larger than a swept `τ_max` are clamped to it.
pub fn sweep_tau_max(base: &Scenario, taus: &[usize]) -> Result<(Vec<RunRecord>, Vec<SweepRow>)> {
    if taus.is_empty() {
        return Err(Error::Config("tau_max sweep needs at least one value".into()));
    }
    let records = taus
        .par_iter()
        .map(|&tau| run_scenario(&base.with_tau_max(tau)))
        .collect::<Result<Vec<_>>>()?;
    let rows = records.iter().map(SweepRow::from_record).collect();
    Ok((records, rows))
}

/// Least-squares line through `(x, y)` with its coefficient of determination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(points: &[(f64, f64)]) -> Option<LinearFit> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_of_a_line_is_exact() {
        let pts: Vec<_> = (0..7).map(|i| (i as f64, 0.5 + 2.0 * i as f64)).collect();
        let fit = linear_fit(&pts).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 0.5).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(linear_fit(&pts[..1]).is_none());
    }

    #[test]
    fn empty_sweep_is_rejected() {
        assert!(sweep_tau_max(&Scenario::integrator_static(0), &[]).is_err());
    }

    #[test]
    fn sweep_shares_the_noise() {
        let mut s = Scenario::integrator_static(0);
        s.disturbance_bound = 0.1;
        s.steps = 60;
        let (_, rows) = sweep_tau_max(&s, &[0, 1, 2, 3]).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.windows(2).all(|w| w[0].disturbance_digest == w[1].disturbance_digest));
        assert!(rows.iter().all(|r| r.status == RunStatus::Ok));
    }
}
