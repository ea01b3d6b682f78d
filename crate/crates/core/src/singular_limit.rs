//! Convergence of the delayed system to the instantaneous one with `(c1 + c2, d1 + d2)`.
//!
//! Every delayed run uses `dt = tau / N` with a shared `N` and `dx`; the limit system is solved
//! once at the smallest step. Samples are kept on the step of the largest delay, so all grids
//! nest. A second run of the largest delay at the smallest step bounds the scheme error
//! separately from the delay effect.

use thiserror::Error;

use crate::exec::Execution;
use crate::fd_oracle::{
    compare_fields, solve_fd_delayed, solve_fd_instantaneous, ErrorReport, FdConfig, FdError,
    InitialData,
};
use crate::modal::eigenpair;
use crate::model::Coefficients;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SingularLimitError {
    #[error("singular-limit configuration error: {0}")]
    Config(String),
    #[error("solver failed at tau = {tau}: {source}")]
    Solver { tau: f64, source: FdError },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepGrid {
    pub length: f64,
    pub nx: usize,
    pub n_per_delay: usize,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PinningReport {
    pub tau: f64,
    pub dt_sweep: f64,
    pub dt_fine: f64,
    /// squared error between the sweep run and its fine-step rerun
    pub scheme_error: f64,
    /// `scheme_error / e(tau_min)`
    pub relative_to_min_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub taus: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// `exp(intercept)`, the fitted constant in `e ~ C tau^slope`
    pub c_hat: f64,
    pub traces: Vec<ErrorReport>,
    pub pinning: PinningReport,
}

impl ConvergenceReport {
    /// Strictly decreasing, allowing one inversion when both values sit below `1e-12`.
    pub fn errors_decreasing(&self) -> bool {
        let mut inversions = 0;
        for w in self.errors.windows(2) {
            if !(w[1] < w[0]) {
                if w[0] < 1e-12 && w[1] < 1e-12 {
                    inversions += 1;
                } else {
                    return false;
                }
            }
        }
        inversions <= 1
    }
}

fn check_sweep(taus: &[f64], grid: &SweepGrid) -> Result<Vec<usize>, SingularLimitError> {
    let bad = |m: String| Err(SingularLimitError::Config(m));
    if taus.len() < 2 {
        return bad("need at least two delays".into());
    }
    if taus.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return bad("delays must be positive".into());
    }
    if taus.windows(2).any(|w| !(w[1] < w[0])) {
        return bad("delays must be strictly decreasing".into());
    }
    let mut ratios = Vec::with_capacity(taus.len());
    for &t in taus {
        let r = taus[0] / t;
        if (r - r.round()).abs() > 1e-9 * r {
            return bad(format!("tau_max / {t} = {r} is not an integer"));
        }
        ratios.push(r.round() as usize);
    }
    let dt_max = taus[0] / grid.n_per_delay as f64;
    let steps = grid.horizon / dt_max;
    if (steps - steps.round()).abs() > 1e-9 * steps || steps.round() < 1.0 {
        return bad(format!("horizon {} is not a multiple of {dt_max}", grid.horizon));
    }
    Ok(ratios)
}

pub fn run_singular_limit(
    base: &Coefficients,
    ic: &InitialData,
    taus: &[f64],
    grid: &SweepGrid,
    exec: Execution,
) -> Result<ConvergenceReport, SingularLimitError> {
    let ratios = check_sweep(taus, grid)?;
    let n = grid.n_per_delay;
    let fine_ratio = *ratios.last().expect("checked");
    let tau_min = *taus.last().expect("checked");
    let dt_min = tau_min / n as f64;
    let (a, b) = base.summed();

    // jobs: one delayed run per tau, the limit system, and the pinning rerun
    let jobs = taus.len() + 2;
    let fields = exec.try_map(jobs, |job| {
        let wrap = |tau: f64| move |source| SingularLimitError::Solver { tau, source };
        if job < taus.len() {
            let tau = taus[job];
            let cfg = FdConfig::new(grid.length, grid.nx, n, grid.horizon).with_stride(ratios[job]);
            solve_fd_delayed(&base.with_tau(tau), ic, &cfg, None).map_err(wrap(tau))
        } else if job == taus.len() {
            let cfg = FdConfig::new(grid.length, grid.nx, n, grid.horizon).with_stride(fine_ratio);
            solve_fd_instantaneous(a, b, ic, &cfg, dt_min, None).map_err(wrap(0.0))
        } else {
            let cfg = FdConfig::new(grid.length, grid.nx, n * fine_ratio, grid.horizon)
                .with_stride(fine_ratio);
            solve_fd_delayed(&base.with_tau(taus[0]), ic, &cfg, None).map_err(wrap(taus[0]))
        }
    })?;
    let limit = &fields[taus.len()];
    let mut traces = Vec::with_capacity(taus.len());
    for (k, &tau) in taus.iter().enumerate() {
        let rep = compare_fields(&fields[k], limit)
            .map_err(|source| SingularLimitError::Solver { tau, source })?;
        traces.push(rep);
    }
    let errors: Vec<f64> = traces.iter().map(|r| r.sup_energy_sq).collect();
    let pin = compare_fields(&fields[0], &fields[taus.len() + 1])
        .map_err(|source| SingularLimitError::Solver { tau: taus[0], source })?;
    let e_min = *errors.last().expect("checked");
    let pinning = PinningReport {
        tau: taus[0],
        dt_sweep: taus[0] / n as f64,
        dt_fine: dt_min,
        scheme_error: pin.sup_energy_sq,
        relative_to_min_error: if e_min > 0.0 {
            pin.sup_energy_sq / e_min
        } else {
            f64::NAN
        },
    };
    let (slope, intercept) = log_log_fit(taus, &errors);
    Ok(ConvergenceReport {
        taus: taus.to_vec(),
        errors,
        slope,
        intercept,
        c_hat: intercept.exp(),
        traces,
        pinning,
    })
}

/// Least squares on `(ln tau, ln e)`; NaN when an error is not positive.
fn log_log_fit(taus: &[f64], errors: &[f64]) -> (f64, f64) {
    if errors.iter().any(|&e| !(e > 0.0)) {
        return (f64::NAN, f64::NAN);
    }
    let pts: Vec<(f64, f64)> = taus.iter().zip(errors).map(|(t, e)| (t.ln(), e.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// The default experiment: first eigenfunction as data, frozen history, dyadic delays.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularLimitScenario {
    pub coeffs: Coefficients,
    pub taus: Vec<f64>,
    pub grid: SweepGrid,
}

impl Default for SingularLimitScenario {
    fn default() -> Self {
        let tau0 = 0.1;
        Self {
            coeffs: Coefficients::new(1.0, 0.2, 1.0, 0.2, tau0),
            taus: (0..4).map(|k| tau0 / f64::from(1u32 << k)).collect(),
            grid: SweepGrid {
                length: 1.0,
                nx: 100,
                n_per_delay: 100,
                horizon: 1.0,
            },
        }
    }
}

impl SingularLimitScenario {
    pub fn initial_data(&self) -> InitialData {
        let mode = eigenpair(0, self.grid.length).expect("positive length");
        InitialData::constant_history(move |x| mode.phi(x))
    }

    pub fn run(&self, exec: Execution) -> Result<ConvergenceReport, SingularLimitError> {
        run_singular_limit(&self.coeffs, &self.initial_data(), &self.taus, &self.grid, exec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SingularLimitScenario {
        SingularLimitScenario {
            grid: SweepGrid {
                length: 1.0,
                nx: 16,
                n_per_delay: 10,
                horizon: 0.5,
            },
            ..Default::default()
        }
    }

    #[test]
    fn zero_data_zero_errors() {
        let s = small();
        let r = run_singular_limit(&s.coeffs, &InitialData::zero(), &s.taus, &s.grid, Execution::Serial)
            .unwrap();
        assert!(r.errors.iter().all(|&e| e == 0.0));
        assert!(r.slope.is_nan());
    }

    #[test]
    fn undelayed_harness_is_unbiased() {
        let mut s = small();
        s.coeffs.c2 = 0.0;
        s.coeffs.d2 = 0.0;
        let r = s.run(Execution::Serial).unwrap();
        // only the time step differs between the runs
        assert!(r.errors.iter().all(|&e| e < 1e-8), "{:?}", r.errors);
    }

    #[test]
    fn rejects_bad_sweeps() {
        let s = small();
        let ic = s.initial_data();
        for taus in [vec![0.1], vec![0.1, 0.2], vec![0.1, 0.03]] {
            assert!(matches!(
                run_singular_limit(&s.coeffs, &ic, &taus, &s.grid, Execution::Serial),
                Err(SingularLimitError::Config(_))
            ));
        }
    }

    #[test]
    fn small_sweep_decreases() {
        let r = small().run(Execution::Parallel).unwrap();
        assert!(r.errors_decreasing(), "{:?}", r.errors);
        assert!(r.slope > 0.8);
    }
}
