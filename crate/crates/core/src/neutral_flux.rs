//! Boundary flux `psi(t) = y_x(t, L)` of the traction problem.
//!
//! The flux obeys the scalar neutral delay equation
//!
//! ```text
//! d1 psi'(t) + c1 psi(t) + c2 psi(t - tau) + d2 psi'(t - tau) = r,   psi = 0 on [-tau, 0]
//! ```
//!
//! integrated with the trapezoidal rule on a delay-aligned grid. The delayed derivative is
//! integrated exactly over each step, which turns it into the stored first difference
//! `psi_{j-N} - psi_{j-N-1}`.

use thiserror::Error;

use crate::model::{Coefficients, ModelError, MusclePhysical};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FluxError {
    #[error("leading coefficient d1 vanishes: the neutral equation cannot be solved for psi'")]
    SingularLeading,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid flux configuration: {0}")]
    Config(String),
}

/// Which right-hand side multiplies the traction in coefficient form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FluxRhs {
    /// `r = f / rho`, consistent with `eta psi' + E psi + ... = f`.
    #[default]
    PerDensity,
    /// `r = f` taken verbatim next to `c1 = E / rho`.
    Literal,
}

impl FluxRhs {
    pub fn value(self, p: &MusclePhysical) -> f64 {
        match self {
            FluxRhs::PerDensity => p.traction / p.rho,
            FluxRhs::Literal => p.traction,
        }
    }
}

/// `psi` on the grid `t_i = (i - N) dt`, `i = 0..=N (1 + H)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFluxTrace {
    pub t_nodes: Vec<f64>,
    pub psi: Vec<f64>,
    pub dt: f64,
    pub n_per_delay: usize,
    /// One-sided slope `psi'(0+) = r / d1`; `psi'` jumps from zero to this value at `t = 0`.
    pub psi_dot_0plus: f64,
}

impl BoundaryFluxTrace {
    /// Index of `t = 0`.
    pub fn zero_index(&self) -> usize {
        self.n_per_delay
    }

    pub fn tau(&self) -> f64 {
        self.dt * self.n_per_delay as f64
    }

    /// Value at the grid node closest to `t`.
    pub fn at(&self, t: f64) -> f64 {
        let i = ((t / self.dt).round() as i64 + self.n_per_delay as i64)
            .clamp(0, self.psi.len() as i64 - 1);
        self.psi[i as usize]
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }
}

/// Second-difference source on the same grid as its [`BoundaryFluxTrace`].
#[derive(Debug, Clone, PartialEq)]
pub struct FluxSourceTrace {
    pub t_nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub dt: f64,
    pub n_per_delay: usize,
}

fn time_grid(n_per_delay: usize, horizon_delays: usize, dt: f64) -> Vec<f64> {
    let n = n_per_delay as i64;
    (0..=(n * (1 + horizon_delays as i64)))
        .map(|i| (i - n) as f64 * dt)
        .collect()
}

fn check_grid(n_per_delay: usize, horizon_delays: usize) -> Result<(), FluxError> {
    if n_per_delay < 10 {
        return Err(FluxError::Config(format!(
            "n_per_delay must be >= 10, got {n_per_delay}"
        )));
    }
    if horizon_delays == 0 {
        return Err(FluxError::Config("horizon_delays must be >= 1".into()));
    }
    Ok(())
}

/// Solve for the muscle traction problem with the default right-hand side.
///
/// Uses the closed form `(r / c1)(1 - exp(-c1 t / d1))` when `epsilon = 0`.
pub fn solve_neutral_flux(
    p: &MusclePhysical,
    n_per_delay: usize,
    horizon_delays: usize,
) -> Result<BoundaryFluxTrace, FluxError> {
    solve_neutral_flux_with(p, n_per_delay, horizon_delays, FluxRhs::default())
}

pub fn solve_neutral_flux_with(
    p: &MusclePhysical,
    n_per_delay: usize,
    horizon_delays: usize,
    rhs: FluxRhs,
) -> Result<BoundaryFluxTrace, FluxError> {
    let c = p.coefficients()?;
    let r = rhs.value(p);
    if c.c2 == 0.0 && c.d2 == 0.0 {
        closed_form_flux(&c, r, n_per_delay, horizon_delays)
    } else {
        integrate_neutral_flux(&c, r, n_per_delay, horizon_delays)
    }
}

/// Undelayed solution sampled on the delay-aligned grid.
pub fn closed_form_flux(
    c: &Coefficients,
    r: f64,
    n_per_delay: usize,
    horizon_delays: usize,
) -> Result<BoundaryFluxTrace, FluxError> {
    check_grid(n_per_delay, horizon_delays)?;
    if c.d1 == 0.0 {
        return Err(FluxError::SingularLeading);
    }
    let dt = c.tau / n_per_delay as f64;
    let t_nodes = time_grid(n_per_delay, horizon_delays, dt);
    let rate = c.c1 / c.d1;
    let psi = t_nodes
        .iter()
        .map(|&t| {
            if t <= 0.0 {
                0.0
            } else {
                r / c.c1 * -(-rate * t).exp_m1()
            }
        })
        .collect();
    Ok(BoundaryFluxTrace {
        t_nodes,
        psi,
        dt,
        n_per_delay,
        psi_dot_0plus: r / c.d1,
    })
}

/// Trapezoidal stepping of the neutral equation, delayed or not.
pub fn integrate_neutral_flux(
    c: &Coefficients,
    r: f64,
    n_per_delay: usize,
    horizon_delays: usize,
) -> Result<BoundaryFluxTrace, FluxError> {
    check_grid(n_per_delay, horizon_delays)?;
    if c.d1 == 0.0 {
        return Err(FluxError::SingularLeading);
    }
    let v = c.validate(true);
    if !v.is_ok() {
        return Err(ModelError::InvalidPhysical(v.to_string()).into());
    }
    let n = n_per_delay;
    let dt = c.tau / n as f64;
    let t_nodes = time_grid(n, horizon_delays, dt);
    let mut psi = vec![0.0; t_nodes.len()];

    let h = 0.5 * dt;
    let lhs = c.d1 + c.c1 * h;
    let keep = c.d1 - c.c1 * h;
    for j in (n + 1)..psi.len() {
        let (a, b) = (psi[j - n], psi[j - n - 1]);
        let delayed = c.c2 * h * (a + b) + c.d2 * (a - b);
        psi[j] = (keep * psi[j - 1] - delayed + r * dt) / lhs;
    }
    Ok(BoundaryFluxTrace {
        t_nodes,
        psi,
        dt,
        n_per_delay: n,
        psi_dot_0plus: r / c.d1,
    })
}

fn second_difference(g: &[f64], dt: f64, n_per_delay: usize) -> Vec<f64> {
    let inv = 1.0 / (dt * dt);
    (0..g.len())
        .map(|i| {
            if i <= n_per_delay {
                0.0
            } else {
                (g[i] - 2.0 * g[i - 1] + g[i - 2]) * inv
            }
        })
        .collect()
}

/// Backward second difference of `psi`, zero for `t <= 0`.
///
/// The node `t = dt` keeps the discrete impulse `~ psi'(0+) / dt` produced by the kink.
pub fn flux_source(trace: &BoundaryFluxTrace) -> Result<FluxSourceTrace, FluxError> {
    check_source_len(trace)?;
    Ok(FluxSourceTrace {
        t_nodes: trace.t_nodes.clone(),
        values: second_difference(&trace.psi, trace.dt, trace.n_per_delay),
        dt: trace.dt,
        n_per_delay: trace.n_per_delay,
    })
}

/// Impulse-free source: second difference of `psi(t) - psi'(0+) |t| / 2`.
///
/// The removed impulse has to be applied separately as a velocity jump.
pub fn flux_source_split(trace: &BoundaryFluxTrace) -> Result<FluxSourceTrace, FluxError> {
    check_source_len(trace)?;
    let g: Vec<f64> = trace
        .t_nodes
        .iter()
        .zip(&trace.psi)
        .map(|(&t, &p)| p - 0.5 * trace.psi_dot_0plus * t.abs())
        .collect();
    Ok(FluxSourceTrace {
        t_nodes: trace.t_nodes.clone(),
        values: second_difference(&g, trace.dt, trace.n_per_delay),
        dt: trace.dt,
        n_per_delay: trace.n_per_delay,
    })
}

fn check_source_len(trace: &BoundaryFluxTrace) -> Result<(), FluxError> {
    if trace.psi.len() < trace.n_per_delay + 4 {
        return Err(FluxError::Config(
            "flux trace needs at least 3 positive-time nodes".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(eps: f64) -> MusclePhysical {
        MusclePhysical::moravec2007(eps)
    }

    #[test]
    fn closed_form_value_at_ten_delays() {
        let tr = solve_neutral_flux(&table(0.0), 1000, 10).unwrap();
        let last = *tr.psi.last().unwrap();
        assert!((last - 0.5026 * (1.0 - (-10.0f64).exp())).abs() < 1e-12);
        assert!((last - 0.50258).abs() < 1e-5);
        assert!(tr.psi[..=tr.zero_index()].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let p = MusclePhysical {
            traction: 0.0,
            ..table(0.3)
        };
        let tr = solve_neutral_flux(&p, 50, 4).unwrap();
        assert!(tr.psi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stepper_matches_closed_form_when_undelayed() {
        let p = table(0.0);
        let c = p.coefficients().unwrap();
        let r = FluxRhs::PerDensity.value(&p);
        let num = integrate_neutral_flux(&c, r, 10_000, 10).unwrap();
        let exact = closed_form_flux(&c, r, 10_000, 10).unwrap();
        let scale = exact.psi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = num
            .psi
            .iter()
            .zip(&exact.psi)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err / scale < 1e-8, "relative sup error {}", err / scale);
    }

    #[test]
    fn rejects_singular_and_coarse() {
        let mut c = table(0.1).coefficients().unwrap();
        c.d1 = 0.0;
        assert_eq!(
            integrate_neutral_flux(&c, 1.0, 100, 2),
            Err(FluxError::SingularLeading)
        );
        assert!(solve_neutral_flux(&table(0.1), 5, 2).is_err());
    }

    #[test]
    fn literal_rhs_scales_by_density() {
        let p = table(0.2);
        let a = solve_neutral_flux_with(&p, 100, 3, FluxRhs::PerDensity).unwrap();
        let b = solve_neutral_flux_with(&p, 100, 3, FluxRhs::Literal).unwrap();
        for (x, y) in a.psi.iter().zip(&b.psi) {
            assert!((x * p.rho - y).abs() <= 1e-12 * y.abs().max(1e-300));
        }
    }

    #[test]
    fn source_of_kinked_linear_function() {
        let n = 10;
        let dt = 0.1;
        let t_nodes = time_grid(n, 2, dt);
        let psi: Vec<f64> = t_nodes.iter().map(|&t| if t > 0.0 { 3.0 * t } else { 0.0 }).collect();
        let tr = BoundaryFluxTrace {
            t_nodes,
            psi,
            dt,
            n_per_delay: n,
            psi_dot_0plus: 3.0,
        };
        let s = flux_source(&tr).unwrap();
        assert!((s.values[n + 1] - 3.0 / dt).abs() < 1e-9);
        assert!(s.values[..=n].iter().all(|&v| v == 0.0));
        assert!(s.values[n + 2..].iter().all(|v| v.abs() < 1e-9));

        let split = flux_source_split(&tr).unwrap();
        assert!(split.values.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn source_of_quadratic_extrapolates_to_2a() {
        let a = 1.7;
        let mut vals = Vec::new();
        for dt in [0.1, 0.05, 0.025] {
            let n = 10;
            let t_nodes = time_grid(n, 3, dt);
            let psi: Vec<f64> = t_nodes.iter().map(|&t| if t > 0.0 { a * t * t } else { 0.0 }).collect();
            let tr = BoundaryFluxTrace {
                t_nodes,
                psi,
                dt,
                n_per_delay: n,
                psi_dot_0plus: 0.0,
            };
            let s = flux_source(&tr).unwrap();
            vals.push(s.values[2 * n]);
        }
        // Richardson on the sequence: interior second differences of a quadratic are exact
        let extrap = vals[2] + (vals[2] - vals[1]) / 3.0;
        assert!((extrap - 2.0 * a).abs() < 1e-8);
    }

    #[test]
    fn zero_trace_zero_source() {
        let c = table(0.1).coefficients().unwrap();
        let tr = integrate_neutral_flux(&c, 0.0, 20, 2).unwrap();
        assert!(flux_source(&tr).unwrap().values.iter().all(|&v| v == 0.0));
    }
}
