//! Natural energy, Lyapunov functional and decay-rate fits.
//!
//! With `z(s) = y(t - tau s)`,
//!
//! ```text
//! E(t) = 1/2 |y_t|^2 + c1/2 |grad y|^2
//!      + tau d1/2 int_0^1 |grad z(s)|^2 ds + tau d2/2 int_0^1 |grad z_t(s)|^2 ds
//! ```
//!
//! The `s` integrals use the trapezoid rule over the field's own time samples in
//! `[t - tau, t]`, so the field must be recorded on a uniform grid that includes the history.

use thiserror::Error;

use crate::model::{Coefficients, FieldGrid, StabilityInput};
use crate::norms::{grad_sq, l2_inner, l2_sq, uniform_spacing};
use crate::stability::check_assumption;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("history window: {0}")]
    Window(String),
    #[error("field has no velocities")]
    MissingVelocity,
    #[error("unsupported coefficients: {0}")]
    Unsupported(String),
    #[error("Lyapunov weights infeasible: {0}")]
    Infeasible(String),
    #[error("decay fit: {0}")]
    Fit(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTrace {
    pub t_nodes: Vec<f64>,
    pub energy: Vec<f64>,
    pub lyapunov: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovWeights {
    pub n: f64,
    pub m: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub eps: [f64; 5],
    pub k1: f64,
    pub k2: f64,
    /// admissible `N / M` interval the weight was picked from
    pub ratio_bounds: (f64, f64),
}

/// Per-slice spatial quantities of a uniform field.
struct Slices {
    dx: f64,
    m: usize,
    first: usize,
    grad_y: Vec<f64>,
    grad_v: Vec<f64>,
}

fn slices(field: &FieldGrid, c: &Coefficients) -> Result<Slices, EnergyError> {
    if !(c.c1 > 0.0 && c.d1 > 0.0 && c.tau > 0.0) {
        return Err(EnergyError::Unsupported("need c1, d1, tau > 0".into()));
    }
    if c.d2 < 0.0 {
        return Err(EnergyError::Unsupported(format!(
            "d2 = {} < 0 makes the energy indefinite",
            c.d2
        )));
    }
    let vel = field.velocities.as_ref().ok_or(EnergyError::MissingVelocity)?;
    let dx = uniform_spacing(&field.x_nodes)
        .ok_or_else(|| EnergyError::Window("space grid is not uniform".into()))?;
    let dt = uniform_spacing(&field.t_nodes)
        .ok_or_else(|| EnergyError::Window("time grid is not uniform".into()))?;
    let m = (c.tau / dt).round();
    if m < 1.0 || (m * dt - c.tau).abs() > 1e-9 * c.tau {
        return Err(EnergyError::Window(format!(
            "tau = {} is not a multiple of the recorded step {dt}",
            c.tau
        )));
    }
    let m = m as usize;
    if field.nt() <= m {
        return Err(EnergyError::Window(format!(
            "{} samples cannot cover one delay of {m} steps",
            field.nt()
        )));
    }
    let grad_y = (0..field.nt())
        .map(|i| grad_sq(field.values.row(i).as_slice().expect("row-major"), dx))
        .collect();
    let grad_v = (0..field.nt())
        .map(|i| grad_sq(vel.row(i).as_slice().expect("row-major"), dx))
        .collect();
    Ok(Slices {
        dx,
        m,
        first: m,
        grad_y,
        grad_v,
    })
}

/// Trapezoid rule for `int_0^1 g ds` on the window ending at sample `i`.
fn window_trapezoid(g: &[f64], i: usize, m: usize) -> f64 {
    let inner: f64 = g[i - m + 1..i].iter().sum();
    (inner + 0.5 * (g[i] + g[i - m])) / m as f64
}

/// Energy at every sample whose delay window is covered by the field.
pub fn compute_energy(field: &FieldGrid, c: &Coefficients) -> Result<EnergyTrace, EnergyError> {
    let s = slices(field, c)?;
    let vel = field.velocities.as_ref().expect("checked");
    let mut t_nodes = Vec::new();
    let mut energy = Vec::new();
    for i in s.first..field.nt() {
        let v = vel.row(i);
        let kinetic = 0.5 * l2_sq(v.as_slice().expect("row-major"), s.dx);
        let e = kinetic
            + 0.5 * c.c1 * s.grad_y[i]
            + 0.5 * c.tau * c.d1 * window_trapezoid(&s.grad_y, i, s.m)
            + 0.5 * c.tau * c.d2 * window_trapezoid(&s.grad_v, i, s.m);
        t_nodes.push(field.t_nodes[i]);
        energy.push(e);
    }
    Ok(EnergyTrace {
        t_nodes,
        energy,
        lyapunov: None,
    })
}

/// Weights of the Lyapunov functional with `M = 1` and `N` the geometric mean of its bounds.
pub fn lyapunov_weights(s: &StabilityInput) -> Result<LyapunovWeights, EnergyError> {
    let assumption = check_assumption(s);
    if !assumption.ok {
        let failed: Vec<String> = assumption
            .conditions
            .iter()
            .filter(|c| !c.satisfied)
            .map(|c| format!("{} ({} {} {})", c.id, c.lhs, c.relation.symbol(), c.rhs))
            .collect();
        return Err(EnergyError::Infeasible(format!(
            "assumption fails: {}",
            failed.join(", ")
        )));
    }
    let c = &s.coeffs;
    let (c1, c2, d1, d2, cp) = (c.c1, c.c2, c.d1, c.d2, s.cp);
    let upper = d1 * (c1 * c1 - 9.0 * c2 * c2) / (9.0 * c1 * c2 * c2);
    let lower_a = 9.0 * d2 * d2 * d1 / (c1 * (d1 * d1 - 9.0 * d2 * d2));
    let lower_b = (2.0 * cp * c1 + 3.0 * d1 * d1) / (c1 * d1);
    let lower = lower_a.max(lower_b);
    if !(lower > 0.0 && lower < upper) {
        return Err(EnergyError::Infeasible(format!(
            "N/M interval ({lower}, {upper}) is empty"
        )));
    }
    let m = 1.0;
    let n = (lower * upper).sqrt() * m;
    let xi1 = m * c1 / 3.0;
    let xi2 = n * d1 / 3.0;
    let eps = [
        d1 / (3.0 * c2),
        d1 / (3.0 * d2),
        c1 / (3.0 * c2),
        c1 / (3.0 * d1),
        c1 / (3.0 * d2),
    ];
    let e_hat = (cp / c1).sqrt();
    let num_lo = [n - m * e_hat, c1 * n - m * cp / e_hat, xi1, xi2];
    let num_hi = [n + m * e_hat, c1 * n + m * cp / e_hat, xi1, xi2];
    let coef_max = [1.0, c1, d1, d2].into_iter().fold(f64::MIN, f64::max);
    let coef_min = [1.0, c1, d1, d2].into_iter().fold(f64::MAX, f64::min);
    let k1 = num_lo.into_iter().fold(f64::MAX, f64::min) / coef_max;
    let k2 = num_hi.into_iter().fold(f64::MIN, f64::max) / coef_min;
    if !(k1 > 0.0) {
        return Err(EnergyError::Infeasible(format!("lower equivalence constant {k1} <= 0")));
    }
    Ok(LyapunovWeights {
        n,
        m,
        xi1,
        xi2,
        eps,
        k1,
        k2,
        ratio_bounds: (lower, upper),
    })
}

/// Energy and Lyapunov functional on the covered samples.
pub fn compute_lyapunov(
    field: &FieldGrid,
    c: &Coefficients,
    w: &LyapunovWeights,
) -> Result<EnergyTrace, EnergyError> {
    let mut trace = compute_energy(field, c)?;
    let s = slices(field, c)?;
    let vel = field.velocities.as_ref().expect("checked");
    let mut f = Vec::with_capacity(trace.energy.len());
    for i in s.first..field.nt() {
        let v = vel.row(i);
        let v = v.as_slice().expect("row-major");
        let y = field.values.row(i);
        let y = y.as_slice().expect("row-major");
        let val = 0.5 * w.n * l2_sq(v, s.dx)
            + 0.5 * c.c1 * w.n * s.grad_y[i]
            + w.m * l2_inner(y, v, s.dx)
            + 0.5 * c.tau * w.xi1 * window_trapezoid(&s.grad_y, i, s.m)
            + 0.5 * c.tau * w.xi2 * window_trapezoid(&s.grad_v, i, s.m);
        f.push(val);
    }
    trace.lyapunov = Some(f);
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub alpha_hat: f64,
    pub c_hat: f64,
    pub r_squared: f64,
    pub nodes: usize,
}

/// Least-squares line through `(t, ln E)` on `t_lo <= t <= t_hi`; slope `= -2 alpha_hat`.
pub fn fit_decay_rate(trace: &EnergyTrace, window: (f64, f64)) -> Result<DecayFit, EnergyError> {
    let pts: Vec<(f64, f64)> = trace
        .t_nodes
        .iter()
        .zip(&trace.energy)
        .filter(|(&t, &e)| t >= window.0 && t <= window.1 && e >= 1e-300 && e.is_finite())
        .map(|(&t, &e)| (t, e.ln()))
        .collect();
    if pts.len() < 8 {
        return Err(EnergyError::Fit(format!(
            "{} usable nodes in [{}, {}], need at least 8",
            pts.len(),
            window.0,
            window.1
        )));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let stl: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let sll: f64 = pts.iter().map(|p| (p.1 - ml).powi(2)).sum();
    if stt == 0.0 {
        return Err(EnergyError::Fit("window has a single time value".into()));
    }
    let slope = stl / stt;
    let intercept = ml - slope * mt;
    let r_squared = if sll == 0.0 { 1.0 } else { stl * stl / (stt * sll) };
    Ok(DecayFit {
        alpha_hat: -0.5 * slope,
        c_hat: intercept.exp(),
        r_squared,
        nodes: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::discrete_poincare_constant;
    use ndarray::Array2;
    use std::f64::consts::PI;

    fn static_field(y0: impl Fn(f64) -> f64, nx: usize, t: &[f64]) -> FieldGrid {
        let x: Vec<f64> = (0..=nx).map(|j| j as f64 / nx as f64).collect();
        let mut v = Array2::zeros((t.len(), nx + 1));
        for i in 0..t.len() {
            for j in 0..=nx {
                v[[i, j]] = y0(x[j]);
            }
        }
        let z = Array2::zeros((t.len(), nx + 1));
        FieldGrid::new(x, t.to_vec(), v, Some(z)).unwrap()
    }

    #[test]
    fn zero_field_zero_energy() {
        let t: Vec<f64> = (0..21).map(|i| -0.5 + 0.05 * i as f64).collect();
        let f = static_field(|_| 0.0, 16, &t);
        let c = Coefficients::new(1.0, 0.1, 1.0, 0.1, 0.5);
        let e = compute_energy(&f, &c).unwrap();
        assert_eq!(e.t_nodes.len(), 11);
        assert!(e.energy.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_field_energy_is_stiffness_times_lambda() {
        let t: Vec<f64> = (0..41).map(|i| -1.0 + 0.05 * i as f64).collect();
        let nx = 2000;
        let phi0 = |x: f64| 2f64.sqrt() * (PI * x / 2.0).sin();
        let f = static_field(phi0, nx, &t);
        let c = Coefficients::new(1.3, 0.1, 0.7, 0.1, 1.0);
        let e = compute_energy(&f, &c).unwrap();
        let lambda0 = PI * PI / 4.0;
        let want = 0.5 * (c.c1 + c.tau * c.d1) * lambda0;
        for v in &e.energy {
            assert!((v / want - 1.0).abs() < 1e-6, "{v} vs {want}");
        }
        let doubled = compute_energy(&f.scale(2.0), &c).unwrap();
        for (a, b) in doubled.energy.iter().zip(&e.energy) {
            assert!((a - 4.0 * b).abs() < 1e-12 * b);
        }
    }

    #[test]
    fn window_errors() {
        let t: Vec<f64> = (0..5).map(|i| 0.1 * i as f64).collect();
        let f = static_field(|x| x, 8, &t);
        let c = Coefficients::new(1.0, 0.1, 1.0, 0.1, 1.0);
        assert!(matches!(compute_energy(&f, &c), Err(EnergyError::Window(_))));
        let c = Coefficients::new(1.0, 0.1, 1.0, 0.1, 0.13);
        assert!(matches!(compute_energy(&f, &c), Err(EnergyError::Window(_))));
        let c = Coefficients::new(1.0, 0.1, 1.0, -0.1, 0.2);
        assert!(matches!(compute_energy(&f, &c), Err(EnergyError::Unsupported(_))));
    }

    #[test]
    fn weight_example() {
        let s = StabilityInput::from_tuple(1.0, 0.1, 1.0, 0.1, 1.0);
        let w = lyapunov_weights(&s).unwrap();
        assert!((w.ratio_bounds.1 - 10.111111111111).abs() < 1e-9);
        assert_eq!(w.ratio_bounds.0, 5.0);
        assert!((w.n - 7.110243).abs() < 1e-5);
        assert_eq!(w.m, 1.0);
        assert_eq!(w.eps[0] * 3.0 * 0.1, 1.0);
        assert!((w.xi1 - 1.0 / 3.0).abs() < 1e-15);
        assert!((w.xi2 - w.n / 3.0).abs() < 1e-15);
        assert!(w.k1 > 0.0 && w.k2 > w.k1);

        let bad = StabilityInput::from_tuple(1.0, 0.2, 1.0, 0.1, 1.0);
        match lyapunov_weights(&bad) {
            Err(EnergyError::Infeasible(msg)) => assert!(msg.contains("i.a")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fit_exact_exponentials() {
        let t: Vec<f64> = (0..50).map(|i| 0.1 * i as f64).collect();
        let tr = EnergyTrace {
            energy: t.iter().map(|&t| (-2.0 * t).exp()).collect(),
            t_nodes: t.clone(),
            lyapunov: None,
        };
        let f = fit_decay_rate(&tr, (0.0, 10.0)).unwrap();
        assert!((f.alpha_hat - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);

        let tr = EnergyTrace {
            energy: t.iter().map(|&t| 5.0 * (-0.6 * t).exp()).collect(),
            t_nodes: t.clone(),
            lyapunov: None,
        };
        let f = fit_decay_rate(&tr, (0.0, 10.0)).unwrap();
        assert!((f.alpha_hat - 0.3).abs() < 1e-12);
        assert!((f.c_hat - 5.0).abs() < 1e-10);

        let tr = EnergyTrace {
            energy: t.iter().map(|&t| (-t).exp() * (1.0 + 0.5 * (10.0 * t).sin())).collect(),
            t_nodes: t.clone(),
            lyapunov: None,
        };
        assert!(fit_decay_rate(&tr, (0.0, 10.0)).unwrap().alpha_hat > 0.0);
        assert!(fit_decay_rate(&tr, (0.0, 0.5)).is_err());
    }

    #[test]
    fn discrete_constant_exceeds_continuous() {
        let a = discrete_poincare_constant(1.0, 32).unwrap();
        assert!(a > 4.0 / (PI * PI));
    }
}
