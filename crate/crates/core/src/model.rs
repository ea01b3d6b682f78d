//! Core domain types shared by all solvers.

use std::collections::VecDeque;
use std::f64::consts::PI;

use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid physical parameter: {0}")]
    InvalidPhysical(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite history sample at t = {t}")]
    NonFiniteHistory { t: f64 },
    #[error("field grid shape mismatch: {0}")]
    Shape(String),
}

/// PDE coefficients `(c1, c2, d1, d2, tau)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub c1: f64,
    pub c2: f64,
    pub d1: f64,
    pub d2: f64,
    pub tau: f64,
}

impl Coefficients {
    pub fn new(c1: f64, c2: f64, d1: f64, d2: f64, tau: f64) -> Self {
        Self { c1, c2, d1, d2, tau }
    }

    /// Coefficients of the instantaneous limit system `(c1 + c2, d1 + d2)`.
    pub fn summed(&self) -> (f64, f64) {
        (self.c1 + self.c2, self.d1 + self.d2)
    }

    pub fn with_tau(self, tau: f64) -> Self {
        Self { tau, ..self }
    }

    pub fn validate(&self, allow_zero_delay_terms: bool) -> ValidationResult {
        validate_coefficients(self, allow_zero_delay_terms)
    }
}

/// One violated coefficient constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub constraint: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationResult {
    pub violations: Vec<Violation>,
}

impl ValidationResult {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn constraints(&self) -> Vec<&'static str> {
        self.violations.iter().map(|v| v.constraint).collect()
    }
}

impl std::fmt::Display for ValidationResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        let parts: Vec<String> = self
            .violations
            .iter()
            .map(|v| format!("{} (violates {})", v.field, v.constraint))
            .collect();
        write!(f, "{}", parts.join(", "))
    }
}

/// Check the standing well-posedness assumptions.
///
/// With `allow_zero_delay_terms` the delayed coefficients may vanish (instantaneous
/// limit); otherwise `c2 != 0` and `d2 != 0` are required as well.
pub fn validate_coefficients(c: &Coefficients, allow_zero_delay_terms: bool) -> ValidationResult {
    let mut violations = Vec::new();
    let mut need = |ok: bool, field: &'static str, constraint: &'static str| {
        if !ok {
            violations.push(Violation { field, constraint });
        }
    };
    need(c.c1 > 0.0 && c.c1.is_finite(), "c1", "c1 > 0");
    need(c.d1 > 0.0 && c.d1.is_finite(), "d1", "d1 > 0");
    need(c.tau > 0.0 && c.tau.is_finite(), "tau", "tau > 0");
    need(c.c2.is_finite(), "c2", "c2 finite");
    need(c.d2.is_finite(), "d2", "d2 finite");
    if !allow_zero_delay_terms {
        need(c.c2 != 0.0, "c2", "c2 ≠ 0");
        need(c.d2 != 0.0, "d2", "d2 ≠ 0");
    }
    ValidationResult { violations }
}

/// Physical description of the clamped viscoelastic rod loaded by a traction at `x = L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MusclePhysical {
    /// rod length (m)
    pub length: f64,
    /// mass density (kg/m^3)
    pub rho: f64,
    /// Young's modulus (Pa)
    pub young: f64,
    /// viscosity (Pa s)
    pub eta: f64,
    /// delayed fraction of the constitutive law
    pub epsilon: f64,
    /// outward surface traction at `x = L` (Pa)
    pub traction: f64,
    /// delay time (s)
    pub tau: f64,
}

impl MusclePhysical {
    /// Muscle sample constants; the delay equals the retardation time `eta / E`.
    pub fn moravec2007(epsilon: f64) -> Self {
        let young = 2.00e4;
        let eta = 2.00e7;
        Self {
            length: 5.33e-3,
            rho: 1.06e3,
            young,
            eta,
            epsilon,
            traction: 1.0052e4,
            tau: eta / young,
        }
    }

    /// Retardation time `eta / E`.
    pub fn retardation_time(&self) -> f64 {
        self.eta / self.young
    }

    pub fn with_epsilon(self, epsilon: f64) -> Self {
        Self { epsilon, ..self }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("L", self.length),
            ("rho", self.rho),
            ("E", self.young),
            ("eta", self.eta),
            ("tau", self.tau),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidPhysical(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(ModelError::InvalidPhysical(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if !self.traction.is_finite() {
            return Err(ModelError::InvalidPhysical("f must be finite".into()));
        }
        Ok(())
    }

    pub fn coefficients(&self) -> Result<Coefficients, ModelError> {
        derive_coefficients(self)
    }

    /// Static tip displacement `f L / (E (1 + epsilon))` reached as `t -> inf`.
    pub fn static_tip_displacement(&self) -> f64 {
        self.traction * self.length / (self.young * (1.0 + self.epsilon))
    }
}

/// `(E/rho, eps E/rho, eta/rho, eps eta/rho, tau)`.
pub fn derive_coefficients(p: &MusclePhysical) -> Result<Coefficients, ModelError> {
    p.validate()?;
    let c1 = p.young / p.rho;
    let d1 = p.eta / p.rho;
    Ok(Coefficients {
        c1,
        c2: p.epsilon * c1,
        d1,
        d2: p.epsilon * d1,
        tau: p.tau,
    })
}

/// Sharp Poincaré constant `4 L^2 / pi^2` on `(0, L)` with `u(0) = 0` and a free end at `L`.
pub fn poincare_constant_interval(length: f64) -> Result<f64, ModelError> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(ModelError::Domain(format!("length must be > 0, got {length}")));
    }
    Ok(4.0 * length * length / (PI * PI))
}

/// Poincaré constant of the second-order grid on `n_intervals` cells of `(0, L)`.
///
/// This is `1 / lambda_h` with `lambda_h = (4/dx^2) sin^2(pi dx / (4L))` the smallest eigenvalue
/// of the ghost-node Neumann Laplacian, so `|u|_trap^2 <= c |u|_grad^2` holds for grid
/// functions with `u_0 = 0`. It is slightly larger than [`poincare_constant_interval`].
pub fn discrete_poincare_constant(length: f64, n_intervals: usize) -> Result<f64, ModelError> {
    if n_intervals == 0 {
        return Err(ModelError::Domain("grid needs at least one cell".into()));
    }
    poincare_constant_interval(length)?;
    let dx = length / n_intervals as f64;
    let s = (PI * dx / (4.0 * length)).sin();
    Ok(dx * dx / (4.0 * s * s))
}

/// `(coeffs, c_p)` pair fed to the stability checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityInput {
    pub coeffs: Coefficients,
    pub cp: f64,
}

impl StabilityInput {
    pub fn new(coeffs: Coefficients, cp: f64) -> Result<Self, ModelError> {
        if !(cp > 0.0 && cp.is_finite()) {
            return Err(ModelError::Domain(format!("cp must be > 0, got {cp}")));
        }
        Ok(Self { coeffs, cp })
    }

    /// `(c1, c2, d1, d2, cp)` shorthand; `tau = 1`, which the checks never read.
    pub fn from_tuple(c1: f64, c2: f64, d1: f64, d2: f64, cp: f64) -> Self {
        Self {
            coeffs: Coefficients::new(c1, c2, d1, d2, 1.0),
            cp,
        }
    }
}

/// State types that can be stored in a [`HistoryBuffer`].
pub trait StateVector: Clone {
    fn all_finite(&self) -> bool;
}

impl StateVector for f64 {
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

impl StateVector for [f64; 2] {
    fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

impl StateVector for Vec<f64> {
    fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// Ring of the last `N + 1` states on the delay-aligned grid `t_i = i * dt`, `dt = tau / N`.
///
/// The newest entry sits at step index `head`; the entry `N` steps back is the value at
/// `t_head - tau`. Delayed lookups are plain index offsets, never interpolations.
#[derive(Debug, Clone)]
pub struct HistoryBuffer<S> {
    dt: f64,
    n_per_delay: usize,
    ring: VecDeque<S>,
    head: i64,
}

impl<S: StateVector> HistoryBuffer<S> {
    /// Fill with `phi(t)` at `t = -tau, -tau + dt, ..., 0`.
    pub fn new<F>(tau: f64, n_per_delay: usize, mut phi: F) -> Result<Self, ModelError>
    where
        F: FnMut(f64) -> S,
    {
        if n_per_delay < 2 {
            return Err(ModelError::Domain(format!(
                "n_per_delay must be >= 2, got {n_per_delay}"
            )));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(ModelError::Domain(format!("tau must be > 0, got {tau}")));
        }
        let dt = tau / n_per_delay as f64;
        let mut ring = VecDeque::with_capacity(n_per_delay + 2);
        for i in -(n_per_delay as i64)..=0 {
            let t = i as f64 * dt;
            let s = phi(t);
            if !s.all_finite() {
                return Err(ModelError::NonFiniteHistory { t });
            }
            ring.push_back(s);
        }
        Ok(Self {
            dt,
            n_per_delay,
            ring,
            head: 0,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_per_delay(&self) -> usize {
        self.n_per_delay
    }

    pub fn tau(&self) -> f64 {
        self.dt * self.n_per_delay as f64
    }

    /// Step index of the newest entry.
    pub fn head_index(&self) -> i64 {
        self.head
    }

    pub fn t_head(&self) -> f64 {
        self.head as f64 * self.dt
    }

    pub fn newest(&self) -> &S {
        self.ring.back().expect("history buffer is never empty")
    }

    /// Entry `steps` steps before the newest one (`steps <= N`).
    pub fn lagged(&self, steps: usize) -> &S {
        assert!(steps <= self.n_per_delay, "lag {steps} exceeds one delay interval");
        &self.ring[self.ring.len() - 1 - steps]
    }

    /// Value at `t_head - tau`.
    pub fn delayed_value(&self) -> &S {
        self.lagged(self.n_per_delay)
    }

    /// Delayed endpoints `(x(t_head - tau), x(t_head + dt - tau))` of the next step.
    pub fn delayed_pair(&self) -> (&S, &S) {
        (self.lagged(self.n_per_delay), self.lagged(self.n_per_delay - 1))
    }

    /// Append the state at step `head + 1`, dropping the entry that left the window.
    pub fn push(&mut self, s: S) {
        self.ring.push_back(s);
        if self.ring.len() > self.n_per_delay + 1 {
            self.ring.pop_front();
        }
        self.head += 1;
    }

    /// Entries oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &S> {
        self.ring.iter()
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }
}

/// Displacement (and optionally velocity) sampled on a space-time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub x_nodes: Vec<f64>,
    pub t_nodes: Vec<f64>,
    /// `values[[i, j]] = y(t_i, x_j)`
    pub values: Array2<f64>,
    pub velocities: Option<Array2<f64>>,
}

impl FieldGrid {
    pub fn new(
        x_nodes: Vec<f64>,
        t_nodes: Vec<f64>,
        values: Array2<f64>,
        velocities: Option<Array2<f64>>,
    ) -> Result<Self, ModelError> {
        let shape = (t_nodes.len(), x_nodes.len());
        if values.dim() != shape {
            return Err(ModelError::Shape(format!(
                "values are {:?}, grid is {:?}",
                values.dim(),
                shape
            )));
        }
        if let Some(v) = &velocities {
            if v.dim() != shape {
                return Err(ModelError::Shape(format!(
                    "velocities are {:?}, grid is {:?}",
                    v.dim(),
                    shape
                )));
            }
        }
        Ok(Self {
            x_nodes,
            t_nodes,
            values,
            velocities,
        })
    }

    pub fn nt(&self) -> usize {
        self.t_nodes.len()
    }

    pub fn nx(&self) -> usize {
        self.x_nodes.len()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            x_nodes: self.x_nodes.clone(),
            t_nodes: self.t_nodes.clone(),
            values: &self.values * s,
            velocities: self.velocities.as_ref().map(|v| v * s),
        }
    }

    /// Largest `|y(t, 0)|` over `t > 0`; zero for a Dirichlet-consistent field.
    pub fn dirichlet_residual(&self) -> f64 {
        let Some(j0) = self.x_nodes.iter().position(|&x| x == 0.0) else {
            return 0.0;
        };
        self.t_nodes
            .iter()
            .enumerate()
            .filter(|(_, &t)| t > 0.0)
            .map(|(i, _)| self.values[[i, j0]].abs())
            .fold(0.0, f64::max)
    }

    /// Index of the node closest to time `t`.
    pub fn time_index(&self, t: f64) -> usize {
        let mut best = 0;
        for (i, &ti) in self.t_nodes.iter().enumerate() {
            if (ti - t).abs() < (self.t_nodes[best] - t).abs() {
                best = i;
            }
        }
        best
    }
}

/// `n` equally spaced points from `lo` to `hi` inclusive.
///
/// Nodes are rounded to 15 significant digits, so decimal ranges produce the decimal nodes
/// one would write by hand (`0.2` rather than `0.19999999999999998`).
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let m = (n - 1) as f64;
            (0..n)
                .map(|i| round_sig15((lo * (m - i as f64) + hi * i as f64) / m))
                .collect()
        }
    }
}

fn round_sig15(v: f64) -> f64 {
    format!("{v:.14e}").parse().unwrap_or(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::TridiagonalLu;

    #[test]
    fn validation_examples() {
        let ok = Coefficients::new(1.0, 0.1, 1.0, 0.1, 1.0);
        assert!(validate_coefficients(&ok, false).is_ok());

        let neg = Coefficients::new(-1.0, 0.1, 1.0, 0.1, 1.0);
        assert_eq!(validate_coefficients(&neg, false).constraints(), vec!["c1 > 0"]);

        let zero = Coefficients::new(1.0, 0.0, 1.0, 0.0, 1.0);
        assert!(validate_coefficients(&zero, true).is_ok());
        assert_eq!(
            validate_coefficients(&zero, false).constraints(),
            vec!["c2 ≠ 0", "d2 ≠ 0"]
        );

        let bad_tau = Coefficients::new(1.0, 0.1, 1.0, 0.1, 0.0);
        let r = validate_coefficients(&bad_tau, false);
        assert_eq!(r.violations[0].field, "tau");
    }

    #[test]
    fn derive_table_values() {
        let c = derive_coefficients(&MusclePhysical::moravec2007(0.1)).unwrap();
        let c1 = 2.00e4 / 1.06e3;
        let d1 = 2.00e7 / 1.06e3;
        assert!((c.c1 - 18.867924528301888).abs() < 1e-12);
        assert!((c.d1 - 18867.924528301886).abs() < 1e-9);
        assert_eq!(c.c1, c1);
        assert_eq!(c.d1, d1);
        assert_eq!(c.c2, 0.1 * c1);
        assert_eq!(c.d2, 0.1 * d1);
        assert_eq!(c.tau, 1.00e3);

        let c0 = derive_coefficients(&MusclePhysical::moravec2007(0.0)).unwrap();
        assert_eq!((c0.c2, c0.d2), (0.0, 0.0));

        let unit = MusclePhysical {
            length: 1.0,
            rho: 1.0,
            young: 1.0,
            eta: 1.0,
            epsilon: 1.0,
            traction: 1.0,
            tau: 1.0,
        };
        let cu = derive_coefficients(&unit).unwrap();
        assert_eq!((cu.c1, cu.c2, cu.d1, cu.d2), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn derive_rejects_invalid() {
        let mut p = MusclePhysical::moravec2007(0.1);
        p.rho = 0.0;
        assert!(derive_coefficients(&p).is_err());
        let p = MusclePhysical::moravec2007(-0.1);
        assert!(derive_coefficients(&p).is_err());
    }

    #[test]
    fn derive_is_homogeneous_in_moduli() {
        let p = MusclePhysical::moravec2007(0.2);
        let base = derive_coefficients(&p).unwrap();
        for s in [0.5, 2.0, 8.0] {
            let q = MusclePhysical {
                young: p.young * s,
                eta: p.eta * s,
                ..p
            };
            let c = derive_coefficients(&q).unwrap();
            for (a, b) in [(c.c1, base.c1), (c.c2, base.c2), (c.d1, base.d1), (c.d2, base.d2)] {
                assert!((a / b - s).abs() < 4.0 * f64::EPSILON * s);
            }
        }
    }

    /// Smallest eigenvalue of the discretized `-u''` with `u(0) = 0, u'(L) = 0` by
    /// inverse iteration on the symmetric, trapezoid-weighted formulation.
    fn rayleigh_min(length: f64, n: usize) -> f64 {
        let dx = length / n as f64;
        // Unknowns u_1..u_n; symmetric stiffness K (forward differences) and lumped mass W.
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 0..n {
            diag[i] = if i + 1 == n { 1.0 } else { 2.0 } / dx;
            if i > 0 {
                lower[i] = -1.0 / dx;
            }
            if i + 1 < n {
                upper[i] = -1.0 / dx;
            }
        }
        let w: Vec<f64> = (0..n).map(|i| if i + 1 == n { 0.5 * dx } else { dx }).collect();
        let lu = TridiagonalLu::factor(&lower, &diag, &upper).unwrap();
        let mut u = vec![1.0; n];
        let mut lambda = 0.0;
        for _ in 0..200 {
            let mut rhs: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a * b).collect();
            lu.solve_in_place(&mut rhs);
            let norm = rhs.iter().zip(&w).map(|(a, b)| a * a * b).sum::<f64>().sqrt();
            u = rhs.iter().map(|v| v / norm).collect();
            let mut ku = 0.0;
            for i in 0..n {
                let mut s = diag[i] * u[i];
                if i > 0 {
                    s += lower[i] * u[i - 1];
                }
                if i + 1 < n {
                    s += upper[i] * u[i + 1];
                }
                ku += u[i] * s;
            }
            lambda = ku;
        }
        lambda
    }

    #[test]
    fn poincare_matches_rayleigh_oracle() {
        for length in [PI / 2.0, 5.33e-3] {
            let cp = poincare_constant_interval(length).unwrap();
            let oracle = 1.0 / rayleigh_min(length, 4000);
            assert!((cp / oracle - 1.0).abs() < 1e-6, "L = {length}: {cp} vs {oracle}");
        }
        assert!((poincare_constant_interval(PI / 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((poincare_constant_interval(5.33e-3).unwrap() - 1.1513e-5).abs() < 1e-9);
    }

    #[test]
    fn poincare_scaling_and_domain() {
        for length in [0.1, 1.0, 3.7] {
            let a = poincare_constant_interval(length).unwrap();
            let b = poincare_constant_interval(2.0 * length).unwrap();
            assert!((b / a - 4.0).abs() < 1e-14);
        }
        assert!(poincare_constant_interval(0.0).is_err());
        assert!(poincare_constant_interval(-1.0).is_err());
    }

    #[test]
    fn discrete_poincare_is_exact_grid_eigenvalue() {
        let (length, n) = (1.3, 64);
        let cd = discrete_poincare_constant(length, n).unwrap();
        let oracle = 1.0 / rayleigh_min(length, n);
        assert!((cd / oracle - 1.0).abs() < 1e-10);
        assert!(cd > poincare_constant_interval(length).unwrap());
    }

    #[test]
    fn history_buffer_examples() {
        let h = HistoryBuffer::new(1.0, 4, |_| 0.0).unwrap();
        assert_eq!(h.iter().copied().collect::<Vec<_>>(), vec![0.0; 5]);

        let h = HistoryBuffer::new(1.0, 2, |t| t).unwrap();
        assert_eq!(h.iter().copied().collect::<Vec<_>>(), vec![-1.0, -0.5, 0.0]);
        assert_eq!(*h.delayed_value(), -1.0);
        assert_eq!(h.delayed_pair(), (&-1.0, &-0.5));

        assert!(HistoryBuffer::new(1.0, 1, |_| 0.0).is_err());
        assert!(matches!(
            HistoryBuffer::new(1.0, 4, |t| if t < -0.4 { f64::NAN } else { 0.0 }),
            Err(ModelError::NonFiniteHistory { .. })
        ));
    }

    #[test]
    fn history_buffer_alignment_after_pushes() {
        let tau = 0.7;
        let n = 7;
        let mut h = HistoryBuffer::new(tau, n, |t| t).unwrap();
        assert!((h.dt() * n as f64 - tau).abs() <= f64::EPSILON * tau);
        for step in 1..=30 {
            let t = step as f64 * h.dt();
            h.push(t);
            assert_eq!(h.len(), n + 1);
            // newest minus delayed is exactly one delay in index space
            assert!((h.newest() - h.delayed_value() - tau).abs() < 1e-12);
            assert!((h.t_head() - t).abs() < 1e-15);
        }
    }

    #[test]
    fn field_grid_shape_is_checked() {
        let g = FieldGrid::new(vec![0.0, 1.0], vec![0.0], Array2::zeros((1, 3)), None);
        assert!(g.is_err());
    }

    #[test]
    fn linspace_hits_dyadic_nodes() {
        let v = linspace(0.0025, 0.1, 40);
        assert_eq!(v.len(), 40);
        assert_eq!(v[0], 0.0025);
        assert_eq!(v[39], 0.1);
        assert_eq!(v[7], 0.02);
        assert_eq!(linspace(0.025, 1.0, 40)[7], 0.2);
    }
}
