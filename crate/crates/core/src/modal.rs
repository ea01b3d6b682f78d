//! Eigenfunction expansion of the traction problem.
//!
//! The mixed Dirichlet-Neumann Laplacian on `(0, L)` has eigenpairs
//! `lambda_k = pi^2 (2k+1)^2 / (4 L^2)`, `phi_k = sqrt(2/L) sin(pi (k + 1/2) x / L)`.
//! Writing `y = w + psi(t) x` moves the boundary flux into a source `-psi'' x`, whose
//! projections drive one delayed oscillator per mode:
//!
//! ```text
//! w_k'' + d1 l w_k' + c1 l w_k + d2 l w_k'(t - tau) + c2 l w_k(t - tau) = -gamma_k psi''
//! ```

use std::f64::consts::PI;

use ndarray::Array2;
use thiserror::Error;

use crate::exec::Execution;
use crate::linalg::{mat2_inverse, mat2_vec, Mat2};
use crate::model::{Coefficients, FieldGrid, HistoryBuffer, ModelError, MusclePhysical};
use crate::neutral_flux::{
    flux_source, flux_source_split, solve_neutral_flux_with, BoundaryFluxTrace, FluxError,
    FluxRhs, FluxSourceTrace,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModalError {
    #[error("modal configuration error: {0}")]
    Config(String),
    #[error("implicit Crank-Nicolson matrix is singular")]
    Singular,
    #[error(transparent)]
    Flux(#[from] FluxError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSpec {
    pub k: usize,
    pub lambda: f64,
    pub length: f64,
}

impl ModeSpec {
    fn wavenumber(&self) -> f64 {
        PI * (self.k as f64 + 0.5) / self.length
    }

    pub fn phi(&self, x: f64) -> f64 {
        (2.0 / self.length).sqrt() * (self.wavenumber() * x).sin()
    }

    pub fn phi_dx(&self, x: f64) -> f64 {
        let kw = self.wavenumber();
        (2.0 / self.length).sqrt() * kw * (kw * x).cos()
    }
}

pub fn eigenpair(k: usize, length: f64) -> Result<ModeSpec, ModalError> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(ModalError::Config(format!("length must be > 0, got {length}")));
    }
    let m = (2 * k + 1) as f64;
    Ok(ModeSpec {
        k,
        lambda: PI * PI * m * m / (4.0 * length * length),
        length,
    })
}

/// `gamma_k = int_0^L x phi_k(x) dx`.
pub fn forcing_coefficient(k: usize, length: f64) -> f64 {
    let m = (2 * k + 1) as f64;
    let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    (2.0 / length).sqrt() * (4.0 * length * length / (PI * PI)) * sign / (m * m)
}

/// `gamma_k` times the flux source, on the source grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeForcingTrace {
    pub k: usize,
    pub gamma: f64,
    pub t_nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub dt: f64,
    pub n_per_delay: usize,
}

pub fn mode_forcing(k: usize, length: f64, source: &FluxSourceTrace) -> ModeForcingTrace {
    let gamma = forcing_coefficient(k, length);
    ModeForcingTrace {
        k,
        gamma,
        t_nodes: source.t_nodes.clone(),
        values: source.values.iter().map(|s| gamma * s).collect(),
        dt: source.dt,
        n_per_delay: source.n_per_delay,
    }
}

/// Row of the first-order system that receives the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForcingRow {
    /// `-gamma psi''` on the velocity equation, trapezoidal in time.
    #[default]
    Velocity,
    /// `+gamma psi''` on the position row at the new time level, as in the reference script.
    PositionCompat,
}

/// How the kink of `psi` at `t = 0` is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Lifting {
    /// Keep the discrete impulse in the second-difference source.
    #[default]
    Plain,
    /// Remove `psi'(0+) |t| / 2` from the source and start each mode with the velocity jump
    /// `-gamma_k psi'(0+)` instead.
    ImpulseSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ModalOptions {
    pub row: ForcingRow,
    pub lifting: Lifting,
}

impl ModalOptions {
    pub fn validate(&self) -> Result<(), ModalError> {
        if self.row == ForcingRow::PositionCompat && self.lifting == Lifting::ImpulseSplit {
            return Err(ModalError::Config(
                "the impulse-split lifting requires velocity-row forcing".into(),
            ));
        }
        Ok(())
    }
}

/// `A = [[0, 1], [-c1 l, -d1 l]]`, `B = [[0, 0], [-c2 l, -d2 l]]`.
pub fn mode_matrices(c: &Coefficients, lambda: f64) -> (Mat2, Mat2) {
    (
        [[0.0, 1.0], [-c.c1 * lambda, -c.d1 * lambda]],
        [[0.0, 0.0], [-c.c2 * lambda, -c.d2 * lambda]],
    )
}

/// Pre-factored delayed Crank-Nicolson step
/// `(I - dt/2 A) x_j = (I + dt/2 A) x_{j-1} + dt/2 B (x_{j-N} + x_{j-N-1}) + load`.
#[derive(Debug, Clone, Copy)]
pub struct ModeStepper {
    lhs_inv: Mat2,
    explicit: Mat2,
    delayed: Mat2,
}

impl ModeStepper {
    pub fn new(a: &Mat2, b: &Mat2, dt: f64) -> Result<Self, ModalError> {
        let h = 0.5 * dt;
        let lhs = [
            [1.0 - h * a[0][0], -h * a[0][1]],
            [-h * a[1][0], 1.0 - h * a[1][1]],
        ];
        let explicit = [
            [1.0 + h * a[0][0], h * a[0][1]],
            [h * a[1][0], 1.0 + h * a[1][1]],
        ];
        let delayed = [[h * b[0][0], h * b[0][1]], [h * b[1][0], h * b[1][1]]];
        Ok(Self {
            lhs_inv: mat2_inverse(&lhs).ok_or(ModalError::Singular)?,
            explicit,
            delayed,
        })
    }

    pub fn step(&self, prev: [f64; 2], delayed_pair: ([f64; 2], [f64; 2]), load: [f64; 2]) -> [f64; 2] {
        let e = mat2_vec(&self.explicit, prev);
        let d = mat2_vec(
            &self.delayed,
            [delayed_pair.0[0] + delayed_pair.1[0], delayed_pair.0[1] + delayed_pair.1[1]],
        );
        mat2_vec(&self.lhs_inv, [e[0] + d[0] + load[0], e[1] + d[1] + load[1]])
    }
}

/// One step from the newest entry of `history`, which must be delay aligned with `dt`.
pub fn step_mode_cn(
    history: &HistoryBuffer<[f64; 2]>,
    dt: f64,
    a: &Mat2,
    b: &Mat2,
    load: [f64; 2],
) -> Result<[f64; 2], ModalError> {
    if (history.dt() - dt).abs() > 1e-12 * dt {
        return Err(ModalError::Config("history step differs from dt".into()));
    }
    let stepper = ModeStepper::new(a, b, dt)?;
    let (d0, d1) = history.delayed_pair();
    Ok(stepper.step(*history.newest(), (*d0, *d1), load))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeTrajectory {
    pub k: usize,
    pub t_nodes: Vec<f64>,
    pub w: Vec<f64>,
    pub w_dot: Vec<f64>,
}

/// Integrate mode `k` over the whole grid of `forcing`.
///
/// `velocity_jump` is added to `w'` at `t = 0` (used by [`Lifting::ImpulseSplit`]).
pub fn solve_mode(
    c: &Coefficients,
    length: f64,
    forcing: &ModeForcingTrace,
    row: ForcingRow,
    velocity_jump: f64,
) -> Result<ModeTrajectory, ModalError> {
    let n = forcing.n_per_delay;
    if n < 2 || forcing.values.len() < n + 2 {
        return Err(ModalError::Config("forcing trace shorter than one step".into()));
    }
    if (forcing.dt * n as f64 - c.tau).abs() > 1e-12 * c.tau {
        return Err(ModalError::Config(format!(
            "forcing grid (dt = {}, N = {n}) is not aligned with tau = {}",
            forcing.dt, c.tau
        )));
    }
    let spec = eigenpair(forcing.k, length)?;
    let (a, b) = mode_matrices(c, spec.lambda);
    let stepper = ModeStepper::new(&a, &b, forcing.dt)?;
    let h = 0.5 * forcing.dt;
    let f = &forcing.values;

    let len = f.len();
    let mut x = vec![[0.0; 2]; len];
    x[n][1] = velocity_jump;
    for j in (n + 1)..len {
        let load = match row {
            ForcingRow::Velocity => [0.0, -h * (f[j - 1] + f[j])],
            ForcingRow::PositionCompat => [h * f[j], 0.0],
        };
        x[j] = stepper.step(x[j - 1], (x[j - n - 1], x[j - n]), load);
    }
    Ok(ModeTrajectory {
        k: forcing.k,
        t_nodes: forcing.t_nodes.clone(),
        w: x.iter().map(|s| s[0]).collect(),
        w_dot: x.iter().map(|s| s[1]).collect(),
    })
}

/// `y = sum_k w_k phi_k + psi x` at the grid indices `t_indices`.
pub fn reconstruct_field(
    modes: &[ModeTrajectory],
    length: f64,
    flux: &BoundaryFluxTrace,
    x_nodes: &[f64],
    t_indices: &[usize],
) -> Result<FieldGrid, ModalError> {
    if modes.is_empty() {
        return Err(ModalError::Config("no modes to reconstruct".into()));
    }
    if modes.iter().any(|m| m.w.len() != flux.psi.len()) {
        return Err(ModalError::Config("mode and flux grids differ".into()));
    }
    if let Some(&bad) = t_indices.iter().find(|&&i| i >= flux.psi.len()) {
        return Err(ModalError::Config(format!("time index {bad} out of range")));
    }
    let basis: Vec<Vec<f64>> = modes
        .iter()
        .map(|m| {
            let s = eigenpair(m.k, length)?;
            Ok(x_nodes.iter().map(|&x| s.phi(x)).collect())
        })
        .collect::<Result<_, ModalError>>()?;
    let mut values = Array2::zeros((t_indices.len(), x_nodes.len()));
    for (r, &i) in t_indices.iter().enumerate() {
        let psi = flux.psi[i];
        for (col, &x) in x_nodes.iter().enumerate() {
            // fixed summation order keeps serial and parallel runs identical
            let mut y = 0.0;
            for (m, phi) in modes.iter().zip(&basis) {
                y += m.w[i] * phi[col];
            }
            values[[r, col]] = y + psi * x;
        }
    }
    let t_nodes = t_indices.iter().map(|&i| flux.t_nodes[i]).collect();
    Ok(FieldGrid::new(x_nodes.to_vec(), t_nodes, values, None)?)
}

/// Settings of the muscle traction run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TractionOptions {
    pub n_per_delay: usize,
    pub horizon_delays: usize,
    pub modes: usize,
    pub rhs: FluxRhs,
    pub modal: ModalOptions,
    pub exec: Execution,
}

impl Default for TractionOptions {
    fn default() -> Self {
        Self {
            n_per_delay: 1000,
            horizon_delays: 10,
            modes: 21,
            rhs: FluxRhs::default(),
            modal: ModalOptions::default(),
            exec: Execution::default(),
        }
    }
}

/// Flux plus all mode trajectories of a traction run.
#[derive(Debug, Clone, PartialEq)]
pub struct TractionSolution {
    pub length: f64,
    pub flux: BoundaryFluxTrace,
    pub modes: Vec<ModeTrajectory>,
}

impl TractionSolution {
    /// Field on `nx_intervals + 1` uniform nodes at every `stride`-th non-negative time node.
    pub fn field(&self, nx_intervals: usize, stride: usize) -> Result<FieldGrid, ModalError> {
        if nx_intervals == 0 || stride == 0 {
            return Err(ModalError::Config("nx and stride must be positive".into()));
        }
        let x_nodes: Vec<f64> = (0..=nx_intervals)
            .map(|j| self.length * j as f64 / nx_intervals as f64)
            .collect();
        let z = self.flux.zero_index();
        let last = self.flux.len() - 1;
        let mut idx: Vec<usize> = (z..=last).step_by(stride).collect();
        if *idx.last().unwrap() != last {
            idx.push(last);
        }
        reconstruct_field(&self.modes, self.length, &self.flux, &x_nodes, &idx)
    }

    /// `y(t, L)` at every grid node.
    pub fn tip_displacement(&self) -> Vec<f64> {
        let specs: Vec<f64> = self
            .modes
            .iter()
            .map(|m| eigenpair(m.k, self.length).map(|s| s.phi(self.length)).unwrap_or(0.0))
            .collect();
        (0..self.flux.len())
            .map(|i| {
                let mut y = 0.0;
                for (m, phi) in self.modes.iter().zip(&specs) {
                    y += m.w[i] * phi;
                }
                y + self.flux.psi[i] * self.length
            })
            .collect()
    }
}

pub fn simulate_traction(
    p: &MusclePhysical,
    opts: &TractionOptions,
) -> Result<TractionSolution, ModalError> {
    opts.modal.validate()?;
    if opts.modes == 0 {
        return Err(ModalError::Config("at least one mode is required".into()));
    }
    let c = p.coefficients()?;
    let flux = solve_neutral_flux_with(p, opts.n_per_delay, opts.horizon_delays, opts.rhs)?;
    let source = match opts.modal.lifting {
        Lifting::Plain => flux_source(&flux)?,
        Lifting::ImpulseSplit => flux_source_split(&flux)?,
    };
    let modes = opts.exec.try_map(opts.modes, |k| {
        let forcing = mode_forcing(k, p.length, &source);
        let jump = match opts.modal.lifting {
            Lifting::Plain => 0.0,
            Lifting::ImpulseSplit => -forcing.gamma * flux.psi_dot_0plus,
        };
        solve_mode(&c, p.length, &forcing, opts.modal.row, jump)
    })?;
    Ok(TractionSolution {
        length: p.length,
        flux,
        modes,
    })
}
