//! Finite-difference method of lines for the delayed equation and its instantaneous limit.
//!
//! Unknowns live on `x_i = i dx`, `i = 1..=nx`, `dx = L / nx`; `y_0 = 0` is eliminated and the
//! free end uses a ghost node, which gives the last row `2 (y_{nx-1} - y_nx) / dx^2`.
//! Time stepping is Crank-Nicolson on `(y, v)`. Eliminating `y_j` leaves one solve with the
//! constant matrix `I - theta D`, `theta = dt/2 (d1 + c1 dt/2)`, factored once. Delayed terms
//! are read from stored states (or the prescribed history) and enter as known data.

use std::sync::Arc;

use ndarray::Array2;
use thiserror::Error;

use crate::linalg::TridiagonalLu;
use crate::model::{Coefficients, FieldGrid, HistoryBuffer, ModelError, MusclePhysical};
use crate::neutral_flux::{flux_source, solve_neutral_flux_with, FluxError, FluxRhs, FluxSourceTrace};
use crate::norms::{grad_sq, l2_sq, nested_pairs};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FdError {
    #[error("finite-difference configuration error: {0}")]
    Config(String),
    #[error("implicit operator is singular")]
    Singular,
    #[error("initial data incompatible: {0}")]
    Incompatible(String),
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Flux(#[from] FluxError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdConfig {
    pub length: f64,
    /// number of cells, equal to the number of unknown nodes
    pub nx: usize,
    pub n_per_delay: usize,
    /// final time `T`
    pub horizon: f64,
    /// keep every `record_stride`-th time level
    pub record_stride: usize,
    /// also emit the prescribed history on `[-tau, 0)`
    pub record_history: bool,
}

impl FdConfig {
    pub fn new(length: f64, nx: usize, n_per_delay: usize, horizon: f64) -> Self {
        Self {
            length,
            nx,
            n_per_delay,
            horizon,
            record_stride: 1,
            record_history: false,
        }
    }

    pub fn with_stride(self, record_stride: usize) -> Self {
        Self { record_stride, ..self }
    }

    pub fn with_history(self, record_history: bool) -> Self {
        Self { record_history, ..self }
    }

    pub fn dx(&self) -> f64 {
        self.length / self.nx as f64
    }

    fn validate(&self) -> Result<(), FdError> {
        if self.nx < 8 {
            return Err(FdError::Config(format!("nx must be >= 8, got {}", self.nx)));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(FdError::Config(format!("length must be > 0, got {}", self.length)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(FdError::Config(format!("horizon must be > 0, got {}", self.horizon)));
        }
        if self.record_stride == 0 {
            return Err(FdError::Config("record_stride must be >= 1".into()));
        }
        Ok(())
    }

    fn steps(&self, dt: f64) -> Result<usize, FdError> {
        let s = (self.horizon / dt).round();
        if s < 1.0 || (s * dt - self.horizon).abs() > 1e-9 * self.horizon {
            return Err(FdError::Config(format!(
                "horizon {} is not a multiple of dt = {dt}",
                self.horizon
            )));
        }
        Ok(s as usize)
    }
}

type Sampler = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type SpaceTimeSampler = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// `y(0) = y0`, `y_t(0) = y1`, and `y = phi(t, x)` on `[-tau, 0)`.
#[derive(Clone)]
pub struct InitialData {
    pub y0: Sampler,
    pub y1: Sampler,
    pub history: SpaceTimeSampler,
    pub history_velocity: SpaceTimeSampler,
}

impl std::fmt::Debug for InitialData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("InitialData { .. }")
    }
}

impl InitialData {
    pub fn new(
        y0: impl Fn(f64) -> f64 + Send + Sync + 'static,
        y1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        history: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        history_velocity: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            y0: Arc::new(y0),
            y1: Arc::new(y1),
            history: Arc::new(history),
            history_velocity: Arc::new(history_velocity),
        }
    }

    pub fn zero() -> Self {
        Self::new(|_| 0.0, |_| 0.0, |_, _| 0.0, |_, _| 0.0)
    }

    /// `y1 = 0` and the history frozen at `y0`.
    pub fn constant_history(y0: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        let y0: Sampler = Arc::new(y0);
        let h = y0.clone();
        Self {
            y0,
            y1: Arc::new(|_| 0.0),
            history: Arc::new(move |_, x| h(x)),
            history_velocity: Arc::new(|_, _| 0.0),
        }
    }

    /// `phi(0, x) = y0(x)` and `phi_t(0, x) = y1(x)` at the nodes, to `1e-12` (scaled).
    pub fn check_compatible(&self, x_nodes: &[f64]) -> Result<(), FdError> {
        for &x in x_nodes {
            let (a, b) = ((self.history)(0.0, x), (self.y0)(x));
            if (a - b).abs() > 1e-12 * (1.0 + b.abs()) {
                return Err(FdError::Incompatible(format!("phi(0, {x}) = {a} but y0 = {b}")));
            }
            let (a, b) = ((self.history_velocity)(0.0, x), (self.y1)(x));
            if (a - b).abs() > 1e-12 * (1.0 + b.abs()) {
                return Err(FdError::Incompatible(format!("phi_t(0, {x}) = {a} but y1 = {b}")));
            }
        }
        if let Some(&x) = x_nodes.first() {
            let v = (self.y0)(x);
            if x == 0.0 && v.abs() > 1e-12 {
                return Err(FdError::Incompatible(format!("y0(0) = {v}, expected 0")));
            }
        }
        Ok(())
    }
}

/// Space-time forcing added to the velocity equation.
pub trait Source: Sync {
    /// Fill `out[i]` with the source at time level `step` (`t = step * dt`) and node `x[i]`.
    fn sample(&self, step: usize, t: f64, x: &[f64], out: &mut [f64]);
}

/// Source given as a function of `(t, x)`.
pub struct FnSource<F>(pub F);

impl<F: Fn(f64, f64) -> f64 + Sync> Source for FnSource<F> {
    fn sample(&self, _step: usize, t: f64, x: &[f64], out: &mut [f64]) {
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = (self.0)(t, xi);
        }
    }
}

/// `-psi''(t) x` from the discrete flux source; time level `step` maps to `t = step dt`.
pub struct LiftedFluxSource<'a> {
    pub source: &'a FluxSourceTrace,
}

impl Source for LiftedFluxSource<'_> {
    fn sample(&self, step: usize, _t: f64, x: &[f64], out: &mut [f64]) {
        let s = self
            .source
            .values
            .get(step + self.source.n_per_delay)
            .copied()
            .unwrap_or(0.0);
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = -s * xi;
        }
    }
}

/// `out += a * D u` for the ghost-node Laplacian on the unknown nodes.
fn apply_laplacian_add(u: &[f64], a: f64, inv_dx2: f64, out: &mut [f64]) {
    let n = u.len();
    let s = a * inv_dx2;
    for i in 0..n {
        let left = if i == 0 { 0.0 } else { u[i - 1] };
        let lap = if i + 1 == n {
            2.0 * (left - u[i])
        } else {
            left - 2.0 * u[i] + u[i + 1]
        };
        out[i] += s * lap;
    }
}

fn factor_implicit(theta: f64, nx: usize, inv_dx2: f64) -> Result<TridiagonalLu, FdError> {
    let s = theta * inv_dx2;
    let mut lower = vec![-s; nx];
    let diag = vec![1.0 + 2.0 * s; nx];
    let mut upper = vec![-s; nx];
    lower[0] = 0.0;
    lower[nx - 1] = -2.0 * s;
    upper[nx - 1] = 0.0;
    TridiagonalLu::factor(&lower, &diag, &upper).ok_or(FdError::Singular)
}

struct Recorder {
    x_nodes: Vec<f64>,
    t: Vec<f64>,
    y: Vec<f64>,
    v: Vec<f64>,
}

impl Recorder {
    fn new(x_nodes: Vec<f64>) -> Self {
        Self {
            x_nodes,
            t: Vec::new(),
            y: Vec::new(),
            v: Vec::new(),
        }
    }

    fn push(&mut self, t: f64, y: &[f64], v: &[f64]) {
        self.t.push(t);
        self.y.push(0.0);
        self.y.extend_from_slice(y);
        self.v.push(0.0);
        self.v.extend_from_slice(v);
    }

    fn finish(self) -> Result<FieldGrid, FdError> {
        let shape = (self.t.len(), self.x_nodes.len());
        let values = Array2::from_shape_vec(shape, self.y).expect("recorder shape");
        let vel = Array2::from_shape_vec(shape, self.v).expect("recorder shape");
        Ok(FieldGrid::new(self.x_nodes, self.t, values, Some(vel))?)
    }
}

struct Delay {
    c2: f64,
    d2: f64,
    buffer: HistoryBuffer<Vec<f64>>,
}

/// Coefficients of one run; `delay = None` is the instantaneous system.
fn integrate(
    c1: f64,
    d1: f64,
    mut delay: Option<Delay>,
    ic: &InitialData,
    cfg: &FdConfig,
    dt: f64,
    source: Option<&dyn Source>,
) -> Result<FieldGrid, FdError> {
    let nx = cfg.nx;
    let dx = cfg.dx();
    let inv_dx2 = 1.0 / (dx * dx);
    let x_all: Vec<f64> = (0..=nx).map(|i| i as f64 * dx).collect();
    let x = &x_all[1..];
    let steps = cfg.steps(dt)?;
    let h = 0.5 * dt;
    let theta = h * (d1 + c1 * h);
    let lu = factor_implicit(theta, nx, inv_dx2)?;

    let mut rec = Recorder::new(x_all.clone());
    if cfg.record_history {
        if let Some(d) = &delay {
            let n = d.buffer.n_per_delay();
            if n % cfg.record_stride != 0 {
                return Err(FdError::Config(
                    "record_stride must divide n_per_delay when recording history".into(),
                ));
            }
            // buffer still holds exactly the prescribed history at this point
            for (i, state) in d.buffer.iter().enumerate().take(n) {
                if i % cfg.record_stride == 0 {
                    let t = (i as f64 - n as f64) * dt;
                    rec.push(t, &state[..nx], &state[nx..]);
                }
            }
        }
    }

    let mut y: Vec<f64> = x.iter().map(|&xi| (ic.y0)(xi)).collect();
    let mut v: Vec<f64> = x.iter().map(|&xi| (ic.y1)(xi)).collect();
    rec.push(0.0, &y, &v);

    let mut f_prev = vec![0.0; nx];
    let mut f_next = vec![0.0; nx];
    if let Some(s) = source {
        s.sample(0, 0.0, x, &mut f_prev);
    }
    let mut rhs = vec![0.0; nx];
    let mut tmp = vec![0.0; nx];
    for j in 1..=steps {
        let t = j as f64 * dt;
        if let Some(s) = source {
            s.sample(j, t, x, &mut f_next);
        }
        // (I + theta D) v + dt c1 D y
        rhs.copy_from_slice(&v);
        apply_laplacian_add(&v, theta, inv_dx2, &mut rhs);
        apply_laplacian_add(&y, dt * c1, inv_dx2, &mut rhs);
        for i in 0..nx {
            rhs[i] += h * (f_prev[i] + f_next[i]);
        }
        if let Some(d) = &delay {
            let (older, newer) = d.buffer.delayed_pair();
            for i in 0..nx {
                tmp[i] = older[i] + newer[i];
            }
            apply_laplacian_add(&tmp, h * d.c2, inv_dx2, &mut rhs);
            for i in 0..nx {
                tmp[i] = older[nx + i] + newer[nx + i];
            }
            apply_laplacian_add(&tmp, h * d.d2, inv_dx2, &mut rhs);
        }
        lu.solve_in_place(&mut rhs);
        for i in 0..nx {
            y[i] += h * (rhs[i] + v[i]);
        }
        std::mem::swap(&mut v, &mut rhs);
        std::mem::swap(&mut f_prev, &mut f_next);

        if !(y.iter().all(|a| a.is_finite()) && v.iter().all(|a| a.is_finite())) {
            return Err(FdError::NonFinite { t });
        }
        if let Some(d) = &mut delay {
            let mut state = Vec::with_capacity(2 * nx);
            state.extend_from_slice(&y);
            state.extend_from_slice(&v);
            d.buffer.push(state);
        }
        if j % cfg.record_stride == 0 || j == steps {
            rec.push(t, &y, &v);
        }
    }
    rec.finish()
}

/// Delayed system on `dt = tau / N`.
pub fn solve_fd_delayed(
    c: &Coefficients,
    ic: &InitialData,
    cfg: &FdConfig,
    source: Option<&dyn Source>,
) -> Result<FieldGrid, FdError> {
    cfg.validate()?;
    let v = c.validate(true);
    if !v.is_ok() {
        return Err(ModelError::InvalidPhysical(v.to_string()).into());
    }
    let dx = cfg.dx();
    let xs: Vec<f64> = (0..=cfg.nx).map(|i| i as f64 * dx).collect();
    ic.check_compatible(&xs)?;
    let nx = cfg.nx;
    let buffer = HistoryBuffer::new(c.tau, cfg.n_per_delay, |t| {
        let mut s = Vec::with_capacity(2 * nx);
        if t == 0.0 {
            s.extend(xs[1..].iter().map(|&x| (ic.y0)(x)));
            s.extend(xs[1..].iter().map(|&x| (ic.y1)(x)));
        } else {
            s.extend(xs[1..].iter().map(|&x| (ic.history)(t, x)));
            s.extend(xs[1..].iter().map(|&x| (ic.history_velocity)(t, x)));
        }
        s
    })?;
    let dt = buffer.dt();
    let delay = Delay {
        c2: c.c2,
        d2: c.d2,
        buffer,
    };
    integrate(c.c1, c.d1, Some(delay), ic, cfg, dt, source)
}

/// Instantaneous system `y_tt = a y_xx + b y_txx + F` with step `dt`.
pub fn solve_fd_instantaneous(
    a: f64,
    b: f64,
    ic: &InitialData,
    cfg: &FdConfig,
    dt: f64,
    source: Option<&dyn Source>,
) -> Result<FieldGrid, FdError> {
    cfg.validate()?;
    if !(a > 0.0 && a.is_finite()) || !(b >= 0.0 && b.is_finite()) {
        return Err(FdError::Config(format!("need a > 0 and b >= 0, got a = {a}, b = {b}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(FdError::Config(format!("dt must be > 0, got {dt}")));
    }
    let cfg = FdConfig {
        record_history: false,
        ..*cfg
    };
    integrate(a, b, None, ic, &cfg, dt, source)
}

/// Traction scenario through the lifting `y = w + psi x` with zero data.
pub fn solve_fd_traction(
    p: &MusclePhysical,
    nx: usize,
    n_per_delay: usize,
    horizon_delays: usize,
    rhs: FluxRhs,
    record_stride: usize,
) -> Result<FieldGrid, FdError> {
    let c = p.coefficients()?;
    let flux = solve_neutral_flux_with(p, n_per_delay, horizon_delays, rhs)?;
    let source = flux_source(&flux)?;
    let cfg = FdConfig {
        length: p.length,
        nx,
        n_per_delay,
        horizon: c.tau * horizon_delays as f64,
        record_stride,
        record_history: false,
    };
    let lifted = LiftedFluxSource { source: &source };
    let w = solve_fd_delayed(&c, &InitialData::zero(), &cfg, Some(&lifted))?;
    let mut values = w.values;
    for (r, &t) in w.t_nodes.iter().enumerate() {
        let psi = flux.at(t);
        for (col, &x) in w.x_nodes.iter().enumerate() {
            values[[r, col]] += psi * x;
        }
    }
    Ok(FieldGrid::new(w.x_nodes, w.t_nodes, values, None)?)
}

/// Errors of `a - b` on the common nodes with `t >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub t_nodes: Vec<f64>,
    /// `|a - b|_{L2}^2` per slice
    pub l2_sq: Vec<f64>,
    /// `|grad (a - b)|^2` per slice
    pub grad_sq: Vec<f64>,
    /// `|a_t - b_t|_{L2}^2` per slice (zero when a field has no velocities)
    pub vel_sq: Vec<f64>,
    pub has_velocity: bool,
    /// `max_t (|a - b|_{H1}^2 + |a_t - b_t|_{L2}^2)`
    pub sup_energy_sq: f64,
    /// `max_t |a - b|_{L2}`
    pub sup_l2: f64,
    /// `max_t |b|_{L2}`
    pub reference_sup_l2: f64,
}

impl ErrorReport {
    /// `sup_l2` relative to the reference field.
    pub fn relative_sup_l2(&self) -> f64 {
        if self.reference_sup_l2 == 0.0 {
            if self.sup_l2 == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.sup_l2 / self.reference_sup_l2
        }
    }
}

fn restrict(coarse: &[f64], fine: &[f64], what: &str) -> Result<Vec<(usize, usize)>, FdError> {
    nested_pairs(coarse, fine)
        .ok_or_else(|| FdError::Config(format!("{what} grids are not nested")))
}

/// Compare two fields on their common (nested) space-time nodes.
pub fn compare_fields(a: &FieldGrid, b: &FieldGrid) -> Result<ErrorReport, FdError> {
    // restrict the finer grid onto the coarser one
    let (xa, xb) = if a.nx() <= b.nx() {
        let p = restrict(&a.x_nodes, &b.x_nodes, "space")?;
        (p.iter().map(|q| q.0).collect::<Vec<_>>(), p.iter().map(|q| q.1).collect::<Vec<_>>())
    } else {
        let p = restrict(&b.x_nodes, &a.x_nodes, "space")?;
        (p.iter().map(|q| q.1).collect(), p.iter().map(|q| q.0).collect())
    };
    if xa.len() < 2 || xa.len() != a.nx().min(b.nx()) {
        return Err(FdError::Config("space grids do not share the coarse nodes".into()));
    }
    let ta: Vec<f64> = a.t_nodes.iter().copied().filter(|&t| t >= 0.0).collect();
    let tb: Vec<f64> = b.t_nodes.iter().copied().filter(|&t| t >= 0.0).collect();
    let off_a = a.nt() - ta.len();
    let off_b = b.nt() - tb.len();
    let pairs: Vec<(usize, usize)> = if spacing(&ta) >= spacing(&tb) {
        restrict(&ta, &tb, "time")?
            .into_iter()
            .map(|(i, j)| (i + off_a, j + off_b))
            .collect()
    } else {
        restrict(&tb, &ta, "time")?
            .into_iter()
            .map(|(j, i)| (i + off_a, j + off_b))
            .collect()
    };
    if pairs.is_empty() {
        return Err(FdError::Config("fields share no time nodes".into()));
    }
    let xs: Vec<f64> = xa.iter().map(|&j| a.x_nodes[j]).collect();
    let dx = crate::norms::uniform_spacing(&xs)
        .ok_or_else(|| FdError::Config("common space grid is not uniform".into()))?;
    let has_velocity = a.velocities.is_some() && b.velocities.is_some();

    let mut rep = ErrorReport {
        t_nodes: Vec::with_capacity(pairs.len()),
        l2_sq: Vec::with_capacity(pairs.len()),
        grad_sq: Vec::with_capacity(pairs.len()),
        vel_sq: Vec::with_capacity(pairs.len()),
        has_velocity,
        sup_energy_sq: 0.0,
        sup_l2: 0.0,
        reference_sup_l2: 0.0,
    };
    let mut diff = vec![0.0; xa.len()];
    let mut refv = vec![0.0; xa.len()];
    for &(ia, ib) in &pairs {
        for (k, (&ja, &jb)) in xa.iter().zip(&xb).enumerate() {
            diff[k] = a.values[[ia, ja]] - b.values[[ib, jb]];
            refv[k] = b.values[[ib, jb]];
        }
        let l2 = l2_sq(&diff, dx);
        let gr = grad_sq(&diff, dx);
        let vel = match (&a.velocities, &b.velocities) {
            (Some(va), Some(vb)) => {
                for (k, (&ja, &jb)) in xa.iter().zip(&xb).enumerate() {
                    diff[k] = va[[ia, ja]] - vb[[ib, jb]];
                }
                l2_sq(&diff, dx)
            }
            _ => 0.0,
        };
        rep.t_nodes.push(a.t_nodes[ia]);
        rep.l2_sq.push(l2);
        rep.grad_sq.push(gr);
        rep.vel_sq.push(vel);
        rep.sup_energy_sq = rep.sup_energy_sq.max(l2 + gr + vel);
        rep.sup_l2 = rep.sup_l2.max(l2.sqrt());
        rep.reference_sup_l2 = rep.reference_sup_l2.max(l2_sq(&refv, dx).sqrt());
    }
    Ok(rep)
}

fn spacing(t: &[f64]) -> f64 {
    if t.len() < 2 {
        f64::INFINITY
    } else {
        (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64
    }
}
