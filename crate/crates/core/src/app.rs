//! Configuration, scenario orchestration and CSV emission for the `viskv` binary.
//!
//! A run is described by `key = value` lines (config file first, then `--set` overrides).
//! Output is a self-describing CSV: `#` provenance lines, one header row, data rows, and
//! optional trailing `#` summary lines. Floats use Rust's shortest round-trip formatting and
//! nothing depends on the clock, so identical configs give byte-identical files.

use std::f64::consts::PI;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::energy::{compute_energy, compute_lyapunov, fit_decay_rate, lyapunov_weights, EnergyError};
use crate::exec::Execution;
use crate::fd_oracle::{solve_fd_delayed, solve_fd_traction, FdConfig, FdError, InitialData};
use crate::modal::{eigenpair, simulate_traction, ForcingRow, Lifting, ModalError, ModalOptions, TractionOptions};
use crate::model::{discrete_poincare_constant, poincare_constant_interval, Coefficients, ModelError, MusclePhysical, StabilityInput};
use crate::neutral_flux::{solve_neutral_flux_with, FluxError, FluxRhs};
use crate::singular_limit::{SingularLimitError, SingularLimitScenario};
use crate::stability::{admissible_ratio_interval, evaluate, sample_region, AxisRange, RatioInterval, RegionAxes, StabilityError};

#[derive(Debug, Error)]
pub enum AppError {
    #[error("config error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Domain(_) => 3,
            AppError::Numeric(_) => 4,
            AppError::Io(_) => 1,
        }
    }
}

impl From<ModelError> for AppError {
    fn from(e: ModelError) -> Self {
        AppError::Domain(e.to_string())
    }
}

impl From<FluxError> for AppError {
    fn from(e: FluxError) -> Self {
        match e {
            FluxError::Config(m) => AppError::Config(m),
            other => AppError::Domain(other.to_string()),
        }
    }
}

impl From<ModalError> for AppError {
    fn from(e: ModalError) -> Self {
        match e {
            ModalError::Config(m) => AppError::Config(m),
            ModalError::Singular => AppError::Numeric(e.to_string()),
            ModalError::Flux(f) => f.into(),
            ModalError::Model(m) => m.into(),
        }
    }
}

impl From<FdError> for AppError {
    fn from(e: FdError) -> Self {
        match e {
            FdError::Config(m) => AppError::Config(m),
            FdError::Singular | FdError::NonFinite { .. } => AppError::Numeric(e.to_string()),
            FdError::Incompatible(_) => AppError::Domain(e.to_string()),
            FdError::Model(m) => m.into(),
            FdError::Flux(f) => f.into(),
        }
    }
}

impl From<EnergyError> for AppError {
    fn from(e: EnergyError) -> Self {
        match e {
            EnergyError::Window(_) => AppError::Config(e.to_string()),
            EnergyError::Fit(_) => AppError::Numeric(e.to_string()),
            _ => AppError::Domain(e.to_string()),
        }
    }
}

impl From<StabilityError> for AppError {
    fn from(e: StabilityError) -> Self {
        AppError::Config(e.to_string())
    }
}

impl From<SingularLimitError> for AppError {
    fn from(e: SingularLimitError) -> Self {
        match e {
            SingularLimitError::Config(m) => AppError::Config(m),
            SingularLimitError::Solver { tau, source } => {
                let inner: AppError = source.into();
                match inner {
                    AppError::Config(m) => AppError::Config(format!("tau = {tau}: {m}")),
                    AppError::Domain(m) => AppError::Domain(format!("tau = {tau}: {m}")),
                    AppError::Numeric(m) => AppError::Numeric(format!("tau = {tau}: {m}")),
                    io => io,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Flux,
    Modes,
    Simulate,
    Oracle,
    Energy,
    StabilityCheck,
    StabilityRegion,
    SingularLimit,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::Flux,
        Scenario::Modes,
        Scenario::Simulate,
        Scenario::Oracle,
        Scenario::Energy,
        Scenario::StabilityCheck,
        Scenario::StabilityRegion,
        Scenario::SingularLimit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Flux => "flux",
            Scenario::Modes => "modes",
            Scenario::Simulate => "simulate",
            Scenario::Oracle => "oracle",
            Scenario::Energy => "energy",
            Scenario::StabilityCheck => "stability-check",
            Scenario::StabilityRegion => "stability-region",
            Scenario::SingularLimit => "singular-limit",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|sc| sc.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Moravec2007,
    Unit,
}

impl Preset {
    fn name(self) -> &'static str {
        match self {
            Preset::Moravec2007 => "moravec2007",
            Preset::Unit => "unit",
        }
    }

    /// Physical parameters; the unit preset gives `(c1, c2, d1, d2, tau) = (1, .1, 1, .1, 1)`
    /// on `L = pi / 2`, so `cp = 1`.
    fn physical(self) -> MusclePhysical {
        match self {
            Preset::Moravec2007 => MusclePhysical::moravec2007(0.1),
            Preset::Unit => MusclePhysical {
                length: PI / 2.0,
                rho: 1.0,
                young: 1.0,
                eta: 1.0,
                epsilon: 0.1,
                traction: 1.0,
                tau: 1.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSettings {
    pub c1: f64,
    pub cp: f64,
    pub axes: RegionAxes,
}

impl Default for RegionSettings {
    fn default() -> Self {
        Self {
            c1: 1.0,
            cp: 1.0,
            axes: RegionAxes::default(),
        }
    }
}

/// Fully resolved run description.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub preset: Preset,
    pub physical: MusclePhysical,
    /// explicit delay; `None` means `eta / E`
    pub tau: Option<f64>,
    /// `(c1, c2, d1, d2)` overrides for energy, stability-check and singular-limit
    pub coeff_overrides: [Option<f64>; 4],
    pub cp: Option<f64>,
    pub n_per_delay: usize,
    pub horizon_delays: usize,
    pub modes: usize,
    pub nx: usize,
    pub epsilons: Option<Vec<f64>>,
    pub mode_list: Vec<usize>,
    pub t_stride: usize,
    pub x_intervals: usize,
    pub modal: ModalOptions,
    pub rhs: FluxRhs,
    pub execution: Execution,
    pub region: RegionSettings,
    pub singular: SingularLimitScenario,
    pub fit: bool,
    pub fit_window: (Option<f64>, Option<f64>),
    /// every `key = value` applied, in order
    pub overrides: Vec<(String, String)>,
}

impl RunConfig {
    pub fn defaults(scenario: Scenario) -> Self {
        Self {
            scenario,
            preset: Preset::Moravec2007,
            physical: Preset::Moravec2007.physical(),
            tau: None,
            coeff_overrides: [None; 4],
            cp: None,
            n_per_delay: 1000,
            horizon_delays: 10,
            modes: 21,
            nx: 200,
            epsilons: None,
            mode_list: vec![0, 1, 2],
            t_stride: 10,
            x_intervals: 10,
            modal: ModalOptions::default(),
            rhs: FluxRhs::default(),
            execution: Execution::default(),
            region: RegionSettings::default(),
            singular: SingularLimitScenario::default(),
            fit: false,
            fit_window: (None, None),
            overrides: Vec::new(),
        }
    }

    /// Physical parameters with the delay resolved.
    pub fn physical(&self) -> MusclePhysical {
        let mut p = self.physical;
        p.tau = self.tau.unwrap_or(p.eta / p.young);
        p
    }

    /// Coefficients from the physical model with any explicit overrides applied.
    pub fn coefficients(&self) -> Result<Coefficients, AppError> {
        let mut c = self.physical().coefficients()?;
        let [c1, c2, d1, d2] = self.coeff_overrides;
        c.c1 = c1.unwrap_or(c.c1);
        c.c2 = c2.unwrap_or(c.c2);
        c.d1 = d1.unwrap_or(c.d1);
        c.d2 = d2.unwrap_or(c.d2);
        Ok(c)
    }

    fn has_coeff_overrides(&self) -> bool {
        self.coeff_overrides.iter().any(Option::is_some)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        let num = || -> Result<f64, String> {
            v.parse::<f64>()
                .map_err(|_| format!("{key}: cannot parse {v:?} as a number"))
        };
        let int = || -> Result<usize, String> {
            v.parse::<usize>()
                .map_err(|_| format!("{key}: cannot parse {v:?} as a non-negative integer"))
        };
        let list = || -> Result<Vec<f64>, String> {
            v.split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| format!("{key}: cannot parse {v:?} as a comma-separated list"))
        };
        match key {
            "scenario" => {
                self.scenario =
                    Scenario::parse(v).ok_or_else(|| format!("scenario: unknown scenario {v:?}"))?
            }
            "preset" => {
                self.preset = match v {
                    "moravec2007" => Preset::Moravec2007,
                    "unit" => Preset::Unit,
                    _ => return Err(format!("preset: unknown preset {v:?}")),
                };
                self.physical = self.preset.physical();
                if self.preset == Preset::Unit {
                    self.tau = Some(1.0);
                }
            }
            "L" => self.physical.length = num()?,
            "rho" => self.physical.rho = num()?,
            "E" => self.physical.young = num()?,
            "eta" => self.physical.eta = num()?,
            "epsilon" => self.physical.epsilon = num()?,
            "f" => self.physical.traction = num()?,
            "tau" => self.tau = Some(num()?),
            "c1" => self.coeff_overrides[0] = Some(num()?),
            "c2" => self.coeff_overrides[1] = Some(num()?),
            "d1" => self.coeff_overrides[2] = Some(num()?),
            "d2" => self.coeff_overrides[3] = Some(num()?),
            "cp" => self.cp = Some(num()?),
            "n_per_delay" => self.n_per_delay = int()?,
            "horizon_delays" => self.horizon_delays = int()?,
            "modes" => self.modes = int()?,
            "nx" => self.nx = int()?,
            "epsilons" => self.epsilons = Some(list()?),
            "mode_list" => {
                self.mode_list = v
                    .split(',')
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| format!("{key}: cannot parse {v:?} as a list of mode indices"))?
            }
            "t_stride" => self.t_stride = int()?,
            "x_intervals" => self.x_intervals = int()?,
            "lifting" => {
                self.modal.lifting = match v {
                    "plain" => Lifting::Plain,
                    "split" => Lifting::ImpulseSplit,
                    _ => return Err(format!("lifting: expected plain or split, got {v:?}")),
                }
            }
            "forcing_row" => {
                self.modal.row = match v {
                    "velocity" => ForcingRow::Velocity,
                    "compat" => ForcingRow::PositionCompat,
                    _ => return Err(format!("forcing_row: expected velocity or compat, got {v:?}")),
                }
            }
            "rhs" => {
                self.rhs = match v {
                    "per_density" => FluxRhs::PerDensity,
                    "literal" => FluxRhs::Literal,
                    _ => return Err(format!("rhs: expected per_density or literal, got {v:?}")),
                }
            }
            "execution" => {
                self.execution = match v {
                    "parallel" => Execution::Parallel,
                    "serial" => Execution::Serial,
                    _ => return Err(format!("execution: expected parallel or serial, got {v:?}")),
                }
            }
            "region_c1" => self.region.c1 = num()?,
            "region_cp" => self.region.cp = num()?,
            "region_c2_min" => self.region.axes.c2.lo = num()?,
            "region_c2_max" => self.region.axes.c2.hi = num()?,
            "region_d1_min" => self.region.axes.d1.lo = num()?,
            "region_d1_max" => self.region.axes.d1.hi = num()?,
            "region_d2_min" => self.region.axes.d2.lo = num()?,
            "region_d2_max" => self.region.axes.d2.hi = num()?,
            "region_n" => {
                let n = int()?;
                self.region.axes.c2.n = n;
                self.region.axes.d1.n = n;
                self.region.axes.d2.n = n;
            }
            "sl_tau0" => {
                let t0 = num()?;
                let levels = self.singular.taus.len();
                self.singular.taus = (0..levels).map(|k| t0 / f64::from(1u32 << k)).collect();
                self.singular.coeffs.tau = t0;
            }
            "sl_levels" => {
                let levels = int()?;
                if !(2..=16).contains(&levels) {
                    return Err(format!("sl_levels: expected 2..=16, got {levels}"));
                }
                let t0 = self.singular.taus[0];
                self.singular.taus = (0..levels).map(|k| t0 / f64::from(1u32 << k)).collect();
            }
            "sl_nx" => self.singular.grid.nx = int()?,
            "sl_n_per_delay" => self.singular.grid.n_per_delay = int()?,
            "sl_horizon" => self.singular.grid.horizon = num()?,
            "sl_length" => self.singular.grid.length = num()?,
            "fit" => {
                self.fit = match v {
                    "true" => true,
                    "false" => false,
                    _ => return Err(format!("fit: expected true or false, got {v:?}")),
                }
            }
            "fit_t_lo" => self.fit_window.0 = Some(num()?),
            "fit_t_hi" => self.fit_window.1 = Some(num()?),
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Build from an optional scenario, an optional config text and `key=value` overrides.
    ///
    /// Presets are applied before every other key so overrides always win.
    pub fn from_sources(
        scenario: Option<Scenario>,
        text: Option<&str>,
        sets: &[String],
    ) -> Result<Self, AppError> {
        let mut entries: Vec<(String, String, String)> = Vec::new();
        if let Some(text) = text {
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    AppError::Config(format!("line {}: expected key = value, got {raw:?}", lineno + 1))
                })?;
                entries.push((k.trim().to_string(), v.trim().to_string(), format!("line {}", lineno + 1)));
            }
        }
        for s in sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| AppError::Config(format!("--set {s:?}: expected key=value")))?;
            entries.push((k.trim().to_string(), v.trim().to_string(), format!("--set {s}")));
        }
        let scenario = match scenario {
            Some(s) => s,
            None => {
                let v = entries
                    .iter()
                    .rev()
                    .find(|e| e.0 == "scenario")
                    .ok_or_else(|| AppError::Config("missing required scenario".into()))?;
                Scenario::parse(&v.1)
                    .ok_or_else(|| AppError::Config(format!("{}: unknown scenario {:?}", v.2, v.1)))?
            }
        };
        let mut cfg = Self::defaults(scenario);
        let ordered = entries
            .iter()
            .filter(|e| e.0 == "preset")
            .chain(entries.iter().filter(|e| e.0 != "preset" && e.0 != "scenario"));
        for (k, v, origin) in ordered {
            cfg.apply(k, v)
                .map_err(|m| AppError::Config(format!("{origin}: {m}")))?;
            cfg.overrides.push((k.clone(), v.clone()));
        }
        Ok(cfg)
    }

    /// Effective parameters in a fixed order, used for provenance and hashing.
    pub fn effective_params(&self) -> Vec<(&'static str, String)> {
        let p = self.physical();
        let opt = |v: Option<f64>| v.map_or_else(|| "auto".to_string(), fmt_f64);
        let a = &self.region.axes;
        vec![
            ("scenario", self.scenario.name().to_string()),
            ("preset", self.preset.name().to_string()),
            ("L", fmt_f64(p.length)),
            ("rho", fmt_f64(p.rho)),
            ("E", fmt_f64(p.young)),
            ("eta", fmt_f64(p.eta)),
            ("epsilon", fmt_f64(p.epsilon)),
            ("f", fmt_f64(p.traction)),
            ("tau", fmt_f64(p.tau)),
            ("c1", opt(self.coeff_overrides[0])),
            ("c2", opt(self.coeff_overrides[1])),
            ("d1", opt(self.coeff_overrides[2])),
            ("d2", opt(self.coeff_overrides[3])),
            ("cp", opt(self.cp)),
            ("n_per_delay", self.n_per_delay.to_string()),
            ("horizon_delays", self.horizon_delays.to_string()),
            ("modes", self.modes.to_string()),
            ("nx", self.nx.to_string()),
            (
                "epsilons",
                self.epsilons
                    .as_ref()
                    .map_or_else(|| "auto".into(), |e| e.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",")),
            ),
            (
                "mode_list",
                self.mode_list.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","),
            ),
            ("t_stride", self.t_stride.to_string()),
            ("x_intervals", self.x_intervals.to_string()),
            (
                "lifting",
                match self.modal.lifting {
                    Lifting::Plain => "plain",
                    Lifting::ImpulseSplit => "split",
                }
                .into(),
            ),
            (
                "forcing_row",
                match self.modal.row {
                    ForcingRow::Velocity => "velocity",
                    ForcingRow::PositionCompat => "compat",
                }
                .into(),
            ),
            (
                "rhs",
                match self.rhs {
                    FluxRhs::PerDensity => "per_density",
                    FluxRhs::Literal => "literal",
                }
                .into(),
            ),
            ("region_c1", fmt_f64(self.region.c1)),
            ("region_cp", fmt_f64(self.region.cp)),
            ("region_c2", format!("{}:{}:{}", fmt_f64(a.c2.lo), fmt_f64(a.c2.hi), a.c2.n)),
            ("region_d1", format!("{}:{}:{}", fmt_f64(a.d1.lo), fmt_f64(a.d1.hi), a.d1.n)),
            ("region_d2", format!("{}:{}:{}", fmt_f64(a.d2.lo), fmt_f64(a.d2.hi), a.d2.n)),
            (
                "sl_taus",
                self.singular.taus.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(","),
            ),
            ("sl_nx", self.singular.grid.nx.to_string()),
            ("sl_n_per_delay", self.singular.grid.n_per_delay.to_string()),
            ("sl_horizon", fmt_f64(self.singular.grid.horizon)),
            ("sl_length", fmt_f64(self.singular.grid.length)),
            ("fit", self.fit.to_string()),
            ("fit_t_lo", opt(self.fit_window.0)),
            ("fit_t_hi", opt(self.fit_window.1)),
        ]
    }

    /// SHA-256 of the effective parameters.
    pub fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.effective_params() {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parse a complete config text; the text must name the scenario.
pub fn parse_config(text: &str) -> Result<RunConfig, AppError> {
    RunConfig::from_sources(None, Some(text), &[])
}

/// Shortest round-trip representation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

/// CSV body assembled by a scenario.
struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
    summary: Vec<(String, String)>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            summary: Vec::new(),
        }
    }

    fn row_f64(&mut self, vals: &[f64]) {
        self.rows.push(vals.iter().map(|&v| fmt_f64(v)).collect());
    }

    fn note(&mut self, key: &str, value: impl Into<String>) {
        self.summary.push((key.to_string(), value.into()));
    }
}

/// Output of a run: the CSV text and the summary lines it ends with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutput {
    pub csv: String,
    pub summary: Vec<(String, String)>,
}

pub fn run(cfg: &RunConfig) -> Result<RunOutput, AppError> {
    if cfg.has_coeff_overrides()
        && matches!(
            cfg.scenario,
            Scenario::Flux | Scenario::Modes | Scenario::Simulate | Scenario::Oracle
        )
    {
        return Err(AppError::Config(format!(
            "c1/c2/d1/d2 overrides do not apply to {}; set physical parameters instead",
            cfg.scenario.name()
        )));
    }
    if cfg.t_stride == 0 || cfg.x_intervals == 0 {
        return Err(AppError::Config("t_stride and x_intervals must be positive".into()));
    }
    let table = match cfg.scenario {
        Scenario::Flux => run_flux(cfg)?,
        Scenario::Modes => run_modes(cfg)?,
        Scenario::Simulate => run_simulate(cfg)?,
        Scenario::Oracle => run_oracle(cfg)?,
        Scenario::Energy => run_energy(cfg)?,
        Scenario::StabilityCheck => run_stability_check(cfg)?,
        Scenario::StabilityRegion => run_stability_region(cfg)?,
        Scenario::SingularLimit => run_singular(cfg)?,
    };
    Ok(render(cfg, table))
}

fn render(cfg: &RunConfig, table: Table) -> RunOutput {
    let mut out = String::new();
    let _ = writeln!(out, "# viskv {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "# config_sha256 = {}", cfg.config_hash());
    for (k, v) in cfg.effective_params() {
        let _ = writeln!(out, "# {k} = {v}");
    }
    for (k, v) in &cfg.overrides {
        let _ = writeln!(out, "# override {k} = {v}");
    }
    let _ = writeln!(out, "{}", table.columns.join(","));
    for r in &table.rows {
        let _ = writeln!(out, "{}", r.join(","));
    }
    for (k, v) in &table.summary {
        let _ = writeln!(out, "# {k} = {v}");
    }
    RunOutput {
        csv: out,
        summary: table.summary,
    }
}

fn run_flux(cfg: &RunConfig) -> Result<Table, AppError> {
    let base = cfg.physical();
    let eps_list = match (&cfg.epsilons, cfg.overrides.iter().any(|o| o.0 == "epsilon")) {
        (Some(list), _) => list.clone(),
        (None, true) => vec![base.epsilon],
        (None, false) => vec![0.0, 0.1, 0.2, 0.5],
    };
    if eps_list.is_empty() {
        return Err(AppError::Config("epsilons must not be empty".into()));
    }
    let traces = cfg.execution.try_map(eps_list.len(), |i| {
        solve_neutral_flux_with(&base.with_epsilon(eps_list[i]), cfg.n_per_delay, cfg.horizon_delays, cfg.rhs)
    })?;
    let mut cols = vec!["t".to_string()];
    if eps_list.len() == 1 {
        cols.push("psi".into());
    } else {
        cols.extend(eps_list.iter().map(|e| format!("psi_eps={}", fmt_f64(*e))));
    }
    let mut t = Table::new(&[]);
    t.columns = cols;
    let first = &traces[0];
    for i in (first.zero_index()..first.len()).step_by(cfg.t_stride).chain(last_if_missing(first.zero_index(), first.len(), cfg.t_stride)) {
        let mut row = vec![first.t_nodes[i]];
        row.extend(traces.iter().map(|tr| tr.psi[i]));
        t.row_f64(&row);
    }
    for (e, tr) in eps_list.iter().zip(&traces) {
        t.note(&format!("psi_final[eps={}]", fmt_f64(*e)), fmt_f64(*tr.psi.last().unwrap()));
    }
    Ok(t)
}

/// The final index when a stride from `start` does not land on it.
fn last_if_missing(start: usize, len: usize, stride: usize) -> Option<usize> {
    let last = len - 1;
    (!(last - start).is_multiple_of(stride)).then_some(last)
}

fn traction_options(cfg: &RunConfig) -> TractionOptions {
    TractionOptions {
        n_per_delay: cfg.n_per_delay,
        horizon_delays: cfg.horizon_delays,
        modes: cfg.modes,
        rhs: cfg.rhs,
        modal: cfg.modal,
        exec: cfg.execution,
    }
}

fn run_modes(cfg: &RunConfig) -> Result<Table, AppError> {
    let p = cfg.physical();
    let max_k = cfg.mode_list.iter().copied().max().unwrap_or(0);
    if cfg.mode_list.is_empty() {
        return Err(AppError::Config("mode_list must not be empty".into()));
    }
    let opts = TractionOptions {
        modes: cfg.modes.max(max_k + 1),
        ..traction_options(cfg)
    };
    let sol = simulate_traction(&p, &opts)?;
    let mut cols = vec!["t".to_string()];
    for k in &cfg.mode_list {
        cols.push(format!("w_{k}"));
        cols.push(format!("wdot_{k}"));
    }
    let mut t = Table::new(&[]);
    t.columns = cols;
    let z = sol.flux.zero_index();
    let len = sol.flux.len();
    for i in (z..len).step_by(cfg.t_stride).chain(last_if_missing(z, len, cfg.t_stride)) {
        let mut row = vec![sol.flux.t_nodes[i]];
        for &k in &cfg.mode_list {
            row.push(sol.modes[k].w[i]);
            row.push(sol.modes[k].w_dot[i]);
        }
        t.row_f64(&row);
    }
    Ok(t)
}

fn long_field_table(field: &crate::model::FieldGrid, every_x: usize) -> Table {
    let mut t = Table::new(&["t", "x", "y"]);
    for (i, &ti) in field.t_nodes.iter().enumerate() {
        for j in (0..field.nx()).step_by(every_x) {
            t.row_f64(&[ti, field.x_nodes[j], field.values[[i, j]]]);
        }
    }
    t
}

fn run_simulate(cfg: &RunConfig) -> Result<Table, AppError> {
    let p = cfg.physical();
    let sol = simulate_traction(&p, &traction_options(cfg))?;
    let field = sol.field(cfg.x_intervals, cfg.t_stride)?;
    let mut t = long_field_table(&field, 1);
    let tip = *sol.tip_displacement().last().unwrap();
    t.note("tip_final", fmt_f64(tip));
    t.note("tip_static", fmt_f64(p.static_tip_displacement()));
    Ok(t)
}

fn run_oracle(cfg: &RunConfig) -> Result<Table, AppError> {
    let p = cfg.physical();
    if !cfg.nx.is_multiple_of(cfg.x_intervals) {
        return Err(AppError::Config(format!(
            "x_intervals = {} must divide nx = {}",
            cfg.x_intervals, cfg.nx
        )));
    }
    let field = solve_fd_traction(&p, cfg.nx, cfg.n_per_delay, cfg.horizon_delays, cfg.rhs, cfg.t_stride)?;
    let mut t = long_field_table(&field, cfg.nx / cfg.x_intervals);
    let tip = field.values[[field.nt() - 1, field.nx() - 1]];
    t.note("tip_final", fmt_f64(tip));
    t.note("tip_static", fmt_f64(p.static_tip_displacement()));
    Ok(t)
}

fn run_energy(cfg: &RunConfig) -> Result<Table, AppError> {
    let c = cfg.coefficients()?;
    let length = cfg.physical().length;
    if !cfg.n_per_delay.is_multiple_of(cfg.t_stride) {
        return Err(AppError::Config(format!(
            "t_stride = {} must divide n_per_delay = {}",
            cfg.t_stride, cfg.n_per_delay
        )));
    }
    let mode = eigenpair(0, length)?;
    let ic = InitialData::constant_history(move |x| mode.phi(x));
    let fd = FdConfig::new(length, cfg.nx, cfg.n_per_delay, c.tau * cfg.horizon_delays as f64)
        .with_stride(cfg.t_stride)
        .with_history(true);
    let field = solve_fd_delayed(&c, &ic, &fd, None)?;
    let cp = match cfg.cp {
        Some(v) => v,
        None => discrete_poincare_constant(length, cfg.nx)?,
    };
    let weights = StabilityInput::new(c, cp).map_err(AppError::from).and_then(|s| Ok(lyapunov_weights(&s)?));
    let mut t;
    let trace = match &weights {
        Ok(w) => {
            let tr = compute_lyapunov(&field, &c, w)?;
            t = Table::new(&["t", "E", "F", "k1E", "k2E"]);
            let f = tr.lyapunov.as_ref().expect("lyapunov requested");
            for ((&ti, &e), &fv) in tr.t_nodes.iter().zip(&tr.energy).zip(f) {
                t.row_f64(&[ti, e, fv, w.k1 * e, w.k2 * e]);
            }
            t.note("N", fmt_f64(w.n));
            t.note("M", fmt_f64(w.m));
            t.note("k1", fmt_f64(w.k1));
            t.note("k2", fmt_f64(w.k2));
            tr
        }
        Err(e) => {
            let tr = compute_energy(&field, &c)?;
            t = Table::new(&["t", "E"]);
            for (&ti, &e) in tr.t_nodes.iter().zip(&tr.energy) {
                t.row_f64(&[ti, e]);
            }
            t.note("lyapunov", format!("unavailable: {e}"));
            tr
        }
    };
    t.note("cp", fmt_f64(cp));
    if cfg.fit {
        let lo = cfg.fit_window.0.unwrap_or(2.0 * c.tau);
        let hi = cfg.fit_window.1.unwrap_or(c.tau * cfg.horizon_delays as f64);
        let fit = fit_decay_rate(&trace, (lo, hi))?;
        t.note("fit_window", format!("{}:{}", fmt_f64(lo), fmt_f64(hi)));
        t.note("alpha_hat", fmt_f64(fit.alpha_hat));
        t.note("c_hat", fmt_f64(fit.c_hat));
        t.note("r_squared", fmt_f64(fit.r_squared));
    }
    Ok(t)
}

fn run_stability_check(cfg: &RunConfig) -> Result<Table, AppError> {
    let c = cfg.coefficients()?;
    let cp = match cfg.cp {
        Some(v) => v,
        None => poincare_constant_interval(cfg.physical().length)?,
    };
    let s = StabilityInput::new(c, cp)?;
    let v = evaluate(&s);
    let mut t = Table::new(&["part", "id", "lhs", "relation", "rhs", "satisfied"]);
    for (part, pv) in [("assumption", &v.assumption), ("theorem", &v.theorem)] {
        for cond in &pv.conditions {
            t.rows.push(vec![
                part.into(),
                cond.id.into(),
                fmt_f64(cond.lhs),
                cond.relation.symbol().into(),
                fmt_f64(cond.rhs),
                cond.satisfied.to_string(),
            ]);
        }
    }
    t.note("cp", fmt_f64(cp));
    t.note("assumption_ok", v.assumption_ok().to_string());
    t.note("theorem_ok", v.theorem_ok().to_string());
    let cd = c.c2 + c.d2;
    if cd > 0.0 {
        let eps = c.d1 / cd;
        let iv = match admissible_ratio_interval(&s, eps) {
            RatioInterval::Feasible { lo, hi } => format!("({}, {})", fmt_f64(lo), fmt_f64(hi)),
            RatioInterval::Infeasible { reason } => format!("infeasible: {reason}"),
        };
        t.note("ratio_interval", iv);
    }
    Ok(t)
}

fn run_stability_region(cfg: &RunConfig) -> Result<Table, AppError> {
    let r = sample_region(cfg.region.c1, cfg.region.cp, &cfg.region.axes, cfg.execution)?;
    let mut t = Table::new(&["c2", "d1", "d2", "assumption_ok", "theorem_ok"]);
    for idx in 0..r.len() {
        let (c2, d1, d2) = r.point(idx);
        t.rows.push(vec![
            fmt_f64(c2),
            fmt_f64(d1),
            fmt_f64(d2),
            r.assumption_ok[idx].to_string(),
            r.theorem_ok[idx].to_string(),
        ]);
    }
    let comps = r.theorem_components();
    t.note("flags", "membership in the sufficient conditions only");
    t.note("theorem_points", r.theorem_ok.iter().filter(|&&b| b).count().to_string());
    t.note("theorem_components", comps.len().to_string());
    Ok(t)
}

fn run_singular(cfg: &RunConfig) -> Result<Table, AppError> {
    let mut sc = cfg.singular.clone();
    let [c1, c2, d1, d2] = cfg.coeff_overrides;
    sc.coeffs.c1 = c1.unwrap_or(sc.coeffs.c1);
    sc.coeffs.c2 = c2.unwrap_or(sc.coeffs.c2);
    sc.coeffs.d1 = d1.unwrap_or(sc.coeffs.d1);
    sc.coeffs.d2 = d2.unwrap_or(sc.coeffs.d2);
    let rep = sc.run(cfg.execution)?;
    let mut t = Table::new(&["tau", "error_sq"]);
    for (&tau, &e) in rep.taus.iter().zip(&rep.errors) {
        t.row_f64(&[tau, e]);
    }
    t.note("slope", fmt_f64(rep.slope));
    t.note("intercept", fmt_f64(rep.intercept));
    t.note("c_hat", fmt_f64(rep.c_hat));
    t.note("errors_decreasing", rep.errors_decreasing().to_string());
    t.note("pinning_scheme_error", fmt_f64(rep.pinning.scheme_error));
    t.note("pinning_relative", fmt_f64(rep.pinning.relative_to_min_error));
    Ok(t)
}

/// Convenience for region axes given as `(lo, hi, n)` triples.
pub fn region_axes(c2: (f64, f64, usize), d1: (f64, f64, usize), d2: (f64, f64, usize)) -> RegionAxes {
    RegionAxes {
        c2: AxisRange::new(c2.0, c2.1, c2.2),
        d1: AxisRange::new(d1.0, d1.1, d1.2),
        d2: AxisRange::new(d2.0, d2.1, d2.2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_table_defaults() {
        let cfg = RunConfig::from_sources(Some(Scenario::Simulate), Some(""), &[]).unwrap();
        let p = cfg.physical();
        assert_eq!(p.length, 5.33e-3);
        assert_eq!(p.rho, 1.06e3);
        assert_eq!(p.young, 2.00e4);
        assert_eq!(p.eta, 2.00e7);
        assert_eq!(p.traction, 1.0052e4);
        assert_eq!(p.tau, 1.00e3);
        assert_eq!((cfg.n_per_delay, cfg.horizon_delays, cfg.modes, cfg.nx), (1000, 10, 21, 200));
    }

    #[test]
    fn override_and_errors() {
        let cfg = parse_config("scenario = flux\nepsilon = 0.2\n").unwrap();
        assert_eq!(cfg.physical().epsilon, 0.2);
        match parse_config("scenario = flux\nn_per_delay = abc\n") {
            Err(AppError::Config(m)) => {
                assert!(m.contains("n_per_delay"), "{m}");
                assert!(m.contains("line 2"), "{m}");
            }
            other => panic!("{other:?}"),
        }
        match parse_config("scenario = flux\nbogus = 1\n") {
            Err(AppError::Config(m)) => assert!(m.contains("bogus")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_config("epsilon = 0.1"), Err(AppError::Config(_))));
    }

    #[test]
    fn preset_applies_before_overrides() {
        let sets = vec!["epsilon=0.3".to_string(), "preset=unit".to_string()];
        let cfg = RunConfig::from_sources(Some(Scenario::StabilityCheck), None, &sets).unwrap();
        let c = cfg.coefficients().unwrap();
        assert_eq!((c.c1, c.d1, c.tau), (1.0, 1.0, 1.0));
        assert!((c.c2 - 0.3).abs() < 1e-15);
    }

    #[test]
    fn hash_tracks_parameters() {
        let a = RunConfig::defaults(Scenario::Flux);
        let mut b = a.clone();
        assert_eq!(a.config_hash(), b.config_hash());
        b.physical.epsilon = 0.4;
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 64);
    }

    #[test]
    fn exit_codes_by_class() {
        assert_eq!(AppError::Config(String::new()).exit_code(), 2);
        assert_eq!(AppError::Domain(String::new()).exit_code(), 3);
        assert_eq!(AppError::Numeric(String::new()).exit_code(), 4);
        let mut cfg = RunConfig::defaults(Scenario::Flux);
        cfg.physical.rho = -1.0;
        assert_eq!(run(&cfg).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn stability_check_reports_rows() {
        let sets = vec!["preset=unit".into()];
        let cfg = RunConfig::from_sources(Some(Scenario::StabilityCheck), None, &sets).unwrap();
        let out = run(&cfg).unwrap();
        assert!(out.csv.contains("assumption,ii,1e0,>=,"));
        assert!(out.summary.iter().any(|(k, v)| k == "assumption_ok" && v == "true"));
    }
}
