//! Configuration-driven experiment runner behind the `vacrad` binary.
//!
//! A run reads a flat `key = value` config, validates all of it before any
//! compute, then executes one of four tasks (`single`, `sweep`, `spectrum`,
//! `convergence`) over a worker pool. Every task writes
//!
//! - `<output>.csv`: one row per point, written in order as points finish,
//! - `<output>.json`: config echo and results,
//! - `<output>.telemetry.json`: wall-clock and step counts,
//!
//! plus `<output>.spectrum.csv` or `<output>.convergence.csv` where relevant.
//! The CSV and the JSON sidecar contain no timing, so identical configs give
//! byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{find_peaks_above, Peak};
use crate::bath::{BathSpec, Channel};
use crate::correlations::{self, CorrelationConfig, SpectrumResult};
use crate::dynamics::{Mode, Model, PropagationConfig, PropagationDiagnostics};
use crate::hilbert::SystemParams;
use crate::{Error, Result};

pub const WORKERS_ENV: &str = "VACRAD_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_ALL_FAILED: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Single,
    Sweep,
    Spectrum,
    Convergence,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Single => "single",
            Task::Sweep => "sweep",
            Task::Spectrum => "spectrum",
            Task::Convergence => "convergence",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Task::Single),
            "sweep" => Ok(Task::Sweep),
            "spectrum" => Ok(Task::Spectrum),
            "convergence" => Ok(Task::Convergence),
            other => Err(Error::InvalidConfig(format!("unknown task '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeSelection {
    Tcl2,
    Markovian,
    Both,
}

impl ModeSelection {
    pub fn modes(self) -> Vec<Mode> {
        match self {
            ModeSelection::Tcl2 => vec![Mode::Tcl2],
            ModeSelection::Markovian => vec![Mode::Markovian],
            ModeSelection::Both => vec![Mode::Tcl2, Mode::Markovian],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModeSelection::Tcl2 => "tcl2",
            ModeSelection::Markovian => "markovian",
            ModeSelection::Both => "both",
        }
    }
}

impl std::str::FromStr for ModeSelection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(ModeSelection::Both),
            other => Ok(match other.parse::<Mode>()? {
                Mode::Tcl2 => ModeSelection::Tcl2,
                Mode::Markovian => ModeSelection::Markovian,
            }),
        }
    }
}

/// Uniform `ω_mod` grid, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl SweepGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.start + i as f64 * step).collect()
    }

    pub fn step(&self) -> f64 {
        (self.stop - self.start) / (self.points.max(2) - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub params: SystemParams,
    pub propagation: PropagationConfig,
    pub correlation: CorrelationConfig,
    pub lamb_shift: bool,
    pub bath_cutoff: f64,
    pub mode: ModeSelection,
    pub task: Task,
    pub sweep: Option<SweepGrid>,
    pub output: PathBuf,
    pub workers: Option<usize>,
    /// Cavity frequency `ν₀ = ω₀/2π` in Hz for the physical-units report.
    pub nu0_hz: Option<f64>,
    pub convergence_n_max: Vec<usize>,
    pub convergence_dt_halvings: usize,
}

const KEYS: &[&str] = &[
    "omega_0",
    "omega_ge",
    "g_0",
    "delta_g",
    "omega_mod",
    "gamma_cav",
    "gamma_ge",
    "n_max",
    "dt",
    "steady_tol",
    "max_periods",
    "samples_per_period",
    "rebuild_u",
    "solve_fixed_point",
    "tau_max",
    "omega_min",
    "omega_max",
    "resolution",
    "window_rate",
    "lamb_shift",
    "bath_cutoff",
    "mode",
    "task",
    "sweep_start",
    "sweep_stop",
    "sweep_points",
    "output",
    "workers",
    "nu0_hz",
    "convergence_n_max",
    "convergence_dt_halvings",
];

struct RawConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {line_no}: expected 'key = value', got '{line}'"))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::InvalidConfig(format!("line {line_no}: unknown key '{key}'")));
            }
            if value.is_empty() {
                return Err(Error::InvalidConfig(format!("line {line_no}: empty value for '{key}'")));
            }
            if let Some((first, _)) = entries.insert(key.clone(), (line_no, value)) {
                return Err(Error::InvalidConfig(format!(
                    "line {line_no}: '{key}' already set on line {first}"
                )));
            }
        }
        Ok(RawConfig { entries })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(Some).map_err(|_| {
                Error::InvalidConfig(format!("line {line}: cannot parse '{v}' for '{key}'"))
            }),
        }
    }

    fn float(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.get::<f64>(key)?.unwrap_or(default))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw = RawConfig::parse(text)?;
        let r = SystemParams::reference();
        let params = SystemParams {
            omega_0: raw.float("omega_0", r.omega_0)?,
            omega_ge: raw.float("omega_ge", r.omega_ge)?,
            g_0: raw.float("g_0", r.g_0)?,
            delta_g: raw.float("delta_g", r.delta_g)?,
            omega_mod: raw.float("omega_mod", r.omega_mod)?,
            gamma_cav: raw.float("gamma_cav", r.gamma_cav)?,
            gamma_ge: raw.float("gamma_ge", r.gamma_ge)?,
            n_max: raw.get("n_max")?.unwrap_or(r.n_max),
        };
        params.validate()?;
        let d = PropagationConfig::defaults_for(&params);
        let propagation = PropagationConfig {
            dt: raw.float("dt", d.dt)?,
            steady_tol: raw.float("steady_tol", d.steady_tol)?,
            max_periods: raw.get("max_periods")?.unwrap_or(d.max_periods),
            samples_per_period: raw.get("samples_per_period")?.unwrap_or(d.samples_per_period),
            rebuild_u_per_step: raw.get("rebuild_u")?.unwrap_or(d.rebuild_u_per_step),
            solve_fixed_point: raw.get("solve_fixed_point")?.unwrap_or(d.solve_fixed_point),
        };
        let c = CorrelationConfig::default();
        let correlation = CorrelationConfig {
            tau_max: raw.get("tau_max")?,
            omega_min: raw.float("omega_min", c.omega_min)?,
            omega_max: raw.float("omega_max", c.omega_max)?,
            resolution: raw.get("resolution")?,
            window_rate: raw.get("window_rate")?,
        };
        let task: Task = raw.get("task")?.unwrap_or(Task::Single);
        let sweep = match (
            raw.get::<f64>("sweep_start")?,
            raw.get::<f64>("sweep_stop")?,
            raw.get::<usize>("sweep_points")?,
        ) {
            (Some(start), Some(stop), Some(points)) => Some(SweepGrid { start, stop, points }),
            (None, None, None) => None,
            _ => {
                return Err(Error::InvalidConfig(
                    "sweep_start, sweep_stop and sweep_points must be given together".into(),
                ))
            }
        };
        let convergence_n_max = match raw.entries.get("convergence_n_max") {
            None => vec![4, 6, 8],
            Some((line, v)) => v
                .split(',')
                .map(|s| {
                    s.trim().parse::<usize>().map_err(|_| {
                        Error::InvalidConfig(format!("line {line}: bad n_max list '{v}'"))
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let config = ExperimentConfig {
            params,
            propagation,
            correlation,
            lamb_shift: raw.get("lamb_shift")?.unwrap_or(false),
            bath_cutoff: raw.float("bath_cutoff", BathSpec::new(Channel::Cavity, 1.0).cutoff)?,
            mode: raw.get("mode")?.unwrap_or(ModeSelection::Tcl2),
            task,
            sweep,
            output: raw.get::<String>("output")?.unwrap_or_else(|| "vacrad_out".into()).into(),
            workers: raw.get("workers")?,
            nu0_hz: raw.get("nu0_hz")?,
            convergence_n_max,
            convergence_dt_halvings: raw.get("convergence_dt_halvings")?.unwrap_or(2),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.propagation.validate()?;
        self.correlation.validate()?;
        for bath in self.baths() {
            let model_span = 2.0 * (self.params.n_max as f64 + 1.0) * self.params.omega_0.max(self.params.omega_ge);
            if self.lamb_shift {
                bath.validate(model_span)?;
            } else {
                bath.validate(0.0)?;
            }
        }
        if self.task == Task::Sweep {
            let grid = self
                .sweep
                .ok_or_else(|| Error::InvalidConfig("task 'sweep' needs sweep_start, sweep_stop, sweep_points".into()))?;
            if grid.points < 2 {
                return Err(Error::InvalidConfig("sweep_points must be >= 2".into()));
            }
            if !(grid.start.is_finite() && grid.stop.is_finite() && grid.start > 0.0 && grid.stop > grid.start) {
                return Err(Error::InvalidConfig(format!(
                    "sweep range must satisfy 0 < start < stop, got [{}, {}]",
                    grid.start, grid.stop
                )));
            }
        }
        if self.task == Task::Convergence {
            if self.convergence_n_max.is_empty() || self.convergence_n_max.contains(&0) {
                return Err(Error::InvalidConfig("convergence_n_max must list n_max values >= 1".into()));
            }
            if self.convergence_dt_halvings > 6 {
                return Err(Error::InvalidConfig("convergence_dt_halvings must be <= 6".into()));
            }
        }
        if let Some(w) = self.workers {
            if w == 0 {
                return Err(Error::InvalidConfig("workers must be >= 1".into()));
            }
        }
        if let Some(nu) = self.nu0_hz {
            if !(nu.is_finite() && nu > 0.0) {
                return Err(Error::InvalidConfig(format!("nu0_hz must be > 0, got {nu}")));
            }
        }
        Ok(())
    }

    pub fn baths(&self) -> Vec<BathSpec> {
        BathSpec::defaults_for(&self.params)
            .into_iter()
            .map(|b| BathSpec { include_lamb_shift: self.lamb_shift, cutoff: self.bath_cutoff, ..b })
            .collect()
    }

    /// Canonical `key = value` lines; floats use the shortest round-trip form.
    pub fn echo(&self) -> Vec<(String, String)> {
        let p = &self.params;
        let pc = &self.propagation;
        let cc = &self.correlation;
        let opt = |v: Option<f64>| v.map_or("auto".to_string(), |x| format!("{x:?}"));
        let mut out = vec![
            ("task", self.task.name().to_string()),
            ("mode", self.mode.name().to_string()),
            ("omega_0", format!("{:?}", p.omega_0)),
            ("omega_ge", format!("{:?}", p.omega_ge)),
            ("g_0", format!("{:?}", p.g_0)),
            ("delta_g", format!("{:?}", p.delta_g)),
            ("omega_mod", format!("{:?}", p.omega_mod)),
            ("gamma_cav", format!("{:?}", p.gamma_cav)),
            ("gamma_ge", format!("{:?}", p.gamma_ge)),
            ("n_max", p.n_max.to_string()),
            ("dt", format!("{:?}", pc.dt)),
            ("steady_tol", format!("{:?}", pc.steady_tol)),
            ("max_periods", pc.max_periods.to_string()),
            ("samples_per_period", pc.samples_per_period.to_string()),
            ("rebuild_u", pc.rebuild_u_per_step.to_string()),
            ("solve_fixed_point", pc.solve_fixed_point.to_string()),
            ("tau_max", opt(cc.tau_max)),
            ("omega_min", format!("{:?}", cc.omega_min)),
            ("omega_max", format!("{:?}", cc.omega_max)),
            ("resolution", opt(cc.resolution)),
            ("window_rate", opt(cc.window_rate)),
            ("lamb_shift", self.lamb_shift.to_string()),
            ("bath_cutoff", format!("{:?}", self.bath_cutoff)),
            ("output", self.output.display().to_string()),
            ("nu0_hz", opt(self.nu0_hz)),
        ];
        if let Some(g) = self.sweep {
            out.push(("sweep_start", format!("{:?}", g.start)));
            out.push(("sweep_stop", format!("{:?}", g.stop)));
            out.push(("sweep_points", g.points.to_string()));
        }
        if self.task == Task::Convergence {
            let list: Vec<String> = self.convergence_n_max.iter().map(|n| n.to_string()).collect();
            out.push(("convergence_n_max", list.join(",")));
            out.push(("convergence_dt_halvings", self.convergence_dt_halvings.to_string()));
        }
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

/// Emission rate converted to photons per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalRates {
    pub nu0_hz: f64,
    /// `R_em · ν₀`: the rate unit read as cycles per second.
    pub cycles_per_second: f64,
    /// `R_em · 2π ν₀`: the rate unit read as radians per second.
    pub radians_per_second: f64,
}

/// `R_em` is in units of `ω₀`; the conversion depends on whether that unit
/// is taken as `ν₀` or `2πν₀`, so both are reported.
pub fn report_physical_units(r_em: f64, nu0_hz: f64) -> PhysicalRates {
    PhysicalRates {
        nu0_hz,
        cycles_per_second: r_em * nu0_hz,
        radians_per_second: r_em * 2.0 * std::f64::consts::PI * nu0_hz,
    }
}

pub fn format_physical_units(rates: &PhysicalRates) -> String {
    format!(
        "R_em = {:.3e} photons/s (unit of omega_0 read as nu0 = {:.3e} Hz); {:.3e} photons/s (read as 2*pi*nu0)",
        rates.cycles_per_second, rates.nu0_hz, rates.radians_per_second
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointStatus {
    Ok,
    Failed,
}

/// One unit of work: a full simulation at fixed parameters and mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub index: usize,
    pub label: String,
    pub mode: Mode,
    pub params: SystemParams,
    pub propagation: PropagationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub index: usize,
    pub label: String,
    pub mode: Mode,
    pub params: SystemParams,
    pub dt: f64,
    pub status: PointStatus,
    pub r_em: Option<f64>,
    pub n_in: Option<f64>,
    /// `γ_cav N_in`, the rate a white-bath reading of `N_in` would imply.
    pub gamma_n_in: Option<f64>,
    pub converged: bool,
    pub periods: usize,
    pub last_change: Option<f64>,
    pub diagnostics: Option<PropagationDiagnostics>,
    pub physical: Option<PhysicalRates>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
    #[serde(skip)]
    pub wall_seconds: f64,
    #[serde(skip)]
    pub spectrum: Option<SpectrumResult>,
}

/// Lines found in an emission spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub index: usize,
    pub mode: Mode,
    pub omega_mod: f64,
    pub r_em: f64,
    pub n_in: f64,
    pub tau_max: f64,
    pub tail_ratio: f64,
    pub lines: Vec<Peak>,
}

/// Spectral lines above `1e-3` of the strongest, from `S(ω)` (or `G(ω)` for
/// a white bath, whose filter is flat).
pub fn spectral_lines(spectrum: &SpectrumResult) -> Vec<Peak> {
    let curve: Vec<(f64, f64)> = spectrum.omega.iter().cloned().zip(spectrum.s.iter().cloned()).collect();
    let top = spectrum.s.iter().cloned().fold(0.0, f64::max);
    find_peaks_above(&curve, 1e-3 * top)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub series: String,
    pub mode: Mode,
    pub n_max: usize,
    pub dt: f64,
    pub r_em: Option<f64>,
    pub n_in: Option<f64>,
    /// Relative change of `R_em` against the previous row of the series.
    pub rel_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: String,
    pub config: BTreeMap<String, String>,
    pub points: Vec<PointResult>,
    pub spectra: Vec<SpectrumSummary>,
    pub convergence: Vec<ConvergenceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub workers: usize,
    pub wall_seconds: f64,
    pub point_wall_seconds: Vec<f64>,
    pub rk4_steps: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub telemetry: Telemetry,
    pub exit_code: i32,
    pub files: Vec<PathBuf>,
}

/// Jobs of a task, in output order.
pub fn plan_jobs(config: &ExperimentConfig) -> Vec<Job> {
    let modes = config.mode.modes();
    let mut specs: Vec<(String, SystemParams, PropagationConfig)> = Vec::new();
    match config.task {
        Task::Single | Task::Spectrum => {
            specs.push(("point".into(), config.params, config.propagation));
        }
        Task::Sweep => {
            let grid = config.sweep.expect("validated sweep grid");
            for w in grid.values() {
                let params = SystemParams { omega_mod: w, ..config.params };
                specs.push(("sweep".into(), params, config.propagation));
            }
        }
        Task::Convergence => {
            for &n_max in &config.convergence_n_max {
                let params = SystemParams { n_max, ..config.params };
                specs.push((format!("n_max={n_max}"), params, config.propagation));
            }
            for k in 0..=config.convergence_dt_halvings {
                let prop = PropagationConfig { dt: config.propagation.dt / f64::from(1u32 << k), ..config.propagation };
                specs.push((format!("dt/{}", 1u32 << k), config.params, prop));
            }
        }
    }
    let mut jobs = Vec::new();
    for (label, params, propagation) in specs {
        for &mode in &modes {
            jobs.push(Job { index: jobs.len(), label: label.clone(), mode, params, propagation });
        }
    }
    jobs
}

pub fn execute_job(job: &Job, config: &ExperimentConfig) -> PointResult {
    let start = Instant::now();
    let mut result = PointResult {
        index: job.index,
        label: job.label.clone(),
        mode: job.mode,
        params: job.params,
        dt: job.propagation.effective_dt(&job.params),
        status: PointStatus::Failed,
        r_em: None,
        n_in: None,
        gamma_n_in: None,
        converged: false,
        periods: 0,
        last_change: None,
        diagnostics: None,
        physical: None,
        warnings: Vec::new(),
        error: None,
        wall_seconds: 0.0,
        spectrum: None,
    };
    let baths: Vec<BathSpec> = {
        let c = ExperimentConfig { params: job.params, ..config.clone() };
        c.baths()
    };
    let outcome = std::panic::catch_unwind(|| {
        let model = Model::with_baths(job.params, baths)?;
        correlations::simulate_model(&model, job.mode, &job.propagation, &config.correlation)
    });
    match outcome {
        Ok(Ok(sim)) => {
            let s = &sim.spectrum;
            result.status = PointStatus::Ok;
            result.r_em = Some(s.r_em);
            result.n_in = Some(s.n_in);
            result.gamma_n_in = Some(job.params.gamma_cav * s.n_in);
            result.converged = sim.converged;
            result.periods = sim.periods;
            result.last_change = Some(sim.last_change);
            result.diagnostics = Some(sim.diagnostics);
            result.physical = config.nu0_hz.map(|nu| report_physical_units(s.r_em, nu));
            result.warnings = s.warnings.clone();
            if config.task == Task::Spectrum {
                result.spectrum = Some(sim.spectrum);
            }
        }
        Ok(Err(e)) => result.error = Some(e.to_string()),
        Err(_) => result.error = Some("internal panic".into()),
    }
    result.wall_seconds = start.elapsed().as_secs_f64();
    result
}

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), fmt_f)
}

const POINT_COLUMNS: &[(&str, &str)] = &[
    ("index", "job index"),
    ("label", "job label (sweep, point, n_max=.., dt/..)"),
    ("mode", "tcl2 (colored baths) or markovian (white baths)"),
    ("status", "ok or failed"),
    ("omega_mod", "modulation frequency"),
    ("r_em", "extracavity emission rate, units of omega_0"),
    ("n_in", "period-averaged intracavity photon number"),
    ("gamma_n_in", "gamma_cav * n_in"),
    ("converged", "periodic steady state reached"),
    ("periods", "modulation periods propagated"),
    ("last_change", "relative stroboscopic change over the last period"),
    ("max_trace_drift", "largest |Tr rho - 1|"),
    ("max_hermiticity_error", "largest |rho - rho^dagger|"),
    ("min_eigenvalue", "smallest eigenvalue of rho seen"),
    ("omega_0", "cavity frequency"),
    ("omega_ge", "qubit frequency"),
    ("g_0", "static vacuum Rabi coupling"),
    ("delta_g", "modulation amplitude"),
    ("gamma_cav", "cavity loss rate"),
    ("gamma_ge", "qubit loss rate"),
    ("n_max", "Fock truncation"),
    ("dt", "RK4 step used"),
    ("error", "failure message, empty on success"),
];

fn header_block(config: &ExperimentConfig, columns: &[(&str, &str)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# vacrad {}", env!("CARGO_PKG_VERSION"));
    for (k, v) in config.echo() {
        let _ = writeln!(s, "# {k} = {v}");
    }
    let _ = writeln!(s, "# columns:");
    for (name, doc) in columns {
        let _ = writeln!(s, "#   {name}: {doc}");
    }
    let names: Vec<&str> = columns.iter().map(|c| c.0).collect();
    let _ = writeln!(s, "{}", names.join(","));
    s
}

fn point_row(r: &PointResult) -> String {
    let d = r.diagnostics;
    let p = &r.params;
    let error = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
    [
        r.index.to_string(),
        r.label.clone(),
        r.mode.name().to_string(),
        match r.status {
            PointStatus::Ok => "ok".into(),
            PointStatus::Failed => "failed".into(),
        },
        fmt_f(p.omega_mod),
        fmt_opt(r.r_em),
        fmt_opt(r.n_in),
        fmt_opt(r.gamma_n_in),
        r.converged.to_string(),
        r.periods.to_string(),
        fmt_opt(r.last_change),
        fmt_opt(d.map(|d| d.max_trace_drift)),
        fmt_opt(d.map(|d| d.max_hermiticity_error)),
        fmt_opt(d.map(|d| d.min_eigenvalue)),
        fmt_f(p.omega_0),
        fmt_f(p.omega_ge),
        fmt_f(p.g_0),
        fmt_f(p.delta_g),
        fmt_f(p.gamma_cav),
        fmt_f(p.gamma_ge),
        p.n_max.to_string(),
        fmt_f(r.dt),
        error,
    ]
    .join(",")
}

/// Path with `suffix` appended to the file name (not replacing an extension).
pub fn output_path(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Resolves the worker count: command line, then environment, then config,
/// then the machine's parallelism.
pub fn resolve_workers(cli: Option<usize>, config: &ExperimentConfig) -> usize {
    cli.or(config.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

/// Executes the configured task, writing all output files.
pub fn run(config: &ExperimentConfig, workers: usize) -> Result<RunOutcome> {
    config.validate()?;
    let started = Instant::now();
    let jobs = plan_jobs(config);
    let csv_path = output_path(&config.output, ".csv");
    let mut csv = create(&csv_path)?;
    csv.write_all(header_block(config, POINT_COLUMNS).as_bytes())?;
    csv.flush()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    let (tx, rx) = mpsc::channel::<PointResult>();
    let mut results: Vec<PointResult> = Vec::with_capacity(jobs.len());
    let mut write_error: Option<std::io::Error> = None;
    std::thread::scope(|scope| {
        let jobs = &jobs;
        scope.spawn(move || {
            pool.install(|| {
                jobs.par_iter().for_each_with(tx, |tx, job| {
                    let _ = tx.send(execute_job(job, config));
                });
            });
        });
        let mut pending = BTreeMap::new();
        for r in rx {
            pending.insert(r.index, r);
            while let Some(r) = pending.remove(&results.len()) {
                if write_error.is_none() {
                    let line = point_row(&r) + "\n";
                    if let Err(e) = csv.write_all(line.as_bytes()).and_then(|_| csv.flush()) {
                        write_error = Some(e);
                    }
                }
                results.push(r);
            }
        }
    });
    if let Some(e) = write_error {
        return Err(e.into());
    }
    let mut files = vec![csv_path];

    let mut spectra = Vec::new();
    if config.task == Task::Spectrum {
        let path = output_path(&config.output, ".spectrum.csv");
        let mut out = create(&path)?;
        let columns = [
            ("mode", "tcl2 or markovian"),
            ("omega", "emission frequency, units of omega_0"),
            ("g", "intracavity spectrum G(omega)"),
            ("s", "extracavity photons per unit time and frequency S(omega)"),
        ];
        out.write_all(header_block(config, &columns).as_bytes())?;
        for r in &results {
            if let Some(s) = &r.spectrum {
                for ((w, g), sv) in s.omega.iter().zip(&s.g).zip(&s.s) {
                    writeln!(out, "{},{},{},{}", r.mode.name(), fmt_f(*w), fmt_f(*g), fmt_f(*sv))?;
                }
                spectra.push(SpectrumSummary {
                    index: r.index,
                    mode: r.mode,
                    omega_mod: r.params.omega_mod,
                    r_em: s.r_em,
                    n_in: s.n_in,
                    tau_max: s.tau_max,
                    tail_ratio: s.tail_ratio,
                    lines: spectral_lines(s),
                });
            }
        }
        out.flush()?;
        files.push(path);
    }

    let mut convergence = Vec::new();
    if config.task == Task::Convergence {
        let mut previous: BTreeMap<(String, &'static str), f64> = BTreeMap::new();
        for r in &results {
            let series = if r.label.starts_with("n_max") { "n_max" } else { "dt" }.to_string();
            let key = (series.clone(), r.mode.name());
            let rel_delta = match (previous.get(&key), r.r_em) {
                (Some(&prev), Some(now)) if prev != 0.0 => Some((now - prev) / prev),
                _ => None,
            };
            if let Some(v) = r.r_em {
                previous.insert(key, v);
            }
            convergence.push(ConvergenceRow {
                series,
                mode: r.mode,
                n_max: r.params.n_max,
                dt: r.dt,
                r_em: r.r_em,
                n_in: r.n_in,
                rel_delta,
            });
        }
        let path = output_path(&config.output, ".convergence.csv");
        let mut out = create(&path)?;
        let columns = [
            ("series", "n_max or dt"),
            ("mode", "tcl2 or markovian"),
            ("n_max", "Fock truncation"),
            ("dt", "RK4 step used"),
            ("r_em", "emission rate"),
            ("n_in", "intracavity photon number"),
            ("rel_delta", "relative change of r_em against the previous row of the series"),
        ];
        out.write_all(header_block(config, &columns).as_bytes())?;
        for c in &convergence {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c.series,
                c.mode.name(),
                c.n_max,
                fmt_f(c.dt),
                fmt_opt(c.r_em),
                fmt_opt(c.n_in),
                fmt_opt(c.rel_delta)
            )?;
        }
        out.flush()?;
        files.push(path);
    }

    let record = RunRecord {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.echo().into_iter().collect(),
        points: results,
        spectra,
        convergence,
    };
    let json_path = output_path(&config.output, ".json");
    let mut out = create(&json_path)?;
    serde_json::to_writer_pretty(&mut out, &record)?;
    out.write_all(b"\n")?;
    out.flush()?;
    files.push(json_path);

    let telemetry = Telemetry {
        workers,
        wall_seconds: started.elapsed().as_secs_f64(),
        point_wall_seconds: record.points.iter().map(|p| p.wall_seconds).collect(),
        rk4_steps: record
            .points
            .iter()
            .map(|p| p.diagnostics.map_or(0, |d| d.rk4_steps))
            .collect(),
    };
    let telemetry_path = output_path(&config.output, ".telemetry.json");
    let mut out = create(&telemetry_path)?;
    serde_json::to_writer_pretty(&mut out, &telemetry)?;
    out.write_all(b"\n")?;
    out.flush()?;
    files.push(telemetry_path);

    let failed = record.points.iter().filter(|p| p.status == PointStatus::Failed).count();
    let exit_code = if failed == 0 {
        EXIT_OK
    } else if failed == record.points.len() {
        EXIT_ALL_FAILED
    } else {
        EXIT_PARTIAL
    };
    Ok(RunOutcome { record, telemetry, exit_code, files })
}

#[derive(Debug, Parser)]
#[command(name = "vacrad", version, about = "Vacuum radiation from a modulated cavity-QED system")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the task named in the config file.
    Run(RunArgs),
    /// Sweep the modulation frequency.
    Sweep(RunArgs),
    /// Emission spectrum at the configured modulation frequency.
    Spectrum(RunArgs),
    /// Truncation and step-size convergence table.
    Convergence(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output path prefix; overrides the config's `output`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    /// tcl2, markovian or both; overrides the config's `mode`.
    #[arg(long)]
    pub mode: Option<String>,
}

fn prepare(command: &Command) -> Result<(ExperimentConfig, usize)> {
    let (args, task) = match command {
        Command::Run(a) => (a, None),
        Command::Sweep(a) => (a, Some(Task::Sweep)),
        Command::Spectrum(a) => (a, Some(Task::Spectrum)),
        Command::Convergence(a) => (a, Some(Task::Convergence)),
    };
    let mut config = ExperimentConfig::from_file(&args.config)?;
    if let Some(t) = task {
        config.task = t;
    }
    if let Some(o) = &args.output {
        config.output = o.clone();
    }
    if let Some(m) = &args.mode {
        config.mode = m.parse()?;
    }
    if args.workers == Some(0) {
        return Err(Error::InvalidConfig("workers must be >= 1".into()));
    }
    config.validate()?;
    let workers = resolve_workers(args.workers, &config);
    Ok((config, workers))
}

fn summarize(outcome: &RunOutcome) -> String {
    let mut s = String::new();
    for p in &outcome.record.points {
        match p.status {
            PointStatus::Ok => {
                let _ = write!(
                    s,
                    "[{}] {} {} omega_mod={:.6} R_em={:.6e} N_in={:.6e}{}",
                    p.index,
                    p.label,
                    p.mode.name(),
                    p.params.omega_mod,
                    p.r_em.unwrap_or(f64::NAN),
                    p.n_in.unwrap_or(f64::NAN),
                    if p.converged { "" } else { " (not converged)" }
                );
                if let Some(ph) = &p.physical {
                    let _ = write!(s, "\n    {}", format_physical_units(ph));
                }
                s.push('\n');
            }
            PointStatus::Failed => {
                let _ = writeln!(s, "[{}] {} {} failed: {}", p.index, p.label, p.mode.name(), p.error.as_deref().unwrap_or(""));
            }
        }
    }
    for sp in &outcome.record.spectra {
        let lines: Vec<String> = sp.lines.iter().map(|l| format!("{:.5}", l.position)).collect();
        let _ = writeln!(s, "spectrum {} lines at [{}]", sp.mode.name(), lines.join(", "));
    }
    for f in &outcome.files {
        let _ = writeln!(s, "wrote {}", f.display());
    }
    s
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let (config, workers) = match prepare(&cli.command) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    match run(&config, workers) {
        Ok(outcome) => {
            print!("{}", summarize(&outcome));
            outcome.exit_code
        }
        Err(e @ Error::InvalidConfig(_)) | Err(e @ Error::InvalidParams(_)) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ALL_FAILED
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parses_defaults_and_overrides() {
        let c = ExperimentConfig::parse("# comment\nomega_mod = 1.97 # inline\nn_max = 4\nmode = both\n").unwrap();
        assert_eq!(c.params.omega_mod, 1.97);
        assert_eq!(c.params.n_max, 4);
        assert_eq!(c.params.g_0, SystemParams::reference().g_0);
        assert_eq!(c.mode, ModeSelection::Both);
        assert_eq!(c.task, Task::Single);
        assert_eq!(c.propagation, PropagationConfig::defaults_for(&c.params));
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "omega_0 = -1",
            "bogus = 1",
            "n_max",
            "g_0 = abc",
            "g_0 = 0.1\ng_0 = 0.2",
            "task = sweep",
            "task = sweep\nsweep_start = 1.9\nsweep_stop = 2.1\nsweep_points = 1",
            "sweep_start = 1.9",
            "mode = lindblad",
            "dt = 0",
            "workers = 0",
            "samples_per_period = 2",
            "omega_min = 1\nomega_max = 0",
            "task = convergence\nconvergence_n_max = 4,x",
        ] {
            assert!(
                matches!(ExperimentConfig::parse(text), Err(Error::InvalidConfig(_)) | Err(Error::InvalidParams(_))),
                "accepted: {text:?}"
            );
        }
    }

    #[test]
    fn echo_round_trips() {
        let text = "task = sweep\nsweep_start = 1.9\nsweep_stop = 2.14\nsweep_points = 121\ndelta_g = 0.0002\nnu0_hz = 7e9\n";
        let c = ExperimentConfig::parse(text).unwrap();
        let echoed: String = c
            .echo()
            .into_iter()
            .filter(|(_, v)| v != "auto")
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        assert_eq!(ExperimentConfig::parse(&echoed).unwrap(), c);
    }

    #[test]
    fn sweep_grid_values() {
        let g = SweepGrid { start: 1.9, stop: 2.14, points: 121 };
        let v = g.values();
        assert_eq!(v.len(), 121);
        assert_eq!(v[0], 1.9);
        assert_relative_eq!(v[120], 2.14, max_relative = 1e-15);
        assert_relative_eq!(g.step(), 0.002, max_relative = 1e-12);
    }

    #[test]
    fn physical_units_both_conventions() {
        let r = report_physical_units(6.23e-6, 7e9);
        assert_relative_eq!(r.cycles_per_second, 4.361e4, max_relative = 1e-12);
        assert_relative_eq!(r.radians_per_second, 6.23e-6 * 2.0 * std::f64::consts::PI * 7e9, max_relative = 1e-12);
        assert!((r.radians_per_second - 2.74e5).abs() < 0.01e5);
        let zero = report_physical_units(0.0, 7e9);
        assert_eq!(zero.cycles_per_second, 0.0);
        assert_eq!(zero.radians_per_second, 0.0);
        assert!(format_physical_units(&r).contains("2*pi"));
    }

    #[test]
    fn job_plans() {
        let c = ExperimentConfig::parse("task = sweep\nsweep_start = 1.9\nsweep_stop = 2.1\nsweep_points = 5\nmode = both").unwrap();
        let jobs = plan_jobs(&c);
        assert_eq!(jobs.len(), 10);
        assert!(jobs.iter().enumerate().all(|(i, j)| j.index == i));
        assert_eq!(jobs[1].mode, Mode::Markovian);
        assert_eq!(jobs[2].params.omega_mod, 1.95);

        let c = ExperimentConfig::parse("task = convergence\nconvergence_n_max = 4,6\nconvergence_dt_halvings = 1").unwrap();
        let labels: Vec<String> = plan_jobs(&c).into_iter().map(|j| j.label).collect();
        assert_eq!(labels, ["n_max=4", "n_max=6", "dt/1", "dt/2"]);
    }

    #[test]
    fn output_suffixes() {
        assert_eq!(output_path(Path::new("out/fig2"), ".csv"), PathBuf::from("out/fig2.csv"));
        assert_eq!(output_path(Path::new("a.b"), ".json"), PathBuf::from("a.b.json"));
    }

    #[test]
    fn float_format_round_trips() {
        for v in [6.181813465795719e-6, 1.0 / 3.0, -2.5e-300, 1.9716] {
            assert_eq!(fmt_f(v).parse::<f64>().unwrap(), v);
        }
    }
}
