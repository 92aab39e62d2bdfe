//! Time-convolutionless master equation with colored baths, RK4 propagation
//! to the periodic steady state, and the white-bath comparison generator.
//!
//! `dρ/dt = −i[H(t), ρ] + Σ_j (U_j ρ S_j + S_j ρ U_j† − S_j U_j ρ − ρ U_j† S_j)`

use ndarray::{Array1, Array2};
use ndarray_linalg::Solve;
use serde::{Deserialize, Serialize};

use crate::bath::{self, BathSpec};
use crate::hilbert::{self, dagger, max_abs, parity, DensityMatrix, DressedBasis, SystemParams};
use crate::superop::{max_abs_vec, period_map, Liouvillian, Sector};
use crate::{Error, Operator, Result, C64};

/// Which bath model enters the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Colored baths `γ_j Θ(ω)`.
    Tcl2,
    /// White baths, `U_j = (γ_j/2) S_j`.
    Markovian,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Tcl2 => "tcl2",
            Mode::Markovian => "markovian",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tcl2" => Ok(Mode::Tcl2),
            "markovian" => Ok(Mode::Markovian),
            other => Err(Error::InvalidConfig(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DissipationChannel {
    pub bath: BathSpec,
    pub s: Operator,
    pub u_colored: Operator,
    pub u_white: Operator,
}

impl DissipationChannel {
    pub fn u(&self, mode: Mode) -> &Operator {
        match mode {
            Mode::Tcl2 => &self.u_colored,
            Mode::Markovian => &self.u_white,
        }
    }
}

/// Operators shared by every propagation at one parameter point. Immutable
/// once built.
#[derive(Debug, Clone)]
pub struct Model {
    pub params: SystemParams,
    pub dressed: DressedBasis,
    pub h_static: Operator,
    /// `(â + â†)(ĉ + ĉ†)`
    pub coupling: Operator,
    pub a: Operator,
    pub channels: Vec<DissipationChannel>,
}

impl Model {
    pub fn new(params: SystemParams) -> Result<Self> {
        Model::with_baths(params, BathSpec::defaults_for(&params))
    }

    pub fn with_baths(params: SystemParams, baths: Vec<BathSpec>) -> Result<Self> {
        params.validate()?;
        let h_static = hilbert::build_static_hamiltonian(&params)?;
        let dressed = hilbert::diagonalize(&h_static)?;
        let span = dressed.eigenvalues[dressed.dim() - 1] - dressed.eigenvalues[0];
        let channels = baths
            .into_iter()
            .map(|b| {
                b.validate(span)?;
                let s = bath::system_coupling(b.channel, &params)?;
                let u_colored = bath::build_u(&s, &dressed, &b)?;
                let u_white = bath::build_u_white(&s, &b);
                Ok(DissipationChannel { bath: b, s, u_colored, u_white })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Model {
            params,
            dressed,
            h_static,
            coupling: hilbert::build_coupling_operator(&params)?,
            a: hilbert::build_cavity_annihilation(&params)?,
            channels,
        })
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    pub fn photon_number(&self) -> Operator {
        dagger(&self.a).dot(&self.a)
    }

    /// `Δg sin(ω_mod t)`
    pub fn modulation(&self, t: f64) -> f64 {
        self.params.delta_g * (self.params.omega_mod * t).sin()
    }

    pub fn hamiltonian(&self, t: f64) -> Operator {
        &self.h_static + &(&self.coupling * C64::from(self.modulation(t)))
    }

    /// True when every generator term respects excitation parity.
    pub fn conserves_parity(&self) -> bool {
        let even_ok = |op: &Operator| {
            let scale = max_abs(op).max(1e-300);
            op.indexed_iter()
                .all(|((i, j), z)| parity(i) == parity(j) || z.norm() <= 1e-14 * scale)
        };
        let odd_ok = |op: &Operator| {
            let scale = max_abs(op).max(1e-300);
            op.indexed_iter()
                .all(|((i, j), z)| parity(i) != parity(j) || z.norm() <= 1e-14 * scale)
        };
        even_ok(&self.h_static)
            && even_ok(&self.coupling)
            && self
                .channels
                .iter()
                .all(|c| odd_ok(&c.s) && odd_ok(&c.u_colored) && odd_ok(&c.u_white))
    }

    /// Rough magnitude of the generator, used for relative thresholds.
    pub fn generator_scale(&self) -> f64 {
        max_abs(&self.h_static) + max_abs(&self.coupling) * self.params.delta_g + 1.0
    }

    /// Time-independent part: `−i[H₀, ρ] + D(ρ)`.
    pub fn static_rhs(&self, rho: &Operator, mode: Mode) -> Operator {
        let mut out = commutator_term(&self.h_static, rho);
        for ch in &self.channels {
            add_dissipator(&mut out, rho, &ch.s, ch.u(mode));
        }
        out
    }

    /// `−i[X, ρ]`, the part multiplied by `Δg sin(ω_mod t)`.
    pub fn drive_rhs(&self, rho: &Operator) -> Operator {
        commutator_term(&self.coupling, rho)
    }

    pub fn rhs(&self, rho: &Operator, t: f64, mode: Mode) -> Operator {
        let mut out = self.static_rhs(rho, mode);
        let m = self.modulation(t);
        if m != 0.0 {
            out.scaled_add(C64::from(m), &self.drive_rhs(rho));
        }
        out
    }

    /// Generator with `U_j` rebuilt from the instantaneous Hamiltonian `H(t)`.
    pub fn rhs_rebuilt(&self, rho: &Operator, t: f64, mode: Mode) -> Result<Operator> {
        if mode == Mode::Markovian {
            return Ok(self.rhs(rho, t, mode));
        }
        let h = self.hamiltonian(t);
        let dressed = hilbert::diagonalize(&h)?;
        let mut out = commutator_term(&h, rho);
        for ch in &self.channels {
            let u = bath::build_u(&ch.s, &dressed, &ch.bath)?;
            add_dissipator(&mut out, rho, &ch.s, &u);
        }
        Ok(out)
    }
}

fn commutator_term(h: &Operator, rho: &Operator) -> Operator {
    (h.dot(rho) - rho.dot(h)) * C64::new(0.0, -1.0)
}

fn add_dissipator(out: &mut Operator, rho: &Operator, s: &Operator, u: &Operator) {
    let u_dag = dagger(u);
    let u_rho = u.dot(rho);
    let rho_udag = rho.dot(&u_dag);
    *out += &u_rho.dot(s);
    *out += &s.dot(&rho_udag);
    *out -= &s.dot(&u_rho);
    *out -= &rho_udag.dot(s);
}

fn check_finite(op: &Operator, t: f64) -> Result<()> {
    if op.iter().all(|z| z.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { t })
    }
}

/// Colored-bath generator applied to `ρ` at time `t`.
pub fn tcl2_rhs(rho: &Operator, t: f64, model: &Model) -> Result<Operator> {
    let out = model.rhs(rho, t, Mode::Tcl2);
    check_finite(&out, t)?;
    Ok(out)
}

/// White-bath generator applied to `ρ` at time `t`.
pub fn markovian_rhs(rho: &Operator, t: f64, model: &Model) -> Result<Operator> {
    let out = model.rhs(rho, t, Mode::Markovian);
    check_finite(&out, t)?;
    Ok(out)
}

/// Thresholds beyond which a propagation is aborted.
pub const MAX_TRACE_DRIFT: f64 = 1e-6;
pub const MIN_EIGENVALUE_FLOOR: f64 = -1e-6;
pub const MAX_HERMITICITY_ERROR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    /// Requested RK4 step; shortened so an integer number of steps fits
    /// between consecutive samples.
    pub dt: f64,
    /// Stroboscopic max-norm change per period, relative to `‖ρ‖_max`,
    /// below which the state counts as periodic.
    pub steady_tol: f64,
    pub max_periods: usize,
    pub samples_per_period: usize,
    /// Rebuild `U_j` from `H(t)` at every generator evaluation (slow; for
    /// validating the static-`U_j` approximation).
    pub rebuild_u_per_step: bool,
    /// Seed the iteration with the solution of `(Φ_T − 1) v = 0` instead of
    /// `rho0` itself. Iteration from a pure state can pass through transient
    /// TCL2 states with eigenvalues below the positivity floor even when the
    /// periodic state is well inside it.
    pub solve_fixed_point: bool,
}

impl PropagationConfig {
    pub fn defaults_for(params: &SystemParams) -> Self {
        let two_pi = 2.0 * std::f64::consts::PI;
        let period = params.period();
        let dt = (two_pi / params.omega_mod).min(two_pi / params.omega_0) / 200.0;
        let slowest = (1.0 / params.gamma_cav).max(1.0 / params.gamma_ge);
        PropagationConfig {
            dt,
            steady_tol: 1e-10,
            max_periods: (40.0 * slowest / period).ceil() as usize,
            samples_per_period: 32,
            rebuild_u_per_step: false,
            solve_fixed_point: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.steady_tol.is_finite() && self.steady_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "steady_tol must be > 0, got {}",
                self.steady_tol
            )));
        }
        if self.samples_per_period < 8 {
            return Err(Error::InvalidConfig(format!(
                "samples_per_period must be >= 8, got {}",
                self.samples_per_period
            )));
        }
        if self.max_periods == 0 {
            return Err(Error::InvalidConfig("max_periods must be >= 1".into()));
        }
        Ok(())
    }

    /// RK4 steps between consecutive samples.
    pub fn steps_per_sample(&self, params: &SystemParams) -> usize {
        let h = params.period() / self.samples_per_period as f64;
        ((h / self.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }

    pub fn steps_per_period(&self, params: &SystemParams) -> usize {
        self.steps_per_sample(params) * self.samples_per_period
    }

    /// Step actually taken.
    pub fn effective_dt(&self, params: &SystemParams) -> f64 {
        params.period() / self.steps_per_period(params) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationDiagnostics {
    pub max_trace_drift: f64,
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
    /// RK4 steps advanced by the density matrix.
    pub rk4_steps: u64,
}

impl PropagationDiagnostics {
    fn new() -> Self {
        PropagationDiagnostics {
            max_trace_drift: 0.0,
            max_hermiticity_error: 0.0,
            min_eigenvalue: f64::INFINITY,
            rk4_steps: 0,
        }
    }

    fn observe(&mut self, rho: &DensityMatrix, t: f64, with_spectrum: bool) -> Result<()> {
        check_finite(&rho.entries, t)?;
        let drift = (rho.trace() - C64::new(1.0, 0.0)).norm();
        let herm = hilbert::hermiticity_error(&rho.entries);
        self.max_trace_drift = self.max_trace_drift.max(drift);
        self.max_hermiticity_error = self.max_hermiticity_error.max(herm);
        if drift > MAX_TRACE_DRIFT {
            return Err(Error::TraceDrift { t, drift });
        }
        if herm > MAX_HERMITICITY_ERROR {
            return Err(Error::Hermiticity { t, deviation: herm });
        }
        if with_spectrum {
            let lam = rho.min_eigenvalue()?;
            self.min_eigenvalue = self.min_eigenvalue.min(lam);
            if lam < MIN_EIGENVALUE_FLOOR {
                return Err(Error::Positivity { t, min_eigenvalue: lam });
            }
        }
        Ok(())
    }
}

/// One modulation period of the asymptotic state.
#[derive(Debug, Clone)]
pub struct PeriodicState {
    pub mode: Mode,
    pub period: f64,
    /// `(t_k, ρ(t_k))` at uniformly spaced times covering one period.
    pub samples: Vec<(f64, DensityMatrix)>,
    pub converged: bool,
    /// Periods propagated before the fixed point was accepted.
    pub periods: usize,
    pub steps_per_period: usize,
    /// Stroboscopic change over the last period.
    pub last_change: f64,
    pub diagnostics: PropagationDiagnostics,
}

impl PeriodicState {
    pub fn anchor_spacing(&self) -> f64 {
        self.period / self.samples.len() as f64
    }

    /// Period average of `Tr[op ρ(t)]`.
    pub fn time_average(&self, op: &Operator) -> C64 {
        let n = self.samples.len() as f64;
        self.samples.iter().map(|(_, r)| r.expectation(op)).sum::<C64>() / n
    }
}

const POSITIVITY_CHECK_EVERY: usize = 16;

/// Propagates `rho0` with fixed-step RK4 until the stroboscopic state stops
/// changing, and returns one sampled period of the result.
///
/// Non-convergence within `max_periods` is reported through
/// [`PeriodicState::converged`], not as an error.
pub fn propagate(model: &Model, rho0: &DensityMatrix, config: &PropagationConfig, mode: Mode) -> Result<PeriodicState> {
    config.validate()?;
    if config.rebuild_u_per_step {
        return propagate_direct(model, rho0, config, mode);
    }
    check_initial(model, rho0)?;
    let params = &model.params;
    let period = params.period();
    let n_samples = config.samples_per_period;
    let steps_per_sample = config.steps_per_sample(params);

    let sector = Sector::for_operator(&rho0.entries, model);
    let liou = Liouvillian::build(model, mode, sector)?;
    let maps = liou.anchor_maps(period, n_samples, steps_per_sample);
    let strobe = period_map(&maps, 0);
    let sector = &liou.sector;

    let mut diag = PropagationDiagnostics::new();
    diag.observe(rho0, 0.0, true)?;
    let mut v = sector.pack(&rho0.entries);
    if config.solve_fixed_point {
        if let Some(fixed) = stroboscopic_fixed_point(&strobe, sector, rho0.trace()) {
            v = fixed;
        }
    }
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    let mut periods = 0;
    while periods < config.max_periods {
        let next = strobe.dot(&v);
        periods += 1;
        let t = periods as f64 * period;
        last_change = max_abs_vec(&(&next - &v)) / max_abs_vec(&next).max(1e-300);
        v = next;
        let rho = DensityMatrix::new(sector.unpack(&v));
        diag.observe(&rho, t, periods % POSITIVITY_CHECK_EVERY == 0)?;
        if last_change < config.steady_tol {
            converged = true;
            break;
        }
    }
    diag.rk4_steps = (periods * steps_per_sample * n_samples) as u64;

    let t_start = periods as f64 * period;
    let h = period / n_samples as f64;
    let mut samples = Vec::with_capacity(n_samples);
    for (k, map) in maps.iter().enumerate() {
        let t = t_start + k as f64 * h;
        let rho = DensityMatrix::new(sector.unpack(&v));
        diag.observe(&rho, t, true)?;
        samples.push((t, rho));
        v = map.dot(&v);
    }
    Ok(PeriodicState {
        mode,
        period,
        samples,
        converged,
        periods,
        steps_per_period: steps_per_sample * n_samples,
        last_change,
        diagnostics: diag,
    })
}

/// Trace-`trace` solution of `(Φ_T − 1) v = 0`. One equation is redundant
/// because `Φ_T` preserves the trace; it is swapped for the normalization.
/// `None` when the system is singular or the solution is not finite.
fn stroboscopic_fixed_point(strobe: &Array2<C64>, sector: &Sector, trace: C64) -> Option<Array1<C64>> {
    let n = strobe.nrows();
    let w = sector.trace_functional(&Operator::eye(sector.operator_dim()));
    let pivot = (0..n).find(|&k| w[k] != C64::new(0.0, 0.0))?;
    let mut a = strobe - &Array2::<C64>::eye(n);
    a.row_mut(pivot).assign(&w);
    let mut b = Array1::zeros(n);
    b[pivot] = trace;
    let v = a.solve_into(b).ok()?;
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite()).then_some(v)
}

fn check_initial(model: &Model, rho0: &DensityMatrix) -> Result<()> {
    if rho0.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: rho0.dim() });
    }
    let d = rho0.diagnostics()?;
    if d.trace_error > 1e-8 || d.hermiticity_error > 1e-10 || d.min_eigenvalue < MIN_EIGENVALUE_FLOOR {
        return Err(Error::InvalidParams(format!("initial state is not a density matrix: {d:?}")));
    }
    Ok(())
}

/// RK4 stepping of the density matrix itself, one generator evaluation at a
/// time. Slower than [`propagate`]; supports rebuilding `U_j` from `H(t)`.
pub fn propagate_direct(
    model: &Model,
    rho0: &DensityMatrix,
    config: &PropagationConfig,
    mode: Mode,
) -> Result<PeriodicState> {
    config.validate()?;
    check_initial(model, rho0)?;
    let params = &model.params;
    let period = params.period();
    let n_samples = config.samples_per_period;
    let steps_per_sample = config.steps_per_sample(params);
    let dt = config.effective_dt(params);
    let rhs = |rho: &Operator, t: f64| -> Result<Operator> {
        let out = if config.rebuild_u_per_step {
            model.rhs_rebuilt(rho, t, mode)?
        } else {
            model.rhs(rho, t, mode)
        };
        check_finite(&out, t)?;
        Ok(out)
    };
    let step = |rho: &Operator, t: f64| -> Result<Operator> {
        let k1 = rhs(rho, t)?;
        let k2 = rhs(&(rho + &(&k1 * C64::from(0.5 * dt))), t + 0.5 * dt)?;
        let k3 = rhs(&(rho + &(&k2 * C64::from(0.5 * dt))), t + 0.5 * dt)?;
        let k4 = rhs(&(rho + &(&k3 * C64::from(dt))), t + dt)?;
        Ok(rho + &((k1 + (k2 + k3) * C64::from(2.0) + k4) * C64::from(dt / 6.0)))
    };

    let mut diag = PropagationDiagnostics::new();
    diag.observe(rho0, 0.0, true)?;
    let mut rho = rho0.entries.clone();
    let mut samples: Vec<(f64, DensityMatrix)> = Vec::with_capacity(n_samples);
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    let mut periods = 0;
    let mut step_index: u64 = 0;
    while periods < config.max_periods {
        let start = rho.clone();
        samples.clear();
        for _ in 0..n_samples {
            let t_k = (step_index as f64) * dt;
            samples.push((t_k, DensityMatrix::new(rho.clone())));
            for _ in 0..steps_per_sample {
                rho = step(&rho, step_index as f64 * dt)?;
                step_index += 1;
            }
        }
        periods += 1;
        let t = step_index as f64 * dt;
        last_change = max_abs(&(&rho - &start)) / max_abs(&rho).max(1e-300);
        diag.observe(&DensityMatrix::new(rho.clone()), t, periods % POSITIVITY_CHECK_EVERY == 0)?;
        if last_change < config.steady_tol {
            converged = true;
            break;
        }
    }
    // sample the period following the accepted strobe point
    samples.clear();
    for _ in 0..n_samples {
        let t_k = step_index as f64 * dt;
        let sample = DensityMatrix::new(rho.clone());
        diag.observe(&sample, t_k, true)?;
        samples.push((t_k, sample));
        for _ in 0..steps_per_sample {
            rho = step(&rho, step_index as f64 * dt)?;
            step_index += 1;
        }
    }
    diag.rk4_steps = (periods * steps_per_sample * n_samples) as u64;
    Ok(PeriodicState {
        mode,
        period,
        samples,
        converged,
        periods,
        steps_per_period: steps_per_sample * n_samples,
        last_change,
        diagnostics: diag,
    })
}

/// Population of dressed state `k`, averaged over the sampled period.
pub fn dressed_population(model: &Model, state: &PeriodicState, k: usize) -> f64 {
    state.time_average(&model.dressed.projector(k)).re
}
