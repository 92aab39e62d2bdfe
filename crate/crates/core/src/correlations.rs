//! Steady-state two-time correlations of the cavity field, the intracavity
//! spectrum `G(ω)`, the filtered emission spectrum `S(ω)`, and the emission
//! rate.
//!
//! `C(t, τ) = ⟨â†(t+τ) â(t)⟩ = Tr[â† Φ(t+τ, t)(â ρ(t))]` is evaluated with the
//! quantum-regression prescription: `â ρ(t)` is propagated by the same
//! time-local generator as `ρ`. Lags are multiples of the anchor spacing
//! `h = T/K`, so every propagation reuses the `K` anchor maps of one period.

use ndarray::Array2;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::dynamics::{self, Mode, Model, PeriodicState, PropagationConfig, PropagationDiagnostics};
use crate::hilbert::{dagger, SystemParams};
use crate::superop::{Liouvillian, Sector};
use crate::{Error, Result, C64};

/// `|C̄(τ_max)| / |C̄(0)|` above which the spectrum is flagged as truncated.
pub const TAIL_WARNING_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationConfig {
    /// Longest lag; `None` picks `16 / min(γ_cav, γ_ge)`.
    pub tau_max: Option<f64>,
    pub omega_min: f64,
    pub omega_max: f64,
    /// Frequency spacing upper bound; `None` picks `min(γ_cav, γ_ge) / 10`.
    pub resolution: Option<f64>,
    /// Optional `e^{−η τ}` apodization of the lag window.
    pub window_rate: Option<f64>,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        CorrelationConfig {
            tau_max: None,
            omega_min: -4.0,
            omega_max: 4.0,
            resolution: None,
            window_rate: None,
        }
    }
}

impl CorrelationConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x.is_finite() && x > 0.0) => {
                Err(Error::InvalidConfig(format!("{name} must be > 0, got {x}")))
            }
            _ => Ok(()),
        };
        positive("tau_max", self.tau_max)?;
        positive("resolution", self.resolution)?;
        if let Some(eta) = self.window_rate {
            if !(eta.is_finite() && eta >= 0.0) {
                return Err(Error::InvalidConfig(format!("window_rate must be >= 0, got {eta}")));
            }
        }
        if !(self.omega_min.is_finite() && self.omega_max.is_finite() && self.omega_min < self.omega_max) {
            return Err(Error::InvalidConfig(format!(
                "omega range [{}, {}] is empty",
                self.omega_min, self.omega_max
            )));
        }
        Ok(())
    }

    pub fn tau_max_for(&self, params: &SystemParams) -> f64 {
        self.tau_max
            .unwrap_or(16.0 / params.gamma_cav.min(params.gamma_ge))
    }

    pub fn resolution_for(&self, params: &SystemParams) -> f64 {
        self.resolution
            .unwrap_or(params.gamma_cav.min(params.gamma_ge) / 10.0)
    }
}

/// `C(t_k, τ_j)` on the anchors of one period and a uniform lag grid
/// `τ_j = j · tau_step`.
#[derive(Debug, Clone)]
pub struct CorrelationGrid {
    pub t_anchors: Vec<f64>,
    pub tau_step: f64,
    /// `values[k][j] = C(t_k, τ_j)`
    pub values: Vec<Vec<C64>>,
    /// Average over anchors, `C̄(τ_j)`.
    pub averaged: Vec<C64>,
}

impl CorrelationGrid {
    pub fn len(&self) -> usize {
        self.averaged.len()
    }

    pub fn is_empty(&self) -> bool {
        self.averaged.is_empty()
    }

    pub fn tau_grid(&self) -> Vec<f64> {
        (0..self.len()).map(|j| j as f64 * self.tau_step).collect()
    }

    pub fn tau_max(&self) -> f64 {
        (self.len().saturating_sub(1)) as f64 * self.tau_step
    }

    pub fn tail_ratio(&self) -> f64 {
        let first = self.averaged[0].norm();
        let last = self.averaged[self.len() - 1].norm();
        if first == 0.0 {
            0.0
        } else {
            last / first
        }
    }
}

/// Period maps `P_k` starting at every anchor, from prefix and suffix
/// products of the anchor maps.
fn all_period_maps(maps: &[Array2<C64>]) -> Vec<Array2<C64>> {
    let k_count = maps.len();
    let n = maps[0].nrows();
    let mut pre = vec![Array2::<C64>::eye(n)];
    for m in maps {
        let next = m.dot(pre.last().unwrap());
        pre.push(next);
    }
    let mut suf = vec![Array2::<C64>::eye(n); k_count + 1];
    for k in (0..k_count).rev() {
        suf[k] = suf[k + 1].dot(&maps[k]);
    }
    (0..k_count).map(|k| pre[k].dot(&suf[k])).collect()
}

/// Steady-state `C(t_k, τ)` for every sample of `state`.
pub fn two_time_correlation(model: &Model, state: &PeriodicState, config: &CorrelationConfig) -> Result<CorrelationGrid> {
    config.validate()?;
    if !state.converged {
        return Err(Error::InvalidParams(
            "two-time correlations need a converged periodic state".into(),
        ));
    }
    let k_count = state.samples.len();
    let period = state.period;
    let h = period / k_count as f64;
    let steps_per_anchor = state.steps_per_period / k_count;
    let periods = ((config.tau_max_for(&model.params) + h) / period).ceil() as usize;

    let a = &model.a;
    let seeds: Vec<_> = state.samples.iter().map(|(_, r)| a.dot(&r.entries)).collect();
    let mut sector = Sector::for_operator(&seeds[0], model);
    if seeds.iter().any(|b| sector.leakage(b) > 0.0) {
        sector = Sector::full(model.dim());
    }
    let liou = Liouvillian::build(model, state.mode, sector)?;
    let maps = liou.anchor_maps(period, k_count, steps_per_anchor);
    let full_periods = all_period_maps(&maps);
    let sector = &liou.sector;
    let w = sector.trace_functional(&dagger(a));

    // readout[k] row j = w · M_{k+j−1} ⋯ M_k: C after j partial steps from anchor k
    let mut readout: Vec<Array2<C64>> = vec![Array2::zeros((k_count, sector.len())); k_count];
    for e in 0..k_count {
        let mut v = w.clone();
        for j in 0..k_count {
            let k = (e + k_count - j) % k_count;
            readout[k].row_mut(j).assign(&v);
            if j + 1 < k_count {
                v = v.dot(&maps[(e + 2 * k_count - j - 1) % k_count]);
            }
        }
    }

    let values: Vec<Vec<C64>> = (0..k_count)
        .into_par_iter()
        .map(|k| {
            let mut z = sector.pack(&seeds[k]);
            let mut out = Vec::with_capacity(periods * k_count);
            for _ in 0..periods {
                out.extend(readout[k].dot(&z));
                z = full_periods[k].dot(&z);
            }
            out
        })
        .collect();

    let len = periods * k_count;
    let mut averaged = vec![C64::new(0.0, 0.0); len];
    for row in &values {
        for (acc, v) in averaged.iter_mut().zip(row) {
            *acc += v;
        }
    }
    for v in &mut averaged {
        *v /= k_count as f64;
    }
    if let Some(j) = averaged.iter().position(|z| !z.is_finite()) {
        return Err(Error::NonFinite { t: j as f64 * h });
    }
    Ok(CorrelationGrid {
        t_anchors: state.samples.iter().map(|(t, _)| *t).collect(),
        tau_step: h,
        values,
        averaged,
    })
}

/// Intracavity spectrum on a uniform frequency grid.
///
/// `omega`/`g` cover the requested window; `band_omega`/`band_g` cover the
/// whole lag-grid band `(−π/h, π/h)` and are what frequency integrals use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntracavitySpectrum {
    pub omega: Vec<f64>,
    pub g: Vec<f64>,
    #[serde(skip)]
    pub band_omega: Vec<f64>,
    #[serde(skip)]
    pub band_g: Vec<f64>,
    /// Largest `|Im G|` relative to `max |G|` before the real part was kept.
    pub imag_residual: f64,
    pub resolution: f64,
}

/// `G(ω) = ∫ dτ e^{−iωτ} C̄(τ)` with `C̄(−τ) = C̄(τ)*`, by zero-padded FFT.
pub fn intracavity_spectrum(corr: &CorrelationGrid, config: &CorrelationConfig, params: &SystemParams) -> Result<IntracavitySpectrum> {
    config.validate()?;
    let h = corr.tau_step;
    let nyquist = PI / h;
    if config.omega_min.abs().max(config.omega_max.abs()) >= nyquist {
        return Err(Error::InvalidConfig(format!(
            "omega range exceeds the lag-grid Nyquist frequency {nyquist}"
        )));
    }
    let n = corr.len();
    let needed = (2.0 * PI / (h * config.resolution_for(params))).ceil() as usize;
    let len = needed.max(2 * n).next_power_of_two();

    let mut x = vec![C64::new(0.0, 0.0); len];
    for (j, &c) in corr.averaged.iter().enumerate() {
        let weight = config.window_rate.map_or(1.0, |eta| (-eta * j as f64 * h).exp());
        let c = c * weight;
        if j == 0 {
            x[0] = C64::new(c.re, 0.0);
        } else {
            x[j] = c;
            x[len - j] = c.conj();
        }
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut x);

    let d_omega = 2.0 * PI / (len as f64 * h);
    let half = (len / 2) as i64;
    let mut band_omega = Vec::with_capacity(len);
    let mut band_g = Vec::with_capacity(len);
    let mut max_re = 0.0f64;
    let mut max_im = 0.0f64;
    for m in (1 - half)..half {
        let z = x[m.rem_euclid(len as i64) as usize] * h;
        band_omega.push(m as f64 * d_omega);
        band_g.push(z.re);
        max_re = max_re.max(z.re.abs());
        max_im = max_im.max(z.im.abs());
    }
    let lo = band_omega.partition_point(|&w| w < config.omega_min);
    let hi = band_omega.partition_point(|&w| w <= config.omega_max);
    Ok(IntracavitySpectrum {
        omega: band_omega[lo..hi].to_vec(),
        g: band_g[lo..hi].to_vec(),
        band_omega,
        band_g,
        imag_residual: if max_re > 0.0 { max_im / max_re } else { max_im },
        resolution: d_omega,
    })
}

/// Spectral filter `γ_cav(ω)/γ_cav` of the extracavity field: a step for
/// the colored bath, flat for the white one.
pub fn emission_filter(omega: f64, mode: Mode) -> f64 {
    match mode {
        Mode::Markovian => 1.0,
        Mode::Tcl2 if omega > 0.0 => 1.0,
        Mode::Tcl2 if omega == 0.0 => 0.5,
        Mode::Tcl2 => 0.0,
    }
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub mode: Mode,
    pub params: SystemParams,
    pub propagation: PropagationConfig,
    pub correlation: CorrelationConfig,
    pub omega: Vec<f64>,
    /// Intracavity spectrum `G(ω)`.
    pub g: Vec<f64>,
    /// Extracavity photons per unit time and unit frequency, `S(ω)`.
    pub s: Vec<f64>,
    pub r_em: f64,
    /// Period-averaged intracavity photon number.
    pub n_in: f64,
    pub tau_max: f64,
    pub tail_ratio: f64,
    pub warnings: Vec<String>,
}

/// `S(ω) = (γ_cav/2π) filter(ω) G(ω)` on the window, and `R_em = ∫ S dω`
/// over the full band.
pub fn emission_spectrum(
    spectrum: &IntracavitySpectrum,
    corr: &CorrelationGrid,
    state: &PeriodicState,
    model: &Model,
    propagation: &PropagationConfig,
    correlation: &CorrelationConfig,
) -> SpectrumResult {
    let params = model.params;
    let mode = state.mode;
    let density = |omega: &[f64], g: &[f64]| -> Vec<f64> {
        omega
            .iter()
            .zip(g)
            .map(|(&w, &g)| params.gamma_cav / (2.0 * PI) * emission_filter(w, mode) * g)
            .collect()
    };
    let s = density(&spectrum.omega, &spectrum.g);
    let r_em = trapezoid(&spectrum.band_omega, &density(&spectrum.band_omega, &spectrum.band_g));
    let n_in = state.time_average(&model.photon_number()).re;

    let mut warnings = Vec::new();
    let tail = corr.tail_ratio();
    if tail > TAIL_WARNING_RATIO {
        warnings.push(format!(
            "correlation tail |C(tau_max)|/|C(0)| = {tail:.3e} exceeds {TAIL_WARNING_RATIO:e}; increase tau_max"
        ));
    }
    if spectrum.imag_residual > 1e-10 {
        warnings.push(format!("G(omega) imaginary residual {:.3e}", spectrum.imag_residual));
    }
    let s_max = s.iter().cloned().fold(0.0f64, f64::max);
    let s_min = s.iter().cloned().fold(0.0f64, f64::min);
    if s_min < -1e-12 * s_max {
        warnings.push(format!("S(omega) dips to {s_min:.3e} (max {s_max:.3e})"));
    }
    if !state.converged {
        warnings.push("steady state did not converge".into());
    }
    SpectrumResult {
        mode,
        params,
        propagation: *propagation,
        correlation: *correlation,
        omega: spectrum.omega.clone(),
        g: spectrum.g.clone(),
        s,
        r_em,
        n_in,
        tau_max: corr.tau_max(),
        tail_ratio: tail,
        warnings,
    }
}

/// Periodic steady state plus its emission spectrum.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub spectrum: SpectrumResult,
    pub converged: bool,
    pub periods: usize,
    pub last_change: f64,
    pub diagnostics: PropagationDiagnostics,
}

/// Full pipeline from the dressed ground state: propagation to the periodic
/// state, correlations, spectra, `R_em` and `N_in`.
pub fn simulate(
    params: &SystemParams,
    mode: Mode,
    propagation: &PropagationConfig,
    correlation: &CorrelationConfig,
) -> Result<Simulation> {
    let model = Model::new(*params)?;
    simulate_model(&model, mode, propagation, correlation)
}

pub fn simulate_model(
    model: &Model,
    mode: Mode,
    propagation: &PropagationConfig,
    correlation: &CorrelationConfig,
) -> Result<Simulation> {
    correlation.validate()?;
    let state = dynamics::propagate(model, &model.dressed.ground_state(), propagation, mode)?;
    let corr = two_time_correlation(model, &state, correlation)?;
    let g = intracavity_spectrum(&corr, correlation, &model.params)?;
    let spectrum = emission_spectrum(&g, &corr, &state, model, propagation, correlation);
    Ok(Simulation {
        spectrum,
        converged: state.converged,
        periods: state.periods,
        last_change: state.last_change,
        diagnostics: state.diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{self, DensityMatrix};
    use crate::Operator;
    use approx::assert_abs_diff_eq;

    fn quick_config(p: &SystemParams) -> PropagationConfig {
        PropagationConfig { samples_per_period: 16, ..PropagationConfig::defaults_for(p) }
    }

    fn small(p: SystemParams) -> SystemParams {
        SystemParams { n_max: 3, ..p }
    }

    #[test]
    fn zero_lag_value_is_photon_number() {
        let p = small(SystemParams { gamma_cav: 0.02, gamma_ge: 0.02, delta_g: 0.002, ..SystemParams::reference() });
        let m = Model::new(p).unwrap();
        let cfg = quick_config(&p);
        let state = dynamics::propagate(&m, &m.dressed.ground_state(), &cfg, Mode::Tcl2).unwrap();
        let corr = two_time_correlation(&m, &state, &CorrelationConfig::default()).unwrap();
        let n = m.photon_number();
        for (k, (_, rho)) in state.samples.iter().enumerate() {
            let expected = rho.expectation(&n);
            assert!((corr.values[k][0] - expected).norm() < 1e-14);
            assert!(expected.re >= 0.0);
        }
        assert!(corr.tail_ratio() < TAIL_WARNING_RATIO);
    }

    #[test]
    fn lags_match_direct_matrix_propagation() {
        // oracle: step B = â ρ(t_k) with the matrix generator, read Tr[â† B]
        let p = SystemParams { n_max: 2, gamma_cav: 0.004, delta_g: 0.001, ..SystemParams::reference() };
        let m = Model::new(p).unwrap();
        let cfg = PropagationConfig { samples_per_period: 8, ..PropagationConfig::defaults_for(&p) };
        let mut start = Operator::zeros((p.dim(), p.dim()));
        for k in 0..p.dim() {
            start[[k, k]] = C64::from(1.0 / p.dim() as f64);
        }
        let state = dynamics::propagate(&m, &DensityMatrix::new(start), &cfg, Mode::Tcl2).unwrap();
        let corr = two_time_correlation(&m, &state, &CorrelationConfig { tau_max: Some(30.0), ..Default::default() }).unwrap();
        let dt = cfg.effective_dt(&p);
        let steps_per_anchor = state.steps_per_period / 8;
        let a_dag = dagger(&m.a);
        for k in [0usize, 3, 7] {
            let (t0, rho) = &state.samples[k];
            let mut b = m.a.dot(&rho.entries);
            let mut t = *t0;
            for j in 0..corr.len().min(40) {
                let c = a_dag.dot(&b).diag().sum();
                assert!((c - corr.values[k][j]).norm() < 1e-12, "k={k} j={j}");
                for _ in 0..steps_per_anchor {
                    let k1 = m.rhs(&b, t, Mode::Tcl2);
                    let k2 = m.rhs(&(&b + &(&k1 * C64::from(0.5 * dt))), t + 0.5 * dt, Mode::Tcl2);
                    let k3 = m.rhs(&(&b + &(&k2 * C64::from(0.5 * dt))), t + 0.5 * dt, Mode::Tcl2);
                    let k4 = m.rhs(&(&b + &(&k3 * C64::from(dt))), t + dt, Mode::Tcl2);
                    b = &b + &((k1 + (k2 + k3) * C64::from(2.0) + k4) * C64::from(dt / 6.0));
                    t += dt;
                }
            }
        }
    }

    #[test]
    fn uncoupled_photon_gives_lorentzian_at_cavity_frequency() {
        // g₀ → 0 and ρ = |1,g⟩⟨1,g|: C(τ) = e^{(iω₀ − γ/2)τ}, a Lorentzian of FWHM γ at +ω₀
        let p = SystemParams { n_max: 2, g_0: 1e-300, delta_g: 0.0, omega_ge: 1.3, gamma_cav: 0.01, gamma_ge: 0.01, ..SystemParams::reference() };
        let m = Model::new(p).unwrap();
        let cfg = PropagationConfig { samples_per_period: 8, ..PropagationConfig::defaults_for(&p) };
        let rho = DensityMatrix::bare(&p, 1, 0);
        let state = PeriodicState {
            mode: Mode::Tcl2,
            period: p.period(),
            samples: (0..8).map(|k| (k as f64 * p.period() / 8.0, rho.clone())).collect(),
            converged: true,
            periods: 0,
            steps_per_period: cfg.steps_per_period(&p),
            last_change: 0.0,
            diagnostics: PropagationDiagnostics { max_trace_drift: 0.0, max_hermiticity_error: 0.0, min_eigenvalue: 0.0, rk4_steps: 0 },
        };
        let ccfg = CorrelationConfig::default();
        let corr = two_time_correlation(&m, &state, &ccfg).unwrap();
        // non-secular pieces of the generator perturb the pure exponential at O(γ/ω₀)
        for (j, tau) in corr.tau_grid().into_iter().enumerate().step_by(97) {
            let exact = (C64::new(-0.5 * p.gamma_cav, p.omega_0) * tau).exp();
            assert!((corr.averaged[j] - exact).norm() < 0.1 * p.gamma_cav / p.omega_0, "tau={tau}");
        }
        let g = intracavity_spectrum(&corr, &ccfg, &p).unwrap();
        let curve: Vec<(f64, f64)> = g.omega.iter().cloned().zip(g.g.iter().cloned()).collect();
        let top = g.g.iter().cloned().fold(0.0, f64::max);
        let peaks = crate::analysis::find_peaks_above(&curve, 0.01 * top);
        assert_eq!(peaks.len(), 1, "{peaks:?}");
        assert!((peaks[0].position - p.omega_0).abs() < p.gamma_cav / 20.0);
        let width = peaks[0].width.unwrap();
        assert!((width - p.gamma_cav).abs() < 0.05 * p.gamma_cav, "{width}");
        // peak height of ∫ e^{−iωτ} C(τ) dτ is 4/γ
        assert!((peaks[0].height * p.gamma_cav / 4.0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn parseval_and_null_emission_without_modulation() {
        let p = SystemParams { n_max: 4, delta_g: 0.0, ..SystemParams::reference() };
        let ccfg = CorrelationConfig::default();
        let sim = simulate(&p, Mode::Tcl2, &quick_config(&p), &ccfg).unwrap();
        let res = &sim.spectrum;
        let total = trapezoid(&res.omega, &res.g) / (2.0 * PI);
        assert!((total / res.n_in - 1.0).abs() < 0.01, "{total} vs {}", res.n_in);
        let virtual_n = hilbert::ground_state_photon_number(&p).unwrap();
        assert_abs_diff_eq!(res.n_in, virtual_n, epsilon = 1e-12);
        assert!(res.r_em.abs() < 1e-10, "{}", res.r_em);
        // the virtual-photon weight sits at negative frequency
        let (w, g): (Vec<f64>, Vec<f64>) = res.omega.iter().zip(&res.g).filter(|(w, _)| **w < 0.0).map(|(w, g)| (*w, *g)).unzip();
        assert!((trapezoid(&w, &g) / (2.0 * PI * res.n_in) - 1.0).abs() < 0.01);
    }

    #[test]
    fn markovian_rate_equals_loss_times_photon_number() {
        let p = SystemParams { n_max: 4, delta_g: 0.0, ..SystemParams::reference() };
        let sim = simulate(&p, Mode::Markovian, &quick_config(&p), &CorrelationConfig::default()).unwrap();
        let res = &sim.spectrum;
        assert!(res.r_em > 1e-8);
        assert!((res.r_em / (p.gamma_cav * res.n_in) - 1.0).abs() < 0.01);
    }

    #[test]
    fn finer_frequency_grid_leaves_rate_unchanged() {
        let p = small(SystemParams { gamma_cav: 0.01, gamma_ge: 0.01, delta_g: 0.001, ..SystemParams::reference() });
        let m = Model::new(p).unwrap();
        let cfg = quick_config(&p);
        let state = dynamics::propagate(&m, &m.dressed.ground_state(), &cfg, Mode::Tcl2).unwrap();
        let coarse = CorrelationConfig::default();
        let corr = two_time_correlation(&m, &state, &coarse).unwrap();
        let fine = CorrelationConfig { resolution: Some(coarse.resolution_for(&p) / 2.0), ..coarse };
        let rate = |c: &CorrelationConfig| {
            let g = intracavity_spectrum(&corr, c, &p).unwrap();
            emission_spectrum(&g, &corr, &state, &m, &cfg, c).r_em
        };
        let (a, b) = (rate(&coarse), rate(&fine));
        assert!(a > 0.0);
        assert!(((a - b) / a).abs() < 5e-3);
    }

    #[test]
    fn unconverged_state_rejected() {
        let p = small(SystemParams::reference());
        let m = Model::new(p).unwrap();
        let cfg = PropagationConfig { max_periods: 1, solve_fixed_point: false, ..quick_config(&p) };
        let state = dynamics::propagate(&m, &m.dressed.ground_state(), &cfg, Mode::Tcl2).unwrap();
        assert!(!state.converged);
        assert!(two_time_correlation(&m, &state, &CorrelationConfig::default()).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(CorrelationConfig::default().validate().is_ok());
        assert!(CorrelationConfig { tau_max: Some(-1.0), ..Default::default() }.validate().is_err());
        assert!(CorrelationConfig { omega_min: 1.0, omega_max: 0.0, ..Default::default() }.validate().is_err());
        assert!(CorrelationConfig { window_rate: Some(f64::NAN), ..Default::default() }.validate().is_err());
    }

    #[test]
    fn filter_and_trapezoid() {
        assert_eq!(emission_filter(-0.1, Mode::Tcl2), 0.0);
        assert_eq!(emission_filter(0.0, Mode::Tcl2), 0.5);
        assert_eq!(emission_filter(-0.1, Mode::Markovian), 1.0);
        assert_abs_diff_eq!(trapezoid(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]), 2.0);
    }
}
