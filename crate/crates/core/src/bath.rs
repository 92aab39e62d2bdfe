//! Colored dissipation baths and the integral operators `Û_j`.
//!
//! Each channel couples through `Ŝ_j` (`â + â†` or `ĉ + ĉ†`) to a bath with
//! rate `γ_j(ω) = γ_j Θ(ω)`. In the dressed basis of the static Hamiltonian
//! `(Û_j)_{ab} = (Ŝ_j)_{ab} K(ω_a − ω_b)`, where `K` is the half-sided Fourier
//! transform of the bath correlation function. With an empty bath, `K`
//! vanishes for upward transitions, so the dressed vacuum cannot emit.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::hilbert::{self, DressedBasis, SystemParams};
use crate::{Error, Operator, Result, C64};

/// Energy differences below this (relative to the spectral scale) count as
/// exactly degenerate and take the `Δ = 0` boundary value of the kernel.
pub const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Cavity,
    Qubit,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Cavity => "cavity",
            Channel::Qubit => "qubit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    pub channel: Channel,
    pub rate: f64,
    pub occupancy: f64,
    pub cutoff: f64,
    pub include_lamb_shift: bool,
}

impl BathSpec {
    pub fn new(channel: Channel, rate: f64) -> Self {
        BathSpec {
            channel,
            rate,
            occupancy: 0.0,
            cutoff: 10.0,
            include_lamb_shift: false,
        }
    }

    /// Default cavity and qubit baths for a parameter set.
    pub fn defaults_for(params: &SystemParams) -> Vec<BathSpec> {
        vec![
            BathSpec::new(Channel::Cavity, params.gamma_cav),
            BathSpec::new(Channel::Qubit, params.gamma_ge),
        ]
    }

    /// `max_transition` is the largest dressed transition frequency the
    /// kernel will be evaluated at.
    pub fn validate(&self, max_transition: f64) -> Result<()> {
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(Error::InvalidParams(format!("bath rate must be > 0, got {}", self.rate)));
        }
        if !(self.occupancy.is_finite() && self.occupancy >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "bath occupancy must be >= 0, got {}",
                self.occupancy
            )));
        }
        if !(self.cutoff.is_finite() && self.cutoff > 0.0) {
            return Err(Error::InvalidParams(format!("bath cutoff must be > 0, got {}", self.cutoff)));
        }
        if self.include_lamb_shift && self.cutoff <= max_transition {
            return Err(Error::InvalidParams(format!(
                "cutoff {} must exceed the largest transition frequency {max_transition}",
                self.cutoff
            )));
        }
        Ok(())
    }

    /// Kernel of the white (frequency-independent) bath.
    pub fn white_kernel(&self) -> C64 {
        C64::from(0.5 * self.rate * (2.0 * self.occupancy + 1.0))
    }
}

/// `Ŝ_j` for a channel.
pub fn system_coupling(channel: Channel, params: &SystemParams) -> Result<Operator> {
    let op = match channel {
        Channel::Cavity => hilbert::build_cavity_annihilation(params)?,
        Channel::Qubit => hilbert::build_qubit_lowering(params)?,
    };
    Ok(&op + &hilbert::dagger(&op))
}

// PV ∫₀^{ω_c} dω / (ω + x)
fn principal_log(x: f64, cutoff: f64) -> Result<f64> {
    if x == 0.0 || x + cutoff == 0.0 {
        return Err(Error::Quadrature(format!(
            "principal value integral is singular at an endpoint (shift {x})"
        )));
    }
    Ok(((cutoff + x) / x).abs().ln())
}

/// `K(Δ) = ∫₀^∞ v_j(τ) e^{−iΔτ} dτ` for the step-function spectral density.
///
/// Real part: `γ/2 · [(n̄+1) Θ(−Δ) + n̄ Θ(Δ)]`, with the boundary value
/// `γ/4 · (2n̄+1)` at `Δ = 0`. The imaginary part is the principal-value
/// Lamb-shift term and is only evaluated when the bath asks for it.
pub fn half_fourier_kernel(delta: f64, bath: &BathSpec) -> Result<C64> {
    let gamma = bath.rate;
    let nbar = bath.occupancy;
    let re = if delta < 0.0 {
        0.5 * gamma * (nbar + 1.0)
    } else if delta > 0.0 {
        0.5 * gamma * nbar
    } else {
        0.25 * gamma * (2.0 * nbar + 1.0)
    };
    if !bath.include_lamb_shift {
        return Ok(C64::new(re, 0.0));
    }
    // emission term −(γ/2π)(n̄+1) PV∫ dω/(ω+Δ); absorption term +(γ/2π) n̄ PV∫ dω/(ω−Δ)
    let mut im = -(gamma / (2.0 * PI)) * (nbar + 1.0) * principal_log(delta, bath.cutoff)?;
    if nbar > 0.0 {
        im += (gamma / (2.0 * PI)) * nbar * principal_log(-delta, bath.cutoff)?;
    }
    Ok(C64::new(re, im))
}

/// Builds `Û_j` from `Ŝ_j` by weighting dressed matrix elements with the
/// kernel evaluated at their transition frequency; returned in the bare basis.
pub fn build_u(system_op: &Operator, dressed: &DressedBasis, bath: &BathSpec) -> Result<Operator> {
    build_u_with(system_op, dressed, |delta| half_fourier_kernel(delta, bath))
}

/// `(γ_j/2) Ŝ_j`-type operator of the white bath.
pub fn build_u_white(system_op: &Operator, bath: &BathSpec) -> Operator {
    system_op * bath.white_kernel()
}

fn build_u_with<F>(system_op: &Operator, dressed: &DressedBasis, kernel: F) -> Result<Operator>
where
    F: Fn(f64) -> Result<C64>,
{
    let dim = dressed.dim();
    if system_op.nrows() != dim || system_op.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: system_op.nrows().max(system_op.ncols()),
        });
    }
    let energies = &dressed.eigenvalues;
    let scale = energies.iter().fold(1.0f64, |m, e| m.max(e.abs()));
    let mut s = dressed.to_dressed(system_op);
    for a in 0..dim {
        for b in 0..dim {
            if s[[a, b]] == C64::new(0.0, 0.0) {
                continue;
            }
            let mut delta = energies[a] - energies[b];
            if delta.abs() <= DEGENERACY_TOL * scale {
                delta = 0.0;
            }
            s[[a, b]] *= kernel(delta)?;
        }
    }
    Ok(dressed.to_bare(&s))
}

/// Bath correlation `v_j(τ)` by direct quadrature over `ω ∈ [0, ω_c]`.
///
/// Composite Gauss–Legendre; used to cross-check the analytic kernel.
pub fn bath_correlation(tau: f64, bath: &BathSpec) -> C64 {
    let nbar = bath.occupancy;
    let integrand = |w: f64| {
        let phase = C64::new(0.0, w * tau).exp();
        phase * nbar + phase.conj() * (nbar + 1.0)
    };
    let panels = ((bath.cutoff * tau.abs() / PI).ceil() as usize * 4).max(16);
    let h = bath.cutoff / panels as f64;
    let mut total = C64::new(0.0, 0.0);
    for k in 0..panels {
        let mid = (k as f64 + 0.5) * h;
        for (x, w) in GL5_NODES.iter().zip(GL5_WEIGHTS.iter()) {
            total += integrand(mid + 0.5 * h * x) * (0.5 * h * w);
        }
    }
    total * (bath.rate / (2.0 * PI))
}

const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{build_cavity_annihilation, build_qubit_lowering, diagonalize_static, max_abs};
    use approx::assert_abs_diff_eq;

    fn cav(rate: f64) -> BathSpec {
        BathSpec::new(Channel::Cavity, rate)
    }

    // Re ∫₀^{ω_c} dω (γ/2π) ε / (ε² + (ω+Δ)²), the ε-regularized τ-integral
    // done analytically in τ and numerically in ω.
    fn regularized_kernel_re(delta: f64, gamma: f64, cutoff: f64, eps: f64) -> f64 {
        let n = 400_000;
        let h = cutoff / n as f64;
        let f = |w: f64| eps / (eps * eps + (w + delta).powi(2));
        let mut sum = 0.5 * (f(0.0) + f(cutoff));
        for k in 1..n {
            sum += f(k as f64 * h);
        }
        gamma / (2.0 * PI) * sum * h
    }

    #[test]
    fn kernel_against_regularized_quadrature() {
        let gamma = 0.002;
        for &(delta, expect) in &[(-1.0, 0.5 * gamma), (1.0, 0.0)] {
            let oracle = regularized_kernel_re(delta, gamma, 10.0, 1e-4);
            assert_abs_diff_eq!(oracle, expect, epsilon = 1e-7);
            let k = half_fourier_kernel(delta, &cav(gamma)).unwrap();
            assert_abs_diff_eq!(k.re, oracle, epsilon = 1e-7);
            assert_eq!(k.im, 0.0);
        }
        assert_eq!(half_fourier_kernel(0.0, &cav(gamma)).unwrap(), C64::new(gamma / 4.0, 0.0));
    }

    #[test]
    fn lamb_shift_matches_log_and_flags_singularity() {
        let bath = BathSpec { include_lamb_shift: true, ..cav(0.002) };
        let k = half_fourier_kernel(-1.0, &bath).unwrap();
        assert_abs_diff_eq!(k.im, -(0.002 / (2.0 * PI)) * (9.0f64).ln(), epsilon = 1e-15);
        assert!(matches!(half_fourier_kernel(0.0, &bath), Err(Error::Quadrature(_))));
        assert!(matches!(half_fourier_kernel(-10.0, &bath), Err(Error::Quadrature(_))));
    }

    #[test]
    fn thermal_occupancy_opens_absorption() {
        let bath = BathSpec { occupancy: 0.5, ..cav(0.002) };
        assert_abs_diff_eq!(half_fourier_kernel(-1.0, &bath).unwrap().re, 0.0015);
        assert_abs_diff_eq!(half_fourier_kernel(1.0, &bath).unwrap().re, 0.0005);
        assert_abs_diff_eq!(bath.white_kernel().re, 0.002);
    }

    #[test]
    fn bath_validation() {
        assert!(cav(0.0).validate(3.0).is_err());
        assert!(BathSpec { occupancy: -1.0, ..cav(1e-3) }.validate(3.0).is_err());
        let lamb = BathSpec { include_lamb_shift: true, cutoff: 2.0, ..cav(1e-3) };
        assert!(lamb.validate(3.0).is_err());
        assert!(lamb.validate(1.5).is_ok());
    }

    #[test]
    fn correlation_at_zero_lag_and_symmetry() {
        let bath = cav(0.002);
        let v0 = bath_correlation(0.0, &bath);
        assert_abs_diff_eq!(v0.re, 0.002 * 10.0 / (2.0 * PI), epsilon = 1e-15);
        assert_abs_diff_eq!(v0.im, 0.0);
        for &tau in &[0.3, 2.0, 17.5] {
            let plus = bath_correlation(tau, &bath);
            let minus = bath_correlation(-tau, &bath);
            assert_abs_diff_eq!(plus.re, minus.re, epsilon = 1e-15);
            assert_abs_diff_eq!(plus.im, -minus.im, epsilon = 1e-15);
            // closed form (γ/2π)(1 − e^{−iω_c τ})/(iτ)
            let exact = (C64::new(1.0, 0.0) - C64::new(0.0, -10.0 * tau).exp()) / C64::new(0.0, tau)
                * (0.002 / (2.0 * PI));
            assert_abs_diff_eq!((plus - exact).norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn truncated_lag_integral_approaches_kernel() {
        // ∫₀^T v(τ) e^{−iΔτ} dτ with a large cutoff, Δ < 0: real part → γ/2
        let gamma = 0.002;
        let bath = BathSpec { cutoff: 20.0, ..cav(gamma) };
        let delta = -1.0;
        let t_max = 100.0;
        let n = 10_000;
        let h = t_max / n as f64;
        let f = |tau: f64| bath_correlation(tau, &bath) * C64::new(0.0, -delta * tau).exp();
        let mut sum = (f(0.0) + f(t_max)) * 0.5;
        for k in 1..n {
            sum += f(k as f64 * h);
        }
        let approx = sum * h;
        assert_abs_diff_eq!(approx.re, gamma / 2.0, epsilon = 0.01 * gamma);
    }

    #[test]
    fn uncoupled_limit_keeps_only_bare_lowering() {
        let p = SystemParams { g_0: 1e-300, delta_g: 0.0, omega_ge: 1.2, ..SystemParams::reference() };
        let dressed = diagonalize_static(&p).unwrap();
        let a = build_cavity_annihilation(&p).unwrap();
        let c = build_qubit_lowering(&p).unwrap();

        let s_cav = system_coupling(Channel::Cavity, &p).unwrap();
        let u_cav = build_u(&s_cav, &dressed, &cav(p.gamma_cav)).unwrap();
        assert!(max_abs(&(u_cav - &a * C64::from(p.gamma_cav / 2.0))) < 1e-15);

        let s_ge = system_coupling(Channel::Qubit, &p).unwrap();
        let u_ge = build_u(&s_ge, &dressed, &BathSpec::new(Channel::Qubit, p.gamma_ge)).unwrap();
        assert!(max_abs(&(u_ge - &c * C64::from(p.gamma_ge / 2.0))) < 1e-15);
    }

    #[test]
    fn masking_bounds_the_frobenius_norm() {
        let p = SystemParams::reference();
        let dressed = diagonalize_static(&p).unwrap();
        for channel in [Channel::Cavity, Channel::Qubit] {
            let s = system_coupling(channel, &p).unwrap();
            let bath = BathSpec::new(channel, 0.002);
            let u = build_u(&s, &dressed, &bath).unwrap();
            let fro = |m: &Operator| m.iter().map(|z| z.norm_sqr()).sum::<f64>();
            let bound = 0.25 * 0.002f64.powi(2) * fro(&s);
            // S is Hermitian with zero dressed diagonal, so masking drops half the weight.
            assert!(fro(&u) <= bound * (1.0 + 1e-12));
            assert_abs_diff_eq!(fro(&u), 0.5 * bound, epsilon = 1e-12 * bound);
        }
    }

    #[test]
    fn upward_dressed_elements_vanish() {
        let p = SystemParams::reference();
        let dressed = diagonalize_static(&p).unwrap();
        let s = system_coupling(Channel::Cavity, &p).unwrap();
        let u = dressed.to_dressed(&build_u(&s, &dressed, &cav(0.002)).unwrap());
        for a in 0..p.dim() {
            for b in 0..p.dim() {
                if dressed.eigenvalues[a] > dressed.eigenvalues[b] + 1e-9 {
                    assert!(u[[a, b]].norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn white_bath_is_scaled_coupling() {
        let p = SystemParams::reference();
        let s = system_coupling(Channel::Qubit, &p).unwrap();
        let bath = BathSpec::new(Channel::Qubit, 0.002);
        let u = build_u_white(&s, &bath);
        assert!(max_abs(&(u - &s * C64::from(0.001))) == 0.0);
        // and the dressed construction with a flat kernel reproduces it
        let dressed = diagonalize_static(&p).unwrap();
        let flat = build_u_with(&s, &dressed, |_| Ok(C64::from(0.001))).unwrap();
        assert!(max_abs(&(flat - &s * C64::from(0.001))) < 1e-15);
    }

    #[test]
    fn dimension_mismatch_reported() {
        let p = SystemParams::reference();
        let dressed = diagonalize_static(&p).unwrap();
        let small = Operator::zeros((4, 4));
        assert!(matches!(
            build_u(&small, &dressed, &cav(0.002)),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
