//! Closed-form ladder and two-state-model results, and peak extraction for
//! sweep curves.

use serde::{Deserialize, Serialize};

use crate::hilbert::SystemParams;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

/// Level `|n, ±⟩` of the resonant rotating-wave ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderLevel {
    pub n: usize,
    pub branch: Branch,
    pub energy: f64,
}

/// `E_{n,±} = n ω₀ ± √n g₀`.
pub fn ladder_energy(n: usize, branch: Branch, params: &SystemParams) -> Result<LadderLevel> {
    if n == 0 {
        return Err(Error::InvalidParams("ladder rung n must be >= 1".into()));
    }
    let scale = params.omega_0.abs().max(params.omega_ge.abs());
    if (params.omega_0 - params.omega_ge).abs() > 1e-12 * scale {
        return Err(Error::InvalidParams(
            "the ladder formula assumes a resonant qubit (omega_ge = omega_0)".into(),
        ));
    }
    let nf = n as f64;
    Ok(LadderLevel {
        n,
        branch,
        energy: nf * params.omega_0 + branch.sign() * nf.sqrt() * params.g_0,
    })
}

/// Modulation frequency `2ω₀ ± √(2/n) g₀` of the n-th order two-photon
/// resonance; `n = 1` is the main doublet `ω_{2,±}`.
pub fn higher_order_resonance(n: usize, branch: Branch, params: &SystemParams) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParams("resonance order n must be >= 1".into()));
    }
    Ok(2.0 * params.omega_0 + branch.sign() * (2.0 / n as f64).sqrt() * params.g_0)
}

/// Effective two-level description of the vacuum ↔ `|2,±⟩` transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoStateModel {
    /// Effective Rabi coupling `Δg/√2`.
    pub omega_r: f64,
    /// Total decay rate `(γ_ge + 3γ_cav)/2` of `|2,±⟩`.
    pub gamma: f64,
    /// `ω_mod − ω_{2,±}`
    pub delta: f64,
}

impl TwoStateModel {
    pub fn new(params: &SystemParams, branch: Branch) -> Result<Self> {
        let gamma = 0.5 * (params.gamma_ge + 3.0 * params.gamma_cav);
        if !(gamma > 0.0) {
            return Err(Error::InvalidParams("decay rates must be positive".into()));
        }
        Ok(TwoStateModel {
            omega_r: params.delta_g / 2f64.sqrt(),
            gamma,
            delta: params.omega_mod - higher_order_resonance(1, branch, params)?,
        })
    }
}

/// Saturable Lorentzian `P = (Δg²/2) / (Γ² + Δg² + 4δ²)`.
pub fn two_state_population(model: &TwoStateModel, delta_g: f64) -> f64 {
    0.5 * delta_g * delta_g / (model.gamma.powi(2) + delta_g * delta_g + 4.0 * model.delta.powi(2))
}

/// `R_em ≈ P γ_cav (3γ_cav + 2γ_ge)/(γ_cav + γ_ge)`.
pub fn analytic_emission_rate(model: &TwoStateModel, delta_g: f64, gamma_cav: f64, gamma_ge: f64) -> f64 {
    two_state_population(model, delta_g) * gamma_cav * (3.0 * gamma_cav + 2.0 * gamma_ge) / (gamma_cav + gamma_ge)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub position: f64,
    pub height: f64,
    /// Full width at half maximum; `None` when a half-max crossing is
    /// outside the data.
    pub width: Option<f64>,
    /// False when the maximum sits next to the data edge and no parabolic
    /// refinement was possible.
    pub refined: bool,
}

/// Local maxima with height and prominence above `max · 1e-3`.
pub fn find_peaks(curve: &[(f64, f64)]) -> Vec<Peak> {
    let top = curve.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    find_peaks_above(curve, 1e-3 * top.max(0.0))
}

/// Strict interior local maxima of a curve sorted by abscissa whose height
/// and topographic prominence both exceed `floor`, with three-point parabolic
/// refinement. The prominence test drops ripples riding on a larger line.
pub fn find_peaks_above(curve: &[(f64, f64)], floor: f64) -> Vec<Peak> {
    let n = curve.len();
    let mut peaks = Vec::new();
    if n < 3 {
        return peaks;
    }
    for i in 1..n - 1 {
        let (x0, y0) = curve[i - 1];
        let (x1, y1) = curve[i];
        let (x2, y2) = curve[i + 1];
        // plateaus count once, at their left edge
        if !(y1 > y0 && y1 >= y2) || y1 <= floor {
            continue;
        }
        if y1 == y2 && curve[i + 1..].iter().take_while(|p| p.1 == y1).count() + i + 1 >= n {
            continue;
        }
        if prominence(curve, i) <= floor {
            continue;
        }
        let (position, height, refined) = match parabola_vertex((x0, y0), (x1, y1), (x2, y2)) {
            Some((xv, yv)) if xv >= x0 && xv <= x2 => (xv, yv, true),
            _ => (x1, y1, false),
        };
        peaks.push(Peak {
            position,
            height,
            width: half_max_width(curve, i, height),
            refined,
        });
    }
    peaks
}

/// Height above the higher of the two lowest points met before the curve
/// climbs above the peak on either side.
fn prominence(curve: &[(f64, f64)], i: usize) -> f64 {
    let y = curve[i].1;
    let base = |iter: &mut dyn Iterator<Item = &(f64, f64)>| {
        let mut low = y;
        for p in iter {
            if p.1 > y {
                break;
            }
            low = low.min(p.1);
        }
        low
    };
    let left = base(&mut curve[..i].iter().rev());
    let right = base(&mut curve[i + 1..].iter());
    y - left.max(right)
}

fn parabola_vertex(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> Option<(f64, f64)> {
    let (x0, y0) = a;
    let (x1, y1) = b;
    let (x2, y2) = c;
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curv = (d12 - d01) / (x2 - x0);
    if !(curv < 0.0) {
        return None;
    }
    // y = y1 + d (x − x1) + curv (x − x1)(x − x0) ... rewritten around x1
    let slope_at_x1 = d01 + curv * (x1 - x0);
    let xv = x1 - slope_at_x1 / (2.0 * curv);
    let yv = y1 + slope_at_x1 * (xv - x1) + curv * (xv - x1).powi(2);
    Some((xv, yv))
}

fn half_max_width(curve: &[(f64, f64)], i: usize, height: f64) -> Option<f64> {
    let half = 0.5 * height;
    let crossing = |j: usize, k: usize| {
        let (xa, ya) = curve[j];
        let (xb, yb) = curve[k];
        xa + (half - ya) * (xb - xa) / (yb - ya)
    };
    let left = (0..i).rev().find(|&j| curve[j].1 <= half).map(|j| crossing(j, j + 1))?;
    let right = (i + 1..curve.len()).find(|&j| curve[j].1 <= half).map(|j| crossing(j - 1, j))?;
    Some(right - left)
}
