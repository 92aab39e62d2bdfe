//! Truncated cavity ⊗ qubit Hilbert space, system operators and the
//! modulated Hamiltonian
//!
//! `H(t) = ω₀ a†a + ω_ge c†c + g(t) (a + a†)(c + c†)`, with
//! `g(t) = g₀ + Δg sin(ω_mod t)`. The anti-rotating products `a c` and
//! `a† c†` are kept.

use ndarray::{s, Array1, Array2};
use ndarray_linalg::{Eigh, EigValsh, UPLO};
use serde::{Deserialize, Serialize};

use crate::{Error, Operator, Result, C64};

/// Physical and truncation parameters of one simulation, in units of ω₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub omega_0: f64,
    pub omega_ge: f64,
    pub g_0: f64,
    pub delta_g: f64,
    pub omega_mod: f64,
    pub gamma_cav: f64,
    pub gamma_ge: f64,
    pub n_max: usize,
}

impl SystemParams {
    /// Resonant circuit-QED reference point: ω₀ = ω_ge = 1, g₀ = 0.02,
    /// γ_cav = γ_ge = 0.002, Δg = 0.1 γ, modulation at 2ω₀ − √2 g₀.
    pub fn reference() -> Self {
        let g_0 = 0.02;
        let gamma = 0.002;
        SystemParams {
            omega_0: 1.0,
            omega_ge: 1.0,
            g_0,
            delta_g: 0.1 * gamma,
            omega_mod: 2.0 - std::f64::consts::SQRT_2 * g_0,
            gamma_cav: gamma,
            gamma_ge: gamma,
            n_max: 6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("omega_0", self.omega_0),
            ("omega_ge", self.omega_ge),
            ("g_0", self.g_0),
            ("omega_mod", self.omega_mod),
            ("gamma_cav", self.gamma_cav),
            ("gamma_ge", self.gamma_ge),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "{name} must be finite and > 0, got {value}"
                )));
            }
        }
        if !(self.delta_g.is_finite() && self.delta_g >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "delta_g must be finite and >= 0, got {}",
                self.delta_g
            )));
        }
        if self.delta_g > self.g_0 {
            return Err(Error::InvalidParams(format!(
                "delta_g = {} exceeds g_0 = {}; g(t) would change sign",
                self.delta_g, self.g_0
            )));
        }
        if self.n_max < 2 {
            return Err(Error::InvalidParams(format!(
                "n_max must be >= 2, got {}",
                self.n_max
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        2 * (self.n_max + 1)
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega_mod
    }

    /// Instantaneous vacuum Rabi coupling `g(t)`.
    pub fn coupling_at(&self, t: f64) -> f64 {
        self.g_0 + self.delta_g * (self.omega_mod * t).sin()
    }
}

/// Index of `|n⟩ ⊗ |q⟩` (q = 0 ground, 1 excited).
pub fn basis_index(n: usize, q: usize) -> usize {
    2 * n + q
}

/// Total excitation parity `(n + q) mod 2` of a bare basis state.
pub fn parity(index: usize) -> usize {
    (index / 2 + index % 2) % 2
}

/// Truncated bosonic annihilation operator on Fock states `0..=n_max`.
pub fn fock_annihilation(n_max: usize) -> Operator {
    let mut a = Operator::zeros((n_max + 1, n_max + 1));
    for n in 1..=n_max {
        a[[n - 1, n]] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

fn sigma_minus() -> Operator {
    let mut s = Operator::zeros((2, 2));
    s[[0, 1]] = C64::new(1.0, 0.0);
    s
}

/// Kronecker product `a ⊗ b` with the second factor's index fastest.
pub fn kron(a: &Operator, b: &Operator) -> Operator {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Operator::zeros((ar * br, ac * bc));
    for ((i, j), &x) in a.indexed_iter() {
        if x == C64::new(0.0, 0.0) {
            continue;
        }
        out.slice_mut(s![i * br..(i + 1) * br, j * bc..(j + 1) * bc])
            .assign(&b.mapv(|y| x * y));
    }
    out
}

pub fn identity(dim: usize) -> Operator {
    Operator::eye(dim)
}

pub fn dagger(op: &Operator) -> Operator {
    op.t().mapv(|z| z.conj())
}

/// `â = a_fock ⊗ 1_qubit`.
pub fn build_cavity_annihilation(params: &SystemParams) -> Result<Operator> {
    params.validate()?;
    Ok(kron(&fock_annihilation(params.n_max), &identity(2)))
}

/// `ĉ = 1_fock ⊗ σ⁻`.
pub fn build_qubit_lowering(params: &SystemParams) -> Result<Operator> {
    params.validate()?;
    Ok(kron(&identity(params.n_max + 1), &sigma_minus()))
}

/// `(â + â†)(ĉ + ĉ†)`, the operator multiplying `g(t)`.
pub fn build_coupling_operator(params: &SystemParams) -> Result<Operator> {
    let a = build_cavity_annihilation(params)?;
    let c = build_qubit_lowering(params)?;
    let x_cav = &a + &dagger(&a);
    let x_qubit = &c + &dagger(&c);
    Ok(x_cav.dot(&x_qubit))
}

fn bare_hamiltonian(params: &SystemParams, coupling: f64) -> Result<Operator> {
    let a = build_cavity_annihilation(params)?;
    let c = build_qubit_lowering(params)?;
    let x = build_coupling_operator(params)?;
    let num_cav = dagger(&a).dot(&a);
    let num_qubit = dagger(&c).dot(&c);
    Ok(num_cav * C64::from(params.omega_0)
        + num_qubit * C64::from(params.omega_ge)
        + x * C64::from(coupling))
}

/// `Ĥ(t)` including the coupling modulation.
pub fn build_hamiltonian(params: &SystemParams, t: f64) -> Result<Operator> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidParams(format!("time must be >= 0, got {t}")));
    }
    bare_hamiltonian(params, params.coupling_at(t))
}

/// Hamiltonian at `g = g₀` with the modulation frozen.
pub fn build_static_hamiltonian(params: &SystemParams) -> Result<Operator> {
    bare_hamiltonian(params, params.g_0)
}

pub fn max_abs(op: &Operator) -> f64 {
    op.iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// `max |A − A†|`.
pub fn hermiticity_error(op: &Operator) -> f64 {
    let (r, _) = op.dim();
    let mut worst: f64 = 0.0;
    for i in 0..r {
        for j in i..r {
            worst = worst.max((op[[i, j]] - op[[j, i]].conj()).norm());
        }
    }
    worst
}

/// Eigenvalues (ascending) and eigenvectors of the static Hamiltonian.
#[derive(Debug, Clone)]
pub struct DressedBasis {
    pub eigenvalues: Array1<f64>,
    /// Column k is the k-th dressed state in the bare basis.
    pub basis_change: Operator,
}

impl DressedBasis {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn to_dressed(&self, op: &Operator) -> Operator {
        dagger(&self.basis_change).dot(op).dot(&self.basis_change)
    }

    pub fn to_bare(&self, op: &Operator) -> Operator {
        self.basis_change.dot(op).dot(&dagger(&self.basis_change))
    }

    pub fn state(&self, k: usize) -> Array1<C64> {
        self.basis_change.column(k).to_owned()
    }

    pub fn projector(&self, k: usize) -> Operator {
        let v = self.state(k);
        let mut p = Operator::zeros((v.len(), v.len()));
        for i in 0..v.len() {
            for j in 0..v.len() {
                p[[i, j]] = v[i] * v[j].conj();
            }
        }
        p
    }

    pub fn ground_state(&self) -> DensityMatrix {
        DensityMatrix::new(self.projector(0))
    }

    /// `max |V†V − 1|`.
    pub fn unitarity_error(&self) -> f64 {
        let v = &self.basis_change;
        max_abs(&(dagger(v).dot(v) - identity(self.dim())))
    }
}

/// Diagonalizes a Hermitian operator on the bare basis.
///
/// Parity-conserving operators are diagonalized block by block so every
/// eigenvector has a definite excitation parity.
pub fn diagonalize(h: &Operator) -> Result<DressedBasis> {
    let dim = h.nrows();
    if h.iter().any(|z| !z.is_finite()) {
        return Err(Error::Eigensolver("non-finite Hamiltonian entry".into()));
    }
    let scale = max_abs(h).max(1.0);
    let conserves_parity = h
        .indexed_iter()
        .all(|((i, j), z)| parity(i) == parity(j) || z.norm() <= 1e-14 * scale);
    let blocks: Vec<Vec<usize>> = if conserves_parity {
        (0..2)
            .map(|p| (0..dim).filter(|&i| parity(i) == p).collect())
            .collect()
    } else {
        vec![(0..dim).collect()]
    };

    let mut pairs: Vec<(f64, Array1<C64>)> = Vec::with_capacity(dim);
    for block in blocks.iter().filter(|b| !b.is_empty()) {
        let sub = Array2::from_shape_fn((block.len(), block.len()), |(i, j)| {
            h[[block[i], block[j]]]
        });
        let (vals, vecs) = sub
            .eigh(UPLO::Upper)
            .map_err(|e| Error::Eigensolver(e.to_string()))?;
        for (k, &val) in vals.iter().enumerate() {
            let mut full = Array1::<C64>::zeros(dim);
            for (r, &i) in block.iter().enumerate() {
                full[i] = vecs[[r, k]];
            }
            pairs.push((val, full));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut eigenvalues = Array1::zeros(dim);
    let mut basis_change = Operator::zeros((dim, dim));
    for (k, (val, vec)) in pairs.into_iter().enumerate() {
        eigenvalues[k] = val;
        basis_change.column_mut(k).assign(&vec);
    }
    Ok(DressedBasis {
        eigenvalues,
        basis_change,
    })
}

pub fn diagonalize_static(params: &SystemParams) -> Result<DressedBasis> {
    diagonalize(&build_static_hamiltonian(params)?)
}

/// Numerical health of a density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateDiagnostics {
    pub trace_error: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub entries: Operator,
}

impl DensityMatrix {
    pub fn new(entries: Operator) -> Self {
        DensityMatrix { entries }
    }

    /// Pure bare state `|n, q⟩⟨n, q|`.
    pub fn bare(params: &SystemParams, n: usize, q: usize) -> Self {
        let mut m = Operator::zeros((params.dim(), params.dim()));
        m[[basis_index(n, q), basis_index(n, q)]] = C64::new(1.0, 0.0);
        DensityMatrix::new(m)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.entries.diag().sum()
    }

    pub fn expectation(&self, op: &Operator) -> C64 {
        op.dot(&self.entries).diag().sum()
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let herm = (&self.entries + &dagger(&self.entries)) * C64::from(0.5);
        let vals = herm
            .eigvalsh(UPLO::Upper)
            .map_err(|e| Error::Eigensolver(e.to_string()))?;
        Ok(vals.iter().cloned().fold(f64::INFINITY, f64::min))
    }

    pub fn diagnostics(&self) -> Result<StateDiagnostics> {
        Ok(StateDiagnostics {
            trace_error: (self.trace() - C64::new(1.0, 0.0)).norm(),
            hermiticity_error: hermiticity_error(&self.entries),
            min_eigenvalue: self.min_eigenvalue()?,
        })
    }
}

/// Photon number `⟨GS|â†â|GS⟩` of the static dressed ground state.
pub fn ground_state_photon_number(params: &SystemParams) -> Result<f64> {
    let dressed = diagonalize_static(params)?;
    let a = build_cavity_annihilation(params)?;
    let n = dagger(&a).dot(&a);
    Ok(dressed.ground_state().expectation(&n).re)
}

/// Largest change of the lowest `count` dressed energies between two
/// truncations.
pub fn truncation_shift(params: &SystemParams, n_low: usize, n_high: usize, count: usize) -> Result<f64> {
    let lo = diagonalize_static(&SystemParams { n_max: n_low, ..*params })?;
    let hi = diagonalize_static(&SystemParams { n_max: n_high, ..*params })?;
    Ok((0..count)
        .map(|k| (lo.eigenvalues[k] - hi.eigenvalues[k]).abs())
        .fold(0.0, f64::max))
}
