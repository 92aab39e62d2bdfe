//! Superoperator form of the master-equation generator on an invariant
//! sector of operator space, and RK4 propagators built from it.
//!
//! The Hamiltonian conserves excitation parity and both baths flip it, so the
//! generator maps "parity-diagonal" operators (density matrices grown from an
//! even or odd state) and "parity-off-diagonal" operators (`â ρ`) onto
//! themselves. Working on one sector halves the operator-space dimension.
//!
//! Because the generator is linear, composing RK4 step maps into a
//! propagator gives exactly the same stroboscopic states as stepping a single
//! density matrix with the same `dt`.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2};

use crate::dynamics::{Mode, Model};
use crate::hilbert::{max_abs, parity};
use crate::{Error, Operator, Result, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Set of matrix elements `(i, j)` spanning an invariant subspace of
/// operator space.
#[derive(Debug, Clone, PartialEq)]
pub struct Sector {
    dim: usize,
    pairs: Vec<(usize, usize)>,
    slot: Vec<usize>,
}

impl Sector {
    fn from_pairs(dim: usize, pairs: Vec<(usize, usize)>) -> Self {
        let mut slot = vec![usize::MAX; dim * dim];
        for (k, &(i, j)) in pairs.iter().enumerate() {
            slot[i * dim + j] = k;
        }
        Sector { dim, pairs, slot }
    }

    pub fn full(dim: usize) -> Self {
        let pairs = (0..dim).flat_map(|i| (0..dim).map(move |j| (i, j))).collect();
        Sector::from_pairs(dim, pairs)
    }

    /// Elements whose row and column parities differ (`odd`) or agree.
    pub fn parity(dim: usize, odd: bool) -> Self {
        let pairs = (0..dim)
            .flat_map(|i| (0..dim).map(move |j| (i, j)))
            .filter(|&(i, j)| (parity(i) != parity(j)) == odd)
            .collect();
        Sector::from_pairs(dim, pairs)
    }

    /// Smallest sector containing `op` that the model's generator preserves.
    pub fn for_operator(op: &Operator, model: &Model) -> Self {
        let dim = op.nrows();
        if model.conserves_parity() {
            for odd in [false, true] {
                let sector = Sector::parity(dim, odd);
                if sector.leakage(op) == 0.0 {
                    return sector;
                }
            }
        }
        Sector::full(dim)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn operator_dim(&self) -> usize {
        self.dim
    }

    pub fn pack(&self, op: &Operator) -> Array1<C64> {
        self.pairs.iter().map(|&(i, j)| op[[i, j]]).collect()
    }

    pub fn unpack(&self, v: &Array1<C64>) -> Operator {
        let mut op = Operator::zeros((self.dim, self.dim));
        for (&(i, j), &z) in self.pairs.iter().zip(v.iter()) {
            op[[i, j]] = z;
        }
        op
    }

    /// Largest entry of `op` outside the sector.
    pub fn leakage(&self, op: &Operator) -> f64 {
        op.indexed_iter()
            .filter(|((i, j), _)| self.slot[i * self.dim + j] == usize::MAX)
            .fold(0.0, |m, (_, z)| m.max(z.norm()))
    }

    /// Row vector `w` with `w · pack(B) = Tr[op B]` for `B` in the sector.
    pub fn trace_functional(&self, op: &Operator) -> Array1<C64> {
        self.pairs.iter().map(|&(i, j)| op[[j, i]]).collect()
    }
}

/// `L(t) = L_static + Δg sin(ω_mod t) L_drive` restricted to a sector.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    pub sector: Sector,
    pub static_part: Array2<C64>,
    pub drive_part: Array2<C64>,
    delta_g: f64,
    omega_mod: f64,
}

impl Liouvillian {
    pub fn build(model: &Model, mode: Mode, sector: Sector) -> Result<Self> {
        let n = sector.len();
        let dim = sector.operator_dim();
        let mut static_part = Array2::zeros((n, n));
        let mut drive_part = Array2::zeros((n, n));
        let scale = model.generator_scale();
        for (col, &(i, j)) in sector.pairs.iter().enumerate() {
            let mut basis = Operator::zeros((dim, dim));
            basis[[i, j]] = ONE;
            let s = model.static_rhs(&basis, mode);
            let d = model.drive_rhs(&basis);
            let leak = sector.leakage(&s).max(sector.leakage(&d));
            if leak > 1e-13 * scale {
                return Err(Error::InvalidParams(format!(
                    "generator leaks out of the operator sector (|leak| = {leak:e})"
                )));
            }
            static_part.column_mut(col).assign(&sector.pack(&s));
            drive_part.column_mut(col).assign(&sector.pack(&d));
        }
        Ok(Liouvillian {
            sector,
            static_part,
            drive_part,
            delta_g: model.params.delta_g,
            omega_mod: model.params.omega_mod,
        })
    }

    pub fn dim(&self) -> usize {
        self.sector.len()
    }

    fn modulation(&self, t: f64) -> f64 {
        self.delta_g * (self.omega_mod * t).sin()
    }

    pub fn at(&self, t: f64) -> Array2<C64> {
        let m = self.modulation(t);
        if m == 0.0 {
            return self.static_part.clone();
        }
        &self.static_part + &(&self.drive_part * C64::from(m))
    }

    pub fn apply(&self, v: &Array1<C64>, t: f64) -> Array1<C64> {
        self.at(t).dot(v)
    }

    /// RK4 propagator `Φ(t0 + steps·dt, t0)` of `dv/dt = L(t) v`.
    pub fn propagator(&self, t0: f64, dt: f64, steps: usize) -> Array2<C64> {
        let n = self.dim();
        let mut phi = Array2::<C64>::eye(n);
        let mut k1 = Array2::zeros((n, n));
        let mut k2 = Array2::zeros((n, n));
        let mut k3 = Array2::zeros((n, n));
        let mut k4 = Array2::zeros((n, n));
        let mut tmp = Array2::zeros((n, n));
        let half = C64::from(0.5 * dt);
        let full = C64::from(dt);
        let sixth = C64::from(dt / 6.0);
        let two = C64::from(2.0);
        for step in 0..steps {
            let t = t0 + step as f64 * dt;
            let l0 = self.at(t);
            let lh = self.at(t + 0.5 * dt);
            let l1 = self.at(t + dt);

            general_mat_mul(ONE, &l0, &phi, ZERO, &mut k1);
            tmp.zip_mut_with(&phi, |x, &p| *x = p);
            tmp.scaled_add(half, &k1);
            general_mat_mul(ONE, &lh, &tmp, ZERO, &mut k2);
            tmp.zip_mut_with(&phi, |x, &p| *x = p);
            tmp.scaled_add(half, &k2);
            general_mat_mul(ONE, &lh, &tmp, ZERO, &mut k3);
            tmp.zip_mut_with(&phi, |x, &p| *x = p);
            tmp.scaled_add(full, &k3);
            general_mat_mul(ONE, &l1, &tmp, ZERO, &mut k4);

            k2.scaled_add(ONE, &k3);
            k1.scaled_add(two, &k2);
            k1.scaled_add(ONE, &k4);
            phi.scaled_add(sixth, &k1);
        }
        phi
    }

    /// Propagators between consecutive anchors `t_k = k·period/count` over
    /// one modulation period.
    pub fn anchor_maps(&self, period: f64, count: usize, steps_per_anchor: usize) -> Vec<Array2<C64>> {
        let h = period / count as f64;
        let dt = h / steps_per_anchor as f64;
        (0..count)
            .map(|k| self.propagator(k as f64 * h, dt, steps_per_anchor))
            .collect()
    }
}

/// Ordered product `maps[start-1 mod n] ⋯ maps[start+1] maps[start]`: one
/// full period starting at anchor `start`.
pub fn period_map(maps: &[Array2<C64>], start: usize) -> Array2<C64> {
    let n = maps.len();
    let mut acc = maps[start % n].clone();
    let mut out = Array2::zeros(acc.raw_dim());
    for k in 1..n {
        general_mat_mul(ONE, &maps[(start + k) % n], &acc, ZERO, &mut out);
        std::mem::swap(&mut acc, &mut out);
    }
    acc
}

pub fn max_abs_vec(v: &Array1<C64>) -> f64 {
    v.iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// `max |A − B|` for two operators in the same sector.
pub fn max_diff(a: &Operator, b: &Operator) -> f64 {
    max_abs(&(a - b))
}
