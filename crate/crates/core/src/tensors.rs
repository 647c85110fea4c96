//! Hermite-projected coupling tensors of the multimode signal equation.
//!
//! With `B_ij(q) = Σ_m f_{m,q-m} psi_{i,m} psi_{j,q-m}` the tensors are
//!
//! * `D_ij = Σ_m m psi_{i,m} psi_{j,m}` (pump timing mismatch),
//! * `G_ij = Σ_q p_q B_ij(q)` (parametric gain),
//! * `L_ijkl = Σ_q B_ij(q) B_kl(q)` (signal-signal coupling through the pump).
//!
//! The basis is real, so complex conjugation of `psi` is dropped.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::hermite::HermiteBasis;

/// Phase-matching factor `f_{m,n}` between signal modes `m` and `n`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhaseMatch {
    #[default]
    Constant,
    /// `sinc(width * (m - n))`, mismatch angle proportional to the
    /// signal-idler separation.
    Sinc { width: f64 },
}

impl PhaseMatch {
    pub fn factor(&self, m: i64, n: i64) -> f64 {
        match *self {
            PhaseMatch::Constant => 1.0,
            PhaseMatch::Sinc { width } => {
                let x = width * (m - n) as f64;
                if x == 0.0 {
                    1.0
                } else {
                    x.sin() / x
                }
            }
        }
    }
}

/// Gaussian pump spectrum `exp(-(q / (sqrt(2) N_s))^2 / 2)` over
/// `q in [-2M, 2M]`: the second harmonic of the fundamental signal mode.
pub fn gaussian_pump(basis: &HermiteBasis) -> Vec<Complex64> {
    let q_max = 2 * basis.m_range() as i64;
    let width = std::f64::consts::SQRT_2 * basis.n_s();
    (-q_max..=q_max)
        .map(|q| {
            let u = q as f64 / width;
            Complex64::new((-0.5 * u * u).exp(), 0.0)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingTensors {
    k: usize,
    d: Vec<f64>,
    g: Vec<Complex64>,
    l: Vec<f64>,
}

impl CouplingTensors {
    pub fn k_modes(&self) -> usize {
        self.k
    }

    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.k + j]
    }

    pub fn g(&self, i: usize, j: usize) -> Complex64 {
        self.g[i * self.k + j]
    }

    pub fn l(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let n = self.k;
        self.l[((i * n + j) * n + k) * n + l]
    }

    pub fn d_matrix(&self) -> &[f64] {
        &self.d
    }

    pub fn g_matrix(&self) -> &[Complex64] {
        &self.g
    }

    pub fn l_tensor(&self) -> &[f64] {
        &self.l
    }

    /// Multiplies `G` by `c`, as if the pump spectrum were scaled by `c`.
    pub fn scale_gain(&mut self, c: f64) {
        for g in &mut self.g {
            *g *= c;
        }
    }

    /// Largest singular value of `G`: the linear gain of the best-matched
    /// signal mode per unit nonlinear coupling.
    pub fn gain_norm(&self) -> f64 {
        let m = DMatrix::from_row_slice(self.k, self.k, &self.g);
        m.singular_values().iter().cloned().fold(0.0, f64::max)
    }

    /// Tensors restricted to the first `k` modes.
    pub fn truncated(&self, k: usize) -> Self {
        let n = self.k;
        let k = k.min(n);
        let d = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| self.d[i * n + j]).collect();
        let g = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| self.g[i * n + j]).collect();
        let mut l = Vec::with_capacity(k.pow(4));
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    for e in 0..k {
                        l.push(self.l(a, b, c, e));
                    }
                }
            }
        }
        Self { k, d, g, l }
    }
}

/// Computes `D`, `G` and `L` for `basis`, with `pump[q + 2M]` the pump
/// amplitude at longitudinal index `q`.
pub fn build_tensors(basis: &HermiteBasis, phase_match: &PhaseMatch, pump: &[Complex64]) -> Result<CouplingTensors> {
    let k = basis.k_modes();
    let m_max = basis.m_range() as i64;
    let q_max = 2 * m_max;
    if pump.len() != (2 * q_max + 1) as usize {
        return Err(invalid(format!(
            "pump spectrum must cover q in [-{q_max}, {q_max}] ({} entries), got {}",
            2 * q_max + 1,
            pump.len()
        )));
    }

    let mut d = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            // pair m with -m so the same-parity entries cancel exactly
            d[i * k + j] = (1..=m_max)
                .map(|m| m as f64 * (basis.psi(i, m) * basis.psi(j, m) - basis.psi(i, -m) * basis.psi(j, -m)))
                .sum();
        }
    }

    // B(q) for every pump index, row-major K x K each.
    let n_q = (2 * q_max + 1) as usize;
    let mut b = vec![0.0; n_q * k * k];
    for (qi, q) in (-q_max..=q_max).enumerate() {
        let lo = (-m_max).max(q - m_max);
        let hi = m_max.min(q + m_max);
        let block = &mut b[qi * k * k..(qi + 1) * k * k];
        for m in lo..=hi {
            let f = phase_match.factor(m, q - m);
            if f == 0.0 {
                continue;
            }
            for i in 0..k {
                let a = f * basis.psi(i, m);
                for j in 0..k {
                    block[i * k + j] += a * basis.psi(j, q - m);
                }
            }
        }
    }

    let mut g = vec![Complex64::new(0.0, 0.0); k * k];
    for (qi, p) in pump.iter().enumerate() {
        let block = &b[qi * k * k..(qi + 1) * k * k];
        for (gij, bij) in g.iter_mut().zip(block) {
            *gij += p * bij;
        }
    }

    let kk = k * k;
    let mut l = vec![0.0; kk * kk];
    for qi in 0..n_q {
        let block = &b[qi * kk..(qi + 1) * kk];
        for (ij, &bij) in block.iter().enumerate() {
            if bij == 0.0 {
                continue;
            }
            let row = &mut l[ij * kk..(ij + 1) * kk];
            for (lv, &bkl) in row.iter_mut().zip(block) {
                *lv += bij * bkl;
            }
        }
    }

    Ok(CouplingTensors { k, d, g, l })
}
