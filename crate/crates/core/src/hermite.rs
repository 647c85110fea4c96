//! Discrete Hermite-function basis over longitudinal cavity modes.

use crate::error::{invalid, Result};

/// `psi[k][m + M] = (k! 2^k sqrt(pi) N_s)^{-1/2} exp(-(m/N_s)^2 / 2) H_k(m/N_s)`
/// for `m` in `[-M, M]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HermiteBasis {
    k_modes: usize,
    n_s: f64,
    m_range: usize,
    psi: Vec<Vec<f64>>,
}

impl HermiteBasis {
    pub fn k_modes(&self) -> usize {
        self.k_modes
    }

    /// Number of signal modes `N_s`.
    pub fn n_s(&self) -> f64 {
        self.n_s
    }

    /// Half-width `M` of the longitudinal index range.
    pub fn m_range(&self) -> usize {
        self.m_range
    }

    /// `psi_{k,m}`; zero outside `[-M, M]`.
    pub fn psi(&self, k: usize, m: i64) -> f64 {
        let idx = m + self.m_range as i64;
        if idx < 0 || idx as usize >= self.psi[k].len() {
            0.0
        } else {
            self.psi[k][idx as usize]
        }
    }

    /// Row `k` indexed by `m + M`.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.psi[k]
    }

    /// `Σ_m psi_{k,m} psi_{k',m}`.
    pub fn gram(&self) -> Vec<Vec<f64>> {
        (0..self.k_modes)
            .map(|a| {
                (0..self.k_modes)
                    .map(|b| self.psi[a].iter().zip(&self.psi[b]).map(|(x, y)| x * y).sum())
                    .collect()
            })
            .collect()
    }
}

/// Builds the basis with the orthonormal Hermite-function recurrence
/// `h_{k+1} = sqrt(2/(k+1)) u h_k - sqrt(k/(k+1)) h_{k-1}`, which never
/// forms `k!` or `2^k`.
pub fn build_hermite_basis(k_modes: usize, n_s: f64, m_range: usize) -> Result<HermiteBasis> {
    if k_modes == 0 {
        return Err(invalid("k_modes must be at least 1"));
    }
    if !(n_s > 0.0 && n_s.is_finite()) {
        return Err(invalid(format!("N_s must be positive, got {n_s}")));
    }
    if m_range == 0 {
        return Err(invalid("m_range must be at least 1"));
    }
    let width = 2 * m_range + 1;
    let norm = n_s.sqrt().recip();
    let mut psi = vec![vec![0.0; width]; k_modes];
    for (idx, m) in (-(m_range as i64)..=m_range as i64).enumerate() {
        let u = m as f64 / n_s;
        let mut prev = 0.0;
        let mut cur = std::f64::consts::PI.powf(-0.25) * (-0.5 * u * u).exp();
        for (k, row) in psi.iter_mut().enumerate() {
            row[idx] = cur * norm;
            let next = (2.0 / (k as f64 + 1.0)).sqrt() * u * cur - (k as f64 / (k as f64 + 1.0)).sqrt() * prev;
            prev = cur;
            cur = next;
        }
    }
    Ok(HermiteBasis {
        k_modes,
        n_s,
        m_range,
        psi,
    })
}
