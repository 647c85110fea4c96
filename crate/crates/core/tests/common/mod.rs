//! Reference computations shared by the integration tests. Nothing here
//! calls into the code paths it is used to check.

#![allow(dead_code)]

use cim_core::ising::IsingInstance;

/// Hermite function `psi_k(m)` from the explicit polynomial sum and plain
/// factorials; fine for the small orders used in tests.
pub fn hermite_function(k: usize, n_s: f64, m: i64) -> f64 {
    let x = m as f64 / n_s;
    let fact = |n: usize| (1..=n).map(|v| v as f64).product::<f64>();
    let mut h = 0.0;
    for j in 0..=k / 2 {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        h += sign * fact(k) / (fact(j) * fact(k - 2 * j)) * (2.0 * x).powi((k - 2 * j) as i32);
    }
    let norm = (fact(k) * 2f64.powi(k as i32) * std::f64::consts::PI.sqrt() * n_s).sqrt();
    (-x * x / 2.0).exp() * h / norm
}

/// `dS/dt = a S - b S^3` from `S(0) = s0`.
pub fn cubic_closed_form(a: f64, b: f64, s0: f64, t: f64) -> f64 {
    s0 * (a * t).exp() / (1.0 + b / a * s0 * s0 * ((2.0 * a * t).exp() - 1.0)).sqrt()
}

/// One mode per pulse, real and imaginary parts as separate float arrays,
/// classic RK4 followed by additive noise:
/// `dS/dt = -g S + c p S* - b |S|^2 S + Σ_j w_ij S_j`.
pub struct CubicLangevin {
    pub gamma: f64,
    pub gain: f64,
    pub b: f64,
    pub coupling: Vec<Vec<(usize, f64)>>,
    pub dt: f64,
    pub noise_amp: f64,
}

impl CubicLangevin {
    /// Coupling `gamma * xi * J_ij / max|J|` for every edge of `inst`.
    pub fn for_instance(inst: &IsingInstance, gamma: f64, gain: f64, b: f64, xi: f64, dt: f64, variance: f64) -> Self {
        let j_max = inst.edges().iter().fold(0.0f64, |m, e| m.max(e.weight.abs()));
        let mut coupling = vec![Vec::new(); inst.n()];
        for e in inst.edges() {
            coupling[e.i].push((e.j, gamma * xi * e.weight / j_max));
            coupling[e.j].push((e.i, gamma * xi * e.weight / j_max));
        }
        Self {
            gamma,
            gain,
            b,
            coupling,
            dt,
            noise_amp: (2.0 * gamma * dt * variance).sqrt(),
        }
    }

    fn drift(&self, x: &[f64], y: &[f64], p: f64) -> (Vec<f64>, Vec<f64>) {
        let mut dx = vec![0.0; x.len()];
        let mut dy = vec![0.0; x.len()];
        for i in 0..x.len() {
            let r2 = x[i] * x[i] + y[i] * y[i];
            dx[i] = (-self.gamma + self.gain * p - self.b * r2) * x[i];
            dy[i] = (-self.gamma - self.gain * p - self.b * r2) * y[i];
            for &(j, c) in &self.coupling[i] {
                dx[i] += c * x[j];
                dy[i] += c * y[j];
            }
        }
        (dx, dy)
    }

    pub fn step(&self, x: &mut [f64], y: &mut [f64], p: f64, mut draw: impl FnMut() -> f64) {
        let h = self.dt;
        let shift = |a: &[f64], d: &[f64], s: f64| a.iter().zip(d).map(|(u, v)| u + s * v).collect::<Vec<_>>();
        let (k1x, k1y) = self.drift(x, y, p);
        let (k2x, k2y) = self.drift(&shift(x, &k1x, h / 2.0), &shift(y, &k1y, h / 2.0), p);
        let (k3x, k3y) = self.drift(&shift(x, &k2x, h / 2.0), &shift(y, &k2y, h / 2.0), p);
        let (k4x, k4y) = self.drift(&shift(x, &k3x, h), &shift(y, &k3y, h), p);
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
            y[i] += h / 6.0 * (k1y[i] + 2.0 * k2y[i] + 2.0 * k3y[i] + k4y[i]);
        }
        for i in 0..x.len() {
            x[i] += self.noise_amp * draw();
            y[i] += self.noise_amp * draw();
        }
    }
}

/// Two-sample Kolmogorov-Smirnov test, asymptotic p-value.
pub fn ks_p_value(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = (n * m / (n + m)).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * d;
    let p: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    p.clamp(0.0, 1.0)
}

/// Energy `-Σ J_ij s_i s_j` over the bits of `bits`, written out directly.
pub fn energy_of_bits(inst: &IsingInstance, bits: u64) -> f64 {
    let spin = |i: usize| if bits >> i & 1 == 1 { -1.0 } else { 1.0 };
    -inst.edges().iter().map(|e| e.weight * spin(e.i) * spin(e.j)).sum::<f64>()
}
