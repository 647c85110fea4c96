//! Multimode DOPO network: every pulse carries `K` Hermite-mode
//! coefficients driven by parametric gain, signal-signal coupling through
//! the pump, and mode-diagonal mutual injection.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::hermite::build_hermite_basis;
use crate::ising::{energy_unchecked, IsingInstance, SpinConfig};
use crate::noise::NoiseStream;
use crate::singlemode::PumpSchedule;
use crate::tensors::{build_tensors, gaussian_pump, CouplingTensors, PhaseMatch};
use crate::trial::{ModeSample, Recording, TracePoint, TrialFlag, TrialResult};

/// Largest accepted integrator step, in units of `1/gamma_s`.
pub const MAX_DT: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PumpSpectrum {
    /// Second harmonic of the fundamental signal mode.
    Gaussian,
    /// Explicit `[re, im]` amplitudes for `q = -2M ..= 2M`.
    Custom { amplitudes: Vec<[f64; 2]> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultimodeParams {
    pub n_pulses: usize,
    pub k_modes: usize,
    pub gamma_s: f64,
    pub detuning: f64,
    pub timing_mismatch: f64,
    /// Nonlinear coupling `K`. With the pump normalized to threshold it only
    /// sets the saturation intensity, roughly `4 (p - 1) gamma_s / (K^2 L_0000)`.
    pub k_nl: f64,
    pub phase_match: PhaseMatch,
    pub pump_spectrum: PumpSpectrum,
    /// Number of signal modes `N_s`.
    pub n_signal_modes: f64,
    /// Longitudinal index half-width `M`.
    pub m_range: usize,
    /// Injection amplitude per unit edge weight, in units of `gamma_s`.
    pub xi: f64,
    pub dt: f64,
    pub t_end: f64,
    pub noise_variance: f64,
}

impl Default for MultimodeParams {
    fn default() -> Self {
        Self {
            n_pulses: 16,
            k_modes: 5,
            gamma_s: 1.0,
            detuning: 0.0,
            timing_mismatch: 0.0,
            k_nl: 0.02,
            phase_match: PhaseMatch::Constant,
            pump_spectrum: PumpSpectrum::Gaussian,
            n_signal_modes: 10.0,
            m_range: 80,
            xi: 0.1,
            dt: 0.01,
            t_end: 200.0,
            noise_variance: 0.25,
        }
    }
}

impl MultimodeParams {
    /// `gamma_s = Omega T_s / (4 pi)` from the free spectral range `omega`
    /// (angular) and cavity transmittance `t_s`.
    pub fn decay_rate(omega: f64, t_s: f64) -> f64 {
        omega * t_s / (4.0 * std::f64::consts::PI)
    }

    pub fn steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.n_pulses == 0 || self.k_modes == 0 {
            return Err(invalid("n_pulses and k_modes must be at least 1"));
        }
        if !positive(self.gamma_s) || !positive(self.k_nl) || !positive(self.n_signal_modes) {
            return Err(invalid("gamma_s, k_nl and n_signal_modes must be positive"));
        }
        if !(self.dt > 0.0 && self.dt <= MAX_DT / self.gamma_s) {
            return Err(invalid(format!(
                "dt must lie in (0, {}/gamma_s], got {}",
                MAX_DT, self.dt
            )));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return Err(invalid("t_end must be at least dt"));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(invalid("noise_variance must be non-negative"));
        }
        if !(self.xi.is_finite() && self.detuning.is_finite() && self.timing_mismatch.is_finite()) {
            return Err(invalid("xi, detuning and timing_mismatch must be finite"));
        }
        if let PhaseMatch::Sinc { width } = self.phase_match {
            if !width.is_finite() {
                return Err(invalid("sinc width must be finite"));
            }
        }
        if let PumpSpectrum::Custom { amplitudes } = &self.pump_spectrum {
            if amplitudes.len() != 4 * self.m_range + 1 {
                return Err(invalid(format!(
                    "custom pump spectrum needs {} amplitudes, got {}",
                    4 * self.m_range + 1,
                    amplitudes.len()
                )));
            }
        }
        Ok(())
    }
}

/// Coefficients `S[a * K + k]` of every pulse at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultimodeState {
    pub s: Vec<Complex64>,
    pub t: f64,
}

impl MultimodeState {
    pub fn zeros(n_pulses: usize, k_modes: usize) -> Self {
        Self {
            s: vec![Complex64::new(0.0, 0.0); n_pulses * k_modes],
            t: 0.0,
        }
    }
}

/// Tensors normalized so the pump reaches threshold at rate 1, together
/// with the instance and the precomputed contraction of `L`.
#[derive(Clone, Debug)]
pub struct MultimodeModel {
    params: MultimodeParams,
    instance: IsingInstance,
    tensors: CouplingTensors,
    /// Nonzero `(i, j, -(gamma + i Delta) delta_ij - i DeltaOmega D_ij)`.
    linear: Vec<(usize, usize, Complex64)>,
    /// Symmetric pairs `(k, l)` with `k <= l`; also the packed index of the
    /// upper triangle of symmetric `K x K` matrices.
    pairs: Vec<(usize, usize)>,
    /// `K G` at pump rate 1, packed over `pairs`.
    gain: Vec<Complex64>,
    /// Nonzero `(packed ij, pair kl, -(K^2/4) w L_ijkl)`, `w = 2` when `k != l`.
    quartic: Vec<(usize, usize, f64)>,
    /// `(a, b, gamma xi J_ab / max|J|)` for both orientations of every edge.
    injection: Vec<(usize, usize, f64)>,
    ceiling: f64,
}

impl MultimodeModel {
    pub fn new(params: MultimodeParams, instance: IsingInstance) -> Result<Self> {
        params.validate()?;
        if instance.n() != params.n_pulses {
            return Err(invalid(format!(
                "instance has {} vertices but n_pulses = {}",
                instance.n(),
                params.n_pulses
            )));
        }
        let basis = build_hermite_basis(params.k_modes, params.n_signal_modes, params.m_range)?;
        let pump = match &params.pump_spectrum {
            PumpSpectrum::Gaussian => gaussian_pump(&basis),
            PumpSpectrum::Custom { amplitudes } => amplitudes.iter().map(|[re, im]| Complex64::new(*re, *im)).collect(),
        };
        let mut tensors = build_tensors(&basis, &params.phase_match, &pump)?;
        let norm = tensors.gain_norm();
        if !(norm > 0.0) {
            return Err(invalid("pump spectrum gives no parametric gain"));
        }
        tensors.scale_gain(params.gamma_s / (params.k_nl * norm));
        Self::with_tensors(params, instance, tensors)
    }

    /// Uses `tensors` as given: `G` must already carry the threshold
    /// normalization.
    pub fn with_tensors(params: MultimodeParams, instance: IsingInstance, tensors: CouplingTensors) -> Result<Self> {
        params.validate()?;
        let k = params.k_modes;
        if tensors.k_modes() != k || instance.n() != params.n_pulses {
            return Err(invalid("tensor or instance dimensions do not match the parameters"));
        }

        let mut linear = Vec::new();
        for i in 0..k {
            for j in 0..k {
                let mut v = Complex64::new(0.0, -params.timing_mismatch * tensors.d(i, j));
                if i == j {
                    v += Complex64::new(-params.gamma_s, -params.detuning);
                }
                if v != Complex64::new(0.0, 0.0) {
                    linear.push((i, j, v));
                }
            }
        }

        // G and the contraction of L over (k, l) are symmetric in (i, j)
        // for every supported phase-matching factor, so only the upper
        // triangle is stored; averaging keeps rounding symmetric.
        let pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (a..k).map(move |b| (a, b))).collect();
        let gain: Vec<Complex64> = pairs
            .iter()
            .map(|&(i, j)| (tensors.g(i, j) + tensors.g(j, i)) * (0.5 * params.k_nl))
            .collect();
        let l_max = tensors.l_tensor().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let coef = -params.k_nl * params.k_nl / 4.0;
        let mut quartic = Vec::new();
        for (ij, &(i, j)) in pairs.iter().enumerate() {
            for (kl, &(a, b)) in pairs.iter().enumerate() {
                let w = if a == b { 1.0 } else { 2.0 };
                let l = 0.25 * (tensors.l(i, j, a, b) + tensors.l(i, j, b, a) + tensors.l(j, i, a, b) + tensors.l(j, i, b, a));
                // Parity forbids half the entries; they come out at rounding level.
                if l.abs() > 1e-13 * l_max {
                    quartic.push((ij, kl, coef * w * l));
                }
            }
        }

        let j_max = instance.edges().iter().fold(0.0f64, |m, e| m.max(e.weight.abs()));
        let mut injection = Vec::with_capacity(2 * instance.edges().len());
        for e in instance.edges() {
            let c = params.gamma_s * params.xi * e.weight / j_max;
            injection.push((e.i, e.j, c));
            injection.push((e.j, e.i, c));
        }

        // Saturated single-pulse intensity at the largest usable pump and
        // full injection, times a wide margin.
        let l0 = tensors.l(0, 0, 0, 0).abs().max(1e-300);
        let drive = params.gamma_s * (10.0 + params.xi.abs() * instance.max_degree() as f64);
        let ceiling = 1e4 * (1.0 + 4.0 * drive / (params.k_nl * params.k_nl * l0));

        Ok(Self {
            params,
            instance,
            tensors,
            linear,
            pairs,
            gain,
            quartic,
            injection,
            ceiling,
        })
    }

    pub fn params(&self) -> &MultimodeParams {
        &self.params
    }

    pub fn instance(&self) -> &IsingInstance {
        &self.instance
    }

    /// Tensors after threshold normalization of `G`.
    pub fn tensors(&self) -> &CouplingTensors {
        &self.tensors
    }

    /// Writes `dS/dt` at `s` into `out`.
    pub fn drift(&self, s: &[Complex64], pump_rate: f64, out: &mut [Complex64]) {
        let mut scratch = DriftScratch::new(self);
        self.drift_with(s, pump_rate, out, &mut scratch);
    }

    // Works on a pulse-minor copy of the state so every inner loop runs
    // across pulses and vectorizes.
    fn drift_with(&self, s: &[Complex64], pump_rate: f64, out: &mut [Complex64], scratch: &mut DriftScratch) {
        let (n, k) = (self.params.n_pulses, self.params.k_modes);
        let DriftScratch {
            sr,
            si,
            pr,
            pi,
            mr,
            mi,
            or,
            oi,
        } = scratch;
        for (a, sa) in s.chunks_exact(k).enumerate() {
            for (m, c) in sa.iter().enumerate() {
                sr[m * n + a] = c.re;
                si[m * n + a] = c.im;
            }
        }

        for (p, &(x, y)) in self.pairs.iter().enumerate() {
            let (xr, xi) = (&sr[x * n..][..n], &si[x * n..][..n]);
            let (yr, yi) = (&sr[y * n..][..n], &si[y * n..][..n]);
            let (ppr, ppi) = (&mut pr[p * n..][..n], &mut pi[p * n..][..n]);
            for a in 0..n {
                ppr[a] = xr[a] * yr[a] - xi[a] * yi[a];
                ppi[a] = xr[a] * yi[a] + xi[a] * yr[a];
            }
            let g = self.gain[p] * pump_rate;
            mr[p * n..][..n].fill(g.re);
            mi[p * n..][..n].fill(g.im);
        }
        for &(ij, kl, c) in &self.quartic {
            let (qr, qi) = (&pr[kl * n..][..n], &pi[kl * n..][..n]);
            let (dr, di) = (&mut mr[ij * n..][..n], &mut mi[ij * n..][..n]);
            for a in 0..n {
                dr[a] += c * qr[a];
                di[a] += c * qi[a];
            }
        }

        or.fill(0.0);
        oi.fill(0.0);
        for &(i, j, c) in &self.linear {
            let (jr, ji) = (&sr[j * n..][..n], &si[j * n..][..n]);
            let (dr, di) = (&mut or[i * n..][..n], &mut oi[i * n..][..n]);
            for a in 0..n {
                dr[a] += c.re * jr[a] - c.im * ji[a];
                di[a] += c.re * ji[a] + c.im * jr[a];
            }
        }
        // out_i += M_ij conj(S_j)
        let mut conj_term = |i: usize, j: usize, p: usize| {
            let (jr, ji) = (&sr[j * n..][..n], &si[j * n..][..n]);
            let (ar, ai) = (&mr[p * n..][..n], &mi[p * n..][..n]);
            let (dr, di) = (&mut or[i * n..][..n], &mut oi[i * n..][..n]);
            for a in 0..n {
                dr[a] += ar[a] * jr[a] + ai[a] * ji[a];
                di[a] += ai[a] * jr[a] - ar[a] * ji[a];
            }
        };
        for (p, &(i, j)) in self.pairs.iter().enumerate() {
            conj_term(i, j, p);
            if i != j {
                conj_term(j, i, p);
            }
        }
        for &(a, b, c) in &self.injection {
            for m in 0..k {
                or[m * n + a] += c * sr[m * n + b];
                oi[m * n + a] += c * si[m * n + b];
            }
        }

        for (a, oa) in out.chunks_exact_mut(k).enumerate() {
            for (m, o) in oa.iter_mut().enumerate() {
                *o = Complex64::new(or[m * n + a], oi[m * n + a]);
            }
        }
    }

    /// One RK4 step of the drift followed by additive vacuum noise. Draws
    /// exactly `2 * n_pulses * k_modes` normals, real part first.
    pub fn step(&self, state: &mut MultimodeState, schedule: &PumpSchedule, noise: &mut NoiseStream, ws: &mut Workspace) {
        let dt = self.params.dt;
        let t = state.t;
        let p0 = schedule.rate_at(t);
        let p1 = schedule.rate_at(t + 0.5 * dt);
        let p2 = schedule.rate_at(t + dt);
        let Workspace {
            k1,
            k2,
            k3,
            k4,
            tmp,
            scratch,
        } = ws;

        self.drift_with(&state.s, p0, k1, scratch);
        for ((y, s), d) in tmp.iter_mut().zip(&state.s).zip(k1.iter()) {
            *y = s + d * (0.5 * dt);
        }
        self.drift_with(tmp, p1, k2, scratch);
        for ((y, s), d) in tmp.iter_mut().zip(&state.s).zip(k2.iter()) {
            *y = s + d * (0.5 * dt);
        }
        self.drift_with(tmp, p1, k3, scratch);
        for ((y, s), d) in tmp.iter_mut().zip(&state.s).zip(k3.iter()) {
            *y = s + d * dt;
        }
        self.drift_with(tmp, p2, k4, scratch);
        for (i, s) in state.s.iter_mut().enumerate() {
            *s += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
        }

        let amp = (2.0 * self.params.gamma_s * dt * self.params.noise_variance).sqrt();
        for s in &mut state.s {
            let u = noise.standard_normal();
            let v = noise.standard_normal();
            *s += Complex64::new(u, v) * amp;
        }
        state.t = t + dt;
    }

    fn diverged(&self, state: &MultimodeState) -> bool {
        let k = self.params.k_modes;
        state.s.chunks_exact(k).any(|p| {
            let i: f64 = p.iter().map(|c| c.norm_sqr()).sum();
            !(i <= self.ceiling)
        })
    }

    fn readout(&self, s: &[Complex64]) -> (SpinConfig, bool) {
        SpinConfig::from_signs(s.chunks_exact(self.params.k_modes).map(|p| p[0].re))
    }

    pub fn run(&self, schedule: &PumpSchedule, seed: u64, recording: Recording) -> Result<TrialResult> {
        self.run_with_noise(schedule, &mut NoiseStream::new(seed), recording)
    }

    pub fn run_with_noise(&self, schedule: &PumpSchedule, noise: &mut NoiseStream, recording: Recording) -> Result<TrialResult> {
        schedule.validate()?;
        let (n, k) = (self.params.n_pulses, self.params.k_modes);
        let total = self.params.steps();
        let mut state = MultimodeState::zeros(n, k);
        let mut ws = Workspace::new(self);
        let mut trace = Vec::new();
        let mut samples = Vec::new();
        let mut failed = false;
        let mut step = 0u64;

        loop {
            if recording.samples_at(step, total) {
                let (spins, degenerate) = self.readout(&state.s);
                trace.push(TracePoint {
                    time: state.t,
                    energy: energy_unchecked(&self.instance, spins.spins()),
                    degenerate,
                });
                if recording.keep_states {
                    samples.push(ModeSample {
                        t: state.t,
                        k_modes: k,
                        s: state.s.clone(),
                    });
                }
            }
            if step == total {
                break;
            }
            self.step(&mut state, schedule, noise, &mut ws);
            // Keep the clock on the grid rather than accumulating dt.
            step += 1;
            state.t = step as f64 * self.params.dt;
            if self.diverged(&state) {
                failed = true;
                break;
            }
        }

        let (spins, degenerate) = self.readout(&state.s);
        let mut flags = Vec::new();
        if degenerate {
            flags.push(TrialFlag::DegenerateReadout);
        }
        if failed {
            flags.push(TrialFlag::FailedNumeric);
        }
        Ok(TrialResult {
            energy: energy_unchecked(&self.instance, spins.spins()),
            spins,
            rounds: step,
            flags,
            success: None,
            energy_trace: trace,
            trajectory: None,
            mode_trajectory: recording.keep_states.then_some(samples),
        })
    }
}

#[derive(Clone, Debug)]
struct DriftScratch {
    sr: Vec<f64>,
    si: Vec<f64>,
    pr: Vec<f64>,
    pi: Vec<f64>,
    mr: Vec<f64>,
    mi: Vec<f64>,
    or: Vec<f64>,
    oi: Vec<f64>,
}

impl DriftScratch {
    fn new(model: &MultimodeModel) -> Self {
        let n = model.params.n_pulses;
        let modes = vec![0.0; n * model.params.k_modes];
        let pairs = vec![0.0; n * model.pairs.len()];
        Self {
            sr: modes.clone(),
            si: modes.clone(),
            pr: pairs.clone(),
            pi: pairs.clone(),
            mr: pairs.clone(),
            mi: pairs,
            or: modes.clone(),
            oi: modes,
        }
    }
}

/// Scratch buffers for [`MultimodeModel::step`].
#[derive(Clone, Debug)]
pub struct Workspace {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    tmp: Vec<Complex64>,
    scratch: DriftScratch,
}

impl Workspace {
    pub fn new(model: &MultimodeModel) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); model.params.n_pulses * model.params.k_modes];
        Self {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z,
            scratch: DriftScratch::new(model),
        }
    }
}

/// Deterministic part of `dS/dt`.
pub fn multimode_drift(model: &MultimodeModel, state: &MultimodeState, pump_rate: f64) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); state.s.len()];
    model.drift(&state.s, pump_rate, &mut out);
    out
}

pub fn rk4_noise_step(model: &MultimodeModel, state: &mut MultimodeState, schedule: &PumpSchedule, noise: &mut NoiseStream) {
    let mut ws = Workspace::new(model);
    model.step(state, schedule, noise, &mut ws);
}

pub fn run_multimode_trial(
    params: &MultimodeParams,
    instance: &IsingInstance,
    schedule: &PumpSchedule,
    seed: u64,
    recording: Recording,
) -> Result<TrialResult> {
    MultimodeModel::new(params.clone(), instance.clone())?.run(schedule, seed, recording)
}

/// Sign reversal of `Re S_0` in one pulse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlipEvent {
    pub pulse: usize,
    /// Crossing time, linearly interpolated between samples.
    pub time: f64,
    /// Minimum of `Σ_k |S_k|^2` within the window.
    pub window_min_intensity: f64,
    /// Maximum of `Σ_{k>=1} |S_k|^2` within the window.
    pub peak_higher_mode_intensity: f64,
    /// Mean of `Σ_{k>=1} |S_k|^2` over the window-length stretch before it.
    pub pre_window_mean_higher: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlipDetection {
    /// Crossings before this time are ignored.
    pub transient: f64,
    pub half_window: f64,
}

impl Default for FlipDetection {
    fn default() -> Self {
        Self {
            transient: 20.0,
            half_window: 2.0,
        }
    }
}

pub fn flip_events(trajectory: &[ModeSample], pulse: usize, detection: &FlipDetection) -> Result<Vec<FlipEvent>> {
    if trajectory.is_empty() {
        return Err(invalid("trajectory is empty"));
    }
    if trajectory.iter().any(|s| (pulse + 1) * s.k_modes > s.s.len()) {
        return Err(invalid(format!("pulse {pulse} is out of range")));
    }
    let total = |s: &ModeSample| s.pulse(pulse).iter().map(|c| c.norm_sqr()).sum::<f64>();
    let higher = |s: &ModeSample| s.pulse(pulse).iter().skip(1).map(|c| c.norm_sqr()).sum::<f64>();
    let w = detection.half_window;

    let mut events = Vec::new();
    for pair in trajectory.windows(2) {
        let (a, b) = (pair[0].coefficient(pulse, 0).re, pair[1].coefficient(pulse, 0).re);
        if pair[1].t < detection.transient || a == 0.0 || !(a * b <= 0.0) {
            continue;
        }
        let tc = pair[0].t + (pair[1].t - pair[0].t) * a / (a - b);
        if tc < detection.transient {
            continue;
        }
        let inside: Vec<&ModeSample> = trajectory.iter().filter(|s| (s.t - tc).abs() <= w).collect();
        let before: Vec<f64> = trajectory
            .iter()
            .filter(|s| s.t >= tc - 3.0 * w && s.t < tc - w)
            .map(higher)
            .collect();
        let pre_mean = if before.is_empty() {
            0.0
        } else {
            before.iter().sum::<f64>() / before.len() as f64
        };
        events.push(FlipEvent {
            pulse,
            time: tc,
            window_min_intensity: inside.iter().map(|s| total(s)).fold(f64::INFINITY, f64::min),
            peak_higher_mode_intensity: inside.iter().map(|s| higher(s)).fold(0.0, f64::max),
            pre_window_mean_higher: pre_mean,
        });
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ising::make_named_instance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn lone_pulse() -> IsingInstance {
        IsingInstance::new("lone", 1, std::iter::empty()).unwrap()
    }

    fn small_params(n: usize, k_modes: usize) -> MultimodeParams {
        MultimodeParams {
            n_pulses: n,
            k_modes,
            n_signal_modes: 4.0,
            m_range: 30,
            k_nl: 0.1,
            xi: 0.5,
            ..Default::default()
        }
    }

    #[test]
    fn zero_state_has_zero_drift() {
        let model = MultimodeModel::new(small_params(16, 5), make_named_instance("cubic-16").unwrap()).unwrap();
        let state = MultimodeState::zeros(16, 5);
        assert!(multimode_drift(&model, &state, 1.1).iter().all(|c| c.norm() == 0.0));

        let mut s = state.clone();
        let mut noise = NoiseStream::silent(3);
        rk4_noise_step(&model, &mut s, &PumpSchedule::Abrupt { p: 1.1 }, &mut noise);
        assert!(s.s.iter().all(|c| c.norm() == 0.0));
        assert_eq!(noise.draws(), 2 * 16 * 5);
    }

    #[test]
    fn single_mode_reduction_of_drift() {
        // Tensors of a one-function basis built and normalized by hand.
        let p = small_params(16, 1);
        let basis = build_hermite_basis(1, p.n_signal_modes, p.m_range).unwrap();
        let t = build_tensors(&basis, &PhaseMatch::Constant, &gaussian_pump(&basis)).unwrap();
        let g00 = t.g(0, 0).re;
        let l0 = t.l(0, 0, 0, 0);
        let inst = make_named_instance("antiferro-ring-16").unwrap();
        let model = MultimodeModel::new(p.clone(), inst.clone()).unwrap();
        let pump = 1.3;

        let x: Vec<f64> = (0..16).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.9).collect();
        let state = MultimodeState {
            s: x.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            t: 0.0,
        };
        let drift = multimode_drift(&model, &state, pump);
        let k_g00 = p.gamma_s / (p.k_nl * g00) * p.k_nl * g00;
        for (a, d) in drift.iter().enumerate() {
            let inj: f64 = inst.neighbors(a).iter().map(|&(b, w)| p.gamma_s * p.xi * w * x[b]).sum();
            let expect = (-p.gamma_s + k_g00 * pump) * x[a] - p.k_nl * p.k_nl / 4.0 * l0 * x[a].powi(3) + inj;
            assert!((d.re - expect).abs() < 1e-12 * expect.abs().max(1.0), "pulse {a}: {} vs {expect}", d.re);
            assert!(d.im.abs() < 1e-15);
        }
    }

    #[test]
    fn drift_is_cubic_at_threshold() {
        let p = small_params(1, 5);
        let model = MultimodeModel::new(p, lone_pulse()).unwrap();
        let g = nalgebra::DMatrix::from_fn(5, 5, |i, j| model.tensors().g(i, j).re);
        let eig = g.symmetric_eigen();
        let top = (0..5).max_by(|&a, &b| eig.eigenvalues[a].abs().total_cmp(&eig.eigenvalues[b].abs())).unwrap();
        assert!(eig.eigenvalues[top] > 0.0);
        let v = eig.eigenvectors.column(top);
        let norm_at = |eps: f64| {
            let state = MultimodeState {
                s: v.iter().map(|&c| Complex64::new(eps * c, 0.0)).collect(),
                t: 0.0,
            };
            multimode_drift(&model, &state, 1.0).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
        };
        let ratio = norm_at(1e-2) / norm_at(1e-3);
        assert!((ratio - 1000.0).abs() < 1.0, "drift scales by {ratio}");
    }

    /// `dS/dt = a S - b S^3` from `S(0) = s0`.
    fn cubic_closed_form(a: f64, b: f64, s0: f64, t: f64) -> f64 {
        let e = (2.0 * a * t).exp();
        s0 * (a * t).exp() / (1.0 + b / a * s0 * s0 * (e - 1.0)).sqrt()
    }

    #[test]
    fn rk4_global_error_is_fourth_order() {
        let err_at = |dt: f64| {
            let params = MultimodeParams {
                dt,
                ..small_params(1, 1)
            };
            let model = MultimodeModel::new(params.clone(), lone_pulse()).unwrap();
            let pump = 3.0;
            let a = params.gamma_s * (pump - 1.0);
            let b = params.k_nl * params.k_nl / 4.0 * model.tensors().l(0, 0, 0, 0);
            let s0 = 0.05;
            let mut state = MultimodeState {
                s: vec![Complex64::new(s0, 0.0)],
                t: 0.0,
            };
            let mut noise = NoiseStream::silent(0);
            let steps = (4.0 / dt).round() as usize;
            let mut ws = Workspace::new(&model);
            for _ in 0..steps {
                model.step(&mut state, &PumpSchedule::Abrupt { p: pump }, &mut noise, &mut ws);
            }
            (state.s[0].re - cubic_closed_form(a, b, s0, steps as f64 * dt)).abs()
        };
        let ratio = err_at(0.04) / err_at(0.02);
        assert!((ratio - 16.0).abs() <= 0.2 * 16.0, "error ratio {ratio}");
    }

    /// Separately written integrator for one mode per pulse, real and
    /// imaginary parts as plain floats:
    /// `dS/dt = -g S + c p S* - b |S|^2 S + inj`.
    struct CubicLangevin {
        gamma: f64,
        gain: f64,
        b: f64,
        coupling: Vec<Vec<(usize, f64)>>,
        dt: f64,
        noise_amp: f64,
    }

    impl CubicLangevin {
        fn drift(&self, x: &[f64], y: &[f64], p: f64) -> (Vec<f64>, Vec<f64>) {
            let n = x.len();
            let mut dx = vec![0.0; n];
            let mut dy = vec![0.0; n];
            for i in 0..n {
                let r2 = x[i] * x[i] + y[i] * y[i];
                dx[i] = -self.gamma * x[i] + self.gain * p * x[i] - self.b * r2 * x[i];
                dy[i] = -self.gamma * y[i] - self.gain * p * y[i] - self.b * r2 * y[i];
                for &(j, c) in &self.coupling[i] {
                    dx[i] += c * x[j];
                    dy[i] += c * y[j];
                }
            }
            (dx, dy)
        }

        fn step(&self, x: &mut [f64], y: &mut [f64], p: f64, mut draw: impl FnMut() -> f64) {
            let h = self.dt;
            let add = |a: &[f64], d: &[f64], s: f64| a.iter().zip(d).map(|(u, v)| u + s * v).collect::<Vec<_>>();
            let (ax, ay) = self.drift(x, y, p);
            let (bx, by) = self.drift(&add(x, &ax, h / 2.0), &add(y, &ay, h / 2.0), p);
            let (cx, cy) = self.drift(&add(x, &bx, h / 2.0), &add(y, &by, h / 2.0), p);
            let (ex, ey) = self.drift(&add(x, &cx, h), &add(y, &cy, h), p);
            for i in 0..x.len() {
                x[i] += h / 6.0 * (ax[i] + 2.0 * bx[i] + 2.0 * cx[i] + ex[i]);
                y[i] += h / 6.0 * (ay[i] + 2.0 * by[i] + 2.0 * cy[i] + ey[i]);
            }
            for i in 0..x.len() {
                x[i] += self.noise_amp * draw();
                y[i] += self.noise_amp * draw();
            }
        }
    }

    fn reference_for(model: &MultimodeModel, inst: &IsingInstance) -> CubicLangevin {
        let p = model.params();
        let j_max = inst.edges().iter().fold(0.0f64, |m, e| m.max(e.weight.abs()));
        CubicLangevin {
            gamma: p.gamma_s,
            gain: p.k_nl * model.tensors().g(0, 0).re,
            b: p.k_nl * p.k_nl / 4.0 * model.tensors().l(0, 0, 0, 0),
            coupling: (0..inst.n())
                .map(|i| inst.neighbors(i).iter().map(|&(j, w)| (j, p.gamma_s * p.xi * w / j_max)).collect())
                .collect(),
            dt: p.dt,
            noise_amp: (2.0 * p.gamma_s * p.dt * p.noise_variance).sqrt(),
        }
    }

    #[test]
    fn single_mode_reduction_noiseless_trajectory() {
        let inst = make_named_instance("cubic-16").unwrap();
        let model = MultimodeModel::new(small_params(16, 1), inst.clone()).unwrap();
        let reference = reference_for(&model, &inst);
        let mut x: Vec<f64> = (0..16).map(|i| 0.3 * ((i as f64) * 1.7).sin()).collect();
        let mut y: Vec<f64> = (0..16).map(|i| 0.1 * ((i as f64) * 0.9).cos()).collect();
        let mut state = MultimodeState {
            s: x.iter().zip(&y).map(|(&a, &b)| Complex64::new(a, b)).collect(),
            t: 0.0,
        };
        let schedule = PumpSchedule::Abrupt { p: 1.1 };
        let mut noise = NoiseStream::silent(0);
        let mut ws = Workspace::new(&model);
        for _ in 0..2000 {
            model.step(&mut state, &schedule, &mut noise, &mut ws);
            reference.step(&mut x, &mut y, 1.1, || 0.0);
        }
        for a in 0..16 {
            assert!((state.s[a].re - x[a]).abs() < 1e-10, "pulse {a}");
            assert!((state.s[a].im - y[a]).abs() < 1e-10, "pulse {a}");
        }
        assert!(x.iter().any(|v| v.abs() > 1.0), "trajectory never left the linear regime");
    }

    /// Two-sample Kolmogorov-Smirnov test, asymptotic p-value.
    fn ks_p_value(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
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

    #[test]
    fn single_mode_reduction_noisy_ensemble() {
        let inst = IsingInstance::new("pair", 2, [(0, 1, 1.0)]).unwrap();
        let params = MultimodeParams {
            t_end: 8.0,
            ..small_params(2, 1)
        };
        let model = MultimodeModel::new(params, inst.clone()).unwrap();
        let reference = reference_for(&model, &inst);
        let schedule = PumpSchedule::Abrupt { p: 1.1 };
        let trials = 10_000u64;

        let ours: Vec<f64> = (0..trials)
            .map(|i| {
                let r = model.run(&schedule, crate::noise::trial_seed(5, i), Recording::states(800)).unwrap();
                r.mode_trajectory.unwrap().last().unwrap().coefficient(0, 0).re
            })
            .collect();
        let mut rng = ChaCha12Rng::seed_from_u64(0xFEED);
        let theirs: Vec<f64> = (0..trials)
            .map(|_| {
                let (mut x, mut y) = (vec![0.0; 2], vec![0.0; 2]);
                for _ in 0..800 {
                    reference.step(&mut x, &mut y, 1.1, || StandardNormal.sample(&mut rng));
                }
                x[0]
            })
            .collect();
        let p = ks_p_value(ours, theirs);
        assert!(p > 0.01, "KS p-value {p}");
    }

    #[test]
    fn negated_noise_mirrors_the_trajectory() {
        let inst = make_named_instance("cubic-16").unwrap();
        let params = MultimodeParams {
            t_end: 20.0,
            ..small_params(16, 5)
        };
        let model = MultimodeModel::new(params, inst).unwrap();
        let schedule = PumpSchedule::Abrupt { p: 1.1 };
        let a = model.run_with_noise(&schedule, &mut NoiseStream::new(11), Recording::states(100)).unwrap();
        let b = model.run_with_noise(&schedule, &mut NoiseStream::negated(11), Recording::states(100)).unwrap();
        for (x, y) in a.mode_trajectory.unwrap().iter().zip(b.mode_trajectory.unwrap().iter()) {
            for (u, v) in x.s.iter().zip(&y.s) {
                // `==` so that the initial +0 and its mirror -0 agree.
                assert!(u.re == -v.re && u.im == -v.im);
            }
        }
        assert_eq!(a.energy, b.energy);
        assert_eq!(a.spins.flipped(), b.spins);
    }

    #[test]
    fn injected_variance_per_step() {
        let params = small_params(16, 5);
        let model = MultimodeModel::new(params.clone(), make_named_instance("ferro-ring-16").unwrap()).unwrap();
        let schedule = PumpSchedule::Abrupt { p: 1.1 };
        let mut noise = NoiseStream::new(77);
        let mut ws = Workspace::new(&model);
        let (mut re, mut im) = (Vec::new(), Vec::new());
        while re.len() < 100_000 {
            let mut s = MultimodeState::zeros(16, 5);
            model.step(&mut s, &schedule, &mut noise, &mut ws);
            re.extend(s.s.iter().map(|c| c.re));
            im.extend(s.s.iter().map(|c| c.im));
        }
        let expect = 2.0 * params.gamma_s * params.dt * params.noise_variance;
        for v in [re, im] {
            let n = v.len() as f64;
            let var = v.iter().map(|x| x * x).sum::<f64>() / n;
            let se = expect * (2.0 / n).sqrt();
            assert!((var - expect).abs() < 3.0 * se, "variance {var} vs {expect}");
        }
    }

    #[test]
    fn silent_run_stays_at_zero() {
        let inst = make_named_instance("cubic-4").unwrap();
        let params = MultimodeParams {
            t_end: 1.0,
            ..small_params(4, 5)
        };
        let model = MultimodeModel::new(params, inst).unwrap();
        let r = model
            .run_with_noise(&PumpSchedule::Abrupt { p: 1.1 }, &mut NoiseStream::silent(1), Recording::none())
            .unwrap();
        assert!(r.has_flag(TrialFlag::DegenerateReadout));
        assert_eq!(r.rounds, 100);
    }

    #[test]
    fn same_seed_same_trial() {
        let inst = make_named_instance("antiferro-ring-16").unwrap();
        let params = MultimodeParams {
            t_end: 10.0,
            ..small_params(16, 3)
        };
        let a = run_multimode_trial(&params, &inst, &PumpSchedule::Abrupt { p: 1.1 }, 9, Recording::energies(50)).unwrap();
        let b = run_multimode_trial(&params, &inst, &PumpSchedule::Abrupt { p: 1.1 }, 9, Recording::energies(50)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.energy_trace.len(), 21);
    }

    #[test]
    fn parameter_guards() {
        let inst = make_named_instance("cubic-4").unwrap();
        let base = small_params(4, 2);
        for bad in [
            MultimodeParams { dt: 0.06, ..base.clone() },
            MultimodeParams { t_end: 0.001, ..base.clone() },
            MultimodeParams { k_nl: 0.0, ..base.clone() },
            MultimodeParams { n_pulses: 5, ..base.clone() },
            MultimodeParams {
                pump_spectrum: PumpSpectrum::Custom { amplitudes: vec![[1.0, 0.0]; 3] },
                ..base.clone()
            },
        ] {
            assert!(MultimodeModel::new(bad, inst.clone()).is_err());
        }
        assert!(MultimodeModel::new(base, inst).is_ok());
    }

    #[test]
    fn pump_gauge_leaves_gain_term_unchanged() {
        let base = small_params(1, 3);
        let basis = build_hermite_basis(3, base.n_signal_modes, base.m_range).unwrap();
        let pump = gaussian_pump(&basis);
        let c = 3.5;
        let scaled: Vec<_> = pump.iter().map(|p| p * c).collect();
        let a = build_tensors(&basis, &PhaseMatch::Constant, &pump).unwrap();
        let b = build_tensors(&basis, &PhaseMatch::Constant, &scaled).unwrap();
        for (x, y) in a.g_matrix().iter().zip(b.g_matrix()) {
            let (ka, kb) = (base.k_nl, base.k_nl / c);
            assert!((x * ka - y * kb).norm() < 1e-14 * (x * ka).norm().max(1.0));
        }
    }

    fn sample(t: f64, s: Vec<Complex64>) -> ModeSample {
        ModeSample { t, k_modes: s.len(), s }
    }

    #[test]
    fn flip_detection_on_constructed_trajectories() {
        let det = FlipDetection {
            transient: 1.0,
            half_window: 0.5,
        };
        let constant: Vec<_> = (0..100)
            .map(|i| sample(i as f64 * 0.1, vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]))
            .collect();
        assert!(flip_events(&constant, 0, &det).unwrap().is_empty());

        let t0 = 5.05;
        let tanh: Vec<_> = (0..100)
            .map(|i| {
                let t = i as f64 * 0.1;
                sample(t, vec![Complex64::new((t - t0).tanh(), 0.0), Complex64::new(0.0, 0.0)])
            })
            .collect();
        let ev = flip_events(&tanh, 0, &det).unwrap();
        assert_eq!(ev.len(), 1);
        assert!((ev[0].time - t0).abs() < 1e-3);
        assert_eq!(ev[0].peak_higher_mode_intensity, 0.0);
        assert!(ev[0].window_min_intensity < 1e-2);

        assert!(flip_events(&[], 0, &det).is_err());
        assert!(flip_events(&constant, 1, &det).is_err());
    }
}
