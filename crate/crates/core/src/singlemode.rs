//! Round-trip map of a network of single-mode DOPO pulses.
//!
//! Each round every pulse passes, in order, an output coupler that admits
//! vacuum noise, a noiseless saturable parametric amplifier, and the
//! beamsplitters of the mutual-injection delay lines. Only the in-phase
//! quadrature is tracked.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::ising::{energy_unchecked, IsingInstance, SpinConfig};
use crate::noise::NoiseStream;
use crate::trial::{AmplitudeSample, Recording, TracePoint, TrialFlag, TrialResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SingleModeParams {
    pub n_pulses: usize,
    /// Output-coupler power transmittance `T_s`.
    pub out_coupling: f64,
    /// Power reflectance of each mutual-injection beamsplitter.
    pub injection_reflectance: f64,
    pub sat_amplitude: f64,
    /// Vacuum variance per quadrature.
    pub vacuum_variance: f64,
    pub rounds: u64,
    pub readout_round: u64,
    /// Divide the reflectance by the maximum vertex degree.
    pub normalize_by_degree: bool,
    pub gain_form: GainForm,
    pub coupler: Coupler,
    pub threshold: ThresholdReference,
}

/// Beamsplitter arrangement of the mutual injection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupler {
    /// `x_i <- sqrt(1 - d_i R) x_i + sqrt(R) Σ_j J~_ij x_j`.
    #[default]
    Symmetric,
    /// Each edge is a delay line with an extraction and an injection
    /// beamsplitter of reflectance `R`:
    /// `x_i <- (1 - R)^{d_i} x_i + R Σ_j J~_ij x_j`.
    DelayLine,
}

impl Coupler {
    /// Amplitude transmitted past all couplers of a pulse of degree `degree`.
    pub fn through_amplitude(self, degree: usize, reflectance: f64) -> f64 {
        match self {
            Coupler::Symmetric => (1.0 - degree as f64 * reflectance).sqrt(),
            Coupler::DelayLine => (1.0 - reflectance).powi(degree as i32),
        }
    }
}

/// Which passive losses the threshold gain `g_th` cancels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdReference {
    /// Output coupler plus injection out-coupling.
    #[default]
    TotalPassiveLoss,
    /// Output coupler only.
    OutputCoupler,
}

/// Small-signal amplitude gain of the parametric stage at pump rate `p`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainForm {
    /// `g_th * sqrt(p)`.
    #[default]
    Proportional,
    /// `g_th^sqrt(p)`: the gain exponent scales with the pump amplitude.
    Exponential,
}

impl GainForm {
    pub fn small_signal(self, threshold_gain: f64, pump: f64) -> f64 {
        match self {
            GainForm::Proportional => threshold_gain * pump.sqrt(),
            GainForm::Exponential => threshold_gain.powf(pump.sqrt()),
        }
    }
}

impl Default for SingleModeParams {
    fn default() -> Self {
        Self {
            n_pulses: 16,
            out_coupling: 0.1,
            injection_reflectance: 0.075,
            sat_amplitude: 1.0,
            vacuum_variance: 0.25,
            rounds: 10_000,
            readout_round: 10_000,
            normalize_by_degree: false,
            gain_form: GainForm::default(),
            coupler: Coupler::default(),
            threshold: ThresholdReference::default(),
        }
    }
}

impl SingleModeParams {
    /// Settings used by the single-mode presets, chosen from the sweep in
    /// `calibration/singlemode_sweep.txt`.
    pub fn calibrated() -> Self {
        Self {
            out_coupling: 0.3,
            sat_amplitude: 200.0,
            gain_form: GainForm::Exponential,
            coupler: Coupler::DelayLine,
            threshold: ThresholdReference::OutputCoupler,
            ..Self::default()
        }
    }

    /// Reflectance actually applied per edge.
    pub fn effective_reflectance(&self, max_degree: usize) -> f64 {
        if self.normalize_by_degree && max_degree > 0 {
            self.injection_reflectance / max_degree as f64
        } else {
            self.injection_reflectance
        }
    }

    pub fn validate(&self, max_degree: usize) -> Result<()> {
        if self.n_pulses == 0 {
            return Err(invalid("n_pulses must be at least 1"));
        }
        if !(self.out_coupling > 0.0 && self.out_coupling < 1.0) {
            return Err(invalid(format!("out_coupling must lie in (0, 1), got {}", self.out_coupling)));
        }
        if !(0.0..1.0).contains(&self.injection_reflectance) {
            return Err(invalid(format!(
                "injection_reflectance must lie in [0, 1), got {}",
                self.injection_reflectance
            )));
        }
        let passive = self.out_coupling + self.effective_reflectance(max_degree) * max_degree as f64;
        if passive >= 1.0 {
            return Err(invalid(format!("total passive loss per round {passive} must be below 1")));
        }
        if !(self.sat_amplitude > 0.0 && self.sat_amplitude.is_finite()) {
            return Err(invalid("sat_amplitude must be positive"));
        }
        if !(self.vacuum_variance >= 0.0 && self.vacuum_variance.is_finite()) {
            return Err(invalid("vacuum_variance must be non-negative"));
        }
        if self.readout_round > self.rounds {
            return Err(invalid(format!(
                "readout_round {} exceeds rounds {}",
                self.readout_round, self.rounds
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PumpSchedule {
    /// Constant pump rate from round zero.
    Abrupt { p: f64 },
    /// Linear ramp, held at `p_end` after `ramp_rounds`.
    Linear { p_start: f64, p_end: f64, ramp_rounds: u64 },
}

impl PumpSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PumpSchedule::Abrupt { p } if p >= 0.0 && p.is_finite() => Ok(()),
            PumpSchedule::Linear {
                p_start,
                p_end,
                ramp_rounds,
            } if p_start >= 0.0 && p_end >= 0.0 && p_start.is_finite() && p_end.is_finite() => {
                if ramp_rounds == 0 {
                    Err(invalid("linear schedule needs ramp_rounds >= 1"))
                } else {
                    Ok(())
                }
            }
            _ => Err(invalid("pump rates must be finite and non-negative")),
        }
    }

    /// Pump rate in units of the single-pulse threshold at (possibly
    /// fractional) `round`.
    pub fn rate_at(&self, round: f64) -> f64 {
        match *self {
            PumpSchedule::Abrupt { p } => p,
            PumpSchedule::Linear {
                p_start,
                p_end,
                ramp_rounds,
            } => p_start + (p_end - p_start) * (round.max(0.0) / ramp_rounds as f64).min(1.0),
        }
    }

    pub fn max_rate(&self) -> f64 {
        match *self {
            PumpSchedule::Abrupt { p } => p,
            PumpSchedule::Linear { p_start, p_end, .. } => p_start.max(p_end),
        }
    }
}

pub fn evaluate_schedule(schedule: &PumpSchedule, round: u64) -> f64 {
    schedule.rate_at(round as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SingleModeState {
    pub x: Vec<f64>,
    pub round_index: u64,
}

impl SingleModeState {
    pub fn zeros(n: usize) -> Self {
        Self {
            x: vec![0.0; n],
            round_index: 0,
        }
    }
}

/// `x_i <- sqrt(1-T) x_i + sqrt(T) w_i`, with `w_i ~ N(0, variance)`.
/// Draws exactly one normal per pulse, in pulse order.
pub fn out_couple(state: &mut SingleModeState, transmittance: f64, variance: f64, noise: &mut NoiseStream) {
    let keep = (1.0 - transmittance).sqrt();
    let admit = (transmittance * variance).sqrt();
    for x in &mut state.x {
        *x = keep * *x + admit * noise.standard_normal();
    }
}

/// Saturable gain `x <- G(p) x / (1 + x^2/x_sat^2)`, where `G` is the
/// small-signal gain built from each pulse's threshold gain.
pub fn parametric_gain_step(
    state: &mut SingleModeState,
    pump: f64,
    form: GainForm,
    threshold_gain: &[f64],
    sat_amplitude: f64,
) {
    let inv_sat2 = 1.0 / (sat_amplitude * sat_amplitude);
    for (x, &g) in state.x.iter_mut().zip(threshold_gain) {
        *x = form.small_signal(g, pump) * *x / (1.0 + *x * *x * inv_sat2);
    }
}

/// Mutual injection through the delay-line beamsplitters.
///
/// All pulses update from the same snapshot:
/// `x_i <- sqrt(1 - d_i R) x_i + sqrt(R) Σ_j (J_ij / max|J|) x_j`.
pub fn injection_couple(
    state: &mut SingleModeState,
    instance: &IsingInstance,
    reflectance: f64,
    normalize_by_degree: bool,
) -> Result<()> {
    if instance.n() != state.x.len() {
        return Err(invalid(format!(
            "instance has {} vertices but state has {} pulses",
            instance.n(),
            state.x.len()
        )));
    }
    let coupler = Injection::new(instance, Coupler::Symmetric, reflectance, normalize_by_degree);
    coupler.apply(&mut state.x);
    Ok(())
}

#[derive(Clone, Debug)]
struct Injection {
    through: Vec<f64>,
    links: Vec<Vec<(usize, f64)>>,
    snapshot: Vec<f64>,
}

impl Injection {
    fn new(instance: &IsingInstance, coupler: Coupler, reflectance: f64, normalize_by_degree: bool) -> Self {
        let max_degree = instance.max_degree();
        let r = if normalize_by_degree && max_degree > 0 {
            reflectance / max_degree as f64
        } else {
            reflectance
        };
        let scale = instance.edges().iter().map(|e| e.weight.abs()).fold(0.0, f64::max);
        let amp = match coupler {
            Coupler::Symmetric => r.sqrt(),
            Coupler::DelayLine => r,
        };
        let through = (0..instance.n())
            .map(|i| coupler.through_amplitude(instance.degree(i), r))
            .collect();
        let links = (0..instance.n())
            .map(|i| {
                instance
                    .neighbors(i)
                    .iter()
                    .map(|&(j, w)| (j, amp * w / scale))
                    .collect()
            })
            .collect();
        Self {
            through,
            links,
            snapshot: vec![0.0; instance.n()],
        }
    }

    fn apply(&self, x: &mut [f64]) {
        let mut snapshot = self.snapshot.clone();
        self.apply_with(x, &mut snapshot);
    }

    fn apply_with(&self, x: &mut [f64], snapshot: &mut [f64]) {
        snapshot.copy_from_slice(x);
        for (i, xi) in x.iter_mut().enumerate() {
            let injected: f64 = self.links[i].iter().map(|&(j, c)| c * snapshot[j]).sum();
            *xi = self.through[i] * snapshot[i] + injected;
        }
    }
}

/// A single-mode network bound to one instance and pump schedule.
#[derive(Clone, Debug)]
pub struct SingleModeSimulator {
    params: SingleModeParams,
    instance: IsingInstance,
    schedule: PumpSchedule,
    threshold_gain: Vec<f64>,
    injection: Injection,
    ceiling: f64,
}

impl SingleModeSimulator {
    pub fn new(params: SingleModeParams, instance: IsingInstance, schedule: PumpSchedule) -> Result<Self> {
        if instance.n() != params.n_pulses {
            return Err(invalid(format!(
                "instance has {} vertices but n_pulses = {}",
                instance.n(),
                params.n_pulses
            )));
        }
        params.validate(instance.max_degree())?;
        schedule.validate()?;
        let r = params.effective_reflectance(instance.max_degree());
        let threshold_gain: Vec<f64> = (0..instance.n())
            .map(|i| {
                let through = match params.threshold {
                    ThresholdReference::TotalPassiveLoss => params.coupler.through_amplitude(instance.degree(i), r),
                    ThresholdReference::OutputCoupler => 1.0,
                };
                1.0 / ((1.0 - params.out_coupling).sqrt() * through)
            })
            .collect();
        let injection = Injection::new(
            &instance,
            params.coupler,
            params.injection_reflectance,
            params.normalize_by_degree,
        );

        // No trajectory of the map can exceed this: the gain stage is
        // bounded by g sqrt(p) x_sat / 2 and injection by (1 + d sqrt(R)).
        let g_max = threshold_gain.iter().cloned().fold(0.0, f64::max);
        let d = instance.max_degree() as f64;
        let steady = params.sat_amplitude
            * params.gain_form.small_signal(g_max, schedule.max_rate()).max(1.0)
            * (1.0 + d * r.sqrt());
        let ceiling = 10.0 * steady;

        Ok(Self {
            params,
            instance,
            schedule,
            threshold_gain,
            injection,
            ceiling,
        })
    }

    pub fn params(&self) -> &SingleModeParams {
        &self.params
    }

    pub fn instance(&self) -> &IsingInstance {
        &self.instance
    }

    pub fn threshold_gain(&self) -> &[f64] {
        &self.threshold_gain
    }

    /// Advances one round: out-couple, gain, inject.
    pub fn step(&self, state: &mut SingleModeState, noise: &mut NoiseStream, scratch: &mut [f64]) {
        let p = self.schedule.rate_at(state.round_index as f64);
        out_couple(state, self.params.out_coupling, self.params.vacuum_variance, noise);
        parametric_gain_step(state, p, self.params.gain_form, &self.threshold_gain, self.params.sat_amplitude);
        self.injection.apply_with(&mut state.x, scratch);
        state.round_index += 1;
    }

    fn diverged(&self, state: &SingleModeState) -> bool {
        state.x.iter().any(|x| !x.is_finite() || x.abs() > self.ceiling)
    }

    pub fn run(&self, seed: u64, recording: Recording) -> TrialResult {
        self.run_with_noise(&mut NoiseStream::new(seed), recording)
    }

    pub fn run_with_noise(&self, noise: &mut NoiseStream, recording: Recording) -> TrialResult {
        let n = self.params.n_pulses;
        let total = self.params.rounds;
        let mut state = SingleModeState::zeros(n);
        let mut scratch = vec![0.0; n];
        let mut trace = Vec::new();
        let mut samples = Vec::new();
        let mut readout: Option<(SpinConfig, bool)> = None;
        let mut failed = false;

        loop {
            let r = state.round_index;
            if recording.samples_at(r, total) {
                let (spins, degenerate) = SpinConfig::from_signs(state.x.iter().copied());
                trace.push(TracePoint {
                    time: r as f64,
                    energy: energy_unchecked(&self.instance, spins.spins()),
                    degenerate,
                });
                if recording.keep_states {
                    samples.push(AmplitudeSample {
                        round: r,
                        x: state.x.clone(),
                    });
                }
            }
            if r == self.params.readout_round {
                readout = Some(SpinConfig::from_signs(state.x.iter().copied()));
            }
            if r == total {
                break;
            }
            self.step(&mut state, noise, &mut scratch);
            if self.diverged(&state) {
                failed = true;
                break;
            }
        }

        let (spins, degenerate) = readout.unwrap_or_else(|| SpinConfig::from_signs(state.x.iter().copied()));
        let mut flags = Vec::new();
        if degenerate {
            flags.push(TrialFlag::DegenerateReadout);
        }
        if failed {
            flags.push(TrialFlag::FailedNumeric);
        }
        TrialResult {
            energy: energy_unchecked(&self.instance, spins.spins()),
            spins,
            rounds: state.round_index,
            flags,
            success: None,
            energy_trace: trace,
            trajectory: recording.keep_states.then_some(samples),
            mode_trajectory: None,
        }
    }
}

/// Runs one trial of the single-mode network from `x = 0`.
pub fn run_single_trial(
    params: &SingleModeParams,
    instance: &IsingInstance,
    schedule: &PumpSchedule,
    seed: u64,
    recording: Recording,
) -> Result<TrialResult> {
    let sim = SingleModeSimulator::new(params.clone(), instance.clone(), *schedule)?;
    Ok(sim.run(seed, recording))
}
