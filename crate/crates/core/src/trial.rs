//! Per-trial results shared by both oscillator models.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ising::SpinConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialFlag {
    /// At least one amplitude was exactly zero at readout.
    DegenerateReadout,
    /// The divergence guard tripped; the trial counts as a failure.
    FailedNumeric,
}

/// Sign-readout energy at one recorded instant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// Round index (single-mode) or time in units of the cavity lifetime (multimode).
    pub time: f64,
    pub energy: f64,
    pub degenerate: bool,
}

/// In-phase amplitudes of every pulse after `round` rounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeSample {
    pub round: u64,
    pub x: Vec<f64>,
}

/// Hermite-mode coefficients of every pulse at time `t`, row-major
/// `pulse * k_modes + k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSample {
    pub t: f64,
    pub k_modes: usize,
    #[serde(with = "complex_pairs")]
    pub s: Vec<Complex64>,
}

impl ModeSample {
    pub fn coefficient(&self, pulse: usize, k: usize) -> Complex64 {
        self.s[pulse * self.k_modes + k]
    }

    pub fn pulse(&self, pulse: usize) -> &[Complex64] {
        &self.s[pulse * self.k_modes..(pulse + 1) * self.k_modes]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub spins: SpinConfig,
    pub energy: f64,
    /// Rounds (single-mode) or integrator steps (multimode) executed.
    pub rounds: u64,
    pub flags: Vec<TrialFlag>,
    /// Filled in by the experiment harness.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub energy_trace: Vec<TracePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Vec<AmplitudeSample>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_trajectory: Option<Vec<ModeSample>>,
}

impl TrialResult {
    pub fn has_flag(&self, flag: TrialFlag) -> bool {
        self.flags.contains(&flag)
    }

    pub fn failed_numeric(&self) -> bool {
        self.has_flag(TrialFlag::FailedNumeric)
    }
}

/// What to record while a trial runs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Recording {
    /// Sampling stride in rounds or integrator steps; `None` records nothing.
    pub stride: Option<u64>,
    /// Keep full amplitudes (or mode coefficients), not just readout energies.
    pub keep_states: bool,
}

impl Recording {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn energies(stride: u64) -> Self {
        Self {
            stride: Some(stride),
            keep_states: false,
        }
    }

    pub fn states(stride: u64) -> Self {
        Self {
            stride: Some(stride),
            keep_states: true,
        }
    }

    pub(crate) fn samples_at(&self, step: u64, last: u64) -> bool {
        match self.stride {
            Some(s) if s > 0 => step % s == 0 || step == last,
            _ => false,
        }
    }
}

mod complex_pairs {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}
