//! Run configuration documents and the embedded presets.

use serde::{Deserialize, Serialize};

use crate::error::{CimError, Result};
use crate::harness::{ExperimentSpec, ModelSpec};
use crate::ising::{display_path, make_named_instance, IsingInstance};
use crate::multimode::FlipDetection;
use crate::singlemode::PumpSchedule;

/// Preset names in listing order.
pub const PRESET_NAMES: [&str; 5] = [
    "fig-s2-abrupt",
    "fig-s3-gradual",
    "fliptrace-ring",
    "table-s1-multimode",
    "table-s1-singlemode",
];

const PRESET_TEXT: [&str; 5] = [
    include_str!("../presets/fig-s2-abrupt.json"),
    include_str!("../presets/fig-s3-gradual.json"),
    include_str!("../presets/fliptrace-ring.json"),
    include_str!("../presets/table-s1-multimode.json"),
    include_str!("../presets/table-s1-singlemode.json"),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceRef {
    Named(String),
    Inline(IsingInstance),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlipTraceConfig {
    pub seed: u64,
    /// Recording stride in integrator steps.
    pub stride: u64,
    #[serde(default)]
    pub detection: FlipDetection,
    /// Smallest window-minimum total intensity that still counts as a flip
    /// carried by the whole pulse.
    #[serde(default)]
    pub intensity_floor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub instances: Vec<InstanceRef>,
    /// `n_pulses` is taken from each instance.
    pub model: ModelSpec,
    pub schedule: PumpSchedule,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub record_stride: Option<u64>,
    #[serde(default)]
    pub parallelism: Option<usize>,
    /// Runs whose failed-numeric fraction exceeds this are reported as failures.
    #[serde(default)]
    pub max_failed_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fliptrace: Option<FlipTraceConfig>,
}

fn default_trials() -> u64 {
    1000
}

fn config_error(pointer: impl Into<String>, message: impl ToString) -> CimError {
    CimError::Config {
        pointer: pointer.into(),
        message: message.to_string(),
    }
}

impl RunConfig {
    /// Semantic checks, reported against the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.instances.is_empty() {
            return Err(config_error("/instances", "at least one instance is required"));
        }
        if self.trials == 0 {
            return Err(config_error("/trials", "must be at least 1"));
        }
        if self.parallelism == Some(0) {
            return Err(config_error("/parallelism", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.max_failed_fraction) {
            return Err(config_error("/max_failed_fraction", "must lie in [0, 1]"));
        }
        if let Some(f) = &self.fliptrace {
            if !matches!(self.model, ModelSpec::Multimode(_)) {
                return Err(config_error("/fliptrace", "flip traces need the multimode model"));
            }
            if f.stride == 0 {
                return Err(config_error("/fliptrace/stride", "must be at least 1"));
            }
        }
        self.schedule.validate().map_err(|e| config_error("/schedule", e))?;
        for (k, spec) in self.experiments()?.iter().enumerate() {
            match &spec.model {
                ModelSpec::Singlemode(p) => p.validate(spec.instance.max_degree()),
                ModelSpec::Multimode(p) => p.validate(),
            }
            .map_err(|e| config_error("/model/params", e))?;
            spec.validate().map_err(|e| {
                let pointer = if spec.record_stride.is_some() && e.to_string().contains("record_stride") {
                    "/record_stride".to_string()
                } else {
                    format!("/instances/{k}")
                };
                config_error(pointer, e)
            })?;
            if let (Some(f), ModelSpec::Multimode(p)) = (&self.fliptrace, &spec.model) {
                if f.stride > p.steps() {
                    return Err(config_error(
                        "/fliptrace/stride",
                        format!("stride {} exceeds the run length of {} steps", f.stride, p.steps()),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn resolve_instances(&self) -> Result<Vec<IsingInstance>> {
        self.instances
            .iter()
            .enumerate()
            .map(|(k, r)| match r {
                InstanceRef::Named(name) => make_named_instance(name).map_err(|e| config_error(format!("/instances/{k}"), e)),
                InstanceRef::Inline(inst) => Ok(inst.clone()),
            })
            .collect()
    }

    /// One experiment per instance.
    pub fn experiments(&self) -> Result<Vec<ExperimentSpec>> {
        Ok(self
            .resolve_instances()?
            .into_iter()
            .map(|instance| {
                let mut model = self.model.clone();
                match &mut model {
                    ModelSpec::Singlemode(p) => p.n_pulses = instance.n(),
                    ModelSpec::Multimode(p) => p.n_pulses = instance.n(),
                }
                ExperimentSpec {
                    instance,
                    model,
                    schedule: self.schedule,
                    trials: self.trials,
                    base_seed: self.base_seed,
                    record_stride: self.record_stride,
                }
            })
            .collect())
    }
}

/// Parses and validates a run configuration; errors carry a JSON pointer.
pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig = parse_document(text)?;
    config.validate()?;
    Ok(config)
}

/// Deserializes any JSON document with the same pointer-carrying errors.
pub fn parse_document<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| config_error(display_path(e.path()), e.inner()))
}

pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESET_NAMES
        .iter()
        .position(|&p| p == name)
        .map(|i| PRESET_TEXT[i])
        .ok_or_else(|| CimError::NotFound {
            kind: "preset",
            name: name.to_string(),
            valid: PRESET_NAMES.iter().map(|s| s.to_string()).collect(),
        })
}

pub fn preset(name: &str) -> Result<RunConfig> {
    parse_run_config(preset_text(name)?)
}
