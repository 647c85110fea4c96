//! Monte Carlo experiments: trial fan-out, scoring against the exact
//! spectrum, success curves and reproducible reports.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};
use crate::ising::{brute_force_spectrum, HistogramBin, IsingInstance, SpectrumSummary};
use crate::multimode::{MultimodeModel, MultimodeParams};
use crate::noise::trial_seed;
use crate::singlemode::{PumpSchedule, SingleModeParams, SingleModeSimulator};
use crate::trial::{Recording, TracePoint, TrialFlag, TrialResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ModelSpec {
    Singlemode(SingleModeParams),
    Multimode(MultimodeParams),
}

impl ModelSpec {
    /// Label of the curve's time axis.
    pub fn time_label(&self) -> &'static str {
        match self {
            ModelSpec::Singlemode(_) => "round",
            ModelSpec::Multimode(_) => "t",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub instance: IsingInstance,
    pub model: ModelSpec,
    /// Pump rate over rounds (single-mode) or time in units of `1/gamma_s`
    /// (multimode).
    pub schedule: PumpSchedule,
    pub trials: u64,
    pub base_seed: u64,
    /// Success-curve stride in rounds or integrator steps; `None` skips the curve.
    #[serde(default)]
    pub record_stride: Option<u64>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.record_stride == Some(0) {
            return Err(invalid("record_stride must be at least 1"));
        }
        let n_pulses = match &self.model {
            ModelSpec::Singlemode(p) => p.n_pulses,
            ModelSpec::Multimode(p) => p.n_pulses,
        };
        if n_pulses != self.instance.n() {
            return Err(invalid(format!(
                "instance has {} vertices but the model has {n_pulses} pulses",
                self.instance.n()
            )));
        }
        let length = match &self.model {
            ModelSpec::Singlemode(p) => p.rounds,
            ModelSpec::Multimode(p) => p.steps(),
        };
        if self.record_stride.is_some_and(|s| s > length) {
            return Err(invalid(format!(
                "record_stride {} exceeds the run length of {length}",
                self.record_stride.unwrap_or(0)
            )));
        }
        self.schedule.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvePoint {
    pub time: f64,
    pub success_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialSummary {
    pub index: u64,
    pub seed: u64,
    pub spins: crate::ising::SpinConfig,
    pub energy: f64,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<TrialFlag>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub spec: ExperimentSpec,
    pub code_version: String,
    /// Seconds since the Unix epoch; excluded from the report hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_unix: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentReport {
    pub ground_energy: f64,
    pub trials: u64,
    pub successes: u64,
    pub success_rate: f64,
    pub ci95: (f64, f64),
    pub failed_numeric: u64,
    pub degenerate_readouts: u64,
    pub success_curve: Vec<CurvePoint>,
    pub final_energy_histogram: Vec<HistogramBin>,
    pub per_trial: Vec<TrialSummary>,
    pub provenance: Provenance,
    /// SHA-256 of the report with `created_unix` and this field cleared.
    #[serde(default)]
    pub report_hash: String,
}

impl ExperimentReport {
    pub fn compute_hash(&self) -> String {
        let mut copy = self.clone();
        copy.provenance.created_unix = None;
        copy.report_hash.clear();
        let bytes = serde_json::to_vec(&copy).expect("report serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn failed_numeric_fraction(&self) -> f64 {
        self.failed_numeric as f64 / self.trials as f64
    }

    /// First recorded time at which the curve reaches `level`.
    pub fn first_time_at_or_above(&self, level: f64) -> Option<f64> {
        self.success_curve.iter().find(|p| p.success_fraction >= level).map(|p| p.time)
    }

    /// Curve value at the last recorded time not after `time`.
    pub fn curve_at(&self, time: f64) -> Option<f64> {
        self.success_curve
            .iter()
            .take_while(|p| p.time <= time)
            .last()
            .map(|p| p.success_fraction)
    }

    pub fn curve_csv(&self) -> String {
        let mut out = format!("{},success_fraction\n", self.provenance.spec.model.time_label());
        for p in &self.success_curve {
            out.push_str(&format!("{},{}\n", p.time, p.success_fraction));
        }
        out
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("energy,count\n");
        for b in &self.final_energy_histogram {
            out.push_str(&format!("{},{}\n", b.energy, b.count));
        }
        out
    }
}

/// 95% Wilson score interval.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = successes.min(trials) as f64 / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt();
    // The bounds touch 0 and 1 exactly at the extremes; pin them there
    // instead of leaving rounding residue.
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes >= trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Whether a recorded sign readout sits at the ground energy. Degenerate
/// readouts never count.
pub fn success_curve_point(point: &TracePoint, spectrum: &SpectrumSummary) -> bool {
    !point.degenerate && spectrum.is_ground_energy(point.energy)
}

enum Runner {
    Single(SingleModeSimulator),
    Multi(MultimodeModel),
}

impl Runner {
    fn run(&self, schedule: &PumpSchedule, seed: u64, recording: Recording) -> Result<TrialResult> {
        match self {
            Runner::Single(sim) => Ok(sim.run(seed, recording)),
            Runner::Multi(model) => model.run(schedule, seed, recording),
        }
    }
}

/// Runs every trial of `spec` on a pool of `parallelism` threads (all cores
/// when `None`). The result does not depend on the thread count.
pub fn run_experiment(spec: &ExperimentSpec, parallelism: Option<usize>) -> Result<ExperimentReport> {
    spec.validate()?;
    let spectrum = brute_force_spectrum(&spec.instance)?;
    let runner = match &spec.model {
        ModelSpec::Singlemode(p) => Runner::Single(SingleModeSimulator::new(p.clone(), spec.instance.clone(), spec.schedule)?),
        ModelSpec::Multimode(p) => Runner::Multi(MultimodeModel::new(p.clone(), spec.instance.clone())?),
    };
    let recording = match spec.record_stride {
        Some(s) => Recording::energies(s),
        None => Recording::none(),
    };

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = parallelism {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| invalid(format!("thread pool: {e}")))?;
    let results: Vec<(u64, TrialResult)> = pool.install(|| {
        (0..spec.trials)
            .into_par_iter()
            .map(|i| {
                let seed = trial_seed(spec.base_seed, i);
                runner.run(&spec.schedule, seed, recording).map(|r| (seed, r))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    Ok(aggregate(spec, &spectrum, results))
}

fn aggregate(spec: &ExperimentSpec, spectrum: &SpectrumSummary, results: Vec<(u64, TrialResult)>) -> ExperimentReport {
    let trials = results.len() as u64;

    // Every trial records on the same grid; a trial that stopped early
    // counts as failed at the times it never reached.
    let grid: Vec<f64> = results
        .iter()
        .map(|(_, r)| &r.energy_trace)
        .max_by_key(|t| t.len())
        .map(|t| t.iter().map(|p| p.time).collect())
        .unwrap_or_default();
    let mut hits = vec![0u64; grid.len()];
    for (_, r) in &results {
        for (h, p) in hits.iter_mut().zip(&r.energy_trace) {
            if success_curve_point(p, spectrum) {
                *h += 1;
            }
        }
    }
    let success_curve = grid
        .iter()
        .zip(&hits)
        .map(|(&time, &h)| CurvePoint {
            time,
            success_fraction: h as f64 / trials as f64,
        })
        .collect();

    let mut histogram: BTreeMap<i64, (f64, u64)> = BTreeMap::new();
    let tol = spectrum.tolerance();
    let mut per_trial = Vec::with_capacity(results.len());
    let (mut successes, mut failed, mut degenerate) = (0, 0, 0);
    for (index, (seed, r)) in results.into_iter().enumerate() {
        let success = !r.failed_numeric()
            && !r.has_flag(TrialFlag::DegenerateReadout)
            && spectrum.is_ground_energy(r.energy);
        successes += success as u64;
        failed += r.failed_numeric() as u64;
        degenerate += r.has_flag(TrialFlag::DegenerateReadout) as u64;
        let key = (r.energy / tol).round() as i64;
        histogram.entry(key).or_insert((r.energy, 0)).1 += 1;
        per_trial.push(TrialSummary {
            index: index as u64,
            seed,
            spins: r.spins,
            energy: r.energy,
            success,
            flags: r.flags,
        });
    }

    let mut report = ExperimentReport {
        ground_energy: spectrum.ground_energy,
        trials,
        successes,
        success_rate: successes as f64 / trials as f64,
        ci95: wilson_interval(successes, trials),
        failed_numeric: failed,
        degenerate_readouts: degenerate,
        success_curve,
        final_energy_histogram: histogram
            .into_values()
            .map(|(energy, count)| HistogramBin {
                energy,
                count,
            })
            .collect(),
        per_trial,
        provenance: Provenance {
            spec: spec.clone(),
            code_version: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).to_string(),
            created_unix: None,
        },
        report_hash: String::new(),
    };
    report.report_hash = report.compute_hash();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ising::{make_named_instance, SpinConfig};
    use crate::singlemode::run_single_trial;

    fn small_spec(name: &str, trials: u64) -> ExperimentSpec {
        ExperimentSpec {
            instance: make_named_instance(name).unwrap(),
            model: ModelSpec::Singlemode(SingleModeParams {
                rounds: 400,
                readout_round: 400,
                ..SingleModeParams::calibrated()
            }),
            schedule: PumpSchedule::Abrupt { p: 2.7 },
            trials,
            base_seed: 17,
            record_stride: Some(20),
        }
    }

    #[test]
    fn wilson_closed_form() {
        let (lo, hi) = wilson_interval(1000, 1000);
        // z^2 / (n + z^2) evaluated by hand.
        let z2 = 1.959_963_984_540_054f64.powi(2);
        assert!((lo - 1000.0 / (1000.0 + z2)).abs() < 1e-12);
        assert!((lo - 0.9962).abs() < 1e-4);
        assert_eq!(hi, 1.0);
        assert_eq!(wilson_interval(0, 1000).0, 0.0);
        let (lo, hi) = wilson_interval(500, 1000);
        assert!(((lo + hi) / 2.0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn curve_point_convention() {
        let inst = make_named_instance("ferro-ring-16").unwrap();
        let spectrum = brute_force_spectrum(&inst).unwrap();
        let at = |spins: &SpinConfig, degenerate| TracePoint {
            time: 0.0,
            energy: crate::ising::ising_energy(&inst, spins).unwrap(),
            degenerate,
        };
        assert!(success_curve_point(&at(&SpinConfig::all_up(16), false), &spectrum));
        let walls: SpinConfig = "++++----++++++++".parse().unwrap();
        assert_eq!(at(&walls, false).energy, -12.0);
        assert!(!success_curve_point(&at(&walls, false), &spectrum));
        let (zero, degenerate) = SpinConfig::from_signs(vec![0.0; 16]);
        assert!(!success_curve_point(&at(&zero, degenerate), &spectrum));
    }

    #[test]
    fn one_trial_report_matches_the_trial() {
        let spec = small_spec("cubic-16", 1);
        let report = run_experiment(&spec, Some(1)).unwrap();
        let ModelSpec::Singlemode(p) = &spec.model else { unreachable!() };
        let trial = run_single_trial(p, &spec.instance, &spec.schedule, trial_seed(17, 0), Recording::energies(20)).unwrap();
        assert_eq!(report.per_trial[0].energy, trial.energy);
        assert_eq!(report.per_trial[0].spins, trial.spins);
        assert_eq!(report.success_curve.len(), trial.energy_trace.len());
        assert_eq!(report.successes, report.per_trial[0].success as u64);
    }

    #[test]
    fn report_is_reproducible_and_consistent() {
        let spec = small_spec("antiferro-ring-16", 24);
        let a = run_experiment(&spec, Some(1)).unwrap();
        let mut b = run_experiment(&spec, Some(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.report_hash, a.compute_hash());
        b.provenance.created_unix = Some(12345);
        assert_eq!(b.compute_hash(), a.report_hash);

        assert_eq!(a.success_rate, a.successes as f64 / a.trials as f64);
        assert!(a.ci95.0 <= a.success_rate && a.success_rate <= a.ci95.1);
        assert_eq!(a.final_energy_histogram.iter().map(|b| b.count).sum::<u64>(), a.trials);
        assert!(a.success_curve.iter().all(|p| (0.0..=1.0).contains(&p.success_fraction)));
        assert_eq!(a.curve_csv().lines().count(), a.success_curve.len() + 1);
        assert!(a.histogram_csv().starts_with("energy,count\n"));

        let json = serde_json::to_string(&a).unwrap();
        let back: ExperimentReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);

        let mut other = spec.clone();
        other.base_seed = 18;
        assert_ne!(run_experiment(&other, Some(1)).unwrap().report_hash, a.report_hash);
    }

    #[test]
    fn spec_validation() {
        let mut spec = small_spec("cubic-4", 1);
        assert!(run_experiment(&spec, None).is_err(), "pulse count mismatch");
        if let ModelSpec::Singlemode(p) = &mut spec.model {
            p.n_pulses = 4;
        }
        assert!(run_experiment(&spec, None).is_ok());
        for bad in [
            ExperimentSpec { trials: 0, ..spec.clone() },
            ExperimentSpec {
                record_stride: Some(0),
                ..spec.clone()
            },
            ExperimentSpec {
                record_stride: Some(401),
                ..spec.clone()
            },
        ] {
            assert!(run_experiment(&bad, None).is_err());
        }
    }
}
