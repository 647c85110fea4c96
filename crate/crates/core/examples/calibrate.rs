//! Calibration sweeps behind the preset parameters. Output goes to stdout;
//! the committed records live in `calibration/`.
//!
//!     cargo run --release --example calibrate -- singlemode [TRIALS]
//!     cargo run --release --example calibrate -- multimode K_NL XI TRIALS [INSTANCE,...]
//!     cargo run --release --example calibrate -- flip-seeds K_NL P FROM TO
//!     cargo run --release --example calibrate -- vacuum-floor [SEEDS]

use std::process::ExitCode;

use cim_core::harness::{run_experiment, ExperimentReport, ExperimentSpec, ModelSpec};
use cim_core::ising::{make_named_instance, IsingInstance};
use cim_core::multimode::{flip_events, FlipDetection, FlipEvent, MultimodeModel, MultimodeParams};
use cim_core::singlemode::{PumpSchedule, SingleModeParams};
use cim_core::trial::Recording;

const RINGS_AND_CUBIC: [&str; 3] = ["ferro-ring-16", "antiferro-ring-16", "cubic-16"];
const FLIP_XI: f64 = 0.008;
const FLIP_TRANSIENT: f64 = 60.0;
const FLIP_STRIDE: u64 = 10;

fn arg<T: std::str::FromStr>(args: &[String], i: usize, default: Option<T>) -> T {
    match args.get(i) {
        Some(v) => v.parse().unwrap_or_else(|_| panic!("argument {i}: cannot parse `{v}`")),
        None => default.unwrap_or_else(|| panic!("missing argument {i}")),
    }
}

fn experiment(instance: IsingInstance, model: ModelSpec, schedule: PumpSchedule, trials: u64, stride: Option<u64>) -> ExperimentReport {
    let mut model = model;
    match &mut model {
        ModelSpec::Singlemode(p) => p.n_pulses = instance.n(),
        ModelSpec::Multimode(p) => p.n_pulses = instance.n(),
    }
    let spec = ExperimentSpec {
        instance,
        model,
        schedule,
        trials,
        base_seed: 1,
        record_stride: stride,
    };
    run_experiment(&spec, None).expect("experiment runs")
}

/// Grid over output coupling and saturation amplitude with the gain, coupler
/// and threshold options of the presets.
fn singlemode(trials: u64) {
    let schedules = [
        ("abrupt", PumpSchedule::Abrupt { p: 2.7 }),
        (
            "gradual",
            PumpSchedule::Linear {
                p_start: 1.0,
                p_end: 2.7,
                ramp_rounds: 10_000,
            },
        ),
    ];
    for t in [0.2, 0.25, 0.3, 0.35, 0.4] {
        for x_sat in [50.0, 100.0, 200.0, 400.0] {
            let params = SingleModeParams {
                out_coupling: t,
                sat_amplitude: x_sat,
                ..SingleModeParams::calibrated()
            };
            let mut line = format!("T={t} x_sat={x_sat}");
            for (label, schedule) in schedules {
                for name in RINGS_AND_CUBIC {
                    let inst = make_named_instance(name).unwrap();
                    let r = experiment(inst, ModelSpec::Singlemode(params.clone()), schedule, trials, Some(10));
                    let cross = r.first_time_at_or_above(0.99).map_or("never".to_string(), |t| format!("{t}"));
                    line += &format!(
                        " | {label} {name} final={:.3} at300={:.3} cross99={cross}",
                        r.success_rate,
                        r.curve_at(300.0).unwrap_or(0.0)
                    );
                }
            }
            println!("{line}");
        }
    }
}

fn multimode(k_nl: f64, xi: f64, trials: u64, names: &str) {
    for name in names.split(',') {
        let inst = make_named_instance(name).unwrap();
        let params = MultimodeParams {
            k_nl,
            xi,
            ..MultimodeParams::default()
        };
        let start = std::time::Instant::now();
        let r = experiment(inst, ModelSpec::Multimode(params), PumpSchedule::Abrupt { p: 1.1 }, trials, None);
        let mut wrong: Vec<(i64, u64)> = Vec::new();
        for t in r.per_trial.iter().filter(|t| !t.success) {
            let e = t.energy.round() as i64;
            match wrong.iter_mut().find(|(v, _)| *v == e) {
                Some(slot) => slot.1 += 1,
                None => wrong.push((e, 1)),
            }
        }
        wrong.sort();
        println!(
            "{name} k_nl={k_nl} xi={xi} trials={trials} success={:.3} failed_numeric={} wrong_energies={wrong:?} s_per_trial={:.3}",
            r.success_rate,
            r.failed_numeric,
            start.elapsed().as_secs_f64() / trials as f64
        );
    }
}

fn flip_trace(k_nl: f64, xi: f64, p: f64, seed: u64) -> Vec<FlipEvent> {
    let inst = make_named_instance("ferro-ring-16").unwrap();
    let params = MultimodeParams {
        k_nl,
        xi,
        ..MultimodeParams::default()
    };
    let model = MultimodeModel::new(params, inst).unwrap();
    let run = model.run(&PumpSchedule::Abrupt { p }, seed, Recording::states(FLIP_STRIDE)).unwrap();
    let traj = run.mode_trajectory.unwrap();
    let detection = FlipDetection {
        transient: FLIP_TRANSIENT,
        ..FlipDetection::default()
    };
    (0..16).flat_map(|a| flip_events(&traj, a, &detection).unwrap()).collect()
}

/// Seeds whose coupled ring run shows a flip above `floor` with a higher-mode
/// rise while the uncoupled run with the same noise shows no flip at all.
fn flip_seeds(k_nl: f64, p: f64, from: u64, to: u64, floor: f64) {
    let (mut coupled, mut uncoupled) = (0, 0);
    for seed in from..to {
        let with = flip_trace(k_nl, FLIP_XI, p, seed);
        let without = flip_trace(k_nl, 0.0, p, seed);
        coupled += usize::from(!with.is_empty());
        uncoupled += usize::from(!without.is_empty());
        let best = with
            .iter()
            .filter(|e| e.peak_higher_mode_intensity > e.pre_window_mean_higher)
            .map(|e| e.window_min_intensity)
            .fold(f64::NEG_INFINITY, f64::max);
        let qualifies = best > floor && without.is_empty();
        println!(
            "seed={seed} coupled_flips={} uncoupled_flips={} best_window_min={best:.3}{}",
            with.len(),
            without.len(),
            if qualifies { " qualifies" } else { "" }
        );
    }
    println!(
        "k_nl={k_nl} p={p} seeds {from}..{to}: coupled runs with flips {coupled}, uncoupled runs with flips {uncoupled}"
    );
}

/// Mean total intensity of an unpumped, uncoupled pulse.
fn vacuum_floor(seeds: u64) {
    let inst = IsingInstance::new("lone", 1, std::iter::empty()).unwrap();
    let params = MultimodeParams {
        n_pulses: 1,
        ..MultimodeParams::default()
    };
    let model = MultimodeModel::new(params.clone(), inst).unwrap();
    let (mut sum, mut count) = (0.0, 0u64);
    for seed in 0..seeds {
        let run = model.run(&PumpSchedule::Abrupt { p: 0.0 }, seed, Recording::states(100)).unwrap();
        for s in run.mode_trajectory.unwrap().iter().filter(|s| s.t >= 20.0) {
            sum += s.pulse(0).iter().map(|c| c.norm_sqr()).sum::<f64>();
            count += 1;
        }
    }
    println!(
        "vacuum floor over {seeds} seeds, {count} samples: {:.4} (K * 2 * variance = {:.4})",
        sum / count as f64,
        params.k_modes as f64 * 2.0 * params.noise_variance
    );
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    match args.get(1).map(String::as_str) {
        Some("singlemode") => singlemode(arg(&args, 2, Some(400))),
        Some("multimode") => multimode(
            arg(&args, 2, None),
            arg(&args, 3, None),
            arg(&args, 4, None),
            &arg(&args, 5, Some("ferro-ring-16,antiferro-ring-16,cubic-16,cubic-4".to_string())),
        ),
        Some("flip-seeds") => flip_seeds(arg(&args, 2, None), arg(&args, 3, None), arg(&args, 4, None), arg(&args, 5, None), 2.5),
        Some("vacuum-floor") => vacuum_floor(arg(&args, 2, Some(20))),
        _ => {
            eprintln!("usage: calibrate singlemode|multimode|flip-seeds|vacuum-floor ...");
            return ExitCode::from(2);
        }
    }
    ExitCode::SUCCESS
}
