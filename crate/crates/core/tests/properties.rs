mod common;

use proptest::prelude::*;

use cim_core::harness::{run_experiment, wilson_interval, ExperimentSpec, ModelSpec};
use cim_core::hermite::build_hermite_basis;
use cim_core::ising::make_named_instance;
use cim_core::multimode::{MultimodeModel, MultimodeParams};
use cim_core::noise::NoiseStream;
use cim_core::singlemode::{PumpSchedule, SingleModeParams, SingleModeSimulator};
use cim_core::tensors::{build_tensors, gaussian_pump, PhaseMatch};
use cim_core::trial::Recording;

use common::hermite_function;

fn short_multimode(name: &str, xi: f64) -> MultimodeModel {
    let inst = make_named_instance(name).unwrap();
    let params = MultimodeParams {
        n_pulses: inst.n(),
        k_modes: 3,
        m_range: 40,
        n_signal_modes: 6.0,
        k_nl: 0.1,
        xi,
        t_end: 10.0,
        ..MultimodeParams::default()
    };
    MultimodeModel::new(params, inst).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn multimode_mirror_for_any_seed(seed in any::<u64>(), xi in 0.0..2.0f64, p in 0.5..2.0f64) {
        let model = short_multimode("antiferro-ring-16", xi);
        let schedule = PumpSchedule::Abrupt { p };
        let a = model.run_with_noise(&schedule, &mut NoiseStream::new(seed), Recording::states(25)).unwrap();
        let b = model.run_with_noise(&schedule, &mut NoiseStream::negated(seed), Recording::states(25)).unwrap();
        prop_assert_eq!(a.energy, b.energy);
        for (u, v) in a.mode_trajectory.unwrap().iter().zip(&b.mode_trajectory.unwrap()) {
            for (x, y) in u.s.iter().zip(&v.s) {
                prop_assert!(x.re == -y.re && x.im == -y.im);
            }
        }
    }

    #[test]
    fn singlemode_mirror_for_any_seed(seed in any::<u64>(), pump in 0.5..4.0f64) {
        let inst = make_named_instance("cubic-16").unwrap();
        let params = SingleModeParams {
            n_pulses: 16,
            rounds: 300,
            readout_round: 300,
            ..SingleModeParams::calibrated()
        };
        let sim = SingleModeSimulator::new(params, inst, PumpSchedule::Abrupt { p: pump }).unwrap();
        let a = sim.run_with_noise(&mut NoiseStream::new(seed), Recording::states(30));
        let b = sim.run_with_noise(&mut NoiseStream::negated(seed), Recording::states(30));
        prop_assert_eq!(a.energy, b.energy);
        for (u, v) in a.trajectory.unwrap().iter().zip(&b.trajectory.unwrap()) {
            for (x, y) in u.x.iter().zip(&v.x) {
                prop_assert!(*x == -*y);
            }
        }
    }

    #[test]
    fn same_seed_same_trial(seed in any::<u64>()) {
        let model = short_multimode("cubic-4", 1.0);
        let schedule = PumpSchedule::Abrupt { p: 1.1 };
        let a = model.run(&schedule, seed, Recording::states(50)).unwrap();
        let b = model.run(&schedule, seed, Recording::states(50)).unwrap();
        prop_assert_eq!(a.spins, b.spins);
        prop_assert_eq!(a.mode_trajectory, b.mode_trajectory);
    }

    #[test]
    fn basis_matches_explicit_polynomial(k in 1usize..7, n_s in 3.0..12.0f64) {
        let m = (6.0 * n_s).ceil() as usize;
        let basis = build_hermite_basis(k, n_s, m).unwrap();
        for a in 0..k {
            for mm in -(m as i64)..=m as i64 {
                prop_assert!((basis.psi(a, mm) - hermite_function(a, n_s, mm)).abs() < 1e-10);
                let sign = if a % 2 == 0 { 1.0 } else { -1.0 };
                prop_assert_eq!(basis.psi(a, -mm), sign * basis.psi(a, mm));
            }
        }
        for (a, row) in basis.gram().iter().enumerate() {
            for (b, v) in row.iter().enumerate() {
                let expect = if a == b { 1.0 } else { 0.0 };
                prop_assert!((v - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn tensor_symmetries(k in 1usize..6, n_s in 3.0..10.0f64, sinc in any::<bool>()) {
        let basis = build_hermite_basis(k, n_s, (5.0 * n_s).ceil() as usize).unwrap();
        let phase = if sinc { PhaseMatch::Sinc { width: 0.05 } } else { PhaseMatch::Constant };
        let t = build_tensors(&basis, &phase, &gaussian_pump(&basis)).unwrap();
        let g_scale = t.g_matrix().iter().map(|v| v.norm()).fold(0.0, f64::max);
        let l_scale = t.l_tensor().iter().map(|v| v.abs()).fold(0.0, f64::max);
        for i in 0..k {
            for j in 0..k {
                if (i + j) % 2 == 0 {
                    prop_assert_eq!(t.d(i, j), 0.0);
                }
                prop_assert!((t.d(i, j) - t.d(j, i)).abs() <= 1e-12 * n_s);
                prop_assert!((t.g(i, j) - t.g(j, i)).norm() <= 1e-12 * g_scale);
                for a in 0..k {
                    for b in 0..k {
                        let v = t.l(i, j, a, b);
                        prop_assert!((v - t.l(a, b, i, j)).abs() <= 1e-12 * l_scale);
                        prop_assert!((v - t.l(j, i, b, a)).abs() <= 1e-12 * l_scale);
                    }
                }
            }
        }
    }

    #[test]
    fn wilson_interval_brackets_the_rate(trials in 1u64..5000, frac in 0.0..=1.0f64) {
        let successes = (frac * trials as f64).round() as u64;
        let (lo, hi) = wilson_interval(successes, trials);
        let p = successes as f64 / trials as f64;
        prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
    }
}

#[test]
fn report_is_independent_of_thread_count() {
    let inst = make_named_instance("antiferro-ring-16").unwrap();
    let spec = ExperimentSpec {
        instance: inst,
        model: ModelSpec::Singlemode(SingleModeParams {
            n_pulses: 16,
            rounds: 400,
            readout_round: 400,
            ..SingleModeParams::calibrated()
        }),
        schedule: PumpSchedule::Abrupt { p: 2.7 },
        trials: 24,
        base_seed: 9,
        record_stride: Some(20),
    };
    let hashes: Vec<String> = [1, 2, 4]
        .into_iter()
        .map(|threads| run_experiment(&spec, Some(threads)).unwrap().report_hash)
        .collect();
    assert!(hashes.windows(2).all(|w| w[0] == w[1]), "{hashes:?}");
}
