use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use star_sim_core::channel::{ChannelRealization, UserChannel};
use star_sim_core::element::{OperatingProtocol, PhaseShiftModel, Side, TsFractions};
use star_sim_core::optim::*;
use star_sim_core::Error;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn cn(rng: &mut ChaCha8Rng, scale: f64) -> Complex64 {
    c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale
}

/// Random channels of roughly desk-scale strength: cascade gains near 1e-6
/// per element, noise 1e-11 W.
fn random_channels(m: usize, n: usize, sides: &[Side], seed: u64) -> ChannelRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(m, n, |_, _| cn(&mut rng, 1e-3));
    let users = sides
        .iter()
        .map(|&side| UserChannel {
            side,
            h: DVector::from_fn(m, |_, _| cn(&mut rng, 1e-3)),
            direct: DVector::zeros(n),
        })
        .collect();
    ChannelRealization { g, users }
}

fn se_problem(channels: ChannelRealization, model: PhaseShiftModel, protocol: OperatingProtocol) -> BeamformingProblem {
    BeamformingProblem {
        objective: Objective::SumSpectralEfficiency { power_budget: 1.0 },
        channels,
        noise_power: 1e-11,
        model,
        protocol,
    }
}

fn two_sides() -> [Side; 2] {
    [Side::Transmission, Side::Reflection]
}

#[test]
fn penalty_reaches_coupled_set_and_independent_dominates() {
    let cfg = PenaltyConfig::default();
    for seed in 0..4 {
        let ch = random_channels(16, 2, &two_sides(), seed);
        let coupled = penalty_optimize(
            &se_problem(ch.clone(), PhaseShiftModel::Coupled, OperatingProtocol::EnergySplitting),
            &cfg,
            seed,
        )
        .unwrap();
        assert!(coupled.max_violation() < 1e-4);
        let beam = match &coupled.beamforming {
            Beamforming::Shared(s) => s,
            _ => unreachable!(),
        };
        for co in &beam.coeffs {
            assert!(co.is_lossless());
        }
        let budget: f64 = beam.precoders.iter().map(|w| w.norm_sqr()).sum();
        assert!(budget <= 1.0 + 1e-9);

        let independent = penalty_optimize_from(
            &se_problem(ch, PhaseShiftModel::Independent, OperatingProtocol::EnergySplitting),
            &cfg,
            seed,
            std::slice::from_ref(&coupled.beamforming),
        )
        .unwrap();
        assert!(independent.objective_value >= coupled.objective_value - 1e-9);
    }
}

#[test]
fn objective_value_matches_evaluation() {
    let ch = random_channels(8, 2, &two_sides(), 5);
    let prob = se_problem(ch, PhaseShiftModel::Coupled, OperatingProtocol::EnergySplitting);
    let sol = penalty_optimize(&prob, &PenaltyConfig::default(), 1).unwrap();
    let direct = evaluate_objective(&prob, &sol.beamforming).unwrap();
    assert!((direct - sol.objective_value).abs() < 1e-9);
}

#[test]
fn single_user_matches_co_phasing_optimum() {
    // N = 1: |a| ≤ Σ |h_m g_m| with equality when every element co-phases
    // and sends all energy towards the user
    for seed in 0..3 {
        let ch = random_channels(8, 1, &[Side::Reflection], seed);
        let bound: f64 = (0..8).map(|i| (ch.users[0].h[i] * ch.g[(i, 0)]).norm()).sum();
        let optimum = (1.0 + bound * bound / 1e-11).log2();
        let prob = se_problem(ch, PhaseShiftModel::Independent, OperatingProtocol::EnergySplitting);
        let cfg = PenaltyConfig {
            inner_tol: 1e-12,
            max_inner: 2000,
            ..Default::default()
        };
        let pen = penalty_optimize(&prob, &cfg, seed).unwrap();
        let alt = alternating_optimize(&prob, &cfg, seed).unwrap();
        assert!(
            (pen.objective_value - optimum).abs() < 1e-6,
            "{} vs {optimum}",
            pen.objective_value
        );
        assert!(
            (alt.objective_value - optimum).abs() < 1e-6,
            "{} vs {optimum}",
            alt.objective_value
        );
    }
}

#[test]
fn alternating_half_steps_improve_before_projection() {
    let cfg = PenaltyConfig::default();
    for seed in 0..5 {
        let ch = random_channels(16, 2, &two_sides(), 10 + seed);
        let prob = se_problem(ch, PhaseShiftModel::Coupled, OperatingProtocol::EnergySplitting);
        let sol = alternating_optimize(&prob, &cfg, seed).unwrap();
        for pair in sol.trace.chunks(2) {
            if let [pre, post] = pair {
                assert_eq!(post.inner, pre.inner + 1);
                assert!(post.objective >= pre.objective - 1e-9 * pre.objective.abs());
            }
        }
        // final iterate is projected
        assert!(sol.max_violation() < 1e-9);
    }
}

#[test]
fn alternating_rejects_other_protocols() {
    let ch = random_channels(4, 2, &two_sides(), 0);
    let prob = se_problem(ch, PhaseShiftModel::Coupled, OperatingProtocol::ModeSwitching);
    assert!(matches!(
        alternating_optimize(&prob, &PenaltyConfig::default(), 0),
        Err(Error::ScenarioMismatch(_))
    ));
}

#[test]
fn protocols_respect_their_structure() {
    let cfg = PenaltyConfig::default();
    let ch = random_channels(8, 2, &two_sides(), 3);
    let ms = penalty_optimize(
        &se_problem(ch.clone(), PhaseShiftModel::Coupled, OperatingProtocol::ModeSwitching),
        &cfg,
        0,
    )
    .unwrap();
    let Beamforming::Shared(slot) = &ms.beamforming else {
        panic!("mode switching returns one slot")
    };
    for co in &slot.coeffs {
        assert!(co.beta_t() == 0.0 || co.beta_r() == 0.0, "{co:?}");
    }

    let fixed = TsFractions::new(0.3, 0.7).unwrap();
    let ts = penalty_optimize(
        &se_problem(
            ch,
            PhaseShiftModel::Coupled,
            OperatingProtocol::TimeSwitching { fractions: Some(fixed) },
        ),
        &cfg,
        0,
    )
    .unwrap();
    let Beamforming::TimeSwitched {
        transmission,
        reflection,
        fractions,
    } = &ts.beamforming
    else {
        panic!("time switching returns two slots")
    };
    assert_eq!(*fractions, fixed);
    assert!(transmission.coeffs.iter().all(|c| c.beta_t() == 1.0));
    assert!(reflection.coeffs.iter().all(|c| c.beta_r() == 1.0));
}

#[test]
fn penalty_power_minimisation_meets_targets() {
    let ch = random_channels(8, 4, &two_sides(), 7);
    let targets = vec![2.0, 3.0];
    let prob = BeamformingProblem {
        objective: Objective::TransmitPower {
            sinr_targets: targets.clone(),
            power_cap: 10.0,
        },
        channels: ch,
        noise_power: 1e-11,
        model: PhaseShiftModel::Coupled,
        protocol: OperatingProtocol::EnergySplitting,
    };
    let sol = penalty_optimize(&prob, &PenaltyConfig::default(), 2).unwrap();
    let Beamforming::Shared(slot) = &sol.beamforming else {
        unreachable!()
    };
    let a: Vec<_> = (0..2)
        .map(|u| star_sim_core::channel::effective_channel(&prob.channels, &slot.coeffs, u).unwrap())
        .collect();
    let s = sinrs(&a, &slot.precoders, prob.noise_power);
    for (got, want) in s.iter().zip(&targets) {
        assert!(*got >= want * (1.0 - 1e-6), "{got} < {want}");
    }
    assert!((sol.beamforming.transmit_power() - sol.objective_value).abs() <= 1e-12 * sol.objective_value);
    assert!(sol.max_violation() < 1e-4);

    let capped = BeamformingProblem {
        objective: Objective::TransmitPower {
            sinr_targets: targets,
            power_cap: 0.1 * sol.objective_value,
        },
        ..prob
    };
    assert!(matches!(
        penalty_optimize(&capped, &PenaltyConfig::default(), 2),
        Err(Error::InfeasibleTargets(_))
    ));
}

fn siso_pair(m: usize, seed: u64, targets: [f64; 2]) -> BeamformingProblem {
    BeamformingProblem {
        objective: Objective::TransmitPower {
            sinr_targets: targets.to_vec(),
            power_cap: 1e3,
        },
        channels: random_channels(m, 1, &two_sides(), seed),
        noise_power: 1e-11,
        model: PhaseShiftModel::Coupled,
        protocol: OperatingProtocol::EnergySplitting,
    }
}

#[test]
fn element_wise_trace_never_increases() {
    for seed in 0..5 {
        let sol = element_wise_optimize(&siso_pair(16, seed, [1.0, 2.0]), &ElementWiseConfig::default(), seed).unwrap();
        let mut prev = f64::INFINITY;
        for row in &sol.trace {
            assert!(row.objective <= prev, "{} > {prev}", row.objective);
            prev = row.objective;
            assert!(row.max_violation < 1e-9);
        }
        assert_eq!(sol.objective_value, prev);
    }
}

#[test]
fn element_wise_doubling_targets_doubles_power() {
    for seed in 0..3 {
        let cfg = ElementWiseConfig::default();
        let p1 = element_wise_optimize(&siso_pair(8, seed, [1.0, 1.5]), &cfg, seed).unwrap();
        let p2 = element_wise_optimize(&siso_pair(8, seed, [2.0, 3.0]), &cfg, seed).unwrap();
        assert!(p2.objective_value >= 2.0 * p1.objective_value * (1.0 - 1e-9));
    }
}

#[test]
fn element_wise_precoders_deliver_the_targets() {
    let prob = siso_pair(8, 4, [1.0, 2.0]);
    let sol = element_wise_optimize(&prob, &ElementWiseConfig::default(), 0).unwrap();
    let Beamforming::Shared(slot) = &sol.beamforming else {
        unreachable!()
    };
    for (u, target) in [1.0, 2.0].iter().enumerate() {
        let a = star_sim_core::channel::effective_channel(&prob.channels, &slot.coeffs, u).unwrap();
        let snr = (a[0] * slot.precoders[(0, u)]).norm_sqr() / prob.noise_power;
        assert!((snr - target).abs() < 1e-9 * target);
    }
}

/// Required power over a grid of (θ, φ^t, φ^r) restricted to coupled pairs.
fn brute_force_single_element(q: [Complex64; 2], d: [Complex64; 2], need: f64) -> f64 {
    let steps = 360;
    let mut best = f64::INFINITY;
    for i in 0..=90 {
        let theta = FRAC_PI_2 * i as f64 / 90.0;
        for pt in 0..steps {
            for pr in [(pt + 90) % steps, (pt + 270) % steps] {
                let (ft, fr) = (TAU * pt as f64 / steps as f64, TAU * pr as f64 / steps as f64);
                let at = d[0] + Complex64::from_polar(theta.sin(), ft) * q[0];
                let ar = d[1] + Complex64::from_polar(theta.cos(), fr) * q[1];
                best = best.min((need / at.norm_sqr()).max(need / ar.norm_sqr()));
            }
        }
    }
    best
}

#[test]
fn single_element_matches_brute_force_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..5 {
        let q = cn(&mut rng, 1e-6);
        let dir = cn(&mut rng, 3e-7);
        let prob = BeamformingProblem {
            objective: Objective::TransmitPower {
                sinr_targets: vec![1.0, 1.0],
                power_cap: 1e6,
            },
            channels: ChannelRealization {
                g: DMatrix::from_element(1, 1, c(1.0, 0.0)),
                users: vec![
                    UserChannel {
                        side: Side::Transmission,
                        h: DVector::from_element(1, q),
                        direct: DVector::from_element(1, dir),
                    },
                    UserChannel {
                        side: Side::Reflection,
                        h: DVector::from_element(1, q),
                        direct: DVector::from_element(1, dir),
                    },
                ],
            },
            noise_power: 1e-11,
            model: PhaseShiftModel::Coupled,
            protocol: OperatingProtocol::EnergySplitting,
        };
        let sol = element_wise_optimize(&prob, &ElementWiseConfig::default(), 0).unwrap();
        let grid = brute_force_single_element([q, q], [dir, dir], 1e-11);
        let gap_db = 10.0 * (sol.objective_value / grid).log10();
        assert!(gap_db.abs() < 0.1, "gap {gap_db} dB");
    }
}

#[test]
fn element_wise_checks_preconditions() {
    let cfg = ElementWiseConfig::default();
    let mut p = siso_pair(4, 0, [1.0, 1.0]);
    p.model = PhaseShiftModel::Independent;
    assert!(matches!(
        element_wise_optimize(&p, &cfg, 0),
        Err(Error::ScenarioMismatch(_))
    ));

    let mut p = siso_pair(4, 0, [1.0, 1.0]);
    p.channels = random_channels(4, 2, &two_sides(), 0);
    assert!(matches!(
        element_wise_optimize(&p, &cfg, 0),
        Err(Error::ScenarioMismatch(_))
    ));

    let mut p = siso_pair(4, 0, [1.0, 1.0]);
    p.channels = random_channels(4, 1, &[Side::Reflection, Side::Reflection], 0);
    assert!(matches!(
        element_wise_optimize(&p, &cfg, 0),
        Err(Error::ScenarioMismatch(_))
    ));

    let mut p = siso_pair(4, 0, [1.0, 1.0]);
    p.objective = Objective::SumSpectralEfficiency { power_budget: 1.0 };
    assert!(matches!(
        element_wise_optimize(&p, &cfg, 0),
        Err(Error::ScenarioMismatch(_))
    ));
}

#[test]
fn element_wise_reports_infeasible_cap() {
    let mut p = siso_pair(4, 0, [1.0, 1.0]);
    p.objective = Objective::TransmitPower {
        sinr_targets: vec![1.0, 1.0],
        power_cap: 1e-12,
    };
    assert!(matches!(
        element_wise_optimize(&p, &ElementWiseConfig::default(), 0),
        Err(Error::InfeasibleTargets(_))
    ));
}

#[test]
fn penalty_config_rejects_bad_schedules() {
    let ch = random_channels(4, 2, &two_sides(), 0);
    let prob = se_problem(ch, PhaseShiftModel::Coupled, OperatingProtocol::EnergySplitting);
    for cfg in [
        PenaltyConfig {
            growth: 1.0,
            ..Default::default()
        },
        PenaltyConfig {
            rho0: 0.0,
            ..Default::default()
        },
        PenaltyConfig {
            max_outer: 0,
            ..Default::default()
        },
    ] {
        assert!(penalty_optimize(&prob, &cfg, 0).is_err(), "{cfg:?}");
    }
}

#[test]
fn same_seed_same_solution() {
    let ch = random_channels(8, 2, &two_sides(), 1);
    let prob = se_problem(ch, PhaseShiftModel::Coupled, OperatingProtocol::EnergySplitting);
    let a = penalty_optimize(&prob, &PenaltyConfig::default(), 5).unwrap();
    let b = penalty_optimize(&prob, &PenaltyConfig::default(), 5).unwrap();
    assert_eq!(a, b);
    let _ = PI;
}
