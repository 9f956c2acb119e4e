//! Acceptance suite. Runs every criterion in sequence, so the timing
//! criterion is not disturbed by other tests in this binary, and prints one
//! PASS/FAIL line per criterion before failing on any FAIL.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use star_sim_core::channel::{rayleigh_distance, ChannelRealization, UserChannel, SPEED_OF_LIGHT};
use star_sim_core::element::*;
use star_sim_core::optim::*;
use star_sim_core::parallel::ExecMode;
use star_sim_core::scenarios::*;

type Verdict = (bool, String);
type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Verdict + 'a>);

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn rayleigh() -> Verdict {
    let d = rayleigh_distance(0.5, SPEED_OF_LIGHT / 60e9).unwrap();
    ((d - 100.0).abs() <= 0.5, format!("L = 0.5 m at 60 GHz gives {d:.4} m"))
}

fn impedance() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut energy, mut phase) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let y = c(0.0, rng.random_range(-0.05..0.05));
        let z = c(0.0, rng.random_range(-2000.0..2000.0));
        let (t, r) = coeffs_from_impedance(&ImpedancePair::new(y, z)).unwrap();
        energy = energy.max((t.norm_sqr() + r.norm_sqr() - 1.0).abs());
        // the phase difference is undefined when one side carries no energy
        if t.norm() > 1e-6 && r.norm() > 1e-6 {
            let d = canonical_phase(r.arg() - t.arg());
            phase = phase.max(angular_distance(d, FRAC_PI_2).min(angular_distance(d, 1.5 * PI)));
        }
    }
    (
        energy <= 1e-9 && phase <= 1e-9,
        format!("1000 pairs: max energy error {energy:.2e}, max phase error {phase:.2e} rad"),
    )
}

fn default_scenario() -> NetworkScenario {
    NetworkScenario {
        trials: 20,
        ..Default::default()
    }
}

fn models() -> Vec<ModelComparison> {
    compare_models(&default_scenario(), &PenaltyConfig::default(), ExecMode::Parallel).unwrap()
}

fn coupled_convergence(cmp: &[ModelComparison]) -> Verdict {
    let converged = cmp.iter().filter(|m| m.coupled.max_violation() < 1e-3).count();
    let monotone = cmp
        .iter()
        .filter(|m| m.coupled.outer_violations().windows(2).all(|w| w[1] <= w[0]))
        .count();
    let n = cmp.len();
    (
        converged as f64 >= 0.95 * n as f64 && monotone == n,
        format!("{converged}/{n} runs within 1e-3 rad of the coupled set, {monotone}/{n} with non-increasing outer violation"),
    )
}

fn model_ordering(cmp: &[ModelComparison]) -> Verdict {
    let mean = |f: fn(&ModelComparison) -> f64| cmp.iter().map(f).sum::<f64>() / cmp.len() as f64;
    let ind = mean(|m| m.independent.objective_value);
    let cpl = mean(|m| m.coupled.objective_value);
    let ao = mean(|m| m.alternating.objective_value);
    (
        ind >= cpl && cpl >= ao && cpl >= 0.9 * ind,
        format!(
            "mean SE independent {ind:.4}, penalty coupled {cpl:.4}, alternating {ao:.4}, ratio {:.4}",
            cpl / ind
        ),
    )
}

fn protocol_ordering() -> Verdict {
    let cmp = compare_protocols(
        &default_scenario(),
        PhaseShiftModel::Coupled,
        &PenaltyConfig::default(),
        ExecMode::Parallel,
    )
    .unwrap();
    let bad = cmp
        .iter()
        .filter(|p| {
            let es = p.energy_splitting.objective_value;
            es < p.mode_switching.objective_value - 1e-9 || es < p.time_switching.objective_value - 1e-9
        })
        .count();
    let mean = |f: fn(&ProtocolComparison) -> f64| cmp.iter().map(f).sum::<f64>() / cmp.len() as f64;
    (
        bad == 0,
        format!(
            "{bad}/{} seeds out of order; mean SE ES {:.4}, MS {:.4}, TS {:.4}",
            cmp.len(),
            mean(|p| p.energy_splitting.objective_value),
            mean(|p| p.mode_switching.objective_value),
            mean(|p| p.time_switching.objective_value)
        ),
    )
}

fn siso_scenario(m: usize) -> NetworkScenario {
    let mut sc = default_scenario();
    sc.bs.antennas = 1;
    sc.layout = sc.layout.resized(m);
    sc
}

/// Required power over a grid of split angle and transmission phase, with
/// the reflection phase on either coupled branch.
fn brute_force_single_element(q: Complex64, d: Complex64, need: f64) -> f64 {
    let steps = 360;
    let mut best = f64::INFINITY;
    for i in 0..=90 {
        let theta = FRAC_PI_2 * i as f64 / 90.0;
        for pt in 0..steps {
            for pr in [(pt + 90) % steps, (pt + 270) % steps] {
                let (ft, fr) = (TAU * pt as f64 / steps as f64, TAU * pr as f64 / steps as f64);
                let at = d + Complex64::from_polar(theta.sin(), ft) * q;
                let ar = d + Complex64::from_polar(theta.cos(), fr) * q;
                best = best.min((need / at.norm_sqr()).max(need / ar.norm_sqr()));
            }
        }
    }
    best
}

fn symmetric_single_element(q: Complex64, d: Complex64) -> BeamformingProblem {
    let user = |side| UserChannel {
        side,
        h: DVector::from_element(1, q),
        direct: DVector::from_element(1, d),
    };
    BeamformingProblem {
        objective: Objective::TransmitPower {
            sinr_targets: vec![1.0, 1.0],
            power_cap: 1e6,
        },
        channels: ChannelRealization {
            g: DMatrix::from_element(1, 1, c(1.0, 0.0)),
            users: vec![user(Side::Transmission), user(Side::Reflection)],
        },
        noise_power: 1e-11,
        model: PhaseShiftModel::Coupled,
        protocol: OperatingProtocol::EnergySplitting,
    }
}

/// Least-squares line through `(x, y)`; returns slope and R².
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    (slope, 1.0 - ss_res / ss_tot)
}

fn element_wise() -> Verdict {
    let cfg = ElementWiseConfig::default();

    // (a) every element update, on 20 seeds at each surface size
    let mut updates = 0;
    let mut increases = 0;
    for m in [8, 16, 32, 64] {
        let sc = siso_scenario(m);
        for trial in 0..sc.trials {
            let prob = sc.power_problem(sc.realization(trial).unwrap(), PhaseShiftModel::Coupled);
            let mut solver = ElementWiseSolver::new(&prob, cfg, sc.trial_seed(trial)).unwrap();
            let mut prev = solver.required_power();
            for _ in 0..cfg.max_sweeps {
                let start = solver.trace().len();
                let before = prev;
                solver.sweep();
                for row in &solver.trace()[start..] {
                    updates += 1;
                    if row.objective > prev {
                        increases += 1;
                    }
                    prev = row.objective;
                }
                if before - prev <= cfg.inner_tol * before {
                    break;
                }
            }
        }
    }

    // (b) single element against a dense grid
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst_db = 0.0f64;
    for _ in 0..10 {
        let q = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * 1e-6;
        let d = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * 3e-7;
        let sol = element_wise_optimize(&symmetric_single_element(q, d), &cfg, 0).unwrap();
        let grid = brute_force_single_element(q, d, 1e-11);
        worst_db = worst_db.max((10.0 * (sol.objective_value / grid).log10()).abs());
    }

    // (c) per-sweep time, median of repeated sweeps
    let sizes = [8.0, 16.0, 32.0, 64.0];
    let mut per_sweep = Vec::new();
    for &m in &sizes {
        let sc = siso_scenario(m as usize);
        let prob = sc.power_problem(sc.realization(0).unwrap(), PhaseShiftModel::Coupled);
        let mut solver = ElementWiseSolver::new(&prob, cfg, 1).unwrap();
        solver.sweep();
        let mut times: Vec<f64> = (0..15)
            .map(|_| {
                let t = Instant::now();
                solver.sweep();
                t.elapsed().as_secs_f64() * 1e3
            })
            .collect();
        times.sort_by(f64::total_cmp);
        per_sweep.push(times[times.len() / 2]);
    }
    let (slope, r2) = linear_fit(&sizes, &per_sweep);

    (
        increases == 0 && worst_db <= 0.1 && r2 > 0.95,
        format!(
            "(a) {increases} increases over {updates} element updates; (b) worst gap to grid {worst_db:.4} dB; \
             (c) per-sweep ms {per_sweep:.3?} over M = {sizes:?}, slope {slope:.4} ms/element, R² {r2:.4}"
        ),
    )
}

fn far_field_slope() -> Verdict {
    let base = NetworkScenario {
        layout: SurfaceLayout {
            rows: 2,
            cols: 2,
            spacing: 0.5 * default_scenario().fading.wavelength,
        },
        trials: 10_000,
        ..Default::default()
    };
    let center = base.surface(PhaseShiftModel::Coupled).unwrap().center();
    let d1 = [10.0, 20.0, 40.0, 80.0, 160.0];
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (k, &d) in d1.iter().enumerate() {
        let mut sc = base.clone();
        sc.users.truncate(1);
        sc.seed = 1_000_000 * k as u64;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        sc.bs.antennas = 1;
        sc.bs.position = [center[0] - d * s, center[1] - d * s, center[2]];
        let mut total = 0.0;
        let mut count = 0usize;
        for trial in 0..sc.trials {
            let real = sc.realization(trial).unwrap();
            let h = &real.users[0].h;
            for m in 0..real.elements() {
                total += (real.g[(m, 0)] * h[m]).norm_sqr();
                count += 1;
            }
        }
        x.push(d.ln());
        y.push((total / count as f64).ln());
    }
    let (slope, r2) = linear_fit(&x, &y);
    (
        (slope + 2.0).abs() <= 0.05,
        format!("slope {slope:.4} (R² {r2:.5}) over d1 = {d1:?} m, 10^4 draws per point"),
    )
}

/// Eigenvalues of `[[p, b], [b*, q]]`, smallest first.
fn hermitian_eigs(p: f64, b: Complex64, q: f64) -> (f64, f64) {
    let mid = 0.5 * (p + q);
    let rad = (0.25 * (p - q) * (p - q) + b.norm_sqr()).sqrt();
    (mid - rad, mid + rad)
}

fn eigen_oracle(x: &TrMatrix, tol: f64) -> ElementClass {
    let m = x.xi;
    let a = m[0][0].conj() * m[0][0] + m[1][0].conj() * m[1][0];
    let b = m[0][0].conj() * m[0][1] + m[1][0].conj() * m[1][1];
    let d = m[0][1].conj() * m[0][1] + m[1][1].conj() * m[1][1];
    let (lo, hi) = hermitian_eigs(a.re - 1.0, b, d.re - 1.0);
    if lo >= -tol && hi <= tol {
        ElementClass::PassiveLossless
    } else if hi < -tol {
        ElementClass::PassiveLossy
    } else if lo > tol {
        ElementClass::Active
    } else {
        ElementClass::Indefinite
    }
}

fn random_unitary(rng: &mut impl Rng) -> TrMatrix {
    let th: f64 = rng.random_range(0.0..FRAC_PI_2);
    let (a, b, g): (f64, f64, f64) = (
        rng.random_range(0.0..TAU),
        rng.random_range(0.0..TAU),
        rng.random_range(0.0..TAU),
    );
    let e = |p: f64| Complex64::from_polar(1.0, p);
    let (s, co) = th.sin_cos();
    TrMatrix::new(e(a + b) * co, e(a + g) * s, -e(a - g) * s, e(a - b) * co)
}

fn classification() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut agree = 0;
    let mut counts = [0usize; 4];
    let n = 10_000;
    for i in 0..n {
        let x = match i % 4 {
            0 => random_unitary(&mut rng),
            1 => {
                let k = rng.random_range(0.1..0.99);
                random_unitary(&mut rng).scaled(c(k, 0.0))
            }
            2 => {
                let k = rng.random_range(1.01..3.0);
                random_unitary(&mut rng).scaled(c(k, 0.0))
            }
            _ => {
                let mut e = || c(rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2));
                TrMatrix::new(e(), e(), e(), e())
            }
        };
        let want = eigen_oracle(&x, STRUCTURAL_TOL);
        counts[want as usize] += 1;
        if x.classify() == want {
            agree += 1;
        }
    }
    (
        agree == n,
        format!("{agree}/{n} agree; oracle classes lossless/lossy/active/indefinite = {counts:?}"),
    )
}

fn noma_dominance() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (p, noise) = (1.0, 1e-11);
    let mut wins = 0;
    let mut min_gain = f64::INFINITY;
    for _ in 0..20 {
        let strong = 10f64.powf(rng.random_range(-10.0..-8.0));
        let gap_db: f64 = rng.random_range(10.0..30.0);
        let weak = strong / 10f64.powf(gap_db / 10.0);
        let (gt, gr) = if rng.random_bool(0.5) {
            (strong, weak)
        } else {
            (weak, strong)
        };
        let (_, noma) = optimize_noma(gt, gr, p, noise).unwrap();
        let (_, oma) = optimize_oma(gt, gr, p, noise).unwrap();
        let gain = noma.sum() - (oma[0] + oma[1]);
        min_gain = min_gain.min(gain);
        if gain >= 0.0 {
            wins += 1;
        }
    }
    (
        wins == 20,
        format!("NOMA >= OMA on {wins}/20 fixtures, smallest margin {min_gain:.4} bit/s/Hz"),
    )
}

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("cfg.json"), r#"{ "trials": 8 }"#).unwrap();
    for d in ["first", "second"] {
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_star-sim"))
            .args(["run", "cfg.json", "--seed", "7", "--no-timestamp", "--out-dir", d])
            .current_dir(tmp.path())
            .output()
            .unwrap()
            .status;
        assert!(status.success());
    }
    let same = ["summary.json", "trials.csv"].iter().all(|f| {
        std::fs::read(tmp.path().join("first").join(f)).unwrap()
            == std::fs::read(tmp.path().join("second").join(f)).unwrap()
    });
    (
        same,
        "two runs with seed 7 and --no-timestamp, summary.json and trials.csv compared byte for byte".into(),
    )
}

fn guarded(f: impl FnOnce() -> Verdict) -> (Verdict, f64) {
    let start = Instant::now();
    let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        (false, format!("panicked: {msg}"))
    });
    (v, start.elapsed().as_secs_f64())
}

#[test]
fn acceptance_criteria() {
    // criteria 3 and 4 share one set of runs
    let shared = std::cell::OnceCell::new();
    let cmp = || shared.get_or_init(models);
    let criteria: Vec<Criterion> = vec![
        ("Rayleigh distance", Box::new(rayleigh)),
        ("impedance pairs are lossless and coupled", Box::new(impedance)),
        (
            "penalty solver reaches the coupled set",
            Box::new(|| coupled_convergence(cmp())),
        ),
        ("model ordering", Box::new(|| model_ordering(cmp()))),
        ("protocol ordering", Box::new(protocol_ordering)),
        ("element-wise solver", Box::new(element_wise)),
        ("far-field path-loss slope", Box::new(far_field_slope)),
        ("classification oracle", Box::new(classification)),
        ("NOMA dominance", Box::new(noma_dominance)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let ((ok, detail), secs) = guarded(f);
        let n = i + 1;
        println!(
            "{} criterion {n}: {name}: {detail} [{secs:.2} s]",
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            failed.push(n);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
