//! End-to-end experiments: Monte-Carlo SE maximisation and power
//! minimisation over channel draws, parameter sweeps, and the two-user
//! NOMA/OMA comparison.
//!
//! Trial `i` of a scenario with base seed `s` uses seed `s + i` for its
//! channel draw, so every record can be regenerated on its own.

use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::channel::{generate, BsArray, ChannelRealization, Deployment, FadingParams, FieldModel, LinkGeometry};
use crate::element::{OperatingProtocol, PhaseShiftModel, Side, SurfaceConfig, TrCoefficients};
use crate::error::{Error, Result};
use crate::optim::{
    alternating_optimize, element_wise_optimize, penalty_optimize, penalty_optimize_from, sinrs, Beamforming,
    BeamformingProblem, ElementWiseConfig, Objective, PenaltyConfig, Slot, Solution, TraceRow,
};
use crate::parallel::{map_indexed, ExecMode};

/// Rectangular element grid in the y-z plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceLayout {
    pub rows: usize,
    pub cols: usize,
    /// Element spacing, meters.
    pub spacing: f64,
}

impl SurfaceLayout {
    pub fn elements(&self) -> usize {
        self.rows * self.cols
    }

    /// Closest-to-square grid with `m` elements and the same spacing.
    pub fn resized(&self, m: usize) -> Self {
        let mut rows = (m as f64).sqrt().floor() as usize;
        while rows > 1 && !m.is_multiple_of(rows) {
            rows -= 1;
        }
        let rows = rows.max(1);
        Self {
            rows,
            cols: m / rows,
            spacing: self.spacing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserSpec {
    pub position: [f64; 3],
    pub side: Side,
    /// Linear SINR target, used by power minimisation.
    pub sinr_target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkScenario {
    pub layout: SurfaceLayout,
    pub protocol: OperatingProtocol,
    pub bs: BsArray,
    pub users: Vec<UserSpec>,
    pub fading: FadingParams,
    pub field: FieldModel,
    pub direct_link: bool,
    /// W.
    pub noise_power: f64,
    /// W. Also the power cap of power minimisation.
    pub power_budget: f64,
    pub trials: usize,
    pub seed: u64,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl Default for NetworkScenario {
    /// 4x4 half-wavelength surface at 3.5 GHz, a 4-antenna BS and one user
    /// per side, all about 30 m from the surface.
    fn default() -> Self {
        let fading = FadingParams::default();
        let lambda = fading.wavelength;
        let d = 30.0 / 2f64.sqrt();
        Self {
            layout: SurfaceLayout {
                rows: 4,
                cols: 4,
                spacing: lambda / 2.0,
            },
            protocol: OperatingProtocol::EnergySplitting,
            bs: BsArray {
                position: [-d, -d, 0.0],
                antennas: 4,
                spacing: lambda / 2.0,
            },
            users: vec![
                UserSpec {
                    position: [-d, d, 0.0],
                    side: Side::Reflection,
                    sinr_target: 1.0,
                },
                UserSpec {
                    position: [d, d, 0.0],
                    side: Side::Transmission,
                    sinr_target: 1.0,
                },
            ],
            fading,
            field: FieldModel::FarField,
            direct_link: false,
            noise_power: dbm_to_watts(-80.0),
            power_budget: dbm_to_watts(30.0),
            trials: 20,
            seed: 0,
        }
    }
}

impl NetworkScenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(Error::InvalidParameter { name, reason });
        if self.trials == 0 {
            return bad("trials", "need at least one trial".into());
        }
        if self.layout.elements() == 0 {
            return bad("elements", "surface needs at least one element".into());
        }
        if !(self.layout.spacing > 0.0) {
            return bad("spacing", format!("must be positive, got {}", self.layout.spacing));
        }
        if self.bs.antennas == 0 {
            return bad("antennas", "BS needs at least one antenna".into());
        }
        if self.users.is_empty() {
            return bad("users", "need at least one user".into());
        }
        if !(self.noise_power > 0.0) {
            return bad("noise_power", format!("must be positive, got {}", self.noise_power));
        }
        if !(self.power_budget >= 0.0) {
            return bad(
                "power_budget",
                format!("must be non-negative, got {}", self.power_budget),
            );
        }
        if let Some(u) = self.users.iter().find(|u| !(u.sinr_target > 0.0)) {
            return bad("sinr_target", format!("must be positive, got {}", u.sinr_target));
        }
        self.deployment(PhaseShiftModel::Independent).map(|_| ())
    }

    pub fn surface(&self, model: PhaseShiftModel) -> Result<SurfaceConfig> {
        SurfaceConfig::planar(
            self.layout.rows,
            self.layout.cols,
            self.layout.spacing,
            model,
            self.protocol,
        )
    }

    pub fn deployment(&self, model: PhaseShiftModel) -> Result<Deployment> {
        let surface = self.surface(model)?;
        let users = self
            .users
            .iter()
            .map(|u| LinkGeometry::with_side(&surface, &self.bs, u.position, u.side))
            .collect::<Result<Vec<_>>>()?;
        Ok(Deployment {
            surface,
            bs: self.bs.clone(),
            users,
            direct_link: self.direct_link,
        })
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }

    /// Channel draw of one trial.
    pub fn realization(&self, trial: usize) -> Result<ChannelRealization> {
        let dep = self.deployment(PhaseShiftModel::Independent)?;
        Ok(generate(&dep, &self.fading, self.field, self.trial_seed(trial)))
    }

    pub fn se_problem(&self, real: ChannelRealization, model: PhaseShiftModel) -> BeamformingProblem {
        BeamformingProblem {
            objective: Objective::SumSpectralEfficiency {
                power_budget: self.power_budget,
            },
            channels: real,
            noise_power: self.noise_power,
            model,
            protocol: self.protocol,
        }
    }

    pub fn power_problem(&self, real: ChannelRealization, model: PhaseShiftModel) -> BeamformingProblem {
        BeamformingProblem {
            objective: Objective::TransmitPower {
                sinr_targets: self.users.iter().map(|u| u.sinr_target).collect(),
                power_cap: self.power_budget,
            },
            channels: real,
            noise_power: self.noise_power,
            model,
            protocol: self.protocol,
        }
    }
}

fn solver_seed(trial_seed: u64) -> u64 {
    trial_seed ^ 0x005e_ed0f_5eed
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Solver {
    Penalty(PenaltyConfig),
    /// Alternating optimisation with projection, the coupled-model baseline.
    Alternating(PenaltyConfig),
    ElementWise(ElementWiseConfig),
}

impl Solver {
    pub fn name(&self) -> &'static str {
        match self {
            Solver::Penalty(_) => "penalty",
            Solver::Alternating(_) => "alternating",
            Solver::ElementWise(_) => "element_wise",
        }
    }

    pub fn solve(&self, prob: &BeamformingProblem, seed: u64) -> Result<Solution> {
        match self {
            Solver::Penalty(cfg) => penalty_optimize(prob, cfg, seed),
            Solver::Alternating(cfg) => alternating_optimize(prob, cfg, seed),
            Solver::ElementWise(cfg) => element_wise_optimize(prob, cfg, seed),
        }
    }
}

/// Record of one Monte-Carlo trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialMetrics {
    pub trial: usize,
    pub seed: u64,
    pub feasible: bool,
    /// Sum spectral efficiency, bit/s/Hz.
    pub se: f64,
    /// Transmit power, W.
    pub power_w: f64,
    pub max_violation: f64,
    pub iterations: usize,
    pub wall_ms: f64,
    pub error: Option<String>,
}

impl TrialMetrics {
    pub fn power_dbm(&self) -> f64 {
        watts_to_dbm(self.power_w)
    }

    fn failed(trial: usize, seed: u64, err: &Error, wall_ms: f64) -> Self {
        Self {
            trial,
            seed,
            feasible: false,
            se: f64::NAN,
            power_w: f64::NAN,
            max_violation: f64::NAN,
            iterations: 0,
            wall_ms,
            error: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample statistics, summed in slice order. NaN for an empty slice.
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, std: var.sqrt() }
    }
}

/// Statistics over feasible trials; infeasible ones only enter
/// `feasibility_rate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub trials: usize,
    pub feasible: usize,
    pub feasibility_rate: f64,
    pub se: MeanStd,
    pub power_w: MeanStd,
    pub max_violation: MeanStd,
    pub iterations: MeanStd,
    pub wall_ms: MeanStd,
}

impl Aggregate {
    pub fn of(trials: &[TrialMetrics]) -> Self {
        let ok: Vec<&TrialMetrics> = trials.iter().filter(|t| t.feasible).collect();
        let col = |f: fn(&TrialMetrics) -> f64| MeanStd::of(&ok.iter().map(|t| f(t)).collect::<Vec<_>>());
        Self {
            trials: trials.len(),
            feasible: ok.len(),
            feasibility_rate: if trials.is_empty() {
                0.0
            } else {
                ok.len() as f64 / trials.len() as f64
            },
            se: col(|t| t.se),
            power_w: col(|t| t.power_w),
            max_violation: col(|t| t.max_violation),
            iterations: col(|t| t.iterations as f64),
            wall_ms: col(|t| t.wall_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub trials: Vec<TrialMetrics>,
    /// Solver trace of each trial, empty for failed trials.
    pub traces: Vec<Vec<TraceRow>>,
    pub aggregate: Aggregate,
}

impl RunReport {
    fn from_outcomes(outcomes: Vec<(TrialMetrics, Vec<TraceRow>)>) -> Self {
        let (trials, traces): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
        let aggregate = Aggregate::of(&trials);
        Self {
            trials,
            traces,
            aggregate,
        }
    }
}

/// Sum SE a solution delivers on `prob`, whatever its objective.
pub fn delivered_se(prob: &BeamformingProblem, b: &Beamforming) -> Result<f64> {
    let slot_se = |s: &Slot| -> Result<f64> {
        let a = (0..prob.users())
            .map(|u| crate::channel::effective_channel(&prob.channels, &s.coeffs, u))
            .collect::<Result<Vec<DVector<Complex64>>>>()?;
        Ok(sinrs(&a, &s.precoders, prob.noise_power)
            .iter()
            .map(|x| (1.0 + x).log2())
            .sum())
    };
    match b {
        Beamforming::Shared(s) => slot_se(s),
        Beamforming::TimeSwitched {
            transmission,
            reflection,
            fractions,
        } => Ok(fractions.transmission * slot_se(transmission)? + fractions.reflection * slot_se(reflection)?),
    }
}

fn run_trials(
    sc: &NetworkScenario,
    exec: ExecMode,
    solve: impl Fn(&NetworkScenario, ChannelRealization, u64) -> Result<(BeamformingProblem, Solution)> + Sync + Send,
) -> Result<RunReport> {
    sc.validate()?;
    let outcomes = map_indexed(sc.trials, exec, |i| {
        let seed = sc.trial_seed(i);
        let start = Instant::now();
        let result = sc
            .realization(i)
            .and_then(|real| solve(sc, real, solver_seed(seed)))
            .and_then(|(prob, sol)| Ok((delivered_se(&prob, &sol.beamforming)?, sol)));
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        match result {
            Ok((se, sol)) => (
                TrialMetrics {
                    trial: i,
                    seed,
                    feasible: true,
                    se,
                    power_w: sol.beamforming.transmit_power(),
                    max_violation: sol.max_violation(),
                    iterations: sol.iterations,
                    wall_ms,
                    error: None,
                },
                sol.trace,
            ),
            Err(e) => (TrialMetrics::failed(i, seed, &e, wall_ms), Vec::new()),
        }
    });
    Ok(RunReport::from_outcomes(outcomes))
}

/// Sum-SE maximisation on every trial. Solver errors are recorded per trial.
pub fn run_se_max(sc: &NetworkScenario, solver: &Solver, model: PhaseShiftModel, exec: ExecMode) -> Result<RunReport> {
    run_trials(sc, exec, |sc, real, seed| {
        let prob = sc.se_problem(real, model);
        let sol = solver.solve(&prob, seed)?;
        Ok((prob, sol))
    })
}

/// Transmit-power minimisation against the users' SINR targets, capped at
/// the scenario budget.
pub fn run_power_min(
    sc: &NetworkScenario,
    solver: &Solver,
    model: PhaseShiftModel,
    exec: ExecMode,
) -> Result<RunReport> {
    if sc.users.len() != 2 || sc.users[0].side == sc.users[1].side {
        return Err(Error::ScenarioMismatch(
            "power minimisation needs two users on opposite sides".into(),
        ));
    }
    run_trials(sc, exec, |sc, real, seed| {
        let prob = sc.power_problem(real, model);
        let sol = solver.solve(&prob, seed)?;
        Ok((prob, sol))
    })
}

/// SE of one trial under the three approaches being compared.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelComparison {
    pub seed: u64,
    pub independent: Solution,
    pub coupled: Solution,
    pub alternating: Solution,
}

/// Penalty solver under both phase-shift models and the alternating
/// baseline under the coupled model, on the same channel draw. The
/// independent-model run is also started from the coupled result, which is
/// feasible for it.
pub fn compare_models(sc: &NetworkScenario, cfg: &PenaltyConfig, exec: ExecMode) -> Result<Vec<ModelComparison>> {
    sc.validate()?;
    map_indexed(sc.trials, exec, |i| {
        let seed = sc.trial_seed(i);
        let real = sc.realization(i)?;
        let coupled_prob = sc.se_problem(real.clone(), PhaseShiftModel::Coupled);
        let coupled = penalty_optimize(&coupled_prob, cfg, solver_seed(seed))?;
        let alternating = alternating_optimize(&coupled_prob, cfg, solver_seed(seed))?;
        let indep_prob = sc.se_problem(real, PhaseShiftModel::Independent);
        let independent = penalty_optimize_from(
            &indep_prob,
            cfg,
            solver_seed(seed),
            std::slice::from_ref(&coupled.beamforming),
        )?;
        Ok(ModelComparison {
            seed,
            independent,
            coupled,
            alternating,
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolComparison {
    pub seed: u64,
    pub energy_splitting: Solution,
    pub mode_switching: Solution,
    pub time_switching: Solution,
}

/// The three protocols on the same channel draw. Energy splitting is also
/// started from the other two results, whose slots are energy-splitting
/// configurations.
pub fn compare_protocols(
    sc: &NetworkScenario,
    model: PhaseShiftModel,
    cfg: &PenaltyConfig,
    exec: ExecMode,
) -> Result<Vec<ProtocolComparison>> {
    sc.validate()?;
    map_indexed(sc.trials, exec, |i| {
        let seed = sc.trial_seed(i);
        let real = sc.realization(i)?;
        let prob = |protocol| BeamformingProblem {
            protocol,
            ..sc.se_problem(real.clone(), model)
        };
        let ms = penalty_optimize(&prob(OperatingProtocol::ModeSwitching), cfg, solver_seed(seed))?;
        let ts = penalty_optimize(
            &prob(OperatingProtocol::TimeSwitching { fractions: None }),
            cfg,
            solver_seed(seed),
        )?;
        let es = penalty_optimize_from(
            &prob(OperatingProtocol::EnergySplitting),
            cfg,
            solver_seed(seed),
            &[ms.beamforming.clone(), ts.beamforming.clone()],
        )?;
        Ok(ProtocolComparison {
            seed,
            energy_splitting: es,
            mode_switching: ms,
            time_switching: ts,
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Number of surface elements.
    Elements,
    /// Power budget, W.
    Budget,
    /// User distance from the surface centre, meters.
    Distance,
    /// Linear Rician factor.
    RicianK,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Elements => "elements",
            SweepAxis::Budget => "budget",
            SweepAxis::Distance => "distance",
            SweepAxis::RicianK => "rician_k",
        }
    }
}

/// Seed spacing between sweep points.
pub const SWEEP_SEED_STRIDE: u64 = 1_000_003;

/// `base` with `axis` set to `value`, and the seed offset for sweep point
/// `index`.
pub fn sweep_point(base: &NetworkScenario, axis: SweepAxis, value: f64, index: usize) -> Result<NetworkScenario> {
    let mut sc = base.clone();
    sc.seed = base.seed.wrapping_add(SWEEP_SEED_STRIDE.wrapping_mul(index as u64));
    match axis {
        SweepAxis::Elements => {
            if !(value >= 1.0) || value.fract() != 0.0 {
                return Err(Error::InvalidParameter {
                    name: "elements",
                    reason: format!("must be a positive integer, got {value}"),
                });
            }
            sc.layout = base.layout.resized(value as usize);
        }
        SweepAxis::Budget => sc.power_budget = value,
        SweepAxis::Distance => {
            let c = base.surface(PhaseShiftModel::Independent)?.center();
            for u in &mut sc.users {
                let off = [u.position[0] - c[0], u.position[1] - c[1], u.position[2] - c[2]];
                let d = (off[0] * off[0] + off[1] * off[1] + off[2] * off[2]).sqrt();
                for k in 0..3 {
                    u.position[k] = c[k] + off[k] * value / d;
                }
            }
        }
        SweepAxis::RicianK => sc.fading.rician_k = value,
    }
    sc.validate()?;
    Ok(sc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub report: RunReport,
}

/// One aggregated run per axis value. `values` must be non-empty and
/// monotone.
pub fn run_sweep(
    base: &NetworkScenario,
    axis: SweepAxis,
    values: &[f64],
    mut run: impl FnMut(&NetworkScenario) -> Result<RunReport>,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::InvalidParameter {
            name: "values",
            reason: format!("{} sweep has no values", axis.name()),
        });
    }
    let up = values.windows(2).all(|w| w[0] < w[1]);
    let down = values.windows(2).all(|w| w[0] > w[1]);
    if !(up || down) {
        return Err(Error::InvalidParameter {
            name: "values",
            reason: format!("{} sweep values must be strictly monotone", axis.name()),
        });
    }
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let sc = sweep_point(base, axis, v, i)?;
            Ok(SweepRow {
                value: v,
                report: run(&sc)?,
            })
        })
        .collect()
}

/// A transmission-side and a reflection-side user sharing one resource.
/// The stronger user gets the fraction `power_split` of the power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NomaPair {
    pub transmit_user: usize,
    pub reflect_user: usize,
    pub power_split: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NomaRates {
    /// User decoded last (after cancelling the other).
    pub strong_user: usize,
    pub weak_user: usize,
    pub rate_strong: f64,
    pub rate_weak: f64,
}

impl NomaRates {
    pub fn sum(&self) -> f64 {
        self.rate_strong + self.rate_weak
    }
}

/// Below this channel gain a user is treated as unreachable.
pub const DEGENERATE_GAIN: f64 = 1e-15;

/// Users ordered (strong, weak) by gain. Equal gains put the transmission
/// user first.
pub fn decoding_order(pair: &NomaPair, gain_t: f64, gain_r: f64) -> (usize, usize) {
    if gain_r > gain_t {
        (pair.reflect_user, pair.transmit_user)
    } else {
        (pair.transmit_user, pair.reflect_user)
    }
}

/// Two-user downlink NOMA rates with SIC at the stronger user.
/// `gain_t`, `gain_r` are the effective channel power gains `|h|²`.
pub fn noma_rates(pair: &NomaPair, gain_t: f64, gain_r: f64, power: f64, noise: f64) -> Result<NomaRates> {
    let alpha = pair.power_split;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter {
            name: "power_split",
            reason: format!("must lie in (0, 1), got {alpha}"),
        });
    }
    for g in [gain_t, gain_r] {
        if !(g >= DEGENERATE_GAIN) {
            return Err(Error::DegenerateChannel(g));
        }
    }
    let (strong_user, weak_user) = decoding_order(pair, gain_t, gain_r);
    let (gs, gw) = if strong_user == pair.transmit_user {
        (gain_t, gain_r)
    } else {
        (gain_r, gain_t)
    };
    Ok(NomaRates {
        strong_user,
        weak_user,
        rate_strong: (1.0 + alpha * power * gs / noise).log2(),
        rate_weak: (1.0 + (1.0 - alpha) * power * gw / (alpha * power * gw + noise)).log2(),
    })
}

/// `τ_k log2(1 + P g_k / σ²)` for each user.
pub fn oma_rates(gains: &[f64], power: f64, noise: f64, time_split: &[f64]) -> Result<Vec<f64>> {
    if gains.len() != time_split.len() {
        return Err(Error::LengthMismatch {
            expected: gains.len(),
            got: time_split.len(),
        });
    }
    if time_split.iter().any(|t| !(0.0..=1.0).contains(t)) || time_split.iter().sum::<f64>() > 1.0 + 1e-12 {
        return Err(Error::InvalidParameter {
            name: "time_split",
            reason: "fractions must lie in [0, 1] and sum to at most 1".into(),
        });
    }
    Ok(gains
        .iter()
        .zip(time_split)
        .map(|(g, t)| t * (1.0 + power * g / noise).log2())
        .collect())
}

/// Number of interior grid points used for both α and τ.
pub const SPLIT_GRID: usize = 256;

fn split_grid() -> impl Iterator<Item = f64> {
    (1..=SPLIT_GRID).map(|i| i as f64 / (SPLIT_GRID + 1) as f64)
}

/// Best NOMA sum rate over the power split: grid search, then golden
/// section around the best grid point. Returns `(α, rates)`.
pub fn optimize_noma(gain_t: f64, gain_r: f64, power: f64, noise: f64) -> Result<(f64, NomaRates)> {
    let eval = |alpha: f64| {
        noma_rates(
            &NomaPair {
                transmit_user: 0,
                reflect_user: 1,
                power_split: alpha,
            },
            gain_t,
            gain_r,
            power,
            noise,
        )
    };
    let mut best: Option<(f64, NomaRates)> = None;
    for a in split_grid() {
        let r = eval(a)?;
        if best.is_none_or(|(_, b)| r.sum() > b.sum()) {
            best = Some((a, r));
        }
    }
    let (a0, r0) = best.expect("grid is non-empty");
    let h = 1.0 / (SPLIT_GRID + 1) as f64;
    let a1 = golden_max(|a| eval(a).map_or(f64::NEG_INFINITY, |r| r.sum()), a0 - h, a0 + h);
    if a1 > 0.0 && a1 < 1.0 {
        let r1 = eval(a1)?;
        if r1.sum() > r0.sum() {
            return Ok((a1, r1));
        }
    }
    Ok((a0, r0))
}

/// Best two-user OMA sum rate over the time split on the NOMA grid.
/// Returns `(τ_t, [rate_t, rate_r])`.
pub fn optimize_oma(gain_t: f64, gain_r: f64, power: f64, noise: f64) -> Result<(f64, [f64; 2])> {
    let mut best = (f64::NAN, [f64::NEG_INFINITY; 2]);
    for t in split_grid() {
        let r = oma_rates(&[gain_t, gain_r], power, noise, &[t, 1.0 - t])?;
        if r[0] + r[1] > best.1[0] + best.1[1] {
            best = (t, [r[0], r[1]]);
        }
    }
    Ok(best)
}

/// Power gain `|a_k^T w|²` of each user for a shared beam `w` and surface
/// coefficients.
pub fn beam_gains(real: &ChannelRealization, coeffs: &[TrCoefficients], w: &DVector<Complex64>) -> Result<Vec<f64>> {
    (0..real.users.len())
        .map(|u| Ok(crate::channel::effective_channel(real, coeffs, u)?.dot(w).norm_sqr()))
        .collect()
}

fn golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-12 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
