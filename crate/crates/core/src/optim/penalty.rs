//! Penalty framework for coupled phase shifts.
//!
//! The inner problem maximises `U − ρ·Σ_m min_τ |e^{j(φ^r_m−φ^t_m)} − e^{jτ}|²`
//! where `U` is the sum rate (or `−ln P` for power minimisation) by block
//! ascent: a precoder update followed by one projected-gradient step with
//! Armijo backtracking on `(θ, φ^t, φ^r)`. The outer loop multiplies `ρ` by
//! `growth` until the largest violation falls below `violation_tol`.
//!
//! Every outer iterate is projected onto the coupled set and refitted; the
//! best such feasible candidate is returned.

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::element::{project_coupled, OperatingProtocol, PhaseShiftModel, TsFractions};
use crate::error::{Error, Result};

use super::precoder::{min_power_precoders, mrt_precoders, wmmse_round};
use super::system::{coupled_penalty, Params, System};
use super::{Beamforming, BeamformingProblem, Objective, PenaltyConfig, Slot, Solution, TraceRow};

const ARMIJO: f64 = 1e-4;
const SHRINK: f64 = 0.5;
const MIN_STEP: f64 = 1e-16;
const MAX_STEP: f64 = 1e4;

/// Which parameters a run may move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Mode {
    pub theta_free: bool,
    pub penalised: bool,
}

/// Iterate of the joint problem.
#[derive(Debug, Clone)]
pub(crate) struct State {
    pub params: Params,
    pub w: DMatrix<Complex64>,
}

/// Problem data shared by the penalty and alternating solvers.
pub(crate) struct Engine<'a> {
    pub sys: System,
    pub objective: &'a Objective,
}

impl<'a> Engine<'a> {
    pub fn new(prob: &'a BeamformingProblem) -> Self {
        Self {
            sys: System::new(&prob.channels, prob.noise_power),
            objective: &prob.objective,
        }
    }

    pub fn is_rate(&self) -> bool {
        matches!(self.objective, Objective::SumSpectralEfficiency { .. })
    }

    /// Raw objective: bit/s/Hz, or W for power minimisation.
    pub fn raw(&self, s: &State) -> f64 {
        match self.objective {
            Objective::SumSpectralEfficiency { .. } => self.sys.se(&s.params, &s.w),
            Objective::TransmitPower { .. } => s.w.iter().map(|v| v.norm_sqr()).sum(),
        }
    }

    /// Whether `a` is strictly better than `b` in the objective's sense.
    pub fn better(&self, a: f64, b: f64) -> bool {
        if self.is_rate() {
            a > b
        } else {
            a < b
        }
    }

    /// Utility that is maximised; `None` if power targets are infeasible.
    fn utility(&self, p: &Params, w: &DMatrix<Complex64>) -> Option<f64> {
        match self.objective {
            Objective::SumSpectralEfficiency { .. } => Some(self.sys.se(p, w)),
            Objective::TransmitPower { sinr_targets, .. } => {
                let a = self.sys.effective(p);
                min_power_precoders(&a, sinr_targets, self.sys.noise, f64::INFINITY)
                    .ok()
                    .map(|s| -s.power.ln())
            }
        }
    }

    fn utility_grad(&self, s: &State) -> Result<(f64, Vec<f64>)> {
        match self.objective {
            Objective::SumSpectralEfficiency { .. } => Ok(self.sys.se_with_grad(&s.params, &s.w)),
            Objective::TransmitPower { sinr_targets, .. } => {
                let (sol, mut g) = self.sys.power_with_grad(&s.params, sinr_targets, f64::INFINITY)?;
                for v in g.iter_mut() {
                    *v = -*v / sol.power;
                }
                Ok((-sol.power.ln(), g))
            }
        }
    }

    pub fn merit(&self, p: &Params, w: &DMatrix<Complex64>, rho: f64, mode: Mode) -> f64 {
        let Some(u) = self.utility(p, w) else {
            return f64::NEG_INFINITY;
        };
        if mode.penalised {
            u - rho * coupled_penalty(p, None)
        } else {
            u
        }
    }

    /// Precoders for fresh coefficients: MRT at full budget, or the
    /// min-power solution.
    pub fn initial_precoders(&self, p: &Params) -> Result<DMatrix<Complex64>> {
        let a = self.sys.effective(p);
        match self.objective {
            Objective::SumSpectralEfficiency { power_budget } => Ok(mrt_precoders(&a, self.sys.n(), *power_budget)),
            Objective::TransmitPower { sinr_targets, .. } => {
                Ok(min_power_precoders(&a, sinr_targets, self.sys.noise, f64::INFINITY)?.precoders)
            }
        }
    }

    /// Precoder block: one WMMSE round, or the exact min-power solve.
    pub fn update_precoders(&self, s: &mut State) -> Result<()> {
        let a = self.sys.effective(&s.params);
        s.w = match self.objective {
            Objective::SumSpectralEfficiency { power_budget } => wmmse_round(&a, &s.w, self.sys.noise, *power_budget),
            Objective::TransmitPower { sinr_targets, .. } => {
                min_power_precoders(&a, sinr_targets, self.sys.noise, f64::INFINITY)?.precoders
            }
        };
        Ok(())
    }

    /// Runs the precoder block to convergence for fixed coefficients.
    pub fn refit_precoders(&self, s: &mut State) -> Result<()> {
        if self.is_rate() {
            let mut prev = self.raw(s);
            for _ in 0..500 {
                self.update_precoders(s)?;
                let now = self.raw(s);
                if (now - prev).abs() <= 1e-12 * now.abs().max(1.0) {
                    break;
                }
                prev = now;
            }
            Ok(())
        } else {
            self.update_precoders(s)
        }
    }

    /// One projected-gradient ascent step with Armijo backtracking on the
    /// penalised merit. `step` carries the accepted step length between
    /// calls. Returns the new merit.
    pub fn ascent_step(&self, s: &mut State, rho: f64, mode: Mode, step: &mut f64) -> Result<f64> {
        let m = s.params.m();
        let (u0, mut g) = self.utility_grad(s)?;
        let mut merit0 = u0;
        if mode.penalised {
            let mut pg = vec![0.0; 3 * m];
            merit0 -= rho * coupled_penalty(&s.params, Some(&mut pg));
            for (gi, pi) in g.iter_mut().zip(&pg) {
                *gi -= rho * pi;
            }
        }
        if !mode.theta_free {
            g[..m].iter_mut().for_each(|v| *v = 0.0);
        }
        if g.iter().all(|v| *v == 0.0) {
            return Ok(merit0);
        }
        let x0 = s.params.flat();
        let mut t = (*step * 2.0).min(MAX_STEP);
        while t >= MIN_STEP {
            let mut x = x0.clone();
            for (xi, gi) in x.iter_mut().zip(&g) {
                *xi += t * gi;
            }
            let decrease: f64 = x.iter().zip(&x0).zip(&g).map(|((a, b), gi)| (a - b) * gi).sum();
            let candidate = Params::from_flat(&x);
            let merit = self.merit(&candidate, &s.w, rho, mode);
            if merit >= merit0 + ARMIJO * decrease && merit.is_finite() {
                *step = t;
                s.params = candidate;
                s.params.canonicalize();
                if !self.is_rate() {
                    // keep precoders consistent with the accepted coefficients
                    self.update_precoders(s)?;
                }
                return Ok(merit);
            }
            t *= SHRINK;
        }
        *step = MIN_STEP;
        Ok(merit0)
    }

    /// Projects onto the coupled set (when requested) and refits precoders.
    pub fn feasible_candidate(&self, s: &State, coupled: bool) -> Result<State> {
        let mut c = s.clone();
        if coupled {
            let coeffs: Vec<_> = c.params.to_coefficients().iter().map(project_coupled).collect();
            let projected = Params::from_coefficients(&coeffs);
            c.params.phi_t = projected.phi_t;
            c.params.phi_r = projected.phi_r;
        }
        self.refit_precoders(&mut c)?;
        Ok(c)
    }
}

/// Outcome of one penalty run from one starting point.
pub(crate) struct Run {
    pub best: State,
    pub best_value: f64,
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
}

pub(crate) fn run_penalty(
    engine: &Engine,
    start: State,
    cfg: &PenaltyConfig,
    coupled: bool,
    theta_free: bool,
    outer_offset: usize,
) -> Result<Run> {
    let mode = Mode {
        theta_free,
        penalised: coupled && theta_free,
    };
    let mut state = start;
    let initial = engine.feasible_candidate(&state, coupled)?;
    let mut best_value = engine.raw(&initial);
    let mut best = initial;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut rho = cfg.rho0;
    let mut step = 1.0;
    let outer_loops = if mode.penalised { cfg.max_outer } else { 1 };

    let mut last_violation = f64::INFINITY;
    for outer in 0..outer_loops {
        let mut inner = 0;
        let mut retries = 0;
        loop {
            let mut prev = engine.merit(&state.params, &state.w, rho, mode);
            for _ in 0..cfg.max_inner {
                if engine.is_rate() {
                    engine.update_precoders(&mut state)?;
                }
                let merit = engine.ascent_step(&mut state, rho, mode, &mut step)?;
                iterations += 1;
                trace.push(TraceRow {
                    outer: outer + outer_offset,
                    inner,
                    objective: engine.raw(&state),
                    max_violation: if mode.penalised { state.params.violation() } else { 0.0 },
                });
                inner += 1;
                let converged = (merit - prev).abs() <= cfg.inner_tol * prev.abs().max(1.0);
                prev = merit;
                if converged {
                    break;
                }
            }
            // steering: an outer pass must not end less feasible than the last
            if !mode.penalised || state.params.violation() <= last_violation || retries >= cfg.max_outer {
                break;
            }
            rho *= cfg.growth;
            step = step.min(1.0 / rho);
            retries += 1;
        }
        last_violation = state.params.violation();
        let candidate = engine.feasible_candidate(&state, coupled)?;
        let value = engine.raw(&candidate);
        if engine.better(value, best_value) {
            best_value = value;
            best = candidate;
        }
        if !mode.penalised || state.params.violation() < cfg.violation_tol {
            break;
        }
        rho *= cfg.growth;
        // the stiffer penalty needs a fresh, shorter step
        step = step.min(1.0 / rho);
    }
    Ok(Run {
        best,
        best_value,
        trace,
        iterations,
    })
}

fn slot_of(s: &State) -> Slot {
    Slot {
        precoders: s.w.clone(),
        coeffs: s.params.to_coefficients(),
    }
}

/// Rounds every element to one mode (ties to reflection) and, for the
/// switched-off mode, picks a phase that keeps the pair coupled.
pub(crate) fn round_modes(p: &Params) -> Params {
    let mut out = p.clone();
    for i in 0..p.m() {
        let (s, c) = p.theta[i].sin_cos();
        if s * s > c * c {
            out.theta[i] = FRAC_PI_2;
            out.phi_r[i] = crate::element::canonical_phase(p.phi_t[i] + FRAC_PI_2);
        } else {
            out.theta[i] = 0.0;
            out.phi_t[i] = crate::element::canonical_phase(p.phi_r[i] - FRAC_PI_2);
        }
    }
    out
}

fn state_from_slot(engine: &Engine, slot: &Slot) -> Result<State> {
    let params = Params::from_coefficients(&slot.coeffs);
    let mut w = slot.precoders.clone();
    if !engine.is_rate() {
        w = engine.initial_precoders(&params)?;
    }
    Ok(State { params, w })
}

fn cold_start(engine: &Engine, m: usize, coupled: bool, seed: u64) -> Result<State> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = Params::random(m, coupled, &mut rng);
    let w = engine.initial_precoders(&params)?;
    Ok(State { params, w })
}

/// Runs from each start and keeps the best result; ties keep the earlier.
fn best_of(engine: &Engine, starts: Vec<State>, f: impl Fn(State) -> Result<Run>) -> Result<Run> {
    let mut best: Option<Run> = None;
    let mut first_err = None;
    for s in starts {
        match f(s) {
            Ok(run) => {
                if best
                    .as_ref()
                    .is_none_or(|b| engine.better(run.best_value, b.best_value))
                {
                    best = Some(run);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or_else(|| Error::ScenarioMismatch("no starting point".into())))
}

/// Golden-section maximisation of `f` over `[lo, hi]`.
pub(crate) fn golden_section_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
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
    let mid = 0.5 * (a + b);
    // endpoints are admissible and golden section cannot reach them exactly
    [lo, mid, hi]
        .into_iter()
        .fold((mid, f(mid)), |(x, fx), y| {
            let fy = f(y);
            if fy > fx {
                (y, fy)
            } else {
                (x, fx)
            }
        })
        .0
}

/// Penalty-based solver from a seeded cold start.
pub fn penalty_optimize(prob: &BeamformingProblem, cfg: &PenaltyConfig, seed: u64) -> Result<Solution> {
    penalty_optimize_from(prob, cfg, seed, &[])
}

/// Penalty-based solver that also runs from each warm start and returns the
/// best result. A warm start that is feasible for the problem can only be
/// improved on, so the result is never worse than any of them.
pub fn penalty_optimize_from(
    prob: &BeamformingProblem,
    cfg: &PenaltyConfig,
    seed: u64,
    warm: &[Beamforming],
) -> Result<Solution> {
    check_cap(&prob.objective, solve_from(prob, cfg, seed, warm)?)
}

/// Power minimisation iterates without the cap; only the returned solution
/// is held to it.
pub(crate) fn check_cap(objective: &Objective, sol: Solution) -> Result<Solution> {
    match objective {
        Objective::TransmitPower { power_cap, .. } if !(sol.objective_value <= *power_cap) => {
            Err(Error::InfeasibleTargets(format!(
                "required power {:e} W exceeds cap of {power_cap:e} W",
                sol.objective_value
            )))
        }
        _ => Ok(sol),
    }
}

fn solve_from(prob: &BeamformingProblem, cfg: &PenaltyConfig, seed: u64, warm: &[Beamforming]) -> Result<Solution> {
    prob.validate()?;
    cfg.validate()?;
    let engine = Engine::new(prob);
    let coupled = prob.model == PhaseShiftModel::Coupled;
    let m = prob.channels.elements();

    let warm_slots = |w: &Beamforming| -> Vec<Slot> {
        match w {
            Beamforming::Shared(s) => vec![s.clone()],
            Beamforming::TimeSwitched {
                transmission,
                reflection,
                ..
            } => vec![transmission.clone(), reflection.clone()],
        }
    };

    match prob.protocol {
        OperatingProtocol::EnergySplitting => {
            let mut starts = vec![cold_start(&engine, m, coupled, seed)?];
            for w in warm {
                for slot in warm_slots(w) {
                    starts.push(coupled_start(&engine, &slot, coupled)?);
                }
            }
            let run = best_of(&engine, starts, |s| run_penalty(&engine, s, cfg, coupled, true, 0))?;
            Ok(finish(run, Beamforming::Shared))
        }
        OperatingProtocol::ModeSwitching => {
            let es = run_penalty(&engine, cold_start(&engine, m, coupled, seed)?, cfg, coupled, true, 0)?;
            let offset = es.trace.last().map_or(0, |r| r.outer + 1);
            let mut rounded = es.best.clone();
            rounded.params = round_modes(&es.best.params);
            engine.refit_precoders(&mut rounded)?;
            let mut starts = vec![rounded];
            for w in warm {
                for slot in warm_slots(w) {
                    let mut s = state_from_slot(&engine, &slot)?;
                    s.params = round_modes(&s.params);
                    starts.push(s);
                }
            }
            let mut run = best_of(&engine, starts, |s| run_penalty(&engine, s, cfg, false, false, offset))?;
            let mut trace = es.trace;
            trace.append(&mut run.trace);
            run.trace = trace;
            run.iterations += es.iterations;
            Ok(finish(run, Beamforming::Shared))
        }
        OperatingProtocol::TimeSwitching { fractions } => {
            if !engine.is_rate() {
                return Err(Error::ScenarioMismatch(
                    "time switching is only supported for sum spectral efficiency".into(),
                ));
            }
            let slot_run = |theta: f64, offset: usize| -> Result<Run> {
                let mut s = cold_start(&engine, m, false, seed)?;
                s.params.theta = vec![theta; m];
                s.params = round_modes(&s.params);
                s.w = engine.initial_precoders(&s.params)?;
                run_penalty(&engine, s, cfg, false, false, offset)
            };
            let tx = slot_run(FRAC_PI_2, 0)?;
            let rx = slot_run(0.0, 1)?;
            let fractions = match fractions {
                Some(f) => f,
                None => {
                    let (a, b) = (tx.best_value, rx.best_value);
                    let lt = golden_section_max(|l| l * a + (1.0 - l) * b, 0.0, 1.0, 1e-9);
                    TsFractions::new(lt, 1.0 - lt)?
                }
            };
            let value = fractions.transmission * tx.best_value + fractions.reflection * rx.best_value;
            let mut trace = tx.trace;
            trace.extend(rx.trace);
            Ok(Solution {
                beamforming: Beamforming::TimeSwitched {
                    transmission: slot_of(&tx.best),
                    reflection: slot_of(&rx.best),
                    fractions,
                },
                objective_value: value,
                trace,
                iterations: tx.iterations + rx.iterations,
            })
        }
    }
}

/// Warm start adjusted so that switched-off modes do not register as
/// coupling violations.
fn coupled_start(engine: &Engine, slot: &Slot, coupled: bool) -> Result<State> {
    let mut s = state_from_slot(engine, slot)?;
    if coupled {
        for i in 0..s.params.m() {
            let (sn, cs) = s.params.theta[i].sin_cos();
            if cs * cs < crate::element::ZERO_AMPLITUDE {
                s.params.phi_r[i] = crate::element::canonical_phase(s.params.phi_t[i] + FRAC_PI_2);
            } else if sn * sn < crate::element::ZERO_AMPLITUDE {
                s.params.phi_t[i] = crate::element::canonical_phase(s.params.phi_r[i] - FRAC_PI_2);
            }
        }
    }
    Ok(s)
}

fn finish(run: Run, wrap: impl Fn(Slot) -> Beamforming) -> Solution {
    Solution {
        beamforming: wrap(slot_of(&run.best)),
        objective_value: run.best_value,
        trace: run.trace,
        iterations: run.iterations,
    }
}
