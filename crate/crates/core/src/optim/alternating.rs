//! Alternating-optimisation baseline: a full precoder solve with the
//! coefficients fixed, then a full coefficient solve with the precoders
//! fixed, then (for the coupled model) projection onto the coupled set.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::element::{OperatingProtocol, PhaseShiftModel};
use crate::error::{Error, Result};

use super::penalty::{check_cap, Engine, Mode, State};
use super::system::Params;
use super::{Beamforming, BeamformingProblem, PenaltyConfig, Slot, Solution, TraceRow};

/// Runs the alternating baseline. Trace rows alternate between the value
/// after the precoder block (even `inner`) and after the coefficient block
/// before projection (odd `inner`).
pub fn alternating_optimize(prob: &BeamformingProblem, cfg: &PenaltyConfig, seed: u64) -> Result<Solution> {
    prob.validate()?;
    cfg.validate()?;
    if prob.protocol != OperatingProtocol::EnergySplitting {
        return Err(Error::ScenarioMismatch(
            "the alternating baseline supports energy splitting only".into(),
        ));
    }
    let engine = Engine::new(prob);
    let coupled = prob.model == PhaseShiftModel::Coupled;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = Params::random(prob.channels.elements(), coupled, &mut rng);
    let w = engine.initial_precoders(&params)?;
    let mut state = State { params, w };
    let mode = Mode {
        theta_free: true,
        penalised: false,
    };

    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut prev = engine.raw(&state);
    for it in 0..cfg.max_inner {
        engine.refit_precoders(&mut state)?;
        trace.push(TraceRow {
            outer: 0,
            inner: 2 * it,
            objective: engine.raw(&state),
            max_violation: state.params.violation(),
        });

        let mut step = 1.0;
        let mut merit = engine.merit(&state.params, &state.w, 0.0, mode);
        for _ in 0..cfg.max_inner {
            let next = engine.ascent_step(&mut state, 0.0, mode, &mut step)?;
            iterations += 1;
            let done = (next - merit).abs() <= cfg.inner_tol * merit.abs().max(1.0);
            merit = next;
            if done {
                break;
            }
        }
        trace.push(TraceRow {
            outer: 0,
            inner: 2 * it + 1,
            objective: engine.raw(&state),
            max_violation: state.params.violation(),
        });
        if coupled {
            state = engine.feasible_candidate(&state, true)?;
        }
        let now = engine.raw(&state);
        let done = (now - prev).abs() <= cfg.inner_tol * prev.abs().max(1.0);
        prev = now;
        if done {
            break;
        }
    }
    engine.refit_precoders(&mut state)?;
    check_cap(
        &prob.objective,
        Solution {
            objective_value: engine.raw(&state),
            beamforming: Beamforming::Shared(Slot {
                precoders: state.w.clone(),
                coeffs: state.params.to_coefficients(),
            }),
            trace,
            iterations,
        },
    )
}
