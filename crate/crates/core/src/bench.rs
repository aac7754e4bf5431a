//! Planner latency measurement.

use std::time::Instant;

use nalgebra::Vector2;

use crate::gait::Side;
use crate::horizontal::{discretize_lip, periodic_exchange_state, HorizontalParams, HorizontalPlanner, HorizontalState};
use crate::report::{percentiles, Percentiles};
use crate::vertical::{ParamError, StepSchedule, VerticalParams, VerticalPlanner, VerticalState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchReport {
    pub iterations: usize,
    pub cold: Percentiles,
    pub warm: Percentiles,
}

/// Inputs for one planning tick along a nominal gait.
#[derive(Debug, Clone, Copy)]
struct TickInput {
    phase: f64,
    vertical: VerticalState,
    x: HorizontalState,
    y: HorizontalState,
    support: Side,
}

fn tick_inputs(vp: &VerticalParams, hp: &HorizontalParams, n: usize) -> Vec<TickInput> {
    let dt = 1e-3;
    let per_step = (hp.step_duration / dt).round() as usize;
    let omega = hp.omega();
    (0..n)
        .map(|i| {
            let step = i / per_step;
            let phase = (i % per_step) as f64 * dt;
            let support = if step % 2 == 0 { Side::Left } else { Side::Right };
            let (sx, sy) = periodic_exchange_state(hp, support);
            let (a, _) = discretize_lip(omega, phase);
            let roll = |s: HorizontalState| {
                let v = a * Vector2::new(s.position, s.velocity);
                HorizontalState::new(v[0], v[1])
            };
            let wobble = 0.005 * (vp.omega() * phase).sin();
            TickInput {
                phase,
                vertical: VerticalState::new(vp.rest_length + wobble, 0.0),
                x: roll(sx),
                y: roll(sy),
                support,
            }
        })
        .collect()
}

fn run(vp: &VerticalParams, hp: &HorizontalParams, inputs: &[TickInput], warm: bool) -> Result<Vec<f64>, ParamError> {
    let mut vertical = VerticalPlanner::new(vp.clone())?;
    let mut horizontal = HorizontalPlanner::new(hp.clone())?;
    vertical.warm_start = warm;
    horizontal.warm_start = warm;
    let schedule = StepSchedule::equilibrium(vp);
    let mut samples = Vec::with_capacity(inputs.len());
    for tick in inputs {
        let started = Instant::now();
        let v = vertical.plan(tick.vertical, tick.phase, &schedule);
        let h = horizontal.plan(tick.x, tick.y, (0.0, 0.0), tick.support, tick.phase);
        samples.push(started.elapsed().as_secs_f64() * 1e6);
        std::hint::black_box((v, h.ok()));
    }
    Ok(samples)
}

/// Times `iterations` full planning ticks (vertical plus both horizontal
/// QPs), cold and warm-started. Latencies are in microseconds.
pub fn bench_planner(vp: &VerticalParams, hp: &HorizontalParams, iterations: usize) -> Result<BenchReport, ParamError> {
    let iterations = iterations.max(1);
    let inputs = tick_inputs(vp, hp, iterations);
    let cold = run(vp, hp, &inputs, false)?;
    let warm = run(vp, hp, &inputs, true)?;
    Ok(BenchReport {
        iterations,
        cold: percentiles(&cold).expect("non-empty"),
        warm: percentiles(&warm).expect("non-empty"),
    })
}

/// Warm-started latency for each horizontal horizon length in `steps`.
pub fn horizon_sweep(
    vp: &VerticalParams,
    hp: &HorizontalParams,
    steps: impl IntoIterator<Item = usize>,
    iterations: usize,
) -> Result<Vec<(usize, Percentiles)>, ParamError> {
    steps
        .into_iter()
        .map(|n| {
            let hp = HorizontalParams { predicted_steps: n, ..hp.clone() };
            let inputs = tick_inputs(vp, &hp, iterations.max(1));
            let samples = run(vp, &hp, &inputs, true)?;
            Ok((n, percentiles(&samples).expect("non-empty")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_is_ordered() {
        let r = bench_planner(&VerticalParams::default(), &HorizontalParams::default(), 200).unwrap();
        for p in [r.cold, r.warm] {
            assert!(p.p50 <= p.p95 && p.p95 <= p.p99 && p.p99 <= p.max && p.p50 > 0.0);
        }
    }
}
