//! Footstep planning on the linear inverted pendulum.
//!
//! Each horizontal axis obeys `x'' = w^2 (x - p)` with `p` the stance foot.
//! The foot position is held over a step, so the input sequence is
//! piecewise constant: the current stance `P0` for the remainder of the
//! current step, then `P1, P2, ...` for each predicted step. The decision
//! variables are the step increments `dP_i = P_i - P_{i-1}`.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix2xX, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gait::Side;
use crate::qp::{QpProblem, QpSolver, QpStatus};
use crate::vertical::{horizon_grid, positive, samples_per_step, ParamError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HorizontalParams {
    pub nominal_height: f64,
    pub gravity: f64,
    /// Set from the scenario; not read from config.
    #[serde(skip)]
    pub step_duration: f64,
    pub sample_time: f64,
    pub predicted_steps: usize,
    /// Commanded `(vx, vy)`.
    /// Set from the scenario; not read from config.
    #[serde(skip)]
    pub desired_velocity: [f64; 2],
    /// Lateral distance of each foot from the midline.
    pub step_width: f64,
    pub nominal_offset: [f64; 2],
    pub reach: [f64; 2],
    /// Per-axis weight on velocity errors.
    pub q_vel: [f64; 2],
    /// Per-axis terminal weight on the velocity error.
    pub p_vel: [f64; 2],
    pub r: [f64; 2],
    pub w: [f64; 2],
}

impl Default for HorizontalParams {
    fn default() -> Self {
        Self {
            nominal_height: 0.715,
            gravity: 9.81,
            step_duration: 0.7,
            sample_time: 0.1,
            predicted_steps: 4,
            desired_velocity: [0.3, 0.0],
            step_width: 0.15,
            nominal_offset: [0.0, 0.0],
            reach: [0.35, 0.20],
            q_vel: [10.0, 10.0],
            p_vel: [10.0, 10.0],
            r: [1e-3, 1e-3],
            w: [1.0, 1.0],
        }
    }
}

impl HorizontalParams {
    pub fn omega(&self) -> f64 {
        (self.gravity / self.nominal_height).sqrt()
    }

    pub fn samples_per_step(&self) -> usize {
        samples_per_step(self.step_duration, self.sample_time).expect("validated parameters")
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        positive("nominal_height", self.nominal_height)?;
        positive("gravity", self.gravity)?;
        positive("step_duration", self.step_duration)?;
        positive("sample_time", self.sample_time)?;
        samples_per_step(self.step_duration, self.sample_time)?;
        positive("reach.x", self.reach[0])?;
        positive("reach.y", self.reach[1])?;
        if self.predicted_steps < 1 {
            return Err(ParamError::Invalid("horizontal predicted_steps must be at least 1".into()));
        }
        if !self.step_width.is_finite() || self.step_width < 0.0 {
            return Err(ParamError::Invalid("step_width must be finite and non-negative".into()));
        }
        let finite = self.desired_velocity.iter().chain(self.nominal_offset.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(ParamError::Invalid("velocity and offset must be finite".into()));
        }
        let weights = [self.q_vel, self.p_vel, self.r, self.w];
        if weights.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ParamError::Invalid("horizontal weights must be finite and non-negative".into()));
        }
        if self.w.iter().any(|v| *v <= 0.0) {
            return Err(ParamError::Invalid("horizontal w must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizontalState {
    pub position: f64,
    pub velocity: f64,
}

impl HorizontalState {
    pub fn new(position: f64, velocity: f64) -> Self {
        Self { position, velocity }
    }
    fn vector(&self) -> Vector2<f64> {
        Vector2::new(self.position, self.velocity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FootstepPlan {
    pub support_now: f64,
    pub future_steps: Vec<f64>,
    /// Per-sample stance position over the horizon.
    pub inputs: Vec<f64>,
    pub intervals: Vec<f64>,
    pub predicted_states: Vec<HorizontalState>,
    pub support: Side,
    pub status: QpStatus,
    /// True when the reach box had to be widened.
    pub relaxed: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("footstep plan for the {axis} axis failed with {status:?} after widening the reach box")]
pub struct PlannerFailure {
    pub axis: char,
    pub status: QpStatus,
}

/// Exact discretization of the LIP with the stance position as input.
pub fn discretize_lip(omega: f64, ts: f64) -> (Matrix2<f64>, Vector2<f64>) {
    let (sh, ch) = ((omega * ts).sinh(), (omega * ts).cosh());
    let a = Matrix2::new(ch, sh / omega, omega * sh, ch);
    let b = Vector2::new(1.0 - ch, -omega * sh);
    (a, b)
}

/// Maps `P0` and absolute future steps `[P1 .. Pn]` to per-sample inputs.
/// Returns `(carry, select)` with `u = carry * P0 + select * P`.
pub fn build_input_map(n_r: usize, n_s: usize, n_steps: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = n_r + n_s * n_steps;
    let mut carry = DVector::zeros(n);
    let mut select = DMatrix::zeros(n, n_steps);
    for k in 0..n {
        if k < n_r {
            carry[k] = 1.0;
        } else {
            select[(k, (k - n_r) / n_s)] = 1.0;
        }
    }
    (carry, select)
}

/// Signed lateral increments for the predicted steps, left at `+y`.
pub fn lateral_increments(support: Side, step_width: f64, n_steps: usize) -> Vec<f64> {
    let first = match support {
        Side::Left => -2.0 * step_width,
        Side::Right => 2.0 * step_width,
    };
    (0..n_steps).map(|i| if i % 2 == 0 { first } else { -first }).collect()
}

struct AxisProblem<'a> {
    state: HorizontalState,
    p0: f64,
    increments: &'a [f64],
    v_ref: &'a [f64],
    q: f64,
    p: f64,
    r: f64,
    w: f64,
    offset: f64,
    reach: f64,
}

/// Planner with one warm-started solver per axis.
#[derive(Debug, Clone)]
pub struct HorizontalPlanner {
    params: HorizontalParams,
    solvers: [QpSolver; 2],
    warm: [Option<DVector<f64>>; 2],
    pub warm_start: bool,
}

impl HorizontalPlanner {
    pub fn new(params: HorizontalParams) -> Result<Self, ParamError> {
        params.validate()?;
        Ok(Self { params, solvers: [QpSolver::new(), QpSolver::new()], warm: [None, None], warm_start: true })
    }

    pub fn params(&self) -> &HorizontalParams {
        &self.params
    }

    pub fn set_desired_velocity(&mut self, v: [f64; 2]) {
        self.params.desired_velocity = v;
    }

    pub fn reset(&mut self) {
        self.warm = [None, None];
    }

    /// Plans both axes `phase_time` seconds into the current step.
    pub fn plan(
        &mut self,
        state_x: HorizontalState,
        state_y: HorizontalState,
        stance: (f64, f64),
        support: Side,
        phase_time: f64,
    ) -> Result<(FootstepPlan, FootstepPlan), PlannerFailure> {
        let n_steps = self.params.predicted_steps;
        let dx = vec![self.params.desired_velocity[0] * self.params.step_duration; n_steps];
        let dy: Vec<f64> = lateral_increments(support, self.params.step_width, n_steps)
            .into_iter()
            .map(|d| d + self.params.desired_velocity[1] * self.params.step_duration)
            .collect();
        let v_ref = self.velocity_reference(support, phase_time);
        let mut plans = Vec::with_capacity(2);
        for (axis, (state, p0, incr)) in [(state_x, stance.0, &dx), (state_y, stance.1, &dy)].into_iter().enumerate() {
            let pr = &self.params;
            let problem = AxisProblem {
                state,
                p0,
                increments: incr,
                v_ref: &v_ref[axis],
                q: pr.q_vel[axis],
                p: pr.p_vel[axis],
                r: pr.r[axis],
                w: pr.w[axis],
                offset: pr.nominal_offset[axis],
                reach: pr.reach[axis],
            };
            let mut plan = self.solve_axis(axis, &problem, phase_time, 1.0);
            if !plan.status_ok() {
                log::warn!("reach box infeasible on axis {axis}; widening");
                plan = self.solve_axis(axis, &problem, phase_time, 1.5);
                plan.relaxed = true;
                if !plan.status_ok() {
                    self.warm[axis] = None;
                    return Err(PlannerFailure { axis: if axis == 0 { 'x' } else { 'y' }, status: plan.status });
                }
            }
            plan.support = support;
            plans.push(plan);
        }
        let y = plans.pop().expect("two axes");
        let x = plans.pop().expect("two axes");
        Ok((x, y))
    }

    /// Periodic-gait CoM velocity at every sample after the first, per axis.
    fn velocity_reference(&self, support: Side, phase_time: f64) -> [Vec<f64>; 2] {
        let pr = &self.params;
        let ns = pr.samples_per_step();
        let (intervals, n_r) = horizon_grid(phase_time, pr.step_duration, pr.sample_time, ns, pr.predicted_steps);
        let mut out = [Vec::with_capacity(intervals.len()), Vec::with_capacity(intervals.len())];
        for k in 1..=intervals.len() {
            let (step, tau) = if k <= n_r {
                (0, pr.step_duration - (n_r - k) as f64 * pr.sample_time)
            } else {
                let m = k - n_r - 1;
                (m / ns + 1, (m % ns + 1) as f64 * pr.sample_time)
            };
            let side = if step % 2 == 0 { support } else { support.other() };
            let v = periodic_velocity(pr, side, tau);
            out[0].push(v[0]);
            out[1].push(v[1]);
        }
        out
    }

    fn solve_axis(&mut self, axis: usize, pb: &AxisProblem<'_>, phase_time: f64, widen: f64) -> FootstepPlan {
        let pr = &self.params;
        let ns = pr.samples_per_step();
        let steps = pr.predicted_steps;
        let (intervals, n_r) = horizon_grid(phase_time, pr.step_duration, pr.sample_time, ns, steps);
        let n = intervals.len();
        let (carry, select) = build_input_map(n_r, ns, steps);
        // Absolute steps from increments: P = P0 + L dP, L lower-triangular ones.
        let cum = DMatrix::<f64>::from_fn(steps, steps, |i, j| if j <= i { 1.0 } else { 0.0 });
        let sel = &select * &cum;
        let u0 = &carry * pb.p0 + &select * DVector::from_element(steps, pb.p0);

        let omega = pr.omega();
        let (a_full, b_full) = discretize_lip(omega, pr.sample_time);
        let (a_first, b_first) = discretize_lip(omega, intervals[0]);
        let mut c = pb.state.vector();
        let mut d = Matrix2xX::<f64>::zeros(steps);
        let mut hess = DMatrix::<f64>::zeros(steps, steps);
        let mut grad = DVector::<f64>::zeros(steps);
        let mut cons = DMatrix::<f64>::zeros(steps, steps);
        let mut base = DVector::<f64>::zeros(steps);
        for k in 0..=n {
            if k >= 1 {
                let weight = if k == n { pb.p } else { pb.q };
                let dv = d.row(1).transpose();
                hess += &dv * dv.transpose() * weight;
                grad += dv * ((c[1] - pb.v_ref[k - 1]) * weight);
            }
            if k >= n_r && (k - n_r) % ns == 0 && k < n {
                // Touchdown of predicted step i.
                let i = (k - n_r) / ns;
                let mut row = cum.row(i).into_owned();
                row -= d.row(0);
                cons.set_row(i, &row);
                base[i] = pb.p0 - c[0];
            }
            if k == n {
                break;
            }
            let (a, b) = if k == 0 { (a_first, b_first) } else { (a_full, b_full) };
            c = a * c + b * u0[k];
            d = a * d + b * sel.row(k);
        }
        let dref = DVector::from_column_slice(pb.increments);
        let sts = sel.transpose() * &sel;
        hess += &sts * pb.r;
        grad -= &sts * &dref * pb.r;
        for i in 0..steps {
            hess[(i, i)] += pb.w;
        }
        grad -= &dref * pb.w;

        // Solve over the touchdown offsets e = P_i - c_i - L, which turns the
        // reach box into bounds: dP = T e + t0 with T = cons^-1.
        let t_map = cons.clone().solve_lower_triangular(&DMatrix::identity(steps, steps)).expect("unit triangular");
        let t0 = &t_map * base.map(|b| pb.offset - b);
        let h_e = t_map.transpose() * &hess * &t_map;
        let g_e = t_map.transpose() * (&hess * &t0 + &grad);
        let bound = pb.reach * widen;
        let problem = QpProblem::new(h_e * 2.0, g_e * 2.0)
            .and_then(|p| {
                p.with_inequalities(
                    DMatrix::identity(steps, steps),
                    DVector::from_element(steps, -bound),
                    DVector::from_element(steps, bound),
                )
            })
            .expect("well-formed footstep QP");
        let start = match (&self.warm[axis], self.warm_start) {
            (Some(w), true) => w.map(|v| v.clamp(-bound, bound)),
            _ => DVector::zeros(steps),
        };
        let sol = self.solvers[axis].solve(&problem, Some(&start)).expect("footstep QP is convex");
        if sol.is_optimal() {
            self.warm[axis] = Some(sol.x.clone());
        }
        let dp = &t_map * &sol.x + &t0;

        let future: Vec<f64> = (&cum * &dp).iter().map(|v| v + pb.p0).collect();
        let inputs: Vec<f64> = (0..n).map(|k| u0[k] + sel.row(k).dot(&dp.transpose())).collect();
        let mut states = Vec::with_capacity(n + 1);
        let mut x = pb.state.vector();
        states.push(pb.state);
        for k in 0..n {
            let (a, b) = if k == 0 { (a_first, b_first) } else { (a_full, b_full) };
            x = a * x + b * inputs[k];
            states.push(HorizontalState::new(x[0], x[1]));
        }
        FootstepPlan {
            support_now: pb.p0,
            future_steps: future,
            inputs,
            intervals,
            predicted_states: states,
            support: Side::Left,
            status: sol.status,
            relaxed: false,
        }
    }
}

impl FootstepPlan {
    fn status_ok(&self) -> bool {
        self.status == QpStatus::Optimal
    }

    /// Sample index at which predicted step `i` (0-based) touches down.
    pub fn touchdown_sample(&self, i: usize, samples_per_step: usize) -> usize {
        let n_r = self.intervals.len() - samples_per_step * self.future_steps.len();
        n_r + i * samples_per_step
    }
}

/// One-shot cold plan for both axes.
pub fn plan_footsteps(
    state_x: HorizontalState,
    state_y: HorizontalState,
    stance: (f64, f64),
    support: Side,
    phase_time: f64,
    params: &HorizontalParams,
) -> Result<(FootstepPlan, FootstepPlan), PlannerFailure> {
    let mut planner = HorizontalPlanner::new(params.clone()).map_err(|_| PlannerFailure { axis: 'x', status: QpStatus::Infeasible })?;
    planner.warm_start = false;
    planner.plan(state_x, state_y, stance, support, phase_time)
}

/// Periodic-gait state at the start of a step: CoM on the midline between
/// feet, `(x, y)` relative to the stance foot with matching velocities.
pub fn periodic_exchange_state(params: &HorizontalParams, support: Side) -> (HorizontalState, HorizontalState) {
    let omega = params.omega();
    let half = omega * params.step_duration / 2.0;
    let s = params.desired_velocity[0] * params.step_duration;
    let x = HorizontalState::new(-s / 2.0, s * omega / 2.0 / half.tanh());
    let a = params.step_width;
    let sign = match support {
        Side::Left => -1.0,
        Side::Right => 1.0,
    };
    let y = HorizontalState::new(sign * a, -sign * a * omega * half.tanh());
    (x, y)
}

/// CoM velocity of the periodic gait `tau` seconds into a step on `support`.
pub fn periodic_velocity(params: &HorizontalParams, support: Side, tau: f64) -> [f64; 2] {
    let omega = params.omega();
    let (sh, ch) = ((omega * tau).sinh(), (omega * tau).cosh());
    let (x, y) = periodic_exchange_state(params, support);
    let v = |s: HorizontalState| s.position * omega * sh + s.velocity * ch;
    [v(x), v(y) + params.desired_velocity[1]]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rk4(omega: f64, x: Vector2<f64>, p: f64, t: f64, dt: f64) -> Vector2<f64> {
        let f = |s: Vector2<f64>| Vector2::new(s[1], omega * omega * (s[0] - p));
        let steps = (t / dt).round() as usize;
        let h = t / steps as f64;
        let mut s = x;
        for _ in 0..steps {
            let k1 = f(s);
            let k2 = f(s + k1 * (h / 2.0));
            let k3 = f(s + k2 * (h / 2.0));
            let k4 = f(s + k3 * h);
            s += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        s
    }

    #[test]
    fn discretization_matches_rk4_and_frozen_values() {
        let omega = (9.81f64 / 0.715).sqrt();
        assert!((omega - 3.70409).abs() < 1e-5);
        let (a, b) = discretize_lip(omega, 0.1);
        assert!((a.column(0) - rk4(omega, Vector2::new(1.0, 0.0), 0.0, 0.1, 1e-6)).amax() < 1e-6);
        assert!((a.column(1) - rk4(omega, Vector2::new(0.0, 1.0), 0.0, 0.1, 1e-6)).amax() < 1e-6);
        assert!((b - rk4(omega, Vector2::zeros(), 1.0, 0.1, 1e-6)).amax() < 1e-6);
        let frozen = Matrix2::new(1.069389, 0.102302, 1.403618, 1.069389);
        assert!((a - frozen).amax() < 1e-6);
        assert!((b - Vector2::new(-0.069389, -1.403618)).amax() < 1e-6);
    }

    #[test]
    fn stance_point_is_a_fixed_point() {
        let (a, b) = discretize_lip(3.7, 0.1);
        for p in [-1.3, 0.0, 0.42, 7.0] {
            let next = a * Vector2::new(p, 0.0) + b * p;
            assert!((next - Vector2::new(p, 0.0)).amax() < 1e-12);
        }
        let (a, b) = discretize_lip(3.7, 1e-12);
        assert!((a - Matrix2::identity()).amax() < 1e-10 && b.amax() < 1e-10);
    }

    #[test]
    fn input_map_blocks() {
        let (carry, select) = build_input_map(1, 1, 1);
        assert_eq!(carry.as_slice(), &[1.0, 0.0]);
        assert_eq!(select.column(0).as_slice(), &[0.0, 1.0]);
        let (carry, select) = build_input_map(3, 7, 4);
        assert_eq!(carry.len(), 31);
        assert_eq!(carry.sum(), 3.0);
        let lens: Vec<f64> = (0..4).map(|i| select.column(i).sum()).collect();
        assert_eq!(lens, vec![7.0; 4]);
        for k in 0..31 {
            assert_eq!(carry[k] + select.row(k).sum(), 1.0);
        }
    }

    #[test]
    fn constant_input_rollout_matches_analytic_flow() {
        let omega = (9.81f64 / 0.715).sqrt();
        let (carry, select) = build_input_map(3, 7, 4);
        let p = 0.05;
        let u = &carry * p + &select * DVector::from_element(4, p);
        let (a, b) = discretize_lip(omega, 0.1);
        let mut x = Vector2::new(0.01, 0.2);
        for k in 0..u.len() {
            x = a * x + b * u[k];
        }
        let t = 3.1;
        let (x0, v0) = (0.01 - p, 0.2);
        let exact = Vector2::new(
            p + x0 * (omega * t).cosh() + v0 / omega * (omega * t).sinh(),
            x0 * omega * (omega * t).sinh() + v0 * (omega * t).cosh(),
        );
        assert!((x - exact).amax() < 1e-9 * exact.amax().max(1.0));
    }

    #[test]
    fn standing_still_needs_no_step() {
        let params = HorizontalParams { desired_velocity: [0.0, 0.0], ..Default::default() };
        let (px, _) = plan_footsteps(
            HorizontalState::new(0.0, 0.0),
            HorizontalState::new(-0.15, 0.0),
            (0.0, 0.15),
            Side::Left,
            0.0,
            &params,
        )
        .unwrap();
        for p in &px.future_steps {
            assert!(p.abs() < 1e-6);
        }
    }

    fn nominal(support: Side, phase: f64, params: &HorizontalParams) -> (FootstepPlan, FootstepPlan) {
        let (sx, sy) = periodic_exchange_state(params, support);
        plan_footsteps(sx, sy, (0.0, 0.0), support, phase, params).unwrap()
    }

    #[test]
    fn forward_push_moves_first_step_forward() {
        let params = HorizontalParams::default();
        let (sx, sy) = periodic_exchange_state(&params, Side::Left);
        let base = plan_footsteps(sx, sy, (0.0, 0.0), Side::Left, 0.3, &params).unwrap().0;
        let pushed = HorizontalState::new(sx.position, sx.velocity + 0.2759);
        let moved = plan_footsteps(pushed, sy, (0.0, 0.0), Side::Left, 0.3, &params).unwrap().0;
        assert!(moved.future_steps[0] > base.future_steps[0] + 0.01);
    }

    #[test]
    fn plans_respect_the_reach_box() {
        let params = HorizontalParams::default();
        for (side, phase) in [(Side::Left, 0.0), (Side::Right, 0.35), (Side::Left, 0.69)] {
            let (px, py) = nominal(side, phase, &params);
            for (plan, axis) in [(&px, 0), (&py, 1)] {
                for (i, step) in plan.future_steps.iter().enumerate() {
                    let k = plan.touchdown_sample(i, params.samples_per_step());
                    let gap = step - plan.predicted_states[k].position - params.nominal_offset[axis];
                    assert!(gap.abs() <= params.reach[axis] + 1e-9, "{gap}");
                }
            }
        }
    }

    #[test]
    fn lateral_steps_alternate() {
        let params = HorizontalParams::default();
        for side in [Side::Left, Side::Right] {
            let (_, py) = nominal(side, 0.0, &params);
            let mut prev = py.support_now;
            let mut last_sign = match side {
                Side::Left => 1.0,
                Side::Right => -1.0,
            };
            for p in &py.future_steps {
                let sign = (p - prev).signum();
                assert_eq!(sign, -last_sign);
                last_sign = sign;
                prev = *p;
            }
        }
    }

    #[test]
    fn predicted_states_obey_lip_dynamics() {
        let params = HorizontalParams::default();
        let (px, py) = nominal(Side::Right, 0.123, &params);
        for plan in [px, py] {
            for k in 0..plan.inputs.len() {
                let (a, b) = discretize_lip(params.omega(), plan.intervals[k]);
                let s = plan.predicted_states[k];
                let next = a * Vector2::new(s.position, s.velocity) + b * plan.inputs[k];
                let got = plan.predicted_states[k + 1];
                assert!((next - Vector2::new(got.position, got.velocity)).amax() < 1e-10);
            }
        }
    }

    #[test]
    fn final_step_velocity_tracks_command() {
        let params = HorizontalParams::default();
        let (px, _) = nominal(Side::Left, 0.0, &params);
        let ns = params.samples_per_step();
        let tail = &px.predicted_states[px.predicted_states.len() - ns - 1..];
        let mean = (tail[ns].position - tail[0].position) / params.step_duration;
        assert!((mean - 0.3).abs() < 0.05 * 0.3, "{mean}");
    }

    #[test]
    fn replanning_along_the_prediction_is_consistent() {
        let params = HorizontalParams::default();
        let (sx, sy) = periodic_exchange_state(&params, Side::Left);
        let (px, py) = plan_footsteps(sx, sy, (0.0, 0.0), Side::Left, 0.05, &params).unwrap();
        let (nx, ny) = (px.predicted_states[1], py.predicted_states[1]);
        let phase = 0.05 + px.intervals[0];
        let (qx, qy) = plan_footsteps(nx, ny, (0.0, 0.0), Side::Left, phase, &params).unwrap();
        assert!((qx.future_steps[0] - px.future_steps[0]).abs() < 1e-6);
        assert!((qy.future_steps[0] - py.future_steps[0]).abs() < 1e-6);
    }
}
