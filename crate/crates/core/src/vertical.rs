//! CoM height planning with the actuated vertical spring.
//!
//! The vertical CoM obeys `z'' = -w^2 (z - r) - g` relative to the stance
//! contact, where `r` is the internal spring rest length. Folding the gravity
//! sag `g / w^2` into the input gives `z'' = -w^2 z + w^2 u` with `u` equal to
//! the equilibrium height. The planner works with `u`, reported as the
//! reference length `r` in logs; the internal rest length is `u + g / w^2`.
//!
//! Within a step the reference length moves linearly. The decision variables
//! are the total change `dr_i` of each predicted future step; the remainder of
//! the current step follows the ramp latched when the step began.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix2xX, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qp::{QpProblem, QpSolver, QpStatus};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{0} must be positive and finite, got {1}")]
    NotPositive(&'static str, f64),
    #[error("step duration {step} is not a multiple of the sample time {sample}")]
    SampleGrid { step: f64, sample: f64 },
    #[error("{0}")]
    Invalid(String),
}

pub(crate) fn positive(name: &'static str, v: f64) -> Result<(), ParamError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ParamError::NotPositive(name, v))
    }
}

/// Number of samples in one step; errors if `step / sample` is not integral.
pub(crate) fn samples_per_step(step: f64, sample: f64) -> Result<usize, ParamError> {
    let ratio = step / sample;
    let ns = ratio.round();
    if ns < 1.0 || (ns * sample - step).abs() > 1e-9 {
        return Err(ParamError::SampleGrid { step, sample });
    }
    Ok(ns as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerticalParams {
    pub mass: f64,
    pub stiffness: f64,
    /// Nominal CoM height above the stance contact (equilibrium).
    pub rest_length: f64,
    pub gravity: f64,
    /// Set from the scenario; not read from config.
    #[serde(skip)]
    pub step_duration: f64,
    pub sample_time: f64,
    pub predicted_steps: usize,
    /// Stage weight on `(z, z_dot)` tracking errors.
    pub q: [f64; 2],
    /// Terminal weight on `(z, z_dot)`.
    pub p: [f64; 2],
    pub r: f64,
    pub w: f64,
}

impl Default for VerticalParams {
    fn default() -> Self {
        Self {
            mass: 14.5,
            stiffness: 1470.0,
            rest_length: 0.715,
            gravity: 9.81,
            step_duration: 0.7,
            sample_time: 0.05,
            predicted_steps: 1,
            q: [100.0, 10.0],
            p: [500.0, 50.0],
            r: 1e-4,
            w: 10.0,
        }
    }
}

impl VerticalParams {
    pub fn omega(&self) -> f64 {
        (self.stiffness / self.mass).sqrt()
    }

    /// Static spring compression `g / w^2`.
    pub fn sag(&self) -> f64 {
        self.gravity / (self.omega() * self.omega())
    }

    pub fn samples_per_step(&self) -> usize {
        samples_per_step(self.step_duration, self.sample_time).expect("validated parameters")
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        positive("mass", self.mass)?;
        positive("stiffness", self.stiffness)?;
        positive("rest_length", self.rest_length)?;
        positive("gravity", self.gravity)?;
        positive("step_duration", self.step_duration)?;
        positive("sample_time", self.sample_time)?;
        samples_per_step(self.step_duration, self.sample_time)?;
        if self.predicted_steps < 1 {
            return Err(ParamError::Invalid("vertical predicted_steps must be at least 1".into()));
        }
        let extra = [self.r, self.w];
        if self.q.iter().chain(self.p.iter()).chain(extra.iter()).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ParamError::Invalid("vertical weights must be finite and non-negative".into()));
        }
        if self.w <= 0.0 && self.r <= 0.0 {
            return Err(ParamError::Invalid("at least one of r, w must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerticalState {
    /// Height above the current stance contact.
    pub z: f64,
    pub z_dot: f64,
}

impl VerticalState {
    pub fn new(z: f64, z_dot: f64) -> Self {
        Self { z, z_dot }
    }
    fn vector(&self) -> Vector2<f64> {
        Vector2::new(self.z, self.z_dot)
    }
}

/// Spring schedule of the step in progress.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    /// Vertical state measured when the step began.
    pub anchor: VerticalState,
    /// Folded reference length at the start of the step.
    pub r_start: f64,
    /// Change of the reference length over the whole step.
    pub delta_r: f64,
}

impl StepSchedule {
    /// Resting at equilibrium with a constant spring.
    pub fn equilibrium(params: &VerticalParams) -> Self {
        Self { anchor: VerticalState::new(params.rest_length, 0.0), r_start: params.rest_length, delta_r: 0.0 }
    }

    /// Folded reference length at time `t` since the step began.
    pub fn r_at(&self, t: f64, step_duration: f64) -> f64 {
        self.r_start + self.delta_r * (t / step_duration)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerticalSolution {
    pub delta_r: Vec<f64>,
    /// Folded reference length held over each sample interval.
    pub r_trajectory: Vec<f64>,
    /// Interval lengths; the first covers the fractional remainder of the
    /// current sample.
    pub intervals: Vec<f64>,
    /// Predicted states, starting with the current one.
    pub predicted_states: Vec<VerticalState>,
    pub reference: Vec<VerticalState>,
    pub status: QpStatus,
}

/// Exact zero-order-hold discretization of the folded spring dynamics.
pub fn discretize_vertical(omega: f64, ts: f64) -> (Matrix2<f64>, Vector2<f64>) {
    let (s, c) = (omega * ts).sin_cos();
    let a = Matrix2::new(c, s / omega, -omega * s, c);
    let b = Vector2::new(1.0 - c, omega * s);
    (a, b)
}

/// Closed-form CoM height under a linearly varying internal rest length
/// `r(t) = r0 + (t / T) (r_t - r0)` starting from `(z0, zdot0)`.
/// Returns `(z, z_dot)` at time `t`.
#[allow(clippy::too_many_arguments)]
pub fn vertical_reference(
    z0: f64,
    zdot0: f64,
    r0: f64,
    r_t: f64,
    step_duration: f64,
    t: f64,
    omega: f64,
    gravity: f64,
) -> (f64, f64) {
    let sag = gravity / (omega * omega);
    let rate = (r_t - r0) / step_duration;
    let d1 = z0 - r0 + sag;
    let d2 = zdot0 / omega - rate / omega;
    let (s, c) = (omega * t).sin_cos();
    let z = d1 * c + d2 * s + r0 + rate * t - sag;
    let z_dot = -d1 * omega * s + d2 * omega * c + rate;
    (z, z_dot)
}

/// Sample grid for the rest of the current step plus `steps` full steps.
/// Returns the interval lengths and the number of current-step intervals.
pub(crate) fn horizon_grid(phase_time: f64, step_duration: f64, ts: f64, ns: usize, steps: usize) -> (Vec<f64>, usize) {
    let remaining = (step_duration - phase_time).clamp(1e-6, step_duration);
    let n_r = ((remaining / ts) - 1e-9).ceil().max(1.0) as usize;
    let first = (remaining - (n_r - 1) as f64 * ts).max(1e-6);
    let mut intervals = Vec::with_capacity(n_r + ns * steps);
    intervals.push(first);
    intervals.extend(std::iter::repeat(ts).take(n_r - 1 + ns * steps));
    (intervals, n_r)
}

/// Stateful planner: owns a solver and the previous solution for warm starts.
#[derive(Debug, Clone)]
pub struct VerticalPlanner {
    params: VerticalParams,
    solver: QpSolver,
    warm: Option<DVector<f64>>,
    pub warm_start: bool,
}

impl VerticalPlanner {
    pub fn new(params: VerticalParams) -> Result<Self, ParamError> {
        params.validate()?;
        Ok(Self { params, solver: QpSolver::new(), warm: None, warm_start: true })
    }

    pub fn params(&self) -> &VerticalParams {
        &self.params
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    /// Plans from `state` at `phase_time` seconds into the current step.
    pub fn plan(&mut self, state: VerticalState, phase_time: f64, schedule: &StepSchedule) -> VerticalSolution {
        let p = &self.params;
        let ns = p.samples_per_step();
        let steps = p.predicted_steps;
        let omega = p.omega();
        let t_step = p.step_duration;
        let (intervals, n_r) = horizon_grid(phase_time, t_step, p.sample_time, ns, steps);
        let n = intervals.len();

        // Affine input map u = u0 + S * dr.
        let mut u0 = vec![0.0; n];
        let mut sel = DMatrix::<f64>::zeros(n, steps);
        let mut elapsed = phase_time.min(t_step);
        for k in 0..n_r {
            elapsed += intervals[k];
            u0[k] = schedule.r_at(elapsed.min(t_step), t_step);
        }
        let r_end = schedule.r_start + schedule.delta_r;
        for i in 0..steps {
            for j in 1..=ns {
                let k = n_r + i * ns + (j - 1);
                u0[k] = r_end;
                for l in 0..i {
                    sel[(k, l)] = 1.0;
                }
                sel[(k, i)] = j as f64 / ns as f64;
            }
        }

        // Reference: the closed-form evolution of the current step, then the
        // equilibrium height for the predicted steps.
        let sag = p.sag();
        let mut reference = Vec::with_capacity(n + 1);
        let mut t = phase_time.min(t_step);
        for k in 0..=n {
            if k < n_r {
                let (z, zd) = vertical_reference(
                    schedule.anchor.z,
                    schedule.anchor.z_dot,
                    schedule.r_start + sag,
                    r_end + sag,
                    t_step,
                    t,
                    omega,
                    p.gravity,
                );
                reference.push(VerticalState::new(z, zd));
            } else {
                reference.push(VerticalState::new(p.rest_length, 0.0));
            }
            if k < n {
                t += intervals[k];
            }
        }

        // Condensed prediction X_k = c_k + D_k dr.
        let (a_full, b_full) = discretize_vertical(omega, p.sample_time);
        let (a_first, b_first) = discretize_vertical(omega, intervals[0]);
        let q = Matrix2::from_diagonal(&Vector2::new(p.q[0], p.q[1]));
        let pt = Matrix2::from_diagonal(&Vector2::new(p.p[0], p.p[1]));
        let mut c = state.vector();
        let mut d = Matrix2xX::<f64>::zeros(steps);
        let mut hess = DMatrix::<f64>::zeros(steps, steps);
        let mut grad = DVector::<f64>::zeros(steps);
        for k in 0..=n {
            let weight = if k == n { pt } else { q };
            let err = c - reference[k].vector();
            let wd = weight * &d;
            hess += d.transpose() * &wd;
            grad += wd.transpose() * err;
            if k == n {
                break;
            }
            let (a, b) = if k == 0 { (a_first, b_first) } else { (a_full, b_full) };
            c = a * c + b * u0[k];
            let s_row = sel.row(k);
            d = a * d + b * s_row;
        }
        hess += sel.transpose() * &sel * p.r;
        for i in 0..steps {
            hess[(i, i)] += p.w;
        }

        let problem = QpProblem::new(hess * 2.0, grad * 2.0).expect("well-formed vertical QP");
        let warm = if self.warm_start { self.warm.as_ref() } else { None };
        let sol = self.solver.solve(&problem, warm).expect("vertical QP is convex");
        let dr = sol.x.clone();
        self.warm = Some(sol.x);

        let r_trajectory: Vec<f64> = (0..n).map(|k| u0[k] + sel.row(k).dot(&dr.transpose())).collect();
        let mut predicted_states = Vec::with_capacity(n + 1);
        let mut x = state.vector();
        predicted_states.push(state);
        for k in 0..n {
            let (a, b) = if k == 0 { (a_first, b_first) } else { (a_full, b_full) };
            x = a * x + b * r_trajectory[k];
            predicted_states.push(VerticalState::new(x[0], x[1]));
        }

        VerticalSolution {
            delta_r: dr.iter().copied().collect(),
            r_trajectory,
            intervals,
            predicted_states,
            reference,
            status: sol.status,
        }
    }
}

/// One-shot cold plan.
pub fn plan_vertical(
    state: VerticalState,
    phase_time: f64,
    schedule: &StepSchedule,
    params: &VerticalParams,
) -> Result<VerticalSolution, ParamError> {
    let mut planner = VerticalPlanner::new(params.clone())?;
    planner.warm_start = false;
    Ok(planner.plan(state, phase_time, schedule))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Classic RK4 on the folded spring with constant input.
    fn rk4(omega: f64, z: Vector2<f64>, u: f64, t: f64, dt: f64) -> Vector2<f64> {
        let f = |x: Vector2<f64>| Vector2::new(x[1], -omega * omega * (x[0] - u));
        let steps = (t / dt).round() as usize;
        let h = t / steps as f64;
        let mut x = z;
        for _ in 0..steps {
            let k1 = f(x);
            let k2 = f(x + k1 * (h / 2.0));
            let k3 = f(x + k2 * (h / 2.0));
            let k4 = f(x + k3 * h);
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        x
    }

    #[test]
    fn discretization_matches_rk4_and_frozen_values() {
        let omega = (1470.0f64 / 14.5).sqrt();
        let (a, b) = discretize_vertical(omega, 0.05);
        let col0 = rk4(omega, Vector2::new(1.0, 0.0), 0.0, 0.05, 1e-6);
        let col1 = rk4(omega, Vector2::new(0.0, 1.0), 0.0, 0.05, 1e-6);
        let bb = rk4(omega, Vector2::zeros(), 1.0, 0.05, 1e-6);
        assert!((a.column(0) - col0).amax() < 1e-6);
        assert!((a.column(1) - col1).amax() < 1e-6);
        assert!((b - bb).amax() < 1e-6);
        let frozen = Matrix2::new(0.875930, 0.0479145, -4.857543, 0.875930);
        assert!((a - frozen).amax() < 1e-6);
        assert!((b - Vector2::new(0.124070, 4.857543)).amax() < 1e-6);
        assert!((a.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn discretization_small_step_is_identity() {
        let (a, b) = discretize_vertical(10.0, 1e-12);
        assert!((a - Matrix2::identity()).amax() < 1e-10);
        assert!(b.amax() < 1e-10);
    }

    #[test]
    fn reference_boundary_and_half_period() {
        let omega = (1470.0f64 / 14.5).sqrt();
        let (z, zd) = vertical_reference(0.7, -0.1, 0.8, 0.82, 0.7, 0.0, omega, 9.81);
        assert!((z - 0.7).abs() < 1e-15 && (zd + 0.1).abs() < 1e-15);
        let t = std::f64::consts::PI / omega;
        let (z, zd) = vertical_reference(0.715, 0.0, 0.715, 0.715, 0.7, t, omega, 9.81);
        assert!((z - (0.715 - 2.0 * 9.81 / (omega * omega))).abs() < 1e-12);
        assert!((z - 0.52147).abs() < 1e-5);
        assert!(zd.abs() < 1e-12);
    }

    #[test]
    fn on_reference_plan_is_stationary() {
        let params = VerticalParams::default();
        let schedule = StepSchedule::equilibrium(&params);
        let sol = plan_vertical(VerticalState::new(0.715, 0.0), 0.0, &schedule, &params).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!(sol.delta_r[0].abs() < 1e-9);
        let mean = sol.predicted_states.iter().map(|s| s.z).sum::<f64>() / sol.predicted_states.len() as f64;
        assert!((mean - 0.715).abs() < 1e-6);
    }

    #[test]
    fn depressed_state_lengthens_spring() {
        let params = VerticalParams::default();
        let schedule = StepSchedule::equilibrium(&params);
        let sol = plan_vertical(VerticalState::new(0.695, 0.0), 0.0, &schedule, &params).unwrap();
        assert!(sol.delta_r[0] > 0.0, "{:?}", sol.delta_r);
    }

    #[test]
    fn predictions_obey_discrete_dynamics_and_ramps_are_linear() {
        let params = VerticalParams { predicted_steps: 3, ..Default::default() };
        let schedule = StepSchedule { anchor: VerticalState::new(0.70, 0.05), r_start: 0.72, delta_r: -0.01 };
        let sol = plan_vertical(VerticalState::new(0.705, 0.1), 0.237, &schedule, &params).unwrap();
        let omega = params.omega();
        for k in 0..sol.r_trajectory.len() {
            let (a, b) = discretize_vertical(omega, sol.intervals[k]);
            let x = Vector2::new(sol.predicted_states[k].z, sol.predicted_states[k].z_dot);
            let next = a * x + b * sol.r_trajectory[k];
            let got = Vector2::new(sol.predicted_states[k + 1].z, sol.predicted_states[k + 1].z_dot);
            assert!((next - got).amax() < 1e-10);
        }
        let ns = params.samples_per_step();
        let n_r = sol.r_trajectory.len() - ns * params.predicted_steps;
        for i in 0..params.predicted_steps {
            let block = &sol.r_trajectory[n_r + i * ns..n_r + (i + 1) * ns];
            let slope = sol.delta_r[i] / ns as f64;
            for w in block.windows(2) {
                assert!((w[1] - w[0] - slope).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn response_is_affine_in_the_state() {
        let params = VerticalParams { predicted_steps: 2, ..Default::default() };
        let schedule = StepSchedule::equilibrium(&params);
        let plan = |z: f64, v: f64| plan_vertical(VerticalState::new(z, v), 0.1, &schedule, &params).unwrap().delta_r;
        let base = plan(0.715, 0.0);
        let a = plan(0.705, 0.0);
        let b = plan(0.715, -0.2);
        let ab = plan(0.705, -0.2);
        for i in 0..2 {
            assert!((ab[i] - base[i] - (a[i] - base[i]) - (b[i] - base[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_misaligned_sample_time() {
        let params = VerticalParams { sample_time: 0.03, ..Default::default() };
        assert!(matches!(params.validate(), Err(ParamError::SampleGrid { .. })));
    }
}
