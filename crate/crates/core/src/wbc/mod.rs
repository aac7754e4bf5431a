//! Whole-body QP controller over joint accelerations and contact forces.
//!
//! Decision vector `x = (q_ddot, f)`. The floating rows of the dynamics are
//! equality constraints, contact forces live in a friction pyramid and the
//! actuated rows give the torques, which are bounded. Stance feet are held by
//! a heavily weighted zero-acceleration task rather than a hard constraint.

pub mod model;

use nalgebra::{DMatrix, DVector, Matrix3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gait::Side;
use crate::qp::{QpError, QpProblem, QpSolver, QpStatus};
pub use model::{
    com_kinematics, energy, foot_kinematics, forward_dynamics, planar_slider_model, PointKinematics,
    RigidBodyModelState, SliderParams,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WbcError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{leg:?} leg length {length} is outside the model range")]
    LegLength { leg: Side, length: f64 },
    #[error("mass matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("whole-body QP ended with {0:?}")]
    NotSolved(QpStatus),
}

/// Weighted acceleration task `J q_ddot + Jdot q_dot -> command`.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub jacobian: DMatrix<f64>,
    pub jdot_qdot: DVector<f64>,
    pub command: DVector<f64>,
    /// Diagonal of the weight matrix.
    pub weight: DVector<f64>,
}

impl Task {
    pub fn new(jacobian: DMatrix<f64>, jdot_qdot: DVector<f64>, command: DVector<f64>, weight: f64) -> Self {
        let k = jacobian.nrows();
        Self { jacobian, jdot_qdot, command, weight: DVector::from_element(k, weight) }
    }

    fn validate(&self, n: usize) -> Result<(), WbcError> {
        let k = self.jacobian.nrows();
        if self.jacobian.ncols() != n || self.jdot_qdot.len() != k || self.command.len() != k || self.weight.len() != k {
            return Err(WbcError::Dimension(format!("task with {k} rows does not match {n} coordinates")));
        }
        let values = self.jacobian.iter().chain(self.jdot_qdot.iter()).chain(self.command.iter());
        if values.chain(self.weight.iter()).any(|v| !v.is_finite()) || self.weight.iter().any(|w| *w < 0.0) {
            return Err(WbcError::InvalidParameter("task entries must be finite with non-negative weights".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WbcProblem {
    pub model: RigidBodyModelState,
    pub tasks: Vec<Task>,
    pub mu: f64,
    pub torque_min: DVector<f64>,
    pub torque_max: DVector<f64>,
    /// Small weight on `|f|^2` that picks a unique force distribution.
    pub force_regularization: f64,
}

impl WbcProblem {
    pub fn validate(&self) -> Result<(), WbcError> {
        self.model.validate()?;
        let n = self.model.n();
        for task in &self.tasks {
            task.validate(n)?;
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(WbcError::InvalidParameter(format!("friction coefficient {} must be positive", self.mu)));
        }
        let na = self.model.actuated_dim();
        if self.torque_min.len() != na || self.torque_max.len() != na {
            return Err(WbcError::Dimension(format!("torque limits must have {na} entries")));
        }
        if self.torque_min.iter().zip(self.torque_max.iter()).any(|(lo, hi)| !(lo < hi)) {
            return Err(WbcError::InvalidParameter("torque limits must satisfy min < max".into()));
        }
        if !(self.force_regularization.is_finite() && self.force_regularization >= 0.0) {
            return Err(WbcError::InvalidParameter("force regularization must be non-negative".into()));
        }
        Ok(())
    }
}

/// Linear PD acceleration command.
pub fn linear_task_command(
    x_des: &DVector<f64>,
    x: &DVector<f64>,
    v_des: &DVector<f64>,
    v: &DVector<f64>,
    a_des: &DVector<f64>,
    kp: &DMatrix<f64>,
    kd: &DMatrix<f64>,
) -> DVector<f64> {
    a_des + kp * (x_des - x) + kd * (v_des - v)
}

/// Rotation vector of `r`, stable near zero and half-turn angles.
pub fn angle_axis(r: &Matrix3<f64>) -> Vector3<f64> {
    let quat = UnitQuaternion::from_matrix(r);
    let (w, v) = if quat.w < 0.0 { (-quat.w, -quat.imag()) } else { (quat.w, quat.imag()) };
    let s = v.norm();
    if s < 1e-12 {
        return v * 2.0;
    }
    v * (2.0 * s.atan2(w) / s)
}

/// Angular PD acceleration command from the orientation error `R_des R^T`.
pub fn angular_task_command(
    r_des: &Matrix3<f64>,
    r: &Matrix3<f64>,
    w_des: &Vector3<f64>,
    w: &Vector3<f64>,
    wdot_des: &Vector3<f64>,
    kp: &Matrix3<f64>,
    kd: &Matrix3<f64>,
) -> Vector3<f64> {
    wdot_des + kp * angle_axis(&(r_des * r.transpose())) + kd * (w_des - w)
}

/// Rows of `P` with `P f <= 0` for each contact. Planar forces are `(f_x, f_z)`,
/// spatial ones `(f_x, f_y, f_z)`.
pub fn friction_pyramid(mu: f64, n_contacts: usize, planar: bool) -> DMatrix<f64> {
    let (dim, rows) = if planar { (2, 3) } else { (3, 5) };
    let mut p = DMatrix::zeros(rows * n_contacts, dim * n_contacts);
    let slope = if planar { mu } else { mu / std::f64::consts::SQRT_2 };
    for c in 0..n_contacts {
        let (r, col) = (rows * c, dim * c);
        let z = col + dim - 1;
        p[(r, z)] = -1.0;
        for t in 0..dim - 1 {
            p[(r + 1 + 2 * t, col + t)] = 1.0;
            p[(r + 1 + 2 * t, z)] = -slope;
            p[(r + 2 + 2 * t, col + t)] = -1.0;
            p[(r + 2 + 2 * t, z)] = -slope;
        }
    }
    p
}

/// Builds the QP over `(q_ddot, f)`.
pub fn assemble_wbc_qp(problem: &WbcProblem) -> Result<QpProblem, WbcError> {
    problem.validate()?;
    let model = &problem.model;
    let n = model.n();
    let nf = model.contact_jacobian.nrows();
    let nv = n + nf;
    let fd = model.floating_dim;
    let na = model.actuated_dim();

    let mut hessian = DMatrix::zeros(nv, nv);
    let mut gradient = DVector::zeros(nv);
    for task in &problem.tasks {
        let wj = DMatrix::from_diagonal(&task.weight) * &task.jacobian;
        let mut block = hessian.view_mut((0, 0), (n, n));
        block += task.jacobian.transpose() * &wj;
        let mut g = gradient.rows_mut(0, n);
        g += wj.transpose() * (&task.jdot_qdot - &task.command);
    }
    for i in n..nv {
        hessian[(i, i)] += problem.force_regularization;
    }

    // Floating rows: M_f q_ddot - J_f^T f = -H_f.
    let jt = model.contact_jacobian.transpose();
    let mut eq = DMatrix::zeros(fd, nv);
    eq.view_mut((0, 0), (fd, n)).copy_from(&model.mass_matrix.rows(0, fd));
    eq.view_mut((0, n), (fd, nf)).copy_from(&(-jt.rows(0, fd)));
    let eq_rhs = -model.bias.rows(0, fd);

    // Pyramid rows, then actuated rows: tau = M_a q_ddot + H_a - J_a^T f.
    let planar = model.contact_dim == 2;
    let pyramid = friction_pyramid(problem.mu, model.n_contacts(), planar);
    let np = pyramid.nrows();
    let mut ineq = DMatrix::zeros(np + na, nv);
    ineq.view_mut((0, n), (np, nf)).copy_from(&pyramid);
    ineq.view_mut((np, 0), (na, n)).copy_from(&model.mass_matrix.rows(fd, na));
    ineq.view_mut((np, n), (na, nf)).copy_from(&(-jt.rows(fd, na)));
    let bias_a = model.bias.rows(fd, na);
    let mut lower = DVector::from_element(np + na, f64::NEG_INFINITY);
    let mut upper = DVector::zeros(np + na);
    lower.rows_mut(np, na).copy_from(&(&problem.torque_min - bias_a));
    upper.rows_mut(np, na).copy_from(&(&problem.torque_max - bias_a));

    Ok(QpProblem::new(hessian, gradient)?.with_equalities(eq, eq_rhs.into_owned())?.with_inequalities(ineq, lower, upper)?)
}

/// Actuated torques `S_a^-1 (M_a q_ddot + H_a - J_a^T f)`.
pub fn extract_torques(model: &RigidBodyModelState, q_ddot: &DVector<f64>, forces: &DVector<f64>) -> DVector<f64> {
    let fd = model.floating_dim;
    let na = model.actuated_dim();
    model.mass_matrix.rows(fd, na) * q_ddot + model.bias.rows(fd, na)
        - model.contact_jacobian.columns(fd, na).transpose() * forces
}

#[derive(Debug, Clone, PartialEq)]
pub struct WbcSolution {
    pub q_ddot: DVector<f64>,
    pub forces: DVector<f64>,
    pub torques: DVector<f64>,
    pub iterations: usize,
}

/// Solves `problem` and extracts the torques.
pub fn solve_wbc(solver: &mut QpSolver, problem: &WbcProblem) -> Result<WbcSolution, WbcError> {
    let qp = assemble_wbc_qp(problem)?;
    let sol = solver.solve(&qp, None)?;
    if sol.status != QpStatus::Optimal {
        return Err(WbcError::NotSolved(sol.status));
    }
    let n = problem.model.n();
    let q_ddot = sol.x.rows(0, n).into_owned();
    let forces = sol.x.rows(n, sol.x.len() - n).into_owned();
    let torques = extract_torques(&problem.model, &q_ddot, &forces);
    Ok(WbcSolution { q_ddot, forces, torques, iterations: sol.iterations })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WbcParams {
    pub mu: f64,
    /// Weight of the stance-foot zero-acceleration task.
    pub stance_weight: f64,
    pub com_weight: f64,
    pub pitch_weight: f64,
    pub linear_kp: f64,
    pub linear_kd: f64,
    pub angular_kp: f64,
    pub angular_kd: f64,
    pub hip_torque_limit: f64,
    pub slide_force_limit: f64,
    pub force_regularization: f64,
}

impl Default for WbcParams {
    fn default() -> Self {
        Self {
            mu: 0.7,
            stance_weight: 1e4,
            com_weight: 1.0,
            pitch_weight: 1.0,
            linear_kp: 100.0,
            linear_kd: 20.0,
            angular_kp: 50.0,
            angular_kd: 10.0,
            hip_torque_limit: 100.0,
            slide_force_limit: 500.0,
            force_regularization: 1e-12,
        }
    }
}

/// Balance problem on the planar model: hold the stance feet, track a CoM
/// target with PD feedback plus `com_accel_ff`, and keep the pelvis level.
pub fn standing_problem(
    wbc: &WbcParams,
    params: &SliderParams,
    q: &DVector<f64>,
    q_dot: &DVector<f64>,
    stance: &[Side],
    com_target: Vector2<f64>,
    com_accel_ff: Vector2<f64>,
) -> Result<WbcProblem, WbcError> {
    let model = planar_slider_model(params, q, q_dot, stance)?;
    let n = model.n();
    let mut tasks = Vec::new();
    for leg in stance {
        let foot = foot_kinematics(q, q_dot, *leg);
        let jdq = DVector::from_column_slice(foot.jdot_qdot.as_slice());
        tasks.push(Task::new(foot.jacobian, jdq, DVector::zeros(2), wbc.stance_weight));
    }

    let com = com_kinematics(params, q, q_dot);
    let com_vel = &com.jacobian * q_dot;
    let gains = |k: f64| DMatrix::from_diagonal_element(2, 2, k);
    let cmd = linear_task_command(
        &DVector::from_column_slice(com_target.as_slice()),
        &DVector::from_column_slice(com.position.as_slice()),
        &DVector::zeros(2),
        &com_vel,
        &DVector::from_column_slice(com_accel_ff.as_slice()),
        &gains(wbc.linear_kp),
        &gains(wbc.linear_kd),
    );
    let jdq = DVector::from_column_slice(com.jdot_qdot.as_slice());
    tasks.push(Task::new(com.jacobian, jdq, cmd, wbc.com_weight));

    // In the plane the orientation error reduces to the pitch difference.
    let mut pitch = DMatrix::zeros(1, n);
    pitch[(0, 2)] = 1.0;
    let pitch_cmd = DVector::from_element(1, -wbc.angular_kp * q[2] - wbc.angular_kd * q_dot[2]);
    tasks.push(Task::new(pitch, DVector::zeros(1), pitch_cmd, wbc.pitch_weight));

    let limits = DVector::from_vec(vec![wbc.hip_torque_limit, wbc.slide_force_limit, wbc.hip_torque_limit, wbc.slide_force_limit]);
    Ok(WbcProblem {
        model,
        tasks,
        mu: wbc.mu,
        torque_min: -&limits,
        torque_max: limits,
        force_regularization: wbc.force_regularization,
    })
}

/// Double-support pose with the pelvis at `height` and the feet on `z = 0`,
/// each leg splayed by `splay` radians.
pub fn standing_pose(height: f64, splay: f64) -> DVector<f64> {
    let l = height / splay.cos();
    DVector::from_vec(vec![0.0, height, 0.0, splay, l, -splay, l])
}
