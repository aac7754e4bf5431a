//! Planar stand-in for the SLIDER biped.
//!
//! Seven generalized coordinates: the floating base `(x, z, pitch)` and, per
//! leg, a hip angle and a prismatic slide length. The pelvis is a rigid body
//! with its centre of mass at the hip. Each leg is a point mass placed a fixed
//! fraction of the way down the slide; the foot is the point at its end.
//! Leg angles are measured from the downward vertical, positive towards +x.

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use super::WbcError;
use crate::gait::Side;

pub const N_DOF: usize = 7;
pub const FLOATING_DIM: usize = 3;
/// Force components per planar point contact, ordered `(f_x, f_z)`.
pub const PLANAR_CONTACT_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SliderParams {
    pub pelvis_mass: f64,
    /// Pitch inertia of the pelvis about its centre of mass.
    pub pelvis_inertia: f64,
    pub leg_mass: f64,
    /// Position of the leg mass along the slide, as a fraction of its length.
    pub leg_mass_ratio: f64,
    pub gravity: f64,
    /// Admissible slide lengths (exclusive).
    pub leg_range: [f64; 2],
}

impl Default for SliderParams {
    fn default() -> Self {
        Self {
            pelvis_mass: 13.7,
            pelvis_inertia: 0.25,
            leg_mass: 0.4,
            leg_mass_ratio: 0.5,
            gravity: 9.81,
            leg_range: [0.4, 1.0],
        }
    }
}

impl SliderParams {
    pub fn total_mass(&self) -> f64 {
        self.pelvis_mass + 2.0 * self.leg_mass
    }

    pub fn validate(&self) -> Result<(), WbcError> {
        let positive = [self.pelvis_mass, self.pelvis_inertia, self.leg_mass, self.leg_mass_ratio, self.gravity];
        if positive.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(WbcError::InvalidParameter("model masses, inertia, ratio and gravity must be positive".into()));
        }
        if !(self.leg_range[0] > 0.0 && self.leg_range[0] < self.leg_range[1]) {
            return Err(WbcError::InvalidParameter(format!("invalid leg range {:?}", self.leg_range)));
        }
        Ok(())
    }
}

/// Indices of a leg's hip angle and slide length in `q`.
pub fn leg_indices(leg: Side) -> (usize, usize) {
    match leg {
        Side::Left => (3, 4),
        Side::Right => (5, 6),
    }
}

/// Position, Jacobian and `J_dot q_dot` of a point on the robot.
#[derive(Debug, Clone, PartialEq)]
pub struct PointKinematics {
    pub position: Vector2<f64>,
    pub jacobian: DMatrix<f64>,
    pub jdot_qdot: Vector2<f64>,
}

fn leg_point(q: &DVector<f64>, q_dot: &DVector<f64>, leg: Side, fraction: f64) -> PointKinematics {
    let (ih, il) = leg_indices(leg);
    let alpha = q[2] + q[ih];
    let s = fraction * q[il];
    let u = Vector2::new(alpha.sin(), -alpha.cos());
    let du = Vector2::new(alpha.cos(), alpha.sin());

    let mut jacobian = DMatrix::zeros(2, N_DOF);
    jacobian[(0, 0)] = 1.0;
    jacobian[(1, 1)] = 1.0;
    for col in [2, ih] {
        jacobian[(0, col)] = s * du[0];
        jacobian[(1, col)] = s * du[1];
    }
    jacobian[(0, il)] = fraction * u[0];
    jacobian[(1, il)] = fraction * u[1];

    let alpha_dot = q_dot[2] + q_dot[ih];
    let s_dot = fraction * q_dot[il];
    PointKinematics {
        position: Vector2::new(q[0], q[1]) + u * s,
        jacobian,
        jdot_qdot: du * (2.0 * s_dot * alpha_dot) - u * (s * alpha_dot * alpha_dot),
    }
}

pub fn foot_kinematics(q: &DVector<f64>, q_dot: &DVector<f64>, leg: Side) -> PointKinematics {
    leg_point(q, q_dot, leg, 1.0)
}

/// Whole-body centre of mass.
pub fn com_kinematics(params: &SliderParams, q: &DVector<f64>, q_dot: &DVector<f64>) -> PointKinematics {
    let m = params.total_mass();
    let mut position = Vector2::new(q[0], q[1]) * params.pelvis_mass;
    let mut jacobian = DMatrix::zeros(2, N_DOF);
    jacobian[(0, 0)] = params.pelvis_mass;
    jacobian[(1, 1)] = params.pelvis_mass;
    let mut jdot_qdot = Vector2::zeros();
    for leg in [Side::Left, Side::Right] {
        let p = leg_point(q, q_dot, leg, params.leg_mass_ratio);
        position += p.position * params.leg_mass;
        jacobian += p.jacobian * params.leg_mass;
        jdot_qdot += p.jdot_qdot * params.leg_mass;
    }
    PointKinematics { position: position / m, jacobian: jacobian / m, jdot_qdot: jdot_qdot / m }
}

/// Rigid-body quantities at one configuration, split into the unactuated
/// floating rows `[0, floating_dim)` and the actuated rows after them.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidBodyModelState {
    pub q: DVector<f64>,
    pub q_dot: DVector<f64>,
    pub mass_matrix: DMatrix<f64>,
    /// Coriolis, centrifugal and gravity terms.
    pub bias: DVector<f64>,
    /// Stacked contact Jacobians, `contact_dim` rows per contact.
    pub contact_jacobian: DMatrix<f64>,
    pub contact_jdot_qdot: DVector<f64>,
    pub contact_dim: usize,
    pub floating_dim: usize,
}

impl RigidBodyModelState {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn n_contacts(&self) -> usize {
        self.contact_jacobian.nrows() / self.contact_dim
    }

    pub fn actuated_dim(&self) -> usize {
        self.n() - self.floating_dim
    }

    /// `S_a`: selects the actuated rows.
    pub fn selection(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.actuated_dim(), self.n());
        for i in 0..self.actuated_dim() {
            s[(i, self.floating_dim + i)] = 1.0;
        }
        s
    }

    pub fn validate(&self) -> Result<(), WbcError> {
        let n = self.n();
        let consistent = self.q_dot.len() == n
            && self.mass_matrix.shape() == (n, n)
            && self.bias.len() == n
            && self.contact_dim > 0
            && self.contact_jacobian.ncols() == n
            && self.contact_jacobian.nrows() % self.contact_dim == 0
            && self.contact_jdot_qdot.len() == self.contact_jacobian.nrows()
            && self.floating_dim <= n;
        if !consistent {
            return Err(WbcError::Dimension("model state dimensions are inconsistent".into()));
        }
        if (&self.mass_matrix - self.mass_matrix.transpose()).amax() > 1e-9 * self.mass_matrix.amax().max(1.0) {
            return Err(WbcError::NotPositiveDefinite);
        }
        if self.mass_matrix.clone().cholesky().is_none() {
            return Err(WbcError::NotPositiveDefinite);
        }
        Ok(())
    }
}

/// Builds the model state with point contacts at the feet in `contacts`.
pub fn planar_slider_model(
    params: &SliderParams,
    q: &DVector<f64>,
    q_dot: &DVector<f64>,
    contacts: &[Side],
) -> Result<RigidBodyModelState, WbcError> {
    params.validate()?;
    if q.len() != N_DOF || q_dot.len() != N_DOF {
        return Err(WbcError::Dimension(format!("expected {N_DOF} coordinates, got {} / {}", q.len(), q_dot.len())));
    }
    if q.iter().chain(q_dot.iter()).any(|v| !v.is_finite()) {
        return Err(WbcError::InvalidParameter("non-finite configuration".into()));
    }
    for leg in [Side::Left, Side::Right] {
        let length = q[leg_indices(leg).1];
        if !(length > params.leg_range[0] && length < params.leg_range[1]) {
            return Err(WbcError::LegLength { leg, length });
        }
    }

    let g = params.gravity;
    let mut mass_matrix = DMatrix::zeros(N_DOF, N_DOF);
    mass_matrix[(0, 0)] = params.pelvis_mass;
    mass_matrix[(1, 1)] = params.pelvis_mass;
    mass_matrix[(2, 2)] = params.pelvis_inertia;
    let mut bias = DVector::zeros(N_DOF);
    bias[1] = params.pelvis_mass * g;
    for leg in [Side::Left, Side::Right] {
        let p = leg_point(q, q_dot, leg, params.leg_mass_ratio);
        mass_matrix += p.jacobian.transpose() * &p.jacobian * params.leg_mass;
        let accel = p.jdot_qdot + Vector2::new(0.0, g);
        bias += p.jacobian.transpose() * accel * params.leg_mass;
    }

    let k = PLANAR_CONTACT_DIM;
    let mut contact_jacobian = DMatrix::zeros(k * contacts.len(), N_DOF);
    let mut contact_jdot_qdot = DVector::zeros(k * contacts.len());
    for (c, leg) in contacts.iter().enumerate() {
        let foot = foot_kinematics(q, q_dot, *leg);
        contact_jacobian.rows_mut(k * c, k).copy_from(&foot.jacobian);
        contact_jdot_qdot.rows_mut(k * c, k).copy_from(&foot.jdot_qdot);
    }

    Ok(RigidBodyModelState {
        q: q.clone(),
        q_dot: q_dot.clone(),
        mass_matrix,
        bias,
        contact_jacobian,
        contact_jdot_qdot,
        contact_dim: k,
        floating_dim: FLOATING_DIM,
    })
}

/// Kinetic plus gravitational potential energy.
pub fn energy(params: &SliderParams, q: &DVector<f64>, q_dot: &DVector<f64>) -> Result<f64, WbcError> {
    let model = planar_slider_model(params, q, q_dot, &[])?;
    let kinetic = 0.5 * q_dot.dot(&(&model.mass_matrix * q_dot));
    let com = com_kinematics(params, q, q_dot);
    Ok(kinetic + params.total_mass() * params.gravity * com.position[1])
}

/// `q_ddot` from `M q_ddot + H = S_a^T tau + J_c^T f`.
pub fn forward_dynamics(
    model: &RigidBodyModelState,
    torques: &DVector<f64>,
    forces: &DVector<f64>,
) -> Result<DVector<f64>, WbcError> {
    if torques.len() != model.actuated_dim() || forces.len() != model.contact_jacobian.nrows() {
        return Err(WbcError::Dimension("torque or force vector has the wrong length".into()));
    }
    let rhs = model.selection().transpose() * torques + model.contact_jacobian.transpose() * forces - &model.bias;
    let chol = model.mass_matrix.clone().cholesky().ok_or(WbcError::NotPositiveDefinite)?;
    Ok(chol.solve(&rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn standing() -> (DVector<f64>, DVector<f64>) {
        let q = DVector::from_vec(vec![0.0, 0.7, 0.0, 0.1, 0.7 / 0.1f64.cos(), -0.1, 0.7 / 0.1f64.cos()]);
        (q, DVector::zeros(N_DOF))
    }

    /// Kinetic energy summed directly over the bodies.
    fn kinetic(params: &SliderParams, q: &DVector<f64>, qd: &DVector<f64>) -> f64 {
        let mut t = 0.5 * params.pelvis_mass * (qd[0] * qd[0] + qd[1] * qd[1]) + 0.5 * params.pelvis_inertia * qd[2] * qd[2];
        for (ih, il) in [(3, 4), (5, 6)] {
            let a = q[2] + q[ih];
            let ad = qd[2] + qd[ih];
            let c = params.leg_mass_ratio;
            let vx = qd[0] + c * qd[il] * a.sin() + c * q[il] * ad * a.cos();
            let vz = qd[1] - c * qd[il] * a.cos() + c * q[il] * ad * a.sin();
            t += 0.5 * params.leg_mass * (vx * vx + vz * vz);
        }
        t
    }

    #[test]
    fn symmetric_stance_mass_matrix() {
        let params = SliderParams::default();
        let (q, qd) = standing();
        let m = planar_slider_model(&params, &q, &qd, &[]).unwrap().mass_matrix;
        assert!((&m - m.transpose()).amax() < 1e-12);
        assert!(m.clone().symmetric_eigenvalues().min() > 0.0);
        // Vertical coupling flips sign with the leg angle, horizontal does not.
        assert!((m[(1, 3)] + m[(1, 5)]).abs() < 1e-12 && m[(1, 3)].abs() > 1e-3);
        assert!((m[(0, 3)] - m[(0, 5)]).abs() < 1e-12);
        assert!((m[(0, 4)] + m[(0, 6)]).abs() < 1e-12);
    }

    #[test]
    fn mass_matrix_is_the_kinetic_energy_hessian() {
        let params = SliderParams::default();
        let q = DVector::from_vec(vec![0.1, 0.68, 0.2, 0.3, 0.65, -0.4, 0.8]);
        let m = planar_slider_model(&params, &q, &DVector::zeros(N_DOF), &[]).unwrap().mass_matrix;
        let h = 1e-3;
        let e = |i: usize| DVector::from_fn(N_DOF, |k, _| if k == i { h } else { 0.0 });
        for i in 0..N_DOF {
            for j in 0..N_DOF {
                let t = |v: DVector<f64>| kinetic(&params, &q, &v);
                let zero = DVector::zeros(N_DOF);
                let fd = (t(&zero + e(i) + e(j)) - t(&zero + e(i) - e(j)) - t(&zero - e(i) + e(j)) + t(&zero - e(i) - e(j)))
                    / (4.0 * h * h);
                assert!((fd - m[(i, j)]).abs() < 1e-6, "M[{i},{j}] = {} vs {fd}", m[(i, j)]);
            }
        }
    }

    #[test]
    fn foot_jacobian_matches_finite_differences() {
        let q = DVector::from_vec(vec![0.1, 0.68, 0.2, 0.3, 0.65, -0.4, 0.8]);
        let qd = DVector::from_vec(vec![0.3, -0.2, 0.5, -1.0, 0.4, 0.7, -0.3]);
        let h = 1e-6;
        for leg in [Side::Left, Side::Right] {
            let k = foot_kinematics(&q, &qd, leg);
            let ahead = foot_kinematics(&(&q + &qd * h), &qd, leg);
            let behind = foot_kinematics(&(&q - &qd * h), &qd, leg);
            let v = (ahead.position - behind.position) / (2.0 * h);
            let jv = &k.jacobian * &qd;
            let jd = (ahead.jacobian - behind.jacobian) / (2.0 * h) * &qd;
            for i in 0..2 {
                assert!((v[i] - jv[i]).abs() < 1e-8);
                assert!((jd[i] - k.jdot_qdot[i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn unforced_energy_is_conserved() {
        let params = SliderParams::default();
        let mut q = DVector::from_vec(vec![0.0, 1.0, 0.0, 0.2, 0.7, -0.3, 0.6]);
        let mut qd = DVector::from_vec(vec![0.2, 0.5, 0.3, -0.5, -0.05, 0.4, 0.05]);
        let e0 = energy(&params, &q, &qd).unwrap();
        let accel = |q: &DVector<f64>, qd: &DVector<f64>| {
            let model = planar_slider_model(&params, q, qd, &[]).unwrap();
            forward_dynamics(&model, &DVector::zeros(4), &DVector::zeros(0)).unwrap()
        };
        let dt = 1e-4;
        for _ in 0..10_000 {
            let (k1q, k1v) = (qd.clone(), accel(&q, &qd));
            let (k2q, k2v) = (&qd + &k1v * (dt / 2.0), accel(&(&q + &k1q * (dt / 2.0)), &(&qd + &k1v * (dt / 2.0))));
            let (k3q, k3v) = (&qd + &k2v * (dt / 2.0), accel(&(&q + &k2q * (dt / 2.0)), &(&qd + &k2v * (dt / 2.0))));
            let (k4q, k4v) = (&qd + &k3v * dt, accel(&(&q + &k3q * dt), &(&qd + &k3v * dt)));
            q += (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (dt / 6.0);
            qd += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0);
        }
        let e1 = energy(&params, &q, &qd).unwrap();
        assert!((e1 - e0).abs() <= 1e-6, "drift {}", e1 - e0);
    }

    #[test]
    fn rejects_bad_leg_lengths() {
        let params = SliderParams::default();
        let (mut q, qd) = standing();
        q[4] = 0.0;
        assert!(matches!(planar_slider_model(&params, &q, &qd, &[]), Err(WbcError::LegLength { leg: Side::Left, .. })));
        q[4] = 0.7;
        q[6] = 1.2;
        assert!(matches!(planar_slider_model(&params, &q, &qd, &[]), Err(WbcError::LegLength { leg: Side::Right, .. })));
    }
}
