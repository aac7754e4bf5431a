// Whole-body QP on the planar biped: standing balance, then a forward CoM
// acceleration large enough to saturate the friction pyramid.

use aslip::gait::Side;
use aslip::qp::QpSolver;
use aslip::wbc::{com_kinematics, solve_wbc, standing_pose, standing_problem, SliderParams, WbcParams};
use nalgebra::{DVector, Vector2};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let params = SliderParams::default();
    let q = standing_pose(0.7, 0.15);
    let q_dot = DVector::zeros(7);
    let com = com_kinematics(&params, &q, &q_dot);
    let mut solver = QpSolver::new();

    let wbc = WbcParams::default();
    let problem = standing_problem(&wbc, &params, &q, &q_dot, &[Side::Left, Side::Right], com.position, Vector2::zeros())?;
    let sol = solve_wbc(&mut solver, &problem)?;
    println!("standing: forces {:.3?} N, torques {:.3?}", sol.forces.as_slice(), sol.torques.as_slice());
    println!("  total normal force {:.6} N for a weight of {:.6} N", sol.forces[1] + sol.forces[3], params.total_mass() * params.gravity);

    // Point feet cannot resist the pitching moment, so let the pelvis rotate
    // and hold the CoM height firmly.
    let wbc = WbcParams { pitch_weight: 1e-6, ..Default::default() };
    for a in [2.0, 5.0, 10.0, 20.0] {
        let mut problem = standing_problem(&wbc, &params, &q, &q_dot, &[Side::Left, Side::Right], com.position, Vector2::new(a, 0.0))?;
        problem.tasks[2].weight[1] = 1e4;
        let sol = solve_wbc(&mut solver, &problem)?;
        let achieved = (&com.jacobian * &sol.q_ddot)[0] + com.jdot_qdot[0];
        println!("commanded {a:5.1} m/s^2 -> achieved {achieved:6.3} m/s^2 (friction limit {:.3})", wbc.mu * params.gravity);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
