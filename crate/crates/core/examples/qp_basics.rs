// The active-set QP solver on a small problem, then one footstep plan.

use aslip::gait::Side;
use aslip::horizontal::{periodic_exchange_state, plan_footsteps, HorizontalParams};
use aslip::qp::{kkt_residual, QpProblem, QpSolver};
use nalgebra::{DMatrix, DVector};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    // min 0.5 |x - (2, 1, -1)|^2  s.t.  x0 + x1 + x2 = 1,  0 <= x <= 1
    let problem = QpProblem::new(DMatrix::identity(3, 3), DVector::from_vec(vec![-2.0, -1.0, 1.0]))?
        .with_equalities(DMatrix::from_element(1, 3, 1.0), DVector::from_element(1, 1.0))?
        .with_inequalities(DMatrix::identity(3, 3), DVector::zeros(3), DVector::from_element(3, 1.0))?;
    let sol = QpSolver::new().solve(&problem, None)?;
    println!("x = {:.4?} ({:?}, {} iterations)", sol.x.as_slice(), sol.status, sol.iterations);
    println!("KKT residual {:.1e}", kkt_residual(&problem, &sol));

    let params = HorizontalParams::default();
    let (x, y) = periodic_exchange_state(&params, Side::Left);
    let (px, py) = plan_footsteps(x, y, (0.0, 0.0), Side::Left, 0.0, &params)?;
    println!("planned footsteps from the periodic gait:");
    for (sx, sy) in px.future_steps.iter().zip(&py.future_steps) {
        println!("  ({sx:.3}, {sy:+.3})");
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
