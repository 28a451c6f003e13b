//! The in-house interior-point solver on two textbook instances: a ball
//! projection (quadratic constraint) and a minimum-power cone program.
//!
//! ```bash
//! cargo run --release --example qcqp_solver
//! ```

use ris_optim::convex::{solve_qcqp, QcqpProblem};
use ris_optim::linalg::{RMat, RVec};

fn main() -> ris_optim::Result<()> {
    // minimize ||x - c||^2  s.t.  ||x|| <= r   ->   x* = r c / ||c||.
    let c = RVec::from_vec(vec![3.0, 4.0]);
    let r = 2.0;
    let mut proj = QcqpProblem::new_real(2);
    proj.set_objective_real(RMat::identity(2, 2) * 2.0, &c * 2.0, c.norm_squared())?;
    proj.add_quad_real(RMat::identity(2, 2) * 2.0, RVec::zeros(2), r * r)?;
    let sol = solve_qcqp(&proj, 1e-9, 400)?;
    println!("projection status {:?}", sol.status);
    println!("  x = {:?} (expected [1.2, 1.6])", sol.x_real().as_slice());
    println!("  kkt residual {:.2e}, multipliers {:?}", sol.kkt_residual, sol.multipliers);

    // minimize ||x||^2  s.t.  h^T x >= 1   ->   x* = h / ||h||^2.
    let h = RVec::from_vec(vec![1.0, 2.0, -1.0]);
    let mut cone = QcqpProblem::new_real(3);
    cone.set_objective_real(RMat::identity(3, 3) * 2.0, RVec::zeros(3), 0.0)?;
    cone.add_soc(RMat::zeros(0, 3), RVec::zeros(0), h.clone(), -1.0)?;
    let sol = solve_qcqp(&cone, 1e-9, 400)?;
    println!("min-norm status {:?}", sol.status);
    println!("  x = {:?}", sol.x_real().as_slice());
    println!("  expected {:?}", (&h / h.norm_squared()).as_slice());
    Ok(())
}
