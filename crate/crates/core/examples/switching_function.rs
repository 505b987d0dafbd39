//! Costate sweep and switching function along a fixed bore.
//!
//! Where the switching function is positive the maximum principle pushes
//! `D'` to its upper bound, where it is negative to the lower one.

use hornopt::integrate::integrate_costate;
use hornopt::model::switching_value;
use hornopt::optimize::{penalized_objective, terminal_costate, DecisionVector, Problem};
use hornopt::{ControlBounds, HarmonicSpec, PhysicalParams};

fn main() -> hornopt::Result<()> {
    let params = PhysicalParams::new(1.0, 340.0, 440.0, 0.772)?;
    let harmonics = HarmonicSpec::for_params(vec![1, 2], &params)?;
    let bounds = ControlBounds::new(-0.2, 0.2, 1e-3)?;
    let problem = Problem::new(params, harmonics, bounds, 0.02, 257, None)?;

    let m = problem.grid.len();
    let decision = DecisionVector {
        u: (0..m).map(|i| 0.05 * (i as f64 / 30.0).sin()).collect(),
        c: vec![0.6, 0.8],
        phi0: vec![1.0, 1.0],
    };
    let (report, traj) = penalized_objective(&decision, &problem)?;
    let costate = integrate_costate(
        &traj,
        &decision.u,
        &decision.coefficients(),
        &terminal_costate(traj.terminal(), problem.penalty_w),
        &problem.grid,
        &problem.harmonics,
        &problem.params,
    )?;
    println!(
        "E = {:.4e}  penalty = {:.4e}",
        report.energy, report.penalty
    );
    for i in (0..m).step_by(16) {
        let s = switching_value(&traj.samples[i], &costate.samples[i])?;
        let push = if s > 0.0 { "D2" } else { "D1" };
        println!(
            "x = {:.3}  D = {:.4}  s = {s:+.3e}  -> {push}",
            problem.grid.node(i),
            traj.samples[i].diameter()
        );
    }
    Ok(())
}
