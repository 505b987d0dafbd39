//! Adjoint gradient against central differences of the objective.

use hornopt::optimize::{objective_gradient, penalized_objective, DecisionVector, Problem};
use hornopt::{ControlBounds, HarmonicSpec, PhysicalParams};

fn main() -> hornopt::Result<()> {
    let params = PhysicalParams::new(1.0, 340.0, 440.0, 0.772)?;
    let harmonics = HarmonicSpec::for_params(vec![1, 2], &params)?;
    let bounds = ControlBounds::new(-0.2, 0.2, 1e-3)?;
    let problem = Problem::new(params, harmonics, bounds, 0.02, 201, None)?;

    let m = problem.grid.len();
    let d = DecisionVector {
        u: (0..m).map(|i| 0.08 * (i as f64 / 25.0).cos()).collect(),
        c: vec![0.8, 0.6],
        phi0: vec![0.7, 0.4],
    };
    let (report, grad) = objective_gradient(&d, &problem)?;
    println!(
        "J = {:.6e}, |grad| = {:.3e}",
        report.penalized,
        report.gradient_norm.unwrap()
    );

    let flat = d.to_flat();
    let j = |x: &[f64]| -> hornopt::Result<f64> {
        let dv = DecisionVector::from_flat(x, m, 2)?;
        Ok(penalized_objective(&dv, &problem)?.0.penalized)
    };
    let h = 1e-6;
    let g = grad.to_flat();
    for i in [0, m / 3, m / 2, m - 1, m, m + 1, m + 2, m + 3] {
        let (mut p, mut q) = (flat.clone(), flat.clone());
        p[i] += h;
        q[i] -= h;
        let fd = (j(&p)? - j(&q)?) / (2.0 * h);
        println!(
            "component {i:3}: adjoint {:+.8e}  differences {fd:+.8e}",
            g[i]
        );
    }
    Ok(())
}
