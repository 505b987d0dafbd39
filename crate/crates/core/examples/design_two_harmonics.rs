//! Optimizes a bore for the first two harmonics of 440 Hz and prints the
//! bang and singular arcs of the resulting `D'`.

use hornopt::cli::ProblemConfig;
use hornopt::optimize::optimize;

fn main() -> hornopt::Result<()> {
    let cfg = ProblemConfig::preset("paper_n2")?;
    let problem = cfg.problem()?;
    let result = optimize(&problem, &cfg.opt_config())?;

    println!(
        "J = {:.4e} (E = {:.4e}), {} iterations, {:?}",
        result.report.penalized, result.report.energy, result.iterations, result.stop_reason
    );
    println!("residuals {:?}", result.report.terminal_residuals);
    println!("c = {:?}", result.decision.c);
    println!("validity {:.4}", result.validity);
    for s in result.restarts.iter() {
        println!("  restart {}: J = {:?}", s.index, s.objective);
    }
    for seg in result
        .arcs
        .segments
        .iter()
        .filter(|s| s.end - s.start > 0.01)
    {
        println!("  {:?} on [{:.3}, {:.3}]", seg.kind, seg.start, seg.end);
    }
    let (lo, hi) = (
        result.arcs.lower_bound_length,
        result.arcs.upper_bound_length,
    );
    println!(
        "on D1 for {lo:.3} m, on D2 for {hi:.3} m of {:.3} m",
        problem.grid.length()
    );
    Ok(())
}
