//! Forward sweep through a straight tube, checked against `cos(k x)`.

use hornopt::integrate::{integrate_state, Grid};
use hornopt::{HarmonicSpec, PhysicalParams, StateVector};

fn main() -> hornopt::Result<()> {
    let params = PhysicalParams::new(1.0, 340.0, 440.0, 0.772)?;
    let harmonics = HarmonicSpec::for_params(vec![1, 2, 3], &params)?;

    for m in [65, 129, 257, 513, 1025] {
        let grid = Grid::new(m, params.length)?;
        let start = StateVector::closed_end(0.02, &[1.0, 1.0, 1.0]);
        let traj = integrate_state(&vec![0.0; m], &start, &grid, &harmonics, 1e-3)?;

        let mut err = 0.0_f64;
        for (n, &k) in harmonics.wave_numbers().iter().enumerate() {
            for (i, phi) in traj.mode(n).iter().enumerate() {
                err = err.max((phi - (k * grid.node(i)).cos()).abs());
            }
        }
        println!("m = {m:5}  h = {:.3e}  max error {err:.3e}", grid.step());
    }
    Ok(())
}
