//! Resonances of an exponentially flared bore.

use hornopt::integrate::Grid;
use hornopt::spectral::{eigen_solve, orthogonality_check, BoreProfile};

fn main() -> hornopt::Result<()> {
    let length = 0.772;
    let grid = Grid::new(1025, length)?;
    let d = grid
        .nodes()
        .iter()
        .map(|x| 0.012 * (2.5 * x).exp())
        .collect();
    let bore = BoreProfile::new(grid, d)?;

    let modes = eigen_solve(&bore, 6)?;
    let f1 = modes[0].frequency(340.0);
    println!(" n        k (1/m)     f (Hz)   f / f1  zeros");
    for (n, m) in modes.iter().enumerate() {
        let f = m.frequency(340.0);
        println!(
            "{:2} {:14.6} {:10.2} {:8.4} {:6}",
            n + 1,
            m.k,
            f,
            f / f1,
            m.interior_zeros()
        );
    }
    println!(
        "orthogonality defect {:.2e}",
        orthogonality_check(&modes, &bore)?
    );
    Ok(())
}
