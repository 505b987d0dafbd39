//! Uniform grids, predictor-corrector sweeps and trapezoidal quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::{
    add_energy_forcing, adjoint_transport_into, webster_rhs_into, Coefficients, CostateVector,
    HarmonicSpec, PhysicalParams, StateVector,
};

/// Default node count; `2^9 + 1` keeps grid halving studies aligned.
pub const DEFAULT_NODES: usize = 513;

/// Uniform grid on `[0, L]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    m: usize,
    length: f64,
}

impl Grid {
    pub fn new(m: usize, length: f64) -> Result<Self> {
        if m < 3 {
            return Err(Error::invalid(
                "grid.m",
                format!("need at least 3 nodes, got {m}"),
            ));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::invalid(
                "physical.length",
                format!("must be positive, got {length}"),
            ));
        }
        Ok(Grid { m, length })
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn step(&self) -> f64 {
        self.length / (self.m - 1) as f64
    }

    /// Abscissa of node `i`; the last node is exactly `L`.
    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.m {
            self.length
        } else {
            i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.node(i)).collect()
    }

    /// Trapezoid weights: `h/2` at the ends, `h` inside.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.step();
        let mut w = vec![h; self.m];
        w[0] = 0.5 * h;
        w[self.m - 1] = 0.5 * h;
        w
    }
}

/// State samples at every grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: Grid,
    pub samples: Vec<StateVector>,
}

impl Trajectory {
    pub fn diameters(&self) -> Vec<f64> {
        self.samples.iter().map(StateVector::diameter).collect()
    }

    /// Values of `phi_n` along the grid.
    pub fn mode(&self, n: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.phi(n)).collect()
    }

    /// Values of `phi_n'` along the grid.
    pub fn mode_derivative(&self, n: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.dphi(n)).collect()
    }

    pub fn terminal(&self) -> &StateVector {
        self.samples
            .last()
            .expect("trajectory has at least 3 samples")
    }

    /// Smallest diameter along the trajectory together with its node index.
    pub fn min_diameter(&self) -> (usize, f64) {
        self.samples
            .iter()
            .map(StateVector::diameter)
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (i, d)| if d < acc.1 { (i, d) } else { acc },
            )
    }
}

/// Costate samples at every grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostateTrajectory {
    pub grid: Grid,
    pub samples: Vec<CostateVector>,
}

impl CostateTrajectory {
    pub fn initial(&self) -> &CostateVector {
        &self.samples[0]
    }
}

/// Forward sweep of the state system.
///
/// Each step predicts with explicit Euler and corrects with the trapezoidal
/// (Crank-Nicolson) average, the control being linear between nodes. Any node
/// whose diameter falls below `floor` aborts the sweep.
pub fn integrate_state(
    u_grid: &[f64],
    initial: &StateVector,
    grid: &Grid,
    harmonics: &HarmonicSpec,
    floor: f64,
) -> Result<Trajectory> {
    let m = grid.len();
    check_len("control grid", m, u_grid.len())?;
    check_len(
        "initial state",
        harmonics.state_dim(),
        initial.as_slice().len(),
    )?;
    if initial.diameter().is_nan() || initial.diameter() < floor {
        return Err(Error::InfeasibleTrajectory {
            node: 0,
            diameter: initial.diameter(),
            floor,
        });
    }
    let k = harmonics.wave_numbers();
    let dim = harmonics.state_dim();
    let h = grid.step();
    let infeasible = |node: usize, diameter: f64| Error::InfeasibleTrajectory {
        node,
        diameter,
        floor,
    };

    let mut samples = Vec::with_capacity(m);
    samples.push(initial.clone());
    let mut f0 = vec![0.0; dim];
    let mut f1 = vec![0.0; dim];
    let mut pred = vec![0.0; dim];
    for i in 0..m - 1 {
        let x = samples[i].as_slice();
        webster_rhs_into(x, u_grid[i], k, &mut f0).map_err(|_| infeasible(i, x[0]))?;
        for j in 0..dim {
            pred[j] = x[j] + h * f0[j];
        }
        webster_rhs_into(&pred, u_grid[i + 1], k, &mut f1)
            .map_err(|_| infeasible(i + 1, pred[0]))?;
        let next: Vec<f64> = (0..dim).map(|j| x[j] + 0.5 * h * (f0[j] + f1[j])).collect();
        if next[0].is_nan() || next[0] < floor {
            return Err(infeasible(i + 1, next[0]));
        }
        samples.push(StateVector::from_vec_unchecked(next));
    }
    Ok(Trajectory {
        grid: grid.clone(),
        samples,
    })
}

/// Backward sweep of the (linear) costate system from `terminal` at `x = L`.
///
/// Uses the same predictor-corrector stencil as [`integrate_state`], run with
/// step `-h`, evaluating state and control at the traversed nodes.
#[allow(clippy::too_many_arguments)]
pub fn integrate_costate(
    traj: &Trajectory,
    u_grid: &[f64],
    coeffs: &Coefficients,
    terminal: &CostateVector,
    grid: &Grid,
    harmonics: &HarmonicSpec,
    params: &PhysicalParams,
) -> Result<CostateTrajectory> {
    let m = grid.len();
    check_len("trajectory", m, traj.samples.len())?;
    check_len("control grid", m, u_grid.len())?;
    check_len("coefficients", harmonics.len(), coeffs.0.len())?;
    check_len(
        "terminal costate",
        harmonics.state_dim(),
        terminal.as_slice().len(),
    )?;
    let k = harmonics.wave_numbers();
    let dim = harmonics.state_dim();
    let h = grid.step();
    let pre = params.energy_prefactor();
    let c = coeffs.as_slice();

    let rhs = |mu: &[f64], i: usize, out: &mut [f64]| -> Result<()> {
        let x = traj.samples[i].as_slice();
        adjoint_transport_into(mu, x, u_grid[i], k, out).map_err(|_| {
            Error::InfeasibleTrajectory {
                node: i,
                diameter: x[0],
                floor: 0.0,
            }
        })?;
        add_energy_forcing(x, c, k, pre, 1.0, out);
        Ok(())
    };

    let mut rev = Vec::with_capacity(m);
    rev.push(terminal.clone());
    let mut g0 = vec![0.0; dim];
    let mut g1 = vec![0.0; dim];
    let mut pred = vec![0.0; dim];
    for i in (0..m - 1).rev() {
        let mu = rev.last().map(CostateVector::as_slice).unwrap_or_default();
        rhs(mu, i + 1, &mut g0)?;
        for j in 0..dim {
            pred[j] = mu[j] - h * g0[j];
        }
        rhs(&pred, i, &mut g1)?;
        let prev: Vec<f64> = (0..dim)
            .map(|j| mu[j] - 0.5 * h * (g0[j] + g1[j]))
            .collect();
        rev.push(CostateVector::from_vec_unchecked(prev));
    }
    rev.reverse();
    Ok(CostateTrajectory {
        grid: grid.clone(),
        samples: rev,
    })
}

/// Composite trapezoidal rule.
pub fn quadrature(values: &[f64], grid: &Grid) -> Result<f64> {
    check_len("quadrature values", grid.len(), values.len())?;
    let h = grid.step();
    Ok(values.windows(2).map(|w| h * (w[0] + w[1]) * 0.5).sum())
}

/// Composite Simpson rule; falls back to the trapezoidal rule on an even node count.
pub fn simpson(values: &[f64], grid: &Grid) -> Result<f64> {
    check_len("quadrature values", grid.len(), values.len())?;
    let m = values.len();
    if m.is_multiple_of(2) {
        return quadrature(values, grid);
    }
    let h = grid.step();
    let mut acc = values[0] + values[m - 1];
    for (i, v) in values.iter().enumerate().take(m - 1).skip(1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    Ok(acc * h / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn grid_endpoints_and_spacing() {
        let g = Grid::new(513, 0.772).unwrap();
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(512), 0.772);
        let nodes = g.nodes();
        for w in nodes.windows(2) {
            assert_relative_eq!(w[1] - w[0], g.step(), max_relative = 1e-12);
        }
        assert!(Grid::new(2, 1.0).is_err());
        assert!(Grid::new(10, 0.0).is_err());
    }

    #[test]
    fn quadrature_exact_cases() {
        let g = Grid::new(17, 0.772).unwrap();
        assert_relative_eq!(
            quadrature(&[1.0; 17], &g).unwrap(),
            0.772,
            max_relative = 1e-15
        );
        let g1 = Grid::new(11, 1.0).unwrap();
        let xs = g1.nodes();
        assert_relative_eq!(quadrature(&xs, &g1).unwrap(), 0.5, max_relative = 1e-15);
    }

    #[test]
    fn quadrature_sine() {
        let g = Grid::new(1001, PI).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|x| x.sin()).collect();
        assert!((quadrature(&v, &g).unwrap() - 2.0).abs() < 2e-6);
    }

    #[test]
    fn quadrature_rejects_mismatch() {
        let g = Grid::new(5, 1.0).unwrap();
        assert!(matches!(
            quadrature(&[1.0; 4], &g),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn cylinder_mode_is_cosine() {
        let length = 0.772;
        let g = Grid::new(513, length).unwrap();
        let k1 = PI / (2.0 * length);
        let h = HarmonicSpec::new(vec![1], k1).unwrap();
        let u = vec![0.0; 513];
        let traj =
            integrate_state(&u, &StateVector::closed_end(1.0, &[1.0]), &g, &h, 1e-3).unwrap();
        let max_err = traj
            .samples
            .iter()
            .zip(g.nodes())
            .map(|(s, x)| (s.phi(0) - (k1 * x).cos()).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-4, "max error {max_err}");
        assert!(traj.terminal().phi(0).abs() < 1e-4);
    }

    #[test]
    fn diameter_is_linear_for_constant_control() {
        let g = Grid::new(65, 1.0).unwrap();
        let h = HarmonicSpec::new(vec![1, 3], 2.0).unwrap();
        let u = vec![0.125; 65];
        let traj =
            integrate_state(&u, &StateVector::closed_end(0.5, &[1.0, 0.5]), &g, &h, 1e-3).unwrap();
        for (s, x) in traj.samples.iter().zip(g.nodes()) {
            assert_relative_eq!(s.diameter(), 0.5 + 0.125 * x, max_relative = 1e-14);
        }
    }

    #[test]
    fn floor_violation_reports_node() {
        let g = Grid::new(101, 1.0).unwrap();
        let h = HarmonicSpec::new(vec![1], 1.0).unwrap();
        let u = vec![-0.2; 101];
        // D = 0.1 - 0.2 x drops below 0.0505 first at x = 0.25, node 25
        let err =
            integrate_state(&u, &StateVector::closed_end(0.1, &[1.0]), &g, &h, 0.0505).unwrap_err();
        match err {
            Error::InfeasibleTrajectory { node, .. } => assert_eq!(node, 25),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn costate_zero_is_fixed_point() {
        let g = Grid::new(33, 0.5).unwrap();
        let hs = HarmonicSpec::new(vec![1, 2], 3.0).unwrap();
        let p = PhysicalParams::new(1.0, 340.0, 440.0, 0.5).unwrap();
        let u: Vec<f64> = (0..33).map(|i| 0.1 * ((i as f64) * 0.3).sin()).collect();
        let traj = integrate_state(
            &u,
            &StateVector::closed_end(0.2, &[0.4, 0.9]),
            &g,
            &hs,
            1e-3,
        )
        .unwrap();
        let co = integrate_costate(
            &traj,
            &u,
            &Coefficients::zeros(2),
            &CostateVector::zeros(2),
            &g,
            &hs,
            &p,
        )
        .unwrap();
        assert!(co
            .samples
            .iter()
            .all(|s| s.as_slice().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn sweeps_reject_mismatched_lengths() {
        let g = Grid::new(9, 1.0).unwrap();
        let hs = HarmonicSpec::new(vec![1], 1.0).unwrap();
        let init = StateVector::closed_end(1.0, &[1.0]);
        assert!(matches!(
            integrate_state(&[0.0; 8], &init, &g, &hs, 1e-3),
            Err(Error::LengthMismatch { .. })
        ));
        let bad_init = StateVector::closed_end(1.0, &[1.0, 2.0]);
        assert!(integrate_state(&[0.0; 9], &bad_init, &g, &hs, 1e-3).is_err());
    }
}
