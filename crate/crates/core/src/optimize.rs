//! The penalized design problem and its projected quasi-Newton solver.
//!
//! The decision is the nodal control `u = D'`, the modal weights `c` and the
//! free closed-end modal values `phi_n(0)`. The objective is the modal energy
//! minus a quadratic penalty on `phi_n(L)`, the open-end condition. Gradients
//! come from one forward sweep and one backward adjoint sweep.

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::integrate::{integrate_costate, integrate_state, quadrature, Grid, Trajectory};
use crate::model::{
    add_energy_forcing, adjoint_transport_into, dphi_index, energy_density, phi_index,
    switching_kernel, switching_value, validity_functional, webster_rhs_into, Coefficients,
    ControlBounds, CostateVector, HarmonicSpec, PhysicalParams, StateVector,
    VALIDITY_WARN_THRESHOLD,
};

/// Bound on `|phi_n(0)|`. The energy is quadratic in each closed-end value, so
/// without a bound the objective is unbounded whenever a mode nearly meets its
/// open-end condition.
pub const MODAL_AMPLITUDE_BOUND: f64 = 1.0;

/// Lower bound on `phi_n(0)`. Every term of the objective depends on
/// `phi_n(0)^2`, so the sign carries no information, and at `phi_n(0) = 0`
/// the mode drops out of the control gradient entirely.
pub const MODAL_AMPLITUDE_MIN: f64 = 0.1;

/// Armijo constant of the backtracking line search.
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 50;
/// Consecutive accepted steps with `|dJ|` below tolerance before stopping.
const STALL_PATIENCE: usize = 5;
/// Relative distance to a bound below which a node counts as on it.
const BOUND_TOLERANCE: f64 = 1e-12;

/// Everything the objective needs besides the decision itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub params: PhysicalParams,
    pub harmonics: HarmonicSpec,
    pub bounds: ControlBounds,
    /// Diameter at the closed end (m).
    pub d0: f64,
    pub grid: Grid,
    /// Weight of the open-end penalty.
    pub penalty_w: f64,
}

impl Problem {
    pub fn new(
        params: PhysicalParams,
        harmonics: HarmonicSpec,
        bounds: ControlBounds,
        d0: f64,
        grid_m: usize,
        penalty_w: Option<f64>,
    ) -> Result<Self> {
        params.validate()?;
        bounds.validate()?;
        if !(d0.is_finite() && d0 >= bounds.floor) {
            return Err(Error::invalid(
                "boundary.d0",
                format!(
                    "must be at least the diameter floor {}, got {d0}",
                    bounds.floor
                ),
            ));
        }
        let grid = Grid::new(grid_m, params.length)?;
        let penalty_w =
            penalty_w.unwrap_or_else(|| default_penalty_weight(&params, &harmonics, d0));
        if !(penalty_w.is_finite() && penalty_w >= 0.0) {
            return Err(Error::invalid(
                "optimize.penalty_w",
                format!("must be non-negative, got {penalty_w}"),
            ));
        }
        Ok(Problem {
            params,
            harmonics,
            bounds,
            d0,
            grid,
            penalty_w,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.harmonics.len()
    }

    pub fn initial_state(&self, decision: &DecisionVector) -> StateVector {
        StateVector::closed_end(self.d0, &decision.phi0)
    }

    fn check_decision(&self, decision: &DecisionVector) -> Result<()> {
        check_len("decision.u", self.grid.len(), decision.u.len())?;
        check_len("decision.c", self.n_modes(), decision.c.len())?;
        check_len("decision.phi0", self.n_modes(), decision.phi0.len())
    }
}

/// `1e3 * (pi rho0 / 8) * D0^2 * k_max^2 * L`: the energy scale of a cylinder
/// of diameter `D0` carrying the highest harmonic, times a thousand.
pub fn default_penalty_weight(params: &PhysicalParams, harmonics: &HarmonicSpec, d0: f64) -> f64 {
    let k = harmonics.k_max();
    1e3 * params.energy_prefactor() * d0 * d0 * k * k * params.length
}

/// The full unknown of the design problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionVector {
    /// Nodal diameter derivative.
    pub u: Vec<f64>,
    /// Modal weights.
    pub c: Vec<f64>,
    /// Closed-end modal values `phi_n(0)`.
    pub phi0: Vec<f64>,
}

impl DecisionVector {
    pub fn zeros(m: usize, n: usize) -> Self {
        DecisionVector {
            u: vec![0.0; m],
            c: vec![0.0; n],
            phi0: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.u.len() + self.c.len() + self.phi0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coefficients(&self) -> Coefficients {
        Coefficients(self.c.clone())
    }

    /// Concatenation `[u, c, phi0]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.u);
        v.extend_from_slice(&self.c);
        v.extend_from_slice(&self.phi0);
        v
    }

    pub fn from_flat(flat: &[f64], m: usize, n: usize) -> Result<Self> {
        check_len("flat decision", m + 2 * n, flat.len())?;
        Ok(DecisionVector {
            u: flat[..m].to_vec(),
            c: flat[m..m + n].to_vec(),
            phi0: flat[m + n..].to_vec(),
        })
    }
}

/// Decomposition of the penalized objective at one decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveReport {
    /// Modal energy `E` (J).
    pub energy: f64,
    /// `w * sum_n phi_n(L)^2`.
    pub penalty: f64,
    /// `E - penalty`.
    pub penalized: f64,
    /// `phi_n(L)` for each mode.
    pub terminal_residuals: Vec<f64>,
    /// Euclidean norm of the full gradient; only set when a gradient was computed.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gradient_norm: Option<f64>,
}

/// Objective report for an already integrated trajectory.
pub fn report_for_trajectory(
    traj: &Trajectory,
    coeffs: &Coefficients,
    problem: &Problem,
) -> Result<ObjectiveReport> {
    check_len("trajectory", problem.grid.len(), traj.samples.len())?;
    check_len("coefficients", problem.n_modes(), coeffs.0.len())?;
    let k = problem.harmonics.wave_numbers();
    let pre = problem.params.energy_prefactor();
    let density: Vec<f64> = traj
        .samples
        .iter()
        .map(|s| energy_density(s.as_slice(), coeffs.as_slice(), k, pre))
        .collect();
    let energy = quadrature(&density, &problem.grid)?;
    let terminal = traj.terminal();
    let terminal_residuals: Vec<f64> = (0..problem.n_modes()).map(|n| terminal.phi(n)).collect();
    let penalty = problem.penalty_w * terminal_residuals.iter().map(|r| r * r).sum::<f64>();
    Ok(ObjectiveReport {
        energy,
        penalty,
        penalized: energy - penalty,
        terminal_residuals,
        gradient_norm: None,
    })
}

/// Integrates the state for `decision` and evaluates the penalized objective.
pub fn penalized_objective(
    decision: &DecisionVector,
    problem: &Problem,
) -> Result<(ObjectiveReport, Trajectory)> {
    problem.check_decision(decision)?;
    let traj = integrate_state(
        &decision.u,
        &problem.initial_state(decision),
        &problem.grid,
        &problem.harmonics,
        problem.bounds.floor,
    )?;
    let report = report_for_trajectory(&traj, &decision.coefficients(), problem)?;
    Ok((report, traj))
}

/// Terminal costate of the penalized problem: zero except `mu_2n(L) = -2 w phi_n(L)`.
pub fn terminal_costate(terminal: &StateVector, penalty_w: f64) -> CostateVector {
    let mut mu = CostateVector::zeros(terminal.n_modes());
    for n in 0..terminal.n_modes() {
        mu.as_mut_slice()[phi_index(n)] = -2.0 * penalty_w * terminal.phi(n);
    }
    mu
}

/// Objective and its exact gradient with respect to every decision component.
///
/// The backward sweep is the adjoint of the discrete predictor-corrector
/// recursion, started from the penalized transversality condition. Its node
/// values converge to the continuous costate, and the control gradient at
/// node `i` converges to the trapezoid weight times the switching function.
pub fn objective_gradient(
    decision: &DecisionVector,
    problem: &Problem,
) -> Result<(ObjectiveReport, DecisionVector)> {
    let (mut report, traj) = penalized_objective(decision, problem)?;
    let grad = adjoint_gradient(decision, &traj, problem)?;
    let norm = grad.to_flat().iter().map(|g| g * g).sum::<f64>().sqrt();
    report.gradient_norm = Some(norm);
    Ok((report, grad))
}

fn adjoint_gradient(
    decision: &DecisionVector,
    traj: &Trajectory,
    problem: &Problem,
) -> Result<DecisionVector> {
    let grid = &problem.grid;
    let m = grid.len();
    let n_modes = problem.n_modes();
    let k = problem.harmonics.wave_numbers();
    let dim = problem.harmonics.state_dim();
    let pre = problem.params.energy_prefactor();
    let h = grid.step();
    let weights = grid.trapezoid_weights();
    let c = decision.c.as_slice();
    let u = decision.u.as_slice();

    let mut grad = DecisionVector::zeros(m, n_modes);

    // Adjoint of the last node: running cost plus the penalty term.
    let last = traj.samples[m - 1].as_slice();
    let mut lam = vec![0.0; dim];
    add_energy_forcing(last, c, k, pre, -weights[m - 1], &mut lam);
    for n in 0..n_modes {
        lam[phi_index(n)] -= 2.0 * problem.penalty_w * last[phi_index(n)];
    }

    let mut f0 = vec![0.0; dim];
    let mut pred = vec![0.0; dim];
    let mut lam_pred = vec![0.0; dim];
    let mut mix = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];
    for i in (0..m - 1).rev() {
        let x = traj.samples[i].as_slice();
        webster_rhs_into(x, u[i], k, &mut f0)?;
        for j in 0..dim {
            pred[j] = x[j] + h * f0[j];
        }
        // corrector stage: X_{i+1} depends on the predictor through (h/2) f(pred, u_{i+1})
        adjoint_transport_into(&lam, &pred, u[i + 1], k, &mut tmp)?;
        for j in 0..dim {
            lam_pred[j] = -0.5 * h * tmp[j];
        }
        grad.u[i + 1] += 0.5 * h * switching_kernel(&pred, &lam, n_modes)?;

        // X_i enters through (h/2) f(X_i, u_i) directly and through the predictor
        for j in 0..dim {
            mix[j] = 0.5 * h * lam[j] + h * lam_pred[j];
        }
        grad.u[i] += switching_kernel(x, &mix, n_modes)?;
        adjoint_transport_into(&mix, x, u[i], k, &mut tmp)?;
        for j in 0..dim {
            lam[j] += lam_pred[j] - tmp[j];
        }
        add_energy_forcing(x, c, k, pre, -weights[i], &mut lam);
    }
    for n in 0..n_modes {
        grad.phi0[n] = lam[phi_index(n)];
    }

    let half = 2.0 * pre;
    for (s, w) in traj.samples.iter().zip(&weights) {
        let x = s.as_slice();
        for n in 0..n_modes {
            let p = x[phi_index(n)];
            let dp = x[dphi_index(n)];
            grad.c[n] += w * half * c[n] * x[0] * x[0] * (dp * dp + k[n] * k[n] * p * p);
        }
    }
    Ok(grad)
}

/// Projection onto the feasible set: `u` clipped to the bounds, `c` scaled to
/// unit norm (zero replaced by the uniform unit vector), `|phi0|` clipped to
/// `[MODAL_AMPLITUDE_MIN, MODAL_AMPLITUDE_BOUND]`.
pub fn project(decision: &DecisionVector, bounds: &ControlBounds) -> DecisionVector {
    let u = decision.u.iter().map(|&v| bounds.clamp(v)).collect();
    let norm = decision.c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let c = if norm > 0.0 && norm.is_finite() {
        decision.c.iter().map(|v| v / norm).collect()
    } else {
        let n = decision.c.len().max(1) as f64;
        vec![1.0 / n.sqrt(); decision.c.len()]
    };
    let phi0 = decision
        .phi0
        .iter()
        .map(|v| v.abs().clamp(MODAL_AMPLITUDE_MIN, MODAL_AMPLITUDE_BOUND))
        .collect();
    DecisionVector { u, c, phi0 }
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            max_iters: 5000,
            tol: 1e-5,
            restarts: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// `|dJ| < tol * max(1, |J|)` on the last few accepted steps.
    ObjectiveStalled,
    /// The projected gradient measure fell below `tol`.
    ProjectedGradient,
    MaxIterations,
    /// No ascent step could be found even along the preconditioned gradient.
    LineSearchFailed,
}

impl StopReason {
    pub fn converged(self) -> bool {
        matches!(
            self,
            StopReason::ObjectiveStalled | StopReason::ProjectedGradient
        )
    }
}

/// Outcome of one randomly initialized run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub index: usize,
    pub objective: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Length over which this restart's control sits on the lower bound.
    pub lower_bound_length: f64,
    pub upper_bound_length: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArcKind {
    LowerBound,
    UpperBound,
    Singular,
    Interior,
}

/// A maximal run of nodes sharing one [`ArcKind`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcSegment {
    pub kind: ArcKind,
    pub start: f64,
    pub end: f64,
}

/// Bang / singular classification of the optimized control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcReport {
    pub switching: Vec<f64>,
    pub kinds: Vec<ArcKind>,
    pub segments: Vec<ArcSegment>,
    /// Total length of grid intervals whose two end nodes sit on the same bound.
    pub bound_length: f64,
    pub lower_bound_length: f64,
    pub upper_bound_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub decision: DecisionVector,
    pub trajectory: Trajectory,
    pub report: ObjectiveReport,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// Plane-wave validity measure of the returned control.
    pub validity: f64,
    pub seed: u64,
    /// Index of the winning restart.
    pub restart: usize,
    /// Accepted objective values, starting with the initial guess.
    pub history: Vec<f64>,
    pub projected_gradient: f64,
    pub restarts: Vec<RestartSummary>,
    pub arcs: ArcReport,
}

/// Length of grid intervals with both end nodes at `level` (within `tol`).
pub fn length_at_level(u: &[f64], level: f64, grid: &Grid, tol: f64) -> f64 {
    let h = grid.step();
    u.windows(2)
        .filter(|w| (w[0] - level).abs() <= tol && (w[1] - level).abs() <= tol)
        .count() as f64
        * h
}

/// Classifies every node of `decision.u` as bang or singular using the
/// switching function from the backward costate sweep.
pub fn classify_arcs(
    decision: &DecisionVector,
    traj: &Trajectory,
    problem: &Problem,
) -> Result<ArcReport> {
    let terminal = terminal_costate(traj.terminal(), problem.penalty_w);
    let costate = integrate_costate(
        traj,
        &decision.u,
        &decision.coefficients(),
        &terminal,
        &problem.grid,
        &problem.harmonics,
        &problem.params,
    )?;
    let switching = traj
        .samples
        .iter()
        .zip(&costate.samples)
        .map(|(s, mu)| switching_value(s, mu))
        .collect::<Result<Vec<f64>>>()?;
    let scale = switching.iter().fold(0.0_f64, |a, s| a.max(s.abs()));
    let b = &problem.bounds;
    let at_tol = BOUND_TOLERANCE * (b.d_hi - b.d_lo);
    let kinds: Vec<ArcKind> = decision
        .u
        .iter()
        .zip(&switching)
        .map(|(&u, &s)| {
            if u <= b.d_lo + at_tol {
                ArcKind::LowerBound
            } else if u >= b.d_hi - at_tol {
                ArcKind::UpperBound
            } else if s.abs() < 1e-6 * scale {
                ArcKind::Singular
            } else {
                ArcKind::Interior
            }
        })
        .collect();
    let mut segments: Vec<ArcSegment> = Vec::new();
    for (i, &kind) in kinds.iter().enumerate() {
        let x = problem.grid.node(i);
        match segments.last_mut() {
            Some(seg) if seg.kind == kind => seg.end = x,
            _ => segments.push(ArcSegment {
                kind,
                start: x,
                end: x,
            }),
        }
    }
    let lower = length_at_level(&decision.u, b.d_lo, &problem.grid, at_tol);
    let upper = length_at_level(&decision.u, b.d_hi, &problem.grid, at_tol);
    Ok(ArcReport {
        switching,
        kinds,
        segments,
        bound_length: lower + upper,
        lower_bound_length: lower,
        upper_bound_length: upper,
    })
}

/// Random initial guess: every component uniform on `[0, 1]`, then projected.
pub fn initial_guess(problem: &Problem, rng: &mut impl Rng) -> DecisionVector {
    let m = problem.grid.len();
    let n = problem.n_modes();
    let raw = DecisionVector {
        u: (0..m).map(|_| rng.gen::<f64>()).collect(),
        c: (0..n).map(|_| rng.gen::<f64>()).collect(),
        phi0: (0..n).map(|_| rng.gen::<f64>()).collect(),
    };
    project(&raw, &problem.bounds)
}

/// Runs the projected BFGS ascent from `restarts` random starts and returns
/// the best feasible design.
pub fn optimize(problem: &Problem, config: &OptConfig) -> Result<DesignResult> {
    if !(config.tol.is_finite() && config.tol > 0.0) {
        return Err(Error::invalid("optimize.tol", "must be positive"));
    }
    if config.restarts == 0 {
        return Err(Error::invalid(
            "optimize.restarts",
            "need at least one restart",
        ));
    }
    let runs: Vec<Result<RunOutcome>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(r as u64);
            let start = initial_guess(problem, &mut rng);
            ascend(problem, config, start)
        })
        .collect();

    let mut summaries = Vec::with_capacity(runs.len());
    let mut best: Option<(usize, RunOutcome)> = None;
    for (index, run) in runs.into_iter().enumerate() {
        match run {
            Ok(outcome) => {
                let b = &problem.bounds;
                let at_tol = BOUND_TOLERANCE * (b.d_hi - b.d_lo);
                let u = &outcome.decision.u;
                summaries.push(RestartSummary {
                    index,
                    objective: Some(outcome.report.penalized),
                    iterations: outcome.iterations,
                    converged: outcome.stop.converged(),
                    lower_bound_length: length_at_level(u, b.d_lo, &problem.grid, at_tol),
                    upper_bound_length: length_at_level(u, b.d_hi, &problem.grid, at_tol),
                    error: None,
                });
                let better = match &best {
                    None => true,
                    Some((_, b)) => outcome.report.penalized > b.report.penalized,
                };
                if better {
                    best = Some((index, outcome));
                }
            }
            Err(e) => {
                warn!("restart {index} failed: {e}");
                summaries.push(RestartSummary {
                    index,
                    objective: None,
                    iterations: 0,
                    converged: false,
                    lower_bound_length: 0.0,
                    upper_bound_length: 0.0,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let (restart, outcome) = best.ok_or(Error::AllRestartsInfeasible {
        restarts: config.restarts,
    })?;

    let objectives: Vec<f64> = summaries.iter().filter_map(|s| s.objective).collect();
    if objectives.len() > 1 {
        let lo = objectives.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = objectives.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        info!("restart objectives span [{lo:.6e}, {hi:.6e}]");
    }

    let validity = validity_functional(
        &outcome.decision.u,
        problem.harmonics.k_max(),
        &problem.grid,
    )?;
    if validity > VALIDITY_WARN_THRESHOLD {
        warn!("plane-wave validity measure {validity:.4} exceeds {VALIDITY_WARN_THRESHOLD}");
    }
    let arcs = classify_arcs(&outcome.decision, &outcome.trajectory, problem)?;
    Ok(DesignResult {
        decision: outcome.decision,
        trajectory: outcome.trajectory,
        report: outcome.report,
        iterations: outcome.iterations,
        converged: outcome.stop.converged(),
        stop_reason: outcome.stop,
        validity,
        seed: config.seed,
        restart,
        history: outcome.history,
        projected_gradient: outcome.projected_gradient,
        restarts: summaries,
        arcs,
    })
}

struct RunOutcome {
    decision: DecisionVector,
    trajectory: Trajectory,
    report: ObjectiveReport,
    iterations: usize,
    stop: StopReason,
    history: Vec<f64>,
    projected_gradient: f64,
}

/// Flat-vector view of the problem used by the quasi-Newton loop.
struct Layout<'a> {
    problem: &'a Problem,
    m: usize,
    n: usize,
    /// Diagonal preconditioner: `L / w_i` on the control so that the scaled
    /// control gradient approximates the switching function; one elsewhere.
    metric: Vec<f64>,
}

impl<'a> Layout<'a> {
    fn new(problem: &'a Problem) -> Self {
        let m = problem.grid.len();
        let n = problem.n_modes();
        let length = problem.grid.length();
        let mut metric: Vec<f64> = problem
            .grid
            .trapezoid_weights()
            .iter()
            .map(|w| length / w)
            .collect();
        metric.extend(std::iter::repeat_n(1.0, 2 * n));
        Layout {
            problem,
            m,
            n,
            metric,
        }
    }

    fn dim(&self) -> usize {
        self.m + 2 * self.n
    }

    fn unflatten(&self, x: &[f64]) -> DecisionVector {
        DecisionVector::from_flat(x, self.m, self.n).expect("layout length")
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        project(&self.unflatten(x), &self.problem.bounds).to_flat()
    }

    /// Objective and gradient with the coefficient part restricted to the
    /// tangent space of the unit sphere.
    fn evaluate(&self, x: &[f64]) -> Result<(f64, Vec<f64>, ObjectiveReport, Trajectory)> {
        let d = self.unflatten(x);
        let (report, traj) = penalized_objective(&d, self.problem)?;
        let grad = adjoint_gradient(&d, &traj, self.problem)?;
        let mut g = grad.to_flat();
        let cs = &x[self.m..self.m + self.n];
        let radial: f64 = cs
            .iter()
            .zip(&g[self.m..self.m + self.n])
            .map(|(a, b)| a * b)
            .sum();
        for (gi, ci) in g[self.m..self.m + self.n].iter_mut().zip(cs) {
            *gi -= radial * ci;
        }
        Ok((report.penalized, g, report, traj))
    }

    /// Components pinned at a bound with the gradient pointing outward.
    fn active(&self, x: &[f64], g: &[f64]) -> Vec<bool> {
        let b = &self.problem.bounds;
        let mut active = vec![false; self.dim()];
        for i in 0..self.m {
            active[i] = (x[i] >= b.d_hi && g[i] > 0.0) || (x[i] <= b.d_lo && g[i] < 0.0);
        }
        for j in 0..self.n {
            let i = self.m + self.n + j;
            active[i] = (x[i] >= MODAL_AMPLITUDE_BOUND && g[i] > 0.0)
                || (x[i] <= MODAL_AMPLITUDE_MIN && g[i] < 0.0);
        }
        active
    }

    /// `max_i |P(x + M g) - x|_i`.
    fn projected_gradient(&self, x: &[f64], g: &[f64]) -> f64 {
        let trial: Vec<f64> = x
            .iter()
            .zip(g)
            .zip(&self.metric)
            .map(|((xi, gi), mi)| xi + mi * gi)
            .collect();
        let p = self.project(&trial);
        p.iter()
            .zip(x)
            .fold(0.0, |a, (pi, xi)| a.max((pi - xi).abs()))
    }
}

/// Dense inverse-Hessian approximation for the minimization of `-J`.
struct InverseHessian {
    dim: usize,
    data: Vec<f64>,
    identity_like: bool,
}

impl InverseHessian {
    fn scaled_metric(metric: &[f64], gamma: f64) -> Self {
        let dim = metric.len();
        let mut data = vec![0.0; dim * dim];
        for (i, m) in metric.iter().enumerate() {
            data[i * dim + i] = gamma * m;
        }
        InverseHessian {
            dim,
            data,
            identity_like: true,
        }
    }

    /// `d_F = H_FF g_F`, zero on the active set.
    fn direction(&self, g: &[f64], active: &[bool]) -> Vec<f64> {
        let n = self.dim;
        let mut d = vec![0.0; n];
        for i in 0..n {
            if active[i] {
                continue;
            }
            let row = &self.data[i * n..(i + 1) * n];
            d[i] = row
                .iter()
                .zip(g)
                .zip(active)
                .filter(|(_, &a)| !a)
                .map(|((h, gj), _)| h * gj)
                .sum();
        }
        d
    }

    fn update(&mut self, s: &[f64], y: &[f64]) {
        let n = self.dim;
        let sy: f64 = s.iter().zip(y).map(|(a, b)| a * b).sum();
        let rho = 1.0 / sy;
        let hy: Vec<f64> = (0..n)
            .map(|i| {
                self.data[i * n..(i + 1) * n]
                    .iter()
                    .zip(y)
                    .map(|(h, v)| h * v)
                    .sum()
            })
            .collect();
        let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
        let coef = rho * rho * yhy + rho;
        for i in 0..n {
            let row = &mut self.data[i * n..(i + 1) * n];
            for j in 0..n {
                row[j] += coef * s[i] * s[j] - rho * (s[i] * hy[j] + hy[i] * s[j]);
            }
        }
        self.identity_like = false;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn ascend(problem: &Problem, config: &OptConfig, start: DecisionVector) -> Result<RunOutcome> {
    let layout = Layout::new(problem);
    let mut x = layout.project(&start.to_flat());
    let (mut value, mut g, mut report, mut traj) = layout.evaluate(&x)?;
    let mut history = vec![value];
    let mut hess = InverseHessian::scaled_metric(&layout.metric, 1.0);
    let mut gamma_set = false;
    let mut iterations = 0;
    let mut stop = StopReason::MaxIterations;
    let mut pg = layout.projected_gradient(&x, &g);
    let mut stalled = 0;

    while iterations < config.max_iters {
        if pg < config.tol {
            stop = StopReason::ProjectedGradient;
            break;
        }
        let active = layout.active(&x, &g);
        let mut d = hess.direction(&g, &active);
        if dot(&d, &g) <= 0.0 {
            debug!("non-ascent quasi-Newton direction, resetting curvature");
            hess = InverseHessian::scaled_metric(&layout.metric, 1.0);
            gamma_set = false;
            d = hess.direction(&g, &active);
        }

        let accepted = match line_search(&layout, &x, value, &g, &d)? {
            Some(step) => Some(step),
            None if !hess.identity_like => {
                debug!("line search failed on quasi-Newton direction, retrying along gradient");
                hess = InverseHessian::scaled_metric(&layout.metric, 1.0);
                gamma_set = false;
                let d = hess.direction(&g, &active);
                line_search(&layout, &x, value, &g, &d)?
            }
            None => None,
        };
        let Some(step) = accepted else {
            stop = StopReason::LineSearchFailed;
            break;
        };
        iterations += 1;

        let s: Vec<f64> = step.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g.iter().zip(&step.g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let ss = dot(&s, &s).sqrt();
        let yy = dot(&y, &y).sqrt();
        if sy > 1e-12 * ss * yy && sy > 0.0 {
            if !gamma_set {
                let ymy: f64 = y.iter().zip(&layout.metric).map(|(v, m)| v * v * m).sum();
                hess = InverseHessian::scaled_metric(&layout.metric, sy / ymy);
                gamma_set = true;
            }
            hess.update(&s, &y);
        } else {
            debug!("curvature condition failed (s.y = {sy:e}), pair discarded");
        }

        let delta = step.value - value;
        x = step.x;
        value = step.value;
        g = step.g;
        report = step.report;
        traj = step.traj;
        history.push(value);
        pg = layout.projected_gradient(&x, &g);
        debug!("iter {iterations}: J = {value:.9e}, dJ = {delta:.3e}, pg = {pg:.3e}");
        if delta.abs() < config.tol * value.abs().max(1.0) {
            stalled += 1;
            if stalled >= STALL_PATIENCE {
                stop = StopReason::ObjectiveStalled;
                break;
            }
        } else {
            stalled = 0;
        }
    }
    if stop == StopReason::MaxIterations && config.max_iters > 0 && pg < config.tol {
        stop = StopReason::ProjectedGradient;
    }
    Ok(RunOutcome {
        decision: layout.unflatten(&x),
        trajectory: traj,
        report,
        iterations,
        stop,
        history,
        projected_gradient: pg,
    })
}

struct Step {
    x: Vec<f64>,
    value: f64,
    g: Vec<f64>,
    report: ObjectiveReport,
    traj: Trajectory,
}

/// Backtracking along the projection arc `P(x + t d)` with an Armijo test.
/// Infeasible trial points count as rejections.
fn line_search(
    layout: &Layout<'_>,
    x: &[f64],
    value: f64,
    g: &[f64],
    d: &[f64],
) -> Result<Option<Step>> {
    let dmax = d.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if dmax == 0.0 || !dmax.is_finite() {
        return Ok(None);
    }
    let mut t = (1.0 / dmax).min(1.0);
    for _ in 0..MAX_BACKTRACKS {
        let trial: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + t * di).collect();
        let xt = layout.project(&trial);
        let s: Vec<f64> = xt.iter().zip(x).map(|(a, b)| a - b).collect();
        if s.iter().all(|v| *v == 0.0) {
            return Ok(None);
        }
        let predicted = dot(g, &s);
        if predicted > 0.0 {
            match layout.evaluate(&xt) {
                Ok((vt, gt, report, traj)) => {
                    if vt >= value + ARMIJO * predicted {
                        return Ok(Some(Step {
                            x: xt,
                            value: vt,
                            g: gt,
                            report,
                            traj,
                        }));
                    }
                }
                Err(Error::InfeasibleTrajectory { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        t *= 0.5;
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_problem(m: usize, n: usize, w: Option<f64>) -> Problem {
        let params = PhysicalParams::new(1.0, 340.0, 440.0, 0.772).unwrap();
        let harmonics = HarmonicSpec::for_params((1..=n as u32).collect(), &params).unwrap();
        let bounds = ControlBounds::new(-0.2, 0.2, 1e-3).unwrap();
        Problem::new(params, harmonics, bounds, 0.02, m, w).unwrap()
    }

    fn smooth_decision(p: &Problem) -> DecisionVector {
        let m = p.grid.len();
        let n = p.n_modes();
        DecisionVector {
            u: (0..m)
                .map(|i| 0.1 + 0.08 * (3.0 * i as f64 / m as f64).sin())
                .collect(),
            c: (0..n).map(|j| 0.3 + 0.2 * j as f64).collect(),
            phi0: (0..n).map(|j| 0.9 - 0.1 * j as f64).collect(),
        }
    }

    #[test]
    fn zero_penalty_gives_energy() {
        let p = small_problem(101, 2, Some(0.0));
        let (r, _) = penalized_objective(&smooth_decision(&p), &p).unwrap();
        assert_eq!(r.penalty, 0.0);
        assert_eq!(r.penalized, r.energy);
    }

    #[test]
    fn constructed_residual_penalty() {
        let p = small_problem(11, 1, Some(1.0));
        let samples = (0..11)
            .map(|i| {
                StateVector::from_vec(vec![0.02, if i == 10 { 0.1 } else { 1.0 }, 0.0]).unwrap()
            })
            .collect();
        let traj = Trajectory {
            grid: p.grid.clone(),
            samples,
        };
        let r = report_for_trajectory(&traj, &Coefficients(vec![1.0]), &p).unwrap();
        assert_relative_eq!(r.penalty, 0.01, max_relative = 1e-15);
        assert_eq!(r.penalized, r.energy - r.penalty);

        let zero: Vec<StateVector> = (0..11)
            .map(|_| StateVector::from_vec(vec![0.02, 0.0, 0.3]).unwrap())
            .collect();
        let traj = Trajectory {
            grid: p.grid.clone(),
            samples: zero,
        };
        let r = report_for_trajectory(&traj, &Coefficients(vec![1.0]), &p).unwrap();
        assert_eq!(r.penalty, 0.0);
    }

    #[test]
    fn zero_weights_and_penalty_give_zero_gradient() {
        let p = small_problem(101, 2, Some(0.0));
        let mut d = smooth_decision(&p);
        d.c = vec![0.0, 0.0];
        let (_, g) = objective_gradient(&d, &p).unwrap();
        assert!(g.u.iter().all(|&v| v == 0.0));
        assert!(g.phi0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn coefficient_gradient_sign() {
        let p = small_problem(101, 3, Some(0.0));
        let mut d = smooth_decision(&p);
        d.c = vec![0.5, -0.7, 0.2];
        let (_, g) = objective_gradient(&d, &p).unwrap();
        for (gc, c) in g.c.iter().zip(&d.c) {
            assert_eq!(gc.signum(), c.signum());
        }
    }

    #[test]
    fn report_matches_between_entry_points() {
        let p = small_problem(101, 2, None);
        let d = smooth_decision(&p);
        let (r1, _) = penalized_objective(&d, &p).unwrap();
        let (mut r2, _) = objective_gradient(&d, &p).unwrap();
        assert!(r2.gradient_norm.is_some());
        r2.gradient_norm = None;
        assert_eq!(r1, r2);
    }

    #[test]
    fn projection_cases() {
        let b = ControlBounds::new(-0.2, 0.2, 1e-3).unwrap();
        let interior = DecisionVector {
            u: vec![0.1, -0.05],
            c: vec![0.6, 0.8],
            phi0: vec![0.3, 0.4],
        };
        assert_eq!(project(&interior, &b), interior);
        let d = DecisionVector {
            u: vec![0.5, -0.9],
            c: vec![3.0, 4.0],
            phi0: vec![0.5, 0.5],
        };
        let p = project(&d, &b);
        assert_eq!(p.u, vec![0.2, -0.2]);
        assert_relative_eq!(p.c[0], 0.6, max_relative = 1e-15);
        assert_relative_eq!(p.c[1], 0.8, max_relative = 1e-15);
        let z = DecisionVector {
            u: vec![0.0],
            c: vec![0.0; 4],
            phi0: vec![2.0, -3.0, 0.1, 0.0],
        };
        let p = project(&z, &b);
        assert!(p.c.iter().all(|&c| (c - 0.5).abs() < 1e-15));
        assert_eq!(p.phi0, vec![1.0, 1.0, 0.1, 0.1]);
    }

    #[test]
    fn zero_iterations_return_projected_guess() {
        let p = small_problem(65, 2, None);
        let cfg = OptConfig {
            max_iters: 0,
            restarts: 1,
            seed: 11,
            ..OptConfig::default()
        };
        let r = optimize(&p, &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        rng.set_stream(0);
        assert_eq!(r.decision, initial_guess(&p, &mut rng));
    }

    #[test]
    fn infeasible_decision_propagates() {
        let p = small_problem(101, 1, None);
        let mut d = smooth_decision(&p);
        d.u = vec![-0.2; 101];
        assert!(matches!(
            penalized_objective(&d, &p),
            Err(Error::InfeasibleTrajectory { .. })
        ));
    }

    #[test]
    fn arc_lengths_count_intervals() {
        let g = Grid::new(5, 1.0).unwrap();
        let u = [0.2, 0.2, 0.2, 0.0, -0.2];
        assert_relative_eq!(length_at_level(&u, 0.2, &g, 0.0), 0.5);
        assert_eq!(length_at_level(&u, -0.2, &g, 0.0), 0.0);
    }
}
