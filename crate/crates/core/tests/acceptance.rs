//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use hornopt::cli::{self, ProblemConfig};
use hornopt::integrate::{integrate_state, quadrature, Grid};
use hornopt::model::{costate_rhs, hamiltonian, switching_value, CostateVector};
use hornopt::optimize::{
    objective_gradient, optimize, penalized_objective, report_for_trajectory, DecisionVector,
    Problem,
};
use hornopt::spectral::{eigen_solve, orthogonality_check, BoreProfile, CONE_APEX_OFFSET};
use hornopt::{Coefficients, ControlBounds, HarmonicSpec, PhysicalParams, StateVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn reference_params() -> PhysicalParams {
    PhysicalParams::new(1.0, 340.0, 440.0, 0.772).unwrap()
}

fn problem(m: usize, n: u32, d0: f64, w: Option<f64>) -> Problem {
    let params = reference_params();
    let harmonics = HarmonicSpec::for_params((1..=n).collect(), &params).unwrap();
    let bounds = ControlBounds::new(-0.2, 0.2, 1e-3).unwrap();
    Problem::new(params, harmonics, bounds, d0, m, w).unwrap()
}

fn gradient_check() -> Outcome {
    let started = Instant::now();
    let p = problem(201, 2, 0.02, None);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m = p.grid.len();
    let a: [f64; 3] = rng.gen();
    let d = DecisionVector {
        u: (0..m)
            .map(|i| {
                let s = i as f64 / (m - 1) as f64;
                0.05 + 0.1 * a[0] * (3.0 * s).sin() + 0.05 * a[1] * (7.0 * s + a[2]).cos()
            })
            .collect(),
        c: (0..2).map(|_| rng.gen_range(0.2..1.0)).collect(),
        phi0: (0..2).map(|_| rng.gen_range(0.2..1.0)).collect(),
    };
    let (_, g) = objective_gradient(&d, &p).unwrap();
    let flat = d.to_flat();
    let step = 1e-6;
    let eval = |x: &[f64]| {
        let dv = DecisionVector::from_flat(x, m, 2).unwrap();
        penalized_objective(&dv, &p).unwrap().0.penalized
    };
    // Pass when |a - b| <= 1e-4 |b| or |a - b| <= 1e-7. The strict relative
    // figure is reported too.
    let mut worst = 0.0_f64;
    let mut violations = 0;
    for (i, gi) in g.to_flat().iter().enumerate() {
        let mut plus = flat.clone();
        let mut minus = flat.clone();
        plus[i] += step;
        minus[i] -= step;
        let fd = (eval(&plus) - eval(&minus)) / (2.0 * step);
        let err = (gi - fd).abs();
        worst = worst.max(err / fd.abs().max(1e-7));
        if err > 1e-4 * fd.abs() && err > 1e-7 {
            violations += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        violations == 0 && secs < 10.0,
        format!(
            "{violations} of {} components outside tolerance, worst relative error {worst:.2e}, {secs:.2}s",
            flat.len()
        ),
    )
}

fn cylinder_spectrum() -> Outcome {
    let started = Instant::now();
    let length = 0.772;
    let profile = BoreProfile::cylinder(Grid::new(1025, length).unwrap(), 0.02).unwrap();
    let pairs = eigen_solve(&profile, 5).unwrap();
    let worst = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let exact = (2.0 * (i + 1) as f64 - 1.0) * PI / (2.0 * length);
            (p.k - exact).abs() / exact
        })
        .fold(0.0, f64::max);
    let secs = started.elapsed().as_secs_f64();
    outcome(
        worst < 1e-3 && secs < 5.0,
        format!("worst relative error {worst:.2e} (tol 1e-3), {secs:.2}s"),
    )
}

fn cone_spectrum() -> Outcome {
    let started = Instant::now();
    let length = 0.772;
    let eps = CONE_APEX_OFFSET * length;
    let profile = BoreProfile::cone(Grid::new(1025, length).unwrap(), 0.1, eps).unwrap();
    let pairs = eigen_solve(&profile, 5).unwrap();
    let worst = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let exact = (i + 1) as f64 * PI / length;
            (p.k - exact).abs() / exact
        })
        .fold(0.0, f64::max);
    let secs = started.elapsed().as_secs_f64();
    outcome(
        worst < 1e-2 && secs < 5.0,
        format!("worst relative error {worst:.2e} (tol 1e-2), {secs:.2}s"),
    )
}

fn random_point(rng: &mut ChaCha8Rng, n: usize) -> (StateVector, CostateVector, Coefficients, f64) {
    let mut x = vec![rng.gen_range(0.005..0.2)];
    let mut mu = vec![rng.gen_range(-1.0..1.0)];
    for _ in 0..2 * n {
        x.push(rng.gen_range(-1.0..1.0));
        mu.push(rng.gen_range(-1.0..1.0));
    }
    let c = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (
        StateVector::from_vec(x).unwrap(),
        CostateVector::from_vec(mu).unwrap(),
        Coefficients(c),
        rng.gen_range(-0.2..0.2),
    )
}

fn hamiltonian_affinity() -> Outcome {
    let params = reference_params();
    let h = HarmonicSpec::for_params(vec![1, 2, 3], &params).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_ulps = 0.0_f64;
    for _ in 0..10_000 {
        let (x, mu, c, u) = random_point(&mut rng, 3);
        let hu = hamiltonian(&x, u, &c, &mu, &h, &params).unwrap();
        let h0 = hamiltonian(&x, 0.0, &c, &mu, &h, &params).unwrap();
        let s = switching_value(&x, &mu).unwrap();
        let ulp = hu.abs() * f64::EPSILON;
        worst_ulps = worst_ulps.max((hu - h0 - u * s).abs() / ulp.max(f64::MIN_POSITIVE));
    }
    outcome(
        worst_ulps <= 4.0,
        format!("worst defect {worst_ulps:.2} ulps over 1e4 samples (tol 4)"),
    )
}

fn costate_consistency() -> Outcome {
    let params = reference_params();
    let h = HarmonicSpec::for_params(vec![1, 2, 3], &params).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0_f64;
    for _ in 0..1_000 {
        let (x, mu, c, u) = random_point(&mut rng, 3);
        let rhs = costate_rhs(&mu, &x, u, &c, &h, &params).unwrap();
        for j in 0..x.as_slice().len() {
            let central = |step: f64| {
                let mut xp = x.as_slice().to_vec();
                let mut xm = xp.clone();
                xp[j] += step;
                xm[j] -= step;
                let hp = hamiltonian(&StateVector::from_vec(xp).unwrap(), u, &c, &mu, &h, &params);
                let hm = hamiltonian(&StateVector::from_vec(xm).unwrap(), u, &c, &mu, &h, &params);
                -(hp.unwrap() - hm.unwrap()) / (2.0 * step)
            };
            // Richardson extrapolation of two central differences; exact for
            // the quadratic modal components, fourth order in the diameter.
            let step = 1e-3 * x.as_slice()[j].abs().max(1e-2);
            let fd = (4.0 * central(0.5 * step) - central(step)) / 3.0;
            let got = rhs.as_slice()[j];
            worst = worst.max((got - fd).abs() / fd.abs().max(got.abs()).max(1e-8));
        }
    }
    outcome(
        worst <= 1e-6,
        format!("worst relative deviation {worst:.2e} over 1e3 samples (tol 1e-6)"),
    )
}

fn integrator_order() -> Outcome {
    let params = reference_params();
    let h = HarmonicSpec::for_params(vec![1, 2], &params).unwrap();
    let length = params.length;
    let errors: Vec<f64> = [129, 257, 513, 1025]
        .iter()
        .map(|&m| {
            let grid = Grid::new(m, length).unwrap();
            let init = StateVector::closed_end(0.02, &[1.0, 0.5]);
            let traj = integrate_state(&vec![0.0; m], &init, &grid, &h, 1e-3).unwrap();
            let mut err = 0.0_f64;
            for (n, (&k, a)) in h.wave_numbers().iter().zip([1.0, 0.5]).enumerate() {
                for (i, v) in traj.mode(n).iter().enumerate() {
                    err = err.max((v - a * (k * grid.node(i)).cos()).abs());
                }
            }
            err
        })
        .collect();
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let pass = ratios.iter().all(|r| (3.5..=4.5).contains(r));
    outcome(
        pass,
        format!(
            "errors {:?}, ratios {:?} (band [3.5, 4.5])",
            errors
                .iter()
                .map(|e| format!("{e:.2e}"))
                .collect::<Vec<_>>(),
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn feasible(p: &Problem, d: &DecisionVector, traj_min: f64) -> bool {
    let b = &p.bounds;
    let norm = d.c.iter().map(|v| v * v).sum::<f64>().sqrt();
    d.u.iter().all(|&u| b.d_lo <= u && u <= b.d_hi)
        && (norm - 1.0).abs() < 1e-12
        && traj_min >= b.floor
}

fn scenario_n2() -> Outcome {
    let started = Instant::now();
    let cfg = ProblemConfig::preset("paper_n2").unwrap();
    let p = cfg.problem().unwrap();
    let r = optimize(&p, &cfg.opt_config()).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let length = p.grid.length();
    let frac = r.arcs.bound_length / length;
    let ok_feasible = feasible(&p, &r.decision, r.trajectory.min_diameter().1);
    let last_step = match r.history.as_slice() {
        [.., a, b] => (b - a).abs(),
        _ => f64::INFINITY,
    };
    let pass = r.converged
        && last_step < 1e-5 * r.report.penalized.abs().max(1.0)
        && frac >= 0.05
        && ok_feasible
        && r.validity.is_finite()
        && secs < 300.0;
    outcome(
        pass,
        format!(
            "converged={} ({:?}, last |dJ| {last_step:.1e}), J={:.4e}, bound fraction {frac:.3}, \
             feasible={ok_feasible}, validity {:.4}, {secs:.1}s",
            r.converged, r.stop_reason, r.report.penalized, r.validity
        ),
    )
}

fn scenarios_n5_n10() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for name in ["paper_n5", "paper_n10"] {
        let cfg = ProblemConfig::preset(name).unwrap();
        let p = cfg.problem().unwrap();
        let mut oc = cfg.opt_config();
        if name == "paper_n10" {
            oc.restarts = 5;
        }
        match optimize(&p, &oc) {
            Ok(r) => {
                let ok = feasible(&p, &r.decision, r.trajectory.min_diameter().1);
                pass &= ok;
                details.push(format!("{name} feasible={ok} J={:.3e}", r.report.penalized));
                if name == "paper_n10" {
                    let visits = r
                        .restarts
                        .iter()
                        .filter(|s| s.lower_bound_length > 0.0 && s.upper_bound_length > 0.0)
                        .count();
                    pass &= visits > 0;
                    details.push(format!(
                        "restarts visiting both bounds {visits}/{}",
                        oc.restarts
                    ));
                }
            }
            Err(e) => {
                pass = false;
                details.push(format!("{name} error {e}"));
            }
        }
    }
    outcome(pass, details.join(", "))
}

fn orthogonality() -> Outcome {
    let grid = Grid::new(1025, 0.772).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a: [f64; 4] = rng.gen();
    let smooth: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|x| {
            0.03 + 0.01 * a[0] * (4.0 * x + a[1]).sin() + 0.02 * a[2] * x * x + 0.005 * a[3] * x
        })
        .collect();
    let profiles = [
        (
            "cylinder",
            BoreProfile::cylinder(grid.clone(), 0.02).unwrap(),
        ),
        (
            "cone",
            BoreProfile::cone(grid.clone(), 0.1, CONE_APEX_OFFSET * 0.772).unwrap(),
        ),
        ("smooth", BoreProfile::new(grid.clone(), smooth).unwrap()),
    ];
    let mut worst = 0.0_f64;
    let mut parts = Vec::new();
    for (name, profile) in &profiles {
        let pairs = eigen_solve(profile, 6).unwrap();
        let o = orthogonality_check(&pairs, profile).unwrap();
        worst = worst.max(o);
        parts.push(format!("{name} {o:.1e}"));
    }
    outcome(worst < 1e-6, format!("{} (tol 1e-6)", parts.join(", ")))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ProblemConfig::preset("paper_n2").unwrap();
    cfg.output_dir = dir.path().join("out");
    let files = ["report.json", "duct.csv", "modes.csv"];
    let read = |root: &Path| -> Vec<Vec<u8>> {
        files
            .iter()
            .map(|f| fs::read(root.join(f)).unwrap())
            .collect()
    };
    cli::run(&cfg).unwrap();
    let first = read(&cfg.output_dir);
    cli::run(&cfg).unwrap();
    let second = read(&cfg.output_dir);
    let same: Vec<bool> = first.iter().zip(&second).map(|(a, b)| a == b).collect();
    outcome(
        same.iter().all(|s| *s),
        files
            .iter()
            .zip(&same)
            .map(|(f, s)| format!("{f} {}", if *s { "identical" } else { "differs" }))
            .collect::<Vec<_>>()
            .join(", "),
    )
}

fn parseval() -> Outcome {
    let params = reference_params();
    let p = {
        let harmonics = HarmonicSpec::for_params(vec![1], &params).unwrap();
        let bounds = ControlBounds::new(-0.2, 0.2, 1e-3).unwrap();
        Problem::new(params, harmonics, bounds, 0.02, 513, Some(0.0)).unwrap()
    };
    let m = p.grid.len();
    let u: Vec<f64> = (0..m)
        .map(|i| 0.1 * (5.0 * i as f64 / m as f64).sin())
        .collect();
    let traj = integrate_state(
        &u,
        &StateVector::closed_end(0.02, &[0.8]),
        &p.grid,
        &p.harmonics,
        1e-3,
    )
    .unwrap();
    let report = report_for_trajectory(&traj, &Coefficients(vec![1.0]), &p).unwrap();

    // phi(x, t) = phi_1(x) exp(i w t) sampled at an arbitrary instant.
    let k = p.harmonics.wave_numbers()[0];
    let omega = k * params.sound_speed;
    let t = 0.37 / params.f0;
    let (ct, st) = ((omega * t).cos(), (omega * t).sin());
    let density: Vec<f64> = traj
        .samples
        .iter()
        .map(|s| {
            let (phi, dphi) = (s.phi(0), s.dphi(0));
            let phi_x = (dphi * ct, dphi * st);
            let phi_t_over_c = (
                -omega * phi * st / params.sound_speed,
                omega * phi * ct / params.sound_speed,
            );
            let modulus = phi_x.0 * phi_x.0
                + phi_x.1 * phi_x.1
                + phi_t_over_c.0 * phi_t_over_c.0
                + phi_t_over_c.1 * phi_t_over_c.1;
            PI * params.rho0 / 8.0 * s.diameter() * s.diameter() * modulus
        })
        .collect();
    let direct = quadrature(&density, &p.grid).unwrap();
    let rel = (direct - report.energy).abs() / report.energy.abs();
    outcome(
        rel <= 1e-10,
        format!(
            "modal {:.12e} vs direct {direct:.12e}, relative {rel:.1e} (tol 1e-10)",
            report.energy
        ),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("adjoint gradient vs central differences", gradient_check),
        ("cylinder spectrum", cylinder_spectrum),
        ("cone spectrum", cone_spectrum),
        ("hamiltonian affine in control", hamiltonian_affinity),
        ("costate right-hand side vs -dH/dX", costate_consistency),
        ("integrator order", integrator_order),
        ("two-harmonic scenario", scenario_n2),
        ("five- and ten-harmonic scenarios", scenarios_n5_n10),
        ("eigenfunction orthogonality", orthogonality),
        ("determinism of run artifacts", determinism),
        ("single-mode energy consistency", parseval),
    ];
    let mut failed = 0;
    let mut total = Duration::ZERO;
    for (name, check) in criteria {
        let started = Instant::now();
        let o = check();
        total += started.elapsed();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed ({:.1}s)",
        criteria.len() - failed,
        total.as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
