use hornopt::optimize::{objective_gradient, penalized_objective, DecisionVector, Problem};
use hornopt::{ControlBounds, HarmonicSpec, PhysicalParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn problem(m: usize, n: u32) -> Problem {
    let params = PhysicalParams::new(1.0, 340.0, 440.0, 0.772).unwrap();
    let harmonics = HarmonicSpec::for_params((1..=n).collect(), &params).unwrap();
    let bounds = ControlBounds::new(-0.2, 0.2, 1e-3).unwrap();
    Problem::new(params, harmonics, bounds, 0.02, m, None).unwrap()
}

fn random_smooth(p: &Problem, seed: u64) -> DecisionVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = p.grid.len();
    let n = p.n_modes();
    let a: [f64; 3] = rng.gen();
    DecisionVector {
        u: (0..m)
            .map(|i| {
                let s = i as f64 / (m - 1) as f64;
                0.05 + 0.1 * a[0] * (3.0 * s).sin() + 0.05 * a[1] * (7.0 * s + a[2]).cos()
            })
            .collect(),
        c: (0..n).map(|_| rng.gen_range(0.2..1.0)).collect(),
        phi0: (0..n).map(|_| rng.gen_range(0.2..1.0)).collect(),
    }
}

/// Central differences of the penalized objective over every component.
fn finite_difference(d: &DecisionVector, p: &Problem, step: f64) -> Vec<f64> {
    let flat = d.to_flat();
    let (m, n) = (d.u.len(), d.c.len());
    let eval = |x: &[f64]| {
        let dv = DecisionVector::from_flat(x, m, n).unwrap();
        penalized_objective(&dv, p).unwrap().0.penalized
    };
    (0..flat.len())
        .map(|i| {
            let mut plus = flat.clone();
            let mut minus = flat.clone();
            plus[i] += step;
            minus[i] -= step;
            (eval(&plus) - eval(&minus)) / (2.0 * step)
        })
        .collect()
}

#[test]
fn adjoint_matches_finite_differences() {
    for seed in 0..12 {
        let p = problem(201, 2);
        let d = random_smooth(&p, seed);
        let (_, g) = objective_gradient(&d, &p).unwrap();
        let fd = finite_difference(&d, &p, 1e-6);
        for (i, (a, b)) in g.to_flat().iter().zip(&fd).enumerate() {
            let err = (a - b).abs();
            assert!(
                err <= 1e-4 * b.abs() || err <= 1e-7,
                "seed {seed} component {i}: adjoint {a:e} fd {b:e}"
            );
        }
    }
}

// Richardson-extrapolated differences at a wider step keep rounding noise
// well under the smallest control components, so every component is held to
// a purely relative bound.
#[test]
fn adjoint_matches_wide_step_differences_relatively() {
    for seed in 0..12 {
        let p = problem(201, 3);
        let d = random_smooth(&p, seed);
        let (_, g) = objective_gradient(&d, &p).unwrap();
        let wide = finite_difference(&d, &p, 1e-4);
        let narrow = finite_difference(&d, &p, 5e-5);
        let fd: Vec<f64> = narrow
            .iter()
            .zip(&wide)
            .map(|(n, w)| (4.0 * n - w) / 3.0)
            .collect();
        for (i, (a, b)) in g.to_flat().iter().zip(&fd).enumerate() {
            let rel = (a - b).abs() / b.abs().max(1e-12);
            assert!(
                rel < 2e-5,
                "seed {seed} component {i}: adjoint {a:e} fd {b:e}"
            );
        }
    }
}
