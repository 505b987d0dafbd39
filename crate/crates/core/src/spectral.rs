//! Direct Sturm-Liouville solver for a given bore, used to check designs.
//!
//! Modes solve `(D^2 phi')' + k^2 D^2 phi = 0` with `phi'(0) = 0` and
//! `phi(L) = 0`. The solver shoots on `k` in the flux variables
//! `(phi, D^2 phi')` with a fourth-order Runge-Kutta stepper, sweeps `k` for
//! sign changes of `phi(L; k)` and bisects each bracket.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{simpson, Grid, Trajectory};

/// Relative bisection tolerance on `k`.
pub const K_TOLERANCE: f64 = 1e-10;

/// Apex offset of the cone fixture, as a fraction of the length.
pub const CONE_APEX_OFFSET: f64 = 1e-3;

/// Nodal diameters of an axisymmetric bore.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoreProfile {
    pub grid: Grid,
    pub d: Vec<f64>,
}

impl BoreProfile {
    pub fn new(grid: Grid, d: Vec<f64>) -> Result<Self> {
        crate::error::check_len("profile diameters", grid.len(), d.len())?;
        if let Some((i, v)) = d
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::invalid(
                "profile.d",
                format!("diameter at node {i} must be positive, got {v}"),
            ));
        }
        Ok(BoreProfile { grid, d })
    }

    pub fn cylinder(grid: Grid, diameter: f64) -> Result<Self> {
        let m = grid.len();
        Self::new(grid, vec![diameter; m])
    }

    /// Cone `D(x) = slope * (x + eps)` with apex at `-eps`.
    pub fn cone(grid: Grid, slope: f64, eps: f64) -> Result<Self> {
        let d = grid.nodes().iter().map(|x| slope * (x + eps)).collect();
        Self::new(grid, d)
    }

    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        Self::new(traj.grid.clone(), traj.diameters())
    }

    /// `q = 2 D'/D` at the nodes, by second-order finite differences.
    pub fn q(&self) -> Vec<f64> {
        let m = self.d.len();
        let h = self.grid.step();
        let d = &self.d;
        (0..m)
            .map(|i| {
                let dd = if i == 0 {
                    (-3.0 * d[0] + 4.0 * d[1] - d[2]) / (2.0 * h)
                } else if i == m - 1 {
                    (3.0 * d[m - 1] - 4.0 * d[m - 2] + d[m - 3]) / (2.0 * h)
                } else {
                    (d[i + 1] - d[i - 1]) / (2.0 * h)
                };
                2.0 * dd / d[i]
            })
            .collect()
    }

    fn weights(&self) -> Vec<f64> {
        self.d.iter().map(|d| d * d).collect()
    }

    /// `D^2` at interval midpoints by four-point interpolation of `D`.
    fn midpoint_weights(&self) -> Vec<f64> {
        let d = &self.d;
        let m = d.len();
        (0..m - 1)
            .map(|i| {
                let linear = 0.5 * (d[i] + d[i + 1]);
                let cubic = if m < 4 {
                    linear
                } else if i == 0 {
                    (3.0 * d[0] + 6.0 * d[1] - d[2]) / 8.0
                } else if i == m - 2 {
                    (-d[m - 3] + 6.0 * d[m - 2] + 3.0 * d[m - 1]) / 8.0
                } else {
                    (-d[i - 1] + 9.0 * d[i] + 9.0 * d[i + 1] - d[i + 2]) / 16.0
                };
                let v = if cubic > 0.0 { cubic } else { linear };
                v * v
            })
            .collect()
    }
}

/// One mode of the bore.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    /// Wave number (1/m).
    pub k: f64,
    /// Eigenvalue `k^2`.
    pub lambda: f64,
    /// Mode shape normalized to `phi(0) = 1`.
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    /// `D^2`-weighted L2 norm of `phi`; dividing by it gives the unit-norm mode.
    pub weighted_norm: f64,
}

impl EigenPair {
    /// Number of sign changes of `phi` strictly inside the interval.
    pub fn interior_zeros(&self) -> usize {
        let inner = &self.phi[..self.phi.len() - 1];
        inner
            .windows(2)
            .filter(|w| (w[0] > 0.0 && w[1] <= 0.0) || (w[0] < 0.0 && w[1] >= 0.0))
            .count()
    }

    pub fn frequency(&self, sound_speed: f64) -> f64 {
        self.k * sound_speed / (2.0 * PI)
    }
}

struct Shooter<'a> {
    profile: &'a BoreProfile,
    p: Vec<f64>,
    p_mid: Vec<f64>,
}

impl<'a> Shooter<'a> {
    fn new(profile: &'a BoreProfile) -> Self {
        Shooter {
            profile,
            p: profile.weights(),
            p_mid: profile.midpoint_weights(),
        }
    }

    /// Integrates from the closed end; returns `phi(L)` and optionally the path.
    fn shoot(&self, k: f64, mut path: Option<(&mut Vec<f64>, &mut Vec<f64>)>) -> f64 {
        let h = self.profile.grid.step();
        let k2 = k * k;
        let (mut y, mut z) = (1.0_f64, 0.0_f64);
        if let Some((ys, zs)) = path.as_mut() {
            ys.push(y);
            zs.push(z);
        }
        for i in 0..self.p.len() - 1 {
            let (p0, pm, p1) = (self.p[i], self.p_mid[i], self.p[i + 1]);
            let k1y = z / p0;
            let k1z = -k2 * p0 * y;
            let k2y = (z + 0.5 * h * k1z) / pm;
            let k2z = -k2 * pm * (y + 0.5 * h * k1y);
            let k3y = (z + 0.5 * h * k2z) / pm;
            let k3z = -k2 * pm * (y + 0.5 * h * k2y);
            let k4y = (z + h * k3z) / p1;
            let k4z = -k2 * p1 * (y + h * k3y);
            y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
            z += h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z);
            if let Some((ys, zs)) = path.as_mut() {
                ys.push(y);
                zs.push(z);
            }
        }
        y
    }

    fn bisect(&self, mut lo: f64, mut hi: f64, mut f_lo: f64) -> f64 {
        while hi - lo > K_TOLERANCE * hi {
            let mid = 0.5 * (lo + hi);
            let f_mid = self.shoot(mid, None);
            if f_mid == 0.0 {
                return mid;
            }
            if (f_mid > 0.0) == (f_lo > 0.0) {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn pair(&self, k: f64) -> Result<EigenPair> {
        let mut phi = Vec::with_capacity(self.p.len());
        let mut flux = Vec::with_capacity(self.p.len());
        self.shoot(k, Some((&mut phi, &mut flux)));
        let dphi: Vec<f64> = flux.iter().zip(&self.p).map(|(z, p)| z / p).collect();
        let weighted: Vec<f64> = phi.iter().zip(&self.p).map(|(f, p)| p * f * f).collect();
        let weighted_norm = simpson(&weighted, &self.profile.grid)?.sqrt();
        Ok(EigenPair {
            k,
            lambda: k * k,
            phi,
            dphi,
            weighted_norm,
        })
    }
}

/// Sweep controls for the root search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    /// Step of the `k` sweep (1/m).
    pub step: f64,
    /// Largest `k` examined (1/m).
    pub ceiling: f64,
}

impl SweepOptions {
    /// Step `pi / (32 L)` and ceiling `(4 n + 8) pi / L`.
    pub fn for_modes(length: f64, n_modes: usize) -> Self {
        SweepOptions {
            step: PI / (32.0 * length),
            ceiling: (4 * n_modes + 8) as f64 * PI / length,
        }
    }
}

/// The `n_modes` smallest eigenpairs of `profile`, with strictly increasing `k`.
pub fn eigen_solve(profile: &BoreProfile, n_modes: usize) -> Result<Vec<EigenPair>> {
    eigen_solve_with(
        profile,
        n_modes,
        SweepOptions::for_modes(profile.grid.length(), n_modes),
    )
}

pub fn eigen_solve_with(
    profile: &BoreProfile,
    n_modes: usize,
    options: SweepOptions,
) -> Result<Vec<EigenPair>> {
    if n_modes == 0 {
        return Ok(Vec::new());
    }
    let mut step = options.step;
    let mut last = Vec::new();
    for _ in 0..4 {
        let ks = sweep_roots(profile, step, options.ceiling, Some(n_modes))?;
        if ks.len() < n_modes {
            return Err(Error::BracketFailure {
                found: ks.len(),
                requested: n_modes,
                ceiling: options.ceiling,
            });
        }
        let shooter = Shooter::new(profile);
        let pairs = ks
            .iter()
            .map(|&k| shooter.pair(k))
            .collect::<Result<Vec<_>>>()?;
        let sturm_ok = pairs
            .iter()
            .enumerate()
            .all(|(n, p)| p.interior_zeros() == n);
        if sturm_ok {
            return Ok(pairs);
        }
        log::debug!("oscillation count mismatch at sweep step {step:e}, refining");
        last = pairs;
        step *= 0.25;
    }
    log::warn!("oscillation counts still inconsistent after sweep refinement");
    Ok(last)
}

/// Every eigenpair with `k` below `ceiling`.
pub fn eigen_solve_below(profile: &BoreProfile, ceiling: f64) -> Result<Vec<EigenPair>> {
    let step = PI / (32.0 * profile.grid.length());
    let ks = sweep_roots(profile, step, ceiling, None)?;
    let shooter = Shooter::new(profile);
    ks.iter().map(|&k| shooter.pair(k)).collect()
}

fn sweep_roots(
    profile: &BoreProfile,
    step: f64,
    ceiling: f64,
    wanted: Option<usize>,
) -> Result<Vec<f64>> {
    if !(step > 0.0 && ceiling > 0.0) {
        return Err(Error::invalid("sweep", "step and ceiling must be positive"));
    }
    let shooter = Shooter::new(profile);
    let mut roots = Vec::new();
    let mut k_lo = 0.0;
    // phi(L; 0) = 1 for every profile
    let mut f_lo = 1.0;
    while k_lo < ceiling {
        if wanted.is_some_and(|n| roots.len() >= n) {
            break;
        }
        let k_hi = (k_lo + step).min(ceiling);
        let f_hi = profile_shoot(&shooter, k_hi);
        if f_hi == 0.0 {
            roots.push(k_hi);
        } else if (f_lo > 0.0) != (f_hi > 0.0) && f_lo != 0.0 {
            roots.push(shooter.bisect(k_lo, k_hi, f_lo));
        }
        k_lo = k_hi;
        f_lo = f_hi;
    }
    Ok(roots)
}

fn profile_shoot(shooter: &Shooter<'_>, k: f64) -> f64 {
    shooter.shoot(k, None)
}

/// Largest normalized off-diagonal entry of the `D^2`-weighted Gram matrix.
pub fn orthogonality_check(pairs: &[EigenPair], profile: &BoreProfile) -> Result<f64> {
    let weights = profile.weights();
    let grid = &profile.grid;
    let inner = |a: &[f64], b: &[f64]| -> Result<f64> {
        let v: Vec<f64> = a
            .iter()
            .zip(b)
            .zip(&weights)
            .map(|((x, y), w)| w * x * y)
            .collect();
        simpson(&v, grid)
    };
    let norms = pairs
        .iter()
        .map(|p| inner(&p.phi, &p.phi).map(f64::sqrt))
        .collect::<Result<Vec<f64>>>()?;
    let mut worst = 0.0_f64;
    for i in 0..pairs.len() {
        for j in 0..i {
            let g = inner(&pairs[i].phi, &pairs[j].phi)? / (norms[i] * norms[j]);
            worst = worst.max(g.abs());
        }
    }
    Ok(worst)
}

/// Closed-form duct families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Cylinder,
    Cone,
}

impl std::str::FromStr for OracleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cylinder" => Ok(OracleKind::Cylinder),
            "cone" => Ok(OracleKind::Cone),
            other => Err(Error::invalid(
                "kind",
                format!("expected cylinder or cone, got {other}"),
            )),
        }
    }
}

/// Analytic mode `n` (one based) of a closed/open cylinder or of a complete
/// cone with its apex at the closed end, sampled on `grid`. `weighted_norm`
/// uses unit weight.
pub fn analytic_oracle(kind: OracleKind, length: f64, n: usize, grid: &Grid) -> Result<EigenPair> {
    if n == 0 {
        return Err(Error::invalid("n", "mode index starts at 1"));
    }
    let nf = n as f64;
    let k = match kind {
        OracleKind::Cylinder => (2.0 * nf - 1.0) * PI / (2.0 * length),
        OracleKind::Cone => nf * PI / length,
    };
    let xs = grid.nodes();
    let (phi, dphi): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .map(|&x| match kind {
            OracleKind::Cylinder => ((k * x).cos(), -k * (k * x).sin()),
            OracleKind::Cone => {
                let kx = k * x;
                if kx == 0.0 {
                    (1.0, 0.0)
                } else {
                    (kx.sin() / kx, (kx * kx.cos() - kx.sin()) / (k * x * x))
                }
            }
        })
        .unzip();
    let sq: Vec<f64> = phi.iter().map(|v| v * v).collect();
    let weighted_norm = simpson(&sq, grid)?.sqrt();
    Ok(EigenPair {
        k,
        lambda: k * k,
        phi,
        dphi,
        weighted_norm,
    })
}

/// Comparison of one prescribed wave number with the bore's spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeMatch {
    pub prescribed_k: f64,
    pub nearest_k: Option<f64>,
    pub relative_error: Option<f64>,
    /// `|phi_n(L) / phi_n(0)|` from the design sweep.
    pub normalized_residual: f64,
}

/// Spectral audit of a designed bore.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralVerification {
    pub computed_k: Vec<f64>,
    pub matches: Vec<ModeMatch>,
    pub orthogonality: f64,
    pub cone_apex_offset: f64,
}

/// Solves the spectrum of a designed bore and pairs every prescribed wave
/// number with its nearest eigenvalue.
pub fn verify_design(traj: &Trajectory, prescribed: &[f64]) -> Result<SpectralVerification> {
    let profile = BoreProfile::from_trajectory(traj)?;
    let k_top = prescribed.iter().copied().fold(0.0, f64::max);
    let ceiling = 1.25 * k_top + 4.0 * PI / profile.grid.length();
    let pairs = eigen_solve_below(&profile, ceiling)?;
    let computed_k: Vec<f64> = pairs.iter().map(|p| p.k).collect();
    let first = &traj.samples[0];
    let last = traj.terminal();
    let matches = prescribed
        .iter()
        .enumerate()
        .map(|(n, &k)| {
            let nearest = computed_k
                .iter()
                .copied()
                .min_by(|a, b| (a - k).abs().total_cmp(&(b - k).abs()));
            let start = first.phi(n);
            ModeMatch {
                prescribed_k: k,
                nearest_k: nearest,
                relative_error: nearest.map(|v| (v - k).abs() / k),
                normalized_residual: if start != 0.0 {
                    (last.phi(n) / start).abs()
                } else {
                    f64::INFINITY
                },
            }
        })
        .collect();
    let orthogonality = orthogonality_check(&pairs, &profile)?;
    Ok(SpectralVerification {
        computed_k,
        matches,
        orthogonality,
        cone_apex_offset: CONE_APEX_OFFSET,
    })
}
