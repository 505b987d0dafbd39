//! Domain types and the pointwise functions of the controlled horn system.
//!
//! The state of an `N`-component oscillation regime is laid out as
//! `[D, phi_1, phi_1', phi_2, phi_2', ..., phi_N, phi_N']`, so mode `n`
//! (zero based) lives at indices `1 + 2n` and `2 + 2n`. The costate uses the
//! same layout.
//!
//! Every function here is total over positive diameters and fails with
//! [`Error::SingularGeometry`] otherwise.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::integrate::{quadrature, Grid};

/// Medium and duct constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Mass density (kg/m^3).
    pub rho0: f64,
    /// Sound speed (m/s).
    pub sound_speed: f64,
    /// Fundamental frequency (Hz).
    pub f0: f64,
    /// Duct length (m).
    pub length: f64,
}

impl PhysicalParams {
    pub fn new(rho0: f64, sound_speed: f64, f0: f64, length: f64) -> Result<Self> {
        let params = PhysicalParams {
            rho0,
            sound_speed,
            f0,
            length,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        for (field, value) in [
            ("physical.rho0", self.rho0),
            ("physical.sound_speed", self.sound_speed),
            ("physical.f0", self.f0),
            ("physical.length", self.length),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(
                    field,
                    format!("must be positive, got {value}"),
                ));
            }
        }
        Ok(())
    }

    /// Fundamental wave number `2 pi f0 / c` (1/m).
    pub fn k0(&self) -> f64 {
        2.0 * PI * self.f0 / self.sound_speed
    }

    pub fn wavelength(&self) -> f64 {
        self.sound_speed / self.f0
    }

    /// `pi rho0 / 8`, the prefactor of the energy density.
    pub fn energy_prefactor(&self) -> f64 {
        PI * self.rho0 / 8.0
    }
}

/// The harmonic set: integer multipliers of the fundamental wave number.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicSpec {
    multipliers: Vec<u32>,
    wave_numbers: Vec<f64>,
}

impl HarmonicSpec {
    /// Builds `k_n = j_n * k0` from strictly increasing multipliers `j_n >= 1`.
    pub fn new(multipliers: Vec<u32>, k0: f64) -> Result<Self> {
        if multipliers.is_empty() {
            return Err(Error::invalid(
                "harmonics.multipliers",
                "at least one harmonic is required",
            ));
        }
        if multipliers[0] < 1 {
            return Err(Error::invalid(
                "harmonics.multipliers",
                "multipliers must be at least 1",
            ));
        }
        if multipliers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "harmonics.multipliers",
                "multipliers must be strictly increasing",
            ));
        }
        if !(k0.is_finite() && k0 > 0.0) {
            return Err(Error::invalid(
                "harmonics.k0",
                format!("must be positive, got {k0}"),
            ));
        }
        let wave_numbers = multipliers.iter().map(|&j| f64::from(j) * k0).collect();
        Ok(HarmonicSpec {
            multipliers,
            wave_numbers,
        })
    }

    pub fn for_params(multipliers: Vec<u32>, params: &PhysicalParams) -> Result<Self> {
        Self::new(multipliers, params.k0())
    }

    pub fn multipliers(&self) -> &[u32] {
        &self.multipliers
    }

    pub fn wave_numbers(&self) -> &[f64] {
        &self.wave_numbers
    }

    /// Number of components `N`.
    pub fn len(&self) -> usize {
        self.multipliers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multipliers.is_empty()
    }

    pub fn k_max(&self) -> f64 {
        self.wave_numbers.iter().copied().fold(0.0, f64::max)
    }

    /// Length `2N + 1` of state and costate vectors.
    pub fn state_dim(&self) -> usize {
        2 * self.len() + 1
    }
}

/// Index of the modal potential of mode `n` (zero based).
#[inline]
pub fn phi_index(n: usize) -> usize {
    1 + 2 * n
}

/// Index of the modal potential derivative of mode `n` (zero based).
#[inline]
pub fn dphi_index(n: usize) -> usize {
    2 + 2 * n
}

macro_rules! layout_vector {
    ($name:ident, $first:ident, $pair_a:ident, $pair_b:ident) => {
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(Vec<f64>);

        impl $name {
            /// Wraps raw components; the length must be odd and at least 3.
            pub fn from_vec(values: Vec<f64>) -> Result<Self> {
                if values.len() < 3 || values.len() % 2 == 0 {
                    return Err(Error::invalid(
                        stringify!($name),
                        format!("length must be 2N+1 with N >= 1, got {}", values.len()),
                    ));
                }
                Ok($name(values))
            }

            pub fn zeros(n_modes: usize) -> Self {
                $name(vec![0.0; 2 * n_modes + 1])
            }

            pub fn n_modes(&self) -> usize {
                (self.0.len() - 1) / 2
            }

            pub fn $first(&self) -> f64 {
                self.0[0]
            }

            pub fn $pair_a(&self, n: usize) -> f64 {
                self.0[phi_index(n)]
            }

            pub fn $pair_b(&self, n: usize) -> f64 {
                self.0[dphi_index(n)]
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn as_mut_slice(&mut self) -> &mut [f64] {
                &mut self.0
            }

            pub fn into_vec(self) -> Vec<f64> {
                self.0
            }

            pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
                $name(values)
            }
        }
    };
}

layout_vector!(StateVector, diameter, phi, dphi);
layout_vector!(CostateVector, mu1, mu_phi, mu_dphi);

impl StateVector {
    /// Closed-end initial state: `D(0) = d0`, `phi_n(0) = phi0[n]`, `phi_n'(0) = 0`.
    pub fn closed_end(d0: f64, phi0: &[f64]) -> Self {
        let mut values = vec![0.0; 2 * phi0.len() + 1];
        values[0] = d0;
        for (n, &p) in phi0.iter().enumerate() {
            values[phi_index(n)] = p;
        }
        StateVector(values)
    }
}

/// Modal weights `c_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coefficients(pub Vec<f64>);

impl Coefficients {
    pub fn zeros(n: usize) -> Self {
        Coefficients(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Box on the diameter derivative plus the diameter floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    /// Lower bound on `D'`.
    pub d_lo: f64,
    /// Upper bound on `D'`.
    pub d_hi: f64,
    /// Diameter floor (m).
    pub floor: f64,
}

impl ControlBounds {
    pub fn new(d_lo: f64, d_hi: f64, floor: f64) -> Result<Self> {
        let bounds = ControlBounds { d_lo, d_hi, floor };
        bounds.validate()?;
        Ok(bounds)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_lo.is_finite() && self.d_hi.is_finite() && self.d_lo < self.d_hi) {
            return Err(Error::invalid(
                "bounds.d_lo",
                format!("need d_lo < d_hi, got [{}, {}]", self.d_lo, self.d_hi),
            ));
        }
        if !(self.floor.is_finite() && self.floor > 0.0) {
            return Err(Error::invalid(
                "bounds.floor",
                format!("must be positive, got {}", self.floor),
            ));
        }
        Ok(())
    }

    pub fn clamp(&self, u: f64) -> f64 {
        u.clamp(self.d_lo, self.d_hi)
    }
}

#[inline]
fn check_diameter(x1: f64) -> Result<()> {
    if x1 > 0.0 {
        Ok(())
    } else {
        Err(Error::SingularGeometry { diameter: x1 })
    }
}

fn check_dims(state: &[f64], harmonics: &HarmonicSpec) -> Result<()> {
    check_len("state vector", harmonics.state_dim(), state.len())
}

// Slice kernels used by the sweeps; callers have already checked dimensions.

pub(crate) fn webster_rhs_into(x: &[f64], u: f64, k: &[f64], out: &mut [f64]) -> Result<()> {
    let x1 = x[0];
    check_diameter(x1)?;
    out[0] = u;
    let ratio = 2.0 * u / x1;
    for (n, &kn) in k.iter().enumerate() {
        let p = x[phi_index(n)];
        let dp = x[dphi_index(n)];
        out[phi_index(n)] = dp;
        out[dphi_index(n)] = -ratio * dp - kn * kn * p;
    }
    Ok(())
}

/// `-d(mu . f)/dX`, i.e. the costate right-hand side without the running-cost forcing.
pub(crate) fn adjoint_transport_into(
    mu: &[f64],
    x: &[f64],
    u: f64,
    k: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let x1 = x[0];
    check_diameter(x1)?;
    let mut flux = 0.0;
    for n in 0..k.len() {
        flux += mu[dphi_index(n)] * x[dphi_index(n)];
    }
    out[0] = -2.0 * u / (x1 * x1) * flux;
    let ratio = 2.0 * u / x1;
    for (n, &kn) in k.iter().enumerate() {
        let m_p = mu[phi_index(n)];
        let m_dp = mu[dphi_index(n)];
        out[phi_index(n)] = kn * kn * m_dp;
        out[dphi_index(n)] = ratio * m_dp - m_p;
    }
    Ok(())
}

/// Adds `-dg/dX` scaled by `weight` to `out`, where `g` is the energy density.
pub(crate) fn add_energy_forcing(
    x: &[f64],
    c: &[f64],
    k: &[f64],
    prefactor: f64,
    weight: f64,
    out: &mut [f64],
) {
    let x1 = x[0];
    let half = 2.0 * prefactor; // pi rho0 / 4
    let mut sum = 0.0;
    for (n, &kn) in k.iter().enumerate() {
        let p = x[phi_index(n)];
        let dp = x[dphi_index(n)];
        let c2 = c[n] * c[n];
        sum += c2 * (dp * dp + kn * kn * p * p);
        out[phi_index(n)] -= weight * kn * kn * half * c2 * x1 * x1 * p;
        out[dphi_index(n)] -= weight * half * c2 * x1 * x1 * dp;
    }
    out[0] -= weight * half * x1 * sum;
}

pub(crate) fn energy_density(x: &[f64], c: &[f64], k: &[f64], prefactor: f64) -> f64 {
    let x1 = x[0];
    let mut sum = 0.0;
    for (n, &kn) in k.iter().enumerate() {
        let p = x[phi_index(n)];
        let dp = x[dphi_index(n)];
        sum += c[n] * c[n] * (dp * dp + kn * kn * p * p);
    }
    prefactor * x1 * x1 * sum
}

pub(crate) fn switching_kernel(x: &[f64], mu: &[f64], n_modes: usize) -> Result<f64> {
    let x1 = x[0];
    check_diameter(x1)?;
    let mut flux = 0.0;
    for n in 0..n_modes {
        flux += mu[dphi_index(n)] * x[dphi_index(n)];
    }
    Ok(mu[0] - 2.0 / x1 * flux)
}

/// State derivative of the controlled Webster system at one abscissa.
pub fn webster_rhs(state: &StateVector, u: f64, harmonics: &HarmonicSpec) -> Result<StateVector> {
    check_dims(state.as_slice(), harmonics)?;
    let mut out = vec![0.0; state.as_slice().len()];
    webster_rhs_into(state.as_slice(), u, harmonics.wave_numbers(), &mut out)?;
    Ok(StateVector(out))
}

/// Costate derivative `mu' = -dH/dX`, including the energy forcing.
pub fn costate_rhs(
    costate: &CostateVector,
    state: &StateVector,
    u: f64,
    coeffs: &Coefficients,
    harmonics: &HarmonicSpec,
    params: &PhysicalParams,
) -> Result<CostateVector> {
    check_dims(state.as_slice(), harmonics)?;
    check_dims(costate.as_slice(), harmonics)?;
    check_len("coefficients", harmonics.len(), coeffs.0.len())?;
    let k = harmonics.wave_numbers();
    let mut out = vec![0.0; state.as_slice().len()];
    adjoint_transport_into(costate.as_slice(), state.as_slice(), u, k, &mut out)?;
    add_energy_forcing(
        state.as_slice(),
        coeffs.as_slice(),
        k,
        params.energy_prefactor(),
        1.0,
        &mut out,
    );
    Ok(CostateVector(out))
}

/// Switching function `dH/dU = mu_1 - (2 / D) sum_n mu_{2n+1} phi_n'`.
pub fn switching_value(state: &StateVector, costate: &CostateVector) -> Result<f64> {
    check_len(
        "costate vector",
        state.as_slice().len(),
        costate.as_slice().len(),
    )?;
    switching_kernel(state.as_slice(), costate.as_slice(), state.n_modes())
}

/// Hamiltonian of the design problem. Assembled as `H(0) + u * dH/dU` so the
/// affine structure in the control holds in floating point.
pub fn hamiltonian(
    state: &StateVector,
    u: f64,
    coeffs: &Coefficients,
    costate: &CostateVector,
    harmonics: &HarmonicSpec,
    params: &PhysicalParams,
) -> Result<f64> {
    check_dims(state.as_slice(), harmonics)?;
    check_dims(costate.as_slice(), harmonics)?;
    check_len("coefficients", harmonics.len(), coeffs.0.len())?;
    let x = state.as_slice();
    let mu = costate.as_slice();
    let k = harmonics.wave_numbers();
    check_diameter(x[0])?;
    let mut base = energy_density(x, coeffs.as_slice(), k, params.energy_prefactor());
    for (n, &kn) in k.iter().enumerate() {
        base += mu[phi_index(n)] * x[dphi_index(n)] - mu[dphi_index(n)] * kn * kn * x[phi_index(n)];
    }
    let switching = switching_kernel(x, mu, k.len())?;
    Ok(base + u * switching)
}

/// Energy density `(pi rho0 / 8) D^2 sum_n c_n^2 (phi_n'^2 + k_n^2 phi_n^2)` (J/m).
pub fn energy_integrand(
    state: &StateVector,
    coeffs: &Coefficients,
    harmonics: &HarmonicSpec,
    params: &PhysicalParams,
) -> Result<f64> {
    check_dims(state.as_slice(), harmonics)?;
    check_len("coefficients", harmonics.len(), coeffs.0.len())?;
    check_diameter(state.diameter())?;
    Ok(energy_density(
        state.as_slice(),
        coeffs.as_slice(),
        harmonics.wave_numbers(),
        params.energy_prefactor(),
    ))
}

/// Plane-wave validity measure `(1/2) int k_max R'^2 dx` with `R' = D'/2`.
///
/// Values well below one keep the Webster model meaningful; see
/// [`VALIDITY_WARN_THRESHOLD`].
pub fn validity_functional(u_grid: &[f64], k_max: f64, grid: &Grid) -> Result<f64> {
    check_len("control grid", grid.len(), u_grid.len())?;
    let integrand: Vec<f64> = u_grid
        .iter()
        .map(|&u| {
            let r = 0.5 * u;
            k_max * r * r
        })
        .collect();
    Ok(0.5 * quadrature(&integrand, grid)?)
}

/// Validity values above this trigger a warning; the run is not failed.
pub const VALIDITY_WARN_THRESHOLD: f64 = 0.5;
