//! Run configuration: a TOML file with one table per concern.
//!
//! ```toml
//! [physical]
//! rho0 = 1.0
//! sound_speed = 340.0
//! f0 = 440.0
//! length = 0.772
//!
//! [harmonics]
//! multipliers = [1, 2]
//!
//! [bounds]
//! d_lo = -0.2
//! d_hi = 0.2
//! floor = 0.001
//!
//! [boundary]
//! d0 = 0.02
//!
//! [grid]
//! m = 513
//!
//! [optimize]
//! max_iters = 5000
//! tol = 1e-5
//! restarts = 3
//! seed = 0
//!
//! [output]
//! dir = "hornopt-out"
//! ```
//!
//! Every key is optional. `physical.length` defaults to one wavelength and
//! `optimize.penalty_w` to [`default_penalty_weight`].

use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::DEFAULT_NODES;
use crate::model::{ControlBounds, HarmonicSpec, PhysicalParams};
use crate::optimize::{default_penalty_weight, OptConfig, Problem};

pub const DEFAULT_RHO0: f64 = 1.0;
pub const DEFAULT_SOUND_SPEED: f64 = 340.0;
pub const DEFAULT_F0: f64 = 440.0;
pub const DEFAULT_MULTIPLIERS: [u32; 2] = [1, 2];
pub const DEFAULT_D_LO: f64 = -0.2;
pub const DEFAULT_D_HI: f64 = 0.2;
pub const DEFAULT_FLOOR: f64 = 1e-3;
pub const DEFAULT_D0: f64 = 0.02;
pub const DEFAULT_OUTPUT_DIR: &str = "hornopt-out";

const PRESETS: [(&str, &str); 3] = [
    ("paper_n2", include_str!("../../presets/paper_n2.toml")),
    ("paper_n5", include_str!("../../presets/paper_n5.toml")),
    ("paper_n10", include_str!("../../presets/paper_n10.toml")),
];

/// Optimizer settings as they appear in the config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptSettings {
    pub max_iters: usize,
    pub tol: f64,
    pub penalty_w: f64,
    pub restarts: usize,
    pub seed: u64,
}

/// A fully resolved and validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub params: PhysicalParams,
    pub harmonics: HarmonicSpec,
    pub bounds: ControlBounds,
    pub d0: f64,
    pub grid_m: usize,
    pub opt: OptSettings,
    pub output_dir: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    physical: RawPhysical,
    #[serde(default)]
    harmonics: RawHarmonics,
    #[serde(default)]
    bounds: RawBounds,
    #[serde(default)]
    boundary: RawBoundary,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    optimize: RawOptimize,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhysical {
    rho0: Option<f64>,
    sound_speed: Option<f64>,
    f0: Option<f64>,
    length: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHarmonics {
    multipliers: Option<Vec<u32>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    d_lo: Option<f64>,
    d_hi: Option<f64>,
    floor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBoundary {
    d0: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    m: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptimize {
    max_iters: Option<usize>,
    tol: Option<f64>,
    penalty_w: Option<f64>,
    restarts: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

/// Collects the names of fields that fell back to a default.
struct Defaults(Vec<String>);

impl Defaults {
    fn take<T>(&mut self, name: &str, value: Option<T>, default: impl FnOnce() -> T) -> T {
        value.unwrap_or_else(|| {
            self.0.push(name.to_string());
            default()
        })
    }
}

/// Serializable mirror of [`ProblemConfig`] with every field present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub physical: PhysicalParams,
    pub harmonics: HarmonicsEcho,
    pub bounds: ControlBounds,
    pub boundary: BoundaryEcho,
    pub grid: GridEcho,
    pub optimize: OptSettings,
    pub output: OutputEcho,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicsEcho {
    pub multipliers: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEcho {
    pub d0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridEcho {
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEcho {
    pub dir: PathBuf,
}

impl ProblemConfig {
    /// Parses and validates config text. Also returns the fields that were
    /// filled with defaults.
    pub fn parse(text: &str) -> Result<(Self, Vec<String>)> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let mut defaults = Defaults(Vec::new());

        let rho0 = defaults.take("physical.rho0", raw.physical.rho0, || DEFAULT_RHO0);
        let sound_speed = defaults.take("physical.sound_speed", raw.physical.sound_speed, || {
            DEFAULT_SOUND_SPEED
        });
        let f0 = defaults.take("physical.f0", raw.physical.f0, || DEFAULT_F0);
        let length = defaults.take("physical.length", raw.physical.length, || sound_speed / f0);
        let params = PhysicalParams::new(rho0, sound_speed, f0, length)?;

        let multipliers = defaults.take("harmonics.multipliers", raw.harmonics.multipliers, || {
            DEFAULT_MULTIPLIERS.to_vec()
        });
        let harmonics = HarmonicSpec::for_params(multipliers, &params)?;

        let d_lo = defaults.take("bounds.d_lo", raw.bounds.d_lo, || DEFAULT_D_LO);
        let d_hi = defaults.take("bounds.d_hi", raw.bounds.d_hi, || DEFAULT_D_HI);
        let floor = defaults.take("bounds.floor", raw.bounds.floor, || DEFAULT_FLOOR);
        let bounds = ControlBounds::new(d_lo, d_hi, floor)?;

        let d0 = defaults.take("boundary.d0", raw.boundary.d0, || DEFAULT_D0);
        let grid_m = defaults.take("grid.m", raw.grid.m, || DEFAULT_NODES);

        let base = OptConfig::default();
        let o = raw.optimize;
        let opt = OptSettings {
            max_iters: defaults.take("optimize.max_iters", o.max_iters, || base.max_iters),
            tol: defaults.take("optimize.tol", o.tol, || base.tol),
            penalty_w: defaults.take("optimize.penalty_w", o.penalty_w, || {
                default_penalty_weight(&params, &harmonics, d0)
            }),
            restarts: defaults.take("optimize.restarts", o.restarts, || base.restarts),
            seed: defaults.take("optimize.seed", o.seed, || base.seed),
        };
        let output_dir = defaults.take("output.dir", raw.output.dir, || {
            PathBuf::from(DEFAULT_OUTPUT_DIR)
        });

        let config = ProblemConfig {
            params,
            harmonics,
            bounds,
            d0,
            grid_m,
            opt,
            output_dir,
        };
        config.validate()?;
        Ok((config, defaults.0))
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.bounds.validate()?;
        if self.grid_m < 3 {
            return Err(Error::invalid(
                "grid.m",
                format!("need at least 3 nodes, got {}", self.grid_m),
            ));
        }
        if !(self.d0.is_finite() && self.d0 >= self.bounds.floor) {
            return Err(Error::invalid(
                "boundary.d0",
                format!(
                    "must be at least bounds.floor = {}, got {}",
                    self.bounds.floor, self.d0
                ),
            ));
        }
        if !(self.opt.tol.is_finite() && self.opt.tol > 0.0) {
            return Err(Error::invalid("optimize.tol", "must be positive"));
        }
        if !(self.opt.penalty_w.is_finite() && self.opt.penalty_w >= 0.0) {
            return Err(Error::invalid("optimize.penalty_w", "must be non-negative"));
        }
        if self.opt.restarts == 0 {
            return Err(Error::invalid(
                "optimize.restarts",
                "need at least one restart",
            ));
        }
        // TOML integers are signed.
        if i64::try_from(self.opt.seed).is_err() {
            return Err(Error::invalid(
                "optimize.seed",
                format!("must be at most {}, got {}", i64::MAX, self.opt.seed),
            ));
        }
        Ok(())
    }

    /// One of the shipped presets: `paper_n2`, `paper_n5`, `paper_n10`.
    pub fn preset(name: &str) -> Result<Self> {
        let text = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| Error::invalid("preset", format!("unknown preset {name}")))?;
        Ok(Self::parse(text)?.0)
    }

    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(n, _)| *n)
    }

    pub fn problem(&self) -> Result<Problem> {
        Problem::new(
            self.params,
            self.harmonics.clone(),
            self.bounds,
            self.d0,
            self.grid_m,
            Some(self.opt.penalty_w),
        )
    }

    pub fn opt_config(&self) -> OptConfig {
        OptConfig {
            max_iters: self.opt.max_iters,
            tol: self.opt.tol,
            restarts: self.opt.restarts,
            seed: self.opt.seed,
        }
    }

    pub fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            physical: self.params,
            harmonics: HarmonicsEcho {
                multipliers: self.harmonics.multipliers().to_vec(),
            },
            bounds: self.bounds,
            boundary: BoundaryEcho { d0: self.d0 },
            grid: GridEcho { m: self.grid_m },
            optimize: self.opt,
            output: OutputEcho {
                dir: self.output_dir.clone(),
            },
        }
    }

    /// Writes every field explicitly; [`ProblemConfig::parse`] reads it back unchanged.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(&self.echo()).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Reads and validates a config file, warning about every defaulted field.
pub fn load_config(path: &Path) -> Result<ProblemConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (config, defaulted) = ProblemConfig::parse(&text)?;
    if !defaulted.is_empty() {
        warn!(
            "{}: using defaults for {}",
            path.display(),
            defaulted.join(", ")
        );
    }
    Ok(config)
}
