//! Files written by `hornopt run`: CSV data, SVG plots and a JSON report.

use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use super::config::{ConfigEcho, ProblemConfig};
use super::svg::{LinePlot, Reference, Series};
use crate::error::{Error, Result};
use crate::integrate::Grid;
use crate::model::VALIDITY_WARN_THRESHOLD;
use crate::optimize::{ArcReport, DesignResult, ObjectiveReport, RestartSummary, StopReason};
use crate::spectral::SpectralVerification;

pub const DUCT_CSV: &str = "duct.csv";
pub const MODES_CSV: &str = "modes.csv";
pub const REPORT_JSON: &str = "report.json";
pub const DUCT_SVG: &str = "duct.svg";
pub const DPRIME_SVG: &str = "dprime.svg";
pub const MODES_SVG: &str = "modes.svg";

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub objective: ObjectiveReport,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub projected_gradient: f64,
    pub seed: u64,
    pub restart: usize,
    pub restarts: Vec<RestartSummary>,
    pub validity: f64,
    pub validity_warning: bool,
    pub grid_m: usize,
    pub wave_numbers: Vec<f64>,
    /// Modal weights of the returned design.
    pub c: Vec<f64>,
    /// Closed-end modal values; `modes.csv` is divided by these.
    pub phi0: Vec<f64>,
    pub arcs: ArcReport,
    pub spectral: Option<SpectralVerification>,
    pub history: Vec<f64>,
    pub config: ConfigEcho,
}

impl RunReport {
    pub fn new(
        result: &DesignResult,
        config: &ProblemConfig,
        spectral: Option<SpectralVerification>,
    ) -> Self {
        RunReport {
            objective: result.report.clone(),
            converged: result.converged,
            stop_reason: result.stop_reason,
            iterations: result.iterations,
            projected_gradient: result.projected_gradient,
            seed: result.seed,
            restart: result.restart,
            restarts: result.restarts.clone(),
            validity: result.validity,
            validity_warning: result.validity > VALIDITY_WARN_THRESHOLD,
            grid_m: result.trajectory.grid.len(),
            wave_numbers: config.harmonics.wave_numbers().to_vec(),
            c: result.decision.c.clone(),
            phi0: result.decision.phi0.clone(),
            arcs: result.arcs.clone(),
            spectral,
            history: result.history.clone(),
            config: config.echo(),
        }
    }
}

/// Paths of everything [`emit_artifacts`] wrote.
#[derive(Debug, Clone)]
pub struct ArtifactSet {
    pub duct_csv: PathBuf,
    pub modes_csv: PathBuf,
    pub report_json: PathBuf,
    pub duct_svg: PathBuf,
    pub dprime_svg: PathBuf,
    pub modes_svg: PathBuf,
}

/// Shortest round-trip text, with `-0` written as `0`.
fn fmt(v: f64) -> String {
    format!("{}", v + 0.0)
}

fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let io = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(io)?;
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row.into_iter().map(fmt)).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Mode shapes divided by their closed-end value. Modes that start at zero
/// come back as zero columns.
pub fn normalized_modes(result: &DesignResult) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let traj = &result.trajectory;
    let n_modes = result.decision.phi0.len();
    let mut phis = Vec::with_capacity(n_modes);
    let mut dphis = Vec::with_capacity(n_modes);
    for n in 0..n_modes {
        let start = traj.samples[0].phi(n);
        if start == 0.0 {
            warn!("mode {} vanishes at x = 0, writing zero columns", n + 1);
            phis.push(vec![0.0; traj.samples.len()]);
            dphis.push(vec![0.0; traj.samples.len()]);
        } else {
            phis.push(traj.mode(n).iter().map(|v| v / start).collect());
            dphis.push(traj.mode_derivative(n).iter().map(|v| v / start).collect());
        }
    }
    (phis, dphis)
}

/// Writes the CSV, SVG and JSON artifacts for `result` into `dir`.
pub fn emit_artifacts(
    result: &DesignResult,
    config: &ProblemConfig,
    spectral: Option<SpectralVerification>,
    dir: &Path,
) -> Result<ArtifactSet> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let grid: &Grid = &result.trajectory.grid;
    let xs = grid.nodes();
    let diam = result.trajectory.diameters();
    let u = &result.decision.u;
    let n_modes = result.decision.phi0.len();
    if result.decision.c.iter().all(|&c| c == 0.0) {
        warn!("all modal weights are zero, the design carries no energy");
    }

    let set = ArtifactSet {
        duct_csv: dir.join(DUCT_CSV),
        modes_csv: dir.join(MODES_CSV),
        report_json: dir.join(REPORT_JSON),
        duct_svg: dir.join(DUCT_SVG),
        dprime_svg: dir.join(DPRIME_SVG),
        modes_svg: dir.join(MODES_SVG),
    };

    write_csv(
        &set.duct_csv,
        &["x".into(), "D".into(), "Dprime".into()],
        (0..xs.len()).map(|i| vec![xs[i], diam[i], u[i]]),
    )?;

    let (phis, dphis) = normalized_modes(result);
    let mut header = vec!["x".to_string()];
    header.extend((1..=n_modes).map(|n| format!("phi_{n}")));
    header.extend((1..=n_modes).map(|n| format!("dphi_{n}")));
    write_csv(
        &set.modes_csv,
        &header,
        (0..xs.len()).map(|i| {
            let mut row = vec![xs[i]];
            row.extend(phis.iter().map(|p| p[i]));
            row.extend(dphis.iter().map(|p| p[i]));
            row
        }),
    )?;

    let report = RunReport::new(result, config, spectral);
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Parse(e.to_string()))?;
    write_text(&set.report_json, &(json + "\n"))?;

    let duct = LinePlot {
        title: "Duct shape".into(),
        x_label: "x (m)".into(),
        y_label: "D (m)".into(),
        series: vec![Series {
            label: "D".into(),
            xs: &xs,
            ys: &diam,
        }],
        references: vec![],
    };
    write_text(&set.duct_svg, &duct.render())?;

    let b = &config.bounds;
    let dprime = LinePlot {
        title: "Diameter derivative".into(),
        x_label: "x (m)".into(),
        y_label: "D'".into(),
        series: vec![Series {
            label: "D'".into(),
            xs: &xs,
            ys: u,
        }],
        references: vec![
            Reference {
                label: format!("D1 = {}", b.d_lo),
                y: b.d_lo,
            },
            Reference {
                label: format!("D2 = {}", b.d_hi),
                y: b.d_hi,
            },
        ],
    };
    write_text(&set.dprime_svg, &dprime.render())?;

    let modes = LinePlot {
        title: format!("Eigenfunctions, {n_modes} components"),
        x_label: "x (m)".into(),
        y_label: "phi / phi(0)".into(),
        series: phis
            .iter()
            .enumerate()
            .map(|(n, p)| Series {
                label: format!("phi_{}", n + 1),
                xs: &xs,
                ys: p,
            })
            .collect(),
        references: vec![],
    };
    write_text(&set.modes_svg, &modes.render())?;

    Ok(set)
}

/// Reads the `x` and `D` columns of a `duct.csv`.
pub fn read_duct_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let parse = |e: csv::Error| Error::Parse(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    })?;
    let headers = r.headers().map_err(parse)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Parse(format!("{}: missing column {name}", path.display())))
    };
    let (ix, id) = (col("x")?, col("D")?);
    let mut xs = Vec::new();
    let mut ds = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(parse)?;
        let field = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| {
                    Error::Parse(format!(
                        "{}: bad number on row {}",
                        path.display(),
                        line + 2
                    ))
                })
        };
        xs.push(field(ix)?);
        ds.push(field(id)?);
    }
    Ok((xs, ds))
}
