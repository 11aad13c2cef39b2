//! Dispatch of a configuration to its model and serialization of results.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::{num, 
    from_raw, ConfigErrors, ExperimentConfig, Geometry, Model, RawConfig, StateSpec,
};
use crate::abr::{abr_distribution, DetectionOptions};
use crate::domain::{
    DetectionDistribution, DetectionOutcome, DetectorProfile, PhysicalConstants, Side, SpatialGrid, WaveFunction,
};
use crate::grw::{first_detection_ensemble, run_grw_ensemble, CollapseEvent, GrwConfig, GrwMode};
use crate::limit::{convergence_study, ConvergenceTable, LimitSequence};
use crate::propagator::{BoundaryCondition, PropagatorConfig};
use crate::soft::imaginary_potential_distribution;

/// Failure of a run, split by exit status.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] crate::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<ConfigErrors> for RunError {
    fn from(e: ConfigErrors) -> Self {
        RunError::Config(e.to_string())
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Numerical(_) | RunError::Io(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Numerical(_) => "numerical",
            RunError::Io(_) => "io",
        }
    }

    /// Machine-readable error record.
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "status": "error",
            "kind": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Io(format!("{}: {e}", path.display()))
}

/// Inputs of a run, built from a configuration.
#[derive(Debug, Clone)]
pub struct Setup {
    pub grid: SpatialGrid,
    pub psi0: WaveFunction,
    pub profile: DetectorProfile,
    pub propagator: PropagatorConfig,
    pub options: DetectionOptions,
}

impl ExperimentConfig {
    fn consts(&self) -> crate::Result<PhysicalConstants> {
        PhysicalConstants::new(self.physics.hbar, self.physics.mass)
    }

    /// The grid, sized from the largest configured wavenumber when no point
    /// count is given.
    pub fn resolve_grid(&self) -> crate::Result<SpatialGrid> {
        let g = &self.grid;
        if let Some(points) = g.points {
            return SpatialGrid::new(g.x_min, g.x_max, points);
        }
        let mut k_max: f64 = 0.0;
        if let StateSpec::Gaussian { width, wavenumber, .. } = self.state {
            k_max = wavenumber.abs() + 3.0 / (2.0 * width);
        }
        for bc in [self.boundary.left, self.boundary.right] {
            if let Some(kappa) = bc.kappa() {
                k_max = k_max.max(kappa);
            }
        }
        if let Some(l) = &self.limit {
            k_max = k_max.max(l.kappa);
        }
        SpatialGrid::resolving(g.x_min, g.x_max, k_max, g.nodes_per_wavelength)
    }

    pub fn resolved_dt(&self) -> crate::Result<f64> {
        match self.time.dt {
            Some(dt) => Ok(dt),
            None => Ok(PropagatorConfig::default_dt(&self.resolve_grid()?, &self.consts()?)),
        }
    }

    pub fn setup(&self) -> Result<Setup, RunError> {
        let config_err = |e: crate::Error| RunError::Config(e.to_string());
        let grid = self.resolve_grid().map_err(config_err)?;
        let consts = self.consts().map_err(config_err)?;
        let psi0 = match &self.state {
            StateSpec::Gaussian { center, width, wavenumber } => {
                WaveFunction::gaussian_packet(grid, *center, *width, *wavenumber).map_err(config_err)?
            }
            StateSpec::File { path } => load_state(path, grid)?,
        };

        let d = &self.detector;
        let lo = d.region_start.unwrap_or(f64::NEG_INFINITY);
        let hi = d.region_end.unwrap_or(f64::INFINITY);
        let w = d.edge_width;
        let rate = grid.sample(|x| {
            if d.rate == 0.0 {
                0.0
            } else if w > 0.0 {
                let rise = if lo.is_finite() { 0.5 * (1.0 + ((x - lo) / w).tanh()) } else { 1.0 };
                let fall = if hi.is_finite() { 0.5 * (1.0 - ((x - hi) / w).tanh()) } else { 1.0 };
                d.rate * rise * fall
            } else if (lo..=hi).contains(&x) {
                d.rate
            } else {
                0.0
            }
        });
        let (b0, b1) = (d.barrier_start.unwrap_or(0.0), d.barrier_end.unwrap_or(0.0));
        let potential = grid.sample(|x| if d.barrier_height != 0.0 && (b0..=b1).contains(&x) { d.barrier_height } else { 0.0 });
        let mut profile = DetectorProfile::free(&grid)
            .with_rate(rate)
            .and_then(|p| p.with_potential(potential))
            .and_then(|p| p.with_lambda0(d.lambda0))
            .map_err(config_err)?;
        if let Some(sigma) = d.sigma {
            profile = profile.with_sigma(sigma).map_err(config_err)?;
        }

        let radial = |bc: BoundaryCondition| match (self.physics.geometry, bc) {
            (Geometry::Radial, BoundaryCondition::Absorbing { kappa }) => BoundaryCondition::RadialAbsorbing {
                kappa,
                radius: grid.x_max(),
            },
            _ => bc,
        };
        let propagator = PropagatorConfig::new(
            self.resolved_dt().map_err(config_err)?,
            self.time.t_max,
            radial(self.boundary.left),
            radial(self.boundary.right),
            consts,
        )
        .map_err(config_err)?;
        Ok(Setup {
            grid,
            psi0,
            profile,
            propagator,
            options: DetectionOptions {
                bins: self.time.bins,
                ..DetectionOptions::default()
            },
        })
    }

    /// Base name shared by every file of this run.
    pub fn file_stem(&self) -> String {
        format!("{}-{}-seed{}", self.model.as_str(), self.hash(), self.ensemble.seed)
    }
}

/// Reads a two-column (real, imaginary) node file and normalizes it.
pub fn load_state(path: &Path, grid: SpatialGrid) -> Result<WaveFunction, RunError> {
    let text = fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
    let mut values = Vec::with_capacity(grid.len());
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        let parsed: Option<Vec<f64>> = cols.iter().map(|c| c.parse().ok()).collect();
        match parsed.as_deref() {
            Some([re, im]) => values.push(Complex64::new(*re, *im)),
            _ => {
                return Err(RunError::Config(format!(
                    "{} line {}: expected two numbers",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    WaveFunction::new(grid, values)
        .and_then(WaveFunction::normalized)
        .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
}

/// Side of the region a bulk position belongs to.
fn side_of(grid: &SpatialGrid, x: f64) -> Side {
    if x < 0.5 * (grid.x_min() + grid.x_max()) {
        Side::Left
    } else {
        Side::Right
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleSummary {
    pub size: usize,
    pub detected: usize,
    /// Collapse counts per trajectory, `grw_constant` only.
    pub mean_events: Option<f64>,
    pub variance_events: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub model: &'static str,
    pub config_hash: String,
    pub seed: u64,
    pub detected_mass: f64,
    pub mass_left: f64,
    pub mass_right: f64,
    pub p_never: f64,
    pub truncation_remainder: f64,
    pub mean_detection_time: Option<f64>,
    pub ensemble: Option<EnsembleSummary>,
    pub limit: Option<LimitSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitSummary {
    pub reference_detected_mass: f64,
    /// TV distance of the thinnest resolved layer.
    pub finest_tv_distance: Option<f64>,
    pub tv_target: f64,
    pub target_met: bool,
    pub tv_decreasing: bool,
}

/// One row of the outcome CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeRow {
    pub trajectory: usize,
    pub outcome: DetectionOutcome,
}

/// Everything a model produces before it is written out.
#[derive(Debug, Clone)]
pub struct Results {
    pub distribution: DetectionDistribution,
    pub summary: Summary,
    pub outcomes: Option<Vec<OutcomeRow>>,
    pub trajectories: Option<Vec<Vec<CollapseEvent>>>,
    pub limit: Option<ConvergenceTable>,
}

/// Paths written by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub manifest: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Summary,
}

fn empirical(outcomes: &[OutcomeRow], grid: &SpatialGrid, t_max: f64, bins: usize) -> crate::Result<DetectionDistribution> {
    let mut dist = DetectionDistribution::uniform(t_max, bins)?;
    let w = 1.0 / outcomes.len() as f64;
    for o in outcomes {
        match o.outcome {
            DetectionOutcome::Detected { time, position, .. } => dist.deposit_at(side_of(grid, position), time, w),
            DetectionOutcome::NeverDetected => dist.p_never += w,
        }
    }
    Ok(dist)
}

/// Chunk size for constant-rate ensembles, bounding the number of final
/// states held at once.
const GRW_CHUNK: usize = 1024;

/// Runs the configured model without writing anything.
pub fn compute(config: &ExperimentConfig) -> Result<Results, RunError> {
    let s = config.setup()?;
    let mut outcomes = None;
    let mut trajectories = None;
    let mut limit = None;
    let mut ensemble = None;
    let distribution = match config.model {
        Model::Abr => abr_distribution(&s.psi0, &s.profile, &s.propagator, &s.options)?,
        Model::Soft => {
            let rate = s.profile.rate();
            let total: f64 = rate.iter().sum();
            let centroid = s.grid.nodes().zip(rate).map(|(x, r)| x * r).sum::<f64>() / total;
            imaginary_potential_distribution(&s.psi0, &s.profile, &s.propagator, &s.options, side_of(&s.grid, centroid))?
        }
        Model::GrwConstant => {
            let n = config.ensemble.size.unwrap_or(1);
            let cfg = GrwConfig {
                propagator: s.propagator,
                mode: GrwMode::ConstantRate,
                jump: config.detector.jump,
            };
            let mut events: Vec<Vec<CollapseEvent>> = Vec::with_capacity(n);
            for start in (0..n).step_by(GRW_CHUNK) {
                let len = GRW_CHUNK.min(n - start);
                let base = config.ensemble.seed.wrapping_add(start as u64);
                events.extend(run_grw_ensemble(&s.psi0, &s.profile, &cfg, base, len)?.into_iter().map(|r| r.events));
            }
            let rows: Vec<OutcomeRow> = events
                .iter()
                .enumerate()
                .map(|(trajectory, ev)| OutcomeRow {
                    trajectory,
                    outcome: ev.first().map_or(DetectionOutcome::NeverDetected, |e| DetectionOutcome::Detected {
                        time: e.time,
                        position: e.center,
                        side: Side::Bulk,
                    }),
                })
                .collect();
            let counts: Vec<f64> = events.iter().map(|e| e.len() as f64).collect();
            let mean = counts.iter().sum::<f64>() / n as f64;
            let var = if n > 1 { counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
            ensemble = Some(EnsembleSummary {
                size: n,
                detected: rows.iter().filter(|r| r.outcome.is_detected()).count(),
                mean_events: Some(mean),
                variance_events: Some(var),
            });
            let dist = empirical(&rows, &s.grid, s.propagator.t_max, s.options.bins)?;
            outcomes = Some(rows);
            if config.output.trajectories {
                trajectories = Some(events);
            }
            dist
        }
        Model::GrwFirstDetection => {
            let n = config.ensemble.size.unwrap_or(1);
            let rows: Vec<OutcomeRow> = first_detection_ensemble(&s.psi0, &s.profile, &s.propagator, config.ensemble.seed, n)?
                .into_iter()
                .enumerate()
                .map(|(trajectory, outcome)| OutcomeRow { trajectory, outcome })
                .collect();
            ensemble = Some(EnsembleSummary {
                size: n,
                detected: rows.iter().filter(|r| r.outcome.is_detected()).count(),
                mean_events: None,
                variance_events: None,
            });
            let dist = empirical(&rows, &s.grid, s.propagator.t_max, s.options.bins)?;
            outcomes = Some(rows);
            dist
        }
        Model::LimitStudy => {
            let l = config.limit.as_ref().ok_or_else(|| RunError::Config("limit section missing".into()))?;
            let seq = LimitSequence::halving(l.kappa, l.l0, l.levels, s.grid.dx(), &s.propagator.consts, l.outer)
                .map_err(|e| RunError::Config(format!("limit: {e}")))?;
            let abr_cfg = PropagatorConfig {
                bc_right: BoundaryCondition::Absorbing { kappa: l.kappa },
                ..s.propagator
            };
            let reference = abr_distribution(&s.psi0, &s.profile, &abr_cfg, &s.options)?;
            limit = Some(convergence_study(&s.psi0, &s.profile, &seq, &s.propagator, &s.options)?);
            reference
        }
    };
    let mass_left: f64 = distribution.mass_left.iter().sum();
    let mass_right: f64 = distribution.mass_right.iter().sum();
    let summary = Summary {
        model: config.model.as_str(),
        config_hash: config.hash(),
        seed: config.ensemble.seed,
        detected_mass: distribution.detected_mass(),
        mass_left,
        mass_right,
        p_never: distribution.p_never,
        truncation_remainder: distribution.truncation_remainder,
        mean_detection_time: distribution.mean_detection_time().ok(),
        ensemble,
        limit: limit.as_ref().zip(config.limit.as_ref()).map(|(t, spec)| {
            let finest = t.rows.iter().rev().find(|r| r.resolved).map(|r| r.tv_distance);
            LimitSummary {
                reference_detected_mass: t.reference_detected_mass,
                finest_tv_distance: finest,
                tv_target: spec.tv_target,
                target_met: finest.is_some_and(|tv| tv < spec.tv_target),
                tv_decreasing: t.rows.iter().all(|r| r.tv_decreasing != Some(false)),
            }
        }),
    };
    Ok(Results {
        distribution,
        summary,
        outcomes,
        trajectories,
        limit,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, RunError> {
    csv::Writer::from_path(path).map_err(|e| io_err(path, e))
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), RunError> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), num)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Writes the results of `config` into its output directory: a manifest
/// first, then the distribution CSV, the summary JSON and, depending on the
/// model, outcome, trajectory and convergence-table CSVs. On failure an
/// error record is written instead of results.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifacts, RunError> {
    let dir = &config.output.dir;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let stem = config.file_stem();
    let start = Instant::now();
    let results = match compute(config) {
        Ok(r) => r,
        Err(e) => {
            let path = dir.join(format!("{stem}.error.json"));
            write_json(&path, &e.to_json())?;
            return Err(e);
        }
    };
    let wall = start.elapsed().as_secs_f64();

    let path = |suffix: &str| dir.join(format!("{stem}.{suffix}"));
    let mut files = vec![path("distribution.csv"), path("summary.json")];
    if results.outcomes.is_some() {
        files.push(path("outcomes.csv"));
    }
    if results.trajectories.is_some() {
        files.push(path("trajectories.csv"));
    }
    if results.limit.is_some() {
        files.push(path("limit.csv"));
    }

    let grid = config.resolve_grid()?;
    let dt = config.resolved_dt()?;
    let manifest = path("manifest.json");
    write_json(
        &manifest,
        &json!({
            "version": env!("CARGO_PKG_VERSION"),
            "model": config.model.as_str(),
            "config_hash": config.hash(),
            "seed": config.ensemble.seed,
            "config": config,
            "config_text": config.to_text(),
            "resolved": {
                "points": grid.len(),
                "dx": grid.dx(),
                "dt": dt,
            },
            "wall_time_seconds": wall,
            "files": files.iter().map(|f| f.file_name().map(|n| n.to_string_lossy().into_owned())).collect::<Vec<_>>(),
        }),
    )?;

    let d = &results.distribution;
    write_rows(
        &files[0],
        &["t_bin_start", "t_bin_end", "mass_left", "mass_right"],
        (0..d.bins()).map(|i| {
            vec![
                num(d.time_edges[i]),
                num(d.time_edges[i + 1]),
                num(d.mass_left[i]),
                num(d.mass_right[i]),
            ]
        }),
    )?;
    write_json(&files[1], &results.summary)?;

    if let Some(rows) = &results.outcomes {
        write_rows(
            &path("outcomes.csv"),
            &["trajectory", "seed", "T", "X", "side"],
            rows.iter().map(|r| {
                let seed = config.ensemble.seed.wrapping_add(r.trajectory as u64).to_string();
                let (t, x, side) = match r.outcome {
                    DetectionOutcome::Detected { time, position, .. } => (
                        num(time),
                        num(position),
                        side_of(&grid, position).as_str().to_string(),
                    ),
                    DetectionOutcome::NeverDetected => (String::new(), String::new(), "never".into()),
                };
                vec![r.trajectory.to_string(), seed, t, x, side]
            }),
        )?;
    }
    if let Some(traj) = &results.trajectories {
        write_rows(
            &path("trajectories.csv"),
            &["trajectory", "event", "T", "X", "pre_norm", "total_rate"],
            traj.iter().enumerate().flat_map(|(i, ev)| {
                ev.iter().enumerate().map(move |(j, e)| {
                    vec![
                        i.to_string(),
                        j.to_string(),
                        num(e.time),
                        num(e.center),
                        num(e.pre_norm),
                        num(e.total_rate),
                    ]
                })
            }),
        )?;
    }
    if let Some(table) = &results.limit {
        write_rows(
            &path("limit.csv"),
            &[
                "level",
                "thickness",
                "rate",
                "product",
                "cells",
                "resolved",
                "tv_distance",
                "ks_distance",
                "detected_mass_error",
                "tv_decreasing",
            ],
            table.rows.iter().map(|r| {
                let finite = |x: f64| if x.is_finite() { Some(x) } else { None };
                vec![
                    r.level.to_string(),
                    num(r.thickness),
                    num(r.rate),
                    num(r.rate * r.thickness),
                    r.cells.to_string(),
                    r.resolved.to_string(),
                    opt(finite(r.tv_distance)),
                    opt(finite(r.ks_distance)),
                    opt(finite(r.detected_mass_error)),
                    r.tv_decreasing.map_or(String::new(), |b| b.to_string()),
                ]
            }),
        )?;
    }
    Ok(RunArtifacts {
        manifest,
        files,
        summary: results.summary,
    })
}

/// Parses `text`, then validates one configuration per value of `key`.
/// Nothing runs unless every sweep point is valid; the points then run
/// concurrently and each writes its own files.
pub fn sweep_configs(text: &str, key: &str, values: &[String]) -> Result<Vec<ExperimentConfig>, ConfigErrors> {
    let mut configs = Vec::with_capacity(values.len());
    let mut errors = Vec::new();
    for (i, v) in values.iter().enumerate() {
        if values[..i].contains(v) {
            errors.push(super::config::ConfigError {
                line: None,
                key: Some(key.into()),
                message: format!("sweep value `{v}` given twice"),
            });
            continue;
        }
        let (mut raw, tokenize) = RawConfig::parse(text);
        if let Err(e) = raw.set(key, v) {
            errors.push(e);
            break;
        }
        match from_raw(&raw, tokenize) {
            Ok(c) => configs.push(c),
            Err(ConfigErrors(es)) => errors.extend(es.into_iter().map(|mut e| {
                e.message = format!("{key} = {v}: {}", e.message);
                e
            })),
        }
    }
    if errors.is_empty() {
        Ok(configs)
    } else {
        errors.dedup();
        Err(ConfigErrors(errors))
    }
}

pub fn run_sweep(configs: &[ExperimentConfig]) -> Vec<Result<RunArtifacts, RunError>> {
    configs.par_iter().map(run_experiment).collect()
}
