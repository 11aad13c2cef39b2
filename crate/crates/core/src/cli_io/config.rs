//! The experiment configuration format.
//!
//! A configuration is a list of `key = value` lines grouped by `[section]`
//! headers; `model` sits before the first header. `#` starts a comment,
//! strings may be double-quoted. Every key is listed in [`KEYS`].
//!
//! ```text
//! model = abr
//!
//! [grid]
//! x_min = -60
//! x_max = 0
//! points = 2401
//!
//! [state]
//! center = -20
//! width = 3
//! wavenumber = 2
//!
//! [time]
//! t_max = 35
//!
//! [boundary]
//! right = absorbing
//! right_kappa = 2
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::grw::JumpConvention;
use crate::limit::OuterWall;
use crate::propagator::BoundaryCondition;

/// Every recognised key, as `section.key`.
pub const KEYS: &[&str] = &[
    "model",
    "grid.x_min",
    "grid.x_max",
    "grid.points",
    "grid.nodes_per_wavelength",
    "state.center",
    "state.width",
    "state.wavenumber",
    "state.file",
    "physics.hbar",
    "physics.mass",
    "physics.geometry",
    "time.dt",
    "time.t_max",
    "time.bins",
    "boundary.left",
    "boundary.left_kappa",
    "boundary.left_alpha",
    "boundary.right",
    "boundary.right_kappa",
    "boundary.right_alpha",
    "detector.rate",
    "detector.region_start",
    "detector.region_end",
    "detector.edge_width",
    "detector.barrier_height",
    "detector.barrier_start",
    "detector.barrier_end",
    "detector.sigma",
    "detector.lambda0",
    "detector.jump",
    "limit.kappa",
    "limit.l0",
    "limit.levels",
    "limit.outer",
    "limit.outer_alpha",
    "limit.tv_target",
    "ensemble.size",
    "ensemble.seed",
    "output.dir",
    "output.trajectories",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "{key}: ")?;
        }
        f.write_str(&self.message)
    }
}

/// All problems found in a configuration.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Abr,
    Soft,
    GrwConstant,
    GrwFirstDetection,
    LimitStudy,
}

impl Model {
    pub fn as_str(self) -> &'static str {
        match self {
            Model::Abr => "abr",
            Model::Soft => "soft",
            Model::GrwConstant => "grw_constant",
            Model::GrwFirstDetection => "grw_first_detection",
            Model::LimitStudy => "limit_study",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Model::GrwConstant | Model::GrwFirstDetection)
    }

    fn parse(s: &str) -> Option<Self> {
        [Model::Abr, Model::Soft, Model::GrwConstant, Model::GrwFirstDetection, Model::LimitStudy]
            .into_iter()
            .find(|m| m.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    #[default]
    Line,
    /// `u(r) = r ψ(r)` on `[0, R]`; the grid coordinate is the radius.
    Radial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    /// When absent the grid is sized from the fastest configured momentum.
    pub points: Option<usize>,
    pub nodes_per_wavelength: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateSpec {
    Gaussian { center: f64, width: f64, wavenumber: f64 },
    /// Two columns (real, imaginary) per grid node.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysicsSpec {
    pub hbar: f64,
    pub mass: f64,
    pub geometry: Geometry,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeSpec {
    /// Defaults to `dx² m / ħ`.
    pub dt: Option<f64>,
    pub t_max: f64,
    pub bins: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundarySpec {
    pub left: BoundaryCondition,
    pub right: BoundaryCondition,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectorSpec {
    /// Soft-detector rate inside the region.
    pub rate: f64,
    pub region_start: Option<f64>,
    pub region_end: Option<f64>,
    /// Zero gives a sharp region; otherwise tanh edges of this width.
    pub edge_width: f64,
    pub barrier_height: f64,
    pub barrier_start: Option<f64>,
    pub barrier_end: Option<f64>,
    /// Defaults to five grid spacings.
    pub sigma: Option<f64>,
    pub lambda0: f64,
    pub jump: JumpConvention,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitSpec {
    pub kappa: f64,
    pub l0: f64,
    pub levels: usize,
    pub outer: OuterWall,
    /// TV distance the finest resolved layer should get below.
    pub tv_target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnsembleSpec {
    pub size: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Also dump every collapse of every trajectory (`grw_constant`).
    pub trajectories: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub model: Model,
    pub grid: GridSpec,
    pub state: StateSpec,
    pub physics: PhysicsSpec,
    pub time: TimeSpec,
    pub boundary: BoundarySpec,
    pub detector: DetectorSpec,
    pub limit: Option<LimitSpec>,
    pub ensemble: EnsembleSpec,
    pub output: OutputSpec,
}

struct Entry {
    value: String,
    line: usize,
}

/// Key–value pairs of a configuration before typing.
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
}

impl RawConfig {
    /// Tokenizes `text`, reporting malformed lines, unknown keys and
    /// duplicates.
    pub fn parse(text: &str) -> (Self, Vec<ConfigError>) {
        let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
        let mut errors = Vec::new();
        let mut section = String::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let content = strip_comment(raw_line).trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                match rest.strip_suffix(']') {
                    Some(name) if !name.trim().is_empty() => section = name.trim().to_string(),
                    _ => errors.push(ConfigError {
                        line: Some(line),
                        key: None,
                        message: format!("malformed section header `{content}`"),
                    }),
                }
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                errors.push(ConfigError {
                    line: Some(line),
                    key: None,
                    message: format!("expected `key = value`, got `{content}`"),
                });
                continue;
            };
            let key = if section.is_empty() {
                k.trim().to_string()
            } else {
                format!("{section}.{}", k.trim())
            };
            let value = unquote(v.trim()).to_string();
            if !KEYS.contains(&key.as_str()) {
                errors.push(ConfigError {
                    line: Some(line),
                    key: Some(key),
                    message: "unknown key".into(),
                });
                continue;
            }
            if let Some(first) = entries.get(&key) {
                errors.push(ConfigError {
                    line: Some(line),
                    key: Some(key.clone()),
                    message: format!("duplicate key, set on lines {} and {line}", first.line),
                });
                continue;
            }
            entries.insert(key, Entry { value, line });
        }
        (Self { entries }, errors)
    }

    /// Overrides or adds `key`. Unknown keys are refused.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return Err(ConfigError {
                line: None,
                key: Some(key.into()),
                message: "unknown key".into(),
            });
        }
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line: 0,
            },
        );
        Ok(())
    }
}

fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v)
}

struct Reader<'a> {
    raw: &'a RawConfig,
    errors: Vec<ConfigError>,
}

impl<'a> Reader<'a> {
    fn line(&self, key: &str) -> Option<usize> {
        self.raw.entries.get(key).map(|e| e.line).filter(|&l| l > 0)
    }

    fn fail(&mut self, key: &str, message: impl Into<String>) {
        self.errors.push(ConfigError {
            line: self.line(key),
            key: Some(key.into()),
            message: message.into(),
        });
    }

    fn has(&self, key: &str) -> bool {
        self.raw.entries.contains_key(key)
    }

    fn text(&self, key: &str) -> Option<&'a str> {
        self.raw.entries.get(key).map(|e| e.value.as_str())
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Option<T> {
        let v = self.text(key)?;
        match v.parse() {
            Ok(x) => Some(x),
            Err(_) => {
                self.fail(key, format!("expected {what}, got `{v}`"));
                None
            }
        }
    }

    fn number(&mut self, key: &str) -> Option<f64> {
        let x: f64 = self.parsed(key, "a number")?;
        if x.is_finite() {
            Some(x)
        } else {
            self.fail(key, "must be finite");
            None
        }
    }

    fn required_number(&mut self, key: &str) -> Option<f64> {
        if !self.has(key) {
            self.fail(key, "missing required field");
            return None;
        }
        self.number(key)
    }

    fn positive(&mut self, key: &str, default: Option<f64>) -> Option<f64> {
        let x = match default {
            Some(d) if !self.has(key) => return Some(d),
            Some(_) => self.number(key)?,
            None => self.required_number(key)?,
        };
        if x > 0.0 {
            Some(x)
        } else {
            self.fail(key, format!("must be positive, got {x}"));
            None
        }
    }

    fn nonnegative(&mut self, key: &str, default: f64) -> Option<f64> {
        if !self.has(key) {
            return Some(default);
        }
        let x = self.number(key)?;
        if x >= 0.0 {
            Some(x)
        } else {
            self.fail(key, format!("must be nonnegative, got {x}"));
            None
        }
    }

    fn count(&mut self, key: &str, min: usize) -> Option<usize> {
        let n: usize = self.parsed(key, "a nonnegative integer")?;
        if n >= min {
            Some(n)
        } else {
            self.fail(key, format!("must be at least {min}, got {n}"));
            None
        }
    }

    fn choice<T>(&mut self, key: &str, default: T, options: &[(&str, T)]) -> Option<T>
    where
        T: Copy,
    {
        let Some(v) = self.text(key) else {
            return Some(default);
        };
        match options.iter().find(|(name, _)| *name == v) {
            Some((_, t)) => Some(*t),
            None => {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.fail(key, format!("expected one of {}, got `{v}`", names.join(", ")));
                None
            }
        }
    }

    fn boundary(&mut self, side: &str) -> Option<BoundaryCondition> {
        #[derive(Clone, Copy, PartialEq)]
        enum Kind {
            Dirichlet,
            Neumann,
            Robin,
            Absorbing,
        }
        let key = format!("boundary.{side}");
        let kappa_key = format!("boundary.{side}_kappa");
        let alpha_key = format!("boundary.{side}_alpha");
        let kind = self.choice(
            &key,
            Kind::Dirichlet,
            &[
                ("dirichlet", Kind::Dirichlet),
                ("neumann", Kind::Neumann),
                ("robin", Kind::Robin),
                ("absorbing", Kind::Absorbing),
            ],
        )?;
        if kind != Kind::Absorbing && self.has(&kappa_key) {
            self.fail(&kappa_key, "only used with an absorbing boundary");
        }
        if kind != Kind::Robin && self.has(&alpha_key) {
            self.fail(&alpha_key, "only used with a robin boundary");
        }
        Some(match kind {
            Kind::Dirichlet => BoundaryCondition::Dirichlet,
            Kind::Neumann => BoundaryCondition::Neumann,
            Kind::Robin => BoundaryCondition::Robin {
                alpha: self.required_number(&alpha_key)?,
            },
            Kind::Absorbing => BoundaryCondition::Absorbing {
                kappa: self.positive(&kappa_key, None)?,
            },
        })
    }
}

/// Parses and validates a configuration, reporting every problem found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let (raw, errors) = RawConfig::parse(text);
    from_raw(&raw, errors)
}

/// Types and validates an already tokenized configuration.
pub fn from_raw(raw: &RawConfig, mut errors: Vec<ConfigError>) -> Result<ExperimentConfig, ConfigErrors> {
    let mut r = Reader { raw, errors: Vec::new() };

    let model = match r.text("model") {
        None => {
            r.fail("model", "missing required field");
            None
        }
        Some(m) => match Model::parse(m) {
            Some(m) => Some(m),
            None => {
                r.fail("model", format!("unknown model `{m}`"));
                None
            }
        },
    };

    let x_min = r.required_number("grid.x_min");
    let x_max = r.required_number("grid.x_max");
    if let (Some(a), Some(b)) = (x_min, x_max) {
        if b <= a {
            r.fail("grid.x_max", format!("must exceed grid.x_min = {a}"));
        }
    }
    let points = if r.has("grid.points") { r.count("grid.points", 3).map(Some) } else { Some(None) };
    let npw = if r.has("grid.nodes_per_wavelength") { r.count("grid.nodes_per_wavelength", 2) } else { Some(20) };

    let state = if r.has("state.file") {
        for k in ["state.center", "state.width", "state.wavenumber"] {
            if r.has(k) {
                r.fail(k, "cannot be combined with state.file");
            }
        }
        if !r.has("grid.points") {
            r.fail("grid.points", "required when the state is loaded from a file");
        }
        r.text("state.file").map(|p| StateSpec::File { path: p.into() })
    } else {
        let center = r.required_number("state.center");
        let width = r.positive("state.width", None);
        let wavenumber = if r.has("state.wavenumber") { r.number("state.wavenumber") } else { Some(0.0) };
        match (center, width, wavenumber) {
            (Some(center), Some(width), Some(wavenumber)) => Some(StateSpec::Gaussian { center, width, wavenumber }),
            _ => None,
        }
    };

    let hbar = r.positive("physics.hbar", Some(1.0));
    let mass = r.positive("physics.mass", Some(1.0));
    let geometry = r.choice(
        "physics.geometry",
        Geometry::Line,
        &[("line", Geometry::Line), ("radial", Geometry::Radial)],
    );

    let dt = if r.has("time.dt") { r.positive("time.dt", None).map(Some) } else { Some(None) };
    let t_max = r.positive("time.t_max", None);
    if let (Some(Some(dt)), Some(t_max)) = (dt, t_max) {
        if t_max < dt {
            r.fail("time.t_max", format!("must be at least time.dt = {dt}"));
        }
    }
    let bins = if r.has("time.bins") { r.count("time.bins", 1) } else { Some(200) };

    let left = r.boundary("left");
    let right = r.boundary("right");

    let rate = r.nonnegative("detector.rate", 0.0);
    let region_start = r.number("detector.region_start");
    let region_end = r.number("detector.region_end");
    if let (Some(a), Some(b)) = (region_start, region_end) {
        if b <= a {
            r.fail("detector.region_end", format!("must exceed detector.region_start = {a}"));
        }
    }
    let edge_width = r.nonnegative("detector.edge_width", 0.0);
    let barrier_height = if r.has("detector.barrier_height") { r.number("detector.barrier_height") } else { Some(0.0) };
    let barrier_start = r.number("detector.barrier_start");
    let barrier_end = r.number("detector.barrier_end");
    if barrier_height.is_some_and(|h| h != 0.0) {
        for k in ["detector.barrier_start", "detector.barrier_end"] {
            if !r.has(k) {
                r.fail(k, "required when detector.barrier_height is nonzero");
            }
        }
    }
    let sigma = if r.has("detector.sigma") { r.positive("detector.sigma", None).map(Some) } else { Some(None) };
    let lambda0 = r.nonnegative("detector.lambda0", 0.0);
    let jump = r.choice(
        "detector.jump",
        JumpConvention::SqrtGaussian,
        &[
            ("sqrt_gaussian", JumpConvention::SqrtGaussian),
            ("rate_operator", JumpConvention::RateOperator),
        ],
    );

    let limit_keys = ["limit.kappa", "limit.l0", "limit.levels", "limit.outer", "limit.outer_alpha", "limit.tv_target"];
    let limit = if limit_keys.iter().any(|k| r.has(k)) || model == Some(Model::LimitStudy) {
        let kappa = r.positive("limit.kappa", None);
        let l0 = r.positive("limit.l0", None);
        let levels = if r.has("limit.levels") { r.count("limit.levels", 1) } else { Some(6) };
        let outer = r.choice("limit.outer", "neumann", &[("neumann", "neumann"), ("robin", "robin")]);
        let outer = match outer {
            Some("robin") => r.required_number("limit.outer_alpha").map(|alpha| OuterWall::Robin { alpha }),
            Some(_) => {
                if r.has("limit.outer_alpha") {
                    r.fail("limit.outer_alpha", "only used with limit.outer = robin");
                }
                Some(OuterWall::Neumann)
            }
            None => None,
        };
        let tv_target = r.positive("limit.tv_target", Some(0.05));
        match (kappa, l0, levels, outer, tv_target) {
            (Some(kappa), Some(l0), Some(levels), Some(outer), Some(tv_target)) => Some(Some(LimitSpec {
                kappa,
                l0,
                levels,
                outer,
                tv_target,
            })),
            _ => None,
        }
    } else {
        Some(None)
    };

    let size = if r.has("ensemble.size") { r.count("ensemble.size", 1).map(Some) } else { Some(None) };
    let seed = if r.has("ensemble.seed") { r.parsed("ensemble.seed", "a nonnegative integer") } else { Some(0) };

    let dir = PathBuf::from(r.text("output.dir").unwrap_or("results"));
    let trajectories = if r.has("output.trajectories") { r.parsed("output.trajectories", "true or false") } else { Some(false) };

    // model-specific requirements
    if let Some(model) = model {
        match model {
            Model::Abr => {
                if left.is_some_and(|b| !b.is_absorbing()) && right.is_some_and(|b| !b.is_absorbing()) {
                    r.fail("boundary.right", "the abr model needs at least one absorbing boundary");
                }
                if rate.is_some_and(|x| x > 0.0) {
                    r.fail("detector.rate", "must be zero for the abr model");
                }
            }
            Model::Soft | Model::GrwFirstDetection => {
                if rate == Some(0.0) {
                    r.fail("detector.rate", format!("must be positive for the {} model", model.as_str()));
                }
            }
            Model::GrwConstant => {
                if lambda0 == Some(0.0) {
                    r.fail("detector.lambda0", "must be positive for the grw_constant model");
                }
            }
            Model::LimitStudy => {}
        }
        if model.is_stochastic() && size == Some(None) {
            r.fail("ensemble.size", format!("missing required field for the {} model", model.as_str()));
        }
    }
    if geometry == Some(Geometry::Radial) {
        if x_min.is_some_and(|a| a < 0.0) {
            r.fail("grid.x_min", "the radial coordinate must be nonnegative");
        }
        if left.is_some_and(|b| b != BoundaryCondition::Dirichlet) {
            r.fail("boundary.left", "must be dirichlet in radial geometry");
        }
    }

    errors.extend(r.errors);
    let build = || {
        Some(ExperimentConfig {
            model: model?,
            grid: GridSpec {
                x_min: x_min?,
                x_max: x_max?,
                points: points?,
                nodes_per_wavelength: npw?,
            },
            state: state?,
            physics: PhysicsSpec {
                hbar: hbar?,
                mass: mass?,
                geometry: geometry?,
            },
            time: TimeSpec {
                dt: dt?,
                t_max: t_max?,
                bins: bins?,
            },
            boundary: BoundarySpec {
                left: left?,
                right: right?,
            },
            detector: DetectorSpec {
                rate: rate?,
                region_start,
                region_end,
                edge_width: edge_width?,
                barrier_height: barrier_height?,
                barrier_start,
                barrier_end,
                sigma: sigma?,
                lambda0: lambda0?,
                jump: jump?,
            },
            limit: limit?,
            ensemble: EnsembleSpec { size: size?, seed: seed? },
            output: OutputSpec {
                dir,
                trajectories: trajectories?,
            },
        })
    };
    match build() {
        Some(cfg) if errors.is_empty() => {
            if let Err(e) = cfg.resolve_grid() {
                return Err(ConfigErrors(vec![ConfigError {
                    line: None,
                    key: Some("grid".into()),
                    message: e.to_string(),
                }]));
            }
            if cfg.time.dt.is_none() {
                let dt = cfg.resolved_dt().unwrap_or(f64::NAN);
                if cfg.time.t_max < dt {
                    return Err(ConfigErrors(vec![ConfigError {
                        line: raw.entries.get("time.t_max").map(|e| e.line),
                        key: Some("time.t_max".into()),
                        message: format!("must be at least the default time step {dt}"),
                    }]));
                }
            }
            Ok(cfg)
        }
        _ => {
            if errors.is_empty() {
                errors.push(ConfigError {
                    line: None,
                    key: None,
                    message: "incomplete configuration".into(),
                });
            }
            Err(ConfigErrors(errors))
        }
    }
}

/// Shortest round-tripping text for `x`, in exponent form when very small
/// or very large.
pub(crate) fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn boundary_lines(out: &mut Vec<String>, side: &str, bc: BoundaryCondition) {
    match bc {
        BoundaryCondition::Dirichlet => out.push(format!("{side} = dirichlet")),
        BoundaryCondition::Neumann => out.push(format!("{side} = neumann")),
        BoundaryCondition::Robin { alpha } => {
            out.push(format!("{side} = robin"));
            out.push(format!("{side}_alpha = {}", num(alpha)));
        }
        BoundaryCondition::Absorbing { kappa } | BoundaryCondition::RadialAbsorbing { kappa, .. } => {
            out.push(format!("{side} = absorbing"));
            out.push(format!("{side}_kappa = {}", num(kappa)));
        }
    }
}

impl ExperimentConfig {
    /// Serializes with every default written out; [`parse_config`] reads it
    /// back to an equal value.
    pub fn to_text(&self) -> String {
        let mut s = self.experiment_text();
        s.push_str("\n[output]\n");
        s.push_str(&format!("dir = \"{}\"\n", self.output.dir.display()));
        s.push_str(&format!("trajectories = {}\n", self.output.trajectories));
        s
    }

    /// Everything except the output section.
    fn experiment_text(&self) -> String {
        let mut sections: Vec<(&str, Vec<String>)> = Vec::new();
        let g = &self.grid;
        let mut grid = vec![format!("x_min = {}", num(g.x_min)), format!("x_max = {}", num(g.x_max))];
        if let Some(p) = g.points {
            grid.push(format!("points = {p}"));
        }
        grid.push(format!("nodes_per_wavelength = {}", g.nodes_per_wavelength));
        sections.push(("grid", grid));

        sections.push((
            "state",
            match &self.state {
                StateSpec::Gaussian { center, width, wavenumber } => vec![
                    format!("center = {}", num(*center)),
                    format!("width = {}", num(*width)),
                    format!("wavenumber = {}", num(*wavenumber)),
                ],
                StateSpec::File { path } => vec![format!("file = \"{}\"", path.display())],
            },
        ));

        let geometry = match self.physics.geometry {
            Geometry::Line => "line",
            Geometry::Radial => "radial",
        };
        sections.push((
            "physics",
            vec![
                format!("hbar = {}", num(self.physics.hbar)),
                format!("mass = {}", num(self.physics.mass)),
                format!("geometry = {geometry}"),
            ],
        ));

        let mut time = Vec::new();
        if let Some(dt) = self.time.dt {
            time.push(format!("dt = {}", num(dt)));
        }
        time.push(format!("t_max = {}", num(self.time.t_max)));
        time.push(format!("bins = {}", self.time.bins));
        sections.push(("time", time));

        let mut boundary = Vec::new();
        boundary_lines(&mut boundary, "left", self.boundary.left);
        boundary_lines(&mut boundary, "right", self.boundary.right);
        sections.push(("boundary", boundary));

        let d = &self.detector;
        let mut det = vec![format!("rate = {}", num(d.rate))];
        for (k, v) in [
            ("region_start", d.region_start),
            ("region_end", d.region_end),
        ] {
            if let Some(v) = v {
                det.push(format!("{k} = {}", num(v)));
            }
        }
        det.push(format!("edge_width = {}", num(d.edge_width)));
        det.push(format!("barrier_height = {}", num(d.barrier_height)));
        for (k, v) in [("barrier_start", d.barrier_start), ("barrier_end", d.barrier_end), ("sigma", d.sigma)] {
            if let Some(v) = v {
                det.push(format!("{k} = {}", num(v)));
            }
        }
        det.push(format!("lambda0 = {}", num(d.lambda0)));
        det.push(format!(
            "jump = {}",
            match d.jump {
                JumpConvention::SqrtGaussian => "sqrt_gaussian",
                JumpConvention::RateOperator => "rate_operator",
            }
        ));
        sections.push(("detector", det));

        if let Some(l) = &self.limit {
            let mut lim = vec![
                format!("kappa = {}", num(l.kappa)),
                format!("l0 = {}", num(l.l0)),
                format!("levels = {}", l.levels),
            ];
            match l.outer {
                OuterWall::Neumann => lim.push("outer = neumann".into()),
                OuterWall::Robin { alpha } => {
                    lim.push("outer = robin".into());
                    lim.push(format!("outer_alpha = {}", num(alpha)));
                }
            }
            lim.push(format!("tv_target = {}", num(l.tv_target)));
            sections.push(("limit", lim));
        }

        let mut ens = Vec::new();
        if let Some(n) = self.ensemble.size {
            ens.push(format!("size = {n}"));
        }
        ens.push(format!("seed = {}", self.ensemble.seed));
        sections.push(("ensemble", ens));

        let mut s = format!("model = {}\n", self.model.as_str());
        for (name, lines) in sections {
            s.push_str(&format!("\n[{name}]\n"));
            for l in lines {
                s.push_str(&l);
                s.push('\n');
            }
        }
        s
    }

    /// Hex SHA-256 prefix of the configuration without its output section.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.experiment_text().as_bytes());
        hex::encode(&digest[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
model = abr
[grid]
x_min = -10
x_max = 0
points = 201
[state]
center = -5
width = 1
wavenumber = 2
[time]
t_max = 5
[boundary]
right = absorbing
right_kappa = 2
";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.model, Model::Abr);
        assert_eq!(c.time.bins, 200);
        assert_eq!(c.time.dt, None);
        assert_eq!(c.boundary.left, BoundaryCondition::Dirichlet);
        assert_eq!(c.boundary.right, BoundaryCondition::Absorbing { kappa: 2.0 });
        assert_eq!(c.physics.hbar, 1.0);
        assert_eq!(c.ensemble.seed, 0);
        assert_eq!(c.output.dir, PathBuf::from("results"));
        assert_eq!(c.detector.jump, JumpConvention::SqrtGaussian);
    }

    #[test]
    fn negative_kappa_names_the_field() {
        let e = parse_config(&MINIMAL.replace("right_kappa = 2", "right_kappa = -1")).unwrap_err();
        assert_eq!(e.0.len(), 1);
        assert_eq!(e.0[0].key.as_deref(), Some("boundary.right_kappa"));
        assert_eq!(e.0[0].line, Some(15));
        assert!(e.0[0].message.contains("positive"));
    }

    #[test]
    fn duplicate_key_lists_both_lines() {
        let text = format!("{MINIMAL}[time]\nt_max = 6\n");
        let e = parse_config(&text).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("time.t_max"), "{msg}");
        assert!(msg.contains("lines 12 and 17"), "{msg}");
    }

    #[test]
    fn all_errors_are_reported() {
        let text = MINIMAL
            .replace("width = 1", "width = 0")
            .replace("t_max = 5", "t_max = soon")
            .replace("[boundary]", "[boundary]\ncolour = blue");
        let e = parse_config(&text).unwrap_err();
        let keys: Vec<_> = e.0.iter().filter_map(|e| e.key.clone()).collect();
        assert!(keys.contains(&"state.width".to_string()));
        assert!(keys.contains(&"time.t_max".to_string()));
        assert!(keys.contains(&"boundary.colour".to_string()));
    }

    #[test]
    fn missing_fields_are_reported() {
        let e = parse_config("model = soft\n").unwrap_err();
        let keys: Vec<_> = e.0.iter().filter_map(|e| e.key.clone()).collect();
        for k in ["grid.x_min", "grid.x_max", "state.center", "state.width", "time.t_max", "detector.rate"] {
            assert!(keys.contains(&k.to_string()), "{k} missing from {keys:?}");
        }
    }

    #[test]
    fn model_requirements_are_checked() {
        let e = parse_config(&MINIMAL.replace("right = absorbing\nright_kappa = 2", "right = neumann")).unwrap_err();
        assert!(e.to_string().contains("absorbing"));
        let e = parse_config(&MINIMAL.replace("model = abr", "model = grw_constant")).unwrap_err();
        let keys: Vec<_> = e.0.iter().filter_map(|e| e.key.clone()).collect();
        assert!(keys.contains(&"detector.lambda0".to_string()));
        assert!(keys.contains(&"ensemble.size".to_string()));
    }

    #[test]
    fn comments_and_quotes() {
        let text = MINIMAL.replace("points = 201", "points = 201 # fine\n# whole line") + "[output]\ndir = \"out # here\"\n";
        let c = parse_config(&text).unwrap();
        assert_eq!(c.output.dir, PathBuf::from("out # here"));
    }

    #[test]
    fn hash_ignores_output() {
        let a = parse_config(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output.dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.time.t_max = 6.0;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn overrides_go_through_validation() {
        let (mut raw, errors) = RawConfig::parse(MINIMAL);
        raw.set("time.t_max", "-3").unwrap();
        let e = from_raw(&raw, errors).unwrap_err();
        assert_eq!(e.0[0].key.as_deref(), Some("time.t_max"));
        assert!(raw.set("time.colour", "1").is_err());
    }

    #[test]
    fn t_max_below_default_step_is_rejected() {
        let e = parse_config(&MINIMAL.replace("t_max = 5", "t_max = 0.0001")).unwrap_err();
        assert!(e.to_string().contains("default time step"));
    }

    mod roundtrip {
        use super::*;
        use proptest::prelude::*;

        fn bc() -> impl Strategy<Value = BoundaryCondition> {
            prop_oneof![
                Just(BoundaryCondition::Dirichlet),
                Just(BoundaryCondition::Neumann),
                (-5.0..5.0f64).prop_map(|alpha| BoundaryCondition::Robin { alpha }),
                (0.01..10.0f64).prop_map(|kappa| BoundaryCondition::Absorbing { kappa }),
            ]
        }

        prop_compose! {
            fn config()(
                x_min in -50.0..0.0f64,
                len in 1.0..50.0f64,
                points in prop::option::of(3usize..5000),
                npw in 2usize..60,
                center in -10.0..10.0f64,
                width in 0.1..5.0f64,
                k0 in -5.0..5.0f64,
                hbar in 0.5..2.0f64,
                mass in 0.5..2.0f64,
                dt in prop::option::of(1e-3..1e-2f64),
                t_max in 1.0..30.0f64,
                bins in 1usize..500,
                left in bc(),
                right in bc(),
                rate in 0.0..10.0f64,
                region in prop::option::of((-5.0..0.0f64, 0.1..5.0f64)),
                lambda0 in 0.0..3.0f64,
                sigma in prop::option::of(0.01..2.0f64),
                rate_jump in any::<bool>(),
                limit in prop::option::of((0.1..5.0f64, 0.01..2.0f64, 1usize..8, prop::option::of(-2.0..2.0f64))),
                size in prop::option::of(1usize..100000),
                seed in any::<u64>(),
                trajectories in any::<bool>(),
            ) -> ExperimentConfig {
                ExperimentConfig {
                    model: Model::Soft,
                    grid: GridSpec { x_min, x_max: x_min + len, points, nodes_per_wavelength: npw },
                    state: StateSpec::Gaussian { center, width, wavenumber: k0 },
                    physics: PhysicsSpec { hbar, mass, geometry: Geometry::Line },
                    time: TimeSpec { dt, t_max, bins },
                    boundary: BoundarySpec { left, right },
                    detector: DetectorSpec {
                        rate,
                        region_start: region.map(|r| r.0),
                        region_end: region.map(|r| r.0 + r.1),
                        edge_width: 0.0,
                        barrier_height: 0.0,
                        barrier_start: None,
                        barrier_end: None,
                        sigma,
                        lambda0,
                        jump: if rate_jump { JumpConvention::RateOperator } else { JumpConvention::SqrtGaussian },
                    },
                    limit: limit.map(|(kappa, l0, levels, alpha)| LimitSpec {
                        kappa,
                        l0,
                        levels,
                        outer: alpha.map_or(OuterWall::Neumann, |alpha| OuterWall::Robin { alpha }),
                        tv_target: l0 / 10.0,
                    }),
                    ensemble: EnsembleSpec { size, seed },
                    output: OutputSpec { dir: "some dir/out".into(), trajectories },
                }
            }
        }

        proptest! {
            #[test]
            fn text_round_trips(c in config()) {
                // rate must be positive for the soft model
                prop_assume!(c.detector.rate > 0.0);
                let parsed = parse_config(&c.to_text());
                prop_assume!(!matches!(&parsed, Err(e) if e.to_string().contains("default time step")));
                prop_assert_eq!(parsed.unwrap(), c);
            }
        }
    }
}
