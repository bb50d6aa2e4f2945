//! Experiment configuration: a TOML file merged with command-line flags,
//! validated before any sampling and embedded in every output.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use jmperc::faces::FaceMode;
use jmperc::geometry::MetricKind;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Cross,
    Tail,
    Pc,
    Couple,
    Faces,
    Hilhorst,
    Render,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Cross => "cross",
            Command::Tail => "tail",
            Command::Pc => "pc",
            Command::Couple => "couple",
            Command::Faces => "faces",
            Command::Hilhorst => "hilhorst",
            Command::Render => "render",
        }
    }

    fn default_extension(self) -> &'static str {
        match self {
            Command::Couple => "json",
            Command::Render => "svg",
            _ => "csv",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Metric name as written in configs and CSV columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Metric(pub MetricKind);

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.0.as_str())
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        MetricKind::from_str(s).map(Metric).map_err(|e| e.to_string())
    }
}

impl Default for Metric {
    fn default() -> Self {
        Metric(MetricKind::JohnsonMehl)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mode(pub FaceMode);

impl Serialize for Mode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.0.as_str())
    }
}

impl<'de> Deserialize<'de> for Mode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        FaceMode::from_str(&s).map(Mode).map_err(serde::de::Error::custom)
    }
}

impl Default for Mode {
    fn default() -> Self {
        Mode(FaceMode::ThreeD)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailOptions {
    pub max_n: usize,
    /// Side of the square target window.
    pub scale: f64,
    pub bootstrap: usize,
    pub angular_budget: usize,
    pub area_step: f64,
}

impl Default for TailOptions {
    fn default() -> Self {
        TailOptions {
            max_n: 20,
            scale: 20.0,
            bootstrap: 400,
            angular_budget: 32,
            area_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcOptions {
    pub tolerance: f64,
}

impl Default for PcOptions {
    fn default() -> Self {
        PcOptions { tolerance: 0.04 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingOptions {
    pub p1: f64,
    pub p2: f64,
    pub eps_prime: f64,
    /// Exponent of the shift check, `d' = s^-eps`.
    pub eps: f64,
    /// Constant `a` of the neighbourhood-size bad event.
    pub a_size: f64,
    /// Side of the crude-state cubes; rounded so that it divides `s`.
    pub delta: Option<f64>,
    pub angular_budget: usize,
    pub force_crossing: bool,
    pub verify_step: f64,
    /// Points per run for the robust-from-shift check; 0 skips it.
    pub shift_points: usize,
}

impl Default for CouplingOptions {
    fn default() -> Self {
        CouplingOptions {
            p1: 0.45,
            p2: 0.55,
            eps_prime: 0.3,
            eps: 0.3,
            a_size: 0.1,
            delta: None,
            angular_budget: 32,
            force_crossing: false,
            verify_step: 0.1,
            shift_points: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaceOptions {
    pub mode: Mode,
    pub probes: usize,
    pub max_depth: u32,
    pub junction_depth: u32,
    pub k_max: usize,
    pub k_lo: usize,
    pub k_hi: usize,
    /// Smallest hit count for a log difference or a ratio row.
    pub min_hits: u64,
    /// Values of `k` for the ratio table.
    pub ks: Vec<usize>,
}

impl Default for FaceOptions {
    fn default() -> Self {
        FaceOptions {
            mode: Mode::default(),
            probes: 64,
            max_depth: jmperc::faces::MAX_SPHERE_DEPTH,
            junction_depth: 3,
            k_max: 25,
            k_lo: 4,
            k_hi: 25,
            min_hits: 100,
            ks: vec![4, 5, 6, 7, 8],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderOptions {
    /// Exact number of seeds; a Poisson count when absent.
    pub points: Option<usize>,
    /// Largest birth time.
    pub height: f64,
    pub size_px: u32,
    pub rays: usize,
    pub fill: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            points: None,
            height: 2.0,
            size_px: 800,
            rays: 256,
            fill: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Option<Command>,
    pub metric: Metric,
    /// Colouring levels; the first one is used where a single level applies.
    pub p: Vec<f64>,
    pub rho: f64,
    pub s: f64,
    pub trials: u64,
    pub seed: u64,
    pub intensity: f64,
    /// Localization constant `A`.
    pub a: f64,
    pub out: Option<PathBuf>,
    pub tail: TailOptions,
    pub pc: PcOptions,
    pub coupling: CouplingOptions,
    pub faces: FaceOptions,
    pub render: RenderOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            command: None,
            metric: Metric::default(),
            p: vec![0.5],
            rho: 1.0,
            s: 20.0,
            trials: 100,
            seed: 1,
            intensity: 1.0,
            a: 2.0,
            out: None,
            tail: TailOptions::default(),
            pc: PcOptions::default(),
            coupling: CouplingOptions::default(),
            faces: FaceOptions::default(),
            render: RenderOptions::default(),
        }
    }
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub metric: Option<Metric>,
    pub p: Option<Vec<f64>>,
    pub rho: Option<f64>,
    pub s: Option<f64>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

fn bad(field: &str, reason: &str) -> CliError {
    CliError::Config(format!("`{field}` {reason}"))
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(bad(field, "must be finite and positive"))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Apply the subcommand and flags, then validate.
    pub fn resolve(mut self, command: Command, o: Overrides) -> Result<Self> {
        if let Some(c) = self.command {
            if c != command {
                return Err(CliError::Config(format!("config is for `{c}`, not `{command}`")));
            }
        }
        self.command = Some(command);
        if let Some(m) = o.metric {
            self.metric = m;
        }
        if let Some(p) = o.p {
            self.p = p;
        }
        if let Some(v) = o.rho {
            self.rho = v;
        }
        if let Some(v) = o.s {
            self.s = v;
        }
        if let Some(v) = o.trials {
            self.trials = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if o.out.is_some() {
            self.out = o.out;
        }
        if self.out.is_none() {
            self.out = Some(PathBuf::from(format!("{}.{}", command, command.default_extension())));
        }
        self.validate()?;
        Ok(self)
    }

    pub fn command(&self) -> Command {
        self.command.unwrap_or(Command::Cross)
    }

    pub fn metric(&self) -> MetricKind {
        self.metric.0
    }

    pub fn out_path(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from(self.command().as_str()))
    }

    /// First colouring level.
    pub fn level(&self) -> f64 {
        self.p[0]
    }

    pub fn validate(&self) -> Result<()> {
        if self.p.is_empty() {
            return Err(bad("p", "needs at least one level"));
        }
        if self.p.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(bad("p", "levels must lie in [0, 1]"));
        }
        positive("rho", self.rho)?;
        positive("s", self.s)?;
        positive("intensity", self.intensity)?;
        positive("a", self.a)?;
        if self.trials == 0 {
            return Err(bad("trials", "must be at least 1"));
        }
        match self.command() {
            Command::Cross | Command::Pc => {
                if self.s * self.rho.max(1.0) < 3.0 {
                    return Err(bad("s", "the longer side must be at least 3"));
                }
                if self.command() == Command::Pc && !(self.pc.tolerance >= jmperc::percolation::MIN_BRACKET_TOLERANCE) {
                    return Err(bad("pc.tolerance", "must be at least 0.02"));
                }
            }
            Command::Tail => {
                if self.tail.max_n < 2 {
                    return Err(bad("tail.max_n", "must be at least 2"));
                }
                if self.tail.scale < 3.0 {
                    return Err(bad("tail.scale", "must be at least 3"));
                }
                positive("tail.area_step", self.tail.area_step)?;
                if self.tail.angular_budget < 16 {
                    return Err(bad("tail.angular_budget", "must be at least 16"));
                }
            }
            Command::Couple => {
                let c = &self.coupling;
                if !(0.0 < c.p1 && c.p1 <= c.p2 && c.p2 < 1.0) {
                    return Err(bad("coupling.p1/p2", "require 0 < p1 <= p2 < 1"));
                }
                self.coupling_params(0)
                    .validate()
                    .map_err(|e| CliError::Config(e.to_string()))?;
                positive("coupling.verify_step", c.verify_step)?;
                positive("coupling.eps", c.eps)?;
                if let Some(d) = c.delta {
                    positive("coupling.delta", d)?;
                    if d > self.s {
                        return Err(bad("coupling.delta", "must not exceed s"));
                    }
                }
            }
            Command::Faces | Command::Hilhorst => {
                self.face_settings()
                    .validate()
                    .map_err(|e| CliError::Config(e.to_string()))?;
                if self.faces.k_lo > self.faces.k_hi {
                    return Err(bad("faces.k_lo", "must not exceed k_hi"));
                }
            }
            Command::Render => {
                if !(self.render.height.is_finite() && self.render.height >= 0.0) {
                    return Err(bad("render.height", "must be finite and nonnegative"));
                }
                if self.render.size_px == 0 {
                    return Err(bad("render.size_px", "must be positive"));
                }
                if self.render.rays < 16 {
                    return Err(bad("render.rays", "must be at least 16"));
                }
            }
        }
        Ok(())
    }

    pub fn coupling_params(&self, _run: u64) -> jmperc::coupling::CouplingParams {
        let c = &self.coupling;
        let mut p = jmperc::coupling::CouplingParams::new(self.metric(), self.s, c.p1, c.p2, self.seed);
        p.eps_prime = c.eps_prime;
        p.intensity = self.intensity;
        p.a_pad = self.a;
        p.a_size = c.a_size;
        p.angular_budget = c.angular_budget;
        p.force_crossing = c.force_crossing;
        p
    }

    pub fn face_settings(&self) -> jmperc::faces::FaceSettings {
        let f = &self.faces;
        jmperc::faces::FaceSettings {
            probes: f.probes,
            max_depth: f.max_depth,
            junction_depth: f.junction_depth,
            a: self.a,
            k_max: f.k_max,
        }
    }

    /// The fully resolved configuration as one line of JSON.
    pub fn header_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
