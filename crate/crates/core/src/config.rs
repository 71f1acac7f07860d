//! Run configuration: TOML (or JSON) files describing a full scenario.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{
    ControllerError, FeedForwardNet, ObservationLayout, PolicyRole, PolicySpec, SchedulerConfig, ScriptedParams,
    StackVariant,
};
use crate::oscillator::OscillatorParams;
use crate::pose::{MorphParams, MorphRanges};
use crate::rng::RngStream;
use crate::sim::{
    BodyGeometry, ContactConfig, FaultSpec, InitialConfig, ObservationConfig, SimConfig, TaskConfig, TerrainSpec,
};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    /// Dotted key path of the offending field, or the file path for I/O and
    /// syntax problems.
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl From<crate::sim::FieldError> for ConfigError {
    fn from(e: crate::sim::FieldError) -> Self {
        Self::new(e.path, e.message)
    }
}

fn one() -> f64 {
    1.0
}

/// Policy source as written in the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyConfig {
    Scripted {
        #[serde(default)]
        params: ScriptedParams,
    },
    /// Fixed action; an empty list means zeros.
    Constant {
        #[serde(default)]
        values: Vec<f64>,
    },
    Random {
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// JSON weight file, relative to the config file's directory.
    Network { path: PathBuf },
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig::Scripted {
            params: ScriptedParams::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoliciesConfig {
    pub high: PolicyConfig,
    pub mid: PolicyConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub csv: bool,
    pub json: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            csv: true,
            json: true,
        }
    }
}

/// A complete scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Simulated time (s).
    pub duration: f64,
    pub seed: u64,
    pub oscillator: OscillatorParams,
    pub geometry: BodyGeometry,
    pub morph: MorphParams,
    pub morph_ranges: MorphRanges,
    pub scheduler: SchedulerConfig,
    pub policies: PoliciesConfig,
    pub task: Option<TaskConfig>,
    pub terrain: Option<TerrainSpec>,
    pub contact: ContactConfig,
    pub faults: Vec<FaultSpec>,
    pub observation: ObservationConfig,
    pub initial: InitialConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            duration: 10.0,
            seed: 0,
            oscillator: sim.oscillator,
            geometry: sim.geometry,
            morph: sim.morph,
            morph_ranges: sim.morph_ranges,
            scheduler: sim.scheduler,
            policies: PoliciesConfig::default(),
            task: sim.task,
            terrain: sim.terrain,
            contact: sim.contact,
            faults: sim.faults,
            observation: sim.observation,
            initial: sim.initial,
            output: OutputConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    /// JSON for `.json` files, TOML otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Toml,
        }
    }
}

/// Command-line adjustments applied on top of a loaded file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub duration: Option<f64>,
    pub variant: Option<StackVariant>,
    pub faults: Vec<FaultSpec>,
    pub out_dir: Option<PathBuf>,
}

/// Configuration with policies loaded and everything validated.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedRun {
    pub sim: SimConfig,
    pub high: PolicySpec,
    pub mid: PolicySpec,
    pub duration: f64,
    pub seed: u64,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn parse(text: &str, format: Format) -> Result<Self, ConfigError> {
        match format {
            Format::Toml => {
                let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::new("<toml>", e.to_string()))?;
                serde_path_to_error::deserialize(de).map_err(|e| {
                    let path = e.path().to_string();
                    ConfigError::new(path, e.into_inner().message().to_string())
                })
            }
            Format::Json => {
                let mut de = serde_json::Deserializer::from_str(text);
                serde_path_to_error::deserialize(&mut de).map_err(|e| {
                    let path = e.path().to_string();
                    ConfigError::new(path, e.into_inner().to_string())
                })
            }
        }
    }

    /// Reads a file and makes policy paths relative to its directory absolute.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            fs::read_to_string(path).map_err(|e| ConfigError::new(path.display().to_string(), e.to_string()))?;
        let mut config = Self::parse(&text, Format::from_path(path))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for policy in [&mut config.policies.high, &mut config.policies.mid] {
            if let PolicyConfig::Network { path: p } = policy {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn to_string(&self, format: Format) -> String {
        match format {
            Format::Toml => toml::to_string(self).expect("config serializes to TOML"),
            Format::Json => serde_json::to_string_pretty(self).expect("config serializes to JSON"),
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = o.duration {
            self.duration = d;
        }
        if let Some(v) = o.variant {
            self.scheduler.variant = v;
        }
        self.faults.extend(o.faults.iter().copied());
        if let Some(dir) = &o.out_dir {
            self.output.dir = dir.clone();
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            oscillator: self.oscillator.clone(),
            geometry: self.geometry,
            morph: self.morph,
            morph_ranges: self.morph_ranges,
            scheduler: self.scheduler,
            task: self.task.clone(),
            terrain: self.terrain,
            contact: self.contact,
            faults: self.faults.clone(),
            observation: self.observation,
            initial: self.initial,
        }
    }

    fn high_layout(&self) -> ObservationLayout {
        ObservationLayout::High {
            rows: self.observation.rows,
            cols: self.observation.cols,
        }
    }

    fn resolve_policy(
        &self,
        which: &str,
        policy: &PolicyConfig,
        role: PolicyRole,
        layout: ObservationLayout,
    ) -> Result<PolicySpec, ConfigError> {
        let key = format!("policies.{which}");
        let spec = match policy {
            PolicyConfig::Scripted { params } => PolicySpec::Scripted(*params),
            PolicyConfig::Constant { values } => PolicySpec::Constant(values.clone()),
            PolicyConfig::Random { amplitude } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(ConfigError::new(format!("{key}.amplitude"), "must be non-negative"));
                }
                PolicySpec::Random { amplitude: *amplitude }
            }
            PolicyConfig::Network { path } => {
                if !path.exists() {
                    return Err(ConfigError::new(
                        format!("{key}.path"),
                        format!("weight file {} does not exist", path.display()),
                    ));
                }
                let net = FeedForwardNet::load(path).map_err(|e| ConfigError::new(format!("{key}.path"), e.to_string()))?;
                PolicySpec::FeedForward(net)
            }
        };
        spec.build(role, layout, RngStream::new(0)).map_err(|e: ControllerError| {
            ConfigError::new(key, e.to_string())
        })?;
        Ok(spec)
    }

    /// Validates every field, loads weight files and checks their shapes.
    pub fn resolve(&self) -> Result<ResolvedRun, ConfigError> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(ConfigError::new("duration", format!("must be positive, got {}", self.duration)));
        }
        let sim = self.sim_config();
        sim.validate()?;
        let variant = self.scheduler.variant;
        let high = self.resolve_policy("high", &self.policies.high, variant.high_role(), self.high_layout())?;
        let mid = if variant.has_mid_level() {
            self.resolve_policy("mid", &self.policies.mid, PolicyRole::Mid, ObservationLayout::Mid)?
        } else {
            PolicySpec::zero()
        };
        Ok(ResolvedRun {
            sim,
            high,
            mid,
            duration: self.duration,
            seed: self.seed,
            output: self.output.clone(),
        })
    }

    /// Sets a field addressed by a dotted path (`morph.w_y`, `faults.0.leg`).
    /// Integral numbers are written as integers so that integer fields accept
    /// them.
    pub fn with_value(&self, path: &str, value: f64) -> Result<Self, ConfigError> {
        let mut doc = serde_json::to_value(self).expect("config serializes");
        let mut node = &mut doc;
        let parts: Vec<&str> = path.split('.').collect();
        for (k, part) in parts.iter().enumerate() {
            let here = parts[..=k].join(".");
            node = match node {
                serde_json::Value::Object(map) => map
                    .get_mut(*part)
                    .ok_or_else(|| ConfigError::new(&here, "no such key"))?,
                serde_json::Value::Array(items) => {
                    let idx: usize = part
                        .parse()
                        .map_err(|_| ConfigError::new(&here, "expected an array index"))?;
                    items
                        .get_mut(idx)
                        .ok_or_else(|| ConfigError::new(&here, "index out of range"))?
                }
                serde_json::Value::Null => return Err(ConfigError::new(&here, "section is not set")),
                _ => return Err(ConfigError::new(&here, "not a table")),
            };
        }
        if node.is_object() || node.is_array() {
            return Err(ConfigError::new(path, "not a scalar field"));
        }
        *node = if (node.is_u64() || node.is_i64()) && value.fract() == 0.0 {
            serde_json::json!(value as i64)
        } else {
            serde_json::json!(value)
        };
        let text = doc.to_string();
        Self::parse(&text, Format::Json)
    }
}

/// Canonical example scenarios shipped with the project.
pub fn example_config(task: Option<crate::reward::TaskKind>) -> RunConfig {
    use crate::reward::DifficultyLevel;
    RunConfig {
        task: task.map(|k| TaskConfig::new(k, DifficultyLevel::new(2).expect("valid level"))),
        ..Default::default()
    }
}
