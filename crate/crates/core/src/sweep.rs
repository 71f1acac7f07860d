//! Parameter sweeps: one rollout per grid point, run in parallel, reported in
//! grid order.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, PolicyConfig, RunConfig};
use crate::sim::{rollout, summarize, LogError, SimError, Summary};
use crate::skill::SkillVector;

#[derive(Clone, Debug, PartialEq)]
pub enum SweepParam {
    /// Dotted config path, e.g. `morph.w_y`.
    Field(String),
    /// Direction of a fixed skill (rad), replacing the high-level policy.
    SkillAngle,
    /// Norm of a fixed skill, replacing the high-level policy.
    SkillNorm,
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "" => Err("empty parameter name".into()),
            "skill.angle" => Ok(SweepParam::SkillAngle),
            "skill.norm" => Ok(SweepParam::SkillNorm),
            other => Ok(SweepParam::Field(other.to_string())),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepParam::Field(p) => f.write_str(p),
            SweepParam::SkillAngle => f.write_str("skill.angle"),
            SweepParam::SkillNorm => f.write_str("skill.norm"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    /// Skill norm used while sweeping the angle.
    pub skill_norm: f64,
    /// Skill angle used while sweeping the norm.
    pub skill_angle: f64,
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep range is empty")]
    EmptyRange,
    #[error("sweep value {0} is not finite")]
    NonFinite(f64),
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("point {index}: {source}")]
    Sim { index: usize, source: SimError },
    #[error("point {index}: {source}")]
    Output { index: usize, source: LogError },
    #[error("thread pool: {0}")]
    Pool(String),
}

impl SweepSpec {
    pub fn new(param: SweepParam, values: Vec<f64>) -> Result<Self, SweepError> {
        if values.is_empty() {
            return Err(SweepError::EmptyRange);
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(SweepError::NonFinite(*v));
        }
        Ok(Self {
            param,
            values,
            skill_norm: 1.0,
            skill_angle: 0.0,
        })
    }

    /// `count` evenly spaced values from `from` to `to` inclusive. A single
    /// point sits at `from`.
    pub fn linspace(param: SweepParam, from: f64, to: f64, count: usize) -> Result<Self, SweepError> {
        let values = match count {
            0 => Vec::new(),
            1 => vec![from],
            n => (0..n)
                .map(|k| from + (to - from) * k as f64 / (n - 1) as f64)
                .collect(),
        };
        Self::new(param, values)
    }

    /// Skill angles evenly covering the circle, starting at zero.
    pub fn directions(count: usize) -> Result<Self, SweepError> {
        let values = (0..count)
            .map(|k| 2.0 * std::f64::consts::PI * k as f64 / count as f64)
            .collect();
        Self::new(SweepParam::SkillAngle, values)
    }

    /// Config for one grid point.
    pub fn config_at(&self, base: &RunConfig, value: f64) -> Result<RunConfig, ConfigError> {
        let skill = match self.param {
            SweepParam::Field(ref path) => return base.with_value(path, value),
            SweepParam::SkillAngle => SkillVector::from_polar(self.skill_norm, value),
            SweepParam::SkillNorm => SkillVector::from_polar(value, self.skill_angle),
        };
        if !base.scheduler.variant.has_mid_level() {
            return Err(ConfigError::new(
                "scheduler.variant",
                "skill sweeps need a mid-level policy to consume the skill",
            ));
        }
        let mut config = base.clone();
        config.policies.high = PolicyConfig::Constant {
            values: vec![0.0, 0.0, 0.0, 0.0, 0.0, skill.x, skill.y],
        };
        Ok(config)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub value: f64,
    pub summary: Summary,
    /// Trajectory file written for this point, if any.
    pub trajectory: Option<PathBuf>,
}

/// Runs every grid point. Configs are resolved up front so a bad value fails
/// before any rollout starts. With `trajectory_dir` set, each point writes
/// `point_NNN.csv` there from its own worker.
pub fn run_sweep(
    base: &RunConfig,
    spec: &SweepSpec,
    jobs: Option<usize>,
    trajectory_dir: Option<&Path>,
) -> Result<Vec<SweepPoint>, SweepError> {
    let runs = spec
        .values
        .iter()
        .map(|v| spec.config_at(base, *v).and_then(|c| c.resolve()))
        .collect::<Result<Vec<_>, _>>()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| SweepError::Pool(e.to_string()))?;
    pool.install(|| {
        runs.par_iter()
            .enumerate()
            .map(|(index, run)| {
                let log = rollout(&run.sim, &run.high, &run.mid, run.duration, run.seed)
                    .map_err(|source| SweepError::Sim { index, source })?;
                let summary = summarize(&log).map_err(|source| SweepError::Output { index, source })?;
                let trajectory = match trajectory_dir {
                    Some(dir) => {
                        let path = dir.join(format!("point_{index:03}.csv"));
                        let file = File::create(&path).map_err(|e| SweepError::Output {
                            index,
                            source: e.into(),
                        })?;
                        log.write_csv(BufWriter::new(file))
                            .map_err(|source| SweepError::Output { index, source })?;
                        Some(path)
                    }
                    None => None,
                };
                Ok(SweepPoint {
                    index,
                    value: spec.values[index],
                    summary,
                    trajectory,
                })
            })
            .collect()
    })
}

pub const SWEEP_COLUMNS: [&str; 19] = [
    "index",
    "param",
    "value",
    "steps",
    "duration",
    "mean_vx",
    "mean_vy",
    "mean_speed",
    "mean_body_vx",
    "final_x",
    "final_y",
    "final_yaw",
    "mean_py",
    "mean_stance_fraction",
    "total_reward",
    "total_lsd_reward",
    "goals_reached",
    "high_evaluations",
    "mid_evaluations",
];

pub fn write_sweep_csv<W: Write>(param: &SweepParam, points: &[SweepPoint], w: W) -> Result<(), LogError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SWEEP_COLUMNS)?;
    for p in points {
        let s = &p.summary;
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        out.write_record([
            p.index.to_string(),
            param.to_string(),
            p.value.to_string(),
            s.steps.to_string(),
            s.duration.to_string(),
            s.mean_vx.to_string(),
            s.mean_vy.to_string(),
            s.mean_speed.to_string(),
            s.mean_body_vx.to_string(),
            s.final_position[0].to_string(),
            s.final_position[1].to_string(),
            s.final_yaw.to_string(),
            mean(&s.mean_py).to_string(),
            mean(&s.stance_fraction).to_string(),
            s.total_reward.map(|r| r.to_string()).unwrap_or_default(),
            s.total_lsd_reward.to_string(),
            s.goals_reached.to_string(),
            s.high_evaluations.to_string(),
            s.mid_evaluations.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
