//! Hierarchical controller: a slow high-level policy emits morphology deltas
//! and a skill, a faster mid-level policy turns the skill into per-leg
//! amplitude and frequency factors, and the oscillator consumes both every
//! step.

mod policy;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use policy::{
    policy_forward, Activation, ConstantPolicy, DenseLayer, FeedForwardNet, NetPolicy, Policy, PolicyInput,
    PolicyRole, PolicySpec, RandomPolicy, ScriptedParams, ScriptedPolicy, Squash, WEIGHT_SCHEMA_VERSION,
};

use crate::leg::LEG_COUNT;
use crate::oscillator::{compute_omega_max, ControlInputs, LegVector, PhaseModel};
use crate::pose::{apply_morph_delta, MorphParams, MorphRanges};
use crate::rng::RngStream;
use crate::skill::SkillVector;

pub const JOINT_COUNT: usize = 3 * LEG_COUNT;
/// Joints, quaternion, angular velocity, linear acceleration, morphology, `omega_m`.
pub const PROPRIO_LEN: usize = JOINT_COUNT + 4 + 3 + 3 + 5 + 1;
pub const MID_OBS_LEN: usize = PROPRIO_LEN + 2;
pub const HEADING_LEN: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("{what}: expected length {expected}, got {actual}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid network: {0}")]
    InvalidNet(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("policy produced a non-finite action")]
    NonFinite,
}

/// Ablations of the full stack.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StackVariant {
    #[default]
    Full,
    /// No separate tripod phase; coupling acts on the adjustable phase.
    NoAlpha,
    /// No mid level; the high level drives the oscillator directly.
    NoVpath,
    /// Morphology is frozen at its initial value.
    NoLpath,
}

impl StackVariant {
    pub const ALL: [StackVariant; 4] = [
        StackVariant::Full,
        StackVariant::NoAlpha,
        StackVariant::NoVpath,
        StackVariant::NoLpath,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StackVariant::Full => "full",
            StackVariant::NoAlpha => "noalpha",
            StackVariant::NoVpath => "novpath",
            StackVariant::NoLpath => "nolpath",
        }
    }

    pub fn phase_model(self) -> PhaseModel {
        match self {
            StackVariant::NoAlpha => PhaseModel::Coupled,
            _ => PhaseModel::Embedded,
        }
    }

    pub fn has_mid_level(self) -> bool {
        self != StackVariant::NoVpath
    }

    pub fn high_role(self) -> PolicyRole {
        if self.has_mid_level() {
            PolicyRole::High
        } else {
            PolicyRole::Direct
        }
    }
}

impl fmt::Display for StackVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StackVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        StackVariant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(&key))
            .ok_or_else(|| format!("unknown variant '{s}' (expected full, noalpha, novpath or nolpath)"))
    }
}

/// Evaluation periods, in oscillator steps for the mid level and in mid-level
/// ticks for the high level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    pub mid_period: u64,
    pub high_period: u64,
    pub variant: StackVariant,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            mid_period: 12,
            high_period: 10,
            variant: StackVariant::Full,
        }
    }
}

impl SchedulerConfig {
    pub fn high_stride(&self) -> u64 {
        self.mid_period * self.high_period
    }

    /// `(high, mid)` evaluation flags at oscillator step `t`.
    pub fn evaluates(&self, t: u64) -> (bool, bool) {
        let high = t % self.high_stride() == 0;
        let mid = self.variant.has_mid_level() && t % self.mid_period == 0;
        (high, mid)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HighLevelAction {
    pub delta_morph: [f64; 5],
    pub skill: SkillVector,
}

impl HighLevelAction {
    /// Parses `[delta_morph(5), z(2)]`; deltas are clamped to `[-1, 1]` and the
    /// skill projected onto the unit disc.
    pub fn from_slice(a: &[f64]) -> Result<Self, ControllerError> {
        check_action(a, 7)?;
        Ok(Self {
            delta_morph: clamp5(&a[..5]),
            skill: SkillVector::from_raw(a[5], a[6]),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MidLevelAction {
    pub mu: LegVector,
    pub omega: LegVector,
}

impl Default for MidLevelAction {
    fn default() -> Self {
        Self {
            mu: [0.0; LEG_COUNT],
            omega: [-1.0; LEG_COUNT],
        }
    }
}

impl MidLevelAction {
    pub fn from_slice(a: &[f64]) -> Result<Self, ControllerError> {
        check_action(a, 12)?;
        let mut out = Self::default();
        for i in 0..LEG_COUNT {
            out.mu[i] = a[i].clamp(-1.0, 1.0);
            out.omega[i] = a[LEG_COUNT + i].clamp(-1.0, 1.0);
        }
        Ok(out)
    }
}

/// Single-level action used when the mid level is removed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectAction {
    pub mid: MidLevelAction,
    pub delta_morph: [f64; 5],
}

impl DirectAction {
    pub fn from_slice(a: &[f64]) -> Result<Self, ControllerError> {
        check_action(a, 17)?;
        Ok(Self {
            mid: MidLevelAction::from_slice(&a[..12])?,
            delta_morph: clamp5(&a[12..]),
        })
    }
}

fn check_action(a: &[f64], n: usize) -> Result<(), ControllerError> {
    if a.len() != n {
        return Err(ControllerError::ShapeMismatch {
            what: "action",
            expected: n,
            actual: a.len(),
        });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(ControllerError::NonFinite);
    }
    Ok(())
}

fn clamp5(a: &[f64]) -> [f64; 5] {
    let mut d = [0.0; 5];
    for (x, y) in d.iter_mut().zip(a) {
        *x = y.clamp(-1.0, 1.0);
    }
    d
}

/// Outcome of routing a high-level action through its two pathways.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Routed {
    pub morph: MorphParams,
    pub omega_m: f64,
    pub skill: SkillVector,
}

/// Splits a high-level action: the lateral pathway updates the morphology and
/// the vertical pathway sets the skill and, through its norm, `omega_m`.
pub fn route_dual_pathway(
    action: &HighLevelAction,
    morph: &MorphParams,
    ranges: &MorphRanges,
    omega_scale: f64,
    variant: StackVariant,
) -> Routed {
    let morph = if variant == StackVariant::NoLpath {
        *morph
    } else {
        apply_morph_delta(morph, &action.delta_morph, ranges)
    };
    Routed {
        morph,
        omega_m: compute_omega_max(action.skill.norm(), omega_scale),
        skill: action.skill,
    }
}

/// Body-mounted sensor readings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proprioception {
    pub joints: [f64; JOINT_COUNT],
    /// `(w, x, y, z)`
    pub orientation: [f64; 4],
    pub angular_velocity: [f64; 3],
    pub linear_acceleration: [f64; 3],
    pub morph: MorphParams,
    pub omega_m: f64,
}

impl Default for Proprioception {
    fn default() -> Self {
        Self {
            joints: [0.0; JOINT_COUNT],
            orientation: [1.0, 0.0, 0.0, 0.0],
            angular_velocity: [0.0; 3],
            linear_acceleration: [0.0; 3],
            morph: MorphParams::default(),
            omega_m: 0.0,
        }
    }
}

impl Proprioception {
    fn write(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.joints);
        out.extend_from_slice(&self.orientation);
        out.extend_from_slice(&self.angular_velocity);
        out.extend_from_slice(&self.linear_acceleration);
        out.extend_from_slice(&self.morph.to_array());
        out.push(self.omega_m);
    }
}

/// Exteroceptive input for the high level: a height grid around the body and
/// body-frame headings to the next two goals.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    /// Row-major, `rows x cols`.
    pub heights: Vec<f64>,
    pub headings: [[f64; 2]; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObservationLayout {
    Mid,
    High { rows: usize, cols: usize },
}

impl ObservationLayout {
    pub fn len(&self) -> usize {
        match *self {
            ObservationLayout::Mid => MID_OBS_LEN,
            ObservationLayout::High { rows, cols } => PROPRIO_LEN + rows * cols + HEADING_LEN,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Concatenates proprioception with either the skill (mid layout, zero when
/// absent) or the environment block (high layout, required).
pub fn assemble_observation(
    proprio: &Proprioception,
    environment: Option<&Environment>,
    skill: Option<SkillVector>,
    layout: ObservationLayout,
) -> Result<Vec<f64>, ControllerError> {
    let mut out = Vec::with_capacity(layout.len());
    proprio.write(&mut out);
    match layout {
        ObservationLayout::Mid => {
            if let Some(env) = environment {
                return Err(ControllerError::ShapeMismatch {
                    what: "mid-level environment block",
                    expected: 0,
                    actual: env.heights.len() + HEADING_LEN,
                });
            }
            out.extend_from_slice(&skill.unwrap_or_default().to_array());
        }
        ObservationLayout::High { rows, cols } => {
            let env = environment.ok_or(ControllerError::ShapeMismatch {
                what: "high-level environment block",
                expected: rows * cols + HEADING_LEN,
                actual: 0,
            })?;
            if env.heights.len() != rows * cols {
                return Err(ControllerError::ShapeMismatch {
                    what: "height grid",
                    expected: rows * cols,
                    actual: env.heights.len(),
                });
            }
            out.extend_from_slice(&env.heights);
            for h in env.headings {
                out.extend_from_slice(&h);
            }
        }
    }
    debug_assert_eq!(out.len(), layout.len());
    Ok(out)
}

/// Sensor snapshot handed to the stack each oscillator step.
pub struct Sensors<'a> {
    pub proprio: Proprioception,
    pub phases: LegVector,
    /// Called only on high-level steps.
    pub environment: &'a dyn Fn() -> Environment,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TickOutput {
    pub inputs: ControlInputs,
    pub morph: MorphParams,
    pub skill: SkillVector,
    pub high_evaluated: bool,
    pub mid_evaluated: bool,
}

/// Runs the policies on their schedule and holds their outputs in between.
pub struct ControllerStack {
    scheduler: SchedulerConfig,
    ranges: MorphRanges,
    omega_scale: f64,
    high: Box<dyn Policy>,
    mid: Option<Box<dyn Policy>>,
    high_layout: ObservationLayout,
    held_mid: MidLevelAction,
    skill: SkillVector,
    omega_m: f64,
    high_evals: u64,
    mid_evals: u64,
}

pub struct StackConfig {
    pub scheduler: SchedulerConfig,
    pub ranges: MorphRanges,
    pub omega_scale: f64,
    pub grid_rows: usize,
    pub grid_cols: usize,
}

impl ControllerStack {
    pub fn new(
        config: StackConfig,
        high: &PolicySpec,
        mid: &PolicySpec,
        high_rng: RngStream,
        mid_rng: RngStream,
    ) -> Result<Self, ControllerError> {
        let variant = config.scheduler.variant;
        let high_layout = ObservationLayout::High {
            rows: config.grid_rows,
            cols: config.grid_cols,
        };
        let high = high.build(variant.high_role(), high_layout, high_rng)?;
        let mid = if variant.has_mid_level() {
            Some(mid.build(PolicyRole::Mid, ObservationLayout::Mid, mid_rng)?)
        } else {
            None
        };
        Ok(Self {
            scheduler: config.scheduler,
            ranges: config.ranges,
            omega_scale: config.omega_scale,
            high,
            mid,
            high_layout,
            held_mid: MidLevelAction::default(),
            skill: SkillVector::ZERO,
            omega_m: compute_omega_max(0.0, config.omega_scale),
            high_evals: 0,
            mid_evals: 0,
        })
    }

    pub fn variant(&self) -> StackVariant {
        self.scheduler.variant
    }

    pub fn evaluations(&self) -> (u64, u64) {
        (self.high_evals, self.mid_evals)
    }

    /// One oscillator step. The high level runs first when due, so a mid-level
    /// evaluation on the same step already sees the new skill and morphology.
    pub fn tick(&mut self, t: u64, morph: &MorphParams, sensors: &Sensors<'_>) -> Result<TickOutput, ControllerError> {
        let (run_high, run_mid) = self.scheduler.evaluates(t);
        let variant = self.scheduler.variant;
        let mut morph = *morph;
        let mut proprio = sensors.proprio;

        if run_high {
            let env = (sensors.environment)();
            proprio.morph = morph;
            proprio.omega_m = self.omega_m;
            let obs = assemble_observation(&proprio, Some(&env), None, self.high_layout)?;
            let raw = self.high.act(&PolicyInput {
                observation: &obs,
                phases: &sensors.phases,
            })?;
            self.high_evals += 1;
            if variant.has_mid_level() {
                let action = HighLevelAction::from_slice(&raw)?;
                let routed = route_dual_pathway(&action, &morph, &self.ranges, self.omega_scale, variant);
                morph = routed.morph;
                self.omega_m = routed.omega_m;
                self.skill = routed.skill;
            } else {
                let action = DirectAction::from_slice(&raw)?;
                morph = apply_morph_delta(&morph, &action.delta_morph, &self.ranges);
                self.omega_m = self.omega_scale;
                self.held_mid = action.mid;
            }
        }

        if run_mid {
            if let Some(mid) = self.mid.as_mut() {
                proprio.morph = morph;
                proprio.omega_m = self.omega_m;
                let obs = assemble_observation(&proprio, None, Some(self.skill), ObservationLayout::Mid)?;
                let raw = mid.act(&PolicyInput {
                    observation: &obs,
                    phases: &sensors.phases,
                })?;
                self.mid_evals += 1;
                self.held_mid = MidLevelAction::from_slice(&raw)?;
            }
        }

        Ok(TickOutput {
            inputs: ControlInputs {
                mu: self.held_mid.mu,
                omega: self.held_mid.omega,
                omega_m: self.omega_m,
            },
            morph,
            skill: self.skill,
            high_evaluated: run_high,
            mid_evaluated: run_mid,
        })
    }
}
