//! Kinematic hexapod simulator.
//!
//! The body is modelled as statically stable: it moves opposite to the mean
//! velocity of its stance feet, turns with the left/right difference of those
//! velocities, and rides at height `h` above the terrain under its centre.
//! Contact forces are synthesised from load sharing and a terrain-overlap test
//! so the task rewards can be evaluated end to end.

mod log;
mod terrain;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use log::{
    extract_gait_diagram, log_columns, stance_detect, summarize, GaitDiagram, LogError, Summary, TrajectoryLog,
    LOG_SCHEMA_VERSION,
};
pub use terrain::{HeightField, TerrainSpec};

use crate::controller::{
    ControllerError, ControllerStack, Environment, PolicySpec, Proprioception, SchedulerConfig, Sensors, StackConfig,
    JOINT_COUNT,
};
use crate::leg::{Leg, LEG_COUNT};
use crate::oscillator::{self, OscillatorParams, OscillatorState, PhaseModel};
use crate::pose::{
    default_mounts, foot_position, forward_kinematics, gait_to_joint, inverse_kinematics_clamped, joint_to_body,
    FootPosition, IkBranch, JointAngles, JointLimits, LegGeometry, MorphParams, MorphRanges,
};
use crate::reward::{
    lsd_step_reward, sub_rewards, task_reward, BodyState, DifficultyLevel, Projection, TaskKind, Vec2,
    DEFAULT_V_MAX,
};
use crate::rng::{streams, RngStream};
use crate::skill::SkillVector;

const TERRAIN_RESOLUTION: f64 = 0.01;
const TERRAIN_MARGIN: f64 = 3.0;

/// Body and leg dimensions shared by all six legs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BodyGeometry {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    /// Distance from the body centre to the front and hind coxa joints.
    pub half_length: f64,
    /// Lateral offset of every coxa joint.
    pub half_width: f64,
    pub branch: IkBranch,
    pub joint_limits: JointLimits,
}

impl Default for BodyGeometry {
    fn default() -> Self {
        let leg = LegGeometry::default();
        Self {
            l1: leg.l1,
            l2: leg.l2,
            l3: leg.l3,
            half_length: 0.1,
            half_width: 0.06,
            branch: IkBranch::TibiaDown,
            joint_limits: JointLimits::default(),
        }
    }
}

impl BodyGeometry {
    pub fn legs(&self) -> [LegGeometry; LEG_COUNT] {
        default_mounts(self.half_length, self.half_width).map(|mount| LegGeometry {
            l1: self.l1,
            l2: self.l2,
            l3: self.l3,
            mount,
            branch: self.branch,
        })
    }
}

fn default_difficulty() -> DifficultyLevel {
    DifficultyLevel::MIN
}

fn default_goal_radius() -> f64 {
    0.2
}

fn default_v_max() -> f64 {
    DEFAULT_V_MAX
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub kind: TaskKind,
    #[serde(default = "default_difficulty")]
    pub difficulty: DifficultyLevel,
    /// World-frame waypoints; the last one is the final goal. Empty means a
    /// straight course along +x.
    #[serde(default)]
    pub goals: Vec<[f64; 2]>,
    #[serde(default = "default_goal_radius")]
    pub goal_radius: f64,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
}

impl TaskConfig {
    pub fn new(kind: TaskKind, difficulty: DifficultyLevel) -> Self {
        Self {
            kind,
            difficulty,
            goals: Vec::new(),
            goal_radius: default_goal_radius(),
            v_max: DEFAULT_V_MAX,
        }
    }

    pub fn resolved_goals(&self) -> Vec<[f64; 2]> {
        if self.goals.is_empty() {
            vec![[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]
        } else {
            self.goals.clone()
        }
    }
}

/// Constants of the contact-force proxy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactConfig {
    /// kg
    pub body_mass: f64,
    /// m/s^2
    pub gravity: f64,
    /// Horizontal force per unit foot speed on obstacle contact (N s/m).
    pub obstacle_gain: f64,
    /// Extra depth below the stance press-down before a foot counts as
    /// overlapping the terrain (m).
    pub overlap_margin: f64,
    /// Disables horizontal contact forces entirely when false.
    pub obstacle_contact: bool,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self {
            body_mass: 2.0,
            gravity: 9.81,
            obstacle_gain: 200.0,
            overlap_margin: 0.005,
            obstacle_contact: true,
        }
    }
}

fn default_true() -> bool {
    true
}

/// Locks all three joints of one leg.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub leg: Leg,
    /// Applied to all three joints (rad).
    pub frozen_value: f64,
    /// Sensors report the frozen value. When false they keep reporting the
    /// angles the controller commands.
    #[serde(default = "default_true")]
    pub feedback_frozen: bool,
    /// Simulation time at which the fault takes effect (s).
    #[serde(default)]
    pub start_time: f64,
}

impl FaultSpec {
    pub fn new(leg: Leg, frozen_value: f64) -> Self {
        Self {
            leg,
            frozen_value,
            feedback_frozen: true,
            start_time: 0.0,
        }
    }
}

/// Height samples fed to the high level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationConfig {
    pub rows: usize,
    pub cols: usize,
    /// m
    pub spacing: f64,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self {
            rows: 11,
            cols: 11,
            spacing: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    /// Starting oscillator amplitude of every leg.
    pub amplitude: f64,
    /// Uniform perturbation of each tripod phase, in `[-noise, noise]` rad.
    pub phase_noise: f64,
    pub position: [f64; 2],
    pub yaw: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            phase_noise: 0.0,
            position: [0.0, 0.0],
            yaw: 0.0,
        }
    }
}

/// Everything a rollout needs apart from the policies.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub oscillator: OscillatorParams,
    pub geometry: BodyGeometry,
    pub morph: MorphParams,
    pub morph_ranges: MorphRanges,
    pub scheduler: SchedulerConfig,
    pub task: Option<TaskConfig>,
    pub terrain: Option<TerrainSpec>,
    pub contact: ContactConfig,
    pub faults: Vec<FaultSpec>,
    pub observation: ObservationConfig,
    pub initial: InitialConfig,
}

/// A semantic problem with one configuration field.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{path}: {message}")]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl FieldError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

fn require(ok: bool, path: &str, message: impl Into<String>) -> Result<(), FieldError> {
    if ok {
        Ok(())
    } else {
        Err(FieldError::new(path, message))
    }
}

fn positive(path: &str, x: f64) -> Result<(), FieldError> {
    require(x.is_finite() && x > 0.0, path, format!("must be positive and finite, got {x}"))
}

impl SimConfig {
    /// Terrain actually used: the explicit spec, else the task's default
    /// obstacle, else flat ground.
    pub fn resolved_terrain(&self) -> TerrainSpec {
        match (&self.terrain, &self.task) {
            (Some(t), _) => *t,
            (None, Some(task)) => TerrainSpec::for_task(task.kind, task.difficulty),
            (None, None) => TerrainSpec::Flat,
        }
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        self.oscillator
            .validate()
            .map_err(|e| FieldError::new("oscillator", e.to_string()))?;
        let g = &self.geometry;
        positive("geometry.l1", g.l1)?;
        positive("geometry.l2", g.l2)?;
        positive("geometry.l3", g.l3)?;
        require(
            g.half_length.is_finite() && g.half_length >= 0.0,
            "geometry.half_length",
            "must be non-negative",
        )?;
        require(
            g.half_width.is_finite() && g.half_width >= 0.0,
            "geometry.half_width",
            "must be non-negative",
        )?;
        for (name, r) in [
            ("j0", g.joint_limits.j0),
            ("j1", g.joint_limits.j1),
            ("j2", g.joint_limits.j2),
        ] {
            require(
                r.min.is_finite() && r.max.is_finite() && r.min <= r.max,
                &format!("geometry.joint_limits.{name}"),
                format!("min ({}) must not exceed max ({})", r.min, r.max),
            )?;
        }
        let names = crate::pose::MORPH_FIELDS;
        for (k, r) in self.morph_ranges.to_array().iter().enumerate() {
            require(
                r.min.is_finite() && r.max.is_finite() && r.min <= r.max,
                &format!("morph_ranges.{}", names[k]),
                format!("min ({}) must not exceed max ({})", r.min, r.max),
            )?;
        }
        for (k, (x, r)) in self
            .morph
            .to_array()
            .iter()
            .zip(self.morph_ranges.to_array())
            .enumerate()
        {
            require(
                r.contains(*x),
                &format!("morph.{}", names[k]),
                format!("{x} outside [{}, {}]", r.min, r.max),
            )?;
        }
        require(self.scheduler.mid_period > 0, "scheduler.mid_period", "must be at least 1")?;
        require(self.scheduler.high_period > 0, "scheduler.high_period", "must be at least 1")?;
        if let Some(task) = &self.task {
            positive("task.goal_radius", task.goal_radius)?;
            positive("task.v_max", task.v_max)?;
            for (k, goal) in task.goals.iter().enumerate() {
                require(
                    goal.iter().all(|x| x.is_finite()),
                    &format!("task.goals[{k}]"),
                    "must be finite",
                )?;
            }
        }
        if let Some(t) = &self.terrain {
            t.validate().map_err(|m| FieldError::new("terrain", m))?;
        }
        let c = &self.contact;
        positive("contact.body_mass", c.body_mass)?;
        positive("contact.gravity", c.gravity)?;
        require(
            c.obstacle_gain.is_finite() && c.obstacle_gain >= 0.0,
            "contact.obstacle_gain",
            "must be non-negative",
        )?;
        require(
            c.overlap_margin.is_finite() && c.overlap_margin >= 0.0,
            "contact.overlap_margin",
            "must be non-negative",
        )?;
        for (k, f) in self.faults.iter().enumerate() {
            require(
                f.frozen_value.is_finite(),
                &format!("faults[{k}].frozen_value"),
                "must be finite",
            )?;
            require(
                f.start_time.is_finite() && f.start_time >= 0.0,
                &format!("faults[{k}].start_time"),
                "must be non-negative",
            )?;
        }
        require(
            self.observation.rows > 0 && self.observation.cols > 0,
            "observation",
            "height grid must have at least one row and column",
        )?;
        positive("observation.spacing", self.observation.spacing)?;
        positive("initial.amplitude", self.initial.amplitude)?;
        require(
            self.initial.phase_noise.is_finite() && self.initial.phase_noise >= 0.0,
            "initial.phase_noise",
            "must be non-negative",
        )?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(#[from] FieldError),
    #[error("controller: {0}")]
    Controller(#[from] ControllerError),
    #[error("state became non-finite at step {0}")]
    NonFinite(u64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BodyPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

impl BodyPose {
    /// Body-frame point to world frame.
    pub fn to_world(&self, p: &FootPosition) -> FootPosition {
        let (s, c) = self.yaw.sin_cos();
        FootPosition {
            x: self.x + c * p.x - s * p.y,
            y: self.y + s * p.x + c * p.y,
            z: self.z + p.z,
        }
    }

    pub fn heading(&self) -> Vec2 {
        let (s, c) = self.yaw.sin_cos();
        [c, s]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub time: f64,
    pub step: u64,
    pub body: BodyPose,
    /// World frame (m/s).
    pub velocity: [f64; 3],
    /// Body frame planar velocity (m/s).
    pub body_velocity: [f64; 2],
    pub yaw_rate: f64,
    pub oscillator: OscillatorState,
    pub morph: MorphParams,
    /// Gait-frame foot targets.
    pub targets: [FootPosition; LEG_COUNT],
    /// Angles commanded by the controller before any fault override.
    pub commanded: [JointAngles; LEG_COUNT],
    /// Angles actually held by the joints.
    pub joints: [JointAngles; LEG_COUNT],
    /// Achieved foot positions in the body frame.
    pub feet: [FootPosition; LEG_COUNT],
    /// Body-frame foot velocities over the last step.
    pub foot_velocity: [FootPosition; LEG_COUNT],
    /// Legs currently supporting the body.
    pub stance: [bool; LEG_COUNT],
    pub faults: Vec<FaultSpec>,
}

impl SimState {
    pub fn fault(&self, leg: Leg) -> Option<&FaultSpec> {
        self.faults.iter().rev().find(|f| f.leg == leg)
    }

    /// Joint angles as the sensors report them.
    pub fn reported_joints(&self) -> [f64; JOINT_COUNT] {
        let mut out = [0.0; JOINT_COUNT];
        for leg in Leg::ALL {
            let i = leg.index();
            let q = match self.fault(leg) {
                Some(f) if !f.feedback_frozen => self.commanded[i],
                _ => self.joints[i],
            };
            out[3 * i..3 * i + 3].copy_from_slice(&q.to_array());
        }
        out
    }
}

/// Freezes a leg from now on. Its joints are set to the frozen value at once
/// and it no longer counts as support.
pub fn inject_fault(state: &mut SimState, fault: FaultSpec) {
    let i = fault.leg.index();
    state.faults.retain(|f| f.leg != fault.leg);
    state.faults.push(fault);
    state.joints[i] = JointAngles::splat(fault.frozen_value);
    state.stance[i] = false;
}

/// Advances the body pose by one explicit Euler step from the stance-foot
/// velocities in `state`. With no stance leg the body holds still. The body
/// rests `h` above the ground under its centre, or above the mean
/// load-bearing foothold when the centre is over a hole.
pub fn body_update(state: &mut SimState, ground: &dyn Fn(f64, f64) -> f64, dt: f64) {
    let mut n = 0usize;
    let mut u = [0.0; 2];
    let (mut left, mut right) = ((0usize, 0.0, 0.0), (0usize, 0.0, 0.0));
    for leg in Leg::ALL {
        let i = leg.index();
        if !state.stance[i] {
            continue;
        }
        let fv = state.foot_velocity[i];
        n += 1;
        u[0] += fv.x;
        u[1] += fv.y;
        let side = if leg.is_left() { &mut left } else { &mut right };
        side.0 += 1;
        side.1 += fv.x;
        side.2 += state.feet[i].y;
    }
    let (vb, yaw_rate) = if n == 0 {
        ([0.0, 0.0], 0.0)
    } else {
        let vb = [-u[0] / n as f64, -u[1] / n as f64];
        let yaw_rate = if left.0 > 0 && right.0 > 0 {
            let track = left.2 / left.0 as f64 - right.2 / right.0 as f64;
            if track > 1e-9 {
                (left.1 / left.0 as f64 - right.1 / right.0 as f64) / track
            } else {
                0.0
            }
        } else {
            0.0
        };
        (vb, yaw_rate)
    };
    let (s, c) = state.body.yaw.sin_cos();
    let vx = c * vb[0] - s * vb[1];
    let vy = s * vb[0] + c * vb[1];
    let mut body = BodyPose {
        x: state.body.x + vx * dt,
        y: state.body.y + vy * dt,
        z: state.body.z,
        yaw: state.body.yaw + yaw_rate * dt,
    };
    let footholds: Vec<f64> = (0..LEG_COUNT)
        .filter(|&i| state.stance[i])
        .map(|i| {
            let w = body.to_world(&state.feet[i]);
            ground(w.x, w.y)
        })
        .collect();
    let top = footholds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let centre = ground(body.x, body.y);
    // footholds over a hole deeper than the penetration depth carry no load
    let support = if top.is_finite() && centre < top - state.morph.g_p {
        let bearing: Vec<f64> = footholds.into_iter().filter(|g| *g >= top - state.morph.g_p).collect();
        bearing.iter().sum::<f64>() / bearing.len() as f64
    } else {
        centre
    };
    body.z = support + state.morph.h;
    let vz = (body.z - state.body.z) / dt;
    state.body = body;
    state.velocity = [vx, vy, vz];
    state.body_velocity = vb;
    state.yaw_rate = yaw_rate;
}

/// Per-foot `(|f_xy|, f_z)` proxy forces.
///
/// Stance legs share the body weight equally. Any foot that sinks deeper than
/// the stance press-down plus a margin is treated as hitting an obstacle and
/// gets a horizontal force proportional to its horizontal speed.
pub fn foot_contact_forces(
    state: &SimState,
    ground: &dyn Fn(f64, f64) -> f64,
    contact: &ContactConfig,
) -> [(f64, f64); LEG_COUNT] {
    let n = state.stance.iter().filter(|s| **s).count();
    let share = if n > 0 {
        contact.body_mass * contact.gravity / n as f64
    } else {
        0.0
    };
    let mut out = [(0.0, 0.0); LEG_COUNT];
    for i in 0..LEG_COUNT {
        let w = state.body.to_world(&state.feet[i]);
        let overlap =
            contact.obstacle_contact && w.z < ground(w.x, w.y) - (state.morph.g_p + contact.overlap_margin);
        let speed = state.foot_velocity[i].x.hypot(state.foot_velocity[i].y);
        let f_xy = if overlap { contact.obstacle_gain * speed } else { 0.0 };
        let f_z = if state.stance[i] { share } else { 0.0 };
        out[i] = (f_xy, f_z);
    }
    out
}

fn quaternion_from_yaw(yaw: f64) -> [f64; 4] {
    let (s, c) = (0.5 * yaw).sin_cos();
    [c, 0.0, 0.0, s]
}

fn rotate_to_body(yaw: f64, v: [f64; 2]) -> [f64; 2] {
    let (s, c) = yaw.sin_cos();
    [c * v[0] + s * v[1], -s * v[0] + c * v[1]]
}

/// Closed-loop simulation of one robot.
pub struct Simulation {
    config: SimConfig,
    params: OscillatorParams,
    legs: [LegGeometry; LEG_COUNT],
    stack: ControllerStack,
    ground: HeightField,
    goals: Vec<[f64; 2]>,
    goals_reached: usize,
    pending_faults: Vec<FaultSpec>,
    state: SimState,
    last_skill: SkillVector,
    log: TrajectoryLog,
}

impl Simulation {
    pub fn new(config: &SimConfig, high: &PolicySpec, mid: &PolicySpec, seed: u64) -> Result<Self, SimError> {
        config.validate()?;
        let mut params = config.oscillator.clone();
        params.phase_model = config.scheduler.variant.phase_model();
        let legs = config.geometry.legs();
        let stack = ControllerStack::new(
            StackConfig {
                scheduler: config.scheduler,
                ranges: config.morph_ranges,
                omega_scale: params.omega_scale,
                grid_rows: config.observation.rows,
                grid_cols: config.observation.cols,
            },
            high,
            mid,
            RngStream::with_stream(seed, streams::HIGH_POLICY),
            RngStream::with_stream(seed, streams::MID_POLICY),
        )?;
        let goals = config.task.as_ref().map(|t| t.resolved_goals()).unwrap_or_default();
        let start = config.initial.position;
        let (mut x0, mut x1, mut y0, mut y1) = (start[0], start[0], start[1], start[1]);
        for g in &goals {
            x0 = x0.min(g[0]);
            x1 = x1.max(g[0]);
            y0 = y0.min(g[1]);
            y1 = y1.max(g[1]);
        }
        let ground = HeightField::rasterize(
            &config.resolved_terrain(),
            [x0 - TERRAIN_MARGIN, x1 + TERRAIN_MARGIN],
            [y0 - TERRAIN_MARGIN, y1 + TERRAIN_MARGIN],
            TERRAIN_RESOLUTION,
        );

        let mut oscillator = OscillatorState::initial(config.initial.amplitude, params.phase_model);
        if config.initial.phase_noise > 0.0 {
            let mut rng = RngStream::with_stream(seed, streams::INITIAL_STATE);
            let w = config.initial.phase_noise;
            let phases = match params.phase_model {
                PhaseModel::Embedded => &mut oscillator.alpha,
                PhaseModel::Coupled => &mut oscillator.theta,
            };
            for a in phases {
                *a += rng.uniform_in(-w, w);
            }
        }
        let body = BodyPose {
            x: start[0],
            y: start[1],
            z: ground.height_at(start[0], start[1]) + config.morph.h,
            yaw: config.initial.yaw,
        };
        let mut state = SimState {
            time: 0.0,
            step: 0,
            body,
            velocity: [0.0; 3],
            body_velocity: [0.0; 2],
            yaw_rate: 0.0,
            oscillator,
            morph: config.morph,
            targets: [FootPosition::default(); LEG_COUNT],
            commanded: [JointAngles::default(); LEG_COUNT],
            joints: [JointAngles::default(); LEG_COUNT],
            feet: [FootPosition::default(); LEG_COUNT],
            foot_velocity: [FootPosition::default(); LEG_COUNT],
            stance: [false; LEG_COUNT],
            faults: Vec::new(),
        };
        let mut sim = Self {
            config: config.clone(),
            params,
            legs,
            stack,
            ground,
            goals,
            goals_reached: 0,
            pending_faults: config.faults.clone(),
            state: state.clone(),
            last_skill: SkillVector::ZERO,
            log: TrajectoryLog::new(),
        };
        sim.update_legs(&mut state);
        state.foot_velocity = [FootPosition::default(); LEG_COUNT];
        sim.state = state;
        Ok(sim)
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn log(&self) -> &TrajectoryLog {
        &self.log
    }

    pub fn into_log(self) -> TrajectoryLog {
        self.log
    }

    pub fn ground_height(&self, x: f64, y: f64) -> f64 {
        self.ground.height_at(x, y)
    }

    pub fn evaluations(&self) -> (u64, u64) {
        self.stack.evaluations()
    }

    /// Recomputes targets, joints, feet and the stance set from the
    /// oscillator state and morphology in `state`.
    fn update_legs(&self, state: &mut SimState) {
        let phi = state.oscillator.mixed_phase();
        let dt = self.params.dt;
        for leg in Leg::ALL {
            let i = leg.index();
            let geom = &self.legs[i];
            let target = foot_position(state.oscillator.r[i], phi[i], &state.morph, geom);
            let (q, _) = inverse_kinematics_clamped(&gait_to_joint(&target, leg), geom);
            let q = self.config.geometry.joint_limits.clamp(&q);
            state.targets[i] = target;
            state.commanded[i] = q;
            let held = match state.fault(leg) {
                Some(f) => JointAngles::splat(f.frozen_value),
                None => q,
            };
            state.joints[i] = held;
            let foot = joint_to_body(&forward_kinematics(&held, geom), &geom.mount);
            let prev = state.feet[i];
            state.foot_velocity[i] = FootPosition::new((foot.x - prev.x) / dt, (foot.y - prev.y) / dt, (foot.z - prev.z) / dt);
            state.feet[i] = foot;
            state.stance[i] = state.fault(leg).is_none() && stance_detect(phi[i]);
        }
    }

    fn environment(&self) -> Environment {
        let obs = &self.config.observation;
        let b = &self.state.body;
        let heights = self.ground.sample_around([b.x, b.y], b.yaw, obs.rows, obs.cols, obs.spacing);
        let mut headings = [[0.0; 2]; 2];
        for (k, h) in headings.iter_mut().enumerate() {
            if let Some(g) = self.goals.get(self.goals_reached + k) {
                let d = [g[0] - b.x, g[1] - b.y];
                let n = d[0].hypot(d[1]);
                if n > 1e-12 {
                    *h = rotate_to_body(b.yaw, [d[0] / n, d[1] / n]);
                }
            }
        }
        Environment { heights, headings }
    }

    /// One oscillator step of the closed loop; appends a log row.
    pub fn step(&mut self) -> Result<(), SimError> {
        let dt = self.params.dt;
        let t = self.state.step;
        let now = t as f64 * dt;
        let mut k = 0;
        while k < self.pending_faults.len() {
            if self.pending_faults[k].start_time <= now + 1e-12 {
                let f = self.pending_faults.remove(k);
                inject_fault(&mut self.state, f);
            } else {
                k += 1;
            }
        }

        let prev_velocity = self.state.velocity;
        let prev_position = [self.state.body.x, self.state.body.y];
        let yaw = self.state.body.yaw;
        let env = self.environment();
        let env_fn = move || env.clone();
        let acc_world = [
            (self.state.velocity[0] - prev_velocity[0]) / dt,
            (self.state.velocity[1] - prev_velocity[1]) / dt,
        ];
        let acc_body = rotate_to_body(yaw, acc_world);
        let sensors = Sensors {
            proprio: Proprioception {
                joints: self.state.reported_joints(),
                orientation: quaternion_from_yaw(yaw),
                angular_velocity: [0.0, 0.0, self.state.yaw_rate],
                linear_acceleration: [acc_body[0], acc_body[1], self.config.contact.gravity],
                morph: self.state.morph,
                omega_m: 0.0,
            },
            phases: self.state.oscillator.mixed_phase(),
            environment: &env_fn,
        };
        let out = self.stack.tick(t, &self.state.morph, &sensors)?;
        self.last_skill = out.skill;

        let mut state = self.state.clone();
        state.morph = out.morph;
        state.oscillator = oscillator::step(&state.oscillator, &out.inputs, &self.params);
        if !state.oscillator.is_finite() {
            return Err(SimError::NonFinite(t));
        }
        self.update_legs(&mut state);
        let ground = |x: f64, y: f64| self.ground.height_at(x, y);
        body_update(&mut state, &ground, dt);
        state.step = t + 1;
        state.time = (t + 1) as f64 * dt;
        let forces = foot_contact_forces(&state, &ground, &self.config.contact);

        let mut rewards = [f64::NAN; 6];
        if let (Some(task), Some(goal)) = (
            &self.config.task,
            self.goals.get(self.goals_reached.min(self.goals.len().saturating_sub(1))),
        ) {
            let body = BodyState {
                position: [state.body.x, state.body.y, state.body.z],
                velocity: state.velocity,
                heading: state.body.heading(),
                foot_forces: forces,
            };
            if let Ok(sub) = sub_rewards(&body, *goal, task.v_max) {
                rewards = [
                    sub.speed,
                    sub.direction,
                    sub.balance,
                    sub.collision,
                    sub.time,
                    task_reward(&sub, task.kind, task.difficulty),
                ];
            }
            if self.goals_reached < self.goals.len() {
                let g = self.goals[self.goals_reached];
                if (g[0] - state.body.x).hypot(g[1] - state.body.y) < task.goal_radius {
                    self.goals_reached += 1;
                }
            }
        }
        let r_lsd = lsd_step_reward(
            &Projection::PLANAR,
            &prev_position,
            &[state.body.x, state.body.y],
            &out.skill,
            state.velocity[2],
        );

        let row = self.log_row(&state, &out.inputs, out.high_evaluated, out.mid_evaluated, &rewards, r_lsd);
        self.log.push(row);
        self.state = state;
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn log_row(
        &self,
        s: &SimState,
        inputs: &oscillator::ControlInputs,
        high: bool,
        mid: bool,
        rewards: &[f64; 6],
        r_lsd: f64,
    ) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.log.columns().len());
        row.extend_from_slice(&[
            s.time,
            s.body.x,
            s.body.y,
            s.body.z,
            s.body.yaw,
            s.velocity[0],
            s.velocity[1],
            s.velocity[2],
            s.body_velocity[0],
            s.body_velocity[1],
            s.yaw_rate,
            inputs.omega_m,
            self.last_skill.x,
            self.last_skill.y,
        ]);
        row.extend_from_slice(&s.morph.to_array());
        let osc = &s.oscillator;
        let phi = osc.mixed_phase();
        let reported = s.reported_joints();
        for i in 0..LEG_COUNT {
            let (t, f) = (s.targets[i], s.feet[i]);
            row.extend_from_slice(&[
                osc.r[i],
                osc.v[i],
                osc.theta[i],
                osc.alpha[i],
                phi[i],
                t.x,
                t.y,
                t.z,
                f.x,
                f.y,
                f.z,
                reported[3 * i],
                reported[3 * i + 1],
                reported[3 * i + 2],
                s.stance[i] as u8 as f64,
                inputs.mu[i],
                inputs.omega[i],
            ]);
        }
        row.extend_from_slice(&[high as u8 as f64, mid as u8 as f64, self.goals_reached as f64]);
        row.extend_from_slice(rewards);
        row.push(r_lsd);
        row
    }

    /// Runs `steps` oscillator steps.
    pub fn run_steps(&mut self, steps: u64) -> Result<(), SimError> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }
}

/// Number of oscillator steps in `duration` seconds.
pub fn step_count(duration: f64, dt: f64) -> u64 {
    (duration / dt).round().max(0.0) as u64
}

/// Deterministic closed-loop run from a fresh state.
pub fn rollout(
    config: &SimConfig,
    high: &PolicySpec,
    mid: &PolicySpec,
    duration: f64,
    seed: u64,
) -> Result<TrajectoryLog, SimError> {
    let mut sim = Simulation::new(config, high, mid, seed)?;
    sim.run_steps(step_count(duration, config.oscillator.dt))?;
    Ok(sim.into_log())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::{ScriptedParams, StackVariant};
    use approx::assert_abs_diff_eq;

    fn zero() -> PolicySpec {
        PolicySpec::zero()
    }

    fn blank_state() -> SimState {
        SimState {
            time: 0.0,
            step: 0,
            body: BodyPose::default(),
            velocity: [0.0; 3],
            body_velocity: [0.0; 2],
            yaw_rate: 0.0,
            oscillator: OscillatorState::tripod_locked(1.0),
            morph: MorphParams::default(),
            targets: [FootPosition::default(); 6],
            commanded: [JointAngles::default(); 6],
            joints: [JointAngles::default(); 6],
            feet: [FootPosition::default(); 6],
            foot_velocity: [FootPosition::default(); 6],
            stance: [false; 6],
            faults: Vec::new(),
        }
    }

    #[test]
    fn one_second_is_two_hundred_rows() {
        let log = rollout(&SimConfig::default(), &zero(), &zero(), 1.0, 0).unwrap();
        assert_eq!(log.len(), 200);
        assert_abs_diff_eq!(log.rows()[199][0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn all_swing_holds_body() {
        let mut s = blank_state();
        s.body.z = s.morph.h;
        s.foot_velocity = [FootPosition::new(-1.0, 0.0, 0.0); 6];
        body_update(&mut s, &|_, _| 0.0, 0.005);
        assert_eq!(s.velocity, [0.0, 0.0, 0.0]);
        assert_eq!(s.body.x, 0.0);
    }

    #[test]
    fn body_moves_against_stance_feet() {
        let mut s = blank_state();
        s.body.z = s.morph.h;
        for i in 0..6 {
            s.stance[i] = i % 2 == 0;
            s.foot_velocity[i] = FootPosition::new(-0.2, 0.0, 0.0);
            s.feet[i] = FootPosition::new(0.0, if Leg::ALL[i].is_left() { 0.2 } else { -0.2 }, -0.05);
        }
        body_update(&mut s, &|_, _| 0.0, 0.01);
        assert_abs_diff_eq!(s.velocity[0], 0.2, epsilon = 1e-15);
        assert_eq!(s.yaw_rate, 0.0);
        assert_abs_diff_eq!(s.body.x, 0.002, epsilon = 1e-15);
    }

    #[test]
    fn body_spans_narrow_hole() {
        let mut s = blank_state();
        s.body.z = s.morph.h;
        for i in 0..6 {
            s.stance[i] = true;
            let x = [0.1, 0.1, 0.0, 0.0, -0.1, -0.1][i];
            s.feet[i] = FootPosition::new(x, if Leg::ALL[i].is_left() { 0.2 } else { -0.2 }, -0.05);
        }
        let hole = |x: f64, _: f64| if x.abs() < 0.05 { -0.2 } else { 0.0 };
        body_update(&mut s, &hole, 0.005);
        assert_eq!(s.body.z, s.morph.h);
        assert_eq!(s.velocity[2], 0.0);
        let step = |x: f64, _: f64| if x > -0.01 { 0.01 } else { 0.0 };
        body_update(&mut s, &step, 0.005);
        assert_abs_diff_eq!(s.body.z, s.morph.h + 0.01, epsilon = 1e-15);
    }

    #[test]
    fn faster_left_feet_turn_right() {
        let mut s = blank_state();
        for leg in Leg::ALL {
            let i = leg.index();
            s.stance[i] = true;
            let left = leg.is_left();
            s.foot_velocity[i] = FootPosition::new(if left { -0.3 } else { -0.1 }, 0.0, 0.0);
            s.feet[i] = FootPosition::new(0.0, if left { 0.2 } else { -0.2 }, -0.05);
        }
        body_update(&mut s, &|_, _| 0.0, 0.01);
        assert_abs_diff_eq!(s.yaw_rate, -0.5, epsilon = 1e-12);
    }

    #[test]
    fn contact_force_examples() {
        let contact = ContactConfig::default();
        let mut s = blank_state();
        for i in 0..6 {
            s.feet[i] = FootPosition::new(0.0, 0.0, -0.05);
        }
        s.body.z = 0.05;
        s.stance = [true, false, true, false, true, false];
        let f = foot_contact_forces(&s, &|_, _| 0.0, &contact);
        for i in 0..6 {
            let want = if i % 2 == 0 { 2.0 * 9.81 / 3.0 } else { 0.0 };
            assert_abs_diff_eq!(f[i].1, want, epsilon = 1e-12);
            assert_eq!(f[i].0, 0.0);
        }
        s.stance = [false; 6];
        assert!(foot_contact_forces(&s, &|_, _| 0.0, &contact).iter().all(|p| *p == (0.0, 0.0)));

        // swing foot buried in a raised block while moving at 0.1 m/s
        s.foot_velocity[1] = FootPosition::new(0.1, 0.0, 0.0);
        let f = foot_contact_forces(&s, &|_, _| 0.2, &contact);
        assert_abs_diff_eq!(f[1].0, 200.0 * 0.1, epsilon = 1e-12);
        assert_eq!(f[1].1, 0.0);
        assert_eq!(crate::reward::collision_reward_feet(&f), -1.0);
    }

    #[test]
    fn fault_freezes_logged_joints() {
        let config = SimConfig {
            faults: vec![FaultSpec::new(Leg::LM, 0.0)],
            ..Default::default()
        };
        let log = rollout(&config, &zero(), &zero(), 0.5, 0).unwrap();
        for j in 0..3 {
            assert!(log.column(&format!("jLM{j}")).unwrap().iter().all(|x| *x == 0.0));
        }
        assert!(log.column("stanceLM").unwrap().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn unfrozen_feedback_reports_commands() {
        let config = SimConfig {
            faults: vec![FaultSpec {
                feedback_frozen: false,
                ..FaultSpec::new(Leg::RF, 0.3)
            }],
            ..Default::default()
        };
        let mut sim = Simulation::new(&config, &zero(), &zero(), 0).unwrap();
        sim.run_steps(50).unwrap();
        let s = sim.state();
        assert_eq!(s.joints[Leg::RF.index()], JointAngles::splat(0.3));
        assert_ne!(s.reported_joints()[3], 0.3);
    }

    #[test]
    fn same_seed_same_csv() {
        let config = SimConfig {
            task: Some(TaskConfig::new(TaskKind::Stairs, DifficultyLevel::new(2).unwrap())),
            initial: InitialConfig {
                phase_noise: 0.3,
                ..Default::default()
            },
            ..Default::default()
        };
        let high = PolicySpec::Random { amplitude: 1.0 };
        let mid = PolicySpec::Random { amplitude: 1.0 };
        let a = rollout(&config, &high, &mid, 2.0, 7).unwrap().to_csv_string();
        let b = rollout(&config, &high, &mid, 2.0, 7).unwrap().to_csv_string();
        assert_eq!(a, b);
        let c = rollout(&config, &high, &mid, 2.0, 8).unwrap().to_csv_string();
        assert_ne!(a, c);
    }

    #[test]
    fn scripted_policies_reach_goals() {
        let config = SimConfig {
            task: Some(TaskConfig::new(TaskKind::Slope, DifficultyLevel::MIN)),
            ..Default::default()
        };
        let p = PolicySpec::Scripted(ScriptedParams::default());
        let log = rollout(&config, &p, &p, 30.0, 0).unwrap();
        let s = summarize(&log).unwrap();
        assert!(s.mean_vx > 0.0, "{s:?}");
        assert!(s.goals_reached >= 1, "{s:?}");
        assert!(s.total_reward.is_some());
    }

    #[test]
    fn every_variant_runs() {
        for variant in StackVariant::ALL {
            let config = SimConfig {
                scheduler: SchedulerConfig {
                    variant,
                    ..Default::default()
                },
                ..Default::default()
            };
            let p = PolicySpec::Scripted(ScriptedParams::default());
            let log = rollout(&config, &p, &p, 1.0, 0).unwrap();
            assert_eq!(log.len(), 200);
        }
    }

    #[test]
    fn invalid_config_names_field() {
        let mut config = SimConfig::default();
        config.morph.h = 1.0;
        let err = Simulation::new(&config, &zero(), &zero(), 0).err().unwrap();
        match err {
            SimError::Config(e) => assert_eq!(e.path, "morph.h"),
            other => panic!("{other}"),
        }
    }
}
