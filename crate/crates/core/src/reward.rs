//! Rewards, objectives and losses consumed by external trainers.

use serde::{Deserialize, Serialize};

use crate::skill::SkillVector;

/// Speed-penalty weight of the mid-level motion reward.
pub const VERTICAL_SPEED_WEIGHT: f64 = 0.1;
/// Maximum running speed used to clip the speed reward (m/s).
pub const DEFAULT_V_MAX: f64 = 0.3;
pub const TIME_REWARD: f64 = -0.1;
/// `|f_xy| > COLLISION_RATIO * |f_z|` counts as a collision.
pub const COLLISION_RATIO: f64 = 4.0;
/// Distance below which the predicted heading replaces the teacher's.
pub const HEADING_MIX_THRESHOLD: f64 = 0.6;
pub const DEFAULT_GAMMA: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RewardError {
    #[error("goal coincides with position (distance {0:e})")]
    DegenerateGoal(f64),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("trajectory needs at least two states, got {0}")]
    TrajectoryTooShort(usize),
    #[error("difficulty level must be in 1..=5, got {0}")]
    Difficulty(u8),
}

pub type Vec2 = [f64; 2];

fn sub2(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm2(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

fn dot2(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Kinematic body quantities the task rewards are computed from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    /// Unit heading in the world XY plane.
    pub heading: Vec2,
    /// Per foot `(|f_xy|, f_z)` in newtons.
    pub foot_forces: [(f64, f64); 6],
}

impl BodyState {
    pub fn v_z(&self) -> f64 {
        self.velocity[2]
    }

    pub fn planar_velocity(&self) -> Vec2 {
        [self.velocity[0], self.velocity[1]]
    }

    pub fn planar_position(&self) -> Vec2 {
        [self.position[0], self.position[1]]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub w_v: f64,
    pub w_d: f64,
    pub w_b: f64,
    pub w_s: f64,
    pub w_t: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Stairs,
    Gap,
    Alley,
    Slope,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [TaskKind::Stairs, TaskKind::Gap, TaskKind::Alley, TaskKind::Slope];

    pub fn weights(self) -> RewardWeights {
        let [w_v, w_d, w_b, w_s, w_t] = match self {
            TaskKind::Stairs => [1.0, 1.0, 0.5, 1.0, 1.0],
            TaskKind::Gap => [1.0, 1.0, 2.0, 1.0, 1.0],
            TaskKind::Alley => [2.0, 1.0, 2.0, 2.0, 1.0],
            TaskKind::Slope => [1.0, 1.5, 1.0, 1.0, 1.0],
        };
        RewardWeights { w_v, w_d, w_b, w_s, w_t }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Stairs => "stairs",
            TaskKind::Gap => "gap",
            TaskKind::Alley => "alley",
            TaskKind::Slope => "slope",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct DifficultyLevel(u8);

impl DifficultyLevel {
    pub const MIN: DifficultyLevel = DifficultyLevel(1);
    pub const MAX: DifficultyLevel = DifficultyLevel(5);

    pub fn new(level: u8) -> Result<Self, RewardError> {
        if (1..=5).contains(&level) {
            Ok(Self(level))
        } else {
            Err(RewardError::Difficulty(level))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Curriculum step: reaching the final goal promotes, reaching fewer than
    /// half of the goals demotes, anything else keeps the level.
    pub fn next(self, goals_reached: usize, goal_count: usize) -> Self {
        if goal_count > 0 && goals_reached >= goal_count {
            Self((self.0 + 1).min(5))
        } else if 2 * goals_reached < goal_count {
            Self((self.0 - 1).max(1))
        } else {
            self
        }
    }
}

impl TryFrom<u8> for DifficultyLevel {
    type Error = RewardError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<DifficultyLevel> for u8 {
    fn from(d: DifficultyLevel) -> u8 {
        d.0
    }
}

/// The five task sub-rewards of one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SubRewards {
    pub speed: f64,
    pub direction: f64,
    pub balance: f64,
    pub collision: f64,
    pub time: f64,
}

pub fn desired_heading(goal: Vec2, position: Vec2) -> Result<Vec2, RewardError> {
    let d = sub2(goal, position);
    let n = norm2(d);
    if !(n >= 1e-9) {
        return Err(RewardError::DegenerateGoal(n));
    }
    Ok([d[0] / n, d[1] / n])
}

/// `min(<d, v>, v_max)`; no lower clip.
pub fn speed_reward(d: Vec2, v: Vec2, v_max: f64) -> f64 {
    dot2(d, v).min(v_max)
}

/// `exp(-|d - d_c|)` with the Euclidean norm of the difference.
pub fn direction_reward(d: Vec2, d_c: Vec2) -> f64 {
    (-norm2(sub2(d, d_c))).exp()
}

pub fn balance_reward(v_z: f64) -> f64 {
    -v_z * v_z
}

pub fn collision_reward(f_xy: f64, f_z: f64) -> f64 {
    if f_xy.abs() > COLLISION_RATIO * f_z.abs() {
        -1.0
    } else {
        0.0
    }
}

/// Collision reward over all feet: -1 if any single foot collides.
pub fn collision_reward_feet(forces: &[(f64, f64)]) -> f64 {
    forces
        .iter()
        .map(|&(xy, z)| collision_reward(xy, z))
        .fold(0.0, f64::min)
}

pub fn time_reward() -> f64 {
    TIME_REWARD
}

/// `scale * (w_v r_v + w_d r_d + w_b r_b + w_s r_s + w_T r_T)`.
pub fn weighted_reward(sub: &SubRewards, w: &RewardWeights, scale: f64) -> f64 {
    scale
        * (w.w_v * sub.speed
            + w.w_d * sub.direction
            + w.w_b * sub.balance
            + w.w_s * sub.collision
            + w.w_t * sub.time)
}

pub fn task_reward(sub: &SubRewards, task: TaskKind, level: DifficultyLevel) -> f64 {
    weighted_reward(sub, &task.weights(), level.get() as f64)
}

/// All five sub-rewards for a body state heading towards `goal`.
pub fn sub_rewards(body: &BodyState, goal: Vec2, v_max: f64) -> Result<SubRewards, RewardError> {
    let d = desired_heading(goal, body.planar_position())?;
    Ok(SubRewards {
        speed: speed_reward(d, body.planar_velocity(), v_max),
        direction: direction_reward(d, body.heading),
        balance: balance_reward(body.v_z()),
        collision: collision_reward_feet(&body.foot_forces),
        time: time_reward(),
    })
}

/// State representation `phi` mapping the representation state onto the
/// skill plane. Implementations must be re-entrant.
pub trait Representation: Sync {
    fn map(&self, state: &[f64]) -> Vec2;
}

impl<F> Representation for F
where
    F: Fn(&[f64]) -> Vec2 + Sync,
{
    fn map(&self, state: &[f64]) -> Vec2 {
        self(state)
    }
}

/// Scaled projection onto two coordinates of the state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub indices: [usize; 2],
    pub scale: f64,
}

impl Projection {
    /// Planar position, the first two entries of [`ReprState`].
    pub const PLANAR: Projection = Projection {
        indices: [0, 1],
        scale: 1.0,
    };
}

impl Representation for Projection {
    fn map(&self, s: &[f64]) -> Vec2 {
        [self.scale * s[self.indices[0]], self.scale * s[self.indices[1]]]
    }
}

/// Representation state: body pose and rates plus the oscillator's internal
/// state and its rates.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReprState {
    pub position: [f64; 3],
    /// roll, pitch, yaw
    pub attitude: [f64; 3],
    pub linear_velocity: [f64; 3],
    pub angular_velocity: [f64; 3],
    pub r: [f64; 6],
    pub r_dot: [f64; 6],
    pub theta: [f64; 6],
    pub theta_dot: [f64; 6],
    pub alpha: [f64; 6],
    pub alpha_dot: [f64; 6],
}

impl ReprState {
    pub const DIM: usize = 12 + 36;

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::DIM);
        v.extend_from_slice(&self.position);
        v.extend_from_slice(&self.attitude);
        v.extend_from_slice(&self.linear_velocity);
        v.extend_from_slice(&self.angular_velocity);
        v.extend_from_slice(&self.r);
        v.extend_from_slice(&self.r_dot);
        v.extend_from_slice(&self.theta);
        v.extend_from_slice(&self.theta_dot);
        v.extend_from_slice(&self.alpha);
        v.extend_from_slice(&self.alpha_dot);
        v
    }
}

/// Per-transition mid-level reward: skill alignment of the representation
/// displacement plus the vertical-speed penalty.
pub fn lsd_step_reward(
    phi: &dyn Representation,
    s_t: &[f64],
    s_next: &[f64],
    z: &SkillVector,
    v_z: f64,
) -> f64 {
    let a = phi.map(s_t);
    let b = phi.map(s_next);
    z.dot(sub2(b, a)) - VERTICAL_SPEED_WEIGHT * v_z * v_z
}

/// Sum of per-step skill alignments along a trajectory.
///
/// The objective is linear in the displacements, so the per-step
/// displacements are accumulated first (error-free differences, compensated
/// sum) and projected onto `z` once.
pub fn trajectory_objective(
    phi: &dyn Representation,
    trajectory: &[Vec<f64>],
    z: &SkillVector,
) -> Result<f64, RewardError> {
    if trajectory.len() < 2 {
        return Err(RewardError::TrajectoryTooShort(trajectory.len()));
    }
    let mut prev = phi.map(&trajectory[0]);
    let mut acc = [CompensatedSum::default(); 2];
    for s in &trajectory[1..] {
        let cur = phi.map(s);
        for k in 0..2 {
            let (d, err) = two_sum(cur[k], -prev[k]);
            acc[k].add(d);
            acc[k].add(err);
        }
        prev = cur;
    }
    Ok(z.dot([acc[0].value(), acc[1].value()]))
}

/// `a + b` as an unevaluated pair `(rounded sum, exact error)`.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Neumaier summation.
#[derive(Clone, Copy, Debug, Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Endpoint form of [`trajectory_objective`].
pub fn trajectory_objective_endpoints(
    phi: &dyn Representation,
    first: &[f64],
    last: &[f64],
    z: &SkillVector,
) -> f64 {
    z.dot(sub2(phi.map(last), phi.map(first)))
}

/// `sum_t gamma^t r_t`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    let mut discount = 1.0;
    let mut total = 0.0;
    for r in rewards {
        total += discount * r;
        discount *= gamma;
    }
    total
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LipschitzViolation {
    pub pair: usize,
    pub input_distance: f64,
    pub output_distance: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub checked: usize,
    pub max_ratio: f64,
    pub violations: Vec<LipschitzViolation>,
}

impl LipschitzReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Flags every pair with `|phi(x) - phi(y)| > |x - y| * (1 + 1e-9)`.
pub fn lipschitz_check(phi: &dyn Representation, pairs: &[(Vec<f64>, Vec<f64>)]) -> LipschitzReport {
    let mut report = LipschitzReport {
        checked: pairs.len(),
        ..LipschitzReport::default()
    };
    for (k, (x, y)) in pairs.iter().enumerate() {
        let dx = x
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let dphi = norm2(sub2(phi.map(x), phi.map(y)));
        if dx > 0.0 {
            report.max_ratio = report.max_ratio.max(dphi / dx);
        }
        if dphi > dx * (1.0 + 1e-9) {
            report.violations.push(LipschitzViolation {
                pair: k,
                input_distance: dx,
                output_distance: dphi,
            });
        }
    }
    report
}

/// Student heading when it is within 0.6 of the teacher's, teacher otherwise.
pub fn heading_mix(d: Vec2, d_hat: Vec2) -> Vec2 {
    if norm2(sub2(d, d_hat)) < HEADING_MIX_THRESHOLD {
        d_hat
    } else {
        d
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistillSample {
    pub d_hat: Vec2,
    pub d: Vec2,
    pub a_hat: [f64; 7],
    pub a: [f64; 7],
}

/// Mean over the batch of `|d_hat - d| + |a_hat - a|`.
pub fn distill_loss(batch: &[DistillSample]) -> Result<f64, RewardError> {
    if batch.is_empty() {
        return Err(RewardError::EmptyBatch);
    }
    let total: f64 = batch
        .iter()
        .map(|s| {
            let da = s
                .a_hat
                .iter()
                .zip(&s.a)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            norm2(sub2(s.d_hat, s.d)) + da
        })
        .sum();
    Ok(total / batch.len() as f64)
}
