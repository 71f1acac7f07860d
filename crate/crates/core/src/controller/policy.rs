//! Pluggable policies: constant, random, scripted and feed-forward networks
//! loaded from JSON weight files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ControllerError, ObservationLayout, JOINT_COUNT, PROPRIO_LEN};
use crate::leg::{Leg, LEG_COUNT};
use crate::rng::RngStream;

pub const WEIGHT_SCHEMA_VERSION: u32 = 1;

/// Inputs a policy may look at. Learned policies only use `observation`;
/// scripted policies additionally read the oscillator phases.
#[derive(Clone, Copy, Debug)]
pub struct PolicyInput<'a> {
    pub observation: &'a [f64],
    pub phases: &'a [f64; LEG_COUNT],
}

pub trait Policy: Send {
    fn output_dim(&self) -> usize;

    fn act(&mut self, input: &PolicyInput<'_>) -> Result<Vec<f64>, ControllerError>;
}

/// What a policy's output drives. Fixes the output width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyRole {
    /// `[delta_morph(5), z(2)]`
    High,
    /// `[mu(6), omega(6)]`
    Mid,
    /// `[mu(6), omega(6), delta_morph(5)]`, used without a mid level.
    Direct,
}

impl PolicyRole {
    pub fn output_dim(self) -> usize {
        match self {
            PolicyRole::High => 7,
            PolicyRole::Mid => 12,
            PolicyRole::Direct => 17,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }
}

/// Final saturation onto the action box `[-1, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Squash {
    #[default]
    Tanh,
    Clip,
    None,
}

impl Squash {
    fn apply(self, x: f64) -> f64 {
        match self {
            Squash::Tanh => x.tanh(),
            Squash::Clip => x.clamp(-1.0, 1.0),
            Squash::None => x,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseLayer {
    pub input_size: usize,
    pub output_size: usize,
    pub activation: Activation,
    /// Row-major `output_size x input_size`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Multi-layer perceptron in the weight-file format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedForwardNet {
    pub schema_version: u32,
    pub input_size: usize,
    #[serde(default)]
    pub output_squash: Squash,
    pub layers: Vec<DenseLayer>,
}

impl FeedForwardNet {
    pub fn validate(&self) -> Result<(), ControllerError> {
        let bad = |msg: String| Err(ControllerError::InvalidNet(msg));
        if self.schema_version != WEIGHT_SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (expected {WEIGHT_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.layers.is_empty() {
            return bad("no layers".into());
        }
        let mut width = self.input_size;
        for (k, layer) in self.layers.iter().enumerate() {
            if layer.input_size != width {
                return bad(format!(
                    "layers[{k}].input_size is {} but the previous width is {width}",
                    layer.input_size
                ));
            }
            if layer.weights.len() != layer.input_size * layer.output_size {
                return bad(format!(
                    "layers[{k}].weights has {} entries, expected {}",
                    layer.weights.len(),
                    layer.input_size * layer.output_size
                ));
            }
            if layer.bias.len() != layer.output_size {
                return bad(format!(
                    "layers[{k}].bias has {} entries, expected {}",
                    layer.bias.len(),
                    layer.output_size
                ));
            }
            if !layer.weights.iter().chain(&layer.bias).all(|x| x.is_finite()) {
                return bad(format!("layers[{k}] contains non-finite values"));
            }
            width = layer.output_size;
        }
        Ok(())
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output_size)
    }

    pub fn load(path: &Path) -> Result<Self, ControllerError> {
        let text = fs::read_to_string(path).map_err(|e| ControllerError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let net: FeedForwardNet = serde_json::from_str(&text).map_err(|e| ControllerError::InvalidNet(
            format!("{}: {e}", path.display()),
        ))?;
        net.validate()?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<(), ControllerError> {
        let text = serde_json::to_string_pretty(self).expect("net serializes");
        fs::write(path, text).map_err(|e| ControllerError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    /// Net with weights drawn uniformly from `[-scale/sqrt(fan_in), scale/sqrt(fan_in)]`
    /// and zero biases. Handy for smoke tests and benchmarks.
    pub fn random(sizes: &[usize], hidden: Activation, scale: f64, rng: &mut RngStream) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let (n_in, n_out) = (w[0], w[1]);
                let bound = scale / (n_in.max(1) as f64).sqrt();
                DenseLayer {
                    input_size: n_in,
                    output_size: n_out,
                    activation: if k + 2 == sizes.len() {
                        Activation::Identity
                    } else {
                        hidden
                    },
                    weights: (0..n_in * n_out).map(|_| rng.uniform_in(-bound, bound)).collect(),
                    bias: vec![0.0; n_out],
                }
            })
            .collect();
        Self {
            schema_version: WEIGHT_SCHEMA_VERSION,
            input_size: sizes[0],
            output_squash: Squash::Tanh,
            layers,
        }
    }
}

/// Deterministic forward pass: affine layers with their activations, then the
/// declared output squash.
pub fn policy_forward(net: &FeedForwardNet, observation: &[f64]) -> Result<Vec<f64>, ControllerError> {
    if observation.len() != net.input_size {
        return Err(ControllerError::ShapeMismatch {
            what: "policy observation",
            expected: net.input_size,
            actual: observation.len(),
        });
    }
    let mut x = observation.to_vec();
    for layer in &net.layers {
        let mut y = layer.bias.clone();
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &layer.weights[o * layer.input_size..(o + 1) * layer.input_size];
            let mut acc = 0.0;
            for (w, xi) in row.iter().zip(&x) {
                acc += w * xi;
            }
            *yo = layer.activation.apply(*yo + acc);
        }
        x = y;
    }
    for v in &mut x {
        *v = net.output_squash.apply(*v);
    }
    Ok(x)
}

/// Tunables of the scripted policies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptedParams {
    /// Amplitude factor applied to every leg.
    pub base_mu: f64,
    /// Differential amplitude per unit of lateral skill component.
    pub turn_gain: f64,
    /// Skill norm the high level commands towards the current goal.
    pub skill_gain: f64,
    /// Stretch stance on healthy legs once a leg stops reporting motion.
    pub fault_compensation: bool,
    /// Consecutive frozen readings before a leg is treated as broken.
    pub fault_confirmations: u32,
}

impl Default for ScriptedParams {
    fn default() -> Self {
        Self {
            base_mu: 0.0,
            turn_gain: 0.5,
            skill_gain: 1.0,
            fault_compensation: true,
            fault_confirmations: 2,
        }
    }
}

/// Hand-written controllers standing in for trained networks.
///
/// High level: points the skill at the first goal heading in the observation
/// (straight ahead when there is none) and leaves the morphology alone.
/// Mid level: uniform amplitude with a left/right differential proportional to
/// the lateral skill component; the adjustable phase is frozen so the gait is
/// the pure tripod. When a leg's joint readings stop changing while the others
/// move, healthy legs run their swing at full adjustable-phase speed, which
/// lengthens the share of each cycle spent in stance.
#[derive(Clone, Debug)]
pub struct ScriptedPolicy {
    role: PolicyRole,
    layout: ObservationLayout,
    params: ScriptedParams,
    last_joints: Option<Vec<f64>>,
    frozen_count: [u32; LEG_COUNT],
}

impl ScriptedPolicy {
    pub fn new(role: PolicyRole, layout: ObservationLayout, params: ScriptedParams) -> Self {
        Self {
            role,
            layout,
            params,
            last_joints: None,
            frozen_count: [0; LEG_COUNT],
        }
    }

    /// World-frame skill pointing at the next goal.
    fn goal_skill(&self, obs: &[f64]) -> [f64; 2] {
        let heading = match self.layout {
            ObservationLayout::High { .. } => {
                let n = obs.len();
                [obs[n - 4], obs[n - 3]]
            }
            ObservationLayout::Mid => [0.0, 0.0],
        };
        let norm = heading[0].hypot(heading[1]);
        let g = self.params.skill_gain.clamp(0.0, 1.0);
        let body = if norm > 1e-12 {
            [g * heading[0] / norm, g * heading[1] / norm]
        } else {
            [g, 0.0]
        };
        let (s, c) = observed_yaw(obs).sin_cos();
        [c * body[0] - s * body[1], s * body[0] + c * body[1]]
    }

    /// Lateral steering signal for a world-frame skill: the body-frame
    /// lateral component, saturated to a full turn when the skill points
    /// behind the robot.
    fn steering(skill: [f64; 2], obs: &[f64]) -> f64 {
        let (s, c) = observed_yaw(obs).sin_cos();
        let ahead = c * skill[0] + s * skill[1];
        let lateral = -s * skill[0] + c * skill[1];
        if ahead >= 0.0 {
            lateral
        } else {
            skill[0].hypot(skill[1]).copysign(lateral)
        }
    }

    fn update_fault_detector(&mut self, obs: &[f64]) -> [bool; LEG_COUNT] {
        let joints = &obs[..JOINT_COUNT];
        let mut broken = [false; LEG_COUNT];
        if let Some(prev) = &self.last_joints {
            let moved: Vec<bool> = (0..LEG_COUNT)
                .map(|i| joints[3 * i..3 * i + 3] != prev[3 * i..3 * i + 3])
                .collect();
            let any_moving = moved.iter().any(|m| *m);
            for i in 0..LEG_COUNT {
                if any_moving && !moved[i] {
                    self.frozen_count[i] += 1;
                } else {
                    self.frozen_count[i] = 0;
                }
                broken[i] = self.frozen_count[i] >= self.params.fault_confirmations;
            }
        }
        self.last_joints = Some(joints.to_vec());
        broken
    }

    fn mid_action(&mut self, skill: [f64; 2], input: &PolicyInput<'_>) -> Vec<f64> {
        let broken = self.update_fault_detector(input.observation);
        let any_broken = self.params.fault_compensation && broken.iter().any(|b| *b);
        let turn = Self::steering(skill, input.observation);
        let mut out = vec![0.0; 12];
        for leg in Leg::ALL {
            let i = leg.index();
            out[i] = (self.params.base_mu - leg.side() * self.params.turn_gain * turn).clamp(-1.0, 1.0);
            let swinging = input.phases[i].sin() > 0.0;
            out[LEG_COUNT + i] = if any_broken && !broken[i] && swinging {
                1.0
            } else {
                -1.0
            };
        }
        out
    }
}

/// Yaw from the wxyz orientation quaternion in the proprioceptive block.
fn observed_yaw(obs: &[f64]) -> f64 {
    let [w, x, y, z] = [obs[JOINT_COUNT], obs[JOINT_COUNT + 1], obs[JOINT_COUNT + 2], obs[JOINT_COUNT + 3]];
    (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z))
}

impl Policy for ScriptedPolicy {
    fn output_dim(&self) -> usize {
        self.role.output_dim()
    }

    fn act(&mut self, input: &PolicyInput<'_>) -> Result<Vec<f64>, ControllerError> {
        let expected = self.layout.len();
        if input.observation.len() != expected {
            return Err(ControllerError::ShapeMismatch {
                what: "scripted policy observation",
                expected,
                actual: input.observation.len(),
            });
        }
        Ok(match self.role {
            PolicyRole::High => {
                let z = self.goal_skill(input.observation);
                vec![0.0, 0.0, 0.0, 0.0, 0.0, z[0], z[1]]
            }
            PolicyRole::Mid => {
                let skill = [input.observation[PROPRIO_LEN], input.observation[PROPRIO_LEN + 1]];
                self.mid_action(skill, input)
            }
            PolicyRole::Direct => {
                let z = self.goal_skill(input.observation);
                let mut out = self.mid_action(z, input);
                out.extend_from_slice(&[0.0; 5]);
                out
            }
        })
    }
}

#[derive(Clone, Debug)]
pub struct ConstantPolicy {
    values: Vec<f64>,
}

impl ConstantPolicy {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(vec![0.0; dim])
    }
}

impl Policy for ConstantPolicy {
    fn output_dim(&self) -> usize {
        self.values.len()
    }

    fn act(&mut self, _input: &PolicyInput<'_>) -> Result<Vec<f64>, ControllerError> {
        Ok(self.values.clone())
    }
}

/// Uniform actions in `[-amplitude, amplitude]` from its own stream.
#[derive(Clone, Debug)]
pub struct RandomPolicy {
    dim: usize,
    amplitude: f64,
    rng: RngStream,
}

impl RandomPolicy {
    pub fn new(dim: usize, amplitude: f64, rng: RngStream) -> Self {
        Self { dim, amplitude, rng }
    }
}

impl Policy for RandomPolicy {
    fn output_dim(&self) -> usize {
        self.dim
    }

    fn act(&mut self, _input: &PolicyInput<'_>) -> Result<Vec<f64>, ControllerError> {
        Ok((0..self.dim)
            .map(|_| self.rng.uniform_in(-self.amplitude, self.amplitude))
            .collect())
    }
}

#[derive(Clone, Debug)]
pub struct NetPolicy {
    net: FeedForwardNet,
}

impl NetPolicy {
    pub fn new(net: FeedForwardNet) -> Result<Self, ControllerError> {
        net.validate()?;
        Ok(Self { net })
    }
}

impl Policy for NetPolicy {
    fn output_dim(&self) -> usize {
        self.net.output_size()
    }

    fn act(&mut self, input: &PolicyInput<'_>) -> Result<Vec<f64>, ControllerError> {
        policy_forward(&self.net, input.observation)
    }
}

/// Fully resolved policy description (network weights already loaded).
#[derive(Clone, Debug, PartialEq)]
pub enum PolicySpec {
    Scripted(ScriptedParams),
    /// Empty `values` means all zeros.
    Constant(Vec<f64>),
    Random { amplitude: f64 },
    FeedForward(FeedForwardNet),
}

impl PolicySpec {
    pub fn zero() -> Self {
        PolicySpec::Constant(Vec::new())
    }

    /// Instantiates the policy for a role and checks that its input and output
    /// widths match the observation layout and the action it must produce.
    pub fn build(
        &self,
        role: PolicyRole,
        layout: ObservationLayout,
        rng: RngStream,
    ) -> Result<Box<dyn Policy>, ControllerError> {
        let dim = role.output_dim();
        let policy: Box<dyn Policy> = match self {
            PolicySpec::Scripted(p) => Box::new(ScriptedPolicy::new(role, layout, *p)),
            PolicySpec::Constant(v) if v.is_empty() => Box::new(ConstantPolicy::zeros(dim)),
            PolicySpec::Constant(v) => Box::new(ConstantPolicy::new(v.clone())),
            PolicySpec::Random { amplitude } => Box::new(RandomPolicy::new(dim, *amplitude, rng)),
            PolicySpec::FeedForward(net) => {
                if net.input_size != layout.len() {
                    return Err(ControllerError::ShapeMismatch {
                        what: "network input",
                        expected: layout.len(),
                        actual: net.input_size,
                    });
                }
                Box::new(NetPolicy::new(net.clone())?)
            }
        };
        if policy.output_dim() != dim {
            return Err(ControllerError::ShapeMismatch {
                what: "policy output",
                expected: dim,
                actual: policy.output_dim(),
            });
        }
        Ok(policy)
    }
}
