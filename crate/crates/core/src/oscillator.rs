//! Rhythm generator: six coupled Hopf oscillators.
//!
//! Each leg carries an amplitude `r` (with derivative `v`), an adjustable phase
//! `theta` driven by the mid-level frequency factor, and a tripod phase `alpha`
//! that always advances at `omega_m / 2` plus the inter-leg coupling. The foot
//! trajectory is driven by the mixed phase `alpha + theta`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::leg::LEG_COUNT;

pub type LegVector = [f64; LEG_COUNT];
pub type LegMatrix = [[f64; LEG_COUNT]; LEG_COUNT];

/// Default maximum-frequency scale, in rad/s.
pub const DEFAULT_OMEGA_SCALE: f64 = 8.0 * PI;
/// Default convergence factor `a`, in 1/s.
pub const DEFAULT_CONVERGENCE: f64 = 50.0;
pub const DEFAULT_DT: f64 = 0.005;

/// Lower end of the skill-norm to frequency map.
const OMEGA_FLOOR_RATIO: f64 = 0.2;

/// How the phase variables are driven.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseModel {
    /// Independent tripod phase `alpha` carries the coupling; `theta` is free.
    #[default]
    Embedded,
    /// Ablation without `alpha`: the coupling is added to `theta` directly and
    /// `alpha` stays frozen.
    Coupled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OscillatorParams {
    /// Convergence factor `a` (1/s).
    pub convergence: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    /// rad/s
    pub omega_min: f64,
    /// Fixed maximum-frequency scale `Omega` (rad/s).
    pub omega_scale: f64,
    pub dt: f64,
    pub coupling_weights: LegMatrix,
    pub coupling_bias: LegMatrix,
    pub phase_model: PhaseModel,
}

impl Default for OscillatorParams {
    fn default() -> Self {
        Self {
            convergence: DEFAULT_CONVERGENCE,
            mu_min: 1.0,
            mu_max: 4.0,
            omega_min: 0.0,
            omega_scale: DEFAULT_OMEGA_SCALE,
            dt: DEFAULT_DT,
            coupling_weights: [[1.0; LEG_COUNT]; LEG_COUNT],
            coupling_bias: tripod_bias(),
            phase_model: PhaseModel::Embedded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamsError {
    #[error("convergence factor must be positive, got {0}")]
    Convergence(f64),
    #[error("dt must be positive, got {0}")]
    Dt(f64),
    #[error("mu_min ({0}) must not exceed mu_max ({1})")]
    MuRange(f64, f64),
    #[error("omega_min must be non-negative, got {0}")]
    OmegaMin(f64),
    #[error("omega_scale must be non-negative, got {0}")]
    OmegaScale(f64),
    #[error("coupling bias is not antisymmetric at ({0}, {1})")]
    BiasNotAntisymmetric(usize, usize),
    #[error("non-finite parameter `{0}`")]
    NonFinite(&'static str),
}

impl OscillatorParams {
    pub fn validate(&self) -> Result<(), ParamsError> {
        let scalars = [
            ("convergence", self.convergence),
            ("mu_min", self.mu_min),
            ("mu_max", self.mu_max),
            ("omega_min", self.omega_min),
            ("omega_scale", self.omega_scale),
            ("dt", self.dt),
        ];
        for (name, x) in scalars {
            if !x.is_finite() {
                return Err(ParamsError::NonFinite(name));
            }
        }
        if self.convergence <= 0.0 {
            return Err(ParamsError::Convergence(self.convergence));
        }
        if self.dt <= 0.0 {
            return Err(ParamsError::Dt(self.dt));
        }
        if self.mu_min > self.mu_max {
            return Err(ParamsError::MuRange(self.mu_min, self.mu_max));
        }
        if self.omega_min < 0.0 {
            return Err(ParamsError::OmegaMin(self.omega_min));
        }
        if self.omega_scale < 0.0 {
            return Err(ParamsError::OmegaScale(self.omega_scale));
        }
        for i in 0..LEG_COUNT {
            for j in 0..LEG_COUNT {
                if !self.coupling_weights[i][j].is_finite() {
                    return Err(ParamsError::NonFinite("coupling_weights"));
                }
                if !self.coupling_bias[i][j].is_finite() {
                    return Err(ParamsError::NonFinite("coupling_bias"));
                }
                if self.coupling_bias[i][j] != -self.coupling_bias[j][i] {
                    return Err(ParamsError::BiasNotAntisymmetric(i, j));
                }
            }
        }
        Ok(())
    }
}

/// Phase-bias matrix that locks even and odd legs in antiphase.
pub fn tripod_bias() -> LegMatrix {
    let mut psi = [[0.0; LEG_COUNT]; LEG_COUNT];
    for (i, row) in psi.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = match (i % 2, j % 2) {
                (0, 1) => PI,
                (1, 0) => -PI,
                _ => 0.0,
            };
        }
    }
    psi
}

/// Per-leg control inputs. `mu` and `omega` are normalised to `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlInputs {
    pub mu: LegVector,
    pub omega: LegVector,
    /// Maximum oscillation frequency (rad/s).
    pub omega_m: f64,
}

impl ControlInputs {
    pub fn uniform(mu: f64, omega: f64, omega_m: f64) -> Self {
        Self {
            mu: [mu; LEG_COUNT],
            omega: [omega; LEG_COUNT],
            omega_m,
        }
    }

    pub fn clamped(&self) -> Self {
        Self {
            mu: self.mu.map(clamp_unit),
            omega: self.omega.map(clamp_unit),
            omega_m: self.omega_m.max(0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Derivatives {
    pub r: LegVector,
    pub v: LegVector,
    pub theta: LegVector,
    pub alpha: LegVector,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillatorState {
    pub r: LegVector,
    pub v: LegVector,
    pub theta: LegVector,
    /// Tripod phase. Never wrapped.
    pub alpha: LegVector,
    /// Derivative at the current state, reused as the left trapezoid node on
    /// the next step. Not part of the snapshot format; rebuilt on demand.
    #[serde(skip)]
    pub prev_deriv: Option<Derivatives>,
}

impl OscillatorState {
    pub fn new(r: LegVector, v: LegVector, theta: LegVector, alpha: LegVector) -> Self {
        Self {
            r,
            v,
            theta,
            alpha,
            prev_deriv: None,
        }
    }

    /// Amplitudes at `r0`, at rest, with the tripods exactly in antiphase.
    pub fn tripod_locked(r0: f64) -> Self {
        let mut alpha = [0.0; LEG_COUNT];
        for (i, a) in alpha.iter_mut().enumerate() {
            if i % 2 == 1 {
                *a = -PI;
            }
        }
        Self::new([r0; LEG_COUNT], [0.0; LEG_COUNT], [0.0; LEG_COUNT], alpha)
    }

    /// Tripod-locked start for a phase model. Without the tripod phase the
    /// antiphase offset is carried by `theta` instead.
    pub fn initial(r0: f64, model: PhaseModel) -> Self {
        let mut s = Self::tripod_locked(r0);
        if model == PhaseModel::Coupled {
            s.theta = s.alpha;
            s.alpha = [0.0; LEG_COUNT];
        }
        s
    }

    pub fn is_finite(&self) -> bool {
        self.r
            .iter()
            .chain(&self.v)
            .chain(&self.theta)
            .chain(&self.alpha)
            .all(|x| x.is_finite())
    }

    /// Mixed phase `alpha + theta` per leg.
    pub fn mixed_phase(&self) -> LegVector {
        mixed_phase(self)
    }

    fn axpy(&self, h: f64, d: &Derivatives) -> Self {
        let add = |x: &LegVector, dx: &LegVector| -> LegVector {
            let mut out = *x;
            for (o, d) in out.iter_mut().zip(dx) {
                *o += h * d;
            }
            out
        };
        Self::new(
            add(&self.r, &d.r),
            add(&self.v, &d.v),
            add(&self.theta, &d.theta),
            add(&self.alpha, &d.alpha),
        )
    }
}

fn clamp_unit(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(-1.0, 1.0)
    }
}

/// Natural amplitude `f(mu)`: maps `[-1, 1]` linearly onto `[mu_min, mu_max]`.
pub fn map_amplitude_factor(mu: f64, params: &OscillatorParams) -> f64 {
    let mu = clamp_unit(mu);
    params.mu_min + (mu + 1.0) / 2.0 * (params.mu_max - params.mu_min)
}

/// Frequency `f(omega)` with `omega_min = 0`: maps `[-1, 1]` onto `[0, omega_m]`.
pub fn map_frequency_factor(omega: f64, omega_m: f64) -> f64 {
    map_frequency_factor_with_floor(omega, 0.0, omega_m)
}

pub fn map_frequency_factor_with_floor(omega: f64, omega_min: f64, omega_m: f64) -> f64 {
    let omega = clamp_unit(omega);
    omega_min + (omega + 1.0) / 2.0 * (omega_m.max(0.0) - omega_min)
}

/// `omega_m = u(|z|) * Omega` where `u` maps `[0, 1]` onto `[0.2, 1.0]`.
pub fn compute_omega_max(skill_norm: f64, omega_scale: f64) -> f64 {
    let n = if skill_norm.is_nan() {
        0.0
    } else {
        skill_norm.clamp(0.0, 1.0)
    };
    (OMEGA_FLOOR_RATIO + (1.0 - OMEGA_FLOOR_RATIO) * n) * omega_scale
}

pub fn derivatives(
    state: &OscillatorState,
    inputs: &ControlInputs,
    params: &OscillatorParams,
) -> Derivatives {
    let a = params.convergence;
    let mut d = Derivatives::default();
    for i in 0..LEG_COUNT {
        d.r[i] = state.v[i];
        let target = map_amplitude_factor(inputs.mu[i], params);
        d.v[i] = a * a / 4.0 * (target - state.r[i]) - a * state.v[i];
    }
    let freq = |i: usize| {
        map_frequency_factor_with_floor(inputs.omega[i], params.omega_min, inputs.omega_m)
    };
    match params.phase_model {
        PhaseModel::Embedded => {
            for i in 0..LEG_COUNT {
                d.theta[i] = freq(i);
                d.alpha[i] = inputs.omega_m / 2.0 + coupling(&state.alpha, &state.r, params, i);
            }
        }
        PhaseModel::Coupled => {
            for i in 0..LEG_COUNT {
                d.theta[i] = freq(i) + coupling(&state.theta, &state.r, params, i);
                d.alpha[i] = 0.0;
            }
        }
    }
    d
}

fn coupling(phase: &LegVector, r: &LegVector, params: &OscillatorParams, i: usize) -> f64 {
    let mut sum = 0.0;
    for j in 0..LEG_COUNT {
        sum += r[j]
            * params.coupling_weights[i][j]
            * (phase[j] - phase[i] - params.coupling_bias[i][j]).sin();
    }
    sum
}

/// One trapezoidal step.
///
/// The left node is the stored derivative from the previous step (bootstrapped
/// from the current state on the first call). The right node is evaluated at a
/// forward-Euler predictor, so with constant inputs this is Heun's method. The
/// derivative at the new state is stored for the next call.
pub fn step(
    state: &OscillatorState,
    inputs: &ControlInputs,
    params: &OscillatorParams,
) -> OscillatorState {
    let inputs = inputs.clamped();
    let dt = params.dt;
    let left = state
        .prev_deriv
        .unwrap_or_else(|| derivatives(state, &inputs, params));
    let predictor = state.axpy(dt, &left);
    let right = derivatives(&predictor, &inputs, params);

    let mut avg = Derivatives::default();
    for i in 0..LEG_COUNT {
        avg.r[i] = left.r[i] + right.r[i];
        avg.v[i] = left.v[i] + right.v[i];
        avg.theta[i] = left.theta[i] + right.theta[i];
        avg.alpha[i] = left.alpha[i] + right.alpha[i];
    }
    let mut next = state.axpy(dt / 2.0, &avg);
    next.prev_deriv = Some(derivatives(&next, &inputs, params));
    next
}

pub fn mixed_phase(state: &OscillatorState) -> LegVector {
    let mut phi = [0.0; LEG_COUNT];
    for (i, p) in phi.iter_mut().enumerate() {
        *p = state.alpha[i] + state.theta[i];
    }
    phi
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut y = x.rem_euclid(two_pi);
    if y > PI {
        y -= two_pi;
    }
    y
}

/// Largest deviation from the tripod lock: within-group spread and
/// cross-group offset error from pi, both in radians.
pub fn tripod_lock_error(alpha: &LegVector) -> (f64, f64) {
    let mut spread: f64 = 0.0;
    let mut cross: f64 = 0.0;
    for i in 0..LEG_COUNT {
        for j in (i + 1)..LEG_COUNT {
            let d = wrap_angle(alpha[j] - alpha[i]);
            if i % 2 == j % 2 {
                spread = spread.max(d.abs());
            } else {
                cross = cross.max(PI - d.abs());
            }
        }
    }
    (spread, cross)
}
