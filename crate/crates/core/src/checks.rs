//! Self-checks run by the `check` command. Each suite exercises one module
//! against a reference computation and reports measured values next to
//! their thresholds.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::oscillator::{
    self, map_amplitude_factor, tripod_lock_error, ControlInputs, Derivatives, OscillatorParams, OscillatorState,
    PhaseModel,
};
use crate::pose::{
    forward_kinematics, inverse_kinematics, IkBranch, JointAngles, KinematicsError, LegGeometry, FootPosition,
};
use crate::reward::{
    self, heading_mix, lipschitz_check, trajectory_objective, trajectory_objective_endpoints, Projection,
    SubRewards, TaskKind,
};
use crate::rng::{streams, RngStream};
use crate::skill::{disc_stats, sample_skills, SkillVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Oscillator,
    Kinematics,
    Sampler,
    Rewards,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Oscillator, Suite::Kinematics, Suite::Sampler, Suite::Rewards];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Oscillator => "oscillator",
            Suite::Kinematics => "kinematics",
            Suite::Sampler => "sampler",
            Suite::Rewards => "rewards",
        }
    }

    pub fn run(self, seed: u64) -> SuiteReport {
        let checks = match self {
            Suite::Oscillator => oscillator_suite(seed),
            Suite::Kinematics => kinematics_suite(seed),
            Suite::Sampler => sampler_suite(seed),
            Suite::Rewards => rewards_suite(seed),
        };
        SuiteReport {
            suite: self.name().to_string(),
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown suite '{s}'"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckResult {
    /// Passes when `measured < threshold`.
    fn below(name: &str, measured: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed: measured < threshold,
            measured,
            threshold,
            detail: detail.into(),
        }
    }

    fn flag(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            measured: if passed { 1.0 } else { 0.0 },
            threshold: 1.0,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub passed: bool,
    pub seed: u64,
    pub suites: Vec<SuiteReport>,
}

pub fn run(suites: &[Suite], seed: u64) -> Report {
    let suites: Vec<SuiteReport> = suites.iter().map(|s| s.run(seed)).collect();
    Report {
        passed: suites.iter().all(|s| s.passed),
        seed,
        suites,
    }
}

/// Classical fourth-order Runge-Kutta step of the oscillator equations.
pub fn rk4_step(state: &OscillatorState, inputs: &ControlInputs, params: &OscillatorParams, h: f64) -> OscillatorState {
    let inputs = inputs.clamped();
    let f = |s: &OscillatorState| oscillator::derivatives(s, &inputs, params);
    let add = |s: &OscillatorState, k: &Derivatives, c: f64| {
        let mut out = *s;
        out.prev_deriv = None;
        for i in 0..6 {
            out.r[i] += c * k.r[i];
            out.v[i] += c * k.v[i];
            out.theta[i] += c * k.theta[i];
            out.alpha[i] += c * k.alpha[i];
        }
        out
    };
    let k1 = f(state);
    let k2 = f(&add(state, &k1, h / 2.0));
    let k3 = f(&add(state, &k2, h / 2.0));
    let k4 = f(&add(state, &k3, h));
    let mut out = *state;
    out.prev_deriv = None;
    for i in 0..6 {
        out.r[i] += h / 6.0 * (k1.r[i] + 2.0 * k2.r[i] + 2.0 * k3.r[i] + k4.r[i]);
        out.v[i] += h / 6.0 * (k1.v[i] + 2.0 * k2.v[i] + 2.0 * k3.v[i] + k4.v[i]);
        out.theta[i] += h / 6.0 * (k1.theta[i] + 2.0 * k2.theta[i] + 2.0 * k3.theta[i] + k4.theta[i]);
        out.alpha[i] += h / 6.0 * (k1.alpha[i] + 2.0 * k2.alpha[i] + 2.0 * k3.alpha[i] + k4.alpha[i]);
    }
    out
}

fn max_state_error(a: &OscillatorState, b: &OscillatorState) -> f64 {
    let mut e: f64 = 0.0;
    for i in 0..6 {
        e = e
            .max((a.r[i] - b.r[i]).abs())
            .max((a.v[i] - b.v[i]).abs())
            .max((a.theta[i] - b.theta[i]).abs())
            .max((a.alpha[i] - b.alpha[i]).abs());
    }
    e
}

/// Integration scenario in the operating regime: amplitudes on their targets,
/// tripods locked, adjustable phases and inputs random.
pub fn integrator_scenario(rng: &mut RngStream, params: &OscillatorParams) -> (OscillatorState, ControlInputs) {
    let mut inputs = ControlInputs::uniform(0.0, 0.0, params.omega_scale);
    let mut state = OscillatorState::tripod_locked(1.0);
    for i in 0..6 {
        inputs.mu[i] = rng.uniform_in(-1.0, 1.0);
        inputs.omega[i] = rng.uniform_in(-1.0, 1.0);
        state.r[i] = map_amplitude_factor(inputs.mu[i], params);
        state.theta[i] = rng.uniform_in(-PI, PI);
    }
    (state, inputs)
}

/// Largest deviation between the production integrator and an RK4 reference
/// with step `h_ref` over `duration` seconds.
pub fn integrator_error(
    start: &OscillatorState,
    inputs: &ControlInputs,
    params: &OscillatorParams,
    duration: f64,
    h_ref: f64,
) -> f64 {
    let steps = (duration / params.dt).round() as usize;
    let sub = (params.dt / h_ref).round() as usize;
    let mut a = *start;
    let mut b = *start;
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        a = oscillator::step(&a, inputs, params);
        for _ in 0..sub {
            b = rk4_step(&b, inputs, params, h_ref);
        }
        worst = worst.max(max_state_error(&a, &b));
    }
    worst
}

fn oscillator_suite(seed: u64) -> Vec<CheckResult> {
    let params = OscillatorParams::default();
    let mut out = Vec::new();

    for mu in [-1.0, 0.0, 1.0] {
        let inputs = ControlInputs::uniform(mu, 0.0, params.omega_scale);
        let mut s = OscillatorState::tripod_locked(0.0);
        for _ in 0..200 {
            s = oscillator::step(&s, &inputs, &params);
        }
        let target = map_amplitude_factor(mu, &params);
        let err = s.r.iter().map(|r| (r - target).abs()).fold(0.0, f64::max);
        out.push(CheckResult::below(
            &format!("fixed_point_mu_{mu}"),
            err,
            1e-3,
            format!("|r - {target}| after 1 s from r = 0"),
        ));
    }

    let mut rng = RngStream::with_stream(seed, streams::CHECKS);
    let (start, inputs) = integrator_scenario(&mut rng, &params);
    let err = integrator_error(&start, &inputs, &params, 5.0, 1e-4);
    let mut cold = start;
    cold.r = [0.0; 6];
    let cold_err = integrator_error(&cold, &inputs, &params, 5.0, 1e-4);
    out.push(CheckResult::below(
        "integrator_vs_rk4",
        err,
        1e-3,
        format!(
            "max component error over 5 s with settled amplitudes, reference step 1e-4 s; \
             amplitude transient from r = 0 reaches {cold_err:.2e}"
        ),
    ));

    let trials = 20;
    let mut worst_spread: f64 = 0.0;
    let mut worst_cross: f64 = 0.0;
    let mut worst_rate: f64 = 0.0;
    let omega_m = params.omega_scale;
    let inputs = ControlInputs::uniform(0.0, 0.0, omega_m);
    for _ in 0..trials {
        let mut s = OscillatorState::tripod_locked(0.0);
        for i in 0..6 {
            s.r[i] = rng.uniform_in(0.0, 4.0);
            s.theta[i] = rng.uniform_in(-PI, PI);
            s.alpha[i] = rng.uniform_in(-PI, PI);
        }
        for _ in 0..2000 {
            s = oscillator::step(&s, &inputs, &params);
        }
        let (spread, cross) = tripod_lock_error(&s.alpha);
        worst_spread = worst_spread.max(spread);
        worst_cross = worst_cross.max(cross);
        let a0 = s.alpha;
        for _ in 0..200 {
            s = oscillator::step(&s, &inputs, &params);
        }
        for i in 0..6 {
            let rate = s.alpha[i] - a0[i];
            worst_rate = worst_rate.max((rate / (omega_m / 2.0) - 1.0).abs());
        }
    }
    out.push(CheckResult::below(
        "tripod_within_group_spread",
        worst_spread,
        1e-3,
        format!("{trials} random starts, 10 s"),
    ));
    out.push(CheckResult::below(
        "tripod_cross_group_offset",
        worst_cross,
        1e-3,
        "deviation from pi",
    ));
    out.push(CheckResult::below(
        "locked_phase_rate",
        worst_rate,
        0.01,
        "relative deviation of the tripod phase rate from omega_m / 2",
    ));

    let frozen = OscillatorParams {
        phase_model: PhaseModel::Coupled,
        ..params.clone()
    };
    let inputs = ControlInputs::uniform(0.0, -1.0, omega_m);
    let mut s = OscillatorState::initial(2.5, PhaseModel::Coupled);
    let phi0 = s.mixed_phase();
    for _ in 0..2000 {
        s = oscillator::step(&s, &inputs, &frozen);
    }
    let drift = s
        .mixed_phase()
        .iter()
        .zip(&phi0)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    out.push(CheckResult::below(
        "coupled_model_frozen_phase",
        drift,
        1e-6,
        "phase advance over 10 s without the tripod phase at zero frequency",
    ));
    out
}

fn random_geometry(rng: &mut RngStream) -> LegGeometry {
    LegGeometry {
        l1: rng.uniform_in(0.02, 0.08),
        l2: rng.uniform_in(0.04, 0.12),
        l3: rng.uniform_in(0.04, 0.15),
        branch: if rng.uniform() < 0.5 {
            IkBranch::TibiaDown
        } else {
            IkBranch::TibiaUp
        },
        ..LegGeometry::default()
    }
}

/// Random joint configuration on the geometry's branch with the foot in
/// front of the coxa axis, kept away from the straight-leg singularity.
fn random_joints(rng: &mut RngStream, g: &LegGeometry) -> JointAngles {
    loop {
        let bend = rng.uniform_in(0.05, PI - 0.05);
        let q = JointAngles {
            j0: rng.uniform_in(-PI / 2.0, PI / 2.0),
            j1: rng.uniform_in(-PI / 2.0, PI / 2.0),
            j2: match g.branch {
                IkBranch::TibiaDown => -bend,
                IkBranch::TibiaUp => bend,
            },
        };
        if g.l1 + g.l2 * q.j1.cos() + g.l3 * (q.j1 + q.j2).cos() > 1e-3 {
            return q;
        }
    }
}

fn kinematics_suite(seed: u64) -> Vec<CheckResult> {
    let mut rng = RngStream::with_stream(seed, streams::CHECKS).split(1);
    let mut worst: f64 = 0.0;
    let mut failures = 0usize;
    let mut rejected = 0usize;
    let mut rejected_ok = 0usize;
    let (geometries, per) = (20, 500);
    for _ in 0..geometries {
        let g = random_geometry(&mut rng);
        for _ in 0..per {
            let q = random_joints(&mut rng, &g);
            let p = forward_kinematics(&q, &g);
            match inverse_kinematics(&p, &g) {
                Ok(sol) => worst = worst.max(forward_kinematics(&sol, &g).distance(&p)),
                Err(_) => failures += 1,
            }
        }
        for _ in 0..10 {
            let ang = rng.uniform_in(-PI, PI);
            let rho = g.l1 + (g.l2 + g.l3) * rng.uniform_in(1.01, 2.0);
            let p = FootPosition::new(rho * ang.cos(), rho * ang.sin(), 0.0);
            rejected += 1;
            if matches!(inverse_kinematics(&p, &g), Err(KinematicsError::Unreachable { .. })) {
                rejected_ok += 1;
            }
        }
    }
    vec![
        CheckResult::below(
            "fk_ik_round_trip",
            worst,
            1e-9,
            format!("max |FK(IK(p)) - p| in m over {} targets, {geometries} geometries", geometries * per),
        ),
        CheckResult::flag(
            "reachable_targets_solved",
            failures == 0,
            format!("{failures} reachable targets rejected"),
        ),
        CheckResult::flag(
            "unreachable_targets_rejected",
            rejected_ok == rejected,
            format!("{rejected_ok}/{rejected} out-of-reach targets rejected"),
        ),
    ]
}

fn sampler_suite(seed: u64) -> Vec<CheckResult> {
    let mut rng = RngStream::with_stream(seed, streams::SKILLS);
    let samples = sample_skills(&mut rng, 1_000_000);
    let st = disc_stats(&samples, 10, 10);
    vec![
        CheckResult::below(
            "inner_half_fraction",
            (st.frac_inner_half - 0.25).abs(),
            0.002,
            format!("P(|z| <= 0.5) = {}", st.frac_inner_half),
        ),
        CheckResult::below(
            "mean_norm",
            (st.mean_norm - 2.0 / 3.0).abs(),
            0.002,
            format!("E|z| = {}", st.mean_norm),
        ),
        CheckResult {
            name: "chi_square_uniformity".into(),
            passed: st.p_value > 1e-3,
            measured: st.p_value,
            threshold: 1e-3,
            detail: format!(
                "chi2 = {:.3} on {} dof over a 10x10 equal-area grid; passes when p > threshold",
                st.chi_square, st.degrees_of_freedom
            ),
        },
        CheckResult::flag(
            "inside_unit_disc",
            st.max_norm <= 1.0,
            format!("max |z| = {}", st.max_norm),
        ),
    ]
}

fn rewards_suite(seed: u64) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mut rng = RngStream::with_stream(seed, streams::CHECKS).split(2);

    // Reference values written out by hand from the reward definitions.
    let sub = SubRewards {
        speed: 0.3,
        direction: 1.0,
        balance: -0.04,
        collision: -1.0,
        time: -0.1,
    };
    let cases = [
        (reward::speed_reward([1.0, 0.0], [0.5, 0.0], 0.3), 0.3),
        (reward::speed_reward([0.0, 1.0], [0.0, -0.2], 0.3), -0.2),
        (reward::direction_reward([1.0, 0.0], [0.0, 1.0]), (-(2.0f64).sqrt()).exp()),
        (reward::balance_reward(0.2), -0.04),
        (reward::collision_reward(4.0, 1.0), 0.0),
        (reward::collision_reward(4.000001, 1.0), -1.0),
        (reward::time_reward(), -0.1),
        (
            reward::weighted_reward(&sub, &TaskKind::Alley.weights(), 3.0),
            3.0 * (2.0 * 0.3 + 1.0 + 2.0 * -0.04 + 2.0 * -1.0 - 0.1),
        ),
    ];
    let worst = cases.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    out.push(CheckResult::below(
        "reward_fixtures",
        worst,
        1e-12,
        format!("{} hand-computed cases", cases.len()),
    ));

    let phi = Projection::PLANAR;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let len = 2 + (rng.uniform() * 2000.0) as usize;
        let mut s = vec![0.0; 4];
        let mut traj = Vec::with_capacity(len);
        for _ in 0..len {
            for x in s.iter_mut() {
                *x += rng.uniform_in(-0.05, 0.05);
            }
            traj.push(s.clone());
        }
        let z = SkillVector::from_polar(rng.uniform(), rng.uniform_in(-PI, PI));
        let a = trajectory_objective(&phi, &traj, &z).expect("long enough");
        let b = trajectory_objective_endpoints(&phi, &traj[0], &traj[len - 1], &z);
        worst = worst.max((a - b).abs());
    }
    out.push(CheckResult::below(
        "telescoping_sum",
        worst,
        1e-12,
        "per-step sum minus endpoint form",
    ));

    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..10_000)
        .map(|_| {
            let x: Vec<f64> = (0..4).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let y: Vec<f64> = (0..4).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            (x, y)
        })
        .collect();
    let one = lipschitz_check(&phi, &pairs);
    let two = lipschitz_check(&Projection { indices: [0, 1], scale: 2.0 }, &pairs);
    out.push(CheckResult::flag(
        "lipschitz_detection",
        one.passed() && !two.passed(),
        format!(
            "1-Lipschitz map: {} violations; 2-Lipschitz map: {} violations",
            one.violations.len(),
            two.violations.len()
        ),
    ));

    let d = [1.0, 0.0];
    let near = heading_mix(d, [1.0, 0.59]);
    let far = heading_mix(d, [1.0, 0.61]);
    out.push(CheckResult::flag(
        "heading_mix_threshold",
        near == [1.0, 0.59] && far == d,
        "student kept at distance 0.59, teacher used at 0.61",
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_reference_is_fourth_order() {
        let params = OscillatorParams::default();
        let mut rng = RngStream::new(4);
        let (mut start, inputs) = integrator_scenario(&mut rng, &params);
        start.r = [0.0; 6];
        start.alpha[0] += 1.0;
        let run = |h: f64| {
            let mut s = start;
            for _ in 0..(0.2 / h).round() as usize {
                s = rk4_step(&s, &inputs, &params, h);
            }
            s
        };
        let fine = run(1e-5);
        let e1 = max_state_error(&run(2e-3), &fine);
        let e2 = max_state_error(&run(1e-3), &fine);
        let order = (e1 / e2).log2();
        assert!((order - 4.0).abs() < 0.5, "observed order {order}");
    }

    #[test]
    fn fast_suites_pass() {
        for s in [Suite::Kinematics, Suite::Rewards] {
            let r = s.run(0);
            assert!(r.passed, "{r:#?}");
        }
    }

    #[test]
    fn suite_names_parse() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("physics".parse::<Suite>().is_err());
    }
}
