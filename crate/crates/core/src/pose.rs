//! Pattern formation: foot targets, morphology and leg kinematics.
//!
//! Two leg-local frames are used. The *gait frame* is the one foot targets are
//! generated in: `x` along the body's forward axis, `y` outward from the body,
//! `z` up. The *joint frame* is the one the kinematics work in: `x` along the
//! leg axis when all joints are zero, `z` up, and `y` the direction a positive
//! coxa yaw swings the foot. [`gait_to_joint`] converts between the two.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::leg::Leg;

/// Fraction of a parameter's range applied per unit of morphology delta.
pub const MORPH_DELTA_GAIN: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MorphParams {
    /// Step length (m, signed; negative walks backward).
    pub l: f64,
    /// Body height (m).
    pub h: f64,
    /// Maximum ground penetration during stance (m).
    pub g_p: f64,
    /// Maximum ground clearance during swing (m).
    pub g_c: f64,
    /// Width multiplier.
    pub w_y: f64,
}

impl Default for MorphParams {
    fn default() -> Self {
        Self {
            l: 0.06,
            h: 0.05,
            g_p: 0.04,
            g_c: 0.06,
            w_y: 1.3,
        }
    }
}

impl MorphParams {
    pub fn to_array(self) -> [f64; 5] {
        [self.l, self.h, self.g_p, self.g_c, self.w_y]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            l: a[0],
            h: a[1],
            g_p: a[2],
            g_c: a[3],
            w_y: a[4],
        }
    }
}

pub const MORPH_FIELDS: [&str; 5] = ["l", "h", "g_p", "g_c", "w_y"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.min, self.max)
    }
}

/// Admissible range of each morphology parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MorphRanges {
    pub l: Range,
    pub h: Range,
    pub g_p: Range,
    pub g_c: Range,
    pub w_y: Range,
}

impl Default for MorphRanges {
    fn default() -> Self {
        Self {
            l: Range::new(-0.12, 0.12),
            h: Range::new(0.02, 0.08),
            g_p: Range::new(0.03, 0.06),
            g_c: Range::new(0.04, 0.08),
            w_y: Range::new(1.1, 1.5),
        }
    }
}

impl MorphRanges {
    pub fn to_array(&self) -> [Range; 5] {
        [self.l, self.h, self.g_p, self.g_c, self.w_y]
    }

    pub fn contains(&self, m: &MorphParams) -> bool {
        self.to_array()
            .iter()
            .zip(m.to_array())
            .all(|(r, x)| r.contains(x))
    }

    pub fn clamp(&self, m: &MorphParams) -> MorphParams {
        let ranges = self.to_array();
        let mut a = m.to_array();
        for (x, r) in a.iter_mut().zip(ranges.iter()) {
            *x = r.clamp(*x);
        }
        MorphParams::from_array(a)
    }
}

/// Incremental morphology update: each parameter moves by
/// `0.02 * (max - min) * delta` and is clamped back into its range.
pub fn apply_morph_delta(morph: &MorphParams, delta: &[f64; 5], ranges: &MorphRanges) -> MorphParams {
    let mut a = morph.to_array();
    for ((x, r), d) in a.iter_mut().zip(ranges.to_array()).zip(delta) {
        let d = if d.is_nan() { 0.0 } else { d.clamp(-1.0, 1.0) };
        *x = r.clamp(*x + MORPH_DELTA_GAIN * r.width() * d);
    }
    MorphParams::from_array(a)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MountPose {
    /// Coxa joint position in the body frame (m).
    pub x: f64,
    pub y: f64,
    /// Direction of the leg axis in the body frame (rad).
    pub yaw: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IkBranch {
    /// Tibia folded below the femur (`j2 <= 0`).
    #[default]
    TibiaDown,
    /// Tibia folded above the femur (`j2 >= 0`).
    TibiaUp,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegGeometry {
    /// Coxa length (m).
    pub l1: f64,
    /// Femur length (m).
    pub l2: f64,
    /// Tibia length (m).
    pub l3: f64,
    pub mount: MountPose,
    pub branch: IkBranch,
}

impl Default for LegGeometry {
    fn default() -> Self {
        Self {
            l1: 0.04,
            l2: 0.06,
            l3: 0.08,
            mount: MountPose {
                x: 0.0,
                y: 0.06,
                yaw: FRAC_PI_2,
            },
            branch: IkBranch::TibiaDown,
        }
    }
}

impl LegGeometry {
    /// Coxa plus femur length, the lateral reference distance of foot targets.
    pub fn lateral_reach(&self) -> f64 {
        self.l1 + self.l2
    }

    pub fn planar_reach(&self) -> (f64, f64) {
        ((self.l2 - self.l3).abs(), self.l2 + self.l3)
    }

    pub fn is_valid(&self) -> bool {
        [self.l1, self.l2, self.l3]
            .iter()
            .all(|x| x.is_finite() && *x > 0.0)
    }
}

/// Mount layout of a symmetric body with three legs per side.
pub fn default_mounts(half_length: f64, half_width: f64) -> [MountPose; 6] {
    let mut mounts = [MountPose {
        x: 0.0,
        y: 0.0,
        yaw: 0.0,
    }; 6];
    for leg in Leg::ALL {
        let x = match leg {
            Leg::LF | Leg::RF => half_length,
            Leg::LM | Leg::RM => 0.0,
            Leg::LH | Leg::RH => -half_length,
        };
        mounts[leg.index()] = MountPose {
            x,
            y: leg.side() * half_width,
            yaw: leg.side() * FRAC_PI_2,
        };
    }
    mounts
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FootPosition {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl FootPosition {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, o: &FootPosition) -> f64 {
        ((self.x - o.x).powi(2) + (self.y - o.y).powi(2) + (self.z - o.z).powi(2)).sqrt()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JointAngles {
    /// Coxa yaw (rad).
    pub j0: f64,
    /// Femur pitch, positive raises the femur (rad).
    pub j1: f64,
    /// Tibia pitch relative to the femur (rad).
    pub j2: f64,
}

impl JointAngles {
    pub fn splat(x: f64) -> Self {
        Self { j0: x, j1: x, j2: x }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.j0, self.j1, self.j2]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointLimits {
    pub j0: Range,
    pub j1: Range,
    pub j2: Range,
}

impl Default for JointLimits {
    fn default() -> Self {
        let r = Range::new(-FRAC_PI_2, FRAC_PI_2);
        Self { j0: r, j1: r, j2: r }
    }
}

impl JointLimits {
    pub fn clamp(&self, q: &JointAngles) -> JointAngles {
        JointAngles {
            j0: self.j0.clamp(q.j0),
            j1: self.j1.clamp(q.j1),
            j2: self.j2.clamp(q.j2),
        }
    }

    pub fn contains(&self, q: &JointAngles) -> bool {
        self.j0.contains(q.j0) && self.j1.contains(q.j1) && self.j2.contains(q.j2)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KinematicsError {
    #[error("target unreachable: planar distance {distance:.6} m outside [{min:.6}, {max:.6}]")]
    Unreachable { distance: f64, min: f64, max: f64 },
    #[error("non-finite foot target")]
    NonFinite,
}

/// Foot target in the gait frame from amplitude `r` and mixed phase `phi`.
///
/// Swing (`sin(phi) > 0`) lifts the foot by up to `g_c`; otherwise the foot is
/// in stance and presses down by up to `g_p`.
pub fn foot_position(r: f64, phi: f64, morph: &MorphParams, geom: &LegGeometry) -> FootPosition {
    let (s, c) = phi.sin_cos();
    let x = -morph.l * (r - 1.0) * c;
    let y = geom.lateral_reach() * morph.w_y;
    let z = if s > 0.0 {
        -morph.h + morph.g_c * s
    } else {
        -morph.h + morph.g_p * s
    };
    FootPosition { x, y, z }
}

/// Gait frame to joint frame for a leg whose axis points along `mount.yaw`.
pub fn gait_to_joint(p: &FootPosition, leg: Leg) -> FootPosition {
    FootPosition {
        x: p.y,
        y: -leg.side() * p.x,
        z: p.z,
    }
}

pub fn joint_to_gait(p: &FootPosition, leg: Leg) -> FootPosition {
    FootPosition {
        x: -leg.side() * p.y,
        y: p.x,
        z: p.z,
    }
}

/// Joint-frame point expressed in the body frame.
pub fn joint_to_body(p: &FootPosition, mount: &MountPose) -> FootPosition {
    let (s, c) = mount.yaw.sin_cos();
    FootPosition {
        x: mount.x + c * p.x - s * p.y,
        y: mount.y + s * p.x + c * p.y,
        z: p.z,
    }
}

/// Closed-form forward kinematics in the joint frame. All-zero angles put the
/// foot at `(l1 + l2 + l3, 0, 0)`.
pub fn forward_kinematics(q: &JointAngles, geom: &LegGeometry) -> FootPosition {
    let radial = geom.l1 + geom.l2 * q.j1.cos() + geom.l3 * (q.j1 + q.j2).cos();
    let z = geom.l2 * q.j1.sin() + geom.l3 * (q.j1 + q.j2).sin();
    let (s0, c0) = q.j0.sin_cos();
    FootPosition {
        x: radial * c0,
        y: radial * s0,
        z,
    }
}

pub fn inverse_kinematics(p: &FootPosition, geom: &LegGeometry) -> Result<JointAngles, KinematicsError> {
    if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
        return Err(KinematicsError::NonFinite);
    }
    let j0 = p.y.atan2(p.x);
    let u = p.x.hypot(p.y) - geom.l1;
    let w = p.z;
    let d = u.hypot(w);
    let (min, max) = geom.planar_reach();
    // relative slack for targets produced by forward kinematics at the boundary
    let slack = 1e-12 * (geom.l2 + geom.l3);
    if d < min - slack || d > max + slack {
        return Err(KinematicsError::Unreachable {
            distance: d,
            min,
            max,
        });
    }
    Ok(planar_solution(j0, u, w, geom))
}

/// Like [`inverse_kinematics`] but projects unreachable targets radially onto
/// the reachable annulus instead of failing. Returns the angles and whether the
/// target had to be moved.
pub fn inverse_kinematics_clamped(p: &FootPosition, geom: &LegGeometry) -> (JointAngles, bool) {
    if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
        return (JointAngles::default(), true);
    }
    let j0 = p.y.atan2(p.x);
    let mut u = p.x.hypot(p.y) - geom.l1;
    let mut w = p.z;
    let d = u.hypot(w);
    let (min, max) = geom.planar_reach();
    let mut clamped = false;
    if d > max || d < min {
        clamped = true;
        let target = d.clamp(min, max);
        if d > 0.0 {
            u *= target / d;
            w *= target / d;
        } else {
            u = target;
            w = 0.0;
        }
    }
    (planar_solution(j0, u, w, geom), clamped)
}

fn planar_solution(j0: f64, u: f64, w: f64, geom: &LegGeometry) -> JointAngles {
    let (l2, l3) = (geom.l2, geom.l3);
    let d = u.hypot(w);
    let (near, far) = geom.planar_reach();
    // half-angle form of the law of cosines; exact at full extension and fold
    let outer = ((far - d) * (far + d)).max(0.0).sqrt();
    let inner = ((d - near) * (d + near)).max(0.0).sqrt();
    let bend = 2.0 * outer.atan2(inner);
    let j2 = match geom.branch {
        IkBranch::TibiaDown => -bend,
        IkBranch::TibiaUp => bend,
    };
    let j1 = w.atan2(u) - (l3 * j2.sin()).atan2(l2 + l3 * j2.cos());
    JointAngles { j0, j1, j2 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn geom() -> LegGeometry {
        LegGeometry::default()
    }

    #[test]
    fn foot_top_of_swing() {
        let morph = MorphParams {
            h: 0.05,
            g_c: 0.06,
            ..MorphParams::default()
        };
        let p = foot_position(3.0, PI / 2.0, &morph, &geom());
        assert_abs_diff_eq!(p.z, 0.01, epsilon = 1e-12);
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn foot_at_zero_phase_takes_stance_branch() {
        let morph = MorphParams {
            l: 0.12,
            h: 0.05,
            ..MorphParams::default()
        };
        let p = foot_position(2.5, 0.0, &morph, &geom());
        assert_abs_diff_eq!(p.x, -0.18, epsilon = 1e-12);
        assert_abs_diff_eq!(p.z, -0.05, epsilon = 1e-12);
    }

    #[test]
    fn lateral_target_only_depends_on_width() {
        let g = LegGeometry {
            l1: 0.04,
            l2: 0.06,
            ..LegGeometry::default()
        };
        let morph = MorphParams {
            w_y: 1.1,
            ..MorphParams::default()
        };
        for k in 0..16 {
            let p = foot_position(1.0 + k as f64 * 0.2, k as f64 * 0.7, &morph, &g);
            assert_abs_diff_eq!(p.y, 0.11, epsilon = 1e-12);
        }
    }

    #[test]
    fn morph_delta_examples() {
        let ranges = MorphRanges::default();
        let m = MorphParams::default();
        assert_eq!(apply_morph_delta(&m, &[0.0; 5], &ranges), m);

        let m0 = MorphParams { l: 0.0, ..m };
        let m1 = apply_morph_delta(&m0, &[1.0, 0.0, 0.0, 0.0, 0.0], &ranges);
        assert_abs_diff_eq!(m1.l, 0.0048, epsilon = 1e-15);

        let top = MorphParams { h: 0.08, ..m };
        assert_eq!(apply_morph_delta(&top, &[0.0, 1.0, 0.0, 0.0, 0.0], &ranges).h, 0.08);
    }

    #[test]
    fn straight_leg_ik() {
        // dyadic lengths so the full-extension target is exactly representable
        let g = LegGeometry {
            l1: 0.25,
            l2: 0.5,
            l3: 0.75,
            ..geom()
        };
        let p = FootPosition::new(g.l1 + g.l2 + g.l3, 0.0, 0.0);
        let q = inverse_kinematics(&p, &g).unwrap();
        assert_eq!(q.j0, 0.0);
        assert_eq!(q.j1, 0.0);
        assert_eq!(q.j2, 0.0);

        // with inexact lengths the target lands an ulp inside the boundary,
        // where the knee angle is only determined to sqrt(eps)
        let g = geom();
        let p = FootPosition::new(g.l1 + g.l2 + g.l3, 0.0, 0.0);
        let q = inverse_kinematics(&p, &g).unwrap();
        assert_abs_diff_eq!(q.j0, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.j1, 0.0, epsilon = 1e-7);
        assert_abs_diff_eq!(q.j2, 0.0, epsilon = 1e-7);
        assert!(forward_kinematics(&q, &g).distance(&p) < 1e-12);
    }

    #[test]
    fn fk_examples() {
        let g = geom();
        let p = forward_kinematics(&JointAngles::default(), &g);
        assert_abs_diff_eq!(p.x, g.l1 + g.l2 + g.l3, epsilon = 1e-15);
        assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.z, 0.0, epsilon = 1e-15);
        let down = forward_kinematics(
            &JointAngles {
                j0: 0.0,
                j1: -PI / 2.0,
                j2: 0.0,
            },
            &g,
        );
        assert_abs_diff_eq!(down.x, g.l1, epsilon = 1e-15);
        assert_abs_diff_eq!(down.z, -(g.l2 + g.l3), epsilon = 1e-15);
    }

    /// Product of homogeneous transforms: yaw, translate coxa, pitch, translate
    /// femur, pitch, translate tibia.
    fn fk_by_transforms(q: &JointAngles, g: &LegGeometry) -> FootPosition {
        type M = [[f64; 4]; 4];
        fn mul(a: &M, b: &M) -> M {
            let mut c = [[0.0; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    for k in 0..4 {
                        c[i][j] += a[i][k] * b[k][j];
                    }
                }
            }
            c
        }
        let rz = |t: f64| -> M {
            [
                [t.cos(), -t.sin(), 0.0, 0.0],
                [t.sin(), t.cos(), 0.0, 0.0],
                [0.0, 0.0, 1.0, 0.0],
                [0.0, 0.0, 0.0, 1.0],
            ]
        };
        // pitch that raises +x toward +z for positive angles
        let ry = |t: f64| -> M {
            [
                [t.cos(), 0.0, -t.sin(), 0.0],
                [0.0, 1.0, 0.0, 0.0],
                [t.sin(), 0.0, t.cos(), 0.0],
                [0.0, 0.0, 0.0, 1.0],
            ]
        };
        let tx = |d: f64| -> M {
            [
                [1.0, 0.0, 0.0, d],
                [0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 0.0],
                [0.0, 0.0, 0.0, 1.0],
            ]
        };
        let mut t = rz(q.j0);
        t = mul(&t, &tx(g.l1));
        t = mul(&t, &ry(q.j1));
        t = mul(&t, &tx(g.l2));
        t = mul(&t, &ry(q.j2));
        t = mul(&t, &tx(g.l3));
        FootPosition::new(t[0][3], t[1][3], t[2][3])
    }

    #[test]
    fn unreachable_is_rejected() {
        let g = geom();
        let p = FootPosition::new(g.l1 + g.l2 + g.l3 + 0.01, 0.0, 0.0);
        match inverse_kinematics(&p, &g) {
            Err(KinematicsError::Unreachable { distance, max, .. }) => {
                assert_abs_diff_eq!(distance, g.l2 + g.l3 + 0.01, epsilon = 1e-12);
                assert_abs_diff_eq!(max, g.l2 + g.l3, epsilon = 1e-15);
            }
            other => panic!("expected Unreachable, got {other:?}"),
        }
    }

    #[test]
    fn clamped_ik_projects_onto_workspace() {
        let g = geom();
        let p = FootPosition::new(0.3, 0.1, -0.1);
        let (q, clamped) = inverse_kinematics_clamped(&p, &g);
        assert!(clamped);
        let back = forward_kinematics(&q, &g);
        let u = back.x.hypot(back.y) - g.l1;
        assert_abs_diff_eq!(u.hypot(back.z), g.l2 + g.l3, epsilon = 1e-9);
        assert_abs_diff_eq!(back.y.atan2(back.x), p.y.atan2(p.x), epsilon = 1e-12);
    }

    #[test]
    fn frame_conversions_invert() {
        for leg in Leg::ALL {
            let p = FootPosition::new(0.03, 0.12, -0.05);
            let back = joint_to_gait(&gait_to_joint(&p, leg), leg);
            assert_eq!(back, p);
        }
    }

    #[test]
    fn gait_forward_is_body_forward() {
        let mounts = default_mounts(0.1, 0.06);
        for leg in Leg::ALL {
            let g = FootPosition::new(0.05, 0.1, -0.05);
            let j = gait_to_joint(&g, leg);
            let b = joint_to_body(&j, &mounts[leg.index()]);
            let m = mounts[leg.index()];
            assert_abs_diff_eq!(b.x - m.x, 0.05, epsilon = 1e-12);
            assert_abs_diff_eq!((b.y - m.y) * leg.side(), 0.1, epsilon = 1e-12);
        }
    }

    fn arb_geom() -> impl Strategy<Value = LegGeometry> {
        (0.01f64..0.1, 0.02f64..0.15, 0.02f64..0.2, any::<bool>()).prop_map(|(l1, l2, l3, up)| {
            LegGeometry {
                l1,
                l2,
                l3,
                branch: if up { IkBranch::TibiaUp } else { IkBranch::TibiaDown },
                ..LegGeometry::default()
            }
        })
    }

    proptest! {
        #[test]
        fn fk_matches_transform_product(
            g in arb_geom(),
            j0 in -PI..PI, j1 in -PI..PI, j2 in -PI..PI,
        ) {
            let q = JointAngles { j0, j1, j2 };
            let a = forward_kinematics(&q, &g);
            let b = fk_by_transforms(&q, &g);
            prop_assert!(a.distance(&b) < 1e-12);
        }

        #[test]
        fn ik_round_trip(
            g in arb_geom(),
            x in -0.5f64..0.5, y in -0.5f64..0.5, z in -0.5f64..0.5,
        ) {
            let p = FootPosition::new(x, y, z);
            match inverse_kinematics(&p, &g) {
                Ok(q) => {
                    let back = forward_kinematics(&q, &g);
                    prop_assert!(back.distance(&p) < 1e-9);
                    match g.branch {
                        IkBranch::TibiaDown => prop_assert!(q.j2 <= 0.0),
                        IkBranch::TibiaUp => prop_assert!(q.j2 >= 0.0),
                    }
                }
                Err(KinematicsError::Unreachable { distance, min, max }) => {
                    prop_assert!(distance < min || distance > max);
                }
                Err(e) => prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn morph_stays_in_range(
            deltas in proptest::collection::vec(proptest::array::uniform5(-3.0f64..3.0), 1..200)
        ) {
            let ranges = MorphRanges::default();
            let mut m = MorphParams::default();
            for d in deltas {
                m = apply_morph_delta(&m, &d, &ranges);
                prop_assert!(ranges.contains(&m));
            }
        }

        #[test]
        fn stance_swing_consistency(phi in -20.0f64..20.0, r in 1.0f64..4.0) {
            let m = MorphParams::default();
            let p = foot_position(r, phi, &m, &geom());
            prop_assert_eq!(p.z >= -m.h, phi.sin() >= 0.0);
        }

        #[test]
        fn negating_step_length_mirrors_x(phi in -20.0f64..20.0, r in 0.0f64..4.0, l in -0.12f64..0.12) {
            let m = MorphParams { l, ..MorphParams::default() };
            let n = MorphParams { l: -l, ..m };
            let a = foot_position(r, phi, &m, &geom());
            let b = foot_position(r, phi, &n, &geom());
            prop_assert_eq!(a.x, -b.x);
            prop_assert_eq!(a.y, b.y);
            prop_assert_eq!(a.z, b.z);
        }
    }
}
