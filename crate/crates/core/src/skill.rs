//! Two-dimensional skill space.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::oscillator::compute_omega_max;
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SkillVector {
    pub x: f64,
    pub y: f64,
}

impl SkillVector {
    pub const ZERO: SkillVector = SkillVector { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Builds a skill from raw policy output, projecting onto the closed unit
    /// disc when the norm exceeds one. Non-finite input maps to zero.
    pub fn from_raw(x: f64, y: f64) -> Self {
        if !(x.is_finite() && y.is_finite()) {
            return Self::ZERO;
        }
        let n = x.hypot(y);
        if n > 1.0 {
            Self::new(x / n, y / n)
        } else {
            Self::new(x, y)
        }
    }

    pub fn from_polar(norm: f64, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::from_raw(norm * c, norm * s)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(&self, v: [f64; 2]) -> f64 {
        self.x * v[0] + self.y * v[1]
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Maps a pair of uniform draws `(R, beta)` onto the disc:
/// `z = sqrt(R) * (cos beta, sin beta)`.
pub fn skill_from_uniforms(radius_draw: f64, angle: f64) -> SkillVector {
    let rho = radius_draw.clamp(0.0, 1.0).sqrt();
    let (s, c) = angle.sin_cos();
    SkillVector::new(rho * c, rho * s)
}

/// Uniform sample from the unit disc. Consumes two draws: `R ~ U(0,1)` then
/// `beta ~ U(0, 2 pi)`.
pub fn sample_skill(rng: &mut RngStream) -> SkillVector {
    let r = rng.uniform();
    let beta = rng.uniform_in(0.0, 2.0 * PI);
    skill_from_uniforms(r, beta)
}

pub fn sample_skills(rng: &mut RngStream, count: usize) -> Vec<SkillVector> {
    (0..count).map(|_| sample_skill(rng)).collect()
}

/// Maximum oscillator frequency commanded by a skill.
pub fn skill_frequency(z: &SkillVector, omega_scale: f64) -> f64 {
    compute_omega_max(z.norm(), omega_scale)
}

/// Statistics of a sample set used by the uniformity checks.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscStats {
    pub count: usize,
    pub frac_inner_half: f64,
    pub mean_norm: f64,
    pub chi_square: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub max_norm: f64,
}

/// Equal-area polar grid: `rings` annuli with radii `sqrt(k / rings)` times
/// `sectors` angular slices.
pub fn disc_stats(samples: &[SkillVector], rings: usize, sectors: usize) -> DiscStats {
    let n = samples.len();
    let mut counts = vec![0usize; rings * sectors];
    let mut inner = 0usize;
    let mut norm_sum = 0.0;
    let mut max_norm: f64 = 0.0;
    for z in samples {
        let rho = z.norm();
        max_norm = max_norm.max(rho);
        norm_sum += rho;
        if rho <= 0.5 {
            inner += 1;
        }
        let ring = ((rho * rho * rings as f64) as usize).min(rings - 1);
        let ang = z.y.atan2(z.x).rem_euclid(2.0 * PI);
        let sector = ((ang / (2.0 * PI) * sectors as f64) as usize).min(sectors - 1);
        counts[ring * sectors + sector] += 1;
    }
    let cells = rings * sectors;
    let expected = n as f64 / cells as f64;
    let chi_square: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let dof = cells - 1;
    DiscStats {
        count: n,
        frac_inner_half: inner as f64 / n as f64,
        mean_norm: norm_sum / n as f64,
        chi_square,
        degrees_of_freedom: dof,
        p_value: chi_square_upper_tail(chi_square, dof as f64),
        max_norm,
    }
}

/// `P(X >= x)` for a chi-square variable with `k` degrees of freedom.
pub fn chi_square_upper_tail(x: f64, k: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    match ChiSquared::new(k) {
        Ok(d) => d.sf(x),
        Err(_) => f64::NAN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn polar_map_examples() {
        assert_eq!(skill_from_uniforms(0.0, 1.234), SkillVector::new(0.0, 0.0));
        assert_eq!(skill_from_uniforms(1.0, 0.0), SkillVector::new(1.0, 0.0));
    }

    #[test]
    fn frequency_from_skill() {
        let omega = 8.0 * PI;
        assert_abs_diff_eq!(skill_frequency(&SkillVector::ZERO, omega), 1.6 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(skill_frequency(&SkillVector::new(1.0, 0.0), omega), omega, epsilon = 1e-12);
        assert_abs_diff_eq!(skill_frequency(&SkillVector::new(0.6, 0.8), omega), omega, epsilon = 1e-12);
    }

    #[test]
    fn from_raw_projects() {
        let z = SkillVector::from_raw(3.0, 4.0);
        assert_abs_diff_eq!(z.x, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(z.y, 0.8, epsilon = 1e-15);
        assert_eq!(SkillVector::from_raw(f64::NAN, 0.0), SkillVector::ZERO);
        assert_eq!(SkillVector::from_raw(0.3, -0.2), SkillVector::new(0.3, -0.2));
    }

    #[test]
    fn samples_inside_disc_and_deterministic() {
        let mut a = RngStream::new(11);
        let mut b = RngStream::new(11);
        for _ in 0..10_000 {
            let za = sample_skill(&mut a);
            let zb = sample_skill(&mut b);
            assert!(za.norm() <= 1.0 + 1e-12);
            assert_eq!(za, zb);
        }
    }

    #[test]
    fn chi_square_tail_reference_values() {
        // P(X >= k) for small cases with closed forms.
        assert_abs_diff_eq!(chi_square_upper_tail(2.0, 2.0), (-1.0f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            chi_square_upper_tail(3.0, 4.0),
            (-1.5f64).exp() * (1.0 + 1.5),
            epsilon = 1e-12
        );
        // large dof, around the median
        let p = chi_square_upper_tail(98.334, 99.0);
        assert_abs_diff_eq!(p, 0.5, epsilon = 1e-3);
    }

    #[test]
    fn small_sample_stats() {
        let mut rng = RngStream::new(5);
        let s = sample_skills(&mut rng, 200_000);
        let st = disc_stats(&s, 10, 10);
        assert!((st.frac_inner_half - 0.25).abs() < 0.005);
        assert!((st.mean_norm - 2.0 / 3.0).abs() < 0.005);
        assert!(st.p_value > 1e-4);
    }
}
