//! Height-field terrain with parametric obstacle generators.

use serde::{Deserialize, Serialize};

use crate::reward::{DifficultyLevel, TaskKind};

/// Obstacle layout along the world x axis. Lengths in metres, angles in
/// degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerrainSpec {
    Flat,
    Stairs {
        start_x: f64,
        step_depth: f64,
        step_height: f64,
        steps: u32,
    },
    Gap {
        start_x: f64,
        width: f64,
        depth: f64,
    },
    Alley {
        start_x: f64,
        length: f64,
        width: f64,
        wall_height: f64,
    },
    Slope {
        start_x: f64,
        length: f64,
        angle_deg: f64,
    },
}

impl Default for TerrainSpec {
    fn default() -> Self {
        TerrainSpec::Flat
    }
}

impl TerrainSpec {
    /// Obstacle for a task, scaled by difficulty: stair height, gap width,
    /// alley narrowing and slope angle all grow with the level.
    pub fn for_task(kind: TaskKind, level: DifficultyLevel) -> Self {
        let d = level.get() as f64;
        match kind {
            TaskKind::Stairs => TerrainSpec::Stairs {
                start_x: 0.5,
                step_depth: 0.25,
                step_height: 0.005 * d,
                steps: 4,
            },
            TaskKind::Gap => TerrainSpec::Gap {
                start_x: 0.5,
                width: 0.02 * d,
                depth: 0.2,
            },
            TaskKind::Alley => TerrainSpec::Alley {
                start_x: 0.5,
                length: 1.0,
                width: 0.7 - 0.05 * d,
                wall_height: 0.1,
            },
            TaskKind::Slope => TerrainSpec::Slope {
                start_x: 0.5,
                length: 2.0,
                angle_deg: 3.0 * d,
            },
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = |name: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(format!("{name} must be positive and finite, got {x}"))
            }
        };
        let finite = |name: &str, x: f64| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be finite"))
            }
        };
        match *self {
            TerrainSpec::Flat => Ok(()),
            TerrainSpec::Stairs {
                start_x,
                step_depth,
                step_height,
                ..
            } => {
                finite("start_x", start_x)?;
                positive("step_depth", step_depth)?;
                finite("step_height", step_height)
            }
            TerrainSpec::Gap { start_x, width, depth } => {
                finite("start_x", start_x)?;
                positive("width", width)?;
                positive("depth", depth)
            }
            TerrainSpec::Alley {
                start_x,
                length,
                width,
                wall_height,
            } => {
                finite("start_x", start_x)?;
                positive("length", length)?;
                positive("width", width)?;
                positive("wall_height", wall_height)
            }
            TerrainSpec::Slope {
                start_x,
                length,
                angle_deg,
            } => {
                finite("start_x", start_x)?;
                positive("length", length)?;
                if angle_deg.abs() < 60.0 {
                    Ok(())
                } else {
                    Err(format!("angle_deg must lie in (-60, 60), got {angle_deg}"))
                }
            }
        }
    }

    /// Analytic ground height.
    pub fn height(&self, x: f64, y: f64) -> f64 {
        match *self {
            TerrainSpec::Flat => 0.0,
            TerrainSpec::Stairs {
                start_x,
                step_depth,
                step_height,
                steps,
            } => {
                if x < start_x {
                    0.0
                } else {
                    let k = ((x - start_x) / step_depth).floor() + 1.0;
                    k.min(steps as f64) * step_height
                }
            }
            TerrainSpec::Gap { start_x, width, depth } => {
                if (start_x..start_x + width).contains(&x) {
                    -depth
                } else {
                    0.0
                }
            }
            TerrainSpec::Alley {
                start_x,
                length,
                width,
                wall_height,
            } => {
                if (start_x..start_x + length).contains(&x) && y.abs() > 0.5 * width {
                    wall_height
                } else {
                    0.0
                }
            }
            TerrainSpec::Slope {
                start_x,
                length,
                angle_deg,
            } => (x - start_x).clamp(0.0, length) * angle_deg.to_radians().tan(),
        }
    }
}

/// Regular grid of ground heights sampled from a [`TerrainSpec`].
///
/// Lookups use the cell containing the query point, so step edges stay sharp;
/// queries outside the grid use the nearest border cell.
#[derive(Clone, Debug, PartialEq)]
pub struct HeightField {
    origin: [f64; 2],
    resolution: f64,
    rows: usize,
    cols: usize,
    heights: Vec<f64>,
}

impl HeightField {
    /// Grid covering `[x0, x1] x [y0, y1]`.
    pub fn rasterize(spec: &TerrainSpec, x_range: [f64; 2], y_range: [f64; 2], resolution: f64) -> Self {
        assert!(resolution > 0.0, "resolution must be positive");
        let cols = (((x_range[1] - x_range[0]) / resolution).ceil() as usize).max(1);
        let rows = (((y_range[1] - y_range[0]) / resolution).ceil() as usize).max(1);
        let mut heights = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let y = y_range[0] + (r as f64 + 0.5) * resolution;
            for c in 0..cols {
                let x = x_range[0] + (c as f64 + 0.5) * resolution;
                heights.push(spec.height(x, y));
            }
        }
        Self {
            origin: [x_range[0], y_range[0]],
            resolution,
            rows,
            cols,
            heights,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        let cell = |v: f64, o: f64, n: usize| {
            let k = ((v - o) / self.resolution).floor();
            if k.is_nan() || k < 0.0 {
                0
            } else {
                (k as usize).min(n - 1)
            }
        };
        let c = cell(x, self.origin[0], self.cols);
        let r = cell(y, self.origin[1], self.rows);
        self.heights[r * self.cols + c]
    }

    /// Heights on a `rows x cols` grid centred on the body, expressed in the
    /// body's yaw frame and relative to the ground under the body.
    pub fn sample_around(&self, position: [f64; 2], yaw: f64, rows: usize, cols: usize, spacing: f64) -> Vec<f64> {
        let base = self.height_at(position[0], position[1]);
        let (s, c) = yaw.sin_cos();
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            let by = (i as f64 - (rows as f64 - 1.0) / 2.0) * spacing;
            for j in 0..cols {
                let bx = (j as f64 - (cols as f64 - 1.0) / 2.0) * spacing;
                let wx = position[0] + c * bx - s * by;
                let wy = position[1] + s * bx + c * by;
                out.push(self.height_at(wx, wy) - base);
            }
        }
        out
    }
}
