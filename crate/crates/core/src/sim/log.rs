//! Trajectory logs, gait diagrams and run summaries.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::leg::{Leg, LEG_COUNT};
use crate::pose::MORPH_FIELDS;

/// Bumped whenever the column set changes.
pub const LOG_SCHEMA_VERSION: u32 = 1;

const BODY_COLUMNS: [&str; 11] = [
    "time", "x", "y", "z", "yaw", "vx", "vy", "vz", "vxb", "vyb", "yaw_rate",
];
const CONTROL_COLUMNS: [&str; 3] = ["omega_m", "z_x", "z_y"];
const LEG_FIELDS: [&str; 17] = [
    "r", "v", "theta", "alpha", "phi", "px", "py", "pz", "fx", "fy", "fz", "j{}0", "j{}1", "j{}2", "stance", "mu",
    "omega",
];
const TAIL_COLUMNS: [&str; 10] = [
    "high_eval", "mid_eval", "goal", "r_v", "r_d", "r_b", "r_s", "r_T", "r_task", "r_lsd",
];

/// Column names in log order. Per-leg fields are suffixed with the leg name
/// (`phiLF`, `jRM2`, ...).
pub fn log_columns() -> Vec<String> {
    let mut cols: Vec<String> = BODY_COLUMNS.iter().map(|s| s.to_string()).collect();
    cols.extend(CONTROL_COLUMNS.iter().map(|s| s.to_string()));
    cols.extend(MORPH_FIELDS.iter().map(|s| s.to_string()));
    for leg in Leg::ALL {
        for f in LEG_FIELDS {
            cols.push(if f.contains("{}") {
                f.replace("{}", leg.name())
            } else {
                format!("{f}{}", leg.name())
            });
        }
    }
    cols.extend(TAIL_COLUMNS.iter().map(|s| s.to_string()));
    cols
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("log has no column '{0}'")]
    MissingColumn(String),
    #[error("log is empty")]
    Empty,
}

/// Row-per-step record of a rollout. Missing values (rewards without a task)
/// are stored as NaN and written as empty CSV fields or JSON `null`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryLog {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct LogJson {
    schema_version: u32,
    columns: Vec<String>,
    rows: Vec<Vec<Option<f64>>>,
}

impl Default for TrajectoryLog {
    fn default() -> Self {
        Self::new()
    }
}

impl TrajectoryLog {
    pub fn new() -> Self {
        Self {
            columns: log_columns(),
            rows: Vec::new(),
        }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width does not match the schema");
        if let Some(last) = self.rows.last() {
            debug_assert!(row[0] >= last[0], "time must be nondecreasing");
        }
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Result<usize, LogError> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| LogError::MissingColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, LogError> {
        let k = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), LogError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.columns)?;
        for row in &self.rows {
            out.write_record(row.iter().map(|x| if x.is_nan() { String::new() } else { x.to_string() }))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<(), LogError> {
        let doc = LogJson {
            schema_version: LOG_SCHEMA_VERSION,
            columns: self.columns.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(|x| (!x.is_nan()).then_some(*x)).collect())
                .collect(),
        };
        serde_json::to_writer(w, &doc)?;
        Ok(())
    }

    /// Reads a JSON log written by [`TrajectoryLog::write_json`].
    pub fn from_json(text: &str) -> Result<Self, LogError> {
        let doc: LogJson = serde_json::from_str(text)?;
        Ok(Self {
            columns: doc.columns,
            rows: doc
                .rows
                .into_iter()
                .map(|r| r.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
                .collect(),
        })
    }
}

/// Stance when `sin(phi) <= 0`, swing otherwise.
pub fn stance_detect(phi: f64) -> bool {
    phi.sin() <= 0.0
}

/// Per-leg stance/swing sequences with touchdown markers.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaitDiagram {
    pub time: Vec<f64>,
    pub stance: [Vec<bool>; LEG_COUNT],
    /// Row indices where a leg switches from swing to stance.
    pub touchdowns: [Vec<usize>; LEG_COUNT],
    pub stance_fraction: [f64; LEG_COUNT],
}

pub fn extract_gait_diagram(log: &TrajectoryLog) -> Result<GaitDiagram, LogError> {
    if log.is_empty() {
        return Err(LogError::Empty);
    }
    let time = log.column("time")?;
    let mut stance: [Vec<bool>; LEG_COUNT] = Default::default();
    let mut touchdowns: [Vec<usize>; LEG_COUNT] = Default::default();
    let mut stance_fraction = [0.0; LEG_COUNT];
    for leg in Leg::ALL {
        let i = leg.index();
        stance[i] = log
            .column(&format!("phi{}", leg.name()))?
            .into_iter()
            .map(stance_detect)
            .collect();
        touchdowns[i] = stance[i]
            .windows(2)
            .enumerate()
            .filter(|(_, w)| !w[0] && w[1])
            .map(|(k, _)| k + 1)
            .collect();
        stance_fraction[i] = stance[i].iter().filter(|s| **s).count() as f64 / stance[i].len() as f64;
    }
    Ok(GaitDiagram {
        time,
        stance,
        touchdowns,
        stance_fraction,
    })
}

impl GaitDiagram {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// Stance fraction of one leg over rows `[from, to)`.
    pub fn stance_fraction_between(&self, leg: Leg, from: usize, to: usize) -> f64 {
        let s = &self.stance[leg.index()][from..to];
        s.iter().filter(|x| **x).count() as f64 / s.len().max(1) as f64
    }

    /// One row per step: `time` then one 0/1 column per leg.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), LogError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["time".to_string()];
        header.extend(Leg::ALL.iter().map(|l| l.name().to_string()));
        out.write_record(&header)?;
        for (k, t) in self.time.iter().enumerate() {
            let mut rec = vec![t.to_string()];
            rec.extend((0..LEG_COUNT).map(|i| if self.stance[i][k] { "1" } else { "0" }.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Scalar digest of a rollout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub steps: usize,
    pub duration: f64,
    pub mean_vx: f64,
    pub mean_vy: f64,
    pub mean_speed: f64,
    /// Mean forward velocity in the body frame.
    pub mean_body_vx: f64,
    pub final_position: [f64; 3],
    pub final_yaw: f64,
    /// Per-leg mean lateral foot target.
    pub mean_py: [f64; LEG_COUNT],
    pub stance_fraction: [f64; LEG_COUNT],
    pub total_reward: Option<f64>,
    pub total_lsd_reward: f64,
    pub goals_reached: usize,
    pub high_evaluations: usize,
    pub mid_evaluations: usize,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub fn summarize(log: &TrajectoryLog) -> Result<Summary, LogError> {
    let last = log.rows().last().ok_or(LogError::Empty)?;
    let at = |name: &str| log.column_index(name).map(|k| last[k]);
    let vx = log.column("vx")?;
    let vy = log.column("vy")?;
    let speed: Vec<f64> = vx.iter().zip(&vy).map(|(a, b)| a.hypot(*b)).collect();
    let gait = extract_gait_diagram(log)?;
    let mut mean_py = [0.0; LEG_COUNT];
    for leg in Leg::ALL {
        mean_py[leg.index()] = mean(&log.column(&format!("py{}", leg.name()))?);
    }
    let task = log.column("r_task")?;
    let total_reward = if task.iter().all(|x| x.is_nan()) {
        None
    } else {
        Some(task.iter().filter(|x| !x.is_nan()).sum())
    };
    let count = |name: &str| -> Result<usize, LogError> {
        Ok(log.column(name)?.iter().filter(|x| **x != 0.0).count())
    };
    Ok(Summary {
        steps: log.len(),
        duration: at("time")?,
        mean_vx: mean(&vx),
        mean_vy: mean(&vy),
        mean_speed: mean(&speed),
        mean_body_vx: mean(&log.column("vxb")?),
        final_position: [at("x")?, at("y")?, at("z")?],
        final_yaw: at("yaw")?,
        mean_py,
        stance_fraction: gait.stance_fraction,
        total_reward,
        total_lsd_reward: log.column("r_lsd")?.iter().filter(|x| !x.is_nan()).sum(),
        goals_reached: at("goal")? as usize,
        high_evaluations: count("high_eval")?,
        mid_evaluations: count("mid_eval")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn stance_examples() {
        assert!(!stance_detect(PI / 2.0));
        assert!(stance_detect(3.0 * PI / 2.0));
        assert!(stance_detect(0.0));
    }

    #[test]
    fn column_names() {
        let cols = log_columns();
        assert_eq!(cols.len(), 11 + 3 + 5 + 6 * 17 + 10);
        for name in ["jLF0", "jRH2", "phiLM", "stanceRM", "omegaLH", "r_T"] {
            assert!(cols.iter().any(|c| c == name), "{name}");
        }
        let mut sorted = cols.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), cols.len());
    }

    fn log_with_phases(phases: &[[f64; 6]]) -> TrajectoryLog {
        let mut log = TrajectoryLog::new();
        let width = log.columns().len();
        let idx: Vec<usize> = Leg::ALL
            .iter()
            .map(|l| log.column_index(&format!("phi{}", l.name())).unwrap())
            .collect();
        for (k, ph) in phases.iter().enumerate() {
            let mut row = vec![0.0; width];
            row[0] = k as f64;
            for i in 0..6 {
                row[idx[i]] = ph[i];
            }
            log.push(row);
        }
        log
    }

    #[test]
    fn single_row_diagram() {
        let g = extract_gait_diagram(&log_with_phases(&[[1.0; 6]])).unwrap();
        assert_eq!(g.len(), 1);
        assert!(g.stance.iter().all(|s| s == &vec![false]));
    }

    #[test]
    fn constant_phase_gives_constant_diagram() {
        let g = extract_gait_diagram(&log_with_phases(&vec![[-1.0, 1.0, -1.0, 1.0, -1.0, 1.0]; 50])).unwrap();
        for i in 0..6 {
            assert!(g.stance[i].iter().all(|s| *s == (i % 2 == 0)));
            assert!(g.touchdowns[i].is_empty());
        }
    }

    #[test]
    fn empty_log_rejected() {
        assert!(matches!(extract_gait_diagram(&TrajectoryLog::new()), Err(LogError::Empty)));
    }

    #[test]
    fn json_round_trip_keeps_missing_values() {
        let mut log = log_with_phases(&[[0.5; 6], [0.25; 6]]);
        let k = log.column_index("r_task").unwrap();
        log.rows[0][k] = f64::NAN;
        log.rows[1][k] = 0.125;
        let mut buf = Vec::new();
        log.write_json(&mut buf).unwrap();
        let back = TrajectoryLog::from_json(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.columns(), log.columns());
        assert!(back.rows()[0][k].is_nan());
        assert_eq!(back.rows()[1][k], 0.125);
        let csv = log.to_csv_string();
        assert!(csv.lines().nth(1).unwrap().contains(",,") || csv.lines().nth(1).unwrap().ends_with(','));
    }
}
