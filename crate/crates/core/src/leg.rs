use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const LEG_COUNT: usize = 6;

/// Leg identity. The discriminant is the oscillator index.
///
/// The order places {LF, RM, LH} on even indices and {RF, LM, RH} on odd
/// indices, which is how the default phase-bias matrix splits the two tripods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Leg {
    LF = 0,
    RF = 1,
    RM = 2,
    LM = 3,
    LH = 4,
    RH = 5,
}

impl Leg {
    pub const ALL: [Leg; LEG_COUNT] = [Leg::LF, Leg::RF, Leg::RM, Leg::LM, Leg::LH, Leg::RH];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Leg> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Leg::LF => "LF",
            Leg::RF => "RF",
            Leg::RM => "RM",
            Leg::LM => "LM",
            Leg::LH => "LH",
            Leg::RH => "RH",
        }
    }

    pub fn is_left(self) -> bool {
        matches!(self, Leg::LF | Leg::LM | Leg::LH)
    }

    /// +1 for left legs, -1 for right legs.
    pub fn side(self) -> f64 {
        if self.is_left() {
            1.0
        } else {
            -1.0
        }
    }

    /// Tripod group: 0 for {LF, RM, LH}, 1 for {RF, LM, RH}.
    pub fn tripod(self) -> usize {
        self.index() % 2
    }
}

impl fmt::Display for Leg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown leg `{0}` (expected one of LF, RF, RM, LM, LH, RH or 0..5)")]
pub struct ParseLegError(String);

impl FromStr for Leg {
    type Err = ParseLegError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if let Ok(i) = t.parse::<usize>() {
            return Leg::from_index(i).ok_or_else(|| ParseLegError(s.to_string()));
        }
        Leg::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| ParseLegError(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tripod_groups() {
        let a: Vec<Leg> = Leg::ALL.into_iter().filter(|l| l.tripod() == 0).collect();
        assert_eq!(a, vec![Leg::LF, Leg::RM, Leg::LH]);
        let b: Vec<Leg> = Leg::ALL.into_iter().filter(|l| l.tripod() == 1).collect();
        assert_eq!(b, vec![Leg::RF, Leg::LM, Leg::RH]);
    }

    #[test]
    fn parse() {
        assert_eq!("lm".parse::<Leg>().unwrap(), Leg::LM);
        assert_eq!("5".parse::<Leg>().unwrap(), Leg::RH);
        assert!("6".parse::<Leg>().is_err());
        assert!("XX".parse::<Leg>().is_err());
    }
}
