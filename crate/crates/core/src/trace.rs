use serde::{Deserialize, Serialize};

use crate::io::two_column_csv;
use crate::{Error, Result};

/// Tolerance on probabilities leaving [0, 1] through rounding.
pub const PROBABILITY_SLACK: f64 = 1e-9;

/// Meaning of a trace's abscissa.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Seconds; strictly increasing.
    Time,
    /// Drive detuning in rad/s.
    Detuning,
    /// Free-evolution time of an echo scan, s.
    Echo,
}

impl Axis {
    pub fn csv_column(&self) -> &'static str {
        match self {
            Axis::Time => "time_s",
            Axis::Detuning | Axis::Echo => "x",
        }
    }
}

/// Lower-state population sampled along an axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationTrace {
    pub axis: Axis,
    pub x: Vec<f64>,
    pub p0: Vec<f64>,
}

impl PopulationTrace {
    /// Model trace; probabilities must lie within [−ε, 1+ε].
    pub fn new(axis: Axis, x: Vec<f64>, p0: Vec<f64>) -> Result<Self> {
        let trace = Self::measured(axis, x, p0)?;
        if let Some(p) = trace.p0.iter().find(|p| **p < -PROBABILITY_SLACK || **p > 1.0 + PROBABILITY_SLACK) {
            return Err(Error::InvalidArgument(format!("population {p} outside [0, 1]")));
        }
        Ok(trace)
    }

    /// Estimated trace (e.g. from camera frames), which may stray outside [0, 1].
    pub fn measured(axis: Axis, x: Vec<f64>, p0: Vec<f64>) -> Result<Self> {
        if x.len() != p0.len() {
            return Err(Error::InvalidArgument(format!("length mismatch: {} vs {}", x.len(), p0.len())));
        }
        if x.iter().chain(&p0).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite value in trace".into()));
        }
        if axis != Axis::Detuning && x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("trace abscissa must be strictly increasing".into()));
        }
        Ok(Self { axis, x, p0 })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// CSV with header `time_s,p0` (or `x,p0`); populations clamped to [0, 1].
    pub fn to_csv(&self) -> String {
        let clamped: Vec<f64> = self.p0.iter().map(|p| p.clamp(0.0, 1.0)).collect();
        two_column_csv((self.axis.csv_column(), "p0"), &self.x, &clamped)
    }
}
