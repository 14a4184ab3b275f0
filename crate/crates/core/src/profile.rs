use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-linear time profile given as `(time_h, value)` breakpoints.
///
/// Constant extrapolation outside the breakpoint range. Two breakpoints at the
/// same time encode a jump; the profile is left-continuous there, so sampling
/// exactly at the jump returns the earlier value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    points: Vec<(f64, f64)>,
}

impl Profile {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        for w in points.windows(2) {
            if w[1].0 < w[0].0 {
                return Err(Error::validation(
                    "profile",
                    format!(
                        "breakpoint times must be non-decreasing ({} after {})",
                        w[1].0, w[0].0
                    ),
                ));
            }
        }
        if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::validation("profile", "breakpoints must be finite"));
        }
        Ok(Self { points })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            points: vec![(0.0, value)],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn min_value(&self) -> Option<f64> {
        self.points.iter().map(|p| p.1).reduce(f64::min)
    }

    /// Shifts every breakpoint by `dt` hours.
    pub fn shifted(&self, dt: f64) -> Self {
        Self {
            points: self.points.iter().map(|&(t, v)| (t + dt, v)).collect(),
        }
    }

    pub fn sample(&self, t: f64) -> f64 {
        let pts = &self.points;
        let (first, last) = match (pts.first(), pts.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return 0.0,
        };
        if t <= first.0 {
            return first.1;
        }
        if t > last.0 {
            return last.1;
        }
        // first index with time >= t; t > first.0 so idx >= 1
        let idx = pts.partition_point(|p| p.0 < t);
        let (t0, v0) = pts[idx - 1];
        let (t1, v1) = pts[idx];
        if t1 == t {
            return v1;
        }
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }
}
