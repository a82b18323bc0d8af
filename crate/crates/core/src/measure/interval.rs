use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// A compact action interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(domain!("interval bounds must be finite, got [{lo}, {hi}]"));
        }
        if lo >= hi {
            return Err(domain!("interval requires lo < hi, got [{lo}, {hi}]"));
        }
        Ok(Self { lo, hi })
    }

    /// The unit interval `[0, 1]`.
    pub fn unit() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub(crate) fn check(&self, x: f64, what: &str) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(domain!("{what} {x} outside [{}, {}]", self.lo, self.hi))
        }
    }

    /// Spacing of a uniform grid with `m` nodes (both endpoints included).
    pub fn grid_step(&self, m: usize) -> f64 {
        self.width() / (m - 1) as f64
    }

    /// Node `k` of a uniform grid with `m` nodes; the last node is exactly `hi`.
    pub fn node(&self, k: usize, m: usize) -> f64 {
        if k + 1 == m {
            self.hi
        } else {
            self.lo + self.width() * k as f64 / (m - 1) as f64
        }
    }

    pub fn nodes(&self, m: usize) -> Vec<f64> {
        (0..m).map(|k| self.node(k, m)).collect()
    }

    /// Cell of a uniform `m`-node grid containing `x`, together with the
    /// fractional offset of `x` inside that cell.
    pub(crate) fn locate(&self, x: f64, m: usize) -> (usize, f64) {
        let cells = m - 1;
        let t = (x - self.lo) / self.width() * cells as f64;
        if t <= 0.0 {
            return (0, 0.0);
        }
        let k = (t.floor() as usize).min(cells - 1);
        (k, (t - k as f64).clamp(0.0, 1.0))
    }
}

impl TryFrom<[f64; 2]> for Interval {
    type Error = Error;

    fn try_from(v: [f64; 2]) -> Result<Self> {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(iv: Interval) -> Self {
        [iv.lo, iv.hi]
    }
}
