//! Streaming moments and Monte Carlo estimates.

use serde::{Deserialize, Serialize};

/// Welford running mean and centred second moment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        let wb = other.count as f64 / n;
        self.mean += d * wb;
        self.m2 += other.m2 + d * d * self.count as f64 * wb;
        self.count += other.count;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 { 0.0 } else { (self.m2 / (self.count - 1) as f64).max(0.0) }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 { 0.0 } else { (self.variance() / self.count as f64).sqrt() }
    }

    pub fn estimate(&self) -> McEstimate {
        McEstimate { mean: self.mean, stderr: self.stderr(), count: self.count }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub count: u64,
}

impl McEstimate {
    pub fn exact(value: f64) -> Self {
        McEstimate { mean: value, stderr: 0.0, count: 1 }
    }
}

/// `sign(d) · max(0, |d| − allowance) / √(se² + se_ref²)` for `d = estimate − reference`.
///
/// A positive excess with zero combined error gives `±f64::MAX`.
pub fn z_score(estimate: f64, se: f64, reference: f64, se_ref: f64, allowance: f64) -> f64 {
    let d = estimate - reference;
    let excess = (d.abs() - allowance).max(0.0);
    if excess == 0.0 {
        return 0.0;
    }
    let s = (se * se + se_ref * se_ref).sqrt();
    let z = if s > 0.0 { excess / s } else { f64::MAX };
    z.copysign(d)
}

pub const Z_THRESHOLD: f64 = 3.0;
