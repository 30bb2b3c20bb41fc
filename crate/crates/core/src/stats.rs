//! Streaming statistics, counting histograms and integrated measurement records.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Welford running mean and variance in double precision.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero with fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` uniformly spaced edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

/// Bins of width `bin_width` centred on `center + k·bin_width`, half-open on the right.
pub fn histogram(values: &[f64], bin_width: f64, center: f64) -> Result<Histogram> {
    if !(bin_width > 0.0) || !bin_width.is_finite() || !center.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "histogram bin width {bin_width} must be positive and finite"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("histogram values must be finite".into()));
    }
    let bin = |v: f64| ((v - center) / bin_width + 0.5).floor() as i64;
    let (lo, hi) = match values.iter().map(|&v| bin(v)).fold(None, |acc: Option<(i64, i64)>, k| {
        Some(acc.map_or((k, k), |(a, b)| (a.min(k), b.max(k))))
    }) {
        Some(r) => r,
        None => (0, 0),
    };
    let n = (hi - lo + 1) as usize;
    let mut counts = vec![0usize; n];
    for &v in values {
        counts[(bin(v) - lo) as usize] += 1;
    }
    let edges = (0..=n)
        .map(|i| center + ((lo + i as i64) as f64 - 0.5) * bin_width)
        .collect();
    Ok(Histogram { edges, counts })
}

/// Sum of `outcomes[k−1]` over steps whose time `kΔt` lies in `(burn_in, burn_in + window]`.
pub fn integrate_outcomes(outcomes: &[f64], dt: f64, window: f64, burn_in: f64) -> Result<f64> {
    let length = outcomes.len() as f64 * dt;
    let eps = 1e-9 * dt;
    if !(window > 0.0) || !(burn_in >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "integration window {window} must be positive and burn-in {burn_in} non-negative"
        )));
    }
    if burn_in + window > length + eps {
        return Err(Error::InvalidParameter(format!(
            "burn-in {burn_in} plus window {window} exceeds trajectory length {length}"
        )));
    }
    Ok(outcomes
        .iter()
        .enumerate()
        .filter(|(k, _)| {
            let t = (k + 1) as f64 * dt;
            t > burn_in + eps && t <= burn_in + window + eps
        })
        .map(|(_, v)| v)
        .sum())
}
