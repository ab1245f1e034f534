use serde::{Deserialize, Serialize};

use super::Interval;
use crate::error::{Error, Result};

/// Linearly binned sample on the periodic grid `lo + k w`, `w = |D| / 2^L`, `k = 0..2^L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedSample {
    pub domain: Interval,
    pub level_l: u32,
    pub counts: Vec<f64>,
    /// Mass that landed inside the domain; equals the sum of `counts`.
    pub n_samples: f64,
    /// Samples outside the domain, dropped but still part of the normalising total.
    pub n_dropped: usize,
}

impl BinnedSample {
    pub fn bin_width(&self) -> f64 {
        self.domain.width() / self.counts.len() as f64
    }

    /// Sample size used to normalise the empirical density.
    pub fn n_total(&self) -> f64 {
        self.n_samples + self.n_dropped as f64
    }

    /// Empirical density values at the grid nodes.
    pub fn density(&self) -> Vec<f64> {
        let total = self.n_total();
        if total <= 0.0 {
            return vec![0.0; self.counts.len()];
        }
        let norm = 1.0 / (total * self.bin_width());
        self.counts.iter().map(|c| c * norm).collect()
    }
}

pub fn bin_samples(samples: &[f64], domain: Interval, level_l: u32) -> Result<BinnedSample> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no samples to bin".into()));
    }
    if !(1..=24).contains(&level_l) {
        return Err(Error::param(format!(
            "binning level must be in 1..=24, got {level_l}"
        )));
    }
    let n = 1usize << level_l;
    let w = domain.width() / n as f64;
    let mut counts = vec![0.0; n];
    let mut n_dropped = 0usize;
    let mut inside = 0usize;
    for &x in samples {
        if !x.is_finite() || x < domain.lo || x > domain.hi {
            n_dropped += 1;
            continue;
        }
        inside += 1;
        let pos = (x - domain.lo) / w;
        let i = (pos.floor() as usize).min(n - 1);
        let frac = pos - i as f64;
        counts[i] += 1.0 - frac;
        counts[(i + 1) % n] += frac;
    }
    Ok(BinnedSample {
        domain,
        level_l,
        counts,
        n_samples: inside as f64,
        n_dropped,
    })
}
