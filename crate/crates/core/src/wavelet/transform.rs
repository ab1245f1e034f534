//! Periodized orthonormal discrete wavelet transform on dyadic-length signals.

use super::filters::WaveletBasis;
use crate::error::{Error, Result};

/// Full multilevel decomposition of a length-`2^L` signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// Single coarsest scaling coefficient.
    pub approx: Vec<f64>,
    /// `details[j]` holds the `2^j` detail coefficients of level `j`, `j = 0..L`.
    pub details: Vec<Vec<f64>>,
}

fn dyadic_level(n: usize) -> Result<u32> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::param(format!(
            "signal length must be a power of two >= 2, got {n}"
        )));
    }
    Ok(n.trailing_zeros())
}

/// One analysis step: `a[k] = sum_t h[t] x[(2k + t) mod n]`, likewise for `d` with `g`.
fn analysis_step(x: &[f64], basis: &WaveletBasis) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let half = n / 2;
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for k in 0..half {
        let mut sa = 0.0;
        let mut sd = 0.0;
        for (t, (h, g)) in basis.lowpass.iter().zip(&basis.highpass).enumerate() {
            let v = x[(2 * k + t) % n];
            sa += h * v;
            sd += g * v;
        }
        a[k] = sa;
        d[k] = sd;
    }
    (a, d)
}

/// Adjoint of [`analysis_step`], which is also its inverse for an orthonormal bank.
fn synthesis_step(a: &[f64], d: &[f64], basis: &WaveletBasis) -> Vec<f64> {
    let n = 2 * a.len();
    let mut x = vec![0.0; n];
    for k in 0..a.len() {
        for (t, (h, g)) in basis.lowpass.iter().zip(&basis.highpass).enumerate() {
            x[(2 * k + t) % n] += h * a[k] + g * d[k];
        }
    }
    x
}

pub fn forward(signal: &[f64], basis: &WaveletBasis) -> Result<Decomposition> {
    let levels = dyadic_level(signal.len())? as usize;
    let mut details = vec![Vec::new(); levels];
    let mut current = signal.to_vec();
    for j in (0..levels).rev() {
        let (a, d) = analysis_step(&current, basis);
        details[j] = d;
        current = a;
    }
    Ok(Decomposition {
        approx: current,
        details,
    })
}

pub fn inverse(dec: &Decomposition, basis: &WaveletBasis) -> Result<Vec<f64>> {
    if dec.approx.len() != 1 {
        return Err(Error::param(format!(
            "expected a single coarse coefficient, got {}",
            dec.approx.len()
        )));
    }
    let mut current = dec.approx.clone();
    for (j, d) in dec.details.iter().enumerate() {
        if d.len() != 1 << j {
            return Err(Error::param(format!(
                "level {j} holds {} coefficients, expected {}",
                d.len(),
                1usize << j
            )));
        }
        current = synthesis_step(&current, d, basis);
    }
    Ok(current)
}
