use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symlet-4 two-scale filter `h`, `phi(x) = sqrt(2) sum_n h[n] phi(2x - n)`
/// (PyWavelets `sym4.rec_lo`; `dec_lo` is its reversal).
const SYM4_LOWPASS: [f64; 8] = [
    0.032_223_100_604_042_7,
    -0.012_603_967_262_037_833,
    -0.099_219_543_576_847_22,
    0.297_857_795_605_277_36,
    0.803_738_751_805_916_1,
    0.497_618_667_632_015_45,
    -0.029_635_527_645_998_51,
    -0.075_765_714_789_273_33,
];

/// `max |psi|` for sym4, from the cascade algorithm at 2^-14 resolution.
const SYM4_PSI_SUP: f64 = 1.517_174_738_263_07;

/// An orthonormal two-channel filter bank.
///
/// The highpass filter is the quadrature mirror `g[n] = (-1)^n h[N-1-n]` of the lowpass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletBasis {
    pub name: String,
    pub lowpass: Vec<f64>,
    pub highpass: Vec<f64>,
    /// Estimate of `||psi||_inf`.
    pub sup_norm_bound: f64,
    pub vanishing_moments: u32,
}

impl WaveletBasis {
    pub fn sym4() -> Self {
        Self::from_lowpass("sym4", SYM4_LOWPASS.to_vec(), SYM4_PSI_SUP, 4)
            .expect("sym4 taps form an orthonormal filter bank")
    }

    /// Builds a basis from lowpass taps and checks the orthonormality conditions.
    pub fn from_lowpass(
        name: &str,
        lowpass: Vec<f64>,
        sup_norm_bound: f64,
        vanishing_moments: u32,
    ) -> Result<Self> {
        let n = lowpass.len();
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::param(format!(
                "filter length must be even and >= 2, got {n}"
            )));
        }
        let highpass = (0..n)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * lowpass[n - 1 - k]
            })
            .collect();
        let basis = Self {
            name: name.to_string(),
            lowpass,
            highpass,
            sup_norm_bound,
            vanishing_moments,
        };
        basis.validate(1e-10)?;
        Ok(basis)
    }

    pub fn len(&self) -> usize {
        self.lowpass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lowpass.is_empty()
    }

    /// Checks `sum h = sqrt(2)` and `sum_k h[k] h[k + 2n] = delta(n)` within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let sum: f64 = self.lowpass.iter().sum();
        if (sum - SQRT_2).abs() > tol {
            return Err(Error::param(format!(
                "{}: lowpass taps sum to {sum}, expected sqrt(2)",
                self.name
            )));
        }
        let n = self.lowpass.len();
        for shift in (0..n).step_by(2) {
            let dot: f64 = (0..n - shift)
                .map(|k| self.lowpass[k] * self.lowpass[k + shift])
                .sum();
            let target = if shift == 0 { 1.0 } else { 0.0 };
            if (dot - target).abs() > tol {
                return Err(Error::param(format!(
                    "{}: lowpass autocorrelation at shift {shift} is {dot}",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

impl Default for WaveletBasis {
    fn default() -> Self {
        Self::sym4()
    }
}
