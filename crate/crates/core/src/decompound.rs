//! Inversion of the compounding operator and the order-`K` corrected estimator.
//!
//! A nonzero increment has density `P[f] = sum_m p_m f^{*m}` with
//! `p_m = x^m / ((e^x - 1) m!)`, `x = theta * delta`. The inverse is the power
//! series `f = sum_m a_m P[f]^{*m}` with
//! `a_m = (-1)^{m+1} (e^x - 1)^m / (m x)`. Truncating after `K + 1` terms and
//! plugging in wavelet estimates of the convolution powers `P[f]^{*m}` gives the
//! corrected estimator; `K = 0` is the naive estimator up to the factor `a_1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::NonzeroIncrements;
use crate::wavelet::{DensityEstimate, PipelineOutput, ThresholdEstimator, TuneOn};

/// Largest `p_hat` accepted by the intensity plug-in before clamping.
pub const P_HAT_CAP: f64 = 1.0 - 1e-12;

fn check_rate(theta: f64, delta: f64) -> Result<f64> {
    if !theta.is_finite() || theta <= 0.0 || !delta.is_finite() || delta <= 0.0 {
        return Err(Error::param(format!(
            "theta and delta must be finite and > 0 (theta {theta}, delta {delta})"
        )));
    }
    let x = theta * delta;
    if !x.exp_m1().is_finite() {
        return Err(Error::param(format!("theta * delta = {x} overflows exp")));
    }
    Ok(x)
}

/// `p_m(delta) = P(R_delta = m | R_delta != 0)` for `m = 1..=M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundingWeights {
    pub theta: f64,
    pub delta: f64,
    pub weights: Vec<f64>,
}

impl CompoundingWeights {
    /// `p_m` for 1-based `m`.
    pub fn p(&self, m: usize) -> f64 {
        self.weights[m - 1]
    }

    /// Probability mass beyond the truncation, `1 - sum_{m <= M} p_m`.
    pub fn deficit(&self) -> f64 {
        // the tail sum is accurate where 1 - sum would cancel
        let x = self.theta * self.delta;
        let mut term = *self.weights.last().expect("at least one weight");
        let mut m = self.weights.len();
        let mut tail = 0.0;
        loop {
            m += 1;
            term *= x / m as f64;
            tail += term;
            if term <= tail * 1e-17 || term == 0.0 {
                break;
            }
        }
        tail
    }
}

pub fn compounding_weights(
    theta: f64,
    delta: f64,
    truncation: usize,
) -> Result<CompoundingWeights> {
    let x = check_rate(theta, delta)?;
    if truncation == 0 {
        return Err(Error::param("truncation M must be >= 1"));
    }
    let mut weights = Vec::with_capacity(truncation);
    let mut p = x / x.exp_m1();
    for m in 1..=truncation {
        weights.push(p);
        p *= x / (m + 1) as f64;
    }
    Ok(CompoundingWeights {
        theta,
        delta,
        weights,
    })
}

/// Coefficients `a_1..a_{K+1}` of the truncated inverse series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseCoefficients {
    pub theta_hat: f64,
    pub delta: f64,
    pub order_k: usize,
    pub a: Vec<f64>,
    /// `e^{theta delta} - 1 < 1`, the convergence condition of the full series.
    pub convergent: bool,
}

pub fn inverse_coefficients(theta: f64, delta: f64, order_k: usize) -> Result<InverseCoefficients> {
    let x = check_rate(theta, delta)?;
    let r = x.exp_m1();
    let mut a = Vec::with_capacity(order_k + 1);
    let mut power = 1.0;
    for m in 1..=order_k + 1 {
        power *= r;
        let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
        a.push(sign * power / (m as f64 * x));
    }
    Ok(InverseCoefficients {
        theta_hat: theta,
        delta,
        order_k,
        a,
        convergent: r < 1.0,
    })
}

/// Sums of `m` nonzero increments taken `N_{T,m} = floor(N_T / m)` apart.
///
/// Element `i` is `values[i] + values[N_{T,m} + i] + ... + values[(m-1) N_{T,m} + i]`;
/// the trailing `N_T mod m` values are unused.
pub fn group_increments(values: &[f64], m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::param("group size m must be >= 1"));
    }
    if values.len() < m {
        return Err(Error::InsufficientData {
            need: m,
            got: values.len(),
        });
    }
    let n = values.len() / m;
    Ok((0..n)
        .map(|i| (0..m).map(|q| values[q * n + i]).sum())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityEstimate {
    pub p_hat: f64,
    pub theta_hat: f64,
    pub n_nonzero: usize,
    pub n_slots: usize,
    /// Set when `p_hat` hit [`P_HAT_CAP`].
    pub clamped: bool,
}

/// `theta_hat = -ln(1 - p_hat) / delta` with `p_hat = N_T / floor(T / delta)`.
pub fn estimate_intensity(nonzero: &NonzeroIncrements, delta: f64) -> Result<IntensityEstimate> {
    if !delta.is_finite() || delta <= 0.0 {
        return Err(Error::param(format!("delta must be > 0, got {delta}")));
    }
    if nonzero.total_slots == 0 {
        return Err(Error::param("no observation slots"));
    }
    if nonzero.count() == 0 {
        return Err(Error::Degenerate(
            "no nonzero increments, intensity estimate is zero".into(),
        ));
    }
    let raw = nonzero.count() as f64 / nonzero.total_slots as f64;
    Ok(intensity_from_fraction(
        raw,
        delta,
        nonzero.count(),
        nonzero.total_slots,
    ))
}

/// `-ln(1 - p) / delta`, the intensity whose nonzero-increment probability is `p`.
pub fn theta_from_fraction(p: f64, delta: f64) -> f64 {
    -(-p).ln_1p() / delta
}

fn intensity_from_fraction(
    raw: f64,
    delta: f64,
    n_nonzero: usize,
    n_slots: usize,
) -> IntensityEstimate {
    let clamped = raw > P_HAT_CAP;
    let p_hat = raw.clamp(0.0, P_HAT_CAP);
    IntensityEstimate {
        p_hat,
        theta_hat: theta_from_fraction(p_hat, delta),
        n_nonzero,
        n_slots,
        clamped,
    }
}

/// Wavelet threshold estimate of `P[f]^{*m}` from grouped increments.
pub fn convolution_power_estimate(
    nonzero: &NonzeroIncrements,
    m: usize,
    estimator: &ThresholdEstimator,
    tune_on: TuneOn,
) -> Result<PipelineOutput> {
    let grouped = group_increments(&nonzero.values, m)?;
    let n_tune = match tune_on {
        TuneOn::NT => nonzero.count(),
        TuneOn::NTm => grouped.len(),
    };
    estimator.estimate(&grouped, n_tune)
}

/// Estimates of `P[f]^{*m}` for `m = 1..=max_m`, in order.
pub fn power_estimates(
    nonzero: &NonzeroIncrements,
    max_m: usize,
    estimator: &ThresholdEstimator,
    tune_on: TuneOn,
) -> Result<Vec<PipelineOutput>> {
    if nonzero.count() < max_m {
        return Err(Error::InsufficientData {
            need: max_m,
            got: nonzero.count(),
        });
    }
    (1..=max_m)
        .map(|m| convolution_power_estimate(nonzero, m, estimator, tune_on))
        .collect()
}

/// `sum_m a_m * powers[m-1]` over the first `a.len()` powers.
pub fn combine_powers(a: &[f64], powers: &[PipelineOutput]) -> Result<DensityEstimate> {
    if powers.len() < a.len() || a.is_empty() {
        return Err(Error::param(format!(
            "{} coefficients but {} power estimates",
            a.len(),
            powers.len()
        )));
    }
    let first = &powers[0].density;
    let mut out = DensityEstimate::zeros(first.domain, first.step);
    for (coef, p) in a.iter().zip(powers) {
        out.add_scaled(*coef, &p.density)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerDiagnostics {
    pub m: usize,
    pub n_used: usize,
    pub j_effective: u32,
    pub eta: f64,
    pub surviving_betas: usize,
}

impl PowerDiagnostics {
    pub fn from_output(m: usize, out: &PipelineOutput) -> Self {
        Self {
            m,
            n_used: out.n_samples,
            j_effective: out.j_effective,
            eta: out.eta,
            surviving_betas: out.surviving_betas,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedEstimate {
    pub density: DensityEstimate,
    pub order_k: usize,
    pub intensity: IntensityEstimate,
    /// Intensity plugged into the inverse coefficients (estimated or overridden).
    pub theta_used: f64,
    pub coefficients: InverseCoefficients,
    pub powers: Vec<PowerDiagnostics>,
    pub warnings: Vec<String>,
}

/// Collects the warnings attached to a corrected estimate.
pub fn estimate_warnings(
    intensity: &IntensityEstimate,
    coeffs: &InverseCoefficients,
) -> Vec<String> {
    let mut warnings = Vec::new();
    if intensity.clamped {
        warnings.push(format!(
            "every slot carries a jump; p_hat clamped to {P_HAT_CAP}"
        ));
    }
    if !coeffs.convergent {
        warnings.push(format!(
            "theta * delta = {} >= ln 2: the inverse series does not converge, truncated sum used as is",
            coeffs.theta_hat * coeffs.delta
        ));
    }
    warnings
}

/// The estimator corrected at order `K`.
///
/// With `theta_override` the inverse coefficients use the supplied intensity
/// instead of the plug-in estimate (the known-intensity variant).
pub fn corrected_estimator(
    nonzero: &NonzeroIncrements,
    delta: f64,
    order_k: usize,
    estimator: &ThresholdEstimator,
    tune_on: TuneOn,
    theta_override: Option<f64>,
) -> Result<CorrectedEstimate> {
    if nonzero.count() < order_k + 1 {
        return Err(Error::InsufficientData {
            need: order_k + 1,
            got: nonzero.count(),
        });
    }
    let intensity = estimate_intensity(nonzero, delta)?;
    let theta_used = theta_override.unwrap_or(intensity.theta_hat);
    let coefficients = inverse_coefficients(theta_used, delta, order_k)?;
    let outputs = power_estimates(nonzero, order_k + 1, estimator, tune_on)?;
    let density = combine_powers(&coefficients.a, &outputs)?;
    let warnings = estimate_warnings(&intensity, &coefficients);
    Ok(CorrectedEstimate {
        density,
        order_k,
        intensity,
        theta_used,
        powers: outputs
            .iter()
            .enumerate()
            .map(|(i, o)| PowerDiagnostics::from_output(i + 1, o))
            .collect(),
        coefficients,
        warnings,
    })
}

/// The same wavelet pipeline applied to the latent jumps, tuned on their count.
pub fn oracle_estimator(jumps: &[f64], estimator: &ThresholdEstimator) -> Result<PipelineOutput> {
    if jumps.is_empty() {
        return Err(Error::EmptyInput(
            "oracle estimator needs at least one jump".into(),
        ));
    }
    estimator.estimate(jumps, jumps.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateBranch {
    /// `s / (2s + 1)` is the smaller branch.
    Dense,
    /// `(s + 1/p - 1/pi) / (2 (s + 1/2 - 1/pi))` is the smaller branch.
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateExponent {
    pub value: f64,
    pub branch: RateBranch,
}

/// Minimax rate exponent over a Besov ball of smoothness `s` in `L_pi`, for `L_p` loss.
pub fn rate_exponent(s: f64, p: f64, pi: f64) -> Result<RateExponent> {
    if !(s.is_finite() && p.is_finite() && pi.is_finite()) || pi <= 0.0 || p < 1.0 || s <= 1.0 / pi
    {
        return Err(Error::param(format!(
            "rate exponent needs s > 1/pi, p >= 1, pi > 0 (s {s}, p {p}, pi {pi})"
        )));
    }
    let dense = s / (2.0 * s + 1.0);
    let sparse = (s + 1.0 / p - 1.0 / pi) / (2.0 * (s + 0.5 - 1.0 / pi));
    Ok(if dense <= sparse {
        RateExponent {
            value: dense,
            branch: RateBranch::Dense,
        }
    } else {
        RateExponent {
            value: sparse,
            branch: RateBranch::Sparse,
        }
    })
}
