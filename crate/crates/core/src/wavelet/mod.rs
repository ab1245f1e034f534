//! Hard-threshold wavelet density estimation on a compact interval.
//!
//! The interval `D = [lo, hi]` is mapped to `[0, 1]` and handled with a
//! periodized filter bank. Samples are linearly binned onto `2^L` nodes, the
//! binned density is transformed with the fast DWT, detail coefficients are
//! hard-thresholded and the result is synthesised back and interpolated on a
//! fine output mesh.
//!
//! The transform input is the binned density itself, so coefficients live on
//! the orthonormal scale of the `2^L`-point signal; the threshold
//! `kappa * N^{-1/2} * sqrt(ln(N) / 2)` is applied on that scale.

mod binning;
mod filters;
pub mod transform;

use serde::{Deserialize, Serialize};

pub use binning::{bin_samples, BinnedSample};
pub use filters::WaveletBasis;
pub use transform::Decomposition;

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]` with `lo < hi`. Serialized as `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::param(format!("degenerate interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

impl TryFrom<[f64; 2]> for Interval {
    type Error = Error;

    fn try_from(v: [f64; 2]) -> Result<Self> {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

/// Empirical wavelet coefficients; `betas[j]` holds level `j` for `j = 0..=max_level_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletCoefficients {
    pub basis: WaveletBasis,
    pub domain: Interval,
    pub level_l: u32,
    pub alpha0: Vec<f64>,
    pub betas: Vec<Vec<f64>>,
    pub max_level_j: u32,
}

impl WaveletCoefficients {
    pub fn surviving_betas(&self) -> usize {
        self.betas
            .iter()
            .flat_map(|level| level.iter())
            .filter(|b| **b != 0.0)
            .count()
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.alpha0.iter().map(|a| a * a).sum::<f64>()
            + self
                .betas
                .iter()
                .flat_map(|l| l.iter())
                .map(|b| b * b)
                .sum::<f64>()
    }

    fn bin_width(&self) -> f64 {
        self.domain.width() / (1usize << self.level_l) as f64
    }
}

/// Density values on the mesh `lo, lo + step, ..., hi`.
///
/// Values may be negative; thresholding does not project onto densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub domain: Interval,
    pub step: f64,
    pub values: Vec<f64>,
}

impl DensityEstimate {
    pub fn grid_len(domain: Interval, step: f64) -> usize {
        (domain.width() / step).round() as usize + 1
    }

    pub fn zeros(domain: Interval, step: f64) -> Self {
        Self {
            domain,
            step,
            values: vec![0.0; Self::grid_len(domain, step)],
        }
    }

    pub fn grid(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |i| self.domain.lo + i as f64 * self.step)
    }

    /// `self += weight * other`; both must live on the same mesh.
    pub fn add_scaled(&mut self, weight: f64, other: &DensityEstimate) -> Result<()> {
        if self.values.len() != other.values.len()
            || self.domain != other.domain
            || (self.step - other.step).abs() > 1e-12 * self.step
        {
            return Err(Error::param("density estimates live on different meshes"));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += weight * b;
        }
        Ok(())
    }

    pub fn scaled(&self, weight: f64) -> Self {
        Self {
            domain: self.domain,
            step: self.step,
            values: self.values.iter().map(|v| weight * v).collect(),
        }
    }

    /// Negative values clipped to zero; for display only, never for losses.
    pub fn clipped_for_display(&self) -> Self {
        Self {
            domain: self.domain,
            step: self.step,
            values: self.values.iter().map(|v| v.max(0.0)).collect(),
        }
    }
}

/// Threshold `kappa * n^{-1/2} * sqrt(ln(n^{1/2}))`.
pub fn threshold_value(n: usize, kappa: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptyInput("threshold needs n >= 1".into()));
    }
    if !kappa.is_finite() || kappa <= 0.0 {
        return Err(Error::param(format!("kappa must be > 0, got {kappa}")));
    }
    let n = n as f64;
    Ok(kappa * n.powf(-0.5) * (0.5 * n.ln()).sqrt())
}

/// Largest `J >= 0` with `2^J ln(n^{1/2}) / n <= 1`.
pub fn max_resolution(n: usize) -> Result<u32> {
    if n < 2 {
        return Err(Error::Resolution(format!(
            "resolution rule needs n >= 2, got {n}"
        )));
    }
    let ratio = n as f64 / (0.5 * (n as f64).ln());
    let mut j = 0u32;
    while j < 62 && ((1u64 << (j + 1)) as f64) <= ratio {
        j += 1;
    }
    Ok(j)
}

/// `min(J_user, max_resolution(n), L)`; falls back to 0 when `n < 2`.
pub fn effective_resolution(n: usize, user_cap: Option<u32>, level_l: u32) -> u32 {
    let rule = max_resolution(n).unwrap_or(0);
    let j = rule.min(level_l);
    match user_cap {
        Some(cap) => j.min(cap),
        None => j,
    }
}

/// Fast transform of the binned empirical density, keeping detail levels `0..=j_max`.
pub fn empirical_coefficients(
    binned: &BinnedSample,
    basis: &WaveletBasis,
    j_max: u32,
) -> Result<WaveletCoefficients> {
    if j_max > binned.level_l {
        return Err(Error::Resolution(format!(
            "J = {j_max} exceeds binning level L = {}",
            binned.level_l
        )));
    }
    let dec = transform::forward(&binned.density(), basis)?;
    let keep = (j_max as usize + 1).min(dec.details.len());
    Ok(WaveletCoefficients {
        basis: basis.clone(),
        domain: binned.domain,
        level_l: binned.level_l,
        alpha0: dec.approx,
        betas: dec.details.into_iter().take(keep).collect(),
        max_level_j: j_max,
    })
}

/// Zeroes every detail coefficient with `|beta| < eta`; coarse coefficients are kept.
pub fn hard_threshold(coeffs: &WaveletCoefficients, eta: f64) -> WaveletCoefficients {
    let mut out = coeffs.clone();
    for b in out.betas.iter_mut().flat_map(|l| l.iter_mut()) {
        if b.abs() < eta {
            *b = 0.0;
        }
    }
    out
}

/// Inverse transform back to the `2^L` nodes, as density values.
pub fn reconstruct_nodes(coeffs: &WaveletCoefficients) -> Result<Vec<f64>> {
    let levels = coeffs.level_l as usize;
    let mut details: Vec<Vec<f64>> = coeffs.betas.clone();
    for j in details.len()..levels {
        details.push(vec![0.0; 1 << j]);
    }
    let dec = Decomposition {
        approx: coeffs.alpha0.clone(),
        details,
    };
    transform::inverse(&dec, &coeffs.basis)
}

/// Reconstructs on the `2^L` nodes and interpolates linearly (periodically) onto the mesh.
pub fn reconstruct(coeffs: &WaveletCoefficients, step: f64) -> Result<DensityEstimate> {
    if !step.is_finite() || step <= 0.0 {
        return Err(Error::param(format!("grid step must be > 0, got {step}")));
    }
    let nodes = reconstruct_nodes(coeffs)?;
    let n = nodes.len();
    let w = coeffs.bin_width();
    let mut est = DensityEstimate::zeros(coeffs.domain, step);
    let lo = coeffs.domain.lo;
    for (i, v) in est.values.iter_mut().enumerate() {
        let x = lo + i as f64 * step;
        let pos = ((x - lo) / w).max(0.0);
        let k = (pos.floor() as usize).min(n - 1);
        let frac = (pos - k as f64).min(1.0);
        *v = (1.0 - frac) * nodes[k] + frac * nodes[(k + 1) % n];
    }
    Ok(est)
}

/// Which sample size drives the resolution and threshold rules for the `m`-th power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TuneOn {
    /// All powers use the full count of nonzero increments.
    #[default]
    #[serde(rename = "N_T")]
    NT,
    /// The `m`-th power uses its own grouped sample size `floor(N_T / m)`.
    #[serde(rename = "N_T_m")]
    NTm,
}

impl std::str::FromStr for TuneOn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N_T" => Ok(TuneOn::NT),
            "N_T_m" => Ok(TuneOn::NTm),
            other => Err(Error::param(format!(
                "tune-on must be N_T or N_T_m, got '{other}'"
            ))),
        }
    }
}

/// The bin / transform / threshold / reconstruct pipeline with its tuning constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimator {
    pub basis: WaveletBasis,
    pub domain: Interval,
    pub level_l: u32,
    pub kappa: f64,
    /// Optional user cap on the resolution level.
    pub max_level_j: Option<u32>,
    pub grid_step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub density: DensityEstimate,
    pub j_effective: u32,
    pub eta: f64,
    pub n_samples: usize,
    pub surviving_betas: usize,
    pub n_dropped: usize,
}

impl ThresholdEstimator {
    pub fn new(domain: Interval, level_l: u32, kappa: f64) -> Self {
        Self {
            basis: WaveletBasis::sym4(),
            domain,
            level_l,
            kappa,
            max_level_j: None,
            grid_step: 0.01,
        }
    }

    /// Estimates a density from `samples`, with `J` and `eta` driven by `n_tune`.
    pub fn estimate(&self, samples: &[f64], n_tune: usize) -> Result<PipelineOutput> {
        let binned = bin_samples(samples, self.domain, self.level_l)?;
        let j = effective_resolution(n_tune, self.max_level_j, self.level_l);
        let eta = threshold_value(n_tune, self.kappa)?;
        let coeffs = hard_threshold(&empirical_coefficients(&binned, &self.basis, j)?, eta);
        let density = reconstruct(&coeffs, self.grid_step)?;
        Ok(PipelineOutput {
            density,
            j_effective: j,
            eta,
            n_samples: samples.len(),
            surviving_betas: coeffs.surviving_betas(),
            n_dropped: binned.n_dropped,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::JumpDensityModel;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn domain() -> Interval {
        Interval::new(-6.0, 6.0).unwrap()
    }

    fn gaussian_sample(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = JumpDensityModel::standard_normal();
        (0..n).map(|_| m.sample(&mut rng)).collect()
    }

    fn l2_grid(est: &DensityEstimate, f: impl Fn(f64) -> f64) -> f64 {
        est.grid()
            .zip(&est.values)
            .map(|(x, v)| (v - f(x)).powi(2))
            .sum::<f64>()
            * est.step
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(threshold_value(1, 3.0).unwrap(), 0.0);
        assert_relative_eq!(
            threshold_value(10_000, 1.0).unwrap(),
            0.021460,
            epsilon = 1e-6
        );
        assert_relative_eq!(threshold_value(100, 2.0).unwrap(), 0.303485, epsilon = 1e-6);
        assert!(matches!(threshold_value(0, 1.0), Err(Error::EmptyInput(_))));
        assert!(threshold_value(10, 0.0).is_err());
    }

    #[test]
    fn resolution_examples() {
        assert_eq!(max_resolution(2).unwrap(), 2);
        assert_eq!(max_resolution(10_000).unwrap(), 11);
        assert_eq!(max_resolution(8).unwrap(), 2);
        assert!(matches!(max_resolution(1), Err(Error::Resolution(_))));
        assert_eq!(effective_resolution(10_000, Some(10), 8), 8);
        assert_eq!(effective_resolution(10_000, Some(5), 8), 5);
        assert_eq!(effective_resolution(1, None, 8), 0);
    }

    #[test]
    fn uniform_counts_have_no_detail() {
        let binned = BinnedSample {
            domain: domain(),
            level_l: 6,
            counts: vec![5.0; 64],
            n_samples: 320.0,
            n_dropped: 0,
        };
        let c = empirical_coefficients(&binned, &WaveletBasis::sym4(), 6).unwrap();
        assert!(c.betas.iter().flatten().all(|b| b.abs() < 1e-10));
        // constant density 1/12 on 64 nodes: alpha = (1/12) * sqrt(64)
        assert_relative_eq!(c.alpha0[0], 8.0 / 12.0, epsilon = 1e-12);
    }

    #[test]
    fn coefficients_are_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let counts: Vec<f64> = (0..128).map(|_| rng.random_range(0.0..10.0)).collect();
        let n: f64 = counts.iter().sum();
        let a = BinnedSample {
            domain: domain(),
            level_l: 7,
            counts: counts.clone(),
            n_samples: n,
            n_dropped: 0,
        };
        let b = BinnedSample {
            counts: counts.iter().map(|c| 2.0 * c).collect(),
            n_samples: 2.0 * n,
            ..a.clone()
        };
        let basis = WaveletBasis::sym4();
        let ca = empirical_coefficients(&a, &basis, 7).unwrap();
        let cb = empirical_coefficients(&b, &basis, 7).unwrap();
        for (x, y) in ca.betas.iter().flatten().zip(cb.betas.iter().flatten()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn resolution_above_binning_level_is_rejected() {
        let b = bin_samples(&[0.0, 1.0], domain(), 4).unwrap();
        assert!(matches!(
            empirical_coefficients(&b, &WaveletBasis::sym4(), 5),
            Err(Error::Resolution(_))
        ));
        let c = empirical_coefficients(&b, &WaveletBasis::sym4(), 2).unwrap();
        assert_eq!(c.betas.len(), 3);
        let c = empirical_coefficients(&b, &WaveletBasis::sym4(), 4).unwrap();
        assert_eq!(c.betas.len(), 4);
    }

    #[test]
    fn hard_threshold_examples() {
        let b = bin_samples(&gaussian_sample(500, 9), domain(), 3).unwrap();
        let mut c = empirical_coefficients(&b, &WaveletBasis::sym4(), 3).unwrap();
        assert_eq!(hard_threshold(&c, 0.0), c);

        let all_zero = hard_threshold(&c, f64::INFINITY);
        assert_eq!(all_zero.surviving_betas(), 0);
        assert_eq!(all_zero.alpha0, c.alpha0);

        c.betas = vec![vec![0.5], vec![-0.3, 0.1]];
        let t = hard_threshold(&c, 0.3);
        assert_eq!(t.betas, vec![vec![0.5], vec![-0.3, 0.0]]);
    }

    #[test]
    fn zero_coefficients_give_zero_function() {
        let b = bin_samples(&[0.0], domain(), 5).unwrap();
        let mut c = empirical_coefficients(&b, &WaveletBasis::sym4(), 5).unwrap();
        c.alpha0 = vec![0.0];
        for l in c.betas.iter_mut() {
            l.iter_mut().for_each(|v| *v = 0.0);
        }
        let est = reconstruct(&c, 0.01).unwrap();
        assert_eq!(est.values.len(), 1201);
        assert!(est.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn reconstruction_without_threshold_is_exact_on_nodes() {
        let b = bin_samples(&gaussian_sample(3000, 5), domain(), 8).unwrap();
        let c = empirical_coefficients(&b, &WaveletBasis::sym4(), 8).unwrap();
        let nodes = reconstruct_nodes(&c).unwrap();
        for (x, y) in nodes.iter().zip(b.density()) {
            assert!((x - y).abs() < 1e-10);
        }
        // mesh interpolation hits the nodes exactly where they coincide
        let est = reconstruct(&c, 12.0 / 256.0).unwrap();
        for (k, v) in est.values.iter().take(256).enumerate() {
            assert!((v - nodes[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn large_sample_reconstruction_is_close_to_truth() {
        let xs = gaussian_sample(1_000_000, 17);
        let b = bin_samples(&xs, domain(), 8).unwrap();
        let c = empirical_coefficients(&b, &WaveletBasis::sym4(), 8).unwrap();
        let est = reconstruct(&c, 0.01).unwrap();
        let m = JumpDensityModel::standard_normal();
        let l2 = l2_grid(&est, |x| m.density(x));
        assert!(l2.sqrt() < 0.01, "L2 distance {}", l2.sqrt());
    }

    #[test]
    fn risk_decreases_with_sample_size() {
        let est = ThresholdEstimator::new(domain(), 8, 1.0);
        let m = JumpDensityModel::standard_normal();
        let median_loss = |n: usize| {
            let mut losses: Vec<f64> = (0..20)
                .map(|r| {
                    let xs = gaussian_sample(n, 1000 + r);
                    let out = est.estimate(&xs, n).unwrap();
                    l2_grid(&out.density, |x| m.density(x))
                })
                .collect();
            losses.sort_by(|a, b| a.partial_cmp(b).unwrap());
            0.5 * (losses[9] + losses[10])
        };
        let small = median_loss(1_000);
        let large = median_loss(40_000);
        assert!(
            large < small,
            "n=4e4 median {large} vs n=1e3 median {small}"
        );
    }

    #[test]
    fn tune_on_parses() {
        assert_eq!("N_T".parse::<TuneOn>().unwrap(), TuneOn::NT);
        assert_eq!("N_T_m".parse::<TuneOn>().unwrap(), TuneOn::NTm);
        assert!("n".parse::<TuneOn>().is_err());
        assert_eq!(serde_json::to_string(&TuneOn::NTm).unwrap(), "\"N_T_m\"");
    }

    #[test]
    fn interval_validation() {
        assert!(Interval::new(1.0, 1.0).is_err());
        assert!(Interval::new(f64::NAN, 1.0).is_err());
        let i: Interval = serde_json::from_str("[-6, 6]").unwrap();
        assert_eq!(i.width(), 12.0);
        assert!(serde_json::from_str::<Interval>("[6, -6]").is_err());
    }
}
