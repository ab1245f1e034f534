//! Deterministic grid arithmetic used to validate the inversion formulas.
//!
//! Densities are represented by their values on a uniform grid; integrals are
//! Riemann sums `step * sum(values)` and convolutions are the matching
//! discrete convolutions scaled by `step`, computed with zero-padded FFTs.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::decompound::{compounding_weights, inverse_coefficients};
use crate::error::{Error, Result};
use crate::simulate::JumpDensityModel;
use crate::wavelet::DensityEstimate;

/// Values of a function at `lo + i * step`, `i = 0..values.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub lo: f64,
    pub step: f64,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(lo: f64, step: f64, values: Vec<f64>) -> Result<Self> {
        if !lo.is_finite() || !step.is_finite() || step <= 0.0 {
            return Err(Error::param(format!("bad grid (lo {lo}, step {step})")));
        }
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("grid values must be finite and nonempty"));
        }
        Ok(Self { lo, step, values })
    }

    /// Samples `f` on `lo, lo + step, ..., hi`.
    pub fn from_fn(lo: f64, hi: f64, step: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater)
            || !step.is_finite()
            || step <= 0.0
        {
            return Err(Error::param(format!("bad grid [{lo}, {hi}] step {step}")));
        }
        let n = ((hi - lo) / step).round() as usize + 1;
        Self::new(lo, step, (0..n).map(|i| f(lo + i as f64 * step)).collect())
    }

    pub fn from_model(model: &JumpDensityModel, lo: f64, hi: f64, step: f64) -> Result<Self> {
        Self::from_fn(lo, hi, step, |x| model.density(x))
    }

    pub fn hi(&self) -> f64 {
        self.lo + (self.values.len() - 1) as f64 * self.step
    }

    pub fn x(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.step
    }

    pub fn integral(&self) -> f64 {
        self.step * self.values.iter().sum::<f64>()
    }

    fn same_mesh(&self, other: &GridFunction) -> Result<()> {
        if (self.step - other.step).abs() > 1e-12 * self.step {
            return Err(Error::param(format!(
                "mesh mismatch: {} vs {}",
                self.step, other.step
            )));
        }
        Ok(())
    }

    fn offset_of(&self, x: f64) -> Result<isize> {
        let pos = (x - self.lo) / self.step;
        let idx = pos.round();
        if (pos - idx).abs() > 1e-6 {
            return Err(Error::param(format!(
                "{x} is not a node of the grid starting at {}",
                self.lo
            )));
        }
        Ok(idx as isize)
    }

    /// The same function on the node range `[lo, hi]`, zero outside its support.
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<GridFunction> {
        let start = self.offset_of(lo)?;
        let end = self.offset_of(hi)?;
        if end < start {
            return Err(Error::param(format!("empty restriction [{lo}, {hi}]")));
        }
        let values = (start..=end)
            .map(|i| {
                if i >= 0 && (i as usize) < self.values.len() {
                    self.values[i as usize]
                } else {
                    0.0
                }
            })
            .collect();
        Ok(GridFunction {
            lo: self.lo + start as f64 * self.step,
            step: self.step,
            values,
        })
    }

    /// `self + weight * other` on `self`'s nodes; `other` must share the lattice.
    pub fn add_scaled(&self, weight: f64, other: &GridFunction) -> Result<GridFunction> {
        self.same_mesh(other)?;
        let aligned = other.restrict(self.lo, self.hi())?;
        Ok(GridFunction {
            lo: self.lo,
            step: self.step,
            values: self
                .values
                .iter()
                .zip(&aligned.values)
                .map(|(a, b)| a + weight * b)
                .collect(),
        })
    }

    pub fn scaled(&self, weight: f64) -> GridFunction {
        GridFunction {
            lo: self.lo,
            step: self.step,
            values: self.values.iter().map(|v| v * weight).collect(),
        }
    }

    pub fn sup_distance(&self, other: &GridFunction) -> Result<f64> {
        self.same_mesh(other)?;
        let aligned = other.restrict(self.lo, self.hi())?;
        Ok(self
            .values
            .iter()
            .zip(&aligned.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// Full linear convolution `step * (g1 * g2)`, supported on `[lo1 + lo2, hi1 + hi2]`.
pub fn convolve(g1: &GridFunction, g2: &GridFunction) -> Result<GridFunction> {
    let n = g1.values.len() + g2.values.len() - 1;
    convolve_padded(g1, g2, n.next_power_of_two())
}

/// [`convolve`] with an explicit FFT length, which must be at least `n1 + n2 - 1`.
pub fn convolve_padded(
    g1: &GridFunction,
    g2: &GridFunction,
    fft_len: usize,
) -> Result<GridFunction> {
    g1.same_mesh(g2)?;
    let n = g1.values.len() + g2.values.len() - 1;
    if fft_len < n {
        return Err(Error::param(format!(
            "fft length {fft_len} would wrap a convolution of length {n}"
        )));
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);
    let pad = |v: &[f64]| {
        let mut buf = vec![Complex::new(0.0, 0.0); fft_len];
        for (b, x) in buf.iter_mut().zip(v) {
            b.re = *x;
        }
        buf
    };
    let mut a = pad(&g1.values);
    let mut b = pad(&g2.values);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    inv.process(&mut a);
    let scale = g1.step / fft_len as f64;
    Ok(GridFunction {
        lo: g1.lo + g2.lo,
        step: g1.step,
        values: a[..n].iter().map(|c| c.re * scale).collect(),
    })
}

/// Convolution powers `g^{*1}, ..., g^{*max_m}`, each restricted to `g`'s nodes.
///
/// Built iteratively as `g^{*(m+1)} = g^{*m} * g`.
pub fn convolution_powers(g: &GridFunction, max_m: usize) -> Result<Vec<GridFunction>> {
    let mut powers = Vec::with_capacity(max_m);
    if max_m == 0 {
        return Ok(powers);
    }
    powers.push(g.clone());
    for _ in 1..max_m {
        let next = convolve(powers.last().expect("nonempty"), g)?.restrict(g.lo, g.hi())?;
        powers.push(next);
    }
    Ok(powers)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompoundedGrid {
    pub density: GridFunction,
    /// `1 - sum_{m <= M} p_m`.
    pub truncation_deficit: f64,
}

/// `sum_{m <= M} p_m(delta) f^{*m}` on `f`'s nodes.
pub fn compound_forward(
    f: &GridFunction,
    theta: f64,
    delta: f64,
    truncation_m: usize,
) -> Result<CompoundedGrid> {
    let weights = compounding_weights(theta, delta, truncation_m)?;
    let powers = convolution_powers(f, truncation_m)?;
    let mut out = f.scaled(0.0);
    for (p, g) in weights.weights.iter().zip(&powers) {
        out = out.add_scaled(*p, g)?;
    }
    Ok(CompoundedGrid {
        density: out,
        truncation_deficit: weights.deficit(),
    })
}

/// `sum_{m <= K+1} a_m nu^{*m}` on `nu`'s nodes.
pub fn inverse_truncated(
    nu: &GridFunction,
    theta: f64,
    delta: f64,
    order_k: usize,
) -> Result<GridFunction> {
    let coeffs = inverse_coefficients(theta, delta, order_k)?;
    let powers = convolution_powers(nu, order_k + 1)?;
    let mut out = nu.scaled(0.0);
    for (a, g) in coeffs.a.iter().zip(&powers) {
        out = out.add_scaled(*a, g)?;
    }
    Ok(out)
}

/// `sup |L_{delta,K}[P_delta[f]] - f|` with `P_delta` truncated at `truncation_m` terms.
pub fn inversion_bias(
    f: &GridFunction,
    theta: f64,
    delta: f64,
    order_k: usize,
    truncation_m: usize,
) -> Result<f64> {
    let nu = compound_forward(f, theta, delta, truncation_m)?.density;
    inverse_truncated(&nu, theta, delta, order_k)?.sup_distance(f)
}

/// `sum_i (est_i - f(x_i))^2 * step` over the estimate's mesh.
pub fn grid_l2_loss(est: &DensityEstimate, truth: &JumpDensityModel) -> f64 {
    est.grid()
        .zip(&est.values)
        .map(|(x, v)| (v - truth.density(x)).powi(2))
        .sum::<f64>()
        * est.step
}

/// [`grid_l2_loss`] against a tabulated truth; every mesh node must be a truth node.
pub fn grid_l2_loss_against(est: &DensityEstimate, truth: &GridFunction) -> Result<f64> {
    if (est.step - truth.step).abs() > 1e-12 * est.step {
        return Err(Error::param(format!(
            "grid mismatch: estimate step {}, truth step {}",
            est.step, truth.step
        )));
    }
    let start = truth.offset_of(est.domain.lo)?;
    if start < 0 || start as usize + est.values.len() > truth.values.len() {
        return Err(Error::param(
            "estimate mesh is not covered by the truth grid",
        ));
    }
    let start = start as usize;
    Ok(est
        .values
        .iter()
        .zip(&truth.values[start..])
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        * est.step)
}
