//! Compound Poisson paths sampled on a regular time grid.
//!
//! A path is generated slot by slot: the number of jumps in each interval of
//! length `delta` is drawn from a Poisson(`theta * delta`) law, jump times are
//! uniform inside the interval and jump sizes are i.i.d. draws from a
//! [`JumpDensityModel`]. Only the per-interval sums are observed; the jump list
//! is kept alongside as latent truth for oracle comparisons.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One mixture component of a jump density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComponentKind {
    Gaussian {
        mean: f64,
        stdev: f64,
    },
    /// Density `exp(-|x - location| / scale) / (2 scale)`.
    Laplace {
        location: f64,
        scale: f64,
    },
}

impl ComponentKind {
    pub fn density(&self, x: f64) -> f64 {
        match *self {
            ComponentKind::Gaussian { mean, stdev } => {
                let z = (x - mean) / stdev;
                (-0.5 * z * z).exp() / (stdev * (2.0 * PI).sqrt())
            }
            ComponentKind::Laplace { location, scale } => {
                (-(x - location).abs() / scale).exp() / (2.0 * scale)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ComponentKind::Gaussian { mean, .. } => mean,
            ComponentKind::Laplace { location, .. } => location,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ComponentKind::Gaussian { mean, stdev } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + stdev * z
            }
            ComponentKind::Laplace { location, scale } => {
                let e: f64 = Exp1.sample(rng);
                if rng.random::<bool>() {
                    location + scale * e
                } else {
                    location - scale * e
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let (a, b, name) = match *self {
            ComponentKind::Gaussian { mean, stdev } => (mean, stdev, "gaussian stdev"),
            ComponentKind::Laplace { location, scale } => (location, scale, "laplace scale"),
        };
        if !a.is_finite() || !b.is_finite() || b <= 0.0 {
            return Err(Error::param(format!(
                "{name} must be finite and positive (got location {a}, spread {b})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub kind: ComponentKind,
    pub weight: f64,
}

/// Finite mixture of Gaussian and Laplace components.
///
/// Serialized as `{"components": [{"kind": "gaussian", "params": [mean, stdev], "weight": w}, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct JumpDensityModel {
    components: Vec<Component>,
}

impl JumpDensityModel {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::param(
                "jump density model needs at least one component",
            ));
        }
        let mut total = 0.0;
        for c in &components {
            c.kind.validate()?;
            if !c.weight.is_finite() || c.weight < 0.0 {
                return Err(Error::param(format!(
                    "component weight must be finite and nonnegative, got {}",
                    c.weight
                )));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::param(format!(
                "component weights must sum to 1, got {total}"
            )));
        }
        Ok(Self { components })
    }

    pub fn single(kind: ComponentKind) -> Result<Self> {
        Self::new(vec![Component { kind, weight: 1.0 }])
    }

    pub fn standard_normal() -> Self {
        Self::single(ComponentKind::Gaussian {
            mean: 0.0,
            stdev: 1.0,
        })
        .expect("N(0,1) is a valid model")
    }

    /// `0.95 N(0, 1) + 0.05 Laplace(1, 0.1)`, the benchmark target of the numerical study.
    pub fn benchmark_mixture() -> Self {
        Self::new(vec![
            Component {
                kind: ComponentKind::Gaussian {
                    mean: 0.0,
                    stdev: 1.0,
                },
                weight: 0.95,
            },
            Component {
                kind: ComponentKind::Laplace {
                    location: 1.0,
                    scale: 0.1,
                },
                weight: 0.05,
            },
        ])
        .expect("benchmark mixture is valid")
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Mixture density at `x`.
    pub fn density(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * c.kind.density(x))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * c.kind.mean())
            .sum()
    }

    /// Draws the component index by weight, then samples that component.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for c in &self.components {
            acc += c.weight;
            if u < acc {
                return c.kind.sample(rng);
            }
        }
        // u landed in the rounding gap above the last cumulative weight
        let last = self
            .components
            .iter()
            .rev()
            .find(|c| c.weight > 0.0)
            .unwrap_or(&self.components[self.components.len() - 1]);
        last.kind.sample(rng)
    }
}

/// Pointwise mixture density.
pub fn density_eval(model: &JumpDensityModel, x: f64) -> f64 {
    model.density(x)
}

pub fn sample_jump<R: Rng + ?Sized>(model: &JumpDensityModel, rng: &mut R) -> f64 {
    model.sample(rng)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ComponentFile {
    kind: String,
    params: Vec<f64>,
    weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    components: Vec<ComponentFile>,
}

impl TryFrom<ModelFile> for JumpDensityModel {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Self> {
        let components = file
            .components
            .into_iter()
            .map(|c| {
                if c.params.len() != 2 {
                    return Err(Error::param(format!(
                        "component '{}' expects 2 params, got {}",
                        c.kind,
                        c.params.len()
                    )));
                }
                let kind = match c.kind.to_ascii_lowercase().as_str() {
                    "gaussian" | "normal" => ComponentKind::Gaussian {
                        mean: c.params[0],
                        stdev: c.params[1],
                    },
                    "laplace" => ComponentKind::Laplace {
                        location: c.params[0],
                        scale: c.params[1],
                    },
                    other => return Err(Error::param(format!("unknown component kind '{other}'"))),
                };
                Ok(Component {
                    kind,
                    weight: c.weight,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        JumpDensityModel::new(components)
    }
}

impl From<JumpDensityModel> for ModelFile {
    fn from(model: JumpDensityModel) -> Self {
        let components = model
            .components
            .iter()
            .map(|c| {
                let (kind, params) = match c.kind {
                    ComponentKind::Gaussian { mean, stdev } => ("gaussian", vec![mean, stdev]),
                    ComponentKind::Laplace { location, scale } => {
                        ("laplace", vec![location, scale])
                    }
                };
                ComponentFile {
                    kind: kind.to_string(),
                    params,
                    weight: c.weight,
                }
            })
            .collect();
        ModelFile { components }
    }
}

/// Deterministic source of per-replicate generators.
///
/// Replicate `r` of master seed `s` is ChaCha8 seeded from `s` on stream `r`,
/// so each substream is a pure function of `(s, r)` regardless of scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    master: u64,
}

impl SeedStream {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn replicate(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(index);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    /// Index of the sampling interval containing the jump.
    pub slot: usize,
    pub time: f64,
    pub size: f64,
}

/// A simulated path observed at times `delta, 2 delta, ..., floor(T/delta) delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub delta: f64,
    pub horizon: f64,
    pub intensity_true: f64,
    pub increments: Vec<f64>,
    pub jumps: Vec<Jump>,
}

impl ObservationRecord {
    pub fn n_slots(&self) -> usize {
        self.increments.len()
    }

    pub fn jump_sizes(&self) -> Vec<f64> {
        self.jumps.iter().map(|j| j.size).collect()
    }

    /// Number of latent jumps in each sampling interval.
    pub fn jump_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.increments.len()];
        for j in &self.jumps {
            counts[j.slot] += 1;
        }
        counts
    }

    /// FNV-1a over the bit patterns of the increments; identifies a trajectory.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.increments {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// `floor(horizon / delta)`, tolerant to representation error when the ratio is integral.
pub fn slot_count(horizon: f64, delta: f64) -> usize {
    let r = horizon / delta;
    let n = r.round();
    if (r - n).abs() <= 1e-9 * n.max(1.0) {
        n as usize
    } else {
        r.floor() as usize
    }
}

fn check_path_params(intensity: f64, horizon: f64, delta: f64) -> Result<()> {
    if !intensity.is_finite() || intensity < 0.0 {
        return Err(Error::param(format!(
            "intensity must be finite and >= 0, got {intensity}"
        )));
    }
    if !horizon.is_finite() || horizon <= 0.0 {
        return Err(Error::param(format!(
            "horizon must be finite and > 0, got {horizon}"
        )));
    }
    if !delta.is_finite() || delta <= 0.0 || delta > horizon {
        return Err(Error::param(format!(
            "delta must satisfy 0 < delta <= horizon, got {delta}"
        )));
    }
    Ok(())
}

pub fn simulate_path(
    intensity: f64,
    model: &JumpDensityModel,
    horizon: f64,
    delta: f64,
    seed: u64,
) -> Result<ObservationRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_path_with_rng(intensity, model, horizon, delta, &mut rng)
}

pub fn simulate_path_with_rng<R: Rng + ?Sized>(
    intensity: f64,
    model: &JumpDensityModel,
    horizon: f64,
    delta: f64,
    rng: &mut R,
) -> Result<ObservationRecord> {
    check_path_params(intensity, horizon, delta)?;
    let n_slots = slot_count(horizon, delta);
    let mut increments = vec![0.0; n_slots];
    let mut jumps = Vec::new();

    if intensity > 0.0 {
        let poisson = Poisson::new(intensity * delta)
            .map_err(|e| Error::param(format!("poisson rate {}: {e}", intensity * delta)))?;
        for (slot, inc) in increments.iter_mut().enumerate() {
            let count: f64 = poisson.sample(rng);
            for _ in 0..count as u64 {
                let u: f64 = rng.random();
                let size = model.sample(rng);
                jumps.push(Jump {
                    slot,
                    time: (slot as f64 + u) * delta,
                    size,
                });
                *inc += size;
            }
        }
    }

    Ok(ObservationRecord {
        delta,
        horizon,
        intensity_true: intensity,
        increments,
        jumps,
    })
}

/// The nonzero increments of a path, in occurrence order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonzeroIncrements {
    pub values: Vec<f64>,
    pub total_slots: usize,
}

impl NonzeroIncrements {
    /// Builds from raw slot increments (zeros included).
    pub fn from_increments(increments: &[f64]) -> Self {
        Self {
            values: increments.iter().copied().filter(|v| *v != 0.0).collect(),
            total_slots: increments.len(),
        }
    }

    /// `N_T`, the number of nonzero increments.
    pub fn count(&self) -> usize {
        self.values.len()
    }
}

pub fn extract_nonzero(record: &ObservationRecord) -> NonzeroIncrements {
    NonzeroIncrements::from_increments(&record.increments)
}
