//! Monte Carlo comparison of corrected estimators against the oracle.
//!
//! Every replicate simulates one path and evaluates the oracle and all
//! requested correction orders on that same path. Replicates draw from
//! independent ChaCha substreams of the master seed, run in parallel, and are
//! aggregated in index order, so reports do not depend on the thread count.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decompound::{
    combine_powers, estimate_intensity, inverse_coefficients, oracle_estimator, power_estimates,
};
use crate::error::{Error, Result};
use crate::gridmath::grid_l2_loss;
use crate::simulate::{extract_nonzero, simulate_path_with_rng, JumpDensityModel, SeedStream};
use crate::wavelet::{DensityEstimate, Interval, ThresholdEstimator, TuneOn, WaveletBasis};

/// Number of jump-count classes tallied for the `p_m` diagnostics.
pub const PM_CLASSES: usize = 3;

fn default_kappa() -> f64 {
    1.0
}
fn default_level() -> u32 {
    8
}
fn default_domain() -> Interval {
    Interval { lo: -6.0, hi: 6.0 }
}
fn default_step() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub theta: f64,
    pub delta: f64,
    pub horizon: f64,
    pub model: JumpDensityModel,
    pub k_list: Vec<usize>,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_level")]
    pub level_l: u32,
    #[serde(default = "default_domain")]
    pub domain: Interval,
    #[serde(default = "default_step")]
    pub grid_step: f64,
    /// User cap on the resolution level; the effective level is also capped by the data and `L`.
    #[serde(default)]
    pub max_level_j: Option<u32>,
    pub replicates: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub tune_on: TuneOn,
}

impl ExperimentConfig {
    /// The benchmark study: `theta = 1`, `delta = 0.1`, `T = 10^4`, sym4 with `J = 10`,
    /// `L = 8`, `D = [-6, 6]`, mesh `0.01`, `K = 0..=3`, 1000 replicates.
    pub fn benchmark() -> Self {
        Self {
            theta: 1.0,
            delta: 0.1,
            horizon: 10_000.0,
            model: JumpDensityModel::benchmark_mixture(),
            k_list: vec![0, 1, 2, 3],
            kappa: 1.0,
            level_l: 8,
            domain: default_domain(),
            grid_step: 0.01,
            max_level_j: Some(10),
            replicates: 1000,
            master_seed: 20_130_411,
            tune_on: TuneOn::NT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !self.theta.is_finite() || self.theta < 0.0 {
            return Err(Error::param(format!(
                "theta must be >= 0, got {}",
                self.theta
            )));
        }
        if !finite_pos(self.delta) || !finite_pos(self.horizon) || self.delta > self.horizon {
            return Err(Error::param(format!(
                "need 0 < delta <= horizon (delta {}, horizon {})",
                self.delta, self.horizon
            )));
        }
        if self.k_list.is_empty() {
            return Err(Error::param("k_list must not be empty"));
        }
        if !finite_pos(self.kappa) {
            return Err(Error::param(format!(
                "kappa must be > 0, got {}",
                self.kappa
            )));
        }
        if !(1..=20).contains(&self.level_l) {
            return Err(Error::param(format!(
                "level_l must be in 1..=20, got {}",
                self.level_l
            )));
        }
        if !finite_pos(self.grid_step) || self.grid_step > self.domain.width() {
            return Err(Error::param(format!("bad grid_step {}", self.grid_step)));
        }
        if self.replicates == 0 {
            return Err(Error::param("replicates must be >= 1"));
        }
        Ok(())
    }

    pub fn max_order(&self) -> usize {
        self.k_list.iter().copied().max().unwrap_or(0)
    }

    pub fn estimator(&self) -> ThresholdEstimator {
        ThresholdEstimator {
            basis: WaveletBasis::sym4(),
            domain: self.domain,
            level_l: self.level_l,
            kappa: self.kappa,
            max_level_j: self.max_level_j,
            grid_step: self.grid_step,
        }
    }

    /// Estimator names in report order: the oracle, then each `K` of `k_list`.
    pub fn estimator_names(&self) -> Vec<String> {
        std::iter::once("oracle".to_string())
            .chain(self.k_list.iter().map(|k| format!("K{k}")))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ReplicateStatus {
    Ok,
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: u64,
    /// Identifies the trajectory shared by every estimator of this replicate.
    pub path_checksum: u64,
    pub n_slots: usize,
    pub n_nonzero: usize,
    pub n_jumps: usize,
    #[serde(flatten)]
    pub status: ReplicateStatus,
    pub theta_hat: Option<f64>,
    /// One loss per estimator, in [`ExperimentConfig::estimator_names`] order.
    pub losses: Vec<f64>,
    /// Nonzero increments carrying exactly `m` latent jumps, `m = 1..=PM_CLASSES`.
    pub jump_count_tally: Vec<usize>,
    pub j_effective: Option<u32>,
    pub eta: Option<f64>,
    pub oracle_j_effective: Option<u32>,
    pub oracle_eta: Option<f64>,
    /// Estimates on the output mesh, same order as `losses`. Not serialized.
    #[serde(skip)]
    pub curves: Vec<Vec<f64>>,
}

impl ReplicateRecord {
    pub fn is_ok(&self) -> bool {
        self.status == ReplicateStatus::Ok
    }
}

/// Simulates replicate `index` and evaluates every estimator on the same path.
pub fn run_replicate(config: &ExperimentConfig, index: u64) -> Result<ReplicateRecord> {
    let mut rng = SeedStream::new(config.master_seed).replicate(index);
    let path = simulate_path_with_rng(
        config.theta,
        &config.model,
        config.horizon,
        config.delta,
        &mut rng,
    )?;
    let nonzero = extract_nonzero(&path);
    let counts = path.jump_counts();
    let mut tally = vec![0usize; PM_CLASSES];
    for (inc, c) in path.increments.iter().zip(&counts) {
        if *inc != 0.0 && (1..=PM_CLASSES).contains(&(*c as usize)) {
            tally[*c as usize - 1] += 1;
        }
    }

    let mut record = ReplicateRecord {
        index,
        path_checksum: path.checksum(),
        n_slots: path.n_slots(),
        n_nonzero: nonzero.count(),
        n_jumps: path.jumps.len(),
        status: ReplicateStatus::Ok,
        theta_hat: None,
        losses: Vec::new(),
        jump_count_tally: tally,
        j_effective: None,
        eta: None,
        oracle_j_effective: None,
        oracle_eta: None,
        curves: Vec::new(),
    };

    let need = config.max_order() + 1;
    if nonzero.count() < need {
        record.status = ReplicateStatus::Failed {
            reason: format!(
                "{} nonzero increments, need at least {need}",
                nonzero.count()
            ),
        };
        return Ok(record);
    }

    let estimator = config.estimator();
    let jumps = path.jump_sizes();
    let oracle = oracle_estimator(&jumps, &estimator)?;
    let intensity = estimate_intensity(&nonzero, config.delta)?;
    let powers = power_estimates(&nonzero, need, &estimator, config.tune_on)?;

    let mut curves: Vec<DensityEstimate> = vec![oracle.density.clone()];
    for &k in &config.k_list {
        let coeffs = inverse_coefficients(intensity.theta_hat, config.delta, k)?;
        curves.push(combine_powers(&coeffs.a, &powers)?);
    }

    record.theta_hat = Some(intensity.theta_hat);
    record.j_effective = Some(powers[0].j_effective);
    record.eta = Some(powers[0].eta);
    record.oracle_j_effective = Some(oracle.j_effective);
    record.oracle_eta = Some(oracle.eta);
    record.losses = curves
        .iter()
        .map(|c| grid_l2_loss(c, &config.model))
        .collect();
    record.curves = curves.into_iter().map(|c| c.values).collect();
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub name: String,
    pub mean_l2: f64,
    /// Sample standard deviation of the per-replicate losses.
    pub sd_l2: f64,
    /// Standard error of `mean_l2`.
    pub se_l2: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmEstimate {
    pub m: usize,
    pub mean: f64,
    /// Standard deviation of the per-replicate frequencies.
    pub sd: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl Spread {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let (mean, sd) = mean_sd(values);
        Some(Self {
            mean,
            sd,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedReplicate {
    pub index: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub estimators: Vec<EstimatorSummary>,
    /// Jump-count frequencies among nonzero increments; uses latent simulation truth.
    pub p_m: Vec<PmEstimate>,
    pub n_ok: usize,
    pub n_failed: usize,
    pub failed: Vec<FailedReplicate>,
    /// False when a single replicate makes standard deviations undefined (reported as 0).
    pub sd_defined: bool,
    pub theta_hat: Option<Spread>,
    pub j_effective: Option<Spread>,
    pub eta: Option<Spread>,
    pub oracle_j_effective: Option<Spread>,
    pub oracle_eta: Option<Spread>,
    pub notes: Vec<String>,
    pub replicates: Vec<ReplicateRecord>,
}

impl ExperimentReport {
    pub fn estimator(&self, name: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.name == name)
    }
}

/// Plot-ready curves on the output mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentCurves {
    pub names: Vec<String>,
    pub x: Vec<f64>,
    pub truth: Vec<f64>,
    /// Mean over successful replicates of `|f_hat(x) - f(x)|`, one column per estimator.
    pub mean_abs_error: Vec<Vec<f64>>,
    /// Estimates of the first successful replicate.
    pub example: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub curves: ExperimentCurves,
    pub elapsed_secs: f64,
}

/// Mean and sample standard deviation (0 for a single value).
fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-replicate `m`-jump frequencies among nonzero increments, averaged over replicates.
pub fn estimate_pm_frequencies(records: &[ReplicateRecord]) -> Vec<PmEstimate> {
    let usable: Vec<&ReplicateRecord> = records
        .iter()
        .filter(|r| r.is_ok() && r.n_nonzero > 0)
        .collect();
    (1..=PM_CLASSES)
        .map(|m| {
            let freqs: Vec<f64> = usable
                .iter()
                .map(|r| r.jump_count_tally[m - 1] as f64 / r.n_nonzero as f64)
                .collect();
            if freqs.is_empty() {
                return PmEstimate {
                    m,
                    mean: f64::NAN,
                    sd: f64::NAN,
                    se: f64::NAN,
                };
            }
            let (mean, sd) = mean_sd(&freqs);
            PmEstimate {
                m,
                mean,
                sd,
                se: sd / (freqs.len() as f64).sqrt(),
            }
        })
        .collect()
}

/// Runs all replicates on `threads` workers (`None`: rayon's default) and aggregates them.
pub fn run_experiment(config: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentRun> {
    config.validate()?;
    let start = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Experiment(format!("thread pool: {e}")))?;
    let records: Vec<ReplicateRecord> = pool.install(|| {
        (0..config.replicates as u64)
            .into_par_iter()
            .map(|i| run_replicate(config, i))
            .collect::<Result<Vec<_>>>()
    })?;
    let (report, curves) = aggregate(config, records)?;
    Ok(ExperimentRun {
        report,
        curves,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// Folds index-sorted replicate records into a report and curves.
pub fn aggregate(
    config: &ExperimentConfig,
    mut records: Vec<ReplicateRecord>,
) -> Result<(ExperimentReport, ExperimentCurves)> {
    records.sort_by_key(|r| r.index);
    let names = config.estimator_names();
    let ok: Vec<&ReplicateRecord> = records.iter().filter(|r| r.is_ok()).collect();
    let n_ok = ok.len();
    let n_failed = records.len() - n_ok;
    if n_ok == 0 {
        return Err(Error::Experiment(format!(
            "all {} replicates failed",
            records.len()
        )));
    }

    let estimators = names
        .iter()
        .enumerate()
        .map(|(e, name)| {
            let losses: Vec<f64> = ok.iter().map(|r| r.losses[e]).collect();
            let (mean, sd) = mean_sd(&losses);
            EstimatorSummary {
                name: name.clone(),
                mean_l2: mean,
                sd_l2: sd,
                se_l2: sd / (n_ok as f64).sqrt(),
                n_ok,
                n_failed,
                losses,
            }
        })
        .collect();

    let probe = DensityEstimate::zeros(config.domain, config.grid_step);
    let x: Vec<f64> = probe.grid().collect();
    let truth: Vec<f64> = x.iter().map(|v| config.model.density(*v)).collect();
    let mut mae = vec![vec![0.0; x.len()]; names.len()];
    for r in &ok {
        for (col, curve) in mae.iter_mut().zip(&r.curves) {
            for ((acc, v), t) in col.iter_mut().zip(curve).zip(&truth) {
                *acc += (v - t).abs();
            }
        }
    }
    for col in mae.iter_mut() {
        col.iter_mut().for_each(|v| *v /= n_ok as f64);
    }
    let example = ok[0].curves.clone();

    let collect = |f: &dyn Fn(&ReplicateRecord) -> Option<f64>| {
        Spread::of(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
    };

    let mut notes = vec![
        "sd_l2 is the sample standard deviation of per-replicate losses; se_l2 = sd_l2 / sqrt(n_ok)".to_string(),
        "p_m frequencies classify nonzero increments by their latent jump count (simulation-only diagnostic)".to_string(),
    ];
    if n_failed > 0 {
        notes.push(format!("{n_failed} replicate(s) failed and were excluded"));
    }

    let report = ExperimentReport {
        config: config.clone(),
        estimators,
        p_m: estimate_pm_frequencies(&records),
        n_ok,
        n_failed,
        failed: records
            .iter()
            .filter_map(|r| match &r.status {
                ReplicateStatus::Failed { reason } => Some(FailedReplicate {
                    index: r.index,
                    reason: reason.clone(),
                }),
                ReplicateStatus::Ok => None,
            })
            .collect(),
        sd_defined: n_ok > 1,
        theta_hat: collect(&|r| r.theta_hat),
        j_effective: collect(&|r| r.j_effective.map(f64::from)),
        eta: collect(&|r| r.eta),
        oracle_j_effective: collect(&|r| r.oracle_j_effective.map(f64::from)),
        oracle_eta: collect(&|r| r.oracle_eta),
        notes,
        replicates: records,
    };
    let curves = ExperimentCurves {
        names,
        x,
        truth,
        mean_abs_error: mae,
        example,
    };
    Ok((report, curves))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// `name,mean_l2,sd_l2,n_ok,n_failed`, one row per estimator.
    Csv,
    /// The full report, including per-replicate records and the config.
    Json,
}

pub fn report_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("name,mean_l2,sd_l2,n_ok,n_failed\n");
    for e in &report.estimators {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.name, e.mean_l2, e.sd_l2, e.n_ok, e.n_failed
        ));
    }
    out
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents).map_err(|e| Error::io(path, e))
}

pub fn export_report(report: &ExperimentReport, format: ReportFormat, path: &Path) -> Result<()> {
    match format {
        ReportFormat::Csv => write_file(path, report_csv(report).as_bytes()),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            write_file(path, s.as_bytes())
        }
    }
}

pub fn read_report(path: &Path) -> Result<ExperimentReport> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

fn columns_csv(header: &[String], columns: &[&[f64]]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    let rows = columns.first().map_or(0, |c| c.len());
    for i in 0..rows {
        let row: Vec<String> = columns.iter().map(|c| c[i].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// `x, mae_oracle, mae_K0, ...`.
pub fn export_mae_curve(curves: &ExperimentCurves, path: &Path) -> Result<()> {
    let header: Vec<String> = std::iter::once("x".to_string())
        .chain(curves.names.iter().map(|n| format!("mae_{n}")))
        .collect();
    let mut cols: Vec<&[f64]> = vec![&curves.x];
    cols.extend(curves.mean_abs_error.iter().map(|c| c.as_slice()));
    write_file(path, columns_csv(&header, &cols).as_bytes())
}

/// `x, truth, oracle, K0, ...` for the first successful replicate.
pub fn export_example(curves: &ExperimentCurves, path: &Path) -> Result<()> {
    let header: Vec<String> = ["x".to_string(), "truth".to_string()]
        .into_iter()
        .chain(curves.names.iter().cloned())
        .collect();
    let mut cols: Vec<&[f64]> = vec![&curves.x, &curves.truth];
    cols.extend(curves.example.iter().map(|c| c.as_slice()));
    write_file(path, columns_csv(&header, &cols).as_bytes())
}
