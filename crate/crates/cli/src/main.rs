use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use decompound::decompound::corrected_estimator;
use decompound::gridmath::{inversion_bias, GridFunction};
use decompound::harness::{
    export_example, export_mae_curve, export_report, run_experiment, ExperimentConfig, ReportFormat,
};
use decompound::simulate::{simulate_path, JumpDensityModel, NonzeroIncrements};
use decompound::wavelet::{Interval, ThresholdEstimator, TuneOn};

#[derive(Parser)]
#[command(
    name = "decompound",
    version,
    about = "Wavelet decompounding of compound Poisson data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one path and write its slot increments.
    Simulate {
        #[arg(long)]
        theta: f64,
        #[arg(long = "T")]
        horizon: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Jump density JSON; defaults to the benchmark mixture.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Optional `time,size` CSV of the latent jumps.
        #[arg(long)]
        jumps: Option<PathBuf>,
    },
    /// Estimate the jump density from an increment CSV.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        delta: f64,
        #[arg(long = "K", default_value_t = 1)]
        order_k: usize,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        #[arg(long = "L", default_value_t = 8)]
        level_l: u32,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true, default_values_t = [-6.0, 6.0])]
        domain: Vec<f64>,
        #[arg(long, default_value_t = 0.01)]
        grid_step: f64,
        /// Maximum resolution level `J`.
        #[arg(long = "J")]
        max_level_j: Option<u32>,
        /// Known intensity; replaces the plug-in estimate.
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, default_value = "N_T")]
        tune_on: TuneOn,
        #[arg(long)]
        out: PathBuf,
        /// Clip negative values in the written CSV (display only).
        #[arg(long)]
        clip_display: bool,
    },
    /// Run a Monte Carlo experiment from a JSON config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print deterministic inversion-error tables for a jump density.
    Validate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 30.0)]
        half_width: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
    },
}

#[derive(Serialize)]
struct PathSidecar {
    delta: f64,
    horizon: f64,
    theta: f64,
    n_nonzero: usize,
}

#[derive(Serialize)]
struct EstimateSidecar {
    n_nonzero: usize,
    p_hat: f64,
    theta_hat: f64,
    theta_used: f64,
    #[serde(rename = "J_effective")]
    j_effective: u32,
    eta: f64,
    #[serde(rename = "K")]
    order_k: usize,
    warnings: Vec<String>,
}

/// Failure classes mapped to process exit codes.
enum Failure {
    /// Exit code 2.
    Config(anyhow::Error),
    /// Exit code 3.
    Experiment(anyhow::Error),
    /// Exit code 1.
    Other(anyhow::Error),
}

fn load_model(path: Option<&Path>) -> Result<JumpDensityModel> {
    match path {
        None => Ok(JumpDensityModel::benchmark_mixture()),
        Some(p) => {
            let s = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&s).with_context(|| format!("parsing model {}", p.display()))
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

fn read_increments(path: &Path) -> Result<Vec<f64>> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h.trim() == "increment")
        .unwrap_or(0);
    let mut values = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let field = rec.get(col).context("missing increment column")?;
        let v: f64 = field
            .trim()
            .parse()
            .with_context(|| format!("row {}: bad increment {field:?}", row + 1))?;
        values.push(v);
    }
    Ok(values)
}

fn simulate(
    theta: f64,
    horizon: f64,
    delta: f64,
    seed: u64,
    model: Option<&Path>,
    out: &Path,
    jumps: Option<&Path>,
) -> Result<()> {
    let model = load_model(model)?;
    let path = simulate_path(theta, &model, horizon, delta, seed)?;
    let mut w =
        csv::Writer::from_path(out).with_context(|| format!("writing {}", out.display()))?;
    w.write_record(["increment"])?;
    for v in &path.increments {
        w.write_record([v.to_string()])?;
    }
    w.flush()?;
    if let Some(jp) = jumps {
        let mut w =
            csv::Writer::from_path(jp).with_context(|| format!("writing {}", jp.display()))?;
        w.write_record(["time", "size"])?;
        for j in &path.jumps {
            w.write_record([j.time.to_string(), j.size.to_string()])?;
        }
        w.flush()?;
    }
    let n_nonzero = path.increments.iter().filter(|v| **v != 0.0).count();
    write_json(
        &sidecar_path(out),
        &PathSidecar {
            delta,
            horizon,
            theta,
            n_nonzero,
        },
    )?;
    eprintln!(
        "{} slots, {} nonzero, {} jumps -> {}",
        path.n_slots(),
        n_nonzero,
        path.jumps.len(),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn estimate(
    input: &Path,
    delta: f64,
    order_k: usize,
    kappa: f64,
    level_l: u32,
    domain: &[f64],
    grid_step: f64,
    max_level_j: Option<u32>,
    theta: Option<f64>,
    tune_on: TuneOn,
    out: &Path,
    clip_display: bool,
) -> Result<()> {
    let increments = read_increments(input)?;
    if increments.is_empty() {
        bail!("{} holds no increments", input.display());
    }
    let nonzero = NonzeroIncrements::from_increments(&increments);
    let domain = Interval::new(domain[0], domain[1])?;
    let estimator = ThresholdEstimator {
        max_level_j,
        grid_step,
        ..ThresholdEstimator::new(domain, level_l, kappa)
    };
    let est = corrected_estimator(&nonzero, delta, order_k, &estimator, tune_on, theta)?;
    for w in &est.warnings {
        eprintln!("warning: {w}");
    }
    let density = if clip_display {
        est.density.clipped_for_display()
    } else {
        est.density.clone()
    };
    let mut w =
        csv::Writer::from_path(out).with_context(|| format!("writing {}", out.display()))?;
    w.write_record(["x", "f_hat"])?;
    for (x, v) in density.grid().zip(&density.values) {
        w.write_record([x.to_string(), v.to_string()])?;
    }
    w.flush()?;
    write_json(
        &sidecar_path(out),
        &EstimateSidecar {
            n_nonzero: est.intensity.n_nonzero,
            p_hat: est.intensity.p_hat,
            theta_hat: est.intensity.theta_hat,
            theta_used: est.theta_used,
            j_effective: est.powers[0].j_effective,
            eta: est.powers[0].eta,
            order_k,
            warnings: est.warnings.clone(),
        },
    )?;
    Ok(())
}

fn experiment(
    config: &Path,
    replicates: Option<usize>,
    seed: Option<u64>,
    threads: Option<usize>,
    out_dir: &Path,
) -> std::result::Result<(), Failure> {
    let text = fs::read_to_string(config)
        .with_context(|| format!("reading {}", config.display()))
        .map_err(Failure::Config)?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", config.display()))
        .map_err(Failure::Config)?;
    if let Some(r) = replicates {
        cfg.replicates = r;
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    cfg.validate()
        .context("invalid experiment config")
        .map_err(Failure::Config)?;

    let run = (|| -> Result<_> {
        fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        let run = run_experiment(&cfg, threads)?;
        export_report(&run.report, ReportFormat::Csv, &out_dir.join("report.csv"))?;
        export_report(
            &run.report,
            ReportFormat::Json,
            &out_dir.join("report.json"),
        )?;
        export_mae_curve(&run.curves, &out_dir.join("mae_curve.csv"))?;
        export_example(&run.curves, &out_dir.join("estimate_example.csv"))?;
        write_json(
            &out_dir.join("timing.json"),
            &serde_json::json!({ "elapsed_secs": run.elapsed_secs, "threads": threads }),
        )?;
        Ok(run)
    })()
    .map_err(Failure::Experiment)?;

    println!(
        "{:<8} {:>14} {:>14} {:>6} {:>8}",
        "name", "mean_l2", "sd_l2", "n_ok", "n_failed"
    );
    for e in &run.report.estimators {
        println!(
            "{:<8} {:>14.6e} {:>14.6e} {:>6} {:>8}",
            e.name, e.mean_l2, e.sd_l2, e.n_ok, e.n_failed
        );
    }
    for p in &run.report.p_m {
        println!("p_{} = {:.4} (sd {:.4})", p.m, p.mean, p.sd);
    }
    Ok(())
}

fn validate(
    model: Option<&Path>,
    theta: f64,
    delta: f64,
    half_width: f64,
    step: f64,
) -> Result<()> {
    let model = load_model(model)?;
    let f = GridFunction::from_model(&model, -half_width, half_width, step)?;
    println!("composition error sup|L_K[P f] - f|, theta={theta}, delta={delta}, M=20");
    println!("{:>3} {:>14}", "K", "sup_error");
    for k in 0..=5 {
        println!(
            "{:>3} {:>14.6e}",
            k,
            inversion_bias(&f, theta, delta, k, 20)?
        );
    }
    println!();
    println!("bias under delta halving, M=K+8");
    println!(
        "{:>3} {:>8} {:>14} {:>14} {:>8} {:>8}",
        "K", "delta", "bias", "bias_half", "ratio", "2^(K+1)"
    );
    for k in 0..=2 {
        for d in [delta * 2.0, delta] {
            let b = inversion_bias(&f, theta, d, k, k + 8)?;
            let h = inversion_bias(&f, theta, d / 2.0, k, k + 8)?;
            println!(
                "{:>3} {:>8} {:>14.6e} {:>14.6e} {:>8.3} {:>8}",
                k,
                d,
                b,
                h,
                b / h,
                1u32 << (k + 1)
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate {
            theta,
            horizon,
            delta,
            seed,
            model,
            out,
            jumps,
        } => simulate(
            theta,
            horizon,
            delta,
            seed,
            model.as_deref(),
            &out,
            jumps.as_deref(),
        )
        .map_err(Failure::Other),
        Command::Estimate {
            input,
            delta,
            order_k,
            kappa,
            level_l,
            domain,
            grid_step,
            max_level_j,
            theta,
            tune_on,
            out,
            clip_display,
        } => estimate(
            &input,
            delta,
            order_k,
            kappa,
            level_l,
            &domain,
            grid_step,
            max_level_j,
            theta,
            tune_on,
            &out,
            clip_display,
        )
        .map_err(Failure::Other),
        Command::Experiment {
            config,
            replicates,
            seed,
            threads,
            out_dir,
        } => experiment(&config, replicates, seed, threads, &out_dir),
        Command::Validate {
            model,
            theta,
            delta,
            half_width,
            step,
        } => validate(model.as_deref(), theta, delta, half_width, step).map_err(Failure::Other),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Experiment(e)) => {
            eprintln!("experiment error: {e:#}");
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
