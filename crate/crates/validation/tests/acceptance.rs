//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::f64::consts::SQRT_2;
use std::process::ExitCode;

use decompound::decompound::{compounding_weights, rate_exponent, theta_from_fraction};
use decompound::gridmath::{inversion_bias, GridFunction};
use decompound::harness::{
    export_mae_curve, export_report, run_experiment, ExperimentConfig, ExperimentReport,
    ReportFormat,
};
use decompound::simulate::JumpDensityModel;
use decompound::wavelet::transform::forward;
use decompound::wavelet::{
    bin_samples, empirical_coefficients, hard_threshold, reconstruct_nodes, Interval, WaveletBasis,
};

const REPLICATES: usize = 200;
const LOSS_BAND: f64 = 0.25;
const ORDER_SE: f64 = 2.0;
/// Reference mean L2 losses of the oracle, K=0, K=1 and K=2.
const TABLE_LOSS: [(&str, f64); 4] = [
    ("oracle", 0.1117e-4),
    ("K0", 0.1842e-4),
    ("K1", 0.1353e-4),
    ("K2", 0.1350e-4),
];
const TABLE_PM: [(f64, f64); 3] = [(0.9508, 0.0022), (0.0476, 0.0022), (0.0016, 0.0004)];
const CLOSED_FORM_PM: [f64; 3] = [0.950833, 0.047542, 0.0015848];
const COMPOSITION_TOL: f64 = 1e-8;
const RATIO_BAND: (f64, f64) = (0.7, 1.4);
const TRANSFORM_TOL: f64 = 1e-10;
const THETA_BAND: f64 = 0.05;
const INVERSE_REL_TOL: f64 = 1e-12;

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, pass, detail }
}

fn benchmark() -> ExperimentConfig {
    ExperimentConfig {
        replicates: REPLICATES,
        ..ExperimentConfig::benchmark()
    }
}

fn loss_table(report: &ExperimentReport) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, target) in TABLE_LOSS {
        let mean = report.estimator(name).expect("estimator present").mean_l2;
        let rel = mean / target - 1.0;
        pass &= rel.abs() <= LOSS_BAND;
        parts.push(format!(
            "{name} {mean:.4e} vs {target:.4e} ({:+.0}%)",
            100.0 * rel
        ));
    }
    outcome("1a mean losses within +/-25%", pass, parts.join("; "))
}

fn loss_orderings(report: &ExperimentReport) -> Outcome {
    let est = |n: &str| report.estimator(n).expect("estimator present");
    let gap = |lo: &str, hi: &str| {
        let (a, b) = (est(lo), est(hi));
        let se = (a.se_l2.powi(2) + b.se_l2.powi(2)).sqrt();
        ((b.mean_l2 - a.mean_l2) / se, se)
    };
    let (z1, _) = gap("oracle", "K1");
    let (z2, _) = gap("K1", "K0");
    outcome(
        "1b oracle < K1 < K0 by 2 SE",
        z1 >= ORDER_SE && z2 >= ORDER_SE,
        format!("K1-oracle = {z1:.1} SE, K0-K1 = {z2:.1} SE"),
    )
}

fn loss_shape(report: &ExperimentReport) -> Outcome {
    let m = |n: &str| report.estimator(n).expect("estimator present").mean_l2;
    let table = |n: &str| TABLE_LOSS.iter().find(|(k, _)| *k == n).unwrap().1;
    let ratio = |n: &str| (m(n) / m("oracle"), table(n) / table("oracle"));
    let (k0, k0_t) = ratio("K0");
    let (k1, k1_t) = ratio("K1");
    let stable = (m("K2") - m("K3")).abs() < 0.05 * m("K2");
    outcome(
        "1c loss ratios and K stabilization",
        stable,
        format!(
            "K0/oracle {k0:.3} (reference {k0_t:.3}), K1/oracle {k1:.3} (reference {k1_t:.3}), |K2-K3|/K2 = {:.2e}",
            (m("K2") - m("K3")).abs() / m("K2")
        ),
    )
}

fn pm_table(report: &ExperimentReport) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, p) in report.p_m.iter().enumerate() {
        let (table, table_sd) = TABLE_PM[i];
        let exact = CLOSED_FORM_PM[i];
        let ok = (p.mean - table).abs() <= 3.0 * p.sd && (p.mean - exact).abs() <= 3.0 * p.se;
        pass &= ok;
        parts.push(format!(
            "p{} {:.4} (sd {:.4}; reference {table} sd {table_sd}; exact {exact})",
            p.m, p.mean, p.sd
        ));
    }
    let w = compounding_weights(1.0, 0.1, 3).unwrap();
    for (i, exact) in CLOSED_FORM_PM.iter().enumerate() {
        pass &= (w.p(i + 1) - exact).abs() < 5e-7;
    }
    outcome("2  p_m frequencies", pass, parts.join("; "))
}

fn composition() -> Outcome {
    let f = GridFunction::from_model(&JumpDensityModel::benchmark_mixture(), -30.0, 30.0, 0.01)
        .unwrap();
    let err = inversion_bias(&f, 1.0, 0.1, 19, 20).unwrap();
    outcome(
        "3  inverse series composition",
        err < COMPOSITION_TOL,
        format!("sup error {err:.3e}"),
    )
}

fn bias_order() -> Outcome {
    let f = GridFunction::from_model(&JumpDensityModel::benchmark_mixture(), -30.0, 30.0, 0.01)
        .unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for k in 0..=2usize {
        let target = (1u32 << (k + 1)) as f64;
        for delta in [0.2, 0.1] {
            let m = k + 8;
            let ratio = inversion_bias(&f, 1.0, delta, k, m).unwrap()
                / inversion_bias(&f, 1.0, delta / 2.0, k, m).unwrap();
            pass &= ratio >= RATIO_BAND.0 * target && ratio <= RATIO_BAND.1 * target;
            parts.push(format!("K{k} d{delta}: {:.3}x2^{}", ratio / target, k + 1));
        }
    }
    outcome("4  bias order delta^(K+1)", pass, parts.join(", "))
}

fn wavelet_layer() -> Outcome {
    let basis = WaveletBasis::sym4();
    let filters = (basis.lowpass.iter().sum::<f64>() - SQRT_2).abs() < TRANSFORM_TOL
        && basis.validate(TRANSFORM_TOL).is_ok();

    let model = JumpDensityModel::benchmark_mixture();
    let mut rng = decompound::simulate::SeedStream::new(5).replicate(0);
    let xs: Vec<f64> = (0..20_000).map(|_| model.sample(&mut rng)).collect();
    let domain = Interval::new(-6.0, 6.0).unwrap();
    let binned = bin_samples(&xs, domain, 8).unwrap();
    let coeffs = empirical_coefficients(&binned, &basis, 8).unwrap();

    let nodes = reconstruct_nodes(&coeffs).unwrap();
    let pr = nodes
        .iter()
        .zip(binned.density())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let density = binned.density();
    let dec = forward(&density, &basis).unwrap();
    let e_sig: f64 = density.iter().map(|v| v * v).sum();
    let e_dec: f64 = dec
        .approx
        .iter()
        .chain(dec.details.iter().flatten())
        .map(|v| v * v)
        .sum();
    let parseval = (e_sig - e_dec).abs() / e_sig;

    let survivors: Vec<usize> = (0..=50)
        .map(|i| hard_threshold(&coeffs, i as f64 * 0.01).surviving_betas())
        .collect();
    let monotone = survivors.windows(2).all(|w| w[1] <= w[0]);

    outcome(
        "5  wavelet layer",
        filters && pr < TRANSFORM_TOL && parseval < TRANSFORM_TOL && monotone,
        format!(
            "filters {filters}, reconstruction {pr:.1e}, Parseval {parseval:.1e}, monotone {monotone}"
        ),
    )
}

fn intensity(report: &ExperimentReport) -> Outcome {
    let thetas: Vec<f64> = report
        .replicates
        .iter()
        .filter_map(|r| r.theta_hat)
        .collect();
    let inside = thetas
        .iter()
        .filter(|t| (**t - 1.0).abs() <= THETA_BAND)
        .count();
    let worst_inverse = [1e-3, 0.1, 0.5, 1.0, 2.0, 6.0]
        .iter()
        .flat_map(|&theta| [0.01, 0.1, 0.5].map(move |d| (theta, d)))
        .map(|(theta, d): (f64, f64)| {
            let p = -(-theta * d).exp_m1();
            (theta_from_fraction(p, d) - theta).abs() / theta
        })
        .fold(0.0, f64::max);
    outcome(
        "6  intensity plug-in",
        inside == REPLICATES && worst_inverse < INVERSE_REL_TOL,
        format!(
            "{inside}/{REPLICATES} within 1 +/- {THETA_BAND}, inverse rel error {worst_inverse:.1e}"
        ),
    )
}

fn determinism(first: &ExperimentReport) -> Outcome {
    let cfg = benchmark();
    let dir = tempfile::tempdir().unwrap();
    let mut blobs = Vec::new();
    for (tag, threads) in [("a", Some(1)), ("b", Some(4)), ("c", None)] {
        let run = run_experiment(&cfg, threads).unwrap();
        let json = dir.path().join(format!("{tag}.json"));
        let csv = dir.path().join(format!("{tag}.csv"));
        let mae = dir.path().join(format!("{tag}_mae.csv"));
        export_report(&run.report, ReportFormat::Json, &json).unwrap();
        export_report(&run.report, ReportFormat::Csv, &csv).unwrap();
        export_mae_curve(&run.curves, &mae).unwrap();
        let read = |p: &std::path::Path| std::fs::read(p).unwrap();
        blobs.push((read(&json), read(&csv), read(&mae)));
    }
    let same_as_first = serde_json::to_vec(first).unwrap()
        == serde_json::to_vec(&run_experiment(&cfg, Some(2)).unwrap().report).unwrap();
    let identical = blobs.windows(2).all(|w| w[0] == w[1]) && same_as_first;
    outcome(
        "7  determinism across runs and threads",
        identical,
        format!("{} runs at 1, 4 and default threads", blobs.len()),
    )
}

fn rate_bound() -> Outcome {
    let mut worst = f64::MIN;
    let mut count = 0;
    for i in 0..10 {
        let pi = 0.5 + 9.5 * i as f64 / 9.0;
        for j in 0..10 {
            let p = 1.0 + 9.0 * j as f64 / 9.0;
            for k in 1..=10 {
                let s = 1.0 / pi + (5.0 - 1.0 / pi) * k as f64 / 10.0;
                worst = worst.max(rate_exponent(s, p, pi).unwrap().value);
                count += 1;
            }
        }
    }
    outcome(
        "8  rate exponent at most 1/2",
        worst <= 0.5,
        format!("max over {count} points = {worst:.6}"),
    )
}

fn main() -> ExitCode {
    let run = run_experiment(&benchmark(), None).expect("benchmark experiment runs");
    let report = &run.report;
    let outcomes = vec![
        loss_table(report),
        loss_orderings(report),
        loss_shape(report),
        pm_table(report),
        composition(),
        bias_order(),
        wavelet_layer(),
        intensity(report),
        determinism(report),
        rate_bound(),
    ];
    let mut failed = 0;
    for o in &outcomes {
        println!(
            "{} [{}] {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.id,
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed ({REPLICATES} replicates, {:.1}s)",
        outcomes.len() - failed,
        run.elapsed_secs
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
