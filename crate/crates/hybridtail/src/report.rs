//! Text reports and plot data.

use std::fmt::Write;

use hybridtail_core::ecdf::{EmpiricalCdf, SyntheticGrid};
use hybridtail_core::montecarlo::{McReport, MethodStats, ParameterStats};
use hybridtail_core::special::gpd_sf;
use hybridtail_core::{HybridModel, ModelParams, Result};

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

fn row(out: &mut String, name: &str, s: &ParameterStats) {
    let _ = writeln!(
        out,
        "{:<6} {:>10.5} {:>12.6} {:>12.4e} {:>12.4e} {:>8} {:>8}",
        name,
        s.truth,
        s.mean,
        s.variance,
        s.mse,
        opt(s.t),
        opt(s.p_value)
    );
}

/// Parameter table in the layout: parameter, truth, mean, variance, MSE, T, p-value.
pub fn mc_table(report: &McReport) -> String {
    let mut out = String::new();
    let t = report.theta;
    let _ = writeln!(
        out,
        "theta = [{}, {}, {}, {}]  n = {}  l = {}  N = {}  seed = {}",
        t.mu, t.sigma, t.u2, t.xi, report.n, report.l, report.replicates, report.seed
    );
    let _ = writeln!(
        out,
        "replicates fitted: {}  failed: {}",
        report.succeeded, report.failed
    );
    let _ = writeln!(
        out,
        "{:<6} {:>10} {:>12} {:>12} {:>12} {:>8} {:>8}",
        "param", "truth", "mean", "variance", "MSE", "T", "p"
    );
    row(&mut out, "mu", &report.mu);
    row(&mut out, "sigma", &report.sigma);
    row(&mut out, "u2", &report.u2);
    row(&mut out, "xi", &report.xi);
    let _ = writeln!(out, "D = {:.4e}", report.d);
    let _ = writeln!(out, "mean outer iterations = {:.1}", report.mean_iterations);
    if let Some(s) = report.mean_seconds {
        let _ = writeln!(out, "mean seconds per replicate = {s:.3}");
    }
    if let Some(b) = &report.baselines {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<16} {:>12} {:>12} {:>9}",
            "method", "MSE xi", "MSE beta", "failures"
        );
        let mut method = |name: &str, m: &Option<MethodStats>| match m {
            Some(m) => {
                let _ = writeln!(
                    out,
                    "{:<16} {:>12.4e} {:>12.4e} {:>9}",
                    name, m.xi.mse, m.beta.mse, m.failures
                );
            }
            None => {
                let _ = writeln!(out, "{name:<16} {:>12}", "unavailable");
            }
        };
        method("self-calibrated", &Some(b.self_calibrated));
        method("ml", &b.ml);
        method("pwm", &b.pwm);
    }
    out
}

/// `(x, H_n(x), H(x; theta))` on the synthetic grid.
pub fn cdf_rows(data: &[f64], theta: &ModelParams, m: usize) -> Result<Vec<Vec<f64>>> {
    let ecdf = EmpiricalCdf::new(data)?;
    let grid = SyntheticGrid::new(ecdf.min(), ecdf.max(), m)?;
    let model = HybridModel::new(*theta)?;
    let empirical = ecdf.eval_sorted(&grid.points);
    Ok(grid
        .points
        .iter()
        .zip(empirical)
        .map(|(&x, e)| vec![x, e, model.cdf(x)])
        .collect())
}

/// Exceedance cdf pairs above `threshold`: `(excess, empirical, GPD)`.
pub fn tail_rows(data: &[f64], threshold: f64, xi: f64, beta: f64) -> Vec<Vec<f64>> {
    let mut excesses: Vec<f64> = data.iter().filter(|&&x| x > threshold).map(|x| x - threshold).collect();
    excesses.sort_by(f64::total_cmp);
    let count = excesses.len() as f64;
    excesses
        .iter()
        .enumerate()
        .map(|(i, &e)| vec![e, (i as f64 + 1.0) / count, 1.0 - gpd_sf(e, xi, beta)])
        .collect()
}
