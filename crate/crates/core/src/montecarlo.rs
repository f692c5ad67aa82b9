//! Monte Carlo validation of the self-calibrating fit.
//!
//! Each replicate draws a training and a test sample from the true model on
//! its own ChaCha stream (`stream = replicate index`), so replicates are
//! independent of each other and of the order in which they are run.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_at_threshold, TailMethod};
use crate::calibrator::{fit, FitConfig, StopReason, MIN_SAMPLE};
use crate::special::normal_cdf;
use crate::{Error, HybridModel, ModelParams, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub theta: ModelParams,
    /// Training sample size.
    pub n: usize,
    /// Test sample size.
    pub l: usize,
    pub replicates: usize,
    /// Size of the two-sided mean test.
    pub delta: f64,
    pub fit: FitConfig,
    pub seed: u64,
    /// Also fit ML and PWM at each replicate's self-calibrated threshold.
    pub baselines: bool,
}

impl McConfig {
    pub fn new(theta: ModelParams, n: usize, replicates: usize, seed: u64) -> Self {
        McConfig {
            theta,
            n,
            l: n,
            replicates,
            delta: 0.05,
            fit: FitConfig::default(),
            seed,
            baselines: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        HybridModel::new(self.theta)?;
        if self.replicates < 2 {
            return Err(Error::InvalidParams("at least two replicates are needed"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParams("delta must lie in (0, 1)"));
        }
        if self.n < MIN_SAMPLE {
            return Err(Error::InsufficientData {
                needed: MIN_SAMPLE,
                got: self.n,
            });
        }
        if self.l == 0 {
            return Err(Error::EmptyData);
        }
        self.fit.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub xi: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFit {
    pub index: usize,
    pub theta: ModelParams,
    pub iterations: usize,
    pub stop_reason: StopReason,
    /// `sum over the test set of log(h(y; theta_true) / h(y; theta_hat))`.
    pub log_ratio_sum: f64,
    pub ml: Option<TailEstimate>,
    pub pwm: Option<TailEstimate>,
}

/// The replicate's generator: master seed, stream = replicate index.
pub fn replicate_rng(master_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index as u64);
    rng
}

/// Training and test samples of replicate `index`.
pub fn replicate_samples(cfg: &McConfig, index: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let model = HybridModel::new(cfg.theta)?;
    let mut rng = replicate_rng(cfg.seed, index);
    let train = model.sample_with(cfg.n, &mut rng);
    let test = model.sample_with(cfg.l, &mut rng);
    Ok((train, test))
}

/// `sum log(h(y; truth) / h(y; estimate))` over `test`.
pub fn log_ratio_sum(test: &[f64], truth: &ModelParams, estimate: &ModelParams) -> Result<f64> {
    let h = HybridModel::new(*truth)?;
    let h_hat = HybridModel::new(*estimate)?;
    let mut sum = 0.0;
    for &y in test {
        let a = h.pdf(y);
        let b = h_hat.pdf(y);
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::NonFiniteDensity);
        }
        sum += libm::log(a / b);
    }
    Ok(sum)
}

/// Average log-likelihood ratio over all test sets.
pub fn d_metric(test_sets: &[Vec<f64>], truth: &ModelParams, estimates: &[ModelParams]) -> Result<f64> {
    if test_sets.len() != estimates.len() {
        return Err(Error::InvalidParams("one estimate per test set is needed"));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (set, est) in test_sets.iter().zip(estimates) {
        total += log_ratio_sum(set, truth, est)?;
        count += set.len();
    }
    if count == 0 {
        return Err(Error::EmptyData);
    }
    Ok(total / count as f64)
}

/// Runs one replicate: sample, fit, score on the test set.
pub fn run_replicate(cfg: &McConfig, index: usize) -> Result<ReplicateFit> {
    let (train, test) = replicate_samples(cfg, index)?;
    let result = fit(&train, &cfg.fit)?;
    let log_ratio_sum = log_ratio_sum(&test, &cfg.theta, &result.theta)?;
    let (ml, pwm) = if cfg.baselines {
        let at = |method| {
            fit_at_threshold(&train, method, result.theta.u2)
                .ok()
                .map(|f| TailEstimate { xi: f.xi, beta: f.beta })
        };
        (at(TailMethod::Ml), at(TailMethod::MepPwm))
    } else {
        (None, None)
    };
    Ok(ReplicateFit {
        index,
        theta: result.theta,
        iterations: result.iterations,
        stop_reason: result.stop_reason,
        log_ratio_sum,
        ml,
        pwm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterStats {
    pub truth: f64,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub mse: f64,
    /// `(mean - truth) / sqrt(variance)`; `None` when the variance is zero.
    pub t: Option<f64>,
    pub p_value: Option<f64>,
}

/// Mean, variance, MSE and mean test; zero variance is an error.
pub fn parameter_stats(estimates: &[f64], truth: f64) -> Result<ParameterStats> {
    let stats = describe(estimates, truth)?;
    if stats.t.is_none() {
        return Err(Error::ZeroVariance);
    }
    Ok(stats)
}

/// As [`parameter_stats`] but reports zero variance as a missing statistic.
pub fn describe(estimates: &[f64], truth: f64) -> Result<ParameterStats> {
    let n = estimates.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let nf = n as f64;
    let mean = estimates.iter().sum::<f64>() / nf;
    let variance = estimates.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (nf - 1.0);
    let mse = estimates.iter().map(|a| (a - truth) * (a - truth)).sum::<f64>() / nf;
    let (t, p_value) = if variance > 0.0 {
        let t = (mean - truth) / libm::sqrt(variance);
        (Some(t), Some(2.0 * (1.0 - normal_cdf(t.abs()))))
    } else {
        (None, None)
    };
    Ok(ParameterStats {
        truth,
        mean,
        variance,
        mse,
        t,
        p_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub xi: ParameterStats,
    pub beta: ParameterStats,
    pub failures: usize,
}

/// Tail-parameter accuracy of the self-calibrated fit against ML and PWM
/// run at the same threshold. The true scale is `xi * u2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub self_calibrated: MethodStats,
    pub ml: Option<MethodStats>,
    pub pwm: Option<MethodStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub theta: ModelParams,
    pub n: usize,
    pub l: usize,
    pub replicates: usize,
    pub seed: u64,
    pub succeeded: usize,
    pub failed: usize,
    pub mu: ParameterStats,
    pub sigma: ParameterStats,
    pub u2: ParameterStats,
    pub xi: ParameterStats,
    pub d: f64,
    pub mean_iterations: f64,
    /// Wall-clock seconds per replicate, when the runner measured it.
    pub mean_seconds: Option<f64>,
    pub baselines: Option<BaselineComparison>,
}

fn method_stats(estimates: &[Option<TailEstimate>], xi: f64, beta: f64) -> Option<MethodStats> {
    let ok: Vec<TailEstimate> = estimates.iter().flatten().copied().collect();
    let xs: Vec<f64> = ok.iter().map(|e| e.xi).collect();
    let bs: Vec<f64> = ok.iter().map(|e| e.beta).collect();
    Some(MethodStats {
        xi: describe(&xs, xi).ok()?,
        beta: describe(&bs, beta).ok()?,
        failures: estimates.len() - ok.len(),
    })
}

/// Folds replicate outcomes, in the order given, into a report.
pub fn aggregate(cfg: &McConfig, outcomes: &[Result<ReplicateFit>]) -> Result<McReport> {
    let fits: Vec<&ReplicateFit> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let failed = outcomes.len() - fits.len();
    // more than 20% failures invalidates the run
    if failed * 5 > outcomes.len() || fits.len() < 2 {
        return Err(Error::TooManyFailures {
            failed,
            total: outcomes.len(),
        });
    }
    let column = |f: fn(&ModelParams) -> f64| -> Vec<f64> { fits.iter().map(|r| f(&r.theta)).collect() };
    let truth = cfg.theta;
    let mu = describe(&column(|t| t.mu), truth.mu)?;
    let sigma = describe(&column(|t| t.sigma), truth.sigma)?;
    let u2 = describe(&column(|t| t.u2), truth.u2)?;
    let xi = describe(&column(|t| t.xi), truth.xi)?;
    let d = fits.iter().map(|r| r.log_ratio_sum).sum::<f64>() / (fits.len() * cfg.l) as f64;
    let mean_iterations = fits.iter().map(|r| r.iterations as f64).sum::<f64>() / fits.len() as f64;

    let baselines = if cfg.baselines {
        let true_beta = truth.xi * truth.u2;
        let own: Vec<Option<TailEstimate>> = fits
            .iter()
            .map(|r| {
                Some(TailEstimate {
                    xi: r.theta.xi,
                    beta: r.theta.xi * r.theta.u2,
                })
            })
            .collect();
        let ml: Vec<Option<TailEstimate>> = fits.iter().map(|r| r.ml).collect();
        let pwm: Vec<Option<TailEstimate>> = fits.iter().map(|r| r.pwm).collect();
        Some(BaselineComparison {
            self_calibrated: method_stats(&own, truth.xi, true_beta).ok_or(Error::ZeroVariance)?,
            ml: method_stats(&ml, truth.xi, true_beta),
            pwm: method_stats(&pwm, truth.xi, true_beta),
        })
    } else {
        None
    };

    Ok(McReport {
        theta: truth,
        n: cfg.n,
        l: cfg.l,
        replicates: cfg.replicates,
        seed: cfg.seed,
        succeeded: fits.len(),
        failed,
        mu,
        sigma,
        u2,
        xi,
        d,
        mean_iterations,
        mean_seconds: None,
        baselines,
    })
}

/// Runs every replicate in index order on the current thread.
pub fn run_mc_serial(cfg: &McConfig) -> Result<McReport> {
    cfg.validate()?;
    let outcomes: Vec<Result<ReplicateFit>> = (0..cfg.replicates).map(|i| run_replicate(cfg, i)).collect();
    aggregate(cfg, &outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn symmetric_pair() {
        let s = parameter_stats(&[1.0, 3.0], 2.0).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.variance, 2.0);
        assert_eq!(s.mse, 1.0);
        assert_eq!(s.t, Some(0.0));
        assert_eq!(s.p_value, Some(1.0));
    }

    #[test]
    fn zero_variance() {
        assert_eq!(parameter_stats(&[2.0; 5], 2.0), Err(Error::ZeroVariance));
        let s = describe(&[2.0; 5], 2.0).unwrap();
        assert_eq!(s.mse, 0.0);
        assert_eq!(s.t, None);
    }

    #[test]
    fn identical_models_have_zero_d() {
        let theta = ModelParams::new(2.0, 1.0, 5.0, 0.5).unwrap();
        let sets = vec![vec![0.0, 3.0, 9.0], vec![4.0]];
        assert_eq!(d_metric(&sets, &theta, &[theta, theta]).unwrap(), 0.0);
    }

    #[test]
    fn streams_differ_and_repeat() {
        let theta = ModelParams::new(2.0, 1.0, 5.0, 0.5).unwrap();
        let cfg = McConfig::new(theta, 100, 3, 11);
        let (a, _) = replicate_samples(&cfg, 0).unwrap();
        let (b, _) = replicate_samples(&cfg, 1).unwrap();
        let (a2, _) = replicate_samples(&cfg, 0).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, a2);
    }

    #[test]
    fn too_many_failures() {
        let theta = ModelParams::new(2.0, 1.0, 5.0, 0.5).unwrap();
        let cfg = McConfig::new(theta, 100, 4, 0);
        let outcomes: Vec<Result<ReplicateFit>> = (0..4).map(|_| Err(Error::AllStepsFailed)).collect();
        assert_eq!(
            aggregate(&cfg, &outcomes),
            Err(Error::TooManyFailures { failed: 4, total: 4 })
        );
    }
}
