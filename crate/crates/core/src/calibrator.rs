//! Self-calibrating fit of the hybrid model to a sample.
//!
//! The model cdf is matched to the empirical cdf on a logarithmic synthetic
//! grid. The body/bridge/threshold triple `(mu, sigma, u2)` and the tail
//! index `xi` are estimated alternately, each by Levenberg-Marquardt, until
//! both the full-grid and the upper-tail mean squared errors drop below
//! `epsilon` or the iteration cap is hit.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::ecdf::{mode_of_sorted, BandwidthRule, EmpiricalCdf, SyntheticGrid};
use crate::lm::{self, LmOptions, LmProblem, Transform};
use crate::{DerivedParams, Error, HybridModel, ModelParams, Result};

/// Fewest observations accepted by [`fit`].
pub const MIN_SAMPLE: usize = 50;

/// Grid size used when `FitConfig::m` is unset: `max(n, DEFAULT_MIN_GRID)`.
pub const DEFAULT_MIN_GRID: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Tolerance on both the full-grid and the tail mean squared error.
    pub epsilon: f64,
    /// Order of the model quantile above which the tail error is measured.
    pub alpha: f64,
    /// Order of the empirical quantile used as the initial tail threshold.
    pub rho: f64,
    pub k_max: usize,
    /// Synthetic grid size; `None` means `max(n, 10_000)`.
    pub m: Option<usize>,
    /// Optional extra stop when `|xi_k - xi_{k-1}|` falls below this value.
    pub xi_stagnation: Option<f64>,
    pub mode_rule: BandwidthRule,
    /// Seed recorded with the fit; the fit itself draws no random numbers.
    pub seed: u64,
    pub lm: LmOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            epsilon: 1e-10,
            alpha: 0.8,
            rho: 0.9,
            k_max: 1000,
            m: None,
            xi_stagnation: None,
            mode_rule: BandwidthRule::FreedmanDiaconis,
            seed: 0,
            lm: LmOptions::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.5 && self.alpha < 1.0) {
            return Err(Error::InvalidParams("alpha must lie in (0.5, 1)"));
        }
        if !(self.rho > 0.5 && self.rho < 1.0) {
            return Err(Error::InvalidParams("rho must lie in (0.5, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParams("epsilon must be positive"));
        }
        if self.k_max == 0 {
            return Err(Error::InvalidParams("k_max must be at least 1"));
        }
        if matches!(self.m, Some(m) if m < 2) {
            return Err(Error::InvalidParams("grid size must be at least 2"));
        }
        if matches!(self.xi_stagnation, Some(e) if !(e > 0.0)) {
            return Err(Error::InvalidParams("xi stagnation tolerance must be positive"));
        }
        self.lm.validate()
    }

    pub fn grid_size(&self, n: usize) -> usize {
        self.m.unwrap_or(n.max(DEFAULT_MIN_GRID))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// Full-grid and tail errors both below epsilon.
    Converged,
    /// Iteration cap reached.
    MaxIterations,
    /// Change in xi below the configured stagnation tolerance.
    XiStagnation,
    /// An iteration left every parameter bit-for-bit unchanged, so all later
    /// iterations would too.
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub theta: ModelParams,
    pub full_mse: f64,
    pub tail_mse: f64,
    /// Grid sum of squared errors before the p-step, after it, and after the xi-step.
    pub sse_start: f64,
    pub sse_after_p: f64,
    pub sse_after_xi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta: ModelParams,
    pub derived: DerivedParams,
    pub initial: ModelParams,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub full_mse: f64,
    /// Infinite when no grid point lies above the model quantile of order alpha.
    pub tail_mse: f64,
    pub grid_size: usize,
    pub trace: Vec<TraceEntry>,
}

/// Empirical cdf values on the synthetic grid; the target of every step.
#[derive(Debug, Clone)]
pub struct Objective {
    grid: SyntheticGrid,
    target: Vec<f64>,
}

impl Objective {
    pub fn new(ecdf: &EmpiricalCdf, grid: SyntheticGrid) -> Self {
        let target = ecdf.eval_sorted(&grid.points);
        Objective { grid, target }
    }

    pub fn from_data(data: &[f64], m: usize) -> Result<Self> {
        let ecdf = EmpiricalCdf::new(data)?;
        let grid = SyntheticGrid::new(ecdf.min(), ecdf.max(), m)?;
        Ok(Self::new(&ecdf, grid))
    }

    pub fn grid(&self) -> &SyntheticGrid {
        &self.grid
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    fn span(&self) -> f64 {
        self.grid.max - self.grid.min
    }

    /// Fills `out` with model minus empirical cdf; `false` if `theta` is infeasible.
    pub fn residuals(&self, theta: &ModelParams, out: &mut [f64]) -> bool {
        let Ok(model) = HybridModel::new(*theta) else {
            return false;
        };
        for ((r, &y), &h) in out.iter_mut().zip(&self.grid.points).zip(&self.target) {
            *r = model.cdf(y) - h;
        }
        true
    }

    pub fn sse(&self, theta: &ModelParams) -> Result<f64> {
        let model = HybridModel::new(*theta)?;
        Ok(self
            .grid
            .points
            .iter()
            .zip(&self.target)
            .map(|(&y, &h)| {
                let d = model.cdf(y) - h;
                d * d
            })
            .sum())
    }

    pub fn full_mse(&self, theta: &ModelParams) -> Result<f64> {
        Ok(self.sse(theta)? / self.target.len() as f64)
    }

    /// Mean squared error over the grid points above the model quantile of order `alpha`.
    pub fn tail_mse(&self, theta: &ModelParams, alpha: f64) -> Result<f64> {
        let model = HybridModel::new(*theta)?;
        let start = if alpha <= 0.0 {
            0
        } else {
            let q = model.quantile(alpha)?;
            self.grid.points.partition_point(|&y| y <= q)
        };
        let count = self.target.len() - start;
        if count == 0 {
            return Err(Error::NoTailPoints);
        }
        let sum: f64 = self.grid.points[start..]
            .iter()
            .zip(&self.target[start..])
            .map(|(&y, &h)| {
                let d = model.cdf(y) - h;
                d * d
            })
            .sum();
        Ok(sum / count as f64)
    }
}

/// Tail mean squared error of `theta` against `ecdf` on `grid`.
pub fn tail_mse(theta: &ModelParams, ecdf: &EmpiricalCdf, grid: &SyntheticGrid, alpha: f64) -> Result<f64> {
    Objective::new(ecdf, grid.clone()).tail_mse(theta, alpha)
}

/// Tail indices tried before the xi refinement in [`initialize`].
fn xi_candidates(xi_min: f64) -> Vec<f64> {
    let mut c: Vec<f64> = (0..40).map(|i| 0.02 * libm::pow(500.0, i as f64 / 39.0)).collect();
    if xi_min > 0.0 && xi_min.is_finite() {
        c.extend([1.0001, 1.01, 1.1, 1.5, 2.0].iter().map(|f| xi_min * f));
    }
    c
}

/// Starting point: mode, mode-to-16%-quantile distance, empirical quantile
/// of order `rho`, and the best tail index for that body.
pub fn initialize(ecdf: &EmpiricalCdf, objective: &Objective, cfg: &FitConfig) -> Result<ModelParams> {
    let span = ecdf.max() - ecdf.min();
    if !(span > 0.0) {
        return Err(Error::DegenerateRange);
    }
    let mu = mode_of_sorted(ecdf.sorted(), cfg.mode_rule);
    let mut sigma = (mu - ecdf.quantile(0.16)?).abs();
    if !(sigma > 0.0) {
        sigma = 1e-3 * span;
    }
    let mut u2 = ecdf.quantile(cfg.rho)?;
    if !(u2 > 0.0) {
        return Err(Error::InvalidParams("initial tail threshold must be positive"));
    }
    // u2 (u2 - mu) > sigma^2 is needed for any xi > 0 to keep u1 below u2
    if !(u2 * (u2 - mu) > sigma * sigma * 1.001) {
        u2 = ModelParams::collapse_threshold(mu, sigma, 10.0) * (1.0 + 1e-6);
        if u2 >= ecdf.max() {
            return Err(Error::NoValidCandidate);
        }
    }
    let k = u2 * (u2 - mu) / (sigma * sigma);
    let xi_min = 1.0 / (k - 1.0);

    let mut best: Option<(f64, f64)> = None;
    for xi in xi_candidates(xi_min) {
        let theta = ModelParams { mu, sigma, u2, xi };
        if let Ok(sse) = objective.sse(&theta) {
            if sse.is_finite() && best.is_none_or(|(_, b)| sse < b) {
                best = Some((xi, sse));
            }
        }
    }
    let (xi, _) = best.ok_or(Error::NoValidCandidate)?;
    let coarse = ModelParams { mu, sigma, u2, xi };
    Ok(step_xi(objective, &coarse, &cfg.lm).unwrap_or(coarse))
}

/// Least-squares update of `(mu, sigma, u2)` with `xi` held fixed.
pub fn step_p(objective: &Objective, theta: &ModelParams, opts: &LmOptions) -> Result<ModelParams> {
    let xi = theta.xi;
    let tiny = 1e-9 * objective.span();
    let lower = ModelParams::collapse_threshold(theta.mu, theta.sigma, xi).min(theta.u2) - tiny;
    let upper = objective.grid.max.max(theta.u2 + tiny);
    let transforms = vec![
        Transform::Identity,
        Transform::Log,
        Transform::Logistic { lower, upper },
    ];
    let mut problem = LmProblem::new(objective.target.len(), transforms, |x: &[f64], r: &mut [f64]| {
        let candidate = ModelParams {
            mu: x[0],
            sigma: x[1],
            u2: x[2],
            xi,
        };
        objective.residuals(&candidate, r)
    })?;
    let res = lm::solve(&mut problem, &[theta.mu, theta.sigma, theta.u2], opts)?;
    Ok(ModelParams {
        mu: res.solution[0],
        sigma: res.solution[1],
        u2: res.solution[2],
        xi,
    })
}

/// Least-squares update of `xi` with `(mu, sigma, u2)` held fixed.
pub fn step_xi(objective: &Objective, theta: &ModelParams, opts: &LmOptions) -> Result<ModelParams> {
    let base = *theta;
    let mut problem = LmProblem::new(
        objective.target.len(),
        vec![Transform::Log],
        |x: &[f64], r: &mut [f64]| objective.residuals(&ModelParams { xi: x[0], ..base }, r),
    )?;
    let res = lm::solve(&mut problem, &[theta.xi], opts)?;
    Ok(ModelParams {
        xi: res.solution[0],
        ..base
    })
}

/// Runs the alternating fit from [`initialize`].
pub fn fit(data: &[f64], cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    if data.len() < MIN_SAMPLE {
        return Err(Error::InsufficientData {
            needed: MIN_SAMPLE,
            got: data.len(),
        });
    }
    let ecdf = EmpiricalCdf::new(data)?;
    let m = cfg.grid_size(data.len());
    let grid = SyntheticGrid::new(ecdf.min(), ecdf.max(), m)?;
    let objective = Objective::new(&ecdf, grid);
    let initial = initialize(&ecdf, &objective, cfg)?;
    fit_from(&objective, initial, cfg)
}

/// Runs the alternating fit from a caller-supplied feasible start.
pub fn fit_from(objective: &Objective, initial: ModelParams, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let mut theta = initial;
    let mut sse = objective.sse(&theta)?;
    let mut trace = Vec::new();
    let mut stop_reason = StopReason::MaxIterations;
    let mut full_mse = sse / objective.target.len() as f64;
    let mut tail = objective.tail_mse(&theta, cfg.alpha).unwrap_or(f64::INFINITY);

    for k in 1..=cfg.k_max {
        let previous = theta;
        let sse_start = sse;
        let p_step = step_p(objective, &theta, &cfg.lm);
        if let Ok(next) = p_step {
            theta = next;
            sse = objective.sse(&theta)?;
        }
        let sse_after_p = sse;
        let xi_step = step_xi(objective, &theta, &cfg.lm);
        if let Ok(next) = xi_step {
            theta = next;
            sse = objective.sse(&theta)?;
        }
        if k == 1 && p_step.is_err() && xi_step.is_err() {
            return Err(Error::AllStepsFailed);
        }
        full_mse = sse / objective.target.len() as f64;
        tail = objective.tail_mse(&theta, cfg.alpha).unwrap_or(f64::INFINITY);
        trace.push(TraceEntry {
            iteration: k,
            theta,
            full_mse,
            tail_mse: tail,
            sse_start,
            sse_after_p,
            sse_after_xi: sse,
        });

        if full_mse < cfg.epsilon && tail < cfg.epsilon {
            stop_reason = StopReason::Converged;
            break;
        }
        if let Some(tol) = cfg.xi_stagnation {
            if (theta.xi - previous.xi).abs() < tol {
                stop_reason = StopReason::XiStagnation;
                break;
            }
        }
        if theta == previous {
            stop_reason = StopReason::FixedPoint;
            break;
        }
    }

    let derived = *HybridModel::new(theta)?.derived();
    Ok(FitResult {
        theta,
        derived,
        initial,
        iterations: trace.len(),
        stop_reason,
        full_mse,
        tail_mse: tail,
        grid_size: objective.target.len(),
        trace,
    })
}
