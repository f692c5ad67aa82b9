//! Two-component Gaussian/GPD model and its alternating fit.
//!
//! The Gaussian body and the GPD tail meet at `u` with a C1 junction, which
//! pins the GPD scale and shape to the body: `beta = 1/f(u)` and
//! `xi = -1 + (u - mu) beta / sigma^2`. Both components carry the same raw
//! weight, normalized by `1 / (1 + F(u))`.

use alloc::vec;
use alloc::vec::Vec;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ecdf::{mode_of_sorted, BandwidthRule, EmpiricalCdf};
use crate::lm::{self, LmOptions, LmProblem, Transform};
use crate::special::{gpd_pdf, gpd_quantile, gpd_sf, normal_cdf, normal_pdf, normal_quantile};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GgpdParams {
    pub mu: f64,
    pub sigma: f64,
    pub u: f64,
    pub beta: f64,
    pub xi: f64,
    pub weight: f64,
}

/// Derives the tail parameters and the shared weight from `(mu, sigma, u)`.
pub fn ggpd_derive(mu: f64, sigma: f64, u: f64) -> Result<GgpdParams> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParams("sigma must be positive"));
    }
    if !(mu.is_finite() && u.is_finite()) {
        return Err(Error::NonFinite);
    }
    let z = (u - mu) / sigma;
    let f_u = normal_pdf(z) / sigma;
    let beta = 1.0 / f_u;
    let xi = -1.0 + (u - mu) * beta / (sigma * sigma);
    if !(beta.is_finite() && xi.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(GgpdParams {
        mu,
        sigma,
        u,
        beta,
        xi,
        weight: 1.0 / (1.0 + normal_cdf(z)),
    })
}

impl GgpdParams {
    fn body_mass(&self) -> f64 {
        normal_cdf((self.u - self.mu) / self.sigma)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x <= self.u {
            self.weight * normal_pdf((x - self.mu) / self.sigma) / self.sigma
        } else {
            self.weight * gpd_pdf(x - self.u, self.xi, self.beta)
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.u {
            self.weight * normal_cdf((x - self.mu) / self.sigma)
        } else {
            1.0 - self.weight * gpd_sf(x - self.u, self.xi, self.beta)
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain("quantile needs 0 < p < 1"));
        }
        let split = self.weight * self.body_mass();
        if p <= split {
            Ok(self.mu + self.sigma * normal_quantile(p / self.weight)?)
        } else {
            let q = ((p - split) / self.weight).min(1.0);
            Ok(self.u + gpd_quantile(q, self.xi, self.beta))
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::EmptyData);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let p: f64 = rng.sample(Open01);
                self.quantile(p)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GgpdConfig {
    /// Stop once `|u_k - u_{k-1}|` falls below this value.
    pub epsilon: f64,
    pub k_max: usize,
    /// Initial junction; `None` uses the empirical quantile of order 0.375.
    pub u0: Option<f64>,
    pub lm: LmOptions,
}

impl Default for GgpdConfig {
    fn default() -> Self {
        GgpdConfig {
            epsilon: 1e-8,
            k_max: 1000,
            u0: None,
            lm: LmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GgpdFit {
    pub params: GgpdParams,
    pub iterations: usize,
    /// True when the junction moved less than epsilon in the last iteration.
    pub converged: bool,
    /// `u_0, u_1, ..., u_k`.
    pub u_trace: Vec<f64>,
}

/// Empirical cdf at the sorted observations; the fit target.
struct Target {
    points: Vec<f64>,
    values: Vec<f64>,
    min: f64,
    max: f64,
}

impl Target {
    fn new(ecdf: &EmpiricalCdf) -> Self {
        let points = ecdf.sorted().to_vec();
        let values = ecdf.eval_sorted(&points);
        Target {
            points,
            values,
            min: ecdf.min(),
            max: ecdf.max(),
        }
    }

    fn residuals(&self, mu: f64, sigma: f64, u: f64, out: &mut [f64]) -> bool {
        let Ok(model) = ggpd_derive(mu, sigma, u) else {
            return false;
        };
        for ((r, &x), &h) in out.iter_mut().zip(&self.points).zip(&self.values) {
            *r = model.cdf(x) - h;
        }
        true
    }
}

fn step_body(target: &Target, mu: f64, sigma: f64, u: f64, opts: &LmOptions) -> Result<(f64, f64)> {
    let mut problem = LmProblem::new(
        target.points.len(),
        vec![Transform::Identity, Transform::Log],
        |x: &[f64], r: &mut [f64]| target.residuals(x[0], x[1], u, r),
    )?;
    let res = lm::solve(&mut problem, &[mu, sigma], opts)?;
    Ok((res.solution[0], res.solution[1]))
}

fn step_junction(target: &Target, mu: f64, sigma: f64, u: f64, opts: &LmOptions) -> Result<f64> {
    let transform = Transform::Logistic {
        lower: target.min,
        upper: target.max,
    };
    let mut problem = LmProblem::new(target.points.len(), vec![transform], |x: &[f64], r: &mut [f64]| {
        target.residuals(mu, sigma, x[0], r)
    })?;
    let res = lm::solve(&mut problem, &[u], opts)?;
    Ok(res.solution[0])
}

fn check_data(data: &[f64]) -> Result<EmpiricalCdf> {
    if data.len() < 10 {
        return Err(Error::InsufficientData {
            needed: 10,
            got: data.len(),
        });
    }
    let ecdf = EmpiricalCdf::new(data)?;
    if !(ecdf.max() > ecdf.min()) {
        return Err(Error::DegenerateRange);
    }
    Ok(ecdf)
}

fn run(target: &Target, mut mu: f64, mut sigma: f64, u0: f64, cfg: &GgpdConfig) -> Result<GgpdFit> {
    if !(u0 > target.min && u0 < target.max) {
        return Err(Error::Domain("initial junction must lie inside the data range"));
    }
    let mut u = u0;
    let mut u_trace = vec![u0];
    let mut converged = false;
    for _ in 0..cfg.k_max {
        (mu, sigma) = step_body(target, mu, sigma, u, &cfg.lm)?;
        let next = step_junction(target, mu, sigma, u, &cfg.lm)?;
        u_trace.push(next);
        let moved = (next - u).abs();
        u = next;
        if moved < cfg.epsilon {
            converged = true;
            break;
        }
    }
    Ok(GgpdFit {
        params: ggpd_derive(mu, sigma, u)?,
        iterations: u_trace.len() - 1,
        converged,
        u_trace,
    })
}

fn initial_body(ecdf: &EmpiricalCdf) -> Result<(f64, f64)> {
    let mu = mode_of_sorted(ecdf.sorted(), BandwidthRule::FreedmanDiaconis);
    let mut sigma = (mu - ecdf.quantile(0.16)?).abs();
    if !(sigma > 0.0) {
        sigma = 1e-3 * (ecdf.max() - ecdf.min());
    }
    Ok((mu, sigma))
}

/// Alternates the body step `(mu, sigma)` and the junction step `u` until
/// the junction stops moving.
pub fn ggpd_fit(data: &[f64], cfg: &GgpdConfig) -> Result<GgpdFit> {
    let ecdf = check_data(data)?;
    let target = Target::new(&ecdf);
    let (mu, sigma) = initial_body(&ecdf)?;
    let u0 = match cfg.u0 {
        Some(u) => u,
        None => ecdf.quantile(0.375)?,
    };
    run(&target, mu, sigma, u0, cfg)
}

/// Junction sequences `u_0, phi(u_0), phi(phi(u_0)), ...` for each start.
pub fn fixed_point_trace(data: &[f64], u0_list: &[f64], cfg: &GgpdConfig) -> Result<Vec<Vec<f64>>> {
    let ecdf = check_data(data)?;
    let target = Target::new(&ecdf);
    let (mu, sigma) = initial_body(&ecdf)?;
    u0_list
        .iter()
        .map(|&u0| run(&target, mu, sigma, u0, cfg).map(|fit| fit.u_trace))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_at_the_mean() {
        let p = ggpd_derive(0.0, 1.0, 0.0).unwrap();
        assert!((p.beta - libm::sqrt(2.0 * core::f64::consts::PI)).abs() < 1e-12);
        assert_eq!(p.xi, -1.0);
        assert!((p.weight - 2.0 / 3.0).abs() < 1e-15);
        assert!(ggpd_derive(0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn derive_reference_laws() {
        let p = ggpd_derive(0.0, 1.0, 0.4354).unwrap();
        assert!((p.xi - 0.2).abs() < 1e-3, "{:?}", p);
        assert!((p.beta - 2.7558).abs() < 1e-3, "{:?}", p);
        let p = ggpd_derive(3.0, 2.0, 4.0443).unwrap();
        assert!((p.xi - 0.5).abs() < 1e-3, "{:?}", p);
        assert!((p.beta - 5.7454).abs() < 1e-3, "{:?}", p);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let p = ggpd_derive(3.0, 2.0, 4.0443).unwrap();
        for i in 1..200 {
            let q = i as f64 / 200.0;
            let x = p.quantile(q).unwrap();
            assert!((p.cdf(x) - q).abs() < 1e-12);
        }
        // continuity at the junction
        assert!((p.cdf(p.u) - p.cdf(p.u + 1e-12)).abs() < 1e-10);
        assert!((p.pdf(p.u) - p.pdf(p.u + 1e-12)).abs() < 1e-10);
    }

    #[test]
    fn noiseless_grid_recovers_junction() {
        let truth = ggpd_derive(0.0, 1.0, 0.4354).unwrap();
        let n = 40_000;
        let data: Vec<f64> = (0..n)
            .map(|i| truth.quantile((i as f64 + 0.5) / n as f64).unwrap())
            .collect();
        let fit = ggpd_fit(&data, &GgpdConfig::default()).unwrap();
        assert!((fit.params.u - truth.u).abs() < 1e-4, "{:?}", fit.params);
        assert!(fit.converged);
    }
}
