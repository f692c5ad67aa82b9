//! The Gaussian / exponential / GPD hybrid distribution.
//!
//! A Gaussian body on `(-inf, u1]`, an exponential bridge on `[u1, u2]` and
//! a GPD tail on `[u2, inf)`, glued with C¹ smoothness. Together with unit
//! mass and `beta = xi * u2` these constraints leave four free parameters
//! `[mu, sigma, u2, xi]`.
//!
//! Internally everything is expressed relative to the bridge weight
//! `w2 = gamma2 * exp(-lambda * u1)`, which stays O(1) whatever the data
//! scale, while the raw `gamma` weights can overflow for large `lambda * u1`.

use alloc::vec::Vec;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::special::{gpd_pdf, gpd_quantile, gpd_sf, normal_cdf, normal_pdf, normal_quantile};
use crate::{Error, Result};

/// Free parameters `[mu, sigma, u2, xi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub mu: f64,
    pub sigma: f64,
    pub u2: f64,
    pub xi: f64,
}

impl ModelParams {
    pub fn new(mu: f64, sigma: f64, u2: f64, xi: f64) -> Result<Self> {
        let p = ModelParams { mu, sigma, u2, xi };
        p.validate()?;
        Ok(p)
    }

    pub fn from_array(a: [f64; 4]) -> Result<Self> {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.mu, self.sigma, self.u2, self.xi]
    }

    /// Checks the sign constraints (not the junction ordering).
    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(Error::InvalidParams("mu must be finite"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParams("sigma must be positive"));
        }
        if !(self.u2 > 0.0 && self.u2.is_finite()) {
            return Err(Error::InvalidParams("u2 must be positive"));
        }
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(Error::InvalidParams("xi must be positive"));
        }
        Ok(())
    }

    /// Smallest tail threshold for which `u1 <= u2` with the other three
    /// parameters held fixed. At that value the bridge has zero width.
    pub fn collapse_threshold(mu: f64, sigma: f64, xi: f64) -> f64 {
        let c = (1.0 + xi) * sigma * sigma / xi;
        0.5 * (mu + libm::sqrt(mu * mu + 4.0 * c))
    }
}

/// The six quantities forced by the constraint system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub beta: f64,
    pub lambda: f64,
    pub u1: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
}

/// A validated hybrid distribution ready for evaluation.
#[derive(Debug, Clone, Copy)]
pub struct HybridModel {
    params: ModelParams,
    derived: DerivedParams,
    // lambda * sigma, the standardized position of u1
    z1: f64,
    // 1 / phi(z1)
    inv_phi_z1: f64,
    w2: f64,
    p1: f64,
    p2: f64,
    cdf_z1: f64,
}

impl HybridModel {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate()?;
        let ModelParams { mu, sigma, u2, xi } = params;
        let beta = xi * u2;
        let lambda = (1.0 + xi) / beta;
        let u1 = mu + lambda * sigma * sigma;
        if !(u1 <= u2) {
            return Err(Error::InvalidGeometry { u1, u2 });
        }
        let z1 = lambda * sigma;
        let phi_z1 = normal_pdf(z1);
        let cdf_z1 = normal_cdf(z1);
        let inv_phi_z1 = 1.0 / phi_z1;
        let decay = libm::exp(-lambda * (u2 - u1));
        let w2 = 1.0 / (xi * decay + 1.0 + z1 * cdf_z1 * inv_phi_z1);
        let gamma3 = (1.0 + xi) * w2 * decay;
        // a bridge lighter than one ulp of probability can round p1 past 1 - gamma3
        let p1 = (w2 * z1 * cdf_z1 * inv_phi_z1).min(1.0 - gamma3);
        let gamma2 = w2 * libm::exp(lambda * u1);
        let gamma1 = w2 * lambda * sigma * inv_phi_z1;
        if !(w2.is_finite() && p1.is_finite() && gamma1.is_finite() && gamma2.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(HybridModel {
            params,
            derived: DerivedParams {
                beta,
                lambda,
                u1,
                gamma1,
                gamma2,
                gamma3,
            },
            z1,
            inv_phi_z1,
            w2,
            p1,
            p2: 1.0 - gamma3,
            cdf_z1,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn derived(&self) -> &DerivedParams {
        &self.derived
    }

    /// Probability mass below the first junction, `gamma1 * F(u1)`.
    pub fn p1(&self) -> f64 {
        self.p1
    }

    /// Probability mass below the tail threshold, `1 - gamma3`.
    pub fn p2(&self) -> f64 {
        self.p2
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let ModelParams { mu, sigma, u2, xi } = self.params;
        let d = &self.derived;
        if x <= d.u1 {
            let z = (x - mu) / sigma;
            self.w2 * d.lambda * libm::exp(0.5 * (self.z1 * self.z1 - z * z))
        } else if x <= u2 {
            self.w2 * d.lambda * libm::exp(-d.lambda * (x - d.u1))
        } else {
            d.gamma3 * gpd_pdf(x - u2, xi, d.beta)
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let ModelParams { mu, sigma, u2, xi } = self.params;
        let d = &self.derived;
        if x <= d.u1 {
            (self.w2 * self.z1 * normal_cdf((x - mu) / sigma) * self.inv_phi_z1).min(self.p1)
        } else if x <= u2 {
            self.p1 - self.w2 * libm::expm1(-d.lambda * (x - d.u1))
        } else {
            1.0 - d.gamma3 * gpd_sf(x - u2, xi, d.beta)
        }
    }

    /// Upper-tail probability `1 - H(x)`, accurate far in the tail.
    pub fn sf(&self, x: f64) -> f64 {
        if x > self.params.u2 {
            self.derived.gamma3 * gpd_sf(x - self.params.u2, self.params.xi, self.derived.beta)
        } else {
            1.0 - self.cdf(x)
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain("quantile needs 0 < p < 1"));
        }
        let ModelParams { mu, sigma, u2, xi } = self.params;
        let d = &self.derived;
        if p <= self.p1 {
            let target = (p / self.p1) * self.cdf_z1;
            Ok(mu + sigma * normal_quantile(target)?)
        } else if p < self.p2 {
            Ok(d.u1 - libm::log1p(-(p - self.p1) / self.w2) / d.lambda)
        } else if p == self.p2 {
            Ok(u2)
        } else {
            // conditional exceedance probability (1 - p) / gamma3 inverted in the GPD
            let q = 1.0 - (1.0 - p) / d.gamma3;
            Ok(u2 + gpd_quantile(q.max(0.0), xi, d.beta))
        }
    }

    /// Inverse-transform draws using the supplied generator.
    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let u: f64 = rng.sample(Open01);
                // u is strictly inside (0, 1), so the quantile cannot fail
                self.quantile(u).unwrap_or(self.params.u2)
            })
            .collect()
    }
}

pub fn derive_params(free: &ModelParams) -> Result<DerivedParams> {
    Ok(*HybridModel::new(*free)?.derived())
}

pub fn pdf(x: f64, free: &ModelParams) -> Result<f64> {
    Ok(HybridModel::new(*free)?.pdf(x))
}

pub fn cdf(x: f64, free: &ModelParams) -> Result<f64> {
    Ok(HybridModel::new(*free)?.cdf(x))
}

pub fn quantile(p: f64, free: &ModelParams) -> Result<f64> {
    HybridModel::new(*free)?.quantile(p)
}

/// `n` seeded draws (ChaCha8 stream) from the hybrid law.
pub fn sample(n: usize, free: &ModelParams, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::EmptyData);
    }
    let model = HybridModel::new(*free)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(model.sample_with(n, &mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1() -> ModelParams {
        ModelParams::new(2.0, 1.0, 5.0, 0.5).unwrap()
    }

    #[test]
    fn constraint_algebra_table1() {
        let d = derive_params(&table1()).unwrap();
        assert_eq!(d.beta, 2.5);
        assert!((d.lambda - 0.6).abs() < 1e-15);
        assert!((d.u1 - 2.6).abs() < 1e-15);
        let h = cdf(5.0, &table1()).unwrap();
        assert!((h - 0.8534).abs() < 1e-4, "H(5) = {h}");
    }

    #[test]
    fn constraint_algebra_table6() {
        let p = ModelParams::new(1.0, 1.0, 12.0, 0.5).unwrap();
        let d = derive_params(&p).unwrap();
        assert!((d.lambda - 0.25).abs() < 1e-15);
        assert!((d.u1 - 1.25).abs() < 1e-15);
        assert!((cdf(12.0, &p).unwrap() - 0.9281).abs() < 1e-4);
    }

    #[test]
    fn invalid_geometry_is_rejected() {
        // lambda = 1.2 / 0.1, u1 = 0 + 12 > u2
        let p = ModelParams::new(0.0, 1.0, 1.0, 0.1).unwrap();
        assert!(matches!(derive_params(&p), Err(Error::InvalidGeometry { .. })));
    }

    #[test]
    fn sign_constraints() {
        assert!(ModelParams::new(0.0, 0.0, 1.0, 0.5).is_err());
        assert!(ModelParams::new(0.0, 1.0, -1.0, 0.5).is_err());
        assert!(ModelParams::new(0.0, 1.0, 1.0, 0.0).is_err());
        assert!(ModelParams::new(f64::NAN, 1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn weights_normalize() {
        let m = HybridModel::new(table1()).unwrap();
        let d = m.derived();
        let u1 = d.u1;
        let total = d.gamma1 * normal_cdf(u1 - 2.0)
            + d.gamma2 * (libm::exp(-d.lambda * u1) - libm::exp(-d.lambda * 5.0))
            + d.gamma3;
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn branches_agree_at_u1() {
        let m = HybridModel::new(table1()).unwrap();
        let u1 = m.derived().u1;
        let branch2 = m.p1() - m.w2 * libm::expm1(-m.derived().lambda * (u1 - u1));
        assert!((m.cdf(u1) - branch2).abs() < 1e-12);
    }

    #[test]
    fn quantile_at_p2_is_threshold() {
        let m = HybridModel::new(table1()).unwrap();
        assert_eq!(m.quantile(m.p2()).unwrap(), 5.0);
        // 0.8534 is the 4-digit rounding of H(5) = 0.853461; the density at
        // u2 is 0.0586, so the rounding alone moves the quantile by 1.04e-3
        assert!((m.quantile(0.8534).unwrap() - 5.0).abs() < 1.1e-3);
        let exact = m.cdf(5.0);
        assert!((m.quantile(exact).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_domain() {
        let m = HybridModel::new(table1()).unwrap();
        assert!(m.quantile(0.0).is_err());
        assert!(m.quantile(1.0).is_err());
        assert!(m.quantile(f64::NAN).is_err());
    }

    #[test]
    fn sample_is_reproducible() {
        assert!(sample(0, &table1(), 1).is_err());
        let a = sample(1, &table1(), 42).unwrap();
        let b = sample(1, &table1(), 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample(1, &table1(), 43).unwrap());
    }
}
