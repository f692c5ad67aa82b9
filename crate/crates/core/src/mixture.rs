//! Two-sided mixture of two hybrids glued at a junction (0 by default).
//!
//! The left hybrid is fitted to negated observations, so on the left of the
//! junction the mixture uses `h(-x; theta_left)`. Each hybrid is restricted
//! to its half-line and renormalized by its mass there, which makes the
//! mixture a proper density with `cdf(junction) = alpha1`. Mass at exactly
//! the junction belongs to the right component.

use alloc::vec::Vec;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{HybridModel, ModelParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub theta_left: ModelParams,
    pub theta_right: ModelParams,
    pub alpha1: f64,
    pub alpha2: f64,
    pub junction: f64,
}

/// Weights solving `alpha1 + alpha2 = 1` and
/// `alpha1 * left_density = alpha2 * right_density`.
pub fn junction_weights(left_density: f64, right_density: f64) -> Result<(f64, f64)> {
    let total = left_density + right_density;
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateJunction);
    }
    let alpha1 = right_density / total;
    Ok((alpha1, 1.0 - alpha1))
}

/// Mixture weights for a junction at 0.
pub fn mixture_weights(theta_left: &ModelParams, theta_right: &ModelParams) -> Result<(f64, f64)> {
    mixture_weights_at(theta_left, theta_right, 0.0)
}

pub fn mixture_weights_at(theta_left: &ModelParams, theta_right: &ModelParams, junction: f64) -> Result<(f64, f64)> {
    let halves = Halves::new(theta_left, theta_right, junction)?;
    junction_weights(halves.left_junction_density(), halves.right_junction_density())
}

struct Halves {
    left: HybridModel,
    right: HybridModel,
    junction: f64,
    left_mass: f64,
    right_mass: f64,
}

impl Halves {
    fn new(theta_left: &ModelParams, theta_right: &ModelParams, junction: f64) -> Result<Self> {
        let left = HybridModel::new(*theta_left)?;
        let right = HybridModel::new(*theta_right)?;
        let left_mass = left.sf(-junction);
        let right_mass = right.sf(junction);
        if !(left_mass > 0.0 && right_mass > 0.0) {
            return Err(Error::DegenerateJunction);
        }
        Ok(Halves {
            left,
            right,
            junction,
            left_mass,
            right_mass,
        })
    }

    fn left_junction_density(&self) -> f64 {
        self.left.pdf(-self.junction) / self.left_mass
    }

    fn right_junction_density(&self) -> f64 {
        self.right.pdf(self.junction) / self.right_mass
    }
}

impl MixtureModel {
    /// Mixture glued at 0 with weights from the junction continuity.
    pub fn new(theta_left: ModelParams, theta_right: ModelParams) -> Result<Self> {
        Self::with_junction(theta_left, theta_right, 0.0)
    }

    pub fn with_junction(theta_left: ModelParams, theta_right: ModelParams, junction: f64) -> Result<Self> {
        if !junction.is_finite() {
            return Err(Error::InvalidParams("junction must be finite"));
        }
        let (alpha1, alpha2) = mixture_weights_at(&theta_left, &theta_right, junction)?;
        Ok(MixtureModel {
            theta_left,
            theta_right,
            alpha1,
            alpha2,
            junction,
        })
    }

    fn halves(&self) -> Result<Halves> {
        Halves::new(&self.theta_left, &self.theta_right, self.junction)
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        let h = self.halves()?;
        Ok(if x < self.junction {
            self.alpha1 * h.left.pdf(-x) / h.left_mass
        } else {
            self.alpha2 * h.right.pdf(x) / h.right_mass
        })
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        let h = self.halves()?;
        Ok(if x < self.junction {
            self.alpha1 * h.left.sf(-x) / h.left_mass
        } else {
            1.0 - self.alpha2 * h.right.sf(x) / h.right_mass
        })
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::EmptyData);
        }
        let h = self.halves()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let side: f64 = rng.sample(Open01);
            let u: f64 = rng.sample(Open01);
            let x = if side < self.alpha1 {
                let p = 1.0 - u * h.left_mass;
                -h.left.quantile(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))?
            } else {
                let p = 1.0 - u * h.right_mass;
                h.right.quantile(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))?
            };
            out.push(x);
        }
        Ok(out)
    }
}

pub fn mixture_pdf(x: f64, mix: &MixtureModel) -> Result<f64> {
    mix.pdf(x)
}

pub fn mixture_cdf(x: f64, mix: &MixtureModel) -> Result<f64> {
    mix.cdf(x)
}
