//! Classical peaks-over-threshold estimators and a tail-MSE threshold scan.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::ecdf::quantile_index;
use crate::special::gpd_sf;
use crate::{Error, Result};

/// Fewest exceedances a candidate threshold needs in [`select_threshold`].
pub const MIN_EXCEEDANCES: usize = 30;

/// Bounds of the tail-index search in [`mle_gpd`].
pub const ML_XI_RANGE: (f64, f64) = (-0.99, 5.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailMethod {
    /// PWM fit of the exceedances over a scanned threshold.
    MepPwm,
    Hill,
    Qq,
    /// Maximum likelihood fit of the exceedances.
    Ml,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub method: TailMethod,
    pub threshold: f64,
    pub threshold_order: f64,
    pub n_exceedances: usize,
    pub xi: f64,
    pub beta: f64,
    pub tail_mse: f64,
}

fn sorted_copy(data: &[f64]) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `(u, mean of x - u over x > u)` for every distinct order statistic below the maximum.
pub fn mean_excess_curve(data: &[f64]) -> Result<Vec<(f64, f64)>> {
    let sorted = sorted_copy(data)?;
    let n = sorted.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let mut curve = Vec::new();
    let mut tail_sum = 0.0;
    let mut i = n;
    // walk down from the top, keeping the sum of everything above the current value
    while i > 0 {
        let u = sorted[i - 1];
        let mut j = i;
        while j > 0 && sorted[j - 1] == u {
            j -= 1;
        }
        let above = n - i;
        if above > 0 {
            curve.push((u, tail_sum / above as f64 - u));
        }
        for x in &sorted[j..i] {
            tail_sum += x;
        }
        i = j;
    }
    curve.reverse();
    Ok(curve)
}

/// Default number of upper order statistics, `floor(sqrt(n))`.
pub fn default_k(n: usize) -> usize {
    libm::floor(libm::sqrt(n as f64)) as usize
}

/// Sorted data with `k` checked against `2 <= k < n` and `X_(n-k) > 0`.
fn upper_order_statistics(data: &[f64], k: usize) -> Result<Vec<f64>> {
    let sorted = sorted_copy(data)?;
    let n = sorted.len();
    if k < 2 || k >= n {
        return Err(Error::InsufficientData {
            needed: k.max(2) + 1,
            got: n,
        });
    }
    if !(sorted[n - k - 1] > 0.0) {
        return Err(Error::NonPositiveThresholdStatistic);
    }
    Ok(sorted)
}

/// Hill estimator from the `k` largest observations.
pub fn hill_estimator(data: &[f64], k: usize) -> Result<f64> {
    let sorted = upper_order_statistics(data, k)?;
    Ok(hill_sorted(&sorted, k))
}

fn hill_sorted(sorted: &[f64], k: usize) -> f64 {
    let n = sorted.len();
    let log_ref = libm::log(sorted[n - k - 1]);
    sorted[n - k..].iter().map(|&x| libm::log(x) - log_ref).sum::<f64>() / k as f64
}

/// Least-squares slope of the Pareto quantile plot of the `k` largest observations.
pub fn qq_estimator(data: &[f64], k: usize) -> Result<f64> {
    let sorted = upper_order_statistics(data, k)?;
    Ok(qq_sorted(&sorted, k))
}

fn qq_sorted(sorted: &[f64], k: usize) -> f64 {
    let n = sorted.len();
    let kf = k as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 1..=k {
        let x = -libm::log(i as f64 / (kf + 1.0));
        let y = libm::log(sorted[n - i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    (kf * sxy - sx * sy) / (kf * sxx - sx * sx)
}

fn check_excesses(excesses: &[f64]) -> Result<Vec<f64>> {
    let sorted = sorted_copy(excesses)?;
    if sorted.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: sorted.len(),
        });
    }
    if sorted[0] < 0.0 {
        return Err(Error::Domain("excesses must be nonnegative"));
    }
    Ok(sorted)
}

/// GPD fit by probability-weighted moments with plotting positions `(i - 0.35)/n`.
pub fn pwm_gpd(excesses: &[f64]) -> Result<(f64, f64)> {
    let sorted = check_excesses(excesses)?;
    let n = sorted.len() as f64;
    let a0 = sorted.iter().sum::<f64>() / n;
    let a1 = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| (1.0 - (i as f64 + 0.65) / n) * x)
        .sum::<f64>()
        / n;
    pwm_from_moments(a0, a1)
}

/// `(xi, beta)` from the first two probability-weighted moments.
pub fn pwm_from_moments(a0: f64, a1: f64) -> Result<(f64, f64)> {
    let d = a0 - 2.0 * a1;
    if !(d > 0.0) {
        return Err(Error::DegenerateMoments);
    }
    let xi = 2.0 - a0 / d;
    let beta = 2.0 * a0 * a1 / d;
    if !(xi < 1.0 && beta > 0.0 && beta.is_finite()) {
        return Err(Error::DegenerateMoments);
    }
    Ok((xi, beta))
}

/// Profile likelihood in `t = xi / beta`: returns `(xi(t), loglik(t) / n)`.
fn profile(sorted: &[f64], mean: f64, t: f64) -> (f64, f64) {
    let n = sorted.len() as f64;
    if t.abs() * sorted[sorted.len() - 1] < 1e-12 {
        // exponential limit: xi -> 0, beta -> mean
        let xi = t * mean;
        return (xi, -(1.0 + libm::log(mean)));
    }
    let xi = sorted.iter().map(|&x| libm::log1p(t * x)).sum::<f64>() / n;
    (xi, -(1.0 + libm::log(xi / t) + xi))
}

/// Solves `xi(t) = target` for `t` in `(lo, hi)`, with `xi` increasing in `t`.
fn invert_profile(sorted: &[f64], mean: f64, target: f64, mut lo: f64, mut hi: f64, iterations: usize) -> f64 {
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if profile(sorted, mean, mid).0 < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// GPD maximum likelihood through the one-dimensional profile in `xi / beta`.
///
/// A coarse scan uniform in `xi` over [`ML_XI_RANGE`] brackets the maximum,
/// then golden-section search refines it.
pub fn mle_gpd(excesses: &[f64]) -> Result<(f64, f64)> {
    let sorted = check_excesses(excesses)?;
    let x_max = sorted[sorted.len() - 1];
    if !(x_max > 0.0) {
        return Err(Error::DegenerateMoments);
    }
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    let (xi_lo, xi_hi) = ML_XI_RANGE;

    // Heavy tails can leave xi_lo unreachable; stay just inside the pole.
    let t_floor = -(1.0 - 1e-12) / x_max;
    let mut t_ceil = 1.0 / mean;
    while profile(&sorted, mean, t_ceil).0 < xi_hi {
        t_ceil *= 2.0;
        if !t_ceil.is_finite() {
            return Err(Error::NonFinite);
        }
    }
    let t_lo = invert_profile(&sorted, mean, xi_lo, t_floor, 0.0, 200);
    let t_hi = invert_profile(&sorted, mean, xi_hi, 0.0, t_ceil, 200);

    const SCAN: usize = 64;
    let mut ts = Vec::with_capacity(SCAN + 1);
    ts.push(t_lo);
    for i in 1..SCAN {
        let target = xi_lo + (xi_hi - xi_lo) * i as f64 / SCAN as f64;
        let (a, b) = if target < 0.0 { (t_lo, 0.0) } else { (0.0, t_hi) };
        ts.push(invert_profile(&sorted, mean, target, a, b, 30));
    }
    ts.push(t_hi);
    let values: Vec<f64> = ts.iter().map(|&t| profile(&sorted, mean, t).1).collect();
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite);
        }
        if *v > values[best] {
            best = i;
        }
    }
    if best == 0 || best == SCAN {
        return Err(Error::NoInteriorMaximum);
    }

    let mut a = ts[best - 1];
    let mut b = ts[best + 1];
    let g = 0.5 * (libm::sqrt(5.0) - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = profile(&sorted, mean, c).1;
    let mut fd = profile(&sorted, mean, d).1;
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (a.abs() + b.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = profile(&sorted, mean, c).1;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = profile(&sorted, mean, d).1;
        }
    }
    let t = 0.5 * (a + b);
    let (xi, _) = profile(&sorted, mean, t);
    let beta = if t.abs() * x_max < 1e-12 { mean } else { xi / t };
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok((xi, beta))
}

/// Mean of `(G(e_(i)) - i/N)^2` over the sorted excesses.
pub fn gpd_tail_mse(sorted_excesses: &[f64], xi: f64, beta: f64) -> f64 {
    let count = sorted_excesses.len() as f64;
    sorted_excesses
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let d = (1.0 - gpd_sf(e, xi, beta)) - (i as f64 + 1.0) / count;
            d * d
        })
        .sum::<f64>()
        / count
}

/// Fits `method` to the observations above `threshold` of ascending `sorted`.
fn fit_above(sorted: &[f64], method: TailMethod, threshold: f64, order: f64) -> Result<TailFit> {
    let n = sorted.len();
    let start = sorted.partition_point(|&x| x <= threshold);
    let count = n - start;
    if count < 2 {
        return Err(Error::InsufficientData { needed: 2, got: count });
    }
    let excesses: Vec<f64> = sorted[start..].iter().map(|&x| x - threshold).collect();
    let (xi, beta) = match method {
        TailMethod::MepPwm => pwm_gpd(&excesses)?,
        TailMethod::Ml => mle_gpd(&excesses)?,
        TailMethod::Hill | TailMethod::Qq => {
            if start == 0 || !(sorted[start - 1] > 0.0) || !(threshold > 0.0) {
                return Err(Error::NonPositiveThresholdStatistic);
            }
            let xi = if method == TailMethod::Hill {
                hill_sorted(sorted, count)
            } else {
                qq_sorted(sorted, count)
            };
            (xi, xi * threshold)
        }
    };
    if !(beta > 0.0) {
        return Err(Error::DegenerateMoments);
    }
    Ok(TailFit {
        method,
        threshold,
        threshold_order: order,
        n_exceedances: count,
        xi,
        beta,
        tail_mse: gpd_tail_mse(&excesses, xi, beta),
    })
}

/// Fit at a caller-chosen threshold (for instance a self-calibrated one).
pub fn fit_at_threshold(data: &[f64], method: TailMethod, threshold: f64) -> Result<TailFit> {
    let sorted = sorted_copy(data)?;
    let below = sorted.partition_point(|&x| x <= threshold);
    fit_above(&sorted, method, threshold, below as f64 / sorted.len() as f64)
}

/// Fit using the `k` largest observations, thresholded at `X_(n-k)`.
pub fn fit_top_k(data: &[f64], method: TailMethod, k: usize) -> Result<TailFit> {
    let sorted = upper_order_statistics(data, k)?;
    let n = sorted.len();
    fit_above(&sorted, method, sorted[n - k - 1], (n - k) as f64 / n as f64)
}

/// Default candidate orders `0.90, 0.91, ..., 0.99`.
pub fn default_candidate_orders() -> Vec<f64> {
    (90..100).map(|i| i as f64 / 100.0).collect()
}

/// Scans empirical-quantile thresholds and keeps the fit with the smallest tail MSE.
pub fn select_threshold(data: &[f64], method: TailMethod, orders: &[f64]) -> Result<TailFit> {
    let sorted = sorted_copy(data)?;
    let n = sorted.len();
    let mut best: Option<TailFit> = None;
    for &order in orders {
        if !(order > 0.5 && order < 1.0) {
            return Err(Error::InvalidParams("candidate orders must lie in (0.5, 1)"));
        }
        let threshold = sorted[quantile_index(order, n)];
        let count = n - sorted.partition_point(|&x| x <= threshold);
        if count < MIN_EXCEEDANCES {
            continue;
        }
        let Ok(fit) = fit_above(&sorted, method, threshold, order) else {
            continue;
        };
        if fit.tail_mse.is_finite() && best.is_none_or(|b| fit.tail_mse < b.tail_mse) {
            best = Some(fit);
        }
    }
    best.ok_or(Error::NoValidCandidate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn mean_excess_by_hand() {
        let curve = mean_excess_curve(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(curve, vec![(1.0, 1.5), (2.0, 1.0)]);
        let curve = mean_excess_curve(&[1.0, 1.0, 2.0, 4.0]).unwrap();
        assert_eq!(curve, vec![(1.0, 2.0), (2.0, 2.0)]);
        assert!(mean_excess_curve(&[1.0]).is_err());
    }

    #[test]
    fn flat_top_gives_zero_hill() {
        let mut data: Vec<f64> = (1..=50).map(|i| i as f64).collect();
        data.extend([60.0; 10]);
        // with k = 9 the reference statistic X_(n-k) is itself one of the tied maxima
        assert_eq!(hill_estimator(&data, 9).unwrap(), 0.0);
        assert!(hill_estimator(&data, 1).is_err());
        assert_eq!(
            hill_estimator(&[-3.0, -2.0, -1.0, 1.0, 2.0], 3),
            Err(Error::NonPositiveThresholdStatistic)
        );
    }

    #[test]
    fn qq_two_points() {
        let data = [0.5, 1.0, 2.0, 8.0];
        // points (-ln(1/3), ln 8) and (-ln(2/3), ln 2)
        let want = (libm::log(8.0) - libm::log(2.0)) / (libm::log(3.0) - libm::log(1.5));
        assert!((qq_estimator(&data, 2).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn pwm_exponential_moments() {
        let (xi, beta) = pwm_from_moments(1.0, 0.25).unwrap();
        assert!(xi.abs() < 1e-15 && (beta - 1.0).abs() < 1e-15);
        assert_eq!(pwm_from_moments(1.0, 0.5), Err(Error::DegenerateMoments));
    }

    #[test]
    fn mle_rejects_constant_excesses() {
        assert_eq!(mle_gpd(&[2.0; 50]), Err(Error::NoInteriorMaximum));
        assert!(mle_gpd(&[0.0; 10]).is_err());
    }

    #[test]
    fn single_candidate_is_returned() {
        let data: Vec<f64> = (1..=1000).map(|i| libm::pow(1.0 - i as f64 / 1001.0, -0.5)).collect();
        let fit = select_threshold(&data, TailMethod::MepPwm, &[0.9]).unwrap();
        assert_eq!(fit.threshold_order, 0.9);
        assert_eq!(fit.n_exceedances, 100);
        assert_eq!(
            select_threshold(&data[..100], TailMethod::Ml, &[0.9]),
            Err(Error::NoValidCandidate)
        );
    }
}
