//! Empirical cdf, the logarithmic synthetic grid and histogram mode.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Right-continuous empirical cdf of a finite sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(data: &[f64]) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let mut sorted = data.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(EmpiricalCdf { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    /// `#{x_i <= t} / n`.
    pub fn eval(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&x| x <= t) as f64 / self.sorted.len() as f64
    }

    /// Evaluates at every point of a nondecreasing sequence in one merge pass.
    pub fn eval_sorted(&self, points: &[f64]) -> Vec<f64> {
        let n = self.sorted.len() as f64;
        let mut out = Vec::with_capacity(points.len());
        let mut idx = 0;
        for &t in points {
            while idx < self.sorted.len() && self.sorted[idx] <= t {
                idx += 1;
            }
            out.push(idx as f64 / n);
        }
        out
    }

    /// Order statistic `x_(ceil(p n))`, clamped to `[x_(1), x_(n)]`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain("quantile order outside [0, 1]"));
        }
        Ok(self.sorted[quantile_index(p, self.sorted.len())])
    }
}

/// Zero-based index of the order statistic used for the empirical quantile.
pub fn quantile_index(p: f64, n: usize) -> usize {
    let k = libm::ceil(p * n as f64) as usize;
    k.clamp(1, n) - 1
}

/// Empirical quantile of unsorted data under the `ceil(p n)` convention.
pub fn empirical_quantile(data: &[f64], p: f64) -> Result<f64> {
    EmpiricalCdf::new(data)?.quantile(p)
}

/// Increasing grid `y_j = min + (max - min) log10(1 + 9 (j-1)/(m-1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGrid {
    pub points: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

impl SyntheticGrid {
    pub fn new(min: f64, max: f64, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InsufficientData { needed: 2, got: m });
        }
        if !(min.is_finite() && max.is_finite()) {
            return Err(Error::NonFinite);
        }
        if !(max > min) {
            return Err(Error::DegenerateRange);
        }
        let range = max - min;
        let last = (m - 1) as f64;
        let mut points: Vec<f64> = (0..m)
            .map(|j| min + range * libm::log10(1.0 + 9.0 * j as f64 / last))
            .collect();
        points[m - 1] = max;
        Ok(SyntheticGrid { points, min, max })
    }

    pub fn from_data(data: &[f64], m: usize) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        let (lo, hi) = data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
        Self::new(lo, hi, m)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Bin-width rule for the histogram mode estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthRule {
    #[default]
    FreedmanDiaconis,
    Scott,
    Sturges,
}

/// Center of the highest-count histogram bin; ties go to the smaller bin.
///
/// Bins are anchored at the sample minimum. When the rule yields a zero
/// width (for instance a zero interquartile range) the most frequent exact
/// value is returned instead.
pub fn estimate_mode(data: &[f64], rule: BandwidthRule) -> Result<f64> {
    let ecdf = EmpiricalCdf::new(data)?;
    Ok(mode_of_sorted(ecdf.sorted(), rule))
}

pub(crate) fn mode_of_sorted(sorted: &[f64], rule: BandwidthRule) -> f64 {
    let n = sorted.len();
    let min = sorted[0];
    let range = sorted[n - 1] - min;
    if range == 0.0 {
        return min;
    }
    let nf = n as f64;
    let width = match rule {
        BandwidthRule::FreedmanDiaconis => {
            let iqr = sorted[quantile_index(0.75, n)] - sorted[quantile_index(0.25, n)];
            2.0 * iqr / libm::cbrt(nf)
        }
        BandwidthRule::Scott => {
            let mean = sorted.iter().sum::<f64>() / nf;
            let var = sorted.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / nf;
            3.49 * libm::sqrt(var) / libm::cbrt(nf)
        }
        BandwidthRule::Sturges => range / (libm::ceil(libm::log2(nf)) + 1.0),
    };
    if !(width > 0.0) || !width.is_finite() {
        return most_frequent_value(sorted);
    }
    let bins = libm::ceil(range / width).max(1.0);
    let bin_of = |x: f64| -> f64 { libm::floor((x - min) / width).min(bins - 1.0) };

    let mut best_bin = 0.0;
    let mut best_count = 0usize;
    let mut i = 0;
    while i < n {
        let b = bin_of(sorted[i]);
        let mut j = i + 1;
        while j < n && bin_of(sorted[j]) == b {
            j += 1;
        }
        // bins are visited in increasing order, so strict '>' keeps the smaller one on ties
        if j - i > best_count {
            best_count = j - i;
            best_bin = b;
        }
        i = j;
    }
    min + (best_bin + 0.5) * width
}

fn most_frequent_value(sorted: &[f64]) -> f64 {
    let mut best = sorted[0];
    let mut best_count = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        if j - i > best_count {
            best_count = j - i;
            best = sorted[i];
        }
        i = j;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn ecdf_counts() {
        let e = EmpiricalCdf::new(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(e.eval(2.0), 2.0 / 3.0);
        assert_eq!(e.eval(0.5), 0.0);
        assert_eq!(e.eval(3.0), 1.0);
        assert_eq!(
            e.eval_sorted(&[0.0, 1.0, 1.5, 3.0, 9.0]),
            vec![0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0, 1.0]
        );
        assert_eq!(EmpiricalCdf::new(&[]), Err(Error::EmptyData));
        assert_eq!(EmpiricalCdf::new(&[1.0, f64::NAN]), Err(Error::NonFinite));
    }

    #[test]
    fn quantile_convention() {
        let data: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        let e = EmpiricalCdf::new(&data).unwrap();
        assert_eq!(e.quantile(0.9).unwrap(), 900.0);
        assert_eq!(e.quantile(0.9001).unwrap(), 901.0);
        assert_eq!(e.quantile(0.0).unwrap(), 1.0);
        assert_eq!(e.quantile(1.0).unwrap(), 1000.0);
        assert!(e.quantile(1.5).is_err());
    }

    #[test]
    fn grid_values() {
        let g = SyntheticGrid::new(0.0, 9.0, 2).unwrap();
        assert_eq!(g.points, vec![0.0, 9.0]);
        let g = SyntheticGrid::new(0.0, 9.0, 3).unwrap();
        assert!((g.points[1] - 9.0 * libm::log10(5.5)).abs() < 1e-15);
        assert!((g.points[1] - 6.6632).abs() < 1e-4);
        assert_eq!(g.points[2], 9.0);
        assert_eq!(SyntheticGrid::new(1.0, 1.0, 5), Err(Error::DegenerateRange));
        let g = SyntheticGrid::new(-2.0, 7.0, 1001).unwrap();
        assert!(g.points.windows(2).all(|w| w[1] > w[0]));
        assert!(g.points[500] > 2.5);
    }

    #[test]
    fn mode_of_repeated_value() {
        let mut data = vec![4.0; 50];
        data.extend([1.0, 2.0, 3.0, 5.0, 6.0, 7.0, 8.0]);
        assert_eq!(estimate_mode(&data, BandwidthRule::FreedmanDiaconis).unwrap(), 4.0);
        assert_eq!(estimate_mode(&[2.5; 20], BandwidthRule::Scott).unwrap(), 2.5);
    }

    #[test]
    fn mode_ties_go_left() {
        // Sturges on 16 points: 5 bins of width 1 over [0, 5]
        let data = [
            0.0, 0.2, 0.3, 1.5, 2.5, 2.6, 2.7, 3.5, 3.6, 3.7, 4.2, 4.3, 4.4, 4.5, 4.6, 5.0,
        ];
        // bin counts: [3, 1, 3, 3, 6]
        assert!((estimate_mode(&data, BandwidthRule::Sturges).unwrap() - 4.5).abs() < 1e-12);
        let data = [
            0.0, 0.2, 0.3, 0.4, 1.2, 1.3, 1.4, 1.5, 2.5, 2.6, 3.5, 3.6, 3.7, 4.2, 4.3, 5.0,
        ];
        // bin counts: [4, 4, 2, 3, 3]
        assert!((estimate_mode(&data, BandwidthRule::Sturges).unwrap() - 0.5).abs() < 1e-12);
    }
}
