//! Small statistical toolkit for the Monte Carlo estimators: batch-means
//! confidence intervals, weighted linear regression and the two-sample
//! Kolmogorov–Smirnov test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// A point estimate with a standard error and symmetric 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl Estimate {
    pub fn new(value: f64, std_error: f64) -> Self {
        Estimate {
            value,
            std_error,
            ci_lo: value - Z95 * std_error,
            ci_hi: value + Z95 * std_error,
        }
    }

    /// An exact (deterministic) value.
    pub fn exact(value: f64) -> Self {
        Estimate::new(value, 0.0)
    }

    /// Mean and standard error of independent identically distributed values.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Estimate::new(f64::NAN, f64::NAN);
        }
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Estimate::new(mean, f64::INFINITY);
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Estimate::new(mean, (var / n).sqrt())
    }

    /// Binomial proportion `k/n` with the normal-approximation error.
    pub fn proportion(k: u64, n: u64) -> Self {
        if n == 0 {
            return Estimate::new(f64::NAN, f64::NAN);
        }
        let p = k as f64 / n as f64;
        Estimate::new(p, (p * (1.0 - p) / n as f64).sqrt())
    }

    /// `|self − other| ≤ k·sqrt(se₁² + se₂²)`.
    pub fn agrees_with(&self, other: &Estimate, k: f64) -> bool {
        (self.value - other.value).abs() <= k * self.std_error.hypot(other.std_error)
    }

    /// Within `k` standard errors of an exact target.
    pub fn covers(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }

    pub fn scale(&self, c: f64) -> Self {
        Estimate::new(self.value * c, self.std_error * c.abs())
    }

    /// Ratio by the delta method, treating numerator and denominator as independent.
    pub fn ratio(&self, other: &Estimate) -> Self {
        let r = self.value / other.value;
        let rel = (self.std_error / self.value).hypot(other.std_error / other.value);
        Estimate::new(r, (r * rel).abs())
    }

    pub fn is_distinguishable_from_zero(&self) -> bool {
        self.ci_lo > 0.0 || self.ci_hi < 0.0
    }
}

/// Running sums for mean and variance. Values are combined in a fixed order,
/// so results do not depend on how work was scheduled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let n = self.n as f64;
        let m = self.mean();
        ((self.sum_sq - n * m * m) / (n - 1.0)).max(0.0)
    }

    pub fn estimate(&self) -> Estimate {
        Estimate::new(self.mean(), (self.variance() / self.n as f64).sqrt())
    }
}

/// Ordinary (or weighted) least-squares line `y = a + b x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_std_error: f64,
    /// Degrees of freedom of the residual, `n − 2`.
    pub dof: usize,
}

impl LinearFit {
    /// Fits with weights `w_i = 1/σ_i²`. When `sigmas` is `None` the residual
    /// variance sets the scale; otherwise the given `σ_i` are trusted.
    pub fn fit(xs: &[f64], ys: &[f64], sigmas: Option<&[f64]>) -> Option<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return None;
        }
        let w: Vec<f64> = match sigmas {
            Some(s) => s.iter().map(|s| 1.0 / (s * s)).collect(),
            None => vec![1.0; n],
        };
        let sw: f64 = w.iter().sum();
        let xm = xs.iter().zip(&w).map(|(x, w)| w * x).sum::<f64>() / sw;
        let ym = ys.iter().zip(&w).map(|(y, w)| w * y).sum::<f64>() / sw;
        let sxx: f64 = xs.iter().zip(&w).map(|(x, w)| w * (x - xm).powi(2)).sum();
        if !(sxx > 0.0) || !sw.is_finite() {
            return None;
        }
        let sxy: f64 = xs
            .iter()
            .zip(ys)
            .zip(&w)
            .map(|((x, y), w)| w * (x - xm) * (y - ym))
            .sum();
        let slope = sxy / sxx;
        let intercept = ym - slope * xm;
        let var = match sigmas {
            Some(_) => 1.0 / sxx,
            None if n > 2 => {
                let rss: f64 = xs
                    .iter()
                    .zip(ys)
                    .map(|(x, y)| (y - intercept - slope * x).powi(2))
                    .sum();
                rss / (n as f64 - 2.0) / sxx
            }
            None => f64::INFINITY,
        };
        Some(LinearFit {
            intercept,
            slope,
            slope_std_error: var.sqrt(),
            dof: n.saturating_sub(2),
        })
    }

    /// Two-sided p-value for `slope = 0`. Known weights use the normal
    /// distribution, estimated scale uses Student's t.
    pub fn slope_p_value(&self, known_sigma: bool) -> f64 {
        let t = self.slope / self.slope_std_error;
        if !t.is_finite() {
            return if self.slope == 0.0 { 1.0 } else { 0.0 };
        }
        let tail = if known_sigma || self.dof == 0 {
            Normal::standard().cdf(-t.abs())
        } else {
            StudentsT::new(0.0, 1.0, self.dof as f64)
                .map(|d| d.cdf(-t.abs()))
                .unwrap_or(f64::NAN)
        };
        2.0 * tail
    }

    pub fn slope_estimate(&self) -> Estimate {
        Estimate::new(self.slope, self.slope_std_error)
    }
}

/// Result of a two-sample Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic distribution.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsTest {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    KsTest {
        statistic: d,
        p_value: kolmogorov_survival(lambda),
    }
}

/// `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// `max/min` of positive values.
pub fn spread(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    max / min
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 1.5 - 0.25 * x).collect();
        let f = LinearFit::fit(&xs, &ys, None).unwrap();
        assert!((f.slope + 0.25).abs() < 1e-14 && (f.intercept - 1.5).abs() < 1e-14);
        assert!(f.slope_p_value(false) < 1e-10);
    }

    #[test]
    fn weighted_fit_against_hand_computation() {
        // Points (0,0), (1,1), (2,4) with σ = (1, 1, 2): weights (1, 1, 1/4).
        let f = LinearFit::fit(&[0.0, 1.0, 2.0], &[0.0, 1.0, 4.0], Some(&[1.0, 1.0, 2.0])).unwrap();
        // Σw = 2.25, x̄ = 1.5/2.25, ȳ = 2/2.25
        let xm = 1.5 / 2.25;
        let ym = 2.0 / 2.25;
        let sxx = xm * xm + (1.0_f64 - xm).powi(2) + 0.25 * (2.0_f64 - xm).powi(2);
        let sxy = xm * ym + (1.0 - xm) * (1.0 - ym) + 0.25 * (2.0 - xm) * (4.0 - ym);
        assert!((f.slope - sxy / sxx).abs() < 1e-14);
        assert!((f.slope_std_error - (1.0 / sxx).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn ks_detects_shift_and_accepts_identity() {
        let a: Vec<f64> = (0..2000).map(|i| (i as f64 + 0.5) / 2000.0).collect();
        let b: Vec<f64> = (0..1500).map(|i| (i as f64 + 0.3) / 1500.0).collect();
        assert!(ks_two_sample(&a, &b).p_value > 0.5);
        let c: Vec<f64> = a.iter().map(|x| x + 0.1).collect();
        let t = ks_two_sample(&a, &c);
        assert!((t.statistic - 0.1).abs() < 1e-3 && t.p_value < 1e-6);
    }

    #[test]
    fn kolmogorov_known_quantiles() {
        // Q(1.3581) ≈ 0.05, Q(1.6276) ≈ 0.01
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn proportion_and_ratio() {
        let p = Estimate::proportion(25, 100);
        assert!((p.std_error - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-15);
        let r = Estimate::new(2.0, 0.2).ratio(&Estimate::new(4.0, 0.4));
        assert!((r.value - 0.5).abs() < 1e-15);
        assert!((r.std_error - 0.5 * 0.02f64.sqrt()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn moments_match_two_pass(xs in proptest::collection::vec(-1e3f64..1e3, 2..200)) {
            let mut m = Moments::default();
            xs.iter().for_each(|&x| m.push(x));
            let e = Estimate::from_samples(&xs);
            prop_assert!((m.mean() - e.value).abs() <= 1e-9 * (1.0 + e.value.abs()));
            let v2 = e.std_error.powi(2) * xs.len() as f64;
            prop_assert!((m.variance() - v2).abs() <= 1e-6 * (1.0 + v2));
        }
    }
}
