//! Small estimators: Bernoulli and sample means with standard errors, least
//! squares lines, percentiles and Pearson statistics.

use alloc::vec::Vec;

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateCI {
    pub estimate: f64,
    pub stderr: f64,
    pub trials: u64,
}

impl EstimateCI {
    /// Proportion `successes / trials` with stderr `sqrt(p(1-p)/N)`.
    pub fn bernoulli(successes: u64, trials: u64) -> Self {
        if trials == 0 {
            return EstimateCI {
                estimate: f64::NAN,
                stderr: f64::NAN,
                trials,
            };
        }
        let p = successes as f64 / trials as f64;
        EstimateCI {
            estimate: p,
            stderr: math::sqrt(p * (1.0 - p) / trials as f64),
            trials,
        }
    }

    /// Sample mean with stderr `sd / sqrt(N)`.
    pub fn mean_of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return EstimateCI {
                estimate: f64::NAN,
                stderr: f64::NAN,
                trials: 0,
            };
        }
        let m = mean(values);
        let var = if n > 1 {
            let dev: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
            pairwise_sum(&dev) / (n - 1) as f64
        } else {
            0.0
        };
        EstimateCI {
            estimate: m,
            stderr: math::sqrt(var / n as f64),
            trials: n as u64,
        }
    }

    /// `|estimate - target| <= k * stderr`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        math::abs(self.estimate - target) <= k * self.stderr
    }
}

/// Pairwise (cascade) summation; the result depends only on the order of
/// `values`, never on how work was scheduled.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 16 {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

pub fn mean(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub points: usize,
}

/// Ordinary least squares `y = intercept + slope x`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if n > 2 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let r = y - intercept - slope * x;
                r * r
            })
            .sum();
        math::sqrt(rss / (n - 2) as f64 / sxx)
    } else {
        0.0
    };
    Some(LineFit {
        slope,
        intercept,
        slope_stderr,
        points: n,
    })
}

/// Linear-interpolated quantile of an ascending slice, `q` in `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = math::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Pearson statistic of observed counts against cell probabilities.
pub fn chi_square_statistic(observed: &[u64], probabilities: &[f64]) -> f64 {
    let total: u64 = observed.iter().sum();
    observed
        .iter()
        .zip(probabilities)
        .map(|(&o, &p)| {
            let e = p * total as f64;
            let d = o as f64 - e;
            d * d / e
        })
        .sum()
}

/// Lag-one autocorrelation of a sequence and its approximate stderr
/// `1 / sqrt(n)` under independence.
pub fn lag1_correlation(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n < 3 {
        return (f64::NAN, f64::NAN);
    }
    let m = mean(values);
    let var: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    let cov: f64 = values.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    (cov / var, 1.0 / math::sqrt(n as f64))
}
