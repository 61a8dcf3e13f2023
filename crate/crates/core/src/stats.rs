//! Small numerical helpers shared by the Monte Carlo estimators.

use serde::{Deserialize, Serialize};

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Sample mean and standard error of the mean.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        assert!(n >= 2, "need at least two samples");
        let mean = neumaier_sum(xs.iter().copied()) / n as f64;
        let ss = neumaier_sum(xs.iter().map(|x| (x - mean) * (x - mean)));
        let var = ss / (n - 1) as f64;
        Self {
            value: mean,
            std_error: (var / n as f64).sqrt(),
        }
    }

    /// Binomial frequency with standard error `sqrt(q(1-q)/n)`.
    pub fn proportion(successes: usize, trials: usize) -> Self {
        assert!(trials > 0);
        let q = successes as f64 / trials as f64;
        Self {
            value: q,
            std_error: (q * (1.0 - q) / trials as f64).sqrt(),
        }
    }

    /// `self - other` for independent estimates.
    pub fn minus(self, other: Estimate) -> Estimate {
        Estimate {
            value: self.value - other.value,
            std_error: self.std_error.hypot(other.std_error),
        }
    }

    /// `self + other` for independent estimates.
    pub fn plus(self, other: Estimate) -> Estimate {
        Estimate {
            value: self.value + other.value,
            std_error: self.std_error.hypot(other.std_error),
        }
    }
}

/// Compensated (Neumaier) summation accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn neumaier_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = NeumaierSum::default();
    for x in xs {
        acc.add(x);
    }
    acc.total()
}

/// `ln(sum(exp(x)))`, stable; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + neumaier_sum(xs.iter().map(|x| (x - max).exp())).ln()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
