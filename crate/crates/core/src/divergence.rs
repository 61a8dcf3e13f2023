//! Chi-square and total variation between identity-covariance Gaussian
//! location mixtures and the standard Gaussian.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hard_instance::HardInstanceParams;
use crate::kernel::pairwise_log_sum_exp;
use crate::par;
use crate::rng;
use crate::sketch::{ColumnSet, SketchMatrix};
use crate::stats::{dot, log_sum_exp, Estimate};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A distribution with an exact log-density and a sampler.
pub trait Density: Sync {
    fn dim(&self) -> usize;
    fn log_density(&self, z: &[f64]) -> f64;
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64>;
}

/// `N(0, I_dim)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StandardGaussian {
    pub dim: usize,
}

impl Density for StandardGaussian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, z: &[f64]) -> f64 {
        -0.5 * dot(z, z) - 0.5 * self.dim as f64 * LN_2PI
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim).map(|_| rng.sample(StandardNormal)).collect()
    }
}

/// `sum_i w_i N(mu_i, I_dim)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    dim: usize,
    means: Vec<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    half_sq_norms: Vec<f64>,
    cumulative: Vec<f64>,
}

impl GaussianMixture {
    /// Builds a mixture from packed means (`weights.len()` vectors of length
    /// `dim`). Weights must be nonnegative and sum to one within 1e-12.
    pub fn new(dim: usize, means: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        let k = weights.len();
        if k == 0 {
            return Err(Error::InvalidWeights("no components".into()));
        }
        if means.len() != k * dim {
            return Err(Error::DimensionMismatch {
                expected: k * dim,
                got: means.len(),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidWeights(
                "negative or non-finite weight".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidWeights(format!("weights sum to {total}")));
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        let half_sq_norms = means
            .chunks_exact(dim)
            .map(|mu| 0.5 * dot(mu, mu))
            .collect();
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self {
            dim,
            means,
            weights,
            log_weights,
            half_sq_norms,
            cumulative,
        })
    }

    /// Equal weights over the packed means.
    pub fn uniform(dim: usize, means: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        let k = means.len() / dim;
        if k == 0 {
            return Err(Error::InvalidWeights("no components".into()));
        }
        Self::new(dim, means, vec![1.0 / k as f64; k])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn mean(&self, i: usize) -> &[f64] {
        &self.means[i * self.dim..(i + 1) * self.dim]
    }

    /// Per-component log posterior terms `ln w_i + <z, mu_i> - |mu_i|^2 / 2`.
    pub fn component_log_terms(&self, z: &[f64]) -> Vec<f64> {
        self.means
            .chunks_exact(self.dim)
            .zip(self.log_weights.iter().zip(&self.half_sq_norms))
            .map(|(mu, (lw, h))| lw + dot(z, mu) - h)
            .collect()
    }

    /// `ln(mixture density / standard normal density)` at `z`.
    pub fn log_ratio_to_standard(&self, z: &[f64]) -> f64 {
        log_sum_exp(&self.component_log_terms(z))
    }

    /// Component index drawn with probability `w_i`.
    pub fn sample_component<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let i = self.cumulative.partition_point(|&c| c <= u);
        i.min(self.components() - 1)
    }
}

impl Density for GaussianMixture {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, z: &[f64]) -> f64 {
        StandardGaussian { dim: self.dim }.log_density(z) + self.log_ratio_to_standard(z)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let i = self.sample_component(rng);
        self.mean(i)
            .iter()
            .map(|mu| mu + rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

/// Law of `A (y + spike e_s)` with `s` uniform on the set: means `spike A_i`.
pub fn mixture_from_sketch(
    a: &SketchMatrix,
    set: &ColumnSet,
    params: &HardInstanceParams,
) -> Result<GaussianMixture> {
    mixture_from_sketch_scaled(a, set, params.spike)
}

/// As [`mixture_from_sketch`] with an arbitrary spike scale.
pub fn mixture_from_sketch_scaled(
    a: &SketchMatrix,
    set: &ColumnSet,
    scale: f64,
) -> Result<GaussianMixture> {
    if set.is_empty() {
        return Err(Error::EmptyColumnSet);
    }
    let mut means = a.gather_columns(set.indices());
    means.iter_mut().for_each(|x| *x *= scale);
    GaussianMixture::uniform(a.rows(), means)
}

/// Input-space law of `y + scale e_s` with `s` uniform on `indices`.
pub fn spike_mixture_in_input_space(
    n: usize,
    indices: &[usize],
    scale: f64,
) -> Result<GaussianMixture> {
    let mut means = vec![0.0; indices.len() * n];
    for (k, &i) in indices.iter().enumerate() {
        means[k * n + i] = scale;
    }
    GaussianMixture::uniform(n, means)
}

/// `ln(1 + chi2(mix || N(0, I)))` = `ln sum_{i,j} w_i w_j exp(<mu_i, mu_j>)`.
pub fn log1p_chi2_mixture(mix: &GaussianMixture) -> f64 {
    pairwise_log_sum_exp(&mix.means, mix.dim, 1.0, &mix.log_weights)
}

/// Exact `chi2(mix || N(0, I))`; errors rather than saturating when the value
/// exceeds the f64 range.
pub fn chi2_mixture_exact(mix: &GaussianMixture) -> Result<f64> {
    let l = log1p_chi2_mixture(mix);
    let v = l.exp_m1();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Overflow { log1p_chi2: l })
    }
}

/// Monte Carlo `E_{z ~ mix}[ratio(z)] - 1`; trial `i` uses stream
/// `(seed, "chi2-mc", i)`.
pub fn chi2_monte_carlo(mix: &GaussianMixture, trials: usize, seed: u64) -> Result<Estimate> {
    if trials < 1000 {
        return Err(Error::TooFewTrials {
            min: 1000,
            got: trials,
        });
    }
    let vals = par::map_range(trials, |i| {
        let mut r = rng::stream(seed, "chi2-mc", i as u64);
        let z = mix.sample(&mut r);
        mix.log_ratio_to_standard(&z).exp() - 1.0
    });
    Ok(Estimate::from_samples(&vals))
}

/// `min(1, sqrt(ln(1 + chi2) / 2))`.
pub fn tv_upper_from_chi2(chi2: f64) -> Result<f64> {
    if chi2.is_nan() || chi2 < 0.0 {
        return Err(Error::OutOfRange {
            name: "chi2",
            range: "[0, inf)",
            value: chi2,
        });
    }
    Ok(tv_upper_from_log1p_chi2(chi2.ln_1p()))
}

/// Same bound from `ln(1 + chi2)`, usable when chi2 itself overflows.
pub fn tv_upper_from_log1p_chi2(log1p_chi2: f64) -> f64 {
    (0.5 * log1p_chi2.max(0.0)).sqrt().min(1.0)
}

/// Monte Carlo total variation `E_{z ~ q}[(1 - p(z)/q(z))_+]`; trial `i` uses
/// stream `(seed, "tv-mc", i)`.
pub fn tv_monte_carlo<P: Density, Q: Density>(
    p: &P,
    q: &Q,
    trials: usize,
    seed: u64,
) -> Result<Estimate> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            got: p.dim(),
        });
    }
    if trials < 2 {
        return Err(Error::TooFewTrials {
            min: 2,
            got: trials,
        });
    }
    let vals = par::map_range(trials, |i| {
        let mut r = rng::stream(seed, "tv-mc", i as u64);
        let z = q.sample(&mut r);
        let lr = p.log_density(&z) - q.log_density(&z);
        (-lr.exp_m1()).max(0.0)
    });
    Ok(Estimate::from_samples(&vals))
}

/// Minimal Type-I plus Type-II error sum, `1 - tv`.
pub fn bayes_error(tv: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&tv) {
        return Err(Error::OutOfRange {
            name: "tv",
            range: "[0, 1]",
            value: tv,
        });
    }
    Ok(1.0 - tv)
}

/// Exact and Monte Carlo chi-square of a mixture against `N(0, I)` with the
/// derived TV and Bayes-error bounds. `chi2_exact` is `+inf` when the exact
/// value exceeds the f64 range; the bounds are still computed from the
/// log-domain value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub chi2_exact: f64,
    pub chi2_mc: f64,
    pub chi2_mc_se: f64,
    pub tv_upper: f64,
    pub bayes_error_lower: f64,
}

impl DivergenceReport {
    pub fn compute(mix: &GaussianMixture, trials: usize, seed: u64) -> Result<Self> {
        let l = log1p_chi2_mixture(mix);
        let mc = chi2_monte_carlo(mix, trials, seed)?;
        let tv_upper = tv_upper_from_log1p_chi2(l);
        Ok(Self {
            chi2_exact: l.exp_m1(),
            chi2_mc: mc.value,
            chi2_mc_se: mc.std_error,
            tv_upper,
            bayes_error_lower: 1.0 - tv_upper,
        })
    }
}
