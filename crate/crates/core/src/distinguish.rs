//! Decision rules acting on a sketch `z = A x`: the likelihood-ratio test
//! between the two sketched laws and moment estimators scored on the
//! factor-2 window `|x|_p / 2 <= f(A, z) <= 2 |x|_p`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::divergence::{mixture_from_sketch, Density, GaussianMixture, StandardGaussian};
use crate::error::{Error, Result};
use crate::hard_instance::{
    event_probability_mc, in_null_event, in_spiked_event, pnorm, sample_conditioned, Conditioned,
    HardInstanceParams, TruncationEvent, DEFAULT_MAX_RETRIES,
};
use crate::par;
use crate::rng;
use crate::sketch::{ColumnSet, SketchMatrix};
use crate::stats::{log_sum_exp, Estimate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Null,
    Spiked,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// `ln(mixture density / N(0, I) density)` at the sketch.
    pub log_lr: f64,
    pub verdict: Verdict,
    pub estimate: Option<f64>,
}

/// Likelihood-ratio test with threshold 1: spiked iff `log_lr > 0`.
pub fn lr_test(sketch: &[f64], mix: &GaussianMixture) -> Result<Decision> {
    if sketch.len() != mix.dim() {
        return Err(Error::DimensionMismatch {
            expected: mix.dim(),
            got: sketch.len(),
        });
    }
    let log_lr = mix.log_ratio_to_standard(sketch);
    Ok(Decision {
        log_lr,
        verdict: if log_lr > 0.0 {
            Verdict::Spiked
        } else {
            Verdict::Null
        },
        estimate: None,
    })
}

/// `|A^T z|_p`: the p-norm of the minimum-norm preimage of the sketch.
pub fn plugin_estimator(a: &SketchMatrix, sketch: &[f64], p: f64) -> Result<f64> {
    Ok(pnorm(&a.apply_transpose(sketch)?, p))
}

/// A moment estimator `f(A, Ax)`.
pub trait MomentEstimator: Sync {
    fn estimate(&self, a: &SketchMatrix, sketch: &[f64], p: f64) -> f64;
}

impl<F> MomentEstimator for F
where
    F: Fn(&SketchMatrix, &[f64], f64) -> f64 + Sync,
{
    fn estimate(&self, a: &SketchMatrix, sketch: &[f64], p: f64) -> f64 {
        self(a, sketch, p)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PluginEstimator;

impl MomentEstimator for PluginEstimator {
    fn estimate(&self, a: &SketchMatrix, sketch: &[f64], p: f64) -> f64 {
        plugin_estimator(a, sketch, p).expect("sketch dimension matches matrix")
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConstantEstimator(pub f64);

impl MomentEstimator for ConstantEstimator {
    fn estimate(&self, _: &SketchMatrix, _: &[f64], _: f64) -> f64 {
        self.0
    }
}

/// Runs [`lr_test`] against the unrestricted spiked mixture and reports the
/// typical p-norm of whichever hypothesis wins.
#[derive(Clone, Debug)]
pub struct LrEstimator {
    mix: GaussianMixture,
    null_value: f64,
    spiked_value: f64,
}

impl LrEstimator {
    pub fn new(a: &SketchMatrix, params: &HardInstanceParams) -> Result<Self> {
        Ok(Self {
            mix: mixture_from_sketch(a, &ColumnSet::all(a.cols()), params)?,
            null_value: params.typical_null_norm(),
            spiked_value: params.typical_spiked_norm(),
        })
    }

    pub fn with_values(mix: GaussianMixture, null_value: f64, spiked_value: f64) -> Self {
        Self {
            mix,
            null_value,
            spiked_value,
        }
    }

    pub fn decide(&self, sketch: &[f64]) -> Result<Decision> {
        let mut d = lr_test(sketch, &self.mix)?;
        d.estimate = Some(match d.verdict {
            Verdict::Null => self.null_value,
            Verdict::Spiked => self.spiked_value,
        });
        Ok(d)
    }

    pub fn mixture(&self) -> &GaussianMixture {
        &self.mix
    }
}

impl MomentEstimator for LrEstimator {
    fn estimate(&self, _: &SketchMatrix, sketch: &[f64], _: f64) -> f64 {
        self.decide(sketch)
            .expect("sketch dimension matches mixture")
            .estimate
            .unwrap_or(f64::NAN)
    }
}

/// `|x|_p / 2 <= estimate <= 2 |x|_p`.
pub fn within_factor_two(estimate: f64, true_norm: f64) -> bool {
    0.5 * true_norm <= estimate && estimate <= 2.0 * true_norm
}

/// Factor-2 success frequency of `f` on `x ~ (D1 + D2) / 2`. Trial `i` uses
/// stream `(seed, "estimator", i)` for the coin and the conditioned draw.
pub fn evaluate_estimator<E: MomentEstimator + ?Sized>(
    f: &E,
    params: &HardInstanceParams,
    a: &SketchMatrix,
    trials: usize,
    seed: u64,
) -> Result<Estimate> {
    if trials < 100 {
        return Err(Error::TooFewTrials {
            min: 100,
            got: trials,
        });
    }
    if a.cols() != params.n {
        return Err(Error::DimensionMismatch {
            expected: params.n,
            got: a.cols(),
        });
    }
    let outcomes = par::map_range(trials, |i| -> Result<bool> {
        let mut r = rng::stream(seed, "estimator", i as u64);
        let which = if r.random::<bool>() {
            Conditioned::Spiked
        } else {
            Conditioned::Null
        };
        let draw = sample_conditioned(params, which, &mut r, DEFAULT_MAX_RETRIES)?;
        let z = a.apply(&draw.sample.x)?;
        Ok(within_factor_two(
            f.estimate(a, &z, params.p),
            draw.sample.pnorm,
        ))
    });
    let mut wins = 0;
    for o in outcomes {
        wins += usize::from(o?);
    }
    Ok(Estimate::proportion(wins, trials))
}

/// Empirical Type-I + Type-II error sums of the tests `log_lr > threshold`,
/// one per threshold. Null draws use stream `(seed, "lr-null", i)` and
/// spiked draws `(seed, "lr-spiked", i)`.
pub fn lr_error_curve(
    mix: &GaussianMixture,
    thresholds: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    if trials < 100 {
        return Err(Error::TooFewTrials {
            min: 100,
            got: trials,
        });
    }
    let null = StandardGaussian { dim: mix.dim() };
    let null_lr = par::map_range(trials, |i| {
        let z = null.sample(&mut rng::stream(seed, "lr-null", i as u64));
        mix.log_ratio_to_standard(&z)
    });
    let spiked_lr = par::map_range(trials, |i| {
        let z = mix.sample(&mut rng::stream(seed, "lr-spiked", i as u64));
        mix.log_ratio_to_standard(&z)
    });
    Ok(thresholds
        .iter()
        .map(|&t| {
            let type1 = null_lr.iter().filter(|&&l| l > t).count();
            let type2 = spiked_lr.iter().filter(|&&l| l <= t).count();
            Estimate::proportion(type1, trials).plus(Estimate::proportion(type2, trials))
        })
        .collect())
}

/// Error sum of [`lr_test`] itself (threshold 0).
pub fn lr_error_sum(mix: &GaussianMixture, trials: usize, seed: u64) -> Result<Estimate> {
    Ok(lr_error_curve(mix, &[0.0], trials, seed)?[0])
}

/// Monte Carlo total variation between the sketched conditioned laws
/// `E1 = law(Ax | x ~ D1)` and `E2 = law(Ax | x ~ D2)`.
///
/// Conditioned densities in sketch space are the unconditioned closed forms
/// reweighted by `P(event | Ax = z) / P(event)`. The conditional probability
/// is estimated from `inner` draws of `x` given `Ax = z` (the component is
/// drawn from its posterior for the spiked law); the marginal event
/// probabilities come from [`event_probability_mc`].
pub fn conditioned_tv_mc(
    params: &HardInstanceParams,
    a: &SketchMatrix,
    outer: usize,
    inner: usize,
    seed: u64,
) -> Result<Estimate> {
    if outer < 100 || inner == 0 {
        return Err(Error::TooFewTrials {
            min: 100,
            got: outer,
        });
    }
    let mix = mixture_from_sketch(a, &ColumnSet::all(a.cols()), params)?;
    let event_trials = outer * inner;
    let p_e =
        1.0 - event_probability_mc(params, TruncationEvent::EComplement, event_trials, seed)?.value;
    let p_f =
        1.0 - event_probability_mc(params, TruncationEvent::FComplement, event_trials, seed)?.value;

    let vals = par::map_range(outer, |i| -> Result<f64> {
        let mut r = rng::stream(seed, "ctv", i as u64);
        let x = sample_conditioned(params, Conditioned::Null, &mut r, DEFAULT_MAX_RETRIES)?
            .sample
            .x;
        let z = a.apply(&x)?;
        let log_terms = mix.component_log_terms(&z);
        let log_lr = log_sum_exp(&log_terms);
        let posterior: Vec<f64> = log_terms.iter().map(|t| (t - log_lr).exp()).collect();
        let base_null = a.apply_transpose(&z)?;

        let mut hits_e = 0usize;
        let mut hits_f = 0usize;
        for _ in 0..inner {
            let resid = orthogonal_residual(a, params.n, &mut r)?;
            let xe: Vec<f64> = base_null.iter().zip(&resid).map(|(b, w)| b + w).collect();
            hits_e += usize::from(in_null_event(params, pnorm(&xe, params.p)));

            let t = sample_index(&posterior, &mut r);
            let shifted: Vec<f64> = z.iter().zip(mix.mean(t)).map(|(zi, mi)| zi - mi).collect();
            let mut xf = a.apply_transpose(&shifted)?;
            xf.iter_mut().zip(&resid).for_each(|(x, w)| *x += w);
            xf[t] += params.spike;
            hits_f += usize::from(in_spiked_event(params, pnorm(&xf, params.p)));
        }
        if hits_e == 0 {
            return Ok(0.0);
        }
        let cond_e = hits_e as f64 / inner as f64 / p_e;
        let cond_f = hits_f as f64 / inner as f64 / p_f;
        let ratio = log_lr.exp() * cond_f / cond_e;
        Ok((1.0 - ratio).max(0.0))
    });
    let vals: Vec<f64> = vals.into_iter().collect::<Result<_>>()?;
    Ok(Estimate::from_samples(&vals))
}

/// `(I - A^T A) w` for a fresh `w ~ N(0, I_n)`.
fn orthogonal_residual<R: Rng + ?Sized>(a: &SketchMatrix, n: usize, r: &mut R) -> Result<Vec<f64>> {
    let w: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
    let back = a.apply_transpose(&a.apply(&w)?)?;
    Ok(w.iter().zip(&back).map(|(x, y)| x - y).collect())
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], r: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = r.random::<f64>() * total;
    for (i, p) in probs.iter().enumerate() {
        if u < *p {
            return i;
        }
        u -= p;
    }
    probs.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::tv_monte_carlo;
    use crate::sketch::make_orthonormal_sketch;
    use approx::assert_relative_eq;

    #[test]
    fn lr_at_origin_and_at_mean() {
        let mix = GaussianMixture::uniform(2, vec![1.0, 2.0]).unwrap();
        let d = lr_test(&[0.0, 0.0], &mix).unwrap();
        assert_relative_eq!(d.log_lr, -2.5);
        assert_eq!(d.verdict, Verdict::Null);
        let d = lr_test(&[1.0, 2.0], &mix).unwrap();
        assert_relative_eq!(d.log_lr, 2.5);
        assert_eq!(d.verdict, Verdict::Spiked);
        assert!(lr_test(&[0.0], &mix).is_err());
    }

    #[test]
    fn plugin_is_exact_for_square_sketch() {
        let a = make_orthonormal_sketch(32, 32, 4).unwrap();
        let x: Vec<f64> = (0..32).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let z = a.apply(&x).unwrap();
        assert_relative_eq!(
            plugin_estimator(&a, &z, 4.0).unwrap(),
            pnorm(&x, 4.0),
            max_relative = 1e-9
        );
        assert_eq!(plugin_estimator(&a, &[0.0; 32], 4.0).unwrap(), 0.0);
        assert!(plugin_estimator(&a, &[0.0; 3], 4.0).is_err());
    }

    #[test]
    fn error_sum_tracks_total_variation() {
        let mix = GaussianMixture::uniform(1, vec![1.5, -0.5]).unwrap();
        let err = lr_error_sum(&mix, 40_000, 3).unwrap();
        let tv = tv_monte_carlo(&mix, &StandardGaussian { dim: 1 }, 40_000, 4).unwrap();
        let diff = err.minus(Estimate {
            value: 1.0 - tv.value,
            std_error: tv.std_error,
        });
        assert!(
            diff.value.abs() <= 3.0 * diff.std_error,
            "{err:?} vs {tv:?}"
        );
    }

    #[test]
    fn zero_threshold_minimizes_error_sum() {
        let mix = GaussianMixture::uniform(2, vec![1.0, 0.0, -0.5, 1.0]).unwrap();
        let thresholds: Vec<f64> = (-8..=8).map(|k| k as f64 * 0.25).collect();
        let curve = lr_error_curve(&mix, &thresholds, 40_000, 9).unwrap();
        let at_zero = curve[8];
        for (t, e) in thresholds.iter().zip(&curve) {
            let d = e.minus(at_zero);
            assert!(
                d.value >= -3.0 * d.std_error,
                "threshold {t} beats 0: {e:?} vs {at_zero:?}"
            );
        }
    }

    #[test]
    fn oracle_inversion_scores_perfectly() {
        let prm = HardInstanceParams::new(64, 4.0, None).unwrap();
        let a = make_orthonormal_sketch(64, 64, 1).unwrap();
        let s = evaluate_estimator(&PluginEstimator, &prm, &a, 400, 2).unwrap();
        assert_eq!(s.value, 1.0);
    }

    #[test]
    fn constant_estimators_on_the_mixture() {
        let prm = HardInstanceParams::new(256, 4.0, None).unwrap();
        let a = make_orthonormal_sketch(4, 256, 1).unwrap();
        // The cut value sits below every D2 window and above every D1 window.
        let cut = 2.0 * prm.null_radius();
        let s = evaluate_estimator(&ConstantEstimator(cut), &prm, &a, 2000, 3).unwrap();
        assert_eq!(s.value, 0.0);
        // A typical null norm is right on D1 and wrong on D2.
        let typ = ConstantEstimator(prm.typical_null_norm());
        let s = evaluate_estimator(&typ, &prm, &a, 4000, 3).unwrap();
        assert!(
            (s.value - 0.5).abs() <= 3.0 * s.std_error.max(0.5 / 4000f64.sqrt()),
            "{s:?}"
        );
    }

    #[test]
    fn closures_are_estimators() {
        let prm = HardInstanceParams::new(16, 4.0, None).unwrap();
        let a = make_orthonormal_sketch(16, 16, 1).unwrap();
        let f = |a: &SketchMatrix, z: &[f64], p: f64| plugin_estimator(a, z, p).unwrap();
        assert_eq!(evaluate_estimator(&f, &prm, &a, 100, 1).unwrap().value, 1.0);
    }

    #[test]
    fn success_is_bounded_by_conditioned_tv() {
        let prm = HardInstanceParams::new(128, 4.0, None).unwrap();
        let a = make_orthonormal_sketch(2, 128, 6).unwrap();
        let v = conditioned_tv_mc(&prm, &a, 1500, 8, 11).unwrap();
        assert!((0.0..=1.0).contains(&v.value));
        let lr = LrEstimator::new(&a, &prm).unwrap();
        for est in [&lr as &dyn MomentEstimator, &PluginEstimator] {
            let s = evaluate_estimator(est, &prm, &a, 3000, 12).unwrap();
            let slack = 3.0 * s.std_error.hypot(0.5 * v.std_error);
            assert!(
                s.value <= 0.5 * (1.0 + v.value) + slack,
                "{s:?} vs V = {v:?}"
            );
        }
    }
}
