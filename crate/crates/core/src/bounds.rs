//! The deterministic inequality chain: measurement threshold, both sides of
//! the pairwise exponential-sum lemma, the closed-form chi-square bound and
//! its composition into a ceiling on any estimator's success probability.

use serde::{Deserialize, Serialize};

use crate::divergence::{log1p_chi2_mixture, mixture_from_sketch, tv_upper_from_log1p_chi2};
use crate::error::Result;
use crate::hard_instance::{
    event_probability_mc, validate_p_eps, HardInstanceParams, TruncationEvent,
};
use crate::kernel::pairwise_log_sum_exp;
use crate::sketch::{small_column_set, SketchMatrix};

/// `eps / (100 C1^2) * n^(1 - 2/p) * ln n`, before flooring.
pub fn measurement_threshold_real(n: usize, p: f64, eps: f64) -> Result<f64> {
    validate_p_eps(p, Some(eps))?;
    let prm = HardInstanceParams::new(n.max(1), p, Some(eps))?;
    if n <= 1 {
        return Ok(0.0);
    }
    let nf = n as f64;
    Ok(eps / (100.0 * prm.c1 * prm.c1) * nf.powf(1.0 - 2.0 / p) * nf.ln())
}

/// Largest sketch size (floored) covered by the lower bound; 0 when the
/// regime is empty at this `n`.
pub fn measurement_threshold(n: usize, p: f64, eps: f64) -> Result<usize> {
    Ok(measurement_threshold_real(n, p, eps)?.floor() as usize)
}

/// `1.03 C1^4 (n^(-2 + 4/p + eps) m + n^(2/p - 1) sqrt(m))`.
pub fn chi2_bound_expression(params: &HardInstanceParams, m: usize) -> f64 {
    let (n, p, eps) = (params.n as f64, params.p, params.eps);
    let m = m as f64;
    1.03 * params.c1.powi(4) * (n.powf(-2.0 + 4.0 / p + eps) * m + n.powf(2.0 / p - 1.0) * m.sqrt())
}

/// Closed-form chi-square bound for a concrete sketch.
pub fn chi2_closed_form_bound(params: &HardInstanceParams, a: &SketchMatrix) -> f64 {
    chi2_bound_expression(params, a.rows())
}

/// Right-hand side of the lemma: `chi2 bound + 1`.
pub fn lemma1_rhs(params: &HardInstanceParams, m: usize) -> f64 {
    chi2_bound_expression(params, m) + 1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Check {
    /// `|S|^-2 sum_{i,j in S} exp(C1^2 n^(2/p) <A_i, A_j>)`; `+inf` past f64 range.
    pub lhs: f64,
    pub log_lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub preconditions_met: bool,
    pub set_size: usize,
}

/// Evaluates both sides of the lemma for `a`. The left side streams the Gram
/// pass over `S` in the log domain.
pub fn lemma1_check(a: &SketchMatrix, params: &HardInstanceParams) -> Result<Lemma1Check> {
    let set = small_column_set(a)?;
    let m = a.rows();
    let cols = a.gather_columns(set.indices());
    let scale = params.spike * params.spike;
    let log_w = -(set.len() as f64).ln();
    let log_lhs = pairwise_log_sum_exp(&cols, m, scale, &vec![log_w; set.len()]);
    let rhs = lemma1_rhs(params, m);
    let threshold = measurement_threshold_real(params.n, params.p, params.eps)?;
    let preconditions_met = (m as f64) < threshold && set.len() as f64 >= 0.99 * params.n as f64;
    Ok(Lemma1Check {
        lhs: log_lhs.exp(),
        log_lhs,
        rhs,
        holds: log_lhs <= rhs.ln() + 1e-9f64.ln_1p(),
        preconditions_met,
        set_size: set.len(),
    })
}

/// How the two truncation terms of the chain are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// `1/100` each, from the Markov arguments.
    Analytic,
    /// Monte Carlo frequencies of the two failure events.
    MonteCarlo { trials: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSettings {
    pub conditioning: Conditioning,
    /// Target constant `c` for `chi2 <= c`.
    pub chi2_budget: f64,
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self {
            conditioning: Conditioning::Analytic,
            chi2_budget: 0.46,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub m_threshold: usize,
    pub lemma1_lhs: f64,
    pub lemma1_rhs: f64,
    pub chi2_bound: f64,
    pub tv_tilde: f64,
    pub tv_bar: f64,
    pub tv_total: f64,
    pub success_ceiling: f64,
    /// Whether the exact chi-square is within the configured budget `c`.
    pub chi2_within_budget: bool,
    /// `ln(1 + chi2)` of the restricted spiked mixture; finite even when chi2
    /// itself is not representable.
    pub log1p_chi2: f64,
    pub lemma1_holds: bool,
    pub lemma1_preconditions_met: bool,
}

/// Composes the chain
/// `V(E1, E2) <= V(Ebar1, Etilde2) + |Sbar|/n + P(E^c) + P(F^c)` and the
/// success ceiling `(1 + V) / 2`. Each stage is clamped to 1.
pub fn success_probability_bound(
    a: &SketchMatrix,
    params: &HardInstanceParams,
    settings: &ChainSettings,
) -> Result<BoundReport> {
    let set = small_column_set(a)?;
    let mix = mixture_from_sketch(a, &set, params)?;
    let log1p_chi2 = log1p_chi2_mixture(&mix);
    let lemma = lemma1_check(a, params)?;
    let tv_tilde = tv_upper_from_log1p_chi2(log1p_chi2);
    let tv_bar = (tv_tilde + set.complement_len() as f64 / params.n as f64).min(1.0);
    let (e_term, f_term) = match settings.conditioning {
        Conditioning::Analytic => (0.01, 0.01),
        Conditioning::MonteCarlo { trials, seed } => (
            event_probability_mc(params, TruncationEvent::EComplement, trials, seed)?.value,
            event_probability_mc(params, TruncationEvent::FComplement, trials, seed)?.value,
        ),
    };
    let tv_total = (tv_bar + e_term + f_term).min(1.0);
    Ok(BoundReport {
        m_threshold: measurement_threshold(params.n, params.p, params.eps)?,
        lemma1_lhs: lemma.lhs,
        lemma1_rhs: lemma.rhs,
        chi2_bound: chi2_closed_form_bound(params, a),
        tv_tilde,
        tv_bar,
        tv_total,
        success_ceiling: 0.5 * (1.0 + tv_total),
        chi2_within_budget: log1p_chi2 <= settings.chi2_budget.ln_1p(),
        log1p_chi2,
        lemma1_holds: lemma.holds,
        lemma1_preconditions_met: lemma.preconditions_met,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::chi2_mixture_exact;
    use crate::sketch::make_orthonormal_sketch;
    use approx::assert_relative_eq;

    #[test]
    fn threshold_at_small_n_is_zero() {
        assert_eq!(measurement_threshold(1, 4.0, 0.25).unwrap(), 0);
        assert_eq!(measurement_threshold(1, 7.0, 0.1).unwrap(), 0);
    }

    #[test]
    fn threshold_at_a_million() {
        let real = measurement_threshold_real(1_000_000, 4.0, 0.25).unwrap();
        let c1 = 4.0 * 300f64.powf(0.25) + 10.0;
        let want = 0.25 / (100.0 * c1 * c1) * 1000.0 * 1e6f64.ln();
        assert_relative_eq!(real, want, max_relative = 1e-12);
        assert_relative_eq!(real, 0.048_64, max_relative = 1e-3);
        assert_eq!(measurement_threshold(1_000_000, 4.0, 0.25).unwrap(), 0);
    }

    #[test]
    fn threshold_rejects_bad_parameters() {
        assert!(measurement_threshold(100, 2.0, 0.1).is_err());
        assert!(measurement_threshold(100, 4.0, 0.5).is_err());
    }

    #[test]
    fn threshold_is_monotone_in_n() {
        let mut prev = 0.0;
        for n in (1..5000).step_by(7) {
            let t = measurement_threshold_real(n, 16.0, 0.8).unwrap();
            assert!(t >= prev);
            prev = t;
        }
    }

    #[test]
    fn bound_expression_zero_at_m_zero() {
        let prm = HardInstanceParams::new(1024, 4.0, None).unwrap();
        assert_eq!(chi2_bound_expression(&prm, 0), 0.0);
    }

    #[test]
    fn bound_decays_along_the_threshold() {
        let (p, eps) = (4.0, 0.25);
        let seq: Vec<f64> = (10..=20)
            .map(|k| {
                let n = 1usize << k;
                let prm = HardInstanceParams::new(n, p, Some(eps)).unwrap();
                let m = measurement_threshold_real(n, p, eps).unwrap();
                let nf = n as f64;
                1.03 * prm.c1.powi(4)
                    * (nf.powf(-2.0 + 4.0 / p + eps) * m + nf.powf(2.0 / p - 1.0) * m.sqrt())
            })
            .collect();
        for w in seq.windows(2) {
            assert!(w[1] < w[0], "{seq:?}");
        }
    }

    #[test]
    fn basis_rows_give_unit_lhs() {
        let a = SketchMatrix::from_basis_rows(&[0, 1], 400).unwrap();
        let prm = HardInstanceParams::new(400, 4.0, None).unwrap();
        let c = lemma1_check(&a, &prm).unwrap();
        assert_eq!(c.lhs, 1.0);
        assert!(c.holds);
        assert_eq!(c.set_size, 398);
    }

    #[test]
    fn lhs_matches_chi2_plus_one() {
        let prm = HardInstanceParams::new(128, 8.0, None).unwrap();
        let a = make_orthonormal_sketch(2, 128, 3).unwrap();
        let c = lemma1_check(&a, &prm).unwrap();
        let set = small_column_set(&a).unwrap();
        let chi2 = chi2_mixture_exact(&mixture_from_sketch(&a, &set, &prm).unwrap()).unwrap();
        assert_relative_eq!(chi2, c.lhs - 1.0, max_relative = 1e-9);
        assert!(c.lhs >= 1.0);
    }

    #[test]
    fn degenerate_chain_gives_051() {
        let a = SketchMatrix::from_basis_rows(&[0], 1000).unwrap();
        let prm = HardInstanceParams::new(1000, 4.0, None).unwrap();
        let r = success_probability_bound(&a, &prm, &ChainSettings::default()).unwrap();
        // The spike column e_0 leaves S, every remaining column is zero.
        assert_eq!(r.tv_tilde, 0.0);
        assert_relative_eq!(r.tv_bar, 0.001);
        assert_relative_eq!(
            r.success_ceiling,
            0.5 * (1.0 + 0.001 + 0.02),
            max_relative = 1e-12
        );
        assert!(r.chi2_within_budget);
    }

    #[test]
    fn chain_is_monotone_and_bounded() {
        let prm = HardInstanceParams::new(256, 4.0, None).unwrap();
        for (m, seed) in [(1, 1), (4, 2), (16, 3), (64, 4)] {
            let a = make_orthonormal_sketch(m, 256, seed).unwrap();
            let r = success_probability_bound(&a, &prm, &ChainSettings::default()).unwrap();
            assert!(r.tv_tilde <= r.tv_bar && r.tv_bar <= r.tv_total && r.tv_total <= 1.0);
            assert!((0.5..=1.0).contains(&r.success_ceiling));
            assert!(r.lemma1_lhs >= 1.0);
        }
    }

    #[test]
    fn monte_carlo_conditioning_uses_event_frequencies() {
        let prm = HardInstanceParams::new(4096, 4.0, None).unwrap();
        let a = SketchMatrix::from_basis_rows(&[0], 4096).unwrap();
        let settings = ChainSettings {
            conditioning: Conditioning::MonteCarlo {
                trials: 500,
                seed: 1,
            },
            ..Default::default()
        };
        let r = success_probability_bound(&a, &prm, &settings).unwrap();
        // Both failure events are essentially impossible at this size.
        assert_relative_eq!(r.tv_total, r.tv_bar);
    }
}
