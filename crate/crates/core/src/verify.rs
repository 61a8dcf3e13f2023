//! Self-contained property suites behind `lpsketch verify`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{lemma1_check, measurement_threshold_real};
use crate::divergence::{
    chi2_mixture_exact, chi2_monte_carlo, log1p_chi2_mixture, mixture_from_sketch,
    mixture_from_sketch_scaled, spike_mixture_in_input_space, tv_monte_carlo, GaussianMixture,
    StandardGaussian,
};
use crate::error::Result;
use crate::hard_instance::{event_probability_mc, HardInstanceParams, TruncationEvent};
use crate::rng;
use crate::sketch::{
    gram_frobenius_total, make_orthonormal_sketch, small_column_set, ORTHONORMAL_TOL,
};
use crate::stats::dot;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerifyKind {
    Lemma1,
    Chi2,
    Events,
    Frobenius,
    Dpi,
}

impl FromStr for VerifyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "lemma1" => Self::Lemma1,
            "chi2" => Self::Chi2,
            "events" => Self::Events,
            "frobenius" => Self::Frobenius,
            "dpi" => Self::Dpi,
            other => {
                return Err(format!(
                    "unknown suite `{other}` (lemma1|chi2|events|frobenius|dpi)"
                ))
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyConfig {
    pub n: usize,
    pub p: f64,
    pub eps: Option<f64>,
    pub m: Option<usize>,
    pub seed: u64,
    pub trials: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            n: 4096,
            p: 4.0,
            eps: None,
            m: None,
            seed: 0,
            trials: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

fn line(name: impl Into<String>, passed: bool, detail: String) -> CheckLine {
    CheckLine {
        name: name.into(),
        passed,
        detail,
    }
}

pub fn run_verify(kind: VerifyKind, cfg: &VerifyConfig) -> Result<Vec<CheckLine>> {
    match kind {
        VerifyKind::Frobenius => verify_frobenius(cfg),
        VerifyKind::Chi2 => verify_chi2(cfg),
        VerifyKind::Events => verify_events(cfg),
        VerifyKind::Lemma1 => verify_lemma1(cfg),
        VerifyKind::Dpi => verify_dpi(cfg),
    }
}

fn verify_frobenius(cfg: &VerifyConfig) -> Result<Vec<CheckLine>> {
    let m = cfg.m.unwrap_or(3.min(cfg.n));
    let mut out = Vec::new();
    for k in 0..5u64 {
        let a = make_orthonormal_sketch(m, cfg.n, rng::child_seed(cfg.seed, "verify-frob", k))?;
        let total = gram_frobenius_total(&a);
        let defect = a.orthonormality_defect();
        let set = small_column_set(&a)?;
        let ok = (total - m as f64).abs() <= 1e-6 * m as f64
            && defect <= ORTHONORMAL_TOL
            && (set.complement_len() as f64) < cfg.n as f64 / 100.0;
        out.push(line(
            format!("frobenius[{k}] m={m} n={}", cfg.n),
            ok,
            format!(
                "sum <A_i,A_j>^2 = {total:.12}, row defect = {defect:.2e}, |S^c| = {}",
                set.complement_len()
            ),
        ));
    }
    Ok(out)
}

/// Random mixture with `dim <= 8`, at most 32 components and `|mu|^2 <= 4`.
pub fn random_small_mixture<R: Rng + ?Sized>(r: &mut R) -> GaussianMixture {
    let dim = r.random_range(1..=8);
    let k = r.random_range(1..=32);
    let mut means = Vec::with_capacity(k * dim);
    for _ in 0..k {
        let v: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
        let norm = dot(&v, &v).sqrt().max(1e-12);
        let radius = 2.0 * r.random::<f64>();
        means.extend(v.iter().map(|x| x / norm * radius));
    }
    let raw: Vec<f64> = (0..k).map(|_| r.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let drift: f64 = 1.0 - weights.iter().sum::<f64>();
    weights[0] += drift;
    GaussianMixture::new(dim, means, weights).expect("valid random mixture")
}

fn verify_chi2(cfg: &VerifyConfig) -> Result<Vec<CheckLine>> {
    let trials = cfg.trials.max(1000);
    let mut out = Vec::new();
    for k in 0..5u64 {
        let mix = random_small_mixture(&mut rng::stream(cfg.seed, "verify-chi2-mix", k));
        let exact = chi2_mixture_exact(&mix)?;
        let mc = chi2_monte_carlo(&mix, trials, rng::child_seed(cfg.seed, "verify-chi2", k))?;
        let ok = (exact - mc.value).abs() <= 3.0 * mc.std_error;
        out.push(line(
            format!("chi2[{k}] dim={} k={}", mix.dim(), mix.components()),
            ok,
            format!(
                "exact = {exact:.6}, mc = {:.6} +- {:.6}",
                mc.value, mc.std_error
            ),
        ));
    }
    let mu = [0.6, 0.8];
    let single = chi2_mixture_exact(&GaussianMixture::uniform(2, mu.to_vec())?)?;
    let want = 1f64.exp_m1();
    out.push(line(
        "chi2 single mean closed form",
        ((single - want) / want).abs() <= 1e-10,
        format!("{single:.15} vs e - 1 = {want:.15}"),
    ));
    Ok(out)
}

fn verify_events(cfg: &VerifyConfig) -> Result<Vec<CheckLine>> {
    let prm = HardInstanceParams::new(cfg.n, cfg.p, cfg.eps)?;
    let trials = cfg.trials.max(100);
    let mut out = Vec::new();
    for (name, ev) in [
        ("P[|y|_p > C n^(1/p)]", TruncationEvent::EComplement),
        ("P[|x|_p < 4 C n^(1/p)]", TruncationEvent::FComplement),
    ] {
        let e = event_probability_mc(&prm, ev, trials, cfg.seed)?;
        out.push(line(
            name,
            e.value <= 0.01,
            format!(
                "{:.6} +- {:.6} (limit 0.01, n = {}, p = {})",
                e.value, e.std_error, cfg.n, cfg.p
            ),
        ));
    }
    Ok(out)
}

fn verify_lemma1(cfg: &VerifyConfig) -> Result<Vec<CheckLine>> {
    let prm = HardInstanceParams::new(cfg.n, cfg.p, cfg.eps)?;
    let threshold = measurement_threshold_real(prm.n, prm.p, prm.eps)?;
    let m = cfg
        .m
        .unwrap_or_else(|| (threshold.ceil() as usize).saturating_sub(1).max(1))
        .min(cfg.n);
    let mut out = Vec::new();
    for k in 0..3u64 {
        let a = make_orthonormal_sketch(m, cfg.n, rng::child_seed(cfg.seed, "verify-lemma1", k))?;
        let c = lemma1_check(&a, &prm)?;
        out.push(line(
            format!("lemma1[{k}] m={m} n={}", cfg.n),
            c.holds || !c.preconditions_met,
            format!(
                "lhs = {:.9e}, rhs = {:.9e}, holds = {}, preconditions met = {} (m < {threshold:.4})",
                c.lhs, c.rhs, c.holds, c.preconditions_met
            ),
        ));
        let set = small_column_set(&a)?;
        let l = log1p_chi2_mixture(&mixture_from_sketch(&a, &set, &prm)?);
        let rel =
            (l.exp_m1() - (c.log_lhs.exp_m1())).abs() / l.exp_m1().abs().max(f64::MIN_POSITIVE);
        let ok = if l.exp_m1().is_finite() {
            rel <= 1e-9
        } else {
            (l - c.log_lhs).abs() <= 1e-9 * l.abs()
        };
        out.push(line(
            format!("chi2 = lhs - 1 [{k}]"),
            ok,
            format!("ln(1+chi2) = {l:.12e}, ln(lhs) = {:.12e}", c.log_lhs),
        ));
    }
    Ok(out)
}

fn verify_dpi(cfg: &VerifyConfig) -> Result<Vec<CheckLine>> {
    let n = cfg.n.min(128);
    let m = cfg.m.unwrap_or(2).min(n);
    let trials = cfg.trials.max(1000);
    let prm = HardInstanceParams::new(n, cfg.p, cfg.eps)?;
    let mut out = Vec::new();
    for (k, scale) in [0.5, 1.0, 2.0, prm.spike].into_iter().enumerate() {
        let a = make_orthonormal_sketch(m, n, rng::child_seed(cfg.seed, "verify-dpi", k as u64))?;
        let set = small_column_set(&a)?;
        let input = spike_mixture_in_input_space(n, set.indices(), scale)?;
        let sketched = mixture_from_sketch_scaled(&a, &set, scale)?;
        let seed = rng::child_seed(cfg.seed, "verify-dpi-tv", k as u64);
        let v_in = tv_monte_carlo(&input, &StandardGaussian { dim: n }, trials, seed)?;
        let v_sk = tv_monte_carlo(&sketched, &StandardGaussian { dim: m }, trials, seed)?;
        let slack = 3.0 * v_in.std_error.hypot(v_sk.std_error);
        out.push(line(
            format!("dpi[{k}] n={n} m={m} scale={scale:.3}"),
            v_in.value >= v_sk.value - slack,
            format!(
                "V_input = {:.5} +- {:.5}, V_sketch = {:.5} +- {:.5}",
                v_in.value, v_in.std_error, v_sk.value, v_sk.std_error
            ),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frobenius_suite_passes() {
        let cfg = VerifyConfig {
            n: 64,
            m: Some(3),
            ..Default::default()
        };
        let lines = run_verify(VerifyKind::Frobenius, &cfg).unwrap();
        assert!(lines.iter().all(|l| l.passed), "{lines:?}");
    }

    #[test]
    fn kinds_parse() {
        for k in ["lemma1", "chi2", "events", "frobenius", "dpi"] {
            assert!(k.parse::<VerifyKind>().is_ok());
        }
        assert!("nope".parse::<VerifyKind>().is_err());
    }

    #[test]
    fn random_mixtures_respect_limits() {
        for i in 0..50 {
            let mix = random_small_mixture(&mut rng::stream(1, "t", i));
            assert!(mix.dim() <= 8 && mix.components() <= 32);
            for c in 0..mix.components() {
                assert!(dot(mix.mean(c), mix.mean(c)) <= 4.0 + 1e-12);
            }
        }
    }
}
