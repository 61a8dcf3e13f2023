//! Constants and samplers for the hard input distributions.
//!
//! The null input is `y ~ N(0, I_n)`; the spiked input adds
//! `C1 * n^(1/p) * e_t` at a uniform coordinate `t`. The conditioned variants
//! truncate to `|x|_p <= C n^(1/p)` and `|x|_p >= 4 C n^(1/p)` respectively.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::par;
use crate::rng;
use crate::stats::Estimate;

/// Default rejection budget for the conditioned samplers.
pub const DEFAULT_MAX_RETRIES: usize = 1000;

/// `E|Y|^p` for a standard normal `Y`: `2^(p/2) Gamma((p+1)/2) / sqrt(pi)`.
pub fn gaussian_abs_moment(p: f64) -> Result<f64> {
    Ok(log_gaussian_abs_moment(p)?.exp())
}

/// Natural log of [`gaussian_abs_moment`]; finite for every finite `p > 0`.
pub fn log_gaussian_abs_moment(p: f64) -> Result<f64> {
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::InvalidAbsMomentOrder(p));
    }
    Ok(0.5 * p * std::f64::consts::LN_2 + ln_gamma(0.5 * (p + 1.0))
        - 0.5 * std::f64::consts::PI.ln())
}

/// `|x|_p`, computed relative to the largest coordinate so large `p` does not
/// overflow.
pub fn pnorm(x: &[f64], p: f64) -> f64 {
    let max = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if max == 0.0 || !max.is_finite() {
        return max;
    }
    let s: f64 = x.iter().map(|v| (v.abs() / max).powf(p)).sum();
    max * s.powf(1.0 / p)
}

/// Dimension, moment order, slack and the derived constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardInstanceParams {
    pub n: usize,
    pub p: f64,
    pub eps: f64,
    /// `E|Y|^p` for standard normal `Y`.
    pub t_p: f64,
    /// Truncation constant `(100 t_p)^(1/p)`.
    pub c: f64,
    /// Spike constant `4 C + 10`.
    pub c1: f64,
    /// `C1 * n^(1/p)`.
    pub spike: f64,
}

impl HardInstanceParams {
    /// Derives every constant; `eps` defaults to `(1 - 2/p) / 2`.
    pub fn new(n: usize, p: f64, eps: Option<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::ZeroDimension);
        }
        let eps = validate_p_eps(p, eps)?;
        let log_t = log_gaussian_abs_moment(p)?;
        let c = ((100f64.ln() + log_t) / p).exp();
        let c1 = 4.0 * c + 10.0;
        Ok(Self {
            n,
            p,
            eps,
            t_p: log_t.exp(),
            c,
            c1,
            spike: c1 * n_root(n, p),
        })
    }

    /// `n^(1/p)`.
    pub fn n_root(&self) -> f64 {
        n_root(self.n, self.p)
    }

    /// Upper edge of the null support, `C n^(1/p)`.
    pub fn null_radius(&self) -> f64 {
        self.c * self.n_root()
    }

    /// Lower edge of the spiked support, `4 C n^(1/p)`.
    pub fn spiked_radius(&self) -> f64 {
        4.0 * self.c * self.n_root()
    }

    /// `(n t_p)^(1/p)`, the typical p-norm of a null draw.
    pub fn typical_null_norm(&self) -> f64 {
        (((self.n as f64).ln() + self.t_p.ln()) / self.p).exp()
    }

    /// `(n t_p + spike^p)^(1/p)`, the typical p-norm of a spiked draw.
    pub fn typical_spiked_norm(&self) -> f64 {
        let a = self.typical_null_norm();
        let b = self.spike;
        let hi = a.max(b);
        hi * ((a / hi).powf(self.p) + (b / hi).powf(self.p)).powf(1.0 / self.p)
    }
}

fn n_root(n: usize, p: f64) -> f64 {
    (n as f64).powf(1.0 / p)
}

/// Checks `p > 2` and `0 < eps < 1 - 2/p`, filling the default slack.
pub(crate) fn validate_p_eps(p: f64, eps: Option<f64>) -> Result<f64> {
    if !(p.is_finite() && p > 2.0) {
        return Err(Error::InvalidMomentOrder(p));
    }
    let upper = 1.0 - 2.0 / p;
    let eps = eps.unwrap_or(0.5 * upper);
    if !(eps > 0.0 && eps < upper) {
        return Err(Error::InvalidSlack { eps, upper });
    }
    Ok(eps)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    BaseNull,
    BaseSpiked,
    CondNull,
    CondSpiked,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::BaseNull => "BaseNull",
            Source::BaseSpiked => "BaseSpiked",
            Source::CondNull => "CondNull",
            Source::CondSpiked => "CondSpiked",
        }
    }
}

/// One input vector together with where it came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub source: Source,
    /// Zero-based spike coordinate, present iff the sample is spiked.
    pub spike_index: Option<usize>,
    pub pnorm: f64,
}

fn gaussian_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn sample_base_null<R: Rng + ?Sized>(
    params: &HardInstanceParams,
    rng: &mut R,
) -> LabeledSample {
    let x = gaussian_vector(params.n, rng);
    LabeledSample {
        pnorm: pnorm(&x, params.p),
        x,
        source: Source::BaseNull,
        spike_index: None,
    }
}

pub fn sample_base_spiked<R: Rng + ?Sized>(
    params: &HardInstanceParams,
    rng: &mut R,
) -> LabeledSample {
    let mut x = gaussian_vector(params.n, rng);
    let t = rng.random_range(0..params.n);
    x[t] += params.spike;
    LabeledSample {
        pnorm: pnorm(&x, params.p),
        x,
        source: Source::BaseSpiked,
        spike_index: Some(t),
    }
}

/// Which conditioned law to draw from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Conditioned {
    /// Null conditioned on `|x|_p <= C n^(1/p)`.
    Null,
    /// Spiked conditioned on `|x|_p >= 4 C n^(1/p)`.
    Spiked,
}

/// Accepted conditioned sample and the number of base draws it took.
#[derive(Clone, Debug)]
pub struct ConditionedDraw {
    pub sample: LabeledSample,
    pub attempts: usize,
}

pub fn in_null_event(params: &HardInstanceParams, pnorm: f64) -> bool {
    pnorm <= params.null_radius()
}

pub fn in_spiked_event(params: &HardInstanceParams, pnorm: f64) -> bool {
    pnorm >= params.spiked_radius()
}

/// Rejection sampling from the conditioned laws.
pub fn sample_conditioned<R: Rng + ?Sized>(
    params: &HardInstanceParams,
    which: Conditioned,
    rng: &mut R,
    max_retries: usize,
) -> Result<ConditionedDraw> {
    if max_retries == 0 {
        return Err(Error::OutOfRange {
            name: "max_retries",
            range: "[1, inf)",
            value: 0.0,
        });
    }
    for attempt in 1..=max_retries {
        let mut s = match which {
            Conditioned::Null => sample_base_null(params, rng),
            Conditioned::Spiked => sample_base_spiked(params, rng),
        };
        let accept = match which {
            Conditioned::Null => in_null_event(params, s.pnorm),
            Conditioned::Spiked => in_spiked_event(params, s.pnorm),
        };
        if accept {
            s.source = match which {
                Conditioned::Null => Source::CondNull,
                Conditioned::Spiked => Source::CondSpiked,
            };
            return Ok(ConditionedDraw {
                sample: s,
                attempts: attempt,
            });
        }
    }
    Err(Error::RetriesExhausted(max_retries))
}

/// Failure events of the two truncations under their base laws.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TruncationEvent {
    /// `|y|_p > C n^(1/p)` under the null base law.
    EComplement,
    /// `|x|_p < 4 C n^(1/p)` under the spiked base law.
    FComplement,
}

/// Monte Carlo frequency of a truncation failure, trial `i` using stream
/// `(seed, "event", i)`.
pub fn event_probability_mc(
    params: &HardInstanceParams,
    event: TruncationEvent,
    trials: usize,
    seed: u64,
) -> Result<Estimate> {
    if trials < 100 {
        return Err(Error::TooFewTrials {
            min: 100,
            got: trials,
        });
    }
    let tag = match event {
        TruncationEvent::EComplement => "event-e",
        TruncationEvent::FComplement => "event-f",
    };
    let hits = par::map_range(trials, |i| {
        let mut r = rng::stream(seed, tag, i as u64);
        match event {
            TruncationEvent::EComplement => {
                !in_null_event(params, sample_base_null(params, &mut r).pnorm)
            }
            TruncationEvent::FComplement => {
                !in_spiked_event(params, sample_base_spiked(params, &mut r).pnorm)
            }
        }
    });
    Ok(Estimate::proportion(
        hits.iter().filter(|&&h| h).count(),
        trials,
    ))
}

/// CSV with header `source,spike_index,pnorm`, optionally followed by
/// `x0..x{n-1}`. An absent spike index is an empty field.
pub fn write_samples_csv<W: Write>(
    samples: &[LabeledSample],
    include_vectors: bool,
    mut w: W,
) -> Result<()> {
    let n = samples.first().map_or(0, |s| s.x.len());
    let mut header = String::from("source,spike_index,pnorm");
    if include_vectors {
        for i in 0..n {
            header.push_str(&format!(",x{i}"));
        }
    }
    writeln!(w, "{header}")?;
    for s in samples {
        let idx = s.spike_index.map(|t| t.to_string()).unwrap_or_default();
        write!(w, "{},{},{:.16e}", s.source.as_str(), idx, s.pnorm)?;
        if include_vectors {
            for v in &s.x {
                write!(w, ",{v:.16e}")?;
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Composite Simpson on [0, 40] of 2 y^p phi(y).
    fn abs_moment_quadrature(p: f64) -> f64 {
        let (a, b, steps) = (0.0f64, 40.0f64, 200_000usize);
        let h = (b - a) / steps as f64;
        let f =
            |y: f64| 2.0 * y.powf(p) * (-0.5 * y * y).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = f(a) + f(b);
        for i in 1..steps {
            let y = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(y);
        }
        s * h / 3.0
    }

    #[test]
    fn abs_moment_known_values() {
        assert_relative_eq!(gaussian_abs_moment(2.0).unwrap(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(gaussian_abs_moment(4.0).unwrap(), 3.0, max_relative = 1e-12);
        // Quadrature oracle gives 1.595769121605...; frozen to 12 digits.
        let q = abs_moment_quadrature(3.0);
        assert_relative_eq!(q, 1.595_769_121_605_73, max_relative = 1e-11);
        assert_relative_eq!(gaussian_abs_moment(3.0).unwrap(), q, max_relative = 1e-11);
    }

    #[test]
    fn abs_moment_rejects_bad_orders() {
        assert!(gaussian_abs_moment(0.0).is_err());
        assert!(gaussian_abs_moment(-1.0).is_err());
        assert!(gaussian_abs_moment(f64::NAN).is_err());
        assert!(gaussian_abs_moment(f64::INFINITY).is_err());
    }

    #[test]
    fn abs_moment_large_p_is_finite_in_log() {
        let l = log_gaussian_abs_moment(600.0).unwrap();
        assert!(l.is_finite() && l > 709.0);
    }

    #[test]
    fn constants_at_p4() {
        let prm = HardInstanceParams::new(10_000, 4.0, None).unwrap();
        assert_relative_eq!(prm.c1, 4.0 * 300f64.powf(0.25) + 10.0, max_relative = 1e-13);
        assert_relative_eq!(prm.c1, 26.647_165_801, max_relative = 1e-10);
        assert_relative_eq!(prm.spike, prm.c1 * 10.0, max_relative = 1e-13);
        assert_relative_eq!(prm.c1, 4.0 * prm.c + 10.0, max_relative = 1e-15);
        assert_eq!(prm.eps, 0.25);
    }

    #[test]
    fn rejects_out_of_regime() {
        assert!(matches!(
            HardInstanceParams::new(10, 2.0, None),
            Err(Error::InvalidMomentOrder(_))
        ));
        assert!(matches!(
            HardInstanceParams::new(10, 1.5, None),
            Err(Error::InvalidMomentOrder(_))
        ));
        assert!(matches!(
            HardInstanceParams::new(10, 4.0, Some(0.5)),
            Err(Error::InvalidSlack { .. })
        ));
        assert!(matches!(
            HardInstanceParams::new(10, 4.0, Some(0.0)),
            Err(Error::InvalidSlack { .. })
        ));
        assert!(HardInstanceParams::new(10, 2.5, None).is_ok());
        assert!(matches!(
            HardInstanceParams::new(0, 4.0, None),
            Err(Error::ZeroDimension)
        ));
    }

    #[test]
    fn c1_grows_like_sqrt_p_eventually() {
        let c1 = |p: f64| HardInstanceParams::new(1, p, None).unwrap().c1;
        let mut prev = 0.0;
        for k in 3..14 {
            let p = 2f64.powi(k);
            let ratio = c1(2.0 * p) / c1(p);
            assert!(ratio > prev, "ratio not increasing at p = {p}");
            assert!(ratio < std::f64::consts::SQRT_2);
            prev = ratio;
        }
        assert!(prev > 1.38, "ratio at p = 2^13 is {prev}");
    }

    #[test]
    fn pnorm_basics() {
        assert_relative_eq!(pnorm(&[3.0, 4.0], 2.0), 5.0, max_relative = 1e-15);
        assert_eq!(pnorm(&[0.0, 0.0], 4.0), 0.0);
        // no overflow for large p
        let v = pnorm(&[1e10, 1e10], 400.0);
        assert_relative_eq!(v, 1e10 * 2f64.powf(1.0 / 400.0), max_relative = 1e-12);
    }

    #[test]
    fn base_samples_in_one_dimension() {
        let prm = HardInstanceParams::new(1, 4.0, None).unwrap();
        let mut r = rng::stream(1, "t", 0);
        let s = sample_base_null(&prm, &mut r);
        assert_eq!(s.pnorm, s.x[0].abs());
        let mut r1 = rng::stream(1, "t", 0);
        let mut r2 = rng::stream(1, "t", 0);
        let y = sample_base_null(&prm, &mut r1).x[0];
        let s = sample_base_spiked(&prm, &mut r2);
        assert_eq!(s.spike_index, Some(0));
        assert_eq!(s.x[0], y + prm.c1);
    }

    #[test]
    fn sampling_is_deterministic() {
        let prm = HardInstanceParams::new(32, 4.0, None).unwrap();
        let a = sample_base_null(&prm, &mut rng::stream(9, "d", 4));
        let b = sample_base_null(&prm, &mut rng::stream(9, "d", 4));
        assert_eq!(a, b);
    }

    #[test]
    fn conditioned_samples_respect_events() {
        let prm = HardInstanceParams::new(64, 4.0, None).unwrap();
        for i in 0..200 {
            let mut r = rng::stream(3, "c", i);
            let d = sample_conditioned(&prm, Conditioned::Null, &mut r, 100).unwrap();
            assert!(d.sample.pnorm <= prm.null_radius());
            assert_eq!(d.sample.source, Source::CondNull);
            let d = sample_conditioned(&prm, Conditioned::Spiked, &mut r, 100).unwrap();
            assert!(d.sample.pnorm >= prm.spiked_radius());
            assert_eq!(d.sample.source, Source::CondSpiked);
        }
    }

    #[test]
    fn exhaustion_is_reported() {
        // With n = 1 the spiked event fails only if y < 4C - C1 = -10, so the
        // null event is the one to starve: force a tiny budget on many draws.
        let prm = HardInstanceParams::new(1, 4.0, None).unwrap();
        let mut r = rng::stream(0, "x", 0);
        let mut exhausted = false;
        for _ in 0..200_000 {
            if let Err(Error::RetriesExhausted(1)) =
                sample_conditioned(&prm, Conditioned::Null, &mut r, 1)
            {
                exhausted = true;
                break;
            }
        }
        assert!(exhausted);
        assert!(sample_conditioned(&prm, Conditioned::Null, &mut r, 0).is_err());
    }

    #[test]
    fn csv_export_header_and_rows() {
        let prm = HardInstanceParams::new(3, 4.0, None).unwrap();
        let s = vec![
            sample_base_null(&prm, &mut rng::stream(1, "csv", 0)),
            sample_base_spiked(&prm, &mut rng::stream(1, "csv", 1)),
        ];
        let mut out = Vec::new();
        write_samples_csv(&s, true, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "source,spike_index,pnorm,x0,x1,x2");
        assert!(lines[1].starts_with("BaseNull,,"));
        assert!(lines[2].starts_with("BaseSpiked,"));
        assert_eq!(lines[2].split(',').count(), 6);
    }
}
