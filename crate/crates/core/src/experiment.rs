//! Reproducible experiment runs tying empirical estimator success to the
//! analytic bound chain, and their JSON/CSV reports.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bounds::{
    measurement_threshold, measurement_threshold_real, success_probability_bound, ChainSettings,
    Conditioning,
};
use crate::distinguish::{evaluate_estimator, LrEstimator, PluginEstimator};
use crate::error::{Error, Result};
use crate::hard_instance::HardInstanceParams;
use crate::rng::child_seed;
use crate::sketch::make_orthonormal_sketch;

/// Sketch sizes to run: `auto` or an explicit comma-separated list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MSpec {
    /// `max(1, threshold)`, doubling, capped by and ending at `n`.
    Auto,
    List(Vec<usize>),
}

impl FromStr for MSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(MSpec::Auto);
        }
        let list = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|e| format!("bad m `{t}`: {e}"))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if list.is_empty() {
            return Err("empty m list".into());
        }
        Ok(MSpec::List(list))
    }
}

impl TryFrom<String> for MSpec {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<MSpec> for String {
    fn from(m: MSpec) -> String {
        m.to_string()
    }
}

impl fmt::Display for MSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MSpec::Auto => f.write_str("auto"),
            MSpec::List(v) => {
                let parts: Vec<String> = v.iter().map(|m| m.to_string()).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditioningMode {
    Analytic,
    Mc,
}

impl FromStr for ConditioningMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "analytic" => Ok(Self::Analytic),
            "mc" => Ok(Self::Mc),
            other => Err(format!("unknown conditioning `{other}` (analytic|mc)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown format `{other}` (json|csv)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub p: f64,
    /// `None` selects `(1 - 2/p) / 2`.
    pub eps: Option<f64>,
    pub seed: u64,
    pub trials: usize,
    pub m: MSpec,
    pub conditioning: ConditioningMode,
    pub chi2_budget: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 4096,
            p: 4.0,
            eps: None,
            seed: 0,
            trials: 10_000,
            m: MSpec::Auto,
            conditioning: ConditioningMode::Analytic,
            chi2_budget: 0.46,
        }
    }
}

impl ExperimentConfig {
    pub fn params(&self) -> Result<HardInstanceParams> {
        HardInstanceParams::new(self.n, self.p, self.eps)
    }

    /// Concrete sketch sizes, validated against `1 <= m <= n`.
    pub fn m_values(&self) -> Result<Vec<usize>> {
        let prm = self.params()?;
        let list = match &self.m {
            MSpec::List(v) => v.clone(),
            MSpec::Auto => {
                let mut m = measurement_threshold(prm.n, prm.p, prm.eps)?.max(1);
                let mut v = Vec::new();
                while m < self.n {
                    v.push(m);
                    m *= 2;
                }
                v.push(self.n);
                v
            }
        };
        if let Some(&bad) = list.iter().find(|&&m| m == 0 || m > self.n) {
            return Err(Error::InvalidShape { m: bad, n: self.n });
        }
        Ok(list)
    }

    fn validate(&self) -> Result<()> {
        if self.trials < 100 {
            return Err(Error::TooFewTrials {
                min: 100,
                got: self.trials,
            });
        }
        if self.chi2_budget.is_nan() || self.chi2_budget <= 0.0 {
            return Err(Error::OutOfRange {
                name: "chi2_budget",
                range: "(0, inf)",
                value: self.chi2_budget,
            });
        }
        Ok(())
    }
}

/// One row of an experiment report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub n: usize,
    pub p: f64,
    pub m: usize,
    /// Absent when the exact value exceeds the f64 range.
    pub chi2_exact: Option<f64>,
    pub log1p_chi2: f64,
    pub tv_upper: f64,
    pub success_ceiling: f64,
    pub lr_success: f64,
    pub lr_se: f64,
    pub plugin_success: f64,
    pub plugin_se: f64,
    pub lemma1_lhs: f64,
    pub lemma1_rhs: f64,
    pub lemma1_holds: bool,
    pub wall_time: f64,
}

pub const CSV_HEADER: &str =
    "n,p,m,chi2_exact,log1p_chi2,tv_upper,success_ceiling,lr_success,lr_se,\
plugin_success,plugin_se,lemma1_lhs,lemma1_rhs,lemma1_holds,wall_time";

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

impl ExperimentRecord {
    pub fn csv_row(&self) -> String {
        [
            self.n.to_string(),
            fmt_float(self.p),
            self.m.to_string(),
            self.chi2_exact.map(fmt_float).unwrap_or_default(),
            fmt_float(self.log1p_chi2),
            fmt_float(self.tv_upper),
            fmt_float(self.success_ceiling),
            fmt_float(self.lr_success),
            fmt_float(self.lr_se),
            fmt_float(self.plugin_success),
            fmt_float(self.plugin_se),
            fmt_float(self.lemma1_lhs),
            fmt_float(self.lemma1_rhs),
            self.lemma1_holds.to_string(),
            fmt_float(self.wall_time),
        ]
        .join(",")
    }
}

/// `{"config": ..., "results": [...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report<C> {
    pub config: C,
    pub results: Vec<ExperimentRecord>,
}

impl<C: Serialize> Report<C> {
    pub fn write<W: Write>(&self, format: OutputFormat, mut w: W) -> Result<()> {
        match format {
            OutputFormat::Json => {
                serde_json::to_writer_pretty(&mut w, self)?;
                writeln!(w)?;
            }
            OutputFormat::Csv => {
                writeln!(w, "{CSV_HEADER}")?;
                for r in &self.results {
                    writeln!(w, "{}", r.csv_row())?;
                }
            }
        }
        Ok(())
    }
}

/// Runs every sketch size of `config` in ascending list order. Each size gets
/// its own matrix and trial seeds derived from `(seed, m)`, so a given row does
/// not depend on which other sizes are in the list.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report<ExperimentConfig>> {
    config.validate()?;
    let params = config.params()?;
    let results = config
        .m_values()?
        .into_iter()
        .map(|m| run_one(config, &params, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(Report {
        config: config.clone(),
        results,
    })
}

fn run_one(
    config: &ExperimentConfig,
    params: &HardInstanceParams,
    m: usize,
) -> Result<ExperimentRecord> {
    let start = Instant::now();
    let key = m as u64;
    let a = make_orthonormal_sketch(m, params.n, child_seed(config.seed, "sketch", key))?;
    let settings = ChainSettings {
        conditioning: match config.conditioning {
            ConditioningMode::Analytic => Conditioning::Analytic,
            ConditioningMode::Mc => Conditioning::MonteCarlo {
                trials: config.trials,
                seed: child_seed(config.seed, "events", key),
            },
        },
        chi2_budget: config.chi2_budget,
    };
    let bound = success_probability_bound(&a, params, &settings)?;
    let trial_seed = child_seed(config.seed, "trials", key);
    let lr = evaluate_estimator(
        &LrEstimator::new(&a, params)?,
        params,
        &a,
        config.trials,
        trial_seed,
    )?;
    let plugin = evaluate_estimator(&PluginEstimator, params, &a, config.trials, trial_seed)?;
    let chi2 = bound.log1p_chi2.exp_m1();
    Ok(ExperimentRecord {
        n: params.n,
        p: params.p,
        m,
        chi2_exact: chi2.is_finite().then_some(chi2),
        log1p_chi2: bound.log1p_chi2,
        tv_upper: bound.tv_tilde,
        success_ceiling: bound.success_ceiling,
        lr_success: lr.value,
        lr_se: lr.std_error,
        plugin_success: plugin.value,
        plugin_se: plugin.std_error,
        lemma1_lhs: bound.lemma1_lhs,
        lemma1_rhs: bound.lemma1_rhs,
        lemma1_holds: bound.lemma1_holds,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(flatten)]
    pub base: ExperimentConfig,
    pub n_list: Vec<usize>,
}

/// [`run_experiment`] for each dimension in `n_list`, rows concatenated.
pub fn run_sweep(config: &SweepConfig) -> Result<Report<SweepConfig>> {
    let mut results = Vec::new();
    for &n in &config.n_list {
        let cfg = ExperimentConfig {
            n,
            ..config.base.clone()
        };
        results.extend(run_experiment(&cfg)?.results);
    }
    Ok(Report {
        config: config.clone(),
        results,
    })
}

/// Constants and measurement threshold for `(n, p, eps)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSummary {
    pub n: usize,
    pub p: f64,
    pub eps: f64,
    pub t_p: f64,
    pub c: f64,
    pub c1: f64,
    pub spike: f64,
    pub m_threshold_real: f64,
    pub m_threshold: usize,
}

pub fn threshold_summary(n: usize, p: f64, eps: Option<f64>) -> Result<ThresholdSummary> {
    let prm = HardInstanceParams::new(n, p, eps)?;
    Ok(ThresholdSummary {
        n,
        p,
        eps: prm.eps,
        t_p: prm.t_p,
        c: prm.c,
        c1: prm.c1,
        spike: prm.spike,
        m_threshold_real: measurement_threshold_real(n, p, prm.eps)?,
        m_threshold: measurement_threshold(n, p, prm.eps)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mspec_parses_and_prints() {
        assert_eq!("auto".parse::<MSpec>().unwrap(), MSpec::Auto);
        assert_eq!(
            "1, 4,16".parse::<MSpec>().unwrap(),
            MSpec::List(vec![1, 4, 16])
        );
        assert_eq!(MSpec::List(vec![2, 8]).to_string(), "2,8");
        assert!("x".parse::<MSpec>().is_err());
    }

    #[test]
    fn auto_list_doubles_up_to_n() {
        let cfg = ExperimentConfig {
            n: 100,
            ..Default::default()
        };
        assert_eq!(cfg.m_values().unwrap(), vec![1, 2, 4, 8, 16, 32, 64, 100]);
    }

    #[test]
    fn explicit_list_is_validated() {
        let cfg = ExperimentConfig {
            n: 10,
            m: MSpec::List(vec![3, 11]),
            ..Default::default()
        };
        assert!(cfg.m_values().is_err());
    }

    #[test]
    fn threshold_summary_at_n1() {
        let s = threshold_summary(1, 3.0, None).unwrap();
        assert_eq!(s.m_threshold, 0);
        assert!(threshold_summary(10, 2.0, None).is_err());
    }

    #[test]
    fn small_run_has_one_row_per_m_and_exact_full_rank_plugin() {
        let cfg = ExperimentConfig {
            n: 64,
            trials: 200,
            m: MSpec::List(vec![1, 64]),
            ..Default::default()
        };
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.results.len(), 2);
        assert_eq!(r.results[1].plugin_success, 1.0);
        for row in &r.results {
            for v in [
                row.lr_success,
                row.plugin_success,
                row.tv_upper,
                row.success_ceiling,
            ] {
                assert!((0.0..=1.0).contains(&v));
            }
            assert!(row.lr_se >= 0.0 && row.plugin_se >= 0.0);
        }
    }

    #[test]
    fn too_few_trials_rejected() {
        let cfg = ExperimentConfig {
            n: 16,
            trials: 10,
            ..Default::default()
        };
        assert!(matches!(
            run_experiment(&cfg),
            Err(Error::TooFewTrials { .. })
        ));
    }
}
