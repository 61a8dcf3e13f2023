//! Run settings merged from built-in defaults, an optional TOML file and
//! command-line flags, in increasing precedence.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use lpsketch::experiment::{ConditioningMode, ExperimentConfig, MSpec, OutputFormat, SweepConfig};
use lpsketch::verify::VerifyConfig;
use serde::Deserialize;

/// Every setting is optional so that an absent flag falls through to the
/// config file and then to the default.
#[derive(Args, Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Input dimension.
    #[arg(long)]
    pub n: Option<usize>,
    /// Moment order, p > 2.
    #[arg(long)]
    pub p: Option<f64>,
    /// Slack in (0, 1 - 2/p); defaults to (1 - 2/p) / 2.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Sketch sizes: `auto` or a comma-separated list.
    #[arg(long)]
    pub m: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// json or csv.
    #[arg(long)]
    pub format: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// analytic or mc.
    #[arg(long)]
    pub conditioning: Option<String>,
    /// Chi-square budget used to flag rows whose bound is informative.
    #[arg(long)]
    pub chi2_budget: Option<f64>,
    /// Dimensions for `sweep`, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Fields set in `self` win over those in `base`.
    pub fn over(self, base: Settings) -> Settings {
        Settings {
            n: self.n.or(base.n),
            p: self.p.or(base.p),
            eps: self.eps.or(base.eps),
            m: self.m.or(base.m),
            trials: self.trials.or(base.trials),
            seed: self.seed.or(base.seed),
            format: self.format.or(base.format),
            out: self.out.or(base.out),
            conditioning: self.conditioning.or(base.conditioning),
            chi2_budget: self.chi2_budget.or(base.chi2_budget),
            n_list: self.n_list.or(base.n_list),
        }
    }

    pub fn format(&self) -> Result<Option<OutputFormat>> {
        self.format
            .as_deref()
            .map(|f| f.parse().map_err(anyhow::Error::msg))
            .transpose()
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let d = ExperimentConfig::default();
        Ok(ExperimentConfig {
            n: self.n.unwrap_or(d.n),
            p: self.p.unwrap_or(d.p),
            eps: self.eps.or(d.eps),
            seed: self.seed.unwrap_or(d.seed),
            trials: self.trials.unwrap_or(d.trials),
            m: match &self.m {
                Some(s) => s.parse::<MSpec>().map_err(anyhow::Error::msg)?,
                None => d.m,
            },
            conditioning: match &self.conditioning {
                Some(s) => s.parse::<ConditioningMode>().map_err(anyhow::Error::msg)?,
                None => d.conditioning,
            },
            chi2_budget: self.chi2_budget.unwrap_or(d.chi2_budget),
        })
    }

    pub fn sweep(&self) -> Result<SweepConfig> {
        let base = self.experiment()?;
        let n_list = self.n_list.clone().unwrap_or_else(|| vec![base.n]);
        anyhow::ensure!(!n_list.is_empty(), "--n-list is empty");
        Ok(SweepConfig { base, n_list })
    }

    pub fn verify(&self) -> Result<VerifyConfig> {
        let d = VerifyConfig::default();
        let m = match self.m.as_deref() {
            None | Some("auto") => None,
            Some(s) => Some(
                s.trim()
                    .parse::<usize>()
                    .with_context(|| format!("verify takes a single m, got `{s}`"))?,
            ),
        };
        Ok(VerifyConfig {
            n: self.n.unwrap_or(d.n),
            p: self.p.unwrap_or(d.p),
            eps: self.eps.or(d.eps),
            m,
            seed: self.seed.unwrap_or(d.seed),
            trials: self.trials.unwrap_or(d.trials),
        })
    }
}
