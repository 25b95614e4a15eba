//! Chain settings from an optional TOML file, overridden by flags.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use sshchain::chain_model::ChainParams;

use crate::error::CliError;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub n_sites: Option<usize>,
    pub eta: Option<f64>,
    pub delta: Option<f64>,
    pub k_dip: Option<f64>,
    pub b_z: Option<f64>,
    pub seed: Option<u64>,
    pub disorder: Option<DisorderSection>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisorderSection {
    pub d_j: Option<f64>,
    pub d_k: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

/// Flags shared by every chain-based subcommand.
#[derive(Debug, Clone, Args)]
pub struct ChainArgs {
    /// TOML file with keys n_sites, eta, delta, k_dip, b_z, seed, [disorder] d_j, d_k
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of sites
    #[arg(long = "n")]
    pub n_sites: Option<usize>,
    /// Dimerization in [-1, 1]
    #[arg(long, allow_hyphen_values = true)]
    pub eta: Option<f64>,
    /// zz anisotropy
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<f64>,
    /// Dipolar strength K/a^3 in units of J
    #[arg(long)]
    pub k_dip: Option<f64>,
    /// Uniform Zeeman field in units of J
    #[arg(long, allow_hyphen_values = true)]
    pub b_z: Option<f64>,
    /// Relative exchange disorder amplitude
    #[arg(long)]
    pub d_j: Option<f64>,
    /// Relative dipolar disorder amplitude
    #[arg(long)]
    pub d_k: Option<f64>,
    /// Master seed for stochastic quantities
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Fully resolved chain settings, recorded in every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub params: ChainParams,
    pub d_j: f64,
    pub d_k: f64,
    pub seed: Option<u64>,
}

impl ChainArgs {
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        self.resolve_with(None)
    }

    /// `k_dip_default` applies when neither the flags nor the file set it.
    pub fn resolve_with(&self, k_dip_default: Option<f64>) -> Result<Resolved, CliError> {
        let file = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let disorder = file.disorder.clone().unwrap_or_default();
        let n = self
            .n_sites
            .or(file.n_sites)
            .ok_or_else(|| CliError::Usage("missing required --n (or n_sites in the config file)".into()))?;
        let mut params = ChainParams::new(
            n,
            self.eta.or(file.eta).unwrap_or(0.0),
            self.delta.or(file.delta).unwrap_or(0.0),
        );
        params.k_dip = self.k_dip.or(file.k_dip).or(k_dip_default).unwrap_or(0.0);
        params.b_z = self.b_z.or(file.b_z).unwrap_or(0.0);
        params.validate()?;
        Ok(Resolved {
            params,
            d_j: self.d_j.or(disorder.d_j).unwrap_or(0.0),
            d_k: self.d_k.or(disorder.d_k).unwrap_or(0.0),
            seed: self.seed.or(file.seed),
        })
    }
}
