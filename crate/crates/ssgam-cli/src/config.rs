//! Run configuration: a single TOML document with a flat key hierarchy.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use ssgam::sampler::{HyperParams, McmcConfig};
use ssgam::Decomposition;

fn default_family() -> String {
    "gaussian".to_string()
}

fn default_decomposition() -> String {
    "orthogonal".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McmcSection {
    pub n_chains: Option<usize>,
    pub chain_length: Option<usize>,
    pub burnin: Option<usize>,
    pub thin: Option<usize>,
    pub block_size_alpha: Option<usize>,
    pub block_size_xi: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperSection {
    pub a_tau: Option<f64>,
    pub b_tau: Option<f64>,
    pub v0: Option<f64>,
    pub a_w: Option<f64>,
    pub b_w: Option<f64>,
    pub a_phi: Option<f64>,
    pub b_phi: Option<f64>,
}

/// The configuration document for one fit. Environment variables override
/// nothing; everything is in the file (plus the explicit CLI flags).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub formula: String,
    #[serde(default = "default_family")]
    pub family: String,
    /// Training data CSV path (relative paths resolve against the config
    /// file location).
    pub data: PathBuf,
    /// Output directory.
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Optional held-out data to predict after fitting.
    pub test_data: Option<PathBuf>,
    #[serde(default = "default_decomposition")]
    pub decomposition: String,
    /// Optional offset column name in the training data.
    pub offset_column: Option<String>,
    /// Column type overrides: column name -> "factor" or "numeric".
    #[serde(default)]
    pub schema: BTreeMap<String, String>,
    pub hyperparameters: Option<HyperSection>,
    pub mcmc: Option<McmcSection>,
    /// Per-covariate adjacency matrix CSV paths for mrf terms.
    #[serde(default)]
    pub mrf_adjacency: BTreeMap<String, PathBuf>,
    /// Per-covariate correlation matrix CSV paths for rnd terms.
    #[serde(default)]
    pub rnd_correlation: BTreeMap<String, PathBuf>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        // Resolve data paths relative to the config file.
        if let Some(dir) = path.parent() {
            config.data = resolve(dir, &config.data);
            config.test_data = config.test_data.map(|p| resolve(dir, &p));
            config.output = config.output.map(|p| resolve(dir, &p));
            for p in config.mrf_adjacency.values_mut() {
                *p = resolve(dir, p);
            }
            for p in config.rnd_correlation.values_mut() {
                *p = resolve(dir, p);
            }
        }
        Ok(config)
    }

    pub fn family_kind(&self) -> Result<ssgam::FamilyKind> {
        self.family
            .parse()
            .map_err(|e: String| anyhow::anyhow!(e))
    }

    pub fn decomposition_kind(&self) -> Result<Decomposition> {
        match self.decomposition.as_str() {
            "orthogonal" => Ok(Decomposition::default()),
            "mixed" => Ok(Decomposition::Mixed),
            other => bail!("unknown decomposition '{other}' (expected orthogonal or mixed)"),
        }
    }

    pub fn hyper(&self) -> HyperParams {
        let mut h = HyperParams::default();
        if let Some(section) = &self.hyperparameters {
            if let Some(v) = section.a_tau {
                h.a_tau = v;
            }
            if let Some(v) = section.b_tau {
                h.b_tau = v;
            }
            if let Some(v) = section.v0 {
                h.v0 = v;
            }
            if let Some(v) = section.a_w {
                h.a_w = v;
            }
            if let Some(v) = section.b_w {
                h.b_w = v;
            }
            if let Some(v) = section.a_phi {
                h.a_phi = v;
            }
            if let Some(v) = section.b_phi {
                h.b_phi = v;
            }
        }
        h
    }

    pub fn mcmc(&self) -> McmcConfig {
        let mut m = McmcConfig {
            seed: self.seed,
            ..Default::default()
        };
        if let Some(section) = &self.mcmc {
            if let Some(v) = section.n_chains {
                m.n_chains = v;
            }
            if let Some(v) = section.chain_length {
                m.chain_length = v;
            }
            if let Some(v) = section.burnin {
                m.burnin = v;
            }
            if let Some(v) = section.thin {
                m.thin = v;
            }
            if let Some(v) = section.block_size_alpha {
                m.block_size_alpha = v;
            }
            if let Some(v) = section.block_size_xi {
                m.block_size_xi = v;
            }
        }
        m
    }
}

fn resolve(dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}
