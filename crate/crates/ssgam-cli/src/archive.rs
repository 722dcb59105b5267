//! On-disk fit archive: `fit.json` (design, model, priors, bookkeeping) and
//! `samples.csv` (one row per saved draw per chain).
//!
//! samples.csv columns: `chain`, `iter`, `w`, `phi`, `deviance`, then per
//! term `alpha.<label>`, `gamma.<label>`, `tau2.<label>`, the xi entries
//! `<label>.<i>` (1-based), their prior signs `m.<label>.<i>`, and the
//! unpenalized coefficients `u.<i>`. Values print in shortest round-trip
//! form, so re-reading the file reproduces every draw bit for bit.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use ssgam::family::Family;
use ssgam::sampler::{AcceptanceCounts, ChainSamples, FitResult, HyperParams, McmcConfig};
use ssgam::{ColumnTable, FullDesign};

pub const ARCHIVE_VERSION: u32 = 1;

/// Covariate metadata captured at fit time, used to build effect grids and
/// validate prediction inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum CovariateInfo {
    Numeric { min: f64, max: f64 },
    Factor { levels: Vec<String> },
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FitArchive {
    pub version: u32,
    pub design: FullDesign,
    pub y: Vec<f64>,
    pub family: Family,
    pub hyper: HyperParams,
    pub config: McmcConfig,
    pub acceptance: AcceptanceCounts,
    pub covariates: BTreeMap<String, CovariateInfo>,
}

pub fn covariate_info(table: &ColumnTable) -> BTreeMap<String, CovariateInfo> {
    let mut out = BTreeMap::new();
    for name in table.column_names() {
        let info = match table.column(name).expect("column exists") {
            ssgam::Column::Numeric(values) => {
                let (min, max) = values
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                        (lo.min(v), hi.max(v))
                    });
                CovariateInfo::Numeric { min, max }
            }
            ssgam::Column::Factor { levels, .. } => CovariateInfo::Factor {
                levels: levels.clone(),
            },
        };
        out.insert(name.to_string(), info);
    }
    out
}

pub fn write_fit_json(path: &Path, fit: &FitResult, covariates: &BTreeMap<String, CovariateInfo>) -> Result<()> {
    let archive = FitArchive {
        version: ARCHIVE_VERSION,
        design: fit.design.clone(),
        y: fit.y.clone(),
        family: fit.family,
        hyper: fit.hyper,
        config: fit.config.clone(),
        acceptance: fit.acceptance,
        covariates: covariates.clone(),
    };
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer(std::io::BufWriter::new(file), &archive)?;
    Ok(())
}

pub fn read_fit_json(path: &Path) -> Result<FitArchive> {
    let file = std::fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let archive: FitArchive = serde_json::from_reader(std::io::BufReader::new(file))
        .with_context(|| format!("parsing {}", path.display()))?;
    if archive.version != ARCHIVE_VERSION {
        bail!(
            "fit archive version {} is not supported (expected {})",
            archive.version,
            ARCHIVE_VERSION
        );
    }
    Ok(archive)
}

/// Column names of the sample archive for a given design, in file order.
pub fn sample_columns(design: &FullDesign) -> Vec<String> {
    let mut cols = vec![
        "chain".to_string(),
        "iter".to_string(),
        "w".to_string(),
        "phi".to_string(),
        "deviance".to_string(),
    ];
    for block in &design.blocks {
        cols.push(format!("alpha.{}", block.label));
        cols.push(format!("gamma.{}", block.label));
        cols.push(format!("tau2.{}", block.label));
    }
    for block in &design.blocks {
        for i in 1..=block.dim() {
            cols.push(format!("{}.{}", block.label, i));
        }
    }
    for block in &design.blocks {
        for i in 1..=block.dim() {
            cols.push(format!("m.{}.{}", block.label, i));
        }
    }
    for i in 1..=design.x_u.ncols() {
        cols.push(format!("u.{i}"));
    }
    cols
}

pub fn write_samples_csv(path: &Path, fit: &FitResult) -> Result<()> {
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    let mut out = std::io::BufWriter::new(file);
    let columns = sample_columns(&fit.design);
    writeln!(out, "{}", columns.join(","))?;
    let p = fit.design.blocks.len();
    let q: usize = fit.design.blocks.iter().map(|b| b.dim()).sum();
    let n_u = fit.design.x_u.ncols();
    let mut line = String::new();
    for chain in &fit.chains {
        for row in 0..chain.n_saved() {
            line.clear();
            line.push_str(&format!(
                "{},{},{},{},{}",
                chain.chain, chain.iters[row], chain.w[row], chain.phi[row], chain.deviance[row]
            ));
            for j in 0..p {
                line.push_str(&format!(
                    ",{},{},{}",
                    chain.alpha[(row, j)],
                    chain.gamma[(row, j)],
                    chain.tau2[(row, j)]
                ));
            }
            for l in 0..q {
                line.push_str(&format!(",{}", chain.xi[(row, l)]));
            }
            for l in 0..q {
                line.push_str(&format!(",{}", chain.m[(row, l)]));
            }
            for k in 0..n_u {
                line.push_str(&format!(",{}", chain.beta_u[(row, k)]));
            }
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

/// Rebuild a `FitResult` from the archive pair. The per-draw linear
/// predictor is not stored on disk; summaries recompute what they need
/// through the design.
pub fn read_fit(dir: &Path) -> Result<FitResult> {
    let archive = read_fit_json(&dir.join("fit.json"))?;
    let samples_path = dir.join("samples.csv");
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&samples_path)
        .with_context(|| format!("opening {}", samples_path.display()))?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    let expected = sample_columns(&archive.design);
    if headers != expected {
        bail!(
            "{}: sample columns do not match the fit archive (schema mismatch)",
            samples_path.display()
        );
    }
    let p = archive.design.blocks.len();
    let q: usize = archive.design.blocks.iter().map(|b| b.dim()).sum();
    let n_u = archive.design.x_u.ncols();
    struct Raw {
        chain: usize,
        iter: u64,
        values: Vec<f64>,
    }
    let mut rows: Vec<Raw> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let chain: usize = record[0].parse()?;
        let iter: u64 = record[1].parse()?;
        let values: Vec<f64> = record
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>().context("parsing sample value"))
            .collect::<Result<_>>()?;
        rows.push(Raw {
            chain,
            iter,
            values,
        });
    }
    let n_chains = rows.iter().map(|r| r.chain).max().map(|m| m + 1).unwrap_or(0);
    let mut chains = Vec::with_capacity(n_chains);
    for chain_idx in 0..n_chains {
        let chain_rows: Vec<&Raw> = rows.iter().filter(|r| r.chain == chain_idx).collect();
        let t = chain_rows.len();
        let mut samples = ChainSamples {
            chain: chain_idx,
            iters: chain_rows.iter().map(|r| r.iter).collect(),
            alpha: DMatrix::zeros(t, p),
            xi: DMatrix::zeros(t, q),
            m: DMatrix::zeros(t, q),
            gamma: DMatrix::zeros(t, p),
            tau2: DMatrix::zeros(t, p),
            beta_u: DMatrix::zeros(t, n_u),
            w: Vec::with_capacity(t),
            phi: Vec::with_capacity(t),
            deviance: Vec::with_capacity(t),
            eta: DMatrix::zeros(t, 0),
        };
        for (row, raw) in chain_rows.iter().enumerate() {
            let v = &raw.values;
            samples.w.push(v[0]);
            samples.phi.push(v[1]);
            samples.deviance.push(v[2]);
            let mut cursor = 3;
            for j in 0..p {
                samples.alpha[(row, j)] = v[cursor];
                samples.gamma[(row, j)] = v[cursor + 1];
                samples.tau2[(row, j)] = v[cursor + 2];
                cursor += 3;
            }
            for l in 0..q {
                samples.xi[(row, l)] = v[cursor + l];
            }
            cursor += q;
            for l in 0..q {
                samples.m[(row, l)] = v[cursor + l];
            }
            cursor += q;
            for k in 0..n_u {
                samples.beta_u[(row, k)] = v[cursor + k];
            }
        }
        chains.push(samples);
    }
    Ok(FitResult {
        design: archive.design,
        y: archive.y,
        family: archive.family,
        hyper: archive.hyper,
        config: archive.config,
        chains,
        acceptance: archive.acceptance,
    })
}
