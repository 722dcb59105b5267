//! Output files written by the fit and summarize commands.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use ssgam::sampler::FitResult;
use ssgam::summary::{self, Prediction, SummaryReport};
use ssgam::{Column, ColumnTable};

use crate::archive::CovariateInfo;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    let mut writer = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, value)?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn write_summary(dir: &Path, report: &SummaryReport) -> Result<()> {
    std::fs::write(dir.join("summary.txt"), report.render_text())?;
    write_json(&dir.join("summary.json"), report)?;
    write_json(&dir.join("model_table.json"), &report.model_table)?;
    Ok(())
}

#[derive(Serialize)]
struct DiagnosticsFile {
    rhat: Option<Vec<summary::RhatEntry>>,
    rhat_note: Option<String>,
    acceptance: AcceptanceFile,
}

#[derive(Serialize)]
struct AcceptanceFile {
    alpha: Option<f64>,
    xi: Option<f64>,
    unpenalized: Option<f64>,
}

pub fn write_diagnostics(dir: &Path, fit: &FitResult) -> Result<()> {
    let (rhat, rhat_note) = match summary::gelman_rubin(fit) {
        Ok(entries) => (Some(entries), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let diag = DiagnosticsFile {
        rhat,
        rhat_note,
        acceptance: AcceptanceFile {
            alpha: fit.acceptance.alpha_rate(),
            xi: fit.acceptance.xi_rate(),
            unpenalized: fit.acceptance.beta_u_rate(),
        },
    };
    write_json(&dir.join("diagnostics.json"), &diag)
}

/// Number of grid points per numeric covariate in effect files.
const GRID_POINTS: usize = 100;

#[derive(Serialize)]
struct EffectFile {
    covariates: Vec<String>,
    terms: Vec<String>,
    quantiles: [f64; 2],
    /// Per-covariate grid values, row-aligned with mean/lower/upper.
    grid: BTreeMap<String, Vec<serde_json::Value>>,
    mean: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

enum GridAxis {
    Numeric(Vec<f64>),
    Factor(Vec<String>),
}

fn grid_axis(info: &CovariateInfo) -> GridAxis {
    match info {
        CovariateInfo::Numeric { min, max } => {
            let step = (max - min) / (GRID_POINTS - 1) as f64;
            GridAxis::Numeric((0..GRID_POINTS).map(|i| min + step * i as f64).collect())
        }
        CovariateInfo::Factor { levels } => GridAxis::Factor(levels.clone()),
    }
}

/// Build the Cartesian product grid over the covariates of one effect group.
fn grid_table(
    covariates: &[String],
    info: &BTreeMap<String, CovariateInfo>,
) -> Result<(ColumnTable, BTreeMap<String, Vec<serde_json::Value>>)> {
    let axes: Vec<GridAxis> = covariates
        .iter()
        .map(|c| {
            info.get(c)
                .map(grid_axis)
                .ok_or_else(|| anyhow::anyhow!("no covariate info for '{c}'"))
        })
        .collect::<Result<_>>()?;
    let sizes: Vec<usize> = axes
        .iter()
        .map(|a| match a {
            GridAxis::Numeric(v) => v.len(),
            GridAxis::Factor(v) => v.len(),
        })
        .collect();
    let total: usize = sizes.iter().product();
    let mut numeric: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut factor: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for row in 0..total {
        let mut rem = row;
        // Last axis varies fastest.
        for (k, axis) in axes.iter().enumerate().rev() {
            let idx = rem % sizes[k];
            rem /= sizes[k];
            match axis {
                GridAxis::Numeric(v) => numeric
                    .entry(covariates[k].as_str())
                    .or_default()
                    .push(v[idx]),
                GridAxis::Factor(v) => factor
                    .entry(covariates[k].as_str())
                    .or_default()
                    .push(v[idx].clone()),
            }
        }
    }
    let mut table = ColumnTable::new();
    let mut grid_json: BTreeMap<String, Vec<serde_json::Value>> = BTreeMap::new();
    for (name, values) in numeric {
        grid_json.insert(
            name.to_string(),
            values.iter().map(|&v| serde_json::json!(v)).collect(),
        );
        table.insert(name, Column::Numeric(values))?;
    }
    for (name, values) in factor {
        grid_json.insert(
            name.to_string(),
            values.iter().map(|v| serde_json::json!(v)).collect(),
        );
        table.insert(name, Column::factor_from_strings(&values))?;
    }
    Ok((table, grid_json))
}

fn effect_groups(fit: &FitResult, separate: bool) -> Vec<(String, Vec<String>, Vec<String>)> {
    // (file stem, covariates, term labels)
    let mut groups: Vec<(String, Vec<String>, Vec<String>)> = Vec::new();
    let mut by_covariates: BTreeMap<BTreeSet<String>, Vec<String>> = BTreeMap::new();
    for term in &fit.design.spec.terms {
        if term.is_intercept() {
            continue;
        }
        let covs: BTreeSet<String> = term.covariates().iter().map(|s| s.to_string()).collect();
        if covs.is_empty() {
            continue;
        }
        if separate {
            groups.push((
                term.label.clone(),
                covs.into_iter().collect(),
                vec![term.label.clone()],
            ));
        } else {
            by_covariates.entry(covs).or_default().push(term.label.clone());
        }
    }
    if !separate {
        for (covs, labels) in by_covariates {
            let covs: Vec<String> = covs.into_iter().collect();
            groups.push((covs.join(":"), covs, labels));
        }
    }
    groups
}

fn sanitize_filename(stem: &str) -> String {
    stem.chars()
        .map(|c| if c == '/' || c == '\\' { '_' } else { c })
        .collect()
}

/// Emit one JSON file per effect: grid points, posterior mean, and the
/// 10%/90% pointwise quantiles of the (cumulated) term contribution.
pub fn write_effects(
    dir: &Path,
    fit: &FitResult,
    covariates: &BTreeMap<String, CovariateInfo>,
    separate: bool,
) -> Result<()> {
    let effects_dir = dir.join("effects");
    std::fs::create_dir_all(&effects_dir)?;
    let quantiles = (0.1, 0.9);
    for (stem, covs, labels) in effect_groups(fit, separate) {
        let (table, grid_json) = grid_table(&covs, covariates)?;
        let draws = summary::grouped_effect_draws(fit, &table, &labels)
            .with_context(|| format!("effect group {stem}"))?;
        let total = draws.nrows();
        let n_grid = draws.ncols();
        let mut mean = Vec::with_capacity(n_grid);
        let mut lower = Vec::with_capacity(n_grid);
        let mut upper = Vec::with_capacity(n_grid);
        let mut col = vec![0.0; total];
        for i in 0..n_grid {
            for t in 0..total {
                col[t] = draws[(t, i)];
            }
            mean.push(col.iter().sum::<f64>() / total as f64);
            col.sort_by(|a, b| a.total_cmp(b));
            lower.push(quantile(&col, quantiles.0));
            upper.push(quantile(&col, quantiles.1));
        }
        let file = EffectFile {
            covariates: covs,
            terms: labels,
            quantiles: [quantiles.0, quantiles.1],
            grid: grid_json,
            mean,
            lower,
            upper,
        };
        write_json(
            &effects_dir.join(format!("{}.json", sanitize_filename(&stem))),
            &file,
        )?;
    }
    Ok(())
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

pub fn write_predictions(path: &Path, prediction: &Prediction) -> Result<()> {
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(
        out,
        "row,eta_mean,eta_lower,eta_upper,response_mean,response_lower,response_upper"
    )?;
    for i in 0..prediction.eta_mean.len() {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            i + 1,
            prediction.eta_mean[i],
            prediction.eta_lower[i],
            prediction.eta_upper[i],
            prediction.response_mean[i],
            prediction.response_lower[i],
            prediction.response_upper[i]
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub package_version: &'static str,
    pub seed: u64,
    pub wall_clock_seconds: f64,
    pub config: &'a crate::config::RunConfig,
    pub n_observations: usize,
    pub n_terms: usize,
    pub n_coefficients: usize,
    pub artifacts: Vec<String>,
}

pub fn write_manifest(dir: &Path, manifest: &Manifest<'_>) -> Result<()> {
    write_json(&dir.join("manifest.json"), manifest)
}
