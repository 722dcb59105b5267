//! The three batch commands: fit, predict, summarize.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use ssgam::family::Family;
use ssgam::sampler::run_chains;
use ssgam::summary::{predict, summarize};
use ssgam::{build_full_design, expand_terms, parse_formula, BuildOptions, ColumnTable};

use crate::archive::{self, CovariateInfo};
use crate::artifacts;
use crate::config::RunConfig;
use crate::ingest;

#[derive(Debug, Default, Clone)]
pub struct FitFlags {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub separate_effects: bool,
    pub predict: Option<PathBuf>,
}

/// Column-type overrides matching a fitted model's covariate metadata, so
/// new data is coded exactly like the training data.
fn schema_from_covariates(info: &BTreeMap<String, CovariateInfo>) -> BTreeMap<String, String> {
    info.iter()
        .map(|(name, ci)| {
            let ty = match ci {
                CovariateInfo::Numeric { .. } => "numeric",
                CovariateInfo::Factor { .. } => "factor",
            };
            (name.clone(), ty.to_string())
        })
        .collect()
}

/// Run a full fit and write every artifact into the output directory.
/// Returns the directory on success; any failure leaves a nonzero exit to
/// the caller.
pub fn fit_command(config: &RunConfig, flags: &FitFlags) -> Result<PathBuf> {
    let start = Instant::now();
    let out_dir = flags
        .out
        .clone()
        .or_else(|| config.output.clone())
        .context("no output directory (set `output` in the config or pass --out)")?;
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;

    let table = ingest::read_table(&config.data, &config.schema)?;
    if table.n_rows() == 0 {
        bail!("{}: no data rows", config.data.display());
    }
    let family_kind = config.family_kind()?;
    let family = Family::new(family_kind);
    let ast = parse_formula(&config.formula)?;
    let spec = expand_terms(&ast, &table.schema(), family_kind)?;
    let y = ingest::response_vector(&table, &spec.response)?;
    family.validate_response(&y)?;

    let mut options = BuildOptions {
        decomposition: config.decomposition_kind()?,
        ..Default::default()
    };
    for (covariate, path) in &config.mrf_adjacency {
        options
            .mrf_adjacency
            .insert(covariate.clone(), ingest::read_matrix(path)?);
    }
    for (covariate, path) in &config.rnd_correlation {
        options
            .rnd_correlation
            .insert(covariate.clone(), ingest::read_matrix(path)?);
    }
    if let Some(column) = &config.offset_column {
        options.offset = Some(table.numeric(column)?.to_vec());
    }
    let design = build_full_design(&spec, &table, &options)?;

    let mut mcmc = config.mcmc();
    if let Some(seed) = flags.seed {
        mcmc.seed = seed;
    }
    log::info!(
        "fitting {} terms / {} coefficients on {} rows ({} chains x {} sweeps)",
        design.spec.terms.len(),
        design.n_coefficients(),
        design.n_rows(),
        mcmc.n_chains,
        mcmc.burnin + mcmc.chain_length
    );
    let fit = run_chains(&design, &y, family, &config.hyper(), &mcmc)?;

    let covariates = archive::covariate_info(&table);
    let report = summarize(&fit)?;
    artifacts::write_summary(&out_dir, &report)?;
    archive::write_samples_csv(&out_dir.join("samples.csv"), &fit)?;
    archive::write_fit_json(&out_dir.join("fit.json"), &fit, &covariates)?;
    artifacts::write_diagnostics(&out_dir, &fit)?;
    artifacts::write_effects(&out_dir, &fit, &covariates, flags.separate_effects)?;

    let mut artifact_names = vec![
        "summary.txt".to_string(),
        "summary.json".to_string(),
        "model_table.json".to_string(),
        "samples.csv".to_string(),
        "fit.json".to_string(),
        "diagnostics.json".to_string(),
        "effects/".to_string(),
    ];
    let test_path = flags.predict.clone().or_else(|| config.test_data.clone());
    if let Some(test_path) = test_path {
        let schema = schema_from_covariates(&covariates);
        let newdata = ingest::read_table(&test_path, &schema)?;
        let prediction = predict(&fit, &newdata, (0.1, 0.9), None)?;
        artifacts::write_predictions(&out_dir.join("predictions.csv"), &prediction)?;
        artifact_names.push("predictions.csv".to_string());
    }

    let manifest = artifacts::Manifest {
        package_version: env!("CARGO_PKG_VERSION"),
        seed: mcmc.seed,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        config,
        n_observations: design.n_rows(),
        n_terms: design.spec.terms.len(),
        n_coefficients: design.n_coefficients(),
        artifacts: artifact_names,
    };
    artifacts::write_manifest(&out_dir, &manifest)?;
    Ok(out_dir)
}

/// Reload a fit archive and predict on new data without re-running MCMC.
pub fn predict_command(fit_dir: &Path, data_path: &Path, out: Option<&Path>) -> Result<PathBuf> {
    let archive = archive::read_fit_json(&fit_dir.join("fit.json"))?;
    let schema = schema_from_covariates(&archive.covariates);
    let fit = archive::read_fit(fit_dir)?;
    let newdata = ingest::read_table(data_path, &schema)?;
    let prediction = predict(&fit, &newdata, (0.1, 0.9), None)?;
    let out_path = out
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| fit_dir.join("predictions.csv"));
    artifacts::write_predictions(&out_path, &prediction)?;
    Ok(out_path)
}

/// Recompute the summary artifacts from a stored fit archive.
pub fn summarize_command(fit_dir: &Path, out: Option<&Path>) -> Result<PathBuf> {
    let fit = archive::read_fit(fit_dir)?;
    let out_dir = out.map(|p| p.to_path_buf()).unwrap_or_else(|| fit_dir.to_path_buf());
    std::fs::create_dir_all(&out_dir)?;
    let report = summarize(&fit)?;
    artifacts::write_summary(&out_dir, &report)?;
    artifacts::write_diagnostics(&out_dir, &fit)?;
    Ok(out_dir)
}

/// Read a table coercing columns to a fitted model's covariate types (used
/// by tests to rebuild prediction inputs).
pub fn read_prediction_table(
    fit_dir: &Path,
    data_path: &Path,
) -> Result<ColumnTable> {
    let archive = archive::read_fit_json(&fit_dir.join("fit.json"))?;
    let schema = schema_from_covariates(&archive.covariates);
    ingest::read_table(data_path, &schema)
}
