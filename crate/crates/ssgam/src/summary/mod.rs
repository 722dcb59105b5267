//! Posterior summaries: marginal inclusion probabilities, term importances,
//! the posterior model table, deviances, predictions, and convergence
//! diagnostics, plus the text/JSON report that presents them.

mod diagnostics;
mod predict;


use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::DesignError;
use crate::sampler::FitResult;

pub use diagnostics::{gelman_rubin, gelman_rubin_scalar, RhatEntry};
pub use predict::{eta_draws, grouped_effect_draws, predict, Prediction};

#[derive(Error, Debug)]
pub enum SummaryError {
    #[error("fit contains no saved samples")]
    NoSamples,
    #[error("diagnostic requires at least two chains, got {0}")]
    NeedTwoChains(usize),
    #[error("unknown term '{0}'")]
    UnknownTerm(String),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("{0}")]
    Invalid(String),
}

/// Star markers mirroring the report legend.
fn stars(p: f64) -> &'static str {
    if p > 0.9 {
        "***"
    } else if p > 0.5 {
        "**"
    } else if p > 0.25 {
        "*"
    } else {
        ""
    }
}

/// One row of the term table. Unpenalized terms have no inclusion
/// probability; the intercept also has no importance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermSummary {
    pub label: String,
    pub p_gamma: Option<f64>,
    pub pi: Option<f64>,
    pub dim: usize,
    pub stars: String,
}

/// Marginal posterior inclusion probabilities P(gamma_j = 1), pooled across
/// chains, one entry per penalized term in model order.
pub fn inclusion_probabilities(fit: &FitResult) -> Result<Vec<f64>, SummaryError> {
    let total = fit.n_saved();
    if total == 0 {
        return Err(SummaryError::NoSamples);
    }
    let p = fit.design.blocks.len();
    let mut counts = vec![0usize; p];
    for chain in &fit.chains {
        for row in 0..chain.n_saved() {
            for j in 0..p {
                if chain.gamma[(row, j)] == 1.0 {
                    counts[j] += 1;
                }
            }
        }
    }
    Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// Posterior-mean coefficient vector per penalized term (beta = alpha xi
/// averaged over all saved draws) plus the posterior-mean unpenalized
/// coefficients.
pub fn posterior_mean_coefficients(fit: &FitResult) -> (DVector<f64>, DVector<f64>) {
    let total = fit.n_saved() as f64;
    let q: usize = fit.design.blocks.iter().map(|b| b.dim()).sum();
    let n_u = fit.design.x_u.ncols();
    let mut beta = DVector::<f64>::zeros(q);
    let mut beta_u = DVector::<f64>::zeros(n_u);
    for chain in &fit.chains {
        for row in 0..chain.n_saved() {
            let mut offset = 0usize;
            for (j, block) in fit.design.blocks.iter().enumerate() {
                let a = chain.alpha[(row, j)];
                for l in 0..block.dim() {
                    beta[offset + l] += a * chain.xi[(row, offset + l)];
                }
                offset += block.dim();
            }
            for k in 0..n_u {
                beta_u[k] += chain.beta_u[(row, k)];
            }
        }
    }
    (beta / total, beta_u / total)
}

/// Term importances pi_j: the inner product of each term's posterior-mean
/// contribution with the non-constant part of the posterior-mean linear
/// predictor, normalized so the importances sum to one. Entries may be
/// negative. Returned in penalized-term order, followed by one entry per
/// non-intercept unpenalized term.
pub fn term_importance(fit: &FitResult) -> Result<Vec<f64>, SummaryError> {
    if fit.n_saved() == 0 {
        return Err(SummaryError::NoSamples);
    }
    let (beta, beta_u) = posterior_mean_coefficients(fit);
    let n = fit.design.n_rows();
    let mut contributions: Vec<DVector<f64>> = Vec::new();
    let mut offset = 0usize;
    for block in &fit.design.blocks {
        let d = block.dim();
        contributions.push(&block.b * beta.rows(offset, d));
        offset += d;
    }
    for term in &fit.design.u_terms {
        if term.label == "u" {
            continue;
        }
        let mut eta = DVector::<f64>::zeros(n);
        for col in term.cols.clone() {
            eta.axpy(beta_u[col], &fit.design.x_u.column(col).into_owned(), 1.0);
        }
        contributions.push(eta);
    }
    let mut eta_rest = DVector::<f64>::zeros(n);
    for c in &contributions {
        eta_rest += c;
    }
    let denom = eta_rest.norm_squared();
    if denom <= 0.0 {
        // Degenerate fit with no non-constant signal: report zeros.
        return Ok(vec![0.0; contributions.len()]);
    }
    Ok(contributions
        .iter()
        .map(|c| c.dot(&eta_rest) / denom)
        .collect())
}

/// One configuration of included terms with its posterior support.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelRow {
    pub included: Vec<bool>,
    pub probability: f64,
    pub cumulative: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelTable {
    pub threshold: f64,
    pub terms: Vec<String>,
    pub rows: Vec<ModelRow>,
}

/// Group the per-draw inclusion vectors (gamma_j = 1) and rank the visited
/// configurations by posterior support.
pub fn model_table(fit: &FitResult, threshold: f64) -> Result<ModelTable, SummaryError> {
    let total = fit.n_saved();
    if total == 0 {
        return Err(SummaryError::NoSamples);
    }
    let p = fit.design.blocks.len();
    let mut counts: std::collections::BTreeMap<Vec<bool>, usize> = std::collections::BTreeMap::new();
    for chain in &fit.chains {
        for row in 0..chain.n_saved() {
            let key: Vec<bool> = (0..p).map(|j| chain.gamma[(row, j)] == 1.0).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<(Vec<bool>, usize)> = counts.into_iter().collect();
    // Descending frequency; the BTreeMap ordering breaks ties deterministically.
    entries.sort_by(|a, b| b.1.cmp(&a.1));
    let mut rows = Vec::with_capacity(entries.len());
    let mut cumulative = 0.0;
    for (included, count) in entries {
        let probability = count as f64 / total as f64;
        cumulative += probability;
        rows.push(ModelRow {
            included,
            probability,
            cumulative,
        });
    }
    Ok(ModelTable {
        threshold,
        terms: fit
            .design
            .blocks
            .iter()
            .map(|b| b.label.clone())
            .collect(),
        rows,
    })
}

/// Null deviance (intercept-only maximum likelihood fit) and the average of
/// the saved per-draw deviances.
pub fn deviance_summary(fit: &FitResult, y: &[f64]) -> Result<(f64, f64), SummaryError> {
    let total = fit.n_saved();
    if total == 0 {
        return Err(SummaryError::NoSamples);
    }
    let null = fit.family.null_deviance(y);
    let mean = fit
        .chains
        .iter()
        .flat_map(|c| c.deviance.iter())
        .sum::<f64>()
        / total as f64;
    Ok((null, mean))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McmcBookkeeping {
    pub saved: usize,
    pub chains: usize,
    pub chain_length: usize,
    pub burnin: usize,
    pub thin: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AcceptanceRates {
    pub alpha: f64,
    pub xi: f64,
}

/// Machine-readable twin of the text summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryReport {
    pub family: String,
    pub model: String,
    pub n_observations: usize,
    pub n_coefficients: usize,
    pub n_terms: usize,
    pub prior: crate::sampler::HyperParams,
    pub mcmc: McmcBookkeeping,
    pub acceptance: Option<AcceptanceRates>,
    pub null_deviance: f64,
    pub mean_posterior_deviance: f64,
    pub terms: Vec<TermSummary>,
    pub model_table: ModelTable,
}

/// Assemble the full report (term table in model order, model table at
/// threshold 0.5).
pub fn summarize(fit: &FitResult) -> Result<SummaryReport, SummaryError> {
    let inclusion = inclusion_probabilities(fit)?;
    let importance = term_importance(fit)?;
    let table = model_table(fit, 0.5)?;
    let (null_dev, mean_dev) = deviance_summary(fit, &fit.y)?;

    // Importances follow [penalized terms..., non-intercept u terms...].
    let mut terms = Vec::new();
    let mut pen_idx = 0usize;
    let mut u_extra_idx = fit.design.blocks.len();
    for term in &fit.design.spec.terms {
        if term.is_unpenalized() {
            let dim = fit
                .design
                .u_terms
                .iter()
                .find(|u| u.label == term.label)
                .map(|u| u.cols.len())
                .unwrap_or(0);
            let pi = if term.is_intercept() {
                None
            } else {
                let v = importance.get(u_extra_idx).copied();
                u_extra_idx += 1;
                v
            };
            terms.push(TermSummary {
                label: term.label.clone(),
                p_gamma: None,
                pi,
                dim,
                stars: String::new(),
            });
        } else {
            let p = inclusion[pen_idx];
            terms.push(TermSummary {
                label: term.label.clone(),
                p_gamma: Some(p),
                pi: importance.get(pen_idx).copied(),
                dim: fit.design.blocks[pen_idx].dim(),
                stars: stars(p).to_string(),
            });
            pen_idx += 1;
        }
    }

    let acceptance = match (fit.acceptance.alpha_rate(), fit.acceptance.xi_rate()) {
        (Some(alpha), Some(xi)) if !fit.family.is_gaussian() => {
            Some(AcceptanceRates { alpha, xi })
        }
        _ => None,
    };
    Ok(SummaryReport {
        family: fit.family.kind.to_string(),
        model: fit.design.spec.render(),
        n_observations: fit.design.n_rows(),
        n_coefficients: fit.design.n_coefficients(),
        n_terms: fit.design.spec.terms.len(),
        prior: fit.hyper,
        mcmc: McmcBookkeeping {
            saved: fit.n_saved(),
            chains: fit.config.n_chains,
            chain_length: fit.config.chain_length,
            burnin: fit.config.burnin,
            thin: fit.config.thin,
        },
        acceptance,
        null_deviance: null_dev,
        mean_posterior_deviance: mean_dev,
        terms,
        model_table: table,
    })
}

impl SummaryReport {
    /// Plain-text rendering: model header, prior, MCMC bookkeeping,
    /// deviances, term table, and the ranked model table.
    pub fn render_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let family_title = {
            let mut c = self.family.chars();
            match c.next() {
                Some(first) => first.to_uppercase().collect::<String>() + c.as_str(),
                None => String::new(),
            }
        };
        let _ = writeln!(out, "Spike-and-slab GAMM for {family_title} data");
        let _ = writeln!(out);
        let _ = writeln!(out, "Model:");
        let _ = writeln!(out, "{}", self.model);
        let _ = writeln!(
            out,
            "{} observations; {} coefficients in {} model terms.",
            self.n_observations, self.n_coefficients, self.n_terms
        );
        let _ = writeln!(out);
        let _ = writeln!(out, "Prior:");
        let _ = writeln!(
            out,
            "a[tau] = {:.2e}  b[tau] = {:.2e}  v[0] = {:.2e}  a[w] = {:.2e}  b[w] = {:.2e}  a[phi] = {:.2e}  b[phi] = {:.2e}",
            self.prior.a_tau,
            self.prior.b_tau,
            self.prior.v0,
            self.prior.a_w,
            self.prior.b_w,
            self.prior.a_phi,
            self.prior.b_phi
        );
        let _ = writeln!(out);
        let _ = writeln!(out, "MCMC:");
        let _ = writeln!(
            out,
            "Saved {} samples from {} chain(s), each ran {} iterations after a burn-in of {} ; Thinning: {}",
            self.mcmc.saved, self.mcmc.chains, self.mcmc.chain_length, self.mcmc.burnin, self.mcmc.thin
        );
        if let Some(acc) = &self.acceptance {
            let _ = writeln!(
                out,
                "P-IWLS acceptance rates: {:.2} for alpha; {:.2} for xi.",
                acc.alpha, acc.xi
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "Null deviance:           {:.0}", self.null_deviance);
        let _ = writeln!(
            out,
            "Mean posterior deviance: {:.0}",
            self.mean_posterior_deviance
        );
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "Marginal posterior inclusion probabilities and term importance:"
        );
        let label_width = self
            .terms
            .iter()
            .map(|t| t.label.len())
            .max()
            .unwrap_or(8)
            .max(8);
        let _ = writeln!(
            out,
            "{:<label_width$}  P(gamma=1)      pi  dim    ",
            "",
            label_width = label_width
        );
        for t in &self.terms {
            let p = t
                .p_gamma
                .map(|v| format!("{v:.3}"))
                .unwrap_or_else(|| "NA".to_string());
            let pi = t
                .pi
                .map(|v| format!("{v:.3}"))
                .unwrap_or_else(|| "NA".to_string());
            let _ = writeln!(
                out,
                "{:<label_width$}  {:>10}  {:>6}  {:>3} {}",
                t.label,
                p,
                pi,
                t.dim,
                t.stars,
                label_width = label_width
            );
        }
        let _ = writeln!(out, "*:P(gamma=1)>.25 **:P(gamma=1)>.5 ***:P(gamma=1)>.9");
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "Posterior model probabilities (inclusion threshold = {}):",
            self.model_table.threshold
        );
        let shown = self.model_table.rows.len().min(8);
        let tlabel_width = self
            .model_table
            .terms
            .iter()
            .map(|t| t.len())
            .max()
            .unwrap_or(8)
            .max(11);
        let mut header = format!("{:<tlabel_width$}", "", tlabel_width = tlabel_width);
        for i in 1..=shown {
            header.push_str(&format!(" {i:>6}"));
        }
        let _ = writeln!(out, "{header}");
        let mut prob_line = format!("{:<tlabel_width$}", "prob.:", tlabel_width = tlabel_width);
        for row in self.model_table.rows.iter().take(shown) {
            prob_line.push_str(&format!(" {:>6.3}", row.probability));
        }
        let _ = writeln!(out, "{prob_line}");
        for (j, term) in self.model_table.terms.iter().enumerate() {
            let mut line = format!("{term:<tlabel_width$}", tlabel_width = tlabel_width);
            for row in self.model_table.rows.iter().take(shown) {
                line.push_str(if row.included[j] { "      x" } else { "       " });
            }
            let _ = writeln!(out, "{line}");
        }
        let mut cum_line = format!("{:<tlabel_width$}", "cumulative:", tlabel_width = tlabel_width);
        for row in self.model_table.rows.iter().take(shown) {
            cum_line.push_str(&format!(" {:>6.3}", row.cumulative));
        }
        let _ = writeln!(out, "{cum_line}");
        out
    }
}
