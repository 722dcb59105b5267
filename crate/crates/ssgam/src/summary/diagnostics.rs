//! Convergence diagnostics.

use serde::{Deserialize, Serialize};

use super::SummaryError;
use crate::sampler::FitResult;

/// Potential scale reduction factor for one scalar parameter from two or
/// more equally long chains. Returns `None` when the draws are constant
/// within every chain and across chains (a stuck-but-agreeing parameter
/// counts as converged and reports 1).
pub fn gelman_rubin_scalar(chains: &[Vec<f64>]) -> Result<f64, SummaryError> {
    let m = chains.len();
    if m < 2 {
        return Err(SummaryError::NeedTwoChains(m));
    }
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if n < 2 {
        return Err(SummaryError::NoSamples);
    }
    let nf = n as f64;
    let mut means = Vec::with_capacity(m);
    let mut vars = Vec::with_capacity(m);
    for chain in chains {
        let mean = chain[..n].iter().sum::<f64>() / nf;
        let var = chain[..n]
            .iter()
            .map(|&v| (v - mean) * (v - mean))
            .sum::<f64>()
            / (nf - 1.0);
        means.push(mean);
        vars.push(var);
    }
    let within = vars.iter().sum::<f64>() / m as f64;
    let grand = means.iter().sum::<f64>() / m as f64;
    let between = nf / (m as f64 - 1.0)
        * means
            .iter()
            .map(|&mu| (mu - grand) * (mu - grand))
            .sum::<f64>();
    if within <= f64::EPSILON * grand.abs().max(1.0) {
        // No within-chain variation: agreement means convergence, any
        // between-chain spread means divergence.
        return Ok(if between <= f64::EPSILON * grand.abs().max(1.0) {
            1.0
        } else {
            f64::INFINITY
        });
    }
    let var_plus = (nf - 1.0) / nf * within + between / nf;
    // Monte-Carlo noise can push the ratio below one; clamp so identical
    // chains report exactly 1.
    Ok((var_plus / within).sqrt().max(1.0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RhatEntry {
    pub parameter: String,
    pub rhat: f64,
}

/// Gelman-Rubin potential scale reduction per scalar parameter over the
/// saved post-burn-in draws. Requires at least two chains.
pub fn gelman_rubin(fit: &FitResult) -> Result<Vec<RhatEntry>, SummaryError> {
    if fit.chains.len() < 2 {
        return Err(SummaryError::NeedTwoChains(fit.chains.len()));
    }
    let mut entries = Vec::new();
    let labels = fit.term_labels();
    let mut push = |name: String, chains: Vec<Vec<f64>>| -> Result<(), SummaryError> {
        let rhat = gelman_rubin_scalar(&chains)?;
        entries.push(RhatEntry {
            parameter: name,
            rhat,
        });
        Ok(())
    };
    for (j, label) in labels.iter().enumerate() {
        push(
            format!("alpha.{label}"),
            fit.chains
                .iter()
                .map(|c| c.alpha.column(j).iter().copied().collect())
                .collect(),
        )?;
        push(
            format!("tau2.{label}"),
            fit.chains
                .iter()
                .map(|c| c.tau2.column(j).iter().copied().collect())
                .collect(),
        )?;
    }
    let mut coef_offset = 0usize;
    for (j, label) in labels.iter().enumerate() {
        let d = fit.design.blocks[j].dim();
        for l in 0..d {
            push(
                format!("{label}.{}", l + 1),
                fit.chains
                    .iter()
                    .map(|c| c.xi.column(coef_offset + l).iter().copied().collect())
                    .collect(),
            )?;
        }
        coef_offset += d;
    }
    for k in 0..fit.design.x_u.ncols() {
        push(
            format!("u.{}", k + 1),
            fit.chains
                .iter()
                .map(|c| c.beta_u.column(k).iter().copied().collect())
                .collect(),
        )?;
    }
    push(
        "w".to_string(),
        fit.chains.iter().map(|c| c.w.clone()).collect(),
    )?;
    if fit.family.is_gaussian() {
        push(
            "phi".to_string(),
            fit.chains.iter().map(|c| c.phi.clone()).collect(),
        )?;
    }
    push(
        "deviance".to_string(),
        fit.chains.iter().map(|c| c.deviance.clone()).collect(),
    )?;
    Ok(entries)
}
