//! Posterior prediction on new data through the stored design recipes.

use nalgebra::{DMatrix, DVector};

use super::SummaryError;
use crate::data::ColumnTable;
use crate::sampler::FitResult;

/// Pointwise posterior summaries on a new dataset. Bands are equal-tailed
/// empirical quantiles of the per-draw linear predictor and response mean.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub eta_mean: Vec<f64>,
    pub eta_lower: Vec<f64>,
    pub eta_upper: Vec<f64>,
    pub response_mean: Vec<f64>,
    pub response_lower: Vec<f64>,
    pub response_upper: Vec<f64>,
}

/// Per-draw linear predictor on new data: one row per saved draw (pooled
/// over chains in chain order), one column per new observation.
pub fn eta_draws(
    fit: &FitResult,
    newdata: &ColumnTable,
    offset: Option<&[f64]>,
) -> Result<DMatrix<f64>, SummaryError> {
    let total = fit.n_saved();
    if total == 0 {
        return Err(SummaryError::NoSamples);
    }
    let n_new = newdata.n_rows();
    if let Some(o) = offset {
        if o.len() != n_new {
            return Err(SummaryError::Invalid(format!(
                "offset has {} rows, newdata has {}",
                o.len(),
                n_new
            )));
        }
    }
    let x_u = fit.design.evaluate_x_u(newdata)?;
    let blocks: Vec<DMatrix<f64>> = fit
        .design
        .blocks
        .iter()
        .map(|b| b.evaluate(newdata))
        .collect::<Result<_, _>>()?;
    let mut draws = DMatrix::<f64>::zeros(total, n_new);
    let mut row_out = 0usize;
    for chain in &fit.chains {
        for row in 0..chain.n_saved() {
            let mut eta = match offset {
                Some(o) => DVector::from_column_slice(o),
                None => DVector::zeros(n_new),
            };
            for k in 0..x_u.ncols() {
                eta.axpy(chain.beta_u[(row, k)], &x_u.column(k).into_owned(), 1.0);
            }
            let mut coef_offset = 0usize;
            for (j, block_new) in blocks.iter().enumerate() {
                let a = chain.alpha[(row, j)];
                let d = block_new.ncols();
                if a != 0.0 {
                    for l in 0..d {
                        let c = a * chain.xi[(row, coef_offset + l)];
                        if c != 0.0 {
                            eta.axpy(c, &block_new.column(l).into_owned(), 1.0);
                        }
                    }
                }
                coef_offset += d;
            }
            draws.row_mut(row_out).copy_from(&eta.transpose());
            row_out += 1;
        }
    }
    Ok(draws)
}

/// Per-draw summed contribution of a set of terms (by label) evaluated on
/// new data. Unpenalized non-intercept terms are included when named.
pub fn grouped_effect_draws(
    fit: &FitResult,
    newdata: &ColumnTable,
    labels: &[String],
) -> Result<DMatrix<f64>, SummaryError> {
    let total = fit.n_saved();
    if total == 0 {
        return Err(SummaryError::NoSamples);
    }
    let n_new = newdata.n_rows();
    let mut draws = DMatrix::<f64>::zeros(total, n_new);
    for label in labels {
        if let Some((j, block)) = fit
            .design
            .blocks
            .iter()
            .enumerate()
            .find(|(_, b)| &b.label == label)
        {
            let coef_offset: usize = fit.design.blocks[..j].iter().map(|b| b.dim()).sum();
            let block_new = block.evaluate(newdata)?;
            let mut row_out = 0usize;
            for chain in &fit.chains {
                for row in 0..chain.n_saved() {
                    let a = chain.alpha[(row, j)];
                    for l in 0..block_new.ncols() {
                        let c = a * chain.xi[(row, coef_offset + l)];
                        if c != 0.0 {
                            for i in 0..n_new {
                                draws[(row_out, i)] += c * block_new[(i, l)];
                            }
                        }
                    }
                    row_out += 1;
                }
            }
        } else if let Some(u_term) = fit.design.u_terms.iter().find(|u| &u.label == label) {
            let x_u = fit.design.evaluate_x_u(newdata)?;
            let mut row_out = 0usize;
            for chain in &fit.chains {
                for row in 0..chain.n_saved() {
                    for col in u_term.cols.clone() {
                        let c = chain.beta_u[(row, col)];
                        for i in 0..n_new {
                            draws[(row_out, i)] += c * x_u[(i, col)];
                        }
                    }
                    row_out += 1;
                }
            }
        } else {
            return Err(SummaryError::UnknownTerm(label.clone()));
        }
    }
    Ok(draws)
}

/// Equal-tailed empirical quantile of a column (linear interpolation).
pub(crate) fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
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

/// Posterior mean response and pointwise credible bands on new data.
/// `quantiles` are the lower and upper band probabilities (default 10%/90%
/// when called through the higher-level interfaces).
pub fn predict(
    fit: &FitResult,
    newdata: &ColumnTable,
    quantiles: (f64, f64),
    offset: Option<&[f64]>,
) -> Result<Prediction, SummaryError> {
    if !(quantiles.0 < quantiles.1 && quantiles.0 > 0.0 && quantiles.1 < 1.0) {
        return Err(SummaryError::Invalid(format!(
            "invalid quantile pair ({}, {})",
            quantiles.0, quantiles.1
        )));
    }
    let draws = eta_draws(fit, newdata, offset)?;
    let total = draws.nrows();
    let n_new = draws.ncols();
    let mut out = Prediction {
        eta_mean: Vec::with_capacity(n_new),
        eta_lower: Vec::with_capacity(n_new),
        eta_upper: Vec::with_capacity(n_new),
        response_mean: Vec::with_capacity(n_new),
        response_lower: Vec::with_capacity(n_new),
        response_upper: Vec::with_capacity(n_new),
    };
    let mut eta_col = vec![0.0; total];
    let mut mu_col = vec![0.0; total];
    for i in 0..n_new {
        for t in 0..total {
            eta_col[t] = draws[(t, i)];
            mu_col[t] = fit.family.mean(draws[(t, i)]);
        }
        out.eta_mean.push(eta_col.iter().sum::<f64>() / total as f64);
        out.response_mean.push(mu_col.iter().sum::<f64>() / total as f64);
        eta_col.sort_by(|a, b| a.total_cmp(b));
        mu_col.sort_by(|a, b| a.total_cmp(b));
        out.eta_lower.push(empirical_quantile(&eta_col, quantiles.0));
        out.eta_upper.push(empirical_quantile(&eta_col, quantiles.1));
        out.response_lower
            .push(empirical_quantile(&mu_col, quantiles.0));
        out.response_upper
            .push(empirical_quantile(&mu_col, quantiles.1));
    }
    Ok(out)
}
