//! Penalized IWLS Metropolis-Hastings updates for non-Gaussian responses.
//!
//! The Gaussian proposal comes from one IWLS step: a quadratic Taylor
//! approximation of the log full conditional at the current block value.
//! The move is accepted with the usual MH ratio using the proposal
//! densities in both directions. With a Gaussian likelihood the proposal
//! coincides with the exact full conditional and every move is accepted.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::context::{SamplerContext, BETA_U_VARIANCE};
use super::state::ChainState;
use super::updates::{apply_xi_draw, GaussianFcd, Scratch};
use super::SamplerError;

/// Which coefficient block a P-IWLS step updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PiwlsBlock {
    BetaU,
    Alpha(usize),
    Xi(usize),
}

/// Metropolis-Hastings acceptance bookkeeping per block kind.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct AcceptanceCounts {
    pub alpha_accepted: u64,
    pub alpha_proposed: u64,
    pub xi_accepted: u64,
    pub xi_proposed: u64,
    pub beta_u_accepted: u64,
    pub beta_u_proposed: u64,
}

impl AcceptanceCounts {
    pub fn merge(&mut self, other: &AcceptanceCounts) {
        self.alpha_accepted += other.alpha_accepted;
        self.alpha_proposed += other.alpha_proposed;
        self.xi_accepted += other.xi_accepted;
        self.xi_proposed += other.xi_proposed;
        self.beta_u_accepted += other.beta_u_accepted;
        self.beta_u_proposed += other.beta_u_proposed;
    }

    pub fn alpha_rate(&self) -> Option<f64> {
        (self.alpha_proposed > 0).then(|| self.alpha_accepted as f64 / self.alpha_proposed as f64)
    }

    pub fn xi_rate(&self) -> Option<f64> {
        (self.xi_proposed > 0).then(|| self.xi_accepted as f64 / self.xi_proposed as f64)
    }

    pub fn beta_u_rate(&self) -> Option<f64> {
        (self.beta_u_proposed > 0)
            .then(|| self.beta_u_accepted as f64 / self.beta_u_proposed as f64)
    }
}

struct BlockView {
    design: DMatrix<f64>,
    theta: DVector<f64>,
    prior_mean: DVector<f64>,
    prior_precision: DVector<f64>,
}

fn block_view(ctx: &SamplerContext<'_>, state: &ChainState, scratch: &Scratch, block: PiwlsBlock) -> BlockView {
    match block {
        PiwlsBlock::BetaU => BlockView {
            design: ctx.design.x_u.clone(),
            theta: state.beta_u.clone(),
            prior_mean: DVector::zeros(ctx.n_u),
            prior_precision: DVector::from_element(ctx.n_u, 1.0 / BETA_U_VARIANCE),
        },
        PiwlsBlock::Alpha(b) => {
            let terms = ctx.alpha_blocks[b].clone();
            let k = terms.len();
            let mut design = DMatrix::<f64>::zeros(ctx.n, k);
            let mut theta = DVector::<f64>::zeros(k);
            let mut prior_precision = DVector::<f64>::zeros(k);
            for (bi, j) in terms.enumerate() {
                design.set_column(bi, &scratch.f[j]);
                theta[bi] = state.alpha[j];
                prior_precision[bi] = 1.0 / (state.gamma[j] * state.tau2[j]);
            }
            BlockView {
                design,
                theta,
                prior_mean: DVector::zeros(k),
                prior_precision,
            }
        }
        PiwlsBlock::Xi(b) => {
            let (j, local) = ctx.xi_blocks[b].clone();
            let k = local.len();
            let offset = ctx.term_offsets[j];
            let design = ctx.design.blocks[j]
                .b
                .columns(local.start, k)
                .scale(state.alpha[j]);
            let mut theta = DVector::<f64>::zeros(k);
            let mut prior_mean = DVector::<f64>::zeros(k);
            for (bi, l) in local.enumerate() {
                theta[bi] = state.xi[offset + l];
                prior_mean[bi] = state.m[offset + l];
            }
            BlockView {
                design,
                theta,
                prior_mean,
                prior_precision: DVector::from_element(k, 1.0),
            }
        }
    }
}

/// One-IWLS-step Gaussian approximation of the block's full conditional at
/// `theta`: precision D'VD + Q0, mean solving towards the working response.
fn proposal_at(
    ctx: &SamplerContext<'_>,
    state: &ChainState,
    view: &BlockView,
    eta_rest: &DVector<f64>,
    theta: &DVector<f64>,
) -> Result<GaussianFcd, SamplerError> {
    let n = ctx.n;
    let k = theta.len();
    let eta = eta_rest + &view.design * theta;
    let mut weights = DVector::<f64>::zeros(n);
    let mut grad = DVector::<f64>::zeros(n);
    let gaussian = ctx.family.is_gaussian();
    for i in 0..n {
        let mu = ctx.family.mean(eta[i]);
        if gaussian {
            weights[i] = 1.0 / state.phi;
            grad[i] = (ctx.y[i] - mu) / state.phi;
        } else {
            weights[i] = ctx.family.working_weight(eta[i]);
            grad[i] = ctx.y[i] - mu;
        }
    }
    let mut weighted = view.design.clone();
    for i in 0..n {
        let w = weights[i];
        for c in 0..k {
            weighted[(i, c)] *= w;
        }
    }
    let mut precision = view.design.transpose() * &weighted;
    for c in 0..k {
        precision[(c, c)] += view.prior_precision[c];
    }
    let d_theta = &view.design * theta;
    let working = DVector::from_fn(n, |i, _| weights[i] * d_theta[i] + grad[i]);
    let mut rhs = view.design.transpose() * working;
    for c in 0..k {
        rhs[c] += view.prior_precision[c] * view.prior_mean[c];
    }
    GaussianFcd::from_precision(precision, &rhs, "P-IWLS proposal")
}

fn log_prior(view: &BlockView, theta: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..theta.len() {
        let d = theta[i] - view.prior_mean[i];
        acc -= 0.5 * view.prior_precision[i] * d * d;
    }
    acc
}

fn commit(
    ctx: &SamplerContext<'_>,
    state: &mut ChainState,
    scratch: &mut Scratch,
    block: PiwlsBlock,
    draw: &DVector<f64>,
) {
    match block {
        PiwlsBlock::BetaU => {
            let delta = draw - &state.beta_u;
            scratch.eta += &ctx.design.x_u * delta;
            state.beta_u = draw.clone();
        }
        PiwlsBlock::Alpha(b) => {
            for (bi, j) in ctx.alpha_blocks[b].clone().enumerate() {
                let delta = draw[bi] - state.alpha[j];
                if delta != 0.0 {
                    scratch.eta.axpy(delta, &scratch.f[j], 1.0);
                }
                state.alpha[j] = draw[bi];
            }
        }
        PiwlsBlock::Xi(b) => apply_xi_draw(ctx, state, scratch, b, draw),
    }
}

fn count(counts: &mut AcceptanceCounts, block: PiwlsBlock, accepted: bool) {
    let (acc, total) = match block {
        PiwlsBlock::BetaU => (&mut counts.beta_u_accepted, &mut counts.beta_u_proposed),
        PiwlsBlock::Alpha(_) => (&mut counts.alpha_accepted, &mut counts.alpha_proposed),
        PiwlsBlock::Xi(_) => (&mut counts.xi_accepted, &mut counts.xi_proposed),
    };
    *total += 1;
    if accepted {
        *acc += 1;
    }
}

/// One Metropolis-Hastings step with a P-IWLS proposal on the given block.
/// Returns whether the move was accepted (the block is unchanged on
/// rejection).
pub fn piwls_update<R: Rng>(
    ctx: &SamplerContext<'_>,
    state: &mut ChainState,
    scratch: &mut Scratch,
    block: PiwlsBlock,
    rng: &mut R,
    counts: &mut AcceptanceCounts,
) -> Result<bool, SamplerError> {
    let view = block_view(ctx, state, scratch, block);
    if ctx.config.prior_only {
        // The proposal equals the prior and every move is accepted.
        let standard = Normal::new(0.0, 1.0).unwrap();
        let draw = DVector::from_fn(view.theta.len(), |i, _| {
            view.prior_mean[i] + standard.sample(rng) / view.prior_precision[i].sqrt()
        });
        commit(ctx, state, scratch, block, &draw);
        count(counts, block, true);
        return Ok(true);
    }
    let eta_rest = &scratch.eta - &view.design * &view.theta;
    let forward = proposal_at(ctx, state, &view, &eta_rest, &view.theta)?;
    let proposal = forward.sample(rng);
    let reverse = proposal_at(ctx, state, &view, &eta_rest, &proposal)?;

    let eta_current = &eta_rest + &view.design * &view.theta;
    let eta_proposed = &eta_rest + &view.design * &proposal;
    let ll_current = ctx
        .family
        .log_likelihood(ctx.y, eta_current.as_slice(), state.phi);
    let ll_proposed = ctx
        .family
        .log_likelihood(ctx.y, eta_proposed.as_slice(), state.phi);
    let log_ratio = ll_proposed + log_prior(&view, &proposal) + reverse.log_density(&view.theta)
        - ll_current
        - log_prior(&view, &view.theta)
        - forward.log_density(&proposal);
    if !log_ratio.is_finite() && log_ratio.is_nan() {
        return Err(SamplerError::NonFinite("P-IWLS acceptance ratio".into()));
    }
    let accepted = rng.random::<f64>().ln() < log_ratio;
    if accepted {
        commit(ctx, state, scratch, block, &proposal);
    }
    count(counts, block, accepted);
    Ok(accepted)
}
