//! Exact full-conditional updates for the Gaussian case and the
//! likelihood-free updates shared by all families.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal};

use super::context::{SamplerContext, BETA_U_VARIANCE};
use super::state::ChainState;
use super::SamplerError;

/// Draw from the inverse-Gamma distribution with the given shape and scale
/// (density proportional to x^{-shape-1} exp(-scale/x)).
pub fn draw_inv_gamma<R: Rng>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0)
        .expect("inverse-Gamma shape must be positive")
        .sample(rng);
    scale / g.max(f64::MIN_POSITIVE)
}

/// A Gaussian full conditional in precision form.
pub struct GaussianFcd {
    pub mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl GaussianFcd {
    pub(super) fn from_precision(
        precision: DMatrix<f64>,
        rhs: &DVector<f64>,
        what: &str,
    ) -> Result<Self, SamplerError> {
        let chol = precision
            .cholesky()
            .ok_or_else(|| SamplerError::NotPositiveDefinite(what.to_string()))?;
        let mean = chol.solve(rhs);
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(SamplerError::NonFinite(what.to_string()));
        }
        Ok(GaussianFcd { mean, chol })
    }

    /// Covariance matrix (inverse of the conditional precision).
    pub fn covariance(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let k = self.mean.len();
        let standard = Normal::new(0.0, 1.0).unwrap();
        let z = DVector::from_fn(k, |_, _| standard.sample(rng));
        // x = mean + L^-T z has covariance (L L')^-1.
        let lt = self.chol.l().transpose();
        let shift = lt
            .solve_upper_triangular(&z)
            .expect("Cholesky factor is nonsingular");
        &self.mean + shift
    }

    /// Log-density of the proposal at `x` (normalized).
    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let k = self.mean.len() as f64;
        let diff = x - &self.mean;
        let lt_diff = self.chol.l().transpose() * diff;
        let log_det: f64 = (0..self.mean.len())
            .map(|i| self.chol.l()[(i, i)].ln())
            .sum();
        log_det - 0.5 * k * (2.0 * std::f64::consts::PI).ln() - 0.5 * lt_diff.norm_squared()
    }
}

/// Mutable per-chain caches: per-term fitted directions `f_j = B_j xi_j`
/// and the full linear predictor.
pub struct Scratch {
    pub f: Vec<DVector<f64>>,
    pub eta: DVector<f64>,
}

impl Scratch {
    pub fn new(ctx: &SamplerContext<'_>, state: &ChainState) -> Self {
        let mut scratch = Scratch {
            f: vec![DVector::zeros(ctx.n); ctx.p],
            eta: DVector::zeros(ctx.n),
        };
        scratch.refresh(ctx, state);
        scratch
    }

    /// Recompute every cache from the state (also run once per sweep to keep
    /// incremental-update rounding from accumulating).
    pub fn refresh(&mut self, ctx: &SamplerContext<'_>, state: &ChainState) {
        for j in 0..ctx.p {
            let range = ctx.term_range(j);
            let xi_j = state.xi.rows(range.start, range.len());
            self.f[j] = &ctx.design.blocks[j].b * xi_j;
        }
        self.recompute_eta(ctx, state);
    }

    pub fn recompute_eta(&mut self, ctx: &SamplerContext<'_>, state: &ChainState) {
        self.eta = &ctx.offset + &ctx.design.x_u * &state.beta_u;
        for j in 0..ctx.p {
            self.eta.axpy(state.alpha[j], &self.f[j], 1.0);
        }
    }
}

/// Full conditional of one alpha block for Gaussian responses:
/// precision (1/phi) F'F + diag(gamma tau2)^-1 with F the collapsed design
/// columns `f_j`, mean = precision^-1 (1/phi) F' ytilde over the block's
/// partial residual.
pub fn alpha_fcd_gaussian(
    ctx: &SamplerContext<'_>,
    state: &ChainState,
    scratch: &Scratch,
    block: usize,
) -> Result<GaussianFcd, SamplerError> {
    let terms = ctx.alpha_blocks[block].clone();
    let k = terms.len();
    let inv_phi = 1.0 / state.phi;
    let mut precision = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    if !ctx.config.prior_only {
        // Partial residual: y - eta + contribution of the block's terms.
        let mut resid = DVector::from_column_slice(ctx.y) - &scratch.eta;
        for (bi, j) in terms.clone().enumerate() {
            let _ = bi;
            resid.axpy(state.alpha[j], &scratch.f[j], 1.0);
        }
        for (bi, j) in terms.clone().enumerate() {
            for (bk, jk) in terms.clone().enumerate().skip(bi) {
                let v = inv_phi * scratch.f[j].dot(&scratch.f[jk]);
                precision[(bi, bk)] = v;
                precision[(bk, bi)] = v;
            }
            rhs[bi] = inv_phi * scratch.f[j].dot(&resid);
        }
    }
    for (bi, j) in terms.enumerate() {
        precision[(bi, bi)] += 1.0 / (state.gamma[j] * state.tau2[j]);
    }
    GaussianFcd::from_precision(precision, &rhs, "alpha block")
}

pub fn update_alpha_gaussian<R: Rng>(
    ctx: &SamplerContext<'_>,
    state: &mut ChainState,
    scratch: &mut Scratch,
    block: usize,
    rng: &mut R,
) -> Result<(), SamplerError> {
    let fcd = alpha_fcd_gaussian(ctx, state, scratch, block)?;
    let draw = fcd.sample(rng);
    for (bi, j) in ctx.alpha_blocks[block].clone().enumerate() {
        let delta = draw[bi] - state.alpha[j];
        if delta != 0.0 {
            scratch.eta.axpy(delta, &scratch.f[j], 1.0);
        }
        state.alpha[j] = draw[bi];
    }
    Ok(())
}

/// Full conditional of one xi block (a contiguous slice within term `j`):
/// precision (1/phi) X'X + I with X = alpha_j B_j[:, S], mean =
/// precision^-1 ((1/phi) X' ytilde + m_S).
pub fn xi_fcd_gaussian(
    ctx: &SamplerContext<'_>,
    state: &ChainState,
    scratch: &Scratch,
    block: usize,
) -> Result<GaussianFcd, SamplerError> {
    let (j, local) = ctx.xi_blocks[block].clone();
    let k = local.len();
    let offset = ctx.term_offsets[j];
    let a = state.alpha[j];
    let inv_phi = 1.0 / state.phi;
    let mut precision = DMatrix::<f64>::identity(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    for (bi, l) in local.clone().enumerate() {
        rhs[bi] = state.m[offset + l];
    }
    if !ctx.config.prior_only {
        let b_s = ctx.design.blocks[j].b.columns(local.start, k);
        let xi_s = state.xi.rows(offset + local.start, k);
        // ytilde = y - eta + alpha_j * B_S xi_S.
        let mut resid = DVector::from_column_slice(ctx.y) - &scratch.eta;
        resid.axpy(a, &(b_s * xi_s), 1.0);
        let gram_ss = ctx
            .gram[j]
            .view((local.start, local.start), (k, k));
        let scale = inv_phi * a * a;
        for bi in 0..k {
            for bk in bi..k {
                let v = scale * gram_ss[(bi, bk)];
                precision[(bi, bk)] += v;
                if bk != bi {
                    precision[(bk, bi)] += v;
                }
            }
        }
        let xt_resid = b_s.transpose() * resid;
        for bi in 0..k {
            rhs[bi] += inv_phi * a * xt_resid[bi];
        }
    }
    GaussianFcd::from_precision(precision, &rhs, "xi block")
}

pub fn update_xi_gaussian<R: Rng>(
    ctx: &SamplerContext<'_>,
    state: &mut ChainState,
    scratch: &mut Scratch,
    block: usize,
    rng: &mut R,
) -> Result<(), SamplerError> {
    let fcd = xi_fcd_gaussian(ctx, state, scratch, block)?;
    let draw = fcd.sample(rng);
    apply_xi_draw(ctx, state, scratch, block, &draw);
    Ok(())
}

/// Commit new values for one xi block, updating the term cache and the
/// linear predictor incrementally.
pub(super) fn apply_xi_draw(
    ctx: &SamplerContext<'_>,
    state: &mut ChainState,
    scratch: &mut Scratch,
    block: usize,
    draw: &DVector<f64>,
) {
    let (j, local) = ctx.xi_blocks[block].clone();
    let offset = ctx.term_offsets[j];
    let k = local.len();
    let b_s = ctx.design.blocks[j].b.columns(local.start, k);
    let mut delta = DVector::<f64>::zeros(k);
    for (bi, l) in local.clone().enumerate() {
        delta[bi] = draw[bi] - state.xi[offset + l];
        state.xi[offset + l] = draw[bi];
    }
    let df = b_s * delta;
    scratch.f[j] += &df;
    scratch.eta.axpy(state.alpha[j], &df, 1.0);
}

/// Full conditional of the unpenalized coefficients (flat Gaussian prior
/// with variance 1e6 per coefficient).
pub fn beta_u_fcd_gaussian(
    ctx: &SamplerContext<'_>,
    state: &ChainState,
    scratch: &Scratch,
) -> Result<GaussianFcd, SamplerError> {
    let k = ctx.n_u;
    let inv_phi = 1.0 / state.phi;
    let mut precision = DMatrix::<f64>::identity(k, k) / BETA_U_VARIANCE;
    let mut rhs = DVector::<f64>::zeros(k);
    if !ctx.config.prior_only {
        precision += ctx.xu_gram.scale(inv_phi);
        let mut resid = DVector::from_column_slice(ctx.y) - &scratch.eta;
        resid += &ctx.design.x_u * &state.beta_u;
        rhs = ctx.design.x_u.transpose() * resid * inv_phi;
    }
    GaussianFcd::from_precision(precision, &rhs, "unpenalized block")
}

pub fn update_beta_u_gaussian<R: Rng>(
    ctx: &SamplerContext<'_>,
    state: &mut ChainState,
    scratch: &mut Scratch,
    rng: &mut R,
) -> Result<(), SamplerError> {
    let fcd = beta_u_fcd_gaussian(ctx, state, scratch)?;
    let draw = fcd.sample(rng);
    let delta = &draw - &state.beta_u;
    scratch.eta += &ctx.design.x_u * delta;
    state.beta_u = draw;
    Ok(())
}

/// Update the xi prior means: each m_l is 1 with probability
/// 1 / (1 + exp(-2 xi_l)), else -1.
pub fn update_m<R: Rng>(state: &mut ChainState, rng: &mut R) {
    for l in 0..state.xi.len() {
        let p = 1.0 / (1.0 + (-2.0 * state.xi[l]).exp());
        state.m[l] = if rng.random::<f64>() < p { 1.0 } else { -1.0 };
    }
}

/// Rescale term j so that its xi block has mean absolute value one:
/// xi /= s, alpha *= s with s = mean |xi|. Leaves beta_j (and the
/// likelihood) unchanged; a zero block is left as is.
pub fn rescale_term(
    ctx: &SamplerContext<'_>,
    state: &mut ChainState,
    scratch: &mut Scratch,
    j: usize,
) {
    let range = ctx.term_range(j);
    let d = range.len() as f64;
    let s: f64 = range.clone().map(|l| state.xi[l].abs()).sum::<f64>() / d;
    if s == 0.0 || !s.is_finite() {
        return;
    }
    for l in range {
        state.xi[l] /= s;
    }
    state.alpha[j] *= s;
    scratch.f[j] /= s;
}

/// tau2_j ~ InvGamma(a_tau + 1/2, b_tau + alpha_j^2 / (2 gamma_j)).
pub fn update_tau2<R: Rng>(ctx: &SamplerContext<'_>, state: &mut ChainState, rng: &mut R) {
    let hyper = &ctx.hyper;
    for j in 0..ctx.p {
        let scale = hyper.b_tau + state.alpha[j] * state.alpha[j] / (2.0 * state.gamma[j]);
        state.tau2[j] = draw_inv_gamma(rng, hyper.a_tau + 0.5, scale);
    }
}

/// Probability that gamma_j takes the slab value 1, computed in log space:
/// odds = [w/(1-w)] * sqrt(v0) * exp((1 - v0) alpha^2 / (2 v0 tau2)).
pub fn gamma_slab_probability(alpha: f64, tau2: f64, w: f64, v0: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    if w >= 1.0 {
        return 1.0;
    }
    let log_odds =
        w.ln() - (1.0 - w).ln() + 0.5 * v0.ln() + (1.0 - v0) * alpha * alpha / (2.0 * v0 * tau2);
    if log_odds >= 0.0 {
        1.0 / (1.0 + (-log_odds).exp())
    } else {
        let e = log_odds.exp();
        e / (1.0 + e)
    }
}

/// gamma_j set to 1 with the slab probability, else to v0.
pub fn update_gamma<R: Rng>(ctx: &SamplerContext<'_>, state: &mut ChainState, rng: &mut R) {
    let v0 = ctx.hyper.v0;
    for j in 0..ctx.p {
        let p1 = gamma_slab_probability(state.alpha[j], state.tau2[j], state.w, v0);
        state.gamma[j] = if rng.random::<f64>() < p1 { 1.0 } else { v0 };
    }
}

/// w ~ Beta(a_w + #slab, b_w + #spike).
pub fn update_w<R: Rng>(ctx: &SamplerContext<'_>, state: &mut ChainState, rng: &mut R) {
    let slab = state.gamma.iter().filter(|&&g| g == 1.0).count() as f64;
    let spike = ctx.p as f64 - slab;
    state.w = Beta::new(ctx.hyper.a_w + slab, ctx.hyper.b_w + spike)
        .expect("Beta parameters are positive")
        .sample(rng);
}

/// phi ~ InvGamma(a_phi + n/2, b_phi + SSR/2) over the current full linear
/// predictor (Gaussian responses only).
pub fn update_phi<R: Rng>(
    ctx: &SamplerContext<'_>,
    state: &mut ChainState,
    scratch: &Scratch,
    rng: &mut R,
) {
    let hyper = &ctx.hyper;
    if ctx.config.prior_only {
        let draw = draw_inv_gamma(rng, hyper.a_phi, hyper.b_phi);
        state.phi = draw.clamp(1e-300, 1e300);
        return;
    }
    let ssr: f64 = ctx
        .y
        .iter()
        .zip(scratch.eta.iter())
        .map(|(&yi, &ei)| (yi - ei) * (yi - ei))
        .sum();
    state.phi = draw_inv_gamma(rng, hyper.a_phi + ctx.n as f64 / 2.0, hyper.b_phi + ssr / 2.0);
}
