//! Chain state and randomized initialization.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};

use super::context::{SamplerContext, BETA_U_VARIANCE};
use super::updates::draw_inv_gamma;

/// All sampler unknowns for one chain. The coefficient batch of term j is
/// `beta_j = alpha[j] * xi[range_j]`.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub beta_u: DVector<f64>,
    pub alpha: DVector<f64>,
    pub xi: DVector<f64>,
    /// Prior means of xi entries, each +-1.
    pub m: DVector<f64>,
    /// Selection indicator values, each exactly 1 or v0.
    pub gamma: DVector<f64>,
    pub tau2: DVector<f64>,
    pub w: f64,
    /// Gaussian error variance (unused for other families).
    pub phi: f64,
}

impl ChainState {
    /// Reconstructed coefficient vector `blockdiag(xi_1,...,xi_p) * alpha`.
    pub fn beta(&self, ctx: &SamplerContext<'_>) -> DVector<f64> {
        let mut beta = DVector::zeros(ctx.q);
        for j in 0..ctx.p {
            let a = self.alpha[j];
            for l in ctx.term_range(j) {
                beta[l] = a * self.xi[l];
            }
        }
        beta
    }
}

/// Ridge hypervariance used by the Fisher-scoring initialization for
/// penalized coefficients ("fixed, large hypervariances").
pub const INIT_HYPERVARIANCE: f64 = 100.0;
const FISHER_STEPS: usize = 5;

/// Preliminary coefficient vector `[beta_u, beta_penalized]` from a few
/// Fisher-scoring steps on the ridge-penalized full design. Shared by all
/// chains; falls back to zeros if the scoring iteration leaves the finite
/// range.
pub fn initial_coefficients(ctx: &SamplerContext<'_>) -> DVector<f64> {
    let total = ctx.n_u + ctx.q;
    if ctx.config.prior_only {
        return DVector::zeros(total);
    }
    let n = ctx.n;
    let mut x = DMatrix::<f64>::zeros(n, total);
    x.columns_mut(0, ctx.n_u).copy_from(&ctx.design.x_u);
    for (j, block) in ctx.design.blocks.iter().enumerate() {
        x.columns_mut(ctx.n_u + ctx.term_offsets[j], ctx.term_dims[j])
            .copy_from(&block.b);
    }
    let mut prior_precision = DVector::<f64>::zeros(total);
    for k in 0..ctx.n_u {
        prior_precision[k] = 1.0 / BETA_U_VARIANCE;
    }
    for k in ctx.n_u..total {
        prior_precision[k] = 1.0 / INIT_HYPERVARIANCE;
    }
    let y = DVector::from_column_slice(ctx.y);
    let n_f = n as f64;
    let var_y = {
        let mean = y.sum() / n_f;
        (y.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n_f).max(1e-8)
    };
    let mut beta = DVector::<f64>::zeros(total);
    for _ in 0..FISHER_STEPS {
        let eta = &ctx.offset + &x * &beta;
        let mut weights = DVector::<f64>::zeros(n);
        let mut grad = DVector::<f64>::zeros(n);
        for i in 0..n {
            let mu = ctx.family.mean(eta[i]);
            let w = ctx.family.working_weight(eta[i]);
            let (v, g) = if ctx.family.is_gaussian() {
                (1.0 / var_y, (y[i] - mu) / var_y)
            } else {
                (w, y[i] - mu)
            };
            weights[i] = v;
            grad[i] = g;
        }
        // (X'VX + D) beta_new = X'(V X beta + grad)
        let xw = {
            let mut xw = x.clone();
            for i in 0..n {
                let w = weights[i];
                for k in 0..total {
                    xw[(i, k)] *= w;
                }
            }
            xw
        };
        let mut lhs = x.transpose() * xw;
        for k in 0..total {
            lhs[(k, k)] += prior_precision[k];
        }
        let rhs = x.transpose() * (DVector::from_fn(n, |i, _| weights[i] * (eta[i] - ctx.offset[i]) + grad[i]));
        match lhs.cholesky() {
            Some(chol) => beta = chol.solve(&rhs),
            None => {
                log::warn!("Fisher-scoring initialization: singular system, keeping previous iterate");
                break;
            }
        }
        if beta.iter().any(|v| !v.is_finite()) {
            log::warn!("Fisher-scoring initialization diverged, falling back to zero start");
            return DVector::zeros(total);
        }
    }
    beta
}

/// Randomized three-step chain initialization around a shared preliminary
/// coefficient vector: add per-chain Gaussian noise, rescale each term's
/// batch by prior-drawn `gamma_j tau2_j`, then derive `alpha`, `xi`, `m` and
/// draw the remaining unknowns from their priors.
pub fn init_state_from_base<R: Rng>(
    ctx: &SamplerContext<'_>,
    base: &DVector<f64>,
    rng: &mut R,
) -> ChainState {
    let hyper = &ctx.hyper;
    let standard = Normal::new(0.0, 1.0).unwrap();
    let mut noisy = base.clone();
    for v in noisy.iter_mut() {
        let sd = 0.25 * v.abs() + 0.1;
        *v += sd * standard.sample(rng);
    }
    let beta_u = noisy.rows(0, ctx.n_u).into_owned();

    let w = Beta::new(hyper.a_w, hyper.b_w).unwrap().sample(rng);
    let mut gamma = DVector::zeros(ctx.p);
    let mut tau2 = DVector::zeros(ctx.p);
    let mut alpha = DVector::zeros(ctx.p);
    let mut xi = DVector::zeros(ctx.q);
    // Scale reference so slab-assigned terms stay near the ridge solution.
    let prior_tau2_mean = if hyper.a_tau > 1.0 {
        hyper.b_tau / (hyper.a_tau - 1.0)
    } else {
        hyper.b_tau / hyper.a_tau
    };
    for j in 0..ctx.p {
        gamma[j] = if rng.random::<f64>() < w { 1.0 } else { hyper.v0 };
        tau2[j] = draw_inv_gamma(rng, hyper.a_tau, hyper.b_tau);
        let scale = (gamma[j] * tau2[j] / prior_tau2_mean).sqrt();
        let range = ctx.term_range(j);
        let d = ctx.term_dims[j] as f64;
        let mut abs_sum = 0.0;
        for l in range.clone() {
            let b = noisy[ctx.n_u + l] * scale;
            xi[l] = b;
            abs_sum += b.abs();
        }
        let a = abs_sum / d;
        alpha[j] = a;
        if a > 0.0 {
            for l in range {
                xi[l] /= a;
            }
        } else {
            for l in range {
                xi[l] = 1.0;
            }
        }
    }
    let m = DVector::from_fn(ctx.q, |l, _| if xi[l] < 0.0 { -1.0 } else { 1.0 });
    let phi = if ctx.family.is_gaussian() {
        let draw = draw_inv_gamma(rng, hyper.a_phi, hyper.b_phi);
        if draw.is_finite() && (1e-12..=1e12).contains(&draw) {
            draw
        } else {
            // The default error-variance prior is so flat that draws can
            // escape the representable range; start at the sample variance.
            let n_f = ctx.n as f64;
            let mean = ctx.y.iter().sum::<f64>() / n_f;
            (ctx.y.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n_f).max(1e-8)
        }
    } else {
        1.0
    };
    ChainState {
        beta_u,
        alpha,
        xi,
        m,
        gamma,
        tau2,
        w,
        phi,
    }
}

/// Full initialization: Fisher-scoring base plus the randomized three-step
/// setup.
pub fn init_state<R: Rng>(ctx: &SamplerContext<'_>, rng: &mut R) -> ChainState {
    let base = initial_coefficients(ctx);
    init_state_from_base(ctx, &base, rng)
}
