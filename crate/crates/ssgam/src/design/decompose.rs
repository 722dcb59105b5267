//! Reduced-rank reparameterizations, centering, and scaling.

use nalgebra::DMatrix;

use super::DesignError;
use crate::design::PenalizedBasis;

/// Relative eigenvalue threshold below which a value counts as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Result of the orthogonal (covariance-spectrum) decomposition.
#[derive(Debug, Clone)]
pub struct OrthoDecomposition {
    /// Penalized design part `U+ D+^(1/2)`, truncated to the retained columns.
    pub b: DMatrix<f64>,
    /// Orthonormal basis of the unpenalized function space `span(B~ L0)`.
    pub u0: DMatrix<f64>,
    /// Coefficient-space transform with `b = b_tilde * transform`.
    pub transform: DMatrix<f64>,
    /// Fraction of the positive eigenvalue sum retained by the truncation.
    pub mass_retained: f64,
}

/// Spectral split of a positive semi-definite penalty.
struct PenaltySpectrum {
    /// `Lambda+ Gamma+^(-1/2)`: maps whitened coefficients to the original ones.
    whitener: DMatrix<f64>,
    /// `Lambda+ Gamma+^(1/2)`.
    l: DMatrix<f64>,
    /// Nullspace eigenvectors `Lambda0`.
    nullspace: DMatrix<f64>,
}

fn penalty_spectrum(penalty: &DMatrix<f64>) -> Result<PenaltySpectrum, DesignError> {
    let d = penalty.nrows();
    let eig = penalty.clone().symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut pos: Vec<usize> = Vec::new();
    let mut null: Vec<usize> = Vec::new();
    for i in 0..d {
        let ev = eig.eigenvalues[i];
        if ev < -1e-8 * max_ev.max(1.0) {
            return Err(DesignError::IndefinitePenalty { eigenvalue: ev });
        }
        if ev > RANK_TOL * max_ev {
            pos.push(i);
        } else {
            null.push(i);
        }
    }
    // Deterministic order: descending eigenvalue.
    pos.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut whitener = DMatrix::<f64>::zeros(d, pos.len());
    let mut l = DMatrix::<f64>::zeros(d, pos.len());
    for (k, &i) in pos.iter().enumerate() {
        let ev = eig.eigenvalues[i];
        let scale = ev.sqrt();
        for r in 0..d {
            whitener[(r, k)] = eig.eigenvectors[(r, i)] / scale;
            l[(r, k)] = eig.eigenvectors[(r, i)] * scale;
        }
    }
    let mut nullspace = DMatrix::<f64>::zeros(d, null.len());
    for (k, &i) in null.iter().enumerate() {
        for r in 0..d {
            nullspace[(r, k)] = eig.eigenvectors[(r, i)];
        }
    }
    Ok(PenaltySpectrum {
        whitener,
        l,
        nullspace,
    })
}

/// Orthogonal decomposition of the implied function covariance
/// `B~ P^- B~'`: returns the reduced-rank penalized design whose columns
/// retain at least `mass` of the positive eigenvalue sum, plus the
/// unpenalized function-space basis.
///
/// Computed through the SVD of the factor `M = B~ Lambda+ Gamma+^(-1/2)`
/// (so `M M' = B~ P^- B~'`), which is the dense spectral route in a
/// numerically stable form.
pub fn orthogonal_decomposition(
    pb: &PenalizedBasis,
    mass: f64,
) -> Result<OrthoDecomposition, DesignError> {
    let spectrum = penalty_spectrum(&pb.penalty)?;
    if spectrum.whitener.ncols() == 0 {
        return Err(DesignError::EmptyPenalizedPart);
    }
    let factor = &pb.b_tilde * &spectrum.whitener;
    let svd = factor.svd(true, true);
    let u = svd.u.as_ref().expect("svd requested u");
    let vt = svd.v_t.as_ref().expect("svd requested v_t");
    let eigenvalues: Vec<f64> = svd.singular_values.iter().map(|s| s * s).collect();
    let max_ev = eigenvalues.first().copied().unwrap_or(0.0);
    let positive: Vec<f64> = eigenvalues
        .iter()
        .copied()
        .filter(|&ev| ev > RANK_TOL * max_ev && ev > 0.0)
        .collect();
    if positive.is_empty() {
        return Err(DesignError::EmptyPenalizedPart);
    }
    let total: f64 = positive.iter().sum();
    let mut keep = positive.len();
    let mut acc = 0.0;
    for (i, ev) in positive.iter().enumerate() {
        acc += ev;
        if acc >= mass * total {
            keep = i + 1;
            break;
        }
    }
    // b = B~ * whitener * V_keep = U+ D+^(1/2) in exact arithmetic; the
    // transform route is used so that re-evaluating the recipe on the
    // training data reproduces the block bit for bit.
    let v_keep = vt.rows(0, keep).transpose();
    let transform = &spectrum.whitener * v_keep;
    let b = &pb.b_tilde * &transform;
    let _ = u;
    let u0 = orthonormal_columns(&(&pb.b_tilde * &spectrum.nullspace));
    let retained: f64 = positive[..keep].iter().sum();
    Ok(OrthoDecomposition {
        b,
        u0,
        transform,
        mass_retained: retained / total,
    })
}

/// Mixed-model decomposition: splits the coefficient space into the penalty
/// nullspace (flat prior) and its complement, with the penalized part
/// reparameterized to an iid Gaussian prior.
///
/// Returns `(B_u, B, transform)` where `B_u = B~ Lambda0`,
/// `B = B~ L (L'L)^-1`, and `B = B~ * transform`.
pub fn mixed_model_decomposition(
    pb: &PenalizedBasis,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>), DesignError> {
    let spectrum = penalty_spectrum(&pb.penalty)?;
    let ltl = spectrum.l.transpose() * &spectrum.l;
    let chol = ltl
        .cholesky()
        .ok_or(DesignError::NotPositiveDefinite)?;
    // transform = L (L'L)^-1, computed by solving (L'L) X' = L'.
    let transform = chol.solve(&spectrum.l.transpose()).transpose();
    let b_u = &pb.b_tilde * &spectrum.nullspace;
    let b = &pb.b_tilde * &transform;
    Ok((b_u, b, transform))
}

/// Orthonormal basis of the column space of `m` (rank-revealing).
fn orthonormal_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.ncols() == 0 {
        return DMatrix::<f64>::zeros(m.nrows(), 0);
    }
    let qr = m.clone().col_piv_qr();
    let r = qr.r();
    let q = qr.q();
    let r0 = r[(0, 0)].abs();
    let rank = (0..r.nrows().min(r.ncols()))
        .take_while(|&i| r[(i, i)].abs() > RANK_TOL * r0.max(f64::MIN_POSITIVE))
        .count();
    q.columns(0, rank).into_owned()
}

/// Centering outcome, including what is needed to reproduce the projection
/// on new data: the retained (independent) columns of `Z` and the
/// correction coefficients `C` with `centered = B - Z[:, kept] * C`.
#[derive(Debug, Clone)]
pub struct Centered {
    pub b: DMatrix<f64>,
    pub kept: Vec<usize>,
    pub correction: DMatrix<f64>,
}

/// Project the columns of `b` orthogonal to the column space of `z`.
/// Numerically dependent columns of `z` are dropped first; the projection
/// uses the QR decomposition of the remaining columns. An empty `z` returns
/// `b` unchanged.
pub fn center_with_info(b: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<Centered, DesignError> {
    if z.ncols() == 0 {
        log::debug!("centering skipped: empty Z");
        return Ok(Centered {
            b: b.clone(),
            kept: vec![],
            correction: DMatrix::zeros(0, b.ncols()),
        });
    }
    if z.nrows() != b.nrows() {
        return Err(DesignError::RowCountMismatch {
            left: b.nrows(),
            right: z.nrows(),
        });
    }
    // Rank-revealing pass over Z.
    let piv = z.clone().col_piv_qr();
    let r = piv.r();
    let r0 = r[(0, 0)].abs();
    if r0 == 0.0 {
        return Err(DesignError::InvalidArgument(
            "centering space Z is identically zero".to_string(),
        ));
    }
    let rank = (0..r.nrows().min(r.ncols()))
        .take_while(|&i| r[(i, i)].abs() > RANK_TOL * r0)
        .count();
    let mut perm = nalgebra::RowDVector::<f64>::from_iterator(
        z.ncols(),
        (0..z.ncols()).map(|i| i as f64),
    );
    piv.p().permute_columns(&mut perm);
    let mut kept: Vec<usize> = perm.iter().take(rank).map(|&v| v as usize).collect();
    kept.sort_unstable();
    let mut z_kept = DMatrix::<f64>::zeros(z.nrows(), rank);
    for (j, &col) in kept.iter().enumerate() {
        z_kept.set_column(j, &z.column(col));
    }
    let qr = z_kept.clone().qr();
    let q = qr.q();
    let qtb = q.transpose() * b;
    // C solves R C = Q'B so that Z_kept C = Q Q' B; the subtraction goes
    // through Z_kept * C (not Q Q' B) to match the prediction path exactly.
    let mut correction = qtb;
    if !qr.r().solve_upper_triangular_mut(&mut correction) {
        return Err(DesignError::InvalidArgument(
            "centering space Z is numerically singular".to_string(),
        ));
    }
    let centered = b - &z_kept * &correction;
    Ok(Centered {
        b: centered,
        kept,
        correction,
    })
}

/// Projection of `b` orthogonal to the columns of `z`.
pub fn center(b: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>, DesignError> {
    Ok(center_with_info(b, z)?.b)
}

/// Scale a matrix to Frobenius norm 0.5; returns the scaled matrix and the
/// factor applied.
pub fn scale_frobenius_with_factor(b: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64), DesignError> {
    let norm = b.norm();
    if norm <= 0.0 || !norm.is_finite() {
        return Err(DesignError::ZeroMatrix);
    }
    let factor = 0.5 / norm;
    Ok((b * factor, factor))
}

/// Scale a matrix to Frobenius norm 0.5.
pub fn scale_frobenius(b: &DMatrix<f64>) -> Result<DMatrix<f64>, DesignError> {
    scale_frobenius_with_factor(b).map(|(m, _)| m)
}
