//! Raw basis and penalty construction for every term type.

use nalgebra::{DMatrix, DVector};

use super::{DesignError, PenalizedBasis};

/// Orthonormal polynomial basis of degrees 1..=degree in `x`, excluding the
/// constant. Columns are mutually orthogonal, unit norm, and orthogonal to
/// the all-ones vector. Returns the basis together with the centering mean
/// and the (degree+1) x degree transform that reproduces the basis from
/// `[1, (x - mean), ..., (x - mean)^degree]` on new data.
pub fn poly_basis(x: &[f64], degree: usize) -> Result<(DMatrix<f64>, f64, DMatrix<f64>), DesignError> {
    if degree == 0 {
        return Err(DesignError::InvalidArgument(
            "polynomial degree must be >= 1".to_string(),
        ));
    }
    let n = x.len();
    let mut distinct: Vec<f64> = x.to_vec();
    distinct.sort_by(|a, b| a.total_cmp(b));
    distinct.dedup();
    if distinct.len() < degree + 1 {
        return Err(DesignError::InsufficientDistinctValues {
            needed: degree + 1,
            found: distinct.len(),
        });
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let vandermonde = raw_poly_columns(x, mean, degree);
    let qr = vandermonde.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let r0 = r[(0, 0)].abs();
    for j in 0..=degree {
        if r[(j, j)].abs() < 1e-10 * r0 {
            return Err(DesignError::InsufficientDistinctValues {
                needed: degree + 1,
                found: j,
            });
        }
    }
    // W = R^-1 with column signs fixed so diag(R) > 0; drop the constant.
    let mut w = DMatrix::<f64>::identity(degree + 1, degree + 1);
    if !r.solve_upper_triangular_mut(&mut w) {
        return Err(DesignError::InsufficientDistinctValues {
            needed: degree + 1,
            found: degree,
        });
    }
    let mut transform = DMatrix::<f64>::zeros(degree + 1, degree);
    for j in 1..=degree {
        let sign = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..=degree {
            transform[(i, j - 1)] = sign * w[(i, j)];
        }
    }
    let _ = q;
    // Evaluate through the stored transform so that training and prediction
    // share one code path.
    let basis = &vandermonde * &transform;
    Ok((basis, mean, transform))
}

/// `[1, (x-mean), ..., (x-mean)^degree]` for reapplying a stored polynomial
/// transform.
pub fn raw_poly_columns(x: &[f64], mean: f64, degree: usize) -> DMatrix<f64> {
    let n = x.len();
    let mut v = DMatrix::<f64>::zeros(n, degree + 1);
    for i in 0..n {
        let c = x[i] - mean;
        let mut p = 1.0;
        for j in 0..=degree {
            v[(i, j)] = p;
            p *= c;
        }
    }
    v
}

/// Equidistant knot vector for `n_basis` B-splines of `degree` over [a, b].
fn knot_vector(a: f64, b: f64, n_basis: usize, degree: usize) -> Vec<f64> {
    let h = (b - a) / (n_basis - degree) as f64;
    (0..=(n_basis + degree))
        .map(|i| a + (i as f64 - degree as f64) * h)
        .collect()
}

/// Evaluate all `n_basis` B-splines at `x` given the knot vector. Errors if
/// `x` lies outside the knot support `[t_degree, t_{n_basis}]`.
pub fn bspline_design(
    x: &[f64],
    knots: &[f64],
    degree: usize,
    n_basis: usize,
) -> Result<DMatrix<f64>, DesignError> {
    let lo = knots[degree];
    let hi = knots[n_basis];
    let mut out = DMatrix::<f64>::zeros(x.len(), n_basis);
    for (row, &xv) in x.iter().enumerate() {
        if !xv.is_finite() {
            return Err(DesignError::NonFiniteValue { value: xv });
        }
        if xv < lo - 1e-12 * (hi - lo).abs() || xv > hi + 1e-12 * (hi - lo).abs() {
            return Err(DesignError::OutOfRange {
                value: xv,
                lo,
                hi,
            });
        }
        // Locate the knot span (right-closed at the upper boundary).
        let mut span = degree
            + (((xv - lo) / (hi - lo) * (n_basis - degree) as f64).floor() as usize)
                .min(n_basis - degree - 1);
        while span > degree && xv < knots[span] {
            span -= 1;
        }
        while span < n_basis - 1 && xv >= knots[span + 1] {
            span += 1;
        }
        // de Boor triangle for the degree+1 splines active on this span.
        let mut vals = vec![0.0; degree + 1];
        vals[0] = 1.0;
        for d in 1..=degree {
            let mut saved = 0.0;
            for r in 0..d {
                let left = knots[span - d + 1 + r];
                let right = knots[span + 1 + r];
                let denom = right - left;
                let term = if denom.abs() > 0.0 { vals[r] / denom } else { 0.0 };
                vals[r] = saved + (right - xv) * term;
                saved = (xv - left) * term;
            }
            vals[d] = saved;
        }
        for (r, v) in vals.iter().enumerate() {
            out[(row, span - degree + r)] = *v;
        }
    }
    Ok(out)
}

/// d-th order difference penalty matrix on `n_basis` coefficients.
pub fn difference_penalty(n_basis: usize, order: usize) -> DMatrix<f64> {
    let mut delta = DMatrix::<f64>::identity(n_basis, n_basis);
    for _ in 0..order {
        let rows = delta.nrows() - 1;
        let mut next = DMatrix::<f64>::zeros(rows, n_basis);
        for i in 0..rows {
            for j in 0..n_basis {
                next[(i, j)] = delta[(i + 1, j)] - delta[(i, j)];
            }
        }
        delta = next;
    }
    delta.transpose() * delta
}

/// Univariate penalized B-spline basis: equidistant knots over the (slightly
/// padded) data range, difference penalty of the given order.
pub fn bspline_penalized_basis(
    x: &[f64],
    n_basis: usize,
    spline_degree: usize,
    penalty_order: usize,
) -> Result<(PenalizedBasis, Vec<f64>), DesignError> {
    if n_basis < spline_degree + 1 + penalty_order {
        return Err(DesignError::BasisTooSmall {
            n_basis,
            required: spline_degree + 1 + penalty_order,
        });
    }
    let (min, max) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(min.is_finite() && max.is_finite()) {
        return Err(DesignError::NonFiniteValue { value: min.min(max) });
    }
    if max - min <= 0.0 {
        return Err(DesignError::DegenerateCovariate);
    }
    let eps = 1e-6 * (max - min);
    let knots = knot_vector(min - eps, max + eps, n_basis, spline_degree);
    let b_tilde = bspline_design(x, &knots, spline_degree, n_basis)?;
    let penalty = difference_penalty(n_basis, penalty_order);
    let pb = PenalizedBasis::new(b_tilde, penalty, penalty_order)?;
    Ok((pb, knots))
}

/// Sum-to-zero contrast rows for a factor: level `i < L-1` maps to the unit
/// row `e_i`, the last level to a row of -1.
pub fn contrast_rows(codes: &[usize], n_levels: usize) -> DMatrix<f64> {
    let mut b = DMatrix::<f64>::zeros(codes.len(), n_levels - 1);
    for (i, &c) in codes.iter().enumerate() {
        if c + 1 == n_levels {
            for j in 0..(n_levels - 1) {
                b[(i, j)] = -1.0;
            }
        } else {
            b[(i, c)] = 1.0;
        }
    }
    b
}

fn check_levels_observed(codes: &[usize], n_levels: usize) -> Result<(), DesignError> {
    let mut seen = vec![false; n_levels];
    for &c in codes {
        seen[c] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(DesignError::UnobservedLevel { index: missing });
    }
    Ok(())
}

/// Factor term: sum-to-zero contrasts with an identity penalty.
pub fn fct_design(codes: &[usize], n_levels: usize) -> Result<PenalizedBasis, DesignError> {
    if n_levels < 2 {
        return Err(DesignError::SingleLevelFactor);
    }
    check_levels_observed(codes, n_levels)?;
    let b = contrast_rows(codes, n_levels);
    let penalty = DMatrix::<f64>::identity(n_levels - 1, n_levels - 1);
    PenalizedBasis::new(b, penalty, 0)
}

/// Level indicator matrix (one 1 per row).
pub fn indicator_rows(codes: &[usize], n_levels: usize) -> DMatrix<f64> {
    let mut b = DMatrix::<f64>::zeros(codes.len(), n_levels);
    for (i, &c) in codes.iter().enumerate() {
        b[(i, c)] = 1.0;
    }
    b
}

/// Random intercept: level indicators with precision C^-1.
pub fn rnd_design(
    codes: &[usize],
    n_levels: usize,
    correlation: Option<&DMatrix<f64>>,
) -> Result<PenalizedBasis, DesignError> {
    if n_levels < 1 {
        return Err(DesignError::SingleLevelFactor);
    }
    check_levels_observed(codes, n_levels)?;
    let b = indicator_rows(codes, n_levels);
    let penalty = match correlation {
        None => DMatrix::<f64>::identity(n_levels, n_levels),
        Some(c) => {
            if c.nrows() != n_levels || c.ncols() != n_levels {
                return Err(DesignError::RegionMismatch {
                    matrix: c.nrows(),
                    levels: n_levels,
                });
            }
            let chol = c
                .clone()
                .cholesky()
                .ok_or(DesignError::NotPositiveDefinite)?;
            chol.inverse()
        }
    };
    PenalizedBasis::new(b, penalty, 0)
}

/// First-order intrinsic Gauss-Markov random field: region indicators with
/// the graph Laplacian of the (weighted) adjacency matrix as penalty.
pub fn mrf_design(
    codes: &[usize],
    n_levels: usize,
    adjacency: &DMatrix<f64>,
) -> Result<PenalizedBasis, DesignError> {
    if adjacency.nrows() != n_levels || adjacency.ncols() != n_levels {
        return Err(DesignError::RegionMismatch {
            matrix: adjacency.nrows(),
            levels: n_levels,
        });
    }
    check_levels_observed(codes, n_levels)?;
    for i in 0..n_levels {
        if adjacency[(i, i)] != 0.0 {
            return Err(DesignError::InvalidArgument(
                "adjacency matrix must have a zero diagonal".to_string(),
            ));
        }
        for j in 0..n_levels {
            if adjacency[(i, j)] < 0.0 {
                return Err(DesignError::InvalidArgument(
                    "adjacency weights must be nonnegative".to_string(),
                ));
            }
            if (adjacency[(i, j)] - adjacency[(j, i)]).abs() > 1e-12 {
                return Err(DesignError::InvalidArgument(
                    "adjacency matrix must be symmetric".to_string(),
                ));
            }
        }
    }
    if !graph_connected(adjacency) {
        return Err(DesignError::DisconnectedGraph);
    }
    let b = indicator_rows(codes, n_levels);
    let mut penalty = -adjacency.clone();
    for i in 0..n_levels {
        penalty[(i, i)] = adjacency.row(i).sum();
    }
    PenalizedBasis::new(b, penalty, 1)
}

fn graph_connected(adjacency: &DMatrix<f64>) -> bool {
    let n = adjacency.nrows();
    if n == 0 {
        return false;
    }
    let mut visited = vec![false; n];
    let mut stack = vec![0usize];
    visited[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if !visited[j] && adjacency[(i, j)] > 0.0 {
                visited[j] = true;
                stack.push(j);
            }
        }
    }
    visited.iter().all(|&v| v)
}

/// Column-wise Kronecker (row-wise tensor) product: column `(i-1)*b + j` of
/// the result is the elementwise product of column i of `a` and column j of
/// `b`.
pub fn tensor_interaction(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<DMatrix<f64>, DesignError> {
    if a.nrows() != b.nrows() {
        return Err(DesignError::RowCountMismatch {
            left: a.nrows(),
            right: b.nrows(),
        });
    }
    let n = a.nrows();
    let mut out = DMatrix::<f64>::zeros(n, a.ncols() * b.ncols());
    for i in 0..a.ncols() {
        for j in 0..b.ncols() {
            let col = i * b.ncols() + j;
            for r in 0..n {
                out[(r, col)] = a[(r, i)] * b[(r, j)];
            }
        }
    }
    Ok(out)
}

/// Kronecker product of two penalty matrices.
fn kronecker(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::<f64>::zeros(a.nrows() * b.nrows(), a.ncols() * b.ncols());
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let scale = a[(i, j)];
            if scale == 0.0 {
                continue;
            }
            for k in 0..b.nrows() {
                for l in 0..b.ncols() {
                    out[(i * b.nrows() + k, j * b.ncols() + l)] = scale * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Tensor-product B-spline surface basis over two coordinates with the
/// standard additive Kronecker penalty `P_x (x) I + I (x) P_y`.
pub fn srf_penalized_basis(
    x: &[f64],
    y: &[f64],
    n_basis: usize,
    spline_degree: usize,
    penalty_order: usize,
) -> Result<(PenalizedBasis, Vec<f64>, Vec<f64>), DesignError> {
    let (pb_x, knots_x) = bspline_penalized_basis(x, n_basis, spline_degree, penalty_order)?;
    let (pb_y, knots_y) = bspline_penalized_basis(y, n_basis, spline_degree, penalty_order)?;
    let b = tensor_interaction(&pb_x.b_tilde, &pb_y.b_tilde)?;
    let eye = DMatrix::<f64>::identity(n_basis, n_basis);
    let penalty = kronecker(&pb_x.penalty, &eye) + kronecker(&eye, &pb_y.penalty);
    // null(P_x (x) I + I (x) P_y) = null(P_x) (x) null(P_y) for PSD parts.
    let pb = PenalizedBasis::new(b, penalty, penalty_order * penalty_order)?;
    Ok((pb, knots_x, knots_y))
}

/// Row sums of a matrix as a vector (used by partition-of-unity checks).
pub fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.nrows(), (0..m.nrows()).map(|i| m.row(i).sum()))
}
