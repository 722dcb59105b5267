//! Precomputed, immutable per-fit quantities shared by all chains.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use super::{HyperParams, McmcConfig, SamplerError};
use crate::design::FullDesign;
use crate::family::Family;

/// Flat prior variance for unpenalized coefficients.
pub const BETA_U_VARIANCE: f64 = 1e6;

pub struct SamplerContext<'a> {
    pub design: &'a FullDesign,
    pub y: &'a [f64],
    pub family: Family,
    pub hyper: HyperParams,
    pub config: &'a McmcConfig,
    pub n: usize,
    /// Number of penalized terms.
    pub p: usize,
    /// Total penalized coefficient count.
    pub q: usize,
    /// Number of unpenalized columns.
    pub n_u: usize,
    pub term_dims: Vec<usize>,
    /// Start of each term's coefficients within the concatenated xi vector.
    pub term_offsets: Vec<usize>,
    /// Gram matrix B_j' B_j per term.
    pub gram: Vec<DMatrix<f64>>,
    pub xu_gram: DMatrix<f64>,
    /// Contiguous term-index blocks for the alpha updates.
    pub alpha_blocks: Vec<Range<usize>>,
    /// (term, local coefficient range) blocks for the xi updates; a block
    /// never crosses a term boundary.
    pub xi_blocks: Vec<(usize, Range<usize>)>,
    pub offset: DVector<f64>,
}

impl<'a> SamplerContext<'a> {
    pub fn new(
        design: &'a FullDesign,
        y: &'a [f64],
        family: Family,
        hyper: HyperParams,
        config: &'a McmcConfig,
    ) -> Result<Self, SamplerError> {
        let n = design.n_rows();
        let p = design.blocks.len();
        let term_dims: Vec<usize> = design.blocks.iter().map(|b| b.dim()).collect();
        let mut term_offsets = Vec::with_capacity(p);
        let mut q = 0usize;
        for d in &term_dims {
            term_offsets.push(q);
            q += d;
        }
        let gram = design
            .blocks
            .iter()
            .map(|b| b.b.transpose() * &b.b)
            .collect();
        let xu_gram = design.x_u.transpose() * &design.x_u;
        let mut alpha_blocks = Vec::new();
        let mut start = 0usize;
        while start < p {
            let end = (start + config.block_size_alpha).min(p);
            alpha_blocks.push(start..end);
            start = end;
        }
        let mut xi_blocks = Vec::new();
        for (j, &d) in term_dims.iter().enumerate() {
            let mut local = 0usize;
            while local < d {
                let end = (local + config.block_size_xi).min(d);
                xi_blocks.push((j, local..end));
                local = end;
            }
        }
        if design.offset.len() != n {
            return Err(SamplerError::Dimension(format!(
                "offset has {} rows, design has {}",
                design.offset.len(),
                n
            )));
        }
        Ok(SamplerContext {
            design,
            y,
            family,
            hyper,
            config,
            n,
            p,
            q,
            n_u: design.x_u.ncols(),
            term_dims,
            term_offsets,
            gram,
            xu_gram,
            alpha_blocks,
            xi_blocks,
            offset: DVector::from_column_slice(&design.offset),
        })
    }

    /// Coefficient range of term `j` within the concatenated xi vector.
    pub fn term_range(&self, j: usize) -> Range<usize> {
        self.term_offsets[j]..self.term_offsets[j] + self.term_dims[j]
    }
}
