//! Mean surfaces and negative-binomial likelihoods with analytic gradients.

mod means;
mod nb;
mod objective;

pub use means::{
    harmonic_endemic, harmonic_log_level, EeMeanContext, GravityMeanContext, EE_MEAN_FLOOR,
};
pub use nb::{nb_cell_derivs, nb_cell_loglik, nb_loglik, nb_loglik_cells, LogLik};
pub use objective::{nb_loglik_grad, Objective};

use ndarray::Array2;

/// Conditional means with the leading burn-in columns excluded from use.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanSurface {
    pub mu: Array2<f64>,
    /// Cells (i, t) with t < burn_in are not defined and never enter sums.
    pub burn_in: usize,
}

impl MeanSurface {
    pub fn n_included(&self) -> usize {
        self.mu.nrows() * (self.mu.ncols() - self.burn_in)
    }
}

/// Deterministic pairwise-tree reduction; summation order is fixed by the
/// input order regardless of thread count.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        let mut s = 0.0;
        for x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
