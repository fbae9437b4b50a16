//! Negative-binomial log-likelihood with mean/dispersion parameterization:
//! variance mu (1 + psi mu), size r = 1/psi. psi below 1e-12 switches to the
//! exact Poisson limit.

use ndarray::Array2;
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::likelihood::{pairwise_sum, MeanSurface};

/// Dispersion at or below this is treated as the Poisson limit.
pub(crate) const PSI_POISSON: f64 = 1e-12;

/// ln Gamma(y + r) - ln Gamma(r) without cancellation: for integer y up to
/// 128 the telescoped product sum is exact even for huge r.
fn ln_gamma_ratio(y: f64, r: f64) -> f64 {
    if y <= 128.0 {
        let mut s = 0.0;
        let mut k = 0.0;
        while k < y {
            s += (r + k).ln();
            k += 1.0;
        }
        s
    } else {
        ln_gamma(y + r) - ln_gamma(r)
    }
}

/// digamma(y + r) - digamma(r) with the same small-count treatment.
fn digamma_ratio(y: f64, r: f64) -> f64 {
    if y <= 128.0 {
        let mut s = 0.0;
        let mut k = 0.0;
        while k < y {
            s += 1.0 / (r + k);
            k += 1.0;
        }
        s
    } else {
        digamma(y + r) - digamma(r)
    }
}

/// Log-likelihood of one count. `y` must be a nonnegative integer, `mu`
/// positive, `psi` nonnegative. Non-finite means yield -inf rather than an
/// error so line searches can reject overflowing parameter points.
pub fn nb_cell_loglik(y: f64, mu: f64, psi: f64) -> Result<f64> {
    debug_assert!(y >= 0.0 && y.fract() == 0.0);
    if psi < 0.0 || !psi.is_finite() {
        return Err(Error::invalid(format!(
            "dispersion must be finite and nonnegative, got {psi}"
        )));
    }
    if mu.is_nan() || mu <= 0.0 {
        return Err(Error::invalid(format!("mean must be positive, got {mu}")));
    }
    if mu.is_infinite() {
        return Ok(f64::NEG_INFINITY);
    }
    let ln_y_fact = ln_gamma(y + 1.0);
    if psi <= PSI_POISSON {
        return Ok(y * mu.ln() - mu - ln_y_fact);
    }
    let r = 1.0 / psi;
    let l1p = (mu / r).ln_1p();
    Ok(ln_gamma_ratio(y, r) - ln_y_fact - r * l1p + y * (mu.ln() - r.ln() - l1p))
}

/// Partial derivatives of one cell's log-likelihood with respect to the
/// natural mean and dispersion. The Poisson branch reports the exact psi -> 0
/// limit of the dispersion score so the gradient stays continuous across the
/// branch point.
pub fn nb_cell_derivs(y: f64, mu: f64, psi: f64) -> (f64, f64) {
    if psi <= PSI_POISSON {
        let dmu = y / mu - 1.0;
        let dpsi = 0.5 * ((mu - y) * (mu - y) - y);
        return (dmu, dpsi);
    }
    let r = 1.0 / psi;
    let dmu = y / mu - (y + r) / (r + mu);
    let dr = digamma_ratio(y, r) - (mu / r).ln_1p() + (mu - y) / (r + mu);
    let dpsi = -r * r * dr;
    (dmu, dpsi)
}

/// Total log-likelihood over the included cells of a mean surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLik {
    pub value: f64,
    /// Number of cells entering the sum.
    pub n: usize,
}

fn psi_for_unit(psi: &[f64], unit: usize) -> f64 {
    if psi.len() == 1 {
        psi[0]
    } else {
        psi[unit]
    }
}

fn check_psi_shape(psi: &[f64], n_units: usize) -> Result<()> {
    if psi.len() != 1 && psi.len() != n_units {
        return Err(Error::invalid(format!(
            "dispersion vector must have 1 or {n_units} entries, got {}",
            psi.len()
        )));
    }
    Ok(())
}

/// Sum cell log-likelihoods over t >= burn_in with a deterministic pairwise
/// reduction. `psi` holds one shared value or one per unit.
pub fn nb_loglik(counts: &Array2<f64>, means: &MeanSurface, psi: &[f64]) -> Result<LogLik> {
    let cells = nb_loglik_cells(counts, means, psi)?;
    let mut contributions = Vec::with_capacity(means.n_included());
    for i in 0..counts.nrows() {
        for t in means.burn_in..counts.ncols() {
            contributions.push(cells[(i, t)]);
        }
    }
    Ok(LogLik {
        value: pairwise_sum(&contributions),
        n: contributions.len(),
    })
}

/// Per-cell log-likelihood contributions; burn-in columns are zero.
pub fn nb_loglik_cells(
    counts: &Array2<f64>,
    means: &MeanSurface,
    psi: &[f64],
) -> Result<Array2<f64>> {
    if counts.dim() != means.mu.dim() {
        return Err(Error::invalid(format!(
            "counts are {:?}, means are {:?}",
            counts.dim(),
            means.mu.dim()
        )));
    }
    check_psi_shape(psi, counts.nrows())?;
    let mut out = Array2::zeros(counts.raw_dim());
    for i in 0..counts.nrows() {
        let psi_i = psi_for_unit(psi, i);
        for t in means.burn_in..counts.ncols() {
            let mu = means.mu[(i, t)];
            if mu.is_nan() || mu <= 0.0 {
                return Err(Error::invalid(format!(
                    "mean must be positive at unit {i}, t={t}, got {mu}"
                )));
            }
            out[(i, t)] = nb_cell_loglik(counts[(i, t)], mu, psi_i)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn poisson_branch_matches_closed_form() {
        // y=3, mu=2: 3 ln 2 - 2 - ln 6
        let got = nb_cell_loglik(3.0, 2.0, 0.0).unwrap();
        let want = 3.0 * 2f64.ln() - 2.0 - 6f64.ln();
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn nb_cell_matches_direct_pmf_evaluation() {
        // r = 1/psi, p = r/(r+mu); pmf = C(y+r-1, y) p^r (1-p)^y evaluated
        // in logs with direct ln_gamma calls.
        let (y, mu, psi) = (4.0, 2.5, 0.4);
        let r = 1.0 / psi;
        let p = r / (r + mu);
        let direct = ln_gamma(y + r) - ln_gamma(r) - ln_gamma(y + 1.0)
            + r * p.ln()
            + y * (1.0 - p).ln();
        let got = nb_cell_loglik(y, mu, psi).unwrap();
        assert!((got - direct).abs() < 1e-12, "{got} vs {direct}");
    }

    #[test]
    fn psi_at_branch_point_is_continuous() {
        let below = nb_cell_loglik(5.0, 3.0, 1e-12).unwrap();
        let above = nb_cell_loglik(5.0, 3.0, 1.0000001e-12).unwrap();
        assert!((below - above).abs() < 1e-9);
    }

    #[test]
    fn cell_derivs_match_finite_differences() {
        for &(y, mu, psi) in &[(0.0, 0.5, 0.3), (7.0, 4.0, 0.15), (2.0, 9.0, 1.4)] {
            let (dmu, dpsi) = nb_cell_derivs(y, mu, psi);
            let h = 1e-6;
            let fd_mu = (nb_cell_loglik(y, mu + h, psi).unwrap()
                - nb_cell_loglik(y, mu - h, psi).unwrap())
                / (2.0 * h);
            let fd_psi = (nb_cell_loglik(y, mu, psi + h).unwrap()
                - nb_cell_loglik(y, mu, psi - h).unwrap())
                / (2.0 * h);
            assert!((dmu - fd_mu).abs() < 1e-7, "dmu {dmu} vs {fd_mu}");
            assert!((dpsi - fd_psi).abs() < 1e-6, "dpsi {dpsi} vs {fd_psi}");
        }
    }

    #[test]
    fn large_size_parameter_stays_accurate() {
        // psi = 1e-9 forces r = 1e9; the telescoped ratio keeps precision.
        let got = nb_cell_loglik(6.0, 3.0, 1e-9).unwrap();
        let poisson = 6.0 * 3f64.ln() - 3.0 - ln_gamma(7.0);
        assert!((got - poisson).abs() < 1e-6);
    }

    #[test]
    fn loglik_sums_included_cells_only() {
        let counts = array![[1.0, 2.0, 3.0]];
        let means = MeanSurface {
            mu: array![[0.0, 2.0, 2.0]],
            burn_in: 1,
        };
        let ll = nb_loglik(&counts, &means, &[0.5]).unwrap();
        assert_eq!(ll.n, 2);
        let c1 = nb_cell_loglik(2.0, 2.0, 0.5).unwrap();
        let c2 = nb_cell_loglik(3.0, 2.0, 0.5).unwrap();
        assert!((ll.value - (c1 + c2)).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_mean_is_an_error() {
        let counts = array![[1.0]];
        let means = MeanSurface {
            mu: array![[0.0]],
            burn_in: 0,
        };
        assert!(nb_loglik(&counts, &means, &[0.5]).is_err());
    }

    #[test]
    fn infinite_mean_rejects_with_neg_infinity() {
        assert_eq!(
            nb_cell_loglik(2.0, f64::INFINITY, 0.5).unwrap(),
            f64::NEG_INFINITY
        );
    }
}
