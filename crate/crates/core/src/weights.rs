//! Spatial coupling weights and temporal lag weights.
//!
//! Coupling matrices hold raw unit-to-unit weights plus their row-normalized
//! form: entry [j, i] is the share of unit j's outgoing weight that lands on
//! unit i, so every row sums to one. Lag weights distribute autoregressive
//! mass over lags 1..=D and also sum to one.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::panel::UnitIndex;
use crate::spatial::SpatialStructure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayKind {
    /// d^-alpha
    Power,
    /// exp(-alpha d^2)
    ExpNormal,
    /// exp(-alpha sqrt(d))
    ExpSqrt,
    /// exp(-alpha d)
    Exponential,
}

/// Distance decay f_alpha(d), nonincreasing in d for alpha > 0.
pub fn decay(kind: DecayKind, alpha: f64, d: f64) -> Result<f64> {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::invalid(format!(
            "decay rate must be positive and finite, got {alpha}"
        )));
    }
    if !d.is_finite() || d < 0.0 {
        return Err(Error::invalid(format!(
            "distance must be finite and nonnegative, got {d}"
        )));
    }
    Ok(match kind {
        DecayKind::Power => {
            if d == 0.0 {
                return Err(Error::PowerDecayAtZero);
            }
            d.powf(-alpha)
        }
        DecayKind::ExpNormal => (-alpha * d * d).exp(),
        DecayKind::ExpSqrt => (-alpha * d.sqrt()).exp(),
        DecayKind::Exponential => (-alpha * d).exp(),
    })
}

/// Elementwise decay over a distance matrix.
pub fn decay_apply(kind: DecayKind, alpha: f64, distances: &Array2<f64>) -> Result<Array2<f64>> {
    let mut out = Array2::zeros(distances.raw_dim());
    for (o, d) in out.iter_mut().zip(distances.iter()) {
        *o = decay(kind, alpha, *d)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case", tag = "scheme")]
pub enum LagScheme {
    /// All mass on lag 1; requires max_lag == 1.
    Single,
    /// u_d proportional to p (1-p)^(d-1).
    Geometric { p: f64 },
    /// u_d proportional to D + 1 - d.
    Triangular,
    /// u_d proportional to the Poisson(kappa) mass at d - 1.
    ShiftedPoisson { kappa: f64 },
}

/// Normalized lag weights u_1..u_D. The last weight is set to one minus the
/// rest so the sum is exactly 1.0 in floating point.
pub fn lag_weights(scheme: LagScheme, max_lag: usize) -> Result<Vec<f64>> {
    if max_lag == 0 {
        return Err(Error::invalid("max lag must be at least 1"));
    }
    let raw: Vec<f64> = match scheme {
        LagScheme::Single => {
            if max_lag != 1 {
                return Err(Error::invalid(format!(
                    "single-lag scheme fixes max lag at 1, got {max_lag}"
                )));
            }
            vec![1.0]
        }
        LagScheme::Geometric { p } => {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::invalid(format!(
                    "geometric lag parameter must lie in (0, 1), got {p}"
                )));
            }
            (1..=max_lag).map(|d| p * (1.0 - p).powi(d as i32 - 1)).collect()
        }
        LagScheme::Triangular => (1..=max_lag).map(|d| (max_lag + 1 - d) as f64).collect(),
        LagScheme::ShiftedPoisson { kappa } => {
            if !kappa.is_finite() || kappa < 0.0 {
                return Err(Error::invalid(format!(
                    "shifted-Poisson mean must be nonnegative, got {kappa}"
                )));
            }
            let mut pmf = Vec::with_capacity(max_lag);
            let mut term = (-kappa).exp();
            for d in 1..=max_lag {
                pmf.push(term);
                term *= kappa / d as f64;
            }
            pmf
        }
    };
    let total: f64 = raw.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::invalid("lag weights sum to zero before normalization"));
    }
    let mut u: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let head: f64 = u[..max_lag - 1].iter().sum();
    u[max_lag - 1] = 1.0 - head;
    Ok(u)
}

/// Row-normalize nonnegative weights; rows are source units. A row with zero
/// total mass cannot be normalized.
pub fn normalize_rows(weights: &Array2<f64>) -> Result<Array2<f64>> {
    normalize_rows_named(weights, |j| format!("#{j}"))
}

fn normalize_rows_named(
    weights: &Array2<f64>,
    name_of: impl Fn(usize) -> String,
) -> Result<Array2<f64>> {
    for w in weights.iter() {
        if !w.is_finite() || *w < 0.0 {
            return Err(Error::invalid(
                "coupling weights must be finite and nonnegative",
            ));
        }
    }
    let mut out = weights.clone();
    for (j, mut row) in out.rows_mut().into_iter().enumerate() {
        let total: f64 = row.iter().sum();
        if total <= 0.0 {
            return Err(Error::IsolatedUnit { unit: name_of(j) });
        }
        row.mapv_inplace(|w| w / total);
    }
    Ok(out)
}

/// Raw and row-normalized coupling weights for one unit index.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    raw: Array2<f64>,
    normalized: Array2<f64>,
}

impl CouplingMatrix {
    pub fn new(raw: Array2<f64>, units: &UnitIndex) -> Result<Self> {
        if raw.nrows() != units.len() || raw.ncols() != units.len() {
            return Err(Error::invalid(format!(
                "coupling matrix is {}x{}, expected {0}x{0} for {2} units",
                raw.nrows(),
                raw.ncols(),
                units.len()
            )));
        }
        let normalized = normalize_rows_named(&raw, |j| units.district_id(j).to_string())?;
        Ok(CouplingMatrix { raw, normalized })
    }

    /// Power-law coupling (o_ji + 1)^rho over path distances. rho = 0 gives
    /// uniform rows; negative rho downweights distant units.
    pub fn power_law(structure: &SpatialStructure, units: &UnitIndex, rho: f64) -> Result<Self> {
        if !rho.is_finite() {
            return Err(Error::invalid("power-law exponent must be finite"));
        }
        let raw = structure.path_distance().mapv(|o| (o + 1.0).powf(rho));
        CouplingMatrix::new(raw, units)
    }

    /// First-order adjacency coupling: weight 1 to each neighbour.
    pub fn adjacency_lag1(structure: &SpatialStructure, units: &UnitIndex) -> Result<Self> {
        let raw = structure.adjacency().mapv(|a| if a { 1.0 } else { 0.0 });
        CouplingMatrix::new(raw, units)
    }

    pub fn raw(&self) -> &Array2<f64> {
        &self.raw
    }

    /// Row-stochastic weights: [j, i] is the normalized weight from j to i.
    pub fn normalized(&self) -> &Array2<f64> {
        &self.normalized
    }

    pub fn n_units(&self) -> usize {
        self.raw.nrows()
    }
}
