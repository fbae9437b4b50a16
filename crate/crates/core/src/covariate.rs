//! Airport-level monthly covariates (passenger volumes) with an optional
//! transform applied once at construction.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::panel::{Resolution, TimeAxis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateTransform {
    Identity,
    Log1p,
}

impl CovariateTransform {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            CovariateTransform::Identity => x,
            CovariateTransform::Log1p => x.ln_1p(),
        }
    }
}

/// Airport x month covariate values. Raw values are kept for export; model
/// code reads the transformed matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateCube {
    months: TimeAxis,
    raw: Array2<f64>,
    transformed: Array2<f64>,
    transform: CovariateTransform,
}

impl CovariateCube {
    pub fn new(months: TimeAxis, raw: Array2<f64>, transform: CovariateTransform) -> Result<Self> {
        if months.resolution() != Resolution::Monthly {
            return Err(Error::invalid("covariate cube requires a monthly axis"));
        }
        if raw.ncols() != months.len() {
            return Err(Error::invalid(format!(
                "covariate matrix has {} columns, month axis has {}",
                raw.ncols(),
                months.len()
            )));
        }
        for v in raw.iter() {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::invalid(
                    "covariate values must be finite and nonnegative",
                ));
            }
        }
        let transformed = raw.mapv(|x| transform.apply(x));
        Ok(CovariateCube {
            months,
            raw,
            transformed,
            transform,
        })
    }

    pub fn months(&self) -> &TimeAxis {
        &self.months
    }

    pub fn n_airports(&self) -> usize {
        self.raw.nrows()
    }

    pub fn raw(&self) -> &Array2<f64> {
        &self.raw
    }

    pub fn transformed(&self) -> &Array2<f64> {
        &self.transformed
    }

    pub fn transform(&self) -> CovariateTransform {
        self.transform
    }
}
