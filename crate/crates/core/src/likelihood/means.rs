//! Conditional mean builders for both model families.

use ndarray::Array2;

use crate::covariate::CovariateCube;
use crate::error::{Error, Result};
use crate::likelihood::MeanSurface;
use crate::model::{DispersionSharing, EeSpec, EffectsLevel, EndemicKind, GravitySpec};
use crate::panel::{CountPanel, Resolution, TimeAxis, UnitIndex};
use crate::params::{EeParams, EndemicParams, GravityParams};
use crate::spatial::SpatialStructure;
use crate::weights::{decay, lag_weights, CouplingMatrix};

/// Positivity floor added to every additive mean cell so the likelihood stays
/// defined when all active terms are zero. Fits are insensitive to its exact
/// value.
pub const EE_MEAN_FLOOR: f64 = 1e-10;

/// Log endemic level alpha0 + eta t + gamma sin(omega t) + delta cos(omega t).
/// Time runs on the panel's one-based index; fractional or negative values are
/// fine, which simulation burn-in before the axis start relies on.
pub fn harmonic_log_level(
    t: f64,
    alpha0: f64,
    eta: f64,
    gamma: f64,
    delta: f64,
    omega: f64,
) -> f64 {
    alpha0 + eta * t + gamma * (omega * t).sin() + delta * (omega * t).cos()
}

/// Endemic level exp of the harmonic log level.
pub fn harmonic_endemic(
    t: f64,
    alpha0: f64,
    eta: f64,
    gamma: f64,
    delta: f64,
    omega: f64,
) -> f64 {
    harmonic_log_level(t, alpha0, eta, gamma, delta, omega).exp()
}

fn check_len(name: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::constraint(
            name,
            format!("expected {want} values, got {got}"),
        ));
    }
    Ok(())
}

fn check_block_off(name: &str, got: usize) -> Result<()> {
    if got != 0 {
        return Err(Error::constraint(
            name,
            format!("block is disabled but {got} values were given"),
        ));
    }
    Ok(())
}

fn check_nonneg(name: &str, values: &[f64]) -> Result<()> {
    for v in values {
        if !v.is_finite() || *v < 0.0 {
            return Err(Error::constraint(
                name,
                format!("must be finite and nonnegative, got {v}"),
            ));
        }
    }
    Ok(())
}

fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    for v in values {
        if !v.is_finite() {
            return Err(Error::constraint(name, format!("must be finite, got {v}")));
        }
    }
    Ok(())
}

fn psi_len(sharing: DispersionSharing, n_units: usize) -> usize {
    match sharing {
        DispersionSharing::Shared => 1,
        DispersionSharing::PerUnit => n_units,
    }
}

pub(crate) fn coef_at(values: &[f64], unit: usize) -> f64 {
    if values.len() == 1 {
        values[0]
    } else {
        values[unit]
    }
}

/// Autoregressive mean machinery for one panel. Lag-weighted own and coupled
/// neighbour histories are precomputed once; they do not depend on the
/// coefficients.
pub struct EeMeanContext<'a> {
    pub(crate) y: Array2<f64>,
    pub(crate) axis: &'a TimeAxis,
    pub(crate) units: &'a UnitIndex,
    pub(crate) spec: &'a EeSpec,
    pub(crate) burn_in: usize,
    pub(crate) omega: Option<f64>,
    /// Lag-weighted own history, defined for t >= burn_in.
    pub(crate) own_hist: Array2<f64>,
    /// Lag-weighted coupled neighbour history, defined for t >= burn_in.
    pub(crate) coupled_hist: Array2<f64>,
}

impl<'a> EeMeanContext<'a> {
    /// burn_in must cover the maximum lag; pass a larger value to align
    /// likelihoods across lag depths.
    pub fn new(
        panel: &'a CountPanel,
        spec: &'a EeSpec,
        coupling: Option<&CouplingMatrix>,
        burn_in: usize,
    ) -> Result<Self> {
        spec.validate()?;
        let p = panel.n_units();
        let t_len = panel.n_times();
        let d_max = spec.lags.max_lag;
        if burn_in < d_max {
            return Err(Error::invalid(format!(
                "burn-in {burn_in} must cover the maximum lag {d_max}"
            )));
        }
        if burn_in >= t_len {
            return Err(Error::invalid(format!(
                "burn-in {burn_in} leaves no usable time points of {t_len}"
            )));
        }
        let u = lag_weights(spec.lags.scheme, d_max)?;
        let y = panel.to_f64();
        let mut own_hist = Array2::zeros((p, t_len));
        for i in 0..p {
            for t in burn_in..t_len {
                let mut acc = 0.0;
                for (d, ud) in u.iter().enumerate() {
                    acc += ud * y[(i, t - d - 1)];
                }
                own_hist[(i, t)] = acc;
            }
        }
        let mut coupled_hist = Array2::zeros((p, t_len));
        if let Some(b) = &spec.between {
            let _ = b;
            let w = coupling
                .ok_or_else(|| {
                    Error::invalid("between-unit block requires a coupling matrix")
                })?
                .normalized();
            if w.nrows() != p {
                return Err(Error::invalid(format!(
                    "coupling matrix covers {} units, panel has {p}",
                    w.nrows()
                )));
            }
            for i in 0..p {
                for t in burn_in..t_len {
                    let mut acc = 0.0;
                    for (d, ud) in u.iter().enumerate() {
                        let mut inflow = 0.0;
                        for j in 0..p {
                            if j != i {
                                inflow += w[(j, i)] * y[(j, t - d - 1)];
                            }
                        }
                        acc += ud * inflow;
                    }
                    coupled_hist[(i, t)] = acc;
                }
            }
        } else if coupling.is_some() {
            return Err(Error::invalid(
                "coupling matrix given but the between-unit block is disabled",
            ));
        }
        Ok(EeMeanContext {
            y,
            axis: panel.axis(),
            units: panel.units(),
            spec,
            burn_in,
            omega: spec.endemic.resolved_omega(panel.axis().resolution()),
            own_hist,
            coupled_hist,
        })
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    pub fn counts(&self) -> &Array2<f64> {
        &self.y
    }

    pub(crate) fn validate_params(&self, params: &EeParams) -> Result<()> {
        let p = self.units.len();
        match self.spec.within {
            Some(crate::model::CoefSharing::Shared) => check_len("lambda", params.lambda.len(), 1)?,
            Some(crate::model::CoefSharing::PerUnit) => check_len("lambda", params.lambda.len(), p)?,
            None => check_block_off("lambda", params.lambda.len())?,
        }
        check_nonneg("lambda", &params.lambda)?;
        match &self.spec.between {
            Some(b) => match b.sharing {
                crate::model::CoefSharing::Shared => check_len("phi", params.phi.len(), 1)?,
                crate::model::CoefSharing::PerUnit => check_len("phi", params.phi.len(), p)?,
            },
            None => check_block_off("phi", params.phi.len())?,
        }
        check_nonneg("phi", &params.phi)?;
        match (&self.spec.endemic, &params.endemic) {
            (EndemicKind::FreePerTime, EndemicParams::FreePerTime(v)) => {
                check_len("endemic.level", v.len(), self.axis.len())?;
                check_nonneg("endemic.level", v)?;
            }
            (EndemicKind::FreePerRegionTime, EndemicParams::FreePerRegionTime(v)) => {
                check_len("endemic.level", v.len(), self.units.n_regions())?;
                for s in v {
                    check_len("endemic.level", s.len(), self.axis.len())?;
                    check_nonneg("endemic.level", s)?;
                }
            }
            (EndemicKind::MonthSeasonal, EndemicParams::MonthSeasonal(m)) => {
                check_len("endemic.month", m.len(), 12)?;
                check_nonneg("endemic.month", m)?;
            }
            (
                EndemicKind::Harmonic { .. },
                EndemicParams::Harmonic {
                    alpha0,
                    eta,
                    gamma,
                    delta,
                },
            ) => {
                check_finite("endemic", &[*alpha0, *eta, *gamma, *delta])?;
            }
            _ => {
                return Err(Error::constraint(
                    "endemic",
                    "parameter shape does not match the spec's endemic block",
                ))
            }
        }
        match self.spec.region_effect {
            Some(crate::model::RegionEffect::PerRegion) => {
                check_len("region_effect", params.region_effect.len(), self.units.n_regions())?
            }
            Some(crate::model::RegionEffect::PerDistrict) => {
                check_len("region_effect", params.region_effect.len(), p)?
            }
            None => check_block_off("region_effect", params.region_effect.len())?,
        }
        check_finite("region_effect", &params.region_effect)?;
        check_len(
            "psi",
            params.psi.len(),
            psi_len(self.spec.dispersion.sharing, p),
        )?;
        check_nonneg("psi", &params.psi)?;
        Ok(())
    }

    pub(crate) fn effect_factor(&self, params: &EeParams, unit: usize) -> f64 {
        match self.spec.region_effect {
            None => 1.0,
            Some(crate::model::RegionEffect::PerRegion) => {
                params.region_effect[self.units.region_of(unit)].exp()
            }
            Some(crate::model::RegionEffect::PerDistrict) => params.region_effect[unit].exp(),
        }
    }

    /// Endemic level for one cell, including the fixed-effect factor.
    pub(crate) fn endemic_at(&self, params: &EeParams, unit: usize, t: usize) -> f64 {
        let base = match &params.endemic {
            EndemicParams::FreePerTime(v) => v[t],
            EndemicParams::FreePerRegionTime(v) => v[self.units.region_of(unit)][t],
            EndemicParams::MonthSeasonal(m) => m[self.axis.month_of(t) as usize - 1],
            EndemicParams::Harmonic {
                alpha0,
                eta,
                gamma,
                delta,
            } => harmonic_endemic((t + 1) as f64, *alpha0, *eta, *gamma, *delta, self.omega.unwrap()),
            EndemicParams::None => unreachable!("validated endemic block"),
        };
        base * self.effect_factor(params, unit)
    }

    pub fn mean(&self, params: &EeParams) -> Result<MeanSurface> {
        self.mean_with_floor(params, EE_MEAN_FLOOR)
    }

    /// Mean surface with an explicit positivity floor; exists so tests can
    /// show results do not depend on the floor's magnitude.
    pub fn mean_with_floor(&self, params: &EeParams, floor: f64) -> Result<MeanSurface> {
        Ok(self.mean_and_endemic(params, floor)?.0)
    }

    /// Mean surface plus the endemic component per cell (needed for endemic
    /// and fixed-effect gradients).
    pub(crate) fn mean_and_endemic(
        &self,
        params: &EeParams,
        floor: f64,
    ) -> Result<(MeanSurface, Array2<f64>)> {
        self.validate_params(params)?;
        let (p, t_len) = self.y.dim();
        let mut mu = Array2::zeros((p, t_len));
        let mut nu = Array2::zeros((p, t_len));
        for i in 0..p {
            for t in self.burn_in..t_len {
                let base = self.endemic_at(params, i, t);
                nu[(i, t)] = base;
                let mut m = base + floor;
                if !params.lambda.is_empty() {
                    m += coef_at(&params.lambda, i) * self.own_hist[(i, t)];
                }
                if !params.phi.is_empty() {
                    m += coef_at(&params.phi, i) * self.coupled_hist[(i, t)];
                }
                mu[(i, t)] = m;
            }
        }
        Ok((
            MeanSurface {
                mu,
                burn_in: self.burn_in,
            },
            nu,
        ))
    }
}

/// Multiplicative gravity-model machinery for one monthly panel. The decayed
/// air-traffic covariates are precomputed for a fixed decay rate.
pub struct GravityMeanContext<'a> {
    pub(crate) y: Array2<f64>,
    pub(crate) axis: &'a TimeAxis,
    pub(crate) units: &'a UnitIndex,
    pub(crate) spec: &'a GravitySpec,
    pub(crate) omega: Option<f64>,
    /// Per unit: airport x month matrix of decayed covariates, rows ordered
    /// like the unit's theta coefficients. Empty matrices when the term is off.
    pub(crate) traffic: Vec<Array2<f64>>,
    pub(crate) within_index: Vec<usize>,
}

impl<'a> GravityMeanContext<'a> {
    /// `alpha` is the decay rate used to materialize the air-traffic term; it
    /// must be given exactly when the spec has a gravity term.
    pub fn new(
        panel: &'a CountPanel,
        spec: &'a GravitySpec,
        structure: Option<&SpatialStructure>,
        cube: Option<&CovariateCube>,
        alpha: Option<f64>,
    ) -> Result<Self> {
        spec.validate()?;
        if panel.axis().resolution() != Resolution::Monthly {
            return Err(Error::invalid("gravity model requires a monthly panel"));
        }
        let units = panel.units();
        let p = units.len();
        let t_len = panel.n_times();
        let mut traffic = vec![Array2::zeros((0, t_len)); p];
        if let Some(term) = &spec.gravity {
            let s = structure.ok_or_else(|| {
                Error::invalid("gravity term requires spatial structure with airports")
            })?;
            if s.unit_ids() != panel.units().districts().iter().map(|d| d.id.clone()).collect::<Vec<_>>() {
                return Err(Error::invalid(
                    "spatial structure was built for different units than the panel",
                ));
            }
            let cube = cube.ok_or_else(|| {
                Error::invalid("gravity term requires an airport covariate cube")
            })?;
            if cube.months() != panel.axis() {
                return Err(Error::invalid(
                    "covariate months are misaligned with the panel axis",
                ));
            }
            if cube.n_airports() != s.airports().len() {
                return Err(Error::invalid(format!(
                    "covariate cube covers {} airports, structure has {}",
                    cube.n_airports(),
                    s.airports().len()
                )));
            }
            let a = alpha.ok_or_else(|| {
                Error::invalid("gravity term requires a concrete decay rate")
            })?;
            let x = cube.transformed();
            for (u, slot) in traffic.iter_mut().enumerate() {
                let r = units.region_of(u);
                let airport_ids: Vec<usize> = if term.cross_region {
                    (0..s.airports().len()).collect()
                } else {
                    s.airports_of_region(r).to_vec()
                };
                if airport_ids.is_empty() {
                    return Err(Error::invalid(format!(
                        "region {} has no airports for the air-traffic term",
                        units.regions()[r]
                    )));
                }
                let mut g = Array2::zeros((airport_ids.len(), t_len));
                for (pos, &k) in airport_ids.iter().enumerate() {
                    let f = decay(term.kernel, a, s.airport_km()[(u, k)])?;
                    for t in 0..t_len {
                        g[(pos, t)] = f * x[(k, t)];
                    }
                }
                *slot = g;
            }
        }
        let mut within_index = vec![0usize; p];
        for r in 0..units.n_regions() {
            for (j, &u) in units.units_of_region(r).iter().enumerate() {
                within_index[u] = j;
            }
        }
        Ok(GravityMeanContext {
            y: panel.to_f64(),
            axis: panel.axis(),
            units,
            spec,
            omega: spec.endemic.resolved_omega(Resolution::Monthly),
            traffic,
            within_index,
        })
    }

    pub fn counts(&self) -> &Array2<f64> {
        &self.y
    }

    pub(crate) fn validate_params(&self, params: &GravityParams) -> Result<()> {
        let units = self.units;
        let p = units.len();
        if self.spec.intercept != params.intercept.is_some() {
            return Err(Error::constraint(
                "intercept",
                "presence does not match the spec",
            ));
        }
        if let Some(b) = params.intercept {
            check_finite("intercept", &[b])?;
        }
        match (&self.spec.endemic, &params.endemic) {
            (EndemicKind::None, EndemicParams::None) => {}
            (EndemicKind::FreePerTime, EndemicParams::FreePerTime(v)) => {
                check_len("endemic.level", v.len(), self.axis.len())?;
                check_finite("endemic.level", v)?;
            }
            (EndemicKind::FreePerRegionTime, EndemicParams::FreePerRegionTime(v)) => {
                check_len("endemic.level", v.len(), units.n_regions())?;
                for s in v {
                    check_len("endemic.level", s.len(), self.axis.len())?;
                    check_finite("endemic.level", s)?;
                }
            }
            (EndemicKind::MonthSeasonal, EndemicParams::MonthSeasonal(m)) => {
                check_len("endemic.month", m.len(), 12)?;
                check_finite("endemic.month", m)?;
            }
            (
                EndemicKind::Harmonic { .. },
                EndemicParams::Harmonic {
                    alpha0,
                    eta,
                    gamma,
                    delta,
                },
            ) => {
                check_finite("endemic", &[*alpha0, *eta, *gamma, *delta])?;
            }
            _ => {
                return Err(Error::constraint(
                    "endemic",
                    "parameter shape does not match the spec's endemic block",
                ))
            }
        }
        check_len("region_loc", params.region_loc.len(), units.n_regions())?;
        check_finite("region_loc", &params.region_loc)?;
        match self.spec.effects {
            EffectsLevel::Regional => {
                if !params.district_dev.is_empty() {
                    return Err(Error::constraint(
                        "district_dev",
                        "regional-level spec takes no district deviations",
                    ));
                }
            }
            EffectsLevel::District => {
                check_len("district_dev", params.district_dev.len(), units.n_regions())?;
                for (r, v) in params.district_dev.iter().enumerate() {
                    check_len("district_dev", v.len(), units.units_of_region(r).len())?;
                    check_finite("district_dev", v)?;
                }
            }
        }
        match &self.spec.gravity {
            None => {
                if !params.theta.is_empty() {
                    return Err(Error::constraint(
                        "theta",
                        "spec has no air-traffic term but coefficients were given",
                    ));
                }
            }
            Some(_) => {
                check_len("theta", params.theta.len(), units.n_regions())?;
                for (r, v) in params.theta.iter().enumerate() {
                    let want = self.traffic[units.units_of_region(r)[0]].nrows();
                    check_len("theta", v.len(), want)?;
                    check_finite("theta", v)?;
                }
            }
        }
        check_len(
            "psi",
            params.psi.len(),
            psi_len(self.spec.dispersion.sharing, p),
        )?;
        check_nonneg("psi", &params.psi)?;
        Ok(())
    }

    pub(crate) fn endemic_term(&self, params: &GravityParams, unit: usize, t: usize) -> f64 {
        match &params.endemic {
            EndemicParams::None => 0.0,
            EndemicParams::FreePerTime(v) => v[t],
            EndemicParams::FreePerRegionTime(v) => v[self.units.region_of(unit)][t],
            EndemicParams::MonthSeasonal(m) => m[self.axis.month_of(t) as usize - 1],
            EndemicParams::Harmonic {
                alpha0,
                eta,
                gamma,
                delta,
            } => harmonic_log_level((t + 1) as f64, *alpha0, *eta, *gamma, *delta, self.omega.unwrap()),
        }
    }

    pub fn log_mean_cell(&self, params: &GravityParams, unit: usize, t: usize) -> f64 {
        let r = self.units.region_of(unit);
        let mut lm = params.intercept.unwrap_or(0.0)
            + self.endemic_term(params, unit, t)
            + params.region_loc[r];
        if !params.district_dev.is_empty() {
            lm += params.district_dev[r][self.within_index[unit]];
        }
        if !params.theta.is_empty() {
            let g = &self.traffic[unit];
            let th = &params.theta[r];
            for (k, c) in th.iter().enumerate() {
                lm += c * g[(k, t)];
            }
        }
        lm
    }

    pub fn mean(&self, params: &GravityParams) -> Result<MeanSurface> {
        self.validate_params(params)?;
        let (p, t_len) = self.y.dim();
        let mut mu = Array2::zeros((p, t_len));
        for u in 0..p {
            for t in 0..t_len {
                mu[(u, t)] = self.log_mean_cell(params, u, t).exp();
            }
        }
        Ok(MeanSurface { mu, burn_in: 0 })
    }
}
