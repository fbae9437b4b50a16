//! Comparison drivers built on the fitter: lag-depth scans, the seasonal
//! versus free endemic contrast, air-traffic ablation, and extraction of the
//! fitted endemic time trajectory.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariate::CovariateCube;
use crate::error::{Error, Result};
use crate::fit::{fit, FitOptions, FitResult};
use crate::model::{
    EeSpec, EffectsLevel, EndemicKind, GravitySpec, GravityVariant, ModelSpec,
};
use crate::panel::{mid_month_slice, CountPanel, Resolution, TimeAxis};
use crate::spatial::SpatialStructure;
use crate::weights::LagScheme;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LagScanRow {
    pub max_lag: usize,
    pub log_lik: f64,
    pub k: usize,
    pub aic: f64,
    pub pseudo_r2: f64,
    pub converged: bool,
}

/// Refit an autoregressive spec at lag depths 1..=max_d. Every row uses a
/// burn-in of max_d so all rows share one likelihood mask and their metrics
/// are comparable.
pub fn lag_scan(
    panel: &CountPanel,
    structure: Option<&SpatialStructure>,
    base: &EeSpec,
    max_d: usize,
    opts: &FitOptions,
) -> Result<Vec<LagScanRow>> {
    if max_d == 0 {
        return Err(Error::invalid("lag scan needs at least depth 1"));
    }
    if panel.axis().resolution() != Resolution::Daily {
        return Err(Error::invalid("lag scan expects a daily panel"));
    }
    if max_d > 1 && matches!(base.lags.scheme, LagScheme::Single) {
        return Err(Error::invalid(
            "lag scan beyond depth 1 needs a multi-lag weight scheme",
        ));
    }
    let burn_in = opts.burn_in.unwrap_or(max_d).max(max_d);
    let depths: Vec<usize> = (1..=max_d).collect();
    let rows: Vec<Result<LagScanRow>> = depths
        .par_iter()
        .map(|&d| {
            let mut spec = base.clone();
            spec.lags.max_lag = d;
            let mut o = opts.clone();
            o.burn_in = Some(burn_in);
            let f = fit(panel, structure, None, &ModelSpec::Ee(spec), &o)?;
            Ok(LagScanRow {
                max_lag: d,
                log_lik: f.log_lik,
                k: f.k,
                aic: f.aic,
                pseudo_r2: f.pseudo_r2,
                converged: f.converged,
            })
        })
        .collect();
    rows.into_iter().collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeasonComparison {
    pub seasonal: FitResult,
    pub free: FitResult,
    /// Fitted calendar-month endemic effects, January first, centered log
    /// scale.
    pub month_effects: Vec<f64>,
    /// Trailing moving average of order 2 over the month effects, December
    /// wrapping into January.
    pub month_effects_ma2: Vec<f64>,
    /// Free-endemic pseudo-R2 minus month-seasonal pseudo-R2.
    pub pseudo_r2_gap: f64,
}

/// Fit the same gravity spec twice, once with a twelve-parameter calendar
/// month endemic block and once with a free per-month endemic trajectory.
/// A pseudo-R2 gap near zero says the months capture the endemic pattern; a
/// large gap says the trajectory drifts outside any yearly cycle.
pub fn season_compare(
    panel: &CountPanel,
    structure: Option<&SpatialStructure>,
    cube: Option<&CovariateCube>,
    base: &GravitySpec,
    opts: &FitOptions,
) -> Result<SeasonComparison> {
    if panel.n_times() < 13 {
        return Err(Error::invalid(format!(
            "the seasonal comparison needs at least 13 months, got {}",
            panel.n_times()
        )));
    }
    if base.variant == GravityVariant::PerRegionEndemic {
        return Err(Error::invalid(
            "the seasonal comparison applies to shared endemic blocks",
        ));
    }
    let mut seasonal_spec = base.clone();
    seasonal_spec.endemic = EndemicKind::MonthSeasonal;
    let mut free_spec = base.clone();
    free_spec.endemic = EndemicKind::FreePerTime;
    let (seasonal, free) = rayon::join(
        || fit(panel, structure, cube, &ModelSpec::Gravity(seasonal_spec), opts),
        || fit(panel, structure, cube, &ModelSpec::Gravity(free_spec), opts),
    );
    let seasonal = seasonal?;
    let free = free?;
    let month_effects = seasonal
        .params
        .get("endemic.month")
        .cloned()
        .ok_or_else(|| Error::invalid("seasonal fit is missing its month block"))?;
    let month_effects_ma2 = trailing_ma2(&month_effects);
    let pseudo_r2_gap = free.pseudo_r2 - seasonal.pseudo_r2;
    Ok(SeasonComparison {
        seasonal,
        free,
        month_effects,
        month_effects_ma2,
        pseudo_r2_gap,
    })
}

/// Trailing moving average of order 2 on a circular series: each entry is
/// averaged with its predecessor, the first wrapping to the last.
pub fn trailing_ma2(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| 0.5 * (values[(i + n - 1) % n] + values[i]))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub effects: EffectsLevel,
    pub endemic: String,
    pub without_gravity: FitResult,
    pub with_gravity: FitResult,
}

/// Fit every effects-level and shared-endemic combination with and without
/// the air-traffic term of the base spec: four rows, eight fits.
pub fn ablation(
    panel: &CountPanel,
    structure: Option<&SpatialStructure>,
    cube: Option<&CovariateCube>,
    base: &GravitySpec,
    opts: &FitOptions,
) -> Result<Vec<AblationRow>> {
    let term = base
        .gravity
        .ok_or_else(|| Error::invalid("ablation needs a configured air-traffic term"))?;
    let combos = [
        (EffectsLevel::Regional, EndemicKind::MonthSeasonal),
        (EffectsLevel::Regional, EndemicKind::FreePerTime),
        (EffectsLevel::District, EndemicKind::MonthSeasonal),
        (EffectsLevel::District, EndemicKind::FreePerTime),
    ];
    let rows: Vec<Result<AblationRow>> = combos
        .par_iter()
        .map(|&(effects, endemic)| {
            let mut spec = base.clone();
            spec.variant = GravityVariant::CompositeSharedEndemic;
            spec.effects = effects;
            spec.endemic = endemic;
            spec.gravity = None;
            let without_gravity =
                fit(panel, structure, cube, &ModelSpec::Gravity(spec.clone()), opts)?;
            spec.gravity = Some(term);
            let with_gravity =
                fit(panel, structure, cube, &ModelSpec::Gravity(spec), opts)?;
            Ok(AblationRow {
                effects,
                endemic: endemic_label(endemic),
                without_gravity,
                with_gravity,
            })
        })
        .collect();
    rows.into_iter().collect()
}

fn endemic_label(kind: EndemicKind) -> String {
    match kind {
        EndemicKind::None => "none",
        EndemicKind::FreePerTime => "free-per-time",
        EndemicKind::FreePerRegionTime => "free-per-region-time",
        EndemicKind::MonthSeasonal => "month-seasonal",
        EndemicKind::Harmonic { .. } => "harmonic",
    }
    .to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectorySeries {
    /// "all" for a shared series, otherwise the region id.
    pub scope: String,
    /// Time indexes on the fitted panel's axis.
    pub times: Vec<usize>,
    /// Log endemic level, centered to sum to zero over the series.
    pub log_level: Vec<f64>,
    /// exp(log_level).
    pub level: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub series: Vec<TrajectorySeries>,
    pub warning: Option<String>,
}

/// Extract the fitted endemic trajectory from a fit, one series per scope.
/// Levels are reported from the burn-in onward and centered on the log scale,
/// which removes the arbitrary split between overall level and time pattern.
pub fn endemic_trajectory(result: &FitResult, panel: &CountPanel) -> Result<Trajectory> {
    let warning = (!result.converged).then(|| "trajectory taken from a non-converged fit".to_string());
    let axis = panel.axis();
    if result.burn_in >= axis.len() {
        return Err(Error::invalid(format!(
            "burn-in {} leaves no trajectory on an axis of {} steps",
            result.burn_in,
            axis.len()
        )));
    }
    let times: Vec<usize> = (result.burn_in..axis.len()).collect();
    let (endemic, log_space) = match &result.spec {
        ModelSpec::Ee(s) => (s.endemic, false),
        ModelSpec::Gravity(s) => (s.endemic, true),
    };
    let log_at = |raw: f64| if log_space { raw } else { raw.ln() };
    let mut series = Vec::new();
    match endemic {
        EndemicKind::None => {
            return Err(Error::invalid("the fitted spec has no endemic block"));
        }
        EndemicKind::FreePerTime => {
            let v = full_span_segment(result, "endemic.level", axis.len())?;
            let logs = times.iter().map(|&t| log_at(v[t])).collect();
            series.push(centered_series("all", times.clone(), logs));
        }
        EndemicKind::FreePerRegionTime => {
            for r in panel.units().regions() {
                let v = full_span_segment(result, &format!("endemic.level.{r}"), axis.len())?;
                let logs = times.iter().map(|&t| log_at(v[t])).collect();
                series.push(centered_series(r, times.clone(), logs));
            }
        }
        EndemicKind::MonthSeasonal => {
            let v = segment(result, "endemic.month")?;
            let logs = times
                .iter()
                .map(|&t| log_at(v[axis.month_of(t) as usize - 1]))
                .collect();
            series.push(centered_series("all", times.clone(), logs));
        }
        EndemicKind::Harmonic { .. } => {
            let omega = endemic
                .resolved_omega(axis.resolution())
                .expect("harmonic kind");
            let alpha0 = match &result.spec {
                ModelSpec::Ee(_) => segment(result, "endemic.alpha0")?[0],
                ModelSpec::Gravity(_) => 0.0,
            };
            let eta = segment(result, "endemic.eta")?[0];
            let gamma = segment(result, "endemic.gamma")?[0];
            let delta = segment(result, "endemic.delta")?[0];
            let logs = times
                .iter()
                .map(|&t| {
                    let t1 = (t + 1) as f64;
                    alpha0 + eta * t1 + gamma * (omega * t1).sin() + delta * (omega * t1).cos()
                })
                .collect();
            series.push(centered_series("all", times.clone(), logs));
        }
    }
    Ok(Trajectory { series, warning })
}

/// Collapse a daily trajectory to one value per complete calendar month,
/// keeping the mid-month day and re-centering over the months kept. Returns
/// the monthly axis the collapsed series lives on.
pub fn mid_month_trajectory(
    series: &TrajectorySeries,
    axis: &TimeAxis,
) -> Result<(TimeAxis, TrajectorySeries)> {
    let mut full = vec![f64::NAN; axis.len()];
    for (&t, &v) in series.times.iter().zip(&series.log_level) {
        full[t] = v;
    }
    let (monthly, sliced) = mid_month_slice(axis, &full)?;
    if sliced.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(
            "a mid-month day falls inside the burn-in span",
        ));
    }
    let times = (0..sliced.len()).collect();
    Ok((monthly, centered_series(&series.scope, times, sliced)))
}

fn segment<'a>(result: &'a FitResult, name: &str) -> Result<&'a Vec<f64>> {
    result
        .params
        .get(name)
        .ok_or_else(|| Error::invalid(format!("fit has no segment named {name}")))
}

fn full_span_segment<'a>(
    result: &'a FitResult,
    name: &str,
    t_len: usize,
) -> Result<&'a Vec<f64>> {
    let v = segment(result, name)?;
    if v.len() != t_len {
        return Err(Error::invalid(format!(
            "segment {name} covers {} time steps, the panel has {t_len}",
            v.len()
        )));
    }
    Ok(v)
}

fn centered_series(scope: &str, times: Vec<usize>, mut logs: Vec<f64>) -> TrajectorySeries {
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    for v in logs.iter_mut() {
        *v -= mean;
    }
    let resid = logs.iter().sum::<f64>() / n;
    for v in logs.iter_mut() {
        *v -= resid;
    }
    let level = logs.iter().map(|v| v.exp()).collect();
    TrajectorySeries {
        scope: scope.to_string(),
        times,
        log_level: logs,
        level,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trailing_ma2_wraps_the_year() {
        let m: Vec<f64> = (1..=12).map(|v| v as f64).collect();
        let ma = trailing_ma2(&m);
        assert_eq!(ma.len(), 12);
        assert_eq!(ma[0], 0.5 * (12.0 + 1.0));
        assert_eq!(ma[1], 1.5);
        assert_eq!(ma[11], 11.5);
    }

    #[test]
    fn trailing_ma2_of_a_constant_is_the_constant() {
        let ma = trailing_ma2(&[3.25; 12]);
        assert!(ma.iter().all(|&v| v == 3.25));
    }

    #[test]
    fn centered_series_sums_to_zero() {
        let s = centered_series("all", vec![0, 1, 2, 3], vec![10.0, 11.0, 9.0, 12.5]);
        let sum: f64 = s.log_level.iter().sum();
        assert!(sum.abs() < 1e-12);
        for (l, e) in s.log_level.iter().zip(&s.level) {
            assert!((l.exp() - e).abs() < 1e-15);
        }
    }
}
