//! Forward simulation of count panels from either model family. A fixed seed
//! gives byte-identical output; every run carries a provenance record with
//! the config hash so fixtures can be traced back to their generator.

use chrono::{Datelike, NaiveDate};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::covariate::CovariateCube;
use crate::error::{Error, Result};
use crate::likelihood::{harmonic_endemic, EeMeanContext, GravityMeanContext, EE_MEAN_FLOOR};
use crate::model::{CouplingSpec, ModelSpec, Profiled, RegionEffect};
use crate::panel::{CountPanel, District, Resolution, TimeAxis, UnitIndex};
use crate::params::{EeParams, EndemicParams, NaturalParams};
use crate::spatial::SpatialStructure;
use crate::weights::{lag_weights, CouplingMatrix};

/// Ceiling on any simulated mean; beyond it the parameters are treated as
/// non-stationary and the run aborts.
pub const MEAN_GUARD: f64 = 1e9;

/// Dispersion at or below this is treated as the Poisson limit when drawing.
const PSI_POISSON: f64 = 1e-12;

const EE_BURN_IN_DEFAULT: usize = 50;

/// How the conditioning history (the first max-lag steps of an autoregressive
/// simulation) is produced.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialHistory {
    /// Draw every history cell from Poisson of the unit's endemic level at
    /// the first kept step.
    #[default]
    EndemicDraw,
    /// Fixed counts, outer index unit, inner index history step oldest first;
    /// inner length must equal the spec's max lag.
    Fixed { counts: Vec<Vec<u64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SimConfig {
    pub districts: Vec<District>,
    pub resolution: Resolution,
    /// First calendar step of the returned panel; burn-in steps precede it.
    pub origin: NaiveDate,
    /// Length of the returned panel.
    pub n_times: usize,
    pub spec: ModelSpec,
    pub params: NaturalParams,
    pub seed: u64,
    /// Steps simulated before the axis start and discarded. Defaults to 50
    /// for autoregressive specs; must be 0 for gravity specs, whose mean has
    /// no temporal feedback to equilibrate.
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default)]
    pub initial_history: InitialHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Provenance {
    /// Hex SHA-256 of the canonical JSON encoding of the config.
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

#[derive(Debug)]
pub struct SimOutput {
    pub panel: CountPanel,
    pub provenance: Provenance,
}

/// One negative-binomial draw with mean `mu` and variance `mu(1 + psi mu)`,
/// via the gamma-Poisson mixture: rate ~ Gamma(shape 1/psi, scale psi mu),
/// then Poisson(rate). Dispersion at the Poisson limit draws Poisson(mu)
/// directly. Requires `mu > 0` and `psi >= 0`.
pub fn nb_draw<R: rand::Rng + ?Sized>(mu: f64, psi: f64, rng: &mut R) -> Result<u64> {
    if !mu.is_finite() || mu <= 0.0 {
        return Err(Error::invalid(format!("mean must be positive, got {mu}")));
    }
    if !psi.is_finite() || psi < 0.0 {
        return Err(Error::invalid(format!(
            "dispersion must be finite and nonnegative, got {psi}"
        )));
    }
    if psi <= PSI_POISSON {
        return poisson_draw(mu, rng);
    }
    let gamma = Gamma::new(1.0 / psi, psi * mu)
        .map_err(|e| Error::invalid(format!("gamma mixing distribution: {e}")))?;
    poisson_draw(gamma.sample(rng), rng)
}

/// Poisson draw that maps a zero (or underflowed) rate to zero.
fn poisson_draw<R: rand::Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<u64> {
    if rate <= 0.0 {
        return Ok(0);
    }
    let p = Poisson::new(rate).map_err(|e| Error::invalid(format!("poisson draw: {e}")))?;
    let v: f64 = p.sample(rng);
    Ok(v as u64)
}

/// Simulate a count panel. `structure` is needed for between-unit coupling
/// and the air-traffic term, `cube` for the latter, exactly as in fitting.
pub fn simulate(
    config: &SimConfig,
    structure: Option<&SpatialStructure>,
    cube: Option<&CovariateCube>,
) -> Result<SimOutput> {
    let units = UnitIndex::new(config.districts.clone())?;
    let axis = TimeAxis::new(config.resolution, config.origin, config.n_times)?;
    let provenance = provenance_of(config);
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let counts = match (&config.spec, &config.params) {
        (ModelSpec::Ee(spec), NaturalParams::Ee(params)) => {
            let model = ModelSpec::Ee(spec.clone());
            simulate_ee(config, &units, &axis, &model, params, structure, &mut rng)?
        }
        (ModelSpec::Gravity(spec), NaturalParams::Gravity(params)) => {
            if config.burn_in.unwrap_or(0) != 0 {
                return Err(Error::invalid(
                    "burn-in does not apply to gravity simulation: the mean has no temporal feedback",
                ));
            }
            if config.initial_history != InitialHistory::EndemicDraw {
                return Err(Error::invalid(
                    "initial history applies only to autoregressive simulation",
                ));
            }
            let alpha = match spec.gravity.as_ref().map(|g| g.alpha) {
                Some(Profiled::Fixed(a)) => Some(a),
                Some(Profiled::Profile) => {
                    return Err(Error::invalid(
                        "simulation needs a concrete decay rate, not a profiled one",
                    ))
                }
                None => None,
            };
            let zero = CountPanel::new(
                units.clone(),
                axis.clone(),
                Array2::zeros((units.len(), axis.len())),
            )?;
            let ctx = GravityMeanContext::new(&zero, spec, structure, cube, alpha)?;
            let mu = ctx.mean(params)?;
            let p = units.len();
            let mut out = Array2::zeros((p, axis.len()));
            for t in 0..axis.len() {
                for i in 0..p {
                    let m = mu.mu[(i, t)];
                    guard_mean(m, &units, i, t + 1)?;
                    let psi = psi_of(&params.psi, i);
                    out[(i, t)] = nb_draw(m, psi, &mut rng)?;
                }
            }
            out
        }
        _ => {
            return Err(Error::constraint(
                "params",
                "parameter family does not match the model spec",
            ))
        }
    };
    Ok(SimOutput {
        panel: CountPanel::new(units, axis, counts)?,
        provenance,
    })
}

fn provenance_of(config: &SimConfig) -> Provenance {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    Provenance {
        config_hash: hex::encode(digest),
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

fn guard_mean(m: f64, units: &UnitIndex, unit: usize, time_1based: usize) -> Result<()> {
    if m > MEAN_GUARD {
        return Err(Error::NonStationary {
            unit: units.districts()[unit].id.clone(),
            time: time_1based,
        });
    }
    Ok(())
}

fn psi_of(psi: &[f64], unit: usize) -> f64 {
    if psi.len() == 1 {
        psi[0]
    } else {
        psi[unit]
    }
}

fn coef_of(values: &[f64], unit: usize) -> f64 {
    if values.len() == 1 {
        values[0]
    } else {
        values[unit]
    }
}

/// Calendar month (1..=12) at signed offset `off` steps from `origin`.
fn month_at(resolution: Resolution, origin: NaiveDate, off: i64) -> u32 {
    match resolution {
        Resolution::Daily => (origin + chrono::Duration::days(off)).month(),
        Resolution::Monthly => {
            let total = origin.year() as i64 * 12 + origin.month0() as i64 + off;
            total.rem_euclid(12) as u32 + 1
        }
    }
}

/// Endemic level lookup over the extended simulation timeline. Step `e` runs
/// from 0; the first `burn_in` steps precede the returned axis, so the model
/// time index is `e - burn_in + 1`. Free trajectories have no values before
/// the axis and hold their first value there; calendar and harmonic patterns
/// extrapolate exactly.
struct EndemicEval<'a> {
    params: &'a EndemicParams,
    resolution: Resolution,
    origin: NaiveDate,
    burn_in: usize,
    omega: Option<f64>,
}

impl EndemicEval<'_> {
    fn level(&self, e: usize, region: usize) -> f64 {
        let off = e as i64 - self.burn_in as i64;
        let clamped = off.max(0) as usize;
        match self.params {
            EndemicParams::None => 0.0,
            EndemicParams::FreePerTime(v) => v[clamped],
            EndemicParams::FreePerRegionTime(v) => v[region][clamped],
            EndemicParams::MonthSeasonal(m) => {
                m[month_at(self.resolution, self.origin, off) as usize - 1]
            }
            EndemicParams::Harmonic {
                alpha0,
                eta,
                gamma,
                delta,
            } => harmonic_endemic(
                (off + 1) as f64,
                *alpha0,
                *eta,
                *gamma,
                *delta,
                self.omega.expect("harmonic omega resolved"),
            ),
        }
    }
}

fn simulate_ee(
    config: &SimConfig,
    units: &UnitIndex,
    axis: &TimeAxis,
    model: &ModelSpec,
    params: &EeParams,
    structure: Option<&SpatialStructure>,
    rng: &mut ChaCha12Rng,
) -> Result<Array2<u64>> {
    let spec = match model {
        ModelSpec::Ee(s) => s,
        _ => unreachable!(),
    };
    let p = units.len();
    let t_len = axis.len();
    let d_max = spec.lags.max_lag;
    let burn_in = config.burn_in.unwrap_or(EE_BURN_IN_DEFAULT);
    let coupling = match spec.between.as_ref().map(|b| b.coupling) {
        Some(CouplingSpec::PowerLaw {
            rho: Profiled::Fixed(rho),
        }) => {
            let st = structure
                .ok_or_else(|| Error::invalid("between-unit coupling needs a spatial structure"))?;
            Some(CouplingMatrix::power_law(st, units, rho)?)
        }
        Some(CouplingSpec::PowerLaw {
            rho: Profiled::Profile,
        }) => {
            return Err(Error::invalid(
                "simulation needs a concrete decay rate, not a profiled one",
            ))
        }
        Some(CouplingSpec::AdjacencyLag1) => {
            let st = structure
                .ok_or_else(|| Error::invalid("between-unit coupling needs a spatial structure"))?;
            Some(CouplingMatrix::adjacency_lag1(st, units)?)
        }
        None => None,
    };
    {
        // Parameter and dimension validation on the kept axis, sharing the
        // likelihood engine's checks.
        let zero = CountPanel::new(units.clone(), axis.clone(), Array2::zeros((p, t_len)))?;
        let ctx = EeMeanContext::new(&zero, spec, coupling.as_ref(), d_max)?;
        ctx.validate_params(params)?;
    }
    let u = lag_weights(spec.lags.scheme, d_max)?;
    let w = coupling.as_ref().map(|c| c.normalized().to_owned());
    let endemic = EndemicEval {
        params: &params.endemic,
        resolution: config.resolution,
        origin: config.origin,
        burn_in,
        omega: spec.endemic.resolved_omega(config.resolution),
    };
    let effect = |i: usize| -> f64 {
        match spec.region_effect {
            None => 1.0,
            Some(RegionEffect::PerRegion) => params.region_effect[units.region_of(i)].exp(),
            Some(RegionEffect::PerDistrict) => params.region_effect[i].exp(),
        }
    };
    let ext_len = burn_in + t_len;
    let mut y = Array2::<f64>::zeros((p, ext_len));
    match &config.initial_history {
        InitialHistory::EndemicDraw => {
            for e in 0..d_max {
                for i in 0..p {
                    let nu1 = endemic.level(burn_in, units.region_of(i)) * effect(i);
                    guard_mean(nu1, units, i, e + 1)?;
                    y[(i, e)] = poisson_draw(nu1, rng)? as f64;
                }
            }
        }
        InitialHistory::Fixed { counts } => {
            if counts.len() != p || counts.iter().any(|r| r.len() != d_max) {
                return Err(Error::invalid(format!(
                    "fixed initial history must be {p} units x {d_max} steps"
                )));
            }
            for (i, row) in counts.iter().enumerate() {
                for (e, &c) in row.iter().enumerate() {
                    y[(i, e)] = c as f64;
                }
            }
        }
    }
    for e in d_max..ext_len {
        for i in 0..p {
            let base = endemic.level(e, units.region_of(i)) * effect(i);
            let mut m = base + EE_MEAN_FLOOR;
            if !params.lambda.is_empty() {
                let mut acc = 0.0;
                for (d, ud) in u.iter().enumerate() {
                    acc += ud * y[(i, e - d - 1)];
                }
                m += coef_of(&params.lambda, i) * acc;
            }
            if !params.phi.is_empty() {
                let w = w.as_ref().expect("validated with the coupling matrix");
                let mut acc = 0.0;
                for (d, ud) in u.iter().enumerate() {
                    let mut inflow = 0.0;
                    for j in 0..p {
                        if j != i {
                            inflow += w[(j, i)] * y[(j, e - d - 1)];
                        }
                    }
                    acc += ud * inflow;
                }
                m += coef_of(&params.phi, i) * acc;
            }
            guard_mean(m, units, i, e + 1)?;
            y[(i, e)] = nb_draw(m, psi_of(&params.psi, i), rng)? as f64;
        }
    }
    let mut out = Array2::zeros((p, t_len));
    for i in 0..p {
        for t in 0..t_len {
            out[(i, t)] = y[(i, burn_in + t)] as u64;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        CoefSharing, DispersionSpec, EeSpec, EffectsLevel, EndemicKind, GravitySpec,
        GravityVariant, LagSpec,
    };
    use crate::weights::LagScheme;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn districts(region_sizes: &[usize]) -> Vec<District> {
        let mut out = Vec::new();
        let mut n = 0;
        for (r, &size) in region_sizes.iter().enumerate() {
            for _ in 0..size {
                out.push(District {
                    id: format!("d{n:02}"),
                    region: format!("r{r}"),
                });
                n += 1;
            }
        }
        out
    }

    fn ee_config(seed: u64) -> SimConfig {
        SimConfig {
            districts: districts(&[2, 2]),
            resolution: Resolution::Daily,
            origin: ymd(2015, 6, 1),
            n_times: 60,
            spec: ModelSpec::Ee(EeSpec {
                within: Some(CoefSharing::Shared),
                between: None,
                lags: LagSpec {
                    scheme: LagScheme::Single,
                    max_lag: 1,
                },
                endemic: EndemicKind::Harmonic { omega: None },
                region_effect: None,
                dispersion: DispersionSpec::default(),
            }),
            params: NaturalParams::Ee(EeParams {
                lambda: vec![0.4],
                phi: vec![],
                endemic: EndemicParams::Harmonic {
                    alpha0: 1.0,
                    eta: 0.0,
                    gamma: 0.4,
                    delta: -0.2,
                },
                region_effect: vec![],
                psi: vec![0.1],
            }),
            seed,
            burn_in: None,
            initial_history: InitialHistory::EndemicDraw,
        }
    }

    #[test]
    fn same_seed_gives_identical_panels() {
        let cfg = ee_config(42);
        let a = simulate(&cfg, None, None).unwrap();
        let b = simulate(&cfg, None, None).unwrap();
        assert_eq!(a.panel.counts(), b.panel.counts());
        assert_eq!(a.provenance.config_hash, b.provenance.config_hash);

        let c = simulate(&ee_config(43), None, None).unwrap();
        assert_ne!(a.panel.counts(), c.panel.counts());
        assert_ne!(a.provenance.config_hash, c.provenance.config_hash);
    }

    #[test]
    fn nb_draw_moments_match_the_mean_variance_law() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let n = 100_000usize;
        for &(mu, psi) in &[(4.0, 0.0), (2.0, 1.0), (3.0, 0.5)] {
            let draws: Vec<f64> = (0..n)
                .map(|_| nb_draw(mu, psi, &mut rng).unwrap() as f64)
                .collect();
            let mean = draws.iter().sum::<f64>() / n as f64;
            let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let m4 = draws.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n as f64;
            let want_var = mu * (1.0 + psi * mu);
            let se_mean = (var / n as f64).sqrt();
            let se_var = ((m4 - var * var) / n as f64).sqrt();
            assert!(
                (mean - mu).abs() <= 3.0 * se_mean,
                "mean {mean} vs {mu} at psi={psi}"
            );
            assert!(
                (var - want_var).abs() <= 3.0 * se_var,
                "variance {var} vs {want_var} at psi={psi}"
            );
        }
    }

    #[test]
    fn pure_endemic_poisson_cells_pass_a_gof_test() {
        let n_times = 10_000;
        let cfg = SimConfig {
            districts: districts(&[1]),
            resolution: Resolution::Daily,
            origin: ymd(2015, 1, 1),
            n_times,
            spec: ModelSpec::Ee(EeSpec {
                within: None,
                between: None,
                lags: LagSpec {
                    scheme: LagScheme::Single,
                    max_lag: 1,
                },
                endemic: EndemicKind::FreePerTime,
                region_effect: None,
                dispersion: DispersionSpec::default(),
            }),
            params: NaturalParams::Ee(EeParams {
                lambda: vec![],
                phi: vec![],
                endemic: EndemicParams::FreePerTime(vec![5.0; n_times]),
                region_effect: vec![],
                psi: vec![0.0],
            }),
            seed: 11,
            burn_in: Some(0),
            initial_history: InitialHistory::Fixed { counts: vec![vec![0]] },
        };
        let out = simulate(&cfg, None, None).unwrap();
        // First cell is the fixed history; the rest are Poisson(5) draws.
        let draws: Vec<u64> = (1..n_times).map(|t| out.panel.counts()[(0, t)]).collect();
        let lambda = 5.0f64;
        let n = draws.len() as f64;
        // Bins 0..=12 with the tail lumped so every expected count is >= 5.
        let k_max = 12usize;
        let mut observed = vec![0.0f64; k_max + 2];
        for &d in &draws {
            let b = (d as usize).min(k_max + 1);
            observed[b] += 1.0;
        }
        let mut expected = vec![0.0f64; k_max + 2];
        let mut pmf = (-lambda).exp();
        let mut cum = 0.0;
        for (k, slot) in expected.iter_mut().enumerate().take(k_max + 1) {
            if k > 0 {
                pmf *= lambda / k as f64;
            }
            *slot = n * pmf;
            cum += pmf;
        }
        expected[k_max + 1] = n * (1.0 - cum);
        let stat: f64 = observed
            .iter()
            .zip(&expected)
            .map(|(o, e)| (o - e).powi(2) / e)
            .sum();
        let dof = (k_max + 1) as f64;
        let p_value = 1.0 - ChiSquared::new(dof).unwrap().cdf(stat);
        assert!(p_value > 0.01, "chi-square stat {stat}, p {p_value}");
    }

    #[test]
    fn stepped_means_agree_with_the_likelihood_engine() {
        let cfg = SimConfig {
            burn_in: Some(0),
            ..ee_config(99)
        };
        let out = simulate(&cfg, None, None).unwrap();
        let params = cfg.params.as_ee().unwrap();
        let spec = match &cfg.spec {
            ModelSpec::Ee(s) => s,
            _ => unreachable!(),
        };
        let ctx = EeMeanContext::new(&out.panel, spec, None, spec.lags.max_lag).unwrap();
        let mu = ctx.mean(params).unwrap();

        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        let endemic = EndemicEval {
            params: &params.endemic,
            resolution: cfg.resolution,
            origin: cfg.origin,
            burn_in: 0,
            omega: spec.endemic.resolved_omega(cfg.resolution),
        };
        let p = out.panel.n_units();
        for e in 0..spec.lags.max_lag {
            for i in 0..p {
                let nu1 = endemic.level(0, 0);
                let replayed = poisson_draw(nu1, &mut rng).unwrap();
                assert_eq!(out.panel.counts()[(i, e)], replayed);
            }
        }
        for t in spec.lags.max_lag..cfg.n_times {
            for i in 0..p {
                let replayed = nb_draw(mu.mu[(i, t)], params.psi[0], &mut rng).unwrap();
                assert_eq!(
                    out.panel.counts()[(i, t)],
                    replayed,
                    "cell ({i},{t}) diverged: stepping and surface means disagree"
                );
            }
        }
    }

    #[test]
    fn burn_in_leaves_the_kept_phase_at_the_axis_start() {
        let eval_params = EndemicParams::Harmonic {
            alpha0: 0.7,
            eta: 0.01,
            gamma: 0.5,
            delta: 0.2,
        };
        let endemic = EndemicEval {
            params: &eval_params,
            resolution: Resolution::Daily,
            origin: ymd(2015, 6, 1),
            burn_in: 30,
            omega: Some(2.0 * std::f64::consts::PI / 365.0),
        };
        let omega = 2.0 * std::f64::consts::PI / 365.0;
        // First kept step evaluates at model time 1, burn-in steps at <= 0.
        let at = |t: f64| (0.7 + 0.01 * t + 0.5 * (omega * t).sin() + 0.2 * (omega * t).cos()).exp();
        assert_eq!(endemic.level(30, 0), at(1.0));
        assert_eq!(endemic.level(31, 0), at(2.0));
        assert_eq!(endemic.level(29, 0), at(0.0));
        assert_eq!(endemic.level(0, 0), at(-29.0));
    }

    #[test]
    fn free_trajectories_hold_their_first_value_through_burn_in() {
        let eval_params = EndemicParams::FreePerTime(vec![3.0, 4.0, 5.0]);
        let endemic = EndemicEval {
            params: &eval_params,
            resolution: Resolution::Daily,
            origin: ymd(2015, 6, 1),
            burn_in: 2,
            omega: None,
        };
        assert_eq!(endemic.level(0, 0), 3.0);
        assert_eq!(endemic.level(1, 0), 3.0);
        assert_eq!(endemic.level(2, 0), 3.0);
        assert_eq!(endemic.level(3, 0), 4.0);
        assert_eq!(endemic.level(4, 0), 5.0);
    }

    #[test]
    fn month_lookup_extends_the_calendar_backwards() {
        assert_eq!(month_at(Resolution::Monthly, ymd(2015, 3, 1), 0), 3);
        assert_eq!(month_at(Resolution::Monthly, ymd(2015, 3, 1), -3), 12);
        assert_eq!(month_at(Resolution::Monthly, ymd(2015, 3, 1), 10), 1);
        assert_eq!(month_at(Resolution::Daily, ymd(2015, 3, 1), -1), 2);
        assert_eq!(month_at(Resolution::Daily, ymd(2015, 3, 1), 31), 4);
    }

    #[test]
    fn explosive_parameters_abort_with_the_offending_unit() {
        let mut cfg = ee_config(5);
        cfg.n_times = 300;
        if let NaturalParams::Ee(p) = &mut cfg.params {
            p.lambda = vec![2.5];
            p.endemic = EndemicParams::Harmonic {
                alpha0: 2.0,
                eta: 0.0,
                gamma: 0.0,
                delta: 0.0,
            };
        }
        match simulate(&cfg, None, None) {
            Err(Error::NonStationary { unit, time }) => {
                assert!(unit.starts_with('d'));
                assert!(time >= 1);
            }
            other => panic!("expected a non-stationary abort, got {other:?}"),
        }
    }

    #[test]
    fn gravity_simulation_draws_every_cell() {
        let cfg = SimConfig {
            districts: districts(&[2, 1]),
            resolution: Resolution::Monthly,
            origin: ymd(2013, 1, 1),
            n_times: 24,
            spec: ModelSpec::Gravity(GravitySpec {
                variant: GravityVariant::CompositeSharedEndemic,
                intercept: true,
                effects: EffectsLevel::Regional,
                endemic: EndemicKind::MonthSeasonal,
                gravity: None,
                dispersion: DispersionSpec::default(),
            }),
            params: NaturalParams::Gravity(crate::params::GravityParams {
                intercept: Some(1.2),
                endemic: EndemicParams::MonthSeasonal(
                    (0..12).map(|k| 0.3 * (k as f64).sin()).collect::<Vec<f64>>(),
                ),
                region_loc: vec![0.2, -0.2],
                district_dev: vec![],
                theta: vec![],
                psi: vec![0.2],
            }),
            seed: 21,
            burn_in: None,
            initial_history: InitialHistory::EndemicDraw,
        };
        let a = simulate(&cfg, None, None).unwrap();
        let b = simulate(&cfg, None, None).unwrap();
        assert_eq!(a.panel.counts(), b.panel.counts());
        assert_eq!(a.panel.n_units(), 3);
        assert_eq!(a.panel.n_times(), 24);
        let total: u64 = a.panel.counts().iter().sum();
        assert!(total > 0);

        let mut with_burn = cfg.clone();
        with_burn.burn_in = Some(10);
        assert!(simulate(&with_burn, None, None).is_err());
    }

    #[test]
    fn mismatched_parameter_family_is_rejected() {
        let mut cfg = ee_config(1);
        cfg.params = NaturalParams::Gravity(crate::params::GravityParams {
            intercept: None,
            endemic: EndemicParams::None,
            region_loc: vec![0.0, 0.0],
            district_dev: vec![],
            theta: vec![],
            psi: vec![0.1],
        });
        assert!(matches!(
            simulate(&cfg, None, None),
            Err(Error::Constraint { .. })
        ));
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = ee_config(77);
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back: SimConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn fixed_history_shapes_are_validated() {
        let mut cfg = ee_config(3);
        cfg.initial_history = InitialHistory::Fixed {
            counts: vec![vec![1], vec![2], vec![3]],
        };
        assert!(simulate(&cfg, None, None).is_err());
        cfg.initial_history = InitialHistory::Fixed {
            counts: vec![vec![1], vec![2], vec![3], vec![4]],
        };
        let out = simulate(&cfg, None, None).unwrap();
        assert_eq!(out.panel.n_times(), 60);
    }
}
