//! Packed likelihood objectives: evaluate the log-likelihood and its exact
//! gradient with respect to the flat parameter vector by chaining per-cell
//! scores through the mean builders and the packing transforms.

use ndarray::Array2;

use crate::covariate::CovariateCube;
use crate::error::{Error, Result};
use crate::likelihood::means::{EeMeanContext, GravityMeanContext, EE_MEAN_FLOOR};
use crate::likelihood::nb::{nb_cell_derivs, nb_cell_loglik};
use crate::likelihood::pairwise_sum;
use crate::model::{DataDims, EeSpec, GravitySpec, ModelSpec};
use crate::panel::CountPanel;
use crate::params::{chain_segment, unpack, NaturalParams, ParamLayout, SegKind};
use crate::spatial::SpatialStructure;
use crate::weights::CouplingMatrix;

pub struct EeObjective<'a> {
    pub(crate) ctx: EeMeanContext<'a>,
    layout: ParamLayout,
    model: ModelSpec,
    dims: DataDims,
}

pub struct GravityObjective<'a> {
    pub(crate) ctx: GravityMeanContext<'a>,
    layout: ParamLayout,
    model: ModelSpec,
    dims: DataDims,
}

/// A model family bound to one data set, exposing the packed likelihood
/// surface.
pub enum Objective<'a> {
    Ee(EeObjective<'a>),
    Gravity(GravityObjective<'a>),
}

impl<'a> Objective<'a> {
    pub fn ee(
        panel: &'a CountPanel,
        spec: &'a EeSpec,
        coupling: Option<&CouplingMatrix>,
        burn_in: usize,
    ) -> Result<Self> {
        let ctx = EeMeanContext::new(panel, spec, coupling, burn_in)?;
        let dims = DataDims::new(panel.units(), panel.n_times(), None);
        let model = ModelSpec::Ee(spec.clone());
        let layout = crate::params::layout(&model, &dims)?;
        Ok(Objective::Ee(EeObjective {
            ctx,
            layout,
            model,
            dims,
        }))
    }

    /// `alpha` must carry the concrete decay rate when the spec has a gravity
    /// term (profiling supplies one per grid point).
    pub fn gravity(
        panel: &'a CountPanel,
        spec: &'a GravitySpec,
        structure: Option<&SpatialStructure>,
        cube: Option<&CovariateCube>,
        alpha: Option<f64>,
    ) -> Result<Self> {
        let ctx = GravityMeanContext::new(panel, spec, structure, cube, alpha)?;
        let dims = DataDims::new(panel.units(), panel.n_times(), structure);
        let model = ModelSpec::Gravity(spec.clone());
        let layout = crate::params::layout(&model, &dims)?;
        Ok(Objective::Gravity(GravityObjective {
            ctx,
            layout,
            model,
            dims,
        }))
    }

    pub fn layout(&self) -> &ParamLayout {
        match self {
            Objective::Ee(o) => &o.layout,
            Objective::Gravity(o) => &o.layout,
        }
    }

    pub fn model(&self) -> &ModelSpec {
        match self {
            Objective::Ee(o) => &o.model,
            Objective::Gravity(o) => &o.model,
        }
    }

    pub fn dims(&self) -> &DataDims {
        match self {
            Objective::Ee(o) => &o.dims,
            Objective::Gravity(o) => &o.dims,
        }
    }

    pub fn burn_in(&self) -> usize {
        match self {
            Objective::Ee(o) => o.ctx.burn_in,
            Objective::Gravity(_) => 0,
        }
    }

    pub fn counts(&self) -> &Array2<f64> {
        match self {
            Objective::Ee(o) => &o.ctx.y,
            Objective::Gravity(o) => &o.ctx.y,
        }
    }

    /// Cells entering the likelihood (units x post-burn-in times).
    pub fn n_included(&self) -> usize {
        let y = self.counts();
        y.nrows() * (y.ncols() - self.burn_in())
    }

    pub fn unpack(&self, packed: &[f64]) -> Result<NaturalParams> {
        unpack(self.model(), self.dims(), packed)
    }

    pub fn loglik(&self, packed: &[f64]) -> Result<f64> {
        match self {
            Objective::Ee(o) => {
                let nat = unpack(&o.model, &o.dims, packed)?;
                let p = nat.as_ee().expect("family matches");
                let surface = o.ctx.mean(p)?;
                panel_loglik(&o.ctx.y, &surface.mu, surface.burn_in, &p.psi)
            }
            Objective::Gravity(o) => {
                let nat = unpack(&o.model, &o.dims, packed)?;
                let p = nat.as_gravity().expect("family matches");
                let surface = o.ctx.mean(p)?;
                panel_loglik(&o.ctx.y, &surface.mu, 0, &p.psi)
            }
        }
    }

    /// Log-likelihood and its gradient in packed coordinates.
    pub fn loglik_grad(&self, packed: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self {
            Objective::Ee(o) => ee_loglik_grad(o, packed),
            Objective::Gravity(o) => gravity_loglik_grad(o, packed),
        }
    }
}

/// Spec-facing alias for the packed gradient of an objective.
pub fn nb_loglik_grad(objective: &Objective, packed: &[f64]) -> Result<(f64, Vec<f64>)> {
    objective.loglik_grad(packed)
}

/// Likelihood value plus per-cell scores d/dmu and d/dpsi over included cells.
fn panel_loglik_scores(
    y: &Array2<f64>,
    mu: &Array2<f64>,
    burn_in: usize,
    psi: &[f64],
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    let (p, t_len) = y.dim();
    let mut contributions = Vec::with_capacity(p * (t_len - burn_in));
    let mut dmu = Array2::zeros((p, t_len));
    let mut dpsi = Array2::zeros((p, t_len));
    for i in 0..p {
        let psi_i = if psi.len() == 1 { psi[0] } else { psi[i] };
        for t in burn_in..t_len {
            let m = mu[(i, t)];
            let ll = nb_cell_loglik(y[(i, t)], m, psi_i)?;
            if !ll.is_finite() {
                return Err(Error::NonFiniteObjective(format!(
                    "log-likelihood diverged at unit {i}, t={t} (mean {m})"
                )));
            }
            contributions.push(ll);
            let (dm, dp) = nb_cell_derivs(y[(i, t)], m, psi_i);
            dmu[(i, t)] = dm;
            dpsi[(i, t)] = dp;
        }
    }
    Ok((pairwise_sum(&contributions), dmu, dpsi))
}

fn panel_loglik(
    y: &Array2<f64>,
    mu: &Array2<f64>,
    burn_in: usize,
    psi: &[f64],
) -> Result<f64> {
    let (p, t_len) = y.dim();
    let mut contributions = Vec::with_capacity(p * (t_len - burn_in));
    for i in 0..p {
        let psi_i = if psi.len() == 1 { psi[0] } else { psi[i] };
        for t in burn_in..t_len {
            contributions.push(nb_cell_loglik(y[(i, t)], mu[(i, t)], psi_i)?);
        }
    }
    Ok(pairwise_sum(&contributions))
}

/// Sum the dispersion scores into the natural psi gradient (shared or
/// per-unit).
fn psi_natural_grad(dpsi: &Array2<f64>, burn_in: usize, n_psi: usize) -> Vec<f64> {
    let (p, t_len) = dpsi.dim();
    if n_psi == 1 {
        let mut g = 0.0;
        for i in 0..p {
            for t in burn_in..t_len {
                g += dpsi[(i, t)];
            }
        }
        vec![g]
    } else {
        (0..p)
            .map(|i| (burn_in..t_len).map(|t| dpsi[(i, t)]).sum())
            .collect()
    }
}

fn ee_loglik_grad(o: &EeObjective, packed: &[f64]) -> Result<(f64, Vec<f64>)> {
    let ctx = &o.ctx;
    let nat = unpack(&o.model, &o.dims, packed)?;
    let p = nat.as_ee().expect("family matches");
    let (surface, nu) = ctx.mean_and_endemic(p, EE_MEAN_FLOOR)?;
    let (ll, dmu, dpsi) = panel_loglik_scores(&ctx.y, &surface.mu, surface.burn_in, &p.psi)?;
    let (n_units, t_len) = ctx.y.dim();
    let burn = surface.burn_in;
    let factors: Vec<f64> = (0..n_units).map(|i| ctx.effect_factor(p, i)).collect();
    let mut grad = Vec::with_capacity(packed.len());
    let scratch = [0.0f64];
    for seg in o.layout.segments() {
        let mut g_nat = vec![0.0; seg.n_natural];
        let natural: &[f64] = match seg.kind {
            SegKind::Lambda => {
                accumulate_coef_grad(&dmu, &ctx.own_hist, burn, &mut g_nat);
                &p.lambda
            }
            SegKind::Phi => {
                accumulate_coef_grad(&dmu, &ctx.coupled_hist, burn, &mut g_nat);
                &p.phi
            }
            SegKind::EndemicLevel => {
                for t in burn..t_len {
                    let mut s = 0.0;
                    for i in 0..n_units {
                        s += dmu[(i, t)] * factors[i];
                    }
                    g_nat[t] = s;
                }
                match &p.endemic {
                    crate::params::EndemicParams::FreePerTime(v) => v,
                    _ => unreachable!(),
                }
            }
            SegKind::EndemicLevelRegion(r) => {
                for t in burn..t_len {
                    let mut s = 0.0;
                    for &i in ctx.units.units_of_region(r) {
                        s += dmu[(i, t)] * factors[i];
                    }
                    g_nat[t] = s;
                }
                match &p.endemic {
                    crate::params::EndemicParams::FreePerRegionTime(v) => &v[r],
                    _ => unreachable!(),
                }
            }
            SegKind::EndemicMonth => {
                for t in burn..t_len {
                    let k = ctx.axis.month_of(t) as usize - 1;
                    let mut s = 0.0;
                    for i in 0..n_units {
                        s += dmu[(i, t)] * factors[i];
                    }
                    g_nat[k] += s;
                }
                match &p.endemic {
                    crate::params::EndemicParams::MonthSeasonal(m) => m,
                    _ => unreachable!(),
                }
            }
            SegKind::HarmAlpha0 | SegKind::HarmEta | SegKind::HarmGamma | SegKind::HarmDelta => {
                let omega = ctx.omega.unwrap();
                let mut s = 0.0;
                for t in burn..t_len {
                    let t1 = (t + 1) as f64;
                    let factor = match seg.kind {
                        SegKind::HarmAlpha0 => 1.0,
                        SegKind::HarmEta => t1,
                        SegKind::HarmGamma => (omega * t1).sin(),
                        SegKind::HarmDelta => (omega * t1).cos(),
                        _ => unreachable!(),
                    };
                    for i in 0..n_units {
                        s += dmu[(i, t)] * nu[(i, t)] * factor;
                    }
                }
                g_nat[0] = s;
                &scratch
            }
            SegKind::RegionEffect => {
                for i in 0..n_units {
                    let g_idx = match ctx.spec.region_effect {
                        Some(crate::model::RegionEffect::PerRegion) => ctx.units.region_of(i),
                        Some(crate::model::RegionEffect::PerDistrict) => i,
                        None => unreachable!(),
                    };
                    for t in burn..t_len {
                        g_nat[g_idx] += dmu[(i, t)] * nu[(i, t)];
                    }
                }
                &p.region_effect
            }
            SegKind::Psi => {
                g_nat = psi_natural_grad(&dpsi, burn, p.psi.len());
                &p.psi
            }
            _ => unreachable!("gravity segment in autoregressive layout"),
        };
        chain_segment(seg, &g_nat, natural, &mut grad);
    }
    Ok((ll, grad))
}

fn accumulate_coef_grad(
    dmu: &Array2<f64>,
    hist: &Array2<f64>,
    burn_in: usize,
    g_nat: &mut [f64],
) {
    let (p, t_len) = dmu.dim();
    if g_nat.len() == 1 {
        let mut s = 0.0;
        for i in 0..p {
            for t in burn_in..t_len {
                s += dmu[(i, t)] * hist[(i, t)];
            }
        }
        g_nat[0] = s;
    } else {
        for i in 0..p {
            let mut s = 0.0;
            for t in burn_in..t_len {
                s += dmu[(i, t)] * hist[(i, t)];
            }
            g_nat[i] = s;
        }
    }
}

fn gravity_loglik_grad(o: &GravityObjective, packed: &[f64]) -> Result<(f64, Vec<f64>)> {
    let ctx = &o.ctx;
    let nat = unpack(&o.model, &o.dims, packed)?;
    let p = nat.as_gravity().expect("family matches");
    let surface = ctx.mean(p)?;
    let (ll, dmu, dpsi) = panel_loglik_scores(&ctx.y, &surface.mu, 0, &p.psi)?;
    let (n_units, t_len) = ctx.y.dim();
    // Score with respect to the log-mean.
    let mut dlog = Array2::zeros((n_units, t_len));
    for i in 0..n_units {
        for t in 0..t_len {
            dlog[(i, t)] = dmu[(i, t)] * surface.mu[(i, t)];
        }
    }
    let mut grad = Vec::with_capacity(packed.len());
    let scratch = [0.0f64];
    for seg in o.layout.segments() {
        let mut g_nat = vec![0.0; seg.n_natural];
        let natural: &[f64] = match seg.kind {
            SegKind::Intercept => {
                g_nat[0] = dlog.iter().sum();
                &scratch
            }
            SegKind::EndemicLevel => {
                for t in 0..t_len {
                    g_nat[t] = (0..n_units).map(|i| dlog[(i, t)]).sum();
                }
                &scratch
            }
            SegKind::EndemicLevelRegion(r) => {
                for t in 0..t_len {
                    g_nat[t] = ctx
                        .units
                        .units_of_region(r)
                        .iter()
                        .map(|&i| dlog[(i, t)])
                        .sum();
                }
                &scratch
            }
            SegKind::EndemicMonth => {
                for t in 0..t_len {
                    let k = ctx.axis.month_of(t) as usize - 1;
                    g_nat[k] += (0..n_units).map(|i| dlog[(i, t)]).sum::<f64>();
                }
                &scratch
            }
            SegKind::HarmEta | SegKind::HarmGamma | SegKind::HarmDelta => {
                let omega = ctx.omega.unwrap();
                let mut s = 0.0;
                for t in 0..t_len {
                    let t1 = (t + 1) as f64;
                    let factor = match seg.kind {
                        SegKind::HarmEta => t1,
                        SegKind::HarmGamma => (omega * t1).sin(),
                        SegKind::HarmDelta => (omega * t1).cos(),
                        _ => unreachable!(),
                    };
                    s += factor * (0..n_units).map(|i| dlog[(i, t)]).sum::<f64>();
                }
                g_nat[0] = s;
                &scratch
            }
            SegKind::RegionLoc => {
                for (r, g) in g_nat.iter_mut().enumerate() {
                    *g = ctx
                        .units
                        .units_of_region(r)
                        .iter()
                        .map(|&i| (0..t_len).map(|t| dlog[(i, t)]).sum::<f64>())
                        .sum();
                }
                &scratch
            }
            SegKind::DistrictDev(r) => {
                for (j, &i) in ctx.units.units_of_region(r).iter().enumerate() {
                    g_nat[j] = (0..t_len).map(|t| dlog[(i, t)]).sum();
                }
                &scratch
            }
            SegKind::Theta(r) => {
                for &i in ctx.units.units_of_region(r) {
                    let g = &ctx.traffic[i];
                    for k in 0..g_nat.len() {
                        let mut s = 0.0;
                        for t in 0..t_len {
                            s += dlog[(i, t)] * g[(k, t)];
                        }
                        g_nat[k] += s;
                    }
                }
                &scratch
            }
            SegKind::Psi => {
                g_nat = psi_natural_grad(&dpsi, 0, p.psi.len());
                &p.psi
            }
            _ => unreachable!("autoregressive segment in gravity layout"),
        };
        chain_segment(seg, &g_nat, natural, &mut grad);
    }
    Ok((ll, grad))
}
