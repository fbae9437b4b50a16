//! Maximum-likelihood fitting over the packed parameter space, profile grids
//! for decay rates, and the comparison metrics built on fitted likelihoods.

use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariate::CovariateCube;
use crate::error::{Error, Result};
use crate::likelihood::{nb_cell_derivs, nb_cell_loglik, Objective};
use crate::model::{CouplingSpec, DataDims, EeSpec, GravitySpec, ModelSpec, Profiled};
use crate::optim::{self, OptimOptions, OptimResult};
use crate::panel::CountPanel;
use crate::params::{self, ParamLayout, SegKind, Transform};
use crate::spatial::SpatialStructure;
use crate::weights::CouplingMatrix;

/// Profile grid bounds for the gravity decay rate, per kilometre.
pub const ALPHA_GRID: (f64, f64) = (1e-5, 0.1);
/// Profile grid bounds for the power-law coupling exponent.
pub const RHO_GRID: (f64, f64) = (-5.0, 0.0);

const INIT_LEVEL_FLOOR: f64 = 1e-8;
const DEGENERATE_NULL_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iters: usize,
    /// Convergence threshold on the packed gradient max-norm.
    pub grad_tol: f64,
    /// Points in each profile grid.
    pub grid_points: usize,
    /// Override for the autoregressive burn-in; defaults to the max lag.
    pub burn_in: Option<usize>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iters: 500,
            // Max-norm on the score; 1e-5 is far below statistical noise at
            // these sample sizes, and tighter thresholds mostly stall line
            // searches on near-collinear ridges without moving the optimum.
            grad_tol: 1e-5,
            grid_points: 25,
            burn_in: None,
        }
    }
}

impl FitOptions {
    fn optim(&self) -> OptimOptions {
        OptimOptions {
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            ..OptimOptions::default()
        }
    }
}

/// One inner maximization along a profile grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub value: f64,
    pub log_lik: f64,
    pub converged: bool,
}

/// Intercept-only negative-binomial reference fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NullFit {
    pub mean: f64,
    pub psi: f64,
    pub log_lik: f64,
    pub n: usize,
    pub k: usize,
    pub converged: bool,
    /// Set when every cell is zero, leaving the dispersion unidentified.
    pub poisson_limit: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    /// Natural-space values keyed by layout segment name.
    pub params: BTreeMap<String, Vec<f64>>,
    pub packed: Vec<f64>,
    /// Decay values selected by the outer profile search.
    pub profiled: BTreeMap<String, f64>,
    pub log_lik: f64,
    pub n_obs: usize,
    /// Packed length plus one per profiled decay value.
    pub k: usize,
    pub aic: f64,
    pub pseudo_r2: f64,
    pub null_log_lik: f64,
    pub burn_in: usize,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Trace of the profile search, in grid order; empty without one.
    pub profile: Vec<ProfilePoint>,
    pub notes: Vec<String>,
}

/// Akaike information criterion.
pub fn aic(log_lik: f64, k: usize) -> f64 {
    -2.0 * log_lik + 2.0 * k as f64
}

/// Nagelkerke pseudo-R-squared against the intercept-only reference. A model
/// that fits worse than the reference clamps to zero.
pub fn nagelkerke_r2(log_lik: f64, null_log_lik: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("pseudo-R2 needs at least one observation"));
    }
    let nf = n as f64;
    let denom = 1.0 - (2.0 * null_log_lik / nf).exp();
    if denom.is_nan() || denom <= DEGENERATE_NULL_TOL {
        return Err(Error::DegenerateNull);
    }
    let num = 1.0 - (2.0 * (null_log_lik - log_lik) / nf).exp();
    Ok((num / denom).clamp(0.0, 1.0))
}

/// Logarithmically spaced grid including both endpoints.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    debug_assert!(lo > 0.0 && hi > lo && n > 0);
    if n == 1 {
        return vec![(lo * hi).sqrt()];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Evenly spaced grid including both endpoints.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    debug_assert!(hi > lo && n > 0);
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Intercept-only reference fit over the cells at and after the burn-in.
pub fn fit_null(panel: &CountPanel, burn_in: usize) -> Result<NullFit> {
    let y = panel.to_f64();
    if burn_in >= y.ncols() {
        return Err(Error::invalid(format!(
            "burn-in {burn_in} leaves no cells in a panel of {} steps",
            y.ncols()
        )));
    }
    null_mle(&included_cells(&y, burn_in))
}

fn null_mle(cells: &[f64]) -> Result<NullFit> {
    let n = cells.len();
    if n < 2 {
        return Err(Error::invalid("reference fit needs at least two cells"));
    }
    let ybar = cells.iter().sum::<f64>() / n as f64;
    if ybar == 0.0 {
        return Ok(NullFit {
            mean: 0.0,
            psi: 0.0,
            log_lik: 0.0,
            n,
            k: 2,
            converged: true,
            poisson_limit: true,
        });
    }
    let fg = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let mu = x[0].exp();
        let psi = x[1].exp();
        let mut ll = 0.0;
        let mut dmu = 0.0;
        let mut dpsi = 0.0;
        for &yv in cells {
            ll += nb_cell_loglik(yv, mu, psi)?;
            let (a, b) = nb_cell_derivs(yv, mu, psi);
            dmu += a;
            dpsi += b;
        }
        Ok((ll, vec![dmu * mu, dpsi * psi]))
    };
    // Tight tolerance so the mean lands on the sample mean to ~1e-8; the
    // problem is two-dimensional, extra iterations cost nothing.
    let null_opts = OptimOptions {
        grad_tol: 1e-10,
        ..OptimOptions::default()
    };
    let r = optim::maximize(fg, &[ybar.ln(), 0.0], &null_opts)?;
    Ok(NullFit {
        mean: r.x[0].exp(),
        psi: r.x[1].exp(),
        log_lik: r.value,
        n,
        k: 2,
        converged: r.converged,
        poisson_limit: false,
    })
}

fn included_cells(y: &Array2<f64>, burn_in: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(y.nrows() * (y.ncols() - burn_in));
    for t in burn_in..y.ncols() {
        for i in 0..y.nrows() {
            v.push(y[(i, t)]);
        }
    }
    v
}

/// Starting point: intercept-like level coordinates at the log of the
/// included-cell mean, every other coordinate at zero (dispersion at one).
fn initial_packed(layout: &ParamLayout, ybar: f64) -> Vec<f64> {
    let level = ybar.max(INIT_LEVEL_FLOOR).ln();
    let mut x = vec![0.0; layout.packed_len()];
    for (i, seg) in layout.segments().iter().enumerate() {
        let fill = match seg.kind {
            SegKind::Intercept | SegKind::HarmAlpha0 => true,
            SegKind::EndemicLevel | SegKind::EndemicLevelRegion(_) | SegKind::EndemicMonth => {
                seg.transform == Transform::Log
            }
            // Free region levels carry the overall scale when no intercept
            // absorbs it.
            SegKind::RegionLoc => seg.transform == Transform::Identity,
            _ => false,
        };
        if fill {
            let off = layout.offset(i);
            for v in &mut x[off..off + seg.packed_len()] {
                *v = level;
            }
        }
    }
    x
}

fn maximize_objective(obj: &Objective, opts: &FitOptions) -> Result<OptimResult> {
    let ybar = {
        let y = obj.counts();
        let cells = included_cells(y, obj.burn_in());
        cells.iter().sum::<f64>() / cells.len() as f64
    };
    let x0 = initial_packed(obj.layout(), ybar);
    optim::maximize(|x| obj.loglik_grad(x), &x0, &opts.optim())
}

fn params_by_segment(layout: &ParamLayout, packed: &[f64]) -> BTreeMap<String, Vec<f64>> {
    let mut map = BTreeMap::new();
    for (i, seg) in layout.segments().iter().enumerate() {
        let off = layout.offset(i);
        map.insert(
            seg.name.clone(),
            params::unpack_segment(seg, &packed[off..off + seg.packed_len()]),
        );
    }
    map
}

fn pick_best(runs: Vec<Result<OptimResult>>) -> Result<(usize, Vec<OptimResult>)> {
    let runs = runs.into_iter().collect::<Result<Vec<OptimResult>>>()?;
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.value > runs[best].value {
            best = i;
        }
    }
    Ok((best, runs))
}

#[allow(clippy::too_many_arguments)]
fn build_result(
    spec: &ModelSpec,
    layout: &ParamLayout,
    burn_in: usize,
    cells: &[f64],
    opt: OptimResult,
    profiled: BTreeMap<String, f64>,
    profile: Vec<ProfilePoint>,
) -> Result<FitResult> {
    let n_obs = cells.len();
    let mut notes = Vec::new();
    let null = null_mle(cells)?;
    let pseudo_r2 = match nagelkerke_r2(opt.value, null.log_lik, n_obs) {
        Ok(r2) => {
            if opt.value + 1e-9 < null.log_lik {
                notes.push(format!(
                    "log-likelihood {:.6} fell below the intercept-only reference {:.6}; pseudo-R2 clamped to 0",
                    opt.value, null.log_lik
                ));
            }
            r2
        }
        Err(Error::DegenerateNull) => {
            notes.push(
                "intercept-only reference has zero log-likelihood (all-zero panel); pseudo-R2 reported as 0"
                    .into(),
            );
            0.0
        }
        Err(e) => return Err(e),
    };
    if !opt.converged {
        notes.push(format!(
            "not converged: gradient max-norm {:.3e} after {} iterations",
            opt.grad_norm, opt.iterations
        ));
    }
    if opt.fallback_steps > 0 {
        notes.push(format!(
            "curvature memory was reset {} time(s); those steps used plain gradient ascent",
            opt.fallback_steps
        ));
    }
    let k = layout.packed_len() + profiled.len();
    let aic_value = aic(opt.value, k);
    let params = params_by_segment(layout, &opt.x);
    assert!((0.0..=1.0).contains(&pseudo_r2));
    Ok(FitResult {
        spec: spec.clone(),
        params,
        packed: opt.x,
        profiled,
        log_lik: opt.value,
        n_obs,
        k,
        aic: aic_value,
        pseudo_r2,
        null_log_lik: null.log_lik,
        burn_in,
        converged: opt.converged,
        iterations: opt.iterations,
        grad_norm: opt.grad_norm,
        profile,
        notes,
    })
}

/// Fit a model spec to a panel by maximum likelihood. `structure` is needed
/// for between-unit coupling and the air-traffic term, `cube` for the latter;
/// profiled decay rates are maximized over their documented grids.
pub fn fit(
    panel: &CountPanel,
    structure: Option<&SpatialStructure>,
    cube: Option<&CovariateCube>,
    spec: &ModelSpec,
    opts: &FitOptions,
) -> Result<FitResult> {
    if opts.grid_points == 0 {
        return Err(Error::invalid("profile grid needs at least one point"));
    }
    match spec {
        ModelSpec::Ee(s) => fit_ee(panel, structure, s, opts),
        ModelSpec::Gravity(s) => fit_gravity(panel, structure, cube, s, opts),
    }
}

fn fit_ee(
    panel: &CountPanel,
    structure: Option<&SpatialStructure>,
    spec: &EeSpec,
    opts: &FitOptions,
) -> Result<FitResult> {
    spec.validate()?;
    let burn_in = opts.burn_in.unwrap_or(spec.lags.max_lag);
    let st = match &spec.between {
        Some(_) => Some(structure.ok_or_else(|| {
            Error::invalid("between-unit coupling needs a spatial structure")
        })?),
        None => None,
    };
    let model = ModelSpec::Ee(spec.clone());
    match spec.between.as_ref().map(|b| b.coupling) {
        Some(CouplingSpec::PowerLaw {
            rho: Profiled::Profile,
        }) => {
            let st = st.expect("required above");
            let grid = linear_grid(RHO_GRID.0, RHO_GRID.1, opts.grid_points);
            let runs: Vec<Result<OptimResult>> = grid
                .par_iter()
                .map(|&rho| {
                    let c = CouplingMatrix::power_law(st, panel.units(), rho)?;
                    let obj = Objective::ee(panel, spec, Some(&c), burn_in)?;
                    maximize_objective(&obj, opts)
                })
                .collect();
            let (best, runs) = pick_best(runs)?;
            let profile = grid
                .iter()
                .zip(&runs)
                .map(|(&v, r)| ProfilePoint {
                    value: v,
                    log_lik: r.value,
                    converged: r.converged,
                })
                .collect();
            let layout = params::layout(
                &model,
                &DataDims::new(panel.units(), panel.n_times(), None),
            )?;
            let cells = included_cells(&panel.to_f64(), burn_in);
            let mut profiled = BTreeMap::new();
            profiled.insert("rho".to_string(), grid[best]);
            build_result(
                &model,
                &layout,
                burn_in,
                &cells,
                runs[best].clone(),
                profiled,
                profile,
            )
        }
        Some(CouplingSpec::PowerLaw {
            rho: Profiled::Fixed(rho),
        }) => {
            let c = CouplingMatrix::power_law(st.expect("required above"), panel.units(), rho)?;
            single_ee(panel, spec, &model, Some(&c), burn_in, opts)
        }
        Some(CouplingSpec::AdjacencyLag1) => {
            let c = CouplingMatrix::adjacency_lag1(st.expect("required above"), panel.units())?;
            single_ee(panel, spec, &model, Some(&c), burn_in, opts)
        }
        None => single_ee(panel, spec, &model, None, burn_in, opts),
    }
}

fn single_ee(
    panel: &CountPanel,
    spec: &EeSpec,
    model: &ModelSpec,
    coupling: Option<&CouplingMatrix>,
    burn_in: usize,
    opts: &FitOptions,
) -> Result<FitResult> {
    let obj = Objective::ee(panel, spec, coupling, burn_in)?;
    let opt = maximize_objective(&obj, opts)?;
    let cells = included_cells(obj.counts(), burn_in);
    build_result(
        model,
        obj.layout(),
        burn_in,
        &cells,
        opt,
        BTreeMap::new(),
        Vec::new(),
    )
}

fn fit_gravity(
    panel: &CountPanel,
    structure: Option<&SpatialStructure>,
    cube: Option<&CovariateCube>,
    spec: &GravitySpec,
    opts: &FitOptions,
) -> Result<FitResult> {
    spec.validate()?;
    let model = ModelSpec::Gravity(spec.clone());
    match spec.gravity.as_ref().map(|g| g.alpha) {
        Some(Profiled::Profile) => {
            let grid = log_grid(ALPHA_GRID.0, ALPHA_GRID.1, opts.grid_points);
            let runs: Vec<Result<OptimResult>> = grid
                .par_iter()
                .map(|&alpha| {
                    let obj = Objective::gravity(panel, spec, structure, cube, Some(alpha))?;
                    maximize_objective(&obj, opts)
                })
                .collect();
            let (best, runs) = pick_best(runs)?;
            let profile = grid
                .iter()
                .zip(&runs)
                .map(|(&v, r)| ProfilePoint {
                    value: v,
                    log_lik: r.value,
                    converged: r.converged,
                })
                .collect();
            let layout = params::layout(
                &model,
                &DataDims::new(panel.units(), panel.n_times(), structure),
            )?;
            let cells = included_cells(&panel.to_f64(), 0);
            let mut profiled = BTreeMap::new();
            profiled.insert("alpha".to_string(), grid[best]);
            build_result(
                &model,
                &layout,
                0,
                &cells,
                runs[best].clone(),
                profiled,
                profile,
            )
        }
        Some(Profiled::Fixed(alpha)) => {
            single_gravity(panel, spec, &model, structure, cube, Some(alpha), opts)
        }
        None => single_gravity(panel, spec, &model, structure, cube, None, opts),
    }
}

#[allow(clippy::too_many_arguments)]
fn single_gravity(
    panel: &CountPanel,
    spec: &GravitySpec,
    model: &ModelSpec,
    structure: Option<&SpatialStructure>,
    cube: Option<&CovariateCube>,
    alpha: Option<f64>,
    opts: &FitOptions,
) -> Result<FitResult> {
    let obj = Objective::gravity(panel, spec, structure, cube, alpha)?;
    let opt = maximize_objective(&obj, opts)?;
    let cells = included_cells(obj.counts(), 0);
    build_result(
        model,
        obj.layout(),
        0,
        &cells,
        opt,
        BTreeMap::new(),
        Vec::new(),
    )
}
