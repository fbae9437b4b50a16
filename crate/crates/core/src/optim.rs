//! Limited-memory quasi-Newton maximizer with a weak Wolfe line search. The
//! objective closure returns the value and its exact gradient; trial points
//! where the objective is non-finite are rejected by shrinking the step, so
//! the line search walks back from overflow regions on its own.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct OptimOptions {
    pub max_iters: usize,
    /// Convergence threshold on the gradient max-norm.
    pub grad_tol: f64,
    /// Number of curvature pairs kept.
    pub memory: usize,
    pub armijo_c1: f64,
    /// Weak Wolfe curvature constant.
    pub wolfe_c2: f64,
    /// Trial evaluations allowed per line search.
    pub max_line_steps: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            max_iters: 500,
            grad_tol: 1e-6,
            memory: 20,
            armijo_c1: 1e-4,
            wolfe_c2: 0.9,
            max_line_steps: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    /// Gradient max-norm at the returned point.
    pub grad_norm: f64,
    /// Accepted quasi-Newton steps.
    pub iterations: usize,
    pub converged: bool,
    /// Times the curvature memory was discarded and the search fell back to
    /// plain gradient ascent.
    pub fallback_steps: usize,
}

pub fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

enum Trial {
    Value(f64, Vec<f64>),
    Rejected,
}

fn try_eval<F>(fg: &F, x: &[f64]) -> Result<Trial>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    match fg(x) {
        Ok((v, g)) if v.is_finite() && g.iter().all(|c| c.is_finite()) => Ok(Trial::Value(v, g)),
        Ok(_) => Ok(Trial::Rejected),
        // Constraint violations come from extreme trial points, e.g. a step
        // long enough to overflow a log-scale parameter; shrinking the step
        // recovers, so they are infeasible trials rather than hard errors.
        Err(Error::NonFiniteObjective(_) | Error::Constraint { .. }) => Ok(Trial::Rejected),
        Err(e) => Err(e),
    }
}

/// Two-loop recursion: descent direction -H g for the minimization problem.
fn two_loop(
    g: &[f64],
    s_hist: &VecDeque<Vec<f64>>,
    y_hist: &VecDeque<Vec<f64>>,
    rho_hist: &VecDeque<f64>,
) -> Vec<f64> {
    let mut q = g.to_vec();
    let k = s_hist.len();
    let mut alpha = vec![0.0; k];
    for i in (0..k).rev() {
        alpha[i] = rho_hist[i] * dot(&s_hist[i], &q);
        for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
            *qj -= alpha[i] * yj;
        }
    }
    if k > 0 {
        let gamma = dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1]);
        for qj in q.iter_mut() {
            *qj *= gamma;
        }
    }
    for i in 0..k {
        let beta = rho_hist[i] * dot(&y_hist[i], &q);
        for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
            *qj += (alpha[i] - beta) * sj;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Maximize fg over an unconstrained vector starting from x0.
pub fn maximize<F>(fg: F, x0: &[f64], opts: &OptimOptions) -> Result<OptimResult>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut x = x0.to_vec();
    let (mut fmin, mut gmin) = match try_eval(&fg, &x)? {
        Trial::Value(v, g) => (-v, g.iter().map(|c| -c).collect::<Vec<f64>>()),
        Trial::Rejected => {
            return Err(Error::NonFiniteObjective(
                "objective is not finite at the starting point".into(),
            ))
        }
    };
    let mut s_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut y_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut rho_hist: VecDeque<f64> = VecDeque::new();
    let mut iterations = 0;
    let mut fallback_steps = 0;
    let mut converged = max_norm(&gmin) <= opts.grad_tol;
    while !converged && iterations < opts.max_iters {
        let mut d = two_loop(&gmin, &s_hist, &y_hist, &rho_hist);
        let mut slope = dot(&d, &gmin);
        if slope.is_nan() || slope >= 0.0 || d.iter().any(|v| !v.is_finite()) {
            if !s_hist.is_empty() {
                fallback_steps += 1;
            }
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            d = gmin.iter().map(|v| -v).collect();
            slope = dot(&d, &gmin);
            if slope.is_nan() || slope >= 0.0 {
                break;
            }
        }
        // Weak Wolfe line search by bisection: expand while the step is too
        // short, bisect once an upper bound exists. Non-finite trials count as
        // Armijo failures, which walks the step back into the finite region.
        let mut lo = 0.0f64;
        let mut hi = f64::INFINITY;
        let mut a = 1.0f64;
        let mut accepted = None;
        for _ in 0..opts.max_line_steps {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + a * di).collect();
            let mut armijo_ok = false;
            if let Trial::Value(v, g) = try_eval(&fg, &xt)? {
                let ft = -v;
                if ft <= fmin + opts.armijo_c1 * a * slope {
                    armijo_ok = true;
                    let dslope: f64 = d.iter().zip(&g).map(|(di, gi)| di * -gi).sum();
                    accepted = Some((xt, ft, g));
                    if dslope >= opts.wolfe_c2 * slope {
                        break;
                    }
                    lo = a;
                }
            }
            if !armijo_ok {
                hi = a;
            }
            a = if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                2.0 * a
            };
            if hi.is_finite() && hi - lo <= 1e-14 * hi.max(1.0) {
                break;
            }
        }
        let Some((xt, ft, gt)) = accepted else {
            if s_hist.is_empty() {
                break;
            }
            fallback_steps += 1;
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            continue;
        };
        iterations += 1;
        let gt_min: Vec<f64> = gt.iter().map(|c| -c).collect();
        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gt_min.iter().zip(&gmin).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-10 * norm2(&s) * norm2(&yv) {
            if s_hist.len() == opts.memory {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
            s_hist.push_back(s);
            y_hist.push_back(yv);
            rho_hist.push_back(1.0 / sy);
        }
        x = xt;
        fmin = ft;
        gmin = gt_min;
        converged = max_norm(&gmin) <= opts.grad_tol;
    }
    Ok(OptimResult {
        x,
        value: -fmin,
        grad_norm: max_norm(&gmin),
        iterations,
        converged,
        fallback_steps,
    })
}
