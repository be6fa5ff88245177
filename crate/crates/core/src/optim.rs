//! Thin wrappers over argmin for the 1-D and small N-D minimizations used
//! by the fits.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::goldensectionsearch::GoldenSectionSearch;
use argmin::solver::neldermead::NelderMead;

use crate::error::{Error, Result};

struct Scalar<F>(F);

impl<F: Fn(f64) -> f64> CostFunction for Scalar<F> {
    type Param = f64;
    type Output = f64;
    fn cost(&self, x: &f64) -> std::result::Result<f64, argmin::core::Error> {
        Ok((self.0)(*x))
    }
}

struct Multi<F>(F);

impl<F: Fn(&[f64]) -> f64> CostFunction for Multi<F> {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, x: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        Ok((self.0)(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum1 {
    pub x: f64,
    pub value: f64,
}

/// Golden-section search on [lo, hi], started from the best point of a
/// coarse scan so multimodal costs do not trap it.
pub fn minimize_scalar(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64, scan_points: usize) -> Result<Minimum1> {
    if !(hi > lo) {
        return Err(Error::InvalidArgument(format!("empty bracket [{lo}, {hi}]")));
    }
    let n = scan_points.max(3);
    let h = (hi - lo) / (n - 1) as f64;
    let (mut k_best, mut v_best) = (0, f64::INFINITY);
    for k in 0..n {
        let v = f(lo + k as f64 * h);
        if v < v_best {
            k_best = k;
            v_best = v;
        }
    }
    let a = (lo + (k_best as f64 - 1.0) * h).max(lo);
    let b = (lo + (k_best as f64 + 1.0) * h).min(hi);
    let x0 = lo + k_best as f64 * h;
    // argmin's tolerance is relative to the bracket; convert from absolute
    let rel = (tol / (b - a)).clamp(1e-12, 0.5);
    let solver = GoldenSectionSearch::new(a, b)
        .and_then(|s| s.with_tolerance(rel))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let x_init = x0.clamp(a + 1e-3 * (b - a), b - 1e-3 * (b - a));
    let res = Executor::new(Scalar(&f), solver)
        .configure(|s| s.param(x_init).max_iters(500))
        .run()
        .map_err(|e| Error::NonConvergence { iterations: 500, what: e.to_string() })?;
    let x = *res.state().get_best_param().unwrap_or(&x0);
    let value = f(x);
    if value <= v_best {
        Ok(Minimum1 { x, value })
    } else {
        Ok(Minimum1 { x: x0, value: v_best })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimumN {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: u64,
    pub converged: bool,
}

/// Nelder–Mead from `x0` with initial simplex steps `step`. Box
/// constraints are imposed by clamping inside the cost.
pub fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    step: &[f64],
    bounds: &[(f64, f64)],
    tol: f64,
    max_iters: u64,
) -> Result<MinimumN> {
    if x0.len() != step.len() || x0.len() != bounds.len() || x0.is_empty() {
        return Err(Error::DimensionMismatch("x0, step and bounds must share a nonzero length".into()));
    }
    let clamp = |x: &[f64]| -> Vec<f64> { x.iter().zip(bounds).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect() };
    let cost = |x: &[f64]| f(&clamp(x));
    let mut simplex = vec![clamp(x0)];
    for i in 0..x0.len() {
        let mut v = clamp(x0);
        v[i] += step[i];
        if v[i] > bounds[i].1 {
            v[i] -= 2.0 * step[i];
        }
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(tol)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let res = Executor::new(Multi(&cost), solver)
        .configure(|s| s.max_iters(max_iters))
        .run()
        .map_err(|e| Error::NonConvergence { iterations: max_iters as usize, what: e.to_string() })?;
    let state = res.state();
    let x = clamp(state.get_best_param().ok_or_else(|| Error::NonConvergence {
        iterations: max_iters as usize,
        what: "Nelder–Mead returned no point".into(),
    })?);
    let iterations = state.get_iter();
    Ok(MinimumN { value: f(&x), x, iterations, converged: iterations < max_iters })
}
