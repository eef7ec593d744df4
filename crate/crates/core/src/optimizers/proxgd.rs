//! Full-batch proximal gradient descent, used as the reference solver.

use std::time::Instant;

use super::vr::diverged;
use super::{DivergenceGuard, EpochResult, Observer, OptimizerSpec, OutputChoice, RunLog};
use crate::error::{Error, Result};
use crate::objective::CompositeObjective;

#[derive(Clone, Debug, PartialEq)]
pub struct ProxGdResult {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Gradient-mapping norm at `x_star`.
    pub residual: f64,
    /// `F` at every iterate, starting with the initial point.
    pub history: Vec<f64>,
}

fn prox_grad_step(obj: &CompositeObjective, eta: f64, x: &[f64]) -> Result<Vec<f64>> {
    let g = obj.full_grad(x);
    let mut y: Vec<f64> = x.iter().zip(&g).map(|(xj, gj)| xj - eta * gj).collect();
    obj.prox_reg().prox_in_place(eta, &mut y)?;
    Ok(y)
}

/// Iterates `x ← prox_{η,g}(x − η∇f(x))` from the origin until the gradient
/// mapping norm drops to `tol`. On hitting `max_iters` the lowest-objective
/// iterate is returned with `converged = false`.
pub fn run_full_proxgd(obj: &CompositeObjective, eta: f64, tol: f64, max_iters: usize) -> Result<ProxGdResult> {
    run_full_proxgd_from(obj, vec![0.0; obj.dim()], eta, tol, max_iters)
}

pub fn run_full_proxgd_from(
    obj: &CompositeObjective,
    x0: Vec<f64>,
    eta: f64,
    tol: f64,
    max_iters: usize,
) -> Result<ProxGdResult> {
    let l = obj.lipschitz()?.l;
    if !(eta > 0.0 && eta <= (1.0 + 1e-12) / l) {
        return Err(Error::config(format!("proximal gradient needs 0 < eta <= 1/L = {}, got {eta}", 1.0 / l)));
    }
    if !(tol > 0.0) {
        return Err(Error::config("tolerance must be positive"));
    }
    let mut x = x0;
    let mut f = obj.value(&x);
    let mut history = vec![f];
    let mut best = (x.clone(), f);
    for it in 0..=max_iters {
        let y = prox_grad_step(obj, eta, &x)?;
        let residual = x.iter().zip(&y).map(|(a, b)| ((a - b) / eta).powi(2)).sum::<f64>().sqrt();
        if residual <= tol {
            return Ok(ProxGdResult { x_star: x, f_star: f, converged: true, iterations: it, residual, history });
        }
        if it == max_iters {
            break;
        }
        x = y;
        f = obj.value(&x);
        history.push(f);
        if f < best.1 {
            best = (x.clone(), f);
        }
    }
    let residual = obj.gradient_mapping_norm(&best.0, eta)?;
    Ok(ProxGdResult {
        x_star: best.0,
        f_star: best.1,
        converged: false,
        iterations: max_iters,
        residual,
        history,
    })
}

/// Full proximal gradient as a traced optimizer: one iteration per epoch.
pub(super) fn run_proxgd_epochs(
    obj: &CompositeObjective,
    spec: &OptimizerSpec,
    observer: &mut dyn Observer,
) -> Result<RunLog> {
    let r = spec.validate(obj)?;
    let eta = r.eta.expect("full proximal gradient has an explicit step size");
    let initial_objective = obj.value(&r.x0);
    let guard = DivergenceGuard::new(initial_objective);
    let mut x = r.x0;
    let mut epochs = Vec::with_capacity(spec.epochs);
    for s in 1..=spec.epochs {
        let started = Instant::now();
        x = prox_grad_step(obj, eta, &x)?;
        observer.inner(s, 1, &x);
        let objective = obj.value(&x);
        epochs.push(EpochResult {
            epoch: s,
            x_end: x.clone(),
            x_snapshot: x.clone(),
            objective,
            passes_consumed: 1.0,
            step_size: eta,
            wall_time: started.elapsed().as_secs_f64(),
        });
        if !guard.check(objective) {
            epochs.pop();
            return Err(diverged(spec.algo, initial_objective, epochs, s));
        }
    }
    let output_objective = epochs.last().expect("at least one epoch").objective;
    Ok(RunLog {
        algo: spec.algo,
        initial_objective,
        epochs,
        output: x,
        output_objective,
        output_choice: OutputChoice::LastIterate,
        candidates: None,
    })
}
