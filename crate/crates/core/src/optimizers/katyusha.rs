//! Katyusha with negative momentum. Each inner step couples three sequences:
//!
//! ```text
//! x_{k+1} = w1·y_k + w2·x̃ + (1 − w1 − w2)·z_k
//! y_{k+1} = prox_{η,g}(y_k − η ṽ)               (mirror step, η = 1/(3·w1·L))
//! z_{k+1} = prox_{1/(3L),g}(x_{k+1} − ṽ/(3L))   (gradient step)
//! ```
//!
//! with `ṽ` the variance-reduced gradient at `x_{k+1}`. `katyusha-i` replaces
//! both proximal maps by plain steps on `ṽ + ∇g(x_{k+1})`. The snapshot is the
//! uniform mean of the epoch's `z` iterates; `y` and `z` carry over between
//! epochs.

use std::time::Instant;

use super::vr::diverged;
use super::{
    add_into, mean_of, vr_epoch_passes, DivergenceGuard, EpochResult, IndexStream, NoObserver, Observer,
    OptimizerSpec, OutputChoice, RunLog, SeededIndices, UpdateMode,
};
use crate::error::{Error, Result};
use crate::estimator::{estimate_into, SnapshotContext};
use crate::objective::CompositeObjective;

pub const KATYUSHA_W2: f64 = 0.5;

/// `min(√(m·μ/(3L)), 1/2)` when `μ > 0`, else `2/(s+4)` for epoch `s`.
pub fn katyusha_w1(m: usize, mu: f64, l: f64, s: usize) -> f64 {
    if mu > 0.0 {
        (m as f64 * mu / (3.0 * l)).sqrt().min(0.5)
    } else {
        2.0 / (s as f64 + 4.0)
    }
}

pub fn run_katyusha(obj: &CompositeObjective, spec: &OptimizerSpec) -> Result<RunLog> {
    run_katyusha_with(obj, spec, &mut SeededIndices::new(spec.seed), &mut NoObserver)
}

pub(super) fn run_katyusha_with(
    obj: &CompositeObjective,
    spec: &OptimizerSpec,
    indices: &mut dyn IndexStream,
    observer: &mut dyn Observer,
) -> Result<RunLog> {
    if !spec.algo.is_katyusha() {
        return Err(Error::config(format!("{} is not a Katyusha variant", spec.algo)));
    }
    let r = spec.validate(obj)?;
    let (n, d, m, b) = (obj.n(), obj.dim(), r.m, spec.batch);
    let l = r.lipschitz;
    let mu = obj.strong_convexity();
    let reg = obj.prox_reg();

    let initial_objective = obj.value(&r.x0);
    let guard = DivergenceGuard::new(initial_objective);
    let mut x_tilde = r.x0.clone();
    let mut y = r.x0.clone();
    let mut z = r.x0;
    let mut x = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut z_sum = vec![0.0; d];
    let mut batch = Vec::with_capacity(b);
    let mut epochs = Vec::with_capacity(spec.epochs);
    let grad_step = 1.0 / (3.0 * l);

    for s in 1..=spec.epochs {
        let started = Instant::now();
        let w1 = katyusha_w1(m, mu, l, s);
        let w2 = KATYUSHA_W2;
        if w1 + w2 > 1.0 {
            return Err(Error::config(format!("momentum weights w1 + w2 = {} exceed 1", w1 + w2)));
        }
        let w3 = 1.0 - w1 - w2;
        let eta = r.eta.unwrap_or(1.0 / (3.0 * w1 * l));
        let ctx = SnapshotContext::new(obj, x_tilde);
        z_sum.iter_mut().for_each(|a| *a = 0.0);

        for k in 0..m {
            for j in 0..d {
                x[j] = w1 * y[j] + w2 * ctx.x_tilde()[j] + w3 * z[j];
            }
            debug_assert!((0..d).all(|j| {
                let resid = x[j] - w1 * y[j] - w2 * ctx.x_tilde()[j] - w3 * z[j];
                resid.abs() <= 1e-12 * (1.0 + x[j].abs())
            }));
            indices.next_batch(n, b, &mut batch);
            estimate_into(obj, &ctx, &batch, &x, &mut v);
            match r.mode {
                UpdateMode::Proximal => {
                    for j in 0..d {
                        y[j] -= eta * v[j];
                        z[j] = x[j] - grad_step * v[j];
                    }
                    reg.prox_in_place(eta, &mut y)?;
                    reg.prox_in_place(grad_step, &mut z)?;
                }
                UpdateMode::SmoothGradient => {
                    for j in 0..d {
                        let g = v[j] + reg.lambda1 * x[j];
                        y[j] -= eta * g;
                        z[j] = x[j] - grad_step * g;
                    }
                }
            }
            add_into(&mut z_sum, &z);
            observer.inner(s, k + 1, &z);
        }

        x_tilde = mean_of(&z_sum, m);
        let objective = obj.value(&x_tilde);
        epochs.push(EpochResult {
            epoch: s,
            x_end: z.clone(),
            x_snapshot: x_tilde.clone(),
            objective,
            passes_consumed: vr_epoch_passes(m, b, n),
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
        output: x_tilde,
        output_objective,
        output_choice: OutputChoice::LastSnapshot,
        candidates: None,
    })
}
