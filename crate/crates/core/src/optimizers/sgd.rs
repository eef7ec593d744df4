//! Plain stochastic (proximal) gradient descent with a per-pass decaying step.

use std::time::Instant;

use super::vr::diverged;
use super::{
    apply_step, DivergenceGuard, EpochResult, IndexStream, NoObserver, Observer, OptimizerSpec, OutputChoice,
    RunLog, SeededIndices,
};
use crate::error::Result;
use crate::objective::CompositeObjective;

/// `η_k = η₀ / (1 + ⌊k·b/n⌋)`: constant within each pass over the data.
pub fn sgd_step_size(eta0: f64, k: usize, n: usize, b: usize) -> f64 {
    eta0 / (1.0 + ((k * b) / n) as f64)
}

pub fn run_sgd(obj: &CompositeObjective, spec: &OptimizerSpec) -> Result<RunLog> {
    run_sgd_with(obj, spec, &mut SeededIndices::new(spec.seed), &mut NoObserver)
}

/// Each logged epoch is `m` steps; the recorded point is the current iterate.
pub(super) fn run_sgd_with(
    obj: &CompositeObjective,
    spec: &OptimizerSpec,
    indices: &mut dyn IndexStream,
    observer: &mut dyn Observer,
) -> Result<RunLog> {
    let r = spec.validate(obj)?;
    let eta0 = r.eta.expect("SGD has an explicit step size");
    let (n, d, m, b) = (obj.n(), obj.dim(), r.m, spec.batch);
    let data = obj.data();
    let lam = obj.folded_lambda();

    let initial_objective = obj.value(&r.x0);
    let guard = DivergenceGuard::new(initial_objective);
    let mut x = r.x0;
    let mut g = vec![0.0; d];
    let mut batch = Vec::with_capacity(b);
    let mut epochs = Vec::with_capacity(spec.epochs);
    let mut step = 0usize;
    let inv_b = 1.0 / b as f64;

    for s in 1..=spec.epochs {
        let started = Instant::now();
        let mut eta = eta0;
        for k in 0..m {
            eta = sgd_step_size(eta0, step, n, b);
            indices.next_batch(n, b, &mut batch);
            g.iter_mut().for_each(|v| *v = 0.0);
            for &i in &batch {
                data.row(i).axpy_into(obj.margin_derivative(i, &x) * inv_b, &mut g);
            }
            if lam != 0.0 {
                for (gj, xj) in g.iter_mut().zip(&x) {
                    *gj += lam * xj;
                }
            }
            apply_step(obj, r.mode, eta, &g, &mut x)?;
            step += 1;
            observer.inner(s, k + 1, &x);
        }
        let objective = obj.value(&x);
        epochs.push(EpochResult {
            epoch: s,
            x_end: x.clone(),
            x_snapshot: x.clone(),
            objective,
            passes_consumed: (m * b) as f64 / n as f64,
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
