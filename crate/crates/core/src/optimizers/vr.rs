//! Snapshot-based variance-reduced methods: SVRG (Options I/II), Prox-SVRG and
//! VR-SGD for strongly and non-strongly convex objectives.

use std::time::Instant;

use super::{
    add_into, apply_step, mean_of, vr_epoch_passes, Algo, DivergenceGuard, EpochResult, IndexStream,
    NoObserver, Observer, OptimizerSpec, OutputChoice, RunLog, SeededIndices, SnapshotRule, StartRule,
};
use crate::error::{Error, Result};
use crate::estimator::{estimate_into, SnapshotContext};
use crate::objective::CompositeObjective;

/// `η_s = η₀ / max{α, 2/(s+1)}` for `s ≥ 1`.
pub fn scheduled_step(eta0: f64, alpha: f64, s: usize) -> f64 {
    eta0 / alpha.max(2.0 / (s as f64 + 1.0))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Output {
    /// `x̃^S`
    LastSnapshot,
    /// `x̃^S` or the mean of all snapshots, whichever has lower `F`.
    BestOfSnapshotAndAverage,
}

pub(super) fn run_svrg_with(
    obj: &CompositeObjective,
    spec: &OptimizerSpec,
    indices: &mut dyn IndexStream,
    observer: &mut dyn Observer,
) -> Result<RunLog> {
    if !spec.algo.is_svrg() {
        return Err(Error::config(format!("{} is not an SVRG variant", spec.algo)));
    }
    drive(obj, spec, Output::LastSnapshot, indices, observer)
}

pub(super) fn run_vrsgd_with(
    obj: &CompositeObjective,
    spec: &OptimizerSpec,
    indices: &mut dyn IndexStream,
    observer: &mut dyn Observer,
) -> Result<RunLog> {
    if !spec.algo.is_vrsgd() {
        return Err(Error::config(format!("{} is not a VR-SGD variant", spec.algo)));
    }
    drive(obj, spec, Output::BestOfSnapshotAndAverage, indices, observer)
}

/// SVRG Option I/II or Prox-SVRG, depending on `spec.algo`.
pub fn run_svrg(obj: &CompositeObjective, spec: &OptimizerSpec) -> Result<RunLog> {
    run_svrg_with(obj, spec, &mut SeededIndices::new(spec.seed), &mut NoObserver)
}

/// VR-SGD with a constant step size.
pub fn run_vrsgd_sc(obj: &CompositeObjective, spec: &OptimizerSpec) -> Result<RunLog> {
    if !spec.fixed_lr {
        return Err(Error::config("the strongly convex variant uses a fixed step size"));
    }
    run_vrsgd_with(obj, spec, &mut SeededIndices::new(spec.seed), &mut NoObserver)
}

/// VR-SGD with the optional increasing step schedule.
pub fn run_vrsgd_nsc(obj: &CompositeObjective, spec: &OptimizerSpec) -> Result<RunLog> {
    run_vrsgd_with(obj, spec, &mut SeededIndices::new(spec.seed), &mut NoObserver)
}

fn drive(
    obj: &CompositeObjective,
    spec: &OptimizerSpec,
    output: Output,
    indices: &mut dyn IndexStream,
    observer: &mut dyn Observer,
) -> Result<RunLog> {
    let r = spec.validate(obj)?;
    let (snapshot_rule, start_rule) = spec.algo.rules().expect("snapshot-based method");
    let eta0 = r.eta.expect("SVRG-type methods have an explicit step size");
    let (n, d, m, b) = (obj.n(), obj.dim(), r.m, spec.batch);

    let initial_objective = obj.value(&r.x0);
    let guard = DivergenceGuard::new(initial_objective);
    let mut x_tilde = r.x0.clone();
    let mut x_end = r.x0;
    let mut snapshot_sum = vec![0.0; d];
    let mut epochs = Vec::with_capacity(spec.epochs);

    let mut x = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut avg = vec![0.0; d];
    let mut batch = Vec::with_capacity(b);

    for s in 1..=spec.epochs {
        let started = Instant::now();
        let eta = if spec.fixed_lr { eta0 } else { scheduled_step(eta0, spec.alpha, s) };
        let ctx = SnapshotContext::new(obj, x_tilde);
        x.copy_from_slice(match start_rule {
            StartRule::LastIterate => &x_end,
            StartRule::Snapshot => ctx.x_tilde(),
        });
        avg.iter_mut().for_each(|a| *a = 0.0);

        for k in 0..m {
            indices.next_batch(n, b, &mut batch);
            estimate_into(obj, &ctx, &batch, &x, &mut v);
            apply_step(obj, r.mode, eta, &v, &mut x)?;
            let step = k + 1;
            match snapshot_rule {
                SnapshotRule::FullAverage => add_into(&mut avg, &x),
                SnapshotRule::TailAverage if step < m => add_into(&mut avg, &x),
                _ => {}
            }
            observer.inner(s, step, &x);
        }

        x_end = x.clone();
        x_tilde = match snapshot_rule {
            SnapshotRule::LastIterate => x.clone(),
            SnapshotRule::FullAverage => mean_of(&avg, m),
            SnapshotRule::TailAverage => mean_of(&avg, m - 1),
        };
        let objective = obj.value(&x_tilde);
        add_into(&mut snapshot_sum, &x_tilde);
        epochs.push(EpochResult {
            epoch: s,
            x_end: x_end.clone(),
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

    let last_f = epochs.last().expect("at least one epoch").objective;
    let (out, out_f, choice, candidates) = match output {
        Output::LastSnapshot => (x_tilde, last_f, OutputChoice::LastSnapshot, None),
        Output::BestOfSnapshotAndAverage => {
            let mean = mean_of(&snapshot_sum, spec.epochs);
            let mean_f = obj.value(&mean);
            if last_f <= mean_f {
                (x_tilde, last_f, OutputChoice::LastSnapshot, Some((last_f, mean_f)))
            } else {
                (mean, mean_f, OutputChoice::SnapshotAverage, Some((last_f, mean_f)))
            }
        }
    };
    Ok(RunLog {
        algo: spec.algo,
        initial_objective,
        epochs,
        output: out,
        output_objective: out_f,
        output_choice: choice,
        candidates,
    })
}

pub(super) fn diverged(algo: Algo, initial_objective: f64, epochs: Vec<EpochResult>, epoch: usize) -> Error {
    let (output, output_objective) = match epochs.last() {
        Some(e) => (e.x_snapshot.clone(), e.objective),
        None => (Vec::new(), initial_objective),
    };
    log::warn!("{algo} diverged at epoch {epoch}");
    Error::Diverged {
        epoch,
        partial: Box::new(RunLog {
            algo,
            initial_objective,
            epochs,
            output,
            output_objective,
            output_choice: OutputChoice::LastSnapshot,
            candidates: None,
        }),
    }
}
