//! Experiment orchestration: reference optima, convergence traces, learning
//! rate sweeps and their file formats.
//!
//! Trace CSV:
//!
//! ```text
//! epoch,passes,wall_s,objective,gap
//! 1,3.0000000000000000e0,1.2e-3,...
//! ```
//!
//! `passes` and `wall_s` are cumulative; `objective` and `gap` are measured at
//! the epoch's snapshot. The objective evaluation is timed but not charged as a
//! pass.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimator::{variance_diag, SnapshotContext, VarianceDiag};
use crate::objective::{CompositeObjective, LossKind};
use crate::optimizers::{
    self, run_full_proxgd, Algo, EpochLength, OptimizerSpec, OutputChoice, RunLog, StepSize, UpdateMode,
};
use crate::parallel::{map_items, Exec};

/// Gaps in `[-GAP_CLAMP, 0)` are reported as zero.
pub const GAP_CLAMP: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub epoch: usize,
    pub passes: f64,
    pub wall_s: f64,
    pub objective: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub algo: Algo,
    /// Step size of the first epoch.
    pub eta: f64,
    pub seed: u64,
    pub records: Vec<TraceRecord>,
    pub final_point: Vec<f64>,
    pub final_objective: f64,
    pub output_choice: OutputChoice,
    pub candidates: Option<(f64, f64)>,
    pub diverged: bool,
}

impl Trace {
    pub fn from_log(log: &RunLog, f_star: f64, seed: u64, diverged: bool) -> Self {
        let mut passes = 0.0;
        let mut wall = 0.0;
        let records = log
            .epochs
            .iter()
            .map(|e| {
                passes += e.passes_consumed;
                wall += e.wall_time;
                let mut gap = e.objective - f_star;
                if (-GAP_CLAMP..0.0).contains(&gap) {
                    gap = 0.0;
                }
                TraceRecord { epoch: e.epoch, passes, wall_s: wall, objective: e.objective, gap }
            })
            .collect();
        Trace {
            algo: log.algo,
            eta: log.epochs.first().map_or(f64::NAN, |e| e.step_size),
            seed,
            records,
            final_point: log.output.clone(),
            final_objective: log.output_objective,
            output_choice: log.output_choice,
            candidates: log.candidates,
            diverged,
        }
    }

    /// Cumulative passes at the first epoch whose gap is at most `threshold`.
    pub fn passes_to_gap(&self, threshold: f64) -> Option<f64> {
        self.records.iter().find(|r| r.gap <= threshold).map(|r| r.passes)
    }

    /// First epoch whose gap is at most `threshold`.
    pub fn epochs_to_gap(&self, threshold: f64) -> Option<usize> {
        self.records.iter().find(|r| r.gap <= threshold).map(|r| r.epoch)
    }

    pub fn file_name(&self) -> String {
        trace_file_name(self.algo, self.eta, self.seed)
    }

    /// Writes the CSV. With `include_wall_time = false` the `wall_s` column is
    /// all zeros so that repeated runs produce identical bytes.
    pub fn write_csv<W: Write>(&self, mut out: W, include_wall_time: bool) -> io::Result<()> {
        writeln!(out, "epoch,passes,wall_s,objective,gap")?;
        for r in &self.records {
            let wall = if include_wall_time { r.wall_s } else { 0.0 };
            writeln!(out, "{},{:.16e},{:.16e},{:.16e},{:.16e}", r.epoch, r.passes, wall, r.objective, r.gap)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self, include_wall_time: bool) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, include_wall_time).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn save_csv(&self, path: &Path, include_wall_time: bool) -> Result<()> {
        let file = fs::File::create(path)?;
        let mut w = io::BufWriter::new(file);
        self.write_csv(&mut w, include_wall_time)?;
        w.flush()?;
        Ok(())
    }
}

pub fn trace_file_name(algo: Algo, eta: f64, seed: u64) -> String {
    format!("{algo}_{eta}_{seed}.csv")
}

pub fn read_trace_csv<R: BufRead>(input: R) -> Result<Vec<TraceRecord>> {
    let mut lines = input.lines();
    let header = lines.next().ok_or(Error::EmptyDataset)??;
    if header.trim() != "epoch,passes,wall_s,objective,gap" {
        return Err(Error::Parse { line: 1, msg: format!("unexpected header `{header}`") });
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Parse { line: k + 2, msg: msg.to_string() };
        let cols: Vec<&str> = line.trim().split(',').collect();
        if cols.len() != 5 {
            return Err(bad("expected 5 columns"));
        }
        let f = |s: &str| s.parse::<f64>().map_err(|_| bad("malformed number"));
        out.push(TraceRecord {
            epoch: cols[0].parse().map_err(|_| bad("malformed epoch"))?,
            passes: f(cols[1])?,
            wall_s: f(cols[2])?,
            objective: f(cols[3])?,
            gap: f(cols[4])?,
        });
    }
    Ok(out)
}

/// Runs `spec` and records the snapshot objective and gap at every epoch. A
/// divergent run yields a truncated trace flagged `diverged`.
pub fn run_experiment(obj: &CompositeObjective, spec: &OptimizerSpec, reference: &ReferenceSolution) -> Result<Trace> {
    if spec.epochs == 0 {
        return Err(Error::config("a trace needs at least one epoch"));
    }
    match optimizers::run(obj, spec) {
        Ok(log) => Ok(Trace::from_log(&log, reference.f_star, spec.seed, false)),
        Err(Error::Diverged { partial, .. }) => {
            let mut t = Trace::from_log(&partial, reference.f_star, spec.seed, true);
            if t.records.is_empty() {
                let l = obj.lipschitz()?.l;
                t.eta = spec.eta.resolve(spec.algo, l).unwrap_or(f64::NAN);
            }
            Ok(t)
        }
        Err(e) => Err(e),
    }
}

/// One trace per step size, all sharing `base.seed` and `reference`.
pub fn sweep_learning_rates(
    obj: &CompositeObjective,
    base: &OptimizerSpec,
    etas: &[StepSize],
    reference: &ReferenceSolution,
    exec: Exec,
) -> Result<Vec<Trace>> {
    if etas.is_empty() {
        return Err(Error::config("sweep needs at least one step size"));
    }
    let specs: Vec<OptimizerSpec> = etas.iter().map(|&eta| OptimizerSpec { eta, ..base.clone() }).collect();
    map_items(exec, specs, |spec| run_experiment(obj, &spec, reference)).into_iter().collect()
}

/// Estimator variance for each batch size at the pair `(x, x̃)`.
pub fn variance_table(
    obj: &CompositeObjective,
    x_tilde: &[f64],
    x: &[f64],
    batches: &[usize],
    f_star: f64,
    seed: u64,
) -> Result<Vec<VarianceDiag>> {
    let ctx = SnapshotContext::new(obj, x_tilde.to_vec());
    batches.iter().map(|&b| variance_diag(obj, &ctx, x, b, f_star, seed)).collect()
}

/// Columns `b,delta_b,empirical_mse,bound,std_err`; `std_err` is zero for
/// exhaustive rows.
pub fn write_variance_csv<W: Write>(rows: &[VarianceDiag], mut out: W) -> io::Result<()> {
    writeln!(out, "b,delta_b,empirical_mse,bound,std_err")?;
    for r in rows {
        writeln!(out, "{},{:.16e},{:.16e},{:.16e},{:.16e}", r.b, r.delta_b, r.empirical_mse, r.bound, r.std_err)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReferenceMethod {
    FullProxGd,
    LongVrsgd,
    File,
}

impl ReferenceMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ReferenceMethod::FullProxGd => "full_proxgd",
            ReferenceMethod::LongVrsgd => "long_vrsgd",
            ReferenceMethod::File => "file",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSolution {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub method: ReferenceMethod,
    /// Gradient-mapping norm at `x_star` with step `1/L`.
    pub residual: f64,
    pub hash: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceConfig {
    pub tol: f64,
    pub max_iters: usize,
    /// VR-SGD epochs at `η = 1/(10L)` run as the second, independent solver.
    pub refine_epochs: usize,
    pub refine_seed: u64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig { tol: 1e-12, max_iters: 200_000, refine_epochs: 100, refine_seed: 0 }
    }
}

/// SHA-256 over the dataset contents and the objective definition.
pub fn content_hash(obj: &CompositeObjective) -> String {
    let mut h = Sha256::new();
    h.update(b"vropt-reference-v1");
    let ds = obj.data();
    h.update((ds.n() as u64).to_le_bytes());
    h.update((ds.dim() as u64).to_le_bytes());
    for (row, label) in ds.rows().iter().zip(ds.labels()) {
        h.update((row.nnz() as u64).to_le_bytes());
        for (j, v) in row.iter() {
            h.update((j as u64).to_le_bytes());
            h.update(v.to_bits().to_le_bytes());
        }
        h.update(label.to_bits().to_le_bytes());
    }
    h.update([match obj.loss() {
        LossKind::Logistic => 0u8,
        LossKind::Squared => 1u8,
    }]);
    let reg = obj.regularizer();
    h.update(reg.lambda1.to_bits().to_le_bytes());
    h.update(reg.lambda2.to_bits().to_le_bytes());
    h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

/// Minimum of full proximal gradient (to `tol`) and a long VR-SGD run that is
/// then polished by proximal gradient. With `cache`, a stored solution whose
/// hash matches is returned as is and a mismatch triggers recomputation.
pub fn compute_reference(
    obj: &CompositeObjective,
    config: &ReferenceConfig,
    cache: Option<&Path>,
) -> Result<ReferenceSolution> {
    if !(config.tol > 0.0) {
        return Err(Error::config("reference tolerance must be positive"));
    }
    let hash = content_hash(obj);
    if let Some(path) = cache {
        if path.exists() {
            match load_reference(path) {
                Ok(r) if r.hash == hash && r.x_star.len() == obj.dim() => return Ok(r),
                Ok(_) => log::info!("reference cache {} is stale; recomputing", path.display()),
                Err(e) => log::warn!("ignoring unreadable reference cache {}: {e}", path.display()),
            }
        }
    }

    let l = obj.lipschitz()?.l;
    let eta = 1.0 / l;
    let gd = run_full_proxgd(obj, eta, config.tol, config.max_iters)?;
    if !gd.converged {
        return Err(Error::NotConverged { iters: gd.iterations, residual: gd.residual });
    }
    let mut best = ReferenceSolution {
        x_star: gd.x_star,
        f_star: gd.f_star,
        method: ReferenceMethod::FullProxGd,
        residual: gd.residual,
        hash,
    };

    if config.refine_epochs > 0 {
        let mode = if obj.regularizer().lambda2 == 0.0 { UpdateMode::SmoothGradient } else { UpdateMode::Proximal };
        let spec = OptimizerSpec::new(Algo::VrsgdI)
            .eta(StepSize::OverL(0.1))
            .epoch_length(EpochLength::TwiceN)
            .epochs(config.refine_epochs)
            .seed(config.refine_seed)
            .mode(mode);
        match optimizers::run(obj, &spec) {
            Ok(log) => {
                let polished =
                    optimizers::run_full_proxgd_from(obj, log.output, eta, config.tol, config.max_iters)?;
                if polished.converged && polished.f_star < best.f_star {
                    best.x_star = polished.x_star;
                    best.f_star = polished.f_star;
                    best.residual = polished.residual;
                    best.method = ReferenceMethod::LongVrsgd;
                }
            }
            Err(Error::Diverged { epoch, .. }) => log::warn!("reference refinement diverged at epoch {epoch}"),
            Err(e) => return Err(e),
        }
    }

    if let Some(path) = cache {
        save_reference(&best, path)?;
    }
    Ok(best)
}

/// Plain-text cache: `key value` lines followed by one `x_star` entry per line.
pub fn save_reference(r: &ReferenceSolution, path: &Path) -> Result<()> {
    let mut s = String::new();
    writeln!(s, "# vropt reference solution").unwrap();
    writeln!(s, "hash {}", r.hash).unwrap();
    writeln!(s, "method {}", r.method.as_str()).unwrap();
    writeln!(s, "f_star {:?}", r.f_star).unwrap();
    writeln!(s, "residual {:?}", r.residual).unwrap();
    writeln!(s, "dim {}", r.x_star.len()).unwrap();
    writeln!(s, "x_star").unwrap();
    for v in &r.x_star {
        writeln!(s, "{v:?}").unwrap();
    }
    let tmp: PathBuf = path.with_extension("tmp");
    fs::write(&tmp, s)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Loads a cache written by [`save_reference`]; the method becomes `File`.
pub fn load_reference(path: &Path) -> Result<ReferenceSolution> {
    let text = fs::read_to_string(path)?;
    let bad = |msg: String| Error::Cache(format!("{}: {msg}", path.display()));
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let mut field = |key: &str| -> Result<String> {
        let line = lines.next().ok_or_else(|| bad(format!("missing `{key}`")))?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.trim().to_string()),
            _ => Err(bad(format!("expected `{key}`, found `{line}`"))),
        }
    };
    let hash = field("hash")?;
    let _method = field("method")?;
    let num = |s: String| s.parse::<f64>().map_err(|_| bad(format!("malformed number `{s}`")));
    let f_star = num(field("f_star")?)?;
    let residual = num(field("residual")?)?;
    let dim: usize = field("dim")?.parse().map_err(|_| bad("malformed dim".into()))?;
    match lines.next() {
        Some("x_star") => {}
        other => return Err(bad(format!("expected `x_star`, found {other:?}"))),
    }
    let x_star = lines
        .by_ref()
        .take(dim)
        .map(|l| l.trim().parse::<f64>().map_err(|_| bad(format!("malformed entry `{l}`"))))
        .collect::<Result<Vec<_>>>()?;
    if x_star.len() != dim {
        return Err(bad(format!("expected {dim} entries, found {}", x_star.len())));
    }
    Ok(ReferenceSolution { x_star, f_star, method: ReferenceMethod::File, residual, hash })
}
