//! `vropt`: run, sweep and diagnose variance-reduced optimizers from the shell.
//!
//! Exit codes: 0 on success, 2 on a configuration or input error, 3 when a run
//! diverges (its truncated trace is still written).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vropt::dataset::{normalize_rows, parse_libsvm, synth_classification, synth_regression};
use vropt::harness::{
    compute_reference, run_experiment, sweep_learning_rates, variance_table, write_variance_csv, ReferenceConfig,
};
use vropt::optimizers::{EpochLength, StepSize};
use vropt::{
    Algo, CompositeObjective, Error, Exec, LossKind, OptimizerSpec, Reduction, ReferenceSolution, Regularizer,
    SparseDataset, UpdateMode,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "vropt", version, about = "Variance-reduced stochastic optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one optimizer and write its convergence trace.
    Run {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        opt: OptimizerArgs,
        /// Trace CSV path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        zero_wall_time: bool,
    },
    /// Run one optimizer over several step sizes; writes one trace per step.
    Sweep {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        opt: OptimizerArgs,
        /// Comma-separated step sizes (numbers or c/L).
        #[arg(long, value_delimiter = ',', required = true)]
        etas: Vec<String>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        zero_wall_time: bool,
    },
    /// Tabulate the estimator variance against its bound for several batch sizes.
    Variance {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Comma-separated batch sizes; `n` means the full batch.
        #[arg(long = "b", value_delimiter = ',', required = true)]
        batches: Vec<String>,
        /// Epochs of VR-SGD from the snapshot used to produce the probe point x.
        #[arg(long, default_value_t = 1)]
        probe_epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Starting snapshot x̃ (defaults to zero).
        #[arg(long)]
        init_file: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve for the reference optimum and print F*.
    Reference {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Also write the solution here (in addition to --fstar-cache).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic dataset in LIBSVM format.
    Synth {
        /// `synth:ridge|lasso|logistic,n=..,d=..,seed=..,noise=..,flip=..`
        #[arg(long)]
        data: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct ProblemArgs {
    /// LIBSVM file or `synth:` spec.
    #[arg(long)]
    data: String,
    #[arg(long, value_enum, default_value_t = Loss::Squared)]
    loss: Loss,
    #[arg(long, default_value_t = 0.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda2: f64,
    /// Keep λ1 in the proximal step even when λ2 = 0.
    #[arg(long)]
    no_fold: bool,
    /// Skip unit-normalizing the rows of a file dataset.
    #[arg(long)]
    no_normalize: bool,
    /// Feature dimension, if larger than the largest index in the file.
    #[arg(long)]
    dim: Option<usize>,
    /// Lipschitz constant override.
    #[arg(long = "L")]
    lipschitz: Option<f64>,
    /// Reference solution cache.
    #[arg(long)]
    fstar_cache: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-12)]
    ref_tol: f64,
    #[arg(long, default_value_t = 200_000)]
    ref_max_iters: usize,
    #[arg(long, default_value_t = 100)]
    ref_epochs: usize,
}

#[derive(Args, Clone)]
struct OptimizerArgs {
    #[arg(long, default_value = "vrsgd-i")]
    algo: String,
    /// `auto`, a number, or `c/L`.
    #[arg(long, default_value = "auto")]
    eta: String,
    /// Step schedule parameter; 1 keeps η fixed.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    /// Inner steps per epoch, or `2n`.
    #[arg(long, default_value = "2n")]
    m: String,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Mode::Auto)]
    mode: Mode,
    /// Whitespace-separated starting point.
    #[arg(long)]
    init_file: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Loss {
    Logistic,
    Squared,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Smooth,
    Prox,
    Auto,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn execute(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Run { problem, opt, out, zero_wall_time } => {
            let obj = build_objective(&problem)?;
            let spec = build_spec(&opt, &obj)?;
            spec.check(&obj)?;
            let reference = reference(&obj, &problem)?;
            let trace = run_experiment(&obj, &spec, &reference)?;
            trace.save_csv(&out, !zero_wall_time)?;
            if trace.diverged {
                eprintln!("{} diverged after {} epochs; trace written to {}", spec.algo, trace.records.len(), out.display());
                return Ok(ExitCode::from(EXIT_DIVERGED));
            }
            let last = trace.records.last().expect("nonempty trace");
            println!(
                "{}: {} epochs, {:.1} passes, F = {:.12e}, gap = {:.3e}",
                spec.algo, last.epoch, last.passes, trace.final_objective, last.gap
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { problem, opt, etas, out, zero_wall_time } => {
            let obj = build_objective(&problem)?;
            let base = build_spec(&opt, &obj)?;
            let etas = etas.iter().map(|s| s.parse::<StepSize>()).collect::<Result<Vec<_>, _>>()?;
            for &eta in &etas {
                OptimizerSpec { eta, ..base.clone() }.check(&obj)?;
            }
            let reference = reference(&obj, &problem)?;
            let traces = sweep_learning_rates(&obj, &base, &etas, &reference, Exec::Parallel)?;
            fs::create_dir_all(&out)?;
            for t in &traces {
                let path = out.join(t.file_name());
                t.save_csv(&path, !zero_wall_time)?;
                let status = if t.diverged {
                    "diverged".to_string()
                } else {
                    format!("gap = {:.3e}", t.records.last().map_or(f64::NAN, |r| r.gap))
                };
                println!("{} eta={}: {status}", path.display(), t.eta);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Variance { problem, batches, probe_epochs, seed, init_file, out } => {
            let obj = build_objective(&problem)?;
            let n = obj.n();
            let batches = batches.iter().map(|s| parse_batch(s, n)).collect::<Result<Vec<_>, _>>()?;
            let x_tilde = match &init_file {
                Some(p) => read_point(p, obj.dim())?,
                None => vec![0.0; obj.dim()],
            };
            let mut spec = OptimizerSpec::new(Algo::VrsgdI).epochs(probe_epochs.max(1)).seed(seed).init(x_tilde.clone());
            if obj.regularizer().lambda2 != 0.0 {
                spec = spec.mode(UpdateMode::Proximal);
            }
            let x = vropt::optimizers::run(&obj, &spec)?.output;
            let reference = reference(&obj, &problem)?;
            let rows = variance_table(&obj, &x_tilde, &x, &batches, reference.f_star, seed)?;
            let mut buf = Vec::new();
            write_variance_csv(&rows, &mut buf)?;
            fs::write(&out, &buf)?;
            print!("{}", String::from_utf8_lossy(&buf));
            Ok(ExitCode::SUCCESS)
        }
        Command::Reference { problem, out } => {
            let obj = build_objective(&problem)?;
            let r = reference(&obj, &problem)?;
            if let Some(path) = &out {
                vropt::harness::save_reference(&r, path)?;
            }
            println!("f_star {:?}", r.f_star);
            println!("residual {:e}", r.residual);
            println!("method {}", r.method.as_str());
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth { data, out } => {
            let Some(desc) = data.strip_prefix("synth:") else {
                return Err(Error::Config(format!("expected a `synth:` spec, got `{data}`")));
            };
            let ds = synth_dataset(desc)?;
            fs::write(&out, ds.to_libsvm())?;
            println!("wrote {} rows, {} features to {}", ds.n(), ds.dim(), out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn reference(obj: &CompositeObjective, p: &ProblemArgs) -> Result<ReferenceSolution, Error> {
    let config = ReferenceConfig {
        tol: p.ref_tol,
        max_iters: p.ref_max_iters,
        refine_epochs: p.ref_epochs,
        ..ReferenceConfig::default()
    };
    compute_reference(obj, &config, p.fstar_cache.as_deref()).map_err(|e| match e {
        Error::NotConverged { iters, residual } => Error::Config(format!(
            "reference solver stopped after {iters} iterations at residual {residual:e}; raise --ref-max-iters"
        )),
        other => other,
    })
}

fn build_objective(p: &ProblemArgs) -> Result<CompositeObjective, Error> {
    let mut ds = match p.data.strip_prefix("synth:") {
        Some(desc) => synth_dataset(desc)?,
        None => {
            let file = fs::File::open(&p.data)
                .map_err(|e| Error::Config(format!("cannot open {}: {e}", p.data)))?;
            let ds = parse_libsvm(std::io::BufReader::new(file))?;
            if p.no_normalize {
                ds
            } else {
                let (ds, zero) = normalize_rows(ds);
                if zero > 0 {
                    log::warn!("{zero} all-zero rows left unnormalized");
                }
                ds
            }
        }
    };
    if let Some(d) = p.dim {
        ds = ds.with_dim(d)?;
    }
    let loss = match p.loss {
        Loss::Logistic => LossKind::Logistic,
        Loss::Squared => LossKind::Squared,
    };
    let reg = Regularizer::new(p.lambda1, p.lambda2)?;
    let fold = !p.no_fold && p.lambda2 == 0.0;
    CompositeObjective::with_fold(Arc::new(ds), loss, reg, fold)?
        .with_reduction(Reduction::from_env())
        .with_lipschitz_override(p.lipschitz)
}

fn build_spec(o: &OptimizerArgs, obj: &CompositeObjective) -> Result<OptimizerSpec, Error> {
    let algo: Algo = o.algo.parse()?;
    let m = if o.m.trim() == "2n" {
        EpochLength::TwiceN
    } else {
        EpochLength::Fixed(o.m.trim().parse().map_err(|_| Error::Config(format!("invalid --m `{}`", o.m)))?)
    };
    let mut spec = OptimizerSpec::new(algo)
        .eta(o.eta.parse()?)
        .epochs(o.epochs)
        .epoch_length(m)
        .batch(o.batch)
        .seed(o.seed)
        .schedule(o.alpha);
    match o.mode {
        Mode::Smooth => spec = spec.mode(UpdateMode::SmoothGradient),
        Mode::Prox => spec = spec.mode(UpdateMode::Proximal),
        Mode::Auto => {}
    }
    if let Some(path) = &o.init_file {
        spec = spec.init(read_point(path, obj.dim())?);
    }
    Ok(spec)
}

fn parse_batch(s: &str, n: usize) -> Result<usize, Error> {
    let s = s.trim();
    if s == "n" {
        return Ok(n);
    }
    s.parse().map_err(|_| Error::Config(format!("invalid batch size `{s}`")))
}

fn read_point(path: &Path, dim: usize) -> Result<Vec<f64>, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let x = text
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| Error::Config(format!("invalid entry `{t}` in {}", path.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    if x.len() != dim {
        return Err(Error::Config(format!("{} holds {} values, expected {dim}", path.display(), x.len())));
    }
    Ok(x)
}

/// `ridge|lasso|logistic` followed by `key=value` pairs.
fn synth_dataset(desc: &str) -> Result<SparseDataset, Error> {
    let mut parts = desc.split(',');
    let kind = parts.next().unwrap_or("").trim();
    let (mut n, mut d, mut seed, mut noise, mut flip) = (1000usize, 50usize, 0u64, 0.1f64, 0.0f64);
    for kv in parts {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value in synth spec, got `{kv}`")))?;
        let bad = || Error::Config(format!("invalid value `{v}` for `{k}`"));
        match k.trim() {
            "n" => n = v.trim().parse().map_err(|_| bad())?,
            "d" => d = v.trim().parse().map_err(|_| bad())?,
            "seed" => seed = v.trim().parse().map_err(|_| bad())?,
            "noise" => noise = v.trim().parse().map_err(|_| bad())?,
            "flip" => flip = v.trim().parse().map_err(|_| bad())?,
            other => return Err(Error::Config(format!("unknown synth key `{other}`"))),
        }
    }
    match kind {
        "ridge" | "lasso" => synth_regression(n, d, noise, seed),
        "logistic" => synth_classification(n, d, flip, seed),
        other => Err(Error::Config(format!("unknown synthetic problem `{other}`"))),
    }
}
