//! Epoch-structured optimizers sharing one configuration and log format.
//!
//! | algo          | snapshot `x̃^s`            | next start `x^{s+1}_0` | inner update            |
//! |---------------|---------------------------|------------------------|-------------------------|
//! | `svrg-i`      | last iterate `x^s_m`      | `x̃^s`                  | smooth or proximal      |
//! | `svrg-ii`     | mean of `x^s_1..x^s_m`    | `x̃^s`                  | smooth or proximal      |
//! | `prox-svrg`   | mean of `x^s_1..x^s_m`    | `x̃^s`                  | proximal                |
//! | `vrsgd-i`     | mean of `x^s_1..x^s_{m-1}`| `x^s_m`                | smooth or proximal      |
//! | `vrsgd-ii`    | mean of `x^s_1..x^s_m`    | `x^s_m`                | smooth or proximal      |
//! | `katyusha-i`  | mean of gradient-step iterates | carried `y`, `z`  | gradient steps          |
//! | `katyusha-ii` | mean of gradient-step iterates | carried `y`, `z`  | proximal steps          |
//!
//! `sgd` and `full-proxgd` use no snapshot; their trace records the iterate
//! after each block of `m` steps (SGD) or after each iteration (full-proxgd).

mod katyusha;
mod proxgd;
mod sgd;
mod vr;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::objective::CompositeObjective;

pub use katyusha::{katyusha_w1, run_katyusha, KATYUSHA_W2};
pub use proxgd::{run_full_proxgd, run_full_proxgd_from, ProxGdResult};
pub use sgd::{run_sgd, sgd_step_size};
pub use vr::{run_svrg, run_vrsgd_nsc, run_vrsgd_sc, scheduled_step};

/// Divergence is declared once `F(x̃^s)` exceeds this multiple of `F(x⁰)`.
pub const DIVERGENCE_FACTOR: f64 = 1e10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algo {
    SvrgI,
    SvrgII,
    ProxSvrg,
    VrsgdI,
    VrsgdII,
    KatyushaI,
    KatyushaII,
    Sgd,
    FullProxGd,
}

impl Algo {
    pub const ALL: [Algo; 9] = [
        Algo::SvrgI,
        Algo::SvrgII,
        Algo::ProxSvrg,
        Algo::VrsgdI,
        Algo::VrsgdII,
        Algo::KatyushaI,
        Algo::KatyushaII,
        Algo::Sgd,
        Algo::FullProxGd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algo::SvrgI => "svrg-i",
            Algo::SvrgII => "svrg-ii",
            Algo::ProxSvrg => "prox-svrg",
            Algo::VrsgdI => "vrsgd-i",
            Algo::VrsgdII => "vrsgd-ii",
            Algo::KatyushaI => "katyusha-i",
            Algo::KatyushaII => "katyusha-ii",
            Algo::Sgd => "sgd",
            Algo::FullProxGd => "full-proxgd",
        }
    }

    pub fn is_vrsgd(self) -> bool {
        matches!(self, Algo::VrsgdI | Algo::VrsgdII)
    }

    pub fn is_svrg(self) -> bool {
        matches!(self, Algo::SvrgI | Algo::SvrgII | Algo::ProxSvrg)
    }

    pub fn is_katyusha(self) -> bool {
        matches!(self, Algo::KatyushaI | Algo::KatyushaII)
    }

    /// Snapshot and start rules for the snapshot-based variance-reduced methods.
    pub fn rules(self) -> Option<(SnapshotRule, StartRule)> {
        match self {
            Algo::SvrgI => Some((SnapshotRule::LastIterate, StartRule::Snapshot)),
            Algo::SvrgII | Algo::ProxSvrg => Some((SnapshotRule::FullAverage, StartRule::Snapshot)),
            Algo::VrsgdI => Some((SnapshotRule::TailAverage, StartRule::LastIterate)),
            Algo::VrsgdII => Some((SnapshotRule::FullAverage, StartRule::LastIterate)),
            _ => None,
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnapshotRule {
    /// `x̃^s = x^s_m`
    LastIterate,
    /// `x̃^s = (1/m) Σ_{k=1..m} x^s_k`
    FullAverage,
    /// `x̃^s = (1/(m−1)) Σ_{k=1..m−1} x^s_k`
    TailAverage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StartRule {
    /// `x^{s+1}_0 = x^s_m`
    LastIterate,
    /// `x^{s+1}_0 = x̃^s`
    Snapshot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateMode {
    /// `x ← x − η[ṽ + ∇g(x)]`; needs a differentiable `g`.
    SmoothGradient,
    /// `x ← prox_{η,g}(x − ηṽ)`.
    Proximal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EpochLength {
    /// `m = 2n`.
    TwiceN,
    Fixed(usize),
}

impl EpochLength {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            EpochLength::TwiceN => 2 * n,
            EpochLength::Fixed(m) => m,
        }
    }
}

/// Step-size request, resolved against the objective's Lipschitz constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSize {
    /// `3/(7L)` for VR-SGD, `1/(10L)` for SVRG-type methods, `1/(3·w1·L)` per
    /// epoch for Katyusha, `1/L` for SGD and full proximal gradient.
    Auto,
    /// `c / L`.
    OverL(f64),
    Value(f64),
}

impl StepSize {
    /// Returns `None` for Katyusha's automatic per-epoch step.
    pub fn resolve(self, algo: Algo, l: f64) -> Option<f64> {
        match self {
            StepSize::Value(v) => Some(v),
            StepSize::OverL(c) => Some(c / l),
            StepSize::Auto => match algo {
                Algo::VrsgdI | Algo::VrsgdII => Some(3.0 / (7.0 * l)),
                Algo::SvrgI | Algo::SvrgII | Algo::ProxSvrg => Some(1.0 / (10.0 * l)),
                Algo::KatyushaI | Algo::KatyushaII => None,
                Algo::Sgd | Algo::FullProxGd => Some(1.0 / l),
            },
        }
    }
}

impl FromStr for StepSize {
    type Err = Error;

    /// Accepts `auto`, a number, or `c/L` where `c` may itself be `p/q`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(StepSize::Auto);
        }
        let bad = || Error::config(format!("invalid step size `{s}` (expected auto, a number, or c/L)"));
        let number = |t: &str| -> Result<f64> {
            match t.split_once('/') {
                Some((p, q)) => Ok(p.trim().parse::<f64>().map_err(|_| bad())? / q.trim().parse::<f64>().map_err(|_| bad())?),
                None => t.trim().parse::<f64>().map_err(|_| bad()),
            }
        };
        let (v, over_l) = match s.strip_suffix("/L").or_else(|| s.strip_suffix("/l")) {
            Some(c) => (number(c)?, true),
            None => (number(s)?, false),
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(bad());
        }
        Ok(if over_l { StepSize::OverL(v) } else { StepSize::Value(v) })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerSpec {
    pub algo: Algo,
    pub eta: StepSize,
    /// Floor of the increasing step schedule `η_s = η₀ / max{α, 2/(s+1)}`.
    pub alpha: f64,
    pub fixed_lr: bool,
    pub epoch_length: EpochLength,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    /// `None` picks smooth steps when `λ2 = 0` and proximal steps otherwise.
    pub update_mode: Option<UpdateMode>,
    /// Starting point; zero when absent.
    pub init: Option<Vec<f64>>,
}

impl OptimizerSpec {
    pub fn new(algo: Algo) -> Self {
        OptimizerSpec {
            algo,
            eta: StepSize::Auto,
            alpha: 1.0,
            fixed_lr: true,
            epoch_length: EpochLength::TwiceN,
            epochs: 30,
            batch: 1,
            seed: 0,
            update_mode: None,
            init: None,
        }
    }

    pub fn eta(mut self, eta: StepSize) -> Self {
        self.eta = eta;
        self
    }

    pub fn epochs(mut self, s: usize) -> Self {
        self.epochs = s;
        self
    }

    pub fn epoch_length(mut self, m: EpochLength) -> Self {
        self.epoch_length = m;
        self
    }

    pub fn m(self, m: usize) -> Self {
        self.epoch_length(EpochLength::Fixed(m))
    }

    pub fn batch(mut self, b: usize) -> Self {
        self.batch = b;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn mode(mut self, mode: UpdateMode) -> Self {
        self.update_mode = Some(mode);
        self
    }

    /// Enables the increasing schedule with floor `alpha`.
    pub fn schedule(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self.fixed_lr = false;
        self
    }

    pub fn init(mut self, x0: Vec<f64>) -> Self {
        self.init = Some(x0);
        self
    }

    pub fn resolved_mode(&self, obj: &CompositeObjective) -> UpdateMode {
        match self.algo {
            Algo::ProxSvrg | Algo::KatyushaII | Algo::FullProxGd => UpdateMode::Proximal,
            Algo::KatyushaI => UpdateMode::SmoothGradient,
            _ => self.update_mode.unwrap_or(if obj.regularizer().lambda2 == 0.0 {
                UpdateMode::SmoothGradient
            } else {
                UpdateMode::Proximal
            }),
        }
    }

    /// Checks the configuration against `obj` without running anything.
    pub fn check(&self, obj: &CompositeObjective) -> Result<()> {
        self.validate(obj).map(|_| ())
    }

    pub(crate) fn validate(&self, obj: &CompositeObjective) -> Result<Resolved> {
        let n = obj.n();
        if self.epochs == 0 {
            return Err(Error::config("number of epochs must be at least 1"));
        }
        let m = self.epoch_length.resolve(n);
        if m == 0 {
            return Err(Error::config("epoch length must be at least 1"));
        }
        if self.batch == 0 || self.batch > n {
            return Err(Error::config(format!("batch size {} outside 1..={n}", self.batch)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if let Some((SnapshotRule::TailAverage, _)) = self.algo.rules() {
            if m < 2 {
                return Err(Error::config("tail-averaged snapshots need m >= 2"));
            }
        }
        let mode = self.resolved_mode(obj);
        if mode == UpdateMode::SmoothGradient && obj.regularizer().lambda2 != 0.0 {
            return Err(Error::config(format!(
                "{} with smooth updates requires lambda2 = 0",
                self.algo
            )));
        }
        if self.update_mode.is_some() && self.update_mode != Some(mode) {
            return Err(Error::config(format!("{} does not support the requested update mode", self.algo)));
        }
        let l = obj.lipschitz()?.l;
        let eta = self.eta.resolve(self.algo, l);
        if let Some(e) = eta {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::config(format!("step size must be positive, got {e}")));
            }
        }
        let x0 = match &self.init {
            Some(x) if x.len() != obj.dim() => {
                return Err(Error::config(format!(
                    "initial point has length {} but the problem has dimension {}",
                    x.len(),
                    obj.dim()
                )))
            }
            Some(x) => x.clone(),
            None => vec![0.0; obj.dim()],
        };
        Ok(Resolved { m, eta, mode, lipschitz: l, x0 })
    }
}

pub(crate) struct Resolved {
    pub m: usize,
    pub eta: Option<f64>,
    pub mode: UpdateMode,
    pub lipschitz: f64,
    pub x0: Vec<f64>,
}

/// One epoch as seen at its boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochResult {
    pub epoch: usize,
    pub x_end: Vec<f64>,
    pub x_snapshot: Vec<f64>,
    /// `F(x̃^s)`.
    pub objective: f64,
    pub passes_consumed: f64,
    pub step_size: f64,
    pub wall_time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputChoice {
    LastSnapshot,
    SnapshotAverage,
    LastIterate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunLog {
    pub algo: Algo,
    pub initial_objective: f64,
    pub epochs: Vec<EpochResult>,
    pub output: Vec<f64>,
    pub output_objective: f64,
    pub output_choice: OutputChoice,
    /// `(F(x̃^S), F(mean of snapshots))` for VR-SGD.
    pub candidates: Option<(f64, f64)>,
}

/// Source of sampled component indices.
pub trait IndexStream {
    /// Replaces `out` with `b` distinct indices in `0..n`.
    fn next_batch(&mut self, n: usize, b: usize, out: &mut Vec<usize>);
}

/// Uniform sampling: with replacement across steps, without replacement
/// inside a batch.
pub struct SeededIndices {
    rng: ChaCha8Rng,
}

impl SeededIndices {
    pub fn new(seed: u64) -> Self {
        SeededIndices { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl IndexStream for SeededIndices {
    fn next_batch(&mut self, n: usize, b: usize, out: &mut Vec<usize>) {
        out.clear();
        if b == 1 {
            out.push(self.rng.random_range(0..n));
        } else {
            out.extend(rand::seq::index::sample(&mut self.rng, n, b).iter());
        }
    }
}

/// Replays a pinned sequence of batches, cycling when exhausted.
pub struct FixedIndices {
    batches: Vec<Vec<usize>>,
    pos: usize,
}

impl FixedIndices {
    pub fn singles(seq: &[usize]) -> Self {
        FixedIndices { batches: seq.iter().map(|&i| vec![i]).collect(), pos: 0 }
    }

    pub fn batches(batches: Vec<Vec<usize>>) -> Self {
        FixedIndices { batches, pos: 0 }
    }
}

impl IndexStream for FixedIndices {
    fn next_batch(&mut self, _n: usize, b: usize, out: &mut Vec<usize>) {
        let batch = &self.batches[self.pos % self.batches.len()];
        debug_assert_eq!(batch.len(), b);
        out.clear();
        out.extend_from_slice(batch);
        self.pos += 1;
    }
}

/// Sees every inner iterate; used by tests to recompute averages.
pub trait Observer {
    /// Called after inner step `k` (1-based) of epoch `epoch` with the new iterate.
    fn inner(&mut self, epoch: usize, k: usize, x: &[f64]) {
        let _ = (epoch, k, x);
    }
}

pub struct NoObserver;

impl Observer for NoObserver {}

/// Runs `spec.algo` with indices drawn from `spec.seed`.
pub fn run(obj: &CompositeObjective, spec: &OptimizerSpec) -> Result<RunLog> {
    run_with(obj, spec, &mut SeededIndices::new(spec.seed), &mut NoObserver)
}

pub fn run_with(
    obj: &CompositeObjective,
    spec: &OptimizerSpec,
    indices: &mut dyn IndexStream,
    observer: &mut dyn Observer,
) -> Result<RunLog> {
    match spec.algo {
        Algo::SvrgI | Algo::SvrgII | Algo::ProxSvrg => vr::run_svrg_with(obj, spec, indices, observer),
        Algo::VrsgdI | Algo::VrsgdII => vr::run_vrsgd_with(obj, spec, indices, observer),
        Algo::KatyushaI | Algo::KatyushaII => katyusha::run_katyusha_with(obj, spec, indices, observer),
        Algo::Sgd => sgd::run_sgd_with(obj, spec, indices, observer),
        Algo::FullProxGd => proxgd::run_proxgd_epochs(obj, spec, observer),
    }
}

/// Passes charged to an epoch with one full gradient and `m` batches of `b`.
pub fn vr_epoch_passes(m: usize, b: usize, n: usize) -> f64 {
    1.0 + (m * b) as f64 / n as f64
}

pub(crate) struct DivergenceGuard {
    limit: f64,
}

impl DivergenceGuard {
    pub fn new(initial_objective: f64) -> Self {
        DivergenceGuard { limit: DIVERGENCE_FACTOR * initial_objective.abs().max(f64::MIN_POSITIVE) }
    }

    pub fn check(&self, value: f64) -> bool {
        value.is_finite() && value <= self.limit
    }
}

/// Applies one inner update in place. `v` is the estimated gradient of the
/// smooth part.
#[inline]
pub(crate) fn apply_step(
    obj: &CompositeObjective,
    mode: UpdateMode,
    eta: f64,
    v: &[f64],
    x: &mut [f64],
) -> Result<()> {
    let reg = obj.prox_reg();
    match mode {
        UpdateMode::SmoothGradient => {
            let lam = reg.lambda1;
            for (xj, vj) in x.iter_mut().zip(v) {
                *xj -= eta * (vj + lam * *xj);
            }
        }
        UpdateMode::Proximal => {
            for (xj, vj) in x.iter_mut().zip(v) {
                *xj -= eta * vj;
            }
            reg.prox_in_place(eta, x)?;
        }
    }
    Ok(())
}

pub(crate) fn mean_of(sum: &[f64], count: usize) -> Vec<f64> {
    let c = count as f64;
    sum.iter().map(|s| s / c).collect()
}

pub(crate) fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_algo_names() {
        for a in Algo::ALL {
            assert_eq!(a.name().parse::<Algo>().unwrap(), a);
        }
        assert!("adam".parse::<Algo>().is_err());
    }

    #[test]
    fn parse_step_sizes() {
        assert_eq!("auto".parse::<StepSize>().unwrap(), StepSize::Auto);
        assert_eq!("0.3/L".parse::<StepSize>().unwrap(), StepSize::OverL(0.3));
        assert_eq!("0.05".parse::<StepSize>().unwrap(), StepSize::Value(0.05));
        assert!("-1".parse::<StepSize>().is_err());
        assert!("x/L".parse::<StepSize>().is_err());
        assert_eq!("3/7/L".parse::<StepSize>().unwrap(), StepSize::OverL(3.0 / 7.0));
        assert!("1/0".parse::<StepSize>().is_err());
    }

    #[test]
    fn auto_step_sizes() {
        let l = 2.0;
        assert_eq!(StepSize::Auto.resolve(Algo::VrsgdI, l), Some(3.0 / 14.0));
        assert_eq!(StepSize::Auto.resolve(Algo::SvrgI, l), Some(0.05));
        assert_eq!(StepSize::Auto.resolve(Algo::KatyushaII, l), None);
    }

    #[test]
    fn seeded_batches_are_distinct_and_reproducible() {
        let mut a = SeededIndices::new(3);
        let mut b = SeededIndices::new(3);
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for _ in 0..100 {
            a.next_batch(10, 4, &mut x);
            b.next_batch(10, 4, &mut y);
            assert_eq!(x, y);
            let mut s = x.clone();
            s.sort();
            s.dedup();
            assert_eq!(s.len(), 4);
            assert!(x.iter().all(|&i| i < 10));
        }
    }

    #[test]
    fn passes_per_epoch() {
        assert_eq!(vr_epoch_passes(2000, 1, 1000), 3.0);
        assert_eq!(vr_epoch_passes(10, 5, 100), 1.5);
    }
}
