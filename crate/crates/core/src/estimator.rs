//! Variance-reduced gradient estimators and exact variance diagnostics.
//!
//! For a snapshot `x̃` with full gradient `μ̃ = ∇f(x̃)`, the mini-batch
//! estimator at `x` is
//!
//! ```text
//! ṽ = (1/b) Σ_{i∈I} [∇f_i(x) − ∇f_i(x̃)] + μ̃
//! ```
//!
//! which is unbiased for `∇f(x)` and has variance at most
//! `4L·δ(b)·[F(x) − F* + F(x̃) − F*]` with `δ(b) = (n − b) / ((n − 1) b)`.

use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::objective::CompositeObjective;

/// Outcome count up to which variance expectations are enumerated exactly.
pub const EXHAUSTIVE_LIMIT: u128 = 100_000;
/// Number of sampled batches when enumeration is too large.
pub const VARIANCE_SAMPLES: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotContext {
    x_tilde: Vec<f64>,
    mu_tilde: Vec<f64>,
}

impl SnapshotContext {
    pub fn new(obj: &CompositeObjective, x_tilde: Vec<f64>) -> Self {
        let mu_tilde = obj.full_grad(&x_tilde);
        SnapshotContext { x_tilde, mu_tilde }
    }

    pub fn x_tilde(&self) -> &[f64] {
        &self.x_tilde
    }

    pub fn mu_tilde(&self) -> &[f64] {
        &self.mu_tilde
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchIndex {
    indices: Vec<usize>,
}

impl BatchIndex {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::config("mini-batch must not be empty"));
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        if !indices.iter().all_unique() {
            return Err(Error::config("mini-batch indices must be distinct"));
        }
        Ok(BatchIndex { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Writes the estimator for `indices` into `out`. Shared by the optimizers'
/// inner loops; indices are assumed valid.
pub(crate) fn estimate_into(
    obj: &CompositeObjective,
    ctx: &SnapshotContext,
    indices: &[usize],
    x: &[f64],
    out: &mut [f64],
) {
    out.copy_from_slice(&ctx.mu_tilde);
    let inv_b = 1.0 / indices.len() as f64;
    for &i in indices {
        let c = obj.margin_derivative(i, x) - obj.margin_derivative(i, &ctx.x_tilde);
        if c != 0.0 {
            obj.data().row(i).axpy_into(c * inv_b, out);
        }
    }
    let lam = obj.folded_lambda();
    if lam != 0.0 {
        for ((o, xj), tj) in out.iter_mut().zip(x).zip(&ctx.x_tilde) {
            *o += lam * (xj - tj);
        }
    }
}

/// `∇f_i(x) − ∇f_i(x̃) + μ̃`.
pub fn svrg_estimate(obj: &CompositeObjective, ctx: &SnapshotContext, i: usize, x: &[f64]) -> Result<Vec<f64>> {
    if i >= obj.n() {
        return Err(Error::IndexOutOfRange { index: i, n: obj.n() });
    }
    let mut out = vec![0.0; obj.dim()];
    estimate_into(obj, ctx, &[i], x, &mut out);
    Ok(out)
}

pub fn minibatch_estimate(
    obj: &CompositeObjective,
    ctx: &SnapshotContext,
    batch: &BatchIndex,
    x: &[f64],
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::config("mini-batch must not be empty"));
    }
    if let Some(&i) = batch.indices().iter().find(|&&i| i >= obj.n()) {
        return Err(Error::IndexOutOfRange { index: i, n: obj.n() });
    }
    let mut out = vec![0.0; obj.dim()];
    estimate_into(obj, ctx, batch.indices(), x, &mut out);
    Ok(out)
}

/// `δ(b) = (n − b) / ((n − 1) b)`, zero for the full batch.
pub fn delta_b(n: usize, b: usize) -> f64 {
    if n <= 1 || b >= n {
        return 0.0;
    }
    (n - b) as f64 / ((n - 1) as f64 * b as f64)
}

/// `C(n, k)`; stops growing once it exceeds `u64::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for j in 0..k {
        c = c * (n - j) as u128 / (j + 1) as u128;
        if c > u64::MAX as u128 {
            return c;
        }
    }
    c
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceDiag {
    pub b: usize,
    pub delta_b: f64,
    /// `E‖ṽ − ∇f(x)‖²` over uniformly drawn batches without replacement.
    pub empirical_mse: f64,
    /// `4L·δ(b)·[F(x) − F* + F(x̃) − F*]`.
    pub bound: f64,
    pub exhaustive: bool,
    /// Standard error of `empirical_mse`; zero when enumerated.
    pub std_err: f64,
}

/// Computes the estimator variance at `x` for batch size `b`, exactly when the
/// number of batches is at most [`EXHAUSTIVE_LIMIT`] and by `seed`-driven
/// sampling otherwise. `f_star` is the optimal value of `F`.
pub fn variance_diag(
    obj: &CompositeObjective,
    ctx: &SnapshotContext,
    x: &[f64],
    b: usize,
    f_star: f64,
    seed: u64,
) -> Result<VarianceDiag> {
    let n = obj.n();
    if b == 0 || b > n {
        return Err(Error::config(format!("batch size {b} outside 1..={n}")));
    }
    let l = obj.lipschitz()?.l;
    let delta = delta_b(n, b);
    let gap = (obj.value(x) - f_star) + (obj.value(ctx.x_tilde()) - f_star);
    let bound = 4.0 * l * delta * gap;

    // a full batch reproduces ∇f(x) exactly; enumerating it only measures rounding
    if b == n {
        return Ok(VarianceDiag { b, delta_b: delta, empirical_mse: 0.0, bound, exhaustive: true, std_err: 0.0 });
    }

    let grad = obj.full_grad(x);
    let mut est = vec![0.0; obj.dim()];
    let mut sq_err = |batch: &[usize]| {
        estimate_into(obj, ctx, batch, x, &mut est);
        est.iter().zip(&grad).map(|(e, g)| (e - g) * (e - g)).sum::<f64>()
    };

    let outcomes = binomial(n, b);
    if outcomes <= EXHAUSTIVE_LIMIT {
        let mut total = 0.0;
        for batch in (0..n).combinations(b) {
            total += sq_err(&batch);
        }
        let mse = total / outcomes as f64;
        Ok(VarianceDiag { b, delta_b: delta, empirical_mse: mse, bound, exhaustive: true, std_err: 0.0 })
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..VARIANCE_SAMPLES {
            let batch = rand::seq::index::sample(&mut rng, n, b).into_vec();
            let v = sq_err(&batch);
            s1 += v;
            s2 += v * v;
        }
        let k = VARIANCE_SAMPLES as f64;
        let mean = s1 / k;
        let var = ((s2 / k) - mean * mean).max(0.0) * k / (k - 1.0);
        Ok(VarianceDiag {
            b,
            delta_b: delta,
            empirical_mse: mean,
            bound,
            exhaustive: false,
            std_err: (var / k).sqrt(),
        })
    }
}
