//! Test-side oracles written against dense arrays, sharing no code with the
//! library beyond the data types used to build fixtures.
#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vropt::dataset::{SparseDataset, SparseVector};
use vropt::{CompositeObjective, LossKind, Regularizer};

#[derive(Clone, Debug)]
pub struct Dense {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub logistic: bool,
    pub lambda1: f64,
    pub lambda2: f64,
    pub fold: bool,
}

impl Dense {
    pub fn random(n: usize, d: usize, logistic: bool, lambda1: f64, lambda2: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let b = (0..n)
            .map(|_| if logistic { if rng.random_bool(0.5) { 1.0 } else { -1.0 } } else { rng.random_range(-2.0..2.0) })
            .collect();
        Dense { a, b, logistic, lambda1, lambda2, fold: lambda2 == 0.0 }
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn d(&self) -> usize {
        self.a[0].len()
    }

    pub fn objective(&self) -> CompositeObjective {
        let rows = self.a.iter().map(|r| SparseVector::from_dense(r)).collect();
        let ds = SparseDataset::new(rows, self.b.clone(), self.d()).unwrap();
        let loss = if self.logistic { LossKind::Logistic } else { LossKind::Squared };
        CompositeObjective::with_fold(Arc::new(ds), loss, Regularizer::new(self.lambda1, self.lambda2).unwrap(), self.fold)
            .unwrap()
    }

    fn margin(&self, i: usize, x: &[f64]) -> f64 {
        let mut z = 0.0;
        for j in 0..self.d() {
            z += self.a[i][j] * x[j];
        }
        z
    }

    fn phi(&self, z: f64, b: f64) -> f64 {
        if self.logistic {
            (1.0 + (-b * z).exp()).ln()
        } else {
            0.5 * (z - b) * (z - b)
        }
    }

    fn dphi(&self, z: f64, b: f64) -> f64 {
        if self.logistic {
            -b / (1.0 + (b * z).exp())
        } else {
            z - b
        }
    }

    /// Gradient of the i-th smooth component, λ1 included when folded.
    pub fn grad_i(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let c = self.dphi(self.margin(i, x), self.b[i]);
        (0..self.d())
            .map(|j| c * self.a[i][j] + if self.fold { self.lambda1 * x[j] } else { 0.0 })
            .collect()
    }

    pub fn full_grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.d()];
        for i in 0..self.n() {
            let gi = self.grad_i(i, x);
            for j in 0..self.d() {
                g[j] += gi[j] / self.n() as f64;
            }
        }
        g
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut f = 0.0;
        for i in 0..self.n() {
            f += self.phi(self.margin(i, x), self.b[i]);
        }
        f /= self.n() as f64;
        let sq: f64 = x.iter().map(|v| v * v).sum();
        let l1: f64 = x.iter().map(|v| v.abs()).sum();
        f + 0.5 * self.lambda1 * sq + self.lambda2 * l1
    }

    pub fn lipschitz(&self) -> f64 {
        let c = if self.logistic { 0.25 } else { 1.0 };
        let max_sq = self.a.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>()).fold(0.0, f64::max);
        c * max_sq + if self.fold { self.lambda1 } else { 0.0 }
    }

    /// λ1 left to the regularizer step.
    fn prox_lambda1(&self) -> f64 {
        if self.fold {
            0.0
        } else {
            self.lambda1
        }
    }

    pub fn prox(&self, eta: f64, y: &[f64]) -> Vec<f64> {
        y.iter().map(|&v| prox_scalar(v, eta, self.prox_lambda1(), self.lambda2)).collect()
    }

    /// One inner update with estimate `v`: smooth steps add λ1·x when not
    /// folded; proximal steps go through the regularizer's prox.
    pub fn step(&self, proximal: bool, eta: f64, v: &[f64], x: &[f64]) -> Vec<f64> {
        if proximal {
            let y: Vec<f64> = (0..x.len()).map(|j| x[j] - eta * v[j]).collect();
            self.prox(eta, &y)
        } else {
            (0..x.len()).map(|j| x[j] - eta * (v[j] + self.prox_lambda1() * x[j])).collect()
        }
    }

    pub fn svrg(&self, batch: &[usize], x: &[f64], x_tilde: &[f64], mu: &[f64]) -> Vec<f64> {
        let mut v = mu.to_vec();
        for &i in batch {
            let gx = self.grad_i(i, x);
            let gt = self.grad_i(i, x_tilde);
            for j in 0..v.len() {
                v[j] += (gx[j] - gt[j]) / batch.len() as f64;
            }
        }
        v
    }
}

/// argmin_x (x−y)²/(2η) + (λ1/2)x² + λ2|x| in closed form.
pub fn prox_scalar(y: f64, eta: f64, lambda1: f64, lambda2: f64) -> f64 {
    let t = eta * lambda2;
    let s = if y > t {
        y - t
    } else if y < -t {
        y + t
    } else {
        0.0
    };
    s / (1.0 + eta * lambda1)
}

/// Brute-force scalar minimizer: a coarse grid brackets the minimum, then the
/// bracket is bisected on the sign of the (monotone) subgradient.
pub fn brute_force_prox(y: f64, eta: f64, lambda1: f64, lambda2: f64) -> f64 {
    let h = |x: f64| (x - y) * (x - y) / (2.0 * eta) + 0.5 * lambda1 * x * x + lambda2 * x.abs();
    let slope = |x: f64| (x - y) / eta + lambda1 * x;
    let radius = y.abs() + 1.0;
    let steps = 2000;
    let mut best = (-radius, h(-radius));
    for k in 0..=steps {
        let x = -radius + 2.0 * radius * k as f64 / steps as f64;
        let v = h(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    // 0 is optimal when the subdifferential there contains 0
    if slope(0.0).abs() <= lambda2 {
        return 0.0;
    }
    let width = 2.0 * radius / steps as f64;
    let (mut lo, mut hi) = (best.0 - width, best.0 + width);
    let sign = if best.0 > 0.0 || (best.0 == 0.0 && slope(0.0) < 0.0) { 1.0 } else { -1.0 };
    if sign > 0.0 {
        lo = lo.max(0.0);
    } else {
        hi = hi.min(0.0);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) + lambda2 * sign > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Oracle {
    SvrgI,
    SvrgII,
    VrsgdI,
    VrsgdII,
    Katyusha,
    Sgd,
    ProxGd,
}

pub struct EpochOut {
    pub x_end: Vec<f64>,
    pub x_snapshot: Vec<f64>,
}

/// One epoch from `x0` (the starting snapshot), evaluated line by line.
pub fn one_epoch(
    p: &Dense,
    which: Oracle,
    proximal: bool,
    eta: f64,
    m: usize,
    batches: &[Vec<usize>],
    x0: &[f64],
) -> EpochOut {
    let d = p.d();
    let n = p.n();
    match which {
        Oracle::ProxGd => {
            let g = p.full_grad(x0);
            let x = p.step(true, eta, &g, x0);
            EpochOut { x_end: x.clone(), x_snapshot: x }
        }
        Oracle::Sgd => {
            let mut x = x0.to_vec();
            for k in 0..m {
                let batch = &batches[k % batches.len()];
                let b = batch.len();
                let eta_k = eta / (1.0 + ((k * b) / n) as f64);
                let mut g = vec![0.0; d];
                for &i in batch {
                    let gi = p.grad_i(i, &x);
                    for j in 0..d {
                        g[j] += gi[j] / b as f64;
                    }
                }
                x = p.step(proximal, eta_k, &g, &x);
            }
            EpochOut { x_end: x.clone(), x_snapshot: x }
        }
        Oracle::Katyusha => {
            let l = p.lipschitz();
            let mu = p.lambda1;
            let w1 = if mu > 0.0 { (m as f64 * mu / (3.0 * l)).sqrt().min(0.5) } else { 2.0 / 5.0 };
            let w2 = 0.5;
            let eta = 1.0 / (3.0 * w1 * l);
            let step_z = 1.0 / (3.0 * l);
            let mu_t = p.full_grad(x0);
            let (mut y, mut z) = (x0.to_vec(), x0.to_vec());
            let mut zsum = vec![0.0; d];
            for k in 0..m {
                let x: Vec<f64> = (0..d).map(|j| w1 * y[j] + w2 * x0[j] + (1.0 - w1 - w2) * z[j]).collect();
                let v = p.svrg(&batches[k % batches.len()], &x, x0, &mu_t);
                if proximal {
                    let yy: Vec<f64> = (0..d).map(|j| y[j] - eta * v[j]).collect();
                    let zz: Vec<f64> = (0..d).map(|j| x[j] - step_z * v[j]).collect();
                    y = p.prox(eta, &yy);
                    z = p.prox(step_z, &zz);
                } else {
                    let lam = p.prox_lambda1();
                    y = (0..d).map(|j| y[j] - eta * (v[j] + lam * x[j])).collect();
                    z = (0..d).map(|j| x[j] - step_z * (v[j] + lam * x[j])).collect();
                }
                for j in 0..d {
                    zsum[j] += z[j];
                }
            }
            EpochOut { x_end: z, x_snapshot: zsum.iter().map(|s| s / m as f64).collect() }
        }
        _ => {
            let mu = p.full_grad(x0);
            let mut x = x0.to_vec();
            let mut iterates = Vec::new();
            for k in 0..m {
                let v = p.svrg(&batches[k % batches.len()], &x, x0, &mu);
                x = p.step(proximal, eta, &v, &x);
                iterates.push(x.clone());
            }
            let mean = |pts: &[Vec<f64>]| -> Vec<f64> {
                (0..d).map(|j| pts.iter().map(|p| p[j]).sum::<f64>() / pts.len() as f64).collect()
            };
            let snapshot = match which {
                Oracle::SvrgI => x.clone(),
                Oracle::VrsgdI => mean(&iterates[..m - 1]),
                _ => mean(&iterates),
            };
            EpochOut { x_end: x, x_snapshot: snapshot }
        }
    }
}

/// Solves `M z = r` by Gaussian elimination with partial pivoting.
pub fn solve(mut m: Vec<Vec<f64>>, mut r: Vec<f64>) -> Vec<f64> {
    let d = r.len();
    for c in 0..d {
        let p = (c..d).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        r.swap(c, p);
        for i in c + 1..d {
            let f = m[i][c] / m[c][c];
            for k in c..d {
                m[i][k] -= f * m[c][k];
            }
            r[i] -= f * r[c];
        }
    }
    let mut z = vec![0.0; d];
    for c in (0..d).rev() {
        let s: f64 = (c + 1..d).map(|k| m[c][k] * z[k]).sum();
        z[c] = (r[c] - s) / m[c][c];
    }
    z
}

/// Ridge minimizer `(AᵀA/n + λ1 I)⁻¹ Aᵀb/n` from the dataset's rows.
pub fn ridge_solution(ds: &SparseDataset, lambda1: f64) -> Vec<f64> {
    let (n, d) = (ds.n(), ds.dim());
    let mut m = vec![vec![0.0; d]; d];
    let mut r = vec![0.0; d];
    for (row, &b) in ds.rows().iter().zip(ds.labels()) {
        let dense: Vec<f64> = {
            let mut v = vec![0.0; d];
            for (j, a) in row.iter() {
                v[j] = a;
            }
            v
        };
        for p in 0..d {
            r[p] += dense[p] * b / n as f64;
            for q in 0..d {
                m[p][q] += dense[p] * dense[q] / n as f64;
            }
        }
    }
    for (p, row) in m.iter_mut().enumerate() {
        row[p] += lambda1;
    }
    solve(m, r)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Elementwise `|got − want| ≤ tol·(1 + |want|)`.
pub fn close(got: &[f64], want: &[f64], tol: f64) -> bool {
    got.len() == want.len() && got.iter().zip(want).all(|(g, w)| (g - w).abs() <= tol * (1.0 + w.abs()))
}

pub struct EpochCase {
    pub label: String,
    pub problem: Dense,
    pub algo: vropt::Algo,
    pub oracle: Oracle,
    pub proximal: bool,
    pub eta: f64,
    pub m: usize,
    pub batches: Vec<Vec<usize>>,
}

/// Every algorithm on tiny squared and logistic fixtures with pinned indices,
/// in each update mode it supports.
pub fn epoch_cases() -> Vec<EpochCase> {
    use vropt::Algo;
    let mut out = Vec::new();
    let fixtures = [
        ("ridge", Dense::random(3, 2, false, 0.1, 0.0, 11)),
        ("ridge-unfolded", Dense { fold: false, ..Dense::random(3, 2, false, 0.1, 0.0, 12) }),
        ("elastic", Dense::random(3, 3, false, 0.05, 0.2, 13)),
        ("logistic-l1", Dense::random(2, 3, true, 0.0, 0.1, 14)),
        ("logistic", Dense::random(3, 2, true, 0.01, 0.0, 15)),
    ];
    let singles = vec![vec![2], vec![0], vec![2]];
    let pairs = vec![vec![0, 1], vec![1, 2], vec![2, 0]];
    for (name, p) in fixtures {
        let n = p.n();
        let smooth_ok = p.lambda2 == 0.0;
        let l = p.lipschitz();
        for algo in Algo::ALL {
            let (oracle, modes): (Oracle, Vec<bool>) = match algo {
                Algo::SvrgI => (Oracle::SvrgI, vec![false, true]),
                Algo::SvrgII => (Oracle::SvrgII, vec![false, true]),
                Algo::ProxSvrg => (Oracle::SvrgII, vec![true]),
                Algo::VrsgdI => (Oracle::VrsgdI, vec![false, true]),
                Algo::VrsgdII => (Oracle::VrsgdII, vec![false, true]),
                Algo::KatyushaI => (Oracle::Katyusha, vec![false]),
                Algo::KatyushaII => (Oracle::Katyusha, vec![true]),
                Algo::Sgd => (Oracle::Sgd, vec![false, true]),
                Algo::FullProxGd => (Oracle::ProxGd, vec![true]),
            };
            for proximal in modes {
                if !proximal && !smooth_ok {
                    continue;
                }
                for (bname, batches) in [("b1", &singles), ("b2", &pairs)] {
                    let batches: Vec<Vec<usize>> =
                        batches.iter().map(|b| b.iter().map(|&i| i % n).collect()).collect();
                    if batches.iter().any(|b| b.len() > 1 && b[0] == b[1]) {
                        continue;
                    }
                    let eta = match algo {
                        Algo::FullProxGd => 1.0 / l,
                        _ => 0.3 / l,
                    };
                    for m in [2, 3] {
                        out.push(EpochCase {
                            label: format!("{name}/{algo}/{}/{bname}/m{m}", if proximal { "prox" } else { "smooth" }),
                            problem: p.clone(),
                            algo,
                            oracle,
                            proximal,
                            eta,
                            m,
                            batches: batches.clone(),
                        });
                    }
                }
            }
        }
    }
    out
}

/// Largest deviation between the library's first epoch and the oracle's, over
/// both the end iterate and the snapshot.
pub fn epoch_case_error(c: &EpochCase) -> f64 {
    use vropt::optimizers::{run_with, EpochLength, FixedIndices, NoObserver, StepSize};
    use vropt::{Algo, OptimizerSpec, UpdateMode};
    let obj = c.problem.objective();
    let x0: Vec<f64> = (0..c.problem.d()).map(|j| 0.3 - 0.2 * j as f64).collect();
    let mut spec = OptimizerSpec::new(c.algo)
        .epoch_length(EpochLength::Fixed(c.m))
        .epochs(1)
        .batch(c.batches[0].len())
        .init(x0.clone());
    if !c.algo.is_katyusha() {
        spec = spec.eta(StepSize::Value(c.eta));
    }
    if !matches!(c.algo, Algo::ProxSvrg | Algo::KatyushaI | Algo::KatyushaII | Algo::FullProxGd) {
        spec = spec.mode(if c.proximal { UpdateMode::Proximal } else { UpdateMode::SmoothGradient });
    }
    let log = run_with(&obj, &spec, &mut FixedIndices::batches(c.batches.clone()), &mut NoObserver).unwrap();
    let want = one_epoch(&c.problem, c.oracle, c.proximal, c.eta, c.m, &c.batches, &x0);
    let e = &log.epochs[0];
    max_abs_diff(&e.x_end, &want.x_end).max(max_abs_diff(&e.x_snapshot, &want.x_snapshot))
}

pub const RIDGE_LAMBDA1: f64 = 1e-4;
pub const LASSO_LAMBDA2: f64 = 1e-4;

/// Unit-row Gaussian regression, n = 1000, d = 50, noise 0.1.
pub fn ridge_fixture(seed: u64) -> CompositeObjective {
    let ds = vropt::dataset::synth_regression(1000, 50, 0.1, seed).unwrap();
    CompositeObjective::new(Arc::new(ds), LossKind::Squared, Regularizer::new(RIDGE_LAMBDA1, 0.0).unwrap()).unwrap()
}

pub fn lasso_fixture(seed: u64) -> CompositeObjective {
    let ds = vropt::dataset::synth_regression(1000, 50, 0.1, seed).unwrap();
    CompositeObjective::new(Arc::new(ds), LossKind::Squared, Regularizer::new(0.0, LASSO_LAMBDA2).unwrap()).unwrap()
}

/// n = 20, d = 3 smooth problem used by the estimator checks.
pub fn small_smooth(seed: u64, logistic: bool) -> CompositeObjective {
    let ds = if logistic {
        vropt::dataset::synth_classification(20, 3, 0.1, seed).unwrap()
    } else {
        vropt::dataset::synth_regression(20, 3, 0.3, seed).unwrap()
    };
    let loss = if logistic { LossKind::Logistic } else { LossKind::Squared };
    CompositeObjective::new(Arc::new(ds), loss, Regularizer::new(1e-2, 0.0).unwrap()).unwrap()
}

pub fn reference(obj: &CompositeObjective) -> vropt::ReferenceSolution {
    vropt::harness::compute_reference(obj, &vropt::harness::ReferenceConfig::default(), None).unwrap()
}

/// Gaps below this are indistinguishable from rounding in `F` itself.
pub fn gap_floor(f_star: f64) -> f64 {
    16.0 * f64::EPSILON * f_star.abs().max(1e-300)
}

/// Uniform point in the box `center ± radius`.
pub fn perturb(rng: &mut ChaCha8Rng, center: &[f64], radius: f64) -> Vec<f64> {
    center.iter().map(|c| c + rng.random_range(-radius..radius)).collect()
}
