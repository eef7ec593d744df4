//! Composite objective `F(x) = (1/n) Σ f_i(x) + g(x)` for linear models.
//!
//! Each component is `f_i(x) = φ(a_iᵀx, b_i)` with `φ` the logistic or squared
//! loss, so `∇f_i(x) = φ'(a_iᵀx, b_i) a_i`. With `smooth_fold` the L2 term
//! `(λ1/2)‖x‖²` moves into every `f_i`; the value of `F` is unchanged but the
//! gradient gains `λ1 x` and the proximal part of `g` loses its L2 weight.

use std::sync::Arc;

use crate::dataset::SparseDataset;
use crate::error::{Error, Result};
use crate::parallel::Reduction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// `log(1 + exp(-b z))`, labels in {-1, +1}.
    Logistic,
    /// `(z - b)² / 2`.
    Squared,
}

impl LossKind {
    #[inline]
    pub fn value(self, z: f64, b: f64) -> f64 {
        match self {
            LossKind::Logistic => {
                let t = -b * z;
                t.max(0.0) + (-t.abs()).exp().ln_1p()
            }
            LossKind::Squared => 0.5 * (z - b) * (z - b),
        }
    }

    /// Derivative with respect to the margin `z`.
    #[inline]
    pub fn derivative(self, z: f64, b: f64) -> f64 {
        match self {
            LossKind::Logistic => -b * sigmoid(-b * z),
            LossKind::Squared => z - b,
        }
    }

    /// Upper bound on the second derivative in `z`.
    pub fn curvature_bound(self) -> f64 {
        match self {
            LossKind::Logistic => 0.25,
            LossKind::Squared => 1.0,
        }
    }
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Elastic-net weights: `g(x) = (λ1/2)‖x‖² + λ2‖x‖₁`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Regularizer {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Regularizer {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        for (name, v) in [("lambda1", lambda1), ("lambda2", lambda2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(Regularizer { lambda1, lambda2 })
    }

    pub fn none() -> Self {
        Regularizer::default()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let (sq, abs) = x.iter().fold((0.0, 0.0), |(s, a), v| (s + v * v, a + v.abs()));
        0.5 * self.lambda1 * sq + self.lambda2 * abs
    }

    pub fn is_smooth(&self) -> bool {
        self.lambda2 == 0.0
    }

    /// `∇g(x) = λ1 x`, added into `out`. Only meaningful when `λ2 = 0`.
    #[inline]
    pub fn add_gradient(&self, x: &[f64], out: &mut [f64]) {
        if self.lambda1 != 0.0 {
            for (o, v) in out.iter_mut().zip(x) {
                *o += self.lambda1 * v;
            }
        }
    }

    /// `argmin_x (1/2η)‖x − y‖² + g(x)`, componentwise
    /// `soft(y_j, ηλ2) / (1 + ηλ1)`.
    pub fn prox(&self, eta: f64, y: &[f64]) -> Result<Vec<f64>> {
        let mut out = y.to_vec();
        self.prox_in_place(eta, &mut out)?;
        Ok(out)
    }

    pub fn prox_in_place(&self, eta: f64, y: &mut [f64]) -> Result<()> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::config(format!("proximal step must be positive, got {eta}")));
        }
        let t = eta * self.lambda2;
        let scale = 1.0 / (1.0 + eta * self.lambda1);
        if t == 0.0 && scale == 1.0 {
            return Ok(());
        }
        for v in y.iter_mut() {
            *v = soft_threshold(*v, t) * scale;
        }
        Ok(())
    }
}

#[inline]
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// `prox(reg, eta, y)` as a free function.
pub fn prox(reg: &Regularizer, eta: f64, y: &[f64]) -> Result<Vec<f64>> {
    reg.prox(eta, y)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LipschitzSource {
    Analytic,
    Override,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzInfo {
    pub l: f64,
    pub source: LipschitzSource,
}

#[derive(Clone, Debug)]
pub struct CompositeObjective {
    data: Arc<SparseDataset>,
    loss: LossKind,
    reg: Regularizer,
    smooth_fold: bool,
    reduction: Reduction,
    lipschitz_override: Option<f64>,
    labels_remapped: bool,
}

impl CompositeObjective {
    /// Folds λ1 into the components whenever λ2 = 0.
    pub fn new(data: Arc<SparseDataset>, loss: LossKind, reg: Regularizer) -> Result<Self> {
        let fold = reg.lambda2 == 0.0;
        Self::with_fold(data, loss, reg, fold)
    }

    /// Logistic losses need ±1 labels. A {0, 1} labelling is remapped to
    /// {-1, +1}; anything else is rejected.
    pub fn with_fold(
        data: Arc<SparseDataset>,
        loss: LossKind,
        reg: Regularizer,
        smooth_fold: bool,
    ) -> Result<Self> {
        if smooth_fold && reg.lambda2 != 0.0 {
            return Err(Error::config("folding the L2 term requires lambda2 = 0"));
        }
        let mut data = data;
        let mut labels_remapped = false;
        if loss == LossKind::Logistic {
            let labels = data.labels();
            if !labels.iter().all(|&b| b == 1.0 || b == -1.0) {
                if labels.iter().all(|&b| b == 0.0 || b == 1.0) {
                    log::warn!("remapping {{0, 1}} labels to {{-1, +1}} for logistic loss");
                    let mapped = labels.iter().map(|&b| if b == 0.0 { -1.0 } else { 1.0 }).collect();
                    data = Arc::new(data.with_labels(mapped));
                    labels_remapped = true;
                } else {
                    return Err(Error::Labels("logistic loss needs labels in {-1, +1}".into()));
                }
            }
        }
        Ok(CompositeObjective {
            data,
            loss,
            reg,
            smooth_fold,
            reduction: Reduction::default(),
            lipschitz_override: None,
            labels_remapped,
        })
    }

    pub fn with_reduction(mut self, reduction: Reduction) -> Self {
        self.reduction = reduction;
        self
    }

    pub fn with_lipschitz_override(mut self, l: Option<f64>) -> Result<Self> {
        if let Some(v) = l {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("Lipschitz override must be positive, got {v}")));
            }
        }
        self.lipschitz_override = l;
        Ok(self)
    }

    pub fn data(&self) -> &Arc<SparseDataset> {
        &self.data
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn regularizer(&self) -> Regularizer {
        self.reg
    }

    pub fn smooth_fold(&self) -> bool {
        self.smooth_fold
    }

    pub fn reduction(&self) -> Reduction {
        self.reduction
    }

    pub fn labels_remapped(&self) -> bool {
        self.labels_remapped
    }

    /// λ1 carried inside each component (zero unless folded).
    pub fn folded_lambda(&self) -> f64 {
        if self.smooth_fold { self.reg.lambda1 } else { 0.0 }
    }

    /// The part of `g` that is not folded into the components.
    pub fn prox_reg(&self) -> Regularizer {
        if self.smooth_fold {
            Regularizer { lambda1: 0.0, lambda2: self.reg.lambda2 }
        } else {
            self.reg
        }
    }

    /// Strong-convexity modulus contributed by the regularizer.
    pub fn strong_convexity(&self) -> f64 {
        self.reg.lambda1
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n() {
            return Err(Error::IndexOutOfRange { index: i, n: self.n() });
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn margin_derivative(&self, i: usize, x: &[f64]) -> f64 {
        let z = self.data.row(i).dot(x);
        self.loss.derivative(z, self.data.labels()[i])
    }

    /// `f_i(x)`, including `(λ1/2)‖x‖²` when folded.
    pub fn component_value(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.check_index(i)?;
        let z = self.data.row(i).dot(x);
        let mut v = self.loss.value(z, self.data.labels()[i]);
        let lam = self.folded_lambda();
        if lam != 0.0 {
            v += 0.5 * lam * x.iter().map(|t| t * t).sum::<f64>();
        }
        Ok(v)
    }

    /// `∇f_i(x)` as a dense vector.
    pub fn component_grad(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_index(i)?;
        let mut g = vec![0.0; self.dim()];
        self.data.row(i).axpy_into(self.margin_derivative(i, x), &mut g);
        let lam = self.folded_lambda();
        if lam != 0.0 {
            for (gj, xj) in g.iter_mut().zip(x) {
                *gj += lam * xj;
            }
        }
        Ok(g)
    }

    /// `(1/n) Σ_i ∇f_i(x)`.
    pub fn full_grad(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut g = self.reduction.sum_vec(n, self.dim(), |range, acc| {
            for i in range {
                let s = self.margin_derivative(i, x);
                self.data.row(i).axpy_into(s, acc);
            }
        });
        let n_f = n as f64;
        let lam = self.folded_lambda();
        for (gj, xj) in g.iter_mut().zip(x) {
            *gj /= n_f;
            if lam != 0.0 {
                *gj += lam * xj;
            }
        }
        g
    }

    /// Mean loss `(1/n) Σ φ(a_iᵀx, b_i)` without any regularization.
    pub fn mean_loss(&self, x: &[f64]) -> f64 {
        let labels = self.data.labels();
        let total = self.reduction.sum(self.n(), |range| {
            let mut s = 0.0;
            for i in range {
                s += self.loss.value(self.data.row(i).dot(x), labels[i]);
            }
            s
        });
        total / self.n() as f64
    }

    /// `f(x) = (1/n) Σ f_i(x)`; equals `F` minus the unfolded part of `g`.
    pub fn smooth_value(&self, x: &[f64]) -> f64 {
        let lam = self.folded_lambda();
        self.mean_loss(x) + 0.5 * lam * x.iter().map(|t| t * t).sum::<f64>()
    }

    /// `F(x)`. The result does not depend on `smooth_fold`.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.mean_loss(x) + self.reg.value(x)
    }

    /// Analytic bound `max_i ‖a_i‖² · sup φ''` (+ λ1 when folded), unless an
    /// override is set.
    pub fn lipschitz(&self) -> Result<LipschitzInfo> {
        if let Some(l) = self.lipschitz_override {
            return Ok(LipschitzInfo { l, source: LipschitzSource::Override });
        }
        let max_sq = self.data.rows().iter().map(|r| r.norm_sq()).fold(0.0, f64::max);
        let l = max_sq * self.loss.curvature_bound() + self.folded_lambda();
        if !(l > 0.0) {
            return Err(Error::config("Lipschitz constant is zero (all rows empty); pass an override"));
        }
        Ok(LipschitzInfo { l, source: LipschitzSource::Analytic })
    }

    /// `‖(x − prox_{η,g}(x − η∇f(x))) / η‖`, zero exactly at minimizers.
    pub fn gradient_mapping_norm(&self, x: &[f64], eta: f64) -> Result<f64> {
        let g = self.full_grad(x);
        let mut y: Vec<f64> = x.iter().zip(&g).map(|(xj, gj)| xj - eta * gj).collect();
        self.prox_reg().prox_in_place(eta, &mut y)?;
        Ok(x.iter().zip(&y).map(|(a, b)| ((a - b) / eta).powi(2)).sum::<f64>().sqrt())
    }
}
