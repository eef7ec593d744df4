//! Row-sparse datasets: LIBSVM text I/O, unit-length normalization and seeded
//! synthetic problems.
//!
//! ```text
//! +1 1:0.5 3:0.5   # comment
//! -1 2:1
//! ```
//!
//! Feature ids are 1-based and strictly ascending on each line; they are stored
//! 0-based. No intercept column is added.

use std::fmt::Write as _;
use std::io::Read;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVector {
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVector {
    /// Builds a vector from parallel index/value lists. Indices must be
    /// strictly ascending and values finite.
    pub fn new(indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::config("index and value lists differ in length"));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("indices must be strictly ascending"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("values must be finite"));
        }
        Ok(SparseVector { indices, values })
    }

    pub fn from_dense(values: &[f64]) -> Self {
        let (indices, values) = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .unzip();
        SparseVector { indices, values }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Inner product with a dense vector, accumulated in index order.
    #[inline]
    pub fn dot(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (&j, &v) in self.indices.iter().zip(&self.values) {
            s += v * x[j];
        }
        s
    }

    /// `out += scale * self`.
    #[inline]
    pub fn axpy_into(&self, scale: f64, out: &mut [f64]) {
        for (&j, &v) in self.indices.iter().zip(&self.values) {
            out[j] += scale * v;
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn max_index(&self) -> Option<usize> {
        self.indices.last().copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseDataset {
    rows: Vec<SparseVector>,
    labels: Vec<f64>,
    dim: usize,
    normalized: bool,
}

impl SparseDataset {
    pub fn new(rows: Vec<SparseVector>, labels: Vec<f64>, dim: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if rows.len() != labels.len() {
            return Err(Error::config(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if dim == 0 {
            return Err(Error::config("dataset dimension must be at least 1"));
        }
        if let Some(k) = rows.iter().position(|r| r.max_index().is_some_and(|j| j >= dim)) {
            return Err(Error::config(format!("row {k} has a feature outside dimension {dim}")));
        }
        if labels.iter().any(|b| !b.is_finite()) {
            return Err(Error::Labels("labels must be finite".into()));
        }
        Ok(SparseDataset { rows, labels, dim, normalized: false })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[SparseVector] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &SparseVector {
        &self.rows[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Raises the dimension, e.g. to align a test split with its training
    /// split. Shrinking is rejected.
    pub fn with_dim(mut self, dim: usize) -> Result<Self> {
        if dim < self.dim {
            return Err(Error::config(format!(
                "cannot lower dimension from {} to {dim}",
                self.dim
            )));
        }
        self.dim = dim;
        Ok(self)
    }

    pub(crate) fn with_labels(&self, labels: Vec<f64>) -> Self {
        SparseDataset { labels, ..self.clone() }
    }

    /// Number of rows with no nonzero entry.
    pub fn zero_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.is_zero()).count()
    }

    /// Serializes to LIBSVM text. Values use the shortest representation
    /// that parses back to the same bits.
    pub fn to_libsvm(&self) -> String {
        let mut out = String::new();
        for (row, label) in self.rows.iter().zip(&self.labels) {
            write!(out, "{label}").unwrap();
            for (j, v) in row.iter() {
                write!(out, " {}:{v}", j + 1).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Parses LIBSVM text. `#` starts a comment; blank lines are skipped.
pub fn parse_libsvm<R: Read>(mut input: R) -> Result<SparseDataset> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    parse_libsvm_str(&text)
}

pub fn parse_libsvm_str(text: &str) -> Result<SparseDataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut dim = 0usize;

    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_ascii_whitespace();
        let label_tok = tokens.next().expect("nonempty line has a token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| err(format!("malformed label `{label_tok}`")))?;
        if !label.is_finite() {
            return Err(err(format!("non-finite label `{label_tok}`")));
        }

        let mut indices = Vec::new();
        let mut values = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("malformed token `{tok}`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| err(format!("malformed feature index in `{tok}`")))?;
            if idx < 1 {
                return Err(err(format!("feature index must be >= 1 in `{tok}`")));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| err(format!("malformed feature value in `{tok}`")))?;
            if !val.is_finite() {
                return Err(err(format!("non-finite feature value in `{tok}`")));
            }
            let j = idx - 1;
            if indices.last().is_some_and(|&prev| j <= prev) {
                return Err(err(format!("non-ascending indices at `{tok}`")));
            }
            indices.push(j);
            values.push(val);
        }
        if let Some(&last) = indices.last() {
            dim = dim.max(last + 1);
        }
        rows.push(SparseVector { indices, values });
        labels.push(label);
    }

    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if dim == 0 {
        return Err(Error::config("dataset has no features"));
    }
    SparseDataset::new(rows, labels, dim)
}

/// Scales every nonzero row to unit Euclidean length. All-zero rows are kept
/// as they are; their count is returned alongside the dataset.
pub fn normalize_rows(ds: SparseDataset) -> (SparseDataset, usize) {
    let mut zero = 0;
    let SparseDataset { rows, labels, dim, .. } = ds;
    let rows = rows
        .into_iter()
        .map(|mut r| {
            let norm = r.norm_sq().sqrt();
            if norm == 0.0 {
                zero += 1;
            } else {
                for v in &mut r.values {
                    *v /= norm;
                }
            }
            r
        })
        .collect();
    if zero > 0 {
        log::warn!("{zero} all-zero rows left unnormalized");
    }
    (SparseDataset { rows, labels, dim, normalized: true }, zero)
}

fn gaussian_unit_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<SparseVector> {
    (0..n)
        .map(|_| {
            let mut row: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in &mut row {
                *v /= norm;
            }
            SparseVector { indices: (0..d).collect(), values: row }
        })
        .collect()
}

/// Dense Gaussian regression problem with unit-length rows. Returns the
/// dataset together with the generating weight vector.
pub fn synth_regression_with_truth(
    n: usize,
    d: usize,
    noise_std: f64,
    seed: u64,
) -> Result<(SparseDataset, Vec<f64>)> {
    if n == 0 || d == 0 {
        return Err(Error::config("synthetic problems need n >= 1 and d >= 1"));
    }
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return Err(Error::config("noise_std must be finite and non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_true: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let rows = gaussian_unit_rows(&mut rng, n, d);
    let labels = rows
        .iter()
        .map(|r| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let clean = r.dot(&x_true);
            if noise_std == 0.0 { clean } else { clean + noise_std * z }
        })
        .collect();
    let ds = SparseDataset { rows, labels, dim: d, normalized: true };
    Ok((ds, x_true))
}

pub fn synth_regression(n: usize, d: usize, noise_std: f64, seed: u64) -> Result<SparseDataset> {
    synth_regression_with_truth(n, d, noise_std, seed).map(|(ds, _)| ds)
}

/// Binary classification problem: labels are `sign(<a_i, x_true>)`, each
/// flipped independently with probability `flip_prob`.
pub fn synth_classification(n: usize, d: usize, flip_prob: f64, seed: u64) -> Result<SparseDataset> {
    if n == 0 || d == 0 {
        return Err(Error::config("synthetic problems need n >= 1 and d >= 1"));
    }
    if !(0.0..=1.0).contains(&flip_prob) {
        return Err(Error::config("flip probability must lie in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_true: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let rows = gaussian_unit_rows(&mut rng, n, d);
    let labels = rows
        .iter()
        .map(|r| {
            let u: f64 = rand::Rng::random(&mut rng);
            let b = if r.dot(&x_true) >= 0.0 { 1.0 } else { -1.0 };
            if u < flip_prob { -b } else { b }
        })
        .collect();
    Ok(SparseDataset { rows, labels, dim: d, normalized: true })
}
