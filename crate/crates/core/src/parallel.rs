//! Deterministic chunked reductions.
//!
//! A reduction over `0..n` is split into `chunks` contiguous ranges of
//! near-equal length. Each range is accumulated sequentially in index order and
//! the partial results are merged by a fixed pairwise tree. The result depends
//! only on `chunks`, so [`Exec::Sequential`] and [`Exec::Parallel`] agree bit
//! for bit.

use std::ops::Range;

/// How chunks are scheduled. Without the `parallel` feature `Parallel` runs
/// the chunks in order on the calling thread.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Exec {
    #[default]
    Sequential,
    Parallel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Reduction {
    chunks: usize,
    pub exec: Exec,
}

impl Default for Reduction {
    fn default() -> Self {
        Reduction { chunks: 1, exec: Exec::Sequential }
    }
}

impl Reduction {
    /// `chunks` is clamped to at least one. More than one chunk selects
    /// parallel scheduling.
    pub fn with_chunks(chunks: usize) -> Self {
        let chunks = chunks.max(1);
        let exec = if chunks > 1 { Exec::Parallel } else { Exec::Sequential };
        Reduction { chunks, exec }
    }

    pub fn chunks(&self) -> usize {
        self.chunks
    }

    /// Reads `VROPT_THREADS`; unset or unparsable means one chunk.
    pub fn from_env() -> Self {
        let chunks = std::env::var("VROPT_THREADS")
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .unwrap_or(1);
        Self::with_chunks(chunks)
    }

    fn ranges(&self, n: usize) -> Vec<Range<usize>> {
        let c = self.chunks.min(n.max(1));
        let base = n / c;
        let extra = n % c;
        let mut out = Vec::with_capacity(c);
        let mut start = 0;
        for k in 0..c {
            let len = base + usize::from(k < extra);
            out.push(start..start + len);
            start += len;
        }
        out
    }

    /// Sums `body(range, acc)` over chunks into a length-`len` vector.
    pub fn sum_vec<F>(&self, n: usize, len: usize, body: F) -> Vec<f64>
    where
        F: Fn(Range<usize>, &mut [f64]) + Sync,
    {
        let ranges = self.ranges(n);
        let run = |r: Range<usize>| {
            let mut acc = vec![0.0; len];
            body(r, &mut acc);
            acc
        };
        let partials = self.map(ranges, run);
        tree_merge(partials, |mut a, b| {
            for (x, y) in a.iter_mut().zip(&b) {
                *x += *y;
            }
            a
        })
        .unwrap_or_else(|| vec![0.0; len])
    }

    /// Scalar version of [`Reduction::sum_vec`].
    pub fn sum<F>(&self, n: usize, body: F) -> f64
    where
        F: Fn(Range<usize>) -> f64 + Sync,
    {
        let partials = self.map(self.ranges(n), body);
        tree_merge(partials, |a, b| a + b).unwrap_or(0.0)
    }

    #[cfg(feature = "parallel")]
    fn map<T, F>(&self, ranges: Vec<Range<usize>>, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(Range<usize>) -> T + Sync,
    {
        use rayon::prelude::*;
        match self.exec {
            Exec::Parallel if ranges.len() > 1 => ranges.into_par_iter().map(&f).collect(),
            _ => ranges.into_iter().map(f).collect(),
        }
    }

    #[cfg(not(feature = "parallel"))]
    fn map<T, F>(&self, ranges: Vec<Range<usize>>, f: F) -> Vec<T>
    where
        F: Fn(Range<usize>) -> T,
    {
        ranges.into_iter().map(f).collect()
    }
}

/// Merges neighbours pairwise, level by level: ((p0+p1)+(p2+p3))+...
fn tree_merge<T>(mut level: Vec<T>, merge: impl Fn(T, T) -> T) -> Option<T> {
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(merge(a, b)),
                None => next.push(a),
            }
        }
        level = next;
    }
    level.pop()
}

/// Runs `f` over `items`, concurrently when the `parallel` feature is on and
/// `exec` asks for it. Output order matches input order.
pub fn map_items<I, T, F>(exec: Exec, items: Vec<I>, f: F) -> Vec<T>
where
    I: Send,
    T: Send,
    F: Fn(I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if exec == Exec::Parallel {
            return items.into_par_iter().map(f).collect();
        }
    }
    let _ = exec;
    items.into_iter().map(f).collect()
}
