//! Depth-first lexicographic enumeration of k-subsets with a prefix residual
//! stack.
//!
//! Level `m` of the stack holds `Y − X_{j_1} − … − X_{j_m}`, always
//! subtracted in ascending column order, so the residual of a leaf is
//! bit-identical to a fresh computation over the sorted support. Leaves are
//! scored without materializing their residual.

use std::sync::atomic::{AtomicU64, Ordering};

use super::NormMode;

/// Column-major copy of the design with per-column norms.
pub(crate) struct Columns {
    pub n: usize,
    pub p: usize,
    data: Vec<f64>,
    pub norms: Vec<f64>,
}

impl Columns {
    pub fn from_row_major(design: &[f64], n: usize, p: usize) -> Self {
        let mut data = vec![0.0; n * p];
        for i in 0..n {
            for j in 0..p {
                data[j * n + i] = design[i * p + j];
            }
        }
        let norms = data.chunks_exact(n.max(1)).map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
        Columns { n, p, data, norms }
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }
}

/// Restricts supports to exactly `need_planted` indices from the mask and
/// `need_other` from its complement.
pub(crate) struct Constraint {
    mask: Vec<bool>,
    need_planted: usize,
    need_other: usize,
    planted_after: Vec<usize>,
    other_after: Vec<usize>,
}

impl Constraint {
    pub fn new(mask: Vec<bool>, need_planted: usize, need_other: usize) -> Self {
        let p = mask.len();
        let mut planted_after = vec![0; p + 1];
        let mut other_after = vec![0; p + 1];
        for j in (0..p).rev() {
            planted_after[j] = planted_after[j + 1] + mask[j] as usize;
            other_after[j] = other_after[j + 1] + (!mask[j]) as usize;
        }
        Constraint { mask, need_planted, need_other, planted_after, other_after }
    }

    /// Whether picking `j` as the `(chosen + 1)`-th index, with `planted`
    /// planted indices already chosen, can still complete a valid support.
    #[inline]
    fn admits(&self, j: usize, chosen: usize, planted: usize) -> bool {
        let pc = planted + self.mask[j] as usize;
        let oc = chosen + 1 - pc;
        pc <= self.need_planted
            && oc <= self.need_other
            && self.need_planted - pc <= self.planted_after[j + 1]
            && self.need_other - oc <= self.other_after[j + 1]
    }
}

/// Receives every evaluated leaf.
pub(crate) trait Sink {
    /// Subtrees whose lower bound exceeds this value are skipped.
    fn cutoff(&self) -> f64;
    fn visit(&mut self, support: &[usize], objective: f64, planted: usize);
}

/// Monotone shared minimum over non-negative `f64`, stored as bits.
pub(crate) struct SharedBest(AtomicU64);

impl SharedBest {
    pub fn new() -> Self {
        SharedBest(AtomicU64::new(f64::INFINITY.to_bits()))
    }

    pub fn get(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::Relaxed))
    }

    /// Non-negative floats order like their bit patterns.
    pub fn offer(&self, value: f64) {
        debug_assert!(value >= 0.0);
        self.0.fetch_min(value.to_bits(), Ordering::Relaxed);
    }
}

pub(crate) struct Search<'a> {
    pub cols: &'a Columns,
    pub y: &'a [f64],
    pub k: usize,
    pub norm: NormMode,
    pub constraint: Option<&'a Constraint>,
    pub mask: Option<&'a [bool]>,
    /// `top_norms[s]` = sum of the `s` largest column norms, when pruning.
    pub top_norms: Option<Vec<f64>>,
}

impl<'a> Search<'a> {
    pub fn top_norm_sums(cols: &Columns, k: usize) -> Vec<f64> {
        let mut norms = cols.norms.clone();
        norms.sort_by(|a, b| b.total_cmp(a));
        let mut sums = vec![0.0; k + 1];
        for s in 1..=k {
            sums[s] = sums[s - 1] + norms[s - 1];
        }
        sums
    }

    fn is_planted(&self, j: usize) -> usize {
        self.mask.map_or(0, |m| m[j] as usize)
    }

    fn admits(&self, j: usize, chosen: usize, planted: usize) -> bool {
        self.constraint.is_none_or(|c| c.admits(j, chosen, planted))
    }

    /// Valid first indices, in ascending order.
    pub fn leads(&self) -> Vec<usize> {
        (0..=self.cols.p - self.k).filter(|&j| self.admits(j, 0, 0)).collect()
    }

    #[inline]
    fn score(&self, residual: &[f64], col: &[f64]) -> f64 {
        match self.norm {
            NormMode::L2Scaled => {
                let mut ss = 0.0;
                for (r, c) in residual.iter().zip(col) {
                    let d = r - c;
                    ss += d * d;
                }
                ss.sqrt() / (self.cols.n as f64).sqrt()
            }
            NormMode::Linf => {
                let mut m = 0.0f64;
                for (r, c) in residual.iter().zip(col) {
                    m = m.max((r - c).abs());
                }
                m
            }
        }
    }

    /// Enumerates every admissible support whose smallest index is `lead`.
    /// Returns the number of leaves scored.
    pub fn run_lead<S: Sink>(&self, lead: usize, sink: &mut S) -> u64 {
        let n = self.cols.n;
        let mut support = Vec::with_capacity(self.k);
        support.push(lead);
        let planted = self.is_planted(lead);
        if self.k == 1 {
            let obj = self.score(self.y, self.cols.col(lead));
            sink.visit(&support, obj, planted);
            return 1;
        }
        let mut stack = vec![vec![0.0; n]; self.k];
        for (dst, (y, c)) in stack[1].iter_mut().zip(self.y.iter().zip(self.cols.col(lead))) {
            *dst = y - c;
        }
        if self.pruned(&stack[1], 1, sink) {
            return 0;
        }
        let mut leaves = 0;
        self.descend(1, lead + 1, planted, &mut stack, &mut support, sink, &mut leaves);
        leaves
    }

    fn pruned<S: Sink>(&self, residual: &[f64], chosen: usize, sink: &S) -> bool {
        let Some(top) = &self.top_norms else { return false };
        let norm = residual.iter().map(|r| r * r).sum::<f64>().sqrt();
        let bound = (norm - top[self.k - chosen]) / (self.cols.n as f64).sqrt();
        bound * (1.0 - 1e-9) > sink.cutoff()
    }

    #[allow(clippy::too_many_arguments)]
    fn descend<S: Sink>(
        &self,
        chosen: usize,
        start: usize,
        planted: usize,
        stack: &mut [Vec<f64>],
        support: &mut Vec<usize>,
        sink: &mut S,
        leaves: &mut u64,
    ) {
        let p = self.cols.p;
        let remaining = self.k - chosen;
        if remaining == 1 {
            let residual = &stack[chosen];
            for j in start..p {
                if !self.admits(j, chosen, planted) {
                    continue;
                }
                let obj = self.score(residual, self.cols.col(j));
                support.push(j);
                sink.visit(support, obj, planted + self.is_planted(j));
                support.pop();
                *leaves += 1;
            }
            return;
        }
        for j in start..=(p - remaining) {
            if !self.admits(j, chosen, planted) {
                continue;
            }
            let (head, tail) = stack.split_at_mut(chosen + 1);
            let (src, dst) = (&head[chosen], &mut tail[0]);
            for ((d, r), c) in dst.iter_mut().zip(src.iter()).zip(self.cols.col(j)) {
                *d = r - c;
            }
            if self.pruned(&stack[chosen + 1], chosen + 1, sink) {
                continue;
            }
            support.push(j);
            self.descend(chosen + 1, j + 1, planted + self.is_planted(j), stack, support, sink, leaves);
            support.pop();
        }
    }
}
