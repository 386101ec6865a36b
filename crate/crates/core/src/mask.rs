//! Support patterns for sparsity-constrained couplings.
//!
//! A [`SupportMask`] marks the entries a coupling may use; the complement is
//! the index set held at exactly zero. Scaling a kernel supported on the mask
//! only converges when the pattern has total support, which
//! [`total_support_check`] decides.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::marginal::Marginal;
use crate::sinkhorn::{sinkhorn_scale, SinkhornConfig};

/// Largest `min(m, n)` for which total support is decided exactly by flows.
pub const DEFAULT_EXACT_THRESHOLD: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportMask {
    rows: usize,
    cols: usize,
    /// Row-major.
    allowed: Vec<bool>,
}

impl SupportMask {
    pub fn new(rows: usize, cols: usize, allowed: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 || allowed.len() != rows * cols {
            return Err(Error::Validation(format!(
                "mask of {} entries does not fit a {rows}x{cols} shape",
                allowed.len()
            )));
        }
        Ok(Self { rows, cols, allowed })
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            allowed: vec![true; rows * cols],
        }
    }

    /// Block-diagonal pattern from a list of `(rows, cols)` block sizes.
    pub fn block_diagonal(blocks: &[(usize, usize)]) -> Result<Self> {
        let rows: usize = blocks.iter().map(|b| b.0).sum();
        let cols: usize = blocks.iter().map(|b| b.1).sum();
        let mut allowed = vec![false; rows * cols];
        let (mut r0, mut c0) = (0, 0);
        for &(br, bc) in blocks {
            for i in r0..r0 + br {
                for j in c0..c0 + bc {
                    allowed[i * cols + j] = true;
                }
            }
            r0 += br;
            c0 += bc;
        }
        Self::new(rows, cols, allowed)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn is_allowed(&self, row: usize, col: usize) -> bool {
        self.allowed[row * self.cols + col]
    }

    pub fn allowed_count(&self) -> usize {
        self.allowed.iter().filter(|a| **a).count()
    }

    /// 1.0 on allowed entries, 0.0 elsewhere.
    pub fn indicator(&self) -> DMatrix<f64> {
        DMatrix::from_fn(
            self.rows,
            self.cols,
            |i, j| {
                if self.is_allowed(i, j) {
                    1.0
                } else {
                    0.0
                }
            },
        )
    }

    /// Checks row/column coverage, total support and underdetermination.
    pub fn validate(&self, exact_threshold: usize) -> Result<()> {
        for i in 0..self.rows {
            if !(0..self.cols).any(|j| self.is_allowed(i, j)) {
                return Err(Error::Structural { axis: "row", index: i });
            }
        }
        for j in 0..self.cols {
            if !(0..self.rows).any(|i| self.is_allowed(i, j)) {
                return Err(Error::Structural {
                    axis: "column",
                    index: j,
                });
            }
        }
        if let TotalSupport::Fail { row, col } = total_support_check(self, exact_threshold) {
            return Err(Error::Support { row, col });
        }
        let required = self.rows + self.cols - 1;
        let allowed = self.allowed_count();
        if allowed <= required {
            return Err(Error::Rank { allowed, required });
        }
        Ok(())
    }

    /// Connected components of the bipartite row/column support graph.
    /// Returns a component label per row and per column.
    pub(crate) fn components(&self) -> (Vec<usize>, Vec<usize>) {
        let (m, n) = (self.rows, self.cols);
        let mut parent: Vec<usize> = (0..m + n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for i in 0..m {
            for j in 0..n {
                if self.is_allowed(i, j) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, m + j));
                    if a != b {
                        parent[a] = b;
                    }
                }
            }
        }
        let mut label = vec![usize::MAX; m + n];
        let mut next = 0;
        let mut out = Vec::with_capacity(m + n);
        for x in 0..m + n {
            let r = find(&mut parent, x);
            if label[r] == usize::MAX {
                label[r] = next;
                next += 1;
            }
            out.push(label[r]);
        }
        let cols = out.split_off(m);
        (out, cols)
    }
}

impl fmt::Display for SupportMask {
    /// One line per row of `0`/`1` characters.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            for j in 0..self.cols {
                f.write_str(if self.is_allowed(i, j) { "1" } else { "0" })?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl FromStr for SupportMask {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut rows = 0;
        let mut cols = None;
        let mut allowed = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let before = allowed.len();
            for ch in line.chars() {
                match ch {
                    '0' => allowed.push(false),
                    '1' => allowed.push(true),
                    c if c.is_whitespace() || c == ',' => {}
                    c => {
                        return Err(Error::Validation(format!(
                            "mask line {}: unexpected character {c:?}",
                            lineno + 1
                        )))
                    }
                }
            }
            let width = allowed.len() - before;
            match cols {
                None => cols = Some(width),
                Some(w) if w != width => {
                    return Err(Error::Validation(format!(
                        "mask line {} has {width} entries, expected {w}",
                        lineno + 1
                    )))
                }
                _ => {}
            }
            rows += 1;
        }
        Self::new(rows, cols.unwrap_or(0), allowed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TotalSupport {
    Pass,
    /// First violating entry in row-major order (0-based).
    Fail {
        row: usize,
        col: usize,
    },
}

/// Decides whether every allowed entry lies on a positive diagonal.
///
/// Rectangular patterns are treated through the row-replication reduction:
/// each row is copied `n` times and each column `m` times, and a positive
/// diagonal of the blown-up square pattern is an integral flow sending `n`
/// units out of every row and `m` units into every column. An allowed entry
/// lies on such a diagonal iff it carries flow in some feasible flow, which is
/// read off the strongly connected components of the residual graph.
///
/// Above `exact_threshold` (on `min(m, n)`) a Sinkhorn probe on the 0/1
/// pattern is used instead: patterns without total support make the scaling
/// stall, with mass draining from the offending entries.
pub fn total_support_check(mask: &SupportMask, exact_threshold: usize) -> TotalSupport {
    let (m, n) = mask.shape();
    if m.min(n) <= exact_threshold {
        flow_check(mask)
    } else {
        sinkhorn_probe(mask)
    }
}

fn flow_check(mask: &SupportMask) -> TotalSupport {
    let (m, n) = mask.shape();
    let first_allowed = || {
        (0..m)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .find(|&(i, j)| mask.is_allowed(i, j))
            .map(|(row, col)| TotalSupport::Fail { row, col })
            .unwrap_or(TotalSupport::Fail { row: 0, col: 0 })
    };
    let mut net = FlowNetwork::new(m + n + 2);
    let (source, sink) = (m + n, m + n + 1);
    let big = (m * n + 1) as i64;
    let mut edge_of = vec![usize::MAX; m * n];
    for i in 0..m {
        net.add_edge(source, i, n as i64);
    }
    for j in 0..n {
        net.add_edge(m + j, sink, m as i64);
    }
    for i in 0..m {
        for j in 0..n {
            if mask.is_allowed(i, j) {
                edge_of[i * n + j] = net.add_edge(i, m + j, big);
            }
        }
    }
    if net.max_flow(source, sink) != (m * n) as i64 {
        return first_allowed();
    }

    // Residual graph restricted to row and column nodes.
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); m + n];
    for i in 0..m {
        for j in 0..n {
            let e = edge_of[i * n + j];
            if e == usize::MAX {
                continue;
            }
            adj[i].push(m + j);
            if net.flow(e) > 0 {
                adj[m + j].push(i);
            }
        }
    }
    let comp = strongly_connected(&adj);
    for i in 0..m {
        for j in 0..n {
            let e = edge_of[i * n + j];
            if e != usize::MAX && net.flow(e) == 0 && comp[i] != comp[m + j] {
                return TotalSupport::Fail { row: i, col: j };
            }
        }
    }
    TotalSupport::Pass
}

fn sinkhorn_probe(mask: &SupportMask) -> TotalSupport {
    let (m, n) = mask.shape();
    let (Ok(a), Ok(b)) = (Marginal::uniform(m), Marginal::uniform(n)) else {
        return TotalSupport::Fail { row: 0, col: 0 };
    };
    let kernel = mask.indicator();
    let cfg = SinkhornConfig {
        tol: 1e-9,
        max_iter: 10_000,
        log_domain: false,
    };
    let weakest = |plan: &DMatrix<f64>| {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..m {
            for j in 0..n {
                if mask.is_allowed(i, j) && plan[(i, j)] < best.0 {
                    best = (plan[(i, j)], i, j);
                }
            }
        }
        best
    };
    match sinkhorn_scale(&kernel, &a, &b, &cfg) {
        Ok(s) => {
            let (v, row, col) = weakest(&s.plan);
            if v * (m * n) as f64 > 1e-8 {
                TotalSupport::Pass
            } else {
                TotalSupport::Fail { row, col }
            }
        }
        Err(_) => {
            // Locate the draining entry after a bounded number of sweeps.
            let mut v = nalgebra::DVector::from_element(n, 1.0);
            let mut u = nalgebra::DVector::from_element(m, 1.0);
            for _ in 0..2_000 {
                u = a.weights().component_div(&(&kernel * &v));
                v = b.weights().component_div(&kernel.tr_mul(&u));
            }
            let plan = DMatrix::from_fn(m, n, |i, j| u[i] * kernel[(i, j)] * v[j]);
            let (_, row, col) = weakest(&plan);
            TotalSupport::Fail { row, col }
        }
    }
}

/// Dinic max-flow on a small dense graph.
struct FlowNetwork {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<i64>,
    original: Vec<i64>,
}

impl FlowNetwork {
    fn new(nodes: usize) -> Self {
        Self {
            head: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
            original: Vec::new(),
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: i64) -> usize {
        let id = self.to.len();
        self.head[from].push(id);
        self.to.push(to);
        self.cap.push(cap);
        self.original.push(cap);
        self.head[to].push(id + 1);
        self.to.push(from);
        self.cap.push(0);
        self.original.push(0);
        id
    }

    fn flow(&self, edge: usize) -> i64 {
        self.original[edge] - self.cap[edge]
    }

    fn max_flow(&mut self, s: usize, t: usize) -> i64 {
        let nodes = self.head.len();
        let mut total = 0;
        loop {
            let mut level = vec![usize::MAX; nodes];
            level[s] = 0;
            let mut queue = std::collections::VecDeque::from([s]);
            while let Some(x) = queue.pop_front() {
                for &e in &self.head[x] {
                    let y = self.to[e];
                    if self.cap[e] > 0 && level[y] == usize::MAX {
                        level[y] = level[x] + 1;
                        queue.push_back(y);
                    }
                }
            }
            if level[t] == usize::MAX {
                return total;
            }
            let mut next = vec![0usize; nodes];
            loop {
                let pushed = self.augment(s, t, i64::MAX, &level, &mut next);
                if pushed == 0 {
                    break;
                }
                total += pushed;
            }
        }
    }

    fn augment(&mut self, x: usize, t: usize, limit: i64, level: &[usize], next: &mut [usize]) -> i64 {
        if x == t {
            return limit;
        }
        while next[x] < self.head[x].len() {
            let e = self.head[x][next[x]];
            let y = self.to[e];
            if self.cap[e] > 0 && level[y] == level[x] + 1 {
                let pushed = self.augment(y, t, limit.min(self.cap[e]), level, next);
                if pushed > 0 {
                    self.cap[e] -= pushed;
                    self.cap[e ^ 1] += pushed;
                    return pushed;
                }
            }
            next[x] += 1;
        }
        0
    }
}

/// Kosaraju labelling of strongly connected components (iterative).
fn strongly_connected(adj: &[Vec<usize>]) -> Vec<usize> {
    let nodes = adj.len();
    let mut order = Vec::with_capacity(nodes);
    let mut seen = vec![false; nodes];
    for start in 0..nodes {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![(start, 0usize)];
        while let Some((x, k)) = stack.pop() {
            if k < adj[x].len() {
                stack.push((x, k + 1));
                let y = adj[x][k];
                if !seen[y] {
                    seen[y] = true;
                    stack.push((y, 0));
                }
            } else {
                order.push(x);
            }
        }
    }
    let mut radj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    for (x, ys) in adj.iter().enumerate() {
        for &y in ys {
            radj[y].push(x);
        }
    }
    let mut comp = vec![usize::MAX; nodes];
    let mut label = 0;
    for &start in order.iter().rev() {
        if comp[start] != usize::MAX {
            continue;
        }
        comp[start] = label;
        let mut stack = vec![start];
        while let Some(x) = stack.pop() {
            for &y in &radj[x] {
                if comp[y] == usize::MAX {
                    comp[y] = label;
                    stack.push(y);
                }
            }
        }
        label += 1;
    }
    comp
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(text: &str) -> SupportMask {
        text.parse().unwrap()
    }

    /// Brute force: does some permutation through (i, j) stay on the pattern?
    fn on_some_diagonal(mask: &SupportMask, i: usize, j: usize) -> bool {
        fn rec(mask: &SupportMask, row: usize, used: &mut Vec<bool>, fixed: (usize, usize)) -> bool {
            let n = used.len();
            if row == n {
                return true;
            }
            for col in 0..n {
                if used[col] || !mask.is_allowed(row, col) {
                    continue;
                }
                if row == fixed.0 && col != fixed.1 {
                    continue;
                }
                used[col] = true;
                if rec(mask, row + 1, used, fixed) {
                    return true;
                }
                used[col] = false;
            }
            false
        }
        rec(mask, 0, &mut vec![false; mask.shape().1], (i, j))
    }

    #[test]
    fn full_and_block_masks_pass() {
        assert_eq!(total_support_check(&SupportMask::full(3, 5), 64), TotalSupport::Pass);
        let blocks = SupportMask::block_diagonal(&[(2, 2), (3, 3)]).unwrap();
        assert_eq!(total_support_check(&blocks, 64), TotalSupport::Pass);
    }

    #[test]
    fn triangular_pattern_fails_off_diagonal() {
        let m = mask("11\n01\n");
        assert_eq!(total_support_check(&m, 64), TotalSupport::Fail { row: 0, col: 1 });
    }

    #[test]
    fn exact_check_matches_permutation_enumeration() {
        // All 4x4 patterns with covered rows/columns drawn from a fixed LCG stream.
        let mut state = 12345u64;
        let mut checked = 0;
        while checked < 300 {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let bits = (state >> 20) as u32;
            let allowed: Vec<bool> = (0..16).map(|k| bits >> k & 1 == 1).collect();
            let m = SupportMask::new(4, 4, allowed).unwrap();
            let covered = (0..4).all(|i| (0..4).any(|j| m.is_allowed(i, j)))
                && (0..4).all(|j| (0..4).any(|i| m.is_allowed(i, j)));
            if !covered {
                continue;
            }
            checked += 1;
            let expected = (0..4)
                .flat_map(|i| (0..4).map(move |j| (i, j)))
                .find(|&(i, j)| m.is_allowed(i, j) && !on_some_diagonal(&m, i, j))
                .map(|(row, col)| TotalSupport::Fail { row, col })
                .unwrap_or(TotalSupport::Pass);
            let got = total_support_check(&m, 64);
            match (expected, got) {
                (TotalSupport::Pass, TotalSupport::Pass) => {}
                (TotalSupport::Fail { .. }, TotalSupport::Fail { row, col }) => {
                    assert!(!on_some_diagonal(&m, row, col), "{m}");
                }
                _ => panic!("mismatch on\n{m}: expected {expected:?}, got {got:?}"),
            }
        }
    }

    #[test]
    fn probe_agrees_with_flows() {
        let good = SupportMask::block_diagonal(&[(2, 2), (2, 2)]).unwrap();
        assert_eq!(total_support_check(&good, 0), TotalSupport::Pass);
        let bad = mask("110\n011\n001\n");
        assert!(matches!(total_support_check(&bad, 0), TotalSupport::Fail { .. }));
    }

    #[test]
    fn validate_reports_structure_support_and_rank() {
        assert!(matches!(
            mask("10\n10\n").validate(64),
            Err(Error::Structural {
                axis: "column",
                index: 1
            })
        ));
        assert_eq!(mask("11\n01\n").validate(64), Err(Error::Support { row: 0, col: 1 }));
        assert_eq!(
            mask("10\n01\n").validate(64),
            Err(Error::Rank {
                allowed: 2,
                required: 3
            })
        );
        assert!(SupportMask::block_diagonal(&[(2, 2), (2, 2)])
            .unwrap()
            .validate(64)
            .is_ok());
    }

    #[test]
    fn text_round_trip() {
        let m = SupportMask::block_diagonal(&[(1, 2), (2, 1)]).unwrap();
        let back: SupportMask = m.to_string().parse().unwrap();
        assert_eq!(m, back);
        assert!("10\n1\n".parse::<SupportMask>().is_err());
        assert!("1x\n".parse::<SupportMask>().is_err());
    }

    #[test]
    fn components_of_block_mask() {
        let m = SupportMask::block_diagonal(&[(2, 1), (1, 2)]).unwrap();
        let (rows, cols) = m.components();
        assert_eq!(rows, vec![0, 0, 1]);
        assert_eq!(cols, vec![0, 1, 1]);
    }
}
