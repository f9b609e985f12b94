//! Seeded, lazily evaluated d-ary branching random walk with query counting.
//!
//! A vertex is indexed by its digit string v_1…v_n (digit k picks the child
//! at level k); the root is the empty string. The walk value is
//! X_v = Σ_{∅<w≤v} Y_w with X_∅ = 0, where Y_w is the increment attached to
//! vertex w.
//!
//! Increments are never stored. Each vertex's 64-bit randomness word is a
//! pure function of (instance seed, canonical path encoding): the digit
//! count is folded into an avalanche mixing chain first, then the digits in
//! order. The count-first encoding keeps words at different depths
//! independent even along a common prefix, and makes generation
//! order-independent: any machine, thread schedule, or traversal order sees
//! identical bits. Words map to increments through the component law's
//! quantile function applied to a 53-bit uniform.
//!
//! Running time τ of an algorithm is the number of *distinct vertices* whose
//! increment it has revealed; a [`QueryLedger`] threaded through the oracle
//! calls does the accounting (revealing the d children of one vertex counts
//! d queries, and re-querying a vertex is free).

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::increments::IncrementModel;
use crate::prf::{mix64, unit_from_word, PATH_SALT};

/// Default enumeration cap: 2^24 entries (~128 MB of doubles).
pub const DEFAULT_CAP: u64 = 1 << 24;

/// A vertex address: the digit string from the root, each digit in [0, d).
#[derive(Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct VertexPath {
    digits: Vec<u8>,
}

impl VertexPath {
    /// The root ∅ (empty string).
    pub fn root() -> Self {
        Self { digits: Vec::new() }
    }

    /// Builds a path from digits, validating each against the branching
    /// factor.
    pub fn from_digits(digits: &[u8], d: u32) -> Result<Self> {
        for &dg in digits {
            if dg as u32 >= d {
                return Err(Error::Domain(format!("digit {dg} out of range for d={d}")));
            }
        }
        Ok(Self { digits: digits.to_vec() })
    }

    /// The `index`-th path of the given depth in lexicographic order
    /// (digits are the base-d expansion of `index`, most significant first).
    pub fn from_index(d: u32, depth: u32, index: u64) -> Self {
        let mut digits = vec![0u8; depth as usize];
        let mut ix = index;
        for slot in digits.iter_mut().rev() {
            *slot = (ix % d as u64) as u8;
            ix /= d as u64;
        }
        debug_assert_eq!(ix, 0, "index out of range for depth");
        Self { digits }
    }

    /// Parses a path literal: contiguous digits (`"0110"`) for d ≤ 10, or
    /// dot-separated numbers (`"0.11.3"`) for larger d. Empty string = root.
    pub fn parse(s: &str, d: u32) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Self::root());
        }
        let digits: Vec<u8> = if s.contains('.') {
            s.split('.')
                .map(|t| {
                    t.parse::<u8>()
                        .map_err(|e| Error::Parse(format!("bad path component `{t}`: {e}")))
                })
                .collect::<Result<_>>()?
        } else {
            s.chars()
                .map(|c| {
                    c.to_digit(10)
                        .map(|v| v as u8)
                        .ok_or_else(|| Error::Parse(format!("bad path digit `{c}`")))
                })
                .collect::<Result<_>>()?
        };
        Self::from_digits(&digits, d)
    }

    pub fn len(&self) -> u32 {
        self.digits.len() as u32
    }

    pub fn is_root(&self) -> bool {
        self.digits.is_empty()
    }

    pub fn digits(&self) -> &[u8] {
        &self.digits
    }

    /// The child obtained by appending one digit.
    pub fn child(&self, digit: u8) -> Self {
        let mut digits = Vec::with_capacity(self.digits.len() + 1);
        digits.extend_from_slice(&self.digits);
        digits.push(digit);
        Self { digits }
    }

    /// Concatenation self·other (descend to `other` inside the subtree
    /// rooted at `self`).
    pub fn concat(&self, other: &VertexPath) -> Self {
        let mut digits = Vec::with_capacity(self.digits.len() + other.digits.len());
        digits.extend_from_slice(&self.digits);
        digits.extend_from_slice(&other.digits);
        Self { digits }
    }

    /// The ancestor at depth `k` (prefix of length k).
    pub fn prefix(&self, k: u32) -> Self {
        Self { digits: self.digits[..k as usize].to_vec() }
    }

    /// Lexicographic rank among all paths of the same depth.
    pub fn leaf_index(&self, d: u32) -> u64 {
        self.digits.iter().fold(0u64, |acc, &dg| acc * d as u64 + dg as u64)
    }
}

impl fmt::Display for VertexPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.digits.iter().all(|&dg| dg < 10) {
            for &dg in &self.digits {
                write!(f, "{dg}")?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.digits.iter().map(|dg| dg.to_string()).collect();
            write!(f, "{}", parts.join("."))
        }
    }
}

impl fmt::Debug for VertexPath {
    /// Shows the root as ε and otherwise defers to Display — digit strings
    /// read better than struct syntax in test output.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_root() {
            write!(f, "ε")
        } else {
            fmt::Display::fmt(self, f)
        }
    }
}

/// One recorded oracle query: the k-th revealed vertex and its increment.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    /// 1-based position in the query sequence.
    pub index: u64,
    pub path: VertexPath,
    pub increment: f64,
}

/// Counts distinct vertex-increment queries — the running time τ.
///
/// Re-querying a vertex is free: individually queried vertices are
/// remembered in a set, and bulk subtree enumerations are remembered by
/// their (root, depth) key. The two granularities never overlap in the
/// built-in algorithms (bulk enumerations always land on fresh subtrees), so
/// the count equals the number of distinct revealed vertices.
#[derive(Debug, Default)]
pub struct QueryLedger {
    count: u64,
    seen_vertices: HashSet<VertexPath>,
    seen_subtrees: HashSet<(VertexPath, u32)>,
    trace: Option<Vec<TraceEntry>>,
}

impl QueryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// A ledger that additionally records every query (path and increment)
    /// in order.
    pub fn with_trace() -> Self {
        Self { trace: Some(Vec::new()), ..Self::default() }
    }

    /// Total distinct vertex queries so far.
    pub fn count(&self) -> u64 {
        self.count
    }

    /// The recorded query sequence, if tracing was enabled.
    pub fn trace(&self) -> Option<&[TraceEntry]> {
        self.trace.as_deref()
    }

    /// Appends a trace entry; the index is the 1-based position in the
    /// query sequence (trace length tracks the count, entry by entry).
    fn record_trace(&mut self, path: VertexPath, increment: f64) {
        if let Some(t) = self.trace.as_mut() {
            let index = t.len() as u64 + 1;
            t.push(TraceEntry { index, path, increment });
        }
    }

    /// Charges one vertex, once.
    fn charge_vertex(&mut self, path: &VertexPath, increment: f64) {
        if self.seen_vertices.insert(path.clone()) {
            self.count += 1;
            self.record_trace(path.clone(), increment);
        }
    }

    /// Charges a full subtree enumeration below `root` down to `sub_depth`
    /// levels, once per (root, sub_depth). Returns whether it was fresh (the
    /// caller appends trace entries only in that case).
    fn charge_subtree(&mut self, root: &VertexPath, sub_depth: u32, vertices: u64) -> bool {
        if sub_depth == 0 {
            return false;
        }
        if self.seen_subtrees.insert((root.clone(), sub_depth)) {
            self.count += vertices;
            true
        } else {
            false
        }
    }

    fn tracing(&self) -> bool {
        self.trace.is_some()
    }
}

/// A seeded branching random walk of depth N on the d-ary tree.
///
/// Immutable; every oracle below is a pure function of (seed, path), so
/// instances are freely shared across threads. Repeated queries return
/// bit-identical values.
#[derive(Debug, Clone)]
pub struct BrwInstance {
    model: IncrementModel,
    depth: u32,
    seed: u64,
    cap: u64,
}

impl BrwInstance {
    pub fn new(model: IncrementModel, depth: u32, seed: u64) -> Self {
        Self { model, depth, seed, cap: DEFAULT_CAP }
    }

    /// Overrides the enumeration cap (entries per materialized level).
    pub fn with_cap(mut self, cap: u64) -> Self {
        self.cap = cap;
        self
    }

    pub fn model(&self) -> &IncrementModel {
        &self.model
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn d(&self) -> u32 {
        self.model.d()
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }

    fn check_path(&self, path: &VertexPath, max_len: u32) -> Result<()> {
        if path.len() > max_len {
            return Err(Error::DepthExceeded(format!(
                "path of length {} exceeds limit {max_len} (instance depth {})",
                path.len(),
                self.depth
            )));
        }
        for &dg in path.digits() {
            if dg as u32 >= self.d() {
                return Err(Error::Domain(format!("digit {dg} out of range for d={}", self.d())));
            }
        }
        Ok(())
    }

    /// Errors unless d^sub_depth fits under the enumeration cap.
    fn check_cap(&self, sub_depth: u32) -> Result<()> {
        let mut n: u128 = 1;
        for _ in 0..sub_depth {
            n = n.saturating_mul(self.d() as u128);
            if n > self.cap as u128 {
                return Err(Error::CapExceeded { requested: n, cap: self.cap });
            }
        }
        Ok(())
    }

    /// Number of vertices in levels 1..=sub_depth below a root: Σ d^j.
    fn subtree_vertices(&self, sub_depth: u32) -> u64 {
        let mut total: u128 = 0;
        let mut level: u128 = 1;
        for _ in 0..sub_depth {
            level *= self.d() as u128;
            total += level;
        }
        total as u64
    }

    /// Mixing-chain state after folding the canonical encoding of a path of
    /// length `target_len` whose first `prefix` digits are known: count
    /// first, then the digits.
    fn chain_prefix(&self, target_len: u32, prefix: &[u8]) -> u64 {
        let mut h = mix64(self.seed ^ PATH_SALT);
        h = mix64(h ^ target_len as u64);
        for &dg in prefix {
            h = mix64(h ^ dg as u64);
        }
        h
    }

    /// Increment of the vertex obtained by appending `digit` to a chain
    /// prefix state.
    fn increment_from_state(&self, state: u64, digit: u8) -> f64 {
        self.model.component_quantile(unit_from_word(mix64(state ^ digit as u64)))
    }

    /// Increment Y_v of a single vertex (|v| ≥ 1).
    fn increment_of(&self, path: &VertexPath) -> f64 {
        let digits = path.digits();
        let (last, prefix) = digits.split_last().expect("increment of root");
        let state = self.chain_prefix(path.len(), prefix);
        self.increment_from_state(state, *last)
    }

    /// The d child increments (Y_{v·0}, …, Y_{v·(d−1)}) of `path`.
    ///
    /// Counts d queries on the ledger (once per distinct child).
    pub fn child_increments(
        &self,
        path: &VertexPath,
        ledger: Option<&mut QueryLedger>,
    ) -> Result<Vec<f64>> {
        self.check_path(path, self.depth)?;
        if path.len() >= self.depth {
            return Err(Error::DepthExceeded(format!(
                "children of a depth-{} vertex exceed instance depth {}",
                path.len(),
                self.depth
            )));
        }
        let state = self.chain_prefix(path.len() + 1, path.digits());
        let out: Vec<f64> =
            (0..self.d()).map(|c| self.increment_from_state(state, c as u8)).collect();
        if let Some(l) = ledger {
            for (c, &inc) in out.iter().enumerate() {
                l.charge_vertex(&path.child(c as u8), inc);
            }
        }
        Ok(out)
    }

    /// X_v: the exact sum of increments along the path; X_∅ = 0.
    pub fn vertex_value(
        &self,
        path: &VertexPath,
        mut ledger: Option<&mut QueryLedger>,
    ) -> Result<f64> {
        self.check_path(path, self.depth)?;
        let mut x = 0.0;
        for k in 1..=path.len() {
            let p = path.prefix(k);
            let inc = self.increment_of(&p);
            if let Some(l) = ledger.as_deref_mut() {
                l.charge_vertex(&p, inc);
            }
            x += inc;
        }
        Ok(x)
    }

    /// Subtree-relative values X^root_w for all |w| = sub_depth below
    /// `root`, in lexicographic order of w.
    pub fn enumerate_leaf_values(
        &self,
        root: &VertexPath,
        sub_depth: u32,
        ledger: Option<&mut QueryLedger>,
    ) -> Result<Vec<f64>> {
        let mut levels = self.value_levels(root, sub_depth, &[sub_depth], ledger)?;
        Ok(levels.pop().expect("one snapshot requested"))
    }

    /// Subtree-relative value arrays at several levels in one sweep.
    ///
    /// `snapshots` must be nondecreasing relative depths ≤ `sub_depth`; the
    /// returned arrays correspond to them in order (level j has d^j entries,
    /// level 0 is the single relative value 0.0). This is the workhorse
    /// behind partition functions: a depth-n enumeration with snapshots at
    /// block boundaries gives every subtree partition function as a
    /// contiguous-slice reduction.
    pub(crate) fn value_levels(
        &self,
        root: &VertexPath,
        sub_depth: u32,
        snapshots: &[u32],
        mut ledger: Option<&mut QueryLedger>,
    ) -> Result<Vec<Vec<f64>>> {
        self.check_path(root, self.depth)?;
        if root.len() + sub_depth > self.depth {
            return Err(Error::DepthExceeded(format!(
                "enumeration to depth {} below a depth-{} root exceeds instance depth {}",
                sub_depth,
                root.len(),
                self.depth
            )));
        }
        self.check_cap(sub_depth)?;
        debug_assert!(snapshots.windows(2).all(|w| w[0] <= w[1]));
        debug_assert!(snapshots.iter().all(|&s| s <= sub_depth));

        let trace_fresh = match ledger.as_deref_mut() {
            Some(l) => {
                let fresh = l.charge_subtree(root, sub_depth, self.subtree_vertices(sub_depth));
                fresh && l.tracing()
            }
            None => false,
        };

        let d = self.d() as usize;
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(snapshots.len());
        let mut cursor = 0usize;
        let mut values = vec![0.0f64];
        while cursor < snapshots.len() && snapshots[cursor] == 0 {
            out.push(values.clone());
            cursor += 1;
        }
        for j in 1..=sub_depth {
            // Rebuild the chain states for level j: the count-first encoding
            // makes them unshareable with level j−1 by design.
            let base = self.chain_prefix(root.len() + j, root.digits());
            let mut states = vec![base];
            for _ in 1..j {
                let mut next = Vec::with_capacity(states.len() * d);
                for &s in &states {
                    for c in 0..d {
                        next.push(mix64(s ^ c as u64));
                    }
                }
                states = next;
            }
            let mut next_values = Vec::with_capacity(states.len() * d);
            for (i, &s) in states.iter().enumerate() {
                for c in 0..d {
                    let inc = self.increment_from_state(s, c as u8);
                    next_values.push(values[i] + inc);
                    if trace_fresh {
                        if let Some(l) = ledger.as_deref_mut() {
                            let idx = (i * d + c) as u64;
                            let rel = VertexPath::from_index(self.d(), j, idx);
                            l.record_trace(root.concat(&rel), inc);
                        }
                    }
                }
            }
            values = next_values;
            while cursor < snapshots.len() && snapshots[cursor] == j {
                out.push(values.clone());
                cursor += 1;
            }
        }
        Ok(out)
    }

    /// max over ∂T_depth of X_u, by streaming depth-first reduction (no
    /// level arrays are materialized).
    pub fn max_value(&self, depth: u32, mut ledger: Option<&mut QueryLedger>) -> Result<f64> {
        if depth > self.depth {
            return Err(Error::DepthExceeded(format!(
                "max over depth {depth} exceeds instance depth {}",
                self.depth
            )));
        }
        self.check_cap(depth)?;
        if depth == 0 {
            return Ok(0.0);
        }
        if let Some(l) = ledger.as_deref_mut() {
            l.charge_subtree(&VertexPath::root(), depth, self.subtree_vertices(depth));
        }
        let mut digits: Vec<u8> = Vec::with_capacity(depth as usize);
        let mut best = f64::NEG_INFINITY;
        self.max_dfs(&mut digits, 0.0, depth, &mut best);
        Ok(best)
    }

    fn max_dfs(&self, digits: &mut Vec<u8>, x: f64, depth: u32, best: &mut f64) {
        let level = digits.len() as u32;
        if level == depth {
            if x > *best {
                *best = x;
            }
            return;
        }
        let state = self.chain_prefix(level + 1, digits);
        for c in 0..self.d() as u8 {
            let inc = self.increment_from_state(state, c);
            digits.push(c);
            self.max_dfs(digits, x + inc, depth, best);
            digits.pop();
        }
    }
}
