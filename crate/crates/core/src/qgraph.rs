//! The two Q-graph families used to bound the channel capacity.
//!
//! Nodes are `0..=N`. Every node has one outgoing edge per binary symbol:
//! symbol `1` always returns to node 0, symbol `0` advances to the next node.
//! The families differ only at the last node, where a `0` either wraps back
//! to node 0 (lower bound) or self-loops (upper bound).

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Which bound a graph (and everything built on it) belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundKind {
    LowerBound,
    UpperBound,
}

impl BoundKind {
    pub fn short_name(self) -> &'static str {
        match self {
            BoundKind::LowerBound => "lb",
            BoundKind::UpperBound => "ub",
        }
    }

    pub fn from_short_name(s: &str) -> Option<Self> {
        match s {
            "lb" | "lower" => Some(BoundKind::LowerBound),
            "ub" | "upper" => Some(BoundKind::UpperBound),
            _ => None,
        }
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

/// A deterministic graph over nodes `0..=N` with one edge per binary symbol.
///
/// Entries of the edge table are optional so that corrupted graphs can be
/// represented and diagnosed by [`QGraph::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QGraph {
    kind: BoundKind,
    next: Vec<[Option<usize>; 2]>,
}

/// A violated Q-graph invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    OutDegree { node: usize, degree: usize },
    EdgeOutOfRange { node: usize, symbol: u8, target: usize },
    Unreachable { node: usize },
    CannotReturn { node: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OutDegree { node, .. } => write!(f, "node {node} out-degree ≠ 2"),
            Violation::EdgeOutOfRange {
                node,
                symbol,
                target,
            } => write!(f, "node {node} edge {symbol} points to missing node {target}"),
            Violation::Unreachable { node } => write!(f, "node {node} unreachable"),
            Violation::CannotReturn { node } => write!(f, "node {node} cannot reach node 0"),
        }
    }
}

impl QGraph {
    /// Builds the `N+1`-node graph of the given family.
    pub fn build(kind: BoundKind, n: usize) -> Self {
        let next = (0..=n)
            .map(|q| {
                let zero = if q < n {
                    q + 1
                } else {
                    match kind {
                        BoundKind::LowerBound => 0,
                        BoundKind::UpperBound => n,
                    }
                };
                [Some(zero), Some(0)]
            })
            .collect();
        QGraph { kind, next }
    }

    /// Builds a graph from a raw edge table; no invariants are checked.
    pub fn from_table(kind: BoundKind, next: Vec<[Option<usize>; 2]>) -> Self {
        QGraph { kind, next }
    }

    pub fn kind(&self) -> BoundKind {
        self.kind
    }

    pub fn num_nodes(&self) -> usize {
        self.next.len()
    }

    /// `N`, the index of the last node.
    pub fn last_node(&self) -> usize {
        self.next.len().saturating_sub(1)
    }

    pub fn edge(&self, q: usize, symbol: u8) -> Option<usize> {
        self.next.get(q).and_then(|e| e[symbol as usize])
    }

    /// Successor of `q` under `symbol`.
    ///
    /// Panics if the edge is missing; graphs from [`QGraph::build`] are complete.
    pub fn next(&self, q: usize, symbol: u8) -> usize {
        self.edge(q, symbol)
            .unwrap_or_else(|| panic!("missing edge ({q}, {symbol})"))
    }

    /// Folds [`QGraph::next`] over a sequence of symbols.
    pub fn walk(&self, q0: usize, symbols: &[u8]) -> usize {
        symbols.iter().fold(q0, |q, &y| self.next(q, y))
    }

    /// Pairs `(q, y)` whose edge leads into `target`.
    pub fn incoming(&self, target: usize) -> Vec<(usize, u8)> {
        let mut out = Vec::new();
        for (q, edges) in self.next.iter().enumerate() {
            for (y, e) in edges.iter().enumerate() {
                if *e == Some(target) {
                    out.push((q, y as u8));
                }
            }
        }
        out
    }

    /// Checks out-degree, edge targets and two-way connectivity with node 0.
    pub fn validate(&self) -> Vec<Violation> {
        let n = self.next.len();
        let mut violations = Vec::new();
        for (q, edges) in self.next.iter().enumerate() {
            let degree = edges.iter().filter(|e| e.is_some()).count();
            if degree != 2 {
                violations.push(Violation::OutDegree { node: q, degree });
            }
            for (y, e) in edges.iter().enumerate() {
                if let Some(t) = *e {
                    if t >= n {
                        violations.push(Violation::EdgeOutOfRange {
                            node: q,
                            symbol: y as u8,
                            target: t,
                        });
                    }
                }
            }
        }
        if n == 0 {
            return violations;
        }

        let mut forward = vec![Vec::new(); n];
        let mut backward = vec![Vec::new(); n];
        for (q, edges) in self.next.iter().enumerate() {
            for t in edges.iter().flatten().copied().filter(|&t| t < n) {
                forward[q].push(t);
                backward[t].push(q);
            }
        }
        let reach = bfs(&forward, 0);
        let coreach = bfs(&backward, 0);
        for q in 0..n {
            if !reach[q] {
                violations.push(Violation::Unreachable { node: q });
            }
        }
        for q in 0..n {
            if !coreach[q] {
                violations.push(Violation::CannotReturn { node: q });
            }
        }
        violations
    }

    /// True when the edge table is exactly the one [`QGraph::build`] produces.
    pub fn matches_family(&self) -> bool {
        *self == QGraph::build(self.kind, self.last_node())
    }
}

fn bfs(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(q) = queue.pop_front() {
        for &t in &adj[q] {
            if !seen[t] {
                seen[t] = true;
                queue.push_back(t);
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lower_bound_edges() {
        let g = QGraph::build(BoundKind::LowerBound, 2);
        assert_eq!(g.next(0, 0), 1);
        assert_eq!(g.next(1, 0), 2);
        assert_eq!(g.next(2, 0), 0);
        for q in 0..=2 {
            assert_eq!(g.next(q, 1), 0);
        }
    }

    #[test]
    fn upper_bound_last_node_loops() {
        let g = QGraph::build(BoundKind::UpperBound, 2);
        assert_eq!(g.next(0, 0), 1);
        assert_eq!(g.next(1, 0), 2);
        assert_eq!(g.next(2, 0), 2);
        assert_eq!(g.next(2, 1), 0);
    }

    #[test]
    fn single_node_graph() {
        for kind in [BoundKind::LowerBound, BoundKind::UpperBound] {
            let g = QGraph::build(kind, 0);
            assert_eq!(g.num_nodes(), 1);
            assert_eq!(g.next(0, 0), 0);
            assert_eq!(g.next(0, 1), 0);
            assert!(g.validate().is_empty());
        }
    }

    #[test]
    fn walks() {
        let lb = QGraph::build(BoundKind::LowerBound, 3);
        assert_eq!(lb.walk(0, &[0, 0, 0]), 3);
        assert_eq!(lb.walk(2, &[1]), 0);
        let ub = QGraph::build(BoundKind::UpperBound, 3);
        assert_eq!(ub.walk(3, &[0, 0]), 3);
    }

    #[test]
    fn validate_detects_unreachable_node() {
        let mut g = QGraph::build(BoundKind::LowerBound, 2);
        g.next[1][0] = Some(1);
        let v = g.validate();
        assert_eq!(v, vec![Violation::Unreachable { node: 2 }]);
        assert_eq!(v[0].to_string(), "node 2 unreachable");
        assert!(!g.matches_family());
    }

    #[test]
    fn validate_detects_missing_edge() {
        let mut g = QGraph::build(BoundKind::LowerBound, 2);
        g.next[1][1] = None;
        let v = g.validate();
        assert_eq!(v, vec![Violation::OutDegree { node: 1, degree: 1 }]);
        assert_eq!(v[0].to_string(), "node 1 out-degree ≠ 2");
    }

    #[test]
    fn incoming_pairs_of_node_zero() {
        let g = QGraph::build(BoundKind::LowerBound, 2);
        assert_eq!(g.incoming(0), vec![(0, 1), (1, 1), (2, 0), (2, 1)]);
        assert_eq!(g.incoming(1), vec![(0, 0)]);
    }

    #[test]
    fn constructed_graphs_are_connected() {
        for n in 0..=200 {
            for kind in [BoundKind::LowerBound, BoundKind::UpperBound] {
                assert!(QGraph::build(kind, n).validate().is_empty(), "{kind} N={n}");
            }
        }
    }

    proptest! {
        #[test]
        fn zeros_reach_last_node_and_one_resets(n in 0usize..60, q in 0usize..60) {
            for kind in [BoundKind::LowerBound, BoundKind::UpperBound] {
                let g = QGraph::build(kind, n);
                prop_assert_eq!(g.walk(0, &vec![0; n]), n);
                let q = q % (n + 1);
                prop_assert_eq!(g.walk(q, &[1]), 0);
            }
        }

        #[test]
        fn walk_is_a_pure_fold(n in 1usize..20, seq in proptest::collection::vec(0u8..2, 0..40)) {
            let g = QGraph::build(BoundKind::UpperBound, n);
            let a = g.walk(0, &seq);
            let b = g.walk(0, &seq);
            prop_assert_eq!(a, b);
            let manual = seq.iter().fold(0, |q, &y| g.next(q, y));
            prop_assert_eq!(a, manual);
        }
    }
}
