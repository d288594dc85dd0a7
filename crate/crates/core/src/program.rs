//! The lower- and upper-bound convex programs over joint PMFs.
//!
//! A variable is one structurally nonzero entry `v(s, u, q, u+, s+)` of the joint
//! law of `(S, U, Q, U+, S+)`; the input `x` and next node `q+` follow from it.
//! Constraints come in four families: stationarity of `(S, U, Q)`, the state
//! law `S+ | X, S`, the policy independence `U+ | U, Q` from `S`, and the
//! normalisation row.

use std::collections::HashMap;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BehcError, Result};
use crate::markov::{MarkovChain, StationaryOptions};
use crate::model::{h2, strategy_f, AuxSets, HarvestParam};
use crate::qgraph::{BoundKind, QGraph};

/// Smallest policy entry fed back into [`ConvexProgram::joint_from_policy`].
pub const POLICY_EPS: f64 = 1e-12;

/// One retained variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    pub s: u8,
    pub u: usize,
    pub q: usize,
    pub u_plus: usize,
    pub s_plus: u8,
    pub x: u8,
    pub q_plus: usize,
}

/// Variables sharing `(u, q, u+)`; their columns are contiguous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub u: usize,
    pub q: usize,
    pub u_plus: usize,
    pub cols: Range<usize>,
}

/// Ordered variable list with reverse lookup.
#[derive(Debug, Clone)]
pub struct VarIndex {
    kind: BoundKind,
    n: usize,
    vars: Vec<Var>,
    blocks: Vec<Block>,
    lookup: HashMap<(u8, usize, usize, usize, u8), usize>,
}

impl VarIndex {
    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn kind(&self) -> BoundKind {
        self.kind
    }

    pub fn last_node(&self) -> usize {
        self.n
    }

    pub fn find(&self, s: u8, u: usize, q: usize, u_plus: usize, s_plus: u8) -> Option<usize> {
        self.lookup.get(&(s, u, q, u_plus, s_plus)).copied()
    }
}

/// Enumerates the retained variables in `(q, u, u+, s, s+)` order.
pub fn index_variables(kind: BoundKind, n: usize, eta: f64) -> Result<VarIndex> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(BehcError::DegenerateEta(eta));
    }
    let h = HarvestParam::new(eta)?;
    let graph = QGraph::build(kind, n);
    let aux = AuxSets::new(kind, n);
    let mut vars = Vec::new();
    let mut blocks = Vec::new();
    for q in 0..=n {
        for u in aux.u_set(q) {
            let pi0 = h.marginal_pi_unchecked(kind, n, u, q);
            for u_plus in aux.uplus_set(u, q) {
                let start = vars.len();
                for s in 0..2u8 {
                    let pi_s = if s == 0 { pi0 } else { 1.0 - pi0 };
                    if pi_s <= 0.0 {
                        continue;
                    }
                    let x = strategy_f(u_plus, s);
                    let q_plus = graph.next(q, x);
                    for s_plus in 0..2u8 {
                        if h.kind_law(kind, n, s_plus, x, s, q) > 0.0 {
                            vars.push(Var {
                                s,
                                u,
                                q,
                                u_plus,
                                s_plus,
                                x,
                                q_plus,
                            });
                        }
                    }
                }
                blocks.push(Block {
                    u,
                    q,
                    u_plus,
                    cols: start..vars.len(),
                });
            }
        }
    }
    let lookup = vars
        .iter()
        .enumerate()
        .map(|(j, v)| ((v.s, v.u, v.q, v.u_plus, v.s_plus), j))
        .collect();
    Ok(VarIndex {
        kind,
        n,
        vars,
        blocks,
        lookup,
    })
}

/// States `(s, u, q)` of the joint chain in `(q, u, s)` order.
///
/// The upper-bound last node only carries `s = 1`.
pub fn chain_states(kind: BoundKind, n: usize) -> Vec<(u8, usize, usize)> {
    let mut out = Vec::new();
    for q in 0..=n {
        for u in 0..=q {
            for s in 0..2u8 {
                if kind == BoundKind::UpperBound && q == n && s == 0 {
                    continue;
                }
                out.push((s, u, q));
            }
        }
    }
    out
}

/// Coordinate-form sparse matrix with canonical (sorted, merged) entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    /// Sorts by `(row, col)`, sums duplicates and drops exact zeros.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by_key(|e| (e.0, e.1));
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(t.len());
        for (r, c, v) in t {
            assert!(r < nrows && c < ncols, "entry ({r}, {c}) out of range");
            match entries.last_mut() {
                Some(e) if e.0 == r && e.1 == c => e.2 += v,
                _ => entries.push((r, c, v)),
            }
        }
        entries.retain(|e| e.2 != 0.0);
        SparseMatrix {
            nrows,
            ncols,
            entries,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    pub fn tmul(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.ncols];
        for &(r, c, v) in &self.entries {
            x[c] += v * y[r];
        }
        x
    }

    /// Entries grouped by row.
    pub fn rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut out = vec![Vec::new(); self.nrows];
        for &(r, c, v) in &self.entries {
            out[r].push((c, v));
        }
        out
    }
}

/// What a constraint row expresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowLabel {
    Stationary { s: u8, u: usize, q: usize },
    FscLaw { s: u8, u: usize, q: usize, u_plus: usize, s_plus: u8 },
    Policy { u: usize, q: usize, u_plus: usize },
    Pmf,
}

/// Columns whose input symbol is `x` at node `q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub q: usize,
    pub x: u8,
    pub cols: Vec<usize>,
}

/// `max f0(v)` subject to `A v = b`, `v >= 0`.
#[derive(Debug, Clone)]
pub struct ConvexProgram {
    kind: BoundKind,
    n: usize,
    harvest: HarvestParam,
    vars: VarIndex,
    a: SparseMatrix,
    b: Vec<f64>,
    labels: Vec<RowLabel>,
    groups: Vec<Group>,
    group_of: Vec<usize>,
    c: Vec<f64>,
}

/// Closed-form row counts `K` (lower) and `K~` (upper).
pub fn expected_rows(kind: BoundKind, n: usize) -> usize {
    match kind {
        BoundKind::LowerBound => 6 * n * n + 11 * n + 6,
        BoundKind::UpperBound => 6 * n * n + 13 * n + 8,
    }
}

/// Builds the program of the given kind on the `N+1`-node graph.
pub fn build_program(kind: BoundKind, n: usize, eta: f64) -> Result<ConvexProgram> {
    let vars = index_variables(kind, n, eta)?;
    let h = HarvestParam::new(eta)?;
    let nv = vars.len();
    let mut trip = Vec::new();
    let mut labels = Vec::new();

    let states = chain_states(kind, n);
    let state_row: HashMap<(u8, usize, usize), usize> =
        states.iter().enumerate().map(|(i, &st)| (st, i)).collect();
    for &(s, u, q) in &states {
        labels.push(RowLabel::Stationary { s, u, q });
    }
    for (j, v) in vars.vars().iter().enumerate() {
        trip.push((state_row[&(v.s, v.u, v.q)], j, 1.0));
        if let Some(&r) = state_row.get(&(v.s_plus, v.u_plus, v.q_plus)) {
            trip.push((r, j, -1.0));
        }
    }

    for blk in vars.blocks() {
        let (u, q, u_plus) = (blk.u, blk.q, blk.u_plus);
        let pi0 = h.marginal_pi_unchecked(kind, n, u, q);
        for s in 0..2u8 {
            if s == 0 && pi0 <= 0.0 {
                continue;
            }
            let x = strategy_f(u_plus, s);
            let s_plus_rows: &[u8] = if kind == BoundKind::LowerBound && q == n {
                &[0]
            } else {
                &[0, 1]
            };
            for &s_plus in s_plus_rows {
                let r = labels.len();
                labels.push(RowLabel::FscLaw {
                    s,
                    u,
                    q,
                    u_plus,
                    s_plus,
                });
                let law = h.kind_law(kind, n, s_plus, x, s, q);
                if let Some(j) = vars.find(s, u, q, u_plus, s_plus) {
                    trip.push((r, j, 1.0));
                }
                for sp in 0..2u8 {
                    if let Some(j) = vars.find(s, u, q, u_plus, sp) {
                        trip.push((r, j, -law));
                    }
                }
            }
        }
    }

    for blk in vars.blocks() {
        let r = labels.len();
        labels.push(RowLabel::Policy {
            u: blk.u,
            q: blk.q,
            u_plus: blk.u_plus,
        });
        let pi0 = h.marginal_pi_unchecked(kind, n, blk.u, blk.q);
        for j in blk.cols.clone() {
            let coef = if vars.vars()[j].s == 0 { 1.0 - pi0 } else { -pi0 };
            trip.push((r, j, coef));
        }
    }

    let pmf = labels.len();
    labels.push(RowLabel::Pmf);
    for j in 0..nv {
        trip.push((pmf, j, 1.0));
    }

    let nrows = labels.len();
    let a = SparseMatrix::from_triplets(nrows, nv, trip);
    let mut b = vec![0.0; nrows];
    b[pmf] = 1.0;

    let mut groups = Vec::new();
    let mut group_of = vec![0; nv];
    for q in 0..=n {
        for x in 0..2u8 {
            let cols: Vec<usize> = (0..nv)
                .filter(|&j| vars.vars()[j].q == q && vars.vars()[j].x == x)
                .collect();
            for &j in &cols {
                group_of[j] = groups.len();
            }
            groups.push(Group { q, x, cols });
        }
    }

    let c = vars
        .vars()
        .iter()
        .map(|v| {
            if v.u_plus == 0 {
                h2(h.marginal_pi_unchecked(kind, n, v.u, v.q))
            } else {
                0.0
            }
        })
        .collect();

    Ok(ConvexProgram {
        kind,
        n,
        harvest: h,
        vars,
        a,
        b,
        labels,
        groups,
        group_of,
        c,
    })
}

/// Output of [`ConvexProgram::joint_from_policy`].
#[derive(Debug, Clone)]
pub struct Joint {
    pub v: Vec<f64>,
    /// Stationary law over [`chain_states`].
    pub pi: Vec<f64>,
    pub stationary_residual: f64,
}

/// Output of [`ConvexProgram::joint_to_policy`].
#[derive(Debug, Clone)]
pub struct PolicyExtraction {
    pub policy: Policy,
    /// `(u, q)` pairs that carried no mass and were set to 1/2.
    pub flagged: Vec<(usize, usize)>,
}

impl ConvexProgram {
    pub fn kind(&self) -> BoundKind {
        self.kind
    }

    pub fn last_node(&self) -> usize {
        self.n
    }

    pub fn eta(&self) -> f64 {
        self.harvest.eta()
    }

    pub fn harvest(&self) -> HarvestParam {
        self.harvest
    }

    pub fn vars(&self) -> &VarIndex {
        &self.vars
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn a(&self) -> &SparseMatrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn labels(&self) -> &[RowLabel] {
        &self.labels
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn group_of(&self, col: usize) -> usize {
        self.group_of[col]
    }

    /// Linear cost coefficients of `H(X | U+, U, Q)`.
    pub fn linear_cost(&self) -> &[f64] {
        &self.c
    }

    /// `|A v - b|_inf`.
    pub fn residual(&self, v: &[f64]) -> f64 {
        self.a
            .mul(v)
            .iter()
            .zip(&self.b)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Mass of each `(q, x)` group.
    pub fn group_sums(&self, v: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; self.groups.len()];
        for (j, &vj) in v.iter().enumerate() {
            t[self.group_of[j]] += vj;
        }
        t
    }

    /// `H(X|Q) - H(X|U+,U,Q)` in bits.
    pub fn objective(&self, v: &[f64]) -> f64 {
        let t = self.group_sums(v);
        let mut hxq = 0.0;
        for pair in t.chunks(2) {
            let total = pair[0] + pair[1];
            for &tx in pair {
                if tx > 0.0 {
                    hxq -= tx * (tx / total).ln();
                }
            }
        }
        let lin: f64 = self.c.iter().zip(v).map(|(c, x)| c * x).sum();
        hxq / std::f64::consts::LN_2 - lin
    }

    /// Gradient of [`ConvexProgram::objective`]; errors on an empty `(q, x)` group.
    pub fn gradient(&self, v: &[f64]) -> Result<Vec<f64>> {
        let t = self.group_sums(v);
        let mut gl = vec![0.0; t.len()];
        for (k, g) in self.groups.iter().enumerate() {
            let total = t[2 * (k / 2)] + t[2 * (k / 2) + 1];
            if t[k] <= 0.0 {
                if g.cols.is_empty() {
                    continue;
                }
                return Err(BehcError::GradientUnbounded { q: g.q, x: g.x });
            }
            gl[k] = -(t[k] / total).log2();
        }
        Ok((0..v.len())
            .map(|j| gl[self.group_of[j]] - self.c[j])
            .collect())
    }

    /// Per-variable weight `pi(s|u,q) P(s+|x,s,q)`; each block's weights sum to 1.
    pub fn lift_weights(&self) -> Vec<f64> {
        let h = self.harvest;
        self.vars
            .vars()
            .iter()
            .map(|v| {
                let pi0 = h.marginal_pi_unchecked(self.kind, self.n, v.u, v.q);
                let ps = if v.s == 0 { pi0 } else { 1.0 - pi0 };
                ps * h.kind_law(self.kind, self.n, v.s_plus, v.x, v.s, v.q)
            })
            .collect()
    }

    /// Exact feasible joint generated by an interior policy.
    pub fn joint_from_policy(&self, pol: &Policy, warm: Option<&[f64]>) -> Result<Joint> {
        if pol.kind != self.kind || pol.n != self.n {
            return Err(BehcError::PolicyShape {
                expected: self.n,
                got: pol.n,
            });
        }
        let boundary = pol.boundary_entries();
        if !boundary.is_empty() {
            return Err(BehcError::BoundaryPolicy(boundary));
        }
        if self.kind == BoundKind::UpperBound && self.n == 0 {
            return Err(BehcError::InvalidParameter(
                "upper-bound chain needs N >= 1".into(),
            ));
        }
        let kind = self.kind;
        let n = self.n;
        let h = self.harvest;
        let graph = QGraph::build(kind, n);
        let aux = AuxSets::new(kind, n);
        let states = chain_states(kind, n);
        let index: HashMap<(u8, usize, usize), usize> =
            states.iter().enumerate().map(|(i, &st)| (st, i)).collect();
        let mut trip = Vec::new();
        for (i, &(s, u, q)) in states.iter().enumerate() {
            for u_plus in aux.uplus_set(u, q) {
                let p = pol.prob(u_plus, u, q);
                let x = strategy_f(u_plus, s);
                let q_plus = graph.next(q, x);
                for s_plus in 0..2u8 {
                    let law = h.kind_law(kind, n, s_plus, x, s, q);
                    if p * law > 0.0 {
                        let j = index.get(&(s_plus, u_plus, q_plus)).ok_or_else(|| {
                            BehcError::InvalidParameter(format!(
                                "transition into missing state ({s_plus}, {u_plus}, {q_plus})"
                            ))
                        })?;
                        trip.push((i, *j, p * law));
                    }
                }
            }
        }
        let chain = MarkovChain::from_triplets(states.len(), &trip);
        let st = chain
            .stationary(warm, &StationaryOptions::default())
            .map_err(|e| match e {
                BehcError::Stationary { .. } => {
                    log::warn!("stationary solve failed; policy extremes: {:?}", pol.extremes(1e-9));
                    e
                }
                other => other,
            })?;
        let v = self
            .vars
            .vars()
            .iter()
            .map(|var| {
                st.pi[index[&(var.s, var.u, var.q)]]
                    * pol.prob(var.u_plus, var.u, var.q)
                    * h.kind_law(kind, n, var.s_plus, var.x, var.s, var.q)
            })
            .collect();
        Ok(Joint {
            v,
            pi: st.pi,
            stationary_residual: st.residual,
        })
    }

    /// Conditional `P(u+ = 0 | u, q)` read off a joint.
    pub fn joint_to_policy(&self, v: &[f64]) -> PolicyExtraction {
        let mut policy = Policy::constant(self.kind, self.n, 0.5);
        let mut attempt: HashMap<(usize, usize), (f64, f64)> = HashMap::new();
        for blk in self.vars.blocks() {
            let mass: f64 = v[blk.cols.clone()].iter().sum();
            let e = attempt.entry((blk.u, blk.q)).or_insert((0.0, 0.0));
            if blk.u_plus == 0 {
                e.0 += mass;
            }
            e.1 += mass;
        }
        let mut flagged = Vec::new();
        for q in 0..policy.attempt.len() {
            for u in 0..=q {
                let (a, t) = attempt[&(u, q)];
                if t > 0.0 {
                    policy.attempt[q][u] = a / t;
                } else {
                    flagged.push((u, q));
                }
            }
        }
        PolicyExtraction { policy, flagged }
    }
}

/// Convenience wrapper building the program and its joint.
pub fn policy_to_joint(kind: BoundKind, n: usize, eta: f64, pol: &Policy) -> Result<Vec<f64>> {
    let prog = build_program(kind, n, eta)?;
    Ok(prog.joint_from_policy(pol, None)?.v)
}

/// `P(u+ = 0 | u, q)` at every node with a free choice.
///
/// Nodes `q < N` always have one; the upper-bound last node does too. The
/// lower-bound last node always attempts and stores nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    kind: BoundKind,
    n: usize,
    attempt: Vec<Vec<f64>>,
}

impl Policy {
    fn free_nodes(kind: BoundKind, n: usize) -> usize {
        match kind {
            BoundKind::LowerBound => n,
            BoundKind::UpperBound => n + 1,
        }
    }

    pub fn new(kind: BoundKind, n: usize, attempt: Vec<Vec<f64>>) -> Result<Self> {
        let nodes = Self::free_nodes(kind, n);
        if attempt.len() != nodes || attempt.iter().enumerate().any(|(q, r)| r.len() != q + 1) {
            return Err(BehcError::InvalidParameter(
                "policy table has the wrong shape".into(),
            ));
        }
        if attempt.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(BehcError::InvalidParameter(
                "policy entries must lie in [0, 1]".into(),
            ));
        }
        Ok(Policy { kind, n, attempt })
    }

    pub fn constant(kind: BoundKind, n: usize, a: f64) -> Self {
        let attempt = (0..Self::free_nodes(kind, n))
            .map(|q| vec![a; q + 1])
            .collect();
        Policy { kind, n, attempt }
    }

    /// The half-half starting policy.
    pub fn half(kind: BoundKind, n: usize) -> Self {
        Self::constant(kind, n, 0.5)
    }

    /// Entries drawn uniformly from `[lo, hi]`.
    pub fn random<R: Rng + ?Sized>(kind: BoundKind, n: usize, rng: &mut R, lo: f64, hi: f64) -> Self {
        let attempt = (0..Self::free_nodes(kind, n))
            .map(|q| (0..=q).map(|_| rng.gen_range(lo..=hi)).collect())
            .collect();
        Policy { kind, n, attempt }
    }

    pub fn kind(&self) -> BoundKind {
        self.kind
    }

    pub fn last_node(&self) -> usize {
        self.n
    }

    pub fn table(&self) -> &[Vec<f64>] {
        &self.attempt
    }

    pub fn num_free(&self) -> usize {
        self.attempt.iter().map(Vec::len).sum()
    }

    /// `P(u+ = 0 | u, q)`.
    pub fn attempt(&self, u: usize, q: usize) -> f64 {
        if q < self.attempt.len() {
            self.attempt[q][u]
        } else {
            1.0
        }
    }

    pub fn set_attempt(&mut self, u: usize, q: usize, value: f64) {
        self.attempt[q][u] = value;
    }

    /// `P(u+ | u, q)` for an allowed `u+`.
    pub fn prob(&self, u_plus: usize, u: usize, q: usize) -> f64 {
        let a = self.attempt(u, q);
        if u_plus == 0 {
            a
        } else {
            1.0 - a
        }
    }

    /// Free entries equal to 0 or 1, as `(u, q)`.
    pub fn boundary_entries(&self) -> Vec<(usize, usize)> {
        self.extremes(0.0)
    }

    /// Free entries within `eps` of 0 or 1, as `(u, q)`.
    pub fn extremes(&self, eps: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (q, row) in self.attempt.iter().enumerate() {
            for (u, &p) in row.iter().enumerate() {
                if p <= eps || p >= 1.0 - eps {
                    out.push((u, q));
                }
            }
        }
        out
    }

    /// Copy with entries clamped into `[eps, 1 - eps]`.
    pub fn clamped(&self, eps: f64) -> Self {
        let mut out = self.clone();
        out.attempt
            .iter_mut()
            .flatten()
            .for_each(|p| *p = p.clamp(eps, 1.0 - eps));
        out
    }

    pub fn max_abs_diff(&self, other: &Policy) -> f64 {
        self.attempt
            .iter()
            .flatten()
            .zip(other.attempt.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
