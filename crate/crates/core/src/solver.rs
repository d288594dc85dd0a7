//! Log-barrier interior point method with certified value bounds.
//!
//! Every feasible joint factors as `v = L m`, where `m_b` is the mass of block
//! `b = (u, q, u+)` and `L` spreads it over `(s, s+)` with the closed-form
//! marginals and the state law. The state-law and policy rows are then
//! satisfied identically, and the stationarity rows collapse to one flow row
//! per `(u, q)`. Newton steps run on `m` with a scaled quasidefinite KKT system
//! factored by [`crate::ldl`].
//!
//! The lower certificate re-derives a policy from the iterate and evaluates the
//! exact joint it generates. The upper certificate is the linearisation bound
//! `f(v) + max_j (g - A^T y)_j + y^T b - g^T v`, valid for any `y` because the
//! feasible set lies in the simplex.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{BehcError, Result};
use crate::ldl::{LdlFactor, Regularization, UpperCsc};
use crate::program::{chain_states, ConvexProgram, Joint, Policy, RowLabel, SparseMatrix, POLICY_EPS};
use crate::qgraph::BoundKind;

/// Barrier-method settings.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolveOptions {
    /// Stop once `upper - lower` is at most this (bits).
    pub gap_tol: f64,
    pub max_stages: usize,
    pub mu0: f64,
    /// Barrier weight multiplier per stage.
    pub mu_factor: f64,
    /// Stage ends when half the squared Newton decrement drops below this.
    pub newton_tol: f64,
    pub max_newton: usize,
    pub backtrack: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            gap_tol: 1e-9,
            max_stages: 64,
            mu0: 1.0,
            mu_factor: 0.2,
            newton_tol: 1e-10,
            max_newton: 100,
            backtrack: 0.5,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.gap_tol,
            self.mu0,
            self.mu_factor,
            self.newton_tol,
            self.backtrack,
        ]
        .iter()
        .all(|x| *x > 0.0);
        if !positive || self.mu_factor >= 1.0 || self.backtrack >= 1.0 || self.max_stages == 0 {
            return Err(BehcError::InvalidParameter(format!("bad solve options {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
}

/// Certificates after one barrier stage (best so far).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StageRecord {
    pub mu: f64,
    pub newton_steps: usize,
    pub lower: f64,
    pub upper: f64,
}

impl StageRecord {
    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub kind: BoundKind,
    pub n: usize,
    pub eta: f64,
    pub v_hat: Vec<f64>,
    /// `f0(v_hat)`.
    pub objective: f64,
    pub lower_certified: f64,
    pub upper_certified: f64,
    /// Multipliers over all program rows.
    pub y: Vec<f64>,
    pub residual_primal: f64,
    pub iterations: usize,
    pub stages: Vec<StageRecord>,
    pub status: SolveStatus,
    /// Policy whose exact joint attains `lower_certified`.
    pub lower_policy: Policy,
}

impl SolveResult {
    pub fn gap(&self) -> f64 {
        self.upper_certified - self.lower_certified
    }
}

/// The program restricted to `v = L m`.
struct BlockSpace {
    nb: usize,
    nq: usize,
    ell: Vec<f64>,
    block_of: Vec<usize>,
    block_q: Vec<usize>,
    w0: Vec<f64>,
    w1: Vec<f64>,
    cost: Vec<f64>,
    a: SparseMatrix,
    b: Vec<f64>,
    /// Reduced row of each `(u, q)` flow; `(0, 0)` is dropped as redundant.
    flow_row: HashMap<(usize, usize), usize>,
    pmf_row: usize,
    /// `(u, q)` states; index 0 is `(0, 0)`.
    states: Vec<(usize, usize)>,
    state_blocks: Vec<Vec<usize>>,
    /// Backward evaluation order for the renewal recursion.
    order: Vec<usize>,
    block_state: Vec<usize>,
    /// State reached on `x = 0`, `None` when that is `(0, 0)`.
    dst0: Vec<Option<usize>>,
}

impl BlockSpace {
    fn new(prog: &ConvexProgram) -> Self {
        let blocks = prog.vars().blocks();
        let nb = blocks.len();
        let nq = prog.last_node() + 1;
        let ell = prog.lift_weights();
        let mut block_of = vec![0; prog.num_vars()];
        let mut w0 = vec![0.0; nb];
        let mut w1 = vec![0.0; nb];
        let mut cost = vec![0.0; nb];
        let c = prog.linear_cost();
        for (bi, blk) in blocks.iter().enumerate() {
            for j in blk.cols.clone() {
                block_of[j] = bi;
                if prog.vars().vars()[j].x == 0 {
                    w0[bi] += ell[j];
                } else {
                    w1[bi] += ell[j];
                }
                cost[bi] += c[j] * ell[j];
            }
        }
        let block_q = blocks.iter().map(|b| b.q).collect();

        let mut flow_row = HashMap::new();
        for q in 0..nq {
            for u in 0..=q {
                if (u, q) != (0, 0) {
                    let r = flow_row.len();
                    flow_row.insert((u, q), r);
                }
            }
        }
        let pmf_row = flow_row.len();
        let mut trip = Vec::new();
        for &(r, j, val) in prog.a().entries() {
            match prog.labels()[r] {
                RowLabel::Stationary { u, q, .. } => {
                    if let Some(&fr) = flow_row.get(&(u, q)) {
                        trip.push((fr, block_of[j], val * ell[j]));
                    }
                }
                RowLabel::Pmf => trip.push((pmf_row, block_of[j], val * ell[j])),
                _ => {}
            }
        }
        let a = SparseMatrix::from_triplets(pmf_row + 1, nb, trip);
        let mut b = vec![0.0; pmf_row + 1];
        b[pmf_row] = 1.0;

        let last = nq - 1;
        let mut states = vec![(0, 0)];
        for q in 0..nq {
            for u in 0..=q {
                if (u, q) != (0, 0) {
                    states.push((u, q));
                }
            }
        }
        let state_index: HashMap<(usize, usize), usize> =
            states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let mut state_blocks = vec![Vec::new(); states.len()];
        let mut dst0 = vec![None; nb];
        let mut block_state = vec![0; nb];
        for (bi, blk) in blocks.iter().enumerate() {
            block_state[bi] = state_index[&(blk.u, blk.q)];
            state_blocks[block_state[bi]].push(bi);
            let q_next = if blk.q < last {
                blk.q + 1
            } else {
                match prog.kind() {
                    BoundKind::LowerBound => 0,
                    BoundKind::UpperBound => last,
                }
            };
            if w0[bi] > 0.0 && (blk.u_plus, q_next) != (0, 0) {
                dst0[bi] = Some(state_index[&(blk.u_plus, q_next)]);
            }
        }
        let self_loop = |s: usize| state_blocks[s].iter().any(|&b| dst0[b] == Some(s));
        let mut order: Vec<usize> = (0..states.len()).collect();
        order.sort_by_key(|&s| (std::cmp::Reverse(states[s].1), !self_loop(s)));

        BlockSpace {
            nb,
            nq,
            ell,
            block_of,
            block_q,
            w0,
            w1,
            cost,
            a,
            b,
            flow_row,
            pmf_row,
            states,
            state_blocks,
            order,
            block_state,
            dst0,
        }
    }

    fn lift(&self, m: &[f64]) -> Vec<f64> {
        self.ell
            .iter()
            .zip(&self.block_of)
            .map(|(l, &b)| l * m[b])
            .collect()
    }

    fn collapse(&self, v: &[f64]) -> Vec<f64> {
        let mut m = vec![0.0; self.nb];
        for (j, &x) in v.iter().enumerate() {
            m[self.block_of[j]] += x;
        }
        m
    }

    fn group_sums(&self, m: &[f64]) -> Vec<[f64; 2]> {
        let mut t = vec![[0.0; 2]; self.nq];
        for b in 0..self.nb {
            let q = self.block_q[b];
            t[q][0] += self.w0[b] * m[b];
            t[q][1] += self.w1[b] * m[b];
        }
        t
    }

    fn objective(&self, m: &[f64]) -> f64 {
        let t = self.group_sums(m);
        let mut h = 0.0;
        for tq in &t {
            let total = tq[0] + tq[1];
            for &tx in tq {
                if tx > 0.0 {
                    h -= tx * (tx / total).ln();
                }
            }
        }
        let lin: f64 = self.cost.iter().zip(m).map(|(c, x)| c * x).sum();
        h / std::f64::consts::LN_2 - lin
    }

    fn gradient(&self, m: &[f64], t: &[[f64; 2]]) -> Vec<f64> {
        let logs: Vec<[f64; 2]> = t
            .iter()
            .map(|tq| {
                let total = tq[0] + tq[1];
                [-(tq[0] / total).log2(), -(tq[1] / total).log2()]
            })
            .collect();
        (0..m.len())
            .map(|b| {
                let l = logs[self.block_q[b]];
                let mut g = -self.cost[b];
                if self.w0[b] > 0.0 {
                    g += self.w0[b] * l[0];
                }
                if self.w1[b] > 0.0 {
                    g += self.w1[b] * l[1];
                }
                g
            })
            .collect()
    }

    /// Columns of the scaled Hessian factor: `-hess f = R R^T`.
    fn hessian_factor(&self, t: &[[f64; 2]]) -> Vec<f64> {
        (0..self.nb)
            .map(|b| {
                let [t0, t1] = t[self.block_q[b]];
                let total = t0 + t1;
                let denom = (std::f64::consts::LN_2 * total * t0 * t1).sqrt();
                (self.w0[b] * t1 - self.w1[b] * t0) / denom
            })
            .collect()
    }

    /// Value of block `b` at reward offset `rho` given successor values.
    fn block_value(&self, b: usize, s: usize, g: &[f64], rho: f64, value: &[f64]) -> f64 {
        match self.dst0[b] {
            None => g[b] - rho,
            Some(d) if d == s => {
                if self.w0[b] < 1.0 {
                    (g[b] - rho) / (1.0 - self.w0[b])
                } else {
                    f64::NEG_INFINITY
                }
            }
            Some(d) => g[b] - rho + self.w0[b] * value[d],
        }
    }

    fn bellman(&self, g: &[f64], rho: f64, value: &mut [f64], choice: &mut [usize]) {
        for &s in &self.order {
            let mut best = f64::NEG_INFINITY;
            for &b in &self.state_blocks[s] {
                let v = self.block_value(b, s, g, rho, value);
                if v > best {
                    best = v;
                    choice[s] = b;
                }
            }
            value[s] = best;
        }
    }

    /// Expected reward and length of one excursion from `(0, 0)` under `choice`.
    fn excursion(&self, g: &[f64], choice: &[usize]) -> (f64, f64) {
        let ns = self.states.len();
        let mut r = vec![0.0; ns];
        let mut t = vec![0.0; ns];
        for &s in &self.order {
            let b = choice[s];
            let (rr, tt) = match self.dst0[b] {
                None => (g[b], 1.0),
                Some(d) if d == s => (g[b] / (1.0 - self.w0[b]), 1.0 / (1.0 - self.w0[b])),
                Some(d) => (g[b] + self.w0[b] * r[d], 1.0 + self.w0[b] * t[d]),
            };
            r[s] = rr;
            t[s] = tt;
        }
        (r[0], t[0])
    }

    /// Exact minimiser of the linearisation bound over the multipliers.
    ///
    /// Maximising `g^T m` over the flow polytope is an average-reward problem on
    /// the `(u, q)` states that renews at `(0, 0)`; Dinkelbach iterations find
    /// its optimal rate and the relative values become the flow multipliers.
    fn renewal_dual(&self, g: &[f64], m: &[f64]) -> Vec<f64> {
        let ns = self.states.len();
        let mut rho: f64 = g.iter().zip(m).map(|(a, b)| a * b).sum();
        for (b, d) in self.dst0.iter().enumerate() {
            if *d == Some(self.block_state[b]) && self.w0[b] >= 1.0 {
                rho = rho.max(g[b]);
            }
        }
        let mut value = vec![0.0; ns];
        let mut choice = vec![0; ns];
        for _ in 0..200 {
            self.bellman(g, rho, &mut value, &mut choice);
            let (r, t) = self.excursion(g, &choice);
            let next = r / t;
            if !(next > rho) {
                break;
            }
            rho = next;
        }
        self.bellman(g, rho, &mut value, &mut choice);
        let mut y = vec![0.0; self.a.nrows()];
        for (s, &(u, q)) in self.states.iter().enumerate().skip(1) {
            y[self.flow_row[&(u, q)]] = value[s];
        }
        y[self.pmf_row] = rho;
        y
    }

    fn barrier(&self, m: &[f64], mu: f64) -> f64 {
        self.objective(m) + mu * m.iter().map(|x| x.ln()).sum::<f64>()
    }

    /// Upper certificate in block space.
    fn upper(&self, m: &[f64], y: &[f64]) -> f64 {
        let t = self.group_sums(m);
        let g = self.gradient(m, &t);
        let aty = self.a.tmul(y);
        let kmax = g
            .iter()
            .zip(&aty)
            .map(|(g, a)| g - a)
            .fold(f64::NEG_INFINITY, f64::max);
        let yb: f64 = y.iter().zip(&self.b).map(|(a, b)| a * b).sum();
        let gm: f64 = g.iter().zip(m).map(|(a, b)| a * b).sum();
        self.objective(m) + kmax + yb - gm
    }
}

/// Assembled KKT pattern with slot maps for fast refills.
struct Kkt {
    csc: UpperCsc,
    slot: Vec<usize>,
    entry_count: usize,
    factor: LdlFactor,
    nb: usize,
    nq: usize,
    nr: usize,
    static_reg: f64,
    /// Symmetric scaling of the constraint rows, refreshed on every update.
    row_scale: Vec<f64>,
}

impl Kkt {
    fn new(space: &BlockSpace) -> Result<Self> {
        let nb = space.nb;
        let nq = space.nq;
        let nr = space.a.nrows();
        let n = nb + nq + nr;
        let mut entries = Vec::new();
        for b in 0..nb {
            entries.push((b, b, 1.0));
        }
        for b in 0..nb {
            entries.push((b, nb + space.block_q[b], 1.0));
        }
        for &(r, b, _) in space.a.entries() {
            entries.push((b, nb + nq + r, 1.0));
        }
        for i in nb..n {
            entries.push((i, i, -1.0));
        }
        let entry_count = entries.len();
        let (csc, slot) = UpperCsc::from_entries(n, &entries);
        let signs: Vec<f64> = (0..n).map(|i| if i < nb { 1.0 } else { -1.0 }).collect();
        // block pivots first so no constraint pivot starts at zero
        let stage: Vec<usize> = (0..n).map(|i| if i < nb { 0 } else if i < nb + nq { 1 } else { 2 }).collect();
        let factor = LdlFactor::analyze_staged(&csc, &signs, &stage, Regularization::default())?;
        Ok(Kkt {
            csc,
            slot,
            entry_count,
            factor,
            nb,
            nq,
            nr,
            static_reg: 1e-13,
            row_scale: vec![1.0; nr],
        })
    }

    /// Fills values for the current point and factors; returns the exact matrix.
    fn update(&mut self, space: &BlockSpace, m: &[f64], rfac: &[f64], mu: f64) -> Result<UpperCsc> {
        let mut norm2 = vec![0.0; self.nr];
        for &(r, b, v) in space.a.entries() {
            norm2[r] += (m[b] * v).powi(2);
        }
        for (s, n2) in self.row_scale.iter_mut().zip(&norm2) {
            *s = if *n2 > 0.0 { 1.0 / n2.sqrt() } else { 1.0 };
        }
        let mut vals = Vec::with_capacity(self.entry_count);
        vals.extend(std::iter::repeat(mu).take(self.nb));
        vals.extend((0..self.nb).map(|b| m[b] * rfac[b]));
        vals.extend(
            space
                .a
                .entries()
                .iter()
                .map(|&(r, b, v)| m[b] * v * self.row_scale[r]),
        );
        vals.extend(std::iter::repeat(-1.0).take(self.nq));
        let exact_tail = vals.len();
        vals.extend(std::iter::repeat(0.0).take(self.nr));

        let mut exact = self.csc.clone();
        exact.values.iter_mut().for_each(|x| *x = 0.0);
        for (k, v) in vals.iter().enumerate() {
            exact.values[self.slot[k]] += v;
        }
        let mut reg = exact.values.clone();
        for k in exact_tail..vals.len() {
            reg[self.slot[k]] -= self.static_reg;
        }
        self.factor.refactor(&reg)?;
        Ok(exact)
    }
}

/// Best certificates seen so far.
struct Certs {
    lower: f64,
    lower_policy: Policy,
    upper: f64,
    upper_m: Vec<f64>,
    upper_y: Vec<f64>,
}

const STALL_STAGES: usize = 6;

/// Maximises the program's objective with certified bounds.
///
/// `init` defaults to the half-half policy.
pub fn maximize(prog: &ConvexProgram, init: Option<&Policy>, opts: &SolveOptions) -> Result<SolveResult> {
    opts.validate()?;
    if prog.kind() == BoundKind::UpperBound && prog.last_node() == 0 {
        return Err(BehcError::InvalidParameter(
            "the upper-bound program needs N >= 1".into(),
        ));
    }
    let space = BlockSpace::new(prog);
    let half = Policy::half(prog.kind(), prog.last_node());
    let start_policy = init.unwrap_or(&half).clamped(POLICY_EPS);
    let start = prog.joint_from_policy(&start_policy, None)?;
    let mut m = space.collapse(&start.v);
    let infeas = residual_inf(&space.a, &m, &space.b);
    if infeas > 1e-9 || m.iter().any(|x| !(*x > 0.0)) {
        return Err(BehcError::InfeasibleStart(infeas));
    }

    let mut kkt = Kkt::new(&space)?;
    let y0 = space.renewal_dual(&space.gradient(&m, &space.group_sums(&m)), &m);
    let mut certs = Certs {
        lower: prog.objective(&start.v),
        lower_policy: start_policy,
        upper: space.upper(&m, &y0),
        upper_m: m.clone(),
        upper_y: y0,
    };
    let mut warm_pi = Some(start.pi);
    let mut stages = Vec::new();
    let mut mu = opts.mu0;
    let mut iterations = 0;
    let mut status = SolveStatus::MaxIterations;
    let mut stalled = 0;

    for _stage in 0..opts.max_stages {
        let mut steps = 0;
        for _ in 0..opts.max_newton {
            let t = space.group_sums(&m);
            let g = space.gradient(&m, &t);
            let rfac = space.hessian_factor(&t);
            let exact = kkt.update(&space, &m, &rfac, mu)?;
            let mut rhs = Vec::with_capacity(exact.n);
            rhs.extend(m.iter().zip(&g).map(|(mb, gb)| mb * gb + mu));
            rhs.extend(std::iter::repeat(0.0).take(space.nq));
            let am = space.a.mul(&m);
            rhs.extend(
                space
                    .b
                    .iter()
                    .zip(&am)
                    .zip(&kkt.row_scale)
                    .map(|((b, a), s)| (b - a) * s),
            );
            let (sol, _) = kkt.factor.solve_refined(&exact, &rhs, 20, 1e-15);
            let dp = &sol[..space.nb];
            let z = &sol[space.nb..space.nb + space.nq];
            iterations += 1;
            steps += 1;

            let lambda2 = mu * dp.iter().map(|x| x * x).sum::<f64>() + z.iter().map(|x| x * x).sum::<f64>();
            let mut alpha: f64 = 1.0;
            for &d in dp {
                if d < 0.0 {
                    alpha = alpha.min(0.99 / -d);
                }
            }
            if lambda2 / 2.0 >= 1e-6 {
                let phi0 = space.barrier(&m, mu);
                let slope: f64 = m
                    .iter()
                    .zip(&g)
                    .zip(dp)
                    .map(|((mb, gb), d)| (mb * gb + mu) * d)
                    .sum();
                loop {
                    let trial: Vec<f64> = m.iter().zip(dp).map(|(mb, d)| mb * (1.0 + alpha * d)).collect();
                    let phi = space.barrier(&trial, mu);
                    if phi >= phi0 + 0.01 * alpha * slope || alpha < 1e-12 {
                        break;
                    }
                    alpha *= opts.backtrack;
                }
            }
            for (mb, d) in m.iter_mut().zip(dp) {
                *mb *= 1.0 + alpha * d;
            }
            if lambda2 / 2.0 <= opts.newton_tol {
                break;
            }
        }

        let y = space.renewal_dual(&space.gradient(&m, &space.group_sums(&m)), &m);
        let upper = space.upper(&m, &y);
        let gap_before = certs.upper - certs.lower;
        if upper < certs.upper {
            certs.upper = upper;
            certs.upper_m = m.clone();
            certs.upper_y = y;
        }
        if certs.upper - certs.lower > opts.gap_tol || certs.upper - space.objective(&m) <= opts.gap_tol {
            let v = space.lift(&m);
            match lower_from_iterate(prog, &v, warm_pi.as_deref()) {
                Ok((value, pol, joint)) => {
                    if value > certs.lower {
                        certs.lower = value;
                        certs.lower_policy = pol;
                    }
                    warm_pi = Some(joint.pi);
                }
                Err(e) => log::warn!("lower certificate failed at mu={mu:e}: {e}"),
            }
        }
        stages.push(StageRecord {
            mu,
            newton_steps: steps,
            lower: certs.lower,
            upper: certs.upper,
        });
        let gap = certs.upper - certs.lower;
        log::debug!(
            "{} N={} mu={mu:.3e} steps={steps} lower={:.12} upper={:.12} gap={gap:.3e}",
            prog.kind(),
            prog.last_node(),
            certs.lower,
            certs.upper,
        );
        if gap <= opts.gap_tol {
            status = SolveStatus::Optimal;
            break;
        }
        // once mu is far below the gap the barrier is no longer what limits it
        if mu * (space.nb as f64) < 1e-2 * gap && gap > 0.99 * gap_before {
            stalled += 1;
            if stalled >= STALL_STAGES {
                break;
            }
        } else {
            stalled = 0;
        }
        mu *= opts.mu_factor;
    }

    let v_hat = space.lift(&certs.upper_m);
    let y_full = lift_multipliers(prog, &space, &v_hat, &certs.upper_y)?;
    Ok(SolveResult {
        kind: prog.kind(),
        n: prog.last_node(),
        eta: prog.eta(),
        objective: prog.objective(&v_hat),
        residual_primal: prog.residual(&v_hat),
        v_hat,
        lower_certified: certs.lower,
        upper_certified: certs.upper,
        y: y_full,
        iterations,
        stages,
        status,
        lower_policy: certs.lower_policy,
    })
}

fn residual_inf(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    a.mul(x)
        .iter()
        .zip(b)
        .map(|(ax, b)| (ax - b).abs())
        .fold(0.0, f64::max)
}

fn stationary_guess(prog: &ConvexProgram, v: &[f64]) -> Vec<f64> {
    let states = chain_states(prog.kind(), prog.last_node());
    let index: HashMap<(u8, usize, usize), usize> =
        states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut pi = vec![0.0; states.len()];
    for (j, var) in prog.vars().vars().iter().enumerate() {
        if let Some(&i) = index.get(&(var.s, var.u, var.q)) {
            pi[i] += v[j].max(0.0);
        }
    }
    pi
}

fn lower_from_iterate(prog: &ConvexProgram, v: &[f64], warm: Option<&[f64]>) -> Result<(f64, Policy, Joint)> {
    let pol = prog.joint_to_policy(v).policy.clamped(POLICY_EPS);
    let guess;
    let warm = match warm {
        Some(w) => Some(w),
        None => {
            guess = stationary_guess(prog, v);
            Some(guess.as_slice())
        }
    };
    let joint = prog.joint_from_policy(&pol, warm)?;
    Ok((prog.objective(&joint.v), pol, joint))
}

/// Objective of the exact joint generated by the policy read off `v_hat`.
pub fn certified_lower(prog: &ConvexProgram, v_hat: &[f64]) -> Result<f64> {
    let guess = stationary_guess(prog, v_hat);
    Ok(lower_from_iterate(prog, v_hat, Some(&guess))?.0)
}

/// `f(v) + max_j (g - A^T y)_j + y^T b - g^T v`, an upper bound on the optimum for any `y`.
pub fn certified_upper(prog: &ConvexProgram, v_hat: &[f64], y: &[f64]) -> Result<f64> {
    let g = prog.gradient(v_hat)?;
    let aty = prog.a().tmul(y);
    let kmax = g
        .iter()
        .zip(&aty)
        .map(|(g, a)| g - a)
        .fold(f64::NEG_INFINITY, f64::max);
    let yb: f64 = y.iter().zip(prog.b()).map(|(a, b)| a * b).sum();
    let gv: f64 = g.iter().zip(v_hat).map(|(a, b)| a * b).sum();
    Ok(prog.objective(v_hat) + kmax + yb - gv)
}

/// Extends block-space multipliers to every program row.
///
/// Stationarity rows take their flow multiplier and the normalisation row keeps
/// its own. Within each block the state-law and policy rows then absorb the
/// variation of `g - A^T y`, leaving it constant on the block.
fn lift_multipliers(prog: &ConvexProgram, space: &BlockSpace, v: &[f64], y_red: &[f64]) -> Result<Vec<f64>> {
    let k = prog.num_rows();
    let mut y = vec![0.0; k];
    let mut local: HashMap<(usize, usize, usize), Vec<usize>> = HashMap::new();
    for (r, label) in prog.labels().iter().enumerate() {
        match *label {
            RowLabel::Stationary { u, q, .. } => {
                if let Some(&fr) = space.flow_row.get(&(u, q)) {
                    y[r] = y_red[fr];
                }
            }
            RowLabel::Pmf => y[r] = y_red[space.pmf_row],
            RowLabel::FscLaw { u, q, u_plus, .. } | RowLabel::Policy { u, q, u_plus } => {
                local.entry((u, q, u_plus)).or_default().push(r);
            }
        }
    }
    let g = prog.gradient(v)?;
    let aty = prog.a().tmul(&y);
    let rows = prog.a().rows();
    for blk in prog.vars().blocks() {
        let cols: Vec<usize> = blk.cols.clone().collect();
        let d: Vec<f64> = cols.iter().map(|&j| g[j] - aty[j]).collect();
        let kappa: f64 = cols.iter().zip(&d).map(|(&j, dj)| space.ell[j] * dj).sum();
        let Some(lrows) = local.get(&(blk.u, blk.q, blk.u_plus)) else {
            continue;
        };
        // B^T w = d - kappa, with B the local rows restricted to the block
        let mut bt = DMatrix::<f64>::zeros(cols.len(), lrows.len());
        for (ci, r) in lrows.iter().enumerate() {
            for &(c, val) in &rows[*r] {
                if let Some(pos) = cols.iter().position(|&j| j == c) {
                    bt[(pos, ci)] = val;
                }
            }
        }
        let rhs = nalgebra::DVector::from_iterator(cols.len(), d.iter().map(|x| x - kappa));
        // least-norm solution w = (B B^T)^+ B r
        let b = bt.transpose();
        let eig = (&b * &bt).symmetric_eigen();
        let smax = eig.eigenvalues.amax();
        let mut coef = eig.eigenvectors.transpose() * (&b * &rhs);
        for (c, s) in coef.iter_mut().zip(eig.eigenvalues.iter()) {
            *c = if *s > 1e-13 * smax { *c / s } else { 0.0 };
        }
        let w = eig.eigenvectors * coef;
        for (ci, r) in lrows.iter().enumerate() {
            y[*r] += w[ci];
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::build_program;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn block_space_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [BoundKind::LowerBound, BoundKind::UpperBound] {
            for n in 1..6 {
                let p = build_program(kind, n, 0.45).unwrap();
                let space = BlockSpace::new(&p);
                let pol = Policy::random(kind, n, &mut rng, 0.1, 0.9);
                let v = p.joint_from_policy(&pol, None).unwrap().v;
                let m = space.collapse(&v);
                assert!(residual_inf(&space.a, &m, &space.b) < 1e-13);
                let lifted = space.lift(&m);
                assert!(p.residual(&lifted) < 1e-13);
                assert!((space.objective(&m) - p.objective(&v)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn single_node_lower_is_zero() {
        let p = build_program(BoundKind::LowerBound, 0, 0.5).unwrap();
        let r = maximize(&p, None, &SolveOptions::default()).unwrap();
        assert!(r.lower_certified.abs() < 1e-9);
        assert!(r.upper_certified.abs() < 1e-9);
        assert_eq!(r.status, SolveStatus::Optimal);
    }

    #[test]
    fn certificates_sandwich_and_lift() {
        for kind in [BoundKind::LowerBound, BoundKind::UpperBound] {
            let p = build_program(kind, 4, 0.3).unwrap();
            let r = maximize(&p, None, &SolveOptions::default()).unwrap();
            assert_eq!(r.status, SolveStatus::Optimal);
            assert!(r.gap() <= 1e-9);
            assert!(r.lower_certified <= r.objective + 1e-9);
            assert!(r.objective <= r.upper_certified + 1e-9);
            let up = certified_upper(&p, &r.v_hat, &r.y).unwrap();
            assert!((up - r.upper_certified).abs() < 1e-11, "{up} vs {}", r.upper_certified);
            assert!(certified_lower(&p, &r.v_hat).unwrap() <= r.upper_certified);
            for w in r.stages.windows(2) {
                assert!(w[1].gap() <= w[0].gap() + 1e-12);
            }
        }
    }

    #[test]
    fn zero_multipliers_give_finite_bound() {
        let p = build_program(BoundKind::LowerBound, 1, 0.5).unwrap();
        let v = p.joint_from_policy(&Policy::half(BoundKind::LowerBound, 1), None).unwrap().v;
        let up = certified_upper(&p, &v, &vec![0.0; p.num_rows()]).unwrap();
        assert!(up.is_finite() && up >= p.objective(&v));
    }

    #[test]
    fn deterministic() {
        let p = build_program(BoundKind::UpperBound, 3, 0.6).unwrap();
        let a = maximize(&p, None, &SolveOptions::default()).unwrap();
        let b = maximize(&p, None, &SolveOptions::default()).unwrap();
        assert_eq!(a.lower_certified.to_bits(), b.lower_certified.to_bits());
        assert_eq!(a.upper_certified.to_bits(), b.upper_certified.to_bits());
    }
}
