//! Sparse LDL^T for symmetric quasidefinite matrices.
//!
//! Up-looking factorisation over an elimination tree, with a fill-reducing
//! ordering from AMD. The symbolic phase runs once per sparsity pattern; the
//! numeric phase can be repeated with new values through [`LdlFactor::refactor`].
//! Pivots whose sign disagrees with the expected one are replaced by a small
//! regularisation of the right sign.

use crate::error::{BehcError, Result};

const NONE: usize = usize::MAX;

/// Upper triangle (diagonal included) of a symmetric matrix in CSC form.
#[derive(Debug, Clone)]
pub struct UpperCsc {
    pub n: usize,
    pub colptr: Vec<usize>,
    pub rowind: Vec<usize>,
    pub values: Vec<f64>,
}

impl UpperCsc {
    /// Builds from `(row, col, value)` entries with `row <= col`; duplicates are summed.
    ///
    /// Also returns, for each input entry, its slot in `values`.
    pub fn from_entries(n: usize, entries: &[(usize, usize, f64)]) -> (Self, Vec<usize>) {
        let mut order: Vec<usize> = (0..entries.len()).collect();
        order.sort_by_key(|&k| (entries[k].1, entries[k].0));
        let mut colptr = vec![0; n + 1];
        let mut rowind = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut slot = vec![0; entries.len()];
        let mut last: Option<(usize, usize)> = None;
        for &k in &order {
            let (r, c, v) = entries[k];
            assert!(r <= c && c < n, "entry ({r}, {c}) is not in the upper triangle");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                rowind.push(r);
                values.push(v);
                colptr[c + 1] += 1;
                last = Some((r, c));
            }
            slot[k] = values.len() - 1;
        }
        for j in 0..n {
            colptr[j + 1] += colptr[j];
        }
        (
            UpperCsc {
                n,
                colptr,
                rowind,
                values,
            },
            slot,
        )
    }

    /// `y = A x` using both triangles.
    pub fn sym_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            for p in self.colptr[j]..self.colptr[j + 1] {
                let i = self.rowind[p];
                let v = self.values[p];
                y[i] += v * x[j];
                if i != j {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }
}

/// Regularisation applied during numeric factorisation.
#[derive(Debug, Clone, Copy)]
pub struct Regularization {
    /// Pivots with `sign * d <= eps` are replaced.
    pub eps: f64,
    /// Replacement magnitude.
    pub delta: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Regularization {
            eps: 1e-13,
            delta: 1e-7,
        }
    }
}

fn amd_order(a: &UpperCsc) -> Result<Vec<usize>> {
    if a.n == 0 {
        return Ok(Vec::new());
    }
    let ap: Vec<i64> = a.colptr.iter().map(|&x| x as i64).collect();
    let ai: Vec<i64> = a.rowind.iter().map(|&x| x as i64).collect();
    let (p, _, _) = amd::order(a.n as i64, &ap, &ai, &amd::Control::default())
        .map_err(|s| BehcError::Factorization(format!("AMD failed: {s:?}")))?;
    Ok(p.into_iter().map(|x| x as usize).collect())
}

/// A factorisation `P A P^T = L D L^T` reusable across value updates.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    // permuted upper triangle
    pcolptr: Vec<usize>,
    prowind: Vec<usize>,
    pvalues: Vec<f64>,
    // slot of each original value in the permuted storage
    map: Vec<usize>,
    etree: Vec<usize>,
    lnz: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    signs: Vec<f64>,
    reg: Regularization,
    regularized: usize,
}

impl LdlFactor {
    /// Symbolic analysis of `a`'s pattern; `signs[i]` is the expected pivot sign.
    pub fn analyze(a: &UpperCsc, signs: &[f64], reg: Regularization) -> Result<Self> {
        let perm = amd_order(a)?;
        Self::with_order(a, signs, reg, perm)
    }

    /// Like [`LdlFactor::analyze`], but every index of stage `k` is eliminated
    /// before any index of stage `k + 1`. AMD orders stage 0; later stages keep
    /// their index order.
    pub fn analyze_staged(a: &UpperCsc, signs: &[f64], stage: &[usize], reg: Regularization) -> Result<Self> {
        let mut perm = amd_order(a)?;
        perm.sort_by_key(|&i| (stage[i], if stage[i] == 0 { 0 } else { i }));
        Self::with_order(a, signs, reg, perm)
    }

    fn with_order(a: &UpperCsc, signs: &[f64], reg: Regularization, perm: Vec<usize>) -> Result<Self> {
        let n = a.n;
        let mut pinv = vec![0; n];
        for (k, &i) in perm.iter().enumerate() {
            pinv[i] = k;
        }

        // permute: entry (i, j) goes to (min, max) of (pinv[i], pinv[j])
        let nnz = a.values.len();
        let mut counts = vec![0usize; n + 1];
        let mut coords = Vec::with_capacity(nnz);
        for j in 0..n {
            for p in a.colptr[j]..a.colptr[j + 1] {
                let (pi, pj) = (pinv[a.rowind[p]], pinv[j]);
                let (r, c) = if pi <= pj { (pi, pj) } else { (pj, pi) };
                coords.push((r, c));
                counts[c + 1] += 1;
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let pcolptr = counts.clone();
        let mut next = counts;
        let mut prowind = vec![0; nnz];
        let mut map = vec![0; nnz];
        for (k, &(r, c)) in coords.iter().enumerate() {
            prowind[next[c]] = r;
            map[k] = next[c];
            next[c] += 1;
        }

        // elimination tree and column counts
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for p in pcolptr[j]..pcolptr[j + 1] {
                let mut i = prowind[p];
                if i > j {
                    return Err(BehcError::Factorization("pattern not upper triangular".into()));
                }
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        let psigns = perm.iter().map(|&i| signs[i]).collect();

        Ok(LdlFactor {
            n,
            perm,
            pcolptr,
            prowind,
            pvalues: vec![0.0; nnz],
            map,
            etree,
            lnz,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
            signs: psigns,
            reg,
            regularized: 0,
        })
    }

    pub fn nnz_l(&self) -> usize {
        self.lp[self.n]
    }

    /// Number of pivots replaced in the last factorisation.
    pub fn regularized(&self) -> usize {
        self.regularized
    }

    /// Numeric factorisation with new values in the original slot order.
    pub fn refactor(&mut self, values: &[f64]) -> Result<()> {
        let n = self.n;
        for (k, &v) in values.iter().enumerate() {
            self.pvalues[self.map[k]] = v;
        }
        let mut y_markers = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = self.lp[..n].to_vec();
        let mut y_vals = vec![0.0; n];
        self.regularized = 0;

        for k in 0..n {
            let mut nnz_y = 0;
            self.d[k] = 0.0;
            for p in self.pcolptr[k]..self.pcolptr[k + 1] {
                let bidx = self.prowind[p];
                if bidx == k {
                    self.d[k] += self.pvalues[p];
                    continue;
                }
                y_vals[bidx] += self.pvalues[p];
                if !y_markers[bidx] {
                    y_markers[bidx] = true;
                    elim[0] = bidx;
                    let mut n_e = 1;
                    let mut next = self.etree[bidx];
                    while next != NONE && next < k {
                        if y_markers[next] {
                            break;
                        }
                        y_markers[next] = true;
                        elim[n_e] = next;
                        n_e += 1;
                        next = self.etree[next];
                    }
                    while n_e > 0 {
                        n_e -= 1;
                        y_idx[nnz_y] = elim[n_e];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let tmp = next_space[c];
                let yc = y_vals[c];
                for j in self.lp[c]..tmp {
                    y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[tmp] = k;
                self.lx[tmp] = yc * self.dinv[c];
                self.d[k] -= yc * self.lx[tmp];
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_markers[c] = false;
            }
            let sign = self.signs[k];
            if !(sign * self.d[k] > self.reg.eps) {
                self.d[k] = sign * self.reg.delta;
                self.regularized += 1;
            }
            self.dinv[k] = 1.0 / self.d[k];
        }
        debug_assert!((0..n).all(|c| next_space[c] == self.lp[c] + self.lnz[c]));
        Ok(())
    }

    /// Solves with the current factors (original ordering in and out).
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            let xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                x[self.li[j]] -= self.lx[j] * xi;
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                xi -= self.lx[j] * x[self.li[j]];
            }
            x[i] = xi;
        }
        let mut out = vec![0.0; n];
        for (k, &i) in self.perm.iter().enumerate() {
            out[i] = x[k];
        }
        out
    }

    /// Solve followed by iterative refinement against the exact matrix `a`.
    ///
    /// Returns the solution and the final infinity-norm residual.
    pub fn solve_refined(&self, a: &UpperCsc, b: &[f64], max_iter: usize, tol: f64) -> (Vec<f64>, f64) {
        let mut x = self.solve(b);
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let mut res = residual(a, &x, b);
        let mut norm = inf_norm(&res);
        for _ in 0..max_iter {
            if norm <= tol * scale {
                break;
            }
            let dx = self.solve(&res);
            let cand: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
            let cres = residual(a, &cand, b);
            let cnorm = inf_norm(&cres);
            if cnorm >= norm {
                break;
            }
            x = cand;
            res = cres;
            norm = cnorm;
        }
        (x, norm)
    }
}

fn residual(a: &UpperCsc, x: &[f64], b: &[f64]) -> Vec<f64> {
    a.sym_mul(x).iter().zip(b).map(|(ax, b)| b - ax).collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_quasidefinite(n1: usize, n2: usize, density: f64, seed: u64) -> Vec<(usize, usize, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = n1 + n2;
        let mut e = Vec::new();
        for i in 0..n1 {
            e.push((i, i, rng.gen_range(0.5..2.0)));
        }
        for i in n1..n {
            e.push((i, i, -rng.gen_range(0.5..2.0)));
        }
        for j in 0..n {
            for i in 0..j {
                if rng.gen::<f64>() < density {
                    // couplings inside a block stay small so each block keeps its sign
                    let same = (i < n1) == (j < n1);
                    let w = if same { 0.05 } else { 1.0 };
                    e.push((i, j, w * rng.gen_range(-1.0..1.0)));
                }
            }
        }
        e
    }

    fn dense(n: usize, e: &[(usize, usize, f64)]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        for &(i, j, v) in e {
            m[(i, j)] += v;
            if i != j {
                m[(j, i)] += v;
            }
        }
        m
    }

    #[test]
    fn solves_random_quasidefinite_systems() {
        for seed in 0..5 {
            let (n1, n2) = (30, 12);
            let n = n1 + n2;
            let e = random_quasidefinite(n1, n2, 0.08, seed);
            let (a, _) = UpperCsc::from_entries(n, &e);
            let signs: Vec<f64> = (0..n).map(|i| if i < n1 { 1.0 } else { -1.0 }).collect();
            let mut f = LdlFactor::analyze(&a, &signs, Regularization::default()).unwrap();
            f.refactor(&a.values).unwrap();
            let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
            let (x, res) = f.solve_refined(&a, &b, 5, 1e-14);
            let want = dense(n, &e).lu().solve(&DVector::from_vec(b)).unwrap();
            assert!(res < 1e-12);
            for i in 0..n {
                assert!((x[i] - want[i]).abs() < 1e-9 * (1.0 + want[i].abs()));
            }
        }
    }

    #[test]
    fn duplicates_are_summed_and_refactor_reuses_pattern() {
        let e = vec![(0, 0, 1.0), (0, 0, 1.0), (0, 1, 1.0), (1, 1, -3.0)];
        let (a, slot) = UpperCsc::from_entries(2, &e);
        assert_eq!(slot[0], slot[1]);
        let mut f = LdlFactor::analyze(&a, &[1.0, -1.0], Regularization::default()).unwrap();
        f.refactor(&a.values).unwrap();
        let x = f.solve(&[1.0, 0.0]);
        // [[2,1],[1,-3]] x = [1,0]
        assert!((x[0] - 3.0 / 7.0).abs() < 1e-15);
        assert!((x[1] - 1.0 / 7.0).abs() < 1e-15);
        f.refactor(&[4.0, 0.0, -1.0]).unwrap();
        let x = f.solve(&[1.0, 0.0]);
        assert!((x[0] - 0.25).abs() < 1e-15 && x[1].abs() < 1e-15);
    }

    #[test]
    fn wrong_sign_pivot_is_regularized() {
        let (a, _) = UpperCsc::from_entries(1, &[(0, 0, 0.0)]);
        let mut f = LdlFactor::analyze(&a, &[-1.0], Regularization::default()).unwrap();
        f.refactor(&a.values).unwrap();
        assert_eq!(f.regularized(), 1);
    }
}
