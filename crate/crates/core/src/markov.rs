//! Sparse finite Markov chains and their stationary distributions.

use nalgebra::{DMatrix, DVector};

use crate::error::{BehcError, Result};

/// Tolerances for [`MarkovChain::stationary`].
#[derive(Debug, Clone, Copy)]
pub struct StationaryOptions {
    /// Target L1 residual `|pi P - pi|_1`.
    pub tol: f64,
    pub max_iter: usize,
    /// Chains up to this size may fall back to a dense LU solve.
    pub dense_limit: usize,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        StationaryOptions {
            tol: 1e-14,
            max_iter: 1_000_000,
            dense_limit: 5000,
        }
    }
}

/// A stationary distribution and how it was obtained.
#[derive(Debug, Clone)]
pub struct Stationary {
    pub pi: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Row-stochastic transition matrix stored by rows and by columns.
#[derive(Debug, Clone)]
pub struct MarkovChain {
    n: usize,
    out_ptr: Vec<usize>,
    out_idx: Vec<usize>,
    out_val: Vec<f64>,
    in_ptr: Vec<usize>,
    in_idx: Vec<usize>,
    in_val: Vec<f64>,
}

impl MarkovChain {
    /// Builds a chain from `(from, to, probability)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut t: Vec<(usize, usize, f64)> = triplets
            .iter()
            .copied()
            .filter(|&(_, _, p)| p != 0.0)
            .collect();
        t.sort_by_key(|e| (e.0, e.1));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(t.len());
        for (i, j, p) in t {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += p,
                _ => merged.push((i, j, p)),
            }
        }

        let mut out_ptr = vec![0; n + 1];
        for &(i, _, _) in &merged {
            out_ptr[i + 1] += 1;
        }
        for i in 0..n {
            out_ptr[i + 1] += out_ptr[i];
        }
        let out_idx = merged.iter().map(|e| e.1).collect();
        let out_val = merged.iter().map(|e| e.2).collect();

        let mut in_ptr = vec![0; n + 1];
        for &(_, j, _) in &merged {
            in_ptr[j + 1] += 1;
        }
        for j in 0..n {
            in_ptr[j + 1] += in_ptr[j];
        }
        let mut fill = in_ptr.clone();
        let mut in_idx = vec![0; merged.len()];
        let mut in_val = vec![0.0; merged.len()];
        for &(i, j, p) in &merged {
            in_idx[fill[j]] = i;
            in_val[fill[j]] = p;
            fill[j] += 1;
        }

        MarkovChain {
            n,
            out_ptr,
            out_idx,
            out_val,
            in_ptr,
            in_idx,
            in_val,
        }
    }

    pub fn num_states(&self) -> usize {
        self.n
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.out_val[self.out_ptr[i]..self.out_ptr[i + 1]].iter().sum())
            .collect()
    }

    /// Outgoing transitions of state `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.out_ptr[i]..self.out_ptr[i + 1];
        self.out_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.out_val[r].iter().copied())
    }

    /// `pi P`.
    pub fn step(&self, pi: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|j| {
                (self.in_ptr[j]..self.in_ptr[j + 1])
                    .map(|k| pi[self.in_idx[k]] * self.in_val[k])
                    .sum()
            })
            .collect()
    }

    /// `|pi P - pi|_1`.
    pub fn residual(&self, pi: &[f64]) -> f64 {
        self.step(pi)
            .iter()
            .zip(pi)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    /// Stationary distribution, optionally warm-started.
    ///
    /// Runs Gauss-Seidel sweeps in state order, which converge quickly on chains
    /// whose transitions mostly move forward in the index. Falls back to a dense
    /// LU solve for small chains, then to lazy power iteration.
    pub fn stationary(&self, warm: Option<&[f64]>, opts: &StationaryOptions) -> Result<Stationary> {
        let n = self.n;
        if n == 0 {
            return Err(BehcError::InvalidParameter("empty chain".into()));
        }
        let mut pi = match warm {
            Some(w) if w.len() == n && w.iter().all(|x| x.is_finite() && *x >= 0.0) => {
                let s: f64 = w.iter().sum();
                if s > 0.0 {
                    w.iter().map(|x| x / s).collect()
                } else {
                    vec![1.0 / n as f64; n]
                }
            }
            _ => vec![1.0 / n as f64; n],
        };

        let diag: Vec<f64> = (0..n)
            .map(|j| {
                (self.in_ptr[j]..self.in_ptr[j + 1])
                    .find(|&k| self.in_idx[k] == j)
                    .map_or(0.0, |k| self.in_val[k])
            })
            .collect();

        let mut iterations = 0;
        let mut residual = self.residual(&pi);
        if residual <= opts.tol {
            return Ok(Stationary {
                pi,
                residual,
                iterations,
            });
        }

        let gs_budget = opts.max_iter.min(20_000);
        let mut best = residual;
        let mut stall = 0;
        let can_gs = diag.iter().all(|d| *d < 1.0);
        while can_gs && iterations < gs_budget {
            for j in 0..n {
                let mut acc = 0.0;
                for k in self.in_ptr[j]..self.in_ptr[j + 1] {
                    let i = self.in_idx[k];
                    if i != j {
                        acc += pi[i] * self.in_val[k];
                    }
                }
                pi[j] = acc / (1.0 - diag[j]);
            }
            let s: f64 = pi.iter().sum();
            if !(s > 0.0 && s.is_finite()) {
                break;
            }
            pi.iter_mut().for_each(|x| *x /= s);
            iterations += 1;
            residual = self.residual(&pi);
            if residual <= opts.tol {
                return Ok(Stationary {
                    pi,
                    residual,
                    iterations,
                });
            }
            if residual < 0.5 * best {
                best = residual;
                stall = 0;
            } else {
                stall += 1;
                if stall > 200 {
                    break;
                }
            }
        }
        log::debug!("Gauss-Seidel stalled at residual {residual:e} after {iterations} sweeps");

        if n <= opts.dense_limit {
            if let Some(sol) = self.dense_solve() {
                let r = self.residual(&sol);
                if r <= opts.tol {
                    return Ok(Stationary {
                        pi: sol,
                        residual: r,
                        iterations,
                    });
                }
                if r < residual {
                    pi = sol;
                    residual = r;
                }
            }
        }

        while iterations < opts.max_iter {
            let next = self.step(&pi);
            let mut s = 0.0;
            for (p, q) in pi.iter_mut().zip(&next) {
                *p = 0.5 * (*p + q);
                s += *p;
            }
            pi.iter_mut().for_each(|x| *x /= s);
            iterations += 1;
            if iterations % 16 == 0 {
                residual = self.residual(&pi);
                if residual <= opts.tol {
                    return Ok(Stationary {
                        pi,
                        residual,
                        iterations,
                    });
                }
            }
        }
        Err(BehcError::Stationary {
            iterations,
            residual,
        })
    }

    fn dense_solve(&self) -> Option<Vec<f64>> {
        let n = self.n;
        // (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for (j, p) in self.row(i) {
                m[(j, i)] += p;
            }
            m[(i, i)] -= 1.0;
        }
        for j in 0..n {
            m[(n - 1, j)] = 1.0;
        }
        let mut rhs = DVector::<f64>::zeros(n);
        rhs[n - 1] = 1.0;
        let sol = m.lu().solve(&rhs)?;
        if sol.iter().any(|x| !x.is_finite()) {
            return None;
        }
        Some(sol.iter().map(|x| x.max(0.0)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_chain() {
        let (a, b) = (0.3, 0.1);
        let c = MarkovChain::from_triplets(
            2,
            &[(0, 0, 1.0 - a), (0, 1, a), (1, 0, b), (1, 1, 1.0 - b)],
        );
        let s = c.stationary(None, &StationaryOptions::default()).unwrap();
        assert!((s.pi[0] - b / (a + b)).abs() < 1e-14);
        assert!(s.residual <= 1e-14);
    }

    #[test]
    fn periodic_cycle_converges() {
        let n = 7;
        let t: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        let c = MarkovChain::from_triplets(n, &t);
        let s = c.stationary(None, &StationaryOptions::default()).unwrap();
        for p in &s.pi {
            assert!((p - 1.0 / n as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn dense_fallback_matches() {
        // random dense 5-state chain
        let w = [
            [0.1, 0.2, 0.3, 0.2, 0.2],
            [0.5, 0.1, 0.1, 0.2, 0.1],
            [0.2, 0.2, 0.2, 0.2, 0.2],
            [0.0, 0.6, 0.1, 0.1, 0.2],
            [0.3, 0.0, 0.3, 0.0, 0.4],
        ];
        let mut t = Vec::new();
        for (i, row) in w.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                t.push((i, j, *p));
            }
        }
        let c = MarkovChain::from_triplets(5, &t);
        let gs = c.stationary(None, &StationaryOptions::default()).unwrap();
        let dense = c.dense_solve().unwrap();
        for (a, b) in gs.pi.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn row_sums_are_kept() {
        let c = MarkovChain::from_triplets(2, &[(0, 1, 0.5), (0, 1, 0.5), (1, 0, 1.0)]);
        assert_eq!(c.row_sums(), vec![1.0, 1.0]);
    }
}
