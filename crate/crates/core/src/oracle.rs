//! Exact finite reduction: constant weights, atomic a-priori measure and a
//! finite-rank potential turn `L_A` into a nonnegative matrix on atom tuples.
//!
//! The states are the points `(a_{i_1}, a_{i_2}/α, …, a_{i_R}/α^{R−1})` with
//! `R = max(N − 1, 1)`. The preimage by atom `a_j` maps state
//! `(i_1, …, i_R)` to `(j, i_1, …, i_{R−1})`, so the set is closed.

use serde::Serialize;
use thiserror::Error;

use crate::apriori::{AprioriKind, AprioriMeasure};
use crate::potential::Observable;
use crate::weights::WeightSequence;

/// Largest state count the oracle will build.
pub const MAX_STATES: usize = 100_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("the oracle needs constant weights")]
    NonConstantWeights,
    #[error("the oracle needs an atomic a-priori measure with at least two atoms")]
    NotAtomic,
    #[error("{states} states exceed the cap of {MAX_STATES}")]
    TooManyStates { states: usize },
    #[error("preimage of state {state} by atom {atom} left the collocation set")]
    ClosureViolation { state: usize, atom: usize },
    #[error("row {row} sums to {sum}, not 1")]
    NotStochastic { row: usize, sum: f64 },
    #[error("power iteration did not reach tolerance {tol:e} in {iterations} iterations")]
    NoConvergence { tol: f64, iterations: usize },
}

#[derive(Debug, Clone)]
pub struct FiniteInstance {
    alpha: f64,
    atoms: Vec<f64>,
    probs: Vec<f64>,
    potential_rank: usize,
    depth: usize,
    collocation: Vec<Vec<f64>>,
    /// `entries[s·k + j]` is the weight of the move from `s` to `pre_j(s)`.
    entries: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExactEigen {
    pub lambda: f64,
    /// Normalized to one at the collocation point nearest the origin.
    pub psi: Vec<f64>,
    /// Collatz–Wielandt bracket `min (Mψ)/ψ ≤ λ ≤ max (Mψ)/ψ`.
    pub bracket: (f64, f64),
    pub iterations: usize,
}

impl FiniteInstance {
    /// Builds the matrix of `L_A` for a potential reading `potential_rank`
    /// coordinates.
    pub fn build<A: Observable + ?Sized>(
        w: &WeightSequence,
        m: &AprioriMeasure,
        a: &A,
        potential_rank: usize,
    ) -> Result<Self, OracleError> {
        let alpha = w.constant_value().ok_or(OracleError::NonConstantWeights)?;
        let (atoms, probs) = match m.kind() {
            AprioriKind::Atoms { values, probs } if values.len() >= 2 => {
                let mut pairs: Vec<(f64, f64)> = values.iter().copied().zip(probs.iter().copied()).collect();
                pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
                pairs.into_iter().unzip::<f64, f64, Vec<f64>, Vec<f64>>()
            }
            _ => return Err(OracleError::NotAtomic),
        };
        let k = atoms.len();
        let depth = potential_rank.saturating_sub(1).max(1);
        let states = k
            .checked_pow(depth as u32)
            .filter(|&s| s <= MAX_STATES)
            .ok_or(OracleError::TooManyStates {
                states: k.saturating_pow(depth as u32),
            })?;
        // coordinate d of a state is atom / α applied d times, as in the grid
        let levels: Vec<Vec<f64>> = (0..=depth)
            .scan(atoms.clone(), |cur, d| {
                if d > 0 {
                    *cur = cur.iter().map(|v| v / alpha).collect();
                }
                Some(cur.clone())
            })
            .collect();
        let digits = |mut s: usize| {
            let mut out = vec![0usize; depth];
            for d in (0..depth).rev() {
                out[d] = s % k;
                s /= k;
            }
            out
        };
        let collocation: Vec<Vec<f64>> = (0..states)
            .map(|s| digits(s).iter().enumerate().map(|(d, &i)| levels[d][i]).collect())
            .collect();
        let mut entries = vec![0.0; states * k];
        let mut pre = Vec::with_capacity(depth + 1);
        for s in 0..states {
            let x = &collocation[s];
            for j in 0..k {
                pre.clear();
                pre.push(atoms[j]);
                pre.extend(x.iter().map(|v| v / alpha));
                let t = target(s, j, k, depth);
                if pre[..depth] != collocation[t][..] {
                    return Err(OracleError::ClosureViolation { state: s, atom: j });
                }
                entries[s * k + j] = probs[j] * a.eval(&pre).exp();
            }
        }
        Ok(FiniteInstance {
            alpha,
            atoms,
            probs,
            potential_rank,
            depth,
            collocation,
            entries,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn atoms(&self) -> (&[f64], &[f64]) {
        (&self.atoms, &self.probs)
    }

    pub fn potential_rank(&self) -> usize {
        self.potential_rank
    }

    /// Tuple length `R` of the states.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn states(&self) -> usize {
        self.collocation.len()
    }

    pub fn collocation(&self) -> &[Vec<f64>] {
        &self.collocation
    }

    /// Dense matrix, rows indexed by the state `x`, columns by `x′`.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let (n, k) = (self.states(), self.atoms.len());
        let mut out = vec![vec![0.0; n]; n];
        for (s, row) in out.iter_mut().enumerate() {
            for j in 0..k {
                row[target(s, j, k, self.depth)] += self.entries[s * k + j];
            }
        }
        out
    }

    /// `(Mφ)(s) = Σ_j M[s][pre_j(s)] φ(pre_j(s))`.
    pub fn apply(&self, phi: &[f64]) -> Vec<f64> {
        let k = self.atoms.len();
        (0..self.states())
            .map(|s| (0..k).map(|j| self.entries[s * k + j] * phi[target(s, j, k, self.depth)]).sum())
            .collect()
    }

    /// `(vᵀM)(t)`.
    pub fn apply_left(&self, v: &[f64]) -> Vec<f64> {
        let k = self.atoms.len();
        let mut out = vec![0.0; self.states()];
        for (s, &vs) in v.iter().enumerate() {
            for j in 0..k {
                out[target(s, j, k, self.depth)] += vs * self.entries[s * k + j];
            }
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let k = self.atoms.len();
        self.entries.chunks(k).map(|r| r.iter().sum()).collect()
    }

    /// Index of the collocation point nearest the origin in the sup norm.
    pub fn origin_state(&self) -> usize {
        let sup = |x: &[f64]| x.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
        (0..self.states())
            .min_by(|&a, &b| sup(&self.collocation[a]).total_cmp(&sup(&self.collocation[b])))
            .unwrap_or(0)
    }

    /// Perron pair by power iteration until the Collatz–Wielandt bracket is
    /// narrower than `tol` relative to `λ`.
    pub fn exact_eigen(&self, tol: f64) -> Result<ExactEigen, OracleError> {
        let n = self.states();
        let mut psi = vec![1.0; n];
        let max_iters = 1_000_000;
        for it in 1..=max_iters {
            let next = self.apply(&psi);
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for (a, b) in next.iter().zip(&psi) {
                let r = a / b;
                lo = lo.min(r);
                hi = hi.max(r);
            }
            let norm = next.iter().fold(0.0f64, |a, &v| a.max(v));
            psi = next.into_iter().map(|v| v / norm).collect();
            if hi - lo <= tol * hi {
                let o = psi[self.origin_state()];
                psi.iter_mut().for_each(|v| *v /= o);
                return Ok(ExactEigen {
                    lambda: 0.5 * (lo + hi),
                    psi,
                    bracket: (lo, hi),
                    iterations: it,
                });
            }
        }
        Err(OracleError::NoConvergence {
            tol,
            iterations: max_iters,
        })
    }

    /// Left Perron vector of a stochastic instance, as a probability vector.
    pub fn exact_stationary(&self, tol: f64) -> Result<Vec<f64>, OracleError> {
        for (row, sum) in self.row_sums().into_iter().enumerate() {
            if (sum - 1.0).abs() > 1e-10 {
                return Err(OracleError::NotStochastic { row, sum });
            }
        }
        let n = self.states();
        let mut v = vec![1.0 / n as f64; n];
        for _ in 0..1_000_000 {
            let mut next = self.apply_left(&v);
            let total: f64 = next.iter().sum();
            next.iter_mut().for_each(|x| *x /= total);
            let change = next.iter().zip(&v).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            v = next;
            if change <= tol {
                return Ok(v);
            }
        }
        Err(OracleError::NoConvergence {
            tol,
            iterations: 1_000_000,
        })
    }
}

fn target(s: usize, j: usize, k: usize, depth: usize) -> usize {
    let top = k.pow(depth as u32 - 1);
    j * top + s / k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::Potential;
    use crate::space::SpaceKind;
    use approx::assert_relative_eq;

    fn two_atoms() -> AprioriMeasure {
        AprioriMeasure::atoms(&[-1.0, 1.0], &[0.3, 0.7]).unwrap()
    }

    #[test]
    fn zero_potential_is_stochastic() {
        let w = WeightSequence::constant(2.0).unwrap();
        let inst = FiniteInstance::build(&w, &two_atoms(), &|_: &[f64]| 0.0, 3).unwrap();
        assert_eq!(inst.states(), 4);
        for row in inst.to_dense() {
            let mut nz: Vec<f64> = row.into_iter().filter(|v| *v > 0.0).collect();
            nz.sort_by(f64::total_cmp);
            assert_eq!(nz, vec![0.3, 0.7]);
        }
        let e = inst.exact_eigen(1e-13).unwrap();
        assert_relative_eq!(e.lambda, 1.0, epsilon = 1e-13);
        assert!(e.psi.iter().all(|v| (v - 1.0).abs() < 1e-12));
        // product of the atom marginals
        let v = inst.exact_stationary(1e-15).unwrap();
        let expect = [0.09, 0.21, 0.21, 0.49];
        for (a, b) in v.iter().zip(expect) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn rank_one_eigenvalue_is_a_sum() {
        let w = WeightSequence::constant(1.5).unwrap();
        let m = AprioriMeasure::atoms(&[0.0, 0.5, 2.0], &[0.2, 0.5, 0.3]).unwrap();
        let a = |x: &[f64]| (x[0] * 1.3).sin();
        let inst = FiniteInstance::build(&w, &m, &a, 1).unwrap();
        let expect = 0.2 * a(&[0.0]).exp() + 0.5 * a(&[0.5]).exp() + 0.3 * a(&[2.0]).exp();
        assert_relative_eq!(inst.exact_eigen(1e-14).unwrap().lambda, expect, max_relative = 1e-13);
    }

    #[test]
    fn golden_two_by_two() {
        // A(x) = x_1 x_2 with atoms ±1, probabilities 1/4 and 3/4, α = 2.
        // States x_1 ∈ {−1, 1}; the preimage by r is (r, x_1/2), so
        // M[x][r] = p_r e^{r x_1/2}.
        let w = WeightSequence::constant(2.0).unwrap();
        let m = AprioriMeasure::atoms(&[1.0, -1.0], &[0.75, 0.25]).unwrap();
        let inst = FiniteInstance::build(&w, &m, &|x: &[f64]| x[0] * x[1], 2).unwrap();
        let e = |t: f64| t.exp();
        let hand = [[0.25 * e(0.5), 0.75 * e(-0.5)], [0.25 * e(-0.5), 0.75 * e(0.5)]];
        let dense = inst.to_dense();
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(dense[i][j], hand[i][j], max_relative = 1e-15);
            }
        }
        // Perron root of a 2×2 matrix in closed form
        let (a, b, c, d) = (hand[0][0], hand[0][1], hand[1][0], hand[1][1]);
        let root = 0.5 * (a + d + ((a - d).powi(2) + 4.0 * b * c).sqrt());
        let ex = inst.exact_eigen(1e-14).unwrap();
        assert_relative_eq!(ex.lambda, root, max_relative = 1e-13);
        assert!(ex.bracket.0 <= root * (1.0 + 1e-14) && root <= ex.bracket.1 * (1.0 + 1e-14));
    }

    #[test]
    fn eigenvalue_scales_with_constant_shift() {
        let w = WeightSequence::constant(1.5).unwrap();
        let m = AprioriMeasure::atoms(&[-1.0, 0.2, 1.0], &[0.3, 0.3, 0.4]).unwrap();
        let a = |x: &[f64]| (x[0] - x[1]).tanh() + 0.3 * x[2];
        let shifted = |x: &[f64]| a(x) + 0.4;
        let l0 = FiniteInstance::build(&w, &m, &a, 3).unwrap().exact_eigen(1e-14).unwrap().lambda;
        let l1 = FiniteInstance::build(&w, &m, &shifted, 3).unwrap().exact_eigen(1e-14).unwrap().lambda;
        assert_relative_eq!(l1, 0.4f64.exp() * l0, max_relative = 1e-12);
    }

    #[test]
    fn two_state_stationary_law() {
        let w = WeightSequence::constant(2.0).unwrap();
        let m = two_atoms();
        // e^{A(r)} = q_r / p_r makes A normalized with law q
        let q = [0.6f64, 0.4];
        let p = [0.3f64, 0.7];
        let a = move |x: &[f64]| if x[0] < 0.0 { (q[0] / p[0]).ln() } else { (q[1] / p[1]).ln() };
        let inst = FiniteInstance::build(&w, &m, &a, 1).unwrap();
        assert!(inst.row_sums().iter().all(|s| (s - 1.0).abs() < 1e-12));
        let v = inst.exact_stationary(1e-15).unwrap();
        assert_relative_eq!(v[0], 0.6, epsilon = 1e-12);
        let back = inst.apply_left(&v);
        assert!(back.iter().zip(&v).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn errors() {
        let w = WeightSequence::periodic(&[2.0, 0.5]).unwrap();
        let z = |_: &[f64]| 0.0;
        assert!(matches!(
            FiniteInstance::build(&w, &two_atoms(), &z, 2),
            Err(OracleError::NonConstantWeights)
        ));
        let w = WeightSequence::constant(2.0).unwrap();
        assert!(matches!(
            FiniteInstance::build(&w, &AprioriMeasure::standard_gaussian(), &z, 2),
            Err(OracleError::NotAtomic)
        ));
        assert!(matches!(
            FiniteInstance::build(&w, &two_atoms(), &z, 30),
            Err(OracleError::TooManyStates { .. })
        ));
        let one = Potential::constant(1.0);
        let inst = FiniteInstance::build(&w, &two_atoms(), &one.on(SpaceKind::C0), 2).unwrap();
        assert!(matches!(inst.exact_stationary(1e-12), Err(OracleError::NotStochastic { .. })));
    }
}
