//! Weight sequences `(α_n)` of a weighted backward shift and the scalar
//! analytics derived from them.
//!
//! Every weight family that can be written down in a config is stored as a
//! finite prefix followed by a repeating cycle. That covers constant,
//! periodic, block and eventually periodic explicit weights, and for those
//! kinds infima over all `k` and limits in `n` are computed exactly from one
//! period. Explicit lists without a declared period, and arbitrary generator
//! closures, fall back to a finite horizon and are flagged as truncated.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::{Verdict, RATIO_MARGIN};

#[derive(Debug, Error, PartialEq)]
pub enum WeightError {
    #[error("weight α_{index} = {value} is outside ({c}, {c_prime})")]
    OutOfBounds {
        index: usize,
        value: f64,
        c: f64,
        c_prime: f64,
    },
    #[error("weight list is empty")]
    Empty,
    #[error("invalid weight parameter: {0}")]
    InvalidParameter(String),
}

/// Serializable description of a weight family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightKind {
    Constant {
        alpha: f64,
    },
    Periodic {
        values: Vec<f64>,
    },
    /// `values` are `α_1, α_2, …`. With `tail_period = Some(p)` the last `p`
    /// values repeat forever; without it the last value is held but the
    /// sequence is treated as only known up to the horizon.
    Explicit {
        values: Vec<f64>,
        #[serde(default)]
        tail_period: Option<usize>,
    },
    /// Alternating blocks: `low_len` weights equal to `a < 1`, then
    /// `high_len` weights equal to `b > 1`, repeated.
    BlockFamily {
        a: f64,
        b: f64,
        #[serde(alias = "e")]
        low_len: usize,
        #[serde(default = "one")]
        high_len: usize,
    },
}

fn one() -> usize {
    1
}

/// Config-level weight specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    #[serde(flatten)]
    pub kind: WeightKind,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub c_prime: Option<f64>,
    #[serde(default)]
    pub horizon: Option<usize>,
}

impl From<WeightKind> for WeightSpec {
    fn from(kind: WeightKind) -> Self {
        WeightSpec {
            kind,
            c: None,
            c_prime: None,
            horizon: None,
        }
    }
}

type Generator = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Source {
    Cyclic {
        prefix: Vec<f64>,
        cycle: Vec<f64>,
        /// `cum[i] = Σ_{j<i} ln(prefix ++ cycle)[j]`, length `P + C + 1`.
        cum: Vec<f64>,
        exact: bool,
    },
    Generator(Generator),
}

/// A validated weight sequence. Immutable and cheap to clone.
#[derive(Clone)]
pub struct WeightSequence {
    spec: Option<WeightSpec>,
    source: Source,
    c: f64,
    c_prime: f64,
    horizon: usize,
}

impl fmt::Debug for WeightSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeightSequence")
            .field("spec", &self.spec)
            .field("c", &self.c)
            .field("c_prime", &self.c_prime)
            .field("horizon", &self.horizon)
            .finish()
    }
}

pub const DEFAULT_HORIZON: usize = 1000;

impl WeightSequence {
    pub fn constant(alpha: f64) -> Result<Self, WeightError> {
        Self::from_spec(&WeightKind::Constant { alpha }.into())
    }

    pub fn periodic(values: &[f64]) -> Result<Self, WeightError> {
        Self::from_spec(
            &WeightKind::Periodic {
                values: values.to_vec(),
            }
            .into(),
        )
    }

    pub fn block_family(a: f64, b: f64, low_len: usize, high_len: usize) -> Result<Self, WeightError> {
        Self::from_spec(
            &WeightKind::BlockFamily {
                a,
                b,
                low_len,
                high_len,
            }
            .into(),
        )
    }

    pub fn from_spec(spec: &WeightSpec) -> Result<Self, WeightError> {
        let (prefix, cycle, exact) = match &spec.kind {
            WeightKind::Constant { alpha } => (vec![], vec![*alpha], true),
            WeightKind::Periodic { values } => (vec![], values.clone(), true),
            WeightKind::Explicit {
                values,
                tail_period,
            } => {
                if values.is_empty() {
                    return Err(WeightError::Empty);
                }
                match tail_period {
                    Some(0) => {
                        return Err(WeightError::InvalidParameter("tail_period must be ≥ 1".into()))
                    }
                    Some(p) if *p > values.len() => {
                        return Err(WeightError::InvalidParameter(format!(
                            "tail_period {p} exceeds list length {}",
                            values.len()
                        )))
                    }
                    Some(p) => {
                        let split = values.len() - p;
                        (values[..split].to_vec(), values[split..].to_vec(), true)
                    }
                    None => {
                        let split = values.len() - 1;
                        (values[..split].to_vec(), values[split..].to_vec(), false)
                    }
                }
            }
            WeightKind::BlockFamily {
                a,
                b,
                low_len,
                high_len,
            } => {
                if !(*a < 1.0 && *b > 1.0) {
                    return Err(WeightError::InvalidParameter(format!(
                        "block family needs a < 1 < b, got a = {a}, b = {b}"
                    )));
                }
                if *low_len == 0 || *high_len == 0 {
                    return Err(WeightError::InvalidParameter("block lengths must be ≥ 1".into()));
                }
                let mut cycle = vec![*a; *low_len];
                cycle.extend(std::iter::repeat_n(*b, *high_len));
                (vec![], cycle, true)
            }
        };
        if cycle.is_empty() {
            return Err(WeightError::Empty);
        }
        let all: Vec<f64> = prefix.iter().chain(cycle.iter()).copied().collect();
        let (lo, hi) = all
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        let c = spec.c.unwrap_or(lo / 2.0);
        let c_prime = spec.c_prime.unwrap_or(hi * 2.0);
        if !(c > 0.0 && c < c_prime) {
            return Err(WeightError::InvalidParameter(format!(
                "bounds must satisfy 0 < c < c', got c = {c}, c' = {c_prime}"
            )));
        }
        for (i, &v) in all.iter().enumerate() {
            if !(v.is_finite() && c < v && v < c_prime) {
                return Err(WeightError::OutOfBounds {
                    index: i + 1,
                    value: v,
                    c,
                    c_prime,
                });
            }
        }
        let mut cum = Vec::with_capacity(all.len() + 1);
        cum.push(0.0);
        for v in &all {
            cum.push(cum.last().unwrap() + v.ln());
        }
        Ok(WeightSequence {
            spec: Some(spec.clone()),
            source: Source::Cyclic {
                prefix,
                cycle,
                cum,
                exact,
            },
            c,
            c_prime,
            horizon: spec.horizon.unwrap_or(DEFAULT_HORIZON),
        })
    }

    /// Weights from an arbitrary generator `n ↦ α_n` (1-based).
    ///
    /// Values are validated lazily against `(c, c')` only up to the horizon;
    /// all analytics are horizon-truncated.
    pub fn from_fn<F>(f: F, c: f64, c_prime: f64, horizon: usize) -> Result<Self, WeightError>
    where
        F: Fn(usize) -> f64 + Send + Sync + 'static,
    {
        if !(c > 0.0 && c < c_prime) {
            return Err(WeightError::InvalidParameter("need 0 < c < c'".into()));
        }
        for n in 1..=horizon.max(1) * 2 {
            let v = f(n);
            if !(v.is_finite() && c < v && v < c_prime) {
                return Err(WeightError::OutOfBounds {
                    index: n,
                    value: v,
                    c,
                    c_prime,
                });
            }
        }
        Ok(WeightSequence {
            spec: None,
            source: Source::Generator(Arc::new(f)),
            c,
            c_prime,
            horizon,
        })
    }

    pub fn spec(&self) -> Option<&WeightSpec> {
        self.spec.as_ref()
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.c, self.c_prime)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    /// True when infima over `k` and limits in `n` are computed exactly.
    pub fn is_exact(&self) -> bool {
        matches!(self.source, Source::Cyclic { exact: true, .. })
    }

    /// The constant weight, if the sequence is constant.
    pub fn constant_value(&self) -> Option<f64> {
        match &self.source {
            Source::Cyclic { prefix, cycle, .. } if prefix.is_empty() && cycle.len() == 1 => Some(cycle[0]),
            _ => None,
        }
    }

    /// Map `k` to the smallest index with the same forward weights.
    fn reduce(&self, k: usize) -> usize {
        match &self.source {
            Source::Cyclic { prefix, cycle, .. } => {
                let p = prefix.len();
                if k <= p {
                    k
                } else {
                    p + (k - p - 1) % cycle.len() + 1
                }
            }
            Source::Generator(_) => k,
        }
    }

    /// `α_n`, 1-based.
    pub fn alpha(&self, n: usize) -> f64 {
        assert!(n >= 1, "weights are indexed from 1");
        match &self.source {
            Source::Cyclic { prefix, cycle, .. } => {
                let k = self.reduce(n);
                if k <= prefix.len() {
                    prefix[k - 1]
                } else {
                    cycle[k - prefix.len() - 1]
                }
            }
            Source::Generator(f) => f(n),
        }
    }

    /// `ln β_k^n = ln(α_k ⋯ α_{k+n-1})`.
    pub fn log_beta(&self, k: usize, n: usize) -> f64 {
        assert!(k >= 1 && n >= 1, "β_k^n needs k, n ≥ 1");
        match &self.source {
            Source::Cyclic { prefix, cycle, cum, .. } => {
                let k = self.reduce(k);
                let p = prefix.len();
                let c = cycle.len();
                let total = cum[p + c] - cum[p];
                // S(m) = Σ_{j ≤ m} ln α_j
                let s = |m: usize| -> f64 {
                    if m <= p + c {
                        cum[m]
                    } else {
                        let q = (m - p) / c;
                        let r = (m - p) % c;
                        cum[p + r] + q as f64 * total
                    }
                };
                s(k + n - 1) - s(k - 1)
            }
            Source::Generator(f) => (k..k + n).map(|j| f(j).ln()).sum(),
        }
    }

    pub fn beta(&self, k: usize, n: usize) -> f64 {
        self.log_beta(k, n).exp()
    }

    /// Indices `k` over which an infimum or supremum is taken.
    fn k_range(&self) -> std::ops::RangeInclusive<usize> {
        match &self.source {
            Source::Cyclic {
                prefix,
                cycle,
                exact: true,
                ..
            } => 1..=prefix.len() + cycle.len(),
            _ => 1..=self.horizon.max(1),
        }
    }

    /// `ln d_n` with `d_n = inf_k β_k^n`.
    pub fn log_d(&self, n: usize) -> f64 {
        self.k_range()
            .map(|k| self.log_beta(k, n))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn d(&self, n: usize) -> f64 {
        self.log_d(n).exp()
    }

    /// `ln sup_k β_k^n`.
    pub fn log_sup_beta(&self, n: usize) -> f64 {
        self.k_range()
            .map(|k| self.log_beta(k, n))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Mean of `ln α` over one period, for exact kinds.
    fn log_growth(&self) -> Option<f64> {
        match &self.source {
            Source::Cyclic {
                prefix,
                cycle,
                cum,
                exact: true,
            } => {
                let p = prefix.len();
                Some((cum[p + cycle.len()] - cum[p]) / cycle.len() as f64)
            }
            _ => None,
        }
    }

    /// Estimate of `lim (d_n)^{-1/n}`; exact for periodic kinds.
    pub fn root_limit(&self, horizon: usize) -> f64 {
        match self.log_growth() {
            Some(g) => (-g).exp(),
            None => (-self.log_d(horizon) / horizon as f64).exp(),
        }
    }

    /// Spectral radius `r(L) = lim (sup_k β_k^n)^{1/n}`; exact for periodic kinds.
    pub fn spectral_radius(&self, horizon: usize) -> f64 {
        match self.log_growth() {
            Some(g) => g.exp(),
            None => (self.log_sup_beta(horizon) / horizon as f64).exp(),
        }
    }

    /// `Σ_n (d_n)^{-α}` up to `horizon`, with a geometric tail bound when the
    /// root limit is safely below one.
    pub fn summability(&self, alpha: f64, horizon: usize) -> Summability {
        assert!(alpha > 0.0 && alpha <= 1.0, "Hölder exponent must be in (0, 1]");
        let horizon = horizon.max(1);
        let partial: f64 = (1..=horizon).map(|n| (-alpha * self.log_d(n)).exp()).sum();
        let rho = self.root_limit(horizon);
        let exact = self.log_growth().is_some();
        let verdict = if exact {
            Verdict::from_bool(rho < 1.0 - 1e-12)
        } else if rho < RATIO_MARGIN {
            Verdict::Holds
        } else if rho > 1.0 / RATIO_MARGIN {
            Verdict::Fails
        } else {
            Verdict::Inconclusive
        };
        let tail_bound = (verdict == Verdict::Holds).then(|| {
            let ra = rho.powf(alpha);
            (-alpha * self.log_d(horizon)).exp() * ra / (1.0 - ra)
        });
        Summability {
            partial_sum: partial,
            tail_bound,
            verdict,
        }
    }

    /// `Σ_{i≥1} d_i^{-α}`, as partial sum plus tail bound. `None` if the
    /// series is not known to converge.
    pub fn d_series(&self, alpha: f64, horizon: usize) -> Option<f64> {
        let s = self.summability(alpha, horizon);
        s.tail_bound.map(|t| s.partial_sum + t)
    }

    /// Dynamics classification from the growth of `β_1^n`.
    ///
    /// `p = None` means `c0`. In `c0` the summability criteria for frequent
    /// hypercyclicity and chaos are not the characterizing ones, so those
    /// flags are only decided when transitivity already fails.
    pub fn classify(&self, p: Option<f64>, horizon: usize) -> ClassifierFlags {
        let horizon = horizon.max(2);
        let growth = match self.log_growth() {
            Some(g) if g > 1e-12 => Verdict::Holds,
            Some(_) => Verdict::Fails,
            None => {
                let rate = (self.log_beta(1, horizon) / horizon as f64).exp();
                if rate > 1.0 / RATIO_MARGIN {
                    Verdict::Holds
                } else if rate < RATIO_MARGIN {
                    Verdict::Fails
                } else {
                    Verdict::Inconclusive
                }
            }
        };
        let summable = match p {
            Some(_) => growth,
            None if growth == Verdict::Fails => Verdict::Fails,
            None => Verdict::Inconclusive,
        };
        ClassifierFlags {
            transitive: growth,
            mixing: growth,
            freq_hypercyclic: summable,
            chaotic: summable,
            pos_expansive: growth,
        }
    }

    /// The three equivalent conditions on the growth of the weights:
    /// `lim (d_n)^{-1/n} < 1`, `Σ (d_n)^{-1} < ∞`, `sup_k Σ_n (β_k^n)^{-1} < ∞`.
    ///
    /// Each verdict is derived from its own data, so agreement is a real check.
    pub fn rgh_indicators(&self, horizon: usize) -> RghIndicators {
        let horizon = horizon.max(4);
        let i_root = self.root_limit(horizon);
        let root_verdict = if self.is_exact() {
            Verdict::from_bool(i_root < 1.0 - 1e-12)
        } else {
            margin_verdict(i_root)
        };

        let d_terms: Vec<f64> = (1..=horizon).map(|n| -self.log_d(n)).collect();
        let i_sum: f64 = d_terms.iter().map(|t| t.exp()).sum();
        let sum_verdict = series_verdict(&d_terms);

        let mut i_sup_sum = 0.0;
        let mut sup_verdict = Verdict::Holds;
        for k in self.k_range() {
            let terms: Vec<f64> = (1..=horizon).map(|n| -self.log_beta(k, n)).collect();
            let s: f64 = terms.iter().map(|t| t.exp()).sum();
            i_sup_sum = f64::max(i_sup_sum, s);
            sup_verdict = match (sup_verdict, series_verdict(&terms)) {
                (Verdict::Fails, _) | (_, Verdict::Fails) => Verdict::Fails,
                (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => Verdict::Inconclusive,
                _ => Verdict::Holds,
            };
        }
        RghIndicators {
            i_root,
            i_sum,
            i_sup_sum,
            verdicts: [root_verdict, sum_verdict, sup_verdict],
            consistent: root_verdict == sum_verdict && sum_verdict == sup_verdict,
        }
    }

    pub fn report(&self, alpha: f64, p: Option<f64>, horizon: usize) -> WeightReport {
        let s = self.summability(alpha, horizon);
        WeightReport {
            d_values: (1..=horizon).map(|n| self.d(n)).collect(),
            d_sum_alpha: s.partial_sum,
            d_sum_tail_bound: s.tail_bound,
            root_limit: self.root_limit(horizon),
            spectral_radius: self.spectral_radius(horizon),
            flags: self.classify(p, horizon),
            rgh: self.rgh_indicators(horizon),
            horizon_truncated: !self.is_exact(),
        }
    }
}

fn margin_verdict(rho: f64) -> Verdict {
    if rho < RATIO_MARGIN {
        Verdict::Holds
    } else if rho > 1.0 / RATIO_MARGIN {
        Verdict::Fails
    } else {
        Verdict::Inconclusive
    }
}

/// Convergence verdict for `Σ exp(log_terms[n])` from the decay of windowed
/// maxima between the second and the last quarter of the horizon. Windowed
/// maxima make the estimate immune to periodic oscillation of the terms.
fn series_verdict(log_terms: &[f64]) -> Verdict {
    let n = log_terms.len();
    let window_max = |r: std::ops::Range<usize>| log_terms[r].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let early = window_max(n / 4..n / 2);
    let late = window_max(3 * n / 4..n);
    let rate = ((late - early) / (n / 2) as f64).exp();
    if rate < RATIO_MARGIN {
        Verdict::Holds
    } else if late >= early - 1e-12 {
        // terms do not decay: the series cannot converge
        Verdict::Fails
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summability {
    pub partial_sum: f64,
    pub tail_bound: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierFlags {
    pub transitive: Verdict,
    pub mixing: Verdict,
    pub freq_hypercyclic: Verdict,
    pub chaotic: Verdict,
    pub pos_expansive: Verdict,
}

impl ClassifierFlags {
    pub fn all(&self) -> [Verdict; 5] {
        [
            self.transitive,
            self.mixing,
            self.freq_hypercyclic,
            self.chaotic,
            self.pos_expansive,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RghIndicators {
    pub i_root: f64,
    pub i_sum: f64,
    pub i_sup_sum: f64,
    /// Verdicts for root, sum and sup-sum, in that order.
    pub verdicts: [Verdict; 3],
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightReport {
    pub d_values: Vec<f64>,
    pub d_sum_alpha: f64,
    pub d_sum_tail_bound: Option<f64>,
    pub root_limit: f64,
    pub spectral_radius: f64,
    pub flags: ClassifierFlags,
    pub rgh: RghIndicators,
    pub horizon_truncated: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn beta_examples() {
        let w = WeightSequence::constant(2.0).unwrap();
        assert_relative_eq!(w.beta(1, 5), 32.0, max_relative = 1e-14);
        let p = WeightSequence::periodic(&[2.0, 0.5]).unwrap();
        assert_relative_eq!(p.beta(1, 4), 1.0, max_relative = 1e-14);
        assert_eq!(p.beta(3, 1), p.alpha(3));
        assert_eq!(p.alpha(3), 2.0);
    }

    #[test]
    fn d_examples() {
        let w = WeightSequence::constant(2.0).unwrap();
        assert_relative_eq!(w.d(3), 8.0, max_relative = 1e-14);
        let p = WeightSequence::periodic(&[2.0, 0.5]).unwrap();
        assert_relative_eq!(p.d(1), 0.5, max_relative = 1e-14);
        // brute force over a long window
        let brute = (1..200).map(|k| p.alpha(k) * p.alpha(k + 1)).fold(f64::INFINITY, f64::min);
        assert_relative_eq!(p.d(2), brute, max_relative = 1e-14);
        assert_relative_eq!(p.d(2), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn summability_examples() {
        let w = WeightSequence::constant(2.0).unwrap();
        let s = w.summability(1.0, 60);
        assert_relative_eq!(s.partial_sum + s.tail_bound.unwrap(), 1.0, max_relative = 1e-14);
        let s = w.summability(0.5, 80);
        assert_eq!(s.verdict, Verdict::Holds);
        assert_relative_eq!(
            s.partial_sum + s.tail_bound.unwrap(),
            1.0 / (2f64.sqrt() - 1.0),
            max_relative = 1e-12
        );
        let h = WeightSequence::constant(0.5).unwrap();
        assert_eq!(h.summability(1.0, 50).verdict, Verdict::Fails);
    }

    #[test]
    fn classify_examples() {
        let w = WeightSequence::constant(2.0).unwrap();
        assert!(w.classify(Some(2.0), 100).all().iter().all(|v| *v == Verdict::Holds));
        let h = WeightSequence::constant(0.5).unwrap();
        assert!(h.classify(Some(2.0), 100).all().iter().all(|v| *v == Verdict::Fails));
        let p = WeightSequence::periodic(&[2.0, 0.5]).unwrap();
        let betas: Vec<f64> = (1..50).map(|n| p.beta(1, n)).collect();
        assert!(betas.iter().all(|b| (b - 1.0).abs() < 1e-12 || (b - 2.0).abs() < 1e-12));
        assert_eq!(p.classify(Some(1.0), 100).transitive, Verdict::Fails);
        // c0: summability flags only resolved negatively
        let c0 = w.classify(None, 100);
        assert_eq!(c0.transitive, Verdict::Holds);
        assert_eq!(c0.freq_hypercyclic, Verdict::Inconclusive);
    }

    #[test]
    fn rgh_examples() {
        let w = WeightSequence::constant(2.0).unwrap();
        let r = w.rgh_indicators(60);
        assert_relative_eq!(r.i_root, 0.5, max_relative = 1e-14);
        assert_relative_eq!(r.i_sum, 1.0, max_relative = 1e-12);
        assert_relative_eq!(r.i_sup_sum, 1.0, max_relative = 1e-12);
        assert!(r.consistent && r.verdicts[0] == Verdict::Holds);

        let h = WeightSequence::constant(0.5).unwrap();
        let r = h.rgh_indicators(60);
        assert_relative_eq!(r.i_root, 2.0, max_relative = 1e-14);
        assert!(r.consistent && r.verdicts[0] == Verdict::Fails);

        let b = WeightSequence::block_family(0.8, 2.0, 2, 1).unwrap();
        let r = b.rgh_indicators(300);
        assert!(r.consistent && r.verdicts[0] == Verdict::Holds);
    }

    #[test]
    fn block_family_lower_bound() {
        // β_k^n ≥ (a^e b)^{⌊n/(e+1)⌋} a^e
        let (a, b, e) = (0.8, 2.0, 2usize);
        let w = WeightSequence::block_family(a, b, e, 1).unwrap();
        for n in 1..40 {
            let bound = (a.powi(e as i32) * b).powi((n / (e + 1)) as i32) * a.powi(e as i32);
            for k in 1..10 {
                assert!(w.beta(k, n) >= bound * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn spectral_radius_examples() {
        assert_relative_eq!(WeightSequence::constant(2.0).unwrap().spectral_radius(50), 2.0);
        assert_relative_eq!(
            WeightSequence::periodic(&[2.0, 0.5]).unwrap().spectral_radius(50),
            1.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(WeightSequence::constant(1.3).unwrap().spectral_radius(50), 1.3);
        // finite-horizon formula approaches the exact value
        let p = WeightSequence::periodic(&[2.0, 0.5]).unwrap();
        assert_relative_eq!(p.log_sup_beta(401).exp(), 2.0, max_relative = 1e-12);
        assert_relative_eq!(p.log_sup_beta(400).exp(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn bounds_are_enforced() {
        let spec = WeightSpec {
            kind: WeightKind::Constant { alpha: 2.0 },
            c: Some(1.0),
            c_prime: Some(2.0),
            horizon: None,
        };
        assert!(matches!(
            WeightSequence::from_spec(&spec),
            Err(WeightError::OutOfBounds { index: 1, .. })
        ));
    }

    #[test]
    fn explicit_with_period_matches_periodic_tail() {
        let spec: WeightSpec =
            serde_json::from_str(r#"{"kind":"explicit","values":[0.5,3.0,2.0,1.5],"tail_period":2}"#).unwrap();
        let w = WeightSequence::from_spec(&spec).unwrap();
        assert!(w.is_exact());
        assert_eq!(w.alpha(7), 2.0);
        assert_eq!(w.alpha(8), 1.5);
        let brute = (1..100).map(|k| w.beta(k, 3)).fold(f64::INFINITY, f64::min);
        assert_relative_eq!(w.d(3), brute, max_relative = 1e-14);

        let spec: WeightSpec = serde_json::from_str(r#"{"kind":"explicit","values":[2.0,3.0]}"#).unwrap();
        let w = WeightSequence::from_spec(&spec).unwrap();
        assert!(!w.is_exact());
    }

    #[test]
    fn generator_weights_truncate() {
        let w = WeightSequence::from_fn(|n| 1.0 + 1.0 / n as f64, 0.5, 3.0, 200).unwrap();
        assert!(!w.is_exact());
        assert_relative_eq!(w.beta(1, 4), 5.0, max_relative = 1e-12);
    }

    fn arb_weights() -> impl Strategy<Value = WeightSequence> {
        prop_oneof![
            (0.3f64..3.0).prop_map(|a| WeightSequence::constant(a).unwrap()),
            prop::collection::vec(0.3f64..3.0, 1..5).prop_map(|v| WeightSequence::periodic(&v).unwrap()),
            (0.3f64..0.95, 1.05f64..3.0, 1usize..4, 1usize..3)
                .prop_map(|(a, b, e, h)| WeightSequence::block_family(a, b, e, h).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn beta_cocycle(w in arb_weights(), k in 1usize..50, n in 1usize..30, m in 1usize..30) {
            let lhs = w.log_beta(k, n + m);
            let rhs = w.log_beta(k, n) + w.log_beta(k + n, m);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn d_supermultiplicative(w in arb_weights(), n in 1usize..30, m in 1usize..30) {
            prop_assert!(w.log_d(n + m) >= w.log_d(n) + w.log_d(m) - 1e-12);
        }

        #[test]
        fn d_is_true_infimum(w in arb_weights(), n in 1usize..20) {
            let brute = (1..300).map(|k| w.log_beta(k, n)).fold(f64::INFINITY, f64::min);
            prop_assert!((w.log_d(n) - brute).abs() < 1e-12);
        }

        #[test]
        fn mixing_implies_transitive(w in arb_weights(), p in prop::option::of(1.0f64..4.0)) {
            let f = w.classify(p, 100);
            if f.mixing == Verdict::Holds {
                prop_assert_eq!(f.transitive, Verdict::Holds);
            }
        }

        #[test]
        fn rgh_consistent_on_closed_forms(w in arb_weights()) {
            // avoid near-critical growth, where finite horizons cannot decide
            let g = w.spectral_radius(10).ln();
            prop_assume!(g.abs() > 0.02 || g == 0.0 || w.constant_value().is_some());
            prop_assert!(w.rgh_indicators(400).consistent);
        }
    }
}
