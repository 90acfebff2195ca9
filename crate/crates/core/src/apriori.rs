//! The a-priori probability `m` on the kernel of the shift, identified with
//! `ℝ`: tails, quadrature rules, sampling and the adapted-tails checks.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Normal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT as StudentsTCdf};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::space::SpaceKind;
use crate::util::{Verdict, RATIO_MARGIN};
use crate::weights::WeightSequence;

#[derive(Debug, Error, PartialEq)]
pub enum AprioriError {
    #[error("invalid a-priori parameters: {0}")]
    InvalidParameter(String),
    #[error("no Gauss rule of order {order} exists for this measure; the largest usable order is {max_order}")]
    UnsupportedKind { order: usize, max_order: usize },
    #[error("the measure declares no tail class")]
    MissingTailClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AprioriKind {
    Gaussian {
        #[serde(default)]
        mean: f64,
        #[serde(default = "unit")]
        variance: f64,
    },
    /// Centered Student-t; `dof` is also the polynomial tail order.
    StudentT {
        #[serde(alias = "gamma")]
        dof: f64,
        #[serde(default = "unit")]
        scale: f64,
    },
    Atoms { values: Vec<f64>, probs: Vec<f64> },
}

fn unit() -> f64 {
    1.0
}

fn default_order() -> usize {
    40
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriSpec {
    #[serde(flatten)]
    pub kind: AprioriKind,
    #[serde(default = "default_order")]
    pub quadrature_order: usize,
}

/// Nodes and probability weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Polynomials up to this degree are integrated exactly, if known.
    pub degree: Option<usize>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailClass {
    /// `m(|x| > z) ≤ C γ^z` for some `γ < 1`.
    Exponential,
    /// `m(|x| > z) ≤ C z^{-γ}`.
    Polynomial { gamma: f64 },
}

/// Growth profile of `d_n`, for the fast sufficient conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DGrowth {
    /// `d_n ≥ C ρ^n` with `ρ > 1`.
    Exponential { rate: f64 },
    /// `d_n ≈ C n^ℓ`.
    Polynomial { exponent: f64 },
}

/// How the total tail budget `ε` is spread over `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BudgetSchedule {
    /// `ε 2^{-(n+1)}`
    Geometric,
    /// `ε n^{-s} / (2 (1 + 1/(s − 1)))`, using `ζ(s) ≤ 1 + 1/(s − 1)`.
    Polynomial { s: f64 },
}

impl BudgetSchedule {
    pub fn budget(self, epsilon: f64, n: usize) -> f64 {
        match self {
            BudgetSchedule::Geometric => epsilon * 0.5f64.powi(n as i32 + 1),
            BudgetSchedule::Polynomial { s } => epsilon * (n as f64).powf(-s) / (2.0 * (1.0 + 1.0 / (s - 1.0))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub epsilon: f64,
    pub schedule: BudgetSchedule,
    pub kappa: Vec<f64>,
    pub tail_sum: f64,
    pub tail_sum_below_epsilon: bool,
    pub kappa_in_x: Verdict,
    /// `Holds` when both conditions pass. A failure of this particular
    /// construction does not show that the tails are not adapted, so the
    /// verdict is then `Inconclusive` rather than `Fails`.
    pub verdict: Verdict,
}

#[derive(Debug, Clone)]
pub struct AprioriMeasure {
    kind: AprioriKind,
    quadrature_order: usize,
    rule: QuadratureRule,
}

impl AprioriMeasure {
    pub fn gaussian(mean: f64, variance: f64) -> Result<Self, AprioriError> {
        Self::new(AprioriKind::Gaussian { mean, variance }, default_order())
    }

    pub fn standard_gaussian() -> Self {
        Self::gaussian(0.0, 1.0).expect("valid parameters")
    }

    pub fn student_t(dof: f64) -> Result<Self, AprioriError> {
        Self::new(AprioriKind::StudentT { dof, scale: 1.0 }, default_order())
    }

    pub fn atoms(values: &[f64], probs: &[f64]) -> Result<Self, AprioriError> {
        Self::new(
            AprioriKind::Atoms {
                values: values.to_vec(),
                probs: probs.to_vec(),
            },
            values.len(),
        )
    }

    pub fn from_spec(spec: &AprioriSpec) -> Result<Self, AprioriError> {
        Self::new(spec.kind.clone(), spec.quadrature_order)
    }

    pub fn new(kind: AprioriKind, quadrature_order: usize) -> Result<Self, AprioriError> {
        if quadrature_order == 0 {
            return Err(AprioriError::InvalidParameter("quadrature_order must be ≥ 1".into()));
        }
        match &kind {
            AprioriKind::Gaussian { mean, variance } => {
                if !(mean.is_finite() && *variance > 0.0 && variance.is_finite()) {
                    return Err(AprioriError::InvalidParameter(format!(
                        "gaussian needs finite mean and variance > 0, got {mean}, {variance}"
                    )));
                }
            }
            AprioriKind::StudentT { dof, scale } => {
                if !(*dof > 0.0 && *scale > 0.0) {
                    return Err(AprioriError::InvalidParameter(format!(
                        "student_t needs dof > 0 and scale > 0, got {dof}, {scale}"
                    )));
                }
            }
            AprioriKind::Atoms { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return Err(AprioriError::InvalidParameter(
                        "atoms need equally many values and probabilities".into(),
                    ));
                }
                if probs.iter().any(|p| !(*p >= 0.0)) || values.iter().any(|v| !v.is_finite()) {
                    return Err(AprioriError::InvalidParameter("atom data must be finite, probs ≥ 0".into()));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(AprioriError::InvalidParameter(format!("atom probs sum to {total}, not 1")));
                }
            }
        }
        let mut m = AprioriMeasure {
            kind,
            quadrature_order,
            rule: QuadratureRule {
                nodes: vec![],
                weights: vec![],
                degree: None,
            },
        };
        m.rule = m.build_integration_rule();
        Ok(m)
    }

    pub fn kind(&self) -> &AprioriKind {
        &self.kind
    }

    pub fn quadrature_order(&self) -> usize {
        self.quadrature_order
    }

    /// Whether `supp m = ℝ`.
    pub fn full_support(&self) -> bool {
        !matches!(self.kind, AprioriKind::Atoms { .. })
    }

    /// `m(|x| > z)`.
    pub fn tail(&self, z: f64) -> f64 {
        let z = z.max(0.0);
        match &self.kind {
            AprioriKind::Gaussian { mean, variance } => {
                let s = (2.0 * variance).sqrt();
                0.5 * erfc((z - mean) / s) + 0.5 * erfc((z + mean) / s)
            }
            AprioriKind::StudentT { dof, scale } => {
                let t = StudentsTCdf::new(0.0, *scale, *dof).expect("validated");
                (2.0 * t.sf(z)).min(1.0)
            }
            AprioriKind::Atoms { values, probs } => values
                .iter()
                .zip(probs)
                .filter(|(v, _)| v.abs() > z)
                .map(|(_, p)| p)
                .sum(),
        }
    }

    /// `m([lo, hi])`.
    pub fn interval_mass(&self, lo: f64, hi: f64) -> f64 {
        if hi < lo {
            return 0.0;
        }
        match &self.kind {
            AprioriKind::Gaussian { mean, variance } => {
                let s = (2.0 * variance).sqrt();
                // Φ(hi) − Φ(lo) via erfc, symmetric for accuracy in the tails
                0.5 * (erfc((lo - mean) / s) - erfc((hi - mean) / s))
            }
            AprioriKind::StudentT { dof, scale } => {
                let t = StudentsTCdf::new(0.0, *scale, *dof).expect("validated");
                t.cdf(hi) - t.cdf(lo)
            }
            AprioriKind::Atoms { values, probs } => values
                .iter()
                .zip(probs)
                .filter(|(v, _)| **v >= lo && **v <= hi)
                .map(|(_, p)| p)
                .sum(),
        }
    }

    /// Smallest `z ≥ 0` with `m(|x| > z) ≤ q`.
    pub fn tail_quantile(&self, q: f64) -> f64 {
        if let AprioriKind::Atoms { values, .. } = &self.kind {
            let mut cands: Vec<f64> = values.iter().map(|v| v.abs()).collect();
            cands.push(0.0);
            cands.sort_by(f64::total_cmp);
            return cands.into_iter().find(|&z| self.tail(z) <= q).unwrap_or(0.0);
        }
        if self.tail(0.0) <= q {
            return 0.0;
        }
        let mut hi = 1.0;
        while self.tail(hi) > q {
            hi *= 2.0;
            if !hi.is_finite() {
                return f64::INFINITY;
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= 1e-15 * hi {
                break;
            }
            if self.tail(mid) > q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// Gauss rule of the declared order, exact for polynomials up to
    /// degree `2·order − 1`. Atomic measures return themselves.
    pub fn quadrature(&self) -> Result<QuadratureRule, AprioriError> {
        let n = self.quadrature_order;
        match &self.kind {
            AprioriKind::Gaussian { mean, variance } => {
                let (x, w) = gauss_hermite_prob(n);
                let s = variance.sqrt();
                Ok(QuadratureRule {
                    nodes: x.iter().map(|x| mean + s * x).collect(),
                    weights: w,
                    degree: Some(2 * n - 1),
                })
            }
            AprioriKind::StudentT { dof, scale } => {
                // moments up to degree 2n must exist
                let max_order = ((dof / 2.0).ceil() as usize).saturating_sub(1);
                if n > max_order {
                    return Err(AprioriError::UnsupportedKind { order: n, max_order });
                }
                let moments: Vec<f64> = (0..=2 * n).map(|k| student_moment(*dof, k) * scale.powi(k as i32)).collect();
                let (x, w) = gauss_from_moments(&moments, n);
                Ok(QuadratureRule {
                    nodes: x,
                    weights: w,
                    degree: Some(2 * n - 1),
                })
            }
            AprioriKind::Atoms { values, probs } => Ok(QuadratureRule {
                nodes: values.clone(),
                weights: probs.clone(),
                degree: None,
            }),
        }
    }

    /// The rule the solvers integrate with. Same as [`quadrature`] where
    /// that exists; heavy-tailed measures use a Gauss–Legendre rule in the
    /// quantile variable, `∫ f dm = ∫_0^1 f(F^{-1}(u)) du`.
    ///
    /// [`quadrature`]: AprioriMeasure::quadrature
    pub fn integration_rule(&self) -> &QuadratureRule {
        &self.rule
    }

    fn build_integration_rule(&self) -> QuadratureRule {
        match (&self.kind, self.quadrature()) {
            (_, Ok(rule)) => rule,
            (AprioriKind::StudentT { dof, scale }, Err(_)) => {
                let t = StudentsTCdf::new(0.0, *scale, *dof).expect("validated");
                let (u, w) = gauss_legendre_unit(self.quadrature_order);
                QuadratureRule {
                    nodes: u.iter().map(|&u| t.inverse_cdf(u)).collect(),
                    weights: w,
                    degree: None,
                }
            }
            (_, Err(e)) => unreachable!("only student_t can lack a Gauss rule: {e}"),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            AprioriKind::Gaussian { mean, variance } => Normal::new(*mean, variance.sqrt()).expect("validated").sample(rng),
            AprioriKind::StudentT { dof, scale } => scale * StudentT::new(*dof).expect("validated").sample(rng),
            AprioriKind::Atoms { values, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().expect("non-empty")
            }
        }
    }

    pub fn tail_class(&self) -> Result<TailClass, AprioriError> {
        match &self.kind {
            AprioriKind::Gaussian { .. } | AprioriKind::Atoms { .. } => Ok(TailClass::Exponential),
            AprioriKind::StudentT { dof, .. } if *dof > 1.0 => Ok(TailClass::Polynomial { gamma: *dof }),
            AprioriKind::StudentT { .. } => Err(AprioriError::MissingTailClass),
        }
    }

    /// Builds `κ_n = q(ε_n) / β_1^n`, where `q` is the tail quantile and
    /// `Σ ε_n ≤ ε/2`, and checks both conditions of the adapted-tails
    /// definition up to `horizon`.
    ///
    /// Two budget schedules are tried: geometric `ε_n = ε 2^{-(n+1)}` and
    /// polynomial `ε_n ∝ n^{-1.1}`. The geometric one gives the smallest
    /// quantiles early on; the polynomial one is what heavy tails need.
    /// The first schedule that passes is reported, otherwise the geometric.
    pub fn adapted_tails_check(&self, w: &WeightSequence, space: SpaceKind, epsilon: f64, horizon: usize) -> TailReport {
        self.adapted_tails_with(|n| w.log_beta(1, n), space, epsilon, horizon)
    }

    /// As [`adapted_tails_check`] with `ln β_1^n` supplied directly.
    ///
    /// [`adapted_tails_check`]: AprioriMeasure::adapted_tails_check
    pub fn adapted_tails_with<F: Fn(usize) -> f64>(
        &self,
        log_beta1: F,
        space: SpaceKind,
        epsilon: f64,
        horizon: usize,
    ) -> TailReport {
        assert!(epsilon > 0.0, "ε must be positive");
        let geometric = self.tails_with_budget(&log_beta1, space, epsilon, horizon, BudgetSchedule::Geometric);
        if geometric.verdict == Verdict::Holds {
            return geometric;
        }
        let poly = self.tails_with_budget(&log_beta1, space, epsilon, horizon, BudgetSchedule::Polynomial { s: 1.1 });
        if poly.verdict == Verdict::Holds {
            poly
        } else {
            geometric
        }
    }

    fn tails_with_budget<F: Fn(usize) -> f64>(
        &self,
        log_beta1: &F,
        space: SpaceKind,
        epsilon: f64,
        horizon: usize,
        schedule: BudgetSchedule,
    ) -> TailReport {
        let horizon = horizon.max(8);
        let mut kappa = Vec::with_capacity(horizon);
        let mut tail_sum = 0.0;
        for n in 1..=horizon {
            let q = schedule.budget(epsilon, n);
            let z = self.tail_quantile(q);
            let lb = log_beta1(n);
            let k = (z.ln() - lb).exp();
            tail_sum += self.tail((k.ln() + lb).exp());
            kappa.push(k);
        }
        let kappa_in_x = sequence_in_space(&kappa, space);
        let below = tail_sum < epsilon;
        let verdict = if below && kappa_in_x == Verdict::Holds {
            Verdict::Holds
        } else {
            Verdict::Inconclusive
        };
        TailReport {
            epsilon,
            schedule,
            kappa,
            tail_sum,
            tail_sum_below_epsilon: below,
            kappa_in_x,
            verdict,
        }
    }

    /// The sufficient conditions for polynomial and exponential tails,
    /// with the growth of `d_n` read off the weights.
    pub fn fast_tail_criteria(&self, w: &WeightSequence, space: SpaceKind) -> Result<Verdict, AprioriError> {
        self.fast_tail_criteria_for(estimate_growth(w), space)
    }

    pub fn fast_tail_criteria_for(&self, growth: DGrowth, space: SpaceKind) -> Result<Verdict, AprioriError> {
        Ok(match self.tail_class()? {
            TailClass::Polynomial { gamma } => polynomial_tail_condition(gamma, growth, space),
            TailClass::Exponential => exponential_tail_condition(growth, space),
        })
    }
}

/// Polynomial tails of order `γ`: `c0` needs `n^ℓ / d_n → 0` for some
/// `ℓ > 1/γ`; `l^p` needs `d_n > C n^ℓ` with `ℓ > 1/γ + 1/p`. Exponential
/// growth of `d_n` satisfies both. Failing the arithmetic gives
/// `Inconclusive`, never `Fails`.
pub fn polynomial_tail_condition(gamma: f64, growth: DGrowth, space: SpaceKind) -> Verdict {
    let ok = match growth {
        DGrowth::Exponential { rate } => rate > 1.0,
        DGrowth::Polynomial { exponent } => {
            let needed = match space.exponent() {
                None => 1.0 / gamma,
                Some(p) => 1.0 / gamma + 1.0 / p,
            };
            exponent > needed
        }
    };
    if ok {
        Verdict::Holds
    } else {
        Verdict::Inconclusive
    }
}

/// Exponential tails: `(log n / d_n) ∈ X`.
pub fn exponential_tail_condition(growth: DGrowth, space: SpaceKind) -> Verdict {
    let ok = match growth {
        DGrowth::Exponential { rate } => rate > 1.0,
        DGrowth::Polynomial { exponent } => match space.exponent() {
            None => exponent > 0.0,
            Some(p) => exponent * p > 1.0,
        },
    };
    if ok {
        Verdict::Holds
    } else {
        Verdict::Inconclusive
    }
}

/// Growth profile of `d_n`: exponential when the root limit is safely below
/// one, otherwise a log-log slope over the second half of the horizon.
pub fn estimate_growth(w: &WeightSequence) -> DGrowth {
    let h = w.horizon().max(16);
    let rho = w.root_limit(h);
    if rho < RATIO_MARGIN {
        return DGrowth::Exponential { rate: 1.0 / rho };
    }
    let exponent = (w.log_d(h) - w.log_d(h / 2)) / 2f64.ln();
    DGrowth::Polynomial { exponent }
}

/// Tri-state membership of a positive sequence in `c0` or `l^p`, from its
/// decay between the second and last quarter of the data.
pub(crate) fn sequence_in_space(seq: &[f64], space: SpaceKind) -> Verdict {
    let n = seq.len();
    let i1 = n / 2;
    let i2 = n - 1;
    let (a, b) = (seq[i1 - 1].ln(), seq[i2].ln());
    let geometric = ((b - a) / (i2 + 1 - i1) as f64).exp();
    let slope = (b - a) / (((i2 + 1) as f64).ln() - (i1 as f64).ln());
    let holds = match space.exponent() {
        None => geometric < RATIO_MARGIN || slope < -0.05,
        Some(p) => geometric < RATIO_MARGIN || p * slope < -1.05,
    };
    if holds {
        Verdict::Holds
    } else {
        Verdict::Inconclusive
    }
}

/// `E[X^k]` for a standard Student-t with `dof` degrees of freedom.
fn student_moment(dof: f64, k: usize) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let half = k / 2;
    (1..=half).fold(1.0, |m, j| m * dof * (2 * j - 1) as f64 / (dof - 2.0 * j as f64))
}

/// Golub–Welsch on a symmetric tridiagonal Jacobi matrix with zero mean
/// diagonal `a` and off-diagonal `b`.
fn golub_welsch(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = a.len();
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        j[(i, i)] = a[i];
        if i + 1 < n {
            j[(i, i + 1)] = b[i];
            j[(i + 1, i)] = b[i];
        }
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    pairs.into_iter().unzip()
}

/// Gauss–Hermite for the standard normal density. Eigenvalue nodes are
/// polished by Newton steps, and weights come from the Christoffel
/// function `w_i = 1 / Σ_k p_k(x_i)²` of the orthonormal polynomials.
fn gauss_hermite_prob(n: usize) -> (Vec<f64>, Vec<f64>) {
    let a = vec![0.0; n];
    let b: Vec<f64> = (1..n).map(|k| (k as f64).sqrt()).collect();
    let (mut x, _) = golub_welsch(&a, &b);
    // orthonormal values p_0..p_n at t
    let ortho = |t: f64| -> Vec<f64> {
        let mut p = Vec::with_capacity(n + 1);
        p.push(1.0);
        if n >= 1 {
            p.push(t);
        }
        for k in 1..n {
            let next = (t * p[k] - (k as f64).sqrt() * p[k - 1]) / ((k + 1) as f64).sqrt();
            p.push(next);
        }
        p
    };
    for xi in x.iter_mut() {
        for _ in 0..3 {
            let p = ortho(*xi);
            // d/dt p_n = √n p_{n-1}
            let dp = (n as f64).sqrt() * p[n - 1];
            if dp == 0.0 {
                break;
            }
            *xi -= p[n] / dp;
        }
    }
    let mut w: Vec<f64> = x
        .iter()
        .map(|&t| 1.0 / ortho(t)[..n].iter().map(|v| v * v).sum::<f64>())
        .collect();
    // symmetrize to kill rounding asymmetry, then normalize
    for i in 0..n / 2 {
        let (j, k) = (i, n - 1 - i);
        let xs = 0.5 * (x[k] - x[j]);
        x[j] = -xs;
        x[k] = xs;
        let ws = 0.5 * (w[j] + w[k]);
        w[j] = ws;
        w[k] = ws;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    (x, w)
}

/// Gauss–Legendre on `(0, 1)` with weights summing to one.
pub(crate) fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let a = vec![0.0; n];
    let b: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    let (x, w) = golub_welsch(&a, &b);
    let total: f64 = w.iter().sum();
    (
        x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
        w.iter().map(|v| v / total).collect(),
    )
}

/// Gauss rule from raw moments `m_0..m_{2n}` via the Cholesky factor of
/// the Hankel matrix.
fn gauss_from_moments(moments: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = DMatrix::from_fn(n + 1, n + 1, |i, j| moments[i + j]);
    let r = h
        .cholesky()
        .expect("Hankel matrix of a measure with infinite support is positive definite")
        .l()
        .transpose();
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n.saturating_sub(1)];
    for j in 0..n {
        let prev = if j == 0 { 0.0 } else { r[(j - 1, j)] / r[(j - 1, j - 1)] };
        a[j] = r[(j, j + 1)] / r[(j, j)] - prev;
        if j + 1 < n {
            b[j] = r[(j + 1, j + 1)] / r[(j, j)];
        }
    }
    let (x, w) = golub_welsch(&a, &b);
    let total: f64 = w.iter().sum();
    (x, w.iter().map(|v| v * moments[0] / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gaussian_tail_examples() {
        let m = AprioriMeasure::standard_gaussian();
        assert_eq!(m.tail(0.0), 1.0);
        assert!(m.tail(40.0) < 1e-300);
        assert_relative_eq!(m.tail(1.959964), 0.05, max_relative = 1e-6);
        assert_relative_eq!(m.tail_quantile(0.05), 1.959964, max_relative = 1e-6);
    }

    #[test]
    fn gauss_hermite_moments() {
        let m = AprioriMeasure::standard_gaussian();
        let q = m.quadrature().unwrap();
        assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((q.integrate(|r| r * r) - 1.0).abs() < 1e-10);
        assert!(q.integrate(|r| r).abs() < 1e-12);
        assert!((q.integrate(|r| r.powi(4)) - 3.0).abs() < 1e-9);
        // degree 2n-1 exactness: E[r^{2k}] = (2k-1)!!
        let mut dfact = 1.0;
        for k in 1..20 {
            dfact *= (2 * k - 1) as f64;
            assert_relative_eq!(q.integrate(|r| r.powi(2 * k)), dfact, max_relative = 1e-9);
        }
        assert!((q.integrate(|r| (-r * r / 4.0).exp()) - (2.0f64 / 3.0).sqrt()).abs() < 1e-8);
    }

    #[test]
    fn shifted_gaussian_rule() {
        let m = AprioriMeasure::gaussian(1.5, 4.0).unwrap();
        let q = m.quadrature().unwrap();
        assert_relative_eq!(q.integrate(|r| r), 1.5, max_relative = 1e-12);
        assert_relative_eq!(q.integrate(|r| (r - 1.5).powi(2)), 4.0, max_relative = 1e-10);
    }

    #[test]
    fn student_t_rules() {
        let m = AprioriMeasure::new(AprioriKind::StudentT { dof: 12.0, scale: 1.0 }, 5).unwrap();
        let q = m.quadrature().unwrap();
        assert_relative_eq!(q.integrate(|r| r * r), 12.0 / 10.0, max_relative = 1e-9);
        assert_relative_eq!(q.integrate(|r| r.powi(4)), student_moment(12.0, 4), max_relative = 1e-8);

        let heavy = AprioriMeasure::student_t(3.0).unwrap();
        assert_eq!(
            heavy.quadrature(),
            Err(AprioriError::UnsupportedKind { order: 40, max_order: 1 })
        );
        // quantile rule still integrates bounded functions
        let rule = heavy.integration_rule();
        assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(rule.integrate(|r| r.atan()).abs() < 1e-12);
        let p = rule.integrate(|r| if r.abs() > 1.0 { 1.0 } else { 0.0 });
        assert!((p - heavy.tail(1.0)).abs() < 0.05);
    }

    #[test]
    fn atom_quadrature_is_itself() {
        let m = AprioriMeasure::atoms(&[-1.0, 2.0], &[0.25, 0.75]).unwrap();
        let q = m.quadrature().unwrap();
        assert_eq!(q.nodes, vec![-1.0, 2.0]);
        assert!(!m.full_support());
        assert_eq!(m.tail(1.0), 0.75);
        assert_eq!(m.tail(2.0), 0.0);
        assert_eq!(m.tail_quantile(0.5), 2.0);
        assert_eq!(m.tail_quantile(0.8), 1.0);
    }

    #[test]
    fn invalid_atoms_rejected() {
        assert!(AprioriMeasure::atoms(&[0.0, 1.0], &[0.5, 0.6]).is_err());
        assert!(AprioriMeasure::gaussian(0.0, 0.0).is_err());
    }

    #[test]
    fn adapted_tails_gaussian_doubling() {
        let m = AprioriMeasure::standard_gaussian();
        let w = WeightSequence::constant(2.0).unwrap();
        let r = m.adapted_tails_check(&w, SpaceKind::Lp { p: 1.0 }, 0.01, 100);
        assert!(r.tail_sum < 0.01 && r.tail_sum >= 0.0);
        assert_eq!(r.verdict, Verdict::Holds);
        assert_eq!(m.fast_tail_criteria(&w, SpaceKind::Lp { p: 1.0 }), Ok(Verdict::Holds));
    }

    #[test]
    fn fast_criteria_examples() {
        let l1 = SpaceKind::Lp { p: 1.0 };
        assert_eq!(exponential_tail_condition(DGrowth::Exponential { rate: 2.0 }, l1), Verdict::Holds);
        for s in [SpaceKind::C0, l1, SpaceKind::Lp { p: 3.0 }] {
            assert_eq!(polynomial_tail_condition(3.0, DGrowth::Exponential { rate: 2.0 }, s), Verdict::Holds);
        }
        assert_eq!(
            polynomial_tail_condition(2.0, DGrowth::Polynomial { exponent: 0.4 }, l1),
            Verdict::Inconclusive
        );
        assert_eq!(
            polynomial_tail_condition(2.0, DGrowth::Polynomial { exponent: 1.6 }, l1),
            Verdict::Holds
        );
        let m = AprioriMeasure::new(AprioriKind::StudentT { dof: 2.0, scale: 1.0 }, 40).unwrap();
        let report = m.adapted_tails_with(|n| 0.4 * (n as f64).ln(), l1, 0.01, 100);
        assert_ne!(report.verdict, Verdict::Holds);
        assert_eq!(
            AprioriMeasure::student_t(1.0).unwrap().tail_class(),
            Err(AprioriError::MissingTailClass)
        );
    }

    #[test]
    fn sampling_matches_moments() {
        let m = AprioriMeasure::gaussian(0.5, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20000;
        let xs: Vec<f64> = (0..n).map(|_| m.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 4.0 * (2.0f64 / n as f64).sqrt());
        let a = AprioriMeasure::atoms(&[0.0, 1.0], &[0.3, 0.7]).unwrap();
        let ones = (0..n).filter(|_| a.sample(&mut rng) == 1.0).count() as f64 / n as f64;
        assert!((ones - 0.7).abs() < 4.0 * (0.21f64 / n as f64).sqrt());
    }

    proptest! {
        #[test]
        fn tail_non_increasing(z1 in 0.0f64..8.0, dz in 0.0f64..3.0, dof in 1.5f64..10.0) {
            for m in [AprioriMeasure::standard_gaussian(), AprioriMeasure::student_t(dof).unwrap()] {
                prop_assert!(m.tail(z1 + dz) <= m.tail(z1) + 1e-15);
            }
        }

        #[test]
        fn adapted_verdict_monotone_in_epsilon(eps in 1e-4f64..0.5, factor in 1.0f64..10.0) {
            let m = AprioriMeasure::standard_gaussian();
            let w = WeightSequence::constant(1.5).unwrap();
            let l2 = SpaceKind::Lp { p: 2.0 };
            let a = m.adapted_tails_check(&w, l2, eps, 60);
            let b = m.adapted_tails_check(&w, l2, eps * factor, 60);
            if a.verdict == Verdict::Holds {
                prop_assert_eq!(b.verdict, Verdict::Holds);
            }
        }

        #[test]
        fn fast_criteria_imply_construction(rate in 1.2f64..3.0, dof in 2.5f64..8.0) {
            let w = WeightSequence::constant(rate).unwrap();
            let l1 = SpaceKind::Lp { p: 1.0 };
            for m in [AprioriMeasure::standard_gaussian(), AprioriMeasure::student_t(dof).unwrap()] {
                if m.fast_tail_criteria(&w, l1) == Ok(Verdict::Holds) {
                    prop_assert_eq!(m.adapted_tails_check(&w, l1, 0.05, 80).verdict, Verdict::Holds);
                }
            }
        }
    }
}
