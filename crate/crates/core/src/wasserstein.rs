//! Wasserstein-1 distances between particle clouds, the Kantorovich lower
//! bound, and the contraction experiments for `L_Ā*` under the bounded
//! metric `D̃ = min{1, a D^α}`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gibbs::{EmpiricalMeasure, GibbsSampler};
use crate::potential::Observable;
use crate::space::{MetricSpec, SpaceKind};
use crate::util::{golden_max, log_sum_exp, par_map, stream_rng};
use crate::weights::WeightSequence;

/// Largest cloud the exact solver accepts by default.
pub const EXACT_THRESHOLD: usize = 2048;

#[derive(Debug, Error)]
pub enum WassersteinError {
    #[error("exact assignment needs equal sizes, got {left} and {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("empty cloud")]
    Empty,
    #[error("test function {index} is not 1-Lipschitz: ratio {ratio} on a sampled pair")]
    LipschitzAuditFailed { index: usize, ratio: f64 },
    #[error("premise violated: {0}")]
    PremiseViolated(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanMethod {
    ExactAssignment,
    Entropic { reg: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct TransportPlan {
    pub method: PlanMethod,
    pub cost: f64,
    /// `assignment[i]` is the partner of left particle `i`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assignment: Option<Vec<usize>>,
    /// Row-major coupling for the entropic solver.
    #[serde(skip)]
    pub coupling: Option<Vec<f64>>,
    /// Primal minus dual objective (entropic only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duality_gap: Option<f64>,
    pub marginal_error: f64,
}

fn cost_matrix(xs: &[Vec<f64>], ys: &[Vec<f64>], metric: MetricSpec, space: SpaceKind) -> Vec<f64> {
    let m = ys.len();
    let rows = par_map(xs.len(), |i| ys.iter().map(|y| metric.eval(space, &xs[i], y)).collect::<Vec<f64>>());
    let mut out = Vec::with_capacity(xs.len() * m);
    for r in rows {
        out.extend(r);
    }
    out
}

/// Minimum-cost perfect matching by shortest augmenting paths with
/// potentials, `O(n³)`.
fn hungarian(n: usize, cost: &[f64]) -> Vec<usize> {
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            let row = &cost[(i0 - 1) * n..i0 * n];
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    assignment
}

/// Exact `W_D` between equal-size uniform clouds.
pub fn w1_exact(xs: &[Vec<f64>], ys: &[Vec<f64>], metric: MetricSpec, space: SpaceKind) -> Result<TransportPlan, WassersteinError> {
    if xs.len() != ys.len() {
        return Err(WassersteinError::SizeMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.is_empty() {
        return Err(WassersteinError::Empty);
    }
    let n = xs.len();
    let c = cost_matrix(xs, ys, metric, space);
    let assignment = hungarian(n, &c);
    let total: f64 = assignment.iter().enumerate().map(|(i, &j)| c[i * n + j]).sum();
    Ok(TransportPlan {
        method: PlanMethod::ExactAssignment,
        cost: total / n as f64,
        assignment: Some(assignment),
        coupling: None,
        duality_gap: None,
        marginal_error: 0.0,
    })
}

/// Log-domain Sinkhorn for uniform clouds of any sizes. The reported cost is
/// the transport cost of the regularized plan, which overestimates `W_D` by
/// at most `reg · ln(n·m)`.
pub fn w1_entropic(
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    metric: MetricSpec,
    space: SpaceKind,
    reg: f64,
    max_iters: usize,
) -> Result<TransportPlan, WassersteinError> {
    if xs.is_empty() || ys.is_empty() {
        return Err(WassersteinError::Empty);
    }
    let (n, m) = (xs.len(), ys.len());
    let c = cost_matrix(xs, ys, metric, space);
    let (la, lb) = (-(n as f64).ln(), -(m as f64).ln());
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut err = f64::INFINITY;
    for _ in 0..max_iters {
        f = par_map(n, |i| {
            let t: Vec<f64> = (0..m).map(|j| (g[j] - c[i * m + j]) / reg).collect();
            reg * la - reg * log_sum_exp(&t)
        });
        g = par_map(m, |j| {
            let t: Vec<f64> = (0..n).map(|i| (f[i] - c[i * m + j]) / reg).collect();
            reg * lb - reg * log_sum_exp(&t)
        });
        // columns are exact after the g-update; check the rows
        err = (0..n)
            .map(|i| {
                let s: f64 = (0..m).map(|j| ((f[i] + g[j] - c[i * m + j]) / reg).exp()).sum();
                (s - 1.0 / n as f64).abs()
            })
            .fold(0.0, f64::max);
        if err < 1e-12 {
            break;
        }
    }
    let plan: Vec<f64> = (0..n * m)
        .map(|k| ((f[k / m] + g[k % m] - c[k]) / reg).exp())
        .collect();
    let primal: f64 = plan.iter().zip(&c).map(|(p, c)| p * c).sum();
    let mass: f64 = plan.iter().sum();
    let dual = f.iter().sum::<f64>() / n as f64 + g.iter().sum::<f64>() / m as f64 - reg * (mass - 1.0);
    Ok(TransportPlan {
        method: PlanMethod::Entropic { reg },
        cost: primal,
        assignment: None,
        coupling: Some(plan),
        duality_gap: Some(primal - dual),
        marginal_error: err,
    })
}

/// `W_D(μ, ν)`: exact up to `threshold` particles, entropic beyond.
pub fn w1(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, metric: MetricSpec, threshold: usize) -> Result<TransportPlan, WassersteinError> {
    if mu.len() == nu.len() && mu.len() <= threshold {
        w1_exact(&mu.particles, &nu.particles, metric, mu.space)
    } else {
        w1_entropic(&mu.particles, &nu.particles, metric, mu.space, 5e-3, 2000)
    }
}

/// `max_φ |∫φ dμ − ∫φ dν|` over test functions, each audited as
/// 1-Lipschitz for `metric` on `audit_pairs` sampled particle pairs.
pub fn kantorovich_lb(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    metric: MetricSpec,
    tests: &[&dyn Observable],
    audit_pairs: usize,
    seed: u64,
) -> Result<f64, WassersteinError> {
    if mu.is_empty() || nu.is_empty() {
        return Err(WassersteinError::Empty);
    }
    let pool: Vec<&Vec<f64>> = mu.particles.iter().chain(&nu.particles).collect();
    let mut best: f64 = 0.0;
    for (index, phi) in tests.iter().enumerate() {
        let mut rng = stream_rng(seed, index as u64, 0);
        for _ in 0..audit_pairs {
            let x = pool[rng.random_range(0..pool.len())];
            let y = pool[rng.random_range(0..pool.len())];
            let d = metric.eval(mu.space, x, y);
            let diff = (phi.eval(x) - phi.eval(y)).abs();
            if diff > d * (1.0 + 1e-12) + 1e-15 {
                return Err(WassersteinError::LipschitzAuditFailed {
                    index,
                    ratio: diff / d,
                });
            }
        }
        let (a, _) = mu.mean_of(*phi);
        let (b, _) = nu.mean_of(*phi);
        best = best.max((a - b).abs());
    }
    Ok(best)
}

/// `sup_{0<t≤1} (e^{L S t} − 1)/t` with `L = Lip_{Ā,D}`, `S = Σ d_i^{−α}`.
pub fn c_contr(lip: f64, d_sum: f64) -> f64 {
    let k = lip * d_sum;
    if k == 0.0 {
        return 0.0;
    }
    golden_max(|t: f64| (k * t).exp_m1() / t, 1e-12, 1.0, 1e-10).1
}

/// Scale of the bounded metric: `max{8 c_contr/3, 1}`.
pub fn auto_scale(lip: f64, d_sum: f64) -> f64 {
    f64::max(8.0 * c_contr(lip, d_sum) / 3.0, 1.0)
}

fn d_sum(w: &WeightSequence, alpha: f64) -> Result<f64, WassersteinError> {
    w.d_series(alpha, w.horizon())
        .ok_or_else(|| WassersteinError::PremiseViolated("Σ d_i^{-α} is not certified finite".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PremiseFlags {
    /// `d_n^{−α} ≤ 3/8`.
    pub d_n_small: bool,
    /// `D̃(x, y) < 1`.
    pub local: bool,
    /// `D̃(x, y) = 1` and `a D(x, y) < d_n^α`.
    pub global: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub a: f64,
    pub c_contr: f64,
    pub n: usize,
    pub alpha: f64,
    pub d_n_inv_alpha: f64,
    pub d_sum: f64,
    pub premise_flags: PremiseFlags,
    pub d_tilde_xy: f64,
    /// Exact W̃ between the two pushed clouds.
    pub measured_w: f64,
    pub measured_ratio: f64,
    /// Mean D̃ over particles paired by their shared draws.
    pub coupled_ratio: f64,
    /// W̃ between two same-law clouds from `x` with different seeds.
    pub noise_floor: f64,
    /// Bound on the ratio `W̃ / D̃(x, y)` as displayed.
    pub stated_bound: f64,
    /// The global bound with `Lip_Ā` kept in the exponent; equals the
    /// displayed one when `Lip_Ā ≤ 1`.
    pub lip_corrected_bound: Option<f64>,
    pub passes: bool,
}

/// Inputs shared by the two Dirac-pair experiments.
pub struct ContractionSetup<'s, 'a> {
    pub sampler: &'s GibbsSampler<'a>,
    /// `Lip_{Ā, D}` as declared for the normalized potential.
    pub lip_abar: f64,
    pub alpha: f64,
    /// `None` picks `max{8 c_contr/3, 1}`.
    pub a: Option<f64>,
    pub particles: usize,
}

struct Pushed {
    w: f64,
    coupled: f64,
    floor: f64,
    d_tilde: f64,
}

impl ContractionSetup<'_, '_> {
    fn constants(&self, n: usize) -> Result<(f64, f64, f64, f64), WassersteinError> {
        let w = self.sampler.weights();
        let s = d_sum(w, self.alpha)?;
        let c = c_contr(self.lip_abar, s);
        let required = f64::max(8.0 * c / 3.0, 1.0);
        let a = match self.a {
            None => required,
            Some(a) if a >= required => a,
            Some(a) => {
                return Err(WassersteinError::PremiseViolated(format!(
                    "a = {a} is below max{{8 c_contr/3, 1}} = {required}"
                )))
            }
        };
        let dn = (-self.alpha * w.log_d(n)).exp();
        Ok((a, c, s, dn))
    }

    fn push(&self, x: &[f64], y: &[f64], n: usize, metric: MetricSpec) -> Pushed {
        let space = self.sampler.space();
        let mx = self.sampler.push_n(&EmpiricalMeasure::dirac(x, self.particles, space), n);
        // same seed: identical draws pair the particles
        let my = self.sampler.push_n(&EmpiricalMeasure::dirac(y, self.particles, space), n);
        let other = self
            .sampler
            .reseeded(self.sampler.seed() ^ 0xF100_D5EE)
            .push_n(&EmpiricalMeasure::dirac(x, self.particles, space), n);
        let pairs: Vec<f64> = par_map(mx.len(), |i| metric.eval(space, &mx.particles[i], &my.particles[i]));
        let coupled = pairs.iter().sum::<f64>() / pairs.len() as f64;
        let w = w1_exact(&mx.particles, &my.particles, metric, space).map_or(f64::NAN, |p| p.cost);
        let floor = w1_exact(&mx.particles, &other.particles, metric, space).map_or(f64::NAN, |p| p.cost);
        Pushed {
            w,
            coupled,
            floor,
            d_tilde: metric.eval(space, x, y),
        }
    }

    /// `W̃((L*)^n δ_x, (L*)^n δ_y) ≤ (3/4) D̃(x, y)` for `D̃(x, y) < 1`.
    pub fn local(&self, x: &[f64], y: &[f64], n: usize) -> Result<ContractionReport, WassersteinError> {
        let (a, c, s, dn) = self.constants(n)?;
        let metric = MetricSpec::Bounded { a, alpha: self.alpha };
        let space = self.sampler.space();
        let d_tilde = metric.eval(space, x, y);
        let flags = PremiseFlags {
            d_n_small: dn <= 3.0 / 8.0,
            local: d_tilde < 1.0,
            global: false,
        };
        if !flags.d_n_small {
            return Err(WassersteinError::PremiseViolated(format!("d_n^(-α) = {dn} > 3/8")));
        }
        if !flags.local {
            return Err(WassersteinError::PremiseViolated("D̃(x, y) = 1, not a local pair".into()));
        }
        if d_tilde == 0.0 {
            return Ok(ContractionReport {
                a,
                c_contr: c,
                n,
                alpha: self.alpha,
                d_n_inv_alpha: dn,
                d_sum: s,
                premise_flags: flags,
                d_tilde_xy: 0.0,
                measured_w: 0.0,
                measured_ratio: 0.0,
                coupled_ratio: 0.0,
                noise_floor: 0.0,
                stated_bound: 0.75,
                lip_corrected_bound: None,
                passes: true,
            });
        }
        let p = self.push(x, y, n, metric);
        let ratio = p.w / p.d_tilde;
        Ok(ContractionReport {
            a,
            c_contr: c,
            n,
            alpha: self.alpha,
            d_n_inv_alpha: dn,
            d_sum: s,
            premise_flags: flags,
            d_tilde_xy: p.d_tilde,
            measured_w: p.w,
            measured_ratio: ratio,
            coupled_ratio: p.coupled / p.d_tilde,
            noise_floor: p.floor,
            stated_bound: 0.75,
            lip_corrected_bound: None,
            passes: p.w <= 0.75 * p.d_tilde + 3.0 * p.floor,
        })
    }

    /// `W̃ ≤ 1 − e^{−S D(x,y)} (1 − a d_n^{−α} D(x,y))` for `D̃(x, y) = 1`.
    pub fn global(&self, x: &[f64], y: &[f64], n: usize) -> Result<ContractionReport, WassersteinError> {
        let (a, c, s, dn) = self.constants(n)?;
        let metric = MetricSpec::Bounded { a, alpha: self.alpha };
        let space = self.sampler.space();
        let d = space.diff_norm(x, y).powf(self.alpha);
        let d_n_alpha = 1.0 / dn;
        let flags = PremiseFlags {
            d_n_small: dn <= 3.0 / 8.0,
            local: false,
            global: a * d >= 1.0 && a * d < d_n_alpha,
        };
        if !flags.global {
            return Err(WassersteinError::PremiseViolated(format!(
                "need 1 ≤ a·D(x, y) < d_n^α, got a·D = {} and d_n^α = {d_n_alpha}",
                a * d
            )));
        }
        let bound = global_bound(s, a, dn, d);
        let corrected = 1.0 - (-self.lip_abar * s * d).exp() * (1.0 - a * dn * d);
        let p = self.push(x, y, n, metric);
        Ok(ContractionReport {
            a,
            c_contr: c,
            n,
            alpha: self.alpha,
            d_n_inv_alpha: dn,
            d_sum: s,
            premise_flags: flags,
            d_tilde_xy: p.d_tilde,
            measured_w: p.w,
            measured_ratio: p.w / p.d_tilde,
            coupled_ratio: p.coupled / p.d_tilde,
            noise_floor: p.floor,
            stated_bound: bound,
            lip_corrected_bound: Some(corrected),
            passes: p.w <= bound + 3.0 * p.floor,
        })
    }
}

/// `1 − e^{−S t} (1 − a d_n^{−α} t)`.
pub fn global_bound(d_sum: f64, a: f64, d_n_inv_alpha: f64, t: f64) -> f64 {
    1.0 - (-d_sum * t).exp() * (1.0 - a * d_n_inv_alpha * t)
}

fn rn_premise(w: &WeightSequence, alpha: f64, n: usize) -> Result<f64, WassersteinError> {
    let dn = (-alpha * w.log_d(n)).exp();
    if dn > 3.0 / 8.0 {
        return Err(WassersteinError::PremiseViolated(format!("d_n^α = {} < 8/3", 1.0 / dn)));
    }
    Ok(dn)
}

/// The piecewise rate `r_n(t)`: `3/4` below `1/a`, otherwise
/// `1 − e^{−S t}(1 − min{1, t a d_n^{−α}})`.
pub fn rn_profile(w: &WeightSequence, alpha: f64, a: f64, n: usize, ts: &[f64]) -> Result<Vec<f64>, WassersteinError> {
    let dn = rn_premise(w, alpha, n)?;
    let s = d_sum(w, alpha)?;
    Ok(ts
        .iter()
        .map(|&t| {
            if t < 1.0 / a {
                0.75
            } else {
                1.0 - (-s * t).exp() * (1.0 - f64::min(1.0, t * a * dn))
            }
        })
        .collect())
}

/// `1 − (1 − min{1, 2aγ d_n^{−α}}) / (2 e^{2γS})`.
pub fn tails_contraction_factor(gamma: f64, w: &WeightSequence, alpha: f64, a: f64, n: usize) -> Result<f64, WassersteinError> {
    if gamma < 1.0 / a {
        return Err(WassersteinError::PremiseViolated(format!("γ = {gamma} < 1/a = {}", 1.0 / a)));
    }
    let dn = rn_premise(w, alpha, n)?;
    let s = d_sum(w, alpha)?;
    Ok(1.0 - (1.0 - f64::min(1.0, 2.0 * a * gamma * dn)) / (2.0 * (2.0 * gamma * s).exp()))
}
