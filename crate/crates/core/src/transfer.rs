//! The Ruelle operator `L_A φ(x) = ∫ e^{A(v)} φ(v) dm(r)` over the preimages
//! `v = (r, x_1/α_1, x_2/α_2, …)`, its iterates, Hölder certificates, and the
//! grid solvers for the leading eigenpair.
//!
//! For a potential depending on the first `N` coordinates, the discounted
//! fixed point depends on the first `N − 1` only, so the solvers work on a
//! grid of that rank. See [`GridSpec::axes`] for why the grid is closed under
//! the preimage branches.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::apriori::{AprioriMeasure, QuadratureRule};
use crate::grid::{apply_stencil, Axis, GridError, GridFunction, GridSpec, Stencil};
use crate::potential::{audit_points, Observable, Potential};
use crate::space::SpaceKind;
use crate::util::{extrapolate_to_zero, par_map, stream_rng};
use crate::weights::WeightSequence;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("nested quadrature needs {needed} evaluations, budget is {budget}")]
    BudgetExceeded { needed: f64, budget: usize },
    #[error("non-finite grid value at s = {s} after {iteration} iterations")]
    NonFinite { s: f64, iteration: usize },
    #[error("κ trace is not Cauchy: {trace:?}")]
    ScheduleDiverged { trace: Vec<(f64, f64)> },
    #[error("power iteration did not settle after {iterations} iterations (last change {last_change:e})")]
    Stagnation { iterations: usize, last_change: f64 },
    #[error("invalid discount schedule: {0}")]
    InvalidSchedule(String),
    #[error("potential has no finite rank; set a truncation rank")]
    NeedsTruncation,
    #[error(transparent)]
    Grid(#[from] GridError),
}

fn preimage(w: &WeightSequence, x: &[f64], r: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(r);
    out.extend(x.iter().enumerate().map(|(j, v)| v / w.alpha(j + 1)));
}

/// How the n-fold integral of `L_A^n` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum IterationMethod {
    /// Tensor product of the quadrature rule; `order^n` must fit `budget`.
    NestedQuadrature { budget: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// `L_A` for a potential, a-priori measure and weights.
pub struct TransferOperator<'a> {
    a: &'a (dyn Observable + 'a),
    m: &'a AprioriMeasure,
    w: &'a WeightSequence,
}

impl<'a> TransferOperator<'a> {
    pub fn new(a: &'a (dyn Observable + 'a), m: &'a AprioriMeasure, w: &'a WeightSequence) -> Self {
        TransferOperator { a, m, w }
    }

    fn rule(&self) -> &QuadratureRule {
        self.m.integration_rule()
    }

    /// `L_A φ(x)` by the quadrature rule of `m`.
    pub fn apply(&self, phi: &dyn Observable, x: &[f64]) -> f64 {
        let rule = self.rule();
        let mut pre = Vec::with_capacity(x.len() + 1);
        let mut s = 0.0;
        for (&r, &q) in rule.nodes.iter().zip(&rule.weights) {
            preimage(self.w, x, r, &mut pre);
            s += q * self.a.eval(&pre).exp() * phi.eval(&pre);
        }
        s
    }

    /// `L_A^n φ(x)`.
    pub fn apply_n(
        &self,
        phi: &dyn Observable,
        x: &[f64],
        n: usize,
        method: IterationMethod,
    ) -> Result<Estimate, TransferError> {
        if n == 0 {
            return Ok(Estimate {
                value: phi.eval(x),
                stderr: 0.0,
            });
        }
        match method {
            IterationMethod::NestedQuadrature { budget } => {
                let needed = (self.rule().len() as f64).powi(n as i32);
                if needed > budget as f64 {
                    return Err(TransferError::BudgetExceeded { needed, budget });
                }
                Ok(Estimate {
                    value: self.nested(phi, x, n),
                    stderr: 0.0,
                })
            }
            IterationMethod::MonteCarlo { samples, seed } => {
                let samples = samples.max(2);
                let chunks = 64.min(samples);
                let per = samples.div_ceil(chunks);
                let parts = par_map(chunks, |c| {
                    let mut rng = stream_rng(seed, n as u64, c as u64);
                    let mut rs = vec![0.0; n];
                    let (mut s1, mut s2, mut k) = (0.0, 0.0, 0usize);
                    for _ in 0..per.min(samples - (c * per).min(samples)) {
                        for r in rs.iter_mut() {
                            *r = self.m.sample(&mut rng);
                        }
                        let (logw, v) = self.path(x, &rs);
                        let f = logw.exp() * phi.eval(&v);
                        s1 += f;
                        s2 += f * f;
                        k += 1;
                    }
                    (s1, s2, k)
                });
                let (s1, s2, k) = parts
                    .into_iter()
                    .fold((0.0, 0.0, 0usize), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
                let kf = k as f64;
                let mean = s1 / kf;
                let var = ((s2 / kf - mean * mean) * kf / (kf - 1.0)).max(0.0);
                Ok(Estimate {
                    value: mean,
                    stderr: (var / kf).sqrt(),
                })
            }
        }
    }

    fn nested(&self, phi: &dyn Observable, x: &[f64], n: usize) -> f64 {
        let rule = self.rule();
        let mut pre = Vec::with_capacity(x.len() + 1);
        let mut s = 0.0;
        for (&r, &q) in rule.nodes.iter().zip(&rule.weights) {
            preimage(self.w, x, r, &mut pre);
            let inner = if n == 1 { phi.eval(&pre) } else { self.nested(phi, &pre, n - 1) };
            s += q * self.a.eval(&pre).exp() * inner;
        }
        s
    }

    /// Log-weight `Σ_j A(v_j)` and endpoint `v_n` of the preimage path
    /// driven by `rs`, applied in order.
    pub fn path(&self, x: &[f64], rs: &[f64]) -> (f64, Vec<f64>) {
        let mut v = x.to_vec();
        let mut next = Vec::with_capacity(x.len() + rs.len());
        let mut logw = 0.0;
        for &r in rs {
            preimage(self.w, &v, r, &mut next);
            logw += self.a.eval(&next);
            std::mem::swap(&mut v, &mut next);
        }
        (logw, v)
    }
}

/// Solver settings shared by the eigen routines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenConfig {
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_schedule")]
    pub s_schedule: Vec<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Rank used for potentials that depend on every coordinate.
    #[serde(default)]
    pub truncation_rank: Option<usize>,
    #[serde(default = "default_audit")]
    pub audit_points: usize,
}

fn default_schedule() -> Vec<f64> {
    vec![0.9, 0.99, 0.999, 0.9999]
}

fn default_tol() -> f64 {
    1e-11
}

fn default_max_iters() -> usize {
    20_000
}

fn default_audit() -> usize {
    64
}

impl Default for EigenConfig {
    fn default() -> Self {
        EigenConfig {
            grid: GridSpec::default(),
            s_schedule: default_schedule(),
            tol: default_tol(),
            max_iters: default_max_iters(),
            truncation_rank: None,
            audit_points: default_audit(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    Discounted,
    Power,
}

/// Leading eigenpair `L_A ψ = λ ψ` with `ψ(0) = 1`.
#[derive(Debug, Clone, Serialize)]
pub struct EigenPair {
    pub lambda: f64,
    pub kappa: f64,
    /// `(s, (1 − s) u_s(0))` for the discounted solver; `(k, ln ratio_k)` for
    /// power iteration.
    pub kappa_trace: Vec<(f64, f64)>,
    /// `sup |L_A ψ − λ ψ|` over off-grid audit points.
    pub residual: f64,
    /// Same over the grid nodes.
    pub residual_nodes: f64,
    pub method: EigenMethod,
    pub iterations: usize,
    #[serde(skip)]
    pub log_psi: GridFunction,
}

impl EigenPair {
    pub fn psi(&self) -> GridFunction {
        self.log_psi.map(f64::exp)
    }
}

#[derive(Debug, Clone)]
pub struct DiscountedSolution {
    pub u: GridFunction,
    pub iterations: usize,
    /// Rigorous bound on `‖u − u_s‖_∞` on the grid from the contraction rate.
    pub error_bound: f64,
}

/// Precomputed discretization of `L_A` on a grid of rank `N − 1`.
///
/// For each node `x` and quadrature node `r_q` it stores `A(r_q, x/α)` and
/// the interpolation stencil of the preimage, so one operator application
/// is a gather plus a log-sum-exp per node.
pub struct GridSolver<'a> {
    a: Box<dyn Observable + 'a>,
    w: WeightSequence,
    m: AprioriMeasure,
    template: GridFunction,
    weights_log: Vec<f64>,
    a_vals: Vec<f64>,
    stencils: Vec<Stencil>,
    zero: Stencil,
    q: usize,
}

impl<'a> GridSolver<'a> {
    /// `potential_rank` is the number of leading coordinates `A` reads.
    pub fn new<A: Observable + 'a>(
        a: A,
        potential_rank: usize,
        m: &AprioriMeasure,
        w: &WeightSequence,
        grid: &GridSpec,
    ) -> Result<Self, TransferError> {
        let rank = potential_rank.saturating_sub(1);
        let axes: Vec<Axis> = grid.axes(m, w, rank);
        let n: usize = axes.iter().map(Axis::len).product();
        if n > crate::grid::MAX_GRID_NODES {
            return Err(GridError::TooLarge(n).into());
        }
        let template = GridFunction::from_values(axes, vec![0.0; n])?;
        let rule = m.integration_rule().clone();
        let q = rule.len();
        let rows = par_map(n, |i| {
            let x = template.node(i);
            let mut pre = Vec::with_capacity(rank + 1);
            let mut av = Vec::with_capacity(q);
            let mut st = Vec::with_capacity(q);
            for &r in &rule.nodes {
                preimage(w, &x, r, &mut pre);
                av.push(a.eval(&pre));
                st.push(template.stencil(&pre[..rank]));
            }
            (av, st)
        });
        let mut a_vals = Vec::with_capacity(n * q);
        let mut stencils = Vec::with_capacity(n * q);
        for (av, st) in rows {
            a_vals.extend(av);
            stencils.extend(st);
        }
        let zero = template.stencil(&[]);
        Ok(GridSolver {
            a: Box::new(a),
            w: w.clone(),
            m: m.clone(),
            weights_log: rule.weights.iter().map(|v| v.ln()).collect(),
            template,
            a_vals,
            stencils,
            zero,
            q,
        })
    }

    /// Solver for a [`Potential`], truncating rank-free potentials at
    /// `truncation_rank`.
    pub fn for_potential(
        p: &'a Potential,
        space: SpaceKind,
        m: &AprioriMeasure,
        w: &WeightSequence,
        config: &EigenConfig,
    ) -> Result<Self, TransferError> {
        let rank = p.rank().or(config.truncation_rank).ok_or(TransferError::NeedsTruncation)?;
        GridSolver::new(p.on(space), rank, m, w, &config.grid)
    }

    pub fn axes(&self) -> &[Axis] {
        self.template.axes()
    }

    pub fn len(&self) -> usize {
        self.template.len()
    }

    pub fn is_empty(&self) -> bool {
        self.template.is_empty()
    }

    /// Value of a grid vector at the origin.
    fn at_zero(&self, v: &[f64]) -> f64 {
        apply_stencil(v, &self.zero)
    }

    /// `T_s(u)(x) = ln Σ_q w_q e^{A(v_q) + s·u(v_q)}` at every node.
    pub fn step(&self, s: f64, u: &[f64]) -> Vec<f64> {
        let q = self.q;
        par_map(self.len(), |i| {
            let row = i * q;
            let mut t = [0.0f64; 512];
            let mut big = Vec::new();
            let terms: &mut [f64] = if q <= t.len() {
                &mut t[..q]
            } else {
                big.resize(q, 0.0);
                &mut big
            };
            let mut mx = f64::NEG_INFINITY;
            for (k, term) in terms.iter_mut().enumerate() {
                let v = self.weights_log[k] + self.a_vals[row + k] + s * apply_stencil(u, &self.stencils[row + k]);
                *term = v;
                mx = mx.max(v);
            }
            if !mx.is_finite() {
                return mx;
            }
            mx + terms.iter().map(|v| (v - mx).exp()).sum::<f64>().ln()
        })
    }

    /// One discounted step on a grid function with the solver's axes.
    pub fn discounted_step(&self, s: f64, u: &GridFunction) -> GridFunction {
        self.template.with_values(self.step(s, u.values()))
    }

    /// Relative iteration `v ← T_s v − (T_s v)(0)`. Returns the normalized
    /// fixed point `v`, `c = (T_s v)(0)`, iterations and the last sup-change.
    fn relative(&self, s: f64, tol: f64, max_iters: usize, mut v: Vec<f64>) -> Result<(Vec<f64>, f64, usize, f64), TransferError> {
        let mut c = 0.0;
        let mut change = f64::INFINITY;
        for it in 1..=max_iters {
            let t = self.step(s, &v);
            c = self.at_zero(&t);
            if !c.is_finite() || t.iter().any(|x| !x.is_finite()) {
                return Err(TransferError::NonFinite { s, iteration: it });
            }
            let mut scale: f64 = 1.0;
            change = 0.0;
            for (vi, ti) in v.iter_mut().zip(&t) {
                let nv = ti - c;
                change = change.max((nv - *vi).abs());
                scale = scale.max(nv.abs());
                *vi = nv;
            }
            let floor = 64.0 * f64::EPSILON * (scale + c.abs());
            if change <= tol * (1.0 - s).max(f64::EPSILON) || change <= floor {
                return Ok((v, c, it, change));
            }
        }
        Ok((v, c, max_iters, change))
    }

    /// Fixed point `u_s` of `T_s`, reconstructed exactly as
    /// `v + c/(1 − s)` from the relative iteration.
    pub fn solve_discounted(&self, s: f64, tol: f64, max_iters: usize) -> Result<DiscountedSolution, TransferError> {
        if !(s > 0.0 && s < 1.0) {
            return Err(TransferError::InvalidSchedule(format!("s = {s} not in (0, 1)")));
        }
        let (v, c, iterations, change) = self.relative(s, tol, max_iters, vec![0.0; self.len()])?;
        let shift = c / (1.0 - s);
        let values = v.iter().map(|x| x + shift).collect();
        Ok(DiscountedSolution {
            u: self.template.with_values(values),
            iterations,
            // span contraction by s, counted twice for the two normalizations
            error_bound: 2.0 * change * s / (1.0 - s),
        })
    }

    /// Eigenpair from the discounted family: `κ = lim (1 − s) u_s(0)` and
    /// `ln ψ = lim (u_s − u_s(0))`, both extrapolated in `1 − s`.
    pub fn eigenpair(&self, schedule: &[f64], tol: f64, max_iters: usize) -> Result<EigenPair, TransferError> {
        if schedule.is_empty() || schedule.iter().any(|&s| !(s > 0.0 && s < 1.0)) || schedule.windows(2).any(|p| p[1] <= p[0]) {
            return Err(TransferError::InvalidSchedule(format!("{schedule:?}")));
        }
        let mut v = vec![0.0; self.len()];
        let mut trace = Vec::with_capacity(schedule.len());
        let mut profiles = Vec::with_capacity(schedule.len());
        let mut iterations = 0;
        for &s in schedule {
            let (vs, c, it, _) = self.relative(s, tol, max_iters, v)?;
            iterations += it;
            // ℓ(v) = 0, so (1 − s) u_s(0) = c exactly
            trace.push((s, c));
            profiles.push(vs.clone());
            v = vs;
        }
        let diffs: Vec<f64> = trace.windows(2).map(|p| (p[1].1 - p[0].1).abs()).collect();
        if diffs.windows(2).any(|d| d[1] > 0.5 * d[0] + 1e3 * tol) {
            return Err(TransferError::ScheduleDiverged { trace });
        }
        let hs: Vec<f64> = schedule.iter().map(|s| 1.0 - s).collect();
        let ks: Vec<f64> = trace.iter().map(|t| t.1).collect();
        let kappa = extrapolate_to_zero(&hs, &ks);
        let mut col = vec![0.0; schedule.len()];
        let mut u: Vec<f64> = (0..self.len())
            .map(|i| {
                for (j, p) in profiles.iter().enumerate() {
                    col[j] = p[i];
                }
                extrapolate_to_zero(&hs, &col)
            })
            .collect();
        let u0 = self.at_zero(&u);
        u.iter_mut().for_each(|x| *x -= u0);
        self.finish(u, kappa, trace, EigenMethod::Discounted, iterations)
    }

    /// Validator: `φ ← L_A φ / (L_A φ)(0)` carried out on `ln φ`.
    pub fn power_iterate(&self, iters: usize, tol: f64) -> Result<EigenPair, TransferError> {
        let mut v = vec![0.0; self.len()];
        let mut trace = Vec::new();
        let mut last = f64::INFINITY;
        for it in 1..=iters {
            let t = self.step(1.0, &v);
            let c = self.at_zero(&t);
            if !c.is_finite() {
                return Err(TransferError::NonFinite { s: 1.0, iteration: it });
            }
            let mut change: f64 = 0.0;
            for (vi, ti) in v.iter_mut().zip(&t) {
                change = change.max((ti - c - *vi).abs());
                *vi = ti - c;
            }
            let dc = trace.last().map_or(f64::INFINITY, |&(_, p): &(f64, f64)| (c - p).abs());
            trace.push((it as f64, c));
            let floor = 64.0 * f64::EPSILON * (1.0 + c.abs());
            if change.max(dc) <= tol.max(floor) {
                return self.finish(v, c, trace, EigenMethod::Power, it);
            }
            last = change.max(dc);
        }
        Err(TransferError::Stagnation {
            iterations: iters,
            last_change: last,
        })
    }

    fn finish(&self, log_psi: Vec<f64>, kappa: f64, trace: Vec<(f64, f64)>, method: EigenMethod, iterations: usize) -> Result<EigenPair, TransferError> {
        let log_psi = self.template.with_values(log_psi);
        let lambda = kappa.exp();
        let op = TransferOperator::new(&*self.a, &self.m, &self.w);
        // interpolate ln ψ, as the solver does
        let psi_eval = |x: &[f64]| log_psi.eval(x).exp();
        let node_res = par_map(self.len(), |i| {
            let x = log_psi.node(i);
            (op.apply(&psi_eval, &x) - lambda * log_psi.values()[i].exp()).abs()
        });
        let depth = log_psi.rank() + 2;
        let pts = audit_points(&self.m, &self.w, 64, depth, 0x5EED);
        let off = par_map(pts.len(), |i| (op.apply(&psi_eval, &pts[i]) - lambda * psi_eval(&pts[i])).abs());
        Ok(EigenPair {
            lambda,
            kappa,
            kappa_trace: trace,
            residual: off.into_iter().fold(0.0, f64::max),
            residual_nodes: node_res.into_iter().fold(0.0, f64::max),
            method,
            iterations,
            log_psi,
        })
    }
}

/// Hölder bounds for `L_A^n φ` against sampled ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderCertificate {
    pub n: usize,
    pub alpha: f64,
    pub delta: f64,
    /// `Σ_{j ≤ n} d_j^{−α}`.
    pub d_sum: f64,
    pub bound_global: f64,
    pub bound_local: f64,
    pub empirical_ratio: f64,
    pub empirical_ratio_local: f64,
    pub pairs: usize,
    pub local_pairs: usize,
    pub violations_global: usize,
    pub violations_local: usize,
}

impl HolderCertificate {
    pub fn holds(&self) -> bool {
        self.violations_global == 0 && self.violations_local == 0
    }
}

/// `(e^t − 1)/t`, continuous at zero.
fn expm1_ratio(t: f64) -> f64 {
    if t.abs() < 1e-300 {
        1.0
    } else {
        t.exp_m1() / t
    }
}

/// Bounds from the declared constants, then sampled ratios
/// `|L^n φ(x) − L^n φ(y)| / (‖x − y‖^α L^n 1(x))`.
///
/// Each pair integrates against an empirical measure of `samples` draws of
/// `m^n`, shared by `x` and `y`. The bounds hold for every probability `m`,
/// so they must hold for these estimates exactly, not just on average.
#[allow(clippy::too_many_arguments)]
pub fn holder_certificate(
    a: &Potential,
    phi: &Potential,
    space: SpaceKind,
    m: &AprioriMeasure,
    w: &WeightSequence,
    n: usize,
    alpha: f64,
    delta: f64,
    pairs: usize,
    samples: usize,
    seed: u64,
) -> HolderCertificate {
    let d_n_alpha = (-alpha * w.log_d(n)).exp();
    let d_sum: f64 = (1..=n).map(|j| (-alpha * w.log_d(j)).exp()).sum();
    let c_a = a.holder_const(alpha);
    let sup_a = a.sup_bound();
    let lip_phi = phi.holder_const(alpha);
    let sup_phi = phi.sup_bound();
    let bound_global = d_n_alpha * lip_phi + sup_phi * c_a * d_sum * expm1_ratio(2.0 * n as f64 * sup_a);
    let da = delta.powf(alpha);
    let bound_local = d_n_alpha * lip_phi + sup_phi * (c_a * d_sum * da).exp_m1() / da;

    let ab = a.on(space);
    let pb = phi.on(space);
    let op = TransferOperator::new(&ab, m, w);
    let results = par_map(pairs, |i| {
        let mut rng = stream_rng(seed, n as u64, i as u64);
        let len = rng.random_range(1..=6usize);
        let scale = rng.random_range(-3.0..2.0f64).exp();
        let x: Vec<f64> = (0..len).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let local = i % 2 == 0;
        let size = if local {
            delta * rng.random_range(0.01..0.99)
        } else {
            rng.random_range(-6.0..3.0f64).exp()
        };
        let mut y = x.clone();
        y.extend((len..len + rng.random_range(0..3usize)).map(|_| 0.0));
        let dir: Vec<f64> = y.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let dn = space.norm(&dir).max(1e-300);
        for (yi, di) in y.iter_mut().zip(&dir) {
            *yi += size * di / dn;
        }
        let dist = space.diff_norm(&x, &y);
        if dist == 0.0 {
            return None;
        }
        let (mut fx, mut fy, mut one) = (0.0, 0.0, 0.0);
        let mut rs = vec![0.0; n];
        for _ in 0..samples {
            for r in rs.iter_mut() {
                *r = m.sample(&mut rng);
            }
            let (lx, vx) = op.path(&x, &rs);
            let (ly, vy) = op.path(&y, &rs);
            let ex = lx.exp();
            fx += ex * pb.eval(&vx);
            fy += ly.exp() * pb.eval(&vy);
            one += ex;
        }
        let ratio = (fx - fy).abs() / (dist.powf(alpha) * one);
        Some((ratio, dist < delta))
    });
    let mut cert = HolderCertificate {
        n,
        alpha,
        delta,
        d_sum,
        bound_global,
        bound_local,
        empirical_ratio: 0.0,
        empirical_ratio_local: 0.0,
        pairs: 0,
        local_pairs: 0,
        violations_global: 0,
        violations_local: 0,
    };
    let slack = 1.0 + 1e-9;
    for (ratio, is_local) in results.into_iter().flatten() {
        cert.pairs += 1;
        cert.empirical_ratio = cert.empirical_ratio.max(ratio);
        if ratio > bound_global * slack + 1e-12 {
            cert.violations_global += 1;
        }
        if is_local {
            cert.local_pairs += 1;
            cert.empirical_ratio_local = cert.empirical_ratio_local.max(ratio);
            if ratio > bound_local * slack + 1e-12 {
                cert.violations_local += 1;
            }
        }
    }
    cert
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::Builtin;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const L2: SpaceKind = SpaceKind::Lp { p: 2.0 };

    fn two() -> WeightSequence {
        WeightSequence::constant(2.0).unwrap()
    }

    #[test]
    fn apply_examples() {
        let m = AprioriMeasure::standard_gaussian();
        let w = two();
        let zero = Potential::zero();
        let z = zero.on(L2);
        let op = TransferOperator::new(&z, &m, &w);
        let one = |_: &[f64]| 1.0;
        let first = |v: &[f64]| v[0];
        assert!((op.apply(&one, &[0.3, -1.0]) - 1.0).abs() < 1e-12);
        assert!(op.apply(&first, &[0.3, -1.0]).abs() < 1e-12);
        let est = op
            .apply_n(&one, &[0.3], 1, IterationMethod::NestedQuadrature { budget: 100 })
            .unwrap();
        assert_eq!(est.value, op.apply(&one, &[0.3]));
        assert!(matches!(
            op.apply_n(&one, &[0.3], 3, IterationMethod::NestedQuadrature { budget: 100 }),
            Err(TransferError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn normalized_iterates_fix_composed_observables() {
        let m = AprioriMeasure::standard_gaussian();
        let w = two();
        let a = Potential::builtin(
            Builtin::TanhFirstCoord {
                amplitude: 0.8,
                normalized: true,
            },
            L2,
            &m,
        )
        .unwrap();
        let ab = a.on(L2);
        let op = TransferOperator::new(&ab, &m, &w);
        let g = |v: &[f64]| (v.first().copied().unwrap_or(0.0)).sin() + v.get(1).copied().unwrap_or(0.0);
        let n = 2;
        // g ∘ L^n reads coordinates n + 1 and n + 2
        let g_ln = |v: &[f64]| {
            let c = |i: usize| v.get(i).copied().unwrap_or(0.0);
            g(&[4.0 * c(2), 4.0 * c(3)])
        };
        let x = [0.4, -0.7, 1.1];
        let est = op
            .apply_n(&g_ln, &x, n, IterationMethod::NestedQuadrature { budget: 10_000 })
            .unwrap();
        assert_relative_eq!(est.value, g(&x), epsilon = 1e-12);
        let one = |_: &[f64]| 1.0;
        let mc = op
            .apply_n(&one, &x, 3, IterationMethod::MonteCarlo { samples: 20_000, seed: 3 })
            .unwrap();
        assert!((mc.value - 1.0).abs() < 5.0 * mc.stderr + 1e-12, "{mc:?}");
    }

    #[test]
    fn discounted_step_examples() {
        let m = AprioriMeasure::standard_gaussian();
        let w = two();
        let c = Potential::constant(0.7);
        let solver = GridSolver::new(c.on(L2), 2, &m, &w, &GridSpec::default()).unwrap();
        let u = GridFunction::from_values(solver.axes().to_vec(), vec![0.0; solver.len()]).unwrap();
        let t = solver.discounted_step(0.5, &u);
        assert!(t.values().iter().all(|v| (v - 0.7).abs() < 1e-14));
        let sol = solver.solve_discounted(0.9, 1e-12, 1000).unwrap();
        assert!(sol.u.values().iter().all(|v| (v - 7.0).abs() < 1e-10));

        let zero = Potential::zero();
        let solver = GridSolver::new(zero.on(L2), 1, &m, &w, &GridSpec::default()).unwrap();
        let sol = solver.solve_discounted(0.99, 1e-12, 1000).unwrap();
        assert!(sol.u.values().iter().all(|v| v.abs() < 1e-12));
    }

    fn chain(m: &AprioriMeasure) -> Potential {
        Potential::builtin(
            Builtin::TanhChain {
                fields: vec![0.4, -0.3],
                couplings: vec![0.6],
            },
            L2,
            m,
        )
        .unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn discounted_step_contracts(s in 0.05f64..0.999, seed in 0u64..1000) {
            let m = AprioriMeasure::standard_gaussian();
            let w = two();
            let a = chain(&m);
            let spec = GridSpec { size: 21, ..GridSpec::default() };
            let solver = GridSolver::new(a.on(L2), 2, &m, &w, &spec).unwrap();
            let mut rng = stream_rng(seed, 0, 0);
            let u1: Vec<f64> = (0..solver.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
            let u2: Vec<f64> = (0..solver.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
            let d0 = u1.iter().zip(&u2).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            let t1 = solver.step(s, &u1);
            let t2 = solver.step(s, &u2);
            let d1 = t1.iter().zip(&t2).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            prop_assert!(d1 <= s * d0 * (1.0 + 1e-12) + 1e-14);
        }

        #[test]
        fn operator_is_positive_and_monotone(x0 in -3.0f64..3.0, x1 in -3.0f64..3.0, shift in 0.0f64..2.0) {
            let m = AprioriMeasure::standard_gaussian();
            let w = two();
            let a = chain(&m);
            let ab = a.on(L2);
            let op = TransferOperator::new(&ab, &m, &w);
            let phi = |v: &[f64]| v[0].cos().abs();
            let psi = |v: &[f64]| v[0].cos().abs() + shift;
            let x = [x0, x1];
            let (lp, lq) = (op.apply(&phi, &x), op.apply(&psi, &x));
            prop_assert!(lp >= 0.0 && lq >= lp);
            let one = op.apply(&|_: &[f64]| 1.0, &x);
            let s = a.sup_bound();
            prop_assert!(one <= s.exp() * (1.0 + 1e-12) && one >= (-s).exp() * (1.0 - 1e-12));
        }
    }

    #[test]
    fn eigenpair_examples() {
        let m = AprioriMeasure::standard_gaussian();
        let w = two();
        let cfg = EigenConfig::default();
        let zero = Potential::zero();
        let solver = GridSolver::new(zero.on(L2), 3, &m, &w, &GridSpec { size: 31, ..GridSpec::default() }).unwrap();
        for ep in [
            solver.eigenpair(&cfg.s_schedule, cfg.tol, cfg.max_iters).unwrap(),
            solver.power_iterate(1000, 1e-13).unwrap(),
        ] {
            assert!((ep.lambda - 1.0).abs() < 1e-12);
            assert!(ep.log_psi.values().iter().all(|v| v.abs() < 1e-12));
        }

        let q = Potential::builtin(Builtin::QuadraticFirstCoord { coef: -0.25 }, L2, &m).unwrap();
        let solver = GridSolver::for_potential(&q, L2, &m, &w, &cfg).unwrap();
        let ep = solver.eigenpair(&cfg.s_schedule, cfg.tol, cfg.max_iters).unwrap();
        assert_relative_eq!(ep.lambda, (2.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        assert!(ep.residual < 1e-12);
    }

    #[test]
    fn eigenpair_agrees_with_power_iteration() {
        let m = AprioriMeasure::standard_gaussian();
        let w = WeightSequence::constant(1.5).unwrap();
        let a = chain(&m);
        let cfg = EigenConfig {
            grid: GridSpec { size: 61, ..GridSpec::default() },
            ..EigenConfig::default()
        };
        let solver = GridSolver::for_potential(&a, L2, &m, &w, &cfg).unwrap();
        let ep = solver.eigenpair(&cfg.s_schedule, cfg.tol, cfg.max_iters).unwrap();
        let pw = solver.power_iterate(5000, 1e-13).unwrap();
        assert!((ep.lambda - pw.lambda).abs() < 1e-8, "{} vs {}", ep.lambda, pw.lambda);
        let gap = ep
            .log_psi
            .values()
            .iter()
            .zip(pw.log_psi.values())
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(gap < 1e-7, "ψ gap {gap}");
        assert!(ep.residual_nodes < 1e-8 * ep.lambda.max(1.0), "{}", ep.residual_nodes);
        assert!(ep.log_psi.eval(&[]).abs() < 1e-14);
    }

    #[test]
    fn bad_schedule_rejected() {
        let m = AprioriMeasure::standard_gaussian();
        let z = Potential::zero();
        let solver = GridSolver::new(z.on(L2), 1, &m, &two(), &GridSpec::default()).unwrap();
        assert!(matches!(solver.eigenpair(&[0.9, 0.5], 1e-10, 10), Err(TransferError::InvalidSchedule(_))));
    }

    #[test]
    fn holder_certificate_examples() {
        let m = AprioriMeasure::standard_gaussian();
        let w = two();
        let one = Potential::constant(1.0);
        let a = chain(&m);
        // L^n 1 ≡ 1 for a normalized potential
        let t = Potential::builtin(Builtin::TanhFirstCoord { amplitude: 0.9, normalized: true }, L2, &m).unwrap();
        let c = holder_certificate(&t, &one, L2, &m, &w, 2, 1.0, 0.5, 200, 32, 1);
        assert_eq!(c.empirical_ratio, 0.0);
        assert!(c.holds());

        // reads the coordinate that x_1 lands on after two preimages
        let lin = Potential::builtin(
            Builtin::TanhChain {
                fields: vec![0.0, 0.0, 1.0],
                couplings: vec![],
            },
            L2,
            &m,
        )
        .unwrap();
        let z = Potential::zero();
        let c = holder_certificate(&z, &lin, L2, &m, &w, 2, 1.0, 0.5, 400, 16, 2);
        assert_relative_eq!(c.bound_global, 0.25, epsilon = 1e-15);
        assert!(c.holds() && c.empirical_ratio > 0.0);

        let c = holder_certificate(&a, &lin, L2, &m, &w, 2, 1.0, 0.5, 2000, 32, 3);
        assert!(c.holds(), "{c:?}");
    }
}
