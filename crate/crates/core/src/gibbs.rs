//! Particle approximation of the dual operator `L_Ā*` and of its fixed
//! point, the Gibbs measure, with invariance, mixing and support probes.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::apriori::AprioriMeasure;
use crate::potential::{audit_points, is_normalized, Observable};
use crate::space::{preimage_into, shift_into, MetricSpec, SpaceKind};
use crate::util::{pairwise_sum, par_map, stream_rng};
use crate::wasserstein::{w1_exact, WassersteinError};
use crate::weights::WeightSequence;

#[derive(Debug, Error)]
pub enum GibbsError {
    #[error("potential is not normalized: max |L(1) − 1| = {residual:e} exceeds {tol:e}")]
    NotNormalized { residual: f64, tol: f64 },
    #[error("candidate count must be at least 1")]
    NoCandidates,
    #[error("empty particle cloud")]
    Empty,
    #[error(transparent)]
    Wasserstein(#[from] WassersteinError),
}

/// Equally weighted particles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub particles: Vec<Vec<f64>>,
    pub space: SpaceKind,
    pub generation: u64,
    /// Seed of the streams that produced the current generation.
    pub seed_lineage: Vec<u64>,
    /// Largest norm of the coordinates dropped by truncation so far.
    pub max_dropped_tail: f64,
}

impl EmpiricalMeasure {
    pub fn new(particles: Vec<Vec<f64>>, space: SpaceKind) -> Self {
        EmpiricalMeasure {
            particles,
            space,
            generation: 0,
            seed_lineage: vec![],
            max_dropped_tail: 0.0,
        }
    }

    /// `n` copies of `x`.
    pub fn dirac(x: &[f64], n: usize, space: SpaceKind) -> Self {
        Self::new(vec![x.to_vec(); n], space)
    }

    /// Particles with `depth` coordinates uniform on `[−scale, scale]`.
    pub fn uniform_box(n: usize, depth: usize, scale: f64, space: SpaceKind, seed: u64) -> Self {
        let particles = par_map(n, |i| {
            let mut rng = stream_rng(seed, u64::MAX, i as u64);
            (0..depth).map(|_| rng.random_range(-scale..=scale)).collect()
        });
        let mut mu = Self::new(particles, space);
        mu.seed_lineage.push(seed);
        mu
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// The first `k` particles (all if fewer).
    pub fn head(&self, k: usize) -> &[Vec<f64>] {
        &self.particles[..k.min(self.len())]
    }

    /// Sample mean and standard error of `f`.
    pub fn mean_of<F: Observable + ?Sized>(&self, f: &F) -> (f64, f64) {
        let v: Vec<f64> = par_map(self.len(), |i| f.eval(&self.particles[i]));
        mean_stderr(&v)
    }

    /// `L#μ`: every particle mapped by the shift.
    pub fn shifted(&self, w: &WeightSequence) -> EmpiricalMeasure {
        let particles = par_map(self.len(), |i| {
            let mut out = Vec::new();
            shift_into(w, &self.particles[i], &mut out);
            out
        });
        EmpiricalMeasure {
            particles,
            ..self.clone()
        }
    }
}

pub(crate) fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = pairwise_sum(v) / n;
    let sq: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = if v.len() > 1 { pairwise_sum(&sq) / (n - 1.0) } else { 0.0 };
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GibbsConfig {
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default = "default_iters")]
    pub iters: usize,
    #[serde(default = "default_candidates")]
    pub candidates: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Coordinates kept per particle.
    #[serde(default = "default_depth")]
    pub max_depth: usize,
    /// Particles used for each W̃ evaluation in the traces.
    #[serde(default = "default_subsample")]
    pub trace_subsample: usize,
    #[serde(default = "default_every")]
    pub trace_every: usize,
    /// Tolerance on `max |L(1) − 1|` before sampling starts.
    #[serde(default = "default_norm_tol")]
    pub normalization_tol: f64,
}

fn default_particles() -> usize {
    10_000
}
fn default_iters() -> usize {
    30
}
fn default_candidates() -> usize {
    32
}
fn default_depth() -> usize {
    48
}
fn default_subsample() -> usize {
    512
}
fn default_every() -> usize {
    5
}
fn default_norm_tol() -> f64 {
    1e-6
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            particles: default_particles(),
            iters: default_iters(),
            candidates: default_candidates(),
            seed: None,
            max_depth: default_depth(),
            trace_subsample: default_subsample(),
            trace_every: default_every(),
            normalization_tol: default_norm_tol(),
        }
    }
}

/// One step of `L_Ā*` per call. Each particle `x` draws `K` candidates
/// `r_j ~ m` and moves to the preimage `(r_j, x/α)` chosen with probability
/// proportional to `e^{Ā}` there.
pub struct GibbsSampler<'a> {
    abar: &'a (dyn Observable + 'a),
    m: &'a AprioriMeasure,
    w: &'a WeightSequence,
    space: SpaceKind,
    candidates: usize,
    max_depth: usize,
    seed: u64,
    residual: f64,
}

impl<'a> GibbsSampler<'a> {
    /// Audits `max |L_Ā(1) − 1|` on random points before accepting `Ā`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        abar: &'a (dyn Observable + 'a),
        m: &'a AprioriMeasure,
        w: &'a WeightSequence,
        space: SpaceKind,
        candidates: usize,
        max_depth: usize,
        seed: u64,
        tol: f64,
    ) -> Result<Self, GibbsError> {
        if candidates == 0 {
            return Err(GibbsError::NoCandidates);
        }
        let pts = audit_points(m, w, 32, 4, 0xA11D);
        let residual = is_normalized(abar, w, m, &pts);
        if !(residual <= tol) {
            return Err(GibbsError::NotNormalized { residual, tol });
        }
        Ok(GibbsSampler {
            abar,
            m,
            w,
            space,
            candidates,
            max_depth: max_depth.max(1),
            seed,
            residual,
        })
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> &WeightSequence {
        self.w
    }

    pub fn space(&self) -> SpaceKind {
        self.space
    }

    /// Same sampler with another seed.
    pub fn reseeded(&self, seed: u64) -> Self {
        GibbsSampler { seed, ..*self }
    }

    pub fn push(&self, mu: &EmpiricalMeasure) -> EmpiricalMeasure {
        self.push_traced(mu).0
    }

    /// As [`GibbsSampler::push`], exposing the chosen `r` per particle.
    pub fn push_traced(&self, mu: &EmpiricalMeasure) -> (EmpiricalMeasure, Vec<f64>) {
        let gen = mu.generation + 1;
        let out = par_map(mu.len(), |i| self.move_particle(&mu.particles[i], gen, i));
        self.collect(mu, gen, out)
    }

    fn move_particle(&self, x: &[f64], gen: u64, i: usize) -> (Vec<f64>, f64, f64) {
        let mut rng = stream_rng(self.seed, gen, i as u64);
        let k = self.candidates;
        let mut rs = Vec::with_capacity(k);
        let mut logw = Vec::with_capacity(k);
        let mut pre = Vec::with_capacity(x.len() + 1);
        for _ in 0..k {
            let r = self.m.sample(&mut rng);
            preimage_into(self.w, x, r, self.max_depth, self.space, &mut pre);
            logw.push(self.abar.eval(&pre));
            rs.push(r);
        }
        let mx = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let pick = if k == 1 {
            0
        } else {
            let ws: Vec<f64> = logw.iter().map(|l| (l - mx).exp()).collect();
            let total: f64 = ws.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut j = 0;
            while j + 1 < k && u >= ws[j] {
                u -= ws[j];
                j += 1;
            }
            j
        };
        let dropped = preimage_into(self.w, x, rs[pick], self.max_depth, self.space, &mut pre);
        (pre, dropped, rs[pick])
    }

    fn collect(&self, mu: &EmpiricalMeasure, gen: u64, out: Vec<(Vec<f64>, f64, f64)>) -> (EmpiricalMeasure, Vec<f64>) {
        let mut particles = Vec::with_capacity(out.len());
        let mut draws = Vec::with_capacity(out.len());
        let mut dropped: f64 = mu.max_dropped_tail;
        for (p, d, r) in out {
            particles.push(p);
            dropped = dropped.max(d);
            draws.push(r);
        }
        let mut lineage = mu.seed_lineage.clone();
        if lineage.last() != Some(&self.seed) {
            lineage.push(self.seed);
        }
        (
            EmpiricalMeasure {
                particles,
                space: mu.space,
                generation: gen,
                seed_lineage: lineage,
                max_dropped_tail: dropped,
            },
            draws,
        )
    }

    /// `n` pushes.
    pub fn push_n(&self, mu: &EmpiricalMeasure, n: usize) -> EmpiricalMeasure {
        let mut cur = mu.clone();
        for _ in 0..n {
            cur = self.push(&cur);
        }
        cur
    }
}

/// W̃ trace settings for [`iterate_to_gibbs`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    pub metric: MetricSpec,
    pub subsample: usize,
    pub every: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GibbsRunReport {
    pub generations: usize,
    /// `(k, W̃(μ_{k−1}, μ_k))`.
    pub w_trace: Vec<(usize, f64)>,
    /// `(k, W̃(μ_k, μ'_k))` between the two initializations.
    pub pair_trace: Vec<(usize, f64)>,
    pub normalization_residual: f64,
    pub max_dropped_tail: f64,
    #[serde(skip)]
    pub cloud: EmpiricalMeasure,
    #[serde(skip)]
    pub cloud_prime: Option<EmpiricalMeasure>,
}

/// Iterates `L_Ā*` from `nu0` and, if given, from `nu0_prime` with an
/// independent seed, recording W̃ between successive iterates and between
/// the two chains.
pub fn iterate_to_gibbs(
    sampler: &GibbsSampler<'_>,
    nu0: &EmpiricalMeasure,
    nu0_prime: Option<&EmpiricalMeasure>,
    n_iters: usize,
    trace: TraceConfig,
) -> Result<GibbsRunReport, GibbsError> {
    if nu0.is_empty() {
        return Err(GibbsError::Empty);
    }
    let second = sampler.reseeded(sampler.seed() ^ 0x5DEE_CE66_D1CE_5EED);
    let every = trace.every.max(1);
    let mut cur = nu0.clone();
    let mut other = nu0_prime.cloned();
    let mut w_trace = Vec::new();
    let mut pair_trace = Vec::new();
    let sub = trace.subsample;
    let w_of = |a: &EmpiricalMeasure, b: &EmpiricalMeasure| -> Result<f64, GibbsError> {
        Ok(w1_exact(a.head(sub), b.head(sub), trace.metric, a.space)?.cost)
    };
    if let Some(o) = &other {
        pair_trace.push((0, w_of(&cur, o)?));
    }
    for k in 1..=n_iters {
        let next = sampler.push(&cur);
        if k % every == 0 || k == n_iters {
            w_trace.push((k, w_of(&cur, &next)?));
        }
        cur = next;
        if let Some(o) = other.take() {
            let o = second.push(&o);
            if k % every == 0 || k == n_iters {
                pair_trace.push((k, w_of(&cur, &o)?));
            }
            other = Some(o);
        }
    }
    Ok(GibbsRunReport {
        generations: n_iters,
        w_trace,
        pair_trace,
        normalization_residual: sampler.residual(),
        max_dropped_tail: cur.max_dropped_tail,
        cloud: cur,
        cloud_prime: other,
    })
}

/// `W̃(L#μ̂, μ̂)` on the first `subsample` particles.
pub fn invariance_gap(mu: &EmpiricalMeasure, w: &WeightSequence, metric: MetricSpec, subsample: usize) -> Result<f64, GibbsError> {
    let head = EmpiricalMeasure::new(mu.head(subsample).to_vec(), mu.space);
    let shifted = head.shifted(w);
    Ok(w1_exact(&shifted.particles, &head.particles, metric, mu.space)?.cost)
}

/// `|mean(f · g∘L^n) − mean(f) mean(g)|` over the particles.
pub fn mixing_correlation<F, G>(mu: &EmpiricalMeasure, w: &WeightSequence, f: &F, g: &G, n: usize) -> f64
where
    F: Observable + ?Sized,
    G: Observable + ?Sized,
{
    let vals = par_map(mu.len(), |i| {
        let x = &mu.particles[i];
        let mut y = x.clone();
        let mut buf = Vec::new();
        for _ in 0..n {
            shift_into(w, &y, &mut buf);
            std::mem::swap(&mut y, &mut buf);
        }
        (f.eval(x), g.eval(&y))
    });
    let fs: Vec<f64> = vals.iter().map(|v| v.0).collect();
    let gs: Vec<f64> = vals.iter().map(|v| v.1).collect();
    let fg: Vec<f64> = vals.iter().map(|v| v.0 * v.1).collect();
    let k = mu.len() as f64;
    (pairwise_sum(&fg) / k - pairwise_sum(&fs) / k * pairwise_sum(&gs) / k).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportProbe {
    /// Fraction of particles within `ε` of `x` in the norm.
    pub hit_fraction: f64,
    /// Fraction whose first coordinate lies in `[x_1 − ε, x_1 + ε]`.
    pub cylinder_fraction: f64,
    pub cylinder_stderr: f64,
    /// `e^{inf Ā} m([x_1 − ε, x_1 + ε])`.
    pub lower_bound: f64,
}

pub fn support_probe(mu: &EmpiricalMeasure, x: &[f64], eps: f64, m: &AprioriMeasure, inf_abar: f64) -> SupportProbe {
    let x1 = x.first().copied().unwrap_or(0.0);
    let n = mu.len() as f64;
    let hits = mu.particles.iter().filter(|p| mu.space.diff_norm(p, x) < eps).count() as f64;
    let cyl = mu
        .particles
        .iter()
        .filter(|p| (p.first().copied().unwrap_or(0.0) - x1).abs() <= eps)
        .count() as f64;
    let p = cyl / n;
    SupportProbe {
        hit_fraction: hits / n,
        cylinder_fraction: p,
        cylinder_stderr: (p * (1.0 - p) / n).sqrt(),
        lower_bound: inf_abar.exp() * m.interval_mass(x1 - eps, x1 + eps),
    }
}
