//! Potentials `A: X → ℝ`, their regularity data, variations and the
//! normalization `Ā = A + ln ψ − ln ψ∘L − ln λ`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::apriori::AprioriMeasure;
use crate::grid::{Axis, GridError, GridFunction};
use crate::space::SpaceKind;
use crate::util::{par_map, stream_rng, Verdict};
use crate::weights::WeightSequence;

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("eigenfunction is not strictly positive at grid node {index} (value {value})")]
    NonpositiveEigenfunction { index: usize, value: f64 },
    #[error("eigenvalue must be positive, got {0}")]
    NonpositiveEigenvalue(f64),
    #[error("|A(x)| = {value} exceeds the declared bound {bound}")]
    BoundViolated { value: f64, bound: f64 },
    #[error("invalid potential: {0}")]
    Invalid(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Anything that can be evaluated on a truncated point.
pub trait Observable: Sync {
    fn eval(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64 + Sync> Observable for F {
    fn eval(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Named potentials available from configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "snake_case")]
pub enum Builtin {
    Zero,
    Constant {
        value: f64,
    },
    /// `coef · x_1²`. Unbounded unless `coef = 0`.
    QuadraticFirstCoord {
        coef: f64,
    },
    /// `amplitude · tanh(x_1)`, shifted by `−ln ∫ e^{amplitude·tanh} dm` when
    /// `normalized` is set.
    TanhFirstCoord {
        amplitude: f64,
        #[serde(default)]
        normalized: bool,
    },
    /// `Σ h_i tanh(x_i) + Σ J_i tanh(x_i) tanh(x_{i+1})`, rank `len(fields)`.
    TanhChain {
        fields: Vec<f64>,
        #[serde(default)]
        couplings: Vec<f64>,
    },
    /// `arctan ‖x‖`: bounded and Lipschitz, without summable variation.
    ArctanNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableAxis {
    #[serde(default)]
    pub nodes: Option<Vec<f64>>,
    #[serde(default)]
    pub half_width: Option<f64>,
    #[serde(default)]
    pub size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    pub axes: Vec<TableAxis>,
    /// Row-major values, last axis fastest.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    Builtin {
        #[serde(flatten)]
        builtin: Builtin,
        #[serde(default)]
        offset: f64,
    },
    /// Multilinear table over the first `rank` coordinates.
    Cylinder {
        rank: usize,
        table: TableSpec,
        #[serde(default)]
        offset: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Declared,
    Estimated,
}

type Custom = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum PotentialKind {
    Builtin(Builtin),
    Table(GridFunction),
    Custom(Custom),
}

impl fmt::Debug for PotentialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialKind::Builtin(b) => write!(f, "{b:?}"),
            PotentialKind::Table(g) => write!(f, "Table(rank {})", g.rank()),
            PotentialKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// A potential with its regularity data.
///
/// `lip_const` is the Lipschitz constant for `‖·‖_X`, i.e. the Hölder
/// constant at exponent one; [`Potential::holder_const`] converts it.
#[derive(Debug, Clone)]
pub struct Potential {
    kind: PotentialKind,
    offset: f64,
    rank: Option<usize>,
    sup_bound: f64,
    inf_bound: f64,
    lip_const: f64,
    provenance: Provenance,
}

impl Potential {
    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(value: f64) -> Self {
        Potential {
            kind: PotentialKind::Builtin(Builtin::Constant { value }),
            offset: 0.0,
            rank: Some(0),
            sup_bound: value.abs(),
            inf_bound: value,
            lip_const: 0.0,
            provenance: Provenance::Declared,
        }
    }

    /// Builds a named potential. `space` fixes the Lipschitz constants,
    /// `m` is only used by self-normalizing builtins.
    pub fn builtin(b: Builtin, space: SpaceKind, m: &AprioriMeasure) -> Result<Self, PotentialError> {
        let (rank, sup, inf, lip, offset) = match &b {
            Builtin::Zero => (Some(0), 0.0, 0.0, 0.0, 0.0),
            Builtin::Constant { value } => (Some(0), value.abs(), *value, 0.0, 0.0),
            Builtin::QuadraticFirstCoord { coef } => {
                let (sup, inf) = if *coef == 0.0 {
                    (0.0, 0.0)
                } else if *coef < 0.0 {
                    (f64::INFINITY, f64::NEG_INFINITY)
                } else {
                    (f64::INFINITY, 0.0)
                };
                let lip = if *coef == 0.0 { 0.0 } else { f64::INFINITY };
                (Some(1), sup, inf, lip, 0.0)
            }
            Builtin::TanhFirstCoord { amplitude, normalized } => {
                let a = *amplitude;
                let shift = if *normalized {
                    -m.integration_rule().integrate(|r| (a * r.tanh()).exp()).ln()
                } else {
                    0.0
                };
                (Some(1), a.abs() + shift.abs(), -a.abs() + shift, a.abs(), shift)
            }
            Builtin::TanhChain { fields, couplings } => {
                if fields.is_empty() || couplings.len() + 1 > fields.len().max(1) {
                    return Err(PotentialError::Invalid(
                        "tanh_chain needs ≥ 1 field and at most len(fields) − 1 couplings".into(),
                    ));
                }
                let n = fields.len();
                let c: Vec<f64> = (0..n)
                    .map(|i| {
                        let left = if i > 0 { couplings.get(i - 1).copied().unwrap_or(0.0) } else { 0.0 };
                        let right = couplings.get(i).copied().unwrap_or(0.0);
                        fields[i].abs() + left.abs() + right.abs()
                    })
                    .collect();
                let s: f64 = fields.iter().chain(couplings).map(|v| v.abs()).sum();
                (Some(n), s, -s, space.dual_norm(&c), 0.0)
            }
            Builtin::ArctanNorm => (None, std::f64::consts::FRAC_PI_2, 0.0, 1.0, 0.0),
        };
        Ok(Potential {
            kind: PotentialKind::Builtin(b),
            offset,
            rank,
            sup_bound: sup,
            inf_bound: inf,
            lip_const: lip,
            provenance: Provenance::Declared,
        })
    }

    pub fn from_spec(spec: &PotentialSpec, space: SpaceKind, m: &AprioriMeasure) -> Result<Self, PotentialError> {
        match spec {
            PotentialSpec::Builtin { builtin, offset } => Ok(Self::builtin(builtin.clone(), space, m)?.shifted(*offset)),
            PotentialSpec::Cylinder { rank, table, offset } => {
                if *rank != table.axes.len() {
                    return Err(PotentialError::Invalid(format!(
                        "cylinder rank {rank} but table has {} axes",
                        table.axes.len()
                    )));
                }
                let axes = table
                    .axes
                    .iter()
                    .map(|a| match (a.nodes.as_ref(), a.half_width, a.size) {
                        (Some(n), _, _) => Axis::from_nodes(n.clone()).map_err(PotentialError::from),
                        (None, Some(r), Some(s)) if r > 0.0 && s >= 2 => Ok(Axis::uniform(r, s)),
                        _ => Err(PotentialError::Invalid(
                            "table axis needs `nodes` or `half_width` with `size ≥ 2`".into(),
                        )),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let grid = GridFunction::from_values(axes, table.values.clone())?;
                Ok(Self::table(grid, space).shifted(*offset))
            }
        }
    }

    /// Piecewise multilinear potential. Its Lipschitz constant is the dual
    /// norm of the per-axis maximal slopes, exact for such functions.
    pub fn table(grid: GridFunction, space: SpaceKind) -> Self {
        let vals = grid.values();
        let sup = vals.iter().fold(0.0, |m, v| f64::max(m, v.abs()));
        let inf = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let slopes: Vec<f64> = (0..grid.rank())
            .map(|d| {
                let mut worst: f64 = 0.0;
                #[allow(clippy::needless_range_loop)]
                for i in 0..grid.len() {
                    let x = grid.node(i);
                    let nodes = grid.axes()[d].nodes();
                    let j = nodes.iter().position(|&v| v == x[d]).expect("node on axis");
                    if j + 1 < nodes.len() {
                        let mut y = x.clone();
                        y[d] = nodes[j + 1];
                        let dv = (grid.eval(&y) - vals[i]).abs();
                        worst = worst.max(dv / (nodes[j + 1] - nodes[j]));
                    }
                }
                worst
            })
            .collect();
        Potential {
            rank: Some(grid.rank()),
            kind: PotentialKind::Table(grid),
            offset: 0.0,
            sup_bound: sup,
            inf_bound: inf,
            lip_const: space.dual_norm(&slopes),
            provenance: Provenance::Estimated,
        }
    }

    /// A potential from a closure with declared metadata.
    pub fn from_fn<F>(f: F, rank: Option<usize>, sup_bound: f64, inf_bound: f64, lip_const: f64) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Potential {
            kind: PotentialKind::Custom(Arc::new(f)),
            offset: 0.0,
            rank,
            sup_bound,
            inf_bound,
            lip_const,
            provenance: Provenance::Declared,
        }
    }

    /// `A + c`.
    pub fn shifted(mut self, c: f64) -> Self {
        self.offset += c;
        self.inf_bound += c;
        self.sup_bound = f64::max((self.sup_bound + c.abs()).min(f64::INFINITY), 0.0);
        if let (true, PotentialKind::Builtin(Builtin::Constant { value })) = (c != 0.0, &self.kind) {
            self.sup_bound = (value + self.offset).abs();
        }
        self
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    /// Number of leading coordinates the potential depends on; `None` if it
    /// depends on all of them.
    pub fn rank(&self) -> Option<usize> {
        self.rank
    }

    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn inf_bound(&self) -> f64 {
        self.inf_bound
    }

    pub fn lip_const(&self) -> f64 {
        self.lip_const
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn is_bounded(&self) -> bool {
        self.sup_bound.is_finite()
    }

    /// Hölder constant for `‖·‖^α`: from `|A(x) − A(y)| ≤ min{osc, L·d}`,
    /// with `osc ≤ 2 sup|A|`, one gets `≤ osc^{1−α} L^α d^α`.
    pub fn holder_const(&self, alpha: f64) -> f64 {
        if alpha >= 1.0 || self.lip_const == 0.0 {
            return self.lip_const;
        }
        let osc = 2.0 * self.sup_bound;
        osc.powf(1.0 - alpha) * self.lip_const.powf(alpha)
    }

    fn raw(&self, x: &[f64], space: SpaceKind) -> f64 {
        let at = |i: usize| x.get(i).copied().unwrap_or(0.0);
        match &self.kind {
            PotentialKind::Builtin(b) => match b {
                Builtin::Zero => 0.0,
                Builtin::Constant { value } => *value,
                Builtin::QuadraticFirstCoord { coef } => coef * at(0) * at(0),
                Builtin::TanhFirstCoord { amplitude, .. } => amplitude * at(0).tanh(),
                Builtin::TanhChain { fields, couplings } => {
                    let t: Vec<f64> = (0..fields.len()).map(|i| at(i).tanh()).collect();
                    let mut s = 0.0;
                    for (i, h) in fields.iter().enumerate() {
                        s += h * t[i];
                    }
                    for (i, j) in couplings.iter().enumerate() {
                        s += j * t[i] * t[i + 1];
                    }
                    s
                }
                Builtin::ArctanNorm => space.norm(x).atan(),
            },
            PotentialKind::Table(g) => g.eval(x),
            PotentialKind::Custom(f) => f(x),
        }
    }

    /// Bind the space needed by norm-dependent potentials.
    pub fn on(&self, space: SpaceKind) -> BoundPotential<'_> {
        BoundPotential { potential: self, space }
    }

    /// Evaluation for potentials that do not depend on the norm; panics for
    /// norm-based ones, which must go through [`Potential::on`].
    pub fn eval_coords(&self, x: &[f64]) -> f64 {
        assert!(
            !matches!(self.kind, PotentialKind::Builtin(Builtin::ArctanNorm)),
            "norm-based potential needs a space; use Potential::on"
        );
        self.raw(x, SpaceKind::C0) + self.offset
    }

    /// Randomized audit of `|A(x)| ≤ sup_bound`.
    pub fn audit_bounds(&self, space: SpaceKind, samples: usize, seed: u64) -> Result<(), PotentialError> {
        let bound = self.sup_bound;
        if !bound.is_finite() {
            return Ok(());
        }
        let mut rng = stream_rng(seed, 0, 0);
        for _ in 0..samples {
            let (x, _) = heavy_pair(&mut rng, 0);
            let v = self.on(space).eval(&x);
            if v.abs() > bound * (1.0 + 1e-12) + 1e-300 {
                return Err(PotentialError::BoundViolated { value: v, bound });
            }
        }
        Ok(())
    }

    /// Monte-Carlo lower estimate of `V_n(A) = sup{|A(x) − A(y)| : x_i = y_i, i ≤ n}`.
    /// Exact zero once `n` reaches the rank.
    pub fn variation(&self, space: SpaceKind, n: usize, samples: usize, seed: u64) -> f64 {
        if self.rank.is_some_and(|r| n >= r) {
            return 0.0;
        }
        let chunks = 64usize;
        let per = samples.div_ceil(chunks);
        let maxes = par_map(chunks, |c| {
            let mut rng = stream_rng(seed, n as u64, c as u64);
            let mut best: f64 = 0.0;
            for _ in 0..per {
                let (x, y) = heavy_pair(&mut rng, n);
                let a = self.on(space);
                best = best.max((a.eval(&x) - a.eval(&y)).abs());
            }
            best
        });
        maxes.into_iter().fold(0.0, f64::max)
    }

    /// Partial sums of variation estimates. Finite-rank potentials hold
    /// automatically; otherwise `Fails` needs the partial sum to pass
    /// `divergence_threshold`.
    pub fn summable_variation_check(
        &self,
        space: SpaceKind,
        horizon: usize,
        samples: usize,
        seed: u64,
        divergence_threshold: f64,
    ) -> VariationReport {
        let terms: Vec<f64> = (1..=horizon).map(|n| self.variation(space, n, samples, seed)).collect();
        let partial: f64 = terms.iter().sum();
        let verdict = if self.rank.is_some() {
            Verdict::Holds
        } else if partial > divergence_threshold {
            Verdict::Fails
        } else {
            Verdict::Inconclusive
        };
        VariationReport {
            terms,
            partial_v: partial,
            verdict,
        }
    }
}

/// A potential bound to a space.
#[derive(Clone, Copy)]
pub struct BoundPotential<'a> {
    potential: &'a Potential,
    space: SpaceKind,
}

impl Observable for BoundPotential<'_> {
    fn eval(&self, x: &[f64]) -> f64 {
        self.potential.raw(x, self.space) + self.potential.offset
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationReport {
    pub terms: Vec<f64>,
    pub partial_v: f64,
    pub verdict: Verdict,
}

/// Random pair agreeing on the first `n` coordinates. Magnitudes are
/// log-uniform over many decades so that both tiny and huge tails occur.
fn heavy_pair<R: Rng>(rng: &mut R, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mag = |rng: &mut R, lo: f64, hi: f64| {
        let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        s * rng.random_range(lo..hi).exp()
    };
    let prefix_scale = rng.random_range(-8.0..2.0f64);
    let prefix: Vec<f64> = (0..n).map(|_| mag(rng, prefix_scale - 2.0, prefix_scale)).collect();
    let lx = rng.random_range(1..=8usize);
    let ly = rng.random_range(1..=8usize);
    let (sx, sy) = (rng.random_range(-8.0..14.0f64), rng.random_range(-8.0..14.0f64));
    let mut x = prefix.clone();
    x.extend((0..lx).map(|_| mag(rng, sx - 1.0, sx)));
    let mut y = prefix;
    y.extend((0..ly).map(|_| mag(rng, sy - 1.0, sy)));
    (x, y)
}

/// `Ā = A + u − u∘L − ln λ` with `u = ln ψ` stored on a grid.
#[derive(Debug, Clone)]
pub struct NormalizedPotential {
    base: Potential,
    space: SpaceKind,
    log_psi: GridFunction,
    log_lambda: f64,
    weights: WeightSequence,
}

impl NormalizedPotential {
    /// Normalize with an eigenfunction `ψ > 0` and eigenvalue `λ > 0`.
    pub fn new(
        base: Potential,
        space: SpaceKind,
        psi: &GridFunction,
        lambda: f64,
        weights: WeightSequence,
    ) -> Result<Self, PotentialError> {
        if let Some((index, &value)) = psi.values().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(PotentialError::NonpositiveEigenfunction { index, value });
        }
        if !(lambda > 0.0) {
            return Err(PotentialError::NonpositiveEigenvalue(lambda));
        }
        Ok(Self::from_log(base, space, psi.map(f64::ln), lambda.ln(), weights))
    }

    /// As [`NormalizedPotential::new`] with `ln ψ` and `ln λ` given directly.
    pub fn from_log(
        base: Potential,
        space: SpaceKind,
        log_psi: GridFunction,
        log_lambda: f64,
        weights: WeightSequence,
    ) -> Self {
        NormalizedPotential {
            base,
            space,
            log_psi,
            log_lambda,
            weights,
        }
    }

    /// Treat an already normalized potential as its own normalization.
    pub fn identity(base: Potential, space: SpaceKind, weights: WeightSequence) -> Self {
        Self::from_log(base, space, GridFunction::constant(0.0), 0.0, weights)
    }

    pub fn base(&self) -> &Potential {
        &self.base
    }

    pub fn log_psi(&self) -> &GridFunction {
        &self.log_psi
    }

    pub fn lambda(&self) -> f64 {
        self.log_lambda.exp()
    }

    pub fn weights(&self) -> &WeightSequence {
        &self.weights
    }

    pub fn space(&self) -> SpaceKind {
        self.space
    }

    /// Rank of `Ā`, if finite.
    pub fn rank(&self) -> Option<usize> {
        self.base.rank().map(|r| r.max(self.log_psi.rank() + 1))
    }

    /// Infimum of `Ā` over the grid box, from the declared bound of `A` and
    /// the range of `ln ψ`.
    pub fn inf_bound(&self) -> f64 {
        let v = self.log_psi.values();
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
        self.base.inf_bound() + lo - hi - self.log_lambda
    }

    /// `max |L_Ā(1)(x) − 1|` over `points`, integrating with the rule of `m`.
    pub fn residual(&self, m: &AprioriMeasure, points: &[Vec<f64>]) -> f64 {
        is_normalized(self, &self.weights, m, points)
    }
}

impl Observable for NormalizedPotential {
    fn eval(&self, x: &[f64]) -> f64 {
        let a = self.base.on(self.space).eval(x);
        if self.log_psi.rank() == 0 {
            return a - self.log_lambda;
        }
        let r = self.log_psi.rank();
        let lx: Vec<f64> = (0..r).map(|i| self.weights.alpha(i + 1) * x.get(i + 1).copied().unwrap_or(0.0)).collect();
        a + self.log_psi.eval(x) - self.log_psi.eval(&lx) - self.log_lambda
    }
}

/// `max_x |L_A(1)(x) − 1|` over `points`.
pub fn is_normalized<A: Observable + ?Sized>(a: &A, w: &WeightSequence, m: &AprioriMeasure, points: &[Vec<f64>]) -> f64 {
    let rule = m.integration_rule();
    let res = par_map(points.len(), |i| {
        let x = &points[i];
        let mut pre = Vec::with_capacity(x.len() + 1);
        let mut s = 0.0;
        for (&r, &wq) in rule.nodes.iter().zip(&rule.weights) {
            pre.clear();
            pre.push(r);
            pre.extend(x.iter().enumerate().map(|(j, v)| v / w.alpha(j + 1)));
            s += wq * a.eval(&pre).exp();
        }
        (s - 1.0).abs()
    });
    res.into_iter().fold(0.0, f64::max)
}

/// Random audit points: `0`, then points whose coordinate `i` is drawn from
/// `m` scaled by `1/β_1^{i−1}`, the shape of typical Gibbs samples.
pub fn audit_points(m: &AprioriMeasure, w: &WeightSequence, count: usize, depth: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out = vec![vec![]];
    for i in 1..count {
        let mut rng = stream_rng(seed, 0xA0D1, i as u64);
        let x: Vec<f64> = (0..depth)
            .map(|k| {
                let s = if k == 0 { 0.0 } else { w.log_beta(1, k) };
                m.sample(&mut rng) / s.exp()
            })
            .collect();
        out.push(x);
    }
    out
}
