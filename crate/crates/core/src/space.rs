//! Truncated points of `c0` and `l^p`, the weighted shift, its preimage
//! branches and the metrics used throughout.
//!
//! A point stores finitely many coordinates; everything beyond is zero.
//! Hot loops (particle clouds, grid solvers) work directly on `&[f64]`
//! through the free functions here, so [`Point`] is mostly an API type.

use std::fmt;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::weights::WeightSequence;

#[derive(Debug, Error, PartialEq)]
pub enum SpaceError {
    #[error("points live in different spaces ({0} vs {1})")]
    SpaceMismatch(SpaceKind, SpaceKind),
    #[error("invalid exponent p = {0}; need p ≥ 1")]
    InvalidExponent(f64),
    #[error("invalid metric parameters: {0}")]
    InvalidMetric(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceKind {
    C0,
    Lp { p: f64 },
}

impl SpaceKind {
    pub fn lp(p: f64) -> Result<Self, SpaceError> {
        if p >= 1.0 && p.is_finite() {
            Ok(SpaceKind::Lp { p })
        } else {
            Err(SpaceError::InvalidExponent(p))
        }
    }

    pub fn validate(self) -> Result<Self, SpaceError> {
        match self {
            SpaceKind::Lp { p } => Self::lp(p),
            s => Ok(s),
        }
    }

    /// `Some(p)` for `l^p`, `None` for `c0`.
    pub fn exponent(self) -> Option<f64> {
        match self {
            SpaceKind::C0 => None,
            SpaceKind::Lp { p } => Some(p),
        }
    }

    /// Norm of the finitely supported sequence `xs`.
    pub fn norm(self, xs: &[f64]) -> f64 {
        match self {
            SpaceKind::C0 => xs.iter().fold(0.0, |m, v| f64::max(m, v.abs())),
            SpaceKind::Lp { p: 1.0 } => xs.iter().map(|v| v.abs()).sum(),
            SpaceKind::Lp { p: 2.0 } => xs.iter().map(|v| v * v).sum::<f64>().sqrt(),
            SpaceKind::Lp { p } => xs.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p),
        }
    }

    /// `‖x − y‖` for sequences of possibly different truncation lengths.
    pub fn diff_norm(self, x: &[f64], y: &[f64]) -> f64 {
        let n = x.len().max(y.len());
        let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        match self {
            SpaceKind::C0 => (0..n).fold(0.0, |m, i| f64::max(m, (at(x, i) - at(y, i)).abs())),
            SpaceKind::Lp { p: 1.0 } => (0..n).map(|i| (at(x, i) - at(y, i)).abs()).sum(),
            SpaceKind::Lp { p: 2.0 } => (0..n)
                .map(|i| {
                    let d = at(x, i) - at(y, i);
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            SpaceKind::Lp { p } => (0..n)
                .map(|i| (at(x, i) - at(y, i)).abs().powf(p))
                .sum::<f64>()
                .powf(1.0 / p),
        }
    }

    /// Norm of the dual space, used to turn coordinate-wise Lipschitz
    /// constants `c_i` into a constant for `‖·‖`.
    pub fn dual_norm(self, c: &[f64]) -> f64 {
        match self {
            SpaceKind::C0 => c.iter().map(|v| v.abs()).sum(),
            SpaceKind::Lp { p: 1.0 } => c.iter().fold(0.0, |m, v| f64::max(m, v.abs())),
            SpaceKind::Lp { p } => {
                let q = p / (p - 1.0);
                c.iter().map(|v| v.abs().powf(q)).sum::<f64>().powf(1.0 / q)
            }
        }
    }
}

impl fmt::Display for SpaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpaceKind::C0 => write!(f, "c0"),
            SpaceKind::Lp { p } => write!(f, "l^{p}"),
        }
    }
}

/// Metrics on `X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricSpec {
    /// `‖x − y‖`
    Norm,
    /// `‖x − y‖^α`
    Holder { alpha: f64 },
    /// `min{1, a‖x − y‖^α}`
    Bounded { a: f64, alpha: f64 },
    /// Coordinate-discounted metric, `≤ 1` everywhere.
    Shift,
}

impl MetricSpec {
    pub fn validate(self) -> Result<Self, SpaceError> {
        let ok_alpha = |a: f64| a > 0.0 && a <= 1.0;
        match self {
            MetricSpec::Holder { alpha } if !ok_alpha(alpha) => {
                Err(SpaceError::InvalidMetric(format!("α = {alpha} not in (0, 1]")))
            }
            MetricSpec::Bounded { a, alpha } if !(ok_alpha(alpha) && a > 0.0) => Err(SpaceError::InvalidMetric(
                format!("need a > 0 and α in (0, 1], got a = {a}, α = {alpha}"),
            )),
            m => Ok(m),
        }
    }

    /// Distance between coordinate slices.
    pub fn eval(self, space: SpaceKind, x: &[f64], y: &[f64]) -> f64 {
        match self {
            MetricSpec::Norm => space.diff_norm(x, y),
            MetricSpec::Holder { alpha } => space.diff_norm(x, y).powf(alpha),
            MetricSpec::Bounded { a, alpha } => f64::min(1.0, a * space.diff_norm(x, y).powf(alpha)),
            MetricSpec::Shift => shift_metric(space, x, y),
        }
    }
}

fn shift_metric(space: SpaceKind, x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().max(y.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let mut scale = 1.0;
    match space {
        SpaceKind::C0 => {
            let mut m: f64 = 0.0;
            for i in 0..n {
                scale *= 0.5;
                m = m.max(f64::min(1.0, (at(x, i) - at(y, i)).abs()) * scale);
            }
            m
        }
        SpaceKind::Lp { p } => {
            let mut s = 0.0;
            for i in 0..n {
                scale *= 0.5;
                s += f64::min(1.0, (at(x, i) - at(y, i)).abs().powf(p)) * scale;
            }
            s.powf(1.0 / p)
        }
    }
}

/// `L(x)_i = α_i x_{i+1}`, in place into `out`.
pub fn shift_into(w: &WeightSequence, x: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend((1..x.len()).map(|i| w.alpha(i) * x[i]));
}

/// The preimage branch `(r, x_1/α_1, x_2/α_2, …)`, truncated to `max_len`
/// coordinates. Returns the norm of what was dropped, computed in `space`.
pub fn preimage_into(
    w: &WeightSequence,
    x: &[f64],
    r: f64,
    max_len: usize,
    space: SpaceKind,
    out: &mut Vec<f64>,
) -> f64 {
    out.clear();
    out.push(r);
    let keep = x.len().min(max_len.saturating_sub(1));
    out.extend((0..keep).map(|i| x[i] / w.alpha(i + 1)));
    if keep < x.len() {
        let tail: Vec<f64> = (keep..x.len()).map(|i| x[i] / w.alpha(i + 1)).collect();
        space.norm(&tail)
    } else {
        0.0
    }
}

/// A finitely supported point of `c0` or `l^p`.
#[derive(Clone, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
    space: SpaceKind,
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Point[{}]{:?}", self.space, self.coords)
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.coords.serialize(s)
    }
}

fn canonical(mut coords: Vec<f64>) -> Vec<f64> {
    while coords.last() == Some(&0.0) {
        coords.pop();
    }
    coords
}

impl Point {
    pub fn new(coords: Vec<f64>, space: SpaceKind) -> Self {
        Point {
            coords: canonical(coords),
            space,
        }
    }

    pub fn zero(space: SpaceKind) -> Self {
        Point { coords: vec![], space }
    }

    /// The basis vector `e_n`, 1-based.
    pub fn basis(n: usize, space: SpaceKind) -> Self {
        assert!(n >= 1);
        let mut c = vec![0.0; n];
        c[n - 1] = 1.0;
        Point { coords: c, space }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn space(&self) -> SpaceKind {
        self.space
    }

    /// Coordinate `x_i`, 1-based; zero beyond the truncation.
    pub fn coord(&self, i: usize) -> f64 {
        self.coords.get(i - 1).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.space.norm(&self.coords)
    }

    pub fn dist(&self, other: &Point, metric: MetricSpec) -> Result<f64, SpaceError> {
        if self.space != other.space {
            return Err(SpaceError::SpaceMismatch(self.space, other.space));
        }
        Ok(metric.eval(self.space, &self.coords, &other.coords))
    }

    pub fn apply_l(&self, w: &WeightSequence) -> Point {
        let mut out = Vec::new();
        shift_into(w, &self.coords, &mut out);
        Point::new(out, self.space)
    }

    pub fn apply_l_n(&self, w: &WeightSequence, n: usize) -> Point {
        (0..n).fold(self.clone(), |x, _| x.apply_l(w))
    }

    pub fn preimage(&self, w: &WeightSequence, r: f64) -> Point {
        let mut out = Vec::new();
        preimage_into(w, &self.coords, r, usize::MAX, self.space, &mut out);
        Point::new(out, self.space)
    }

    /// Keep the first `m` coordinates.
    pub fn truncate(&self, m: usize) -> Point {
        Point::new(self.coords[..m.min(self.coords.len())].to_vec(), self.space)
    }
}
