//! Finite-rank functions on `X`: tensor grids over the first `N` coordinates
//! with multilinear interpolation.
//!
//! Out-of-range queries are clamped to the boundary value. A rank-0 grid is a
//! constant. Grids hold eigenfunction logarithms, discounted fixed points and
//! table potentials.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::apriori::{AprioriKind, AprioriMeasure};
use crate::weights::WeightSequence;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("axis nodes must be finite and strictly increasing")]
    BadAxis,
    #[error("expected {expected} grid values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("grid too large: {0} nodes")]
    TooLarge(usize),
    #[error("bad grid dump: {0}")]
    BadDump(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub const MAX_GRID_NODES: usize = 4_000_000;

/// Sorted node list for one coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    nodes: Vec<f64>,
    #[serde(skip)]
    uniform: Option<(f64, f64)>,
}

impl Axis {
    /// `size` equally spaced nodes on `[−half_width, half_width]`.
    pub fn uniform(half_width: f64, size: usize) -> Self {
        assert!(size >= 2 && half_width > 0.0, "uniform axis needs size ≥ 2 and positive width");
        let h = 2.0 * half_width / (size - 1) as f64;
        let mut nodes: Vec<f64> = (0..size).map(|i| -half_width + i as f64 * h).collect();
        if size % 2 == 1 {
            nodes[size / 2] = 0.0;
        }
        Axis {
            nodes,
            uniform: Some((-half_width, h)),
        }
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self, GridError> {
        if nodes.is_empty() || nodes.iter().any(|v| !v.is_finite()) || nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GridError::BadAxis);
        }
        Ok(Axis { nodes, uniform: None })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Cell index `i` and weight `t` with `x ≈ (1−t)·node[i] + t·node[i+1]`,
    /// clamped to the axis.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.nodes.len();
        if n == 1 || x <= self.nodes[0] {
            return (0, 0.0);
        }
        if x >= self.nodes[n - 1] {
            return (n - 2, 1.0);
        }
        let i = match self.uniform {
            Some((lo, h)) => (((x - lo) / h).floor() as usize).min(n - 2),
            None => self.nodes.partition_point(|&v| v <= x) - 1,
        };
        let (a, b) = (self.nodes[i], self.nodes[i + 1]);
        (i, ((x - a) / (b - a)).clamp(0.0, 1.0))
    }

    /// Largest node spacing.
    pub fn max_step(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

/// Interpolation stencil: flat indices and weights, at most `2^rank` terms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Stencil {
    pub idx: Vec<u32>,
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    axes: Vec<Axis>,
    strides: Vec<usize>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn constant(value: f64) -> Self {
        GridFunction {
            axes: vec![],
            strides: vec![],
            values: vec![value],
        }
    }

    pub fn from_values(axes: Vec<Axis>, values: Vec<f64>) -> Result<Self, GridError> {
        let expected = axes.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.len()));
        let expected = expected.ok_or(GridError::TooLarge(usize::MAX))?;
        if expected != values.len() {
            return Err(GridError::ShapeMismatch {
                expected,
                got: values.len(),
            });
        }
        let mut strides = vec![1; axes.len()];
        for i in (0..axes.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * axes[i + 1].len();
        }
        Ok(GridFunction { axes, strides, values })
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(axes: Vec<Axis>, f: F) -> Result<Self, GridError> {
        let n: usize = axes.iter().map(Axis::len).product();
        if n > MAX_GRID_NODES {
            return Err(GridError::TooLarge(n));
        }
        let tmp = GridFunction::from_values(axes, vec![0.0; n])?;
        let values = (0..n).map(|i| f(&tmp.node(i))).collect();
        Ok(GridFunction { values, ..tmp })
    }

    /// Same axes, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        GridFunction {
            axes: self.axes.clone(),
            strides: self.strides.clone(),
            values,
        }
    }

    pub fn rank(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Coordinates of the node with flat index `i`.
    pub fn node(&self, mut i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.axes.len()];
        for (d, axis) in self.axes.iter().enumerate() {
            let j = i / self.strides[d];
            i %= self.strides[d];
            out[d] = axis.nodes[j];
        }
        out
    }

    /// Flat index of the node closest to `x` (coordinates beyond the rank
    /// are ignored).
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        for (d, axis) in self.axes.iter().enumerate() {
            let xd = x.get(d).copied().unwrap_or(0.0);
            let (i, t) = axis.locate(xd);
            let j = if t > 0.5 { i + 1 } else { i };
            idx += j.min(axis.len() - 1) * self.strides[d];
        }
        idx
    }

    pub fn stencil(&self, x: &[f64]) -> Stencil {
        let mut st = Stencil {
            idx: vec![0],
            w: vec![1.0],
        };
        for (d, axis) in self.axes.iter().enumerate() {
            let xd = x.get(d).copied().unwrap_or(0.0);
            let (i, t) = axis.locate(xd);
            let s = self.strides[d];
            let k = st.idx.len();
            if axis.len() == 1 || t == 0.0 {
                for e in 0..k {
                    st.idx[e] += (i * s) as u32;
                }
            } else if t == 1.0 {
                for e in 0..k {
                    st.idx[e] += ((i + 1) * s) as u32;
                }
            } else {
                for e in 0..k {
                    let base = st.idx[e];
                    let w = st.w[e];
                    st.idx[e] = base + (i * s) as u32;
                    st.w[e] = w * (1.0 - t);
                    st.idx.push(base + ((i + 1) * s) as u32);
                    st.w.push(w * t);
                }
            }
        }
        st
    }

    pub fn eval_stencil(&self, st: &Stencil) -> f64 {
        apply_stencil(&self.values, st)
    }

    /// Multilinear interpolation at the first `rank` coordinates of `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        if self.axes.is_empty() {
            return self.values[0];
        }
        self.eval_stencil(&self.stencil(x))
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    /// Flat binary dump: `b"RGRD"`, version `u32`, rank `u32`, then per axis a
    /// `u64` node count followed by the nodes, then a `u64` value count and
    /// the values. Everything little-endian, floats as IEEE 754 binary64.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(b"RGRD")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.axes.len() as u32).to_le_bytes())?;
        for axis in &self.axes {
            w.write_all(&(axis.len() as u64).to_le_bytes())?;
            for v in &axis.nodes {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, GridError> {
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        if &b4 != b"RGRD" {
            return Err(GridError::BadDump("bad magic".into()));
        }
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != 1 {
            return Err(GridError::BadDump("unsupported version".into()));
        }
        r.read_exact(&mut b4)?;
        let rank = u32::from_le_bytes(b4) as usize;
        let mut read_vec = |r: &mut R| -> Result<Vec<f64>, GridError> {
            r.read_exact(&mut b8)?;
            let n = u64::from_le_bytes(b8) as usize;
            if n > MAX_GRID_NODES {
                return Err(GridError::TooLarge(n));
            }
            (0..n)
                .map(|_| {
                    let mut b = [0u8; 8];
                    r.read_exact(&mut b)?;
                    Ok(f64::from_le_bytes(b))
                })
                .collect()
        };
        let mut axes = Vec::with_capacity(rank);
        for _ in 0..rank {
            axes.push(Axis::from_nodes(read_vec(&mut r)?)?);
        }
        let values = read_vec(&mut r)?;
        GridFunction::from_values(axes, values)
    }

    /// JSON-friendly description of the axes, for metadata next to dumps.
    pub fn metadata(&self) -> GridMetadata {
        GridMetadata {
            rank: self.rank(),
            sizes: self.axes.iter().map(Axis::len).collect(),
            ranges: self
                .axes
                .iter()
                .map(|a| (a.nodes[0], a.nodes[a.len() - 1]))
                .collect(),
            layout: "row-major, last axis fastest".into(),
        }
    }
}

pub(crate) fn apply_stencil(values: &[f64], st: &Stencil) -> f64 {
    st.idx.iter().zip(&st.w).map(|(&i, &w)| w * values[i as usize]).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMetadata {
    pub rank: usize,
    pub sizes: Vec<usize>,
    pub ranges: Vec<(f64, f64)>,
    pub layout: String,
}

/// Grid construction parameters from the experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Nodes per axis for continuous a-priori measures.
    #[serde(default = "default_size")]
    pub size: usize,
    /// Half-width of the first axis; `None` picks it from the a-priori tail.
    #[serde(default)]
    pub half_width: Option<f64>,
    /// Mass allowed outside the first axis when the width is automatic.
    #[serde(default = "default_clamp_mass")]
    pub clamp_mass: f64,
}

fn default_size() -> usize {
    101
}

fn default_clamp_mass() -> f64 {
    1e-6
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            size: default_size(),
            half_width: None,
            clamp_mass: default_clamp_mass(),
        }
    }
}

impl GridSpec {
    /// Axes for a function of the first `rank` coordinates.
    ///
    /// Coordinate `i + 1` of a preimage is coordinate `i` divided by `α_i`,
    /// so axis `i + 1` is axis `i` scaled by `1/α_i`. For atomic measures the
    /// first axis is the atom set itself, which makes the whole grid closed
    /// under the preimage branches and the solvers exact on it.
    pub fn axes(&self, m: &AprioriMeasure, w: &WeightSequence, rank: usize) -> Vec<Axis> {
        if rank == 0 {
            return vec![];
        }
        let first: Vec<f64> = match m.kind() {
            AprioriKind::Atoms { values, .. } => {
                let mut v = values.clone();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            }
            _ => Axis::uniform(self.first_half_width(m), self.size.max(2)).nodes,
        };
        let mut axes = Vec::with_capacity(rank);
        let mut nodes = first;
        for i in 0..rank {
            if i > 0 {
                // same floating-point operation as the preimage map
                let a = w.alpha(i);
                nodes = nodes.iter().map(|v| v / a).collect();
            }
            let nodes = nodes.clone();
            let axis = match (m.kind(), nodes.len()) {
                (AprioriKind::Atoms { .. }, _) | (_, 1) => Axis::from_nodes(nodes).expect("sorted atoms"),
                _ => Axis {
                    uniform: Some((nodes[0], nodes[1] - nodes[0])),
                    nodes,
                },
            };
            axes.push(axis);
        }
        axes
    }

    /// Half-width of the first axis: configured, or the `clamp_mass` tail
    /// quantile of `m`.
    pub fn first_half_width(&self, m: &AprioriMeasure) -> f64 {
        match (self.half_width, m.kind()) {
            (Some(r), _) => r,
            (None, AprioriKind::Atoms { values, .. }) => values.iter().fold(0.0, |a, v| f64::max(a, v.abs())),
            (None, _) => m.tail_quantile(self.clamp_mass),
        }
    }
}
