use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Tri-state outcome for asymptotic criteria evaluated from finite data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Fails,
    #[serde(rename = "inconclusive_at_horizon")]
    Inconclusive,
}

impl Verdict {
    pub fn holds(self) -> bool {
        self == Verdict::Holds
    }

    pub(crate) fn from_bool(b: bool) -> Self {
        if b {
            Verdict::Holds
        } else {
            Verdict::Fails
        }
    }
}

/// Ratio-test margin used before an asymptotic claim is made.
pub(crate) const RATIO_MARGIN: f64 = 0.999;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based RNG stream for `(seed, generation, index)`.
///
/// Streams for distinct triples are independent for all practical purposes,
/// so work can be scheduled on any number of threads without changing results.
pub fn stream_rng(seed: u64, generation: u64, index: u64) -> ChaCha8Rng {
    let key = splitmix64(splitmix64(splitmix64(seed) ^ generation) ^ index.rotate_left(17));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(generation);
    rng
}

/// Order-preserving parallel map over `0..n`.
pub(crate) fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Pairwise summation; result depends only on the slice, never on threads.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Neville extrapolation of `values[i] ≈ f(nodes[i])` to `f(0)`.
pub(crate) fn extrapolate_to_zero(nodes: &[f64], values: &[f64]) -> f64 {
    let n = nodes.len();
    let mut p = values.to_vec();
    for level in 1..n {
        for i in 0..n - level {
            let (hi, hj) = (nodes[i], nodes[i + level]);
            p[i] = (hj * p[i] - hi * p[i + 1]) / (hj - hi);
        }
    }
    p[0]
}

/// Log-sum-exp of `terms`, stable for large magnitudes.
pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
pub(crate) fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while (hi - lo).abs() > tol {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    // endpoints are candidates too: the maximum of a monotone function sits there
    let mut best = ((lo + hi) / 2.0, f((lo + hi) / 2.0));
    for t in [lo, hi] {
        let v = f(t);
        if v > best.1 {
            best = (t, v);
        }
    }
    best
}
