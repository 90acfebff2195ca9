use ruelle::gibbs::{iterate_to_gibbs, EmpiricalMeasure, GibbsSampler, TraceConfig};
use ruelle::potential::{Builtin, Potential};
use ruelle::wasserstein::w1_exact;
use ruelle::{AprioriMeasure, MetricSpec, SpaceKind, WeightSequence};
use statrs::distribution::{ContinuousCDF, Normal};

const L2: SpaceKind = SpaceKind::Lp { p: 2.0 };

fn zero(_: &[f64]) -> f64 {
    0.0
}

/// CDF of `e^{a tanh(r) − c} dm(r)` for standard Gaussian `m`, by composite
/// Simpson on a fine grid.
fn tilted_cdf(amplitude: f64) -> impl Fn(f64) -> f64 {
    let n = 40_000;
    let (lo, hi) = (-12.0, 12.0);
    let h = (hi - lo) / n as f64;
    let dens = move |r: f64| (amplitude * r.tanh()).exp() * (-0.5 * r * r).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut cum = vec![0.0; n / 2 + 1];
    for i in 0..n / 2 {
        let a = lo + 2.0 * i as f64 * h;
        cum[i + 1] = cum[i] + h / 3.0 * (dens(a) + 4.0 * dens(a + h) + dens(a + 2.0 * h));
    }
    let total = cum[n / 2];
    move |t: f64| {
        if t <= lo {
            return 0.0;
        }
        if t >= hi {
            return 1.0;
        }
        let pos = (t - lo) / (2.0 * h);
        let i = pos.floor() as usize;
        let f = pos - i as f64;
        (cum[i] * (1.0 - f) + cum[(i + 1).min(n / 2)] * f) / total
    }
}

fn ks(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            f64::max(f - i as f64 / n, (i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

#[test]
fn zero_potential_cloud_is_the_product_law() {
    let m = AprioriMeasure::standard_gaussian();
    let w = WeightSequence::constant(2.0).unwrap();
    let s = GibbsSampler::new(&zero, &m, &w, L2, 8, 32, 4, 1e-12).unwrap();
    let n = 10_000;
    let cloud = s.push_n(&EmpiricalMeasure::dirac(&[], n, L2), 20);
    let normal = Normal::standard();
    for k in 0..3 {
        let mut col: Vec<f64> = cloud.particles.iter().map(|x| x[k] * 2f64.powi(k as i32)).collect();
        // 1% level for the KS statistic
        assert!(ks(&mut col, |t| normal.cdf(t)) < 1.63 / (n as f64).sqrt(), "coordinate {k}");
    }
}

#[test]
fn rank_one_potential_gives_iid_tilted_coordinates() {
    let m = AprioriMeasure::standard_gaussian();
    let w = WeightSequence::constant(2.0).unwrap();
    let amplitude = 0.8;
    let p = Potential::builtin(
        Builtin::TanhFirstCoord {
            amplitude,
            normalized: true,
        },
        L2,
        &m,
    )
    .unwrap();
    let abar = p.on(L2);
    let k = 256;
    let s = GibbsSampler::new(&abar, &m, &w, L2, k, 32, 8, 1e-9).unwrap();
    let n = 10_000;
    let cloud = s.push_n(&EmpiricalMeasure::dirac(&[], n, L2), 10);
    let cdf = tilted_cdf(amplitude);
    for j in 0..3 {
        let mut col: Vec<f64> = cloud.particles.iter().map(|x| x[j] * 2f64.powi(j as i32)).collect();
        let d = ks(&mut col, &cdf);
        // selection among K candidates is biased by O(1/K)
        assert!(d < 1.63 / (n as f64).sqrt() + 1.0 / k as f64, "coordinate {j}: {d}");
        // the untilted law is rejected
        let normal = Normal::standard();
        assert!(ks(&mut col, |t| normal.cdf(t)) > 0.1);
    }
}

/// Probability that size-`k` selection picks the heavier atom when the
/// atoms have probability 1/2 and weights 0.4 and 1.6.
fn exact_selection(k: usize) -> f64 {
    let mut total = 0.0;
    let mut binom = 1.0;
    for j in 0..=k {
        if j > 0 {
            binom = binom * (k - j + 1) as f64 / j as f64;
        }
        let share = 1.6 * j as f64 / (1.6 * j as f64 + 0.4 * (k - j) as f64);
        total += binom * 0.5f64.powi(k as i32) * share;
    }
    total
}

#[test]
fn selection_converges_in_candidate_count() {
    let m = AprioriMeasure::atoms(&[-1.0, 1.0], &[0.5, 0.5]).unwrap();
    let w = WeightSequence::constant(2.0).unwrap();
    let abar = |x: &[f64]| if x[0] < 0.0 { 0.4f64.ln() } else { 1.6f64.ln() };
    let n = 40_000;
    let mut last_bias = f64::INFINITY;
    for k in [1usize, 2, 4, 16, 64] {
        let p_k = exact_selection(k);
        let bias = (p_k - 0.8).abs();
        assert!(bias < last_bias);
        last_bias = bias;
        let s = GibbsSampler::new(&abar, &m, &w, L2, k, 4, 21, 1e-12).unwrap();
        let cloud = s.push(&EmpiricalMeasure::dirac(&[], n, L2));
        let f = cloud.particles.iter().filter(|x| x[0] > 0.0).count() as f64 / n as f64;
        let se = (p_k * (1.0 - p_k) / n as f64).sqrt();
        assert!((f - p_k).abs() < 4.0 * se, "K = {k}: {f} vs {p_k}");
    }
    assert!(last_bias < 0.01);
}

#[test]
fn independent_initializations_meet() {
    let m = AprioriMeasure::standard_gaussian();
    let w = WeightSequence::constant(2.0).unwrap();
    let s = GibbsSampler::new(&zero, &m, &w, L2, 4, 32, 6, 1e-12).unwrap();
    let n = 600;
    let metric = MetricSpec::Bounded { a: 1.0, alpha: 1.0 };
    let nu0 = EmpiricalMeasure::dirac(&[], n, L2);
    let nu1 = EmpiricalMeasure::uniform_box(n, 6, 5.0, L2, 61);
    let trace = TraceConfig {
        metric,
        subsample: n,
        every: 5,
    };
    let report = iterate_to_gibbs(&s, &nu0, Some(&nu1), 20, trace).unwrap();
    let first = report.pair_trace.first().unwrap().1;
    let last = report.pair_trace.last().unwrap().1;
    // same-law floor: two fresh clouds of the product law
    let a = s.reseeded(1000).push_n(&nu0, 20);
    let b = s.reseeded(2000).push_n(&nu0, 20);
    let floor = w1_exact(&a.particles, &b.particles, metric, L2).unwrap().cost;
    assert!(first > 0.5);
    assert!(last <= 2.0 * floor, "{last} vs floor {floor}");
    assert!(report.w_trace.iter().all(|(_, v)| *v >= 0.0));
}
