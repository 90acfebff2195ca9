use ruelle::gibbs::GibbsSampler;
use ruelle::potential::{Builtin, Potential};
use ruelle::wasserstein::{global_bound, ContractionSetup, WassersteinError};
use ruelle::{AprioriMeasure, SpaceKind, WeightSequence};

const L2: SpaceKind = SpaceKind::Lp { p: 2.0 };

fn zero(_: &[f64]) -> f64 {
    0.0
}

#[test]
fn coupled_channel_is_exact_for_the_zero_potential() {
    let m = AprioriMeasure::standard_gaussian();
    let w = WeightSequence::constant(2.0).unwrap();
    let s = GibbsSampler::new(&zero, &m, &w, L2, 4, 32, 17, 1e-12).unwrap();
    let setup = ContractionSetup {
        sampler: &s,
        lip_abar: 0.0,
        alpha: 1.0,
        a: None,
        particles: 256,
    };
    for n in 2..6 {
        let r = setup.local(&[0.3, -0.1], &[0.1, 0.05], n).unwrap();
        assert_eq!(r.a, 1.0);
        assert!((r.coupled_ratio - 0.5f64.powi(n as i32)).abs() < 1e-10);
        assert!(r.measured_ratio <= r.coupled_ratio + 1e-12);
        assert!(r.passes);
    }
}

#[test]
fn local_contraction_with_a_normalized_potential() {
    let m = AprioriMeasure::standard_gaussian();
    let w = WeightSequence::constant(2.0).unwrap();
    let p = Potential::builtin(
        Builtin::TanhFirstCoord {
            amplitude: 0.5,
            normalized: true,
        },
        L2,
        &m,
    )
    .unwrap();
    let abar = p.on(L2);
    let s = GibbsSampler::new(&abar, &m, &w, L2, 32, 32, 5, 1e-9).unwrap();
    let setup = ContractionSetup {
        sampler: &s,
        lip_abar: p.lip_const(),
        alpha: 1.0,
        a: None,
        particles: 400,
    };
    let r = setup.local(&[0.1], &[0.0], 3).unwrap();
    assert!(r.a > 1.0 && r.premise_flags.local && r.premise_flags.d_n_small);
    assert!(r.passes, "{r:?}");
    // d_1^{-1} = 1/2 > 3/8
    assert!(matches!(setup.local(&[0.1], &[0.0], 1), Err(WassersteinError::PremiseViolated(_))));
    // too far apart for the local estimate
    assert!(matches!(setup.local(&[5.0], &[0.0], 3), Err(WassersteinError::PremiseViolated(_))));
}

#[test]
fn global_contraction_on_far_pairs() {
    let m = AprioriMeasure::standard_gaussian();
    let w = WeightSequence::constant(2.0).unwrap();
    let s = GibbsSampler::new(&zero, &m, &w, L2, 4, 32, 9, 1e-12).unwrap();
    let setup = ContractionSetup {
        sampler: &s,
        lip_abar: 0.0,
        alpha: 1.0,
        a: Some(1.0),
        particles: 300,
    };
    let r = setup.global(&[2.0], &[-1.0], 4).unwrap();
    assert_eq!(r.d_tilde_xy, 1.0);
    assert!((r.stated_bound - global_bound(1.0, 1.0, 1.0 / 16.0, 3.0)).abs() < 1e-9);
    assert!(r.passes && r.measured_w < r.stated_bound);
    // a·D ≥ d_n^α
    assert!(matches!(setup.global(&[20.0], &[0.0], 4), Err(WassersteinError::PremiseViolated(_))));
}
