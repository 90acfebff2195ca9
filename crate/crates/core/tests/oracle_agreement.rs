use approx::assert_relative_eq;
use ruelle::gibbs::{EmpiricalMeasure, GibbsSampler};
use ruelle::grid::GridSpec;
use ruelle::oracle::FiniteInstance;
use ruelle::potential::{Builtin, NormalizedPotential, Potential};
use ruelle::transfer::{GridSolver, TransferOperator};
use ruelle::{AprioriMeasure, SpaceKind, WeightSequence};

const L2: SpaceKind = SpaceKind::Lp { p: 2.0 };

struct Case {
    w: WeightSequence,
    m: AprioriMeasure,
    a: Potential,
}

fn chain(fields: &[f64], couplings: &[f64], m: &AprioriMeasure) -> Potential {
    Potential::builtin(
        Builtin::TanhChain {
            fields: fields.to_vec(),
            couplings: couplings.to_vec(),
        },
        L2,
        m,
    )
    .unwrap()
}

fn cases() -> Vec<Case> {
    let two = AprioriMeasure::atoms(&[-1.0, 1.0], &[0.3, 0.7]).unwrap();
    let three = AprioriMeasure::atoms(&[-1.0, 0.5, 2.0], &[0.2, 0.5, 0.3]).unwrap();
    vec![
        Case {
            w: WeightSequence::constant(2.0).unwrap(),
            a: chain(&[0.2, -0.1], &[0.8], &two),
            m: two.clone(),
        },
        Case {
            w: WeightSequence::constant(1.5).unwrap(),
            a: chain(&[0.3, 0.4], &[-0.6], &three),
            m: three,
        },
        Case {
            w: WeightSequence::constant(2.0).unwrap(),
            a: chain(&[0.2, -0.3, 0.4], &[0.5, -0.25], &two),
            m: two,
        },
    ]
}

#[test]
fn grid_eigenpair_matches_exact_finite_reduction() {
    for (i, c) in cases().iter().enumerate() {
        let rank = c.a.rank().unwrap();
        let inst = FiniteInstance::build(&c.w, &c.m, &c.a.on(L2), rank).unwrap();
        let exact = inst.exact_eigen(1e-14).unwrap();
        let solver = GridSolver::new(c.a.on(L2), rank, &c.m, &c.w, &GridSpec::default()).unwrap();
        let disc = solver.eigenpair(&[0.9, 0.99, 0.999, 0.9999], 1e-12, 200_000).unwrap();
        let power = solver.power_iterate(10_000, 1e-14).unwrap();
        assert!((disc.lambda - exact.lambda).abs() < 1e-8, "case {i}: {} vs {}", disc.lambda, exact.lambda);
        assert!((power.lambda - exact.lambda).abs() < 1e-8, "case {i}");
        // both are positive eigenvectors; compare after normalizing at the same state
        let psi = disc.psi();
        let at = &inst.collocation()[inst.origin_state()];
        let scale = psi.eval(at);
        for (x, e) in inst.collocation().iter().zip(&exact.psi) {
            assert_relative_eq!(psi.eval(x) / scale, *e, max_relative = 1e-6);
        }
    }
}

#[test]
fn operator_row_matches_matrix_row() {
    for c in cases() {
        let rank = c.a.rank().unwrap();
        let bound = c.a.on(L2);
        let inst = FiniteInstance::build(&c.w, &c.m, &bound, rank).unwrap();
        let op = TransferOperator::new(&bound, &c.m, &c.w);
        let states = inst.collocation().to_vec();
        // φ = indicator of one collocation state, read through the first coordinates
        for (j, target) in states.iter().enumerate() {
            let phi = |v: &[f64]| {
                let hit = target.iter().enumerate().all(|(i, t)| (v.get(i).copied().unwrap_or(0.0) - t).abs() < 1e-12);
                if hit {
                    1.0
                } else {
                    0.0
                }
            };
            let mut e = vec![0.0; states.len()];
            e[j] = 1.0;
            let col = inst.apply(&e);
            for (x, want) in states.iter().zip(col) {
                assert_relative_eq!(op.apply(&phi, x), want, epsilon = 1e-12);
            }
        }
    }
}

#[test]
fn gibbs_marginal_matches_stationary_law() {
    let c = &cases()[1];
    let solver = GridSolver::new(c.a.on(L2), 2, &c.m, &c.w, &GridSpec::default()).unwrap();
    let pair = solver.eigenpair(&[0.9, 0.99, 0.999, 0.9999], 1e-12, 200_000).unwrap();
    let abar = NormalizedPotential::new(c.a.clone(), L2, &pair.psi(), pair.lambda, c.w.clone()).unwrap();
    let inst = FiniteInstance::build(&c.w, &c.m, &abar, 2).unwrap();
    for s in inst.row_sums() {
        assert!((s - 1.0).abs() < 1e-10, "{s}");
    }
    let v = inst.exact_stationary(1e-15).unwrap();
    let k = 256;
    // exact on the atom grid; the audit also visits 0, which lies off the
    // support and where ψ is only interpolated
    let sampler = GibbsSampler::new(&abar, &c.m, &c.w, L2, k, 8, 77, 0.05).unwrap();
    let n = 20_000;
    let cloud = sampler.push_n(&EmpiricalMeasure::dirac(&[], n, L2), 12);
    for (state, p) in inst.collocation().iter().zip(&v) {
        let f = cloud.particles.iter().filter(|x| (x[0] - state[0]).abs() < 1e-12).count() as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((f - p).abs() < 4.0 * se + 1.0 / k as f64, "{f} vs {p}");
    }
}
