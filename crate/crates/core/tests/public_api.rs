use ef_lab_core::compressors::contraction_delta;
use ef_lab_core::optimizers::step_in_place;
use ef_lab_core::rng::{stream, Stream};
use ef_lab_core::{
    build_oracle, compress, init_state, run, CompressorKind, CompressorSpec, OptimizerSpec, OracleKind, Rule,
    RunConfig, SignZero, Vector,
};
use proptest::prelude::*;

fn kinds(d: usize) -> Vec<CompressorKind> {
    let k = (d / 2).max(1);
    vec![
        CompressorKind::Identity,
        CompressorKind::SignScaled,
        CompressorKind::SignRaw,
        CompressorKind::TopK(k),
        CompressorKind::RandKUnbiased(k),
        CompressorKind::RandKFeedback(k),
    ]
}

#[test]
fn zero_compresses_to_zero() {
    let mut rng = stream(0, Stream::Compressor);
    for kind in kinds(5) {
        for zero in [SignZero::PlusOne, SignZero::Zero] {
            let c = compress(&CompressorSpec::new(kind).with_sign_zero(zero), &[0.0; 5], &mut rng).unwrap();
            assert!(c.iter().all(|&v| v == 0.0), "{kind:?} {zero:?}");
        }
    }
}

#[test]
fn same_seed_same_trace() {
    let oracle = build_oracle(&OracleKind::Theorem1 { d: 6, n: 12 }, 3).unwrap();
    let spec = OptimizerSpec::ec_sgd(CompressorSpec::new(CompressorKind::RandKFeedback(2)), 1e-3);
    let cfg = RunConfig::new(300, 11);
    let a = run(&spec, &oracle, oracle.default_x0(), &cfg).unwrap();
    let b = run(&spec, &oracle, oracle.default_x0(), &cfg).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.final_state.x, b.final_state.x);
    let c = run(&spec, &oracle, oracle.default_x0(), &RunConfig::new(300, 12)).unwrap();
    assert_ne!(a.final_state.x, c.final_state.x);
}

proptest! {
    #[test]
    fn ec_keeps_the_transcript(
        g in prop::collection::vec(prop::collection::vec(-10.0..10.0f64, 4), 1..30),
        which in 0usize..6,
        seed in any::<u64>(),
    ) {
        let gamma = 0.05;
        let spec = OptimizerSpec::ec_sgd(CompressorSpec::new(kinds(4)[which]), gamma);
        let mut state = init_state(&spec, &Vector::zeros(4));
        let mut rng = stream(seed, Stream::Compressor);
        let mut sum = [0.0; 4];
        for gi in &g {
            step_in_place(&spec, &mut state, gi, &mut rng).unwrap();
            for (s, v) in sum.iter_mut().zip(gi) {
                *s += v;
            }
        }
        for i in 0..4 {
            let lhs = state.x[i] - state.e[i];
            prop_assert!((lhs + gamma * sum[i]).abs() <= 1e-9 * (1.0 + gamma * sum[i].abs()));
        }
    }

    #[test]
    fn deterministic_compressors_meet_their_delta(
        v in prop::collection::vec(-50.0..50.0f64, 2..30),
    ) {
        let d = v.len();
        let mut rng = stream(0, Stream::Compressor);
        for kind in [CompressorKind::Identity, CompressorKind::SignScaled, CompressorKind::TopK((d / 3).max(1))] {
            let spec = CompressorSpec::new(kind);
            let c = compress(&spec, &v, &mut rng).unwrap();
            let got = contraction_delta(&v, &c).unwrap();
            if let Some(want) = spec.guaranteed_delta(d) {
                prop_assert!(got >= want - 1e-12, "{kind:?}: {got} < {want}");
            }
        }
    }

    #[test]
    fn sign_sgd_moves_every_coordinate_by_gamma(
        g in prop::collection::vec(-5.0..5.0f64, 1..20),
        gamma in 1e-4..1.0f64,
    ) {
        let d = g.len();
        let spec = OptimizerSpec::new(Rule::SignSgd, gamma);
        let mut state = init_state(&spec, &Vector::zeros(d));
        step_in_place(&spec, &mut state, &g, &mut stream(0, Stream::Compressor)).unwrap();
        prop_assert!(state.x.iter().all(|x| x.abs() == gamma));
    }
}
