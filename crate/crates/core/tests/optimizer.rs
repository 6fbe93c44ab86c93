use metraptor::channel::{modulation_capacity, ChannelSpec};
use metraptor::de::DeConfig;
use metraptor::ensemble::PrecodeProfile;
use metraptor::llr::LlrGrid;
use metraptor::optimizer::{
    evaluate_candidate, optimize, refine_fractions, Candidate, OptimizerConfig,
};
use metraptor::{table1, Error};

fn coarse() -> DeConfig {
    DeConfig {
        grid: LlrGrid::new(30.0, 0.125).unwrap(),
        ..DeConfig::default()
    }
}

fn tiny(seed: u64) -> OptimizerConfig {
    OptimizerConfig {
        population_size: 4,
        generations: 1,
        adaptive_range_iters: 1,
        degree_pool_size: 5,
        rate_tolerance: 5e-3,
        seed,
        ..OptimizerConfig::default()
    }
}

#[test]
fn same_seed_same_design() {
    let spec = ChannelSpec::qam16(6.0).unwrap();
    let a = optimize(&spec, PrecodeProfile::default(), &tiny(11), &coarse()).unwrap();
    let b = optimize(&spec, PrecodeProfile::default(), &tiny(11), &coarse()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.audit_csv(), b.audit_csv());
    assert!(a.ensemble.validate().is_empty());
    for w in a.trace.windows(2) {
        assert!(w[1].best_fitness >= w[0].best_fitness);
    }
    assert!(a.rate_efficiency <= 1.0 + 1e-9);
}

#[test]
fn noiseless_design_reaches_high_rate() {
    let spec = ChannelSpec::qam16(60.0).unwrap();
    let r = optimize(&spec, PrecodeProfile::default(), &tiny(2), &coarse()).unwrap();
    assert!(r.r_lt >= 0.9, "{}", r.r_lt);
}

#[test]
fn zero_generations_is_infeasible() {
    let cfg = OptimizerConfig {
        generations: 0,
        ..tiny(0)
    };
    let spec = ChannelSpec::qam16(6.0).unwrap();
    let err = optimize(&spec, PrecodeProfile::default(), &cfg, &coarse()).unwrap_err();
    assert!(matches!(err, Error::Infeasible(_)));
}

#[test]
fn unbalanced_candidate_is_infeasible() {
    let c = Candidate {
        degrees: [vec![1, 2], vec![2, 3]],
        fractions: [vec![0.05, 0.25], vec![0.25, 0.25]],
    };
    let spec = ChannelSpec::qam16(6.0).unwrap();
    let f = evaluate_candidate(&c, &spec, PrecodeProfile::default(), &tiny(0), &coarse()).unwrap();
    assert_eq!(f, f64::NEG_INFINITY);
}

#[test]
fn eight_db_row_fitness_and_determinism() {
    let d = table1::design(8.0).unwrap();
    let c = Candidate::from_components(&d.omega1, &d.omega2);
    let spec = ChannelSpec::qam16(8.0).unwrap();
    let cfg = OptimizerConfig {
        rate_tolerance: 1e-3,
        ..tiny(0)
    };
    let f = evaluate_candidate(&c, &spec, PrecodeProfile::default(), &cfg, &coarse()).unwrap();
    let g = evaluate_candidate(&c, &spec, PrecodeProfile::default(), &cfg, &coarse()).unwrap();
    assert_eq!(f.to_bits(), g.to_bits());
    let per_bit = modulation_capacity(&spec) / 4.0;
    let want = 0.9759 * per_bit;
    assert!((f - want).abs() <= 0.02 * per_bit, "{f} vs {want}");
}

#[test]
fn refinement_never_loses_to_the_published_point() {
    let d = table1::design(6.0).unwrap();
    let c = Candidate::from_components(&d.omega1, &d.omega2);
    let spec = ChannelSpec::qam16(6.0).unwrap();
    let cfg = OptimizerConfig {
        adaptive_range_iters: 4,
        ..tiny(5)
    };
    let base = evaluate_candidate(&c, &spec, PrecodeProfile::default(), &cfg, &coarse()).unwrap();
    let r = refine_fractions(&c, &spec, PrecodeProfile::default(), &cfg, &coarse()).unwrap();
    assert!(r.realized_rate >= base, "{} < {base}", r.realized_rate);
    assert_eq!(r.candidate.degrees, c.degrees);
}
