use metraptor::channel::ChannelSpec;
use metraptor::de::{
    ensemble_channels, max_realized_rate, met_de_run, met_de_run_with, DeConfig, RateSearch,
};
use metraptor::ensemble::InputProfile;
use metraptor::llr::LlrGrid;
use metraptor::table1;

fn coarse() -> DeConfig {
    DeConfig {
        grid: LlrGrid::new(30.0, 0.125).unwrap(),
        ..DeConfig::default()
    }
}

#[test]
fn messages_stay_normalized_and_symmetric() {
    let d = table1::design(6.0).unwrap();
    let e = d.build(0.9 * d.reconstructed_r_lt().unwrap()).unwrap();
    let cfg = DeConfig::default();
    let ch = ensemble_channels(&ChannelSpec::qam16(6.0).unwrap(), cfg.grid).unwrap();
    let mut worst_norm: f64 = 0.0;
    let mut worst_sym: f64 = 0.0;
    let r = met_de_run_with(&e, &ch, &cfg, |s| {
        for m in [s.c1, s.c2, s.v1, s.v2] {
            worst_norm = worst_norm.max((m.total_mass() - 1.0).abs());
            worst_sym = worst_sym.max(m.symmetry_residual(1e-6));
        }
    })
    .unwrap();
    assert!(r.converged);
    assert!(worst_norm < 1e-8, "{worst_norm}");
    println!("worst symmetry residual {worst_sym}");
    assert!(worst_sym < 0.25, "{worst_sym}");
}

#[test]
fn ber_trace_is_non_increasing() {
    for snr in [4.0, 8.0] {
        let d = table1::design(snr).unwrap();
        let e = d.to_ensemble().unwrap();
        let r = met_de_run(&e, &ChannelSpec::qam16(snr - 0.5).unwrap(), &coarse()).unwrap();
        for w in r.ber_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let d = table1::design(10.0).unwrap();
    let e = d.to_ensemble().unwrap();
    let spec = ChannelSpec::qam16(10.0).unwrap();
    let a = met_de_run(&e, &spec, &coarse()).unwrap();
    let b = met_de_run(&e, &spec, &coarse()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_csv(), b.to_csv());
}

#[test]
fn degrading_the_channel_never_helps() {
    let d = table1::design(6.0).unwrap();
    let e = d.to_ensemble().unwrap();
    let mut prev = true;
    for snr in [7.0, 6.5, 6.0, 5.5, 5.0] {
        let ok = met_de_run(&e, &ChannelSpec::qam16(snr).unwrap(), &coarse())
            .unwrap()
            .converged;
        assert!(prev || !ok, "converged at {snr} dB after failing above it");
        prev = ok;
    }
    assert!(!prev);
}

#[test]
fn six_db_design_converges_at_its_rate() {
    let d = table1::design(6.0).unwrap();
    let r = d.reconstructed_r_lt().unwrap();
    let spec = ChannelSpec::qam16(6.0).unwrap();
    let cfg = DeConfig::default();
    let at_rate = met_de_run(&d.build(r).unwrap(), &spec, &cfg).unwrap();
    assert!(at_rate.converged);
    assert!(at_rate.final_ber() < 1e-6);
    let inflated = met_de_run(&d.build(1.1 * r).unwrap(), &spec, &cfg).unwrap();
    assert!(!inflated.converged);
}

#[test]
fn stability_holds_for_every_design() {
    for d in table1::designs() {
        let e = d.to_ensemble().unwrap();
        let snr = d.design_snr_db.unwrap();
        let st = metraptor::de::stability_check(&e, &ChannelSpec::qam16(snr).unwrap()).unwrap();
        assert_eq!(st.lhs, 0.0);
        assert!(st.satisfied);
    }
}

#[test]
fn threshold_rate_grows_with_snr() {
    let d = table1::design(6.0).unwrap();
    let search = RateSearch {
        floor: 0.2,
        ceiling: 1.0,
        tolerance: 5e-3,
    };
    let at = |snr: f64| {
        max_realized_rate(
            &d.omega1,
            &d.omega2,
            d.precode,
            &ChannelSpec::qam16(snr).unwrap(),
            &coarse(),
            &search,
        )
        .unwrap()
        .r_lt
    };
    assert!(at(8.0) >= at(6.0));
}

#[test]
fn noiseless_rate_search_hits_ceiling() {
    let d = table1::design(4.0).unwrap();
    let r = max_realized_rate(
        &d.omega1,
        &d.omega2,
        d.precode,
        &ChannelSpec::qam16(60.0).unwrap(),
        &coarse(),
        &RateSearch {
            ceiling: 0.9,
            ..RateSearch::default()
        },
    )
    .unwrap();
    assert_eq!(r.r_lt, 0.9);
    assert_eq!(r.de_runs, 1);
}

#[test]
fn four_db_rate_efficiency_under_poisson_inputs() {
    let mut d = table1::design(4.0).unwrap();
    d.input_profile = InputProfile::TruncatedPoisson;
    let spec = ChannelSpec::qam16(4.0).unwrap();
    let cfg = DeConfig::default();
    let (mut lo, mut hi) = (0.3, 0.6);
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        if met_de_run(&d.build(mid).unwrap(), &spec, &cfg)
            .unwrap()
            .converged
        {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let eta = d.build(lo).unwrap().rate_efficiency(&spec).unwrap();
    assert!((eta - 0.9345).abs() <= 0.02, "{eta}");
}
