use std::collections::BTreeMap;

use metraptor::channel::{bit_channel_density, ChannelSpec};
use metraptor::ensemble::MetRaptorEnsemble;
use metraptor::llr::LlrGrid;
use metraptor::simulator::{
    outputs_for_rate, sample_code, simulate_code, simulate_prefixes, CodeInstance, JointDecoder,
    SimConfig, Transmitter,
};
use metraptor::table1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn row(snr: f64) -> (MetRaptorEnsemble, f64) {
    let d = table1::design(snr).unwrap();
    let r = d.reconstructed_r_lt().unwrap();
    (d.build(r).unwrap(), r)
}

/// Upper 1% point of χ² with `k` degrees of freedom (Wilson–Hilferty).
fn chi2_crit_1pct(k: usize) -> f64 {
    let k = k as f64;
    let z = 2.326_347_874;
    k * (1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt()).powi(3)
}

#[test]
fn output_degree_histograms_pass_chi_square() {
    let (e, r) = row(8.0);
    let n = 6000;
    let code = sample_code(&e, n, outputs_for_rate(n, r), 3).unwrap();
    let (om1, om2) = e.lt_distributions();
    for (level, om) in [om1, om2].iter().enumerate() {
        let mut hist: BTreeMap<u32, usize> = BTreeMap::new();
        for o in code.outputs().iter().filter(|o| o.level as usize == level) {
            *hist.entry(o.inputs.len() as u32).or_insert(0) += 1;
        }
        let total: usize = hist.values().sum();
        assert_eq!(total, code.m() / 2);
        let mut chi2 = 0.0;
        for (d, p) in om.iter() {
            let expected = total as f64 * p / 0.5;
            let seen = hist.remove(&d).unwrap_or(0) as f64;
            chi2 += (seen - expected).powi(2) / expected;
        }
        assert!(hist.is_empty(), "unexpected degrees {hist:?}");
        let df = om.iter().count() - 1;
        assert!(chi2 < chi2_crit_1pct(df), "level {level}: χ² = {chi2}");
    }
}

#[test]
fn precode_is_regular_at_table_size() {
    let (e, r) = row(8.0);
    let code = sample_code(&e, 6000, outputs_for_rate(6000, r), 3).unwrap();
    assert_eq!(code.precode_checks().len(), 300);
    let mut deg = vec![0u32; 6000];
    for c in code.precode_checks() {
        assert_eq!(c.len(), 60);
        c.iter().for_each(|&v| deg[v as usize] += 1);
    }
    assert!(deg.iter().all(|&d| d == 3));
    assert_eq!(code.k(), 5700);
}

#[test]
fn same_seed_same_code_and_encoding_is_linear() {
    let (e, r) = row(6.0);
    let m = outputs_for_rate(2000, r);
    let a = sample_code(&e, 2000, m, 17).unwrap();
    let b = sample_code(&e, 2000, m, 17).unwrap();
    assert_eq!(a, b);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let u: Vec<u8> = (0..a.k()).map(|_| rng.gen_range(0..2)).collect();
        let v: Vec<u8> = (0..a.k()).map(|_| rng.gen_range(0..2)).collect();
        let w: Vec<u8> = u.iter().zip(&v).map(|(x, y)| x ^ y).collect();
        let (eu, ev, ew) = (
            a.encode(&u).unwrap(),
            a.encode(&v).unwrap(),
            a.encode(&w).unwrap(),
        );
        assert!(eu.iter().zip(&ev).zip(&ew).all(|((x, y), z)| x ^ y == *z));
    }
}

#[test]
fn record_replays_to_the_same_code() {
    let (e, r) = row(4.0);
    let a = sample_code(&e, 1000, outputs_for_rate(1000, r), 2).unwrap();
    let json = serde_json::to_string(&a.to_record()).unwrap();
    let b = CodeInstance::from_record(serde_json::from_str(&json).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn noiseless_channel_recovers_every_frame() {
    let (e, r) = row(10.0);
    let code = sample_code(&e, 2000, outputs_for_rate(2000, r), 5).unwrap();
    let spec = ChannelSpec::qam16(60.0).unwrap();
    let cfg = SimConfig {
        frames: 5,
        ..SimConfig::default()
    };
    let rep = simulate_code(&code, &spec, &cfg).unwrap();
    assert_eq!(rep.ber, 0.0);
    assert!(rep.max_iterations <= 20, "{}", rep.max_iterations);
}

#[test]
fn decoder_is_deterministic_on_noisy_input() {
    let (e, r) = row(8.0);
    let code = sample_code(&e, 2000, outputs_for_rate(2000, r), 5).unwrap();
    let spec = ChannelSpec::qam16(8.0).unwrap();
    let y = code.encode(&vec![1; code.k()]).unwrap();
    let llrs = Transmitter::new(&spec).transmit(&y, 3);
    let d = JointDecoder::new(&code);
    assert_eq!(d.decode(&llrs, 50), d.decode(&llrs, 50));
}

#[test]
fn ber_does_not_increase_with_more_outputs() {
    let (e, r) = row(8.0);
    let n = 2000;
    let m0 = outputs_for_rate(n, r);
    let code = sample_code(&e, n, outputs_for_rate(n, r / 1.2), 8).unwrap();
    let ms: Vec<usize> = [0.8, 0.9, 1.0, 1.1, 1.2]
        .iter()
        .map(|f| ((m0 as f64 * f / 2.0).round() as usize * 2).min(code.m()))
        .collect();
    let spec = ChannelSpec::qam16(8.5).unwrap();
    let cfg = SimConfig {
        frames: 20,
        max_iterations: 200,
        seed: 4,
        ..SimConfig::default()
    };
    let reps = simulate_prefixes(&code, &spec, &ms, &cfg).unwrap();
    for w in reps.windows(2) {
        assert!(
            w[1].ber <= w[0].ber,
            "m {} → {}: {} > {}",
            w[0].m,
            w[1].m,
            w[1].ber,
            w[0].ber
        );
    }
    assert!(reps[0].ber > reps[4].ber);
}

#[test]
fn empirical_llrs_match_channel_density() {
    let spec = ChannelSpec::qam16(6.0).unwrap();
    let grid = LlrGrid::default();
    let samples = 200_000;
    let llrs = Transmitter::new(&spec).transmit(&vec![0; 2 * samples], 21);
    for level in [1usize, 2] {
        let dens = bit_channel_density(&spec, level, grid).unwrap();
        let mut counts = vec![0usize; grid.len()];
        for l in llrs.iter().skip(level - 1).step_by(2) {
            counts[grid.index_of(*l)] += 1;
        }
        let (mut fe, mut fd, mut ks) = (0.0, 0.0f64, 0.0f64);
        for (c, p) in counts.iter().zip(dens.masses()) {
            fe += *c as f64 / samples as f64;
            fd += p;
            ks = ks.max((fe - fd).abs());
        }
        let crit = 1.628 / (samples as f64).sqrt();
        assert!(ks < crit, "level {level}: KS {ks} vs {crit}");
    }
}
