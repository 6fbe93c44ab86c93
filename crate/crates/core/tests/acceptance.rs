//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use metraptor::channel::{
    bit_channel_density, bit_level_bhattacharyya, modulation_capacity, ChannelSpec,
};
use metraptor::de::{
    met_de_run, near_fixed_point_slope, stability_check, stability_check_on, DeConfig,
};
use metraptor::degree::DegreeDistribution;
use metraptor::ensemble::{
    build_from_components, ChannelAssignment, ChkNodeType, MetRaptorEnsemble, PrecodeProfile,
    VarNodeType,
};
use metraptor::llr::{boxplus, LlrDensity, LlrGrid};
use metraptor::optimizer::{optimize, OptimizerConfig};
use metraptor::simulator::{outputs_for_rate, sample_code, simulate_code, SimConfig, Transmitter};
use metraptor::table1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_omega(rng: &mut ChaCha8Rng) -> DegreeDistribution {
    let k = rng.gen_range(1..8);
    let mut terms: Vec<(u32, f64)> = (0..k)
        .map(|_| (rng.gen_range(1..60), rng.gen_range(0.01..1.0)))
        .collect();
    terms.sort_by_key(|t| t.0);
    terms.dedup_by_key(|t| t.0);
    let s: f64 = terms.iter().map(|t| t.1).sum();
    DegreeDistribution::new(terms.into_iter().map(|(d, w)| (d, 0.5 * w / s)), 0.5).unwrap()
}

fn rate_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let pre = PrecodeProfile::new(rng.gen_range(2..6), rng.gen_range(8..80)).unwrap();
        let r_lt = rng.gen_range(0.2..=1.0);
        let e = build_from_components(
            pre,
            &random_omega(&mut rng),
            &random_omega(&mut rng),
            r_lt,
            16,
        )
        .map_err(|err| err.to_string())?;
        if !e.is_valid() {
            return Err(format!("invalid ensemble: {:?}", e.validate()));
        }
        let r = e.designed_rate().map_err(|err| err.to_string())?;
        worst = worst.max((r - r_lt * pre.rate()).abs());
    }
    check(
        worst <= 1e-12,
        format!("10000 ensembles, max |R - r_lt r_pre| = {worst:e}"),
    )
}

fn table_sums() -> Outcome {
    let mut worst = 0.0f64;
    for d in table1::designs() {
        for om in [&d.omega1, &d.omega2] {
            worst = worst.max((om.sum() - 0.5).abs());
        }
    }
    check(
        worst <= 5e-4,
        format!("8 lists, max |sum - 0.5| = {worst:e}"),
    )
}

fn rate_efficiency() -> Outcome {
    let cfg = DeConfig::default();
    let mut lines = Vec::new();
    let mut ok = true;
    for d in table1::designs() {
        let snr = d.design_snr_db.unwrap();
        let r = d.reconstructed_r_lt().map_err(|e| e.to_string())?;
        let e = d.build(0.98 * r).map_err(|e| e.to_string())?;
        let spec = ChannelSpec::qam16(snr).unwrap();
        let res = met_de_run(&e, &spec, &cfg).map_err(|e| e.to_string())?;
        ok &= res.converged;
        lines.push(format!(
            "{snr} dB: r_lt {:.4} {} in {} iterations (BER {:.2e})",
            0.98 * r,
            if res.converged {
                "converged"
            } else {
                "stalled"
            },
            res.iterations_used,
            res.final_ber()
        ));
    }
    check(ok, lines.join("; "))
}

fn unstable_toy() -> MetRaptorEnsemble {
    let p = ChannelAssignment::Punctured;
    let var = |degrees, channel, fraction| VarNodeType {
        degrees,
        channel,
        fraction,
    };
    MetRaptorEnsemble::new(
        vec![
            var([2, 1, 0, 0], p, 0.5),
            var([4, 1, 0, 0], p, 0.5),
            var([0, 0, 1, 0], ChannelAssignment::Channel1, 0.5),
            var([0, 0, 0, 1], ChannelAssignment::Channel2, 0.5),
        ],
        vec![
            ChkNodeType {
                degrees: [30, 0, 0, 0],
                fraction: 0.1,
            },
            ChkNodeType {
                degrees: [0, 1, 1, 0],
                fraction: 0.5,
            },
            ChkNodeType {
                degrees: [0, 1, 0, 1],
                fraction: 0.5,
            },
        ],
        1.0,
        0.9,
        PrecodeProfile::new(3, 30).unwrap(),
        16,
    )
}

fn stability() -> Outcome {
    let mut ok = true;
    let mut lines = Vec::new();
    for d in table1::designs() {
        let snr = d.design_snr_db.unwrap();
        let e = d.to_ensemble().map_err(|e| e.to_string())?;
        let st =
            stability_check(&e, &ChannelSpec::qam16(snr).unwrap()).map_err(|e| e.to_string())?;
        ok &= st.satisfied && st.lhs == 0.0;
        lines.push(format!("{snr} dB lhs {}", st.lhs));
    }
    let e = unstable_toy();
    let spec = ChannelSpec::qam16(6.0).unwrap();
    let grid = LlrGrid::new(25.0, 0.125).unwrap();
    let st = stability_check_on(&e, &spec, grid).map_err(|e| e.to_string())?;
    let ratio = near_fixed_point_slope(&e, &spec, grid, 1e-6, 4)
        .map_err(|e| e.to_string())?
        .last_ratio();
    ok &= st.lhs > 1.0 && (ratio / st.lhs - 1.0).abs() < 0.1;
    lines.push(format!("toy lhs {:.4}, slope {:.4}", st.lhs, ratio));
    check(ok, lines.join("; "))
}

fn random_density(rng: &mut ChaCha8Rng, grid: LlrGrid, span: i32) -> LlrDensity {
    let mut mass = vec![0.0; grid.len()];
    let k = rng.gen_range(1..12);
    let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
    let s: f64 = w.iter().sum();
    for x in w {
        let b = grid.zero_index() as i32 + rng.gen_range(-span..=span);
        mass[b as usize] += x / s;
    }
    LlrDensity::from_masses(grid, mass, 0.0).unwrap()
}

fn kernel() -> Outcome {
    let grid = LlrGrid::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut x = random_density(&mut rng, grid, 320);
    let mut worst_mass = 0.0f64;
    for _ in 0..10_000 {
        let b = random_density(&mut rng, grid, 320);
        x = if rng.gen_bool(0.5) {
            x.var_convolve(&b)
        } else {
            x.chk_convolve(&b)
        }
        .unwrap();
        worst_mass = worst_mass.max((x.total_mass() - 1.0).abs());
    }
    let mut worst_b = 0.0f64;
    for _ in 0..1000 {
        let a = random_density(&mut rng, grid, 160);
        let b = random_density(&mut rng, grid, 160);
        let c = a.var_convolve(&b).unwrap();
        worst_b = worst_b.max((c.bhattacharyya() - a.bhattacharyya() * b.bhattacharyya()).abs());
    }
    let mut worst_bins = 0.0f64;
    for _ in 0..2000 {
        let la = rng.gen_range(-480i32..=480) as f64 * grid.step();
        let lb = rng.gen_range(-480i32..=480) as f64 * grid.step();
        let c = LlrDensity::delta(grid, la)
            .chk_convolve(&LlrDensity::delta(grid, lb))
            .unwrap();
        let bin = c.masses().iter().position(|&m| m > 0.5).unwrap();
        worst_bins = worst_bins.max((grid.value(bin) - boxplus(la, lb)).abs() / grid.step());
    }
    check(
        worst_mass <= 1e-8 && worst_b <= 1e-6 && worst_bins <= 1.0,
        format!("mass error {worst_mass:e}, Bhattacharyya error {worst_b:e}, two-point error {worst_bins:.3} bins"),
    )
}

/// Bit-level mutual informations of the 4-PAM component by direct
/// integration of the conditional output densities.
fn pam_pid_capacity(sigma2: f64) -> f64 {
    let s5 = 5f64.sqrt();
    let pts = [
        (-3.0 / s5, [0u8, 0]),
        (-1.0 / s5, [0, 1]),
        (1.0 / s5, [1, 1]),
        (3.0 / s5, [1, 0]),
    ];
    let sigma = sigma2.sqrt();
    let h = sigma / 400.0;
    let lo = -3.0 / s5 - 12.0 * sigma;
    let steps = ((6.0 / s5 + 24.0 * sigma) / h).ceil() as usize;
    let g = |y: f64, x: f64| {
        (-(y - x) * (y - x) / (2.0 * sigma2)).exp() / (2.0 * std::f64::consts::PI * sigma2).sqrt()
    };
    let mut info = 0.0;
    for level in 0..2 {
        let mut acc = 0.0;
        for i in 0..=steps {
            let y = lo + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            let p: f64 = pts.iter().map(|(x, _)| g(y, *x)).sum::<f64>() / 4.0;
            for b in 0..2u8 {
                let pb: f64 = pts
                    .iter()
                    .filter(|(_, l)| l[level] == b)
                    .map(|(x, _)| g(y, *x))
                    .sum::<f64>()
                    / 2.0;
                if pb > 0.0 {
                    acc += w * h * 0.5 * pb * (pb / p).log2();
                }
            }
        }
        info += acc;
    }
    info
}

fn ks_distance(llrs: impl Iterator<Item = f64>, dens: &LlrDensity) -> (f64, usize) {
    let grid = dens.grid();
    let mut counts = vec![0usize; grid.len()];
    let mut n = 0;
    for l in llrs {
        counts[grid.index_of(l)] += 1;
        n += 1;
    }
    let (mut fe, mut fd, mut ks) = (0.0, 0.0, 0.0f64);
    for (c, p) in counts.iter().zip(dens.masses()) {
        fe += *c as f64 / n as f64;
        fd += p;
        ks = ks.max((fe - fd).abs());
    }
    (ks, n)
}

fn channel_oracles() -> Outcome {
    let mut worst_b = 0.0f64;
    for i in 0..=38 {
        let sigma2 = 0.1 + 0.05 * i as f64;
        let spec = ChannelSpec::bpsk(-10.0 * sigma2.log10()).unwrap();
        let b = bit_level_bhattacharyya(&spec, 1).map_err(|e| e.to_string())?;
        worst_b = worst_b.max((b - (-1.0 / (2.0 * sigma2)).exp()).abs());
    }
    let mut worst_c = 0.0f64;
    for snr in [0.0, 4.0, 6.0, 8.0, 10.0, 15.0, 20.0] {
        let spec = ChannelSpec::qam16(snr).unwrap();
        worst_c =
            worst_c.max((modulation_capacity(&spec) - 2.0 * pam_pid_capacity(spec.sigma2())).abs());
    }
    let grid = LlrGrid::default();
    let mut worst_ks = 0.0f64;
    let mut ks_ok = true;
    let samples = 1_000_000;
    for (spec, levels) in [
        (ChannelSpec::qam16(6.0).unwrap(), 2usize),
        (ChannelSpec::bpsk(2.0).unwrap(), 1),
    ] {
        let llrs = Transmitter::new(&spec).transmit(&vec![0; levels * samples], 99);
        for level in 1..=levels {
            let dens = bit_channel_density(&spec, level, grid).map_err(|e| e.to_string())?;
            let (ks, n) = ks_distance(llrs.iter().skip(level - 1).step_by(levels).copied(), &dens);
            ks_ok &= ks < 1.628 / (n as f64).sqrt();
            worst_ks = worst_ks.max(ks);
        }
    }
    check(
        worst_b <= 1e-4 && worst_c <= 1e-3 && ks_ok,
        format!(
            "BPSK Bhattacharyya error {worst_b:e}, PID capacity error {worst_c:e}, max KS {worst_ks:.2e} (critical {:.2e})",
            1.628 / (samples as f64).sqrt()
        ),
    )
}

fn finite_length() -> Outcome {
    let d = table1::design(8.0).unwrap();
    let r = d.reconstructed_r_lt().map_err(|e| e.to_string())?;
    let e = d.build(r).map_err(|e| e.to_string())?;
    let n = 10_000;
    let code = sample_code(&e, n, outputs_for_rate(n, r), 1).map_err(|e| e.to_string())?;
    let cfg = SimConfig {
        frames: 100,
        seed: 7,
        ..SimConfig::default()
    };
    let above =
        simulate_code(&code, &ChannelSpec::qam16(8.5).unwrap(), &cfg).map_err(|e| e.to_string())?;
    let below =
        simulate_code(&code, &ChannelSpec::qam16(6.5).unwrap(), &cfg).map_err(|e| e.to_string())?;
    check(
        above.ber < 1e-4 && below.fer >= 0.99,
        format!(
            "n {n}, m {}: 8.5 dB BER {:.3e} FER {:.3}; 6.5 dB FER {:.3}",
            code.m(),
            above.ber,
            above.fer,
            below.fer
        ),
    )
}

fn optimizer_regression() -> Outcome {
    let spec = ChannelSpec::qam16(6.0).unwrap();
    let cfg = OptimizerConfig {
        population_size: 8,
        generations: 3,
        adaptive_range_iters: 3,
        seed: 1,
        ..OptimizerConfig::default()
    };
    let de = DeConfig {
        grid: LlrGrid::new(30.0, 0.125).unwrap(),
        ..DeConfig::default()
    };
    let r = optimize(&spec, PrecodeProfile::default(), &cfg, &de).map_err(|e| e.to_string())?;
    let monotone = r
        .trace
        .windows(2)
        .all(|w| w[1].best_fitness >= w[0].best_fitness);
    check(
        r.rate_efficiency >= 0.93 && monotone,
        format!(
            "η {:.4} at r_lt {:.4}, trace non-decreasing: {monotone}",
            r.rate_efficiency, r.r_lt
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 rate identity", rate_identity),
        ("2 tabulated design transcription", table_sums),
        ("3 rate-efficiency reproduction", rate_efficiency),
        ("4 stability", stability),
        ("5 DE kernel properties", kernel),
        ("6 channel oracle agreement", channel_oracles),
        ("7 finite-length sanity", finite_length),
        ("8 optimizer regression", optimizer_regression),
    ];
    let only: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.starts_with(o.as_str())) {
            continue;
        }
        let t = Instant::now();
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "{tag} criterion {name} [{:.1}s]: {detail}",
            t.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
