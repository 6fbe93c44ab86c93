//! Finite-length Monte-Carlo simulation of sampled codes.

mod code;
mod decoder;
mod gf2;
mod transmit;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use code::{apportion, sample_code, CodeInstance, CodeRecord, LtOutput};
pub use decoder::{DecodeOutcome, JointDecoder, LLR_CLAMP};
pub use transmit::Transmitter;

use crate::channel::ChannelSpec;
use crate::de::fmt12;
use crate::ensemble::MetRaptorEnsemble;
use crate::error::{Error, Result};
use crate::optimizer::map_indices;

/// Monte-Carlo settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub frames: usize,
    pub max_iterations: usize,
    pub seed: u64,
    pub scramble: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            frames: 100,
            max_iterations: 300,
            seed: 0,
            scramble: true,
        }
    }
}

/// Aggregate statistics of one simulation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub snr_db: f64,
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub realized_lt_rate: f64,
    pub ber: f64,
    pub fer: f64,
    pub frames: usize,
    pub mean_iterations: f64,
    pub max_iterations: usize,
}

impl SimReport {
    pub const CSV_HEADER: &'static str =
        "snr_db,n,k,m,realized_lt_rate,ber,fer,frames,mean_iterations,max_iterations";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            fmt12(self.snr_db),
            self.n,
            self.k,
            self.m,
            fmt12(self.realized_lt_rate),
            fmt12(self.ber),
            fmt12(self.fer),
            self.frames,
            fmt12(self.mean_iterations),
            self.max_iterations
        )
    }

    pub fn to_csv(reports: &[SimReport]) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in reports {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }
}

/// Result of rateless operation: outputs are added until decoding succeeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub snr_db: f64,
    pub n: usize,
    pub frames: usize,
    /// Frames that never decoded within the available outputs.
    pub failures: usize,
    /// Mean outputs needed over successful frames.
    pub mean_outputs: f64,
    pub realized_lt_rate: f64,
}

/// Even output count closest to `n / r_lt`.
pub fn outputs_for_rate(n: usize, r_lt: f64) -> usize {
    let m = (n as f64 / r_lt / 2.0).round() as usize * 2;
    m.max(2)
}

/// Samples one code at the ensemble's rate and simulates it.
pub fn simulate(
    e: &MetRaptorEnsemble,
    spec: &ChannelSpec,
    n: usize,
    cfg: &SimConfig,
) -> Result<SimReport> {
    let code = sample_code(e, n, outputs_for_rate(n, e.r_lt()), cfg.seed)?;
    simulate_code(&code, spec, cfg)
}

/// Simulates `cfg.frames` frames over a fixed code using all its outputs.
pub fn simulate_code(
    code: &CodeInstance,
    spec: &ChannelSpec,
    cfg: &SimConfig,
) -> Result<SimReport> {
    Ok(simulate_prefixes(code, spec, &[code.m()], cfg)?.remove(0))
}

/// Frames shared across output prefixes: for each `m` in `ms` the decoder
/// sees the first `m` LLRs of the same transmissions.
pub fn simulate_prefixes(
    code: &CodeInstance,
    spec: &ChannelSpec,
    ms: &[usize],
    cfg: &SimConfig,
) -> Result<Vec<SimReport>> {
    validate(cfg)?;
    for &m in ms {
        if m == 0 || m > code.m() {
            return Err(Error::Config(format!("prefix {m} not in 1..={}", code.m())));
        }
    }
    let tx = Transmitter::new(spec).with_scrambling(cfg.scramble);
    let decoders: Vec<JointDecoder> = ms
        .iter()
        .map(|&m| JointDecoder::with_outputs(code, m))
        .collect();
    let per_frame: Vec<Vec<(usize, usize)>> = map_indices(cfg.frames, |f| {
        let (info, llrs) = frame(code, &tx, cfg.seed, f);
        decoders
            .iter()
            .map(|d| {
                let out = d.decode(&llrs, cfg.max_iterations);
                (info_errors(code, &info, &out.inputs), out.iterations)
            })
            .collect()
    });
    let k = code.k();
    Ok(ms
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let errs: usize = per_frame.iter().map(|r| r[i].0).sum();
            let bad = per_frame.iter().filter(|r| r[i].0 > 0).count();
            let its: Vec<usize> = per_frame.iter().map(|r| r[i].1).collect();
            SimReport {
                snr_db: spec.snr_db(),
                n: code.n(),
                k,
                m,
                realized_lt_rate: code.n() as f64 / m as f64,
                ber: errs as f64 / (k * cfg.frames) as f64,
                fer: bad as f64 / cfg.frames as f64,
                frames: cfg.frames,
                mean_iterations: its.iter().sum::<usize>() as f64 / cfg.frames as f64,
                max_iterations: its.iter().copied().max().unwrap_or(0),
            }
        })
        .collect())
}

/// Rateless operation: each frame tries `step, 2·step, …` outputs until the
/// stop rule fires.
pub fn estimate_overhead(
    code: &CodeInstance,
    spec: &ChannelSpec,
    step: usize,
    cfg: &SimConfig,
) -> Result<OverheadReport> {
    validate(cfg)?;
    if step == 0 || !step.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "step {step} must be even and positive"
        )));
    }
    let tx = Transmitter::new(spec).with_scrambling(cfg.scramble);
    let decoders: Vec<JointDecoder> = (1..=code.m() / step)
        .map(|i| JointDecoder::with_outputs(code, i * step))
        .collect();
    let needed: Vec<Option<usize>> = map_indices(cfg.frames, |f| {
        let (_, llrs) = frame(code, &tx, cfg.seed, f);
        decoders
            .iter()
            .find(|d| d.decode(&llrs, cfg.max_iterations).converged)
            .map(|d| d.outputs_used())
    });
    let ok: Vec<usize> = needed.iter().flatten().copied().collect();
    let mean = if ok.is_empty() {
        f64::NAN
    } else {
        ok.iter().sum::<usize>() as f64 / ok.len() as f64
    };
    Ok(OverheadReport {
        snr_db: spec.snr_db(),
        n: code.n(),
        frames: cfg.frames,
        failures: cfg.frames - ok.len(),
        mean_outputs: mean,
        realized_lt_rate: code.n() as f64 / mean,
    })
}

fn validate(cfg: &SimConfig) -> Result<()> {
    if cfg.frames == 0 {
        return Err(Error::Config("frames must be positive".into()));
    }
    if cfg.max_iterations == 0 {
        return Err(Error::Config("max_iterations must be positive".into()));
    }
    Ok(())
}

/// Random information bits and the channel LLRs of their codeword.
fn frame(code: &CodeInstance, tx: &Transmitter, seed: u64, f: usize) -> (Vec<u8>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(16 + f as u64);
    let info: Vec<u8> = (0..code.k()).map(|_| rng.gen_range(0..2)).collect();
    let y = code.encode(&info).expect("info length matches k");
    let llrs = tx.transmit(&y, rng.gen());
    (info, llrs)
}

fn info_errors(code: &CodeInstance, info: &[u8], decided: &[u8]) -> usize {
    code.info_positions()
        .iter()
        .zip(info)
        .filter(|(&p, &b)| decided[p] != b)
        .count()
}
