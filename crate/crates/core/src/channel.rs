//! Gray-labelled PAM/QAM constellations over AWGN and their equivalent
//! binary-input bit channels.
//!
//! 16-QAM is handled as two independent Gray 4-PAM components (in-phase bits
//! 1 and 2, quadrature bits 3 and 4). The SNR `γ` is the per-dimension ratio
//! of the unit-energy component constellation to the noise variance, so
//! `σ² = 10^(-γ/10)`; for 16-QAM this coincides with `Es/N0`.
//!
//! Bit-channel densities are symmetrized the way an iid channel adapter would
//! do it: the LLR seen for a symbol whose bit is 1 has its sign flipped, and
//! the result is averaged over all symbols. That turns every bit level into a
//! symmetric binary-input channel with the same capacity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llr::{LlrDensity, LlrGrid};

/// Integration half-width around each constellation point, in noise std devs.
const SPAN_SIGMAS: f64 = 8.0;
/// Largest integration step over the channel output.
const MAX_Y_STEP: f64 = 1e-3;
/// Negative-side mass allowed to fall off the LLR grid.
const MAX_LEAKAGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Labeling {
    #[default]
    Gray,
}

/// Modulation order, SNR and labelling of a transmission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    modulation_order: u32,
    snr_db: f64,
    labeling: Labeling,
}

impl ChannelSpec {
    pub fn new(modulation_order: u32, snr_db: f64) -> Result<Self> {
        if !matches!(modulation_order, 2 | 4 | 16) {
            return Err(Error::Config(format!(
                "unsupported modulation order {modulation_order} (supported: 2, 4, 16)"
            )));
        }
        if !snr_db.is_finite() {
            return Err(Error::Config(format!("SNR must be finite, got {snr_db}")));
        }
        Ok(Self {
            modulation_order,
            snr_db,
            labeling: Labeling::Gray,
        })
    }

    pub fn qam16(snr_db: f64) -> Result<Self> {
        Self::new(16, snr_db)
    }

    pub fn bpsk(snr_db: f64) -> Result<Self> {
        Self::new(2, snr_db)
    }

    pub fn with_snr(&self, snr_db: f64) -> Result<Self> {
        Self::new(self.modulation_order, snr_db)
    }

    pub fn modulation_order(&self) -> u32 {
        self.modulation_order
    }

    pub fn snr_db(&self) -> f64 {
        self.snr_db
    }

    pub fn labeling(&self) -> Labeling {
        self.labeling
    }

    /// Bits per symbol, `q = log2 Q`.
    pub fn bits_per_symbol(&self) -> usize {
        self.modulation_order.trailing_zeros() as usize
    }

    /// Noise variance per real dimension.
    pub fn sigma2(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }

    /// Order of the real component constellation (2 or 4).
    pub fn component_order(&self) -> u32 {
        match self.modulation_order {
            2 => 2,
            _ => 4,
        }
    }

    /// Number of bit levels with distinct channel densities.
    pub fn distinct_levels(&self) -> usize {
        self.component_order().trailing_zeros() as usize
    }

    /// Maps a 1-based bit level of the full symbol to the 1-based bit level
    /// of its real component. For 16-QAM, levels 1 and 3 map to 1, and 2 and
    /// 4 map to 2.
    pub fn component_level(&self, bit_level: usize) -> Result<usize> {
        let q = self.bits_per_symbol();
        if bit_level == 0 || bit_level > q {
            return Err(Error::Config(format!(
                "bit level {bit_level} outside 1..={q}"
            )));
        }
        let per = self.distinct_levels();
        Ok((bit_level - 1) % per + 1)
    }

    pub fn name(&self) -> &'static str {
        match self.modulation_order {
            2 => "bpsk",
            4 => "pam4",
            _ => "qam16",
        }
    }

    pub fn from_name(name: &str, snr_db: f64) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "bpsk" | "2" => Self::new(2, snr_db),
            "pam4" | "4pam" | "4" => Self::new(4, snr_db),
            "qam16" | "16qam" | "16" => Self::new(16, snr_db),
            other => Err(Error::Config(format!("unknown modulation '{other}'"))),
        }
    }
}

/// Real-valued component constellation with its Gray labels.
///
/// Labels are stored as integers whose most significant of `bits` bits is
/// bit level 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub points: Vec<f64>,
    pub labels: Vec<u32>,
    pub bits: usize,
}

impl Constellation {
    /// Bit `level` (1-based, left-most first) of the label of point `idx`.
    pub fn bit(&self, idx: usize, level: usize) -> u8 {
        ((self.labels[idx] >> (self.bits - level)) & 1) as u8
    }

    /// Point whose label equals `label`.
    pub fn point_for_label(&self, label: u32) -> f64 {
        let idx = self
            .labels
            .iter()
            .position(|&l| l == label)
            .expect("labels are a bijection");
        self.points[idx]
    }

    pub fn average_energy(&self) -> f64 {
        self.points.iter().map(|x| x * x).sum::<f64>() / self.points.len() as f64
    }
}

/// Unit-energy Gray constellation of the real component of `spec`.
///
/// BPSK maps bit 0 to `+1`. 4-PAM uses labels `00, 01, 11, 10` over ascending
/// amplitudes `{-3, -1, 1, 3}/√5`; 16-QAM returns that 4-PAM component.
pub fn build_constellation(spec: &ChannelSpec) -> Constellation {
    match spec.component_order() {
        2 => Constellation {
            points: vec![-1.0, 1.0],
            labels: vec![1, 0],
            bits: 1,
        },
        _ => {
            let s = 5f64.sqrt();
            Constellation {
                points: vec![-3.0 / s, -1.0 / s, 1.0 / s, 3.0 / s],
                labels: vec![0b00, 0b01, 0b11, 0b10],
                bits: 2,
            }
        }
    }
}

/// `ln Σ_{bit=0} p(y|x) − ln Σ_{bit=1} p(y|x)` for component bit level
/// `level` (1-based).
pub fn llr_of_observation(c: &Constellation, level: usize, y: f64, sigma2: f64) -> f64 {
    let mut m0 = f64::NEG_INFINITY;
    let mut m1 = f64::NEG_INFINITY;
    let mut exps = [0.0f64; 16];
    for (i, &x) in c.points.iter().enumerate() {
        let e = -(y - x) * (y - x) / (2.0 * sigma2);
        exps[i] = e;
        if c.bit(i, level) == 0 {
            m0 = m0.max(e);
        } else {
            m1 = m1.max(e);
        }
    }
    let (mut s0, mut s1) = (0.0, 0.0);
    for i in 0..c.points.len() {
        if c.bit(i, level) == 0 {
            s0 += (exps[i] - m0).exp();
        } else {
            s1 += (exps[i] - m1).exp();
        }
    }
    (m0 + s0.ln()) - (m1 + s1.ln())
}

/// Visits `(weight, symmetrized LLR)` samples of one component bit level,
/// integrating each point's Gaussian on a uniform output grid. Weights for
/// each point sum to `1/|X|`.
fn for_each_symmetrized_sample(spec: &ChannelSpec, level: usize, mut f: impl FnMut(f64, f64)) {
    let c = build_constellation(spec);
    let sigma2 = spec.sigma2();
    let sigma = sigma2.sqrt();
    let h = MAX_Y_STEP.min(sigma / 64.0);
    let n_half = (SPAN_SIGMAS * sigma / h).ceil() as i64;
    let weights: Vec<f64> = (-n_half..=n_half)
        .map(|i| {
            let t = i as f64 * h;
            (-t * t / (2.0 * sigma2)).exp()
        })
        .collect();
    let wsum: f64 = weights.iter().sum();
    let per_point = 1.0 / c.points.len() as f64;
    for (idx, &x) in c.points.iter().enumerate() {
        let flip = if c.bit(idx, level) == 1 { -1.0 } else { 1.0 };
        for (i, &w) in weights.iter().enumerate() {
            let y = x + (i as i64 - n_half) as f64 * h;
            let l = flip * llr_of_observation(&c, level, y, sigma2);
            f(per_point * w / wsum, l);
        }
    }
}

/// Quantized, symmetrized LLR density of bit level `bit_level` (1-based, of
/// the full symbol).
///
/// Positive LLRs beyond the grid saturate into the top bin. Negative mass
/// beyond the grid above 1e-6 means the grid is too narrow and is an error.
pub fn bit_channel_density(
    spec: &ChannelSpec,
    bit_level: usize,
    grid: LlrGrid,
) -> Result<LlrDensity> {
    let level = spec.component_level(bit_level)?;
    let mut mass = vec![0.0; grid.len()];
    let mut leak = 0.0;
    let lower = grid.min() - 0.5 * grid.step();
    for_each_symmetrized_sample(spec, level, |w, l| {
        if l < lower {
            leak += w;
        }
        mass[grid.index_of(l)] += w;
    });
    if leak > MAX_LEAKAGE {
        return Err(Error::Grid(format!(
            "LLR grid [{}, {}] leaks {leak:e} of negative mass at {} dB",
            grid.min(),
            grid.max(),
            spec.snr_db()
        )));
    }
    let total: f64 = mass.iter().sum();
    mass.iter_mut().for_each(|m| *m /= total);
    Ok(LlrDensity::from_raw(grid, mass, 0.0, true))
}

/// Densities of the distinct component bit levels, index 0 = level 1.
pub fn component_densities(spec: &ChannelSpec, grid: LlrGrid) -> Result<Vec<LlrDensity>> {
    (1..=spec.distinct_levels())
        .map(|l| bit_channel_density(spec, l, grid))
        .collect()
}

/// `log2(1 + e^{-l})` without overflow.
fn log2_1p_exp_neg(l: f64) -> f64 {
    let v = if l >= 0.0 {
        (-l).exp().ln_1p()
    } else {
        -l + l.exp().ln_1p()
    };
    v / std::f64::consts::LN_2
}

/// Capacity of one symmetrized bit channel, `1 − E[log2(1 + e^{-L})]`.
pub fn bit_level_capacity(spec: &ChannelSpec, bit_level: usize) -> Result<f64> {
    let level = spec.component_level(bit_level)?;
    let mut loss = 0.0;
    for_each_symmetrized_sample(spec, level, |w, l| loss += w * log2_1p_exp_neg(l));
    Ok(1.0 - loss)
}

/// Bhattacharyya constant `E[e^{-L/2}]` of a bit channel, from the continuous
/// LLR rather than its quantized density.
pub fn bit_level_bhattacharyya(spec: &ChannelSpec, bit_level: usize) -> Result<f64> {
    let level = spec.component_level(bit_level)?;
    let mut b = 0.0;
    for_each_symmetrized_sample(spec, level, |w, l| b += w * (-0.5 * l).exp());
    Ok(b)
}

/// Parallel-independent-decoding capacity in bits per symbol: the sum of the
/// `q` bit-level capacities.
pub fn modulation_capacity(spec: &ChannelSpec) -> f64 {
    let per_component: f64 = (1..=spec.distinct_levels())
        .map(|l| bit_level_capacity(spec, l).expect("component level in range"))
        .sum();
    per_component * (spec.bits_per_symbol() / spec.distinct_levels()) as f64
}

/// Coded-modulation capacity `I(X; Y)` in bits per symbol (uniform inputs).
pub fn coded_modulation_capacity(spec: &ChannelSpec) -> f64 {
    let c = build_constellation(spec);
    let sigma2 = spec.sigma2();
    let sigma = sigma2.sqrt();
    let h = MAX_Y_STEP.min(sigma / 64.0);
    let n_half = (SPAN_SIGMAS * sigma / h).ceil() as i64;
    let m = c.points.len() as f64;
    let weights: Vec<f64> = (-n_half..=n_half)
        .map(|i| {
            let t = i as f64 * h;
            (-t * t / (2.0 * sigma2)).exp()
        })
        .collect();
    let wsum: f64 = weights.iter().sum();
    let mut loss = 0.0;
    for &x in &c.points {
        for (i, &w) in weights.iter().enumerate() {
            let y = x + (i as i64 - n_half) as f64 * h;
            let e0 = -(y - x) * (y - x) / (2.0 * sigma2);
            let s: f64 = c
                .points
                .iter()
                .map(|&xp| (-(y - xp) * (y - xp) / (2.0 * sigma2) - e0).exp())
                .sum();
            loss += w / wsum * s.log2();
        }
    }
    let per_component = m.log2() - loss / m;
    per_component * (spec.bits_per_symbol() as f64 / m.log2())
}
