//! Gray mapping, AWGN and per-bit LLR demapping with sign scrambling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::channel::{build_constellation, llr_of_observation, ChannelSpec, Constellation};

const NOISE_STREAM: u64 = 1;
const SCRAMBLE_STREAM: u64 = 2;

/// Transmits bits over the real component of `spec`.
///
/// For 4-PAM components, bits `2t` and `2t + 1` share one real symbol as
/// component levels 1 and 2; two consecutive real symbols make up one
/// 16-QAM symbol. BPSK carries one bit per real symbol.
#[derive(Debug, Clone)]
pub struct Transmitter {
    spec: ChannelSpec,
    constellation: Constellation,
    scramble: bool,
}

impl Transmitter {
    pub fn new(spec: &ChannelSpec) -> Self {
        Self {
            spec: *spec,
            constellation: build_constellation(spec),
            scramble: true,
        }
    }

    /// Turns the sign scrambler on or off.
    pub fn with_scrambling(mut self, on: bool) -> Self {
        self.scramble = on;
        self
    }

    pub fn bits_per_real_symbol(&self) -> usize {
        self.constellation.bits
    }

    /// Channel LLRs (positive favours 0) for `bits`.
    pub fn transmit(&self, bits: &[u8], seed: u64) -> Vec<f64> {
        let q = self.constellation.bits;
        let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
        noise_rng.set_stream(NOISE_STREAM);
        let mut scr_rng = ChaCha8Rng::seed_from_u64(seed);
        scr_rng.set_stream(SCRAMBLE_STREAM);
        let sigma2 = self.spec.sigma2();
        let normal = Normal::new(0.0, sigma2.sqrt()).expect("positive noise variance");

        let mut llrs = Vec::with_capacity(bits.len());
        for chunk in bits.chunks(q) {
            let mut flips = [0u8; 2];
            let mut label = 0u32;
            for l in 0..q {
                let s = if self.scramble {
                    scr_rng.gen_range(0..2u8)
                } else {
                    0
                };
                flips[l] = s;
                let b = chunk.get(l).copied().unwrap_or(0) & 1;
                label = (label << 1) | u32::from(b ^ s);
            }
            let y = self.constellation.point_for_label(label) + normal.sample(&mut noise_rng);
            for l in 0..chunk.len() {
                let llr = llr_of_observation(&self.constellation, l + 1, y, sigma2);
                llrs.push(if flips[l] == 1 { -llr } else { llr });
            }
        }
        llrs
    }
}
