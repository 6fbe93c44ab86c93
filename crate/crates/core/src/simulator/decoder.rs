//! Flooding sum-product decoding over the joint precode + LT graph.

use super::code::CodeInstance;

/// Message magnitude limit.
pub const LLR_CLAMP: f64 = 30.0;

/// Outcome of one decoding run.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    /// Hard decisions on the `n` input bits.
    pub inputs: Vec<u8>,
    pub iterations: usize,
    /// True when the stop rule fired before the iteration cap.
    pub converged: bool,
}

/// Joint decoder for the first `m` outputs of a code.
#[derive(Debug, Clone)]
pub struct JointDecoder<'a> {
    code: &'a CodeInstance,
    m: usize,
    /// Input index per LT edge, grouped by output.
    lt_var: Vec<u32>,
    lt_start: Vec<usize>,
    /// Input index per precode edge, grouped by check.
    pre_var: Vec<u32>,
    pre_start: Vec<usize>,
    /// Per input: edge ids, LT edges first then precode edges offset by
    /// the LT edge count.
    var_edges: Vec<u32>,
    var_start: Vec<usize>,
}

impl<'a> JointDecoder<'a> {
    /// Decoder over all outputs of `code`.
    pub fn new(code: &'a CodeInstance) -> Self {
        Self::with_outputs(code, code.m())
    }

    /// Decoder that only uses outputs `0..m`.
    pub fn with_outputs(code: &'a CodeInstance, m: usize) -> Self {
        let m = m.min(code.m());
        let (lt_var, lt_start) = flatten(code.outputs()[..m].iter().map(|o| o.inputs.as_slice()));
        let (pre_var, pre_start) = flatten(code.precode_checks().iter().map(|c| c.as_slice()));
        let n = code.n();
        let mut deg = vec![0usize; n];
        lt_var
            .iter()
            .chain(&pre_var)
            .for_each(|&v| deg[v as usize] += 1);
        let mut var_start = vec![0usize; n + 1];
        for v in 0..n {
            var_start[v + 1] = var_start[v] + deg[v];
        }
        let mut fill = var_start[..n].to_vec();
        let mut var_edges = vec![0u32; var_start[n]];
        for (e, &v) in lt_var.iter().chain(&pre_var).enumerate() {
            var_edges[fill[v as usize]] = e as u32;
            fill[v as usize] += 1;
        }
        Self {
            code,
            m,
            lt_var,
            lt_start,
            pre_var,
            pre_start,
            var_edges,
            var_start,
        }
    }

    pub fn outputs_used(&self) -> usize {
        self.m
    }

    /// Decodes from channel LLRs of the outputs in use (extra entries are
    /// ignored).
    ///
    /// Stops once the hard decisions satisfy every precode check and no
    /// input total is exactly zero.
    pub fn decode(&self, llrs: &[f64], max_iterations: usize) -> DecodeOutcome {
        assert!(
            llrs.len() >= self.m,
            "need {} LLRs, got {}",
            self.m,
            llrs.len()
        );
        let n = self.code.n();
        let n_lt = self.lt_var.len();
        let edges = n_lt + self.pre_var.len();
        let mut v2c = vec![0.0f64; edges];
        let mut c2v = vec![0.0f64; edges];
        let mut total = vec![0.0f64; n];
        let mut hard = vec![0u8; n];
        let chan: Vec<f64> = llrs[..self.m].iter().map(|&l| half_tanh(l)).collect();
        let mut scratch = Vec::new();

        for it in 1..=max_iterations {
            for (o, w) in self.lt_start.windows(2).enumerate() {
                check_update(w[0], w[1], Some(chan[o]), &v2c, &mut c2v, &mut scratch);
            }
            for w in self.pre_start.windows(2) {
                check_update(n_lt + w[0], n_lt + w[1], None, &v2c, &mut c2v, &mut scratch);
            }
            let mut undecided = false;
            for v in 0..n {
                let es = &self.var_edges[self.var_start[v]..self.var_start[v + 1]];
                let t: f64 = es.iter().map(|&e| c2v[e as usize]).sum();
                for &e in es {
                    v2c[e as usize] = (t - c2v[e as usize]).clamp(-LLR_CLAMP, LLR_CLAMP);
                }
                total[v] = t;
                hard[v] = u8::from(t < 0.0);
                undecided |= t == 0.0;
            }
            if !undecided && self.code.precode_syndrome_zero(&hard) {
                return DecodeOutcome {
                    inputs: hard,
                    iterations: it,
                    converged: true,
                };
            }
        }
        DecodeOutcome {
            inputs: hard,
            iterations: max_iterations,
            converged: false,
        }
    }
}

fn flatten<'b>(lists: impl Iterator<Item = &'b [u32]>) -> (Vec<u32>, Vec<usize>) {
    let mut flat = Vec::new();
    let mut start = vec![0];
    for l in lists {
        flat.extend_from_slice(l);
        start.push(flat.len());
    }
    (flat, start)
}

fn half_tanh(l: f64) -> f64 {
    (l.clamp(-LLR_CLAMP, LLR_CLAMP) / 2.0).tanh()
}

fn atanh2(t: f64) -> f64 {
    (2.0 * t.atanh()).clamp(-LLR_CLAMP, LLR_CLAMP)
}

/// Tanh-rule update on edges `lo..hi`, using prefix and suffix products so
/// that zero messages need no special case.
fn check_update(
    lo: usize,
    hi: usize,
    extra: Option<f64>,
    v2c: &[f64],
    c2v: &mut [f64],
    scratch: &mut Vec<f64>,
) {
    let d = hi - lo;
    scratch.clear();
    scratch.extend(v2c[lo..hi].iter().map(|&l| half_tanh(l)));
    let mut prefix = extra.unwrap_or(1.0);
    for k in 0..d {
        c2v[lo + k] = prefix;
        prefix *= scratch[k];
    }
    let mut suffix = 1.0;
    for k in (0..d).rev() {
        c2v[lo + k] = atanh2(c2v[lo + k] * suffix);
        suffix *= scratch[k];
    }
}
