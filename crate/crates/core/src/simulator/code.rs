//! Sampling a concrete Raptor code from an ensemble.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{CheckKind, MetRaptorEnsemble};
use crate::error::{Error, Result};

use super::gf2::{BitMatrix, SystematicForm};

const CYCLE_PASSES: usize = 4;

/// One LT output bit: the inputs it XORs and the channel class it uses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LtOutput {
    /// 0 for the first channel class, 1 for the second.
    pub level: u8,
    pub inputs: Vec<u32>,
}

/// A sampled precode + LT graph with its systematic encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeInstance {
    n: usize,
    seed: u64,
    precode_checks: Vec<Vec<u32>>,
    outputs: Vec<LtOutput>,
    systematic: SystematicForm,
}

/// Serializable graph description; the encoder is rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeRecord {
    pub n: usize,
    pub seed: u64,
    pub precode_checks: Vec<Vec<u32>>,
    pub outputs: Vec<LtOutput>,
}

impl CodeInstance {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of information bits.
    pub fn k(&self) -> usize {
        self.systematic.info_positions().len()
    }

    pub fn m(&self) -> usize {
        self.outputs.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn precode_checks(&self) -> &[Vec<u32>] {
        &self.precode_checks
    }

    /// Outputs alternate between the two channel classes, starting with
    /// class 0, so every even-length prefix is balanced.
    pub fn outputs(&self) -> &[LtOutput] {
        &self.outputs
    }

    /// Input positions that carry the information bits.
    pub fn info_positions(&self) -> &[usize] {
        self.systematic.info_positions()
    }

    pub fn to_record(&self) -> CodeRecord {
        CodeRecord {
            n: self.n,
            seed: self.seed,
            precode_checks: self.precode_checks.clone(),
            outputs: self.outputs.clone(),
        }
    }

    pub fn from_record(r: CodeRecord) -> Result<Self> {
        for o in &r.outputs {
            if o.level > 1 || o.inputs.iter().any(|&i| i as usize >= r.n) {
                return Err(Error::Config("LT output refers to a missing input".into()));
            }
        }
        let systematic = SystematicForm::new(parity_matrix(r.n, &r.precode_checks)?);
        Ok(Self {
            n: r.n,
            seed: r.seed,
            precode_checks: r.precode_checks,
            outputs: r.outputs,
            systematic,
        })
    }

    /// Precode codeword (the `n` input bits) for `info`.
    pub fn precode_encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        if info.len() != self.k() {
            return Err(Error::Config(format!(
                "expected {} information bits, got {}",
                self.k(),
                info.len()
            )));
        }
        Ok(self.systematic.encode(info))
    }

    /// LT output bits: each is the XOR of its input neighbours.
    pub fn lt_encode(&self, inputs: &[u8]) -> Vec<u8> {
        self.outputs
            .iter()
            .map(|o| o.inputs.iter().fold(0, |acc, &i| acc ^ inputs[i as usize]))
            .collect()
    }

    /// Precode encoding followed by LT encoding.
    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        Ok(self.lt_encode(&self.precode_encode(info)?))
    }

    /// True when `x` satisfies every precode check.
    pub fn precode_syndrome_zero(&self, x: &[u8]) -> bool {
        self.precode_checks
            .iter()
            .all(|c| c.iter().fold(0, |acc, &v| acc ^ x[v as usize]) == 0)
    }
}

fn parity_matrix(n: usize, checks: &[Vec<u32>]) -> Result<BitMatrix> {
    let mut h = BitMatrix::zeros(checks.len(), n);
    for (r, c) in checks.iter().enumerate() {
        for &v in c {
            if v as usize >= n {
                return Err(Error::Config(
                    "precode check refers to a missing input".into(),
                ));
            }
            h.flip(r, v as usize);
        }
    }
    Ok(h)
}

/// Integer counts summing to `total`, proportional to `weights`
/// (largest-remainder rounding; ties go to the earlier entry).
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let s: f64 = weights.iter().sum();
    if s <= 0.0 || weights.is_empty() {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / s).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Samples a code with `n` input bits and `m` LT outputs (`m/2` per class).
pub fn sample_code(e: &MetRaptorEnsemble, n: usize, m: usize, seed: u64) -> Result<CodeInstance> {
    e.ensure_valid()?;
    if n < 2 {
        return Err(Error::Config("n must be at least 2".into()));
    }
    if m < 2 || !m.is_multiple_of(2) {
        return Err(Error::Config(format!("m = {m} must be even and positive")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Input node types (precode degree, LT degree).
    let inputs: Vec<(u32, u32, f64)> = e
        .var_types()
        .iter()
        .filter(|t| t.degrees[2] == 0 && t.degrees[3] == 0)
        .map(|t| (t.degrees[0], t.degrees[1], t.fraction))
        .collect();
    let counts = apportion(n, &inputs.iter().map(|t| t.2).collect::<Vec<_>>());
    let mut input_types: Vec<(u32, u32)> = Vec::with_capacity(n);
    for (t, &c) in inputs.iter().zip(&counts) {
        input_types.extend(std::iter::repeat_n((t.0, t.1), c));
    }
    input_types.shuffle(&mut rng);

    // Precode check degrees.
    let pre: Vec<(u32, f64)> = e
        .chk_types()
        .iter()
        .filter(|c| c.kind() == Some(CheckKind::Precode))
        .map(|c| (c.degrees[0], c.fraction))
        .collect();
    let pre_total: f64 = pre.iter().map(|p| p.1).sum();
    let n_checks = (n as f64 * pre_total / e.r_lt()).round() as usize;
    let check_counts = apportion(n_checks, &pre.iter().map(|p| p.1).collect::<Vec<_>>());
    let mut check_degrees: Vec<u32> = Vec::with_capacity(n_checks);
    for (p, &c) in pre.iter().zip(&check_counts) {
        check_degrees.extend(std::iter::repeat_n(p.0, c));
    }
    let var_sockets: usize = input_types.iter().map(|t| t.0 as usize).sum();
    let chk_sockets: usize = check_degrees.iter().map(|&d| d as usize).sum();
    if var_sockets != chk_sockets {
        return Err(Error::Config(format!(
            "n = {n} gives {var_sockets} input and {chk_sockets} check precode sockets"
        )));
    }

    // LT output degrees per class, interleaved.
    let (om1, om2) = e.lt_distributions();
    let mut per_level: [Vec<u32>; 2] = [Vec::new(), Vec::new()];
    for (l, om) in [om1, om2].iter().enumerate() {
        let terms: Vec<(u32, f64)> = om.iter().collect();
        let c = apportion(m / 2, &terms.iter().map(|t| t.1).collect::<Vec<_>>());
        for (t, &k) in terms.iter().zip(&c) {
            per_level[l].extend(std::iter::repeat_n(t.0, k));
        }
        per_level[l].shuffle(&mut rng);
    }
    if per_level.iter().flatten().any(|&d| d as usize > n) {
        return Err(Error::Config(format!(
            "an LT output degree exceeds n = {n}"
        )));
    }

    let precode_checks = sample_precode(&input_types, &check_degrees, &mut rng);
    let outputs = sample_lt(n, &input_types, &per_level, &mut rng);
    let systematic = SystematicForm::new(parity_matrix(n, &precode_checks)?);
    Ok(CodeInstance {
        n,
        seed,
        precode_checks,
        outputs,
        systematic,
    })
}

/// Configuration-model precode without parallel edges; 4-cycles removed
/// where a random swap allows it.
fn sample_precode(
    input_types: &[(u32, u32)],
    check_degrees: &[u32],
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<u32>> {
    let mut sockets: Vec<u32> = Vec::new();
    for (v, t) in input_types.iter().enumerate() {
        sockets.extend(std::iter::repeat_n(v as u32, t.0 as usize));
    }
    sockets.shuffle(rng);
    let mut checks: Vec<Vec<u32>> = Vec::with_capacity(check_degrees.len());
    let mut it = sockets.into_iter();
    for &d in check_degrees {
        checks.push(it.by_ref().take(d as usize).collect());
    }
    let mut var_checks: Vec<Vec<u32>> = vec![Vec::new(); input_types.len()];
    for (c, vs) in checks.iter().enumerate() {
        for &v in vs {
            var_checks[v as usize].push(c as u32);
        }
    }
    let mut g = Graph { checks, var_checks };
    g.remove_parallel_edges(rng);
    g.reduce_four_cycles(rng);
    g.checks
}

struct Graph {
    checks: Vec<Vec<u32>>,
    var_checks: Vec<Vec<u32>>,
}

impl Graph {
    fn has_edge(&self, c: usize, v: u32) -> bool {
        self.var_checks[v as usize].contains(&(c as u32))
    }

    fn swap(&mut self, c1: usize, p1: usize, c2: usize, p2: usize) {
        let v1 = self.checks[c1][p1];
        let v2 = self.checks[c2][p2];
        self.checks[c1][p1] = v2;
        self.checks[c2][p2] = v1;
        let r1 = self.var_checks[v1 as usize]
            .iter()
            .position(|&c| c as usize == c1)
            .unwrap();
        self.var_checks[v1 as usize][r1] = c2 as u32;
        let r2 = self.var_checks[v2 as usize]
            .iter()
            .position(|&c| c as usize == c2)
            .unwrap();
        self.var_checks[v2 as usize][r2] = c1 as u32;
    }

    fn duplicate_at(&self, c: usize) -> Option<usize> {
        let vs = &self.checks[c];
        (0..vs.len()).find(|&i| vs[..i].contains(&vs[i]))
    }

    fn random_slot(&self, rng: &mut ChaCha8Rng) -> (usize, usize) {
        loop {
            let c = rng.gen_range(0..self.checks.len());
            if !self.checks[c].is_empty() {
                return (c, rng.gen_range(0..self.checks[c].len()));
            }
        }
    }

    fn remove_parallel_edges(&mut self, rng: &mut ChaCha8Rng) {
        if self.checks.len() < 2 {
            return;
        }
        for c in 0..self.checks.len() {
            let mut tries = 0;
            while let Some(p) = self.duplicate_at(c) {
                tries += 1;
                if tries > 10_000 {
                    break;
                }
                let (c2, p2) = self.random_slot(rng);
                if c2 == c {
                    continue;
                }
                let v = self.checks[c][p];
                let w = self.checks[c2][p2];
                if !self.has_edge(c, w) && !self.has_edge(c2, v) {
                    self.swap(c, p, c2, p2);
                }
            }
        }
    }

    /// True if `v` shares two checks with some other input.
    fn in_four_cycle(&self, v: u32) -> bool {
        let mine = &self.var_checks[v as usize];
        for &c1 in mine {
            for &u in &self.checks[c1 as usize] {
                if u == v {
                    continue;
                }
                if self.var_checks[u as usize]
                    .iter()
                    .any(|&c| c != c1 && mine.contains(&c))
                {
                    return true;
                }
            }
        }
        false
    }

    fn reduce_four_cycles(&mut self, rng: &mut ChaCha8Rng) {
        if self.checks.len() < 3 {
            return;
        }
        for _ in 0..CYCLE_PASSES {
            let mut changed = false;
            for v in 0..self.var_checks.len() as u32 {
                if !self.in_four_cycle(v) {
                    continue;
                }
                for _ in 0..8 {
                    let c = self.var_checks[v as usize]
                        [rng.gen_range(0..self.var_checks[v as usize].len())]
                        as usize;
                    let p = self.checks[c].iter().position(|&x| x == v).unwrap();
                    let (c2, p2) = self.random_slot(rng);
                    let w = self.checks[c2][p2];
                    if c2 == c || w == v || self.has_edge(c2, v) || self.has_edge(c, w) {
                        continue;
                    }
                    self.swap(c, p, c2, p2);
                    if self.in_four_cycle(v) || self.in_four_cycle(w) {
                        let p_back = self.checks[c2].iter().position(|&x| x == v).unwrap();
                        let q_back = self.checks[c].iter().position(|&x| x == w).unwrap();
                        self.swap(c2, p_back, c, q_back);
                    } else {
                        changed = true;
                        break;
                    }
                }
            }
            if !changed {
                break;
            }
        }
    }
}

/// LT outputs matched to input sockets so that inputs follow the
/// ensemble's LT-degree profile, adjusted to the exact edge count.
fn sample_lt(
    n: usize,
    input_types: &[(u32, u32)],
    per_level: &[Vec<u32>; 2],
    rng: &mut ChaCha8Rng,
) -> Vec<LtOutput> {
    let mut out_degrees: Vec<(u8, u32)> = Vec::new();
    for i in 0..per_level[0].len().max(per_level[1].len()) {
        for (l, degs) in per_level.iter().enumerate() {
            if let Some(&d) = degs.get(i) {
                out_degrees.push((l as u8, d));
            }
        }
    }
    let edges: usize = out_degrees.iter().map(|o| o.1 as usize).sum();

    let mut in_deg: Vec<usize> = input_types.iter().map(|t| t.1 as usize).collect();
    let mut have: usize = in_deg.iter().sum();
    let min_deg = usize::from(edges >= n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    while have != edges {
        let mut moved = false;
        for &v in &order {
            if have < edges {
                in_deg[v] += 1;
                have += 1;
                moved = true;
            } else if have > edges && in_deg[v] > min_deg {
                in_deg[v] -= 1;
                have -= 1;
                moved = true;
            }
            if have == edges {
                break;
            }
        }
        if !moved {
            break;
        }
    }

    let mut sockets: Vec<u32> = Vec::with_capacity(edges);
    for (v, &d) in in_deg.iter().enumerate() {
        sockets.extend(std::iter::repeat_n(v as u32, d));
    }
    sockets.shuffle(rng);
    let mut outputs: Vec<LtOutput> = Vec::with_capacity(out_degrees.len());
    let mut it = sockets.into_iter();
    for &(level, d) in &out_degrees {
        outputs.push(LtOutput {
            level,
            inputs: it.by_ref().take(d as usize).collect(),
        });
    }
    // Repeated inputs within one output: swap with random sockets elsewhere.
    let total = outputs.len();
    for o in 0..total {
        let mut tries = 0;
        loop {
            let ins = &outputs[o].inputs;
            let Some(p) = (0..ins.len()).find(|&i| ins[..i].contains(&ins[i])) else {
                break;
            };
            tries += 1;
            if tries > 10_000 || total < 2 {
                // Drop the repeat; an XOR with itself contributes nothing.
                let v = outputs[o].inputs.remove(p);
                let q = outputs[o].inputs.iter().position(|&x| x == v).unwrap();
                outputs[o].inputs.remove(q);
                continue;
            }
            let o2 = rng.gen_range(0..total);
            if o2 == o || outputs[o2].inputs.is_empty() {
                continue;
            }
            let p2 = rng.gen_range(0..outputs[o2].inputs.len());
            let v = outputs[o].inputs[p];
            let w = outputs[o2].inputs[p2];
            if outputs[o].inputs.contains(&w) || outputs[o2].inputs.contains(&v) {
                continue;
            }
            outputs[o].inputs[p] = w;
            outputs[o2].inputs[p2] = v;
        }
    }
    outputs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degree::DegreeDistribution;
    use crate::ensemble::{build_from_components, PrecodeProfile};

    fn toy(r_lt: f64) -> MetRaptorEnsemble {
        let om1 = DegreeDistribution::new([(1, 0.05), (2, 0.3), (4, 0.15)], 0.5).unwrap();
        let om2 = DegreeDistribution::new([(2, 0.35), (3, 0.15)], 0.5).unwrap();
        build_from_components(PrecodeProfile::default(), &om1, &om2, r_lt, 16).unwrap()
    }

    #[test]
    fn apportion_preserves_totals() {
        assert_eq!(apportion(10, &[0.5, 0.3, 0.2]), vec![5, 3, 2]);
        assert_eq!(apportion(3, &[1.0, 1.0, 1.0, 1.0]), vec![1, 1, 1, 0]);
        assert_eq!(apportion(7, &[0.25, 0.25]).iter().sum::<usize>(), 7);
    }

    #[test]
    fn precode_is_exactly_regular() {
        let c = sample_code(&toy(0.6), 2000, 3334, 9).unwrap();
        assert_eq!(c.precode_checks().len(), 100);
        let mut deg = vec![0; 2000];
        for chk in c.precode_checks() {
            assert_eq!(chk.len(), 60);
            let mut s = chk.clone();
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len(), 60, "parallel edge");
            chk.iter().for_each(|&v| deg[v as usize] += 1);
        }
        assert!(deg.iter().all(|&d| d == 3));
        assert_eq!(c.k(), 1900);
    }

    #[test]
    fn outputs_alternate_levels_and_have_distinct_inputs() {
        let c = sample_code(&toy(0.6), 2000, 3334, 1).unwrap();
        assert_eq!(c.m(), 3334);
        for (i, o) in c.outputs().iter().enumerate() {
            assert_eq!(o.level as usize, i % 2);
            let mut s = o.inputs.clone();
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len(), o.inputs.len());
        }
    }

    #[test]
    fn degree_one_outputs() {
        let om = DegreeDistribution::new([(1, 0.5)], 0.5).unwrap();
        let e = build_from_components(PrecodeProfile::default(), &om, &om, 1.0, 16).unwrap();
        let c = sample_code(&e, 40, 2, 0).unwrap();
        assert!(c.outputs().iter().all(|o| o.inputs.len() == 1));
    }

    #[test]
    fn same_seed_same_code() {
        let a = sample_code(&toy(0.6), 1000, 1666, 42).unwrap();
        let b = sample_code(&toy(0.6), 1000, 1666, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_code(&toy(0.6), 1000, 1666, 43).unwrap();
        assert_ne!(a.outputs(), c.outputs());
    }

    #[test]
    fn bad_sizes_are_rejected() {
        assert!(sample_code(&toy(0.6), 1001, 1666, 0).is_err());
        assert!(sample_code(&toy(0.6), 1000, 1667, 0).is_err());
    }

    #[test]
    fn record_roundtrip() {
        let a = sample_code(&toy(0.6), 1000, 1666, 5).unwrap();
        let json = serde_json::to_string(&a.to_record()).unwrap();
        let b = CodeInstance::from_record(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn encoding_is_linear() {
        let c = sample_code(&toy(0.6), 1000, 1666, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let zero = vec![0u8; c.k()];
        assert!(c.encode(&zero).unwrap().iter().all(|&b| b == 0));
        for _ in 0..5 {
            let u: Vec<u8> = (0..c.k()).map(|_| rng.gen_range(0..2)).collect();
            let v: Vec<u8> = (0..c.k()).map(|_| rng.gen_range(0..2)).collect();
            let w: Vec<u8> = u.iter().zip(&v).map(|(a, b)| a ^ b).collect();
            let (eu, ev, ew) = (
                c.encode(&u).unwrap(),
                c.encode(&v).unwrap(),
                c.encode(&w).unwrap(),
            );
            assert!(eu.iter().zip(&ev).zip(&ew).all(|((a, b), c)| a ^ b == *c));
            assert!(c.precode_syndrome_zero(&c.precode_encode(&u).unwrap()));
        }
    }

    #[test]
    fn single_input_flips_its_neighbours() {
        let c = sample_code(&toy(0.6), 1000, 1666, 8).unwrap();
        let mut x = vec![0u8; 1000];
        x[17] = 1;
        let y = c.lt_encode(&x);
        for (o, &b) in c.outputs().iter().zip(&y) {
            assert_eq!(b == 1, o.inputs.contains(&17));
        }
    }
}
