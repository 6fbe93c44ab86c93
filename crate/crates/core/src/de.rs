//! Quantized multi-edge density evolution for joint LT + precode decoding.
//!
//! Message densities are tracked per edge type:
//!
//! * `v1`, `v2`: input node → precode check / LT check,
//! * `c1`, `c2`: precode check / LT check → input node.
//!
//! Transmitted bits have a single edge and always send their bit-channel
//! density, so LT checks of level `l` see that density on their type-3/4
//! socket. Both check sides update from the previous variable messages in
//! the same iteration (flooding schedule).
//!
//! Check-node mixtures are built from ⊠ powers of the incoming density using
//! a binary-power chain. Variable-node mixtures are evaluated in the Fourier
//! domain on a transform long enough to hold the largest LLR sum without
//! wrap-around, then saturated onto the grid.

use std::collections::{BTreeMap, BTreeSet};

use rustfft::num_complex::Complex64;

use crate::channel::{component_densities, ChannelSpec};
use crate::degree::DegreeDistribution;
use crate::ensemble::{
    build_from_components, ChannelAssignment, CheckKind, MetRaptorEnsemble, PrecodeProfile,
    VarNodeType,
};
use crate::error::{Error, Result};
use crate::llr::{fft_forward, fft_inverse, LlrDensity, LlrGrid};

/// Density-evolution settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeConfig {
    pub grid: LlrGrid,
    pub max_iterations: usize,
    /// Target maximum bit error rate `ε*` over all variable-node types.
    pub target_ber: f64,
    /// Minimum improvement of the best BER that counts as progress.
    pub stall_tolerance: f64,
    /// Iterations without progress before a run is declared stalled.
    pub stall_window: usize,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            grid: LlrGrid::default(),
            max_iterations: 2000,
            target_ber: 1e-6,
            stall_tolerance: 1e-12,
            stall_window: 50,
        }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(self.target_ber > 0.0 && self.target_ber < 0.5) {
            return Err(Error::Config(format!(
                "target BER {} not in (0, 0.5)",
                self.target_ber
            )));
        }
        if self.stall_window < 1 || !(self.stall_tolerance >= 0.0) {
            return Err(Error::Config("stall settings must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    Stalled,
    IterationCap,
}

/// Outcome of one density-evolution run.
#[derive(Debug, Clone, PartialEq)]
pub struct DeResult {
    pub converged: bool,
    pub stop_reason: StopReason,
    pub iterations_used: usize,
    /// Maximum error probability over variable-node types, per iteration.
    pub ber_trace: Vec<f64>,
    /// Variable-node types, in the order used by `type_trace` columns.
    pub var_types: Vec<VarNodeType>,
    /// Error probability of every variable-node type, per iteration.
    pub type_trace: Vec<Vec<f64>>,
}

impl DeResult {
    pub fn final_ber(&self) -> f64 {
        self.ber_trace.last().copied().unwrap_or(0.5)
    }

    /// Final `(type, ε_j)` pairs.
    pub fn final_ber_by_type(&self) -> Vec<(VarNodeType, f64)> {
        match self.type_trace.last() {
            Some(row) => self
                .var_types
                .iter()
                .copied()
                .zip(row.iter().copied())
                .collect(),
            None => Vec::new(),
        }
    }

    /// CSV with columns `iteration,max_ber,<one column per type>`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,max_ber");
        for t in &self.var_types {
            let [a, b, c, d] = t.degrees;
            s.push_str(&format!(",ber_{}_{a}_{b}_{c}_{d}", t.channel.as_str()));
        }
        s.push('\n');
        for (it, (m, row)) in self.ber_trace.iter().zip(&self.type_trace).enumerate() {
            s.push_str(&format!("{},{}", it + 1, fmt12(*m)));
            for v in row {
                s.push(',');
                s.push_str(&fmt12(*v));
            }
            s.push('\n');
        }
        s
    }
}

/// Number formatting used by every CSV writer: 12 significant digits.
pub fn fmt12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-5..12).contains(&mag) {
        let decimals = (11 - mag).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.11e}")
    }
}

/// Message densities at one iteration, handed to observers.
#[derive(Debug, Clone)]
pub struct DeSnapshot<'a> {
    pub iteration: usize,
    pub c1: &'a LlrDensity,
    pub c2: &'a LlrDensity,
    pub v1: &'a LlrDensity,
    pub v2: &'a LlrDensity,
    pub type_ber: &'a [f64],
}

/// `Σ w_e x^{⊠e}` for several weight sets sharing one base density.
///
/// Exponent zero is the ⊠ identity (the `+∞` atom). Each output is
/// normalized by its own weight sum.
pub fn chk_power_mixtures(base: &LlrDensity, sets: &[Vec<(usize, f64)>]) -> Vec<LlrDensity> {
    let grid = base.grid();
    let exps: BTreeSet<usize> = sets.iter().flatten().map(|&(e, _)| e).collect();
    let mut by_exp: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for (s, set) in sets.iter().enumerate() {
        for &(e, w) in set {
            by_exp.entry(e).or_default().push((s, w));
        }
    }
    let mut acc: Vec<(Vec<f64>, f64)> = sets.iter().map(|_| (vec![0.0; grid.len()], 0.0)).collect();
    let mut pow2: Vec<LlrDensity> = vec![base.clone()];
    let mut cur: Option<LlrDensity> = None;
    let mut cur_e = 0usize;
    for &e in &exps {
        let mut d = e - cur_e;
        let mut bit = 0;
        while d > 0 {
            if d & 1 == 1 {
                while pow2.len() <= bit {
                    let last = pow2.last().unwrap();
                    let sq = last.chk_convolve(last).expect("same grid");
                    pow2.push(sq);
                }
                cur = Some(match cur {
                    None => pow2[bit].clone(),
                    Some(c) => c.chk_convolve(&pow2[bit]).expect("same grid"),
                });
            }
            d >>= 1;
            bit += 1;
        }
        cur_e = e;
        for &(s, w) in &by_exp[&e] {
            let (mass, inf) = &mut acc[s];
            match &cur {
                None => *inf += w,
                Some(c) => {
                    for (o, &m) in mass.iter_mut().zip(c.masses()) {
                        *o += w * m;
                    }
                    *inf += w * c.inf_mass();
                }
            }
        }
    }
    sets.iter()
        .zip(acc)
        .map(|(set, (mut mass, mut inf))| {
            let wsum: f64 = set.iter().map(|x| x.1).sum();
            if wsum > 0.0 {
                mass.iter_mut().for_each(|m| *m /= wsum);
                inf /= wsum;
            }
            LlrDensity::from_raw(grid, mass, inf, base.is_symmetric())
        })
        .collect()
}

/// Variable-node side evaluated on a long FFT.
struct VarTransform {
    n: usize,
    grid: LlrGrid,
    /// Conjugated transform of the error indicator (1 below zero, ½ at zero).
    ber_kernel: Vec<Complex64>,
}

struct Spectrum {
    bins: Vec<Complex64>,
    finite: f64,
}

impl VarTransform {
    fn new(grid: LlrGrid, max_terms: usize) -> Self {
        let h = grid.half_bins();
        let n = (2 * h * max_terms.max(1) + 1).next_power_of_two();
        let mut ind = vec![Complex64::new(0.0, 0.0); n];
        ind[0] = Complex64::new(0.5, 0.0);
        for p in n / 2..n {
            ind[p] = Complex64::new(1.0, 0.0);
        }
        fft_forward(&mut ind);
        let ber_kernel = ind.into_iter().map(|c| c.conj()).collect();
        Self {
            n,
            grid,
            ber_kernel,
        }
    }

    fn spectrum(&self, d: &LlrDensity) -> Spectrum {
        let h = self.grid.half_bins();
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n];
        for (k, &m) in d.masses().iter().enumerate() {
            if m != 0.0 {
                let s = k as isize - h as isize;
                buf[s.rem_euclid(self.n as isize) as usize] = Complex64::new(m, 0.0);
            }
        }
        fft_forward(&mut buf);
        Spectrum {
            bins: buf,
            finite: d.finite_mass(),
        }
    }

    /// `Σ_t w_t a^{⊗i_t} ⊗ b^{⊗j_t}`, normalized by `Σ w_t`.
    fn mix(&self, a: &Spectrum, b: &Spectrum, terms: &[(u32, u32, f64)]) -> LlrDensity {
        let wsum: f64 = terms.iter().map(|t| t.2).sum();
        let mut groups: BTreeMap<u32, BTreeMap<u32, f64>> = BTreeMap::new();
        let mut inf = 0.0;
        for &(i, j, w) in terms {
            *groups.entry(i).or_default().entry(j).or_insert(0.0) += w;
            inf += w * (1.0 - a.finite.powi(i as i32) * b.finite.powi(j as i32));
        }
        let mut total = vec![Complex64::new(0.0, 0.0); self.n];
        for (&i, poly) in &groups {
            let jmax = *poly.keys().next_back().unwrap();
            // Horner in b.
            let mut acc =
                vec![Complex64::new(poly.get(&jmax).copied().unwrap_or(0.0), 0.0); self.n];
            for j in (0..jmax).rev() {
                let c = poly.get(&j).copied().unwrap_or(0.0);
                for (x, &y) in acc.iter_mut().zip(&b.bins) {
                    *x = *x * y + c;
                }
            }
            for _ in 0..i {
                for (x, &y) in acc.iter_mut().zip(&a.bins) {
                    *x *= y;
                }
            }
            for (t, x) in total.iter_mut().zip(&acc) {
                *t += x;
            }
        }
        fft_inverse(&mut total);
        let h = self.grid.half_bins() as isize;
        let mut mass = vec![0.0; self.grid.len()];
        for (p, c) in total.iter().enumerate() {
            if c.re <= 0.0 {
                continue;
            }
            let s = if p < self.n / 2 {
                p as isize
            } else {
                p as isize - self.n as isize
            };
            mass[(s.clamp(-h, h) + h) as usize] += c.re;
        }
        let inf = (inf / wsum).clamp(0.0, 1.0);
        let fin: f64 = mass.iter().sum();
        if fin > 0.0 {
            let scale = (1.0 - inf) / fin;
            mass.iter_mut().for_each(|m| *m *= scale);
        }
        LlrDensity::from_raw(self.grid, mass, inf, true)
    }

    /// Error probability of `a^{⊗i} ⊗ b^{⊗j}` for each `(i, j)`.
    fn error_probabilities(&self, a: &Spectrum, b: &Spectrum, types: &[(u32, u32)]) -> Vec<f64> {
        let mut out = vec![0.0; types.len()];
        let mut by_i: BTreeMap<u32, Vec<(u32, usize)>> = BTreeMap::new();
        for (idx, &(i, j)) in types.iter().enumerate() {
            by_i.entry(i).or_default().push((j, idx));
        }
        let n = self.n as f64;
        for (&i, js) in &by_i {
            let mut g = self.ber_kernel.clone();
            for _ in 0..i {
                for (x, &y) in g.iter_mut().zip(&a.bins) {
                    *x *= y;
                }
            }
            let mut js = js.clone();
            js.sort_unstable();
            let mut cur_j = 0;
            for (j, idx) in js {
                while cur_j < j {
                    for (x, &y) in g.iter_mut().zip(&b.bins) {
                        *x *= y;
                    }
                    cur_j += 1;
                }
                let s: f64 = g.iter().map(|c| c.re).sum();
                out[idx] = (s / n).clamp(0.0, 0.5);
            }
        }
        out
    }
}

/// Prepared density-evolution problem for one ensemble.
struct Plan {
    types: Vec<VarNodeType>,
    punctured: Vec<(usize, u32, u32)>,
    transmitted: Vec<(usize, usize)>,
    v1_terms: Vec<(u32, u32, f64)>,
    v2_terms: Vec<(u32, u32, f64)>,
    precode_sets: Vec<Vec<(usize, f64)>>,
    /// LT mixtures: [toward inputs level 1, level 2, toward level-1 output, level-2 output].
    lt_sets: Vec<Vec<(usize, f64)>>,
    lt_level_weight: [f64; 2],
    transform: VarTransform,
}

impl Plan {
    fn new(e: &MetRaptorEnsemble, grid: LlrGrid) -> Result<Self> {
        let (vs, cs) = e.socket_counts();
        let types = e.var_types().to_vec();
        let mut punctured = Vec::new();
        let mut transmitted = Vec::new();
        let mut v1_terms = Vec::new();
        let mut v2_terms = Vec::new();
        let mut max_terms = 1;
        for (idx, t) in types.iter().enumerate() {
            match t.channel {
                ChannelAssignment::Punctured => {
                    let (i, j) = (t.degrees[0], t.degrees[1]);
                    punctured.push((idx, i, j));
                    max_terms = max_terms.max((i + j) as usize);
                    if i > 0 && vs[0] > 0.0 {
                        v1_terms.push((i - 1, j, i as f64 * t.fraction / vs[0]));
                    }
                    if j > 0 && vs[1] > 0.0 {
                        v2_terms.push((i, j - 1, j as f64 * t.fraction / vs[1]));
                    }
                }
                ChannelAssignment::Channel1 => transmitted.push((idx, 0)),
                ChannelAssignment::Channel2 => transmitted.push((idx, 1)),
            }
        }
        let mut precode = Vec::new();
        let mut lt: [Vec<(usize, f64)>; 4] = Default::default();
        let mut lt_w = [0.0; 2];
        for c in e.chk_types() {
            match c.kind() {
                Some(CheckKind::Precode) if cs[0] > 0.0 => {
                    let d = c.degrees[0] as usize;
                    precode.push((d - 1, d as f64 * c.fraction / cs[0]));
                }
                Some(k @ (CheckKind::Lt1 | CheckKind::Lt2)) => {
                    let l = if k == CheckKind::Lt1 { 0 } else { 1 };
                    let j = c.degrees[1] as usize;
                    let w = j as f64 * c.fraction / cs[1];
                    lt[l].push((j - 1, w));
                    lt_w[l] += w;
                    lt[2 + l].push((j - 1, c.fraction));
                }
                _ => {}
            }
        }
        Ok(Self {
            types,
            punctured,
            transmitted,
            v1_terms,
            v2_terms,
            precode_sets: vec![precode],
            lt_sets: lt.to_vec(),
            lt_level_weight: lt_w,
            transform: VarTransform::new(grid, max_terms),
        })
    }
}

/// Bit-channel densities of the two ensemble channel classes.
pub fn ensemble_channels(spec: &ChannelSpec, grid: LlrGrid) -> Result<[LlrDensity; 2]> {
    let d = component_densities(spec, grid)?;
    Ok(match d.len() {
        1 => [d[0].clone(), d[0].clone()],
        _ => [d[0].clone(), d[1].clone()],
    })
}

/// Runs density evolution of `e` over `spec`.
pub fn met_de_run(e: &MetRaptorEnsemble, spec: &ChannelSpec, cfg: &DeConfig) -> Result<DeResult> {
    cfg.validate()?;
    let ch = ensemble_channels(spec, cfg.grid)?;
    met_de_run_with(e, &ch, cfg, |_| {})
}

/// Runs density evolution with precomputed channel densities, calling
/// `observe` after every iteration.
pub fn met_de_run_with(
    e: &MetRaptorEnsemble,
    channels: &[LlrDensity; 2],
    cfg: &DeConfig,
    mut observe: impl FnMut(&DeSnapshot<'_>),
) -> Result<DeResult> {
    cfg.validate()?;
    e.ensure_valid()?;
    let grid = cfg.grid;
    for c in channels {
        if c.grid() != grid {
            return Err(Error::Grid(
                "channel densities are on a different grid".into(),
            ));
        }
    }
    let plan = Plan::new(e, grid)?;
    let mut v1 = LlrDensity::erasure(grid);
    let mut v2 = LlrDensity::erasure(grid);
    let mut ber_trace = Vec::new();
    let mut type_trace = Vec::new();
    let mut best = f64::INFINITY;
    let mut last_progress = 0;
    let mut stop = StopReason::IterationCap;
    let punct_ij: Vec<(u32, u32)> = plan.punctured.iter().map(|&(_, i, j)| (i, j)).collect();

    for it in 1..=cfg.max_iterations {
        // Check side.
        let c1 = if plan.precode_sets[0].is_empty() {
            LlrDensity::perfect(grid)
        } else {
            chk_power_mixtures(&v1, &plan.precode_sets).remove(0)
        };
        let lt = chk_power_mixtures(&v2, &plan.lt_sets);
        let mut parts = Vec::new();
        let toward_in: Vec<LlrDensity> = (0..2)
            .filter(|&l| plan.lt_level_weight[l] > 0.0)
            .map(|l| lt[l].chk_convolve(&channels[l]).expect("same grid"))
            .collect();
        let mut ti = toward_in.iter();
        for l in 0..2 {
            if plan.lt_level_weight[l] > 0.0 {
                parts.push((plan.lt_level_weight[l], ti.next().unwrap()));
            }
        }
        let c2 = LlrDensity::mixture(&parts)?;

        // Posterior error probabilities.
        let s1 = plan.transform.spectrum(&c1);
        let s2 = plan.transform.spectrum(&c2);
        let pe_in = plan.transform.error_probabilities(&s1, &s2, &punct_ij);
        let mut type_ber = vec![0.0; plan.types.len()];
        for (&(idx, _, _), &p) in plan.punctured.iter().zip(&pe_in) {
            type_ber[idx] = p;
        }
        for &(idx, l) in &plan.transmitted {
            let toward_out = lt[2 + l].chk_convolve(&v2).expect("same grid");
            type_ber[idx] = error_of_sum(&channels[l], &toward_out);
        }
        let max_ber = type_ber.iter().cloned().fold(0.0, f64::max);

        // Variable side.
        v1 = if plan.v1_terms.is_empty() {
            LlrDensity::erasure(grid)
        } else {
            plan.transform.mix(&s1, &s2, &plan.v1_terms)
        };
        v2 = if plan.v2_terms.is_empty() {
            LlrDensity::erasure(grid)
        } else {
            plan.transform.mix(&s1, &s2, &plan.v2_terms)
        };

        observe(&DeSnapshot {
            iteration: it,
            c1: &c1,
            c2: &c2,
            v1: &v1,
            v2: &v2,
            type_ber: &type_ber,
        });
        ber_trace.push(max_ber);
        type_trace.push(type_ber);

        if max_ber < cfg.target_ber {
            stop = StopReason::Converged;
            break;
        }
        if max_ber < best - cfg.stall_tolerance {
            best = max_ber;
            last_progress = it;
        } else if it - last_progress >= cfg.stall_window {
            stop = StopReason::Stalled;
            break;
        }
    }
    Ok(DeResult {
        converged: stop == StopReason::Converged,
        stop_reason: stop,
        iterations_used: ber_trace.len(),
        ber_trace,
        var_types: plan.types,
        type_trace,
    })
}

/// Error probability of `a ⊗ b` without forming the convolution.
pub fn error_of_sum(a: &LlrDensity, b: &LlrDensity) -> f64 {
    let grid = a.grid();
    let h = grid.half_bins() as isize;
    let bm = b.masses();
    // cdf[t] = P(B index < t)
    let mut cdf = vec![0.0; bm.len() + 1];
    for (k, &m) in bm.iter().enumerate() {
        cdf[k + 1] = cdf[k] + m;
    }
    let len = bm.len() as isize;
    let mut pe = 0.0;
    for (ka, &ma) in a.masses().iter().enumerate() {
        if ma == 0.0 {
            continue;
        }
        // sum index sa + sb < 0 with sa = ka - h, sb = kb - h  →  kb < 2h - ka
        let thr = 2 * h - ka as isize;
        let below = cdf[thr.clamp(0, len) as usize];
        let at = if (0..len).contains(&thr) {
            bm[thr as usize]
        } else {
            0.0
        };
        pe += ma * (below + 0.5 * at);
    }
    pe.clamp(0.0, 0.5)
}

/// Bisection bounds for [`max_realized_rate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSearch {
    pub floor: f64,
    pub ceiling: f64,
    pub tolerance: f64,
}

impl Default for RateSearch {
    fn default() -> Self {
        Self {
            floor: 0.02,
            ceiling: 1.0,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateSearchResult {
    /// Largest converging LT rate found.
    pub r_lt: f64,
    /// `r_lt · r_pre`.
    pub realized_rate: f64,
    pub de_runs: usize,
}

/// Largest LT rate (to within the search tolerance) at which the ensemble
/// built from `(Ω1, Ω2)` converges under density evolution.
pub fn max_realized_rate(
    omega1: &DegreeDistribution,
    omega2: &DegreeDistribution,
    precode: PrecodeProfile,
    spec: &ChannelSpec,
    cfg: &DeConfig,
    search: &RateSearch,
) -> Result<RateSearchResult> {
    let ch = ensemble_channels(spec, cfg.grid)?;
    max_realized_rate_with(
        omega1,
        omega2,
        precode,
        spec.modulation_order(),
        &ch,
        cfg,
        search,
    )
}

pub fn max_realized_rate_with(
    omega1: &DegreeDistribution,
    omega2: &DegreeDistribution,
    precode: PrecodeProfile,
    modulation_order: u32,
    channels: &[LlrDensity; 2],
    cfg: &DeConfig,
    search: &RateSearch,
) -> Result<RateSearchResult> {
    if !(search.floor > 0.0 && search.floor < search.ceiling && search.ceiling <= 1.0) {
        return Err(Error::Config(
            "rate search needs 0 < floor < ceiling <= 1".into(),
        ));
    }
    let mut runs = 0;
    let mut converges = |r: f64| -> Result<bool> {
        runs += 1;
        let e = build_from_components(precode, omega1, omega2, r, modulation_order)?;
        Ok(met_de_run_with(&e, channels, cfg, |_| {})?.converged)
    };
    let done = |r: f64, runs| RateSearchResult {
        r_lt: r,
        realized_rate: r * precode.rate(),
        de_runs: runs,
    };
    if converges(search.ceiling)? {
        return Ok(done(search.ceiling, runs));
    }
    if !converges(search.floor)? {
        return Err(Error::Infeasible(format!(
            "no convergence even at r_lt = {}",
            search.floor
        )));
    }
    let (mut lo, mut hi) = (search.floor, search.ceiling);
    while hi - lo > search.tolerance {
        let mid = 0.5 * (lo + hi);
        if converges(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(done(lo, runs))
}

/// Result of the precode stability condition.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// `Σ_j λ_[2 j] y2^j ρ1'(1)`.
    pub lhs: f64,
    pub satisfied: bool,
    /// Mean Bhattacharyya constant over the `q` bit levels.
    pub y2: f64,
    /// Bhattacharyya constant of each distinct bit level.
    pub level_bhattacharyya: Vec<f64>,
    pub rho_prime: f64,
}

/// Stability of the zero-error fixed point of the precode subgraph, with the
/// LT side feeding the level-averaged bit-channel density.
pub fn stability_check(e: &MetRaptorEnsemble, spec: &ChannelSpec) -> Result<StabilityReport> {
    stability_check_on(e, spec, LlrGrid::default())
}

pub fn stability_check_on(
    e: &MetRaptorEnsemble,
    spec: &ChannelSpec,
    grid: LlrGrid,
) -> Result<StabilityReport> {
    let level_b: Vec<f64> = component_densities(spec, grid)?
        .iter()
        .map(|d| d.bhattacharyya())
        .collect();
    let y2 = level_average(spec, &level_b);
    let (lhs, rho_prime) = stability_lhs(e, y2)?;
    Ok(StabilityReport {
        lhs,
        satisfied: lhs <= 1.0,
        y2,
        level_bhattacharyya: level_b,
        rho_prime,
    })
}

/// Mean over the `q` bit levels of a per-component-level quantity.
pub fn level_average(spec: &ChannelSpec, per_component: &[f64]) -> f64 {
    let q = spec.bits_per_symbol();
    (1..=q)
        .map(|l| per_component[spec.component_level(l).unwrap() - 1])
        .sum::<f64>()
        / q as f64
}

/// `(Σ_j λ_[2 j] y2^j ρ1'(1), ρ1'(1))` for a given `y2`.
pub fn stability_lhs(e: &MetRaptorEnsemble, y2: f64) -> Result<(f64, f64)> {
    let core = e.edge_perspective_core()?;
    let rho_prime = core.rho_prime_at_one();
    let lhs = core
        .lambda_2()
        .fold(0.0, |acc, (j, l)| acc + l * y2.powi(j as i32))
        * rho_prime;
    Ok((lhs, rho_prime))
}

/// Per-iteration growth of the precode-edge Bhattacharyya parameter near
/// the zero-error fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeReport {
    pub ratios: Vec<f64>,
    pub bhattacharyya: Vec<f64>,
}

impl SlopeReport {
    pub fn last_ratio(&self) -> f64 {
        self.ratios.last().copied().unwrap_or(f64::NAN)
    }
}

/// Starts the precode-side messages at `(1-δ)·∞ + δ·d`, with `d` the
/// level-averaged channel density, holds the LT-to-input messages at that
/// same channel average, and iterates the precode subgraph.
pub fn near_fixed_point_slope(
    e: &MetRaptorEnsemble,
    spec: &ChannelSpec,
    grid: LlrGrid,
    delta: f64,
    iterations: usize,
) -> Result<SlopeReport> {
    e.ensure_valid()?;
    if !(delta > 0.0 && delta <= 1e-3) {
        return Err(Error::Config("delta must lie in (0, 1e-3]".into()));
    }
    let comps = component_densities(spec, grid)?;
    let q = spec.bits_per_symbol();
    let weights: Vec<(f64, &LlrDensity)> = (1..=q)
        .map(|l| (1.0, &comps[spec.component_level(l).unwrap() - 1]))
        .collect();
    let avg = LlrDensity::mixture(&weights)?;
    let perfect = LlrDensity::perfect(grid);
    let mut v1 = LlrDensity::mixture(&[(1.0 - delta, &perfect), (delta, &avg)])?;
    let plan = Plan::new(e, grid)?;
    let mut ratios = Vec::new();
    let mut bs = vec![v1.bhattacharyya()];
    let s2 = plan.transform.spectrum(&avg);
    for _ in 0..iterations {
        let c1 = chk_power_mixtures(&v1, &plan.precode_sets).remove(0);
        let s1 = plan.transform.spectrum(&c1);
        let next = plan.transform.mix(&s1, &s2, &plan.v1_terms);
        let b_prev = v1.bhattacharyya();
        let b = next.bhattacharyya();
        ratios.push(b / b_prev);
        bs.push(b);
        v1 = next;
    }
    Ok(SlopeReport {
        ratios,
        bhattacharyya: bs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{ChkNodeType, PrecodeProfile};

    fn small_cfg() -> DeConfig {
        DeConfig {
            grid: LlrGrid::new(25.0, 0.125).unwrap(),
            ..DeConfig::default()
        }
    }

    #[test]
    fn fmt12_digits() {
        assert_eq!(fmt12(0.5), "0.5");
        assert_eq!(fmt12(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt12(123.456), "123.456");
        assert_eq!(fmt12(2.5e-9), "2.50000000000e-9");
        assert_eq!(fmt12(0.0), "0");
    }

    #[test]
    fn power_mixture_matches_repeated_convolution() {
        let g = LlrGrid::new(10.0, 0.25).unwrap();
        let spec = ChannelSpec::qam16(4.0).unwrap();
        let base = crate::channel::bit_channel_density(&spec, 2, g).unwrap();
        let mixes = chk_power_mixtures(&base, &[vec![(0, 0.25), (3, 0.5), (5, 0.25)]]);
        // Chain order: x3 = x ⊠ x², x5 = x3 ⊠ x².
        let sq = base.chk_convolve(&base).unwrap();
        let p3 = base.chk_convolve(&sq).unwrap();
        let p5 = p3.chk_convolve(&sq).unwrap();
        let id = LlrDensity::perfect(g);
        let want = LlrDensity::mixture(&[(0.25, &id), (0.5, &p3), (0.25, &p5)]).unwrap();
        for (a, b) in mixes[0].masses().iter().zip(want.masses()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((mixes[0].inf_mass() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn fourier_mix_matches_pairwise() {
        let g = LlrGrid::new(16.0, 0.25).unwrap();
        let spec = ChannelSpec::qam16(3.0).unwrap();
        let a = crate::channel::bit_channel_density(&spec, 1, g).unwrap();
        let b = crate::channel::bit_channel_density(&spec, 2, g).unwrap();
        let tr = VarTransform::new(g, 4);
        let (sa, sb) = (tr.spectrum(&a), tr.spectrum(&b));
        let got = tr.mix(&sa, &sb, &[(1, 2, 1.0)]);
        // Fourier route saturates once at the end; compare error probabilities
        // and the unsaturated interior.
        let pe = tr.error_probabilities(&sa, &sb, &[(1, 2)])[0];
        assert!((pe - got.error_probability()).abs() < 1e-12);
        let direct = a.var_convolve(&b).unwrap().var_convolve(&b).unwrap();
        assert!((direct.error_probability() - pe).abs() < 1e-3);
        let sum_a = error_of_sum(&a, &b.var_convolve(&b).unwrap());
        assert!((sum_a - direct.error_probability()).abs() < 1e-12);
    }

    #[test]
    fn noiseless_channel_converges_quickly() {
        let spec = ChannelSpec::qam16(60.0).unwrap();
        let om = DegreeDistribution::new([(1, 0.05), (2, 0.25), (3, 0.2)], 0.5).unwrap();
        let e = build_from_components(PrecodeProfile::default(), &om, &om, 0.5, 16).unwrap();
        let r = met_de_run(&e, &spec, &small_cfg()).unwrap();
        assert!(r.converged);
        assert!(r.iterations_used <= 20, "{}", r.iterations_used);
    }

    #[test]
    fn stability_of_regular_precode_is_zero() {
        let om = DegreeDistribution::new([(2, 0.5)], 0.5).unwrap();
        let e = build_from_components(PrecodeProfile::default(), &om, &om, 0.5, 16).unwrap();
        let r = stability_check(&e, &ChannelSpec::qam16(4.0).unwrap()).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.satisfied);
        assert_eq!(r.rho_prime, 59.0);
    }

    fn unstable_toy() -> MetRaptorEnsemble {
        // r_lt = 1, inputs [2,1] and [4,1] at 0.5 each, degree-30 precode
        // checks: λ_[2 1] = 1/3, ρ1'(1) = 29.
        let p = ChannelAssignment::Punctured;
        MetRaptorEnsemble::new(
            vec![
                VarNodeType {
                    degrees: [2, 1, 0, 0],
                    channel: p,
                    fraction: 0.5,
                },
                VarNodeType {
                    degrees: [4, 1, 0, 0],
                    channel: p,
                    fraction: 0.5,
                },
                VarNodeType {
                    degrees: [0, 0, 1, 0],
                    channel: ChannelAssignment::Channel1,
                    fraction: 0.5,
                },
                VarNodeType {
                    degrees: [0, 0, 0, 1],
                    channel: ChannelAssignment::Channel2,
                    fraction: 0.5,
                },
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

    #[test]
    fn slope_matches_stability_lhs() {
        let e = unstable_toy();
        assert!(e.is_valid(), "{:?}", e.validate());
        let spec = ChannelSpec::qam16(6.0).unwrap();
        let grid = LlrGrid::new(25.0, 0.125).unwrap();
        let st = stability_check_on(&e, &spec, grid).unwrap();
        assert!(st.lhs > 1.0 && !st.satisfied);
        let slope = near_fixed_point_slope(&e, &spec, grid, 1e-6, 4).unwrap();
        let r = slope.last_ratio();
        assert!((r / st.lhs - 1.0).abs() < 0.1, "ratio {r} lhs {}", st.lhs);
    }

    #[test]
    fn error_of_sum_matches_convolution() {
        let g = LlrGrid::new(12.0, 0.25).unwrap();
        let spec = ChannelSpec::qam16(2.0).unwrap();
        let a = crate::channel::bit_channel_density(&spec, 1, g).unwrap();
        let b = crate::channel::bit_channel_density(&spec, 2, g).unwrap();
        let c = a.var_convolve(&b).unwrap();
        assert!((error_of_sum(&a, &b) - c.error_probability()).abs() < 1e-12);
    }
}
