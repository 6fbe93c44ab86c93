//! Search over per-level LT output-degree distributions.
//!
//! The outer loop is differential evolution on degree slots: every member
//! holds `degree_pool_size` sorted degree slots per level, mutated as
//! `a + F (b - c)`, rounded and clamped to `[1, max_degree]`. Duplicate
//! degrees merge when the distribution is formed. Each trial then goes
//! through an adaptive-range pass over its fractions.
//!
//! Convergence under density evolution is monotone in `r_lt`, so a trial is
//! compared against an incumbent with a single DE run at the incumbent's
//! rate plus the search tolerance. A full bisection only happens when the
//! trial wins.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{component_densities, modulation_capacity, ChannelSpec};
use crate::de::{
    ensemble_channels, fmt12, level_average, met_de_run_with, stability_lhs, DeConfig,
};
use crate::degree::DegreeDistribution;
use crate::ensemble::{build_from_components, MetRaptorEnsemble, PrecodeProfile};
use crate::error::{Error, Result};
use crate::io::ComponentFile;
use crate::llr::LlrDensity;

/// Optimizer settings; readable from TOML with every field optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub population_size: usize,
    /// Differential weight `F`.
    pub de_weight: f64,
    /// Crossover rate `CR`.
    pub crossover_rate: f64,
    pub generations: usize,
    /// Degree slots per level.
    pub degree_pool_size: usize,
    pub max_degree: u32,
    pub adaptive_range_iters: usize,
    pub seed: u64,
    pub stability_required: bool,
    /// Bisection tolerance on `r_lt`.
    pub rate_tolerance: f64,
    /// Smallest `r_lt` probed; candidates failing there are infeasible.
    pub rate_floor: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            population_size: 40,
            de_weight: 0.5,
            crossover_rate: 0.9,
            generations: 200,
            degree_pool_size: 8,
            max_degree: 50,
            adaptive_range_iters: 10,
            seed: 0,
            stability_required: true,
            rate_tolerance: 1e-3,
            rate_floor: 0.05,
        }
    }
}

impl OptimizerConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("optimizer config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain struct serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.population_size < 4 {
            return bad("population_size must be at least 4");
        }
        if !(self.crossover_rate > 0.0 && self.crossover_rate <= 1.0) {
            return bad("crossover_rate must lie in (0, 1]");
        }
        if !(self.de_weight > 0.0 && self.de_weight <= 2.0) {
            return bad("de_weight must lie in (0, 2]");
        }
        if self.max_degree < 2 {
            return bad("max_degree must be at least 2");
        }
        if self.degree_pool_size < 1 || self.degree_pool_size > self.max_degree as usize {
            return bad("degree_pool_size must lie in [1, max_degree]");
        }
        if !(self.rate_tolerance > 0.0 && self.rate_tolerance < 0.1) {
            return bad("rate_tolerance must lie in (0, 0.1)");
        }
        if !(self.rate_floor > 0.0 && self.rate_floor < 1.0) {
            return bad("rate_floor must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Degree slots and fractions for both bit levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub degrees: [Vec<u32>; 2],
    pub fractions: [Vec<f64>; 2],
}

impl Candidate {
    /// Candidate holding exactly the terms of two distributions.
    pub fn from_components(omega1: &DegreeDistribution, omega2: &DegreeDistribution) -> Self {
        let split = |om: &DegreeDistribution| -> (Vec<u32>, Vec<f64>) { om.iter().unzip() };
        let (d1, f1) = split(omega1);
        let (d2, f2) = split(omega2);
        let mut c = Self {
            degrees: [d1, d2],
            fractions: [f1, f2],
        };
        c.project();
        c
    }

    /// Clips negative fractions and rescales each level to sum to 0.5.
    pub fn project(&mut self) {
        for f in &mut self.fractions {
            f.iter_mut().for_each(|x| *x = x.max(0.0));
            let s: f64 = f.iter().sum();
            if s > 0.0 {
                f.iter_mut().for_each(|x| *x *= 0.5 / s);
            } else if !f.is_empty() {
                let n = f.len() as f64;
                f.iter_mut().for_each(|x| *x = 0.5 / n);
            }
        }
    }

    /// `Ω^(level)` with duplicate degrees merged.
    pub fn omega(&self, level: usize) -> Result<DegreeDistribution> {
        let terms = self.degrees[level]
            .iter()
            .copied()
            .zip(self.fractions[level].iter().copied());
        DegreeDistribution::new(terms, 0.5)
    }

    fn key(&self) -> Vec<(u8, u32, u64)> {
        let mut k = Vec::new();
        for level in 0..2 {
            if let Ok(om) = self.omega(level) {
                k.extend(om.iter().map(|(d, c)| (level as u8, d, c.to_bits())));
            }
        }
        k
    }

    fn sort_slots(&mut self) {
        for level in 0..2 {
            let mut pairs: Vec<(u32, f64)> = self.degrees[level]
                .iter()
                .copied()
                .zip(self.fractions[level].iter().copied())
                .collect();
            pairs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
            (self.degrees[level], self.fractions[level]) = pairs.into_iter().unzip();
        }
    }
}

/// Best-so-far and mean population fitness after one generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignResult {
    pub candidate: Candidate,
    pub components: ComponentFile,
    pub ensemble: MetRaptorEnsemble,
    pub r_lt: f64,
    /// `r_lt · r_pre`.
    pub realized_rate: f64,
    pub rate_efficiency: f64,
    pub trace: Vec<GenerationStats>,
    /// Fraction vectors tried, over all generations.
    pub candidates_evaluated: usize,
}

impl DesignResult {
    /// Audit trace with columns `generation,best_fitness,mean_fitness`.
    /// Infeasible members are left out of the mean.
    pub fn audit_csv(&self) -> String {
        let mut s = String::from("generation,best_fitness,mean_fitness\n");
        for g in &self.trace {
            s.push_str(&format!(
                "{},{},{}\n",
                g.generation,
                fmt12(g.best_fitness),
                fmt12(g.mean_fitness)
            ));
        }
        s
    }
}

/// Shared, read-only evaluation context for one optimization run.
struct Evaluator {
    precode: PrecodeProfile,
    modulation_order: u32,
    channels: [LlrDensity; 2],
    de_cfg: DeConfig,
    y2: f64,
    stability_required: bool,
    floor: f64,
    ceiling: f64,
    tolerance: f64,
    cache: Mutex<HashMap<(Vec<(u8, u32, u64)>, u64), bool>>,
}

impl Evaluator {
    fn new(
        spec: &ChannelSpec,
        precode: PrecodeProfile,
        de_cfg: &DeConfig,
        stability_required: bool,
        floor: f64,
        tolerance: f64,
    ) -> Result<Self> {
        de_cfg.validate()?;
        let level_b: Vec<f64> = component_densities(spec, de_cfg.grid)?
            .iter()
            .map(|d| d.bhattacharyya())
            .collect();
        let cap = modulation_capacity(spec) / spec.bits_per_symbol() as f64;
        let ceiling = (cap / precode.rate()).min(1.0);
        if floor >= ceiling {
            return Err(Error::Config(format!(
                "rate floor {floor} is above the capacity bound {ceiling}"
            )));
        }
        Ok(Self {
            precode,
            modulation_order: spec.modulation_order(),
            channels: ensemble_channels(spec, de_cfg.grid)?,
            de_cfg: *de_cfg,
            y2: level_average(spec, &level_b),
            stability_required,
            floor,
            ceiling,
            tolerance,
            cache: Mutex::new(HashMap::new()),
        })
    }

    fn ensemble(&self, c: &Candidate, r_lt: f64) -> Option<MetRaptorEnsemble> {
        let e = build_from_components(
            self.precode,
            &c.omega(0).ok()?,
            &c.omega(1).ok()?,
            r_lt,
            self.modulation_order,
        )
        .ok()?;
        if self.stability_required && stability_lhs(&e, self.y2).ok()?.0 > 1.0 {
            return None;
        }
        Some(e)
    }

    fn converges(&self, c: &Candidate, r_lt: f64) -> bool {
        let key = (c.key(), r_lt.to_bits());
        if let Some(&hit) = self.cache.lock().unwrap().get(&key) {
            return hit;
        }
        let ok = match self.ensemble(c, r_lt) {
            Some(e) => met_de_run_with(&e, &self.channels, &self.de_cfg, |_| {})
                .map(|r| r.converged)
                .unwrap_or(false),
            None => false,
        };
        self.cache.lock().unwrap().insert(key, ok);
        ok
    }

    /// Largest converging `r_lt` in `[lo, ceiling]` given that `lo` converges.
    fn bisect_from(&self, c: &Candidate, lo: f64) -> f64 {
        if self.converges(c, self.ceiling) {
            return self.ceiling;
        }
        let (mut lo, mut hi) = (lo, self.ceiling);
        while hi - lo > self.tolerance {
            let mid = 0.5 * (lo + hi);
            if self.converges(c, mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Exact threshold `r_lt*`, or `None` when nothing above the floor converges.
    fn threshold(&self, c: &Candidate) -> Option<f64> {
        if !self.converges(c, self.floor) {
            return None;
        }
        Some(self.bisect_from(c, self.floor))
    }

    /// Threshold of `c` if it beats an incumbent threshold `r_inc`.
    fn threshold_above(&self, c: &Candidate, r_inc: Option<f64>) -> Option<f64> {
        match r_inc {
            None => self.threshold(c),
            Some(r) => {
                let probe = r + self.tolerance;
                if probe > self.ceiling || !self.converges(c, probe) {
                    return None;
                }
                Some(self.bisect_from(c, probe))
            }
        }
    }

    fn fitness(&self, r_lt: Option<f64>) -> f64 {
        r_lt.map_or(f64::NEG_INFINITY, |r| r * self.precode.rate())
    }

    /// Adaptive-range pass around `start`. Returns the best candidate found
    /// that beats `incumbent` together with its threshold.
    fn adaptive_range(
        &self,
        start: &Candidate,
        incumbent: Option<f64>,
        iters: usize,
        rng: &mut ChaCha8Rng,
    ) -> (Option<(Candidate, f64)>, usize) {
        let mut best: Option<(Candidate, f64)> = None;
        let mut bar = incumbent;
        let mut center = start.clone();
        center.project();
        let mut widths: [Vec<f64>; 2] = [0, 1].map(|l| {
            center.fractions[l]
                .iter()
                .map(|&x| (0.5 * x).max(5e-3))
                .collect()
        });
        let mut tried = 0;
        for pass in 0..=iters {
            let mut x = center.clone();
            if pass > 0 {
                for l in 0..2 {
                    for (f, w) in x.fractions[l].iter_mut().zip(&widths[l]) {
                        *f += w * (rng.gen::<f64>() - 0.5);
                    }
                }
                x.project();
            }
            tried += 1;
            if let Some(r) = self.threshold_above(&x, bar) {
                bar = Some(r);
                center = x.clone();
                best = Some((x, r));
            }
            for w in widths.iter_mut().flatten() {
                *w *= 0.9;
            }
            if widths.iter().flatten().all(|&w| w < 1e-4) {
                break;
            }
        }
        (best, tried)
    }
}

fn rng_for(seed: u64, generation: usize, index: usize) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&(generation as u64).to_le_bytes());
    bytes[16..24].copy_from_slice(&(index as u64).to_le_bytes());
    bytes[24..].copy_from_slice(b"ltdesign");
    ChaCha8Rng::from_seed(bytes)
}

#[cfg(feature = "parallel")]
pub(crate) fn map_indices<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indices<T>(n: usize, f: impl Fn(usize) -> T) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Random member: degrees 1, 2, 3 plus log-uniform higher degrees, with
/// fractions drawn around a soliton-like `1/(d(d-1))` shape.
fn random_candidate(cfg: &OptimizerConfig, rng: &mut ChaCha8Rng) -> Candidate {
    let k = cfg.degree_pool_size;
    let mut c = Candidate {
        degrees: [Vec::new(), Vec::new()],
        fractions: [Vec::new(), Vec::new()],
    };
    for l in 0..2 {
        for s in 0..k {
            let d = if s < 3 && (s as u32) < cfg.max_degree {
                s as u32 + 1
            } else {
                let lo = 4f64.min(cfg.max_degree as f64).ln();
                let hi = (cfg.max_degree as f64 + 1.0).ln();
                (rng.gen_range(lo..hi).exp().floor() as u32).clamp(1, cfg.max_degree)
            };
            let shape = if d == 1 {
                0.05
            } else {
                1.0 / (d as f64 * (d as f64 - 1.0))
            };
            let e: f64 = -rng.gen::<f64>().max(1e-12).ln();
            c.degrees[l].push(d);
            c.fractions[l].push(shape * e);
        }
    }
    c.sort_slots();
    c.project();
    c
}

fn de_trial(
    cfg: &OptimizerConfig,
    target: &Candidate,
    a: &Candidate,
    b: &Candidate,
    c: &Candidate,
    rng: &mut ChaCha8Rng,
) -> Candidate {
    let mut t = target.clone();
    for l in 0..2 {
        let k = target.degrees[l].len();
        let forced = rng.gen_range(0..k);
        for s in 0..k {
            if s == forced || rng.gen::<f64>() < cfg.crossover_rate {
                let v = a.degrees[l][s] as f64
                    + cfg.de_weight * (b.degrees[l][s] as f64 - c.degrees[l][s] as f64);
                let d = (v.round().max(1.0) as u32).min(cfg.max_degree);
                if d != t.degrees[l][s] {
                    t.degrees[l][s] = d;
                    t.fractions[l][s] = a.fractions[l][s];
                }
            }
        }
    }
    t.sort_slots();
    t.project();
    t
}

/// Maximizes `r_lt* · r_pre` over per-level LT distributions at `spec`.
pub fn optimize(
    spec: &ChannelSpec,
    precode: PrecodeProfile,
    cfg: &OptimizerConfig,
    de_cfg: &DeConfig,
) -> Result<DesignResult> {
    cfg.validate()?;
    if cfg.generations == 0 {
        return Err(Error::Infeasible("generation budget is zero".into()));
    }
    let ev = Evaluator::new(
        spec,
        precode,
        de_cfg,
        cfg.stability_required,
        cfg.rate_floor,
        cfg.rate_tolerance,
    )?;
    let n = cfg.population_size;

    let init = map_indices(n, |i| {
        let mut rng = rng_for(cfg.seed, 0, i);
        let c = random_candidate(cfg, &mut rng);
        let r = ev.threshold(&c);
        (c, r)
    });
    let mut pop: Vec<(Candidate, Option<f64>)> = init;
    let mut evaluated = n;
    let mut trace = vec![stats(0, &pop, &ev)];

    for g in 1..=cfg.generations {
        let trials = map_indices(n, |i| {
            let mut rng = rng_for(cfg.seed, g, i);
            let mut pick = |excl: &[usize]| loop {
                let j = rng.gen_range(0..n);
                if !excl.contains(&j) {
                    break j;
                }
            };
            let ia = pick(&[i]);
            let ib = pick(&[i, ia]);
            let ic = pick(&[i, ia, ib]);
            let trial = de_trial(cfg, &pop[i].0, &pop[ia].0, &pop[ib].0, &pop[ic].0, &mut rng);
            ev.adaptive_range(&trial, pop[i].1, cfg.adaptive_range_iters, &mut rng)
        });
        for (i, (won, tried)) in trials.into_iter().enumerate() {
            evaluated += tried;
            if let Some((c, r)) = won {
                pop[i] = (c, Some(r));
            }
        }
        trace.push(stats(g, &pop, &ev));
    }

    let best = pop
        .iter()
        .enumerate()
        .filter_map(|(i, (_, r))| r.map(|r| (i, r)))
        .fold(None, |acc: Option<(usize, f64)>, (i, r)| match acc {
            Some((_, br)) if br >= r => acc,
            _ => Some((i, r)),
        });
    let (idx, r_lt) = best
        .ok_or_else(|| Error::Infeasible("no candidate converged above the rate floor".into()))?;
    let cand = pop[idx].0.clone();
    finish(spec, precode, cand, r_lt, trace, evaluated)
}

fn stats(generation: usize, pop: &[(Candidate, Option<f64>)], ev: &Evaluator) -> GenerationStats {
    let feasible: Vec<f64> = pop
        .iter()
        .filter_map(|p| p.1)
        .map(|r| ev.fitness(Some(r)))
        .collect();
    let best = feasible.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = if feasible.is_empty() {
        f64::NEG_INFINITY
    } else {
        feasible.iter().sum::<f64>() / feasible.len() as f64
    };
    GenerationStats {
        generation,
        best_fitness: best,
        mean_fitness: mean,
    }
}

fn finish(
    spec: &ChannelSpec,
    precode: PrecodeProfile,
    cand: Candidate,
    r_lt: f64,
    trace: Vec<GenerationStats>,
    evaluated: usize,
) -> Result<DesignResult> {
    let realized = r_lt * precode.rate();
    let eta = realized * spec.bits_per_symbol() as f64 / modulation_capacity(spec);
    let components = ComponentFile {
        design_snr_db: Some(spec.snr_db()),
        rate_efficiency: Some(eta),
        r_lt: Some(r_lt),
        modulation_order: spec.modulation_order(),
        precode,
        input_profile: Default::default(),
        omega1: cand.omega(0)?,
        omega2: cand.omega(1)?,
    };
    let ensemble = components.build(r_lt)?;
    Ok(DesignResult {
        candidate: cand,
        components,
        ensemble,
        r_lt,
        realized_rate: realized,
        rate_efficiency: eta,
        trace,
        candidates_evaluated: evaluated,
    })
}

/// `r_lt* · r_pre` for one candidate, or `-∞` if it is infeasible.
///
/// The rate search runs from `rate_floor` to the capacity bound with the
/// configured tolerance.
pub fn evaluate_candidate(
    c: &Candidate,
    spec: &ChannelSpec,
    precode: PrecodeProfile,
    cfg: &OptimizerConfig,
    de_cfg: &DeConfig,
) -> Result<f64> {
    let ev = Evaluator::new(
        spec,
        precode,
        de_cfg,
        cfg.stability_required,
        cfg.rate_floor,
        cfg.rate_tolerance,
    )?;
    Ok(ev.fitness(ev.threshold(c)))
}

/// Runs only the adaptive-range loop on a fixed degree set, starting from
/// `start`. The returned design is never worse than `start`.
pub fn refine_fractions(
    start: &Candidate,
    spec: &ChannelSpec,
    precode: PrecodeProfile,
    cfg: &OptimizerConfig,
    de_cfg: &DeConfig,
) -> Result<DesignResult> {
    cfg.validate()?;
    let ev = Evaluator::new(
        spec,
        precode,
        de_cfg,
        cfg.stability_required,
        cfg.rate_floor,
        cfg.rate_tolerance,
    )?;
    let mut start = start.clone();
    start.project();
    let r0 = ev
        .threshold(&start)
        .ok_or_else(|| Error::Infeasible("starting point does not converge".into()))?;
    let mut rng = rng_for(cfg.seed, 0, usize::MAX);
    let (won, tried) = ev.adaptive_range(&start, Some(r0), cfg.adaptive_range_iters, &mut rng);
    let (cand, r) = won.unwrap_or((start, r0));
    let trace = vec![GenerationStats {
        generation: 0,
        best_fitness: ev.fitness(Some(r)),
        mean_fitness: ev.fitness(Some(r)),
    }];
    finish(spec, precode, cand, r, trace, tried + 1)
}
