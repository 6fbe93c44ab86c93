//! Multi-edge-type description of a Raptor code for a two-density
//! modulation (Gray 4-PAM, or 16-QAM as two 4-PAM components).
//!
//! Edge types:
//!
//! | type | connects                                        |
//! |------|-------------------------------------------------|
//! | 1    | input bits to precode checks                    |
//! | 2    | input bits to LT output checks                  |
//! | 3    | level-1 transmitted bits to their LT check      |
//! | 4    | level-2 transmitted bits to their LT check      |
//!
//! Input bits are punctured variable nodes. Each transmitted bit is a degree
//! one variable node observed through its bit channel, and it hangs off
//! exactly one LT check. Node fractions are relative to the number of
//! transmitted bits.

use std::collections::BTreeMap;
use std::fmt;

use crate::channel::{modulation_capacity, ChannelSpec};
use crate::degree::{DegreeDistribution, NORMALIZATION_TOLERANCE};
use crate::error::{Error, Result};

/// Tolerance used by [`MetRaptorEnsemble::validate`].
pub const CONSTRAINT_TOLERANCE: f64 = 1e-9;
/// Input-node LT-degree tail mass that may be cut from the Poisson profile.
pub const POISSON_TAIL: f64 = 1e-6;
/// Hard cap on the input-node LT degree.
pub const MAX_INPUT_LT_DEGREE: u32 = 400;

/// Degree vector `[type1, type2, type3, type4]`.
pub type EdgeDegrees = [u32; 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChannelAssignment {
    Punctured,
    Channel1,
    Channel2,
}

impl ChannelAssignment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Punctured => "punctured",
            Self::Channel1 => "channel1",
            Self::Channel2 => "channel2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "punctured" => Some(Self::Punctured),
            "channel1" => Some(Self::Channel1),
            "channel2" => Some(Self::Channel2),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarNodeType {
    pub degrees: EdgeDegrees,
    pub channel: ChannelAssignment,
    pub fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChkNodeType {
    pub degrees: EdgeDegrees,
    pub fraction: f64,
}

/// The three kinds of check node in the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    Precode,
    Lt1,
    Lt2,
}

impl ChkNodeType {
    pub fn kind(&self) -> Option<CheckKind> {
        match self.degrees {
            [i, 0, 0, 0] if i >= 2 => Some(CheckKind::Precode),
            [0, j, 1, 0] if j >= 1 => Some(CheckKind::Lt1),
            [0, j, 0, 1] if j >= 1 => Some(CheckKind::Lt2),
            _ => None,
        }
    }
}

/// Regular `(d_v, d_c)` LDPC precode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrecodeProfile {
    pub dv: u32,
    pub dc: u32,
}

impl PrecodeProfile {
    pub fn new(dv: u32, dc: u32) -> Result<Self> {
        if dv == 0 || dc < 2 || dv >= dc {
            return Err(Error::Config(format!(
                "precode ({dv},{dc}) must satisfy 1 <= dv < dc"
            )));
        }
        Ok(Self { dv, dc })
    }

    pub fn rate(&self) -> f64 {
        1.0 - self.dv as f64 / self.dc as f64
    }
}

impl Default for PrecodeProfile {
    /// The (3,60)-regular, rate-0.95 precode.
    fn default() -> Self {
        Self { dv: 3, dc: 60 }
    }
}

/// Structural constraints checked by [`MetRaptorEnsemble::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// Input-node fractions sum to the LT rate.
    InputFractionSum,
    /// Precode-check fractions sum to `r_lt (1 - r_pre)`.
    PrecodeCheckSum,
    /// Each transmitted bit class has fraction one half.
    TransmittedFractions,
    /// LT checks of each bit level sum to one half.
    LtCheckSums,
    /// Variable and check socket counts agree on the given edge type.
    SocketBalance(usize),
    /// A node type has a degree vector outside the Raptor structure.
    NodeShape,
    /// A rate parameter or fraction is out of range.
    Range,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InputFractionSum => write!(f, "input-node fractions must sum to r_lt"),
            Self::PrecodeCheckSum => {
                write!(f, "precode-check fractions must sum to r_lt*(1-r_pre)")
            }
            Self::TransmittedFractions => {
                write!(f, "transmitted-node fractions must both equal 0.5")
            }
            Self::LtCheckSums => write!(f, "LT-check fractions of each level must sum to 0.5"),
            Self::SocketBalance(t) => write!(f, "socket counts must balance on edge type {t}"),
            Self::NodeShape => write!(f, "node degree vector outside the Raptor structure"),
            Self::Range => write!(f, "parameter out of range"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub constraint: Constraint,
    pub residual: f64,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (residual {:e})", self.constraint, self.residual)?;
        if !self.detail.is_empty() {
            write!(f, ": {}", self.detail)?;
        }
        Ok(())
    }
}

/// Edge-perspective description of the precode (type-1) subgraph.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreEdgePerspective {
    /// `λ_[i j]`: fraction of type-1 edges attached to input nodes with `i`
    /// type-1 and `j` type-2 edges.
    pub lambda: BTreeMap<(u32, u32), f64>,
    /// `ρ_i`: fraction of type-1 edges attached to precode checks of degree `i`.
    pub rho: DegreeDistribution,
}

impl CoreEdgePerspective {
    pub fn lambda_2(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.lambda
            .iter()
            .filter(|((i, _), _)| *i == 2)
            .map(|(&(_, j), &v)| (j, v))
    }

    /// `ρ'(1)` for the edge-perspective polynomial `Σ ρ_i x^{i-1}`.
    pub fn rho_prime_at_one(&self) -> f64 {
        self.rho.edge_derivative_at_one()
    }
}

/// Multi-edge-type ensemble of a Raptor code for a two-density modulation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetRaptorEnsemble {
    var_types: Vec<VarNodeType>,
    chk_types: Vec<ChkNodeType>,
    r_lt: f64,
    r_pre: f64,
    precode: PrecodeProfile,
    modulation_order: u32,
}

impl MetRaptorEnsemble {
    /// Assembles an ensemble; duplicate node types are merged and types are
    /// kept in sorted key order. No constraint checking happens here.
    pub fn new(
        var_types: Vec<VarNodeType>,
        chk_types: Vec<ChkNodeType>,
        r_lt: f64,
        r_pre: f64,
        precode: PrecodeProfile,
        modulation_order: u32,
    ) -> Self {
        let mut vars: BTreeMap<(ChannelAssignment, EdgeDegrees), f64> = BTreeMap::new();
        for v in var_types {
            *vars.entry((v.channel, v.degrees)).or_insert(0.0) += v.fraction;
        }
        let mut chks: BTreeMap<EdgeDegrees, f64> = BTreeMap::new();
        for c in chk_types {
            *chks.entry(c.degrees).or_insert(0.0) += c.fraction;
        }
        Self {
            var_types: vars
                .into_iter()
                .map(|((channel, degrees), fraction)| VarNodeType {
                    degrees,
                    channel,
                    fraction,
                })
                .collect(),
            chk_types: chks
                .into_iter()
                .map(|(degrees, fraction)| ChkNodeType { degrees, fraction })
                .collect(),
            r_lt,
            r_pre,
            precode,
            modulation_order,
        }
    }

    pub fn var_types(&self) -> &[VarNodeType] {
        &self.var_types
    }

    pub fn chk_types(&self) -> &[ChkNodeType] {
        &self.chk_types
    }

    pub fn r_lt(&self) -> f64 {
        self.r_lt
    }

    pub fn r_pre(&self) -> f64 {
        self.r_pre
    }

    pub fn precode(&self) -> PrecodeProfile {
        self.precode
    }

    pub fn modulation_order(&self) -> u32 {
        self.modulation_order
    }

    /// Bits per modulated symbol.
    pub fn q(&self) -> usize {
        self.modulation_order.trailing_zeros() as usize
    }

    /// `(L_{x_t}(1,1), R_{x_t}(1))` for t = 1..4.
    pub fn socket_counts(&self) -> ([f64; 4], [f64; 4]) {
        let mut v = [0.0; 4];
        let mut c = [0.0; 4];
        for t in &self.var_types {
            for (s, &d) in v.iter_mut().zip(&t.degrees) {
                *s += d as f64 * t.fraction;
            }
        }
        for t in &self.chk_types {
            for (s, &d) in c.iter_mut().zip(&t.degrees) {
                *s += d as f64 * t.fraction;
            }
        }
        (v, c)
    }

    /// All structural violations; empty iff the ensemble is a valid Raptor
    /// ensemble.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |constraint, residual: f64, detail: String| {
            out.push(Violation {
                constraint,
                residual,
                detail,
            })
        };
        let tol = CONSTRAINT_TOLERANCE;

        if !(self.r_lt > 0.0 && self.r_lt <= 1.0) {
            push(
                Constraint::Range,
                self.r_lt,
                format!("r_lt = {} not in (0, 1]", self.r_lt),
            );
        }
        if !(self.r_pre > 0.0 && self.r_pre <= 1.0) {
            push(
                Constraint::Range,
                self.r_pre,
                format!("r_pre = {} not in (0, 1]", self.r_pre),
            );
        }

        let mut input_sum = 0.0;
        let (mut ch1, mut ch2) = (0.0, 0.0);
        for t in &self.var_types {
            if !(t.fraction >= 0.0 && t.fraction.is_finite()) {
                push(
                    Constraint::Range,
                    t.fraction,
                    format!("variable type {:?}", t.degrees),
                );
            }
            match t.channel {
                ChannelAssignment::Punctured => {
                    let [i, j, k, m] = t.degrees;
                    if i < 1 || j < 1 || k != 0 || m != 0 {
                        push(
                            Constraint::NodeShape,
                            t.fraction,
                            format!("punctured node {:?}", t.degrees),
                        );
                    }
                    input_sum += t.fraction;
                }
                ChannelAssignment::Channel1 => {
                    if t.degrees != [0, 0, 1, 0] {
                        push(
                            Constraint::NodeShape,
                            t.fraction,
                            format!("channel-1 node {:?}", t.degrees),
                        );
                    }
                    ch1 += t.fraction;
                }
                ChannelAssignment::Channel2 => {
                    if t.degrees != [0, 0, 0, 1] {
                        push(
                            Constraint::NodeShape,
                            t.fraction,
                            format!("channel-2 node {:?}", t.degrees),
                        );
                    }
                    ch2 += t.fraction;
                }
            }
        }
        let r = input_sum - self.r_lt;
        if r.abs() > tol {
            push(Constraint::InputFractionSum, r, format!("sum {input_sum}"));
        }
        for (sum, name) in [(ch1, "channel1"), (ch2, "channel2")] {
            if (sum - 0.5).abs() > tol {
                push(
                    Constraint::TransmittedFractions,
                    sum - 0.5,
                    name.to_string(),
                );
            }
        }

        let (mut pre, mut lt1, mut lt2) = (0.0, 0.0, 0.0);
        for t in &self.chk_types {
            if !(t.fraction >= 0.0 && t.fraction.is_finite()) {
                push(
                    Constraint::Range,
                    t.fraction,
                    format!("check type {:?}", t.degrees),
                );
            }
            match t.kind() {
                Some(CheckKind::Precode) => pre += t.fraction,
                Some(CheckKind::Lt1) => lt1 += t.fraction,
                Some(CheckKind::Lt2) => lt2 += t.fraction,
                None => push(
                    Constraint::NodeShape,
                    t.fraction,
                    format!("check node {:?}", t.degrees),
                ),
            }
        }
        let target = self.r_lt * (1.0 - self.r_pre);
        if (pre - target).abs() > tol {
            push(
                Constraint::PrecodeCheckSum,
                pre - target,
                format!("sum {pre}"),
            );
        }
        for (sum, name) in [(lt1, "level 1"), (lt2, "level 2")] {
            if (sum - 0.5).abs() > tol {
                push(Constraint::LtCheckSums, sum - 0.5, name.to_string());
            }
        }

        let (v, c) = self.socket_counts();
        for t in 0..4 {
            let r = v[t] - c[t];
            if r.abs() > tol {
                push(
                    Constraint::SocketBalance(t + 1),
                    r,
                    format!("variable {} vs check {}", v[t], c[t]),
                );
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Errors with every violation if the ensemble is invalid.
    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidEnsemble(
                v.iter().map(|x| x.to_string()).collect(),
            ))
        }
    }

    /// `L(1,1) − R(1)`; equals `r_lt · r_pre` on a valid ensemble.
    pub fn designed_rate(&self) -> Result<f64> {
        self.ensure_valid()?;
        let l: f64 = self.var_types.iter().map(|t| t.fraction).sum();
        let r: f64 = self.chk_types.iter().map(|t| t.fraction).sum();
        Ok(l - r)
    }

    /// `η = R · log2 Q / C(γ)` with the parallel-independent-decoding capacity.
    pub fn rate_efficiency(&self, spec: &ChannelSpec) -> Result<f64> {
        if spec.modulation_order() != self.modulation_order {
            return Err(Error::Config(format!(
                "ensemble is for Q = {}, channel is Q = {}",
                self.modulation_order,
                spec.modulation_order()
            )));
        }
        let rate = self.designed_rate()?;
        let cap = modulation_capacity(spec);
        if cap <= 0.0 {
            return Err(Error::Config("channel capacity is zero".into()));
        }
        Ok(rate * spec.bits_per_symbol() as f64 / cap)
    }

    /// Per-level LT output degree polynomials `Ω^(1)`, `Ω^(2)`, each with
    /// declared sum 0.5.
    pub fn lt_distributions(&self) -> (DegreeDistribution, DegreeDistribution) {
        let pick = |kind: CheckKind| {
            let terms = self
                .chk_types
                .iter()
                .filter(|t| t.kind() == Some(kind))
                .map(|t| (t.degrees[1], t.fraction));
            DegreeDistribution::unchecked(terms, 0.5).expect("check degrees are positive")
        };
        (pick(CheckKind::Lt1), pick(CheckKind::Lt2))
    }

    /// Input-node LT-degree profile as `(j, fraction)` pairs.
    pub fn input_lt_profile(&self) -> Vec<(u32, f64)> {
        let mut m: BTreeMap<u32, f64> = BTreeMap::new();
        for t in self
            .var_types
            .iter()
            .filter(|t| t.channel == ChannelAssignment::Punctured)
        {
            *m.entry(t.degrees[1]).or_insert(0.0) += t.fraction;
        }
        m.into_iter().collect()
    }

    /// Edge-perspective multinomials of the precode subgraph.
    pub fn edge_perspective_core(&self) -> Result<CoreEdgePerspective> {
        self.ensure_valid()?;
        let (v, c) = self.socket_counts();
        if v[0] <= 0.0 || c[0] <= 0.0 {
            return Err(Error::Config(
                "ensemble has no precode (type-1) edges".into(),
            ));
        }
        let mut lambda = BTreeMap::new();
        for t in self.var_types.iter().filter(|t| t.degrees[0] > 0) {
            *lambda.entry((t.degrees[0], t.degrees[1])).or_insert(0.0) +=
                t.degrees[0] as f64 * t.fraction / v[0];
        }
        let rho = DegreeDistribution::unchecked(
            self.chk_types
                .iter()
                .filter(|t| t.degrees[0] > 0)
                .map(|t| (t.degrees[0], t.degrees[0] as f64 * t.fraction / c[0])),
            1.0,
        )?;
        Ok(CoreEdgePerspective { lambda, rho })
    }

    /// Copy with one variable-type fraction replaced (for perturbation tests
    /// and tools).
    pub fn with_var_fraction(&self, index: usize, fraction: f64) -> Self {
        let mut e = self.clone();
        e.var_types[index].fraction = fraction;
        e
    }

    pub fn with_chk_fraction(&self, index: usize, fraction: f64) -> Self {
        let mut e = self.clone();
        e.chk_types[index].fraction = fraction;
        e
    }
}

/// Zero-truncated Poisson profile on `1..=cap` with the given mean.
///
/// The Poisson parameter is solved so that the truncated distribution has
/// exactly the requested mean; `cap` is the smallest degree whose tail mass
/// is below [`POISSON_TAIL`].
pub fn truncated_poisson(mean: f64) -> Result<Vec<(u32, f64)>> {
    if !(mean >= 1.0) || !mean.is_finite() {
        return Err(Error::Infeasible(format!(
            "input nodes need at least one LT edge each, mean LT degree is {mean}"
        )));
    }
    if mean - 1.0 < 1e-12 {
        return Ok(vec![(1, 1.0)]);
    }
    let profile = |lambda: f64, cap: u32| -> Vec<f64> {
        // Work in logs: p_j ∝ λ^j / j!
        let logs: Vec<f64> = (1..=cap)
            .map(|j| j as f64 * lambda.ln() - ln_factorial(j))
            .collect();
        let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - mx).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    };
    let mean_of =
        |p: &[f64]| -> f64 { p.iter().enumerate().map(|(i, &x)| (i + 1) as f64 * x).sum() };
    let tail_cap = |lambda: f64| -> Result<u32> {
        // Smallest cap with untruncated tail P(J > cap | J >= 1) < tail bound.
        let mut log_terms = Vec::new();
        for j in 1..=MAX_INPUT_LT_DEGREE + 1 {
            log_terms.push(j as f64 * lambda.ln() - ln_factorial(j));
        }
        let mx = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = log_terms.iter().map(|l| (l - mx).exp()).collect();
        let total: f64 = w.iter().sum();
        let mut acc = 0.0;
        for (i, x) in w.iter().enumerate() {
            acc += x;
            if (total - acc) / total < POISSON_TAIL {
                return Ok((i + 1).max(1) as u32);
            }
        }
        Err(Error::Infeasible(format!(
            "Poisson tail above {POISSON_TAIL} beyond degree {MAX_INPUT_LT_DEGREE} (mean {mean})"
        )))
    };

    let mut cap = tail_cap(mean)?.max(2);
    for _ in 0..20 {
        if (cap as f64) <= mean {
            cap = mean.ceil() as u32 + 1;
        }
        let (mut lo, mut hi) = (1e-9, 4.0 * mean + 50.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mean_of(&profile(mid, cap)) < mean {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let lambda = 0.5 * (lo + hi);
        let new_cap = tail_cap(lambda)?.max(2);
        if new_cap <= cap {
            let p = profile(lambda, cap);
            return Ok(p
                .into_iter()
                .enumerate()
                .map(|(i, x)| ((i + 1) as u32, x))
                .filter(|&(_, x)| x > 0.0)
                .collect());
        }
        cap = new_cap;
    }
    Err(Error::Infeasible("Poisson profile did not settle".into()))
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// How LT edges are spread over input nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputProfile {
    /// Zero-truncated Poisson, as produced by uniform neighbour selection.
    TruncatedPoisson,
    /// The two integer degrees adjacent to the mean.
    #[default]
    Concentrated,
}

impl InputProfile {
    pub fn as_str(self) -> &'static str {
        match self {
            InputProfile::TruncatedPoisson => "poisson",
            InputProfile::Concentrated => "concentrated",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "poisson" => Ok(InputProfile::TruncatedPoisson),
            "concentrated" => Ok(InputProfile::Concentrated),
            _ => Err(Error::Config(format!("unknown input profile '{s}'"))),
        }
    }

    /// `(j, p_j)` with `Σ p_j = 1` and `Σ j p_j = mean`.
    pub fn degrees(self, mean: f64) -> Result<Vec<(u32, f64)>> {
        match self {
            InputProfile::TruncatedPoisson => truncated_poisson(mean),
            InputProfile::Concentrated => concentrated(mean),
        }
    }
}

/// Two-point profile on `⌊μ⌋` and `⌊μ⌋ + 1` with mean `μ`.
pub fn concentrated(mean: f64) -> Result<Vec<(u32, f64)>> {
    if !(mean >= 1.0) || !mean.is_finite() || mean > MAX_INPUT_LT_DEGREE as f64 {
        return Err(Error::Infeasible(format!(
            "mean input LT degree {mean} outside [1, {MAX_INPUT_LT_DEGREE}]"
        )));
    }
    let lo = mean.floor();
    let hi_frac = mean - lo;
    let mut out = vec![(lo as u32, 1.0 - hi_frac)];
    if hi_frac > 0.0 {
        out.push((lo as u32 + 1, hi_frac));
    }
    Ok(out)
}

/// Builds the full ensemble from a regular precode and the two per-level
/// LT output-degree polynomials.
///
/// Each `Ω` must sum to 0.5 within 5e-4 and is rescaled to exactly 0.5.
/// Input nodes get `d_v` precode edges and the default [`InputProfile`]
/// matching the LT edge count.
pub fn build_from_components(
    precode: PrecodeProfile,
    omega1: &DegreeDistribution,
    omega2: &DegreeDistribution,
    r_lt: f64,
    modulation_order: u32,
) -> Result<MetRaptorEnsemble> {
    build_with_profile(
        precode,
        omega1,
        omega2,
        r_lt,
        modulation_order,
        InputProfile::default(),
    )
}

/// [`build_from_components`] with an explicit input-node profile.
pub fn build_with_profile(
    precode: PrecodeProfile,
    omega1: &DegreeDistribution,
    omega2: &DegreeDistribution,
    r_lt: f64,
    modulation_order: u32,
    input_profile: InputProfile,
) -> Result<MetRaptorEnsemble> {
    if !(r_lt > 0.0 && r_lt <= 1.0) {
        return Err(Error::Config(format!("r_lt = {r_lt} not in (0, 1]")));
    }
    for (name, om) in [("level 1", omega1), ("level 2", omega2)] {
        if om.is_empty() || (om.sum() - 0.5).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Config(format!(
                "{name} LT distribution sums to {}, expected 0.5",
                om.sum()
            )));
        }
    }
    let om1 = omega1.rescaled_to(0.5);
    let om2 = omega2.rescaled_to(0.5);
    let lt_edges = om1.derivative_at_one() + om2.derivative_at_one();
    let profile = input_profile.degrees(lt_edges / r_lt)?;

    let mut vars: Vec<VarNodeType> = profile
        .iter()
        .map(|&(j, p)| VarNodeType {
            degrees: [precode.dv, j, 0, 0],
            channel: ChannelAssignment::Punctured,
            fraction: r_lt * p,
        })
        .collect();
    vars.push(VarNodeType {
        degrees: [0, 0, 1, 0],
        channel: ChannelAssignment::Channel1,
        fraction: 0.5,
    });
    vars.push(VarNodeType {
        degrees: [0, 0, 0, 1],
        channel: ChannelAssignment::Channel2,
        fraction: 0.5,
    });

    let r_pre = precode.rate();
    let mut chks = vec![ChkNodeType {
        degrees: [precode.dc, 0, 0, 0],
        fraction: r_lt * precode.dv as f64 / precode.dc as f64,
    }];
    chks.extend(om1.iter().map(|(j, c)| ChkNodeType {
        degrees: [0, j, 1, 0],
        fraction: c,
    }));
    chks.extend(om2.iter().map(|(j, c)| ChkNodeType {
        degrees: [0, j, 0, 1],
        fraction: c,
    }));
    let e = MetRaptorEnsemble::new(vars, chks, r_lt, r_pre, precode, modulation_order);
    e.ensure_valid()?;
    Ok(e)
}

impl DegreeDistribution {
    fn rescaled_to(&self, target: f64) -> DegreeDistribution {
        DegreeDistribution::unchecked(self.iter(), target)
            .expect("terms already checked")
            .rescaled()
    }
}
