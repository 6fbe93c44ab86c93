//! Plain-text formats for ensembles and LT component files.
//!
//! Both formats are line oriented: `#` starts a comment, every other
//! non-empty line is a keyword followed by whitespace-separated values.
//!
//! Ensemble file:
//!
//! ```text
//! q 4
//! modulation qam16
//! r_lt 0.5
//! r_pre 0.95
//! precode_dv 3
//! precode_dc 60
//! var 3 4 0 0 punctured 0.0125
//! var 0 0 1 0 channel1 0.5
//! chk 0 2 1 0 - 0.25
//! ```
//!
//! Component file (the LT output-degree polynomials of the two bit levels):
//!
//! ```text
//! design_snr_db 6
//! rate_efficiency 0.9519
//! modulation qam16
//! precode_dv 3
//! precode_dc 60
//! input_profile concentrated
//! omega1 2 0.25
//! omega2 1 0.01
//! ```
//!
//! Writers emit node types in sorted key order and floats in shortest
//! round-trip form, so equal values always produce identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use crate::channel::{modulation_capacity, ChannelSpec};
use crate::degree::DegreeDistribution;
use crate::ensemble::{
    build_with_profile, ChannelAssignment, ChkNodeType, InputProfile, MetRaptorEnsemble,
    PrecodeProfile, VarNodeType,
};
use crate::error::{Error, Result};

fn modulation_name(order: u32) -> &'static str {
    match order {
        2 => "bpsk",
        4 => "pam4",
        _ => "qam16",
    }
}

fn parse_modulation(s: &str, line: usize) -> Result<u32> {
    match s {
        "bpsk" => Ok(2),
        "pam4" => Ok(4),
        "qam16" => Ok(16),
        other => Err(Error::Parse {
            line,
            msg: format!("unknown modulation '{other}'"),
        }),
    }
}

fn num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.ok_or_else(|| Error::Parse {
        line,
        msg: format!("missing {what}"),
    })?
    .parse()
    .map_err(|_| Error::Parse {
        line,
        msg: format!("bad {what}"),
    })
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            None
        } else {
            Some((i + 1, l.split_whitespace().collect()))
        }
    })
}

pub fn write_ensemble(e: &MetRaptorEnsemble) -> String {
    let mut s = String::new();
    let p = e.precode();
    writeln!(s, "# multi-edge Raptor ensemble").unwrap();
    writeln!(s, "q {}", e.q()).unwrap();
    writeln!(s, "modulation {}", modulation_name(e.modulation_order())).unwrap();
    writeln!(s, "r_lt {}", e.r_lt()).unwrap();
    writeln!(s, "r_pre {}", e.r_pre()).unwrap();
    writeln!(s, "precode_dv {}", p.dv).unwrap();
    writeln!(s, "precode_dc {}", p.dc).unwrap();
    for t in e.var_types() {
        let [a, b, c, d] = t.degrees;
        writeln!(
            s,
            "var {a} {b} {c} {d} {} {}",
            t.channel.as_str(),
            t.fraction
        )
        .unwrap();
    }
    for t in e.chk_types() {
        let [a, b, c, d] = t.degrees;
        writeln!(s, "chk {a} {b} {c} {d} - {}", t.fraction).unwrap();
    }
    s
}

/// Parses an ensemble file. The result is not validated.
pub fn parse_ensemble(text: &str) -> Result<MetRaptorEnsemble> {
    let mut q: Option<usize> = None;
    let mut modulation = None;
    let (mut r_lt, mut r_pre) = (None, None);
    let (mut dv, mut dc) = (None, None);
    let mut vars = Vec::new();
    let mut chks = Vec::new();
    for (line, toks) in content_lines(text) {
        let mut it = toks.iter().copied();
        match it.next().unwrap() {
            "q" => q = Some(num(it.next(), line, "q")?),
            "modulation" => modulation = Some(parse_modulation(it.next().unwrap_or(""), line)?),
            "r_lt" => r_lt = Some(num(it.next(), line, "r_lt")?),
            "r_pre" => r_pre = Some(num(it.next(), line, "r_pre")?),
            "precode_dv" => dv = Some(num(it.next(), line, "precode_dv")?),
            "precode_dc" => dc = Some(num(it.next(), line, "precode_dc")?),
            kw @ ("var" | "chk") => {
                let mut deg = [0u32; 4];
                for d in deg.iter_mut() {
                    *d = num(it.next(), line, "degree")?;
                }
                let chan = it.next().ok_or_else(|| Error::Parse {
                    line,
                    msg: "missing channel column".into(),
                })?;
                let fraction: f64 = num(it.next(), line, "fraction")?;
                if kw == "var" {
                    let channel = ChannelAssignment::parse(chan).ok_or_else(|| Error::Parse {
                        line,
                        msg: format!("unknown channel '{chan}'"),
                    })?;
                    vars.push(VarNodeType {
                        degrees: deg,
                        channel,
                        fraction,
                    });
                } else {
                    chks.push(ChkNodeType {
                        degrees: deg,
                        fraction,
                    });
                }
            }
            other => {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown keyword '{other}'"),
                })
            }
        }
    }
    let missing = |what: &str| Error::Parse {
        line: 0,
        msg: format!("missing header field {what}"),
    };
    let order = modulation.unwrap_or(16);
    if let Some(q) = q {
        if q != order.trailing_zeros() as usize {
            return Err(Error::Parse {
                line: 0,
                msg: format!("q = {q} does not match modulation order {order}"),
            });
        }
    }
    let precode = PrecodeProfile::new(
        dv.ok_or_else(|| missing("precode_dv"))?,
        dc.ok_or_else(|| missing("precode_dc"))?,
    )?;
    Ok(MetRaptorEnsemble::new(
        vars,
        chks,
        r_lt.ok_or_else(|| missing("r_lt"))?,
        r_pre.ok_or_else(|| missing("r_pre"))?,
        precode,
        order,
    ))
}

/// Two per-level LT output-degree polynomials plus their design context.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentFile {
    pub design_snr_db: Option<f64>,
    pub rate_efficiency: Option<f64>,
    pub r_lt: Option<f64>,
    pub modulation_order: u32,
    pub precode: PrecodeProfile,
    pub input_profile: InputProfile,
    pub omega1: DegreeDistribution,
    pub omega2: DegreeDistribution,
}

impl ComponentFile {
    /// LT rate implied by a rate efficiency at the design SNR:
    /// `r_lt = η · C(γ_d) / (q · r_pre)`.
    pub fn reconstructed_r_lt(&self) -> Result<f64> {
        if let Some(r) = self.r_lt {
            return Ok(r);
        }
        let (snr, eta) = match (self.design_snr_db, self.rate_efficiency) {
            (Some(s), Some(e)) => (s, e),
            _ => {
                return Err(Error::Config(
                    "component file needs r_lt or both design_snr_db and rate_efficiency".into(),
                ))
            }
        };
        let spec = ChannelSpec::new(self.modulation_order, snr)?;
        let cap = modulation_capacity(&spec);
        Ok(eta * cap / (spec.bits_per_symbol() as f64 * self.precode.rate()))
    }

    pub fn build(&self, r_lt: f64) -> Result<MetRaptorEnsemble> {
        build_with_profile(
            self.precode,
            &self.omega1,
            &self.omega2,
            r_lt,
            self.modulation_order,
            self.input_profile,
        )
    }

    /// Ensemble at the reconstructed (or recorded) LT rate.
    pub fn to_ensemble(&self) -> Result<MetRaptorEnsemble> {
        self.build(self.reconstructed_r_lt()?)
    }
}

pub fn write_components(c: &ComponentFile) -> String {
    let mut s = String::new();
    writeln!(s, "# LT output-degree distributions per bit level").unwrap();
    if let Some(v) = c.design_snr_db {
        writeln!(s, "design_snr_db {v}").unwrap();
    }
    if let Some(v) = c.rate_efficiency {
        writeln!(s, "rate_efficiency {v}").unwrap();
    }
    if let Some(v) = c.r_lt {
        writeln!(s, "r_lt {v}").unwrap();
    }
    writeln!(s, "modulation {}", modulation_name(c.modulation_order)).unwrap();
    writeln!(s, "precode_dv {}", c.precode.dv).unwrap();
    writeln!(s, "precode_dc {}", c.precode.dc).unwrap();
    if c.input_profile != InputProfile::default() {
        writeln!(s, "input_profile {}", c.input_profile.as_str()).unwrap();
    }
    for (name, om) in [("omega1", &c.omega1), ("omega2", &c.omega2)] {
        for (d, v) in om.iter() {
            writeln!(s, "{name} {d} {v}").unwrap();
        }
    }
    s
}

/// Parses a component file; each polynomial must sum to 0.5 within 5e-4.
pub fn parse_components(text: &str) -> Result<ComponentFile> {
    let mut snr = None;
    let mut eta = None;
    let mut r_lt = None;
    let mut modulation = 16;
    let (mut dv, mut dc) = (3, 60);
    let mut profile = InputProfile::default();
    let mut om1 = Vec::new();
    let mut om2 = Vec::new();
    for (line, toks) in content_lines(text) {
        let mut it = toks.iter().copied();
        match it.next().unwrap() {
            "design_snr_db" => snr = Some(num(it.next(), line, "design_snr_db")?),
            "rate_efficiency" => eta = Some(num(it.next(), line, "rate_efficiency")?),
            "r_lt" => r_lt = Some(num(it.next(), line, "r_lt")?),
            "modulation" => modulation = parse_modulation(it.next().unwrap_or(""), line)?,
            "precode_dv" => dv = num(it.next(), line, "precode_dv")?,
            "precode_dc" => dc = num(it.next(), line, "precode_dc")?,
            "input_profile" => {
                profile =
                    InputProfile::parse(it.next().unwrap_or("")).map_err(|e| Error::Parse {
                        line,
                        msg: e.to_string(),
                    })?
            }
            kw @ ("omega1" | "omega2") => {
                let d: u32 = num(it.next(), line, "degree")?;
                let c: f64 = num(it.next(), line, "coefficient")?;
                if kw == "omega1" { &mut om1 } else { &mut om2 }.push((d, c));
            }
            other => {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown keyword '{other}'"),
                })
            }
        }
    }
    let level = |terms: Vec<(u32, f64)>, name: &str| {
        DegreeDistribution::new(terms, 0.5).map_err(|e| Error::Config(format!("{name}: {e}")))
    };
    Ok(ComponentFile {
        design_snr_db: snr,
        rate_efficiency: eta,
        r_lt,
        modulation_order: modulation,
        precode: PrecodeProfile::new(dv, dc)?,
        input_profile: profile,
        omega1: level(om1, "level-1 LT distribution")?,
        omega2: level(om2, "level-2 LT distribution")?,
    })
}

/// Either kind of file, detected by its keywords.
#[derive(Debug, Clone)]
pub enum EnsembleSource {
    Full(MetRaptorEnsemble),
    Components(ComponentFile),
}

impl EnsembleSource {
    pub fn parse(text: &str) -> Result<Self> {
        let is_components = content_lines(text).any(|(_, t)| t[0] == "omega1" || t[0] == "omega2");
        if is_components {
            Ok(Self::Components(parse_components(text)?))
        } else {
            Ok(Self::Full(parse_ensemble(text)?))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Resolves to an ensemble, optionally overriding the LT rate of a
    /// component file.
    pub fn ensemble(&self, r_lt: Option<f64>) -> Result<MetRaptorEnsemble> {
        match self {
            Self::Full(e) => match r_lt {
                None => Ok(e.clone()),
                Some(_) => Err(Error::Config(
                    "r_lt can only be overridden for component files".into(),
                )),
            },
            Self::Components(c) => match r_lt {
                Some(r) => c.build(r),
                None => c.to_ensemble(),
            },
        }
    }

    pub fn components(&self) -> Option<&ComponentFile> {
        match self {
            Self::Components(c) => Some(c),
            Self::Full(_) => None,
        }
    }
}
