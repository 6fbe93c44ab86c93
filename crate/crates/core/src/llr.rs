//! Quantized LLR densities and the two density-evolution convolutions.
//!
//! A density lives on a uniform grid symmetric about zero, `z_k = (k - H)·Δ`
//! for `k = 0..=2H`, plus an optional atom at `+∞` that represents a message
//! carrying perfect knowledge. Mass beyond the finite grid ends saturates
//! into the end bins, so convolutions never lose probability.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform LLR grid `[-H·Δ, +H·Δ]` with a bin at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlrGrid {
    half_bins: usize,
    step: f64,
}

impl LlrGrid {
    /// Grid covering `[-max_llr, max_llr]` with spacing `step`. `max_llr` must
    /// be an integer multiple of `step`.
    pub fn new(max_llr: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite() && max_llr > 0.0 && max_llr.is_finite()) {
            return Err(Error::Grid(format!(
                "grid needs positive finite range and step, got max {max_llr}, step {step}"
            )));
        }
        let half = (max_llr / step).round();
        if (half * step - max_llr).abs() > 1e-9 * max_llr.max(1.0) {
            return Err(Error::Grid(format!(
                "range {max_llr} is not a multiple of step {step}"
            )));
        }
        if !(1.0..=30000.0).contains(&half) {
            return Err(Error::Grid(format!(
                "unsupported number of bins ({half} per side)"
            )));
        }
        Ok(Self {
            half_bins: half as usize,
            step,
        })
    }

    pub fn half_bins(&self) -> usize {
        self.half_bins
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        2 * self.half_bins + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min(&self) -> f64 {
        -(self.half_bins as f64) * self.step
    }

    pub fn max(&self) -> f64 {
        self.half_bins as f64 * self.step
    }

    /// Index of the zero bin.
    pub fn zero_index(&self) -> usize {
        self.half_bins
    }

    pub fn value(&self, k: usize) -> f64 {
        (k as f64 - self.half_bins as f64) * self.step
    }

    /// Nearest bin, saturating at the ends.
    pub fn index_of(&self, z: f64) -> usize {
        if z.is_nan() {
            return self.half_bins;
        }
        let k = (z / self.step).round() + self.half_bins as f64;
        k.clamp(0.0, (2 * self.half_bins) as f64) as usize
    }

    fn key(&self) -> (usize, u64) {
        (self.half_bins, self.step.to_bits())
    }
}

impl Default for LlrGrid {
    /// `[-30, 30]` with step 1/16.
    fn default() -> Self {
        Self {
            half_bins: 480,
            step: 1.0 / 16.0,
        }
    }
}

/// Probability mass function of an LLR message on an [`LlrGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct LlrDensity {
    grid: LlrGrid,
    mass: Vec<f64>,
    inf: f64,
    symmetric: bool,
}

/// Plain-text record used to export and import densities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityRecord {
    pub grid_min: f64,
    pub grid_step: f64,
    pub masses: Vec<f64>,
    pub inf_atom: f64,
    #[serde(default)]
    pub symmetric: bool,
}

impl LlrDensity {
    /// Builds a density from finite-bin masses and the `+∞` atom. Masses must
    /// be non-negative and sum to one within 1e-9.
    pub fn from_masses(grid: LlrGrid, mass: Vec<f64>, inf: f64) -> Result<Self> {
        if mass.len() != grid.len() {
            return Err(Error::Grid(format!(
                "expected {} masses, got {}",
                grid.len(),
                mass.len()
            )));
        }
        if mass.iter().any(|&m| !(m >= 0.0 && m.is_finite())) || !(0.0..=1.0).contains(&inf) {
            return Err(Error::Grid("masses must be finite and non-negative".into()));
        }
        let total: f64 = mass.iter().sum::<f64>() + inf;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Grid(format!("density mass sums to {total}")));
        }
        Ok(Self {
            grid,
            mass,
            inf,
            symmetric: false,
        })
    }

    pub(crate) fn from_raw(grid: LlrGrid, mass: Vec<f64>, inf: f64, symmetric: bool) -> Self {
        debug_assert_eq!(mass.len(), grid.len());
        Self {
            grid,
            mass,
            inf,
            symmetric,
        }
    }

    /// Unit mass at the bin nearest to `z` (`+∞` goes to the atom).
    pub fn delta(grid: LlrGrid, z: f64) -> Self {
        if z == f64::INFINITY {
            return Self::perfect(grid);
        }
        let mut mass = vec![0.0; grid.len()];
        mass[grid.index_of(z)] = 1.0;
        Self {
            grid,
            mass,
            inf: 0.0,
            symmetric: z == 0.0,
        }
    }

    /// The no-information message, a unit mass at LLR zero.
    pub fn erasure(grid: LlrGrid) -> Self {
        Self::delta(grid, 0.0)
    }

    /// The perfect-knowledge message, a unit atom at `+∞`.
    pub fn perfect(grid: LlrGrid) -> Self {
        Self {
            grid,
            mass: vec![0.0; grid.len()],
            inf: 1.0,
            symmetric: true,
        }
    }

    pub fn grid(&self) -> LlrGrid {
        self.grid
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn inf_mass(&self) -> f64 {
        self.inf
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn with_symmetric_flag(mut self, flag: bool) -> Self {
        self.symmetric = flag;
        self
    }

    pub fn finite_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.finite_mass() + self.inf
    }

    /// Rescales so the total mass is exactly one.
    pub fn normalize(&mut self) {
        let t = self.total_mass();
        if t > 0.0 {
            self.mass.iter_mut().for_each(|m| *m /= t);
            self.inf /= t;
        }
    }

    /// Probability of a negative LLR plus half the mass at zero.
    pub fn error_probability(&self) -> f64 {
        let h = self.grid.zero_index();
        self.mass[..h].iter().sum::<f64>() + 0.5 * self.mass[h]
    }

    /// `Σ f(z) e^{-z/2}`; the `+∞` atom contributes nothing.
    pub fn bhattacharyya(&self) -> f64 {
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(k, &m)| m * (-0.5 * self.grid.value(k)).exp())
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.mass
            .iter()
            .enumerate()
            .map(|(k, &m)| m * self.grid.value(k))
            .sum::<f64>()
            / self.finite_mass()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.mass
            .iter()
            .enumerate()
            .map(|(k, &m)| m * (self.grid.value(k) - mu).powi(2))
            .sum::<f64>()
            / self.finite_mass()
    }

    /// Largest deviation of `ln f(-z) - ln f(z) + z` over bin pairs whose
    /// masses both exceed `floor`. Zero for an exactly symmetric density.
    pub fn symmetry_residual(&self, floor: f64) -> f64 {
        let h = self.grid.half_bins;
        (1..h)
            .filter(|&m| self.mass[h + m] > floor && self.mass[h - m] > floor)
            .map(|m| {
                let z = m as f64 * self.grid.step;
                (self.mass[h - m].ln() - self.mass[h + m].ln() + z).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Convex combination `Σ w_i d_i`; weights need not be normalized.
    pub fn mixture(parts: &[(f64, &LlrDensity)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Config("empty mixture".into()))?
            .1;
        let grid = first.grid;
        let mut mass = vec![0.0; grid.len()];
        let mut inf = 0.0;
        let mut wsum = 0.0;
        let mut symmetric = true;
        for &(w, d) in parts {
            check_grids(&grid, &d.grid)?;
            wsum += w;
            inf += w * d.inf;
            symmetric &= d.symmetric;
            for (o, &m) in mass.iter_mut().zip(&d.mass) {
                *o += w * m;
            }
        }
        if wsum <= 0.0 {
            return Err(Error::Config("mixture weights sum to zero".into()));
        }
        mass.iter_mut().for_each(|m| *m /= wsum);
        Ok(Self::from_raw(grid, mass, inf / wsum, symmetric))
    }

    /// Variable-node convolution: density of the sum of two independent LLRs.
    pub fn var_convolve(&self, other: &Self) -> Result<Self> {
        check_grids(&self.grid, &other.grid)?;
        let grid = self.grid;
        let h = grid.half_bins;
        let len = grid.len();
        let lin = linear_convolution(&self.mass, &other.mass);
        let mut mass = vec![0.0; len];
        for (idx, &v) in lin.iter().enumerate() {
            if v <= 0.0 {
                continue;
            }
            // idx = k1 + k2, the LLR index offset is 2H.
            let k = (idx as isize - h as isize).clamp(0, (len - 1) as isize) as usize;
            mass[k] += v;
        }
        // FFT round-off, clipped at zero, biases the total upwards.
        let want = self.finite_mass() * other.finite_mass();
        let got: f64 = mass.iter().sum();
        if got > 0.0 {
            mass.iter_mut().for_each(|m| *m *= want / got);
        }
        let inf = self.inf + other.inf - self.inf * other.inf;
        Ok(Self::from_raw(
            grid,
            mass,
            inf,
            self.symmetric && other.symmetric,
        ))
    }

    /// Check-node convolution: density of `2 atanh(tanh(a/2) tanh(b/2))`,
    /// combining every pair of bins and rounding to the nearest bin.
    pub fn chk_convolve(&self, other: &Self) -> Result<Self> {
        check_grids(&self.grid, &other.grid)?;
        let table = CheckTable::for_grid(self.grid);
        Ok(table.convolve(self, other))
    }

    pub fn to_record(&self) -> DensityRecord {
        DensityRecord {
            grid_min: self.grid.min(),
            grid_step: self.grid.step,
            masses: self.mass.clone(),
            inf_atom: self.inf,
            symmetric: self.symmetric,
        }
    }

    pub fn from_record(rec: &DensityRecord) -> Result<Self> {
        let grid = LlrGrid::new(-rec.grid_min, rec.grid_step)?;
        let d = Self::from_masses(grid, rec.masses.clone(), rec.inf_atom)?;
        Ok(d.with_symmetric_flag(rec.symmetric))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("density record serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_record(&serde_json::from_str(text)?)
    }
}

fn check_grids(a: &LlrGrid, b: &LlrGrid) -> Result<()> {
    if a.key() != b.key() {
        return Err(Error::Grid(format!(
            "grid mismatch: {} bins / step {} vs {} bins / step {}",
            a.len(),
            a.step,
            b.len(),
            b.step
        )));
    }
    Ok(())
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn fft_forward(buf: &mut [Complex64]) {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(buf));
}

pub(crate) fn fft_inverse(buf: &mut [Complex64]) {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()).process(buf));
    let n = buf.len() as f64;
    buf.iter_mut().for_each(|c| *c /= n);
}

/// Linear convolution of two non-negative sequences. Sparse inputs go through
/// the direct sum so deltas combine exactly; everything else uses an FFT.
fn linear_convolution(a: &[f64], b: &[f64]) -> Vec<f64> {
    let out_len = a.len() + b.len() - 1;
    let nz = |v: &[f64]| v.iter().filter(|&&x| x != 0.0).count();
    let (na, nb) = (nz(a), nz(b));
    if na.min(nb) <= 16 || na.saturating_mul(nb) <= 1 << 16 {
        let mut out = vec![0.0; out_len];
        for (i, &x) in a.iter().enumerate().filter(|(_, &x)| x != 0.0) {
            for (j, &y) in b.iter().enumerate().filter(|(_, &y)| y != 0.0) {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let n = out_len.next_power_of_two();
    let mut fa: Vec<Complex64> = a
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n)
        .collect();
    let mut fb: Vec<Complex64> = b
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n)
        .collect();
    fft_forward(&mut fa);
    fft_forward(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    fft_inverse(&mut fa);
    fa.iter().take(out_len).map(|c| c.re.max(0.0)).collect()
}

/// `2 atanh(tanh(a/2) tanh(b/2))` for `a, b ≥ 0`, accurate for large inputs.
pub fn boxplus_magnitude(a: f64, b: f64) -> f64 {
    let ua = 2.0 / (a.exp() + 1.0);
    let ub = 2.0 / (b.exp() + 1.0);
    let s = ua + ub - ua * ub;
    if s <= 0.0 {
        return a.min(b);
    }
    ((2.0 - s) / s).ln().min(a.min(b))
}

/// Signed check-node rule on two LLRs.
pub fn boxplus(a: f64, b: f64) -> f64 {
    let sign = if (a < 0.0) != (b < 0.0) { -1.0 } else { 1.0 };
    sign * boxplus_magnitude(a.abs(), b.abs())
}

/// Precomputed output-bin table for the check-node convolution on one grid.
///
/// `out[m1][m2]` is the output magnitude bin for input magnitude bins `m1`,
/// `m2`. Beyond `knee[m1]` the output is `m1` for every larger `m2`, which
/// lets those pairs be collapsed into suffix sums.
pub(crate) struct CheckTable {
    half: usize,
    out: Vec<u16>,
    knee: Vec<usize>,
    lo: Vec<usize>,
}

static TABLES: OnceLock<Mutex<HashMap<(usize, u64), Arc<CheckTable>>>> = OnceLock::new();

impl CheckTable {
    pub(crate) fn for_grid(grid: LlrGrid) -> Arc<CheckTable> {
        let cache = TABLES.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().expect("check table cache poisoned");
        map.entry(grid.key())
            .or_insert_with(|| Arc::new(CheckTable::build(grid)))
            .clone()
    }

    fn build(grid: LlrGrid) -> Self {
        let h = grid.half_bins;
        let w = h + 1;
        let step = grid.step;
        let mut out = vec![0u16; w * w];
        for m1 in 0..=h {
            for m2 in m1..=h {
                let z = boxplus_magnitude(m1 as f64 * step, m2 as f64 * step);
                let t = ((z / step).round() as usize).min(m1.min(m2));
                out[m1 * w + m2] = t as u16;
                out[m2 * w + m1] = t as u16;
            }
        }
        let mut knee = vec![0usize; w];
        for m1 in 1..=h {
            let mut k = h + 1;
            while k > 1 && out[m1 * w + k - 1] as usize == m1 {
                k -= 1;
            }
            knee[m1] = k.max(m1 + 1);
        }
        for m in 2..=h {
            knee[m] = knee[m].max(knee[m - 1]);
        }
        // lo[m1]: first m2 whose knee lies above m1; pairs below it are
        // covered by the suffix of row m2.
        let mut lo = vec![1usize; w];
        for m1 in 1..=h {
            let mut m2 = lo[m1 - 1].max(1);
            while m2 <= h && knee[m2] <= m1 {
                m2 += 1;
            }
            lo[m1] = m2;
        }
        Self {
            half: h,
            out,
            knee,
            lo,
        }
    }

    pub(crate) fn convolve(&self, a: &LlrDensity, b: &LlrDensity) -> LlrDensity {
        let h = self.half;
        let w = h + 1;
        let (ap, an, az) = split_sign(&a.mass, h);
        let (bp, bn, bz) = split_sign(&b.mass, h);
        let a_fin: f64 = a.mass.iter().sum();
        let b_fin: f64 = b.mass.iter().sum();

        // Suffix sums over magnitudes m..=h.
        let suffix = |v: &[f64]| {
            let mut s = vec![0.0; w + 1];
            for m in (1..=h).rev() {
                s[m] = s[m + 1] + v[m];
            }
            s
        };
        let (sap, san, sbp, sbn) = (suffix(&ap), suffix(&an), suffix(&bp), suffix(&bn));

        let mut pos = vec![0.0; w];
        let mut neg = vec![0.0; w];
        let mut zero = az * b_fin + bz * a_fin - az * bz;

        for m1 in 1..=h {
            let k = self.knee[m1];
            let (xp, xn, yp, yn) = (ap[m1], an[m1], bp[m1], bn[m1]);
            if k <= h {
                pos[m1] += xp * sbp[k] + xn * sbn[k] + yp * sap[k] + yn * san[k];
                neg[m1] += xp * sbn[k] + xn * sbp[k] + yp * san[k] + yn * sap[k];
            }
            if xp == 0.0 && xn == 0.0 {
                continue;
            }
            let row = &self.out[m1 * w..(m1 + 1) * w];
            let end = k.min(w);
            for m2 in self.lo[m1]..end {
                let (zp, zn) = (bp[m2], bn[m2]);
                if zp == 0.0 && zn == 0.0 {
                    continue;
                }
                let t = row[m2] as usize;
                pos[t] += xp * zp + xn * zn;
                neg[t] += xp * zn + xn * zp;
            }
        }
        zero += pos[0] + neg[0];

        let mut mass = vec![0.0; 2 * h + 1];
        mass[h] = zero;
        for m in 1..=h {
            mass[h + m] = pos[m];
            mass[h - m] = neg[m];
        }
        // +∞ passes the other message through.
        if a.inf > 0.0 {
            for (o, &x) in mass.iter_mut().zip(&b.mass) {
                *o += a.inf * x;
            }
        }
        if b.inf > 0.0 {
            for (o, &x) in mass.iter_mut().zip(&a.mass) {
                *o += b.inf * x;
            }
        }
        LlrDensity::from_raw(a.grid, mass, a.inf * b.inf, a.symmetric && b.symmetric)
    }
}

fn split_sign(mass: &[f64], h: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let mut p = vec![0.0; h + 1];
    let mut n = vec![0.0; h + 1];
    for m in 1..=h {
        p[m] = mass[h + m];
        n[m] = mass[h - m];
    }
    (p, n, mass[h])
}
