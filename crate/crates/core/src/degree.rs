use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Tolerance on the declared coefficient sum (published tables are rounded).
pub const NORMALIZATION_TOLERANCE: f64 = 5e-4;

/// Sparse polynomial `Σ c_d x^d` with non-negative coefficients and a
/// declared coefficient sum.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeDistribution {
    terms: BTreeMap<u32, f64>,
    normalization: f64,
}

impl DegreeDistribution {
    /// Checks non-negativity, positive degrees, and that coefficients sum to
    /// `normalization` within 5e-4. Zero coefficients are dropped.
    pub fn new(terms: impl IntoIterator<Item = (u32, f64)>, normalization: f64) -> Result<Self> {
        let d = Self::unchecked(terms, normalization)?;
        let s = d.sum();
        if (s - normalization).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Config(format!(
                "degree distribution sums to {s}, expected {normalization}"
            )));
        }
        Ok(d)
    }

    /// Like [`new`](Self::new) but without the sum check.
    pub fn unchecked(
        terms: impl IntoIterator<Item = (u32, f64)>,
        normalization: f64,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (d, c) in terms {
            if d == 0 {
                return Err(Error::Config("degree 0 is not allowed".into()));
            }
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("coefficient of x^{d} is {c}")));
            }
            if c > 0.0 {
                *map.entry(d).or_insert(0.0) += c;
            }
        }
        Ok(Self {
            terms: map,
            normalization,
        })
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn terms(&self) -> &BTreeMap<u32, f64> {
        &self.terms
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.terms.iter().map(|(&d, &c)| (d, c))
    }

    pub fn coefficient(&self, degree: u32) -> f64 {
        self.terms.get(&degree).copied().unwrap_or(0.0)
    }

    pub fn sum(&self) -> f64 {
        self.terms.values().sum()
    }

    /// `Σ d·c_d`, the derivative at one.
    pub fn derivative_at_one(&self) -> f64 {
        self.iter().map(|(d, c)| d as f64 * c).sum()
    }

    /// `Σ (d-1)·c_d / Σ c_d` for an edge-perspective distribution.
    pub fn edge_derivative_at_one(&self) -> f64 {
        self.iter().map(|(d, c)| (d as f64 - 1.0) * c).sum::<f64>() / self.sum()
    }

    pub fn max_degree(&self) -> u32 {
        self.terms.keys().next_back().copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Copy rescaled so the coefficients sum exactly to the normalization.
    pub fn rescaled(&self) -> Self {
        let s = self.sum();
        if s == self.normalization || s == 0.0 {
            return self.clone();
        }
        let f = self.normalization / s;
        Self {
            terms: self.terms.iter().map(|(&d, &c)| (d, c * f)).collect(),
            normalization: self.normalization,
        }
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        self.iter().map(|(d, c)| c * x.powi(d as i32)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checks_sum_and_signs() {
        assert!(DegreeDistribution::new([(1, 0.2), (3, 0.3)], 0.5).is_ok());
        assert!(DegreeDistribution::new([(1, 0.2), (3, 0.31)], 0.5).is_err());
        assert!(DegreeDistribution::new([(0, 0.5)], 0.5).is_err());
        assert!(DegreeDistribution::new([(2, -0.1), (3, 0.6)], 0.5).is_err());
    }

    #[test]
    fn derivatives() {
        let rho = DegreeDistribution::new([(60, 1.0)], 1.0).unwrap();
        assert_eq!(rho.edge_derivative_at_one(), 59.0);
        let om = DegreeDistribution::new([(2, 0.25), (4, 0.25)], 0.5).unwrap();
        assert_eq!(om.derivative_at_one(), 1.5);
        assert_eq!(om.max_degree(), 4);
        assert!((om.evaluate(1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rescale_hits_target() {
        let d = DegreeDistribution::new([(1, 0.2), (2, 0.3002)], 0.5)
            .unwrap()
            .rescaled();
        assert!((d.sum() - 0.5).abs() < 1e-15);
    }
}
