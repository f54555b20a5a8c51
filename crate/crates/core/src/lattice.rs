//! Lattice state and run configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SmgdError};

/// A point of the scaled lattice `alpha * Z^n`, stored as integer step
/// counts so no rounding accumulates across iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeVector {
    coords: Vec<i64>,
    alpha: f64,
}

impl LatticeVector {
    pub fn new(coords: Vec<i64>, alpha: f64) -> Result<Self> {
        if coords.is_empty() {
            return Err(SmgdError::InvalidArgument(
                "lattice dimension must be at least 1".into(),
            ));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(SmgdError::InvalidArgument(format!(
                "lattice resolution alpha must be positive and finite, got {alpha}"
            )));
        }
        Ok(Self { coords, alpha })
    }

    /// Origin of an `n`-dimensional lattice with resolution `alpha`.
    pub fn zero(n: usize, alpha: f64) -> Result<Self> {
        Self::new(vec![0; n], alpha)
    }

    /// Nearest lattice point to a real vector (ties round half away from zero).
    pub fn round_from_real(x: &[f64], alpha: f64) -> Result<Self> {
        let coords = x.iter().map(|v| (v / alpha).round() as i64).collect();
        Self::new(coords, alpha)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }

    /// Real-valued embedding `coords[i] * alpha`.
    pub fn to_real(&self) -> Vec<f64> {
        self.coords.iter().map(|&c| c as f64 * self.alpha).collect()
    }

    /// Apply a per-coordinate integer update, rejecting i64 overflow.
    pub(crate) fn offset(&self, update: &[i8]) -> Result<Self> {
        debug_assert_eq!(update.len(), self.coords.len());
        let mut coords = Vec::with_capacity(self.coords.len());
        for (i, (&c, &u)) in self.coords.iter().zip(update).enumerate() {
            let next = c
                .checked_add(u as i64)
                .ok_or(SmgdError::Overflow { index: i })?;
            coords.push(next);
        }
        Ok(Self {
            coords,
            alpha: self.alpha,
        })
    }
}

/// Hyperparameters of one SMGD run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmgdConfig {
    /// Lattice resolution.
    pub alpha: f64,
    /// Normalizer converting gradient magnitudes to flip probabilities.
    pub eta: f64,
    /// Number of iterations T.
    pub iterations: u64,
    pub seed: u64,
    /// Record every k-th step in the trace.
    #[serde(default = "default_stride")]
    pub trace_stride: u64,
    /// Stop early if the best cost has not improved for this many steps.
    /// Off unless configured; the algorithm itself runs a fixed T.
    #[serde(default)]
    pub stagnation_window: Option<u64>,
}

fn default_stride() -> u64 {
    1
}

impl SmgdConfig {
    pub fn new(alpha: f64, eta: f64, iterations: u64, seed: u64) -> Self {
        Self {
            alpha,
            eta,
            iterations,
            seed,
            trace_stride: 1,
            stagnation_window: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(SmgdError::InvalidArgument(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(SmgdError::InvalidArgument(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if self.trace_stride == 0 {
            return Err(SmgdError::InvalidArgument(
                "trace_stride must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_resolution() {
        assert!(LatticeVector::new(vec![0], 0.0).is_err());
        assert!(LatticeVector::new(vec![0], -1.0).is_err());
        assert!(LatticeVector::new(vec![0], f64::NAN).is_err());
        assert!(LatticeVector::new(vec![], 1.0).is_err());
    }

    #[test]
    fn real_embedding_is_exact() {
        let x = LatticeVector::new(vec![3, -1, 0], 0.25).unwrap();
        assert_eq!(x.to_real(), vec![0.75, -0.25, 0.0]);
    }

    #[test]
    fn offset_overflow_is_an_error() {
        let x = LatticeVector::new(vec![i64::MAX], 1.0).unwrap();
        assert!(matches!(
            x.offset(&[1]),
            Err(SmgdError::Overflow { index: 0 })
        ));
    }

    #[test]
    fn round_from_real() {
        let x = LatticeVector::round_from_real(&[0.4, -0.2], 0.1).unwrap();
        assert_eq!(x.coords(), &[4, -2]);
    }
}
