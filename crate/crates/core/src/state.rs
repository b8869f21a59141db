use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::C64;

/// Normalization tolerance for state vectors.
pub const NORM_TOL: f64 = 1e-12;

/// A normalized pure state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateRepr", into = "StateRepr")]
pub struct StateVector {
    amps: DVector<C64>,
}

impl StateVector {
    /// Wraps amplitudes that are already normalized within [`NORM_TOL`].
    pub fn new(amps: DVector<C64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::arg("state dimension must be positive"));
        }
        let norm = amps.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self { amps })
    }

    /// Normalizes arbitrary nonzero amplitudes.
    pub fn normalize(amps: DVector<C64>) -> Result<Self> {
        let norm = amps.norm();
        if amps.is_empty() || !norm.is_finite() || norm == 0.0 {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self {
            amps: amps / C64::new(norm, 0.0),
        })
    }

    pub fn from_amplitudes(amps: &[C64]) -> Result<Self> {
        Self::normalize(DVector::from_column_slice(amps))
    }

    /// Computational basis state `|k>`.
    pub fn basis(dim: usize, k: usize) -> Self {
        assert!(k < dim, "basis index {k} out of range for dim {dim}");
        let mut amps = DVector::zeros(dim);
        amps[k] = C64::new(1.0, 0.0);
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn into_amplitudes(self) -> DVector<C64> {
        self.amps
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.dotc(&other.amps)
    }

    /// `self ⊗ other`.
    pub fn tensor(&self, other: &StateVector) -> StateVector {
        StateVector {
            amps: self.amps.kronecker(&other.amps),
        }
    }

    pub fn tensor_all(states: &[&StateVector]) -> StateVector {
        let (first, rest) = states
            .split_first()
            .expect("tensor_all needs at least one factor");
        rest.iter().fold((*first).clone(), |acc, s| acc.tensor(s))
    }
}

#[derive(Serialize, Deserialize)]
struct StateRepr {
    dim: usize,
    amplitudes: Vec<[f64; 2]>,
}

impl From<StateVector> for StateRepr {
    fn from(s: StateVector) -> Self {
        StateRepr {
            dim: s.dim(),
            amplitudes: s.amps.iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

impl TryFrom<StateRepr> for StateVector {
    type Error = Error;

    fn try_from(repr: StateRepr) -> Result<Self> {
        if repr.amplitudes.len() != repr.dim {
            return Err(Error::DimensionMismatch {
                expected: repr.dim,
                found: repr.amplitudes.len(),
            });
        }
        StateVector::new(DVector::from_iterator(
            repr.dim,
            repr.amplitudes.iter().map(|&[re, im]| C64::new(re, im)),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unnormalized() {
        let amps = DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)]);
        assert!(matches!(
            StateVector::new(amps.clone()),
            Err(Error::NotNormalized { .. })
        ));
        let s = StateVector::normalize(amps).unwrap();
        assert!((s.amplitudes().norm() - 1.0).abs() < 1e-15);
        assert!(StateVector::normalize(DVector::zeros(2)).is_err());
    }

    #[test]
    fn tensor_of_basis_states() {
        let s = StateVector::basis(2, 1).tensor(&StateVector::basis(3, 2));
        assert_eq!(s, StateVector::basis(6, 5));
    }

    #[test]
    fn json_requires_normalization() {
        let good = r#"{"dim":2,"amplitudes":[[1.0,0.0],[0.0,0.0]]}"#;
        let s: StateVector = serde_json::from_str(good).unwrap();
        assert_eq!(s, StateVector::basis(2, 0));
        let bad = r#"{"dim":2,"amplitudes":[[1.0,0.0],[1.0,0.0]]}"#;
        assert!(serde_json::from_str::<StateVector>(bad).is_err());
    }
}
