//! Indirect measurement models.
//!
//! A model couples an object (observable `A`) to a probe prepared in `phi`
//! and an ancilla prepared in `xi` through one unitary step `U`, after which
//! the probe observable `M` is read out. In the Heisenberg picture
//!
//! ```text
//! A(0)  = A ⊗ I ⊗ I          M(0)  = I ⊗ M ⊗ I
//! A(dt) = U^dag A(0) U       M(dt) = U^dag M(0) U
//! ```
//!
//! and the error and disturbance operators are `E = M(dt) - A(0)` and
//! `D = A(dt) - A(0)`. Their root-mean-square values in `psi ⊗ phi ⊗ xi` are
//! the measurement error and the disturbance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{check_dims, expectation, Operator, C64};
use crate::sampling::{self, random_state};
use crate::space::HilbertSpec;
use crate::spectral::{eig_hermitian, CLUSTER_TOL};
use crate::state::StateVector;

/// Unitarity tolerance for the interaction of a model.
pub const MODEL_UNITARY_TOL: f64 = 1e-10;

/// Default tolerance for the "for every input state" predicates.
pub const DEFAULT_CERTIFY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observable {
    /// `A ⊗ I ⊗ I`
    A0,
    /// `I ⊗ M ⊗ I`
    M0,
    /// `U^dag (A ⊗ I ⊗ I) U`
    ADt,
    /// `U^dag (I ⊗ M ⊗ I) U`
    MDt,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct IndirectMeasurementModel {
    spec: HilbertSpec,
    phi: StateVector,
    xi: StateVector,
    u: Operator,
    m: Operator,
    a: Operator,
    a0: Operator,
    m0: Operator,
    a_dt: Operator,
    m_dt: Operator,
}

impl IndirectMeasurementModel {
    /// Validates dimensions, unitarity of `u` and Hermiticity of `m` and `a`.
    /// `xi = None` is accepted only for a trivial (dimension-1) ancilla.
    pub fn new(
        spec: HilbertSpec,
        phi: StateVector,
        xi: Option<StateVector>,
        u: Operator,
        m: Operator,
        a: Operator,
    ) -> Result<Self> {
        spec.require_roles()?;
        check_dims(spec.probe_dim(), phi.dim())?;
        let xi = match xi {
            Some(xi) => xi,
            None if spec.ancilla_dim() == 1 => StateVector::basis(1, 0),
            None => {
                return Err(Error::arg(
                    "ancilla state required for a non-trivial ancilla",
                ))
            }
        };
        check_dims(spec.ancilla_dim(), xi.dim())?;
        check_dims(spec.dim(), u.dim())?;
        check_dims(spec.probe_dim(), m.dim())?;
        check_dims(spec.object_dim(), a.dim())?;

        let u_dev = u.unitary_deviation();
        if u_dev > MODEL_UNITARY_TOL {
            return Err(Error::NotUnitary { deviation: u_dev });
        }
        let u = Operator::from_parts(u.into_matrix(), false, true);
        let m = Operator::hermitian(m.into_matrix())?;
        let a = Operator::hermitian(a.into_matrix())?;

        let a0 = spec.embed_object(&a)?;
        let m0 = spec.embed_probe(&m)?;
        let a_dt = a0.conjugate_by(&u)?;
        let m_dt = m0.conjugate_by(&u)?;
        Ok(Self {
            spec,
            phi,
            xi,
            u,
            m,
            a,
            a0,
            m0,
            a_dt,
            m_dt,
        })
    }

    pub fn spec(&self) -> &HilbertSpec {
        &self.spec
    }

    pub fn phi(&self) -> &StateVector {
        &self.phi
    }

    pub fn xi(&self) -> &StateVector {
        &self.xi
    }

    pub fn unitary(&self) -> &Operator {
        &self.u
    }

    pub fn probe_observable(&self) -> &Operator {
        &self.m
    }

    pub fn measured_observable(&self) -> &Operator {
        &self.a
    }

    /// `psi ⊗ phi ⊗ xi`.
    pub fn initial_state(&self, psi: &StateVector) -> Result<StateVector> {
        check_dims(self.spec.object_dim(), psi.dim())?;
        Ok(StateVector::tensor_all(&[psi, &self.phi, &self.xi]))
    }

    pub fn heisenberg(&self, which: Observable) -> &Operator {
        match which {
            Observable::A0 => &self.a0,
            Observable::M0 => &self.m0,
            Observable::ADt => &self.a_dt,
            Observable::MDt => &self.m_dt,
        }
    }

    /// `E(A) = M(dt) - A(0)`.
    pub fn error_operator(&self) -> Operator {
        &self.m_dt - &self.a0
    }

    /// `D(A) = A(dt) - A(0)`.
    pub fn disturbance_operator(&self) -> Operator {
        &self.a_dt - &self.a0
    }

    /// Root-mean-square error `<E(A)^2>^{1/2}` in `psi ⊗ phi ⊗ xi`.
    pub fn rms_error(&self, psi: &StateVector) -> Result<f64> {
        self.rms(&self.error_operator(), psi)
    }

    /// Root-mean-square disturbance `<D(A)^2>^{1/2}` in `psi ⊗ phi ⊗ xi`.
    pub fn rms_disturbance(&self, psi: &StateVector) -> Result<f64> {
        self.rms(&self.disturbance_operator(), psi)
    }

    // For Hermitian X, <X^2> = ||X Psi||^2.
    fn rms(&self, x: &Operator, psi: &StateVector) -> Result<f64> {
        let state = self.initial_state(psi)?;
        Ok((x.matrix() * state.amplitudes()).norm())
    }

    /// Born-rule distribution of `which` on `psi ⊗ phi ⊗ xi`. Outcomes are
    /// the distinct eigenvalues of the local observable (zero-probability
    /// outcomes included).
    pub fn outcome_distribution(
        &self,
        psi: &StateVector,
        which: Observable,
    ) -> Result<OutcomeDistribution> {
        let state = self.initial_state(psi)?;
        let (local, on_probe, evolved) = match which {
            Observable::A0 => (&self.a, false, false),
            Observable::ADt => (&self.a, false, true),
            Observable::M0 => (&self.m, true, false),
            Observable::MDt => (&self.m, true, true),
        };
        let spectrum = eig_hermitian(local)?;
        let psi_full = if evolved {
            self.u.matrix() * state.amplitudes()
        } else {
            state.amplitudes().clone()
        };
        let mut outcomes = Vec::with_capacity(spectrum.spaces.len());
        let mut probabilities = Vec::with_capacity(spectrum.spaces.len());
        for space in &spectrum.spaces {
            let p = space.projector();
            let embedded = if on_probe {
                self.spec.embed_probe(&p)?
            } else {
                self.spec.embed_object(&p)?
            };
            let prob = (embedded.matrix() * &psi_full).norm_squared();
            outcomes.push(space.value);
            probabilities.push(prob);
        }
        Ok(OutcomeDistribution {
            outcomes,
            probabilities,
        })
    }

    /// Decides "error zero for every input state" on the certification set
    /// (see [`certification_states`]).
    pub fn is_precise(&self, cfg: &CertifyConfig) -> Result<Certificate> {
        let e = self.error_operator();
        self.certify(cfg, |psi| self.rms(&e, psi))
    }

    /// Decides "disturbance zero for every input state" on the certification
    /// set.
    pub fn is_nondisturbing(&self, cfg: &CertifyConfig) -> Result<Certificate> {
        let d = self.disturbance_operator();
        self.certify(cfg, |psi| self.rms(&d, psi))
    }

    fn certify(
        &self,
        cfg: &CertifyConfig,
        value: impl Fn(&StateVector) -> Result<f64>,
    ) -> Result<Certificate> {
        if cfg.samples == 0 {
            return Err(Error::arg("certification needs at least one random sample"));
        }
        let states = certification_states(self.spec.object_dim(), cfg.samples, cfg.seed);
        let mut worst: Option<(usize, f64)> = None;
        for (k, psi) in states.iter().enumerate() {
            let v = value(psi)?;
            if worst.is_none_or(|(_, w)| v > w) {
                worst = Some((k, v));
            }
        }
        let (k, max_value) = worst.expect("certification set is non-empty");
        let holds = max_value <= cfg.tol;
        Ok(Certificate {
            holds,
            max_value,
            checked: states.len(),
            witness: (!holds).then(|| states[k].clone()),
        })
    }
}

/// Computational basis, the pairwise superpositions `(|i> + |j>)/sqrt2` and
/// `(|i> + i|j>)/sqrt2`, then `samples` seeded random states.
pub fn certification_states(dim: usize, samples: usize, seed: u64) -> Vec<StateVector> {
    let mut states: Vec<StateVector> = (0..dim).map(|k| StateVector::basis(dim, k)).collect();
    for i in 0..dim {
        for j in i + 1..dim {
            for phase in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
                let mut amps = nalgebra::DVector::zeros(dim);
                amps[i] = C64::new(1.0, 0.0);
                amps[j] = phase;
                states.push(StateVector::normalize(amps).expect("nonzero"));
            }
        }
    }
    let mut rng = sampling::rng(seed);
    states.extend((0..samples).map(|_| random_state(&mut rng, dim)));
    states
}

#[derive(Clone, Debug)]
pub struct CertifyConfig {
    pub samples: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            samples: 16,
            tol: DEFAULT_CERTIFY_TOL,
            seed: 0x5eed,
        }
    }
}

/// Outcome of a certification: the largest value seen, and on failure the
/// state that produced it.
#[derive(Clone, Debug)]
pub struct Certificate {
    pub holds: bool,
    pub max_value: f64,
    pub checked: usize,
    pub witness: Option<StateVector>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    pub outcomes: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl OutcomeDistribution {
    pub fn probability_of(&self, outcome: f64) -> f64 {
        self.outcomes
            .iter()
            .zip(&self.probabilities)
            .filter(|(o, _)| (*o - outcome).abs() <= CLUSTER_TOL)
            .map(|(_, p)| p)
            .sum()
    }

    /// Largest probability difference over the union of both outcome sets.
    pub fn max_difference(&self, other: &OutcomeDistribution) -> f64 {
        self.outcomes
            .iter()
            .chain(&other.outcomes)
            .map(|&o| (self.probability_of(o) - other.probability_of(o)).abs())
            .fold(0.0, f64::max)
    }
}

/// Mean of `x` in `psi ⊗ phi ⊗ xi`.
pub fn initial_expectation(
    model: &IndirectMeasurementModel,
    x: &Operator,
    psi: &StateVector,
) -> Result<C64> {
    expectation(x, &model.initial_state(psi)?)
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    spec: HilbertSpec,
    phi: StateVector,
    xi: StateVector,
    u: Operator,
    m: Operator,
    a: Operator,
}

impl From<IndirectMeasurementModel> for ModelRepr {
    fn from(model: IndirectMeasurementModel) -> Self {
        ModelRepr {
            spec: model.spec,
            phi: model.phi,
            xi: model.xi,
            u: model.u,
            m: model.m,
            a: model.a,
        }
    }
}

impl TryFrom<ModelRepr> for IndirectMeasurementModel {
    type Error = Error;

    fn try_from(r: ModelRepr) -> Result<Self> {
        IndirectMeasurementModel::new(r.spec, r.phi, Some(r.xi), r.u, r.m, r.a)
    }
}
