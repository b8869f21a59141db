//! Operator identities and WAY-type inequalities, evaluated on concrete
//! models and recorded as [`BoundReport`]s.
//!
//! For a model conserving `L1 + L2 + L3` the commutator `[A(0), L1(0)]`
//! splits into commutators of the evolved conserved quantities with the error
//! and disturbance operators. Taking expectations and applying the Robertson
//! relation gives, with `c = <psi|[A, L1]|psi>`, `e` the error, `n` the
//! disturbance and `s_k = sigma[L_k(dt)]`:
//!
//! ```text
//! qway-1       |c| / 2 <= e s1 + n s2 + n s3
//! qway-2       |c| / 2 <= e s1 + n s2 + e s3
//! summed       |c|     <= (e + n) (2 max{s1, s2} + s3)
//! fundamental  |c|^2 / (2 (2 max{||L1||, ||L2||} + s3)^2) <= e^2 + n^2
//! ```

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::conservation::{require_conserving, ConservationLaw};
use crate::error::{Error, Result};
use crate::measurement::IndirectMeasurementModel;
use crate::operator::{commutator, expectation, std_dev, Operator, C64};
use crate::spectral::operator_norm;
use crate::state::StateVector;

/// Uniform slack tolerance for inequalities and residual tolerance for
/// identities.
pub const BOUND_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "identity-1")]
    Identity1,
    #[serde(rename = "identity-2")]
    Identity2,
    #[serde(rename = "qway-1")]
    Qway1,
    #[serde(rename = "qway-2")]
    Qway2,
    #[serde(rename = "summed")]
    Summed,
    #[serde(rename = "fundamental")]
    Fundamental,
    /// `fundamental` with `sigma[L1(dt)]`, `sigma[L2(dt)]` in place of norms.
    #[serde(rename = "fundamental-sigma")]
    FundamentalSigma,
    /// `|<[Z1,X1]>|^2 / 2(2 + sigma(L3'))^2 <= e^2 + n^2` for a CNOT view.
    #[serde(rename = "squared-noise")]
    SquaredNoise,
    /// `e^2 + n^2 <= 8 (1 - F^2)`.
    #[serde(rename = "fidelity-noise")]
    FidelityNoise,
    /// `F^2 <= 1 - 1/(4 (2 + sigma(L3'))^2)`.
    #[serde(rename = "fidelity-ceiling")]
    FidelityCeiling,
    /// `F^2 <= 1 - 1/(4 n^2)` for `n` qubits.
    #[serde(rename = "qubit-ceiling")]
    QubitCeiling,
    /// `F^2 <= 1 - 1/(16 <N>)`.
    #[serde(rename = "coherent-ceiling")]
    CoherentCeiling,
    /// `sigma(L3') <= 2 (<N> + 2)^{1/2}`.
    #[serde(rename = "sigma-l3")]
    SigmaL3,
    /// `<N'> <= <N> + 2`.
    #[serde(rename = "photon-growth")]
    PhotonGrowth,
}

impl Relation {
    pub fn is_identity(self) -> bool {
        matches!(self, Relation::Identity1 | Relation::Identity2)
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::Identity1 => "identity-1",
            Relation::Identity2 => "identity-2",
            Relation::Qway1 => "qway-1",
            Relation::Qway2 => "qway-2",
            Relation::Summed => "summed",
            Relation::Fundamental => "fundamental",
            Relation::FundamentalSigma => "fundamental-sigma",
            Relation::SquaredNoise => "squared-noise",
            Relation::FidelityNoise => "fidelity-noise",
            Relation::FidelityCeiling => "fidelity-ceiling",
            Relation::QubitCeiling => "qubit-ceiling",
            Relation::CoherentCeiling => "coherent-ceiling",
            Relation::SigmaL3 => "sigma-l3",
            Relation::PhotonGrowth => "photon-growth",
        }
    }
}

/// One evaluated relation. For inequalities `slack = rhs - lhs`; for
/// identities `lhs` and `rhs` are the operator norms of the two sides and
/// `slack` is the norm of their difference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub relation: Relation,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub digest: String,
}

impl BoundReport {
    pub fn inequality(relation: Relation, lhs: f64, rhs: f64, digest: &str) -> Self {
        Self {
            relation,
            lhs,
            rhs,
            slack: rhs - lhs,
            digest: digest.to_owned(),
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        if self.relation.is_identity() {
            self.slack <= tol
        } else {
            self.slack >= -tol
        }
    }
}

/// Stable SHA-256 digest over the bit patterns of the inputs.
#[derive(Default)]
pub struct InputsDigest {
    hasher: Sha256,
}

impl InputsDigest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tag(mut self, tag: &str) -> Self {
        self.hasher.update((tag.len() as u64).to_le_bytes());
        self.hasher.update(tag.as_bytes());
        self
    }

    pub fn scalar(mut self, x: f64) -> Self {
        self.hasher.update(x.to_bits().to_le_bytes());
        self
    }

    pub fn complex(self, z: C64) -> Self {
        self.scalar(z.re).scalar(z.im)
    }

    pub fn operator(mut self, op: &Operator) -> Self {
        self.hasher.update((op.dim() as u64).to_le_bytes());
        op.matrix()
            .transpose()
            .iter()
            .fold(self, |d, &z| d.complex(z))
    }

    pub fn state(mut self, s: &StateVector) -> Self {
        self.hasher.update((s.dim() as u64).to_le_bytes());
        s.amplitudes().iter().fold(self, |d, &z| d.complex(z))
    }

    pub fn model(self, model: &IndirectMeasurementModel) -> Self {
        let dims = model.spec().factor_dims().iter().map(|&d| d as f64);
        dims.fold(self.tag("model"), |d, x| d.scalar(x))
            .state(model.phi())
            .state(model.xi())
            .operator(model.unitary())
            .operator(model.probe_observable())
            .operator(model.measured_observable())
    }

    pub fn law(self, law: &ConservationLaw) -> Self {
        self.tag("law")
            .operator(law.l1())
            .operator(law.l2())
            .operator(law.l3())
    }

    /// First 16 hex digits of the SHA-256.
    pub fn finish(self) -> String {
        let out = self.hasher.finalize();
        hex::encode(&out[..8])
    }
}

fn check_compatible(model: &IndirectMeasurementModel, law: &ConservationLaw) -> Result<()> {
    if model.spec().factor_dims() != law.spec().factor_dims() {
        return Err(Error::arg(format!(
            "model space {:?} and law space {:?} differ",
            model.spec().factor_dims(),
            law.spec().factor_dims()
        )));
    }
    Ok(())
}

/// Operator-norm residuals of the two commutator identities
///
/// ```text
/// [A(0), L1(0)] = [L1(dt), E] + [L2(dt), D] + [L3(dt), D]
/// [A(0), L1(0)] = [L1(dt), E] + [L2(dt), D] + [L3(dt), E]
/// ```
///
/// Requires the model's unitary to conserve the law.
pub fn identity_residuals(
    model: &IndirectMeasurementModel,
    law: &ConservationLaw,
) -> Result<(f64, f64)> {
    let [r1, r2] = identity_reports(model, law)?;
    Ok((r1.slack, r2.slack))
}

pub fn identity_reports(
    model: &IndirectMeasurementModel,
    law: &ConservationLaw,
) -> Result<[BoundReport; 2]> {
    check_compatible(model, law)?;
    require_conserving(model.unitary(), law)?;
    let u = model.unitary();
    let evolved = |k: usize| -> Result<Operator> { law.embedded(k)?.conjugate_by(u) };
    let (l1_dt, l2_dt, l3_dt) = (evolved(1)?, evolved(2)?, evolved(3)?);
    let a0 = model.heisenberg(crate::measurement::Observable::A0);
    let e = model.error_operator();
    let d = model.disturbance_operator();

    let lhs = commutator(a0, &law.embedded(1)?)?;
    let common = &commutator(&l1_dt, &e)? + &commutator(&l2_dt, &d)?;
    let rhs1 = &common + &commutator(&l3_dt, &d)?;
    let rhs2 = &common + &commutator(&l3_dt, &e)?;

    let digest = InputsDigest::new().model(model).law(law).finish();
    let report = |relation, rhs: &Operator| BoundReport {
        relation,
        lhs: operator_norm(&lhs),
        rhs: operator_norm(rhs),
        slack: operator_norm(&(&lhs - rhs)),
        digest: digest.clone(),
    };
    Ok([
        report(Relation::Identity1, &rhs1),
        report(Relation::Identity2, &rhs2),
    ])
}

/// Every quantity entering the inequalities, for one input state.
#[derive(Clone, Debug, Serialize)]
pub struct WayQuantities {
    /// `<psi|[A, L1]|psi>` (purely imaginary for Hermitian `A`, `L1`).
    pub commutator_expectation: C64,
    pub error: f64,
    pub disturbance: f64,
    /// `sigma[L_k(dt)]` in `psi ⊗ phi ⊗ xi`, `k = 1, 2, 3`.
    pub sigma_evolved: [f64; 3],
    pub norm_l1: f64,
    pub norm_l2: f64,
    pub digest: String,
}

impl WayQuantities {
    /// Evaluates the quantities without checking conservation.
    pub fn evaluate(
        model: &IndirectMeasurementModel,
        law: &ConservationLaw,
        psi: &StateVector,
    ) -> Result<Self> {
        check_compatible(model, law)?;
        let state = model.initial_state(psi)?;
        let u = model.unitary();
        let mut sigma_evolved = [0.0; 3];
        for (k, s) in sigma_evolved.iter_mut().enumerate() {
            *s = std_dev(&law.embedded(k + 1)?.conjugate_by(u)?, &state)?;
        }
        let c = expectation(&commutator(model.measured_observable(), law.l1())?, psi)?;
        Ok(Self {
            commutator_expectation: c,
            error: model.rms_error(psi)?,
            disturbance: model.rms_disturbance(psi)?,
            sigma_evolved,
            norm_l1: operator_norm(law.l1()),
            norm_l2: operator_norm(law.l2()),
            digest: InputsDigest::new()
                .model(model)
                .law(law)
                .tag("psi")
                .state(psi)
                .finish(),
        })
    }

    pub fn abs_commutator(&self) -> f64 {
        self.commutator_expectation.norm()
    }

    pub fn qway1(&self) -> BoundReport {
        let [s1, s2, s3] = self.sigma_evolved;
        let (e, n) = (self.error, self.disturbance);
        BoundReport::inequality(
            Relation::Qway1,
            0.5 * self.abs_commutator(),
            e * s1 + n * s2 + n * s3,
            &self.digest,
        )
    }

    pub fn qway2(&self) -> BoundReport {
        let [s1, s2, s3] = self.sigma_evolved;
        let (e, n) = (self.error, self.disturbance);
        BoundReport::inequality(
            Relation::Qway2,
            0.5 * self.abs_commutator(),
            e * s1 + n * s2 + e * s3,
            &self.digest,
        )
    }

    pub fn summed(&self) -> BoundReport {
        let [s1, s2, s3] = self.sigma_evolved;
        BoundReport::inequality(
            Relation::Summed,
            self.abs_commutator(),
            (self.error + self.disturbance) * (2.0 * s1.max(s2) + s3),
            &self.digest,
        )
    }

    pub fn noise(&self) -> f64 {
        self.error * self.error + self.disturbance * self.disturbance
    }

    pub fn fundamental(&self) -> BoundReport {
        let scale = 2.0 * self.norm_l1.max(self.norm_l2) + self.sigma_evolved[2];
        BoundReport::inequality(
            Relation::Fundamental,
            ratio_lhs(self.abs_commutator(), scale),
            self.noise(),
            &self.digest,
        )
    }

    pub fn fundamental_sigma(&self) -> BoundReport {
        let [s1, s2, s3] = self.sigma_evolved;
        BoundReport::inequality(
            Relation::FundamentalSigma,
            ratio_lhs(self.abs_commutator(), 2.0 * s1.max(s2) + s3),
            self.noise(),
            &self.digest,
        )
    }
}

// |c|^2 / (2 scale^2), with 0/0 read as 0.
fn ratio_lhs(abs_c: f64, scale: f64) -> f64 {
    if abs_c == 0.0 {
        0.0
    } else {
        abs_c * abs_c / (2.0 * scale * scale)
    }
}

fn checked(
    model: &IndirectMeasurementModel,
    law: &ConservationLaw,
    psi: &StateVector,
) -> Result<WayQuantities> {
    check_compatible(model, law)?;
    require_conserving(model.unitary(), law)?;
    WayQuantities::evaluate(model, law, psi)
}

/// Both QWAY inequalities; requires a conserving model.
pub fn qway_bounds(
    model: &IndirectMeasurementModel,
    law: &ConservationLaw,
    psi: &StateVector,
) -> Result<(BoundReport, BoundReport)> {
    let q = checked(model, law, psi)?;
    Ok((q.qway1(), q.qway2()))
}

pub fn summed_bound(
    model: &IndirectMeasurementModel,
    law: &ConservationLaw,
    psi: &StateVector,
) -> Result<BoundReport> {
    Ok(checked(model, law, psi)?.summed())
}

pub fn fundamental_bound(
    model: &IndirectMeasurementModel,
    law: &ConservationLaw,
    psi: &StateVector,
) -> Result<BoundReport> {
    Ok(checked(model, law, psi)?.fundamental())
}

/// The tighter variant keeping `sigma[L1(dt)]`, `sigma[L2(dt)]`.
pub fn fundamental_sigma_bound(
    model: &IndirectMeasurementModel,
    law: &ConservationLaw,
    psi: &StateVector,
) -> Result<BoundReport> {
    Ok(checked(model, law, psi)?.fundamental_sigma())
}

/// `qway-1`, `qway-2`, `summed`, `fundamental` for one state.
pub fn inequality_reports(
    model: &IndirectMeasurementModel,
    law: &ConservationLaw,
    psi: &StateVector,
) -> Result<[BoundReport; 4]> {
    let q = checked(model, law, psi)?;
    Ok([q.qway1(), q.qway2(), q.summed(), q.fundamental()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conservation::{commutant_basis, sample_conserving_unitary};
    use crate::gates::{cnot_unitary, pauli, Pauli};
    use crate::space::HilbertSpec;
    use crate::spectral::expm_skew;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn x_law() -> ConservationLaw {
        ConservationLaw::new(
            HilbertSpec::tripartite(2, 2, &[]).unwrap(),
            pauli(Pauli::X),
            pauli(Pauli::X),
            None,
        )
        .unwrap()
    }

    fn model(u: Operator, a: Operator) -> IndirectMeasurementModel {
        IndirectMeasurementModel::new(
            HilbertSpec::tripartite(2, 2, &[]).unwrap(),
            StateVector::basis(2, 0),
            None,
            u,
            pauli(Pauli::Z),
            a,
        )
        .unwrap()
    }

    #[test]
    fn identities_hold_for_functions_of_the_total() {
        let law = x_law();
        let u = expm_skew(law.total(), 1.3).unwrap();
        let (r1, r2) = identity_residuals(&model(u, pauli(Pauli::Z)), &law).unwrap();
        assert!(r1 <= 1e-12 && r2 <= 1e-12);
    }

    #[test]
    fn identities_hold_for_sampled_conserving_unitaries() {
        let law = x_law();
        let basis = commutant_basis(&law).unwrap();
        for seed in 0..20 {
            let u = sample_conserving_unitary(&basis, seed);
            let m = model(u, pauli(Pauli::Y));
            let reports = identity_reports(&m, &law).unwrap();
            assert!(reports.iter().all(|r| r.passes(BOUND_TOL)), "{reports:?}");
            // the identity is non-trivial: its left side is not zero
            assert!(reports[0].lhs > 1.0);
        }
    }

    #[test]
    fn non_conserving_unitary_is_rejected() {
        let err =
            identity_residuals(&model(cnot_unitary(), pauli(Pauli::Z)), &x_law()).unwrap_err();
        match err {
            Error::ConservationViolated { residual, .. } => assert!(residual > 1.0),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn commuting_observable_has_zero_lhs() {
        let law = x_law();
        let basis = commutant_basis(&law).unwrap();
        let u = sample_conserving_unitary(&basis, 3);
        let m = model(u, pauli(Pauli::X));
        let psi = StateVector::from_amplitudes(&[c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let (q1, q2) = qway_bounds(&m, &law, &psi).unwrap();
        assert_eq!(q1.lhs, 0.0);
        assert_eq!(q2.lhs, 0.0);
        assert_eq!(fundamental_bound(&m, &law, &psi).unwrap().lhs, 0.0);
    }

    #[test]
    fn cnot_view_fundamental_lhs_is_one_half() {
        // CNOT does not conserve X1 + X2, so only the quantities are evaluated.
        let m = model(cnot_unitary(), pauli(Pauli::Z));
        let psi = StateVector::from_amplitudes(&[c(1.0, 0.0), c(0.0, 1.0)]).unwrap();
        let q = WayQuantities::evaluate(&m, &x_law(), &psi).unwrap();
        assert!((q.abs_commutator() - 2.0).abs() < 1e-15);
        assert_eq!(q.sigma_evolved[2], 0.0);
        assert!((q.fundamental().lhs - 0.5).abs() < 1e-15);
        // and at (|0> + |1>)/sqrt2 the commutator expectation vanishes
        let plus = StateVector::from_amplitudes(&[c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        let q = WayQuantities::evaluate(&m, &x_law(), &plus).unwrap();
        assert!(q.abs_commutator() < 1e-15);
        assert!(fundamental_bound(&m, &x_law(), &psi).is_err());
    }

    #[test]
    fn summed_slack_dominates_sum_of_qway_slacks() {
        let law = x_law();
        let basis = commutant_basis(&law).unwrap();
        let psi = StateVector::from_amplitudes(&[c(0.3, 0.1), c(-0.2, 0.9)]).unwrap();
        for seed in 0..10 {
            let m = model(sample_conserving_unitary(&basis, seed), pauli(Pauli::Z));
            let q = WayQuantities::evaluate(&m, &law, &psi).unwrap();
            let (q1, q2, s) = (q.qway1(), q.qway2(), q.summed());
            assert!(s.slack >= q1.slack + q2.slack - 1e-12);
            assert!(q.fundamental_sigma().lhs >= q.fundamental().lhs - 1e-15);
        }
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let m = model(cnot_unitary(), pauli(Pauli::Z));
        let psi = StateVector::basis(2, 0);
        let a = WayQuantities::evaluate(&m, &x_law(), &psi).unwrap().digest;
        let b = WayQuantities::evaluate(&m, &x_law(), &psi).unwrap().digest;
        let other = WayQuantities::evaluate(&m, &x_law(), &StateVector::basis(2, 1))
            .unwrap()
            .digest;
        assert_eq!(a, b);
        assert_ne!(a, other);
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn report_json_shape() {
        let r = BoundReport::inequality(Relation::Qway1, 0.25, 1.0, "abc");
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"relation":"qway-1","lhs":0.25,"rhs":1.0,"slack":0.75,"digest":"abc"}"#
        );
        assert!(r.passes(BOUND_TOL));
        let id = BoundReport {
            relation: Relation::Identity1,
            lhs: 2.0,
            rhs: 2.0,
            slack: 1e-8,
            digest: String::new(),
        };
        assert!(!id.passes(BOUND_TOL));
    }
}
