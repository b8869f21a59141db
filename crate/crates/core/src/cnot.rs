//! CNOT implementations, their channels and worst-case gate fidelity.
//!
//! An implementation is a unitary `U` on control ⊗ target ⊗ ancilla together
//! with an ancilla state `xi`. Its channel is
//! `E(rho) = Tr_A[U (rho ⊗ |xi><xi|) U^dag]`, and the fidelity at an input
//! `psi` compares the output with the ideal `U_CN psi`:
//! `F(psi)^2 = <psi'| E(|psi><psi|) |psi'>`, `psi' = U_CN psi`.
//! The gate fidelity is the minimum of `F` over pure inputs and `1 - F^2` is
//! the worst error probability.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bounds::{BoundReport, InputsDigest, Relation};
use crate::conservation::{require_conserving, ConservationLaw};
use crate::error::{Error, Result};
use crate::gates::{cnot_unitary, pauli, Pauli};
use crate::measurement::{IndirectMeasurementModel, MODEL_UNITARY_TOL};
use crate::operator::{check_dims, expectation, std_dev, Operator, C64};
use crate::optim::{halton, nelder_mead, Minimum, NelderMeadConfig};
use crate::space::{partial_trace, HilbertSpec};
use crate::spectral::{eigh, operator_norm};
use crate::state::StateVector;

/// Trace and positivity tolerance for density operators.
pub const STATE_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "ImplRepr", into = "ImplRepr")]
pub struct GateImplementation {
    spec: HilbertSpec,
    u: Operator,
    xi: StateVector,
}

impl GateImplementation {
    /// `spec` must be tripartite with qubit control and target.
    pub fn new(spec: HilbertSpec, u: Operator, xi: Option<StateVector>) -> Result<Self> {
        spec.require_roles()?;
        if spec.object_dim() != 2 || spec.probe_dim() != 2 {
            return Err(Error::arg(format!(
                "control and target must be qubits, got dimensions {} and {}",
                spec.object_dim(),
                spec.probe_dim()
            )));
        }
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
        let dev = u.unitary_deviation();
        if dev > MODEL_UNITARY_TOL {
            return Err(Error::NotUnitary { deviation: dev });
        }
        let u = Operator::from_parts(u.into_matrix(), false, true);
        Ok(Self { spec, u, xi })
    }

    /// `U_CN ⊗ I_A` with ancilla in `xi`.
    pub fn perfect(ancilla: &[usize], xi: Option<StateVector>) -> Result<Self> {
        let spec = HilbertSpec::tripartite(2, 2, ancilla)?;
        let u = spec.embed_group(&cnot_unitary(), 0, 1)?;
        Self::new(spec, u, xi)
    }

    pub fn spec(&self) -> &HilbertSpec {
        &self.spec
    }

    pub fn unitary(&self) -> &Operator {
        &self.u
    }

    pub fn xi(&self) -> &StateVector {
        &self.xi
    }

    pub fn ancilla_dim(&self) -> usize {
        self.spec.ancilla_dim()
    }
}

fn check_density(rho: &Operator) -> Result<()> {
    check_dims(4, rho.dim())?;
    let dev = rho.hermitian_deviation();
    if dev > STATE_TOL {
        return Err(Error::NotAState(format!(
            "not Hermitian (deviation {dev:e})"
        )));
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
        return Err(Error::NotAState(format!("trace {tr} differs from 1")));
    }
    let (values, _) = eigh(rho.matrix());
    if let Some(&min) = values.first() {
        if min < -STATE_TOL {
            return Err(Error::NotAState(format!("negative eigenvalue {min:e}")));
        }
    }
    Ok(())
}

/// `Tr_A[U (rho ⊗ |xi><xi|) U^dag]` for a density operator on control ⊗
/// target.
pub fn channel_apply(imp: &GateImplementation, rho: &Operator) -> Result<Operator> {
    check_density(rho)?;
    let xi = Operator::projector(&imp.xi);
    let joint = crate::operator::tensor(rho, &xi);
    let u = imp.u.matrix();
    let evolved = u * joint.matrix() * u.adjoint();
    let evolved = Operator::from_parts(evolved, true, false);
    let two_qubits = HilbertSpec::new(vec![2, 2, imp.ancilla_dim()])?;
    partial_trace(&evolved, &two_qubits, &[0, 1])
}

/// `F(psi)` through the channel: `sqrt(<psi'| E(|psi><psi|) |psi'>)`.
pub fn state_fidelity(imp: &GateImplementation, psi: &StateVector) -> Result<f64> {
    check_dims(4, psi.dim())?;
    let out = channel_apply(imp, &Operator::projector(psi))?;
    let target = cnot_unitary().matrix() * psi.amplitudes();
    let overlap = (target.adjoint() * out.matrix() * &target)[(0, 0)].re;
    Ok(overlap.clamp(0.0, 1.0).sqrt())
}

/// Kraus form of `psi -> F(psi)^2`: `F^2 = sum_a |psi^dag G_a psi|^2` with
/// `G_a = U_CN (I ⊗ <a|) U (I ⊗ |xi>)`. One evaluation costs `O(16 d_A)`.
#[derive(Clone, Debug)]
pub struct FidelityKernel {
    g: Vec<DMatrix<C64>>,
}

impl FidelityKernel {
    pub fn new(imp: &GateImplementation) -> Self {
        Self::from_parts(imp.u.matrix(), imp.xi.amplitudes())
    }

    /// Builds the kernel directly from `U` and `xi` without validation.
    pub fn from_parts(u: &DMatrix<C64>, xi: &DVector<C64>) -> Self {
        let da = xi.len();
        // W = U (I_4 ⊗ xi): column j is sum_b xi_b U[:, j da + b]
        let w = DMatrix::from_fn(4 * da, 4, |r, j| {
            (0..da).map(|b| xi[b] * u[(r, j * da + b)]).sum::<C64>()
        });
        // (U_CN K)[i, j] = K[cn(i), j], U_CN being a self-inverse permutation
        let cn = |i: usize| {
            let (a, b) = (i >> 1, i & 1);
            (a << 1) | (b ^ a)
        };
        let g = (0..da)
            .map(|a| DMatrix::from_fn(4, 4, |i, j| w[(cn(i) * da + a, j)]))
            .collect();
        Self { g }
    }

    /// `F(psi)^2`, for a (not necessarily normalized) 4-vector; callers pass
    /// unit vectors.
    pub fn fidelity_squared(&self, psi: &[C64; 4]) -> f64 {
        let mut total = 0.0;
        for g in &self.g {
            let mut z = C64::new(0.0, 0.0);
            for i in 0..4 {
                let mut row = C64::new(0.0, 0.0);
                for j in 0..4 {
                    row += g[(i, j)] * psi[j];
                }
                z += psi[i].conj() * row;
            }
            total += z.norm_sqr();
        }
        total
    }

    pub fn fidelity(&self, psi: &StateVector) -> f64 {
        let a = psi.amplitudes();
        self.fidelity_squared(&[a[0], a[1], a[2], a[3]])
            .clamp(0.0, 1.0)
            .sqrt()
    }

    /// Mean of `F(psi)^2` over Haar-random pure inputs,
    /// `(sum_a |Tr G_a|^2 + 4) / 20`. It is smooth in `U` and bounds the
    /// worst case from above.
    pub fn mean_fidelity_squared(&self) -> f64 {
        let traces: f64 = self.g.iter().map(|g| g.trace().norm_sqr()).sum();
        let frob: f64 = self.g.iter().map(|g| g.norm_squared()).sum();
        (traces + frob) / 20.0
    }
}

/// Unit 4-vector from six angles: magnitudes on the positive orthant of the
/// 3-sphere and three phases relative to the first amplitude.
pub fn angles_to_state(t: &[f64]) -> [C64; 4] {
    let (s1, c1) = t[0].sin_cos();
    let (s2, c2) = t[1].sin_cos();
    let (s3, c3) = t[2].sin_cos();
    let mags = [c1, s1 * c2, s1 * s2 * c3, s1 * s2 * s3];
    [
        C64::new(mags[0], 0.0),
        C64::from_polar(mags[1], t[3]),
        C64::from_polar(mags[2], t[4]),
        C64::from_polar(mags[3], t[5]),
    ]
}

/// Inverse of [`angles_to_state`] up to global phase.
pub fn state_to_angles(psi: &StateVector) -> [f64; 6] {
    let a = psi.amplitudes();
    let phase0 = if a[0].norm() > 0.0 { a[0].arg() } else { 0.0 };
    let r: Vec<f64> = (0..4).map(|k| a[k].norm()).collect();
    let a1 = r[0].clamp(-1.0, 1.0).acos();
    let a2 = (r[2].hypot(r[3])).atan2(r[1]);
    let a3 = r[3].atan2(r[2]);
    [
        a1,
        a2,
        a3,
        a[1].arg() - phase0,
        a[2].arg() - phase0,
        a[3].arg() - phase0,
    ]
}

fn to_state(amps: [C64; 4]) -> StateVector {
    StateVector::normalize(DVector::from_row_slice(&amps)).expect("angles give a unit vector")
}

/// The four basis states and the twelve pair superpositions with relative
/// phases 1 and i.
pub fn seed_states() -> Vec<StateVector> {
    crate::measurement::certification_states(4, 0, 0)
}

#[derive(Clone, Debug)]
pub struct SearchConfig {
    /// Halton starts.
    pub restarts: usize,
    /// How many of the sixteen seed states (best first) start a local
    /// search; every seed is evaluated regardless.
    pub seed_starts: usize,
    /// Convergence tolerance on `F`.
    pub tol: f64,
    pub max_evals: usize,
    pub initial_step: f64,
    /// Keep one trace entry per start.
    pub record_trace: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            restarts: 64,
            seed_starts: 16,
            tol: 1e-10,
            max_evals: 3000,
            initial_step: 0.3,
            record_trace: true,
        }
    }
}

impl SearchConfig {
    /// A cheaper search used inside outer optimization loops.
    pub fn fast() -> Self {
        Self {
            restarts: 3,
            seed_starts: 3,
            tol: 1e-9,
            max_evals: 400,
            initial_step: 0.3,
            record_trace: false,
        }
    }
}

/// `F` values at or below this end the search: `F >= 0`, so nothing lower
/// can be found.
const FLOOR: f64 = 1e-15;

#[derive(Clone, Debug, Serialize)]
pub struct TraceEntry {
    /// `seed` or `halton`.
    pub origin: &'static str,
    pub start_value: f64,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct FidelityResult {
    pub gate_fidelity: f64,
    pub worst_state: StateVector,
    pub error_probability: f64,
    pub evaluations: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceEntry>,
}

/// Worst-case fidelity `min_psi F(psi)` of an implementation.
pub fn gate_fidelity(imp: &GateImplementation, cfg: &SearchConfig) -> FidelityResult {
    minimize_fidelity(&FidelityKernel::new(imp), cfg)
}

/// Multi-start Nelder–Mead over six state angles. The returned value is the
/// smallest `F` seen at any evaluated point, so it never exceeds the fidelity
/// of a probed state.
pub fn minimize_fidelity(kernel: &FidelityKernel, cfg: &SearchConfig) -> FidelityResult {
    let mut best = (f64::INFINITY, [0.0; 6]);
    let mut total = 0usize;
    let eval = |t: &[f64], best: &mut (f64, [f64; 6]), total: &mut usize| {
        *total += 1;
        let v = kernel
            .fidelity_squared(&angles_to_state(t))
            .clamp(0.0, 1.0)
            .sqrt();
        if v < best.0 {
            *best = (v, t.try_into().expect("six angles"));
        }
        v
    };

    let mut seeds: Vec<([f64; 6], f64)> = seed_states()
        .iter()
        .map(|s| {
            let t = state_to_angles(s);
            let v = eval(&t, &mut best, &mut total);
            (t, v)
        })
        .collect();
    seeds.sort_by(|a, b| a.1.total_cmp(&b.1));

    let mut starts: Vec<([f64; 6], &'static str)> = seeds
        .iter()
        .take(cfg.seed_starts)
        .map(|(t, _)| (*t, "seed"))
        .collect();
    let half_pi = std::f64::consts::FRAC_PI_2;
    let two_pi = 2.0 * std::f64::consts::PI;
    for k in 1..=cfg.restarts {
        let h = halton(k, 6);
        starts.push((
            [
                h[0] * half_pi,
                h[1] * half_pi,
                h[2] * half_pi,
                h[3] * two_pi,
                h[4] * two_pi,
                h[5] * two_pi,
            ],
            "halton",
        ));
    }

    let mut trace = Vec::new();
    let nm = NelderMeadConfig {
        initial_step: cfg.initial_step,
        ftol: cfg.tol,
        xtol: 1e-7,
        max_evals: cfg.max_evals,
        bounds: None,
    };
    for (start, origin) in starts {
        if best.0 <= FLOOR {
            break;
        }
        let before = total;
        let mut f = |t: &[f64]| eval(t, &mut best, &mut total);
        let start_value = f(&start);
        let Minimum {
            x,
            value,
            converged,
            ..
        } = nelder_mead(&mut f, &start, &nm);
        // a second, smaller simplex guards against premature collapse
        let polish = nelder_mead(
            &mut f,
            &x,
            &NelderMeadConfig {
                initial_step: 1e-3,
                max_evals: cfg.max_evals / 2,
                ..nm.clone()
            },
        );
        if cfg.record_trace {
            trace.push(TraceEntry {
                origin,
                start_value,
                value: value.min(polish.value),
                evaluations: total - before,
                converged: converged && polish.converged,
            });
        }
    }
    let (value, angles) = best;
    FidelityResult {
        gate_fidelity: value,
        worst_state: to_state(angles_to_state(&angles)),
        error_probability: 1.0 - value * value,
        evaluations: total,
        trace,
    }
}

/// The implementation read as a measurement of `Z1` with probe observable
/// `Z2` and probe state `|0>`.
pub fn measurement_view(imp: &GateImplementation) -> Result<IndirectMeasurementModel> {
    IndirectMeasurementModel::new(
        imp.spec.clone(),
        StateVector::basis(2, 0),
        Some(imp.xi.clone()),
        imp.u.clone(),
        pauli(Pauli::Z),
        pauli(Pauli::Z),
    )
}

/// Input state for the noise/fidelity chain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum PsiChoice {
    /// `(|0> + i|1>)/sqrt2`, where `|<[Z, X]>| = 2`.
    #[default]
    #[serde(rename = "plus-i")]
    PlusI,
    /// `(|0> + |1>)/sqrt2`, where `<[Z, X]> = 0`.
    #[serde(rename = "plus")]
    Plus,
}

impl PsiChoice {
    pub fn state(self) -> StateVector {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let second = match self {
            PsiChoice::PlusI => C64::new(0.0, h),
            PsiChoice::Plus => C64::new(h, 0.0),
        };
        StateVector::new(DVector::from_vec(vec![C64::new(h, 0.0), second])).expect("unit vector")
    }

    pub fn name(self) -> &'static str {
        match self {
            PsiChoice::PlusI => "plus-i",
            PsiChoice::Plus => "plus",
        }
    }
}

/// Everything produced by [`noise_fidelity_link`].
#[derive(Clone, Debug, Serialize)]
pub struct NoiseFidelityLink {
    pub psi: PsiChoice,
    pub commutator_abs: f64,
    pub error: f64,
    pub disturbance: f64,
    /// `sigma(L3')`, `L3' = U^dag (I ⊗ I ⊗ L3) U`, in `psi ⊗ |0> ⊗ xi`.
    pub sigma_l3: f64,
    pub gate_fidelity: f64,
    /// `1 - |c|^2 / (16 (2 max{||L1||, ||L2||} + sigma(L3'))^2)`; with
    /// `L1 = X1`, `L2 = X2` and `psi = plus-i` this is
    /// `1 - 1/(4 (2 + sigma(L3'))^2)`.
    pub ceiling: f64,
    /// `squared-noise`, `fidelity-noise`, `fidelity-ceiling`.
    pub reports: [BoundReport; 3],
}

/// Evaluates the chain
/// `|c|^2 / 2(2 + sigma(L3'))^2 <= e^2 + n^2 <= 8 (1 - F^2)` and the implied
/// ceiling on `F^2`. Requires a conserving implementation.
pub fn noise_fidelity_link(
    imp: &GateImplementation,
    law: &ConservationLaw,
    psi: PsiChoice,
    cfg: &SearchConfig,
) -> Result<NoiseFidelityLink> {
    if law.spec().factor_dims() != imp.spec.factor_dims() {
        return Err(Error::arg(
            "law and implementation live on different spaces",
        ));
    }
    require_conserving(&imp.u, law)?;
    let fidelity = gate_fidelity(imp, cfg).gate_fidelity;
    noise_fidelity_link_with(imp, law, psi, fidelity)
}

/// As [`noise_fidelity_link`] with a precomputed gate fidelity; does not
/// check conservation.
pub fn noise_fidelity_link_with(
    imp: &GateImplementation,
    law: &ConservationLaw,
    psi: PsiChoice,
    gate_fidelity: f64,
) -> Result<NoiseFidelityLink> {
    let model = measurement_view(imp)?;
    let psi_state = psi.state();
    let big_psi = model.initial_state(&psi_state)?;
    let c = expectation(
        &crate::operator::commutator(&pauli(Pauli::Z), law.l1())?,
        &psi_state,
    )?;
    let abs_c = c.norm();
    let e = model.rms_error(&psi_state)?;
    let n = model.rms_disturbance(&psi_state)?;
    let l3_evolved = law.embedded(3)?.conjugate_by(&imp.u)?;
    let sigma = std_dev(&l3_evolved, &big_psi)?;
    let scale = 2.0 * operator_norm(law.l1()).max(operator_norm(law.l2())) + sigma;
    let noise_lhs = if abs_c == 0.0 {
        0.0
    } else {
        abs_c * abs_c / (2.0 * scale * scale)
    };
    let ceiling = 1.0 - noise_lhs / 8.0;
    let f2 = gate_fidelity * gate_fidelity;
    let digest = InputsDigest::new()
        .tag("cnot")
        .operator(&imp.u)
        .state(&imp.xi)
        .law(law)
        .tag(psi.name())
        .finish();
    let noise = e * e + n * n;
    Ok(NoiseFidelityLink {
        psi,
        commutator_abs: abs_c,
        error: e,
        disturbance: n,
        sigma_l3: sigma,
        gate_fidelity,
        ceiling,
        reports: [
            BoundReport::inequality(Relation::SquaredNoise, noise_lhs, noise, &digest),
            BoundReport::inequality(Relation::FidelityNoise, noise, 8.0 * (1.0 - f2), &digest),
            BoundReport::inequality(Relation::FidelityCeiling, f2, ceiling, &digest),
        ],
    })
}

#[derive(Serialize, Deserialize)]
struct ImplRepr {
    spec: HilbertSpec,
    u: Operator,
    xi: StateVector,
}

impl From<GateImplementation> for ImplRepr {
    fn from(imp: GateImplementation) -> Self {
        ImplRepr {
            spec: imp.spec,
            u: imp.u,
            xi: imp.xi,
        }
    }
}

impl TryFrom<ImplRepr> for GateImplementation {
    type Error = Error;

    fn try_from(repr: ImplRepr) -> Result<Self> {
        GateImplementation::new(repr.spec, repr.u, Some(repr.xi))
    }
}
