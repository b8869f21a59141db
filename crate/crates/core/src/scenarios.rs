//! Concrete settings for CNOT implementations under conservation of total
//! `X`: qubit ancillae and a coherent control field. Also the search for
//! good conserving implementations and a few constructed controls.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bounds::{BoundReport, InputsDigest, Relation};
use crate::cnot::{minimize_fidelity, FidelityKernel, GateImplementation, PsiChoice, SearchConfig};
use crate::conservation::{
    commutant_basis, conservation_residual, sample_coefficients, CommutantBasis, ConservationLaw,
};
use crate::error::{Error, Result};
use crate::gates::{pauli, Pauli};
use crate::measurement::IndirectMeasurementModel;
use crate::operator::{commutator, expectation, std_dev, tensor, Operator, C64};
use crate::optim::{compass_search, nelder_mead, CompassConfig, NelderMeadConfig};
use crate::sampling::{self, random_hermitian, random_integer_spectrum, random_state, Rng};
use crate::space::HilbertSpec;
use crate::spectral::{eig_hermitian, operator_norm, CLUSTER_TOL};
use crate::state::StateVector;

/// Slack allowed above a fidelity ceiling.
pub const CEILING_TOL: f64 = 1e-9;

/// Smallest mean photon number accepted by [`build_boson`].
pub const MIN_NBAR: f64 = 1e-6;

/// `sum_k X_k` on `qubits` qubits (the zero operator on dimension 1 when
/// `qubits = 0`).
pub fn sum_x(qubits: usize) -> Operator {
    let dim = 1usize << qubits;
    let mut total = Operator::zeros(dim);
    for k in 0..qubits {
        let left = Operator::identity(1 << k);
        let right = Operator::identity(1 << (qubits - k - 1));
        total = &total + &crate::operator::tensor_all(&[&left, &pauli(Pauli::X), &right]);
    }
    Operator::from_parts(total.into_matrix(), true, false)
}

/// `n` qubits: control, target and `n - 2` ancilla qubits, with
/// `L1 = X1`, `L2 = X2`, `L3 = sum of X` over the ancillae.
#[derive(Clone, Debug)]
pub struct SpinScenario {
    pub n: usize,
    pub spec: HilbertSpec,
    pub law: ConservationLaw,
    pub ceiling: f64,
}

pub fn build_spin(n: usize) -> Result<SpinScenario> {
    if n < 2 {
        return Err(Error::arg(format!(
            "spin scenario needs at least 2 qubits, got {n}"
        )));
    }
    let ancilla = vec![2; n - 2];
    let spec = HilbertSpec::tripartite(2, 2, &ancilla)?;
    let l3 = if n > 2 { Some(sum_x(n - 2)) } else { None };
    let x = pauli(Pauli::X);
    let law = ConservationLaw::new(spec.clone(), x.clone(), x, l3)?;
    Ok(SpinScenario {
        n,
        spec,
        law,
        ceiling: ceiling_qubit(n),
    })
}

/// `1 - 1/(4 n^2)`, the `F^2` ceiling for an `n`-qubit implementation.
pub fn ceiling_qubit(n: usize) -> f64 {
    let n = n as f64;
    1.0 - 1.0 / (4.0 * n * n)
}

/// `1 - 1/(16 nbar)`; non-positive values mean the ceiling says nothing.
pub fn ceiling_boson(nbar: f64) -> f64 {
    1.0 - 1.0 / (16.0 * nbar)
}

pub fn ceiling_is_degenerate(ceiling: f64) -> bool {
    ceiling <= 0.0
}

/// `1 - 1/(4 (2 + sigma)^2)`.
pub fn ceiling_sigma(sigma_l3: f64) -> f64 {
    1.0 - 1.0 / (4.0 * (2.0 + sigma_l3).powi(2))
}

/// Single-mode field in a truncated coherent state with `L3 = 2N`.
#[derive(Clone, Debug)]
pub struct BosonScenario {
    pub nbar: f64,
    pub tail_tol: f64,
    pub cutoff: usize,
    /// Real amplitude `sqrt(nbar)`.
    pub alpha: C64,
    /// Poisson mass beyond the cutoff.
    pub tail: f64,
    pub spec: HilbertSpec,
    pub law: ConservationLaw,
    pub xi: StateVector,
    pub number: Operator,
}

fn ln_poisson(nbar: f64, k: usize) -> f64 {
    // ln(e^-nbar nbar^k / k!) accumulated term by term
    (1..=k).fold(-nbar, |acc, j| acc + nbar.ln() - (j as f64).ln())
}

/// `sum_{k >= d} Poisson(nbar)(k)`, summed directly (not as `1 - head`).
pub fn poisson_tail(nbar: f64, d: usize) -> f64 {
    let mut lp = ln_poisson(nbar, d);
    let mut total = 0.0;
    let mut k = d;
    loop {
        let term = lp.exp();
        total += term;
        k += 1;
        lp += nbar.ln() - (k as f64).ln();
        if (k as f64) > nbar && term < total * 1e-18 {
            return total;
        }
        if term == 0.0 && (k as f64) > nbar {
            return total;
        }
    }
}

/// Smallest dimension `d` with Poisson tail `sum_{k >= d} p_k < tail_tol`.
pub fn fock_cutoff(nbar: f64, tail_tol: f64) -> usize {
    (1..)
        .find(|&d| poisson_tail(nbar, d) < tail_tol)
        .expect("Poisson tail vanishes")
}

/// Tolerance on the coherent-state moments of the truncated state.
pub const MOMENT_TOL: f64 = 1e-8;

/// Photon levels a conserving interaction can move the field by: with
/// `X1 + X2 + 2N` fixed and `X1 + X2` in `{-2, 0, 2}`, `N` shifts by at most 2.
pub const INTERACTION_REACH: usize = 2;

/// Cutoff from the tail tolerance: the smallest `d` whose Poisson tail is
/// below `tail_tol`, raised while the truncated moments miss [`MOMENT_TOL`]
/// (the variance is the sensitive one, weighting the tail by
/// `(k - nbar)^2`), plus [`INTERACTION_REACH`] levels so the evolved state
/// does not feel the edge either.
pub fn build_boson(nbar: f64, tail_tol: f64) -> Result<BosonScenario> {
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(Error::arg(format!(
            "tail tolerance must lie in (0, 1), got {tail_tol}"
        )));
    }
    check_nbar(nbar)?;
    let mut cutoff = fock_cutoff(nbar, tail_tol).max(2);
    loop {
        let scenario = build_boson_with_cutoff(nbar, cutoff, tail_tol)?;
        if scenario.moment_deviation() <= MOMENT_TOL {
            return build_boson_with_cutoff(nbar, cutoff + INTERACTION_REACH, tail_tol);
        }
        cutoff += 1;
    }
}

fn check_nbar(nbar: f64) -> Result<()> {
    if nbar.is_nan() || nbar < MIN_NBAR {
        return Err(Error::arg(format!(
            "mean photon number must be at least {MIN_NBAR:e}, got {nbar}"
        )));
    }
    Ok(())
}

/// Explicit cutoff, e.g. to test truncation sensitivity.
pub fn build_boson_with_cutoff(nbar: f64, cutoff: usize, tail_tol: f64) -> Result<BosonScenario> {
    check_nbar(nbar)?;
    if cutoff < 2 {
        return Err(Error::arg("Fock cutoff must be at least 2"));
    }
    let amps: Vec<C64> = (0..cutoff)
        .map(|k| C64::new((0.5 * ln_poisson(nbar, k)).exp(), 0.0))
        .collect();
    let xi = StateVector::normalize(DVector::from_vec(amps))?;
    let levels: Vec<f64> = (0..cutoff).map(|k| k as f64).collect();
    let number = Operator::diagonal(&levels);
    let spec = HilbertSpec::tripartite(2, 2, &[cutoff])?;
    let x = pauli(Pauli::X);
    let law = ConservationLaw::new(spec.clone(), x.clone(), x, Some(number.scale_real(2.0)))?;
    Ok(BosonScenario {
        nbar,
        tail_tol,
        cutoff,
        alpha: C64::new(nbar.sqrt(), 0.0),
        tail: poisson_tail(nbar, cutoff),
        spec,
        law,
        xi,
        number,
    })
}

impl BosonScenario {
    /// `(<N>, (Delta N)^2)` in the truncated state.
    pub fn moments(&self) -> (f64, f64) {
        let mean = expectation(&self.number, &self.xi).expect("dims").re;
        let sd = std_dev(&self.number, &self.xi).expect("Hermitian");
        (mean, sd * sd)
    }

    /// `max(|<N> - nbar|, |(Delta N)^2 - <N>|)`.
    pub fn moment_deviation(&self) -> f64 {
        let (mean, var) = self.moments();
        (mean - self.nbar).abs().max((var - mean).abs())
    }

    /// `s = 2 <N>^{1/2}`.
    pub fn size(&self) -> f64 {
        2.0 * self.moments().0.sqrt()
    }

    /// Truncated annihilation operator.
    pub fn annihilation(&self) -> Operator {
        annihilation(self.cutoff)
    }
}

pub fn annihilation(cutoff: usize) -> Operator {
    let mut a = DMatrix::<C64>::zeros(cutoff, cutoff);
    for k in 1..cutoff {
        a[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
    }
    Operator::from_parts(a, false, false)
}

/// Couplings of a physically motivated conserving Hamiltonian
/// `g1 (t1 a^dag + h.c.) + g2 (t2 a^dag + h.c.) + chi X1 X2 + delta N`,
/// where `t = |-><+|` lowers `X` by 2 while `a^dag` raises `2N` by 2.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Coupling {
    pub g1: f64,
    pub g2: f64,
    pub chi: f64,
    pub delta: f64,
}

pub fn coupling_hamiltonian(cutoff: usize, c: &Coupling) -> Result<Operator> {
    let h = FRAC_1_SQRT_2;
    let plus = DVector::from_vec(vec![C64::new(h, 0.0), C64::new(h, 0.0)]);
    let minus = DVector::from_vec(vec![C64::new(h, 0.0), C64::new(-h, 0.0)]);
    let lower = Operator::from_parts(&minus * plus.adjoint(), false, false);
    let a = annihilation(cutoff);
    let a_dag = a.dagger();
    let i2 = Operator::identity(2);
    let x = pauli(Pauli::X);
    let t1 = crate::operator::tensor_all(&[&lower, &i2, &a_dag]);
    let t2 = crate::operator::tensor_all(&[&i2, &lower, &a_dag]);
    let xx = crate::operator::tensor_all(&[&x, &x, &Operator::identity(cutoff)]);
    let levels: Vec<f64> = (0..cutoff).map(|k| k as f64).collect();
    let n = crate::operator::tensor_all(&[&i2, &i2, &Operator::diagonal(&levels)]);
    let sum = &(&(&t1.scale_real(c.g1) + &t1.dagger().scale_real(c.g1))
        + &(&t2.scale_real(c.g2) + &t2.dagger().scale_real(c.g2)))
        + &(&xx.scale_real(c.chi) + &n.scale_real(c.delta));
    Operator::hermitian(sum.into_matrix())
}

/// Implementation `exp(-i H)` for the coupling Hamiltonian, with the
/// scenario's coherent state as ancilla.
pub fn coupling_implementation(
    scenario: &BosonScenario,
    c: &Coupling,
) -> Result<GateImplementation> {
    let h = coupling_hamiltonian(scenario.cutoff, c)?;
    let u = crate::spectral::expm_skew(&h, 1.0)?;
    GateImplementation::new(scenario.spec.clone(), u, Some(scenario.xi.clone()))
}

/// Random conserving implementation for a bosonic scenario: commutant
/// coefficients with standard-normal entries times `strength`.
pub fn sample_boson_implementation(
    scenario: &BosonScenario,
    basis: &CommutantBasis,
    rng: &mut Rng,
    strength: f64,
) -> Result<GateImplementation> {
    let coeffs = sample_coefficients(basis, rng, strength);
    let u = basis.unitary(&coeffs)?;
    GateImplementation::new(scenario.spec.clone(), u, Some(scenario.xi.clone()))
}

/// Photon statistics after the interaction and the `sigma(L3')` checks.
#[derive(Clone, Debug, Serialize)]
pub struct SigmaL3Check {
    pub sigma_l3: f64,
    /// `2 (<N> + 2)^{1/2}`.
    pub bound: f64,
    pub mean_n: f64,
    pub mean_n_after: f64,
    pub delta_n_after: f64,
    /// `|Delta N' - <N'>^{1/2}|`; zero would mean Poissonian statistics
    /// persist after the interaction.
    pub poisson_deviation: f64,
    pub poisson_holds: bool,
    /// `sigma-l3` and `photon-growth`.
    pub reports: [BoundReport; 2],
}

pub fn sigma_l3_bound_check(
    imp: &GateImplementation,
    scenario: &BosonScenario,
    psi: PsiChoice,
) -> Result<SigmaL3Check> {
    if imp.spec().factor_dims() != scenario.spec.factor_dims() {
        return Err(Error::arg(
            "implementation and scenario live on different spaces",
        ));
    }
    let big_psi = StateVector::tensor_all(&[&psi.state(), &StateVector::basis(2, 0), imp.xi()]);
    let n_full = scenario.spec.embed_ancilla(&scenario.number)?;
    let n_after = n_full.conjugate_by(imp.unitary())?;
    let mean_n = expectation(&n_full, &big_psi)?.re;
    let mean_after = expectation(&n_after, &big_psi)?.re;
    let delta_after = std_dev(&n_after, &big_psi)?;
    let sigma = 2.0 * delta_after;
    let bound = 2.0 * (mean_n + 2.0).sqrt();
    let deviation = (delta_after - mean_after.max(0.0).sqrt()).abs();
    let digest = InputsDigest::new()
        .tag("boson")
        .operator(imp.unitary())
        .state(imp.xi())
        .tag(psi.name())
        .finish();
    Ok(SigmaL3Check {
        sigma_l3: sigma,
        bound,
        mean_n,
        mean_n_after: mean_after,
        delta_n_after: delta_after,
        poisson_deviation: deviation,
        poisson_holds: deviation <= 1e-8,
        reports: [
            BoundReport::inequality(Relation::SigmaL3, sigma, bound, &digest),
            BoundReport::inequality(Relation::PhotonGrowth, mean_after, mean_n + 2.0, &digest),
        ],
    })
}

/// How the ceiling is evaluated at each point of a search.
#[derive(Clone, Copy, Debug, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum Ceiling {
    /// A constant bound on `F^2`.
    Fixed(f64),
    /// `1 - 1/(4 (2 + sigma(L3'))^2)` with `sigma(L3')` at `psi = plus-i`.
    SigmaForm,
    /// No ceiling (controls).
    None,
}

/// A search space of conserving implementations.
#[derive(Clone, Debug)]
pub struct Problem {
    pub label: String,
    pub spec: HilbertSpec,
    pub law: ConservationLaw,
    pub basis: CommutantBasis,
    /// Fixed ancilla state; `None` puts the ancilla amplitudes into the
    /// search.
    pub xi: Option<StateVector>,
    pub ceiling: Ceiling,
}

impl Problem {
    pub fn spin(scenario: &SpinScenario) -> Result<Self> {
        let xi = (scenario.spec.ancilla_dim() == 1).then(|| StateVector::basis(1, 0));
        Ok(Self {
            label: format!("spin-n{}", scenario.n),
            spec: scenario.spec.clone(),
            law: scenario.law.clone(),
            basis: commutant_basis(&scenario.law)?,
            xi,
            ceiling: Ceiling::Fixed(scenario.ceiling),
        })
    }

    pub fn boson(scenario: &BosonScenario) -> Result<Self> {
        Ok(Self {
            label: format!("boson-nbar{}", scenario.nbar),
            spec: scenario.spec.clone(),
            law: scenario.law.clone(),
            basis: commutant_basis(&scenario.law)?,
            xi: Some(scenario.xi.clone()),
            ceiling: Ceiling::SigmaForm,
        })
    }

    /// Two qubits under `L1 = Z1`, `L2 = 0`: CNOT itself conserves this law,
    /// so the search should reach `F^2 = 1`.
    pub fn z_control() -> Result<Self> {
        let spec = HilbertSpec::tripartite(2, 2, &[])?;
        let law = ConservationLaw::new(spec.clone(), pauli(Pauli::Z), Operator::zeros(2), None)?;
        Ok(Self {
            label: "z-control".into(),
            spec,
            basis: commutant_basis(&law)?,
            law,
            xi: Some(StateVector::basis(1, 0)),
            ceiling: Ceiling::None,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.basis.len() + self.xi_parameter_count()
    }

    fn xi_parameter_count(&self) -> usize {
        if self.xi.is_some() {
            0
        } else {
            2 * self.spec.ancilla_dim()
        }
    }

    /// Splits a parameter vector into the unitary and the ancilla state.
    pub fn decode(&self, params: &[f64]) -> Result<(Operator, StateVector)> {
        if params.len() != self.parameter_count() {
            return Err(Error::DimensionMismatch {
                expected: self.parameter_count(),
                found: params.len(),
            });
        }
        let (coeffs, rest) = params.split_at(self.basis.len());
        let u = self.basis.unitary(coeffs)?;
        let xi = match &self.xi {
            Some(xi) => xi.clone(),
            None => {
                let amps = DVector::from_fn(self.spec.ancilla_dim(), |k, _| {
                    C64::new(rest[2 * k], rest[2 * k + 1])
                });
                StateVector::normalize(amps)
                    .unwrap_or_else(|_| StateVector::basis(self.spec.ancilla_dim(), 0))
            }
        };
        Ok((u, xi))
    }

    pub fn implementation(&self, params: &[f64]) -> Result<GateImplementation> {
        let (u, xi) = self.decode(params)?;
        GateImplementation::new(self.spec.clone(), u, Some(xi))
    }

    /// Ceiling at a given implementation.
    pub fn ceiling_at(&self, u: &Operator, xi: &StateVector) -> Result<Option<f64>> {
        Ok(match self.ceiling {
            Ceiling::Fixed(c) => Some(c),
            Ceiling::None => None,
            Ceiling::SigmaForm => {
                let big_psi = StateVector::tensor_all(&[
                    &PsiChoice::PlusI.state(),
                    &StateVector::basis(2, 0),
                    xi,
                ]);
                let l3 = self.law.embedded(3)?.conjugate_by(u)?;
                Some(ceiling_sigma(std_dev(&l3, &big_psi)?))
            }
        })
    }
}

#[derive(Clone, Debug)]
pub struct OptimizeConfig {
    pub restarts: usize,
    /// Evaluations per restart in the first stage (mean fidelity).
    pub max_iter: usize,
    /// Evaluations per restart in the second stage (worst-case fidelity).
    pub refine_iter: usize,
    pub seed: u64,
    /// Half-width of the coefficient box.
    pub bound: f64,
    pub initial_step: f64,
    /// Inner worst-state search used while optimizing.
    pub inner: SearchConfig,
    /// Search used to re-evaluate each restart's best point and any
    /// apparent ceiling violation.
    pub full: SearchConfig,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_iter: 4000,
            refine_iter: 600,
            seed: 0,
            bound: 2.0 * PI,
            initial_step: 0.5,
            inner: SearchConfig::fast(),
            full: SearchConfig {
                record_trace: false,
                ..SearchConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RestartTrace {
    pub restart: usize,
    /// Mean `F^2` at the start and after the first stage.
    pub start_mean_f2: f64,
    pub mean_f2: f64,
    /// Worst-case `F^2` under the inner search after the second stage.
    pub search_f2: f64,
    /// The same point under the full search.
    pub f2: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub f2: f64,
    pub ceiling: f64,
    pub parameters: Vec<f64>,
}

/// Ceiling audit over every evaluated implementation.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Audit {
    pub points: usize,
    /// Points cleared because their mean `F^2` is already below the ceiling.
    pub cleared_by_mean: usize,
    /// Points needing a worst-case search.
    pub searched: usize,
    /// Largest upper bound on `F^2 - ceiling` over all points.
    pub max_excess: Option<f64>,
    pub violations: Vec<Violation>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimizationRun {
    pub label: String,
    pub ceiling_kind: Ceiling,
    /// Ceiling at the best point.
    pub ceiling: Option<f64>,
    pub best_f2: f64,
    /// `ceiling - best_f2`.
    pub gap: Option<f64>,
    pub best_parameters: Vec<f64>,
    pub best_xi: StateVector,
    pub evaluations: usize,
    pub audit: Audit,
    pub trace: Vec<RestartTrace>,
}

struct Evaluator<'a> {
    problem: &'a Problem,
    cfg: &'a OptimizeConfig,
    evaluations: usize,
    audit: Audit,
}

impl Evaluator<'_> {
    fn worst(&self, kernel: &FidelityKernel, search: &SearchConfig) -> f64 {
        minimize_fidelity(kernel, search).gate_fidelity.powi(2)
    }

    /// Ceiling check for one point. The mean is an upper bound on the worst
    /// case, and the inner search bounds the minimum from above too, so a
    /// point is only reported after the full search confirms it.
    fn audit(
        &mut self,
        params: &[f64],
        kernel: &FidelityKernel,
        ceiling: Option<f64>,
        known: Option<f64>,
    ) {
        let Some(c) = ceiling else { return };
        self.audit.points += 1;
        let mean = kernel.mean_fidelity_squared();
        let upper = if mean - c <= CEILING_TOL {
            self.audit.cleared_by_mean += 1;
            mean
        } else {
            self.audit.searched += 1;
            let f2 = known.unwrap_or_else(|| self.worst(kernel, &self.cfg.inner));
            if f2 - c > CEILING_TOL {
                let full = self.worst(kernel, &self.cfg.full);
                if full - c > CEILING_TOL {
                    self.audit.violations.push(Violation {
                        f2: full,
                        ceiling: c,
                        parameters: params.to_vec(),
                    });
                }
                full
            } else {
                f2
            }
        };
        let excess = upper - c;
        self.audit.max_excess = Some(self.audit.max_excess.map_or(excess, |m| m.max(excess)));
    }

    fn prepare(&self, params: &[f64]) -> (FidelityKernel, Option<f64>) {
        let (u, xi) = self.problem.decode(params).expect("parameter count fixed");
        let kernel = FidelityKernel::from_parts(u.matrix(), xi.amplitudes());
        let ceiling = self.problem.ceiling_at(&u, &xi).expect("law matches");
        (kernel, ceiling)
    }

    fn mean_f2(&mut self, params: &[f64]) -> f64 {
        self.evaluations += 1;
        let (kernel, ceiling) = self.prepare(params);
        self.audit(params, &kernel, ceiling, None);
        kernel.mean_fidelity_squared()
    }

    fn worst_f2(&mut self, params: &[f64]) -> f64 {
        self.evaluations += 1;
        let (kernel, ceiling) = self.prepare(params);
        let f2 = self.worst(&kernel, &self.cfg.inner);
        self.audit(params, &kernel, ceiling, Some(f2));
        f2
    }
}

/// Multi-start maximization of `F^2` over commutant coefficients (and the
/// ancilla state when it is free).
///
/// The worst-case fidelity is zero on most of the parameter space, which
/// leaves a direct search nothing to climb. Each restart therefore first
/// maximizes the Haar-mean `F^2` (smooth, and an upper bound on the worst
/// case) and then refines the worst case itself. Every evaluated point in
/// both stages is audited against the ceiling.
///
/// Restart `k` draws its start from stream `k` of the seeded generator, so
/// adding restarts never changes earlier ones and the best value is
/// non-decreasing in the restart count.
pub fn optimize_fidelity(problem: &Problem, cfg: &OptimizeConfig) -> Result<OptimizationRun> {
    let dim = problem.parameter_count();
    let mut ev = Evaluator {
        problem,
        cfg,
        evaluations: 0,
        audit: Audit::default(),
    };
    let bounds = Some((-cfg.bound, cfg.bound));
    let mut trace = Vec::with_capacity(cfg.restarts);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for k in 0..cfg.restarts {
        let mut rng = sampling::rng(cfg.seed);
        rng.set_stream(k as u64);
        let start: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(-cfg.bound..cfg.bound))
            .collect();
        let before = ev.evaluations;
        let start_mean_f2 = ev.mean_f2(&start);
        let stage1 = nelder_mead(
            |x| -ev.mean_f2(x),
            &start,
            &NelderMeadConfig {
                initial_step: cfg.initial_step,
                ftol: 1e-13,
                xtol: 1e-9,
                max_evals: cfg.max_iter.max(dim + 2),
                bounds,
            },
        );
        let stage2 = nelder_mead(
            |x| -ev.worst_f2(x),
            &stage1.x,
            &NelderMeadConfig {
                initial_step: 0.05,
                ftol: 1e-12,
                xtol: 1e-9,
                max_evals: (cfg.refine_iter * 3 / 4).max(dim + 2),
                bounds,
            },
        );
        let polish = compass_search(
            |x| -ev.worst_f2(x),
            &stage2.x,
            &CompassConfig {
                initial_step: 1e-3,
                min_step: 1e-10,
                max_evals: (cfg.refine_iter / 4).max(1),
                bounds,
            },
        );
        let (point, search_f2) = if polish.value <= stage2.value {
            (polish.x, -polish.value)
        } else {
            (stage2.x, -stage2.value)
        };
        let (kernel, _) = ev.prepare(&point);
        let f2 = ev.worst(&kernel, &cfg.full);
        trace.push(RestartTrace {
            restart: k,
            start_mean_f2,
            mean_f2: -stage1.value,
            search_f2,
            f2,
            evaluations: ev.evaluations - before,
            converged: stage1.converged && (stage2.converged || polish.converged),
        });
        if best.as_ref().is_none_or(|(b, _)| f2 > *b) {
            best = Some((f2, point));
        }
    }
    let (best_f2, best_parameters) =
        best.ok_or_else(|| Error::arg("at least one restart required"))?;
    let (u, best_xi) = problem.decode(&best_parameters)?;
    let ceiling = problem.ceiling_at(&u, &best_xi)?;
    Ok(OptimizationRun {
        label: problem.label.clone(),
        ceiling_kind: problem.ceiling,
        ceiling,
        best_f2,
        gap: ceiling.map(|c| c - best_f2),
        best_parameters,
        best_xi,
        evaluations: ev.evaluations,
        audit: ev.audit,
        trace,
    })
}

/// A precise, non-disturbing model of `A` that conserves `law`, built when
/// `[A, L1] = 0`: `U = sum_m P_m ⊗ R_m ⊗ I` with `P_m` the spectral
/// projectors of `A` and `R_m = diag(w^{m j})` in an eigenbasis of `L2`
/// (`w = exp(2 pi i / d_P)`). The probe starts in the uniform superposition
/// of that eigenbasis, so the states `R_m phi` are orthonormal and the pointer
/// `M = sum_m a_m |R_m phi><R_m phi|` reads out `A` exactly.
#[derive(Clone, Debug)]
pub struct PositiveControl {
    pub model: IndirectMeasurementModel,
    pub conservation_residual: f64,
}

pub fn way_positive_control(law: &ConservationLaw, a: &Operator) -> Result<PositiveControl> {
    let spec = law.spec().clone();
    let dp = spec.probe_dim();
    let comm = commutator(a, law.l1())?;
    if comm.max_abs() > 1e-10 {
        return Err(Error::arg(format!(
            "observable does not commute with L1 (max |[A, L1]| = {:e})",
            comm.max_abs()
        )));
    }
    let spectrum = eig_hermitian(a)?;
    let m_count = spectrum.spaces.len();
    if m_count > dp {
        return Err(Error::arg(format!(
            "{m_count} distinct outcomes do not fit a probe of dimension {dp}"
        )));
    }
    let xi = StateVector::basis(spec.ancilla_dim(), 0);
    if m_count == 1 {
        let value = spectrum.spaces[0].value;
        let model = IndirectMeasurementModel::new(
            spec.clone(),
            StateVector::basis(dp, 0),
            Some(xi),
            Operator::identity(spec.dim()),
            Operator::identity(dp).scale_real(value),
            a.clone(),
        )?;
        let residual = conservation_residual(model.unitary(), law)?;
        return Ok(PositiveControl {
            model,
            conservation_residual: residual,
        });
    }

    let v = eig_hermitian(law.l2())?.eigenbasis();
    let phi_amps = &v * DVector::from_element(dp, C64::new(1.0 / (dp as f64).sqrt(), 0.0));
    let phi = StateVector::normalize(phi_amps)?;
    let rotation = |m: usize| -> DMatrix<C64> {
        let phases = DMatrix::from_diagonal(&DVector::from_fn(dp, |j, _| {
            C64::from_polar(1.0, 2.0 * PI * (m * j) as f64 / dp as f64)
        }));
        &v * phases * v.adjoint()
    };
    let mut u = DMatrix::<C64>::zeros(a.dim() * dp, a.dim() * dp);
    let mut pointer = DMatrix::<C64>::zeros(dp, dp);
    for (m, space) in spectrum.spaces.iter().enumerate() {
        let r = Operator::from_parts(rotation(m), false, true);
        u += tensor(&space.projector(), &r).matrix();
        let rphi = r.matrix() * phi.amplitudes();
        pointer += (&rphi * rphi.adjoint()) * C64::new(space.value, 0.0);
    }
    let u = spec.embed_group(&Operator::from_parts(u, false, true), 0, 1)?;
    let pointer = Operator::hermitian(hermitize(pointer))?;
    let model = IndirectMeasurementModel::new(spec, phi, Some(xi), u, pointer, a.clone())?;
    let residual = conservation_residual(model.unitary(), law)?;
    Ok(PositiveControl {
        model,
        conservation_residual: residual,
    })
}

fn hermitize(m: DMatrix<C64>) -> DMatrix<C64> {
    let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    let n = h.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            C64::new(h[(i, i)].re, 0.0)
        } else if i > j {
            h[(i, j)]
        } else {
            h[(j, i)].conj()
        }
    })
}

/// Family of conservation laws used by [`random_conserving_case`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawKind {
    /// `X` on every qubit.
    Pauli,
    /// Independent random Hermitian quantities (non-degenerate total).
    Generic,
    /// Random quantities with eigenvalues in `{-1, 0, 1}` (degenerate total,
    /// rich commutant).
    IntegerSpectrum,
}

/// One randomized (model, law, state) triple.
#[derive(Clone, Debug)]
pub struct RandomCase {
    pub seed: u64,
    pub qubits: usize,
    pub kind: LawKind,
    pub model: IndirectMeasurementModel,
    pub law: ConservationLaw,
    pub psi: StateVector,
}

/// Deterministic per seed: 2 to 4 qubits (object, probe and up to two
/// ancilla qubits), a law of each [`LawKind`], random `A`, `M`, `phi`, `xi`,
/// `psi`, and a conserving `U` of random interaction strength.
pub fn random_conserving_case(seed: u64) -> Result<RandomCase> {
    let qubits = 2 + (seed % 3) as usize;
    let kind = match (seed / 3) % 3 {
        0 => LawKind::Pauli,
        1 => LawKind::Generic,
        _ => LawKind::IntegerSpectrum,
    };
    let mut rng = sampling::rng(seed);
    let ancilla = vec![2; qubits - 2];
    let spec = HilbertSpec::tripartite(2, 2, &ancilla)?;
    let da = spec.ancilla_dim();
    let quantity = |dim: usize, rng: &mut Rng| -> Option<Operator> {
        if dim == 1 {
            return None;
        }
        Some(match kind {
            LawKind::Pauli => sum_x(dim.trailing_zeros() as usize),
            LawKind::Generic => random_hermitian(rng, dim, 1.0),
            LawKind::IntegerSpectrum => random_integer_spectrum(rng, dim, 1),
        })
    };
    let l1 = quantity(2, &mut rng).expect("qubit");
    let l2 = quantity(2, &mut rng).expect("qubit");
    let l3 = quantity(da, &mut rng);
    let law = ConservationLaw::new(spec.clone(), l1, l2, l3)?;
    let basis = commutant_basis(&law)?;
    let strength = rng.random_range(0.1..2.0);
    let coeffs = sample_coefficients(&basis, &mut rng, strength);
    let u = basis.unitary(&coeffs)?;
    let a = random_hermitian(&mut rng, 2, 1.0);
    let m = random_hermitian(&mut rng, 2, 1.0);
    let phi = random_state(&mut rng, 2);
    let xi = random_state(&mut rng, da);
    let psi = random_state(&mut rng, 2);
    let model = IndirectMeasurementModel::new(spec, phi, Some(xi), u, m, a)?;
    Ok(RandomCase {
        seed,
        qubits,
        kind,
        model,
        law,
        psi,
    })
}

/// `||L1|| = ||L2|| = 1` and `||L3|| = n - 2` for a spin scenario.
pub fn spin_norms(scenario: &SpinScenario) -> [f64; 3] {
    [
        operator_norm(scenario.law.l1()),
        operator_norm(scenario.law.l2()),
        operator_norm(scenario.law.l3()),
    ]
}

/// True when every eigenvalue of `x` is within [`CLUSTER_TOL`] of an integer.
pub fn has_integer_spectrum(x: &Operator) -> Result<bool> {
    Ok(eig_hermitian(x)?
        .eigenvalues
        .iter()
        .all(|v| (v - v.round()).abs() <= CLUSTER_TOL))
}
