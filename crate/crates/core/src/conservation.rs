//! Additive conservation laws and their commutants.
//!
//! A law assigns a Hermitian quantity to the object (`L1`), the probe (`L2`)
//! and the ancilla (`L3`); the conserved total is
//! `L = L1 ⊗ I ⊗ I + I ⊗ L2 ⊗ I + I ⊗ I ⊗ L3`. A unitary conserves the law
//! when `U^dag L U = L`.
//!
//! Conserving unitaries are produced constructively as `exp(-i H)` with `H`
//! in the commutant of `L`. The commutant is block diagonal in an eigenbasis
//! of `L`; an eigenspace of dimension `d` contributes `d^2` Hermitian
//! generators, orthonormal under the trace inner product.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{check_dims, Operator, C64};
use crate::sampling::{self, normal, Rng};
use crate::space::HilbertSpec;
use crate::spectral::{eig_hermitian, eigh, exp_from_eigh, operator_norm};

/// Residual below which a unitary counts as conserving.
pub const CONSERVATION_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "LawRepr", into = "LawRepr")]
pub struct ConservationLaw {
    spec: HilbertSpec,
    l1: Operator,
    l2: Operator,
    l3: Operator,
    total: Operator,
}

impl ConservationLaw {
    /// `l3 = None` means the zero quantity on the ancilla.
    pub fn new(
        spec: HilbertSpec,
        l1: Operator,
        l2: Operator,
        l3: Option<Operator>,
    ) -> Result<Self> {
        spec.require_roles()?;
        let l3 = l3.unwrap_or_else(|| Operator::zeros(spec.ancilla_dim()));
        check_dims(spec.object_dim(), l1.dim())?;
        check_dims(spec.probe_dim(), l2.dim())?;
        check_dims(spec.ancilla_dim(), l3.dim())?;
        let l1 = Operator::hermitian(l1.into_matrix())?;
        let l2 = Operator::hermitian(l2.into_matrix())?;
        let l3 = Operator::hermitian(l3.into_matrix())?;
        let total =
            &(&spec.embed_object(&l1)? + &spec.embed_probe(&l2)?) + &spec.embed_ancilla(&l3)?;
        Ok(Self {
            spec,
            l1,
            l2,
            l3,
            total,
        })
    }

    pub fn spec(&self) -> &HilbertSpec {
        &self.spec
    }

    pub fn l1(&self) -> &Operator {
        &self.l1
    }

    pub fn l2(&self) -> &Operator {
        &self.l2
    }

    pub fn l3(&self) -> &Operator {
        &self.l3
    }

    /// `L1 ⊗ I ⊗ I + I ⊗ L2 ⊗ I + I ⊗ I ⊗ L3`.
    pub fn total(&self) -> &Operator {
        &self.total
    }

    /// `L_k(0)` embedded in the full space, `k` in `1..=3`.
    pub fn embedded(&self, k: usize) -> Result<Operator> {
        match k {
            1 => self.spec.embed_object(&self.l1),
            2 => self.spec.embed_probe(&self.l2),
            3 => self.spec.embed_ancilla(&self.l3),
            _ => Err(Error::arg(format!("no conserved quantity L{k}"))),
        }
    }
}

/// `||U^dag L U - L||` in operator norm.
pub fn conservation_residual(u: &Operator, law: &ConservationLaw) -> Result<f64> {
    check_dims(law.spec().dim(), u.dim())?;
    let evolved = law.total().conjugate_by(u)?;
    let diff = &evolved - law.total();
    Ok(operator_norm(&Operator::from_parts(
        diff.into_matrix(),
        true,
        false,
    )))
}

/// Fails with [`Error::ConservationViolated`] when the residual exceeds
/// [`CONSERVATION_TOL`]; returns the residual otherwise.
pub fn require_conserving(u: &Operator, law: &ConservationLaw) -> Result<f64> {
    let residual = conservation_residual(u, law)?;
    if residual > CONSERVATION_TOL {
        return Err(Error::ConservationViolated {
            residual,
            tol: CONSERVATION_TOL,
        });
    }
    Ok(residual)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Block {
    pub value: f64,
    pub offset: usize,
    pub size: usize,
}

impl Block {
    fn generator_count(&self) -> usize {
        self.size * self.size
    }
}

/// Orthonormal Hermitian basis of `{H : [H, L] = 0}`.
///
/// Generators are not stored; they are formed on demand from the eigenbasis
/// of `L`. Within a block of size `d` the order is: `d` diagonal units, then
/// for each pair `a < b` the symmetric and antisymmetric combinations.
#[derive(Clone, Debug)]
pub struct CommutantBasis {
    eigenbasis: DMatrix<C64>,
    blocks: Vec<Block>,
}

/// Builds the commutant basis of the law's total conserved quantity.
pub fn commutant_basis(law: &ConservationLaw) -> Result<CommutantBasis> {
    commutant_of(law.total())
}

/// Commutant basis of an arbitrary Hermitian operator.
pub fn commutant_of(l_tot: &Operator) -> Result<CommutantBasis> {
    let spectrum = eig_hermitian(l_tot)?;
    let eigenbasis = spectrum.eigenbasis();
    let mut blocks = Vec::with_capacity(spectrum.spaces.len());
    let mut offset = 0;
    for space in &spectrum.spaces {
        blocks.push(Block {
            value: space.value,
            offset,
            size: space.multiplicity(),
        });
        offset += space.multiplicity();
    }
    Ok(CommutantBasis { eigenbasis, blocks })
}

impl CommutantBasis {
    pub fn dim(&self) -> usize {
        self.eigenbasis.nrows()
    }

    /// Number of generators, `sum_b d_b^2`.
    pub fn len(&self) -> usize {
        self.blocks.iter().map(Block::generator_count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Eigenvalue to eigenspace dimension.
    pub fn block_structure(&self) -> Vec<(f64, usize)> {
        self.blocks.iter().map(|b| (b.value, b.size)).collect()
    }

    /// Unitary whose columns are the eigenvectors of `L`, block by block.
    pub fn eigenbasis(&self) -> &DMatrix<C64> {
        &self.eigenbasis
    }

    /// The `k`-th generator as a full-space Hermitian operator.
    pub fn generator(&self, k: usize) -> Operator {
        assert!(k < self.len(), "generator index {k} out of range");
        let mut coeffs = vec![0.0; self.len()];
        coeffs[k] = 1.0;
        self.hamiltonian(&coeffs).expect("length matches")
    }

    pub fn generators(&self) -> impl Iterator<Item = Operator> + '_ {
        (0..self.len()).map(|k| self.generator(k))
    }

    /// Block Hermitian matrices (in eigenbasis coordinates) of `sum_k c_k B_k`.
    fn block_matrices(&self, coeffs: &[f64]) -> Result<Vec<DMatrix<C64>>> {
        if coeffs.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: coeffs.len(),
            });
        }
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let mut out = Vec::with_capacity(self.blocks.len());
        let mut k = 0;
        for block in &self.blocks {
            let d = block.size;
            let mut h = DMatrix::<C64>::zeros(d, d);
            for a in 0..d {
                h[(a, a)] = C64::new(coeffs[k], 0.0);
                k += 1;
            }
            for a in 0..d {
                for b in a + 1..d {
                    let (s, t) = (coeffs[k], coeffs[k + 1]);
                    k += 2;
                    h[(a, b)] = C64::new(s * r, -t * r);
                    h[(b, a)] = C64::new(s * r, t * r);
                }
            }
            out.push(h);
        }
        Ok(out)
    }

    fn lift(&self, blocks: &[DMatrix<C64>]) -> DMatrix<C64> {
        let n = self.dim();
        let mut inner = DMatrix::<C64>::zeros(n, n);
        for (block, m) in self.blocks.iter().zip(blocks) {
            inner
                .view_mut((block.offset, block.offset), (block.size, block.size))
                .copy_from(m);
        }
        &self.eigenbasis * inner * self.eigenbasis.adjoint()
    }

    /// `H = sum_k c_k B_k`.
    pub fn hamiltonian(&self, coeffs: &[f64]) -> Result<Operator> {
        let blocks = self.block_matrices(coeffs)?;
        let mat = self.lift(&blocks);
        Ok(Operator::from_parts(hermitize(mat), true, false))
    }

    /// `exp(-i sum_k c_k B_k)`, exponentiated block by block.
    pub fn unitary(&self, coeffs: &[f64]) -> Result<Operator> {
        let blocks = self.block_matrices(coeffs)?;
        let exps: Vec<DMatrix<C64>> = blocks
            .iter()
            .map(|h| {
                let (values, vectors) = eigh(h);
                exp_from_eigh(&values, &vectors, 1.0)
            })
            .collect();
        Ok(Operator::from_parts(self.lift(&exps), false, true))
    }

    /// Trace-inner-product coordinates `c_k = Tr(B_k H)` of a Hermitian
    /// operator, together with the norm of the part of `H` outside the
    /// commutant (Frobenius).
    pub fn project(&self, h: &Operator) -> Result<(Vec<f64>, f64)> {
        check_dims(self.dim(), h.dim())?;
        let inner = self.eigenbasis.adjoint() * h.matrix() * &self.eigenbasis;
        let s2 = std::f64::consts::SQRT_2;
        let mut coeffs = Vec::with_capacity(self.len());
        let mut kept = DMatrix::<C64>::zeros(self.dim(), self.dim());
        for block in &self.blocks {
            let o = block.offset;
            for a in 0..block.size {
                coeffs.push(inner[(o + a, o + a)].re);
            }
            for a in 0..block.size {
                for b in a + 1..block.size {
                    let z = inner[(o + a, o + b)];
                    coeffs.push(s2 * z.re);
                    coeffs.push(-s2 * z.im);
                }
            }
            for a in 0..block.size {
                for b in 0..block.size {
                    kept[(o + a, o + b)] = inner[(o + a, o + b)];
                }
            }
        }
        let outside = (inner - kept).norm();
        Ok((coeffs, outside))
    }
}

fn hermitize(m: DMatrix<C64>) -> DMatrix<C64> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            C64::new(m[(i, i)].re, 0.0)
        } else if i > j {
            m[(i, j)]
        } else {
            m[(j, i)].conj()
        }
    })
}

/// `exp(-i sum_k c_k B_k)`.
pub fn conserving_unitary(basis: &CommutantBasis, coeffs: &[f64]) -> Result<Operator> {
    basis.unitary(coeffs)
}

/// Standard-normal coefficients times `strength`.
pub fn sample_coefficients(basis: &CommutantBasis, rng: &mut Rng, strength: f64) -> Vec<f64> {
    (0..basis.len()).map(|_| strength * normal(rng)).collect()
}

/// Deterministic per seed: unit-scale standard-normal coefficients.
pub fn sample_conserving_unitary(basis: &CommutantBasis, seed: u64) -> Operator {
    let coeffs = sample_coefficients(basis, &mut sampling::rng(seed), 1.0);
    basis.unitary(&coeffs).expect("coefficient count matches")
}

#[derive(Serialize, Deserialize)]
struct LawRepr {
    spec: HilbertSpec,
    l1: Operator,
    l2: Operator,
    l3: Operator,
}

impl From<ConservationLaw> for LawRepr {
    fn from(law: ConservationLaw) -> Self {
        LawRepr {
            spec: law.spec,
            l1: law.l1,
            l2: law.l2,
            l3: law.l3,
        }
    }
}

impl TryFrom<LawRepr> for ConservationLaw {
    type Error = Error;

    fn try_from(r: LawRepr) -> Result<Self> {
        ConservationLaw::new(r.spec, r.l1, r.l2, Some(r.l3))
    }
}
