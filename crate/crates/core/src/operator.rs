//! Dense complex operators on finite-dimensional Hilbert spaces.
//!
//! An [`Operator`] is a square complex matrix together with two advisory
//! flags (Hermitian, unitary). The flags are caches: they are set by the
//! constructors that verify them and propagated by operations that preserve
//! them, and can always be re-checked with [`Operator::hermitian_deviation`]
//! and [`Operator::unitary_deviation`].

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::StateVector;

pub type C64 = Complex64;

/// Tolerance backing the Hermitian and unitary flags.
pub const FLAG_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "OperatorRepr", into = "OperatorRepr")]
pub struct Operator {
    mat: DMatrix<C64>,
    hermitian: bool,
    unitary: bool,
}

impl Operator {
    /// Wraps a square matrix. Flags start cleared.
    pub fn new(mat: DMatrix<C64>) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::NotSquare {
                rows: mat.nrows(),
                cols: mat.ncols(),
            });
        }
        if mat.nrows() == 0 {
            return Err(Error::arg("operator dimension must be positive"));
        }
        Ok(Self {
            mat,
            hermitian: false,
            unitary: false,
        })
    }

    /// Wraps a square matrix and sets whichever flags hold within [`FLAG_TOL`].
    pub fn detect(mat: DMatrix<C64>) -> Result<Self> {
        let mut op = Self::new(mat)?;
        op.hermitian = op.hermitian_deviation() <= FLAG_TOL;
        op.unitary = op.unitary_deviation() <= FLAG_TOL;
        Ok(op)
    }

    pub fn hermitian(mat: DMatrix<C64>) -> Result<Self> {
        let mut op = Self::new(mat)?;
        let deviation = op.hermitian_deviation();
        if deviation > FLAG_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        op.hermitian = true;
        Ok(op)
    }

    pub fn unitary(mat: DMatrix<C64>) -> Result<Self> {
        let mut op = Self::new(mat)?;
        let deviation = op.unitary_deviation();
        if deviation > FLAG_TOL {
            return Err(Error::NotUnitary { deviation });
        }
        op.unitary = true;
        op.hermitian = op.hermitian_deviation() <= FLAG_TOL;
        Ok(op)
    }

    /// Builds a Hermitian operator from real row-major entries.
    pub fn from_real(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        Self::detect(DMatrix::from_row_iterator(
            dim,
            dim,
            entries.iter().map(|&x| C64::new(x, 0.0)),
        ))
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mat: DMatrix::identity(dim, dim),
            hermitian: true,
            unitary: true,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            mat: DMatrix::zeros(dim, dim),
            hermitian: true,
            unitary: false,
        }
    }

    /// Real diagonal operator.
    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let mut mat = DMatrix::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            mat[(i, i)] = C64::new(v, 0.0);
        }
        let unitary = values.iter().all(|v| (v.abs() - 1.0).abs() <= FLAG_TOL);
        Self {
            mat,
            hermitian: true,
            unitary,
        }
    }

    /// `|a><b|` for basis indices `a`, `b`.
    pub fn ket_bra(dim: usize, a: usize, b: usize) -> Self {
        let mut mat = DMatrix::zeros(dim, dim);
        mat[(a, b)] = C64::new(1.0, 0.0);
        Self {
            mat,
            hermitian: a == b,
            unitary: false,
        }
    }

    /// `|s><s|`.
    pub fn projector(s: &StateVector) -> Self {
        let v = s.amplitudes();
        Self {
            mat: v * v.adjoint(),
            hermitian: true,
            unitary: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.mat[(row, col)]
    }

    /// Cached Hermitian flag.
    pub fn flagged_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Cached unitary flag.
    pub fn flagged_unitary(&self) -> bool {
        self.unitary
    }

    /// `max |X - X^dag|` over entries.
    pub fn hermitian_deviation(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// `max |U U^dag - I|` over entries.
    pub fn unitary_deviation(&self) -> f64 {
        let prod = &self.mat * self.mat.adjoint();
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((prod[(i, j)] - C64::new(target, 0.0)).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitary_deviation() <= tol
    }

    /// Fails with [`Error::NotHermitian`] unless the flag is set or the
    /// deviation is within [`FLAG_TOL`] scaled by the largest entry.
    pub fn require_hermitian(&self) -> Result<()> {
        if self.hermitian {
            return Ok(());
        }
        let deviation = self.hermitian_deviation();
        if deviation <= FLAG_TOL * self.max_abs().max(1.0) {
            Ok(())
        } else {
            Err(Error::NotHermitian { deviation })
        }
    }

    pub fn require_unitary(&self, tol: f64) -> Result<()> {
        if self.unitary {
            return Ok(());
        }
        let deviation = self.unitary_deviation();
        if deviation <= tol {
            Ok(())
        } else {
            Err(Error::NotUnitary { deviation })
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.mat.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Largest entrywise difference; dimensions must agree.
    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        assert_eq!(self.dim(), other.dim(), "operator dimension mismatch");
        self.mat
            .iter()
            .zip(other.mat.iter())
            .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }

    pub fn dagger(&self) -> Self {
        Self {
            mat: self.mat.adjoint(),
            hermitian: self.hermitian,
            unitary: self.unitary,
        }
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            mat: &self.mat * c,
            hermitian: self.hermitian && c.im == 0.0,
            unitary: self.unitary && (c.norm() - 1.0).abs() <= FLAG_TOL,
        }
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    /// Heisenberg-picture conjugation `U^dag X U`.
    pub fn conjugate_by(&self, u: &Operator) -> Result<Self> {
        check_dims(self.dim(), u.dim())?;
        Ok(Self {
            mat: u.mat.adjoint() * &self.mat * &u.mat,
            hermitian: self.hermitian && u.unitary,
            unitary: self.unitary && u.unitary,
        })
    }

    /// `X |s>` as a raw vector.
    pub fn apply(&self, s: &StateVector) -> Result<nalgebra::DVector<C64>> {
        check_dims(self.dim(), s.dim())?;
        Ok(&self.mat * s.amplitudes())
    }

    /// Hermitian and unitary flags, in that order.
    pub fn flags(&self) -> (bool, bool) {
        (self.hermitian, self.unitary)
    }

    pub(crate) fn from_parts(mat: DMatrix<C64>, hermitian: bool, unitary: bool) -> Self {
        Self {
            mat,
            hermitian,
            unitary,
        }
    }
}

impl PartialEq for Operator {
    fn eq(&self, other: &Self) -> bool {
        self.mat == other.mat
    }
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator {
            mat: &self.mat + &rhs.mat,
            hermitian: self.hermitian && rhs.hermitian,
            unitary: false,
        }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator {
            mat: &self.mat - &rhs.mat,
            hermitian: self.hermitian && rhs.hermitian,
            unitary: false,
        }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator {
            mat: &self.mat * &rhs.mat,
            hermitian: false,
            unitary: self.unitary && rhs.unitary,
        }
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator {
            mat: -&self.mat,
            hermitian: self.hermitian,
            unitary: self.unitary,
        }
    }
}

/// Kronecker product `a ⊗ b`; flags propagate conjunctively.
pub fn tensor(a: &Operator, b: &Operator) -> Operator {
    Operator {
        mat: a.mat.kronecker(&b.mat),
        hermitian: a.hermitian && b.hermitian,
        unitary: a.unitary && b.unitary,
    }
}

/// Left-to-right Kronecker product of a non-empty list.
pub fn tensor_all(ops: &[&Operator]) -> Operator {
    let (first, rest) = ops
        .split_first()
        .expect("tensor_all needs at least one factor");
    rest.iter()
        .fold((*first).clone(), |acc, op| tensor(&acc, op))
}

/// `xy - yx`.
pub fn commutator(x: &Operator, y: &Operator) -> Result<Operator> {
    check_dims(x.dim(), y.dim())?;
    Ok(Operator::from_parts(
        &x.mat * &y.mat - &y.mat * &x.mat,
        false,
        false,
    ))
}

/// `<s|x|s>`.
pub fn expectation(x: &Operator, s: &StateVector) -> Result<C64> {
    check_dims(x.dim(), s.dim())?;
    let v = s.amplitudes();
    Ok(v.dotc(&(&x.mat * v)))
}

/// Standard deviation `sqrt(<x^2> - <x>^2)`, evaluated as `||(x - <x>) s||`
/// so that it is nonnegative by construction.
pub fn std_dev(x: &Operator, s: &StateVector) -> Result<f64> {
    x.require_hermitian()?;
    check_dims(x.dim(), s.dim())?;
    let v = s.amplitudes();
    let xv = &x.mat * v;
    let mean = v.dotc(&xv).re;
    Ok((xv - v * C64::new(mean, 0.0)).norm())
}

// Serialized form: {"dim": d, "entries": [[[re, im], ...], ...]} row-major.
#[derive(Serialize, Deserialize)]
struct OperatorRepr {
    dim: usize,
    entries: Vec<Vec<[f64; 2]>>,
}

impl From<Operator> for OperatorRepr {
    fn from(op: Operator) -> Self {
        let dim = op.dim();
        let entries = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| {
                        let z = op.mat[(i, j)];
                        [z.re, z.im]
                    })
                    .collect()
            })
            .collect();
        OperatorRepr { dim, entries }
    }
}

impl TryFrom<OperatorRepr> for Operator {
    type Error = Error;

    fn try_from(repr: OperatorRepr) -> Result<Self> {
        let dim = repr.dim;
        check_dims(dim, repr.entries.len())?;
        for row in &repr.entries {
            check_dims(dim, row.len())?;
        }
        let mat = DMatrix::from_fn(dim, dim, |i, j| {
            let [re, im] = repr.entries[i][j];
            C64::new(re, im)
        });
        Operator::detect(mat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{pauli, Pauli};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn tensor_identities() {
        let i2 = Operator::identity(2);
        assert_eq!(tensor(&i2, &i2), Operator::identity(4));

        let z = pauli(Pauli::Z);
        assert_eq!(tensor(&z, &i2), Operator::diagonal(&[1.0, 1.0, -1.0, -1.0]));
    }

    #[test]
    fn tensor_xx_corner_entry() {
        // X ⊗ X = antidiagonal ones on 4x4.
        let x = pauli(Pauli::X);
        let xx = tensor(&x, &x);
        assert_eq!(xx.entry(0, 3), c(1.0, 0.0));
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i + j == 3 { 1.0 } else { 0.0 };
                assert_eq!(xx.entry(i, j), c(expected, 0.0));
            }
        }
        assert!(xx.flagged_hermitian() && xx.flagged_unitary());
    }

    #[test]
    fn tensor_flags_are_conjunctive() {
        let x = pauli(Pauli::X);
        let n = Operator::diagonal(&[0.0, 1.0]);
        let t = tensor(&x, &n);
        assert!(t.flagged_hermitian());
        assert!(!t.flagged_unitary());
    }

    #[test]
    fn commutators_of_paulis() {
        let (x, y, z) = (pauli(Pauli::X), pauli(Pauli::Y), pauli(Pauli::Z));
        let two_i = c(0.0, 2.0);
        assert_eq!(commutator(&z, &x).unwrap(), y.scale(two_i));
        assert_eq!(commutator(&x, &y).unwrap(), z.scale(two_i));
        assert_eq!(
            commutator(&Operator::identity(2), &x).unwrap(),
            Operator::zeros(2)
        );
        assert!(matches!(
            commutator(&x, &Operator::identity(4)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn commutator_of_hermitians_is_anti_hermitian() {
        let a = Operator::from_real(3, &[1.0, 2.0, 0.0, 2.0, -1.0, 0.5, 0.0, 0.5, 3.0]).unwrap();
        let b = Operator::from_real(3, &[0.0, 1.0, 1.0, 1.0, 2.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let k = commutator(&a, &b).unwrap();
        assert!((&k + &k.dagger()).max_abs() < 1e-14);
    }

    #[test]
    fn expectations() {
        let (x, y, z) = (pauli(Pauli::X), pauli(Pauli::Y), pauli(Pauli::Z));
        let zero = StateVector::basis(2, 0);
        assert_eq!(expectation(&z, &zero).unwrap(), c(1.0, 0.0));
        assert_eq!(expectation(&x, &zero).unwrap(), c(0.0, 0.0));

        // (|0> + i|1>)/sqrt2 is the +1 eigenvector of Y = i|1><0| - i|0><1|.
        let plus_i = StateVector::from_amplitudes(&[c(1.0, 0.0), c(0.0, 1.0)]).unwrap();
        let e = expectation(&y, &plus_i).unwrap();
        assert!((e - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn std_devs() {
        let z = pauli(Pauli::Z);
        let zero = StateVector::basis(2, 0);
        let plus = StateVector::from_amplitudes(&[c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert_eq!(std_dev(&z, &zero).unwrap(), 0.0);
        assert!((std_dev(&z, &plus).unwrap() - 1.0).abs() < 1e-15);
        assert!(std_dev(&Operator::identity(2), &plus).unwrap() < 1e-15);

        let not_hermitian = Operator::ket_bra(2, 0, 1);
        assert!(matches!(
            std_dev(&not_hermitian, &zero),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn constructors_validate() {
        assert!(matches!(
            Operator::new(DMatrix::zeros(2, 3)),
            Err(Error::NotSquare { .. })
        ));
        assert!(Operator::hermitian(Operator::ket_bra(2, 0, 1).into_matrix()).is_err());
        assert!(Operator::unitary(Operator::diagonal(&[1.0, 0.5]).into_matrix()).is_err());
        let y = pauli(Pauli::Y);
        let detected = Operator::detect(y.matrix().clone()).unwrap();
        assert_eq!(detected.flags(), (true, true));
    }

    #[test]
    fn json_shape() {
        let y = pauli(Pauli::Y);
        let text = serde_json::to_string(&y).unwrap();
        assert_eq!(
            text,
            r#"{"dim":2,"entries":[[[0.0,0.0],[0.0,-1.0]],[[0.0,1.0],[0.0,0.0]]]}"#
        );
        let bad = r#"{"dim":2,"entries":[[[0.0,0.0]],[[0.0,1.0],[0.0,0.0]]]}"#;
        assert!(serde_json::from_str::<Operator>(bad).is_err());
    }
}
