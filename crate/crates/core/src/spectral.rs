//! Hermitian eigendecomposition and the functions built on it.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::Result;
use crate::operator::{Operator, C64};

/// Absolute gap below which neighbouring eigenvalues are merged.
pub const CLUSTER_TOL: f64 = 1e-8;

/// One eigenspace: the (cluster-averaged) eigenvalue and an orthonormal basis
/// stored as the columns of `vectors`.
#[derive(Clone, Debug)]
pub struct EigenSpace {
    pub value: f64,
    pub vectors: DMatrix<C64>,
}

impl EigenSpace {
    pub fn multiplicity(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn projector(&self) -> Operator {
        Operator::from_parts(&self.vectors * self.vectors.adjoint(), true, false)
    }
}

/// Spectral decomposition with degenerate eigenvalues merged.
#[derive(Clone, Debug)]
pub struct Spectrum {
    /// All eigenvalues with multiplicity, ascending.
    pub eigenvalues: Vec<f64>,
    /// Eigenspaces in ascending order of eigenvalue.
    pub spaces: Vec<EigenSpace>,
}

impl Spectrum {
    /// Distinct (clustered) eigenvalues.
    pub fn distinct_values(&self) -> Vec<f64> {
        self.spaces.iter().map(|s| s.value).collect()
    }

    pub fn projectors(&self) -> Vec<Operator> {
        self.spaces.iter().map(EigenSpace::projector).collect()
    }

    /// All eigenvectors as columns, ordered like `eigenvalues`.
    pub fn eigenbasis(&self) -> DMatrix<C64> {
        let dim = self.eigenvalues.len();
        let mut basis = DMatrix::zeros(dim, dim);
        let mut col = 0;
        for space in &self.spaces {
            for k in 0..space.multiplicity() {
                basis.set_column(col, &space.vectors.column(k));
                col += 1;
            }
        }
        basis
    }

    /// `sum_k f(lambda_k) |v_k><v_k|` over raw eigenpairs.
    pub fn apply_fn(&self, f: impl Fn(f64) -> C64) -> DMatrix<C64> {
        let basis = self.eigenbasis();
        let weights = DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().map(|&l| f(l)),
        );
        let scaled = DMatrix::from_fn(basis.nrows(), basis.ncols(), |i, j| {
            basis[(i, j)] * weights[j]
        });
        scaled * basis.adjoint()
    }
}

/// Raw ascending eigenpairs of a Hermitian matrix (no clustering).
pub(crate) fn eigh(mat: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = SymmetricEigen::new(mat.clone());
    let n = mat.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Eigendecomposition of a Hermitian operator, clustering eigenvalues whose
/// consecutive gaps are at most [`CLUSTER_TOL`].
pub fn eig_hermitian(x: &Operator) -> Result<Spectrum> {
    x.require_hermitian()?;
    Ok(cluster(eigh(x.matrix()), CLUSTER_TOL))
}

pub(crate) fn cluster((values, vectors): (Vec<f64>, DMatrix<C64>), tol: f64) -> Spectrum {
    let n = values.len();
    let mut spaces = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[end] - values[end - 1] <= tol {
            end += 1;
        }
        let value = values[start..end].iter().sum::<f64>() / (end - start) as f64;
        spaces.push(EigenSpace {
            value,
            vectors: vectors.columns(start, end - start).into_owned(),
        });
        start = end;
    }
    Spectrum {
        eigenvalues: values,
        spaces,
    }
}

/// `exp(-i t h)` for Hermitian `h`, via its eigendecomposition.
pub fn expm_skew(h: &Operator, t: f64) -> Result<Operator> {
    h.require_hermitian()?;
    let (values, vectors) = eigh(h.matrix());
    Ok(Operator::from_parts(
        exp_from_eigh(&values, &vectors, t),
        false,
        true,
    ))
}

pub(crate) fn exp_from_eigh(values: &[f64], vectors: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let n = values.len();
    let phases: Vec<C64> = values
        .iter()
        .map(|&l| C64::from_polar(1.0, -t * l))
        .collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| vectors[(i, j)] * phases[j]);
    scaled * vectors.adjoint()
}

/// Largest singular value. Hermitian-flagged operators use the spectrum.
pub fn operator_norm(x: &Operator) -> f64 {
    if x.flagged_hermitian() {
        let (values, _) = eigh(x.matrix());
        return values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    }
    x.matrix()
        .clone()
        .singular_values()
        .iter()
        .fold(0.0f64, |m, &v| m.max(v))
}
