//! Tensor-product structure of the composite Hilbert space.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{check_dims, tensor_all, Operator, C64};

/// Which factors play the object, probe and ancilla parts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roles {
    pub object: usize,
    pub probe: usize,
    pub ancilla: Vec<usize>,
}

/// Ordered subsystem dimensions, first factor most significant in the
/// Kronecker ordering.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr")]
pub struct HilbertSpec {
    factor_dims: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    roles: Option<Roles>,
}

#[derive(Deserialize)]
struct SpecRepr {
    factor_dims: Vec<usize>,
    #[serde(default)]
    roles: Option<Roles>,
}

impl TryFrom<SpecRepr> for HilbertSpec {
    type Error = Error;

    fn try_from(repr: SpecRepr) -> Result<Self> {
        let spec = HilbertSpec::new(repr.factor_dims)?;
        match repr.roles {
            Some(roles) => spec.with_roles(roles),
            None => Ok(spec),
        }
    }
}

impl HilbertSpec {
    pub fn new(factor_dims: Vec<usize>) -> Result<Self> {
        if factor_dims.is_empty() || factor_dims.contains(&0) {
            return Err(Error::arg(format!(
                "factor dimensions must be a non-empty list of positive integers, got {factor_dims:?}"
            )));
        }
        Ok(Self {
            factor_dims,
            roles: None,
        })
    }

    /// Object ⊗ probe ⊗ ancilla factors. An empty ancilla list is modeled as
    /// a single dimension-1 factor.
    pub fn tripartite(object: usize, probe: usize, ancilla: &[usize]) -> Result<Self> {
        let mut dims = vec![object, probe];
        if ancilla.is_empty() {
            dims.push(1);
        } else {
            dims.extend_from_slice(ancilla);
        }
        let n = dims.len();
        Self::new(dims)?.with_roles(Roles {
            object: 0,
            probe: 1,
            ancilla: (2..n).collect(),
        })
    }

    /// Attaches roles. Only the layout `object = 0, probe = 1, ancilla = 2..`
    /// is supported.
    pub fn with_roles(mut self, roles: Roles) -> Result<Self> {
        let n = self.factor_dims.len();
        let expected: Vec<usize> = (2..n).collect();
        if roles.object != 0 || roles.probe != 1 || roles.ancilla != expected || n < 3 {
            return Err(Error::arg(format!(
                "unsupported role layout {roles:?} for {n} factors; expected object=0, probe=1, ancilla=2..{n}"
            )));
        }
        self.roles = Some(roles);
        Ok(self)
    }

    pub fn factor_dims(&self) -> &[usize] {
        &self.factor_dims
    }

    pub fn roles(&self) -> Option<&Roles> {
        self.roles.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.factor_dims.iter().product()
    }

    pub fn num_factors(&self) -> usize {
        self.factor_dims.len()
    }

    pub fn require_roles(&self) -> Result<&Roles> {
        self.roles
            .as_ref()
            .ok_or_else(|| Error::arg("Hilbert space has no object/probe/ancilla roles"))
    }

    pub fn object_dim(&self) -> usize {
        self.factor_dims[0]
    }

    pub fn probe_dim(&self) -> usize {
        self.factor_dims[1]
    }

    /// Product of the ancilla factor dimensions (1 when absent).
    pub fn ancilla_dim(&self) -> usize {
        self.factor_dims.iter().skip(2).product()
    }

    /// Embeds `op`, acting on the contiguous factor group `first..=last`,
    /// into the full space.
    pub fn embed_group(&self, op: &Operator, first: usize, last: usize) -> Result<Operator> {
        if first > last || last >= self.factor_dims.len() {
            return Err(Error::arg(format!(
                "factor group {first}..={last} out of range"
            )));
        }
        let group: usize = self.factor_dims[first..=last].iter().product();
        check_dims(group, op.dim())?;
        let before: usize = self.factor_dims[..first].iter().product();
        let after: usize = self.factor_dims[last + 1..].iter().product();
        let (left, right) = (Operator::identity(before), Operator::identity(after));
        Ok(tensor_all(&[&left, op, &right]))
    }

    pub fn embed(&self, op: &Operator, factor: usize) -> Result<Operator> {
        self.embed_group(op, factor, factor)
    }

    pub fn embed_object(&self, op: &Operator) -> Result<Operator> {
        self.embed(op, 0)
    }

    pub fn embed_probe(&self, op: &Operator) -> Result<Operator> {
        self.embed(op, 1)
    }

    pub fn embed_ancilla(&self, op: &Operator) -> Result<Operator> {
        self.embed_group(op, 2, self.factor_dims.len() - 1)
    }
}

/// Partial trace keeping the listed factors (in their original order) and
/// tracing out the rest.
pub fn partial_trace(rho: &Operator, spec: &HilbertSpec, keep: &[usize]) -> Result<Operator> {
    check_dims(spec.dim(), rho.dim())?;
    let n = spec.num_factors();
    if keep.is_empty() {
        return Err(Error::arg("partial trace needs at least one kept factor"));
    }
    let mut kept = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.len() != keep.len() || kept.iter().any(|&k| k >= n) {
        return Err(Error::arg(format!(
            "keep set {keep:?} invalid for {n} factors"
        )));
    }
    let traced: Vec<usize> = (0..n).filter(|k| !kept.contains(k)).collect();

    let dims = spec.factor_dims();
    let mut strides = vec![1usize; n];
    for k in (0..n.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let offsets = |factors: &[usize]| -> Vec<usize> {
        let mut out = vec![0usize];
        for &f in factors {
            let stride = strides[f];
            out = out
                .iter()
                .flat_map(|&base| (0..dims[f]).map(move |digit| base + digit * stride))
                .collect();
        }
        out
    };
    let keep_off = offsets(&kept);
    let trace_off = offsets(&traced);

    let m = rho.matrix();
    let out_dim = keep_off.len();
    let mat = DMatrix::from_fn(out_dim, out_dim, |r, c| {
        trace_off
            .iter()
            .map(|&t| m[(keep_off[r] + t, keep_off[c] + t)])
            .sum::<C64>()
    });
    let (hermitian, _) = rho.flags();
    Ok(Operator::from_parts(mat, hermitian, false))
}
