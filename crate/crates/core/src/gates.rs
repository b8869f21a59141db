//! Qubit operators in the computational basis `{|0>, |1>}`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::operator::{Operator, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

/// `X = |1><0| + |0><1|`, `Y = i|1><0| - i|0><1|`, `Z = |0><0| - |1><1|`.
pub fn pauli(which: Pauli) -> Operator {
    let c = C64::new;
    let (o, z) = (c(1.0, 0.0), c(0.0, 0.0));
    let entries = match which {
        Pauli::X => [z, o, o, z],
        Pauli::Y => [z, c(0.0, -1.0), c(0.0, 1.0), z],
        Pauli::Z => [o, z, z, c(-1.0, 0.0)],
    };
    Operator::from_parts(DMatrix::from_row_slice(2, 2, &entries), true, true)
}

/// Controlled-NOT on control ⊗ target: `|a, b> -> |a, b XOR a>`.
pub fn cnot_unitary() -> Operator {
    permutation(4, |k| {
        let (a, b) = (k >> 1, k & 1);
        (a << 1) | (b ^ a)
    })
}

/// Exchanges two qubits.
pub fn swap_unitary() -> Operator {
    permutation(4, |k| ((k & 1) << 1) | (k >> 1))
}

pub fn hadamard() -> Operator {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Operator::from_parts(
        DMatrix::from_row_slice(2, 2, &[h, h, h, -h].map(|x| C64::new(x, 0.0))),
        true,
        true,
    )
}

/// Unitary sending basis state `|k>` to `|image(k)>`.
pub fn permutation(dim: usize, image: impl Fn(usize) -> usize) -> Operator {
    let mut mat = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        mat[(image(k), k)] = C64::new(1.0, 0.0);
    }
    let hermitian = (0..dim).all(|k| image(image(k)) == k);
    Operator::from_parts(mat, hermitian, true)
}
