//! Seeded random objects. Every random quantity in the crate is drawn from a
//! [`Rng`] created by [`rng`], so one `u64` seed reproduces a run.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::operator::{Operator, C64};
use crate::spectral::expm_skew;
use crate::state::StateVector;

pub type Rng = ChaCha20Rng;

/// Recorded in report headers.
pub const PRNG_ALGORITHM: &str = "chacha20/rand_chacha-0.9;normal=rand_distr-0.5-StandardNormal";

pub fn rng(seed: u64) -> Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn complex_normal(rng: &mut Rng) -> C64 {
    let re = normal(rng);
    let im = normal(rng);
    C64::new(re, im)
}

/// Uniformly distributed pure state.
pub fn random_state(rng: &mut Rng, dim: usize) -> StateVector {
    loop {
        let amps = DVector::from_fn(dim, |_, _| complex_normal(rng));
        if let Ok(s) = StateVector::normalize(amps) {
            return s;
        }
    }
}

/// `(G + G^dag) / 2` with `G` complex Gaussian, scaled by `scale`.
pub fn random_hermitian(rng: &mut Rng, dim: usize, scale: f64) -> Operator {
    let g = DMatrix::from_fn(dim, dim, |_, _| complex_normal(rng));
    let h = (&g + g.adjoint()) * C64::new(0.5 * scale, 0.0);
    // exact Hermitian symmetry: copy the lower triangle
    let h = DMatrix::from_fn(dim, dim, |i, j| {
        if i > j {
            h[(i, j)]
        } else if i == j {
            C64::new(h[(i, i)].re, 0.0)
        } else {
            h[(j, i)].conj()
        }
    });
    Operator::hermitian(h).expect("symmetrized matrix is Hermitian")
}

/// `exp(-i H)` for a random Hermitian `H`.
pub fn random_unitary(rng: &mut Rng, dim: usize) -> Operator {
    let h = random_hermitian(rng, dim, 1.0);
    expm_skew(&h, 1.0).expect("random_hermitian is Hermitian")
}

/// Hermitian operator `V diag(k_i) V^dag` with integer eigenvalues drawn from
/// `-range..=range` and a random unitary `V`; sums of these have degenerate
/// spectra.
pub fn random_integer_spectrum(rng: &mut Rng, dim: usize, range: i32) -> Operator {
    let diag: Vec<f64> = (0..dim)
        .map(|_| rng.random_range(-range..=range) as f64)
        .collect();
    let v = random_unitary(rng, dim);
    let d = Operator::diagonal(&diag);
    let m = v.matrix() * d.matrix() * v.matrix().adjoint();
    let m = DMatrix::from_fn(
        dim,
        dim,
        |i, j| {
            if i >= j {
                m[(i, j)]
            } else {
                m[(j, i)].conj()
            }
        },
    );
    let m = DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            C64::new(m[(i, i)].re, 0.0)
        } else {
            m[(i, j)]
        }
    });
    Operator::hermitian(m).expect("symmetrized matrix is Hermitian")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_draws_repeat() {
        let a = random_state(&mut rng(7), 5);
        let b = random_state(&mut rng(7), 5);
        assert_eq!(a, b);
        let c = random_state(&mut rng(8), 5);
        assert_ne!(a, c);
    }

    #[test]
    fn integer_spectrum_is_integer() {
        let mut r = rng(3);
        let h = random_integer_spectrum(&mut r, 4, 2);
        let spec = crate::spectral::eig_hermitian(&h).unwrap();
        for v in spec.eigenvalues {
            assert!((v - v.round()).abs() < 1e-10);
        }
    }
}
