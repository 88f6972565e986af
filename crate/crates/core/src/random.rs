//! Random states, unitaries and rotations.
//!
//! Seeding rule for parallel work: a task with index `i` under master seed
//! `s` uses `ChaCha8Rng::seed_from_u64(s)` switched to stream `i`
//! ([`task_rng`]). Results therefore do not depend on thread scheduling.

use nalgebra::{DMatrix, Matrix2, Matrix3, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::qstate::{CMatrix, DensityMatrix, PureState, StateError};

/// Independent generator for task `index` derived from `master_seed`.
pub fn task_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im)
}

/// Haar-random ket: a normalized complex Gaussian vector.
pub fn haar_pure<R: Rng + ?Sized>(qubits: usize, rng: &mut R) -> Result<PureState, StateError> {
    let d = 1usize << qubits;
    PureState::normalized((0..d).map(|_| complex_gaussian(rng)).collect())
}

/// Induced-measure mixed state ρ = GG†/Tr[GG†] with a d×k Ginibre matrix G.
///
/// With `k = 2` and three qubits this is the distribution of the marginal of a
/// Haar-random four-qubit pure state.
pub fn random_mixed<R: Rng + ?Sized>(
    qubits: usize,
    environment_dim: usize,
    rng: &mut R,
) -> Result<DensityMatrix, StateError> {
    let d = 1usize << qubits;
    let g = DMatrix::from_fn(d, environment_dim.max(1), |_, _| complex_gaussian(rng));
    DensityMatrix::from_hermitian_part(&g * g.adjoint())
}

/// Haar-random unitary via QR of a Ginibre matrix with the phase correction.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let g = DMatrix::from_fn(dim, dim, |_, _| complex_gaussian(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    q
}

pub fn haar_qubit_unitary<R: Rng + ?Sized>(rng: &mut R) -> Matrix2<Complex64> {
    let u = haar_unitary(2, rng);
    Matrix2::new(u[(0, 0)], u[(0, 1)], u[(1, 0)], u[(1, 1)])
}

/// Uniform direction on the unit sphere.
pub fn unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Uniform point in the unit ball.
pub fn ball_vector<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    let r: f64 = rng.random::<f64>().cbrt();
    unit_vector(rng) * r
}

/// Uniformly distributed proper rotation: Gram–Schmidt of a Gaussian matrix
/// with the sign fix and determinant forced to +1.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Matrix3<f64> {
    loop {
        let g = Matrix3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let qr = g.qr();
        let r = qr.r();
        if (0..3).any(|i| r[(i, i)].abs() < 1e-12) {
            continue;
        }
        let mut q = qr.q();
        for j in 0..3 {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        if q.determinant() < 0.0 {
            q.column_mut(0).neg_mut();
        }
        return q;
    }
}

/// Random Hermitian matrix with Gaussian entries.
pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let g = DMatrix::from_fn(dim, dim, |_, _| complex_gaussian(rng));
    (&g + g.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Single-qubit state with a Bloch vector drawn uniformly from the ball.
pub fn random_qubit_state<R: Rng + ?Sized>(rng: &mut R) -> DensityMatrix {
    let r = ball_vector(rng);
    bloch_density(&r).expect("ball vector is physical")
}

/// ½(1 + r·σ)
pub fn bloch_density(r: &Vector3<f64>) -> Result<DensityMatrix, StateError> {
    let m = CMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(0.5 * (1.0 + r.z), 0.0),
            Complex64::new(0.5 * r.x, -0.5 * r.y),
            Complex64::new(0.5 * r.x, 0.5 * r.y),
            Complex64::new(0.5 * (1.0 - r.z), 0.0),
        ],
    );
    DensityMatrix::new(m)
}

/// Convex mixture of `terms` random product states with Dirichlet-like weights.
pub fn random_separable<R: Rng + ?Sized>(terms: usize, rng: &mut R) -> Result<DensityMatrix, StateError> {
    let raw: Vec<f64> = (0..terms.max(1))
        .map(|_| -rng.random::<f64>().max(1e-300).ln())
        .collect();
    let total: f64 = raw.iter().sum();
    let parts: Result<Vec<_>, _> = raw
        .iter()
        .map(|w| {
            let prod = random_qubit_state(rng).tensor(&random_qubit_state(rng))?;
            Ok((w / total, prod))
        })
        .collect();
    DensityMatrix::mixture(&parts?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotations_are_proper() {
        let mut rng = task_rng(7, 0);
        for _ in 0..100 {
            let r = random_rotation(&mut rng);
            assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = task_rng(3, 1);
        let u = haar_unitary(8, &mut rng);
        assert!((u.adjoint() * &u - CMatrix::identity(8, 8)).norm() < 1e-12);
    }

    #[test]
    fn task_streams_differ() {
        let a: u64 = task_rng(1, 0).random();
        let b: u64 = task_rng(1, 1).random();
        let a2: u64 = task_rng(1, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, a2);
    }

    #[test]
    fn random_states_are_valid() {
        let mut rng = task_rng(11, 0);
        for _ in 0..20 {
            let rho = random_mixed(3, 2, &mut rng).unwrap();
            assert!(rho.eigenvalues()[0] > -1e-12);
            let sep = random_separable(4, &mut rng).unwrap();
            assert_eq!(sep.qubits(), 2);
        }
    }
}
