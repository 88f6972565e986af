//! Finite-dimensional state algebra for one to three qubits.
//!
//! Basis index convention: for an `n`-qubit register the computational basis
//! state `|q0 q1 … q(n-1)⟩` has index `Σ q_k 2^(n-1-k)`. Qubit 0 is Alice,
//! qubit 1 Bob, qubit 2 Charlie.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, SymmetricEigen, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const MAX_QUBITS: usize = 3;
pub const NORM_TOL: f64 = 1e-12;
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
/// Eigenvalues down to this value are accepted as positive semidefinite.
pub const PSD_TOL: f64 = -1e-10;

const ANGLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("state dimension {0} is not 2^n for n in 1..=3")]
    BadDimension(usize),
    #[error("state is not normalized: squared norm {0}")]
    NotNormalized(f64),
    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("trace {0} differs from 1")]
    BadTrace(f64),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),
    #[error("qubit index {index} out of range for a {qubits}-qubit state")]
    QubitOutOfRange { index: usize, qubits: usize },
    #[error("subsystem selection must be a nonempty set of distinct qubits")]
    BadSubsystem,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter {name} = {value} outside [{lo}, {hi}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("invalid probability distribution: {0}")]
    BadDistribution(String),
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn qubits_for_dim(dim: usize) -> Result<usize, StateError> {
    match dim {
        2 => Ok(1),
        4 => Ok(2),
        8 => Ok(3),
        _ => Err(StateError::BadDimension(dim)),
    }
}

/// Pauli matrix for axis 0 = x, 1 = y, 2 = z.
pub fn pauli(axis: usize) -> Matrix2<Complex64> {
    let z = Complex64::new(0.0, 0.0);
    let one = c(1.0);
    let i = Complex64::new(0.0, 1.0);
    match axis {
        0 => Matrix2::new(z, one, one, z),
        1 => Matrix2::new(z, -i, i, z),
        2 => Matrix2::new(one, z, z, -one),
        _ => panic!("Pauli axis must be 0, 1 or 2"),
    }
}

fn to_dynamic(m: &Matrix2<Complex64>) -> CMatrix {
    DMatrix::from_fn(2, 2, |i, j| m[(i, j)])
}

/// Kronecker product of single-qubit operators, leftmost factor acts on qubit 0.
pub fn kron_all(factors: &[Matrix2<Complex64>]) -> CMatrix {
    let mut out = DMatrix::from_element(1, 1, c(1.0));
    for f in factors {
        out = out.kronecker(&to_dynamic(f));
    }
    out
}

/// Embeds a single-qubit operator acting on `qubit` of an `n`-qubit register.
pub fn embed(op: &Matrix2<Complex64>, qubit: usize, n: usize) -> CMatrix {
    let factors: Vec<_> = (0..n)
        .map(|k| if k == qubit { *op } else { Matrix2::identity() })
        .collect();
    kron_all(&factors)
}

/// σx on every qubit.
pub fn flip_all(n: usize) -> CMatrix {
    kron_all(&vec![pauli(0); n])
}

fn max_hermitian_deviation(m: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// A normalized ket on 1–3 qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: CVector,
    qubits: usize,
}

impl PureState {
    /// Validates length and normalization.
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self, StateError> {
        let qubits = qubits_for_dim(amplitudes.len())?;
        let v = DVector::from_vec(amplitudes);
        let norm2 = v.norm_squared();
        if (norm2 - 1.0).abs() > NORM_TOL {
            return Err(StateError::NotNormalized(norm2));
        }
        Ok(Self { amplitudes: v, qubits })
    }

    /// Rescales the amplitudes to unit norm.
    pub fn normalized(amplitudes: Vec<Complex64>) -> Result<Self, StateError> {
        let qubits = qubits_for_dim(amplitudes.len())?;
        let v = DVector::from_vec(amplitudes);
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(StateError::NotNormalized(norm * norm));
        }
        Ok(Self {
            amplitudes: v / c(norm),
            qubits,
        })
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self, StateError> {
        Self::new(amplitudes.iter().map(|&x| c(x)).collect())
    }

    /// Computational basis state, e.g. `basis("100")`.
    pub fn basis(bits: &str) -> Result<Self, StateError> {
        let n = bits.len();
        if n == 0 || n > MAX_QUBITS || !bits.chars().all(|ch| ch == '0' || ch == '1') {
            return Err(StateError::BadDimension(1 << n.min(8)));
        }
        let index = usize::from_str_radix(bits, 2).expect("validated binary string");
        let mut amps = vec![c(0.0); 1 << n];
        amps[index] = c(1.0);
        Self::new(amps)
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    /// ⟨self|other⟩
    pub fn inner(&self, other: &PureState) -> Result<Complex64, StateError> {
        if self.dim() != other.dim() {
            return Err(StateError::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn tensor(&self, other: &PureState) -> Result<PureState, StateError> {
        let v = self.amplitudes.kronecker(&other.amplitudes);
        PureState::normalized(v.iter().copied().collect())
    }

    /// Applies a unitary; the result is renormalized to absorb rounding.
    pub fn evolve(&self, unitary: &CMatrix) -> Result<PureState, StateError> {
        if unitary.nrows() != self.dim() || unitary.ncols() != self.dim() {
            return Err(StateError::DimensionMismatch {
                expected: self.dim(),
                got: unitary.nrows(),
            });
        }
        PureState::normalized((unitary * &self.amplitudes).iter().copied().collect())
    }

    pub fn to_density(&self) -> DensityMatrix {
        density_from_ket(self)
    }
}

/// |ψ⟩⟨ψ|
pub fn density_from_ket(psi: &PureState) -> DensityMatrix {
    let v = &psi.amplitudes;
    DensityMatrix {
        matrix: v * v.adjoint(),
        qubits: psi.qubits,
    }
}

/// Hermitian, unit-trace, positive-semidefinite operator on 1–3 qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
    qubits: usize,
}

impl DensityMatrix {
    /// Validates every density-matrix invariant.
    pub fn new(matrix: CMatrix) -> Result<Self, StateError> {
        if matrix.nrows() != matrix.ncols() {
            return Err(StateError::BadDimension(matrix.nrows()));
        }
        let qubits = qubits_for_dim(matrix.nrows())?;
        let dev = max_hermitian_deviation(&matrix);
        if dev > HERMITIAN_TOL {
            return Err(StateError::NotHermitian(dev));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(StateError::BadTrace(tr.re));
        }
        let min_ev = hermitian_eigenvalues(&matrix)[0];
        if min_ev < PSD_TOL {
            return Err(StateError::NotPositive(min_ev));
        }
        Ok(Self { matrix, qubits })
    }

    /// Forces exact Hermiticity and unit trace, then validates.
    pub fn from_hermitian_part(matrix: CMatrix) -> Result<Self, StateError> {
        let herm = (&matrix + matrix.adjoint()) * c(0.5);
        let tr = herm.trace().re;
        if tr <= 0.0 || !tr.is_finite() {
            return Err(StateError::BadTrace(tr));
        }
        Self::new(herm / c(tr))
    }

    pub fn maximally_mixed(qubits: usize) -> Result<Self, StateError> {
        if qubits == 0 || qubits > MAX_QUBITS {
            return Err(StateError::BadDimension(1 << qubits.min(8)));
        }
        let d = 1usize << qubits;
        Ok(Self {
            matrix: CMatrix::identity(d, d) / c(d as f64),
            qubits,
        })
    }

    /// Convex combination Σ w_i ρ_i.
    pub fn mixture(terms: &[(f64, DensityMatrix)]) -> Result<Self, StateError> {
        let first = terms
            .first()
            .ok_or_else(|| StateError::BadDistribution("empty mixture".into()))?;
        let d = first.1.dim();
        let weights: Vec<f64> = terms.iter().map(|t| t.0).collect();
        check_distribution(&weights)?;
        let mut m = CMatrix::zeros(d, d);
        for (w, rho) in terms {
            if rho.dim() != d {
                return Err(StateError::DimensionMismatch {
                    expected: d,
                    got: rho.dim(),
                });
            }
            m += &rho.matrix * c(*w);
        }
        Self::new(m)
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }

    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix, StateError> {
        if self.qubits + other.qubits > MAX_QUBITS {
            return Err(StateError::BadDimension(self.dim() * other.dim()));
        }
        Ok(DensityMatrix {
            matrix: self.matrix.kronecker(&other.matrix),
            qubits: self.qubits + other.qubits,
        })
    }

    /// Real part of Tr[ρ M].
    pub fn expectation(&self, op: &CMatrix) -> Result<f64, StateError> {
        if op.nrows() != self.dim() || op.ncols() != self.dim() {
            return Err(StateError::DimensionMismatch {
                expected: self.dim(),
                got: op.nrows(),
            });
        }
        // Tr[ρM] = Σ_ij ρ_ij M_ji
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                acc += self.matrix[(i, j)] * op[(j, i)];
            }
        }
        Ok(acc.re)
    }

    /// Reduced state on the qubits listed in `keep` (kept in ascending order).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix, StateError> {
        let n = self.qubits;
        for &q in keep {
            if q >= n {
                return Err(StateError::QubitOutOfRange { index: q, qubits: n });
            }
        }
        let mut kept: Vec<usize> = keep.to_vec();
        kept.sort_unstable();
        kept.dedup();
        if kept.is_empty() || kept.len() != keep.len() {
            return Err(StateError::BadSubsystem);
        }
        let traced: Vec<usize> = (0..n).filter(|q| !kept.contains(q)).collect();
        let dk = 1usize << kept.len();
        let dt = 1usize << traced.len();

        // Scatter bits of a sub-register index onto full-register positions.
        let place = |sub: usize, qubits: &[usize]| -> usize {
            let m = qubits.len();
            qubits.iter().enumerate().fold(0usize, |acc, (pos, &q)| {
                let bit = (sub >> (m - 1 - pos)) & 1;
                acc | (bit << (n - 1 - q))
            })
        };

        let mut out = CMatrix::zeros(dk, dk);
        for i in 0..dk {
            let fi = place(i, &kept);
            for j in 0..dk {
                let fj = place(j, &kept);
                let mut acc = Complex64::new(0.0, 0.0);
                for t in 0..dt {
                    let ft = place(t, &traced);
                    acc += self.matrix[(fi | ft, fj | ft)];
                }
                out[(i, j)] = acc;
            }
        }
        Ok(DensityMatrix {
            matrix: out,
            qubits: kept.len(),
        })
    }

    pub fn purity(&self) -> f64 {
        purity(self)
    }

    /// U ρ U†
    pub fn conjugate_by(&self, unitary: &CMatrix) -> Result<DensityMatrix, StateError> {
        if unitary.nrows() != self.dim() || unitary.ncols() != self.dim() {
            return Err(StateError::DimensionMismatch {
                expected: self.dim(),
                got: unitary.nrows(),
            });
        }
        DensityMatrix::from_hermitian_part(unitary * &self.matrix * unitary.adjoint())
    }

    /// Applies a single-qubit unitary to one party.
    pub fn apply_local(&self, qubit: usize, u: &Matrix2<Complex64>) -> Result<DensityMatrix, StateError> {
        if qubit >= self.qubits {
            return Err(StateError::QubitOutOfRange {
                index: qubit,
                qubits: self.qubits,
            });
        }
        self.conjugate_by(&embed(u, qubit, self.qubits))
    }

    /// (1 − λ) ρ + λ I/d
    pub fn with_white_noise(&self, lambda: f64) -> Result<DensityMatrix, StateError> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(StateError::OutOfRange {
                name: "noise",
                value: lambda,
                lo: 0.0,
                hi: 1.0,
            });
        }
        let d = self.dim();
        let m = &self.matrix * c(1.0 - lambda) + CMatrix::identity(d, d) * c(lambda / d as f64);
        DensityMatrix::new(m)
    }
}

/// Tr[ρ²]
pub fn purity(rho: &DensityMatrix) -> f64 {
    // Tr[ρ²] = Σ |ρ_ij|² for Hermitian ρ
    rho.matrix.iter().map(|z| z.norm_sqr()).sum()
}

/// ⟨ψ|ρ|ψ⟩
pub fn fidelity_pure(rho: &DensityMatrix, psi: &PureState) -> Result<f64, StateError> {
    if rho.dim() != psi.dim() {
        return Err(StateError::DimensionMismatch {
            expected: rho.dim(),
            got: psi.dim(),
        });
    }
    let v = psi.amplitudes();
    let f = v.dotc(&(&rho.matrix * v));
    Ok(f.re.clamp(0.0, 1.0))
}

/// Local Bloch vectors and spin-correlation matrix of a two-qubit state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PauliDecomposition {
    /// Alice's Bloch vector.
    pub a: Vector3<f64>,
    /// Bob's Bloch vector.
    pub b: Vector3<f64>,
    /// T_jk = Tr[ρ σ_j⊗σ_k]
    pub t: Matrix3<f64>,
}

impl PauliDecomposition {
    /// Swaps the roles of the two parties (a ↔ b, T → Tᵀ).
    pub fn swapped(&self) -> Self {
        Self {
            a: self.b,
            b: self.a,
            t: self.t.transpose(),
        }
    }
}

pub fn pauli_decompose(rho: &DensityMatrix) -> Result<PauliDecomposition, StateError> {
    if rho.qubits != 2 {
        return Err(StateError::DimensionMismatch {
            expected: 4,
            got: rho.dim(),
        });
    }
    let id = Matrix2::identity();
    let mut a = Vector3::zeros();
    let mut b = Vector3::zeros();
    let mut t = Matrix3::zeros();
    for j in 0..3 {
        a[j] = rho.expectation(&kron_all(&[pauli(j), id]))?;
        b[j] = rho.expectation(&kron_all(&[id, pauli(j)]))?;
        for k in 0..3 {
            t[(j, k)] = rho.expectation(&kron_all(&[pauli(j), pauli(k)]))?;
        }
    }
    Ok(PauliDecomposition { a, b, t })
}

/// ¼(1⊗1 + a·σ⊗1 + 1⊗b·σ + Σ T_jk σ_j⊗σ_k), rejected when not PSD.
pub fn pauli_recompose(d: &PauliDecomposition) -> Result<DensityMatrix, StateError> {
    let id = Matrix2::identity();
    let mut m = kron_all(&[id, id]);
    for j in 0..3 {
        m += kron_all(&[pauli(j), id]) * c(d.a[j]);
        m += kron_all(&[id, pauli(j)]) * c(d.b[j]);
        for k in 0..3 {
            m += kron_all(&[pauli(j), pauli(k)]) * c(d.t[(j, k)]);
        }
    }
    DensityMatrix::new(m * c(0.25))
}

fn check_angle(name: &'static str, value: f64, hi: f64) -> Result<(), StateError> {
    if !(value >= -ANGLE_TOL && value <= hi + ANGLE_TOL) {
        return Err(StateError::OutOfRange {
            name,
            value,
            lo: 0.0,
            hi,
        });
    }
    Ok(())
}

/// (1/√2)(sinα|100⟩ + sinβ|010⟩ + cosβ|001⟩ + cosα|111⟩) for α, β ∈ [0, π/2].
pub fn family_state(alpha: f64, beta: f64) -> Result<PureState, StateError> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    check_angle("alpha", alpha, half_pi)?;
    check_angle("beta", beta, half_pi)?;
    let mut amps = [0.0; 8];
    amps[0b100] = alpha.sin() * FRAC_1_SQRT_2;
    amps[0b010] = beta.sin() * FRAC_1_SQRT_2;
    amps[0b001] = beta.cos() * FRAC_1_SQRT_2;
    amps[0b111] = alpha.cos() * FRAC_1_SQRT_2;
    PureState::normalized(amps.iter().map(|&x| c(x)).collect())
}

/// (|010⟩ − 2|100⟩ + |001⟩)/√6
pub fn chi1() -> PureState {
    let s = 6f64.sqrt();
    let mut amps = [0.0; 8];
    amps[0b010] = 1.0 / s;
    amps[0b100] = -2.0 / s;
    amps[0b001] = 1.0 / s;
    PureState::normalized(amps.iter().map(|&x| c(x)).collect()).expect("fixed state")
}

/// σx⊗σx⊗σx |χ1⟩ = (|101⟩ − 2|011⟩ + |110⟩)/√6
pub fn chi2() -> PureState {
    chi1().evolve(&flip_all(3)).expect("fixed state")
}

/// Equal mixture of the two W-class states χ1 and χ2; purity ½.
pub fn mixed_w_state() -> DensityMatrix {
    let m = (chi1().to_density().matrix + chi2().to_density().matrix) * c(0.5);
    DensityMatrix { matrix: m, qubits: 3 }
}

/// (|000⟩ + |111⟩)/√2
pub fn ghz() -> PureState {
    let mut amps = [0.0; 8];
    amps[0] = FRAC_1_SQRT_2;
    amps[7] = FRAC_1_SQRT_2;
    PureState::normalized(amps.iter().map(|&x| c(x)).collect()).expect("fixed state")
}

/// (|001⟩ + |010⟩ + |100⟩)/√3
pub fn w_state() -> PureState {
    let s = 1.0 / 3f64.sqrt();
    let mut amps = [0.0; 8];
    amps[0b001] = s;
    amps[0b010] = s;
    amps[0b100] = s;
    PureState::normalized(amps.iter().map(|&x| c(x)).collect()).expect("fixed state")
}

/// The four Bell states in the fixed order (ψ−, ψ+, φ−, φ+).
pub fn bell_basis() -> [PureState; 4] {
    let s = FRAC_1_SQRT_2;
    let mk = |v: [f64; 4]| PureState::from_real(&v).expect("Bell state");
    [
        mk([0.0, s, -s, 0.0]),
        mk([0.0, s, s, 0.0]),
        mk([s, 0.0, 0.0, -s]),
        mk([s, 0.0, 0.0, s]),
    ]
}

pub fn singlet() -> PureState {
    bell_basis()[0].clone()
}

fn check_distribution(p: &[f64]) -> Result<(), StateError> {
    if p.iter().any(|&x| !x.is_finite() || x < -1e-12) {
        return Err(StateError::BadDistribution(format!(
            "negative or non-finite weight in {p:?}"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(StateError::BadDistribution(format!("weights sum to {sum}")));
    }
    Ok(())
}

/// Σ p_i |B_i⟩⟨B_i| over (ψ−, ψ+, φ−, φ+).
pub fn bell_diagonal(p: [f64; 4]) -> Result<DensityMatrix, StateError> {
    check_distribution(&p)?;
    let basis = bell_basis();
    let mut m = CMatrix::zeros(4, 4);
    for (w, psi) in p.iter().zip(basis.iter()) {
        m += psi.to_density().matrix * c(w.max(0.0));
    }
    DensityMatrix::from_hermitian_part(m)
}

/// Werner state v·|ψ−⟩⟨ψ−| + (1 − v)·I/4.
pub fn werner(visibility: f64) -> Result<DensityMatrix, StateError> {
    check_angle("visibility", visibility, 1.0)?;
    let m = singlet().to_density().matrix * c(visibility) + CMatrix::identity(4, 4) * c((1.0 - visibility) / 4.0);
    DensityMatrix::new(m)
}

/// cosγ|01⟩ + sinγ|10⟩ for γ ∈ [0, π].
pub fn pure_two_qubit(gamma: f64) -> Result<PureState, StateError> {
    check_angle("gamma", gamma, std::f64::consts::PI)?;
    PureState::normalized(vec![c(0.0), c(gamma.cos()), c(gamma.sin()), c(0.0)])
}

/// M′ = σx⊗σx⊗σx M σx⊗σx⊗σx for a Hermitian 8×8 operator.
pub fn flip_conjugate(m: &CMatrix) -> Result<CMatrix, StateError> {
    if m.nrows() != 8 || m.ncols() != 8 {
        return Err(StateError::DimensionMismatch {
            expected: 8,
            got: m.nrows(),
        });
    }
    let dev = max_hermitian_deviation(m);
    if dev > HERMITIAN_TOL {
        return Err(StateError::NotHermitian(dev));
    }
    // X⊗X⊗X permutes basis index i -> 7 - i.
    Ok(CMatrix::from_fn(8, 8, |i, j| m[(7 - i, 7 - j)]))
}

/// Matrices as nested arrays of `[re, im]` pairs, row-major.
pub fn matrix_to_json_pairs(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

impl Serialize for DensityMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        matrix_to_json_pairs(&self.matrix).serialize(serializer)
    }
}
