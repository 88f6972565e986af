//! Volume monogamy of steering ellipsoids for three-qubit states, and the
//! concurrence-based CKW comparison.

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::qstate::{kron_all, pauli, pauli_decompose, CMatrix, DensityMatrix, StateError};
use crate::steer::normalized_volume;

/// Purity above `1 - PURE_TOL` counts as a pure state.
pub const PURE_TOL: f64 = 1e-10;
/// |pure residual| below this is reported as saturation.
pub const SATURATION_BAND: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonogamyError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error("expected a {expected}-qubit state, got {got} qubits")]
    WrongQubitCount { expected: usize, got: usize },
    #[error("state is not pure (purity {0})")]
    NotPure(f64),
}

fn require_qubits(rho: &DensityMatrix, n: usize) -> Result<(), MonogamyError> {
    if rho.qubits() != n {
        return Err(MonogamyError::WrongQubitCount {
            expected: n,
            got: rho.qubits(),
        });
    }
    Ok(())
}

/// (V_{B|A}, V_{C|A}) from the AB and AC marginals.
pub fn volumes(rho: &DensityMatrix) -> Result<(f64, f64), MonogamyError> {
    require_qubits(rho, 3)?;
    let v_ba = normalized_volume(&pauli_decompose(&rho.partial_trace(&[0, 1])?)?);
    let v_ca = normalized_volume(&pauli_decompose(&rho.partial_trace(&[0, 2])?)?);
    Ok((v_ba, v_ca))
}

/// 1 − √V_BA − √V_CA; negative means the pure-state relation is violated.
pub fn pure_monogamy_residual(v_ba: f64, v_ca: f64) -> f64 {
    1.0 - v_ba.max(0.0).sqrt() - v_ca.max(0.0).sqrt()
}

/// 1 − V_BA^{2/3} − V_CA^{2/3}
pub fn mixed_monogamy_residual(v_ba: f64, v_ca: f64) -> f64 {
    1.0 - v_ba.max(0.0).powf(2.0 / 3.0) - v_ca.max(0.0).powf(2.0 / 3.0)
}

/// Eigenvalues of ρ below this are treated as exact zeros.
const RANK_EPS: f64 = 1e-14;

/// Wootters concurrence max(0, λ1 − λ2 − λ3 − λ4).
///
/// With ρ = V V† (columns √p_i |e_i⟩), the λ_i are the singular values of
/// Vᵀ (σy⊗σy) V, which avoids square roots of rounding-level eigenvalues.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64, MonogamyError> {
    require_qubits(rho, 2)?;
    let yy = kron_all(&[pauli(1), pauli(1)]);
    let eig = nalgebra::SymmetricEigen::new(rho.matrix().clone());
    let cols: Vec<_> = (0..4)
        .filter(|&i| eig.eigenvalues[i] > RANK_EPS)
        .map(|i| eig.eigenvectors.column(i) * Complex64::new(eig.eigenvalues[i].sqrt(), 0.0))
        .collect();
    if cols.is_empty() {
        return Ok(0.0);
    }
    let v = CMatrix::from_columns(&cols);
    let tau = v.transpose() * yy * &v;
    let mut lambdas: Vec<f64> = tau.singular_values().iter().copied().collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    let rest: f64 = lambdas[1..].iter().sum();
    Ok((lambdas[0] - rest).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CkwReport {
    pub concurrence_ab: f64,
    pub concurrence_ac: f64,
    /// C²_{A|BC} = 4 det ρ_A
    pub tangle_a_bc: f64,
    /// C²_{A|BC} − C²_{AB} − C²_{AC}
    pub residual: f64,
}

fn det2(m: &CMatrix) -> f64 {
    let mm = Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    mm.determinant().re
}

/// CKW residual for a pure three-qubit state.
pub fn ckw_check(rho: &DensityMatrix) -> Result<CkwReport, MonogamyError> {
    require_qubits(rho, 3)?;
    let p = rho.purity();
    if p < 1.0 - PURE_TOL {
        return Err(MonogamyError::NotPure(p));
    }
    let c_ab = concurrence(&rho.partial_trace(&[0, 1])?)?;
    let c_ac = concurrence(&rho.partial_trace(&[0, 2])?)?;
    let tangle = (4.0 * det2(rho.partial_trace(&[0])?.matrix())).clamp(0.0, 1.0);
    Ok(CkwReport {
        concurrence_ab: c_ab,
        concurrence_ac: c_ac,
        tangle_a_bc: tangle,
        residual: tangle - c_ab * c_ab - c_ac * c_ac,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonogamyClass {
    WClassSaturating,
    GhzClassInterior,
    PureViolatingMixedState,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonogamyReport {
    pub v_ba: f64,
    pub v_ca: f64,
    pub pure_residual: f64,
    pub mixed_residual: f64,
    pub concurrence_ab: f64,
    pub concurrence_ac: f64,
    pub purity: f64,
    pub classification: MonogamyClass,
}

/// Reporting labels. The thresholds are presentation only.
pub fn classify_residual(pure_residual: f64, v_ba: f64, v_ca: f64, is_pure: bool) -> MonogamyClass {
    if pure_residual.abs() < SATURATION_BAND {
        MonogamyClass::WClassSaturating
    } else if pure_residual < -SATURATION_BAND {
        MonogamyClass::PureViolatingMixedState
    } else if is_pure && v_ba > 1e-9 && v_ca > 1e-9 {
        MonogamyClass::GhzClassInterior
    } else {
        MonogamyClass::Other
    }
}

pub fn report(rho: &DensityMatrix) -> Result<MonogamyReport, MonogamyError> {
    let (v_ba, v_ca) = volumes(rho)?;
    report_from_volumes(rho, v_ba, v_ca)
}

/// Report for externally estimated volumes (e.g. from fitted clouds); the
/// concurrences still come from `rho`.
pub fn report_from_volumes(rho: &DensityMatrix, v_ba: f64, v_ca: f64) -> Result<MonogamyReport, MonogamyError> {
    require_qubits(rho, 3)?;
    let purity = rho.purity();
    let pure_residual = pure_monogamy_residual(v_ba, v_ca);
    Ok(MonogamyReport {
        v_ba,
        v_ca,
        pure_residual,
        mixed_residual: mixed_monogamy_residual(v_ba, v_ca),
        concurrence_ab: concurrence(&rho.partial_trace(&[0, 1])?)?,
        concurrence_ac: concurrence(&rho.partial_trace(&[0, 2])?)?,
        purity,
        classification: classify_residual(pure_residual, v_ba, v_ca, purity > 1.0 - PURE_TOL),
    })
}
