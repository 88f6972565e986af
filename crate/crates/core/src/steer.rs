//! Steering ellipsoid ℰ_{B|A} of a two-qubit state.
//!
//! Alice's POVM element E = e0(1 + e·σ) steers Bob to the Bloch vector
//! (b + Tᵀe)/(1 + a·e). Over the unit ball of e this traces a (possibly
//! degenerate) ellipsoid with
//!
//! * center c = (b − Tᵀa)/(1 − |a|²)
//! * shape  Q = (Tᵀ − b aᵀ)(I + a aᵀ/(1 − |a|²))(T − a bᵀ)/(1 − |a|²)
//!
//! so that the surface is (r − c)ᵀ Q⁻¹ (r − c) = 1 and the normalized volume
//! is √det Q = |det(T − a bᵀ)|/(1 − |a|²)².

// Negated comparisons below also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cmp::Ordering;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qstate::PauliDecomposition;

/// Outcome probabilities at or below this are treated as never occurring.
pub const PROBABILITY_EPS: f64 = 1e-12;
/// Below this 1 − |a|² the state is handled as Alice's pure-marginal limit.
pub const PURE_MARGINAL_EPS: f64 = 1e-12;
/// Semiaxes shorter than this count as collapsed.
pub const AXIS_EPS: f64 = 1e-9;
/// Separable states never exceed this normalized volume.
pub const SEPARABLE_VOLUME_BOUND: f64 = 1.0 / 27.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SteerError {
    #[error("zero-probability branch: outcome probability {0:e}")]
    ZeroProbability(f64),
    #[error("measurement direction has norm {0} > 1")]
    InvalidDirection(f64),
    #[error("POVM weight e0 = {0} outside [0, 1]")]
    InvalidWeight(f64),
}

/// POVM element e0(1 + e·σ) on Alice's qubit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementElement {
    pub e0: f64,
    pub e: Vector3<f64>,
}

impl MeasurementElement {
    pub fn new(e0: f64, e: Vector3<f64>) -> Result<Self, SteerError> {
        if !(0.0..=1.0).contains(&e0) {
            return Err(SteerError::InvalidWeight(e0));
        }
        let n = e.norm();
        if !(n <= 1.0 + 1e-12) {
            return Err(SteerError::InvalidDirection(n));
        }
        Ok(Self { e0, e })
    }

    /// The "+" outcome of a projective measurement along `e`.
    pub fn projective(e: Vector3<f64>) -> Result<Self, SteerError> {
        Self::new(0.5, e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeredState {
    pub bloch: Vector3<f64>,
    pub probability: f64,
}

/// Bob's normalized Bloch vector after Alice's element `element` clicks.
pub fn steer_with(d: &PauliDecomposition, element: &MeasurementElement) -> Result<SteeredState, SteerError> {
    let denom = 1.0 + d.a.dot(&element.e);
    let probability = element.e0 * denom;
    if denom <= PROBABILITY_EPS || probability <= PROBABILITY_EPS {
        return Err(SteerError::ZeroProbability(probability));
    }
    let bloch = (d.b + d.t.transpose() * element.e) / denom;
    Ok(SteeredState { bloch, probability })
}

/// Steered Bloch vector and probability for the projective "+" outcome along `e`.
pub fn steered_bloch(d: &PauliDecomposition, e: &Vector3<f64>) -> Result<SteeredState, SteerError> {
    steer_with(d, &MeasurementElement::projective(*e)?)
}

/// Dimension of the steered set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Degeneracy {
    Point,
    Line,
    Plane,
    Solid,
}

impl Degeneracy {
    pub fn from_rank(rank: usize) -> Self {
        match rank {
            0 => Degeneracy::Point,
            1 => Degeneracy::Line,
            2 => Degeneracy::Plane,
            _ => Degeneracy::Solid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "EllipsoidJson")]
pub struct SteeringEllipsoid {
    pub center: Vector3<f64>,
    /// Q, with surface (r − c)ᵀ Q⁻¹ (r − c) = 1.
    pub shape: Matrix3<f64>,
    /// Descending.
    pub semiaxes: [f64; 3],
    /// Row i is the unit direction of semiaxis i.
    pub axes: Matrix3<f64>,
    pub volume: f64,
    pub rank: usize,
}

#[derive(Serialize)]
struct EllipsoidJson {
    center: [f64; 3],
    semiaxes: [f64; 3],
    axes: [[f64; 3]; 3],
    volume: f64,
    rank: usize,
}

impl From<SteeringEllipsoid> for EllipsoidJson {
    fn from(e: SteeringEllipsoid) -> Self {
        let row = |i: usize| [e.axes[(i, 0)], e.axes[(i, 1)], e.axes[(i, 2)]];
        EllipsoidJson {
            center: [e.center.x, e.center.y, e.center.z],
            semiaxes: e.semiaxes,
            axes: [row(0), row(1), row(2)],
            volume: e.volume,
            rank: e.rank,
        }
    }
}

impl SteeringEllipsoid {
    /// Degenerate ellipsoid consisting of the single point `at`.
    pub fn point(at: Vector3<f64>) -> Self {
        Self {
            center: at,
            shape: Matrix3::zeros(),
            semiaxes: [0.0; 3],
            axes: Matrix3::identity(),
            volume: 0.0,
            rank: 0,
        }
    }

    /// Builds the principal frame of a center/shape pair.
    pub fn from_shape(center: Vector3<f64>, shape: Matrix3<f64>, volume: f64) -> Self {
        let (semiaxes, axes) = principal_axes(&shape);
        let rank = semiaxes.iter().filter(|&&s| s >= AXIS_EPS).count();
        Self {
            center,
            shape,
            semiaxes,
            axes,
            volume,
            rank,
        }
    }

    pub fn degeneracy(&self) -> Degeneracy {
        Degeneracy::from_rank(self.rank)
    }

    /// (r − c)ᵀ Q⁺ (r − c) in the principal frame. Points off the span of a
    /// degenerate ellipsoid give `f64::INFINITY`.
    pub fn quadric_residual(&self, r: &Vector3<f64>) -> f64 {
        let d = r - self.center;
        let mut acc = 0.0;
        for i in 0..3 {
            let comp = self.axes.row(i).transpose().dot(&d);
            let s = self.semiaxes[i];
            if s >= AXIS_EPS {
                acc += (comp / s).powi(2);
            } else if comp.abs() > 1e-9 {
                return f64::INFINITY;
            }
        }
        acc
    }

    /// Point on the surface in the direction `u` (unit sphere coordinates of
    /// the principal frame), used to sample analytic clouds.
    pub fn surface_point(&self, u: &Vector3<f64>) -> Vector3<f64> {
        let mut r = self.center;
        for i in 0..3 {
            r += self.axes.row(i).transpose() * (self.semiaxes[i] * u[i]);
        }
        r
    }
}

/// Semiaxes (√eigenvalues, descending) and unit axes of a PSD shape matrix.
///
/// Ties in eigenvalue are ordered by the lexicographic order of the
/// eigenvectors; each eigenvector's largest-magnitude component is positive.
pub fn principal_axes(shape: &Matrix3<f64>) -> ([f64; 3], Matrix3<f64>) {
    let sym = (shape + shape.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut pairs: Vec<(f64, Vector3<f64>)> = (0..3)
        .map(|i| {
            let mut v: Vector3<f64> = eig.eigenvectors.column(i).into();
            let imax = v.iamax();
            if v[imax] < 0.0 {
                v = -v;
            }
            (eig.eigenvalues[i].max(0.0), v)
        })
        .collect();
    pairs.sort_by(|x, y| {
        let by_value = y.0.partial_cmp(&x.0).unwrap_or(Ordering::Equal);
        if (x.0 - y.0).abs() <= 1e-14 * x.0.abs().max(y.0.abs()).max(1e-300) {
            lexicographic(&x.1, &y.1)
        } else {
            by_value
        }
    });
    let semiaxes = [pairs[0].0.sqrt(), pairs[1].0.sqrt(), pairs[2].0.sqrt()];
    let axes = Matrix3::from_rows(&[pairs[0].1.transpose(), pairs[1].1.transpose(), pairs[2].1.transpose()]);
    (semiaxes, axes)
}

fn lexicographic(x: &Vector3<f64>, y: &Vector3<f64>) -> Ordering {
    for i in 0..3 {
        match y[i].partial_cmp(&x[i]) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

/// |det(T − a bᵀ)|/(1 − |a|²)², zero when Alice's marginal is pure.
pub fn normalized_volume(d: &PauliDecomposition) -> f64 {
    let gap = 1.0 - d.a.norm_squared();
    if gap < PURE_MARGINAL_EPS {
        return 0.0;
    }
    (d.t - d.a * d.b.transpose()).determinant().abs() / (gap * gap)
}

/// Closed-form steering ellipsoid ℰ_{B|A}.
pub fn ellipsoid(d: &PauliDecomposition) -> SteeringEllipsoid {
    let gap = 1.0 - d.a.norm_squared();
    if gap < PURE_MARGINAL_EPS {
        return SteeringEllipsoid::point(d.b);
    }
    let a = d.a;
    let b = d.b;
    let center = (b - d.t.transpose() * a) / gap;
    let left = d.t.transpose() - b * a.transpose();
    let middle = Matrix3::identity() + a * a.transpose() / gap;
    let right = d.t - a * b.transpose();
    let shape = left * middle * right / gap;
    let shape = (shape + shape.transpose()) * 0.5;
    SteeringEllipsoid::from_shape(center, shape, normalized_volume(d))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Classification {
    pub rank: usize,
    pub degeneracy: Degeneracy,
    pub volume: f64,
    /// Volume above the separable bound 1/27, which certifies entanglement.
    pub entanglement_witnessed: bool,
}

pub fn classify(d: &PauliDecomposition) -> Classification {
    let e = ellipsoid(d);
    Classification {
        rank: e.rank,
        degeneracy: e.degeneracy(),
        volume: e.volume,
        entanglement_witnessed: e.volume > SEPARABLE_VOLUME_BOUND + 1e-12,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{bell_diagonal, family_state, pauli_decompose, singlet, werner, PureState};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn decomp_of(psi: &PureState) -> PauliDecomposition {
        pauli_decompose(&psi.to_density()).unwrap()
    }

    #[test]
    fn steered_examples() {
        let s = decomp_of(&singlet());
        let out = steered_bloch(&s, &Vector3::z()).unwrap();
        assert!((out.bloch - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-15);
        assert!((out.probability - 0.5).abs() < 1e-15);

        let p = decomp_of(&PureState::basis("00").unwrap());
        for e in [Vector3::x(), Vector3::new(0.0, 0.6, -0.8), Vector3::new(0.0, 0.0, 0.3)] {
            let out = steered_bloch(&p, &e).unwrap();
            assert!((out.bloch - Vector3::z()).norm() < 1e-15);
        }
        assert!(matches!(
            steered_bloch(&p, &Vector3::new(0.0, 0.0, -1.0)),
            Err(SteerError::ZeroProbability(_))
        ));
        assert!(matches!(
            steered_bloch(&p, &Vector3::new(0.0, 0.0, 1.5)),
            Err(SteerError::InvalidDirection(_))
        ));
    }

    #[test]
    fn e0_only_scales_probability() {
        let d = pauli_decompose(
            &family_state(1.0, 0.4)
                .unwrap()
                .to_density()
                .partial_trace(&[0, 1])
                .unwrap(),
        )
        .unwrap();
        let e = Vector3::new(0.3, -0.2, 0.5);
        let half = steer_with(&d, &MeasurementElement::new(0.5, e).unwrap()).unwrap();
        let small = steer_with(&d, &MeasurementElement::new(0.1, e).unwrap()).unwrap();
        assert!((half.bloch - small.bloch).norm() < 1e-15);
        assert!((half.probability * 0.2 - small.probability).abs() < 1e-15);
        assert!(MeasurementElement::new(1.2, e).is_err());
    }

    #[test]
    fn row_d_surface_membership() {
        let rho = family_state(FRAC_PI_2, FRAC_PI_4).unwrap().to_density();
        let d = pauli_decompose(&rho.partial_trace(&[0, 1]).unwrap()).unwrap();
        let ell = ellipsoid(&d);
        assert_eq!(ell.rank, 3);
        let r = steered_bloch(&d, &Vector3::z()).unwrap().bloch;
        assert!((ell.quadric_residual(&r) - 1.0).abs() < 1e-8);
        let inner = steered_bloch(&d, &Vector3::new(0.0, 0.0, 0.5)).unwrap().bloch;
        assert!(ell.quadric_residual(&inner) < 1.0);
    }

    #[test]
    fn ellipsoid_examples() {
        let e = ellipsoid(&decomp_of(&singlet()));
        assert!(e.center.norm() < 1e-15);
        assert!((e.shape - Matrix3::identity()).norm() < 1e-14);
        assert_eq!(e.rank, 3);
        assert!((e.volume - 1.0).abs() < 1e-14);

        let e = ellipsoid(&decomp_of(&PureState::basis("00").unwrap()));
        assert_eq!(e.rank, 0);
        assert_eq!(e.center, Vector3::z());
        assert_eq!(e.volume, 0.0);

        let e = ellipsoid(&pauli_decompose(&bell_diagonal([0.6, 0.1, 0.1, 0.2]).unwrap()).unwrap());
        assert!(e.center.norm() < 1e-15);
        let expected = [0.6, 0.4, 0.4];
        for (s, x) in e.semiaxes.iter().zip(expected) {
            assert!((s - x).abs() < 1e-14);
        }
        assert!((e.axes.row(0).transpose() - Vector3::y()).norm() < 1e-14);
        assert!((e.volume - 0.096).abs() < 1e-14);
    }

    #[test]
    fn volume_examples() {
        let v = normalized_volume(&pauli_decompose(&werner(1.0 / 3.0).unwrap()).unwrap());
        assert!((v - 1.0 / 27.0).abs() < 1e-12);
        let row_b = family_state(FRAC_PI_2, 0.187 * std::f64::consts::PI)
            .unwrap()
            .to_density();
        let vba = normalized_volume(&pauli_decompose(&row_b.partial_trace(&[0, 1]).unwrap()).unwrap());
        let vca = normalized_volume(&pauli_decompose(&row_b.partial_trace(&[0, 2]).unwrap()).unwrap());
        assert!((vba - 0.0944).abs() < 5e-5);
        assert!((vca - 0.4800).abs() < 5e-5);
    }

    #[test]
    fn classify_examples() {
        let c = classify(&decomp_of(&singlet()));
        assert_eq!(c.rank, 3);
        assert!(c.entanglement_witnessed);

        let c = classify(&decomp_of(&PureState::basis("01").unwrap()));
        assert_eq!(c.degeneracy, Degeneracy::Point);
        assert!(!c.entanglement_witnessed);

        let rho = family_state(FRAC_PI_4, FRAC_PI_4).unwrap().to_density();
        for keep in [[0, 1], [0, 2]] {
            let c = classify(&pauli_decompose(&rho.partial_trace(&keep).unwrap()).unwrap());
            assert!(c.rank <= 1, "rank {}", c.rank);
            assert!(!c.entanglement_witnessed);
        }

        // at the bound the witness stays off
        let c = classify(&pauli_decompose(&werner(1.0 / 3.0).unwrap()).unwrap());
        assert!(!c.entanglement_witnessed);
    }

    #[test]
    fn json_layout() {
        let e = ellipsoid(&decomp_of(&singlet()));
        let v: serde_json::Value = serde_json::to_value(&e).unwrap();
        assert_eq!(v["rank"], 3);
        assert_eq!(v["axes"].as_array().unwrap().len(), 3);
        assert_eq!(v["center"].as_array().unwrap().len(), 3);
    }
}
