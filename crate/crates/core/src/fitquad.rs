//! Least-squares quadric fitting of reconstructed steered-state clouds.
//!
//! Two linear fits are run on every cloud:
//!
//! * the regression form `z² = c1x² + c2y² + c3xy + c4xz + c5yz + c6x + c7y + c8z + c9`,
//!   whose residuals on `Y = z²` define SS_res, SS_tot and R²;
//! * a symmetric algebraic fit of the general 10-coefficient quadric (smallest
//!   singular vector of the design matrix in centered, scaled coordinates),
//!   which is the default source of the recovered geometry because it treats
//!   all axes alike.
//!
//! [`refine`] then minimizes radial geometric residuals with Levenberg–Marquardt.

// Negated comparisons below also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::steer::SteeringEllipsoid;

/// A general ellipsoid needs nine points.
pub const MIN_POINTS: usize = 9;
/// Clouds whose smallest covariance eigenvalue is below this are not fitted.
pub const SPREAD_THRESHOLD: f64 = 1e-5;
/// Relative singular-value floor for a well-posed design matrix.
const RANK_TOL: f64 = 1e-10;

pub const REFINE_MAX_ITERATIONS: usize = 100;
pub const REFINE_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("too few points: need {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate point cloud: {0}")]
    Degenerate(String),
    #[error("quadric is not a real ellipsoid")]
    NotAnEllipsoid,
    #[error("non-finite coordinate in point cloud")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Vector3<f64> {
        if self.points.is_empty() {
            return Vector3::zeros();
        }
        self.points.iter().sum::<Vector3<f64>>() / self.points.len() as f64
    }

    fn check(&self) -> Result<(), FitError> {
        if self.points.len() < MIN_POINTS {
            return Err(FitError::TooFewPoints {
                needed: MIN_POINTS,
                got: self.points.len(),
            });
        }
        if self.points.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(FitError::NonFinite);
        }
        Ok(())
    }
}

impl FromIterator<Vector3<f64>> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Vector3<f64>>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    /// All points coincide within the threshold.
    Point,
    /// Spread collapses along at least one direction.
    Degenerate,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpreadDiagnostics {
    /// Bounding-box side lengths along x, y, z.
    pub extents: [f64; 3],
    /// Descending.
    pub covariance_eigenvalues: [f64; 3],
    pub verdict: Verdict,
}

pub fn degenerate_guard(cloud: &PointCloud) -> SpreadDiagnostics {
    degenerate_guard_with(cloud, SPREAD_THRESHOLD)
}

/// As [`degenerate_guard`] with a caller-chosen eigenvalue threshold.
pub fn degenerate_guard_with(cloud: &PointCloud, threshold: f64) -> SpreadDiagnostics {
    if cloud.is_empty() {
        return SpreadDiagnostics {
            extents: [0.0; 3],
            covariance_eigenvalues: [0.0; 3],
            verdict: Verdict::Point,
        };
    }
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in &cloud.points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let m = cloud.centroid();
    let cov = cloud
        .points
        .iter()
        .map(|p| (p - m) * (p - m).transpose())
        .sum::<Matrix3<f64>>()
        / cloud.len() as f64;
    let mut ev: Vec<f64> = SymmetricEigen::new(cov)
        .eigenvalues
        .iter()
        .map(|x| x.max(0.0))
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let verdict = if ev[0] < threshold {
        Verdict::Point
    } else if ev[2] < threshold {
        Verdict::Degenerate
    } else {
        Verdict::Full
    };
    let ext = hi - lo;
    SpreadDiagnostics {
        extents: [ext.x, ext.y, ext.z],
        covariance_eigenvalues: [ev[0], ev[1], ev[2]],
        verdict,
    }
}

/// Which residual SS_res and SS_tot refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualKind {
    /// Y = z² regression residuals.
    AlgebraicZ2,
    /// Radial distance to the ellipsoid surface; SS_tot is the spread about the centroid.
    Radial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryMethod {
    /// Rotation-invariant 10-coefficient fit.
    #[default]
    Symmetric,
    /// Geometry read from the z² regression coefficients.
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FitOptions {
    pub geometry: GeometryMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefineInfo {
    pub iterations: usize,
    /// Radial SS_res of the starting ellipsoid.
    pub initial_ss_res: f64,
    pub converged: bool,
    /// Set when refinement failed and the input fit was returned unchanged.
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadricFit {
    /// c1..c9 of the z² regression form.
    pub coefficients: [f64; 9],
    pub ss_res: f64,
    pub ss_tot: f64,
    pub r_squared: f64,
    pub residual_kind: ResidualKind,
    pub geometry: GeometryMethod,
    /// Present only when the fitted quadric is a real ellipsoid.
    pub recovered: Option<SteeringEllipsoid>,
    pub refinement: Option<RefineInfo>,
}

impl QuadricFit {
    pub fn is_ellipsoid(&self) -> bool {
        self.recovered.is_some()
    }

    pub fn volume(&self) -> Option<f64> {
        self.recovered.as_ref().map(|e| e.volume)
    }
}

fn r_squared(ss_res: f64, ss_tot: f64) -> f64 {
    if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= f64::EPSILON {
        1.0
    } else {
        0.0
    }
}

/// Smallest and largest singular values of `m`.
fn singular_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let sv = m.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    (min, max)
}

/// Least-squares z² regression: returns coefficients and SS_res, SS_tot.
fn regression_fit(cloud: &PointCloud) -> Result<([f64; 9], f64, f64), FitError> {
    let n = cloud.len();
    let design = DMatrix::from_fn(n, 9, |i, j| {
        let p = &cloud.points[i];
        let (x, y, z) = (p.x, p.y, p.z);
        match j {
            0 => x * x,
            1 => y * y,
            2 => x * y,
            3 => x * z,
            4 => y * z,
            5 => x,
            6 => y,
            7 => z,
            _ => 1.0,
        }
    });
    let target = DVector::from_iterator(n, cloud.points.iter().map(|p| p.z * p.z));
    let (smin, smax) = singular_extremes(&design);
    if !(smax > 0.0) || smin < RANK_TOL * smax {
        return Err(FitError::Degenerate(format!(
            "regression design matrix is rank deficient (σmin/σmax = {:e})",
            if smax > 0.0 { smin / smax } else { 0.0 }
        )));
    }
    let svd = design.clone().svd(true, true);
    let sol = svd
        .solve(&target, 0.0)
        .map_err(|e| FitError::Degenerate(e.to_string()))?;
    let fitted = &design * &sol;
    let ss_res = (&target - fitted).norm_squared();
    let mean = target.mean();
    let ss_tot = target.iter().map(|y| (y - mean).powi(2)).sum();
    let mut coefficients = [0.0; 9];
    coefficients.copy_from_slice(sol.as_slice());
    Ok((coefficients, ss_res, ss_tot))
}

/// Real ellipsoid of the implicit quadric rᵀAr + gᵀr + k = 0.
fn implicit_to_ellipsoid(a: &Matrix3<f64>, g: &Vector3<f64>, k: f64) -> Result<SteeringEllipsoid, FitError> {
    let sym = (a + a.transpose()) * 0.5;
    let ev = SymmetricEigen::new(sym).eigenvalues;
    let scale = ev.amax();
    if !(scale > 0.0) {
        return Err(FitError::NotAnEllipsoid);
    }
    let (a, g, k) = if ev.iter().all(|&x| x > 1e-12 * scale) {
        (sym, *g, k)
    } else if ev.iter().all(|&x| x < -1e-12 * scale) {
        (-sym, -g, -k)
    } else {
        return Err(FitError::NotAnEllipsoid);
    };
    let a_inv = a.try_inverse().ok_or(FitError::NotAnEllipsoid)?;
    let center = -0.5 * a_inv * g;
    let level = -(center.dot(&(a * center)) + g.dot(&center) + k);
    if !(level > 0.0) || !level.is_finite() {
        return Err(FitError::NotAnEllipsoid);
    }
    let shape = a_inv * level;
    let shape = (shape + shape.transpose()) * 0.5;
    let volume = shape.determinant().max(0.0).sqrt();
    Ok(SteeringEllipsoid::from_shape(center, shape, volume))
}

/// Center, semiaxes and normalized volume encoded by z² regression coefficients.
pub fn recovered_ellipsoid(coefficients: &[f64; 9]) -> Result<SteeringEllipsoid, FitError> {
    let c = coefficients;
    let a = Matrix3::new(
        c[0],
        0.5 * c[2],
        0.5 * c[3],
        0.5 * c[2],
        c[1],
        0.5 * c[4],
        0.5 * c[3],
        0.5 * c[4],
        -1.0,
    );
    implicit_to_ellipsoid(&a, &Vector3::new(c[5], c[6], c[7]), c[8])
}

/// z² regression coefficients of the ellipsoid (r − c)ᵀ Q⁻¹ (r − c) = 1.
pub fn ellipsoid_coefficients(e: &SteeringEllipsoid) -> Option<[f64; 9]> {
    let m = e.shape.try_inverse()?;
    let g = -2.0 * m * e.center;
    let k = e.center.dot(&(m * e.center)) - 1.0;
    let s = -1.0 / m[(2, 2)];
    if !s.is_finite() {
        return None;
    }
    Some([
        m[(0, 0)] * s,
        m[(1, 1)] * s,
        2.0 * m[(0, 1)] * s,
        2.0 * m[(0, 2)] * s,
        2.0 * m[(1, 2)] * s,
        g.x * s,
        g.y * s,
        g.z * s,
        k * s,
    ])
}

/// Rotation-invariant algebraic fit in centered, RMS-scaled coordinates.
fn symmetric_fit(cloud: &PointCloud) -> Result<SteeringEllipsoid, FitError> {
    let m = cloud.centroid();
    let n = cloud.len();
    let scale = (cloud.points.iter().map(|p| (p - m).norm_squared()).sum::<f64>() / n as f64).sqrt();
    if !(scale > 0.0) {
        return Err(FitError::Degenerate("all points coincide".into()));
    }
    let r2 = std::f64::consts::SQRT_2;
    // pad to at least 10 rows so the SVD yields the full right singular basis
    let rows = n.max(10);
    let design = DMatrix::from_fn(rows, 10, |i, j| {
        if i >= n {
            return 0.0;
        }
        let u = (cloud.points[i] - m) / scale;
        let (x, y, z) = (u.x, u.y, u.z);
        match j {
            0 => x * x,
            1 => y * y,
            2 => z * z,
            3 => r2 * x * y,
            4 => r2 * x * z,
            5 => r2 * y * z,
            6 => x,
            7 => y,
            8 => z,
            _ => 1.0,
        }
    });
    let svd = design.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let smax = svd.singular_values[order[order.len() - 1]];
    let second = svd.singular_values[order[1]];
    if second < RANK_TOL * smax {
        return Err(FitError::Degenerate("quadric through the points is not unique".into()));
    }
    let v: Vec<f64> = v_t.row(order[0]).iter().copied().collect();
    let h = 1.0 / r2;
    let a = Matrix3::new(
        v[0],
        h * v[3],
        h * v[4],
        h * v[3],
        v[1],
        h * v[5],
        h * v[4],
        h * v[5],
        v[2],
    );
    let local = implicit_to_ellipsoid(&a, &Vector3::new(v[6], v[7], v[8]), v[9])?;
    let center = m + local.center * scale;
    let shape = local.shape * (scale * scale);
    Ok(SteeringEllipsoid::from_shape(
        center,
        shape,
        local.volume * scale.powi(3),
    ))
}

pub fn fit(cloud: &PointCloud) -> Result<QuadricFit, FitError> {
    fit_with(cloud, &FitOptions::default())
}

pub fn fit_with(cloud: &PointCloud, options: &FitOptions) -> Result<QuadricFit, FitError> {
    cloud.check()?;
    let (coefficients, ss_res, ss_tot) = regression_fit(cloud)?;
    let recovered = match options.geometry {
        GeometryMethod::Regression => recovered_ellipsoid(&coefficients),
        GeometryMethod::Symmetric => symmetric_fit(cloud),
    };
    let recovered = match recovered {
        Ok(e) => Some(e),
        Err(FitError::NotAnEllipsoid) => None,
        Err(e) => return Err(e),
    };
    Ok(QuadricFit {
        coefficients,
        ss_res,
        ss_tot,
        r_squared: r_squared(ss_res, ss_tot),
        residual_kind: ResidualKind::AlgebraicZ2,
        geometry: options.geometry,
        recovered,
        refinement: None,
    })
}

/// Distance from `p` to the surface along the ray from the center.
fn radial_residual(p: &Vector3<f64>, center: &Vector3<f64>, chol: &Matrix3<f64>) -> f64 {
    let d = p - center;
    let dist = d.norm();
    let u = (chol.transpose() * d).norm();
    if u < 1e-300 {
        return -1.0 / chol.norm();
    }
    dist - dist / u
}

/// Σ radial residual² of a cloud against a nondegenerate ellipsoid.
pub fn radial_ss_res(cloud: &PointCloud, e: &SteeringEllipsoid) -> Option<f64> {
    let m = e.shape.try_inverse()?;
    let chol = m.cholesky()?.l();
    Some(
        cloud
            .points
            .iter()
            .map(|p| radial_residual(p, &e.center, &chol).powi(2))
            .sum(),
    )
}

fn spread_about_centroid(cloud: &PointCloud) -> f64 {
    let m = cloud.centroid();
    cloud.points.iter().map(|p| (p - m).norm_squared()).sum()
}

// θ = [c (3), lower-triangular L (6)] with Q⁻¹ = L Lᵀ
fn pack(center: &Vector3<f64>, chol: &Matrix3<f64>) -> [f64; 9] {
    [
        center.x,
        center.y,
        center.z,
        chol[(0, 0)],
        chol[(1, 0)],
        chol[(1, 1)],
        chol[(2, 0)],
        chol[(2, 1)],
        chol[(2, 2)],
    ]
}

fn unpack(theta: &[f64; 9]) -> (Vector3<f64>, Matrix3<f64>) {
    let c = Vector3::new(theta[0], theta[1], theta[2]);
    let l = Matrix3::new(
        theta[3], 0.0, 0.0, theta[4], theta[5], 0.0, theta[6], theta[7], theta[8],
    );
    (c, l)
}

fn residuals(cloud: &PointCloud, theta: &[f64; 9]) -> DVector<f64> {
    let (c, l) = unpack(theta);
    DVector::from_iterator(cloud.len(), cloud.points.iter().map(|p| radial_residual(p, &c, &l)))
}

fn ellipsoid_from_theta(theta: &[f64; 9]) -> Option<SteeringEllipsoid> {
    let (c, l) = unpack(theta);
    let m = l * l.transpose();
    let q = m.try_inverse()?;
    let q = (q + q.transpose()) * 0.5;
    let volume = q.determinant().max(0.0).sqrt();
    Some(SteeringEllipsoid::from_shape(c, q, volume))
}

/// Levenberg–Marquardt refinement of radial geometric residuals, starting
/// from the recovered ellipsoid of `initial`. The returned fit reports radial
/// SS_res (never larger than that of the start) against SS_tot = spread about
/// the centroid.
pub fn refine(cloud: &PointCloud, initial: &QuadricFit) -> QuadricFit {
    let diverged = |iterations| {
        let mut out = initial.clone();
        out.refinement = Some(RefineInfo {
            iterations,
            initial_ss_res: f64::NAN,
            converged: false,
            diverged: true,
        });
        out
    };
    let Some(start) = initial.recovered.as_ref() else {
        return diverged(0);
    };
    let Some(chol) = start.shape.try_inverse().and_then(|m| m.cholesky()).map(|c| c.l()) else {
        return diverged(0);
    };
    let mut theta = pack(&start.center, &chol);
    let mut r = residuals(cloud, &theta);
    let initial_cost = r.norm_squared();
    if !initial_cost.is_finite() {
        return diverged(0);
    }
    let mut cost = initial_cost;
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < REFINE_MAX_ITERATIONS {
        if cost <= 1e-28 {
            converged = true;
            break;
        }
        iterations += 1;
        let mut jac = DMatrix::zeros(cloud.len(), 9);
        for j in 0..9 {
            let h = 1e-7 * theta[j].abs().max(1e-2);
            let mut plus = theta;
            let mut minus = theta;
            plus[j] += h;
            minus[j] -= h;
            let col = (residuals(cloud, &plus) - residuals(cloud, &minus)) / (2.0 * h);
            jac.set_column(j, &col);
        }
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        let mut accepted = false;
        while lambda < 1e12 {
            let mut lhs = jtj.clone();
            for i in 0..9 {
                lhs[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = lhs.cholesky().map(|c| c.solve(&(-&grad))) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = theta;
            for i in 0..9 {
                trial[i] += step[i];
            }
            let r_trial = residuals(cloud, &trial);
            let trial_cost = r_trial.norm_squared();
            if trial_cost.is_finite() && trial_cost < cost {
                let rel = (cost - trial_cost) / cost;
                theta = trial;
                r = r_trial;
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel < REFINE_REL_TOL {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent direction left at this precision
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }

    let Some(ellipsoid) = ellipsoid_from_theta(&theta) else {
        return diverged(iterations);
    };
    let Some(coefficients) = ellipsoid_coefficients(&ellipsoid) else {
        return diverged(iterations);
    };
    let ss_tot = spread_about_centroid(cloud);
    QuadricFit {
        coefficients,
        ss_res: cost,
        ss_tot,
        r_squared: r_squared(cost, ss_tot),
        residual_kind: ResidualKind::Radial,
        geometry: initial.geometry,
        recovered: Some(ellipsoid),
        refinement: Some(RefineInfo {
            iterations,
            initial_ss_res: initial_cost,
            converged,
            diverged: false,
        }),
    }
}

/// Radial-residual statistics of an unrefined fit, for comparison with [`refine`].
pub fn radial_statistics(cloud: &PointCloud, fit: &QuadricFit) -> Option<(f64, f64, f64)> {
    let e = fit.recovered.as_ref()?;
    let ss_res = radial_ss_res(cloud, e)?;
    let ss_tot = spread_about_centroid(cloud);
    Some((ss_res, ss_tot, r_squared(ss_res, ss_tot)))
}
