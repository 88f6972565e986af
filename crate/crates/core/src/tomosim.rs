//! Simulated steering experiment: Alice's measurement directions, heralded
//! single-qubit tomography of the steered party with binomial shot noise,
//! and Monte Carlo error bars.
//!
//! For direction `e`, the "+" outcome of Alice's projective measurement
//! heralds the steered state; `events_per_point` detections conditioned on
//! that outcome are split as evenly as possible over the x, y, z Pauli axes
//! of the steered qubit.

use log::warn;
use nalgebra::{Matrix2, Matrix3, Vector3};
use num_complex::Complex64;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitquad::PointCloud;
use crate::qstate::{
    embed, flip_conjugate, kron_all, pauli, pauli_decompose, CMatrix, DensityMatrix, PureState, StateError,
};
use crate::random::{task_rng, unit_vector};
use crate::steer::{steered_bloch, SteerError};

const UNIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TomoError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Steer(#[from] SteerError),
    #[error("direction {0:?} is not a unit vector")]
    NotUnit([f64; 3]),
    #[error("rotation matrix is not orthogonal (deviation {0:e})")]
    NotOrthogonal(f64),
    #[error("allocation {allocation:?} does not sum to {total}")]
    BadAllocation { allocation: [u64; 3], total: u64 },
    #[error("axis {0} has no counts")]
    ZeroCountAxis(usize),
    #[error("Bloch vector norm {0} exceeds 1")]
    Unphysical(f64),
    #[error("detector efficiency {0} outside (0, 1]")]
    BadEfficiency(f64),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("state must have 2 or 3 qubits, got {0}")]
    WrongQubitCount(usize),
    #[error("direction set is empty")]
    NoDirections,
    #[error("{0}")]
    Sample(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    UniformRandom,
    Icosahedron,
    Icosahedron9,
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    pub directions: Vec<Vector3<f64>>,
    pub scheme: Scheme,
}

impl DirectionSet {
    pub fn fixed(directions: Vec<Vector3<f64>>) -> Result<Self, TomoError> {
        for d in &directions {
            check_unit(d)?;
        }
        Ok(Self {
            directions,
            scheme: Scheme::Fixed,
        })
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

fn check_unit(d: &Vector3<f64>) -> Result<(), TomoError> {
    if (d.norm() - 1.0).abs() > UNIT_TOL {
        return Err(TomoError::NotUnit([d.x, d.y, d.z]));
    }
    Ok(())
}

/// Uniform direction on the Bloch sphere.
pub fn sample_direction<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    unit_vector(rng)
}

pub fn uniform_directions<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DirectionSet {
    DirectionSet {
        directions: (0..n).map(|_| sample_direction(rng)).collect(),
        scheme: Scheme::UniformRandom,
    }
}

/// The 12 vertices (0, ±1, ±φ) and cyclic permutations, normalized.
pub fn icosahedron_vertices() -> [Vector3<f64>; 12] {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut out = [Vector3::zeros(); 12];
    let mut k = 0;
    for s1 in [1.0, -1.0] {
        for s2 in [1.0, -1.0] {
            let (a, b) = (s1, s2 * phi);
            out[k] = Vector3::new(0.0, a, b).normalize();
            out[k + 1] = Vector3::new(a, b, 0.0).normalize();
            out[k + 2] = Vector3::new(b, 0.0, a).normalize();
            k += 3;
        }
    }
    out
}

/// Icosahedron vertices rotated by `rotation`.
pub fn icosahedron_directions(rotation: &Matrix3<f64>) -> Result<DirectionSet, TomoError> {
    let dev = (rotation.transpose() * rotation - Matrix3::identity()).amax();
    if dev > 1e-10 {
        return Err(TomoError::NotOrthogonal(dev));
    }
    Ok(DirectionSet {
        directions: icosahedron_vertices().iter().map(|v| rotation * v).collect(),
        scheme: Scheme::Icosahedron,
    })
}

/// Indices of nine of the twelve vertices, uniform over the subsets whose
/// three dropped vertices contain no antipodal pair. Dropping both ends of an
/// axis leaves nine points on a pencil of quadrics, so the fit is not unique.
pub fn nine_vertex_indices<R: Rng + ?Sized>(set: &DirectionSet, rng: &mut R) -> Result<Vec<usize>, TomoError> {
    if set.len() < 9 {
        return Err(TomoError::TooFewSamples {
            needed: 9,
            got: set.len(),
        });
    }
    loop {
        let mut picked = index::sample(rng, set.len(), 9).into_vec();
        picked.sort_unstable();
        let dropped: Vec<usize> = (0..set.len()).filter(|i| !picked.contains(i)).collect();
        let antipodal = dropped.iter().enumerate().any(|(k, &a)| {
            dropped[k + 1..]
                .iter()
                .any(|&b| set.directions[a].dot(&set.directions[b]) < -1.0 + 1e-9)
        });
        if !antipodal {
            return Ok(picked);
        }
    }
}

/// Nine vertices chosen by [`nine_vertex_indices`], in vertex order.
pub fn subset_nine<R: Rng + ?Sized>(set: &DirectionSet, rng: &mut R) -> Result<DirectionSet, TomoError> {
    let picked = nine_vertex_indices(set, rng)?;
    Ok(DirectionSet {
        directions: picked.into_iter().map(|i| set.directions[i]).collect(),
        scheme: Scheme::Icosahedron9,
    })
}

/// `total` split over three axes as evenly as possible, remainder to x first.
pub fn even_allocation(total: u64) -> [u64; 3] {
    let base = total / 3;
    let rem = total % 3;
    [base + u64::from(rem > 0), base + u64::from(rem > 1), base]
}

/// Per-detector efficiencies of the "+" and "−" ports of the steered party's
/// analyser. Losses bias the heralded ratio; [`reconstruct_corrected`] undoes it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub efficiency_plus: f64,
    pub efficiency_minus: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            efficiency_plus: 1.0,
            efficiency_minus: 1.0,
        }
    }
}

impl DetectorModel {
    pub fn validate(&self) -> Result<(), TomoError> {
        for eta in [self.efficiency_plus, self.efficiency_minus] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(TomoError::BadEfficiency(eta));
            }
        }
        Ok(())
    }

    /// Probability that a recorded click is "+" given the true probability.
    fn detected_plus(&self, p_plus: f64) -> f64 {
        let a = p_plus * self.efficiency_plus;
        let b = (1.0 - p_plus) * self.efficiency_minus;
        if a + b <= 0.0 {
            0.5
        } else {
            a / (a + b)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisCounts {
    pub plus: u64,
    pub minus: u64,
}

impl AxisCounts {
    pub fn total(&self) -> u64 {
        self.plus + self.minus
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub direction: Vector3<f64>,
    /// x, y, z
    pub axis_counts: [AxisCounts; 3],
    pub total_events: u64,
}

fn check_allocation(total: u64, allocation: [u64; 3]) -> Result<(), TomoError> {
    if allocation.iter().sum::<u64>() != total {
        return Err(TomoError::BadAllocation { allocation, total });
    }
    Ok(())
}

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> Result<u64, TomoError> {
    let p = p.clamp(0.0, 1.0);
    let dist = Binomial::new(n, p).map_err(|e| TomoError::Sample(e.to_string()))?;
    Ok(dist.sample(rng))
}

/// n_plus ~ Binomial(N_k, (1 + r_k)/2) per axis.
pub fn simulate_counts<R: Rng + ?Sized>(
    r: &Vector3<f64>,
    total_events: u64,
    allocation: [u64; 3],
    rng: &mut R,
) -> Result<CountRecord, TomoError> {
    simulate_counts_with(
        r,
        Vector3::zeros(),
        total_events,
        allocation,
        &DetectorModel::default(),
        rng,
    )
}

/// As [`simulate_counts`] with detector losses; `direction` is recorded only.
pub fn simulate_counts_with<R: Rng + ?Sized>(
    r: &Vector3<f64>,
    direction: Vector3<f64>,
    total_events: u64,
    allocation: [u64; 3],
    detector: &DetectorModel,
    rng: &mut R,
) -> Result<CountRecord, TomoError> {
    check_allocation(total_events, allocation)?;
    detector.validate()?;
    let n = r.norm();
    if n > 1.0 + 1e-10 {
        return Err(TomoError::Unphysical(n));
    }
    let mut axis_counts = [AxisCounts { plus: 0, minus: 0 }; 3];
    for k in 0..3 {
        let p = detector.detected_plus(0.5 * (1.0 + r[k]));
        let plus = binomial(allocation[k], p, rng)?;
        axis_counts[k] = AxisCounts {
            plus,
            minus: allocation[k] - plus,
        };
    }
    Ok(CountRecord {
        direction,
        axis_counts,
        total_events,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TomoEstimate {
    pub bloch_hat: Vector3<f64>,
    /// Per-component standard error.
    pub stderr: Vector3<f64>,
    /// Set when the raw estimate left the unit ball and was projected back.
    pub projected: bool,
}

/// Linear inversion b_k = (n₊ − n₋)/N_k with stderr √((1 − b_k²)/N_k).
pub fn reconstruct(c: &CountRecord) -> Result<TomoEstimate, TomoError> {
    reconstruct_corrected(c, &DetectorModel::default())
}

/// Linear inversion after dividing each port's counts by its efficiency.
pub fn reconstruct_corrected(c: &CountRecord, detector: &DetectorModel) -> Result<TomoEstimate, TomoError> {
    detector.validate()?;
    let mut b = Vector3::zeros();
    let mut se = Vector3::zeros();
    for k in 0..3 {
        let counts = c.axis_counts[k];
        let n = counts.total();
        if n == 0 {
            return Err(TomoError::ZeroCountAxis(k));
        }
        let plus = counts.plus as f64 / detector.efficiency_plus;
        let minus = counts.minus as f64 / detector.efficiency_minus;
        let bk = (plus - minus) / (plus + minus);
        b[k] = bk;
        se[k] = ((1.0 - bk * bk).max(0.0) / n as f64).sqrt();
    }
    let norm = b.norm();
    let projected = norm > 1.0;
    if projected {
        b /= norm;
    }
    Ok(TomoEstimate {
        bloch_hat: b,
        stderr: se,
        projected,
    })
}

/// Steered party, with its qubit index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Party {
    B,
    C,
}

impl Party {
    pub fn qubit(self) -> usize {
        match self {
            Party::B => 1,
            Party::C => 2,
        }
    }
}

/// How the statistics of the state are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Preparation {
    /// Directly from ρ.
    Direct,
    /// For ρ = ½(|ψ⟩⟨ψ| + X⊗X⊗X|ψ⟩⟨ψ|X⊗X⊗X): every measurement M is replaced,
    /// with equal probability, by M on |ψ⟩ or M′ = X⊗X⊗X M X⊗X⊗X on |ψ⟩.
    FlipMixing(PureState),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSettings {
    /// Heralded detections per direction; `None` uses the exact probabilities.
    pub events_per_point: Option<u64>,
    pub detector: DetectorModel,
    pub preparation: Preparation,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            events_per_point: Some(50_000),
            detector: DetectorModel::default(),
            preparation: Preparation::Direct,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteeredPoint {
    pub direction: Vector3<f64>,
    /// Noiseless steered Bloch vector.
    pub exact: Vector3<f64>,
    pub estimate: TomoEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartyCloud {
    pub party: Party,
    pub points: Vec<SteeredPoint>,
    /// Directions dropped because Alice's heralding outcome has probability zero.
    pub skipped: usize,
}

impl PartyCloud {
    pub fn cloud(&self) -> PointCloud {
        self.points.iter().map(|p| p.estimate.bloch_hat).collect()
    }

    /// Mean over points and components of the squared standard error.
    pub fn noise_variance(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        self.points
            .iter()
            .map(|p| p.estimate.stderr.norm_squared() / 3.0)
            .sum::<f64>()
            / self.points.len() as f64
    }

    pub fn mean_stderr(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        self.points.iter().map(|p| p.estimate.stderr.sum() / 3.0).sum::<f64>() / self.points.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub clouds: Vec<PartyCloud>,
}

impl ExperimentResult {
    pub fn party(&self, party: Party) -> Option<&PartyCloud> {
        self.clouds.iter().find(|c| c.party == party)
    }
}

fn projector_along(e: &Vector3<f64>, sign: f64) -> Matrix2<Complex64> {
    let mut m = Matrix2::identity();
    for k in 0..3 {
        m += pauli(k) * Complex64::new(sign * e[k], 0.0);
    }
    m * Complex64::new(0.5, 0.0)
}

/// Heralding probability and conditional "+" probabilities per axis for one
/// branch of the flip-mixing preparation.
struct Branch {
    herald: f64,
    plus_given_herald: [f64; 3],
}

fn flip_branches(psi: &PureState, e: &Vector3<f64>, party: Party) -> Result<[Branch; 2], TomoError> {
    let rho = psi.to_density();
    let alice = embed(&projector_along(e, 1.0), 0, 3);
    let alice_flip = flip_conjugate(&alice)?;
    let mut herald = [rho.expectation(&alice)?, rho.expectation(&alice_flip)?];
    let mut plus = [[0.0; 3]; 2];
    for k in 0..3 {
        let mut axis = Vector3::zeros();
        axis[k] = 1.0;
        let factors: Vec<_> = (0..3)
            .map(|q| {
                if q == 0 {
                    projector_along(e, 1.0)
                } else if q == party.qubit() {
                    projector_along(&axis, 1.0)
                } else {
                    Matrix2::identity()
                }
            })
            .collect();
        let m: CMatrix = kron_all(&factors);
        let joint = [rho.expectation(&m)?, rho.expectation(&flip_conjugate(&m)?)?];
        for j in 0..2 {
            plus[j][k] = if herald[j] > 0.0 {
                (joint[j] / herald[j]).clamp(0.0, 1.0)
            } else {
                0.5
            };
        }
    }
    for h in herald.iter_mut() {
        *h = h.max(0.0);
    }
    Ok([
        Branch {
            herald: herald[0],
            plus_given_herald: plus[0],
        },
        Branch {
            herald: herald[1],
            plus_given_herald: plus[1],
        },
    ])
}

fn flip_mixing_counts<R: Rng + ?Sized>(
    branches: &[Branch; 2],
    direction: Vector3<f64>,
    total: u64,
    allocation: [u64; 3],
    detector: &DetectorModel,
    rng: &mut R,
) -> Result<CountRecord, TomoError> {
    let w_first = branches[0].herald / (branches[0].herald + branches[1].herald);
    let mut axis_counts = [AxisCounts { plus: 0, minus: 0 }; 3];
    for k in 0..3 {
        let first = binomial(allocation[k], w_first, rng)?;
        let second = allocation[k] - first;
        let plus = binomial(first, detector.detected_plus(branches[0].plus_given_herald[k]), rng)?
            + binomial(second, detector.detected_plus(branches[1].plus_given_herald[k]), rng)?;
        axis_counts[k] = AxisCounts {
            plus,
            minus: allocation[k] - plus,
        };
    }
    Ok(CountRecord {
        direction,
        axis_counts,
        total_events: total,
    })
}

fn steered_parties(qubits: usize) -> Result<&'static [Party], TomoError> {
    match qubits {
        2 => Ok(&[Party::B]),
        3 => Ok(&[Party::B, Party::C]),
        n => Err(TomoError::WrongQubitCount(n)),
    }
}

/// Runs the steering experiment for every direction. Direction `i` draws
/// its shot noise from `task_rng(seed, i)`, so the output does not depend on
/// the thread count.
pub fn run_experiment(
    rho: &DensityMatrix,
    dirs: &DirectionSet,
    settings: &ExperimentSettings,
    seed: u64,
) -> Result<ExperimentResult, TomoError> {
    if dirs.is_empty() {
        return Err(TomoError::NoDirections);
    }
    settings.detector.validate()?;
    let parties = steered_parties(rho.qubits())?;
    if let Preparation::FlipMixing(psi) = &settings.preparation {
        if psi.qubits() != 3 {
            return Err(TomoError::WrongQubitCount(psi.qubits()));
        }
    }
    let mut clouds = Vec::with_capacity(parties.len());
    for (slot, &party) in parties.iter().enumerate() {
        let marginal = if rho.qubits() == 2 {
            rho.clone()
        } else {
            rho.partial_trace(&[0, party.qubit()])?
        };
        let decomposition = pauli_decompose(&marginal)?;
        let results: Vec<Result<Option<SteeredPoint>, TomoError>> = dirs
            .directions
            .par_iter()
            .enumerate()
            .map(|(i, e)| {
                let exact = match steered_bloch(&decomposition, e) {
                    Ok(s) => s.bloch,
                    Err(SteerError::ZeroProbability(p)) => {
                        warn!("skipping direction {i}: heralding probability {p:e}");
                        return Ok(None);
                    }
                    Err(err) => return Err(err.into()),
                };
                let estimate = match settings.events_per_point {
                    None => TomoEstimate {
                        bloch_hat: exact,
                        stderr: Vector3::zeros(),
                        projected: false,
                    },
                    Some(total) => {
                        let mut rng = task_rng(seed, (slot as u64) << 32 | i as u64);
                        let allocation = even_allocation(total);
                        let counts = match &settings.preparation {
                            Preparation::Direct => {
                                simulate_counts_with(&exact, *e, total, allocation, &settings.detector, &mut rng)?
                            }
                            Preparation::FlipMixing(psi) => {
                                let branches = flip_branches(psi, e, party)?;
                                flip_mixing_counts(&branches, *e, total, allocation, &settings.detector, &mut rng)?
                            }
                        };
                        reconstruct_corrected(&counts, &settings.detector)?
                    }
                };
                Ok(Some(SteeredPoint {
                    direction: *e,
                    exact,
                    estimate,
                }))
            })
            .collect();
        let mut points = Vec::with_capacity(results.len());
        let mut skipped = 0;
        for r in results {
            match r? {
                Some(p) => points.push(p),
                None => skipped += 1,
            }
        }
        clouds.push(PartyCloud { party, points, skipped });
    }
    Ok(ExperimentResult { clouds })
}

/// Counts of the "1" outcome of projector `p` over `shots` measurements of ρ.
pub fn sample_projector_direct<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    p: &CMatrix,
    shots: u64,
    rng: &mut R,
) -> Result<u64, TomoError> {
    binomial(shots, rho.expectation(p)?, rng)
}

/// Same statistic generated from |ψ⟩ alone: each shot measures `p` or its
/// flip conjugate with probability ½.
pub fn sample_projector_flip_mixing<R: Rng + ?Sized>(
    psi: &PureState,
    p: &CMatrix,
    shots: u64,
    rng: &mut R,
) -> Result<u64, TomoError> {
    let rho = psi.to_density();
    let first = binomial(shots, 0.5, rng)?;
    let p_flip = flip_conjugate(p)?;
    Ok(binomial(first, rho.expectation(p)?, rng)? + binomial(shots - first, rho.expectation(&p_flip)?, rng)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub samples: usize,
    pub mean: Vec<f64>,
    /// Sample standard deviation (n − 1 denominator).
    pub std: Vec<f64>,
}

/// Reruns `experiment` with `samples` derived seeds and reports the spread of
/// each returned scalar. Sample `i` receives the first `u64` of
/// `task_rng(master_seed, i)` as its seed.
pub fn monte_carlo_errors<F, E>(samples: usize, master_seed: u64, experiment: F) -> Result<McSummary, E>
where
    F: Fn(u64) -> Result<Vec<f64>, E> + Sync,
    E: Send + From<TomoError>,
{
    if samples < 2 {
        return Err(TomoError::TooFewSamples {
            needed: 2,
            got: samples,
        }
        .into());
    }
    let runs: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| experiment(task_rng(master_seed, i as u64).random::<u64>()))
        .collect::<Result<_, E>>()?;
    let width = runs[0].len();
    let mut mean = vec![0.0; width];
    let mut std = vec![0.0; width];
    for j in 0..width {
        let vals: Vec<f64> = runs.iter().map(|r| r.get(j).copied().unwrap_or(f64::NAN)).collect();
        let m = vals.iter().sum::<f64>() / samples as f64;
        let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (samples - 1) as f64;
        mean[j] = m;
        std[j] = var.sqrt();
    }
    Ok(McSummary { samples, mean, std })
}
