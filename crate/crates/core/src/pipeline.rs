//! End-to-end runs: state → directions → simulated tomography → quadric fit
//! → volumes and monogamy, plus the table and icosahedron studies.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{table_s1_rows, ConfigError, ExperimentConfig, SchemeSpec, StateSpec};
use crate::fitquad::{
    degenerate_guard_with, fit, refine, FitError, PointCloud, QuadricFit, SpreadDiagnostics, Verdict, SPREAD_THRESHOLD,
};
use crate::monogamy::{report, report_from_volumes, MonogamyError, MonogamyReport};
use crate::qstate::{bell_diagonal, pauli_decompose, DensityMatrix, StateError};
use crate::random::{random_rotation, task_rng};
use crate::steer::{ellipsoid, SteeringEllipsoid};
use crate::tomosim::{
    icosahedron_directions, monte_carlo_errors, nine_vertex_indices, run_experiment, subset_nine, uniform_directions,
    DirectionSet, ExperimentResult, ExperimentSettings, Party, TomoError,
};

/// Stream reserved for drawing measurement directions.
const DIRECTION_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Tomo(#[from] TomoError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Monogamy(#[from] MonogamyError),
}

/// Directions for one run, drawn from a stream of `seed` that shot noise never uses.
pub fn directions(scheme: &SchemeSpec, seed: u64) -> Result<DirectionSet, TomoError> {
    let mut rng = task_rng(seed, DIRECTION_STREAM);
    match scheme {
        SchemeSpec::Uniform { n } => Ok(uniform_directions(*n, &mut rng)),
        SchemeSpec::Icosahedron => icosahedron_directions(&random_rotation(&mut rng)),
        SchemeSpec::Icosahedron9 => {
            let twelve = icosahedron_directions(&random_rotation(&mut rng))?;
            subset_nine(&twelve, &mut rng)
        }
    }
}

/// Marginal of Alice and `party` (the whole state for two qubits).
pub fn marginal(rho: &DensityMatrix, party: Party) -> Result<DensityMatrix, StateError> {
    if rho.qubits() == 2 {
        Ok(rho.clone())
    } else {
        rho.partial_trace(&[0, party.qubit()])
    }
}

pub fn parties_of(rho: &DensityMatrix) -> &'static [Party] {
    if rho.qubits() == 2 {
        &[Party::B]
    } else {
        &[Party::B, Party::C]
    }
}

/// Analytic ellipsoids ℰ_{B|A} (and ℰ_{C|A} for three qubits).
pub fn analytic(rho: &DensityMatrix) -> Result<Vec<(Party, SteeringEllipsoid)>, PipelineError> {
    parties_of(rho)
        .iter()
        .map(|&p| Ok((p, ellipsoid(&pauli_decompose(&marginal(rho, p)?)?))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CloudAnalysis {
    /// Covariance eigenvalue threshold applied by the guard.
    pub spread_threshold: f64,
    pub diagnostics: SpreadDiagnostics,
    /// Absent when the guard found a collapsed cloud.
    pub fit: Option<QuadricFit>,
    pub refined: Option<QuadricFit>,
    /// Volume of the recovered ellipsoid (refined when requested); zero for
    /// collapsed clouds; absent when the fitted quadric is not an ellipsoid.
    pub fitted_volume: Option<f64>,
}

/// A cloud direction whose variance is below this multiple of the mean
/// per-component shot-noise variance is treated as collapsed.
pub const NOISE_FLOOR_FACTOR: f64 = 4.0;

/// Eigenvalue threshold for the spread guard given the points' mean
/// per-component variance from tomography.
pub fn spread_threshold(noise_variance: f64) -> f64 {
    SPREAD_THRESHOLD.max(NOISE_FLOOR_FACTOR * noise_variance)
}

/// Guard, fit and (optionally) refine one cloud. `noise_variance` is the
/// mean per-component variance of the points, zero for exact data.
pub fn analyze_cloud(
    cloud: &PointCloud,
    with_refinement: bool,
    noise_variance: f64,
) -> Result<CloudAnalysis, FitError> {
    let threshold = spread_threshold(noise_variance);
    let diagnostics = degenerate_guard_with(cloud, threshold);
    if diagnostics.verdict != Verdict::Full {
        return Ok(CloudAnalysis {
            spread_threshold: threshold,
            diagnostics,
            fit: None,
            refined: None,
            fitted_volume: Some(0.0),
        });
    }
    let algebraic = fit(cloud)?;
    let refined = with_refinement.then(|| refine(cloud, &algebraic));
    let fitted_volume = refined
        .as_ref()
        .filter(|r| !r.refinement.map(|i| i.diverged).unwrap_or(false))
        .and_then(|r| r.volume())
        .or_else(|| algebraic.volume());
    Ok(CloudAnalysis {
        spread_threshold: threshold,
        diagnostics,
        fit: Some(algebraic),
        refined,
        fitted_volume,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartyAnalysis {
    pub party: Party,
    pub theory: SteeringEllipsoid,
    pub analysis: CloudAnalysis,
    pub points: usize,
    pub skipped: usize,
    pub mean_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationOutput {
    pub state: StateSpec,
    pub seed: u64,
    pub parties: Vec<PartyAnalysis>,
    /// From the analytic volumes; three-qubit states only.
    pub monogamy_theory: Option<MonogamyReport>,
    /// From the fitted volumes; three-qubit states only.
    pub monogamy_fitted: Option<MonogamyReport>,
    #[serde(skip)]
    pub experiment: ExperimentResult,
}

impl SimulationOutput {
    pub fn party(&self, party: Party) -> Option<&PartyAnalysis> {
        self.parties.iter().find(|p| p.party == party)
    }
}

pub fn simulate(config: &ExperimentConfig, seed: u64) -> Result<SimulationOutput, PipelineError> {
    config.validate()?;
    let rho = config.prepared_state()?;
    let dirs = directions(&config.scheme, seed)?;
    simulate_with(config, &rho, &dirs, seed)
}

fn simulate_with(
    config: &ExperimentConfig,
    rho: &DensityMatrix,
    dirs: &DirectionSet,
    seed: u64,
) -> Result<SimulationOutput, PipelineError> {
    let settings: ExperimentSettings = config.settings();
    let experiment = run_experiment(rho, dirs, &settings, seed)?;
    let theory = analytic(rho)?;
    let mut parties = Vec::new();
    for (party, ell) in theory {
        let cloud = experiment.party(party).expect("experiment covers every party");
        let analysis = analyze_cloud(&cloud.cloud(), config.refine, cloud.noise_variance())?;
        parties.push(PartyAnalysis {
            party,
            theory: ell,
            analysis,
            points: cloud.points.len(),
            skipped: cloud.skipped,
            mean_stderr: cloud.mean_stderr(),
        });
    }
    let (monogamy_theory, monogamy_fitted) = if rho.qubits() == 3 {
        let fitted = match (parties[0].analysis.fitted_volume, parties[1].analysis.fitted_volume) {
            (Some(b), Some(c)) => Some(report_from_volumes(rho, b, c)?),
            _ => None,
        };
        (Some(report(rho)?), fitted)
    } else {
        (None, None)
    };
    Ok(SimulationOutput {
        state: config.state.clone(),
        seed,
        parties,
        monogamy_theory,
        monogamy_fitted,
        experiment,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableS1Row {
    pub label: char,
    pub state: StateSpec,
    pub v_ba_theory: f64,
    pub v_ca_theory: f64,
    pub v_ba_sim: Option<f64>,
    pub v_ba_std: f64,
    pub v_ca_sim: Option<f64>,
    pub v_ca_std: f64,
    pub r2_ba: Option<f64>,
    pub r2_ca: Option<f64>,
    pub ss_res_ba: Option<f64>,
    pub ss_res_ca: Option<f64>,
}

/// Analytic volumes for every table row.
pub fn table_s1_theory() -> Result<Vec<(char, f64, f64)>, PipelineError> {
    table_s1_rows()
        .into_iter()
        .map(|row| {
            let rho = row.state.density()?;
            let r = report(&rho)?;
            Ok((row.label, r.v_ba, r.v_ca))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableOptions {
    pub directions: usize,
    pub events_per_point: u64,
    /// Monte Carlo resamples of the counts for the error bars.
    pub samples: usize,
    pub seed: u64,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self {
            directions: 1000,
            events_per_point: 50_000,
            samples: 100,
            seed: 1,
        }
    }
}

fn volume_pair(out: &SimulationOutput) -> Vec<f64> {
    out.parties
        .iter()
        .map(|p| p.analysis.fitted_volume.unwrap_or(f64::NAN))
        .collect()
}

/// Theory and simulated volumes for rows a–l. Row `i` uses seed stream `i`;
/// error bars are the spread over `samples` resampled count sets on the same
/// directions.
pub fn table_s1(options: &TableOptions) -> Result<Vec<TableS1Row>, PipelineError> {
    table_s1_rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let row_seed: u64 = task_rng(options.seed, i as u64).random();
            let mut config = ExperimentConfig::new(row.state.clone());
            config.scheme = SchemeSpec::Uniform { n: options.directions };
            config.events_per_point = Some(options.events_per_point);
            let rho = config.prepared_state()?;
            let dirs = directions(&config.scheme, row_seed)?;
            let main = simulate_with(&config, &rho, &dirs, row_seed)?;
            let mc = monte_carlo_errors(options.samples, row_seed ^ 0x5EED, |s| {
                simulate_with(&config, &rho, &dirs, s).map(|o| volume_pair(&o))
            })?;
            let theory = main.monogamy_theory.clone().expect("three-qubit row");
            let b = &main.parties[0].analysis;
            let c = &main.parties[1].analysis;
            Ok(TableS1Row {
                label: row.label,
                state: row.state,
                v_ba_theory: theory.v_ba,
                v_ca_theory: theory.v_ca,
                v_ba_sim: b.fitted_volume,
                v_ba_std: mc.std[0],
                v_ca_sim: c.fitted_volume,
                v_ca_std: mc.std[1],
                r2_ba: b.fit.as_ref().map(|f| f.r_squared),
                r2_ca: c.fit.as_ref().map(|f| f.r_squared),
                ss_res_ba: b.fit.as_ref().map(|f| f.ss_res),
                ss_res_ca: c.fit.as_ref().map(|f| f.ss_res),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessSummary {
    pub runs: usize,
    pub events_per_point: u64,
    pub theory_volume: f64,
    pub volumes_12: Vec<f64>,
    pub volumes_9: Vec<f64>,
    pub mean_12: f64,
    pub std_12: f64,
    pub mean_9: f64,
    pub std_9: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

/// Repeated icosahedron runs on a Bell-diagonal state: each run rotates the
/// icosahedron at random, reconstructs Bob's twelve steered states, and fits
/// both all twelve points and a random nine of them.
pub fn icosahedron_robustness(
    weights: [f64; 4],
    runs: usize,
    events_per_point: u64,
    seed: u64,
) -> Result<RobustnessSummary, PipelineError> {
    let rho = bell_diagonal(weights)?;
    let theory_volume = ellipsoid(&pauli_decompose(&rho)?).volume;
    let settings = ExperimentSettings {
        events_per_point: Some(events_per_point),
        ..ExperimentSettings::default()
    };
    let pairs: Vec<(f64, f64)> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = task_rng(seed, r as u64);
            let dirs = icosahedron_directions(&random_rotation(&mut rng))?;
            let run_seed: u64 = rng.random();
            let exp = run_experiment(&rho, &dirs, &settings, run_seed)?;
            let cloud = exp.clouds[0].cloud();
            let v12 = fit(&cloud)?.volume().ok_or(FitError::NotAnEllipsoid)?;
            let nine: PointCloud = nine_vertex_indices(&dirs, &mut rng)?
                .into_iter()
                .map(|i| cloud.points[i])
                .collect();
            let v9 = fit(&nine)?.volume().ok_or(FitError::NotAnEllipsoid)?;
            Ok((v12, v9))
        })
        .collect::<Result<_, PipelineError>>()?;
    let volumes_12: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let volumes_9: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (mean_12, std_12) = mean_std(&volumes_12);
    let (mean_9, std_9) = mean_std(&volumes_9);
    Ok(RobustnessSummary {
        runs,
        events_per_point,
        theory_volume,
        volumes_12,
        volumes_9,
        mean_12,
        std_12,
        mean_9,
        std_9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn directions_follow_scheme() {
        assert_eq!(directions(&SchemeSpec::Uniform { n: 17 }, 1).unwrap().len(), 17);
        assert_eq!(directions(&SchemeSpec::Icosahedron, 1).unwrap().len(), 12);
        assert_eq!(directions(&SchemeSpec::Icosahedron9, 1).unwrap().len(), 9);
        assert_eq!(
            directions(&SchemeSpec::Icosahedron, 5),
            directions(&SchemeSpec::Icosahedron, 5)
        );
    }

    #[test]
    fn exact_simulation_recovers_theory() {
        let mut cfg = ExperimentConfig::new(StateSpec::Family {
            alpha: FRAC_PI_2,
            beta: FRAC_PI_4,
        });
        cfg.events_per_point = None;
        cfg.scheme = SchemeSpec::Uniform { n: 200 };
        let out = simulate(&cfg, 3).unwrap();
        for p in &out.parties {
            let v = p.analysis.fitted_volume.unwrap();
            assert!((v - 0.25).abs() < 1e-8, "{v}");
            assert!((p.analysis.fit.as_ref().unwrap().r_squared - 1.0).abs() < 1e-10);
        }
        let m = out.monogamy_fitted.unwrap();
        assert!(m.pure_residual.abs() < 1e-8);
    }

    #[test]
    fn collapsed_clouds_skip_fitting() {
        let mut cfg = ExperimentConfig::new(StateSpec::Family {
            alpha: FRAC_PI_2,
            beta: 0.0,
        });
        cfg.scheme = SchemeSpec::Uniform { n: 200 };
        let out = simulate(&cfg, 4).unwrap();
        let b = out.party(Party::B).unwrap();
        assert_eq!(b.analysis.diagnostics.verdict, Verdict::Point);
        assert!(b.analysis.fit.is_none());
        assert_eq!(b.analysis.fitted_volume, Some(0.0));
        let c = out.party(Party::C).unwrap();
        assert_eq!(c.analysis.diagnostics.verdict, Verdict::Full);
    }

    #[test]
    fn two_qubit_runs_have_one_party() {
        let mut cfg = ExperimentConfig::new(StateSpec::TwoQubit { gamma: FRAC_PI_4 });
        cfg.scheme = SchemeSpec::Uniform { n: 100 };
        let out = simulate(&cfg, 2).unwrap();
        assert_eq!(out.parties.len(), 1);
        assert!(out.monogamy_theory.is_none());
        assert!((out.parties[0].theory.volume - 1.0).abs() < 1e-12);
    }

    #[test]
    fn theory_table_rows() {
        let t = table_s1_theory().unwrap();
        assert_eq!(t.len(), 12);
        assert_eq!(t[3].0, 'd');
        assert!((t[3].1 - 0.25).abs() < 1e-12);
    }
}
