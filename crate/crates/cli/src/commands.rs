use std::f64::consts::PI;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use nalgebra::Vector3;
use serde::Serialize;

use qsteer::config::{table_s1_rows, w_grid_betas, ExperimentConfig, PreparationSpec, SchemeSpec, StateSpec};
use qsteer::fitquad::{
    degenerate_guard_with, fit_with, refine, FitOptions, GeometryMethod, QuadricFit, SpreadDiagnostics, Verdict,
};
use qsteer::monogamy::{ckw_check, report, CkwReport, MonogamyReport, PURE_TOL};
use qsteer::pipeline::{
    analytic, icosahedron_robustness, marginal, simulate, spread_threshold, table_s1, table_s1_theory,
    RobustnessSummary, TableOptions,
};
use qsteer::qstate::{family_state, pauli_decompose};
use qsteer::steer::{classify, Classification, SteeringEllipsoid};
use qsteer::tomosim::{DetectorModel, Party};

use crate::output::{
    cloud_rows, ensure_dir, num, opt, print_json, read_cloud, write_csv, write_csv_file, write_json, CLOUD_HEADER,
};
use crate::state::StateArgs;
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "qsteer", version, about = "Quantum steering ellipsoids and volume monogamy")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analytic steering ellipsoids of a state.
    Ellipsoid(EllipsoidArgs),
    /// Simulated steering experiment: point clouds, quadric fits, monogamy.
    Simulate(SimulateArgs),
    /// Fit an ellipsoid to a point-cloud CSV.
    Fit(FitArgs),
    /// Volume monogamy and CKW report, or a sweep over the state family.
    Monogamy(MonogamyArgs),
    /// Theory and simulated volumes for the twelve tabulated states.
    TableS1(TableArgs),
    /// Repeated icosahedron runs on a Bell-diagonal state.
    IcosahedronRobustness(RobustnessArgs),
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ellipsoid(a) => ellipsoid_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Monogamy(a) => monogamy_cmd(a),
        Command::TableS1(a) => table_cmd(a),
        Command::IcosahedronRobustness(a) => robustness_cmd(a),
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        info!("no seed given; using seed {s}");
        s
    })
}

fn party_name(p: Party) -> &'static str {
    match p {
        Party::B => "B",
        Party::C => "C",
    }
}

// ---------------------------------------------------------------- ellipsoid

#[derive(Debug, Args)]
pub struct EllipsoidArgs {
    #[command(flatten)]
    state: StateArgs,
    /// Also write a surface mesh with this many latitude and longitude steps.
    #[arg(long, value_name = "N", default_value_t = 0)]
    mesh: usize,
    /// Directory for ellipsoid.json and surface meshes.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct PartyGeometry {
    party: Party,
    ellipsoid: SteeringEllipsoid,
    classification: Classification,
}

#[derive(Serialize)]
struct EllipsoidOutput {
    state: StateSpec,
    qubits: usize,
    parties: Vec<PartyGeometry>,
}

fn surface_mesh(e: &SteeringEllipsoid, n: usize) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for i in 0..=n {
        let theta = PI * i as f64 / n as f64;
        for j in 0..n {
            let phi = 2.0 * PI * j as f64 / n as f64;
            let u = Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
            let r = e.surface_point(&u);
            rows.push(vec![num(r.x), num(r.y), num(r.z)]);
        }
    }
    rows
}

fn ellipsoid_cmd(a: EllipsoidArgs) -> Result<(), CliError> {
    let spec = a.state.require()?;
    let rho = spec.density().map_err(|e| CliError::Config(e.to_string()))?;
    let mut parties = Vec::new();
    for (party, ellipsoid) in analytic(&rho)? {
        let d = pauli_decompose(&marginal(&rho, party).map_err(|e| CliError::Runtime(e.to_string()))?)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        parties.push(PartyGeometry {
            party,
            ellipsoid,
            classification: classify(&d),
        });
    }
    let out = EllipsoidOutput {
        qubits: spec.qubits(),
        state: spec,
        parties,
    };
    if let Some(dir) = &a.out {
        ensure_dir(dir)?;
        write_json(dir, "ellipsoid.json", &out)?;
        if a.mesh > 0 {
            for p in &out.parties {
                let path = dir.join(format!("surface_{}.csv", party_name(p.party)));
                write_csv_file(&path, &["x", "y", "z"], &surface_mesh(&p.ellipsoid, a.mesh))?;
            }
        }
    }
    print_json(&out)
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeArg {
    Uniform,
    Icosahedron,
    #[value(name = "icosahedron-9")]
    Icosahedron9,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    state: StateArgs,
    /// JSON experiment config (angles in radians). Flags override its fields.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Number of directions for the uniform scheme.
    #[arg(long, value_name = "N")]
    directions: Option<usize>,
    /// Heralded detection events per direction.
    #[arg(long, value_name = "N")]
    events: Option<u64>,
    /// Use exact probabilities instead of finite counts.
    #[arg(long, conflicts_with = "events")]
    exact: bool,
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
    /// White-noise weight λ in (1 − λ)ρ + λ I/d.
    #[arg(long, value_name = "L")]
    noise: Option<f64>,
    /// Detector efficiencies of the + and − ports.
    #[arg(long, num_args = 2, value_names = ["PLUS", "MINUS"])]
    efficiencies: Option<Vec<f64>>,
    /// Generate the mixed W statistics from |χ1⟩ alone.
    #[arg(long)]
    flip_mixing: bool,
    /// Refine fits with geometric Levenberg–Marquardt.
    #[arg(long)]
    refine: bool,
    /// Directory for point clouds, fits and the report.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn build_config(a: &SimulateArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let cfg =
                ExperimentConfig::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if let Some(spec) = a.state.spec()? {
                return Err(CliError::Config(format!(
                    "state given both in {} and as {}",
                    path.display(),
                    spec.describe()
                )));
            }
            cfg
        }
        None => ExperimentConfig::new(a.state.require()?),
    };
    match a.scheme {
        Some(SchemeArg::Uniform) => {
            let n = a.directions.unwrap_or(match cfg.scheme {
                SchemeSpec::Uniform { n } => n,
                _ => 1000,
            });
            cfg.scheme = SchemeSpec::Uniform { n };
        }
        Some(SchemeArg::Icosahedron) => cfg.scheme = SchemeSpec::Icosahedron,
        Some(SchemeArg::Icosahedron9) => cfg.scheme = SchemeSpec::Icosahedron9,
        None => {
            if let Some(n) = a.directions {
                cfg.scheme = SchemeSpec::Uniform { n };
            }
        }
    }
    if a.directions.is_some() && !matches!(cfg.scheme, SchemeSpec::Uniform { .. }) {
        return Err(CliError::Config(
            "--directions applies to the uniform scheme only".into(),
        ));
    }
    if a.exact {
        cfg.events_per_point = None;
    } else if let Some(n) = a.events {
        cfg.events_per_point = Some(n);
    }
    if let Some(l) = a.noise {
        cfg.noise = l;
    }
    if let Some(e) = &a.efficiencies {
        cfg.efficiencies = DetectorModel {
            efficiency_plus: e[0],
            efficiency_minus: e[1],
        };
    }
    if a.flip_mixing {
        cfg.preparation = PreparationSpec::FlipMixing;
    }
    cfg.refine |= a.refine;
    if a.seed.is_some() {
        cfg.seed = a.seed;
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

fn simulate_cmd(a: SimulateArgs) -> Result<(), CliError> {
    let mut cfg = build_config(&a)?;
    let seed = resolve_seed(cfg.seed);
    cfg.seed = Some(seed);
    let out = simulate(&cfg, seed)?;
    if let Some(dir) = &a.out {
        ensure_dir(dir)?;
        write_json(dir, "config.json", &cfg)?;
        for (p, cloud) in out.parties.iter().zip(&out.experiment.clouds) {
            let name = party_name(p.party);
            write_csv_file(
                &dir.join(format!("cloud_{name}.csv")),
                &CLOUD_HEADER,
                &cloud_rows(cloud),
            )?;
            write_json(dir, &format!("fit_{name}.json"), p)?;
        }
        write_json(dir, "report.json", &out)?;
    }
    print_json(&out)
}

// ---------------------------------------------------------------- fit

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GeometryArg {
    Symmetric,
    Regression,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV with columns bx,by,bz (as written by `simulate`) or x,y,z.
    input: PathBuf,
    /// Refine with geometric Levenberg–Marquardt.
    #[arg(long)]
    refine: bool,
    /// How the ellipsoid geometry is read from the fit.
    #[arg(long, value_enum, default_value = "symmetric")]
    geometry: GeometryArg,
    /// Directory for fit.json.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct FitOutput {
    points: usize,
    spread_threshold: f64,
    verdict: Verdict,
    diagnostics: SpreadDiagnostics,
    fit: Option<QuadricFit>,
    refined: Option<QuadricFit>,
}

fn fit_cmd(a: FitArgs) -> Result<(), CliError> {
    let (cloud, noise_variance) = read_cloud(&a.input)?;
    let threshold = spread_threshold(noise_variance.unwrap_or(0.0));
    let diagnostics = degenerate_guard_with(&cloud, threshold);
    let mut out = FitOutput {
        points: cloud.len(),
        spread_threshold: threshold,
        verdict: diagnostics.verdict,
        diagnostics,
        fit: None,
        refined: None,
    };
    let emit = |out: &FitOutput| -> Result<(), CliError> {
        if let Some(dir) = &a.out {
            ensure_dir(dir)?;
            write_json(dir, "fit.json", out)?;
        }
        print_json(out)
    };
    if out.verdict != Verdict::Full {
        emit(&out)?;
        return Err(CliError::Degenerate(format!(
            "{}: verdict {:?}, smallest covariance eigenvalue {:e}",
            a.input.display(),
            out.verdict,
            out.diagnostics.covariance_eigenvalues[2]
        )));
    }
    let options = FitOptions {
        geometry: match a.geometry {
            GeometryArg::Symmetric => GeometryMethod::Symmetric,
            GeometryArg::Regression => GeometryMethod::Regression,
        },
    };
    let f = fit_with(&cloud, &options)?;
    if !f.is_ellipsoid() {
        log::warn!("fitted quadric is not an ellipsoid");
    }
    out.refined = a.refine.then(|| refine(&cloud, &f));
    out.fit = Some(f);
    emit(&out)
}

// ---------------------------------------------------------------- monogamy

#[derive(Debug, Args)]
pub struct MonogamyArgs {
    #[command(flatten)]
    state: StateArgs,
    /// CSV over the W-class rows (α = 90°, tabulated β values).
    #[arg(long, conflicts_with = "sweep")]
    w_grid: bool,
    /// CSV over an N × N grid of α, β ∈ [0°, 90°].
    #[arg(long, value_name = "N")]
    sweep: Option<usize>,
    /// Directory for report.json or the sweep CSV.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct MonogamyOutput {
    state: StateSpec,
    report: MonogamyReport,
    /// Pure states only.
    ckw: Option<CkwReport>,
}

const SWEEP_HEADER: [&str; 8] = [
    "alpha_deg",
    "beta_deg",
    "v_ba",
    "v_ca",
    "pure_residual",
    "mixed_residual",
    "concurrence_ab",
    "concurrence_ac",
];

fn sweep_row(alpha: f64, beta: f64) -> Result<Vec<String>, CliError> {
    let rho = family_state(alpha, beta)
        .map_err(|e| CliError::Config(e.to_string()))?
        .to_density();
    let r = report(&rho).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(vec![
        num(alpha.to_degrees()),
        num(beta.to_degrees()),
        num(r.v_ba),
        num(r.v_ca),
        num(r.pure_residual),
        num(r.mixed_residual),
        num(r.concurrence_ab),
        num(r.concurrence_ac),
    ])
}

fn monogamy_cmd(a: MonogamyArgs) -> Result<(), CliError> {
    let half_pi = PI / 2.0;
    let rows = if a.w_grid {
        Some(
            w_grid_betas()
                .iter()
                .map(|&b| sweep_row(half_pi, b))
                .collect::<Result<Vec<_>, _>>()?,
        )
    } else if let Some(n) = a.sweep {
        if n < 2 {
            return Err(CliError::Config("--sweep needs at least 2 steps".into()));
        }
        let step = half_pi / (n - 1) as f64;
        let mut rows = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                rows.push(sweep_row(step * i as f64, step * j as f64)?);
            }
        }
        Some(rows)
    } else {
        None
    };
    if let Some(rows) = rows {
        if !a.state.is_empty() {
            return Err(CliError::Config(
                "state flags cannot be combined with --w-grid or --sweep".into(),
            ));
        }
        return match &a.out {
            Some(dir) => {
                ensure_dir(dir)?;
                write_csv_file(&dir.join("monogamy_sweep.csv"), &SWEEP_HEADER, &rows)
            }
            None => write_csv(std::io::stdout().lock(), &SWEEP_HEADER, &rows),
        };
    }
    let spec = a.state.require()?;
    if spec.qubits() != 3 {
        return Err(CliError::Config(
            "monogamy needs a three-qubit state (--family or --mixed-w)".into(),
        ));
    }
    let rho = spec.density().map_err(|e| CliError::Config(e.to_string()))?;
    let rep = report(&rho).map_err(|e| CliError::Runtime(e.to_string()))?;
    let ckw = if rep.purity > 1.0 - PURE_TOL {
        Some(ckw_check(&rho).map_err(|e| CliError::Runtime(e.to_string()))?)
    } else {
        None
    };
    let out = MonogamyOutput {
        state: spec,
        report: rep,
        ckw,
    };
    if let Some(dir) = &a.out {
        ensure_dir(dir)?;
        write_json(dir, "monogamy.json", &out)?;
    }
    print_json(&out)
}

// ---------------------------------------------------------------- table-s1

#[derive(Debug, Args)]
pub struct TableArgs {
    /// Only the analytic columns; no simulation.
    #[arg(long)]
    theory_only: bool,
    #[arg(long, value_name = "N", default_value_t = 1000)]
    directions: usize,
    #[arg(long, value_name = "N", default_value_t = 50_000)]
    events: u64,
    /// Monte Carlo resamples per row for the error bars.
    #[arg(long, value_name = "N", default_value_t = 100)]
    samples: usize,
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
    /// Directory for table_s1.csv; stdout otherwise.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

const TABLE_HEADER: [&str; 13] = [
    "label",
    "alpha_deg",
    "beta_deg",
    "v_ba_theory",
    "v_ca_theory",
    "v_ba_sim",
    "v_ba_std",
    "v_ca_sim",
    "v_ca_std",
    "r2_ba",
    "r2_ca",
    "ss_res_ba",
    "ss_res_ca",
];

fn angles(spec: &StateSpec) -> [String; 2] {
    match spec {
        StateSpec::Family { alpha, beta } => [num(alpha.to_degrees()), num(beta.to_degrees())],
        _ => [String::new(), String::new()],
    }
}

fn table_cmd(a: TableArgs) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = if a.theory_only {
        let theory = table_s1_theory()?;
        table_s1_rows()
            .iter()
            .zip(theory)
            .map(|(row, (label, vb, vc))| {
                let [al, be] = angles(&row.state);
                let mut r = vec![label.to_string(), al, be, num(vb), num(vc)];
                r.resize(TABLE_HEADER.len(), String::new());
                r
            })
            .collect()
    } else {
        if a.directions == 0 || a.events == 0 {
            return Err(CliError::Config("--directions and --events must be positive".into()));
        }
        let options = TableOptions {
            directions: a.directions,
            events_per_point: a.events,
            samples: a.samples,
            seed: resolve_seed(a.seed),
        };
        table_s1(&options)?
            .iter()
            .map(|r| {
                let [al, be] = angles(&r.state);
                vec![
                    r.label.to_string(),
                    al,
                    be,
                    num(r.v_ba_theory),
                    num(r.v_ca_theory),
                    opt(r.v_ba_sim),
                    num(r.v_ba_std),
                    opt(r.v_ca_sim),
                    num(r.v_ca_std),
                    opt(r.r2_ba),
                    opt(r.r2_ca),
                    opt(r.ss_res_ba),
                    opt(r.ss_res_ca),
                ]
            })
            .collect()
    };
    match &a.out {
        Some(dir) => {
            ensure_dir(dir)?;
            write_csv_file(&dir.join("table_s1.csv"), &TABLE_HEADER, &rows)
        }
        None => write_csv(std::io::stdout().lock(), &TABLE_HEADER, &rows),
    }
}

// ---------------------------------------------------------------- icosahedron-robustness

#[derive(Debug, Args)]
pub struct RobustnessArgs {
    /// Bell-diagonal weights over (ψ−, ψ+, φ−, φ+).
    #[arg(long, num_args = 4, value_names = ["P1", "P2", "P3", "P4"], default_values_t = [0.6, 0.1, 0.1, 0.2])]
    bell_diagonal: Vec<f64>,
    #[arg(long, value_name = "N", default_value_t = 50)]
    runs: usize,
    #[arg(long, value_name = "N", default_value_t = 500_000)]
    events: u64,
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
    /// Directory for robustness.json.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct RobustnessOutput {
    seed: u64,
    weights: [f64; 4],
    #[serde(flatten)]
    summary: RobustnessSummary,
}

fn robustness_cmd(a: RobustnessArgs) -> Result<(), CliError> {
    let w = [
        a.bell_diagonal[0],
        a.bell_diagonal[1],
        a.bell_diagonal[2],
        a.bell_diagonal[3],
    ];
    if a.runs < 2 || a.events == 0 {
        return Err(CliError::Config(
            "need at least 2 runs and a positive event count".into(),
        ));
    }
    let seed = resolve_seed(a.seed);
    let summary = icosahedron_robustness(w, a.runs, a.events, seed)?;
    let out = RobustnessOutput {
        seed,
        weights: w,
        summary,
    };
    if let Some(dir) = &a.out {
        ensure_dir(dir)?;
        write_json(dir, "robustness.json", &out)?;
    }
    print_json(&out)
}
