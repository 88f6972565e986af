//! Experiment configuration files. Angles in config files are radians.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6, FRAC_PI_8, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qstate::{bell_diagonal, chi1, family_state, mixed_w_state, pure_two_qubit, DensityMatrix, StateError};
use crate::tomosim::{DetectorModel, ExperimentSettings, Preparation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Which state the experiment runs on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateSpec {
    /// Three-qubit family with angles α, β ∈ [0, π/2].
    Family { alpha: f64, beta: f64 },
    /// ½(|χ1⟩⟨χ1| + |χ2⟩⟨χ2|)
    MixedW,
    /// Weights over (ψ−, ψ+, φ−, φ+).
    BellDiagonal([f64; 4]),
    /// cosγ|01⟩ + sinγ|10⟩
    TwoQubit { gamma: f64 },
}

impl StateSpec {
    pub fn density(&self) -> Result<DensityMatrix, StateError> {
        match self {
            StateSpec::Family { alpha, beta } => Ok(family_state(*alpha, *beta)?.to_density()),
            StateSpec::MixedW => Ok(mixed_w_state()),
            StateSpec::BellDiagonal(p) => bell_diagonal(*p),
            StateSpec::TwoQubit { gamma } => Ok(pure_two_qubit(*gamma)?.to_density()),
        }
    }

    pub fn qubits(&self) -> usize {
        match self {
            StateSpec::Family { .. } | StateSpec::MixedW => 3,
            StateSpec::BellDiagonal(_) | StateSpec::TwoQubit { .. } => 2,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            StateSpec::Family { alpha, beta } => format!("family(alpha={alpha:.6}, beta={beta:.6})"),
            StateSpec::MixedW => "mixed-w".to_string(),
            StateSpec::BellDiagonal(p) => format!("bell-diagonal({}, {}, {}, {})", p[0], p[1], p[2], p[3]),
            StateSpec::TwoQubit { gamma } => format!("two-qubit(gamma={gamma:.6})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeSpec {
    /// `n` uniformly random directions, resampled per run.
    Uniform { n: usize },
    /// Twelve vertices of a randomly rotated icosahedron.
    Icosahedron,
    /// Nine of those twelve vertices.
    #[serde(rename = "icosahedron-9")]
    Icosahedron9,
}

impl Default for SchemeSpec {
    fn default() -> Self {
        SchemeSpec::Uniform { n: 1000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreparationSpec {
    #[default]
    Direct,
    /// Only for the mixed W state: statistics generated from |χ1⟩ alone.
    FlipMixing,
}

fn default_events() -> Option<u64> {
    Some(50_000)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub state: StateSpec,
    #[serde(default)]
    pub scheme: SchemeSpec,
    /// Heralded detections per direction; `null` for exact probabilities.
    #[serde(default = "default_events")]
    pub events_per_point: Option<u64>,
    /// Master seed; drawn from system entropy when absent.
    #[serde(default)]
    pub seed: Option<u64>,
    /// White-noise weight λ in (1 − λ)ρ + λ I/d.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub efficiencies: DetectorModel,
    #[serde(default)]
    pub preparation: PreparationSpec,
    /// Refine fits with geometric Levenberg–Marquardt.
    #[serde(default)]
    pub refine: bool,
}

impl ExperimentConfig {
    pub fn new(state: StateSpec) -> Self {
        Self {
            state,
            scheme: SchemeSpec::default(),
            events_per_point: default_events(),
            seed: None,
            noise: 0.0,
            efficiencies: DetectorModel::default(),
            preparation: PreparationSpec::Direct,
            refine: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every downstream precondition before anything runs.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.state.density()?;
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(ConfigError::Invalid(format!("noise {} outside [0, 1]", self.noise)));
        }
        self.efficiencies
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let SchemeSpec::Uniform { n } = self.scheme {
            if n == 0 {
                return Err(ConfigError::Invalid(
                    "uniform scheme needs at least one direction".into(),
                ));
            }
        }
        if self.events_per_point == Some(0) {
            return Err(ConfigError::Invalid("events_per_point must be positive".into()));
        }
        if self.preparation == PreparationSpec::FlipMixing && self.state != StateSpec::MixedW {
            return Err(ConfigError::Invalid(
                "flip-mixing preparation applies to the mixed-w state only".into(),
            ));
        }
        if self.preparation == PreparationSpec::FlipMixing && self.noise > 0.0 {
            return Err(ConfigError::Invalid(
                "flip-mixing preparation cannot add white noise".into(),
            ));
        }
        Ok(())
    }

    pub fn settings(&self) -> ExperimentSettings {
        ExperimentSettings {
            events_per_point: self.events_per_point,
            detector: self.efficiencies,
            preparation: match self.preparation {
                PreparationSpec::Direct => Preparation::Direct,
                PreparationSpec::FlipMixing => Preparation::FlipMixing(chi1()),
            },
        }
    }

    /// The state after the configured white noise.
    pub fn prepared_state(&self) -> Result<DensityMatrix, ConfigError> {
        let rho = self.state.density()?;
        if self.noise > 0.0 {
            Ok(rho.with_white_noise(self.noise)?)
        } else {
            Ok(rho)
        }
    }
}

/// One tested state of the tripartite table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub label: char,
    pub state: StateSpec,
}

/// Rows a–g (α = π/2, β sweep), h–k (β = π/4, α sweep) and l (mixed).
pub fn table_s1_rows() -> Vec<TableRow> {
    let fam = |alpha: f64, beta: f64| StateSpec::Family { alpha, beta };
    let h = FRAC_PI_2;
    vec![
        TableRow {
            label: 'a',
            state: fam(h, 0.0),
        },
        TableRow {
            label: 'b',
            state: fam(h, 0.187 * PI),
        },
        TableRow {
            label: 'c',
            state: fam(h, 0.215 * PI),
        },
        TableRow {
            label: 'd',
            state: fam(h, FRAC_PI_4),
        },
        TableRow {
            label: 'e',
            state: fam(h, 0.285 * PI),
        },
        TableRow {
            label: 'f',
            state: fam(h, 0.313 * PI),
        },
        TableRow {
            label: 'g',
            state: fam(h, h),
        },
        TableRow {
            label: 'h',
            state: fam(FRAC_PI_4, FRAC_PI_4),
        },
        TableRow {
            label: 'i',
            state: fam(FRAC_PI_6, FRAC_PI_4),
        },
        TableRow {
            label: 'j',
            state: fam(FRAC_PI_8, FRAC_PI_4),
        },
        TableRow {
            label: 'k',
            state: fam(PI / 12.0, FRAC_PI_4),
        },
        TableRow {
            label: 'l',
            state: StateSpec::MixedW,
        },
    ]
}

/// β values of the W-class rows a–g.
pub fn w_grid_betas() -> [f64; 7] {
    [
        0.0,
        0.187 * PI,
        0.215 * PI,
        FRAC_PI_4,
        0.285 * PI,
        0.313 * PI,
        FRAC_PI_2,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let cfg = ExperimentConfig::from_json(
            r#"{"state": {"family": {"alpha": 1.5707963267948966, "beta": 0.7853981633974483}}}"#,
        )
        .unwrap();
        assert_eq!(cfg.scheme, SchemeSpec::Uniform { n: 1000 });
        assert_eq!(cfg.events_per_point, Some(50_000));
        assert_eq!(cfg.seed, None);
        assert_eq!(cfg.state.qubits(), 3);
    }

    #[test]
    fn parses_full_config() {
        let text = r#"{
            "state": {"bell-diagonal": [0.6, 0.1, 0.1, 0.2]},
            "scheme": "icosahedron-9",
            "events_per_point": 500000,
            "seed": 7,
            "noise": 0.01,
            "efficiencies": {"efficiency_plus": 0.9, "efficiency_minus": 0.8},
            "refine": true
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.scheme, SchemeSpec::Icosahedron9);
        assert_eq!(cfg.seed, Some(7));
        assert!(cfg.refine);
        let mixed = ExperimentConfig::from_json(
            r#"{"state": "mixed-w", "preparation": "flip-mixing", "events_per_point": null}"#,
        )
        .unwrap();
        assert_eq!(mixed.events_per_point, None);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            r#"{"state": {"family": {"alpha": 2.0, "beta": 0.1}}}"#,
            r#"{"state": {"bell-diagonal": [0.6, 0.1, 0.1, 0.1]}}"#,
            r#"{"state": "mixed-w", "noise": 1.5}"#,
            r#"{"state": "mixed-w", "scheme": {"uniform": {"n": 0}}}"#,
            r#"{"state": {"two-qubit": {"gamma": 0.1}}, "preparation": "flip-mixing"}"#,
            r#"{"state": "mixed-w", "bogus": 1}"#,
        ] {
            assert!(ExperimentConfig::from_json(text).is_err(), "{text}");
        }
    }

    #[test]
    fn table_has_twelve_rows() {
        let rows = table_s1_rows();
        assert_eq!(rows.len(), 12);
        assert_eq!(rows[11].state, StateSpec::MixedW);
        assert!(rows.iter().all(|r| r.state.density().is_ok()));
    }
}
