//! State selection flags. Angles on the command line are degrees.

use clap::Args;
use qsteer::config::StateSpec;

use crate::CliError;

#[derive(Debug, Clone, Default, Args)]
pub struct StateArgs {
    /// Three-qubit family state with angles α β in degrees, each in [0, 90].
    #[arg(long, num_args = 2, value_names = ["ALPHA", "BETA"], allow_negative_numbers = true)]
    pub family: Option<Vec<f64>>,
    /// Two-qubit state cosγ|01⟩ + sinγ|10⟩, γ in degrees within [0, 180].
    #[arg(long, value_name = "GAMMA", allow_negative_numbers = true)]
    pub two_qubit: Option<f64>,
    /// Equal mixture of the two W-class states χ1 and χ2.
    #[arg(long)]
    pub mixed_w: bool,
    /// Bell-diagonal state with weights over (ψ−, ψ+, φ−, φ+).
    #[arg(long, num_args = 4, value_names = ["P1", "P2", "P3", "P4"], allow_negative_numbers = true)]
    pub bell_diagonal: Option<Vec<f64>>,
}

impl StateArgs {
    pub fn is_empty(&self) -> bool {
        self.family.is_none() && self.two_qubit.is_none() && !self.mixed_w && self.bell_diagonal.is_none()
    }

    /// The selected state, or `None` when no state flag was given.
    pub fn spec(&self) -> Result<Option<StateSpec>, CliError> {
        let given = usize::from(self.family.is_some())
            + usize::from(self.two_qubit.is_some())
            + usize::from(self.mixed_w)
            + usize::from(self.bell_diagonal.is_some());
        if given > 1 {
            return Err(CliError::Config(
                "choose exactly one of --family, --two-qubit, --mixed-w, --bell-diagonal".into(),
            ));
        }
        let spec = if let Some(v) = &self.family {
            Some(StateSpec::Family {
                alpha: v[0].to_radians(),
                beta: v[1].to_radians(),
            })
        } else if let Some(g) = self.two_qubit {
            Some(StateSpec::TwoQubit { gamma: g.to_radians() })
        } else if self.mixed_w {
            Some(StateSpec::MixedW)
        } else {
            self.bell_diagonal
                .as_ref()
                .map(|p| StateSpec::BellDiagonal([p[0], p[1], p[2], p[3]]))
        };
        if let Some(s) = &spec {
            s.density().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(spec)
    }

    pub fn require(&self) -> Result<StateSpec, CliError> {
        self.spec()?.ok_or_else(|| {
            CliError::Config("no state given; use --family, --two-qubit, --mixed-w or --bell-diagonal".into())
        })
    }
}
