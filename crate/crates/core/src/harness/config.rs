use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sysmodel::{ChannelModel, SystemConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Maximum delay as a fraction of the symbol interval.
    TauMaxFraction,
    /// Nominal user's pilot-discounted average SNR, dB.
    EffectiveSnr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceiverKind {
    McmcSage,
    SageKnownTau,
    MmseSe,
    SingleUser,
}

impl ReceiverKind {
    pub fn name(self) -> &'static str {
        match self {
            ReceiverKind::McmcSage => "mcmc_sage",
            ReceiverKind::SageKnownTau => "sage_known_tau",
            ReceiverKind::MmseSe => "mmse_se",
            ReceiverKind::SingleUser => "single_user",
        }
    }
}

/// One sweep: a base system, an axis and the receivers to compare.
///
/// ```toml
/// axis = "tau_max_fraction"
/// axis_values = [0.1, 0.3, 0.5]
/// trials = 100
/// receivers = ["mcmc_sage", "mmse_se"]
///
/// [system]
/// users = 5
/// # ...
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub axis: SweepAxis,
    pub axis_values: Vec<f64>,
    pub trials: usize,
    pub receivers: Vec<ReceiverKind>,
    /// Where the CLI writes the CSV when `--out` is not given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default)]
    pub channel: ChannelModel,
    /// 1-based user whose effective SNR the BER axis sets; defaults to the middle user.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal_user: Option<usize>,
    pub system: SystemConfig,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let spec_err = |m: String| Error::Spec(m);
        self.system.validate().map_err(|e| spec_err(format!("[system]: {e}")))?;
        if self.axis_values.is_empty() {
            return Err(spec_err("axis_values must not be empty".into()));
        }
        if self.axis_values.iter().any(|v| !v.is_finite()) {
            return Err(spec_err("axis_values must be finite".into()));
        }
        if self.axis_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(spec_err("axis_values must be strictly increasing".into()));
        }
        if self.trials == 0 {
            return Err(spec_err("trials must be >= 1".into()));
        }
        if self.receivers.is_empty() {
            return Err(spec_err("receivers must not be empty".into()));
        }
        for (i, r) in self.receivers.iter().enumerate() {
            if self.receivers[..i].contains(r) {
                return Err(spec_err(format!("receiver {} listed twice", r.name())));
            }
        }
        if self.axis == SweepAxis::TauMaxFraction {
            if let Some(v) = self.axis_values.iter().find(|v| !(**v > 0.0 && **v <= 0.5)) {
                return Err(spec_err(format!("tau_max_fraction values must lie in (0, 0.5], got {v}")));
            }
        }
        if let Some(u) = self.nominal_user {
            if u == 0 || u > self.system.users {
                return Err(spec_err(format!("nominal_user must lie in 1..={}, got {u}", self.system.users)));
            }
        }
        Ok(())
    }

    /// 0-based index of the user whose SNR the BER axis controls.
    pub fn nominal_index(&self) -> usize {
        self.nominal_user.map_or(self.system.users.div_ceil(2), |u| u) - 1
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Spec(e.to_string()))
    }
}

/// Parses and validates a spec from TOML text.
pub fn parse_spec(text: &str) -> Result<ExperimentSpec> {
    let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<ExperimentSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_spec(&text).map_err(|e| match e {
        Error::Spec(m) => Error::Spec(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1: &str = r#"
axis = "tau_max_fraction"
axis_values = [0.1, 0.3, 0.5]
trials = 4
receivers = ["mcmc_sage", "mmse_se"]
channel = "awgn"

[system]
users = 5
chips = 8
samples_per_chip = 12
symbols = 80
pilots = 4
n0 = 1.0
sigma2 = [0.3981071705534972, 0.6309573444801932, 1.0, 1.5848931924611136, 2.51188643150958]
gibbs_samples = 50
seed = 1
"#;

    #[test]
    fn parses_and_round_trips() {
        let spec = parse_spec(FIG1).unwrap();
        assert_eq!(spec.system.burn_in, 10);
        assert_eq!(spec.system.sage_iters, 25);
        assert_eq!(spec.channel, ChannelModel::Awgn);
        assert_eq!(spec.nominal_index(), 2);
        let again = parse_spec(&spec.to_toml().unwrap()).unwrap();
        assert_eq!(spec, again);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = parse_spec(&FIG1.replace("trials = 4", "trials = 4\nfoo = 1")).unwrap_err();
        assert!(err.to_string().contains("foo"), "{err}");
        let err = parse_spec(&FIG1.replace("seed = 1", "seed = 1\nbar = 2")).unwrap_err();
        assert!(err.to_string().contains("bar"), "{err}");
    }

    #[test]
    fn missing_and_mistyped_keys() {
        let err = parse_spec(&FIG1.replace("trials = 4\n", "")).unwrap_err();
        assert!(err.to_string().contains("trials"), "{err}");
        let err = parse_spec(&FIG1.replace("trials = 4", "trials = \"four\"")).unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
    }

    #[test]
    fn semantic_validation() {
        assert!(parse_spec(&FIG1.replace("[0.1, 0.3, 0.5]", "[0.3, 0.1]")).is_err());
        assert!(parse_spec(&FIG1.replace("[0.1, 0.3, 0.5]", "[]")).is_err());
        assert!(parse_spec(&FIG1.replace("[0.1, 0.3, 0.5]", "[0.1, 0.7]")).is_err());
        assert!(parse_spec(&FIG1.replace("trials = 4", "trials = 0")).is_err());
        assert!(parse_spec(&FIG1.replace("\"mcmc_sage\", \"mmse_se\"", "\"mmse_se\", \"mmse_se\"")).is_err());
        assert!(parse_spec(&FIG1.replace("channel = \"awgn\"", "nominal_user = 6")).is_err());
    }
}
