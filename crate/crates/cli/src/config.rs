//! Experiment configuration: the JSON schema, command-line overrides and
//! validation.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use amd_core::presets::{holonomy_axis, preset_names};
use amd_core::random::DEFAULT_SEED;

pub const SCHEMA: &str = "amd-config/v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Decompose,
    Gaps,
    Veff,
    Evolve,
    Scan,
    Holonomy,
    Presets,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = self.to_possible_value().expect("no skipped variants");
        f.write_str(name.get_name())
    }
}

/// Complex matrix as rows of [re, im] pairs.
pub type MatrixSpec = Vec<Vec<[f64; 2]>>;

/// Either a registered preset or an explicit generator.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dissipators: Vec<MatrixSpec>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    /// ω of appendix-b; level splitting g of closed-sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_plus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_minus: Option<f64>,
    /// Depolarizing rate of the holonomy presets and depol-b.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// Total times; evolve and holonomy use the first.
    #[serde(default, rename = "T", skip_serializing_if = "Vec::is_empty")]
    pub t: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_points: Option<usize>,
    /// Perturbation for veff, `sigma-{x,y,z}@k` with 1-based qubit k.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<String>,
    /// Block index in decomposition order, for inline systems.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<usize>,
    /// Hex seed for the random elements of the decomposition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub plot: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub system: SystemSpec,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default)]
    pub output: OutputSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema: SCHEMA.into(),
            experiment: None,
            system: SystemSpec::default(),
            parameters: Parameters::default(),
            output: OutputSpec::default(),
        }
    }
}

/// Invalid input, reported with exit code 2.
#[derive(Debug)]
pub struct ValidationError(pub String);

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ValidationError> {
    Err(ValidationError(msg.into()))
}

pub fn parse_seed(text: &str) -> Result<u64, ValidationError> {
    let digits = text.trim().trim_start_matches("0x").trim_start_matches("0X");
    u64::from_str_radix(digits, 16)
        .map_err(|_| ValidationError(format!("seed {text:?} is not a hexadecimal u64")))
}

pub fn format_seed(seed: u64) -> String {
    format!("{seed:#x}")
}

/// Parsed `sigma-{x,y,z}@k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SitePauli {
    pub axis: char,
    /// 1-based qubit index.
    pub site: usize,
}

pub fn parse_site_pauli(text: &str) -> Result<SitePauli, ValidationError> {
    let bad = || ValidationError(format!("perturbation {text:?} is not of the form sigma-{{x,y,z}}@k"));
    let (op, site) = text.split_once('@').ok_or_else(bad)?;
    let axis = match op {
        "sigma-x" => 'x',
        "sigma-y" => 'y',
        "sigma-z" => 'z',
        _ => return Err(bad()),
    };
    let site: usize = site.parse().map_err(|_| bad())?;
    if site == 0 {
        return Err(bad());
    }
    Ok(SitePauli { axis, site })
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ValidationError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| ValidationError(format!("config: {e}")))?;
        if cfg.schema != SCHEMA {
            return invalid(format!("config schema {:?}, expected {SCHEMA:?}", cfg.schema));
        }
        Ok(cfg)
    }

    pub fn seed(&self) -> Result<u64, ValidationError> {
        self.parameters
            .seed
            .as_deref()
            .map_or(Ok(DEFAULT_SEED), parse_seed)
    }

    pub fn preset(&self) -> Option<&str> {
        self.system.preset.as_deref()
    }

    /// Checks everything that can be checked without running numerics.
    pub fn validate(&self) -> Result<(), ValidationError> {
        let experiment = self
            .experiment
            .ok_or_else(|| ValidationError("no experiment given".into()))?;
        if experiment == Experiment::Presets {
            return Ok(());
        }
        let sys = &self.system;
        match (&sys.preset, &sys.hamiltonian) {
            (Some(_), Some(_)) => return invalid("system names both a preset and an inline Hamiltonian"),
            (None, None) => return invalid("system needs a preset or an inline Hamiltonian"),
            (Some(name), None) => {
                if !preset_names().contains(&name.as_str()) {
                    return invalid(format!(
                        "unknown preset {name:?}; available: {}",
                        preset_names().join(", ")
                    ));
                }
                if !sys.dissipators.is_empty() {
                    return invalid("inline dissipators given together with a preset");
                }
            }
            (None, Some(h)) => {
                let d = h.len();
                let square = |m: &MatrixSpec| m.len() == d && m.iter().all(|row| row.len() == d);
                if d == 0 || !square(h) || !sys.dissipators.iter().all(square) {
                    return invalid("inline operators must be non-empty square matrices of equal size");
                }
            }
        }

        let p = &self.parameters;
        for (name, value) in [
            ("gamma_plus", p.gamma_plus),
            ("gamma_minus", p.gamma_minus),
            ("gamma", p.gamma),
        ] {
            if let Some(v) = value {
                if !(v > 0.0 && v.is_finite()) {
                    return invalid(format!("{name} = {v} must be a positive rate"));
                }
            }
        }
        for (name, value) in [("omega", p.omega), ("a", p.a), ("b", p.b)] {
            if value.is_some_and(|v| !v.is_finite()) {
                return invalid(format!("{name} must be finite"));
            }
        }
        if p.t.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return invalid("every T must be positive");
        }
        if experiment == Experiment::Scan && p.t.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("scan T values must be strictly increasing");
        }
        if experiment == Experiment::Scan && !p.t.is_empty() && p.t.len() < 4 {
            return invalid(format!("a scan needs at least 4 T values, got {}", p.t.len()));
        }
        if let Some(s) = p.s_points {
            if s < 11 {
                return invalid(format!("s_points = {s} < 11"));
            }
        }
        if let Some(s) = p.steps {
            if s < 100 {
                return invalid(format!("steps = {s} < 100"));
            }
        }
        if let Some(v) = &p.v {
            parse_site_pauli(v)?;
        }
        self.seed()?;

        let holonomic = self.preset().and_then(holonomy_axis).is_some();
        if holonomic && (p.a.is_some() || p.b.is_some()) {
            let a = p.a.unwrap_or(2f64.sqrt() * PI);
            let b = p.b.unwrap_or(2f64.sqrt() * PI);
            let target = 4.0 * PI * PI;
            if ((a * a + b * b) - target).abs() > 1e-10 * target {
                return invalid(format!(
                    "loop does not close: a² + b² = {:.12} must equal 4π² = {target:.12}",
                    a * a + b * b
                ));
            }
        }
        if experiment == Experiment::Holonomy && !holonomic {
            return invalid("holonomy needs one of the presets holonomy-x, holonomy-z, holonomy-xx");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preset_config(name: &str) -> ExperimentConfig {
        ExperimentConfig {
            experiment: Some(Experiment::Decompose),
            system: SystemSpec {
                preset: Some(name.into()),
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn presets_round_trip_through_json() {
        for name in preset_names() {
            let cfg = preset_config(name);
            let text = serde_json::to_string_pretty(&cfg).unwrap();
            assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
            assert!(cfg.validate().is_ok(), "{name}");
        }
    }

    #[test]
    fn unknown_preset_lists_alternatives() {
        let err = preset_config("appendix-c").validate().unwrap_err();
        assert!(err.0.contains("appendix-b") && err.0.contains("depol-b"));
    }

    #[test]
    fn schema_is_checked() {
        let err = ExperimentConfig::from_json(r#"{"schema": "amd-config/v0"}"#).unwrap_err();
        assert!(err.0.contains("amd-config/v1"));
        assert!(ExperimentConfig::from_json(r#"{"schema": "amd-config/v1", "colour": 1}"#).is_err());
    }

    #[test]
    fn seeds_parse_as_hex() {
        assert_eq!(parse_seed("0xADAB").unwrap(), 0xADAB);
        assert_eq!(parse_seed("adab").unwrap(), 0xADAB);
        assert!(parse_seed("0xZZ").is_err());
        assert_eq!(format_seed(0xADAB), "0xadab");
    }

    #[test]
    fn site_paulis_parse() {
        assert_eq!(parse_site_pauli("sigma-z@3").unwrap(), SitePauli { axis: 'z', site: 3 });
        assert!(parse_site_pauli("sigma-z@0").is_err());
        assert!(parse_site_pauli("sigma-w@1").is_err());
        assert!(parse_site_pauli("sigma-z").is_err());
    }

    #[test]
    fn rates_must_be_positive() {
        let mut cfg = preset_config("appendix-b");
        cfg.parameters.gamma_plus = Some(-1.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn open_loops_are_rejected_before_running() {
        let mut cfg = preset_config("holonomy-x");
        cfg.parameters.a = Some(1.0);
        assert!(cfg.validate().unwrap_err().0.contains("loop does not close"));
    }
}
