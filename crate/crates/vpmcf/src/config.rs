//! Run configuration: a TOML file plus `--set key=value` overrides.

use std::path::{Path, PathBuf};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vpmcf_core::convergence::Tolerances;
use vpmcf_core::curve::{InitialShapeSpec, ShapeKind};
use vpmcf_core::flow::StepPolicy;

/// Environment variable that replaces the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "VPMCF_OUTPUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("bad override `{0}`: expected key=value")]
    BadOverride(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdOverride {
    pub alpha: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    pub alpha_list: Vec<f64>,
    pub c_alpha: Vec<ThresholdOverride>,
    /// `|A|²` non-divergence is checked only after this time.
    pub t_burn: f64,
    /// Stop the run at the first hard failure.
    pub halt_on_hard_fail: bool,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            alpha_list: vec![std::f64::consts::SQRT_2, 2.0],
            c_alpha: Vec::new(),
            t_burn: 0.0,
            halt_on_hard_fail: true,
        }
    }
}

fn default_observe_every() -> u64 {
    100
}

fn default_svg_every() -> u64 {
    10_000
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: InitialShapeSpec,
    #[serde(default)]
    pub policy: StepPolicy,
    pub horizon: f64,
    #[serde(default = "default_observe_every")]
    pub observe_every: u64,
    #[serde(default)]
    pub monitor: MonitorConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub emit_svg: bool,
    #[serde(default = "default_svg_every")]
    pub svg_every: u64,
    #[serde(default)]
    pub seed: u64,
    /// Flip the sign of the perturbation amplitude at random (from `seed`).
    #[serde(default)]
    pub random_phase: bool,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return invalid("horizon must be positive");
        }
        if self.observe_every == 0 {
            return invalid("observe_every must be at least 1");
        }
        if self.svg_every == 0 {
            return invalid("svg_every must be at least 1");
        }
        self.policy.check().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(a) = self.monitor.alpha_list.iter().find(|a| !(**a > 1.0)) {
            return Err(ConfigError::Invalid(format!("alpha {a} must exceed 1")));
        }
        if let Some(c) = self.tolerances.cmc {
            if !(c > 0.0) {
                return invalid("tolerances.cmc must be positive");
            }
        }
        if !(self.tolerances.shape > 0.0) {
            return invalid("tolerances.shape must be positive");
        }
        Ok(())
    }

    /// Output directory after the environment override.
    pub fn resolved_output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.output_dir.clone())
    }

    /// The shape to build, with the seeded sign flip applied if requested.
    pub fn shape(&self) -> InitialShapeSpec {
        let mut spec = self.scenario;
        if self.random_phase {
            let flip = ChaCha8Rng::seed_from_u64(self.seed).next_u32() & 1 == 1;
            if flip {
                match &mut spec.kind {
                    ShapeKind::PerturbedHemisphere { amplitude, .. }
                    | ShapeKind::PerturbedSphere { amplitude, .. }
                    | ShapeKind::CosineBumpCylinder { amplitude, .. } => *amplitude = -*amplitude,
                    _ => {}
                }
            }
        }
        spec
    }

    pub fn c_alpha_pairs(&self) -> Vec<(f64, f64)> {
        self.monitor.c_alpha.iter().map(|o| (o.alpha, o.value)).collect()
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies one dotted `key=value` override; the value is read as TOML and
/// falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(assignment.to_string()))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::BadOverride(assignment.to_string()));
    }
    let mut cursor = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::BadOverride(assignment.to_string()))?;
    }
    cursor.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use vpmcf_core::curve::Topology;
    use vpmcf_core::flow::FlowMode;

    const BASE: &str = r#"
horizon = 2.0
observe_every = 50

[scenario]
kind = "perturbed_hemisphere"
radius = 1.0
amplitude = 0.1
mode_count = 2
topology = "free_boundary"
n = 2
nodes = 400

[policy]
cfl_safety = 0.5
mode = "volume_preserving"
"#;

    #[test]
    fn parses_scenario_and_defaults() {
        let c = RunConfig::parse(BASE, &[]).unwrap();
        assert_eq!(c.scenario.topology, Topology::FreeBoundary);
        assert_eq!(c.scenario.nodes, 400);
        assert_eq!(c.policy.cfl_safety, 0.5);
        assert_eq!(c.policy.redistribution_period, 10);
        assert_eq!(c.monitor.alpha_list.len(), 2);
        assert!(matches!(c.scenario.kind, ShapeKind::PerturbedHemisphere { mode_count: 2, .. }));
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let c = RunConfig::parse(
            BASE,
            &["policy.mode=\"plain_mcf\"".into(), "scenario.nodes=200".into(), "horizon=0.5".into()],
        )
        .unwrap();
        assert_eq!(c.policy.mode, FlowMode::PlainMcf);
        assert_eq!(c.scenario.nodes, 200);
        assert_eq!(c.horizon, 0.5);
        // bare words fall back to strings
        let c = RunConfig::parse(BASE, &["policy.mode=plain_mcf".into()]).unwrap();
        assert_eq!(c.policy.mode, FlowMode::PlainMcf);
    }

    #[test]
    fn rejects_zero_horizon_and_unknown_keys() {
        assert!(matches!(
            RunConfig::parse(BASE, &["horizon=0".into()]),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            RunConfig::parse(BASE, &["bogus=1".into()]),
            Err(ConfigError::Parse(_))
        ));
        assert!(matches!(
            RunConfig::parse(BASE, &["novalue".into()]),
            Err(ConfigError::BadOverride(_))
        ));
    }

    #[test]
    fn random_phase_is_seeded() {
        let a = RunConfig::parse(BASE, &["random_phase=true".into(), "seed=3".into()]).unwrap();
        let b = a.clone();
        assert_eq!(a.shape(), b.shape());
        let flips: Vec<bool> = (0..16)
            .map(|s| {
                let c = RunConfig { seed: s, ..a.clone() };
                matches!(c.shape().kind, ShapeKind::PerturbedHemisphere { amplitude, .. } if amplitude < 0.0)
            })
            .collect();
        assert!(flips.iter().any(|f| *f) && flips.iter().any(|f| !*f));
    }
}
