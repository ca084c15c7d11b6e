//! Run configuration: one JSON file per run, versioned.

use std::path::{Path, PathBuf};

use qtraj_core::evaluation::EvalSpec;
use qtraj_core::noise::PinkNoiseSpec;
use qtraj_core::problems::GateProblemConfig;
use qtraj_core::solver::SolverOptions;
use qtraj_core::FluxoniumParams;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Formats {
    /// Also write `report.csv` next to `report.json`.
    pub report_csv: bool,
    /// Write the full knot-state record `trajectory.json` (large for
    /// robust problems).
    pub trajectory_json: bool,
}

impl Default for Formats {
    fn default() -> Self {
        Self { report_csv: true, trajectory_json: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub problem: Option<GateProblemConfig>,
    #[serde(default)]
    pub params: FluxoniumParams,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub evaluation: Option<EvalSpec>,
    /// `flux_GHz,T1_us` curve used by the evaluation; synthetic if absent.
    #[serde(default)]
    pub evaluation_t1_csv: Option<PathBuf>,
    #[serde(default)]
    pub noise: Option<PinkNoiseSpec>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub formats: Formats,
}

impl RunConfig {
    pub fn problem(&self) -> Result<&GateProblemConfig, CliError> {
        self.problem.as_ref().ok_or_else(|| CliError::config("config has no `problem` section"))
    }

    pub fn evaluation(&self) -> Result<&EvalSpec, CliError> {
        self.evaluation.as_ref().ok_or_else(|| CliError::config("config has no `evaluation` section"))
    }

    /// Makes input paths absolute, relative to `base`.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.evaluation_t1_csv);
        if let Some(problem) = &mut self.problem {
            fix(&mut problem.depolarization.t1_csv);
        }
    }
}

/// Parses and resolves `path`. Syntax and schema errors carry the
/// line/column or field name reported by the parser.
pub fn load(path: &Path) -> Result<(RunConfig, Value), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text, path.parent().unwrap_or(Path::new(".")))
        .map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message)))
}

pub fn parse(text: &str, base: &Path) -> Result<(RunConfig, Value), CliError> {
    let raw: Value = serde_json::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
    match raw.get("schema_version").and_then(Value::as_u64) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => return Err(CliError::config(format!("unsupported schema_version {v}, expected {SCHEMA_VERSION}"))),
        None => return Err(CliError::config("missing integer field `schema_version`")),
    }
    let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
    cfg.resolve_paths(base);
    Ok((cfg, raw))
}

/// Stochastic commands must name their seed explicitly.
pub fn require_seed(raw: &Value, section: &str) -> Result<(), CliError> {
    match raw.get(section).and_then(|s| s.get("seed")) {
        Some(Value::Number(n)) if n.is_u64() => Ok(()),
        Some(_) => Err(CliError::config(format!("`{section}.seed` must be a non-negative integer"))),
        None => Err(CliError::config(format!("`{section}.seed` is required for this command"))),
    }
}

/// Sets the field at a dotted `path` inside a JSON object, creating
/// intermediate objects as needed.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(format!("invalid parameter path `{path}`")));
    }
    for part in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::config(format!("`{path}`: `{part}` is not inside an object")))?;
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node.as_object_mut().ok_or_else(|| CliError::config(format!("`{path}` does not name an object field")))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"schema_version": 1, "problem": {"gate": "Z/2", "gate_time": 18.0}}"#;

    #[test]
    fn defaults_are_materialized() {
        let (cfg, _) = parse(MINIMAL, Path::new(".")).unwrap();
        let p = cfg.problem().unwrap();
        assert_eq!(p.dt, 0.1);
        assert_eq!(cfg.solver, SolverOptions::default());
        let echo = serde_json::to_value(&cfg).unwrap();
        assert!(echo["solver"]["tolerance"].is_number());
        assert!(echo["problem"]["weights"]["control"].is_number());
        let (again, _) = parse(&echo.to_string(), Path::new(".")).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn missing_field_names_the_field() {
        let err = parse(r#"{"schema_version": 1, "problem": {"gate": "Z/2"}}"#, Path::new(".")).unwrap_err();
        assert_eq!(err.code, crate::EXIT_CONFIG);
        assert!(err.message.contains("gate_time"), "{}", err.message);
        assert!(err.message.contains("line"), "{}", err.message);
    }

    #[test]
    fn unknown_fields_and_versions_are_rejected() {
        let typo = r#"{"schema_version": 1, "problem": {"gate": "Z/2", "gate_time": 18.0, "gate_tme": 1}}"#;
        assert!(parse(typo, Path::new(".")).unwrap_err().message.contains("gate_tme"));
        assert!(parse(r#"{"schema_version": 9}"#, Path::new(".")).is_err());
        assert!(parse(r#"{"problem": null}"#, Path::new(".")).is_err());
    }

    #[test]
    fn seeds_must_be_explicit() {
        let raw: Value = serde_json::from_str(r#"{"evaluation": {"n_states": 10}}"#).unwrap();
        assert!(require_seed(&raw, "evaluation").is_err());
        let raw: Value = serde_json::from_str(r#"{"evaluation": {"seed": 3}}"#).unwrap();
        assert!(require_seed(&raw, "evaluation").is_ok());
    }

    #[test]
    fn dotted_paths_set_nested_fields() {
        let mut v: Value = serde_json::from_str(MINIMAL).unwrap();
        set_path(&mut v, "problem.gate_time", 36.0.into()).unwrap();
        set_path(&mut v, "evaluation.perturbation.relative", 0.02.into()).unwrap();
        assert_eq!(v["problem"]["gate_time"], 36.0);
        assert_eq!(v["evaluation"]["perturbation"]["relative"], 0.02);
        assert!(set_path(&mut v, "problem.gate_time.x", 1.into()).is_err());
    }

    #[test]
    fn relative_input_paths_follow_the_config_file() {
        let text = r#"{"schema_version": 1, "evaluation_t1_csv": "t1.csv"}"#;
        let (cfg, _) = parse(text, Path::new("/some/dir")).unwrap();
        assert_eq!(cfg.evaluation_t1_csv.unwrap(), PathBuf::from("/some/dir/t1.csv"));
    }
}
