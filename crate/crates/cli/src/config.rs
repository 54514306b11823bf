//! Experiment configuration: TOML file, dotted-key overrides, validation
//! and expansion into sweep cells.

use std::path::Path;

use pls_core::error::ScheduleError;
use pls_core::model::{sample_instance, BanditInstance};
use pls_core::schedule::{sparse_design_size, PolicyConfig, SparseConfig, DEFAULT_DESIGN_CONSTANT};
use pls_core::sim::{Algorithm, InstanceSpec, RunSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

fn default_seed() -> u64 {
    1
}
fn default_reps() -> usize {
    10
}
fn default_sigma() -> f64 {
    0.5
}
fn default_delta() -> f64 {
    0.05
}
fn default_half() -> f64 {
    0.5
}
fn default_capacity() -> u64 {
    64
}
fn default_out() -> String {
    "runs".into()
}
fn default_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::Pls]
}
fn default_norm() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub n_reps: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_half")]
    pub alpha0: f64,
    #[serde(default = "default_half")]
    pub beta0: f64,
    /// Channel capacity in bits per use.
    #[serde(default = "default_capacity")]
    pub capacity: u64,
    #[serde(default = "default_out")]
    pub out_dir: String,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    pub sweep: Sweep,
    #[serde(default)]
    pub instance: InstanceConfig,
    #[serde(default)]
    pub plot: PlotConfig,
}

/// Values crossed into cells. Every list must be non-empty except `s`,
/// which only applies to `sparse_pls`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub horizon: Vec<u64>,
    pub agents: Vec<usize>,
    pub d: Vec<usize>,
    #[serde(default)]
    pub s: Vec<usize>,
    /// Fixed design size; computed from `(d, s, delta)` when absent.
    #[serde(default)]
    pub m: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    /// One `θ*` per cell: `theta` if given, else drawn once from the seed.
    #[default]
    Fixed,
    /// A fresh random direction per replication.
    RandomDirection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    #[serde(default)]
    pub kind: InstanceKind,
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    #[serde(default = "default_norm")]
    pub norm: f64,
    /// Support size of sampled instances; defaults to `s` for sparse cells.
    #[serde(default)]
    pub sparsity: Option<usize>,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self { kind: InstanceKind::Fixed, theta: None, norm: default_norm(), sparsity: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotConfig {
    #[serde(default = "default_true")]
    pub enabled: bool,
}

impl Default for PlotConfig {
    fn default() -> Self {
        Self { enabled: true }
    }
}

/// One point of the sweep for one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: String,
    pub spec: RunSpec,
    pub instances: InstanceSpec,
    /// Set when the design size was capped at `d`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: ExperimentConfig =
            doc.try_into().map_err(|e: toml::de::Error| CliError::Config(e.message().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, reason: String| Err(CliError::Config(format!("{field}: {reason}")));
        if self.n_reps == 0 {
            return bad("n_reps", "must be at least 1".into());
        }
        if self.capacity == 0 {
            return bad("capacity", "must be at least 1".into());
        }
        if self.algorithms.is_empty() {
            return bad("algorithms", "must list at least one algorithm".into());
        }
        for (name, len) in
            [("sweep.horizon", self.sweep.horizon.len()), ("sweep.agents", self.sweep.agents.len()), ("sweep.d", self.sweep.d.len())]
        {
            if len == 0 {
                return bad(name, "must not be empty".into());
            }
        }
        if self.algorithms.contains(&Algorithm::SparsePls) && self.sweep.s.is_empty() {
            return bad("sweep.s", "sparse_pls needs at least one sparsity level".into());
        }
        if !(0.0..=1.0).contains(&self.instance.norm) {
            return bad("instance.norm", format!("must be in [0, 1], got {}", self.instance.norm));
        }
        if let Some(theta) = &self.instance.theta {
            if let Some(d) = self.sweep.d.iter().find(|&&d| d != theta.len()) {
                return bad("instance.theta", format!("has {} entries but sweep.d contains {d}", theta.len()));
            }
            if self.instance.kind == InstanceKind::RandomDirection {
                return bad("instance.theta", "cannot be combined with kind = \"random_direction\"".into());
            }
        }
        // Policy-level checks on every cell.
        self.cells().map(|_| ())
    }

    fn policy(&self, horizon: u64, agents: usize, d: usize) -> PolicyConfig {
        PolicyConfig {
            alpha0: self.alpha0,
            beta0: self.beta0,
            delta: self.delta,
            ..PolicyConfig::dense(d, agents, horizon, self.sigma)
        }
    }

    /// Sweep cells in a fixed order: algorithm, d, s, agents, horizon.
    pub fn cells(&self) -> Result<Vec<Cell>, CliError> {
        let mut cells = Vec::new();
        for &alg in &self.algorithms {
            for &d in &self.sweep.d {
                let sparsities: Vec<Option<usize>> = if alg == Algorithm::SparsePls {
                    self.sweep.s.iter().map(|&s| Some(s)).collect()
                } else {
                    vec![None]
                };
                for &s in &sparsities {
                    for &agents in &self.sweep.agents {
                        for &horizon in &self.sweep.horizon {
                            cells.push(self.cell(alg, d, s, agents, horizon)?);
                        }
                    }
                }
            }
        }
        Ok(cells)
    }

    fn cell(&self, alg: Algorithm, d: usize, s: Option<usize>, agents: usize, horizon: u64) -> Result<Cell, CliError> {
        let mut policy = self.policy(horizon, agents, d);
        let mut note = None;
        if let Some(s) = s {
            let m = match self.sweep.m {
                Some(m) => m,
                None => {
                    let size = sparse_design_size(d, s, self.delta, DEFAULT_DESIGN_CONSTANT).map_err(field_error)?;
                    if size.capped {
                        note = Some(format!("design size {} capped at d = {d}", size.formula));
                    }
                    size.m
                }
            };
            policy.sparse = Some(SparseConfig { s, m });
        }
        policy.validate().map_err(field_error)?;
        let mut id = format!("{}-T{horizon}-M{agents}-d{d}", alg.as_str());
        if let Some(s) = s {
            id.push_str(&format!("-s{s}"));
        }
        let sparsity = self.instance.sparsity.or(s);
        let instances = match (self.instance.kind, &self.instance.theta) {
            (InstanceKind::Fixed, Some(theta)) => InstanceSpec::Fixed(
                BanditInstance::new(theta.clone(), self.sigma, sparsity, self.seed)
                    .map_err(|e| CliError::Config(format!("instance.theta: {e}")))?,
            ),
            (InstanceKind::Fixed, None) => InstanceSpec::Fixed(
                sample_instance(d, self.instance.norm, self.sigma, sparsity, self.seed)
                    .map_err(|e| CliError::Config(format!("instance: {e}")))?,
            ),
            (InstanceKind::RandomDirection, _) => {
                InstanceSpec::RandomDirection { d, norm: self.instance.norm, sigma: self.sigma, sparsity }
            }
        };
        Ok(Cell { id, spec: RunSpec::new(policy, alg).with_capacity(self.capacity), instances, note })
    }
}

/// Maps policy field names onto config keys.
fn field_error(e: ScheduleError) -> CliError {
    match e {
        ScheduleError::InvalidConfig { field, reason } => {
            let path = match field {
                "d" => "sweep.d",
                "agents" => "sweep.agents",
                "horizon" => "sweep.horizon",
                "sparse.s" => "sweep.s",
                "sparse.m" => "sweep.m",
                other => other,
            };
            CliError::Config(format!("{path}: {reason}"))
        }
        other => CliError::Config(other.to_string()),
    }
}

/// Applies `a.b.c=value`; the value is parsed as TOML and kept as a string
/// when it does not parse.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not KEY=VALUE")))?;
    let key = key.trim();
    let value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key `{key}` is malformed")));
    }
    let mut table = doc;
    for p in &parts[..parts.len() - 1] {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        n_reps = 2
        [sweep]
        horizon = [10000]
        agents = [2]
        d = [2]
    "#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_toml(MINIMAL, &[]).unwrap();
        assert_eq!((cfg.sigma, cfg.delta, cfg.alpha0, cfg.beta0, cfg.capacity), (0.5, 0.05, 0.5, 0.5, 64));
        assert_eq!(cfg.algorithms, vec![Algorithm::Pls]);
        let cells = cfg.cells().unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].id, "pls-T10000-M2-d2");
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml(MINIMAL, &[]).unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml(), &[]).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn invalid_delta_names_the_field() {
        let err = ExperimentConfig::from_toml(MINIMAL, &["delta=1.5".into()]).unwrap_err();
        assert!(err.to_string().contains("delta"), "{err}");
        assert_eq!(err.exit_code(), 2);
        let err = ExperimentConfig::from_toml(MINIMAL, &["sweep.agents=[]".into()]).unwrap_err();
        assert!(err.to_string().starts_with("config error: sweep.agents"), "{err}");
        let err = ExperimentConfig::from_toml(MINIMAL, &["sweep.d=[0]".into()]).unwrap_err();
        assert!(err.to_string().contains("sweep.d"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml(MINIMAL, &["sigmaa=1".into()]).unwrap_err();
        assert!(err.to_string().contains("sigmaa"), "{err}");
    }

    #[test]
    fn overrides_reach_nested_tables() {
        let cfg =
            ExperimentConfig::from_toml(MINIMAL, &["sweep.horizon=[100, 200]".into(), "instance.kind=random_direction".into()])
                .unwrap();
        assert_eq!(cfg.sweep.horizon, vec![100, 200]);
        assert_eq!(cfg.instance.kind, InstanceKind::RandomDirection);
        assert!(ExperimentConfig::from_toml(MINIMAL, &["novalue".into()]).is_err());
    }

    #[test]
    fn sparse_cells_get_design_size() {
        let text = r#"
            algorithms = ["sparse_pls", "pls"]
            [sweep]
            horizon = [1000]
            agents = [2]
            d = [40]
            s = [3]
        "#;
        let cells = ExperimentConfig::from_toml(text, &[]).unwrap().cells().unwrap();
        assert_eq!(cells.len(), 2);
        let sp = cells[0].spec.policy.sparse.unwrap();
        assert_eq!(sp.m, 40);
        assert!(cells[0].note.is_some());
        assert_eq!(cells[0].id, "sparse_pls-T1000-M2-d40-s3");
        let cells = ExperimentConfig::from_toml(text, &["sweep.m=20".into()]).unwrap().cells().unwrap();
        assert_eq!(cells[0].spec.policy.sparse.unwrap().m, 20);
    }
}
