//! The `run` and `schedule` verbs and the run-directory layout.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use pls_core::schedule::{PolicyConfig, Schedule};
use pls_core::sim::{replicate, Algorithm, CurveRow, RunRecord, Summary, SCHEMA_VERSION};
use serde::{Deserialize, Serialize};

use crate::config::{Cell, ExperimentConfig};
use crate::error::CliError;

pub const RESULTS_FILE: &str = "results.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const SCHEDULE_FILE: &str = "schedule.txt";
pub const CONFIG_FILE: &str = "config.toml";

/// Tool name and version stamped into every results file.
pub fn code_version() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    #[serde(flatten)]
    pub cell: Cell,
    pub summary: Summary,
    pub runs: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub schema_version: u32,
    pub code_version: String,
    pub timestamp: String,
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
}

impl Results {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(RESULTS_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        let results: Results = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if results.schema_version != SCHEMA_VERSION {
            return Err(CliError::Input(format!(
                "{}: schema version {} (expected {SCHEMA_VERSION})",
                path.display(),
                results.schema_version
            )));
        }
        Ok(results)
    }

    pub fn records(&self) -> impl Iterator<Item = &RunRecord> {
        self.cells.iter().flat_map(|c| c.runs.iter())
    }
}

pub fn run_id(cell: &Cell, rep: usize) -> String {
    format!("{}-r{rep}", cell.id)
}

/// Executes every cell of `cfg` and returns the results in cell order.
pub fn execute(cfg: &ExperimentConfig, parallelism: usize) -> Result<Vec<CellResult>, CliError> {
    let cells = cfg.cells()?;
    let total = cells.len();
    let mut out = Vec::with_capacity(total);
    for (i, cell) in cells.into_iter().enumerate() {
        log::info!("cell {}/{total}: {} x {} reps", i + 1, cell.id, cfg.n_reps);
        let batch_seed = cfg.seed.wrapping_add(i as u64);
        let rep = replicate(&cell.spec, &cell.instances, cfg.n_reps, batch_seed, parallelism)?;
        out.push(CellResult { cell, summary: rep.summary, runs: rep.records });
    }
    Ok(out)
}

/// Writes every checkpoint of every run as one CSV row.
pub fn write_curves<W: Write>(cells: &[CellResult], w: W) -> Result<(), CliError> {
    let mut csv = csv::Writer::from_writer(w);
    for c in cells {
        for (rep, r) in c.runs.iter().enumerate() {
            let id = run_id(&c.cell, rep);
            for row in r.curve_rows(&id) {
                csv.serialize(&row).context("writing curves")?;
            }
        }
    }
    csv.flush()?;
    Ok(())
}

pub fn read_curves(path: &Path) -> Result<Vec<CurveRow>, CliError> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let expected = ["run_id", "t", "regret", "c_u_bits", "c_d_bits", "stage", "epoch"];
    let headers = rdr.headers().map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if headers.iter().ne(expected) {
        return Err(CliError::Input(format!("{}: unexpected header {:?}", path.display(), headers)));
    }
    rdr.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| CliError::Input(format!("{} row {}: {e}", path.display(), i + 2))))
        .collect()
}

/// Parameter tables of every distinct schedule in the sweep.
pub fn schedule_dump(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let mut seen: Vec<PolicyConfig> = Vec::new();
    let mut text = String::new();
    for cell in cfg.cells()? {
        let mut policy = cell.spec.policy;
        let mut label = cell.id.clone();
        match cell.spec.algorithm {
            Algorithm::FixedOptimal => continue,
            Algorithm::IndependentAgents => {
                policy.agents = 1;
                label.push_str(" (per agent, M = 1)");
            }
            Algorithm::SparsePls => {}
            _ => policy.sparse = None,
        }
        if seen.contains(&policy) {
            continue;
        }
        seen.push(policy);
        let schedule = Schedule::new(policy).map_err(|e| CliError::Config(e.to_string()))?;
        text.push_str(&format!("## {label}\n{}\n", schedule.dump()));
    }
    Ok(text)
}

/// Settings that the command line may override.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub parallelism: Option<usize>,
}

pub fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs the sweep and fills a fresh timestamped directory. Returns its path.
pub fn cmd_run(mut cfg: ExperimentConfig, opts: &RunOptions) -> Result<PathBuf, CliError> {
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &opts.out {
        cfg.out_dir = out.display().to_string();
    }
    cfg.validate()?;
    let parallelism = opts.parallelism.unwrap_or_else(default_parallelism);
    let cells = execute(&cfg, parallelism)?;

    let now = chrono::Local::now();
    let config_text = cfg.to_toml();
    let base = PathBuf::from(&cfg.out_dir);
    let mut dir = base.join(format!("{}-{}", now.format("%Y%m%dT%H%M%S"), short_hash(&config_text)));
    let mut n = 1;
    while dir.exists() {
        n += 1;
        dir = base.join(format!("{}-{}-{n}", now.format("%Y%m%dT%H%M%S"), short_hash(&config_text)));
    }
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    fs::write(dir.join(CONFIG_FILE), &config_text)?;
    fs::write(dir.join(SCHEDULE_FILE), schedule_dump(&cfg)?)?;
    write_curves(&cells, fs::File::create(dir.join(CURVES_FILE))?)?;
    let results = Results {
        schema_version: SCHEMA_VERSION,
        code_version: code_version(),
        timestamp: now.to_rfc3339(),
        config: cfg.clone(),
        cells,
    };
    let json = serde_json::to_string_pretty(&results).context("serializing results")?;
    fs::write(dir.join(RESULTS_FILE), json)?;
    if cfg.plot.enabled {
        crate::plot::cmd_plot(&dir, &dir)?;
    }
    Ok(dir)
}

/// FNV-1a of the text as 8 hex digits; tells run directories apart.
fn short_hash(text: &str) -> String {
    let mut h: u32 = 0x811c_9dc5;
    for b in text.bytes() {
        h ^= b as u32;
        h = h.wrapping_mul(0x0100_0193);
    }
    format!("{h:08x}")
}
