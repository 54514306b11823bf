//! The `audit` verb: scaling fits across run directories.

use std::fmt::Write as _;
use std::path::Path;

use pls_core::audit::{scaling_audit, AuditReport, Axis};
use pls_core::sim::{Algorithm, RunRecord};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::run::Results;

/// Acceptance band for the regret slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeBand {
    pub low: f64,
    pub high: f64,
}

impl SlopeBand {
    pub fn default_for(axis: Axis) -> Self {
        match axis {
            Axis::Horizon => SlopeBand { low: 0.45, high: 0.65 },
            Axis::Agents => SlopeBand { low: 0.3, high: 0.7 },
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.low <= x && x <= self.high
    }
}

impl std::str::FromStr for SlopeBand {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once(',').ok_or("expected LOW,HIGH")?;
        let low: f64 = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
        let high: f64 = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
        if low > high {
            return Err(format!("empty band {low},{high}"));
        }
        Ok(SlopeBand { low, high })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub report: AuditReport,
    pub band: SlopeBand,
    pub pass: bool,
}

/// Which of horizon and agents varies across the records.
pub fn detect_axis(records: &[&RunRecord]) -> Result<Axis, CliError> {
    let distinct = |f: fn(&RunRecord) -> u64| {
        let mut v: Vec<u64> = records.iter().map(|r| f(r)).collect();
        v.sort_unstable();
        v.dedup();
        v.len()
    };
    let horizons = distinct(|r| r.spec.policy.horizon);
    let agents = distinct(|r| r.spec.policy.agents as u64);
    match (horizons > 1, agents > 1) {
        (true, false) => Ok(Axis::Horizon),
        (false, true) => Ok(Axis::Agents),
        (true, true) => Err(CliError::Input("both horizon and agents vary; sweep one at a time".into())),
        (false, false) => Err(CliError::Input("neither horizon nor agents varies across the runs".into())),
    }
}

/// Audits every algorithm found in `dirs`.
pub fn cmd_audit(
    dirs: &[impl AsRef<Path>],
    band: Option<SlopeBand>,
    resamples: usize,
    seed: u64,
) -> Result<Vec<AuditEntry>, CliError> {
    let loaded: Vec<Results> = dirs.iter().map(|d| Results::load(d.as_ref())).collect::<Result<_, _>>()?;
    let records: Vec<&RunRecord> = loaded.iter().flat_map(|r| r.records()).collect();
    let mut algorithms: Vec<Algorithm> = records.iter().map(|r| r.algorithm).collect();
    algorithms.sort_by_key(|a| a.as_str());
    algorithms.dedup();
    let mut entries = Vec::new();
    for alg in algorithms {
        let group: Vec<&RunRecord> = records.iter().copied().filter(|r| r.algorithm == alg).collect();
        let axis = detect_axis(&group)?;
        let owned: Vec<RunRecord> = group.into_iter().cloned().collect();
        let report = scaling_audit(&owned, axis, resamples, seed)?;
        let band = band.unwrap_or_else(|| SlopeBand::default_for(axis));
        let pass = band.contains(report.regret.slope);
        entries.push(AuditEntry { report, band, pass });
    }
    Ok(entries)
}

pub fn render_table(entries: &[AuditEntry]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<20} {:<8} {:>5} {:>8} {:>20} {:>14}  verdict",
        "algorithm", "axis", "runs", "slope", "95% CI", "band"
    );
    for e in entries {
        let r = &e.report;
        let _ = writeln!(
            s,
            "{:<20} {:<8} {:>5} {:>8.3} {:>20} {:>14}  {}",
            r.algorithm.as_str(),
            r.axis.as_str(),
            r.runs,
            r.regret.slope,
            format!("[{:.3}, {:.3}]", r.regret.ci_low, r.regret.ci_high),
            format!("[{}, {}]", e.band.low, e.band.high),
            if e.pass { "pass" } else { "FAIL" }
        );
        if let Some(u) = &r.uplink_vs_log_horizon {
            let _ = writeln!(
                s,
                "{:<20} C_u vs ln T: {:.1} bits per unit ln T, 95% CI [{:.1}, {:.1}], r2 {:.3}",
                "", u.slope, u.ci_low, u.ci_high, u.r2
            );
        }
    }
    s
}
