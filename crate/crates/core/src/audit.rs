//! Quantiles, log-log slopes and scaling audits over batches of runs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::AuditError;
use crate::rng::{Purpose, SeedTree};
use crate::sim::{Algorithm, RunRecord};

/// Linearly interpolated quantile of sorted data (Hyndman–Fan type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// 10/50/90 percentiles and mean of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
    pub mean: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            p10: quantile_sorted(&v, 0.1),
            p50: quantile_sorted(&v, 0.5),
            p90: quantile_sorted(&v, 0.9),
            mean: v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

/// Ordinary least squares line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn ols(x: &[f64], y: &[f64]) -> LineFit {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    LineFit { slope, intercept: my - slope * mx, r2 }
}

/// How group medians are regressed on the swept value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// `ln median` on `ln x`.
    LogLog,
    /// `median` on `ln x`.
    LinLog,
}

/// Fitted slope with a bootstrap percentile interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub scale: Scale,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub resamples: usize,
    /// `(x, median)` per group.
    pub points: Vec<(f64, f64)>,
}

impl SlopeEstimate {
    pub fn ci_contains(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

fn transform(scale: Scale, x: f64, y: f64) -> Result<(f64, f64), AuditError> {
    if x <= 0.0 {
        return Err(AuditError::NonPositive(x));
    }
    match scale {
        Scale::LogLog if y <= 0.0 => Err(AuditError::NonPositive(y)),
        Scale::LogLog => Ok((x.ln(), y.ln())),
        Scale::LinLog => Ok((x.ln(), y)),
    }
}

fn fit_points(scale: Scale, points: &[(f64, f64)]) -> Result<LineFit, AuditError> {
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        points.iter().map(|&(x, y)| transform(scale, x, y)).collect::<Result<Vec<_>, _>>()?.into_iter().unzip();
    Ok(ols(&xs, &ys))
}

/// Regresses group medians on the swept value. The interval resamples
/// values within each group with replacement, `resamples` times, and takes
/// the 2.5 and 97.5 percentiles of the refitted slopes.
pub fn fit_medians(
    groups: &[(f64, Vec<f64>)],
    scale: Scale,
    resamples: usize,
    seed: u64,
) -> Result<SlopeEstimate, AuditError> {
    let mut xs: Vec<f64> = groups.iter().map(|g| g.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 {
        return Err(AuditError::TooFewGroups { got: xs.len(), need: 3 });
    }
    if let Some(i) = groups.iter().position(|g| g.1.is_empty()) {
        return Err(AuditError::EmptyGroup(i));
    }
    let points: Vec<(f64, f64)> = groups.iter().map(|(x, v)| (*x, median(v))).collect();
    let fit = fit_points(scale, &points)?;

    let mut rng = SeedTree::new(seed).stream(Purpose::Bootstrap, 0);
    let mut slopes = Vec::with_capacity(resamples);
    let mut buf = Vec::new();
    for _ in 0..resamples {
        let mut pts = Vec::with_capacity(groups.len());
        for (x, v) in groups {
            buf.clear();
            buf.extend((0..v.len()).map(|_| v[rng.random_range(0..v.len())]));
            pts.push((*x, median(&buf)));
        }
        if let Ok(f) = fit_points(scale, &pts) {
            slopes.push(f.slope);
        }
    }
    let (ci_low, ci_high) = if slopes.is_empty() {
        (fit.slope, fit.slope)
    } else {
        slopes.sort_by(f64::total_cmp);
        (quantile_sorted(&slopes, 0.025), quantile_sorted(&slopes, 0.975))
    };
    Ok(SlopeEstimate {
        scale,
        slope: fit.slope,
        intercept: fit.intercept,
        r2: fit.r2,
        ci_low,
        ci_high,
        resamples: slopes.len(),
        points,
    })
}

/// The swept variable of a scaling audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Horizon,
    Agents,
}

impl Axis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Axis::Horizon => "horizon",
            Axis::Agents => "agents",
        }
    }

    pub fn value(&self, r: &RunRecord) -> f64 {
        match self {
            Axis::Horizon => r.spec.policy.horizon as f64,
            Axis::Agents => r.spec.policy.agents as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub axis: Axis,
    pub algorithm: Algorithm,
    pub runs: usize,
    /// Log-log slope of total regret.
    pub regret: SlopeEstimate,
    /// Median uplink bits against `ln T` (horizon sweeps with bit accounting).
    pub uplink_vs_log_horizon: Option<SlopeEstimate>,
}

/// Fits regret (and uplink bits) against the swept variable. Every other
/// setting must agree across records.
pub fn scaling_audit(
    records: &[RunRecord],
    axis: Axis,
    resamples: usize,
    seed: u64,
) -> Result<AuditReport, AuditError> {
    let first = records.first().ok_or(AuditError::TooFewGroups { got: 0, need: 3 })?;
    let base = &first.spec;
    for r in records {
        let (p, q) = (&r.spec.policy, &base.policy);
        let checks: [(&'static str, bool); 9] = [
            ("algorithm", r.spec.algorithm == base.algorithm),
            ("capacity", r.spec.capacity == base.capacity),
            ("d", p.d == q.d),
            ("sigma", p.sigma == q.sigma),
            ("delta", p.delta == q.delta),
            ("alpha0", p.alpha0 == q.alpha0),
            ("beta0", p.beta0 == q.beta0),
            ("sparse", p.sparse == q.sparse),
            (
                if axis == Axis::Horizon { "agents" } else { "horizon" },
                if axis == Axis::Horizon { p.agents == q.agents } else { p.horizon == q.horizon },
            ),
        ];
        if let Some((field, _)) = checks.iter().find(|c| !c.1) {
            return Err(AuditError::Incomparable(field));
        }
    }
    let mut groups: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
    for r in records {
        let x = axis.value(r);
        let i = match groups.iter().position(|g| g.0 == x) {
            Some(i) => i,
            None => {
                groups.push((x, Vec::new(), Vec::new()));
                groups.len() - 1
            }
        };
        groups[i].1.push(r.total_regret);
        if let Some(b) = r.uplink_bits {
            groups[i].2.push(b as f64);
        }
    }
    groups.sort_by(|a, b| a.0.total_cmp(&b.0));
    let regret_groups: Vec<(f64, Vec<f64>)> = groups.iter().map(|g| (g.0, g.1.clone())).collect();
    let regret = fit_medians(&regret_groups, Scale::LogLog, resamples, seed)?;
    let uplink_vs_log_horizon = if axis == Axis::Horizon && groups.iter().all(|g| g.2.len() == g.1.len()) {
        let bit_groups: Vec<(f64, Vec<f64>)> = groups.iter().map(|g| (g.0, g.2.clone())).collect();
        Some(fit_medians(&bit_groups, Scale::LinLog, resamples, seed.wrapping_add(1))?)
    } else {
        None
    };
    Ok(AuditReport { axis, algorithm: base.algorithm, runs: records.len(), regret, uplink_vs_log_horizon })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn type7_quantiles() {
        let v = [3.0, 1.0, 4.0, 2.0];
        assert_eq!(median(&v), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_relative_eq!(quantile(&v, 0.1), 1.3);
        let q = Quantiles::of(&[5.0]);
        assert_eq!((q.p10, q.p50, q.p90, q.mean), (5.0, 5.0, 5.0, 5.0));
    }

    #[test]
    fn exact_square_root_has_slope_half() {
        let groups: Vec<(f64, Vec<f64>)> =
            [1e3, 1e4, 1e5, 1e6].iter().map(|&x: &f64| (x, vec![x.sqrt(); 5])).collect();
        let fit = fit_medians(&groups, Scale::LogLog, 200, 1).unwrap();
        assert_relative_eq!(fit.slope, 0.5, epsilon = 1e-12);
        assert_relative_eq!(fit.r2, 1.0, epsilon = 1e-12);
        assert_relative_eq!(fit.ci_low, 0.5, epsilon = 1e-12);
        assert_relative_eq!(fit.ci_high, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn linear_in_log_fit() {
        let groups: Vec<(f64, Vec<f64>)> =
            [10.0, 100.0, 1000.0].iter().map(|&x: &f64| (x, vec![3.0 * x.ln() + 2.0])).collect();
        let fit = fit_medians(&groups, Scale::LinLog, 10, 1).unwrap();
        assert_relative_eq!(fit.slope, 3.0, epsilon = 1e-12);
        assert_relative_eq!(fit.intercept, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn noisy_interval_brackets_truth() {
        let mut rng = SeedTree::new(3).stream(Purpose::Scratch, 0);
        let groups: Vec<(f64, Vec<f64>)> = [1e3, 1e4, 1e5, 1e6]
            .iter()
            .map(|&x: &f64| (x, (0..40).map(|_| x.sqrt() * rng.random_range(0.8..1.2)).collect()))
            .collect();
        let fit = fit_medians(&groups, Scale::LogLog, 500, 9).unwrap();
        assert!(fit.ci_low < fit.ci_high);
        assert!(fit.ci_contains(0.5), "{fit:?}");
        assert_eq!(fit, fit_medians(&groups, Scale::LogLog, 500, 9).unwrap());
    }

    #[test]
    fn rejects_degenerate_input() {
        let two = vec![(1.0, vec![1.0]), (2.0, vec![2.0])];
        assert_eq!(fit_medians(&two, Scale::LogLog, 0, 0), Err(AuditError::TooFewGroups { got: 2, need: 3 }));
        let empty = vec![(1.0, vec![1.0]), (2.0, vec![]), (3.0, vec![1.0])];
        assert_eq!(fit_medians(&empty, Scale::LogLog, 0, 0), Err(AuditError::EmptyGroup(1)));
        let zero = vec![(1.0, vec![1.0]), (2.0, vec![0.0]), (3.0, vec![1.0])];
        assert_eq!(fit_medians(&zero, Scale::LogLog, 0, 0), Err(AuditError::NonPositive(0.0)));
    }
}
