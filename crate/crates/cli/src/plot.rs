//! Static SVG charts rendered from `curves.csv` alone.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use pls_core::audit::quantile_sorted;
use pls_core::sim::CurveRow;

use crate::error::CliError;
use crate::run::{read_curves, CURVES_FILE};

const SIZE: (u32, u32) = (900, 560);
const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(23, 190, 207),
];

/// Per-`t` 10/50/90 percentiles of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub t: Vec<f64>,
    pub lo: Vec<f64>,
    pub mid: Vec<f64>,
    pub hi: Vec<f64>,
    pub reps: usize,
}

/// Runs of one sweep cell, keyed by their run ids.
#[derive(Debug, Clone, Default)]
pub struct Series {
    pub runs: BTreeMap<String, Vec<CurveRow>>,
}

/// Splits `cell-r3` into `("cell", 3)`.
pub fn split_run_id(run_id: &str) -> (&str, Option<usize>) {
    match run_id.rsplit_once("-r") {
        Some((cell, rep)) => match rep.parse() {
            Ok(r) => (cell, Some(r)),
            Err(_) => (run_id, None),
        },
        None => (run_id, None),
    }
}

/// Value of a `-M4`-style token in a cell id.
pub fn id_field(cell: &str, prefix: char) -> Option<u64> {
    cell.split('-').find_map(|tok| tok.strip_prefix(prefix).and_then(|v| v.parse().ok()))
}

pub fn group_series(rows: Vec<CurveRow>) -> BTreeMap<String, Series> {
    let mut out: BTreeMap<String, Series> = BTreeMap::new();
    for row in rows {
        let cell = split_run_id(&row.run_id).0.to_string();
        out.entry(cell).or_default().runs.entry(row.run_id.clone()).or_default().push(row);
    }
    out
}

impl Series {
    /// Percentiles of `value` at the times every run shares. A single run
    /// keeps all of its points.
    pub fn band(&self, value: impl Fn(&CurveRow) -> Option<f64>) -> Option<Band> {
        let runs: Vec<&Vec<CurveRow>> = self.runs.values().collect();
        let mut common: Vec<u64> = runs.first()?.iter().map(|r| r.t).collect();
        for run in &runs[1..] {
            common.retain(|t| run.iter().any(|r| r.t == *t));
        }
        let mut band = Band { t: vec![], lo: vec![], mid: vec![], hi: vec![], reps: runs.len() };
        for t in common {
            let mut vals: Vec<f64> = Vec::with_capacity(runs.len());
            for run in &runs {
                let row = run.iter().find(|r| r.t == t).expect("common time");
                vals.push(value(row)?);
            }
            vals.sort_by(f64::total_cmp);
            band.t.push(t as f64);
            band.lo.push(quantile_sorted(&vals, 0.1));
            band.mid.push(quantile_sorted(&vals, 0.5));
            band.hi.push(quantile_sorted(&vals, 0.9));
        }
        (!band.t.is_empty()).then_some(band)
    }

    pub fn final_values(&self, value: impl Fn(&CurveRow) -> f64) -> Vec<f64> {
        self.runs.values().filter_map(|r| r.last().map(&value)).collect()
    }
}

fn plot_err(e: impl std::fmt::Display) -> CliError {
    CliError::Other(anyhow::anyhow!("plotting: {e}"))
}

fn bounds(bands: &[(String, Band)], log_x: bool) -> (f64, f64, f64) {
    let x_min = bands.iter().flat_map(|(_, b)| b.t.iter().copied()).fold(f64::INFINITY, f64::min);
    let x_max = bands.iter().flat_map(|(_, b)| b.t.iter().copied()).fold(0.0, f64::max);
    let y_max = bands.iter().flat_map(|(_, b)| b.hi.iter().copied()).fold(0.0, f64::max);
    let x_min = if log_x { x_min.max(1.0) } else { 0.0 };
    (x_min, x_max.max(x_min * 2.0), if y_max > 0.0 { y_max * 1.05 } else { 1.0 })
}

/// One chart of median lines with shaded 10–90 bands.
fn draw_bands(path: &Path, title: &str, y_label: &str, bands: &[(String, Band)], log_x: bool) -> Result<(), CliError> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let (x0, x1, y1) = bounds(bands, log_x);
    let mut builder = ChartBuilder::on(&root);
    builder.caption(title, ("sans-serif", 22)).margin(12).x_label_area_size(40).y_label_area_size(70);
    macro_rules! body {
        ($chart:expr) => {{
            let mut chart = $chart;
            chart.configure_mesh().x_desc("t").y_desc(y_label).draw().map_err(plot_err)?;
            for (i, (name, band)) in bands.iter().enumerate() {
                let color = PALETTE[i % PALETTE.len()];
                if band.reps > 1 {
                    let mut poly: Vec<(f64, f64)> = band.t.iter().copied().zip(band.hi.iter().copied()).collect();
                    poly.extend(band.t.iter().copied().zip(band.lo.iter().copied()).rev());
                    chart.draw_series(std::iter::once(Polygon::new(poly, color.mix(0.18)))).map_err(plot_err)?;
                }
                chart
                    .draw_series(LineSeries::new(
                        band.t.iter().copied().zip(band.mid.iter().copied()),
                        color.stroke_width(2),
                    ))
                    .map_err(plot_err)?
                    .label(name.as_str())
                    .legend(move |(x, y)| Rectangle::new([(x, y - 4), (x + 16, y + 4)], color.filled()));
            }
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.85))
                .border_style(BLACK)
                .position(SeriesLabelPosition::UpperLeft)
                .draw()
                .map_err(plot_err)?;
        }};
    }
    if log_x {
        body!(builder.build_cartesian_2d((x0..x1).log_scale(), 0.0..y1).map_err(plot_err)?);
    } else {
        body!(builder.build_cartesian_2d(x0..x1, 0.0..y1).map_err(plot_err)?);
    }
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Final regret against the number of agents, one line per remaining
/// configuration, on log-log axes.
fn draw_agents(path: &Path, lines: &[(String, Vec<(f64, f64, f64, f64)>)]) -> Result<(), CliError> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let pts = lines.iter().flat_map(|(_, p)| p.iter());
    let (mut m0, mut m1, mut y0, mut y1) = (f64::INFINITY, 0.0f64, f64::INFINITY, 0.0f64);
    for &(m, lo, _, hi) in pts {
        m0 = m0.min(m);
        m1 = m1.max(m);
        y0 = y0.min(lo.max(1e-9));
        y1 = y1.max(hi);
    }
    let mut chart = ChartBuilder::on(&root)
        .caption("final regret vs agents", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d((m0 * 0.8..m1 * 1.25).log_scale(), (y0 * 0.8..y1 * 1.25).log_scale())
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("M").y_desc("R(T)").draw().map_err(plot_err)?;
    for (i, (name, points)) in lines.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        chart
            .draw_series(points.iter().map(|&(m, lo, _, hi)| ErrorBar::new_vertical(m, lo, (lo + hi) / 2.0, hi, color, 8)))
            .map_err(plot_err)?;
        chart
            .draw_series(LineSeries::new(points.iter().map(|&(m, _, mid, _)| (m, mid)), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(name.as_str())
            .legend(move |(x, y)| Rectangle::new([(x, y - 4), (x + 16, y + 4)], color.filled()));
    }
    chart.configure_series_labels().border_style(BLACK).background_style(WHITE.mix(0.85)).draw().map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Renders `regret.svg`, `bits.svg` and, when several agent counts share
/// the other settings, `regret_vs_agents.svg`. Returns the files written.
pub fn cmd_plot(run_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let rows = read_curves(&run_dir.join(CURVES_FILE))?;
    let series = group_series(rows);
    let mut written = Vec::new();
    if series.is_empty() {
        log::warn!("{} holds no curves; nothing to plot", run_dir.display());
        return Ok(written);
    }
    std::fs::create_dir_all(out_dir)?;

    let regret: Vec<(String, Band)> =
        series.iter().filter_map(|(k, s)| s.band(|r| Some(r.regret)).map(|b| (k.clone(), b))).collect();
    if !regret.is_empty() {
        let path = out_dir.join("regret.svg");
        draw_bands(&path, "cumulative regret", "R(t)", &regret, false)?;
        written.push(path);
    }

    let mut bits = Vec::new();
    for (k, s) in &series {
        if let Some(b) = s.band(|r| r.c_u_bits.map(|v| v as f64)) {
            bits.push((format!("{k} C_u"), b));
        }
        if let Some(b) = s.band(|r| r.c_d_bits.map(|v| v as f64)) {
            bits.push((format!("{k} C_d"), b));
        }
    }
    if !bits.is_empty() {
        let path = out_dir.join("bits.svg");
        draw_bands(&path, "communication", "bits", &bits, true)?;
        written.push(path);
    }

    // Cells that differ only in M form one line.
    let mut by_rest: BTreeMap<String, Vec<(f64, f64, f64, f64)>> = BTreeMap::new();
    for (k, s) in &series {
        let Some(m) = id_field(k, 'M') else { continue };
        let rest: Vec<&str> = k.split('-').filter(|tok| !(tok.starts_with('M') && tok[1..].parse::<u64>().is_ok())).collect();
        let mut finals = s.final_values(|r| r.regret);
        finals.sort_by(f64::total_cmp);
        by_rest.entry(rest.join("-")).or_default().push((
            m as f64,
            quantile_sorted(&finals, 0.1),
            quantile_sorted(&finals, 0.5),
            quantile_sorted(&finals, 0.9),
        ));
    }
    let lines: Vec<(String, Vec<(f64, f64, f64, f64)>)> = by_rest
        .into_iter()
        .filter(|(_, p)| p.len() >= 2 && p.iter().all(|q| q.2 > 0.0))
        .map(|(k, mut p)| {
            p.sort_by(|a, b| a.0.total_cmp(&b.0));
            (k, p)
        })
        .collect();
    if !lines.is_empty() {
        let path = out_dir.join("regret_vs_agents.svg");
        draw_agents(&path, &lines)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use pls_core::sim::Segment;

    fn row(id: &str, t: u64, regret: f64) -> CurveRow {
        CurveRow {
            run_id: id.into(),
            t,
            regret,
            c_u_bits: Some(t),
            c_d_bits: None,
            stage: Segment::Norm,
            epoch: 1,
        }
    }

    #[test]
    fn run_ids_split() {
        assert_eq!(split_run_id("pls-T100-M4-d2-r12"), ("pls-T100-M4-d2", Some(12)));
        assert_eq!(split_run_id("weird"), ("weird", None));
        assert_eq!(id_field("pls-T100-M4-d2", 'M'), Some(4));
        assert_eq!(id_field("pls-T100-M4-d2", 'T'), Some(100));
    }

    #[test]
    fn bands_use_shared_times() {
        let rows = vec![
            row("a-r0", 1, 1.0),
            row("a-r0", 3, 2.0),
            row("a-r0", 4, 3.0),
            row("a-r1", 1, 3.0),
            row("a-r1", 2, 4.0),
            row("a-r1", 4, 5.0),
        ];
        let series = group_series(rows);
        let band = series["a"].band(|r| Some(r.regret)).unwrap();
        assert_eq!(band.t, vec![1.0, 4.0]);
        assert_eq!(band.mid, vec![2.0, 4.0]);
        assert_eq!(band.reps, 2);
        assert!(series["a"].band(|r| r.c_d_bits.map(|v| v as f64)).is_none());
    }
}
