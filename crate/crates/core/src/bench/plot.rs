//! Static SVG plots.

use std::collections::BTreeMap;
use std::path::Path;

use plotters::prelude::*;

use super::experiment::{Method, Record};
use crate::error::{Error, Result};

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(23, 190, 207),
];

/// Values this small are drawn at the floor of a log axis.
const LOG_FLOOR: f64 = 1e-12;

fn plot_err<E: std::fmt::Debug>(e: E) -> Error {
    Error::Config(format!("plot: {e:?}"))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Per method: `(n, median, min, max)` of the gap to the true minimum.
pub(crate) fn summarize(records: &[Record]) -> BTreeMap<Method, Vec<(usize, f64, f64, f64)>> {
    let mut groups: BTreeMap<Method, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in records {
        groups.entry(r.method).or_default().entry(r.n).or_default().push(r.gap_to_true_min.max(LOG_FLOOR));
    }
    groups
        .into_iter()
        .map(|(m, by_n)| {
            let rows = by_n
                .into_iter()
                .map(|(n, mut v)| {
                    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    (n, median(&mut v), lo, hi)
                })
                .collect();
            (m, rows)
        })
        .collect()
}

fn log_range(lo: f64, hi: f64) -> std::ops::Range<f64> {
    let lo = lo.max(LOG_FLOOR);
    let hi = hi.max(lo * 10.0);
    (lo / 1.5)..(hi * 1.5)
}

/// Log-log plot of `f(z) - min f` against `n`: median over seeds with a
/// min-max bar per method.
pub fn plot_error_vs_n(records: &[Record], path: &Path, title: &str) -> Result<()> {
    let summary = summarize(records);
    let ns = records.iter().map(|r| r.n as f64);
    let (nlo, nhi) = ns.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), n| (a.min(n), b.max(n)));
    let (elo, ehi) = summary
        .values()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(_, _, lo, hi)| (a.min(lo), b.max(hi)));
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d((nlo / 1.2..nhi * 1.2).log_scale(), log_range(elo, ehi).log_scale())
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("n")
        .y_desc("f(z) - min f")
        .y_label_formatter(&|v| format!("{v:.0e}"))
        .draw()
        .map_err(plot_err)?;
    for (k, (method, rows)) in summary.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(rows.iter().map(|&(n, med, _, _)| (n as f64, med)), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(method.name())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
        chart
            .draw_series(rows.iter().map(|&(n, med, _, _)| Circle::new((n as f64, med), 3, color.filled())))
            .map_err(plot_err)?;
        chart
            .draw_series(rows.iter().map(|&(n, _, lo, hi)| PathElement::new(vec![(n as f64, lo), (n as f64, hi)], color)))
            .map_err(plot_err)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Running-minimum traces against evaluation count, log y axis.
pub fn plot_trace(series: &[(String, Vec<f64>)], offset: f64, path: &Path, title: &str) -> Result<()> {
    let len = series.iter().map(|(_, v)| v.len()).max().unwrap_or(0).max(2);
    let vals = series.iter().flat_map(|(_, v)| v.iter().map(|y| (y - offset).max(LOG_FLOOR)));
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (LOG_FLOOR, 1.0) };
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..len as f64, log_range(lo, hi).log_scale())
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("evaluations")
        .y_desc("best value - min f")
        .y_label_formatter(&|v| format!("{v:.0e}"))
        .draw()
        .map_err(plot_err)?;
    for (k, (name, v)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts = v.iter().enumerate().map(move |(i, y)| ((i + 1) as f64, (y - offset).max(LOG_FLOOR)));
        chart
            .draw_series(LineSeries::new(pts, color.stroke_width(2)))
            .map_err(plot_err)?
            .label(name.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}
