//! Minimal SVG figures: section heatmaps, trace overlays and loss curves.

use std::fmt::Write as _;

use crate::data::SectionGrid;
use crate::error::{Error, Result};
use crate::eval::Overlay;
use crate::trainer::TrainHistory;

const CELL: f64 = 3.0;
const PANEL_W: f64 = 160.0;
const PANEL_H: f64 = 320.0;
const MARGIN: f64 = 30.0;

fn header(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    )
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

/// Blue-white-red ramp for `t` in `[0, 1]`.
fn color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let (r, g, b) = if t < 0.5 {
        let s = t * 2.0;
        (s, s, 1.0)
    } else {
        let s = (1.0 - t) * 2.0;
        (1.0, s, s)
    };
    format!("#{:02x}{:02x}{:02x}", (r * 255.0).round() as u8, (g * 255.0).round() as u8, (b * 255.0).round() as u8)
}

/// One rectangle per grid cell, depth increasing downward.
pub fn section_svg(grid: &SectionGrid, title: &str) -> String {
    let (lo, hi) = range(grid.values().iter().copied());
    let w = grid.n_traces() as f64 * CELL + 2.0 * MARGIN;
    let h = grid.depth() as f64 * CELL + 2.0 * MARGIN;
    let mut s = header(w, h);
    let _ = writeln!(s, "<text x=\"{MARGIN}\" y=\"18\" font-size=\"12\">{}</text>", escape(title));
    for (t, trace) in grid.traces().enumerate() {
        for (z, v) in trace.iter().enumerate() {
            let _ = writeln!(
                s,
                "<rect x=\"{}\" y=\"{}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{}\"/>",
                MARGIN + t as f64 * CELL,
                MARGIN + z as f64 * CELL,
                color((v - lo) / (hi - lo))
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn polyline(values: &[f64], x0: f64, lo: f64, hi: f64, stroke: &str) -> String {
    let n = values.len().max(2) as f64 - 1.0;
    let pts: Vec<String> = values
        .iter()
        .enumerate()
        .map(|(z, v)| {
            let x = x0 + (v - lo) / (hi - lo) * PANEL_W;
            let y = MARGIN + z as f64 / n * PANEL_H;
            format!("{x:.3},{y:.3}")
        })
        .collect();
    format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1.5\"/>\n",
        pts.join(" ")
    )
}

/// One panel per picked trace with the truth (black) and prediction (red).
pub fn overlay_svg(overlays: &[Overlay]) -> Result<String> {
    if overlays.is_empty() {
        return Err(Error::invalid("no traces to plot"));
    }
    let w = overlays.len() as f64 * (PANEL_W + MARGIN) + MARGIN;
    let h = PANEL_H + 2.0 * MARGIN;
    let mut s = header(w, h);
    for (i, o) in overlays.iter().enumerate() {
        if o.predicted.len() != o.truth.len() || o.truth.is_empty() {
            return Err(Error::invalid(format!("overlay for trace {} has mismatched lengths", o.trace)));
        }
        let (lo, hi) = range(o.truth.iter().chain(&o.predicted).copied());
        let x0 = MARGIN + i as f64 * (PANEL_W + MARGIN);
        let _ = writeln!(s, "<text x=\"{x0}\" y=\"18\" font-size=\"12\">trace {}</text>", o.trace);
        s.push_str(&polyline(&o.truth, x0, lo, hi, "black"));
        s.push_str(&polyline(&o.predicted, x0, lo, hi, "red"));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Log-scale curves of the regression, reconstruction, mismatch and total losses.
pub fn loss_svg(history: &TrainHistory) -> Result<String> {
    if history.records.is_empty() {
        return Err(Error::Degenerate("history has no epochs".into()));
    }
    let series: [(&str, &str, Vec<f64>); 4] = [
        ("l_reg", "blue", history.records.iter().map(|r| r.l_reg).collect()),
        ("l_recon", "green", history.records.iter().map(|r| r.l_recon).collect()),
        ("l_wml", "orange", history.records.iter().map(|r| r.l_wml).collect()),
        ("total", "black", history.records.iter().map(|r| r.total).collect()),
    ];
    let log = |v: f64| v.max(1e-12).log10();
    let (lo, hi) = range(series.iter().flat_map(|(_, _, v)| v.iter().map(|&x| log(x))));
    let width = 2.0 * PANEL_W + 2.0 * MARGIN;
    let mut s = header(width + 100.0, PANEL_H + 2.0 * MARGIN);
    let n = history.records.len().max(2) as f64 - 1.0;
    for (k, (name, stroke, values)) in series.iter().enumerate() {
        let pts: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let x = MARGIN + i as f64 / n * 2.0 * PANEL_W;
                let y = MARGIN + (hi - log(v)) / (hi - lo) * PANEL_H;
                format!("{x:.3},{y:.3}")
            })
            .collect();
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1.5\"/>",
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{stroke}\">{name}</text>",
            width + 10.0,
            MARGIN + 16.0 * k as f64
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::EpochRecord;

    #[test]
    fn section_has_one_cell_per_sample() {
        let g = SectionGrid::new(3, 4, 1.0, (0..12).map(f64::from).collect()).unwrap();
        let svg = section_svg(&g, "a < b");
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<rect").count(), 12 + 1);
        assert!(svg.contains("a &lt; b"));
    }

    #[test]
    fn overlay_two_polylines_per_pick() {
        let o = |t| Overlay {
            trace: t,
            predicted: vec![1.0, 2.0, 3.0],
            truth: vec![1.5, 2.0, 2.5],
        };
        let svg = overlay_svg(&[o(1), o(7), o(9)]).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 6);
        assert!(overlay_svg(&[]).is_err());
    }

    #[test]
    fn empty_history_is_an_error() {
        assert!(loss_svg(&TrainHistory::default()).is_err());
        let h = TrainHistory {
            records: vec![EpochRecord {
                epoch: 1,
                l_reg: 1.0,
                l_recon: 0.5,
                l_wml: 0.0,
                total: 1.5,
                r2: vec![None, None],
            }],
        };
        assert_eq!(loss_svg(&h).unwrap().matches("<polyline").count(), 4);
    }
}
