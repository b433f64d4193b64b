//! Tab-separated plot tables and a small self-contained SVG chart.
//!
//! Tables use a header row, LF line endings and `inf` for infinities.
//! Missing hard-mismatch values (incomparable metrics) are written as `NA`.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::curves::{Origin, PairedRun};
use crate::fmt::cell;
use crate::io::report::MismatchReport;
use crate::metrics::MismatchValue;

pub const CURVES_FILE: &str = "curves.tsv";
pub const MISMATCH_FILE: &str = "mismatch.tsv";
pub const NORMALIZED_FILE: &str = "normalized.tsv";
pub const CHART_FILE: &str = "chart.svg";

pub const CURVES_HEADER: [&str; 4] = ["step", "pretext", "target", "target_origin"];
pub const MISMATCH_HEADER: [&str; 4] = ["step", "m3", "sm3", "ofm"];
pub const NORMALIZED_HEADER: [&str; 3] = ["step", "normalized", "shifted"];

fn header(cols: &[&str]) -> String {
    let mut s = cols.join("\t");
    s.push('\n');
    s
}

/// Pretext and target curves per step.
pub fn curves_table(run: &PairedRun) -> String {
    let mut s = header(&CURVES_HEADER);
    let t = run.target();
    for (i, step) in run.steps().iter().enumerate() {
        let origin = match t.origins()[i] {
            Origin::Measured => "measured",
            Origin::Interpolated => "interpolated",
        };
        writeln!(
            s,
            "{step}\t{}\t{}\t{origin}",
            cell(run.pretext().values()[i]),
            cell(t.values()[i])
        )
        .unwrap();
    }
    s
}

/// M3, SM3 and OFM per step.
pub fn mismatch_table(report: &MismatchReport) -> String {
    let c = &report.curves;
    let mut s = header(&MISMATCH_HEADER);
    for (i, step) in c.steps.iter().enumerate() {
        let m3 = c.m3.as_ref().map_or_else(|| "NA".to_owned(), |m| cell(m[i]));
        writeln!(s, "{step}\t{m3}\t{}\t{}", cell(c.sm3[i]), cell(c.ofm[i].as_f64())).unwrap();
    }
    s
}

/// Normalized target curve, and the same curve shifted so its minimum is
/// zero. The shift exists only for display.
pub fn normalized_table(report: &MismatchReport) -> String {
    let c = &report.curves;
    let min = c
        .normalized
        .iter()
        .map(MismatchValue::as_f64)
        .fold(f64::INFINITY, f64::min);
    let mut s = header(&NORMALIZED_HEADER);
    for (step, v) in c.steps.iter().zip(&c.normalized) {
        let v = v.as_f64();
        writeln!(s, "{step}\t{}\t{}", cell(v), cell(v - min)).unwrap();
    }
    s
}

struct Panel<'a> {
    title: &'a str,
    lines: Vec<(&'a str, &'a str, Vec<f64>)>,
}

fn polyline(xs: &[f64], ys: &[f64], (x0, y0, w, h): (f64, f64, f64, f64), (lo, hi): (f64, f64), (xmin, xmax): (f64, f64)) -> String {
    let xspan = if xmax > xmin { xmax - xmin } else { 1.0 };
    let yspan = if hi > lo { hi - lo } else { 1.0 };
    xs.iter()
        .zip(ys)
        .filter(|(_, y)| y.is_finite())
        .map(|(x, y)| {
            let px = x0 + (x - xmin) / xspan * w;
            let py = y0 + h - (y - lo) / yspan * h;
            format!("{px:.2},{py:.2}")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Two stacked panels: curves on top, OFM below.
pub fn chart_svg(report: &MismatchReport, run: &PairedRun) -> String {
    let xs: Vec<f64> = run.steps().iter().map(|&s| s as f64).collect();
    let panels = [
        Panel {
            title: "pretext vs target",
            lines: vec![
                ("pretext", "#1f77b4", run.pretext().values().to_vec()),
                ("target", "#d62728", run.target().values().to_vec()),
            ],
        },
        Panel {
            title: "objective function mismatch",
            lines: vec![(
                "ofm",
                "#2ca02c",
                report.curves.ofm.iter().map(MismatchValue::as_f64).collect(),
            )],
        },
    ];
    let (width, panel_h, margin) = (640.0, 220.0, 40.0);
    let height = panels.len() as f64 * (panel_h + margin) + margin;
    let xrange = (
        xs.first().copied().unwrap_or(0.0),
        xs.last().copied().unwrap_or(1.0),
    );
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    )
    .unwrap();
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for (p, panel) in panels.iter().enumerate() {
        let y0 = margin + p as f64 * (panel_h + margin);
        let finite = panel.lines.iter().flat_map(|l| l.2.iter()).filter(|v| v.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
        let frame = (margin, y0, width - 2.0 * margin, panel_h);
        writeln!(
            svg,
            r##"<rect x="{}" y="{y0}" width="{}" height="{panel_h}" fill="none" stroke="#888"/>"##,
            margin,
            width - 2.0 * margin
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{margin}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            y0 - 6.0,
            panel.title
        )
        .unwrap();
        for (i, (name, color, ys)) in panel.lines.iter().enumerate() {
            writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                polyline(&xs, ys, frame, (lo, hi), xrange)
            )
            .unwrap();
            writeln!(
                svg,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">{name}</text>"#,
                width - margin - 60.0,
                y0 + 14.0 + 13.0 * i as f64
            )
            .unwrap();
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes the three tables (and optionally the chart) into `dir`.
pub fn emit_plot_data(
    report: &MismatchReport,
    run: &PairedRun,
    dir: &Path,
    with_chart: bool,
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = vec![
        (CURVES_FILE, curves_table(run)),
        (MISMATCH_FILE, mismatch_table(report)),
        (NORMALIZED_FILE, normalized_table(report)),
    ];
    if with_chart {
        files.push((CHART_FILE, chart_svg(report, run)));
    }
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}
