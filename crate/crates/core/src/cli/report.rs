//! CSV tables, the markdown summary and standalone SVG line charts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{EvalSummary, Method, RunManifest, SweepRow};
use crate::eval::{MetricsReport, Summary};
use crate::Result;

#[derive(Debug, Serialize)]
struct ReportRow<'a> {
    method: &'a str,
    scenario: String,
    /// Run id, or `mean` for the aggregate row.
    run: String,
    surrogate_size: Option<usize>,
    original_test: f64,
    test: f64,
    forget: f64,
    aus: f64,
    mia_f1: Option<f64>,
    mia_std: Option<f64>,
    epochs: f64,
    stop_reason: String,
}

fn csv_err(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => crate::Error::Io(io),
        other => crate::Error::Format { offset: 0, message: format!("{other:?}") },
    }
}

pub(super) fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(d) = path.parent() {
        fs::create_dir_all(d)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(super) fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// Per-run rows followed by one aggregate row holding the means.
pub(super) fn write_report_csv(
    path: &Path,
    runs: &[MetricsReport],
    agg: &Summary,
    surrogate_size: Option<usize>,
) -> Result<()> {
    let mut rows: Vec<ReportRow> = runs
        .iter()
        .map(|r| ReportRow {
            method: &r.method,
            scenario: r.scenario.to_string(),
            run: r.run.to_string(),
            surrogate_size,
            original_test: r.original_test,
            test: r.test,
            forget: r.forget,
            aus: r.aus,
            mia_f1: r.mia_f1,
            mia_std: r.mia_std,
            epochs: r.epochs as f64,
            stop_reason: r.stop_reason.clone().unwrap_or_default(),
        })
        .collect();
    if let Some(first) = runs.first() {
        rows.push(ReportRow {
            method: &first.method,
            scenario: first.scenario.to_string(),
            run: "mean".into(),
            surrogate_size,
            original_test: agg.original_test.mean,
            test: agg.test.mean,
            forget: agg.forget.mean,
            aus: agg.aus.mean,
            mia_f1: agg.mia_f1.map(|m| m.mean),
            mia_std: agg.mia_f1.map(|m| m.std),
            epochs: agg.epochs.mean,
            stop_reason: String::new(),
        });
    }
    write_rows(path, &rows)
}

#[derive(Debug, Serialize)]
struct CurveRow {
    epoch: usize,
    test_accuracy: f64,
}

pub(super) fn write_curve_csv(path: &Path, curve: &[f64]) -> Result<()> {
    let rows: Vec<CurveRow> =
        curve.iter().enumerate().map(|(epoch, &test_accuracy)| CurveRow { epoch, test_accuracy }).collect();
    write_rows(path, &rows)
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

pub(super) fn markdown(
    manifest: &RunManifest,
    summaries: &[EvalSummary],
    sweeps: &[(Method, Vec<SweepRow>)],
) -> String {
    let mut s = String::from("# Unlearning report\n\n");
    let _ = writeln!(s, "config hash `{}`\n", manifest.config_hash);
    if let Some(a) = manifest.original_test_accuracy {
        let _ = writeln!(s, "original test accuracy {}%\n", pct(a));
    }
    let _ = writeln!(
        s,
        "| method | surrogate | runs | test | forget | AUS | MIA F1 | epochs | KS p |\n|---|---|---|---|---|---|---|---|---|"
    );
    for sum in summaries {
        let size = sum.surrogate_size.map_or("default".to_string(), |n| n.to_string());
        match &sum.aggregate {
            Some(a) => {
                let mia = a.mia_f1.map_or("-".to_string(), |m| format!("{} ± {}", pct(m.mean), pct(m.std)));
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} ± {} | {} ± {} | {:.3} ± {:.3} | {} | {:.1} | {:.3e} |",
                    sum.method,
                    size,
                    a.runs,
                    pct(a.test.mean),
                    pct(a.test.std),
                    pct(a.forget.mean),
                    pct(a.forget.std),
                    a.aus.mean,
                    a.aus.std,
                    mia,
                    a.epochs.mean,
                    sum.ks.p_value
                );
            }
            None => {
                if let Some(c) = &sum.curve {
                    let first = c.first().copied().unwrap_or(0.0);
                    let low = c.iter().copied().fold(f64::INFINITY, f64::min);
                    let _ = writeln!(
                        s,
                        "| {} | {} | 1 | start {} / min {} | - | - | - | {} | {:.3e} |",
                        sum.method,
                        size,
                        pct(first),
                        pct(low),
                        c.len().saturating_sub(1),
                        sum.ks.p_value
                    );
                }
            }
        }
    }
    for (m, rows) in sweeps {
        let _ = writeln!(
            s,
            "\n## {m}: surrogate size sweep\n\n| size | runs | test | forget | AUS |\n|---|---|---|---|---|"
        );
        for r in rows {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {:.3} ± {:.3} |",
                r.surrogate_size,
                r.runs,
                pct(r.test_mean),
                pct(r.forget_mean),
                r.aus_mean,
                r.aus_std
            );
        }
    }
    s
}

/// A named poly-line.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 7] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"];
const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Standalone SVG line chart. Every marker carries its exact data values in
/// `data-x` / `data-y` attributes.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x0, x1) = span(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = span(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(s, r#"<path d="M{LEFT},{TOP} V{} H{}" fill="none" stroke="black"/>"#, TOP + ph, LEFT + pw);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(xv),
            TOP + ph + 18.0,
            tick(xv)
        );
        let _ =
            writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 6.0, sy(yv) + 4.0, tick(yv));
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" x2="{}" y1="{:.1}" y2="{:.1}" stroke="#ddd"/>"##,
            LEFT + pw,
            sy(yv),
            sy(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 14.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16,{}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + ph / 2.0,
        escape(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            r#"<g class="series" data-name="{}"><polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            escape(&ser.name),
            pts.join(" ")
        );
        for &(x, y) in &ser.points {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}" data-x="{x}" data-y="{y}"/>"#,
                sx(x),
                sy(y)
            );
        }
        let ly = TOP + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"</g><rect x="{}" y="{}" width="12" height="3" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
            LEFT + pw + 12.0,
            ly + 4.0,
            LEFT + pw + 30.0,
            ly + 9.0,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markers_carry_exact_values() {
        let svg = line_chart(
            "t",
            "x",
            "y",
            &[Series { name: "a<b".into(), points: vec![(500.0, 0.8123456789), (2000.0, 0.9)] }],
        );
        assert!(svg.contains(r#"data-x="500" data-y="0.8123456789""#));
        assert!(svg.contains("a&lt;b"));
        assert_eq!(svg.matches("<circle").count(), 2);
    }

    #[test]
    fn flat_series_has_a_finite_scale() {
        let svg = line_chart("t", "x", "y", &[Series { name: "a".into(), points: vec![(1.0, 0.5)] }]);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
