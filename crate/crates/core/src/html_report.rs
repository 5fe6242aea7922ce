//! Static HTML summary of a directory of runs: loss curves from training
//! logs, per-horizon IS from evaluation reports, and any PNG montages.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::metrics::EvalReport;
use crate::repr_train::{read_log, LOG_FILE};
use crate::{Error, Result};

const PRED_LOG_FILE: &str = "pred_log.csv";
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// A line chart with linear axes as an inline SVG element.
pub fn svg_line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h, m) = (640.0, 320.0, 48.0);
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = write!(svg, r#"<text x="{}" y="16" text-anchor="middle" font-size="13">{}</text>"#, w / 2.0, escape(title));
    let _ = write!(
        svg,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{m}" y1="{m}" x2="{m}" y2="{b}" stroke="black"/>"#,
        b = h - m,
        r = w - m
    );
    for (v, y) in [(y0, h - m), (y1, m)] {
        let _ = write!(svg, r#"<text x="{}" y="{}" text-anchor="end">{v:.3}</text>"#, m - 4.0, y + 4.0);
    }
    for (v, x) in [(x0, m), (x1, w - m)] {
        let _ = write!(svg, r#"<text x="{x}" y="{}" text-anchor="middle">{v}</text>"#, h - m + 14.0);
    }
    let _ = write!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 8.0, escape(x_label));
    let _ = write!(
        svg,
        r#"<text x="12" y="{}" text-anchor="middle" transform="rotate(-90 12 {})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        let _ = write!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            w - m + 4.0 - 120.0,
            m + 14.0 * i as f64,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>");
    svg
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            walk(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

fn read_pred_log(path: &Path) -> Result<Vec<(f64, f64, f64)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| rec.get(i).and_then(|v| v.parse::<f64>().ok()).unwrap_or(f64::NAN);
        rows.push((num(0), num(1), num(2)));
    }
    Ok(rows)
}

fn label(root: &Path, path: &Path) -> String {
    let rel = path.parent().and_then(|p| p.strip_prefix(root).ok()).map(|p| p.display().to_string());
    match rel {
        Some(r) if !r.is_empty() => r,
        _ => ".".into(),
    }
}

/// Relative link from the report's directory when possible.
fn link(report_dir: &Path, target: &Path) -> String {
    let abs = |p: &Path| std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    let (base, t) = (abs(report_dir), abs(target));
    match t.strip_prefix(&base) {
        Ok(rel) => rel.display().to_string(),
        Err(_) => format!("file://{}", t.display()),
    }
}

/// Writes the summary page for everything found under `runs_dir`.
pub fn write_report(runs_dir: impl AsRef<Path>, out: impl AsRef<Path>) -> Result<()> {
    let (root, out) = (runs_dir.as_ref(), out.as_ref());
    let mut files = Vec::new();
    walk(root, &mut files)?;
    let name = |p: &PathBuf| p.file_name().and_then(|n| n.to_str()).unwrap_or("").to_string();
    let mut body = String::new();

    let logs: Vec<&PathBuf> = files.iter().filter(|p| name(p) == LOG_FILE).collect();
    if !logs.is_empty() {
        body.push_str("<h2>Representation training</h2>\n");
        for p in logs {
            let rows = read_log(p)?;
            let col = |f: fn(&crate::repr_train::LogRow) -> Option<f64>| Series {
                name: String::new(),
                points: rows.iter().filter_map(|r| f(r).map(|v| (r.step as f64, v))).collect(),
            };
            let mut series = vec![
                Series { name: "recon".into(), ..col(|r| Some(r.recon)) },
                Series { name: "total".into(), ..col(|r| Some(r.total)) },
            ];
            if rows.iter().any(|r| r.g_loss.is_some()) {
                series.push(Series { name: "g_loss".into(), ..col(|r| r.g_loss) });
                series.push(Series { name: "d_loss".into(), ..col(|r| r.d_loss) });
            }
            body.push_str(&svg_line_chart(&label(root, p), "step", "loss", &series));
            body.push('\n');
            let kl = [Series { name: "kl".into(), ..col(|r| Some(r.kl)) }];
            body.push_str(&svg_line_chart(&format!("{} KL", label(root, p)), "step", "KL", &kl));
            body.push('\n');
        }
    }

    let pred_logs: Vec<&PathBuf> = files.iter().filter(|p| name(p) == PRED_LOG_FILE).collect();
    if !pred_logs.is_empty() {
        body.push_str("<h2>Latent predictor training</h2>\n");
        for p in pred_logs {
            let rows = read_pred_log(p)?;
            let series = [
                Series { name: "train".into(), points: rows.iter().map(|r| (r.0, r.1)).collect() },
                Series { name: "val".into(), points: rows.iter().map(|r| (r.0, r.2)).collect() },
            ];
            body.push_str(&svg_line_chart(&label(root, p), "epoch", "latent MSE", &series));
            body.push('\n');
        }
    }

    let mut reports = Vec::new();
    for p in files.iter().filter(|p| p.extension().is_some_and(|e| e == "json")) {
        let Ok(text) = std::fs::read_to_string(p) else { continue };
        if let Ok(r) = serde_json::from_str::<EvalReport>(&text) {
            reports.push((label(root, p), r));
        }
    }
    if !reports.is_empty() {
        body.push_str("<h2>Prediction quality</h2>\n");
        let series: Vec<Series> = reports
            .iter()
            .map(|(l, r)| Series {
                name: format!("{} ({l})", r.method),
                points: r.per_horizon.iter().map(|h| (h.t as f64, h.is.mean)).collect(),
            })
            .collect();
        body.push_str(&svg_line_chart("IS per horizon step", "step", "IS (lower is better)", &series));
        body.push_str("\n<table><tr><th>run</th><th>method</th><th>overall IS</th><th>± SE</th><th>overall MSE</th></tr>\n");
        for (l, r) in &reports {
            let _ = writeln!(
                body,
                "<tr><td>{}</td><td>{}</td><td>{:.3}</td><td>{:.3}</td><td>{:.5}</td></tr>",
                escape(l),
                escape(&r.method),
                r.overall_is.mean,
                r.overall_is.se,
                r.overall_mse.mean
            );
        }
        body.push_str("</table>\n");
    }

    let report_dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let pngs: Vec<&PathBuf> = files.iter().filter(|p| p.extension().is_some_and(|e| e == "png")).collect();
    if !pngs.is_empty() {
        body.push_str("<h2>Montages</h2>\n");
        for p in pngs {
            let _ = writeln!(
                body,
                r#"<figure><img src="{}" style="image-rendering:pixelated;width:512px"><figcaption>{}</figcaption></figure>"#,
                escape(&link(report_dir, p)),
                escape(&p.strip_prefix(root).unwrap_or(p).display().to_string())
            );
        }
    }
    if body.is_empty() {
        body.push_str("<p>No training logs, evaluation reports or montages found.</p>\n");
    }

    let html = format!(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Run summary</title>\n\
         <style>body{{font-family:sans-serif;max-width:900px;margin:auto}}td,th{{padding:2px 8px}}</style>\n\
         </head><body>\n<h1>Run summary: {}</h1>\n{body}</body></html>\n",
        escape(&root.display().to_string())
    );
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(out, html).map_err(|e| Error::io(out, e))
}
