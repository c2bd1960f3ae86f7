//! Static SVG line charts. Output depends only on the input values, so the
//! same data always renders to the same bytes.

use std::fmt::Write;

use crate::metrics::MetricsRow;

const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Points drawn as hollow circles on top of the line.
    pub markers: Vec<(f64, f64)>,
}

pub struct Panel {
    pub id: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn render_panel(out: &mut String, panel: &Panel, left: f64, top: f64, width: f64, height: f64) {
    let (mx, mt, mr, mb) = (60.0, 30.0, 110.0, 45.0);
    let (pw, ph) = (width - mx - mr, height - mt - mb);
    let all = || panel.series.iter().flat_map(|s| s.points.iter());
    let (x0, x1) = bounds(all().map(|p| p.0));
    let (y0, y1) = bounds(all().map(|p| p.1));
    let sx = |x: f64| left + mx + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + mt + ph - (y - y0) / (y1 - y0) * ph;

    let _ = writeln!(out, r#"<g id="{}">"#, escape(&panel.id));
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">{}</text>"#,
        left + mx + pw / 2.0,
        top + 18.0,
        escape(&panel.title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{:.2}" y="{:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#444"/>"##,
        left + mx,
        top + mt
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"#,
            sx(xv),
            top + mt + ph + 14.0,
            tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{}</text>"#,
            left + mx - 4.0,
            sy(yv) + 3.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
        left + mx + pw / 2.0,
        top + height - 8.0,
        escape(&panel.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">{}</text>"#,
        left + 14.0,
        top + mt + ph / 2.0,
        left + 14.0,
        top + mt + ph / 2.0,
        escape(&panel.y_label)
    );
    for (k, s) in panel.series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        if let [(x, y)] = s.points[..] {
            let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, sx(x), sy(y));
        }
        for &(x, y) in &s.markers {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="none" stroke="{color}"/>"#,
                sx(x),
                sy(y)
            );
        }
        let ly = top + mt + 12.0 + 16.0 * k as f64;
        let lx = left + mx + pw + 10.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 16.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="10">{}</text>"#,
            lx + 20.0,
            ly + 3.0,
            escape(&s.label)
        );
    }
    out.push_str("</g>\n");
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else if v.abs() >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

/// Panels side by side in one document.
pub fn render(panels: &[Panel]) -> String {
    let (w, h) = (520.0, 320.0);
    let total = w * panels.len() as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total:.0}" height="{h:.0}" viewBox="0 0 {total:.0} {h:.0}">"#
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for (i, panel) in panels.iter().enumerate() {
        render_panel(&mut out, panel, w * i as f64, 0.0, w, h);
    }
    out.push_str("</svg>\n");
    out
}

/// Per-task master validation loss against global iteration for one run,
/// with accepted transfers circled. Runs without validation plot the
/// training loss instead.
pub fn loss_curves(run_id: u64, rows: &[MetricsRow]) -> String {
    let has_val = rows.iter().any(|r| r.master_val_loss.is_some());
    let mut tasks: Vec<usize> = rows.iter().map(|r| r.task_id).collect();
    tasks.sort_unstable();
    tasks.dedup();
    let series = tasks
        .iter()
        .map(|&t| {
            let mine: Vec<&MetricsRow> = rows.iter().filter(|r| r.task_id == t).collect();
            let y = |r: &MetricsRow| if has_val { r.master_val_loss.unwrap_or(f64::NAN) } else { r.train_loss };
            Series {
                label: format!("task {t}"),
                points: mine
                    .iter()
                    .map(|r| (r.global_iteration as f64, y(r)))
                    .filter(|p| p.1.is_finite())
                    .collect(),
                markers: mine
                    .iter()
                    .filter(|r| r.transfer_accepted == Some(true))
                    .map(|r| (r.global_iteration as f64, y(r)))
                    .collect(),
            }
        })
        .collect();
    render(&[Panel {
        id: "panel-loss".into(),
        title: format!("run {run_id}: {}", if has_val { "master validation loss" } else { "training loss" }),
        x_label: "iteration".into(),
        y_label: "loss".into(),
        series,
    }])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_text() {
        assert_eq!(escape("a<b & \"c\">"), "a&lt;b &amp; &quot;c&quot;&gt;");
    }

    #[test]
    fn flat_series_gets_nonzero_range() {
        let (lo, hi) = bounds([2.0, 2.0].into_iter());
        assert!(hi > lo);
    }
}
