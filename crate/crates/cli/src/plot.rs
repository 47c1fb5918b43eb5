//! SVG score timelines with ground-truth intervals shaded in pink.

use std::fmt::Write;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 240.0;
const MARGIN: f64 = 30.0;
pub const GT_FILL: &str = "#ffc0cb";

/// Maximal runs of `true` as half-open `[start, end)` frame ranges.
pub fn label_runs(labels: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &l) in labels.iter().enumerate() {
        match (l, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, labels.len()));
    }
    runs
}

/// Renders scores in `[0, 1]` against frame index. Each ground-truth run
/// becomes one `rect` carrying `data-start` / `data-end` frame attributes.
pub fn render_svg(scores: &[f64], labels: Option<&[bool]>) -> String {
    let n = scores.len().max(1);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let x = |f: f64| MARGIN + plot_w * f / n as f64;
    let y = |s: f64| MARGIN + plot_h * (1.0 - s.clamp(0.0, 1.0));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    for (s, e) in labels.map(label_runs).unwrap_or_default() {
        let _ = writeln!(
            svg,
            r#"<rect class="gt" data-start="{s}" data-end="{e}" x="{:.2}" y="{MARGIN}" width="{:.2}" height="{plot_h}" fill="{GT_FILL}"/>"#,
            x(s as f64),
            x(e as f64) - x(s as f64),
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let points: Vec<String> = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| format!("{:.2},{:.2}", x(i as f64 + 0.5), y(s)))
        .collect();
    let _ = writeln!(
        svg,
        r#"<polyline class="score" fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#,
        points.join(" ")
    );
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="{}" font-size="12" font-family="sans-serif">frame 0 .. {}</text>"#,
        HEIGHT - 8.0,
        scores.len().saturating_sub(1)
    );
    svg.push_str("</svg>\n");
    svg
}
