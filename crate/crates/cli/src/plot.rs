//! Minimal SVG line plots.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const MAX_POINTS: usize = 4000;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series<'a> {
    pub label: &'a str,
    pub points: &'a [(f64, f64)],
}

fn bounds(series: &[Series]) -> Option<(f64, f64, f64, f64)> {
    let mut it = series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let &(x0, y0) = it.next()?;
    let (mut xl, mut xh, mut yl, mut yh) = (x0, x0, y0, y0);
    for &(x, y) in it {
        xl = xl.min(x);
        xh = xh.max(x);
        yl = yl.min(y);
        yh = yh.max(y);
    }
    if xh == xl {
        xh = xl + 1.0;
    }
    if yh == yl {
        yl -= 0.5;
        yh += 0.5;
    }
    Some((xl, xh, yl, yh))
}

/// A plot with one polyline per series, optional horizontal reference line
/// at `y = 0` when it is in range, and min/max tick labels.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN / 2.0, HEIGHT - MARGIN, MARGIN / 2.0);
    let _ = writeln!(
        svg,
        r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, HEIGHT - 15.0, escape(x_label));
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
    let Some((xl, xh, yl, yh)) = bounds(series) else {
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">no data</text>"#, WIDTH / 2.0, HEIGHT / 2.0);
        svg.push_str("</svg>\n");
        return svg;
    };
    let px = |x: f64| x0 + (x - xl) / (xh - xl) * (x1 - x0);
    let py = |y: f64| y0 - (y - yl) / (yh - yl) * (y0 - y1);
    for (x, anchor) in [(xl, "start"), (xh, "end")] {
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{}" text-anchor="{anchor}">{}</text>"#, px(x), y0 + 15.0, tick(x));
    }
    for y in [yl, yh] {
        let _ = writeln!(svg, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 4.0, py(y) + 4.0, tick(y));
    }
    if yl < 0.0 && yh > 0.0 {
        let _ = writeln!(
            svg,
            r##"<line x1="{x0}" y1="{:.2}" x2="{x1}" y2="{:.2}" stroke="#999" stroke-dasharray="4 3"/>"##,
            py(0.0),
            py(0.0)
        );
    }
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let stride = s.points.len().div_ceil(MAX_POINTS).max(1);
        let mut pts = String::new();
        for &(x, y) in s.points.iter().step_by(stride).filter(|(x, y)| x.is_finite() && y.is_finite()) {
            let _ = write!(pts, "{:.2},{:.2} ", px(x), py(y));
        }
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#, pts.trim_end());
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{color}" text-anchor="end">{}</text>"#,
            x1 - 6.0,
            y1 + 16.0 * (i + 1) as f64,
            escape(s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick(x: f64) -> String {
    if x != 0.0 && (x.abs() < 1e-2 || x.abs() >= 1e4) {
        format!("{x:.2e}")
    } else {
        format!("{x:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
