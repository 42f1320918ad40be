//! Minimal self-contained SVG line plots.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marker {
    Square,
    Circle,
    Triangle,
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Markers only, no connecting line.
    pub marker: Option<Marker>,
}

pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn bounds(plot: &Plot) -> Option<(f64, f64, f64, f64)> {
    let pts = plot.series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return None;
    }
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = 0.05 * (y1 - y0);
    Some((x0, x1, y0 - pad, y1 + pad))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the plot, or `None` when it has no finite points.
pub fn render(plot: &Plot) -> Option<String> {
    let (x0, x1, y0, y1) = bounds(plot)?;
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(&plot.title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let xv = x0 + t * (x1 - x0);
        let yv = y0 + t * (y1 - y0);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(xv),
            HEIGHT - MARGIN + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN - 6.0,
            sy(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(&plot.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(&plot.y_label)
    );
    for (k, series) in plot.series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let pts: Vec<(f64, f64)> = series
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| (sx(x), sy(y)))
            .collect();
        match series.marker {
            None => {
                let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
                    path.join(" ")
                );
            }
            Some(marker) => {
                for (x, y) in pts {
                    let _ = match marker {
                        Marker::Square => writeln!(
                            s,
                            r#"<rect x="{:.2}" y="{:.2}" width="4" height="4" fill="{colour}"/>"#,
                            x - 2.0,
                            y - 2.0
                        ),
                        Marker::Circle => writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2" fill="{colour}"/>"#),
                        Marker::Triangle => writeln!(
                            s,
                            r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{colour}"/>"#,
                            x,
                            y - 5.0,
                            x - 4.5,
                            y + 3.5,
                            x + 4.5,
                            y + 3.5
                        ),
                    };
                }
            }
        }
        let ly = MARGIN + 14.0 + 16.0 * k as f64;
        let lx = WIDTH - MARGIN - 150.0;
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{}" width="12" height="4" fill="{colour}"/><text x="{}" y="{}">{}</text>"#,
            ly - 4.0,
            lx + 18.0,
            ly,
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    Some(s)
}

fn tick(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 1e-2 && v.abs() < 1e4) {
        format!("{v:.3}")
    } else {
        format!("{v:.1e}")
    }
}
