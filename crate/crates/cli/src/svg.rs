//! Deterministic log-log line plots.

use std::fmt::Write;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub struct Series<'a> {
    pub label: &'a str,
    /// `(x, y)` pairs, both positive.
    pub points: Vec<(f64, f64)>,
}

pub struct Marker {
    pub x: f64,
    pub y: f64,
    pub label: String,
}

pub struct Plot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub series: Vec<Series<'a>>,
    pub markers: Vec<Marker>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Decade-aligned `(lo, hi)` exponents covering all values.
fn decades(values: impl Iterator<Item = f64>) -> (i32, i32) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite() && *v > 0.0) {
        lo = lo.min(v.log10());
        hi = hi.max(v.log10());
    }
    if !lo.is_finite() {
        return (0, 1);
    }
    let lo = lo.floor() as i32;
    let hi = (hi.ceil() as i32).max(lo + 1);
    (lo, hi)
}

fn decade_label(k: i32) -> String {
    if (-4..=6).contains(&k) {
        format!("{}", 10f64.powi(k))
    } else {
        format!("1e{k}")
    }
}

struct Axes {
    x: (i32, i32),
    y: (i32, i32),
}

impl Axes {
    fn px(&self, x: f64) -> f64 {
        let span = f64::from(self.x.1 - self.x.0);
        LEFT + (x.log10() - f64::from(self.x.0)) / span * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        let span = f64::from(self.y.1 - self.y.0);
        HEIGHT - BOTTOM - (y.log10() - f64::from(self.y.0)) / span * (HEIGHT - TOP - BOTTOM)
    }
}

pub fn render(plot: &Plot) -> String {
    let all = || plot.series.iter().flat_map(|s| s.points.iter());
    let axes = Axes {
        x: decades(all().map(|p| p.0)),
        y: decades(all().map(|p| p.1)),
    };
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (TOP, HEIGHT - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (x0 + x1) / 2.0,
        escape(plot.title)
    );

    // Grid: labelled decades, faint 2x and 5x lines.
    for k in axes.x.0..=axes.x.1 {
        for (m, stroke) in [(1.0, "#bbbbbb"), (2.0, "#eeeeee"), (5.0, "#eeeeee")] {
            let v = m * 10f64.powi(k);
            if k == axes.x.1 && m > 1.0 {
                continue;
            }
            let x = axes.px(v);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{y1:.2}" stroke="{stroke}"/>"#
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            axes.px(10f64.powi(k)),
            y1 + 18.0,
            decade_label(k)
        );
    }
    for k in axes.y.0..=axes.y.1 {
        for (m, stroke) in [(1.0, "#bbbbbb"), (2.0, "#eeeeee"), (5.0, "#eeeeee")] {
            let v = m * 10f64.powi(k);
            if k == axes.y.1 && m > 1.0 {
                continue;
            }
            let y = axes.py(v);
            let _ = writeln!(
                s,
                r#"<line x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="{stroke}"/>"#
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            axes.py(10f64.powi(k)) + 4.0,
            decade_label(k)
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y1 - y0
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 18.0,
        escape(plot.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(plot.y_label)
    );

    for (i, series) in plot.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = series
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", axes.px(x), axes.py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for &(x, y) in &series.points {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                axes.px(x),
                axes.py(y)
            );
        }
        let ly = y0 + 16.0 + 20.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            x1 + 14.0,
            x1 + 38.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            x1 + 44.0,
            ly + 4.0,
            escape(series.label)
        );
    }

    for m in &plot.markers {
        let (cx, cy) = (axes.px(m.x), axes.py(m.y));
        let _ = writeln!(
            s,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="7" fill="none" stroke="black" stroke-width="1.5"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            cx + 10.0,
            cy - 8.0,
            escape(&m.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decades_cover_values() {
        assert_eq!(decades([3.0, 250.0].into_iter()), (0, 3));
        assert_eq!(decades([0.2, 0.9].into_iter()), (-1, 0));
        assert_eq!(decades([10.0].into_iter()), (1, 2));
    }

    #[test]
    fn points_land_inside_the_frame() {
        let axes = Axes { x: (0, 3), y: (-1, 1) };
        assert!((axes.px(1.0) - LEFT).abs() < 1e-9);
        assert!((axes.px(1000.0) - (WIDTH - RIGHT)).abs() < 1e-9);
        assert!((axes.py(0.1) - (HEIGHT - BOTTOM)).abs() < 1e-9);
        assert!((axes.py(10.0) - TOP).abs() < 1e-9);
    }

    #[test]
    fn labels_are_escaped() {
        let plot = Plot {
            title: "a<b & c",
            x_label: "x",
            y_label: "y",
            series: vec![Series {
                label: "s\"1",
                points: vec![(1.0, 1.0), (10.0, 0.5)],
            }],
            markers: Vec::new(),
        };
        let svg = render(&plot);
        assert!(svg.contains("a&lt;b &amp; c"));
        assert!(svg.contains("s&quot;1"));
        assert_eq!(svg, render(&plot));
    }
}
