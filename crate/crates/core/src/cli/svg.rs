//! Minimal static SVG line plots with auto-scaled, labelled axes.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 52.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

pub struct Series<'a> {
    pub label: String,
    pub xs: &'a [f64],
    pub ys: &'a [f64],
}

/// Horizontal reference line drawn dashed across the plot.
pub struct Reference {
    pub label: String,
    pub y: f64,
}

pub struct LinePlot<'a> {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series<'a>>,
    pub references: Vec<Reference>,
}

/// Round tick spacing giving roughly `target` intervals over `span`.
fn tick_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm < 1.5 {
        1.0
    } else if norm < 3.0 {
        2.0
    } else if norm < 7.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn padded_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn fmt_tick(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let v = if v.abs() < 0.5 * step { 0.0 } else { v };
    format!("{v:.decimals$}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

impl LinePlot<'_> {
    pub fn render(&self) -> String {
        let mut x_lo = f64::INFINITY;
        let mut x_hi = f64::NEG_INFINITY;
        let mut y_lo = f64::INFINITY;
        let mut y_hi = f64::NEG_INFINITY;
        for s in &self.series {
            for (&x, &y) in s.xs.iter().zip(s.ys) {
                x_lo = x_lo.min(x);
                x_hi = x_hi.max(x);
                y_lo = y_lo.min(y);
                y_hi = y_hi.max(y);
            }
        }
        for r in &self.references {
            y_lo = y_lo.min(r.y);
            y_hi = y_hi.max(r.y);
        }
        if !(x_lo.is_finite() && x_hi > x_lo) {
            x_lo = 0.0;
            x_hi = 1.0;
        }
        let (y_lo, y_hi) = padded_range(y_lo, y_hi);

        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let sx = |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
        let sy = |y: f64| MARGIN_TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );

        let xs = tick_step(x_hi - x_lo, 8);
        let mut t = (x_lo / xs).ceil() * xs;
        while t <= x_hi + 1e-9 * xs {
            let px = sx(t);
            let _ = writeln!(
                out,
                r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#e0e0e0"/>"##,
                MARGIN_TOP,
                MARGIN_TOP + plot_h
            );
            let _ = writeln!(
                out,
                r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                MARGIN_TOP + plot_h + 16.0,
                fmt_tick(t, xs)
            );
            t += xs;
        }
        let ys = tick_step(y_hi - y_lo, 6);
        let mut t = (y_lo / ys).ceil() * ys;
        while t <= y_hi + 1e-9 * ys {
            let py = sy(t);
            let _ = writeln!(
                out,
                r##"<line x1="{:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#e0e0e0"/>"##,
                MARGIN_LEFT,
                MARGIN_LEFT + plot_w
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                MARGIN_LEFT - 6.0,
                py + 4.0,
                fmt_tick(t, ys)
            );
            t += ys;
        }
        let _ = writeln!(
            out,
            r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
            MARGIN_TOP + plot_h / 2.0,
            escape(&self.y_label)
        );

        for r in &self.references {
            let py = sy(r.y);
            let _ = writeln!(
                out,
                r##"<line x1="{:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#555555" stroke-dasharray="6 4"/>"##,
                MARGIN_LEFT,
                MARGIN_LEFT + plot_w
            );
            let _ = writeln!(
                out,
                r##"<text x="{:.2}" y="{:.2}" text-anchor="end" fill="#555555">{}</text>"##,
                MARGIN_LEFT + plot_w - 4.0,
                py - 4.0,
                escape(&r.label)
            );
        }

        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let mut points = String::new();
            for (&x, &y) in s.xs.iter().zip(s.ys) {
                let _ = write!(points, "{:.2},{:.2} ", sx(x), sy(y));
            }
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                points.trim_end()
            );
            if self.series.len() > 1 {
                let ly = MARGIN_TOP + 14.0 + 14.0 * i as f64;
                let lx = MARGIN_LEFT + 10.0;
                let _ = writeln!(
                    out,
                    r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#,
                    ly - 4.0,
                    lx + 18.0,
                    ly - 4.0
                );
                let _ = writeln!(
                    out,
                    r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#,
                    lx + 24.0,
                    escape(&s.label)
                );
            }
        }
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        assert_eq!(tick_step(0.772, 8), 0.1);
        assert_eq!(tick_step(0.4, 6), 0.05);
        assert_eq!(tick_step(170.0, 8), 20.0);
    }

    #[test]
    fn renders_series_and_references() {
        let xs = [0.0, 0.5, 1.0];
        let ys = [0.0, 0.2, -0.1];
        let plot = LinePlot {
            title: "D' <x>".into(),
            x_label: "x (m)".into(),
            y_label: "D'".into(),
            series: vec![Series {
                label: "D'".into(),
                xs: &xs,
                ys: &ys,
            }],
            references: vec![Reference {
                label: "D2".into(),
                y: 0.2,
            }],
        };
        let svg = plot.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.contains("D' &lt;x&gt;"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn flat_data_still_renders() {
        let xs = [0.0, 1.0];
        let ys = [0.0, 0.0];
        let plot = LinePlot {
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            series: vec![Series {
                label: "zero".into(),
                xs: &xs,
                ys: &ys,
            }],
            references: vec![],
        };
        assert!(!plot.render().contains("NaN"));
    }
}
