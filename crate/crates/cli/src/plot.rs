//! Minimal static SVG scatter plots, byte-identical for identical input.

use std::fmt::Write as _;
use std::path::Path;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const TICKS: usize = 5;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub points: Vec<(f64, f64)>,
    /// Horizontal band `[lo, hi]` in data units.
    pub band: Option<(f64, f64)>,
    /// `y' = slope·x' + intercept` in axis units (log10 on log axes); drawn
    /// only with at least two points.
    pub line: Option<(f64, f64)>,
    pub annotation: Option<String>,
}

fn axis(v: f64, log: bool) -> Option<f64> {
    let t = if log {
        if v > 0.0 {
            v.log10()
        } else {
            return None;
        }
    } else {
        v
    };
    t.is_finite().then_some(t)
}

fn range(values: impl Iterator<Item = f64>, log: bool) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-12 * lo.abs().max(1.0) {
        let pad = if log { 1.0 } else { 0.5 * lo.abs().max(1.0) };
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn label(v: f64, log: bool) -> String {
    if log {
        format!("{:.2e}", 10f64.powf(v))
    } else if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e5) {
        format!("{v:.2e}")
    } else {
        format!("{v:.4}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Plot {
    pub fn render(&self) -> String {
        let pts: Vec<(f64, f64)> = self
            .points
            .iter()
            .filter_map(|&(x, y)| Some((axis(x, self.log_x)?, axis(y, self.log_y)?)))
            .collect();
        let (x0, x1) = range(pts.iter().map(|p| p.0), self.log_x);
        let line = self.line.filter(|_| pts.len() >= 2);
        let band = self
            .band
            .and_then(|(a, b)| Some((axis(a.min(b), self.log_y)?, axis(a.max(b), self.log_y)?)));
        let mut ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        if let Some((a, b)) = band {
            ys.extend([a, b]);
        }
        if let Some((s, c)) = line {
            ys.extend([s * x0 + c, s * x1 + c]);
        }
        let (y0, y1) = range(ys.into_iter(), self.log_y);
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        if let Some((a, b)) = band {
            let (top, bottom) = (sy(b.min(y1)), sy(a.max(y0)));
            let _ = writeln!(
                s,
                r##"<rect class="band" x="{LEFT:.2}" y="{top:.2}" width="{pw:.2}" height="{:.2}" fill="#9ecae1" fill-opacity="0.4"/>"##,
                (bottom - top).max(0.0)
            );
        }
        let _ = writeln!(
            s,
            r#"<g class="axes" stroke="black" stroke-width="1"><line x1="{LEFT:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/><line x1="{LEFT:.2}" y1="{TOP:.2}" x2="{LEFT:.2}" y2="{:.2}"/></g>"#,
            TOP + ph,
            LEFT + pw,
            TOP + ph,
            TOP + ph
        );
        for i in 0..TICKS {
            let f = i as f64 / (TICKS - 1) as f64;
            let xv = x0 + f * (x1 - x0);
            let yv = y0 + f * (y1 - y0);
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                sx(xv),
                TOP + ph + 16.0,
                label(xv, self.log_x)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 6.0,
                sy(yv) + 4.0,
                label(yv, self.log_y)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        if let Some((slope, c)) = line {
            let _ = writeln!(
                s,
                r#"<line class="fit" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="firebrick" stroke-width="1.5"/>"#,
                sx(x0),
                sy(slope * x0 + c),
                sx(x1),
                sy(slope * x1 + c)
            );
        }
        for (x, y) in &pts {
            let _ = writeln!(
                s,
                r#"<circle class="point" cx="{:.2}" cy="{:.2}" r="3.5" fill="black"/>"#,
                sx(*x),
                sy(*y)
            );
        }
        if let Some(a) = &self.annotation {
            let _ = writeln!(
                s,
                r#"<text class="annotation" x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT + pw - 4.0,
                TOP + 14.0,
                escape(a)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

pub fn emit_plot(plot: &Plot, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, plot.render())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_series_draws_axes_only() {
        let svg = Plot::default().render();
        assert!(svg.contains(r#"class="axes""#));
        assert!(!svg.contains("<circle"));
        assert!(!svg.contains(r#"class="fit""#));
    }

    #[test]
    fn single_point_has_marker_and_no_line() {
        let p = Plot {
            points: vec![(100.0, 0.1)],
            line: Some((0.0, 0.1)),
            ..Plot::default()
        };
        let svg = p.render();
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(!svg.contains(r#"class="fit""#));
    }

    #[test]
    fn log_axes_drop_non_positive_points() {
        let p = Plot {
            log_x: true,
            log_y: true,
            points: vec![(10.0, 1.0), (100.0, 0.1), (1000.0, 0.0)],
            ..Plot::default()
        };
        assert_eq!(p.render().matches("<circle").count(), 2);
    }

    #[test]
    fn rendering_is_deterministic() {
        let p = Plot {
            title: "a < b".into(),
            points: vec![(1.0, 2.0), (3.0, 4.5)],
            band: Some((1.5, 5.0)),
            line: Some((1.0, 0.5)),
            annotation: Some("fitted slope = 1.000000".into()),
            ..Plot::default()
        };
        assert_eq!(p.render(), p.clone().render());
        assert!(p.render().contains("a &lt; b"));
    }
}
