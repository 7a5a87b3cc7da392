//! Minimal SVG line/scatter plots: axes, ticks, series and a legend.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 58.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Line,
    Dashed,
    Points,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub mark: Mark,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>, mark: Mark) -> Self {
        Self { label: label.into(), points, mark }
    }

    pub fn from_xy(label: impl Into<String>, x: &[f64], y: &[f64], mark: Mark) -> Self {
        Self::new(label, x.iter().copied().zip(y.iter().copied()).collect(), mark)
    }

    /// Step outline of a histogram given its edges and per-bin heights.
    pub fn histogram(label: impl Into<String>, edges: &[f64], heights: &[f64]) -> Self {
        let mut pts = Vec::with_capacity(2 * heights.len() + 2);
        pts.push((edges[0], 0.0));
        for (w, &h) in edges.windows(2).zip(heights) {
            pts.push((w[0], h));
            pts.push((w[1], h));
        }
        pts.push((edges[edges.len() - 1], 0.0));
        Self::new(label, pts, Mark::Line)
    }
}

#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_scale: Scale,
    pub y_scale: Scale,
    pub series: Vec<Series>,
}

impl Plot {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x_scale: Scale::Linear,
            y_scale: Scale::Linear,
            series: Vec::new(),
        }
    }

    pub fn log_log(mut self) -> Self {
        self.x_scale = Scale::Log;
        self.y_scale = Scale::Log;
        self
    }

    pub fn log_x(mut self) -> Self {
        self.x_scale = Scale::Log;
        self
    }

    pub fn log_y(mut self) -> Self {
        self.y_scale = Scale::Log;
        self
    }

    pub fn with(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    pub fn render(&self) -> String {
        let usable = |v: f64, s: Scale| v.is_finite() && (s == Scale::Linear || v > 0.0);
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().copied())
            .filter(|&(x, y)| usable(x, self.x_scale) && usable(y, self.y_scale))
            .collect();
        let (xr, yr) = if pts.is_empty() {
            ((0.0, 1.0), (0.0, 1.0))
        } else {
            (
                axis_range(pts.iter().map(|p| p.0), self.x_scale),
                axis_range(pts.iter().map(|p| p.1), self.y_scale),
            )
        };
        let ax = Axis::new(xr, self.x_scale, MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
        let ay = Axis::new(yr, self.y_scale, HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
        let (y0, y1) = (HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);
        let _ = writeln!(
            out,
            r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y0 - y1
        );
        for t in ax.ticks() {
            let px = ax.map(t);
            let _ = writeln!(out, r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{}" stroke="black"/>"#, y0 + 5.0);
            let _ = writeln!(
                out,
                r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#,
                y0 + 18.0,
                tick_label(t, self.x_scale)
            );
        }
        for t in ay.ticks() {
            let py = ay.map(t);
            let _ = writeln!(out, r#"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/>"#, x0 - 5.0);
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                x0 - 8.0,
                py + 4.0,
                tick_label(t, self.y_scale)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
            (y0 + y1) / 2.0,
            escape(&self.y_label)
        );

        let _ = writeln!(out, r#"<g clip-path="url(#plot-area)">"#);
        let _ = writeln!(
            out,
            r#"<clipPath id="plot-area"><rect x="{x0}" y="{y1}" width="{}" height="{}"/></clipPath>"#,
            x1 - x0,
            y0 - y1
        );
        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let mapped: Vec<(f64, f64)> = s
                .points
                .iter()
                .filter(|&&(x, y)| usable(x, self.x_scale) && usable(y, self.y_scale))
                .map(|&(x, y)| (ax.map(x), ay.map(y)))
                .collect();
            match s.mark {
                Mark::Points => {
                    for (px, py) in mapped {
                        let _ = writeln!(out, r#"<circle cx="{px:.2}" cy="{py:.2}" r="2.5" fill="{color}"/>"#);
                    }
                }
                Mark::Line | Mark::Dashed => {
                    if mapped.len() < 2 {
                        continue;
                    }
                    let d: Vec<String> = mapped.iter().map(|(px, py)| format!("{px:.2},{py:.2}")).collect();
                    let dash = if s.mark == Mark::Dashed { r#" stroke-dasharray="6 4""# } else { "" };
                    let _ = writeln!(
                        out,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.6"{dash}/>"#,
                        d.join(" ")
                    );
                }
            }
        }
        let _ = writeln!(out, "</g>");
        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let ly = MARGIN_TOP + 16.0 + 16.0 * k as f64;
            let lx = x1 - 190.0;
            match s.mark {
                Mark::Points => {
                    let _ = writeln!(out, r#"<circle cx="{}" cy="{}" r="3" fill="{color}"/>"#, lx + 10.0, ly - 4.0);
                }
                _ => {
                    let dash = if s.mark == Mark::Dashed { r#" stroke-dasharray="6 4""# } else { "" };
                    let _ = writeln!(
                        out,
                        r#"<line x1="{lx}" y1="{0}" x2="{1}" y2="{0}" stroke="{color}" stroke-width="2"{dash}/>"#,
                        ly - 4.0,
                        lx + 20.0
                    );
                }
            }
            let _ = writeln!(out, r#"<text x="{}" y="{ly}">{}</text>"#, lx + 26.0, escape(&s.label));
        }
        out.push_str("</svg>\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axis_range(values: impl Iterator<Item = f64>, scale: Scale) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    match scale {
        Scale::Log => {
            let (a, b) = (lo.log10().floor(), hi.log10().ceil());
            if b > a {
                (10f64.powf(a), 10f64.powf(b))
            } else {
                (10f64.powf(a - 1.0), 10f64.powf(b + 1.0))
            }
        }
        Scale::Linear => {
            if hi > lo {
                let pad = 0.04 * (hi - lo);
                (lo - pad, hi + pad)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        }
    }
}

struct Axis {
    lo: f64,
    hi: f64,
    scale: Scale,
    p0: f64,
    p1: f64,
}

impl Axis {
    fn new(range: (f64, f64), scale: Scale, p0: f64, p1: f64) -> Self {
        Self { lo: range.0, hi: range.1, scale, p0, p1 }
    }

    fn fraction(&self, v: f64) -> f64 {
        match self.scale {
            Scale::Linear => (v - self.lo) / (self.hi - self.lo),
            Scale::Log => (v.log10() - self.lo.log10()) / (self.hi.log10() - self.lo.log10()),
        }
    }

    fn map(&self, v: f64) -> f64 {
        self.p0 + self.fraction(v) * (self.p1 - self.p0)
    }

    fn ticks(&self) -> Vec<f64> {
        match self.scale {
            Scale::Log => {
                let (a, b) = (self.lo.log10().round() as i32, self.hi.log10().round() as i32);
                let stride = ((b - a) as f64 / 8.0).ceil().max(1.0) as i32;
                (a..=b).step_by(stride as usize).map(|e| 10f64.powi(e)).collect()
            }
            Scale::Linear => {
                let raw = (self.hi - self.lo) / 6.0;
                let mag = 10f64.powf(raw.log10().floor());
                let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
                let first = (self.lo / step).ceil() as i64;
                let last = (self.hi / step).floor() as i64;
                (first..=last).map(|k| k as f64 * step).collect()
            }
        }
    }
}

fn tick_label(v: f64, scale: Scale) -> String {
    match scale {
        Scale::Log => {
            let e = v.log10().round() as i32;
            if (-2..=3).contains(&e) {
                format!("{}", 10f64.powi(e))
            } else {
                format!("1e{e}")
            }
        }
        Scale::Linear => {
            if v == 0.0 {
                "0".into()
            } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
                format!("{v:.1e}")
            } else {
                let s = format!("{v:.4}");
                s.trim_end_matches('0').trim_end_matches('.').to_string()
            }
        }
    }
}
