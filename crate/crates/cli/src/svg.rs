//! Minimal SVG plots: axes with ticks, histogram bars, heatmaps and
//! overlaid curves or markers.

use std::fmt::Write;

use tpxspec::{Histogram1D, Histogram2D};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 460.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 96.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;

pub const BLUE: &str = "#2b6cb0";
pub const RED: &str = "#c53030";
pub const GREEN: &str = "#2f855a";
pub const GREY: &str = "#4a5568";

enum Layer {
    Bars {
        edges: Vec<f64>,
        heights: Vec<f64>,
        color: &'static str,
    },
    Heat {
        x_edges: Vec<f64>,
        y_edges: Vec<f64>,
        values: Vec<f64>,
    },
    Line {
        points: Vec<(f64, f64)>,
        color: &'static str,
        dashed: bool,
    },
    Markers {
        points: Vec<(f64, f64)>,
        color: &'static str,
    },
}

pub struct Plot {
    title: String,
    x_label: String,
    y_label: String,
    x_range: Option<(f64, f64)>,
    y_range: Option<(f64, f64)>,
    layers: Vec<Layer>,
    notes: Vec<String>,
}

/// Tick positions at 1, 2 or 5 times a power of ten.
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return vec![lo];
    }
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn label(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 {
        0
    } else {
        (-step.log10()).ceil() as usize
    };
    let s = format!("{v:.decimals$}");
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Dark blue → teal → yellow.
fn heat_color(t: f64) -> String {
    const STOPS: [(f64, [f64; 3]); 4] = [
        (0.0, [255.0, 255.0, 255.0]),
        (0.15, [49.0, 54.0, 149.0]),
        (0.6, [33.0, 145.0, 140.0]),
        (1.0, [253.0, 231.0, 37.0]),
    ];
    let t = t.clamp(0.0, 1.0);
    let k = STOPS
        .windows(2)
        .position(|w| t <= w[1].0)
        .unwrap_or(STOPS.len() - 2);
    let (a, b) = (STOPS[k], STOPS[k + 1]);
    let f = (t - a.0) / (b.0 - a.0);
    let c: Vec<u8> = (0..3)
        .map(|i| (a.1[i] + f * (b.1[i] - a.1[i])).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

impl Plot {
    pub fn new(
        title: impl Into<String>,
        x_label: impl Into<String>,
        y_label: impl Into<String>,
    ) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x_range: None,
            y_range: None,
            layers: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn x_range(mut self, lo: f64, hi: f64) -> Self {
        self.x_range = Some((lo, hi));
        self
    }

    pub fn y_range(mut self, lo: f64, hi: f64) -> Self {
        self.y_range = Some((lo, hi));
        self
    }

    pub fn histogram(mut self, hist: &Histogram1D, color: &'static str) -> Self {
        let edges = (0..=hist.axis.n_bins).map(|i| hist.axis.edge(i)).collect();
        let heights = hist.counts.iter().map(|&c| c as f64).collect();
        self.layers.push(Layer::Bars {
            edges,
            heights,
            color,
        });
        self
    }

    pub fn heatmap(mut self, hist: &Histogram2D) -> Self {
        let x_edges = (0..=hist.x.n_bins).map(|i| hist.x.edge(i)).collect();
        let y_edges = (0..=hist.y.n_bins).map(|i| hist.y.edge(i)).collect();
        let values = hist.counts.iter().map(|&c| c as f64).collect();
        self.layers.push(Layer::Heat {
            x_edges,
            y_edges,
            values,
        });
        self.x_range = Some((hist.x.lo, hist.x.hi));
        self.y_range = Some((hist.y.lo, hist.y.hi));
        self
    }

    pub fn line(mut self, points: Vec<(f64, f64)>, color: &'static str) -> Self {
        self.layers.push(Layer::Line {
            points,
            color,
            dashed: false,
        });
        self
    }

    pub fn dashed(mut self, points: Vec<(f64, f64)>, color: &'static str) -> Self {
        self.layers.push(Layer::Line {
            points,
            color,
            dashed: true,
        });
        self
    }

    pub fn markers(mut self, points: Vec<(f64, f64)>, color: &'static str) -> Self {
        self.layers.push(Layer::Markers { points, color });
        self
    }

    /// A line of text in the top-right corner of the plot area.
    pub fn note(mut self, text: impl Into<String>) -> Self {
        self.notes.push(text.into());
        self
    }

    fn data_bounds(&self) -> ((f64, f64), (f64, f64)) {
        let (mut x0, mut x1, mut y0, mut y1) =
            (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
        let mut take = |x: f64, y: f64| {
            if x.is_finite() && y.is_finite() {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        };
        for layer in &self.layers {
            match layer {
                Layer::Bars { edges, heights, .. } => {
                    for (i, &h) in heights.iter().enumerate() {
                        take(edges[i], h);
                        take(edges[i + 1], h);
                    }
                }
                Layer::Heat {
                    x_edges, y_edges, ..
                } => {
                    take(x_edges[0], y_edges[0]);
                    take(x_edges[x_edges.len() - 1], y_edges[y_edges.len() - 1]);
                }
                Layer::Line { points, .. } | Layer::Markers { points, .. } => {
                    for &(x, y) in points {
                        take(x, y);
                    }
                }
            }
        }
        let fix = |lo: f64, hi: f64| {
            if !lo.is_finite() || !hi.is_finite() {
                (0.0, 1.0)
            } else if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        };
        let (y0, y1) = fix(y0, y1);
        (fix(x0, x1), (y0, y1 + 0.05 * (y1 - y0)))
    }

    pub fn render(&self) -> String {
        let (auto_x, auto_y) = self.data_bounds();
        let (x0, x1) = self.x_range.unwrap_or(auto_x);
        let (y0, y1) = self.y_range.unwrap_or(auto_y);
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;
        let clip_x = |x: f64| x.clamp(x0, x1);
        let clip_y = |y: f64| y.clamp(y0, y1);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(
            s,
            r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        );
        let _ = writeln!(
            s,
            r#"<defs><clipPath id="area"><rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}"/></clipPath></defs>"#
        );
        let _ = writeln!(s, r#"<g clip-path="url(#area)">"#);
        for layer in &self.layers {
            match layer {
                Layer::Bars {
                    edges,
                    heights,
                    color,
                } => {
                    for (i, &h) in heights.iter().enumerate() {
                        if h <= y0 {
                            continue;
                        }
                        let (a, b) = (sx(clip_x(edges[i])), sx(clip_x(edges[i + 1])));
                        let top = sy(clip_y(h));
                        let _ = writeln!(
                            s,
                            r#"<rect x="{a:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.75"/>"#,
                            (b - a).max(0.0),
                            (sy(y0) - top).max(0.0)
                        );
                    }
                }
                Layer::Heat {
                    x_edges,
                    y_edges,
                    values,
                } => {
                    let ny = y_edges.len() - 1;
                    let peak = values.iter().cloned().fold(0.0, f64::max);
                    for (k, &v) in values.iter().enumerate() {
                        if v <= 0.0 || peak <= 0.0 {
                            continue;
                        }
                        let (i, j) = (k / ny, k % ny);
                        let (a, b) = (sx(x_edges[i]), sx(x_edges[i + 1]));
                        let (top, bottom) = (sy(y_edges[j + 1]), sy(y_edges[j]));
                        let _ = writeln!(
                            s,
                            r#"<rect x="{a:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                            b - a,
                            bottom - top,
                            heat_color(v / peak)
                        );
                    }
                }
                Layer::Line {
                    points,
                    color,
                    dashed,
                } => {
                    let finite: Vec<String> = points
                        .iter()
                        .filter(|(x, y)| x.is_finite() && y.is_finite())
                        .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                        .collect();
                    if finite.len() > 1 {
                        let dash = if *dashed {
                            r#" stroke-dasharray="6 4""#
                        } else {
                            ""
                        };
                        let _ = writeln!(
                            s,
                            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"{dash}/>"#,
                            finite.join(" ")
                        );
                    }
                }
                Layer::Markers { points, color } => {
                    for &(x, y) in points
                        .iter()
                        .filter(|(x, y)| x.is_finite() && y.is_finite())
                    {
                        let _ = writeln!(
                            s,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
                            sx(x),
                            sy(y)
                        );
                    }
                }
            }
        }
        let _ = writeln!(s, "</g>");

        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        let xt = ticks(x0, x1, 8);
        let x_step = if xt.len() > 1 { xt[1] - xt[0] } else { 1.0 };
        for &t in &xt {
            let x = sx(t);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
                TOP + ph,
                TOP + ph + 5.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                TOP + ph + 19.0,
                label(t, x_step)
            );
        }
        let yt = ticks(y0, y1, 6);
        let y_step = if yt.len() > 1 { yt[1] - yt[0] } else { 1.0 };
        for &t in &yt {
            let y = sy(t);
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#,
                LEFT - 5.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 8.0,
                y + 4.0,
                label(t, y_step)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 14.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        for (k, note) in self.notes.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end" fill="{GREY}">{}</text>"#,
                LEFT + pw - 8.0,
                TOP + 18.0 + 16.0 * k as f64,
                escape(note)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}
