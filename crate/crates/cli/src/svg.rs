//! Byte-deterministic SVG plots: fixed coordinate precision, no timestamps,
//! elements emitted in input order.

use std::fmt::Write;

use safemarl::{Vec2, WorldConfig, AGENT_COUNT};

pub const AGENT_COLORS: [&str; AGENT_COUNT] = ["#1f77b4", "#d62728"];
const CORRECTION_COLOR: &str = "#ff7f0e";

fn f(x: f64) -> String {
    format!("{x:.2}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Minimal SVG document builder.
pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        let mut s = Self {
            width,
            height,
            body: String::new(),
        };
        s.rect(0.0, 0.0, width, height, "#ffffff", "none");
        s
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}" stroke="{stroke}"/>"#,
            f(x),
            f(y),
            f(w),
            f(h)
        );
    }

    pub fn line(&mut self, a: (f64, f64), b: (f64, f64), stroke: &str, width: f64) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}" stroke-width="{}"/>"#,
            f(a.0),
            f(a.1),
            f(b.0),
            f(b.1),
            f(width)
        );
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], stroke: &str, width: f64) {
        if points.is_empty() {
            return;
        }
        let pts: Vec<String> = points.iter().map(|(x, y)| format!("{},{}", f(*x), f(*y))).collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{}" stroke-linejoin="round"/>"#,
            pts.join(" "),
            f(width)
        );
    }

    pub fn circle(&mut self, c: (f64, f64), r: f64, fill: &str, stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{}" cy="{}" r="{}" fill="{fill}" stroke="{stroke}"/>"#,
            f(c.0),
            f(c.1),
            f(r)
        );
    }

    pub fn text(&mut self, at: (f64, f64), size: f64, anchor: &str, text: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="{}" text-anchor="{anchor}">{}</text>"#,
            f(at.0),
            f(at.1),
            f(size),
            escape(text)
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n{}</svg>\n",
            self.body,
            w = f(self.width),
            h = f(self.height)
        )
    }
}

/// Insert a `<metadata>` element holding `text` right after the root tag.
pub fn with_metadata(svg: &str, text: &str) -> String {
    match svg.find(">\n") {
        Some(k) => format!(
            "{}<metadata>{}</metadata>\n{}",
            &svg[..k + 2],
            escape(text),
            &svg[k + 2..]
        ),
        None => svg.to_string(),
    }
}

/// Affine map from a data rectangle to a pixel rectangle, y pointing up.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl Frame {
    pub fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let u = (x - self.x.0) / (self.x.1 - self.x.0);
        let v = (y - self.y.0) / (self.y.1 - self.y.0);
        (self.left + u * self.width, self.top + (1.0 - v) * self.height)
    }

    /// Data length along x in pixels.
    pub fn scale(&self, d: f64) -> f64 {
        d * self.width / (self.x.1 - self.x.0)
    }
}

/// Tick positions at 1, 2 or 5 times a power of ten, about `n` of them.
pub fn ticks(lo: f64, hi: f64, n: usize) -> (Vec<f64>, usize) {
    let span = (hi - lo).abs().max(1e-12);
    let raw = span / n.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    ((first..=last).map(|k| k as f64 * step).collect(), decimals)
}

/// A named curve for [`line_chart`].
pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// Line chart with axes, ticks and a legend.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h) = (640.0, 400.0);
    let frame_px = (70.0, 40.0, 540.0, 300.0);
    let all = || series.iter().flat_map(|s| s.points.iter());
    let bounds = |sel: fn(&(f64, f64)) -> f64| {
        let lo = all().map(sel).fold(f64::INFINITY, f64::min);
        let hi = all().map(sel).fold(f64::NEG_INFINITY, f64::max);
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) if hi > lo => (lo, hi),
            (true, true) => (lo - 0.5, hi + 0.5),
            _ => (0.0, 1.0),
        }
    };
    let (x0, x1) = bounds(|p| p.0);
    let (y0, y1) = bounds(|p| p.1);
    let pad = 0.05 * (y1 - y0);
    let frame = Frame {
        x: (x0, x1),
        y: (y0 - pad, y1 + pad),
        left: frame_px.0,
        top: frame_px.1,
        width: frame_px.2,
        height: frame_px.3,
    };

    let mut svg = Svg::new(w, h);
    svg.text((w / 2.0, 24.0), 16.0, "middle", title);
    svg.rect(frame.left, frame.top, frame.width, frame.height, "none", "#000000");
    let (xt, xd) = ticks(frame.x.0, frame.x.1, 6);
    for t in xt {
        let (px, py) = frame.map(t, frame.y.0);
        svg.line((px, py), (px, py + 5.0), "#000000", 1.0);
        svg.text((px, py + 18.0), 11.0, "middle", &format!("{t:.xd$}"));
    }
    let (yt, yd) = ticks(frame.y.0, frame.y.1, 5);
    for t in yt {
        let (px, py) = frame.map(frame.x.0, t);
        svg.line((px - 5.0, py), (px, py), "#000000", 1.0);
        svg.line((px, py), (px + frame.width, py), "#e0e0e0", 0.5);
        svg.text((px - 8.0, py + 4.0), 11.0, "end", &format!("{t:.yd$}"));
    }
    svg.text((frame.left + frame.width / 2.0, h - 12.0), 12.0, "middle", x_label);
    svg.text((14.0, frame.top - 10.0), 12.0, "start", y_label);
    for (k, s) in series.iter().enumerate() {
        let pts: Vec<_> = s.points.iter().map(|&(x, y)| frame.map(x, y)).collect();
        svg.polyline(&pts, s.color, 1.5);
        let ly = frame.top + 16.0 + 16.0 * k as f64;
        let lx = frame.left + frame.width - 130.0;
        svg.line((lx, ly - 4.0), (lx + 20.0, ly - 4.0), s.color, 2.0);
        svg.text((lx + 26.0, ly), 11.0, "start", s.label);
    }
    svg.finish()
}

/// What to draw in a trajectory plot.
pub struct TrajectoryView<'a> {
    pub title: &'a str,
    pub world: &'a WorldConfig,
    /// Safe distance drawn around each obstacle.
    pub safe_distance: f64,
    /// Positions per agent, one per logged instant.
    pub paths: [Vec<Vec2>; AGENT_COUNT],
    /// Instants at which the shield changed an agent's action.
    pub corrected: [Vec<usize>; AGENT_COUNT],
    /// Data rectangle; `None` shows the whole arena.
    pub window: Option<((f64, f64), (f64, f64))>,
}

/// Arena, obstacles with their unsafe discs, check-in points and paths.
pub fn trajectory_plot(view: &TrajectoryView) -> String {
    let side = 480.0;
    let l = view.world.wall_half_extent;
    let (x, y) = view.window.unwrap_or(((-l, l), (-l, l)));
    let frame = Frame {
        x,
        y,
        left: 40.0,
        top: 50.0,
        width: side,
        height: side,
    };
    let mut svg = Svg::new(side + 80.0, side + 90.0);
    svg.text(((side + 80.0) / 2.0, 28.0), 16.0, "middle", view.title);
    svg.rect(frame.left, frame.top, frame.width, frame.height, "#fafafa", "#000000");
    let (a, b) = (frame.map(-l, l), frame.map(l, -l));
    svg.rect(a.0, a.1, b.0 - a.0, b.1 - a.1, "none", "#444444");
    for (k, c) in view.world.checkin_points.iter().enumerate() {
        let p = frame.map(c.x, c.y);
        svg.circle(p, frame.scale(view.world.checkin_radius), "#d8f0d8", "#2ca02c");
        svg.text((p.0, p.1 + 4.0), 11.0, "middle", &(k + 1).to_string());
    }
    for o in &view.world.obstacles {
        let p = frame.map(o.position.x, o.position.y);
        svg.circle(p, frame.scale(o.radius + view.safe_distance), "#cccccc", "#777777");
        svg.circle(p, frame.scale(o.radius).max(2.0), "#333333", "none");
    }
    for (i, path) in view.paths.iter().enumerate() {
        let pts: Vec<_> = path.iter().map(|p| frame.map(p.x, p.y)).collect();
        svg.polyline(&pts, AGENT_COLORS[i], 1.5);
        for &k in &view.corrected[i] {
            if let Some(p) = pts.get(k) {
                svg.circle(*p, 2.0, CORRECTION_COLOR, "none");
            }
        }
        if let Some(start) = pts.first() {
            svg.circle(*start, 5.0, "none", AGENT_COLORS[i]);
        }
        if let Some(end) = pts.last() {
            svg.circle(*end, 4.0, AGENT_COLORS[i], "none");
        }
    }
    let ly = frame.top + frame.height + 24.0;
    for (i, name) in ["Patrolman I", "Patrolman II"].iter().enumerate() {
        let lx = frame.left + 150.0 * i as f64;
        svg.line((lx, ly - 4.0), (lx + 20.0, ly - 4.0), AGENT_COLORS[i], 2.0);
        svg.text((lx + 26.0, ly), 11.0, "start", name);
    }
    let lx = frame.left + 300.0;
    svg.circle((lx + 10.0, ly - 4.0), 2.5, CORRECTION_COLOR, "none");
    svg.text((lx + 26.0, ly), 11.0, "start", "shield correction");
    svg.finish()
}

/// Square window around `points`, padded by `pad`.
pub fn window_around(points: &[Vec2], pad: f64) -> Option<((f64, f64), (f64, f64))> {
    if points.is_empty() {
        return None;
    }
    let (mut lo, mut hi) = (points[0], points[0]);
    for p in points {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let c = (lo + hi) / 2.0;
    let half = ((hi - lo).max() / 2.0 + pad).max(pad);
    Some(((c.x - half, c.x + half), (c.y - half, c.y + half)))
}
