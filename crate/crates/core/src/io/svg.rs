use std::fmt::Write;

use nalgebra::Point2;

/// One set of points drawn as small crosses sharing a single `<path>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub color: String,
    pub points: Vec<Point2<f64>>,
}

/// A floor-plan scatter plot: walls, access points and any number of point
/// series.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlotSpec {
    pub title: String,
    pub walls: Vec<(Point2<f64>, Point2<f64>)>,
    pub aps: Vec<Point2<f64>>,
    pub series: Vec<Series>,
    pub width_px: f64,
}

const MARGIN: f64 = 30.0;

impl PlotSpec {
    fn bounds(&self) -> (Point2<f64>, Point2<f64>) {
        let pts = self
            .walls
            .iter()
            .flat_map(|(a, b)| [*a, *b])
            .chain(self.aps.iter().copied())
            .chain(self.series.iter().flat_map(|s| s.points.iter().copied()))
            .filter(|p| p.x.is_finite() && p.y.is_finite());
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in pts {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        if !lo.x.is_finite() {
            return (Point2::origin(), Point2::new(1.0, 1.0));
        }
        if hi.x - lo.x < 1e-9 {
            hi.x = lo.x + 1.0;
        }
        if hi.y - lo.y < 1e-9 {
            hi.y = lo.y + 1.0;
        }
        (lo, hi)
    }

    pub fn render(&self) -> String {
        let width = if self.width_px > 0.0 { self.width_px } else { 720.0 };
        let (lo, hi) = self.bounds();
        let scale = (width - 2.0 * MARGIN) / (hi.x - lo.x);
        let height = (hi.y - lo.y) * scale + 2.0 * MARGIN + 16.0 * self.series.len() as f64;
        let tx = |p: &Point2<f64>| (MARGIN + (p.x - lo.x) * scale, MARGIN + (hi.y - p.y) * scale);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        if !self.title.is_empty() {
            let _ = writeln!(s, r#"<text x="{MARGIN}" y="18" font-size="14">{}</text>"#, escape(&self.title));
        }
        for (a, b) in &self.walls {
            let (x1, y1) = tx(a);
            let (x2, y2) = tx(b);
            let _ = writeln!(
                s,
                r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="black" stroke-width="2"/>"#
            );
        }
        for series in &self.series {
            let mut d = String::new();
            for p in series.points.iter().filter(|p| p.x.is_finite() && p.y.is_finite()) {
                let (x, y) = tx(p);
                let _ = write!(d, "M{:.2} {:.2}h3M{:.2} {:.2}v3", x - 1.5, y, x, y - 1.5);
            }
            let _ = writeln!(
                s,
                r#"<path data-series="{}" d="{d}" stroke="{}" stroke-width="1" fill="none"/>"#,
                escape(&series.name),
                escape(&series.color)
            );
        }
        for ap in &self.aps {
            let (x, y) = tx(ap);
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="red"/>"#);
        }
        let base = (hi.y - lo.y) * scale + 2.0 * MARGIN;
        for (i, series) in self.series.iter().enumerate() {
            let y = base + 16.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<text x="{MARGIN}" y="{y:.0}" font-size="12" fill="{}">{}</text>"#,
                escape(&series.color),
                escape(&series.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
