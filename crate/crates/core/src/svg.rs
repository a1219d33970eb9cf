//! Minimal SVG output for loops, trajectories and disk pictures.

use std::fmt::Write as _;

use num_complex::Complex64;

#[derive(Debug, Clone)]
enum Item {
    Polyline { points: Vec<Complex64>, closed: bool, stroke: String, width: f64 },
    Circle { centre: Complex64, radius: f64, stroke: String, fill: String },
    Text { at: Complex64, text: String },
}

/// A figure in math coordinates (y up), fitted to a square canvas.
#[derive(Debug, Clone, Default)]
pub struct Figure {
    items: Vec<Item>,
    title: Option<String>,
    comment: Option<String>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Figure {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn title(mut self, title: &str) -> Self {
        self.title = Some(title.to_string());
        self
    }

    /// Free-form comment placed after the header (e.g. a timestamp).
    pub fn comment(mut self, text: &str) -> Self {
        self.comment = Some(text.to_string());
        self
    }

    pub fn polyline(&mut self, points: &[Complex64], stroke: &str, width: f64) -> &mut Self {
        self.items.push(Item::Polyline { points: points.to_vec(), closed: false, stroke: stroke.into(), width });
        self
    }

    pub fn polygon(&mut self, points: &[Complex64], stroke: &str, width: f64) -> &mut Self {
        self.items.push(Item::Polyline { points: points.to_vec(), closed: true, stroke: stroke.into(), width });
        self
    }

    pub fn circle(&mut self, centre: Complex64, radius: f64, stroke: &str, fill: &str) -> &mut Self {
        self.items.push(Item::Circle { centre, radius, stroke: stroke.into(), fill: fill.into() });
        self
    }

    pub fn text(&mut self, at: Complex64, text: &str) -> &mut Self {
        self.items.push(Item::Text { at, text: text.into() });
        self
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut add = |z: Complex64, r: f64| {
            if z.is_finite() {
                b = (b.0.min(z.re - r), b.1.min(z.im - r), b.2.max(z.re + r), b.3.max(z.im + r));
            }
        };
        for item in &self.items {
            match item {
                Item::Polyline { points, .. } => points.iter().for_each(|p| add(*p, 0.0)),
                Item::Circle { centre, radius, .. } => add(*centre, *radius),
                Item::Text { at, .. } => add(*at, 0.0),
            }
        }
        if !b.0.is_finite() {
            return (-1.0, -1.0, 1.0, 1.0);
        }
        b
    }

    pub fn render(&self, size: f64) -> String {
        let (x0, y0, x1, y1) = self.bounds();
        let span = (x1 - x0).max(y1 - y0).max(1e-12) * 1.05;
        let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
        let scale = size / span;
        let map = |z: Complex64| ((z.re - cx) * scale + 0.5 * size, (cy - z.im) * scale + 0.5 * size);
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0}" height="{size:.0}" viewBox="0 0 {size:.0} {size:.0}">"#
        );
        if let Some(c) = &self.comment {
            let _ = writeln!(out, "<!-- {} -->", escape(c).replace("--", "- -"));
        }
        if let Some(t) = &self.title {
            let _ = writeln!(out, "<title>{}</title>", escape(t));
        }
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        for item in &self.items {
            match item {
                Item::Polyline { points, closed, stroke, width } => {
                    let pts: Vec<String> = points
                        .iter()
                        .filter(|p| p.is_finite())
                        .map(|p| {
                            let (x, y) = map(*p);
                            format!("{x:.2},{y:.2}")
                        })
                        .collect();
                    let tag = if *closed { "polygon" } else { "polyline" };
                    let _ = writeln!(
                        out,
                        r#"<{tag} points="{}" fill="none" stroke="{}" stroke-width="{width:.2}"/>"#,
                        pts.join(" "),
                        escape(stroke)
                    );
                }
                Item::Circle { centre, radius, stroke, fill } => {
                    let (x, y) = map(*centre);
                    let _ = writeln!(
                        out,
                        r#"<circle cx="{x:.2}" cy="{y:.2}" r="{:.2}" fill="{}" stroke="{}"/>"#,
                        radius * scale,
                        escape(fill),
                        escape(stroke)
                    );
                }
                Item::Text { at, text } => {
                    let (x, y) = map(*at);
                    let _ = writeln!(out, r#"<text x="{x:.2}" y="{y:.2}" font-size="12">{}</text>"#, escape(text));
                }
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
    fn renders_deterministically() {
        let mut f = Figure::new().title("a < b");
        f.polygon(&[Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)], "black", 1.0);
        f.circle(Complex64::new(0.0, 0.0), 1.0, "gray", "none");
        let a = f.render(400.0);
        assert_eq!(a, f.render(400.0));
        assert!(a.contains("<polygon") && a.contains("a &lt; b") && a.ends_with("</svg>\n"));
    }
}
