//! Static SVG rendering of skeletons, poles, and image grids.
//!
//! The output is deterministic: fixed viewport mapping, fixed coordinate
//! precision, and elements emitted in construction order.

use beltrami::{cx, Complex};

const MARGIN_FRACTION: f64 = 0.06;

/// An SVG document over a world-coordinate bounding box (y pointing up;
/// flipped into screen coordinates on output).
pub struct SvgDoc {
    min: Complex,
    scale: f64,
    width: f64,
    height: f64,
    body: String,
}

fn fmt(v: f64) -> String {
    // Fixed precision keeps files byte-stable and small; 10⁻⁴ of a pixel is
    // far below visual resolution.
    format!("{v:.4}")
}

impl SvgDoc {
    /// Viewport fitting the world box `[min, max]` with `size` pixels on the
    /// longer side plus a margin.
    pub fn new(min: Complex, max: Complex, size: f64) -> Self {
        let span = max - min;
        let margin = MARGIN_FRACTION * span.re.max(span.im);
        let min = min - cx(margin, margin);
        let span = span + 2.0 * cx(margin, margin);
        let scale = size / span.re.max(span.im);
        SvgDoc {
            min,
            scale,
            width: span.re * scale,
            height: span.im * scale,
            body: String::new(),
        }
    }

    fn map(&self, z: Complex) -> (f64, f64) {
        (
            (z.re - self.min.re) * self.scale,
            self.height - (z.im - self.min.im) * self.scale,
        )
    }

    /// Polyline through `points` as an unfilled path.
    pub fn path(&mut self, points: &[Complex], stroke: &str, width: f64, close: bool) {
        if points.len() < 2 {
            return;
        }
        let mut d = String::new();
        for (k, &p) in points.iter().enumerate() {
            let (x, y) = self.map(p);
            let op = if k == 0 { 'M' } else { 'L' };
            d.push_str(&format!("{op}{} {} ", fmt(x), fmt(y)));
        }
        if close {
            d.push('Z');
        }
        self.body.push_str(&format!(
            "<path d=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{}\"/>\n",
            d.trim_end(),
            fmt(width)
        ));
    }

    /// Filled circle of radius `r` (world units) at `center`.
    pub fn circle(&mut self, center: Complex, r: f64, fill: &str) {
        let (x, y) = self.map(center);
        self.body.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{fill}\"/>\n",
            fmt(x),
            fmt(y),
            fmt(r * self.scale)
        ));
    }

    pub fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
             <svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
             viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{body}</svg>\n",
            w = fmt(self.width),
            h = fmt(self.height),
            body = self.body
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documents_are_stable_and_balanced() {
        let build = || {
            let mut doc = SvgDoc::new(cx(-1.0, -1.0), cx(1.0, 1.0), 400.0);
            doc.path(&[cx(-1.0, 0.0), cx(1.0, 0.0)], "#333", 1.0, false);
            doc.circle(cx(0.0, 0.0), 0.05, "black");
            doc.finish()
        };
        let a = build();
        let b = build();
        assert_eq!(a, b);
        assert_eq!(a.matches("<svg").count(), a.matches("</svg>").count());
        assert!(a.starts_with("<?xml"));
    }

    #[test]
    fn y_axis_points_up() {
        let doc = SvgDoc::new(cx(0.0, 0.0), cx(1.0, 1.0), 100.0);
        let (_, y_low) = doc.map(cx(0.5, 0.0));
        let (_, y_high) = doc.map(cx(0.5, 1.0));
        assert!(y_high < y_low);
    }
}
