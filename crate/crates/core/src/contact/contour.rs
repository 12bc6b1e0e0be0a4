use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

pub type Vec2 = Vector2<f64>;

/// Cross-section of an extruded peg, centered on its own origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Contour {
    Circle { radius: f64 },
    /// `width` along x, `depth` along y.
    Rectangle { width: f64, depth: f64 },
    /// Isosceles trapezoid: `bottom_width` at y = -depth/2, `top_width` at y = +depth/2.
    Trapezoid { bottom_width: f64, top_width: f64, depth: f64 },
}

impl Contour {
    pub fn validate(&self) -> Result<(), String> {
        let dims: &[f64] = match self {
            Contour::Circle { radius } => &[*radius],
            Contour::Rectangle { width, depth } => &[*width, *depth],
            Contour::Trapezoid { bottom_width, top_width, depth } => &[*bottom_width, *top_width, *depth],
        };
        if dims.iter().all(|d| d.is_finite() && *d > 0.0) {
            Ok(())
        } else {
            Err(format!("contour dimensions must be positive: {self:?}"))
        }
    }

    /// Counter-clockwise vertices for polygonal contours.
    fn vertices(&self) -> Option<[Vec2; 4]> {
        let (b, t, d) = match *self {
            Contour::Circle { .. } => return None,
            Contour::Rectangle { width, depth } => (width, width, depth),
            Contour::Trapezoid { bottom_width, top_width, depth } => (bottom_width, top_width, depth),
        };
        Some([
            Vec2::new(-b / 2.0, -d / 2.0),
            Vec2::new(b / 2.0, -d / 2.0),
            Vec2::new(t / 2.0, d / 2.0),
            Vec2::new(-t / 2.0, d / 2.0),
        ])
    }

    /// Signed distance (negative inside) and the outward unit normal of the nearest boundary.
    pub fn signed_distance(&self, p: &Vec2) -> (f64, Vec2) {
        match *self {
            Contour::Circle { radius } => {
                let n = p.norm();
                let dir = if n > 1e-15 { p / n } else { Vec2::x() };
                (n - radius, dir)
            }
            _ => {
                let v = self.vertices().expect("polygon");
                let mut inside = true;
                let mut best_in = (f64::INFINITY, Vec2::x());
                let mut best_out = (f64::INFINITY, Vec2::x());
                for i in 0..4 {
                    let a = v[i];
                    let b = v[(i + 1) % 4];
                    let e = b - a;
                    let outward = Vec2::new(e.y, -e.x).normalize();
                    let h = (p - a).dot(&outward);
                    if h > 0.0 {
                        inside = false;
                    }
                    if -h < best_in.0 {
                        best_in = (-h, outward);
                    }
                    let t = ((p - a).dot(&e) / e.norm_squared()).clamp(0.0, 1.0);
                    let c = a + e * t;
                    let d = (p - c).norm();
                    if d < best_out.0 {
                        best_out = (d, if d > 1e-15 { (p - c) / d } else { outward });
                    }
                }
                if inside { (-best_in.0, best_in.1) } else { best_out }
            }
        }
    }

    pub fn perimeter(&self) -> f64 {
        match *self {
            Contour::Circle { radius } => 2.0 * std::f64::consts::PI * radius,
            _ => {
                let v = self.vertices().expect("polygon");
                (0..4).map(|i| (v[(i + 1) % 4] - v[i]).norm()).sum()
            }
        }
    }

    /// `n` boundary points spaced evenly by arc length, polygon corners included.
    pub fn boundary_samples(&self, n: usize) -> Vec<Vec2> {
        match *self {
            Contour::Circle { radius } => (0..n)
                .map(|k| {
                    let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                    Vec2::new(radius * a.cos(), radius * a.sin())
                })
                .collect(),
            _ => {
                let v = self.vertices().expect("polygon");
                let total = self.perimeter();
                let mut out = Vec::with_capacity(n + 4);
                for i in 0..4 {
                    let a = v[i];
                    let b = v[(i + 1) % 4];
                    let k = ((b - a).norm() / total * n as f64).round().max(1.0) as usize;
                    for j in 0..k {
                        out.push(a + (b - a) * (j as f64 / k as f64));
                    }
                }
                out
            }
        }
    }

    /// Half-width of the contour's bounding box along x and y.
    pub fn half_extents(&self) -> Vec2 {
        match *self {
            Contour::Circle { radius } => Vec2::repeat(radius),
            Contour::Rectangle { width, depth } => Vec2::new(width / 2.0, depth / 2.0),
            Contour::Trapezoid { bottom_width, top_width, depth } => Vec2::new(bottom_width.max(top_width) / 2.0, depth / 2.0),
        }
    }
}
