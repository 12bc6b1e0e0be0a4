//! GJK distance between convex support-mapped shapes.

use crate::math::Vec3;

pub trait Support {
    /// Farthest point of the shape in direction `dir` (world frame).
    fn support(&self, dir: &Vec3) -> Vec3;
    /// Any interior point, used to seed the search.
    fn center(&self) -> Vec3;
}

const MAX_ITERATIONS: usize = 64;
const REL_TOL: f64 = 1e-12;

/// Euclidean distance between two convex shapes; `0.0` when they overlap.
pub fn distance(a: &dyn Support, b: &dyn Support) -> f64 {
    let mut dir = a.center() - b.center();
    if dir.norm_squared() < 1e-24 {
        dir = Vec3::x();
    }
    let mut simplex: Vec<Vec3> = vec![a.support(&-dir) - b.support(&dir)];
    let mut v = simplex[0];
    for _ in 0..MAX_ITERATIONS {
        let vv = v.norm_squared();
        if vv < 1e-24 {
            return 0.0;
        }
        let w = a.support(&-v) - b.support(&v);
        // No further progress toward the origin: v is the closest point.
        if vv - v.dot(&w) <= REL_TOL * vv || simplex.iter().any(|s| (s - w).norm_squared() < 1e-24) {
            return vv.sqrt();
        }
        simplex.push(w);
        let (closest, reduced) = closest_on_simplex(&simplex);
        if reduced.len() == 4 {
            return 0.0;
        }
        // Guard against cycling: the distance must strictly decrease.
        if closest.norm_squared() >= vv {
            return vv.sqrt();
        }
        simplex = reduced;
        v = closest;
    }
    v.norm()
}

/// Closest point to the origin on the simplex and the minimal sub-simplex supporting it.
fn closest_on_simplex(s: &[Vec3]) -> (Vec3, Vec<Vec3>) {
    match s.len() {
        1 => (s[0], s.to_vec()),
        2 => closest_on_segment(s[0], s[1]),
        3 => closest_on_triangle(s[0], s[1], s[2]),
        4 => closest_on_tetrahedron(s[0], s[1], s[2], s[3]),
        _ => unreachable!("simplex has at most four vertices"),
    }
}

fn closest_on_segment(a: Vec3, b: Vec3) -> (Vec3, Vec<Vec3>) {
    let ab = b - a;
    let denom = ab.norm_squared();
    if denom < 1e-30 {
        return (a, vec![a]);
    }
    let t = -a.dot(&ab) / denom;
    if t <= 0.0 {
        (a, vec![a])
    } else if t >= 1.0 {
        (b, vec![b])
    } else {
        (a + ab * t, vec![a, b])
    }
}

// Voronoi-region walk, after Ericson's closest point on triangle.
fn closest_on_triangle(a: Vec3, b: Vec3, c: Vec3) -> (Vec3, Vec<Vec3>) {
    let ab = b - a;
    let ac = c - a;
    let ap = -a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, vec![a]);
    }
    let bp = -b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, vec![b]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let t = d1 / (d1 - d3);
        return (a + ab * t, vec![a, b]);
    }
    let cp = -c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, vec![c]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let t = d2 / (d2 - d6);
        return (a + ac * t, vec![a, c]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * t, vec![b, c]);
    }
    let sum = va + vb + vc;
    if sum.abs() < 1e-300 {
        // Degenerate (collinear) triangle: fall back to its longest edge.
        let candidates = [closest_on_segment(a, b), closest_on_segment(a, c), closest_on_segment(b, c)];
        return candidates
            .into_iter()
            .min_by(|x, y| x.0.norm_squared().total_cmp(&y.0.norm_squared()))
            .expect("three candidates");
    }
    let denom = 1.0 / sum;
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, vec![a, b, c])
}

fn closest_on_tetrahedron(a: Vec3, b: Vec3, c: Vec3, d: Vec3) -> (Vec3, Vec<Vec3>) {
    let faces = [(a, b, c, d), (a, c, d, b), (a, d, b, c), (b, d, c, a)];
    let volume = (b - a).dot(&(c - a).cross(&(d - a)));
    let scale = [b - a, c - a, d - a].iter().map(|e| e.norm()).fold(0.0, f64::max);
    if volume.abs() <= 1e-9 * scale * scale * scale {
        // Flat simplex: it encloses nothing, so the answer lies on a face.
        return faces
            .into_iter()
            .map(|(p, q, r, _)| closest_on_triangle(p, q, r))
            .min_by(|x, y| x.0.norm_squared().total_cmp(&y.0.norm_squared()))
            .expect("four faces");
    }
    let mut best: Option<(Vec3, Vec<Vec3>)> = None;
    let mut outside_any = false;
    for (p, q, r, opposite) in faces {
        let n = (q - p).cross(&(r - p));
        let side_origin = -p.dot(&n);
        let side_opp = (opposite - p).dot(&n);
        // Origin strictly on the other side of this face than the fourth vertex.
        if side_origin * side_opp < 0.0 {
            outside_any = true;
            let cand = closest_on_triangle(p, q, r);
            if best.as_ref().is_none_or(|(bp, _)| cand.0.norm_squared() < bp.norm_squared()) {
                best = Some(cand);
            }
        }
    }
    if !outside_any {
        return (Vec3::zeros(), vec![a, b, c, d]);
    }
    best.expect("at least one face is visible")
}
