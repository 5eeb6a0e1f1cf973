//! Planar geometry primitives used by the scene and the ray caster.

use serde::{Deserialize, Serialize};

/// Planar point, serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn sub(self, other: Point2) -> Point2 {
        Point2::new(self.x - other.x, self.y - other.y)
    }

    fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn xy(self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn distance(self, other: Point3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

impl Rect {
    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    /// Closed containment test.
    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

/// Twice the signed area; positive for counter-clockwise rings.
pub fn signed_area2(ring: &[Point2]) -> f64 {
    let n = ring.len();
    (0..n).map(|i| ring[i].cross(ring[(i + 1) % n])).sum()
}

/// Even-odd crossing test. Points exactly on an edge may land on either side.
pub fn point_in_polygon(p: Point2, ring: &[Point2]) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Parameter `t` along `p0 -> p1` where it crosses segment `a -> b`, if the
/// two properly intersect or touch. Collinear overlaps return `None`; the
/// caller handles those through midpoint classification.
pub fn segment_crossing(p0: Point2, p1: Point2, a: Point2, b: Point2) -> Option<f64> {
    let r = p1.sub(p0);
    let s = b.sub(a);
    let denom = r.cross(s);
    if denom == 0.0 {
        return None;
    }
    let qp = a.sub(p0);
    let t = qp.cross(s) / denom;
    let u = qp.cross(r) / denom;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        Some(t)
    } else {
        None
    }
}

fn segments_intersect(p0: Point2, p1: Point2, a: Point2, b: Point2) -> bool {
    fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
        b.sub(a).cross(c.sub(a))
    }
    fn on_segment(a: Point2, b: Point2, p: Point2) -> bool {
        p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
    }
    let d1 = orient(a, b, p0);
    let d2 = orient(a, b, p1);
    let d3 = orient(p0, p1, a);
    let d4 = orient(p0, p1, b);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(a, b, p0))
        || (d2 == 0.0 && on_segment(a, b, p1))
        || (d3 == 0.0 && on_segment(p0, p1, a))
        || (d4 == 0.0 && on_segment(p0, p1, b))
}

/// True when no two non-adjacent edges of the ring touch.
pub fn is_simple_polygon(ring: &[Point2]) -> bool {
    let n = ring.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a0, a1) = (ring[i], ring[(i + 1) % n]);
        if a0 == a1 {
            return false;
        }
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (b0, b1) = (ring[j], ring[(j + 1) % n]);
            if segments_intersect(a0, a1, b0, b1) {
                return false;
            }
        }
    }
    true
}

/// Parameter intervals `[t0, t1]` of the segment `p0 -> p1` that lie inside
/// the polygon, in increasing order.
pub fn segment_inside_intervals(p0: Point2, p1: Point2, ring: &[Point2]) -> Vec<(f64, f64)> {
    let n = ring.len();
    let mut ts = vec![0.0, 1.0];
    ts.extend((0..n).filter_map(|i| segment_crossing(p0, p1, ring[i], ring[(i + 1) % n])));
    ts.sort_by(f64::total_cmp);
    ts.dedup();

    let mut out: Vec<(f64, f64)> = Vec::new();
    for w in ts.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        if t1 <= t0 {
            continue;
        }
        let tm = 0.5 * (t0 + t1);
        let mid = Point2::new(p0.x + tm * (p1.x - p0.x), p0.y + tm * (p1.y - p0.y));
        if point_in_polygon(mid, ring) {
            match out.last_mut() {
                Some(last) if last.1 == t0 => last.1 = t1,
                _ => out.push((t0, t1)),
            }
        }
    }
    out
}

/// Ellipse with semi-axes along a frame rotated by `rotation_deg` counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: Point2,
    pub semi_axes: [f64; 2],
    #[serde(default)]
    pub rotation_deg: f64,
}

impl Ellipse {
    pub fn contains(&self, p: Point2) -> bool {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let dx = p.x - self.center.x;
        let dy = p.y - self.center.y;
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.semi_axes[0]).powi(2) + (v / self.semi_axes[1]).powi(2) <= 1.0
    }
}

/// A region in which transmitters may not be placed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Region {
    Polygon { vertices: Vec<Point2> },
    Ellipse(Ellipse),
}

impl Region {
    pub fn contains(&self, p: Point2) -> bool {
        match self {
            Region::Polygon { vertices } => point_in_polygon(p, vertices),
            Region::Ellipse(e) => e.contains(p),
        }
    }
}
