//! Minimal vector layer format (a GeoJSON subset with a `crs` member) and
//! the planar geometry the synthetic tools need.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub const WGS84: &str = "EPSG:4326";
pub const WEB_MERCATOR: &str = "EPSG:3857";
const EARTH_RADIUS_M: f64 = 6_378_137.0;

pub type Point = [f64; 2];
pub type Ring = Vec<Point>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "coordinates")]
pub enum Geometry {
    Point(Point),
    /// Outer ring first, then holes. Rings may omit the closing vertex.
    Polygon(Vec<Ring>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    #[serde(default)]
    pub properties: BTreeMap<String, serde_json::Value>,
    pub geometry: Geometry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    #[serde(rename = "type", default = "collection_tag")]
    pub kind: String,
    pub crs: String,
    pub features: Vec<Feature>,
}

fn collection_tag() -> String {
    "FeatureCollection".into()
}

impl Layer {
    pub fn new(crs: impl Into<String>, features: Vec<Feature>) -> Self {
        Layer { kind: collection_tag(), crs: crs.into(), features }
    }

    pub fn is_geographic(&self) -> bool {
        self.crs == WGS84
    }

    pub fn bounds(&self) -> Option<[f64; 4]> {
        let mut b: Option<[f64; 4]> = None;
        for f in &self.features {
            for p in f.geometry.vertices() {
                b = Some(match b {
                    None => [p[0], p[1], p[0], p[1]],
                    Some([x0, y0, x1, y1]) => [x0.min(p[0]), y0.min(p[1]), x1.max(p[0]), y1.max(p[1])],
                });
            }
        }
        b
    }
}

impl Geometry {
    pub fn vertices(&self) -> Box<dyn Iterator<Item = Point> + '_> {
        match self {
            Geometry::Point(p) => Box::new(std::iter::once(*p)),
            Geometry::Polygon(rings) => Box::new(rings.iter().flatten().copied()),
        }
    }

    /// Representative point: the point itself or the outer-ring centroid.
    pub fn centroid(&self) -> Point {
        match self {
            Geometry::Point(p) => *p,
            Geometry::Polygon(rings) => rings.first().map(|r| ring_centroid(r)).unwrap_or([0.0, 0.0]),
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            Geometry::Point(_) => 0.0,
            Geometry::Polygon(rings) => {
                let mut iter = rings.iter();
                let outer = iter.next().map(|r| ring_area(r).abs()).unwrap_or(0.0);
                outer - iter.map(|r| ring_area(r).abs()).sum::<f64>()
            }
        }
    }

    pub fn is_valid(&self) -> bool {
        match self {
            Geometry::Point(p) => p[0].is_finite() && p[1].is_finite(),
            Geometry::Polygon(rings) => {
                !rings.is_empty() && rings.iter().all(|r| open_ring(r).len() >= 3 && !ring_self_intersects(r))
            }
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        match self {
            Geometry::Point(_) => false,
            Geometry::Polygon(rings) => {
                let mut inside = false;
                for ring in rings {
                    if ring_contains(ring, p) {
                        inside = !inside;
                    }
                }
                inside
            }
        }
    }

    pub fn map_points(&self, f: impl Fn(Point) -> Point) -> Geometry {
        match self {
            Geometry::Point(p) => Geometry::Point(f(*p)),
            Geometry::Polygon(rings) => {
                Geometry::Polygon(rings.iter().map(|r| r.iter().map(|p| f(*p)).collect()).collect())
            }
        }
    }
}

/// Ring without the duplicated closing vertex.
pub fn open_ring(ring: &[Point]) -> &[Point] {
    if ring.len() > 1 && ring.first() == ring.last() {
        &ring[..ring.len() - 1]
    } else {
        ring
    }
}

/// Signed shoelace area.
pub fn ring_area(ring: &[Point]) -> f64 {
    let r = open_ring(ring);
    let n = r.len();
    if n < 3 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        let [x0, y0] = r[i];
        let [x1, y1] = r[(i + 1) % n];
        sum += x0 * y1 - x1 * y0;
    }
    sum / 2.0
}

pub fn ring_centroid(ring: &[Point]) -> Point {
    let r = open_ring(ring);
    let a = ring_area(r);
    if a.abs() < 1e-12 {
        let n = r.len().max(1) as f64;
        let (sx, sy) = r.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
        return [sx / n, sy / n];
    }
    let n = r.len();
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let [x0, y0] = r[i];
        let [x1, y1] = r[(i + 1) % n];
        let cross = x0 * y1 - x1 * y0;
        cx += (x0 + x1) * cross;
        cy += (y0 + y1) * cross;
    }
    [cx / (6.0 * a), cy / (6.0 * a)]
}

pub fn ring_contains(ring: &[Point], p: Point) -> bool {
    let r = open_ring(ring);
    let n = r.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (xi, yi) = (r[i][0], r[i][1]);
        let (xj, yj) = (r[j][0], r[j][1]);
        if (yi > p[1]) != (yj > p[1]) && p[0] < (xj - xi) * (p[1] - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn orientation(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_cross(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = orientation(q1, q2, p1);
    let d2 = orientation(q1, q2, p2);
    let d3 = orientation(p1, p2, q1);
    let d4 = orientation(p1, p2, q2);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// True if two non-adjacent edges of the ring properly cross.
pub fn ring_self_intersects(ring: &[Point]) -> bool {
    let r = open_ring(ring);
    let n = r.len();
    if n < 4 {
        return false;
    }
    for i in 0..n {
        let (a1, a2) = (r[i], r[(i + 1) % n]);
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(a1, a2, r[j], r[(j + 1) % n]) {
                return true;
            }
        }
    }
    false
}

/// Andrew's monotone chain; counter-clockwise, open.
pub fn convex_hull(points: &[Point]) -> Ring {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && orientation(lower[lower.len() - 2], lower[lower.len() - 1], *p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && orientation(upper[upper.len() - 2], upper[upper.len() - 1], *p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Regular polygon approximating a disc.
pub fn circle(center: Point, radius: f64, segments: usize) -> Ring {
    let n = segments.max(3);
    (0..n)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / n as f64;
            [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
        })
        .collect()
}

/// Pushes every vertex of a polygon `distance` further from its centroid.
pub fn grow_polygon(rings: &[Ring], distance: f64) -> Vec<Ring> {
    let c = rings.first().map(|r| ring_centroid(r)).unwrap_or([0.0, 0.0]);
    rings
        .iter()
        .map(|r| {
            r.iter()
                .map(|p| {
                    let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
                    let len = (dx * dx + dy * dy).sqrt();
                    if len == 0.0 {
                        *p
                    } else {
                        [p[0] + distance * dx / len, p[1] + distance * dy / len]
                    }
                })
                .collect()
        })
        .collect()
}

pub fn to_web_mercator(p: Point) -> Point {
    let lon = p[0].to_radians();
    let lat = p[1].clamp(-85.051_128_78, 85.051_128_78).to_radians();
    [EARTH_RADIUS_M * lon, EARTH_RADIUS_M * (PI / 4.0 + lat / 2.0).tan().ln()]
}

pub fn to_wgs84(p: Point) -> Point {
    let lon = p[0] / EARTH_RADIUS_M;
    let lat = 2.0 * (p[1] / EARTH_RADIUS_M).exp().atan() - PI / 2.0;
    [lon.to_degrees(), lat.to_degrees()]
}
