//! Idealized box geometry used to derive movement path lengths and the
//! conflict relation.
//!
//! Coordinates are metres with x pointing east and y north. Traffic keeps
//! right, so northbound lanes sit east of the north-south centre line and
//! eastbound lanes south of the east-west one. Turning paths are quadratic
//! Bézier curves whose control point is where the entry and exit headings
//! meet.

use super::{Approach, TurnType};

/// Two paths closer than this anywhere are treated as conflicting.
pub const CLEARANCE: f64 = 2.0;

const CURVE_SEGMENTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    fn dist(self, o: Point) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }
}

/// Half-extents of the intersection box measured from the centre point.
#[derive(Debug, Clone, Copy)]
pub struct BoxGeometry {
    pub lane_width: f64,
    pub east: f64,
    pub west: f64,
    pub south: f64,
    pub north: f64,
}

impl BoxGeometry {
    /// Centre-line point where traffic travelling `dir` enters the box.
    fn entry_edge(&self, dir: Approach) -> Point {
        match dir {
            Approach::Northbound => Point::new(0.0, -self.south),
            Approach::Southbound => Point::new(0.0, self.north),
            Approach::Eastbound => Point::new(-self.west, 0.0),
            Approach::Westbound => Point::new(self.east, 0.0),
        }
    }

    fn exit_edge(&self, dir: Approach) -> Point {
        self.entry_edge(dir.opposite())
    }

    fn lateral(&self, dir: Approach, index: usize) -> Point {
        let (hx, hy) = dir.heading();
        // Right-hand normal of the heading.
        let off = (index as f64 + 0.5) * self.lane_width;
        Point::new(hy * off, -hx * off)
    }

    pub fn entry_point(&self, dir: Approach, index: usize) -> Point {
        let e = self.entry_edge(dir);
        let l = self.lateral(dir, index);
        Point::new(e.x + l.x, e.y + l.y)
    }

    pub fn exit_point(&self, dir: Approach, index: usize) -> Point {
        let e = self.exit_edge(dir);
        let l = self.lateral(dir, index);
        Point::new(e.x + l.x, e.y + l.y)
    }

    /// Polyline of a movement through the box.
    pub fn path(&self, from: Approach, entry_index: usize, to: Approach, exit_index: usize) -> Vec<Point> {
        let p0 = self.entry_point(from, entry_index);
        let p2 = self.exit_point(to, exit_index);
        match TurnType::between(from, to) {
            Some(TurnType::Straight) | None => vec![p0, p2],
            Some(_) => {
                let (hx, hy) = from.heading();
                let h = Point::new(hx, hy);
                let along = p2.sub(p0).dot(h);
                let p1 = Point::new(p0.x + along * h.x, p0.y + along * h.y);
                (0..=CURVE_SEGMENTS)
                    .map(|k| {
                        let t = k as f64 / CURVE_SEGMENTS as f64;
                        let u = 1.0 - t;
                        Point::new(
                            u * u * p0.x + 2.0 * u * t * p1.x + t * t * p2.x,
                            u * u * p0.y + 2.0 * u * t * p1.y + t * t * p2.y,
                        )
                    })
                    .collect()
            }
        }
    }
}

pub fn polyline_length(path: &[Point]) -> f64 {
    path.windows(2).map(|w| w[0].dist(w[1])).sum()
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(Point::new(a.x + t * ab.x, a.y + t * ab.y))
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = b.sub(a).cross(c.sub(a));
    let d2 = b.sub(a).cross(d.sub(a));
    let d3 = d.sub(c).cross(a.sub(c));
    let d4 = d.sub(c).cross(b.sub(c));
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

fn segment_distance(a: Point, b: Point, c: Point, d: Point) -> f64 {
    if segments_cross(a, b, c, d) {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

/// Smallest distance between two polylines.
pub fn min_distance(p: &[Point], q: &[Point]) -> f64 {
    let mut best = f64::INFINITY;
    for s in p.windows(2) {
        for t in q.windows(2) {
            best = best.min(segment_distance(s[0], s[1], t[0], t[1]));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> BoxGeometry {
        BoxGeometry {
            lane_width: 3.5,
            east: 11.0,
            west: 11.0,
            south: 14.5,
            north: 14.5,
        }
    }

    #[test]
    fn lanes_keep_right() {
        let g = geom();
        let nb = g.entry_point(Approach::Northbound, 0);
        assert!(nb.x > 0.0 && nb.y < 0.0);
        let eb = g.entry_point(Approach::Eastbound, 1);
        assert!(eb.y < 0.0 && eb.x < 0.0);
        let wb_exit = g.exit_point(Approach::Westbound, 0);
        assert!(wb_exit.x < 0.0 && wb_exit.y > 0.0);
    }

    #[test]
    fn perpendicular_straights_cross() {
        let g = geom();
        let eb = g.path(Approach::Eastbound, 1, Approach::Eastbound, 0);
        let nb = g.path(Approach::Northbound, 1, Approach::Northbound, 0);
        assert_eq!(min_distance(&eb, &nb), 0.0);
    }

    #[test]
    fn right_turn_stays_in_its_corner() {
        let g = geom();
        let r = g.path(Approach::Eastbound, 2, Approach::Southbound, 1);
        assert!(r.iter().all(|p| p.x <= 0.0 && p.y <= 0.0));
        let len = polyline_length(&r);
        assert!(len > 0.0 && len < 20.0);
    }
}
