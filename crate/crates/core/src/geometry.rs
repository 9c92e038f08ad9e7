//! Planar and extruded-prism geometry used by the contact model.
//!
//! All lengths are in centimetres. Polygons are convex and counterclockwise;
//! non-convex footprints are represented as unions of convex pieces.

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use thiserror::Error;

/// Minimum pairwise vertex separation accepted by [`ConvexPolygon::new`].
pub const MIN_VERTEX_SEPARATION: f64 = 1e-6;

const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("vertices {0} and {1} coincide")]
    RepeatedVertex(usize, usize),
    #[error("polygon is not counterclockwise (signed area {0})")]
    Clockwise(f64),
    #[error("polygon is not strictly convex at vertex {0}")]
    NotConvex(usize),
    #[error("non-finite coordinate")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2 { x: a[0], y: a[1] }
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }

    pub fn rotated(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Outward normal of an edge traversed counterclockwise.
    pub fn perp_right(self) -> Vec2 {
        Vec2::new(self.y, -self.x)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3 { x: a[0], y: a[1], z: a[2] }
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn from_xy(p: Vec2, z: f64) -> Self {
        Vec3::new(p.x, p.y, z)
    }

    pub fn xy(self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Rigid planar transform: rotate by `theta` then translate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Isometry2 {
    pub translation: Vec2,
    pub theta: f64,
}

impl Isometry2 {
    pub fn apply(&self, p: Vec2) -> Vec2 {
        p.rotated(self.theta) + self.translation
    }
}

/// Result of a circle (or sphere) overlap query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penetration {
    /// Minimal translation of the circle that separates it from the shape.
    pub depth: f64,
    /// Unit vector pointing from the shape boundary toward the circle centre.
    pub normal: Vec2,
    /// Closest point on the shape boundary.
    pub surface_point: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec2>", into = "Vec<Vec2>")]
pub struct ConvexPolygon {
    vertices: Vec<Vec2>,
}

impl TryFrom<Vec<Vec2>> for ConvexPolygon {
    type Error = GeometryError;
    fn try_from(v: Vec<Vec2>) -> Result<Self, Self::Error> {
        ConvexPolygon::new(v)
    }
}

impl From<ConvexPolygon> for Vec<Vec2> {
    fn from(p: ConvexPolygon) -> Self {
        p.vertices
    }
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<Vec2>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeometryError::TooFewVertices(n));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if vertices[i].distance(vertices[j]) <= MIN_VERTEX_SEPARATION {
                    return Err(GeometryError::RepeatedVertex(i, j));
                }
            }
        }
        let area = signed_area(&vertices);
        if area <= 0.0 {
            return Err(GeometryError::Clockwise(area));
        }
        for i in 0..n {
            let a = vertices[(i + n - 1) % n];
            let b = vertices[i];
            let c = vertices[(i + 1) % n];
            if (b - a).cross(c - b) <= TIE_EPS {
                return Err(GeometryError::NotConvex(i));
            }
        }
        Ok(ConvexPolygon { vertices })
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`, starting at the lower-right corner
    /// so that edge 0 is the `+x` side.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        ConvexPolygon::new(vec![
            Vec2::new(x1, y0),
            Vec2::new(x1, y1),
            Vec2::new(x0, y1),
            Vec2::new(x0, y0),
        ])
    }

    /// Regular `n`-gon with circumradius `radius`, first vertex at angle `phase`.
    pub fn regular(n: usize, radius: f64, phase: f64) -> Result<Self, GeometryError> {
        let verts = (0..n)
            .map(|i| {
                let a = phase + std::f64::consts::TAU * i as f64 / n as f64;
                Vec2::new(radius * a.cos(), radius * a.sin())
            })
            .collect();
        ConvexPolygon::new(verts)
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    fn edge(&self, i: usize) -> (Vec2, Vec2) {
        let n = self.vertices.len();
        (self.vertices[i], self.vertices[(i + 1) % n])
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn centroid(&self) -> Vec2 {
        let n = self.vertices.len();
        let mut cx = 0.0;
        let mut cy = 0.0;
        let mut a2 = 0.0;
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let w = p.cross(q);
            a2 += w;
            cx += (p.x + q.x) * w;
            cy += (p.y + q.y) * w;
        }
        Vec2::new(cx / (3.0 * a2), cy / (3.0 * a2))
    }

    /// Second moment of area about the origin, `∫ |p|² dA`.
    pub fn polar_moment_origin(&self) -> f64 {
        let n = self.vertices.len();
        let mut acc = 0.0;
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let w = p.cross(q);
            acc += w * (p.x * p.x + p.x * q.x + q.x * q.x + p.y * p.y + p.y * q.y + q.y * q.y);
        }
        acc / 12.0
    }

    pub fn transformed(&self, iso: &Isometry2) -> ConvexPolygon {
        ConvexPolygon {
            vertices: self.vertices.iter().map(|&v| iso.apply(v)).collect(),
        }
    }

    pub fn translated(&self, d: Vec2) -> ConvexPolygon {
        ConvexPolygon {
            vertices: self.vertices.iter().map(|&v| v + d).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> ConvexPolygon {
        ConvexPolygon {
            vertices: self.vertices.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn bounds(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    /// Signed distance from `p` to the line of each edge, maximised over edges.
    /// Returns `(max_signed, edge_index)`; non-positive iff `p` is inside or on the boundary.
    /// Ties prefer the edge whose outward normal has the larger `x`, then the smaller index.
    fn max_edge_offset(&self, p: Vec2) -> (f64, usize, Vec2) {
        let mut best = (f64::NEG_INFINITY, 0usize, Vec2::ZERO);
        for i in 0..self.vertices.len() {
            let (a, b) = self.edge(i);
            let n = (b - a).perp_right().normalized();
            let s = n.dot(p - a);
            let better = if s > best.0 + TIE_EPS {
                true
            } else if (s - best.0).abs() <= TIE_EPS {
                n.x > best.2.x + TIE_EPS
            } else {
                false
            };
            if better {
                best = (s, i, n);
            }
        }
        best
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.max_edge_offset(p).0 <= 0.0
    }

    /// Closest boundary point and its distance, for a point anywhere in the plane.
    pub fn closest_boundary_point(&self, p: Vec2) -> (Vec2, f64) {
        let mut best = (self.vertices[0], f64::INFINITY);
        for i in 0..self.vertices.len() {
            let (a, b) = self.edge(i);
            let q = closest_on_segment(p, a, b);
            let d = p.distance(q);
            if d < best.1 {
                best = (q, d);
            }
        }
        best
    }

    /// Planar signed distance: negative inside, positive outside.
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        let (m, _, _) = self.max_edge_offset(p);
        if m <= 0.0 {
            m
        } else {
            self.closest_boundary_point(p).1
        }
    }

    /// Overlap of a circle with this polygon, if any.
    ///
    /// Inside the polygon, the separating direction is the outward normal of the
    /// nearest edge (ties toward `+x`, then lowest edge index).
    pub fn penetration(&self, center: Vec2, radius: f64) -> Option<Penetration> {
        let (m, _, n) = self.max_edge_offset(center);
        if m <= 0.0 {
            return Some(Penetration {
                depth: radius - m,
                normal: n,
                surface_point: center - n * m,
            });
        }
        let (q, d) = self.closest_boundary_point(center);
        if d < radius {
            Some(Penetration {
                depth: radius - d,
                normal: (center - q) * (1.0 / d),
                surface_point: q,
            })
        } else {
            None
        }
    }

    fn project(&self, axis: Vec2) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in &self.vertices {
            let s = v.dot(axis);
            lo = lo.min(s);
            hi = hi.max(s);
        }
        (lo, hi)
    }

    /// Minimum translation that separates `other` from `self`.
    /// The returned normal points from `self` toward `other`.
    pub fn overlap(&self, other: &ConvexPolygon) -> Option<PolygonOverlap> {
        let mut best: Option<(f64, Vec2)> = None;
        for poly in [self, other] {
            for i in 0..poly.vertices.len() {
                let (a, b) = poly.edge(i);
                let axis = (b - a).perp_right().normalized();
                let (a_lo, a_hi) = self.project(axis);
                let (b_lo, b_hi) = other.project(axis);
                let o = a_hi.min(b_hi) - a_lo.max(b_lo);
                if o <= 0.0 {
                    return None;
                }
                if best.is_none_or(|(d, _)| o < d - TIE_EPS) {
                    best = Some((o, axis));
                }
            }
        }
        let (depth, mut normal) = best?;
        if (other.centroid() - self.centroid()).dot(normal) < 0.0 {
            normal = -normal;
        }
        // deepest vertex of `other` along -normal approximates the contact location
        let contact = other
            .vertices
            .iter()
            .copied()
            .min_by(|p, q| p.dot(normal).total_cmp(&q.dot(normal)))
            .unwrap_or_else(|| other.centroid());
        Some(PolygonOverlap {
            depth,
            normal,
            contact,
        })
    }

    /// Euclidean distance between two polygons; zero when they intersect.
    pub fn distance_to(&self, other: &ConvexPolygon) -> f64 {
        if self.overlap(other).is_some() {
            return 0.0;
        }
        let mut d = f64::INFINITY;
        for &v in &other.vertices {
            d = d.min(self.closest_boundary_point(v).1);
        }
        for &v in &self.vertices {
            d = d.min(other.closest_boundary_point(v).1);
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolygonOverlap {
    pub depth: f64,
    pub normal: Vec2,
    pub contact: Vec2,
}

pub fn signed_area(v: &[Vec2]) -> f64 {
    let n = v.len();
    (0..n).map(|i| v[i].cross(v[(i + 1) % n])).sum::<f64>() * 0.5
}

pub fn closest_on_segment(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let ab = b - a;
    let len2 = ab.norm_sq();
    if len2 == 0.0 {
        return a;
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

/// Result of a sphere query against an extruded prism.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePenetration {
    pub depth: f64,
    /// Unit vector from the prism surface toward the sphere centre.
    pub normal: Vec3,
    pub surface_point: Vec3,
}

/// Sphere of radius `radius` at `center` against the prism `poly x [z_lo, z_hi]`.
pub fn sphere_prism_penetration(
    center: Vec3,
    radius: f64,
    poly: &ConvexPolygon,
    z_lo: f64,
    z_hi: f64,
) -> Option<SpherePenetration> {
    let p = center.xy();
    let (m, _, edge_n) = poly.max_edge_offset(p);
    let inside_planar = m <= 0.0;
    let dz = if center.z > z_hi {
        center.z - z_hi
    } else if center.z < z_lo {
        center.z - z_lo
    } else {
        0.0
    };
    if dz.abs() >= radius {
        return None;
    }
    if inside_planar {
        if dz == 0.0 {
            // centre inside the solid: cheapest exit among side, top and bottom
            let side = -m;
            let top = z_hi - center.z;
            let bottom = center.z - z_lo;
            if side <= top && side <= bottom {
                return Some(SpherePenetration {
                    depth: radius + side,
                    normal: Vec3::new(edge_n.x, edge_n.y, 0.0),
                    surface_point: Vec3::from_xy(p - edge_n * m, center.z),
                });
            }
            let (d, nz, zs) = if top <= bottom {
                (top, 1.0, z_hi)
            } else {
                (bottom, -1.0, z_lo)
            };
            return Some(SpherePenetration {
                depth: radius + d,
                normal: Vec3::new(0.0, 0.0, nz),
                surface_point: Vec3::from_xy(p, zs),
            });
        }
        return Some(SpherePenetration {
            depth: radius - dz.abs(),
            normal: Vec3::new(0.0, 0.0, dz.signum()),
            surface_point: Vec3::from_xy(p, center.z - dz),
        });
    }
    let (q, s) = poly.closest_boundary_point(p);
    let dist = s.hypot(dz);
    if dist >= radius {
        return None;
    }
    let surface_point = Vec3::from_xy(q, center.z - dz);
    Some(SpherePenetration {
        depth: radius - dist,
        normal: (center - surface_point) * (1.0 / dist),
        surface_point,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(lo: f64, hi: f64) -> ConvexPolygon {
        ConvexPolygon::rect(lo, lo, hi, hi).unwrap()
    }

    #[test]
    fn rejects_bad_polygons() {
        assert!(matches!(
            ConvexPolygon::new(vec![Vec2::ZERO, Vec2::new(1.0, 0.0)]),
            Err(GeometryError::TooFewVertices(2))
        ));
        let cw = vec![Vec2::new(0.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(1.0, 0.0)];
        assert!(matches!(ConvexPolygon::new(cw), Err(GeometryError::Clockwise(_))));
        let rep = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        ];
        assert!(matches!(ConvexPolygon::new(rep), Err(GeometryError::RepeatedVertex(1, 2))));
        let concave = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(1.0, 0.5),
            Vec2::new(2.0, 2.0),
            Vec2::new(0.0, 2.0),
        ];
        assert!(matches!(ConvexPolygon::new(concave), Err(GeometryError::NotConvex(_))));
        let collinear = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(1.0, 1.0),
        ];
        assert!(ConvexPolygon::new(collinear).is_err());
    }

    #[test]
    fn area_centroid_moment() {
        let sq = square(-1.0, 1.0);
        assert!((sq.area() - 4.0).abs() < 1e-12);
        assert!(sq.centroid().norm() < 1e-12);
        // ∫(x²+y²) over [-1,1]² = 8/3
        assert!((sq.polar_moment_origin() - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn penetration_far_outside_is_none() {
        assert!(square(25.0, 35.0).penetration(Vec2::ZERO, 1.0).is_none());
    }

    #[test]
    fn penetration_near_side() {
        let p = square(25.0, 35.0).penetration(Vec2::new(24.5, 30.0), 1.0).unwrap();
        assert!((p.depth - 0.5).abs() < 1e-12);
        assert!((p.normal - Vec2::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn penetration_inside_tie_prefers_plus_x() {
        // vertex order deliberately puts the -y edge first
        let sq = ConvexPolygon::new(vec![
            Vec2::new(25.0, 25.0),
            Vec2::new(35.0, 25.0),
            Vec2::new(35.0, 35.0),
            Vec2::new(25.0, 35.0),
        ])
        .unwrap();
        let p = sq.penetration(Vec2::new(30.0, 30.0), 1.0).unwrap();
        assert!((p.depth - 6.0).abs() < 1e-12);
        assert_eq!(p.normal, Vec2::new(1.0, 0.0));
    }

    #[test]
    fn sat_overlap_and_distance() {
        let a = square(0.0, 2.0);
        let b = square(1.5, 3.5);
        let o = a.overlap(&b).unwrap();
        assert!((o.depth - 0.5).abs() < 1e-12);
        assert!(o.normal.x > 0.0 || o.normal.y > 0.0);
        let c = square(5.0, 6.0);
        assert!(a.overlap(&c).is_none());
        assert!((a.distance_to(&c) - (3.0f64 * 3.0 * 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sphere_on_top_face() {
        let sq = square(-5.0, 5.0);
        let s = sphere_prism_penetration(Vec3::new(0.0, 0.0, 10.5), 1.0, &sq, 0.0, 10.0).unwrap();
        assert!((s.depth - 0.5).abs() < 1e-12);
        assert_eq!(s.normal, Vec3::new(0.0, 0.0, 1.0));
        assert!(sphere_prism_penetration(Vec3::new(0.0, 0.0, 11.0), 1.0, &sq, 0.0, 10.0).is_none());
    }

    #[test]
    fn sphere_on_side_and_edge() {
        let sq = square(-5.0, 5.0);
        let s = sphere_prism_penetration(Vec3::new(5.8, 0.0, 4.0), 1.0, &sq, 0.0, 10.0).unwrap();
        assert!((s.depth - 0.2).abs() < 1e-12);
        assert!((s.normal.x - 1.0).abs() < 1e-12);
        let e = sphere_prism_penetration(Vec3::new(5.3, 0.0, 10.4), 1.0, &sq, 0.0, 10.0).unwrap();
        assert!((e.depth - (1.0 - 0.5)).abs() < 1e-12);
        assert!(e.normal.x > 0.0 && e.normal.z > 0.0);
    }
}
