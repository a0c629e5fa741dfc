//! Plane and torus geometry primitives plus the exact ray/circle solver.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

/// A point or vector in the plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Rotate by +90 degrees.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }

    /// Cross product z-component.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
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

/// A flat torus with axis-aligned periods `(lx, ly)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Torus {
    pub lx: f64,
    pub ly: f64,
}

impl Torus {
    pub const UNIT: Torus = Torus { lx: 1.0, ly: 1.0 };

    pub fn new(lx: f64, ly: f64) -> Self {
        assert!(lx > 0.0 && ly > 0.0, "torus periods must be positive");
        Torus { lx, ly }
    }

    /// Reduce a point into the fundamental domain `[0,lx) x [0,ly)`.
    pub fn wrap(&self, p: Vec2) -> Vec2 {
        Vec2::new(p.x.rem_euclid(self.lx), p.y.rem_euclid(self.ly))
    }

    /// Shortest representative of a displacement vector.
    pub fn min_image(&self, d: Vec2) -> Vec2 {
        let mut x = d.x.rem_euclid(self.lx);
        if x > self.lx / 2.0 {
            x -= self.lx;
        }
        let mut y = d.y.rem_euclid(self.ly);
        if y > self.ly / 2.0 {
            y -= self.ly;
        }
        Vec2::new(x, y)
    }

    /// Distance between two points on the torus.
    pub fn dist(&self, a: Vec2, b: Vec2) -> f64 {
        self.min_image(a - b).norm()
    }
}

/// Outcome of intersecting a forward ray with a circle.
#[derive(Clone, Copy, Debug)]
pub struct RayHit {
    /// Smallest admissible positive parameter along the ray.
    pub t: f64,
    /// Discriminant of the quadratic; near-zero values flag grazing hits.
    pub discriminant: f64,
}

/// First intersection of the ray `origin + t*dir` (unit `dir`) with the
/// circle of the given center and radius, restricted to `t > t_min`.
///
/// Solves `t^2 - 2 t <dir, c-o> + |c-o|^2 - R^2 = 0` in closed form.
pub fn ray_circle_first_hit(
    origin: Vec2,
    dir: Vec2,
    center: Vec2,
    radius: f64,
    t_min: f64,
) -> Option<RayHit> {
    let d = center - origin;
    let b = dir.dot(d);
    // Quick reject: circle behind the ray and origin outside it.
    let c = d.norm_sq() - radius * radius;
    if b <= t_min && c > 0.0 {
        return None;
    }
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // Roots b - sq <= b + sq; prefer the near one.
    let t1 = b - sq;
    if t1 > t_min {
        return Some(RayHit {
            t: t1,
            discriminant: disc,
        });
    }
    let t2 = b + sq;
    if t2 > t_min {
        // Ray starts inside the circle (or within t_min of entry); the exit
        // root is reported so the caller can decide.
        return Some(RayHit {
            t: t2,
            discriminant: disc,
        });
    }
    None
}

/// Distance from a point to the segment `[a, b]`.
pub fn point_segment_dist(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Whether the segment `[a, b]` intersects the open disk of the given
/// center and radius.
pub fn segment_hits_disk(a: Vec2, b: Vec2, center: Vec2, radius: f64) -> bool {
    point_segment_dist(center, a, b) < radius
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn wrap_and_min_image() {
        let t = Torus::UNIT;
        let p = t.wrap(Vec2::new(1.25, -0.25));
        assert_relative_eq!(p.x, 0.25);
        assert_relative_eq!(p.y, 0.75);
        let d = t.min_image(Vec2::new(0.9, -0.9));
        assert_relative_eq!(d.x, -0.1, epsilon = 1e-14);
        assert_relative_eq!(d.y, 0.1, epsilon = 1e-14);
    }

    #[test]
    fn ray_hits_circle_head_on() {
        let hit = ray_circle_first_hit(
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(2.0, 0.0),
            0.5,
            1e-9,
        )
        .unwrap();
        assert_relative_eq!(hit.t, 1.5, epsilon = 1e-14);
    }

    #[test]
    fn ray_misses_circle() {
        assert!(ray_circle_first_hit(
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(2.0, 1.0),
            0.5,
            1e-9,
        )
        .is_none());
    }

    #[test]
    fn ray_from_circle_boundary_ignores_self() {
        // Start on the boundary moving outward: only negative/zero roots.
        let hit = ray_circle_first_hit(
            Vec2::new(0.5, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 0.0),
            0.5,
            1e-9,
        );
        assert!(hit.is_none());
    }

    #[test]
    fn segment_disk_intersection() {
        assert!(segment_hits_disk(
            Vec2::new(-1.0, 0.1),
            Vec2::new(1.0, 0.1),
            Vec2::new(0.0, 0.0),
            0.2
        ));
        assert!(!segment_hits_disk(
            Vec2::new(-1.0, 0.3),
            Vec2::new(1.0, 0.3),
            Vec2::new(0.0, 0.0),
            0.2
        ));
    }
}
