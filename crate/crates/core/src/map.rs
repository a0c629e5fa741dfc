//! The billiard collision map, its inverse and differential, homogeneity
//! strips, and the map distance between tables of one family.

use crate::error::MapError;
use crate::geom::Vec2;
use crate::table::BilliardTable;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

/// Tolerance triggering `TangencyError`: collisions with |cos phi| below
/// this, or ray discriminants below its square, are treated as members of
/// the singularity set.
pub const TANGENCY_COS_TOL: f64 = 1e-10;
pub const TANGENCY_DISC_TOL: f64 = 1e-14;

/// Relative slack applied to the certified flight-time bounds before a
/// simulation aborts.
pub const FLIGHT_BOUND_REL_TOL: f64 = 0.12;
pub const FLIGHT_BOUND_ABS_TOL: f64 = 0.02;

/// Boundary coordinates of the billiard map: scatterer index, clockwise
/// arclength `r` and post-collision angle `phi in [-pi/2, pi/2]` measured
/// from the outward normal toward the tangent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub scatterer: usize,
    pub r: f64,
    pub phi: f64,
}

impl PhasePoint {
    pub fn new(scatterer: usize, r: f64, phi: f64) -> Self {
        PhasePoint { scatterer, r, phi }
    }

    /// The time-reversal involution `I(r, phi) = (r, -phi)`.
    pub fn involution(self) -> Self {
        PhasePoint {
            scatterer: self.scatterer,
            r: self.r,
            phi: -self.phi,
        }
    }

    /// Position on the table.
    pub fn position(&self, table: &BilliardTable) -> Vec2 {
        table.scatterers[self.scatterer].point_at(self.r)
    }

    /// Unit post-collision velocity.
    pub fn velocity(&self, table: &BilliardTable) -> Vec2 {
        let s = &table.scatterers[self.scatterer];
        let n = s.normal_at(self.r);
        let t = s.tangent_at(self.r);
        n * self.phi.cos() + t * self.phi.sin()
    }

    /// Distance in phase space (same scatterer required; `r` wraps).
    pub fn dist(&self, other: &PhasePoint, table: &BilliardTable) -> f64 {
        if self.scatterer != other.scatterer {
            return f64::INFINITY;
        }
        let ell = table.scatterers[self.scatterer].arclength();
        let mut dr = (self.r - other.r).rem_euclid(ell);
        if dr > ell / 2.0 {
            dr -= ell;
        }
        (dr * dr + (self.phi - other.phi).powi(2)).sqrt()
    }
}

/// Result of one application of the collision map.
#[derive(Clone, Copy, Debug)]
pub struct Collision {
    pub point: PhasePoint,
    pub flight_time: f64,
}

/// A 2x2 real matrix acting on tangent vectors `(dr, dphi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2 {
    pub m: [[f64; 2]; 2],
}

impl Mat2 {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2 { m: [[a, b], [c, d]] }
    }

    pub fn apply(&self, v: (f64, f64)) -> (f64, f64) {
        (
            self.m[0][0] * v.0 + self.m[0][1] * v.1,
            self.m[1][0] * v.0 + self.m[1][1] * v.1,
        )
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn inverse(&self) -> Mat2 {
        let d = self.det();
        Mat2::new(
            self.m[1][1] / d,
            -self.m[0][1] / d,
            -self.m[1][0] / d,
            self.m[0][0] / d,
        )
    }

    /// Operator 2-norm (largest singular value).
    pub fn op_norm(&self) -> f64 {
        let a = self.m[0][0] * self.m[0][0] + self.m[1][0] * self.m[1][0];
        let c = self.m[0][1] * self.m[0][1] + self.m[1][1] * self.m[1][1];
        let b = self.m[0][0] * self.m[0][1] + self.m[1][0] * self.m[1][1];
        let half = (a + c) / 2.0;
        let rad = (((a - c) / 2.0).powi(2) + b * b).sqrt();
        (half + rad).sqrt()
    }

    pub fn sub(&self, other: &Mat2) -> Mat2 {
        Mat2::new(
            self.m[0][0] - other.m[0][0],
            self.m[0][1] - other.m[0][1],
            self.m[1][0] - other.m[1][0],
            self.m[1][1] - other.m[1][1],
        )
    }
}

/// Apply the collision map once: exact ray/circle intersection over torus
/// translates, nearest positive root wins.
pub fn next_collision(table: &BilliardTable, x: &PhasePoint) -> Result<Collision, MapError> {
    if x.phi.abs() >= FRAC_PI_2 || x.phi.cos() < TANGENCY_COS_TOL {
        return Err(MapError::Tangency {
            scatterer: x.scatterer,
            r: x.r,
            phi: x.phi,
            reason: "grazing exit: |cos phi| below tolerance",
        });
    }
    let p = x.position(table);
    let v = x.velocity(table);
    let (t, si, q, disc) =
        table
            .raw_ray_cast(p, v)
            .ok_or_else(|| MapError::NoCollision {
                scatterer: x.scatterer,
                r: x.r,
                phi: x.phi,
                max_flight: table.horizon.max_flight,
            })?;
    if disc < TANGENCY_DISC_TOL {
        return Err(MapError::Tangency {
            scatterer: x.scatterer,
            r: x.r,
            phi: x.phi,
            reason: "ray-circle discriminant below tolerance at accepted root",
        });
    }
    let (lo, hi) = table.tau_bounds;
    if table.horizon.refined {
        let lo_tol = lo * (1.0 - FLIGHT_BOUND_REL_TOL) - FLIGHT_BOUND_ABS_TOL;
        let hi_tol = hi * (1.0 + FLIGHT_BOUND_REL_TOL) + FLIGHT_BOUND_ABS_TOL;
        if t < lo_tol || t > hi_tol {
            return Err(MapError::FlightBound {
                flight: t,
                lo,
                hi,
            });
        }
    }
    let s = &table.scatterers[si];
    let r1 = s.r_of_point(q, &table.torus);
    let n1 = s.normal_at(r1);
    let t1 = s.tangent_at(r1);
    // Incoming velocity v; reflection flips the normal component. With the
    // convention v' = cos(phi) n + sin(phi) t the post-collision angle obeys
    // sin(phi1) = v.t1, cos(phi1) = -v.n1.
    let cos_phi1 = -v.dot(n1);
    let sin_phi1 = v.dot(t1);
    if cos_phi1 < TANGENCY_COS_TOL {
        return Err(MapError::Tangency {
            scatterer: si,
            r: r1,
            phi: sin_phi1.atan2(cos_phi1),
            reason: "grazing arrival: |cos phi| below tolerance",
        });
    }
    let phi1 = sin_phi1.atan2(cos_phi1);
    Ok(Collision {
        point: PhasePoint::new(si, r1, phi1),
        flight_time: t,
    })
}

/// The forward map `T`.
pub fn apply_map(table: &BilliardTable, x: &PhasePoint) -> Result<PhasePoint, MapError> {
    next_collision(table, x).map(|c| c.point)
}

/// The backward map `T^{-1} = I o T o I` realized through the time-reversal
/// involution `I(r, phi) = (r, -phi)`.
pub fn apply_inverse(table: &BilliardTable, x: &PhasePoint) -> Result<PhasePoint, MapError> {
    let y = apply_map(table, &x.involution())?;
    Ok(y.involution())
}

/// Backward collision including the (positive) flight time of the reversed
/// trajectory.
pub fn inverse_collision(table: &BilliardTable, x: &PhasePoint) -> Result<Collision, MapError> {
    let c = next_collision(table, &x.involution())?;
    Ok(Collision {
        point: c.point.involution(),
        flight_time: c.flight_time,
    })
}

/// Differential of `T` at `x` in `(r, phi)` coordinates, assembled from the
/// flight time, curvatures and cosines:
///
/// `DT = -1/cos(phi1) [[tau*K + cos(phi), tau],
///                     [K1*(tau*K + cos(phi)) + K*cos(phi1), tau*K1 + cos(phi1)]]`
///
/// Validated against the central finite-difference oracle in the test
/// suite rather than trusted a priori.
pub fn differential(table: &BilliardTable, x: &PhasePoint) -> Result<(Mat2, Collision), MapError> {
    let c = next_collision(table, x)?;
    let y = c.point;
    let tau = c.flight_time;
    let k0 = table.scatterers[x.scatterer].curvature();
    let k1 = table.scatterers[y.scatterer].curvature();
    let cos0 = x.phi.cos();
    let cos1 = y.phi.cos();
    if cos1 < TANGENCY_COS_TOL {
        return Err(MapError::Tangency {
            scatterer: y.scatterer,
            r: y.r,
            phi: y.phi,
            reason: "differential undefined at grazing arrival",
        });
    }
    let a = tau * k0 + cos0;
    let mat = Mat2::new(
        -a / cos1,
        -tau / cos1,
        -(k1 * a + k0 * cos1) / cos1,
        -(tau * k1 + cos1) / cos1,
    );
    Ok((mat, c))
}

/// Differential of `T^{-1}` at `x`: inverse of `DT` at `T^{-1}x`.
pub fn differential_inverse(
    table: &BilliardTable,
    x: &PhasePoint,
) -> Result<(Mat2, PhasePoint), MapError> {
    let y = apply_inverse(table, x)?;
    let (dt, _) = differential(table, &y)?;
    Ok((dt.inverse(), y))
}

/// Homogeneity classification of an angle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Homogeneity {
    /// Away from both tangency lines: `|pi/2 -+ phi| > k0^{-2}`.
    Bulk,
    /// Strip `H_{k}` (`k > 0` near `phi = pi/2`, `k < 0` near `phi = -pi/2`).
    Strip(i32),
}

/// Strip index of an angle: `phi` lies in `H_{+-k}` when
/// `(k+1)^{-2} <= |+-pi/2 - phi| <= k^{-2}`. Boundary values resolve toward
/// the strip of larger index.
pub fn homogeneity_index(phi: f64, k0: u32) -> Homogeneity {
    debug_assert!(phi.abs() <= FRAC_PI_2 + 1e-12);
    let u_plus = FRAC_PI_2 - phi;
    let u_minus = phi + FRAC_PI_2;
    let threshold = 1.0 / (k0 as f64 * k0 as f64);
    let (u, sign) = if u_plus <= u_minus {
        (u_plus, 1i32)
    } else {
        (u_minus, -1i32)
    };
    if u > threshold {
        return Homogeneity::Bulk;
    }
    if u <= 0.0 {
        return Homogeneity::Strip(sign * i32::MAX);
    }
    let k = (1.0 / u.sqrt()).floor().min(1e9) as i32;
    Homogeneity::Strip(sign * k.max(k0 as i32))
}

/// Options for the sampled map-distance check.
#[derive(Clone, Debug)]
pub struct MapDistanceGrid {
    /// Grid resolution per scatterer in the r and phi directions.
    pub n_r: usize,
    pub n_phi: usize,
    /// Stable-cone directions sampled for (C2)/(C3).
    pub n_dirs: usize,
}

impl Default for MapDistanceGrid {
    fn default() -> Self {
        MapDistanceGrid {
            n_r: 48,
            n_phi: 32,
            n_dirs: 3,
        }
    }
}

/// Sampled check of `d_F(T1, T2) <= eps`: on a phase-space grid excluding a
/// neighborhood of the backward singularity sets, verifies
/// (C1) backward images within `eps`,
/// (C2) stable Jacobian ratios within `eps`,
/// (C3) backward differentials on stable unit vectors within `sqrt(eps)`.
pub fn map_distance_le(
    t1: &BilliardTable,
    t2: &BilliardTable,
    eps: f64,
    grid: &MapDistanceGrid,
) -> Result<bool, MapError> {
    assert_eq!(
        t1.n_scatterers(),
        t2.n_scatterers(),
        "tables must share the phase space"
    );
    let sqrt_eps = eps.sqrt();
    let (lo, hi) = t1.family.stable_slope_bounds();
    let dirs: Vec<(f64, f64)> = (0..grid.n_dirs)
        .map(|i| {
            let m = lo + (hi - lo) * (i as f64 + 0.5) / grid.n_dirs as f64;
            let norm = (1.0 + m * m).sqrt();
            (1.0 / norm, m / norm)
        })
        .collect();

    let mut sampled = 0usize;
    for si in 0..t1.n_scatterers() {
        let ell = t1.scatterers[si].arclength();
        for ir in 0..grid.n_r {
            let r = (ir as f64 + 0.5) / grid.n_r as f64 * ell;
            for ip in 0..grid.n_phi {
                let phi = -FRAC_PI_2 + (ip as f64 + 0.5) / grid.n_phi as f64 * std::f64::consts::PI;
                let x = PhasePoint::new(si, r, phi);
                // Exclude the eps-neighborhood of S_0.
                if FRAC_PI_2 - phi.abs() < eps {
                    continue;
                }
                // Exclude points whose backward image under either map lands
                // within eps of a grazing collision (the operational
                // surrogate for the neighborhood of T(S_0)).
                let y1 = match apply_inverse(t1, &x) {
                    Ok(y) if FRAC_PI_2 - y.phi.abs() >= eps => y,
                    _ => continue,
                };
                let y2 = match apply_inverse(t2, &x) {
                    Ok(y) if FRAC_PI_2 - y.phi.abs() >= eps => y,
                    _ => continue,
                };
                sampled += 1;

                // (C1)
                if y1.dist(&y2, t1) > eps {
                    return Ok(false);
                }
                // (C2)/(C3)
                let d1 = match differential(t1, &x) {
                    Ok((m, _)) => m,
                    Err(_) => continue,
                };
                let d2 = match differential(t2, &x) {
                    Ok((m, _)) => m,
                    Err(_) => continue,
                };
                let di1 = match differential_inverse(t1, &x) {
                    Ok((m, _)) => m,
                    Err(_) => continue,
                };
                let di2 = match differential_inverse(t2, &x) {
                    Ok((m, _)) => m,
                    Err(_) => continue,
                };
                for &(vr, vphi) in &dirs {
                    let j1 = norm2(d1.apply((vr, vphi)));
                    let j2 = norm2(d2.apply((vr, vphi)));
                    if (j1 / j2 - 1.0).abs() > eps || (j2 / j1 - 1.0).abs() > eps {
                        return Ok(false);
                    }
                    let w1 = di1.apply((vr, vphi));
                    let w2 = di2.apply((vr, vphi));
                    if norm2((w1.0 - w2.0, w1.1 - w2.1)) > sqrt_eps {
                        return Ok(false);
                    }
                }
            }
        }
    }
    if sampled == 0 {
        return Err(MapError::GridTooCoarse(format!(
            "singularity exclusion at eps={} removed all {} grid points",
            eps,
            grid.n_r * grid.n_phi * t1.n_scatterers()
        )));
    }
    Ok(true)
}

fn norm2(v: (f64, f64)) -> f64 {
    (v.0 * v.0 + v.1 * v.1).sqrt()
}
