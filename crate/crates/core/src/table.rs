//! Billiard tables: disjoint circular scatterers on a flat torus, family
//! parameter boxes, horizon certification and the configuration distance.

use crate::error::TableError;
use crate::geom::{ray_circle_first_hit, Torus, Vec2};
use serde::{Deserialize, Serialize};

/// A circular scatterer. The boundary is parametrized clockwise by
/// arclength `r in [0, 2*pi*radius)` starting at the east pole, so that the
/// billiard domain lies to the left of the tangent direction.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Scatterer {
    pub center: Vec2,
    pub radius: f64,
}

impl Scatterer {
    pub fn new(center: Vec2, radius: f64) -> Self {
        assert!(radius > 0.0, "scatterer radius must be positive");
        Scatterer { center, radius }
    }

    pub fn arclength(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.radius
    }

    pub fn curvature(&self) -> f64 {
        1.0 / self.radius
    }

    fn angle_of(&self, r: f64) -> f64 {
        -r / self.radius
    }

    /// Boundary point at arclength coordinate `r` (clockwise).
    pub fn point_at(&self, r: f64) -> Vec2 {
        let th = self.angle_of(r);
        self.center + Vec2::new(th.cos(), th.sin()) * self.radius
    }

    /// Outward unit normal (into the billiard domain).
    pub fn normal_at(&self, r: f64) -> Vec2 {
        let th = self.angle_of(r);
        Vec2::new(th.cos(), th.sin())
    }

    /// Unit tangent in the direction of increasing `r`.
    pub fn tangent_at(&self, r: f64) -> Vec2 {
        let th = self.angle_of(r);
        Vec2::new(th.sin(), -th.cos())
    }

    /// Arclength coordinate of a boundary point (the point is projected onto
    /// the circle first).
    pub fn r_of_point(&self, p: Vec2, torus: &Torus) -> f64 {
        let d = torus.min_image(p - self.center);
        let th = d.y.atan2(d.x);
        (-th * self.radius).rem_euclid(self.arclength())
    }
}

/// Parameters of the uniform billiard family: every admitted table must
/// satisfy `tau_star <= tau_min <= tau_max <= 1/tau_star` and
/// `kappa_star <= kappa_min <= kappa_max <= 1/kappa_star`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FamilyParams {
    pub tau_star: f64,
    pub kappa_star: f64,
    /// C^3-norm bound of the family. Vacuous for circles beyond the radius
    /// bound; recorded but unused.
    pub e_star: f64,
    /// First homogeneity-strip index.
    pub k0: u32,
    /// Length scale for stable-curve subdivision.
    pub delta0: f64,
}

impl FamilyParams {
    pub fn validate(&self) -> Result<(), TableError> {
        if !(self.tau_star > 0.0 && self.kappa_star > 0.0 && self.e_star > 0.0) {
            return Err(TableError::Invalid(
                "family parameters must be positive".into(),
            ));
        }
        if self.k0 < 1 {
            return Err(TableError::Invalid("k0 must be at least 1".into()));
        }
        if !(self.delta0 > 0.0 && self.delta0 < 1.0) {
            return Err(TableError::Invalid("delta0 must lie in (0,1)".into()));
        }
        Ok(())
    }

    /// Certified hyperbolicity constant `Lambda = 1 + 2*kappa_star*tau_star`.
    pub fn lambda(&self) -> f64 {
        1.0 + 2.0 * self.kappa_star * self.tau_star
    }

    /// Stable cone slope bounds `[-1/kappa_star - 1/tau_star, -kappa_star]`.
    pub fn stable_slope_bounds(&self) -> (f64, f64) {
        (
            -1.0 / self.kappa_star - 1.0 / self.tau_star,
            -self.kappa_star,
        )
    }

    /// Unstable cone slope bounds `[kappa_star, 1/kappa_star + 1/tau_star]`.
    pub fn unstable_slope_bounds(&self) -> (f64, f64) {
        (self.kappa_star, 1.0 / self.kappa_star + 1.0 / self.tau_star)
    }
}

/// Record of the deterministic horizon sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HorizonCertificate {
    /// Number of (r, phi) grid points swept per scatterer.
    pub grid_r: usize,
    pub grid_phi: usize,
    /// Hard flight cap; exceeding it fails certification.
    pub max_flight: f64,
    /// Extremal flight times found (after local refinement).
    pub tau_min: f64,
    pub tau_max: f64,
    /// Whether bisection refinement around the extremal rays was run.
    pub refined: bool,
}

/// Options controlling table construction.
#[derive(Clone, Debug)]
pub struct BuildOptions {
    /// Total number of certification samples (split across scatterers).
    pub horizon_samples: usize,
    /// Hard cap on any free flight; a sweep ray exceeding this is treated as
    /// evidence of an infinite corridor.
    pub max_flight: f64,
    /// Check the family tau/kappa boxes.
    pub enforce_family_box: bool,
    /// Require the horizon sweep (disable only for closed-form sanity checks).
    pub certify_horizon: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            horizon_samples: 400_000,
            max_flight: 10.0,
            enforce_family_box: true,
            certify_horizon: true,
        }
    }
}

impl BuildOptions {
    /// Cheap certification for tables whose finite horizon is guaranteed by
    /// construction (e.g. Lorentz cells).
    pub fn light() -> Self {
        BuildOptions {
            horizon_samples: 20_000,
            ..Default::default()
        }
    }
}

/// An immutable billiard table with certified flight-time and curvature
/// bounds.
#[derive(Clone, Debug)]
pub struct BilliardTable {
    pub torus: Torus,
    pub scatterers: Vec<Scatterer>,
    pub family: FamilyParams,
    pub tau_bounds: (f64, f64),
    pub kappa_bounds: (f64, f64),
    pub horizon: HorizonCertificate,
    /// Precomputed torus translates used by the collision search.
    translates: Vec<Vec2>,
    total_arclength: f64,
    /// Cumulative arclength offsets, for global boundary coordinates.
    arc_offsets: Vec<f64>,
}

impl BilliardTable {
    /// Build a table on the unit torus. See [`BilliardTable::build_on`].
    pub fn build(
        scatterers: Vec<Scatterer>,
        family: FamilyParams,
        opts: &BuildOptions,
    ) -> Result<Self, TableError> {
        Self::build_on(Torus::UNIT, scatterers, family, opts)
    }

    /// Build and certify a table: checks pairwise disjointness over torus
    /// translates, sweeps the horizon grid, and verifies the family box.
    pub fn build_on(
        torus: Torus,
        scatterers: Vec<Scatterer>,
        family: FamilyParams,
        opts: &BuildOptions,
    ) -> Result<Self, TableError> {
        family.validate()?;
        if scatterers.is_empty() {
            return Err(TableError::Invalid("scatterer list is empty".into()));
        }
        for s in &scatterers {
            if !(s.radius.is_finite() && s.center.x.is_finite() && s.center.y.is_finite()) {
                return Err(TableError::Invalid("non-finite scatterer data".into()));
            }
            if 2.0 * s.radius >= torus.lx.min(torus.ly) {
                return Err(TableError::Invalid(format!(
                    "scatterer radius {} too large for torus ({}, {})",
                    s.radius, torus.lx, torus.ly
                )));
            }
        }
        // Disjointness over all torus translates (including self-translates).
        for i in 0..scatterers.len() {
            for j in i..scatterers.len() {
                let gap = if i == j {
                    torus.lx.min(torus.ly) - 2.0 * scatterers[i].radius
                } else {
                    torus.dist(scatterers[i].center, scatterers[j].center)
                        - scatterers[i].radius
                        - scatterers[j].radius
                };
                if gap <= 0.0 {
                    return Err(TableError::Overlap(i, j, gap));
                }
            }
        }

        let kappa_min = scatterers.iter().map(|s| s.curvature()).fold(f64::INFINITY, f64::min);
        let kappa_max = scatterers
            .iter()
            .map(|s| s.curvature())
            .fold(f64::NEG_INFINITY, f64::max);

        let total_arclength: f64 = scatterers.iter().map(|s| s.arclength()).sum();
        let mut arc_offsets = Vec::with_capacity(scatterers.len());
        let mut acc = 0.0;
        for s in &scatterers {
            arc_offsets.push(acc);
            acc += s.arclength();
        }

        let translates = make_translates(torus, opts.max_flight, &scatterers);

        let mut table = BilliardTable {
            torus,
            scatterers,
            family,
            tau_bounds: (0.0, opts.max_flight),
            kappa_bounds: (kappa_min, kappa_max),
            horizon: HorizonCertificate {
                grid_r: 0,
                grid_phi: 0,
                max_flight: opts.max_flight,
                tau_min: f64::NAN,
                tau_max: f64::NAN,
                refined: false,
            },
            translates,
            total_arclength,
            arc_offsets,
        };

        if opts.certify_horizon {
            table.certify_horizon(opts)?;
            // Shrink the translate list now that tau_max is known.
            table.translates = make_translates(torus, table.tau_bounds.1 * 1.2, &table.scatterers);
        }

        if opts.enforce_family_box {
            table.check_family_box()?;
        }
        Ok(table)
    }

    fn check_family_box(&self) -> Result<(), TableError> {
        let f = &self.family;
        let (kmin, kmax) = self.kappa_bounds;
        if kmin < f.kappa_star || kmax > 1.0 / f.kappa_star {
            return Err(TableError::FamilyBound {
                quantity: "curvature",
                value: if kmin < f.kappa_star { kmin } else { kmax },
                lo: f.kappa_star,
                hi: 1.0 / f.kappa_star,
            });
        }
        if self.horizon.tau_min.is_finite() {
            let (tmin, tmax) = self.tau_bounds;
            if tmin < f.tau_star || tmax > 1.0 / f.tau_star {
                return Err(TableError::FamilyBound {
                    quantity: "flight time",
                    value: if tmin < f.tau_star { tmin } else { tmax },
                    lo: f.tau_star,
                    hi: 1.0 / f.tau_star,
                });
            }
        }
        Ok(())
    }

    /// Deterministic sweep of (position, direction) pairs over the phase
    /// space, with local bisection refinement around the extremal rays.
    fn certify_horizon(&mut self, opts: &BuildOptions) -> Result<(), TableError> {
        let k = self.scatterers.len();
        let per = (opts.horizon_samples / k).max(100);
        let grid_r = (per as f64).sqrt().ceil() as usize * 2;
        let grid_phi = (per / grid_r).max(8);

        let mut tau_min = f64::INFINITY;
        let mut tau_max: f64 = 0.0;
        let mut argmin = (0usize, 0.0f64, 0.0f64);
        let mut argmax = (0usize, 0.0f64, 0.0f64);
        // Keep clear of exact grazing; tangent flights are excluded from the
        // flight-time field anyway.
        let phi_pad = 1e-3;
        for (si, s) in self.scatterers.iter().enumerate() {
            let ell = s.arclength();
            for ir in 0..grid_r {
                let r = (ir as f64 + 0.5) / grid_r as f64 * ell;
                for ip in 0..grid_phi {
                    let phi = -std::f64::consts::FRAC_PI_2
                        + phi_pad
                        + (ip as f64 + 0.5) / grid_phi as f64
                            * (std::f64::consts::PI - 2.0 * phi_pad);
                    match self.flight_from(si, r, phi) {
                        Some(t) => {
                            if t < tau_min {
                                tau_min = t;
                                argmin = (si, r, phi);
                            }
                            if t > tau_max {
                                tau_max = t;
                                argmax = (si, r, phi);
                            }
                        }
                        None => {
                            return Err(TableError::InfiniteHorizon {
                                scatterer: si,
                                r,
                                phi,
                                max_flight: opts.max_flight,
                            });
                        }
                    }
                }
            }
        }

        // Local refinement: coordinate bisection around the extremal rays.
        let refine = |this: &Self, seed: (usize, f64, f64), maximize: bool| -> Option<f64> {
            let (si, mut r, mut phi) = seed;
            let ell = this.scatterers[si].arclength();
            let mut step_r = ell / grid_r as f64;
            let mut step_phi = std::f64::consts::PI / grid_phi as f64;
            let mut best = this.flight_from(si, r, phi)?;
            for _ in 0..60 {
                let mut improved = false;
                for (dr, dphi) in [
                    (step_r, 0.0),
                    (-step_r, 0.0),
                    (0.0, step_phi),
                    (0.0, -step_phi),
                ] {
                    let r2 = (r + dr).rem_euclid(ell);
                    let phi2 = (phi + dphi).clamp(
                        -std::f64::consts::FRAC_PI_2 + phi_pad,
                        std::f64::consts::FRAC_PI_2 - phi_pad,
                    );
                    if let Some(t) = this.flight_from(si, r2, phi2) {
                        if (maximize && t > best) || (!maximize && t < best) {
                            best = t;
                            r = r2;
                            phi = phi2;
                            improved = true;
                        }
                    } else if maximize {
                        // A refinement ray escaped the cap.
                        return None;
                    }
                }
                if !improved {
                    step_r *= 0.5;
                    step_phi *= 0.5;
                }
            }
            Some(best)
        };
        let tau_min = refine(self, argmin, false).unwrap_or(tau_min);
        let tau_max = match refine(self, argmax, true) {
            Some(t) => t,
            None => {
                return Err(TableError::InfiniteHorizon {
                    scatterer: argmax.0,
                    r: argmax.1,
                    phi: argmax.2,
                    max_flight: opts.max_flight,
                })
            }
        };

        self.tau_bounds = (tau_min, tau_max);
        self.horizon = HorizonCertificate {
            grid_r,
            grid_phi,
            max_flight: opts.max_flight,
            tau_min,
            tau_max,
            refined: true,
        };
        Ok(())
    }

    /// Free flight length from boundary coordinates, or `None` when it
    /// exceeds the certification cap (including grazing exits).
    pub fn flight_from(&self, scatterer: usize, r: f64, phi: f64) -> Option<f64> {
        let s = &self.scatterers[scatterer];
        let p = s.point_at(r);
        let n = s.normal_at(r);
        let t = s.tangent_at(r);
        let v = n * phi.cos() + t * phi.sin();
        self.raw_ray_cast(p, v).map(|(tt, _, _, _)| tt)
    }

    /// Cast a ray against all scatterer translates. Returns
    /// `(t, scatterer, hit_point, discriminant)` of the first hit.
    pub(crate) fn raw_ray_cast(&self, origin: Vec2, dir: Vec2) -> Option<(f64, usize, Vec2, f64)> {
        let mut best: Option<(f64, usize, Vec2, f64)> = None;
        for &tr in &self.translates {
            for (si, s) in self.scatterers.iter().enumerate() {
                let c = s.center + tr;
                if let Some(hit) = ray_circle_first_hit(origin, dir, c, s.radius, 1e-11) {
                    if best.map_or(true, |(bt, _, _, _)| hit.t < bt) {
                        best = Some((hit.t, si, origin + dir * hit.t, hit.discriminant));
                    }
                }
            }
        }
        best.filter(|&(t, _, _, _)| t <= self.horizon.max_flight)
    }

    /// SRB normalizing constant `c = 1/(2 * total boundary length)`.
    pub fn srb_norm_const(&self) -> f64 {
        1.0 / (2.0 * self.total_arclength)
    }

    pub fn total_arclength(&self) -> f64 {
        self.total_arclength
    }

    /// Offset of scatterer `i` in the global boundary coordinate.
    pub fn arc_offset(&self, i: usize) -> f64 {
        self.arc_offsets[i]
    }

    pub fn n_scatterers(&self) -> usize {
        self.scatterers.len()
    }
}

fn make_translates(torus: Torus, reach: f64, scatterers: &[Scatterer]) -> Vec<Vec2> {
    let rmax = scatterers.iter().map(|s| s.radius).fold(0.0, f64::max);
    let mx = ((reach + rmax) / torus.lx).ceil() as i32 + 1;
    let my = ((reach + rmax) / torus.ly).ceil() as i32 + 1;
    let mut v = Vec::with_capacity(((2 * mx + 1) * (2 * my + 1)) as usize);
    for i in -mx..=mx {
        for j in -my..=my {
            v.push(Vec2::new(i as f64 * torus.lx, j as f64 * torus.ly));
        }
    }
    v
}

/// Configuration distance between two equal-arity tables of circles.
///
/// For circles the C^2 parametrization distance reduces to the center
/// displacement (matching radii; the rotation offset is immaterial), so the
/// distance is the minimum over radius-preserving scatterer permutations of
/// the summed torus distances between centers.
pub fn config_distance(
    torus: Torus,
    a: &[Scatterer],
    b: &[Scatterer],
) -> Result<f64, TableError> {
    if a.len() != b.len() {
        return Err(TableError::ArityMismatch(format!(
            "{} vs {} scatterers",
            a.len(),
            b.len()
        )));
    }
    let mut ra: Vec<f64> = a.iter().map(|s| s.radius).collect();
    let mut rb: Vec<f64> = b.iter().map(|s| s.radius).collect();
    ra.sort_by(|x, y| x.partial_cmp(y).unwrap());
    rb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    for (x, y) in ra.iter().zip(rb.iter()) {
        if (x - y).abs() > 1e-12 {
            return Err(TableError::ArityMismatch(format!(
                "arclength multisets differ: radius {} vs {}",
                x, y
            )));
        }
    }
    let n = a.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let mut sum = 0.0;
        for (i, &j) in p.iter().enumerate() {
            if (a[i].radius - b[j].radius).abs() > 1e-12 {
                return;
            }
            sum += torus.dist(a[i].center, b[j].center);
        }
        if sum < best {
            best = sum;
        }
    });
    Ok(best)
}

fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// The reference finite-horizon three-disk table used throughout the
/// experiment suite: two radius-0.28 disks and one radius-0.16 disk placed
/// so that every corridor direction is blocked.
pub fn three_disks() -> (Vec<Scatterer>, FamilyParams) {
    let scatterers = vec![
        Scatterer::new(Vec2::new(0.0, 0.0), 0.28),
        Scatterer::new(Vec2::new(0.5, 0.5), 0.28),
        Scatterer::new(Vec2::new(0.5, 0.0), 0.16),
    ];
    let family = FamilyParams {
        tau_star: 0.05,
        kappa_star: 0.15,
        e_star: 10.0,
        k0: 60,
        delta0: 1.2e-3,
    };
    (scatterers, family)
}
