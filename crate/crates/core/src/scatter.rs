//! Boxed chaotic scattering with lazy gates: a rectangular box whose
//! boundaries reflect except at scheduled collision counts, unfolded onto
//! a torus billiard via reflections, plus the direct in-box simulator used
//! to cross-validate the unfolding.

use crate::error::BoxedError;
use crate::geom::{ray_circle_first_hit, Torus, Vec2};
use crate::map::PhasePoint;
use crate::stats::{child_rng, linear_fit, sample_cos_phi, LinearFit};
use crate::table::{BilliardTable, BuildOptions, FamilyParams, Scatterer};
use crate::transfer::sample_srb;
use rand::prelude::*;
use rayon::prelude::*;
use std::sync::Arc;

/// Axis-aligned box `[0, w] x [0, h]` (obstacles are given in these
/// coordinates).
#[derive(Clone, Copy, Debug)]
pub struct BoxRect {
    pub w: f64,
    pub h: f64,
}

/// Which unfolded copy a torus point belongs to.
#[derive(Clone, Copy, Debug)]
pub struct CopyInfo {
    /// Original obstacle index.
    pub obstacle: usize,
    /// Reflection parity along x and y.
    pub flip_x: bool,
    pub flip_y: bool,
}

/// Phase point of the in-box dynamics: obstacle index, clockwise arclength
/// and post-collision angle, exactly as on the torus.
#[derive(Clone, Copy, Debug)]
pub struct BoxPhase {
    pub obstacle: usize,
    pub r: f64,
    pub phi: f64,
}

/// A boxed scattering table with its unfolded torus cover.
#[derive(Clone)]
pub struct BoxedTable {
    pub rect: BoxRect,
    /// Obstacles in box coordinates.
    pub obstacles: Vec<Scatterer>,
    /// Unfolded table on the torus `(2w, 2h)`.
    pub unfolded: Arc<BilliardTable>,
    /// Metadata of each unfolded scatterer.
    pub copies: Vec<CopyInfo>,
}

/// Build the 4-copy torus cover of a boxed obstacle configuration.
///
/// Every obstacle must lie strictly inside the box or be centered on each
/// boundary line it meets (the reflection-symmetry hypothesis).
pub fn build_boxed(
    obstacles: &[Scatterer],
    rect: BoxRect,
    family: FamilyParams,
    opts: &BuildOptions,
) -> Result<BoxedTable, BoxedError> {
    let (w, h) = (rect.w, rect.h);
    if !(w > 0.0 && h > 0.0) {
        return Err(BoxedError::Invalid("box must have positive size".into()));
    }
    for (i, o) in obstacles.iter().enumerate() {
        let meets_left = o.center.x - o.radius < 0.0;
        let meets_right = o.center.x + o.radius > w;
        let meets_bottom = o.center.y - o.radius < 0.0;
        let meets_top = o.center.y + o.radius > h;
        let on = |v: f64, line: f64| (v - line).abs() < 1e-12;
        if meets_left && !on(o.center.x, 0.0) {
            return Err(BoxedError::Symmetry(i));
        }
        if meets_right && !on(o.center.x, w) {
            return Err(BoxedError::Symmetry(i));
        }
        if meets_bottom && !on(o.center.y, 0.0) {
            return Err(BoxedError::Symmetry(i));
        }
        if meets_top && !on(o.center.y, h) {
            return Err(BoxedError::Symmetry(i));
        }
    }

    // Reflected copies, deduplicated on the torus.
    let torus = Torus::new(2.0 * w, 2.0 * h);
    let mut scatterers: Vec<Scatterer> = Vec::new();
    let mut copies: Vec<CopyInfo> = Vec::new();
    for (oi, o) in obstacles.iter().enumerate() {
        for (fx, fy) in [(false, false), (true, false), (false, true), (true, true)] {
            let cx = if fx { 2.0 * w - o.center.x } else { o.center.x };
            let cy = if fy { 2.0 * h - o.center.y } else { o.center.y };
            let c = torus.wrap(Vec2::new(cx, cy));
            let dup = scatterers
                .iter()
                .any(|s| torus.dist(s.center, c) < 1e-10 && (s.radius - o.radius).abs() < 1e-12);
            if !dup {
                scatterers.push(Scatterer::new(c, o.radius));
                copies.push(CopyInfo {
                    obstacle: oi,
                    flip_x: fx,
                    flip_y: fy,
                });
            }
        }
    }

    let unfolded = BilliardTable::build_on(torus, scatterers, family, opts)?;
    Ok(BoxedTable {
        rect,
        obstacles: obstacles.to_vec(),
        unfolded: Arc::new(unfolded),
        copies,
    })
}

impl BoxedTable {
    /// Fold a torus position into the box.
    pub fn fold_point(&self, p: Vec2) -> (Vec2, bool, bool) {
        let (w, h) = (self.rect.w, self.rect.h);
        let p = self.unfolded.torus.wrap(p);
        let flip_x = p.x > w;
        let flip_y = p.y > h;
        let x = if flip_x { 2.0 * w - p.x } else { p.x };
        let y = if flip_y { 2.0 * h - p.y } else { p.y };
        (Vec2::new(x, y), flip_x, flip_y)
    }

    /// Project a torus phase point to the in-box dynamics.
    pub fn project(&self, x: &PhasePoint) -> BoxPhase {
        let table = &self.unfolded;
        let pos = x.position(table);
        let vel = x.velocity(table);
        let (p, fx, fy) = self.fold_point(pos);
        let v = Vec2::new(
            if fx { -vel.x } else { vel.x },
            if fy { -vel.y } else { vel.y },
        );
        let info = self.copies[x.scatterer];
        let o = &self.obstacles[info.obstacle];
        let d = p - o.center;
        let th = d.y.atan2(d.x);
        let r = (-th * o.radius).rem_euclid(o.arclength());
        let n = o.normal_at(r);
        let t = o.tangent_at(r);
        BoxPhase {
            obstacle: info.obstacle,
            r,
            phi: v.dot(t).atan2(v.dot(n)),
        }
    }

    /// Position and velocity of an in-box phase point.
    pub fn box_state(&self, x: &BoxPhase) -> (Vec2, Vec2) {
        let o = &self.obstacles[x.obstacle];
        let p = o.point_at(x.r);
        let n = o.normal_at(x.r);
        let t = o.tangent_at(x.r);
        (p, n * x.phi.cos() + t * x.phi.sin())
    }

    /// Validate the cover: `pi o T-tilde = T o pi` on random samples.
    /// Returns `(worst error, samples checked)`.
    pub fn cover_check(&self, samples: usize, seed: u64) -> (f64, usize) {
        let mut rng = child_rng(seed, 0);
        let mut worst: f64 = 0.0;
        let mut checked = 0;
        while checked < samples {
            let x = sample_srb(&self.unfolded, &mut rng);
            let Ok(y) = crate::map::apply_map(&self.unfolded, &x) else {
                continue;
            };
            let bx = self.project(&x);
            let expected = self.project(&y);
            let Ok(BoxEvent::Obstacle(got)) = self.next_box_collision(&bx, WallMode::Reflect)
            else {
                continue;
            };
            if got.obstacle != expected.obstacle {
                worst = worst.max(1.0);
                checked += 1;
                continue;
            }
            let ell = self.obstacles[got.obstacle].arclength();
            let mut dr = (got.r - expected.r).rem_euclid(ell);
            if dr > ell / 2.0 {
                dr -= ell;
            }
            worst = worst.max((dr * dr + (got.phi - expected.phi).powi(2)).sqrt());
            checked += 1;
        }
        (worst, checked)
    }

    /// Advance the in-box flight to the next obstacle collision. With
    /// reflecting walls the flight bounces off the box boundary; with
    /// transparent walls a boundary hit is reported as a crossing.
    pub fn next_box_collision(
        &self,
        x: &BoxPhase,
        walls: WallMode,
    ) -> Result<BoxEvent, BoxedError> {
        let (mut p, mut v) = self.box_state(x);
        trace_flight(
            &self.obstacles,
            self.rect,
            &mut p,
            &mut v,
            walls,
            Some(x.obstacle),
        )
    }
}

/// Position and velocity of a phase point over an arbitrary obstacle set.
pub fn box_phase_state(obstacles: &[Scatterer], x: &BoxPhase) -> (Vec2, Vec2) {
    let o = &obstacles[x.obstacle];
    let p = o.point_at(x.r);
    let n = o.normal_at(x.r);
    let t = o.tangent_at(x.r);
    (p, n * x.phi.cos() + t * x.phi.sin())
}

/// Trace a free flight from `p` with velocity `v` inside the box until an
/// obstacle collision or, with transparent walls, the first wall crossing.
/// Reflecting walls bounce the flight without counting as collisions.
pub fn trace_flight(
    obstacles: &[Scatterer],
    rect: BoxRect,
    p: &mut Vec2,
    v: &mut Vec2,
    walls: WallMode,
    mut skip_first: Option<usize>,
) -> Result<BoxEvent, BoxedError> {
    let (w, h) = (rect.w, rect.h);
    for _bounce in 0..10_000 {
        // Nearest obstacle hit.
        let mut hit: Option<(f64, usize, f64)> = None;
        for (oi, o) in obstacles.iter().enumerate() {
            let t_min = if skip_first == Some(oi) { 1e-9 } else { 1e-12 };
            if let Some(rc) = ray_circle_first_hit(*p, *v, o.center, o.radius, t_min) {
                if hit.map_or(true, |(bt, _, _)| rc.t < bt) {
                    hit = Some((rc.t, oi, rc.discriminant));
                }
            }
        }
        // Nearest wall hit.
        let mut t_wall = f64::INFINITY;
        let mut wall_axis = 0usize;
        if v.x > 1e-14 {
            let t = (w - p.x) / v.x;
            if t < t_wall {
                t_wall = t;
                wall_axis = 0;
            }
        } else if v.x < -1e-14 {
            let t = -p.x / v.x;
            if t < t_wall {
                t_wall = t;
                wall_axis = 0;
            }
        }
        if v.y > 1e-14 {
            let t = (h - p.y) / v.y;
            if t < t_wall {
                t_wall = t;
                wall_axis = 1;
            }
        } else if v.y < -1e-14 {
            let t = -p.y / v.y;
            if t < t_wall {
                t_wall = t;
                wall_axis = 1;
            }
        }

        match hit {
            Some((t, oi, disc)) if t < t_wall => {
                if disc < crate::map::TANGENCY_DISC_TOL {
                    return Err(BoxedError::Invalid("tangential collision".into()));
                }
                let q = *p + *v * t;
                let o = &obstacles[oi];
                let r = {
                    let d = q - o.center;
                    let th = d.y.atan2(d.x);
                    (-th * o.radius).rem_euclid(o.arclength())
                };
                let n = o.normal_at(r);
                let tg = o.tangent_at(r);
                let cos_phi = -v.dot(n);
                if cos_phi < crate::map::TANGENCY_COS_TOL {
                    return Err(BoxedError::Invalid("grazing arrival".into()));
                }
                let phi = v.dot(tg).atan2(cos_phi);
                return Ok(BoxEvent::Obstacle(BoxPhase {
                    obstacle: oi,
                    r,
                    phi,
                }));
            }
            _ => {
                if !t_wall.is_finite() {
                    return Err(BoxedError::Invalid("stalled flight".into()));
                }
                let q = *p + *v * t_wall;
                match walls {
                    WallMode::Transparent => {
                        let side = if wall_axis == 0 {
                            if v.x > 0.0 {
                                0
                            } else {
                                2
                            }
                        } else if v.y > 0.0 {
                            1
                        } else {
                            3
                        };
                        return Ok(BoxEvent::WallCrossing {
                            point: q,
                            velocity: *v,
                            side,
                        });
                    }
                    WallMode::Reflect => {
                        *p = q;
                        if wall_axis == 0 {
                            v.x = -v.x;
                        } else {
                            v.y = -v.y;
                        }
                        skip_first = None;
                    }
                }
            }
        }
    }
    Err(BoxedError::Invalid(
        "flight exceeded wall-bounce budget".into(),
    ))
}

/// Wall behavior during a flight.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WallMode {
    Reflect,
    Transparent,
}

/// Outcome of tracing one flight.
#[derive(Clone, Copy, Debug)]
pub enum BoxEvent {
    Obstacle(BoxPhase),
    /// Wall crossing with transparent walls; `side` is 0 = right,
    /// 1 = top, 2 = left, 3 = bottom.
    WallCrossing {
        point: Vec2,
        velocity: Vec2,
        side: usize,
    },
}

/// Exit record of a lazy orbit.
#[derive(Clone, Copy, Debug)]
pub struct ExitRecord {
    /// Macro step at which the exit happened.
    pub macro_step: usize,
    /// Crossing point on the box boundary.
    pub point: Vec2,
    /// Which side was crossed.
    pub side: usize,
    /// Velocity angle at exit.
    pub angle: f64,
}

/// Outcome of a lazy-gate orbit.
#[derive(Clone, Copy, Debug)]
pub struct LazyOutcome {
    pub exit: Option<ExitRecord>,
    /// Whether the escaped trajectory re-entered the box (must never
    /// happen).
    pub re_entered: bool,
    /// Tangency encountered (orbit skipped).
    pub skipped: bool,
}

/// Simulate the lazy-gate dynamics: `n_lazy` trapped collisions per macro
/// step, with the walls transparent during the flight that opens each
/// macro step. After an exit the trajectory is followed through any
/// collisions with obstacle parts outside the box to certify that it
/// never re-enters.
pub fn lazy_orbit(
    boxed: &BoxedTable,
    x0: BoxPhase,
    n_macro: usize,
    n_lazy: usize,
) -> LazyOutcome {
    let mut x = x0;
    for k in 0..n_macro {
        // Opening flight of the macro step.
        match boxed.next_box_collision(&x, WallMode::Transparent) {
            Ok(BoxEvent::Obstacle(y)) => {
                x = y;
            }
            Ok(BoxEvent::WallCrossing {
                point,
                velocity,
                side,
            }) => {
                let re_entered = follow_escape(boxed, point, velocity);
                return LazyOutcome {
                    exit: Some(ExitRecord {
                        macro_step: k,
                        point,
                        side,
                        angle: velocity.y.atan2(velocity.x).rem_euclid(2.0 * std::f64::consts::PI),
                    }),
                    re_entered,
                    skipped: false,
                };
            }
            Err(_) => {
                return LazyOutcome {
                    exit: None,
                    re_entered: false,
                    skipped: true,
                }
            }
        }
        // Remaining trapped collisions.
        for _ in 1..n_lazy {
            match boxed.next_box_collision(&x, WallMode::Reflect) {
                Ok(BoxEvent::Obstacle(y)) => x = y,
                _ => {
                    return LazyOutcome {
                        exit: None,
                        re_entered: false,
                        skipped: true,
                    }
                }
            }
        }
    }
    LazyOutcome {
        exit: None,
        re_entered: false,
        skipped: false,
    }
}

/// Follow an escaped trajectory in the plane against the obstacle parts
/// sticking out of the box; returns whether it ever re-enters the box.
fn follow_escape(boxed: &BoxedTable, mut p: Vec2, mut v: Vec2) -> bool {
    let (w, h) = (boxed.rect.w, boxed.rect.h);
    let inside = |q: Vec2| q.x > 0.0 && q.x < w && q.y > 0.0 && q.y < h;
    let far = (w * w + h * h).sqrt() * 3.0;
    for _ in 0..200 {
        // Nearest obstacle hit in the plane.
        let mut hit: Option<(f64, usize)> = None;
        for (oi, o) in boxed.obstacles.iter().enumerate() {
            if let Some(rc) = ray_circle_first_hit(p, v, o.center, o.radius, 1e-9) {
                if hit.map_or(true, |(bt, _)| rc.t < bt) {
                    hit = Some((rc.t, oi));
                }
            }
        }
        match hit {
            None => {
                // Free flight to infinity; sample the segment for
                // re-entry (straight line can cross the box region).
                for s in 1..200 {
                    let q = p + v * (far * s as f64 / 200.0);
                    if inside(q) {
                        return true;
                    }
                }
                return false;
            }
            Some((t, oi)) => {
                // Check the straight segment for box passage.
                for s in 1..50 {
                    let q = p + v * (t * s as f64 / 50.0);
                    if inside(q) {
                        return true;
                    }
                }
                let q = p + v * t;
                let o = &boxed.obstacles[oi];
                let n = (q - o.center).normalized();
                v = v - n * (2.0 * v.dot(n));
                p = q;
            }
        }
    }
    false
}

/// Survival statistics of a beam of lazy orbits started from the
/// projected invariant measure.
#[derive(Clone, Debug)]
pub struct BeamSurvival {
    /// Survival fraction after each macro step.
    pub survival: Vec<f64>,
    pub survivors: Vec<usize>,
    /// Log-linear fit of the survival tail.
    pub fit: Option<LinearFit>,
    pub re_entries: usize,
    pub skipped: usize,
}

pub fn beam_survival(
    boxed: &BoxedTable,
    n_macro: usize,
    n_lazy: usize,
    samples: usize,
    seed: u64,
) -> BeamSurvival {
    let chunk = 2048;
    let n_chunks = samples.div_ceil(chunk);
    let fates: Vec<(usize, bool, bool)> = (0..n_chunks)
        .into_par_iter()
        .flat_map_iter(|ci| {
            let mut rng = child_rng(seed, ci as u64);
            let take = chunk.min(samples - ci * chunk);
            let mut out = Vec::with_capacity(take);
            for _ in 0..take {
                let x_t = sample_srb(&boxed.unfolded, &mut rng);
                let x0 = boxed.project(&x_t);
                let outcome = lazy_orbit(boxed, x0, n_macro, n_lazy);
                let steps = outcome.exit.map_or(n_macro, |e| e.macro_step);
                out.push((steps, outcome.re_entered, outcome.skipped));
            }
            out
        })
        .collect();
    let n_tot = fates.len() as f64;
    let mut survivors = vec![0usize; n_macro + 1];
    let mut re_entries = 0;
    let mut skipped = 0;
    for &(steps, re, skip) in &fates {
        for s in survivors.iter_mut().take(steps.min(n_macro) + 1) {
            *s += 1;
        }
        if re {
            re_entries += 1;
        }
        if skip {
            skipped += 1;
        }
    }
    let survival: Vec<f64> = survivors.iter().map(|&s| s as f64 / n_tot).collect();
    let lo = n_macro / 3;
    let xs: Vec<f64> = (lo..=n_macro).map(|n| n as f64).collect();
    let ys: Vec<f64> = (lo..=n_macro).map(|n| survival[n].max(1e-300).ln()).collect();
    let fit = linear_fit(&xs, &ys);
    BeamSurvival {
        survival,
        survivors,
        fit,
        re_entries,
        skipped,
    }
}

/// The reference boxed configuration: a unit box with quarter-disk corner
/// obstacles of radius `r` and a central disk of radius `rho`. Satisfies
/// the gate constraints of the lazy Lorentz cell.
pub fn lorentz_cell_box(r: f64, rho: f64, center: Vec2) -> (Vec<Scatterer>, BoxRect) {
    let obstacles = vec![
        Scatterer::new(Vec2::new(0.0, 0.0), r),
        Scatterer::new(Vec2::new(1.0, 0.0), r),
        Scatterer::new(Vec2::new(1.0, 1.0), r),
        Scatterer::new(Vec2::new(0.0, 1.0), r),
        Scatterer::new(center, rho),
    ];
    (obstacles, BoxRect { w: 1.0, h: 1.0 })
}

/// Family parameters used for unfolded Lorentz-cell tables.
pub fn lorentz_cell_family(tau_star: f64) -> FamilyParams {
    FamilyParams {
        tau_star,
        kappa_star: 0.2,
        e_star: 10.0,
        k0: 60,
        delta0: 1.2e-3,
    }
}

/// Sample a uniform initial condition on the in-box Poincare section with
/// the invariant density `cos(phi)`, restricted to the physical
/// (inside-the-box) part of each obstacle boundary.
pub fn sample_box_phase(
    boxed: &BoxedTable,
    rng: &mut impl Rng,
) -> BoxPhase {
    // In-box arc fraction per obstacle: quarter for corner disks, full for
    // interior disks — derived from the copy multiplicity.
    let mut fractions = vec![0.0f64; boxed.obstacles.len()];
    for c in boxed.copies.iter() {
        fractions[c.obstacle] += 0.25;
    }
    let weights: Vec<f64> = boxed
        .obstacles
        .iter()
        .zip(&fractions)
        .map(|(o, f)| o.arclength() * f)
        .collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut oi = 0;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            oi = i;
            break;
        }
        u -= w;
        oi = i;
    }
    // Rejection sample the in-box portion of the boundary.
    let o = &boxed.obstacles[oi];
    let (w, h) = (boxed.rect.w, boxed.rect.h);
    loop {
        let r = rng.gen::<f64>() * o.arclength();
        let p = o.point_at(r);
        if p.x >= 0.0 && p.x <= w && p.y >= 0.0 && p.y <= h {
            return BoxPhase {
                obstacle: oi,
                r,
                phi: sample_cos_phi(rng),
            };
        }
    }
}
