//! Holes, the open transfer operator, escape rates, the limiting
//! conditionally invariant density and exit statistics.

use crate::cone::ConeParams;
use crate::error::{MapError, OpenError};
use crate::geom::{segment_hits_disk, Vec2};
use crate::map::{apply_map, inverse_collision, next_collision, PhasePoint};
use crate::stats::mean_se;
use crate::table::BilliardTable;
use crate::transfer::{sample_srb, DensityField, MapSequence};
use rayon::prelude::*;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

/// Kinds of holes in the phase space of the billiard map.
#[derive(Clone, Debug)]
pub enum HoleKind {
    /// Type I: an arc `(r_from, r_to)` on one scatterer; the induced hole
    /// is `(r_from, r_to) x [-pi/2, pi/2]`.
    Arc {
        scatterer: usize,
        r_from: f64,
        r_to: f64,
    },
    /// Type II: the forward shadow of an open disk in the table, bounded
    /// away from the scatterers. A point is in the hole when the flight
    /// into it crossed the disk.
    Shadow { center: Vec2, radius: f64 },
    /// Gate shadow of a boxed system: a point is in the hole when its
    /// outgoing flight crosses a fold line `x = k*wx` or `y = k*wy`.
    GateCrossing { wx: f64, wy: f64 },
}

/// A hole with its membership test and exit-datum extraction.
#[derive(Clone, Debug)]
pub struct Hole {
    pub kind: HoleKind,
}

/// Where and how an absorbed trajectory left the system.
#[derive(Clone, Copy, Debug)]
pub struct ExitDatum {
    /// Position parameter along the hole boundary (arc coordinate for
    /// Type I, crossing-point coordinate for gates and shadows).
    pub position: f64,
    /// Velocity direction angle in `[0, 2*pi)`.
    pub angle: f64,
}

/// Angular or boundary exit windows.
#[derive(Clone, Copy, Debug)]
pub enum ExitWindow {
    /// Exit velocity angle within `[from, to]` (radians, mod 2*pi).
    Angle { from: f64, to: f64 },
    /// Exit position parameter within `[from, to]`.
    Boundary { from: f64, to: f64 },
}

impl ExitWindow {
    pub fn contains(&self, d: &ExitDatum) -> bool {
        match *self {
            ExitWindow::Angle { from, to } => {
                let a = d.angle.rem_euclid(2.0 * PI);
                if from <= to {
                    a >= from && a <= to
                } else {
                    a >= from || a <= to
                }
            }
            ExitWindow::Boundary { from, to } => d.position >= from && d.position <= to,
        }
    }
}

impl Hole {
    /// Type I hole: an arc on a scatterer boundary.
    pub fn make_arc(
        table: &BilliardTable,
        scatterer: usize,
        r_from: f64,
        r_to: f64,
    ) -> Result<Hole, OpenError> {
        if scatterer >= table.n_scatterers() {
            return Err(OpenError::Geometry("scatterer index out of range".into()));
        }
        let ell = table.scatterers[scatterer].arclength();
        if !(0.0 <= r_from && r_from < r_to && r_to <= ell) {
            return Err(OpenError::Geometry(format!(
                "arc [{r_from}, {r_to}] not within [0, {ell})"
            )));
        }
        Ok(Hole {
            kind: HoleKind::Arc {
                scatterer,
                r_from,
                r_to,
            },
        })
    }

    /// Type II hole: forward shadow of a disk bounded away from the
    /// scatterers.
    pub fn make_shadow(
        table: &BilliardTable,
        center: Vec2,
        radius: f64,
    ) -> Result<Hole, OpenError> {
        if radius <= 0.0 {
            return Err(OpenError::Geometry("shadow disk radius must be > 0".into()));
        }
        for (i, s) in table.scatterers.iter().enumerate() {
            let gap = table.torus.dist(center, s.center) - s.radius - radius;
            if gap <= 0.0 {
                return Err(OpenError::Geometry(format!(
                    "shadow disk touches scatterer {i} (gap {gap:.3e})"
                )));
            }
        }
        Ok(Hole {
            kind: HoleKind::Shadow { center, radius },
        })
    }

    /// Gate-shadow hole on an unfolded boxed table with fold spacings
    /// `(wx, wy)`.
    pub fn make_gate(wx: f64, wy: f64) -> Hole {
        Hole {
            kind: HoleKind::GateCrossing { wx, wy },
        }
    }

    /// Membership test. Exact for Type I; for Type II and gates the
    /// relevant flight segment is intersected exactly with the disk or
    /// fold lines.
    pub fn contains(&self, table: &BilliardTable, x: &PhasePoint) -> Result<bool, MapError> {
        match self.kind {
            HoleKind::Arc {
                scatterer,
                r_from,
                r_to,
            } => Ok(x.scatterer == scatterer && x.r > r_from && x.r < r_to),
            HoleKind::Shadow { center, radius } => {
                let c = inverse_collision(table, x)?;
                let p1 = x.position(table);
                // Reconstruct the incoming segment in the unfolded plane.
                let y = c.point;
                let v_in = y.velocity(table);
                let p0 = y.position(table);
                let p1_unfolded = p0 + v_in * c.flight_time;
                // p1_unfolded is a translate of p1; test the disk translates.
                debug_assert!(
                    table.torus.dist(p1_unfolded, p1) < 1e-6,
                    "unfolded endpoint should project onto the collision point"
                );
                let reach = c.flight_time + radius + 1.0;
                let mx = (reach / table.torus.lx).ceil() as i32;
                let my = (reach / table.torus.ly).ceil() as i32;
                for i in -mx..=mx {
                    for j in -my..=my {
                        let ctr = center
                            + Vec2::new(i as f64 * table.torus.lx, j as f64 * table.torus.ly);
                        if segment_hits_disk(p0, p1_unfolded, ctr, radius) {
                            return Ok(true);
                        }
                    }
                }
                Ok(false)
            }
            HoleKind::GateCrossing { wx, wy } => {
                let c = next_collision(table, x)?;
                let p0 = x.position(table);
                let v = x.velocity(table);
                let p1 = p0 + v * c.flight_time;
                let crosses = (p0.x / wx).floor() != (p1.x / wx).floor()
                    || (p0.y / wy).floor() != (p1.y / wy).floor();
                Ok(crosses)
            }
        }
    }

    /// Exit datum of an absorbed point: the crossing position on the hole
    /// boundary and the velocity angle of the absorbed flight.
    pub fn exit_datum(
        &self,
        table: &BilliardTable,
        x: &PhasePoint,
    ) -> Result<ExitDatum, MapError> {
        match self.kind {
            HoleKind::Arc { .. } => {
                let v = x.velocity(table);
                Ok(ExitDatum {
                    position: x.r,
                    angle: v.y.atan2(v.x).rem_euclid(2.0 * PI),
                })
            }
            HoleKind::Shadow { center, radius } => {
                let c = inverse_collision(table, x)?;
                let y = c.point;
                let v = y.velocity(table);
                let p0 = y.position(table);
                // First crossing parameter with the disk translates.
                let reach = c.flight_time + radius + 1.0;
                let mx = (reach / table.torus.lx).ceil() as i32;
                let my = (reach / table.torus.ly).ceil() as i32;
                let mut best: Option<(f64, f64)> = None;
                for i in -mx..=mx {
                    for j in -my..=my {
                        let ctr = center
                            + Vec2::new(i as f64 * table.torus.lx, j as f64 * table.torus.ly);
                        if let Some(hit) =
                            crate::geom::ray_circle_first_hit(p0, v, ctr, radius, 1e-12)
                        {
                            if hit.t <= c.flight_time
                                && best.map_or(true, |(bt, _)| hit.t < bt)
                            {
                                let q = p0 + v * hit.t;
                                let d = q - ctr;
                                best = Some((hit.t, d.y.atan2(d.x).rem_euclid(2.0 * PI)));
                            }
                        }
                    }
                }
                let (_, pos) = best.ok_or(MapError::NoCollision {
                    scatterer: x.scatterer,
                    r: x.r,
                    phi: x.phi,
                    max_flight: c.flight_time,
                })?;
                Ok(ExitDatum {
                    position: pos,
                    angle: v.y.atan2(v.x).rem_euclid(2.0 * PI),
                })
            }
            HoleKind::GateCrossing { wx, wy } => {
                let c = next_collision(table, x)?;
                let p0 = x.position(table);
                let v = x.velocity(table);
                // First fold-line crossing along the flight.
                let mut t_first = f64::INFINITY;
                let mut pos = 0.0;
                if v.x.abs() > 1e-14 {
                    let k = if v.x > 0.0 {
                        (p0.x / wx).floor() + 1.0
                    } else {
                        (p0.x / wx).ceil() - 1.0
                    };
                    let t = (k * wx - p0.x) / v.x;
                    if t > 0.0 && t < t_first {
                        t_first = t;
                        pos = (p0.y + t * v.y).rem_euclid(wy);
                    }
                }
                if v.y.abs() > 1e-14 {
                    let k = if v.y > 0.0 {
                        (p0.y / wy).floor() + 1.0
                    } else {
                        (p0.y / wy).ceil() - 1.0
                    };
                    let t = (k * wy - p0.y) / v.y;
                    if t > 0.0 && t < t_first {
                        t_first = t;
                        pos = (p0.x + t * v.x).rem_euclid(wx);
                    }
                }
                if !(t_first <= c.flight_time) {
                    return Err(MapError::NoCollision {
                        scatterer: x.scatterer,
                        r: x.r,
                        phi: x.phi,
                        max_flight: c.flight_time,
                    });
                }
                Ok(ExitDatum {
                    position: pos,
                    angle: v.y.atan2(v.x).rem_euclid(2.0 * PI),
                })
            }
        }
    }

    /// Measure of the hole under the invariant measure (exact for Type I).
    pub fn mu_srb(&self, table: &BilliardTable) -> Option<f64> {
        match self.kind {
            HoleKind::Arc { r_from, r_to, .. } => {
                Some(table.srb_norm_const() * (r_to - r_from) * 2.0)
            }
            _ => None,
        }
    }
}

/// Boundary point cloud of a hole, used by the transversality check (O2).
pub fn hole_boundary_cloud(
    table: &BilliardTable,
    hole: &Hole,
    n_points: usize,
) -> Vec<PhasePoint> {
    match hole.kind {
        HoleKind::Arc {
            scatterer,
            r_from,
            r_to,
        } => {
            let mut pts = Vec::with_capacity(2 * n_points);
            for i in 0..n_points {
                let phi = -FRAC_PI_2 + PI * i as f64 / (n_points - 1) as f64;
                pts.push(PhasePoint::new(scatterer, r_from, phi));
                pts.push(PhasePoint::new(scatterer, r_to, phi));
            }
            pts
        }
        HoleKind::Shadow { center, radius } => {
            // The hole boundary consists of images of grazing rays tangent
            // to the disk: cast tangent rays and record their first
            // collisions.
            let mut pts = Vec::new();
            for i in 0..n_points {
                let th = 2.0 * PI * i as f64 / n_points as f64;
                let q = center + Vec2::new(th.cos(), th.sin()) * radius;
                let dir = Vec2::new(-th.sin(), th.cos());
                for v in [dir, Vec2::new(0.0, 0.0) - dir] {
                    if let Some((_t, si, hit_p, _)) = table.raw_ray_cast(q, v) {
                        let s = &table.scatterers[si];
                        let r = s.r_of_point(hit_p, &table.torus);
                        let n = s.normal_at(r);
                        let tg = s.tangent_at(r);
                        let v_out = v - n * (2.0 * v.dot(n));
                        let cos_phi = -v.dot(n);
                        let sin_phi = v.dot(tg);
                        let _ = v_out;
                        if cos_phi > 0.0 {
                            pts.push(PhasePoint::new(si, r, sin_phi.atan2(cos_phi)));
                        }
                    }
                }
            }
            pts
        }
        HoleKind::GateCrossing { .. } => Vec::new(),
    }
}

/// An open composition: a map sequence with a hole applied every
/// `n_between` collisions.
#[derive(Clone)]
pub struct OpenComposition {
    pub seq: MapSequence,
    pub hole: Arc<Hole>,
    pub n_between: usize,
}

impl OpenComposition {
    pub fn constant(
        table: Arc<BilliardTable>,
        hole: Arc<Hole>,
        n_between: usize,
        n_macro_max: usize,
    ) -> Self {
        OpenComposition {
            seq: MapSequence::constant(table, n_between * n_macro_max),
            hole,
            n_between,
        }
    }

    pub fn table_at_step(&self, step: usize) -> &BilliardTable {
        self.seq.table(step.min(self.seq.len() - 1))
    }
}

/// One simulated open orbit: the survival span and the exit record.
#[derive(Clone, Copy, Debug)]
struct OrbitFate {
    /// Number of macro steps survived (checks passed).
    survived: usize,
    /// Exit datum if absorbed within the horizon.
    exit: Option<(usize, ExitDatum)>,
    /// Endpoint if alive at the horizon.
    endpoint: Option<PhasePoint>,
    weight: f64,
}

/// Simulate one open orbit up to `n_macro` hole checks. The hole is
/// checked before each block of `n_between` collisions, matching
/// `L-ring = L_S 1_{H^c}`.
fn open_orbit(
    comp: &OpenComposition,
    x0: PhasePoint,
    weight: f64,
    n_macro: usize,
) -> OrbitFate {
    let mut x = x0;
    let mut step = 0usize;
    for k in 0..n_macro {
        let table = comp.table_at_step(step);
        match comp.hole.contains(table, &x) {
            Ok(true) => {
                let exit = comp.hole.exit_datum(table, &x).ok();
                return OrbitFate {
                    survived: k,
                    exit: exit.map(|d| (k, d)),
                    endpoint: None,
                    weight,
                };
            }
            Ok(false) => {}
            Err(_) => {
                // Tangency at the membership test: zero-measure event,
                // treated as absorbed without exit datum.
                return OrbitFate {
                    survived: k,
                    exit: None,
                    endpoint: None,
                    weight,
                };
            }
        }
        for _ in 0..comp.n_between {
            let table = comp.table_at_step(step);
            match apply_map(table, &x) {
                Ok(y) => {
                    x = y;
                    step += 1;
                }
                Err(_) => {
                    return OrbitFate {
                        survived: k,
                        exit: None,
                        endpoint: None,
                        weight,
                    }
                }
            }
        }
    }
    OrbitFate {
        survived: n_macro,
        exit: None,
        endpoint: Some(x),
        weight,
    }
}

fn run_ensemble(
    comp: &OpenComposition,
    f: &DensityField,
    n_macro: usize,
    samples: usize,
    seed: u64,
) -> Vec<OrbitFate> {
    let table0 = comp.seq.table_arc(0);
    let chunk = 4096;
    let n_chunks = samples.div_ceil(chunk);
    (0..n_chunks)
        .into_par_iter()
        .flat_map_iter(|ci| {
            let mut rng = crate::stats::child_rng(seed, ci as u64);
            let take = chunk.min(samples - ci * chunk);
            let mut out = Vec::with_capacity(take);
            for _ in 0..take {
                let x0 = sample_srb(&table0, &mut rng);
                let w = f.eval(&x0);
                out.push(open_orbit(comp, x0, w, n_macro));
            }
            out
        })
        .collect()
}

/// Monte Carlo estimate of the surviving mass `mu(L-ring^n f)` for
/// `n = 0..=n_macro`, with standard errors.
pub fn survival_mass(
    comp: &OpenComposition,
    f: &DensityField,
    n_macro: usize,
    samples: usize,
    seed: u64,
) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let fates = run_ensemble(comp, f, n_macro, samples, seed);
    let n_tot = fates.len() as f64;
    let mut mass = vec![0.0; n_macro + 1];
    let mut sq = vec![0.0; n_macro + 1];
    let mut survivors = vec![0usize; n_macro + 1];
    for fate in &fates {
        for n in 0..=fate.survived.min(n_macro) {
            mass[n] += fate.weight;
            sq[n] += fate.weight * fate.weight;
            survivors[n] += 1;
        }
    }
    let se: Vec<f64> = mass
        .iter()
        .zip(sq.iter())
        .map(|(&m, &s)| {
            let mean = m / n_tot;
            let var = (s / n_tot - mean * mean).max(0.0);
            (var / n_tot).sqrt()
        })
        .collect();
    let mass: Vec<f64> = mass.iter().map(|m| m / n_tot).collect();
    (mass, se, survivors)
}

/// Escape-rate estimate.
#[derive(Clone, Debug)]
pub struct EscapeEstimate {
    pub masses: Vec<f64>,
    pub mass_se: Vec<f64>,
    pub ratios: Vec<f64>,
    pub survivors: Vec<usize>,
    /// Fitted eigenvalue `nu` of the open operator.
    pub nu_hat: f64,
    /// 95% half-width for `nu_hat` from the log-linear fit.
    pub nu_ci: f64,
    /// |nu(window1) - nu(window2)| across two half-windows.
    pub window_spread: f64,
    /// Spread of the ratio sequence over the last five steps.
    pub ratio_spread: f64,
}

/// Fit `nu` from the survival masses over the second half of the horizon.
pub fn escape_rate(
    comp: &OpenComposition,
    f: &DensityField,
    n_max: usize,
    samples: usize,
    seed: u64,
) -> Result<EscapeEstimate, OpenError> {
    let (masses, mass_se, survivors) = survival_mass(comp, f, n_max, samples, seed);
    if survivors[n_max] < 1000 {
        return Err(OpenError::Starvation {
            survivors: survivors[n_max],
            n: n_max,
            min: 1000,
        });
    }
    let ratios: Vec<f64> = (1..=n_max).map(|n| masses[n] / masses[n - 1]).collect();
    let window = |lo: usize, hi: usize| -> Option<f64> {
        let xs: Vec<f64> = (lo..=hi).map(|n| n as f64).collect();
        let ys: Vec<f64> = (lo..=hi).map(|n| masses[n].ln()).collect();
        crate::stats::linear_fit(&xs, &ys).map(|f| f.slope.exp())
    };
    let lo = n_max / 3;
    let fit = crate::stats::linear_fit(
        &(lo..=n_max).map(|n| n as f64).collect::<Vec<_>>(),
        &(lo..=n_max).map(|n| masses[n].ln()).collect::<Vec<_>>(),
    )
    .ok_or_else(|| OpenError::Geometry("fit window empty".into()))?;
    let nu_hat = fit.slope.exp();
    let nu_ci = nu_hat * (fit.slope_ci95().exp() - 1.0);
    let w1 = window(lo, lo + (n_max - lo) / 2).unwrap_or(nu_hat);
    let w2 = window(lo + (n_max - lo) / 2, n_max).unwrap_or(nu_hat);
    let tail = &ratios[ratios.len().saturating_sub(5)..];
    let ratio_spread = tail
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
        - tail.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(EscapeEstimate {
        masses,
        mass_se,
        ratios,
        survivors,
        nu_hat,
        nu_ci,
        window_spread: (w1 - w2).abs(),
        ratio_spread,
    })
}

/// Weighted sample cloud representing `L-ring^n f / mu(L-ring^n f)`.
#[derive(Clone, Debug)]
pub struct DensityCloud {
    pub points: Vec<PhasePoint>,
    /// Normalized weights summing to one.
    pub weights: Vec<f64>,
    /// Raw surviving mass estimate.
    pub mass: f64,
}

impl DensityCloud {
    /// Global integral of an observable against the cloud.
    pub fn integrate(&self, psi: impl Fn(&PhasePoint) -> f64) -> f64 {
        self.points
            .iter()
            .zip(self.weights.iter())
            .map(|(x, w)| w * psi(x))
            .sum()
    }

    /// Leafwise evaluation against a stable curve: tube-kernel estimate of
    /// `int_W h psi dm_W` (diagnostic; noisy for thin tubes).
    pub fn leafwise(
        &self,
        table: &BilliardTable,
        curve: &crate::curves::StableCurve,
        psi: impl Fn(f64) -> f64,
        tube: f64,
    ) -> f64 {
        let c = table.srb_norm_const();
        let mut acc = 0.0;
        for (x, w) in self.points.iter().zip(self.weights.iter()) {
            if x.scatterer != curve.scatterer {
                continue;
            }
            let (ra, rb) = curve.r_range();
            let ell = table.scatterers[curve.scatterer].arclength();
            let mut r = x.r;
            while r < ra - ell / 2.0 {
                r += ell;
            }
            while r > rb + ell / 2.0 {
                r -= ell;
            }
            if r < ra || r > rb {
                continue;
            }
            let dphi = x.phi - curve.phi_at(r);
            if dphi.abs() <= tube {
                // Density of the cloud with respect to mu_SRB divided by
                // the tube height, against arclength on the curve.
                acc += w * psi(curve.arclength_at_r(r))
                    / (2.0 * tube * c * x.phi.cos())
                    * (1.0 / curve.metric_factor(r));
            }
        }
        acc
    }
}

/// The surviving-orbit cloud after `n` macro steps together with the
/// eigen-relation residuals `|int L-ring h psi - nu int h psi| / int h psi`
/// for the supplied observables.
pub fn limiting_density(
    comp: &OpenComposition,
    f: &DensityField,
    n_macro: usize,
    samples: usize,
    seed: u64,
    nu_hat: f64,
    observables: &[&(dyn Fn(&PhasePoint) -> f64 + Sync)],
) -> Result<(DensityCloud, Vec<f64>), OpenError> {
    let fates = run_ensemble(comp, f, n_macro, samples, seed);
    let n_tot = fates.len() as f64;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for fate in &fates {
        if let Some(x) = fate.endpoint {
            points.push(x);
            weights.push(fate.weight);
        }
    }
    if points.len() < 1000 {
        return Err(OpenError::Starvation {
            survivors: points.len(),
            n: n_macro,
            min: 1000,
        });
    }
    let mass = weights.iter().sum::<f64>() / n_tot;
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    let cloud = DensityCloud {
        points,
        weights,
        mass,
    };

    // One more open step for the eigen-relation.
    let mut residuals = Vec::with_capacity(observables.len());
    let table0 = comp.seq.table_arc(0);
    for psi in observables {
        let mut num = 0.0;
        let mut den = 0.0;
        for (x, w) in cloud.points.iter().zip(cloud.weights.iter()) {
            den += w * psi(x);
            match comp.hole.contains(&table0, x) {
                Ok(false) => {
                    // Advance one macro block.
                    let mut y = *x;
                    let mut dead = false;
                    for _ in 0..comp.n_between {
                        match apply_map(&table0, &y) {
                            Ok(z) => y = z,
                            Err(_) => {
                                dead = true;
                                break;
                            }
                        }
                    }
                    if !dead {
                        num += w * psi(&y);
                    }
                }
                _ => {}
            }
        }
        residuals.push((num - nu_hat * den).abs() / den.abs().max(1e-300));
    }
    Ok((cloud, residuals))
}

/// Exit-statistics table: estimates of `P_f(absorbed at step n with datum
/// in the window)` together with the ratios to `nu^n`.
#[derive(Clone, Debug)]
pub struct ExitTable {
    pub probs: Vec<f64>,
    pub prob_se: Vec<f64>,
    pub ratios: Vec<f64>,
}

pub fn exit_statistics(
    comp: &OpenComposition,
    f: &DensityField,
    window: &ExitWindow,
    n_macro: usize,
    samples: usize,
    seed: u64,
    nu_hat: f64,
) -> Result<ExitTable, OpenError> {
    let fates = run_ensemble(comp, f, n_macro, samples, seed);
    let n_tot = fates.len() as f64;
    let mut hits = vec![0.0; n_macro + 1];
    let mut sq = vec![0.0; n_macro + 1];
    for fate in &fates {
        if let Some((k, d)) = fate.exit {
            if window.contains(&d) {
                hits[k] += fate.weight;
                sq[k] += fate.weight * fate.weight;
            }
        }
    }
    let probs: Vec<f64> = hits.iter().map(|h| h / n_tot).collect();
    let prob_se: Vec<f64> = hits
        .iter()
        .zip(sq.iter())
        .map(|(&h, &s)| {
            let mean = h / n_tot;
            ((s / n_tot - mean * mean).max(0.0) / n_tot).sqrt()
        })
        .collect();
    let ratios: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(n, p)| p / nu_hat.powi(n as i32))
        .collect();
    Ok(ExitTable {
        probs,
        prob_se,
        ratios,
    })
}

/// Inflated cone constants of the small-hole stability lemma:
/// `L' = A' = 2 P0^{1-q} e^{a (2 delta)^beta} A` and
/// `c' = P0^q e^{a (2 delta)^alpha} + 2 (2^q delta + 3c/4)
///      + 4 (P0+2) P0^{q-1} C_t^q`.
pub fn small_hole_constants(params: &ConeParams, p0: f64, c_t: f64) -> (f64, f64, f64) {
    let l_a = 2.0
        * p0.powf(1.0 - params.q)
        * (params.a * (2.0 * params.delta).powf(params.beta)).exp()
        * params.big_a;
    let c_new = p0.powf(params.q) * (params.a * (2.0 * params.delta).powf(params.alpha)).exp()
        + 2.0 * (2f64.powf(params.q) * params.delta + 0.75 * params.c)
        + 4.0 * (p0 + 2.0) * p0.powf(params.q - 1.0) * c_t.powf(params.q);
    (c_new, l_a, l_a)
}

/// Stable-diameter threshold of the small-hole lemma:
/// `delta * (1/(4 P0 A))^{1/q}`.
pub fn small_hole_threshold(params: &ConeParams, p0: f64) -> f64 {
    params.delta * (1.0 / (4.0 * p0 * params.big_a)).powf(1.0 / params.q)
}

/// Count the pieces into which a hole cuts a stable curve (membership
/// transitions along dense samples plus one).
pub fn cut_count(
    table: &BilliardTable,
    hole: &Hole,
    curve: &crate::curves::StableCurve,
    samples: usize,
) -> usize {
    let mut pieces = 1;
    let mut last: Option<bool> = None;
    for i in 0..samples {
        let s = curve.length() * (i as f64 + 0.5) / samples as f64;
        let r = curve.r_at_arclength(s);
        let x = curve.point_at(r, table);
        let inside = hole.contains(table, &x).unwrap_or(false);
        if let Some(prev) = last {
            if prev != inside {
                pieces += 1;
            }
        }
        last = Some(inside);
    }
    pieces
}

/// Distance from a phase point to the hole boundary: exact for arc holes,
/// nearest cloud point otherwise.
pub fn hole_boundary_distance(
    table: &BilliardTable,
    hole: &Hole,
    cloud: &[PhasePoint],
    x: &PhasePoint,
) -> f64 {
    match hole.kind {
        HoleKind::Arc {
            scatterer,
            r_from,
            r_to,
        } => {
            if x.scatterer != scatterer {
                return f64::INFINITY;
            }
            let ell = table.scatterers[scatterer].arclength();
            let d = |a: f64, b: f64| -> f64 {
                let mut v = (a - b).rem_euclid(ell);
                if v > ell / 2.0 {
                    v = ell - v;
                }
                v
            };
            d(x.r, r_from).min(d(x.r, r_to))
        }
        _ => cloud
            .iter()
            .map(|b| x.dist(b, table))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Measured transversality ratio `m_W(N_eps(dH)) / eps` for one curve.
pub fn transversality_ratio(
    table: &BilliardTable,
    hole: &Hole,
    cloud: &[PhasePoint],
    curve: &crate::curves::StableCurve,
    eps: f64,
    samples: usize,
) -> f64 {
    let mut hits = 0usize;
    for i in 0..samples {
        let s = curve.length() * (i as f64 + 0.5) / samples as f64;
        let r = curve.r_at_arclength(s);
        let x = curve.point_at(r, table);
        if hole_boundary_distance(table, hole, cloud, &x) <= eps {
            hits += 1;
        }
    }
    (hits as f64 / samples as f64) * curve.length() / eps
}

/// Estimate the transversality constant of an arc hole in the saturating
/// regime: translated copies of the dictionary curves are centered on the
/// hole boundary and probed at a neighborhood size small against their
/// r-extent.
pub fn estimate_arc_transversality(
    table: &BilliardTable,
    hole: &Hole,
    dictionary: &[Arc<crate::curves::StableCurve>],
) -> f64 {
    let HoleKind::Arc {
        scatterer, r_from, ..
    } = hole.kind
    else {
        return f64::NAN;
    };
    let k0 = table.family.k0;
    let mut sup: f64 = 0.0;
    for curve in dictionary {
        let (ra, rb) = curve.r_range();
        let r_extent = rb - ra;
        // Straddle the boundary line with the curve's midpoint.
        let shift = r_from - 0.5 * (ra + rb);
        let moved: Vec<(f64, f64)> = curve
            .samples()
            .iter()
            .map(|&(r, p)| (r + shift, p))
            .collect();
        let Ok(probe) = crate::curves::StableCurve::from_samples(scatterer, moved, k0) else {
            continue;
        };
        let eps = r_extent / 6.0;
        let ratio = transversality_ratio(table, hole, &[], &probe, eps, 1200);
        sup = sup.max(ratio);
    }
    sup
}

/// Compare two normalized survivor clouds on test integrals; returns the
/// worst absolute difference scaled by the combined standard error proxy.
pub fn clouds_agree(
    a: &DensityCloud,
    b: &DensityCloud,
    observables: &[&(dyn Fn(&PhasePoint) -> f64 + Sync)],
) -> Vec<(f64, f64)> {
    observables
        .iter()
        .map(|psi| {
            let ia = a.integrate(|x| psi(x));
            let ib = b.integrate(|x| psi(x));
            // Effective sample sizes for a crude CI.
            let na = 1.0 / a.weights.iter().map(|w| w * w).sum::<f64>();
            let nb = 1.0 / b.weights.iter().map(|w| w * w).sum::<f64>();
            let spread = (1.0 / na.sqrt() + 1.0 / nb.sqrt()) * 3.0;
            ((ia - ib).abs(), spread)
        })
        .collect()
}

/// Convenience: the mean and standard error of survivor-weighted
/// observable values (used in consistency tests).
pub fn cloud_observable_se(cloud: &DensityCloud, psi: impl Fn(&PhasePoint) -> f64) -> (f64, f64) {
    let vals: Vec<f64> = cloud.points.iter().map(|x| psi(x)).collect();
    mean_se(&vals)
}
