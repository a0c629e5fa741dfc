//! Random Lorentz gas with lazy gates: a lattice of unit cells with fixed
//! corner obstacles and a quenched random central obstacle per cell; the
//! cell-to-cell itinerary is a random walk in a random environment.

use crate::error::LorentzError;
use crate::geom::Vec2;
use crate::scatter::{box_phase_state, trace_flight, BoxEvent, BoxPhase, BoxRect, WallMode};
use crate::stats::{child_rng, mean_se, sample_cos_phi};
use crate::table::Scatterer;
use rand::prelude::*;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// The five gate symbols: stay, +e1, +e2, -e1, -e2.
pub const W_STAY: u8 = 0;
pub const W_RIGHT: u8 = 1;
pub const W_UP: u8 = 2;
pub const W_LEFT: u8 = 3;
pub const W_DOWN: u8 = 4;

/// Lattice displacement of a gate symbol.
pub fn symbol_step(w: u8) -> (i64, i64) {
    match w {
        W_RIGHT => (1, 0),
        W_UP => (0, 1),
        W_LEFT => (-1, 0),
        W_DOWN => (0, -1),
        _ => (0, 0),
    }
}

/// Configuration of the random Lorentz gas.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LorentzConfig {
    /// Corner obstacle radius, `1/3 <= r < 1/2`.
    pub r: f64,
    /// Central obstacle radius, `1 - 2r < rho < sqrt(2)/2 - r`.
    pub rho: f64,
    /// Safety margin of the admissible center square.
    pub eps_star: f64,
    /// Laziness: collisions per macro step.
    pub n_lazy: usize,
    /// Seed of the quenched environment.
    pub seed: u64,
}

impl LorentzConfig {
    pub fn validate(&self) -> Result<(), LorentzError> {
        if !(self.r >= 1.0 / 3.0 && self.r < 0.5) {
            return Err(LorentzError::Config(format!(
                "need 1/3 <= r < 1/2, got r = {}",
                self.r
            )));
        }
        let hi = std::f64::consts::FRAC_1_SQRT_2 - self.r;
        if !(self.rho > 1.0 - 2.0 * self.r && self.rho < hi) {
            return Err(LorentzError::Config(format!(
                "need 1 - 2r < rho < sqrt(2)/2 - r, got rho = {} with bounds ({}, {})",
                self.rho,
                1.0 - 2.0 * self.r,
                hi
            )));
        }
        if self.eps_star <= 0.0 {
            return Err(LorentzError::Config("eps_star must be positive".into()));
        }
        let (lo, hi) = self.center_bounds();
        if lo > hi {
            return Err(LorentzError::Config(format!(
                "admissible center square empty: [{lo}, {hi}]"
            )));
        }
        if self.n_lazy == 0 {
            return Err(LorentzError::Config("n_lazy must be at least 1".into()));
        }
        Ok(())
    }

    /// Derived minimum flight time `tau_* = min(eps_*, 1 - 2r)`.
    pub fn tau_star(&self) -> f64 {
        self.eps_star.min(1.0 - 2.0 * self.r)
    }

    /// Admissible square for central-obstacle coordinates:
    /// `1 - (r + rho - eps_*) <= c <= r + rho - eps_*`.
    pub fn center_bounds(&self) -> (f64, f64) {
        let hi = self.r + self.rho - self.eps_star;
        (1.0 - hi, hi)
    }

    /// Quenched center draw for the cell at lattice coordinate `z`: a pure
    /// function of the seed and the cell, i.i.d. uniform over the
    /// admissible square.
    pub fn center_of(&self, z: (i64, i64)) -> Vec2 {
        let key = (z.0 as u64).wrapping_mul(0x9e3779b97f4a7c15)
            ^ (z.1 as u64).wrapping_mul(0xc2b2ae3d27d4eb4f);
        let mut rng = child_rng(self.seed, key);
        let (lo, hi) = self.center_bounds();
        Vec2::new(
            lo + (hi - lo) * rng.gen::<f64>(),
            lo + (hi - lo) * rng.gen::<f64>(),
        )
    }

    /// Obstacle list of the cell at `z` (under an environment translation
    /// by `offset`).
    pub fn cell_obstacles(&self, z: (i64, i64), offset: (i64, i64)) -> Vec<Scatterer> {
        let center = self.center_of((z.0 + offset.0, z.1 + offset.1));
        vec![
            Scatterer::new(Vec2::new(0.0, 0.0), self.r),
            Scatterer::new(Vec2::new(1.0, 0.0), self.r),
            Scatterer::new(Vec2::new(1.0, 1.0), self.r),
            Scatterer::new(Vec2::new(0.0, 1.0), self.r),
            Scatterer::new(center, self.rho),
        ]
    }
}

const CELL: BoxRect = BoxRect { w: 1.0, h: 1.0 };

/// Reference configuration for the walk experiments. The parameter
/// equations alone admit configurations with a thin two-gate channel past
/// a corner obstacle; blocking every adjacent-gate crossing with the
/// corner disks requires `r >= 1/(1+sqrt(2))`, and keeping the central
/// obstacle clear of the corners bounds `r + rho`. These values satisfy
/// both with margin.
pub fn reference_lorentz_config() -> LorentzConfig {
    LorentzConfig {
        r: 0.42,
        rho: 0.17,
        eps_star: 0.05,
        n_lazy: 2,
        seed: 2024,
    }
}

/// One trajectory of the lattice walk.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkRecord {
    /// Visited lattice sites `z_0 .. z_n`.
    pub zs: Vec<(i64, i64)>,
    /// Per-step gate symbols `w_{k_0} .. w_{k_{n-1}}`.
    pub symbols: Vec<u8>,
    /// Total obstacle collisions simulated.
    pub collisions: usize,
    /// Whether a tangency guard truncated the walk.
    pub truncated: bool,
    /// Double-gate crossings observed (must stay zero).
    pub gate_violations: usize,
}

/// Sample an initial condition on the cell's Poincare section from the
/// invariant density `cos(phi)`, restricted to the in-cell boundary arcs.
pub fn sample_cell_phase(obstacles: &[Scatterer], rng: &mut impl Rng) -> BoxPhase {
    // Corner disks contribute quarter arcs, the central disk its full
    // circle.
    let weights: Vec<f64> = obstacles
        .iter()
        .enumerate()
        .map(|(i, o)| {
            if i < 4 {
                o.arclength() / 4.0
            } else {
                o.arclength()
            }
        })
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
    let o = &obstacles[oi];
    loop {
        let r = rng.gen::<f64>() * o.arclength();
        let p = o.point_at(r);
        if p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0 {
            return BoxPhase {
                obstacle: oi,
                r,
                phi: sample_cos_phi(rng),
            };
        }
    }
}

/// Simulate the lazy-gate cell dynamics for `n_macro` macro steps of
/// `n_lazy` collisions each. The gate window is the flight opening each
/// macro step; central obstacles are drawn lazily per visited cell from
/// the quenched environment.
pub fn lorentz_walk(
    config: &LorentzConfig,
    x0: BoxPhase,
    n_macro: usize,
    offset: (i64, i64),
) -> Result<WalkRecord, LorentzError> {
    let mut z = (0i64, 0i64);
    let mut zs = vec![z];
    let mut symbols = Vec::with_capacity(n_macro);
    let mut collisions = 0usize;
    let mut gate_violations = 0usize;
    let mut obstacles = config.cell_obstacles(z, offset);
    let mut x = x0;
    let truncate = |zs: Vec<(i64, i64)>, symbols: Vec<u8>, collisions, gate_violations| {
        Ok(WalkRecord {
            zs,
            symbols,
            collisions,
            truncated: true,
            gate_violations,
        })
    };
    for _ in 0..n_macro {
        // Opening flight: gates transparent.
        let (mut p, mut v) = box_phase_state(&obstacles, &x);
        let mut symbol = W_STAY;
        let first = trace_flight(
            &obstacles,
            CELL,
            &mut p,
            &mut v,
            WallMode::Transparent,
            Some(x.obstacle),
        );
        match first {
            Ok(BoxEvent::Obstacle(y)) => {
                x = y;
                collisions += 1;
            }
            Ok(BoxEvent::WallCrossing {
                point,
                velocity,
                side,
            }) => {
                symbol = match side {
                    0 => W_RIGHT,
                    1 => W_UP,
                    2 => W_LEFT,
                    _ => W_DOWN,
                };
                let (dz_x, dz_y) = symbol_step(symbol);
                z = (z.0 + dz_x, z.1 + dz_y);
                obstacles = config.cell_obstacles(z, offset);
                // Continue the same flight in the neighbor cell.
                let mut q = match side {
                    0 => Vec2::new(0.0, point.y),
                    1 => Vec2::new(point.x, 0.0),
                    2 => Vec2::new(1.0, point.y),
                    _ => Vec2::new(point.x, 1.0),
                };
                let mut vv = velocity;
                match trace_flight(&obstacles, CELL, &mut q, &mut vv, WallMode::Transparent, None)
                {
                    Ok(BoxEvent::Obstacle(y)) => {
                        x = y;
                        collisions += 1;
                    }
                    Ok(BoxEvent::WallCrossing { .. }) => {
                        gate_violations += 1;
                        return truncate(zs, symbols, collisions, gate_violations);
                    }
                    Err(_) => return truncate(zs, symbols, collisions, gate_violations),
                }
            }
            Err(_) => return truncate(zs, symbols, collisions, gate_violations),
        }
        // Remaining trapped collisions of the block.
        for _ in 1..config.n_lazy {
            let next = {
                let (mut p, mut v) = box_phase_state(&obstacles, &x);
                trace_flight(
                    &obstacles,
                    CELL,
                    &mut p,
                    &mut v,
                    WallMode::Reflect,
                    Some(x.obstacle),
                )
            };
            match next {
                Ok(BoxEvent::Obstacle(y)) => {
                    x = y;
                    collisions += 1;
                }
                _ => return truncate(zs, symbols, collisions, gate_violations),
            }
        }
        symbols.push(symbol);
        zs.push(z);
    }
    Ok(WalkRecord {
        zs,
        symbols,
        collisions,
        truncated: false,
        gate_violations,
    })
}

/// Run an ensemble of walkers with per-walker seeded initial conditions;
/// the environment is shared (quenched).
pub fn walk_ensemble(
    config: &LorentzConfig,
    n_macro: usize,
    walkers: usize,
    walker_seed: u64,
    offset: (i64, i64),
) -> Vec<WalkRecord> {
    (0..walkers)
        .into_par_iter()
        .map(|wi| {
            let mut rng = child_rng(walker_seed, wi as u64);
            let obstacles = config.cell_obstacles((0, 0), offset);
            let x0 = sample_cell_phase(&obstacles, &mut rng);
            lorentz_walk(config, x0, n_macro, offset).expect("validated config")
        })
        .collect()
}

/// Mean displacement statistics of an ensemble.
#[derive(Clone, Copy, Debug)]
pub struct DriftStats {
    pub mean: (f64, f64),
    pub se: (f64, f64),
    pub walkers: usize,
    pub truncated: usize,
}

pub fn drift_stats(records: &[WalkRecord]) -> DriftStats {
    let xs: Vec<f64> = records
        .iter()
        .map(|r| r.zs.last().map_or(0.0, |z| z.0 as f64))
        .collect();
    let ys: Vec<f64> = records
        .iter()
        .map(|r| r.zs.last().map_or(0.0, |z| z.1 as f64))
        .collect();
    let (mx, sx) = mean_se(&xs);
    let (my, sy) = mean_se(&ys);
    DriftStats {
        mean: (mx, my),
        se: (sx, sy),
        walkers: records.len(),
        truncated: records.iter().filter(|r| r.truncated).count(),
    }
}

/// One row of the quenched memory-loss table.
#[derive(Clone, Copy, Debug)]
pub struct MemoryRow {
    /// Time gap `n - m`.
    pub gap: usize,
    /// Conditional probability in the original environment.
    pub p_original: f64,
    /// Conditional probability in the shifted environment.
    pub p_shifted: f64,
    pub diff: f64,
    pub se: f64,
    pub matches_original: usize,
    pub matches_shifted: usize,
}

/// Quenched memory loss along a fixed path: compares
/// `P_omega(w_next | w_{k_0} .. w_{k_{n-1}})` against
/// `P_{xi_{z_m} omega}(w_next | w_{k_m} .. w_{k_{n-1}})` for the path that
/// crosses one gate at step 0 (`prefix_head`) and then stays, with
/// `m = 1`. Conditioning on a directional continuation (`w_next` equal to
/// the entry direction) probes the forward-scattering memory of the entry
/// beam, the sharpest observable difference.
pub fn memory_loss_lorentz(
    config: &LorentzConfig,
    prefix_head: u8,
    w_next: u8,
    m: usize,
    n_max: usize,
    walkers: usize,
    walker_seed: u64,
    min_matches: usize,
) -> Result<Vec<MemoryRow>, LorentzError> {
    config.validate()?;
    assert!(m >= 1 && n_max >= m);
    assert!(prefix_head != W_STAY, "the path must move at step 0");
    // z_m for the path (head, stay, stay, ...).
    let z_m = symbol_step(prefix_head);

    let ens_a = walk_ensemble(config, n_max + 1, walkers, walker_seed, (0, 0));
    let ens_b = walk_ensemble(config, n_max + 1 - m, walkers, walker_seed ^ 0xb0b, z_m);

    let mut rows = Vec::new();
    for n in m..=n_max {
        // Original: prefix = head followed by n-1 stays, then w_next.
        let mut match_a = 0usize;
        let mut hit_a = 0usize;
        for rec in &ens_a {
            if rec.symbols.len() <= n {
                continue;
            }
            let ok = rec.symbols[0] == prefix_head
                && rec.symbols[1..n].iter().all(|&s| s == W_STAY);
            if ok {
                match_a += 1;
                if rec.symbols[n] == w_next {
                    hit_a += 1;
                }
            }
        }
        // Shifted: prefix = n-m stays, walker already in the target cell.
        let mut match_b = 0usize;
        let mut hit_b = 0usize;
        for rec in &ens_b {
            if rec.symbols.len() <= n - m {
                continue;
            }
            let ok = rec.symbols[..n - m].iter().all(|&s| s == W_STAY);
            if ok {
                match_b += 1;
                if rec.symbols[n - m] == w_next {
                    hit_b += 1;
                }
            }
        }
        if match_a < min_matches || match_b < min_matches {
            break;
        }
        let pa = hit_a as f64 / match_a as f64;
        let pb = hit_b as f64 / match_b as f64;
        let se = (pa * (1.0 - pa) / match_a as f64 + pb * (1.0 - pb) / match_b as f64).sqrt();
        rows.push(MemoryRow {
            gap: n - m,
            p_original: pa,
            p_shifted: pb,
            diff: (pa - pb).abs(),
            se,
            matches_original: match_a,
            matches_shifted: match_b,
        });
    }
    if rows.len() < 3 {
        return Err(LorentzError::Starvation {
            matches: rows.len(),
            min: 3,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_config() -> LorentzConfig {
        reference_lorentz_config()
    }

    #[test]
    fn config_validation_bounds() {
        // The worked validation example: r = 0.4, rho = 0.25, eps_* = 0.05
        // satisfies the parameter equations with tau_* = 0.05.
        let cfg = LorentzConfig {
            r: 0.4,
            rho: 0.25,
            eps_star: 0.05,
            n_lazy: 2,
            seed: 2024,
        };
        cfg.validate().unwrap();
        assert!((cfg.tau_star() - 0.05).abs() < 1e-15);
        let (lo, hi) = cfg.center_bounds();
        assert!((lo - 0.4).abs() < 1e-12 && (hi - 0.6).abs() < 1e-12);

        let mut bad = cfg;
        bad.r = 0.3;
        assert!(bad.validate().is_err());
        let mut bad = cfg;
        bad.rho = 0.19;
        assert!(bad.validate().is_err());
        let mut bad = cfg;
        bad.rho = 0.31;
        assert!(bad.validate().is_err());
        reference_config().validate().unwrap();
    }

    #[test]
    fn quenched_centers_are_deterministic_and_admissible() {
        let cfg = reference_config();
        let (lo, hi) = cfg.center_bounds();
        for z in [(0, 0), (5, -3), (-17, 9)] {
            let c1 = cfg.center_of(z);
            let c2 = cfg.center_of(z);
            assert_eq!(c1, c2);
            assert!(c1.x >= lo && c1.x <= hi && c1.y >= lo && c1.y <= hi);
        }
        assert_ne!(cfg.center_of((0, 0)), cfg.center_of((1, 0)));
    }

    #[test]
    fn walk_is_bit_for_bit_reproducible() {
        let cfg = reference_config();
        let a = walk_ensemble(&cfg, 40, 32, 7, (0, 0));
        let b = walk_ensemble(&cfg, 40, 32, 7, (0, 0));
        assert_eq!(a, b);
    }

    #[test]
    fn lattice_steps_match_symbols() {
        let cfg = reference_config();
        let records = walk_ensemble(&cfg, 60, 64, 13, (0, 0));
        let mut moved = 0;
        for rec in &records {
            assert!(rec.gate_violations == 0, "double gate crossing observed");
            for (j, &w) in rec.symbols.iter().enumerate() {
                let dz = symbol_step(w);
                assert_eq!(
                    (rec.zs[j + 1].0 - rec.zs[j].0, rec.zs[j + 1].1 - rec.zs[j].1),
                    dz
                );
                if w != W_STAY {
                    moved += 1;
                }
            }
        }
        assert!(moved > 0, "no transfers in 64 walks of 60 steps");
    }

    #[test]
    fn laziness_spaces_transfers_by_block_length() {
        let mut cfg = reference_config();
        cfg.n_lazy = 7;
        let records = walk_ensemble(&cfg, 40, 48, 23, (0, 0));
        for rec in &records {
            if rec.truncated {
                continue;
            }
            assert_eq!(rec.symbols.len(), 40);
            // Exactly n_lazy collisions per macro step: transfers are at
            // least a full block apart in collision count.
            assert_eq!(rec.collisions, 40 * 7);
        }
    }

    #[test]
    fn no_drift_at_modest_scale() {
        let cfg = reference_config();
        let records = walk_ensemble(&cfg, 200, 2000, 31, (0, 0));
        let stats = drift_stats(&records);
        assert!(
            stats.mean.0.abs() <= 3.0 * stats.se.0 + 1e-9,
            "x-drift {} vs se {}",
            stats.mean.0,
            stats.se.0
        );
        assert!(
            stats.mean.1.abs() <= 3.0 * stats.se.1 + 1e-9,
            "y-drift {} vs se {}",
            stats.mean.1,
            stats.se.1
        );
    }

    #[test]
    fn memory_loss_rows_form() {
        let cfg = reference_config();
        let rows = memory_loss_lorentz(&cfg, W_RIGHT, W_RIGHT, 1, 7, 60_000, 41, 200).unwrap();
        assert!(rows.len() >= 3);
        for r in &rows {
            assert!(r.p_original >= 0.0 && r.p_original <= 1.0);
            assert!(r.p_shifted >= 0.0 && r.p_shifted <= 1.0);
        }
    }
}
