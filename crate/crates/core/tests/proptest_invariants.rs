//! Property-based invariants for the geometric core.

use proptest::prelude::*;
use sinai::curves::StableCurve;
use sinai::geom::{Torus, Vec2};
use sinai::map::{apply_inverse, apply_map, homogeneity_index, Homogeneity, PhasePoint};
use sinai::table::{three_disks, BilliardTable, BuildOptions};
use std::sync::Arc;

fn reference_table() -> Arc<BilliardTable> {
    static TABLE: std::sync::OnceLock<Arc<BilliardTable>> = std::sync::OnceLock::new();
    TABLE
        .get_or_init(|| {
            let (s, f) = three_disks();
            Arc::new(BilliardTable::build(s, f, &BuildOptions::default()).unwrap())
        })
        .clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn torus_wrap_is_idempotent_and_in_domain(x in -10.0..10.0f64, y in -10.0..10.0f64) {
        let t = Torus::new(1.0, 2.0);
        let p = t.wrap(Vec2::new(x, y));
        prop_assert!(p.x >= 0.0 && p.x < 1.0 && p.y >= 0.0 && p.y < 2.0);
        let q = t.wrap(p);
        prop_assert!((p.x - q.x).abs() < 1e-12 && (p.y - q.y).abs() < 1e-12);
    }

    #[test]
    fn min_image_is_shortest(x in -3.0..3.0f64, y in -3.0..3.0f64, i in -2i32..3, j in -2i32..3) {
        let t = Torus::UNIT;
        let d = Vec2::new(x, y);
        let m = t.min_image(d);
        let alt = Vec2::new(d.x + i as f64, d.y + j as f64);
        prop_assert!(m.norm() <= alt.norm() + 1e-12);
    }

    #[test]
    fn homogeneity_strips_tile_the_interval(u in 1e-6..0.24f64) {
        // Any angle off the bulk belongs to a strip with index >= k0 whose
        // bounds contain it.
        let k0 = 3u32;
        let phi = std::f64::consts::FRAC_PI_2 - u;
        match homogeneity_index(phi, k0) {
            Homogeneity::Bulk => {
                prop_assert!(u > 1.0 / (k0 as f64 * k0 as f64) - 1e-12);
            }
            Homogeneity::Strip(k) => {
                prop_assert!(k >= k0 as i32);
                let kf = k as f64;
                prop_assert!(u <= 1.0 / (kf * kf) + 1e-12);
                prop_assert!(u >= 1.0 / ((kf + 1.0) * (kf + 1.0)) - 1e-12);
            }
        }
    }

    #[test]
    fn homogeneity_is_symmetric(u in 1e-6..0.24f64) {
        let k0 = 5u32;
        let plus = homogeneity_index(std::f64::consts::FRAC_PI_2 - u, k0);
        let minus = homogeneity_index(-std::f64::consts::FRAC_PI_2 + u, k0);
        match (plus, minus) {
            (Homogeneity::Bulk, Homogeneity::Bulk) => {}
            (Homogeneity::Strip(a), Homogeneity::Strip(b)) => prop_assert_eq!(a, -b),
            _ => prop_assert!(false, "asymmetric classification"),
        }
    }

    #[test]
    fn involution_undoes_the_map(si in 0usize..3, u in 0.0..1.0f64, phi in -1.4..1.4f64) {
        let table = reference_table();
        let r = u * table.scatterers[si].arclength();
        let x = PhasePoint::new(si, r, phi);
        if let Ok(y) = apply_map(&table, &x) {
            if let Ok(back) = apply_inverse(&table, &y) {
                prop_assert!(x.dist(&back, &table) < 1e-8);
            }
        }
    }

    #[test]
    fn curve_dump_round_trips(
        si in 0usize..3,
        u in 0.05..0.9f64,
        phi in -1.0..1.0f64,
        frac in 0.2..1.0f64,
    ) {
        let table = reference_table();
        let (lo, hi) = table.family.stable_slope_bounds();
        let slope = 0.5 * (lo + hi);
        let r0 = u * table.scatterers[si].arclength();
        let len = frac * table.family.delta0;
        if let Ok(w) = StableCurve::segment(si, r0, phi, slope, len, 9, table.family.k0) {
            let text = w.dump();
            let parsed = StableCurve::parse(&text, table.family.k0).unwrap();
            prop_assert_eq!(w.samples(), parsed.samples());
            prop_assert_eq!(w.scatterer, parsed.scatterer);
            prop_assert!((w.length() - parsed.length()).abs() < 1e-15);
        }
    }
}
