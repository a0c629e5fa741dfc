//! Mass conservation through the leafwise machinery: summing leafwise
//! transfer integrals over a foliation that disintegrates the invariant
//! measure reproduces the global integral.
//!
//! The invariant measure is disintegrated over parallel stable segments
//! of a fixed shallow cone slope `m`: with leaves parametrized by the
//! intercept `b = phi - m r`,
//! `int f dmu = c / sqrt(1+m^2) * int db int_{W_b} f cos(phi) dm_W`.

use rayon::prelude::*;
use sinai::cone::TestFunction;
use sinai::curves::StableCurve;
use sinai::table::{three_disks, BilliardTable, BuildOptions};
use sinai::transfer::{
    leafwise_transfer, mu_srb_integral, DensityField, LeafwiseOptions, MapSequence,
};
use std::sync::Arc;

fn leaf_sum(
    table: &Arc<BilliardTable>,
    f: &DensityField,
    seq: &MapSequence,
    slope: f64,
    db: f64,
) -> f64 {
    let phi_max = 1.3f64;
    let c = table.srb_norm_const();
    let norm = (1.0 + slope * slope).sqrt();
    let opts = LeafwiseOptions {
        pointwise_panels: 2,
        alarm_tol: 1.0,
        ..Default::default()
    };
    // The change-of-variables identity holds for leaves of any length;
    // long pieces keep the fan-localization cost proportional to the
    // foliated mass instead of the piece count.
    let piece_len = 40.0 * table.family.delta0;
    let mut total = 0.0;
    for si in 0..table.n_scatterers() {
        let ell = table.scatterers[si].arclength();
        let b_lo = -phi_max - slope.abs() * ell;
        let b_hi = phi_max + slope.abs() * ell;
        let n_b = ((b_hi - b_lo) / db).ceil() as usize;
        let rows: Vec<f64> = (0..n_b)
            .into_par_iter()
            .map(|ib| {
                let b = b_lo + (ib as f64 + 0.5) * db;
                // The leaf {phi = m r + b} clipped to |phi| <= phi_max.
                // With negative slope, phi decreases in r.
                let r_enter = ((phi_max - b) / slope).max(0.0);
                let r_exit = ((-phi_max - b) / slope).min(ell);
                if r_exit <= r_enter {
                    return 0.0;
                }
                let arc = (r_exit - r_enter) * norm;
                let n_pieces = (arc / piece_len).ceil() as usize;
                let mut acc = 0.0;
                for p in 0..n_pieces {
                    let ra = r_enter + (r_exit - r_enter) * p as f64 / n_pieces as f64;
                    let rb = r_enter + (r_exit - r_enter) * (p + 1) as f64 / n_pieces as f64;
                    let Ok(w) = StableCurve::segment(
                        si,
                        ra,
                        ra * slope + b,
                        slope,
                        (rb - ra) * norm,
                        33,
                        table.family.k0,
                    ) else {
                        continue;
                    };
                    let w = Arc::new(w);
                    // Conditional measure cos(phi) dm_W as the test weight.
                    let Ok(psi) = TestFunction::from_fn(w.clone(), 1.0, |s| {
                        let r = w.r_at_arclength(s);
                        w.phi_at(r).cos().max(1e-12)
                    }) else {
                        continue;
                    };
                    match leafwise_transfer(f, seq, seq.len(), &w, &psi, &opts) {
                        Ok(res) => acc += res.value,
                        Err(_) => continue,
                    }
                }
                acc
            })
            .collect();
        total += rows.iter().sum::<f64>();
    }
    total * c * db / norm
}

#[test]
fn leafwise_disintegration_reproduces_global_integral() {
    let (s, fam) = three_disks();
    let table = Arc::new(BilliardTable::build(s, fam, &BuildOptions::default()).unwrap());
    // Smooth density vanishing near grazing so the clipped foliation
    // carries all of its backward image.
    let f = DensityField::from_fn("capped", |x| {
        let window = ((1.2 - x.phi.abs()) / 0.2).clamp(0.0, 1.0);
        let bump = window * window * (3.0 - 2.0 * window);
        (1.0 + 0.4 * (2.0 * x.r).sin()) * bump
    });
    let seq = MapSequence::constant(table.clone(), 1);
    let global = mu_srb_integral(&table, &f, 48);

    let slope = -0.22; // shallow edge of the stable cone
    let coarse = leaf_sum(&table, &f, &seq, slope, 0.12);
    let fine = leaf_sum(&table, &f, &seq, slope, 0.06);
    let drift = (fine - coarse).abs();
    println!("global {global:.6e} coarse {coarse:.6e} fine {fine:.6e} drift {drift:.2e}");
    // The refinement drift bounds the Riemann error of the b-grid.
    assert!(
        (fine - global).abs() <= (2.0 * drift).max(5e-3 * global.abs()),
        "disintegration sum {fine} vs global integral {global} (drift {drift})"
    );
}
