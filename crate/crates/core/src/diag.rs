//! Fitted constants and the machine-checkable invariant suite.
//!
//! Constants the theory leaves implicit (backward-expansion prefactor,
//! empirical per-step expansion, distortion and curvature bounds) are
//! estimated here and reported, never assumed.

use crate::cone::{hilbert_metric, make_shape, ConeParams, CurveSampler, Shape};
use crate::curves::{jacobian_trace, pull_back, PullbackOptions, StableCurve};
use crate::map::{apply_inverse, apply_map, differential_inverse, PhasePoint};
use crate::stats::{linear_fit, mean_se};
use crate::table::BilliardTable;
use crate::transfer::{
    leafwise_transfer, sample_srb, DensityField, LeafwiseOptions, MapSequence,
};
use rand::prelude::*;
use serde::Serialize;
use std::sync::Arc;

/// Empirical hyperbolicity constants from backward cone expansion.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HyperbolicityFit {
    /// Intercept of the min-expansion regression (the prefactor C_1).
    pub c1: f64,
    /// Per-step expansion factor from the regression slope.
    pub lambda_hat: f64,
    /// Worst observed `||DT^{-n} v|| / (Lambda_cert^n ||v||)` over all
    /// samples and `n <= n_max` (the certified-bound check).
    pub min_certified_ratio: f64,
    pub n_max: usize,
    pub samples: usize,
}

/// Fit `min_v ||DT^{-n} v||` growth over sampled stable vectors.
pub fn fit_hyperbolicity(
    table: &BilliardTable,
    n_max: usize,
    samples: usize,
    seed: u64,
) -> HyperbolicityFit {
    let mut rng = crate::stats::rng_from_seed(seed);
    let (lo, hi) = table.family.stable_slope_bounds();
    let lambda_cert = table.family.lambda();
    let mut min_log = vec![f64::INFINITY; n_max + 1];
    let mut min_certified: f64 = f64::INFINITY;
    let mut used = 0;
    'outer: while used < samples {
        let si = rng.gen_range(0..table.n_scatterers());
        let r = rng.gen::<f64>() * table.scatterers[si].arclength();
        let phi = (rng.gen::<f64>() - 0.5) * 3.0;
        let mut x = PhasePoint::new(si, r, phi);
        let slope = lo + (hi - lo) * rng.gen::<f64>();
        let norm0 = (1.0 + slope * slope).sqrt();
        let mut v = (1.0 / norm0, slope / norm0);
        for n in 1..=n_max {
            let Ok((dinv, y)) = differential_inverse(table, &x) else {
                continue 'outer;
            };
            v = dinv.apply(v);
            x = y;
            let norm = (v.0 * v.0 + v.1 * v.1).sqrt();
            min_log[n] = min_log[n].min(norm.ln());
            min_certified = min_certified.min(norm / lambda_cert.powi(n as i32));
        }
        used += 1;
    }
    let xs: Vec<f64> = (1..=n_max).map(|n| n as f64).collect();
    let ys: Vec<f64> = (1..=n_max).map(|n| min_log[n]).collect();
    let fit = linear_fit(&xs, &ys);
    let (lambda_hat, c1) = match fit {
        Some(f) => (f.slope.exp(), f.intercept.exp().min(1.0)),
        None => (lambda_cert, 1.0),
    };
    HyperbolicityFit {
        c1,
        lambda_hat,
        min_certified_ratio: min_certified,
        n_max,
        samples: used,
    }
}

/// Empirical distortion constant: the largest Jacobian distortion witness
/// over pulled-back components of random short curves.
pub fn fit_distortion(table: &BilliardTable, curves: usize, seed: u64) -> f64 {
    let mut rng = crate::stats::rng_from_seed(seed);
    let (lo, hi) = table.family.stable_slope_bounds();
    let tables = [table];
    let mut worst: f64 = 0.0;
    let mut used = 0;
    while used < curves {
        let si = rng.gen_range(0..table.n_scatterers());
        let r0 = rng.gen::<f64>() * table.scatterers[si].arclength();
        let phi0 = (rng.gen::<f64>() - 0.5) * 2.6;
        let slope = 0.5 * (lo + hi) * (0.8 + 0.4 * rng.gen::<f64>());
        let Ok(w) = StableCurve::segment(
            si,
            r0,
            phi0,
            slope,
            table.family.delta0,
            17,
            table.family.k0,
        ) else {
            continue;
        };
        let Ok(fam) = pull_back(table, &w, &PullbackOptions::default()) else {
            continue;
        };
        for m in &fam.members {
            if let Ok(trace) = jacobian_trace(&tables, &m.curve, &w, 9) {
                worst = worst.max(trace.distortion_witness);
            }
        }
        used += 1;
    }
    worst
}

/// Empirical graph-curvature bound of pulled-back stable components.
pub fn fit_curvature_bound(table: &BilliardTable, curves: usize, seed: u64) -> f64 {
    let mut rng = crate::stats::rng_from_seed(seed);
    let (lo, hi) = table.family.stable_slope_bounds();
    let mut worst: f64 = 0.0;
    let mut used = 0;
    while used < curves {
        let si = rng.gen_range(0..table.n_scatterers());
        let r0 = rng.gen::<f64>() * table.scatterers[si].arclength();
        let phi0 = (rng.gen::<f64>() - 0.5) * 2.6;
        let slope = 0.5 * (lo + hi);
        let Ok(w) = StableCurve::segment(
            si,
            r0,
            phi0,
            slope,
            table.family.delta0,
            17,
            table.family.k0,
        ) else {
            continue;
        };
        let Ok(fam) = pull_back(table, &w, &PullbackOptions::default()) else {
            continue;
        };
        for m in &fam.members {
            worst = worst.max(m.curve.max_curvature());
        }
        used += 1;
    }
    worst
}

/// Least `n` such that `C_1^{-1} Lambda^{-beta n} < 1` and
/// `a C_1^{-1} Lambda^{-beta n} + C_d delta0^{1/3-beta} < a`, if any.
pub fn contraction_onset(
    c1: f64,
    lambda: f64,
    a: f64,
    c_d: f64,
    delta0: f64,
    beta: f64,
) -> Option<usize> {
    if lambda <= 1.0 {
        return None;
    }
    let tail = c_d * delta0.powf(1.0 / 3.0 - beta);
    if tail >= a {
        return None;
    }
    for n in 1..100_000 {
        let decay = lambda.powf(-beta * n as f64) / c1;
        if decay < 1.0 && a * decay + tail < a {
            return Some(n);
        }
    }
    None
}

/// Certificate contraction factor at horizon `n`:
/// `sigma = (a C_1^{-1} Lambda^{-beta n} + C_d delta0^{1/3-beta}) / a`.
pub fn sigma_at(c1: f64, lambda: f64, a: f64, c_d: f64, delta0: f64, beta: f64, n: usize) -> f64 {
    (a * lambda.powf(-beta * n as f64) / c1 + c_d * delta0.powf(1.0 / 3.0 - beta)) / a
}

/// One item of the invariant suite.
#[derive(Clone, Debug, Serialize)]
pub struct InvariantItem {
    pub name: &'static str,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
}

/// Machine-readable result of the invariant suite.
#[derive(Clone, Debug, Serialize)]
pub struct InvariantReport {
    pub items: Vec<InvariantItem>,
}

impl InvariantReport {
    pub fn all_pass(&self) -> bool {
        self.items.iter().all(|i| i.pass)
    }
}

/// Budget knobs for the invariant suite.
#[derive(Clone, Copy, Debug)]
pub struct SelftestOptions {
    pub involution_points: usize,
    pub mc_samples: usize,
    pub cone_vectors: usize,
    pub seed: u64,
    /// Round-trip tolerance (inflate to demonstrate failure detection).
    pub orbit_tol: f64,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        SelftestOptions {
            involution_points: 10_000,
            mc_samples: 1_000_000,
            cone_vectors: 2_000,
            seed: 12,
            orbit_tol: 1e-8,
        }
    }
}

/// Run the invariant suite on a table: involution, measure invariance,
/// cone invariance, transfer route-equivalence and the Hilbert-metric
/// axioms.
pub fn selftest(table: &Arc<BilliardTable>, opts: &SelftestOptions) -> InvariantReport {
    let mut items = Vec::new();
    let mut rng = crate::stats::rng_from_seed(opts.seed);

    // Involution: I o T o I o T = id.
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < opts.involution_points {
        let x = sample_srb(table, &mut rng);
        let Ok(y) = apply_map(table, &x) else { continue };
        let Ok(back) = apply_inverse(table, &y) else {
            continue;
        };
        worst = worst.max(x.dist(&back, table));
        checked += 1;
    }
    items.push(InvariantItem {
        name: "involution_round_trip",
        pass: worst < opts.orbit_tol,
        value: worst,
        threshold: opts.orbit_tol,
    });

    // Measure invariance for three smooth observables, 3 sigma.
    let ells: Vec<f64> = table.scatterers.iter().map(|s| s.arclength()).collect();
    let ells2 = ells.clone();
    let observables: Vec<(&'static str, Box<dyn Fn(&PhasePoint) -> f64>)> = vec![
        (
            "measure_invariance_cos_r",
            Box::new(move |x: &PhasePoint| {
                (2.0 * std::f64::consts::PI * x.r / ells2[x.scatterer]).cos()
            }),
        ),
        ("measure_invariance_sin_phi", Box::new(|x: &PhasePoint| x.phi.sin())),
        ("measure_invariance_phi_sq", Box::new(|x: &PhasePoint| x.phi * x.phi)),
    ];
    for (k, (name, psi)) in observables.iter().enumerate() {
        let mut obs_rng = crate::stats::child_rng(opts.seed, 100 + k as u64);
        let mut diffs = Vec::with_capacity(opts.mc_samples / 100);
        let mut n = 0;
        while n < opts.mc_samples {
            let x = sample_srb(table, &mut obs_rng);
            if let Ok(y) = apply_map(table, &x) {
                diffs.push(psi(&y) - psi(&x));
            }
            n += 1;
        }
        let (mean, se) = mean_se(&diffs);
        items.push(InvariantItem {
            name,
            pass: mean.abs() <= 3.0 * se + 1e-12,
            value: mean.abs(),
            threshold: 3.0 * se,
        });
    }

    // Strict backward cone invariance on sampled boundary vectors.
    let (lo, hi) = table.family.stable_slope_bounds();
    let mut strict = true;
    let mut margin: f64 = f64::INFINITY;
    let mut done = 0;
    while done < opts.cone_vectors {
        let x = sample_srb(table, &mut rng);
        let Ok((dinv, _)) = differential_inverse(table, &x) else {
            continue;
        };
        for slope in [lo, hi] {
            let (a, b) = dinv.apply((1.0, slope));
            let m = b / a;
            strict &= m > lo && m < hi;
            margin = margin.min((m - lo).min(hi - m));
        }
        done += 1;
    }
    items.push(InvariantItem {
        name: "stable_cone_strict_invariance",
        pass: strict && margin > 0.0,
        value: margin,
        threshold: 0.0,
    });

    // Route equivalence of the transfer operator on one witness.
    let params = ConeParams::defaults(table.family.delta0);
    let route_item = (|| -> Option<InvariantItem> {
        let sampler = CurveSampler::build(table, &params, 8).ok()?;
        let w = sampler.regular[0].clone();
        let psi = make_shape(&w, Shape::MidPlus, params.beta, params.a / 2.0).ok()?;
        let f = DensityField::from_fn("probe", |x| 1.0 + 0.25 * x.phi.sin());
        let seq = MapSequence::constant(table.clone(), 2);
        let res = leafwise_transfer(
            &f,
            &seq,
            2,
            &w,
            &psi,
            &LeafwiseOptions {
                alarm_tol: 1.0,
                ..Default::default()
            },
        )
        .ok()?;
        Some(InvariantItem {
            name: "transfer_route_equivalence",
            pass: res.rel_diff < 1e-3,
            value: res.rel_diff,
            threshold: 1e-3,
        })
    })();
    items.push(route_item.unwrap_or(InvariantItem {
        name: "transfer_route_equivalence",
        pass: false,
        value: f64::NAN,
        threshold: 1e-3,
    }));

    // Hilbert metric axioms on one curve.
    let axioms_item = (|| -> Option<InvariantItem> {
        let sampler = CurveSampler::build(table, &params, 8).ok()?;
        let w = sampler.regular[1].clone();
        let p1 = make_shape(&w, Shape::ExpLeft, params.beta, params.a / 2.0).ok()?;
        let p2 = make_shape(&w, Shape::MidMinus, params.beta, params.a / 2.0).ok()?;
        let p3 = make_shape(&w, Shape::RampUp, params.beta, params.a / 2.0).ok()?;
        let d_self = hilbert_metric(params.a, params.beta, &p1, &p1, 48).ok()?;
        let d12 = hilbert_metric(params.a, params.beta, &p1, &p2, 48).ok()?;
        let d21 = hilbert_metric(params.a, params.beta, &p2, &p1, 48).ok()?;
        let d13 = hilbert_metric(params.a, params.beta, &p1, &p3, 48).ok()?;
        let d23 = hilbert_metric(params.a, params.beta, &p2, &p3, 48).ok()?;
        let worst = d_self
            .abs()
            .max((d12 - d21).abs())
            .max((d13 - d12 - d23).max(0.0));
        Some(InvariantItem {
            name: "hilbert_metric_axioms",
            pass: worst < 1e-6,
            value: worst,
            threshold: 1e-6,
        })
    })();
    items.push(axioms_item.unwrap_or(InvariantItem {
        name: "hilbert_metric_axioms",
        pass: false,
        value: f64::NAN,
        threshold: 1e-6,
    }));

    InvariantReport { items }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{three_disks, BilliardTable, BuildOptions};

    fn reference() -> Arc<BilliardTable> {
        let (s, f) = three_disks();
        Arc::new(BilliardTable::build(s, f, &BuildOptions::default()).unwrap())
    }

    #[test]
    fn hyperbolicity_fit_is_sane() {
        let table = reference();
        let fit = fit_hyperbolicity(&table, 5, 800, 3);
        assert!(fit.lambda_hat > 1.05, "lambda_hat = {}", fit.lambda_hat);
        assert!(fit.c1 > 0.0 && fit.c1 <= 1.0, "c1 = {}", fit.c1);
        assert!(
            fit.min_certified_ratio > 0.0,
            "certified expansion bound violated"
        );
    }

    #[test]
    fn contraction_onset_exists_for_defaults() {
        let table = reference();
        let fit = fit_hyperbolicity(&table, 5, 400, 3);
        let c_d = fit_distortion(&table, 24, 5);
        let params = ConeParams::defaults(table.family.delta0);
        let n1 = contraction_onset(
            fit.c1,
            fit.lambda_hat,
            params.a,
            c_d,
            table.family.delta0,
            params.beta,
        );
        assert!(n1.is_some(), "no contraction onset: c1={} lambda={} c_d={c_d}",
            fit.c1, fit.lambda_hat);
        let n1 = n1.unwrap();
        assert!(n1 < 80, "contraction onset too deep: {n1}");
        let sigma = sigma_at(
            fit.c1,
            fit.lambda_hat,
            params.a,
            c_d,
            table.family.delta0,
            params.beta,
            n1,
        );
        assert!(sigma < 1.0);
    }

    #[test]
    fn selftest_passes_and_detects_mutation() {
        let table = reference();
        let opts = SelftestOptions {
            involution_points: 2_000,
            mc_samples: 100_000,
            cone_vectors: 500,
            ..Default::default()
        };
        let report = selftest(&table, &opts);
        assert!(report.all_pass(), "{report:?}");
        // Mutated tolerance must flag the involution item.
        let strict = SelftestOptions {
            orbit_tol: 1e-16,
            ..opts
        };
        let report2 = selftest(&table, &strict);
        assert!(
            !report2.items[0].pass,
            "tolerance mutation undetected: {:?}",
            report2.items[0]
        );
        // Determinism: same options, same pass pattern.
        let report3 = selftest(&table, &opts);
        let pat: Vec<bool> = report.items.iter().map(|i| i.pass).collect();
        let pat3: Vec<bool> = report3.items.iter().map(|i| i.pass).collect();
        assert_eq!(pat, pat3);
    }
}
