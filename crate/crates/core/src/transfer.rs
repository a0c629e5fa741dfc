//! The transfer operator for sequential compositions, evaluated pointwise
//! through backward orbits, leafwise integrals with a change-of-variables
//! cross-check, pushed test functions, and the loss-of-memory experiment.

use crate::cone::{hilbert_metric, make_shape, ConeParams, Shape, TestFunction};
use crate::curves::{
    forward_jacobian, generations, pull_back_family, CurveFamily, PullbackOptions, StableCurve,
};
use crate::error::TransferError;
use crate::map::{apply_inverse, apply_map, map_distance_le, MapDistanceGrid, PhasePoint};
use crate::stats::{integrate_gl, linear_fit, mean_se, sample_cos_phi, LinearFit};
use crate::table::BilliardTable;
use rand::prelude::*;
use rayon::prelude::*;
use std::sync::Arc;

/// A mask applied at a fixed backward time during transfer evaluation
/// (the indicator of the complement of a hole).
#[derive(Clone)]
pub struct Mask {
    /// Number of backward collision steps after which the mask applies.
    pub backward_time: usize,
    pub keep: Arc<dyn Fn(&PhasePoint) -> bool + Send + Sync>,
}

/// A pointwise-evaluable observable or density on phase space.
#[derive(Clone)]
pub struct DensityField {
    pub name: String,
    eval_fn: Arc<dyn Fn(&PhasePoint) -> f64 + Send + Sync>,
    /// C^1 bound, when known; checked by finite differences on demand.
    pub c1_bound: Option<f64>,
    /// Hole indicators applied at specified backward times.
    pub masks: Vec<Mask>,
}

impl DensityField {
    pub fn from_fn(
        name: impl Into<String>,
        f: impl Fn(&PhasePoint) -> f64 + Send + Sync + 'static,
    ) -> Self {
        DensityField {
            name: name.into(),
            eval_fn: Arc::new(f),
            c1_bound: None,
            masks: Vec::new(),
        }
    }

    pub fn constant(v: f64) -> Self {
        Self::from_fn(format!("const({v})"), move |_| v)
    }

    pub fn with_c1(mut self, bound: f64) -> Self {
        self.c1_bound = Some(bound);
        self
    }

    pub fn with_masks(mut self, masks: Vec<Mask>) -> Self {
        self.masks = masks;
        self
    }

    pub fn eval(&self, x: &PhasePoint) -> f64 {
        (self.eval_fn)(x)
    }

    /// Verify the declared C^1 bound by finite differences on random
    /// nearby pairs; returns the worst observed difference quotient.
    pub fn verify_c1(&self, table: &BilliardTable, pairs: usize, seed: u64) -> Option<f64> {
        let bound = self.c1_bound?;
        let mut rng = crate::stats::rng_from_seed(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..pairs {
            let si = rng.gen_range(0..table.n_scatterers());
            let ell = table.scatterers[si].arclength();
            let r = rng.gen::<f64>() * ell;
            let phi = (rng.gen::<f64>() - 0.5) * 3.0;
            let h = 1e-6;
            let x = PhasePoint::new(si, r, phi);
            let xr = PhasePoint::new(si, (r + h).rem_euclid(ell), phi);
            let xp = PhasePoint::new(si, r, phi + h);
            let dr = (self.eval(&xr) - self.eval(&x)) / h;
            let dp = (self.eval(&xp) - self.eval(&x)) / h;
            worst = worst.max((dr * dr + dp * dp).sqrt());
        }
        (worst <= bound).then_some(worst)
    }
}

/// Metadata of one admissibility block of a sequence.
#[derive(Clone, Copy, Debug)]
pub struct Block {
    pub start: usize,
    pub len: usize,
    /// Index (within the sequence) of the block anchor map.
    pub anchor: usize,
}

/// An ordered list of billiard maps `(T_{i_1}, ..., T_{i_n})` composed as
/// `T_n = T_{i_n} o ... o T_{i_1}`, with block metadata for admissibility.
#[derive(Clone)]
pub struct MapSequence {
    tables: Vec<Arc<BilliardTable>>,
    pub blocks: Vec<Block>,
}

impl MapSequence {
    /// The constant sequence of a single map.
    pub fn constant(table: Arc<BilliardTable>, n: usize) -> Self {
        MapSequence {
            tables: vec![table; n],
            blocks: vec![Block {
                start: 0,
                len: n,
                anchor: 0,
            }],
        }
    }

    /// A sequence from explicit tables with blocks of the given length.
    pub fn from_tables(tables: Vec<Arc<BilliardTable>>, block_len: usize) -> Self {
        let n = tables.len();
        let block_len = block_len.max(1);
        let mut blocks = Vec::new();
        let mut start = 0;
        while start < n {
            let len = block_len.min(n - start);
            blocks.push(Block {
                start,
                len,
                anchor: start,
            });
            start += len;
        }
        MapSequence { tables, blocks }
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// Table applying at step `j` (0-based: step j applies `T_{i_{j+1}}`).
    pub fn table(&self, j: usize) -> &BilliardTable {
        &self.tables[j]
    }

    pub fn table_arc(&self, j: usize) -> Arc<BilliardTable> {
        self.tables[j].clone()
    }

    /// Every map of every block must stay within map distance `kappa` of
    /// its block anchor.
    pub fn check_admissible(&self, kappa: f64) -> Result<(), TransferError> {
        let grid = MapDistanceGrid::default();
        for b in &self.blocks {
            let anchor = &self.tables[b.anchor];
            for j in b.start..b.start + b.len {
                let close = map_distance_le(anchor, &self.tables[j], kappa, &grid)
                    .map_err(TransferError::Map)?;
                if !close {
                    return Err(TransferError::NotAdmissible(format!(
                        "map {} exceeds distance {} from block anchor {}",
                        j, kappa, b.anchor
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Pointwise transfer-operator evaluation:
/// `L_n f (x) = f(T_n^{-1} x)` times the product of mask values met along
/// the backward orbit.
pub fn transfer_eval(
    f: &DensityField,
    seq: &MapSequence,
    n: usize,
    x: &PhasePoint,
) -> Result<f64, TransferError> {
    assert!(n <= seq.len());
    let mut y = *x;
    for k in 1..=n {
        let table = seq.table(n - k);
        y = apply_inverse(table, &y).map_err(TransferError::Map)?;
        for m in &f.masks {
            if m.backward_time == k && !(m.keep)(&y) {
                return Ok(0.0);
            }
        }
    }
    Ok(f.eval(&y))
}

/// Result of a leafwise transfer integral computed along two independent
/// routes.
#[derive(Clone, Debug)]
pub struct LeafwiseResult {
    /// Change-of-variables route: sum over components of `G_n(W)`.
    pub value: f64,
    /// Per-component contributions of the leafwise route.
    pub contributions: Vec<f64>,
    /// Direct-quadrature route using pointwise backward orbits.
    pub pointwise_value: f64,
    /// Relative disagreement between the routes.
    pub rel_diff: f64,
    /// Tangency hits met by the pointwise quadrature (zero contribution).
    pub tangency_hits: usize,
}

/// Options for leafwise evaluation.
#[derive(Clone, Debug)]
pub struct LeafwiseOptions {
    pub pullback: PullbackOptions,
    /// Quadrature panels per component segment for the leafwise route.
    pub leaf_panels: usize,
    /// Total quadrature panels for the pointwise route.
    pub pointwise_panels: usize,
    /// Relative tolerance beyond which the two routes raise an error.
    pub alarm_tol: f64,
}

impl Default for LeafwiseOptions {
    fn default() -> Self {
        LeafwiseOptions {
            pullback: PullbackOptions::default(),
            leaf_panels: 2,
            pointwise_panels: 512,
            alarm_tol: 1e-3,
        }
    }
}

fn mask_factor_forward(f: &DensityField, n: usize, step: usize, x: &PhasePoint) -> f64 {
    // A point reached after `step` forward maps sits at backward time
    // `n - step` relative to the endpoint.
    for m in &f.masks {
        if m.backward_time == n - step && !(m.keep)(x) {
            return 0.0;
        }
    }
    1.0
}

/// `int_W (L_n f) psi dm_W` via the change-of-variables route
/// `sum_i int_{W_i} f (psi o T_n) J_{W_i}T_n`, cross-validated against the
/// direct pointwise quadrature. The two routes agreeing is the module's
/// core self-test; disagreement beyond `alarm_tol` raises an error.
pub fn leafwise_transfer(
    f: &DensityField,
    seq: &MapSequence,
    n: usize,
    w: &StableCurve,
    psi: &TestFunction,
    opts: &LeafwiseOptions,
) -> Result<LeafwiseResult, TransferError> {
    assert!(n <= seq.len());
    let tables: Vec<&BilliardTable> = (0..n).map(|j| seq.table(j)).collect();
    let table0 = seq.table(0);

    // Leafwise route.
    let fam = generations(&tables, w, n, &opts.pullback).map_err(TransferError::Curve)?;
    let mut contributions = Vec::with_capacity(fam.members.len());
    for member in &fam.members {
        let wi = &member.curve;
        let contrib = wi.integrate(opts.leaf_panels, |r| {
            // Forward orbit with mask bookkeeping; the stable Jacobian is
            // taken from the backward-transported tangent of W.
            let mut x = wi.point_at(r, table0);
            let mut mask = mask_factor_forward(f, n, 0, &x);
            let f_val = f.eval(&x);
            let mut mats = Vec::with_capacity(n);
            let mut alive = true;
            for (j, table) in tables.iter().enumerate() {
                match crate::map::differential(table, &x) {
                    Ok((dt, c)) => {
                        mats.push(dt);
                        x = c.point;
                        mask *= mask_factor_forward(f, n, j + 1, &x);
                    }
                    Err(_) => {
                        alive = false;
                        break;
                    }
                }
            }
            if !alive || mask == 0.0 || x.scatterer != w.scatterer {
                return 0.0;
            }
            // psi and the tangent evaluated at the forward image on W.
            let (ra, rb) = w.r_range();
            let ell = table0.scatterers[w.scatterer].arclength();
            let mut r_img = x.r;
            while r_img < ra - ell / 2.0 {
                r_img += ell;
            }
            while r_img > rb + ell / 2.0 {
                r_img -= ell;
            }
            let r_img = r_img.clamp(ra, rb);
            let psi_val = psi.eval_at_arclength(w.arclength_at_r(r_img));
            let m = w.slope_at(r_img);
            let norm0 = (1.0 + m * m).sqrt();
            let mut u = (1.0 / norm0, m / norm0);
            let mut backward = 1.0;
            for dt in mats.iter().rev() {
                let im = dt.inverse().apply(u);
                let norm = (im.0 * im.0 + im.1 * im.1).sqrt();
                backward *= norm;
                u = (im.0 / norm, im.1 / norm);
            }
            f_val * psi_val / backward
        });
        contributions.push(contrib);
    }
    let value: f64 = contributions.iter().sum();

    // Pointwise route: composite quadrature directly on W, each node an
    // independent backward orbit.
    let tangency_hits = std::sync::atomic::AtomicUsize::new(0);
    let (ra, rb) = w.r_range();
    let nodes: Vec<f64> = {
        let panels = opts.pointwise_panels;
        let mut v = Vec::with_capacity(panels * crate::stats::GL8.len());
        let h = (rb - ra) / panels as f64;
        for p in 0..panels {
            let mid = ra + (p as f64 + 0.5) * h;
            for &(t, _) in crate::stats::GL8.iter() {
                v.push(mid + 0.5 * h * t);
            }
        }
        v
    };
    let weights: Vec<f64> = {
        let panels = opts.pointwise_panels;
        let h = (rb - ra) / panels as f64;
        crate::stats::GL8
            .iter()
            .map(|&(_, wgt)| wgt * h / 2.0)
            .collect::<Vec<f64>>()
            .repeat(panels)
    };
    let vals: Vec<f64> = nodes
        .par_iter()
        .map(|&r| {
            let x = w.point_at(r, table0);
            match transfer_eval(f, seq, n, &x) {
                Ok(v) => {
                    v * psi.eval_at_arclength(w.arclength_at_r(r)) * w.metric_factor(r)
                }
                Err(_) => {
                    tangency_hits.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    0.0
                }
            }
        })
        .collect();
    let pointwise_value: f64 = vals.iter().zip(weights.iter()).map(|(v, w)| v * w).sum();

    let scale = value.abs().max(pointwise_value.abs()).max(1e-300);
    let rel_diff = (value - pointwise_value).abs() / scale;
    if rel_diff > opts.alarm_tol {
        return Err(TransferError::Tolerance {
            rel: rel_diff,
            tol: opts.alarm_tol,
        });
    }
    Ok(LeafwiseResult {
        value,
        contributions,
        pointwise_value,
        rel_diff,
        tangency_hits: tangency_hits.into_inner(),
    })
}

/// Push a test function from `W` onto a component `W_i in G_n(W)`:
/// `T-hat psi = (psi o T_n) J_{W_i}T_n`, with its Hoelder certificate
/// measured and checked against `sigma * a`.
pub fn push_test(
    seq: &MapSequence,
    n: usize,
    w: &StableCurve,
    component: &StableCurve,
    psi: &TestFunction,
    params: &ConeParams,
    sigma: f64,
) -> Result<TestFunction, TransferError> {
    let tables: Vec<&BilliardTable> = (0..n).map(|j| seq.table(j)).collect();
    let table0 = seq.table(0);
    let ell = table0.scatterers[w.scatterer].arclength();
    let (ra, rb) = w.r_range();
    let values: Vec<f64> = component
        .samples()
        .iter()
        .map(|&(r, _)| {
            let jac = forward_jacobian(&tables, component, w, r).unwrap_or(0.0);
            let mut x = component.point_at(r, table0);
            for table in &tables {
                match apply_map(table, &x) {
                    Ok(y) => x = y,
                    Err(_) => return 0.0,
                }
            }
            let mut r_img = x.r;
            while r_img < ra - ell / 2.0 {
                r_img += ell;
            }
            while r_img > rb + ell / 2.0 {
                r_img -= ell;
            }
            let pv = psi.eval_at_arclength(w.arclength_at_r(r_img.clamp(ra, rb)));
            pv * jac
        })
        .collect();
    if values.iter().any(|&v| v <= 0.0) {
        return Err(TransferError::Curve(crate::error::CurveError::Invalid(
            "pushed test function hit a tangency".into(),
        )));
    }
    let pushed = TestFunction::new(Arc::new(component.clone()), psi.exponent, values)
        .map_err(TransferError::Cone)?;
    let bound = sigma * params.a;
    if pushed.certificate > bound {
        return Err(TransferError::CertificateViolation {
            certificate: pushed.certificate,
            bound,
        });
    }
    Ok(pushed)
}

/// Follow a single branch of the pullback for `n` steps, keeping the
/// longest component at each generation. Returns the branch component in
/// `G_n(W)`.
pub fn longest_branch(
    seq: &MapSequence,
    n: usize,
    w: &StableCurve,
    opts: &PullbackOptions,
) -> Result<StableCurve, TransferError> {
    let mut fam = CurveFamily::single(w.clone());
    for k in 0..n {
        let table = seq.table(n - 1 - k);
        fam = pull_back_family(table, &fam, opts).map_err(TransferError::Curve)?;
        let best = fam
            .members
            .iter()
            .max_by(|a, b| a.curve.length().partial_cmp(&b.curve.length()).unwrap())
            .cloned()
            .ok_or_else(|| {
                TransferError::Curve(crate::error::CurveError::Invalid(
                    "pullback produced no components".into(),
                ))
            })?;
        fam = CurveFamily {
            generation: fam.generation,
            members: vec![best],
            discarded_mass: fam.discarded_mass,
            tangency_hits: fam.tangency_hits,
        };
    }
    Ok(fam.members[0].curve.clone())
}

/// `int_M f dmu_SRB` by tensor Gauss-Legendre quadrature.
pub fn mu_srb_integral(table: &BilliardTable, f: &DensityField, panels: usize) -> f64 {
    let c = table.srb_norm_const();
    let mut acc = 0.0;
    for (si, s) in table.scatterers.iter().enumerate() {
        let ell = s.arclength();
        acc += integrate_gl(0.0, ell, panels, |r| {
            integrate_gl(
                -std::f64::consts::FRAC_PI_2,
                std::f64::consts::FRAC_PI_2,
                panels,
                |phi| f.eval(&PhasePoint::new(si, r, phi)) * phi.cos(),
            )
        });
    }
    c * acc
}

/// Draw a phase point from the invariant measure `c cos(phi) dr dphi`.
pub fn sample_srb(table: &BilliardTable, rng: &mut impl Rng) -> PhasePoint {
    let total = table.total_arclength();
    let mut u = rng.gen::<f64>() * total;
    let mut si = 0;
    for (i, s) in table.scatterers.iter().enumerate() {
        if u < s.arclength() {
            si = i;
            break;
        }
        u -= s.arclength();
        si = i;
    }
    PhasePoint::new(si, u, sample_cos_phi(rng))
}

/// One row of a decay table.
#[derive(Clone, Copy, Debug)]
pub struct DecayRow {
    pub n: usize,
    pub leaf_diff: f64,
    pub global_diff: f64,
    pub global_se: f64,
}

/// Result of the loss-of-memory experiment.
#[derive(Clone, Debug)]
pub struct DecayTable {
    pub rows: Vec<DecayRow>,
    pub leaf_fit: Option<LinearFit>,
    pub global_fit: Option<LinearFit>,
}

impl DecayTable {
    /// Fitted contraction factor per step from the global differences.
    pub fn global_theta(&self) -> Option<f64> {
        self.global_fit.map(|f| f.slope.exp())
    }

    pub fn leaf_theta(&self) -> Option<f64> {
        self.leaf_fit.map(|f| f.slope.exp())
    }
}

/// Options for the loss-of-memory experiment.
#[derive(Clone, Debug)]
pub struct MemoryLossOptions {
    pub mc_samples: usize,
    pub seed: u64,
    /// Number of leafwise witness curves.
    pub witnesses: usize,
    /// Quadrature panels for the pointwise leafwise integrals.
    pub pointwise_panels: usize,
    /// Equidistribution mode: compare against `mu(f)` instead of `L_n g`.
    pub equidistribution: bool,
}

impl Default for MemoryLossOptions {
    fn default() -> Self {
        MemoryLossOptions {
            mc_samples: 2_000_000,
            seed: 1,
            witnesses: 4,
            pointwise_panels: 320,
            equidistribution: false,
        }
    }
}

/// Loss-of-memory experiment: evolves two densities of equal mean and
/// tracks leafwise and global differences over `1..=horizon` steps,
/// fitting a log-linear decay rate.
///
/// `g` is rescaled so that the two means match. Witness curves and a fixed
/// C^1 observable provide the leafwise and global statistics.
pub fn memory_loss_experiment(
    table: Arc<BilliardTable>,
    f: &DensityField,
    g: &DensityField,
    seq: &MapSequence,
    horizon: usize,
    params: &ConeParams,
    opts: &MemoryLossOptions,
) -> Result<DecayTable, TransferError> {
    assert!(horizon <= seq.len());
    let mu_f = mu_srb_integral(&table, f, 24);
    let mu_g = mu_srb_integral(&table, g, 24);
    if mu_g.abs() < 1e-14 {
        return Err(TransferError::NotAdmissible(
            "g has zero mean; cannot rescale to match f".into(),
        ));
    }
    let scale = mu_f / mu_g;
    let g_eval = g.eval_fn.clone();
    let g = DensityField {
        name: format!("{} (rescaled)", g.name),
        eval_fn: Arc::new(move |x| scale * g_eval(x)),
        c1_bound: g.c1_bound.map(|b| b * scale.abs()),
        masks: g.masks.clone(),
    };

    // Leafwise witnesses: mid-cone segments spread over scatterers.
    let (lo, _) = table.family.stable_slope_bounds();
    let mut witnesses = Vec::new();
    for i in 0..opts.witnesses {
        let si = i % table.n_scatterers();
        let ell = table.scatterers[si].arclength();
        let r0 = (0.15 + 0.6 * (i as f64 + 0.5) / opts.witnesses as f64) * ell;
        let phi0 = 0.4 - 0.8 * (i as f64) / opts.witnesses.max(1) as f64;
        let w = StableCurve::segment(
            si,
            r0,
            phi0,
            lo * 0.52,
            params.delta * 1.5,
            17,
            table.family.k0,
        )
        .map_err(TransferError::Curve)?;
        let w = Arc::new(w);
        let psi = make_shape(&w, Shape::MidMinus, params.beta, params.a / 2.0)
            .map_err(TransferError::Cone)?;
        witnesses.push(psi);
    }

    // Global C^1 observable.
    let ells: Vec<f64> = table.scatterers.iter().map(|s| s.arclength()).collect();
    let psi_glob = move |x: &PhasePoint| {
        (2.0 * std::f64::consts::PI * x.r / ells[x.scatterer]).cos() + 0.5 * x.phi.sin()
    };

    // Monte Carlo forward orbits shared by all n.
    let n_samples = opts.mc_samples;
    let chunk = 8192;
    let n_chunks = n_samples.div_ceil(chunk);
    let mu_f_val = mu_f;
    let per_n: Vec<(Vec<f64>, Vec<usize>)> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = crate::stats::child_rng(opts.seed, ci as u64);
            let take = chunk.min(n_samples - ci * chunk);
            let mut sums = vec![0.0; horizon + 1];
            let mut counts = vec![0usize; horizon + 1];
            for _ in 0..take {
                let x0 = sample_srb(&table, &mut rng);
                let diff0 = if opts.equidistribution {
                    f.eval(&x0) - mu_f_val
                } else {
                    f.eval(&x0) - g.eval(&x0)
                };
                let mut x = x0;
                sums[0] += diff0 * psi_glob(&x);
                counts[0] += 1;
                for n in 1..=horizon {
                    match apply_map(&table, &x) {
                        Ok(y) => {
                            x = y;
                            sums[n] += diff0 * psi_glob(&x);
                            counts[n] += 1;
                        }
                        Err(_) => break,
                    }
                }
            }
            (sums, counts)
        })
        .collect();
    let mut glob_mean = vec![0.0; horizon + 1];
    let mut glob_count = vec![0usize; horizon + 1];
    for (sums, counts) in &per_n {
        for n in 0..=horizon {
            glob_mean[n] += sums[n];
            glob_count[n] += counts[n];
        }
    }
    // Second pass for standard errors (diff of products), done on a
    // subsample for cost.
    let se_samples = (n_samples / 10).max(10_000).min(n_samples);
    let mut rng = crate::stats::rng_from_seed(opts.seed ^ 0x5eed);
    let mut se_vals: Vec<Vec<f64>> = vec![Vec::with_capacity(se_samples); horizon + 1];
    for _ in 0..se_samples {
        let x0 = sample_srb(&table, &mut rng);
        let diff0 = if opts.equidistribution {
            f.eval(&x0) - mu_f_val
        } else {
            f.eval(&x0) - g.eval(&x0)
        };
        let mut x = x0;
        se_vals[0].push(diff0 * psi_glob(&x));
        for n in 1..=horizon {
            match apply_map(&table, &x) {
                Ok(y) => {
                    x = y;
                    se_vals[n].push(diff0 * psi_glob(&x));
                }
                Err(_) => break,
            }
        }
    }

    // Leafwise differences per n via pointwise quadrature.
    let leaf_opts = LeafwiseOptions {
        pointwise_panels: opts.pointwise_panels,
        alarm_tol: 1.0, // the cross-check is exercised elsewhere
        ..Default::default()
    };
    let mut rows = Vec::with_capacity(horizon);
    for n in 1..=horizon {
        let mut leaf_diff: f64 = 0.0;
        for psi in &witnesses {
            let w = &psi.curve;
            let lf = pointwise_leaf_average(&f.clone(), seq, n, w, psi, &leaf_opts);
            let lg = if opts.equidistribution {
                // mu(f) * avg_W psi, in the same normalization as the
                // pointwise leaf average (division by avg_W psi).
                mu_f_val * w.length()
            } else {
                pointwise_leaf_average(&g, seq, n, w, psi, &leaf_opts)
            };
            leaf_diff = leaf_diff.max((lf - lg).abs());
        }
        let gm = glob_mean[n] / glob_count[n].max(1) as f64;
        let (_, se) = mean_se(&se_vals[n]);
        rows.push(DecayRow {
            n,
            leaf_diff,
            global_diff: gm.abs(),
            global_se: se,
        });
    }

    // Log-linear fits over the rows with signal above the noise floor.
    let fit_of = |vals: Vec<(f64, f64)>| -> Option<LinearFit> {
        let xs: Vec<f64> = vals.iter().map(|v| v.0).collect();
        let ys: Vec<f64> = vals.iter().map(|v| v.1).collect();
        linear_fit(&xs, &ys)
    };
    let leaf_fit = fit_of(
        rows.iter()
            .filter(|r| r.leaf_diff > 0.0)
            .map(|r| (r.n as f64, r.leaf_diff.ln()))
            .collect(),
    );
    let global_fit = fit_of(
        rows.iter()
            .filter(|r| r.global_diff > 0.0)
            .map(|r| (r.n as f64, r.global_diff.ln()))
            .collect(),
    );
    Ok(DecayTable {
        rows,
        leaf_fit,
        global_fit,
    })
}

/// Normalized leafwise average `(int_W L_n f psi) / (avg_W psi)` via the
/// pointwise route.
fn pointwise_leaf_average(
    f: &DensityField,
    seq: &MapSequence,
    n: usize,
    w: &Arc<StableCurve>,
    psi: &TestFunction,
    opts: &LeafwiseOptions,
) -> f64 {
    let table0 = seq.table(0);
    let (ra, rb) = w.r_range();
    let panels = opts.pointwise_panels;
    let h = (rb - ra) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let mid = ra + (p as f64 + 0.5) * h;
        for &(t, wgt) in crate::stats::GL8.iter() {
            let r = mid + 0.5 * h * t;
            let x = w.point_at(r, table0);
            let v = transfer_eval(f, seq, n, &x).unwrap_or(0.0);
            acc += wgt * (h / 2.0)
                * v
                * psi.eval_at_arclength(w.arclength_at_r(r))
                * w.metric_factor(r);
        }
    }
    acc / (psi.integral() / w.length())
}

/// Metric contraction of pushed test functions along a branch:
/// `rho(T-hat psi1, T-hat psi2) <= rho(psi1, psi2)`.
pub fn push_contraction_ratio(
    seq: &MapSequence,
    n: usize,
    w: &Arc<StableCurve>,
    shape1: Shape,
    shape2: Shape,
    params: &ConeParams,
    opts: &PullbackOptions,
) -> Result<(f64, f64), TransferError> {
    let psi1 = make_shape(w, shape1, params.beta, params.a / 2.0).map_err(TransferError::Cone)?;
    let psi2 = make_shape(w, shape2, params.beta, params.a / 2.0).map_err(TransferError::Cone)?;
    let rho0 = hilbert_metric(params.a, params.beta, &psi1, &psi2, 48)
        .map_err(TransferError::Cone)?;
    let branch = longest_branch(seq, n, w, opts)?;
    let p1 = push_test(seq, n, w, &branch, &psi1, params, 1.0)?;
    let p2 = push_test(seq, n, w, &branch, &psi2, params, 1.0)?;
    let rho1 =
        hilbert_metric(params.a, params.beta, &p1, &p2, 48).map_err(TransferError::Cone)?;
    Ok((rho0, rho1))
}

/// Monte Carlo check that the global integral is preserved by `L_n`
/// (conformality of the invariant measure): returns
/// `(quadrature mean of f, MC mean of L_n f, standard error)`.
pub fn conformality_check(
    table: &Arc<BilliardTable>,
    f: &DensityField,
    seq: &MapSequence,
    n: usize,
    samples: usize,
    seed: u64,
) -> (f64, f64, f64) {
    let mu_f = mu_srb_integral(table, f, 24);
    let chunk = 8192;
    let n_chunks = samples.div_ceil(chunk);
    let vals: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = crate::stats::child_rng(seed, ci as u64);
            let take = chunk.min(samples - ci * chunk);
            let mut out = Vec::with_capacity(take);
            for _ in 0..take {
                let x = sample_srb(table, &mut rng);
                if let Ok(v) = transfer_eval(f, seq, n, &x) {
                    out.push(v);
                }
            }
            out
        })
        .collect();
    let flat: Vec<f64> = vals.into_iter().flatten().collect();
    let (mean, se) = mean_se(&flat);
    (mu_f, mean, se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::CurveSampler;
    use crate::table::{three_disks, BilliardTable, BuildOptions};
    use approx::assert_relative_eq;

    fn reference() -> (Arc<BilliardTable>, ConeParams) {
        let (s, f) = three_disks();
        let table = Arc::new(BilliardTable::build(s, f, &BuildOptions::default()).unwrap());
        let params = ConeParams::defaults(table.family.delta0);
        (table, params)
    }

    fn witness_curve(table: &BilliardTable, params: &ConeParams, which: usize) -> Arc<StableCurve> {
        let sampler = CurveSampler::build(table, params, 12).unwrap();
        sampler.regular[which % sampler.regular.len()].clone()
    }

    #[test]
    fn l_n_one_is_one_pointwise() {
        let (table, _params) = reference();
        let one = DensityField::constant(1.0);
        let seq = MapSequence::constant(table.clone(), 5);
        let mut rng = crate::stats::rng_from_seed(3);
        let mut checked = 0;
        while checked < 200 {
            let x = sample_srb(&table, &mut rng);
            match transfer_eval(&one, &seq, 5, &x) {
                Ok(v) => {
                    assert_eq!(v, 1.0, "L_n 1 must equal 1 exactly");
                    checked += 1;
                }
                Err(_) => continue,
            }
        }
    }

    #[test]
    fn indicator_pulls_back_correctly() {
        let (table, _params) = reference();
        let upper = DensityField::from_fn("upper", |x| if x.phi > 0.0 { 1.0 } else { 0.0 });
        let seq = MapSequence::constant(table.clone(), 1);
        let mut rng = crate::stats::rng_from_seed(5);
        let mut checked = 0;
        while checked < 500 {
            let x = sample_srb(&table, &mut rng);
            let (Ok(v), Ok(y)) = (transfer_eval(&upper, &seq, 1, &x), apply_inverse(&table, &x))
            else {
                continue;
            };
            assert_eq!(v == 1.0, y.phi > 0.0);
            checked += 1;
        }
    }

    #[test]
    fn route_equivalence_constant_density() {
        let (table, params) = reference();
        let one = DensityField::constant(1.0);
        let seq = MapSequence::constant(table.clone(), 2);
        let w = witness_curve(&table, &params, 0);
        let psi = make_shape(&w, Shape::ExpLeft, params.beta, params.a / 2.0).unwrap();
        for n in 1..=2 {
            let res = leafwise_transfer(&one, &seq, n, &w, &psi, &LeafwiseOptions::default())
                .unwrap();
            // Both routes must reproduce int_W psi.
            let target = psi.integral();
            assert_relative_eq!(res.pointwise_value, target, max_relative = 1e-9);
            assert_relative_eq!(res.value, target, max_relative = 1e-5);
        }
    }

    #[test]
    fn route_equivalence_smooth_density() {
        let (table, params) = reference();
        let f = DensityField::from_fn("smooth", |x| 1.0 + 0.3 * x.phi.sin() + 0.1 * x.r.cos());
        let seq = MapSequence::constant(table.clone(), 4);
        let mut ok = 0;
        let mut worst: f64 = 0.0;
        for which in 0..8 {
            let w = witness_curve(&table, &params, which);
            let psi = make_shape(&w, Shape::MidPlus, params.beta, params.a / 2.0).unwrap();
            for n in 1..=4 {
                match leafwise_transfer(&f, &seq, n, &w, &psi, &LeafwiseOptions::default()) {
                    Ok(res) => {
                        worst = worst.max(res.rel_diff);
                        ok += 1;
                    }
                    Err(TransferError::Tolerance { rel, tol }) => {
                        panic!("routes disagree: rel {rel} > {tol}");
                    }
                    Err(_) => continue,
                }
            }
        }
        assert!(ok >= 20, "only {ok} comparisons completed");
        assert!(worst < 1e-3, "worst relative disagreement {worst}");
    }

    #[test]
    fn route_equivalence_uncut_is_tight() {
        let (table, params) = reference();
        let f = DensityField::from_fn("smooth", |x| 1.0 + 0.2 * x.phi.cos());
        let seq = MapSequence::constant(table.clone(), 1);
        // Scan for a witness whose one-step pullback is a single component
        // (no cuts), where the two routes agree to quadrature accuracy.
        for which in 0..12 {
            let w = witness_curve(&table, &params, which);
            let fam = crate::curves::pull_back(
                &table,
                &w,
                &crate::curves::PullbackOptions::default(),
            )
            .unwrap();
            if fam.members.len() != 1 {
                continue;
            }
            let psi = make_shape(&w, Shape::Const, params.beta, params.a / 2.0).unwrap();
            let res = leafwise_transfer(&f, &seq, 1, &w, &psi, &LeafwiseOptions::default())
                .unwrap();
            assert!(
                res.rel_diff < 1e-6,
                "uncut routes should agree to 1e-6, got {}",
                res.rel_diff
            );
            return;
        }
        panic!("no uncut witness found");
    }

    #[test]
    fn conformality_within_mc_error() {
        let (table, _params) = reference();
        let f = DensityField::from_fn("f", |x| 1.0 + 0.5 * (3.0 * x.r).sin() * x.phi.cos());
        let seq = MapSequence::constant(table.clone(), 3);
        let (mu_f, mc, se) = conformality_check(&table, &f, &seq, 3, 200_000, 11);
        assert!(
            (mu_f - mc).abs() < 3.0 * se + 1e-4,
            "conformality violated: quadrature {mu_f} vs MC {mc} (se {se})"
        );
    }

    #[test]
    fn push_test_constant_gives_jacobian() {
        let (table, params) = reference();
        let seq = MapSequence::constant(table.clone(), 1);
        let w = witness_curve(&table, &params, 1);
        let psi = make_shape(&w, Shape::Const, params.beta, params.a / 2.0).unwrap();
        let branch = longest_branch(&seq, 1, &w, &PullbackOptions::default()).unwrap();
        let pushed = push_test(&seq, 1, &w, &branch, &psi, &params, 1.0).unwrap();
        // Pushed constant equals the Jacobian sampled along the component.
        let tables = [seq.table(0)];
        for (k, &(r, _)) in branch.samples().iter().enumerate().take(5) {
            let j = forward_jacobian(&tables, &branch, &w, r).unwrap();
            assert_relative_eq!(pushed.eval_at_arclength(branch.arclength_at_r(r)), j,
                max_relative = 1e-9);
            let _ = k;
        }
        // Change of variables: int_{W_i} T-hat psi = int_{T W_i} psi.
        let lhs = pushed.integral();
        // Forward image of the branch endpoints on W.
        let table0 = seq.table(0);
        let (ra, rb) = branch.r_range();
        let img = |r: f64| -> f64 {
            let x = branch.point_at(r, table0);
            let y = apply_map(table0, &x).unwrap();
            let (wa, wb) = w.r_range();
            let ell = table0.scatterers[w.scatterer].arclength();
            let mut ri = y.r;
            while ri < wa - ell / 2.0 {
                ri += ell;
            }
            while ri > wb + ell / 2.0 {
                ri -= ell;
            }
            w.arclength_at_r(ri.clamp(wa, wb))
        };
        let (s0, s1) = (img(ra), img(rb));
        let (s0, s1) = (s0.min(s1), s0.max(s1));
        let sub = w.sub_curve(s0, s1, table.family.k0).unwrap();
        let rhs = sub.integrate(2, |r| psi.eval_at_arclength(w.arclength_at_r(r)));
        assert_relative_eq!(lhs, rhs, max_relative = 1e-4);
    }

    #[test]
    fn push_contraction_at_one_step() {
        let (table, params) = reference();
        let seq = MapSequence::constant(table.clone(), 1);
        let mut pairs = 0;
        for which in 0..30 {
            let w = witness_curve(&table, &params, which % 12);
            for (s1, s2) in [
                (Shape::ExpLeft, Shape::MidMinus),
                (Shape::RampUp, Shape::ExpRight),
                (Shape::MidPlus, Shape::RampDown),
                (Shape::Const, Shape::ExpLeft),
            ] {
                match push_contraction_ratio(
                    &seq,
                    1,
                    &w,
                    s1,
                    s2,
                    &params,
                    &PullbackOptions::default(),
                ) {
                    Ok((rho0, rho1)) => {
                        assert!(
                            rho1 <= rho0 + 1e-9,
                            "metric expanded: {rho1} > {rho0} ({s1:?},{s2:?})"
                        );
                        pairs += 1;
                    }
                    Err(_) => continue,
                }
            }
            if pairs >= 40 {
                break;
            }
        }
        assert!(pairs >= 30, "only {pairs} contraction pairs checked");
    }

    #[test]
    fn memory_loss_identical_densities_vanish() {
        let (table, params) = reference();
        let f = DensityField::from_fn("f", |x| 1.0 + 0.3 * x.phi.sin());
        let seq = MapSequence::constant(table.clone(), 4);
        let opts = MemoryLossOptions {
            mc_samples: 20_000,
            witnesses: 2,
            pointwise_panels: 64,
            ..Default::default()
        };
        let tbl =
            memory_loss_experiment(table.clone(), &f, &f, &seq, 3, &params, &opts).unwrap();
        for row in &tbl.rows {
            assert!(row.leaf_diff < 1e-12, "f = g must give zero leaf diff");
            assert!(row.global_diff < 1e-12, "f = g must give zero global diff");
        }
    }

    #[test]
    fn admissibility_check() {
        let (table, _) = reference();
        let seq = MapSequence::constant(table.clone(), 3);
        seq.check_admissible(1e-3).unwrap();
        let (mut s, fam) = three_disks();
        s[1].center = crate::geom::Vec2::new(0.48, 0.5);
        let other =
            Arc::new(BilliardTable::build(s, fam, &BuildOptions::default()).unwrap());
        let mixed = MapSequence::from_tables(vec![table.clone(), other], 2);
        assert!(matches!(
            mixed.check_admissible(1e-3),
            Err(TransferError::NotAdmissible(_))
        ));
    }
}
