//! Test-function cones on stable curves, the Hilbert projective metric,
//! the density-cone functionals and numeric membership checks with
//! margins.

use crate::curves::{curve_distance, StableCurve};
use crate::error::ConeError;
use crate::map::{homogeneity_index, Homogeneity, PhasePoint};
use crate::table::BilliardTable;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

/// A function on phase space that the cone machinery can integrate along
/// stable curves.
pub trait PhaseField: Sync {
    fn eval(&self, x: &PhasePoint) -> f64;
}

impl<F: Fn(&PhasePoint) -> f64 + Sync> PhaseField for F {
    fn eval(&self, x: &PhasePoint) -> f64 {
        self(x)
    }
}

/// Parameters of the density cone `C_{c,A,L}(delta)` and of the
/// test-function cones `D_{a,beta}` used inside it.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConeParams {
    pub c: f64,
    pub big_a: f64,
    pub big_l: f64,
    /// Length scale of the cone; at most `delta0/3`.
    pub delta: f64,
    /// Log-Hoelder amplitude of admissible test functions.
    pub a: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub q: f64,
}

impl ConeParams {
    /// Default parameters for a family with subdivision scale `delta0`:
    /// `alpha = 1/3`, `beta = 1/6`, `q = 0.4`,
    /// `gamma = min(alpha - beta, q)`, `L = 60 < A = 250 < c = 2500`.
    pub fn defaults(delta0: f64) -> Self {
        ConeParams {
            c: 2500.0,
            big_a: 250.0,
            big_l: 60.0,
            delta: delta0 / 3.0,
            a: 1.05,
            alpha: 1.0 / 3.0,
            beta: 1.0 / 6.0,
            gamma: f64::min(1.0 / 3.0 - 1.0 / 6.0, 0.4),
            q: 0.4,
        }
    }

    pub fn validate(&self, delta0: f64) -> Result<(), ConeError> {
        let fail = |m: String| Err(ConeError::Domain(m));
        if !(self.q > 0.0 && self.q < 0.5) {
            return fail(format!("q = {} outside (0, 1/2)", self.q));
        }
        if !(self.beta < self.alpha && self.alpha <= 1.0 / 3.0 && self.beta > 0.0) {
            return fail(format!(
                "need 0 < beta < alpha <= 1/3, got beta={}, alpha={}",
                self.beta, self.alpha
            ));
        }
        if self.gamma > (self.alpha - self.beta).min(self.q) {
            return fail(format!("gamma = {} too large", self.gamma));
        }
        if !(1.0 < self.big_l && self.big_l < self.big_a && self.big_a < self.c) {
            return fail(format!(
                "need 1 < L < A < c, got L={}, A={}, c={}",
                self.big_l, self.big_a, self.c
            ));
        }
        if self.a <= 1.0 {
            return fail(format!("need a > 1, got {}", self.a));
        }
        if (2.0 * self.a * delta0.powf(self.beta)).exp() > 2.0 {
            return fail(format!(
                "exp(2 a delta0^beta) = {} exceeds 2; shrink delta0",
                (2.0 * self.a * delta0.powf(self.beta)).exp()
            ));
        }
        if self.delta > delta0 / 3.0 {
            return fail(format!(
                "delta = {} exceeds delta0/3 = {}",
                self.delta,
                delta0 / 3.0
            ));
        }
        Ok(())
    }
}

/// A positive test function sampled along a stable curve, carrying its
/// measured log-Hoelder certificate.
#[derive(Clone, Debug)]
pub struct TestFunction {
    pub curve: Arc<StableCurve>,
    /// Values at the curve samples.
    values: Vec<f64>,
    /// Arclength positions of the samples.
    positions: Vec<f64>,
    /// Hoelder exponent of the certificate.
    pub exponent: f64,
    /// Measured `max |log psi(x) - log psi(y)| / d(x,y)^exponent`.
    pub certificate: f64,
}

impl TestFunction {
    pub fn new(
        curve: Arc<StableCurve>,
        exponent: f64,
        values: Vec<f64>,
    ) -> Result<Self, ConeError> {
        assert_eq!(values.len(), curve.samples().len());
        if values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(ConeError::Domain(
                "test function values must be positive and finite".into(),
            ));
        }
        let positions: Vec<f64> = curve
            .samples()
            .iter()
            .map(|&(r, _)| curve.arclength_at_r(r))
            .collect();
        let mut certificate: f64 = 0.0;
        for i in 0..values.len() {
            for j in i + 1..values.len() {
                let d = (positions[j] - positions[i]).abs();
                if d > 1e-15 {
                    let c = (values[j].ln() - values[i].ln()).abs() / d.powf(exponent);
                    certificate = certificate.max(c);
                }
            }
        }
        Ok(TestFunction {
            curve,
            values,
            positions,
            exponent,
            certificate,
        })
    }

    /// Build from a positive function of arclength.
    pub fn from_fn(
        curve: Arc<StableCurve>,
        exponent: f64,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self, ConeError> {
        let values = curve
            .samples()
            .iter()
            .map(|&(r, _)| f(curve.arclength_at_r(r)))
            .collect();
        Self::new(curve, exponent, values)
    }

    /// Membership check in `D_{a,exponent}(W)`.
    pub fn check_membership(&self, a: f64) -> Result<(), ConeError> {
        if self.certificate > a {
            return Err(ConeError::NotInCone {
                certificate: self.certificate,
                a,
            });
        }
        Ok(())
    }

    /// Value at arclength `s` by linear interpolation (positivity is
    /// preserved).
    pub fn eval_at_arclength(&self, s: f64) -> f64 {
        let n = self.positions.len();
        if s <= self.positions[0] {
            return self.values[0];
        }
        if s >= self.positions[n - 1] {
            return self.values[n - 1];
        }
        let i = match self
            .positions
            .binary_search_by(|p| p.partial_cmp(&s).unwrap())
        {
            Ok(i) => return self.values[i],
            Err(i) => i - 1,
        };
        let t = (s - self.positions[i]) / (self.positions[i + 1] - self.positions[i]);
        self.values[i] + (self.values[i + 1] - self.values[i]) * t
    }

    /// Value at the r coordinate of the underlying curve.
    pub fn eval_at_r(&self, r: f64) -> f64 {
        self.eval_at_arclength(self.curve.arclength_at_r(r))
    }

    /// `int_W psi dm_W`.
    pub fn integral(&self) -> f64 {
        self.curve.integrate(2, |r| self.eval_at_r(r))
    }
}

/// The seven dictionary shapes used to probe the sup/inf over
/// `D_{a,beta}(W)`: a constant, exponential bumps anchored at both ends
/// and both orientations at the midpoint, and gentle ramps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Shape {
    Const,
    ExpLeft,
    ExpRight,
    MidPlus,
    MidMinus,
    RampUp,
    RampDown,
}

pub const SHAPES: [Shape; 7] = [
    Shape::Const,
    Shape::ExpLeft,
    Shape::ExpRight,
    Shape::MidPlus,
    Shape::MidMinus,
    Shape::RampUp,
    Shape::RampDown,
];

/// Instantiate a shape on a curve with amplitude `amp` and Hoelder
/// exponent `exponent`.
pub fn make_shape(
    curve: &Arc<StableCurve>,
    shape: Shape,
    exponent: f64,
    amp: f64,
) -> Result<TestFunction, ConeError> {
    let len = curve.length();
    let f: Box<dyn Fn(f64) -> f64> = match shape {
        Shape::Const => Box::new(|_s| 1.0),
        Shape::ExpLeft => Box::new(move |s: f64| (amp * s.powf(exponent)).exp()),
        Shape::ExpRight => Box::new(move |s: f64| (amp * (len - s).max(0.0).powf(exponent)).exp()),
        Shape::MidPlus => {
            Box::new(move |s: f64| (amp * (s - len / 2.0).abs().powf(exponent)).exp())
        }
        Shape::MidMinus => {
            Box::new(move |s: f64| (-amp * (s - len / 2.0).abs().powf(exponent)).exp())
        }
        Shape::RampUp => {
            let eps = 0.9 * amp * len.powf(exponent);
            Box::new(move |s: f64| 1.0 + eps * s / len)
        }
        Shape::RampDown => {
            let eps = 0.9 * amp * len.powf(exponent);
            Box::new(move |s: f64| 1.0 + eps * (1.0 - s / len))
        }
    };
    TestFunction::from_fn(curve.clone(), exponent, f)
}

/// Hilbert projective metric on `D_{a,alpha}(W)` via the quadruple-sup
/// representation, evaluated on `refine` equispaced arclength positions.
/// The value is monotone nondecreasing under grid refinement.
pub fn hilbert_metric(
    a: f64,
    alpha: f64,
    psi1: &TestFunction,
    psi2: &TestFunction,
    refine: usize,
) -> Result<f64, ConeError> {
    psi1.check_membership(a)?;
    psi2.check_membership(a)?;
    let len = psi1.curve.length();
    let n = refine.max(8);
    let s: Vec<f64> = (0..n).map(|i| len * i as f64 / (n - 1) as f64).collect();
    let v1: Vec<f64> = s.iter().map(|&x| psi1.eval_at_arclength(x)).collect();
    let v2: Vec<f64> = s.iter().map(|&x| psi2.eval_at_arclength(x)).collect();
    let mut sup_ratio = f64::NEG_INFINITY;
    let mut inf_ratio = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = (s[i] - s[j]).abs();
            let e = (a * d.powf(alpha)).exp();
            let num = e * v1[i] - v1[j];
            let den = e * v2[i] - v2[j];
            if num <= 0.0 || den <= 0.0 {
                // A saturated certificate: the projective distance is
                // infinite at this resolution.
                return Ok(f64::INFINITY);
            }
            let r = num / den;
            sup_ratio = sup_ratio.max(r);
            inf_ratio = inf_ratio.min(r);
        }
    }
    Ok((sup_ratio / inf_ratio).ln().max(0.0))
}

/// Diameter bound of the contracted cone inside `C_{c,A,L}(delta)`:
/// `Delta = log((1+chi)^2 / (1-chi)^2 * chi * L)` for
/// `chi in (max(1/2, 1/L, 1/sqrt(A-1)), 1)`.
pub fn bound_diameter(chi: f64, params: &ConeParams) -> Result<f64, ConeError> {
    let lo = 0.5_f64
        .max(1.0 / params.big_l)
        .max(1.0 / (params.big_a - 1.0).sqrt());
    if !(chi > lo && chi < 1.0) {
        return Err(ConeError::Domain(format!(
            "chi = {chi} outside admissible interval ({lo}, 1)"
        )));
    }
    Ok(((1.0 + chi).powi(2) / (1.0 - chi).powi(2) * chi * params.big_l).ln())
}

/// One-step projective contraction factor implied by a diameter bound.
pub fn vartheta_from_diameter(diameter: f64) -> f64 {
    (diameter / 4.0).tanh()
}

/// Finite-diameter bound of `D_{sigma a, beta}(W)` inside
/// `D_{a,beta}(W)` for curves of length at most `delta0`.
pub fn finite_diameter_bound(a: f64, sigma: f64, delta0: f64, beta: f64) -> f64 {
    let d0b = delta0.powf(beta);
    (((a + sigma * a).powi(2) / (a - sigma * a).powi(2)).ln())
        + 2.0 * a * (1.0 + sigma) * d0b
        + 2.0 * a * d0b
}

/// Stratified dictionary of admissible stable curves.
#[derive(Clone)]
pub struct CurveSampler {
    /// Curves with length in `[delta, 2 delta]` (the class `W^s(delta)`).
    pub regular: Vec<Arc<StableCurve>>,
    /// Curves with length at most `2 delta`, including strip curves
    /// (the class `W^s_-(delta)`).
    pub short: Vec<Arc<StableCurve>>,
}

impl CurveSampler {
    /// Build a deterministic dictionary: `n_regular` bulk curves with
    /// lengths stratified over `[delta, 2 delta]`, positions stratified
    /// over scatterers and boundary coordinates, slopes in the middle band
    /// of the stable cone; plus short bulk curves and maximal homogeneous
    /// strip curves.
    pub fn build(
        table: &BilliardTable,
        params: &ConeParams,
        n_regular: usize,
    ) -> Result<Self, ConeError> {
        let k0 = table.family.k0;
        let (lo, _hi) = table.family.stable_slope_bounds();
        let mut regular = Vec::new();
        let mut short = Vec::new();
        let n_s = table.n_scatterers();
        for i in 0..n_regular {
            let si = i % n_s;
            let ell = table.scatterers[si].arclength();
            let u = (i as f64 + 0.5) / n_regular as f64;
            let r0 = (0.07 + 0.86 * ((u * 7.0) % 1.0)) * ell;
            let phi0 = -1.1 + 2.2 * ((u * 3.0) % 1.0);
            // Mid-band slopes: fractions 0.35..0.50 of the steep cone edge.
            let frac = 0.35 + 0.15 * ((u * 5.0) % 1.0);
            let slope = lo * frac;
            let len = params.delta * (1.0 + ((u * 11.0) % 1.0));
            let curve = StableCurve::segment(si, r0, phi0, slope, len, 17, k0)
                .map_err(ConeError::Curve)?;
            regular.push(Arc::new(curve));
        }
        // Short bulk curves.
        for i in 0..(n_regular / 2).max(4) {
            let si = i % n_s;
            let ell = table.scatterers[si].arclength();
            let u = (i as f64 + 0.5) / (n_regular / 2).max(4) as f64;
            let r0 = (0.1 + 0.8 * ((u * 13.0) % 1.0)) * ell;
            let phi0 = 0.9 - 1.8 * ((u * 3.0) % 1.0);
            let frac = 0.35 + 0.15 * ((u * 5.0) % 1.0);
            let slope = lo * frac;
            let len = params.delta * (0.15 + 0.8 * u);
            let curve = StableCurve::segment(si, r0, phi0, slope, len, 9, k0)
                .map_err(ConeError::Curve)?;
            short.push(Arc::new(curve));
        }
        // Maximal homogeneous strip curves near both tangency lines.
        for (j, &k) in [k0, 2 * k0, 4 * k0].iter().enumerate() {
            for sign in [1.0f64, -1.0] {
                let si = j % n_s;
                let ell = table.scatterers[si].arclength();
                let kf = k as f64;
                let u_mid = 0.5 * (1.0 / (kf * kf) + 1.0 / ((kf + 1.0) * (kf + 1.0)));
                let width = 1.0 / (kf * kf) - 1.0 / ((kf + 1.0) * (kf + 1.0));
                let phi_mid = sign * (std::f64::consts::FRAC_PI_2 - u_mid);
                let slope = lo * 0.52;
                // Fit inside the strip with a safety factor.
                let len = 0.7 * width * (1.0 + slope * slope).sqrt() / slope.abs();
                let r0 = (0.2 + 0.25 * j as f64) * ell;
                let phi0 = phi_mid - 0.5 * len * slope / (1.0 + slope * slope).sqrt();
                let curve = StableCurve::segment(si, r0, phi0, slope, len, 9, k0)
                    .map_err(ConeError::Curve)?;
                debug_assert!(matches!(curve.homogeneity, Homogeneity::Strip(_)));
                short.push(Arc::new(curve));
            }
        }
        if regular.is_empty() {
            return Err(ConeError::EmptySampler);
        }
        Ok(CurveSampler { regular, short })
    }

    /// Every curve of the dictionary (regular then short).
    pub fn all(&self) -> impl Iterator<Item = &Arc<StableCurve>> {
        self.regular.iter().chain(self.short.iter())
    }
}

/// Where an extremum of a dictionary scan was attained.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Witness {
    pub curve: usize,
    pub shape: Shape,
}

/// The leafwise-average functionals `|||f|||_+` and `|||f|||_-` evaluated
/// as dictionary extrema: a lower bound for the sup and an upper bound for
/// the inf (finite search).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TripleNorms {
    pub plus: f64,
    pub minus: f64,
    pub plus_witness: Witness,
    pub minus_witness: Witness,
}

/// `int_W f psi dm_W` for a phase field and a test function.
fn leaf_integral(table: &BilliardTable, f: &dyn PhaseField, psi: &TestFunction) -> f64 {
    psi.curve
        .integrate(2, |r| f.eval(&psi.curve.point_at(r, table)) * psi.eval_at_r(r))
}

pub fn triple_norms(
    table: &BilliardTable,
    f: &dyn PhaseField,
    params: &ConeParams,
    sampler: &CurveSampler,
) -> Result<TripleNorms, ConeError> {
    if sampler.regular.is_empty() {
        return Err(ConeError::EmptySampler);
    }
    let rows: Vec<(usize, Shape, f64)> = sampler
        .regular
        .par_iter()
        .enumerate()
        .flat_map_iter(|(ci, curve)| {
            SHAPES.iter().map(move |&shape| (ci, curve, shape))
        })
        .map(|(ci, curve, shape)| {
            let psi = make_shape(curve, shape, params.beta, params.a / 2.0)?;
            let num = leaf_integral(table, f, &psi);
            let den = psi.integral();
            Ok((ci, shape, num / den))
        })
        .collect::<Result<_, ConeError>>()?;
    let mut plus = f64::NEG_INFINITY;
    let mut minus = f64::INFINITY;
    let mut pw = Witness {
        curve: 0,
        shape: Shape::Const,
    };
    let mut mw = pw;
    for (ci, shape, v) in rows {
        if v > plus {
            plus = v;
            pw = Witness { curve: ci, shape };
        }
        if v < minus {
            minus = v;
            mw = Witness { curve: ci, shape };
        }
    }
    Ok(TripleNorms {
        plus,
        minus,
        plus_witness: pw,
        minus_witness: mw,
    })
}

/// Report of the three cone conditions with margins normalized so that
/// positive means satisfied.
#[derive(Clone, Debug, Serialize)]
pub struct ConeReport {
    pub triple_plus: f64,
    pub triple_minus: f64,
    /// `(L |||f|||_- - |||f|||_+) / scale`.
    pub cond2_margin: f64,
    /// `(A delta^{1-q} |||f|||_- - sup |W|^{1-q} |int f psi| / int psi) / scale`.
    pub cond3_margin: f64,
    /// Margin of the matched-pair Hoelder condition.
    pub cond5_margin: f64,
    pub plus_witness: Witness,
    pub minus_witness: Witness,
    pub cond3_witness: Witness,
    pub cond5_witness: Witness,
    /// Number of matched curve pairs examined for condition 5.
    pub pairs_checked: usize,
}

impl ConeReport {
    pub fn is_member(&self) -> bool {
        self.triple_minus > 0.0
            && self.cond2_margin >= 0.0
            && self.cond3_margin >= 0.0
            && self.cond5_margin >= 0.0
    }
}

/// Matched pair for cone condition 5: a vertical translate with a slope
/// perturbation, sharing the r-interval of the base curve, with the test
/// function transported so that `d_*(psi1, psi2) = 0` exactly.
fn make_pair(
    base: &Arc<StableCurve>,
    dh: f64,
    dslope: f64,
    k0: u32,
) -> Result<Arc<StableCurve>, ConeError> {
    let samples = base.samples();
    let r_mid = 0.5 * (samples[0].0 + samples[samples.len() - 1].0);
    let moved: Vec<(f64, f64)> = samples
        .iter()
        .map(|&(r, p)| (r, p + dh + dslope * (r - r_mid)))
        .collect();
    Ok(Arc::new(
        StableCurve::from_samples(base.scatterer, moved, k0).map_err(ConeError::Curve)?,
    ))
}

/// Transport a test function across a matched pair: `psi2` is defined by
/// `psi1(r) ||G_1'(r)|| / ||G_2'(r)||`, which makes the weighted graph
/// representations equal.
fn transport(
    psi1: &TestFunction,
    target: &Arc<StableCurve>,
    exponent: f64,
) -> Result<TestFunction, ConeError> {
    let values: Vec<f64> = target
        .samples()
        .iter()
        .map(|&(r, _)| psi1.eval_at_r(r) * psi1.curve.metric_factor(r) / target.metric_factor(r))
        .collect();
    TestFunction::new(target.clone(), exponent, values)
}

pub fn cone_membership(
    table: &BilliardTable,
    f: &dyn PhaseField,
    params: &ConeParams,
    sampler: &CurveSampler,
) -> Result<ConeReport, ConeError> {
    let triple = triple_norms(table, f, params, sampler)?;
    let m_plus = triple.plus;
    let m_minus = triple.minus;

    // Condition (cone 2): |||f|||_+ <= L |||f|||_-.
    let c2_bound = params.big_l * m_minus;
    let cond2_margin = (c2_bound - m_plus) / m_plus.abs().max(c2_bound.abs()).max(1e-300);

    // Condition (cone 3): weighted small-curve bound over W^s_-(delta).
    let all: Vec<&Arc<StableCurve>> = sampler.all().collect();
    let c3_rows: Vec<(usize, Shape, f64)> = all
        .par_iter()
        .enumerate()
        .flat_map_iter(|(ci, curve)| SHAPES.iter().map(move |&s| (ci, curve, s)))
        .map(|(ci, curve, shape)| {
            let psi = make_shape(curve, shape, params.beta, params.a / 2.0)?;
            let num = leaf_integral(table, f, &psi).abs();
            let den = psi.integral();
            let w = curve.length();
            Ok((ci, shape, w.powf(1.0 - params.q) * num / den))
        })
        .collect::<Result<_, ConeError>>()?;
    let mut c3_sup = f64::NEG_INFINITY;
    let mut c3_witness = Witness {
        curve: 0,
        shape: Shape::Const,
    };
    for (ci, shape, v) in c3_rows {
        if v > c3_sup {
            c3_sup = v;
            c3_witness = Witness { curve: ci, shape };
        }
    }
    let c3_bound = params.big_a * params.delta.powf(1.0 - params.q) * m_minus;
    let cond3_margin = (c3_bound - c3_sup) / c3_sup.abs().max(c3_bound.abs()).max(1e-300);

    // Condition (cone 5): matched pairs by vertical translation and slope
    // perturbation, transported test functions with d_* = 0.
    let mut c5_sup_ratio = f64::NEG_INFINITY;
    let mut c5_witness = Witness {
        curve: 0,
        shape: Shape::Const,
    };
    let mut pairs_checked = 0usize;
    let k0 = table.family.k0;
    let pair_specs: [(f64, f64); 3] = [
        (0.35 * params.delta, 0.0),
        (0.15 * params.delta, 0.0),
        (0.25 * params.delta, 0.02),
    ];
    for (ci, base) in sampler.regular.iter().enumerate() {
        for &(dh, ds) in &pair_specs {
            let Ok(partner) = make_pair(base, dh, ds, k0) else {
                continue;
            };
            if partner.homogeneity != base.homogeneity {
                continue;
            }
            let d_w = curve_distance(base, &partner, table);
            if !(d_w.is_finite() && d_w <= params.delta) {
                continue;
            }
            for &shape in SHAPES.iter() {
                let psi1 = make_shape(base, shape, params.alpha, params.a / 2.0)?;
                let Ok(psi2) = transport(&psi1, &partner, params.alpha) else {
                    continue;
                };
                if psi2.check_membership(params.a).is_err() {
                    continue;
                }
                pairs_checked += 1;
                let n1 = leaf_integral(table, f, &psi1);
                let d1 = psi1.integral() / base.length();
                let n2 = leaf_integral(table, f, &psi2);
                let d2 = psi2.integral() / partner.length();
                let diff = (n1 / d1 - n2 / d2).abs();
                let ratio = diff / d_w.powf(params.gamma);
                if ratio > c5_sup_ratio {
                    c5_sup_ratio = ratio;
                    c5_witness = Witness { curve: ci, shape };
                }
            }
        }
    }
    let c5_bound =
        params.delta.powf(1.0 - params.gamma) * params.c * params.big_a * m_minus;
    let cond5_margin = if pairs_checked == 0 {
        1.0
    } else {
        (c5_bound - c5_sup_ratio) / c5_sup_ratio.abs().max(c5_bound.abs()).max(1e-300)
    };

    Ok(ConeReport {
        triple_plus: m_plus,
        triple_minus: m_minus,
        cond2_margin,
        cond3_margin,
        cond5_margin,
        plus_witness: triple.plus_witness,
        minus_witness: triple.minus_witness,
        cond3_witness: c3_witness,
        cond5_witness: c5_witness,
        pairs_checked,
    })
}

/// Projective order distance `log(beta/alpha)` where
/// `alpha = sup {lambda : lambda f <= g}` and
/// `beta = inf {mu : g <= mu f}`, both estimated by bisection over
/// dictionary membership of `g - lambda f` and `mu f - g`.
pub fn cone_order_distance(
    table: &BilliardTable,
    f: &dyn PhaseField,
    g: &dyn PhaseField,
    params: &ConeParams,
    sampler: &CurveSampler,
) -> Result<f64, ConeError> {
    let member = |h: &dyn PhaseField| -> bool {
        cone_membership(table, h, params, sampler)
            .map(|r| r.is_member())
            .unwrap_or(false)
    };
    if !member(f) || !member(g) {
        return Err(ConeError::NotComparable(
            "both functions must pass cone membership".into(),
        ));
    }

    // alpha: g - lambda f stays in the cone for lambda < alpha.
    let combo_gf = |lambda: f64| {
        move |x: &PhasePoint| g.eval(x) - lambda * f.eval(x)
    };
    let mut hi = 1.0;
    let mut grow = 0;
    while member(&combo_gf(hi)) {
        hi *= 2.0;
        grow += 1;
        if grow > 60 {
            return Err(ConeError::NotComparable(
                "no upper bracket for alpha: g - lambda f never leaves the cone".into(),
            ));
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if member(&combo_gf(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let alpha = lo;
    if alpha <= 0.0 {
        return Err(ConeError::NotComparable("alpha bracket collapsed".into()));
    }

    // beta: mu f - g enters the cone for mu > beta.
    let combo_fg = |mu: f64| {
        move |x: &PhasePoint| mu * f.eval(x) - g.eval(x)
    };
    let mut hi2 = 1.0;
    grow = 0;
    while !member(&combo_fg(hi2)) {
        hi2 *= 2.0;
        grow += 1;
        if grow > 60 {
            return Err(ConeError::NotComparable(
                "no bracket for beta: mu f - g never enters the cone".into(),
            ));
        }
    }
    let mut lo2 = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo2 + hi2);
        if member(&combo_fg(mid)) {
            hi2 = mid;
        } else {
            lo2 = mid;
        }
    }
    let beta = hi2;
    Ok((beta / alpha).ln())
}

/// Quick helper: does `phi` of every sample sit inside one homogeneity
/// region? Used when constructing admissible curves by hand.
pub fn is_homogeneous(samples: &[(f64, f64)], k0: u32) -> bool {
    let h0 = homogeneity_index(samples[0].1, k0);
    samples.iter().all(|&(_, p)| homogeneity_index(p, k0) == h0)
}
