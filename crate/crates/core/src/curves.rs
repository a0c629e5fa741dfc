//! Stable curves as sampled monotone graphs `phi_W(r)`, their pullback
//! under billiard maps with cutting at singularities and homogeneity
//! boundaries, Jacobians along curves, and growth-lemma statistics.

use crate::error::CurveError;
use crate::map::{apply_inverse, differential, homogeneity_index, Homogeneity, PhasePoint};
use crate::stats::integrate_gl;
use crate::table::BilliardTable;

/// A homogeneous stable curve stored as a sampled graph over the arclength
/// coordinate `r` with cubic Hermite interpolation. Sample `r` values are
/// strictly increasing; they may run past the scatterer arclength and are
/// wrapped at evaluation time.
#[derive(Clone, Debug)]
pub struct StableCurve {
    pub scatterer: usize,
    samples: Vec<(f64, f64)>,
    /// Hermite tangents dphi/dr at the samples.
    tangents: Vec<f64>,
    pub homogeneity: Homogeneity,
    length: f64,
    /// Cumulative arclength at each sample.
    cum_len: Vec<f64>,
}

impl StableCurve {
    /// Build a curve from graph samples `(r, phi)` with strictly
    /// increasing `r`.
    pub fn from_samples(
        scatterer: usize,
        samples: Vec<(f64, f64)>,
        k0: u32,
    ) -> Result<Self, CurveError> {
        if samples.len() < 2 {
            return Err(CurveError::Invalid("need at least 2 samples".into()));
        }
        for w in samples.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(CurveError::Invalid(format!(
                    "r samples not strictly increasing: {} then {}",
                    w[0].0, w[1].0
                )));
            }
        }
        let homogeneity = homogeneity_index(samples[0].1, k0);
        let tangents = hermite_tangents(&samples);
        let mut curve = StableCurve {
            scatterer,
            samples,
            tangents,
            homogeneity,
            length: 0.0,
            cum_len: Vec::new(),
        };
        curve.recompute_length();
        Ok(curve)
    }

    /// A straight segment in `(r, phi)` coordinates: the basic admissible
    /// stable curve (slope constant, curvature zero).
    pub fn segment(
        scatterer: usize,
        r0: f64,
        phi0: f64,
        slope: f64,
        arclen: f64,
        n_samples: usize,
        k0: u32,
    ) -> Result<Self, CurveError> {
        let dr = arclen / (1.0 + slope * slope).sqrt();
        let n = n_samples.max(2);
        let samples: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                (r0 + t * dr, phi0 + t * dr * slope)
            })
            .collect();
        Self::from_samples(scatterer, samples, k0)
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn r_range(&self) -> (f64, f64) {
        (self.samples[0].0, self.samples[self.samples.len() - 1].0)
    }

    fn recompute_length(&mut self) {
        let mut cum = Vec::with_capacity(self.samples.len());
        cum.push(0.0);
        let mut acc = 0.0;
        for i in 0..self.samples.len() - 1 {
            let (r0, r1) = (self.samples[i].0, self.samples[i + 1].0);
            acc += integrate_gl(r0, r1, 1, |r| {
                let m = self.slope_at(r);
                (1.0 + m * m).sqrt()
            });
            cum.push(acc);
        }
        self.length = acc;
        self.cum_len = cum;
    }

    fn segment_index(&self, r: f64) -> usize {
        match self
            .samples
            .binary_search_by(|probe| probe.0.partial_cmp(&r).unwrap())
        {
            Ok(i) => i.min(self.samples.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.samples.len() - 2),
        }
    }

    /// Interpolated angle at coordinate `r` (clamped to the r-range).
    pub fn phi_at(&self, r: f64) -> f64 {
        let i = self.segment_index(r);
        let (r0, p0) = self.samples[i];
        let (r1, p1) = self.samples[i + 1];
        let h = r1 - r0;
        let t = ((r - r0) / h).clamp(0.0, 1.0);
        let (m0, m1) = (self.tangents[i], self.tangents[i + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        // Difference form avoids cancellation between the p0/p1 terms.
        p0 + (p1 - p0) * (3.0 * t2 - 2.0 * t3)
            + h * ((t3 - 2.0 * t2 + t) * m0 + (t3 - t2) * m1)
    }

    /// Interpolated slope dphi/dr at `r`.
    pub fn slope_at(&self, r: f64) -> f64 {
        let i = self.segment_index(r);
        let (r0, p0) = self.samples[i];
        let (r1, p1) = self.samples[i + 1];
        let h = r1 - r0;
        let t = ((r - r0) / h).clamp(0.0, 1.0);
        let (m0, m1) = (self.tangents[i], self.tangents[i + 1]);
        let t2 = t * t;
        (6.0 * t - 6.0 * t2) * (p1 - p0) / h
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (3.0 * t2 - 2.0 * t) * m1
    }

    /// Second derivative d2phi/dr2 at `r` (for curvature diagnostics).
    pub fn second_derivative_at(&self, r: f64) -> f64 {
        let i = self.segment_index(r);
        let (r0, p0) = self.samples[i];
        let (r1, p1) = self.samples[i + 1];
        let h = r1 - r0;
        let t = ((r - r0) / h).clamp(0.0, 1.0);
        let (m0, m1) = (self.tangents[i], self.tangents[i + 1]);
        ((12.0 * t - 6.0) * (p0 - p1) / h + (6.0 * t - 4.0) * m0 + (6.0 * t - 2.0) * m1) / h
    }

    /// Graph curvature `|phi''| / (1 + phi'^2)^{3/2}` maximized over samples.
    pub fn max_curvature(&self) -> f64 {
        self.samples
            .iter()
            .map(|&(r, _)| {
                let m = self.slope_at(r);
                self.second_derivative_at(r).abs() / (1.0 + m * m).powf(1.5)
            })
            .fold(0.0, f64::max)
    }

    /// Phase point at coordinate `r` (wrapped into the scatterer arclength).
    pub fn point_at(&self, r: f64, table: &BilliardTable) -> PhasePoint {
        let ell = table.scatterers[self.scatterer].arclength();
        PhasePoint::new(self.scatterer, r.rem_euclid(ell), self.phi_at(r))
    }

    /// Unit tangent `(dr, dphi)` at coordinate `r`.
    pub fn unit_tangent(&self, r: f64) -> (f64, f64) {
        let m = self.slope_at(r);
        let n = (1.0 + m * m).sqrt();
        (1.0 / n, m / n)
    }

    /// Map an arclength position `s in [0, length]` to the r coordinate.
    pub fn r_at_arclength(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length);
        let i = match self
            .cum_len
            .binary_search_by(|probe| probe.partial_cmp(&s).unwrap())
        {
            Ok(i) => i.min(self.samples.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.samples.len() - 2),
        };
        let (r0, _) = self.samples[i];
        let (r1, _) = self.samples[i + 1];
        let seg = self.cum_len[i + 1] - self.cum_len[i];
        if seg <= 0.0 {
            return r0;
        }
        let t = (s - self.cum_len[i]) / seg;
        r0 + t * (r1 - r0)
    }

    /// Arclength from the left endpoint to coordinate `r`.
    pub fn arclength_at_r(&self, r: f64) -> f64 {
        let i = self.segment_index(r);
        let (r0, _) = self.samples[i];
        let (r1, _) = self.samples[i + 1];
        let t = ((r - r0) / (r1 - r0)).clamp(0.0, 1.0);
        self.cum_len[i] + t * (self.cum_len[i + 1] - self.cum_len[i])
    }

    /// `sqrt(1 + phi'(r)^2)`, the graph metric factor `||G'_W||`.
    pub fn metric_factor(&self, r: f64) -> f64 {
        let m = self.slope_at(r);
        (1.0 + m * m).sqrt()
    }

    /// Integrate `f(r)` over the curve with respect to arclength.
    pub fn integrate(&self, panels_per_segment: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.samples.len() - 1 {
            let (r0, r1) = (self.samples[i].0, self.samples[i + 1].0);
            acc += integrate_gl(r0, r1, panels_per_segment, |r| f(r) * self.metric_factor(r));
        }
        acc
    }

    /// Extract the sub-curve between arclength positions `[s0, s1]`.
    pub fn sub_curve(&self, s0: f64, s1: f64, k0: u32) -> Result<StableCurve, CurveError> {
        let ra = self.r_at_arclength(s0);
        let rb = self.r_at_arclength(s1);
        let mut pts = vec![(ra, self.phi_at(ra))];
        for &(r, p) in &self.samples {
            if r > ra + 1e-13 && r < rb - 1e-13 {
                pts.push((r, p));
            }
        }
        pts.push((rb, self.phi_at(rb)));
        StableCurve::from_samples(self.scatterer, pts, k0)
    }

    /// Check the stable-curve invariants against family bounds.
    pub fn validate(&self, table: &BilliardTable, curvature_bound: f64) -> Result<(), CurveError> {
        let (lo, hi) = table.family.stable_slope_bounds();
        for &(r, phi) in &self.samples {
            let m = self.slope_at(r);
            if m < lo - 1e-9 || m > hi + 1e-9 {
                return Err(CurveError::Invalid(format!(
                    "slope {m} outside stable cone [{lo}, {hi}]"
                )));
            }
            if homogeneity_index(phi, table.family.k0) != self.homogeneity {
                return Err(CurveError::Invalid(
                    "curve crosses a homogeneity boundary".into(),
                ));
            }
        }
        if self.max_curvature() > curvature_bound {
            return Err(CurveError::Invalid(format!(
                "curvature {} exceeds bound {}",
                self.max_curvature(),
                curvature_bound
            )));
        }
        if self.length > table.family.delta0 * (1.0 + 1e-9) {
            return Err(CurveError::Invalid(format!(
                "length {} exceeds delta0 {}",
                self.length, table.family.delta0
            )));
        }
        Ok(())
    }

    /// Serialize to the curve dump format.
    pub fn dump(&self) -> String {
        let mut out = String::from("stable-curve v1\n");
        out.push_str(&format!("scatterer {}\n", self.scatterer));
        match self.homogeneity {
            Homogeneity::Bulk => out.push_str("homogeneity bulk\n"),
            Homogeneity::Strip(k) => out.push_str(&format!("homogeneity strip {k}\n")),
        }
        out.push_str(&format!("samples {}\n", self.samples.len()));
        for &(r, p) in &self.samples {
            out.push_str(&format!("{r:.17e} {p:.17e}\n"));
        }
        out
    }

    /// Parse the curve dump format.
    pub fn parse(text: &str, k0: u32) -> Result<StableCurve, CurveError> {
        let mut lines = text.lines();
        let bad = |m: &str| CurveError::Invalid(format!("curve dump: {m}"));
        if lines.next() != Some("stable-curve v1") {
            return Err(bad("missing header"));
        }
        let scatterer: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("scatterer "))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("bad scatterer line"))?;
        let _hom = lines.next().ok_or_else(|| bad("missing homogeneity"))?;
        let n: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("samples "))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("bad samples line"))?;
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            let line = lines.next().ok_or_else(|| bad("truncated samples"))?;
            let mut it = line.split_whitespace();
            let r: f64 = it
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad("bad r"))?;
            let p: f64 = it
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad("bad phi"))?;
            samples.push((r, p));
        }
        StableCurve::from_samples(scatterer, samples, k0)
    }
}

fn hermite_tangents(samples: &[(f64, f64)]) -> Vec<f64> {
    let n = samples.len();
    let mut m = vec![0.0; n];
    if n == 2 {
        let s = (samples[1].1 - samples[0].1) / (samples[1].0 - samples[0].0);
        return vec![s, s];
    }
    for i in 1..n - 1 {
        m[i] = (samples[i + 1].1 - samples[i - 1].1) / (samples[i + 1].0 - samples[i - 1].0);
    }
    m[0] = 2.0 * (samples[1].1 - samples[0].1) / (samples[1].0 - samples[0].0) - m[1];
    m[n - 1] = 2.0 * (samples[n - 1].1 - samples[n - 2].1)
        / (samples[n - 1].0 - samples[n - 2].0)
        - m[n - 2];
    m
}

/// A member of a pullback generation with its ancestry bookkeeping.
#[derive(Clone, Debug)]
pub struct FamilyMember {
    pub curve: StableCurve,
    /// Index of the ancestor in the previous generation.
    pub ancestor: usize,
    /// Most recent generation index at which the ancestry chain passed
    /// through a component of length >= delta0/3 (ties use >=).
    pub last_long_generation: Option<usize>,
}

/// A generation of homogeneous stable curves produced by pullback.
#[derive(Clone, Debug)]
pub struct CurveFamily {
    pub generation: usize,
    pub members: Vec<FamilyMember>,
    /// Total arclength dropped in sub-resolution pieces.
    pub discarded_mass: f64,
    /// Tangency hits encountered while sampling backward images.
    pub tangency_hits: usize,
}

impl CurveFamily {
    pub fn single(w: StableCurve) -> Self {
        CurveFamily {
            generation: 0,
            members: vec![FamilyMember {
                curve: w,
                ancestor: 0,
                last_long_generation: Some(0),
            }],
            discarded_mass: 0.0,
            tangency_hits: 0,
        }
    }
}

/// Options for pullback and subdivision.
#[derive(Clone, Debug)]
pub struct PullbackOptions {
    /// Initial number of source sample points per curve.
    pub base_samples: usize,
    /// Target spacing of image samples as a fraction of delta0.
    pub image_spacing: f64,
    /// Cut localization resolution in the source r coordinate.
    pub cut_resolution: f64,
    /// Pieces shorter than this are discarded (mass accumulated).
    pub min_piece: f64,
    /// Budget of backward-map evaluations per pullback.
    pub max_evals: usize,
    /// Split components longer than delta0 into pieces of length in
    /// [delta0/2, delta0]. The one-step expansion property is stated for
    /// maximal components and turns this off.
    pub subdivide: bool,
}

impl Default for PullbackOptions {
    fn default() -> Self {
        PullbackOptions {
            base_samples: 17,
            image_spacing: 1.0 / 24.0,
            cut_resolution: 1e-12,
            min_piece: 1e-9,
            max_evals: 500_000,
            subdivide: true,
        }
    }
}

#[derive(Clone, Copy)]
struct ImagePoint {
    r_src: f64,
    image: Option<(usize, f64, f64)>, // (scatterer, r, phi)
}

struct Refiner<'a> {
    table: &'a BilliardTable,
    w: &'a StableCurve,
    opts: &'a PullbackOptions,
    evals: usize,
    tangency_hits: usize,
}

impl<'a> Refiner<'a> {
    fn eval(&mut self, r: f64) -> Result<ImagePoint, CurveError> {
        self.evals += 1;
        if self.evals > self.opts.max_evals {
            return Err(CurveError::Resolution {
                lo: r,
                hi: r,
                iters: self.opts.max_evals,
            });
        }
        let x = self.w.point_at(r, self.table);
        match apply_inverse(self.table, &x) {
            Ok(y) => Ok(ImagePoint {
                r_src: r,
                image: Some((y.scatterer, y.r, y.phi)),
            }),
            Err(_) => {
                self.tangency_hits += 1;
                Ok(ImagePoint {
                    r_src: r,
                    image: None,
                })
            }
        }
    }

    /// Whether two image points may be joined without further refinement.
    fn joined(&self, a: &ImagePoint, b: &ImagePoint) -> bool {
        let (Some((sa, ra, pa)), Some((sb, rb, pb))) = (a.image, b.image) else {
            return false;
        };
        if sa != sb {
            return false;
        }
        let k0 = self.table.family.k0;
        if homogeneity_index(pa, k0) != homogeneity_index(pb, k0) {
            return false;
        }
        let ell = self.table.scatterers[sa].arclength();
        let mut dr = (rb - ra).rem_euclid(ell);
        if dr > ell / 2.0 {
            dr -= ell;
        }
        let d = (dr * dr + (pb - pa) * (pb - pa)).sqrt();
        d <= self.table.family.delta0 * self.opts.image_spacing
    }

    /// Push all points of `(a, b]` onto `out`, subdividing until adjacent
    /// points are joined or separated by no more than the cut resolution.
    fn refine(
        &mut self,
        a: ImagePoint,
        b: ImagePoint,
        out: &mut Vec<ImagePoint>,
    ) -> Result<(), CurveError> {
        if self.joined(&a, &b) || b.r_src - a.r_src <= self.opts.cut_resolution {
            out.push(b);
            return Ok(());
        }
        let mid = self.eval(0.5 * (a.r_src + b.r_src))?;
        self.refine(a, mid, out)?;
        self.refine(mid, b, out)
    }
}

/// Backward image of one curve under one map, cut at singularities and
/// homogeneity boundaries into homogeneous components; components longer
/// than `delta0` are subdivided into pieces of length in
/// `[delta0/2, delta0]`.
pub fn pull_back(
    table: &BilliardTable,
    w: &StableCurve,
    opts: &PullbackOptions,
) -> Result<CurveFamily, CurveError> {
    let family = pull_back_family(table, &CurveFamily::single(w.clone()), opts)?;
    Ok(family)
}

/// One pullback step applied to every member of a family.
pub fn pull_back_family(
    table: &BilliardTable,
    family: &CurveFamily,
    opts: &PullbackOptions,
) -> Result<CurveFamily, CurveError> {
    let delta0 = table.family.delta0;
    let k0 = table.family.k0;
    let mut members = Vec::new();
    let mut discarded = family.discarded_mass;
    let mut tangency_hits = family.tangency_hits;
    let next_gen = family.generation + 1;

    for (anc_idx, parent) in family.members.iter().enumerate() {
        let w = &parent.curve;
        let mut refiner = Refiner {
            table,
            w,
            opts,
            evals: 0,
            tangency_hits: 0,
        };
        let (ra, rb) = w.r_range();
        let n0 = opts.base_samples.max(3);
        let mut chain: Vec<ImagePoint> = Vec::with_capacity(n0 * 4);
        let first = refiner.eval(ra)?;
        chain.push(first);
        let mut prev = first;
        for i in 1..n0 {
            let r = ra + (rb - ra) * i as f64 / (n0 - 1) as f64;
            let next = refiner.eval(r)?;
            refiner.refine(prev, next, &mut chain)?;
            prev = next;
        }
        tangency_hits += refiner.tangency_hits;

        // Assemble maximal joined runs.
        let mut runs: Vec<Vec<(usize, f64, f64)>> = Vec::new();
        let mut cur: Vec<(usize, f64, f64)> = Vec::new();
        let mut last: Option<ImagePoint> = None;
        for pt in chain {
            match pt.image {
                None => {
                    if cur.len() >= 2 {
                        runs.push(std::mem::take(&mut cur));
                    } else {
                        cur.clear();
                    }
                    last = None;
                }
                Some(img) => {
                    let joined = match last {
                        Some(lp) => refiner.joined(&lp, &pt),
                        None => false,
                    };
                    if !joined && !cur.is_empty() {
                        if cur.len() >= 2 {
                            runs.push(std::mem::take(&mut cur));
                        } else {
                            cur.clear();
                        }
                    }
                    cur.push(img);
                    last = Some(pt);
                }
            }
        }
        if cur.len() >= 2 {
            runs.push(cur);
        }

        for run in runs {
            // Unwrap the image r coordinate into a contiguous branch.
            let ell = table.scatterers[run[0].0].arclength();
            let mut pts: Vec<(f64, f64)> = Vec::with_capacity(run.len());
            let mut r_acc = run[0].1;
            pts.push((r_acc, run[0].2));
            for k in 1..run.len() {
                let mut dr = (run[k].1 - run[k - 1].1).rem_euclid(ell);
                if dr > ell / 2.0 {
                    dr -= ell;
                }
                r_acc += dr;
                pts.push((r_acc, run[k].2));
            }
            // Orient with increasing r and drop numerically coincident points.
            if pts.len() >= 2 && pts[pts.len() - 1].0 < pts[0].0 {
                pts.reverse();
            }
            let mut clean: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
            for p in pts {
                match clean.last() {
                    Some(&(rl, _)) if p.0 <= rl + 1e-13 => {}
                    _ => clean.push(p),
                }
            }
            if clean.len() < 2 {
                continue;
            }
            let scatterer = run[0].0;
            let piece = StableCurve::from_samples(scatterer, clean, k0)?;
            if piece.length() < opts.min_piece {
                discarded += piece.length();
                continue;
            }
            // Subdivide long components into equal pieces.
            let n_pieces = if opts.subdivide {
                (piece.length() / delta0).ceil().max(1.0) as usize
            } else {
                1
            };
            let is_long = piece.length() >= delta0 / 3.0;
            let long_gen = if is_long {
                Some(next_gen)
            } else {
                parent.last_long_generation
            };
            for j in 0..n_pieces {
                let s0 = piece.length() * j as f64 / n_pieces as f64;
                let s1 = piece.length() * (j + 1) as f64 / n_pieces as f64;
                let sub = if n_pieces == 1 {
                    piece.clone()
                } else {
                    piece.sub_curve(s0, s1, k0)?
                };
                if sub.length() < opts.min_piece {
                    discarded += sub.length();
                    continue;
                }
                members.push(FamilyMember {
                    curve: sub,
                    ancestor: anc_idx,
                    last_long_generation: long_gen,
                });
            }
        }
    }

    Ok(CurveFamily {
        generation: next_gen,
        members,
        discarded_mass: discarded,
        tangency_hits,
    })
}

/// `n`-th generation of `w` under the map sequence `tables = (T_1, ..)`
/// applied in composition order `T_n o ... o T_1`: the homogeneous
/// components of `T_n^{-1} w`, with long-ancestor bookkeeping.
///
/// `tables` lists the per-step maps in forward order; pullback therefore
/// consumes it from the back.
pub fn generations(
    tables: &[&BilliardTable],
    w: &StableCurve,
    n: usize,
    opts: &PullbackOptions,
) -> Result<CurveFamily, CurveError> {
    assert!(n <= tables.len(), "need at least n tables for n generations");
    let mut family = CurveFamily::single(w.clone());
    for k in 0..n {
        let table = tables[tables.len() - 1 - k];
        family = pull_back_family(table, &family, opts)?;
    }
    Ok(family)
}

/// Sampled Jacobian of `T_n` along a component of `T_n^{-1} w`.
#[derive(Clone, Debug)]
pub struct JacobianTrace {
    /// Per-sample (arclength position, J value).
    pub values: Vec<(f64, f64)>,
    pub sup_norm: f64,
    /// `max |log J(x) - log J(y)| / d(x,y)^{1/3}` over sample pairs.
    pub distortion_witness: f64,
}

/// Forward stable Jacobian of the composition along a component of
/// `T_n^{-1} target`. Samples whose forward orbits hit the tangency guard
/// are skipped.
pub fn jacobian_trace(
    tables: &[&BilliardTable],
    component: &StableCurve,
    target: &StableCurve,
    n_samples: usize,
) -> Result<JacobianTrace, CurveError> {
    let mut values = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let s = component.length() * (i as f64 + 0.5) / n_samples as f64;
        let r = component.r_at_arclength(s);
        if let Some(j) = forward_jacobian(tables, component, target, r) {
            values.push((s, j));
        }
    }
    if values.is_empty() {
        return Err(CurveError::Invalid(
            "all Jacobian samples hit tangencies".into(),
        ));
    }
    let sup_norm = values.iter().map(|&(_, j)| j).fold(0.0, f64::max);
    let mut witness: f64 = 0.0;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            let d = (values[j].0 - values[i].0).abs();
            if d > 1e-14 {
                let w = (values[j].1.ln() - values[i].1.ln()).abs() / d.powf(1.0 / 3.0);
                witness = witness.max(w);
            }
        }
    }
    Ok(JacobianTrace {
        values,
        sup_norm,
        distortion_witness: witness,
    })
}

/// Euclidean stable Jacobian of `T_n` along a component of `T_n^{-1} W`
/// at coordinate `r`, where `target` is the forward image curve `W`.
///
/// Computed as the reciprocal of the backward tangent growth: the forward
/// orbit is followed pointwise, the unit tangent is read off the target
/// curve at the endpoint, and the differentials are applied backward.
/// Transporting a stable tangent forward is numerically unstable (any
/// interpolation error excites the unstable direction and grows
/// exponentially); the backward transport is attracted to the stable
/// direction instead.
pub fn forward_jacobian(
    tables: &[&BilliardTable],
    component: &StableCurve,
    target: &StableCurve,
    r: f64,
) -> Option<f64> {
    let table0 = tables[0];
    let mut x = component.point_at(r, table0);
    let mut mats = Vec::with_capacity(tables.len());
    for table in tables {
        let (dt, c) = differential(table, &x).ok()?;
        mats.push(dt);
        x = c.point;
    }
    if x.scatterer != target.scatterer {
        return None;
    }
    let ell = table0.scatterers[target.scatterer].arclength();
    let (ra, rb) = target.r_range();
    let mut r_img = x.r;
    while r_img < ra - ell / 2.0 {
        r_img += ell;
    }
    while r_img > rb + ell / 2.0 {
        r_img -= ell;
    }
    let m = target.slope_at(r_img.clamp(ra, rb));
    let norm0 = (1.0 + m * m).sqrt();
    let mut u = (1.0 / norm0, m / norm0);
    let mut backward = 1.0;
    for dt in mats.iter().rev() {
        let w = dt.inverse().apply(u);
        let norm = (w.0 * w.0 + w.1 * w.1).sqrt();
        backward *= norm;
        u = (w.0 / norm, w.1 / norm);
    }
    Some(1.0 / backward)
}

/// Adapted (p-metric) norm of a tangent vector: `cos(phi) |dr|`.
pub fn adapted_norm(phi: f64, v: (f64, f64)) -> f64 {
    phi.cos() * v.0.abs()
}

/// Jacobian of a single forward map in the adapted metric at coordinate
/// `r` of `component`, together with the Euclidean/adapted equivalence
/// ratio at the source point.
///
/// The adapted norm is the geometric mean of the cosine-weighted (p) norm
/// and the Euclidean norm. The p-factor keeps the regular branch below
/// `1/Lambda`; the Euclidean factor decays like `k^{-2}` on grazing-fan
/// components, so the one-step sums converge. On any homogeneity class
/// the norm is uniformly equivalent to the Euclidean metric; the
/// equivalence ratio is returned, not assumed.
///
/// Both factors are evaluated image-side: the p-Jacobian as the
/// reciprocal backward expansion `cos(phi_x) / (cos(phi_x) +
/// tau (K_x + |m_x|))` with `m_x` the slope of the target curve at the
/// image, the Euclidean one through the cosine and slope conversion
/// factors. The source-side expressions suffer catastrophic cancellation
/// in the fan; these are uniformly conditioned.
pub fn forward_jacobian_adapted(
    table: &BilliardTable,
    component: &StableCurve,
    target: &StableCurve,
    r: f64,
) -> Option<(f64, f64)> {
    let y = component.point_at(r, table);
    let c = crate::map::next_collision(table, &y).ok()?;
    let x = c.point;
    if x.scatterer != target.scatterer {
        return None;
    }
    // Slope of the target curve at the image point.
    let ell = table.scatterers[target.scatterer].arclength();
    let (ra, rb) = target.r_range();
    let mut r_img = x.r;
    while r_img < ra - ell / 2.0 {
        r_img += ell;
    }
    while r_img > rb + ell / 2.0 {
        r_img -= ell;
    }
    let m_x = target.slope_at(r_img.clamp(ra, rb));
    let m_y = component.slope_at(r);
    let kappa_x = table.scatterers[x.scatterer].curvature();
    let cos_x = x.phi.cos();
    let cos_y = y.phi.cos();
    let jac_p = cos_x / (cos_x + c.flight_time * (kappa_x + m_x.abs()));
    let jac_eucl =
        jac_p * (cos_y / cos_x) * ((1.0 + m_x * m_x) / (1.0 + m_y * m_y)).sqrt();
    let jac = (jac_p * jac_eucl).sqrt();
    let equiv = {
        // ||v||_* / ||v|| = sqrt(cos(phi) / sqrt(1 + m^2)) at the source.
        let ratio = (cos_y / (1.0 + m_y * m_y).sqrt()).sqrt();
        ratio.max(1.0 / ratio)
    };
    Some((jac, equiv))
}

/// Growth-lemma sums over a generation of `target`: total `sup J` mass
/// and the mass carried by components shorter than `delta`.
pub fn growth_sums(
    tables: &[&BilliardTable],
    family: &CurveFamily,
    target: &StableCurve,
    delta: f64,
    samples_per_curve: usize,
) -> Result<(f64, f64), CurveError> {
    let mut sum_all = 0.0;
    let mut sum_short = 0.0;
    for m in &family.members {
        let trace = jacobian_trace(tables, &m.curve, target, samples_per_curve)?;
        sum_all += trace.sup_norm;
        if m.curve.length() < delta {
            sum_short += trace.sup_norm;
        }
    }
    Ok((sum_all, sum_short))
}

/// One-step expansion sum of (H3): `sum_i |J_{V_i}T|_*` over the maximal
/// homogeneous components `V_i` of `T^{-1} W`, in the adapted metric.
/// Also returns the largest Euclidean/adapted equivalence ratio seen.
pub fn one_step_expansion(
    table: &BilliardTable,
    w: &StableCurve,
    opts: &PullbackOptions,
) -> Result<(f64, f64), CurveError> {
    let opts = PullbackOptions {
        subdivide: false,
        ..opts.clone()
    };
    let family = pull_back(table, w, &opts)?;
    let mut total = 0.0;
    let mut equiv_max: f64 = 1.0;
    for m in &family.members {
        let mut sup: f64 = 0.0;
        let n_samples = 9;
        for i in 0..n_samples {
            let s = m.curve.length() * (i as f64 + 0.5) / n_samples as f64;
            let r = m.curve.r_at_arclength(s);
            if let Some((j, equiv)) = forward_jacobian_adapted(table, &m.curve, w, r) {
                sup = sup.max(j);
                equiv_max = equiv_max.max(equiv);
            }
        }
        total += sup;
    }
    Ok((total, equiv_max))
}

/// Distance between stable curves viewed as graphs:
/// `|phi_1 - phi_2|_{C^1(I_1 cap I_2)} + |I_1 symdiff I_2|`, infinite when
/// the curves live on different scatterers or homogeneity regions or do
/// not overlap.
pub fn curve_distance(w1: &StableCurve, w2: &StableCurve, table: &BilliardTable) -> f64 {
    if w1.scatterer != w2.scatterer || w1.homogeneity != w2.homogeneity {
        return f64::INFINITY;
    }
    let ell = table.scatterers[w1.scatterer].arclength();
    let (a1, b1) = w1.r_range();
    let (a2_raw, b2_raw) = w2.r_range();
    // Align the second interval with the first modulo the arclength.
    let shift = ((a2_raw - a1) / ell).round() * ell;
    let (a2, b2) = (a2_raw - shift, b2_raw - shift);
    let lo = a1.max(a2);
    let hi = b1.min(b2);
    if hi <= lo {
        return f64::INFINITY;
    }
    let n = 64;
    let mut sup0: f64 = 0.0;
    let mut sup1: f64 = 0.0;
    for i in 0..=n {
        let r = lo + (hi - lo) * i as f64 / n as f64;
        sup0 = sup0.max((w1.phi_at(r) - w2.phi_at(r + shift)).abs());
        sup1 = sup1.max((w1.slope_at(r) - w2.slope_at(r + shift)).abs());
    }
    let sym_diff = (b1 - a1) + (b2 - a2) - 2.0 * (hi - lo);
    sup0 + sup1 + sym_diff
}
