//! Quadrature, regression and sampling helpers shared by the experiments.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// 8-point Gauss-Legendre nodes and weights on [-1, 1].
pub const GL8: [(f64, f64); 8] = [
    (-0.9602898564975363, 0.1012285362903763),
    (-0.7966664774136267, 0.2223810344533745),
    (-0.5255324099163290, 0.3137066458778873),
    (-0.1834346424956498, 0.3626837833783620),
    (0.1834346424956498, 0.3626837833783620),
    (0.5255324099163290, 0.3137066458778873),
    (0.7966664774136267, 0.2223810344533745),
    (0.9602898564975363, 0.1012285362903763),
];

/// Composite 8-node Gauss-Legendre quadrature of `f` over `[a, b]` using
/// `panels` equal subintervals.
pub fn integrate_gl(a: f64, b: f64, panels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + h / 2.0;
        let half = h / 2.0;
        for &(x, w) in GL8.iter() {
            acc += w * f(mid + half * x);
        }
    }
    acc * (b - a) / (2.0 * panels as f64)
}

/// Least-squares fit of `y = intercept + slope * x` with standard errors.
#[derive(Clone, Copy, Debug)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Standard error of the slope.
    pub slope_se: f64,
    pub n: usize,
}

impl LinearFit {
    /// Half-width of the ~95% confidence interval for the slope.
    pub fn slope_ci95(&self) -> f64 {
        // Two-sided t quantile approximated by 2.0 for the small samples
        // used here (n >= 6).
        2.0 * self.slope_se
    }
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 3 || n != ys.len() {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    let dof = (n.saturating_sub(2)).max(1) as f64;
    let slope_se = (ss_res / dof / sxx).sqrt();
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
        slope_se,
        n,
    })
}

/// Mean and standard error of a sample.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Deterministic seeded RNG; every experiment draws its streams from here.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent child stream `k` of a master seed (used by per-walker and
/// per-cell streams so results are independent of scheduling).
pub fn child_rng(seed: u64, k: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&k.to_le_bytes());
    key[16] = 0x9e;
    key[17] = 0x37;
    ChaCha8Rng::from_seed(key)
}

/// Sample `phi` with density proportional to `cos(phi)` on `[-pi/2, pi/2]`.
pub fn sample_cos_phi(rng: &mut impl Rng) -> f64 {
    (2.0 * rng.gen::<f64>() - 1.0).asin()
}
