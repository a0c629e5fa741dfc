//! Configuration schemas: table files and experiment files, both TOML.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sinai::cone::ConeParams;
use sinai::geom::{Torus, Vec2};
use sinai::table::{BilliardTable, BuildOptions, FamilyParams, Scatterer};
use sinai::transfer::DensityField;
use std::path::Path;
use std::sync::Arc;

/// Table configuration file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableConfig {
    /// Torus periods; defaults to the unit torus.
    #[serde(default = "default_torus")]
    pub torus: [f64; 2],
    pub scatterers: Vec<ScattererConfig>,
    pub family: FamilyConfig,
}

fn default_torus() -> [f64; 2] {
    [1.0, 1.0]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScattererConfig {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyConfig {
    pub tau_star: f64,
    pub kappa_star: f64,
    #[serde(default = "default_e_star")]
    pub e_star: f64,
    pub k0: u32,
    pub delta0: f64,
}

fn default_e_star() -> f64 {
    10.0
}

impl TableConfig {
    pub fn build(&self) -> Result<Arc<BilliardTable>> {
        let scatterers: Vec<Scatterer> = self
            .scatterers
            .iter()
            .map(|s| Scatterer::new(Vec2::new(s.center[0], s.center[1]), s.radius))
            .collect();
        let family = FamilyParams {
            tau_star: self.family.tau_star,
            kappa_star: self.family.kappa_star,
            e_star: self.family.e_star,
            k0: self.family.k0,
            delta0: self.family.delta0,
        };
        let table = BilliardTable::build_on(
            Torus::new(self.torus[0], self.torus[1]),
            scatterers,
            family,
            &BuildOptions::default(),
        )
        .context("table construction failed")?;
        Ok(Arc::new(table))
    }
}

/// Named density presets for experiment configs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityConfig {
    pub preset: String,
    #[serde(default)]
    pub amplitude: f64,
}

impl DensityConfig {
    pub fn build(&self, table: &Arc<BilliardTable>) -> Result<DensityField> {
        let amp = if self.amplitude == 0.0 {
            0.3
        } else {
            self.amplitude
        };
        let ells: Vec<f64> = table.scatterers.iter().map(|s| s.arclength()).collect();
        Ok(match self.preset.as_str() {
            "one" => DensityField::constant(1.0),
            "cos_r" => DensityField::from_fn(format!("1+{amp}*cos_r"), move |x| {
                1.0 + amp * (2.0 * std::f64::consts::PI * x.r / ells[x.scatterer]).cos()
            }),
            "sin_phi" => DensityField::from_fn(format!("1+{amp}*sin_phi"), move |x| {
                1.0 + amp * x.phi.sin()
            }),
            "mixed" => DensityField::from_fn(format!("1+{amp}*mixed"), move |x| {
                1.0 + amp
                    * ((2.0 * std::f64::consts::PI * x.r / ells[x.scatterer]).cos()
                        * x.phi.cos()
                        + 0.5 * x.phi.sin())
            }),
            other => bail!("unknown density preset '{other}'"),
        })
    }
}

/// Optional cone-parameter overrides.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ConeConfig {
    pub c: Option<f64>,
    pub big_a: Option<f64>,
    pub big_l: Option<f64>,
    pub delta: Option<f64>,
    pub a: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub q: Option<f64>,
}

impl ConeConfig {
    pub fn build(&self, delta0: f64) -> Result<ConeParams> {
        let mut p = ConeParams::defaults(delta0);
        if let Some(v) = self.c {
            p.c = v;
        }
        if let Some(v) = self.big_a {
            p.big_a = v;
        }
        if let Some(v) = self.big_l {
            p.big_l = v;
        }
        if let Some(v) = self.delta {
            p.delta = v;
        }
        if let Some(v) = self.a {
            p.a = v;
        }
        if let Some(v) = self.alpha {
            p.alpha = v;
        }
        if let Some(v) = self.beta {
            p.beta = v;
        }
        if let Some(v) = self.gamma {
            p.gamma = v;
        }
        if let Some(v) = self.q {
            p.q = v;
        }
        p.validate(delta0)
            .map_err(|e| anyhow::anyhow!("cone parameters invalid: {e}"))?;
        Ok(p)
    }
}

/// A two-table alternating sequence generated by shifting one scatterer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub scatterer: usize,
    pub dx: f64,
    pub dy: f64,
    /// Admissibility radius for the block structure.
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

fn default_kappa() -> f64 {
    0.05
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecaySection {
    #[serde(default = "twelve")]
    pub horizon: usize,
    #[serde(default = "four_million")]
    pub mc_samples: usize,
    pub density_f: DensityConfig,
    pub density_g: DensityConfig,
    #[serde(default)]
    pub perturbation: Option<PerturbationConfig>,
}

fn twelve() -> usize {
    12
}
fn four_million() -> usize {
    4_000_000
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeCheckSection {
    pub density: DensityConfig,
    #[serde(default = "default_curves")]
    pub n_curves: usize,
}

fn default_curves() -> usize {
    24
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HoleConfig {
    /// "arc" or "shadow".
    pub kind: String,
    #[serde(default)]
    pub scatterer: usize,
    #[serde(default)]
    pub from: f64,
    #[serde(default)]
    pub to: f64,
    #[serde(default)]
    pub center: [f64; 2],
    #[serde(default)]
    pub radius: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EscapeSection {
    pub hole: HoleConfig,
    #[serde(default = "four")]
    pub n_between: usize,
    #[serde(default = "twenty_four")]
    pub n_macro: usize,
    #[serde(default = "four_hundred_k")]
    pub samples: usize,
}

fn four() -> usize {
    4
}
fn twenty_four() -> usize {
    24
}
fn four_hundred_k() -> usize {
    400_000
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScatterSection {
    #[serde(default = "r_default")]
    pub r: f64,
    #[serde(default = "rho_default")]
    pub rho: f64,
    #[serde(default = "four")]
    pub n_lazy: usize,
    #[serde(default = "eighteen")]
    pub n_macro: usize,
    #[serde(default = "three_hundred_k")]
    pub samples: usize,
    /// Angular exit-histogram bins.
    #[serde(default = "bins_default")]
    pub angle_bins: usize,
}

fn r_default() -> f64 {
    0.4
}
fn rho_default() -> f64 {
    0.25
}
fn eighteen() -> usize {
    18
}
fn three_hundred_k() -> usize {
    300_000
}
fn bins_default() -> usize {
    24
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LorentzMemorySection {
    #[serde(default = "nine")]
    pub n_max: usize,
    #[serde(default = "four_hundred_k")]
    pub walkers: usize,
    #[serde(default = "three_hundred")]
    pub min_matches: usize,
}

fn nine() -> usize {
    9
}
fn three_hundred() -> usize {
    300
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LorentzSection {
    pub r: f64,
    pub rho: f64,
    pub eps_star: f64,
    #[serde(default = "two")]
    pub n_lazy: usize,
    #[serde(default = "ten_k")]
    pub walkers: usize,
    #[serde(default = "thousand")]
    pub n_macro: usize,
    #[serde(default)]
    pub memory: Option<LorentzMemorySection>,
}

fn two() -> usize {
    2
}
fn ten_k() -> usize {
    10_000
}
fn thousand() -> usize {
    1_000
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SelftestSection {
    #[serde(default = "ten_k")]
    pub involution_points: usize,
    #[serde(default = "one_million")]
    pub mc_samples: usize,
    #[serde(default = "two_k")]
    pub cone_vectors: usize,
    #[serde(default = "orbit_tol_default")]
    pub orbit_tol: f64,
}

fn one_million() -> usize {
    1_000_000
}
fn two_k() -> usize {
    2_000
}
fn orbit_tol_default() -> f64 {
    1e-8
}

impl Default for SelftestSection {
    fn default() -> Self {
        SelftestSection {
            involution_points: ten_k(),
            mc_samples: one_million(),
            cone_vectors: two_k(),
            orbit_tol: orbit_tol_default(),
        }
    }
}

/// Top-level experiment configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Experiment kind; must match the subcommand when both are given.
    #[serde(default)]
    pub kind: Option<String>,
    /// Table file path or a `bundled:` name.
    pub table: String,
    #[serde(default = "default_out")]
    pub out: String,
    #[serde(default = "one")]
    pub seed: u64,
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub cone: ConeConfig,
    #[serde(default)]
    pub decay: Option<DecaySection>,
    #[serde(default)]
    pub cone_check: Option<ConeCheckSection>,
    #[serde(default)]
    pub escape: Option<EscapeSection>,
    #[serde(default)]
    pub scatter: Option<ScatterSection>,
    #[serde(default)]
    pub lorentz: Option<LorentzSection>,
    #[serde(default)]
    pub selftest: Option<SelftestSection>,
}

fn default_out() -> String {
    "out".into()
}
fn one() -> u64 {
    1
}

pub const BUNDLED_THREE_DISKS: &str = include_str!("../configs/three_disks.toml");
pub const BUNDLED_EXPERIMENT: &str = include_str!("../configs/experiment.toml");

/// Load a table config from a path or a `bundled:` name.
pub fn load_table_config(spec: &str, base: Option<&Path>) -> Result<TableConfig> {
    let text = match spec.strip_prefix("bundled:") {
        Some("three-disks") => BUNDLED_THREE_DISKS.to_string(),
        Some(other) => bail!("unknown bundled table '{other}'"),
        None => {
            let path = match base {
                Some(b) if !Path::new(spec).is_absolute() => b.join(spec),
                _ => Path::new(spec).to_path_buf(),
            };
            std::fs::read_to_string(&path)
                .with_context(|| format!("reading table config {}", path.display()))?
        }
    };
    toml::from_str(&text).context("parsing table config")
}

pub fn load_experiment_config(path: &Path) -> Result<(ExperimentConfig, String)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading experiment config {}", path.display()))?;
    let cfg = toml::from_str(&text).context("parsing experiment config")?;
    Ok((cfg, text))
}
