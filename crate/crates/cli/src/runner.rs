//! Experiment execution and artifact emission.

use crate::config::{ExperimentConfig, TableConfig};
use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use sinai::cone::{cone_membership, ConeParams, CurveSampler};
use sinai::diag::{selftest, SelftestOptions};
use sinai::geom::Vec2;
use sinai::lorentz::{
    drift_stats, memory_loss_lorentz, walk_ensemble, LorentzConfig, W_RIGHT,
};
use sinai::open::{escape_rate, limiting_density, Hole, OpenComposition};
use sinai::scatter::{
    beam_survival, build_boxed, lazy_orbit, lorentz_cell_box, lorentz_cell_family,
};
use sinai::stats::child_rng;
use sinai::table::{BilliardTable, BuildOptions, Scatterer};
use sinai::transfer::{
    memory_loss_experiment, sample_srb, DensityField, MapSequence, MemoryLossOptions,
};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Execution context shared by the subcommands.
pub struct RunContext {
    pub config: ExperimentConfig,
    pub config_text: String,
    pub config_dir: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub force: bool,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_sha256: &'a str,
    seed: u64,
    force: bool,
    fitted: serde_json::Value,
    outputs: Vec<String>,
}

impl RunContext {
    pub fn config_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.config_text.as_bytes());
        hasher.update(self.seed.to_le_bytes());
        format!("{:x}", hasher.finalize())
    }

    pub fn table(&self) -> Result<Arc<BilliardTable>> {
        let tc: TableConfig =
            crate::config::load_table_config(&self.config.table, Some(&self.config_dir))?;
        tc.build()
    }

    pub fn cone_params(&self, delta0: f64) -> Result<ConeParams> {
        self.config.cone.build(delta0)
    }

    fn write_csv(&self, name: &str, header: &str, rows: &[String]) -> Result<String> {
        std::fs::create_dir_all(&self.out_dir)?;
        let path = self.out_dir.join(name);
        let mut text = String::new();
        writeln!(text, "# config_sha256 = {}", self.config_hash())?;
        writeln!(text, "{header}")?;
        for row in rows {
            writeln!(text, "{row}")?;
        }
        std::fs::write(&path, text)?;
        Ok(name.to_string())
    }

    fn write_manifest(
        &self,
        command: &str,
        fitted: serde_json::Value,
        outputs: Vec<String>,
    ) -> Result<()> {
        let hash = self.config_hash();
        let manifest = Manifest {
            tool: "sinai",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_sha256: &hash,
            seed: self.seed,
            force: self.force,
            fitted,
            outputs,
        };
        std::fs::create_dir_all(&self.out_dir)?;
        let path = self.out_dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

/// `selftest`: run the invariant suite; nonzero exit on failure.
pub fn run_selftest(ctx: &RunContext) -> Result<bool> {
    let table = ctx.table()?;
    let s = ctx.config.selftest.clone().unwrap_or_default();
    let opts = SelftestOptions {
        involution_points: s.involution_points,
        mc_samples: s.mc_samples,
        cone_vectors: s.cone_vectors,
        seed: ctx.seed,
        orbit_tol: s.orbit_tol,
    };
    let report = selftest(&table, &opts);
    for item in &report.items {
        println!(
            "{} {}: value {:.3e} threshold {:.3e}",
            if item.pass { "PASS" } else { "FAIL" },
            item.name,
            item.value,
            item.threshold
        );
    }
    std::fs::create_dir_all(&ctx.out_dir)?;
    std::fs::write(
        ctx.out_dir.join("selftest.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    ctx.write_manifest(
        "selftest",
        serde_json::json!({ "all_pass": report.all_pass() }),
        vec!["selftest.json".into()],
    )?;
    Ok(report.all_pass())
}

/// `decay` / `equi`: loss-of-memory experiment.
pub fn run_decay(ctx: &RunContext, equidistribution: bool) -> Result<bool> {
    let table = ctx.table()?;
    let section = ctx
        .config
        .decay
        .clone()
        .context("config missing [decay] section")?;
    let params = ctx.cone_params(table.family.delta0)?;
    let f = section.density_f.build(&table)?;
    let g = section.density_g.build(&table)?;
    let seq = match &section.perturbation {
        None => MapSequence::constant(table.clone(), section.horizon),
        Some(p) => {
            let mut scatterers: Vec<Scatterer> = table.scatterers.clone();
            if p.scatterer >= scatterers.len() {
                bail!("perturbation scatterer index out of range");
            }
            scatterers[p.scatterer].center =
                scatterers[p.scatterer].center + Vec2::new(p.dx, p.dy);
            let other = Arc::new(
                BilliardTable::build_on(
                    table.torus,
                    scatterers,
                    table.family,
                    &BuildOptions::default(),
                )
                .context("perturbed table failed to build")?,
            );
            let tables: Vec<Arc<BilliardTable>> = (0..section.horizon)
                .map(|i| {
                    if i % 2 == 0 {
                        table.clone()
                    } else {
                        other.clone()
                    }
                })
                .collect();
            let seq = MapSequence::from_tables(tables, section.horizon);
            if !ctx.force {
                seq.check_admissible(p.kappa)
                    .context("sequence failed the admissibility check (use --force to skip)")?;
            } else {
                eprintln!("warning: --force set, skipping admissibility check");
            }
            seq
        }
    };
    let opts = MemoryLossOptions {
        mc_samples: section.mc_samples,
        seed: ctx.seed,
        witnesses: 4,
        pointwise_panels: 200,
        equidistribution,
    };
    let tbl = memory_loss_experiment(
        table.clone(),
        &f,
        &g,
        &seq,
        section.horizon,
        &params,
        &opts,
    )?;
    let (rate, ci, r2) = match tbl.global_fit {
        Some(fit) => (
            fit.slope.exp(),
            fit.slope.exp() * (fit.slope_ci95().exp() - 1.0),
            fit.r_squared,
        ),
        None => (f64::NAN, f64::NAN, f64::NAN),
    };
    let rows: Vec<String> = tbl
        .rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{}",
                r.n,
                fmt(r.leaf_diff),
                fmt(r.global_diff),
                fmt(rate),
                fmt(ci)
            )
        })
        .collect();
    let name = if equidistribution { "equi.csv" } else { "decay.csv" };
    let out = ctx.write_csv(name, "n,leafwise_diff,global_diff,fitted_rate,ci", &rows)?;
    println!(
        "{}: fitted rate {:.4} (ci {:.4}), R^2 {:.4}",
        name, rate, ci, r2
    );
    ctx.write_manifest(
        if equidistribution { "equi" } else { "decay" },
        serde_json::json!({
            "theta_hat": rate,
            "theta_ci": ci,
            "r_squared": r2,
            "leaf_theta": tbl.leaf_theta(),
        }),
        vec![out],
    )?;
    Ok(rate.is_finite() && rate < 1.0)
}

/// `cone-check`: dictionary membership report for a density.
pub fn run_cone_check(ctx: &RunContext) -> Result<bool> {
    let table = ctx.table()?;
    let section = ctx
        .config
        .cone_check
        .clone()
        .context("config missing [cone_check] section")?;
    let params = ctx.cone_params(table.family.delta0)?;
    let sampler = CurveSampler::build(&table, &params, section.n_curves)?;
    let density = section.density.build(&table)?;
    let report = cone_membership(&table, &|x: &sinai::PhasePoint| density.eval(x), &params, &sampler)?;
    println!(
        "cone-check '{}': member = {}, margins: cond2 {:.4}, cond3 {:.4}, cond5 {:.4}",
        density.name,
        report.is_member(),
        report.cond2_margin,
        report.cond3_margin,
        report.cond5_margin
    );
    std::fs::create_dir_all(&ctx.out_dir)?;
    std::fs::write(
        ctx.out_dir.join("cone_report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    ctx.write_manifest(
        "cone-check",
        serde_json::json!({ "member": report.is_member() }),
        vec!["cone_report.json".into()],
    )?;
    Ok(report.is_member())
}

/// `escape`: survival masses, escape rate, eigen-residuals.
pub fn run_escape(ctx: &RunContext) -> Result<bool> {
    let table = ctx.table()?;
    let section = ctx
        .config
        .escape
        .clone()
        .context("config missing [escape] section")?;
    let hole = match section.hole.kind.as_str() {
        "arc" => Hole::make_arc(
            &table,
            section.hole.scatterer,
            section.hole.from,
            section.hole.to,
        )?,
        "shadow" => Hole::make_shadow(
            &table,
            Vec2::new(section.hole.center[0], section.hole.center[1]),
            section.hole.radius,
        )?,
        other => bail!("unknown hole kind '{other}'"),
    };
    let comp = OpenComposition::constant(
        table.clone(),
        Arc::new(hole),
        section.n_between,
        section.n_macro,
    );
    let f = DensityField::constant(1.0);
    let est = escape_rate(&comp, &f, section.n_macro, section.samples, ctx.seed)?;
    let ells: Vec<f64> = table.scatterers.iter().map(|s| s.arclength()).collect();
    let obs1 = |_x: &sinai::PhasePoint| 1.0;
    let obs2 = |x: &sinai::PhasePoint| x.phi.sin() + 1.5;
    let obs3 = move |x: &sinai::PhasePoint| {
        (2.0 * std::f64::consts::PI * x.r / ells[x.scatterer]).cos() + 1.5
    };
    let observables: Vec<&(dyn Fn(&sinai::PhasePoint) -> f64 + Sync)> =
        vec![&obs1, &obs2, &obs3];
    let n_density = (section.n_macro * 3 / 4).max(2);
    let (_cloud, residuals) = limiting_density(
        &comp,
        &f,
        n_density,
        section.samples,
        ctx.seed ^ 0xd1,
        est.nu_hat,
        &observables,
    )?;
    let rows: Vec<String> = (0..est.masses.len())
        .map(|n| {
            format!(
                "{},{},{},{},{}",
                n,
                est.survivors[n],
                fmt(est.masses[n]),
                if n == 0 {
                    "".to_string()
                } else {
                    fmt(est.ratios[n - 1])
                },
                fmt(est.nu_hat)
            )
        })
        .collect();
    let out = ctx.write_csv("escape.csv", "n,survivors,mass,ratio,nu_hat", &rows)?;
    println!(
        "escape: nu_hat {:.4} (ci {:.4}), ratio spread {:.4}, eigen residuals {:?}",
        est.nu_hat, est.nu_ci, est.ratio_spread, residuals
    );
    ctx.write_manifest(
        "escape",
        serde_json::json!({
            "nu_hat": est.nu_hat,
            "nu_ci": est.nu_ci,
            "ratio_spread": est.ratio_spread,
            "window_spread": est.window_spread,
            "eigen_residuals": residuals,
        }),
        vec![out],
    )?;
    Ok(est.nu_hat > 0.0 && est.nu_hat < 1.0)
}

/// `scatter`: lazy-gate beam survival plus the exit histogram and the
/// open-system cross-check.
pub fn run_scatter(ctx: &RunContext) -> Result<bool> {
    let section = ctx
        .config
        .scatter
        .clone()
        .context("config missing [scatter] section")?;
    let (obstacles, rect) = lorentz_cell_box(section.r, section.rho, Vec2::new(0.5, 0.5));
    let boxed = build_boxed(
        &obstacles,
        rect,
        lorentz_cell_family(0.04),
        &BuildOptions::default(),
    )?;
    let beam = beam_survival(
        &boxed,
        section.n_macro,
        section.n_lazy,
        section.samples,
        ctx.seed,
    );
    if beam.re_entries > 0 {
        bail!("{} re-entries observed: escape lemma violated", beam.re_entries);
    }
    let rows: Vec<String> = beam
        .survival
        .iter()
        .enumerate()
        .map(|(n, s)| format!("{},{},{}", n, fmt(*s), beam.survivors[n]))
        .collect();
    let out1 = ctx.write_csv("survival.csv", "step,survival,survivors", &rows)?;

    // Exit histogram over angular bins.
    let bins = section.angle_bins.max(4);
    let mut hist = vec![0usize; bins];
    let mut exits = 0usize;
    let mut rng = child_rng(ctx.seed ^ 0x5ca7, 0);
    for _ in 0..(section.samples / 4).max(10_000) {
        let xt = sample_srb(&boxed.unfolded, &mut rng);
        let x0 = boxed.project(&xt);
        let outcome = lazy_orbit(&boxed, x0, section.n_macro, section.n_lazy);
        if let Some(exit) = outcome.exit {
            let bin = ((exit.angle / (2.0 * std::f64::consts::PI) * bins as f64) as usize)
                .min(bins - 1);
            hist[bin] += 1;
            exits += 1;
        }
    }
    let rows: Vec<String> = (0..bins)
        .map(|b| {
            let lo = 2.0 * std::f64::consts::PI * b as f64 / bins as f64;
            let hi = 2.0 * std::f64::consts::PI * (b + 1) as f64 / bins as f64;
            format!(
                "{},{},{},{}",
                fmt(lo),
                fmt(hi),
                hist[b],
                fmt(hist[b] as f64 / exits.max(1) as f64)
            )
        })
        .collect();
    let out2 = ctx.write_csv("exit_hist.csv", "angle_lo,angle_hi,count,fraction", &rows)?;

    // Cross-check against the unfolded open system.
    let hole = Hole::make_gate(boxed.rect.w, boxed.rect.h);
    let comp = OpenComposition::constant(
        boxed.unfolded.clone(),
        Arc::new(hole),
        section.n_lazy,
        section.n_macro,
    );
    let est = escape_rate(
        &comp,
        &DensityField::constant(1.0),
        section.n_macro,
        section.samples,
        ctx.seed ^ 0x0b5,
    )?;
    let lazy_nu = beam.fit.map(|f| f.slope.exp()).unwrap_or(f64::NAN);
    let lazy_ci = beam
        .fit
        .map(|f| f.slope.exp() * (f.slope_ci95().exp() - 1.0))
        .unwrap_or(f64::NAN);
    println!(
        "scatter: lazy survival rate {:.4} (ci {:.4}) vs open-system nu {:.4} (ci {:.4}); exits {}",
        lazy_nu, lazy_ci, est.nu_hat, est.nu_ci, exits
    );
    let consistent = (lazy_nu - est.nu_hat).abs() <= (lazy_ci + est.nu_ci).max(0.01);
    ctx.write_manifest(
        "scatter",
        serde_json::json!({
            "lazy_nu": lazy_nu,
            "lazy_ci": lazy_ci,
            "open_nu": est.nu_hat,
            "open_ci": est.nu_ci,
            "consistent": consistent,
            "re_entries": beam.re_entries,
        }),
        vec![out1, out2],
    )?;
    Ok(consistent)
}

/// `lorentz`: walk sample, drift statistics and the quenched memory-loss
/// table.
pub fn run_lorentz(ctx: &RunContext) -> Result<bool> {
    let section = ctx
        .config
        .lorentz
        .clone()
        .context("config missing [lorentz] section")?;
    let cfg = LorentzConfig {
        r: section.r,
        rho: section.rho,
        eps_star: section.eps_star,
        n_lazy: section.n_lazy,
        seed: ctx.seed,
    };
    cfg.validate()?;
    let records = walk_ensemble(&cfg, section.n_macro, section.walkers, ctx.seed ^ 0x77, (0, 0));
    let stats = drift_stats(&records);
    // Sample walk for the CSV.
    let rows: Vec<String> = records[0]
        .zs
        .iter()
        .enumerate()
        .map(|(step, z)| {
            let sym = if step == 0 {
                "".to_string()
            } else {
                records[0].symbols[step - 1].to_string()
            };
            format!("{},{},{},{}", step, z.0, z.1, sym)
        })
        .collect();
    let out1 = ctx.write_csv("walk.csv", "step,z_x,z_y,gate_symbol", &rows)?;
    println!(
        "lorentz: drift mean ({:.4e}, {:.4e}) se ({:.3e}, {:.3e}) over {} walkers",
        stats.mean.0, stats.mean.1, stats.se.0, stats.se.1, stats.walkers
    );
    let drift_ok = stats.mean.0.abs() <= 3.0 * stats.se.0 + 1e-12
        && stats.mean.1.abs() <= 3.0 * stats.se.1 + 1e-12;

    let mut outputs = vec![out1];
    let mut memory_ok = true;
    if let Some(mem) = &section.memory {
        let rows_mem = memory_loss_lorentz(
            &cfg,
            W_RIGHT,
            W_RIGHT,
            1,
            mem.n_max,
            mem.walkers,
            ctx.seed ^ 0x99,
            mem.min_matches,
        )?;
        let lines: Vec<String> = rows_mem
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{},{},{}",
                    r.gap,
                    fmt(r.diff),
                    fmt(r.se),
                    fmt(r.p_original),
                    fmt(r.p_shifted),
                    r.matches_original,
                    r.matches_shifted
                )
            })
            .collect();
        outputs.push(ctx.write_csv(
            "memory.csv",
            "gap,diff,se,p_original,p_shifted,matches_original,matches_shifted",
            &lines,
        )?);
        // Negative slope of log-diff over the significant rows.
        let pts: Vec<(f64, f64)> = rows_mem
            .iter()
            .filter(|r| r.diff > 3.0 * r.se)
            .map(|r| (r.gap as f64, r.diff.ln()))
            .collect();
        if pts.len() >= 3 {
            let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            if let Some(fit) = sinai::stats::linear_fit(&xs, &ys) {
                memory_ok = fit.slope + fit.slope_ci95() < 0.0;
                println!(
                    "lorentz memory: slope {:.4} +- {:.4} over {} significant gaps",
                    fit.slope,
                    fit.slope_ci95(),
                    pts.len()
                );
            }
        } else {
            memory_ok = false;
            println!("lorentz memory: too few significant gaps ({})", pts.len());
        }
    }
    // Laziness sweep: the smallest N with confirmed decay.
    let sweep = section.memory.as_ref().and_then(|mem| {
        smallest_decaying_laziness(&cfg, mem.walkers / 2, mem.n_max, ctx.seed ^ 0x42)
    });
    if let Some((n_lazy, slope)) = sweep {
        println!("lorentz sweep: smallest N with decay = {n_lazy} (slope {slope:.4})");
    }
    ctx.write_manifest(
        "lorentz",
        serde_json::json!({
            "drift_mean": [stats.mean.0, stats.mean.1],
            "drift_se": [stats.se.0, stats.se.1],
            "drift_ok": drift_ok,
            "memory_ok": memory_ok,
            "tau_star": cfg.tau_star(),
            "smallest_decaying_n_lazy": sweep.map(|s| s.0),
        }),
        outputs,
    )?;
    Ok(drift_ok && memory_ok)
}

/// Smallest-laziness sweep used by the lorentz experiment report.
pub fn smallest_decaying_laziness(
    base: &LorentzConfig,
    walkers: usize,
    n_max: usize,
    seed: u64,
) -> Option<(usize, f64)> {
    for n_lazy in 1..=6 {
        let cfg = LorentzConfig {
            n_lazy,
            ..*base
        };
        let Ok(rows) =
            memory_loss_lorentz(&cfg, W_RIGHT, W_RIGHT, 1, n_max, walkers, seed, 200)
        else {
            continue;
        };
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.diff > 3.0 * r.se)
            .map(|r| (r.gap as f64, r.diff.ln()))
            .collect();
        if pts.len() < 3 {
            continue;
        }
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        if let Some(fit) = sinai::stats::linear_fit(&xs, &ys) {
            if fit.slope + fit.slope_ci95() < 0.0 {
                return Some((n_lazy, fit.slope));
            }
        }
    }
    None
}

/// Resolve paths, build the context, and dispatch a command.
pub fn dispatch(
    command: &str,
    config_path: &Path,
    seed_override: Option<u64>,
    out_override: Option<PathBuf>,
    force: bool,
) -> Result<bool> {
    let (mut config, text) = crate::config::load_experiment_config(config_path)?;
    if let Some(kind) = &config.kind {
        if kind != command {
            bail!("config kind '{kind}' does not match subcommand '{command}'");
        }
    }
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    let out_dir = out_override.unwrap_or_else(|| PathBuf::from(&config.out));
    let ctx = RunContext {
        seed: config.seed,
        config_dir: config_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default(),
        out_dir,
        config,
        config_text: text,
        force,
    };
    match command {
        "selftest" => run_selftest(&ctx),
        "decay" => run_decay(&ctx, false),
        "equi" => run_decay(&ctx, true),
        "cone-check" => run_cone_check(&ctx),
        "escape" => run_escape(&ctx),
        "scatter" => run_scatter(&ctx),
        "lorentz" => run_lorentz(&ctx),
        other => bail!("unknown command '{other}'"),
    }
}
