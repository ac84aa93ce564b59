//! Experiment harness: JSON config ingestion, subcommand dispatch, CSV/JSON
//! emission with a checksum manifest.
//!
//! All frequency-like config fields are ordinary frequencies in Hz (suffixed
//! `_hz`) and are converted to angular rates internally. Unknown config keys
//! are rejected before any computation. Exit codes: 0 success, 2 config or
//! schema error, 3 numerical failure (with a diagnostic JSON).

use crate::dynamics::{evolve, steady_state, EvolveOptions, MasterEquationSpec};
use crate::hilbert::{number_op, HilbertConfig, Ket};
use crate::model::{self, DeviceParams, SystemParams};
use crate::phase_space::{
    cat_state, cattiness, coherent_state, fidelity, negativity, wigner, CatSpec, GridSpec, Parity,
    WignerGrid,
};
use crate::tomography::{sample_measurements, MeasurementPlan};
use crate::trajectories::{mcwf_run, McwfOptions};
use crate::{magnetics, C64, Error, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use std::time::Instant;

const TWO_PI: f64 = TAU;

// ---------------------------------------------------------------------------
// Config schema
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub device: Option<DeviceSection>,
    #[serde(default)]
    pub system: Option<SystemSection>,
    #[serde(default)]
    pub magnets: Option<MagnetSection>,
    #[serde(default)]
    pub tomography: Option<TomographySection>,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSection {
    pub z_zpf_m: f64,
    pub omega_m_hz: f64,
    pub quality_factor: f64,
    pub temperature_k: f64,
    pub gamma_z_hz: f64,
    pub g2_gradient_t_per_m2: f64,
    #[serde(default)]
    pub g1_gradient_t_per_m: f64,
}

impl DeviceSection {
    pub fn to_params(&self) -> Result<DeviceParams> {
        let dev = DeviceParams {
            z_zpf: self.z_zpf_m,
            omega_m: TWO_PI * self.omega_m_hz,
            quality_factor: self.quality_factor,
            temperature: self.temperature_k,
            gamma_z: TWO_PI * self.gamma_z_hz,
            g2_gradient: self.g2_gradient_t_per_m2,
            g1_gradient: self.g1_gradient_t_per_m,
        };
        dev.validate()?;
        Ok(dev)
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub g2_hz: f64,
    #[serde(default)]
    pub omega_hz: f64,
    #[serde(default)]
    pub delta_sigma_hz: f64,
    #[serde(default)]
    pub delta_m_hz: f64,
    pub gamma_m_hz: f64,
    pub n_th: f64,
    pub gamma_z_hz: f64,
}

impl SystemSection {
    pub fn to_params(&self) -> Result<SystemParams> {
        let params = SystemParams {
            g2: TWO_PI * self.g2_hz,
            omega: TWO_PI * self.omega_hz,
            delta_sigma: TWO_PI * self.delta_sigma_hz,
            delta_m: TWO_PI * self.delta_m_hz,
            gamma_m: TWO_PI * self.gamma_m_hz,
            n_th: self.n_th,
            gamma_z: TWO_PI * self.gamma_z_hz,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MagnetSection {
    pub radius_m: f64,
    pub length_m: f64,
    pub gap_m: f64,
    /// Material name from the shipped table; overrides `mu0_ms_t` if present.
    #[serde(default)]
    pub material: Option<String>,
    #[serde(default)]
    pub mu0_ms_t: Option<f64>,
    /// Evaluation offset from the gap center, m.
    #[serde(default)]
    pub offset_m: f64,
}

impl MagnetSection {
    pub fn to_pair(&self) -> Result<magnetics::MagnetPair> {
        let mu0_ms = match (&self.material, self.mu0_ms_t) {
            (Some(name), _) => magnetics::material(name)?.mu0_ms_tesla,
            (None, Some(v)) => v,
            (None, None) => {
                return Err(Error::Config(
                    "magnets section needs either `material` or `mu0_ms_t`".into(),
                ))
            }
        };
        magnetics::MagnetPair::new(self.radius_m, self.length_m, self.gap_m, mu0_ms)
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TomographySection {
    pub amplitude: f64,
    #[serde(default)]
    pub angles_rad: Option<Vec<f64>>,
    #[serde(default = "default_n_angles")]
    pub n_angles: usize,
    pub shots: u64,
}

fn default_n_angles() -> usize {
    16
}

impl TomographySection {
    fn angles(&self) -> Vec<f64> {
        match &self.angles_rad {
            Some(a) => a.clone(),
            None => (0..self.n_angles)
                .map(|k| TAU * k as f64 / self.n_angles as f64)
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub t_final_s: Option<f64>,
    /// MCWF step; defaults to the stability-derived value.
    #[serde(default)]
    pub dt_s: Option<f64>,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub trajectory_count: Option<usize>,
    #[serde(default = "default_output_points")]
    pub output_points: usize,
    #[serde(default)]
    pub snapshot_times_s: Vec<f64>,
    #[serde(default)]
    pub omega_list_hz: Option<Vec<f64>>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default)]
    pub grid_half_width: Option<f64>,
}

impl Default for RunSection {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all-default run section")
    }
}

fn default_n_max() -> usize {
    60
}
fn default_output_points() -> usize {
    100
}
fn default_grid_points() -> usize {
    101
}

// ---------------------------------------------------------------------------
// CLI surface
// ---------------------------------------------------------------------------

#[derive(Parser, Debug)]
#[command(name = "phonon-cat", version, about = "Two-phonon Jaynes-Cummings simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Named built-in preset (fig3a, fig4, fig5a, fig2c, figA3).
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (also PHONONCAT_OUT).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (also PHONONCAT_THREADS); defaults to machine cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, Subcommand)]
pub enum Command {
    /// Derived-rate table (g₂, γ_m, n_th, C, C = 1 threshold).
    Params,
    /// Steady-state observables over a drive sweep.
    SteadySweep,
    /// Master-equation + single-trajectory transient with Wigner snapshots.
    Transient,
    /// Cattiness 𝒞(t) with peak report.
    Cattiness,
    /// Cat-state fidelity decay F(t).
    FidelityDecay,
    /// Magnetostatic design tables.
    Magnetics,
    /// Simulated displaced-number tomography datasets.
    Tomography,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Params => "params",
            Command::SteadySweep => "steady-sweep",
            Command::Transient => "transient",
            Command::Cattiness => "cattiness",
            Command::FidelityDecay => "fidelity-decay",
            Command::Magnetics => "magnetics",
            Command::Tomography => "tomography",
        }
    }
}

fn preset_text(name: &str) -> Result<&'static str> {
    match name {
        "fig3a" => Ok(include_str!("../presets/fig3a.json")),
        "fig4" => Ok(include_str!("../presets/fig4.json")),
        "fig5a" => Ok(include_str!("../presets/fig5a.json")),
        "fig2c" => Ok(include_str!("../presets/fig2c.json")),
        "figA3" => Ok(include_str!("../presets/figA3.json")),
        other => Err(Error::Config(format!(
            "unknown preset '{other}' (available: fig3a, fig4, fig5a, fig2c, figA3)"
        ))),
    }
}

/// Entry point; returns the process exit code.
pub fn main() -> u8 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    run(cli)
}

pub fn run(cli: Cli) -> u8 {
    // configuration phase: failures exit 2
    let setup = (|| -> Result<(ExperimentConfig, String, PathBuf, usize)> {
        let text = match (&cli.config, &cli.preset) {
            (Some(path), None) => std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?,
            (None, Some(name)) => preset_text(name)?.to_string(),
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either --config or --preset, not both".into()))
            }
            (None, None) => return Err(Error::Config("one of --config or --preset is required".into())),
        };
        let mut config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("config schema error: {e}")))?;
        if let Some(seed) = cli.seed {
            config.run.seed = seed;
        }
        let out_dir = cli
            .out
            .clone()
            .or_else(|| std::env::var("PHONONCAT_OUT").ok().map(PathBuf::from))
            .or_else(|| config.run.output_dir.clone().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        let threads = cli
            .threads
            .or_else(|| {
                std::env::var("PHONONCAT_THREADS")
                    .ok()
                    .and_then(|s| s.parse().ok())
            })
            .unwrap_or(0); // 0 = rayon default (machine cores)
        let canonical = serde_json::to_string_pretty(&config).map_err(Error::Json)?;
        Ok((config, canonical, out_dir, threads))
    })();
    let (config, canonical, out_dir, threads) = match setup {
        Ok(v) => v,
        Err(e) => {
            eprintln!("config error: {e}");
            return 2;
        }
    };
    if threads > 0 {
        // ignore failure if a global pool already exists (e.g. in tests)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("cannot create output directory {}: {e}", out_dir.display());
        return 2;
    }
    let started = Instant::now();
    let result = dispatch(cli.command, &config, &canonical, &out_dir);
    match result {
        Ok(outputs) => {
            match write_manifest(cli.command, &config, &canonical, &out_dir, &outputs, started) {
                Ok(()) => 0,
                Err(e) => {
                    eprintln!("manifest write failed: {e}");
                    3
                }
            }
        }
        Err(e) => {
            let code = match &e {
                Error::Config(_) | Error::Json(_) | Error::InvalidParameter(_) => 2,
                _ => 3,
            };
            if code == 3 {
                let diag = serde_json::json!({
                    "command": cli.command.name(),
                    "error": format!("{e}"),
                    "config_sha256": sha256_hex(canonical.as_bytes()),
                });
                let path = out_dir.join("error.json");
                let _ = std::fs::write(&path, serde_json::to_string_pretty(&diag).unwrap());
                eprintln!("numerical failure: {e} (diagnostic: {})", path.display());
            } else {
                eprintln!("config error: {e}");
            }
            code
        }
    }
}

fn dispatch(
    command: Command,
    config: &ExperimentConfig,
    canonical: &str,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let ctx = EmitContext {
        command: command.name(),
        config_sha256: sha256_hex(canonical.as_bytes()),
        seed: config.run.seed,
        out_dir: out_dir.to_path_buf(),
    };
    match command {
        Command::Params => cmd_params(config, &ctx),
        Command::SteadySweep => cmd_steady_sweep(config, &ctx),
        Command::Transient => cmd_transient(config, &ctx),
        Command::Cattiness => cmd_cattiness(config, &ctx),
        Command::FidelityDecay => cmd_fidelity_decay(config, &ctx),
        Command::Magnetics => cmd_magnetics(config, &ctx),
        Command::Tomography => cmd_tomography(config, &ctx),
    }
}

// ---------------------------------------------------------------------------
// Output plumbing
// ---------------------------------------------------------------------------

struct EmitContext {
    command: &'static str,
    config_sha256: String,
    seed: u64,
    out_dir: PathBuf,
}

/// Pinned float formatting: 17 significant digits, reproducible bytes.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl EmitContext {
    fn csv_header(&self) -> String {
        format!(
            "# phonon-cat v{}\n# command: {}\n# config_sha256: {}\n# seed: {}\n",
            env!("CARGO_PKG_VERSION"),
            self.command,
            self.config_sha256,
            self.seed
        )
    }

    fn write_csv(&self, name: &str, columns: &[&str], rows: &[Vec<f64>]) -> Result<PathBuf> {
        let mut text = self.csv_header();
        text.push_str(&columns.join(","));
        text.push('\n');
        for row in rows {
            let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        let path = self.out_dir.join(name);
        std::fs::write(&path, text)?;
        Ok(path)
    }

    fn write_json(&self, name: &str, value: &serde_json::Value) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, serde_json::to_string_pretty(value).map_err(Error::Json)?)?;
        Ok(path)
    }

    fn write_wigner(&self, name: &str, grid: &WignerGrid) -> Result<PathBuf> {
        let mut rows = Vec::with_capacity(grid.re_axis.len() * grid.im_axis.len());
        for (i, &re) in grid.re_axis.iter().enumerate() {
            for (j, &im) in grid.im_axis.iter().enumerate() {
                rows.push(vec![re, im, grid.values[(i, j)]]);
            }
        }
        self.write_csv(name, &["alpha_re", "alpha_im", "wigner"], &rows)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_manifest(
    command: Command,
    config: &ExperimentConfig,
    canonical: &str,
    out_dir: &Path,
    outputs: &[PathBuf],
    started: Instant,
) -> Result<()> {
    let mut files = Vec::new();
    for path in outputs {
        let bytes = std::fs::read(path)?;
        files.push(serde_json::json!({
            "file": path.file_name().and_then(|n| n.to_str()).unwrap_or_default(),
            "sha256": sha256_hex(&bytes),
        }));
    }
    let manifest = serde_json::json!({
        "tool": "phonon-cat",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command.name(),
        "seed": config.run.seed,
        "config_sha256": sha256_hex(canonical.as_bytes()),
        "resolved_config": serde_json::from_str::<serde_json::Value>(canonical).map_err(Error::Json)?,
        "wall_time_s": started.elapsed().as_secs_f64(),
        "outputs": files,
    });
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).map_err(Error::Json)?,
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

fn require_system(config: &ExperimentConfig) -> Result<SystemParams> {
    config
        .system
        .as_ref()
        .ok_or_else(|| Error::Config("this subcommand needs a `system` section".into()))?
        .to_params()
}

fn require_device(config: &ExperimentConfig) -> Result<DeviceParams> {
    config
        .device
        .as_ref()
        .ok_or_else(|| Error::Config("this subcommand needs a `device` section".into()))?
        .to_params()
}

fn require_t_final(config: &ExperimentConfig) -> Result<f64> {
    match config.run.t_final_s {
        Some(t) if t > 0.0 && t.is_finite() => Ok(t),
        _ => Err(Error::Config("run.t_final_s must be present and > 0".into())),
    }
}

fn output_times(t_final: f64, points: usize) -> Vec<f64> {
    (1..=points).map(|k| t_final * k as f64 / points as f64).collect()
}

fn grid_spec(config: &ExperimentConfig) -> GridSpec {
    GridSpec {
        half_width: config.run.grid_half_width,
        points: config.run.grid_points,
    }
}

fn build_spec(params: &SystemParams, n_max: usize) -> Result<MasterEquationSpec> {
    let cfg = HilbertConfig::new(n_max, 2)?;
    let h = model::build_two_phonon_jc(params, cfg)?;
    MasterEquationSpec::with_standard_channels(h, params.gamma_m, params.n_th, params.gamma_z)
}

/// Least-squares slope of ln(y) vs ln(x).
fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let data: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    if data.len() < 2 {
        return None;
    }
    let n = data.len() as f64;
    let xm = data.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = data.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = data.iter().map(|p| (p.0 - xm).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = data.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
    Some(sxy / sxx)
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_params(config: &ExperimentConfig, ctx: &EmitContext) -> Result<Vec<PathBuf>> {
    let dev = require_device(config)?;
    let g2 = model::g2_from_device(&dev);
    let g1 = model::g1_from_device(&dev);
    let gamma_m = dev.omega_m / dev.quality_factor;
    let n_th = model::thermal_occupation(dev.omega_m, dev.temperature);
    let coop = model::cooperativity(g2, dev.gamma_z, gamma_m, n_th)?;
    let threshold = model::gamma_z_threshold(g2, gamma_m, n_th)?;
    let row = vec![
        g2 / TWO_PI,
        g1 / TWO_PI,
        gamma_m / TWO_PI,
        n_th,
        coop,
        threshold / TWO_PI,
    ];
    let path = ctx.write_csv(
        "params.csv",
        &[
            "g2_hz",
            "g1_hz",
            "gamma_m_hz",
            "n_th",
            "cooperativity",
            "gamma_z_threshold_hz",
        ],
        &[row],
    )?;
    println!(
        "g2/(2π) = {:.4} Hz, γ_m/(2π) = {:.4e} Hz, n_th = {:.2}, C = {:.3}, C=1 at γ_z/(2π) = {:.3} Hz",
        g2 / TWO_PI,
        gamma_m / TWO_PI,
        n_th,
        coop,
        threshold / TWO_PI
    );
    Ok(vec![path])
}

fn cmd_steady_sweep(config: &ExperimentConfig, ctx: &EmitContext) -> Result<Vec<PathBuf>> {
    let base = require_system(config)?;
    let omegas = config
        .run
        .omega_list_hz
        .clone()
        .filter(|v| !v.is_empty())
        .ok_or_else(|| Error::Config("steady-sweep needs a nonempty run.omega_list_hz".into()))?;
    let n_max = config.run.n_max;
    let mut rows = Vec::new();
    let mut fit_points = Vec::new();
    for &omega_hz in &omegas {
        let params = SystemParams {
            omega: TWO_PI * omega_hz,
            ..base
        };
        let spec = build_spec(&params, n_max)?;
        let (rho, report) = steady_state(&spec)?;
        let n_mean = number_op(spec.config()).expect_rho(&rho)?.re;
        let var_x = crate::dynamics::position_variance(&rho);
        let a_mean = crate::hilbert::annihilation(spec.config()).expect_rho(&rho)?;
        let (mut l1re, mut l1im, mut l2re, mut l2im) = (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
        if n_mean > 1.5 {
            let osc = rho.partial_trace_qubit()?;
            let grid = wigner(&osc, &grid_spec(config))?;
            let peak = grid.values.max();
            let mut maxima = grid.local_maxima(0.5 * peak);
            maxima.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap());
            if let Some(&(re, im, _)) = maxima.first() {
                l1re = re;
                l1im = im;
            }
            if let Some(&(re, im, _)) = maxima.get(1) {
                l2re = re;
                l2im = im;
            }
        }
        fit_points.push((omega_hz, n_mean));
        rows.push(vec![
            omega_hz,
            n_mean,
            var_x,
            a_mean.re,
            a_mean.im,
            report.residual,
            l1re,
            l1im,
            l2re,
            l2im,
        ]);
    }
    let csv = ctx.write_csv(
        "steady_sweep.csv",
        &[
            "omega_hz",
            "n_mean",
            "x_variance",
            "a_mean_re",
            "a_mean_im",
            "residual",
            "lobe1_re",
            "lobe1_im",
            "lobe2_re",
            "lobe2_im",
        ],
        &rows,
    )?;
    // transition diagnostics: fitted exponents below and above ⟨n⟩ ≈ 1
    let below: Vec<(f64, f64)> = fit_points.iter().copied().filter(|&(_, n)| n > 1e-6 && n < 0.5).collect();
    let above: Vec<(f64, f64)> = fit_points.iter().copied().filter(|&(_, n)| n > 2.0).collect();
    let summary = serde_json::json!({
        "exponent_below_threshold": loglog_slope(&below),
        "exponent_above_threshold": loglog_slope(&above),
        "n_points": omegas.len(),
    });
    let js = ctx.write_json("steady_sweep_summary.json", &summary)?;
    Ok(vec![csv, js])
}

fn series_rows(res: &crate::dynamics::EvolutionResult) -> Vec<Vec<f64>> {
    (0..res.times.len())
        .map(|k| {
            vec![
                res.times[k],
                res.n_phonon[k],
                res.a_mean[k].re,
                res.a_mean[k].im,
                res.x_variance[k],
                res.qubit_excitation.as_ref().map_or(f64::NAN, |v| v[k]),
            ]
        })
        .collect()
}

const SERIES_COLUMNS: [&str; 6] = [
    "time_s",
    "n_mean",
    "a_mean_re",
    "a_mean_im",
    "x_variance",
    "qubit_excitation",
];

fn cmd_transient(config: &ExperimentConfig, ctx: &EmitContext) -> Result<Vec<PathBuf>> {
    let params = require_system(config)?;
    let t_final = require_t_final(config)?;
    let spec = build_spec(&params, config.run.n_max)?;
    let times = output_times(t_final, config.run.output_points);
    let snapshot_times = config.run.snapshot_times_s.clone();
    let psi0 = Ket::basis_state(spec.config(), 0, 0)?;
    let mut outputs = Vec::new();

    let res = evolve(
        &psi0.to_density(),
        &spec,
        &times,
        &EvolveOptions {
            snapshot_times: snapshot_times.clone(),
            ..EvolveOptions::default()
        },
    )?;
    outputs.push(ctx.write_csv("series_master.csv", &SERIES_COLUMNS, &series_rows(&res))?);
    for (k, (t, rho)) in res.snapshots.iter().enumerate() {
        let grid = wigner(&rho.partial_trace_qubit()?, &grid_spec(config))?;
        let path = ctx.write_wigner(&format!("wigner_master_{k}.csv"), &grid)?;
        log::info!("master snapshot {k} at t = {t:.4e} s");
        outputs.push(path);
    }

    let dt = config
        .run
        .dt_s
        .unwrap_or_else(|| crate::trajectories::default_dt(&spec));
    let opts = McwfOptions {
        dt,
        snapshot_times: snapshot_times.clone(),
    };
    let rec = mcwf_run(&psi0, &spec, &times, &opts, config.run.seed)?;
    outputs.push(ctx.write_csv(
        "series_trajectory.csv",
        &SERIES_COLUMNS,
        &series_rows(&rec.series),
    )?);
    let jump_rows: Vec<Vec<f64>> = rec
        .jumps
        .iter()
        .map(|j| vec![j.time, j.channel_index as f64])
        .collect();
    outputs.push(ctx.write_csv("jumps.csv", &["time_s", "channel_index"], &jump_rows)?);
    for (k, (t, ket)) in rec.snapshots.iter().enumerate() {
        let rho = ket.to_density().partial_trace_qubit()?;
        let grid = wigner(&rho, &grid_spec(config))?;
        let path = ctx.write_wigner(&format!("wigner_trajectory_{k}.csv"), &grid)?;
        log::info!("trajectory snapshot {k} at t = {t:.4e} s");
        outputs.push(path);
    }

    // optional ensemble average alongside the single unraveled record
    if let Some(n_traj) = config.run.trajectory_count.filter(|&n| n > 1) {
        let ens_opts = McwfOptions { dt, snapshot_times: Vec::new() };
        let runs = crate::trajectories::run_ensemble(&psi0, &spec, &times, &ens_opts, config.run.seed, n_traj)?;
        let ens = crate::trajectories::ensemble_average(&runs)?;
        let mut rows = Vec::with_capacity(times.len());
        for k in 0..ens.times.len() {
            rows.push(vec![
                ens.times[k],
                ens.mean_n[k],
                ens.stderr_n[k],
                ens.mean_qubit.as_ref().map_or(f64::NAN, |v| v[k]),
                ens.stderr_qubit.as_ref().map_or(f64::NAN, |v| v[k]),
            ]);
        }
        outputs.push(ctx.write_csv(
            "series_ensemble.csv",
            &["time_s", "n_mean", "n_stderr", "qubit_excitation", "qubit_stderr"],
            &rows,
        )?);
    }
    Ok(outputs)
}

fn cmd_cattiness(config: &ExperimentConfig, ctx: &EmitContext) -> Result<Vec<PathBuf>> {
    let params = require_system(config)?;
    let t_final = require_t_final(config)?;
    let spec = build_spec(&params, config.run.n_max)?;
    let times = output_times(t_final, config.run.output_points);
    let psi0 = Ket::basis_state(spec.config(), 0, 0)?;
    let res = evolve(
        &psi0.to_density(),
        &spec,
        &times,
        &EvolveOptions {
            snapshot_times: times.clone(),
            ..EvolveOptions::default()
        },
    )?;
    let gspec = grid_spec(config);
    let mut rows = Vec::new();
    let mut peak = (f64::NAN, f64::MIN);
    for (k, (t, rho)) in res.snapshots.iter().enumerate() {
        let osc = rho.partial_trace_qubit()?;
        let n_mean = res.n_phonon[k];
        // 𝒞 is undefined while ⟨n⟩ is too small to define a reference cat;
        // emit NaN for those early points instead of aborting the scan.
        let (catt, neg) = if n_mean > 1e-3 {
            match cattiness(&osc, &gspec) {
                Ok(c) => {
                    let grid = wigner(&osc, &gspec)?;
                    (c, negativity(&grid)?)
                }
                Err(Error::Numerical(_)) | Err(Error::InvalidParameter(_)) => {
                    (f64::NAN, f64::NAN)
                }
                Err(e) => return Err(e),
            }
        } else {
            (f64::NAN, f64::NAN)
        };
        if catt.is_finite() && catt > peak.1 {
            peak = (*t, catt);
        }
        rows.push(vec![*t, catt, neg, n_mean]);
    }
    let csv = ctx.write_csv(
        "cattiness.csv",
        &["time_s", "cattiness", "negativity", "n_mean"],
        &rows,
    )?;
    let summary = serde_json::json!({
        "peak_time_s": peak.0,
        "peak_cattiness": peak.1,
    });
    println!("peak cattiness {:.4} at t = {:.4e} s", peak.1, peak.0);
    let js = ctx.write_json("cattiness_summary.json", &summary)?;
    Ok(vec![csv, js])
}

fn cmd_fidelity_decay(config: &ExperimentConfig, ctx: &EmitContext) -> Result<Vec<PathBuf>> {
    let params = require_system(config)?;
    let t_final = require_t_final(config)?;
    if params.g2 <= 0.0 || params.omega < 0.0 {
        return Err(Error::Config("fidelity-decay needs g2 > 0 and Ω ≥ 0".into()));
    }
    let spec = build_spec(&params, config.run.n_max)?;
    let n_a = params.omega / params.g2;
    let beta = C64::new(0.0, n_a.sqrt());
    let osc_cfg = HilbertConfig::oscillator(config.run.n_max)?;
    let cat = cat_state(
        &CatSpec {
            beta,
            parity: Parity::Even,
        },
        osc_cfg,
    )?;
    let target = Ket::from_osc_qubit(&cat, &[C64::new(1.0, 0.0), C64::new(0.0, 0.0)])?;
    let times = output_times(t_final, config.run.output_points);
    let res = evolve(
        &target.to_density(),
        &spec,
        &times,
        &EvolveOptions {
            snapshot_times: times.clone(),
            ..EvolveOptions::default()
        },
    )?;
    let mut rows = Vec::new();
    for (t, rho) in &res.snapshots {
        rows.push(vec![*t, fidelity(rho, &target)?]);
    }
    let csv = ctx.write_csv("fidelity.csv", &["time_s", "fidelity"], &rows)?;
    // short-window decay slope vs the linear law −½ γ_m n_th n_a
    let predicted_slope = -0.5 * params.gamma_m * params.n_th * n_a;
    let t_window = 0.05 / (params.gamma_m * params.n_th * n_a).max(1e-300);
    let window: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r[0] <= t_window)
        .map(|r| (r[0], r[1]))
        .collect();
    let fitted_slope = if window.len() >= 2 {
        let n = window.len() as f64;
        let xm = window.iter().map(|p| p.0).sum::<f64>() / n;
        let ym = window.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = window.iter().map(|p| (p.0 - xm).powi(2)).sum();
        let sxy: f64 = window.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    let summary = serde_json::json!({
        "n_a": n_a,
        "predicted_short_time_slope": predicted_slope,
        "fitted_short_time_slope": fitted_slope,
        "final_fidelity": rows.last().map(|r| r[1]),
        "asymptote": 0.5f64.sqrt(),
    });
    let js = ctx.write_json("fidelity_summary.json", &summary)?;
    Ok(vec![csv, js])
}

fn cmd_magnetics(config: &ExperimentConfig, ctx: &EmitContext) -> Result<Vec<PathBuf>> {
    let section = config
        .magnets
        .as_ref()
        .ok_or_else(|| Error::Config("magnetics needs a `magnets` section".into()))?;
    let pair = section.to_pair()?;
    let mut outputs = Vec::new();

    // field and gradients across the gap
    let mut rows = Vec::new();
    let n_pts = 81;
    for k in 0..n_pts {
        let z = -0.4 * pair.gap + 0.8 * pair.gap * k as f64 / (n_pts - 1) as f64;
        let rep = magnetics::gradients(&pair, z)?;
        rows.push(vec![z, rep.b0, rep.g1, rep.g2]);
    }
    outputs.push(ctx.write_csv(
        "gradients_vs_offset.csv",
        &["offset_m", "b_t", "g1_t_per_m", "g2_t_per_m2"],
        &rows,
    )?);

    // per-material gap sweep of G₂ and g₂ (template z_zpf or 200 fm)
    let z_zpf = config.device.as_ref().map_or(200e-15, |d| d.z_zpf_m);
    let mut rows = Vec::new();
    let table = magnetics::material_table();
    let names: Vec<&String> = table.keys().collect();
    for (mi, name) in names.iter().enumerate() {
        let mat = table[*name];
        for k in 0..41 {
            let gap = 10e-9 + 90e-9 * k as f64 / 40.0;
            let p = magnetics::MagnetPair {
                gap,
                mu0_ms: mat.mu0_ms_tesla,
                ..pair
            };
            let rep = magnetics::gradients(&p, 0.0)?;
            let g2 = 0.5 * model::consts::MU_B * model::consts::G_S * z_zpf * z_zpf * rep.g2
                / model::consts::HBAR;
            rows.push(vec![mi as f64, gap, rep.g2, g2 / TWO_PI]);
        }
    }
    outputs.push(ctx.write_csv(
        "g2_vs_gap.csv",
        &["material_index", "gap_m", "g2_gradient_t_per_m2", "g2_hz"],
        &rows,
    )?);
    let material_names = serde_json::json!({
        "material_index": names,
    });
    outputs.push(ctx.write_json("materials_index.json", &material_names)?);

    // cooperativity design map (needs device template)
    if let Some(devsec) = &config.device {
        let mut dev = devsec.to_params()?;
        dev.g2_gradient = magnetics::gradients(&pair, 0.0)?.g2;
        let zs = magnetics::log_range(20e-15, 400e-15, 13);
        let qs = magnetics::log_range(1e6, 1e10, 13);
        let map = magnetics::coupling_map(&dev, &zs, &qs)?;
        let rows: Vec<Vec<f64>> = map
            .points
            .iter()
            .map(|p| vec![p.z_zpf, p.quality_factor, p.g2 / TWO_PI, p.cooperativity])
            .collect();
        outputs.push(ctx.write_csv(
            "coupling_map.csv",
            &["z_zpf_m", "quality_factor", "g2_hz", "cooperativity"],
            &rows,
        )?);
        let contour: Vec<Vec<f64>> = map.unity_contour.iter().map(|&(z, q)| vec![z, q]).collect();
        outputs.push(ctx.write_csv(
            "unity_cooperativity_contour.csv",
            &["z_zpf_m", "quality_factor"],
            &contour,
        )?);
    }
    Ok(outputs)
}

fn cmd_tomography(config: &ExperimentConfig, ctx: &EmitContext) -> Result<Vec<PathBuf>> {
    let params = require_system(config)?;
    let tomo = config
        .tomography
        .as_ref()
        .ok_or_else(|| Error::Config("tomography needs a `tomography` section".into()))?;
    let spec = build_spec(&params, config.run.n_max)?;
    let (rho_full, _) = steady_state(&spec)?;
    let generated = rho_full.partial_trace_qubit()?;
    let n_mean = number_op(generated.config()).expect_rho(&generated)?.re.max(0.0);
    let beta = C64::new(0.0, n_mean.sqrt());
    let osc_cfg = generated.config();
    let cat = cat_state(
        &CatSpec {
            beta,
            parity: Parity::Even,
        },
        osc_cfg,
    )?
    .to_density();
    let coherent = coherent_state(beta, osc_cfg)?.to_density();

    let plan = MeasurementPlan {
        amplitude: tomo.amplitude,
        angles: tomo.angles(),
        shots: tomo.shots,
        seed: config.run.seed,
    };
    let mut outputs = Vec::new();
    for (label, state) in [("generated", &generated), ("cat", &cat), ("coherent", &coherent)] {
        let data = sample_measurements(state, &plan)?;
        let mut rows = Vec::new();
        for (j, &theta) in plan.angles.iter().enumerate() {
            for (n, &c) in data.counts[j].iter().enumerate() {
                if c > 0 {
                    rows.push(vec![j as f64, theta, n as f64, c as f64]);
                }
            }
        }
        outputs.push(ctx.write_csv(
            &format!("tomography_{label}.csv"),
            &["angle_index", "theta_rad", "n", "count"],
            &rows,
        )?);
    }
    let plan_echo = serde_json::to_value(&plan).map_err(Error::Json)?;
    outputs.push(ctx.write_json("tomography_plan.json", &plan_echo)?);
    Ok(outputs)
}
