//! `vortexlab` command-line front end.
//!
//! Each subcommand reads one TOML config, writes its data files into the
//! output directory and finishes with `manifest.json`. Data files depend only
//! on the config, the overrides and the seed; the manifest additionally
//! carries a timestamp. Failures print a JSON report on stderr, drop
//! `error.json` next to the outputs and exit nonzero.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::cavity::{self, CavityParams, ReflectionMap, ReflectionTrace};
use crate::config::{LoadedConfig, RunConfig};
use crate::disorder;
use crate::error::{Error, Result};
use crate::groundstate::{self, SweepPoint};
use crate::lattice::{ArrayGeometry, CircuitParams, GaugeField};
use crate::spinwave;

pub const SCHEMA_VERSION: u32 = 1;
const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "vortexlab", version, about = "Frustrated Josephson junction array simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimize at `point.flux` and write the vortex pattern.
    GroundState(RunArgs),
    /// Ground states along the sweep flux grid.
    Sweep(RunArgs),
    /// Plasma-mode frequencies along the sweep flux grid.
    Spectrum(RunArgs),
    /// Reflection trace at `point.flux`.
    Reflect(RunArgs),
    /// |S11| over the flux × frequency grid.
    Map(RunArgs),
    /// Spread of the pad susceptibility over an E_J disorder ensemble.
    Disorder(RunArgs),
    /// Fit a bare-cavity model to the trace named by `fit.trace`.
    Fit(RunArgs),
    /// Parse and check the config without computing anything.
    Validate(RunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GroundState(_) => "ground-state",
            Command::Sweep(_) => "sweep",
            Command::Spectrum(_) => "spectrum",
            Command::Reflect(_) => "reflect",
            Command::Map(_) => "map",
            Command::Disorder(_) => "disorder",
            Command::Fit(_) => "fit",
            Command::Validate(_) => "validate",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::GroundState(a)
            | Command::Sweep(a)
            | Command::Spectrum(a)
            | Command::Reflect(a)
            | Command::Map(a)
            | Command::Disorder(a)
            | Command::Fit(a)
            | Command::Validate(a) => a,
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config value, e.g. `--set sweep.flux_steps=31`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (defaults to `output_dir` from the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed (defaults to `seed` from the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "VORTEXLAB_WORKERS")]
    pub workers: Option<usize>,
}

/// Entry point used by the binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let out_hint = cli.command.args().out.clone();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let report = error_report(&failure.error);
            eprintln!("{report}");
            if let Some(dir) = failure.out_dir.or(out_hint) {
                if std::fs::create_dir_all(&dir).is_ok() {
                    let _ = std::fs::write(dir.join("error.json"), format!("{report}\n"));
                }
            }
            ExitCode::from(exit_code(&failure.error))
        }
    }
}

fn error_report(e: &Error) -> String {
    let key = match e {
        Error::Config { key, .. } | Error::InvalidParameter { key, .. } => Some(key.clone()),
        _ => None,
    };
    serde_json::to_string_pretty(&json!({
        "schema_version": SCHEMA_VERSION,
        "error": { "kind": e.kind(), "key": key, "message": e.to_string() },
    }))
    .expect("error report serializes")
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::InvalidParameter { .. } | Error::InvalidLattice { .. } => 2,
        _ => 1,
    }
}

/// An error plus the output directory, once known.
#[derive(Debug)]
pub struct Failure {
    pub error: Error,
    pub out_dir: Option<PathBuf>,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Self { error, out_dir: None }
    }
}

pub fn run(cli: &Cli) -> std::result::Result<(), Failure> {
    let args = cli.command.args();
    let mut loaded = RunConfig::load(&args.config, &args.overrides)?;
    if let Some(seed) = args.seed {
        loaded.config.seed = seed;
    }
    let out_dir = args.out.clone().unwrap_or_else(|| loaded.config.output_dir.clone());
    let workers = args
        .workers
        .or(loaded.config.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let with_dir = |error: Error| Failure {
        error,
        out_dir: Some(out_dir.clone()),
    };
    if workers == 0 {
        return Err(with_dir(Error::Config {
            key: "workers".into(),
            reason: "must be >= 1".into(),
        }));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| with_dir(Error::Config {
            key: "workers".into(),
            reason: e.to_string(),
        }))?;
    let mut artifacts = Artifacts::new(&out_dir).map_err(with_dir)?;
    let outcome = pool.install(|| execute(&cli.command, &loaded, &mut artifacts));
    // The manifest is written even when a sweep partially failed, so the
    // status file it lists can be traced back to its inputs.
    artifacts.write_manifest(cli.command.name(), &loaded, args).map_err(with_dir)?;
    outcome.map_err(with_dir)
}

fn execute(command: &Command, loaded: &LoadedConfig, out: &mut Artifacts) -> Result<()> {
    let cfg = &loaded.config;
    match command {
        Command::Validate(_) => validate(cfg, out),
        Command::GroundState(_) => ground_state(cfg, out),
        Command::Sweep(_) => {
            let (g, p) = cfg.circuit()?;
            let sweep = checked_sweep(cfg, &g, &p, &cfg.flux_grid(), out)?;
            write_sweep(&sweep, out)
        }
        Command::Spectrum(_) => spectrum(cfg, out),
        Command::Reflect(_) => reflect(cfg, out),
        Command::Map(_) => map(cfg, out),
        Command::Disorder(_) => disorder(cfg, out),
        Command::Fit(_) => fit(cfg, out),
    }
}

/// Output directory that records a digest of every file it writes.
pub struct Artifacts {
    dir: PathBuf,
    digests: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            digests: BTreeMap::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| Error::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
        std::fs::write(&path, bytes).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.digests.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn write_manifest(&mut self, subcommand: &str, loaded: &LoadedConfig, args: &RunArgs) -> Result<()> {
        let mut inputs = BTreeMap::new();
        inputs.insert("config".to_string(), sha256_hex(&loaded.source));
        if let Some(trace) = &loaded.config.fit.trace {
            if let Ok(bytes) = std::fs::read(trace) {
                inputs.insert("fit.trace".to_string(), sha256_hex(&bytes));
            }
        }
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        let manifest = json!({
            "schema_version": SCHEMA_VERSION,
            "tool": "vortexlab",
            "version": VERSION,
            "subcommand": subcommand,
            "seed": loaded.config.seed,
            "overrides": args.overrides,
            "inputs_sha256": inputs,
            "outputs_sha256": self.digests,
            "timestamp": timestamp,
        });
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, text).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Parameters recorded in every JSON header.
fn header(cfg: &RunConfig) -> serde_json::Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "version": VERSION,
        "seed": cfg.seed,
        "lattice": cfg.lattice,
        "circuit": cfg.circuit,
        "cavity": cfg.cavity,
        "minimizer": cfg.minimizer,
    })
}

fn validate(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let (g, p) = cfg.circuit()?;
    cfg.minimizer().validate()?;
    let cav = cfg.cavity();
    let mut summary = header(cfg);
    summary["islands"] = json!(g.island_count());
    summary["junctions"] = json!(g.junctions().len());
    summary["plaquettes"] = json!(g.plaquettes().len());
    summary["charging_energy_GHz"] = json!(crate::units::charging_energy_ghz(p.constants.cj_ff));
    summary["photon_number"] = json!(cavity::photon_number(cfg.cavity.power_dbm, &cav));
    summary["flux_points"] = json!(cfg.sweep.flux_steps);
    summary["freq_points"] = json!(cfg.sweep.freq_steps);
    out.write_json("validate.json", &summary)
}

#[derive(Serialize)]
struct GroundStateReport<'a> {
    schema_version: u32,
    flux: f64,
    energy_ghz: f64,
    gradient_norm: f64,
    degenerate_count: usize,
    converged: bool,
    total_winding: i64,
    max_circulation: f64,
    /// Top row first.
    winding_rows: Vec<Vec<i32>>,
    phases: &'a [f64],
}

fn ground_state(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let (g, p) = cfg.circuit()?;
    let f = cfg.point.flux;
    let r = groundstate::minimize(&g, &GaugeField::landau(&g, f), &p, &cfg.minimizer())?;
    out.write_json(
        "ground_state.json",
        &GroundStateReport {
            schema_version: SCHEMA_VERSION,
            flux: f,
            energy_ghz: r.energy,
            gradient_norm: r.gradient_norm,
            degenerate_count: r.degenerate_count,
            converged: r.converged,
            total_winding: r.vortex_map.total_winding(),
            max_circulation: r.vortex_map.max_circulation(),
            winding_rows: r.vortex_map.winding_rows(),
            phases: r.config.phases(),
        },
    )?;
    let mut csv = Vec::new();
    r.vortex_map.write_csv(&mut csv).expect("writing to memory");
    out.write("vortex_map.csv", &csv)?;
    if !r.converged {
        return Err(Error::NotConverged { flux: f });
    }
    Ok(())
}

/// Runs a sweep and writes `point_status.csv`; any unconverged point fails
/// the command after the status file is on disk.
fn checked_sweep(
    cfg: &RunConfig,
    g: &ArrayGeometry,
    p: &CircuitParams,
    grid: &[f64],
    out: &mut Artifacts,
) -> Result<Vec<SweepPoint>> {
    let sweep = groundstate::sweep_ground_states(g, p, grid, &cfg.minimizer())?;
    let mut status = String::from("flux,status,warm_start_lost\n");
    for pt in &sweep {
        let s = if pt.result.converged { "ok" } else { "not_converged" };
        writeln!(status, "{},{s},{}", pt.flux, pt.warm_start_lost).expect("string write");
    }
    out.write("point_status.csv", status.as_bytes())?;
    if let Some(bad) = sweep.iter().find(|pt| !pt.result.converged) {
        return Err(Error::NotConverged { flux: bad.flux });
    }
    Ok(sweep)
}

fn write_sweep(sweep: &[SweepPoint], out: &mut Artifacts) -> Result<()> {
    let mut csv = String::from("flux,energy,total_winding,jump\n");
    for pt in sweep {
        writeln!(csv, "{},{},{},{}", pt.flux, pt.result.energy, pt.result.vortex_map.total_winding(), pt.jump)
            .expect("string write");
    }
    out.write("sweep.csv", csv.as_bytes())?;
    let points: Vec<_> = sweep
        .iter()
        .map(|pt| {
            json!({
                "flux": pt.flux,
                "energy_GHz": pt.result.energy,
                "total_winding": pt.result.vortex_map.total_winding(),
                "jump": pt.jump,
                "warm_start_lost": pt.warm_start_lost,
                "degenerate_count": pt.result.degenerate_count,
                "converged": pt.result.converged,
                "winding_rows": pt.result.vortex_map.winding_rows(),
            })
        })
        .collect();
    out.write_json("sweep.json", &json!({ "schema_version": SCHEMA_VERSION, "points": points }))
}

fn spectrum(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let (g, p) = cfg.circuit()?;
    let sweep = checked_sweep(cfg, &g, &p, &cfg.flux_grid(), out)?;
    write_sweep(&sweep, out)?;
    let spectra = spinwave::spectrum_vs_flux(&sweep, &g, &p)?;
    let mut csv = String::from("flux,mode_index,frequency_GHz\n");
    for s in &spectra {
        for (k, nu) in s.spectrum.frequencies.iter().enumerate() {
            writeln!(csv, "{},{k},{nu}", s.flux).expect("string write");
        }
    }
    out.write("spectrum.csv", csv.as_bytes())?;
    let summary: Vec<_> = spectra
        .iter()
        .map(|s| {
            json!({
                "flux": s.flux,
                "modes": s.spectrum.len(),
                "soft_modes": s.spectrum.soft_modes,
                "largest_gap_GHz": s.spectrum.largest_gap(),
                "jump": s.jump,
            })
        })
        .collect();
    out.write_json("spectrum.json", &json!({ "schema_version": SCHEMA_VERSION, "points": summary }))
}

fn map_header(cfg: &RunConfig, flux: &[f64], freqs: &[f64]) -> serde_json::Value {
    let mut h = header(cfg);
    h["flux_axis"] = json!({ "min": flux[0], "max": flux[flux.len() - 1], "steps": flux.len() });
    h["freq_axis_GHz"] = json!({ "min": freqs[0], "max": freqs[freqs.len() - 1], "steps": freqs.len() });
    h["columns"] = json!(["flux", "freq_GHz", "S11_re", "S11_im", "S11_abs"]);
    h
}

/// Dip position and χ̃(ω_c) per flux point.
fn dip_table(map: &ReflectionMap, chi_at_cavity: &[Complex64], cav: &CavityParams) -> String {
    let mut csv = String::from("flux,dip_GHz,dip_shift_MHz,chi_re_MHz,chi_im_MHz\n");
    for ((f, trace), chi) in map.flux.iter().zip(&map.traces).zip(chi_at_cavity) {
        let dip = trace.dip_frequency().unwrap_or(f64::NAN);
        writeln!(csv, "{f},{dip},{},{},{}", (dip - cav.omega_c_ghz) * 1e3, chi.re, chi.im).expect("string write");
    }
    csv
}

fn chi_at_cavity(sweep: &[SweepPoint], g: &ArrayGeometry, p: &CircuitParams, cav: &CavityParams) -> Result<Vec<Complex64>> {
    use rayon::prelude::*;
    sweep
        .par_iter()
        .map(|pt| cavity::array_response(pt, g, p)?.chi_mhz(cav, cav.omega_c_ghz))
        .collect()
}

fn reflect(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let (g, p) = cfg.circuit()?;
    let cav = cfg.cavity();
    let f = cfg.point.flux;
    let sweep = checked_sweep(cfg, &g, &p, &[f], out)?;
    let freqs = cfg.freq_grid();
    let map = cavity::reflection_map(&sweep, &g, &p, &cav, &freqs)?;
    let mut csv = Vec::new();
    map.write_csv(&mut csv).expect("writing to memory");
    out.write("reflect.csv", &csv)?;
    let chi = chi_at_cavity(&sweep, &g, &p, &cav)?[0];
    let mut h = map_header(cfg, &map.flux, &freqs);
    let dip = map.traces[0].dip_frequency();
    h["dip_GHz"] = json!(dip);
    h["chi_at_cavity_MHz"] = json!({ "re": chi.re, "im": chi.im });
    h["photon_number"] = json!(cavity::photon_number(cfg.cavity.power_dbm, &cav));
    out.write_json("reflect.json", &h)
}

fn map(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let (g, p) = cfg.circuit()?;
    let cav = cfg.cavity();
    let flux = cfg.flux_grid();
    let freqs = cfg.freq_grid();
    let sweep = checked_sweep(cfg, &g, &p, &flux, out)?;
    let map = cavity::reflection_map(&sweep, &g, &p, &cav, &freqs)?;
    let mut csv = Vec::new();
    map.write_csv(&mut csv).expect("writing to memory");
    out.write("map.csv", &csv)?;
    out.write_json("map.json", &map_header(cfg, &flux, &freqs))?;
    let chi = chi_at_cavity(&sweep, &g, &p, &cav)?;
    out.write("dip.csv", dip_table(&map, &chi, &cav).as_bytes())
}

fn disorder(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let (g, p) = cfg.circuit()?;
    let cav = cfg.cavity();
    let flux = cfg.disorder_flux_grid();
    let freqs = cfg.freq_grid();
    let d = &cfg.disorder;
    let ensemble = disorder::generate_ensemble(&g, &p, cfg.seed, d.sigma_rel, d.realizations)?;
    let study = disorder::susceptibility_std(&ensemble, &g, &p, &cav, &flux, &cfg.minimizer())?;
    let mut csv = String::from("flux,std_chi_MHz,n_converged\n");
    for row in &study.table {
        writeln!(csv, "{},{},{}", row.flux, row.std_chi_mhz, row.n_converged).expect("string write");
    }
    out.write("disorder.csv", csv.as_bytes())?;
    let mut status = String::from("realization,flux,status\n");
    for r in &study.realizations {
        for (pt, chi) in r.points.iter().zip(&r.chi_mhz) {
            let s = if chi.is_some() { "ok" } else { "excluded" };
            writeln!(status, "{},{},{s}", r.index, pt.flux).expect("string write");
        }
        let name = format!("realizations/map_{:03}.csv", r.index);
        match cavity::reflection_map(&r.points, &g, &r.params, &cav, &freqs) {
            Ok(map) => {
                let mut bytes = Vec::new();
                map.write_csv(&mut bytes).expect("writing to memory");
                out.write(&name, &bytes)?;
            }
            Err(e) => log::warn!("realization {}: no map ({e})", r.index),
        }
    }
    out.write("point_status.csv", status.as_bytes())?;
    let mut h = map_header(cfg, &flux, &freqs);
    h["sigma_rel"] = json!(d.sigma_rel);
    h["realizations"] = json!(d.realizations);
    h["ej_tables_GHz"] = json!(ensemble.ej_tables);
    out.write_json("disorder.json", &h)
}

fn fit(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let path = cfg.fit.trace.as_ref().ok_or_else(|| Error::Config {
        key: "fit.trace".into(),
        reason: "no trace file configured".into(),
    })?;
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let trace = ReflectionTrace::read_csv(&text)?;
    let r = cavity::fit_resonance(&trace)?;
    out.write_json(
        "fit.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "points": trace.len(),
            "omega_c_GHz": r.omega_c_ghz,
            "kappa_ext_MHz": r.kappa_ext_mhz,
            "kappa_int_MHz": r.kappa_int_mhz,
            "residual": r.residual,
            "iterations": r.iterations,
        }),
    )
}
