//! Declarative run configuration (TOML) with `section.key=value` overrides.
//!
//! Every section rejects unknown keys. Relative paths are resolved against
//! the directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cavity::{self, CavityParams};
use crate::error::{Error, Result};
use crate::groundstate::{AnnealSchedule, MinimizerConfig, Strategy, TemperingSchedule};
use crate::lattice::{self, ArrayGeometry, CircuitConstants, CircuitParams, DiagonalPlacement};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; `--workers` and `VORTEXLAB_WORKERS` take precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub lattice: LatticeSection,
    pub circuit: CircuitSection,
    pub cavity: CavitySection,
    #[serde(default)]
    pub minimizer: MinimizerSection,
    pub sweep: SweepSection,
    #[serde(default)]
    pub point: PointSection,
    #[serde(default)]
    pub disorder: DisorderSection,
    #[serde(default)]
    pub fit: FitSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub columns: usize,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSection {
    #[serde(rename = "EJ_GHz")]
    pub ej_ghz: f64,
    #[serde(rename = "CJ_fF")]
    pub cj_ff: f64,
    #[serde(rename = "Cdiag_fF")]
    pub cdiag_ff: f64,
    #[serde(rename = "Cg_fF")]
    pub cg_ff: f64,
    #[serde(rename = "CS_fF")]
    pub cs_ff: f64,
    #[serde(rename = "G_over_G0")]
    pub g_over_g0: f64,
    #[serde(default)]
    pub diagonal: DiagonalPlacement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySection {
    #[serde(rename = "omega_c_GHz")]
    pub omega_c_ghz: f64,
    #[serde(rename = "kappa_ext_MHz")]
    pub kappa_ext_mhz: f64,
    #[serde(rename = "kappa_int_MHz")]
    pub kappa_int_mhz: f64,
    #[serde(rename = "g_MHz")]
    pub g_mhz: f64,
    /// Probe power at the cavity input, used for the photon-number report.
    #[serde(rename = "power_dBm", default = "default_power")]
    pub power_dbm: f64,
}

fn default_power() -> f64 {
    -132.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinimizerSection {
    pub strategy: Strategy,
    pub restarts: usize,
    pub polish_tolerance: f64,
    pub degeneracy_window: f64,
    #[serde(rename = "T_initial")]
    pub t_initial: f64,
    #[serde(rename = "T_final")]
    pub t_final: f64,
    pub steps: usize,
    pub proposal_width: f64,
    pub adaptive: bool,
    pub overrelaxation: f64,
    pub replicas: usize,
    #[serde(rename = "T_min")]
    pub t_min: f64,
    #[serde(rename = "T_max")]
    pub t_max: f64,
    pub sweeps: usize,
    pub quench_interval: usize,
}

impl Default for MinimizerSection {
    fn default() -> Self {
        let m = MinimizerConfig::default();
        Self {
            strategy: m.strategy,
            restarts: m.restarts,
            polish_tolerance: m.polish_tolerance,
            degeneracy_window: m.degeneracy_window,
            t_initial: m.anneal.t_initial,
            t_final: m.anneal.t_final,
            steps: m.anneal.steps,
            proposal_width: m.anneal.proposal_width,
            adaptive: m.anneal.adaptive,
            overrelaxation: m.anneal.overrelaxation,
            replicas: m.tempering.replicas,
            t_min: m.tempering.t_min,
            t_max: m.tempering.t_max,
            sweeps: m.tempering.sweeps,
            quench_interval: m.tempering.quench_interval,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub flux_min: f64,
    pub flux_max: f64,
    pub flux_steps: usize,
    /// Probe frequency window in GHz.
    pub freq_min: f64,
    pub freq_max: f64,
    pub freq_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointSection {
    /// Frustration used by `ground-state` and `reflect`.
    pub flux: f64,
}

impl Default for PointSection {
    fn default() -> Self {
        Self { flux: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisorderSection {
    pub sigma_rel: f64,
    pub realizations: usize,
    /// Flux grid of the ensemble; falls back to the sweep grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flux_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flux_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flux_steps: Option<usize>,
}

impl Default for DisorderSection {
    fn default() -> Self {
        Self {
            sigma_rel: 0.05,
            realizations: 10,
            flux_min: None,
            flux_max: None,
            flux_steps: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    /// CSV trace (`freq_GHz,S11_re,S11_im`) fitted by the `fit` subcommand.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
}

/// A parsed config together with the bytes it came from.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub source: Vec<u8>,
    pub path: PathBuf,
}

fn config_error(key: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        reason: reason.into(),
    }
}

/// Applies one `a.b.c=value` override. The value is parsed as a TOML value
/// and falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_error(assignment, "override must look like section.key=value"))?;
    let path = path.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(config_error(path, "empty key segment"));
    }
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut cursor = table;
    for key in parents {
        let entry = cursor
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| config_error(path, format!("`{key}` is not a section")))?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Parses TOML text, applying overrides before deserialization.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| config_error("<toml>", e.message()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: RunConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| {
            config_error("<config>", e.message())
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Reads, overrides, validates and resolves relative paths.
    pub fn load(path: &Path, overrides: &[String]) -> Result<LoadedConfig> {
        let source = std::fs::read(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let text = String::from_utf8(source.clone()).map_err(|_| config_error("<file>", "config is not UTF-8"))?;
        let mut config = Self::parse(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.output_dir = base.join(&config.output_dir);
        if let Some(trace) = &config.fit.trace {
            config.fit.trace = Some(base.join(trace));
        }
        Ok(LoadedConfig {
            config,
            source,
            path: path.to_path_buf(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry()?;
        self.constants().validate()?;
        self.cavity().validate()?;
        if !self.cavity.power_dbm.is_finite() {
            return Err(config_error("cavity.power_dBm", "must be finite"));
        }
        self.minimizer().validate()?;
        check_grid("sweep.flux", self.sweep.flux_min, self.sweep.flux_max, self.sweep.flux_steps)?;
        check_grid("sweep.freq", self.sweep.freq_min, self.sweep.freq_max, self.sweep.freq_steps)?;
        if !(self.sweep.freq_min > 0.0) {
            return Err(config_error("sweep.freq_min", "must be > 0"));
        }
        if !self.point.flux.is_finite() {
            return Err(config_error("point.flux", "must be finite"));
        }
        let d = &self.disorder;
        if !(d.sigma_rel.is_finite() && d.sigma_rel >= 0.0) {
            return Err(config_error("disorder.sigma_rel", "must be finite and >= 0"));
        }
        if d.realizations < 2 {
            return Err(config_error("disorder.realizations", "need at least 2 for a spread"));
        }
        let (lo, hi, n) = self.disorder_grid_bounds();
        check_grid("disorder.flux", lo, hi, n)?;
        if self.workers == Some(0) {
            return Err(config_error("workers", "must be >= 1"));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::new(self.lattice.columns, self.lattice.rows)
    }

    pub fn constants(&self) -> CircuitConstants {
        let c = &self.circuit;
        CircuitConstants {
            ej_ghz: c.ej_ghz,
            cj_ff: c.cj_ff,
            cdiag_ff: c.cdiag_ff,
            cg_ff: c.cg_ff,
            cs_ff: c.cs_ff,
            g_over_g0: c.g_over_g0,
            diagonal: c.diagonal,
        }
    }

    /// Geometry and uniform circuit parameters; the capacitance matrix is
    /// assembled once to confirm it is positive definite.
    pub fn circuit(&self) -> Result<(ArrayGeometry, CircuitParams)> {
        let g = self.geometry()?;
        let p = CircuitParams::uniform(&g, self.constants())?;
        lattice::capacitance_matrix(&g, &p)?;
        Ok((g, p))
    }

    pub fn cavity(&self) -> CavityParams {
        let c = &self.cavity;
        CavityParams {
            omega_c_ghz: c.omega_c_ghz,
            kappa_ext_mhz: c.kappa_ext_mhz,
            kappa_int_mhz: c.kappa_int_mhz,
            g_mhz: c.g_mhz,
        }
    }

    pub fn minimizer(&self) -> MinimizerConfig {
        let m = &self.minimizer;
        MinimizerConfig {
            restarts: m.restarts,
            anneal: AnnealSchedule {
                t_initial: m.t_initial,
                t_final: m.t_final,
                steps: m.steps,
                proposal_width: m.proposal_width,
                adaptive: m.adaptive,
                overrelaxation: m.overrelaxation,
            },
            tempering: TemperingSchedule {
                replicas: m.replicas,
                t_min: m.t_min,
                t_max: m.t_max,
                sweeps: m.sweeps,
                quench_interval: m.quench_interval,
            },
            polish_tolerance: m.polish_tolerance,
            seed: self.seed,
            degeneracy_window: m.degeneracy_window,
            strategy: m.strategy,
        }
    }

    pub fn flux_grid(&self) -> Vec<f64> {
        cavity::linspace(self.sweep.flux_min, self.sweep.flux_max, self.sweep.flux_steps)
    }

    pub fn freq_grid(&self) -> Vec<f64> {
        cavity::linspace(self.sweep.freq_min, self.sweep.freq_max, self.sweep.freq_steps)
    }

    fn disorder_grid_bounds(&self) -> (f64, f64, usize) {
        let d = &self.disorder;
        (
            d.flux_min.unwrap_or(self.sweep.flux_min),
            d.flux_max.unwrap_or(self.sweep.flux_max),
            d.flux_steps.unwrap_or(self.sweep.flux_steps),
        )
    }

    pub fn disorder_flux_grid(&self) -> Vec<f64> {
        let (lo, hi, n) = self.disorder_grid_bounds();
        cavity::linspace(lo, hi, n)
    }
}

fn check_grid(key: &str, lo: f64, hi: f64, n: usize) -> Result<()> {
    if n == 0 {
        return Err(config_error(format!("{key}_steps"), "grid must be non-empty"));
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(config_error(format!("{key}_min"), "bounds must be finite"));
    }
    if hi < lo {
        return Err(config_error(format!("{key}_max"), format!("must be >= {key}_min")));
    }
    Ok(())
}
