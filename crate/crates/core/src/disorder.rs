//! Static Josephson-energy disorder.
//!
//! Each realization draws every junction's E_J independently from
//! Normal(E_J, σ·E_J), redrawing non-positive values. Realization k uses its
//! own stream derived from (seed, k), so ensembles are reproducible one
//! member at a time. Every realization is minimized independently at each
//! flux point.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::cavity::{self, CavityParams, ReflectionMap};
use crate::error::{Error, Result};
use crate::groundstate::{self, MinimizerConfig, SweepPoint};
use crate::lattice::{ArrayGeometry, CircuitParams};
use crate::rng;

const STREAM_ENERGIES: u64 = 0;
const STREAM_MINIMIZER: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DisorderEnsemble {
    pub seed: u64,
    pub sigma_rel: f64,
    /// One per-junction E_J table (GHz) per realization.
    pub ej_tables: Vec<Vec<f64>>,
}

impl DisorderEnsemble {
    pub fn realizations(&self) -> usize {
        self.ej_tables.len()
    }

    /// Circuit parameters of realization `k`.
    pub fn params(&self, k: usize, geometry: &ArrayGeometry, nominal: &CircuitParams) -> Result<CircuitParams> {
        CircuitParams::with_josephson_energies(geometry, nominal.constants.clone(), self.ej_tables[k].clone())
    }
}

/// Draws `n` disorder realizations around the nominal junction energies.
pub fn generate_ensemble(
    geometry: &ArrayGeometry,
    params: &CircuitParams,
    seed: u64,
    sigma_rel: f64,
    n: usize,
) -> Result<DisorderEnsemble> {
    if !(sigma_rel >= 0.0 && sigma_rel.is_finite()) {
        return Err(Error::param("disorder.sigma_rel", format!("must be finite and >= 0, got {sigma_rel}")));
    }
    let nominal = params.josephson_energies();
    let ej_tables = (0..n)
        .map(|k| {
            let mut rng = rng::stream(seed, &[STREAM_ENERGIES, k as u64]);
            nominal
                .iter()
                .map(|&ej| {
                    if sigma_rel == 0.0 {
                        return ej;
                    }
                    let dist = Normal::new(ej, sigma_rel * ej).expect("finite positive width");
                    loop {
                        let x = dist.sample(&mut rng);
                        if x > 0.0 {
                            break x;
                        }
                    }
                })
                .collect()
        })
        .collect();
    debug_assert_eq!(nominal.len(), geometry.junctions().len());
    Ok(DisorderEnsemble {
        seed,
        sigma_rel,
        ej_tables,
    })
}

/// Ground states and pad response of one realization along the flux grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RealizationSweep {
    pub index: usize,
    pub params: CircuitParams,
    pub points: Vec<SweepPoint>,
    /// χ̃₀₀(ω_c) in MHz; `None` where the minimum did not converge or the
    /// response could not be evaluated.
    pub chi_mhz: Vec<Option<Complex64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StdRow {
    pub flux: f64,
    /// sqrt(var Re χ̃ + var Im χ̃) over usable realizations (n − 1 normalized);
    /// NaN with fewer than two.
    pub std_chi_mhz: f64,
    pub n_converged: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DisorderStudy {
    pub realizations: Vec<RealizationSweep>,
    pub table: Vec<StdRow>,
}

/// Sample standard deviation of complex values, sqrt(var(Re) + var(Im)).
pub fn complex_std(values: &[Complex64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::NAN;
    }
    let mean: Complex64 = values.iter().sum::<Complex64>() / n as f64;
    let ss: f64 = values.iter().map(|z| (z - mean).norm_sqr()).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Minimizes every realization across `flux_grid` and tabulates the spread
/// of χ̃₀₀ at the cavity frequency.
pub fn susceptibility_std(
    ensemble: &DisorderEnsemble,
    geometry: &ArrayGeometry,
    params: &CircuitParams,
    cavity: &CavityParams,
    flux_grid: &[f64],
    minimizer: &MinimizerConfig,
) -> Result<DisorderStudy> {
    cavity.validate()?;
    let realizations: Vec<RealizationSweep> = (0..ensemble.realizations())
        .into_par_iter()
        .map(|k| {
            let p = ensemble.params(k, geometry, params)?;
            let cfg = MinimizerConfig {
                seed: rng::derive_seed(minimizer.seed, &[STREAM_MINIMIZER, k as u64]),
                ..minimizer.clone()
            };
            let points = groundstate::sweep_ground_states(geometry, &p, flux_grid, &cfg)?;
            let chi_mhz = points
                .iter()
                .map(|pt| {
                    if !pt.result.converged {
                        log::warn!("realization {k}: ground state at flux {} not converged", pt.flux);
                        return None;
                    }
                    match cavity::array_response(pt, geometry, &p).and_then(|r| r.chi_mhz(cavity, cavity.omega_c_ghz)) {
                        Ok(chi) => Some(chi),
                        Err(e) => {
                            log::warn!("realization {k}, flux {}: {e}", pt.flux);
                            None
                        }
                    }
                })
                .collect();
            Ok(RealizationSweep {
                index: k,
                params: p,
                points,
                chi_mhz,
            })
        })
        .collect::<Result<_>>()?;
    let table = flux_grid
        .iter()
        .enumerate()
        .map(|(j, &flux)| {
            let values: Vec<Complex64> = realizations.iter().filter_map(|r| r.chi_mhz[j]).collect();
            StdRow {
                flux,
                std_chi_mhz: complex_std(&values),
                n_converged: values.len(),
            }
        })
        .collect();
    Ok(DisorderStudy { realizations, table })
}

/// Elementwise difference of |S11| maps (member − clean).
pub fn reflection_difference_map(member: &ReflectionMap, clean: &ReflectionMap) -> Result<DMatrix<f64>> {
    if member.flux != clean.flux {
        return Err(Error::GridMismatch("flux axes differ".into()));
    }
    if member.frequencies_ghz != clean.frequencies_ghz {
        return Err(Error::GridMismatch("frequency axes differ".into()));
    }
    Ok(member.magnitude() - clean.magnitude())
}
