//! Global minimization of the frustrated XY potential.
//!
//! Each restart anneals from a random configuration with single-site
//! Metropolis moves, then a damped Newton iteration polishes the result to a
//! stationary point. The lowest polished minimum across restarts wins; among
//! minima degenerate within `degeneracy_window` the choice is made by a
//! canonical key (the |circulation| map) that is invariant under φ → −φ, so
//! the pick at f and 1 − f corresponds.
//!
//! Flux sweeps add continuation: the previous point's configuration is
//! polished at the new flux and competes with fresh restarts.

use std::cmp::Ordering;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{self, PhaseConfiguration, VortexMap};
use crate::error::{Error, Result};
use crate::lattice::{ArrayGeometry, CircuitParams, GaugeField, Node};
use crate::rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Simulated annealing from a random start, then polish.
    Anneal,
    /// Polish straight from a uniformly random start.
    RandomSearch,
    /// Replica-exchange Monte Carlo; the coldest replica is polished
    /// periodically and the best polished minimum is kept.
    #[default]
    Tempering,
}

/// Geometric cooling schedule. Temperatures are in units of the nominal E_J.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub t_initial: f64,
    pub t_final: f64,
    /// Single-site proposals per restart.
    pub steps: usize,
    /// Initial half-width of the uniform phase proposal (rad).
    pub proposal_width: f64,
    /// Retune the width towards ~40% acceptance as the temperature drops.
    pub adaptive: bool,
    /// Fraction of steps that are energy-conserving reflections about the
    /// local field instead of Metropolis proposals.
    pub overrelaxation: f64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            t_initial: 2.0,
            t_final: 1e-3,
            steps: 200_000,
            proposal_width: PI,
            adaptive: true,
            overrelaxation: 0.5,
        }
    }
}

/// Replica ladder for [`Strategy::Tempering`]. Temperatures in units of the
/// nominal E_J, geometrically spaced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperingSchedule {
    pub replicas: usize,
    pub t_min: f64,
    pub t_max: f64,
    /// Lattice sweeps per replica (one sweep = one proposal per island).
    pub sweeps: usize,
    /// Sweeps between polishes of the coldest replica.
    pub quench_interval: usize,
}

impl Default for TemperingSchedule {
    fn default() -> Self {
        Self {
            replicas: 8,
            t_min: 0.05,
            t_max: 0.6,
            sweeps: 1600,
            quench_interval: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizerConfig {
    pub restarts: usize,
    pub anneal: AnnealSchedule,
    pub tempering: TemperingSchedule,
    /// Gradient max-norm target, in units of the nominal E_J per radian.
    pub polish_tolerance: f64,
    pub seed: u64,
    /// Energy window (units of nominal E_J) within which minima count as degenerate.
    pub degeneracy_window: f64,
    pub strategy: Strategy,
}

impl Default for MinimizerConfig {
    fn default() -> Self {
        Self {
            restarts: 8,
            anneal: AnnealSchedule::default(),
            tempering: TemperingSchedule::default(),
            polish_tolerance: 1e-9,
            seed: 0x5eed,
            degeneracy_window: 1e-6,
            strategy: Strategy::Tempering,
        }
    }
}

impl MinimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.anneal;
        if self.restarts == 0 {
            return Err(Error::param("minimizer.restarts", "must be >= 1"));
        }
        if !(a.t_final > 0.0 && a.t_initial > a.t_final) {
            return Err(Error::param(
                "minimizer.T_initial",
                format!("need T_initial > T_final > 0, got {} and {}", a.t_initial, a.t_final),
            ));
        }
        if a.steps < 2 {
            return Err(Error::param("minimizer.steps", "must be >= 2"));
        }
        if !(0.0..1.0).contains(&a.overrelaxation) {
            return Err(Error::param("minimizer.overrelaxation", "must lie in [0, 1)"));
        }
        if !(a.proposal_width > 0.0) {
            return Err(Error::param("minimizer.proposal_width", "must be > 0"));
        }
        let t = &self.tempering;
        if t.replicas == 0 || t.sweeps == 0 || t.quench_interval == 0 {
            return Err(Error::param(
                "minimizer.tempering",
                "replicas, sweeps and quench_interval must be >= 1",
            ));
        }
        if !(t.t_min > 0.0 && t.t_max >= t.t_min) {
            return Err(Error::param("minimizer.tempering", "need t_max >= t_min > 0"));
        }
        if !(self.polish_tolerance > 0.0) {
            return Err(Error::param("minimizer.polish_tolerance", "must be > 0"));
        }
        if !(self.degeneracy_window >= 0.0) {
            return Err(Error::param("minimizer.degeneracy_window", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroundStateResult {
    pub frustration: f64,
    pub config: PhaseConfiguration,
    /// V/h in GHz.
    pub energy: f64,
    /// Max-norm of the gradient, GHz/rad.
    pub gradient_norm: f64,
    pub vortex_map: VortexMap,
    /// Distinct minima found within the degeneracy window (at least 1).
    pub degenerate_count: usize,
    pub converged: bool,
}

/// A polished local minimum.
#[derive(Clone, Debug)]
struct Candidate {
    config: PhaseConfiguration,
    energy: f64,
    gradient_norm: f64,
    converged: bool,
    vortex: VortexMap,
}

const KEY_TOLERANCE: f64 = 1e-6;

/// Lexicographic comparison of |circulation| maps with a small tolerance.
fn compare_keys(a: &VortexMap, b: &VortexMap) -> Ordering {
    for (x, y) in a.circulation.iter().zip(&b.circulation) {
        let (x, y) = (x.abs(), y.abs());
        if (x - y).abs() > KEY_TOLERANCE {
            return x.partial_cmp(&y).unwrap_or(Ordering::Equal);
        }
    }
    Ordering::Equal
}

fn same_state(a: &Candidate, b: &Candidate) -> bool {
    a.vortex.winding == b.vortex.winding
        && a.vortex
            .circulation
            .iter()
            .zip(&b.vortex.circulation)
            .all(|(x, y)| (x - y).abs() <= KEY_TOLERANCE)
}

/// Picks the winner among candidates; returns its index and the number of
/// distinct minima inside the degeneracy window.
fn select(candidates: &[Candidate], window: f64) -> (usize, usize) {
    let any_converged = candidates.iter().any(|c| c.converged);
    let eligible: Vec<usize> = (0..candidates.len())
        .filter(|&i| candidates[i].converged || !any_converged)
        .collect();
    let e_min = eligible
        .iter()
        .map(|&i| candidates[i].energy)
        .fold(f64::INFINITY, f64::min);
    let degenerate: Vec<usize> = eligible
        .into_iter()
        .filter(|&i| candidates[i].energy <= e_min + window)
        .collect();
    let mut best = degenerate[0];
    for &i in &degenerate[1..] {
        if compare_keys(&candidates[i].vortex, &candidates[best].vortex) == Ordering::Greater {
            best = i;
        }
    }
    let mut distinct: Vec<usize> = Vec::new();
    for &i in &degenerate {
        if !distinct.iter().any(|&d| same_state(&candidates[d], &candidates[i])) {
            distinct.push(i);
        }
    }
    (best, distinct.len())
}

/// Per-island local fields for fast single-site energy differences.
struct LocalCouplings {
    /// For island i: (other island or ground, E_J, offset) such that the
    /// island's energy at phase p is −Σ E_J cos(p − φ_other − offset).
    neighbours: Vec<Vec<(Option<usize>, f64, f64)>>,
}

impl LocalCouplings {
    fn new(geometry: &ArrayGeometry, gauge: &GaugeField, params: &CircuitParams) -> Self {
        let mut neighbours = vec![Vec::new(); geometry.island_count()];
        for (k, j) in geometry.junctions().iter().enumerate() {
            let ej = params.josephson_energies()[k];
            let a = gauge.link_phase(k);
            if let Node::Island(i) = j.from {
                neighbours[i].push((j.to.island(), ej, a));
            }
            if let Node::Island(i) = j.to {
                neighbours[i].push((j.from.island(), ej, -a));
            }
        }
        Self { neighbours }
    }

    #[inline]
    fn field(&self, phi: &[f64], i: usize) -> (f64, f64) {
        let mut re = 0.0;
        let mut im = 0.0;
        for &(other, ej, off) in &self.neighbours[i] {
            let s = other.map_or(0.0, |o| phi[o]) + off;
            let (sin, cos) = s.sin_cos();
            re += ej * cos;
            im += ej * sin;
        }
        (re, im)
    }

    /// One overrelaxation or Metropolis update of island `i`; returns the
    /// energy change if the move was a Metropolis acceptance.
    #[inline]
    fn update(
        &self,
        phi: &mut [f64],
        i: usize,
        temperature: f64,
        width: f64,
        overrelaxation: f64,
        rng: &mut ChaCha8Rng,
    ) -> Option<f64> {
        let (re, im) = self.field(phi, i);
        let old = phi[i];
        if rng.random::<f64>() < overrelaxation {
            phi[i] = energy::wrap_phase(2.0 * im.atan2(re) - old);
            return None;
        }
        let new = old + rng.random_range(-width..width);
        let (s0, c0) = old.sin_cos();
        let (s1, c1) = new.sin_cos();
        let delta = -(re * (c1 - c0) + im * (s1 - s0));
        if delta <= 0.0 || rng.random::<f64>() < (-delta / temperature).exp() {
            phi[i] = energy::wrap_phase(new);
            Some(delta)
        } else {
            None
        }
    }

    fn energy(&self, phi: &[f64]) -> f64 {
        // Island-island links are seen from both ends.
        let mut e = 0.0;
        for (i, links) in self.neighbours.iter().enumerate() {
            for &(other, ej, off) in links {
                let weight = if other.is_some() { 0.5 } else { 1.0 };
                e -= weight * ej * (phi[i] - other.map_or(0.0, |o| phi[o]) - off).cos();
            }
        }
        e
    }

    /// Replica exchange; calls `quench` with the coldest replica every
    /// `quench_interval` sweeps and once at the end.
    fn temper(
        &self,
        replicas: &mut [Vec<f64>],
        schedule: &TemperingSchedule,
        overrelaxation: f64,
        ej: f64,
        rng: &mut ChaCha8Rng,
        mut quench: impl FnMut(&[f64]) -> Result<()>,
    ) -> Result<()> {
        let r = replicas.len();
        let n = replicas[0].len();
        let temps: Vec<f64> = (0..r)
            .map(|k| {
                let x = if r == 1 { 0.0 } else { k as f64 / (r - 1) as f64 };
                ej * schedule.t_min * (schedule.t_max / schedule.t_min).powf(x)
            })
            .collect();
        let mut energies: Vec<f64> = replicas.iter().map(|p| self.energy(p)).collect();
        let mut widths = vec![1.0f64; r];
        for sweep in 0..schedule.sweeps {
            for k in 0..r {
                let mut accepted = 0usize;
                for _ in 0..n {
                    let i = rng.random_range(0..n);
                    if let Some(d) = self.update(&mut replicas[k], i, temps[k], widths[k], overrelaxation, rng) {
                        energies[k] += d;
                        accepted += 1;
                    }
                }
                widths[k] = retune(widths[k], accepted as f64 / (n as f64 * (1.0 - overrelaxation)));
            }
            for k in ((sweep % 2)..r.saturating_sub(1)).step_by(2) {
                let arg = (1.0 / temps[k] - 1.0 / temps[k + 1]) * (energies[k] - energies[k + 1]);
                if arg >= 0.0 || rng.random::<f64>() < arg.exp() {
                    replicas.swap(k, k + 1);
                    energies.swap(k, k + 1);
                }
            }
            if (sweep + 1) % schedule.quench_interval == 0 {
                energies[0] = self.energy(&replicas[0]);
                quench(&replicas[0])?;
            }
        }
        if schedule.sweeps % schedule.quench_interval != 0 {
            quench(&replicas[0])?;
        }
        Ok(())
    }

    fn anneal(&self, phi: &mut [f64], schedule: &AnnealSchedule, ej: f64, rng: &mut ChaCha8Rng) {
        const WINDOW: usize = 500;
        let n = phi.len();
        let t0 = schedule.t_initial * ej;
        let ratio = (schedule.t_final / schedule.t_initial).powf(1.0 / (schedule.steps - 1) as f64);
        let mut temperature = t0;
        let mut width = schedule.proposal_width.min(PI);
        let mut accepted = 0usize;
        for step in 0..schedule.steps {
            let i = rng.random_range(0..n);
            if self
                .update(phi, i, temperature, width, schedule.overrelaxation, rng)
                .is_some()
            {
                accepted += 1;
            }
            temperature *= ratio;
            if schedule.adaptive && (step + 1) % WINDOW == 0 {
                let rate = accepted as f64 / (WINDOW as f64 * (1.0 - schedule.overrelaxation));
                width = retune(width, rate);
                accepted = 0;
            }
        }
    }
}

/// Nudges a proposal half-width towards 30-50% Metropolis acceptance.
fn retune(width: f64, rate: f64) -> f64 {
    if rate > 0.5 {
        (width * 1.1).min(PI)
    } else if rate < 0.3 {
        (width * 0.9).max(1e-3)
    } else {
        width
    }
}

/// Damped Newton descent to a stationary point. Returns the polished
/// configuration, its energy, and the gradient max-norm.
pub fn polish(
    start: &PhaseConfiguration,
    geometry: &ArrayGeometry,
    gauge: &GaugeField,
    params: &CircuitParams,
    tolerance: f64,
) -> Result<(PhaseConfiguration, f64, f64)> {
    const MAX_ITER: usize = 300;
    let n = geometry.island_count();
    let ej = params.nominal_ej();
    let mut phi = start.clone();
    let mut e0 = energy::potential(&phi, geometry, gauge, params)?;
    let mut g = DVector::from_vec(energy::gradient(&phi, geometry, gauge, params)?);
    let mut mu = 0.0;
    for _ in 0..MAX_ITER {
        if g.amax() <= tolerance {
            break;
        }
        let h = energy::hessian(&phi, geometry, gauge, params)?.into_inner();
        let step = loop {
            let damped = &h + DMatrix::identity(n, n) * mu;
            if let Some(ch) = damped.cholesky() {
                break -ch.solve(&g);
            }
            mu = (mu * 10.0).max(1e-6 * ej);
        };
        let slope = g.dot(&step);
        let slack = 1e-13 * (e0.abs() + 1.0);
        let mut t = 1.0;
        let accepted = loop {
            let trial = PhaseConfiguration::new(
                phi.phases().iter().zip(step.iter()).map(|(p, s)| p + t * s).collect(),
            );
            let e1 = energy::potential(&trial, geometry, gauge, params)?;
            if e1 <= e0 + 1e-4 * t * slope + slack {
                break Some((trial, e1));
            }
            t *= 0.5;
            if t < 1e-12 {
                break None;
            }
        };
        match accepted {
            Some((trial, e1)) => {
                phi = trial;
                e0 = e1;
                g = DVector::from_vec(energy::gradient(&phi, geometry, gauge, params)?);
                mu = if t == 1.0 { mu * 0.1 } else { mu.max(1e-6 * ej) * 10.0 };
                if mu < 1e-12 * ej {
                    mu = 0.0;
                }
            }
            None if mu < 1e3 * ej => mu = (mu * 100.0).max(1e-6 * ej),
            None => break,
        }
    }
    let phi = phi.canonical();
    let e = energy::potential(&phi, geometry, gauge, params)?;
    let gn = energy::gradient(&phi, geometry, gauge, params)?
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    Ok((phi, e, gn))
}

fn candidate_from(
    start: PhaseConfiguration,
    geometry: &ArrayGeometry,
    gauge: &GaugeField,
    params: &CircuitParams,
    cfg: &MinimizerConfig,
) -> Result<Candidate> {
    let tol = cfg.polish_tolerance * params.nominal_ej();
    let (config, energy, gradient_norm) = polish(&start, geometry, gauge, params, tol)?;
    let vortex = energy::vortex_map(&config, geometry, gauge)?;
    Ok(Candidate {
        config,
        energy,
        gradient_norm,
        converged: gradient_norm <= tol,
        vortex,
    })
}

fn restart(
    index: usize,
    geometry: &ArrayGeometry,
    gauge: &GaugeField,
    params: &CircuitParams,
    couplings: &LocalCouplings,
    cfg: &MinimizerConfig,
) -> Result<Candidate> {
    let mut rng = rng::stream(cfg.seed, &[index as u64]);
    let mut phi: Vec<f64> = (0..geometry.island_count())
        .map(|_| rng.random_range(-PI..PI))
        .collect();
    match cfg.strategy {
        Strategy::Anneal => {
            couplings.anneal(&mut phi, &cfg.anneal, params.nominal_ej(), &mut rng);
        }
        Strategy::RandomSearch => {}
        Strategy::Tempering => {
            let n = phi.len();
            let mut replicas = vec![phi];
            for _ in 1..cfg.tempering.replicas {
                replicas.push((0..n).map(|_| rng.random_range(-PI..PI)).collect());
            }
            let mut best: Option<Candidate> = None;
            couplings.temper(
                &mut replicas,
                &cfg.tempering,
                cfg.anneal.overrelaxation,
                params.nominal_ej(),
                &mut rng,
                |cold| {
                    let c = candidate_from(PhaseConfiguration::new(cold.to_vec()), geometry, gauge, params, cfg)?;
                    if best.as_ref().is_none_or(|b| c.energy < b.energy) {
                        best = Some(c);
                    }
                    Ok(())
                },
            )?;
            return Ok(best.expect("at least one quench"));
        }
    }
    candidate_from(PhaseConfiguration::new(phi), geometry, gauge, params, cfg)
}

/// Applies a grid map `(x, y) → phase` over all islands, adding the gauge
/// shift −2πfL·y that keeps Landau-gauge junction angles matched.
fn remap(
    geometry: &ArrayGeometry,
    frustration: f64,
    image: impl Fn(usize, usize) -> f64,
) -> PhaseConfiguration {
    let (l, w) = (geometry.columns(), geometry.rows());
    let mut out = vec![0.0; geometry.island_count()];
    for y in 1..=w {
        for x in 0..=l {
            if let Node::Island(i) = geometry.node_at(x, y) {
                out[i] = image(x, y) - 2.0 * PI * frustration * (l * y) as f64;
            }
        }
    }
    PhaseConfiguration::new(out).canonical()
}

fn grid_phase(config: &PhaseConfiguration, geometry: &ArrayGeometry, x: usize, y: usize) -> f64 {
    match geometry.node_at(x, y) {
        Node::Ground => 0.0,
        Node::Island(i) => config.phases()[i],
    }
}

/// Reflection x → L − x combined with φ → −φ.
fn reflect(config: &PhaseConfiguration, geometry: &ArrayGeometry, frustration: f64) -> PhaseConfiguration {
    let l = geometry.columns();
    remap(geometry, frustration, |x, y| -grid_phase(config, geometry, l - x, y))
}

/// 180° rotation, exchanging pad and ground.
fn rotate(config: &PhaseConfiguration, geometry: &ArrayGeometry, frustration: f64) -> PhaseConfiguration {
    let (l, w) = (geometry.columns(), geometry.rows());
    let pad = config.phases()[geometry.pad_node()];
    remap(geometry, frustration, |x, y| grid_phase(config, geometry, l - x, w - y) - pad)
}

/// Images of a configuration under the exact symmetries of a uniform array
/// in Landau gauge: reflection with φ → −φ, the 180° rotation, and their
/// product. Every junction angle maps to minus an angle of the original, so
/// the energy is unchanged.
pub fn symmetry_images(
    config: &PhaseConfiguration,
    geometry: &ArrayGeometry,
    frustration: f64,
) -> Vec<PhaseConfiguration> {
    let mirrored = reflect(config, geometry, frustration);
    let both = rotate(&mirrored, geometry, frustration);
    vec![mirrored, rotate(config, geometry, frustration), both]
}

fn run_restarts(
    geometry: &ArrayGeometry,
    gauge: &GaugeField,
    params: &CircuitParams,
    cfg: &MinimizerConfig,
) -> Result<Vec<Candidate>> {
    cfg.validate()?;
    let couplings = LocalCouplings::new(geometry, gauge, params);
    // Symmetry-related minima are added explicitly so the degenerate set,
    // and hence the canonical pick, does not depend on which member a
    // restart happened to reach. For disordered arrays the images are just
    // extra starting points.
    let nested: Vec<Vec<Candidate>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let found = restart(r, geometry, gauge, params, &couplings, cfg)?;
            let mut out = vec![];
            for image in symmetry_images(&found.config, geometry, gauge.frustration()) {
                out.push(candidate_from(image, geometry, gauge, params, cfg)?);
            }
            out.insert(0, found);
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(nested.into_iter().flatten().collect())
}

fn finish(candidates: &[Candidate], gauge: &GaugeField, cfg: &MinimizerConfig, ej: f64) -> GroundStateResult {
    let (best, degenerate_count) = select(candidates, cfg.degeneracy_window * ej);
    let c = &candidates[best];
    if !c.converged {
        log::warn!(
            "no restart converged at flux {} (gradient norm {:.3e})",
            gauge.frustration(),
            c.gradient_norm
        );
    }
    GroundStateResult {
        frustration: gauge.frustration(),
        config: c.config.clone(),
        energy: c.energy,
        gradient_norm: c.gradient_norm,
        vortex_map: c.vortex.clone(),
        degenerate_count,
        converged: c.converged,
    }
}

/// Lowest polished minimum over `cfg.restarts` independent restarts.
/// Non-convergence is reported through `converged = false`.
pub fn minimize(
    geometry: &ArrayGeometry,
    gauge: &GaugeField,
    params: &CircuitParams,
    cfg: &MinimizerConfig,
) -> Result<GroundStateResult> {
    let candidates = run_restarts(geometry, gauge, params, cfg)?;
    Ok(finish(&candidates, gauge, cfg, params.nominal_ej()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub flux: f64,
    pub result: GroundStateResult,
    /// Fresh restarts found a lower minimum than the continued configuration.
    pub warm_start_lost: bool,
    /// The winding pattern differs from the previous flux point.
    pub jump: bool,
}

/// Minimizes at each flux value. Points are first solved independently (in
/// parallel, per-point seeds derived from `cfg.seed`), then a sequential
/// continuation pass polishes each previous winner at the next flux and
/// keeps whichever is lower.
pub fn sweep_ground_states(
    geometry: &ArrayGeometry,
    params: &CircuitParams,
    flux_grid: &[f64],
    cfg: &MinimizerConfig,
) -> Result<Vec<SweepPoint>> {
    if flux_grid.is_empty() || flux_grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::UnsortedGrid);
    }
    cfg.validate()?;
    let ej = params.nominal_ej();
    let window = cfg.degeneracy_window * ej;
    let fresh: Vec<Vec<Candidate>> = flux_grid
        .par_iter()
        .enumerate()
        .map(|(k, &f)| {
            let gauge = GaugeField::landau(geometry, f);
            let point_cfg = MinimizerConfig {
                seed: rng::derive_seed(cfg.seed, &[k as u64]),
                ..cfg.clone()
            };
            run_restarts(geometry, &gauge, params, &point_cfg)
        })
        .collect::<Result<_>>()?;

    let mut out: Vec<SweepPoint> = Vec::with_capacity(flux_grid.len());
    for (k, (&f, mut candidates)) in flux_grid.iter().zip(fresh).enumerate() {
        let gauge = GaugeField::landau(geometry, f);
        let mut warm_energy = None;
        if let Some(prev) = out.last() {
            let warm = candidate_from(prev.result.config.clone(), geometry, &gauge, params, cfg)?;
            warm_energy = Some(warm.energy);
            candidates.push(warm);
        }
        let result = finish(&candidates, &gauge, cfg, ej);
        let warm_start_lost = warm_energy.is_some_and(|e| e > result.energy + window);
        let jump = k > 0 && out[k - 1].result.vortex_map.winding != result.vortex_map.winding;
        out.push(SweepPoint {
            flux: f,
            result,
            warm_start_lost,
            jump,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::CircuitConstants;

    fn device(l: usize, w: usize) -> (ArrayGeometry, CircuitParams) {
        let g = ArrayGeometry::new(l, w).unwrap();
        let p = CircuitParams::uniform(&g, CircuitConstants::device()).unwrap();
        (g, p)
    }

    fn quick() -> MinimizerConfig {
        MinimizerConfig {
            restarts: 4,
            tempering: TemperingSchedule {
                sweeps: 300,
                ..TemperingSchedule::default()
            },
            ..MinimizerConfig::default()
        }
    }

    #[test]
    fn zero_flux_is_uniform() {
        let (g, p) = device(10, 3);
        let gauge = GaugeField::landau(&g, 0.0);
        let r = minimize(&g, &gauge, &p, &quick()).unwrap();
        assert!(r.converged);
        let total: f64 = p.josephson_energies().iter().sum();
        assert!((r.energy + total).abs() < 1e-9 * total);
        assert_eq!(r.vortex_map.total_winding(), 0);
        let phi = r.config.phases();
        assert!(phi.iter().all(|x| x.abs() < 1e-6));
    }

    #[test]
    fn polished_result_is_stationary() {
        let (g, p) = device(10, 3);
        let gauge = GaugeField::landau(&g, 1.0 / 3.0);
        let cfg = quick();
        let r = minimize(&g, &gauge, &p, &cfg).unwrap();
        assert!(r.converged);
        let grad = energy::gradient(&r.config, &g, &gauge, &p).unwrap();
        let norm = grad.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(norm <= cfg.polish_tolerance * p.nominal_ej());
        let h = energy::hessian(&r.config, &g, &gauge, &p).unwrap();
        let min_eig = h.matrix().clone().symmetric_eigen().eigenvalues.min();
        assert!(min_eig >= -1e-8 * p.nominal_ej());
    }

    #[test]
    fn deterministic_given_seed() {
        let (g, p) = device(6, 3);
        let gauge = GaugeField::landau(&g, 0.37);
        let a = minimize(&g, &gauge, &p, &quick()).unwrap();
        let b = minimize(&g, &gauge, &p, &quick()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn more_restarts_never_worse() {
        let (g, p) = device(8, 3);
        let gauge = GaugeField::landau(&g, 0.29);
        let mut previous = f64::INFINITY;
        for restarts in [1, 2, 4, 8] {
            let cfg = MinimizerConfig { restarts, ..quick() };
            let r = minimize(&g, &gauge, &p, &cfg).unwrap();
            assert!(r.energy <= previous + 1e-12);
            previous = r.energy;
        }
    }

    #[test]
    fn strategies_agree_on_toy_model() {
        let (g, p) = device(10, 3);
        let gauge = GaugeField::landau(&g, 1.0 / 3.0);
        let run = |strategy, restarts| {
            let cfg = MinimizerConfig {
                restarts,
                strategy,
                ..MinimizerConfig::default()
            };
            minimize(&g, &gauge, &p, &cfg).unwrap()
        };
        let tempering = run(Strategy::Tempering, 8);
        let anneal = run(Strategy::Anneal, 32);
        let random = run(Strategy::RandomSearch, 400);
        for other in [&anneal, &random] {
            assert!((tempering.energy - other.energy).abs() <= 1e-6 * p.nominal_ej());
            assert_eq!(tempering.vortex_map.winding, other.vortex_map.winding);
        }
    }

    #[test]
    fn flux_and_its_complement_are_mirror_images() {
        let (g, p) = device(8, 3);
        for f in [0.2, 0.3, 0.45] {
            let a = minimize(&g, &GaugeField::landau(&g, f), &p, &quick()).unwrap();
            let b = minimize(&g, &GaugeField::landau(&g, 1.0 - f), &p, &quick()).unwrap();
            assert!((a.energy - b.energy).abs() <= 1e-9 * a.energy.abs());
            let flipped: Vec<i32> = a.vortex_map.winding.iter().map(|w| 1 - w).collect();
            assert_eq!(flipped, b.vortex_map.winding);
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn symmetry_images_preserve_energy(
            l in 1usize..6, w in 1usize..4, f in -1.0f64..2.0, seed in proptest::prelude::any::<u64>(),
        ) {
            let (g, p) = device(l, w);
            let gauge = GaugeField::landau(&g, f);
            let mut rng = rng::stream(seed, &[]);
            let phi = PhaseConfiguration::new((0..g.island_count()).map(|_| rng.random_range(-PI..PI)).collect());
            let e0 = energy::potential(&phi, &g, &gauge, &p).unwrap();
            let images = symmetry_images(&phi, &g, f);
            for image in &images {
                let e = energy::potential(image, &g, &gauge, &p).unwrap();
                proptest::prop_assert!((e - e0).abs() <= 1e-9 * e0.abs().max(1.0));
            }
            // Both generators are involutions.
            for twice in [reflect(&images[0], &g, f), rotate(&images[1], &g, f)] {
                for (a, b) in twice.phases().iter().zip(phi.canonical().phases()) {
                    proptest::prop_assert!(energy::wrap_phase(a - b).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn local_energy_matches_potential() {
        let (g, p) = device(4, 3);
        let gauge = GaugeField::landau(&g, 0.27);
        let couplings = LocalCouplings::new(&g, &gauge, &p);
        let phi: Vec<f64> = (0..g.island_count()).map(|i| (i as f64 * 1.37).sin() * 3.0).collect();
        let direct = energy::potential(&PhaseConfiguration::new(phi.clone()), &g, &gauge, &p).unwrap();
        assert!((couplings.energy(&phi) - direct).abs() < 1e-10 * direct.abs());
    }

    #[test]
    fn overrelaxation_conserves_energy() {
        let (g, p) = device(4, 3);
        let gauge = GaugeField::landau(&g, 0.31);
        let couplings = LocalCouplings::new(&g, &gauge, &p);
        let mut phi: Vec<f64> = (0..g.island_count()).map(|i| (i as f64 * 0.71).cos() * 2.0).collect();
        let e0 = couplings.energy(&phi);
        let mut rng = rng::stream(1, &[]);
        for i in 0..200 {
            assert!(couplings.update(&mut phi, i % g.island_count(), 1.0, 1.0, 1.0, &mut rng).is_none());
        }
        assert!((couplings.energy(&phi) - e0).abs() < 1e-9 * e0.abs());
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = MinimizerConfig { restarts: 0, ..MinimizerConfig::default() };
        assert!(bad.validate().is_err());
        let mut bad = MinimizerConfig::default();
        bad.anneal.t_final = 5.0;
        assert!(bad.validate().unwrap_err().to_string().contains("T_initial"));
    }

    #[test]
    fn sweep_rejects_unsorted_grid() {
        let (g, p) = device(3, 2);
        assert!(matches!(
            sweep_ground_states(&g, &p, &[0.2, 0.1], &quick()),
            Err(Error::UnsortedGrid)
        ));
        assert!(sweep_ground_states(&g, &p, &[], &quick()).is_err());
    }

    #[test]
    fn single_point_sweep_matches_minimize() {
        let (g, p) = device(6, 3);
        let cfg = quick();
        let sweep = sweep_ground_states(&g, &p, &[0.0], &cfg).unwrap();
        let gauge = GaugeField::landau(&g, 0.0);
        let direct = minimize(
            &g,
            &gauge,
            &p,
            &MinimizerConfig { seed: rng::derive_seed(cfg.seed, &[0]), ..cfg },
        )
        .unwrap();
        assert_eq!(sweep.len(), 1);
        assert_eq!(sweep[0].result, direct);
        assert!(!sweep[0].jump && !sweep[0].warm_start_lost);
    }
}
