//! Frustrated XY potential of the array, its analytic derivatives, and the
//! plaquette observables (circulating current and winding number).
//!
//! For a junction `i → j` the gauge-invariant phase drop is
//! `θ = φ_i − φ_j − A_ij`, and the Josephson energy is `−E_J cos θ`. Ground
//! has phase 0.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{ArrayGeometry, CircuitParams, GaugeField, Node, PlaquetteEdge};

/// Wraps an angle onto the principal branch (−π, π].
pub fn wrap_phase(x: f64) -> f64 {
    let r = (x + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r + 2.0 * PI
    } else {
        r
    }
}

/// Island phases in radians; the ground electrode is implicit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseConfiguration(Vec<f64>);

impl PhaseConfiguration {
    pub fn new(phases: Vec<f64>) -> Self {
        Self(phases)
    }

    pub fn uniform(islands: usize, phase: f64) -> Self {
        Self(vec![phase; islands])
    }

    pub fn phases(&self) -> &[f64] {
        &self.0
    }

    pub fn phases_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Every phase wrapped onto (−π, π].
    pub fn canonical(&self) -> Self {
        Self(self.0.iter().map(|&p| wrap_phase(p)).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Flux variables Φ_i = φ_i/η in units of Φ₀, i.e. φ_i/2π.
    pub fn node_flux(&self) -> Vec<f64> {
        self.0.iter().map(|p| p / (2.0 * PI)).collect()
    }
}

fn check_len(config: &PhaseConfiguration, geometry: &ArrayGeometry) -> Result<()> {
    if config.len() != geometry.island_count() {
        return Err(Error::LengthMismatch {
            expected: geometry.island_count(),
            got: config.len(),
        });
    }
    Ok(())
}

#[inline]
fn phase_of(phases: &[f64], node: Node) -> f64 {
    match node {
        Node::Ground => 0.0,
        Node::Island(i) => phases[i],
    }
}

/// Gauge-invariant phase drop θ on every junction.
pub fn junction_angles(
    config: &PhaseConfiguration,
    geometry: &ArrayGeometry,
    gauge: &GaugeField,
) -> Result<Vec<f64>> {
    check_len(config, geometry)?;
    let phi = config.phases();
    Ok(geometry
        .junctions()
        .iter()
        .enumerate()
        .map(|(k, j)| phase_of(phi, j.from) - phase_of(phi, j.to) - gauge.link_phase(k))
        .collect())
}

/// Josephson potential V/h in GHz.
pub fn potential(
    config: &PhaseConfiguration,
    geometry: &ArrayGeometry,
    gauge: &GaugeField,
    params: &CircuitParams,
) -> Result<f64> {
    let theta = junction_angles(config, geometry, gauge)?;
    Ok(theta
        .iter()
        .zip(params.josephson_energies())
        .map(|(t, ej)| -ej * t.cos())
        .sum())
}

/// ∂V/∂φ_i in GHz/rad.
pub fn gradient(
    config: &PhaseConfiguration,
    geometry: &ArrayGeometry,
    gauge: &GaugeField,
    params: &CircuitParams,
) -> Result<Vec<f64>> {
    let theta = junction_angles(config, geometry, gauge)?;
    let mut g = vec![0.0; geometry.island_count()];
    for ((j, t), ej) in geometry.junctions().iter().zip(&theta).zip(params.josephson_energies()) {
        let s = ej * t.sin();
        if let Node::Island(i) = j.from {
            g[i] += s;
        }
        if let Node::Island(i) = j.to {
            g[i] -= s;
        }
    }
    Ok(g)
}

/// Symmetric matrix of ∂²V/∂φ_i∂φ_j in GHz/rad². Only the Josephson
/// curvature; capacitance and loss are attached downstream.
#[derive(Clone, Debug, PartialEq)]
pub struct Hessian(DMatrix<f64>);

impl Hessian {
    pub fn from_matrix(m: DMatrix<f64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

pub fn hessian(
    config: &PhaseConfiguration,
    geometry: &ArrayGeometry,
    gauge: &GaugeField,
    params: &CircuitParams,
) -> Result<Hessian> {
    let theta = junction_angles(config, geometry, gauge)?;
    let n = geometry.island_count();
    let mut h = DMatrix::zeros(n, n);
    for ((j, t), ej) in geometry.junctions().iter().zip(&theta).zip(params.josephson_energies()) {
        let c = ej * t.cos();
        match (j.from.island(), j.to.island()) {
            (Some(a), Some(b)) if a == b => {}
            (Some(a), Some(b)) => {
                h[(a, a)] += c;
                h[(b, b)] += c;
                h[(a, b)] -= c;
                h[(b, a)] -= c;
            }
            (Some(a), None) | (None, Some(a)) => h[(a, a)] += c,
            (None, None) => {}
        }
    }
    Ok(Hessian(h))
}

/// Per-plaquette circulating current (units of I_C) and integer vorticity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VortexMap {
    pub columns: usize,
    pub rows: usize,
    /// Row-major over plaquettes, index `y * columns + x`.
    pub circulation: Vec<f64>,
    pub winding: Vec<i32>,
}

impl VortexMap {
    pub fn total_winding(&self) -> i64 {
        self.winding.iter().map(|&w| w as i64).sum()
    }

    pub fn winding_at(&self, x: usize, y: usize) -> i32 {
        self.winding[y * self.columns + x]
    }

    pub fn circulation_at(&self, x: usize, y: usize) -> f64 {
        self.circulation[y * self.columns + x]
    }

    pub fn max_circulation(&self) -> f64 {
        self.circulation.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Winding numbers as rows, top row first (the way the array is drawn).
    pub fn winding_rows(&self) -> Vec<Vec<i32>> {
        (0..self.rows)
            .rev()
            .map(|y| self.winding[y * self.columns..(y + 1) * self.columns].to_vec())
            .collect()
    }

    /// One character per plaquette, top row first: `o` for a vortex, `x` for
    /// an antivortex, `.` otherwise.
    pub fn ascii(&self) -> String {
        let mut s = String::new();
        for row in self.winding_rows() {
            for w in row {
                s.push(match w {
                    0 => '.',
                    w if w > 0 => 'o',
                    _ => 'x',
                });
            }
            s.push('\n');
        }
        s
    }

    /// CSV with header `plaquette_x,plaquette_y,circulation,winding`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "plaquette_x,plaquette_y,circulation,winding")?;
        for y in 0..self.rows {
            for x in 0..self.columns {
                let k = y * self.columns + x;
                writeln!(out, "{},{},{},{}", x, y, self.circulation[k], self.winding[k])?;
            }
        }
        Ok(())
    }
}

/// Circulating current `Σ sin(φ_a − φ_b − A_ab)` around each plaquette
/// (counter-clockwise) and the winding
/// `round(Σ wrap(φ_a − φ_b − A_ab)/2π + f)`.
///
/// The frustration is reduced into [0, 1) before counting, so windings are
/// vortex numbers relative to the integer filling just below `f`; `f` and
/// `f + 1` give identical maps.
pub fn vortex_map(
    config: &PhaseConfiguration,
    geometry: &ArrayGeometry,
    gauge: &GaugeField,
) -> Result<VortexMap> {
    let theta = junction_angles(config, geometry, gauge)?;
    let f = gauge.frustration() - gauge.frustration().floor();
    let mut circulation = Vec::with_capacity(geometry.plaquettes().len());
    let mut winding = Vec::with_capacity(geometry.plaquettes().len());
    for p in geometry.plaquettes() {
        let mut current = 0.0;
        let mut wrapped = 0.0;
        for e in &p.edges {
            let angle = match *e {
                PlaquetteEdge::Junction { index, forward: true } => theta[index],
                PlaquetteEdge::Junction { index, forward: false } => -theta[index],
                PlaquetteEdge::Fused => 0.0,
            };
            current += angle.sin();
            wrapped += wrap_phase(angle);
        }
        circulation.push(current);
        winding.push((wrapped / (2.0 * PI) + f).round() as i32);
    }
    Ok(VortexMap {
        columns: geometry.columns(),
        rows: geometry.rows(),
        circulation,
        winding,
    })
}
