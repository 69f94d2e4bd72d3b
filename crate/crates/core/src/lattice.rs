//! Island/junction graph of a quasi-1D plaquette array, its Landau-gauge
//! link phases, circuit constants, and the Maxwell capacitance matrix.
//!
//! Grid nodes sit at `(x, y)` with `0 ≤ x ≤ L` and `0 ≤ y ≤ W`. The whole
//! bottom row `y = 0` is one galvanically fused electrode held at ground, and
//! the whole top row `y = W` is a second fused electrode, the pad node. Only
//! the interior rows carry independent islands. Free islands are indexed with
//! the pad first (index 0) followed by interior islands row-major.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Endpoint of a link: the grounded bottom electrode or a free island.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Node {
    Ground,
    Island(usize),
}

impl Node {
    pub fn island(self) -> Option<usize> {
        match self {
            Node::Ground => None,
            Node::Island(i) => Some(i),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkKind {
    Horizontal,
    Vertical,
}

/// A Josephson junction oriented `from → to`. Horizontal links point in +x,
/// vertical links in +y. `(column, row)` is the grid position of `from`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Junction {
    pub from: Node,
    pub to: Node,
    pub kind: LinkKind,
    pub column: usize,
    pub row: usize,
}

/// One side of a plaquette, traversed counter-clockwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlaquetteEdge {
    /// A junction, traversed along (`forward`) or against its orientation.
    Junction { index: usize, forward: bool },
    /// A stretch of fused top or bottom electrode (no junction, no phase drop).
    Fused,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plaquette {
    pub x: usize,
    pub y: usize,
    /// Corners (x,y), (x+1,y), (x+1,y+1), (x,y+1).
    pub corners: [Node; 4],
    /// Edge i joins corner i to corner (i+1) mod 4.
    pub edges: [PlaquetteEdge; 4],
}

/// Where the next-nearest-neighbour capacitance sits inside each plaquette.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagonalPlacement {
    /// Lower-left to upper-right corner only.
    #[default]
    UpperRight,
    /// Both diagonals.
    Both,
}

#[derive(Clone, Debug)]
pub struct ArrayGeometry {
    columns: usize,
    rows: usize,
    island_count: usize,
    junctions: Vec<Junction>,
    plaquettes: Vec<Plaquette>,
    incident: Vec<Vec<usize>>,
}

impl ArrayGeometry {
    /// Index of the top electrode, which couples to the cavity.
    pub const PAD_NODE: usize = 0;

    /// Builds an `columns × rows` plaquette array (L × W).
    pub fn new(columns: usize, rows: usize) -> Result<Self> {
        if columns == 0 || rows == 0 {
            return Err(Error::InvalidLattice { columns, rows });
        }
        let island_count = (rows - 1) * (columns + 1) + 1;
        let node_at = |x: usize, y: usize| -> Node {
            if y == 0 {
                Node::Ground
            } else if y == rows {
                Node::Island(Self::PAD_NODE)
            } else {
                Node::Island(1 + (y - 1) * (columns + 1) + x)
            }
        };

        let mut junctions = Vec::with_capacity((rows - 1) * columns + rows * (columns + 1));
        let mut horizontal = vec![None; (rows + 1) * columns];
        let mut vertical = vec![None; rows * (columns + 1)];
        for y in 1..rows {
            for x in 0..columns {
                horizontal[y * columns + x] = Some(junctions.len());
                junctions.push(Junction {
                    from: node_at(x, y),
                    to: node_at(x + 1, y),
                    kind: LinkKind::Horizontal,
                    column: x,
                    row: y,
                });
            }
        }
        for y in 0..rows {
            for x in 0..=columns {
                vertical[y * (columns + 1) + x] = Some(junctions.len());
                junctions.push(Junction {
                    from: node_at(x, y),
                    to: node_at(x, y + 1),
                    kind: LinkKind::Vertical,
                    column: x,
                    row: y,
                });
            }
        }

        let edge = |slot: Option<usize>, forward: bool| match slot {
            Some(index) => PlaquetteEdge::Junction { index, forward },
            None => PlaquetteEdge::Fused,
        };
        let mut plaquettes = Vec::with_capacity(columns * rows);
        for y in 0..rows {
            for x in 0..columns {
                plaquettes.push(Plaquette {
                    x,
                    y,
                    corners: [
                        node_at(x, y),
                        node_at(x + 1, y),
                        node_at(x + 1, y + 1),
                        node_at(x, y + 1),
                    ],
                    edges: [
                        edge(horizontal[y * columns + x], true),
                        edge(vertical[y * (columns + 1) + x + 1], true),
                        edge(horizontal[(y + 1) * columns + x], false),
                        edge(vertical[y * (columns + 1) + x], false),
                    ],
                });
            }
        }

        let mut incident = vec![Vec::new(); island_count];
        for (k, j) in junctions.iter().enumerate() {
            for node in [j.from, j.to] {
                if let Node::Island(i) = node {
                    incident[i].push(k);
                }
            }
        }

        Ok(Self {
            columns,
            rows,
            island_count,
            junctions,
            plaquettes,
            incident,
        })
    }

    /// Number of plaquette columns, L.
    pub fn columns(&self) -> usize {
        self.columns
    }

    /// Number of plaquette rows, W.
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn island_count(&self) -> usize {
        self.island_count
    }

    pub fn junctions(&self) -> &[Junction] {
        &self.junctions
    }

    pub fn plaquettes(&self) -> &[Plaquette] {
        &self.plaquettes
    }

    /// Junction indices touching island `i`.
    pub fn incident(&self, island: usize) -> &[usize] {
        &self.incident[island]
    }

    pub fn pad_node(&self) -> usize {
        Self::PAD_NODE
    }

    /// Node at grid position `(x, y)`.
    pub fn node_at(&self, x: usize, y: usize) -> Node {
        assert!(x <= self.columns && y <= self.rows, "grid position out of range");
        if y == 0 {
            Node::Ground
        } else if y == self.rows {
            Node::Island(Self::PAD_NODE)
        } else {
            Node::Island(1 + (y - 1) * (self.columns + 1) + x)
        }
    }

    /// Row-major index of plaquette `(x, y)`.
    pub fn plaquette_index(&self, x: usize, y: usize) -> usize {
        y * self.columns + x
    }
}

/// Landau-gauge link phases A_ij (radians). A vertical junction in column x
/// carries `x · 2π f` along +y; horizontal junctions carry nothing.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugeField {
    frustration: f64,
    link_phase: Vec<f64>,
}

impl GaugeField {
    pub fn landau(geometry: &ArrayGeometry, frustration: f64) -> Self {
        let link_phase = geometry
            .junctions()
            .iter()
            .map(|j| match j.kind {
                LinkKind::Horizontal => 0.0,
                LinkKind::Vertical => j.column as f64 * 2.0 * PI * frustration,
            })
            .collect();
        Self {
            frustration,
            link_phase,
        }
    }

    /// Arbitrary link phases. `frustration` is the flux per plaquette they
    /// are meant to represent; nothing here checks that they do.
    pub fn from_link_phases(frustration: f64, link_phase: Vec<f64>) -> Self {
        Self {
            frustration,
            link_phase,
        }
    }

    pub fn frustration(&self) -> f64 {
        self.frustration
    }

    pub fn link_phases(&self) -> &[f64] {
        &self.link_phase
    }

    pub fn link_phase(&self, junction: usize) -> f64 {
        self.link_phase[junction]
    }

    /// Oriented sum of A around a plaquette, counter-clockwise.
    pub fn plaquette_sum(&self, plaquette: &Plaquette) -> f64 {
        plaquette
            .edges
            .iter()
            .map(|e| match *e {
                PlaquetteEdge::Junction { index, forward: true } => self.link_phase[index],
                PlaquetteEdge::Junction { index, forward: false } => -self.link_phase[index],
                PlaquetteEdge::Fused => 0.0,
            })
            .sum()
    }

    /// Gauge transform by per-island shifts χ: A_ij → A_ij + χ_i − χ_j
    /// (ground has χ = 0). Pair with shifting every phase φ_i by χ_i.
    pub fn gauge_transformed(&self, geometry: &ArrayGeometry, chi: &[f64]) -> Self {
        let at = |n: Node| n.island().map_or(0.0, |i| chi[i]);
        let link_phase = geometry
            .junctions()
            .iter()
            .zip(&self.link_phase)
            .map(|(j, a)| a + at(j.from) - at(j.to))
            .collect();
        Self {
            frustration: self.frustration,
            link_phase,
        }
    }
}

/// Nominal electrical constants shared by every junction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitConstants {
    /// Josephson energy E_J/h in GHz.
    pub ej_ghz: f64,
    /// Nearest-neighbour junction capacitance in fF.
    pub cj_ff: f64,
    /// Next-nearest diagonal capacitance in fF.
    pub cdiag_ff: f64,
    /// Island-to-ground capacitance in fF.
    pub cg_ff: f64,
    /// Pad-to-pad shunt capacitance in fF.
    pub cs_ff: f64,
    /// Quasiparticle shunt conductance per junction, in units of G₀.
    pub g_over_g0: f64,
    #[serde(default)]
    pub diagonal: DiagonalPlacement,
}

impl CircuitConstants {
    /// Device values of the 30×3 array measured in the cavity.
    pub fn device() -> Self {
        Self {
            ej_ghz: 25.8,
            cj_ff: 1.5,
            cdiag_ff: 0.12,
            cg_ff: 0.008,
            cs_ff: 68.5,
            g_over_g0: 3.27e-3,
            diagonal: DiagonalPlacement::UpperRight,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("circuit.EJ_GHz", self.ej_ghz),
            ("circuit.CJ_fF", self.cj_ff),
            ("circuit.Cdiag_fF", self.cdiag_ff),
            ("circuit.Cg_fF", self.cg_ff),
            ("circuit.CS_fF", self.cs_ff),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(key, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(self.g_over_g0.is_finite() && self.g_over_g0 >= 0.0) {
            return Err(Error::param(
                "circuit.G_over_G0",
                format!("must be finite and >= 0, got {}", self.g_over_g0),
            ));
        }
        Ok(())
    }
}

/// Circuit constants plus a per-junction Josephson energy table, so that
/// disorder realizations can share the geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitParams {
    pub constants: CircuitConstants,
    ej_ghz: Vec<f64>,
}

impl CircuitParams {
    pub fn uniform(geometry: &ArrayGeometry, constants: CircuitConstants) -> Result<Self> {
        let ej = vec![constants.ej_ghz; geometry.junctions().len()];
        Self::with_josephson_energies(geometry, constants, ej)
    }

    pub fn with_josephson_energies(
        geometry: &ArrayGeometry,
        constants: CircuitConstants,
        ej_ghz: Vec<f64>,
    ) -> Result<Self> {
        constants.validate()?;
        if ej_ghz.len() != geometry.junctions().len() {
            return Err(Error::LengthMismatch {
                expected: geometry.junctions().len(),
                got: ej_ghz.len(),
            });
        }
        if let Some((k, v)) = ej_ghz
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::param(
                "circuit.EJ_GHz",
                format!("junction {k} has non-positive E_J {v}"),
            ));
        }
        Ok(Self { constants, ej_ghz })
    }

    /// Per-junction Josephson energies (GHz).
    pub fn josephson_energies(&self) -> &[f64] {
        &self.ej_ghz
    }

    pub fn nominal_ej(&self) -> f64 {
        self.constants.ej_ghz
    }
}

/// A list of two-terminal capacitors over free islands and ground.
#[derive(Clone, Debug, Default)]
pub struct CapacitorNetwork {
    islands: usize,
    elements: Vec<(Node, Node, f64)>,
}

impl CapacitorNetwork {
    pub fn new(islands: usize) -> Self {
        Self {
            islands,
            elements: Vec::new(),
        }
    }

    pub fn add(&mut self, a: Node, b: Node, capacitance_ff: f64) {
        self.elements.push((a, b, capacitance_ff));
    }

    pub fn elements(&self) -> &[(Node, Node, f64)] {
        &self.elements
    }

    /// Maxwell matrix: each capacitor adds to both diagonals and subtracts
    /// from the shared off-diagonal. Elements with both ends on the same
    /// electrode carry no charge and are dropped.
    pub fn assemble(&self) -> Result<CapacitanceMatrix> {
        let mut c = DMatrix::zeros(self.islands, self.islands);
        for &(a, b, value) in &self.elements {
            match (a.island(), b.island()) {
                (Some(i), Some(j)) if i == j => {}
                (Some(i), Some(j)) => {
                    c[(i, i)] += value;
                    c[(j, j)] += value;
                    c[(i, j)] -= value;
                    c[(j, i)] -= value;
                }
                (Some(i), None) | (None, Some(i)) => c[(i, i)] += value,
                (None, None) => {}
            }
        }
        CapacitanceMatrix::new(c)
    }
}

/// Symmetric positive-definite Maxwell capacitance matrix in fF.
#[derive(Clone, Debug, PartialEq)]
pub struct CapacitanceMatrix(DMatrix<f64>);

impl CapacitanceMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::NotPositiveDefinite("matrix is not square".into()));
        }
        if matrix.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite(
                "capacitance matrix has no Cholesky factor".into(),
            ));
        }
        Ok(Self(matrix))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// Every capacitor of the array: C_J on each junction, the diagonal
/// capacitance in each plaquette, C_g from interior islands to ground, and
/// C_S from the pad to ground.
pub fn capacitance_network(geometry: &ArrayGeometry, params: &CircuitParams) -> CapacitorNetwork {
    let k = &params.constants;
    let mut net = CapacitorNetwork::new(geometry.island_count());
    for j in geometry.junctions() {
        net.add(j.from, j.to, k.cj_ff);
    }
    for p in geometry.plaquettes() {
        net.add(p.corners[0], p.corners[2], k.cdiag_ff);
        if k.diagonal == DiagonalPlacement::Both {
            net.add(p.corners[1], p.corners[3], k.cdiag_ff);
        }
    }
    for i in 1..geometry.island_count() {
        net.add(Node::Island(i), Node::Ground, k.cg_ff);
    }
    net.add(Node::Island(geometry.pad_node()), Node::Ground, k.cs_ff);
    net
}

pub fn capacitance_matrix(
    geometry: &ArrayGeometry,
    params: &CircuitParams,
) -> Result<CapacitanceMatrix> {
    capacitance_network(geometry, params).assemble()
}
