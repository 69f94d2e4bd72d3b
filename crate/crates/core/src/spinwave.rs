//! Small oscillations about a classical minimum.
//!
//! The island fluxes obey C·Φ̈ = −(Φ₀/2π)²·h·Φ/ħ², whose normal modes satisfy
//! `h·v = (ω²/η²)·C·v`. With energies in GHz and capacitances in fF this reads
//! `f² C v = PLASMA_SCALE · h v` for cyclic frequencies `f` in GHz.
//!
//! The generalized problem is symmetrized with the Cholesky factor of C so
//! the eigensolve is real and stable; mode shapes come back C-orthonormal.

use nalgebra::{Cholesky, DMatrix, Dyn};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::energy::{self, Hessian};
use crate::error::{Error, Result};
use crate::groundstate::SweepPoint;
use crate::lattice::{self, ArrayGeometry, CapacitanceMatrix, CircuitParams, GaugeField};
use crate::units::{self, INDUCTANCE_SCALE, PLASMA_SCALE};

/// Modes below this frequency (GHz) are flagged as soft.
pub const SOFT_MODE_GHZ: f64 = 0.1;

/// Relative tolerance for eigenvalues of the symmetrized problem.
const NEGATIVE_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeSpectrum {
    /// Ascending cyclic frequencies in GHz, one per island.
    pub frequencies: Vec<f64>,
    /// Column k is the mode shape of `frequencies[k]`, normalized so that
    /// `vᵀ C v = 1` (units fF^-1/2).
    #[serde(skip)]
    pub eigenvectors: Option<DMatrix<f64>>,
    /// Indices of modes below [`SOFT_MODE_GHZ`].
    pub soft_modes: Vec<usize>,
}

impl ModeSpectrum {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Widest spacing between consecutive modes, as (lower, upper) edge.
    pub fn largest_gap(&self) -> Option<(f64, f64)> {
        self.frequencies
            .windows(2)
            .map(|w| (w[0], w[1]))
            .max_by(|a, b| (a.1 - a.0).total_cmp(&(b.1 - b.0)))
    }
}

fn check_dims(h: &Hessian, c: &CapacitanceMatrix) -> Result<()> {
    if h.dim() != c.dim() {
        return Err(Error::LengthMismatch {
            expected: c.dim(),
            got: h.dim(),
        });
    }
    Ok(())
}

fn cholesky(c: &CapacitanceMatrix) -> Result<Cholesky<f64, Dyn>> {
    c.matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("capacitance matrix".into()))
}

/// Plasma modes from the symmetrized problem `F⁻¹ h F⁻ᵀ` with `C = F Fᵀ`.
///
/// Eigenvalues in `[−tol, 0)` with `tol = 1e-8 · max eigenvalue` are clamped
/// to zero with a warning; anything below `−tol` means the configuration is
/// not a minimum.
pub fn mode_spectrum(hessian: &Hessian, capacitance: &CapacitanceMatrix) -> Result<ModeSpectrum> {
    check_dims(hessian, capacitance)?;
    let n = hessian.dim();
    if n == 0 {
        return Ok(ModeSpectrum {
            frequencies: Vec::new(),
            eigenvectors: Some(DMatrix::zeros(0, 0)),
            soft_modes: Vec::new(),
        });
    }
    let chol = cholesky(capacitance)?;
    let f = chol.l();
    let x = f
        .solve_lower_triangular(hessian.matrix())
        .expect("Cholesky factor has a nonzero diagonal");
    let m = f
        .solve_lower_triangular(&x.transpose())
        .expect("Cholesky factor has a nonzero diagonal")
        * PLASMA_SCALE;
    let m = (&m + m.transpose()) * 0.5;
    let eig = m.symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let max = eig.eigenvalues.max().max(0.0);
    let tol = NEGATIVE_TOLERANCE * max;

    let mut frequencies = Vec::with_capacity(n);
    let mut shapes = DMatrix::zeros(n, n);
    for (k, &idx) in order.iter().enumerate() {
        let mut lambda = eig.eigenvalues[idx];
        if lambda < -tol {
            return Err(Error::NotAMinimum {
                eigenvalue: lambda,
                tolerance: tol,
            });
        }
        if lambda < 0.0 {
            log::warn!("clamping eigenvalue {lambda:.3e} (tolerance {tol:.3e}) to zero");
            lambda = 0.0;
        }
        frequencies.push(lambda.sqrt());
        shapes.set_column(k, &eig.eigenvectors.column(idx));
    }
    let shapes = f
        .transpose()
        .solve_upper_triangular(&shapes)
        .expect("Cholesky factor has a nonzero diagonal");
    let soft_modes = frequencies
        .iter()
        .enumerate()
        .filter(|(_, &f)| f < SOFT_MODE_GHZ)
        .map(|(k, _)| k)
        .collect();
    Ok(ModeSpectrum {
        frequencies,
        eigenvectors: Some(shapes),
        soft_modes,
    })
}

/// Reference solve of the non-symmetric `PLASMA_SCALE · C⁻¹ h`, returning
/// ascending frequencies. Slower and less stable than [`mode_spectrum`];
/// kept for cross-checking.
pub fn direct_mode_frequencies(hessian: &Hessian, capacitance: &CapacitanceMatrix) -> Result<Vec<f64>> {
    check_dims(hessian, capacitance)?;
    let a = cholesky(capacitance)?.solve(hessian.matrix()) * PLASMA_SCALE;
    let mut f: Vec<f64> = a
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re.max(0.0).sqrt())
        .collect();
    f.sort_by(f64::total_cmp);
    Ok(f)
}

/// Effective inductance matrix `(Φ₀/2π)² h⁻¹` in nH.
#[derive(Clone, Debug, PartialEq)]
pub struct InductanceMatrix {
    pub matrix: DMatrix<f64>,
    /// Ratio of largest to smallest |eigenvalue| of h.
    pub condition_number: f64,
}

/// Inverts the Hessian into an inductance matrix. A near-zero eigenvalue
/// (below 1e-12 of the largest) is reported with its eigenvector.
pub fn inductance_matrix(hessian: &Hessian) -> Result<InductanceMatrix> {
    let h = hessian.matrix();
    let eig = h.clone().symmetric_eigen();
    let abs: Vec<f64> = eig.eigenvalues.iter().map(|x| x.abs()).collect();
    let max = abs.iter().cloned().fold(0.0, f64::max);
    let (k_min, &min) = abs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::param("hessian", "empty matrix"))?;
    if min <= 1e-12 * max || max == 0.0 {
        let v: Vec<f64> = eig.eigenvectors.column(k_min).iter().cloned().collect();
        let island = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        return Err(Error::SingularHessian {
            eigenvalue: eig.eigenvalues[k_min],
            island,
            eigenvector: v,
        });
    }
    let inv = eig.eigenvectors.clone()
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|x| INDUCTANCE_SCALE / x))
        * eig.eigenvectors.transpose();
    Ok(InductanceMatrix {
        matrix: (&inv + inv.transpose()) * 0.5,
        condition_number: max / min,
    })
}

/// Josephson inductance of a single link in nH at gauge-invariant phase
/// difference `theta`: (Φ₀/2π)² / (E_J cos θ).
pub fn link_inductance_nh(ej_ghz: f64, theta: f64) -> f64 {
    INDUCTANCE_SCALE / (ej_ghz * theta.cos())
}

/// Quasiparticle shunt conductances of every junction as a graph Laplacian
/// over islands, in units of G₀. Links to ground contribute to the diagonal
/// only.
#[derive(Clone, Debug, PartialEq)]
pub struct ConductanceMatrix(DMatrix<f64>);

impl ConductanceMatrix {
    pub fn from_matrix(m: DMatrix<f64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }
}

pub fn conductance_matrix(geometry: &ArrayGeometry, params: &CircuitParams) -> ConductanceMatrix {
    let g = params.constants.g_over_g0;
    let n = geometry.island_count();
    let mut m = DMatrix::zeros(n, n);
    for j in geometry.junctions() {
        match (j.from.island(), j.to.island()) {
            (Some(a), Some(b)) if a == b => {}
            (Some(a), Some(b)) => {
                m[(a, a)] += g;
                m[(b, b)] += g;
                m[(a, b)] -= g;
                m[(b, a)] -= g;
            }
            (Some(a), None) | (None, Some(a)) => m[(a, a)] += g,
            (None, None) => {}
        }
    }
    ConductanceMatrix(m)
}

/// Loss-augmented stiffness `h̃ = h − iν·G/η²` (GHz) at cyclic probe
/// frequency `nu` in GHz. The sign makes the response passive for the
/// `e^{−iνt}` convention.
pub fn lossy_dynamical_matrix(hessian: &Hessian, g: &ConductanceMatrix, nu: f64) -> DMatrix<Complex64> {
    let h = hessian.matrix();
    DMatrix::from_fn(h.nrows(), h.ncols(), |i, j| {
        Complex64::new(h[(i, j)], -units::loss_ghz(nu, g.0[(i, j)]))
    })
}

/// Complex mode frequencies of the damped problem
/// `ν² C v = PLASMA_SCALE · h̃(ν) v`, one per island with Re ν ≥ 0, sorted by
/// real part. Damping appears as Im ν < 0.
pub fn lossy_mode_frequencies(
    hessian: &Hessian,
    capacitance: &CapacitanceMatrix,
    g: &ConductanceMatrix,
) -> Result<Vec<Complex64>> {
    check_dims(hessian, capacitance)?;
    let n = hessian.dim();
    let chol = cholesky(capacitance)?;
    let stiffness = chol.solve(hessian.matrix()) * PLASMA_SCALE;
    let damping = chol.solve(g.matrix()) * (PLASMA_SCALE / (4.0 * std::f64::consts::PI));
    // ν [x; νx] = [[0, I], [C⁻¹Kh, −iC⁻¹KG/4π]] [x; νx]
    let mut companion = DMatrix::<Complex64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        companion[(i, n + i)] = Complex64::new(1.0, 0.0);
        for j in 0..n {
            companion[(n + i, j)] = Complex64::new(stiffness[(i, j)], 0.0);
            companion[(n + i, n + j)] = Complex64::new(0.0, -damping[(i, j)]);
        }
    }
    let (_, t) = nalgebra::Schur::new(companion).unpack();
    let mut roots: Vec<Complex64> = (0..2 * n).map(|i| t[(i, i)]).collect();
    roots.sort_by(|a, b| b.re.total_cmp(&a.re));
    roots.truncate(n);
    roots.sort_by(|a, b| a.re.total_cmp(&b.re));
    Ok(roots)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FluxSpectrum {
    pub flux: f64,
    pub spectrum: ModeSpectrum,
    /// Copied from the ground-state sweep.
    pub jump: bool,
}

/// Hessian of a ground state at its own frustration.
pub fn hessian_at(point: &SweepPoint, geometry: &ArrayGeometry, params: &CircuitParams) -> Result<Hessian> {
    let gauge = GaugeField::landau(geometry, point.flux);
    energy::hessian(&point.result.config, geometry, &gauge, params)
}

/// Plasma spectra along a ground-state sweep. Unconverged points are an
/// error.
pub fn spectrum_vs_flux(
    sweep: &[SweepPoint],
    geometry: &ArrayGeometry,
    params: &CircuitParams,
) -> Result<Vec<FluxSpectrum>> {
    let c = lattice::capacitance_matrix(geometry, params)?;
    sweep
        .par_iter()
        .map(|p| {
            if !p.result.converged {
                return Err(Error::NotConverged { flux: p.flux });
            }
            let mut spectrum = mode_spectrum(&hessian_at(p, geometry, params)?, &c)?;
            spectrum.eigenvectors = None;
            Ok(FluxSpectrum {
                flux: p.flux,
                spectrum,
                jump: p.jump,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::PhaseConfiguration;
    use crate::lattice::CircuitConstants;
    use proptest::prelude::*;

    fn single(ej: f64, c_ff: f64) -> (Hessian, CapacitanceMatrix) {
        (
            Hessian::from_matrix(DMatrix::from_element(1, 1, ej)),
            CapacitanceMatrix::new(DMatrix::from_element(1, 1, c_ff)).unwrap(),
        )
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn single_junction_plasma_frequency() {
        let (h, c) = single(25.8, units::capacitance_for_charging_energy(13.0));
        let s = mode_spectrum(&h, &c).unwrap();
        let expected = (8.0f64 * 25.8 * 13.0).sqrt();
        assert!(rel(s.frequencies[0], expected) < 1e-12);
        assert!(rel(s.frequencies[0], 51.8) < 1e-3);
    }

    #[test]
    fn device_has_one_mode_per_island() {
        let g = ArrayGeometry::new(30, 3).unwrap();
        let p = CircuitParams::uniform(&g, CircuitConstants::device()).unwrap();
        let gauge = GaugeField::landau(&g, 0.0);
        let h = energy::hessian(&PhaseConfiguration::uniform(63, 0.0), &g, &gauge, &p).unwrap();
        let c = lattice::capacitance_matrix(&g, &p).unwrap();
        let s = mode_spectrum(&h, &c).unwrap();
        assert_eq!(s.len(), 63);
        assert!(s.frequencies.iter().all(|f| *f > SOFT_MODE_GHZ));
        assert!(s.soft_modes.is_empty());
        assert!(s.frequencies.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn saddle_is_rejected() {
        let (h, c) = single(-25.8, 10.0);
        assert!(matches!(mode_spectrum(&h, &c), Err(Error::NotAMinimum { .. })));
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let h = Hessian::from_matrix(DMatrix::identity(2, 2));
        let c = CapacitanceMatrix::new(DMatrix::identity(3, 3)).unwrap();
        assert!(matches!(mode_spectrum(&h, &c), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn single_junction_inductance() {
        let h = Hessian::from_matrix(DMatrix::from_element(1, 1, 25.8));
        let l = inductance_matrix(&h).unwrap();
        // (Φ₀/2π)²/E_J evaluated directly in SI.
        let phi = units::FLUX_QUANTUM / (2.0 * std::f64::consts::PI);
        let oracle = phi * phi / (25.8e9 * units::PLANCK) * 1e9;
        assert!(rel(l.matrix[(0, 0)], oracle) < 1e-12);
        assert!(rel(l.matrix[(0, 0)], 6.336) < 1e-3);
        assert!(rel(link_inductance_nh(25.8, 0.0), l.matrix[(0, 0)]) < 1e-14);
        assert!(rel(link_inductance_nh(25.8, 0.3), oracle / 0.3f64.cos()) < 1e-12);
    }

    #[test]
    fn doubling_ej_halves_inductance() {
        let g = ArrayGeometry::new(4, 3).unwrap();
        let p = CircuitParams::uniform(&g, CircuitConstants::device()).unwrap();
        let mut k2 = CircuitConstants::device();
        k2.ej_ghz *= 2.0;
        let p2 = CircuitParams::uniform(&g, k2).unwrap();
        let gauge = GaugeField::landau(&g, 0.0);
        let phi = PhaseConfiguration::uniform(g.island_count(), 0.0);
        let l1 = inductance_matrix(&energy::hessian(&phi, &g, &gauge, &p).unwrap()).unwrap();
        let l2 = inductance_matrix(&energy::hessian(&phi, &g, &gauge, &p2).unwrap()).unwrap();
        let diff = (&l1.matrix * 0.5 - &l2.matrix).amax();
        assert!(diff < 1e-12 * l1.matrix.amax());
    }

    #[test]
    fn device_inductance_is_symmetric() {
        let g = ArrayGeometry::new(30, 3).unwrap();
        let p = CircuitParams::uniform(&g, CircuitConstants::device()).unwrap();
        let gauge = GaugeField::landau(&g, 0.0);
        let h = energy::hessian(&PhaseConfiguration::uniform(63, 0.0), &g, &gauge, &p).unwrap();
        let l = inductance_matrix(&h).unwrap();
        assert!((&l.matrix - l.matrix.transpose()).amax() <= 1e-12 * l.matrix.amax());
        assert!(l.condition_number >= 1.0);
    }

    #[test]
    fn singular_hessian_names_the_soft_island() {
        let mut h = DMatrix::identity(3, 3) * 10.0;
        h[(1, 1)] = 0.0;
        match inductance_matrix(&Hessian::from_matrix(h)) {
            Err(Error::SingularHessian { island, eigenvector, .. }) => {
                assert_eq!(island, 1);
                assert_eq!(eigenvector.len(), 3);
            }
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn lossless_and_static_limits() {
        let g = ArrayGeometry::new(3, 2).unwrap();
        let p = CircuitParams::uniform(&g, CircuitConstants::device()).unwrap();
        let gauge = GaugeField::landau(&g, 0.2);
        let phi = PhaseConfiguration::new((0..g.island_count()).map(|i| 0.1 * i as f64).collect());
        let h = energy::hessian(&phi, &g, &gauge, &p).unwrap();
        let gm = conductance_matrix(&g, &p);
        for ht in [
            lossy_dynamical_matrix(&h, &ConductanceMatrix::zeros(h.dim()), 7.0),
            lossy_dynamical_matrix(&h, &gm, 0.0),
        ] {
            assert!(ht.iter().zip(h.matrix().iter()).all(|(a, b)| a.re == *b && a.im == 0.0));
        }
    }

    #[test]
    fn single_junction_loss_term() {
        let h = Hessian::from_matrix(DMatrix::from_element(1, 1, 25.8));
        let gm = ConductanceMatrix::from_matrix(DMatrix::from_element(1, 1, 3.27e-3));
        let ht = lossy_dynamical_matrix(&h, &gm, 10.0);
        // ν·G/η² in SI, divided by h to express as GHz.
        let nu = 2.0 * std::f64::consts::PI * 10e9;
        let g_si = 3.27e-3 * units::CONDUCTANCE_QUANTUM;
        let oracle = nu * g_si / (units::ETA * units::ETA) / units::PLANCK / 1e9;
        assert!(rel(-ht[(0, 0)].im, oracle) < 1e-12);
        assert_eq!(ht[(0, 0)].re, 25.8);
    }

    #[test]
    fn conductance_matrix_is_a_grounded_laplacian() {
        let g = ArrayGeometry::new(5, 3).unwrap();
        let p = CircuitParams::uniform(&g, CircuitConstants::device()).unwrap();
        let m = conductance_matrix(&g, &p).0;
        assert_eq!(m, m.transpose());
        let gg = p.constants.g_over_g0;
        for i in 0..g.island_count() {
            let ground_links = g
                .incident(i)
                .iter()
                .filter(|&&k| {
                    let j = &g.junctions()[k];
                    j.from.island().is_none() || j.to.island().is_none()
                })
                .count();
            let row: f64 = m.row(i).sum();
            assert!((row - gg * ground_links as f64).abs() < 1e-15);
        }
        assert!(m.symmetric_eigen().eigenvalues.min() > 0.0);
    }

    #[test]
    fn lossy_modes_approach_lossless_modes() {
        let g = ArrayGeometry::new(3, 2).unwrap();
        let p = CircuitParams::uniform(&g, CircuitConstants::device()).unwrap();
        let gauge = GaugeField::landau(&g, 0.0);
        let h = energy::hessian(&PhaseConfiguration::uniform(g.island_count(), 0.0), &g, &gauge, &p).unwrap();
        let c = lattice::capacitance_matrix(&g, &p).unwrap();
        let lossless = mode_spectrum(&h, &c).unwrap();
        let zero = lossy_mode_frequencies(&h, &c, &ConductanceMatrix::zeros(h.dim())).unwrap();
        for (a, b) in zero.iter().zip(&lossless.frequencies) {
            assert!(rel(a.re, *b) < 1e-9 && a.im.abs() < 1e-9 * b);
        }
        let lossy = lossy_mode_frequencies(&h, &c, &conductance_matrix(&g, &p)).unwrap();
        for (a, b) in lossy.iter().zip(&lossless.frequencies) {
            assert!(a.im < 0.0);
            assert!(rel(a.re, *b) < 1e-3);
        }
    }

    #[test]
    fn mode_shapes_are_capacitance_orthonormal() {
        let g = ArrayGeometry::new(4, 3).unwrap();
        let p = CircuitParams::uniform(&g, CircuitConstants::device()).unwrap();
        let gauge = GaugeField::landau(&g, 0.0);
        let h = energy::hessian(&PhaseConfiguration::uniform(g.island_count(), 0.0), &g, &gauge, &p).unwrap();
        let c = lattice::capacitance_matrix(&g, &p).unwrap();
        let s = mode_spectrum(&h, &c).unwrap();
        let v = s.eigenvectors.unwrap();
        let gram = v.transpose() * c.matrix() * &v;
        assert!((gram - DMatrix::identity(v.ncols(), v.ncols())).amax() < 1e-10);
    }

    fn random_problem(n: usize, seed: u64) -> (Hessian, CapacitanceMatrix) {
        use rand::Rng;
        let mut rng = crate::rng::stream(seed, &[]);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let h = &a * a.transpose() * 20.0 + DMatrix::identity(n, n) * 5.0;
        let c = &b * b.transpose() + DMatrix::identity(n, n) * 2.0;
        (Hessian::from_matrix(h), CapacitanceMatrix::new(c).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn symmetrized_matches_direct(n in 1usize..=12, seed in any::<u64>()) {
            let (h, c) = random_problem(n, seed);
            let sym = mode_spectrum(&h, &c).unwrap();
            let direct = direct_mode_frequencies(&h, &c).unwrap();
            for (a, b) in sym.frequencies.iter().zip(&direct) {
                prop_assert!(rel(*a, *b) < 1e-9);
            }
        }
    }
}
