//! Single-sided cavity loaded by the array.
//!
//! The array enters the cavity equation of motion as a complex frequency
//! shift χ̃(ν). With `a ∝ e^{−iνt}` the reflected amplitude is
//!
//! ```text
//! S11 = κ_ext / (κ_tot/2 − i(ν − ω_c) + iχ̃) − 1
//! ```
//!
//! so the resonance sits at `ω_c + Re χ̃` and a passive array (Im χ̃ ≤ 0) adds
//! `−Im χ̃` to the half-linewidth. At χ̃ = 0 this is the usual
//! `((κ_ext − κ_int)/2 + iΔ) / ((κ_ext + κ_int)/2 − iΔ)`.
//!
//! All rates are cyclic (κ/2π); frequencies in GHz, linewidths and shifts in
//! MHz.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::Hessian;
use crate::error::{Error, Result};
use crate::groundstate::SweepPoint;
use crate::lattice::{self, ArrayGeometry, CapacitanceMatrix, CircuitParams};
use crate::spinwave::{self, ConductanceMatrix};
use crate::units::{self, PLASMA_SCALE, SUSCEPTIBILITY_SCALE};

const MHZ_PER_GHZ: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    pub omega_c_ghz: f64,
    pub kappa_ext_mhz: f64,
    pub kappa_int_mhz: f64,
    /// Dipole coupling to the pad; the dipole length is absorbed here.
    pub g_mhz: f64,
}

impl CavityParams {
    pub fn device() -> Self {
        Self {
            omega_c_ghz: 10.127,
            kappa_ext_mhz: 1.5,
            kappa_int_mhz: 1.0,
            g_mhz: 100.0,
        }
    }

    pub fn kappa_tot_mhz(&self) -> f64 {
        self.kappa_ext_mhz + self.kappa_int_mhz
    }

    pub fn validate(&self) -> Result<()> {
        let check = |key: &str, v: f64, strict: bool| {
            if !v.is_finite() || v < 0.0 || (strict && v == 0.0) {
                Err(Error::param(key, format!("must be {}, got {v}", if strict { "> 0" } else { ">= 0" })))
            } else {
                Ok(())
            }
        };
        check("cavity.omega_c_GHz", self.omega_c_ghz, true)?;
        check("cavity.kappa_ext_MHz", self.kappa_ext_mhz, true)?;
        check("cavity.kappa_int_MHz", self.kappa_int_mhz, false)?;
        check("cavity.g_MHz", self.g_mhz, false)
    }
}

/// Linear charge response of the pad, prepared once per configuration.
#[derive(Clone, Debug)]
pub struct ArrayResponse {
    stiffness: DMatrix<f64>,
    capacitance: DMatrix<f64>,
    conductance: DMatrix<f64>,
    lossless: bool,
}

impl ArrayResponse {
    pub fn new(hessian: &Hessian, capacitance: &CapacitanceMatrix, conductance: &ConductanceMatrix) -> Result<Self> {
        let n = capacitance.dim();
        for got in [hessian.dim(), conductance.matrix().nrows()] {
            if got != n {
                return Err(Error::LengthMismatch { expected: n, got });
            }
        }
        if n == 0 {
            return Err(Error::param("lattice", "the array has no pad island"));
        }
        Ok(Self {
            stiffness: hessian.matrix() * PLASMA_SCALE,
            capacitance: capacitance.matrix().clone(),
            conductance: conductance.matrix() * (PLASMA_SCALE / (4.0 * std::f64::consts::PI)),
            lossless: conductance.matrix().iter().all(|&g| g == 0.0),
        })
    }

    /// Pad element of the charge response in fF:
    /// `X(ν) = ν² c₀ᵀ M⁻¹ c₀ − C₀₀` with `M = ν²C − η²h̃(ν)`, `c₀ = C e₀`.
    /// Equivalent to `[C·ω²(ν² − ω²)⁻¹]₀₀` with ω² = η²C⁻¹h̃, summed over
    /// modes this is `Σ_k (C v_k)₀² ω_k² / (ν² − ω_k²)`.
    pub fn charge_response(&self, nu_ghz: f64) -> Result<Complex64> {
        let n = self.capacitance.nrows();
        let nu2 = nu_ghz * nu_ghz;
        let m = DMatrix::from_fn(n, n, |i, j| {
            Complex64::new(
                nu2 * self.capacitance[(i, j)] - self.stiffness[(i, j)],
                nu_ghz * self.conductance[(i, j)],
            )
        });
        let lu = m.lu();
        let diag = lu.u().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), z| (lo.min(z.norm()), hi.max(z.norm())));
        if self.lossless && (hi == 0.0 || lo / hi < 1e-13) {
            return Err(Error::Pole { nu_ghz });
        }
        let c0 = DVector::from_fn(n, |i, _| Complex64::new(self.capacitance[(i, 0)], 0.0));
        let y = lu.solve(&c0).ok_or(Error::Pole { nu_ghz })?;
        let quad: Complex64 = c0.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        let x = quad * nu2 - self.capacitance[(0, 0)];
        if !(x.re.is_finite() && x.im.is_finite()) {
            return Err(Error::Pole { nu_ghz });
        }
        Ok(x)
    }

    /// χ̃₀₀(ν) in MHz.
    pub fn chi_mhz(&self, cavity: &CavityParams, nu_ghz: f64) -> Result<Complex64> {
        let g_ghz = cavity.g_mhz / MHZ_PER_GHZ;
        Ok(self.charge_response(nu_ghz)? * (g_ghz * g_ghz * SUSCEPTIBILITY_SCALE * MHZ_PER_GHZ))
    }
}

/// χ̃₀₀(ν) in MHz for a single probe frequency.
pub fn susceptibility(
    hessian: &Hessian,
    capacitance: &CapacitanceMatrix,
    conductance: &ConductanceMatrix,
    cavity: &CavityParams,
    nu_ghz: f64,
) -> Result<Complex64> {
    ArrayResponse::new(hessian, capacitance, conductance)?.chi_mhz(cavity, nu_ghz)
}

/// Reflection coefficient at probe frequency `nu_ghz` with array shift
/// `chi_mhz`.
pub fn s11(chi_mhz: Complex64, cavity: &CavityParams, nu_ghz: f64) -> Complex64 {
    let detuning = (nu_ghz - cavity.omega_c_ghz) * MHZ_PER_GHZ;
    let denom = Complex64::new(cavity.kappa_tot_mhz() / 2.0, -detuning) + Complex64::i() * chi_mhz;
    cavity.kappa_ext_mhz / denom - 1.0
}

/// Bare-cavity reflection written in the textbook ratio form.
pub fn bare_s11(cavity: &CavityParams, nu_ghz: f64) -> Complex64 {
    let detuning = (nu_ghz - cavity.omega_c_ghz) * MHZ_PER_GHZ;
    Complex64::new((cavity.kappa_ext_mhz - cavity.kappa_int_mhz) / 2.0, detuning)
        / Complex64::new(cavity.kappa_tot_mhz() / 2.0, -detuning)
}

/// Intracavity photon number `4P / (ħ ω_c κ_tot)` on resonance.
pub fn photon_number(power_dbm: f64, cavity: &CavityParams) -> f64 {
    let p = units::dbm_to_watts(power_dbm);
    let omega = units::angular_rad_per_ns(cavity.omega_c_ghz) * 1e9;
    let kappa = units::angular_rad_per_ns(cavity.kappa_tot_mhz()) * 1e6;
    4.0 * p / (units::HBAR * omega * kappa)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReflectionTrace {
    pub frequencies_ghz: Vec<f64>,
    pub s11: Vec<Complex64>,
}

impl ReflectionTrace {
    pub fn len(&self) -> usize {
        self.frequencies_ghz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies_ghz.is_empty()
    }

    /// Evaluates `s11` on a grid with a frequency-dependent shift.
    pub fn compute(
        cavity: &CavityParams,
        frequencies_ghz: &[f64],
        mut chi_mhz: impl FnMut(f64) -> Result<Complex64>,
    ) -> Result<Self> {
        let s11 = frequencies_ghz
            .iter()
            .map(|&nu| Ok(s11(chi_mhz(nu)?, cavity, nu)))
            .collect::<Result<_>>()?;
        Ok(Self {
            frequencies_ghz: frequencies_ghz.to_vec(),
            s11,
        })
    }

    /// Frequency of minimum |S11|, refined by a parabola through the three
    /// samples around the discrete minimum.
    pub fn dip_frequency(&self) -> Option<f64> {
        let mags: Vec<f64> = self.s11.iter().map(|z| z.norm_sqr()).collect();
        let k = (0..mags.len()).min_by(|&a, &b| mags[a].total_cmp(&mags[b]))?;
        if k == 0 || k + 1 == mags.len() {
            return Some(self.frequencies_ghz[k]);
        }
        let (x0, x1, x2) = (self.frequencies_ghz[k - 1], self.frequencies_ghz[k], self.frequencies_ghz[k + 1]);
        let (y0, y1, y2) = (mags[k - 1], mags[k], mags[k + 1]);
        let denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
        let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
        let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
        if a > 0.0 {
            Some((-b / (2.0 * a)).clamp(x0, x2))
        } else {
            Some(x1)
        }
    }

    /// CSV with columns `freq_GHz,S11_re,S11_im,S11_abs`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "freq_GHz,S11_re,S11_im,S11_abs")?;
        for (f, z) in self.frequencies_ghz.iter().zip(&self.s11) {
            writeln!(out, "{f},{},{},{}", z.re, z.im, z.norm())?;
        }
        Ok(())
    }

    /// Reads `freq_GHz,S11_re,S11_im[,...]` rows; a header line is skipped.
    pub fn read_csv(text: &str) -> Result<Self> {
        let mut trace = Self::default();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: Option<Vec<f64>> = fields.iter().take(3).map(|s| s.parse().ok()).collect();
            match parsed {
                Some(v) if v.len() == 3 => {
                    trace.frequencies_ghz.push(v[0]);
                    trace.s11.push(Complex64::new(v[1], v[2]));
                }
                _ if line_no == 0 => continue,
                _ => {
                    return Err(Error::Config {
                        key: "fit.trace".into(),
                        reason: format!("line {}: expected freq_GHz,S11_re,S11_im", line_no + 1),
                    })
                }
            }
        }
        Ok(trace)
    }
}

/// |S11| (and the complex value) over a flux × frequency grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ReflectionMap {
    pub flux: Vec<f64>,
    pub frequencies_ghz: Vec<f64>,
    /// One trace per flux point.
    pub traces: Vec<ReflectionTrace>,
}

impl ReflectionMap {
    /// `|S11|` with rows = flux, columns = frequency.
    pub fn magnitude(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.flux.len(), self.frequencies_ghz.len(), |i, j| self.traces[i].s11[j].norm())
    }

    /// CSV with columns `flux,freq_GHz,S11_re,S11_im,S11_abs`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "flux,freq_GHz,S11_re,S11_im,S11_abs")?;
        for (f, t) in self.flux.iter().zip(&self.traces) {
            for (nu, z) in t.frequencies_ghz.iter().zip(&t.s11) {
                writeln!(out, "{f},{nu},{},{},{}", z.re, z.im, z.norm())?;
            }
        }
        Ok(())
    }
}

/// Response of one ground state.
pub fn array_response(point: &SweepPoint, geometry: &ArrayGeometry, params: &CircuitParams) -> Result<ArrayResponse> {
    let h = spinwave::hessian_at(point, geometry, params)?;
    let c = lattice::capacitance_matrix(geometry, params)?;
    ArrayResponse::new(&h, &c, &spinwave::conductance_matrix(geometry, params))
}

/// Reflection spectra along a ground-state sweep, parallel over flux.
pub fn reflection_map(
    sweep: &[SweepPoint],
    geometry: &ArrayGeometry,
    params: &CircuitParams,
    cavity: &CavityParams,
    frequencies_ghz: &[f64],
) -> Result<ReflectionMap> {
    cavity.validate()?;
    let traces = sweep
        .par_iter()
        .map(|p| {
            if !p.result.converged {
                return Err(Error::NotConverged { flux: p.flux });
            }
            let response = array_response(p, geometry, params)?;
            ReflectionTrace::compute(cavity, frequencies_ghz, |nu| response.chi_mhz(cavity, nu))
        })
        .collect::<Result<_>>()?;
    Ok(ReflectionMap {
        flux: sweep.iter().map(|p| p.flux).collect(),
        frequencies_ghz: frequencies_ghz.to_vec(),
        traces,
    })
}

/// Bare-cavity parameters recovered from a reflection trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ResonanceFit {
    pub omega_c_ghz: f64,
    pub kappa_ext_mhz: f64,
    pub kappa_int_mhz: f64,
    /// Euclidean norm of the stacked real/imaginary residuals.
    pub residual: f64,
    pub iterations: usize,
}

impl ResonanceFit {
    pub fn cavity(&self, g_mhz: f64) -> CavityParams {
        CavityParams {
            omega_c_ghz: self.omega_c_ghz,
            kappa_ext_mhz: self.kappa_ext_mhz,
            kappa_int_mhz: self.kappa_int_mhz,
            g_mhz,
        }
    }
}

/// Initial guesses from the Lorentzian `|S11 + 1| = κ_ext/|D|`: peak
/// position, half-power full width (κ_tot) and peak height (2κ_ext/κ_tot).
fn initial_guess(trace: &ReflectionTrace) -> Result<(f64, f64, f64)> {
    let lor: Vec<f64> = trace.s11.iter().map(|z| (z + 1.0).norm_sqr()).collect();
    let k = (0..lor.len())
        .max_by(|&a, &b| lor[a].total_cmp(&lor[b]))
        .ok_or_else(|| Error::FitFailed("empty trace".into()))?;
    if k == 0 || k + 1 == lor.len() {
        return Err(Error::FitFailed("resonance lies at the edge of the scanned window".into()));
    }
    let half = lor[k] / 2.0;
    let crossing = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = k;
        for i in range {
            if lor[i] <= half {
                let (f0, f1) = (trace.frequencies_ghz[prev], trace.frequencies_ghz[i]);
                let t = (lor[prev] - half) / (lor[prev] - lor[i]);
                return Some(f0 + t * (f1 - f0));
            }
            prev = i;
        }
        None
    };
    let lo = crossing(&mut (0..k).rev());
    let hi = crossing(&mut (k + 1..lor.len()));
    let (lo, hi) = match (lo, hi) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => return Err(Error::FitFailed("resonance not contained in the scanned window".into())),
    };
    let kappa_tot = (hi - lo) * MHZ_PER_GHZ;
    let span = (trace.frequencies_ghz[lor.len() - 1] - trace.frequencies_ghz[0]).abs() * MHZ_PER_GHZ;
    if span < 5.0 * kappa_tot {
        return Err(Error::FitFailed(format!(
            "trace spans {span:.3} MHz, fewer than 5 linewidths of {kappa_tot:.3} MHz"
        )));
    }
    let kappa_ext = lor[k].sqrt() * kappa_tot / 2.0;
    let kappa_int = (kappa_tot - kappa_ext).max(0.0);
    Ok((trace.frequencies_ghz[k], kappa_ext, kappa_int))
}

/// Least-squares fit of the bare-cavity model to a measured trace.
///
/// Levenberg–Marquardt on the stacked real and imaginary residuals with the
/// analytic Jacobian. Parameters are the resonance offset (MHz from the
/// initial guess), κ_ext > 0 and κ_int ≥ 0 (projected).
pub fn fit_resonance(trace: &ReflectionTrace) -> Result<ResonanceFit> {
    const MAX_ITER: usize = 500;
    let m = trace.len();
    if m != trace.s11.len() || m < 4 {
        return Err(Error::FitFailed("need at least four samples".into()));
    }
    if trace.frequencies_ghz.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::FitFailed("frequencies must be strictly increasing".into()));
    }
    let (centre, ke0, ki0) = initial_guess(trace)?;
    let detunings: Vec<f64> = trace.frequencies_ghz.iter().map(|f| (f - centre) * MHZ_PER_GHZ).collect();
    let kappa_floor = 1e-12 * ke0;

    let residuals = |p: &[f64; 3]| -> (DVector<f64>, DMatrix<f64>) {
        let (delta0, ke, ki) = (p[0], p[1], p[2]);
        let mut r = DVector::zeros(2 * m);
        let mut j = DMatrix::zeros(2 * m, 3);
        for (k, (&x, data)) in detunings.iter().zip(&trace.s11).enumerate() {
            let d = Complex64::new((ke + ki) / 2.0, -(x - delta0));
            let d2 = d * d;
            let model = ke / d - 1.0;
            let dd0 = -Complex64::i() * ke / d2;
            let dke = 1.0 / d - ke / (2.0 * d2);
            let dki = -ke / (2.0 * d2);
            let e = model - data;
            r[2 * k] = e.re;
            r[2 * k + 1] = e.im;
            for (col, z) in [dd0, dke, dki].into_iter().enumerate() {
                j[(2 * k, col)] = z.re;
                j[(2 * k + 1, col)] = z.im;
            }
        }
        (r, j)
    };

    let project = |p: [f64; 3]| [p[0], p[1].max(kappa_floor), p[2].max(0.0)];
    let mut p = project([0.0, ke0, ki0]);
    let (mut r, mut jac) = residuals(&p);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        if g.amax() <= 1e-15 * (1.0 + cost) {
            converged = true;
            break;
        }
        let mut improved = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for i in 0..3 {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-30);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let trial = project([p[0] + step[0], p[1] + step[1], p[2] + step[2]]);
            let (rt, jt) = residuals(&trial);
            let ct = rt.norm_squared();
            if ct <= cost {
                let change = (0..3)
                    .map(|i| (trial[i] - p[i]).abs() / (p[i].abs() + ke0))
                    .fold(0.0, f64::max);
                p = trial;
                r = rt;
                jac = jt;
                let decrease = cost - ct;
                cost = ct;
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                if change < 1e-15 || decrease <= 1e-30 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No descent direction left: stationary to working precision.
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::FitFailed(format!("no convergence after {MAX_ITER} iterations")));
    }
    let omega_c_ghz = centre + p[0] / MHZ_PER_GHZ;
    if omega_c_ghz < trace.frequencies_ghz[0] || omega_c_ghz > trace.frequencies_ghz[m - 1] {
        return Err(Error::FitFailed("fitted resonance outside the scanned window".into()));
    }
    Ok(ResonanceFit {
        omega_c_ghz,
        kappa_ext_mhz: p[1],
        kappa_int_mhz: p[2],
        residual: cost.sqrt(),
        iterations,
    })
}

/// Uniform grid of `n` points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{self, PhaseConfiguration};
    use crate::lattice::{CircuitConstants, GaugeField};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn critical_coupling_nulls_reflection() {
        let cav = CavityParams { kappa_int_mhz: 1.5, ..CavityParams::device() };
        assert!(s11(Complex64::new(0.0, 0.0), &cav, cav.omega_c_ghz).norm() < 1e-12);
    }

    #[test]
    fn lossless_cavity_reflects_everything() {
        let cav = CavityParams { kappa_int_mhz: 0.0, ..CavityParams::device() };
        for nu in linspace(10.1, 10.15, 101) {
            assert!((s11(Complex64::new(0.0, 0.0), &cav, nu).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn photon_number_at_device_power() {
        let n = photon_number(-132.0, &CavityParams::device());
        assert!((n - 2.4).abs() < 0.05, "n = {n}");
        // Direct SI evaluation.
        let p = 1e-3 * 10f64.powf(-13.2);
        let oracle = 4.0 * p / (units::HBAR * 2.0 * std::f64::consts::PI * 10.127e9 * 2.0 * std::f64::consts::PI * 2.5e6);
        assert!(rel(n, oracle) < 1e-12);
        let three_db = 10.0 * 2f64.log10();
        assert!(rel(photon_number(-132.0 + three_db, &CavityParams::device()), 2.0 * n) < 1e-12);
        assert_eq!(photon_number(f64::NEG_INFINITY, &CavityParams::device()), 0.0);
    }

    #[test]
    fn dip_moves_by_real_shift() {
        let cav = CavityParams::device();
        let grid = linspace(cav.omega_c_ghz - 0.025, cav.omega_c_ghz + 0.025, 20001);
        for shift in [-3.0, 0.0, 4.5] {
            let chi = Complex64::new(shift, 0.0);
            let trace = ReflectionTrace::compute(&cav, &grid, |_| Ok(chi)).unwrap();
            let dip = trace.dip_frequency().unwrap();
            assert!((dip - (cav.omega_c_ghz + shift / 1e3)).abs() < 1e-7, "{shift}: {dip}");
        }
    }

    #[test]
    fn dissipative_shift_acts_as_internal_loss() {
        let cav = CavityParams::device();
        let lossier = CavityParams { kappa_int_mhz: cav.kappa_int_mhz + 1.0, ..cav };
        for nu in linspace(10.12, 10.135, 31) {
            let a = s11(Complex64::new(0.0, -0.5), &cav, nu);
            let b = bare_s11(&lossier, nu);
            assert!((a - b).norm() < 1e-12);
        }
    }

    fn toy(l: usize, w: usize, f: f64) -> (Hessian, CapacitanceMatrix, ArrayGeometry, CircuitParams) {
        let g = ArrayGeometry::new(l, w).unwrap();
        let p = CircuitParams::uniform(&g, CircuitConstants::device()).unwrap();
        let gauge = GaugeField::landau(&g, f);
        let h = energy::hessian(&PhaseConfiguration::uniform(g.island_count(), 0.0), &g, &gauge, &p).unwrap();
        let c = lattice::capacitance_matrix(&g, &p).unwrap();
        (h, c, g, p)
    }

    #[test]
    fn lossless_response_is_real_with_constant_sign_below_modes() {
        let (h, c, _, _) = toy(3, 2, 0.0);
        let lowest = spinwave::mode_spectrum(&h, &c).unwrap().frequencies[0];
        let r = ArrayResponse::new(&h, &c, &ConductanceMatrix::zeros(h.dim())).unwrap();
        let cav = CavityParams::device();
        let values: Vec<Complex64> = linspace(0.1, 0.9 * lowest, 50)
            .into_iter()
            .map(|nu| r.chi_mhz(&cav, nu).unwrap())
            .collect();
        assert!(values.iter().all(|z| z.im == 0.0 && z.re < 0.0));
    }

    #[test]
    fn passive_loss_gives_dissipative_sign() {
        let (h, c, g, p) = toy(3, 2, 0.0);
        let r = ArrayResponse::new(&h, &c, &spinwave::conductance_matrix(&g, &p)).unwrap();
        for nu in [1.0, 10.127, 30.0, 80.0] {
            assert!(r.chi_mhz(&CavityParams::device(), nu).unwrap().im < 0.0);
        }
    }

    #[test]
    fn response_matches_modal_sum() {
        let (h, c, _, _) = toy(2, 2, 0.0);
        let s = spinwave::mode_spectrum(&h, &c).unwrap();
        let v = s.eigenvectors.clone().unwrap();
        let cv = c.matrix() * &v;
        let r = ArrayResponse::new(&h, &c, &ConductanceMatrix::zeros(h.dim())).unwrap();
        for nu in [3.0, 17.0, 41.0] {
            let modal: f64 = (0..s.len())
                .map(|k| {
                    let w2 = s.frequencies[k].powi(2);
                    cv[(0, k)].powi(2) * w2 / (nu * nu - w2)
                })
                .sum();
            let direct = r.charge_response(nu).unwrap();
            assert!(rel(direct.re, modal) < 1e-9, "{nu}: {direct} vs {modal}");
        }
    }

    #[test]
    fn poles_sit_on_plasma_modes() {
        let (h, c, _, _) = toy(3, 2, 0.0);
        let s = spinwave::mode_spectrum(&h, &c).unwrap();
        let cv = c.matrix() * s.eigenvectors.clone().unwrap();
        let r = ArrayResponse::new(&h, &c, &ConductanceMatrix::zeros(h.dim())).unwrap();
        for (k, &w) in s.frequencies.iter().enumerate() {
            if cv[(0, k)].powi(2) < 1e-3 * c.matrix()[(0, 0)] {
                continue; // too weakly coupled to dominate at this detuning
            }
            // Residues are positive: ω²/(ν² − ω²) runs to −∞ just below the
            // pole and +∞ just above it.
            let scale = r.charge_response(0.5 * w).unwrap().re.abs() + c.matrix()[(0, 0)];
            let below = r.charge_response(w * (1.0 - 1e-7)).unwrap().re;
            let above = r.charge_response(w * (1.0 + 1e-7)).unwrap().re;
            assert!(below < -1e3 * scale && above > 1e3 * scale, "{k}: {below} {above}");
        }
        match r.charge_response(s.frequencies[s.len() - 1]) {
            Err(Error::Pole { .. }) => {}
            Ok(x) => assert!(x.norm() > 1e9),
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn dispersive_shift_scales_with_coupling_squared() {
        let (h, c, g, p) = toy(2, 2, 0.0);
        let r = ArrayResponse::new(&h, &c, &spinwave::conductance_matrix(&g, &p)).unwrap();
        let grid = linspace(10.127 - 0.02, 10.127 + 0.02, 4001);
        let shift = |g_mhz: f64| {
            let cav = CavityParams { g_mhz, ..CavityParams::device() };
            let t = ReflectionTrace::compute(&cav, &grid, |nu| r.chi_mhz(&cav, nu)).unwrap();
            (t.dip_frequency().unwrap() - cav.omega_c_ghz) * 1e3
        };
        let (a, b) = (shift(10.0), shift(20.0));
        let predicted = r.chi_mhz(&CavityParams { g_mhz: 10.0, ..CavityParams::device() }, 10.127).unwrap().re;
        assert!(a.signum() == predicted.signum() && b.signum() == predicted.signum());
        assert!(rel(a, predicted) < 0.02, "{a} vs {predicted}");
        assert!(rel(b / a, 4.0) < 0.02, "{a} {b}");
    }

    #[test]
    fn isolated_mode_gives_textbook_dispersive_shift() {
        // One island, one junction to ground: a single oscillator.
        let ej = 20.0;
        let cf = 30.0;
        let h = Hessian::from_matrix(DMatrix::from_element(1, 1, ej));
        let c = CapacitanceMatrix::new(DMatrix::from_element(1, 1, cf)).unwrap();
        let r = ArrayResponse::new(&h, &c, &ConductanceMatrix::zeros(1)).unwrap();
        let cav = CavityParams { g_mhz: 50.0, ..CavityParams::device() };
        let w = (PLASMA_SCALE * ej / cf).sqrt();
        let nu = 10.0;
        let chi = r.chi_mhz(&cav, nu).unwrap().re;
        // Closed form: g²·S·C·ω²/(ν² − ω²), S = h/8e².
        let g = cav.g_mhz / 1e3;
        let closed = g * g * SUSCEPTIBILITY_SCALE * cf * w * w / (nu * nu - w * w) * 1e3;
        assert!(rel(chi, closed) < 1e-12);
        // Near resonance this is g_k²/(ν − ω) with g_k² = g²·S·C·ω/2.
        let nu = w * (1.0 - 1e-6);
        let chi = r.chi_mhz(&cav, nu).unwrap().re;
        let gk2 = g * g * SUSCEPTIBILITY_SCALE * cf * w / 2.0;
        assert!(rel(chi, gk2 / (nu - w) * 1e3) < 1e-5);
    }

    fn synthetic(cav: &CavityParams, n: usize, noise: f64, seed: u64) -> ReflectionTrace {
        let grid = linspace(cav.omega_c_ghz - 0.025, cav.omega_c_ghz + 0.025, n);
        let mut t = ReflectionTrace::compute(cav, &grid, |_| Ok(Complex64::new(0.0, 0.0))).unwrap();
        if noise > 0.0 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let d = Normal::new(0.0, noise).unwrap();
            for z in &mut t.s11 {
                *z += Complex64::new(d.sample(&mut rng), d.sample(&mut rng));
            }
        }
        t
    }

    #[test]
    fn fit_round_trips_noiseless_trace() {
        let cav = CavityParams::device();
        let fit = fit_resonance(&synthetic(&cav, 2001, 0.0, 0)).unwrap();
        assert!(rel(fit.omega_c_ghz, cav.omega_c_ghz) < 1e-9);
        assert!(rel(fit.kappa_ext_mhz, cav.kappa_ext_mhz) < 1e-9);
        assert!(rel(fit.kappa_int_mhz, cav.kappa_int_mhz) < 1e-9);
        assert!(fit.residual < 1e-9);
    }

    #[test]
    fn fit_tolerates_quadrature_noise() {
        let cav = CavityParams::device();
        for seed in 0..100 {
            let fit = fit_resonance(&synthetic(&cav, 2001, 0.01, seed)).unwrap();
            assert!(rel(fit.omega_c_ghz, cav.omega_c_ghz) < 0.02);
            assert!(rel(fit.kappa_ext_mhz, cav.kappa_ext_mhz) < 0.02, "seed {seed}: {fit:?}");
            assert!(rel(fit.kappa_int_mhz, cav.kappa_int_mhz) < 0.02, "seed {seed}: {fit:?}");
        }
    }

    #[test]
    fn fit_keeps_internal_loss_nonnegative() {
        let cav = CavityParams { kappa_int_mhz: 0.0, ..CavityParams::device() };
        let fit = fit_resonance(&synthetic(&cav, 2001, 0.0, 0)).unwrap();
        assert!(fit.kappa_int_mhz >= 0.0 && fit.kappa_int_mhz < 1e-9);
        assert!(rel(fit.kappa_ext_mhz, cav.kappa_ext_mhz) < 1e-9);
        for seed in 0..20 {
            let fit = fit_resonance(&synthetic(&cav, 2001, 0.01, seed)).unwrap();
            assert!(fit.kappa_int_mhz >= 0.0);
        }
    }

    #[test]
    fn fit_rejects_truncated_windows() {
        let cav = CavityParams::device();
        let edge = linspace(cav.omega_c_ghz, cav.omega_c_ghz + 0.02, 501);
        let t = ReflectionTrace::compute(&cav, &edge, |_| Ok(Complex64::new(0.0, 0.0))).unwrap();
        assert!(matches!(fit_resonance(&t), Err(Error::FitFailed(_))));
        let narrow = linspace(cav.omega_c_ghz - 0.004, cav.omega_c_ghz + 0.004, 501);
        let t = ReflectionTrace::compute(&cav, &narrow, |_| Ok(Complex64::new(0.0, 0.0))).unwrap();
        assert!(fit_resonance(&t).unwrap_err().to_string().contains("linewidths"));
    }

    #[test]
    fn trace_csv_round_trip() {
        let t = synthetic(&CavityParams::device(), 11, 0.0, 0);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = ReflectionTrace::read_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, t);
        assert!(ReflectionTrace::read_csv("freq_GHz,re,im\n1,2\n").is_err());
    }

    proptest! {
        #[test]
        fn bare_form_matches_ratio_form(
            wc in 5.0f64..15.0, ke in 0.01f64..10.0, ki in 0.0f64..10.0, d in -0.05f64..0.05,
        ) {
            let cav = CavityParams { omega_c_ghz: wc, kappa_ext_mhz: ke, kappa_int_mhz: ki, g_mhz: 0.0 };
            let a = s11(Complex64::new(0.0, 0.0), &cav, wc + d);
            let b = bare_s11(&cav, wc + d);
            prop_assert!((a - b).norm() < 1e-12);
        }

        #[test]
        fn passive_reflection_is_bounded(
            ke in 0.01f64..10.0, ki in 0.0f64..10.0, d in -0.05f64..0.05,
            re in -50.0f64..50.0, im in -20.0f64..0.0,
        ) {
            let cav = CavityParams { omega_c_ghz: 10.0, kappa_ext_mhz: ke, kappa_int_mhz: ki, g_mhz: 0.0 };
            prop_assert!(s11(Complex64::new(re, im), &cav, 10.0 + d).norm() <= 1.0 + 1e-12);
        }
    }
}
