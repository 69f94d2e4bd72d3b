//! Physical constants and the unit conventions used throughout the crate.
//!
//! Energies are stored as frequencies (E/h in GHz), capacitances in fF,
//! inductances in nH, conductances in units of the conductance quantum
//! G₀ = 2e²/h, and frequencies as cyclic GHz (ω/2π). Every conversion between
//! these and SI lives here.

use std::f64::consts::PI;

/// Elementary charge in C (exact, SI 2019).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Planck constant in J·s (exact, SI 2019).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant in J·s.
pub const HBAR: f64 = PLANCK / (2.0 * PI);
/// Superconducting flux quantum Φ₀ = h/2e in Wb.
pub const FLUX_QUANTUM: f64 = PLANCK / (2.0 * ELEMENTARY_CHARGE);
/// Conductance quantum G₀ = 2e²/h in S.
pub const CONDUCTANCE_QUANTUM: f64 = 2.0 * ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / PLANCK;

/// η = 2π/Φ₀ in 1/Wb.
pub const ETA: f64 = 2.0 * PI / FLUX_QUANTUM;

const GHZ: f64 = 1e9;
const FEMTO: f64 = 1e-15;
const NANO: f64 = 1e-9;

/// Converts a stiffness/capacitance ratio into a squared cyclic frequency:
/// `f² [GHz²] = PLASMA_SCALE · E [GHz] / C [fF]`.
///
/// This is η²·E/C written out: (2e/ħ)²·hE/C/(2π)² = (4e²/h)·E/C.
pub const PLASMA_SCALE: f64 =
    4.0 * ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / PLANCK * GHZ / FEMTO / (GHZ * GHZ);

/// `L [nH] = INDUCTANCE_SCALE / E [GHz]`, i.e. (Φ₀/2π)²/E.
pub const INDUCTANCE_SCALE: f64 =
    (FLUX_QUANTUM / (2.0 * PI)) * (FLUX_QUANTUM / (2.0 * PI)) / (PLANCK * GHZ) / NANO;

/// `χ̃ [GHz] = g² [GHz²] · SUSCEPTIBILITY_SCALE · X [fF]` where X is the pad
/// element of the charge response matrix. Equals h/(8e²) in ohms, rescaled.
pub const SUSCEPTIBILITY_SCALE: f64 =
    PLANCK / (8.0 * ELEMENTARY_CHARGE * ELEMENTARY_CHARGE) * FEMTO * GHZ;

/// Charging energy E_C/h = e²/(2C h) in GHz for a capacitance in fF.
pub fn charging_energy_ghz(capacitance_ff: f64) -> f64 {
    ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (2.0 * capacitance_ff * FEMTO) / PLANCK / GHZ
}

/// Inverse of [`charging_energy_ghz`].
pub fn capacitance_for_charging_energy(ec_ghz: f64) -> f64 {
    ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (2.0 * ec_ghz * GHZ * PLANCK) / FEMTO
}

/// Imaginary part (in GHz) picked up by a Hessian entry of unit conductance
/// weight at probe frequency `nu_ghz`: ν·G/η² expressed as an energy over h.
///
/// With G in units of G₀ this collapses to ν·(G/G₀)/(4π).
pub fn loss_ghz(nu_ghz: f64, g_over_g0: f64) -> f64 {
    nu_ghz * g_over_g0 / (4.0 * PI)
}

/// Cyclic GHz to angular rad/ns.
pub fn angular_rad_per_ns(f_ghz: f64) -> f64 {
    2.0 * PI * f_ghz
}

/// Exact dBm to watt conversion: P = 10^((dBm − 30)/10).
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}
