//! Cavity reflection with the array at one flux point: the pad
//! susceptibility shifts and broadens the bare resonance.
//!
//! ```text
//! cargo run --release --example cavity_reflection -- 0.3333333333
//! ```

use vortexlab::cavity::{self, linspace, CavityParams, ReflectionTrace};
use vortexlab::groundstate::{sweep_ground_states, MinimizerConfig};
use vortexlab::lattice::{ArrayGeometry, CircuitConstants, CircuitParams};

fn main() -> vortexlab::Result<()> {
    let f: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1.0 / 3.0);
    let geometry = ArrayGeometry::new(30, 3)?;
    let params = CircuitParams::uniform(&geometry, CircuitConstants::device())?;
    let cav = CavityParams::device();

    let point = &sweep_ground_states(&geometry, &params, &[f], &MinimizerConfig::default())?[0];
    let response = cavity::array_response(point, &geometry, &params)?;
    let chi = response.chi_mhz(&cav, cav.omega_c_ghz)?;

    let freqs = linspace(cav.omega_c_ghz - 0.06, cav.omega_c_ghz + 0.06, 2401);
    let loaded = ReflectionTrace::compute(&cav, &freqs, |nu| response.chi_mhz(&cav, nu))?;

    println!("f = {f:.6}");
    println!("chi(omega_c)  {:.4} {:+.4}i MHz", chi.re, chi.im);
    println!("photons at -132 dBm  {:.3}", cavity::photon_number(-132.0, &cav));
    let dip = loaded.dip_frequency().unwrap();
    println!("dip  {dip:.6} GHz, shift {:+.3} MHz", (dip - cav.omega_c_ghz) * 1e3);
    let min = loaded.s11.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    println!("|S11| at dip  {min:.4} (bare cavity {:.4})", cavity::bare_s11(&cav, cav.omega_c_ghz).norm());
    Ok(())
}
