//! Coarse |S11| map over half a flux period, summarized by the dip shift at
//! each flux point. The full-resolution map is what `vortexlab map` writes.

use vortexlab::cavity::{linspace, reflection_map, CavityParams};
use vortexlab::groundstate::{sweep_ground_states, MinimizerConfig};
use vortexlab::lattice::{ArrayGeometry, CircuitConstants, CircuitParams};

fn main() -> vortexlab::Result<()> {
    let geometry = ArrayGeometry::new(30, 3)?;
    let params = CircuitParams::uniform(&geometry, CircuitConstants::device())?;
    let cav = CavityParams::device();
    let flux = linspace(0.0, 0.5, 19);
    let freqs = linspace(cav.omega_c_ghz - 0.05, cav.omega_c_ghz + 0.05, 1001);

    let sweep = sweep_ground_states(&geometry, &params, &flux, &MinimizerConfig::default())?;
    let map = reflection_map(&sweep, &geometry, &params, &cav, &freqs)?;
    let kappa = cav.kappa_tot_mhz();
    for (f, trace) in map.flux.iter().zip(&map.traces) {
        let shift = (trace.dip_frequency().unwrap() - cav.omega_c_ghz) * 1e3;
        let bar = "#".repeat((shift.abs() / kappa).round().min(40.0) as usize);
        println!("{f:7.4} {shift:+9.3} MHz {bar}");
    }

    let mut out = Vec::new();
    map.write_csv(&mut out).expect("in-memory write");
    println!("{} CSV rows over a {}x{} grid", out.iter().filter(|&&b| b == b'\n').count() - 1, map.flux.len(), freqs.len());
    Ok(())
}
