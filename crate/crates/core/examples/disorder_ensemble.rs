//! E_J disorder on a shortened array: spread of the pad susceptibility
//! across realizations, and how far one realization's map departs from the
//! clean one.

use vortexlab::cavity::{linspace, reflection_map, CavityParams};
use vortexlab::disorder::{generate_ensemble, reflection_difference_map, susceptibility_std};
use vortexlab::groundstate::{sweep_ground_states, MinimizerConfig};
use vortexlab::lattice::{ArrayGeometry, CircuitConstants, CircuitParams};

fn main() -> vortexlab::Result<()> {
    let geometry = ArrayGeometry::new(12, 3)?;
    let params = CircuitParams::uniform(&geometry, CircuitConstants::device())?;
    let cav = CavityParams::device();
    let cfg = MinimizerConfig::default();
    let flux = linspace(0.25, 0.5, 7);

    let ensemble = generate_ensemble(&geometry, &params, 7, 0.05, 6)?;
    let study = susceptibility_std(&ensemble, &geometry, &params, &cav, &flux, &cfg)?;
    println!("{:>8} {:>12} {:>4}", "flux", "std chi/MHz", "n");
    for row in &study.table {
        println!("{:8.4} {:12.4} {:4}", row.flux, row.std_chi_mhz, row.n_converged);
    }

    let freqs = linspace(cav.omega_c_ghz - 0.03, cav.omega_c_ghz + 0.03, 301);
    let clean = reflection_map(&sweep_ground_states(&geometry, &params, &flux, &cfg)?, &geometry, &params, &cav, &freqs)?;
    let member = &study.realizations[0];
    let noisy = reflection_map(&member.points, &geometry, &member.params, &cav, &freqs)?;
    let diff = reflection_difference_map(&noisy, &clean)?;
    println!("max ||S11| difference| for realization 0: {:.4}", diff.amax());
    Ok(())
}
