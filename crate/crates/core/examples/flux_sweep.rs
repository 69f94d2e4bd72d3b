//! Ground-state continuation across half a flux period, reporting winding
//! jumps. Points are solved independently first, then each previous winner
//! is carried forward and kept if it is still lower.

use vortexlab::cavity::linspace;
use vortexlab::groundstate::{sweep_ground_states, MinimizerConfig};
use vortexlab::lattice::{ArrayGeometry, CircuitConstants, CircuitParams};

fn main() -> vortexlab::Result<()> {
    let geometry = ArrayGeometry::new(30, 3)?;
    let params = CircuitParams::uniform(&geometry, CircuitConstants::device())?;
    let grid = linspace(0.0, 0.5, 19);

    let sweep = sweep_ground_states(&geometry, &params, &grid, &MinimizerConfig::default())?;
    println!("{:>8} {:>14} {:>8} {:>5}", "flux", "energy/GHz", "winding", "jump");
    for p in &sweep {
        println!(
            "{:8.4} {:14.6} {:8} {:>5}",
            p.flux,
            p.result.energy,
            p.result.vortex_map.total_winding(),
            if p.jump { "*" } else { "" }
        );
    }
    Ok(())
}
