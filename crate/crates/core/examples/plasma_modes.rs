//! Plasma-mode spectrum of the device array at zero and half flux, and the
//! analytic single-junction check ν = √(8 E_J E_C).

use nalgebra::DMatrix;
use vortexlab::energy::{self, Hessian};
use vortexlab::groundstate::{minimize, MinimizerConfig};
use vortexlab::lattice::{self, ArrayGeometry, CapacitanceMatrix, CircuitConstants, CircuitParams, GaugeField};
use vortexlab::spinwave::mode_spectrum;
use vortexlab::units;

fn main() -> vortexlab::Result<()> {
    let geometry = ArrayGeometry::new(30, 3)?;
    let params = CircuitParams::uniform(&geometry, CircuitConstants::device())?;
    let c = lattice::capacitance_matrix(&geometry, &params)?;

    for f in [0.0, 0.5] {
        let gauge = GaugeField::landau(&geometry, f);
        let r = minimize(&geometry, &gauge, &params, &MinimizerConfig::default())?;
        let h = energy::hessian(&r.config, &geometry, &gauge, &params)?;
        let s = mode_spectrum(&h, &c)?;
        let nu = &s.frequencies;
        println!(
            "f = {f}: {} modes, lowest {:.3} GHz, highest {:.3} GHz, largest gap {:?}",
            s.len(),
            nu[0],
            nu[nu.len() - 1],
            s.largest_gap()
        );
    }

    // A lone junction, curvature E_J, shunted so that E_C = 13 GHz.
    let (ej, ec) = (25.8, 13.0);
    let h = Hessian::from_matrix(DMatrix::from_element(1, 1, ej));
    let c1 = CapacitanceMatrix::new(DMatrix::from_element(1, 1, units::capacitance_for_charging_energy(ec)))?;
    println!(
        "single junction: {:.4} GHz (analytic {:.4} GHz)",
        mode_spectrum(&h, &c1)?.frequencies[0],
        (8.0f64 * ej * ec).sqrt()
    );
    Ok(())
}
