//! Ground state of the 30x3 device array at a chosen frustration.
//!
//! ```text
//! cargo run --release --example ground_state -- 0.5
//! ```

use vortexlab::groundstate::{minimize, MinimizerConfig};
use vortexlab::lattice::{ArrayGeometry, CircuitConstants, CircuitParams, GaugeField};

fn main() -> vortexlab::Result<()> {
    let f: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let geometry = ArrayGeometry::new(30, 3)?;
    let params = CircuitParams::uniform(&geometry, CircuitConstants::device())?;
    let gauge = GaugeField::landau(&geometry, f);

    let r = minimize(&geometry, &gauge, &params, &MinimizerConfig::default())?;
    println!("f = {f}");
    println!("energy        {:.6} GHz", r.energy);
    println!("gradient      {:.2e}", r.gradient_norm);
    println!("vortices      {}", r.vortex_map.total_winding());
    println!("degenerate    {}", r.degenerate_count);
    println!("max |I|/I_c   {:.4}", r.vortex_map.max_circulation());
    println!("{}", r.vortex_map.ascii());
    Ok(())
}
