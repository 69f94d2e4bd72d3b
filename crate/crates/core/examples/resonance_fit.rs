//! Recovers bare-cavity parameters from a reflection trace CSV
//! (`freq_GHz,S11_re,S11_im`). Defaults to the bundled synthetic trace.

use vortexlab::cavity::{fit_resonance, ReflectionTrace};

fn main() -> vortexlab::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/synthetic_trace.csv").to_string());
    let text = std::fs::read_to_string(&path).map_err(|source| vortexlab::Error::Io { path: path.clone(), source })?;
    let trace = ReflectionTrace::read_csv(&text)?;
    let fit = fit_resonance(&trace)?;
    println!("{} points from {path}", trace.len());
    println!("omega_c    {:.9} GHz", fit.omega_c_ghz);
    println!("kappa_ext  {:.6} MHz", fit.kappa_ext_mhz);
    println!("kappa_int  {:.6} MHz", fit.kappa_int_mhz);
    println!("residual   {:.3e} after {} iterations", fit.residual, fit.iterations);
    Ok(())
}
