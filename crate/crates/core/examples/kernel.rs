//! Evaluates the composite covariance and its parts over a two-year lag range.
//!
//! `cargo run --example kernel`

use dengue_gp::kernels::{composite_kernel, matern52, periodic, KernelInput};
use dengue_gp::synth::SynthSpec;

fn main() -> dengue_gp::Result<()> {
    let h = SynthSpec::strongly_periodic(0).hyperparameters;
    let n = h.natural();
    let origin = KernelInput::new(0.0, [0.0; 3])?;
    println!(
        "{:>4} {:>9} {:>9} {:>9} {:>9}",
        "lag", "local", "matern_qp", "periodic", "k(0,lag)"
    );
    for lag in [0, 1, 2, 4, 13, 26, 39, 52, 78, 104] {
        let dt = lag as f64;
        let x = KernelInput::new(dt, [0.0; 3])?;
        println!(
            "{lag:>4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            matern52(dt, n.sigma_loc_sq, n.ell_loc)?,
            matern52(dt, n.sigma_qp_sq, n.ell_qp)?,
            periodic(dt, n.period, n.ell_per)?,
            composite_kernel(&origin, &x, &h),
        );
    }
    Ok(())
}
