//! Draws incidence from the GP prior and fits the hyperparameters back.
//!
//! `cargo run --release --example hyperopt -- [seed]`

use dengue_gp::gp::log_marginal_likelihood;
use dengue_gp::hyperopt::{optimize, OptimizerConfig};
use dengue_gp::kernels::Hyper;
use dengue_gp::synth::{draw_from_prior, SynthSpec};

fn main() -> dengue_gp::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let spec = SynthSpec::strongly_periodic(seed);
    let draw = draw_from_prior(&spec)?;
    let targets: Vec<f64> = draw.log_dir.iter().map(|v| v - spec.log_mean).collect();

    let fit = optimize(
        &draw.inputs,
        &targets,
        &OptimizerConfig {
            seed,
            ..Default::default()
        },
    )?;
    let truth = log_marginal_likelihood(&draw.inputs, &targets, &spec.hyperparameters)?;

    for r in &fit.restarts {
        println!(
            "restart {}: start lml {:>8.2}  final {:>8.2}  {:?}",
            r.restart,
            r.initial_lml.unwrap_or(f64::NAN),
            r.final_lml.unwrap_or(f64::NAN),
            r.termination
        );
    }
    println!(
        "best restart {}, lml {:.2} (generating {:.2})",
        fit.best_restart, fit.lml, truth
    );
    println!("{:>13} {:>10} {:>10}", "", "fitted", "truth");
    for h in Hyper::ALL {
        println!(
            "{:>13} {:>10.4} {:>10.4}",
            h.name(),
            fit.hyperparameters.get(h),
            spec.hyperparameters.get(h)
        );
    }
    Ok(())
}
