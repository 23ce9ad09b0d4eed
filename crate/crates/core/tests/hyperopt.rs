//! Optimizer behaviour on synthetic data with known answers.

mod common;

use dengue_gp::gp::log_marginal_likelihood;
use dengue_gp::hyperopt::{optimize, OptimizerConfig};
use dengue_gp::kernels::{Hyper, KernelInput};
use dengue_gp::synth::{draw_from_prior, SynthSpec};
use rand::Rng;
use rand_distr::StandardNormal;

#[test]
fn white_noise_is_absorbed_by_the_noise_variance() {
    for seed in 0..3 {
        let mut r = common::rng(seed);
        let inputs: Vec<KernelInput> = (1..=120)
            .map(|w| common::random_input(&mut r, w as f64))
            .collect();
        let y: Vec<f64> = (0..120)
            .map(|_| 0.3 * r.sample::<f64, _>(StandardNormal))
            .collect();
        let mean = y.iter().sum::<f64>() / 120.0;
        let y: Vec<f64> = y.iter().map(|v| v - mean).collect();
        let var = y.iter().map(|v| v * v).sum::<f64>() / 119.0;
        let fit = optimize(
            &inputs,
            &y,
            &OptimizerConfig {
                seed,
                ..Default::default()
            },
        )
        .unwrap();
        let h = fit.hyperparameters;
        // At the 0.5-week lengthscale floor the local term is close to white on a
        // weekly grid, so it shares the noise with the noise variance.
        assert!(h.get(Hyper::EllLoc) < 1.0);
        let white = h.get(Hyper::NoiseVar) + h.get(Hyper::SigmaLocSq);
        assert!(
            (white / var - 1.0).abs() <= 0.25,
            "seed {seed}: white {white} vs variance {var}"
        );
        for s in [Hyper::SigmaQpSq, Hyper::SigmaLinSq] {
            assert!(
                h.get(s) <= 0.15 * var,
                "seed {seed}: {} = {}",
                s.name(),
                h.get(s)
            );
        }
    }
}

#[test]
fn prior_draws_recover_period_and_noise() {
    let (mut loc_hits, mut lml_hits) = (0, 0);
    for seed in 0..10u64 {
        let spec = SynthSpec::strongly_periodic(seed);
        let draw = draw_from_prior(&spec).unwrap();
        let y: Vec<f64> = draw.log_dir.iter().map(|v| v - spec.log_mean).collect();
        let fit = optimize(
            &draw.inputs,
            &y,
            &OptimizerConfig {
                seed,
                ..Default::default()
            },
        )
        .unwrap();

        for d in &fit.restarts {
            if let Some(start) = d.initial_lml {
                assert!(
                    fit.lml >= start,
                    "seed {seed}: restart {} started higher",
                    d.restart
                );
            }
        }
        let truth = log_marginal_likelihood(&draw.inputs, &y, &spec.hyperparameters).unwrap();
        lml_hits += (fit.lml >= truth - 1.0) as usize;

        let dlog = |h: Hyper| fit.hyperparameters.log_of(h) - spec.hyperparameters.log_of(h);
        assert!(
            dlog(Hyper::NoiseVar).abs() <= 0.5,
            "seed {seed}: noise off by {}",
            dlog(Hyper::NoiseVar)
        );
        loc_hits += (dlog(Hyper::SigmaLocSq).abs() <= 0.5) as usize;
        // The quasi-periodic amplitude is weakly identified over four seasons and
        // the linear bias is unidentifiable on centered targets; report only.
        println!(
            "seed {seed}: log error qp {:+.2} lin {:+.2}",
            dlog(Hyper::SigmaQpSq),
            dlog(Hyper::SigmaLinSq)
        );
    }
    assert!(
        lml_hits >= 8,
        "lml within one nat of the truth in {lml_hits}/10"
    );
    assert!(loc_hits >= 8, "local variance recovered in {loc_hits}/10");
}
