//! Evaluates the same likelihood and gradient on every backend and prints
//! the per-backend deviation from the serial reference, plus the truncation
//! ablation (how much the normalizing constants for nonnegative
//! dissimilarities contribute).
//!
//! Run with `cargo run --release --example engines`.

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;

use phylomds::engine::{Backend, DeviceTarget, Engine, EngineConfig};
use phylomds::model::{DissimilarityData, LatentConfiguration, MdsParams};

fn main() -> phylomds::Result<()> {
    let (n, d) = (512, 3);
    let mut rng = ChaCha20Rng::seed_from_u64(9);

    // Coordinates from a standard normal; observations are the exact
    // distances with a little truncated jitter folded in by construction.
    let coords: Vec<f64> = (0..n * d).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
    let x = LatentConfiguration::new(n, d, coords)?;
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 1..n {
        for j in 0..i {
            let delta: f64 = x
                .row(i)
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            pairs.push((i, j, delta + 0.05 * rng.random::<f64>()));
        }
    }
    let data = DissimilarityData::from_observed_pairs(n, &pairs)?;
    let params = MdsParams::new(0.25)?;

    let serial = Engine::new(EngineConfig {
        backend: Backend::Serial,
        ..EngineConfig::default()
    })?;
    let ll_ref = serial.log_likelihood(&data, &x, &params)?;
    let grad_ref = serial.gradient(&data, &x, &params)?;

    println!("{n} items, {d} dimensions, sigma2 = {}", params.sigma2());
    println!("serial log likelihood: {ll_ref:.12}");
    println!();
    println!("{:<22} {:>14} {:>14}", "backend", "|dll| (rel)", "grad dev (rel)");

    for backend in Backend::all() {
        let cfg = EngineConfig {
            backend,
            thread_count: 4,
            lane_width: 4,
            tile_size_b: None,
            device_target: DeviceTarget::Emulated,
        };
        let engine = Engine::new(cfg)?;
        let ll = engine.log_likelihood(&data, &x, &params)?;
        let grad = engine.gradient(&data, &x, &params)?;
        let dll = ((ll - ll_ref) / ll_ref).abs();
        let mut dgrad = 0.0f64;
        for i in 0..n {
            let num: f64 = grad
                .row(i)
                .iter()
                .zip(grad_ref.row(i))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let den: f64 = grad_ref.row(i).iter().map(|g| g * g).sum::<f64>().sqrt();
            dgrad = dgrad.max(num / den.max(1e-300));
        }
        println!("{:<22} {:>14.3e} {:>14.3e}", backend.name(), dll, dgrad);
    }

    // The ablation: dropping the truncation penalty leaves a plain Gaussian
    // likelihood, and the two differ by exactly the penalty sum.
    let plain = serial.log_likelihood_untruncated(&data, &x, &params)?;
    let penalty = serial.truncation_sum(&x, &params, data.mask())?;
    println!();
    println!("untruncated log likelihood: {plain:.12}");
    println!("truncation penalty sum:     {penalty:.12}");
    println!("identity check |(plain - penalty) - ll| = {:.3e}", (plain - penalty - ll_ref).abs());

    // Requesting real accelerator hardware is a capability error in this
    // build; the emulated target above is the supported path.
    let native = Engine::new(EngineConfig {
        backend: Backend::TiledDevice,
        device_target: DeviceTarget::Native,
        ..EngineConfig::default()
    });
    match native {
        Err(e) => println!("\nnative device request: {e}"),
        Ok(_) => println!("\nnative device request unexpectedly succeeded"),
    }
    Ok(())
}
