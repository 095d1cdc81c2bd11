//! Picks the latent dimension by pairwise cross-validation: dissimilarities
//! are generated from a 2-dimensional truth, pairs are dealt into folds, and
//! each candidate dimension is scored by held-out log predictive density.
//!
//! Run with `cargo run --release --example cross_validate`.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;

use phylomds::engine::{Engine, EngineConfig};
use phylomds::model::DissimilarityData;
use phylomds::sampler::{run_chain, ChainConfig, ChainInputs, HmcConfig, Mass, ScanWeights};
use phylomds::select::{lpd_hat, make_folds, DimensionTable, PredictiveDraw};
use phylomds::tree::{parse_trees, simulate_brownian_tips, DiffusionParams, Forest, PriorHyperparams};

const NEWICK: &str = "(((A:1,B:1):1,(C:1,D:1):1):1,((E:1,F:1):1,(G:1,H:1):1):1);";

fn main() -> phylomds::Result<()> {
    let d_true = 2;
    let forest = Forest::over_own_tips(parse_trees(NEWICK)?)?;
    let n = forest.n_items();

    let gen_dp = DiffusionParams::new(
        DMatrix::identity(d_true, d_true) * 4.0,
        DVector::zeros(d_true),
        1.0,
        1.0,
    )?;
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let x_true = simulate_brownian_tips(&forest, &gen_dp, &mut rng)?;

    let sigma2_true = 0.02f64;
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 1..n {
        for j in 0..i {
            let delta: f64 = x_true
                .row(i)
                .iter()
                .zip(x_true.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let y = loop {
                let cand = delta + sigma2_true.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal);
                if cand >= 0.0 {
                    break cand;
                }
            };
            pairs.push((i, j, y));
        }
    }
    let data = DissimilarityData::from_observed_pairs(n, &pairs)?;

    let k = 4;
    let plan = make_folds(&data, k, 1234)?;
    println!("{n} items, {} observed pairs dealt into {k} folds; truth is {d_true}-dimensional", plan.assignments().len());

    let engine = Engine::new(EngineConfig::default())?;
    let mut table = DimensionTable::new();
    for dim in [1usize, 2, 3] {
        let dp = DiffusionParams::new(
            DMatrix::identity(dim, dim),
            DVector::zeros(dim),
            1.0,
            1.0,
        )?;
        let hyper = PriorHyperparams::default_for_dim(dim);
        let mut fold_draws: Vec<Vec<PredictiveDraw>> = Vec::with_capacity(k);
        for fold in 0..k {
            let training = plan.training_data(&data, fold)?;
            let cfg = ChainConfig {
                iterations: 1500,
                thin: 5,
                seed: 1000 + (dim as u64) * 10 + fold as u64,
                hmc: HmcConfig { step_size: 0.05, leapfrog_steps: 8, mass: Mass::Identity },
                weights: ScanWeights::default(),
                sigma2_proposal_sd: 0.4,
                warmup_iterations: 300,
                target_accept: 0.651,
            };
            let inputs = ChainInputs {
                engine: &engine,
                data: Some(&training),
                mixture: std::slice::from_ref(&forest),
                diffusion: &dp,
                hyper: &hyper,
            };
            let out = run_chain(&cfg, &inputs, None)?;
            fold_draws.push(
                out.draws
                    .iter()
                    .map(|dr| PredictiveDraw::new(dr.x.clone(), dr.sigma2))
                    .collect(),
            );
        }
        let report = lpd_hat(&plan, &data, &fold_draws)?;
        println!(
            "  D = {dim}: held-out lpd {:10.4} ({:.4} per pair)",
            report.total(),
            report.per_pair_average()
        );
        table.insert(dim, report);
    }

    let best = table.best().expect("table is nonempty");
    println!("selected dimension: {best}");
    Ok(())
}
