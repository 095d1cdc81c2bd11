//! Command bodies behind the CLI subcommands. Each takes a validated
//! configuration (or typed flags), writes its artifacts into the output
//! directory, and returns a short human-readable summary.
//!
//! Every command is deterministic under a fixed seed and config: artifact
//! files from repeated runs compare equal byte for byte.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use super::config::{parse_device, EngineSection, RunConfig};
use super::formats::{
    config_sha256, host_cores, read_distance_csv, read_edges_csv, read_groups_csv,
    write_benchmark_csv, write_distance_csv, write_fold_plan, write_metadata, write_snapshots,
    write_trace_csv, BenchmarkRow, RunMetadata, Snapshot, CONVENTION_NOTES,
};
use crate::engine::{Backend, DeviceTarget, Engine, EngineConfig};
use crate::error::{Error, Result};
use crate::model::types::{DissimilarityData, LatentConfiguration, MdsParams, PairMask};
use crate::net::{aggregate_to_groups, effective_distance, TravelNetwork};
use crate::sampler::{run_chain, ChainInputs, ChainOutput, SamplerState};
use crate::select::{lpd_hat, make_folds, DimensionTable, PredictiveDraw};
use crate::tree::{parse_mixture, simulate_brownian_tips, Forest, Phylogeny};

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads the tree-mixture file: one component per line, each a forest of
/// one or more trees.
fn load_mixture(path: &Path) -> Result<Vec<Vec<Phylogeny>>> {
    let text = read_text(path)?;
    parse_mixture(&text).map_err(|e| Error::parse(path, e.to_string()))
}

fn bind_forests(components: Vec<Vec<Phylogeny>>, labels: &[String]) -> Result<Vec<Forest>> {
    components
        .into_iter()
        .map(|trees| Forest::bind(trees, labels))
        .collect()
}

/// Stable per-run seed derivation, so cross-validation chains and benchmark
/// data sets stay decorrelated but reproducible.
fn mix_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base ^ a.rotate_left(32) ^ b;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One draw from N(delta, sigma^2) conditioned on being positive, by
/// rejection. With delta >= 0 at least half the mass is positive, so the
/// retry bound is unreachable in normal operation.
pub(crate) fn draw_truncated_normal<R: Rng>(rng: &mut R, delta: f64, sigma: f64) -> Result<f64> {
    if sigma == 0.0 {
        return Ok(delta);
    }
    for _ in 0..10_000 {
        let z: f64 = rng.sample(StandardNormal);
        let y = delta + sigma * z;
        if y > 0.0 {
            return Ok(y);
        }
    }
    Err(Error::numeric(format!(
        "truncated-normal rejection stalled at delta = {delta}, sigma = {sigma}"
    )))
}

/// Linear-interpolated empirical quantile; `sorted` must be ascending.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

fn summarize(values: &[f64]) -> (f64, f64, f64, f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (
        mean,
        quantile(&sorted, 0.025),
        quantile(&sorted, 0.5),
        quantile(&sorted, 0.975),
    )
}

/// Draws latent locations along the configured trees, adds truncated-normal
/// noise (or none when `simulate.sigma2 = 0`), and writes the distance
/// matrix, the true coordinates, and metadata.
pub fn cmd_simulate(cfg: &RunConfig, config_text: &str) -> Result<String> {
    let trees_path = cfg.require_trees()?;
    let components = load_mixture(trees_path)?;
    let n_components = components.len();
    // simulation uses the first mixture component as the generative tree set
    let trees = components.into_iter().next().expect("non-empty mixture");
    let labels: Vec<String> = trees
        .iter()
        .flat_map(|t| t.tip_labels().into_iter().map(|s| s.to_string()))
        .collect();
    let forest = Forest::bind(trees, &labels)?;

    let d = cfg.model.latent_dim;
    let dp = cfg.diffusion_for(d)?;
    let sigma2 = cfg.simulate.sigma2;
    let sigma = sigma2.sqrt();

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.sampler.seed);
    let x = simulate_brownian_tips(&forest, &dp, &mut rng)?;
    let n = x.n();

    let mut values = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..i {
            let y = draw_truncated_normal(&mut rng, x.distance(i, j), sigma)?;
            values[i * n + j] = y;
            values[j * n + i] = y;
        }
    }
    let data = DissimilarityData::new(n, values, PairMask::all_observed(n))?;

    let out = &cfg.output.directory;
    ensure_dir(out)?;
    write_distance_csv(&out.join("distances.csv"), &labels, &data)?;
    write_snapshots(
        &out.join("ground_truth.bin"),
        n,
        d,
        &[Snapshot {
            iteration: 0,
            sigma2,
            x,
        }],
    )?;
    let hash = config_sha256(config_text);
    let engine_desc = EngineSection::describe(&cfg.engine.to_engine_config()?);
    write_metadata(
        &out.join("metadata.toml"),
        &RunMetadata {
            command: "simulate",
            seed: cfg.sampler.seed,
            config_sha256: &hash,
            engine: &engine_desc,
            host_cores: host_cores(),
            conventions: CONVENTION_NOTES.to_vec(),
            config: cfg,
        },
    )?;

    Ok(format!(
        "simulated {n} items in {d} dimensions (sigma2 = {sigma2}) from mixture component 1 of {n_components}; wrote {}",
        out.display()
    ))
}

struct FitArtifacts {
    output: ChainOutput,
    n: usize,
    d: usize,
}

/// Shared chain launcher for fit and cross-validation folds.
fn run_configured_chain(
    cfg: &RunConfig,
    dim: usize,
    seed: u64,
    engine: &Engine,
    data: &DissimilarityData,
    forests: &[Forest],
) -> Result<FitArtifacts> {
    let dp = cfg.diffusion_for(dim)?;
    let hyper = cfg.hyper_for(dim)?;
    let mut chain_cfg = cfg.chain_config(dim)?;
    chain_cfg.seed = seed;

    // explicit start: prior-drawn coordinates, configured residual variance
    let mut init_rng = ChaCha20Rng::seed_from_u64(mix_seed(seed, 0x1715, 0));
    let x0 = simulate_brownian_tips(&forests[0], &dp, &mut init_rng)?;
    let init = SamplerState {
        x: x0,
        sigma2: cfg.model.sigma2_init,
        sigma_mat: DMatrix::identity(dim, dim),
        tree_index: 0,
        iteration: 0,
    };

    let inputs = ChainInputs {
        engine,
        data: Some(data),
        mixture: forests,
        diffusion: &dp,
        hyper: &hyper,
    };
    let output = run_chain(&chain_cfg, &inputs, Some(init))?;
    if output.draws.is_empty() {
        return Err(Error::invalid_argument(
            "thinning recorded no draws; lower sampler.thin or raise sampler.iterations",
        ));
    }
    Ok(FitArtifacts {
        output,
        n: data.n(),
        d: dim,
    })
}

fn write_locations_csv(
    path: &Path,
    labels: &[String],
    draws: &[crate::sampler::Draw],
    d: usize,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    let mut header = vec!["item".to_string()];
    for k in 0..d {
        header.push(format!("mean_{k}"));
    }
    for k in 0..d {
        header.push(format!("sd_{k}"));
    }
    w.write_record(&header)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;

    let s = draws.len() as f64;
    for (i, label) in labels.iter().enumerate() {
        let mut mean = vec![0.0f64; d];
        for draw in draws {
            for (k, v) in draw.x.row(i).iter().enumerate() {
                mean[k] += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= s;
        }
        let mut var = vec![0.0f64; d];
        if draws.len() > 1 {
            for draw in draws {
                for (k, v) in draw.x.row(i).iter().enumerate() {
                    let diff = v - mean[k];
                    var[k] += diff * diff;
                }
            }
            for v in var.iter_mut() {
                *v /= s - 1.0;
            }
        }
        let mut row = vec![label.clone()];
        row.extend(mean.iter().map(|v| format!("{v:?}")));
        row.extend(var.iter().map(|v| format!("{:?}", v.sqrt())));
        w.write_record(&row)
            .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn fit_summary_text(cfg: &RunConfig, art: &FitArtifacts) -> String {
    let out = &art.output;
    let sigma2s: Vec<f64> = out.draws.iter().map(|d| d.sigma2).collect();
    let traces: Vec<f64> = out.draws.iter().map(|d| d.sigma_mat.trace()).collect();
    let (s_mean, s_lo, s_med, s_hi) = summarize(&sigma2s);
    let (t_mean, t_lo, t_med, t_hi) = summarize(&traces);
    let mut text = String::new();
    text.push_str(&format!(
        "items: {}\nlatent dimension: {}\niterations: {} (thin {}, warmup {})\nrecorded draws: {}\n",
        art.n,
        art.d,
        cfg.sampler.iterations,
        cfg.sampler.thin,
        cfg.sampler.warmup,
        out.draws.len()
    ));
    text.push_str(&format!(
        "coordinate moves: {} of {} accepted, {} divergent\n",
        out.x_block.accepts, out.x_block.attempts, out.x_divergences
    ));
    text.push_str(&format!(
        "variance moves: {} of {} accepted\ncovariance updates: {}\ntree updates: {}\n",
        out.sigma2_block.accepts,
        out.sigma2_block.attempts,
        out.sigma_mat_updates,
        out.tree_updates
    ));
    text.push_str(&format!("step size: {:?}\n", out.step_size));
    text.push_str(&format!(
        "posterior sigma2: mean {s_mean:?}, 2.5% {s_lo:?}, median {s_med:?}, 97.5% {s_hi:?}\n"
    ));
    text.push_str(&format!(
        "posterior tr(Sigma): mean {t_mean:?}, 2.5% {t_lo:?}, median {t_med:?}, 97.5% {t_hi:?}\n"
    ));
    text
}

/// Fits the model to a distance matrix under the configured tree prior and
/// writes the trace, coordinate snapshots, per-item location summaries, a
/// text summary, and metadata.
pub fn cmd_fit(cfg: &RunConfig, config_text: &str) -> Result<String> {
    let (labels, data) = read_distance_csv(cfg.require_distances()?)?;
    let components = load_mixture(cfg.require_trees()?)?;
    let forests = bind_forests(components, &labels)?;
    let engine = Engine::new(cfg.engine.to_engine_config()?)?;

    let dim = cfg.model.latent_dim;
    let art = run_configured_chain(cfg, dim, cfg.sampler.seed, &engine, &data, &forests)?;

    let out = &cfg.output.directory;
    ensure_dir(out)?;
    write_trace_csv(&out.join("trace.csv"), &art.output.draws, dim)?;
    let snaps: Vec<Snapshot> = art
        .output
        .draws
        .iter()
        .map(|d| Snapshot {
            iteration: d.iteration as u64,
            sigma2: d.sigma2,
            x: d.x.clone(),
        })
        .collect();
    write_snapshots(&out.join("samples.bin"), art.n, dim, &snaps)?;
    write_locations_csv(&out.join("locations.csv"), &labels, &art.output.draws, dim)?;

    let summary = fit_summary_text(cfg, &art);
    std::fs::write(out.join("summary.txt"), &summary)
        .map_err(|e| Error::io(out.join("summary.txt"), e))?;

    let hash = config_sha256(config_text);
    let engine_desc = EngineSection::describe(engine.config());
    write_metadata(
        &out.join("metadata.toml"),
        &RunMetadata {
            command: "fit",
            seed: cfg.sampler.seed,
            config_sha256: &hash,
            engine: &engine_desc,
            host_cores: host_cores(),
            conventions: CONVENTION_NOTES.to_vec(),
            config: cfg,
        },
    )?;

    Ok(summary)
}

/// K-fold cross-validation over candidate latent dimensions. Reuses one
/// fold plan for every dimension, trains a chain per (dimension, fold), and
/// reports held-out log predictive totals with the maximizing dimension.
pub fn cmd_cv(cfg: &RunConfig, config_text: &str, folds: usize, dims: &[usize]) -> Result<String> {
    if dims.is_empty() {
        return Err(Error::invalid_argument("no candidate dimensions given"));
    }
    let mut candidates: Vec<usize> = dims.to_vec();
    candidates.sort_unstable();
    candidates.dedup();
    if candidates[0] < 1 {
        return Err(Error::invalid_argument("candidate dimensions must be at least 1"));
    }

    let (labels, data) = read_distance_csv(cfg.require_distances()?)?;
    let components = load_mixture(cfg.require_trees()?)?;
    let forests = bind_forests(components, &labels)?;
    let engine = Engine::new(cfg.engine.to_engine_config()?)?;

    let plan = make_folds(&data, folds, cfg.sampler.seed)?;
    let out = &cfg.output.directory;
    ensure_dir(out)?;
    write_fold_plan(&out.join("folds.toml"), &plan)?;

    let mut table = DimensionTable::new();
    for &dim in &candidates {
        let mut fold_draws: Vec<Vec<PredictiveDraw>> = Vec::with_capacity(folds);
        for fold in 0..folds {
            let train = plan.training_data(&data, fold)?;
            let seed = mix_seed(cfg.sampler.seed, dim as u64, fold as u64 + 1);
            let art = run_configured_chain(cfg, dim, seed, &engine, &train, &forests)?;
            fold_draws.push(
                art.output
                    .draws
                    .into_iter()
                    .map(|d| PredictiveDraw::new(d.x, d.sigma2))
                    .collect(),
            );
        }
        let report = lpd_hat(&plan, &data, &fold_draws)?;
        table.insert(dim, report);
    }

    let selected = table.best().expect("at least one candidate");

    // per-fold detail
    let fold_path = out.join("cv_folds.csv");
    let mut w = csv::Writer::from_path(&fold_path)
        .map_err(|e| Error::io(&fold_path, std::io::Error::other(e.to_string())))?;
    w.write_record(["dimension", "fold", "heldout_pairs", "lpd"])
        .map_err(|e| Error::io(&fold_path, std::io::Error::other(e.to_string())))?;
    for (dim, report) in table.entries() {
        for (fold, lpd) in report.per_fold().iter().enumerate() {
            w.write_record([
                dim.to_string(),
                fold.to_string(),
                plan.heldout_pairs(fold).len().to_string(),
                format!("{lpd:?}"),
            ])
            .map_err(|e| Error::io(&fold_path, std::io::Error::other(e.to_string())))?;
        }
    }
    w.flush().map_err(|e| Error::io(&fold_path, e))?;

    // per-dimension table
    let report_path = out.join("cv_report.csv");
    let mut w = csv::Writer::from_path(&report_path)
        .map_err(|e| Error::io(&report_path, std::io::Error::other(e.to_string())))?;
    w.write_record([
        "dimension",
        "lpd_total",
        "per_pair_average",
        "heldout_pairs",
        "selected",
    ])
    .map_err(|e| Error::io(&report_path, std::io::Error::other(e.to_string())))?;
    let mut summary = String::from("held-out log predictive density by dimension:\n");
    for (dim, report) in table.entries() {
        let mark = if dim == selected { "1" } else { "0" };
        w.write_record([
            dim.to_string(),
            format!("{:?}", report.total()),
            format!("{:?}", report.per_pair_average()),
            report.n_heldout().to_string(),
            mark.to_string(),
        ])
        .map_err(|e| Error::io(&report_path, std::io::Error::other(e.to_string())))?;
        summary.push_str(&format!(
            "  D = {dim}: total {:?}, per pair {:?}{}\n",
            report.total(),
            report.per_pair_average(),
            if dim == selected { "  <- selected" } else { "" }
        ));
    }
    w.flush().map_err(|e| Error::io(&report_path, e))?;
    summary.push_str(&format!(
        "selected dimension: {selected} ({} folds, seed {})\n",
        plan.k(),
        plan.seed()
    ));
    std::fs::write(out.join("summary.txt"), &summary)
        .map_err(|e| Error::io(out.join("summary.txt"), e))?;

    let hash = config_sha256(config_text);
    let engine_desc = EngineSection::describe(engine.config());
    write_metadata(
        &out.join("metadata.toml"),
        &RunMetadata {
            command: "cv",
            seed: cfg.sampler.seed,
            config_sha256: &hash,
            engine: &engine_desc,
            host_cores: host_cores(),
            conventions: CONVENTION_NOTES.to_vec(),
            config: cfg,
        },
    )?;

    Ok(summary)
}

pub struct BenchmarkArgs {
    pub sizes: Vec<usize>,
    pub dims: Vec<usize>,
    pub engines: Vec<String>,
    pub repeats: usize,
    pub lane_width: usize,
    pub tile_size: Option<usize>,
    pub device: String,
    pub seed: u64,
    pub output: PathBuf,
}

/// `backend[:threads]`, e.g. `serial`, `threaded:4`.
fn parse_engine_spec(
    spec: &str,
    lane_width: usize,
    tile_size: Option<usize>,
    device: DeviceTarget,
) -> Result<EngineConfig> {
    let (name, threads) = match spec.split_once(':') {
        Some((name, t)) => {
            let threads: usize = t.parse().map_err(|_| {
                Error::invalid_argument(format!("bad thread count in engine spec {spec:?}"))
            })?;
            (name, threads)
        }
        None => (spec, 1),
    };
    let cfg = EngineConfig {
        backend: Backend::parse(name)?,
        thread_count: threads,
        lane_width,
        tile_size_b: tile_size,
        device_target: device,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Synthetic benchmark instance: distances between standard-normal latent
/// points, every pair observed, unit residual variance.
fn synthetic_instance(n: usize, d: usize, seed: u64) -> (DissimilarityData, LatentConfiguration) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let coords: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    let x = LatentConfiguration::new(n, d, coords).expect("finite normals");
    let mut values = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..i {
            let delta = x.distance(i, j);
            values[i * n + j] = delta;
            values[j * n + i] = delta;
        }
    }
    let data = DissimilarityData::new(n, values, PairMask::all_observed(n)).expect("valid");
    (data, x)
}

const BENCH_OPS: [&str; 3] = ["likelihood", "gradient", "likelihood_untruncated"];

fn time_op(
    engine: &Engine,
    op: &str,
    data: &DissimilarityData,
    x: &LatentConfiguration,
    params: &MdsParams,
    repeats: usize,
) -> Result<(f64, f64)> {
    let run = || -> Result<()> {
        match op {
            "likelihood" => {
                std::hint::black_box(engine.log_likelihood(data, x, params)?);
            }
            "gradient" => {
                std::hint::black_box(engine.gradient(data, x, params)?);
            }
            "likelihood_untruncated" => {
                std::hint::black_box(engine.log_likelihood_untruncated(data, x, params)?);
            }
            other => unreachable!("unknown op {other}"),
        }
        Ok(())
    };
    run()?; // warm caches and the thread pool before measuring
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t0 = Instant::now();
        run()?;
        times.push(t0.elapsed().as_secs_f64());
    }
    let mean = times.iter().sum::<f64>() / repeats as f64;
    let sd = if repeats > 1 {
        (times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (repeats - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok((mean, sd))
}

/// Times likelihood, gradient, and truncation-ablated likelihood for each
/// engine on synthetic data, reporting speedups against the serial engine.
/// Engines that cannot start on this host get error rows, not an abort.
pub fn cmd_benchmark(args: &BenchmarkArgs) -> Result<String> {
    if args.sizes.is_empty() || args.sizes.iter().any(|&n| n < 2) {
        return Err(Error::invalid_argument("sizes must be given and at least 2"));
    }
    if args.dims.is_empty() || args.dims.iter().any(|&d| d < 1) {
        return Err(Error::invalid_argument("dims must be given and at least 1"));
    }
    if args.repeats < 1 {
        return Err(Error::invalid_argument("repeats must be at least 1"));
    }
    if args.engines.is_empty() {
        return Err(Error::invalid_argument("at least one engine spec is required"));
    }
    let device = parse_device(&args.device)?;

    // serial is the speedup baseline; measure it even when not requested
    let mut specs: Vec<String> = Vec::new();
    if !args.engines.iter().any(|s| s == "serial") {
        specs.push("serial".to_string());
    }
    specs.extend(args.engines.iter().cloned());

    let params = MdsParams::new(1.0)?;
    let cores = host_cores();
    let tile_label = args
        .tile_size
        .map(|t| t.to_string())
        .unwrap_or_else(|| "default".to_string());
    let device_label = args.device.clone();

    let mut rows: Vec<BenchmarkRow> = Vec::new();
    for &n in &args.sizes {
        for &d in &args.dims {
            let (data, x) = synthetic_instance(n, d, mix_seed(args.seed, n as u64, d as u64));
            let mut serial_means: Vec<(String, f64)> = Vec::new();
            for spec in &specs {
                let row_base = |engine_cfg: Option<&EngineConfig>| BenchmarkRow {
                    n,
                    d,
                    engine: spec.clone(),
                    threads: engine_cfg.map(|c| c.thread_count).unwrap_or(0),
                    lane_width: args.lane_width,
                    tile_size: tile_label.clone(),
                    device: device_label.clone(),
                    op: String::new(),
                    repeats: args.repeats,
                    host_cores: cores,
                    mean_seconds: None,
                    sd_seconds: None,
                    speedup_vs_serial: None,
                    status: "ok".to_string(),
                };
                let engine_cfg = match parse_engine_spec(spec, args.lane_width, args.tile_size, device)
                {
                    Ok(cfg) => cfg,
                    Err(e) => {
                        for op in BENCH_OPS {
                            let mut row = row_base(None);
                            row.op = op.to_string();
                            row.status = e.to_string();
                            rows.push(row);
                        }
                        continue;
                    }
                };
                match Engine::new(engine_cfg) {
                    Ok(engine) => {
                        for op in BENCH_OPS {
                            let (mean, sd) =
                                time_op(&engine, op, &data, &x, &params, args.repeats)?;
                            let mut row = row_base(Some(&engine_cfg));
                            row.op = op.to_string();
                            row.mean_seconds = Some(mean);
                            row.sd_seconds = Some(sd);
                            if engine_cfg.backend == Backend::Serial {
                                serial_means.push((op.to_string(), mean));
                                row.speedup_vs_serial = Some(1.0);
                            } else {
                                row.speedup_vs_serial = serial_means
                                    .iter()
                                    .find(|(name, _)| name == op)
                                    .map(|(_, serial)| serial / mean);
                            }
                            rows.push(row);
                        }
                    }
                    Err(e) => {
                        for op in BENCH_OPS {
                            let mut row = row_base(Some(&engine_cfg));
                            row.op = op.to_string();
                            row.status = e.to_string();
                            rows.push(row);
                        }
                    }
                }
            }
        }
    }

    if let Some(parent) = args.output.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    write_benchmark_csv(&args.output, &rows)?;
    Ok(format!(
        "benchmarked {} configurations x {} sizes x {} dims ({} rows); wrote {}",
        specs.len(),
        args.sizes.len(),
        args.dims.len(),
        rows.len(),
        args.output.display()
    ))
}

pub struct EffectiveDistanceArgs {
    pub edges: PathBuf,
    pub groups: Option<PathBuf>,
    pub output: PathBuf,
}

/// Builds the travel network from an edge list, computes symmetrized
/// shortest-path effective distances, optionally collapses nodes to groups,
/// and writes a standard distance matrix.
pub fn cmd_effective_distance(args: &EffectiveDistanceArgs) -> Result<String> {
    let edges = read_edges_csv(&args.edges)?;
    let network = TravelNetwork::from_labeled_edges(&edges)?;
    let distances = effective_distance(&network)?;

    let (labels, data) = match &args.groups {
        None => (network.labels().to_vec(), distances),
        Some(path) => {
            let rows = read_groups_csv(path)?;
            let mut group_labels: Vec<String> = Vec::new();
            let mut assignment = vec![usize::MAX; network.n_nodes()];
            for (node, group) in &rows {
                let idx = network.node_index(node).ok_or_else(|| {
                    Error::invalid_input(format!(
                        "groups file names node {node:?} which is not in the network"
                    ))
                })?;
                if assignment[idx] != usize::MAX {
                    return Err(Error::invalid_input(format!(
                        "node {node:?} is assigned to more than one group"
                    )));
                }
                let g = match group_labels.iter().position(|l| l == group) {
                    Some(g) => g,
                    None => {
                        group_labels.push(group.clone());
                        group_labels.len() - 1
                    }
                };
                assignment[idx] = g;
            }
            if let Some(missing) = assignment.iter().position(|&g| g == usize::MAX) {
                return Err(Error::invalid_input(format!(
                    "node {:?} has no group assignment",
                    network.labels()[missing]
                )));
            }
            let grouped = aggregate_to_groups(&distances, &assignment, group_labels.len())?;
            (group_labels, grouped)
        }
    };

    if let Some(parent) = args.output.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    write_distance_csv(&args.output, &labels, &data)?;
    Ok(format!(
        "effective distances for {} items ({} observed pairs); wrote {}",
        data.n(),
        data.n_observed(),
        args.output.display()
    ))
}
