//! Interchangeable evaluation backends for the likelihood, truncation sum,
//! and gradient.
//!
//! An [`Engine`] is built once from an [`EngineConfig`] and owns whatever
//! worker pool its backend needs; evaluation calls are blocking, internally
//! parallel, and safe to issue from multiple threads on shared read-only
//! inputs. Two engines never share workers. The serial backend delegates to
//! the reference implementations in [`crate::model`], so it is bit-identical
//! to them by construction; the other backends are compared to it under
//! tolerance in tests.

mod buffer;
mod kernels;
mod packet;
mod reduce;

pub use buffer::PaddedLatentBuffer;
pub use packet::{batched_inv_mills, batched_log_phi, LANE_WIDTHS, MAX_LANE_WIDTH};
pub use reduce::tiled_reduction;

use crate::error::{Error, Result};
use crate::model::likelihood::per_pair_constant;
use crate::model::{
    log_likelihood_gradient_serial, log_likelihood_serial, log_likelihood_untruncated_serial,
    truncation_sum_serial, DissimilarityData, GradientMatrix, LatentConfiguration, MdsParams,
    PairMask,
};
use kernels::{gradient_fused, sum_threaded, sum_tiled, sum_vectorized, RowWalk, SumInputs, SumKind};

/// Evaluation strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    /// Single thread, scalar; the reference path.
    Serial,
    /// Single thread, lane-width packets.
    Vectorized,
    /// Thread pool, scalar inner loops.
    Threaded,
    /// Thread pool with packet inner loops.
    ThreadedVectorized,
    /// Device-style B×B tile kernel, emulated on the thread pool.
    TiledDevice,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Serial => "serial",
            Backend::Vectorized => "vectorized",
            Backend::Threaded => "threaded",
            Backend::ThreadedVectorized => "threaded_vectorized",
            Backend::TiledDevice => "tiled_device",
        }
    }

    pub fn parse(name: &str) -> Result<Backend> {
        match name {
            "serial" => Ok(Backend::Serial),
            "vectorized" => Ok(Backend::Vectorized),
            "threaded" => Ok(Backend::Threaded),
            "threaded_vectorized" => Ok(Backend::ThreadedVectorized),
            "tiled_device" => Ok(Backend::TiledDevice),
            other => Err(Error::invalid_argument(format!(
                "unknown backend '{other}' (serial, vectorized, threaded, threaded_vectorized, tiled_device)"
            ))),
        }
    }

    pub fn all() -> [Backend; 5] {
        [
            Backend::Serial,
            Backend::Vectorized,
            Backend::Threaded,
            Backend::ThreadedVectorized,
            Backend::TiledDevice,
        ]
    }
}

/// Where the tiled backend runs. Only emulation on the host thread pool is
/// available in this build; asking for native device dispatch is reported as
/// a missing capability rather than silently falling back.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DeviceTarget {
    #[default]
    Emulated,
    Native,
}

/// Tile edges permitted for the device-style kernel.
pub const TILE_SIZES: [usize; 6] = [8, 16, 32, 64, 128, 256];

/// Default tile edge for likelihood and truncation sums.
pub const DEFAULT_LIKELIHOOD_TILE: usize = 16;

/// Default stride count for gradient row accumulation.
pub const DEFAULT_GRADIENT_TILE: usize = 128;

#[derive(Clone, Copy, Debug)]
pub struct EngineConfig {
    pub backend: Backend,
    pub thread_count: usize,
    pub lane_width: usize,
    /// Tile edge B; `None` picks the per-operation default (16 for sums,
    /// 128 for gradients).
    pub tile_size_b: Option<usize>,
    pub device_target: DeviceTarget,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            backend: Backend::Serial,
            thread_count: 1,
            lane_width: 4,
            tile_size_b: None,
            device_target: DeviceTarget::Emulated,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thread_count < 1 {
            return Err(Error::invalid_argument("thread_count must be at least 1"));
        }
        if !LANE_WIDTHS.contains(&self.lane_width) {
            return Err(Error::invalid_argument(format!(
                "lane_width must be one of {LANE_WIDTHS:?}, got {}",
                self.lane_width
            )));
        }
        if let Some(b) = self.tile_size_b {
            if !TILE_SIZES.contains(&b) {
                return Err(Error::invalid_argument(format!(
                    "tile_size_b must be one of {TILE_SIZES:?}, got {b}"
                )));
            }
        }
        Ok(())
    }

    pub fn likelihood_tile(&self) -> usize {
        self.tile_size_b.unwrap_or(DEFAULT_LIKELIHOOD_TILE)
    }

    pub fn gradient_tile(&self) -> usize {
        self.tile_size_b.unwrap_or(DEFAULT_GRADIENT_TILE)
    }
}

/// A configured evaluation backend with its own worker pool.
pub struct Engine {
    cfg: EngineConfig,
    pool: Option<rayon::ThreadPool>,
}

impl Engine {
    pub fn new(cfg: EngineConfig) -> Result<Engine> {
        cfg.validate()?;
        if cfg.backend == Backend::TiledDevice && cfg.device_target == DeviceTarget::Native {
            return Err(Error::capability(
                "no native tile device is available on this host; use the emulated device target",
            ));
        }
        let pool = match cfg.backend {
            Backend::Threaded | Backend::ThreadedVectorized | Backend::TiledDevice => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(cfg.thread_count)
                    .build()
                    .map_err(|e| Error::capability(format!("cannot start worker pool: {e}")))?;
                Some(pool)
            }
            Backend::Serial | Backend::Vectorized => None,
        };
        Ok(Engine { cfg, pool })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    fn pool(&self) -> &rayon::ThreadPool {
        self.pool
            .as_ref()
            .expect("pooled backend constructed without a pool")
    }

    fn check_dims(&self, data_n: usize, x: &LatentConfiguration) -> Result<()> {
        if data_n != x.n() {
            return Err(Error::invalid_argument(format!(
                "data has {data_n} items but configuration has {} rows",
                x.n()
            )));
        }
        Ok(())
    }

    fn dispatch_sum(&self, kind: SumKind, inp: &SumInputs, buf: &PaddedLatentBuffer) -> f64 {
        match self.cfg.backend {
            Backend::Serial => unreachable!("serial sums delegate to the reference path"),
            Backend::Vectorized => sum_vectorized(kind, inp, buf, self.cfg.lane_width),
            Backend::Threaded => {
                sum_threaded(kind, inp, buf, self.pool(), self.cfg.thread_count, None)
            }
            Backend::ThreadedVectorized => sum_threaded(
                kind,
                inp,
                buf,
                self.pool(),
                self.cfg.thread_count,
                Some(self.cfg.lane_width),
            ),
            Backend::TiledDevice => {
                sum_tiled(kind, inp, buf, self.pool(), self.cfg.likelihood_tile())
            }
        }
    }

    /// Log-likelihood over observed pairs; equal to the serial reference
    /// within reassociation tolerance (bit-identical for the serial backend).
    pub fn log_likelihood(
        &self,
        data: &DissimilarityData,
        x: &LatentConfiguration,
        params: &MdsParams,
    ) -> Result<f64> {
        self.check_dims(data.n(), x)?;
        if self.cfg.backend == Backend::Serial {
            return log_likelihood_serial(data, x, params);
        }
        let inp = SumInputs {
            values: Some(data.values()),
            mask: data.mask(),
            n: data.n(),
            sigma: params.sigma(),
            sigma2: params.sigma2(),
        };
        let buf = PaddedLatentBuffer::new(x, self.cfg.lane_width);
        let sum = self.dispatch_sum(SumKind::Full, &inp, &buf);
        Ok(data.n_observed() as f64 * per_pair_constant(params.sigma2()) - sum)
    }

    /// Likelihood with the truncation term ablated.
    pub fn log_likelihood_untruncated(
        &self,
        data: &DissimilarityData,
        x: &LatentConfiguration,
        params: &MdsParams,
    ) -> Result<f64> {
        self.check_dims(data.n(), x)?;
        if self.cfg.backend == Backend::Serial {
            return log_likelihood_untruncated_serial(data, x, params);
        }
        let inp = SumInputs {
            values: Some(data.values()),
            mask: data.mask(),
            n: data.n(),
            sigma: params.sigma(),
            sigma2: params.sigma2(),
        };
        let buf = PaddedLatentBuffer::new(x, self.cfg.lane_width);
        let sum = self.dispatch_sum(SumKind::Untruncated, &inp, &buf);
        Ok(data.n_observed() as f64 * per_pair_constant(params.sigma2()) - sum)
    }

    /// The truncation term Σ ln Φ(δ/σ) over masked pairs.
    pub fn truncation_sum(
        &self,
        x: &LatentConfiguration,
        params: &MdsParams,
        mask: &PairMask,
    ) -> Result<f64> {
        if mask.n() != x.n() {
            return Err(Error::invalid_argument(format!(
                "mask has {} items but configuration has {} rows",
                mask.n(),
                x.n()
            )));
        }
        if self.cfg.backend == Backend::Serial {
            return truncation_sum_serial(x, params, mask);
        }
        let inp = SumInputs {
            values: None,
            mask,
            n: x.n(),
            sigma: params.sigma(),
            sigma2: params.sigma2(),
        };
        let buf = PaddedLatentBuffer::new(x, self.cfg.lane_width);
        Ok(self.dispatch_sum(SumKind::TruncationOnly, &inp, &buf))
    }

    /// Gradient of the log-likelihood; per-row reductions run independently.
    pub fn gradient(
        &self,
        data: &DissimilarityData,
        x: &LatentConfiguration,
        params: &MdsParams,
    ) -> Result<GradientMatrix> {
        self.check_dims(data.n(), x)?;
        if self.cfg.backend == Backend::Serial {
            return log_likelihood_gradient_serial(data, x, params);
        }
        let inp = SumInputs {
            values: Some(data.values()),
            mask: data.mask(),
            n: data.n(),
            sigma: params.sigma(),
            sigma2: params.sigma2(),
        };
        let buf = PaddedLatentBuffer::new(x, self.cfg.lane_width);
        let grad = match self.cfg.backend {
            Backend::Serial => unreachable!(),
            Backend::Vectorized => gradient_fused(
                &inp,
                &buf,
                x.d(),
                RowWalk::Packets(self.cfg.lane_width),
                None,
            ),
            Backend::Threaded => gradient_fused(
                &inp,
                &buf,
                x.d(),
                RowWalk::Strided(self.cfg.gradient_tile()),
                Some(self.pool()),
            ),
            Backend::ThreadedVectorized => gradient_fused(
                &inp,
                &buf,
                x.d(),
                RowWalk::Packets(self.cfg.lane_width),
                Some(self.pool()),
            ),
            Backend::TiledDevice => gradient_fused(
                &inp,
                &buf,
                x.d(),
                RowWalk::Strided(self.cfg.gradient_tile()),
                Some(self.pool()),
            ),
        };
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn engine(backend: Backend, threads: usize) -> Engine {
        Engine::new(EngineConfig {
            backend,
            thread_count: threads,
            lane_width: 4,
            tile_size_b: None,
            device_target: DeviceTarget::Emulated,
        })
        .unwrap()
    }

    fn random_instance(
        n: usize,
        d: usize,
        observe: f64,
        seed: u64,
    ) -> (DissimilarityData, LatentConfiguration) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let coords: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = LatentConfiguration::new(n, d, coords).unwrap();
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in 0..i {
                if rng.random_range(0.0..1.0) < observe {
                    pairs.push((i, j, rng.random_range(0.05..4.0)));
                }
            }
        }
        let data = DissimilarityData::from_observed_pairs(n, &pairs).unwrap();
        (data, x)
    }

    fn non_serial_backends() -> Vec<Backend> {
        vec![
            Backend::Vectorized,
            Backend::Threaded,
            Backend::ThreadedVectorized,
            Backend::TiledDevice,
        ]
    }

    #[test]
    fn all_backends_match_serial_likelihood_and_truncation() {
        for &(n, d, observe) in &[(2usize, 2usize, 1.0), (17, 3, 0.8), (64, 2, 0.6), (33, 6, 1.0)]
        {
            let (data, x) = random_instance(n, d, observe, 7 + n as u64);
            let params = MdsParams::new(0.9).unwrap();
            let want_ll = log_likelihood_serial(&data, &x, &params).unwrap();
            let want_tr = truncation_sum_serial(&x, &params, data.mask()).unwrap();
            let want_un = log_likelihood_untruncated_serial(&data, &x, &params).unwrap();
            for backend in non_serial_backends() {
                let eng = engine(backend, 4);
                let ll = eng.log_likelihood(&data, &x, &params).unwrap();
                let tr = eng.truncation_sum(&x, &params, data.mask()).unwrap();
                let un = eng.log_likelihood_untruncated(&data, &x, &params).unwrap();
                let tol = 1e-11 * (data.n_observed().max(1) as f64);
                assert!(
                    (ll - want_ll).abs() <= tol * want_ll.abs().max(1.0),
                    "{}: ll {ll} vs serial {want_ll} (n={n})",
                    backend.name()
                );
                assert!(
                    (tr - want_tr).abs() <= tol * want_tr.abs().max(1.0),
                    "{}: trunc {tr} vs serial {want_tr} (n={n})",
                    backend.name()
                );
                assert!(
                    (un - want_un).abs() <= tol * want_un.abs().max(1.0),
                    "{}: untrunc {un} vs serial {want_un} (n={n})",
                    backend.name()
                );
                assert!(
                    ((ll + want_tr) - un).abs() <= 1e-9 * un.abs().max(1.0),
                    "{}: ablation identity violated",
                    backend.name()
                );
            }
        }
    }

    #[test]
    fn all_backends_match_serial_gradient_per_row() {
        for &(n, d) in &[(17usize, 2usize), (40, 6), (64, 3)] {
            let (data, x) = random_instance(n, d, 0.85, 100 + n as u64);
            let params = MdsParams::new(1.2).unwrap();
            let want = log_likelihood_gradient_serial(&data, &x, &params).unwrap();
            for backend in non_serial_backends() {
                let eng = engine(backend, 3);
                let got = eng.gradient(&data, &x, &params).unwrap();
                assert_eq!(got.coincident_pairs(), want.coincident_pairs());
                for i in 0..n {
                    let (gr, wr) = (got.row(i), want.row(i));
                    let scale = wr.iter().map(|v| v.abs()).fold(1e-12, f64::max);
                    for k in 0..d {
                        assert!(
                            (gr[k] - wr[k]).abs() <= 1e-9 * scale.max(1.0),
                            "{} row {i} col {k}: {} vs {}",
                            backend.name(),
                            gr[k],
                            wr[k]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn serial_backend_is_bit_identical_to_reference() {
        let (data, x) = random_instance(23, 3, 0.7, 5);
        let params = MdsParams::new(0.6).unwrap();
        let eng = engine(Backend::Serial, 1);
        let a = eng.log_likelihood(&data, &x, &params).unwrap();
        let b = log_likelihood_serial(&data, &x, &params).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        let ga = eng.gradient(&data, &x, &params).unwrap();
        let gb = log_likelihood_gradient_serial(&data, &x, &params).unwrap();
        for (va, vb) in ga.values().iter().zip(gb.values()) {
            assert_eq!(va.to_bits(), vb.to_bits());
        }
    }

    #[test]
    fn two_item_instance_is_exact_for_every_backend() {
        let data = DissimilarityData::from_observed_pairs(2, &[(1, 0, 1.4)]).unwrap();
        let x = LatentConfiguration::new(2, 2, vec![0.0, 0.0, 0.9, -0.3]).unwrap();
        let params = MdsParams::new(0.7).unwrap();
        let expected = data.n_observed() as f64 * per_pair_constant(params.sigma2())
            - crate::model::pair_term(1.4, x.distance(0, 1), 0.7).unwrap();
        for backend in Backend::all() {
            let eng = engine(backend, 2);
            let got = eng.log_likelihood(&data, &x, &params).unwrap();
            assert_eq!(got, expected, "{}", backend.name());
        }
    }

    #[test]
    fn deterministic_across_calls_and_engine_instances() {
        let (data, x) = random_instance(48, 3, 0.75, 99);
        let params = MdsParams::new(1.1).unwrap();
        for backend in non_serial_backends() {
            let a = engine(backend, 4);
            let b = engine(backend, 4);
            let la = a.log_likelihood(&data, &x, &params).unwrap();
            assert_eq!(la.to_bits(), a.log_likelihood(&data, &x, &params).unwrap().to_bits());
            assert_eq!(la.to_bits(), b.log_likelihood(&data, &x, &params).unwrap().to_bits());
            let ga = a.gradient(&data, &x, &params).unwrap();
            let gb = b.gradient(&data, &x, &params).unwrap();
            for (va, vb) in ga.values().iter().zip(gb.values()) {
                assert_eq!(va.to_bits(), vb.to_bits(), "{}", backend.name());
            }
        }
    }

    #[test]
    fn lane_widths_and_tile_sizes_all_agree() {
        let (data, x) = random_instance(37, 5, 0.9, 4242);
        let params = MdsParams::new(0.8).unwrap();
        let want = log_likelihood_serial(&data, &x, &params).unwrap();
        for lane in LANE_WIDTHS {
            for backend in [Backend::Vectorized, Backend::ThreadedVectorized] {
                let eng = Engine::new(EngineConfig {
                    backend,
                    thread_count: 2,
                    lane_width: lane,
                    tile_size_b: None,
                    device_target: DeviceTarget::Emulated,
                })
                .unwrap();
                let got = eng.log_likelihood(&data, &x, &params).unwrap();
                assert!(
                    (got - want).abs() <= 1e-10 * want.abs(),
                    "lane {lane} {}: {got} vs {want}",
                    backend.name()
                );
            }
        }
        for tile in TILE_SIZES {
            let eng = Engine::new(EngineConfig {
                backend: Backend::TiledDevice,
                thread_count: 2,
                lane_width: 4,
                tile_size_b: Some(tile),
                device_target: DeviceTarget::Emulated,
            })
            .unwrap();
            let got = eng.log_likelihood(&data, &x, &params).unwrap();
            assert!(
                (got - want).abs() <= 1e-10 * want.abs(),
                "tile {tile}: {got} vs {want}"
            );
            let grad = eng.gradient(&data, &x, &params).unwrap();
            let want_grad = log_likelihood_gradient_serial(&data, &x, &params).unwrap();
            for (a, b) in grad.values().iter().zip(want_grad.values()) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn coincident_pairs_counted_once_per_unordered_pair() {
        let mut coords = vec![0.0; 8];
        coords[4] = 1.0; // row 2 = (1, 0)
        coords[7] = 1.0; // row 3 = (0, 1)
        // rows 0 and 1 coincide; rows 2 and 3 are distinct from everything
        let x = LatentConfiguration::new(4, 2, coords).unwrap();
        let data = DissimilarityData::from_observed_pairs(
            4,
            &[(1, 0, 0.5), (2, 0, 1.0), (3, 2, 1.0), (3, 1, 0.7)],
        )
        .unwrap();
        let params = MdsParams::new(1.0).unwrap();
        for backend in Backend::all() {
            let eng = engine(backend, 2);
            let g = eng.gradient(&data, &x, &params).unwrap();
            assert_eq!(g.coincident_pairs(), 1, "{}", backend.name());
        }
    }

    #[test]
    fn native_device_target_is_a_capability_error() {
        let err = Engine::new(EngineConfig {
            backend: Backend::TiledDevice,
            thread_count: 1,
            lane_width: 4,
            tile_size_b: None,
            device_target: DeviceTarget::Native,
        });
        match err {
            Err(Error::Capability(_)) => {}
            Err(other) => panic!("expected capability error, got {other:?}"),
            Ok(_) => panic!("expected capability error, got an engine"),
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = EngineConfig::default();
        cfg.thread_count = 0;
        assert!(Engine::new(cfg).is_err());
        let mut cfg = EngineConfig::default();
        cfg.lane_width = 3;
        assert!(Engine::new(cfg).is_err());
        let mut cfg = EngineConfig::default();
        cfg.tile_size_b = Some(12);
        assert!(Engine::new(cfg).is_err());
    }

    #[test]
    fn empty_and_single_item_instances() {
        let params = MdsParams::new(1.0).unwrap();
        for backend in Backend::all() {
            let eng = engine(backend, 2);
            let data1 =
                DissimilarityData::new(1, vec![0.0], PairMask::none_observed(1)).unwrap();
            let x1 = LatentConfiguration::zeros(1, 2);
            assert_eq!(eng.log_likelihood(&data1, &x1, &params).unwrap(), 0.0);
            let g = eng.gradient(&data1, &x1, &params).unwrap();
            assert!(g.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn all_false_mask_gives_zero_truncation_for_every_backend() {
        let x = LatentConfiguration::zeros(9, 2);
        let params = MdsParams::new(1.0).unwrap();
        let mask = PairMask::none_observed(9);
        for backend in Backend::all() {
            let eng = engine(backend, 2);
            assert_eq!(eng.truncation_sum(&x, &params, &mask).unwrap(), 0.0);
        }
    }
}
