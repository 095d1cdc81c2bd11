//! The fused evaluation kernels must not materialize the N x N pair matrix:
//! auxiliary memory per call stays O(N + threads + N*D). A counting global
//! allocator measures every backend on a 4096-item instance and compares
//! against the quadratic footprint the fusion is supposed to avoid.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicU64, Ordering};

struct CountingAlloc;

static ALLOCATED: AtomicU64 = AtomicU64::new(0);

// Counts bytes requested; frees are ignored because the bound is on traffic,
// not residency. Realloc counts the full new size, a safe overcount.
unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        ALLOCATED.fetch_add(layout.size() as u64, Ordering::Relaxed);
        unsafe { System.alloc(layout) }
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        ALLOCATED.fetch_add(layout.size() as u64, Ordering::Relaxed);
        unsafe { System.alloc_zeroed(layout) }
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        ALLOCATED.fetch_add(new_size as u64, Ordering::Relaxed);
        unsafe { System.realloc(ptr, layout, new_size) }
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) }
    }
}

#[global_allocator]
static GLOBAL: CountingAlloc = CountingAlloc;

fn traffic() -> u64 {
    ALLOCATED.load(Ordering::Relaxed)
}

use phylomds::engine::{Backend, DeviceTarget, Engine, EngineConfig};
use phylomds::model::{DissimilarityData, LatentConfiguration, MdsParams, PairMask};

fn build_instance(n: usize, d: usize) -> (DissimilarityData, LatentConfiguration, MdsParams) {
    // splitmix-style generator; no external RNG so the measured region and
    // the setup both stay easy to account for
    let mut state = 0x2545f4914f6cdd1du64;
    let mut next = move || {
        state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64
    };
    let coords: Vec<f64> = (0..n * d).map(|_| 4.0 * next() - 2.0).collect();
    let x = LatentConfiguration::new(n, d, coords).unwrap();
    let mut values = vec![0.0; n * n];
    for i in 1..n {
        for j in 0..i {
            let delta: f64 = x
                .row(i)
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let y = delta + 0.1 * next();
            values[i * n + j] = y;
            values[j * n + i] = y;
        }
    }
    let data = DissimilarityData::new(n, values, PairMask::all_observed(n)).unwrap();
    (data, x, MdsParams::new(0.5).unwrap())
}

#[test]
fn fused_kernels_do_not_allocate_the_pair_matrix() {
    // the counter itself must be live
    let before = traffic();
    let probe = vec![0u8; 1 << 23];
    assert!(traffic() - before >= 1 << 23, "allocator counter is not wired up");
    drop(probe);

    let (n, d) = (4096usize, 3usize);
    let (data, x, params) = build_instance(n, d);

    let quadratic = (n * n * 8) as u64;
    // generous room for the padded coordinate copy, the gradient output,
    // per-thread partials, and reduction bookkeeping
    let linear_budget = (16 * n * d * 8 + (4 << 20)) as u64;
    assert!(
        linear_budget * 10 < quadratic,
        "budget must separate linear from quadratic"
    );

    let threads = 2;
    for backend in [
        Backend::Vectorized,
        Backend::Threaded,
        Backend::ThreadedVectorized,
        Backend::TiledDevice,
    ] {
        let engine = Engine::new(EngineConfig {
            backend,
            thread_count: threads,
            lane_width: 4,
            tile_size_b: None,
            device_target: DeviceTarget::Emulated,
        })
        .unwrap();

        // first call absorbs lazily created scratch and pool structures
        engine.log_likelihood(&data, &x, &params).unwrap();
        engine.gradient(&data, &x, &params).unwrap();

        let start = traffic();
        let ll = engine.log_likelihood(&data, &x, &params).unwrap();
        let used = traffic() - start;
        assert!(ll.is_finite());
        assert!(
            used <= linear_budget,
            "{:?} likelihood allocated {used} bytes, budget {linear_budget}",
            backend
        );

        let start = traffic();
        let grad = engine.gradient(&data, &x, &params).unwrap();
        let used = traffic() - start;
        assert!(grad.row(0)[0].is_finite());
        assert!(
            used <= linear_budget,
            "{:?} gradient allocated {used} bytes, budget {linear_budget}",
            backend
        );
    }
}
