//! Streaming keeps memory proportional to the sketch, not the input.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};

use tensor_sparsify::rng::keyed_normal;
use tensor_sparsify::{sparsify, stream_sparsify, DenseTensor};

struct Counting;

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            let now = LIVE.fetch_add(layout.size(), Ordering::SeqCst) + layout.size();
            PEAK.fetch_max(now, Ordering::SeqCst);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        LIVE.fetch_sub(layout.size(), Ordering::SeqCst);
    }
}

#[global_allocator]
static GLOBAL: Counting = Counting;

const N: usize = 100;

fn entry(flat: usize) -> (Vec<usize>, f64) {
    (vec![flat / (N * N), (flat / N) % N, flat % N], keyed_normal(11, flat))
}

#[test]
fn million_entry_stream_stays_small() {
    let s = 2_000.0;
    let dense_bytes = N * N * N * std::mem::size_of::<f64>();
    let before = LIVE.load(Ordering::SeqCst);
    PEAK.store(before, Ordering::SeqCst);
    let r = stream_sparsify(|| (0..N * N * N).map(entry), &[N, N, N], s, 5).unwrap();
    let peak = PEAK.load(Ordering::SeqCst) - before;
    assert!(r.sketch.nnz() > 0 && (r.sketch.nnz() as f64) < 4.0 * s);
    assert!(peak < dense_bytes / 8, "peak {peak} bytes vs dense {dense_bytes}");

    let dense = DenseTensor::from_fn(vec![N, N, N], |i| keyed_normal(11, (i[0] * N + i[1]) * N + i[2])).unwrap();
    let direct = sparsify(&dense, s, 5).unwrap();
    assert_eq!(direct.sketch, r.sketch);
    assert_eq!(direct.expected_nnz.to_bits(), r.expected_nnz.to_bits());
}
