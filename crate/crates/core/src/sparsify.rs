//! Element-wise sparsification: drop tiny entries, keep large ones verbatim,
//! and sample the rest with probability proportional to their square.

use rayon::prelude::*;
use serde::Serialize;

use crate::accum::ExactSum;
use crate::error::{invalid, Error, Result};
use crate::rng::keyed_uniform;
use crate::tensor::{ravel, unravel_into, DenseTensor, MultiIndex, SparseTensor};

const CHUNK: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    /// Squared magnitudes at or below this are dropped.
    pub zero_threshold: f64,
    /// Squared magnitudes at or above this are kept verbatim.
    pub keep_threshold: f64,
    pub frob_sq: f64,
    pub s: f64,
}

/// Thresholds for an `n × … × n` order-`d` input.
///
/// `keep = frob_sq / s` and `zero = (ln² n / n^{d/2}) · keep`. For `d = 1`
/// the zero threshold can exceed the keep threshold; the drop rule is then
/// applied first.
pub fn compute_thresholds(frob_sq: f64, s: f64, n: usize, d: usize) -> Result<Thresholds> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(invalid("s", format!("must be positive and finite, got {s}")));
    }
    if frob_sq == 0.0 {
        return Err(Error::ZeroTensor);
    }
    if !(frob_sq > 0.0) || !frob_sq.is_finite() {
        return Err(invalid("frob_sq", format!("must be positive and finite, got {frob_sq}")));
    }
    if n < 2 {
        return Err(invalid("n", "mode length must be at least 2"));
    }
    if d < 1 {
        return Err(invalid("d", "order must be at least 1"));
    }
    let nf = n as f64;
    let ln = nf.ln();
    let keep = frob_sq / s;
    let zero = ln * ln / nf.powf(d as f64 / 2.0) * keep;
    Ok(Thresholds {
        zero_threshold: zero,
        keep_threshold: keep,
        frob_sq,
        s,
    })
}

impl Thresholds {
    /// Keep probability for a middle-band entry.
    pub fn probability(&self, a: f64) -> f64 {
        self.s * (a * a) / self.frob_sq
    }

    pub fn classify(&self, a: f64) -> EntryClass {
        let a2 = a * a;
        if a2 <= self.zero_threshold {
            EntryClass::Small
        } else if a2 >= self.keep_threshold {
            EntryClass::Large
        } else {
            EntryClass::Middle {
                p: self.probability(a),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EntryClass {
    Small,
    Large,
    Middle { p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Decision {
    Zeroed,
    Large,
    Kept { value: f64, p: f64 },
    Dropped { p: f64 },
}

fn decide(th: &Thresholds, seed: u64, index: &[usize], a: f64) -> Decision {
    match th.classify(a) {
        EntryClass::Small => Decision::Zeroed,
        EntryClass::Large => Decision::Large,
        EntryClass::Middle { p } => {
            if keyed_uniform(seed, index) < p {
                Decision::Kept { value: a / p, p }
            } else {
                Decision::Dropped { p }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SketchCounts {
    pub kept_large: usize,
    pub zeroed_small: usize,
    pub sampled_kept: usize,
    pub sampled_dropped: usize,
}

impl SketchCounts {
    pub fn total(&self) -> usize {
        self.kept_large + self.zeroed_small + self.sampled_kept + self.sampled_dropped
    }

    fn merge(&mut self, o: &SketchCounts) {
        self.kept_large += o.kept_large;
        self.zeroed_small += o.zeroed_small;
        self.sampled_kept += o.sampled_kept;
        self.sampled_dropped += o.sampled_dropped;
    }
}

#[derive(Default)]
struct Tally {
    counts: SketchCounts,
    prob_sum: ExactSum,
    kept: Vec<(usize, f64)>,
}

impl Tally {
    fn record(&mut self, flat: usize, a: f64, decision: Decision) {
        match decision {
            Decision::Zeroed => self.counts.zeroed_small += 1,
            Decision::Large => {
                self.counts.kept_large += 1;
                self.kept.push((flat, a));
            }
            Decision::Kept { value, p } => {
                self.counts.sampled_kept += 1;
                self.prob_sum.add(p);
                self.kept.push((flat, value));
            }
            Decision::Dropped { p } => {
                self.counts.sampled_dropped += 1;
                self.prob_sum.add(p);
            }
        }
    }

    fn merge(&mut self, mut o: Tally) {
        self.counts.merge(&o.counts);
        self.prob_sum.merge(&o.prob_sum);
        self.kept.append(&mut o.kept);
    }

    fn expected_nnz(&self) -> f64 {
        self.counts.kept_large as f64 + self.prob_sum.value()
    }
}

/// Full record of one sparsification run.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchResult {
    pub sketch: SparseTensor,
    pub thresholds: Thresholds,
    pub counts: SketchCounts,
    pub seed: u64,
    /// `kept_large + Σ p` over the middle band.
    pub expected_nnz: f64,
}

/// Machine-readable summary of a run.
#[derive(Debug, Clone, Serialize)]
pub struct SketchStats {
    pub kept_large: usize,
    pub zeroed_small: usize,
    pub sampled_kept: usize,
    pub sampled_dropped: usize,
    pub keep_threshold: f64,
    pub zero_threshold: f64,
    pub expected_nnz: f64,
    pub seed: u64,
}

impl SketchResult {
    pub fn stats(&self) -> SketchStats {
        SketchStats {
            kept_large: self.counts.kept_large,
            zeroed_small: self.counts.zeroed_small,
            sampled_kept: self.counts.sampled_kept,
            sampled_dropped: self.counts.sampled_dropped,
            keep_threshold: self.thresholds.keep_threshold,
            zero_threshold: self.thresholds.zero_threshold,
            expected_nnz: self.expected_nnz,
            seed: self.seed,
        }
    }
}

fn prepare(t: &DenseTensor, s: f64) -> Result<Thresholds> {
    let n = t.require_cubic()?;
    compute_thresholds(t.frobenius_sq(), s, n, t.order())
}

fn tally_dense(t: &DenseTensor, th: &Thresholds, seed: Option<u64>) -> Tally {
    let dims = t.dims();
    let parts: Vec<Tally> = t
        .values()
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut tally = Tally::default();
            let mut idx = vec![0; dims.len()];
            let base = c * CHUNK;
            for (off, &a) in chunk.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let flat = base + off;
                let decision = match seed {
                    Some(seed) => {
                        unravel_into(flat, dims, &mut idx);
                        decide(th, seed, &idx, a)
                    }
                    None => match th.classify(a) {
                        EntryClass::Small => Decision::Zeroed,
                        EntryClass::Large => Decision::Large,
                        EntryClass::Middle { p } => Decision::Dropped { p },
                    },
                };
                tally.record(flat, a, decision);
            }
            tally
        })
        .collect();
    let mut total = Tally::default();
    for p in parts {
        total.merge(p);
    }
    total
}

fn finish(dims: Vec<usize>, tally: Tally, th: Thresholds, seed: u64) -> Result<SketchResult> {
    let expected_nnz = tally.expected_nnz();
    let mut kept = tally.kept;
    kept.sort_unstable_by_key(|&(flat, _)| flat);
    let mut sketch = SparseTensor::empty(dims.clone())?;
    let mut idx = vec![0; dims.len()];
    for w in kept.windows(2) {
        if w[0].0 == w[1].0 {
            unravel_into(w[0].0, &dims, &mut idx);
            return Err(Error::DuplicateIndex { index: idx });
        }
    }
    for (flat, v) in kept {
        unravel_into(flat, &dims, &mut idx);
        sketch.push_unchecked(&idx, v);
    }
    Ok(SketchResult {
        sketch,
        thresholds: th,
        counts: tally.counts,
        seed,
        expected_nnz,
    })
}

/// Sparsifies a cubic tensor. Output is a pure function of `(t, s, seed)`.
pub fn sparsify(t: &DenseTensor, s: f64, seed: u64) -> Result<SketchResult> {
    let th = prepare(t, s)?;
    let tally = tally_dense(t, &th, Some(seed));
    finish(t.dims().to_vec(), tally, th, seed)
}

/// Expected number of non-zeros in the sketch; never exceeds `2s`.
pub fn expected_nnz(t: &DenseTensor, s: f64) -> Result<f64> {
    let th = prepare(t, s)?;
    Ok(tally_dense(t, &th, None).expected_nnz())
}

/// Two-pass sparsification of an entry stream.
///
/// `stream` is called twice: once to accumulate `‖A‖_F²`, once to classify.
/// Zero values are skipped. Only retained entries are buffered, so memory
/// scales with the sketch, and a duplicate index is detected when it lands
/// in the sketch.
pub fn stream_sparsify<F, I>(stream: F, dims: &[usize], s: f64, seed: u64) -> Result<SketchResult>
where
    F: Fn() -> I,
    I: IntoIterator<Item = (MultiIndex, f64)>,
{
    let n = dims
        .first()
        .copied()
        .ok_or_else(|| Error::InvalidShape("order must be at least 1".into()))?;
    if dims.iter().any(|&d| d != n) {
        return Err(Error::NonCubic(dims.to_vec()));
    }
    SparseTensor::empty(dims.to_vec())?;

    let check = |idx: &[usize], a: f64| -> Result<()> {
        if idx.len() != dims.len() || idx.iter().zip(dims).any(|(i, d)| i >= d) {
            return Err(Error::IndexOutOfRange {
                index: idx.to_vec(),
                dims: dims.to_vec(),
            });
        }
        if !a.is_finite() {
            return Err(invalid("value", format!("non-finite entry at {idx:?}")));
        }
        Ok(())
    };

    let mut frob = ExactSum::new();
    let mut first_pass = 0usize;
    for (idx, a) in stream() {
        check(&idx, a)?;
        if a != 0.0 {
            frob.add(a * a);
            first_pass += 1;
        }
    }
    let th = compute_thresholds(frob.value(), s, n, dims.len())?;

    let mut tally = Tally::default();
    for (idx, a) in stream() {
        check(&idx, a)?;
        if a == 0.0 {
            continue;
        }
        let decision = decide(&th, seed, &idx, a);
        tally.record(ravel(&idx, dims), a, decision);
    }
    if tally.counts.total() != first_pass {
        return Err(invalid(
            "stream",
            format!(
                "second pass saw {} non-zeros, first pass saw {first_pass}",
                tally.counts.total()
            ),
        ));
    }
    finish(dims.to_vec(), tally, th, seed)
}

/// Dyadic partition of the entries by squared magnitude relative to
/// `‖A‖_F² / s`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelBands {
    /// `bands[k - 1]` holds the entries of level `k`, for `k = 1..=levels()`.
    pub bands: Vec<SparseTensor>,
    /// Every entry whose level exceeds `levels()`.
    pub tail: SparseTensor,
    pub s: f64,
    pub frob_sq: f64,
    /// `⌊log₂(n^{d/2} / ln² n)⌋`.
    pub ell: i64,
    /// Level of the smallest non-zero entry, `⌈log₂(frob_sq / (s · min A²))⌉`
    /// (at least 1).
    pub deepest_level: usize,
}

impl LevelBands {
    pub fn levels(&self) -> usize {
        self.bands.len()
    }

    /// Sum of all bands and the tail.
    pub fn reconstruct(&self) -> DenseTensor {
        let mut acc = vec![0.0; self.tail.dims().iter().product()];
        for b in self.bands.iter().chain(std::iter::once(&self.tail)) {
            b.add_into(&mut acc);
        }
        DenseTensor::new(self.tail.dims().to_vec(), acc).expect("dims already validated")
    }
}

/// Level of a squared magnitude: 1 if `a2 ≥ base/2`, else the `k` with
/// `a2 ∈ [2^{-k} base, 2^{-k+1} base)`. Stops counting past `cap`.
fn level_of(a2: f64, base: f64, cap: usize) -> usize {
    let mut threshold = base / 2.0;
    let mut k = 1;
    while a2 < threshold && k <= cap {
        threshold /= 2.0;
        k += 1;
    }
    k
}

pub fn level_decompose(t: &DenseTensor, s: f64) -> Result<LevelBands> {
    let th = prepare(t, s)?;
    let n = t.dims()[0] as f64;
    let d = t.order() as f64;
    let ln = n.ln();
    let ell = (n.powf(d / 2.0) / (ln * ln)).log2().floor() as i64;
    let levels = ell.max(1) as usize;
    let base = th.keep_threshold;

    let dims = t.dims().to_vec();
    let mut bands: Vec<SparseTensor> = (0..levels)
        .map(|_| SparseTensor::empty(dims.clone()))
        .collect::<Result<_>>()?;
    let mut tail = SparseTensor::empty(dims.clone())?;
    let mut idx = vec![0; dims.len()];
    let mut min_sq = f64::INFINITY;
    for (flat, &a) in t.values().iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let a2 = a * a;
        min_sq = min_sq.min(a2);
        unravel_into(flat, &dims, &mut idx);
        let k = level_of(a2, base, levels);
        if k <= levels {
            bands[k - 1].push_unchecked(&idx, a);
        } else {
            tail.push_unchecked(&idx, a);
        }
    }
    let deepest_level = if min_sq > 0.0 {
        level_of(min_sq, base, usize::MAX - 1)
    } else {
        1
    };
    Ok(LevelBands {
        bands,
        tail,
        s,
        frob_sq: th.frob_sq,
        ell,
        deepest_level,
    })
}
