//! Random generators, error sweeps and the Monte Carlo verification drivers.
//!
//! Every driver is a pure function of its seed: trial `t` runs under
//! `trial_seed(seed, t)` and results are assembled in trial order.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{
    bennett_tail, expectation_bound_a, expectation_bound_b, gaussian_slice_bound,
    theorem2_verify, BoundReport,
};
use crate::error::{invalid, Error, Result};
use crate::io::fmt_f64;
use crate::rng::{keyed_normal, keyed_u64, splitmix64, trial_seed, unit_f64, SplitMix64};
use crate::sparsify::{compute_thresholds, sparsify, EntryClass};
use crate::spectral::{
    build_epsilon_net, estimate_norm, net_upper_bound, spectral_norm_tensor_hopm, IterOptions,
    NormProxy, ProxyOptions,
};
use crate::tensor::{norm2, ravel, unravel_into, DenseTensor, MultiIndex};

/// Largest tensor a generator will allocate.
pub const MAX_GENERATED_ENTRIES: usize = 1 << 25;
const NOISE_TAG: u64 = 0x006e_6f69_7365;
const VECTOR_TAG: u64 = 0x7665_6374_6f72;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    Gaussian,
    Rademacher,
    LowRankPlusNoise { rank: usize, sigma: f64 },
    PowerLaw { exponent: f64 },
}

impl GeneratorKind {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorKind::Gaussian => "gaussian",
            GeneratorKind::Rademacher => "rademacher",
            GeneratorKind::LowRankPlusNoise { .. } => "low_rank_plus_noise",
            GeneratorKind::PowerLaw { .. } => "power_law",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, n: usize, d: usize, seed: u64) -> Self {
        Self { kind, n, d, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid("n", format!("must be at least 2, got {}", self.n)));
        }
        if self.d < 2 {
            return Err(invalid("d", format!("must be at least 2, got {}", self.d)));
        }
        let len = (self.n as u128).checked_pow(self.d as u32);
        if len.is_none_or(|l| l > MAX_GENERATED_ENTRIES as u128) {
            return Err(invalid(
                "n/d",
                format!("{}^{} entries exceeds {MAX_GENERATED_ENTRIES}", self.n, self.d),
            ));
        }
        match self.kind {
            GeneratorKind::LowRankPlusNoise { rank, sigma } => {
                if rank == 0 {
                    return Err(invalid("rank", "must be at least 1"));
                }
                if !(sigma >= 0.0) || !sigma.is_finite() {
                    return Err(invalid("sigma", format!("must be non-negative, got {sigma}")));
                }
            }
            GeneratorKind::PowerLaw { exponent } => {
                if !(exponent >= 0.0) || !exponent.is_finite() {
                    return Err(invalid(
                        "exponent",
                        format!("must be non-negative, got {exponent}"),
                    ));
                }
            }
            GeneratorKind::Gaussian | GeneratorKind::Rademacher => {}
        }
        Ok(())
    }
}

fn rademacher_sign(seed: u64, flat: usize) -> f64 {
    if keyed_u64(seed, &[flat]) & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Deterministic in `spec.seed`. Gaussian and Rademacher entries are keyed
/// by flat offset, so any entry can be regenerated on its own.
pub fn gen_random_tensor(spec: &GeneratorSpec) -> Result<DenseTensor> {
    spec.validate()?;
    let dims = vec![spec.n; spec.d];
    let len = spec.n.pow(spec.d as u32);
    let seed = spec.seed;
    let values: Vec<f64> = match spec.kind {
        GeneratorKind::Gaussian => (0..len).into_par_iter().map(|f| keyed_normal(seed, f)).collect(),
        GeneratorKind::Rademacher => (0..len).into_par_iter().map(|f| rademacher_sign(seed, f)).collect(),
        GeneratorKind::LowRankPlusNoise { rank, sigma } => {
            let mut g = SplitMix64::new(seed);
            let mut values = vec![0.0; len];
            for _ in 0..rank {
                let factors: Vec<Vec<f64>> = (0..spec.d).map(|_| g.unit_vector(spec.n)).collect();
                let refs: Vec<&[f64]> = factors.iter().map(|v| v.as_slice()).collect();
                let outer = DenseTensor::outer(&refs)?;
                values.iter_mut().zip(outer.values()).for_each(|(v, o)| *v += o);
            }
            if sigma > 0.0 {
                let noise_seed = splitmix64(seed ^ NOISE_TAG);
                values
                    .par_iter_mut()
                    .enumerate()
                    .for_each(|(f, v)| *v += sigma * keyed_normal(noise_seed, f));
            }
            values
        }
        GeneratorKind::PowerLaw { exponent } => {
            let mut g = SplitMix64::new(seed);
            let mut perm: Vec<usize> = (0..len).collect();
            for i in (1..len).rev() {
                let j = g.next_below(i as u64 + 1) as usize;
                perm.swap(i, j);
            }
            let mut values = vec![0.0; len];
            for (rank, &pos) in perm.iter().enumerate() {
                let sign = if g.next_u64() & 1 == 1 { 1.0 } else { -1.0 };
                values[pos] = sign * ((rank + 1) as f64).powf(-exponent);
            }
            values
        }
    };
    DenseTensor::new(dims, values)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub s: f64,
    pub trial: usize,
    /// `‖A − Ã‖₂ / ‖A‖₂` under the sweep's norm proxy.
    pub rel_error: f64,
    pub nnz: usize,
    pub expected_nnz: f64,
    pub seed: u64,
    pub norm_proxy: NormProxy,
}

pub const SWEEP_CSV_HEADER: &str = "s,trial,rel_error,nnz,expected_nnz,seed,norm_proxy";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_f64(r.s),
            r.trial,
            fmt_f64(r.rel_error),
            r.nnz,
            fmt_f64(r.expected_nnz),
            r.seed,
            r.norm_proxy
        ));
    }
    out
}

fn proxy_norm(t: &DenseTensor, proxy: &ProxyOptions) -> Result<f64> {
    if t.values().iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    Ok(estimate_norm(t, proxy)?.value)
}

/// Sketches `t` for every `(s, trial)` pair and measures the relative
/// spectral error. Rows come out in `(s, trial)` order.
pub fn error_sweep(
    t: &DenseTensor,
    s_values: &[f64],
    trials: usize,
    seed: u64,
    proxy: &ProxyOptions,
) -> Result<Vec<SweepRow>> {
    t.require_cubic()?;
    proxy.check_order(t.order())?;
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    let base = proxy_norm(t, &proxy.with_seed(seed))?;
    if base == 0.0 {
        return Err(Error::ZeroTensor);
    }
    let mut rows = Vec::with_capacity(s_values.len() * trials);
    for &s in s_values {
        let batch: Vec<SweepRow> = (0..trials)
            .into_par_iter()
            .map(|trial| {
                let ts = trial_seed(seed, trial as u64);
                let sk = sparsify(t, s, ts)?;
                let mut diff = t.values().to_vec();
                for (idx, v) in sk.sketch.iter() {
                    diff[ravel(idx, t.dims())] -= v;
                }
                let diff = DenseTensor::new(t.dims().to_vec(), diff)?;
                Ok(SweepRow {
                    s,
                    trial,
                    rel_error: proxy_norm(&diff, &proxy.with_seed(ts))? / base,
                    nnz: sk.sketch.nnz(),
                    expected_nnz: sk.expected_nnz,
                    seed: ts,
                    norm_proxy: proxy.proxy,
                })
            })
            .collect::<Result<_>>()?;
        rows.extend(batch);
    }
    Ok(rows)
}

/// Median of a non-empty sample; mean of the two central values for even
/// sizes.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        (v[k / 2 - 1] + v[k / 2]) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZScoreRow {
    pub index: MultiIndex,
    pub value: f64,
    pub p: f64,
    pub mean: f64,
    pub z: f64,
}

/// Per middle-band entry, `z = (mean(Ã) − A) / SE` over `trials` sketches.
/// Entries outside the middle band never appear.
pub fn verify_unbiasedness(t: &DenseTensor, s: f64, trials: usize, seed: u64) -> Result<Vec<ZScoreRow>> {
    let n = t.require_cubic()?;
    if trials < 2 {
        return Err(invalid("trials", "need at least 2 for a standard error"));
    }
    let th = compute_thresholds(t.frobenius_sq(), s, n, t.order())?;
    let mut idx = vec![0; t.order()];
    let middle: Vec<(MultiIndex, f64, f64)> = t
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &a)| a != 0.0)
        .filter_map(|(flat, &a)| match th.classify(a) {
            EntryClass::Middle { p } => {
                unravel_into(flat, t.dims(), &mut idx);
                Some((idx.clone(), a, p))
            }
            _ => None,
        })
        .collect();
    if middle.is_empty() {
        return Ok(Vec::new());
    }
    let mut sum = vec![0.0; middle.len()];
    let mut sum_sq = vec![0.0; middle.len()];
    for trial in 0..trials {
        let sk = sparsify(t, s, trial_seed(seed, trial as u64))?;
        for (k, (index, _, _)) in middle.iter().enumerate() {
            let v = sk.sketch.get(index);
            sum[k] += v;
            sum_sq[k] += v * v;
        }
    }
    let tf = trials as f64;
    Ok(middle
        .into_iter()
        .enumerate()
        .map(|(k, (index, value, p))| {
            let mean = sum[k] / tf;
            let var = ((sum_sq[k] - tf * mean * mean) / (tf - 1.0)).max(0.0);
            let se = (var / tf).sqrt();
            ZScoreRow {
                index,
                value,
                p,
                mean,
                z: (mean - value) / se,
            }
        })
        .collect())
}

/// Empirical frequency against a bound, passing when
/// `empirical ≤ bound + 3·SE`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCheck {
    pub t: f64,
    pub bound: f64,
    pub empirical: f64,
    pub se: f64,
    pub pass: bool,
}

impl TailCheck {
    fn new(t: f64, bound: f64, empirical: f64, se: f64) -> Self {
        Self {
            t,
            bound,
            empirical,
            se,
            pass: empirical <= bound + 3.0 * se,
        }
    }
}

/// Tail of a sum of `n_vars` centered Bernoulli(½) variables (`σ² = n/4`)
/// against `e^{−t/2}`.
pub fn verify_bennett(n_vars: usize, t_grid: &[f64], trials: usize, seed: u64) -> Result<Vec<TailCheck>> {
    if n_vars == 0 {
        return Err(invalid("n_vars", "must be at least 1"));
    }
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    let sigma_sq = n_vars as f64 / 4.0;
    let bounds = t_grid
        .iter()
        .map(|&t| bennett_tail(sigma_sq, t))
        .collect::<Result<Vec<f64>>>()?;
    let words = n_vars.div_ceil(64);
    let sums: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut ones = 0u32;
            for w in 0..words {
                let bits = (n_vars - 64 * w).min(64);
                let mut u = keyed_u64(seed, &[trial, w]);
                if bits < 64 {
                    u &= (1u64 << bits) - 1;
                }
                ones += u.count_ones();
            }
            ones as f64 - n_vars as f64 / 2.0
        })
        .collect();
    let tf = trials as f64;
    Ok(t_grid
        .iter()
        .zip(bounds)
        .map(|(&t, bound)| {
            let hits = sums.iter().filter(|&&x| x > t).count() as f64;
            let p = hits / tf;
            TailCheck::new(t, bound, p, (p * (1.0 - p) / tf).sqrt())
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentPart {
    /// `X = a + b·E`, `P(X ≥ a + tb) = e^{−t}`.
    A,
    /// `X = a + b·√E`, `P(X ≥ a + tb) = e^{−t²}`.
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentCheck {
    pub part: MomentPart,
    pub a: f64,
    pub b: f64,
    pub q: f64,
    pub bound: f64,
    pub empirical: f64,
    pub se: f64,
    pub pass: bool,
}

/// Monte Carlo `E X^q` for exponential-tail oracles against the moment
/// bounds with `h = 0`. One stream of `Exp(1)` draws is shared by the grid.
pub fn verify_moment_bounds(
    part: MomentPart,
    ab_grid: &[f64],
    q_grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<MomentCheck>> {
    if samples < 2 {
        return Err(invalid("samples", "need at least 2"));
    }
    let mut cells = Vec::new();
    for &a in ab_grid {
        for &b in ab_grid {
            for &q in q_grid {
                let bound = match part {
                    MomentPart::A => expectation_bound_a(a, b, 0.0, q)?,
                    MomentPart::B => expectation_bound_b(a, b, 0.0, q)?,
                };
                cells.push((a, b, q, bound));
            }
        }
    }
    const BLOCK: usize = 1 << 14;
    let blocks = samples.div_ceil(BLOCK);
    let partial: Vec<Vec<(f64, f64)>> = (0..blocks)
        .into_par_iter()
        .map(|blk| {
            let mut acc = vec![(0.0, 0.0); cells.len()];
            for i in blk * BLOCK..((blk + 1) * BLOCK).min(samples) {
                let e = -(1.0 - unit_f64(keyed_u64(seed, &[i]))).ln();
                let shape = match part {
                    MomentPart::A => e,
                    MomentPart::B => e.sqrt(),
                };
                for (c, &(a, b, q, _)) in acc.iter_mut().zip(&cells) {
                    let xq = (a + b * shape).powf(q);
                    c.0 += xq;
                    c.1 += xq * xq;
                }
            }
            acc
        })
        .collect();
    let nf = samples as f64;
    Ok(cells
        .iter()
        .enumerate()
        .map(|(k, &(a, b, q, bound))| {
            let (s, s2) = partial
                .iter()
                .fold((0.0, 0.0), |(s, s2), p| (s + p[k].0, s2 + p[k].1));
            let mean = s / nf;
            let var = ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
            let se = (var / nf).sqrt();
            MomentCheck {
                part,
                a,
                b,
                q,
                bound,
                empirical: mean,
                se,
                pass: mean <= bound + 3.0 * se,
            }
        })
        .collect())
}

/// Per seeded `(T, x, y)` instance on `n × n × n` Gaussian tensors: mean of
/// `‖H ×₁ x ×₂ y‖₂` over `draws` Gaussian masks `H = g ∘ T` against the
/// slice bound.
pub fn verify_slice_bound(n: usize, instances: usize, draws: usize, seed: u64) -> Result<Vec<TailCheck>> {
    if draws < 2 {
        return Err(invalid("draws", "need at least 2"));
    }
    (0..instances)
        .map(|i| {
            let is = trial_seed(seed, i as u64);
            let t = gen_random_tensor(&GeneratorSpec::new(GeneratorKind::Gaussian, n, 3, is))?;
            let mut g = SplitMix64::new(splitmix64(is ^ VECTOR_TAG));
            let (x, y) = (g.unit_vector(n), g.unit_vector(n));
            let bound = gaussian_slice_bound(&t, (0, 1))?;
            // w[i,j,k] = T[i,j,k]·x_i·y_j, so the residual is Σ_{ij} g∘w.
            let w: Vec<f64> = t
                .values()
                .iter()
                .enumerate()
                .map(|(f, &a)| a * x[f / (n * n)] * y[(f / n) % n])
                .collect();
            let norms: Vec<f64> = (0..draws)
                .into_par_iter()
                .map(|draw| {
                    let ds = trial_seed(is, draw as u64);
                    let mut r = vec![0.0; n];
                    for (f, &wf) in w.iter().enumerate() {
                        r[f % n] += keyed_normal(ds, f) * wf;
                    }
                    norm2(&r)
                })
                .collect();
            let df = draws as f64;
            let mean = norms.iter().sum::<f64>() / df;
            let var = norms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (df - 1.0);
            Ok(TailCheck::new(i as f64, bound, mean, (var / df).sqrt()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BracketRow {
    pub instance: usize,
    pub hopm: f64,
    pub net_upper: f64,
    pub pass: bool,
}

/// HOPM lower bound against the ε-net upper bound on seeded Gaussian
/// `n^d` tensors.
pub fn verify_net_bracket(
    n: usize,
    d: usize,
    m: usize,
    instances: usize,
    seed: u64,
    hopm: &IterOptions,
) -> Result<Vec<BracketRow>> {
    let net = build_epsilon_net(n, m)?;
    (0..instances)
        .map(|i| {
            let is = trial_seed(seed, i as u64);
            let t = gen_random_tensor(&GeneratorSpec::new(GeneratorKind::Gaussian, n, d, is))?;
            let lo = spectral_norm_tensor_hopm(&t, &IterOptions { seed: is, ..*hopm })?.value;
            let hi = net_upper_bound(&t, &net)?.value;
            Ok(BracketRow {
                instance: i,
                hopm: lo,
                net_upper: hi,
                pass: lo <= hi,
            })
        })
        .collect()
}

/// Random-tensor family for a norm-bound run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormBoundFamily {
    /// Independent ±1 entries, mean zero.
    Rademacher,
    /// Independent standard normals, mean zero.
    Gaussian,
    /// The same Gaussian draw every trial, used as its own mean.
    Fixed,
}

impl fmt::Display for NormBoundFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormBoundFamily::Rademacher => "rademacher",
            NormBoundFamily::Gaussian => "gaussian",
            NormBoundFamily::Fixed => "fixed",
        })
    }
}

impl FromStr for NormBoundFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rademacher" => Ok(NormBoundFamily::Rademacher),
            "gaussian" => Ok(NormBoundFamily::Gaussian),
            "fixed" => Ok(NormBoundFamily::Fixed),
            other => Err(invalid("family", format!("unknown family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormBoundConfig {
    pub family: NormBoundFamily,
    pub n: usize,
    pub d: usize,
    /// Defaults to `ln n` (at least 1).
    pub q: Option<f64>,
    pub trials: usize,
    pub proxy: NormProxy,
}

impl NormBoundConfig {
    pub fn new(family: NormBoundFamily, n: usize, d: usize, trials: usize) -> Self {
        Self {
            family,
            n,
            d,
            q: None,
            trials,
            proxy: NormProxy::default_for_order(d),
        }
    }

    pub fn q(&self) -> f64 {
        self.q.unwrap_or_else(|| (self.n as f64).ln().max(1.0))
    }
}

pub fn run_norm_bound(config: &NormBoundConfig, seed: u64) -> Result<BoundReport> {
    let (n, d) = (config.n, config.d);
    let proxy = ProxyOptions::new(config.proxy, seed);
    let spec = |kind, s| GeneratorSpec::new(kind, n, d, s);
    match config.family {
        NormBoundFamily::Rademacher | NormBoundFamily::Gaussian => {
            let kind = if config.family == NormBoundFamily::Rademacher {
                GeneratorKind::Rademacher
            } else {
                GeneratorKind::Gaussian
            };
            spec(kind, seed).validate()?;
            let mean = DenseTensor::zeros(vec![n; d])?;
            theorem2_verify(|ts| gen_random_tensor(&spec(kind, ts)), &mean, config.q(), config.trials, seed, &proxy)
        }
        NormBoundFamily::Fixed => {
            let fixed = gen_random_tensor(&spec(GeneratorKind::Gaussian, seed))?;
            theorem2_verify(|_| Ok(fixed.clone()), &fixed, config.q(), config.trials, seed, &proxy)
        }
    }
}

/// Runs every config under the same `seed`, in order.
pub fn verify_theorem2_suite(configs: &[NormBoundConfig], seed: u64) -> Result<Vec<BoundReport>> {
    configs.iter().map(|c| run_norm_bound(c, seed)).collect()
}
