//! Closed-form quantities: fiber statistics, the sampling budget, tail and
//! moment bounds, and a Monte Carlo check of the random-tensor norm bound.

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::io::fmt_f64;
use crate::rng::trial_seed;
use crate::spectral::{estimate_norm, NormProxy, ProxyOptions};
use crate::tensor::DenseTensor;

pub const MIN_BOUND_TRIALS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaBeta {
    /// Square root of the largest fiber square-sum over all modes.
    pub alpha: f64,
    /// Largest absolute entry.
    pub beta: f64,
    /// Per mode, the largest `Σ_{i_j} A²` over the other indices.
    pub per_mode_max_fiber_sq: Vec<f64>,
}

/// Largest fiber square-sum along `mode`, summing `i_mode` in ascending order.
pub fn max_fiber_sq(t: &DenseTensor, mode: usize) -> Result<f64> {
    let dims = t.dims();
    if mode >= dims.len() {
        return Err(Error::ModeOutOfRange {
            mode,
            order: dims.len(),
        });
    }
    let inner: usize = dims[mode + 1..].iter().product();
    let span = inner * dims[mode];
    let mut sums = vec![0.0; t.len() / dims[mode].max(1)];
    for (flat, &a) in t.values().iter().enumerate() {
        let key = (flat / span) * inner + flat % inner;
        sums[key] += a * a;
    }
    Ok(sums.into_iter().fold(0.0, f64::max))
}

pub fn alpha_beta(t: &DenseTensor) -> Result<AlphaBeta> {
    t.require_cubic()?;
    let per_mode_max_fiber_sq = (0..t.order())
        .map(|j| max_fiber_sq(t, j))
        .collect::<Result<Vec<f64>>>()?;
    let alpha = per_mode_max_fiber_sq.iter().copied().fold(0.0, f64::max).sqrt();
    Ok(AlphaBeta {
        alpha,
        beta: t.max_abs(),
        per_mode_max_fiber_sq,
    })
}

/// `frob² / spectral²`. A spectral value above `frob` means the norm proxy
/// overshot and is only logged.
pub fn stable_rank(frob: f64, spectral: f64) -> Result<f64> {
    if !(spectral > 0.0) || !spectral.is_finite() {
        return Err(invalid("spectral", format!("must be positive, got {spectral}")));
    }
    if !(frob >= 0.0) || !frob.is_finite() {
        return Err(invalid("frob", format!("must be non-negative, got {frob}")));
    }
    if frob < spectral {
        warn!("frobenius norm {frob} is below spectral estimate {spectral}");
    }
    Ok((frob / spectral).powi(2))
}

/// Sampling budget `C · d³ · 8^{2d} · st · n^{d/2} · ln³ n / ε²`.
///
/// Outside `n ≥ 300`, `d ≤ ½ ln n` the value is still returned, with a
/// warning.
pub fn required_s(n: usize, d: usize, st: f64, eps: f64, c: f64) -> Result<f64> {
    if n < 2 {
        return Err(invalid("n", format!("must be at least 2, got {n}")));
    }
    if d < 2 {
        return Err(invalid("d", format!("must be at least 2, got {d}")));
    }
    for (name, v) in [("st", st), ("eps", eps), ("C", c)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(invalid(name, format!("must be positive, got {v}")));
        }
    }
    let (nf, df) = (n as f64, d as f64);
    let ln = nf.ln();
    if n < 300 || df > 0.5 * ln {
        warn!("n={n}, d={d} lies outside n ≥ 300, d ≤ 0.5 ln n");
    }
    Ok(c * df.powi(3) * 8f64.powi(2 * d as i32) * st * nf.powf(df / 2.0) * ln.powi(3) / (eps * eps))
}

/// `e^{−t/2}`, valid for `t ≥ 1.5 σ²`.
pub fn bennett_tail(sigma_sq: f64, t: f64) -> Result<f64> {
    if !(sigma_sq > 0.0) || !sigma_sq.is_finite() {
        return Err(invalid("sigma_sq", format!("must be positive, got {sigma_sq}")));
    }
    if !(t >= 1.5 * sigma_sq) {
        return Err(Error::OutOfRegime(format!(
            "t = {t} is below 1.5·σ² = {}",
            1.5 * sigma_sq
        )));
    }
    Ok((-t / 2.0).exp())
}

fn check_moment_args(a: f64, b: f64, h: f64, q: f64) -> Result<()> {
    for (name, v) in [("a", a), ("b", b), ("h", h)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(invalid(name, format!("must be non-negative, got {v}")));
        }
    }
    if !(q >= 1.0) || !q.is_finite() {
        return Err(invalid("q", format!("must be at least 1, got {q}")));
    }
    Ok(())
}

/// `E X^q` bound from `P(X ≥ a + tb) ≤ e^{−t+h}`: `2(a + bh + bq)^q`.
pub fn expectation_bound_a(a: f64, b: f64, h: f64, q: f64) -> Result<f64> {
    check_moment_args(a, b, h, q)?;
    Ok(2.0 * (a + b * h + b * q).powf(q))
}

/// `E X^q` bound from `P(X ≥ a + tb) ≤ e^{−t²+h}`:
/// `3√q (a + b√h + b√(q/2))^q`.
pub fn expectation_bound_b(a: f64, b: f64, h: f64, q: f64) -> Result<f64> {
    check_moment_args(a, b, h, q)?;
    Ok(3.0 * q.sqrt() * (a + b * h.sqrt() + b * (q / 2.0).sqrt()).powf(q))
}

/// The mode left free when `modes` are contracted in an order-3 tensor.
fn free_mode(t: &DenseTensor, modes: (usize, usize)) -> Result<usize> {
    if t.order() != 3 {
        return Err(Error::InvalidShape(format!(
            "slice bound is defined for order 3, got order {}",
            t.order()
        )));
    }
    t.require_cubic()?;
    let (i, j) = modes;
    for m in [i, j] {
        if m >= 3 {
            return Err(Error::ModeOutOfRange { mode: m, order: 3 });
        }
    }
    if i == j {
        return Err(Error::RepeatedMode(i));
    }
    Ok(3 - i - j)
}

/// `√(max Σ_k A²)` over the indices of the two contracted `modes`; bounds
/// `E_g ‖H ×ᵢ x ×ⱼ y‖₂` for `H = g ∘ A` and unit `x, y`.
pub fn gaussian_slice_bound(t: &DenseTensor, modes: (usize, usize)) -> Result<f64> {
    let free = free_mode(t, modes)?;
    Ok(max_fiber_sq(t, free)?.sqrt())
}

/// Deviation above the mean and its tail probability for the slice norm:
/// `P(‖H ×ᵢ x ×ⱼ y‖ ≥ mean + t√2·β) ≤ e^{−t²}`.
pub fn slice_deviation(beta: f64, t: f64) -> Result<(f64, f64)> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(invalid("t", format!("must be positive, got {t}")));
    }
    if !(beta >= 0.0) {
        return Err(invalid("beta", format!("must be non-negative, got {beta}")));
    }
    Ok((t * std::f64::consts::SQRT_2 * beta, (-t * t).exp()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub n: usize,
    pub d: usize,
    pub q: f64,
    pub trials: usize,
    pub norm_proxy: NormProxy,
    /// `(mean ‖A − Â‖^q)^{1/q}`.
    pub lhs: f64,
    /// Right-hand side with the unknown leading constant set to 1.
    pub rhs_core: f64,
    pub ratio: f64,
    pub seed: u64,
}

pub const BOUND_CSV_HEADER: &str = "n,d,q,trials,norm_proxy,lhs,rhs_core,ratio,seed";

impl BoundReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.n,
            self.d,
            fmt_f64(self.q),
            self.trials,
            self.norm_proxy,
            fmt_f64(self.lhs),
            fmt_f64(self.rhs_core),
            fmt_f64(self.ratio),
            self.seed
        )
    }
}

pub fn bound_csv(reports: &[BoundReport]) -> String {
    let mut out = String::from(BOUND_CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

struct TrialMoments {
    norm_q: f64,
    fiber_q: Vec<f64>,
}

/// Monte Carlo comparison of `(E‖A − Â‖^q)^{1/q}` against
/// `8^d (√(d ln n) + √q) (Σ_j E max_fiber_j (Σ A²)^{q/2})^{1/q}`.
///
/// `generator` maps a per-trial seed to one draw of `A`; `mean` is `Â`.
/// Trials run in parallel and are reduced in trial order.
pub fn theorem2_verify<G>(
    generator: G,
    mean: &DenseTensor,
    q: f64,
    trials: usize,
    seed: u64,
    proxy: &ProxyOptions,
) -> Result<BoundReport>
where
    G: Fn(u64) -> Result<DenseTensor> + Sync,
{
    if trials < MIN_BOUND_TRIALS {
        return Err(Error::TooFewTrials {
            trials,
            min: MIN_BOUND_TRIALS,
        });
    }
    if !(q >= 1.0) || !q.is_finite() {
        return Err(invalid("q", format!("must be at least 1, got {q}")));
    }
    let n = mean.require_cubic()?;
    let d = mean.order();
    proxy.check_order(d)?;
    let per_trial: Vec<TrialMoments> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let ts = trial_seed(seed, trial as u64);
            let a = generator(ts)?;
            if a.dims() != mean.dims() {
                return Err(Error::InvalidShape(format!(
                    "generator produced dims {:?}, mean has {:?}",
                    a.dims(),
                    mean.dims()
                )));
            }
            let diff = a.sub(mean)?;
            let norm = if diff.values().iter().all(|&v| v == 0.0) {
                0.0
            } else {
                estimate_norm(&diff, &proxy.with_seed(ts))?.value
            };
            let fiber_q = alpha_beta(&a)?
                .per_mode_max_fiber_sq
                .into_iter()
                .map(|f| f.powf(q / 2.0))
                .collect();
            Ok(TrialMoments {
                norm_q: norm.powf(q),
                fiber_q,
            })
        })
        .collect::<Result<_>>()?;
    let tf = trials as f64;
    let mut norm_sum = 0.0;
    let mut fiber_sums = vec![0.0; d];
    for m in &per_trial {
        norm_sum += m.norm_q;
        for (s, f) in fiber_sums.iter_mut().zip(&m.fiber_q) {
            *s += f;
        }
    }
    let lhs = (norm_sum / tf).powf(1.0 / q);
    let fiber_term: f64 = fiber_sums.iter().map(|s| s / tf).sum();
    let (nf, df) = (n as f64, d as f64);
    let rhs_core =
        8f64.powi(d as i32) * ((df * nf.ln()).sqrt() + q.sqrt()) * fiber_term.powf(1.0 / q);
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs_core };
    Ok(BoundReport {
        n,
        d,
        q,
        trials,
        norm_proxy: proxy.proxy,
        lhs,
        rhs_core,
        ratio,
        seed,
    })
}
