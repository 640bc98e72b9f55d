//! Spectral-norm estimation.
//!
//! * power iteration on `AᵀA` for matrices,
//! * the higher-order power method (HOPM) for tensors, which only ever
//!   certifies a lower bound,
//! * enumeration over a normalized integer-lattice ε-net, which yields an
//!   upper bound `(1/(1−ε))^{d−1} · max ‖A ×₁ x₁ … ×_{d−1} x_{d−1}‖₂`.
//!
//! The net's ε is measured by probing random directions and inflating the
//! worst distance found by 1.25, so the upper bound is heuristic-certified
//! rather than proven.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::rng::{restart_seed, SplitMix64};
use crate::tensor::{dot, norm2, DenseTensor};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_MATRIX_RESTARTS: usize = 16;
pub const DEFAULT_TENSOR_RESTARTS: usize = 64;
pub const DEFAULT_NET_M: usize = 6;

/// Largest lattice `(2m+1)^n` a net may be built from.
pub const NET_LATTICE_BUDGET: u128 = 1_000_000;
/// Largest number of net tuples `net_upper_bound` will enumerate.
pub const NET_TUPLE_BUDGET: u128 = 1_000_000_000;
pub const NET_PROBES: usize = 10_000;
pub const NET_SAFETY: f64 = 1.25;
const NET_PROBE_SEED: u64 = 0x6e65_745f_7072_6f62;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LowerBound,
    UpperBound,
    ConvergedEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    PowerIteration,
    Hopm,
    EpsilonNet,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::LowerBound => "lower_bound",
            Direction::UpperBound => "upper_bound",
            Direction::ConvergedEstimate => "converged_estimate",
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::PowerIteration => "power_iteration",
            Method::Hopm => "hopm",
            Method::EpsilonNet => "epsilon_net",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralEstimate {
    pub value: f64,
    pub direction: Direction,
    pub method: Method,
    pub restarts: usize,
    /// Iterations of the winning restart (tuples enumerated for the net).
    pub iterations: usize,
    /// Relative tolerance for iterative methods, ε for the net.
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterOptions {
    /// Stop once successive objective values differ by at most `tol · value`.
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl IterOptions {
    pub fn matrix(seed: u64) -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            restarts: DEFAULT_MATRIX_RESTARTS,
            seed,
        }
    }

    pub fn tensor(seed: u64) -> Self {
        Self {
            restarts: DEFAULT_TENSOR_RESTARTS,
            ..Self::matrix(seed)
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(invalid("tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(invalid("restarts", "must be at least 1"));
        }
        Ok(())
    }
}

struct RestartOutcome {
    value: f64,
    iterations: usize,
    converged: bool,
}

/// Highest value wins; ties go to the lowest restart index.
fn best_restart(outcomes: Vec<RestartOutcome>) -> RestartOutcome {
    outcomes
        .into_iter()
        .reduce(|best, o| if o.value > best.value { o } else { best })
        .expect("at least one restart")
}

fn power_restart(a: &DenseTensor, opts: &IterOptions, restart: usize) -> RestartOutcome {
    let (m, n) = (a.dims()[0], a.dims()[1]);
    let vals = a.values();
    let mut x = SplitMix64::new(restart_seed(opts.seed, restart)).unit_vector(n);
    let mut y = vec![0.0; m];
    let mut z = vec![0.0; n];
    let mut prev = f64::NAN;
    let mut sigma = 0.0;
    for it in 1..=opts.max_iter {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = dot(&vals[i * n..(i + 1) * n], &x);
        }
        sigma = norm2(&y);
        z.iter_mut().for_each(|v| *v = 0.0);
        for (i, &yi) in y.iter().enumerate() {
            for (zj, aij) in z.iter_mut().zip(&vals[i * n..(i + 1) * n]) {
                *zj += aij * yi;
            }
        }
        let nz = norm2(&z);
        if nz == 0.0 {
            return RestartOutcome {
                value: sigma,
                iterations: it,
                converged: true,
            };
        }
        x.iter_mut().zip(&z).for_each(|(xi, zi)| *xi = zi / nz);
        if (sigma - prev).abs() <= opts.tol * sigma {
            return RestartOutcome {
                value: sigma,
                iterations: it,
                converged: true,
            };
        }
        prev = sigma;
    }
    RestartOutcome {
        value: sigma,
        iterations: opts.max_iter,
        converged: false,
    }
}

/// Largest singular value of a matrix by power iteration on `x ↦ Aᵀ(Ax)`.
///
/// The estimate is flagged `ConvergedEstimate` when the winning restart met
/// the tolerance, otherwise `LowerBound`.
pub fn spectral_norm_matrix(a: &DenseTensor, opts: &IterOptions) -> Result<SpectralEstimate> {
    if a.order() != 2 {
        return Err(Error::InvalidShape(format!(
            "power iteration needs an order-2 tensor, got order {}",
            a.order()
        )));
    }
    opts.validate()?;
    let outcomes: Vec<RestartOutcome> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| power_restart(a, opts, r))
        .collect();
    let best = best_restart(outcomes);
    Ok(SpectralEstimate {
        value: best.value,
        direction: if best.converged {
            Direction::ConvergedEstimate
        } else {
            Direction::LowerBound
        },
        method: Method::PowerIteration,
        restarts: opts.restarts,
        iterations: best.iterations,
        tolerance: opts.tol,
    })
}

fn hopm_restart(t: &DenseTensor, opts: &IterOptions, restart: usize) -> RestartOutcome {
    let mut g = SplitMix64::new(restart_seed(opts.seed, restart));
    let mut xs: Vec<Vec<f64>> = t.dims().iter().map(|&n| g.unit_vector(n)).collect();
    let d = t.order();
    let mut prev = f64::NAN;
    let mut value = 0.0;
    for it in 1..=opts.max_iter {
        for j in 0..d {
            let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
            let v = t.contract_all_but(&refs, j);
            let nv = norm2(&v);
            if nv == 0.0 {
                return RestartOutcome {
                    value: 0.0,
                    iterations: it,
                    converged: false,
                };
            }
            xs[j] = v.into_iter().map(|c| c / nv).collect();
            value = nv;
        }
        if (value - prev).abs() <= opts.tol * value {
            return RestartOutcome {
                value,
                iterations: it,
                converged: true,
            };
        }
        prev = value;
    }
    RestartOutcome {
        value,
        iterations: opts.max_iter,
        converged: false,
    }
}

/// Higher-order power method: cyclic updates `x_j ← normalize(T contracted
/// on every mode but j)` over modes `0..d`, from random starts.
///
/// The result is always a lower bound on the spectral norm, except for the
/// zero tensor which is reported as exactly 0.
pub fn spectral_norm_tensor_hopm(t: &DenseTensor, opts: &IterOptions) -> Result<SpectralEstimate> {
    if t.order() < 2 {
        return Err(Error::InvalidShape("HOPM needs order at least 2".into()));
    }
    opts.validate()?;
    if t.values().iter().all(|&v| v == 0.0) {
        return Ok(SpectralEstimate {
            value: 0.0,
            direction: Direction::ConvergedEstimate,
            method: Method::Hopm,
            restarts: opts.restarts,
            iterations: 0,
            tolerance: opts.tol,
        });
    }
    let outcomes: Vec<RestartOutcome> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| hopm_restart(t, opts, r))
        .collect();
    let best = best_restart(outcomes);
    Ok(SpectralEstimate {
        value: best.value,
        direction: Direction::LowerBound,
        method: Method::Hopm,
        restarts: opts.restarts,
        iterations: best.iterations,
        tolerance: opts.tol,
    })
}

/// Normalized primitive integer directions `{ v/‖v‖ : v ∈ {−m..m}^n \ {0} }`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonNet {
    pub n: usize,
    pub m: usize,
    /// Covering radius used in the bound factor.
    pub eps: f64,
    /// `len × n` coordinates, lexicographic in the underlying lattice vector.
    points: Vec<f64>,
    /// Points with non-negative, non-increasing coordinates. The full net is
    /// the orbit of these under sign changes and coordinate permutations.
    canonical: Vec<f64>,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl EpsilonNet {
    pub fn len(&self) -> usize {
        self.points.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.n)
    }

    /// One representative of each `±x` pair (first non-zero coordinate
    /// positive).
    pub fn half(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.points().filter(|p| p.iter().find(|&&c| c != 0.0).is_some_and(|&c| c > 0.0))
    }

    /// Distance from a unit vector to its nearest net point.
    pub fn distance_to(&self, u: &[f64]) -> f64 {
        let mut key: Vec<f64> = u.iter().map(|c| c.abs()).collect();
        key.sort_by(|a, b| b.total_cmp(a));
        let best = self
            .canonical
            .chunks_exact(self.n)
            .map(|p| dot(p, &key))
            .fold(f64::NEG_INFINITY, f64::max);
        (2.0 - 2.0 * best).max(0.0).sqrt()
    }
}

pub fn build_epsilon_net(n: usize, m: usize) -> Result<EpsilonNet> {
    if n == 0 || m == 0 {
        return Err(invalid("n/m", "both must be at least 1"));
    }
    if n > 6 {
        return Err(invalid("n", format!("enumeration is limited to n ≤ 6, got {n}")));
    }
    let side = 2 * m as u128 + 1;
    let lattice = side.pow(n as u32);
    if lattice > NET_LATTICE_BUDGET {
        return Err(Error::EnumerationBudget {
            required: lattice,
            budget: NET_LATTICE_BUDGET,
        });
    }
    let mi = m as i64;
    let mut v = vec![-mi; n];
    let mut points = Vec::new();
    let mut canonical = Vec::new();
    loop {
        let g = v.iter().fold(0u64, |g, &c| gcd(g, c.unsigned_abs()));
        if g == 1 {
            let norm = (v.iter().map(|&c| (c * c) as f64).sum::<f64>()).sqrt();
            points.extend(v.iter().map(|&c| c as f64 / norm));
            let is_canonical = v.iter().all(|&c| c >= 0) && v.windows(2).all(|w| w[0] >= w[1]);
            if is_canonical {
                canonical.extend(v.iter().map(|&c| c as f64 / norm));
            }
        }
        // Next lattice vector in lexicographic order.
        let mut k = n;
        loop {
            if k == 0 {
                break;
            }
            k -= 1;
            if v[k] < mi {
                v[k] += 1;
                break;
            }
            v[k] = -mi;
            if k == 0 {
                k = usize::MAX;
                break;
            }
        }
        if k == usize::MAX {
            break;
        }
    }
    let mut net = EpsilonNet {
        n,
        m,
        eps: 0.0,
        points,
        canonical,
    };
    let mut g = SplitMix64::new(NET_PROBE_SEED);
    let worst = (0..NET_PROBES)
        .map(|_| net.distance_to(&g.unit_vector(n)))
        .fold(0.0, f64::max);
    net.eps = NET_SAFETY * worst;
    if net.eps >= 1.0 {
        return Err(Error::CoarseNet { eps: net.eps, m });
    }
    Ok(net)
}

/// `max_x ‖Mᵀx‖₂` over `points` via the Gram matrix `MMᵀ`.
fn last_level_max(m: &[f64], n: usize, points: &[&[f64]]) -> f64 {
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            gram[i * n + j] = dot(&m[i * n..(i + 1) * n], &m[j * n..(j + 1) * n]);
        }
    }
    let best = points
        .iter()
        .map(|x| {
            let mut q = 0.0;
            for i in 0..n {
                q += x[i] * dot(&gram[i * n..(i + 1) * n], x);
            }
            q
        })
        .fold(0.0, f64::max);
    best.sqrt()
}

fn net_search(t: &DenseTensor, points: &[&[f64]]) -> f64 {
    let n = t.dims()[0];
    if t.order() == 2 {
        return last_level_max(t.values(), n, points);
    }
    points
        .iter()
        .map(|x| net_search(&t.mode_contract(x, 0).expect("order ≥ 3"), points))
        .fold(0.0, f64::max)
}

/// Upper bound on the spectral norm by enumerating every `(d−1)`-tuple of
/// net points.
pub fn net_upper_bound(t: &DenseTensor, net: &EpsilonNet) -> Result<SpectralEstimate> {
    let n = t.require_cubic()?;
    if n != net.n {
        return Err(Error::LengthMismatch {
            expected: net.n,
            actual: n,
        });
    }
    let d = t.order();
    let half: Vec<&[f64]> = net.half().collect();
    let tuples = (half.len() as u128).pow(d.saturating_sub(1) as u32);
    if tuples > NET_TUPLE_BUDGET {
        return Err(Error::EnumerationBudget {
            required: tuples,
            budget: NET_TUPLE_BUDGET,
        });
    }
    let sup = match d {
        1 => norm2(t.values()),
        2 => last_level_max(t.values(), n, &half),
        _ => half
            .par_iter()
            .map(|x| net_search(&t.mode_contract(x, 0).expect("order ≥ 3"), &half))
            .reduce(|| 0.0, f64::max),
    };
    let factor = (1.0 / (1.0 - net.eps)).powi(d as i32 - 1);
    Ok(SpectralEstimate {
        value: factor * sup,
        direction: Direction::UpperBound,
        method: Method::EpsilonNet,
        restarts: 0,
        iterations: tuples as usize,
        tolerance: net.eps,
    })
}

/// Splits `x` into a sparse part `z` (coordinates with `|x_i| ≥ 1/√(λn)`)
/// and a spread part `w = x − z`.
pub fn split_sphere_vector(x: &[f64], lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(invalid("lambda", format!("must lie in (0, 1], got {lambda}")));
    }
    if x.is_empty() {
        return Err(invalid("x", "empty vector"));
    }
    if norm2(x) > 1.0 + 1e-12 {
        return Err(invalid("x", "norm exceeds 1"));
    }
    let cut = 1.0 / (lambda * x.len() as f64).sqrt();
    let (mut z, mut w) = (vec![0.0; x.len()], vec![0.0; x.len()]);
    for (i, &xi) in x.iter().enumerate() {
        if xi.abs() >= cut {
            z[i] = xi;
        } else {
            w[i] = xi;
        }
    }
    Ok((z, w))
}

/// Which estimator stands in for `‖·‖₂` in experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormProxy {
    /// Power iteration, matrices only.
    Power,
    HopmLower,
    NetUpper,
}

impl NormProxy {
    pub fn default_for_order(d: usize) -> Self {
        if d == 2 {
            NormProxy::Power
        } else {
            NormProxy::HopmLower
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NormProxy::Power => "power",
            NormProxy::HopmLower => "hopm_lower",
            NormProxy::NetUpper => "net_upper",
        }
    }
}

impl fmt::Display for NormProxy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormProxy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power" => Ok(NormProxy::Power),
            "hopm_lower" | "hopm" => Ok(NormProxy::HopmLower),
            "net_upper" | "net" => Ok(NormProxy::NetUpper),
            other => Err(invalid(
                "norm_proxy",
                format!("unknown proxy `{other}` (power, hopm_lower, net_upper)"),
            )),
        }
    }
}

/// Settings for evaluating a norm proxy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxyOptions {
    pub proxy: NormProxy,
    pub iter: IterOptions,
    pub net_m: usize,
}

impl ProxyOptions {
    pub fn new(proxy: NormProxy, seed: u64) -> Self {
        let iter = match proxy {
            NormProxy::Power => IterOptions::matrix(seed),
            _ => IterOptions::tensor(seed),
        };
        Self {
            proxy,
            iter,
            net_m: DEFAULT_NET_M,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.iter.seed = seed;
        self
    }

    pub fn check_order(&self, d: usize) -> Result<()> {
        if self.proxy == NormProxy::Power && d != 2 {
            return Err(invalid("norm_proxy", "power iteration only applies to matrices"));
        }
        Ok(())
    }
}

/// Evaluates the chosen proxy; a net, when needed, is built on demand.
pub fn estimate_norm(t: &DenseTensor, opts: &ProxyOptions) -> Result<SpectralEstimate> {
    match opts.proxy {
        NormProxy::Power => spectral_norm_matrix(t, &opts.iter),
        NormProxy::HopmLower => spectral_norm_tensor_hopm(t, &opts.iter),
        NormProxy::NetUpper => {
            let n = t.require_cubic()?;
            let net = build_epsilon_net(n, opts.net_m)?;
            net_upper_bound(t, &net)
        }
    }
}
