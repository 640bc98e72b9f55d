//! `tsparse` command-line front end.
//!
//! Exit codes: 0 success or PASS, 1 a verification FAIL, 2 usage, parse or
//! I/O error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bounds::{bound_csv, required_s};
use crate::error::Error;
use crate::experiments::{
    error_sweep, gen_random_tensor, sweep_csv, verify_bennett, verify_net_bracket,
    verify_theorem2_suite, verify_unbiasedness, GeneratorKind, GeneratorSpec, NormBoundConfig,
    NormBoundFamily,
};
use crate::io::{fmt_f64, load_dense, store_dense, store_sparse};
use crate::sparsify::sparsify;
use crate::spectral::{
    build_epsilon_net, net_upper_bound, spectral_norm_matrix, spectral_norm_tensor_hopm,
    IterOptions, NormProxy, ProxyOptions,
};
use crate::tensor::DenseTensor;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "tsparse", version, about = "Tensor sparsification experiments")]
pub struct Cli {
    /// Master seed; every random choice derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random dense tensor.
    Gen(GenArgs),
    /// Sparsify a dense tensor into the sparse text format.
    Sparsify(SparsifyArgs),
    /// Estimate a spectral norm.
    Norm(NormArgs),
    /// Relative-error sweep over sampling budgets.
    Sweep(SweepArgs),
    /// Monte Carlo checks.
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Sampling budget for a target relative error.
    RequiredS(RequiredSArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Gaussian,
    Rademacher,
    LowRankPlusNoise,
    PowerLaw,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 1)]
    pub rank: usize,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub exponent: f64,
}

#[derive(Debug, Args)]
pub struct SparsifyArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub s: f64,
    /// JSON file for run statistics.
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Power,
    Hopm,
    Net,
}

#[derive(Debug, Args)]
pub struct IterArgs {
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
}

impl IterArgs {
    fn apply(&self, mut o: IterOptions) -> IterOptions {
        o.tol = self.tol.unwrap_or(o.tol);
        o.max_iter = self.max_iter.unwrap_or(o.max_iter);
        o.restarts = self.restarts.unwrap_or(o.restarts);
        o
    }
}

#[derive(Debug, Args)]
pub struct NormArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[command(flatten)]
    pub iter: IterArgs,
    #[arg(long, default_value_t = crate::spectral::DEFAULT_NET_M)]
    pub net_m: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub s_list: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// power, hopm_lower or net_upper (default by order).
    #[arg(long)]
    pub norm_proxy: Option<String>,
    #[command(flatten)]
    pub iter: IterArgs,
    #[arg(long, default_value_t = crate::spectral::DEFAULT_NET_M)]
    pub net_m: usize,
}

#[derive(Debug, Subcommand)]
pub enum VerifyCommand {
    /// Tail of centered Bernoulli sums against e^{-t/2}.
    Bennett {
        #[arg(long, default_value_t = 40)]
        n_vars: usize,
        /// Defaults to 1.5, 2 and 3 times the variance.
        #[arg(long, value_delimiter = ',')]
        t_list: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
    },
    /// Norm bound ratio for random tensors across sizes.
    Theorem2 {
        #[arg(long, default_value = "rademacher")]
        family: String,
        #[arg(long, value_delimiter = ',', default_values_t = [20usize, 40, 80])]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        /// Defaults to ln n.
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, default_value_t = 10.0)]
        max_ratio: f64,
        #[arg(long, default_value_t = 1.5)]
        max_growth: f64,
    },
    /// z-scores of the sketch mean for middle-band entries.
    Unbiased {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        s: f64,
        #[arg(long, default_value_t = 20_000)]
        trials: usize,
        #[arg(long, default_value_t = 4.0)]
        max_z: f64,
    },
    /// HOPM lower bound never exceeds the ε-net upper bound.
    LemmaNet {
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 6)]
        m: usize,
        #[arg(long, default_value_t = 50)]
        instances: usize,
    },
}

#[derive(Debug, Args)]
pub struct RequiredSArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub st: f64,
    #[arg(long)]
    pub eps: f64,
    #[arg(long = "C", default_value_t = 1.0)]
    pub c: f64,
}

/// What a command produced: text for stdout and whether all checks passed.
struct Outcome {
    stdout: String,
    pass: bool,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self { stdout, pass: true }
    }
}

type CmdResult = std::result::Result<Outcome, String>;

fn lib<T>(r: crate::Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn load(path: &Path) -> std::result::Result<DenseTensor, String> {
    load_dense(path).map_err(|e| match e {
        Error::Io(io) => format!("--in `{}`: {io}", path.display()),
        other => format!("--in `{}`: {other}", path.display()),
    })
}

fn require_out(out: &Option<PathBuf>) -> std::result::Result<&Path, String> {
    out.as_deref().ok_or_else(|| "--out is required for this command".to_string())
}

fn write_text(path: &Path, text: &str) -> std::result::Result<(), String> {
    std::fs::write(path, text).map_err(|e| format!("--out `{}`: {e}", path.display()))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn cmd_gen(cli: &Cli, a: &GenArgs) -> CmdResult {
    let out = require_out(&cli.out)?;
    let kind = match a.kind {
        KindArg::Gaussian => GeneratorKind::Gaussian,
        KindArg::Rademacher => GeneratorKind::Rademacher,
        KindArg::LowRankPlusNoise => GeneratorKind::LowRankPlusNoise {
            rank: a.rank,
            sigma: a.sigma,
        },
        KindArg::PowerLaw => GeneratorKind::PowerLaw {
            exponent: a.exponent,
        },
    };
    let t = lib(gen_random_tensor(&GeneratorSpec::new(kind, a.n, a.d, cli.seed)))?;
    store_dense(&t, out).map_err(|e| format!("--out `{}`: {e}", out.display()))?;
    Ok(Outcome::ok(format!(
        "wrote {} tensor {:?} to {}\n",
        kind.name(),
        t.dims(),
        out.display()
    )))
}

fn cmd_sparsify(cli: &Cli, a: &SparsifyArgs) -> CmdResult {
    let out = require_out(&cli.out)?;
    let t = load(&a.input)?;
    let r = lib(sparsify(&t, a.s, cli.seed))?;
    store_sparse(&r.sketch, out).map_err(|e| format!("--out `{}`: {e}", out.display()))?;
    if let Some(stats) = &a.stats {
        std::fs::write(stats, to_json(&r.stats()))
            .map_err(|e| format!("--stats `{}`: {e}", stats.display()))?;
    }
    Ok(Outcome::ok(format!(
        "nnz {} expected_nnz {}\n",
        r.sketch.nnz(),
        fmt_f64(r.expected_nnz)
    )))
}

fn cmd_norm(cli: &Cli, a: &NormArgs) -> CmdResult {
    let t = load(&a.input)?;
    let est = match a.method {
        MethodArg::Power => lib(spectral_norm_matrix(&t, &a.iter.apply(IterOptions::matrix(cli.seed))))?,
        MethodArg::Hopm => lib(spectral_norm_tensor_hopm(&t, &a.iter.apply(IterOptions::tensor(cli.seed))))?,
        MethodArg::Net => {
            let n = lib(t.require_cubic())?;
            let net = lib(build_epsilon_net(n, a.net_m))?;
            lib(net_upper_bound(&t, &net))?
        }
    };
    if let Some(out) = &cli.out {
        write_text(out, &to_json(&est))?;
    }
    Ok(Outcome::ok(format!(
        "value {}\ndirection {}\nmethod {}\nrestarts {}\niterations {}\ntolerance {}\n",
        fmt_f64(est.value),
        est.direction,
        est.method,
        est.restarts,
        est.iterations,
        fmt_f64(est.tolerance)
    )))
}

fn cmd_sweep(cli: &Cli, a: &SweepArgs) -> CmdResult {
    let t = load(&a.input)?;
    let proxy = match &a.norm_proxy {
        Some(p) => lib(p.parse::<NormProxy>())?,
        None => NormProxy::default_for_order(t.order()),
    };
    let mut opts = ProxyOptions::new(proxy, cli.seed);
    opts.iter = a.iter.apply(opts.iter);
    opts.net_m = a.net_m;
    let rows = lib(error_sweep(&t, &a.s_list, a.trials, cli.seed, &opts))?;
    let csv = sweep_csv(&rows);
    match &cli.out {
        Some(out) => {
            write_text(out, &csv)?;
            Ok(Outcome::ok(format!("wrote {} rows to {}\n", rows.len(), out.display())))
        }
        None => Ok(Outcome::ok(csv)),
    }
}

fn cmd_verify(cli: &Cli, v: &VerifyCommand) -> CmdResult {
    let mut text = String::new();
    let mut csv = String::new();
    let mut pass = true;
    match v {
        VerifyCommand::Bennett {
            n_vars,
            t_list,
            trials,
        } => {
            let var = *n_vars as f64 / 4.0;
            let grid = if t_list.is_empty() {
                vec![1.5 * var, 2.0 * var, 3.0 * var]
            } else {
                t_list.clone()
            };
            let checks = lib(verify_bennett(*n_vars, &grid, *trials, cli.seed))?;
            csv.push_str("t,bound,empirical,se,pass\n");
            for c in &checks {
                pass &= c.pass;
                let _ = writeln!(
                    text,
                    "{} bennett t={}: empirical {} <= bound {} + 3*se {}",
                    verdict(c.pass),
                    fmt_f64(c.t),
                    fmt_f64(c.empirical),
                    fmt_f64(c.bound),
                    fmt_f64(c.se)
                );
                let _ = writeln!(csv, "{},{},{},{},{}", fmt_f64(c.t), fmt_f64(c.bound), fmt_f64(c.empirical), fmt_f64(c.se), c.pass);
            }
        }
        VerifyCommand::Theorem2 {
            family,
            n_list,
            d,
            trials,
            q,
            max_ratio,
            max_growth,
        } => {
            let family: NormBoundFamily = lib(family.parse())?;
            let configs: Vec<NormBoundConfig> = n_list
                .iter()
                .map(|&n| NormBoundConfig {
                    q: *q,
                    ..NormBoundConfig::new(family, n, *d, *trials)
                })
                .collect();
            let reports = lib(verify_theorem2_suite(&configs, cli.seed))?;
            for r in &reports {
                let ok = r.ratio <= *max_ratio;
                pass &= ok;
                let _ = writeln!(
                    text,
                    "{} theorem2 n={} d={}: ratio {} <= {}",
                    verdict(ok),
                    r.n,
                    r.d,
                    fmt_f64(r.ratio),
                    fmt_f64(*max_ratio)
                );
            }
            for w in reports.windows(2) {
                if w[1].n == 2 * w[0].n && w[0].ratio > 0.0 {
                    let growth = w[1].ratio / w[0].ratio;
                    let ok = growth <= *max_growth;
                    pass &= ok;
                    let _ = writeln!(
                        text,
                        "{} theorem2 growth n={}->{}: {} <= {}",
                        verdict(ok),
                        w[0].n,
                        w[1].n,
                        fmt_f64(growth),
                        fmt_f64(*max_growth)
                    );
                }
            }
            csv = bound_csv(&reports);
        }
        VerifyCommand::Unbiased {
            input,
            s,
            trials,
            max_z,
        } => {
            let t = load(input)?;
            let rows = lib(verify_unbiasedness(&t, *s, *trials, cli.seed))?;
            csv.push_str("index,p,mean,z\n");
            if rows.is_empty() {
                text.push_str("no middle-band entries at this s\n");
            }
            for r in &rows {
                let ok = r.z.abs() < *max_z;
                pass &= ok;
                let idx = r.index.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
                let _ = writeln!(
                    text,
                    "{} unbiased [{idx}] p={}: |z| = {} < {}",
                    verdict(ok),
                    fmt_f64(r.p),
                    fmt_f64(r.z.abs()),
                    fmt_f64(*max_z)
                );
                let _ = writeln!(csv, "{idx},{},{},{}", fmt_f64(r.p), fmt_f64(r.mean), fmt_f64(r.z));
            }
        }
        VerifyCommand::LemmaNet { n, d, m, instances } => {
            let rows = lib(verify_net_bracket(*n, *d, *m, *instances, cli.seed, &IterOptions::tensor(cli.seed)))?;
            csv.push_str("instance,hopm,net_upper,pass\n");
            let failed = rows.iter().filter(|r| !r.pass).count();
            for r in &rows {
                pass &= r.pass;
                let _ = writeln!(csv, "{},{},{},{}", r.instance, fmt_f64(r.hopm), fmt_f64(r.net_upper), r.pass);
            }
            let _ = writeln!(
                text,
                "{} lemma-net n={n} d={d} m={m}: hopm <= net upper bound on {}/{} instances",
                verdict(failed == 0),
                rows.len() - failed,
                rows.len()
            );
        }
    }
    if let Some(out) = &cli.out {
        write_text(out, &csv)?;
    }
    Ok(Outcome { stdout: text, pass })
}

fn cmd_required_s(a: &RequiredSArgs) -> CmdResult {
    let s = lib(required_s(a.n, a.d, a.st, a.eps, a.c))?;
    Ok(Outcome::ok(format!("{s:.4e}\n")))
}

fn dispatch(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Gen(a) => cmd_gen(cli, a),
        Command::Sparsify(a) => cmd_sparsify(cli, a),
        Command::Norm(a) => cmd_norm(cli, a),
        Command::Sweep(a) => cmd_sweep(cli, a),
        Command::Verify(v) => cmd_verify(cli, v),
        Command::RequiredS(a) => cmd_required_s(a),
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_USAGE;
        }
        pool = pool.num_threads(k);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(o) => {
            print!("{}", o.stdout);
            if o.pass {
                EXIT_OK
            } else {
                EXIT_FAIL
            }
        }
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
    }
}
