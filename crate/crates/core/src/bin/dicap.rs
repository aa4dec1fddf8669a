//! Batch command-line front end: capacity computations, bounds, coding
//! simulations, and estimation, with machine-readable reports (one JSON
//! record per line on stdout) and CSV artifacts plus a run manifest in the
//! output directory.
//!
//! Exit codes: 0 success, 2 invalid configuration or unreadable input,
//! 3 numeric failure, 4 domain error (support violations, inapplicable
//! bounds, degenerate chains).

use clap::{Args, Parser, Subcommand};
use dicap_core::belief_mdp::{
    ising_solution, qary_ising_capacity, simulate_policy, value_iteration, ViOptions,
};
use dicap_core::channels::{load_channel, make_bsc, make_qary_ising, UnifilarFsc};
use dicap_core::coding::error_curve;
use dicap_core::duality::{
    build_dual_mdp, optimize_test_param, policy_iteration, TestDistribution, TestFamily,
};
use dicap_core::estimators::{ctw_di, plugin_di_rate, SamplePath};
use dicap_core::qbound::{
    bcjr_invariance_residual, ising_q1_invariant_policy, lower_bound, solve_upper, QBoundConfig,
};
use dicap_core::qgraph::{debruijn, ising_q1, load_qgraph, QGraph};
use dicap_core::{ba_di, Error};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser, Debug, Serialize)]
#[command(
    name = "dicap",
    version,
    about = "Directed information and feedback capacity toolkit"
)]
struct Cli {
    /// Directory for CSV artifacts and the run manifest.
    #[arg(long, default_value = "dicap-out", global = true)]
    out_dir: PathBuf,

    /// Worker threads for embarrassingly parallel trials (falls back to
    /// the DICAP_THREADS environment variable, then 1).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Emit ready-to-plot CSV artifacts.
    #[arg(long, global = true, default_value_t = true)]
    plot_data: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
enum Command {
    /// Value iteration on the belief MDP of a unifilar channel.
    CapacityVi(CapacityViArgs),
    /// Q-graph upper/lower bounds via the convex program.
    Qbound(QboundArgs),
    /// Dual upper bound via a graph-based test distribution.
    Duality(DualityArgs),
    /// Posterior-matching coding simulation and error curves.
    Simulate(SimulateArgs),
    /// DI-rate estimation from samples.
    Estimate(EstimateArgs),
    /// Extended Blahut-Arimoto at a fixed blocklength.
    Ba(BaArgs),
    /// Print version, built-ins, and closed-form reference values.
    Info,
}

#[derive(Args, Debug, Serialize)]
struct ChannelArg {
    /// Built-in channel: ising2..ising8 or bsc:<p>.
    #[arg(long)]
    builtin: Option<String>,
    /// Channel spec file (TOML).
    #[arg(long)]
    channel: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct QgraphArg {
    /// Built-in graph: ising_q1 or debruijn:<m>.
    #[arg(long, default_value = "ising_q1")]
    qgraph_builtin: String,
    /// Q-graph spec file (TOML); overrides the builtin.
    #[arg(long)]
    qgraph: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct CapacityViArgs {
    #[command(flatten)]
    channel: ChannelArg,
    /// Belief-grid points.
    #[arg(long, default_value_t = 1000)]
    grid: usize,
    /// Bellman-operator sweeps.
    #[arg(long, default_value_t = 50)]
    iters: usize,
    /// Simulation steps for the greedy-policy histogram.
    #[arg(long, default_value_t = 100_000)]
    sim_steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct QboundArgs {
    #[command(flatten)]
    channel: ChannelArg,
    #[command(flatten)]
    qgraph: QgraphArg,
    /// upper, lower, or both.
    #[arg(long, default_value = "both")]
    mode: String,
    #[arg(long, default_value_t = 1e-6)]
    invariance_tol: f64,
}

#[derive(Args, Debug, Serialize)]
struct DualityArgs {
    #[command(flatten)]
    channel: ChannelArg,
    #[command(flatten)]
    qgraph: QgraphArg,
    /// Test-distribution family: ising or bernoulli.
    #[arg(long, default_value = "ising")]
    family: String,
    /// Explicit test distribution file (TOML: rows = [[..], ..]).
    #[arg(long)]
    test_dist: Option<PathBuf>,
    /// Parameter sweep lo:hi:step; also the golden-section search range.
    #[arg(long)]
    sweep: Option<String>,
    /// Evaluate at a single parameter value instead of optimizing.
    #[arg(long)]
    at: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    channel: ChannelArg,
    #[command(flatten)]
    qgraph: QgraphArg,
    /// Fraction of the policy rate I(X,S;Y|Q) to signal at.
    #[arg(long, default_value_t = 0.9)]
    rate_fraction: f64,
    /// Comma-separated blocklengths.
    #[arg(long, default_value = "16,32,64,128", value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct EstimateArgs {
    /// Sample source: ising-optimal, or a two-column symbol CSV file.
    #[arg(long, default_value = "ising-optimal")]
    source: String,
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    /// CTW variant 1..4; omit to run the plug-in estimator.
    #[arg(long)]
    ctw: Option<u8>,
    /// CTW tree depth.
    #[arg(long, default_value_t = 3)]
    depth: usize,
    /// Plug-in Markov order.
    #[arg(long, default_value_t = 1)]
    order: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct BaArgs {
    #[command(flatten)]
    channel: ChannelArg,
    /// Blocklength.
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// Initial channel state.
    #[arg(long, default_value_t = 0)]
    s0: usize,
}

/// A failure carrying its process exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn config(msg: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: msg.into(),
        }
    }
}

fn classify(err: Error) -> Failure {
    let code = match &err {
        Error::Parse { .. }
        | Error::InvalidConfig { .. }
        | Error::Io(_)
        | Error::ShapeMismatch { .. }
        | Error::NotNormalized { .. }
        | Error::NegativeProbability { .. }
        | Error::OutOfRange { .. }
        | Error::SizeGuard { .. } => 2,
        Error::NonConvergence { .. } | Error::SingularSystem | Error::BracketFailure => 3,
        Error::TestSupportViolation { .. }
        | Error::LowerBoundInapplicable { .. }
        | Error::KlSupport { .. }
        | Error::ZeroProbabilityOutput { .. }
        | Error::Reducible { .. }
        | Error::Periodic { .. }
        | Error::MultichainUnequalGains { .. } => 4,
    };
    Failure {
        code,
        message: err.to_string(),
    }
}

/// Errors while reading input files are configuration problems (exit 2).
fn load_failure(err: Error) -> Failure {
    Failure {
        code: 2,
        message: err.to_string(),
    }
}

fn resolve_channel(arg: &ChannelArg) -> Result<UnifilarFsc, Failure> {
    match (&arg.builtin, &arg.channel) {
        (Some(name), None) => {
            if let Some(p) = name.strip_prefix("bsc:") {
                let p: f64 = p
                    .parse()
                    .map_err(|_| Failure::config(format!("bad BSC parameter in '{name}'")))?;
                make_bsc(p).map_err(load_failure)
            } else if let Some(q) = name.strip_prefix("ising") {
                let q: usize = q
                    .parse()
                    .map_err(|_| Failure::config(format!("bad Ising alphabet in '{name}'")))?;
                make_qary_ising(q).map_err(load_failure)
            } else {
                Err(Failure::config(format!(
                    "unknown builtin channel '{name}'"
                )))
            }
        }
        (None, Some(path)) => load_channel(path).map_err(load_failure),
        _ => Err(Failure::config(
            "specify exactly one of --builtin or --channel",
        )),
    }
}

fn resolve_qgraph(arg: &QgraphArg, ch: &UnifilarFsc) -> Result<QGraph, Failure> {
    if let Some(path) = &arg.qgraph {
        return load_qgraph(path).map_err(load_failure);
    }
    let name = arg.qgraph_builtin.as_str();
    if name == "ising_q1" {
        Ok(ising_q1())
    } else if let Some(m) = name.strip_prefix("debruijn:") {
        let m: usize = m
            .parse()
            .map_err(|_| Failure::config(format!("bad de Bruijn order in '{name}'")))?;
        debruijn(m, ch.output_count()).map_err(load_failure)
    } else {
        Err(Failure::config(format!("unknown builtin Q-graph '{name}'")))
    }
}

fn thread_count(cli_threads: Option<usize>) -> usize {
    cli_threads
        .or_else(|| {
            std::env::var("DICAP_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(1)
        .max(1)
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: String,
    config: &'a Command,
    seed: u64,
    version: &'static str,
    log_base: &'static str,
    wall_time_s: f64,
    outputs: Vec<String>,
}

fn write_csv(dir: &Path, name: &str, header: &str, rows: &[String]) -> Result<String, Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::config(e.to_string()))?;
    let path = dir.join(name);
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    std::fs::write(&path, text).map_err(|e| Failure::config(e.to_string()))?;
    Ok(path.display().to_string())
}

fn emit(record: &impl Serialize) {
    println!(
        "{}",
        serde_json::to_string(record).expect("serializable record")
    );
}

fn main() {
    let cli = Cli::parse();
    let started = Instant::now();
    match run(&cli) {
        Ok((seed, outputs)) => {
            let manifest = RunManifest {
                command: std::env::args().collect::<Vec<_>>().join(" "),
                config: &cli.command,
                seed,
                version: dicap_core::VERSION,
                log_base: dicap_core::LOG_BASE,
                wall_time_s: started.elapsed().as_secs_f64(),
                outputs,
            };
            if std::fs::create_dir_all(&cli.out_dir).is_ok() {
                let path = cli.out_dir.join("manifest.json");
                let _ = std::fs::write(
                    path,
                    serde_json::to_string_pretty(&manifest).expect("manifest"),
                );
            }
        }
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            std::process::exit(failure.code);
        }
    }
}

fn run(cli: &Cli) -> Result<(u64, Vec<String>), Failure> {
    match &cli.command {
        Command::CapacityVi(args) => cmd_capacity_vi(cli, args),
        Command::Qbound(args) => cmd_qbound(cli, args),
        Command::Duality(args) => cmd_duality(cli, args),
        Command::Simulate(args) => cmd_simulate(cli, args),
        Command::Estimate(args) => cmd_estimate(cli, args),
        Command::Ba(args) => cmd_ba(cli, args),
        Command::Info => cmd_info(),
    }
}

#[derive(Serialize)]
struct ViRecord {
    command: &'static str,
    channel: String,
    rho_low: f64,
    rho_high: f64,
    /// Span interval widened by the interpolation-error estimate: a
    /// bracket for the capacity itself.
    bracket_low: f64,
    bracket_high: f64,
    span_width: f64,
    grid: usize,
    iters: usize,
    histogram_top4_mass: Option<f64>,
    sim_avg_reward: Option<f64>,
    log_base: &'static str,
    version: &'static str,
}

fn cmd_capacity_vi(cli: &Cli, args: &CapacityViArgs) -> Result<(u64, Vec<String>), Failure> {
    if args.iters < 1 || args.grid < 2 {
        return Err(Failure::config("need --iters >= 1 and --grid >= 2"));
    }
    let ch = resolve_channel(&args.channel)?;
    let result =
        value_iteration(&ch, args.grid, args.iters, ViOptions::default()).map_err(classify)?;
    let mut outputs = Vec::new();
    let mut top4 = None;
    let mut avg_reward = None;
    if cli.plot_data {
        if let Some(pol) = &result.ising_policy {
            let rows: Vec<String> = result
                .grid
                .iter()
                .zip(&result.values)
                .zip(pol.delta.iter().zip(&pol.gamma))
                .map(|((z, h), (d, g))| format!("{z},{h},{d},{g}"))
                .collect();
            outputs.push(write_csv(
                &cli.out_dir,
                "value_function.csv",
                "z,h,delta_star,gamma_star",
                &rows,
            )?);
        }
    }
    if let Some(pol) = &result.ising_policy {
        let report = simulate_policy(
            &ch,
            pol,
            args.sim_steps,
            args.sim_steps / 10,
            args.grid,
            args.seed,
        )
        .map_err(classify)?;
        let mut sorted = report.histogram.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        top4 = Some(sorted.iter().take(4).sum::<f64>());
        avg_reward = Some(report.avg_reward);
        if cli.plot_data {
            let rows: Vec<String> = report
                .cell_centers
                .iter()
                .zip(&report.histogram)
                .filter(|(_, &f)| f > 0.0)
                .map(|(c, f)| format!("{c},{f}"))
                .collect();
            outputs.push(write_csv(
                &cli.out_dir,
                "histogram.csv",
                "cell_center,frequency",
                &rows,
            )?);
        }
    }
    let (bracket_low, bracket_high) = result.capacity_bracket();
    emit(&ViRecord {
        command: "capacity-vi",
        channel: ch.name.clone(),
        rho_low: result.rho_low,
        rho_high: result.rho_high,
        bracket_low,
        bracket_high,
        span_width: result.rho_high - result.rho_low,
        grid: args.grid,
        iters: args.iters,
        histogram_top4_mass: top4,
        sim_avg_reward: avg_reward,
        log_base: dicap_core::LOG_BASE,
        version: dicap_core::VERSION,
    });
    Ok((args.seed, outputs))
}

#[derive(Serialize)]
struct QboundRecord {
    command: &'static str,
    channel: String,
    qgraph: String,
    mode: String,
    bound_bits: Option<f64>,
    lower_bound_bits: Option<f64>,
    stationarity_residual: f64,
    channel_law_residual: f64,
    invariance_residual: f64,
    iterations: usize,
    matched: Option<bool>,
    log_base: &'static str,
    version: &'static str,
}

fn cmd_qbound(cli: &Cli, args: &QboundArgs) -> Result<(u64, Vec<String>), Failure> {
    let ch = resolve_channel(&args.channel)?;
    let g = resolve_qgraph(&args.qgraph, &ch)?;
    let mode = args.mode.as_str();
    if !["upper", "lower", "both"].contains(&mode) {
        return Err(Failure::config("--mode must be upper, lower, or both"));
    }
    let solution = solve_upper(&ch, &g, QBoundConfig::default()).map_err(classify)?;
    let invariance = bcjr_invariance_residual(&solution.policy, &ch, &g).map_err(classify)?;
    let mut lower = None;
    if mode != "upper" {
        let lb = lower_bound(&solution.policy, &ch, &g, args.invariance_tol).map_err(classify)?;
        lower = Some(lb);
    }
    let matched = lower.map(|lb| (solution.bound_bits - lb).abs() <= 1e-6);
    emit(&QboundRecord {
        command: "qbound",
        channel: ch.name.clone(),
        qgraph: g.name.clone(),
        mode: mode.to_string(),
        bound_bits: if mode == "lower" {
            None
        } else {
            Some(solution.bound_bits)
        },
        lower_bound_bits: lower,
        stationarity_residual: solution.residuals.stationarity,
        channel_law_residual: solution.residuals.channel_law,
        invariance_residual: invariance,
        iterations: solution.iterations,
        matched,
        log_base: dicap_core::LOG_BASE,
        version: dicap_core::VERSION,
    });
    let _ = cli;
    Ok((0, Vec::new()))
}

#[derive(Serialize)]
struct DualityRecord {
    command: &'static str,
    channel: String,
    qgraph: String,
    a: Option<f64>,
    rho_bits: f64,
    boundary_minimizer: Option<bool>,
    v_table: Vec<f64>,
    policy: Vec<usize>,
    bellman_violation: f64,
    log_base: &'static str,
    version: &'static str,
}

fn parse_sweep(spec: &str) -> Result<(f64, f64, f64), Failure> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Failure::config("--sweep expects lo:hi:step"));
    }
    let lo: f64 = parts[0]
        .parse()
        .map_err(|_| Failure::config("bad sweep lo"))?;
    let hi: f64 = parts[1]
        .parse()
        .map_err(|_| Failure::config("bad sweep hi"))?;
    let step: f64 = parts[2]
        .parse()
        .map_err(|_| Failure::config("bad sweep step"))?;
    // Written with negations so NaN inputs are rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(lo < hi) || !(step > 0.0) {
        return Err(Failure::config("sweep needs lo < hi and step > 0"));
    }
    Ok((lo, hi, step))
}

fn load_test_dist(path: &Path) -> Result<TestDistribution, Failure> {
    #[derive(serde::Deserialize)]
    struct TestDistFile {
        rows: Vec<Vec<f64>>,
    }
    let text = std::fs::read_to_string(path).map_err(|e| Failure::config(e.to_string()))?;
    let parsed: TestDistFile =
        toml::from_str(&text).map_err(|e| Failure::config(e.to_string()))?;
    TestDistribution::new(parsed.rows).map_err(classify)
}

fn cmd_duality(cli: &Cli, args: &DualityArgs) -> Result<(u64, Vec<String>), Failure> {
    let ch = resolve_channel(&args.channel)?;
    let g = resolve_qgraph(&args.qgraph, &ch)?;
    let mut outputs = Vec::new();

    if let Some(path) = &args.test_dist {
        // Fixed explicit test distribution: policy iteration only.
        let t = load_test_dist(path)?;
        let mdp = build_dual_mdp(&ch, &g, &t).map_err(classify)?;
        let sol = policy_iteration(&mdp).map_err(classify)?;
        emit(&DualityRecord {
            command: "duality",
            channel: ch.name.clone(),
            qgraph: g.name.clone(),
            a: None,
            rho_bits: sol.rho,
            boundary_minimizer: None,
            v_table: sol.v.clone(),
            policy: sol.policy.clone(),
            bellman_violation: sol.bellman_violation,
            log_base: dicap_core::LOG_BASE,
            version: dicap_core::VERSION,
        });
        return Ok((0, outputs));
    }

    let family = match args.family.as_str() {
        "ising" => TestFamily::IsingQ1,
        "bernoulli" => TestFamily::BernoulliSingleNode,
        other => return Err(Failure::config(format!("unknown test family '{other}'"))),
    };
    let (lo, hi, step) = match &args.sweep {
        Some(spec) => parse_sweep(spec)?,
        None => (0.3, 0.6, 1e-3),
    };
    if cli.plot_data {
        let mut rows = Vec::new();
        let mut a = lo;
        while a <= hi + 1e-12 {
            let t = family.make(a, g.node_count()).map_err(classify)?;
            let mdp = build_dual_mdp(&ch, &g, &t).map_err(classify)?;
            let sol = policy_iteration(&mdp).map_err(classify)?;
            rows.push(format!("{a},{}", sol.rho));
            a += step;
        }
        outputs.push(write_csv(
            &cli.out_dir,
            "duality_sweep.csv",
            "a,rho_bits",
            &rows,
        )?);
    }
    let (a_star, rho, boundary) = match args.at {
        Some(a) => {
            let t = family.make(a, g.node_count()).map_err(classify)?;
            let mdp = build_dual_mdp(&ch, &g, &t).map_err(classify)?;
            let sol = policy_iteration(&mdp).map_err(classify)?;
            (a, sol.rho, None)
        }
        None => {
            let opt = optimize_test_param(&ch, &g, family, (lo, hi), 1e-7).map_err(classify)?;
            (opt.a, opt.rho, Some(opt.boundary))
        }
    };
    let t = family.make(a_star, g.node_count()).map_err(classify)?;
    let mdp = build_dual_mdp(&ch, &g, &t).map_err(classify)?;
    let sol = policy_iteration(&mdp).map_err(classify)?;
    emit(&DualityRecord {
        command: "duality",
        channel: ch.name.clone(),
        qgraph: g.name.clone(),
        a: Some(a_star),
        rho_bits: rho,
        boundary_minimizer: boundary,
        v_table: sol.v.clone(),
        policy: sol.policy.clone(),
        bellman_violation: sol.bellman_violation,
        log_base: dicap_core::LOG_BASE,
        version: dicap_core::VERSION,
    });
    Ok((0, outputs))
}

#[derive(Serialize)]
struct SimulateRecord {
    command: &'static str,
    channel: String,
    qgraph: String,
    rate_fraction: f64,
    seed: u64,
    points: Vec<dicap_core::coding::ErrorPoint>,
    log_base: &'static str,
    version: &'static str,
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> Result<(u64, Vec<String>), Failure> {
    let ch = resolve_channel(&args.channel)?;
    let g = resolve_qgraph(&args.qgraph, &ch)?;
    // The BCJR-invariant maximizer: closed form for the Ising setup, the
    // qbound pipeline otherwise.
    let pol = if ch.name == "ising2" && g.name == "ising_q1" {
        ising_q1_invariant_policy(ising_solution().a)
    } else {
        solve_upper(&ch, &g, QBoundConfig::default())
            .map_err(classify)?
            .policy
    };
    let threads = thread_count(cli.threads);
    let table = error_curve(
        &ch,
        &g,
        &pol,
        args.rate_fraction,
        &args.n,
        args.trials,
        args.seed,
        threads,
    )
    .map_err(classify)?;
    let mut outputs = Vec::new();
    if cli.plot_data {
        let rows: Vec<String> = table
            .iter()
            .map(|p| {
                format!(
                    "{},{},{},{},{},{}",
                    p.n, p.trials, p.errors, p.p_hat, p.ci_low, p.ci_high
                )
            })
            .collect();
        outputs.push(write_csv(
            &cli.out_dir,
            "error_curve.csv",
            "n,trials,errors,p_hat,ci_low,ci_high",
            &rows,
        )?);
    }
    emit(&SimulateRecord {
        command: "simulate",
        channel: ch.name.clone(),
        qgraph: g.name.clone(),
        rate_fraction: args.rate_fraction,
        seed: args.seed,
        points: table,
        log_base: dicap_core::LOG_BASE,
        version: dicap_core::VERSION,
    });
    Ok((args.seed, outputs))
}

#[derive(Serialize)]
struct EstimateRecord {
    command: &'static str,
    source: String,
    report: serde_json::Value,
    log_base: &'static str,
    version: &'static str,
}

/// The pair process of the Ising channel under its optimal Q-graph policy,
/// sampled from the stationary (S, Q) chain.
fn sample_ising_optimal(n: usize, seed: u64) -> Result<SamplePath, Failure> {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let sol = ising_solution();
    let ch = make_qary_ising(2).map_err(classify)?;
    let pol = ising_q1_invariant_policy(sol.a);
    let g = ising_q1();
    let kernel = dicap_core::qgraph::sq_kernel(&ch, &g, &pol).map_err(classify)?;
    let st = dicap_core::qgraph::stationary_distribution(&kernel, 2, 4).map_err(classify)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut u: f64 = rng.gen();
    let (mut s, mut q) = (0usize, 3usize);
    'outer: for cand_s in 0..2 {
        for cand_q in 0..4 {
            if u < st.pi[cand_s][cand_q] {
                s = cand_s;
                q = cand_q;
                break 'outer;
            }
            u -= st.pi[cand_s][cand_q];
        }
    }
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let ux: f64 = rng.gen();
        let x = if ux < pol.prob(0, s, q) { 0 } else { 1 };
        let uy: f64 = rng.gen();
        let y = if uy < ch.prob(0, x, s) { 0 } else { 1 };
        xs.push(x);
        ys.push(y);
        s = ch.next_state(s, x, y);
        q = g.next(q, y);
    }
    SamplePath::new(xs, ys, 2, 2).map_err(classify)
}

fn load_symbol_csv(path: &Path) -> Result<SamplePath, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::config(e.to_string()))?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (lineno == 0 && line.starts_with('x')) {
            continue;
        }
        let mut parts = line.split(',');
        let x: usize = parts
            .next()
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Failure::config(format!("bad symbol row {}", lineno + 1)))?;
        let y: usize = parts
            .next()
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Failure::config(format!("bad symbol row {}", lineno + 1)))?;
        xs.push(x);
        ys.push(y);
    }
    let x_size = xs.iter().max().map(|&m| m + 1).unwrap_or(1).max(2);
    let y_size = ys.iter().max().map(|&m| m + 1).unwrap_or(1).max(2);
    SamplePath::new(xs, ys, x_size, y_size).map_err(classify)
}

fn cmd_estimate(cli: &Cli, args: &EstimateArgs) -> Result<(u64, Vec<String>), Failure> {
    let path = match args.source.as_str() {
        "ising-optimal" => sample_ising_optimal(args.n, args.seed)?,
        file => load_symbol_csv(Path::new(file))?,
    };
    let report = match args.ctw {
        Some(variant) => {
            let r = ctw_di(&path, args.depth, variant).map_err(classify)?;
            serde_json::to_value(&r).expect("report")
        }
        None => {
            let r = plugin_di_rate(&path, args.order).map_err(classify)?;
            serde_json::to_value(&r).expect("report")
        }
    };
    emit(&EstimateRecord {
        command: "estimate",
        source: args.source.clone(),
        report,
        log_base: dicap_core::LOG_BASE,
        version: dicap_core::VERSION,
    });
    let _ = cli;
    Ok((args.seed, Vec::new()))
}

#[derive(Serialize)]
struct BaRecord {
    command: &'static str,
    channel: String,
    report: ba_di::BaReport,
    log_base: &'static str,
    version: &'static str,
}

fn cmd_ba(cli: &Cli, args: &BaArgs) -> Result<(u64, Vec<String>), Failure> {
    let ch = resolve_channel(&args.channel)?;
    let table = ba_di::unroll_channel(&ch, args.n, args.s0).map_err(classify)?;
    let state = ba_di::ba_iterate(&table, args.eps, args.max_iter).map_err(classify)?;
    emit(&BaRecord {
        command: "ba",
        channel: ch.name.clone(),
        report: ba_di::BaReport::from(&state),
        log_base: dicap_core::LOG_BASE,
        version: dicap_core::VERSION,
    });
    let _ = cli;
    Ok((0, Vec::new()))
}

fn cmd_info() -> Result<(u64, Vec<String>), Failure> {
    #[derive(Serialize)]
    struct Info {
        command: &'static str,
        version: &'static str,
        log_base: &'static str,
        builtin_channels: Vec<&'static str>,
        builtin_qgraphs: Vec<&'static str>,
        closed_forms: ClosedForms,
    }
    #[derive(Serialize)]
    struct ClosedForms {
        ising_root_a: f64,
        ising_rho_star_bits: f64,
        qary_capacity_bits: Vec<(usize, f64)>,
    }
    let sol = ising_solution();
    let qary = (2..=8)
        .map(|q| (q, qary_ising_capacity(q).expect("q in range").value_bits))
        .collect();
    emit(&Info {
        command: "info",
        version: dicap_core::VERSION,
        log_base: dicap_core::LOG_BASE,
        builtin_channels: vec!["ising2..ising8", "bsc:<p>"],
        builtin_qgraphs: vec!["ising_q1", "debruijn:<m>"],
        closed_forms: ClosedForms {
            ising_root_a: sol.a,
            ising_rho_star_bits: sol.rho_star,
            qary_capacity_bits: qary,
        },
    });
    Ok((0, Vec::new()))
}
