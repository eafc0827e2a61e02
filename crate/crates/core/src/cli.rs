//! Command-line front end: `query`, `verify`, `bench` and `gen`.
//!
//! [`run`] takes the argument list and output sinks so the binary stays a
//! one-liner and tests can drive every subcommand in-process.
//!
//! Exit codes: 0 success, 1 verification failure, 2 bad input, 3 a run hit a
//! time or enumeration limit.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::engine::{run_query, EngineConfig, EngineError, Mode, Ordering, Stats};
use crate::model::{Assignment, BayesNet, Posterior, Query, VarId};
use crate::netio::{random_network, read_network, write_bif, to_json, NetFormat, ResultRecord};
use crate::oracle::{check_factor_valid, check_nogood, posterior_bruteforce, OracleBudget, OracleError};
use crate::varelim::{min_fill_order, ve_query};
use crate::workload::{random_instance, Family, Instance, RandomSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MISMATCH: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_LIMIT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "valelim", version, about = "Exact posterior inference by Value Elimination")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute one posterior and print a result line.
    Query(QueryArgs),
    /// Cross-check every engine on seeded random networks.
    Verify(VerifyArgs),
    /// Run engines over an instance family and summarize node counts.
    Bench(BenchArgs),
    /// Write a seeded random network.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineName {
    GenAndSum,
    ProbBt,
    ValueElim,
    VariableElim,
    BruteForce,
}

impl EngineName {
    fn mode(self) -> Option<Mode> {
        match self {
            EngineName::GenAndSum => Some(Mode::GenAndSum),
            EngineName::ProbBt => Some(Mode::ProbBt),
            EngineName::ValueElim => Some(Mode::ValueElim),
            EngineName::VariableElim | EngineName::BruteForce => None,
        }
    }

    fn label(self) -> &'static str {
        match self {
            EngineName::VariableElim => "variable-elim",
            EngineName::BruteForce => "brute-force",
            other => other.mode().unwrap().name(),
        }
    }
}

#[derive(Debug, Clone, Args)]
struct EngineArgs {
    /// `min-fill`, `dynamic`, `id`, or a file listing variable names.
    #[arg(long, default_value = "min-fill")]
    order: String,
    /// Maximum number of cached factors.
    #[arg(long)]
    cache_budget: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seconds before a search run is abandoned.
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(long)]
    no_fc: bool,
    #[arg(long)]
    no_nogoods: bool,
    /// Keep barren variables in the searched network.
    #[arg(long)]
    no_barren: bool,
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[arg(long)]
    net: PathBuf,
    /// Comma-separated `Name=Label` pairs.
    #[arg(long, default_value = "")]
    evidence: String,
    #[arg(long)]
    query: String,
    #[arg(long, value_enum, default_value = "value-elim")]
    engine: EngineName,
    #[command(flatten)]
    search: EngineArgs,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 200)]
    trials: u64,
    #[arg(long, default_value_t = 10)]
    vars: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    max_parents: usize,
    #[arg(long, default_value_t = 3)]
    max_domain: usize,
    #[arg(long, default_value_t = 0.25)]
    zero_fraction: f64,
    /// Perturbs one posterior so the harness must fail.
    #[arg(long, hide = true)]
    corrupt: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyName {
    DisjointChains,
    SingleChain,
    Random,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_enum)]
    family: FamilyName,
    /// Chain lengths, or variable counts for `random`.
    #[arg(long, value_delimiter = ',', default_value = "10,20,40")]
    sizes: Vec<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "value-elim")]
    engines: Vec<EngineName>,
    /// Random instances per size.
    #[arg(long, default_value_t = 10)]
    trials: u64,
    #[arg(long, default_value_t = 0.25)]
    zero_fraction: f64,
    #[command(flatten)]
    search: EngineArgs,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Output path; `.json` selects JSON, anything else BIF.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    vars: usize,
    #[arg(long, default_value_t = 3)]
    max_parents: usize,
    #[arg(long, default_value_t = 3)]
    max_domain: usize,
    #[arg(long, default_value_t = 0.25)]
    zero_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{}", e.render());
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Query(a) => cmd_query(&a, out),
        Command::Verify(a) => cmd_verify(&a, out),
        Command::Bench(a) => cmd_bench(&a, out),
        Command::Gen(a) => cmd_gen(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            if is_limit(&e) {
                EXIT_LIMIT
            } else {
                EXIT_INPUT
            }
        }
    }
}

fn is_limit(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        matches!(
            c.downcast_ref::<EngineError>(),
            Some(EngineError::Timeout { .. } | EngineError::NodeLimit { .. })
        ) || matches!(c.downcast_ref::<OracleError>(), Some(OracleError::BudgetExceeded { .. }))
    })
}

fn resolve_var(net: &BayesNet, name: &str) -> anyhow::Result<VarId> {
    net.var_by_name(name).ok_or_else(|| {
        let known: Vec<&str> = net.variables().iter().map(|v| v.name.as_str()).collect();
        anyhow!("unknown variable '{name}' (known: {})", known.join(", "))
    })
}

/// Resolves `Name=Label,...` against `net`.
pub fn parse_evidence(net: &BayesNet, spec: &str) -> anyhow::Result<Vec<Assignment>> {
    let mut evidence = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, label) = item
            .split_once('=')
            .ok_or_else(|| anyhow!("evidence item '{item}' is not Name=Label"))?;
        let var = resolve_var(net, name.trim())?;
        let variable = net.variable(var);
        let value = variable.value_index(label.trim()).ok_or_else(|| {
            anyhow!(
                "variable '{}' has no value '{}' (valid: {})",
                variable.name,
                label.trim(),
                variable.domain.join(", ")
            )
        })?;
        evidence.push(Assignment::new(var, value));
    }
    Ok(evidence)
}

enum OrderSpec {
    MinFill,
    Dynamic,
    Id,
    Listed(Vec<VarId>),
}

impl OrderSpec {
    fn parse(net: &BayesNet, text: &str) -> anyhow::Result<Self> {
        Ok(match text {
            "min-fill" => OrderSpec::MinFill,
            "dynamic" => OrderSpec::Dynamic,
            "id" => OrderSpec::Id,
            path => {
                let body = std::fs::read_to_string(path).with_context(|| format!("reading order file {path}"))?;
                let names = body.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty());
                OrderSpec::Listed(names.map(|n| resolve_var(net, n)).collect::<anyhow::Result<_>>()?)
            }
        })
    }

    fn label(&self) -> &'static str {
        match self {
            OrderSpec::MinFill => "min-fill",
            OrderSpec::Dynamic => "dynamic",
            OrderSpec::Id => "id",
            OrderSpec::Listed(_) => "file",
        }
    }

    fn search_ordering(&self) -> Ordering {
        match self {
            OrderSpec::MinFill => Ordering::MinFillReverse,
            OrderSpec::Dynamic => Ordering::Dynamic(None),
            OrderSpec::Id => Ordering::Static(Vec::new()),
            OrderSpec::Listed(list) => Ordering::Static(list.clone()),
        }
    }

    /// Elimination order over the non-evidence, non-query variables.
    fn elimination(&self, net: &BayesNet, query: &Query) -> Vec<VarId> {
        let keep = |v: &VarId| *v != query.query_var && !query.is_evidence(*v);
        match self {
            OrderSpec::MinFill | OrderSpec::Dynamic => {
                let mut excluded: Vec<VarId> = query.evidence.iter().map(|a| a.var).collect();
                excluded.push(query.query_var);
                min_fill_order(net, &excluded)
            }
            OrderSpec::Id => (0..net.len()).filter(keep).collect(),
            OrderSpec::Listed(list) => {
                let mut order: Vec<VarId> = Vec::new();
                for &v in list.iter().filter(|v| keep(v)) {
                    if !order.contains(&v) {
                        order.push(v);
                    }
                }
                order.extend((0..net.len()).filter(|v| keep(v) && !list.contains(v)));
                order
            }
        }
    }
}

fn engine_config(args: &EngineArgs, mode: Mode, order: &OrderSpec) -> EngineConfig {
    EngineConfig {
        mode,
        ordering: order.search_ordering(),
        cache_budget: args.cache_budget,
        nogoods: !args.no_nogoods,
        forward_checking: !args.no_fc,
        barren_removal: !args.no_barren,
        seed: args.seed,
        timeout: args.timeout.map(Duration::from_secs_f64),
        ..EngineConfig::default()
    }
}

/// Runs one engine; search engines report their stats, the baselines report
/// wall time only.
fn solve(
    net: &BayesNet,
    query: &Query,
    engine: EngineName,
    order: &OrderSpec,
    args: &EngineArgs,
) -> anyhow::Result<(Posterior, Stats)> {
    let start = std::time::Instant::now();
    let (posterior, mut stats) = match engine.mode() {
        Some(mode) => {
            let out = run_query(net, query, &engine_config(args, mode, order))?;
            (out.posterior, out.stats)
        }
        None if engine == EngineName::VariableElim => {
            (ve_query(net, query, &order.elimination(net, query))?, Stats::default())
        }
        None => (posterior_bruteforce(net, query, OracleBudget::default())?, Stats::default()),
    };
    if engine.mode().is_none() {
        stats.wall = start.elapsed();
    }
    Ok((posterior, stats))
}

fn cmd_query(args: &QueryArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let net = read_network(&args.net)?;
    let evidence = parse_evidence(&net, &args.evidence)?;
    let query_var = resolve_var(&net, &args.query)?;
    let query = Query::new(evidence, query_var)?;
    let order = OrderSpec::parse(&net, &args.search.order)?;
    let (posterior, stats) = solve(&net, &query, args.engine, &order, &args.search)?;
    let record = ResultRecord {
        engine: args.engine.label().to_string(),
        ordering: order.label().to_string(),
        query: net.variable(query_var).name.clone(),
        posterior,
        stats,
    };
    writeln!(out, "{}", record.emit())?;
    Ok(EXIT_OK)
}

fn cmd_gen(args: &GenArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    if args.vars == 0 || args.max_domain < 2 {
        bail!("gen needs --vars >= 1 and --max-domain >= 2");
    }
    let net = random_network(args.vars, args.max_parents, args.max_domain, args.zero_fraction, args.seed);
    let text = match NetFormat::from_path(&args.out) {
        NetFormat::Json => to_json(&net),
        NetFormat::Bif => write_bif(&net),
    };
    std::fs::write(&args.out, text).with_context(|| format!("writing {}", args.out.display()))?;
    writeln!(out, "wrote {} variables to {}", net.len(), args.out.display())?;
    Ok(EXIT_OK)
}

/// Verification line-up: every search engine, ordering and cache budget that
/// must agree with enumeration.
fn verify_configs() -> Vec<(String, EngineConfig)> {
    let mut configs = vec![("gen-and-sum".to_string(), EngineConfig::with_mode(Mode::GenAndSum))];
    for ordering in [Ordering::MinFillReverse, Ordering::Dynamic(None)] {
        configs.push((
            format!("prob-bt/{}", ordering.name()),
            EngineConfig {
                ordering: ordering.clone(),
                ..EngineConfig::with_mode(Mode::ProbBt)
            },
        ));
        for budget in [None, Some(8), Some(1)] {
            let budget_label = budget.map_or("inf".to_string(), |b| b.to_string());
            configs.push((
                format!("value-elim/{}/budget={budget_label}", ordering.name()),
                EngineConfig {
                    ordering: ordering.clone(),
                    cache_budget: budget,
                    trace: true,
                    ..EngineConfig::with_mode(Mode::ValueElim)
                },
            ));
        }
    }
    configs
}

struct Failure {
    seed: u64,
    what: String,
}

fn verify_trial(
    net: &BayesNet,
    query: &Query,
    corrupt: bool,
    max_disagreement: &mut f64,
    checked: &mut (u64, u64),
) -> anyhow::Result<Option<String>> {
    let want = posterior_bruteforce(net, query, OracleBudget::default())?;
    let mut failure = None;
    let mut note = |what: String| {
        failure.get_or_insert(what);
    };
    let mut compare = |got: &Posterior| {
        let d = got.max_abs_diff(&want);
        *max_disagreement = max_disagreement.max(d);
        d
    };

    let mut excluded: Vec<VarId> = query.evidence.iter().map(|a| a.var).collect();
    excluded.push(query.query_var);
    let ve = ve_query(net, query, &min_fill_order(net, &excluded))?;
    let d = compare(&ve);
    if d > 1e-9 {
        note(format!("engine=variable-elim disagreement={d:e}"));
    }

    let configs = verify_configs();
    let last = configs.len() - 1;
    for (i, (name, config)) in configs.into_iter().enumerate() {
        let out = run_query(net, query, &config)?;
        let mut posterior = out.posterior.clone();
        if corrupt && i == last {
            if let Posterior::Distribution(p) = &mut posterior {
                p[0] += 1e-3;
            }
        }
        let d = compare(&posterior);
        if d > 1e-9 {
            note(format!("engine={name} disagreement={d:e}"));
        }
        let rnet = &out.reduction.net;
        for tf in &out.trace.factors {
            checked.0 += 1;
            let verdict = check_factor_valid(rnet, &tf.factor, OracleBudget::default())?;
            if !verdict.is_valid() {
                note(format!("engine={name} invalid factor {} ({verdict:?})", tf.factor));
            }
        }
        for ng in &out.trace.nogoods {
            checked.1 += 1;
            if !check_nogood(rnet, &ng.assignments, OracleBudget::default())?.is_sound() {
                note(format!("engine={name} unsound nogood {:?}", ng.assignments));
            }
        }
    }
    Ok(failure)
}

fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    if args.vars == 0 || args.max_domain < 2 {
        bail!("verify needs --vars >= 1 and --max-domain >= 2");
    }
    let spec = RandomSpec {
        vars: args.vars,
        max_parents: args.max_parents,
        max_domain: args.max_domain,
        zero_fraction: args.zero_fraction,
    };
    let mut max_disagreement = 0.0f64;
    let mut checked = (0, 0);
    let mut failures = Vec::new();
    for t in 0..args.trials {
        let seed = args.seed.wrapping_add(t);
        let (net, query) = random_instance(spec, seed);
        let corrupt = args.corrupt && t == 0;
        if let Some(what) = verify_trial(&net, &query, corrupt, &mut max_disagreement, &mut checked)? {
            failures.push(Failure { seed, what });
        }
    }
    for f in &failures {
        writeln!(out, "FAIL seed={} {}", f.seed, f.what)?;
        writeln!(
            out,
            "reproduce: valelim verify --trials 1 --seed {} --vars {} --max-parents {} --max-domain {} --zero-fraction {}{}",
            f.seed,
            args.vars,
            args.max_parents,
            args.max_domain,
            args.zero_fraction,
            if args.corrupt && f.seed == args.seed { " --corrupt" } else { "" },
        )?;
    }
    writeln!(
        out,
        "trials={} max_disagreement={max_disagreement:e} factors_checked={} nogoods_checked={} failures={}",
        args.trials,
        checked.0,
        checked.1,
        failures.len()
    )?;
    Ok(if failures.is_empty() { EXIT_OK } else { EXIT_MISMATCH })
}

fn family_instances(args: &BenchArgs, size: usize) -> Vec<Instance> {
    let family = match args.family {
        FamilyName::DisjointChains => Family::DisjointChains(size),
        FamilyName::SingleChain => Family::SingleChain(size),
        FamilyName::Random => Family::Random {
            spec: RandomSpec {
                vars: size,
                zero_fraction: args.zero_fraction,
                ..RandomSpec::default()
            },
            from: args.search.seed,
            to: args.search.seed + args.trials,
        },
    };
    family.instances()
}

#[derive(Default, Clone, Copy)]
struct Tally {
    runs: u64,
    failed: u64,
    nodes: u64,
}

fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let mut tallies = vec![vec![Tally::default(); args.sizes.len()]; args.engines.len()];
    for (si, &size) in args.sizes.iter().enumerate() {
        if size == 0 {
            bail!("instance sizes must be positive");
        }
        for inst in family_instances(args, size) {
            let order = OrderSpec::parse(&inst.net, &args.search.order)?;
            for (ei, &engine) in args.engines.iter().enumerate() {
                let tally = &mut tallies[ei][si];
                tally.runs += 1;
                match solve(&inst.net, &inst.query, engine, &order, &args.search) {
                    Ok((posterior, stats)) => {
                        tally.nodes += stats.nodes;
                        let record = ResultRecord {
                            engine: engine.label().to_string(),
                            ordering: order.label().to_string(),
                            query: inst.net.variable(inst.query.query_var).name.clone(),
                            posterior,
                            stats,
                        };
                        writeln!(out, "instance={}\t{}", inst.label, record.emit())?;
                    }
                    Err(e) if is_limit(&e) => {
                        tally.failed += 1;
                        writeln!(out, "instance={}\tengine={}\tfailed={e}", inst.label, engine.label())?;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    let mut summary = String::new();
    for (ei, engine) in args.engines.iter().enumerate() {
        for (si, size) in args.sizes.iter().enumerate() {
            let t = tallies[ei][si];
            writeln!(
                summary,
                "summary engine={} size={size} runs={} failed={} nodes={}",
                engine.label(),
                t.runs,
                t.failed,
                t.nodes
            )?;
            if si > 0 {
                let prev = tallies[ei][si - 1];
                if t.failed == 0 && prev.failed == 0 && prev.nodes > 0 {
                    writeln!(
                        summary,
                        "ratio engine={} sizes={}->{size} nodes_ratio={:.3}",
                        engine.label(),
                        args.sizes[si - 1],
                        t.nodes as f64 / prev.nodes as f64
                    )?;
                }
            }
        }
    }
    out.write_all(summary.as_bytes())?;
    Ok(EXIT_OK)
}

/// Convenience for tests: runs `args` and captures both streams.
pub fn run_captured(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("valelim").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8_lossy(&out).into_owned(),
        String::from_utf8_lossy(&err).into_owned(),
    )
}
