//! Command-line front end shared by the `psni` binary and the tests.
//!
//! [`run`] never prints or exits; it returns the exit status together with
//! the text destined for stdout and stderr.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::ctmc::{build_generator, format_entry, steady_state, CtmcError, Generator};
use crate::lumping::{coarsest_lumpable_partition, IgnoredActions};
use crate::parser::{lint_high, parse_model_with_warnings, render_model, ParseDiagnostic};
use crate::security::{check_psni_on_graph, low_view_report_on_graph, Method, PsniVerdict, SecurityError, Witness};
use crate::semantics::{derive_system, DerivationGraph, SemanticsError, DEFAULT_MAX_STATES};
use crate::terms::{rational_to_f64, ActionSet, ActionType, ModelEnv, Rate};

pub const MAX_STATES_ENV: &str = "PSNI_MAX_STATES";

pub const EXIT_OK: i32 = 0;
pub const EXIT_PSNI_FAILS: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Parse,
    Graph,
    Ctmc,
    Steady,
    Lump,
    Check,
    Report,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
    Dot,
}

/// Which actions the `lump` command ignores next to `tau`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Ignored {
    #[value(name = "tau")]
    Tau,
    #[value(name = "high,tau", alias = "tau,high")]
    HighTau,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Bisim,
    Unwinding,
    Both,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Bisim => Method::Bisim,
            MethodArg::Unwinding => Method::Unwinding,
            MethodArg::Both => Method::Both,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    pub input_path: PathBuf,
    pub command: Command,
    pub high_override: Option<Vec<String>>,
    pub max_states: usize,
    pub method: Method,
    pub output_format: OutputFormat,
    pub ignored: Ignored,
}

impl RunConfig {
    /// Defaults for everything but the command and input; the state cap falls
    /// back to `PSNI_MAX_STATES` when set.
    pub fn new(command: Command, input_path: impl Into<PathBuf>) -> Self {
        RunConfig {
            input_path: input_path.into(),
            command,
            high_override: None,
            max_states: max_states_from_env().unwrap_or(DEFAULT_MAX_STATES),
            method: Method::Both,
            output_format: OutputFormat::Text,
            ignored: Ignored::Tau,
        }
    }
}

fn max_states_from_env() -> Option<usize> {
    std::env::var(MAX_STATES_ENV).ok()?.trim().parse().ok()
}

#[derive(Parser, Debug)]
#[command(name = "psni", version, about = "PEPA persistent stochastic non-interference checker")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Subcommand, Debug)]
pub enum CliCommand {
    /// Validate a model and echo it in canonical form
    Parse(CommonArgs),
    /// Reachable derivation graph
    Graph(CommonArgs),
    /// Infinitesimal generator
    Ctmc(CommonArgs),
    /// Steady-state distribution
    Steady(CommonArgs),
    /// Coarsest lumpable bisimulation partition
    Lump(CommonArgs),
    /// Decide PSNI
    Check(CommonArgs),
    /// Compare the steady states of P/H and P\H
    Report(CommonArgs),
}

#[derive(clap::Args, Debug)]
pub struct CommonArgs {
    /// Model file (.pepa)
    pub input: PathBuf,
    /// High action types, overriding the in-file declaration
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub high: Option<Vec<String>>,
    /// Exploration cap [default: $PSNI_MAX_STATES or 100000]
    #[arg(long)]
    pub max_states: Option<usize>,
    #[arg(long, value_enum, default_value = "both")]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value = "text")]
    pub format: OutputFormat,
    /// Shorthand for --format json
    #[arg(long, conflicts_with = "dot")]
    pub json: bool,
    /// Shorthand for --format dot
    #[arg(long)]
    pub dot: bool,
    /// Actions ignored by `lump`
    #[arg(long, value_enum, default_value = "tau")]
    pub ignored: Ignored,
}

impl Cli {
    pub fn into_config(self) -> RunConfig {
        let (command, args) = match self.command {
            CliCommand::Parse(a) => (Command::Parse, a),
            CliCommand::Graph(a) => (Command::Graph, a),
            CliCommand::Ctmc(a) => (Command::Ctmc, a),
            CliCommand::Steady(a) => (Command::Steady, a),
            CliCommand::Lump(a) => (Command::Lump, a),
            CliCommand::Check(a) => (Command::Check, a),
            CliCommand::Report(a) => (Command::Report, a),
        };
        let mut cfg = RunConfig::new(command, args.input);
        cfg.high_override = args.high.map(|v| v.into_iter().filter(|s| !s.trim().is_empty()).collect());
        if let Some(m) = args.max_states {
            cfg.max_states = m;
        }
        cfg.method = args.method.into();
        cfg.output_format = if args.json {
            OutputFormat::Json
        } else if args.dot {
            OutputFormat::Dot
        } else {
            args.format
        };
        cfg.ignored = args.ignored;
        cfg
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunOutput {
    pub exit_code: i32,
    pub stdout: String,
    pub stderr: String,
}

struct Failure {
    code: i32,
    kind: &'static str,
    message: String,
    details: Vec<String>,
}

impl Failure {
    fn input(kind: &'static str, message: impl Into<String>) -> Self {
        Failure { code: EXIT_INPUT, kind, message: message.into(), details: Vec::new() }
    }

    fn resource(kind: &'static str, message: impl Into<String>) -> Self {
        Failure { code: EXIT_RESOURCE, kind, message: message.into(), details: Vec::new() }
    }
}

impl From<SemanticsError> for Failure {
    fn from(e: SemanticsError) -> Self {
        match e {
            SemanticsError::StateSpaceExceeded(_) => Failure::resource("state_space_exceeded", e.to_string()),
            SemanticsError::UndefinedConstant(_) => Failure::input("undefined_constant", e.to_string()),
            SemanticsError::UnguardedRecursion(_) => Failure::input("unguarded_recursion", e.to_string()),
            SemanticsError::MixedRateSum { .. } => Failure::input("mixed_rate_sum", e.to_string()),
            SemanticsError::InvalidLimit => Failure::input("invalid_limit", e.to_string()),
        }
    }
}

impl From<CtmcError> for Failure {
    fn from(e: CtmcError) -> Self {
        match e {
            CtmcError::PassiveRateReachable { .. } => Failure::input("passive_rate_reachable", e.to_string()),
            CtmcError::NotIrreducible { .. } => Failure::resource("not_irreducible", e.to_string()),
            CtmcError::SingularSystem | CtmcError::Empty => Failure::resource("solver", e.to_string()),
            CtmcError::NotConverged { .. } => Failure::resource("not_converged", e.to_string()),
        }
    }
}

impl From<SecurityError> for Failure {
    fn from(e: SecurityError) -> Self {
        match e {
            SecurityError::Semantics(e) => e.into(),
            SecurityError::Ctmc(e) => e.into(),
            SecurityError::MethodDisagreement { .. } => Failure::resource("internal", e.to_string()),
        }
    }
}

/// Reads `cfg.input_path` and dispatches the command.
pub fn run(cfg: &RunConfig) -> RunOutput {
    match std::fs::read_to_string(&cfg.input_path) {
        Ok(src) => run_source(cfg, &src),
        Err(e) => {
            let message = if e.kind() == std::io::ErrorKind::NotFound {
                format!("file not found: {}", cfg.input_path.display())
            } else {
                format!("cannot read {}: {e}", cfg.input_path.display())
            };
            failure_output(cfg, Failure::input("io", message), &[])
        }
    }
}

/// Like [`run`] but on model source already in memory.
pub fn run_source(cfg: &RunConfig, source: &str) -> RunOutput {
    let mut warnings = Vec::new();
    match dispatch(cfg, source, &mut warnings) {
        Ok((code, stdout)) => RunOutput { exit_code: code, stdout, stderr: render_warnings(&warnings) },
        Err(f) => failure_output(cfg, f, &warnings),
    }
}

fn render_warnings(warnings: &[ParseDiagnostic]) -> String {
    warnings.iter().map(|w| format!("{w}\n")).collect()
}

fn failure_output(cfg: &RunConfig, f: Failure, warnings: &[ParseDiagnostic]) -> RunOutput {
    let mut stderr = render_warnings(warnings);
    let stdout = if cfg.output_format == OutputFormat::Json {
        let v = json!({
            "error": { "kind": f.kind, "message": f.message, "details": f.details },
            "exit": f.code,
        });
        to_json(&v)
    } else {
        String::new()
    };
    let _ = writeln!(stderr, "error: {}", f.message);
    for d in &f.details {
        let _ = writeln!(stderr, "  {d}");
    }
    RunOutput { exit_code: f.code, stdout, stderr }
}

fn load_env(cfg: &RunConfig, source: &str, warnings: &mut Vec<ParseDiagnostic>) -> Result<ModelEnv, Failure> {
    let parsed = parse_model_with_warnings(source).map_err(|errs| Failure {
        code: EXIT_INPUT,
        kind: "parse",
        message: format!("{} parse error(s)", errs.0.len()),
        details: errs.0.iter().map(|d| d.to_string()).collect(),
    })?;
    let Some(names) = &cfg.high_override else {
        warnings.extend(parsed.warnings);
        return Ok(parsed.env);
    };
    let mut high = ActionSet::new();
    for n in names {
        let a = ActionType::new(n.trim()).map_err(|e| Failure::input("high_override", format!("--high: {e}")))?;
        high.insert(a);
    }
    let env = parsed.env.with_high(high).map_err(|e| Failure::input("high_override", format!("--high: {e}")))?;
    warnings.extend(parsed.warnings.into_iter().filter(|w| !w.message.starts_with("high action")));
    warnings.extend(lint_high(&env, (1, 1)));
    Ok(env)
}

fn dispatch(cfg: &RunConfig, source: &str, warnings: &mut Vec<ParseDiagnostic>) -> Result<(i32, String), Failure> {
    if cfg.max_states == 0 {
        return Err(Failure::input("invalid_limit", "max-states must be at least 1"));
    }
    if cfg.output_format == OutputFormat::Dot && cfg.command != Command::Graph {
        return Err(Failure::input("format", "dot output is only available for the graph command"));
    }
    let env = load_env(cfg, source, warnings)?;
    let json = cfg.output_format == OutputFormat::Json;
    if cfg.command == Command::Parse {
        let text = render_model(&env);
        let out = if json {
            let v = json!({
                "model": text,
                "high": env.high().iter().map(|a| a.name()).collect::<Vec<_>>(),
                "constants": env.defs().keys().map(|k| k.as_ref()).collect::<Vec<_>>(),
                "system": crate::parser::render_term(env.system()),
                "warnings": warnings.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
            });
            to_json(&v)
        } else {
            text
        };
        return Ok((EXIT_OK, out));
    }
    let g = derive_system(&env, cfg.max_states)?;
    match cfg.command {
        Command::Parse => unreachable!(),
        Command::Graph => Ok((
            EXIT_OK,
            match cfg.output_format {
                OutputFormat::Text => graph_text(&g),
                OutputFormat::Json => to_json(&graph_json(&g)),
                OutputFormat::Dot => graph_dot(&g),
            },
        )),
        Command::Ctmc => {
            let q = build_generator(&g)?;
            Ok((EXIT_OK, if json { to_json(&generator_json(&g, &q)) } else { generator_text(&g, &q) }))
        }
        Command::Steady => {
            let pi = steady_state(&build_generator(&g)?)?;
            let out = if json {
                to_json(&json!({
                    "states": (0..g.state_count())
                        .map(|s| json!({ "id": s, "label": g.label(s), "probability": pi.probs[s] }))
                        .collect::<Vec<_>>(),
                    "residual": pi.residual,
                }))
            } else {
                let mut s = String::new();
                for (i, p) in pi.probs.iter().enumerate() {
                    let _ = writeln!(s, "{i:>4}  {p:.12}  {}", g.label(i));
                }
                let _ = writeln!(s, "residual: {:e}", pi.residual);
                s
            };
            Ok((EXIT_OK, out))
        }
        Command::Lump => {
            let ignored = match cfg.ignored {
                Ignored::Tau => IgnoredActions::tau_only(),
                Ignored::HighTau => IgnoredActions::with(env.high()),
            };
            let p = coarsest_lumpable_partition(&g, &ignored, None);
            let out = if json {
                to_json(&json!({
                    "ignored": ignored.visible().iter().map(|a| a.name()).chain(["tau"]).collect::<Vec<_>>(),
                    "states": g.state_count(),
                    "block_count": p.block_count(),
                    "blocks": p.blocks().iter().map(|b| json!({
                        "states": b,
                        "labels": b.iter().map(|&s| g.label(s)).collect::<Vec<_>>(),
                    })).collect::<Vec<_>>(),
                }))
            } else {
                let mut s = format!("ignored: {ignored}\n{} blocks over {} states\n", p.block_count(), g.state_count());
                for (i, b) in p.blocks().iter().enumerate() {
                    let labels: Vec<_> = b.iter().map(|&st| format!("{st}:{}", g.label(st))).collect();
                    let _ = writeln!(s, "  B{i}: {}", labels.join(", "));
                }
                s
            };
            Ok((EXIT_OK, out))
        }
        Command::Check => {
            let v = check_psni_on_graph(&g, env.high(), cfg.method)?;
            let code = if v.holds { EXIT_OK } else { EXIT_PSNI_FAILS };
            Ok((code, if json { to_json(&verdict_json(&g, &v)) } else { verdict_text(&g, &v) }))
        }
        Command::Report => {
            let r = low_view_report_on_graph(&g, env.high())?;
            let out = if json {
                let view = |v: &crate::security::ViewDistribution| {
                    json!({
                        "states": v.labels.iter().zip(&v.steady.probs)
                            .enumerate()
                            .map(|(i, (l, p))| json!({ "id": i, "label": l, "probability": p }))
                            .collect::<Vec<_>>(),
                        "residual": v.steady.residual,
                    })
                };
                to_json(&json!({
                    "hidden": view(&r.hidden),
                    "restricted": view(&r.restricted),
                    "classes": r.classes.iter().map(|c| json!({
                        "hidden_states": c.hidden_states,
                        "restricted_states": c.restricted_states,
                        "hidden_mass": c.hidden_mass,
                        "restricted_mass": c.restricted_mass,
                        "agrees": c.agrees(),
                    })).collect::<Vec<_>>(),
                    "consistent": r.consistent(),
                }))
            } else {
                let mut s = String::new();
                for (name, v) in [("P/H", &r.hidden), ("P\\H", &r.restricted)] {
                    let _ = writeln!(s, "{name}:");
                    for (i, (l, p)) in v.labels.iter().zip(&v.steady.probs).enumerate() {
                        let _ = writeln!(s, "{i:>4}  {p:.12}  {l}");
                    }
                }
                let _ = writeln!(s, "classes (lumpable bisimilarity on the union):");
                for (i, c) in r.classes.iter().enumerate() {
                    let _ = writeln!(
                        s,
                        "  C{i}: P/H {:?} mass {:.12} | P\\H {:?} mass {:.12} {}",
                        c.hidden_states,
                        c.hidden_mass,
                        c.restricted_states,
                        c.restricted_mass,
                        if c.agrees() { "ok" } else { "DIFFERS" }
                    );
                }
                let _ = writeln!(s, "low views {}", if r.consistent() { "consistent" } else { "inconsistent" });
                s
            };
            Ok((EXIT_OK, out))
        }
    }
}

fn to_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values always serialize");
    s.push('\n');
    s
}

/// Exact string plus a float; passive rates carry their weight and no float.
pub fn rate_json(rate: &Rate) -> Value {
    match rate {
        Rate::Finite(r) => json!({ "exact": format_entry(r), "float": rational_to_f64(r), "passive": false }),
        Rate::Passive(w) => json!({ "exact": rate.to_string(), "float": null, "passive": true, "weight": format_entry(w) }),
    }
}

fn graph_text(g: &DerivationGraph) -> String {
    let mut s = format!("states: {}\n", g.state_count());
    for i in 0..g.state_count() {
        let _ = writeln!(s, "{i:>4}  {}", g.label(i));
    }
    let _ = writeln!(s, "transitions: {}", g.transitions().len());
    for t in g.transitions() {
        let _ = writeln!(s, "{:>4} --({}, {})x{}--> {}", t.source, t.action, t.rate, t.multiplicity, t.target);
    }
    s
}

pub fn graph_json(g: &DerivationGraph) -> Value {
    json!({
        "states": (0..g.state_count()).map(|s| json!({ "id": s, "label": g.label(s) })).collect::<Vec<_>>(),
        "transitions": g.transitions().iter().map(|t| json!({
            "source": t.source,
            "action": t.action.name(),
            "rate": rate_json(&t.rate),
            "multiplicity": t.multiplicity,
            "target": t.target,
        })).collect::<Vec<_>>(),
    })
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz digraph: one node per state, one edge per transition record.
pub fn graph_dot(g: &DerivationGraph) -> String {
    let mut s = String::from("digraph derivation {\n  node [shape=box];\n");
    for i in 0..g.state_count() {
        let _ = writeln!(s, "  s{i} [label=\"{}\"];", dot_escape(&g.label(i)));
    }
    for t in g.transitions() {
        let label = format!("({}, {})×{}", t.action, t.rate, t.multiplicity);
        let _ = writeln!(s, "  s{} -> s{} [label=\"{}\"];", t.source, t.target, dot_escape(&label));
    }
    s.push_str("}\n");
    s
}

fn generator_json(g: &DerivationGraph, q: &Generator) -> Value {
    let mut entries = Vec::new();
    for i in 0..q.size() {
        let mut row: Vec<(usize, _)> = q.row(i).iter().map(|(&j, r)| (j, r.clone())).collect();
        row.push((i, q.diagonal()[i].clone()));
        row.sort_by_key(|e| e.0);
        for (j, r) in row {
            if num_traits::Zero::is_zero(&r) {
                continue;
            }
            entries.push(json!({ "row": i, "col": j, "exact": format_entry(&r), "float": rational_to_f64(&r) }));
        }
    }
    json!({
        "size": q.size(),
        "labels": (0..g.state_count()).map(|s| g.label(s)).collect::<Vec<_>>(),
        "entries": entries,
    })
}

fn generator_text(g: &DerivationGraph, q: &Generator) -> String {
    let mut s = format!("generator: {} states\n", q.size());
    for i in 0..q.size() {
        let mut parts = vec![format!("q[{i},{i}] = {}", format_entry(&q.diagonal()[i]))];
        parts.extend(q.row(i).iter().map(|(j, r)| format!("q[{i},{j}] = {}", format_entry(r))));
        let _ = writeln!(s, "{i:>4}  {}  ({})", parts.join(", "), g.label(i));
    }
    s
}

fn witness_json(g: &DerivationGraph, w: &Option<Witness>) -> Value {
    match w {
        None => Value::Null,
        Some(Witness::HighTransition { source, action, rate, target }) => json!({
            "kind": "high_transition",
            "source": source,
            "source_label": g.label(*source),
            "action": action.name(),
            "rate": rate_json(rate),
            "target": target,
            "target_label": g.label(*target),
        }),
        Some(Witness::RootPair { restricted_root, root }) => json!({
            "kind": "root_pair",
            "restricted_root": restricted_root,
            "root": root,
            "label": g.label(0),
        }),
    }
}

pub fn verdict_json(g: &DerivationGraph, v: &PsniVerdict) -> Value {
    json!({
        "holds": v.holds,
        "method": v.method.to_string(),
        "witness": witness_json(g, &v.witness),
        "states": v.states,
        "blocks": { "count": v.partition.block_count, "sizes": v.partition.block_sizes },
        "diagnostics": v.diagnostics,
        "unwinding_checks": v.unwinding_checks.iter().map(|c| json!({
            "source": c.source,
            "action": c.action.name(),
            "rate": rate_json(&c.rate),
            "target": c.target,
            "equivalent": c.equivalent,
        })).collect::<Vec<_>>(),
    })
}

fn verdict_text(g: &DerivationGraph, v: &PsniVerdict) -> String {
    let mut s = format!(
        "PSNI: {} (method {}, {} states, {} blocks)\n",
        if v.holds { "HOLDS" } else { "FAIL" },
        v.method,
        v.states,
        v.partition.block_count
    );
    match &v.witness {
        Some(Witness::HighTransition { source, action, rate, target }) => {
            let _ = writeln!(s, "witness: {} --({action}, {rate})--> {}", g.label(*source), g.label(*target));
        }
        Some(Witness::RootPair { .. }) => {
            let _ = writeln!(s, "witness: {0}\\H and {0} are not lumpably bisimilar up to H", g.label(0));
        }
        None => {}
    }
    for d in &v.diagnostics {
        let _ = writeln!(s, "  {d}");
    }
    s
}
