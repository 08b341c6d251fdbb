//! Command-line front end for the fIET laboratory.
//!
//! Every subcommand resolves its inputs to exact values, runs one library
//! operation, and emits two things: a primary payload (CSV table or JSON
//! object) and a JSON run record embedding the resolved configuration
//! verbatim. Identical configurations give byte-identical payloads, and
//! every output names the git-describe version plus the master seed.
//!
//! Exit codes: 0 success (terminal verdicts like ties and holes included),
//! 2 invalid input or usage, 3 when a step budget or undecidable comparison
//! ended the run without an answer.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Read, Write as _};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use fietlab::construct::{glue_flip, golden_rotation, rotation_iet};
use fietlab::dynamics::{detect_periodic, iterate_orbit, orbit_csv, StopReason};
use fietlab::fiet::{FietRecord, FlipIET};
use fietlab::graph::{build_graph, find_positive_loop, GraphTarget};
use fietlab::induction::{
    arrow_for, rauzy_step, zorich_step, InductionError, RauzyPath, StepCase, StepOutcome,
    ZorichOutcome,
};
use fietlab::lab::experiments::{
    box_dimension, distortion_experiment, expansion_check, fast_decay_check,
    kerckhoff_experiment, roof_tail, survival_fraction,
};
use fietlab::lab::report::ExperimentReport;
use fietlab::lab::{LabError, WeightVector};
use fietlab::perm::SignedPermutation;
use fietlab::scalar::{ArithError, Backend, Scalar};

const GIT_VERSION: &str = env!("FIETLAB_GIT");
const LONG_VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("FIETLAB_GIT"), ")");

/// Default vertex budget when a subcommand has to close a class graph
/// behind the scenes to find a section loop.
const AUTO_GRAPH_LIMIT: usize = 4096;
/// Longest loop the automatic section search will consider.
const AUTO_LOOP_LEN: usize = 12;

#[derive(Parser)]
#[command(
    name = "fietlab",
    version = LONG_VERSION,
    about = "Exact laboratory for interval exchange transformations with flips",
    args_override_self = true
)]
struct Cli {
    /// key = value file whose entries override the matching long flags
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for sample sweeps (default: FIETLAB_THREADS, then all cores)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Write the primary table or payload here instead of stdout
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Write the JSON run record here (default: <out> renamed to .run.json)
    #[arg(long, global = true, value_name = "FILE")]
    record: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run right-cut induction steps and print the trace table
    Induce(InduceArgs),
    /// Iterate a map from a starting point and print the orbit table
    Orbit(OrbitArgs),
    /// Close the induction class graph from a seed permutation
    Graph(GraphArgs),
    /// Build a rotation, optionally glued into a flipped map, as a JSON record
    Construct(ConstructArgs),
    /// Fraction of length vectors alive at each induction depth
    Survival(SurvivalArgs),
    /// Short-interval hitting probabilities against the n/T ceiling
    Kerckhoff(KerckhoffArgs),
    /// Decay of cylinder-weight distortion along random induction walks
    Distortion(DistortionArgs),
    /// Tail of the return roof over a positive loop section
    Tails(TailsArgs),
    /// Exact small-mass decay of first-return words over a section
    Fastdecay(FastdecayArgs),
    /// Box-counting dimension of the set surviving deep induction
    Dimension(DimensionArgs),
    /// Projective contraction and Jacobian identity spot checks on a path
    Expansion(ExpansionArgs),
}

#[derive(Args)]
struct InduceArgs {
    /// Signed permutation text, e.g. "-2 1" (omit to read a map record from stdin)
    #[arg(long, allow_hyphen_values = true)]
    perm: Option<String>,
    /// Interval lengths, e.g. "3/10 7/10" (required with --perm)
    #[arg(long)]
    lengths: Option<String>,
    /// Length arithmetic: rational, quad:<d>, or float:<bits>
    #[arg(long, default_value = "rational")]
    backend: String,
    /// Step budget; reaching it is the SurvivedBudget verdict
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// Take accelerated steps (maximal same-case runs) instead of raw steps
    #[arg(long)]
    zorich: bool,
}

#[derive(Args)]
struct OrbitArgs {
    /// Signed permutation text (omit to read a map record from stdin)
    #[arg(long, allow_hyphen_values = true)]
    perm: Option<String>,
    /// Interval lengths (required with --perm)
    #[arg(long)]
    lengths: Option<String>,
    /// Length arithmetic: rational, quad:<d>, or float:<bits>
    #[arg(long, default_value = "rational")]
    backend: String,
    /// Starting point, parsed in the map's arithmetic
    #[arg(long, allow_hyphen_values = true)]
    start: String,
    /// Iterate budget
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    /// Also search for an exact periodic orbit within the budget
    #[arg(long)]
    detect: bool,
}

#[derive(Args)]
struct GraphArgs {
    /// Seed permutation text
    #[arg(long, allow_hyphen_values = true)]
    perm: String,
    /// Vertex budget for the closure
    #[arg(long, default_value_t = 10_000)]
    limit: usize,
    /// Output format: json (adjacency payload) or csv (edge list)
    #[arg(long, default_value = "json")]
    format: String,
}

#[derive(Args)]
struct ConstructArgs {
    /// Rotation amount as a scalar, or "golden" for the golden rotation in quad:5
    #[arg(long)]
    rotation: String,
    /// Glue the two continuity branches into a flipped map on an extended interval
    #[arg(long)]
    glue: bool,
    /// Arithmetic for parsing the rotation amount
    #[arg(long, default_value = "rational")]
    backend: String,
}

#[derive(Args)]
struct SurvivalArgs {
    /// Signed permutation text
    #[arg(long, allow_hyphen_values = true)]
    perm: String,
    /// Depth list; entries may be single values or inclusive ranges like 0..20
    #[arg(long, default_value = "0..20")]
    depths: String,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional ceiling the deepest surviving fraction must stay under
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct KerckhoffArgs {
    /// Signed permutation text
    #[arg(long, allow_hyphen_values = true)]
    perm: String,
    /// Rational cylinder weights, e.g. "1 2 3 4"
    #[arg(long)]
    weights: String,
    /// Symbol whose image interval is shrunk and hit-tested
    #[arg(long, default_value_t = 0)]
    alpha: usize,
    /// Interval shrink factors T
    #[arg(long, default_value = "2 4 8 16")]
    ts: String,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DistortionArgs {
    /// Signed permutation text
    #[arg(long, allow_hyphen_values = true)]
    perm: String,
    /// Rational cylinder weights, e.g. "1 2 3"
    #[arg(long)]
    weights: String,
    /// Distortion thresholds c
    #[arg(long, default_value = "1.5 2 4 8")]
    cs: String,
    /// Walk depth in induction steps
    #[arg(long, default_value_t = 10)]
    depth: usize,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TailsArgs {
    /// Signed permutation text naming the section vertex
    #[arg(long, allow_hyphen_values = true)]
    perm: String,
    /// Loop case word like "ABABAB" (default: shortest positive loop found)
    #[arg(long)]
    section: Option<String>,
    /// Tail cutoffs T
    #[arg(long, default_value = "2 4 8 16 32")]
    ts: String,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-sample step budget for the return map
    #[arg(long, default_value_t = 4000)]
    budget: usize,
}

#[derive(Args)]
struct FastdecayArgs {
    /// Signed permutation text naming the section vertex
    #[arg(long, allow_hyphen_values = true)]
    perm: String,
    /// Loop case word like "ABABAB" (default: shortest positive loop found)
    #[arg(long)]
    section: Option<String>,
    /// Word-depth ceiling for the exact enumeration
    #[arg(long, default_value_t = 20_000)]
    depth: usize,
    /// Mass cutoffs; default is the dyadic grid 2^-8 .. 2^-15 plus 1
    #[arg(long)]
    epsilons: Option<String>,
    /// Monte Carlo cross-check sample count
    #[arg(long, default_value_t = 12_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DimensionArgs {
    /// Signed permutation text
    #[arg(long, allow_hyphen_values = true)]
    perm: String,
    /// Induction depth defining the surviving set
    #[arg(long, default_value_t = 25)]
    depth: usize,
    /// Grid resolutions for box counting
    #[arg(long, default_value = "64 128 256 512")]
    resolutions: String,
    /// Candidate points per grid cell sweep
    #[arg(long, default_value_t = 100_000)]
    candidates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Accepted slope window, lower edge
    #[arg(long, default_value_t = 0.9)]
    slope_min: f64,
    /// Accepted slope window, upper edge
    #[arg(long, default_value_t = 2.0)]
    slope_max: f64,
}

#[derive(Args)]
struct ExpansionArgs {
    /// Signed permutation text the path starts from
    #[arg(long, allow_hyphen_values = true)]
    perm: String,
    /// Case word for the path (default: shortest positive loop found)
    #[arg(long)]
    path: Option<String>,
    /// Number of random length-vector pairs per check
    #[arg(long, default_value_t = 1000)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug)]
enum CliError {
    /// Unusable flags or inputs; exit 2.
    Invalid(String),
    /// The run ended without an answer: a step budget ran out or a
    /// comparison was undecidable at the working precision; exit 3.
    Unresolved(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Unresolved(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Unresolved(m) => write!(f, "{m}"),
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}

impl From<ArithError> for CliError {
    fn from(e: ArithError) -> CliError {
        match e {
            ArithError::Undecidable { .. } => CliError::Unresolved(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> CliError {
        match e {
            LabError::Arith(a) => a.into(),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<InductionError> for CliError {
    fn from(e: InductionError) -> CliError {
        match e {
            InductionError::BudgetExceeded { .. } => CliError::Unresolved(e.to_string()),
            InductionError::Arith(a) => a.into(),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> CliError {
        CliError::Invalid(format!("io: {e}"))
    }
}

#[derive(Serialize)]
struct RunConfig {
    subcommand: String,
    options: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct RunRecord {
    version: &'static str,
    seed: u64,
    config: RunConfig,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pass: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<serde_json::Value>,
}

enum Kind {
    Csv,
    Json,
}

struct RunOutput {
    payload: String,
    kind: Kind,
    record: RunRecord,
    exit: u8,
}

/// Resolved options destined for the run record, in flag order-independent
/// (sorted) form.
struct Opts(BTreeMap<String, String>);

impl Opts {
    fn new() -> Opts {
        Opts(BTreeMap::new())
    }

    fn set(&mut self, key: &str, value: impl ToString) {
        self.0.insert(key.to_string(), value.to_string());
    }
}

fn record_for(sub: &str, opts: Opts, seed: u64) -> RunRecord {
    RunRecord {
        version: GIT_VERSION,
        seed,
        config: RunConfig {
            subcommand: sub.to_string(),
            options: opts.0,
        },
        outputs: Vec::new(),
        notes: Vec::new(),
        pass: None,
        report: None,
    }
}

fn experiment_output(
    sub: &str,
    mut opts: Opts,
    seed: u64,
    report: ExperimentReport,
) -> Result<RunOutput, CliError> {
    opts.set("seed", seed);
    let value: serde_json::Value =
        serde_json::from_str(&report.json()).expect("report serializes");
    let mut record = record_for(sub, opts, seed);
    record.notes = report.notes.clone();
    record
        .notes
        .push(format!("gate: {} -> {}", report.gate, if report.pass { "pass" } else { "fail" }));
    record.pass = Some(report.pass);
    record.report = Some(value);
    Ok(RunOutput {
        payload: report.csv(),
        kind: Kind::Csv,
        record,
        exit: 0,
    })
}

fn split_list(s: &str) -> Vec<String> {
    s.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_f64_list(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    let toks = split_list(s);
    if toks.is_empty() {
        return Err(invalid(format!("empty {what} list")));
    }
    toks.iter()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| invalid(format!("bad {what} entry {t:?}")))
        })
        .collect()
}

fn parse_usize_list(s: &str, what: &str) -> Result<Vec<usize>, CliError> {
    let toks = split_list(s);
    if toks.is_empty() {
        return Err(invalid(format!("empty {what} list")));
    }
    toks.iter()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| invalid(format!("bad {what} entry {t:?}")))
        })
        .collect()
}

/// Depth lists accept single values and inclusive ranges: "0..20" means
/// every depth from 0 through 20.
fn parse_depths(s: &str) -> Result<Vec<usize>, CliError> {
    let mut out = Vec::new();
    for tok in split_list(s) {
        if let Some((lo, hi)) = tok.split_once("..") {
            let lo: usize = lo
                .parse()
                .map_err(|_| invalid(format!("bad depth range start in {tok:?}")))?;
            let hi: usize = hi
                .parse()
                .map_err(|_| invalid(format!("bad depth range end in {tok:?}")))?;
            if hi < lo {
                return Err(invalid(format!("empty depth range {tok:?}")));
            }
            out.extend(lo..=hi);
        } else {
            out.push(
                tok.parse()
                    .map_err(|_| invalid(format!("bad depth entry {tok:?}")))?,
            );
        }
    }
    if out.is_empty() {
        return Err(invalid("empty depth list"));
    }
    Ok(out)
}

fn parse_perm(s: &str) -> Result<SignedPermutation, CliError> {
    s.parse()
        .map_err(|e| invalid(format!("bad permutation {s:?}: {e}")))
}

fn parse_backend(s: &str) -> Result<Backend, CliError> {
    s.parse()
        .map_err(|e| invalid(format!("bad backend {s:?}: {e}")))
}

fn parse_cases(s: &str) -> Result<Vec<StepCase>, CliError> {
    let mut out = Vec::new();
    for ch in s.chars() {
        match ch {
            'A' | 'a' => out.push(StepCase::A),
            'B' | 'b' => out.push(StepCase::B),
            c if c.is_whitespace() || c == ',' => {}
            other => return Err(invalid(format!("bad case letter {other:?} in {s:?}"))),
        }
    }
    if out.is_empty() {
        return Err(invalid("empty case word"));
    }
    Ok(out)
}

fn cases_text(path: &RauzyPath) -> String {
    path.cases().iter().map(|c| c.to_string()).collect()
}

fn path_from_cases(p: &SignedPermutation, cases: &[StepCase]) -> Result<RauzyPath, CliError> {
    let mut path = RauzyPath::new(p.clone());
    for (i, &case) in cases.iter().enumerate() {
        let arrow = arrow_for(path.end(), case).ok_or_else(|| {
            invalid(format!(
                "case {case} at step {} leaves the irreducible class",
                i + 1
            ))
        })?;
        path.push(arrow).map_err(CliError::from)?;
    }
    Ok(path)
}

/// A section selector: the user's case word when given, otherwise the
/// shortest positive loop at the vertex.
fn resolve_loop(p: &SignedPermutation, section: Option<&str>) -> Result<RauzyPath, CliError> {
    match section {
        Some(txt) => path_from_cases(p, &parse_cases(txt)?),
        None => {
            let g = build_graph(p, AUTO_GRAPH_LIMIT).map_err(|e| invalid(e.to_string()))?;
            find_positive_loop(&g, &p.to_string(), AUTO_LOOP_LEN, false)
                .map_err(|e| invalid(e.to_string()))?
                .ok_or_else(|| {
                    invalid(format!(
                        "no positive loop of length <= {AUTO_LOOP_LEN} at {p}; pass --section"
                    ))
                })
        }
    }
}

fn parse_weights(s: &str) -> Result<WeightVector, CliError> {
    let toks = split_list(s);
    let mut v = Vec::with_capacity(toks.len());
    for t in &toks {
        v.push(
            Scalar::parse_with_backend(t, Backend::Rational)
                .map_err(|e| invalid(format!("bad weight {t:?}: {e}")))?,
        );
    }
    WeightVector::new(v).map_err(CliError::from)
}

fn lengths_text(f: &FlipIET) -> String {
    f.lengths()
        .iter()
        .map(Scalar::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Flags when given, otherwise a JSON map record piped on stdin.
fn load_fiet(
    perm: Option<&str>,
    lengths: Option<&str>,
    backend: &str,
) -> Result<(FlipIET, &'static str), CliError> {
    match perm {
        Some(ptxt) => {
            let ltxt =
                lengths.ok_or_else(|| invalid("--lengths is required together with --perm"))?;
            let toks = split_list(ltxt);
            let refs: Vec<&str> = toks.iter().map(String::as_str).collect();
            let f = FlipIET::parse(ptxt, &refs, parse_backend(backend)?)
                .map_err(CliError::Invalid)?;
            Ok((f, "flags"))
        }
        None => {
            let mut text = String::new();
            io::stdin().read_to_string(&mut text)?;
            if text.trim().is_empty() {
                return Err(invalid(
                    "no --perm given and stdin is empty; pass --perm/--lengths or pipe a map record",
                ));
            }
            let rec: FietRecord = serde_json::from_str(&text)
                .map_err(|e| invalid(format!("stdin is not a map record: {e}")))?;
            let f = rec.build().map_err(CliError::Invalid)?;
            Ok((f, "stdin"))
        }
    }
}

fn run_induce(a: &InduceArgs) -> Result<RunOutput, CliError> {
    let (f0, source) = load_fiet(a.perm.as_deref(), a.lengths.as_deref(), &a.backend)?;
    let mut table = String::from("step,case,run,winner,loser,perm,total\n");
    let mut f = f0.clone();
    let mut done = 0usize;
    let (verdict, hole_perm) = loop {
        if done == a.steps {
            break ("SurvivedBudget", None);
        }
        if a.zorich {
            match zorich_step(&f)? {
                ZorichOutcome::Run { next, run } => {
                    done += 1;
                    // An accelerated step aggregates run.length decisions,
                    // so the per-step winner column stays empty.
                    writeln!(
                        table,
                        "{},{},{},,,{},{}",
                        done,
                        run.case,
                        run.length,
                        next.perm(),
                        next.total()
                    )
                    .expect("write to string");
                    f = next;
                }
                ZorichOutcome::Tie => break ("Tie", None),
                ZorichOutcome::Hole { successor, .. } => break ("Hole", Some(successor)),
            }
        } else {
            match rauzy_step(&f)? {
                StepOutcome::Step { next, arrow, .. } => {
                    done += 1;
                    writeln!(
                        table,
                        "{},{},1,{},{},{},{}",
                        done,
                        arrow.case,
                        arrow.semantic_winner(),
                        arrow.semantic_loser(),
                        next.perm(),
                        next.total()
                    )
                    .expect("write to string");
                    f = next;
                }
                StepOutcome::Tie => break ("Tie", None),
                StepOutcome::Hole { successor, .. } => break ("Hole", Some(successor)),
            }
        }
    };
    let end_perm = hole_perm
        .as_ref()
        .map(ToString::to_string)
        .unwrap_or_else(|| f.perm().to_string());
    writeln!(table, "verdict,{},{},,,{},{}", verdict, done, end_perm, f.total())
        .expect("write to string");

    let mut opts = Opts::new();
    opts.set("perm", f0.perm());
    opts.set("lengths", lengths_text(&f0));
    opts.set("backend", f0.backend());
    opts.set("steps", a.steps);
    opts.set("zorich", a.zorich);
    opts.set("input", source);
    let mut record = record_for("induce", opts, 0);
    record.notes.push(match verdict {
        "SurvivedBudget" => format!("completed {done} steps within the budget"),
        "Tie" => format!("equal critical lengths at step {}; induction undefined there", done + 1),
        _ => format!(
            "reducible successor {end_perm} at step {}; induction leaves the class",
            done + 1
        ),
    });
    Ok(RunOutput {
        payload: table,
        kind: Kind::Csv,
        record,
        exit: 0,
    })
}

fn run_orbit(a: &OrbitArgs) -> Result<RunOutput, CliError> {
    let (f, source) = load_fiet(a.perm.as_deref(), a.lengths.as_deref(), &a.backend)?;
    let x0 = Scalar::parse_with_backend(&a.start, f.backend())
        .map_err(|e| invalid(format!("bad --start {:?}: {e}", a.start)))?;
    let orbit = iterate_orbit(&f, &x0, a.steps);

    let mut opts = Opts::new();
    opts.set("perm", f.perm());
    opts.set("lengths", lengths_text(&f));
    opts.set("backend", f.backend());
    opts.set("start", &a.start);
    opts.set("steps", a.steps);
    opts.set("detect", a.detect);
    opts.set("input", source);
    let mut record = record_for("orbit", opts, 0);
    record
        .notes
        .push(format!("{} steps, stop: {:?}", orbit.steps(), orbit.stop));
    let exit = if matches!(orbit.stop, StopReason::Undecidable) {
        record
            .notes
            .push("comparison undecidable at the working precision".to_string());
        3
    } else {
        0
    };
    if a.detect {
        match detect_periodic(&f, a.steps)? {
            Some(p) => record.notes.push(format!(
                "periodic orbit: period {}, witness {}",
                p.period, p.witness
            )),
            None => record
                .notes
                .push(format!("no periodic orbit within {} steps", a.steps)),
        }
    }
    Ok(RunOutput {
        payload: orbit_csv(&orbit),
        kind: Kind::Csv,
        record,
        exit,
    })
}

fn run_graph(a: &GraphArgs) -> Result<RunOutput, CliError> {
    let p = parse_perm(&a.perm)?;
    let g = build_graph(&p, a.limit).map_err(|e| invalid(e.to_string()))?;
    let (payload, kind) = match a.format.as_str() {
        "json" => {
            let mut v: serde_json::Value =
                serde_json::from_str(&g.to_json_string()).expect("graph serializes");
            if let Some(m) = v.as_object_mut() {
                m.insert("version".to_string(), json!(GIT_VERSION));
                m.insert("seed".to_string(), json!(0));
                m.insert("closed".to_string(), json!(g.is_closed()));
            }
            let text = serde_json::to_string_pretty(&v).expect("graph serializes");
            (text + "\n", Kind::Json)
        }
        "csv" => {
            let mut t = String::from("from,case,to\n");
            for (i, vtx) in g.vertices().iter().enumerate() {
                for (ci, target) in g.targets(i).iter().enumerate() {
                    let case = if ci == 0 { "A" } else { "B" };
                    if let Some(target) = target {
                        let to = match target {
                            GraphTarget::Vertex(j) => g.vertices()[*j].clone(),
                            GraphTarget::Hole => "hole".to_string(),
                        };
                        writeln!(t, "{vtx},{case},{to}").expect("write to string");
                    }
                }
            }
            (t, Kind::Csv)
        }
        other => {
            return Err(invalid(format!(
                "unknown --format {other:?}; use json or csv"
            )))
        }
    };

    let mut opts = Opts::new();
    opts.set("perm", &p);
    opts.set("limit", a.limit);
    opts.set("format", &a.format);
    let mut record = record_for("graph", opts, 0);
    record.notes.push(format!(
        "{} vertices, closed: {}, hole arrows in: {}",
        g.vertex_count(),
        g.is_closed(),
        g.hole_in_degree()
    ));
    Ok(RunOutput {
        payload,
        kind,
        record,
        exit: 0,
    })
}

fn run_construct(a: &ConstructArgs) -> Result<RunOutput, CliError> {
    let base = if a.rotation == "golden" {
        golden_rotation()
    } else {
        let alpha = Scalar::parse_with_backend(&a.rotation, parse_backend(&a.backend)?)
            .map_err(|e| invalid(format!("bad rotation amount {:?}: {e}", a.rotation)))?;
        rotation_iet(&alpha).map_err(|e| invalid(e.to_string()))?
    };
    let mut notes = Vec::new();
    let f = if a.glue {
        let glued = glue_flip(&base).map_err(|e| invalid(e.to_string()))?;
        notes.push(format!(
            "glued across symbol {} (source top position {}), extended length {}",
            glued.spec.alpha0, glued.spec.i0, glued.spec.extended_length
        ));
        glued.fiet
    } else {
        base
    };
    notes.push(format!("perm {}, total {}", f.perm(), f.total()));

    let mut v = serde_json::to_value(FietRecord::of(&f)).expect("record serializes");
    if let Some(m) = v.as_object_mut() {
        m.insert("version".to_string(), json!(GIT_VERSION));
        m.insert("seed".to_string(), json!(0));
    }
    let payload = serde_json::to_string_pretty(&v).expect("record serializes") + "\n";

    let mut opts = Opts::new();
    opts.set("rotation", &a.rotation);
    opts.set("glue", a.glue);
    opts.set("backend", f.backend());
    let mut record = record_for("construct", opts, 0);
    record.notes = notes;
    Ok(RunOutput {
        payload,
        kind: Kind::Json,
        record,
        exit: 0,
    })
}

fn run_survival(a: &SurvivalArgs) -> Result<RunOutput, CliError> {
    let p = parse_perm(&a.perm)?;
    let depths = parse_depths(&a.depths)?;
    let report = survival_fraction(&p, &depths, a.samples, a.seed, a.threshold)?;
    let mut opts = Opts::new();
    opts.set("perm", &p);
    opts.set(
        "depths",
        depths
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(" "),
    );
    opts.set("samples", a.samples);
    if let Some(t) = a.threshold {
        opts.set("threshold", t);
    }
    experiment_output("survival", opts, a.seed, report)
}

fn run_kerckhoff(a: &KerckhoffArgs) -> Result<RunOutput, CliError> {
    let p = parse_perm(&a.perm)?;
    let q = parse_weights(&a.weights)?;
    let ts = parse_f64_list(&a.ts, "T")?;
    let report = kerckhoff_experiment(&p, &q, a.alpha, &ts, a.samples, a.seed)?;
    let mut opts = Opts::new();
    opts.set("perm", &p);
    opts.set("weights", &a.weights);
    opts.set("alpha", a.alpha);
    opts.set("ts", &a.ts);
    opts.set("samples", a.samples);
    experiment_output("kerckhoff", opts, a.seed, report)
}

fn run_distortion(a: &DistortionArgs) -> Result<RunOutput, CliError> {
    let p = parse_perm(&a.perm)?;
    let q = parse_weights(&a.weights)?;
    let cs = parse_f64_list(&a.cs, "c")?;
    let report = distortion_experiment(&p, &q, &cs, a.depth, a.samples, a.seed)?;
    let mut opts = Opts::new();
    opts.set("perm", &p);
    opts.set("weights", &a.weights);
    opts.set("cs", &a.cs);
    opts.set("depth", a.depth);
    opts.set("samples", a.samples);
    experiment_output("distortion", opts, a.seed, report)
}

fn run_tails(a: &TailsArgs) -> Result<RunOutput, CliError> {
    let p = parse_perm(&a.perm)?;
    let gamma = resolve_loop(&p, a.section.as_deref())?;
    let ts = parse_f64_list(&a.ts, "T")?;
    let report = roof_tail(&gamma, &ts, a.samples, a.seed, a.budget)?;
    let mut opts = Opts::new();
    opts.set("perm", &p);
    opts.set("section", cases_text(&gamma));
    opts.set("ts", &a.ts);
    opts.set("samples", a.samples);
    opts.set("budget", a.budget);
    experiment_output("tails", opts, a.seed, report)
}

fn run_fastdecay(a: &FastdecayArgs) -> Result<RunOutput, CliError> {
    let p = parse_perm(&a.perm)?;
    let gamma = resolve_loop(&p, a.section.as_deref())?;
    let epsilons = match &a.epsilons {
        Some(txt) => parse_f64_list(txt, "epsilon")?,
        None => {
            let mut eps: Vec<f64> = (8..=15).map(|k| 0.5f64.powi(k)).collect();
            eps.push(1.0);
            eps
        }
    };
    let report = fast_decay_check(&p, &gamma, a.depth, &epsilons, a.samples, a.seed)?;
    let mut opts = Opts::new();
    opts.set("perm", &p);
    opts.set("section", cases_text(&gamma));
    opts.set("depth", a.depth);
    opts.set(
        "epsilons",
        epsilons
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(" "),
    );
    opts.set("samples", a.samples);
    experiment_output("fastdecay", opts, a.seed, report)
}

fn run_dimension(a: &DimensionArgs) -> Result<RunOutput, CliError> {
    let p = parse_perm(&a.perm)?;
    let resolutions = parse_usize_list(&a.resolutions, "resolution")?;
    let report = box_dimension(
        &p,
        a.depth,
        &resolutions,
        a.candidates,
        a.seed,
        (a.slope_min, a.slope_max),
    )?;
    let mut opts = Opts::new();
    opts.set("perm", &p);
    opts.set("depth", a.depth);
    opts.set("resolutions", &a.resolutions);
    opts.set("candidates", a.candidates);
    opts.set("slope_min", a.slope_min);
    opts.set("slope_max", a.slope_max);
    experiment_output("dimension", opts, a.seed, report)
}

fn run_expansion(a: &ExpansionArgs) -> Result<RunOutput, CliError> {
    let p = parse_perm(&a.perm)?;
    let gamma = resolve_loop(&p, a.path.as_deref())?;
    let report = expansion_check(&gamma, a.pairs, a.seed)?;
    let mut opts = Opts::new();
    opts.set("perm", &p);
    opts.set("path", cases_text(&gamma));
    opts.set("pairs", a.pairs);
    experiment_output("expansion", opts, a.seed, report)
}

fn dispatch(cmd: &Cmd) -> Result<RunOutput, CliError> {
    match cmd {
        Cmd::Induce(a) => run_induce(a),
        Cmd::Orbit(a) => run_orbit(a),
        Cmd::Graph(a) => run_graph(a),
        Cmd::Construct(a) => run_construct(a),
        Cmd::Survival(a) => run_survival(a),
        Cmd::Kerckhoff(a) => run_kerckhoff(a),
        Cmd::Distortion(a) => run_distortion(a),
        Cmd::Tails(a) => run_tails(a),
        Cmd::Fastdecay(a) => run_fastdecay(a),
        Cmd::Dimension(a) => run_dimension(a),
        Cmd::Expansion(a) => run_expansion(a),
    }
}

/// Append `--key value` pairs from the config file after the user's args;
/// with args_override_self on, later occurrences win, so file entries
/// override flags. Switches use `key = true`; `key = false` is ignored
/// because a switch cannot be unset.
fn expand_config(mut args: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut path: Option<PathBuf> = None;
    let mut i = 0;
    while i < args.len() {
        if args[i] == "--config" {
            if i + 1 < args.len() {
                path = Some(PathBuf::from(&args[i + 1]));
            }
            i += 2;
        } else if let Some(rest) = args[i].strip_prefix("--config=") {
            path = Some(PathBuf::from(rest));
            i += 1;
        } else {
            i += 1;
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(invalid(format!(
                "config line {} is not key = value: {raw:?}",
                lineno + 1
            )));
        };
        let key = key.trim();
        let value = value.trim().trim_matches('"');
        if key.is_empty() {
            return Err(invalid(format!("config line {} has an empty key", lineno + 1)));
        }
        if key == "config" {
            continue;
        }
        match value {
            "true" => args.push(format!("--{key}")),
            "false" => {}
            _ => {
                args.push(format!("--{key}"));
                args.push(value.to_string());
            }
        }
    }
    Ok(args)
}

fn init_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("FIETLAB_THREADS")
            .ok()
            .and_then(|s| s.parse().ok())
    });
    if let Some(n) = n {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn emit(cli: &Cli, mut out: RunOutput) -> Result<ExitCode, CliError> {
    let payload = match out.kind {
        Kind::Csv => format!(
            "# version {}\n# seed {}\n{}",
            GIT_VERSION, out.record.seed, out.payload
        ),
        // JSON payloads already carry version and seed fields.
        Kind::Json => out.payload,
    };
    match &cli.out {
        Some(path) => {
            fs::write(path, payload)
                .map_err(|e| invalid(format!("cannot write {}: {e}", path.display())))?;
            out.record.outputs.push(path.display().to_string());
        }
        None => {
            print!("{payload}");
            io::stdout().flush()?;
        }
    }
    let record_path = cli
        .record
        .clone()
        .or_else(|| cli.out.as_ref().map(|p| p.with_extension("run.json")));
    match record_path {
        Some(path) => {
            let text = serde_json::to_string_pretty(&out.record).expect("record serializes");
            fs::write(&path, text + "\n")
                .map_err(|e| invalid(format!("cannot write {}: {e}", path.display())))?;
        }
        None => {
            // No record file requested: surface the verdict notes where
            // they will not pollute a piped payload.
            for note in &out.record.notes {
                eprintln!("note: {note}");
            }
        }
    }
    Ok(ExitCode::from(out.exit))
}

fn main() -> ExitCode {
    let raw: Vec<String> = std::env::args().collect();
    let args = match expand_config(raw) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.code());
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    init_threads(cli.threads);
    match dispatch(&cli.cmd).and_then(|out| emit(&cli, out)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
