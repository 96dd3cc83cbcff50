//! Subcommands of the `clusterpush` binary, kept in a library so that tests
//! can drive them without a subprocess.

pub mod instance;

use std::collections::{BTreeMap, BTreeSet};

use clap::{Args, Parser, Subcommand};
use clusterpush::berktree::{clusters_from_hull, hull_from_clusters, MetricTree};
use clusterpush::clusters::{
    clustered_in_pairs, compute_clusters, is_r_separated, pairing_from_clusters, ClusterData, Pairing, PointSet,
};
use clusterpush::position::position_tree;
use clusterpush::projline::ProjPoint;
use clusterpush::pushforward::{check_branch_separation, predict_branch_clusters, optimality_asserted, PushforwardParams};
use clusterpush::schottky::{branch_points_numeric, Accumulator, BranchPoints, Capped, Native, OracleOptions, WhittakerGroup};
use clusterpush::valuation::{hensel_root_of_unity, ExactQ, PadicApprox, Scalar, ValQ};
use clusterpush::Error;
use serde_json::{json, Value};

pub use instance::{FieldError, Instance};

pub const DEFAULT_ODD_PRECISION: u32 = 30;

#[derive(Parser, Debug)]
#[command(name = "clusterpush", version, about = "Cluster data, hulls and branch-point predictions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Cluster data of the point set.
    Clusters(Opts),
    /// Position tree with its map from labels to vertices.
    Position(Opts),
    /// Convex hull with distinguished vertices and edge lengths.
    Hull(Opts),
    /// Predicted hull and cluster data of the branch points.
    Push(Opts),
    /// Branch points from truncated theta functions.
    Oracle(Opts),
    /// Compare the oracle with the prediction.
    Compare(Opts),
    /// Whether the pairs are r-separated.
    CheckSeparated(Opts),
}

#[derive(Args, Debug, Clone)]
pub struct Opts {
    /// Instance JSON file.
    pub instance: std::path::PathBuf,
    /// Separation radius (defaults to v(p)/(p-1)).
    #[arg(long)]
    pub r: Option<String>,
    #[arg(long)]
    pub p: Option<u64>,
    #[arg(long)]
    pub ell: Option<u64>,
    /// Unit digits for capped-precision arithmetic.
    #[arg(long)]
    pub precision: Option<u32>,
    /// Largest word length for the oracle.
    #[arg(long)]
    pub max_words: Option<usize>,
    /// Smallest word length at which the oracle may stop.
    #[arg(long, default_value_t = 0)]
    pub min_words: usize,
    /// Pair sent to 0 and infinity by the oracle.
    #[arg(long)]
    pub pair_index: Option<usize>,
    /// Depth of the root cluster when reading clusters off a hull.
    #[arg(long)]
    pub d0: Option<String>,
    /// Emit Graphviz instead of JSON where available.
    #[arg(long)]
    pub dot: bool,
    /// Add an indented picture of the cluster tree.
    #[arg(long)]
    pub picture: bool,
    /// Split word enumeration across threads.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug)]
pub enum CliError {
    Io(String),
    Field(FieldError),
    Core(Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Io(m) => f.write_str(m),
            CliError::Field(e) => write!(f, "{e}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<FieldError> for CliError {
    fn from(e: FieldError) -> Self {
        CliError::Field(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(Error::NonConvergence(_) | Error::PrecisionExhausted(_)) => 3,
            _ => 2,
        }
    }
}

/// Standard output, warnings and the exit code of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub stdout: String,
    pub warnings: Vec<String>,
    pub code: i32,
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let (cmd, opts) = match &cli.command {
        Command::Clusters(o) => ("clusters", o),
        Command::Position(o) => ("position", o),
        Command::Hull(o) => ("hull", o),
        Command::Push(o) => ("push", o),
        Command::Oracle(o) => ("oracle", o),
        Command::Compare(o) => ("compare", o),
        Command::CheckSeparated(o) => ("check-separated", o),
    };
    let text = std::fs::read_to_string(&opts.instance)
        .map_err(|e| CliError::Io(format!("{}: {e}", opts.instance.display())))?;
    let mut inst = Instance::parse(&text)?;
    if let Some(p) = opts.p {
        if !clusterpush::valuation::is_prime(p) {
            return Err(FieldError { field: "--p".into(), message: format!("{p} is not a prime") }.into());
        }
        inst.p = p;
    }
    if let Some(ell) = opts.ell {
        if !clusterpush::valuation::is_prime(ell) {
            return Err(FieldError { field: "--ell".into(), message: format!("{ell} is not a prime") }.into());
        }
        inst.prime_ell = ell;
    }
    if let Some(n) = opts.precision {
        inst.precision = Some(n);
    }
    if let Some(l) = opts.max_words {
        inst.max_words = l;
    }
    let mut warnings = Vec::new();
    if inst.vp.is_some_and(|v| v != inst.natural_vp()) {
        warnings.push(format!(
            "warning: vp = {} is inconsistent with ell = {} and p = {} (expected {})",
            inst.vp(),
            inst.prime_ell,
            inst.p,
            inst.natural_vp()
        ));
    }
    let (stdout, code) = match cmd {
        "clusters" => (cmd_clusters(&inst, opts)?, 0),
        "position" => (cmd_position(&inst, opts)?, 0),
        "hull" => (cmd_hull(&inst, opts)?, 0),
        "push" => (cmd_push(&inst, opts)?, 0),
        "oracle" => (cmd_oracle(&inst, opts)?, 0),
        "compare" => cmd_compare(&inst, opts)?,
        _ => (cmd_separated(&inst, opts)?, 0),
    };
    Ok(Outcome { stdout, warnings, code })
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn parse_val(text: &str, flag: &str) -> Result<ValQ, CliError> {
    text.parse::<ValQ>()
        .map_err(|_| FieldError { field: flag.into(), message: format!("cannot parse {text:?}") }.into())
}

fn set_key(s: &BTreeSet<String>) -> String {
    s.iter().cloned().collect::<Vec<_>>().join(",")
}

/// Relative depths keyed by comma-joined member labels; the root maps to null.
pub fn table_json(cd: &ClusterData) -> Value {
    let map: serde_json::Map<String, Value> = cd
        .relative_table()
        .into_iter()
        .map(|(k, v)| (set_key(&k), v.map_or(Value::Null, |d| Value::String(d.to_string()))))
        .collect();
    Value::Object(map)
}

fn pairing_for(inst: &Instance, cd: &ClusterData) -> Result<Pairing, CliError> {
    match inst.explicit_pairing()? {
        Some(p) => Ok(p),
        None => Ok(pairing_from_clusters(cd)?),
    }
}

fn pairing_json(p: &Pairing, labels: &[String]) -> Value {
    json!(p.pairs.iter().map(|&(a, b)| [&labels[a], &labels[b]]).collect::<Vec<_>>())
}

fn cmd_clusters(inst: &Instance, opts: &Opts) -> Result<String, CliError> {
    let s = inst.point_set()?;
    let cd = compute_clusters(&s)?;
    let even: Vec<Vec<String>> = cd.even_clusters().iter().map(|&c| cd.member_labels(c).into_iter().collect()).collect();
    let mut out = json!({
        "clusters": cd.to_json(),
        "even_clusters": even,
        "relative_depths": table_json(&cd),
    });
    match pairing_for(inst, &cd) {
        Ok(p) => {
            out["pairing"] = pairing_json(&p, &s.labels);
            out["clustered_in_pairs"] = json!(clustered_in_pairs(&cd, &p));
        }
        Err(_) => out["pairing"] = Value::Null,
    }
    if opts.picture {
        out["picture"] = json!(cd.picture());
    }
    Ok(pretty(&out))
}

fn cmd_position(inst: &Instance, opts: &Opts) -> Result<String, CliError> {
    let t = position_tree(&inst.point_set()?)?;
    if opts.dot {
        return Ok(t.to_dot());
    }
    let vertices: Vec<Value> = t
        .vertices
        .iter()
        .zip(&t.parent)
        .map(|(m, p)| json!({"members": m, "parent": p}))
        .collect();
    Ok(pretty(&json!({"vertices": vertices, "r_map": t.r_map})))
}

fn hull_of(inst: &Instance) -> Result<(PointSet<ExactQ>, ClusterData, Pairing, MetricTree), CliError> {
    let s = inst.point_set()?;
    let cd = compute_clusters(&s)?;
    let p = pairing_for(inst, &cd)?;
    let t = hull_from_clusters(&cd, &p)?;
    Ok((s, cd, p, t))
}

fn cmd_hull(inst: &Instance, opts: &Opts) -> Result<String, CliError> {
    let (_, _, _, t) = hull_of(inst)?;
    if opts.dot {
        return Ok(t.to_dot());
    }
    Ok(pretty(&t.to_json()))
}

fn params(inst: &Instance) -> Result<PushforwardParams, CliError> {
    Ok(PushforwardParams::new(inst.p, inst.vp())?)
}

struct Predicted {
    json: Value,
    clusters: ClusterData,
    tree: MetricTree,
}

fn predict(inst: &Instance, opts: &Opts) -> Result<Predicted, CliError> {
    let s = inst.point_set()?;
    let cd = compute_clusters(&s)?;
    let pairing = pairing_for(inst, &cd)?;
    let prm = params(inst)?;
    let optimal = optimality_asserted(inst.optimal, pairing.len());
    let pr = predict_branch_clusters(&s, &pairing, &prm, optimal)?;
    let clusters = match &opts.d0 {
        Some(d) => clusters_from_hull(&pr.tree, parse_val(d, "--d0")?)?,
        None => pr.clusters.clone(),
    };
    let checks: Vec<Value> = pr
        .checks
        .iter()
        .map(|c| {
            json!({
                "cluster": set_key(&pr.source.member_labels(c.cluster)),
                "case": format!("{:?}", c.case),
                "expected": c.expected.to_string(),
                "got": c.got.to_string(),
            })
        })
        .collect();
    let json = json!({
        "p": prm.p,
        "vp": prm.vp.to_string(),
        "tree": pr.tree.to_json(),
        "clusters": clusters.to_json(),
        "relative_depths": table_json(&clusters),
        "special_cases": checks,
        "branch_points_separated": check_branch_separation(&pr.tree, &prm),
    });
    Ok(Predicted { json, clusters, tree: pr.tree })
}

fn cmd_push(inst: &Instance, opts: &Opts) -> Result<String, CliError> {
    let pr = predict(inst, opts)?;
    if opts.dot {
        return Ok(pr.tree.to_dot());
    }
    Ok(pretty(&pr.json))
}

struct OracleRun {
    json: Value,
    clusters: ClusterData,
}

fn oracle_json<F: Scalar, A: Accumulator<F>>(
    s: &PointSet<F>,
    g: &WhittakerGroup<F>,
    opts: &OracleOptions,
    acc: A,
    backend: &str,
) -> Result<OracleRun, CliError> {
    let bp: BranchPoints<A::Out> = branch_points_numeric(s, g, opts, acc)?;
    let points: Vec<Value> = bp
        .points
        .labels
        .iter()
        .zip(&bp.points.points)
        .map(|(l, p)| json!({"label": l, "value": p.to_wire()}))
        .collect();
    let json = json!({
        "backend": backend,
        "pair_index": bp.pair_index,
        "points": points,
        "clusters": bp.clusters.to_json(),
        "relative_depths": table_json(&bp.clusters),
        "tail_floor": bp.floor.to_string(),
        "truncation_length": bp.truncation_length,
        "stopping_rule": "heuristic: cluster data unchanged from the previous length and pairwise valuations below the empirical tail floor",
        "log": bp.log,
    });
    Ok(OracleRun { json, clusters: bp.clusters })
}

/// The oracle itself needs no optimality assumption; only the comparison
/// with the prediction does.
fn oracle(inst: &Instance, opts: &Opts) -> Result<OracleRun, CliError> {
    let s = inst.point_set()?;
    let cd = compute_clusters(&s)?;
    let pairing = pairing_for(inst, &cd)?;
    let oo = OracleOptions {
        max_len: inst.max_words,
        min_len: opts.min_words,
        pair_index: opts.pair_index,
        parallel: opts.parallel,
    };
    if inst.p == 2 {
        let g = WhittakerGroup::new(&s, &pairing, 2, ExactQ::from_i64(-1, inst.prime_ell))?;
        return match inst.precision {
            None => oracle_json(&s, &g, &oo, Native, "exact"),
            Some(n) => oracle_json(&s, &g, &oo, Capped { prec: n }, "capped"),
        };
    }
    let n = inst.precision.unwrap_or(DEFAULT_ODD_PRECISION);
    let zeta = hensel_root_of_unity(inst.p, inst.prime_ell, n)?;
    let lifted: Vec<ProjPoint<PadicApprox>> = s
        .points
        .iter()
        .map(|p| match p {
            ProjPoint::Infinity => ProjPoint::Infinity,
            ProjPoint::Finite(x) => ProjPoint::Finite(PadicApprox::from_rational(&x.q, inst.prime_ell, n)),
        })
        .collect();
    let ls = PointSet::new(lifted, s.labels.clone())?;
    let g = WhittakerGroup::new(&ls, &pairing, inst.p, zeta)?;
    oracle_json(&ls, &g, &oo, Capped { prec: n }, "capped")
}

fn cmd_oracle(inst: &Instance, opts: &Opts) -> Result<String, CliError> {
    let mut r = oracle(inst, opts)?;
    if opts.picture {
        r.json["picture"] = json!(r.clusters.picture());
    }
    Ok(pretty(&r.json))
}

fn diff_tables(a: &ClusterData, b: &ClusterData) -> Vec<Value> {
    let (ta, tb) = (a.relative_table(), b.relative_table());
    let keys: BTreeSet<&BTreeSet<String>> = ta.keys().chain(tb.keys()).collect();
    let show = |t: &BTreeMap<BTreeSet<String>, Option<ValQ>>, k: &BTreeSet<String>| match t.get(k) {
        None => json!("absent"),
        Some(None) => Value::Null,
        Some(Some(d)) => json!(d.to_string()),
    };
    keys.into_iter()
        .filter(|k| ta.get(*k) != tb.get(*k))
        .map(|k| json!({"cluster": set_key(k), "predicted": show(&ta, k), "oracle": show(&tb, k)}))
        .collect()
}

fn cmd_compare(inst: &Instance, opts: &Opts) -> Result<(String, i32), CliError> {
    let pr = predict(inst, opts)?;
    let or = oracle(inst, opts)?;
    let diffs = diff_tables(&pr.clusters, &or.clusters);
    let same = diffs.is_empty() && pr.clusters.combinatorial() == or.clusters.combinatorial();
    let out = json!({
        "result": if same { "MATCH" } else { "MISMATCH" },
        "relative_depths": table_json(&pr.clusters),
        "differences": diffs,
        "oracle_truncation_length": or.json["truncation_length"],
        "oracle_tail_floor": or.json["tail_floor"],
    });
    Ok((pretty(&out), if same { 0 } else { 1 }))
}

fn cmd_separated(inst: &Instance, opts: &Opts) -> Result<String, CliError> {
    let (_, cd, pairing, t) = hull_of(inst)?;
    let r = match &opts.r {
        Some(r) => parse_val(r, "--r")?,
        None => params(inst)?.r(),
    };
    let by_clusters = is_r_separated(&cd, &pairing, r);
    let by_vertices = t.separated_check_vertices(r);
    let by_axes = t.axes_separated(r);
    Ok(pretty(&json!({
        "r": r.to_string(),
        "separated": by_clusters,
        "by_clusters": by_clusters,
        "by_vertices": by_vertices,
        "by_axes": by_axes,
    })))
}
