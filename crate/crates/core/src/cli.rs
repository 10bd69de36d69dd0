//! Command-line front end: CSV ingestion, collection files, subcommands.
//!
//! Exit codes: 0 success or pass, 1 verification failure, 2 input or
//! parameter error, 3 work budget refusal.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::collection::{
    build_linear, build_quadratic, dedup_candidates, Block, Body, BuildStats, BuilderKind, CentersCollection,
};
use crate::covering::CoveringTemplate;
use crate::error::{input, Error, Result};
use crate::exec::{with_threads, Exec};
use crate::metric::{NormSpec, PointSet};
use crate::solve::{grid_brute_oracle, solve_discrete, CostTable, ObjectiveKind, ObjectiveSpec};
use crate::verify::{probe_verify, VerifyMode, VerifyOptions};
use crate::wspd::{extract_wspd, validate_wspd, SplitTree};

pub const COLLECTION_VERSION: u64 = 1;
/// Collections with more candidates than this are written without the
/// explicit candidate list; the block structure still determines them.
pub const DEFAULT_INLINE_LIMIT: usize = 2_000_000;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

/// Parsed point file: the merged set plus, per data row, its point index
/// and 1-based line number.
#[derive(Clone, Debug)]
pub struct ParsedPoints {
    pub points: PointSet,
    pub row_index: Vec<usize>,
    pub row_lines: Vec<u64>,
}

fn read_rows(text: &str, what: &str) -> Result<Vec<(u64, Vec<f64>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Input(format!("{what}: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let mut row = Vec::with_capacity(rec.len());
        for (col, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Input(format!("{what} line {line}, field {}: `{field}` is not a number", col + 1)))?;
            if !v.is_finite() {
                return input(format!("{what} line {line}, field {}: value is not finite", col + 1));
            }
            row.push(v);
        }
        rows.push((line, row));
    }
    Ok(rows)
}

/// Parses comma-separated points, one per line. The dimension comes from the
/// first row; duplicate rows merge into multiplicities.
pub fn parse_points(text: &str) -> Result<ParsedPoints> {
    let rows = read_rows(text, "points")?;
    let Some((_, first)) = rows.first() else {
        return input("points: no data rows");
    };
    let dim = first.len();
    let mut flat = Vec::with_capacity(rows.len() * dim);
    let mut row_lines = Vec::with_capacity(rows.len());
    for (line, row) in &rows {
        if row.len() != dim {
            return input(format!("points line {line}: expected {dim} fields, found {}", row.len()));
        }
        flat.extend_from_slice(row);
        row_lines.push(*line);
    }
    let (points, row_index) = PointSet::from_flat_with_origin(dim, flat)?;
    Ok(ParsedPoints {
        points,
        row_index,
        row_lines,
    })
}

/// Parses a cost file with one row per input row: `f_1..f_k, g_1..g_k`.
/// Rows are reordered to unit-point order (point index, then row order).
pub fn parse_costs(text: &str, parsed: &ParsedPoints, k: usize) -> Result<CostTable> {
    let rows = read_rows(text, "costs")?;
    if rows.len() != parsed.row_index.len() {
        return input(format!(
            "costs: expected {} rows (one per input row), found {}",
            parsed.row_index.len(),
            rows.len()
        ));
    }
    for (line, row) in &rows {
        if row.len() != 2 * k {
            return input(format!("costs line {line}: expected {} fields, found {}", 2 * k, row.len()));
        }
        if row.iter().any(|v| *v < 0.0) {
            return input(format!("costs line {line}: negative value"));
        }
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by_key(|&r| (parsed.row_index[r], r));
    let mut f = Vec::with_capacity(rows.len() * k);
    let mut g = Vec::with_capacity(rows.len() * k);
    for r in order {
        f.extend_from_slice(&rows[r].1[..k]);
        g.extend_from_slice(&rows[r].1[k..]);
    }
    Ok(CostTable { k, f, g })
}

/// Options for [`write_collection`].
#[derive(Clone, Copy, Debug)]
pub struct EmitOptions {
    pub inline_limit: usize,
    pub timing: bool,
}

impl Default for EmitOptions {
    fn default() -> Self {
        EmitOptions {
            inline_limit: DEFAULT_INLINE_LIMIT,
            timing: false,
        }
    }
}

/// Shortest text that reads back to the same bits (17 significant digits).
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_point<W: Write>(w: &mut W, p: &[f64]) -> io::Result<()> {
    w.write_all(b"[")?;
    for (a, v) in p.iter().enumerate() {
        if a > 0 {
            w.write_all(b",")?;
        }
        w.write_all(num(*v).as_bytes())?;
    }
    w.write_all(b"]")
}

/// Streams a collection as JSON. Key order and number formatting are
/// fixed, so equal collections produce equal bytes.
pub fn write_collection<W: Write>(c: &CentersCollection, w: &mut W, opts: EmitOptions) -> Result<()> {
    if c.norm().is_black_box() {
        return Err(Error::Unsupported("black-box norms cannot be written to a collection file".into()));
    }
    let st = c.stats();
    let xs = c.inputs();
    let inline = c.len() <= opts.inline_limit;
    writeln!(w, "{{")?;
    writeln!(w, "  \"version\": {COLLECTION_VERSION},")?;
    writeln!(w, "  \"epsilon\": {},", num(c.epsilon()))?;
    writeln!(w, "  \"norm\": \"{}\",", c.norm().tag())?;
    writeln!(w, "  \"builder\": \"{}\",", c.builder().as_str())?;
    writeln!(w, "  \"dim\": {},", c.dim())?;
    writeln!(w, "  \"n\": {},", st.n)?;
    writeln!(w, "  \"s\": {},", st.s)?;
    writeln!(w, "  \"I\": {},", st.levels)?;
    writeln!(w, "  \"template_size\": {},", st.template_size)?;
    writeln!(w, "  \"candidate_count\": {},", c.len())?;
    if opts.timing {
        writeln!(w, "  \"build_ms\": {},", st.build_ms)?;
    } else {
        writeln!(w, "  \"build_ms\": null,")?;
    }
    write!(w, "  \"multiplicities\": [")?;
    for (i, m) in xs.multiplicities().iter().enumerate() {
        write!(w, "{}{m}", if i > 0 { "," } else { "" })?;
    }
    writeln!(w, "],")?;
    write!(w, "  \"inputs\": [")?;
    for (i, p) in xs.iter().enumerate() {
        w.write_all(if i > 0 { b",\n    " } else { b"\n    " })?;
        write_point(w, p)?;
    }
    writeln!(w, "\n  ],")?;
    match c.body() {
        Body::Blocks { template, blocks } => {
            writeln!(w, "  \"structure\": {{")?;
            writeln!(
                w,
                "    \"template\": {{\"construction\": \"{}\", \"sigma\": {}, \"spacing\": {}, \"size\": {}}},",
                template.construction().as_str(),
                num(template.sigma()),
                num(template.spacing()),
                template.len()
            )?;
            write!(w, "    \"blocks\": [")?;
            for (i, b) in blocks.iter().enumerate() {
                w.write_all(if i > 0 { b",\n      " } else { b"\n      " })?;
                write!(
                    w,
                    "[{},{},{},{},{},{}]",
                    b.anchor,
                    b.partner,
                    b.pair,
                    b.level,
                    num(b.scale),
                    num(b.cover_radius)
                )?;
            }
            writeln!(w, "\n    ]\n  }},")?;
        }
        _ => writeln!(w, "  \"structure\": null,")?,
    }
    if inline {
        write!(w, "  \"candidates\": [")?;
        let mut err = Ok(());
        c.for_each_candidate(|i, p| {
            if err.is_ok() {
                err = w
                    .write_all(if i > 0 { b",\n    " } else { b"\n    " })
                    .and_then(|_| write_point(w, p));
            }
        });
        err?;
        writeln!(w, "\n  ]")?;
    } else {
        writeln!(w, "  \"candidates\": null")?;
    }
    writeln!(w, "}}")?;
    Ok(())
}

pub fn emit_collection(c: &CentersCollection, opts: EmitOptions) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_collection(c, &mut out, opts)?;
    Ok(out)
}

fn schema(msg: impl Into<String>) -> Error {
    Error::Schema(msg.into())
}

fn get<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| schema(format!("missing field `{key}`")))
}

fn get_f64(v: &Value, key: &str) -> Result<f64> {
    get(v, key)?
        .as_f64()
        .ok_or_else(|| schema(format!("field `{key}` must be a number")))
}

fn get_usize(v: &Value, key: &str) -> Result<usize> {
    get(v, key)?
        .as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| schema(format!("field `{key}` must be a nonnegative integer")))
}

fn point_list(v: &Value, key: &str, dim: usize) -> Result<Vec<f64>> {
    let arr = v.as_array().ok_or_else(|| schema(format!("`{key}` must be an array")))?;
    let mut out = Vec::with_capacity(arr.len() * dim);
    for (i, p) in arr.iter().enumerate() {
        let coords = p
            .as_array()
            .filter(|c| c.len() == dim)
            .ok_or_else(|| schema(format!("`{key}[{i}]` must be an array of {dim} numbers")))?;
        for c in coords {
            out.push(c.as_f64().ok_or_else(|| schema(format!("`{key}[{i}]` has a non-numeric entry")))?);
        }
    }
    Ok(out)
}

/// Reads a collection file written by [`write_collection`]. Structured
/// collections are regenerated from their blocks and compared bit for bit
/// with any inline candidate list.
pub fn load_collection(text: &str) -> Result<CentersCollection> {
    let v: Value = serde_json::from_str(text).map_err(|e| schema(format!("invalid JSON: {e}")))?;
    let version = get(&v, "version")?.as_u64();
    if version != Some(COLLECTION_VERSION) {
        return Err(schema(format!(
            "version mismatch: expected {COLLECTION_VERSION}, found {}",
            get(&v, "version")?
        )));
    }
    let epsilon = get_f64(&v, "epsilon")?;
    let norm_tag = get(&v, "norm")?.as_str().ok_or_else(|| schema("`norm` must be a string"))?;
    let norm = NormSpec::from_str(norm_tag).map_err(|e| schema(e.to_string()))?;
    let builder = BuilderKind::parse(get(&v, "builder")?.as_str().unwrap_or("")).map_err(|e| schema(e.to_string()))?;
    let dim = get_usize(&v, "dim")?;
    let n = get_usize(&v, "n")?;
    let count = get_usize(&v, "candidate_count")?;
    let mults: Vec<u32> = get(&v, "multiplicities")?
        .as_array()
        .ok_or_else(|| schema("`multiplicities` must be an array"))?
        .iter()
        .map(|m| m.as_u64().filter(|&m| m >= 1).map(|m| m as u32))
        .collect::<Option<_>>()
        .ok_or_else(|| schema("multiplicities must be positive integers"))?;
    let flat_inputs = point_list(get(&v, "inputs")?, "inputs", dim)?;
    if flat_inputs.len() != n * dim || mults.len() != n {
        return Err(schema(format!("expected {n} inputs and multiplicities")));
    }
    let mut rows = Vec::new();
    for (i, p) in flat_inputs.chunks_exact(dim).enumerate() {
        for _ in 0..mults[i] {
            rows.extend_from_slice(p);
        }
    }
    let (inputs, _) = PointSet::from_flat_with_origin(dim, rows).map_err(|e| schema(e.to_string()))?;
    if inputs.coords() != flat_inputs.as_slice() {
        return Err(schema("inputs are not distinct points in canonical order"));
    }

    let stats = BuildStats {
        n,
        s: get_usize(&v, "s")?,
        levels: get_usize(&v, "I")?,
        template_size: get_usize(&v, "template_size")?,
        build_ms: v.get("build_ms").and_then(Value::as_f64).unwrap_or(0.0),
    };
    let inline = match get(&v, "candidates")? {
        Value::Null => None,
        c => {
            let flat = point_list(c, "candidates", dim)?;
            if flat.is_empty() {
                return Err(schema("`candidates` must not be empty"));
            }
            Some(flat)
        }
    };

    let body = match get(&v, "structure")? {
        Value::Null => match &inline {
            None => return Err(schema("collection has neither structure nor candidates")),
            Some(flat) => {
                if flat.len() < n * dim || flat[..n * dim] != flat_inputs[..] {
                    return Err(schema("candidates do not start with the input points"));
                }
                if flat.len() == n * dim {
                    Body::InputOnly
                } else {
                    Body::Explicit(flat[n * dim..].to_vec())
                }
            }
        },
        s => {
            let t = get(s, "template")?;
            let sigma = get_f64(t, "sigma")?;
            let template = CoveringTemplate::for_norm(&norm, dim, sigma).map_err(|e| schema(e.to_string()))?;
            let construction = get(t, "construction")?.as_str().unwrap_or("");
            if construction != template.construction().as_str() || template.len() != stats.template_size {
                return Err(schema("template does not match its regenerated construction"));
            }
            let raw = get(s, "blocks")?.as_array().ok_or_else(|| schema("`blocks` must be an array"))?;
            let mut blocks = Vec::with_capacity(raw.len());
            for (i, b) in raw.iter().enumerate() {
                let f = b
                    .as_array()
                    .filter(|f| f.len() == 6)
                    .ok_or_else(|| schema(format!("`blocks[{i}]` must have 6 entries")))?;
                let int = |j: usize| {
                    f[j].as_u64()
                        .filter(|&x| x <= u32::MAX as u64)
                        .map(|x| x as u32)
                        .ok_or_else(|| schema(format!("`blocks[{i}][{j}]` must be an index")))
                };
                let real = |j: usize| f[j].as_f64().ok_or_else(|| schema(format!("`blocks[{i}][{j}]` must be a number")));
                let blk = Block {
                    anchor: int(0)?,
                    partner: int(1)?,
                    pair: int(2)?,
                    level: int(3)?,
                    scale: real(4)?,
                    cover_radius: real(5)?,
                };
                if blk.anchor as usize >= n || blk.partner as usize >= n {
                    return Err(schema(format!("`blocks[{i}]` refers to a missing input point")));
                }
                blocks.push(blk);
            }
            Body::Blocks {
                template: Arc::new(template),
                blocks,
            }
        }
    };
    let c = CentersCollection::from_parts(epsilon, norm, builder, inputs, body, stats);
    if c.len() != count {
        return Err(schema(format!(
            "candidate_count is {count} but the collection holds {}",
            c.len()
        )));
    }
    if let Some(flat) = inline {
        if flat.len() != count * dim {
            return Err(schema("candidate list length differs from candidate_count"));
        }
        let mut q = vec![0.0; dim];
        for (i, p) in flat.chunks_exact(dim).enumerate() {
            c.candidate_into(i, &mut q);
            if q.iter().zip(p).any(|(a, b)| a.to_bits() != b.to_bits()) {
                return Err(schema(format!("candidate {i} differs from its regenerated value")));
            }
        }
    }
    Ok(c)
}

#[derive(Parser, Debug)]
#[command(name = "ccoll", version, about = "Build, verify and use (1+eps)-approximate centers collections")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "CCOLL_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a collection from a point file.
    Build(BuildArgs),
    /// Probe a collection file.
    Verify(VerifyArgs),
    /// Print a well-separated pair decomposition.
    Wspd(WspdArgs),
    /// Solve a center-based problem over a collection.
    Solve(SolveArgs),
    /// Print a unit-ball covering template.
    Covering(CoveringArgs),
}

#[derive(Args, Debug, Clone)]
pub struct BuildSource {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "l2")]
    pub norm: String,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[command(flatten)]
    pub source: BuildSource,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, default_value = "linear")]
    pub builder: String,
    /// Output file (default: standard output).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Merge candidates equal after rounding to this quantum.
    #[arg(long)]
    pub dedup: Option<f64>,
    /// Record the build time (makes output nondeterministic).
    #[arg(long)]
    pub timing: bool,
    /// Omit the explicit candidate list above this many candidates.
    #[arg(long, default_value_t = DEFAULT_INLINE_LIMIT)]
    pub inline_limit: usize,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub collection: PathBuf,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 10_000)]
    pub probes: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Must match the collection's norm when given.
    #[arg(long)]
    pub norm: Option<String>,
    /// auto, exact or witness.
    #[arg(long, default_value = "auto")]
    pub mode: String,
}

#[derive(Args, Debug)]
pub struct WspdArgs {
    #[command(flatten)]
    pub source: BuildSource,
    /// Separation t; defaults to max(10, (1+eps)/eps) when --epsilon is set.
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Also run the exhaustive validity check.
    #[arg(long)]
    pub validate: bool,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub source: BuildSource,
    #[arg(long)]
    pub problem: String,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub m: Option<usize>,
    /// Comma-separated cardinalities for problem 2.
    #[arg(long, value_delimiter = ',')]
    pub cards: Vec<usize>,
    /// Cost file: per input row, f_1..f_k then g_1..g_k.
    #[arg(long)]
    pub costs: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    #[arg(long, default_value = "linear")]
    pub builder: String,
    /// Use a prebuilt collection file instead of building one.
    #[arg(long)]
    pub collection: Option<PathBuf>,
    /// Continuous oracle to compare against: grid.
    #[arg(long)]
    pub oracle: Option<String>,
    #[arg(long, default_value_t = 1e-3)]
    pub resolution: f64,
}

#[derive(Args, Debug)]
pub struct CoveringArgs {
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub sigma: f64,
    #[arg(long, default_value = "l2")]
    pub norm: String,
}

fn read_text(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    Ok(s)
}

fn load_points(src: &BuildSource) -> Result<(ParsedPoints, NormSpec)> {
    let parsed = parse_points(&read_text(&src.input)?)?;
    let norm = NormSpec::from_str(&src.norm)?;
    norm.check_dim(parsed.points.dim())?;
    Ok((parsed, norm))
}

fn build(points: &PointSet, epsilon: f64, norm: &NormSpec, builder: &str, exec: Exec) -> Result<CentersCollection> {
    match BuilderKind::parse(builder)? {
        BuilderKind::Linear => build_linear(points, epsilon, norm, exec),
        BuilderKind::Quadratic => build_quadratic(points, epsilon, norm, exec),
        BuilderKind::InputOnly => Ok(CentersCollection::input_only(points, epsilon, norm)),
    }
}

fn write_json<T: Serialize>(out: &mut dyn Write, v: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, v).map_err(io::Error::from)?;
    writeln!(out)?;
    Ok(())
}

fn cmd_build(a: &BuildArgs, exec: Exec, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let (parsed, norm) = load_points(&a.source)?;
    let mut c = build(&parsed.points, a.epsilon, &norm, &a.builder, exec)?;
    if let Some(q) = a.dedup {
        c = dedup_candidates(&c, q)?;
    }
    let opts = EmitOptions {
        inline_limit: a.inline_limit,
        timing: a.timing,
    };
    match &a.output {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            write_collection(&c, &mut w, opts)?;
            w.flush()?;
        }
        None => {
            let mut w = BufWriter::new(&mut *out);
            write_collection(&c, &mut w, opts)?;
            w.flush()?;
        }
    }
    writeln!(
        err,
        "built {} collection: n = {}, s = {}, I = {}, |T| = {}, {} candidates",
        c.builder().as_str(),
        c.stats().n,
        c.stats().s,
        c.stats().levels,
        c.stats().template_size,
        c.len()
    )?;
    Ok(EXIT_OK)
}

fn same_inputs(a: &PointSet, b: &PointSet) -> bool {
    a.dim() == b.dim()
        && a.multiplicities() == b.multiplicities()
        && a.coords().iter().zip(b.coords()).all(|(x, y)| x.to_bits() == y.to_bits())
        && a.coords().len() == b.coords().len()
}

fn cmd_verify(a: &VerifyArgs, exec: Exec, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let parsed = parse_points(&read_text(&a.input)?)?;
    let c = load_collection(&read_text(&a.collection)?)?;
    if parsed.points.dim() != c.dim() {
        return input(format!(
            "input has dimension {}, collection has {}",
            parsed.points.dim(),
            c.dim()
        ));
    }
    if !same_inputs(&parsed.points, c.inputs()) {
        return input("input points differ from the collection's input set");
    }
    if let Some(tag) = &a.norm {
        if NormSpec::from_str(tag)? != *c.norm() {
            return input(format!("--norm {tag} differs from the collection norm {}", c.norm().tag()));
        }
    }
    let mode = match a.mode.as_str() {
        "auto" => VerifyMode::Auto,
        "exact" => VerifyMode::Exact,
        "witness" => VerifyMode::Witness,
        m => return input(format!("unknown verify mode `{m}`")),
    };
    let report = probe_verify(
        &c,
        a.epsilon,
        &VerifyOptions {
            probes: a.probes,
            seed: a.seed,
            mode,
            exec,
            ..Default::default()
        },
    )?;
    write_json(out, &report)?;
    writeln!(
        err,
        "{}: max factor {} vs threshold {} over {} probes ({} evaluation)",
        if report.pass { "PASS" } else { "FAIL" },
        report.max_factor,
        report.threshold,
        report.probes,
        report.evaluation
    )?;
    Ok(if report.pass { EXIT_OK } else { EXIT_FAIL })
}

fn cmd_wspd(a: &WspdArgs, out: &mut dyn Write) -> Result<i32> {
    let (parsed, norm) = load_points(&a.source)?;
    let t = match (a.t, a.epsilon) {
        (Some(t), _) => t,
        (None, Some(e)) if e > 0.0 => f64::max(10.0, (1.0 + e) / e),
        (None, Some(e)) => return input(format!("epsilon must be positive, got {e}")),
        (None, None) => 2.0,
    };
    if !(t > 0.0) || !t.is_finite() {
        return input(format!("separation must be positive, got {t}"));
    }
    let pts = &parsed.points;
    let tree = SplitTree::build(pts);
    let w = extract_wspd(&tree, t, &norm);
    let pairs: Vec<Value> = (0..w.len())
        .map(|k| {
            let p = &w.pairs()[k];
            json!({"a": w.side_a(k), "b": w.side_b(k), "rep_a": p.rep_a, "rep_b": p.rep_b})
        })
        .collect();
    let mut doc = json!({
        "n": pts.len(),
        "dim": pts.dim(),
        "norm": norm.tag(),
        "t": t,
        "s": w.len(),
        "pairs": pairs,
    });
    if a.validate {
        let r = validate_wspd(&w, pts, t, &norm);
        doc["validation"] = json!({
            "pass": r.pass(),
            "subsets": r.subsets.pass,
            "disjoint": r.disjoint.pass,
            "coverage": r.coverage.pass,
            "separation": r.separation.pass,
        });
    }
    write_json(out, &doc)?;
    Ok(EXIT_OK)
}

fn cmd_solve(a: &SolveArgs, exec: Exec, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let (parsed, norm) = load_points(&a.source)?;
    let kind = ObjectiveKind::parse(&a.problem)?;
    let mut spec = ObjectiveSpec::new(kind, a.k);
    spec.m = a.m;
    spec.cards = a.cards.clone();
    if let Some(path) = &a.costs {
        spec.costs = Some(parse_costs(&read_text(path)?, &parsed, a.k)?);
    } else if matches!(kind, ObjectiveKind::Problem1 | ObjectiveKind::Problem2) {
        return input("problems 1 and 2 need --costs");
    }
    let c = match &a.collection {
        Some(path) => {
            let c = load_collection(&read_text(path)?)?;
            if !same_inputs(&parsed.points, c.inputs()) {
                return input("input points differ from the collection's input set");
            }
            c
        }
        None => build(&parsed.points, a.epsilon, &norm, &a.builder, exec)?,
    };
    let result = solve_discrete(&c, &spec, exec)?;
    let mut doc = serde_json::to_value(&result).map_err(io::Error::from)?;
    doc["epsilon"] = json!(c.epsilon());
    doc["builder"] = json!(c.builder().as_str());
    doc["candidate_count"] = json!(c.len());
    if let Some(o) = &a.oracle {
        if o != "grid" {
            return input(format!("unknown oracle `{o}`"));
        }
        let g = grid_brute_oracle(&parsed.points, c.norm(), &spec, a.resolution, exec)?;
        let bound = g.value + g.slack;
        let ratio = if bound > 0.0 { result.value / bound } else { 1.0 };
        doc["oracle"] = json!({
            "kind": "grid",
            "resolution": a.resolution,
            "value": g.value,
            "slack": g.slack,
            "centers": g.centers,
            "ratio": ratio,
        });
        writeln!(
            err,
            "ratio {ratio} (discrete {} vs oracle {} + slack {}), guaranteed {}",
            result.value,
            g.value,
            g.slack,
            result.guaranteed_ratio.unwrap_or(f64::NAN)
        )?;
    }
    write_json(out, &doc)?;
    Ok(EXIT_OK)
}

fn cmd_covering(a: &CoveringArgs, out: &mut dyn Write) -> Result<i32> {
    let norm = NormSpec::from_str(&a.norm)?;
    let t = CoveringTemplate::for_norm(&norm, a.dim, a.sigma)?;
    let centers: Vec<&[f64]> = t.centers().chunks_exact(a.dim.max(1)).collect();
    write_json(
        out,
        &json!({
            "construction": t.construction().as_str(),
            "norm": norm.tag(),
            "dim": t.dim(),
            "sigma": t.sigma(),
            "spacing": t.spacing(),
            "size": t.len(),
            "max_center_norm": t.max_center_norm(),
            "centers": centers,
        }),
    )?;
    Ok(EXIT_OK)
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Budget { .. } => EXIT_BUDGET,
        _ => EXIT_INPUT,
    }
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code. Machine output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    if cli.threads == Some(0) {
        let _ = writeln!(err, "error: --threads must be at least 1");
        return EXIT_INPUT;
    }
    let exec = if cli.threads == Some(1) { Exec::Sequential } else { Exec::Parallel };
    let result = with_threads(cli.threads, || -> std::result::Result<(i32, Vec<u8>, Vec<u8>), (Error, Vec<u8>)> {
        let mut o = Vec::new();
        let mut e = Vec::new();
        let r = match &cli.command {
            Command::Build(a) => cmd_build(a, exec, &mut o, &mut e),
            Command::Verify(a) => cmd_verify(a, exec, &mut o, &mut e),
            Command::Wspd(a) => cmd_wspd(a, &mut o),
            Command::Solve(a) => cmd_solve(a, exec, &mut o, &mut e),
            Command::Covering(a) => cmd_covering(a, &mut o),
        };
        match r {
            Ok(code) => Ok((code, o, e)),
            Err(x) => Err((x, e)),
        }
    });
    match result {
        Ok((code, o, e)) => {
            let _ = out.write_all(&o);
            let _ = err.write_all(&e);
            code
        }
        Err((x, e)) => {
            let _ = err.write_all(&e);
            let _ = writeln!(err, "error: {x}");
            exit_code(&x)
        }
    }
}
