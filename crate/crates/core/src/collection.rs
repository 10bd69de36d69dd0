//! Lens geometry, the radius schedule, and the quadratic and linear
//! (1+eps)-collection builders.
//!
//! A collection is stored structurally: the input points followed by blocks,
//! each block being one scaled and translated copy of a shared covering
//! template. Candidate `n + b * |T| + c` is `anchor_b + scale_b * T[c]`.
//! Nothing is materialized unless asked for, so candidate counts in the
//! hundreds of millions stay cheap to build, count and probe.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::covering::{sample_unit_ball, CoveringTemplate};
use crate::error::{input, parameter, Error, Result};
use crate::exec::Exec;
use crate::metric::{NormSpec, PointSet, REL_SLACK};
use crate::wspd::{extract_wspd, SplitTree, WspdSet};

/// Parameters of a refined (eps < 1) construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScheduleParams {
    pub epsilon: f64,
    /// Number of radius levels I = ceil(1 / log_eps 0.9).
    pub levels: usize,
    /// delta = eps^(1 + 1/I).
    pub delta: f64,
    /// WSPD separation t = max(10, (1 + eps) / eps).
    pub separation: f64,
    /// Radius of the single covering template used by the linear builder.
    pub template_sigma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Params {
    /// eps >= 1: the input set already is a (1+eps)-collection.
    InputOnly { epsilon: f64 },
    Refined(ScheduleParams),
}

impl Params {
    pub fn epsilon(&self) -> f64 {
        match self {
            Params::InputOnly { epsilon } => *epsilon,
            Params::Refined(p) => p.epsilon,
        }
    }
}

pub fn compute_params(epsilon: f64) -> Result<Params> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return parameter(format!("epsilon must be positive and finite, got {epsilon}"));
    }
    if epsilon >= 1.0 {
        return Ok(Params::InputOnly { epsilon });
    }
    // log_eps 0.9 = ln 0.9 / ln eps, so I = ceil(ln eps / ln 0.9)
    let x = epsilon.ln() / 0.9f64.ln();
    let nearest = x.round();
    let levels = if (x - nearest).abs() <= 1e-9 * x.max(1.0) {
        nearest
    } else {
        x.ceil()
    }
    .max(1.0) as usize;
    let delta = epsilon.powf(1.0 + 1.0 / levels as f64);
    Ok(Params::Refined(ScheduleParams {
        epsilon,
        levels,
        delta,
        separation: f64::max(10.0, (1.0 + epsilon) / epsilon),
        template_sigma: 0.3 * epsilon,
    }))
}

/// d_i = base * eps^(1 - i/I) / (1 + eps).
#[inline]
pub fn level_radius(base: f64, epsilon: f64, i: usize, levels: usize) -> f64 {
    base * epsilon.powf(1.0 - i as f64 / levels as f64) / (1.0 + epsilon)
}

/// The symmetric lens B(x1, r) ∩ B(x2, r) with r = dist(x1, x2) / (1 + eps).
#[derive(Clone, Debug, PartialEq)]
pub struct Lens {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub epsilon: f64,
    pub radius: f64,
}

impl Lens {
    pub fn contains(&self, p: &[f64], norm: &NormSpec) -> bool {
        norm.dist(&self.x1, p) <= self.radius && norm.dist(&self.x2, p) <= self.radius
    }
}

pub fn lens_of(x1: &[f64], x2: &[f64], epsilon: f64, norm: &NormSpec) -> Result<Lens> {
    if x1.len() != x2.len() {
        return input("lens endpoints differ in dimension");
    }
    if !(epsilon > 0.0) {
        return parameter("epsilon must be positive");
    }
    let d = norm.dist(x1, x2);
    if d == 0.0 {
        return input("lens of coincident points");
    }
    Ok(Lens {
        x1: x1.to_vec(),
        x2: x2.to_vec(),
        epsilon,
        radius: d / (1.0 + epsilon),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadiusSchedule {
    pub base: f64,
    /// d_0 ..= d_I.
    pub levels: Vec<f64>,
    /// r_1(k,t) ..= r_I(k,t), index 0 unused (equal to NaN).
    pub cover: Vec<f64>,
}

pub fn radius_schedule(
    x1: &[f64],
    x2: &[f64],
    params: &ScheduleParams,
    norm: &NormSpec,
) -> Result<RadiusSchedule> {
    if x1.len() != x2.len() {
        return input("schedule endpoints differ in dimension");
    }
    let base = norm.dist(x1, x2);
    if base == 0.0 {
        return input("radius schedule of coincident points");
    }
    Ok(schedule_for_base(base, params))
}

fn schedule_for_base(base: f64, p: &ScheduleParams) -> RadiusSchedule {
    let levels: Vec<f64> = (0..=p.levels)
        .map(|i| level_radius(base, p.epsilon, i, p.levels))
        .collect();
    let t = p.separation;
    let mut cover = vec![f64::NAN];
    cover.extend(levels[1..].iter().map(|d| d * (1.0 + 2.0 / t) + base / t));
    RadiusSchedule { base, levels, cover }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuilderKind {
    Quadratic,
    Linear,
    InputOnly,
}

impl BuilderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BuilderKind::Quadratic => "quadratic",
            BuilderKind::Linear => "linear",
            BuilderKind::InputOnly => "input-only",
        }
    }

    pub fn parse(s: &str) -> Result<BuilderKind> {
        match s {
            "quadratic" => Ok(BuilderKind::Quadratic),
            "linear" => Ok(BuilderKind::Linear),
            "input-only" => Ok(BuilderKind::InputOnly),
            _ => parameter(format!("unknown builder `{s}`")),
        }
    }
}

/// One scaled copy of the covering template.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Block {
    /// Input point the copy is centered on.
    pub anchor: u32,
    /// The other endpoint of the pair that produced the block.
    pub partner: u32,
    /// WSPD pair index (linear) or ordered-pair index (quadratic).
    pub pair: u32,
    /// Level i in 1..=I.
    pub level: u32,
    /// Ball radius covered by this block.
    pub scale: f64,
    /// Covering radius the block must certify for its ball.
    pub cover_radius: f64,
}

#[derive(Clone, Debug)]
pub enum Body {
    InputOnly,
    Blocks {
        template: Arc<CoveringTemplate>,
        blocks: Vec<Block>,
    },
    /// Explicit extra candidates after the inputs (flat coordinates).
    Explicit(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BuildStats {
    pub n: usize,
    pub s: usize,
    pub levels: usize,
    pub template_size: usize,
    pub build_ms: f64,
}

/// The candidate set X ∪ C.
#[derive(Clone, Debug)]
pub struct CentersCollection {
    epsilon: f64,
    norm: NormSpec,
    builder: BuilderKind,
    inputs: PointSet,
    body: Body,
    stats: BuildStats,
}

impl CentersCollection {
    pub fn input_only(inputs: &PointSet, epsilon: f64, norm: &NormSpec) -> Self {
        CentersCollection {
            epsilon,
            norm: norm.clone(),
            builder: BuilderKind::InputOnly,
            inputs: inputs.clone(),
            body: Body::InputOnly,
            stats: BuildStats {
                n: inputs.len(),
                s: 0,
                levels: 0,
                template_size: 0,
                build_ms: 0.0,
            },
        }
    }

    /// Assembles a collection from parts (used when loading from disk).
    pub fn from_parts(
        epsilon: f64,
        norm: NormSpec,
        builder: BuilderKind,
        inputs: PointSet,
        body: Body,
        stats: BuildStats,
    ) -> Self {
        CentersCollection {
            epsilon,
            norm,
            builder,
            inputs,
            body,
            stats,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn norm(&self) -> &NormSpec {
        &self.norm
    }

    pub fn builder(&self) -> BuilderKind {
        self.builder
    }

    pub fn inputs(&self) -> &PointSet {
        &self.inputs
    }

    pub fn body(&self) -> &Body {
        &self.body
    }

    pub fn stats(&self) -> &BuildStats {
        &self.stats
    }

    pub fn dim(&self) -> usize {
        self.inputs.dim()
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
            + match &self.body {
                Body::InputOnly => 0,
                Body::Blocks { template, blocks } => blocks.len() * template.len(),
                Body::Explicit(extra) => extra.len() / self.dim(),
            }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes candidate `i` into `out`.
    pub fn candidate_into(&self, i: usize, out: &mut [f64]) {
        let d = self.dim();
        let n = self.inputs.len();
        if i < n {
            out.copy_from_slice(self.inputs.point(i));
            return;
        }
        let j = i - n;
        match &self.body {
            Body::InputOnly => panic!("candidate index {i} out of range"),
            Body::Blocks { template, blocks } => {
                let t = template.len();
                let b = &blocks[j / t];
                block_point(self.inputs.point(b.anchor as usize), b.scale, template.center(j % t), out);
            }
            Body::Explicit(extra) => out.copy_from_slice(&extra[j * d..(j + 1) * d]),
        }
    }

    pub fn candidate(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.candidate_into(i, &mut out);
        out
    }

    /// All candidates as a flat coordinate list, in index order.
    pub fn materialize(&self, exec: Exec) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; self.len() * d];
        const CHUNK: usize = 1 << 14;
        exec.for_each_chunk_mut(&mut out, CHUNK * d, |off, chunk| {
            let first = off / d;
            for (j, slot) in chunk.chunks_exact_mut(d).enumerate() {
                self.candidate_into(first + j, slot);
            }
        });
        out
    }

    /// Calls `f(index, point)` for every candidate in order.
    pub fn for_each_candidate(&self, mut f: impl FnMut(usize, &[f64])) {
        let mut buf = vec![0.0; self.dim()];
        for i in 0..self.len() {
            self.candidate_into(i, &mut buf);
            f(i, &buf);
        }
    }

    pub(crate) fn set_build_ms(&mut self, ms: f64) {
        self.stats.build_ms = ms;
    }
}

/// `anchor + scale * center`, the one formula every consumer uses so that
/// candidates are bit-identical wherever they are recomputed.
#[inline]
pub fn block_point(anchor: &[f64], scale: f64, center: &[f64], out: &mut [f64]) {
    for a in 0..out.len() {
        out[a] = anchor[a] + scale * center[a];
    }
}

fn prepare(points: &PointSet, epsilon: f64, norm: &NormSpec) -> Result<Params> {
    norm.check_dim(points.dim())?;
    compute_params(epsilon)
}

/// Quadratic-size builder: for every ordered pair (x1, x2) and level i, the
/// template at sigma = delta scaled by d_i(x1, x2) around x1.
pub fn build_quadratic(points: &PointSet, epsilon: f64, norm: &NormSpec, exec: Exec) -> Result<CentersCollection> {
    let start = Instant::now();
    let params = prepare(points, epsilon, norm)?;
    let p = match params {
        Params::Refined(p) if points.len() > 1 => p,
        _ => {
            let mut c = CentersCollection::input_only(points, epsilon, norm);
            c.set_build_ms(start.elapsed().as_secs_f64() * 1e3);
            return Ok(c);
        }
    };
    let template = Arc::new(CoveringTemplate::for_norm(norm, points.dim(), p.delta)?);
    let n = points.len();
    let per_anchor: Vec<Vec<Block>> = exec.map(n, |x1| {
        let mut out = Vec::with_capacity((n - 1) * p.levels);
        for x2 in 0..n {
            if x1 == x2 {
                continue;
            }
            let base = norm.dist(points.point(x1), points.point(x2));
            for i in 1..=p.levels {
                let scale = level_radius(base, p.epsilon, i, p.levels);
                out.push(Block {
                    anchor: x1 as u32,
                    partner: x2 as u32,
                    pair: (x1 * n + x2) as u32,
                    level: i as u32,
                    scale,
                    cover_radius: p.delta * scale,
                });
            }
        }
        out
    });
    let blocks: Vec<Block> = per_anchor.into_iter().flatten().collect();
    let stats = BuildStats {
        n,
        s: n * (n - 1),
        levels: p.levels,
        template_size: template.len(),
        build_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok(CentersCollection {
        epsilon,
        norm: norm.clone(),
        builder: BuilderKind::Quadratic,
        inputs: points.clone(),
        body: Body::Blocks { template, blocks },
        stats,
    })
}

/// Linear-size builder: one t-WSPD pair per block family, the template at
/// sigma = 0.3 eps scaled by r_i(k, t) around both representatives.
pub fn build_linear(points: &PointSet, epsilon: f64, norm: &NormSpec, exec: Exec) -> Result<CentersCollection> {
    Ok(build_linear_with_wspd(points, epsilon, norm, exec)?.0)
}

/// [`build_linear`] that also returns the decomposition it used.
pub fn build_linear_with_wspd(
    points: &PointSet,
    epsilon: f64,
    norm: &NormSpec,
    exec: Exec,
) -> Result<(CentersCollection, Option<WspdSet>)> {
    let start = Instant::now();
    let params = prepare(points, epsilon, norm)?;
    let p = match params {
        Params::Refined(p) if points.len() > 1 => p,
        _ => {
            let mut c = CentersCollection::input_only(points, epsilon, norm);
            c.set_build_ms(start.elapsed().as_secs_f64() * 1e3);
            return Ok((c, None));
        }
    };
    let tree = SplitTree::build(points);
    let wspd = extract_wspd(&tree, p.separation, norm);
    let template = Arc::new(CoveringTemplate::for_norm(norm, points.dim(), p.template_sigma)?);
    let sigma_t = template.sigma();
    let t = p.separation;
    let per_pair: Vec<Result<Vec<Block>>> = exec.map(wspd.len(), |k| {
        let pair = &wspd.pairs()[k];
        let (a, b) = (pair.rep_a, pair.rep_b);
        let base = norm.dist(points.point(a as usize), points.point(b as usize));
        let sched = schedule_for_base(base, &p);
        let mut out = Vec::with_capacity(2 * p.levels);
        for i in 1..=p.levels {
            let r = sched.cover[i];
            let cover_radius = p.delta * sched.levels[i] * (1.0 - 2.0 / t);
            if sigma_t * r > cover_radius * (1.0 + REL_SLACK) {
                return Err(Error::Construction(format!(
                    "pair {k} level {i}: template radius {sigma_t} * {r} exceeds {cover_radius}"
                )));
            }
            for (anchor, partner) in [(a, b), (b, a)] {
                out.push(Block {
                    anchor,
                    partner,
                    pair: k as u32,
                    level: i as u32,
                    scale: r,
                    cover_radius,
                });
            }
        }
        Ok(out)
    });
    let mut blocks = Vec::with_capacity(2 * wspd.len() * p.levels);
    for chunk in per_pair {
        blocks.extend(chunk?);
    }
    let stats = BuildStats {
        n: points.len(),
        s: wspd.len(),
        levels: p.levels,
        template_size: template.len(),
        build_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((
        CentersCollection {
            epsilon,
            norm: norm.clone(),
            builder: BuilderKind::Linear,
            inputs: points.clone(),
            body: Body::Blocks { template, blocks },
            stats,
        },
        Some(wspd),
    ))
}

/// Merges candidates that coincide after quantizing coordinates to
/// multiples of `quantum` (`0` merges exact duplicates only). Input points
/// are always kept; the first occurrence of any other key wins.
pub fn dedup_candidates(collection: &CentersCollection, quantum: f64) -> Result<CentersCollection> {
    if !(quantum >= 0.0) || !quantum.is_finite() {
        return parameter(format!("quantum must be a nonnegative number, got {quantum}"));
    }
    let d = collection.dim();
    let n = collection.inputs().len();
    let key = |p: &[f64]| -> Vec<u64> {
        if quantum == 0.0 {
            p.iter().map(|v| (v + 0.0).to_bits()).collect()
        } else {
            p.iter().map(|v| (v / quantum).round() as i64 as u64).collect()
        }
    };
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let mut extra = Vec::new();
    collection.for_each_candidate(|i, p| {
        let k = key(p);
        if i < n {
            seen.insert(k);
        } else if seen.insert(k) {
            extra.extend_from_slice(p);
        }
    });
    let mut out = collection.clone();
    out.body = Body::Explicit(extra);
    let _ = d;
    Ok(out)
}

/// Result of sampling the covering premise of every block.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PremiseReport {
    pub balls: usize,
    pub samples: usize,
    pub violations: usize,
    /// Largest observed (distance to block's nearest center) / cover radius.
    pub worst_ratio: f64,
    pub first_violation: Option<String>,
}

/// For every block, samples `samples_per_ball` points of B(anchor, scale)
/// (plus the 2d axis extremes) and checks that each lies within
/// `cover_radius * (1 + 1e-9)` of a center of that block. For quadratic
/// collections these balls are B(x1, d_i(x1, x2)) with cover radius
/// delta * d_i; for linear ones they are B(x, r_i(k, t)) with cover radius
/// delta * d_i(a_k, b_k) * (1 - 2/t).
pub fn check_cover_premise(
    collection: &CentersCollection,
    samples_per_ball: usize,
    seed: u64,
    exec: Exec,
) -> Result<PremiseReport> {
    let Body::Blocks { template, blocks } = collection.body() else {
        return match collection.body() {
            Body::InputOnly => Ok(PremiseReport::default()),
            _ => Err(Error::Unsupported("premise check needs a structured collection".into())),
        };
    };
    let d = collection.dim();
    let norm = collection.norm().clone();
    let inputs = collection.inputs();
    let per_block: Vec<PremiseReport> = exec.map(blocks.len(), |bi| {
        let b = &blocks[bi];
        let anchor = inputs.point(b.anchor as usize);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(bi as u64);
        let mut rep = PremiseReport {
            balls: 1,
            ..Default::default()
        };
        let mut u = vec![0.0; d];
        let mut y = vec![0.0; d];
        let mut c = vec![0.0; d];
        let mut v = vec![0.0; d];
        for s in 0..samples_per_ball + 2 * d {
            if s < 2 * d {
                u.iter_mut().for_each(|x| *x = 0.0);
                u[s / 2] = if s % 2 == 0 { 1.0 } else { -1.0 };
                let len = norm.norm(&u);
                u[s / 2] /= len;
            } else {
                sample_unit_ball(&norm, d, &mut rng, &mut u);
            }
            block_point(anchor, b.scale, &u, &mut y);
            for a in 0..d {
                v[a] = (y[a] - anchor[a]) / b.scale;
            }
            rep.samples += 1;
            let dist = match template.nearest(&v) {
                Some(ci) => {
                    block_point(anchor, b.scale, template.center(ci), &mut c);
                    norm.dist(&c, &y)
                }
                None => f64::INFINITY,
            };
            let r = dist / b.cover_radius;
            rep.worst_ratio = rep.worst_ratio.max(r);
            if dist > b.cover_radius * (1.0 + REL_SLACK) {
                rep.violations += 1;
                if rep.first_violation.is_none() {
                    rep.first_violation = Some(format!(
                        "block {bi} (anchor {}, level {}): sample at distance {dist} > {}",
                        b.anchor, b.level, b.cover_radius
                    ));
                }
            }
        }
        rep
    });
    let mut total = PremiseReport::default();
    for r in per_block {
        total.balls += r.balls;
        total.samples += r.samples;
        total.violations += r.violations;
        total.worst_ratio = total.worst_ratio.max(r.worst_ratio);
        if total.first_violation.is_none() {
            total.first_violation = r.first_violation;
        }
    }
    Ok(total)
}

/// Checks the pairwise premise on a linear collection: for every ordered pair
/// (u, v) and level i, sampled points of B(u, d_i(u, v)) lie within
/// delta * d_i(u, v) of the blocks emitted for the WSPD pair covering {u, v}.
pub fn check_pairwise_premise(
    collection: &CentersCollection,
    wspd: &WspdSet,
    samples_per_ball: usize,
    seed: u64,
) -> Result<PremiseReport> {
    let Body::Blocks { template, blocks } = collection.body() else {
        return Err(Error::Unsupported("pairwise premise needs a structured collection".into()));
    };
    let Params::Refined(p) = compute_params(collection.epsilon())? else {
        return Ok(PremiseReport::default());
    };
    let inputs = collection.inputs();
    let n = inputs.len();
    let d = inputs.dim();
    let norm = collection.norm();
    let lookup = wspd.pair_lookup(n);
    let mut by_pair: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
    for (bi, b) in blocks.iter().enumerate() {
        by_pair.entry((b.pair, b.level)).or_default().push(bi);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = PremiseReport::default();
    let (mut u, mut y, mut v, mut c) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let k = lookup[a * n + b];
            if k == u32::MAX {
                return Err(Error::Construction(format!("pair {{{a}, {b}}} not covered by the WSPD")));
            }
            let base = norm.dist(inputs.point(a), inputs.point(b));
            for i in 1..=p.levels {
                let di = level_radius(base, p.epsilon, i, p.levels);
                let need = p.delta * di;
                rep.balls += 1;
                let cands = &by_pair[&(k, i as u32)];
                for _ in 0..samples_per_ball {
                    sample_unit_ball(norm, d, &mut rng, &mut u);
                    block_point(inputs.point(a), di, &u, &mut y);
                    let mut best = f64::INFINITY;
                    for &bi in cands {
                        let blk = &blocks[bi];
                        let anchor = inputs.point(blk.anchor as usize);
                        for x in 0..d {
                            v[x] = (y[x] - anchor[x]) / blk.scale;
                        }
                        if let Some(ci) = template.nearest(&v) {
                            block_point(anchor, blk.scale, template.center(ci), &mut c);
                            best = best.min(norm.dist(&c, &y));
                        }
                    }
                    rep.samples += 1;
                    rep.worst_ratio = rep.worst_ratio.max(best / need);
                    if best > need * (1.0 + REL_SLACK) {
                        rep.violations += 1;
                        if rep.first_violation.is_none() {
                            rep.first_violation = Some(format!(
                                "ordered pair ({a}, {b}) level {i}: distance {best} > {need}"
                            ));
                        }
                    }
                }
            }
        }
    }
    Ok(rep)
}
