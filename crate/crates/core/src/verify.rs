//! Empirical certification of the collection property by probing.
//!
//! Two evaluation strategies are available. `Exact` scans every candidate
//! for every probe. `Witness` scans the input points plus, for every input
//! point acting as a block anchor, the nearest template center of the few
//! smallest blocks whose ball contains the probe. Every candidate it looks at
//! is a real member of the collection, so its factor is an upper bound on
//! the exact best factor and a passing report stays sound.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Serialize, Serializer};

use crate::collection::{block_point, Body, CentersCollection};
use crate::error::{input, Result};
use crate::exec::Exec;
use crate::metric::{ratio, NormSpec, PointSet, REL_SLACK};

/// Above this many distance evaluations `Auto` switches to witness mode.
pub const EXACT_WORK_LIMIT: f64 = 2e9;
/// Blocks examined per anchor in witness mode.
const BLOCKS_PER_ANCHOR: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum VerifyMode {
    #[default]
    Auto,
    Exact,
    Witness,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeSource {
    Uniform,
    Gaussian,
    Lens,
    Far,
}

/// Relative weights of the four probe distributions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeMix {
    pub uniform: f64,
    pub gaussian: f64,
    pub lens: f64,
    pub far: f64,
}

impl Default for ProbeMix {
    fn default() -> Self {
        ProbeMix {
            uniform: 0.25,
            gaussian: 0.25,
            lens: 0.40,
            far: 0.10,
        }
    }
}

impl ProbeMix {
    /// Splits `total` probes by weight; the far source absorbs rounding.
    fn counts(&self, total: usize) -> [usize; 4] {
        let w = [self.uniform, self.gaussian, self.lens, self.far].map(|x| x.max(0.0));
        let sum: f64 = w.iter().sum();
        if sum <= 0.0 {
            return [total, 0, 0, 0];
        }
        let mut c = [0usize; 4];
        for i in 0..3 {
            c[i] = (total as f64 * w[i] / sum).floor() as usize;
        }
        c[3] = total - c[0] - c[1] - c[2];
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SourceCounts {
    pub uniform: usize,
    pub gaussian: usize,
    pub lens: usize,
    pub far: usize,
}

/// Factor histogram: one bin below 1, ten equal bins over [1, 1+eps], and
/// one bin for anything larger.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub below_one: usize,
    pub edges: Vec<f64>,
    pub bins: Vec<usize>,
    pub overflow: usize,
}

impl Histogram {
    fn new(epsilon: f64) -> Self {
        Histogram {
            below_one: 0,
            edges: (0..=10).map(|i| 1.0 + epsilon * i as f64 / 10.0).collect(),
            bins: vec![0; 10],
            overflow: 0,
        }
    }

    fn add(&mut self, f: f64, epsilon: f64) {
        if f < 1.0 {
            self.below_one += 1;
        } else if f > 1.0 + epsilon || !f.is_finite() {
            self.overflow += 1;
        } else {
            let b = (((f - 1.0) / epsilon) * 10.0).floor() as usize;
            self.bins[b.min(9)] += 1;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Argmax {
    pub probe_index: usize,
    pub source: ProbeSource,
    pub point: Vec<f64>,
    pub witness: usize,
    pub witness_point: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeReport {
    pub epsilon: f64,
    pub evaluation: &'static str,
    pub probes: usize,
    pub candidates: usize,
    pub sources: SourceCounts,
    #[serde(serialize_with = "finite_or_null")]
    pub max_factor: f64,
    pub threshold: f64,
    pub argmax: Argmax,
    pub histogram: Histogram,
    pub pass: bool,
}

fn finite_or_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

/// Factor of candidate `q` for probe `p`, abandoning the scan once it
/// exceeds `cutoff`. `dp[x]` is dist(x, p).
#[inline]
fn factor_with_cutoff(q: &[f64], xs: &PointSet, dp: &[f64], norm: &NormSpec, cutoff: f64) -> f64 {
    let mut worst = 0.0f64;
    for (x, &d) in xs.iter().zip(dp) {
        worst = worst.max(ratio(norm.dist(x, q), d));
        if worst > cutoff {
            return worst;
        }
    }
    worst
}

/// Minimum approximation factor over a flat candidate list, with the
/// lowest-index witness among ties.
pub fn best_factor_flat(p: &[f64], candidates: &[f64], xs: &PointSet, norm: &NormSpec) -> Result<(f64, usize)> {
    let d = xs.dim();
    if p.len() != d {
        return input(format!("probe has dimension {}, expected {d}", p.len()));
    }
    if candidates.is_empty() {
        return input("empty collection");
    }
    let dp: Vec<f64> = xs.iter().map(|x| norm.dist(x, p)).collect();
    let mut best = (f64::INFINITY, 0);
    for (i, q) in candidates.chunks_exact(d).enumerate() {
        let f = factor_with_cutoff(q, xs, &dp, norm, best.0);
        if f < best.0 || (i == 0 && f == best.0) {
            best = (f, i);
        }
    }
    Ok(best)
}

/// Exact best factor of `p` over every candidate of `collection`, measured
/// against the collection's own input set.
pub fn best_factor(p: &[f64], collection: &CentersCollection) -> Result<(f64, usize)> {
    let xs = collection.inputs();
    if p.len() != xs.dim() {
        return input(format!("probe has dimension {}, expected {}", p.len(), xs.dim()));
    }
    let norm = collection.norm();
    let dp: Vec<f64> = xs.iter().map(|x| norm.dist(x, p)).collect();
    let mut best = (f64::INFINITY, 0);
    let mut q = vec![0.0; xs.dim()];
    for i in 0..collection.len() {
        collection.candidate_into(i, &mut q);
        let f = factor_with_cutoff(&q, xs, &dp, norm, best.0);
        if f < best.0 || (i == 0 && f == best.0) {
            best = (f, i);
        }
    }
    Ok(best)
}

/// Per-anchor index of blocks sorted by scale, used by witness evaluation.
struct WitnessIndex {
    by_anchor: Vec<Vec<(f64, u32)>>,
    input_dists: Vec<f64>,
}

impl WitnessIndex {
    fn new(c: &CentersCollection) -> Self {
        let xs = c.inputs();
        let n = xs.len();
        let mut by_anchor = vec![Vec::new(); n];
        if let Body::Blocks { blocks, .. } = c.body() {
            for (bi, b) in blocks.iter().enumerate() {
                by_anchor[b.anchor as usize].push((b.scale, bi as u32));
            }
        }
        for v in &mut by_anchor {
            v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        let mut input_dists = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                input_dists[i * n + j] = c.norm().dist(xs.point(i), xs.point(j));
            }
        }
        WitnessIndex { by_anchor, input_dists }
    }

    fn evaluate(&self, c: &CentersCollection, p: &[f64]) -> (f64, usize) {
        let xs = c.inputs();
        let norm = c.norm();
        let n = xs.len();
        let dp: Vec<f64> = xs.iter().map(|x| norm.dist(x, p)).collect();
        let mut best = (f64::INFINITY, usize::MAX);
        let consider = |f: f64, idx: usize, best: &mut (f64, usize)| {
            if f < best.0 || (f == best.0 && idx < best.1) {
                *best = (f, idx);
            }
        };
        for j in 0..n {
            let col = (0..n).map(|x| ratio(self.input_dists[x * n + j], dp[x]));
            let f = col.fold(0.0, f64::max);
            consider(f, j, &mut best);
        }
        let Body::Blocks { template, blocks } = c.body() else {
            return best;
        };
        let t = template.len();
        let d = xs.dim();
        let mut v = vec![0.0; d];
        let mut q = vec![0.0; d];
        for (a, list) in self.by_anchor.iter().enumerate() {
            let start = list.partition_point(|&(s, _)| s < dp[a]);
            let anchor = xs.point(a);
            for &(scale, bi) in list[start..].iter().take(BLOCKS_PER_ANCHOR) {
                for x in 0..d {
                    v[x] = (p[x] - anchor[x]) / scale;
                }
                let Some(ci) = template.nearest(&v) else {
                    continue;
                };
                let b = &blocks[bi as usize];
                block_point(xs.point(b.anchor as usize), b.scale, template.center(ci), &mut q);
                let f = factor_with_cutoff(&q, xs, &dp, norm, best.0);
                consider(f, n + bi as usize * t + ci, &mut best);
            }
        }
        best
    }
}

struct Frame {
    lo: Vec<f64>,
    hi: Vec<f64>,
    center: Vec<f64>,
    diam: f64,
}

fn frame(xs: &PointSet, norm: &NormSpec) -> Frame {
    let (lo, hi) = xs.bounding_box();
    let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let mut diam = norm.dist(&lo, &hi);
    if !(diam > 0.0) {
        diam = 1.0;
    }
    Frame { lo, hi, center, diam }
}

fn uniform_probe(f: &Frame, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let side_fallback = f.diam;
    f.lo
        .iter()
        .zip(&f.hi)
        .zip(&f.center)
        .map(|((lo, hi), c)| {
            let side = hi - lo;
            let half = if side > 0.0 { side } else { side_fallback };
            c + rng.gen_range(-half..=half)
        })
        .collect()
}

/// Probes inside randomly chosen nonempty lenses L_eps(x1, x2), found by
/// rejection sampling in the box around both balls. A pair whose lens
/// yields no sample after 100 tries is skipped. May return fewer than
/// `count` points (none at all when n < 2 or every lens is empty).
pub fn lens_stress(xs: &PointSet, epsilon: f64, norm: &NormSpec, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    lens_stress_with(xs, epsilon, norm, count, &mut rng)
}

fn lens_stress_with(
    xs: &PointSet,
    epsilon: f64,
    norm: &NormSpec,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut out = Vec::with_capacity(count);
    if n < 2 || count == 0 {
        return out;
    }
    let d = xs.dim();
    let (c_low, _) = norm.equivalence(d);
    let mut pair_attempts = 0usize;
    let max_pair_attempts = 10 * count + 100;
    let mut p = vec![0.0; d];
    while out.len() < count && pair_attempts < max_pair_attempts {
        pair_attempts += 1;
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let (x1, x2) = (xs.point(i), xs.point(j));
        let r = norm.dist(x1, x2) / (1.0 + epsilon);
        let reach = r / c_low;
        let lo: Vec<f64> = (0..d).map(|a| (x1[a] - reach).max(x2[a] - reach)).collect();
        let hi: Vec<f64> = (0..d).map(|a| (x1[a] + reach).min(x2[a] + reach)).collect();
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            continue;
        }
        for _ in 0..100 {
            for a in 0..d {
                p[a] = if lo[a] < hi[a] { rng.gen_range(lo[a]..=hi[a]) } else { lo[a] };
            }
            if norm.dist(x1, &p) <= r && norm.dist(x2, &p) <= r {
                out.push(p.clone());
                break;
            }
        }
    }
    out
}

/// Generates the probe list with its source tags. Source `s` draws from
/// ChaCha8 seeded with `seed` on stream `s + 1`.
pub fn generate_probes(
    xs: &PointSet,
    epsilon: f64,
    norm: &NormSpec,
    total: usize,
    seed: u64,
    mix: &ProbeMix,
) -> Vec<(ProbeSource, Vec<f64>)> {
    let f = frame(xs, norm);
    let d = xs.dim();
    let [n_uni, n_gauss, n_lens, n_far] = mix.counts(total);
    let rng_for = |s: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(s + 1);
        r
    };
    let mut out = Vec::with_capacity(total);

    let mut rng = rng_for(0);
    for _ in 0..n_uni {
        out.push((ProbeSource::Uniform, uniform_probe(&f, &mut rng)));
    }

    let mut rng = rng_for(1);
    for _ in 0..n_gauss {
        let base = xs.point(rng.gen_range(0..xs.len()));
        let scale = *[0.01, 0.1, 1.0].choose(&mut rng).unwrap() * f.diam;
        let p = base
            .iter()
            .map(|b| {
                let z: f64 = StandardNormal.sample(&mut rng);
                b + scale * z
            })
            .collect();
        out.push((ProbeSource::Gaussian, p));
    }

    let mut rng = rng_for(2);
    let lens = lens_stress_with(xs, epsilon, norm, n_lens, &mut rng);
    let shortfall = n_lens - lens.len();
    out.extend(lens.into_iter().map(|p| (ProbeSource::Lens, p)));
    for _ in 0..shortfall {
        out.push((ProbeSource::Uniform, uniform_probe(&f, &mut rng)));
    }

    let mut rng = rng_for(3);
    for _ in 0..n_far {
        let mut dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let len = norm.norm(&dir);
        if len == 0.0 {
            dir[0] = 1.0;
        }
        let len = norm.norm(&dir);
        let p = f
            .center
            .iter()
            .zip(&dir)
            .map(|(c, u)| c + 1e3 * f.diam * u / len)
            .collect();
        out.push((ProbeSource::Far, p));
    }
    out
}

/// Options for [`probe_verify`].
#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub probes: usize,
    pub seed: u64,
    pub mix: ProbeMix,
    pub mode: VerifyMode,
    pub exec: Exec,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            probes: 10_000,
            seed: 42,
            mix: ProbeMix::default(),
            mode: VerifyMode::Auto,
            exec: Exec::Parallel,
        }
    }
}

/// Samples probes and checks each against the collection at `epsilon`.
pub fn probe_verify(collection: &CentersCollection, epsilon: f64, opts: &VerifyOptions) -> Result<ProbeReport> {
    if opts.probes == 0 {
        return input("at least one probe is required");
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return input(format!("epsilon must be positive, got {epsilon}"));
    }
    let xs = collection.inputs();
    let norm = collection.norm();
    let probes = generate_probes(xs, epsilon, norm, opts.probes, opts.seed, &opts.mix);

    let work = opts.probes as f64 * collection.len() as f64 * xs.len() as f64;
    let witness = match opts.mode {
        VerifyMode::Exact => false,
        VerifyMode::Witness => true,
        VerifyMode::Auto => work > EXACT_WORK_LIMIT,
    };
    let results: Vec<(f64, usize)> = if witness {
        let index = WitnessIndex::new(collection);
        opts.exec.map(probes.len(), |i| index.evaluate(collection, &probes[i].1))
    } else {
        let flat = collection.materialize(opts.exec);
        opts.exec.map(probes.len(), |i| {
            best_factor_flat(&probes[i].1, &flat, xs, norm).expect("dimensions checked")
        })
    };

    let mut hist = Histogram::new(epsilon);
    let mut counts = SourceCounts {
        uniform: 0,
        gaussian: 0,
        lens: 0,
        far: 0,
    };
    let mut arg = 0usize;
    for (i, ((src, _), (f, _))) in probes.iter().zip(&results).enumerate() {
        match src {
            ProbeSource::Uniform => counts.uniform += 1,
            ProbeSource::Gaussian => counts.gaussian += 1,
            ProbeSource::Lens => counts.lens += 1,
            ProbeSource::Far => counts.far += 1,
        }
        hist.add(*f, epsilon);
        if *f > results[arg].0 {
            arg = i;
        }
    }
    let (max_factor, witness_idx) = results[arg];
    let threshold = (1.0 + epsilon) * (1.0 + REL_SLACK);
    Ok(ProbeReport {
        epsilon,
        evaluation: if witness { "witness" } else { "exact" },
        probes: probes.len(),
        candidates: collection.len(),
        sources: counts,
        max_factor,
        threshold,
        argmax: Argmax {
            probe_index: arg,
            source: probes[arg].0,
            point: probes[arg].1.clone(),
            witness: witness_idx,
            witness_point: collection.candidate(witness_idx),
        },
        histogram: hist,
        pass: max_factor <= threshold,
    })
}
