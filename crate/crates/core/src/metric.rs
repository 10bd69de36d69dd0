//! Points, norms, distances and the approximation factor.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{input, parameter, Error, Result};

/// Relative slack applied to every comparison against a geometric bound.
pub const REL_SLACK: f64 = 1e-9;

/// A finite point set in R^d. Exact duplicates are merged into multiplicities.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
    multiplicities: Vec<u32>,
}

impl PointSet {
    /// Builds a point set from rows, merging duplicates. The first occurrence
    /// of a point fixes its index.
    pub fn new(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return input(format!(
                    "point {i} has {} coordinates, expected {dim}",
                    row.len()
                ));
            }
            flat.extend_from_slice(row);
        }
        Self::from_flat(dim, flat)
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        Self::from_flat_with_origin(dim, coords).map(|(set, _)| set)
    }

    /// Like [`PointSet::from_flat`], also returning for every input row the
    /// index of the stored point it was merged into.
    pub fn from_flat_with_origin(dim: usize, coords: Vec<f64>) -> Result<(Self, Vec<usize>)> {
        if dim == 0 {
            return input("dimension must be positive");
        }
        if coords.is_empty() {
            return input("point set must contain at least one point");
        }
        if !coords.len().is_multiple_of(dim) {
            return input("coordinate count is not a multiple of the dimension");
        }
        let rows = coords.len() / dim;
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::with_capacity(rows);
        let mut out = Vec::with_capacity(coords.len());
        let mut mult: Vec<u32> = Vec::new();
        let mut origin = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &coords[r * dim..(r + 1) * dim];
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return input(format!("point {r} coordinate {c} is not finite"));
            }
            // +0.0 normalises -0.0 so the two compare as the same key.
            let key: Vec<u64> = row.iter().map(|v| (v + 0.0).to_bits()).collect();
            match seen.get(&key) {
                Some(&idx) => {
                    mult[idx] += 1;
                    origin.push(idx);
                }
                None => {
                    let idx = mult.len();
                    seen.insert(key, idx);
                    out.extend(row.iter().map(|v| v + 0.0));
                    mult.push(1);
                    origin.push(idx);
                }
            }
        }
        Ok((
            PointSet {
                dim,
                coords: out,
                multiplicities: mult,
            },
            origin,
        ))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of distinct points.
    pub fn len(&self) -> usize {
        self.multiplicities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multiplicities.is_empty()
    }

    /// Number of points counted with multiplicity.
    pub fn total_weight(&self) -> usize {
        self.multiplicities.iter().map(|&m| m as usize).sum()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn multiplicity(&self, i: usize) -> u32 {
        self.multiplicities[i]
    }

    pub fn multiplicities(&self) -> &[u32] {
        &self.multiplicities
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// Axis-aligned bounding box as (min, max) corners.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for p in self.iter() {
            for a in 0..self.dim {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }

    /// Index and distance of the input point nearest to `p`; ties go to the
    /// lowest index.
    pub fn nearest(&self, p: &[f64], norm: &NormSpec) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, x) in self.iter().enumerate() {
            let d = norm.dist(x, p);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }
}

/// Black-box norm evaluator.
pub type NormFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum NormKind {
    L1,
    L2,
    Linf,
    /// General p in (1, inf), p != 2.
    Lp(f64),
    BlackBox {
        name: String,
        dim: usize,
        eval: NormFn,
        c_low: f64,
        c_high: f64,
    },
}

/// The norm inducing the metric.
#[derive(Clone)]
pub struct NormSpec {
    kind: NormKind,
}

impl fmt::Debug for NormSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NormSpec({})", self.tag())
    }
}

impl PartialEq for NormSpec {
    fn eq(&self, other: &Self) -> bool {
        match (&self.kind, &other.kind) {
            (NormKind::BlackBox { eval: a, .. }, NormKind::BlackBox { eval: b, .. }) => {
                Arc::ptr_eq(a, b)
            }
            _ => self.tag() == other.tag(),
        }
    }
}

impl NormSpec {
    pub fn l1() -> Self {
        NormSpec { kind: NormKind::L1 }
    }

    pub fn l2() -> Self {
        NormSpec { kind: NormKind::L2 }
    }

    pub fn linf() -> Self {
        NormSpec {
            kind: NormKind::Linf,
        }
    }

    /// The l_p norm; `p` may be `f64::INFINITY`.
    pub fn lp(p: f64) -> Result<Self> {
        if p.is_nan() || p < 1.0 {
            return parameter(format!("l_p exponent must be >= 1, got {p}"));
        }
        let kind = if p == 1.0 {
            NormKind::L1
        } else if p == 2.0 {
            NormKind::L2
        } else if p.is_infinite() {
            NormKind::Linf
        } else {
            NormKind::Lp(p)
        };
        Ok(NormSpec { kind })
    }

    /// A user-supplied norm on R^`dim` with declared constants
    /// `c_low * |x|_inf <= |x| <= c_high * |x|_inf`. The constants are checked
    /// on random samples drawn from `seed`; violations reject the norm.
    pub fn black_box(
        name: impl Into<String>,
        dim: usize,
        eval: NormFn,
        c_low: f64,
        c_high: f64,
        seed: u64,
    ) -> Result<Self> {
        let name = name.into();
        if dim == 0 {
            return parameter("black-box norm dimension must be positive");
        }
        if !(c_low > 0.0 && c_low <= c_high && c_high.is_finite()) {
            return Err(Error::Construction(format!(
                "invalid equivalence constants c_low={c_low}, c_high={c_high}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = vec![0.0; dim];
        for s in 0..20_000 {
            if s < 2 * dim {
                v.iter_mut().for_each(|c| *c = 0.0);
                v[s / 2] = if s % 2 == 0 { 1.0 } else { -1.0 };
            } else if s % 3 == 0 {
                for c in v.iter_mut() {
                    *c = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                }
            } else {
                for c in v.iter_mut() {
                    *c = rng.sample(StandardNormal);
                }
            }
            let inf = linf_norm(&v);
            let val = eval(&v);
            if !val.is_finite() || val <= 0.0 {
                return Err(Error::Construction(format!(
                    "black-box norm `{name}` returned {val} on a nonzero vector"
                )));
            }
            if c_low * inf > val * (1.0 + REL_SLACK) || val > c_high * inf * (1.0 + REL_SLACK) {
                return Err(Error::Construction(format!(
                    "black-box norm `{name}` violates declared constants: |x|={val}, |x|_inf={inf}, c_low={c_low}, c_high={c_high}"
                )));
            }
        }
        Ok(NormSpec {
            kind: NormKind::BlackBox {
                name,
                dim,
                eval,
                c_low,
                c_high,
            },
        })
    }

    pub fn kind(&self) -> &NormKind {
        &self.kind
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.kind, NormKind::L2)
    }

    pub fn is_black_box(&self) -> bool {
        matches!(self.kind, NormKind::BlackBox { .. })
    }

    /// The l_p exponent, or `None` for black-box norms.
    pub fn exponent(&self) -> Option<f64> {
        match self.kind {
            NormKind::L1 => Some(1.0),
            NormKind::L2 => Some(2.0),
            NormKind::Linf => Some(f64::INFINITY),
            NormKind::Lp(p) => Some(p),
            NormKind::BlackBox { .. } => None,
        }
    }

    /// Equivalence constants (c_low, c_high) against l_inf in dimension `dim`.
    pub fn equivalence(&self, dim: usize) -> (f64, f64) {
        match &self.kind {
            NormKind::BlackBox { c_low, c_high, .. } => (*c_low, *c_high),
            _ => {
                let p = self.exponent().unwrap();
                (1.0, (dim as f64).powf(1.0 / p))
            }
        }
    }

    /// Checks that this norm can act on `dim`-dimensional vectors.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if let NormKind::BlackBox { dim: d, name, .. } = &self.kind {
            if *d != dim {
                return input(format!(
                    "black-box norm `{name}` is declared for dimension {d}, data has {dim}"
                ));
            }
        }
        Ok(())
    }

    /// Canonical tag: `l1`, `l2`, `linf`, `lp:<p>` or `blackbox:<name>`.
    pub fn tag(&self) -> String {
        match &self.kind {
            NormKind::L1 => "l1".into(),
            NormKind::L2 => "l2".into(),
            NormKind::Linf => "linf".into(),
            NormKind::Lp(p) => format!("lp:{p}"),
            NormKind::BlackBox { name, .. } => format!("blackbox:{name}"),
        }
    }

    #[inline]
    pub fn norm(&self, v: &[f64]) -> f64 {
        match &self.kind {
            NormKind::L1 => v.iter().map(|x| x.abs()).sum(),
            NormKind::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormKind::Linf => linf_norm(v),
            NormKind::Lp(p) => v.iter().map(|x| x.abs().powf(*p)).sum::<f64>().powf(1.0 / p),
            NormKind::BlackBox { eval, .. } => {
                if v.iter().all(|&x| x == 0.0) {
                    0.0
                } else {
                    eval(v)
                }
            }
        }
    }

    /// Distance without dimension checking.
    #[inline]
    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match &self.kind {
            NormKind::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            NormKind::L2 => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            NormKind::Linf => a
                .iter()
                .zip(b)
                .fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs())),
            NormKind::Lp(p) => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs().powf(*p))
                .sum::<f64>()
                .powf(1.0 / p),
            NormKind::BlackBox { .. } => {
                let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                self.norm(&diff)
            }
        }
    }

    /// Lower bound on the distance between two axis-aligned boxes; exact for
    /// l_p norms.
    pub fn box_distance_lower(&self, lo_a: &[f64], hi_a: &[f64], lo_b: &[f64], hi_b: &[f64]) -> f64 {
        let gap: Vec<f64> = (0..lo_a.len())
            .map(|k| (lo_b[k] - hi_a[k]).max(lo_a[k] - hi_b[k]).max(0.0))
            .collect();
        match &self.kind {
            NormKind::BlackBox { c_low, .. } => c_low * linf_norm(&gap),
            _ => self.norm(&gap),
        }
    }

    /// Upper bound on the diameter of an axis-aligned box; exact for l_p norms.
    pub fn box_diameter_upper(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let side: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| h - l).collect();
        match &self.kind {
            NormKind::BlackBox { c_high, .. } => c_high * linf_norm(&side),
            _ => self.norm(&side),
        }
    }
}

impl FromStr for NormSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l1" => Ok(NormSpec::l1()),
            "l2" => Ok(NormSpec::l2()),
            "linf" => Ok(NormSpec::linf()),
            other => match other.strip_prefix("lp:") {
                Some(p) => {
                    let p: f64 = if p == "inf" {
                        f64::INFINITY
                    } else {
                        p.parse()
                            .map_err(|_| Error::Parameter(format!("bad l_p exponent `{p}`")))?
                    };
                    NormSpec::lp(p)
                }
                None => parameter(format!(
                    "unknown norm `{s}` (expected l1, l2, linf or lp:<p>)"
                )),
            },
        }
    }
}

#[inline]
fn linf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| f64::max(m, x.abs()))
}

/// A closed ball B(center, radius).
#[derive(Clone, Debug, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return parameter(format!("ball radius must be nonnegative, got {radius}"));
        }
        Ok(Ball { center, radius })
    }

    pub fn contains(&self, p: &[f64], norm: &NormSpec) -> bool {
        norm.dist(&self.center, p) <= self.radius
    }
}

fn check_same_dim(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return input(format!("dimension mismatch: {} vs {}", a.len(), b.len()));
    }
    Ok(())
}

/// Distance between two points under `norm`.
pub fn distance(a: &[f64], b: &[f64], norm: &NormSpec) -> Result<f64> {
    check_same_dim(a, b)?;
    Ok(norm.dist(a, b))
}

/// Maximum pairwise distance within `points`.
pub fn set_diameter(points: &[&[f64]], norm: &NormSpec) -> Result<f64> {
    if points.is_empty() {
        return input("diameter of an empty set");
    }
    let mut best: f64 = 0.0;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            check_same_dim(a, b)?;
            best = best.max(norm.dist(a, b));
        }
    }
    Ok(best)
}

/// Minimum distance between a point of `a` and a point of `b`.
pub fn set_distance(a: &[&[f64]], b: &[&[f64]], norm: &NormSpec) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return input("distance involving an empty set");
    }
    let mut best = f64::INFINITY;
    for x in a {
        for y in b {
            check_same_dim(x, y)?;
            best = best.min(norm.dist(x, y));
        }
    }
    Ok(best)
}

/// `num / den` with 0/0 = 1 and positive/0 = +inf.
#[inline]
pub fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

/// The smallest alpha with dist(x, q) <= alpha * dist(x, p) for all x in `xs`.
pub fn approximation_factor(p: &[f64], q: &[f64], xs: &PointSet, norm: &NormSpec) -> Result<f64> {
    check_same_dim(p, q)?;
    if p.len() != xs.dim() {
        return input(format!(
            "dimension mismatch: point has {}, set has {}",
            p.len(),
            xs.dim()
        ));
    }
    Ok(xs
        .iter()
        .map(|x| ratio(norm.dist(x, q), norm.dist(x, p)))
        .fold(0.0, f64::max))
}
