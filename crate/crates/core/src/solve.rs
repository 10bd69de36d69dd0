//! Discrete center-based solvers over a candidate set, plus two continuous
//! oracles (smallest enclosing ball, grid brute force) used to certify the
//! approximation ratio a collection buys.
//!
//! Points with multiplicity are expanded into unit points, in point order,
//! before solving. Per-point cost tables and assignments refer to these
//! unit points.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::collection::CentersCollection;
use crate::error::{input, parameter, Error, Result};
use crate::exec::Exec;
use crate::metric::{NormSpec, PointSet};

/// Maximum number of center tuples a discrete solve may enumerate.
pub const TUPLE_BUDGET: u128 = 1_000_000_000;
/// Maximum number of cached candidate-to-point costs.
pub const COST_TABLE_LIMIT: u128 = 400_000_000;
/// Maximum grid nodes per center for the grid oracle.
pub const GRID_NODE_LIMIT: u128 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    KCenter,
    KMedian,
    KMeans,
    MVariance,
    Problem1,
    Problem2,
}

impl ObjectiveKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "kcenter" | "k-center" => ObjectiveKind::KCenter,
            "kmedian" | "k-median" => ObjectiveKind::KMedian,
            "kmeans" | "k-means" => ObjectiveKind::KMeans,
            "mvariance" | "m-variance" => ObjectiveKind::MVariance,
            "p1" | "problem1" => ObjectiveKind::Problem1,
            "p2" | "problem2" => ObjectiveKind::Problem2,
            _ => return parameter(format!("unknown problem `{s}`")),
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectiveKind::KCenter => "k-center",
            ObjectiveKind::KMedian => "k-median",
            ObjectiveKind::KMeans => "k-means",
            ObjectiveKind::MVariance => "m-variance",
            ObjectiveKind::Problem1 => "problem1",
            ObjectiveKind::Problem2 => "problem2",
        }
    }

    /// Symmetric objectives do not distinguish centers by slot.
    pub fn is_symmetric(self) -> bool {
        !matches!(self, ObjectiveKind::Problem1 | ObjectiveKind::Problem2)
    }
}

/// Per-unit-point, per-slot unit costs `f` and exponents `g`, row-major
/// (`unit * k + slot`).
#[derive(Clone, Debug, PartialEq)]
pub struct CostTable {
    pub k: usize,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

impl CostTable {
    pub fn uniform(units: usize, k: usize, f: f64, g: f64) -> Self {
        CostTable {
            k,
            f: vec![f; units * k],
            g: vec![g; units * k],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    pub k: usize,
    /// Number of points served (m-variance, problem 1); defaults to all.
    pub m: Option<usize>,
    pub costs: Option<CostTable>,
    /// Cardinalities m_1..m_k (problem 2).
    pub cards: Vec<usize>,
}

impl ObjectiveSpec {
    pub fn new(kind: ObjectiveKind, k: usize) -> Self {
        ObjectiveSpec {
            kind,
            k,
            m: None,
            costs: None,
            cards: Vec::new(),
        }
    }

    pub fn with_m(mut self, m: usize) -> Self {
        self.m = Some(m);
        self
    }

    pub fn with_costs(mut self, costs: CostTable) -> Self {
        self.costs = Some(costs);
        self
    }

    pub fn with_cards(mut self, cards: Vec<usize>) -> Self {
        self.cards = cards;
        self
    }

    /// Modulus exponent g with mu(1+eps) = (1+eps)^g.
    pub fn modulus_exponent(&self) -> f64 {
        match self.kind {
            ObjectiveKind::KCenter | ObjectiveKind::KMedian => 1.0,
            ObjectiveKind::KMeans | ObjectiveKind::MVariance => 2.0,
            ObjectiveKind::Problem1 | ObjectiveKind::Problem2 => self
                .costs
                .as_ref()
                .map(|c| c.g.iter().copied().fold(0.0, f64::max))
                .unwrap_or(0.0),
        }
    }

    fn validate(&self, units: usize) -> Result<()> {
        if self.k == 0 {
            return parameter("k must be positive");
        }
        if let Some(m) = self.m {
            if m == 0 || m > units {
                return input(format!("m = {m} must lie in 1..={units}"));
            }
        }
        match self.kind {
            ObjectiveKind::Problem1 | ObjectiveKind::Problem2 => {
                let c = self
                    .costs
                    .as_ref()
                    .ok_or_else(|| Error::Input(format!("{} needs a cost table", self.kind.as_str())))?;
                if c.k != self.k || c.f.len() != units * self.k || c.g.len() != units * self.k {
                    return input(format!(
                        "cost table must have {units} rows of {} costs and exponents",
                        self.k
                    ));
                }
                if c.f.iter().chain(&c.g).any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return input("costs and exponents must be finite and nonnegative");
                }
            }
            _ => {}
        }
        if self.kind == ObjectiveKind::Problem2 {
            if self.cards.len() != self.k {
                return input(format!("need {} cardinalities, got {}", self.k, self.cards.len()));
            }
            let total: usize = self.cards.iter().sum();
            if total > units {
                return input(format!("cardinalities sum to {total} > n = {units}"));
            }
        }
        Ok(())
    }

    fn served(&self, units: usize) -> usize {
        match self.kind {
            ObjectiveKind::Problem2 => self.cards.iter().sum(),
            _ => self.m.unwrap_or(units),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveResult {
    pub objective: ObjectiveKind,
    pub k: usize,
    pub value: f64,
    pub center_indices: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    /// Slot serving each unit point, or `None` for points left out.
    pub assignment: Vec<Option<usize>>,
    /// (1+eps)^g when the candidates form a (1+eps)-collection.
    pub guaranteed_ratio: Option<f64>,
    pub tuples: u128,
    #[serde(skip)]
    pub solve_ms: f64,
}

/// Unit points: each point repeated by its multiplicity.
pub fn expand_units(xs: &PointSet) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.total_weight() * xs.dim());
    for i in 0..xs.len() {
        for _ in 0..xs.multiplicity(i) {
            out.extend_from_slice(xs.point(i));
        }
    }
    out
}

/// Cost of serving unit `j` from slot `i` at distance `d`.
#[inline]
fn unit_cost(spec: &ObjectiveSpec, j: usize, slot: usize, d: f64) -> f64 {
    match spec.kind {
        ObjectiveKind::KCenter | ObjectiveKind::KMedian => d,
        ObjectiveKind::KMeans | ObjectiveKind::MVariance => d * d,
        ObjectiveKind::Problem1 | ObjectiveKind::Problem2 => {
            let c = spec.costs.as_ref().expect("validated");
            let idx = j * c.k + slot;
            let g = c.g[idx];
            // 0^0 = 1: a zero exponent charges f regardless of distance
            c.f[idx] * if g == 0.0 { 1.0 } else { d.powf(g) }
        }
    }
}

/// Aggregates per-point costs: max for k-center, the m smallest for
/// m-variance and problem 1, the plain sum otherwise.
fn aggregate(kind: ObjectiveKind, costs: &[f64], m: usize, scratch: &mut Vec<f64>) -> f64 {
    match kind {
        ObjectiveKind::KCenter => costs.iter().copied().fold(0.0, f64::max),
        ObjectiveKind::MVariance | ObjectiveKind::Problem1 if m < costs.len() => {
            scratch.clear();
            scratch.extend_from_slice(costs);
            scratch.sort_by(f64::total_cmp);
            scratch[..m].iter().sum()
        }
        _ => costs.iter().sum(),
    }
}

fn tuple_count(n_cand: usize, k: usize, symmetric: bool) -> u128 {
    let n = n_cand as u128;
    if symmetric {
        if k as u128 > n {
            return 0;
        }
        let mut c: u128 = 1;
        for i in 0..k as u128 {
            c = c.saturating_mul(n - i) / (i + 1);
        }
        c
    } else {
        (0..k).fold(1u128, |acc, _| acc.saturating_mul(n))
    }
}

/// Solves `spec` exactly over a flat candidate list. Symmetric objectives
/// enumerate k-subsets; problems 1 and 2 enumerate ordered k-tuples with
/// repetition. Ties keep the lexicographically first tuple.
pub fn solve_over(
    xs: &PointSet,
    candidates: &[f64],
    norm: &NormSpec,
    spec: &ObjectiveSpec,
    exec: Exec,
) -> Result<SolveResult> {
    let start = Instant::now();
    let d = xs.dim();
    norm.check_dim(d)?;
    if candidates.is_empty() || !candidates.len().is_multiple_of(d) {
        return input("candidate list is empty or ragged");
    }
    let units = expand_units(xs);
    let nu = units.len() / d;
    spec.validate(nu)?;
    let nc = candidates.len() / d;
    let k = spec.k;
    let symmetric = spec.kind.is_symmetric();
    let tuples = tuple_count(nc, k, symmetric);
    if tuples == 0 {
        return input(format!("k = {k} exceeds the {nc} available candidates"));
    }
    if tuples > TUPLE_BUDGET {
        return Err(Error::Budget {
            required: tuples,
            limit: TUPLE_BUDGET,
        });
    }
    let slots = if symmetric { 1 } else { k };
    let table = nc as u128 * nu as u128 * slots as u128;
    if table > COST_TABLE_LIMIT {
        return Err(Error::Budget {
            required: table,
            limit: COST_TABLE_LIMIT,
        });
    }

    // cost[(slot * nc + c) * nu + j]
    let mut cost = vec![0.0; nc * nu * slots];
    let row = nu;
    exec.for_each_chunk_mut(&mut cost, row, |off, chunk| {
        let r = off / row;
        let (slot, c) = (r / nc, r % nc);
        let q = &candidates[c * d..(c + 1) * d];
        for (j, v) in chunk.iter_mut().enumerate() {
            *v = unit_cost(spec, j, slot, norm.dist(&units[j * d..(j + 1) * d], q));
        }
    });
    let served = spec.served(nu);

    let best_per_root: Vec<Option<(f64, Vec<usize>)>> = exec.map(nc, |c0| {
        let mut search = Search {
            spec,
            cost: &cost,
            nc,
            nu,
            served,
            symmetric,
            tuple: vec![c0],
            partial: vec![vec![0.0; nu]; k],
            scratch: Vec::new(),
            best: None,
        };
        search.partial[0].copy_from_slice(&cost[c0 * nu..(c0 + 1) * nu]);
        if symmetric && c0 + k > nc {
            return None;
        }
        search.descend(1);
        search.best
    });
    let mut best: Option<(f64, Vec<usize>)> = None;
    for b in best_per_root.into_iter().flatten() {
        if best.as_ref().is_none_or(|cur| b.0 < cur.0) {
            best = Some(b);
        }
    }
    let (_, tuple) = best.ok_or_else(|| Error::Input("no feasible center tuple".into()))?;
    let (value, assignment) = assign(spec, &cost, nc, nu, served, &tuple);
    Ok(SolveResult {
        objective: spec.kind,
        k,
        value,
        centers: tuple.iter().map(|&c| candidates[c * d..(c + 1) * d].to_vec()).collect(),
        center_indices: tuple,
        assignment,
        guaranteed_ratio: None,
        tuples,
        solve_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

struct Search<'a> {
    spec: &'a ObjectiveSpec,
    cost: &'a [f64],
    nc: usize,
    nu: usize,
    served: usize,
    symmetric: bool,
    tuple: Vec<usize>,
    partial: Vec<Vec<f64>>,
    scratch: Vec<f64>,
    best: Option<(f64, Vec<usize>)>,
}

impl Search<'_> {
    fn descend(&mut self, level: usize) {
        let k = self.spec.k;
        if level == k {
            let v = if self.spec.kind == ObjectiveKind::Problem2 {
                transport(self.spec, self.cost, self.nc, self.nu, &self.tuple).0
            } else {
                aggregate(self.spec.kind, &self.partial[k - 1], self.served, &mut self.scratch)
            };
            if self.best.as_ref().is_none_or(|b| v < b.0) {
                self.best = Some((v, self.tuple.clone()));
            }
            return;
        }
        let first = if self.symmetric { self.tuple[level - 1] + 1 } else { 0 };
        let last = if self.symmetric { self.nc - (k - level - 1) } else { self.nc };
        for c in first..last {
            self.tuple.push(c);
            if self.spec.kind != ObjectiveKind::Problem2 {
                let (done, rest) = self.partial.split_at_mut(level);
                let prev = &done[level - 1];
                let slot = if self.symmetric { 0 } else { level };
                let r = slot * self.nc + c;
                let row = &self.cost[r * self.nu..(r + 1) * self.nu];
                for ((out, p), v) in rest[0].iter_mut().zip(prev).zip(row) {
                    *out = p.min(*v);
                }
            }
            self.descend(level + 1);
            self.tuple.pop();
        }
    }
}

/// Value and assignment for a fixed tuple.
fn assign(
    spec: &ObjectiveSpec,
    cost: &[f64],
    nc: usize,
    nu: usize,
    served: usize,
    tuple: &[usize],
) -> (f64, Vec<Option<usize>>) {
    if spec.kind == ObjectiveKind::Problem2 {
        return transport(spec, cost, nc, nu, tuple);
    }
    let symmetric = spec.kind.is_symmetric();
    let at = |slot: usize, j: usize| {
        let s = if symmetric { 0 } else { slot };
        cost[(s * nc + tuple[slot]) * nu + j]
    };
    let mut per = vec![0.0; nu];
    let mut who = vec![0usize; nu];
    for j in 0..nu {
        let mut best = (f64::INFINITY, 0);
        for slot in 0..tuple.len() {
            let v = at(slot, j);
            if v < best.0 {
                best = (v, slot);
            }
        }
        per[j] = best.0;
        who[j] = best.1;
    }
    let value = aggregate(spec.kind, &per, served, &mut Vec::new());
    let mut assignment: Vec<Option<usize>> = who.iter().map(|&s| Some(s)).collect();
    if matches!(spec.kind, ObjectiveKind::MVariance | ObjectiveKind::Problem1) && served < nu {
        let mut order: Vec<usize> = (0..nu).collect();
        order.sort_by(|&a, &b| per[a].total_cmp(&per[b]).then(a.cmp(&b)));
        for &j in &order[served..] {
            assignment[j] = None;
        }
    }
    (value, assignment)
}

/// Exact transportation for problem 2: exactly `cards[i]` unit points go to
/// slot `i`, the rest stay unassigned at no cost. Solved as a min-cost flow
/// by successive shortest paths (Bellman-Ford on the residual graph).
fn transport(spec: &ObjectiveSpec, cost: &[f64], nc: usize, nu: usize, tuple: &[usize]) -> (f64, Vec<Option<usize>>) {
    let k = tuple.len();
    let c = |slot: usize, j: usize| cost[(slot * nc + tuple[slot]) * nu + j];
    let mut costs = vec![0.0; nu * k];
    for j in 0..nu {
        for s in 0..k {
            costs[j * k + s] = c(s, j);
        }
    }
    min_cost_assignment(&costs, nu, &spec.cards)
}

/// Min-cost assignment of rows to columns with column capacities `cards`
/// that must be filled exactly; every row takes at most one column.
pub fn min_cost_assignment(costs: &[f64], rows: usize, cards: &[usize]) -> (f64, Vec<Option<usize>>) {
    let k = cards.len();
    // nodes: 0 source, 1..=rows, rows+1..=rows+k, sink
    let sink = rows + k + 1;
    let nodes = sink + 1;
    let mut g = FlowGraph::new(nodes);
    for j in 0..rows {
        g.add_edge(0, 1 + j, 1, 0.0);
        for s in 0..k {
            g.add_edge(1 + j, 1 + rows + s, 1, costs[j * k + s]);
        }
    }
    for (s, &m) in cards.iter().enumerate() {
        g.add_edge(1 + rows + s, sink, m as i64, 0.0);
    }
    let need: usize = cards.iter().sum();
    let mut flow = 0;
    while flow < need {
        let Some(path) = g.shortest_path(0, sink) else {
            break;
        };
        for &e in &path {
            g.edges[e].cap -= 1;
            g.edges[e ^ 1].cap += 1;
        }
        flow += 1;
    }
    let mut assignment = vec![None; rows];
    let mut value = 0.0;
    for j in 0..rows {
        for s in 0..k {
            let e = g.row_edges[j * k + s];
            if g.edges[e].cap == 0 {
                assignment[j] = Some(s);
            }
        }
    }
    for j in 0..rows {
        if let Some(s) = assignment[j] {
            value += costs[j * k + s];
        }
    }
    (value, assignment)
}

#[derive(Clone, Debug)]
struct FlowEdge {
    to: usize,
    cap: i64,
    cost: f64,
}

struct FlowGraph {
    edges: Vec<FlowEdge>,
    adj: Vec<Vec<usize>>,
    row_edges: Vec<usize>,
}

impl FlowGraph {
    fn new(n: usize) -> Self {
        FlowGraph {
            edges: Vec::new(),
            adj: vec![Vec::new(); n],
            row_edges: Vec::new(),
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: i64, cost: f64) {
        if from != 0 && cap == 1 && to != self.adj.len() - 1 {
            self.row_edges.push(self.edges.len());
        }
        self.adj[from].push(self.edges.len());
        self.edges.push(FlowEdge { to, cap, cost });
        self.adj[to].push(self.edges.len());
        self.edges.push(FlowEdge {
            to: from,
            cap: 0,
            cost: -cost,
        });
    }

    fn shortest_path(&self, s: usize, t: usize) -> Option<Vec<usize>> {
        let n = self.adj.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut via = vec![usize::MAX; n];
        dist[s] = 0.0;
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                if dist[u] == f64::INFINITY {
                    continue;
                }
                for &e in &self.adj[u] {
                    let edge = &self.edges[e];
                    let cand = dist[u] + edge.cost;
                    // strict improvement only: rounding on zero-cost residual
                    // cycles must not register as a negative cycle
                    if edge.cap > 0 && cand < dist[edge.to] - 1e-12 * (1.0 + cand.abs()) {
                        dist[edge.to] = cand;
                        via[edge.to] = e;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if dist[t] == f64::INFINITY {
            return None;
        }
        let mut path = Vec::new();
        let mut v = t;
        while v != s {
            assert!(path.len() < n, "cyclic predecessor chain in residual graph");
            let e = via[v];
            path.push(e);
            v = self.edges[e ^ 1].to;
        }
        Some(path)
    }
}

fn with_ratio(mut r: SolveResult, collection: &CentersCollection, spec: &ObjectiveSpec) -> SolveResult {
    r.guaranteed_ratio = Some((1.0 + collection.epsilon()).powf(spec.modulus_exponent()));
    r
}

/// Exact discrete optimum over every candidate of `collection`.
pub fn solve_discrete(collection: &CentersCollection, spec: &ObjectiveSpec, exec: Exec) -> Result<SolveResult> {
    let nc = collection.len();
    let tuples = tuple_count(nc, spec.k, spec.kind.is_symmetric());
    if tuples > TUPLE_BUDGET {
        return Err(Error::Budget {
            required: tuples,
            limit: TUPLE_BUDGET,
        });
    }
    let flat = collection.materialize(exec);
    let r = solve_over(collection.inputs(), &flat, collection.norm(), spec, exec)?;
    Ok(with_ratio(r, collection, spec))
}

pub fn solve_problem1(collection: &CentersCollection, spec: &ObjectiveSpec, exec: Exec) -> Result<SolveResult> {
    if spec.kind != ObjectiveKind::Problem1 {
        return parameter("solve_problem1 needs a problem1 objective");
    }
    solve_discrete(collection, spec, exec)
}

pub fn solve_problem2(collection: &CentersCollection, spec: &ObjectiveSpec, exec: Exec) -> Result<SolveResult> {
    if spec.kind != ObjectiveKind::Problem2 {
        return parameter("solve_problem2 needs a problem2 objective");
    }
    solve_discrete(collection, spec, exec)
}

/// Recomputes an objective from centers and an assignment.
pub fn evaluate_objective(
    xs: &PointSet,
    centers: &[Vec<f64>],
    assignment: &[Option<usize>],
    norm: &NormSpec,
    spec: &ObjectiveSpec,
) -> Result<f64> {
    let d = xs.dim();
    let units = expand_units(xs);
    let nu = units.len() / d;
    if assignment.len() != nu {
        return input("assignment length differs from the number of unit points");
    }
    let mut per = Vec::new();
    for (j, a) in assignment.iter().enumerate() {
        if let Some(s) = a {
            let slot = *s;
            let c = centers.get(slot).ok_or_else(|| Error::Input(format!("slot {slot} out of range")))?;
            per.push(unit_cost(spec, j, slot, norm.dist(&units[j * d..(j + 1) * d], c)));
        }
    }
    Ok(match spec.kind {
        ObjectiveKind::KCenter => per.iter().copied().fold(0.0, f64::max),
        ObjectiveKind::MVariance | ObjectiveKind::Problem1 => {
            per.sort_by(f64::total_cmp);
            per.iter().sum()
        }
        _ => per.iter().sum(),
    })
}

/// Smallest enclosing Euclidean ball (move-to-front Welzl, seeded shuffle).
pub fn exact_one_center(xs: &PointSet, norm: &NormSpec, seed: u64) -> Result<(Vec<f64>, f64)> {
    if !norm.is_euclidean() {
        return Err(Error::Unsupported("exact one-center needs the Euclidean norm".into()));
    }
    let d = xs.dim();
    let pts: Vec<&[f64]> = xs.iter().collect();
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut support = Vec::with_capacity(d + 1);
    let ball = mtf(&pts, &mut order, pts.len(), &mut support, d);
    let r = pts.iter().map(|p| norm.dist(p, &ball.0)).fold(0.0, f64::max);
    Ok((ball.0, r))
}

fn mtf(pts: &[&[f64]], order: &mut Vec<usize>, end: usize, support: &mut Vec<usize>, d: usize) -> (Vec<f64>, f64) {
    let mut ball = circumball(pts, support, d);
    for i in 0..end {
        let p = order[i];
        if inside(&ball, pts[p]) || support.len() > d {
            continue;
        }
        support.push(p);
        ball = mtf(pts, order, i, support, d);
        support.pop();
        order.remove(i);
        order.insert(0, p);
    }
    ball
}

fn inside(ball: &(Vec<f64>, f64), p: &[f64]) -> bool {
    let d2: f64 = ball.0.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
    d2.sqrt() <= ball.1 * (1.0 + 1e-12) + 1e-300
}

/// Smallest ball with all of `support` on its boundary.
fn circumball(pts: &[&[f64]], support: &[usize], d: usize) -> (Vec<f64>, f64) {
    match support.len() {
        0 => (vec![0.0; d], -1.0),
        1 => (pts[support[0]].to_vec(), 0.0),
        m => {
            let q0 = pts[support[0]];
            let v: Vec<Vec<f64>> = support[1..]
                .iter()
                .map(|&s| pts[s].iter().zip(q0).map(|(a, b)| a - b).collect())
                .collect();
            let r = m - 1;
            let mut a = vec![vec![0.0; r + 1]; r];
            for i in 0..r {
                for j in 0..r {
                    a[i][j] = 2.0 * dot(&v[i], &v[j]);
                }
                a[i][r] = dot(&v[i], &v[i]);
            }
            match gauss_solve(a) {
                Some(lam) => {
                    let mut c = q0.to_vec();
                    for (l, vi) in lam.iter().zip(&v) {
                        for x in 0..d {
                            c[x] += l * vi[x];
                        }
                    }
                    let rad = support
                        .iter()
                        .map(|&s| dot_dist(&c, pts[s]))
                        .fold(0.0, f64::max);
                    (c, rad)
                }
                // degenerate support: drop the newest point
                None => circumball(pts, &support[..m - 1], d),
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dot_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Solves an augmented r x (r+1) system by partial pivoting.
fn gauss_solve(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let r = a.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    for col in 0..r {
        let piv = (col..r).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-14 * scale {
            return None;
        }
        a.swap(col, piv);
        for row in 0..r {
            if row != col {
                let f = a[row][col] / a[col][col];
                for x in col..=r {
                    a[row][x] -= f * a[col][x];
                }
            }
        }
    }
    Some((0..r).map(|i| a[i][r] / a[i][i]).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridOracleResult {
    pub value: f64,
    pub slack: f64,
    pub centers: Vec<Vec<f64>>,
    pub nodes_per_axis: usize,
    pub nodes: usize,
}

/// Brute force over centers on the cell-center grid of the 1.5x-inflated
/// bounding box, `ceil(1/resolution)` cells per axis (minus one if even). `value` is an upper
/// bound on the continuous optimum; `value - slack` is a lower bound.
///
/// Two centers are handled by splitting the unit points into the sets each
/// center serves (and, with outliers, the dropped set): for every subset the
/// best single grid node is found once, then all splits are combined.
pub fn grid_brute_oracle(
    xs: &PointSet,
    norm: &NormSpec,
    spec: &ObjectiveSpec,
    resolution: f64,
    exec: Exec,
) -> Result<GridOracleResult> {
    let d = xs.dim();
    if d > 2 {
        return Err(Error::Unsupported("grid oracle supports d <= 2".into()));
    }
    if spec.k > 2 {
        return Err(Error::Unsupported("grid oracle supports k <= 2".into()));
    }
    if !(resolution > 0.0 && resolution < 1.0) {
        return parameter("resolution must lie in (0, 1)");
    }
    let units = expand_units(xs);
    let nu = units.len() / d;
    spec.validate(nu)?;
    if spec.kind == ObjectiveKind::Problem2 {
        return Err(Error::Unsupported("grid oracle does not solve problem 2".into()));
    }
    // odd so that the box center is a node
    let mut per_axis = (1.0 / resolution).ceil() as usize;
    if per_axis.is_multiple_of(2) {
        per_axis -= 1;
    }
    let nodes = (per_axis as u128).pow(d as u32);
    if nodes > GRID_NODE_LIMIT {
        return Err(Error::Budget {
            required: nodes,
            limit: GRID_NODE_LIMIT,
        });
    }
    let nodes = nodes as usize;
    let (lo, hi) = xs.bounding_box();
    let mut side: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 1.5 * (b - a)).collect();
    let fallback = side.iter().copied().fold(0.0, f64::max);
    for s in &mut side {
        if *s <= 0.0 {
            *s = if fallback > 0.0 { fallback } else { 1.0 };
        }
    }
    let origin: Vec<f64> = (0..d).map(|a| 0.5 * (lo[a] + hi[a]) - 0.5 * side[a]).collect();
    let cell: Vec<f64> = side.iter().map(|s| s / per_axis as f64).collect();
    let node = |idx: usize, out: &mut [f64]| {
        let mut rest = idx;
        for a in 0..d {
            out[a] = origin[a] + cell[a] * ((rest % per_axis) as f64 + 0.5);
            rest /= per_axis;
        }
    };

    let k = spec.k;
    let served = spec.served(nu);
    let slots = if spec.kind.is_symmetric() { 1 } else { k };
    let whole_set = k == 1 && served == nu;
    if !whole_set && nu > 20 {
        return Err(Error::Budget {
            required: 1u128 << nu,
            limit: 1 << 20,
        });
    }
    let subsets = if whole_set { 1 } else { 1usize << nu };
    let combine_max = spec.kind == ObjectiveKind::KCenter;

    // best[slot][S] = (value, node) minimized over nodes
    const CHUNK: usize = 4096;
    let chunks = nodes.div_ceil(CHUNK);
    let partial: Vec<Vec<(f64, usize)>> = exec.map(chunks, |ch| {
        let mut best = vec![(f64::INFINITY, usize::MAX); slots * subsets];
        let mut p = vec![0.0; d];
        let mut per = vec![0.0; nu];
        let mut acc = vec![0.0f64; subsets];
        for idx in ch * CHUNK..((ch + 1) * CHUNK).min(nodes) {
            node(idx, &mut p);
            for slot in 0..slots {
                for (j, c) in per.iter_mut().enumerate() {
                    *c = unit_cost(spec, j, slot, norm.dist(&units[j * d..(j + 1) * d], &p));
                }
                let b = &mut best[slot * subsets..(slot + 1) * subsets];
                if whole_set {
                    let v = if combine_max {
                        per.iter().copied().fold(0.0, f64::max)
                    } else {
                        per.iter().sum()
                    };
                    if v < b[0].0 {
                        b[0] = (v, idx);
                    }
                    continue;
                }
                acc[0] = 0.0;
                for s in 1..subsets {
                    let low = s.trailing_zeros() as usize;
                    let prev = acc[s & (s - 1)];
                    acc[s] = if combine_max { prev.max(per[low]) } else { prev + per[low] };
                    if acc[s] < b[s].0 {
                        b[s] = (acc[s], idx);
                    }
                }
            }
        }
        best
    });
    let mut best = vec![(f64::INFINITY, usize::MAX); slots * subsets];
    for part in partial {
        for (b, p) in best.iter_mut().zip(part) {
            if p.0 < b.0 || (p.0 == b.0 && p.1 < b.1) {
                *b = p;
            }
        }
    }
    let at = |slot: usize, s: usize| best[if slots == 1 { s } else { slot * subsets + s }];

    let full = subsets - 1;
    let (value, chosen) = if whole_set {
        (best[0].0, vec![best[0].1])
    } else if k == 1 {
        let mut out = (f64::INFINITY, vec![usize::MAX]);
        for s in 1..subsets {
            if s.count_ones() as usize == served && at(0, s).0 < out.0 {
                out = (at(0, s).0, vec![at(0, s).1]);
            }
        }
        out
    } else {
        // enumerate labelings: served by slot 0, slot 1, or dropped
        let mut out = (f64::INFINITY, vec![usize::MAX, usize::MAX]);
        for s1 in 0..subsets {
            let rest = full & !s1;
            let mut s2 = rest;
            loop {
                if (s1 | s2).count_ones() as usize == served && s1 != 0 && s2 != 0 {
                    let (a, b) = (at(0, s1), at(1, s2));
                    let v = if combine_max { a.0.max(b.0) } else { a.0 + b.0 };
                    if v < out.0 {
                        out = (v, vec![a.1, b.1]);
                    }
                }
                if s2 == 0 {
                    break;
                }
                s2 = (s2 - 1) & rest;
            }
        }
        out
    };
    if !value.is_finite() {
        return input("grid oracle found no feasible configuration");
    }

    let half: Vec<f64> = cell.iter().map(|c| 0.5 * c).collect();
    let hd = norm.norm(&half);
    let box_diam = norm.norm(&side);
    let mut slack = 0.0;
    if combine_max {
        slack = hd;
    } else {
        for j in 0..nu {
            let mut worst = 0.0f64;
            for slot in 0..slots {
                let (f, g) = match (&spec.kind, &spec.costs) {
                    (ObjectiveKind::KMedian, _) => (1.0, 1.0),
                    (ObjectiveKind::KMeans | ObjectiveKind::MVariance, _) => (1.0, 2.0),
                    (_, Some(c)) => (c.f[j * c.k + slot], c.g[j * c.k + slot]),
                    _ => (1.0, 1.0),
                };
                let s = if g == 0.0 {
                    0.0
                } else if g >= 1.0 {
                    f * g * (box_diam + hd).powf(g - 1.0) * hd
                } else {
                    f * hd.powf(g)
                };
                worst = worst.max(s);
            }
            slack += worst;
        }
    }
    let mut centers = Vec::new();
    for idx in chosen {
        let mut p = vec![0.0; d];
        node(idx, &mut p);
        centers.push(p);
    }
    Ok(GridOracleResult {
        value,
        slack,
        centers,
        nodes_per_axis: per_axis,
        nodes,
    })
}
