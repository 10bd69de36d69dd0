//! Fair split tree and well-separated pair decomposition.
//!
//! The tree splits the longest side of each tight bounding box at its
//! midpoint until every leaf holds one point. Pair extraction follows the
//! usual recursion: emit `(v, w)` once the boxes are separated, otherwise
//! split whichever node has the larger box diameter. The separation test uses
//! a lower bound on the distance between the boxes and upper bounds on their
//! diameters, so property (d) holds for the point sets themselves.

use serde::Serialize;

use crate::metric::{NormSpec, PointSet};

pub type NodeId = u32;

#[derive(Clone, Debug)]
pub struct SplitNode {
    /// Range of `SplitTree::order` holding this node's points.
    pub start: u32,
    pub end: u32,
    pub children: Option<(NodeId, NodeId)>,
    /// Lowest point index in the subtree.
    pub rep: u32,
    pub split_axis: Option<usize>,
    pub split_value: f64,
}

impl SplitNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    pub fn size(&self) -> usize {
        (self.end - self.start) as usize
    }
}

#[derive(Clone, Debug)]
pub struct SplitTree {
    dim: usize,
    order: Vec<u32>,
    nodes: Vec<SplitNode>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl SplitTree {
    /// Builds the fair split tree of `points` (node 0 is the root).
    pub fn build(points: &PointSet) -> SplitTree {
        let d = points.dim();
        let n = points.len();
        let mut tree = SplitTree {
            dim: d,
            order: (0..n as u32).collect(),
            nodes: Vec::with_capacity(2 * n),
            lo: Vec::with_capacity(2 * n * d),
            hi: Vec::with_capacity(2 * n * d),
        };
        tree.push_node(points, 0, n as u32);
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let (start, end) = {
                let nd = &tree.nodes[id as usize];
                (nd.start as usize, nd.end as usize)
            };
            if end - start == 1 {
                continue;
            }
            let (axis, mid) = tree.longest_axis(id);
            let slice = &mut tree.order[start..end];
            let mut cut = stable_partition(slice, |&i| points.point(i as usize)[axis] <= mid);
            if cut == 0 || cut == end - start {
                // midpoint rounded onto an endpoint; split off the lowest coordinate
                let lo = tree.lo[id as usize * d + axis];
                cut = stable_partition(slice, |&i| points.point(i as usize)[axis] <= lo);
            }
            let left = tree.push_node(points, start as u32, (start + cut) as u32);
            let right = tree.push_node(points, (start + cut) as u32, end as u32);
            let node = &mut tree.nodes[id as usize];
            node.children = Some((left, right));
            node.split_axis = Some(axis);
            node.split_value = mid;
            stack.push(right);
            stack.push(left);
        }
        tree
    }

    fn push_node(&mut self, points: &PointSet, start: u32, end: u32) -> NodeId {
        let d = self.dim;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        let mut rep = u32::MAX;
        for &i in &self.order[start as usize..end as usize] {
            let p = points.point(i as usize);
            for a in 0..d {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
            rep = rep.min(i);
        }
        self.lo.extend_from_slice(&lo);
        self.hi.extend_from_slice(&hi);
        self.nodes.push(SplitNode {
            start,
            end,
            children: None,
            rep,
            split_axis: None,
            split_value: f64::NAN,
        });
        (self.nodes.len() - 1) as NodeId
    }

    fn longest_axis(&self, id: NodeId) -> (usize, f64) {
        let (lo, hi) = (self.box_lo(id), self.box_hi(id));
        let mut axis = 0;
        for a in 1..self.dim {
            if hi[a] - lo[a] > hi[axis] - lo[axis] {
                axis = a;
            }
        }
        (axis, lo[axis] + (hi[axis] - lo[axis]) / 2.0)
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> &[SplitNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &SplitNode {
        &self.nodes[id as usize]
    }

    pub fn box_lo(&self, id: NodeId) -> &[f64] {
        &self.lo[id as usize * self.dim..(id as usize + 1) * self.dim]
    }

    pub fn box_hi(&self, id: NodeId) -> &[f64] {
        &self.hi[id as usize * self.dim..(id as usize + 1) * self.dim]
    }

    /// Point indices stored under `id`.
    pub fn points_of(&self, id: NodeId) -> &[u32] {
        let n = &self.nodes[id as usize];
        &self.order[n.start as usize..n.end as usize]
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }
}

/// Moves the elements satisfying `pred` to the front, keeping relative order
/// on both sides. Returns the number of such elements.
fn stable_partition<T: Copy>(slice: &mut [T], pred: impl Fn(&T) -> bool) -> usize {
    let (yes, no): (Vec<T>, Vec<T>) = slice.iter().partition(|x| pred(x));
    let cut = yes.len();
    slice[..cut].copy_from_slice(&yes);
    slice[cut..].copy_from_slice(&no);
    cut
}

/// One pair {A_k, B_k}; each side is a contiguous range of [`WspdSet::members`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WspdPair {
    pub a: (u32, u32),
    pub b: (u32, u32),
    pub rep_a: u32,
    pub rep_b: u32,
}

#[derive(Clone, Debug)]
pub struct WspdSet {
    separation: f64,
    members: Vec<u32>,
    pairs: Vec<WspdPair>,
}

impl WspdSet {
    /// Assembles a decomposition from explicit sides (used for testing the
    /// validator on hand-made inputs).
    pub fn from_sides(separation: f64, sides: &[(Vec<u32>, Vec<u32>)]) -> WspdSet {
        let mut members = Vec::new();
        let mut pairs = Vec::new();
        for (a, b) in sides {
            let a0 = members.len() as u32;
            members.extend_from_slice(a);
            let b0 = members.len() as u32;
            members.extend_from_slice(b);
            let b1 = members.len() as u32;
            pairs.push(WspdPair {
                a: (a0, b0),
                b: (b0, b1),
                rep_a: a.iter().copied().min().unwrap_or(u32::MAX),
                rep_b: b.iter().copied().min().unwrap_or(u32::MAX),
            });
        }
        WspdSet {
            separation,
            members,
            pairs,
        }
    }

    pub fn separation(&self) -> f64 {
        self.separation
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[WspdPair] {
        &self.pairs
    }

    pub fn side_a(&self, k: usize) -> &[u32] {
        let (s, e) = self.pairs[k].a;
        &self.members[s as usize..e as usize]
    }

    pub fn side_b(&self, k: usize) -> &[u32] {
        let (s, e) = self.pairs[k].b;
        &self.members[s as usize..e as usize]
    }

    /// Removes pair `k` (mutation hook for validator tests).
    pub fn remove_pair(&mut self, k: usize) -> WspdPair {
        self.pairs.remove(k)
    }

    /// Dense `n x n` table mapping each unordered point pair to the first
    /// WSPD pair containing it (`u32::MAX` on the diagonal or if uncovered).
    pub fn pair_lookup(&self, n: usize) -> Vec<u32> {
        let mut table = vec![u32::MAX; n * n];
        for k in 0..self.pairs.len() {
            for &u in self.side_a(k) {
                for &v in self.side_b(k) {
                    let (u, v) = (u as usize, v as usize);
                    if table[u * n + v] == u32::MAX {
                        table[u * n + v] = k as u32;
                        table[v * n + u] = k as u32;
                    }
                }
            }
        }
        table
    }
}

/// Extracts a `t`-WSPD from a fair split tree. Pairs are listed in the order
/// the recursion emits them, which depends only on the tree.
pub fn extract_wspd(tree: &SplitTree, t: f64, norm: &NormSpec) -> WspdSet {
    assert!(t >= 1.0, "separation must be at least 1");
    let diam: Vec<f64> = (0..tree.nodes().len() as u32)
        .map(|id| {
            if tree.node(id).is_leaf() {
                0.0
            } else {
                norm.box_diameter_upper(tree.box_lo(id), tree.box_hi(id))
            }
        })
        .collect();
    let mut members: Vec<u32> = Vec::new();
    let mut pairs = Vec::new();
    let mut emit = |v: NodeId, w: NodeId| {
        let a0 = members.len() as u32;
        members.extend_from_slice(tree.points_of(v));
        let b0 = members.len() as u32;
        members.extend_from_slice(tree.points_of(w));
        let b1 = members.len() as u32;
        pairs.push(WspdPair {
            a: (a0, b0),
            b: (b0, b1),
            rep_a: tree.node(v).rep,
            rep_b: tree.node(w).rep,
        });
    };

    // Preorder walk over internal nodes; each seeds a pairing recursion of
    // its two children, itself run with an explicit stack.
    let mut walk = vec![tree.root()];
    let mut stack: Vec<(NodeId, NodeId)> = Vec::new();
    while let Some(u) = walk.pop() {
        let Some((l, r)) = tree.node(u).children else {
            continue;
        };
        walk.push(r);
        walk.push(l);
        stack.push((l, r));
        while let Some((v, w)) = stack.pop() {
            let gap = norm.box_distance_lower(tree.box_lo(v), tree.box_hi(v), tree.box_lo(w), tree.box_hi(w));
            let (dv, dw) = (diam[v as usize], diam[w as usize]);
            if gap >= t * dv.max(dw) {
                emit(v, w);
                continue;
            }
            let split_v = if tree.node(w).is_leaf() {
                true
            } else if tree.node(v).is_leaf() {
                false
            } else {
                dv >= dw
            };
            if split_v {
                let (a, b) = tree.node(v).children.expect("internal node");
                stack.push((b, w));
                stack.push((a, w));
            } else {
                let (a, b) = tree.node(w).children.expect("internal node");
                stack.push((v, b));
                stack.push((v, a));
            }
        }
    }
    WspdSet {
        separation: t,
        members,
        pairs,
    }
}

/// Outcome of one WSPD property check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub pass: bool,
    pub witness: Option<String>,
}

impl PropertyCheck {
    fn ok() -> Self {
        PropertyCheck {
            pass: true,
            witness: None,
        }
    }

    fn fail(w: String) -> Self {
        PropertyCheck {
            pass: false,
            witness: Some(w),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WspdReport {
    pub subsets: PropertyCheck,
    pub disjoint: PropertyCheck,
    pub coverage: PropertyCheck,
    pub separation: PropertyCheck,
}

impl WspdReport {
    pub fn pass(&self) -> bool {
        self.subsets.pass && self.disjoint.pass && self.coverage.pass && self.separation.pass
    }
}

/// Brute-force check of the four WSPD properties. Quadratic in `n`.
pub fn validate_wspd(wspd: &WspdSet, points: &PointSet, t: f64, norm: &NormSpec) -> WspdReport {
    let n = points.len();
    let mut subsets = PropertyCheck::ok();
    let mut disjoint = PropertyCheck::ok();
    let mut separation = PropertyCheck::ok();
    let mut covered = vec![false; n * n];
    let mut mark = vec![usize::MAX; n];

    'pairs: for k in 0..wspd.len() {
        let (a, b) = (wspd.side_a(k), wspd.side_b(k));
        for &i in a.iter().chain(b) {
            if i as usize >= n {
                if subsets.pass {
                    subsets = PropertyCheck::fail(format!("pair {k} references point {i} >= n = {n}"));
                }
                continue 'pairs;
            }
        }
        if a.is_empty() || b.is_empty() {
            if subsets.pass {
                subsets = PropertyCheck::fail(format!("pair {k} has an empty side"));
            }
            continue;
        }
        for &i in a {
            mark[i as usize] = k;
        }
        if let Some(&i) = b.iter().find(|&&i| mark[i as usize] == k) {
            if disjoint.pass {
                disjoint = PropertyCheck::fail(format!("pair {k}: point {i} lies on both sides"));
            }
        }
        let mut diam: f64 = 0.0;
        for side in [a, b] {
            for (x, &i) in side.iter().enumerate() {
                for &j in &side[x + 1..] {
                    diam = diam.max(norm.dist(points.point(i as usize), points.point(j as usize)));
                }
            }
        }
        let mut gap = f64::INFINITY;
        for &i in a {
            for &j in b {
                gap = gap.min(norm.dist(points.point(i as usize), points.point(j as usize)));
                let (u, v) = (i as usize, j as usize);
                covered[u * n + v] = true;
                covered[v * n + u] = true;
            }
        }
        if gap < t * diam && separation.pass {
            separation = PropertyCheck::fail(format!(
                "pair {k}: dist(A,B) = {gap} < t * max diam = {}",
                t * diam
            ));
        }
    }

    let mut coverage = PropertyCheck::ok();
    'outer: for u in 0..n {
        for v in u + 1..n {
            if !covered[u * n + v] {
                coverage = PropertyCheck::fail(format!("point pair {{{u}, {v}}} is not covered"));
                break 'outer;
            }
        }
    }
    WspdReport {
        subsets,
        disjoint,
        coverage,
        separation,
    }
}
