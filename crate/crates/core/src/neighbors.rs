//! Exact cosine nearest-neighbor search over feature rows, restricted to an
//! arbitrary subset of the item universe.

use serde::{Deserialize, Serialize};

use crate::dense::RowMatrix;
use crate::kernel::{norm, FeatureMap};
use crate::util::dot;
use crate::{Error, ItemId, Result};

/// Restricted queries against sets at most this large scan the set directly.
const SCAN_LIMIT: usize = 64;
const LEAF_SIZE: usize = 16;
const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IndexStructure {
    #[default]
    Brute,
    Tree,
}

/// Sorted, deduplicated set of item ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RestrictSet {
    members: Vec<ItemId>,
}

impl RestrictSet {
    pub fn new<I: IntoIterator<Item = ItemId>>(ids: I) -> Self {
        let mut members: Vec<ItemId> = ids.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        Self { members }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, id: ItemId) -> bool {
        self.members.binary_search(&id).is_ok()
    }

    pub fn members(&self) -> &[ItemId] {
        &self.members
    }
}

impl FromIterator<ItemId> for RestrictSet {
    fn from_iter<I: IntoIterator<Item = ItemId>>(iter: I) -> Self {
        Self::new(iter)
    }
}

#[derive(Debug, Clone)]
struct Node {
    center: Vec<f64>,
    radius: f64,
    kind: NodeKind,
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf(Vec<ItemId>),
    Split(Box<Node>, Box<Node>),
}

/// Cosine index over ℓ2-normalized copies of every feature row.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    vectors: RowMatrix,
    structure: IndexStructure,
    root: Option<Node>,
}

pub fn build_index(feat: &FeatureMap, structure: IndexStructure) -> Result<NeighborIndex> {
    if feat.is_empty() {
        return Err(Error::invalid("cannot index an empty item set"));
    }
    let mut vectors = feat.rows().clone();
    for i in 0..vectors.nrows() {
        let row = vectors.row_mut(i);
        let n = norm(row);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::DegenerateItem(i));
        }
        row.iter_mut().for_each(|v| *v /= n);
    }
    let root = match structure {
        IndexStructure::Brute => None,
        IndexStructure::Tree => {
            let ids: Vec<ItemId> = (0..vectors.nrows()).collect();
            Some(build_node(&vectors, ids))
        }
    };
    Ok(NeighborIndex {
        vectors,
        structure,
        root,
    })
}

fn build_node(v: &RowMatrix, ids: Vec<ItemId>) -> Node {
    let dim = v.ncols();
    let mut center = vec![0.0; dim];
    for &i in &ids {
        center.iter_mut().zip(v.row(i)).for_each(|(c, x)| *c += x);
    }
    center.iter_mut().for_each(|c| *c /= ids.len() as f64);
    let radius = ids
        .iter()
        .map(|&i| dist(&center, v.row(i)))
        .fold(0.0, f64::max);
    if ids.len() <= LEAF_SIZE || radius == 0.0 {
        return Node {
            center,
            radius,
            kind: NodeKind::Leaf(ids),
        };
    }
    // Split along the widest coordinate at the median.
    let axis = (0..dim)
        .max_by(|&a, &b| spread(v, &ids, a).total_cmp(&spread(v, &ids, b)))
        .unwrap_or(0);
    let mut sorted = ids;
    sorted.sort_by(|&a, &b| v.row(a)[axis].total_cmp(&v.row(b)[axis]).then(a.cmp(&b)));
    let right = sorted.split_off(sorted.len() / 2);
    Node {
        center,
        radius,
        kind: NodeKind::Split(Box::new(build_node(v, sorted)), Box::new(build_node(v, right))),
    }
}

fn spread(v: &RowMatrix, ids: &[ItemId], axis: usize) -> f64 {
    let (lo, hi) = ids.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
        let x = v.row(i)[axis];
        (lo.min(x), hi.max(x))
    });
    hi - lo
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[inline]
fn improves(cos: f64, id: ItemId, best: &(Option<ItemId>, f64)) -> bool {
    match best.0 {
        None => true,
        Some(b) => cos > best.1 || (cos == best.1 && id < b),
    }
}

impl NeighborIndex {
    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn structure(&self) -> IndexStructure {
        self.structure
    }

    fn check(&self, id: ItemId) -> Result<()> {
        if id >= self.len() {
            return Err(Error::invalid(format!("unknown item id {id}")));
        }
        Ok(())
    }

    /// Cosine similarity of the feature rows of `i` and `j`.
    pub fn cosine(&self, i: ItemId, j: ItemId) -> Result<f64> {
        self.check(i)?;
        self.check(j)?;
        Ok(self.vectors.row_dot(i, j))
    }

    /// Most similar member of `restrict` to `query`, ties to the lowest id.
    /// Returns `(None, -inf)` for an empty restriction.
    pub fn max_cosine_in(&self, query: ItemId, restrict: &RestrictSet) -> Result<(Option<ItemId>, f64)> {
        self.check(query)?;
        if let Some(&last) = restrict.members().last() {
            self.check(last)?;
        }
        let q = self.vectors.row(query);
        match (&self.root, restrict.len() > SCAN_LIMIT) {
            (Some(root), true) => {
                let mut best = (None, f64::NEG_INFINITY);
                self.search(root, q, &|id| restrict.contains(id), &mut best);
                Ok(best)
            }
            _ => Ok(self.scan(q, restrict.members().iter().copied())),
        }
    }

    /// Nearest item to `query` over the whole universe, excluding `query` itself.
    pub fn nearest(&self, query: ItemId) -> Result<(Option<ItemId>, f64)> {
        self.check(query)?;
        let q = self.vectors.row(query);
        match &self.root {
            Some(root) => {
                let mut best = (None, f64::NEG_INFINITY);
                self.search(root, q, &|id| id != query, &mut best);
                Ok(best)
            }
            None => Ok(self.scan(q, (0..self.len()).filter(|&i| i != query))),
        }
    }

    fn scan<I: Iterator<Item = ItemId>>(&self, q: &[f64], ids: I) -> (Option<ItemId>, f64) {
        let mut best = (None, f64::NEG_INFINITY);
        for id in ids {
            let c = dot(q, self.vectors.row(id));
            if improves(c, id, &best) {
                best = (Some(id), c);
            }
        }
        best
    }

    fn search(&self, node: &Node, q: &[f64], keep: &dyn Fn(ItemId) -> bool, best: &mut (Option<ItemId>, f64)) {
        // |q| = 1, so q·x ≤ q·c + r for every x in the ball.
        let bound = dot(q, &node.center) + node.radius + BOUND_SLACK;
        if best.0.is_some() && bound < best.1 {
            return;
        }
        match &node.kind {
            NodeKind::Leaf(ids) => {
                for &id in ids {
                    if keep(id) {
                        let c = dot(q, self.vectors.row(id));
                        if improves(c, id, best) {
                            *best = (Some(id), c);
                        }
                    }
                }
            }
            NodeKind::Split(a, b) => {
                let (first, second) = if dot(q, &a.center) >= dot(q, &b.center) { (a, b) } else { (b, a) };
                self.search(first, q, keep, best);
                self.search(second, q, keep, best);
            }
        }
    }
}
