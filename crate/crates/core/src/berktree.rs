//! The skeleton of the convex hull of a finite set in the Berkovich line, as a
//! rooted metric tree whose internal vertices are the clusters.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::clusters::{clustered_in_pairs, Cluster, ClusterData, Pairing};
use crate::error::{Error, Result};
use crate::valuation::{ValQ, Q};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexKind {
    Distinguished,
    Natural,
    Plain,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub parent: Option<usize>,
    /// Length of the edge up to the parent; zero at the root.
    pub length: ValQ,
    pub kind: VertexKind,
}

/// Nodes are stored parents-first; node 0 is the root (the maximal cluster).
/// Every point of the set hangs off a node by an infinite leaf ray, the point
/// at infinity hanging off the root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricTree {
    pub labels: Vec<String>,
    pub infinity: Option<usize>,
    pub nodes: Vec<Node>,
    pub leaf_attach: Vec<usize>,
    pub axes: Vec<(usize, usize)>,
}

/// A point of the skeleton: `above` is the distance up from `node` along the
/// edge to its parent, with `0 <= above < length` (and `above = 0` at the root).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct TreePoint {
    pub node: usize,
    pub above: ValQ,
}

impl TreePoint {
    pub fn at(node: usize) -> Self {
        TreePoint { node, above: ValQ::ZERO }
    }
}

/// A location in the hull: a skeleton point or the Type I point of a leaf.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Loc {
    Skeleton(TreePoint),
    Leaf(usize),
}

type Path = (TreePoint, TreePoint);

fn half(q: ValQ) -> ValQ {
    q.scale(Q::new(1, 2))
}

impl MetricTree {
    /// The tree of all clusters with edge lengths the relative depths; no
    /// axes, kinds by degree only.
    pub fn cluster_tree(cd: &ClusterData) -> MetricTree {
        let nodes = cd
            .clusters
            .iter()
            .enumerate()
            .map(|(c, cl)| Node {
                parent: cl.parent,
                length: cd.relative_depth(c).unwrap_or(ValQ::ZERO),
                kind: VertexKind::Natural,
            })
            .collect();
        let leaf_attach =
            (0..cd.n_points()).map(|i| cd.attach(i).unwrap_or(ClusterData::ROOT)).collect();
        let mut t = MetricTree {
            labels: cd.labels.clone(),
            infinity: cd.infinity,
            nodes,
            leaf_attach,
            axes: Vec::new(),
        };
        t.classify();
        t
    }

    pub fn degree(&self, n: usize) -> usize {
        let kids = self.nodes.iter().filter(|m| m.parent == Some(n)).count();
        let leaves = self.leaf_attach.iter().filter(|&&a| a == n).count();
        let up = usize::from(self.nodes[n].parent.is_some());
        kids + leaves + up
    }

    fn classify(&mut self) {
        for n in 0..self.nodes.len() {
            let kind = if self.degree(n) <= 2 {
                VertexKind::Plain
            } else if (0..self.axes.len()).any(|i| self.on_axis(TreePoint::at(n), i)) {
                VertexKind::Distinguished
            } else {
                VertexKind::Natural
            };
            self.nodes[n].kind = kind;
        }
    }

    pub fn height(&self, n: usize) -> ValQ {
        let mut h = ValQ::ZERO;
        let mut cur = n;
        while let Some(p) = self.nodes[cur].parent {
            h = h + self.nodes[cur].length;
            cur = p;
        }
        h
    }

    fn point_height(&self, x: TreePoint) -> ValQ {
        self.height(x.node) - x.above
    }

    fn chain(&self, n: usize) -> Vec<usize> {
        let mut out = vec![n];
        let mut cur = n;
        while let Some(p) = self.nodes[cur].parent {
            out.push(p);
            cur = p;
        }
        out
    }

    fn lca(&self, u: usize, w: usize) -> usize {
        let up: BTreeSet<usize> = self.chain(u).into_iter().collect();
        self.chain(w).into_iter().find(|n| up.contains(n)).unwrap()
    }

    pub fn check_point(&self, x: TreePoint) -> Result<()> {
        let n = self.nodes.get(x.node).ok_or_else(|| Error::Invalid("no such node".into()))?;
        let ok = match n.parent {
            None => x.above == ValQ::ZERO,
            Some(_) => x.above >= ValQ::ZERO && x.above < n.length,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("offset {} outside its edge", x.above)))
        }
    }

    pub fn distance(&self, x: TreePoint, y: TreePoint) -> ValQ {
        let (hx, hy) = (self.point_height(x), self.point_height(y));
        let c = self.lca(x.node, y.node);
        if c == x.node && c == y.node {
            return if hx > hy { hx - hy } else { hy - hx };
        }
        let top = if c == x.node {
            hx
        } else if c == y.node {
            hy
        } else {
            self.height(c)
        };
        hx + hy - top * 2
    }

    pub fn distance_loc(&self, x: Loc, y: Loc) -> Result<ValQ> {
        match (x, y) {
            (Loc::Skeleton(a), Loc::Skeleton(b)) => Ok(self.distance(a, b)),
            (Loc::Leaf(i), Loc::Leaf(j)) if i == j => Ok(ValQ::ZERO),
            _ => Err(Error::LeafDistanceInfinite),
        }
    }

    /// The part of the path between leaves `i` and `j` lying in the skeleton.
    pub fn leaf_path(&self, i: usize, j: usize) -> Path {
        (TreePoint::at(self.leaf_attach[i]), TreePoint::at(self.leaf_attach[j]))
    }

    pub fn axis(&self, i: usize) -> Path {
        let (a, b) = self.axes[i];
        self.leaf_path(a, b)
    }

    pub fn distance_to_path(&self, x: TreePoint, (u, w): Path) -> ValQ {
        half(self.distance(x, u) + self.distance(x, w) - self.distance(u, w))
    }

    pub fn distance_to_axis(&self, x: TreePoint, i: usize) -> ValQ {
        self.distance_to_path(x, self.axis(i))
    }

    pub fn on_axis(&self, x: TreePoint, i: usize) -> bool {
        self.distance_to_axis(x, i) == ValQ::ZERO
    }

    pub fn path_distance(&self, (x, y): Path, (u, w): Path) -> ValQ {
        let s1 = self.distance(x, u) + self.distance(y, w);
        let s2 = self.distance(x, w) + self.distance(y, u);
        let gap = half(s1.min(s2)) - half(self.distance(x, y)) - half(self.distance(u, w));
        gap.max0()
    }

    pub fn axis_distance(&self, i: usize, j: usize) -> ValQ {
        self.path_distance(self.axis(i), self.axis(j))
    }

    /// The point of a path closest to `x`.
    pub fn closest_on_path(&self, x: TreePoint, (u, w): Path) -> TreePoint {
        let t = self.distance(u, x) - self.distance_to_path(x, (u, w));
        self.point_along(u, w, t)
    }

    /// The point at distance `t` from `u` on the path `[u, w]`.
    pub fn point_along(&self, u: TreePoint, w: TreePoint, t: ValQ) -> TreePoint {
        let c = self.lca(u.node, w.node);
        let (hu, hw) = (self.point_height(u), self.point_height(w));
        let top = if c == u.node && c == w.node {
            hu.min(hw)
        } else if c == u.node {
            hu
        } else if c == w.node {
            hw
        } else {
            self.height(c)
        };
        let up_leg = hu - top;
        if t <= up_leg {
            self.raise(u, t)
        } else {
            let back = self.distance(u, w) - t;
            self.raise(w, back)
        }
    }

    /// Move `x` up towards the root by `t`.
    fn raise(&self, x: TreePoint, t: ValQ) -> TreePoint {
        let mut node = x.node;
        let mut above = x.above + t;
        while let Some(p) = self.nodes[node].parent {
            let len = self.nodes[node].length;
            if above < len {
                break;
            }
            above = above - len;
            node = p;
        }
        TreePoint { node, above }
    }

    /// Total length of the points of `[x, y]` within distance `r` of some axis.
    ///
    /// Along a geodesic the distance to a path is max(A - t, B - (L - t), m),
    /// so each axis contributes one interval and the answer is the length of
    /// their union.
    pub fn mu(&self, x: TreePoint, y: TreePoint, r: ValQ) -> ValQ {
        let l = self.distance(x, y);
        let mut iv: Vec<(ValQ, ValQ)> = Vec::new();
        for i in 0..self.axes.len() {
            let ax = self.axis(i);
            if self.path_distance((x, y), ax) > r {
                continue;
            }
            let lo = (self.distance_to_path(x, ax) - r).max0();
            let hi = l - (self.distance_to_path(y, ax) - r).max0();
            if lo < hi {
                iv.push((lo, hi));
            }
        }
        iv.sort();
        let mut total = ValQ::ZERO;
        let mut cur: Option<(ValQ, ValQ)> = None;
        for (a, b) in iv {
            cur = match cur {
                Some((s, e)) if a <= e => Some((s, e.max(b))),
                Some((s, e)) => {
                    total = total + (e - s);
                    Some((a, b))
                }
                None => Some((a, b)),
            };
        }
        if let Some((s, e)) = cur {
            total = total + (e - s);
        }
        total
    }

    pub fn distinguished(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&n| self.nodes[n].kind == VertexKind::Distinguished).collect()
    }

    /// Distinguished vertices lying on no common axis are more than `2r` apart.
    pub fn separated_check_vertices(&self, r: ValQ) -> bool {
        if r.is_inf() {
            return self.axes.len() <= 1;
        }
        let d = self.distinguished();
        for (k, &u) in d.iter().enumerate() {
            for &w in &d[k + 1..] {
                let common = (0..self.axes.len())
                    .any(|i| self.on_axis(TreePoint::at(u), i) && self.on_axis(TreePoint::at(w), i));
                if !common && self.distance(TreePoint::at(u), TreePoint::at(w)) <= r * 2 {
                    return false;
                }
            }
        }
        true
    }

    /// Pairwise axis distances exceed `2r`.
    pub fn axes_separated(&self, r: ValQ) -> bool {
        if r.is_inf() {
            return self.axes.len() <= 1;
        }
        (0..self.axes.len())
            .all(|i| (i + 1..self.axes.len()).all(|j| self.axis_distance(i, j) > r * 2))
    }

    /// Leaf labels below each node.
    pub fn members(&self, n: usize) -> Vec<usize> {
        (0..self.leaf_attach.len())
            .filter(|&i| Some(i) != self.infinity && self.chain(self.leaf_attach[i]).contains(&n))
            .collect()
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("graph hull {\n");
        for (n, node) in self.nodes.iter().enumerate() {
            let shape = match node.kind {
                VertexKind::Distinguished => "doublecircle",
                VertexKind::Natural => "circle",
                VertexKind::Plain => "point",
            };
            let _ = writeln!(s, "  v{n} [shape={shape}, label=\"v{n}\"];");
            if let Some(p) = node.parent {
                let _ = writeln!(s, "  v{p} -- v{n} [label=\"{}\"];", node.length);
            }
        }
        for (i, label) in self.labels.iter().enumerate() {
            let _ = writeln!(
                s,
                "  l{i} [shape=plaintext, label=\"{label}\"];\n  v{} -- l{i} [style=dashed];",
                self.leaf_attach[i]
            );
        }
        for (i, (a, b)) in self.axes.iter().enumerate() {
            let _ = writeln!(s, "  // axis {i}: {} -- {}", self.labels[*a], self.labels[*b]);
        }
        s.push_str("}\n");
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("tree serialises")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<MetricTree> {
        serde_json::from_value(v.clone()).map_err(|e| Error::Invalid(format!("tree json: {e}")))
    }
}

pub fn hull_from_clusters(cd: &ClusterData, p: &Pairing) -> Result<MetricTree> {
    if !clustered_in_pairs(cd, p) {
        return Err(Error::NotClusteredInPairs("axes of two pairs meet".into()));
    }
    let mut t = MetricTree::cluster_tree(cd);
    t.axes = p.pairs.clone();
    t.classify();
    Ok(t)
}

/// Cluster data read off a tree rooted at its infinity leaf, with the maximal
/// cluster placed at depth `d0`.
pub fn clusters_from_hull(t: &MetricTree, d0: ValQ) -> Result<ClusterData> {
    if t.infinity.is_none() {
        return Err(Error::NoInfinityLeaf);
    }
    let mut clusters: Vec<Cluster> = t
        .nodes
        .iter()
        .enumerate()
        .map(|(n, node)| Cluster {
            members: t.members(n),
            depth: d0 + t.height(n),
            parent: node.parent,
            children: Vec::new(),
        })
        .collect();
    for n in 0..clusters.len() {
        if let Some(p) = clusters[n].parent {
            clusters[p].children.push(n);
        }
    }
    Ok(ClusterData { labels: t.labels.clone(), infinity: t.infinity, clusters })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clusters::{compute_clusters, exact_points, pairing_from_clusters};

    fn tree(pts: &[&str], ell: u64) -> (ClusterData, MetricTree) {
        let a = exact_points(pts, ell).unwrap();
        let cd = compute_clusters(&a).unwrap();
        let p = pairing_from_clusters(&cd).unwrap();
        let t = hull_from_clusters(&cd, &p).unwrap();
        (cd, t)
    }

    #[test]
    fn golden_hull() {
        let (cd, t) = tree(&["-9", "9", "3", "12", "1", "inf"], 3);
        assert_eq!(t.nodes.len(), 4);
        let four = (0..4).find(|&n| cd.size(n) == 4).unwrap();
        for n in 0..4 {
            let want = if n == four { VertexKind::Natural } else { VertexKind::Distinguished };
            assert_eq!(t.nodes[n].kind, want);
        }
        let mut lens: Vec<ValQ> = t.nodes.iter().skip(1).map(|n| n.length).collect();
        lens.sort();
        assert_eq!(lens, vec![ValQ::int(1); 3]);
        assert_eq!(clusters_from_hull(&t, ValQ::ZERO).unwrap(), cd);
        assert!(t.separated_check_vertices(ValQ::ZERO));
        assert!(!t.separated_check_vertices(ValQ::int(1)));
    }

    #[test]
    fn single_edge() {
        let (_, t) = tree(&["0", "inf", "1", "10"], 3);
        assert_eq!(t.nodes.len(), 2);
        assert_eq!(t.distinguished(), vec![0, 1]);
        let (v, w) = (TreePoint::at(0), TreePoint::at(1));
        assert_eq!(t.distance(v, w), ValQ::int(2));
        assert_eq!(t.distance(v, v), ValQ::ZERO);
        let zero_inf = t.axes.iter().position(|&(a, _)| t.labels[a] == "0").unwrap();
        assert_eq!(t.distance_to_axis(w, zero_inf), ValQ::int(2));
        assert_eq!(t.distance_to_axis(v, zero_inf), ValQ::ZERO);
        let cd = clusters_from_hull(&t, ValQ::int(5)).unwrap();
        assert_eq!(cd.depth_of(0), ValQ::int(5));
        assert_eq!(cd.depth_of(1), ValQ::int(7));
    }

    #[test]
    fn mu_on_wild_segment() {
        let (_, t) = tree(&["0", "inf", "1", "9"], 2);
        let (v, w) = (TreePoint::at(1), TreePoint::at(0));
        assert_eq!(t.distance(v, w), ValQ::int(3));
        assert_eq!(t.mu(v, w, ValQ::int(1)), ValQ::int(2));
        assert_eq!(t.mu(v, w, ValQ::ZERO), ValQ::ZERO);
        assert_eq!(t.mu(v, w, ValQ::int(2)), ValQ::int(3));
        let mid = TreePoint { node: 1, above: ValQ::frac(1, 2) };
        assert_eq!(t.mu(mid, w, ValQ::int(1)), ValQ::frac(3, 2));
    }

    #[test]
    fn natural_vertex() {
        // {1,10} and {4,13} are even children filling {1,4,10,13}
        let (cd, t) = tree(&["0", "inf", "1", "10", "4", "13"], 3);
        for n in 0..t.nodes.len() {
            assert_eq!(t.nodes[n].kind == VertexKind::Natural, cd.is_even_union(n));
        }
        assert_eq!(t.nodes.iter().filter(|n| n.kind == VertexKind::Natural).count(), 1);
    }

    #[test]
    fn leaves_are_infinitely_far() {
        let (_, t) = tree(&["0", "inf", "1", "10"], 3);
        assert_eq!(
            t.distance_loc(Loc::Leaf(0), Loc::Skeleton(TreePoint::at(0))).unwrap_err(),
            Error::LeafDistanceInfinite
        );
    }

    #[test]
    fn json_round_trip() {
        let (_, t) = tree(&["-9", "9", "3", "12", "1", "inf"], 3);
        assert_eq!(MetricTree::from_json(&t.to_json()).unwrap(), t);
    }
}
