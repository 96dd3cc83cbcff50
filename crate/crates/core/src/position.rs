//! The position tree T(A) with its map r_A, built from cluster data.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::clusters::{compute_clusters, ClusterData, PointSet};
use crate::error::{Error, Result};
use crate::projline::{Mobius, ProjPoint};
use crate::valuation::{ExactQ, Scalar, ValQ};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PositionTree {
    /// Member labels of the cluster behind each vertex; vertex 0 is the root.
    pub vertices: Vec<BTreeSet<String>>,
    pub parent: Vec<Option<usize>>,
    pub r_map: BTreeMap<String, usize>,
}

/// Move point `d` to infinity with z -> 1/(z - x), leaving labels alone.
pub fn send_to_infinity<F: Scalar>(a: &PointSet<F>, d: usize) -> Result<PointSet<F>> {
    match &a.points[d] {
        ProjPoint::Infinity => Ok(a.clone()),
        ProjPoint::Finite(x) => {
            let m = Mobius::new(x.zero(), x.one(), x.one(), x.neg());
            a.map(&m)
        }
    }
}

fn last_label(labels: &[String]) -> usize {
    (0..labels.len()).max_by(|&i, &j| labels[i].cmp(&labels[j])).unwrap()
}

/// Cluster data of `a` after moving a designated point to infinity: the
/// point at infinity if there is one, else the lexicographically last label.
pub fn normalized_clusters<F: Scalar>(a: &PointSet<F>) -> Result<ClusterData> {
    let d = a.infinity().unwrap_or_else(|| last_label(&a.labels));
    compute_clusters(&send_to_infinity(a, d)?)
}

pub fn position_tree<F: Scalar>(a: &PointSet<F>) -> Result<PositionTree> {
    if a.len() < 3 {
        return Err(Error::TooFewPoints { need: 3, got: a.len() });
    }
    Ok(tree_of(&normalized_clusters(a)?))
}

fn tree_of(cd: &ClusterData) -> PositionTree {
    let vertices = (0..cd.clusters.len()).map(|c| cd.member_labels(c)).collect();
    let parent = cd.clusters.iter().map(|c| c.parent).collect();
    let r_map = (0..cd.n_points())
        .map(|i| (cd.labels[i].clone(), cd.attach(i).unwrap_or(ClusterData::ROOT)))
        .collect();
    PositionTree { vertices, parent, r_map }
}

impl PositionTree {
    pub fn to_dot(&self) -> String {
        let mut s = String::from("graph position {\n");
        for (v, members) in self.vertices.iter().enumerate() {
            let _ = writeln!(s, "  v{v} [shape=circle, label=\"{}\"];", members.len());
            if let Some(p) = self.parent[v] {
                let _ = writeln!(s, "  v{p} -- v{v};");
            }
        }
        for (k, (label, v)) in self.r_map.iter().enumerate() {
            let _ = writeln!(s, "  l{k} [shape=plaintext, label=\"{label}\"];\n  v{v} -- l{k} [style=dashed];");
        }
        s.push_str("}\n");
        s
    }

    /// Rooted canonical code in which every vertex lists the (renamed) labels
    /// attached to it and the sorted codes of its children.
    pub fn canonical_code(&self, rename: &BTreeMap<String, String>) -> String {
        let mut kids = vec![Vec::new(); self.vertices.len()];
        for (v, p) in self.parent.iter().enumerate() {
            if let Some(p) = p {
                kids[*p].push(v);
            }
        }
        let mut leaves = vec![Vec::new(); self.vertices.len()];
        for (label, &v) in &self.r_map {
            leaves[v].push(rename.get(label).cloned().unwrap_or_else(|| label.clone()));
        }
        fn code(v: usize, kids: &[Vec<usize>], leaves: &mut [Vec<String>]) -> String {
            let mut parts: Vec<String> = kids[v].iter().map(|&k| code(k, kids, leaves)).collect();
            parts.sort();
            leaves[v].sort();
            format!("({}|{})", leaves[v].join(","), parts.join(""))
        }
        code(0, &kids, &mut leaves)
    }
}

fn check_bijection(phi: &[usize], n: usize, m: usize) -> Result<()> {
    if n != m {
        return Err(Error::SizeMismatch(n, m));
    }
    if n < 3 {
        return Err(Error::TooFewPoints { need: 3, got: n });
    }
    let image: BTreeSet<usize> = phi.iter().copied().collect();
    if phi.len() != n || image.len() != n || image.iter().any(|&j| j >= n) {
        return Err(Error::Invalid("phi must be a bijection of indices".into()));
    }
    Ok(())
}

fn designated<F: Scalar>(a: &PointSet<F>, a2: &PointSet<F>, phi: &[usize], d: Option<usize>) -> usize {
    if let Some(d) = d {
        return d;
    }
    match (a.infinity(), a2.infinity()) {
        (Some(i), Some(j)) if phi[i] == j => i,
        _ => last_label(&a.labels),
    }
}

/// Whether `phi` (index `i` of `a` to index `phi[i]` of `a2`) identifies the
/// position trees of the two sets. A designated point of `a` and its image are
/// first sent to infinity, after which the test is that `phi` carries clusters
/// onto clusters.
pub fn same_position<F: Scalar>(
    a: &PointSet<F>,
    phi: &[usize],
    a2: &PointSet<F>,
    designated_point: Option<usize>,
) -> Result<bool> {
    check_bijection(phi, a.len(), a2.len())?;
    let d = designated(a, a2, phi, designated_point);
    let c1 = compute_clusters(&send_to_infinity(a, d)?)?;
    let c2 = compute_clusters(&send_to_infinity(a2, phi[d])?)?;
    let moved: BTreeSet<BTreeSet<usize>> = c1
        .clusters
        .iter()
        .map(|c| c.members.iter().map(|&i| phi[i]).collect())
        .collect();
    let target: BTreeSet<BTreeSet<usize>> =
        c2.clusters.iter().map(|c| c.members.iter().copied().collect()).collect();
    Ok(moved == target)
}

/// The same predicate decided by comparing canonical codes of the rooted
/// position trees.
pub fn same_position_by_codes<F: Scalar>(
    a: &PointSet<F>,
    phi: &[usize],
    a2: &PointSet<F>,
    designated_point: Option<usize>,
) -> Result<bool> {
    check_bijection(phi, a.len(), a2.len())?;
    let d = designated(a, a2, phi, designated_point);
    let t1 = tree_of(&compute_clusters(&send_to_infinity(a, d)?)?);
    let t2 = tree_of(&compute_clusters(&send_to_infinity(a2, phi[d])?)?);
    let rename: BTreeMap<String, String> =
        (0..a.len()).map(|i| (a.labels[i].clone(), a2.labels[phi[i]].clone())).collect();
    Ok(t1.canonical_code(&rename) == t2.canonical_code(&BTreeMap::new()))
}

fn triple_map(t: [&ProjPoint<ExactQ>; 3], ctx: &ExactQ) -> Mobius<ExactQ> {
    use ProjPoint::*;
    let one = ctx.one();
    let zero = ctx.zero();
    match t {
        [Finite(z0), Finite(z1), Finite(zi)] => {
            let u = z1.sub(zi);
            let w = z1.sub(z0);
            Mobius::new(u.clone(), z0.mul(&u).neg(), w.clone(), zi.mul(&w).neg())
        }
        [Finite(z0), Finite(z1), Infinity] => Mobius::new(one, z0.neg(), zero, z1.sub(z0)),
        [Infinity, Finite(z1), Finite(zi)] => Mobius::new(zero, z1.sub(zi), one, zi.neg()),
        [Finite(z0), Infinity, Finite(zi)] => Mobius::new(one.clone(), z0.neg(), one, zi.neg()),
        _ => unreachable!("triples consist of distinct points"),
    }
}

fn reduces_to_automorphism(m: &Mobius<ExactQ>) -> Result<bool> {
    let low = [&m.a, &m.b, &m.c, &m.d]
        .iter()
        .map(|x| x.val())
        .collect::<Result<Vec<ValQ>>>()?
        .into_iter()
        .min()
        .unwrap();
    Ok(m.det().val()? == low * 2)
}

/// Number of classes of ordered triples of distinct points, two triples being
/// equivalent when the map between their normal forms reduces to an
/// automorphism of the special fibre. Brute force, for small sets only.
pub fn triple_class_count(a: &PointSet<ExactQ>) -> Result<usize> {
    let n = a.len();
    if !(3..=6).contains(&n) {
        return Err(Error::Invalid("triple classification is limited to 3..=6 points".into()));
    }
    let ctx = a.points.iter().find_map(|p| p.finite().cloned()).unwrap();
    let mut reps: Vec<Mobius<ExactQ>> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if i == j || j == k || i == k {
                    continue;
                }
                let g = triple_map([&a.points[i], &a.points[j], &a.points[k]], &ctx);
                let mut known = false;
                for r in &reps {
                    if reduces_to_automorphism(&g.compose(&r.inverse()))? {
                        known = true;
                        break;
                    }
                }
                if !known {
                    reps.push(g);
                }
            }
        }
    }
    Ok(reps.len())
}
