//! Clusters of finite point sets: enumeration, depths, pairings and the
//! separated-pairs test in cluster language.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::projline::{Mobius, ProjPoint};
use crate::valuation::{Scalar, ValQ, Q};

/// Distinct labelled points of the projective line.
#[derive(Clone, Debug)]
pub struct PointSet<F> {
    pub points: Vec<ProjPoint<F>>,
    pub labels: Vec<String>,
}

impl<F: Scalar> PointSet<F> {
    pub fn new(points: Vec<ProjPoint<F>>, labels: Vec<String>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::Invalid("one label per point is required".into()));
        }
        let uniq: BTreeSet<&String> = labels.iter().collect();
        if uniq.len() != labels.len() {
            return Err(Error::Invalid("labels must be distinct".into()));
        }
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                if points[i].same(&points[j])? {
                    return Err(Error::Invalid(format!(
                        "points {} and {} coincide",
                        labels[i], labels[j]
                    )));
                }
            }
        }
        Ok(PointSet { points, labels })
    }

    /// Points labelled by their own values.
    pub fn unlabelled(points: Vec<ProjPoint<F>>) -> Result<Self> {
        let labels = points.iter().map(|p| p.to_string()).collect();
        PointSet::new(points, labels)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn infinity(&self) -> Option<usize> {
        self.points.iter().position(|p| p.is_infinity())
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn map(&self, m: &Mobius<F>) -> Result<Self> {
        let pts = self.points.iter().map(|z| m.apply(z)).collect::<Result<Vec<_>>>()?;
        PointSet::new(pts, self.labels.clone())
    }

    fn val_diff(&self, i: usize, j: usize) -> Result<ValQ> {
        match (&self.points[i], &self.points[j]) {
            (ProjPoint::Finite(x), ProjPoint::Finite(y)) => x.sub(y).val(),
            _ => Err(Error::Invalid("valuation of a difference with infinity".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cluster {
    /// Sorted point indices; never contains infinity.
    pub members: Vec<usize>,
    pub depth: ValQ,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

/// All clusters of size at least two, as a rooted tree stored in preorder.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterData {
    pub labels: Vec<String>,
    pub infinity: Option<usize>,
    pub clusters: Vec<Cluster>,
}

pub fn compute_clusters<F: Scalar>(a: &PointSet<F>) -> Result<ClusterData> {
    let finite: Vec<usize> = (0..a.len()).filter(|&i| !a.points[i].is_infinity()).collect();
    if finite.len() < 2 {
        return Err(Error::TooFewPoints { need: 2, got: finite.len() });
    }
    let n = a.len();
    let mut v = vec![vec![ValQ::Inf; n]; n];
    for (k, &i) in finite.iter().enumerate() {
        for &j in &finite[k + 1..] {
            let d = a.val_diff(i, j)?;
            v[i][j] = d;
            v[j][i] = d;
        }
    }
    let mut out = ClusterData { labels: a.labels.clone(), infinity: a.infinity(), clusters: Vec::new() };
    split(&v, finite, None, &mut out.clusters);
    Ok(out)
}

fn split(v: &[Vec<ValQ>], set: Vec<usize>, parent: Option<usize>, out: &mut Vec<Cluster>) {
    let mut depth = ValQ::Inf;
    for (k, &i) in set.iter().enumerate() {
        for &j in &set[k + 1..] {
            depth = depth.min(v[i][j]);
        }
    }
    let me = out.len();
    out.push(Cluster { members: set.clone(), depth, parent, children: Vec::new() });
    if let Some(p) = parent {
        out[p].children.push(me);
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in &set {
        match groups.iter_mut().find(|g| v[g[0]][i] > depth) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    for g in groups {
        if g.len() >= 2 {
            split(v, g, Some(me), out);
        }
    }
}

impl ClusterData {
    pub const ROOT: usize = 0;

    pub fn n_points(&self) -> usize {
        self.labels.len()
    }

    pub fn relative_depth(&self, c: usize) -> Option<ValQ> {
        self.clusters[c].parent.map(|p| self.clusters[c].depth - self.clusters[p].depth)
    }

    pub fn contains(&self, c: usize, i: usize) -> bool {
        self.clusters[c].members.binary_search(&i).is_ok()
    }

    pub fn size(&self, c: usize) -> usize {
        self.clusters[c].members.len()
    }

    pub fn is_even(&self, c: usize) -> bool {
        self.size(c) % 2 == 0
    }

    /// The smallest stored cluster containing every index in `pts`; `None` if
    /// some index is infinity.
    pub fn smallest_containing(&self, pts: &[usize]) -> Option<usize> {
        if pts.iter().any(|&i| Some(i) == self.infinity) {
            return None;
        }
        let mut c = Self::ROOT;
        'down: loop {
            for &ch in &self.clusters[c].children {
                if pts.iter().all(|&i| self.contains(ch, i)) {
                    c = ch;
                    continue 'down;
                }
            }
            return Some(c);
        }
    }

    /// Smallest cluster containing point `i`, or `None` for infinity.
    pub fn attach(&self, i: usize) -> Option<usize> {
        self.smallest_containing(&[i])
    }

    /// Whether the cluster is a disjoint union of at least two even clusters.
    pub fn is_even_union(&self, c: usize) -> bool {
        let ch = &self.clusters[c].children;
        let covered: usize = ch.iter().map(|&k| self.size(k)).sum();
        ch.len() >= 2 && covered == self.size(c) && ch.iter().all(|&k| self.is_even(k))
    }

    pub fn depth_of(&self, c: usize) -> ValQ {
        self.clusters[c].depth
    }

    pub fn ancestors(&self, c: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.clusters[c].parent;
        while let Some(p) = cur {
            out.push(p);
            cur = self.clusters[p].parent;
        }
        out
    }

    pub fn member_labels(&self, c: usize) -> BTreeSet<String> {
        self.clusters[c].members.iter().map(|&i| self.labels[i].clone()).collect()
    }

    /// Clusters as label sets, forgetting depths.
    pub fn combinatorial(&self) -> BTreeSet<BTreeSet<String>> {
        (0..self.clusters.len()).map(|c| self.member_labels(c)).collect()
    }

    pub fn depth_table(&self) -> BTreeMap<BTreeSet<String>, ValQ> {
        (0..self.clusters.len()).map(|c| (self.member_labels(c), self.depth_of(c))).collect()
    }

    /// Label sets with relative depths; the maximal cluster maps to `None`.
    pub fn relative_table(&self) -> BTreeMap<BTreeSet<String>, Option<ValQ>> {
        (0..self.clusters.len())
            .map(|c| (self.member_labels(c), self.relative_depth(c)))
            .collect()
    }

    pub fn even_clusters(&self) -> Vec<usize> {
        (0..self.clusters.len()).filter(|&c| self.is_even(c)).collect()
    }

    pub fn relabel(&self, labels: Vec<String>) -> ClusterData {
        ClusterData { labels, ..self.clone() }
    }

    pub fn to_json(&self) -> Value {
        self.node_json(Self::ROOT)
    }

    fn node_json(&self, c: usize) -> Value {
        let cl = &self.clusters[c];
        let members: Vec<&String> = cl.members.iter().map(|&i| &self.labels[i]).collect();
        let children: Vec<Value> = cl.children.iter().map(|&k| self.node_json(k)).collect();
        let mut o = json!({"members": members, "depth": cl.depth.to_string()});
        if let Some(r) = self.relative_depth(c) {
            o["relative_depth"] = Value::String(r.to_string());
        }
        o["children"] = Value::Array(children);
        o
    }

    /// Parse the nested JSON produced by [`ClusterData::to_json`].
    pub fn from_json(v: &Value, labels: Vec<String>, infinity: Option<usize>) -> Result<ClusterData> {
        let mut out = ClusterData { labels, infinity, clusters: Vec::new() };
        out.read_node(v, None)?;
        Ok(out)
    }

    fn read_node(&mut self, v: &Value, parent: Option<usize>) -> Result<()> {
        let bad = |f: &str| Error::Invalid(format!("cluster field {f:?} missing or malformed"));
        let mut members = Vec::new();
        for m in v["members"].as_array().ok_or_else(|| bad("members"))? {
            let s = m.as_str().ok_or_else(|| bad("members"))?;
            members.push(self.labels.iter().position(|l| l == s).ok_or_else(|| bad("members"))?);
        }
        members.sort_unstable();
        let depth: ValQ = v["depth"].as_str().ok_or_else(|| bad("depth"))?.parse()?;
        let me = self.clusters.len();
        self.clusters.push(Cluster { members, depth, parent, children: Vec::new() });
        if let Some(p) = parent {
            self.clusters[p].children.push(me);
        }
        for ch in v["children"].as_array().ok_or_else(|| bad("children"))? {
            self.read_node(ch, Some(me))?;
        }
        Ok(())
    }

    /// Indented text picture of the cluster tree.
    pub fn picture(&self) -> String {
        let mut s = String::new();
        self.draw(Self::ROOT, 0, &mut s);
        if let Some(i) = self.infinity {
            let _ = writeln!(s, "({} outside every cluster)", self.labels[i]);
        }
        s
    }

    fn draw(&self, c: usize, indent: usize, s: &mut String) {
        let cl = &self.clusters[c];
        let loose: Vec<&str> = cl
            .members
            .iter()
            .filter(|&&i| !cl.children.iter().any(|&k| self.contains(k, i)))
            .map(|&i| self.labels[i].as_str())
            .collect();
        let rel = self.relative_depth(c).map(|r| format!("_{r}")).unwrap_or_default();
        let _ = writeln!(s, "{:indent$}( {} ){}  depth {}", "", loose.join(" "), rel, cl.depth);
        for &k in &cl.children {
            self.draw(k, indent + 2, s);
        }
    }
}

/// A partition of the point indices into ordered pairs `(a_i, b_i)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pairing {
    pub pairs: Vec<(usize, usize)>,
}

impl Pairing {
    pub fn new(pairs: Vec<(usize, usize)>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for &(a, b) in &pairs {
            for x in [a, b] {
                if x >= n || seen[x] {
                    return Err(Error::Invalid("pairing must partition the points".into()));
                }
                seen[x] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Invalid("pairing must cover every point".into()));
        }
        Ok(Pairing { pairs })
    }

    pub fn from_labels(pairs: &[(String, String)], labels: &[String]) -> Result<Self> {
        let idx = |s: &String| {
            labels
                .iter()
                .position(|l| l == s)
                .ok_or_else(|| Error::Invalid(format!("pairing names unknown label {s:?}")))
        };
        let pairs = pairs.iter().map(|(a, b)| Ok((idx(a)?, idx(b)?))).collect::<Result<Vec<_>>>()?;
        Pairing::new(pairs, labels.len())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pair_of(&self, i: usize) -> usize {
        self.pairs.iter().position(|&(a, b)| a == i || b == i).expect("index is paired")
    }

    /// Pairs as unordered label sets, for order-free comparison.
    pub fn label_sets(&self, labels: &[String]) -> BTreeSet<BTreeSet<String>> {
        self.pairs
            .iter()
            .map(|&(a, b)| [labels[a].clone(), labels[b].clone()].into_iter().collect())
            .collect()
    }
}

/// Classes of the relation "lies in exactly the same even clusters".
pub fn pairing_from_clusters(cd: &ClusterData) -> Result<Pairing> {
    let n = cd.n_points();
    if n % 2 != 0 {
        return Err(Error::NotClusteredInPairs(format!("{n} points is odd")));
    }
    let even = cd.even_clusters();
    let mut classes: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let sig: Vec<usize> = even.iter().copied().filter(|&c| cd.contains(c, i)).collect();
        classes.entry(sig).or_default().push(i);
    }
    let mut pairs = Vec::new();
    for (_, class) in classes {
        if class.len() != 2 {
            let names: Vec<&str> = class.iter().map(|&i| cd.labels[i].as_str()).collect();
            return Err(Error::NotClusteredInPairs(format!(
                "class {{{}}} has {} elements",
                names.join(", "),
                class.len()
            )));
        }
        let (a, b) = (class[0], class[1]);
        pairs.push(if Some(a) == cd.infinity { (b, a) } else { (a, b) });
    }
    pairs.sort_unstable();
    let p = Pairing { pairs };
    if !clustered_in_pairs(cd, &p) {
        return Err(Error::NotClusteredInPairs("the candidate pairs have meeting axes".into()));
    }
    Ok(p)
}

fn splits(cd: &ClusterData, c: usize, (a, b): (usize, usize)) -> bool {
    cd.contains(c, a) != cd.contains(c, b)
}

/// Whether the axes of the pairs are pairwise disjoint, decided on clusters:
/// two axes meet exactly when some cluster disc lies on both, and a disc lies
/// on the axis of `{a, b}` when it separates them or is their smallest disc.
pub fn clustered_in_pairs(cd: &ClusterData, p: &Pairing) -> bool {
    let own: Vec<Option<usize>> =
        p.pairs.iter().map(|&(a, b)| cd.smallest_containing(&[a, b])).collect();
    for i in 0..p.len() {
        for j in 0..p.len() {
            if i == j {
                continue;
            }
            if i < j
                && (0..cd.clusters.len())
                    .any(|c| splits(cd, c, p.pairs[i]) && splits(cd, c, p.pairs[j]))
            {
                return false;
            }
            if let Some(si) = own[i] {
                if splits(cd, si, p.pairs[j]) || own[j] == Some(si) {
                    return false;
                }
            }
        }
    }
    true
}

/// Cluster-language test for the pairs having disjoint closed
/// `r`-neighbourhoods of their axes.
pub fn is_r_separated(cd: &ClusterData, p: &Pairing, r: ValQ) -> bool {
    if !clustered_in_pairs(cd, p) {
        return false;
    }
    if r.is_inf() {
        return false;
    }
    let two_r = r * 2;
    let special: Vec<usize> =
        cd.even_clusters().into_iter().filter(|&c| !cd.is_even_union(c)).collect();
    for &c in &special {
        let tilde = cd.ancestors(c).into_iter().find(|&a| !cd.is_even_union(a));
        if let Some(t) = tilde {
            if cd.depth_of(c) - cd.depth_of(t) <= two_r {
                return false;
            }
        }
    }
    for (k, &c1) in special.iter().enumerate() {
        for &c2 in &special[k + 1..] {
            let (p1, p2) = (cd.clusters[c1].parent, cd.clusters[c2].parent);
            if p1.is_some() && p1 == p2 {
                let s = cd.relative_depth(c1).unwrap() + cd.relative_depth(c2).unwrap();
                if s <= two_r {
                    return false;
                }
            }
        }
    }
    true
}

/// Genus `(p-1)(d-2)/2` of a cyclic degree-`p` cover branched at `d` points,
/// with a flag telling whether it is an integer.
pub fn genus_of_cover(p: u64, d: u64) -> Result<(Q, bool)> {
    if d < 3 {
        return Err(Error::Invalid("need at least 3 branch points".into()));
    }
    let g = Q::new((p as i64 - 1) * (d as i64 - 2), 2);
    Ok((g, g.is_integer()))
}

/// Clusters after applying a Mobius map, recomputed from the moved points,
/// together with the image predicted by the reciprocal rule when it applies.
#[derive(Clone, Debug)]
pub struct Transport {
    pub recomputed: ClusterData,
    pub predicted: Option<BTreeSet<BTreeSet<String>>>,
}

pub fn mobius_transport<F: Scalar>(a: &PointSet<F>, m: &Mobius<F>) -> Result<Transport> {
    let moved = a.map(m)?;
    let recomputed = compute_clusters(&moved)?;
    let predicted = predict_transport(a, m)?;
    Ok(Transport { recomputed, predicted })
}

/// Split `m` as affine ∘ inversion ∘ (z -> c z + d) and push the cluster sets
/// through. Affine maps keep clusters. After the inversion, the clusters are
/// the old clusters whose disc avoids 0 together with the sets
/// `{x : v(x) < t}`, which are the images of discs around 0. Returns `None`
/// when some point meets infinity on the way.
fn predict_transport<F: Scalar>(
    a: &PointSet<F>,
    m: &Mobius<F>,
) -> Result<Option<BTreeSet<BTreeSet<String>>>> {
    let n = a.len();
    if a.infinity().is_some() {
        return Ok(None);
    }
    if m.c.is_zero()? {
        return Ok(Some(compute_clusters(a)?.combinatorial()));
    }
    let mut shifted = Vec::with_capacity(n);
    for z in &a.points {
        let w = m.c.mul(z.finite().unwrap()).add(&m.d);
        if w.is_zero()? {
            return Ok(None);
        }
        shifted.push(ProjPoint::Finite(w));
    }
    let b = PointSet::new(shifted, a.labels.clone())?;
    let vals: Vec<ValQ> =
        b.points.iter().map(|z| z.finite().unwrap().val()).collect::<Result<_>>()?;
    let cd = compute_clusters(&b)?;
    let names = |idx: &[usize]| -> BTreeSet<String> { idx.iter().map(|&i| a.labels[i].clone()).collect() };
    let mut out = BTreeSet::new();
    for c in &cd.clusters {
        if vals[c.members[0]] < c.depth {
            out.insert(names(&c.members));
        }
    }
    for &t in &vals {
        let below = names(&(0..n).filter(|&i| vals[i] < t).collect::<Vec<_>>());
        if below.len() >= 2 {
            out.insert(below);
        }
    }
    out.insert(a.labels.iter().cloned().collect());
    Ok(Some(out))
}

/// Points from rational strings (`"inf"` for infinity) with a shared prime.
pub fn exact_points(vals: &[&str], ell: u64) -> Result<PointSet<crate::valuation::ExactQ>> {
    let pts = vals
        .iter()
        .map(|s| {
            if s.trim() == "inf" {
                Ok(ProjPoint::Infinity)
            } else {
                Ok(ProjPoint::Finite(crate::valuation::ExactQ::parse(s, ell)?))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    PointSet::new(pts, vals.iter().map(|s| s.trim().to_string()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(s: &[&str]) -> BTreeSet<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn golden_clusters_of_s() {
        let a = exact_points(&["-9", "9", "3", "12", "1", "inf"], 3).unwrap();
        let cd = compute_clusters(&a).unwrap();
        let t = cd.depth_table();
        assert_eq!(t.len(), 4);
        assert_eq!(t[&set(&["-9", "9"])], ValQ::int(2));
        assert_eq!(t[&set(&["3", "12"])], ValQ::int(2));
        assert_eq!(t[&set(&["-9", "9", "3", "12"])], ValQ::int(1));
        assert_eq!(t[&set(&["-9", "9", "3", "12", "1"])], ValQ::int(0));
    }

    #[test]
    fn golden_even_clusters_of_s_prime() {
        let a = exact_points(&["-9", "9", "27", "27/4", "1", "inf"], 3).unwrap();
        let cd = compute_clusters(&a).unwrap();
        let even: BTreeSet<_> = cd.even_clusters().into_iter().map(|c| cd.member_labels(c)).collect();
        assert_eq!(even, BTreeSet::from([set(&["27", "27/4"]), set(&["-9", "9", "27", "27/4"])]));
    }

    #[test]
    fn two_points() {
        let cd = compute_clusters(&exact_points(&["0", "1"], 5).unwrap()).unwrap();
        assert_eq!(cd.clusters.len(), 1);
        assert_eq!(cd.depth_of(0), ValQ::ZERO);
    }

    #[test]
    fn pairings() {
        let a = exact_points(&["-9", "9", "3", "12", "1", "inf"], 3).unwrap();
        let cd = compute_clusters(&a).unwrap();
        let p = pairing_from_clusters(&cd).unwrap();
        assert_eq!(p.pairs, vec![(0, 1), (2, 3), (4, 5)]);
        assert!(is_r_separated(&cd, &p, ValQ::ZERO));
        assert!(!is_r_separated(&cd, &p, ValQ::int(1_000_000)));

        // over v_3 the even cluster is {0, 9}; over v_2 it is {1, 9}
        let b = exact_points(&["0", "inf", "1", "9"], 3).unwrap();
        let p = pairing_from_clusters(&compute_clusters(&b).unwrap()).unwrap();
        assert_eq!(p.label_sets(&b.labels), BTreeSet::from([set(&["0", "9"]), set(&["1", "inf"])]));
        let b = exact_points(&["0", "inf", "1", "9"], 2).unwrap();
        let p = pairing_from_clusters(&compute_clusters(&b).unwrap()).unwrap();
        assert_eq!(p.label_sets(&b.labels), BTreeSet::from([set(&["0", "inf"]), set(&["1", "9"])]));
        assert_eq!(p.pairs, vec![(0, 1), (2, 3)]);

        // {0, 5} and {1, 6} are both even clusters of depth 1, so the classes
        // {0, 5} and {1, 6} come out as pairs
        let c = exact_points(&["0", "1", "5", "6"], 5).unwrap();
        let p = pairing_from_clusters(&compute_clusters(&c).unwrap()).unwrap();
        assert_eq!(p.label_sets(&c.labels), BTreeSet::from([set(&["0", "5"]), set(&["1", "6"])]));

        // the only even cluster is the whole set, so all four points are equivalent
        let d = exact_points(&["0", "5", "10", "1"], 5).unwrap();
        assert!(matches!(
            pairing_from_clusters(&compute_clusters(&d).unwrap()),
            Err(Error::NotClusteredInPairs(_))
        ));
    }

    #[test]
    fn separated_at_radius_one() {
        let a = exact_points(&["0", "inf", "1", "82"], 3).unwrap();
        let cd = compute_clusters(&a).unwrap();
        let p = Pairing::new(vec![(0, 1), (2, 3)], 4).unwrap();
        assert!(is_r_separated(&cd, &p, ValQ::int(1)));
        assert!(!is_r_separated(&cd, &p, ValQ::int(2)));
    }

    #[test]
    fn genus() {
        assert_eq!(genus_of_cover(2, 6).unwrap(), (Q::from_integer(2), true));
        assert_eq!(genus_of_cover(3, 4).unwrap(), (Q::from_integer(2), true));
        assert_eq!(genus_of_cover(2, 4).unwrap(), (Q::from_integer(1), true));
        assert_eq!(genus_of_cover(2, 5).unwrap(), (Q::new(3, 2), false));
    }

    #[test]
    fn json_round_trip() {
        let a = exact_points(&["-9", "9", "3", "12", "1", "inf"], 3).unwrap();
        let cd = compute_clusters(&a).unwrap();
        let back = ClusterData::from_json(&cd.to_json(), cd.labels.clone(), cd.infinity).unwrap();
        assert_eq!(back, cd);
    }
}
