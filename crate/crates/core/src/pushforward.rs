//! Predicted hull and cluster data of the branch points: the closed
//! `v(p)/(p-1)`-neighbourhoods of the axes are stretched by a factor `p`.

use num_rational::Ratio;

use crate::berktree::{clusters_from_hull, hull_from_clusters, MetricTree, TreePoint};
use crate::clusters::{compute_clusters, ClusterData, Pairing, PointSet};
use crate::error::{Error, Result};
use crate::valuation::{is_prime, Scalar, ValQ};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PushforwardParams {
    pub p: u64,
    pub vp: ValQ,
}

impl PushforwardParams {
    pub fn new(p: u64, vp: ValQ) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::Invalid(format!("p = {p} is not a prime")));
        }
        if vp.is_inf() || vp < ValQ::ZERO {
            return Err(Error::Invalid(format!("v(p) = {vp} must be finite and >= 0")));
        }
        Ok(PushforwardParams { p, vp })
    }

    /// `v(p)` is 1 when `p` is the residue characteristic and 0 otherwise.
    pub fn for_field(p: u64, ell: u64) -> Result<Self> {
        PushforwardParams::new(p, ValQ::int(i64::from(p == ell)))
    }

    pub fn r(&self) -> ValQ {
        self.vp.scale(Ratio::new(1, self.p as i64 - 1))
    }

    fn stretch(&self) -> i64 {
        self.p as i64 - 1
    }
}

/// Genus-one sets clustered in pairs are optimal, so the flag only has to be
/// supplied from genus two on.
pub fn optimality_asserted(flag: bool, pairs: usize) -> bool {
    flag || pairs <= 2
}

pub fn image_label(l: &str) -> String {
    format!("pi({l})")
}

pub fn pushforward_hull(t: &MetricTree, params: &PushforwardParams, optimal: bool) -> Result<MetricTree> {
    if !optimal {
        return Err(Error::OptimalityNotAsserted);
    }
    let r = params.r();
    if !t.separated_check_vertices(r) {
        return Err(Error::NotSeparated(r.to_string()));
    }
    let mut out = t.clone();
    for (n, node) in t.nodes.iter().enumerate() {
        if let Some(p) = node.parent {
            let mu = t.mu(TreePoint::at(n), TreePoint::at(p), r);
            out.nodes[n].length = node.length + mu * params.stretch();
        }
    }
    out.labels = t.labels.iter().map(|l| image_label(l)).collect();
    Ok(out)
}

/// Image of a skeleton point of `t` in the pushed-forward tree.
pub fn push_point(t: &MetricTree, params: &PushforwardParams, x: TreePoint) -> TreePoint {
    let mu = t.mu(TreePoint::at(x.node), x, params.r());
    TreePoint { node: x.node, above: x.above + mu * params.stretch() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpecialCase {
    Odd,
    EvenTame,
    EvenBetweenDistinguished,
}

#[derive(Clone, Debug)]
pub struct CaseCheck {
    pub cluster: usize,
    pub case: SpecialCase,
    pub expected: ValQ,
    pub got: ValQ,
}

#[derive(Clone, Debug)]
pub struct Prediction {
    pub clusters: ClusterData,
    pub tree: MetricTree,
    pub source: ClusterData,
    pub checks: Vec<CaseCheck>,
}

pub fn predict_branch_clusters<F: Scalar>(
    s: &PointSet<F>,
    pairing: &Pairing,
    params: &PushforwardParams,
    optimal: bool,
) -> Result<Prediction> {
    let inf = s.infinity().ok_or(Error::NoInfinityInS)?;
    if !pairing.pairs.iter().any(|&(_, b)| b == inf) {
        return Err(Error::NoInfinityInS);
    }
    let cd = compute_clusters(s)?;
    let t = hull_from_clusters(&cd, pairing)?;
    let tb = pushforward_hull(&t, params, optimal)?;
    let clusters = clusters_from_hull(&tb, cd.depth_of(ClusterData::ROOT))?;
    let checks = special_cases(&cd, &clusters, params)?;
    Ok(Prediction { clusters, tree: tb, source: cd, checks })
}

/// Closed-form relative depths for the clusters where they are known, checked
/// against the generic computation.
fn special_cases(cd: &ClusterData, out: &ClusterData, params: &PushforwardParams) -> Result<Vec<CaseCheck>> {
    let mut checks = Vec::new();
    for c in 0..cd.clusters.len() {
        let Some(delta) = cd.relative_depth(c) else { continue };
        let got = out.relative_depth(c).expect("same shape");
        let parent = cd.clusters[c].parent.unwrap();
        let mut cases = Vec::new();
        if !cd.is_even(c) {
            cases.push((SpecialCase::Odd, delta * params.p as i64));
        } else {
            if params.vp == ValQ::ZERO {
                cases.push((SpecialCase::EvenTame, delta));
            }
            if !cd.is_even_union(c) && !cd.is_even_union(parent) {
                cases.push((SpecialCase::EvenBetweenDistinguished, delta + params.vp * 2));
            }
        }
        for (case, expected) in cases {
            if expected != got {
                return Err(Error::Internal(format!(
                    "cluster {:?}: {case:?} predicts {expected}, hull gives {got}",
                    cd.member_labels(c)
                )));
            }
            checks.push(CaseCheck { cluster: c, case, expected, got });
        }
    }
    Ok(checks)
}

/// The branch points are clustered in `p v(p)/(p-1)`-separated pairs.
pub fn check_branch_separation(tb: &MetricTree, params: &PushforwardParams) -> bool {
    tb.separated_check_vertices(params.r() * params.p as i64)
}
