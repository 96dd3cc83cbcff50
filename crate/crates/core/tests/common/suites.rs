//! Randomized suites shared by the property tests and the acceptance run.
//! Each returns the number of cases checked or a description of the first
//! failure.

use clusterpush::berktree::{clusters_from_hull, hull_from_clusters, MetricTree, TreePoint};
use clusterpush::clusters::{compute_clusters, is_r_separated, ClusterData, PointSet};
use clusterpush::projline::ProjPoint;
use clusterpush::pushforward::{push_point, pushforward_hull, PushforwardParams};
use clusterpush::valuation::{ExactQ, PadicApprox, RamQuad, Scalar, UnramQuad, ValQ, ZeroState};
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed, TestCaseError, TestRunner};
use rand::seq::SliceRandom;
use rand::Rng;

use super::{random_paired, rng};

pub type Outcome = Result<usize, String>;

fn runner(cases: u32, seed: u64) -> TestRunner {
    TestRunner::new(Config {
        cases,
        rng_seed: RngSeed::Fixed(seed),
        failure_persistence: None,
        ..Config::default()
    })
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn nonzero() -> impl Strategy<Value = (i64, i64)> {
    (prop_oneof![-100_000i64..=-1, 1i64..=100_000], 1i64..=5_000)
}

fn check(c: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if c {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

/// `x` as a capped ell-adic number agrees with the exact rational `e` to the
/// precision `x` claims.
fn agrees(x: &PadicApprox, e: &BigRational, ell: u64) -> bool {
    let ex = ExactQ::new(e.clone(), ell);
    match x.zero_state() {
        ZeroState::Zero => e == &BigRational::from_integer(0.into()),
        ZeroState::Indistinct => {
            ex.is_zero().unwrap() || ex.val().unwrap() >= x.val_at_least()
        }
        ZeroState::NonZero => {
            let Some(abs) = x.abs_prec() else { return false };
            let diff = ExactQ::new(e - x.to_rational_approx(), ell);
            x.val().unwrap() == ex.val().unwrap()
                && (diff.is_zero().unwrap() || diff.val().unwrap() >= ValQ::int(abs))
        }
    }
}

/// Ultrametric inequality, multiplicativity and inversion on exact rationals
/// and both quadratic backends, plus agreement of capped ell-adic arithmetic
/// with exact arithmetic.
pub fn valuation_laws(cases: u32, seed: u64) -> Outcome {
    let strat = (prop_oneof![Just(2u64), Just(3u64), Just(5u64), Just(7u64)], nonzero(), nonzero(), -50i64..=50, -50i64..=50);
    runner(cases, seed)
        .run(&strat, |(ell, (a, b), (c, d), s, t)| {
            let x = ExactQ::new(rat(a, b), ell);
            let y = ExactQ::new(rat(c, d), ell);
            let (vx, vy) = (x.val().unwrap(), y.val().unwrap());
            check(x.mul(&y).val().unwrap() == vx + vy, || format!("v({x}*{y})"))?;
            check(x.inv().unwrap().val().unwrap() == ValQ::ZERO - vx, || format!("v(1/{x})"))?;
            let sum = x.add(&y);
            if !sum.is_zero().unwrap() {
                let vs = sum.val().unwrap();
                check(vs >= vx.min(vy), || format!("v({x}+{y}) below the minimum"))?;
                check(vx == vy || vs == vx.min(vy), || format!("v({x}+{y}) not the minimum"))?;
            }
            let prec = 12;
            let (px, py) = (PadicApprox::from_rational(&x.q, ell, prec), PadicApprox::from_rational(&y.q, ell, prec));
            check(agrees(&px.mul(&py), &(&x.q * &y.q), ell), || format!("capped {x}*{y}"))?;
            check(agrees(&px.add(&py), &(&x.q + &y.q), ell), || format!("capped {x}+{y}"))?;
            check(agrees(&px.sub(&py), &(&x.q - &y.q), ell), || format!("capped {x}-{y}"))?;
            check(agrees(&px.inv().unwrap(), &x.q.recip(), ell), || format!("capped 1/{x}"))?;

            let r1 = RamQuad::new(rat(a, b), rat(s, 1), ell);
            let r2 = RamQuad::new(rat(c, d), rat(t, 1), ell);
            check(r1.mul(&r2).val().unwrap() == r1.val().unwrap() + r2.val().unwrap(), || format!("v({r1}*{r2})"))?;
            let u1 = UnramQuad::new(rat(a, b), rat(s, 1), ell).unwrap();
            let u2 = UnramQuad::new(rat(c, d), rat(t, 1), ell).unwrap();
            check(u1.mul(&u2).val().unwrap() == u1.val().unwrap() + u2.val().unwrap(), || format!("v({u1}*{u2})"))?;
            let w = u1.add(&u2);
            if !w.is_zero().unwrap() {
                check(w.val().unwrap() >= u1.val().unwrap().min(u2.val().unwrap()), || format!("v({u1}+{u2})"))?;
            }
            check(u1.mul(&u1.inv().unwrap()).sub(&u1.one()).is_zero().unwrap(), || format!("{u1} * 1/{u1}"))?;
            Ok(())
        })
        .map(|_| cases as usize)
        .map_err(|e| e.to_string())
}

const RADII: [(i64, i64); 6] = [(0, 1), (1, 2), (1, 1), (3, 2), (2, 1), (3, 1)];

/// The cluster, vertex and axis formulations of r-separation agree.
pub fn separation_equivalence(cases: usize, seed: u64) -> Outcome {
    let mut g = rng(seed);
    let (mut yes, mut no) = (0, 0);
    for k in 0..cases {
        let ell = [2, 3][k % 2];
        let (s, cd, pr) = random_paired(&mut g, ell);
        let t = hull_from_clusters(&cd, &pr).map_err(|e| e.to_string())?;
        let (n, d) = RADII[g.gen_range(0..RADII.len())];
        let r = ValQ::frac(n, d);
        let a = is_r_separated(&cd, &pr, r);
        let b = t.separated_check_vertices(r);
        let c = t.axes_separated(r);
        if a != b || b != c {
            return Err(format!("{:?} over v_{ell}, r = {r}: clusters {a}, vertices {b}, axes {c}", set_text(&s)));
        }
        if a {
            yes += 1;
        } else {
            no += 1;
        }
    }
    if yes == 0 || no == 0 {
        return Err(format!("degenerate sample: {yes} separated, {no} not"));
    }
    Ok(cases)
}

pub fn set_text(s: &PointSet<ExactQ>) -> Vec<String> {
    s.points.iter().map(|p| p.to_string()).collect()
}

/// Reading cluster data off the hull gives back the cluster data.
pub fn hull_roundtrip(cases: usize, seed: u64) -> Outcome {
    let mut g = rng(seed);
    for k in 0..cases {
        let ell = [2, 3, 5][k % 3];
        let (s, cd, pr) = random_paired(&mut g, ell);
        let t = hull_from_clusters(&cd, &pr).map_err(|e| e.to_string())?;
        let back = clusters_from_hull(&t, cd.depth_of(ClusterData::ROOT)).map_err(|e| e.to_string())?;
        if back.depth_table() != cd.depth_table() || back.combinatorial() != cd.combinatorial() {
            return Err(format!("{:?} over v_{ell} does not round-trip", set_text(&s)));
        }
        let t2 = MetricTree::from_json(&t.to_json()).map_err(|e| e.to_string())?;
        if t2 != t {
            return Err(format!("{:?}: tree json does not round-trip", set_text(&s)));
        }
    }
    Ok(cases)
}

fn random_point(t: &MetricTree, g: &mut impl Rng) -> TreePoint {
    let n = g.gen_range(0..t.nodes.len());
    match t.nodes[n].parent {
        None => TreePoint::at(n),
        Some(_) => {
            let quarters = (t.nodes[n].length.q() * 4).to_integer();
            TreePoint { node: n, above: ValQ::frac(g.gen_range(0..quarters.max(1)), 4) }
        }
    }
}

/// Length of the points of `[x, y]` within `r` of an axis, by midpoints of a
/// grid of eighths.
fn mu_by_grid(t: &MetricTree, x: TreePoint, y: TreePoint, r: ValQ) -> ValQ {
    let l = t.distance(x, y);
    let steps = (l.q() * 8).to_integer();
    let mut count = 0;
    for k in 0..steps {
        let m = t.point_along(x, y, ValQ::frac(2 * k + 1, 16));
        if (0..t.axes.len()).any(|i| t.distance_to_axis(m, i) <= r) {
            count += 1;
        }
    }
    ValQ::frac(count, 8)
}

/// Pushed-forward distances are `d(x, y) + (p - 1) mu(x, y)` pointwise.
pub fn dilation_law(cases: usize, seed: u64) -> Outcome {
    let mut g = rng(seed);
    let setups = [(2u64, 2u64), (3, 3), (3, 2), (5, 2)];
    let (mut done, mut attempts, mut stretched) = (0, 0, 0);
    while done < cases {
        attempts += 1;
        if attempts > 50 * cases {
            return Err(format!("only {done} separated trees in {attempts} draws"));
        }
        let (ell, p) = setups[done % setups.len()];
        let params = PushforwardParams::for_field(p, ell).unwrap();
        let (s, cd, pr) = random_paired(&mut g, ell);
        let t = hull_from_clusters(&cd, &pr).map_err(|e| e.to_string())?;
        let Ok(tb) = pushforward_hull(&t, &params, true) else { continue };
        for _ in 0..8 {
            let (x, y) = (random_point(&t, &mut g), random_point(&t, &mut g));
            let mu = t.mu(x, y, params.r());
            if mu > ValQ::ZERO && p != ell {
                stretched += 1;
            }
            let grid = mu_by_grid(&t, x, y, params.r());
            if mu != grid {
                return Err(format!("{:?} over v_{ell}: mu {mu}, grid {grid}", set_text(&s)));
            }
            let want = t.distance(x, y) + mu * (p as i64 - 1);
            let got = tb.distance(push_point(&t, &params, x), push_point(&t, &params, y));
            if want != got {
                return Err(format!("{:?} over v_{ell}, p = {p}: {x:?} {y:?} expected {want}, got {got}", set_text(&s)));
            }
        }
        done += 1;
    }
    if stretched == 0 {
        return Err("no sampled geodesic met a tame axis".into());
    }
    Ok(cases)
}

/// `v(a - b) = min(v(a), v(b)) + dist(axis(a, b), axis(0, inf))`.
pub fn axis_distance_identity(cases: usize, seed: u64) -> Outcome {
    let mut g = rng(seed);
    let mut done = 0;
    while done < cases {
        let ell = [2u64, 3, 5][done % 3];
        let pick = |g: &mut rand_chacha::ChaCha8Rng| {
            let u = [1i64, -1, 2, 3, 4, 6, 7, 11, 13].choose(g).copied().unwrap();
            let e = g.gen_range(-2..5i32);
            let l = BigInt::from(ell).pow(e.unsigned_abs());
            let q = if e >= 0 { BigRational::from_integer(l * u) } else { BigRational::new(BigInt::from(u), l) };
            ExactQ::new(q, ell)
        };
        let a = pick(&mut g);
        let b = a.add(&pick(&mut g));
        let pts = vec![
            ProjPoint::Finite(a.zero()),
            ProjPoint::Infinity,
            ProjPoint::Finite(a.clone()),
            ProjPoint::Finite(b.clone()),
        ];
        let labels = ["0", "inf", "a", "b"].map(String::from).to_vec();
        let Ok(s) = PointSet::new(pts, labels) else { continue };
        let cd = compute_clusters(&s).map_err(|e| e.to_string())?;
        let t = MetricTree::cluster_tree(&cd);
        let delta = t.path_distance(t.leaf_path(2, 3), t.leaf_path(0, 1));
        let want = a.val().unwrap().min(b.val().unwrap()) + delta;
        let got = a.sub(&b).val().unwrap();
        if want != got {
            return Err(format!("a = {a}, b = {b} over v_{ell}: v(a-b) = {got}, formula {want}"));
        }
        done += 1;
    }
    Ok(cases)
}
