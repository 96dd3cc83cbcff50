#![allow(dead_code)]

pub mod suites;

use std::path::PathBuf;

use clusterpush::clusters::{compute_clusters, pairing_from_clusters, ClusterData, Pairing, PointSet};
use clusterpush::projline::ProjPoint;
use clusterpush::valuation::ExactQ;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn q(n: i64, ell: u64) -> ExactQ {
    ExactQ::from_i64(n, ell)
}

fn unit(rng: &mut ChaCha8Rng, ell: u64, bound: i64) -> i64 {
    loop {
        let u = rng.gen_range(-bound..=bound);
        if u != 0 && u % ell as i64 != 0 {
            return u;
        }
    }
}

fn labelled(pts: Vec<ProjPoint<ExactQ>>) -> Option<PointSet<ExactQ>> {
    let labels = (0..pts.len()).map(|i| format!("x{i}")).collect();
    PointSet::new(pts, labels).ok()
}

/// `n` distinct finite points `u * ell^e` with small units and exponents.
pub fn random_set(rng: &mut ChaCha8Rng, ell: u64, n: usize, with_infinity: bool) -> PointSet<ExactQ> {
    loop {
        let mut pts: Vec<ProjPoint<ExactQ>> = Vec::new();
        let finite = if with_infinity { n - 1 } else { n };
        for _ in 0..finite {
            let e = rng.gen_range(0..4u32);
            let x = if rng.gen_bool(0.1) { 0 } else { unit(rng, ell, 40) * (ell as i64).pow(e) };
            pts.push(ProjPoint::Finite(q(x, ell)));
        }
        if with_infinity {
            pts.push(ProjPoint::Infinity);
        }
        if let Some(s) = labelled(pts) {
            return s;
        }
    }
}

/// A random set clustered in pairs with infinity among its points, built from
/// nested pairs `c, c + ell^k u`, together with its clusters and pairing.
pub fn random_paired(rng: &mut ChaCha8Rng, ell: u64) -> (PointSet<ExactQ>, ClusterData, Pairing) {
    loop {
        let pairs = rng.gen_range(2..=4);
        let mut vals: Vec<i64> = Vec::new();
        for _ in 0..pairs - 1 {
            let c = unit(rng, ell, 30) * (ell as i64).pow(rng.gen_range(0..3));
            let k = rng.gen_range(1..5u32);
            vals.push(c);
            vals.push(c + unit(rng, ell, 5) * (ell as i64).pow(k));
        }
        vals.push(unit(rng, ell, 30) * (ell as i64).pow(rng.gen_range(0..2)));
        let mut pts: Vec<ProjPoint<ExactQ>> = vals.iter().map(|&x| ProjPoint::Finite(q(x, ell))).collect();
        pts.push(ProjPoint::Infinity);
        let Some(s) = labelled(pts) else { continue };
        let Ok(cd) = compute_clusters(&s) else { continue };
        let Ok(pr) = pairing_from_clusters(&cd) else { continue };
        return (s, cd, pr);
    }
}

pub struct Fixture {
    pub ell: u64,
    pub p: u64,
    pub set: PointSet<ExactQ>,
    pub pairing: Option<Pairing>,
    pub optimal: bool,
    pub precision: Option<u32>,
    pub max_words: usize,
}

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture_names() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(fixture_dir())
        .unwrap()
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| n.ends_with(".json"))
        .collect();
    names.sort();
    names
}

pub fn fixture(name: &str) -> Fixture {
    let text = std::fs::read_to_string(fixture_dir().join(name)).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    let ell = v["prime_ell"].as_u64().unwrap();
    let mut labels = Vec::new();
    let mut pts = Vec::new();
    for e in v["points"].as_array().unwrap() {
        labels.push(e["label"].as_str().unwrap().to_string());
        let s = e["value"].as_str().unwrap();
        pts.push(if s == "inf" { ProjPoint::Infinity } else { ProjPoint::Finite(ExactQ::parse(s, ell).unwrap()) });
    }
    let pairing = v.get("pairing").and_then(Value::as_array).map(|arr| {
        let pr: Vec<(String, String)> = arr
            .iter()
            .map(|x| (x[0].as_str().unwrap().to_string(), x[1].as_str().unwrap().to_string()))
            .collect();
        Pairing::from_labels(&pr, &labels).unwrap()
    });
    Fixture {
        ell,
        p: v["p"].as_u64().unwrap(),
        set: PointSet::new(pts, labels).unwrap(),
        pairing,
        optimal: v.get("optimal").and_then(Value::as_bool).unwrap_or(false),
        precision: v.get("precision").and_then(Value::as_u64).map(|n| n as u32),
        max_words: v.get("max_words").and_then(Value::as_u64).unwrap_or(16) as usize,
    }
}

impl Fixture {
    pub fn pairing(&self) -> Pairing {
        self.pairing.clone().unwrap_or_else(|| pairing_from_clusters(&compute_clusters(&self.set).unwrap()).unwrap())
    }
}

pub struct OracleOut {
    pub clusters: ClusterData,
    pub truncation_length: usize,
    pub floor: clusterpush::valuation::ValQ,
}

fn finish<O>(b: clusterpush::schottky::BranchPoints<O>) -> OracleOut {
    OracleOut { clusters: b.clusters, truncation_length: b.truncation_length, floor: b.floor }
}

/// The oracle as the command line runs it: exact or capped arithmetic for
/// `p = 2`, capped ell-adic arithmetic with a Hensel-lifted root otherwise.
pub fn run_oracle(fx: &Fixture, min_len: usize) -> clusterpush::error::Result<OracleOut> {
    use clusterpush::schottky::{branch_points_numeric, Capped, Native, OracleOptions, WhittakerGroup};
    use clusterpush::valuation::{hensel_root_of_unity, PadicApprox};
    let pairing = fx.pairing();
    let opts = OracleOptions { max_len: fx.max_words, min_len, ..OracleOptions::default() };
    if fx.p == 2 {
        let g = WhittakerGroup::new(&fx.set, &pairing, 2, ExactQ::from_i64(-1, fx.ell))?;
        return match fx.precision {
            None => branch_points_numeric(&fx.set, &g, &opts, Native).map(finish),
            Some(n) => branch_points_numeric(&fx.set, &g, &opts, Capped { prec: n }).map(finish),
        };
    }
    let n = fx.precision.unwrap_or(30);
    let lifted = fx
        .set
        .points
        .iter()
        .map(|p| match p {
            ProjPoint::Infinity => ProjPoint::Infinity,
            ProjPoint::Finite(x) => ProjPoint::Finite(PadicApprox::from_rational(&x.q, fx.ell, n)),
        })
        .collect();
    let ls = PointSet::new(lifted, fx.set.labels.clone())?;
    let g = WhittakerGroup::new(&ls, &pairing, fx.p, hensel_root_of_unity(fx.p, fx.ell, n)?)?;
    branch_points_numeric(&ls, &g, &opts, Capped { prec: n }).map(finish)
}
