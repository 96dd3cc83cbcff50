//! Reduced words in a free product of cyclic groups of order p, truncated
//! theta functions over the Whittaker group and its Schottky subgroup, and the
//! branch points obtained from them.

use std::fmt;

use serde::Serialize;

use crate::berktree::{hull_from_clusters, MetricTree, TreePoint};
use crate::clusters::{compute_clusters, ClusterData, Pairing, PointSet};
use crate::error::{Error, Result};
use crate::projline::{order_p_fixing, Mobius, ProjPoint};
use crate::pushforward::image_label;
use crate::valuation::{ExactQ, PadicApprox, RamQuad, Scalar, UnramQuad, ValQ};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ReducedWord {
    /// `(generator index, exponent in 1..p)`, in written order.
    pub syllables: Vec<(usize, u64)>,
}

impl ReducedWord {
    pub fn identity() -> Self {
        ReducedWord::default()
    }

    pub fn len(&self) -> usize {
        self.syllables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.syllables.is_empty()
    }

    pub fn total_exponent(&self) -> u64 {
        self.syllables.iter().map(|s| s.1).sum()
    }

    pub fn in_gamma(&self, p: u64) -> bool {
        self.total_exponent() % p == 0
    }

    fn extended(&self, i: usize, n: u64) -> ReducedWord {
        let mut s = self.syllables.clone();
        s.push((i, n));
        ReducedWord { syllables: s }
    }
}

impl fmt::Display for ReducedWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.syllables.is_empty() {
            return f.write_str("1");
        }
        let parts: Vec<String> = self
            .syllables
            .iter()
            .map(|&(i, n)| if n == 1 { format!("s{i}") } else { format!("s{i}^{n}") })
            .collect();
        f.write_str(&parts.join(" "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WordFilter {
    All,
    Gamma,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Subgroup {
    /// The Schottky subgroup: total exponent divisible by p.
    Gamma,
    Gamma0,
}

impl Subgroup {
    fn admits(self, exp: u64, p: u64) -> bool {
        self == Subgroup::Gamma0 || exp % p == 0
    }
}

/// Every reduced word of length at most `max_len` on `gens` generators of
/// order `p`, by length and then lexicographically.
pub fn enumerate_words(gens: usize, p: u64, max_len: usize, filter: WordFilter) -> Vec<ReducedWord> {
    let mut out = vec![ReducedWord::identity()];
    let mut level = vec![ReducedWord::identity()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &level {
            let last = w.syllables.last().map(|s| s.0);
            for i in (0..gens).filter(|&i| Some(i) != last) {
                for n in 1..p {
                    next.push(w.extended(i, n));
                }
            }
        }
        out.extend(next.iter().cloned());
        level = next;
    }
    if filter == WordFilter::Gamma {
        out.retain(|w| w.in_gamma(p));
    }
    out
}

/// Number of reduced words of length exactly `t`.
pub fn word_count(gens: usize, p: u64, t: usize) -> u64 {
    if t == 0 {
        return 1;
    }
    let k = p - 1;
    gens as u64 * k * (((gens as u64 - 1) * k).pow(t as u32 - 1))
}

#[derive(Clone, Debug)]
pub struct WhittakerGroup<F> {
    pub p: u64,
    pub generators: Vec<Mobius<F>>,
    pub fixed_pairs: Pairing,
    pub fixed_points: PointSet<F>,
    pub zeta: F,
    powers: Vec<Vec<Mobius<F>>>,
    /// Per-length step of the bound `t * min dist(hat Lambda_l, hat Lambda_m)`.
    theory_step: Option<ValQ>,
}

impl<F: Scalar> WhittakerGroup<F> {
    /// Generators `s_i` of order `p` fixing the pairs of `s`.
    pub fn new(s: &PointSet<F>, pairing: &Pairing, p: u64, zeta: F) -> Result<Self> {
        if pairing.pairs.iter().flat_map(|&(a, b)| [a, b]).any(|i| i >= s.len()) || 2 * pairing.len() != s.len() {
            return Err(Error::SizeMismatch(2 * pairing.len(), s.len()));
        }
        let one = zeta.one();
        let mut acc = one.clone();
        for k in 1..p {
            acc = acc.mul(&zeta);
            if k < p && acc.sub(&one).is_zero()? {
                return Err(Error::Invalid(format!("zeta has order {k}, not {p}")));
            }
        }
        let mut generators = Vec::new();
        for &(a, b) in &pairing.pairs {
            generators.push(order_p_fixing(&s.points[a], &s.points[b], &zeta)?);
        }
        let powers = generators
            .iter()
            .map(|g| (1..p).map(|n| g.pow(n as u32)).collect())
            .collect();
        let vp = ValQ::int(i64::from(p == zeta.ell()));
        let r = vp.scale(num_rational::Ratio::new(1, p as i64 - 1));
        let theory_step = compute_clusters(s)
            .and_then(|cd| hull_from_clusters(&cd, pairing))
            .ok()
            .and_then(|t| min_axis_gap(&t, r));
        Ok(WhittakerGroup {
            p,
            generators,
            fixed_pairs: pairing.clone(),
            fixed_points: s.clone(),
            zeta,
            powers,
            theory_step,
        })
    }

    pub fn genus(&self) -> usize {
        self.generators.len() - 1
    }

    pub fn words(&self, max_len: usize, filter: WordFilter) -> Vec<ReducedWord> {
        enumerate_words(self.generators.len(), self.p, max_len, filter)
    }

    pub fn word_matrix(&self, w: &ReducedWord) -> Mobius<F> {
        let mut m = Mobius::identity(&self.zeta);
        for &(i, n) in &w.syllables {
            m = m.compose(&self.powers[i][n as usize - 1]);
        }
        m
    }

    /// `L * min dist(hat Lambda_l, hat Lambda_m)`, where available.
    pub fn theoretical_floor(&self, len: usize) -> Option<ValQ> {
        self.theory_step.map(|s| s * len as i64)
    }

    pub fn pair_points(&self, i: usize) -> (ProjPoint<F>, ProjPoint<F>) {
        let (a, b) = self.fixed_pairs.pairs[i];
        (self.fixed_points.points[a].clone(), self.fixed_points.points[b].clone())
    }
}

fn min_axis_gap(t: &MetricTree, r: ValQ) -> Option<ValQ> {
    let n = t.axes.len();
    let mut best: Option<ValQ> = None;
    for i in 0..n {
        for j in i + 1..n {
            let d = t.axis_distance(i, j);
            let d = if d > r * 2 { d - r * 2 } else { ValQ::ZERO };
            best = Some(best.map_or(d, |b| b.min(d)));
        }
    }
    best
}

/// How terms of the product are carried: in the scalar type itself, or as
/// capped-precision ell-adic numbers.
pub trait Accumulator<F: Scalar>: Clone + Send + Sync {
    type Out: Scalar;
    fn lift(&self, x: &F) -> Self::Out;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Native;

impl<F: Scalar> Accumulator<F> for Native {
    type Out = F;
    fn lift(&self, x: &F) -> F {
        x.clone()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Capped {
    pub prec: u32,
}

impl Accumulator<ExactQ> for Capped {
    type Out = PadicApprox;
    fn lift(&self, x: &ExactQ) -> PadicApprox {
        PadicApprox::from_rational(&x.q, x.ell, self.prec)
    }
}

impl Accumulator<PadicApprox> for Capped {
    type Out = PadicApprox;
    fn lift(&self, x: &PadicApprox) -> PadicApprox {
        x.clone()
    }
}

struct Entry<F> {
    word: ReducedWord,
    m: Mobius<F>,
    exp: u64,
}

#[derive(Clone, Debug)]
enum Slot<O> {
    Zero,
    Pole,
    Val { num: O, den: O },
}

enum Term<F> {
    One,
    Zero,
    Ratio { num: F, den: F },
}

/// `(z - g(a)) / (z - g(b))`, a finite numerator or denominator that meets
/// infinity being replaced by 1.
fn term<F: Scalar>(z: &ProjPoint<F>, ga: &ProjPoint<F>, gb: &ProjPoint<F>, w: &ReducedWord) -> Result<Term<F>> {
    use ProjPoint::*;
    let pole = || Error::PoleHit(format!("z = {z} equals the image of b under {w}"));
    match (z, ga, gb) {
        (Infinity, Infinity, _) => Ok(Term::Zero),
        (Infinity, _, Infinity) => Err(pole()),
        (Infinity, _, _) => Ok(Term::One),
        (Finite(z), ga, gb) => {
            let num = match ga {
                Infinity => None,
                Finite(x) => Some(z.sub(x)),
            };
            let den = match gb {
                Infinity => None,
                Finite(x) => Some(z.sub(x)),
            };
            if let Some(d) = &den {
                if d.is_zero()? {
                    return Err(pole());
                }
            }
            if let Some(n) = &num {
                if n.is_zero()? {
                    return Ok(Term::Zero);
                }
            }
            let one = z.one();
            Ok(Term::Ratio { num: num.unwrap_or_else(|| one.clone()), den: den.unwrap_or(one) })
        }
    }
}

/// Partial product over one block of words, for each input point.
struct Partial<O> {
    slots: Vec<Option<Slot<O>>>,
    floors: Vec<ValQ>,
    any_admitted: bool,
}

type Level<F, O> = (Vec<Entry<F>>, Partial<O>);

/// Theta products `prod (z - g(a)) / (z - g(b))` for several inputs `z` at
/// once, extended one word length at a time.
pub struct ThetaRun<'g, F: Scalar, A: Accumulator<F>> {
    group: &'g WhittakerGroup<F>,
    acc: A,
    sub: Subgroup,
    a: ProjPoint<F>,
    b: ProjPoint<F>,
    zs: Vec<ProjPoint<F>>,
    /// Words of the current length, grouped by first generator.
    frontier: Vec<Vec<Entry<F>>>,
    level: usize,
    slots: Vec<Slot<A::Out>>,
    floors: Vec<ValQ>,
    words_used: usize,
    pub parallel: bool,
}

impl<'g, F: Scalar, A: Accumulator<F>> ThetaRun<'g, F, A> {
    /// Starts with the identity word, so the run is at length 0.
    pub fn new(
        group: &'g WhittakerGroup<F>,
        sub: Subgroup,
        a: ProjPoint<F>,
        b: ProjPoint<F>,
        zs: Vec<ProjPoint<F>>,
        acc: A,
    ) -> Result<Self> {
        if a.same(&b)? {
            return Err(Error::DegenerateFixedPoints);
        }
        let one = acc.lift(&group.zeta.one());
        let mut slots = Vec::new();
        for z in &zs {
            slots.push(if z.same(&a)? {
                Slot::Zero
            } else if z.same(&b)? {
                Slot::Pole
            } else {
                Slot::Val { num: one.clone(), den: one.clone() }
            });
        }
        let id = Entry { word: ReducedWord::identity(), m: Mobius::identity(&group.zeta), exp: 0 };
        let mut run = ThetaRun {
            group,
            acc,
            sub,
            a,
            b,
            floors: vec![ValQ::Inf; zs.len()],
            zs,
            frontier: Vec::new(),
            level: 0,
            slots,
            words_used: 0,
            parallel: false,
        };
        let part = run.block(std::slice::from_ref(&id))?;
        run.absorb(vec![part])?;
        run.frontier = vec![vec![id]];
        run.words_used = 1;
        Ok(run)
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn words_used(&self) -> usize {
        self.words_used
    }

    fn block(&self, entries: &[Entry<F>]) -> Result<Partial<A::Out>> {
        let mut slots: Vec<Option<Slot<A::Out>>> = vec![None; self.zs.len()];
        let mut floors = vec![ValQ::Inf; self.zs.len()];
        let mut any_admitted = false;
        for e in entries {
            if !self.sub.admits(e.exp, self.group.p) {
                continue;
            }
            any_admitted = true;
            let ga = e.m.apply(&self.a)?;
            let gb = e.m.apply(&self.b)?;
            for (k, z) in self.zs.iter().enumerate() {
                if !matches!(self.slots[k], Slot::Val { .. }) {
                    continue;
                }
                if matches!(slots[k], Some(Slot::Zero)) {
                    continue;
                }
                match term(z, &ga, &gb, &e.word)? {
                    Term::One => {}
                    Term::Zero => {
                        slots[k] = Some(Slot::Zero);
                        floors[k] = ValQ::Inf;
                    }
                    Term::Ratio { num, den } => {
                        let gap = num.sub(&den).val_at_least() - den.val()?;
                        floors[k] = floors[k].min(gap);
                        let (n, d) = (self.acc.lift(&num), self.acc.lift(&den));
                        slots[k] = Some(match slots[k].take() {
                            Some(Slot::Val { num, den }) => Slot::Val { num: num.mul(&n), den: den.mul(&d) },
                            _ => Slot::Val { num: n, den: d },
                        });
                    }
                }
            }
        }
        Ok(Partial { slots, floors, any_admitted })
    }

    fn absorb(&mut self, parts: Vec<Partial<A::Out>>) -> Result<()> {
        let mut admitted = false;
        let mut floors = vec![ValQ::Inf; self.zs.len()];
        for part in parts {
            admitted |= part.any_admitted;
            for (k, s) in part.slots.into_iter().enumerate() {
                floors[k] = floors[k].min(part.floors[k]);
                let Some(s) = s else { continue };
                self.slots[k] = match (std::mem::replace(&mut self.slots[k], Slot::Pole), s) {
                    (Slot::Val { num, den }, Slot::Val { num: n, den: d }) => {
                        Slot::Val { num: num.mul(&n), den: den.mul(&d) }
                    }
                    (Slot::Val { .. }, Slot::Zero) | (Slot::Zero, _) => Slot::Zero,
                    (old, _) => old,
                };
            }
        }
        if admitted {
            for (k, f) in floors.into_iter().enumerate() {
                self.floors[k] = if matches!(self.slots[k], Slot::Val { .. }) { f } else { ValQ::Inf };
            }
        }
        Ok(())
    }

    fn extend(&self, parents: &[Entry<F>]) -> Vec<Entry<F>> {
        let g = self.group;
        let mut out = Vec::new();
        for e in parents {
            let last = e.word.syllables.last().map(|s| s.0);
            for i in (0..g.generators.len()).filter(|&i| Some(i) != last) {
                for n in 1..g.p {
                    out.push(Entry {
                        word: e.word.extended(i, n),
                        m: e.m.compose(&g.powers[i][n as usize - 1]),
                        exp: (e.exp + n) % g.p,
                    });
                }
            }
        }
        out
    }

    fn step_group(&self, parents: &[Entry<F>]) -> Result<Level<F, A::Out>> {
        let next = self.extend(parents);
        let part = self.block(&next)?;
        Ok((next, part))
    }

    /// Adds the words of the next length.
    pub fn advance(&mut self) -> Result<()> {
        let groups: Vec<Vec<Entry<F>>> = if self.level == 0 {
            let mut first: Vec<Vec<Entry<F>>> = (0..self.group.generators.len()).map(|_| Vec::new()).collect();
            for e in self.extend(&self.frontier[0]) {
                first[e.word.syllables[0].0].push(e);
            }
            first
        } else {
            std::mem::take(&mut self.frontier)
        };
        let results: Vec<Result<Level<F, A::Out>>> = if self.level == 0 {
            groups
                .into_iter()
                .map(|g| {
                    let part = self.block(&g)?;
                    Ok((g, part))
                })
                .collect()
        } else if self.parallel {
            let this = &*self;
            std::thread::scope(|sc| {
                let handles: Vec<_> = groups.iter().map(|g| sc.spawn(move || this.step_group(g))).collect();
                handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
            })
        } else {
            groups.iter().map(|g| self.step_group(g)).collect()
        };
        let mut frontier = Vec::new();
        let mut parts = Vec::new();
        for r in results {
            let (next, part) = r?;
            self.words_used += next.iter().filter(|e| self.sub.admits(e.exp, self.group.p)).count();
            frontier.push(next);
            parts.push(part);
        }
        self.absorb(parts)?;
        self.frontier = frontier;
        self.level += 1;
        Ok(())
    }

    pub fn advance_to(&mut self, len: usize) -> Result<()> {
        while self.level < len {
            self.advance()?;
        }
        Ok(())
    }

    /// Minimum of `v(term - 1)` over the admitted words of the greatest length
    /// reached so far, per input.
    pub fn empirical_floors(&self) -> &[ValQ] {
        &self.floors
    }

    pub fn values(&self) -> Result<Vec<ProjPoint<A::Out>>> {
        self.slots
            .iter()
            .map(|s| match s {
                Slot::Zero => Ok(ProjPoint::Finite(self.acc.lift(&self.group.zeta.zero()))),
                Slot::Pole => Ok(ProjPoint::Infinity),
                Slot::Val { num, den } => Ok(ProjPoint::Finite(num.div(den)?)),
            })
            .collect()
    }

    pub fn result(&self, k: usize) -> Result<ThetaResult<A::Out>> {
        let empirical = self.floors[k];
        let theoretical = self.group.theoretical_floor(self.level);
        Ok(ThetaResult {
            value: self.values()?.swap_remove(k),
            truncation_length: self.level,
            tail_valuation_floor: theoretical.map_or(empirical, |t| t.max(empirical)),
            empirical_floor: empirical,
            theoretical_floor: theoretical,
            words: self.words_used,
        })
    }
}

#[derive(Clone, Debug)]
pub struct ThetaResult<O> {
    pub value: ProjPoint<O>,
    pub truncation_length: usize,
    /// Larger of the empirical and theoretical floors.
    pub tail_valuation_floor: ValQ,
    pub empirical_floor: ValQ,
    pub theoretical_floor: Option<ValQ>,
    pub words: usize,
}

impl<O: Scalar> ThetaResult<O> {
    /// `v(value - 1)`, or `None` when the value is 0 or infinity.
    pub fn val_minus_one(&self) -> Result<Option<ValQ>> {
        match &self.value {
            ProjPoint::Finite(x) if !x.is_zero()? => Ok(Some(x.sub(&x.one()).val()?)),
            _ => Ok(None),
        }
    }

    /// Whether `v(value - 1) = target` is certified by the empirical floor:
    /// the omitted factor moves the value by at least `v(value) + floor`.
    pub fn certifies(&self, target: ValQ) -> Result<bool> {
        let ProjPoint::Finite(x) = &self.value else { return Ok(false) };
        if x.is_zero()? {
            return Ok(false);
        }
        Ok(self.val_minus_one()? == Some(target) && x.val()? + self.empirical_floor > target)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn theta<F: Scalar, A: Accumulator<F>>(
    g: &WhittakerGroup<F>,
    sub: Subgroup,
    a: &ProjPoint<F>,
    b: &ProjPoint<F>,
    z: &ProjPoint<F>,
    len: usize,
    acc: A,
) -> Result<ThetaResult<A::Out>> {
    let mut run = ThetaRun::new(g, sub, a.clone(), b.clone(), vec![z.clone()], acc)?;
    run.advance_to(len)?;
    run.result(0)
}

#[derive(Clone, Debug, Serialize)]
pub struct ConsistencyReport {
    pub direct: String,
    pub power: String,
    pub discrepancy_valuation: ValQ,
    /// `v(direct) + min(floor of direct, floor of the Gamma product)`.
    pub bound: ValQ,
    pub ok: bool,
}

/// Compares the truncated product over the Whittaker group with the `p`-th
/// power of the truncated product over the Schottky subgroup.
pub fn theta_gamma0_consistency<F: Scalar, A: Accumulator<F>>(
    g: &WhittakerGroup<F>,
    a: &ProjPoint<F>,
    b: &ProjPoint<F>,
    z: &ProjPoint<F>,
    len: usize,
    acc: A,
) -> Result<ConsistencyReport> {
    let direct = theta(g, Subgroup::Gamma0, a, b, z, len, acc.clone())?;
    let sub = theta(g, Subgroup::Gamma, a, b, z, len, acc)?;
    let (ProjPoint::Finite(d), ProjPoint::Finite(s)) = (&direct.value, &sub.value) else {
        let same = direct.value.is_infinity() && sub.value.is_infinity();
        return Ok(ConsistencyReport {
            direct: direct.value.to_string(),
            power: sub.value.to_string(),
            discrepancy_valuation: if same { ValQ::Inf } else { ValQ::ZERO },
            bound: ValQ::Inf,
            ok: same,
        });
    };
    let pw = s.pow(g.p as u32);
    let disc = d.sub(&pw).val_at_least();
    let base = if d.is_zero()? { ValQ::Inf } else { d.val()? };
    let bound = base + direct.empirical_floor.min(sub.empirical_floor);
    Ok(ConsistencyReport {
        direct: d.to_string(),
        power: pw.to_string(),
        discrepancy_valuation: disc,
        bound,
        ok: disc > bound || disc == ValQ::Inf,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelLog {
    pub length: usize,
    pub words: usize,
    pub floor: ValQ,
    pub stable: bool,
    pub separated: bool,
}

#[derive(Clone, Debug)]
pub struct BranchPoints<O> {
    pub points: PointSet<O>,
    pub clusters: ClusterData,
    pub truncation_length: usize,
    pub floor: ValQ,
    pub log: Vec<LevelLog>,
    /// The pair of `S` sent to 0 and infinity.
    pub pair_index: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct OracleOptions {
    pub max_len: usize,
    /// Length below which the result is not accepted even if settled.
    pub min_len: usize,
    pub pair_index: Option<usize>,
    pub parallel: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { max_len: 16, min_len: 0, pair_index: None, parallel: false }
    }
}

/// The pair containing infinity if there is one, else the first pair.
pub fn default_pair_index<F: Scalar>(s: &PointSet<F>, pairing: &Pairing) -> usize {
    s.infinity()
        .map(|i| pairing.pair_of(i))
        .unwrap_or(0)
}

fn separated_from_floor<O: Scalar>(pts: &PointSet<O>, floor: ValQ) -> Result<bool> {
    let fin: Vec<&O> = pts.points.iter().filter_map(|p| p.finite()).collect();
    for i in 0..fin.len() {
        for j in i + 1..fin.len() {
            let low = fin[i].val()?.min(fin[j].val()?);
            if fin[i].sub(fin[j]).val()? >= floor + low {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Images of `s` under the theta function of the chosen pair over the
/// Whittaker group, oriented so that a point at infinity stays there.
/// Truncation stops once the cluster data has settled: unchanged from the
/// previous length, with every pairwise valuation below the empirical tail
/// floor. This stopping rule is a heuristic.
pub fn branch_points_numeric<F: Scalar, A: Accumulator<F>>(
    s: &PointSet<F>,
    g: &WhittakerGroup<F>,
    opts: &OracleOptions,
    acc: A,
) -> Result<BranchPoints<A::Out>> {
    let pi = opts.pair_index.unwrap_or_else(|| default_pair_index(s, &g.fixed_pairs));
    if pi >= g.fixed_pairs.len() {
        return Err(Error::Invalid(format!("pair index {pi} out of range")));
    }
    let (a, b) = g.pair_points(pi);
    let (a, b) = if a.is_infinity() { (b, a) } else { (a, b) };
    let labels: Vec<String> = s.labels.iter().map(|l| image_label(l)).collect();
    let mut run = ThetaRun::new(g, Subgroup::Gamma0, a, b, s.points.clone(), acc)?;
    run.parallel = opts.parallel;
    let mut log = Vec::new();
    let mut prev: Option<ClusterData> = None;
    loop {
        let pts = PointSet::new(run.values()?, labels.clone())?;
        let cd = compute_clusters(&pts)?;
        let floor = run.empirical_floors().iter().copied().min().unwrap_or(ValQ::Inf);
        let stable = prev
            .as_ref()
            .is_some_and(|p| p.combinatorial() == cd.combinatorial() && p.relative_table() == cd.relative_table());
        let separated = separated_from_floor(&pts, floor)?;
        log.push(LevelLog { length: run.level(), words: run.words_used(), floor, stable, separated });
        if stable && separated && run.level() >= opts.min_len {
            return Ok(BranchPoints {
                points: pts,
                clusters: cd,
                truncation_length: run.level(),
                floor,
                log,
                pair_index: pi,
            });
        }
        if run.level() >= opts.max_len {
            return Err(Error::NonConvergence(opts.max_len));
        }
        prev = Some(cd);
        run.advance()?;
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SegmentSample {
    pub d: ValQ,
    pub point: String,
    pub length: usize,
    pub theta_val: Option<ValQ>,
    pub theta_expected: ValQ,
    pub theta0_val: Option<ValQ>,
    pub theta0_expected: ValQ,
    /// Residual of `1 + p lambda / (1 - a^p)` lies above the main term.
    pub approx_general: bool,
    /// Residual of `1 + lambda / (1 - a)`, checked off the neighbourhood of
    /// the axis through 0 and infinity.
    pub approx_better: Option<bool>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SegmentReport {
    pub lambda_val: ValQ,
    pub vp: ValQ,
    pub samples: Vec<SegmentSample>,
}

impl SegmentReport {
    pub fn all_pass(&self) -> bool {
        self.samples.iter().all(|s| s.pass)
    }
}

/// Expected `v(theta(a) - 1)` over the Schottky subgroup at `v(a - 1) = d`.
pub fn segment_gamma(vp: ValQ, vl: ValQ, p: u64, d: ValQ) -> ValQ {
    let r = vp.scale(num_rational::Ratio::new(1, p as i64 - 1));
    if d <= r {
        vp + vl - d * p as i64
    } else {
        vl - d
    }
}

/// Expected `v(theta(a) - 1)` over the Whittaker group at `v(a - 1) = d`.
pub fn segment_gamma0(vp: ValQ, vl: ValQ, p: u64, d: ValQ) -> ValQ {
    let r = vp.scale(num_rational::Ratio::new(1, p as i64 - 1));
    if d <= r {
        vp * 2 + vl - d * p as i64
    } else if d <= vl - r {
        vp + vl - d
    } else {
        vl * p as i64 - d * p as i64
    }
}

fn lift_set<F: Scalar>(s: &PointSet<ExactQ>, proto: &F) -> Result<PointSet<F>> {
    let pts = s
        .points
        .iter()
        .map(|p| match p {
            ProjPoint::Infinity => ProjPoint::Infinity,
            ProjPoint::Finite(x) => ProjPoint::Finite(proto.lift(&x.q)),
        })
        .collect();
    PointSet::new(pts, s.labels.clone())
}

/// Whether the closest point of the hull to `a` lies at depth `d` on the path
/// to 1: no point of `s` is nearer to `a` than `d`.
fn generic_at<F: Scalar>(s: &PointSet<F>, a: &F, d: ValQ) -> Result<bool> {
    for p in s.points.iter().filter_map(|p| p.finite()) {
        if a.sub(p).val()? > d {
            return Ok(false);
        }
    }
    Ok(true)
}

#[allow(clippy::too_many_arguments)]
fn sample_on_segment<F: Scalar>(
    s: &PointSet<ExactQ>,
    pairing: &Pairing,
    p: u64,
    a: F,
    ai: usize,
    d: ValQ,
    vp: ValQ,
    max_len: usize,
) -> Result<SegmentSample> {
    let r = vp.scale(num_rational::Ratio::new(1, p as i64 - 1));
    let sf = lift_set(s, &a)?;
    if d != ValQ::ZERO && !generic_at(&sf, &a, d)? {
        return Err(Error::Internal(format!("sample {a} is not generic at depth {d}")));
    }
    let one = a.one();
    let g = WhittakerGroup::new(&sf, pairing, p, one.neg())?;
    let a_i = sf.points[ai].finite().ok_or_else(|| Error::HypothesesUnmet("a_i is infinity".into()))?.clone();
    let lambda = a_i.sub(&one);
    let vl = lambda.val()?;
    let want = segment_gamma(vp, vl, p, d);
    let want0 = segment_gamma0(vp, vl, p, d);
    let (ta, tb) = (ProjPoint::Finite(a_i), ProjPoint::Finite(one.clone()));
    let z = ProjPoint::Finite(a.clone());
    let mut run = ThetaRun::new(&g, Subgroup::Gamma, ta.clone(), tb.clone(), vec![z.clone()], Native)?;
    let mut run0 = ThetaRun::new(&g, Subgroup::Gamma0, ta, tb, vec![z], Native)?;
    let main_a = one.int(p as i64).mul(&lambda).div(&one.sub(&a.pow(p as u32)))?;
    let main_b = lambda.div(&one.sub(&a))?;
    loop {
        let t = run.result(0)?;
        let t0 = run0.result(0)?;
        let resid_ok = |main: &F| -> Result<bool> {
            let Some(th) = t.value.finite() else { return Ok(false) };
            let mv = main.val()?;
            Ok(th.sub(&one).sub(main).val()? > mv && th.val()? + t.empirical_floor > mv)
        };
        let general = resid_ok(&main_a)?;
        let better = if d > r { Some(resid_ok(&main_b)?) } else { None };
        let pass = t.certifies(want)? && t0.certifies(want0)? && general && better.unwrap_or(true);
        if pass || run.level() >= max_len {
            return Ok(SegmentSample {
                d,
                point: a.to_string(),
                length: run.level(),
                theta_val: t.val_minus_one()?,
                theta_expected: want,
                theta0_val: t0.val_minus_one()?,
                theta0_expected: want0,
                approx_general: general,
                approx_better: better,
                pass,
            });
        }
        run.advance()?;
        run0.advance()?;
    }
}

/// Checks that `S` has the shape needed for the segment formulas: pairs
/// `{0, inf}` and `{a_i, 1}`, the Gauss point and the vertex joining 1 and
/// `a_i` distinguished, and the path between them away from the other axes.
/// Returns `(j, i)`.
fn segment_hypotheses(s: &PointSet<ExactQ>, pairing: &Pairing, r: ValQ) -> Result<(usize, usize, usize)> {
    let unmet = |m: &str| Error::HypothesesUnmet(m.to_string());
    let find = |x: i64| {
        s.points.iter().position(|p| matches!(p, ProjPoint::Finite(v) if v.q == num_rational::BigRational::from_integer(x.into())))
    };
    let inf = s.infinity().ok_or_else(|| unmet("infinity is not in S"))?;
    let zero = find(0).ok_or_else(|| unmet("0 is not in S"))?;
    let one = find(1).ok_or_else(|| unmet("1 is not in S"))?;
    let j = pairing.pair_of(inf);
    if pairing.pairs[j] != (zero, inf) && pairing.pairs[j] != (inf, zero) {
        return Err(unmet("0 and infinity are not paired"));
    }
    let i = pairing.pair_of(one);
    let (x, y) = pairing.pairs[i];
    let ai = if x == one { y } else { x };
    let cd = compute_clusters(s)?;
    let t = hull_from_clusters(&cd, pairing).map_err(|e| unmet(&e.to_string()))?;
    use crate::berktree::VertexKind::Distinguished;
    let gauss = (0..cd.clusters.len())
        .find(|&c| cd.contains(c, zero) && cd.depth_of(c) == ValQ::ZERO)
        .ok_or_else(|| unmet("the Gauss point is not a vertex"))?;
    if t.nodes[gauss].kind != Distinguished {
        return Err(unmet("the Gauss point is not distinguished"));
    }
    let vi = cd.smallest_containing(&[one, ai]).ok_or_else(|| unmet("no cluster joins 1 and a_i"))?;
    if t.nodes[vi].kind != Distinguished {
        return Err(unmet("the vertex joining 1 and a_i is not distinguished"));
    }
    for l in (0..pairing.len()).filter(|&l| l != i && l != j) {
        if t.path_distance((TreePoint::at(vi), TreePoint::at(gauss)), t.axis(l)) <= r {
            return Err(unmet("the segment meets the neighbourhood of another axis"));
        }
    }
    Ok((j, i, ai))
}

/// Samples `a` on the segment from the Gauss point towards 1 at the given
/// depths `d = v(a - 1)` and compares the theta values with the piecewise
/// linear formulas, extending the truncation until the empirical floor
/// certifies each valuation or `max_len` is reached.
///
/// `d = 0` uses `a = 0`. Other integral depths use `a = 1 + ell^d w` in the
/// unramified quadratic extension, whose residue avoids every direction
/// defined over the base field; half-integral depths use
/// `a = 1 + ell^(d - 1/2) sqrt(ell)`.
pub fn check_segment_formulas(
    s: &PointSet<ExactQ>,
    pairing: &Pairing,
    p: u64,
    ds: &[ValQ],
    max_len: usize,
) -> Result<SegmentReport> {
    let ell = s.points.iter().find_map(|x| x.finite()).map(|x| x.ell).ok_or(Error::TooFewPoints { need: 1, got: 0 })?;
    if p != 2 {
        return Err(Error::Invalid("segment checks use exact arithmetic and need p = 2".into()));
    }
    let vp = ValQ::int(i64::from(p == ell));
    let r = vp.scale(num_rational::Ratio::new(1, p as i64 - 1));
    let (_, _, ai) = segment_hypotheses(s, pairing, r)?;
    let mut samples = Vec::new();
    for &d in ds {
        let q = d.fin().filter(|q| (q * 2).is_integer() && *q >= num_rational::Ratio::from_integer(0));
        let Some(q) = q else {
            return Err(Error::Invalid(format!("sample depth {d} must be a non-negative half-integer")));
        };
        let k = (q * 2).to_integer();
        let lk = |e: i64| num_rational::BigRational::from_integer(num_traits::pow(num_bigint::BigInt::from(ell), e as usize));
        let zero = num_rational::BigRational::from_integer(0.into());
        let one = num_rational::BigRational::from_integer(1.into());
        let sample = if k == 0 {
            let a = UnramQuad::new(zero.clone(), zero, ell)?;
            sample_on_segment(s, pairing, p, a, ai, d, vp, max_len)?
        } else if k % 2 == 0 {
            let a = UnramQuad::new(one, lk(k / 2), ell)?;
            sample_on_segment(s, pairing, p, a, ai, d, vp, max_len)?
        } else {
            let a = RamQuad::new(one, lk(k / 2), ell);
            sample_on_segment(s, pairing, p, a, ai, d, vp, max_len)?
        };
        samples.push(sample);
    }
    let a_i = s.points[ai].finite().ok_or_else(|| Error::HypothesesUnmet("a_i is infinity".into()))?;
    Ok(SegmentReport { lambda_val: a_i.sub(&a_i.one()).val()?, vp, samples })
}
