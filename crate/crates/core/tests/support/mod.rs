//! Shared helpers for the integration tests: a seeded random model
//! generator, semantics-preserving rewrites, model combiners and a
//! brute-force partition oracle that shares no code with the library's
//! lumping module.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;
use pepa_psni::parser::parse_model;
use pepa_psni::semantics::DerivationGraph;
use pepa_psni::terms::{format_rational, ratio, ModelEnv, Rate, Rational};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub const LOW: [&str; 2] = ["a", "b"];
pub const HIGH: &str = "h";

#[derive(Clone, Debug)]
pub struct Prefix {
    pub action: &'static str,
    pub rate: Rational,
    pub target: usize,
}

#[derive(Clone, Debug)]
pub enum SystemSpec {
    Const(usize),
    Coop(Box<SystemSpec>, Vec<&'static str>, Box<SystemSpec>),
    Hide(Box<SystemSpec>, Vec<&'static str>),
}

/// A model over sequential constants `{prefix}0 .. {prefix}n`.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub prefix: String,
    pub consts: Vec<Vec<Prefix>>,
    pub system: SystemSpec,
}

impl ModelSpec {
    pub fn name(&self, i: usize) -> String {
        format!("{}{i}", self.prefix)
    }

    pub fn definitions(&self) -> String {
        let mut s = String::new();
        for (i, body) in self.consts.iter().enumerate() {
            let alts: Vec<String> = body
                .iter()
                .map(|p| format!("({}, {}).{}", p.action, format_rational(&p.rate), self.name(p.target)))
                .collect();
            s.push_str(&format!("{} := {};\n", self.name(i), alts.join(" + ")));
        }
        s
    }

    pub fn system_text(&self) -> String {
        self.render_system(&self.system)
    }

    fn render_system(&self, s: &SystemSpec) -> String {
        match s {
            SystemSpec::Const(i) => self.name(*i),
            SystemSpec::Coop(l, set, r) => {
                format!("({}) <{}> ({})", self.render_system(l), set.join(", "), self.render_system(r))
            }
            SystemSpec::Hide(inner, set) => format!("({}) / {{{}}}", self.render_system(inner), set.join(", ")),
        }
    }

    pub fn source(&self) -> String {
        format!("high = {{{HIGH}}};\n{}system {};\n", self.definitions(), self.system_text())
    }

    pub fn env(&self) -> ModelEnv {
        let src = self.source();
        parse_model(&src).unwrap_or_else(|e| panic!("generated model does not parse:\n{src}\n{e}"))
    }
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

fn rate(rng: &mut StdRng) -> Rational {
    ratio(rng.random_range(1..=3), 1)
}

fn low_set(rng: &mut StdRng) -> Vec<&'static str> {
    match rng.random_range(0..4) {
        0 => vec![],
        1 => vec!["a"],
        2 => vec!["b"],
        _ => vec!["a", "b"],
    }
}

fn nonempty_low_set(rng: &mut StdRng) -> Vec<&'static str> {
    match rng.random_range(0..3) {
        0 => vec!["a"],
        1 => vec!["b"],
        _ => vec!["a", "b"],
    }
}

fn low_prefixes(rng: &mut StdRng, n: usize) -> Vec<Prefix> {
    (0..rng.random_range(1..=2))
        .map(|_| Prefix { action: LOW[rng.random_range(0..2)], rate: rate(rng), target: rng.random_range(0..n) })
        .collect()
}

/// Arbitrary constants: about a quarter of the prefixes are high.
fn free_constants(rng: &mut StdRng) -> Vec<Vec<Prefix>> {
    let n = rng.random_range(1..=6);
    (0..n)
        .map(|_| {
            (0..rng.random_range(1..=3))
                .map(|_| {
                    let action = if rng.random_bool(0.25) { HIGH } else { LOW[rng.random_range(0..2)] };
                    Prefix { action, rate: rate(rng), target: rng.random_range(0..n) }
                })
                .collect()
        })
        .collect()
}

/// Constants whose high moves only reach a low-identical twin or loop back,
/// so the sequential components are secure by construction.
fn twin_constants(rng: &mut StdRng) -> Vec<Vec<Prefix>> {
    let base = rng.random_range(1..=3);
    let mut consts: Vec<Vec<Prefix>> = (0..base).map(|_| low_prefixes(rng, base)).collect();
    for i in 0..base {
        match rng.random_range(0..3) {
            0 => {}
            1 => consts[i].push(Prefix { action: HIGH, rate: rate(rng), target: i }),
            _ => {
                let twin = consts.len();
                let low = consts[i].clone();
                consts.push(low);
                consts[i].push(Prefix { action: HIGH, rate: rate(rng), target: twin });
            }
        }
    }
    consts
}

fn random_system(rng: &mut StdRng, n: usize) -> SystemSpec {
    let leaf = |rng: &mut StdRng| SystemSpec::Const(rng.random_range(0..n));
    match rng.random_range(0..10) {
        0..=5 => SystemSpec::Const(0),
        6 | 7 => SystemSpec::Coop(Box::new(SystemSpec::Const(0)), low_set(rng), Box::new(leaf(rng))),
        8 => SystemSpec::Hide(Box::new(SystemSpec::Const(0)), nonempty_low_set(rng)),
        _ => SystemSpec::Hide(
            Box::new(SystemSpec::Coop(Box::new(SystemSpec::Const(0)), low_set(rng), Box::new(leaf(rng)))),
            nonempty_low_set(rng),
        ),
    }
}

/// A random model with at most six constants over `a`, `b` and high `h`.
/// Half of the corpus is drawn from the twin construction so that both
/// verdicts occur often.
pub fn random_model(rng: &mut StdRng) -> ModelSpec {
    let consts = if rng.random_bool(0.5) { twin_constants(rng) } else { free_constants(rng) };
    let system = random_system(rng, consts.len());
    ModelSpec { prefix: "C".into(), consts, system }
}

/// The fuzz corpus: model `i` comes from seed `i`.
pub fn corpus(n: usize) -> Vec<ModelSpec> {
    (0..n as u64).map(|seed| random_model(&mut rng(seed))).collect()
}

fn system_constants(s: &SystemSpec, out: &mut Vec<usize>) {
    match s {
        SystemSpec::Const(i) => out.push(*i),
        SystemSpec::Coop(l, _, r) => {
            system_constants(l, out);
            system_constants(r, out);
        }
        SystemSpec::Hide(inner, _) => system_constants(inner, out),
    }
}

/// Splits one prefix `(α, r).X` into `(α, r/3).X + (α, 2r/3).X'` where `X'`
/// is a fresh copy of `X`.
pub fn split_rate(spec: &ModelSpec, rng: &mut StdRng) -> ModelSpec {
    let mut out = spec.clone();
    let i = rng.random_range(0..out.consts.len());
    let k = rng.random_range(0..out.consts[i].len());
    let p = out.consts[i][k].clone();
    let clone = out.consts.len();
    out.consts.push(out.consts[p.target].clone());
    let third = p.rate.clone() / ratio(3, 1);
    out.consts[i][k].rate = third.clone();
    out.consts[i].insert(k + 1, Prefix { action: p.action, rate: p.rate - third, target: clone });
    out
}

/// Points one prefix at a fresh copy of its target.
pub fn clone_target(spec: &ModelSpec, rng: &mut StdRng) -> ModelSpec {
    let mut out = spec.clone();
    let i = rng.random_range(0..out.consts.len());
    let k = rng.random_range(0..out.consts[i].len());
    let t = out.consts[i][k].target;
    out.consts.push(out.consts[t].clone());
    out.consts[i][k].target = out.consts.len() - 1;
    out
}

/// Reverses the alternatives of one constant.
pub fn commute_choice(spec: &ModelSpec, rng: &mut StdRng) -> ModelSpec {
    let mut out = spec.clone();
    let i = rng.random_range(0..out.consts.len());
    out.consts[i].reverse();
    out
}

/// One to three random semantics-preserving rewrites.
pub fn rewrite(spec: &ModelSpec, rng: &mut StdRng) -> ModelSpec {
    let mut out = spec.clone();
    for _ in 0..rng.random_range(1..=3) {
        out = match rng.random_range(0..3) {
            0 => split_rate(&out, rng),
            1 => clone_target(&out, rng),
            _ => commute_choice(&out, rng),
        };
    }
    out
}

/// `(l, r).P`, `P / L` and `P <L> Q` as model sources, with Q's constants
/// renamed apart.
pub struct Combined {
    pub prefixed: String,
    pub hidden: String,
    pub cooperation: String,
}

pub fn combine(p: &ModelSpec, q: &ModelSpec, rng: &mut StdRng) -> Combined {
    let mut q = q.clone();
    q.prefix = "Q".into();
    assert_ne!(p.prefix, q.prefix, "combined models need distinct constant prefixes");
    let head = format!("high = {{{HIGH}}};\n{}{}", p.definitions(), q.definitions());
    let l = LOW[rng.random_range(0..2)];
    let r = rng.random_range(1..=3);
    let hide = nonempty_low_set(rng).join(", ");
    let coop = low_set(rng).join(", ");
    Combined {
        prefixed: format!("{head}Sys := {};\nTop := ({l}, {r}).Sys;\nsystem Top;\n", p.system_text()),
        hidden: format!("{head}system ({}) / {{{hide}}};\n", p.system_text()),
        cooperation: format!("{head}system ({}) <{coop}> ({});\n", p.system_text(), q.system_text()),
    }
}

impl ModelSpec {
    /// Constants mentioned by the system term.
    pub fn system_roots(&self) -> Vec<usize> {
        let mut v = Vec::new();
        system_constants(&self.system, &mut v);
        v
    }
}

/// Exact rate sum kept independently of the library's `RateSum`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Total {
    finite: Rational,
    passive: Rational,
}

impl Total {
    fn zero() -> Self {
        Total { finite: Rational::zero(), passive: Rational::zero() }
    }

    fn add(&mut self, rate: &Rate) {
        match rate {
            Rate::Finite(r) => self.finite += r,
            Rate::Passive(w) => self.passive += w,
        }
    }
}

/// Stability of `blocks` over `g`. Rates of actions in `ignored` (always
/// including `tau`) into a state's own block are exempt.
pub fn oracle_stable(g: &DerivationGraph, blocks: &[Vec<usize>], ignored: &BTreeSet<String>) -> bool {
    let n = g.state_count();
    let mut block_of = vec![0; n];
    for (b, members) in blocks.iter().enumerate() {
        for &s in members {
            block_of[s] = b;
        }
    }
    let mut actions: BTreeSet<String> = BTreeSet::new();
    for t in g.transitions() {
        actions.insert(t.action.name().to_string());
    }
    let q = |s: usize, c: usize, a: &str| {
        let mut tot = Total::zero();
        for t in g.transitions() {
            if t.source == s && block_of[t.target] == c && t.action.name() == a {
                tot.add(&t.rate);
            }
        }
        tot
    };
    for (c, _) in blocks.iter().enumerate() {
        for a in &actions {
            for members in blocks {
                let own = block_of[members[0]] == c;
                if own && ignored.contains(a) {
                    continue;
                }
                let first = q(members[0], c, a);
                if members.iter().any(|&s| q(s, c, a) != first) {
                    return false;
                }
            }
        }
    }
    true
}

/// Every set partition of `0..n`, via restricted growth strings.
pub fn all_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    fn grow(i: usize, n: usize, labels: &mut Vec<usize>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == n {
            let k = labels.iter().max().map_or(0, |m| m + 1);
            let mut blocks = vec![Vec::new(); k];
            for (s, &l) in labels.iter().enumerate() {
                blocks[l].push(s);
            }
            out.push(blocks);
            return;
        }
        let limit = labels.iter().max().map_or(0, |m| m + 1);
        for l in 0..=limit {
            labels.push(l);
            grow(i + 1, n, labels, out);
            labels.pop();
        }
    }
    let mut out = Vec::new();
    grow(0, n, &mut Vec::new(), &mut out);
    out
}

fn refines(fine: &[Vec<usize>], coarse: &[Vec<usize>]) -> bool {
    fine.iter().all(|b| coarse.iter().any(|c| b.iter().all(|s| c.contains(s))))
}

/// The coarsest stable partition found by exhaustive search. Panics unless
/// it is unique and coarser than every other stable partition.
pub fn oracle_coarsest(g: &DerivationGraph, ignored: &BTreeSet<String>) -> BTreeSet<BTreeSet<usize>> {
    let stable: Vec<_> =
        all_partitions(g.state_count()).into_iter().filter(|p| oracle_stable(g, p, ignored)).collect();
    let min = stable.iter().map(Vec::len).min().expect("the discrete partition is always stable");
    let best: Vec<_> = stable.iter().filter(|p| p.len() == min).collect();
    assert_eq!(best.len(), 1, "coarsest stable partition is not unique");
    assert!(stable.iter().all(|p| refines(p, best[0])), "stable partitions have no common coarsening");
    as_sets(best[0])
}

pub fn as_sets(blocks: &[Vec<usize>]) -> BTreeSet<BTreeSet<usize>> {
    blocks.iter().map(|b| b.iter().copied().collect()).collect()
}

/// Gauss-Jordan on exact rationals: an oracle for small steady states.
pub fn exact_steady_state(g: &DerivationGraph) -> Vec<Rational> {
    let n = g.state_count();
    let mut q: Vec<Vec<Rational>> = vec![vec![Rational::zero(); n]; n];
    for t in g.transitions() {
        if t.source != t.target {
            let r = t.rate.value().clone();
            q[t.source][t.target] += &r;
            q[t.source][t.source] -= r;
        }
    }
    // Rows of the system: columns of Q, last one replaced by normalization.
    let mut m: Vec<Vec<Rational>> = (0..n).map(|j| (0..n).map(|i| q[i][j].clone()).collect()).collect();
    let mut rhs = vec![Rational::zero(); n];
    m[n - 1] = vec![ratio(1, 1); n];
    rhs[n - 1] = ratio(1, 1);
    for col in 0..n {
        let piv = (col..n).find(|&r| !m[r][col].is_zero()).expect("singular balance equations");
        m.swap(col, piv);
        rhs.swap(col, piv);
        let p = m[col][col].clone();
        m[col].iter_mut().for_each(|x| *x = x.clone() / &p);
        rhs[col] = rhs[col].clone() / &p;
        let pivot_row = m[col].clone();
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for (x, y) in m[r].iter_mut().zip(&pivot_row) {
                    *x -= &f * y;
                }
                let d = &f * &rhs[col];
                rhs[r] -= d;
            }
        }
    }
    rhs
}

pub fn names(set: &[&str]) -> BTreeSet<String> {
    set.iter().map(|s| s.to_string()).collect()
}

/// Fig 2/3 as a function of its two rates.
pub fn fig3_source(lambda: i64, rho: i64) -> String {
    format!(
        "high = {{h}};\nP1 := (h, {lambda}).P2 + (l, {lambda}).P3;\nP2 := (l, {lambda}).P3;\nP3 := (l, {rho}).P1;\nsystem P1;\n"
    )
}

/// Counts how often each key occurs; used to report corpus composition.
pub fn tally<K: Ord>(items: impl IntoIterator<Item = K>) -> BTreeMap<K, usize> {
    let mut m = BTreeMap::new();
    for k in items {
        *m.entry(k).or_insert(0) += 1;
    }
    m
}
