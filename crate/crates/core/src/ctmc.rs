//! Infinitesimal generator of the underlying CTMC and its steady state.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_traits::{Signed, Zero};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use thiserror::Error;

use crate::semantics::DerivationGraph;
use crate::terms::{format_rational, rational_to_f64, ActionType, RateSum, Rational};

/// State counts at or above this use the iterative solver.
pub const DENSE_LIMIT: usize = 2000;

const NORMALIZATION_TOL: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CtmcError {
    #[error("passive rate reachable: state {state} enables `{action}` with an unspecified rate")]
    PassiveRateReachable { state: usize, action: ActionType },
    #[error("chain is not irreducible; bottom strongly connected components: {}", format_components(.bottom_components))]
    NotIrreducible { bottom_components: Vec<Vec<usize>> },
    #[error("linear system is singular")]
    SingularSystem,
    #[error("empty chain")]
    Empty,
    #[error("iterative solver did not converge (residual {residual})")]
    NotConverged { residual: String },
}

fn format_components(c: &[Vec<usize>]) -> String {
    c.iter()
        .map(|comp| format!("{{{}}}", comp.iter().map(usize::to_string).collect::<Vec<_>>().join(", ")))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Sparse generator with exact rational entries. Row sums are exactly zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Generator {
    rows: Vec<BTreeMap<usize, Rational>>,
    diag: Vec<Rational>,
}

impl Generator {
    /// Builds a generator from off-diagonal entries; duplicates are summed,
    /// diagonal and zero entries ignored.
    pub fn from_entries(n: usize, entries: impl IntoIterator<Item = (usize, usize, Rational)>) -> Self {
        let mut rows = vec![BTreeMap::new(); n];
        for (i, j, q) in entries {
            if i != j && !q.is_zero() {
                *rows[i].entry(j).or_insert_with(Rational::zero) += q;
            }
        }
        let diag = rows
            .iter()
            .map(|row: &BTreeMap<usize, Rational>| -row.values().fold(Rational::zero(), |a, b| a + b))
            .collect();
        Generator { rows, diag }
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    /// `q(i, j)` for `i != j`, or `q_ii` on the diagonal.
    pub fn entry(&self, i: usize, j: usize) -> Rational {
        if i == j {
            self.diag[i].clone()
        } else {
            self.rows[i].get(&j).cloned().unwrap_or_else(Rational::zero)
        }
    }

    pub fn row(&self, i: usize) -> &BTreeMap<usize, Rational> {
        &self.rows[i]
    }

    pub fn diagonal(&self) -> &[Rational] {
        &self.diag
    }

    /// Iterates over `(i, j, q_ij)` for the strictly positive off-diagonal entries.
    pub fn off_diagonal(&self) -> impl Iterator<Item = (usize, usize, &Rational)> {
        self.rows.iter().enumerate().flat_map(|(i, row)| row.iter().map(move |(j, q)| (i, *j, q)))
    }

    pub fn row_sum(&self, i: usize) -> Rational {
        self.rows[i].values().fold(self.diag[i].clone(), |a, b| a + b)
    }
}

/// Assembles `Q` from a graph. Self-loops are dropped, parallel arcs of any
/// action type are summed.
pub fn build_generator(g: &DerivationGraph) -> Result<Generator, CtmcError> {
    let mut entries = Vec::with_capacity(g.transitions().len());
    for t in g.transitions() {
        if t.rate.is_passive() {
            return Err(CtmcError::PassiveRateReachable { state: t.source, action: t.action.clone() });
        }
        entries.push((t.source, t.target, t.rate.value().clone()));
    }
    Ok(Generator::from_entries(g.state_count(), entries))
}

/// `q(i, j, action)`: total rate of `action`-arcs from `i` to `j`.
pub fn conditional_rate(g: &DerivationGraph, i: usize, j: usize, action: &ActionType) -> RateSum {
    let mut s = RateSum::zero();
    for t in g.outgoing(i) {
        if t.target == j && &t.action == action {
            s.add(&t.rate);
        }
    }
    s
}

/// `q[i, S, action]`: sum of [`conditional_rate`] over the targets in `set`.
pub fn total_conditional_rate(g: &DerivationGraph, i: usize, set: &[usize], action: &ActionType) -> RateSum {
    let mut s = RateSum::zero();
    for &j in set {
        s.add_sum(&conditional_rate(g, i, j, action));
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct SteadyState {
    pub probs: Vec<f64>,
    /// `max_j |(pi Q)_j|`.
    pub residual: f64,
}

impl SteadyState {
    pub fn prob(&self, state: usize) -> f64 {
        self.probs[state]
    }
}

/// Solver selection; the default switches to the iterative method at
/// [`DENSE_LIMIT`] states.
#[derive(Copy, Clone, Debug)]
pub struct SolverOptions {
    pub dense_limit: usize,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { dense_limit: DENSE_LIMIT, max_iterations: 1_000_000 }
    }
}

/// Terminal SCCs (no arc leaves them) when the chain has more than one SCC.
pub fn irreducibility_violation(q: &Generator) -> Option<Vec<Vec<usize>>> {
    let n = q.size();
    let mut graph: DiGraph<(), ()> = DiGraph::with_capacity(n, 0);
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for (i, j, _) in q.off_diagonal() {
        graph.add_edge(nodes[i], nodes[j], ());
    }
    let sccs = tarjan_scc(&graph);
    if sccs.len() <= 1 {
        return None;
    }
    let mut comp_of = vec![0usize; n];
    for (c, members) in sccs.iter().enumerate() {
        for m in members {
            comp_of[m.index()] = c;
        }
    }
    let mut bottom: Vec<Vec<usize>> = sccs
        .iter()
        .enumerate()
        .filter(|(c, members)| {
            members.iter().all(|m| q.row(m.index()).keys().all(|&j| comp_of[j] == *c))
        })
        .map(|(_, members)| {
            let mut v: Vec<usize> = members.iter().map(|m| m.index()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    bottom.sort();
    Some(bottom)
}

pub fn steady_state(q: &Generator) -> Result<SteadyState, CtmcError> {
    steady_state_with(q, SolverOptions::default())
}

pub fn steady_state_with(q: &Generator, options: SolverOptions) -> Result<SteadyState, CtmcError> {
    let n = q.size();
    if n == 0 {
        return Err(CtmcError::Empty);
    }
    if let Some(bottom_components) = irreducibility_violation(q) {
        return Err(CtmcError::NotIrreducible { bottom_components });
    }
    if n == 1 {
        return Ok(SteadyState { probs: vec![1.0], residual: 0.0 });
    }
    let mut probs = if n < options.dense_limit { solve_dense(q)? } else { solve_uniformized(q, options.max_iterations) };
    for p in probs.iter_mut() {
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    let residual = residual(q, &probs);
    let scale = q.diagonal().iter().map(|d| rational_to_f64(d).abs()).fold(1.0, f64::max);
    debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= NORMALIZATION_TOL);
    if residual > RESIDUAL_TOL * scale {
        return Err(CtmcError::NotConverged { residual: format!("{residual:e}") });
    }
    Ok(SteadyState { probs, residual })
}

/// `max_j |sum_i pi_i q_ij|` in floating point.
pub fn residual(q: &Generator, probs: &[f64]) -> f64 {
    let n = q.size();
    let mut acc = vec![0.0f64; n];
    for i in 0..n {
        acc[i] += probs[i] * rational_to_f64(&q.diagonal()[i]);
        for (&j, v) in q.row(i) {
            acc[j] += probs[i] * rational_to_f64(v);
        }
    }
    acc.into_iter().map(f64::abs).fold(0.0, f64::max)
}

/// Solves `Q^T pi = 0` with the last balance equation replaced by the
/// normalization row, by LU with partial pivoting.
fn solve_dense(q: &Generator) -> Result<Vec<f64>, CtmcError> {
    let n = q.size();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = rational_to_f64(&q.diagonal()[i]);
        for (&j, v) in q.row(i) {
            a[(j, i)] += rational_to_f64(v);
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b).ok_or(CtmcError::SingularSystem)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CtmcError::SingularSystem);
    }
    Ok(x.iter().copied().collect())
}

/// Power iteration on the uniformized chain `P = I + Q / L` with
/// `L = 1.1 * max |q_ii|`.
fn solve_uniformized(q: &Generator, max_iterations: usize) -> Vec<f64> {
    let n = q.size();
    let lambda = 1.1 * q.diagonal().iter().map(|d| rational_to_f64(&d.abs())).fold(0.0, f64::max);
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| q.row(i).iter().map(|(&j, v)| (j, rational_to_f64(v) / lambda)).collect())
        .collect();
    let stay: Vec<f64> = q.diagonal().iter().map(|d| 1.0 + rational_to_f64(d) / lambda).collect();
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..max_iterations {
        for i in 0..n {
            next[i] = pi[i] * stay[i];
        }
        for (i, row) in rows.iter().enumerate() {
            for &(j, p) in row {
                next[j] += pi[i] * p;
            }
        }
        let total: f64 = next.iter().sum();
        let mut diff = 0.0;
        for i in 0..n {
            next[i] /= total;
            diff += (next[i] - pi[i]).abs();
        }
        std::mem::swap(&mut pi, &mut next);
        if diff < 1e-15 {
            break;
        }
    }
    pi
}

/// Renders a rational entry; used by reports.
pub fn format_entry(r: &Rational) -> String {
    format_rational(r)
}
