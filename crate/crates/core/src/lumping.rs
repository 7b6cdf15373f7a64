//! Coarsest lumpable partitions by signature refinement.
//!
//! A partition is stable when, for every pair of states in one block, every
//! action type and every block `S`, the total conditional rates into `S`
//! agree. For action types in the ignored set (always containing `tau`) the
//! rates into the pair's own block are exempt. With only `tau` ignored this
//! is lumpable bisimilarity; adding the high actions gives lumpable
//! bisimilarity up to the high set.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

use num_traits::Zero;
use thiserror::Error;

use crate::ctmc::{total_conditional_rate, Generator};
use crate::semantics::{DerivationGraph, Transition};
use crate::terms::{ActionSet, ActionType, RateSum, Rational};

/// Graphs up to this many states get the brute-force stability post-check
/// on every refinement.
pub const STABILITY_CHECK_LIMIT: usize = 1500;

static STABILITY_CHECKS: AtomicUsize = AtomicUsize::new(0);

/// Number of brute-force stability post-checks that have passed in this
/// process.
pub fn stability_checks_performed() -> usize {
    STABILITY_CHECKS.load(Ordering::Relaxed)
}

/// Action types whose rates into a state's own block are not observed.
/// `tau` is always a member.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct IgnoredActions {
    visible: ActionSet,
}

impl IgnoredActions {
    /// Only `tau`: plain lumpable bisimilarity.
    pub fn tau_only() -> Self {
        IgnoredActions::default()
    }

    /// `tau` plus the given visible types (up-to-high bisimilarity).
    pub fn with(high: &ActionSet) -> Self {
        IgnoredActions { visible: high.iter().filter(|a| !a.is_tau()).cloned().collect() }
    }

    pub fn contains(&self, action: &ActionType) -> bool {
        action.is_tau() || self.visible.contains(action)
    }

    pub fn visible(&self) -> &ActionSet {
        &self.visible
    }
}

impl fmt::Display for IgnoredActions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names: Vec<&str> = self.visible.iter().map(ActionType::name).collect();
        names.push("tau");
        write!(f, "{{{}}}", names.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PartitionError {
    #[error("state {0} appears in more than one block")]
    Overlap(usize),
    #[error("state {0} is not covered")]
    Uncovered(usize),
    #[error("state {0} is out of range")]
    OutOfRange(usize),
    #[error("empty block")]
    EmptyBlock,
}

/// Disjoint, exhaustive blocks of state ids. Blocks are ordered by their
/// smallest member and members are sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
}

impl Partition {
    pub fn trivial(n: usize) -> Self {
        Partition::from_labels(&vec![0; n])
    }

    pub fn discrete(n: usize) -> Self {
        Partition::from_labels(&(0..n).collect::<Vec<_>>())
    }

    /// Groups states by an arbitrary label per state.
    pub fn from_labels<L: Eq + std::hash::Hash>(labels: &[L]) -> Self {
        let mut first: HashMap<&L, usize> = HashMap::new();
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        let mut block_of = vec![0; labels.len()];
        for (s, l) in labels.iter().enumerate() {
            let b = *first.entry(l).or_insert_with(|| {
                blocks.push(Vec::new());
                blocks.len() - 1
            });
            blocks[b].push(s);
            block_of[s] = b;
        }
        Partition { blocks, block_of }
    }

    pub fn from_blocks(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self, PartitionError> {
        let mut label = vec![usize::MAX; n];
        for (b, members) in blocks.iter().enumerate() {
            if members.is_empty() {
                return Err(PartitionError::EmptyBlock);
            }
            for &s in members {
                if s >= n {
                    return Err(PartitionError::OutOfRange(s));
                }
                if label[s] != usize::MAX {
                    return Err(PartitionError::Overlap(s));
                }
                label[s] = b;
            }
        }
        if let Some(s) = label.iter().position(|&l| l == usize::MAX) {
            return Err(PartitionError::Uncovered(s));
        }
        Ok(Partition::from_labels(&label))
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_of(&self, state: usize) -> usize {
        self.block_of[state]
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn state_count(&self) -> usize {
        self.block_of.len()
    }

    pub fn same_block(&self, a: usize, b: usize) -> bool {
        self.block_of[a] == self.block_of[b]
    }

    /// True when every block of `self` lies inside a block of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.blocks
            .iter()
            .all(|b| b.iter().all(|&s| coarser.block_of[s] == coarser.block_of[b[0]]))
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }
}

type Signature = Vec<(ActionType, usize, RateSum)>;

fn signature(g: &DerivationGraph, p: &Partition, ignored: &IgnoredActions, state: usize) -> Signature {
    let own = p.block_of(state);
    let mut acc: BTreeMap<(&ActionType, usize), RateSum> = BTreeMap::new();
    for t in g.outgoing(state) {
        let target_block = p.block_of(t.target);
        if target_block == own && ignored.contains(&t.action) {
            continue;
        }
        acc.entry((&t.action, target_block)).or_default().add(&t.rate);
    }
    acc.into_iter().map(|((a, b), r)| (a.clone(), b, r)).collect()
}

/// Coarsest stable refinement of `initial` (default: one block).
pub fn coarsest_lumpable_partition(
    g: &DerivationGraph,
    ignored: &IgnoredActions,
    initial: Option<&Partition>,
) -> Partition {
    let n = g.state_count();
    let mut current = match initial {
        Some(p) => {
            assert_eq!(p.state_count(), n, "initial partition size mismatch");
            p.clone()
        }
        None => Partition::trivial(n),
    };
    loop {
        let keys: Vec<(usize, Signature)> =
            (0..n).map(|s| (current.block_of(s), signature(g, &current, ignored, s))).collect();
        let next = Partition::from_labels(&keys);
        let done = next.block_count() == current.block_count();
        current = next;
        if done {
            break;
        }
    }
    if n <= STABILITY_CHECK_LIMIT {
        if let Err(v) = verify_stability(g, &current, ignored) {
            panic!("refinement produced an unstable partition: {v}");
        }
        STABILITY_CHECKS.fetch_add(1, Ordering::Relaxed);
    }
    current
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("states {left} and {right} differ on q[., block {block}, {action}]: {left_rate} vs {right_rate}")]
pub struct StabilityViolation {
    pub left: usize,
    pub right: usize,
    pub action: ActionType,
    pub block: usize,
    pub left_rate: RateSum,
    pub right_rate: RateSum,
}

/// Recomputes every `q[P, S, a]` from scratch and checks the stability
/// condition pairwise against each block's first member.
pub fn verify_stability(
    g: &DerivationGraph,
    p: &Partition,
    ignored: &IgnoredActions,
) -> Result<(), Box<StabilityViolation>> {
    let actions = g.action_types();
    for (own, block) in p.blocks().iter().enumerate() {
        let rep = block[0];
        for &other in &block[1..] {
            for action in &actions {
                for (s, target) in p.blocks().iter().enumerate() {
                    if s == own && ignored.contains(action) {
                        continue;
                    }
                    let a = total_conditional_rate(g, rep, target, action);
                    let b = total_conditional_rate(g, other, target, action);
                    if a != b {
                        return Err(Box::new(StabilityViolation {
                            left: rep,
                            right: other,
                            action: action.clone(),
                            block: s,
                            left_rate: a,
                            right_rate: b,
                        }));
                    }
                }
            }
        }
    }
    Ok(())
}

pub fn equivalent(g: &DerivationGraph, i: usize, j: usize, ignored: &IgnoredActions) -> bool {
    coarsest_lumpable_partition(g, ignored, None).same_block(i, j)
}

/// Disjoint union of two graphs. The states of `g2` follow those of `g1`;
/// returns the graph and the ids of both roots.
pub fn union_graph(g1: &DerivationGraph, g2: &DerivationGraph) -> (DerivationGraph, usize, usize) {
    let offset = g1.state_count();
    let states = g1.states().iter().chain(g2.states()).cloned().collect();
    let transitions = g1
        .transitions()
        .iter()
        .cloned()
        .chain(g2.transitions().iter().map(|t| Transition {
            source: t.source + offset,
            target: t.target + offset,
            ..t.clone()
        }))
        .collect();
    (DerivationGraph::from_parts(states, transitions), g1.root(), offset + g2.root())
}

/// Generator of the lumped chain: rates between distinct blocks, read off
/// each block's first member.
pub fn quotient_generator(q: &Generator, p: &Partition) -> Generator {
    let mut entries: Vec<(usize, usize, Rational)> = Vec::new();
    for (a, block) in p.blocks().iter().enumerate() {
        let mut to: BTreeMap<usize, Rational> = BTreeMap::new();
        for (&j, rate) in q.row(block[0]) {
            let b = p.block_of(j);
            if b != a {
                *to.entry(b).or_insert_with(Rational::zero) += rate;
            }
        }
        entries.extend(to.into_iter().map(|(b, r)| (a, b, r)));
    }
    Generator::from_entries(p.block_count(), entries)
}

/// Sums `probs` within each block.
pub fn block_masses(p: &Partition, probs: &[f64]) -> Vec<f64> {
    p.blocks().iter().map(|b| b.iter().map(|&s| probs[s]).sum()).collect()
}
