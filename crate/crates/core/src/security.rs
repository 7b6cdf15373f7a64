//! Persistent stochastic non-interference.
//!
//! Two independent deciders are provided:
//!
//! * [`check_psni_bisim`]: the restricted system `P\H` and `P` must be
//!   lumpably bisimilar up to the high actions.
//! * [`check_psni_unwinding`]: every high transition `P' -(h,r)-> P''` of a
//!   reachable derivative must connect states whose restricted views are
//!   lumpably bisimilar.
//!
//! They are equivalent characterizations, so [`check_psni`] with
//! [`Method::Both`] treats any disagreement as an internal error.

use std::collections::VecDeque;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::ctmc::{build_generator, steady_state, CtmcError, SteadyState};
use crate::lumping::{block_masses, coarsest_lumpable_partition, union_graph, IgnoredActions, Partition};
use crate::semantics::{derive_system, DerivationGraph, SemanticsError, Transition};
use crate::terms::{ActionSet, ActionType, ModelEnv, Rate};

/// Tolerance for comparing class masses across the two low views.
pub const VIEW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SecurityError {
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Ctmc(#[from] CtmcError),
    #[error("internal error: bisimulation check says {bisim}, unwinding check says {unwinding}")]
    MethodDisagreement { bisim: bool, unwinding: bool },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bisim,
    Unwinding,
    Both,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Bisim => "bisim",
            Method::Unwinding => "unwinding",
            Method::Both => "both",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Witness {
    /// A high transition whose endpoints have distinguishable low views.
    HighTransition { source: usize, action: ActionType, rate: Rate, target: usize },
    /// `P\H` (in the union graph) and `P` fell into different blocks.
    RootPair { restricted_root: usize, root: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PartitionSummary {
    pub block_count: usize,
    pub block_sizes: Vec<usize>,
}

impl From<&Partition> for PartitionSummary {
    fn from(p: &Partition) -> Self {
        PartitionSummary { block_count: p.block_count(), block_sizes: p.block_sizes() }
    }
}

/// Outcome of one unwinding obligation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnwindingCheck {
    pub source: usize,
    pub action: ActionType,
    pub rate: Rate,
    pub target: usize,
    pub equivalent: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PsniVerdict {
    pub holds: bool,
    pub method: Method,
    pub witness: Option<Witness>,
    pub partition: PartitionSummary,
    /// Reachable states of the system.
    pub states: usize,
    pub unwinding_checks: Vec<UnwindingCheck>,
    pub diagnostics: Vec<String>,
}

/// `P\H`: high arcs removed and unreachable states pruned. Surviving states
/// keep their relative order, so the root stays at 0.
pub fn restrict_high(g: &DerivationGraph, high: &ActionSet) -> DerivationGraph {
    let pruned = without_high_arcs(g, high);
    let n = pruned.state_count();
    let mut reachable = vec![false; n];
    let mut queue = VecDeque::new();
    if n > 0 {
        reachable[0] = true;
        queue.push_back(0);
    }
    while let Some(s) = queue.pop_front() {
        for t in pruned.outgoing(s) {
            if !reachable[t.target] {
                reachable[t.target] = true;
                queue.push_back(t.target);
            }
        }
    }
    let mut new_id = vec![usize::MAX; n];
    let mut states = Vec::new();
    for s in 0..n {
        if reachable[s] {
            new_id[s] = states.len();
            states.push(pruned.state(s).clone());
        }
    }
    let transitions = pruned
        .transitions()
        .iter()
        .filter(|t| reachable[t.source])
        .map(|t| Transition { source: new_id[t.source], target: new_id[t.target], ..t.clone() })
        .collect();
    DerivationGraph::from_parts(states, transitions)
}

/// High arcs removed, every state kept. State `s` then behaves as `s\H`.
fn without_high_arcs(g: &DerivationGraph, high: &ActionSet) -> DerivationGraph {
    let transitions = g.transitions().iter().filter(|t| !high.contains(&t.action)).cloned().collect();
    DerivationGraph::from_parts(g.states().to_vec(), transitions)
}

/// `P/H`: high arcs relabelled to `tau`, merging with existing `tau` arcs.
pub fn hide_high(g: &DerivationGraph, high: &ActionSet) -> DerivationGraph {
    let transitions = g
        .transitions()
        .iter()
        .map(|t| {
            if high.contains(&t.action) {
                Transition { action: ActionType::tau(), ..t.clone() }
            } else {
                t.clone()
            }
        })
        .collect();
    DerivationGraph::from_parts(g.states().to_vec(), transitions)
}

/// Bisimulation characterization on an already derived graph.
pub fn psni_bisim_on_graph(g: &DerivationGraph, high: &ActionSet) -> PsniVerdict {
    let restricted = restrict_high(g, high);
    let (union, restricted_root, root) = union_graph(&restricted, g);
    let p = coarsest_lumpable_partition(&union, &IgnoredActions::with(high), None);
    let holds = p.same_block(restricted_root, root);
    let relation = if holds { "≈" } else { "≉" };
    PsniVerdict {
        holds,
        method: Method::Bisim,
        witness: (!holds).then_some(Witness::RootPair { restricted_root, root }),
        partition: PartitionSummary::from(&p),
        states: g.state_count(),
        unwinding_checks: Vec::new(),
        diagnostics: vec![format!(
            "bisim: {}\\H {relation}l^H {} ({} blocks over {} union states)",
            g.label(0),
            g.label(0),
            p.block_count(),
            union.state_count()
        )],
    }
}

/// Unwinding characterization on an already derived graph.
pub fn psni_unwinding_on_graph(g: &DerivationGraph, high: &ActionSet) -> PsniVerdict {
    // Each state of the arc-pruned graph stands for its own restricted view,
    // so one partition answers every obligation.
    let views = without_high_arcs(g, high);
    let p = coarsest_lumpable_partition(&views, &IgnoredActions::tau_only(), None);
    let mut checks = Vec::new();
    let mut diagnostics = Vec::new();
    for t in g.transitions().iter().filter(|t| high.contains(&t.action)) {
        let equivalent = p.same_block(t.source, t.target);
        diagnostics.push(format!(
            "unwinding: {src} --({}, {})--> {tgt}: {src}\\H {} {tgt}\\H",
            t.action,
            t.rate,
            if equivalent { "≈l" } else { "≉l" },
            src = g.label(t.source),
            tgt = g.label(t.target),
        ));
        checks.push(UnwindingCheck {
            source: t.source,
            action: t.action.clone(),
            rate: t.rate.clone(),
            target: t.target,
            equivalent,
        });
    }
    if checks.is_empty() {
        diagnostics.push("unwinding: no high transitions".to_string());
    }
    let witness = checks.iter().find(|c| !c.equivalent).map(|c| Witness::HighTransition {
        source: c.source,
        action: c.action.clone(),
        rate: c.rate.clone(),
        target: c.target,
    });
    PsniVerdict {
        holds: witness.is_none(),
        method: Method::Unwinding,
        witness,
        partition: PartitionSummary::from(&p),
        states: g.state_count(),
        unwinding_checks: checks,
        diagnostics,
    }
}

pub fn check_psni_bisim(env: &ModelEnv, max_states: usize) -> Result<PsniVerdict, SecurityError> {
    let g = derive_system(env, max_states)?;
    Ok(psni_bisim_on_graph(&g, env.high()))
}

pub fn check_psni_unwinding(env: &ModelEnv, max_states: usize) -> Result<PsniVerdict, SecurityError> {
    let g = derive_system(env, max_states)?;
    Ok(psni_unwinding_on_graph(&g, env.high()))
}

/// Runs the requested method(s) on the system of `env`.
pub fn check_psni(env: &ModelEnv, method: Method, max_states: usize) -> Result<PsniVerdict, SecurityError> {
    let g = derive_system(env, max_states)?;
    check_psni_on_graph(&g, env.high(), method)
}

pub fn check_psni_on_graph(g: &DerivationGraph, high: &ActionSet, method: Method) -> Result<PsniVerdict, SecurityError> {
    match method {
        Method::Bisim => Ok(psni_bisim_on_graph(g, high)),
        Method::Unwinding => Ok(psni_unwinding_on_graph(g, high)),
        Method::Both => {
            let (bisim, unwinding) = std::thread::scope(|s| {
                let b = s.spawn(|| psni_bisim_on_graph(g, high));
                let u = psni_unwinding_on_graph(g, high);
                (b.join().expect("bisim checker panicked"), u)
            });
            if bisim.holds != unwinding.holds {
                return Err(SecurityError::MethodDisagreement { bisim: bisim.holds, unwinding: unwinding.holds });
            }
            let mut diagnostics = bisim.diagnostics;
            diagnostics.extend(unwinding.diagnostics);
            Ok(PsniVerdict {
                holds: bisim.holds,
                method: Method::Both,
                witness: unwinding.witness,
                partition: bisim.partition,
                states: g.state_count(),
                unwinding_checks: unwinding.unwinding_checks,
                diagnostics,
            })
        }
    }
}

/// Steady state of one low view, labelled by the underlying derivative.
#[derive(Clone, Debug)]
pub struct ViewDistribution {
    pub labels: Vec<String>,
    pub steady: SteadyState,
}

/// Probability mass of one lumpable-bisimilarity class in each view.
#[derive(Clone, Debug)]
pub struct ClassComparison {
    pub hidden_states: Vec<usize>,
    pub restricted_states: Vec<usize>,
    pub hidden_mass: f64,
    pub restricted_mass: f64,
}

impl ClassComparison {
    pub fn agrees(&self) -> bool {
        (self.hidden_mass - self.restricted_mass).abs() <= VIEW_TOLERANCE
    }
}

#[derive(Clone, Debug)]
pub struct LowViewReport {
    /// `P/H`: the system cooperating with a high context, seen from low.
    pub hidden: ViewDistribution,
    /// `P\H`: the system in isolation.
    pub restricted: ViewDistribution,
    pub classes: Vec<ClassComparison>,
}

impl LowViewReport {
    /// True when every class carries the same steady-state mass in both views.
    pub fn consistent(&self) -> bool {
        self.classes.iter().all(ClassComparison::agrees)
    }
}

/// Steady states of `P/H` and `P\H` with a per-class comparison under
/// lumpable bisimilarity on their union.
pub fn low_view_report(env: &ModelEnv, max_states: usize) -> Result<LowViewReport, SecurityError> {
    let g = derive_system(env, max_states)?;
    low_view_report_on_graph(&g, env.high())
}

pub fn low_view_report_on_graph(g: &DerivationGraph, high: &ActionSet) -> Result<LowViewReport, SecurityError> {
    let hidden = hide_high(g, high);
    let restricted = restrict_high(g, high);
    let hidden_pi = steady_state(&build_generator(&hidden)?)?;
    let restricted_pi = steady_state(&build_generator(&restricted)?)?;

    let (union, _, offset) = union_graph(&hidden, &restricted);
    let p = coarsest_lumpable_partition(&union, &IgnoredActions::tau_only(), None);
    let (hidden_part, restricted_part): (Vec<f64>, Vec<f64>) = (0..union.state_count())
        .map(|s| if s < offset { (hidden_pi.probs[s], 0.0) } else { (0.0, restricted_pi.probs[s - offset]) })
        .unzip();
    let hidden_mass = block_masses(&p, &hidden_part);
    let restricted_mass = block_masses(&p, &restricted_part);
    let classes = p
        .blocks()
        .iter()
        .enumerate()
        .map(|(b, members)| ClassComparison {
            hidden_states: members.iter().copied().filter(|&s| s < offset).collect(),
            restricted_states: members.iter().filter(|&&s| s >= offset).map(|&s| s - offset).collect(),
            hidden_mass: hidden_mass[b],
            restricted_mass: restricted_mass[b],
        })
        .collect();
    Ok(LowViewReport {
        hidden: ViewDistribution { labels: (0..hidden.state_count()).map(|s| hidden.label(s)).collect(), steady: hidden_pi },
        restricted: ViewDistribution {
            labels: (0..restricted.state_count()).map(|s| restricted.label(s)).collect(),
            steady: restricted_pi,
        },
        classes,
    })
}
