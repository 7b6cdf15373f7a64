//! Structural operational semantics: enabled activities, apparent rates and
//! exhaustive derivation-graph construction.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::ops::Range;

use thiserror::Error;

use crate::parser::render_term;
use crate::terms::{
    rate_add, ActionSet, ActionType, Activity, ModelEnv, ProcessTerm, Rate, RateError, RateSum,
    Rational,
};

pub const DEFAULT_MAX_STATES: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemanticsError {
    #[error("undefined constant `{0}`")]
    UndefinedConstant(String),
    #[error("unguarded recursion through constant `{0}`")]
    UnguardedRecursion(String),
    #[error("apparent rate of `{action}` in `{term}`: {source}")]
    MixedRateSum {
        action: ActionType,
        term: String,
        #[source]
        source: RateError,
    },
    #[error("state space exceeds {0} states")]
    StateSpaceExceeded(usize),
    #[error("max_states must be at least 1")]
    InvalidLimit,
}

/// One aggregated arc of a derivation graph.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Transition {
    pub source: usize,
    pub action: ActionType,
    pub rate: Rate,
    pub multiplicity: u32,
    pub target: usize,
}

/// Labelled multi-transition system over the derivatives of a root term.
///
/// State 0 is the root. Transitions are kept sorted by (source, action,
/// target, finite-before-passive) with at most one record per key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivationGraph {
    states: Vec<ProcessTerm>,
    transitions: Vec<Transition>,
    outgoing: Vec<Range<usize>>,
}

impl DerivationGraph {
    /// Builds a graph from raw arcs, merging arcs with the same (source,
    /// action, target, rate kind) by summing rates and multiplicities.
    pub fn from_parts(states: Vec<ProcessTerm>, transitions: Vec<Transition>) -> Self {
        let mut merged: BTreeMap<(usize, ActionType, usize, bool), (Rational, u32)> = BTreeMap::new();
        for t in transitions {
            assert!(t.source < states.len() && t.target < states.len(), "arc endpoint out of range");
            let entry = merged
                .entry((t.source, t.action, t.target, t.rate.is_passive()))
                .or_insert_with(|| (Rational::from_integer(0.into()), 0));
            entry.0 += t.rate.value();
            entry.1 += t.multiplicity;
        }
        let transitions: Vec<Transition> = merged
            .into_iter()
            .map(|((source, action, target, passive), (value, multiplicity))| Transition {
                source,
                action,
                rate: if passive { Rate::Passive(value) } else { Rate::Finite(value) },
                multiplicity,
                target,
            })
            .collect();
        let mut outgoing = vec![0..0; states.len()];
        let mut i = 0;
        while i < transitions.len() {
            let s = transitions[i].source;
            let start = i;
            while i < transitions.len() && transitions[i].source == s {
                i += 1;
            }
            outgoing[s] = start..i;
        }
        DerivationGraph { states, transitions, outgoing }
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[ProcessTerm] {
        &self.states
    }

    pub fn state(&self, id: usize) -> &ProcessTerm {
        &self.states[id]
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn outgoing(&self, state: usize) -> &[Transition] {
        &self.transitions[self.outgoing[state].clone()]
    }

    /// Every action type labelling some arc.
    pub fn action_types(&self) -> ActionSet {
        self.transitions.iter().map(|t| t.action.clone()).collect()
    }

    pub fn label(&self, state: usize) -> String {
        render_term(&self.states[state])
    }
}

/// The multiset of activities enabled by `term` with their derivatives.
pub fn one_step(env: &ModelEnv, term: &ProcessTerm) -> Result<Vec<(Activity, ProcessTerm)>, SemanticsError> {
    let mut unfolding = Vec::new();
    step(env, term, &mut unfolding)
}

fn step<'a>(
    env: &'a ModelEnv,
    term: &'a ProcessTerm,
    unfolding: &mut Vec<&'a str>,
) -> Result<Vec<(Activity, ProcessTerm)>, SemanticsError> {
    match term {
        ProcessTerm::Prefix(a, k) => Ok(vec![(a.clone(), (**k).clone())]),
        ProcessTerm::Choice(l, r) => {
            let mut out = step(env, l, unfolding)?;
            out.extend(step(env, r, unfolding)?);
            Ok(out)
        }
        ProcessTerm::Hiding(p, set) => Ok(step(env, p, unfolding)?
            .into_iter()
            .map(|(a, p2)| {
                let action = if set.contains(&a.action) { ActionType::tau() } else { a.action };
                (Activity::new(action, a.rate), ProcessTerm::hiding(p2, set.clone()))
            })
            .collect()),
        ProcessTerm::Constant(name) => {
            if unfolding.contains(&&**name) {
                return Err(SemanticsError::UnguardedRecursion(name.to_string()));
            }
            let def = env
                .definition(name)
                .ok_or_else(|| SemanticsError::UndefinedConstant(name.to_string()))?;
            unfolding.push(name);
            let out = step(env, def, unfolding);
            unfolding.pop();
            out
        }
        ProcessTerm::Cooperation(l, set, r) => {
            let left = step(env, l, unfolding)?;
            let right = step(env, r, unfolding)?;
            let mut out = Vec::new();
            for (a, l2) in &left {
                if !set.contains(&a.action) {
                    out.push((a.clone(), ProcessTerm::cooperation(l2.clone(), set.clone(), (**r).clone())));
                }
            }
            for (a, r2) in &right {
                if !set.contains(&a.action) {
                    out.push((a.clone(), ProcessTerm::cooperation((**l).clone(), set.clone(), r2.clone())));
                }
            }
            for action in set {
                let lmoves: Vec<_> = left.iter().filter(|(a, _)| &a.action == action).collect();
                let rmoves: Vec<_> = right.iter().filter(|(a, _)| &a.action == action).collect();
                if lmoves.is_empty() || rmoves.is_empty() {
                    continue;
                }
                let lapp = sum_rates(lmoves.iter().map(|(a, _)| &a.rate), action, l)?;
                let rapp = sum_rates(rmoves.iter().map(|(a, _)| &a.rate), action, r)?;
                for (la, l2) in &lmoves {
                    for (ra, r2) in &rmoves {
                        let rate = shared_rate(&la.rate, &lapp, &ra.rate, &rapp);
                        out.push((
                            Activity::new(action.clone(), rate),
                            ProcessTerm::cooperation(l2.clone(), set.clone(), r2.clone()),
                        ));
                    }
                }
            }
            Ok(out)
        }
    }
}

fn sum_rates<'r>(
    rates: impl Iterator<Item = &'r Rate>,
    action: &ActionType,
    term: &ProcessTerm,
) -> Result<Rate, SemanticsError> {
    let mut acc: Option<Rate> = None;
    for r in rates {
        acc = Some(match acc {
            None => r.clone(),
            Some(a) => rate_add(&a, r).map_err(|source| SemanticsError::MixedRateSum {
                action: action.clone(),
                term: render_term(term),
                source,
            })?,
        });
    }
    Ok(acc.expect("non-empty"))
}

/// Rate of a shared activity: `(r1/ra) * (r2/rb) * min(ra, rb)`, where a
/// passive apparent rate defers to an active partner.
pub fn shared_rate(r1: &Rate, left_apparent: &Rate, r2: &Rate, right_apparent: &Rate) -> Rate {
    let p1 = r1.value() / left_apparent.value();
    let p2 = r2.value() / right_apparent.value();
    match (left_apparent, right_apparent) {
        (Rate::Finite(a), Rate::Finite(b)) => Rate::Finite(p1 * p2 * a.min(b).clone()),
        (Rate::Finite(a), Rate::Passive(_)) => Rate::Finite(p1 * p2 * a),
        (Rate::Passive(_), Rate::Finite(b)) => Rate::Finite(p1 * p2 * b),
        (Rate::Passive(a), Rate::Passive(b)) => Rate::Passive(p1 * p2 * a.min(b).clone()),
    }
}

/// Apparent rate of `action` in `term`, computed compositionally. `None`
/// means the action is not enabled.
pub fn apparent_rate(env: &ModelEnv, term: &ProcessTerm, action: &ActionType) -> Result<Option<Rate>, SemanticsError> {
    let mut unfolding = Vec::new();
    apparent(env, term, action, &mut unfolding)
}

fn add_opt(a: Option<Rate>, b: Option<Rate>, action: &ActionType, term: &ProcessTerm) -> Result<Option<Rate>, SemanticsError> {
    match (a, b) {
        (None, x) | (x, None) => Ok(x),
        (Some(x), Some(y)) => rate_add(&x, &y).map(Some).map_err(|source| SemanticsError::MixedRateSum {
            action: action.clone(),
            term: render_term(term),
            source,
        }),
    }
}

fn apparent<'a>(
    env: &'a ModelEnv,
    term: &'a ProcessTerm,
    action: &ActionType,
    unfolding: &mut Vec<&'a str>,
) -> Result<Option<Rate>, SemanticsError> {
    match term {
        ProcessTerm::Prefix(a, _) => Ok((&a.action == action).then(|| a.rate.clone())),
        ProcessTerm::Choice(l, r) => {
            let x = apparent(env, l, action, unfolding)?;
            let y = apparent(env, r, action, unfolding)?;
            add_opt(x, y, action, term)
        }
        ProcessTerm::Hiding(p, set) => {
            if set.contains(action) {
                Ok(None)
            } else if action.is_tau() {
                let mut acc = apparent(env, p, action, unfolding)?;
                for hidden in set {
                    let r = apparent(env, p, hidden, unfolding)?;
                    acc = add_opt(acc, r, action, term)?;
                }
                Ok(acc)
            } else {
                apparent(env, p, action, unfolding)
            }
        }
        ProcessTerm::Cooperation(l, set, r) => {
            let x = apparent(env, l, action, unfolding)?;
            let y = apparent(env, r, action, unfolding)?;
            if set.contains(action) {
                Ok(match (x, y) {
                    (Some(x), Some(y)) => Some(x.min_rate(&y).clone()),
                    _ => None,
                })
            } else {
                add_opt(x, y, action, term)
            }
        }
        ProcessTerm::Constant(name) => {
            if unfolding.contains(&&**name) {
                return Err(SemanticsError::UnguardedRecursion(name.to_string()));
            }
            let def = env
                .definition(name)
                .ok_or_else(|| SemanticsError::UndefinedConstant(name.to_string()))?;
            unfolding.push(name);
            let out = apparent(env, def, action, unfolding);
            unfolding.pop();
            out
        }
    }
}

/// The action types `term` may next engage in.
pub fn current_action_types(env: &ModelEnv, term: &ProcessTerm) -> Result<ActionSet, SemanticsError> {
    Ok(one_step(env, term)?.into_iter().map(|(a, _)| a.action).collect())
}

/// Breadth-first closure of [`one_step`] from `root`.
///
/// States are numbered in discovery order; the new successors of one state
/// are numbered in the order of their canonical rendering.
pub fn derive_graph(env: &ModelEnv, root: &ProcessTerm, max_states: usize) -> Result<DerivationGraph, SemanticsError> {
    if max_states == 0 {
        return Err(SemanticsError::InvalidLimit);
    }
    let mut index: HashMap<ProcessTerm, usize> = HashMap::new();
    let mut states = vec![root.clone()];
    index.insert(root.clone(), 0);
    let mut queue = VecDeque::from([0usize]);
    let mut arcs = Vec::new();

    while let Some(s) = queue.pop_front() {
        let moves = one_step(env, &states[s])?;
        let mut fresh: Vec<(String, ProcessTerm)> = Vec::new();
        for (_, target) in &moves {
            if !index.contains_key(target) && !fresh.iter().any(|(_, t)| t == target) {
                fresh.push((render_term(target), target.clone()));
            }
        }
        fresh.sort_by(|a, b| a.0.cmp(&b.0));
        for (_, term) in fresh {
            if states.len() >= max_states {
                return Err(SemanticsError::StateSpaceExceeded(max_states));
            }
            index.insert(term.clone(), states.len());
            queue.push_back(states.len());
            states.push(term);
        }
        for (activity, target) in moves {
            arcs.push(Transition {
                source: s,
                action: activity.action,
                rate: activity.rate,
                multiplicity: 1,
                target: index[&target],
            });
        }
    }
    Ok(DerivationGraph::from_parts(states, arcs))
}

/// Derivation graph of the designated system component.
pub fn derive_system(env: &ModelEnv, max_states: usize) -> Result<DerivationGraph, SemanticsError> {
    derive_graph(env, env.system(), max_states)
}

/// Sum of the rates of `action`-arcs of `state` in a graph, as a [`RateSum`].
pub fn outgoing_action_total(g: &DerivationGraph, state: usize, action: &ActionType) -> RateSum {
    let mut s = RateSum::zero();
    for t in g.outgoing(state).iter().filter(|t| &t.action == action) {
        s.add(&t.rate);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_model;
    use crate::terms::action_set;

    fn act(n: &str) -> ActionType {
        ActionType::new(n).unwrap()
    }

    const FIG1: &str = "high = {h};\nP := (i, 1).Pp + (h, 1).Pp;\nPp := (l, 1).P;\nsystem P / {i};";
    const FIG2: &str = "high = {h};\nP1 := (h, 1).P2 + (l, 1).P3;\nP2 := (l, 1).P3;\nP3 := (l, 2).P1;\nsystem P1;";

    #[test]
    fn prefix_rule() {
        let env = parse_model("P := (a, 3).P; system P;").unwrap();
        let t = ProcessTerm::prefix(act("a"), Rate::from_int(3), ProcessTerm::constant("P"));
        assert_eq!(
            one_step(&env, &t).unwrap(),
            vec![(Activity::new(act("a"), Rate::from_int(3)), ProcessTerm::constant("P"))]
        );
    }

    #[test]
    fn fig1_root_moves() {
        let env = parse_model(FIG1).unwrap();
        let moves = one_step(&env, env.system()).unwrap();
        let pp = ProcessTerm::hiding(ProcessTerm::constant("Pp"), action_set(["i"]));
        assert_eq!(
            moves,
            vec![
                (Activity::new(ActionType::tau(), Rate::from_int(1)), pp.clone()),
                (Activity::new(act("h"), Rate::from_int(1)), pp),
            ]
        );
        assert_eq!(
            current_action_types(&env, env.system()).unwrap(),
            [ActionType::tau(), act("h")].into_iter().collect()
        );
    }

    #[test]
    fn single_shared_activity_uses_min() {
        let env = parse_model("P := (a, 2).P; Q := (a, 5).Q; system (a, 2).P <a> (a, 5).Q;").unwrap();
        let moves = one_step(&env, env.system()).unwrap();
        assert_eq!(moves.len(), 1);
        assert_eq!(moves[0].0, Activity::new(act("a"), Rate::from_int(2)));
        assert_eq!(render_term(&moves[0].1), "P <a> Q");
    }

    #[test]
    fn shared_rate_formula_with_branching() {
        // left enables a at 1 and 3 (apparent 4), right at 2 (apparent 2)
        let src = "P := (a, 1).P + (a, 3).Q; Q := (b, 1).P; R := (a, 2).R; system P <a> R;";
        let env = parse_model(src).unwrap();
        let moves = one_step(&env, env.system()).unwrap();
        let rates: Vec<_> = moves.iter().map(|(a, _)| a.rate.clone()).collect();
        // (1/4)*(2/2)*min(4,2) = 1/2 and (3/4)*1*2 = 3/2
        assert_eq!(rates, vec![Rate::from_ratio(1, 2), Rate::from_ratio(3, 2)]);
    }

    #[test]
    fn passive_partner_takes_active_rate() {
        let src = "P := (a, T).P + (a, 2*T).Q; Q := (b, 1).P; R := (a, 3).R; system P <a> R;";
        let env = parse_model(src).unwrap();
        let rates: Vec<_> = one_step(&env, env.system()).unwrap().into_iter().map(|(a, _)| a.rate).collect();
        assert_eq!(rates, vec![Rate::from_int(1), Rate::from_int(2)]);

        let both = "P := (a, T).P; R := (a, 2*T).R + (a, 2*T).R; system P <a> R;";
        let env = parse_model(both).unwrap();
        let moves = one_step(&env, env.system()).unwrap();
        // (1/1)*(2/4)*min(1,4) = 1/2 weight each
        assert_eq!(moves[0].0.rate, Rate::passive(crate::terms::ratio(1, 2)).unwrap());
        assert_eq!(moves.len(), 2);
    }

    #[test]
    fn mixed_apparent_rate_in_cooperation_is_an_error() {
        let src = "P := (a, T).P + (a, 1).P; R := (a, 3).R; system P <a> R;";
        let env = parse_model(src).unwrap();
        assert!(matches!(one_step(&env, env.system()), Err(SemanticsError::MixedRateSum { .. })));
    }

    #[test]
    fn apparent_rates() {
        let env = parse_model("P := (a, 1).P + (a, 2).Q; Q := (a, T).Q; system P;").unwrap();
        assert_eq!(apparent_rate(&env, &ProcessTerm::constant("P"), &act("a")).unwrap(), Some(Rate::from_int(3)));
        assert_eq!(apparent_rate(&env, &ProcessTerm::constant("Q"), &act("a")).unwrap(), Some(Rate::top(1)));
        assert_eq!(apparent_rate(&env, &ProcessTerm::constant("P"), &act("b")).unwrap(), None);

        let fig2 = parse_model(FIG2).unwrap();
        assert_eq!(apparent_rate(&fig2, &ProcessTerm::constant("P1"), &act("l")).unwrap(), Some(Rate::from_int(1)));
        assert_eq!(
            current_action_types(&fig2, &ProcessTerm::constant("P3")).unwrap(),
            [act("l")].into_iter().collect()
        );
    }

    #[test]
    fn apparent_rate_under_hiding() {
        let env = parse_model(FIG1).unwrap();
        let sys = env.system();
        assert_eq!(apparent_rate(&env, sys, &ActionType::tau()).unwrap(), Some(Rate::from_int(1)));
        assert_eq!(apparent_rate(&env, sys, &act("i")).unwrap(), None);
        assert_eq!(apparent_rate(&env, sys, &act("h")).unwrap(), Some(Rate::from_int(1)));
    }

    #[test]
    fn fig1_graph() {
        let env = parse_model(FIG1).unwrap();
        let g = derive_system(&env, 100).unwrap();
        assert_eq!(g.state_count(), 2);
        let arcs: Vec<_> = g
            .transitions()
            .iter()
            .map(|t| (t.source, t.action.to_string(), t.rate.to_string(), t.target))
            .collect();
        assert_eq!(
            arcs,
            vec![
                (0, "h".into(), "1".into(), 1),
                (0, "tau".into(), "1".into(), 1),
                (1, "l".into(), "1".into(), 0),
            ]
        );
    }

    #[test]
    fn fig2_graph() {
        let env = parse_model(FIG2).unwrap();
        let g = derive_system(&env, 100).unwrap();
        assert_eq!(g.state_count(), 3);
        assert_eq!(g.transitions().len(), 4);
        assert_eq!(g.label(0), "P1");
        assert_eq!(g.label(1), "P2");
        assert_eq!(g.label(2), "P3");
    }

    #[test]
    fn self_loop_constant() {
        let env = parse_model("A := (a, 1).A; system A;").unwrap();
        let g = derive_system(&env, 10).unwrap();
        assert_eq!(g.state_count(), 1);
        assert_eq!(g.transitions().len(), 1);
        assert_eq!(g.transitions()[0].target, 0);
    }

    #[test]
    fn parallel_arcs_are_aggregated() {
        let env = parse_model("A := (a, 1).B + (a, 2).B + (a, T).B; B := (b, 1).A; system A;").unwrap();
        let g = derive_system(&env, 10).unwrap();
        let out = g.outgoing(0);
        assert_eq!(out.len(), 2);
        assert_eq!((out[0].rate.clone(), out[0].multiplicity), (Rate::from_int(3), 2));
        assert_eq!((out[1].rate.clone(), out[1].multiplicity), (Rate::top(1), 1));
    }

    #[test]
    fn state_cap_and_unguarded_recursion() {
        let env = parse_model("A := (a, 1).B; B := (a, 1).A; system A <> A;").unwrap();
        assert_eq!(derive_system(&env, 3), Err(SemanticsError::StateSpaceExceeded(3)));
        assert_eq!(derive_system(&env, 4).unwrap().state_count(), 4);
        assert_eq!(derive_system(&env, 0), Err(SemanticsError::InvalidLimit));

        let env = parse_model("A := B + (a, 1).A; B := A; system A;").unwrap();
        assert!(matches!(derive_system(&env, 10), Err(SemanticsError::UnguardedRecursion(_))));
    }

    #[test]
    fn bfs_numbering_uses_render_order() {
        let env = parse_model("S := (a, 1).Z + (b, 1).M + (c, 1).A; Z := (a, 1).S; M := (a, 1).S; A := (a, 1).S; system S;").unwrap();
        let g = derive_system(&env, 10).unwrap();
        let labels: Vec<_> = (0..4).map(|i| g.label(i)).collect();
        assert_eq!(labels, vec!["S", "A", "M", "Z"]);
    }
}
