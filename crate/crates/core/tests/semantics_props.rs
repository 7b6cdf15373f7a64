mod support;

use pepa_psni::parser::parse_model;
use pepa_psni::semantics::{apparent_rate, derive_system, one_step, outgoing_action_total, DEFAULT_MAX_STATES};
use pepa_psni::terms::{ratio, Rate, RateSum};

#[test]
fn derivation_is_deterministic() {
    for spec in support::corpus(200) {
        let env = spec.env();
        let g1 = derive_system(&env, DEFAULT_MAX_STATES).unwrap();
        let g2 = derive_system(&spec.env(), DEFAULT_MAX_STATES).unwrap();
        assert_eq!(g1, g2);
    }
}

// The outgoing total of every action from every derivative equals its
// apparent rate, computed compositionally without the graph.
#[test]
fn apparent_rate_matches_graph() {
    for spec in support::corpus(300) {
        let env = spec.env();
        let g = derive_system(&env, DEFAULT_MAX_STATES).unwrap();
        for s in 0..g.state_count() {
            for a in g.action_types().iter() {
                let total = outgoing_action_total(&g, s, a);
                let apparent = apparent_rate(&env, g.state(s), a).unwrap();
                let expected = apparent.map_or(RateSum::zero(), |r| RateSum::of(&r));
                assert_eq!(total, expected, "state {} action {a}", g.label(s));
            }
        }
    }
}

// Aggregated records preserve the one-step multiset.
#[test]
fn aggregation_is_sound() {
    for spec in support::corpus(200) {
        let env = spec.env();
        let g = derive_system(&env, DEFAULT_MAX_STATES).unwrap();
        for s in 0..g.state_count() {
            let moves = one_step(&env, g.state(s)).unwrap();
            let count: u32 = g.outgoing(s).iter().map(|t| t.multiplicity).sum();
            assert_eq!(count as usize, moves.len());
            for t in g.outgoing(s) {
                let mut sum = RateSum::zero();
                for (act, target) in &moves {
                    if act.action == t.action && target == g.state(t.target) {
                        sum.add(&act.rate);
                    }
                }
                assert_eq!(sum, RateSum::of(&t.rate));
            }
        }
    }
}

// For a shared action both partners perform, the joint apparent rate is
// the minimum of the two.
#[test]
fn cooperation_rate_is_bounded_by_slower_partner() {
    for (l, r) in [(1, 1), (2, 3), (5, 1)] {
        let src = format!("P := (a, {l}).P + (a, 1).P; Q := (a, {r}).Q; system P <a> Q;");
        let env = parse_model(&src).unwrap();
        let g = derive_system(&env, 10).unwrap();
        let total = outgoing_action_total(&g, 0, &pepa_psni::terms::ActionType::new("a").unwrap());
        let min = std::cmp::min(l + 1, r);
        assert_eq!(total, RateSum::of(&Rate::from_int(min)));
    }
}

#[test]
fn passive_partner_takes_active_rate() {
    let env = parse_model("P := (a, 3).P; Q := (a, T).Q + (a, 2*T).Q; system P <a> Q;").unwrap();
    let g = derive_system(&env, 10).unwrap();
    assert_eq!(g.state_count(), 1);
    assert_eq!(g.transitions()[0].rate, Rate::finite(ratio(3, 1)).unwrap());
    assert_eq!(g.transitions()[0].multiplicity, 2);
}

#[test]
fn hiding_keeps_rates() {
    let env = parse_model("P := (a, 3/2).Q; Q := (b, 1).P; system P / {a};").unwrap();
    let g = derive_system(&env, 10).unwrap();
    let t = &g.transitions()[0];
    assert!(t.action.is_tau());
    assert_eq!(t.rate, Rate::from_ratio(3, 2));
}
