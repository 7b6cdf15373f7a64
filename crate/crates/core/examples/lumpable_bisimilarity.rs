//! Coarsest lumpable bisimulation of a model, with and without the high
//! actions ignored, and the lumped chain it induces.
//!
//! cargo run --example lumpable_bisimilarity -- [model.pepa]

use pepa_psni::ctmc::{build_generator, steady_state};
use pepa_psni::lumping::{block_masses, coarsest_lumpable_partition, quotient_generator, IgnoredActions};
use pepa_psni::parser::parse_model;
use pepa_psni::semantics::{derive_system, DEFAULT_MAX_STATES};

// Two replicas of the same worker: their states lump pairwise.
const DEFAULT: &str = "
high = {h};
W  := (job, 1).D;
D  := (done, 2).W + (h, 1).D2;
D2 := (done, 2).W;
system W <> W;
";

fn main() {
    let src = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path).expect("readable model"),
        None => DEFAULT.to_string(),
    };
    let env = parse_model(&src).unwrap_or_else(|e| panic!("{e}"));
    let g = derive_system(&env, DEFAULT_MAX_STATES).unwrap_or_else(|e| panic!("{e}"));
    for ignored in [IgnoredActions::tau_only(), IgnoredActions::with(env.high())] {
        let p = coarsest_lumpable_partition(&g, &ignored, None);
        println!("ignoring {ignored}: {} blocks over {} states", p.block_count(), g.state_count());
        for (i, b) in p.blocks().iter().enumerate() {
            let labels: Vec<String> = b.iter().map(|&s| g.label(s)).collect();
            println!("  B{i}: {}", labels.join(" | "));
        }
    }
    let q = build_generator(&g).unwrap_or_else(|e| panic!("{e}"));
    let p = coarsest_lumpable_partition(&g, &IgnoredActions::tau_only(), None);
    if let (Ok(full), Ok(lumped)) = (steady_state(&q), steady_state(&quotient_generator(&q, &p))) {
        println!("block  classwise sum  lumped chain");
        for (i, (a, b)) in block_masses(&p, &full.probs).iter().zip(&lumped.probs).enumerate() {
            println!("  B{i}   {a:.9}    {b:.9}");
        }
    }
}
