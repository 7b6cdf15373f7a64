//! Explore the derivation graph of a model and print it as text or DOT.
//!
//! cargo run --example derivation_graph -- [--dot] [model.pepa]

use pepa_psni::cli::graph_dot;
use pepa_psni::parser::parse_model;
use pepa_psni::semantics::{derive_system, DEFAULT_MAX_STATES};

const DEFAULT: &str = "
Proc := (work, 2).Rest + (work, 1).Rest;
Rest := (idle, 1).Proc;
Res  := (work, 3).Res;
system Proc <work> Res;
";

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dot = args.iter().any(|a| a == "--dot");
    let src = match args.iter().find(|a| !a.starts_with("--")) {
        Some(path) => std::fs::read_to_string(path).expect("readable model"),
        None => DEFAULT.to_string(),
    };
    let env = parse_model(&src).unwrap_or_else(|e| panic!("{e}"));
    let g = derive_system(&env, DEFAULT_MAX_STATES).unwrap_or_else(|e| panic!("{e}"));
    if dot {
        print!("{}", graph_dot(&g));
        return;
    }
    println!("{} states, {} transition records", g.state_count(), g.transitions().len());
    for s in 0..g.state_count() {
        println!("  {s}: {}", g.label(s));
        for t in g.outgoing(s) {
            println!("      --({}, {})x{}--> {}", t.action, t.rate, t.multiplicity, t.target);
        }
    }
}
