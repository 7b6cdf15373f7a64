//! Build the generator of a model and solve for its steady state.
//!
//! cargo run --example steady_state -- [model.pepa]

use pepa_psni::ctmc::{build_generator, format_entry, steady_state};
use pepa_psni::parser::parse_model;
use pepa_psni::semantics::{derive_system, DEFAULT_MAX_STATES};

// Two-slot buffer fed at rate 2 and drained at rate 3.
const DEFAULT: &str = "
B0 := (put, 2).B1;
B1 := (put, 2).B2 + (get, 3).B0;
B2 := (get, 3).B1;
system B0;
";

fn main() {
    let src = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path).expect("readable model"),
        None => DEFAULT.to_string(),
    };
    let env = parse_model(&src).unwrap_or_else(|e| panic!("{e}"));
    let g = derive_system(&env, DEFAULT_MAX_STATES).unwrap_or_else(|e| panic!("{e}"));
    let q = build_generator(&g).unwrap_or_else(|e| panic!("{e}"));
    println!("generator:");
    for i in 0..q.size() {
        let row: Vec<String> = (0..q.size()).map(|j| format!("{:>6}", format_entry(&q.entry(i, j)))).collect();
        println!("  {}   {}", row.join(" "), g.label(i));
    }
    match steady_state(&q) {
        Ok(pi) => {
            println!("steady state (residual {:.1e}):", pi.residual);
            for (s, p) in pi.probs.iter().enumerate() {
                println!("  {p:.9}  {}", g.label(s));
            }
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(3);
        }
    }
}
