//! Decide persistent stochastic non-interference with both characterizations.
//!
//! cargo run --example psni_check -- [model.pepa ...]
//! Without arguments the two shipped golden models are checked.

use std::path::PathBuf;

use pepa_psni::parser::parse_model;
use pepa_psni::security::{check_psni, Method, Witness};
use pepa_psni::semantics::{derive_system, DEFAULT_MAX_STATES};

fn main() {
    let mut paths: Vec<PathBuf> = std::env::args().skip(1).map(PathBuf::from).collect();
    if paths.is_empty() {
        let models = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("models");
        paths = vec![models.join("fig1.pepa"), models.join("fig2.pepa")];
    }
    for path in paths {
        let src = std::fs::read_to_string(&path).expect("readable model");
        let env = parse_model(&src).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let g = derive_system(&env, DEFAULT_MAX_STATES).unwrap_or_else(|e| panic!("{e}"));
        let v = check_psni(&env, Method::Both, DEFAULT_MAX_STATES).unwrap_or_else(|e| panic!("{e}"));
        println!("{}: PSNI {}", path.display(), if v.holds { "holds" } else { "fails" });
        if let Some(Witness::HighTransition { source, action, rate, target }) = &v.witness {
            println!("  witness {} --({action}, {rate})--> {}", g.label(*source), g.label(*target));
        }
        for d in &v.diagnostics {
            println!("  {d}");
        }
    }
}
