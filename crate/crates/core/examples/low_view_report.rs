//! What a low observer sees: steady states of P/H (high user present) and
//! P\H (absent), compared class by class.
//!
//! cargo run --example low_view_report -- [lambda rho]

use pepa_psni::parser::parse_model;
use pepa_psni::security::low_view_report;
use pepa_psni::semantics::DEFAULT_MAX_STATES;

fn main() {
    let args: Vec<i64> = std::env::args().skip(1).map(|a| a.parse().expect("integer rate")).collect();
    let (lambda, rho) = match args[..] {
        [l, r] => (l, r),
        _ => (1, 2),
    };
    let src = format!(
        "high = {{h}};
         P1 := (h, {lambda}).P2 + (l, {lambda}).P3;
         P2 := (l, {lambda}).P3;
         P3 := (l, {rho}).P1;
         system P1;"
    );
    let env = parse_model(&src).unwrap_or_else(|e| panic!("{e}"));
    let r = low_view_report(&env, DEFAULT_MAX_STATES).unwrap_or_else(|e| panic!("{e}"));
    for (name, view) in [("P/H", &r.hidden), ("P\\H", &r.restricted)] {
        println!("{name}");
        for (l, p) in view.labels.iter().zip(&view.steady.probs) {
            println!("  {l:<4} {p:.9}");
        }
    }
    for (i, c) in r.classes.iter().enumerate() {
        println!("class {i}: {:.9} vs {:.9}", c.hidden_mass, c.restricted_mass);
    }
    println!("low views {}", if r.consistent() { "agree" } else { "differ" });
}
