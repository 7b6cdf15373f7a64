//! Building secure systems from secure parts: prefixing, hiding and
//! cooperation over low actions all preserve PSNI.

use pepa_psni::parser::parse_model;
use pepa_psni::security::{check_psni, Method};
use pepa_psni::semantics::DEFAULT_MAX_STATES;

const PARTS: &str = "
high = {h};
P1 := (h, 1).P2 + (l, 1).P3;
P2 := (l, 1).P3;
P3 := (l, 2).P1;
Q  := (l, 3).Q2 + (h, 2).Q;
Q2 := (m, 1).Q;
";

fn verdict(system: &str, extra: &str) -> bool {
    let env = parse_model(&format!("{PARTS}{extra}system {system};")).unwrap_or_else(|e| panic!("{e}"));
    check_psni(&env, Method::Both, DEFAULT_MAX_STATES).unwrap_or_else(|e| panic!("{e}")).holds
}

fn main() {
    for (name, system, extra) in [
        ("P", "P1", ""),
        ("Q", "Q", ""),
        ("(m, 2).P", "Top", "Top := (m, 2).P1;\n"),
        ("P / {l}", "P1 / {l}", ""),
        ("P <l> Q", "P1 <l> Q", ""),
        ("P <> Q", "P1 <> Q", ""),
        ("(P <l> Q) / {m}", "(P1 <l> Q) / {m}", ""),
    ] {
        println!("{name:<18} PSNI {}", if verdict(system, extra) { "holds" } else { "fails" });
    }
    // An insecure part breaks the whole.
    let leak = "Leak := (h, 1).Leak2 + (l, 1).Leak; Leak2 := (m, 1).Leak;\n";
    println!("{:<18} PSNI {}", "P <l> Leak", if verdict("P1 <l> Leak", leak) { "holds" } else { "fails" });
}
