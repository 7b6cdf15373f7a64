//! Parse a model, print its canonical form and any warnings.
//!
//! cargo run --example parse_and_render -- path/to/model.pepa

use pepa_psni::parser::{parse_model_with_warnings, render_model};

const DEFAULT: &str = "
high = {h};
% a server that may be probed by a high user
Server := (req, 2).Busy + (h, 1/2).Server;
Busy   := (serve, 3).Server;
Client := (req, T).Wait;
Wait   := (think, 1).Client;
system Server <req> Client;
";

fn main() {
    let src = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path).expect("readable model"),
        None => DEFAULT.to_string(),
    };
    match parse_model_with_warnings(&src) {
        Ok(parsed) => {
            print!("{}", render_model(&parsed.env));
            for w in parsed.warnings {
                eprintln!("{w}");
            }
        }
        Err(errs) => {
            eprintln!("{errs}");
            std::process::exit(2);
        }
    }
}
