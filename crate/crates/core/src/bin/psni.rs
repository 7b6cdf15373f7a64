use clap::Parser;
use pepa_psni::cli::{run, Cli};

fn main() {
    let out = run(&Cli::parse().into_config());
    print!("{}", out.stdout);
    eprint!("{}", out.stderr);
    std::process::exit(out.exit_code);
}
