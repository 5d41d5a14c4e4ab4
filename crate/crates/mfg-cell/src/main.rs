use std::io::{stderr, stdout};
use std::process::exit;

fn main() {
    let code = mfg_cell::cli::run_cli(std::env::args_os(), &mut stdout(), &mut stderr());
    exit(code);
}
