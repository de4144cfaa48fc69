use clap::Parser;
use padic_dulac::cli::{execute, Args};

fn main() {
    let args = Args::parse();
    let (out, code) = execute(&args);
    print!("{out}");
    std::process::exit(code);
}
