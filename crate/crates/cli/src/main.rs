use clap::Parser;
use std::time::Instant;
use tlsscope_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let start = Instant::now();
    match run(&cli) {
        Ok(summary) => {
            print!("{summary}");
            eprintln!("wall time {:.2} s", start.elapsed().as_secs_f64());
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}
