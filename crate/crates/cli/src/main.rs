use clap::Parser;
use qss_cli::{run, Cli};
use std::time::Instant;

fn main() {
    let cli = Cli::parse();
    let start = Instant::now();
    match run(cli) {
        Ok(output) => {
            print!("{}", output.report);
            eprintln!("qss-lab: completed in {:.3} s", start.elapsed().as_secs_f64());
            std::process::exit(output.outcome.exit_code());
        }
        Err(err) => {
            eprintln!("qss-lab: error: {err}");
            std::process::exit(2);
        }
    }
}
