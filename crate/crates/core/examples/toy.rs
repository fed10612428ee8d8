//! Runs one replicate of the two-cluster benchmark and prints its trace and metrics.
//!
//! `cargo run --release -p miri-core --example toy -- [seed]`

use std::time::Instant;

use miri_core::ToyExperiment;

fn main() -> Result<(), miri_core::MiriError> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let start = Instant::now();
    let run = ToyExperiment::default().run(seed)?;
    print!("{}", run.output.trace.to_csv(None));
    print!("{}", run.report.to_record());
    println!("elapsed_s = {:.1}", start.elapsed().as_secs_f64());
    Ok(())
}
