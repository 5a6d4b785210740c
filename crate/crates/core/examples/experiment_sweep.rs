//! A small sampler comparison driven through the experiment harness, the
//! same machinery behind `npmc run`.
//!
//!     cargo run --example experiment_sweep

use npmc::experiment::{
    aggregate_results, results_csv, run_experiment, summary_csv, ExperimentConfig,
};

fn main() -> npmc::Result<()> {
    let mut config = ExperimentConfig::from_text(include_str!("configs/quick.conf"))?;
    config.apply_override("experiment.replicates=4")?;
    let rows = run_experiment(&config)?;
    let csv = results_csv(&config, &rows);
    println!("{} result rows; first lines:", rows.len());
    for line in csv.lines().take(9) {
        println!("  {line}");
    }
    println!();
    print!("{}", summary_csv(&aggregate_results(&rows)?));
    Ok(())
}
