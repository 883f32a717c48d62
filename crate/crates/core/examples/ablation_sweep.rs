//! Sweep strategies, scorers and tau, and print the ablation table as CSV.
//!
//! ```bash
//! cargo run --example ablation_sweep
//! ```

use pairsift::pipeline::{ablate, write_ablation_csv_to};
use pairsift::synthbench::{generate, BenchSpec};
use pairsift::{PipelineConfig, ScorerConfig, SelectionStrategy};

fn main() -> pairsift::Result<()> {
    let planted = generate(&BenchSpec {
        n: 400,
        ..BenchSpec::default()
    })?;
    let mut grid = Vec::new();
    for strategy in [SelectionStrategy::one(), SelectionStrategy::t2i(5), SelectionStrategy::t2i(15)] {
        for scorer in [ScorerConfig::cos(), ScorerConfig::ret(2)] {
            for tau in [0.5, 0.9, 1.0] {
                grid.push(PipelineConfig::new(strategy, scorer, tau));
            }
        }
    }
    let rows = ablate(&planted.bundle, &grid)?;
    write_ablation_csv_to(&rows, std::io::stdout().lock())?;
    Ok(())
}
