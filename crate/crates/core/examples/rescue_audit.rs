//! Audit match, rescue and purge rates on planted bundles for several
//! configurations.
//!
//! ```bash
//! cargo run --example rescue_audit -- 10
//! ```

use pairsift::synthbench::{audit, generate, BenchSpec};
use pairsift::{refine, PipelineConfig, ScorerConfig, SelectionStrategy};

fn main() -> pairsift::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let configs = [
        ("one + cos", PipelineConfig::new(SelectionStrategy::one(), ScorerConfig::cos(), 0.9)),
        ("t2i(15) + cos", PipelineConfig::new(SelectionStrategy::t2i(15), ScorerConfig::cos(), 0.9)),
        ("t2i(15) + ret(1)", PipelineConfig::new(SelectionStrategy::t2i(15), ScorerConfig::ret(1), 0.9)),
        ("t2i(15) + ret(2)", PipelineConfig::new(SelectionStrategy::t2i(15), ScorerConfig::ret(2), 0.9)),
    ];
    println!("{:>4} {:<18} {:>7} {:>7} {:>7}", "seed", "config", "match", "rescue", "purge");
    for seed in 1..=seeds {
        let planted = generate(&BenchSpec {
            seed,
            ..BenchSpec::default()
        })?;
        for (name, config) in &configs {
            let r = audit(&planted, &refine(&planted.bundle, config)?)?;
            println!(
                "{seed:>4} {name:<18} {:>7.4} {:>7.4} {:>7.4}",
                r.match_rate, r.rescue_rate, r.purge_precision
            );
        }
    }
    Ok(())
}
