//! Compare the engine with the brute-force reference on random configurations.
//!
//! ```bash
//! cargo run --example oracle_check
//! ```

use pairsift::synthbench::{diff_manifests, generate, oracle_refine, BenchSpec, ORACLE_SCORE_TOL};
use pairsift::{refine, PipelineConfig, ScorerConfig, SelectionKind, SelectionStrategy};

fn main() -> pairsift::Result<()> {
    let planted = generate(&BenchSpec {
        n: 250,
        sigma_text: 0.2,
        sigma_image: 0.2,
        ..BenchSpec::default()
    })?;
    let mut mismatches = 0;
    for kind in SelectionKind::ALL {
        for scorer in [ScorerConfig::cos(), ScorerConfig::ret(1), ScorerConfig::ret(3)] {
            let config = PipelineConfig::new(SelectionStrategy::new(kind, 8), scorer, 0.8);
            let engine = refine(&planted.bundle, &config)?;
            let oracle = oracle_refine(&planted.bundle, &config)?;
            match diff_manifests(&engine, &oracle, ORACLE_SCORE_TOL) {
                None => println!("{kind:>4} {scorer:?}: identical ({} kept)", engine.len()),
                Some(div) => {
                    mismatches += 1;
                    println!("{kind:>4} {scorer:?}: {div}");
                }
            }
        }
    }
    if mismatches > 0 {
        std::process::exit(1);
    }
    Ok(())
}
