//! Cosine and cycle-consistency scores for one caption against its
//! candidates, and the effect of K_r.
//!
//! ```bash
//! cargo run --example cycle_scorer
//! ```

use pairsift::scoring::{score_candidates, score_cos, score_ret};
use pairsift::selection::select;
use pairsift::synthbench::{generate, BenchSpec};
use pairsift::{ScorerConfig, SelectionStrategy};

fn main() -> pairsift::Result<()> {
    let planted = generate(&BenchSpec {
        n: 300,
        sigma_image: 0.3,
        ..BenchSpec::default()
    })?;
    let bundle = &planted.bundle;
    let caption = 5;
    let cand = select(bundle, &SelectionStrategy::t2i(5), caption)?;

    println!("caption {caption}, candidates {:?}", cand.image_indices);
    println!("{:>6} {:>8} {:>8} {:>8} {:>8}", "image", "cos", "ret(1)", "ret(2)", "ret(5)");
    for &image in &cand.image_indices {
        println!(
            "{image:>6} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            score_cos(bundle, image, caption)?,
            score_ret(bundle, image, caption, 1)?,
            score_ret(bundle, image, caption, 2)?,
            score_ret(bundle, image, caption, 5)?,
        );
    }
    for config in [ScorerConfig::cos(), ScorerConfig::ret(2)] {
        let (image, score) = score_candidates(bundle, &cand, &config)?;
        println!("{}: best image {image} score {score:.4}", config.kind);
    }
    Ok(())
}
