//! Candidate sets produced by each selection strategy for one caption.
//!
//! ```bash
//! cargo run --example selection_strategies
//! ```

use pairsift::selection::select;
use pairsift::synthbench::{generate, BenchSpec};
use pairsift::{SelectionKind, SelectionStrategy};

fn main() -> pairsift::Result<()> {
    let planted = generate(&BenchSpec {
        n: 200,
        ..BenchSpec::default()
    })?;
    let bundle = &planted.bundle;
    // a corrupted caption whose latent was reused by some other image
    let caption = (0..200)
        .find(|&i| planted.corrupted[i] && planted.truth.contains(&i))
        .unwrap_or(0);
    println!(
        "caption {caption}: own image drawn from latent {}, corrupted {}",
        planted.truth[caption], planted.corrupted[caption]
    );

    for kind in SelectionKind::ALL {
        let set = select(bundle, &SelectionStrategy::new(kind, 5), caption)?;
        let hit = set.image_indices.iter().position(|&j| planted.truth[j] == caption);
        println!("{kind:>4}: {:?} matching image at {hit:?}", set.image_indices);
    }
    Ok(())
}
