//! Exact top-K search, with both retrieval directions from a single pass.
//!
//! ```bash
//! cargo run --example topk_search
//! ```

use pairsift::simkernel::{topk, topk_both, SearchOptions};
use pairsift::EmbeddingMatrix;

fn main() -> pairsift::Result<()> {
    let ids = |p: &str, n: usize| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
    let queries = EmbeddingMatrix::from_rows(&[vec![1.0, 0.0], vec![0.6, 0.8]], ids("q", 2), false)?.into_normalized()?;
    // rows 1 and 3 are identical, so their scores tie exactly
    let pool = EmbeddingMatrix::from_rows(
        &[vec![0.0, 1.0], vec![1.0, 1.0], vec![-1.0, 0.0], vec![1.0, 1.0], vec![1.0, 0.1]],
        ids("p", 5),
        false,
    )?
    .into_normalized()?;

    for (i, hit) in topk(&queries, &pool, 3)?.iter().enumerate() {
        println!("query {i}: {:?} {:?}", hit.indices, hit.scores);
    }

    // query->pool top-3 and pool->query top-1 together
    let (forward, backward) = topk_both(&queries, &pool, 3, 1, &SearchOptions::default())?;
    assert_eq!(forward, topk(&queries, &pool, 3)?);
    for (j, hit) in backward.iter().enumerate() {
        println!("pool {j} -> query {:?}", hit.indices);
    }
    Ok(())
}
