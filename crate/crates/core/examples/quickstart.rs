//! Generate a planted bundle, refine it with the default configuration and
//! write the manifest.
//!
//! ```bash
//! cargo run --example quickstart -- /tmp/pairsift-quickstart
//! ```

use std::path::PathBuf;

use pairsift::pipeline::{stats_path, write_manifest};
use pairsift::synthbench::{audit, generate, write_bench, BenchSpec};
use pairsift::{load_bundle, refine, PipelineConfig};

fn main() -> pairsift::Result<()> {
    let dir = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pairsift-quickstart"));

    let planted = generate(&BenchSpec::default())?;
    let paths = write_bench(&planted, &dir)?;
    let bundle = load_bundle(&paths)?;

    // t2i(15) candidates, ret(2) scorer, keep 90%
    let config = PipelineConfig::default();
    let manifest = refine(&bundle, &config)?;
    let out = dir.join("manifest.jsonl");
    write_manifest(&manifest, &bundle, &out)?;

    println!("kept {} of {} captions", manifest.len(), bundle.captions());
    println!("reassigned {:.1}%", 100.0 * manifest.stats.reassignment_rate);
    println!("manifest {}", out.display());
    println!("stats    {}", stats_path(&out).display());

    let report = audit(&planted, &manifest)?;
    println!("match rate {:.3}, rescue rate {:.3}", report.match_rate, report.rescue_rate);
    for e in manifest.entries.iter().take(3) {
        println!(
            "  {} -> {} ({:.4})",
            bundle.corpus.id(e.caption_index),
            bundle.image_vlm.id(e.image_index),
            e.score
        );
    }
    Ok(())
}
