//! Write and read `SYNCEMB1` matrices, ID sidecars and a caption corpus,
//! then load them as a bundle.
//!
//! ```bash
//! cargo run --example embedding_files
//! ```

use std::fs;

use pairsift::embstore::{
    encode_header, ids_path, read_matrix, write_corpus, write_matrix, CaptionCorpus, CaptionRecord, HEADER_LEN,
};
use pairsift::{load_bundle, BundlePaths, EmbeddingMatrix};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let paths = BundlePaths::in_dir(dir.path());

    let ids: Vec<String> = (0..3).map(|i| format!("c{i}")).collect();
    let rows = [vec![3.0f32, 4.0], vec![0.0, 2.0], vec![1.0, 1.0]];
    let text = EmbeddingMatrix::from_rows(&rows, ids.clone(), false)?.into_normalized()?;
    write_matrix(&text, &paths.text_vlm)?;
    write_matrix(&text, &paths.text_sent)?;

    // the same layout written by hand: header, f32 LE rows, one ID per line
    let images: [[f32; 2]; 3] = [[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]];
    let mut bytes = encode_header(3, 2, true).to_vec();
    bytes.extend(images.iter().flatten().flat_map(|x| x.to_le_bytes()));
    fs::write(&paths.image_vlm, bytes)?;
    fs::write(ids_path(&paths.image_vlm), "img0\nimg1\nimg2\n")?;

    let records = ids
        .iter()
        .map(|id| CaptionRecord {
            id: id.clone(),
            text: format!("caption {id}"),
        })
        .collect();
    write_corpus(&CaptionCorpus::new(records)?, &paths.corpus)?;

    let m = read_matrix(&paths.image_vlm)?;
    println!("{} rows x {} dims, normalized {}", m.rows(), m.dim(), m.is_normalized());
    println!("header {HEADER_LEN} bytes, file {} bytes", fs::metadata(&paths.image_vlm)?.len());
    let bundle = load_bundle(&paths)?;
    println!("bundle: {} captions, {} images", bundle.captions(), bundle.images());

    // a truncated payload is rejected
    let full = fs::read(&paths.image_vlm)?;
    fs::write(&paths.image_vlm, &full[..full.len() - 4])?;
    println!("truncated: {}", load_bundle(&paths).unwrap_err());
    Ok(())
}
