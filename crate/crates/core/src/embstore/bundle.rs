use std::path::{Path, PathBuf};

use super::corpus::{read_corpus, CaptionCorpus};
use super::format::read_matrix;
use super::matrix::EmbeddingMatrix;
use crate::error::{Error, Result};

/// The four aligned inputs of a refinement run.
///
/// `text_vlm` and `text_sent` are row-aligned with `corpus`; `image_vlm` holds
/// the image pool. All three matrices are unit-normalized after construction.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub corpus: CaptionCorpus,
    pub text_vlm: EmbeddingMatrix,
    pub image_vlm: EmbeddingMatrix,
    pub text_sent: EmbeddingMatrix,
}

#[derive(Debug, Clone)]
pub struct BundlePaths {
    pub corpus: PathBuf,
    pub text_vlm: PathBuf,
    pub image_vlm: PathBuf,
    pub text_sent: PathBuf,
}

impl BundlePaths {
    /// Conventional file names inside one directory, as written by the bench generator.
    pub fn in_dir(dir: &Path) -> Self {
        BundlePaths {
            corpus: dir.join("captions.jsonl"),
            text_vlm: dir.join("text_vlm.emb"),
            image_vlm: dir.join("image_vlm.emb"),
            text_sent: dir.join("text_sent.emb"),
        }
    }
}

impl DatasetBundle {
    pub fn new(
        corpus: CaptionCorpus,
        text_vlm: EmbeddingMatrix,
        image_vlm: EmbeddingMatrix,
        text_sent: EmbeddingMatrix,
    ) -> Result<Self> {
        let n = corpus.len();
        for (name, m) in [("text_vlm", &text_vlm), ("text_sent", &text_sent)] {
            if m.rows() != n {
                return Err(Error::LengthMismatch {
                    left_name: name.into(),
                    left: m.rows(),
                    right_name: "corpus".into(),
                    right: n,
                });
            }
        }
        if text_vlm.dim() != image_vlm.dim() {
            return Err(Error::DimensionMismatch {
                left_name: "text_vlm".into(),
                left: text_vlm.dim(),
                right_name: "image_vlm".into(),
                right: image_vlm.dim(),
            });
        }
        for (name, m) in [("text_vlm", &text_vlm), ("text_sent", &text_sent)] {
            if let Some((row, (expected, found))) = corpus
                .ids()
                .zip(m.ids())
                .enumerate()
                .find(|(_, (a, b))| *a != b.as_str())
            {
                return Err(Error::IdMisalignment {
                    matrix: name.into(),
                    row,
                    expected: expected.into(),
                    found: found.clone(),
                });
            }
        }
        Ok(DatasetBundle {
            corpus,
            text_vlm: text_vlm.into_normalized()?,
            image_vlm: image_vlm.into_normalized()?,
            text_sent: text_sent.into_normalized()?,
        })
    }

    /// Caption count N.
    pub fn captions(&self) -> usize {
        self.corpus.len()
    }

    /// Image pool size M.
    pub fn images(&self) -> usize {
        self.image_vlm.rows()
    }

    /// Whether image row `j` can stand for the image generated from caption `j`.
    pub fn is_paired(&self) -> bool {
        self.captions() == self.images()
    }
}

pub fn load_bundle(paths: &BundlePaths) -> Result<DatasetBundle> {
    let corpus = read_corpus(&paths.corpus)?;
    let text_vlm = read_matrix(&paths.text_vlm)?;
    let image_vlm = read_matrix(&paths.image_vlm)?;
    let text_sent = read_matrix(&paths.text_sent)?;
    DatasetBundle::new(corpus, text_vlm, image_vlm, text_sent)
}
