//! Candidate selection: which images each caption may be paired with.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embstore::DatasetBundle;
use crate::error::{Error, Result};
use crate::simkernel::{self, SearchOptions, TopKResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionKind {
    /// The caption's own generated image only.
    One,
    /// Text-to-image retrieval over the whole image pool.
    T2i,
    /// Text-to-text retrieval over captions, mapped to their paired images.
    T2t,
    /// Image-to-text retrieval from the caption's own image, mapped to paired images.
    I2t,
    /// Image-to-image retrieval from the caption's own image.
    I2i,
}

impl SelectionKind {
    pub const ALL: [SelectionKind; 5] = [
        SelectionKind::One,
        SelectionKind::T2i,
        SelectionKind::T2t,
        SelectionKind::I2t,
        SelectionKind::I2i,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SelectionKind::One => "one",
            SelectionKind::T2i => "t2i",
            SelectionKind::T2t => "t2t",
            SelectionKind::I2t => "i2t",
            SelectionKind::I2i => "i2i",
        }
    }

    /// Strategies that rely on image row `i` being caption `i`'s image.
    pub fn needs_pairing(self) -> bool {
        self != SelectionKind::T2i
    }
}

impl fmt::Display for SelectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SelectionKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?} (one, t2i, t2t, i2t, i2i)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionStrategy {
    pub kind: SelectionKind,
    /// Candidates per caption; ignored for [`SelectionKind::One`]. Clamped to
    /// the retrieval pool size.
    pub k: usize,
}

impl SelectionStrategy {
    pub fn new(kind: SelectionKind, k: usize) -> Self {
        SelectionStrategy { kind, k }
    }

    pub fn one() -> Self {
        SelectionStrategy::new(SelectionKind::One, 1)
    }

    pub fn t2i(k: usize) -> Self {
        SelectionStrategy::new(SelectionKind::T2i, k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != SelectionKind::One && self.k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        Ok(())
    }

    fn check_bundle(&self, bundle: &DatasetBundle) -> Result<()> {
        self.validate()?;
        if self.kind.needs_pairing() && !bundle.is_paired() {
            return Err(Error::Unpaired {
                strategy: self.kind.to_string(),
                captions: bundle.captions(),
                images: bundle.images(),
            });
        }
        Ok(())
    }
}

/// Candidate image rows for one caption, in retrieval rank order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub caption_index: usize,
    pub image_indices: Vec<usize>,
}

pub fn select(
    bundle: &DatasetBundle,
    strategy: &SelectionStrategy,
    caption_index: usize,
) -> Result<CandidateSet> {
    strategy.check_bundle(bundle)?;
    if caption_index >= bundle.captions() {
        return Err(Error::IndexOutOfRange {
            what: "captions",
            index: caption_index,
            len: bundle.captions(),
        });
    }
    let mut sets = select_rows(bundle, strategy, &[caption_index])?;
    Ok(sets.pop().expect("one row in, one set out"))
}

/// Candidate sets for every caption, from one batched retrieval pass.
pub fn select_all(bundle: &DatasetBundle, strategy: &SelectionStrategy) -> Result<Vec<CandidateSet>> {
    strategy.check_bundle(bundle)?;
    let rows: Vec<usize> = (0..bundle.captions()).collect();
    select_rows(bundle, strategy, &rows)
}

fn select_rows(
    bundle: &DatasetBundle,
    strategy: &SelectionStrategy,
    captions: &[usize],
) -> Result<Vec<CandidateSet>> {
    if captions.is_empty() {
        return Ok(Vec::new());
    }
    let opts = SearchOptions::default();
    let k = strategy.k;
    let hits = match strategy.kind {
        SelectionKind::One => {
            return Ok(captions
                .iter()
                .map(|&i| CandidateSet {
                    caption_index: i,
                    image_indices: vec![i],
                })
                .collect())
        }
        SelectionKind::T2i => simkernel::topk_rows(&bundle.text_vlm, captions, &bundle.image_vlm, k, &opts)?,
        // caption j's paired image is image row j, so retrieved caption rows
        // map to image rows unchanged
        SelectionKind::T2t => simkernel::topk_rows(&bundle.text_vlm, captions, &bundle.text_vlm, k, &opts)?,
        SelectionKind::I2t => simkernel::topk_rows(&bundle.image_vlm, captions, &bundle.text_vlm, k, &opts)?,
        SelectionKind::I2i => simkernel::topk_rows(&bundle.image_vlm, captions, &bundle.image_vlm, k, &opts)?,
    };
    Ok(captions
        .iter()
        .zip(hits)
        .map(|(&i, hit)| candidates_from_hits(i, hit))
        .collect())
}

/// Builds a candidate set from retrieval hits already expressed as image
/// rows, dropping repeats while keeping the best rank of each image.
pub fn candidates_from_hits(caption_index: usize, hit: TopKResult) -> CandidateSet {
    let mut seen = std::collections::HashSet::with_capacity(hit.indices.len());
    let image_indices = hit.indices.into_iter().filter(|j| seen.insert(*j)).collect();
    CandidateSet {
        caption_index,
        image_indices,
    }
}
