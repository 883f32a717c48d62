//! Image-caption alignment scorers.
//!
//! * `cos`: cosine similarity between the image and caption VLM embeddings,
//!   scaled by [`SCORE_SCALE`].
//! * `ret`: cycle-consistency scoring. The candidate image retrieves its
//!   top-`K_r` captions from the whole corpus (image-to-text), and the score
//!   is the best sentence-embedding similarity between any retrieved caption
//!   and the target caption. A retrieved caption that *is* the target scores
//!   exactly 1.0.
//!
//! Image-to-text retrievals are shared between captions through a
//! [`RetrievalCache`], populated in one batched pass before scoring.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embstore::DatasetBundle;
use crate::error::{Error, Result};
use crate::selection::CandidateSet;
use crate::simkernel::{self, SearchOptions, TopKResult};

/// Fixed scale factor applied to cosine scores.
pub const SCORE_SCALE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    Cos,
    Ret,
}

impl ScorerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScorerKind::Cos => "cos",
            ScorerKind::Ret => "ret",
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cos" => Ok(ScorerKind::Cos),
            "ret" => Ok(ScorerKind::Ret),
            _ => Err(Error::Config(format!("unknown scorer {s:?} (cos, ret)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerConfig {
    pub kind: ScorerKind,
    /// Captions retrieved per image; used by `ret` only. Clamped to the corpus size.
    pub k_r: usize,
}

impl ScorerConfig {
    pub fn cos() -> Self {
        ScorerConfig {
            kind: ScorerKind::Cos,
            k_r: 1,
        }
    }

    pub fn ret(k_r: usize) -> Self {
        ScorerConfig {
            kind: ScorerKind::Ret,
            k_r,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == ScorerKind::Ret && self.k_r == 0 {
            return Err(Error::Config("K_r must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_indices(bundle: &DatasetBundle, image: usize, caption: usize) -> Result<()> {
    if image >= bundle.images() {
        return Err(Error::IndexOutOfRange {
            what: "images",
            index: image,
            len: bundle.images(),
        });
    }
    if caption >= bundle.captions() {
        return Err(Error::IndexOutOfRange {
            what: "captions",
            index: caption,
            len: bundle.captions(),
        });
    }
    Ok(())
}

fn finite(score: f64, image: usize, caption: usize) -> Result<f64> {
    if score.is_finite() {
        Ok(score.clamp(-1.0, 1.0))
    } else {
        Err(Error::Degenerate(format!(
            "non-finite score for image {image}, caption {caption}"
        )))
    }
}

pub fn score_cos(bundle: &DatasetBundle, image: usize, caption: usize) -> Result<f64> {
    check_indices(bundle, image, caption)?;
    cos_unchecked(bundle, image, caption)
}

fn cos_unchecked(bundle: &DatasetBundle, image: usize, caption: usize) -> Result<f64> {
    let s = SCORE_SCALE * simkernel::similarity(&bundle.image_vlm, image, &bundle.text_vlm, caption);
    finite(s, image, caption)
}

/// Cycle-consistency score with a fresh image-to-text retrieval.
pub fn score_ret(bundle: &DatasetBundle, image: usize, caption: usize, k_r: usize) -> Result<f64> {
    check_indices(bundle, image, caption)?;
    ScorerConfig::ret(k_r).validate()?;
    let hit = simkernel::topk_rows(
        &bundle.image_vlm,
        &[image],
        &bundle.text_vlm,
        k_r,
        &SearchOptions::default(),
    )?;
    ret_from_retrieved(bundle, &hit[0].indices, image, caption)
}

/// Best sentence similarity between `caption` and the `retrieved` captions.
fn ret_from_retrieved(bundle: &DatasetBundle, retrieved: &[usize], image: usize, caption: usize) -> Result<f64> {
    let best = retrieved
        .iter()
        .map(|&r| {
            if r == caption {
                1.0
            } else {
                simkernel::similarity(&bundle.text_sent, r, &bundle.text_sent, caption)
            }
        })
        .fold(f64::NEG_INFINITY, f64::max);
    finite(best, image, caption)
}

/// Image-to-text top-`K_r` caption lists for a set of images.
#[derive(Debug, Clone)]
pub struct RetrievalCache {
    k_r: usize,
    lists: Vec<Option<Vec<usize>>>,
}

impl RetrievalCache {
    /// Retrieves for every distinct image in `images` in one batched pass.
    pub fn build(bundle: &DatasetBundle, images: &[usize], k_r: usize, opts: &SearchOptions) -> Result<Self> {
        let m = bundle.images();
        let mut wanted = vec![false; m];
        for &j in images {
            if j >= m {
                return Err(Error::IndexOutOfRange {
                    what: "images",
                    index: j,
                    len: m,
                });
            }
            wanted[j] = true;
        }
        let rows: Vec<usize> = (0..m).filter(|&j| wanted[j]).collect();
        let hits = if rows.is_empty() {
            Vec::new()
        } else {
            simkernel::topk_rows(&bundle.image_vlm, &rows, &bundle.text_vlm, k_r, opts)?
        };
        let mut lists = vec![None; m];
        for (j, hit) in rows.into_iter().zip(hits) {
            lists[j] = Some(hit.indices);
        }
        Ok(RetrievalCache { k_r, lists })
    }

    /// Wraps precomputed retrievals for every image row (`hits[j]` for image `j`).
    pub fn from_hits(k_r: usize, hits: Vec<TopKResult>) -> Self {
        RetrievalCache {
            k_r,
            lists: hits.into_iter().map(|h| Some(h.indices)).collect(),
        }
    }

    pub fn k_r(&self) -> usize {
        self.k_r
    }

    pub fn get(&self, image: usize) -> Option<&[usize]> {
        self.lists.get(image)?.as_deref()
    }

    /// Number of images with a cached retrieval.
    pub fn len(&self) -> usize {
        self.lists.iter().filter(|l| l.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A configured scorer bound to a bundle.
pub struct Scorer<'a> {
    bundle: &'a DatasetBundle,
    config: ScorerConfig,
    cache: Option<RetrievalCache>,
}

impl<'a> Scorer<'a> {
    /// Prepares a scorer for the given candidate sets, batching all
    /// image-to-text retrievals the `ret` scorer will need.
    pub fn for_candidates(
        bundle: &'a DatasetBundle,
        config: ScorerConfig,
        candidates: &[CandidateSet],
        opts: &SearchOptions,
    ) -> Result<Self> {
        config.validate()?;
        let cache = match config.kind {
            ScorerKind::Cos => None,
            ScorerKind::Ret => {
                let images: Vec<usize> = candidates
                    .iter()
                    .flat_map(|c| c.image_indices.iter().copied())
                    .collect();
                Some(RetrievalCache::build(bundle, &images, config.k_r, opts)?)
            }
        };
        Ok(Scorer { bundle, config, cache })
    }

    /// Scorer backed by an existing cache (required for `ret`).
    pub fn with_cache(bundle: &'a DatasetBundle, config: ScorerConfig, cache: Option<RetrievalCache>) -> Result<Self> {
        config.validate()?;
        if config.kind == ScorerKind::Ret && cache.as_ref().map(RetrievalCache::k_r) != Some(config.k_r) {
            return Err(Error::Config("ret scorer needs a retrieval cache built with the same K_r".into()));
        }
        Ok(Scorer { bundle, config, cache })
    }

    pub fn config(&self) -> &ScorerConfig {
        &self.config
    }

    pub fn score(&self, image: usize, caption: usize) -> Result<f64> {
        check_indices(self.bundle, image, caption)?;
        match self.config.kind {
            ScorerKind::Cos => cos_unchecked(self.bundle, image, caption),
            ScorerKind::Ret => {
                let retrieved = self
                    .cache
                    .as_ref()
                    .and_then(|c| c.get(image))
                    .ok_or_else(|| Error::Config(format!("image {image} missing from retrieval cache")))?;
                ret_from_retrieved(self.bundle, retrieved, image, caption)
            }
        }
    }

    /// Best-scoring candidate. Equal scores go to the earlier-ranked candidate.
    pub fn best(&self, cand: &CandidateSet) -> Result<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for &image in &cand.image_indices {
            let s = self.score(image, cand.caption_index)?;
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((image, s));
            }
        }
        best.ok_or_else(|| Error::Degenerate(format!("caption {} has no candidates", cand.caption_index)))
    }
}

/// Scores every candidate of `cand` and returns the best `(image, score)`.
pub fn score_candidates(bundle: &DatasetBundle, cand: &CandidateSet, config: &ScorerConfig) -> Result<(usize, f64)> {
    Scorer::for_candidates(bundle, *config, std::slice::from_ref(cand), &SearchOptions::default())?.best(cand)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embstore::{CaptionCorpus, CaptionRecord, EmbeddingMatrix};

    fn m(rows: &[&[f32]], p: &str) -> EmbeddingMatrix {
        let v: Vec<Vec<f32>> = rows.iter().map(|r| r.to_vec()).collect();
        EmbeddingMatrix::from_rows(&v, (0..rows.len()).map(|i| format!("{p}{i}")).collect(), false).unwrap()
    }

    fn corpus(n: usize) -> CaptionCorpus {
        CaptionCorpus::new(
            (0..n)
                .map(|i| CaptionRecord {
                    id: format!("c{i}"),
                    text: format!("caption {i}"),
                })
                .collect(),
        )
        .unwrap()
    }

    /// Three captions. Image 0 retrieves captions {0, 2} at K_r = 2.
    /// Sentence similarities to caption 1: caption 0 -> 0.8, caption 2 -> 0.5.
    fn fixture() -> DatasetBundle {
        let text = m(&[&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0], &[0.6, 0.8, 0.0]], "c");
        let image = m(&[&[0.9, 0.3, 0.0], &[0.0, 0.0, 1.0], &[0.0, 1.0, 0.0]], "i");
        let s1 = [0.0f32, 1.0, 0.0];
        let s0 = [0.6f32, 0.8, 0.0];
        let s2 = [0.866_025_4f32, 0.5, 0.0];
        let sent = m(&[&s0, &s1, &s2], "c");
        DatasetBundle::new(corpus(3), text, image, sent).unwrap()
    }

    #[test]
    fn cos_identity_and_orthogonal() {
        let t = m(&[&[1.0, 0.0], &[0.0, 1.0]], "c");
        let b = DatasetBundle::new(corpus(2), t.clone(), t.clone(), t).unwrap();
        assert_eq!(score_cos(&b, 0, 0).unwrap(), 1.0);
        assert_eq!(score_cos(&b, 1, 0).unwrap(), 0.0);
        assert!(matches!(score_cos(&b, 2, 0), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn ret_enumerate_and_max_fixture() {
        let b = fixture();
        let hit = simkernel::topk(&b.image_vlm.select_rows(&[0]).unwrap(), &b.text_vlm, 2).unwrap();
        assert_eq!(hit[0].indices, vec![0, 2]);
        let s = score_ret(&b, 0, 1, 2).unwrap();
        assert!((s - 0.8).abs() < 1e-6, "{s}");
    }

    #[test]
    fn ret_self_hit_is_exactly_one() {
        let b = fixture();
        // image 1 is identical to caption 1's VLM embedding
        assert_eq!(score_ret(&b, 1, 1, 1).unwrap(), 1.0);
        // exhaustive retrieval always contains the caption itself
        for img in 0..3 {
            for cap in 0..3 {
                assert_eq!(score_ret(&b, img, cap, 3).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn best_prefers_higher_then_earlier() {
        let b = fixture();
        let cand = CandidateSet {
            caption_index: 1,
            image_indices: vec![2, 1],
        };
        let (img, s) = score_candidates(&b, &cand, &ScorerConfig::cos()).unwrap();
        assert_eq!((img, s), (1, 1.0));
        let single = CandidateSet {
            caption_index: 1,
            image_indices: vec![2],
        };
        let (img, _) = score_candidates(&b, &single, &ScorerConfig::cos()).unwrap();
        assert_eq!(img, 2);
        // ties: with K_r = 3 every image scores 1.0, so the first candidate wins
        let (img, s) = score_candidates(&b, &cand, &ScorerConfig::ret(3)).unwrap();
        assert_eq!((img, s), (2, 1.0));
    }

    #[test]
    fn scorer_requires_matching_cache() {
        let b = fixture();
        assert!(Scorer::with_cache(&b, ScorerConfig::ret(2), None).is_err());
        let cache = RetrievalCache::build(&b, &[0], 2, &SearchOptions::default()).unwrap();
        assert_eq!(cache.len(), 1);
        let s = Scorer::with_cache(&b, ScorerConfig::ret(2), Some(cache)).unwrap();
        assert!(s.score(1, 0).is_err());
        assert!((s.score(0, 1).unwrap() - 0.8).abs() < 1e-6);
    }

    #[test]
    fn zero_k_r_rejected() {
        assert!(ScorerConfig::ret(0).validate().is_err());
        assert!(score_ret(&fixture(), 0, 0, 0).is_err());
    }
}
