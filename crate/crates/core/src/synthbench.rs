//! Planted-alignment benchmarks and a brute-force reference refinement.
//!
//! Generator (pinned; any implementation reproducing it bit-exactly must
//! follow these steps):
//!
//! * RNG: `ChaCha8Rng::seed_from_u64(seed)`, one independent stream per
//!   quantity via `set_stream`: 0 latents, 1 projection, 2 VLM text noise,
//!   3 sentence noise, 4 corruption draws, 5 image noise. Normal variates
//!   come from `rand_distr::StandardNormal` as `f64`.
//! * Latents: `z_i` = `d` normals, L2-normalized, for `i` in `0..n`.
//! * Projection: `P` is `d_s x d`, row-major, normals divided by `sqrt(d)`.
//! * `text_vlm[i] = normalize(z_i + sigma_text * e)` with `e` = `d` normals.
//! * `text_sent[i] = normalize(P z_i + sigma_text * e)` with `e` = `d_s` normals.
//! * Corruption, per row: draw `u` uniform in `[0, 1)`; if `u < p_corrupt`,
//!   draw `j` uniform in `0..n-1` and use `j + 1` when `j >= i`, so the
//!   latent differs from `i`. Otherwise the latent is `i`.
//! * `image_vlm[i] = normalize(z_truth[i] + sigma_image * e)`, `e` = `d` normals.
//! * Noise is drawn even when the corresponding sigma is zero, so bundles
//!   that differ only in a sigma share every other draw.
//! * Arithmetic is `f64`; rows are cast to `f32` after normalization and
//!   flagged normalized. Caption IDs are `c{i:06}`, image IDs `img{i:06}`,
//!   caption text `caption {i}`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::atomic::write_atomic;
use crate::embstore::{write_corpus, write_matrix, BundlePaths, CaptionCorpus, CaptionRecord, DatasetBundle, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::pipeline::{PipelineConfig, RefinedManifest, ScoredTriple};
use crate::scoring::ScorerKind;
use crate::selection::SelectionKind;

/// Largest caption or image count [`oracle_refine`] accepts.
pub const ORACLE_LIMIT: usize = 2000;

/// Score tolerance used when comparing engine and oracle manifests.
pub const ORACLE_SCORE_TOL: f64 = 1e-5;

const STREAM_LATENT: u64 = 0;
const STREAM_PROJECTION: u64 = 1;
const STREAM_TEXT: u64 = 2;
const STREAM_SENT: u64 = 3;
const STREAM_CORRUPT: u64 = 4;
const STREAM_IMAGE: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub n: usize,
    pub d: usize,
    pub d_s: usize,
    pub sigma_text: f64,
    pub sigma_image: f64,
    pub p_corrupt: f64,
    pub seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            n: 500,
            d: 32,
            d_s: 16,
            sigma_text: 0.05,
            sigma_image: 0.05,
            p_corrupt: 0.2,
            seed: 7,
        }
    }
}

impl BenchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("bench n must be at least 2, got {}", self.n)));
        }
        if self.d == 0 || self.d_s == 0 {
            return Err(Error::Config("bench dimensions must be positive".into()));
        }
        for (name, s) in [("sigma_text", self.sigma_text), ("sigma_image", self.sigma_image)] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {s}")));
            }
        }
        if !(0.0..=1.0).contains(&self.p_corrupt) {
            return Err(Error::Config(format!("p_corrupt must be in [0, 1], got {}", self.p_corrupt)));
        }
        Ok(())
    }
}

/// A generated bundle with its ground truth.
#[derive(Debug, Clone)]
pub struct PlantedBundle {
    pub spec: BenchSpec,
    pub bundle: DatasetBundle,
    /// Latent index each image was generated from.
    pub truth: Vec<usize>,
    pub corrupted: Vec<bool>,
}

impl PlantedBundle {
    pub fn corrupted_count(&self) -> usize {
        self.corrupted.iter().filter(|&&c| c).count()
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn normals(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

fn normalize(v: &mut [f64]) -> Result<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Degenerate("generated a zero vector".into()));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(())
}

fn push_noisy(out: &mut Vec<f32>, base: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Result<()> {
    let mut v: Vec<f64> = base
        .iter()
        .map(|&b| b + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    normalize(&mut v)?;
    out.extend(v.iter().map(|&x| x as f32));
    Ok(())
}

/// Deterministic planted bundle for `spec`.
pub fn generate(spec: &BenchSpec) -> Result<PlantedBundle> {
    spec.validate()?;
    let BenchSpec { n, d, d_s, .. } = *spec;

    let mut rng = stream(spec.seed, STREAM_LATENT);
    let latents = (0..n)
        .map(|_| {
            let mut z = normals(&mut rng, d);
            normalize(&mut z).map(|_| z)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rng = stream(spec.seed, STREAM_PROJECTION);
    let scale = (d as f64).sqrt();
    let projection: Vec<f64> = normals(&mut rng, d_s * d).into_iter().map(|x| x / scale).collect();

    let mut rng = stream(spec.seed, STREAM_TEXT);
    let mut text = Vec::with_capacity(n * d);
    for z in &latents {
        push_noisy(&mut text, z, spec.sigma_text, &mut rng)?;
    }

    let mut rng = stream(spec.seed, STREAM_SENT);
    let mut sent = Vec::with_capacity(n * d_s);
    for z in &latents {
        let projected: Vec<f64> = projection
            .chunks_exact(d)
            .map(|row| row.iter().zip(z).map(|(a, b)| a * b).sum())
            .collect();
        push_noisy(&mut sent, &projected, spec.sigma_text, &mut rng)?;
    }

    let mut rng = stream(spec.seed, STREAM_CORRUPT);
    let mut truth = Vec::with_capacity(n);
    let mut corrupted = Vec::with_capacity(n);
    for i in 0..n {
        let u: f64 = rng.random();
        if u < spec.p_corrupt {
            let j = rng.random_range(0..n - 1);
            truth.push(if j >= i { j + 1 } else { j });
            corrupted.push(true);
        } else {
            truth.push(i);
            corrupted.push(false);
        }
    }

    let mut rng = stream(spec.seed, STREAM_IMAGE);
    let mut image = Vec::with_capacity(n * d);
    for &t in &truth {
        push_noisy(&mut image, &latents[t], spec.sigma_image, &mut rng)?;
    }

    let caption_ids: Vec<String> = (0..n).map(|i| format!("c{i:06}")).collect();
    let image_ids: Vec<String> = (0..n).map(|i| format!("img{i:06}")).collect();
    let corpus = CaptionCorpus::new(
        caption_ids
            .iter()
            .enumerate()
            .map(|(i, id)| CaptionRecord {
                id: id.clone(),
                text: format!("caption {i}"),
            })
            .collect(),
    )?;
    let bundle = DatasetBundle::new(
        corpus,
        EmbeddingMatrix::new(d, text, caption_ids.clone(), true)?,
        EmbeddingMatrix::new(d, image, image_ids, true)?,
        EmbeddingMatrix::new(d_s, sent, caption_ids, true)?,
    )?;
    Ok(PlantedBundle {
        spec: *spec,
        bundle,
        truth,
        corrupted,
    })
}

/// Ground truth as written to `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub spec: BenchSpec,
    pub truth: Vec<usize>,
    pub corrupted: Vec<bool>,
}

/// Writes the bundle files (`captions.jsonl`, `text_vlm.emb`,
/// `image_vlm.emb`, `text_sent.emb` with ID sidecars) and `truth.json`.
pub fn write_bench(planted: &PlantedBundle, out_dir: &Path) -> Result<BundlePaths> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let paths = BundlePaths::in_dir(out_dir);
    let b = &planted.bundle;
    write_corpus(&b.corpus, &paths.corpus)?;
    write_matrix(&b.text_vlm, &paths.text_vlm)?;
    write_matrix(&b.image_vlm, &paths.image_vlm)?;
    write_matrix(&b.text_sent, &paths.text_sent)?;
    let truth = TruthFile {
        spec: planted.spec,
        truth: planted.truth.clone(),
        corrupted: planted.corrupted.clone(),
    };
    let path = out_dir.join("truth.json");
    let text = serde_json::to_string(&truth).expect("truth serializes");
    write_atomic(&path, |w| {
        use std::io::Write;
        writeln!(w, "{text}").map_err(|e| Error::io(&path, e))
    })?;
    Ok(paths)
}

pub fn read_truth(path: &Path) -> Result<TruthFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_owned(),
        line: e.line(),
        reason: e.to_string(),
    })
}

/// Alignment quality of a manifest against planted ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// Kept entries whose image was generated from the caption's latent.
    pub match_rate: f64,
    /// Corrupted captions that are kept and latent-matched.
    pub rescue_rate: f64,
    /// Pruned captions that are corrupted and not latent-matched.
    pub purge_precision: f64,
    pub n_kept: usize,
    pub n_pruned: usize,
    pub n_corrupted: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn audit(planted: &PlantedBundle, manifest: &RefinedManifest) -> Result<AuditReport> {
    let n = planted.truth.len();
    let total = manifest.entries.len() + manifest.dropped.len();
    if total != n {
        return Err(Error::ManifestMismatch(format!(
            "manifest covers {total} captions, bundle has {n}"
        )));
    }
    let mut seen = vec![false; n];
    for t in manifest.entries.iter().chain(&manifest.dropped) {
        if t.caption_index >= n || t.image_index >= n {
            return Err(Error::ManifestMismatch(format!(
                "caption {} / image {} outside a bundle of {n}",
                t.caption_index, t.image_index
            )));
        }
        if std::mem::replace(&mut seen[t.caption_index], true) {
            return Err(Error::ManifestMismatch(format!("caption {} appears twice", t.caption_index)));
        }
    }
    let matched = |t: &ScoredTriple| planted.truth[t.image_index] == t.caption_index;
    let kept_matched = manifest.entries.iter().filter(|t| matched(t)).count();
    let rescued = manifest
        .entries
        .iter()
        .filter(|t| planted.corrupted[t.caption_index] && matched(t))
        .count();
    let purged = manifest
        .dropped
        .iter()
        .filter(|t| planted.corrupted[t.caption_index] && !matched(t))
        .count();
    let n_corrupted = planted.corrupted_count();
    Ok(AuditReport {
        match_rate: ratio(kept_matched, manifest.entries.len()),
        rescue_rate: ratio(rescued, n_corrupted),
        purge_precision: ratio(purged, manifest.dropped.len()),
        n_kept: manifest.entries.len(),
        n_pruned: manifest.dropped.len(),
        n_corrupted,
    })
}

fn naive_dot(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for t in 0..a.len() {
        s += f64::from(a[t]) * f64::from(b[t]);
    }
    s + 0.0
}

/// Top-`k` rows of `pool` for `query` by full sort.
fn naive_topk(query: &[f32], pool: &EmbeddingMatrix, k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = (0..pool.rows()).map(|j| (naive_dot(query, pool.row(j)), j)).collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|e| e.1).collect()
}

/// Reference refinement by exhaustive loops and full sorts. Limited to
/// bundles of at most [`ORACLE_LIMIT`] captions and images.
pub fn oracle_refine(bundle: &DatasetBundle, config: &PipelineConfig) -> Result<RefinedManifest> {
    config.validate()?;
    for (what, n) in [("captions", bundle.captions()), ("images", bundle.images())] {
        if n > ORACLE_LIMIT {
            return Err(Error::OracleGuard {
                what,
                n,
                limit: ORACLE_LIMIT,
            });
        }
    }
    let kind = config.strategy.kind;
    if kind.needs_pairing() && !bundle.is_paired() {
        return Err(Error::Unpaired {
            strategy: kind.to_string(),
            captions: bundle.captions(),
            images: bundle.images(),
        });
    }
    let (text, image, sent) = (&bundle.text_vlm, &bundle.image_vlm, &bundle.text_sent);
    let k = config.strategy.k;
    let k_r = config.scorer.k_r;

    // image-to-text retrievals do not depend on the caption; memoize them
    let mut retrieved: Vec<Option<Vec<usize>>> = vec![None; bundle.images()];
    let mut triples = Vec::with_capacity(bundle.captions());
    for i in 0..bundle.captions() {
        let mut cands = match kind {
            SelectionKind::One => vec![i],
            SelectionKind::T2i => naive_topk(text.row(i), image, k),
            SelectionKind::T2t => naive_topk(text.row(i), text, k),
            SelectionKind::I2t => naive_topk(image.row(i), text, k),
            SelectionKind::I2i => naive_topk(image.row(i), image, k),
        };
        let mut seen = vec![false; bundle.images()];
        cands.retain(|&j| !std::mem::replace(&mut seen[j], true));

        let mut best: Option<(usize, f64)> = None;
        for &j in &cands {
            let s = match config.scorer.kind {
                ScorerKind::Cos => naive_dot(image.row(j), text.row(i)),
                ScorerKind::Ret => retrieved[j]
                    .get_or_insert_with(|| naive_topk(image.row(j), text, k_r))
                    .iter()
                    .map(|&r| if r == i { 1.0 } else { naive_dot(sent.row(r), sent.row(i)) })
                    .fold(f64::NEG_INFINITY, f64::max),
            };
            if !s.is_finite() {
                return Err(Error::Degenerate(format!("non-finite score for image {j}, caption {i}")));
            }
            let s = s.clamp(-1.0, 1.0);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((j, s));
            }
        }
        let (image_index, score) = best.ok_or_else(|| Error::Degenerate(format!("caption {i} has no candidates")))?;
        triples.push(ScoredTriple {
            image_index,
            caption_index: i,
            score,
        });
    }
    RefinedManifest::from_triples(triples, bundle.images(), &config.strategy, &config.scorer, config.tau)
}

/// First disagreement between two manifests.
#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    /// 1-based rank of the first differing entry.
    pub rank: usize,
    pub reason: String,
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "rank {}: {}", self.rank, self.reason)
    }
}

/// Compares kept entries rank by rank: caption and image must be equal and
/// scores within `tol`.
pub fn diff_manifests(a: &RefinedManifest, b: &RefinedManifest, tol: f64) -> Option<Divergence> {
    for (r, (x, y)) in a.entries.iter().zip(&b.entries).enumerate() {
        let reason = if x.caption_index != y.caption_index {
            format!("caption {} vs {}", x.caption_index, y.caption_index)
        } else if x.image_index != y.image_index {
            format!("caption {}: image {} vs {}", x.caption_index, x.image_index, y.image_index)
        } else if (x.score - y.score).abs() > tol {
            format!("caption {}: score {:.9} vs {:.9}", x.caption_index, x.score, y.score)
        } else {
            continue;
        };
        return Some(Divergence { rank: r + 1, reason });
    }
    if a.entries.len() != b.entries.len() {
        return Some(Divergence {
            rank: a.entries.len().min(b.entries.len()) + 1,
            reason: format!("lengths {} vs {}", a.entries.len(), b.entries.len()),
        });
    }
    None
}
