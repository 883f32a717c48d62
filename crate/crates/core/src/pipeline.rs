//! End-to-end refinement: select, score, reassign, sort, prune.
//!
//! Every caption is scored against its candidate images and reassigned to
//! the best one. The resulting triples are sorted by score (descending, ties
//! by ascending caption index) and the first `floor(N * tau)` are kept.
//!
//! Selection and scoring run in parallel across captions on a dedicated
//! thread pool of `workers` threads. Sorting and pruning are sequential.
//! The output does not depend on the worker count.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atomic::{with_suffix, write_atomic};
use crate::embstore::DatasetBundle;
use crate::error::{Error, Result};
use crate::scoring::{RetrievalCache, Scorer, ScorerConfig, ScorerKind};
use crate::selection::{self, candidates_from_hits, SelectionKind, SelectionStrategy};
use crate::simkernel::{self, SearchOptions};

pub const DEFAULT_K: usize = 15;
pub const DEFAULT_K_R: usize = 2;
pub const DEFAULT_TAU: f64 = 0.9;

/// Relative slack under which `N * tau` counts as an integer when flooring,
/// so that e.g. `100 * 0.29` keeps 29 rather than 28.
pub const FLOOR_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub strategy: SelectionStrategy,
    pub scorer: ScorerConfig,
    /// Preserving ratio in `[0, 1]`.
    pub tau: f64,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            strategy: SelectionStrategy::t2i(DEFAULT_K),
            scorer: ScorerConfig::ret(DEFAULT_K_R),
            tau: DEFAULT_TAU,
            workers: default_workers(),
        }
    }
}

impl PipelineConfig {
    pub fn new(strategy: SelectionStrategy, scorer: ScorerConfig, tau: f64) -> Self {
        PipelineConfig {
            strategy,
            scorer,
            tau,
            ..PipelineConfig::default()
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_tau(self.tau)?;
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        self.strategy.validate()?;
        self.scorer.validate()
    }
}

/// Available hardware parallelism, or 1 if unknown.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn check_tau(tau: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Error::Config(format!("tau must be in [0, 1], got {tau}")))
    }
}

/// Number of pairs kept out of `n` at ratio `tau`: `floor(n * tau)`.
pub fn kept_count(n: usize, tau: f64) -> usize {
    let x = n as f64 * tau;
    let r = x.round();
    let kept = if (x - r).abs() <= FLOOR_SLACK * r.max(1.0) {
        r
    } else {
        x.floor()
    };
    (kept as usize).min(n)
}

/// A caption, its assigned image and the alignment score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredTriple {
    pub image_index: usize,
    pub caption_index: usize,
    pub score: f64,
}

/// Wall-clock time per stage, in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    /// Candidate retrieval. For `t2i` with `ret`, this pass also produces the
    /// image-to-text retrievals the scorer needs.
    pub select: f64,
    pub score: f64,
    pub prune: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub n_input: usize,
    pub n_images: usize,
    pub n_kept: usize,
    pub tau: f64,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    #[serde(rename = "K_r")]
    pub k_r: Option<usize>,
    pub strategy: SelectionKind,
    pub scorer: ScorerKind,
    pub reassignment_rate: f64,
    /// Largest number of kept captions sharing one image.
    pub max_assignment_multiplicity: usize,
    pub wall_time_ms: StageTimes,
}

/// The refined dataset: kept triples in rank order, plus the pruned ones.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedManifest {
    pub entries: Vec<ScoredTriple>,
    /// Pruned triples, continuing the same ordering.
    pub dropped: Vec<ScoredTriple>,
    pub stats: RunStats,
}

impl RefinedManifest {
    /// Builds a manifest from unsorted per-caption triples.
    pub fn from_triples(
        mut triples: Vec<ScoredTriple>,
        n_images: usize,
        strategy: &SelectionStrategy,
        scorer: &ScorerConfig,
        tau: f64,
    ) -> Result<Self> {
        check_tau(tau)?;
        if let Some(t) = triples.iter().find(|t| !t.score.is_finite()) {
            return Err(Error::Degenerate(format!("non-finite score for caption {}", t.caption_index)));
        }
        sort_triples(&mut triples);
        let n = triples.len();
        let kept = kept_count(n, tau);
        let dropped = triples.split_off(kept);
        let entries = triples;
        let stats = RunStats {
            n_input: n,
            n_images,
            n_kept: kept,
            tau,
            k: (strategy.kind != SelectionKind::One).then_some(strategy.k),
            k_r: (scorer.kind == ScorerKind::Ret).then_some(scorer.k_r),
            strategy: strategy.kind,
            scorer: scorer.kind,
            reassignment_rate: reassignment_rate(&entries),
            max_assignment_multiplicity: max_multiplicity(&entries),
            wall_time_ms: StageTimes::default(),
        };
        Ok(RefinedManifest { entries, dropped, stats })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mean_score(&self) -> Option<f64> {
        if self.entries.is_empty() {
            return None;
        }
        Some(self.entries.iter().map(|t| t.score).sum::<f64>() / self.entries.len() as f64)
    }

    pub fn min_kept_score(&self) -> Option<f64> {
        self.entries.last().map(|t| t.score)
    }
}

/// Score descending, then caption index ascending.
pub fn sort_triples(triples: &mut [ScoredTriple]) {
    triples.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.caption_index.cmp(&b.caption_index)));
}

fn reassignment_rate(entries: &[ScoredTriple]) -> f64 {
    if entries.is_empty() {
        return 0.0;
    }
    entries.iter().filter(|t| t.image_index != t.caption_index).count() as f64 / entries.len() as f64
}

fn max_multiplicity(entries: &[ScoredTriple]) -> usize {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for t in entries {
        *counts.entry(t.image_index).or_default() += 1;
    }
    counts.into_values().max().unwrap_or(0)
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::ThreadPool(e.to_string()))
}

/// Best image and score for every caption, in caption order.
fn score_all(
    bundle: &DatasetBundle,
    strategy: &SelectionStrategy,
    scorer: &ScorerConfig,
) -> Result<(Vec<ScoredTriple>, StageTimes)> {
    let opts = SearchOptions::default();
    let mut times = StageTimes::default();
    if bundle.captions() == 0 {
        return Ok((Vec::new(), times));
    }

    let t = Instant::now();
    let (candidates, cache) = if strategy.kind == SelectionKind::T2i && scorer.kind == ScorerKind::Ret {
        // one pass over the caption x image similarities yields both the
        // text-to-image candidates and every image's caption retrievals
        let (rows, cols) = simkernel::topk_both(&bundle.text_vlm, &bundle.image_vlm, strategy.k, scorer.k_r, &opts)?;
        let candidates: Vec<_> = rows
            .into_iter()
            .enumerate()
            .map(|(i, hit)| candidates_from_hits(i, hit))
            .collect();
        (candidates, Some(RetrievalCache::from_hits(scorer.k_r, cols)))
    } else {
        (selection::select_all(bundle, strategy)?, None)
    };
    times.select = ms(t);

    let t = Instant::now();
    let scorer = match cache {
        Some(cache) => Scorer::with_cache(bundle, *scorer, Some(cache))?,
        None => Scorer::for_candidates(bundle, *scorer, &candidates, &opts)?,
    };
    let triples = candidates
        .par_iter()
        .map(|cand| {
            let (image_index, score) = scorer.best(cand)?;
            Ok(ScoredTriple {
                image_index,
                caption_index: cand.caption_index,
                score,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    times.score = ms(t);
    Ok((triples, times))
}

fn check_bundle(bundle: &DatasetBundle, strategy: &SelectionStrategy) -> Result<()> {
    if strategy.kind.needs_pairing() && !bundle.is_paired() {
        return Err(Error::Unpaired {
            strategy: strategy.kind.to_string(),
            captions: bundle.captions(),
            images: bundle.images(),
        });
    }
    if bundle.captions() > 0 && bundle.images() == 0 {
        return Err(Error::EmptyPool);
    }
    Ok(())
}

/// Runs the full refinement.
pub fn refine(bundle: &DatasetBundle, config: &PipelineConfig) -> Result<RefinedManifest> {
    config.validate()?;
    check_bundle(bundle, &config.strategy)?;
    let start = Instant::now();
    let pool = thread_pool(config.workers)?;
    let (triples, mut times) = pool.install(|| score_all(bundle, &config.strategy, &config.scorer))?;
    let t = Instant::now();
    let mut manifest =
        RefinedManifest::from_triples(triples, bundle.images(), &config.strategy, &config.scorer, config.tau)?;
    times.prune = ms(t);
    times.total = ms(start);
    manifest.stats.wall_time_ms = times;
    log::info!(
        "refined {} captions: kept {}, reassignment rate {:.4}",
        manifest.stats.n_input,
        manifest.stats.n_kept,
        manifest.stats.reassignment_rate
    );
    Ok(manifest)
}

/// Per-pair score filtering without reassignment (`strategy = one`).
pub fn refine_one_to_one(bundle: &DatasetBundle, scorer: &ScorerConfig, tau: f64) -> Result<RefinedManifest> {
    refine(bundle, &PipelineConfig::new(SelectionStrategy::one(), *scorer, tau))
}

/// Manifest as JSON lines: `{"rank","caption_id","image_id","score"}` with
/// six fractional digits in the score.
pub fn write_manifest_to<W: Write>(manifest: &RefinedManifest, bundle: &DatasetBundle, w: &mut W) -> Result<()> {
    let io = |e| Error::io("<manifest>", e);
    for (rank, t) in manifest.entries.iter().enumerate() {
        let caption = bundle.corpus.records().get(t.caption_index).ok_or(Error::IndexOutOfRange {
            what: "captions",
            index: t.caption_index,
            len: bundle.captions(),
        })?;
        if t.image_index >= bundle.images() {
            return Err(Error::IndexOutOfRange {
                what: "images",
                index: t.image_index,
                len: bundle.images(),
            });
        }
        let caption_id = serde_json::to_string(&caption.id).expect("string serializes");
        let image_id = serde_json::to_string(bundle.image_vlm.id(t.image_index)).expect("string serializes");
        writeln!(
            w,
            "{{\"rank\":{},\"caption_id\":{},\"image_id\":{},\"score\":{:.6}}}",
            rank + 1,
            caption_id,
            image_id,
            t.score
        )
        .map_err(io)?;
    }
    Ok(())
}

pub fn manifest_jsonl(manifest: &RefinedManifest, bundle: &DatasetBundle) -> Result<String> {
    let mut buf = Vec::new();
    write_manifest_to(manifest, bundle, &mut buf)?;
    Ok(String::from_utf8(buf).expect("manifest is UTF-8"))
}

/// Path of the statistics sidecar for a manifest path.
pub fn stats_path(manifest_path: &Path) -> std::path::PathBuf {
    with_suffix(manifest_path, ".stats.json")
}

/// Writes the manifest and its `.stats.json` sidecar, each atomically.
pub fn write_manifest(manifest: &RefinedManifest, bundle: &DatasetBundle, path: &Path) -> Result<()> {
    // render first so a bad index leaves no file behind
    let body = manifest_jsonl(manifest, bundle)?;
    let stats = serde_json::to_string_pretty(&manifest.stats).expect("stats serialize");
    write_atomic(path, |w| w.write_all(body.as_bytes()).map_err(|e| Error::io(path, e)))?;
    let sp = stats_path(path);
    write_atomic(&sp, |w| writeln!(w, "{stats}").map_err(|e| Error::io(&sp, e)))
}

/// One row of an ablation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub strategy: SelectionKind,
    pub scorer: ScorerKind,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    #[serde(rename = "K_r")]
    pub k_r: Option<usize>,
    pub tau: f64,
    pub n_kept: usize,
    pub mean_score: Option<f64>,
    pub min_kept_score: Option<f64>,
    pub reassignment_rate: f64,
    /// Milliseconds: selection and scoring (shared by rows that differ only
    /// in `tau`) plus this row's pruning.
    pub wall_time: f64,
}

/// Runs every configuration in `grid`, in order. Configurations differing
/// only in `tau` share one selection and scoring pass.
pub fn ablate(bundle: &DatasetBundle, grid: &[PipelineConfig]) -> Result<Vec<AblationRow>> {
    if grid.is_empty() {
        return Err(Error::Config("empty ablation grid".into()));
    }
    for c in grid {
        c.validate()?;
        check_bundle(bundle, &c.strategy)?;
    }
    type Key = (SelectionKind, usize, ScorerKind, usize);
    let key = |c: &PipelineConfig| -> Key {
        let k = if c.strategy.kind == SelectionKind::One { 1 } else { c.strategy.k };
        let k_r = if c.scorer.kind == ScorerKind::Ret { c.scorer.k_r } else { 0 };
        (c.strategy.kind, k, c.scorer.kind, k_r)
    };
    let mut scored: HashMap<Key, (Vec<ScoredTriple>, f64)> = HashMap::new();
    let mut rows = Vec::with_capacity(grid.len());
    for c in grid {
        let (triples, base_ms) = match scored.get(&key(c)) {
            Some(v) => v.clone(),
            None => {
                let pool = thread_pool(c.workers)?;
                let t = Instant::now();
                let (triples, _) = pool.install(|| score_all(bundle, &c.strategy, &c.scorer))?;
                let v = (triples, ms(t));
                scored.insert(key(c), v.clone());
                v
            }
        };
        let t = Instant::now();
        let m = RefinedManifest::from_triples(triples, bundle.images(), &c.strategy, &c.scorer, c.tau)?;
        let row = AblationRow {
            strategy: m.stats.strategy,
            scorer: m.stats.scorer,
            k: m.stats.k,
            k_r: m.stats.k_r,
            tau: c.tau,
            n_kept: m.stats.n_kept,
            mean_score: m.mean_score(),
            min_kept_score: m.min_kept_score(),
            reassignment_rate: m.stats.reassignment_rate,
            wall_time: ((base_ms + ms(t)) * 1e3).round() / 1e3,
        };
        log::info!(
            "ablation {} {} K={:?} K_r={:?} tau={}: kept {}",
            row.strategy,
            row.scorer,
            row.k,
            row.k_r,
            row.tau,
            row.n_kept
        );
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_ablation_csv_to<W: Write>(rows: &[AblationRow], w: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for r in rows {
        csv.serialize(r)?;
    }
    csv.flush().map_err(|e| Error::io("<ablation csv>", e))?;
    Ok(())
}

pub fn write_ablation_csv(rows: &[AblationRow], path: &Path) -> Result<()> {
    write_atomic(path, |w| write_ablation_csv_to(rows, w))
}
