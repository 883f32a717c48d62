use pairsift::pipeline::{manifest_jsonl, refine, PipelineConfig};
use pairsift::synthbench::{
    audit, diff_manifests, generate, oracle_refine, read_truth, write_bench, BenchSpec, ORACLE_SCORE_TOL,
};
use pairsift::{load_bundle, ScorerConfig, SelectionStrategy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Regression tolerance on audited rates.
const RATE_TOL: f64 = 0.02;

fn rescue_spec(seed: u64) -> BenchSpec {
    BenchSpec {
        n: 500,
        d: 32,
        d_s: 16,
        sigma_text: 0.05,
        sigma_image: 0.05,
        p_corrupt: 0.2,
        seed,
    }
}

#[test]
fn seed_seven_corruption_count_replays() {
    let planted = generate(&rescue_spec(7)).unwrap();
    // replay the documented corruption stream independently of the generator
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    rng.set_stream(4);
    let mut count = 0;
    for i in 0..500usize {
        let u: f64 = rng.random();
        if u < 0.2 {
            let j = rng.random_range(0..499usize);
            let t = if j >= i { j + 1 } else { j };
            assert_eq!(planted.truth[i], t);
            count += 1;
        } else {
            assert_eq!(planted.truth[i], i);
        }
    }
    assert_eq!(planted.corrupted_count(), count);
    assert_eq!(count, 88);
}

#[test]
fn pinned_match_rate_at_full_retention() {
    // brute-force oracle value for t2i(15) + ret(2), tau = 1.0, seed 7
    const PINNED: f64 = 0.854;
    let planted = generate(&rescue_spec(7)).unwrap();
    let config = PipelineConfig::new(SelectionStrategy::t2i(15), ScorerConfig::ret(2), 1.0);
    let engine = refine(&planted.bundle, &config).unwrap();
    let oracle = oracle_refine(&planted.bundle, &config).unwrap();
    assert_eq!(diff_manifests(&engine, &oracle, ORACLE_SCORE_TOL), None);
    let report = audit(&planted, &engine).unwrap();
    assert!((report.match_rate - PINNED).abs() <= RATE_TOL, "{report:?}");
    assert!(report.rescue_rate > 0.0);
}

#[test]
fn match_rate_degrades_with_image_noise() {
    for config in [
        PipelineConfig::new(SelectionStrategy::t2i(15), ScorerConfig::ret(2), 1.0),
        PipelineConfig::new(SelectionStrategy::one(), ScorerConfig::cos(), 0.9),
        PipelineConfig::new(SelectionStrategy::t2i(5), ScorerConfig::cos(), 0.9),
    ] {
        let mut last = f64::INFINITY;
        for sigma_image in [0.05, 0.3, 0.8] {
            let planted = generate(&BenchSpec {
                sigma_image,
                ..rescue_spec(11)
            })
            .unwrap();
            let rate = audit(&planted, &refine(&planted.bundle, &config).unwrap()).unwrap().match_rate;
            assert!(rate <= last, "{config:?} sigma {sigma_image}: {rate} > {last}");
            last = rate;
        }
    }
}

#[test]
fn top1_retrieval_equals_own_image_without_noise() {
    let planted = generate(&BenchSpec {
        n: 200,
        sigma_text: 0.0,
        sigma_image: 0.0,
        p_corrupt: 0.0,
        ..rescue_spec(3)
    })
    .unwrap();
    for scorer in [ScorerConfig::cos(), ScorerConfig::ret(2)] {
        let t2i = refine(&planted.bundle, &PipelineConfig::new(SelectionStrategy::t2i(1), scorer, 0.8)).unwrap();
        let one = refine(&planted.bundle, &PipelineConfig::new(SelectionStrategy::one(), scorer, 0.8)).unwrap();
        assert_eq!(
            manifest_jsonl(&t2i, &planted.bundle).unwrap(),
            manifest_jsonl(&one, &planted.bundle).unwrap()
        );
        let report = audit(&planted, &one).unwrap();
        assert_eq!(report.match_rate, 1.0);
        assert_eq!(report.rescue_rate, 0.0);
    }
}

#[test]
fn zero_tau_gives_empty_manifests() {
    let planted = generate(&BenchSpec { n: 50, ..rescue_spec(2) }).unwrap();
    let config = PipelineConfig::new(SelectionStrategy::t2i(15), ScorerConfig::ret(2), 0.0);
    assert!(refine(&planted.bundle, &config).unwrap().is_empty());
    assert!(oracle_refine(&planted.bundle, &config).unwrap().is_empty());
}

#[test]
fn strategy_one_never_rescues() {
    for seed in [1, 2] {
        let planted = generate(&BenchSpec { n: 200, ..rescue_spec(seed) }).unwrap();
        for scorer in [ScorerConfig::cos(), ScorerConfig::ret(2)] {
            let m = refine(&planted.bundle, &PipelineConfig::new(SelectionStrategy::one(), scorer, 0.9)).unwrap();
            assert_eq!(audit(&planted, &m).unwrap().rescue_rate, 0.0);
        }
    }
}

#[test]
fn written_bench_reloads_identically() {
    let planted = generate(&BenchSpec { n: 64, ..rescue_spec(5) }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = write_bench(&planted, dir.path()).unwrap();
    let loaded = load_bundle(&paths).unwrap();
    assert_eq!(loaded.text_vlm, planted.bundle.text_vlm);
    assert_eq!(loaded.image_vlm, planted.bundle.image_vlm);
    assert_eq!(loaded.text_sent, planted.bundle.text_sent);
    assert_eq!(loaded.corpus, planted.bundle.corpus);
    let truth = read_truth(&dir.path().join("truth.json")).unwrap();
    assert_eq!(truth.truth, planted.truth);
    assert_eq!(truth.corrupted, planted.corrupted);
    assert_eq!(truth.spec, planted.spec);
}

#[test]
fn oracle_agrees_across_strategies() {
    let planted = generate(&BenchSpec {
        n: 120,
        sigma_text: 0.3,
        sigma_image: 0.3,
        ..rescue_spec(8)
    })
    .unwrap();
    for kind in pairsift::SelectionKind::ALL {
        for scorer in [ScorerConfig::cos(), ScorerConfig::ret(1), ScorerConfig::ret(3)] {
            let config = PipelineConfig::new(SelectionStrategy::new(kind, 6), scorer, 0.75).with_workers(2);
            let a = refine(&planted.bundle, &config).unwrap();
            let b = oracle_refine(&planted.bundle, &config).unwrap();
            assert_eq!(diff_manifests(&a, &b, ORACLE_SCORE_TOL), None, "{kind} {scorer:?}");
            assert_eq!(a.dropped, b.dropped);
        }
    }
}
