use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hardneg_core::embed::{hashing_embed, ProviderSpec};
use hardneg_core::ensemble::cosine;
use hardneg_core::mine::NegativeKind;
use hardneg_core::pipeline::{make_synthetic_benchmark, run_pipeline, Manifest, PipelineConfig, SyntheticConfig};

fn small() -> SyntheticConfig {
    SyntheticConfig {
        n_queries: 30,
        confounders_per_query: 5,
        ..SyntheticConfig::default()
    }
}

/// Every artifact under `dir` that a run is expected to reproduce, keyed by
/// path relative to `dir`. The manifest embeds nothing path-dependent, so it
/// is included; the lock and cache are not artifacts.
fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                if !rel.starts_with("cache") {
                    out.push((rel, fs::read(&path).unwrap()));
                }
            }
        }
    }
    out.sort();
    out
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let root = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for threads in [1, 4] {
        let dir = root.path().join(format!("t{threads}"));
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_pipeline(&PipelineConfig::demo(&dir, 9, small())).unwrap());
        runs.push(artifacts(&dir));
    }
    assert!(runs[0].iter().any(|(p, _)| p.ends_with("triplets.hard.jsonl")));
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn equal_manifests_mean_equal_artifacts() {
    let root = tempfile::tempdir().unwrap();
    let (a, b) = (root.path().join("a"), root.path().join("b"));
    run_pipeline(&PipelineConfig::demo(&a, 3, small())).unwrap();
    run_pipeline(&PipelineConfig::demo(&b, 3, small())).unwrap();
    let ma = Manifest::load(&a.join("manifest.json")).unwrap();
    let mb = Manifest::load(&b.join("manifest.json")).unwrap();
    assert_eq!(ma, mb);
    assert_eq!(artifacts(&a), artifacts(&b));

    let c = root.path().join("c");
    run_pipeline(&PipelineConfig::demo(&c, 4, small())).unwrap();
    assert_ne!(Manifest::load(&c.join("manifest.json")).unwrap(), ma);
}

#[test]
fn skipping_stages_matches_a_cold_run() {
    let root = tempfile::tempdir().unwrap();
    let warm = root.path().join("warm");
    let mut cfg = PipelineConfig::demo(&warm, 11, small());
    run_pipeline(&cfg).unwrap();

    // change a training knob and a mining knob in turn, reusing the run dir
    cfg.train.epochs = 7;
    let outcome = run_pipeline(&cfg).unwrap();
    assert_eq!(outcome.skipped, ["ingest", "embed", "score", "mine"]);
    cfg.mining.kinds = vec![NegativeKind::Hard, NegativeKind::Random];
    let outcome = run_pipeline(&cfg).unwrap();
    assert_eq!(outcome.skipped, ["ingest", "embed", "score"]);

    let cold = root.path().join("cold");
    let mut cold_cfg = cfg.clone();
    cold_cfg.output_dir = cold.clone();
    run_pipeline(&cold_cfg).unwrap();

    // stale artifacts of the dropped bm25 run may linger in the warm dir
    let warm_files: Vec<_> = artifacts(&warm)
        .into_iter()
        .filter(|(p, _)| !p.contains("bm25"))
        .collect();
    assert_eq!(warm_files, artifacts(&cold));
}

#[test]
fn confounders_sit_closer_to_positives_than_fillers() {
    let corpus = make_synthetic_benchmark(200, 5, 1).unwrap();
    let embed = |text: &str| hashing_embed("hash", text, 128, 1).unwrap().values;
    let positives: BTreeSet<&str> = corpus.qrels().iter().map(|q| q.positive_doc_id.as_str()).collect();
    let mut confounder_ids = BTreeSet::new();
    let mut per_query = Vec::new();
    for qrel in corpus.qrels() {
        let query_words: Vec<&str> = corpus.query(&qrel.query_id).unwrap().text.split(' ').collect();
        let confounders: Vec<&str> = corpus
            .documents()
            .iter()
            .filter(|d| !positives.contains(d.id.as_str()))
            .filter(|d| query_words.iter().all(|w| d.text.split(' ').any(|x| x == *w)))
            .map(|d| d.id.as_str())
            .collect();
        assert_eq!(confounders.len(), 5, "{}", qrel.query_id);
        confounder_ids.extend(confounders.iter().copied());
        per_query.push((qrel.positive_doc_id.as_str(), confounders));
    }
    let fillers: Vec<&str> = corpus
        .documents()
        .iter()
        .map(|d| d.id.as_str())
        .filter(|id| !positives.contains(id) && !confounder_ids.contains(id))
        .collect();
    assert_eq!(fillers.len(), 200);

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let text = |id: &str| corpus.document(id).unwrap().text.clone();
    let closer = per_query
        .iter()
        .filter(|(positive, confounders)| {
            let p = embed(&text(positive));
            let c = embed(&text(confounders.choose(&mut rng).unwrap()));
            let f = embed(&text(fillers.choose(&mut rng).unwrap()));
            cosine(&p, &c).unwrap() > cosine(&p, &f).unwrap()
        })
        .count();
    assert!(closer * 100 >= 95 * per_query.len(), "{closer} of {}", per_query.len());
}

#[test]
fn bundled_demo_is_fast() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let outcome = run_pipeline(&PipelineConfig::demo(
        dir.path(),
        42,
        SyntheticConfig {
            n_queries: 6,
            confounders_per_query: 5,
            fillers: Some(12),
            ..SyntheticConfig::default()
        },
    ))
    .unwrap();
    assert!(start.elapsed().as_secs() < 60);
    // at most 50 documents, and a comparison table comes out
    assert!(
        fs::read_to_string(dir.path().join("corpus/documents.jsonl"))
            .unwrap()
            .lines()
            .count()
            <= 50
    );
    assert!(outcome.comparison.is_some());
    assert!(dir.path().join("reports/comparison.baseline_vs_hard.csv").is_file());
}

#[test]
fn unreachable_http_provider_fails_the_embed_stage() {
    // an unreachable endpoint fails the embed stage and names it
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::demo(dir.path(), 1, small());
    cfg.providers = vec![ProviderSpec {
        timeout_secs: 1,
        ..ProviderSpec::http("remote", 16, "http://127.0.0.1:9/embed")
    }];
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(err.to_string().contains("embed"), "{err}");
}

#[test]
fn sample_config_is_valid() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/pipeline.toml");
    let cfg = PipelineConfig::load(&path).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.seed, Some(42));
    assert_eq!(cfg.providers.len(), 2);
    assert!(cfg.output_dir.ends_with("runs/synthetic"));
}
