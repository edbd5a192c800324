use trade_reid::evaluator::summarize_curve;
use trade_reid::selector::ScorerKind;
use trade_reid::synthworld::{generate, WorldConfig};
use trade_reid::{run, Error, GalleryMode, PipelineConfig};

fn small_world(seed: u64) -> WorldConfig {
    WorldConfig {
        seed,
        n_cameras: 1,
        n_videos_per_camera: 2,
        frames_per_video: 600,
        entry_rate: 0.03,
        n_queries: 5,
        ..WorldConfig::default()
    }
}

fn gallery_refs(r: &trade_reid::RunResult) -> Vec<Vec<String>> {
    r.chunks
        .iter()
        .map(|c| {
            c.gallery
                .iter()
                .map(|g| g.detection.crop_ref.clone())
                .collect()
        })
        .collect()
}

#[test]
fn trade_with_unit_length_equals_baseline() {
    let ds = generate(&small_world(1)).unwrap().dataset().unwrap();
    let trade = run(
        &PipelineConfig {
            mode: GalleryMode::Trade,
            max_len: 1,
            ..Default::default()
        },
        &ds,
    )
    .unwrap();
    let base = run(
        &PipelineConfig {
            mode: GalleryMode::Baseline,
            ..Default::default()
        },
        &ds,
    )
    .unwrap();
    assert_eq!(gallery_refs(&trade), gallery_refs(&base));
    let (_, a) = trade.evaluate(&ds.ground_truth, &ds.queries).unwrap();
    let (_, b) = base.evaluate(&ds.ground_truth, &ds.queries).unwrap();
    assert_eq!(a, b);
}

#[test]
fn skip_and_trade_galleries_have_equal_size() {
    let ds = generate(&small_world(2)).unwrap().dataset().unwrap();
    for n in [2, 5, 20, 80] {
        let skip = run(
            &PipelineConfig {
                mode: GalleryMode::Skip,
                max_len: n,
                ..Default::default()
            },
            &ds,
        )
        .unwrap();
        let trade = run(
            &PipelineConfig {
                mode: GalleryMode::Trade,
                max_len: n,
                ..Default::default()
            },
            &ds,
        )
        .unwrap();
        assert_eq!(
            skip.accounting.gallery_sizes, trade.accounting.gallery_sizes,
            "N={n}"
        );
    }
}

#[test]
fn no_detections_means_nothing_found() {
    let world = generate(&WorldConfig {
        miss_probability: 1.0,
        false_positive_rate: 0.0,
        ..small_world(3)
    })
    .unwrap();
    let ds = world.dataset().unwrap();
    let r = run(&PipelineConfig::default(), &ds).unwrap();
    assert_eq!(r.gallery_total(), 0);
    let curve = r.curve(&ds.ground_truth, &ds.queries).unwrap();
    for p in &curve.points {
        assert_eq!(p.fr, Some(0.0));
        assert_eq!(p.tvr, None);
        assert_eq!(p.alerts, 0);
    }
    assert!(summarize_curve(&curve).is_none());
}

#[test]
fn runs_are_deterministic() {
    let ds = generate(&small_world(4)).unwrap().dataset().unwrap();
    let cfg = PipelineConfig {
        scorer: ScorerKind::Table,
        ..Default::default()
    };
    let a = serde_json::to_string(&run(&cfg, &ds).unwrap()).unwrap();
    let b = serde_json::to_string(&run(&cfg, &ds).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn perfect_world_finds_every_present_query() {
    let cfg = WorldConfig {
        bad_crop_probability: 0.0,
        false_positive_rate: 0.0,
        miss_probability: 0.0,
        embedding_noise: 0.05,
        frame_noise: 0.01,
        query_noise: 0.05,
        ..small_world(5)
    };
    let ds = generate(&cfg).unwrap().dataset().unwrap();
    let r = run(&PipelineConfig::default(), &ds).unwrap();
    let curve = r.curve(&ds.ground_truth, &ds.queries).unwrap();
    assert_eq!(curve.points[0].fr, Some(1.0));
    let s = summarize_curve(&curve).unwrap();
    assert!(s.f1_star > 0.95, "{s:?}");
}

#[test]
fn missing_embedding_is_reported() {
    let world = generate(&small_world(6)).unwrap();
    let mut ds = world.dataset().unwrap();
    ds.embeddings = trade_reid::ingest::EmbeddingTable::new();
    assert!(matches!(
        run(&PipelineConfig::default(), &ds),
        Err(Error::MissingEmbedding(_))
    ));
}

#[test]
fn table_scorer_requires_scores() {
    let mut ds = generate(&small_world(7)).unwrap().dataset().unwrap();
    ds.scores = None;
    let cfg = PipelineConfig {
        scorer: ScorerKind::Table,
        ..Default::default()
    };
    assert!(matches!(run(&cfg, &ds), Err(Error::Config(_))));
}

#[test]
fn queries_are_required() {
    let mut ds = generate(&small_world(8)).unwrap().dataset().unwrap();
    ds.queries.clear();
    assert!(matches!(
        run(&PipelineConfig::default(), &ds),
        Err(Error::Config(_))
    ));
}
