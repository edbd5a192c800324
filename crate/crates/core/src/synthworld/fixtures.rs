//! Small random instances for cross-checking against the oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{BoundingBox, Chunk, Detection, Embedding, GalleryImage, Query};
use crate::error::Result;
use crate::evaluator::PairView;
use crate::ingest::{DetectionSet, GroundTruth, GroundTruthRecord};
use crate::reid::RankedCandidate;
use crate::tracker::GalleryMode;

use super::oracle::OraclePair;

/// Detections of one chunk plus tracklet settings.
#[derive(Debug, Clone)]
pub struct TrackingInstance {
    pub detections: Vec<Detection>,
    pub chunk_start: u32,
    pub max_len: usize,
    pub iou_threshold: f64,
    pub mode: GalleryMode,
}

/// Up to five walkers over up to 200 frames with misses, crossings and
/// spurious boxes.
pub fn tracking_instance(seed: u64) -> Result<TrackingInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chunk_start = rng.random_range(0..3u32) * 100;
    let frames = rng.random_range(1..=120u32);
    let walkers = rng.random_range(0..=4usize);
    let mut raw = Vec::new();
    let mut state: Vec<(f64, f64, f64, f64)> = (0..walkers)
        .map(|_| {
            (
                rng.random_range(0.0..200.0),
                rng.random_range(0.0..100.0),
                rng.random_range(-6.0..6.0),
                rng.random_range(-3.0..3.0),
            )
        })
        .collect();
    for f in 0..frames {
        let frame = chunk_start + f;
        for s in state.iter_mut() {
            s.0 += s.2;
            s.1 += s.3;
            if rng.random::<f64>() < 0.1 {
                continue;
            }
            let bbox = BoundingBox {
                x: s.0,
                y: s.1,
                w: 20.0,
                h: 50.0,
            };
            raw.push((frame, bbox));
        }
        if rng.random::<f64>() < 0.15 {
            let bbox = BoundingBox {
                x: rng.random_range(0.0..200.0),
                y: rng.random_range(0.0..100.0),
                w: rng.random_range(5.0..40.0),
                h: rng.random_range(5.0..60.0),
            };
            raw.push((frame, bbox));
        }
    }
    // Shuffle within frames so file order differs from walker order.
    for i in (1..raw.len()).rev() {
        let j = rng.random_range(0..=i);
        if raw[i].0 == raw[j].0 {
            raw.swap(i, j);
        }
    }
    let detections = raw
        .into_iter()
        .enumerate()
        .map(|(i, (frame, bbox))| Detection {
            video_id: "v".into(),
            frame,
            bbox,
            confidence: 1.0,
            crop_ref: format!("d{i}"),
            seq: 0,
        })
        .collect::<Vec<_>>();
    let set = DetectionSet::from_detections(detections)?;
    let max_len = [1usize, 2, 3, 5, 10, 20, 40][rng.random_range(0..7)];
    let mode = GalleryMode::ALL[rng.random_range(0..3)];
    Ok(TrackingInstance {
        detections: set.video("v").to_vec(),
        chunk_start,
        max_len,
        iou_threshold: [0.1, 0.3, 0.5][rng.random_range(0..3)],
        mode,
    })
}

/// Ground truth, queries and per-pair rankings for metric checks.
#[derive(Debug, Clone)]
pub struct MetricFixture {
    pub records: Vec<GroundTruthRecord>,
    pub ground_truth: GroundTruth,
    pub queries: Vec<Query>,
    pub chunks: Vec<Chunk>,
    /// (query index, chunk index, full ranking).
    pub pairs: Vec<(usize, usize, Vec<RankedCandidate>)>,
    pub eta: usize,
}

impl MetricFixture {
    pub fn views(&self) -> Vec<PairView<'_>> {
        self.pairs
            .iter()
            .map(|(q, c, ranked)| PairView {
                query_id: &self.queries[*q].query_id,
                chunk: &self.chunks[*c],
                ranked,
            })
            .collect()
    }

    pub fn oracle_pairs(&self) -> Vec<OraclePair> {
        self.pairs
            .iter()
            .map(|(q, c, ranked)| OraclePair {
                query_id: self.queries[*q].query_id.clone(),
                chunk: self.chunks[*c].clone(),
                ranked: ranked.clone(),
            })
            .collect()
    }
}

/// Up to 5 chunks and 4 queries; scores are multiples of 0.01 so that
/// some land exactly on grid thresholds.
pub fn metric_fixture(seed: u64) -> Result<MetricFixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_chunks = rng.random_range(0..=5usize);
    let n_queries = rng.random_range(1..=4usize);
    let identities: Vec<String> = (0..6).map(|i| format!("p{i}")).collect();
    let chunks: Vec<Chunk> = (0..n_chunks)
        .map(|c| Chunk {
            video_id: format!("v{}", c % 2),
            start_frame: (c / 2) as u32 * 10,
            end_frame: (c / 2) as u32 * 10 + 10,
        })
        .collect();

    let mut records = Vec::new();
    for chunk in &chunks {
        for id in &identities {
            for frame in chunk.start_frame..chunk.end_frame {
                if rng.random::<f64>() < 0.15 {
                    records.push(GroundTruthRecord {
                        video_id: chunk.video_id.clone(),
                        frame,
                        identity: id.clone(),
                        bbox: BoundingBox {
                            x: rng.random_range(0.0..100.0),
                            y: rng.random_range(0.0..50.0),
                            w: 20.0,
                            h: 50.0,
                        },
                    });
                }
            }
        }
    }
    let ground_truth = GroundTruth::from_records(records.clone())?;

    let queries: Vec<Query> = (0..n_queries)
        .map(|i| {
            Ok(Query {
                query_id: format!("q{i}"),
                identity: identities[rng.random_range(0..identities.len())].clone(),
                embedding: Embedding::normalized(vec![1.0, 0.0])?,
            })
        })
        .collect::<Result<_>>()?;

    let mut pairs = Vec::new();
    let mut seq = 0usize;
    for (c, chunk) in chunks.iter().enumerate() {
        for q in 0..n_queries {
            let n = rng.random_range(0..=8usize);
            let mut cands: Vec<(f64, GalleryImage)> = (0..n)
                .map(|_| {
                    seq += 1;
                    let frame = rng.random_range(chunk.start_frame..chunk.end_frame);
                    // Half the candidates sit on an annotated box, shifted a little or a lot.
                    let on_gt: Vec<&GroundTruthRecord> = records
                        .iter()
                        .filter(|r| r.video_id == chunk.video_id && r.frame == frame)
                        .collect();
                    let bbox = if !on_gt.is_empty() && rng.random::<bool>() {
                        let r = on_gt[rng.random_range(0..on_gt.len())];
                        let dx = [0.0, 2.0, 5.0, 7.0, 15.0][rng.random_range(0..5)];
                        BoundingBox {
                            x: r.bbox.x + dx,
                            ..r.bbox
                        }
                    } else {
                        BoundingBox {
                            x: rng.random_range(0.0..100.0),
                            y: rng.random_range(0.0..50.0),
                            w: 20.0,
                            h: 50.0,
                        }
                    };
                    let score = rng.random_range(0..=100u32) as f64 / 100.0;
                    let image = GalleryImage {
                        detection: Detection {
                            video_id: chunk.video_id.clone(),
                            frame,
                            bbox,
                            confidence: 1.0,
                            crop_ref: format!("g{seq}"),
                            seq,
                        },
                        tracklet_id: seq,
                        normality_score: 0.5,
                    };
                    (score, image)
                })
                .collect();
            cands.sort_by(|a, b| {
                b.0.total_cmp(&a.0)
                    .then_with(|| a.1.detection.order_key().cmp(&b.1.detection.order_key()))
            });
            let ranked = cands
                .into_iter()
                .enumerate()
                .map(|(i, (score, image))| RankedCandidate {
                    image,
                    score,
                    rank: i + 1,
                })
                .collect();
            pairs.push((q, c, ranked));
        }
    }
    Ok(MetricFixture {
        records,
        ground_truth,
        queries,
        chunks,
        pairs,
        eta: rng.random_range(1..=6usize),
    })
}
