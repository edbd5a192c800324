//! End-to-end orchestration: split videos into chunks, generate one gallery
//! per chunk, and rank every query against every gallery.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Chunk, GalleryImage, Query};
use crate::error::{Error, Result};
use crate::evaluator::{
    accounting, evaluate_curve, per_query_summary, summarize_curve, Accounting, BetaGrid,
    EvalCurve, PairView, RunSummary,
};
use crate::ingest::{
    load_detections, load_embeddings, load_ground_truth, load_queries, load_scores,
    validate_queries, DetectionSet, EmbeddingTable, GroundTruth, ScoreTable,
    DEFAULT_MIN_CONFIDENCE, DETECTIONS_FILE, EMBEDDINGS_FILE, GROUND_TRUTH_FILE, QUERIES_FILE,
    SCORES_FILE,
};
use crate::reid::{rank_gallery, RankedCandidate, DEFAULT_ETA};
use crate::selector::{build_gallery, Gallery, HeuristicScorerConfig, ScorerKind};
use crate::tracker::{build_tracklets, tracker_by_name, GalleryMode, TrackletBuildConfig};

/// Frames per chunk.
pub const DEFAULT_TAU: u32 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: GalleryMode,
    /// Maximum tracklet length and detector period. Ignored by Baseline.
    pub max_len: usize,
    pub tau: u32,
    pub eta: usize,
    pub beta_grid: BetaGrid,
    pub scorer: ScorerKind,
    pub tracker: String,
    pub iou_match_threshold: f64,
    pub min_confidence: f64,
    pub heuristic: HeuristicScorerConfig,
    /// Recorded for provenance; the pipeline itself draws no random numbers.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: GalleryMode::Trade,
            max_len: 20,
            tau: DEFAULT_TAU,
            eta: DEFAULT_ETA,
            beta_grid: BetaGrid::default(),
            scorer: ScorerKind::Heuristic,
            tracker: "greedy-iou".into(),
            iou_match_threshold: 0.3,
            min_confidence: DEFAULT_MIN_CONFIDENCE,
            heuristic: HeuristicScorerConfig::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_len == 0 {
            return Err(Error::Config("N must be >= 1".into()));
        }
        if self.tau == 0 {
            return Err(Error::Config("tau must be >= 1".into()));
        }
        if self.eta == 0 {
            return Err(Error::Config("eta must be >= 1".into()));
        }
        if self.beta_grid.steps == 0 {
            return Err(Error::Config("beta grid needs at least one step".into()));
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(Error::Config(format!(
                "minimum confidence {} outside [0, 1]",
                self.min_confidence
            )));
        }
        self.tracklet_config().validate()
    }

    pub fn tracklet_config(&self) -> TrackletBuildConfig {
        TrackletBuildConfig {
            max_len: match self.mode {
                GalleryMode::Baseline => 1,
                _ => self.max_len,
            },
            iou_match_threshold: self.iou_match_threshold,
            mode: self.mode,
        }
    }
}

/// Everything a run reads.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// Raw detections; the confidence filter is applied by [`run`].
    pub detections: DetectionSet,
    pub ground_truth: GroundTruth,
    pub embeddings: EmbeddingTable,
    pub scores: Option<Arc<ScoreTable>>,
    pub queries: Vec<Query>,
}

impl Dataset {
    /// Loads the standard files from `dir`; the score table is optional.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let scores = dir.join(SCORES_FILE);
        Ok(Dataset {
            detections: load_detections(&dir.join(DETECTIONS_FILE))?,
            ground_truth: load_ground_truth(&dir.join(GROUND_TRUTH_FILE))?,
            embeddings: load_embeddings(&dir.join(EMBEDDINGS_FILE))?,
            scores: if scores.exists() {
                Some(Arc::new(load_scores(&scores)?))
            } else {
                None
            },
            queries: load_queries(&dir.join(QUERIES_FILE))?,
        })
    }

    /// Files read by [`Dataset::load_dir`] that exist in `dir`, in a fixed order.
    pub fn files(dir: &Path) -> Vec<PathBuf> {
        [
            DETECTIONS_FILE,
            GROUND_TRUTH_FILE,
            EMBEDDINGS_FILE,
            SCORES_FILE,
            QUERIES_FILE,
        ]
        .iter()
        .map(|f| dir.join(f))
        .filter(|p| p.exists())
        .collect()
    }

    /// Videos named by detections or ground truth with their frame counts,
    /// taken as one past the last annotated or detected frame.
    pub fn video_extents(&self) -> Vec<(String, u32)> {
        let mut videos: BTreeSet<&str> = self.ground_truth.videos();
        videos.extend(self.detections.videos());
        videos
            .into_iter()
            .map(|v| {
                let n = self
                    .detections
                    .frame_extent(v)
                    .max(self.ground_truth.frame_extent(v))
                    .unwrap_or(0);
                (v.to_string(), n)
            })
            .collect()
    }
}

/// Consecutive windows of `tau` frames covering `[0, frame_count)`.
pub fn chunk_video(video_id: &str, frame_count: u32, tau: u32) -> Result<Vec<Chunk>> {
    if tau == 0 {
        return Err(Error::Config("tau must be >= 1".into()));
    }
    Ok((0..frame_count)
        .step_by(tau as usize)
        .map(|start| Chunk {
            video_id: video_id.to_string(),
            start_frame: start,
            end_frame: start.saturating_add(tau).min(frame_count),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkResult {
    pub chunk: Chunk,
    pub tracklets: usize,
    pub gallery: Vec<GalleryImage>,
}

/// Ranking of one query against one chunk gallery, truncated to `eta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub query_id: String,
    pub chunk_index: usize,
    pub candidates: Vec<RankedCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: PipelineConfig,
    pub chunks: Vec<ChunkResult>,
    /// Chunk-major, queries in input order.
    pub pairs: Vec<PairResult>,
    pub accounting: Accounting,
}

impl RunResult {
    pub fn pair_views(&self) -> Vec<PairView<'_>> {
        self.pairs
            .iter()
            .map(|p| PairView {
                query_id: &p.query_id,
                chunk: &self.chunks[p.chunk_index].chunk,
                ranked: &p.candidates,
            })
            .collect()
    }

    /// Total gallery images over all chunks.
    pub fn gallery_total(&self) -> usize {
        self.chunks.iter().map(|c| c.gallery.len()).sum()
    }

    pub fn curve(&self, ground_truth: &GroundTruth, queries: &[Query]) -> Result<EvalCurve> {
        self.check_chunk_indexes()?;
        evaluate_curve(
            &self.pair_views(),
            ground_truth,
            queries,
            self.config.beta_grid,
            self.config.eta,
        )
    }

    /// Pooled curve plus the run summary.
    pub fn evaluate(
        &self,
        ground_truth: &GroundTruth,
        queries: &[Query],
    ) -> Result<(EvalCurve, RunSummary)> {
        let curve = self.curve(ground_truth, queries)?;
        let per_query = per_query_summary(
            &self.pair_views(),
            ground_truth,
            queries,
            self.config.beta_grid,
            self.config.eta,
        )?;
        let summary = RunSummary {
            pooled: summarize_curve(&curve),
            per_query,
            gallery_sizes: self.accounting.gallery_sizes.clone(),
            similarity_ops: self.accounting.similarity_ops,
            similarity_ops_per_query: self.accounting.similarity_ops_per_query,
        };
        Ok((curve, summary))
    }

    fn check_chunk_indexes(&self) -> Result<()> {
        match self
            .pairs
            .iter()
            .find(|p| p.chunk_index >= self.chunks.len())
        {
            Some(p) => Err(Error::Validation(format!(
                "pair for query `{}` references chunk {} of {}",
                p.query_id,
                p.chunk_index,
                self.chunks.len()
            ))),
            None => Ok(()),
        }
    }
}

/// Runs gallery generation and re-identification over every chunk.
pub fn run(config: &PipelineConfig, dataset: &Dataset) -> Result<RunResult> {
    config.validate()?;
    if dataset.queries.is_empty() {
        return Err(Error::Config("run needs at least one query".into()));
    }
    validate_queries(&dataset.queries, &dataset.ground_truth)?;
    if let (Some(d), Some(q)) = (dataset.embeddings.dim(), dataset.queries.first()) {
        if q.embedding.dim() != d {
            return Err(Error::Config(format!(
                "queries have dimension {}, embedding table has {d}",
                q.embedding.dim()
            )));
        }
    }

    let tracker = tracker_by_name(&config.tracker, config.iou_match_threshold)?;
    let scorer = config
        .scorer
        .build(&config.heuristic, dataset.scores.clone())?;
    let tracklet_cfg = config.tracklet_config();
    let detections = dataset.detections.filtered(config.min_confidence);

    let mut chunks = Vec::new();
    for (video, frames) in dataset.video_extents() {
        chunks.extend(chunk_video(&video, frames, config.tau)?);
    }

    let galleries = chunks
        .par_iter()
        .map(|chunk| {
            let dets = detections.in_chunk(chunk);
            let tracklets =
                build_tracklets(dets, chunk.start_frame, &tracklet_cfg, tracker.as_ref(), 0)?;
            let gallery = build_gallery(&tracklets, scorer.as_ref())?;
            if let Some(img) = gallery
                .images
                .iter()
                .find(|img| !dataset.embeddings.contains(&img.detection.crop_ref))
            {
                return Err(Error::MissingEmbedding(img.detection.crop_ref.clone()));
            }
            Ok((tracklets.len(), gallery))
        })
        .collect::<Result<Vec<_>>>()?;

    let pairs = galleries
        .par_iter()
        .enumerate()
        .flat_map_iter(|(chunk_index, (_, gallery))| {
            dataset.queries.iter().map(move |q| {
                let mut ranked = rank_gallery(q, gallery, &dataset.embeddings)?;
                ranked.truncate(config.eta);
                Ok(PairResult {
                    query_id: q.query_id.clone(),
                    chunk_index,
                    candidates: ranked,
                })
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let sizes: Vec<usize> = galleries.iter().map(|(_, g)| g.len()).collect();
    let chunks = chunks
        .into_iter()
        .zip(galleries)
        .map(|(chunk, (tracklets, Gallery { images }))| ChunkResult {
            chunk,
            tracklets,
            gallery: images,
        })
        .collect();
    Ok(RunResult {
        config: config.clone(),
        chunks,
        pairs,
        accounting: accounting(sizes, dataset.queries.len()),
    })
}
