//! Open-set query matching against a chunk gallery.

use serde::{Deserialize, Serialize};

use crate::domain::{cosine_similarity, map_to_score, Chunk, GalleryImage, Query};
use crate::error::{Error, Result};
use crate::ingest::EmbeddingTable;
use crate::selector::Gallery;

/// Number of candidates shown per alert.
pub const DEFAULT_ETA: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub image: GalleryImage,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Scores every gallery image against the query, best first.
///
/// Equal scores are ordered by frame, then by file order.
pub fn rank_gallery(
    query: &Query,
    gallery: &Gallery,
    embeddings: &EmbeddingTable,
) -> Result<Vec<RankedCandidate>> {
    let mut scored = gallery
        .images
        .iter()
        .map(|img| {
            let e = embeddings.get(&img.detection.crop_ref)?;
            let s = map_to_score(cosine_similarity(&query.embedding, e)?);
            Ok((s, img))
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| a.1.detection.order_key().cmp(&b.1.detection.order_key()))
    });
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(i, (score, img))| RankedCandidate {
            image: img.clone(),
            score,
            rank: i + 1,
        })
        .collect())
}

/// Alert decision for one (query, chunk) pair at one threshold.
///
/// Borrows its candidate list from the ranking it was decided on.
#[derive(Debug, Clone, PartialEq)]
pub struct AlertOutcome<'a> {
    pub query_id: &'a str,
    pub chunk: &'a Chunk,
    pub raised: bool,
    pub candidates: &'a [RankedCandidate],
    pub top_score: Option<f64>,
}

/// Raises an alert when the best score reaches `beta`; presents the first
/// `eta` candidates.
pub fn decide_alert<'a>(
    query_id: &'a str,
    chunk: &'a Chunk,
    ranked: &'a [RankedCandidate],
    beta: f64,
    eta: usize,
) -> Result<AlertOutcome<'a>> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Config(format!("beta {beta} outside [0, 1]")));
    }
    if eta == 0 {
        return Err(Error::Config("eta must be >= 1".into()));
    }
    let top_score = ranked.first().map(|c| c.score);
    Ok(AlertOutcome {
        query_id,
        chunk,
        raised: top_score.is_some_and(|s| s >= beta),
        candidates: &ranked[..ranked.len().min(eta)],
        top_score,
    })
}
