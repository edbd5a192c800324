//! Representative selection: score every image of a tracklet for its
//! fitness as a re-identification crop and keep the best one.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Detection, GalleryImage, Tracklet};
use crate::error::{Error, Result};
use crate::ingest::ScoreTable;

/// Normality scorer plug-in. Must be deterministic per detection.
pub trait Scorer: Send + Sync {
    fn name(&self) -> &'static str;
    fn score(&self, detection: &Detection) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicScorerConfig {
    /// Expected height/width ratio of a full-body crop.
    pub target_aspect: f64,
    pub aspect_weight: f64,
    /// Penalty per frame edge the box touches.
    pub margin_weight: f64,
    pub frame_width: f64,
    pub frame_height: f64,
}

impl Default for HeuristicScorerConfig {
    fn default() -> Self {
        HeuristicScorerConfig {
            target_aspect: 2.5,
            aspect_weight: 2.0,
            margin_weight: 0.5,
            frame_width: 640.0,
            frame_height: 480.0,
        }
    }
}

impl HeuristicScorerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.aspect_weight < 0.0 || self.margin_weight < 0.0 {
            return Err(Error::Config(
                "heuristic scorer weights must be >= 0".into(),
            ));
        }
        if !(self.target_aspect > 0.0 && self.frame_width > 0.0 && self.frame_height > 0.0) {
            return Err(Error::Config(
                "target aspect and frame size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Geometric stand-in for a learned one-class scorer: rewards confident,
/// full-body-shaped boxes that are not cut by the frame border.
pub fn heuristic_score(detection: &Detection, config: &HeuristicScorerConfig) -> f64 {
    let b = &detection.bbox;
    let log_dev = (b.h / b.w).ln() - config.target_aspect.ln();
    let aspect_factor = (-config.aspect_weight * log_dev * log_dev).exp();
    let touched = [
        b.x <= 0.0,
        b.y <= 0.0,
        b.right() >= config.frame_width,
        b.bottom() >= config.frame_height,
    ]
    .iter()
    .filter(|&&t| t)
    .count();
    let margin_factor = (1.0 - config.margin_weight).max(0.0).powi(touched as i32);
    detection.confidence * aspect_factor * margin_factor
}

#[derive(Debug, Clone)]
pub struct HeuristicScorer(pub HeuristicScorerConfig);

impl Scorer for HeuristicScorer {
    fn name(&self) -> &'static str {
        "heuristic"
    }

    fn score(&self, detection: &Detection) -> Result<f64> {
        Ok(heuristic_score(detection, &self.0))
    }
}

/// Returns the stored score for `detection.crop_ref`.
pub fn table_score(detection: &Detection, table: &ScoreTable) -> Result<f64> {
    table
        .get(&detection.crop_ref)
        .ok_or_else(|| Error::MissingScore(detection.crop_ref.clone()))
}

#[derive(Debug, Clone)]
pub struct TableScorer(pub Arc<ScoreTable>);

impl Scorer for TableScorer {
    fn name(&self) -> &'static str {
        "table"
    }

    fn score(&self, detection: &Detection) -> Result<f64> {
        table_score(detection, &self.0)
    }
}

/// Scores everything equally, so selection falls back to the first frame.
#[derive(Debug, Clone, Copy)]
pub struct ConstantScorer;

impl Scorer for ConstantScorer {
    fn name(&self) -> &'static str {
        "constant"
    }

    fn score(&self, _detection: &Detection) -> Result<f64> {
        Ok(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    Heuristic,
    Table,
    Constant,
}

impl std::str::FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heuristic" => Ok(ScorerKind::Heuristic),
            "table" => Ok(ScorerKind::Table),
            "constant" => Ok(ScorerKind::Constant),
            other => Err(Error::Config(format!(
                "unknown scorer `{other}` (available: heuristic, table, constant)"
            ))),
        }
    }
}

impl ScorerKind {
    pub fn name(self) -> &'static str {
        match self {
            ScorerKind::Heuristic => "heuristic",
            ScorerKind::Table => "table",
            ScorerKind::Constant => "constant",
        }
    }

    pub fn build(
        self,
        heuristic: &HeuristicScorerConfig,
        table: Option<Arc<ScoreTable>>,
    ) -> Result<Box<dyn Scorer>> {
        match self {
            ScorerKind::Heuristic => {
                heuristic.validate()?;
                Ok(Box::new(HeuristicScorer(*heuristic)))
            }
            ScorerKind::Table => table
                .map(|t| Box::new(TableScorer(t)) as Box<dyn Scorer>)
                .ok_or_else(|| Error::Config("scorer `table` needs a score table".into())),
            ScorerKind::Constant => Ok(Box::new(ConstantScorer)),
        }
    }
}

/// Highest-scoring detection of the tracklet; ties go to the earliest frame,
/// then to file order.
pub fn select_representative(tracklet: &Tracklet, scorer: &dyn Scorer) -> Result<GalleryImage> {
    let mut best: Option<(f64, &Detection)> = None;
    for det in tracklet.detections() {
        let s = scorer.score(det)?;
        if !s.is_finite() {
            return Err(Error::Validation(format!(
                "scorer `{}` produced non-finite score for `{}`",
                scorer.name(),
                det.crop_ref
            )));
        }
        let replace = match best {
            None => true,
            Some((bs, bd)) => s > bs || (s == bs && det.order_key() < bd.order_key()),
        };
        if replace {
            best = Some((s, det));
        }
    }
    let (normality_score, det) = best.expect("tracklets are non-empty");
    Ok(GalleryImage {
        detection: det.clone(),
        tracklet_id: tracklet.id(),
        normality_score,
    })
}

/// Search gallery of one chunk.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Gallery {
    pub images: Vec<GalleryImage>,
}

impl Gallery {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// One representative per tracklet, ordered by video, first frame, then
/// tracklet id.
pub fn build_gallery(tracklets: &[Tracklet], scorer: &dyn Scorer) -> Result<Gallery> {
    let mut keyed = tracklets
        .par_iter()
        .map(|t| {
            select_representative(t, scorer)
                .map(|img| ((t.video_id().to_string(), t.first_frame(), t.id()), img))
        })
        .collect::<Result<Vec<_>>>()?;
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(Gallery {
        images: keyed.into_iter().map(|(_, img)| img).collect(),
    })
}
