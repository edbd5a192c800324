//! Bounded-length tracklet assembly.
//!
//! The detector runs on frames `0, N, 2N, ...` of a chunk. Its detections
//! seed new tracklets; between detector frames every open tracklet is
//! extended by a pluggable [`Tracker`]. A tracklet closes as soon as it
//! holds `N` detections, when its target is lost, or on a frame gap.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{iou, BoundingBox, Detection, Tracklet};
use crate::error::{Error, Result};
use crate::ingest::{group_by_frame, GroundTruth};

/// How gallery candidates are produced from a chunk's detections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GalleryMode {
    /// Every detection on every frame.
    Baseline,
    /// Detections of every N-th frame only, no tracking.
    Skip,
    /// Tracklets of at most N frames, one representative each.
    Trade,
}

impl GalleryMode {
    pub const ALL: [GalleryMode; 3] =
        [GalleryMode::Baseline, GalleryMode::Skip, GalleryMode::Trade];

    pub fn name(self) -> &'static str {
        match self {
            GalleryMode::Baseline => "baseline",
            GalleryMode::Skip => "skip",
            GalleryMode::Trade => "trade",
        }
    }
}

impl fmt::Display for GalleryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GalleryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(GalleryMode::Baseline),
            "skip" => Ok(GalleryMode::Skip),
            "trade" => Ok(GalleryMode::Trade),
            other => Err(Error::Config(format!(
                "unknown mode `{other}` (expected baseline, skip or trade)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackletBuildConfig {
    pub max_len: usize,
    pub iou_match_threshold: f64,
    pub mode: GalleryMode,
}

impl Default for TrackletBuildConfig {
    fn default() -> Self {
        TrackletBuildConfig {
            max_len: 20,
            iou_match_threshold: 0.3,
            mode: GalleryMode::Trade,
        }
    }
}

impl TrackletBuildConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_len == 0 {
            return Err(Error::Config("maximum tracklet length must be >= 1".into()));
        }
        if !(self.iou_match_threshold > 0.0 && self.iou_match_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "iou match threshold {} outside (0, 1]",
                self.iou_match_threshold
            )));
        }
        Ok(())
    }
}

/// Per-track state carried between frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackState {
    pub last_box: BoundingBox,
    /// Displacement of the box centre over the last matched step.
    pub velocity: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    /// Index into the frame's detection slice.
    Matched(usize),
    Lost,
}

/// Single-frame association contract for tracklet continuation.
///
/// `step` receives all open tracks at once and must never return the same
/// detection index for two tracks.
pub trait Tracker: Send + Sync {
    fn name(&self) -> &'static str;

    fn init(&self, detection: &Detection) -> TrackState {
        TrackState {
            last_box: detection.bbox,
            velocity: (0.0, 0.0),
        }
    }

    fn step(&self, tracks: &mut [TrackState], detections: &[Detection]) -> Vec<StepOutcome>;
}

/// Greedy one-to-one IoU assignment.
///
/// Candidate pairs with IoU at or above `threshold` are taken in descending
/// IoU order; equal IoUs fall back to (track index, detection index).
/// Returns, per track, the matched detection index.
pub fn greedy_iou_step(
    active: &[BoundingBox],
    detections: &[BoundingBox],
    threshold: f64,
) -> Vec<Option<usize>> {
    let matrix: Vec<Vec<f64>> = active
        .iter()
        .map(|t| detections.iter().map(|d| iou(t, d)).collect())
        .collect();
    greedy_assign(&matrix, detections.len(), threshold)
}

/// [`greedy_iou_step`] over a precomputed `tracks x detections` IoU matrix.
pub fn greedy_assign(
    matrix: &[Vec<f64>],
    n_detections: usize,
    threshold: f64,
) -> Vec<Option<usize>> {
    let mut pairs = Vec::new();
    for (t, row) in matrix.iter().enumerate() {
        for (d, &v) in row.iter().enumerate() {
            if v >= threshold {
                pairs.push((v, t, d));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut track_of = vec![None; matrix.len()];
    let mut det_used = vec![false; n_detections];
    for (_, t, d) in pairs {
        if track_of[t].is_none() && !det_used[d] {
            track_of[t] = Some(d);
            det_used[d] = true;
        }
    }
    track_of
}

fn apply_matches(
    tracks: &mut [TrackState],
    detections: &[Detection],
    matches: Vec<Option<usize>>,
) -> Vec<StepOutcome> {
    tracks
        .iter_mut()
        .zip(matches)
        .map(|(state, m)| match m {
            Some(d) => {
                let (ox, oy) = state.last_box.center();
                let nb = detections[d].bbox;
                let (nx, ny) = nb.center();
                state.velocity = (nx - ox, ny - oy);
                state.last_box = nb;
                StepOutcome::Matched(d)
            }
            None => StepOutcome::Lost,
        })
        .collect()
}

/// Default tracker: greedy IoU against each track's last box.
#[derive(Debug, Clone, Copy)]
pub struct GreedyIouTracker {
    pub threshold: f64,
}

impl Tracker for GreedyIouTracker {
    fn name(&self) -> &'static str {
        "greedy-iou"
    }

    fn step(&self, tracks: &mut [TrackState], detections: &[Detection]) -> Vec<StepOutcome> {
        let active: Vec<_> = tracks.iter().map(|t| t.last_box).collect();
        let boxes: Vec<_> = detections.iter().map(|d| d.bbox).collect();
        let matches = greedy_iou_step(&active, &boxes, self.threshold);
        apply_matches(tracks, detections, matches)
    }
}

/// Greedy IoU against a constant-velocity prediction of each box.
#[derive(Debug, Clone, Copy)]
pub struct VelocityIouTracker {
    pub threshold: f64,
}

impl Tracker for VelocityIouTracker {
    fn name(&self) -> &'static str {
        "velocity-iou"
    }

    fn step(&self, tracks: &mut [TrackState], detections: &[Detection]) -> Vec<StepOutcome> {
        let predicted: Vec<_> = tracks
            .iter()
            .map(|t| t.last_box.translated(t.velocity.0, t.velocity.1))
            .collect();
        let boxes: Vec<_> = detections.iter().map(|d| d.bbox).collect();
        let matches = greedy_iou_step(&predicted, &boxes, self.threshold);
        apply_matches(tracks, detections, matches)
    }
}

pub const TRACKER_NAMES: &[&str] = &["greedy-iou", "velocity-iou"];

/// Looks up a tracker plug-in by its CLI name.
pub fn tracker_by_name(name: &str, iou_threshold: f64) -> Result<Box<dyn Tracker>> {
    match name {
        "greedy-iou" | "iou" => Ok(Box::new(GreedyIouTracker {
            threshold: iou_threshold,
        })),
        "velocity-iou" => Ok(Box::new(VelocityIouTracker {
            threshold: iou_threshold,
        })),
        other => Err(Error::Config(format!(
            "unknown tracker `{other}` (available: {})",
            TRACKER_NAMES.join(", ")
        ))),
    }
}

struct OpenTrack {
    id: usize,
    detections: Vec<Detection>,
}

/// Builds tracklets for one chunk.
///
/// `detections` must be frame-sorted and belong to a single video;
/// `chunk_start` anchors the detector schedule. Tracklet ids count up from
/// `first_id` in creation order and the output is sorted by id.
pub fn build_tracklets(
    detections: &[Detection],
    chunk_start: u32,
    config: &TrackletBuildConfig,
    tracker: &dyn Tracker,
    first_id: usize,
) -> Result<Vec<Tracklet>> {
    config.validate()?;
    let n = config.max_len;
    let is_detector_frame = |frame: u32| ((frame - chunk_start) as usize).is_multiple_of(n);
    let mut next_id = first_id;
    let mut alloc = || {
        next_id += 1;
        next_id - 1
    };

    match config.mode {
        GalleryMode::Baseline => {
            return detections
                .iter()
                .map(|d| Tracklet::new(alloc(), vec![d.clone()]))
                .collect()
        }
        GalleryMode::Skip => {
            return detections
                .iter()
                .filter(|d| is_detector_frame(d.frame))
                .map(|d| Tracklet::new(alloc(), vec![d.clone()]))
                .collect()
        }
        GalleryMode::Trade => {}
    }

    let mut closed: Vec<(usize, Vec<Detection>)> = Vec::new();
    let mut open: Vec<OpenTrack> = Vec::new();
    let mut states: Vec<TrackState> = Vec::new();
    let mut prev_frame: Option<u32> = None;

    for (frame, frame_dets) in group_by_frame(detections) {
        if frame < chunk_start {
            return Err(Error::Validation(format!(
                "detection on frame {frame} precedes chunk start {chunk_start}"
            )));
        }
        // A skipped frame means every open target went unseen.
        if prev_frame.is_some_and(|p| frame != p + 1) {
            closed.extend(open.drain(..).map(|t| (t.id, t.detections)));
            states.clear();
        }
        prev_frame = Some(frame);

        let mut used = vec![false; frame_dets.len()];
        if !open.is_empty() {
            let outcomes = tracker.step(&mut states, frame_dets);
            if outcomes.len() != open.len() {
                return Err(Error::Validation(format!(
                    "tracker `{}` returned {} outcomes for {} tracks",
                    tracker.name(),
                    outcomes.len(),
                    open.len()
                )));
            }
            let mut keep_open = Vec::with_capacity(open.len());
            let mut keep_states = Vec::with_capacity(open.len());
            for ((mut track, state), outcome) in open.drain(..).zip(states.drain(..)).zip(outcomes)
            {
                match outcome {
                    StepOutcome::Matched(d) => {
                        if d >= frame_dets.len() || used[d] {
                            return Err(Error::Validation(format!(
                                "tracker `{}` assigned detection {d} twice on frame {frame}",
                                tracker.name()
                            )));
                        }
                        used[d] = true;
                        track.detections.push(frame_dets[d].clone());
                        if track.detections.len() >= n {
                            closed.push((track.id, track.detections));
                        } else {
                            keep_open.push(track);
                            keep_states.push(state);
                        }
                    }
                    StepOutcome::Lost => closed.push((track.id, track.detections)),
                }
            }
            open = keep_open;
            states = keep_states;
        }

        if is_detector_frame(frame) {
            for (i, det) in frame_dets.iter().enumerate() {
                if used[i] {
                    continue;
                }
                let id = alloc();
                if n == 1 {
                    closed.push((id, vec![det.clone()]));
                } else {
                    states.push(tracker.init(det));
                    open.push(OpenTrack {
                        id,
                        detections: vec![det.clone()],
                    });
                }
            }
        }
    }
    closed.extend(open.into_iter().map(|t| (t.id, t.detections)));
    closed.sort_by_key(|(id, _)| *id);
    closed
        .into_iter()
        .map(|(id, dets)| Tracklet::new(id, dets))
        .collect()
}

/// Coverage of one identity by a tracklet set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCoverage {
    pub identity: String,
    pub gt_frames: usize,
    pub covered_frames: usize,
    pub coverage: f64,
    /// Tracklets containing this identity together with another one.
    pub switched_tracklets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub identities: Vec<IdentityCoverage>,
    /// Tracklets whose detections map to more than one identity.
    pub label_switches: usize,
}

/// GT identity best overlapping `det` with IoU >= 0.5, if any.
pub fn identity_of(det: &Detection, ground_truth: &GroundTruth) -> Option<String> {
    ground_truth
        .on_frame(&det.video_id, det.frame)
        .map(|r| (iou(&r.bbox, &det.bbox), r))
        .filter(|(v, _)| *v >= 0.5)
        .max_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then_with(|| b.1.identity.cmp(&a.1.identity))
        })
        .map(|(_, r)| r.identity.clone())
}

/// Per-identity frame coverage and label-switch counts.
pub fn track_coverage_stats(tracklets: &[Tracklet], ground_truth: &GroundTruth) -> CoverageReport {
    use std::collections::{BTreeMap, BTreeSet, HashSet};

    let mut covered: HashSet<(&str, u32, &str)> = HashSet::new();
    let mut switched: BTreeMap<String, usize> = BTreeMap::new();
    let mut label_switches = 0;
    for t in tracklets {
        let mut ids = BTreeSet::new();
        for d in t.detections() {
            for r in ground_truth.on_frame(&d.video_id, d.frame) {
                if iou(&r.bbox, &d.bbox) >= 0.5 {
                    covered.insert((r.video_id.as_str(), r.frame, r.identity.as_str()));
                }
            }
            if let Some(id) = identity_of(d, ground_truth) {
                ids.insert(id);
            }
        }
        if ids.len() > 1 {
            label_switches += 1;
            for id in ids {
                *switched.entry(id).or_default() += 1;
            }
        }
    }

    let mut totals: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in ground_truth.records() {
        let e = totals.entry(r.identity.as_str()).or_default();
        e.0 += 1;
        if covered.contains(&(r.video_id.as_str(), r.frame, r.identity.as_str())) {
            e.1 += 1;
        }
    }
    let identities = totals
        .into_iter()
        .map(|(id, (gt_frames, covered_frames))| IdentityCoverage {
            identity: id.to_string(),
            gt_frames,
            covered_frames,
            coverage: covered_frames as f64 / gt_frames as f64,
            switched_tracklets: switched.get(id).copied().unwrap_or(0),
        })
        .collect();
    CoverageReport {
        identities,
        label_switches,
    }
}
