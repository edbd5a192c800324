//! Seeded synthetic scenes: walking people, a noisy detector, appearance
//! embeddings and normality scores, written in the same table formats the
//! loaders read.
//!
//! Each identity owns a unit anchor vector. A clean crop embeds near its
//! anchor; a bad crop (cut-off body, background-dominated box) mixes the
//! anchor with a random direction and gets a distorted box. The score table
//! ranks bad crops below clean ones with probability `scorer_fidelity`.

pub mod fixtures;
pub mod oracle;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{iou, BoundingBox, Detection, Embedding, Query};
use crate::error::{Error, Result};
use crate::ingest::{
    write_detections, write_embeddings, write_ground_truth, write_queries, write_scores,
    DetectionSet, EmbeddingTable, GroundTruth, GroundTruthRecord, ScoreTable, DETECTIONS_FILE,
    EMBEDDINGS_FILE, GROUND_TRUTH_FILE, QUERIES_FILE, SCORES_FILE,
};
use crate::pipeline::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub seed: u64,
    /// Size of the identity universe shared by all videos.
    pub n_identities: usize,
    pub n_cameras: usize,
    pub n_videos_per_camera: usize,
    pub frames_per_video: u32,
    pub frame_width: f64,
    pub frame_height: f64,
    /// People present for the whole video, each in its own horizontal lane.
    pub persistent_persons: usize,
    /// Probability that a new person enters on any given frame.
    pub entry_rate: f64,
    /// Per-frame probability of leaving once `min_stay` has elapsed.
    pub exit_rate: f64,
    pub min_stay: u32,
    /// Box width range in pixels; height follows `body_aspect`.
    pub box_width: (f64, f64),
    pub body_aspect: f64,
    /// Per-frame positional noise of the walk itself.
    pub walk_jitter: f64,
    /// Detector box noise, in pixels.
    pub box_jitter: f64,
    pub miss_probability: f64,
    /// Miss probability for a person standing behind another one.
    pub occlusion_miss_probability: f64,
    /// Probability that a transient visitor walks through someone else.
    pub crossing_rate: f64,
    pub bad_crop_probability: f64,
    /// Weight of the random direction in a bad crop's embedding.
    pub bad_crop_weight: f64,
    /// Probability a bad crop scores below a clean crop of the same person.
    pub scorer_fidelity: f64,
    /// Expected spurious detections per frame.
    pub false_positive_rate: f64,
    pub embedding_dim: usize,
    /// Norm of the appearance offset of one visit from its identity anchor.
    pub embedding_noise: f64,
    /// Norm of the per-frame noise around a visit's appearance.
    pub frame_noise: f64,
    /// Norm of the noise added to an anchor for a query image.
    pub query_noise: f64,
    /// Largest cosine allowed between two identity anchors.
    pub anchor_max_cosine: f64,
    pub n_queries: usize,
}

impl Default for WorldConfig {
    /// The default noisy world used for mode comparisons.
    fn default() -> Self {
        WorldConfig {
            seed: 0,
            n_identities: 120,
            n_cameras: 2,
            n_videos_per_camera: 5,
            frames_per_video: 2000,
            frame_width: 640.0,
            frame_height: 480.0,
            persistent_persons: 0,
            entry_rate: 0.012,
            exit_rate: 0.01,
            min_stay: 60,
            box_width: (36.0, 56.0),
            body_aspect: 2.5,
            walk_jitter: 0.5,
            box_jitter: 2.0,
            miss_probability: 0.03,
            occlusion_miss_probability: 0.7,
            crossing_rate: 0.3,
            bad_crop_probability: 0.3,
            bad_crop_weight: 0.9,
            scorer_fidelity: 0.9,
            false_positive_rate: 0.02,
            embedding_dim: 32,
            embedding_noise: 1.2,
            frame_noise: 0.15,
            query_noise: 1.2,
            anchor_max_cosine: 0.6,
            n_queries: 30,
        }
    }
}

impl WorldConfig {
    /// `persons` people visible for all `frames` frames of one video,
    /// detected perfectly, with no one else around.
    pub fn persistent(persons: usize, frames: u32, seed: u64) -> Self {
        WorldConfig {
            seed,
            n_identities: persons.max(1),
            n_cameras: 1,
            n_videos_per_camera: 1,
            frames_per_video: frames,
            persistent_persons: persons,
            entry_rate: 0.0,
            walk_jitter: 0.0,
            box_jitter: 0.0,
            miss_probability: 0.0,
            occlusion_miss_probability: 0.0,
            crossing_rate: 0.0,
            bad_crop_probability: 0.0,
            false_positive_rate: 0.0,
            n_queries: persons.clamp(1, 4),
            ..WorldConfig::default()
        }
    }

    /// A single ~1.5 minute clip with sparse foot traffic.
    pub fn short_clip(seed: u64) -> Self {
        WorldConfig {
            seed,
            n_identities: 60,
            n_cameras: 1,
            n_videos_per_camera: 1,
            frames_per_video: 2700,
            entry_rate: 0.0055,
            exit_rate: 0.01,
            min_stay: 60,
            n_queries: 4,
            ..WorldConfig::default()
        }
    }

    /// Busy scenes with frequent crossings and short visits.
    pub fn crowded_crossings(seed: u64) -> Self {
        WorldConfig {
            seed,
            entry_rate: 0.02,
            exit_rate: 0.02,
            min_stay: 30,
            crossing_rate: 0.8,
            ..WorldConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("entry_rate", self.entry_rate),
            ("exit_rate", self.exit_rate),
            ("miss_probability", self.miss_probability),
            (
                "occlusion_miss_probability",
                self.occlusion_miss_probability,
            ),
            ("crossing_rate", self.crossing_rate),
            ("bad_crop_probability", self.bad_crop_probability),
            ("bad_crop_weight", self.bad_crop_weight),
            ("scorer_fidelity", self.scorer_fidelity),
            ("false_positive_rate", self.false_positive_rate),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Generation(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if self.embedding_dim < 2 {
            return Err(Error::Generation("embedding dimension must be >= 2".into()));
        }
        if self.n_identities == 0 || self.n_cameras == 0 || self.n_videos_per_camera == 0 {
            return Err(Error::Generation(
                "world needs identities, cameras and videos".into(),
            ));
        }
        let (wmin, wmax) = self.box_width;
        if !(wmin > 0.0 && wmin <= wmax) || self.body_aspect <= 0.0 {
            return Err(Error::Generation(format!(
                "bad box width range {wmin}..{wmax}"
            )));
        }
        let hmax = wmax * self.body_aspect;
        if wmax >= self.frame_width || hmax >= self.frame_height {
            return Err(Error::Generation(format!(
                "a {wmax}x{hmax} box does not fit a {}x{} frame",
                self.frame_width, self.frame_height
            )));
        }
        if self.persistent_persons as f64 * hmax > self.frame_height {
            return Err(Error::Generation(format!(
                "{} persistent persons need {} px of lanes, frame has {}",
                self.persistent_persons,
                self.persistent_persons as f64 * hmax,
                self.frame_height
            )));
        }
        if self.persistent_persons > self.n_identities {
            return Err(Error::Generation(
                "more persistent persons than identities".into(),
            ));
        }
        if self.n_queries == 0 {
            return Err(Error::Generation("world needs at least one query".into()));
        }
        if !(self.anchor_max_cosine > -1.0 && self.anchor_max_cosine <= 1.0) {
            return Err(Error::Generation(
                "anchor_max_cosine outside (-1, 1]".into(),
            ));
        }
        if self.embedding_noise < 0.0
            || self.frame_noise < 0.0
            || self.query_noise < 0.0
            || self.walk_jitter < 0.0
            || self.box_jitter < 0.0
        {
            return Err(Error::Generation("noise levels must be >= 0".into()));
        }
        Ok(())
    }

    pub fn video_ids(&self) -> Vec<String> {
        (0..self.n_cameras)
            .flat_map(|c| (0..self.n_videos_per_camera).map(move |v| format!("cam{c}_v{v:02}")))
            .collect()
    }
}

/// Generated scene plus per-crop truth used by analyses.
#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    pub ground_truth: Vec<GroundTruthRecord>,
    pub detections: Vec<Detection>,
    pub embeddings: EmbeddingTable,
    pub scores: ScoreTable,
    pub queries: Vec<Query>,
    pub anchors: Vec<Embedding>,
    /// Crop refs generated as bad crops or spurious boxes.
    pub bad_crops: BTreeSet<String>,
}

impl World {
    pub fn dataset(&self) -> Result<Dataset> {
        Ok(Dataset {
            detections: DetectionSet::from_detections(self.detections.iter().cloned())?,
            ground_truth: GroundTruth::from_records(self.ground_truth.clone())?,
            embeddings: self.embeddings.clone(),
            scores: Some(Arc::new(self.scores.clone())),
            queries: self.queries.clone(),
        })
    }

    /// Writes the five tables into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, bytes) in self.to_files()? {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    /// File name and contents of every table.
    pub fn to_files(&self) -> Result<Vec<(&'static str, Vec<u8>)>> {
        let mut det = Vec::new();
        write_detections(&mut det, &self.detections)?;
        let mut gt = Vec::new();
        write_ground_truth(&mut gt, &self.ground_truth)?;
        let mut emb = Vec::new();
        write_embeddings(&mut emb, &self.embeddings)?;
        let mut sc = Vec::new();
        write_scores(&mut sc, &self.scores)?;
        let mut q = Vec::new();
        write_queries(&mut q, &self.queries)?;
        Ok(vec![
            (DETECTIONS_FILE, det),
            (GROUND_TRUTH_FILE, gt),
            (EMBEDDINGS_FILE, emb),
            (SCORES_FILE, sc),
            (QUERIES_FILE, q),
        ])
    }
}

/// A person's path through one video.
#[derive(Debug, Clone)]
struct Visit {
    identity: usize,
    start: u32,
    /// Exclusive.
    end: u32,
    w: f64,
    h: f64,
    /// Top-left positions, linearly interpolated between.
    waypoints: Vec<(u32, f64, f64)>,
    /// Persistent walkers bounce between two x positions.
    bounce: Option<(f64, f64, f64)>,
}

impl Visit {
    fn present(&self, frame: u32) -> bool {
        frame >= self.start && frame < self.end
    }

    fn position(&self, frame: u32) -> (f64, f64) {
        if let Some((left, right, y)) = self.bounce {
            let span = right - left;
            if span <= 0.0 {
                return (left, y);
            }
            let t = (frame - self.start) as f64 % (2.0 * span);
            let x = if t <= span {
                left + t
            } else {
                right - (t - span)
            };
            return (x, y);
        }
        let wp = &self.waypoints;
        let i = wp.partition_point(|p| p.0 <= frame).clamp(1, wp.len() - 1);
        let (f0, x0, y0) = wp[i - 1];
        let (f1, x1, y1) = wp[i];
        let a = if f1 > f0 {
            ((frame as f64 - f0 as f64) / (f1 - f0) as f64).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (x0 + a * (x1 - x0), y0 + a * (y1 - y0))
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Unit vector near `anchor`: `anchor + noise * z` with `|z| ~ 1`.
fn perturbed(rng: &mut ChaCha8Rng, anchor: &Embedding, noise: f64) -> Result<Embedding> {
    let d = anchor.dim();
    let scale = noise / (d as f64).sqrt();
    Embedding::normalized(
        anchor
            .values()
            .iter()
            .map(|a| a + scale * gaussian(rng))
            .collect(),
    )
}

fn mixed(rng: &mut ChaCha8Rng, anchor: &Embedding, weight: f64) -> Result<Embedding> {
    let r = random_unit(rng, anchor.dim());
    let v: Vec<f64> = anchor
        .values()
        .iter()
        .zip(&r)
        .map(|(a, b)| (1.0 - weight) * a + weight * b)
        .collect();
    match Embedding::normalized(v) {
        Ok(e) => Ok(e),
        // Exactly antipodal mix; fall back to the random direction.
        Err(_) => Embedding::normalized(r),
    }
}

fn sample_anchors(rng: &mut ChaCha8Rng, config: &WorldConfig) -> Result<Vec<Embedding>> {
    const MAX_TRIES: usize = 10_000;
    let mut anchors: Vec<Embedding> = Vec::with_capacity(config.n_identities);
    while anchors.len() < config.n_identities {
        let mut placed = false;
        for _ in 0..MAX_TRIES {
            let cand = Embedding::normalized(random_unit(rng, config.embedding_dim))?;
            let ok = anchors.iter().all(|a| {
                let dot: f64 = a
                    .values()
                    .iter()
                    .zip(cand.values())
                    .map(|(x, y)| x * y)
                    .sum();
                dot <= config.anchor_max_cosine
            });
            if ok {
                anchors.push(cand);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Generation(format!(
                "cannot place {} anchors in {} dimensions with pairwise cosine <= {}",
                config.n_identities, config.embedding_dim, config.anchor_max_cosine
            )));
        }
    }
    Ok(anchors)
}

fn clamp_box(x: f64, y: f64, w: f64, h: f64, cfg: &WorldConfig) -> BoundingBox {
    let w = w.clamp(1.0, cfg.frame_width);
    let h = h.clamp(1.0, cfg.frame_height);
    BoundingBox {
        x: x.clamp(0.0, cfg.frame_width - w),
        y: y.clamp(0.0, cfg.frame_height - h),
        w,
        h,
    }
}

/// Score drawn so that `P(bad < clean) = fidelity` with clean ~ U(0.5, 1).
fn crop_score(rng: &mut ChaCha8Rng, bad: bool, fidelity: f64) -> f64 {
    if !bad {
        return rng.random_range(0.5..1.0);
    }
    let u: f64 = rng.random();
    if fidelity >= 0.5 {
        if u < 2.0 * fidelity - 1.0 {
            rng.random_range(0.0..0.5)
        } else {
            rng.random_range(0.5..1.0)
        }
    } else if u < 1.0 - 2.0 * fidelity {
        rng.random_range(1.0..1.5)
    } else {
        rng.random_range(0.5..1.0)
    }
}

fn plan_visits(rng: &mut ChaCha8Rng, cfg: &WorldConfig) -> Vec<Visit> {
    let frames = cfg.frames_per_video;
    let (wmin, wmax) = cfg.box_width;
    let mut visits: Vec<Visit> = Vec::new();

    if cfg.persistent_persons > 0 {
        let lane_h = cfg.frame_height / cfg.persistent_persons as f64;
        let ids = sample(rng, cfg.n_identities, cfg.persistent_persons).into_vec();
        for (lane, identity) in ids.into_iter().enumerate() {
            let w = rng.random_range(wmin..=wmax);
            let h = w * cfg.body_aspect;
            let y = lane as f64 * lane_h + (lane_h - h) / 2.0;
            let left = rng.random_range(0.0..(cfg.frame_width - w) / 2.0);
            let right = rng.random_range((cfg.frame_width - w) / 2.0..cfg.frame_width - w);
            visits.push(Visit {
                identity,
                start: 0,
                end: frames,
                w,
                h,
                waypoints: vec![(0, left, y)],
                bounce: Some((left, right, y)),
            });
        }
    }

    for t in 0..frames {
        if cfg.entry_rate <= 0.0 || rng.random::<f64>() >= cfg.entry_rate {
            continue;
        }
        let busy: BTreeSet<usize> = visits
            .iter()
            .filter(|v| v.present(t))
            .map(|v| v.identity)
            .collect();
        if busy.len() >= cfg.n_identities {
            continue;
        }
        let identity = loop {
            let i = rng.random_range(0..cfg.n_identities);
            if !busy.contains(&i) {
                break i;
            }
        };
        let mut stay = cfg.min_stay.max(2);
        while stay < frames && rng.random::<f64>() >= cfg.exit_rate {
            stay += 1;
        }
        let end = t.saturating_add(stay).min(frames);
        let w = rng.random_range(wmin..=wmax);
        let h = w * cfg.body_aspect;
        let max_x = cfg.frame_width - w;
        let max_y = cfg.frame_height - h;
        let from_left = rng.random::<bool>();
        let (x0, x1) = if from_left {
            (0.0, max_x)
        } else {
            (max_x, 0.0)
        };
        let y0 = rng.random_range(0.0..=max_y);
        let y1 = rng.random_range(0.0..=max_y);
        let mid_frame = t + (end - t) / 2;
        let mut mid = (
            rng.random_range(0.2 * max_x..=0.8 * max_x),
            rng.random_range(0.0..=max_y),
        );
        if rng.random::<f64>() < cfg.crossing_rate {
            let others: Vec<&Visit> = visits.iter().filter(|v| v.present(mid_frame)).collect();
            if !others.is_empty() {
                let other = others[rng.random_range(0..others.len())];
                let (ox, oy) = other.position(mid_frame);
                mid = (ox.clamp(0.0, max_x), oy.clamp(0.0, max_y));
            }
        }
        visits.push(Visit {
            identity,
            start: t,
            end,
            w,
            h,
            waypoints: vec![(t, x0, y0), (mid_frame, mid.0, mid.1), (end, x1, y1)],
            bounce: None,
        });
    }
    visits
}

/// Generates a world deterministically from `config.seed`.
pub fn generate(config: &WorldConfig) -> Result<World> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let anchors = sample_anchors(&mut rng, config)?;
    let id_name = |i: usize| format!("p{i:04}");

    let mut ground_truth = Vec::new();
    let mut detections = Vec::new();
    let mut embeddings = EmbeddingTable::new();
    let mut scores = ScoreTable::new();
    let mut bad_crops = BTreeSet::new();
    let mut seen_identities = BTreeSet::new();

    for video in config.video_ids() {
        let visits = plan_visits(&mut rng, config);
        let appearances = visits
            .iter()
            .map(|v| perturbed(&mut rng, &anchors[v.identity], config.embedding_noise))
            .collect::<Result<Vec<_>>>()?;
        for t in 0..config.frames_per_video {
            let present: Vec<(&Visit, &Embedding, BoundingBox)> = visits
                .iter()
                .zip(&appearances)
                .filter(|(v, _)| v.present(t))
                .map(|(v, a)| {
                    let (x, y) = v.position(t);
                    let jx = config.walk_jitter * gaussian(&mut rng);
                    let jy = config.walk_jitter * gaussian(&mut rng);
                    (v, a, clamp_box(x + jx, y + jy, v.w, v.h, config))
                })
                .collect();
            let mut k = 0usize;
            for (i, (visit, appearance, gt_box)) in present.iter().enumerate() {
                seen_identities.insert(visit.identity);
                ground_truth.push(GroundTruthRecord {
                    video_id: video.clone(),
                    frame: t,
                    identity: id_name(visit.identity),
                    bbox: *gt_box,
                });
                // Whoever stands lower in the image is closer to the camera.
                let occluded = present.iter().enumerate().any(|(j, (_, _, other))| {
                    j != i && other.bottom() > gt_box.bottom() && iou(other, gt_box) > 0.3
                });
                let miss = rng.random::<f64>() < config.miss_probability
                    || (occluded && rng.random::<f64>() < config.occlusion_miss_probability);
                if miss {
                    continue;
                }
                let bad = rng.random::<f64>() < config.bad_crop_probability;
                let (bbox, confidence) = if bad {
                    let b = if rng.random::<bool>() {
                        let f = rng.random_range(0.55..0.8);
                        let keep_top = rng.random::<bool>();
                        let y = if keep_top {
                            gt_box.y
                        } else {
                            gt_box.y + gt_box.h * (1.0 - f)
                        };
                        clamp_box(gt_box.x, y, gt_box.w, gt_box.h * f, config)
                    } else {
                        let g = rng.random_range(1.3..1.8);
                        let w = gt_box.w * g;
                        clamp_box(
                            gt_box.x - (w - gt_box.w) / 2.0,
                            gt_box.y,
                            w,
                            gt_box.h,
                            config,
                        )
                    };
                    (b, rng.random_range(0.35..0.85))
                } else {
                    let s = config.box_jitter;
                    let b = clamp_box(
                        gt_box.x + s * gaussian(&mut rng),
                        gt_box.y + s * gaussian(&mut rng),
                        gt_box.w + s * gaussian(&mut rng),
                        gt_box.h + s * gaussian(&mut rng),
                        config,
                    );
                    (b, rng.random_range(0.6..1.0))
                };
                let anchor = &anchors[visit.identity];
                let embedding = if bad {
                    mixed(&mut rng, anchor, config.bad_crop_weight)?
                } else {
                    perturbed(&mut rng, appearance, config.frame_noise)?
                };
                let crop_ref = format!("{video}:{t}:{k}");
                k += 1;
                if bad {
                    bad_crops.insert(crop_ref.clone());
                }
                scores.insert(
                    crop_ref.clone(),
                    crop_score(&mut rng, bad, config.scorer_fidelity),
                )?;
                embeddings.insert(crop_ref.clone(), embedding)?;
                detections.push(Detection {
                    video_id: video.clone(),
                    frame: t,
                    bbox,
                    confidence,
                    crop_ref,
                    seq: 0,
                });
            }
            if config.false_positive_rate > 0.0 && rng.random::<f64>() < config.false_positive_rate
            {
                let w = rng.random_range(config.box_width.0..=config.box_width.1);
                let h = w * rng.random_range(0.8..3.0);
                let bbox = clamp_box(
                    rng.random_range(0.0..config.frame_width - w),
                    rng.random_range(0.0..(config.frame_height - h).max(1.0)),
                    w,
                    h,
                    config,
                );
                let crop_ref = format!("{video}:{t}:{k}");
                bad_crops.insert(crop_ref.clone());
                scores.insert(
                    crop_ref.clone(),
                    crop_score(&mut rng, true, config.scorer_fidelity),
                )?;
                embeddings.insert(
                    crop_ref.clone(),
                    Embedding::normalized(random_unit(&mut rng, config.embedding_dim))?,
                )?;
                detections.push(Detection {
                    video_id: video.clone(),
                    frame: t,
                    bbox,
                    confidence: rng.random_range(0.2..0.7),
                    crop_ref,
                    seq: 0,
                });
            }
        }
    }

    let candidates: Vec<usize> = seen_identities.into_iter().collect();
    if candidates.len() < config.n_queries {
        return Err(Error::Generation(format!(
            "{} queries requested but only {} identities appear",
            config.n_queries,
            candidates.len()
        )));
    }
    let mut picked = sample(&mut rng, candidates.len(), config.n_queries).into_vec();
    picked.sort_unstable();
    let queries = picked
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let identity = candidates[c];
            Ok(Query {
                query_id: format!("q{i:03}"),
                identity: id_name(identity),
                embedding: perturbed(&mut rng, &anchors[identity], config.query_noise)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(World {
        config: config.clone(),
        ground_truth,
        detections,
        embeddings,
        scores,
        queries,
        anchors,
        bad_crops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::cosine_similarity;

    fn small(seed: u64) -> WorldConfig {
        WorldConfig {
            seed,
            n_cameras: 1,
            n_videos_per_camera: 2,
            frames_per_video: 400,
            entry_rate: 0.03,
            n_queries: 3,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate(&small(7)).unwrap().to_files().unwrap();
        let b = generate(&small(7)).unwrap().to_files().unwrap();
        assert_eq!(a, b);
        let c = generate(&small(8)).unwrap().to_files().unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn miss_probability_one_gives_no_detections() {
        let w = generate(&WorldConfig {
            miss_probability: 1.0,
            false_positive_rate: 0.0,
            ..small(1)
        })
        .unwrap();
        assert!(w.detections.is_empty());
        assert!(!w.ground_truth.is_empty());
    }

    #[test]
    fn no_bad_crops_when_probability_zero() {
        let w = generate(&WorldConfig {
            bad_crop_probability: 0.0,
            false_positive_rate: 0.0,
            ..small(2)
        })
        .unwrap();
        assert!(w.bad_crops.is_empty());
    }

    #[test]
    fn infeasible_configs_rejected() {
        let crowded = WorldConfig {
            persistent_persons: 5,
            ..WorldConfig::persistent(5, 10, 0)
        };
        assert!(matches!(generate(&crowded), Err(Error::Generation(_))));
        assert!(generate(&WorldConfig {
            embedding_dim: 1,
            ..small(0)
        })
        .is_err());
        assert!(generate(&WorldConfig {
            bad_crop_probability: 1.5,
            ..small(0)
        })
        .is_err());
        let packed = WorldConfig {
            embedding_dim: 2,
            anchor_max_cosine: -0.9,
            n_identities: 5,
            ..small(0)
        };
        assert!(matches!(generate(&packed), Err(Error::Generation(_))));
    }

    #[test]
    fn embeddings_unit_norm_and_queries_valid() {
        let w = generate(&small(3)).unwrap();
        for (_, e) in w.embeddings.iter() {
            let n: f64 = e.values().iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
        let ds = w.dataset().unwrap();
        crate::ingest::validate_queries(&ds.queries, &ds.ground_truth).unwrap();
        assert_eq!(ds.queries.len(), 3);
    }

    #[test]
    fn persistent_world_has_every_person_every_frame() {
        let w = generate(&WorldConfig::persistent(3, 100, 4)).unwrap();
        assert_eq!(w.ground_truth.len(), 300);
        assert_eq!(w.detections.len(), 300);
        // Lanes never overlap.
        for t in 0..100 {
            let boxes: Vec<_> = w
                .ground_truth
                .iter()
                .filter(|r| r.frame == t)
                .map(|r| r.bbox)
                .collect();
            for i in 0..boxes.len() {
                for j in i + 1..boxes.len() {
                    assert_eq!(iou(&boxes[i], &boxes[j]), 0.0);
                }
            }
        }
    }

    #[test]
    fn fidelity_controls_score_ordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for q in [0.5, 0.75, 0.9, 0.2] {
            let n = 20_000;
            let below = (0..n)
                .filter(|_| crop_score(&mut rng, true, q) < crop_score(&mut rng, false, q))
                .count();
            let p = below as f64 / n as f64;
            assert!((p - q).abs() < 0.015, "fidelity {q}: observed {p}");
        }
    }

    #[test]
    fn same_identity_more_similar_than_cross_identity() {
        let cfg = WorldConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let anchors = sample_anchors(&mut rng, &cfg).unwrap();
        let n = 10_000;
        let (mut same, mut cross) = (0.0, 0.0);
        for i in 0..n {
            let a = i % anchors.len();
            let b = (a + 1 + i % (anchors.len() - 1)) % anchors.len();
            let x = perturbed(&mut rng, &anchors[a], cfg.embedding_noise).unwrap();
            let y = perturbed(&mut rng, &anchors[a], cfg.embedding_noise).unwrap();
            let z = perturbed(&mut rng, &anchors[b], cfg.embedding_noise).unwrap();
            same += cosine_similarity(&x, &y).unwrap();
            cross += cosine_similarity(&x, &z).unwrap();
        }
        let margin = (same - cross) / n as f64;
        assert!(margin > 0.3, "mean similarity margin {margin}");
    }
}
