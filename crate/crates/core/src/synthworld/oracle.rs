//! Deliberately naive re-implementations of tracklet building and of the
//! evaluation metrics, for cross-checking the main code in tests.
//!
//! Nothing here shares code with the tracker or the evaluator beyond the
//! plain data types.

use crate::domain::{BoundingBox, Chunk, Detection, Query};
use crate::error::{Error, Result};
use crate::ingest::GroundTruthRecord;
use crate::reid::RankedCandidate;
use crate::tracker::GalleryMode;

pub const MAX_ORACLE_FRAMES: u32 = 200;
pub const MAX_ORACLE_DETECTIONS_PER_FRAME: usize = 5;

fn overlap(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    inter / (a.w * a.h + b.w * b.h - inter)
}

/// Tracklets of one chunk's detections, as lists of detections.
///
/// Detections must be in file order. Refuses instances spanning more than
/// [`MAX_ORACLE_FRAMES`] frames or with more than
/// [`MAX_ORACLE_DETECTIONS_PER_FRAME`] detections on a frame.
pub fn oracle_tracklets(
    detections: &[Detection],
    chunk_start: u32,
    max_len: usize,
    iou_threshold: f64,
    mode: GalleryMode,
) -> Result<Vec<Vec<Detection>>> {
    if detections.is_empty() {
        return Ok(Vec::new());
    }
    let first = detections.iter().map(|d| d.frame).min().unwrap_or(0);
    let last = detections.iter().map(|d| d.frame).max().unwrap_or(0);
    if last - first >= MAX_ORACLE_FRAMES {
        return Err(Error::OracleRefused(format!("{} frames", last - first + 1)));
    }
    let mut frames: Vec<Vec<Detection>> = vec![Vec::new(); (last - chunk_start + 1) as usize];
    for d in detections {
        if d.frame < chunk_start {
            return Err(Error::OracleRefused("detection before chunk start".into()));
        }
        frames[(d.frame - chunk_start) as usize].push(d.clone());
    }
    if frames
        .iter()
        .any(|f| f.len() > MAX_ORACLE_DETECTIONS_PER_FRAME)
    {
        return Err(Error::OracleRefused(
            "too many detections on a frame".into(),
        ));
    }

    let mut out = Vec::new();
    if mode == GalleryMode::Baseline || max_len == 1 {
        for f in &frames {
            for d in f {
                out.push(vec![d.clone()]);
            }
        }
        return Ok(out);
    }

    let mut start = 0usize;
    while start < frames.len() {
        // Every track from the previous window has closed by now.
        let mut alive: Vec<Vec<Detection>> =
            frames[start].iter().map(|d| vec![d.clone()]).collect();
        if mode == GalleryMode::Skip {
            out.extend(alive);
            start += max_len;
            continue;
        }
        let mut offset = 1;
        while offset < max_len && start + offset < frames.len() && !alive.is_empty() {
            let dets = &frames[start + offset];
            let mut track_taken = vec![false; alive.len()];
            let mut det_taken = vec![false; dets.len()];
            let mut assigned: Vec<Option<usize>> = vec![None; alive.len()];
            loop {
                let mut best: Option<(f64, usize, usize)> = None;
                for (t, track) in alive.iter().enumerate() {
                    if track_taken[t] {
                        continue;
                    }
                    let last_box = track[track.len() - 1].bbox;
                    for (j, d) in dets.iter().enumerate() {
                        if det_taken[j] {
                            continue;
                        }
                        let v = overlap(&last_box, &d.bbox);
                        if v < iou_threshold {
                            continue;
                        }
                        let better = match best {
                            None => true,
                            Some((bv, _, _)) => v > bv,
                        };
                        if better {
                            best = Some((v, t, j));
                        }
                    }
                }
                match best {
                    None => break,
                    Some((_, t, j)) => {
                        track_taken[t] = true;
                        det_taken[j] = true;
                        assigned[t] = Some(j);
                    }
                }
            }
            let mut still = Vec::new();
            for (t, track) in alive.into_iter().enumerate() {
                match assigned[t] {
                    Some(j) => {
                        let mut track = track;
                        track.push(dets[j].clone());
                        still.push(track);
                    }
                    None => out.push(track),
                }
            }
            alive = still;
            // Leftover detections between detector frames start nothing.
            offset += 1;
        }
        out.extend(alive);
        start += max_len;
    }
    out.sort_by_key(|t| (t[0].frame, t[0].seq));
    Ok(out)
}

/// One (query, chunk) pair with its full ranking.
#[derive(Debug, Clone)]
pub struct OraclePair {
    pub query_id: String,
    pub chunk: Chunk,
    pub ranked: Vec<RankedCandidate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OraclePoint {
    pub beta: f64,
    pub fr: Option<f64>,
    pub tvr: Option<f64>,
    pub alerts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleMetrics {
    pub points: Vec<OraclePoint>,
    pub f1_star: Option<f64>,
    pub beta_star: Option<f64>,
    pub map: Option<f64>,
    /// Mean of per-query areas.
    pub per_query_map: Option<f64>,
}

fn query_identity<'a>(queries: &'a [Query], query_id: &str) -> Option<&'a str> {
    for q in queries {
        if q.query_id == query_id {
            return Some(&q.identity);
        }
    }
    None
}

fn is_match(c: &Detection, identity: &str, gt: &[GroundTruthRecord]) -> bool {
    for r in gt {
        if r.video_id == c.video_id
            && r.frame == c.frame
            && r.identity == identity
            && overlap(&c.bbox, &r.bbox) >= 0.5
        {
            return true;
        }
    }
    false
}

fn is_present(identity: &str, chunk: &Chunk, gt: &[GroundTruthRecord]) -> bool {
    for r in gt {
        if r.identity == identity
            && r.video_id == chunk.video_id
            && r.frame >= chunk.start_frame
            && r.frame < chunk.end_frame
        {
            return true;
        }
    }
    false
}

fn harmonic(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

fn point(
    pairs: &[&OraclePair],
    gt: &[GroundTruthRecord],
    queries: &[Query],
    beta: f64,
    eta: usize,
) -> OraclePoint {
    let mut present = 0usize;
    let mut found = 0usize;
    let mut alerts = 0usize;
    let mut valid = 0usize;
    for p in pairs {
        let Some(identity) = query_identity(queries, &p.query_id) else {
            continue;
        };
        let raised = !p.ranked.is_empty() && p.ranked[0].score >= beta;
        let mut hit = false;
        for (i, c) in p.ranked.iter().enumerate() {
            if i < eta && is_match(&c.image.detection, identity, gt) {
                hit = true;
            }
        }
        if is_present(identity, &p.chunk, gt) {
            present += 1;
            if raised && hit {
                found += 1;
            }
        }
        if raised {
            alerts += 1;
            if hit {
                valid += 1;
            }
        }
    }
    OraclePoint {
        beta,
        fr: if present == 0 {
            None
        } else {
            Some(found as f64 / present as f64)
        },
        tvr: if alerts == 0 {
            None
        } else {
            Some(valid as f64 / alerts as f64)
        },
        alerts,
    }
}

fn area(points: &[OraclePoint]) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for p in points {
        if let (Some(fr), Some(tvr)) = (p.fr, p.tvr) {
            pts.push((fr, tvr));
        }
    }
    if pts.is_empty() {
        return None;
    }
    // Insertion sort by FR.
    for i in 1..pts.len() {
        let mut j = i;
        while j > 0 && pts[j - 1].0 > pts[j].0 {
            pts.swap(j - 1, j);
            j -= 1;
        }
    }
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut i = 0;
    while i < pts.len() {
        let mut sum = 0.0;
        let mut n = 0;
        let mut j = i;
        while j < pts.len() && pts[j].0 == pts[i].0 {
            sum += pts[j].1;
            n += 1;
            j += 1;
        }
        xs.push(pts[i].0);
        ys.push(sum / n as f64);
        i = j;
    }
    let mut total = xs[0] * ys[0];
    for k in 1..xs.len() {
        total += (xs[k] - xs[k - 1]) * (ys[k] + ys[k - 1]) / 2.0;
    }
    Some(total.clamp(0.0, 1.0))
}

/// FR/TVR at every threshold `i / steps` and the pooled summaries, by
/// exhaustive scan.
pub fn oracle_metrics(
    pairs: &[OraclePair],
    ground_truth: &[GroundTruthRecord],
    queries: &[Query],
    steps: u32,
    eta: usize,
) -> OracleMetrics {
    let all: Vec<&OraclePair> = pairs.iter().collect();
    let mut points = Vec::new();
    for i in 0..=steps {
        let beta = i as f64 / steps as f64;
        points.push(point(&all, ground_truth, queries, beta, eta));
    }
    let mut f1_star: Option<f64> = None;
    let mut beta_star: Option<f64> = None;
    for p in &points {
        if let (Some(fr), Some(tvr)) = (p.fr, p.tvr) {
            let v = harmonic(fr, tvr);
            if f1_star.is_none() || v > f1_star.unwrap_or(0.0) {
                f1_star = Some(v);
                beta_star = Some(p.beta);
            }
        }
    }
    let map = area(&points);

    let mut ids: Vec<&str> = Vec::new();
    for p in pairs {
        if !ids.contains(&p.query_id.as_str()) {
            ids.push(&p.query_id);
        }
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for id in ids {
        let mine: Vec<&OraclePair> = pairs.iter().filter(|p| p.query_id == id).collect();
        let mut pts = Vec::new();
        for i in 0..=steps {
            pts.push(point(
                &mine,
                ground_truth,
                queries,
                i as f64 / steps as f64,
                eta,
            ));
        }
        if let Some(a) = area(&pts) {
            sum += a;
            n += 1;
        }
    }
    OracleMetrics {
        points,
        f1_star,
        beta_star,
        map,
        per_query_map: if n == 0 { None } else { Some(sum / n as f64) },
    }
}
