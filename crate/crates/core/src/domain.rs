//! Shared domain types and geometric primitives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in continuous pixel coordinates, top-left origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = BoundingBox { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.x, self.y, self.w, self.h]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::Validation(format!("non-finite box {self:?}")));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::Validation(format!(
                "box must have positive size, got w={} h={}",
                self.w, self.h
            )));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        BoundingBox {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }
}

/// Intersection over union of two valid boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.right().min(b.right()) - a.x.max(b.x)).max(0.0);
    let ih = (a.bottom().min(b.bottom()) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// A confidence-scored box on one frame of one video.
///
/// `seq` is the position of the record among the video's records in the
/// source file and is the final tie-breaker wherever ordering matters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub video_id: String,
    pub frame: u32,
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub crop_ref: String,
    pub seq: usize,
}

impl Detection {
    /// Ordering key used for deterministic tie-breaks: frame, then file order.
    pub fn order_key(&self) -> (u32, usize) {
        (self.frame, self.seq)
    }
}

/// Ordered run of consecutive-frame detections attributed to one target.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    id: usize,
    detections: Vec<Detection>,
}

impl Tracklet {
    pub fn new(id: usize, detections: Vec<Detection>) -> Result<Self> {
        let first = detections
            .first()
            .ok_or_else(|| Error::Validation(format!("tracklet {id} is empty")))?;
        for pair in detections.windows(2) {
            if pair[1].frame <= pair[0].frame {
                return Err(Error::Validation(format!(
                    "tracklet {id}: frames not strictly increasing ({} then {})",
                    pair[0].frame, pair[1].frame
                )));
            }
        }
        if detections.iter().any(|d| d.video_id != first.video_id) {
            return Err(Error::Validation(format!(
                "tracklet {id} spans more than one video"
            )));
        }
        Ok(Tracklet { id, detections })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn detections(&self) -> &[Detection] {
        &self.detections
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn video_id(&self) -> &str {
        &self.detections[0].video_id
    }

    pub fn first_frame(&self) -> u32 {
        self.detections[0].frame
    }

    pub fn last_frame(&self) -> u32 {
        self.detections[self.detections.len() - 1].frame
    }

    /// True when every frame follows its predecessor by exactly one.
    pub fn is_consecutive(&self) -> bool {
        self.detections
            .windows(2)
            .all(|p| p[1].frame == p[0].frame + 1)
    }
}

/// One representative image entered into a chunk's search gallery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryImage {
    pub detection: Detection,
    pub tracklet_id: usize,
    pub normality_score: f64,
}

/// Half-open frame window `[start_frame, end_frame)` of one video.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Chunk {
    pub video_id: String,
    pub start_frame: u32,
    pub end_frame: u32,
}

impl Chunk {
    pub fn len(&self) -> u32 {
        self.end_frame - self.start_frame
    }

    pub fn is_empty(&self) -> bool {
        self.end_frame == self.start_frame
    }

    pub fn contains(&self, video_id: &str, frame: u32) -> bool {
        self.video_id == video_id && frame >= self.start_frame && frame < self.end_frame
    }
}

/// Unit-norm appearance feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Normalizes `values` to unit Euclidean norm.
    ///
    /// Vectors already unit-norm to within a few ulps are stored untouched so
    /// that a written table reloads bit-identically.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Validation("embedding has zero dimension".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("embedding has non-finite entries".into()));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Validation("zero-norm embedding".into()));
        }
        if (norm - 1.0).abs() <= 8.0 * f64::EPSILON {
            return Ok(Embedding(values));
        }
        Ok(Embedding(values.into_iter().map(|v| v / norm).collect()))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Dot product of two unit embeddings.
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Config(format!(
            "embedding dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

/// Maps a cosine similarity in `[-1, 1]` onto the `[0, 1]` alert scale.
pub fn map_to_score(similarity: f64) -> f64 {
    (similarity + 1.0) / 2.0
}

/// Person of interest searched for in every chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub identity: String,
    pub embedding: Embedding,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    /// Counts unit pixel cells covered by each box; exact for integer boxes.
    fn pixel_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
        let inside = |r: &BoundingBox, px: f64, py: f64| {
            px >= r.x && px < r.right() && py >= r.y && py < r.bottom()
        };
        let (mut inter, mut union) = (0u32, 0u32);
        for py in -5..130 {
            for px in -5..130 {
                let (cx, cy) = (px as f64 + 0.5, py as f64 + 0.5);
                let (ia, ib) = (inside(a, cx, cy), inside(b, cx, cy));
                inter += (ia && ib) as u32;
                union += (ia || ib) as u32;
            }
        }
        inter as f64 / union as f64
    }

    #[test]
    fn iou_examples() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bb(100.0, 100.0, 10.0, 10.0)), 0.0);
        let shifted = bb(5.0, 0.0, 10.0, 10.0);
        let expected = pixel_iou(&a, &shifted);
        assert!((expected - 50.0 / 150.0).abs() < 1e-15);
        assert!((iou(&a, &shifted) - expected).abs() < 1e-15);
    }

    #[test]
    fn touching_boxes_do_not_overlap() {
        assert_eq!(
            iou(&bb(0.0, 0.0, 10.0, 10.0), &bb(10.0, 0.0, 10.0, 10.0)),
            0.0
        );
    }

    #[test]
    fn invalid_boxes_rejected() {
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 1.0, -1.0).is_err());
        assert!(BoundingBox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn similarity_examples() {
        let a = Embedding::normalized(vec![1.0, 0.0]).unwrap();
        let neg = Embedding::normalized(vec![-1.0, 0.0]).unwrap();
        let orth = Embedding::normalized(vec![0.0, 1.0]).unwrap();
        assert_eq!(cosine_similarity(&a, &a).unwrap(), 1.0);
        assert_eq!(map_to_score(1.0), 1.0);
        assert_eq!(cosine_similarity(&a, &neg).unwrap(), -1.0);
        assert_eq!(map_to_score(-1.0), 0.0);
        assert_eq!(cosine_similarity(&a, &orth).unwrap(), 0.0);
        assert_eq!(map_to_score(0.0), 0.5);
    }

    #[test]
    fn similarity_dimension_mismatch_is_config_error() {
        let a = Embedding::normalized(vec![1.0, 0.0]).unwrap();
        let b = Embedding::normalized(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(cosine_similarity(&a, &b), Err(Error::Config(_))));
    }

    #[test]
    fn normalization() {
        let e = Embedding::normalized(vec![3.0, 4.0]).unwrap();
        assert_eq!(e.values(), &[0.6, 0.8]);
        assert!(Embedding::normalized(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn tracklet_invariants() {
        let det = |frame| Detection {
            video_id: "v".into(),
            frame,
            bbox: bb(0.0, 0.0, 1.0, 1.0),
            confidence: 1.0,
            crop_ref: format!("c{frame}"),
            seq: frame as usize,
        };
        assert!(Tracklet::new(0, vec![]).is_err());
        assert!(Tracklet::new(0, vec![det(2), det(1)]).is_err());
        let t = Tracklet::new(0, vec![det(1), det(2)]).unwrap();
        assert!(t.is_consecutive());
        assert!(!Tracklet::new(0, vec![det(1), det(3)])
            .unwrap()
            .is_consecutive());
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (-50.0..50.0f64, -50.0..50.0f64, 0.5..60.0f64, 0.5..60.0f64)
            .prop_map(|(x, y, w, h)| BoundingBox { x, y, w, h })
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
            if a != b {
                prop_assert!(ab < 1.0);
            }
        }

        #[test]
        fn iou_matches_pixel_grid_on_integer_boxes(
            x1 in 0u8..40, y1 in 0u8..40, w1 in 1u8..40, h1 in 1u8..40,
            x2 in 0u8..40, y2 in 0u8..40, w2 in 1u8..40, h2 in 1u8..40,
        ) {
            let a = bb(x1 as f64, y1 as f64, w1 as f64, h1 as f64);
            let b = bb(x2 as f64, y2 as f64, w2 as f64, h2 as f64);
            prop_assert!((iou(&a, &b) - pixel_iou(&a, &b)).abs() < 1e-12);
        }

        #[test]
        fn score_mapping_strictly_monotone(s in -1.0..1.0f64, t in -1.0..1.0f64) {
            if s < t {
                prop_assert!(map_to_score(s) < map_to_score(t));
            }
            prop_assert!((0.0..=1.0).contains(&map_to_score(s)));
        }
    }
}
