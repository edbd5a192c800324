//! Loading and writing of detection streams, ground truth, embeddings,
//! normality scores and query sets.
//!
//! Every table is comma-separated text with a fixed header line:
//!
//! | file        | header                                   |
//! |-------------|------------------------------------------|
//! | detections  | `video,frame,x,y,w,h,conf,crop_ref`      |
//! | ground truth| `video,frame,identity,x,y,w,h`           |
//! | embeddings  | `ref,dim,v0,...,v{d-1}`                  |
//! | queries     | `query_id,identity,dim,v0,...,v{d-1}`    |
//! | scores      | `crop_ref,score`                         |
//!
//! Floats are written in shortest round-trip form, so load → write → load
//! is bit-identical.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{BoundingBox, Chunk, Detection, Embedding, Query};
use crate::error::{Error, Result};

pub const DETECTIONS_HEADER: &[&str] = &["video", "frame", "x", "y", "w", "h", "conf", "crop_ref"];
pub const GROUND_TRUTH_HEADER: &[&str] = &["video", "frame", "identity", "x", "y", "w", "h"];
pub const SCORES_HEADER: &[&str] = &["crop_ref", "score"];

/// Default detector confidence cut-off; boxes scoring below it are dropped.
/// File names of a dataset directory.
pub const DETECTIONS_FILE: &str = "detections.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.csv";
/// Optional.
pub const SCORES_FILE: &str = "scores.csv";
pub const QUERIES_FILE: &str = "queries.csv";

pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.5;

/// Detections grouped by video, each video's list sorted by frame with file
/// order preserved inside a frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionSet {
    videos: BTreeMap<String, Vec<Detection>>,
}

impl DetectionSet {
    /// Groups detections by video and assigns `seq` from input order.
    pub fn from_detections(detections: impl IntoIterator<Item = Detection>) -> Result<Self> {
        let mut videos: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
        for det in detections {
            let list = videos.entry(det.video_id.clone()).or_default();
            let seq = list.len();
            list.push(Detection { seq, ..det });
        }
        for (video, list) in &mut videos {
            let mut seen = HashSet::with_capacity(list.len());
            for det in list.iter() {
                if !seen.insert(det.crop_ref.as_str()) {
                    return Err(Error::Validation(format!(
                        "duplicate crop_ref `{}` in video `{video}`",
                        det.crop_ref
                    )));
                }
            }
            list.sort_by_key(|d| d.frame);
        }
        Ok(DetectionSet { videos })
    }

    pub fn is_empty(&self) -> bool {
        self.videos.values().all(Vec::is_empty)
    }

    pub fn len(&self) -> usize {
        self.videos.values().map(Vec::len).sum()
    }

    pub fn videos(&self) -> impl Iterator<Item = &str> {
        self.videos.keys().map(String::as_str)
    }

    pub fn video(&self, video_id: &str) -> &[Detection] {
        self.videos.get(video_id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Detections of `video_id` whose frame lies in the chunk.
    pub fn in_chunk(&self, chunk: &Chunk) -> &[Detection] {
        let all = self.video(&chunk.video_id);
        let lo = all.partition_point(|d| d.frame < chunk.start_frame);
        let hi = all.partition_point(|d| d.frame < chunk.end_frame);
        &all[lo..hi]
    }

    /// Per-frame view over one video.
    pub fn frames(&self, video_id: &str) -> impl Iterator<Item = (u32, &[Detection])> {
        group_by_frame(self.video(video_id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Detection> {
        self.videos.values().flatten()
    }

    /// Applies [`filter_detections`] to every video.
    pub fn filtered(&self, min_conf: f64) -> Self {
        DetectionSet {
            videos: self
                .videos
                .iter()
                .map(|(v, dets)| (v.clone(), filter_detections(dets, min_conf)))
                .collect(),
        }
    }

    /// One past the last frame carrying a detection, per video.
    pub fn frame_extent(&self, video_id: &str) -> Option<u32> {
        self.video(video_id).last().map(|d| d.frame + 1)
    }
}

/// Splits a frame-sorted slice into `(frame, detections)` groups.
pub fn group_by_frame(dets: &[Detection]) -> impl Iterator<Item = (u32, &[Detection])> {
    dets.chunk_by(|a, b| a.frame == b.frame)
        .map(|group| (group[0].frame, group))
}

/// Keeps detections with `confidence >= min_conf`, in order.
pub fn filter_detections(dets: &[Detection], min_conf: f64) -> Vec<Detection> {
    dets.iter()
        .filter(|d| d.confidence >= min_conf)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub video_id: String,
    pub frame: u32,
    pub identity: String,
    pub bbox: BoundingBox,
}

/// Annotated identity boxes with lookup indexes.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    records: Vec<GroundTruthRecord>,
    by_frame: HashMap<(String, u32), Vec<usize>>,
    presence: HashMap<(String, String), Vec<u32>>,
    identities: BTreeSet<String>,
}

impl GroundTruth {
    pub fn from_records(records: Vec<GroundTruthRecord>) -> Result<Self> {
        let mut by_frame: HashMap<(String, u32), Vec<usize>> = HashMap::new();
        let mut presence: HashMap<(String, String), Vec<u32>> = HashMap::new();
        let mut identities = BTreeSet::new();
        let mut seen = HashSet::new();
        for (i, rec) in records.iter().enumerate() {
            rec.bbox.validate()?;
            if !seen.insert((rec.video_id.as_str(), rec.frame, rec.identity.as_str())) {
                return Err(Error::Validation(format!(
                    "ground truth has two boxes for identity `{}` on video `{}` frame {}",
                    rec.identity, rec.video_id, rec.frame
                )));
            }
            by_frame
                .entry((rec.video_id.clone(), rec.frame))
                .or_default()
                .push(i);
            presence
                .entry((rec.video_id.clone(), rec.identity.clone()))
                .or_default()
                .push(rec.frame);
            identities.insert(rec.identity.clone());
        }
        for frames in presence.values_mut() {
            frames.sort_unstable();
        }
        Ok(GroundTruth {
            records,
            by_frame,
            presence,
            identities,
        })
    }

    pub fn records(&self) -> &[GroundTruthRecord] {
        &self.records
    }

    pub fn identities(&self) -> &BTreeSet<String> {
        &self.identities
    }

    pub fn videos(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.video_id.as_str()).collect()
    }

    pub fn on_frame(&self, video_id: &str, frame: u32) -> impl Iterator<Item = &GroundTruthRecord> {
        self.by_frame
            .get(&(video_id.to_string(), frame))
            .into_iter()
            .flatten()
            .map(|&i| &self.records[i])
    }

    pub fn box_of(&self, video_id: &str, frame: u32, identity: &str) -> Option<&BoundingBox> {
        self.on_frame(video_id, frame)
            .find(|r| r.identity == identity)
            .map(|r| &r.bbox)
    }

    /// Sorted frames on which `identity` is annotated in `video_id`.
    pub fn frames_of(&self, video_id: &str, identity: &str) -> &[u32] {
        self.presence
            .get(&(video_id.to_string(), identity.to_string()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Whether `identity` has at least one box inside the chunk.
    pub fn is_present(&self, identity: &str, chunk: &Chunk) -> bool {
        let frames = self.frames_of(&chunk.video_id, identity);
        let i = frames.partition_point(|&f| f < chunk.start_frame);
        i < frames.len() && frames[i] < chunk.end_frame
    }

    pub fn frame_extent(&self, video_id: &str) -> Option<u32> {
        self.records
            .iter()
            .filter(|r| r.video_id == video_id)
            .map(|r| r.frame + 1)
            .max()
    }
}

/// Unit embeddings keyed by crop reference, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTable {
    dim: Option<usize>,
    keys: Vec<String>,
    entries: HashMap<String, Embedding>,
}

impl EmbeddingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, embedding: Embedding) -> Result<()> {
        let key = key.into();
        match self.dim {
            Some(d) if d != embedding.dim() => {
                return Err(Error::Validation(format!(
                    "embedding `{key}` has dimension {}, table has {d}",
                    embedding.dim()
                )))
            }
            _ => self.dim = Some(embedding.dim()),
        }
        if self.entries.contains_key(&key) {
            return Err(Error::Validation(format!(
                "duplicate embedding key `{key}`"
            )));
        }
        self.keys.push(key.clone());
        self.entries.insert(key, embedding);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<&Embedding> {
        self.entries
            .get(key)
            .ok_or_else(|| Error::MissingEmbedding(key.to_string()))
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Embedding)> {
        self.keys.iter().map(|k| (k.as_str(), &self.entries[k]))
    }
}

/// Externally computed normality scores keyed by crop reference.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    keys: Vec<String>,
    entries: HashMap<String, f64>,
}

impl ScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, crop_ref: impl Into<String>, score: f64) -> Result<()> {
        let crop_ref = crop_ref.into();
        if !score.is_finite() {
            return Err(Error::Validation(format!(
                "score for `{crop_ref}` is not finite"
            )));
        }
        if self.entries.contains_key(&crop_ref) {
            return Err(Error::Validation(format!(
                "duplicate score key `{crop_ref}`"
            )));
        }
        self.keys.push(crop_ref.clone());
        self.entries.insert(crop_ref, score);
        Ok(())
    }

    pub fn get(&self, crop_ref: &str) -> Option<f64> {
        self.entries.get(crop_ref).copied()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.keys.iter().map(|k| (k.as_str(), self.entries[k]))
    }
}

/// Rejects queries whose identity never appears in the ground truth.
pub fn validate_queries(queries: &[Query], ground_truth: &GroundTruth) -> Result<()> {
    let mut seen = HashSet::new();
    for q in queries {
        if !seen.insert(q.query_id.as_str()) {
            return Err(Error::Validation(format!(
                "duplicate query id `{}`",
                q.query_id
            )));
        }
        if !ground_truth.identities().contains(&q.identity) {
            return Err(Error::Validation(format!(
                "query `{}` references unknown identity `{}`",
                q.query_id, q.identity
            )));
        }
    }
    if let Some(d) = queries.first().map(|q| q.embedding.dim()) {
        if let Some(q) = queries.iter().find(|q| q.embedding.dim() != d) {
            return Err(Error::Validation(format!(
                "query `{}` has dimension {}, expected {d}",
                q.query_id,
                q.embedding.dim()
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Reading

struct TableReader {
    path: PathBuf,
    reader: csv::Reader<Box<dyn Read>>,
    header: Vec<String>,
}

impl TableReader {
    fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(path, Box::new(io::BufReader::new(file)))
    }

    fn from_reader(path: &Path, inner: Box<dyn Read>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(inner);
        let header = match reader.headers() {
            Ok(h) => h.iter().map(str::to_string).collect(),
            Err(e) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    message: e.to_string(),
                })
            }
        };
        Ok(TableReader {
            path: path.to_path_buf(),
            reader,
            header,
        })
    }

    fn parse_err(&self, line: u64, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    fn expect_header(&self, expected: &[&str]) -> Result<()> {
        if self.header.is_empty() || (self.header.len() == 1 && self.header[0].is_empty()) {
            return Ok(());
        }
        if self.header != expected {
            return Err(self.parse_err(
                1,
                format!(
                    "expected header `{}`, found `{}`",
                    expected.join(","),
                    self.header.join(",")
                ),
            ));
        }
        Ok(())
    }

    /// Visits every non-empty record with its 1-based line number.
    fn for_each(&mut self, mut f: impl FnMut(u64, &csv::StringRecord) -> Result<()>) -> Result<()> {
        let mut record = csv::StringRecord::new();
        loop {
            match self.reader.read_record(&mut record) {
                Ok(false) => return Ok(()),
                Ok(true) => {
                    let line = record.position().map(|p| p.line()).unwrap_or(0);
                    if record.len() == 1 && record[0].is_empty() {
                        continue;
                    }
                    f(line, &record)?;
                }
                Err(e) => {
                    let line = e.position().map(|p| p.line()).unwrap_or(0);
                    return Err(self.parse_err(line, e.to_string()));
                }
            }
        }
    }
}

struct Fields<'a> {
    path: &'a Path,
    line: u64,
    record: &'a csv::StringRecord,
}

impl<'a> Fields<'a> {
    fn err(&self, message: String) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            message,
        }
    }

    fn invalid(&self, message: String) -> Error {
        Error::Validation(format!("{}:{}: {message}", self.path.display(), self.line))
    }

    fn expect_len(&self, n: usize) -> Result<()> {
        if self.record.len() != n {
            return Err(self.err(format!("expected {n} fields, found {}", self.record.len())));
        }
        Ok(())
    }

    fn str(&self, i: usize) -> Result<&'a str> {
        let s = self.record.get(i).unwrap_or("");
        if s.is_empty() {
            return Err(self.err(format!("field {i} is empty")));
        }
        Ok(s)
    }

    fn f64(&self, i: usize) -> Result<f64> {
        let s = self.str(i)?;
        s.parse::<f64>()
            .map_err(|_| self.err(format!("field {i}: `{s}` is not a number")))
    }

    fn frame(&self, i: usize) -> Result<u32> {
        let s = self.str(i)?;
        let v: i64 = s
            .parse()
            .map_err(|_| self.err(format!("field {i}: `{s}` is not an integer")))?;
        if v < 0 {
            return Err(self.invalid(format!("negative frame index {v}")));
        }
        u32::try_from(v).map_err(|_| self.invalid(format!("frame index {v} out of range")))
    }

    fn bbox(&self, first: usize) -> Result<BoundingBox> {
        let b = BoundingBox {
            x: self.f64(first)?,
            y: self.f64(first + 1)?,
            w: self.f64(first + 2)?,
            h: self.f64(first + 3)?,
        };
        b.validate().map_err(|e| self.invalid(e.to_string()))?;
        Ok(b)
    }

    /// Reads `dim` followed by exactly `dim` vector components.
    fn vector(&self, dim_index: usize) -> Result<Vec<f64>> {
        let s = self.str(dim_index)?;
        let dim: usize = s
            .parse()
            .map_err(|_| self.err(format!("dimension `{s}` is not an integer")))?;
        self.expect_len(dim_index + 1 + dim)?;
        (0..dim).map(|k| self.f64(dim_index + 1 + k)).collect()
    }
}

fn vector_header(prefix: &[&str], dim: usize) -> Vec<String> {
    prefix
        .iter()
        .map(|s| s.to_string())
        .chain((0..dim).map(|k| format!("v{k}")))
        .collect()
}

fn check_vector_header(table: &TableReader, prefix: &[&str]) -> Result<()> {
    if table.header.len() == 1 && table.header[0].is_empty() {
        return Ok(());
    }
    let dim = table.header.len().saturating_sub(prefix.len());
    if table.header != vector_header(prefix, dim) {
        return Err(table.parse_err(
            1,
            format!(
                "expected header `{},v0,...`, found `{}`",
                prefix.join(","),
                table.header.join(",")
            ),
        ));
    }
    Ok(())
}

pub fn load_detections(path: &Path) -> Result<DetectionSet> {
    read_detections(TableReader::open(path)?)
}

pub fn parse_detections(text: &str) -> Result<DetectionSet> {
    read_detections(TableReader::from_reader(
        Path::new("<memory>"),
        Box::new(io::Cursor::new(text.as_bytes().to_vec())),
    )?)
}

fn read_detections(mut table: TableReader) -> Result<DetectionSet> {
    table.expect_header(DETECTIONS_HEADER)?;
    let path = table.path.clone();
    let mut dets = Vec::new();
    table.for_each(|line, record| {
        let f = Fields {
            path: &path,
            line,
            record,
        };
        f.expect_len(DETECTIONS_HEADER.len())?;
        let confidence = f.f64(6)?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(f.invalid(format!("confidence {confidence} outside [0, 1]")));
        }
        dets.push(Detection {
            video_id: f.str(0)?.to_string(),
            frame: f.frame(1)?,
            bbox: f.bbox(2)?,
            confidence,
            crop_ref: f.str(7)?.to_string(),
            seq: 0,
        });
        Ok(())
    })?;
    DetectionSet::from_detections(dets)
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruth> {
    let mut table = TableReader::open(path)?;
    table.expect_header(GROUND_TRUTH_HEADER)?;
    let mut records = Vec::new();
    table.for_each(|line, record| {
        let f = Fields { path, line, record };
        f.expect_len(GROUND_TRUTH_HEADER.len())?;
        records.push(GroundTruthRecord {
            video_id: f.str(0)?.to_string(),
            frame: f.frame(1)?,
            identity: f.str(2)?.to_string(),
            bbox: f.bbox(3)?,
        });
        Ok(())
    })?;
    GroundTruth::from_records(records)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let mut table = TableReader::open(path)?;
    check_vector_header(&table, &["ref", "dim"])?;
    let mut out = EmbeddingTable::new();
    table.for_each(|line, record| {
        let f = Fields { path, line, record };
        let key = f.str(0)?;
        let embedding =
            Embedding::normalized(f.vector(1)?).map_err(|e| f.invalid(e.to_string()))?;
        out.insert(key, embedding)
            .map_err(|e| f.invalid(e.to_string()))
    })?;
    Ok(out)
}

pub fn load_scores(path: &Path) -> Result<ScoreTable> {
    let mut table = TableReader::open(path)?;
    table.expect_header(SCORES_HEADER)?;
    let mut out = ScoreTable::new();
    table.for_each(|line, record| {
        let f = Fields { path, line, record };
        f.expect_len(2)?;
        out.insert(f.str(0)?, f.f64(1)?)
            .map_err(|e| f.invalid(e.to_string()))
    })?;
    Ok(out)
}

/// Loads queries without referential checks; see [`validate_queries`].
pub fn load_queries(path: &Path) -> Result<Vec<Query>> {
    let mut table = TableReader::open(path)?;
    check_vector_header(&table, &["query_id", "identity", "dim"])?;
    let mut out = Vec::new();
    table.for_each(|line, record| {
        let f = Fields { path, line, record };
        let embedding =
            Embedding::normalized(f.vector(2)?).map_err(|e| f.invalid(e.to_string()))?;
        out.push(Query {
            query_id: f.str(0)?.to_string(),
            identity: f.str(1)?.to_string(),
            embedding,
        });
        Ok(())
    })?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Writing

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().flexible(true).from_writer(w)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io("<output>", io),
        other => Error::Validation(format!("{other:?}")),
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_detections<'a, W: Write>(
    w: W,
    detections: impl IntoIterator<Item = &'a Detection>,
) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(DETECTIONS_HEADER).map_err(csv_err)?;
    for d in detections {
        let b = &d.bbox;
        out.write_record([
            d.video_id.clone(),
            d.frame.to_string(),
            num(b.x),
            num(b.y),
            num(b.w),
            num(b.h),
            num(d.confidence),
            d.crop_ref.clone(),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::io("<output>", e))
}

pub fn write_ground_truth<'a, W: Write>(
    w: W,
    records: impl IntoIterator<Item = &'a GroundTruthRecord>,
) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(GROUND_TRUTH_HEADER).map_err(csv_err)?;
    for r in records {
        let b = &r.bbox;
        out.write_record([
            r.video_id.clone(),
            r.frame.to_string(),
            r.identity.clone(),
            num(b.x),
            num(b.y),
            num(b.w),
            num(b.h),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::io("<output>", e))
}

pub fn write_embeddings<W: Write>(w: W, table: &EmbeddingTable) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(vector_header(&["ref", "dim"], table.dim().unwrap_or(0)))
        .map_err(csv_err)?;
    for (key, e) in table.iter() {
        let row = [key.to_string(), e.dim().to_string()]
            .into_iter()
            .chain(e.values().iter().map(|&v| num(v)));
        out.write_record(row).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::io("<output>", e))
}

pub fn write_scores<W: Write>(w: W, table: &ScoreTable) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(SCORES_HEADER).map_err(csv_err)?;
    for (key, s) in table.iter() {
        out.write_record([key.to_string(), num(s)])
            .map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::io("<output>", e))
}

pub fn write_queries<W: Write>(w: W, queries: &[Query]) -> Result<()> {
    let mut out = csv_writer(w);
    let dim = queries.first().map_or(0, |q| q.embedding.dim());
    out.write_record(vector_header(&["query_id", "identity", "dim"], dim))
        .map_err(csv_err)?;
    for q in queries {
        let row = [
            q.query_id.clone(),
            q.identity.clone(),
            q.embedding.dim().to_string(),
        ]
        .into_iter()
        .chain(q.embedding.values().iter().map(|&v| num(v)));
        out.write_record(row).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::io("<output>", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn det(conf: f64) -> Detection {
        Detection {
            video_id: "v".into(),
            frame: 0,
            bbox: BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
            confidence: conf,
            crop_ref: format!("c{conf}"),
            seq: 0,
        }
    }

    #[test]
    fn empty_detection_file_is_empty_set() {
        let f = tmp("");
        assert!(load_detections(f.path()).unwrap().is_empty());
        let f = tmp("video,frame,x,y,w,h,conf,crop_ref\n");
        assert!(load_detections(f.path()).unwrap().is_empty());
    }

    #[test]
    fn detections_sorted_by_frame_stably() {
        let text = "video,frame,x,y,w,h,conf,crop_ref\n\
                    v,2,0,0,1,1,0.9,a\n\
                    v,1,0,0,1,1,0.9,b\n\
                    v,1,0,0,1,1,0.9,c\n";
        let set = parse_detections(text).unwrap();
        let order: Vec<_> = set
            .video("v")
            .iter()
            .map(|d| (d.frame, d.crop_ref.as_str()))
            .collect();
        // Naive re-read: frame-1 rows in the order they appear in the file.
        let mut naive: Vec<(u32, &str)> = Vec::new();
        for want in [1u32, 2] {
            for line in text.lines().skip(1) {
                let cols: Vec<_> = line.split(',').collect();
                if cols[1].parse::<u32>().unwrap() == want {
                    naive.push((want, cols[7]));
                }
            }
        }
        assert_eq!(order, naive);
        assert_eq!(order, vec![(1, "b"), (1, "c"), (2, "a")]);
        let frames: Vec<_> = set.frames("v").map(|(f, d)| (f, d.len())).collect();
        assert_eq!(frames, vec![(1, 2), (2, 1)]);
    }

    #[test]
    fn confidence_out_of_range_is_validation_error() {
        let text = "video,frame,x,y,w,h,conf,crop_ref\nv,0,0,0,1,1,1.3,a\n";
        assert!(matches!(parse_detections(text), Err(Error::Validation(_))));
    }

    #[test]
    fn negative_frame_is_validation_error() {
        let text = "video,frame,x,y,w,h,conf,crop_ref\nv,-1,0,0,1,1,0.7,a\n";
        assert!(matches!(parse_detections(text), Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "video,frame,x,y,w,h,conf,crop_ref\nv,0,0,0,1,1,0.7,a\nv,1,zero,0,1,1,0.7,b\n";
        match parse_detections(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = "video,frame,x,y,w,h,conf,crop_ref\nv,0,0,0,1\n";
        assert!(matches!(
            parse_detections(text),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn wrong_header_rejected() {
        let text = "video,frame,x,y,w,h,confidence,crop_ref\n";
        assert!(matches!(
            parse_detections(text),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_crop_ref_in_video_rejected() {
        let text = "video,frame,x,y,w,h,conf,crop_ref\nv,0,0,0,1,1,0.7,a\nv,1,0,0,1,1,0.7,a\n";
        assert!(matches!(parse_detections(text), Err(Error::Validation(_))));
    }

    #[test]
    fn filter_keeps_boundary() {
        let dets = vec![det(0.4), det(0.5), det(0.9)];
        let kept: Vec<f64> = filter_detections(&dets, DEFAULT_MIN_CONFIDENCE)
            .iter()
            .map(|d| d.confidence)
            .collect();
        assert_eq!(kept, vec![0.5, 0.9]);
        assert_eq!(filter_detections(&dets, 0.0), dets);
        assert!(filter_detections(&[det(0.1), det(0.2)], 0.5).is_empty());
    }

    #[test]
    fn embeddings_normalized_on_load() {
        let f = tmp("ref,dim,v0,v1\na,2,3,4\n");
        let t = load_embeddings(f.path()).unwrap();
        assert_eq!(t.get("a").unwrap().values(), &[0.6, 0.8]);
    }

    #[test]
    fn zero_embedding_rejected() {
        let f = tmp("ref,dim,v0,v1\na,2,0,0\n");
        assert!(matches!(
            load_embeddings(f.path()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn duplicate_embedding_key_named_in_error() {
        let f = tmp("ref,dim,v0,v1\nc7,2,1,0\nc7,2,0,1\n");
        let err = load_embeddings(f.path()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("c7"), "{err}");
    }

    #[test]
    fn inconsistent_dimension_rejected() {
        let f = tmp("ref,dim,v0,v1\na,2,1,0\nb,3,1,0,0\n");
        assert!(load_embeddings(f.path()).is_err());
    }

    #[test]
    fn duplicate_score_rejected() {
        let f = tmp("crop_ref,score\na,0.1\na,0.2\n");
        let err = load_scores(f.path()).unwrap_err();
        assert!(err.to_string().contains('a'));
    }

    #[test]
    fn duplicate_ground_truth_box_rejected() {
        let f = tmp("video,frame,identity,x,y,w,h\nv,0,p1,0,0,1,1\nv,0,p1,5,5,1,1\n");
        assert!(matches!(
            load_ground_truth(f.path()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn query_with_unknown_identity_rejected() {
        let gt = tmp("video,frame,identity,x,y,w,h\nv,0,p1,0,0,1,1\n");
        let gt = load_ground_truth(gt.path()).unwrap();
        let q = tmp("query_id,identity,dim,v0,v1\nq1,p1,2,1,0\nq2,ghost,2,0,1\n");
        let queries = load_queries(q.path()).unwrap();
        let err = validate_queries(&queries, &gt).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("ghost"));
        assert!(validate_queries(&queries[..1], &gt).is_ok());
    }

    #[test]
    fn presence_respects_chunk_bounds() {
        let f = tmp("video,frame,identity,x,y,w,h\nv,10,p1,0,0,1,1\nv,20,p1,0,0,1,1\n");
        let gt = load_ground_truth(f.path()).unwrap();
        let chunk = |s, e| Chunk {
            video_id: "v".into(),
            start_frame: s,
            end_frame: e,
        };
        assert!(gt.is_present("p1", &chunk(0, 11)));
        assert!(!gt.is_present("p1", &chunk(0, 10)));
        assert!(!gt.is_present("p1", &chunk(11, 20)));
        assert!(gt.is_present("p1", &chunk(20, 21)));
        assert!(!gt.is_present("p2", &chunk(0, 100)));
    }
}
