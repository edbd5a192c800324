//! Finding rate, true validation rate and the threshold-free summaries
//! derived from them.
//!
//! For one threshold `beta`:
//!
//! * **FR** = chunks where the query is annotated, an alert was raised and a
//!   presented candidate matches the query, over chunks where the query is
//!   annotated.
//! * **TVR** = raised alerts with a matching presented candidate, over all
//!   raised alerts.
//!
//! Either ratio is undefined when its denominator is zero; such points are
//! kept in the curve but skipped by every summary.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::domain::{iou, Chunk, Detection, Query};
use crate::error::{Error, Result};
use crate::ingest::GroundTruth;
use crate::reid::{decide_alert, AlertOutcome, RankedCandidate};

/// Minimum overlap between a candidate box and the query's annotated box.
pub const MATCH_IOU: f64 = 0.5;

/// Evenly spaced thresholds `0, 1/steps, ..., 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BetaGrid {
    pub steps: u32,
}

impl Default for BetaGrid {
    fn default() -> Self {
        BetaGrid { steps: 50 }
    }
}

impl BetaGrid {
    /// Grid with spacing `step`; `1/step` must be a whole number.
    pub fn from_step(step: f64) -> Result<Self> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(Error::Config(format!("beta step {step} outside (0, 1]")));
        }
        let steps = (1.0 / step).round();
        if (steps * step - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "beta step {step} does not divide [0, 1] evenly"
            )));
        }
        Ok(BetaGrid {
            steps: steps as u32,
        })
    }

    pub fn step(&self) -> f64 {
        1.0 / self.steps as f64
    }

    pub fn betas(&self) -> Vec<f64> {
        (0..=self.steps)
            .map(|i| i as f64 / self.steps as f64)
            .collect()
    }
}

/// True when the annotated box of `identity` on the candidate's frame
/// overlaps the candidate by at least [`MATCH_IOU`].
pub fn candidate_matches_query(
    candidate: &Detection,
    ground_truth: &GroundTruth,
    identity: &str,
) -> bool {
    ground_truth
        .box_of(&candidate.video_id, candidate.frame, identity)
        .is_some_and(|gt| iou(&candidate.bbox, gt) >= MATCH_IOU)
}

/// Query id → identity lookup.
pub fn identity_map(queries: &[Query]) -> HashMap<&str, &str> {
    queries
        .iter()
        .map(|q| (q.query_id.as_str(), q.identity.as_str()))
        .collect()
}

fn identity_of<'a>(identities: &HashMap<&str, &'a str>, query_id: &str) -> Result<&'a str> {
    identities
        .get(query_id)
        .copied()
        .ok_or_else(|| Error::Evaluation(format!("outcome for unknown query `{query_id}`")))
}

fn presented_match(outcome: &AlertOutcome<'_>, ground_truth: &GroundTruth, identity: &str) -> bool {
    outcome
        .candidates
        .iter()
        .any(|c| candidate_matches_query(&c.image.detection, ground_truth, identity))
}

/// Ratio of query-present chunks where the query was alerted and presented.
/// `None` when the query is present in no chunk.
pub fn compute_fr(
    outcomes: &[AlertOutcome<'_>],
    ground_truth: &GroundTruth,
    identities: &HashMap<&str, &str>,
) -> Result<Option<f64>> {
    let (mut found, mut present) = (0usize, 0usize);
    for o in outcomes {
        let identity = identity_of(identities, o.query_id)?;
        if !ground_truth.is_present(identity, o.chunk) {
            continue;
        }
        present += 1;
        if o.raised && presented_match(o, ground_truth, identity) {
            found += 1;
        }
    }
    Ok((present > 0).then(|| found as f64 / present as f64))
}

/// Ratio of raised alerts whose presented candidates include the query.
/// `None` when no alert was raised.
pub fn compute_tvr(
    outcomes: &[AlertOutcome<'_>],
    ground_truth: &GroundTruth,
    identities: &HashMap<&str, &str>,
) -> Result<Option<f64>> {
    let (mut valid, mut alerts) = (0usize, 0usize);
    for o in outcomes.iter().filter(|o| o.raised) {
        alerts += 1;
        if presented_match(o, ground_truth, identity_of(identities, o.query_id)?) {
            valid += 1;
        }
    }
    Ok((alerts > 0).then(|| valid as f64 / alerts as f64))
}

/// Harmonic mean, zero when both inputs are zero.
pub fn f1(fr: f64, tvr: f64) -> f64 {
    if fr + tvr == 0.0 {
        0.0
    } else {
        2.0 * fr * tvr / (fr + tvr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub beta: f64,
    pub fr: Option<f64>,
    pub tvr: Option<f64>,
    /// Raised alerts at this threshold.
    pub alerts: usize,
}

impl EvalPoint {
    /// Both rates, when both are defined.
    pub fn defined(&self) -> Option<(f64, f64)> {
        Some((self.fr?, self.tvr?))
    }

    pub fn f1(&self) -> Option<f64> {
        self.defined().map(|(fr, tvr)| f1(fr, tvr))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCurve {
    pub points: Vec<EvalPoint>,
}

/// Best F1 over the defined points and the smallest beta reaching it.
pub fn f1_star(curve: &EvalCurve) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for p in &curve.points {
        if let Some(v) = p.f1() {
            if best.is_none_or(|(b, _)| v > b) {
                best = Some((v, p.beta));
            }
        }
    }
    best.ok_or_else(|| Error::Evaluation("no beta gives both FR and TVR".into()))
}

/// Area under the TVR-versus-FR curve traced by the defined points.
///
/// Points are sorted by FR, TVRs sharing an FR are averaged, the first TVR
/// is extended back to FR = 0, and the result is integrated with the
/// trapezoid rule. `None` when no point is defined.
pub fn map_area(curve: &EvalCurve) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = curve.points.iter().filter_map(EvalPoint::defined).collect();
    if pts.is_empty() {
        return None;
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for group in pts.chunk_by(|a, b| a.0 == b.0) {
        let tvr = group.iter().map(|p| p.1).sum::<f64>() / group.len() as f64;
        merged.push((group[0].0, tvr));
    }
    let mut area = merged[0].0 * merged[0].1;
    for w in merged.windows(2) {
        area += (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0;
    }
    Some(area.clamp(0.0, 1.0))
}

/// A (query, chunk) pair with its ranked gallery, truncated or not.
#[derive(Debug, Clone, Copy)]
pub struct PairView<'a> {
    pub query_id: &'a str,
    pub chunk: &'a Chunk,
    pub ranked: &'a [RankedCandidate],
}

/// Alert outcomes of every pair at one threshold.
pub fn outcomes_at<'a>(
    pairs: &[PairView<'a>],
    beta: f64,
    eta: usize,
) -> Result<Vec<AlertOutcome<'a>>> {
    pairs
        .iter()
        .map(|p| decide_alert(p.query_id, p.chunk, p.ranked, beta, eta))
        .collect()
}

/// FR/TVR at every grid threshold, pooled over all pairs given.
pub fn evaluate_curve(
    pairs: &[PairView<'_>],
    ground_truth: &GroundTruth,
    queries: &[Query],
    grid: BetaGrid,
    eta: usize,
) -> Result<EvalCurve> {
    let identities = identity_map(queries);
    let points = grid
        .betas()
        .into_iter()
        .map(|beta| {
            let outcomes = outcomes_at(pairs, beta, eta)?;
            Ok(EvalPoint {
                beta,
                fr: compute_fr(&outcomes, ground_truth, &identities)?,
                tvr: compute_tvr(&outcomes, ground_truth, &identities)?,
                alerts: outcomes.iter().filter(|o| o.raised).count(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalCurve { points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub f1_star: f64,
    pub beta_star: f64,
    pub map: f64,
    pub fr_at_star: f64,
    pub tvr_at_star: f64,
}

/// Summary of a curve; `None` when no point is defined.
pub fn summarize_curve(curve: &EvalCurve) -> Option<CurveSummary> {
    let (f1_star, beta_star) = f1_star(curve).ok()?;
    let at = curve.points.iter().find(|p| p.beta == beta_star)?;
    let (fr_at_star, tvr_at_star) = at.defined()?;
    Some(CurveSummary {
        f1_star,
        beta_star,
        map: map_area(curve)?,
        fr_at_star,
        tvr_at_star,
    })
}

/// Metrics computed per query first, then averaged across queries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerQuerySummary {
    /// Max over beta of the query-averaged F1.
    pub f1_star: Option<f64>,
    pub beta_star: Option<f64>,
    /// Mean of per-query curve areas.
    pub map: Option<f64>,
    /// Queries contributing to `map`.
    pub queries_with_map: usize,
}

pub fn per_query_summary(
    pairs: &[PairView<'_>],
    ground_truth: &GroundTruth,
    queries: &[Query],
    grid: BetaGrid,
    eta: usize,
) -> Result<PerQuerySummary> {
    let mut by_query: BTreeMap<&str, Vec<PairView<'_>>> = BTreeMap::new();
    for p in pairs {
        by_query.entry(p.query_id).or_default().push(*p);
    }
    let curves = by_query
        .values()
        .map(|ps| evaluate_curve(ps, ground_truth, queries, grid, eta))
        .collect::<Result<Vec<_>>>()?;

    let maps: Vec<f64> = curves.iter().filter_map(map_area).collect();
    let map = (!maps.is_empty()).then(|| maps.iter().sum::<f64>() / maps.len() as f64);

    let mut best: Option<(f64, f64)> = None;
    for (i, beta) in grid.betas().into_iter().enumerate() {
        let f1s: Vec<f64> = curves.iter().filter_map(|c| c.points[i].f1()).collect();
        if f1s.is_empty() {
            continue;
        }
        let mean = f1s.iter().sum::<f64>() / f1s.len() as f64;
        if best.is_none_or(|(b, _)| mean > b) {
            best = Some((mean, beta));
        }
    }
    Ok(PerQuerySummary {
        f1_star: best.map(|b| b.0),
        beta_star: best.map(|b| b.1),
        map,
        queries_with_map: maps.len(),
    })
}

/// Gallery sizes and query-gallery comparison counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accounting {
    pub gallery_sizes: Vec<usize>,
    /// Comparisons one query costs across all chunks.
    pub similarity_ops_per_query: u64,
    /// Comparisons for the whole query set.
    pub similarity_ops: u64,
}

pub fn accounting(gallery_sizes: Vec<usize>, n_queries: usize) -> Accounting {
    let per_query: u64 = gallery_sizes.iter().map(|&s| s as u64).sum();
    Accounting {
        gallery_sizes,
        similarity_ops_per_query: per_query,
        similarity_ops: per_query * n_queries as u64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Pooled over every (query, chunk) pair.
    pub pooled: Option<CurveSummary>,
    pub per_query: PerQuerySummary,
    pub gallery_sizes: Vec<usize>,
    pub similarity_ops: u64,
    pub similarity_ops_per_query: u64,
}

pub fn write_curve_csv<W: Write>(mut w: W, curve: &EvalCurve) -> std::io::Result<()> {
    let fmt = |v: Option<f64>| v.map_or_else(|| "NaN".to_string(), |v| format!("{v}"));
    writeln!(w, "beta,fr,tvr,f1,alerts")?;
    for p in &curve.points {
        writeln!(
            w,
            "{},{},{},{},{}",
            p.beta,
            fmt(p.fr),
            fmt(p.tvr),
            fmt(p.f1()),
            p.alerts
        )?;
    }
    Ok(())
}
