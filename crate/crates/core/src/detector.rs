//! End-to-end detection: distance image, Canny edges, Hough segments,
//! acceptance, duplicate merging and time localization. Also hosts the
//! segmental DTW baseline used for comparison.

use std::collections::HashSet;
use std::time::Instant;

use serde::Serialize;

use crate::distmat::{distance_matrix_with, render_image, DistanceImage, DistanceMatrix, Metric};
use crate::edge::{canny_with, CannyParams, EdgeMap};
use crate::features::FeatureMatrix;
use crate::hough::{accept_segments, extract_segments, hough_accumulate_with, HoughParams, LineSegment};
use crate::par::{self, Exec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectConfig {
    pub metric: Metric,
    pub canny: CannyParams,
    pub hough: HoughParams,
    /// DTW baseline decision threshold on `1 / (1 + cost)`.
    pub dtw_threshold: f64,
    /// DTW window length as a multiple of the query length.
    pub dtw_window_factor: usize,
    /// DTW window hop is `max(1, n / dtw_step_divisor)`.
    pub dtw_step_divisor: usize,
    pub exec: Exec,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            metric: Metric::Canberra,
            canny: CannyParams::default(),
            hough: HoughParams::default(),
            dtw_threshold: 0.5,
            dtw_window_factor: 2,
            dtw_step_divisor: 4,
            exec: Exec::default(),
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        self.canny.validate()?;
        self.hough.validate()?;
        if !(self.dtw_threshold.is_finite() && (0.0..=1.0).contains(&self.dtw_threshold)) {
            return Err(Error::InvalidParams(format!(
                "dtw threshold must be in [0, 1], got {}",
                self.dtw_threshold
            )));
        }
        if self.dtw_window_factor == 0 || self.dtw_step_divisor == 0 {
            return Err(Error::InvalidParams("dtw window factor and step divisor must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Occurrence {
    pub ref_start_s: f64,
    pub ref_end_s: f64,
    /// Fraction of query rows spanned by the segment.
    pub query_coverage: f64,
    /// `min(1, length / (n * sqrt 2))`.
    pub score: f64,
    pub segment: LineSegment,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StageTimings {
    pub distance_ms: f64,
    pub render_ms: f64,
    pub edges_ms: f64,
    pub hough_ms: f64,
    pub total_ms: f64,
}

/// Best-window summary reported by [`dtw_baseline`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DtwSummary {
    pub cost: f64,
    pub score: f64,
    pub window_start: usize,
    pub match_start: usize,
    pub match_end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionResult {
    pub detected: bool,
    pub count: usize,
    pub score: f64,
    pub metric: Metric,
    pub occurrences: Vec<Occurrence>,
    pub timings: StageTimings,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dtw: Option<DtwSummary>,
}

impl DetectionResult {
    fn from_occurrences(occurrences: Vec<Occurrence>, metric: Metric, timings: StageTimings) -> Self {
        let score = occurrences.iter().map(|o| o.score).fold(0.0, f64::max);
        DetectionResult {
            detected: !occurrences.is_empty(),
            count: occurrences.len(),
            score,
            metric,
            occurrences,
            timings,
            dtw: None,
        }
    }

    /// Equality ignoring wall-clock timings.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let strip = |r: &Self| DetectionResult {
            timings: StageTimings::default(),
            ..r.clone()
        };
        strip(self) == strip(other)
    }
}

fn check_pair(query: &FeatureMatrix, reference: &FeatureMatrix) -> Result<()> {
    if query.n_frames() == 0 || reference.n_frames() == 0 {
        return Err(Error::EmptyInput("feature matrix"));
    }
    if query.dim() != reference.dim() {
        return Err(Error::DimensionMismatch {
            query: query.dim(),
            reference: reference.dim(),
        });
    }
    if query.n_frames() > reference.n_frames() {
        return Err(Error::QueryLongerThanReference {
            query: query.n_frames(),
            reference: reference.n_frames(),
        });
    }
    Ok(())
}

/// Intermediate products of one detection, for debugging and image dumps.
#[derive(Debug, Clone)]
pub struct DetectionTrace {
    pub distances: DistanceMatrix,
    pub image: DistanceImage,
    pub edges: EdgeMap,
    pub segments: Vec<LineSegment>,
    pub accepted: Vec<LineSegment>,
    pub merged: Vec<LineSegment>,
    pub result: DetectionResult,
}

pub fn detect(query: &FeatureMatrix, reference: &FeatureMatrix, config: &DetectConfig) -> Result<DetectionResult> {
    detect_traced(query, reference, config).map(|t| t.result)
}

pub fn detect_traced(query: &FeatureMatrix, reference: &FeatureMatrix, config: &DetectConfig) -> Result<DetectionTrace> {
    check_pair(query, reference)?;
    config.validate()?;
    let exec = config.exec;
    let n = query.n_frames();
    let t0 = Instant::now();
    let mut timings = StageTimings::default();
    let lap = |start: &mut Instant| {
        let ms = start.elapsed().as_secs_f64() * 1e3;
        *start = Instant::now();
        ms
    };
    let mut clock = Instant::now();

    let distances = distance_matrix_with(query, reference, config.metric, exec)?;
    timings.distance_ms = lap(&mut clock);
    let image = render_image(&distances);
    timings.render_ms = lap(&mut clock);
    let edges = canny_with(&image, &config.canny, exec)?;
    timings.edges_ms = lap(&mut clock);
    let acc = hough_accumulate_with(&edges, &config.hough, exec)?;
    let segments = extract_segments(&edges, &acc, &config.hough);
    let accepted = accept_segments(&segments, n, &config.hough);
    let merged = merge_occurrences(&accepted);
    timings.hough_ms = lap(&mut clock);

    let diag = n as f64 * std::f64::consts::SQRT_2;
    let occurrences = merged
        .iter()
        .map(|seg| Occurrence {
            ref_start_s: reference.frame_offset_s + seg.x_min() as f64 * reference.frame_hop_s,
            ref_end_s: reference.frame_offset_s + (seg.x_max() + 1) as f64 * reference.frame_hop_s,
            query_coverage: (seg.dy() + 1) as f64 / n as f64,
            score: (seg.length_px / diag).min(1.0),
            segment: *seg,
        })
        .collect();
    timings.total_ms = t0.elapsed().as_secs_f64() * 1e3;
    let result = DetectionResult::from_occurrences(occurrences, config.metric, timings);
    Ok(DetectionTrace {
        distances,
        image,
        edges,
        segments,
        accepted,
        merged,
        result,
    })
}

/// Groups segments whose column intervals overlap by more than half of the
/// shorter interval (transitively) and keeps the longest of each group;
/// ties go to more votes, then smaller `x_min`. Output is sorted by `x_min`.
pub fn merge_occurrences(segments: &[LineSegment]) -> Vec<LineSegment> {
    let n = segments.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if overlaps_majority(&segments[i], &segments[j]) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut best: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let root = find(&mut parent, i);
        let better = match best[root] {
            None => true,
            Some(cur) => {
                let (s, c) = (&segments[i], &segments[cur]);
                s.length_px
                    .total_cmp(&c.length_px)
                    .then(s.votes.cmp(&c.votes))
                    .then(c.x0.cmp(&s.x0))
                    .is_gt()
            }
        };
        if better {
            best[root] = Some(i);
        }
    }
    let mut out: Vec<LineSegment> = best.into_iter().flatten().map(|i| segments[i]).collect();
    out.sort_by_key(|s| (s.x0, s.x1, s.y0, s.y1));
    out
}

fn overlaps_majority(a: &LineSegment, b: &LineSegment) -> bool {
    let lo = a.x_min().max(b.x_min());
    let hi = a.x_max().min(b.x_max());
    if hi < lo {
        return false;
    }
    let overlap = hi - lo + 1;
    let shorter = (a.x_max() - a.x_min() + 1).min(b.x_max() - b.x_min() + 1);
    2 * overlap > shorter
}

#[derive(Debug)]
pub struct ScanItem {
    pub ref_id: String,
    pub outcome: Result<DetectionResult>,
}

impl ScanItem {
    pub fn score(&self) -> f64 {
        self.outcome.as_ref().map_or(f64::NEG_INFINITY, |r| r.score)
    }
}

#[derive(Debug)]
pub struct ScanReport {
    /// Sorted by descending score, then id; failed items last.
    pub items: Vec<ScanItem>,
    pub total_ms: f64,
}

/// Runs [`detect`] against every reference. A failing reference is reported
/// in place and does not stop the scan.
pub fn scan(query: &FeatureMatrix, refs: &[(String, FeatureMatrix)], config: &DetectConfig) -> Result<ScanReport> {
    let mut seen = HashSet::new();
    for (id, _) in refs {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    let t0 = Instant::now();
    let mut items: Vec<ScanItem> = par::map_slice(config.exec, refs, |(id, fm)| ScanItem {
        ref_id: id.clone(),
        outcome: detect(query, fm, config),
    });
    items.sort_by(|a, b| b.score().total_cmp(&a.score()).then_with(|| a.ref_id.cmp(&b.ref_id)));
    Ok(ScanReport {
        items,
        total_ms: t0.elapsed().as_secs_f64() * 1e3,
    })
}

/// Segmental DTW baseline.
///
/// The full query is aligned against reference windows of length
/// `dtw_window_factor * n` starting every `step = max(1, n /
/// dtw_step_divisor)` frames. Within a window the alignment may begin in any
/// of the first `step` columns and end anywhere; it uses steps (1,0), (0,1),
/// (1,1) over Euclidean frame distances and is scored by its path-mean cost.
/// The best window gives at most one occurrence.
pub fn dtw_baseline(query: &FeatureMatrix, reference: &FeatureMatrix, config: &DetectConfig) -> Result<DetectionResult> {
    check_pair(query, reference)?;
    config.validate()?;
    let t0 = Instant::now();
    let dm = distance_matrix_with(query, reference, Metric::Euclidean, config.exec)?;
    let distance_ms = t0.elapsed().as_secs_f64() * 1e3;
    let (n, m) = (dm.n(), dm.m());
    let step = (n / config.dtw_step_divisor).max(1);
    let width = config.dtw_window_factor * n;
    let starts: Vec<usize> = (0..m).step_by(step).collect();
    let per_window = par::map_slice(config.exec, &starts, |&s| (s, window_dtw(&dm, s, (s + width).min(m), step)));
    let (window_start, best) = per_window
        .into_iter()
        .min_by(|a, b| a.1.cost.total_cmp(&b.1.cost).then(a.0.cmp(&b.0)))
        .expect("at least one window");
    let cost = best.cost;
    let score = 1.0 / (1.0 + cost);
    let occurrences = if score > config.dtw_threshold {
        vec![Occurrence {
            ref_start_s: reference.frame_offset_s + best.start as f64 * reference.frame_hop_s,
            ref_end_s: reference.frame_offset_s + (best.end + 1) as f64 * reference.frame_hop_s,
            query_coverage: 1.0,
            score,
            segment: LineSegment::new((best.start, 0), (best.end, n - 1), 0),
        }]
    } else {
        Vec::new()
    };
    let total_ms = t0.elapsed().as_secs_f64() * 1e3;
    let timings = StageTimings {
        distance_ms,
        total_ms,
        ..StageTimings::default()
    };
    let mut result = DetectionResult::from_occurrences(occurrences, Metric::Euclidean, timings);
    result.dtw = Some(DtwSummary {
        cost,
        score,
        window_start,
        match_start: best.start,
        match_end: best.end,
    });
    Ok(result)
}

#[derive(Debug, Clone, Copy)]
struct Alignment {
    cost: f64,
    start: usize,
    end: usize,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    total: f64,
    len: usize,
    start: usize,
}

/// Minimum path-mean alignment of all query rows against columns
/// `lo..hi`, entering row 0 at any of the first `entry` columns and leaving
/// the last row anywhere. Column indices in the result are absolute.
fn window_dtw(dm: &DistanceMatrix, lo: usize, hi: usize, entry: usize) -> Alignment {
    let w = hi - lo;
    let pick = |a: Cell, b: Cell| if b.total < a.total || (b.total == a.total && b.len < a.len) { b } else { a };
    let fresh = |j: usize| Cell {
        total: 0.0,
        len: 0,
        start: lo + j,
    };
    let mut prev: Vec<Cell> = Vec::with_capacity(w);
    let mut cur: Vec<Cell> = Vec::with_capacity(w);
    for i in 0..dm.n() {
        let row = dm.values.row(i);
        cur.clear();
        for j in 0..w {
            let from = match (i, j) {
                (0, 0) => fresh(0),
                (0, _) if j < entry => pick(fresh(j), cur[j - 1]),
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => pick(pick(prev[j - 1], prev[j]), cur[j - 1]),
            };
            cur.push(Cell {
                total: from.total + row[lo + j],
                len: from.len + 1,
                start: from.start,
            });
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev.iter()
        .enumerate()
        .map(|(j, c)| Alignment {
            cost: c.total / c.len as f64,
            start: c.start,
            end: lo + j,
        })
        .min_by(|a, b| a.cost.total_cmp(&b.cost).then(a.end.cmp(&b.end)))
        .expect("non-empty window")
}
