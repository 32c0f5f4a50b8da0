//! Hough line detection on edge maps and the quasi-diagonal acceptance rule.
//!
//! Coordinates follow image convention: `x` is the reference column, `y` the
//! query row, `y` grows downward. Lines are parameterized as
//! `rho = x cos(theta) + y sin(theta)` with `theta` in `[0, pi)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::edge::EdgeMap;
use crate::grid::Grid;
use crate::par::{self, Exec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoughParams {
    /// Accumulator distance bin size, pixels.
    pub rho_resolution: f64,
    /// Accumulator angle bin size, radians.
    pub theta_resolution: f64,
    pub vote_threshold: u32,
    /// Largest along-line gap bridged inside one segment, pixels.
    pub max_line_gap: f64,
    /// Length slack for trailing query silence, pixels.
    pub margin_px: f64,
    pub angle_min_deg: f64,
    pub angle_max_deg: f64,
}

impl Default for HoughParams {
    fn default() -> Self {
        HoughParams {
            rho_resolution: 1.0,
            theta_resolution: PI / 180.0,
            vote_threshold: 30,
            max_line_gap: 200.0,
            margin_px: 50.0,
            angle_min_deg: 15.0,
            angle_max_deg: 80.0,
        }
    }
}

impl HoughParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.rho_resolution > 0.0 && self.rho_resolution.is_finite()) {
            return bad(format!("rho resolution must be positive, got {}", self.rho_resolution));
        }
        if !(self.theta_resolution > 0.0 && self.theta_resolution <= PI / 2.0) {
            return bad(format!("theta resolution must be in (0, pi/2], got {}", self.theta_resolution));
        }
        if self.vote_threshold < 1 {
            return bad("vote threshold must be at least 1".into());
        }
        if !(self.margin_px >= 0.0 && self.margin_px.is_finite()) {
            return bad(format!("margin must be non-negative, got {}", self.margin_px));
        }
        if self.max_line_gap.is_nan() || self.max_line_gap < 0.0 {
            return bad(format!("max line gap must be non-negative, got {}", self.max_line_gap));
        }
        if !(0.0 <= self.angle_min_deg && self.angle_min_deg < self.angle_max_deg && self.angle_max_deg <= 90.0) {
            return bad(format!(
                "angle bounds must satisfy 0 <= min < max <= 90, got {} / {}",
                self.angle_min_deg, self.angle_max_deg
            ));
        }
        Ok(())
    }
}

/// Vote counts over `(theta, rho)` bins; rows are theta bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulator {
    pub votes: Grid<u32>,
    theta_resolution: f64,
    rho_resolution: f64,
    /// Index of the bin centred on `rho = 0`.
    rho_zero: usize,
    trig: Vec<(f64, f64)>,
}

impl Accumulator {
    fn empty(rows: usize, cols: usize, params: &HoughParams) -> Self {
        let n_theta = ((PI / params.theta_resolution).round() as usize).max(1);
        let diag = ((rows * rows + cols * cols) as f64).sqrt();
        let half = (diag / params.rho_resolution).ceil() as usize;
        let trig = (0..n_theta)
            .map(|k| {
                let t = k as f64 * params.theta_resolution;
                (t.cos(), t.sin())
            })
            .collect();
        Accumulator {
            votes: Grid::filled(n_theta, 2 * half + 1, 0),
            theta_resolution: params.theta_resolution,
            rho_resolution: params.rho_resolution,
            rho_zero: half,
            trig,
        }
    }

    pub fn n_theta(&self) -> usize {
        self.votes.rows()
    }

    pub fn n_rho(&self) -> usize {
        self.votes.cols()
    }

    pub fn theta(&self, bin: usize) -> f64 {
        bin as f64 * self.theta_resolution
    }

    pub fn rho(&self, bin: usize) -> f64 {
        (bin as f64 - self.rho_zero as f64) * self.rho_resolution
    }

    /// Nearest rho bin, or `None` outside the covered range.
    pub fn rho_bin(&self, rho: f64) -> Option<usize> {
        let b = (rho / self.rho_resolution).round() + self.rho_zero as f64;
        (b >= 0.0 && (b as usize) < self.n_rho()).then_some(b as usize)
    }

    fn rho_of(&self, theta_bin: usize, x: usize, y: usize) -> f64 {
        let (c, s) = self.trig[theta_bin];
        x as f64 * c + y as f64 * s
    }

    pub fn get(&self, theta_bin: usize, rho_bin: usize) -> u32 {
        self.votes[(theta_bin, rho_bin)]
    }
}

/// Peak cell of the accumulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub theta_bin: usize,
    pub rho_bin: usize,
    pub theta: f64,
    pub rho: f64,
    pub votes: u32,
}

pub fn hough_accumulate(em: &EdgeMap, params: &HoughParams) -> Result<Accumulator> {
    hough_accumulate_with(em, params, Exec::default())
}

/// Every edge pixel votes once per theta bin. Pixels are split into chunks
/// whose partial histograms are summed, so the result does not depend on
/// the schedule.
pub fn hough_accumulate_with(em: &EdgeMap, params: &HoughParams, exec: Exec) -> Result<Accumulator> {
    params.validate()?;
    let mut acc = Accumulator::empty(em.rows(), em.cols(), params);
    let pixels = em.edge_pixels();
    let n_rho = acc.n_rho();
    let votes = {
        let acc = &acc;
        par::histogram_chunks(exec, &pixels, acc.votes.as_slice().len(), 256, |chunk, hist| {
            for &(x, y) in chunk {
                for k in 0..acc.n_theta() {
                    if let Some(b) = acc.rho_bin(acc.rho_of(k, x, y)) {
                        hist[k * n_rho + b] += 1;
                    }
                }
            }
        })
    };
    acc.votes = Grid::from_vec(acc.n_theta(), n_rho, votes);
    Ok(acc)
}

/// Cells at or above the vote threshold that are not exceeded by any cell
/// of their 3x3 neighbourhood, strongest first; ties by smaller theta bin,
/// then smaller rho bin.
pub fn find_peaks(acc: &Accumulator, vote_threshold: u32) -> Vec<Peak> {
    let (nt, nr) = acc.votes.shape();
    let mut peaks = Vec::new();
    for t in 0..nt {
        for r in 0..nr {
            let v = acc.get(t, r);
            if v < vote_threshold {
                continue;
            }
            let is_max = (t.saturating_sub(1)..=(t + 1).min(nt - 1))
                .all(|tt| (r.saturating_sub(1)..=(r + 1).min(nr - 1)).all(|rr| acc.get(tt, rr) <= v));
            if is_max {
                peaks.push(Peak {
                    theta_bin: t,
                    rho_bin: r,
                    theta: acc.theta(t),
                    rho: acc.rho(r),
                    votes: v,
                });
            }
        }
    }
    peaks.sort_by(|a, b| {
        b.votes
            .cmp(&a.votes)
            .then(a.theta_bin.cmp(&b.theta_bin))
            .then(a.rho_bin.cmp(&b.rho_bin))
    });
    peaks
}

/// A traced line segment with endpoints ordered by `x` (then `y`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSegment {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    /// Votes of the accumulator cell the segment was traced from.
    pub votes: u32,
    /// `atan(|dy| / |dx|)` in degrees, in `[0, 90]`.
    pub theta_deg: f64,
    pub length_px: f64,
}

impl LineSegment {
    pub fn new(a: (usize, usize), b: (usize, usize), votes: u32) -> Self {
        let ((x0, y0), (x1, y1)) = if a <= b { (a, b) } else { (b, a) };
        let dx = x1 as f64 - x0 as f64;
        let dy = (y1 as f64 - y0 as f64).abs();
        LineSegment {
            x0,
            y0,
            x1,
            y1,
            votes,
            theta_deg: dy.atan2(dx).to_degrees(),
            length_px: dx.hypot(dy),
        }
    }

    pub fn dx(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn dy(&self) -> usize {
        self.y1.abs_diff(self.y0)
    }

    pub fn x_min(&self) -> usize {
        self.x0
    }

    pub fn x_max(&self) -> usize {
        self.x1
    }
}

/// Traces segments along each accumulator peak, strongest peak first.
///
/// Unclaimed edge pixels within `rho_resolution / 2 + 0.5` of a peak line
/// are sorted along the line; neighbours closer than `max_line_gap` join one
/// run, and each run of two or more pixels becomes a segment whose pixels
/// are then claimed, so weaker neighbouring peaks cannot re-trace them.
/// Output is sorted by descending length.
pub fn extract_segments(em: &EdgeMap, acc: &Accumulator, params: &HoughParams) -> Vec<LineSegment> {
    let pixels = em.edge_pixels();
    let mut claimed = vec![false; pixels.len()];
    let tolerance = params.rho_resolution / 2.0 + 0.5;
    let mut segments = Vec::new();
    for peak in find_peaks(acc, params.vote_threshold) {
        let (c, s) = acc.trig[peak.theta_bin];
        let mut on_line: Vec<(f64, usize)> = pixels
            .iter()
            .enumerate()
            .filter(|&(i, &(x, y))| !claimed[i] && (x as f64 * c + y as f64 * s - peak.rho).abs() <= tolerance)
            .map(|(i, &(x, y))| (-(x as f64) * s + y as f64 * c, i))
            .collect();
        on_line.sort_by(|a, b| a.0.total_cmp(&b.0).then(pixels[a.1].cmp(&pixels[b.1])));
        let mut start = 0;
        for i in 1..=on_line.len() {
            if i == on_line.len() || on_line[i].0 - on_line[i - 1].0 > params.max_line_gap {
                if i - start >= 2 {
                    let (first, last) = (pixels[on_line[start].1], pixels[on_line[i - 1].1]);
                    segments.push(LineSegment::new(first, last, peak.votes));
                    on_line[start..i].iter().for_each(|&(_, p)| claimed[p] = true);
                }
                start = i;
            }
        }
    }
    segments.sort_by(|a, b| {
        b.length_px
            .total_cmp(&a.length_px)
            .then(b.votes.cmp(&a.votes))
            .then((a.x0, a.y0, a.x1, a.y1).cmp(&(b.x0, b.y0, b.x1, b.y1)))
    });
    segments
}

/// The quasi-diagonal rule: longer than `query_frames - margin_px` and
/// strictly inside the angle window.
pub fn is_goal_line(seg: &LineSegment, query_frames: usize, params: &HoughParams) -> bool {
    seg.length_px > query_frames as f64 - params.margin_px
        && params.angle_min_deg < seg.theta_deg
        && seg.theta_deg < params.angle_max_deg
}

pub fn accept_segments(segments: &[LineSegment], query_frames: usize, params: &HoughParams) -> Vec<LineSegment> {
    segments
        .iter()
        .filter(|s| is_goal_line(s, query_frames, params))
        .copied()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn edge_map(rows: usize, cols: usize, pixels: &[(usize, usize)]) -> EdgeMap {
        let mut edges = Grid::filled(rows, cols, false);
        for &(x, y) in pixels {
            edges[(y, x)] = true;
        }
        EdgeMap {
            edges,
            magnitude: Grid::filled(rows, cols, 0.0),
            direction: Grid::filled(rows, cols, 0.0),
        }
    }

    #[test]
    fn empty_map_has_no_votes() {
        let acc = hough_accumulate(&edge_map(10, 20, &[]), &HoughParams::default()).unwrap();
        assert!(acc.votes.as_slice().iter().all(|&v| v == 0));
        assert_eq!(acc.n_theta(), 180);
    }

    #[test]
    fn main_diagonal_peaks_at_135() {
        let px: Vec<_> = (0..50).map(|i| (i, i)).collect();
        let acc = hough_accumulate(&edge_map(50, 50, &px), &HoughParams::default()).unwrap();
        let (best, &votes) = acc
            .votes
            .as_slice()
            .iter()
            .enumerate()
            .max_by_key(|&(i, v)| (*v, std::cmp::Reverse(i)))
            .unwrap();
        let (t, r) = (best / acc.n_rho(), best % acc.n_rho());
        assert_eq!((t, acc.rho(r), votes), (135, 0.0, 50));
    }

    #[test]
    fn single_pixel_votes_once_per_angle() {
        let acc = hough_accumulate(&edge_map(30, 40, &[(17, 9)]), &HoughParams::default()).unwrap();
        for t in 0..acc.n_theta() {
            let row_sum: u32 = (0..acc.n_rho()).map(|r| acc.get(t, r)).sum();
            assert_eq!(row_sum, 1);
        }
    }

    #[test]
    fn diagonal_traces_to_one_segment() {
        let px: Vec<_> = (0..100).map(|i| (i, i)).collect();
        let em = edge_map(100, 100, &px);
        let p = HoughParams::default();
        let segs = extract_segments(&em, &hough_accumulate(&em, &p).unwrap(), &p);
        assert_eq!(segs.len(), 1);
        let s = segs[0];
        assert_eq!((s.x0, s.y0, s.x1, s.y1), (0, 0, 99, 99));
        assert!((s.length_px - 99.0 * 2f64.sqrt()).abs() < 1e-9);
        assert!((s.theta_deg - 45.0).abs() < 1e-9);
    }

    #[test]
    fn gaps_bridge_or_split() {
        let px: Vec<_> = (0..=40).chain(60..=100).map(|i| (i, i)).collect();
        let em = edge_map(101, 101, &px);
        let p = HoughParams::default();
        let acc = hough_accumulate(&em, &p).unwrap();
        let segs = extract_segments(&em, &acc, &p);
        assert_eq!(segs.len(), 1);
        assert_eq!((segs[0].x0, segs[0].y0, segs[0].x1, segs[0].y1), (0, 0, 100, 100));

        let tight = HoughParams {
            max_line_gap: 10.0,
            ..p
        };
        let segs = extract_segments(&em, &acc, &tight);
        let mut ends: Vec<_> = segs.iter().map(|s| (s.x0, s.x1)).collect();
        ends.sort();
        assert_eq!(ends, vec![(0, 40), (60, 100)]);
    }

    #[test]
    fn acceptance_rule_examples() {
        let p = HoughParams::default();
        let s = LineSegment::new((0, 0), (180, 170), 40);
        assert!((s.length_px - 247.588).abs() < 1e-3);
        assert!((s.theta_deg - 43.363).abs() < 1e-3);
        assert!(is_goal_line(&s, 200, &p));
        assert!(!is_goal_line(&LineSegment::new((0, 50), (300, 50), 40), 200, &p));
        let short = LineSegment::new((0, 0), (100, 95), 40);
        assert!((short.length_px - 137.93).abs() < 1e-2);
        assert!(!is_goal_line(&short, 200, &p));
        // Orientation does not matter.
        let flipped = LineSegment::new((0, 170), (180, 0), 40);
        assert_eq!(flipped.theta_deg, s.theta_deg);
        assert_eq!(accept_segments(&[s, short, flipped], 200, &p).len(), 2);
    }

    #[test]
    fn invalid_params() {
        let p = HoughParams {
            angle_min_deg: 80.0,
            angle_max_deg: 15.0,
            ..HoughParams::default()
        };
        assert!(p.validate().is_err());
        assert!(HoughParams { vote_threshold: 0, ..HoughParams::default() }.validate().is_err());
        assert!(HoughParams { rho_resolution: 0.0, ..HoughParams::default() }.validate().is_err());
    }

    #[test]
    fn schedules_agree() {
        let px: Vec<_> = (0..3000).map(|i| ((i * 7919) % 300, (i * 104729) % 120)).collect();
        let em = edge_map(120, 300, &px);
        let p = HoughParams::default();
        let a = hough_accumulate_with(&em, &p, Exec::Sequential).unwrap();
        let b = hough_accumulate_with(&em, &p, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn length_dominates_sides(x0 in 0usize..500, y0 in 0usize..500, x1 in 0usize..500, y1 in 0usize..500) {
            let s = LineSegment::new((x0, y0), (x1, y1), 1);
            let (dx, dy) = (s.dx() as f64, s.dy() as f64);
            prop_assert!(s.length_px >= dx.max(dy));
            if dx > 0.0 && dy > 0.0 {
                prop_assert!(s.length_px > dx.max(dy));
            }
            prop_assert!((0.0..=90.0).contains(&s.theta_deg));
        }

        #[test]
        fn wider_margin_keeps_segments(
            ends in proptest::collection::vec((0usize..300, 0usize..200, 0usize..300, 0usize..200), 1..30),
            n in 1usize..200, m1 in 0.0f64..100.0, extra in 0.0f64..100.0,
        ) {
            let segs: Vec<_> = ends.iter().map(|&(a, b, c, d)| LineSegment::new((a, b), (c, d), 1)).collect();
            let narrow = HoughParams { margin_px: m1, ..HoughParams::default() };
            let wide = HoughParams { margin_px: m1 + extra, ..HoughParams::default() };
            let a = accept_segments(&segs, n, &narrow);
            let b = accept_segments(&segs, n, &wide);
            for s in &a {
                prop_assert!(b.contains(s));
            }
        }

        #[test]
        fn full_diagonal_is_accepted(n in 2usize..2000) {
            let s = LineSegment::new((0, 0), (n - 1, n - 1), 1);
            prop_assert!(is_goal_line(&s, n, &HoughParams::default()));
        }
    }
}
