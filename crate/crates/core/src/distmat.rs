//! Query-vs-reference frame distance matrices and their grayscale rendering.
//!
//! Rows index query frames, columns index reference frames. All metrics are
//! distances (0 = identical), so a query occurrence renders as a dark line.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::features::FeatureMatrix;
use crate::grid::Grid;
use crate::par::{self, Exec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Canberra,
    Cosine,
    Euclidean,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Canberra => "canberra",
            Metric::Cosine => "cosine",
            Metric::Euclidean => "euclidean",
        }
    }

    pub fn eval(self, a: &[f32], b: &[f32]) -> f64 {
        match self {
            Metric::Canberra => canberra(a, b),
            Metric::Cosine => cosine(a, b),
            Metric::Euclidean => euclidean(a, b),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canberra" => Ok(Metric::Canberra),
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(Error::InvalidParams(format!("unknown metric {other:?}"))),
        }
    }
}

/// Sum of `|a-b| / (|a|+|b|)`; a summand whose denominator is zero is 0.
pub fn canberra(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let (x, y) = (x as f64, y as f64);
            let den = x.abs() + y.abs();
            if den == 0.0 {
                0.0
            } else {
                (x - y).abs() / den
            }
        })
        .sum()
}

/// `1 - cos(a, b)` clamped to `[0, 2]`; 1 if either vector is all zero.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 2.0)
}

pub fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub values: Grid<f64>,
    pub metric: Metric,
}

impl DistanceMatrix {
    /// Query frame count.
    pub fn n(&self) -> usize {
        self.values.rows()
    }

    /// Reference frame count.
    pub fn m(&self) -> usize {
        self.values.cols()
    }
}

pub fn distance_matrix(query: &FeatureMatrix, reference: &FeatureMatrix, metric: Metric) -> Result<DistanceMatrix> {
    distance_matrix_with(query, reference, metric, Exec::default())
}

/// [`distance_matrix`] with an explicit schedule. Rows are independent, so
/// every schedule gives identical values.
pub fn distance_matrix_with(
    query: &FeatureMatrix,
    reference: &FeatureMatrix,
    metric: Metric,
    exec: Exec,
) -> Result<DistanceMatrix> {
    if query.dim() != reference.dim() {
        return Err(Error::DimensionMismatch {
            query: query.dim(),
            reference: reference.dim(),
        });
    }
    let (n, m) = (query.n_frames(), reference.n_frames());
    let mut values = vec![0.0; n * m];
    par::for_each_row(exec, &mut values, m, |i, row| {
        let q = query.frame(i);
        for (j, v) in row.iter_mut().enumerate() {
            *v = metric.eval(q, reference.frame(j));
        }
    });
    Ok(DistanceMatrix {
        values: Grid::from_vec(n, m, values),
        metric,
    })
}

/// 8-bit distance image: rows are query frames, columns reference frames.
pub type DistanceImage = Grid<u8>;

/// Min-max normalizes to `0..=255` with round-half-up; a constant matrix
/// renders all black.
pub fn render_image(dm: &DistanceMatrix) -> DistanceImage {
    let vals = dm.values.as_slice();
    let (lo, hi) = vals
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi <= lo {
        return Grid::filled(dm.n(), dm.m(), 0);
    }
    let span = hi - lo;
    dm.values
        .map(|&v| (255.0 * (v - lo) / span + 0.5).floor().clamp(0.0, 255.0) as u8)
}

/// Writes a binary `P5` PGM with maxval 255.
pub fn write_pgm(img: &DistanceImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    f.write_all(&encode_pgm(img)).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

pub fn encode_pgm(img: &DistanceImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.cols(), img.rows()).into_bytes();
    out.extend_from_slice(img.as_slice());
    out
}

/// Reads back a binary PGM as written by [`write_pgm`].
pub fn read_pgm(path: impl AsRef<Path>) -> Result<DistanceImage> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(f);
    let bad = |why: &str| Error::InvalidParams(format!("{}: {why}", path.display()));
    let mut header = Vec::new();
    while header.len() < 4 {
        let mut line = String::new();
        if r.read_line(&mut line).map_err(|e| Error::io(path, e))? == 0 {
            return Err(bad("truncated header"));
        }
        let line = line.split('#').next().unwrap_or("");
        header.extend(line.split_whitespace().map(str::to_owned));
    }
    if header[0] != "P5" || header[3] != "255" {
        return Err(bad("not an 8-bit P5 image"));
    }
    let cols: usize = header[1].parse().map_err(|_| bad("width"))?;
    let rows: usize = header[2].parse().map_err(|_| bad("height"))?;
    let mut pixels = vec![0u8; rows * cols];
    r.read_exact(&mut pixels).map_err(|e| Error::io(path, e))?;
    Ok(Grid::from_vec(rows, cols, pixels))
}
