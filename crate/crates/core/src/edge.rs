//! Canny edge detection over distance images.
//!
//! Stages: 5x5 Gaussian smoothing, 3x3 Sobel gradients, non-maximum
//! suppression along the quantized gradient direction, then hysteresis with
//! 8-connectivity. Borders are edge-replicated for both convolutions.

use serde::{Deserialize, Serialize};

use crate::grid::Grid;
use crate::par::{self, Exec};
use crate::{Error, Result};

pub const GAUSSIAN_KERNEL: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CannyParams {
    pub t_lower: f64,
    pub t_upper: f64,
    pub gaussian_sigma: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        CannyParams {
            t_lower: 80.0,
            t_upper: 120.0,
            gaussian_sigma: 1.4,
        }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_lower > 0.0 && self.t_lower < self.t_upper && self.t_upper.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "canny thresholds must satisfy 0 < lower < upper, got {} / {}",
                self.t_lower, self.t_upper
            )));
        }
        if !(self.gaussian_sigma > 0.0 && self.gaussian_sigma.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "gaussian sigma must be positive, got {}",
                self.gaussian_sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    pub edges: Grid<bool>,
    /// Sobel gradient magnitude of the smoothed image.
    pub magnitude: Grid<f64>,
    /// Gradient angle `atan2(Sy, Sx)` in radians, y pointing down.
    pub direction: Grid<f64>,
}

impl EdgeMap {
    pub fn rows(&self) -> usize {
        self.edges.rows()
    }

    pub fn cols(&self) -> usize {
        self.edges.cols()
    }

    /// Edge pixel coordinates as `(x, y)` = (column, row), row-major order.
    pub fn edge_pixels(&self) -> Vec<(usize, usize)> {
        let cols = self.cols();
        self.edges
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, &e)| e)
            .map(|(i, _)| (i % cols, i / cols))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.edges.as_slice().iter().filter(|&&e| e).count()
    }

    /// 0/255 rendering for debugging.
    pub fn to_image(&self) -> Grid<u8> {
        self.edges.map(|&e| if e { 255 } else { 0 })
    }
}

pub fn canny(img: &Grid<u8>, params: &CannyParams) -> Result<EdgeMap> {
    canny_with(img, params, Exec::default())
}

pub fn canny_with(img: &Grid<u8>, params: &CannyParams, exec: Exec) -> Result<EdgeMap> {
    canny_values(&img.map(|&p| p as f64), params, exec)
}

/// Canny over real-valued pixels, for inputs deeper than 8 bits.
pub fn canny_values(img: &Grid<f64>, params: &CannyParams, exec: Exec) -> Result<EdgeMap> {
    params.validate()?;
    let (rows, cols) = img.shape();
    if rows < GAUSSIAN_KERNEL || cols < GAUSSIAN_KERNEL {
        return Err(Error::ImageTooSmall {
            rows,
            cols,
            kernel: GAUSSIAN_KERNEL,
        });
    }
    let smooth = gaussian_blur(img, params.gaussian_sigma, exec);
    let (magnitude, direction) = sobel(&smooth, exec);
    let kept = non_max_suppression(&magnitude, &direction, exec);
    let edges = hysteresis(&magnitude, &kept, params.t_lower, params.t_upper);
    Ok(EdgeMap {
        edges,
        magnitude,
        direction,
    })
}

fn gaussian_kernel(sigma: f64) -> [f64; GAUSSIAN_KERNEL] {
    let half = (GAUSSIAN_KERNEL / 2) as f64;
    let mut k = [0.0; GAUSSIAN_KERNEL];
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - half;
        *v = (-(x * x) / (2.0 * sigma * sigma)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

fn clamp_idx(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Separable 5x5 Gaussian with replicated borders.
fn gaussian_blur(img: &Grid<f64>, sigma: f64, exec: Exec) -> Grid<f64> {
    let (rows, cols) = img.shape();
    let k = gaussian_kernel(sigma);
    let half = (GAUSSIAN_KERNEL / 2) as isize;

    let mut horiz = vec![0.0; rows * cols];
    par::for_each_row(exec, &mut horiz, cols, |r, out| {
        let src = img.row(r);
        for (c, o) in out.iter_mut().enumerate() {
            *o = k
                .iter()
                .enumerate()
                .map(|(t, w)| w * src[clamp_idx(c as isize + t as isize - half, cols)])
                .sum();
        }
    });
    let horiz = Grid::from_vec(rows, cols, horiz);

    let mut out = vec![0.0; rows * cols];
    par::for_each_row(exec, &mut out, cols, |r, dst| {
        for (c, o) in dst.iter_mut().enumerate() {
            *o = k
                .iter()
                .enumerate()
                .map(|(t, w)| w * horiz[(clamp_idx(r as isize + t as isize - half, rows), c)])
                .sum();
        }
    });
    Grid::from_vec(rows, cols, out)
}

fn sobel(img: &Grid<f64>, exec: Exec) -> (Grid<f64>, Grid<f64>) {
    let (rows, cols) = img.shape();
    let at = |r: isize, c: isize| img[(clamp_idx(r, rows), clamp_idx(c, cols))];
    let mut packed = vec![(0.0, 0.0); rows * cols];
    par::for_each_row(exec, &mut packed, cols, |r, out| {
        let r = r as isize;
        for (c, o) in out.iter_mut().enumerate() {
            let c = c as isize;
            let sx = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1));
            let sy = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1));
            *o = ((sx * sx + sy * sy).sqrt(), sy.atan2(sx));
        }
    });
    let magnitude = Grid::from_vec(rows, cols, packed.iter().map(|p| p.0).collect());
    let direction = Grid::from_vec(rows, cols, packed.iter().map(|p| p.1).collect());
    (magnitude, direction)
}

/// Column/row step towards the neighbour along the quantized gradient
/// direction (0, 45, 90 or 135 degrees, y down).
fn quantized_step(angle: f64) -> (isize, isize) {
    let deg = angle.to_degrees().rem_euclid(180.0);
    if !(22.5..157.5).contains(&deg) {
        (1, 0)
    } else if deg < 67.5 {
        (1, 1)
    } else if deg < 112.5 {
        (0, 1)
    } else {
        (-1, 1)
    }
}

fn non_max_suppression(mag: &Grid<f64>, dir: &Grid<f64>, exec: Exec) -> Grid<bool> {
    let (rows, cols) = mag.shape();
    let at = |r: isize, c: isize| {
        if r < 0 || c < 0 || r >= rows as isize || c >= cols as isize {
            0.0
        } else {
            mag[(r as usize, c as usize)]
        }
    };
    let mut kept = vec![false; rows * cols];
    par::for_each_row(exec, &mut kept, cols, |r, out| {
        for (c, o) in out.iter_mut().enumerate() {
            let m = mag[(r, c)];
            let (dc, dr) = quantized_step(dir[(r, c)]);
            let (ri, ci) = (r as isize, c as isize);
            *o = m > 0.0 && m >= at(ri + dr, ci + dc) && m >= at(ri - dr, ci - dc);
        }
    });
    Grid::from_vec(rows, cols, kept)
}

/// Keeps suppressed-maximum pixels above `lower` that are 8-connected,
/// through such pixels, to one above `upper`.
fn hysteresis(mag: &Grid<f64>, kept: &Grid<bool>, lower: f64, upper: f64) -> Grid<bool> {
    let (rows, cols) = mag.shape();
    let weak = |i: usize| kept.as_slice()[i] && mag.as_slice()[i] > lower;
    let mut edges = Grid::filled(rows, cols, false);
    let mut stack: Vec<usize> = (0..rows * cols)
        .filter(|&i| weak(i) && mag.as_slice()[i] > upper)
        .collect();
    for &i in &stack {
        edges.as_mut_slice()[i] = true;
    }
    while let Some(i) = stack.pop() {
        let (r, c) = ((i / cols) as isize, (i % cols) as isize);
        for dr in -1..=1 {
            for dc in -1..=1 {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
                    continue;
                }
                let j = nr as usize * cols + nc as usize;
                if !edges.as_slice()[j] && weak(j) {
                    edges.as_mut_slice()[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    edges
}
