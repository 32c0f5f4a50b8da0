//! Frame-level feature matrices: native MFCC extraction and the QBF1
//! exchange format used to import embeddings from external models.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::{AudioBuffer, CANONICAL_RATE};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSource {
    NativeMfcc,
    External,
}

/// `n_frames x dim` row-major matrix of per-frame feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f32>,
    n_frames: usize,
    dim: usize,
    /// Seconds between consecutive frame starts.
    pub frame_hop_s: f64,
    /// Time of the centre of frame 0, in seconds.
    pub frame_offset_s: f64,
    pub source: FeatureSource,
}

impl FeatureMatrix {
    pub fn new(
        data: Vec<f32>,
        n_frames: usize,
        dim: usize,
        frame_hop_s: f64,
        frame_offset_s: f64,
        source: FeatureSource,
    ) -> Result<Self> {
        if n_frames == 0 || dim == 0 {
            return Err(Error::InvalidFeatures(format!(
                "shape {n_frames}x{dim} has no entries"
            )));
        }
        if data.len() != n_frames * dim {
            return Err(Error::InvalidFeatures(format!(
                "{} values for shape {n_frames}x{dim}",
                data.len()
            )));
        }
        if !(frame_hop_s > 0.0 && frame_hop_s.is_finite()) || !frame_offset_s.is_finite() {
            return Err(Error::InvalidFeatures(format!(
                "bad frame timing hop={frame_hop_s} offset={frame_offset_s}"
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                frame: i / dim,
                dim: i % dim,
            });
        }
        Ok(FeatureMatrix {
            data,
            n_frames,
            dim,
            frame_hop_s,
            frame_offset_s,
            source,
        })
    }

    /// Builds a matrix from rows with the native MFCC frame timing.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidFeatures("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(
            data,
            rows.len(),
            dim,
            MFCC_HOP as f64 / CANONICAL_RATE as f64,
            MFCC_WINDOW as f64 / 2.0 / CANONICAL_RATE as f64,
            FeatureSource::External,
        )
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    /// Copy of frames `start..end`, keeping hop and shifting the offset.
    pub fn slice_frames(&self, start: usize, end: usize) -> Result<Self> {
        let end = end.min(self.n_frames);
        if start >= end {
            return Err(Error::EmptyInput("frame slice"));
        }
        Self::new(
            self.data[start * self.dim..end * self.dim].to_vec(),
            end - start,
            self.dim,
            self.frame_hop_s,
            self.frame_offset_s + start as f64 * self.frame_hop_s,
            self.source,
        )
    }
}

pub const MFCC_WINDOW: usize = 400;
pub const MFCC_HOP: usize = 160;
pub const MFCC_FFT: usize = 512;
pub const MFCC_FILTERS: usize = 26;
pub const MFCC_CEPSTRA: usize = 13;
pub const MFCC_DIM: usize = 3 * MFCC_CEPSTRA;
const PRE_EMPHASIS: f64 = 0.97;
const LOG_FLOOR: f64 = 1e-10;
const DELTA_WINDOW: usize = 2;

/// 39-dimensional MFCC + delta + delta-delta features of a 16 kHz mono
/// buffer, with per-utterance cepstral mean subtraction.
pub fn extract_mfcc(buf: &AudioBuffer) -> Result<FeatureMatrix> {
    if buf.sample_rate != CANONICAL_RATE || buf.channel_count != 1 {
        return Err(Error::InvalidParams(format!(
            "MFCC expects 16 kHz mono, got {} Hz x{}",
            buf.sample_rate, buf.channel_count
        )));
    }
    let x = &buf.samples;
    if x.len() < MFCC_WINDOW {
        return Err(Error::AudioTooShort {
            samples: x.len(),
            window: MFCC_WINDOW,
        });
    }
    let emphasized: Vec<f64> = std::iter::once(x[0] as f64)
        .chain(x.windows(2).map(|w| w[1] as f64 - PRE_EMPHASIS * w[0] as f64))
        .collect();
    let n_frames = (x.len() - MFCC_WINDOW) / MFCC_HOP + 1;

    let hamming: Vec<f64> = (0..MFCC_WINDOW)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (MFCC_WINDOW - 1) as f64).cos())
        .collect();
    let filters = mel_filterbank(MFCC_FILTERS, MFCC_FFT, CANONICAL_RATE as f64, 0.0, 8000.0);
    let dct = dct2_ortho(MFCC_FILTERS, MFCC_CEPSTRA);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(MFCC_FFT);

    let mut spectrum = vec![Complex::new(0.0, 0.0); MFCC_FFT];
    let mut cepstra: Vec<[f64; MFCC_CEPSTRA]> = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let frame = &emphasized[f * MFCC_HOP..f * MFCC_HOP + MFCC_WINDOW];
        spectrum.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (i, (&s, &w)) in frame.iter().zip(&hamming).enumerate() {
            spectrum[i].re = s * w;
        }
        fft.process(&mut spectrum);
        let mag: Vec<f64> = spectrum[..=MFCC_FFT / 2].iter().map(|c| c.norm()).collect();
        let log_mel: Vec<f64> = filters
            .iter()
            .map(|fb| {
                let e: f64 = fb.iter().zip(&mag).map(|(w, m)| w * m).sum();
                e.max(LOG_FLOOR).ln()
            })
            .collect();
        let mut c = [0.0; MFCC_CEPSTRA];
        for (k, row) in dct.iter().enumerate() {
            c[k] = row.iter().zip(&log_mel).map(|(a, b)| a * b).sum();
        }
        cepstra.push(c);
    }

    // Mean taken relative to frame 0 so a constant signal cancels exactly.
    let first = cepstra[0];
    for k in 0..MFCC_CEPSTRA {
        let shift: f64 = cepstra.iter().map(|c| c[k] - first[k]).sum::<f64>() / n_frames as f64;
        let mean = first[k] + shift;
        cepstra.iter_mut().for_each(|c| c[k] -= mean);
    }

    let statics: Vec<Vec<f64>> = cepstra.iter().map(|c| c.to_vec()).collect();
    let delta = deltas(&statics);
    let delta2 = deltas(&delta);

    let mut data = Vec::with_capacity(n_frames * MFCC_DIM);
    for t in 0..n_frames {
        data.extend(statics[t].iter().map(|&v| v as f32));
        data.extend(delta[t].iter().map(|&v| v as f32));
        data.extend(delta2[t].iter().map(|&v| v as f32));
    }
    FeatureMatrix::new(
        data,
        n_frames,
        MFCC_DIM,
        MFCC_HOP as f64 / CANONICAL_RATE as f64,
        MFCC_WINDOW as f64 / 2.0 / CANONICAL_RATE as f64,
        FeatureSource::NativeMfcc,
    )
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters over the `fft_len / 2 + 1` magnitude bins, with
/// centres equally spaced on the mel scale.
fn mel_filterbank(n_filters: usize, fft_len: usize, rate: f64, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let n_bins = fft_len / 2 + 1;
    let (mlo, mhi) = (hz_to_mel(lo), hz_to_mel(hi));
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (n_filters + 1) as f64))
        .collect();
    (0..n_filters)
        .map(|m| {
            let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|b| {
                    let f = b as f64 * rate / fft_len as f64;
                    if f <= left || f >= right {
                        0.0
                    } else if f <= centre {
                        (f - left) / (centre - left)
                    } else {
                        (right - f) / (right - centre)
                    }
                })
                .collect()
        })
        .collect()
}

/// First `keep` rows of the orthonormal DCT-II matrix of size `n`.
fn dct2_ortho(n: usize, keep: usize) -> Vec<Vec<f64>> {
    (0..keep)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            (0..n)
                .map(|i| scale * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos())
                .collect()
        })
        .collect()
}

/// Regression deltas over a +-2 frame window with replicated edge frames.
fn deltas(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = x.len() as i64;
    let denom: f64 = 2.0 * (1..=DELTA_WINDOW).map(|k| (k * k) as f64).sum::<f64>();
    let at = |t: i64| &x[t.clamp(0, n - 1) as usize];
    (0..n)
        .map(|t| {
            (0..x[0].len())
                .map(|d| {
                    (1..=DELTA_WINDOW as i64)
                        .map(|k| k as f64 * (at(t + k)[d] - at(t - k)[d]))
                        .sum::<f64>()
                        / denom
                })
                .collect()
        })
        .collect()
}

pub const QBF_MAGIC: &[u8; 4] = b"QBF1";
pub const QBF_HEADER_LEN: usize = 28;

/// Serializes to the QBF1 little-endian layout.
pub fn encode_qbf(fm: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(QBF_HEADER_LEN + 4 * fm.data.len());
    out.extend_from_slice(QBF_MAGIC);
    out.extend_from_slice(&(fm.n_frames as u32).to_le_bytes());
    out.extend_from_slice(&(fm.dim as u32).to_le_bytes());
    out.extend_from_slice(&fm.frame_hop_s.to_le_bytes());
    out.extend_from_slice(&fm.frame_offset_s.to_le_bytes());
    for v in &fm.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_qbf(bytes: &[u8]) -> Result<FeatureMatrix> {
    if bytes.len() < 4 || &bytes[..4] != QBF_MAGIC {
        let mut found = [0u8; 4];
        let n = bytes.len().min(4);
        found[..n].copy_from_slice(&bytes[..n]);
        return Err(Error::BadMagic { found });
    }
    if bytes.len() < QBF_HEADER_LEN {
        return Err(Error::Truncated {
            expected: QBF_HEADER_LEN,
            found: bytes.len(),
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let n_frames = u32_at(4);
    let dim = u32_at(8);
    let hop = f64_at(12);
    let offset = f64_at(20);
    let expected = n_frames * dim;
    let payload = &bytes[QBF_HEADER_LEN..];
    if payload.len() < expected * 4 {
        return Err(Error::Truncated {
            expected,
            found: payload.len() / 4,
        });
    }
    let data: Vec<f32> = payload[..expected * 4]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureMatrix::new(data, n_frames, dim, hop, offset, FeatureSource::External)
}

pub fn write_feature_file(fm: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_qbf(fm)).map_err(|e| Error::io(path, e))
}

/// Reads a QBF1 file. The source tag is always `External`: the format does
/// not record which extractor produced the values.
pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    decode_qbf(&bytes)
}
