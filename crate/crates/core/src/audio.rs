//! WAV loading and standardization to the canonical 16 kHz mono format.

use std::f64::consts::PI;
use std::path::Path;

use crate::{Error, Result};

pub const CANONICAL_RATE: u32 = 16_000;

/// Taps per polyphase branch of the resampling filter.
pub const RESAMPLE_TAPS: usize = 32;
/// Kaiser window shape parameter of the resampling filter.
pub const KAISER_BETA: f64 = 8.6;

/// Interleaved PCM samples normalized to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub channel_count: u16,
    pub source_path: String,
}

impl AudioBuffer {
    pub fn mono(samples: Vec<f32>, sample_rate: u32) -> Self {
        AudioBuffer {
            samples,
            sample_rate,
            channel_count: 1,
            source_path: String::new(),
        }
    }

    pub fn frames(&self) -> usize {
        self.samples.len() / self.channel_count.max(1) as usize
    }

    pub fn duration_s(&self) -> f64 {
        self.frames() as f64 / self.sample_rate as f64
    }
}

/// Reads a RIFF/WAVE file with 8/16/24/32-bit integer or 32-bit float PCM.
///
/// Integer samples are divided by the format's full-scale magnitude
/// (`2^(bits-1)`), so 16-bit 16384 becomes exactly 0.5.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v.clamp(-1.0, 1.0)))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (hound::SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| (v as f64 * scale) as f32))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| wav_error(path, e))?
        }
        (fmt, bits) => {
            return Err(Error::UnsupportedCodec {
                path: path.to_path_buf(),
                reason: format!("{fmt:?} with {bits} bits per sample"),
            })
        }
    };
    Ok(AudioBuffer {
        samples,
        sample_rate: spec.sample_rate,
        channel_count: spec.channels,
        source_path: path.display().to_string(),
    })
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    let path = path.to_path_buf();
    match e {
        hound::Error::IoError(source) if source.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::MalformedWav {
                path,
                reason: "unexpected end of file".into(),
            }
        }
        hound::Error::IoError(source) => Error::Io { path, source },
        hound::Error::FormatError(reason) => Error::MalformedWav {
            path,
            reason: reason.into(),
        },
        hound::Error::UnfinishedSample => Error::MalformedWav {
            path,
            reason: "data chunk ends inside a sample".into(),
        },
        hound::Error::Unsupported | hound::Error::InvalidSampleFormat | hound::Error::TooWide => {
            Error::UnsupportedCodec {
                path,
                reason: e.to_string(),
            }
        }
    }
}

/// Downmixes to mono by channel averaging and resamples to 16 kHz.
///
/// A buffer that is already 16 kHz mono is returned unchanged, which makes
/// the operation idempotent.
pub fn standardize(buf: &AudioBuffer) -> Result<AudioBuffer> {
    if buf.samples.is_empty() || buf.channel_count == 0 {
        return Err(Error::EmptyAudio);
    }
    if buf.channel_count == 1 && buf.sample_rate == CANONICAL_RATE {
        return Ok(buf.clone());
    }
    if buf.sample_rate == 0 {
        return Err(Error::InvalidParams("sample rate is zero".into()));
    }
    let mono = downmix(&buf.samples, buf.channel_count as usize);
    let samples = if buf.sample_rate == CANONICAL_RATE {
        mono
    } else {
        Resampler::new(buf.sample_rate, CANONICAL_RATE).process(&mono)
    };
    Ok(AudioBuffer {
        samples,
        sample_rate: CANONICAL_RATE,
        channel_count: 1,
        source_path: buf.source_path.clone(),
    })
}

fn downmix(interleaved: &[f32], channels: usize) -> Vec<f32> {
    if channels == 1 {
        return interleaved.to_vec();
    }
    interleaved
        .chunks_exact(channels)
        .map(|frame| (frame.iter().map(|&s| s as f64).sum::<f64>() / channels as f64) as f32)
        .collect()
}

/// Rational-ratio polyphase resampler with a Kaiser-windowed sinc kernel.
#[derive(Debug, Clone)]
pub struct Resampler {
    up: u64,
    down: u64,
    /// `up` phases of `RESAMPLE_TAPS` coefficients each.
    bank: Vec<[f64; RESAMPLE_TAPS]>,
}

impl Resampler {
    pub fn new(from_rate: u32, to_rate: u32) -> Self {
        let g = gcd(from_rate as u64, to_rate as u64);
        let up = to_rate as u64 / g;
        let down = from_rate as u64 / g;
        let cutoff = (up as f64 / down as f64).min(1.0);
        let half = (RESAMPLE_TAPS / 2) as f64;
        let i0_beta = bessel_i0(KAISER_BETA);
        let bank = (0..up)
            .map(|phase| {
                let frac = phase as f64 / up as f64;
                let mut taps = [0.0; RESAMPLE_TAPS];
                for (t, tap) in taps.iter_mut().enumerate() {
                    let tau = t as f64 - (half - 1.0) - frac;
                    let x = tau / half;
                    let window = if x.abs() >= 1.0 {
                        0.0
                    } else {
                        bessel_i0(KAISER_BETA * (1.0 - x * x).sqrt()) / i0_beta
                    };
                    *tap = cutoff * sinc(cutoff * tau) * window;
                }
                let sum: f64 = taps.iter().sum();
                taps.iter_mut().for_each(|v| *v /= sum);
                taps
            })
            .collect();
        Resampler { up, down, bank }
    }

    /// Number of output samples produced for `input_len` input samples.
    pub fn output_len(&self, input_len: usize) -> usize {
        ((input_len as u128 * self.up as u128 + self.down as u128 / 2) / self.down as u128) as usize
    }

    pub fn process(&self, input: &[f32]) -> Vec<f32> {
        let n_out = self.output_len(input.len());
        let lead = RESAMPLE_TAPS as i64 / 2 - 1;
        (0..n_out as u64)
            .map(|k| {
                let pos = k * self.down;
                let base = (pos / self.up) as i64;
                let taps = &self.bank[(pos % self.up) as usize];
                let mut acc = 0.0;
                for (t, &h) in taps.iter().enumerate() {
                    let idx = base - lead + t as i64;
                    if idx >= 0 && (idx as usize) < input.len() {
                        acc += h * input[idx as usize] as f64;
                    }
                }
                acc.clamp(-1.0, 1.0) as f32
            })
            .collect()
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn write_wav(path: &Path, spec: hound::WavSpec, samples: &[i32]) {
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for &s in samples {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }

    fn spec(channels: u16, bits: u16) -> hound::WavSpec {
        hound::WavSpec {
            channels,
            sample_rate: 16_000,
            bits_per_sample: bits,
            sample_format: hound::SampleFormat::Int,
        }
    }

    fn sine(rate: u32, freq: f64, len: usize) -> Vec<f32> {
        (0..len)
            .map(|i| (0.8 * (2.0 * PI * freq * i as f64 / rate as f64).sin()) as f32)
            .collect()
    }

    fn peak_bin_hz(samples: &[f32], rate: u32) -> f64 {
        let mut buf: Vec<Complex<f64>> = samples.iter().map(|&s| Complex::new(s as f64, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
        let (bin, _) = buf[..buf.len() / 2]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap();
        bin as f64 * rate as f64 / samples.len() as f64
    }

    #[test]
    fn pcm16_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("one.wav");
        write_wav(&p, spec(1, 16), &[16384]);
        let buf = load_wav(&p).unwrap();
        assert_eq!(buf.samples, vec![0.5]);
        assert_eq!(buf.channel_count, 1);
    }

    #[test]
    fn stereo_keeps_interleaving() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("st.wav");
        write_wav(&p, spec(2, 16), &[8192, -8192, 16384, 0]);
        let buf = load_wav(&p).unwrap();
        assert_eq!(buf.channel_count, 2);
        assert_eq!(buf.samples, vec![0.25, -0.25, 0.5, 0.0]);
    }

    #[test]
    fn other_depths_normalize() {
        let dir = tempfile::tempdir().unwrap();
        for (bits, v, expect) in [(8u16, 64, 0.5f32), (24, 1 << 22, 0.5), (32, i32::MIN, -1.0)] {
            let p = dir.path().join(format!("d{bits}.wav"));
            write_wav(&p, spec(1, bits), &[v]);
            assert_eq!(load_wav(&p).unwrap().samples, vec![expect], "{bits} bits");
        }
        let p = dir.path().join("f.wav");
        let mut w = hound::WavWriter::create(
            &p,
            hound::WavSpec {
                sample_format: hound::SampleFormat::Float,
                ..spec(1, 32)
            },
        )
        .unwrap();
        w.write_sample(0.25f32).unwrap();
        w.write_sample(3.0f32).unwrap();
        w.finalize().unwrap();
        assert_eq!(load_wav(&p).unwrap().samples, vec![0.25, 1.0]);
    }

    #[test]
    fn distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_wav(dir.path().join("nope.wav")),
            Err(Error::MissingFile(_))
        ));

        let p = dir.path().join("a.wav");
        write_wav(&p, spec(1, 16), &[1, 2, 3]);
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[..4].copy_from_slice(b"RIFX");
        let bad = dir.path().join("rifx.wav");
        std::fs::write(&bad, &bytes).unwrap();
        assert!(matches!(load_wav(&bad), Err(Error::MalformedWav { .. })));

        // Rewrite the fmt chunk's format tag to 0x0055 (MPEG layer 3).
        let mut mp3 = std::fs::read(&p).unwrap();
        mp3[20..22].copy_from_slice(&0x0055u16.to_le_bytes());
        let codec = dir.path().join("mp3.wav");
        std::fs::write(&codec, &mp3).unwrap();
        assert!(matches!(load_wav(&codec), Err(Error::UnsupportedCodec { .. })));
    }

    #[test]
    fn canonical_input_is_untouched() {
        let buf = AudioBuffer::mono(sine(16_000, 300.0, 1234), 16_000);
        let out = standardize(&buf).unwrap();
        assert_eq!(out, buf);
    }

    #[test]
    fn antiphase_stereo_cancels() {
        let x = sine(16_000, 500.0, 800);
        let samples = x.iter().flat_map(|&v| [v, -v]).collect();
        let buf = AudioBuffer {
            samples,
            sample_rate: 16_000,
            channel_count: 2,
            source_path: String::new(),
        };
        let out = standardize(&buf).unwrap();
        assert_eq!(out.channel_count, 1);
        assert_eq!(out.samples.len(), 800);
        assert!(out.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn empty_buffer_is_rejected() {
        let buf = AudioBuffer::mono(vec![], 44_100);
        assert!(matches!(standardize(&buf), Err(Error::EmptyAudio)));
    }

    #[test]
    fn downsampled_sine_matches_direct_synthesis() {
        let input = AudioBuffer::mono(sine(32_000, 440.0, 32_000), 32_000);
        let out = standardize(&input).unwrap();
        assert!((out.samples.len() as i64 - 16_000).abs() <= 1);
        let direct = sine(16_000, 440.0, out.samples.len());
        let trim = 32;
        let max_err = out.samples[trim..out.samples.len() - trim]
            .iter()
            .zip(&direct[trim..direct.len() - trim])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_err < 0.01, "max error {max_err}");
        assert_eq!(peak_bin_hz(&out.samples, 16_000), 440.0);
    }

    #[test]
    fn resampling_is_idempotent() {
        let input = AudioBuffer::mono(sine(44_100, 1000.0, 4410), 44_100);
        let once = standardize(&input).unwrap();
        let twice = standardize(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn resampled_tone_keeps_frequency() {
        for (rate, freq) in [(44_100u32, 1000.0), (22_050, 3000.0), (48_000, 6500.0), (8_000, 2000.0)] {
            let len = rate as usize;
            let out = standardize(&AudioBuffer::mono(sine(rate, freq, len), rate)).unwrap();
            let before = peak_bin_hz(&sine(rate, freq, len), rate);
            let after = peak_bin_hz(&out.samples, 16_000);
            let bin = 16_000.0 / out.samples.len() as f64;
            assert!((before - after).abs() <= bin, "{rate} Hz: {before} vs {after}");
        }
    }
}
