//! WAV decoding and the log-mel frontend. The input contract is strict:
//! RIFF/WAVE, 16-bit PCM, mono, 16 kHz — anything else is rejected by name,
//! never resampled silently.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use tags2v_core::features::{FeatureMatrix, FrameTiming};
use tags2v_core::tensor::Tensor;

use crate::error::AppError;

pub const SAMPLE_RATE: u32 = 16_000;
pub const MEL_BINS: usize = 64;
/// Additive floor inside the log, so silence maps to ln(1e-8).
pub const LOG_FLOOR: f64 = 1e-8;
/// Magic bytes of the flat feature-dump format.
pub const FEAT_MAGIC: &[u8; 8] = b"TS2VFEAT";

const WINDOW: usize = 480;
const SPECTRUM_BINS: usize = WINDOW / 2 + 1;

// ── wav io ──────────────────────────────────────────────────────────────────

/// Mono 16 kHz waveform with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
}

pub fn read_wav(path: &Path) -> Result<Waveform, AppError> {
    let mut reader = hound::WavReader::open(path)
        .map_err(|e| AppError::data(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    let name = path.display();
    if spec.channels != 1 {
        return Err(AppError::data(format!(
            "{name}: expected mono audio, got {} channels",
            spec.channels
        )));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(AppError::data(format!(
            "{name}: expected {SAMPLE_RATE} Hz, got {} Hz (resampling not supported)",
            spec.sample_rate
        )));
    }
    if spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(AppError::data(format!(
            "{name}: expected 16-bit PCM, got {}-bit {:?}",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    let samples: Vec<f64> = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<Result<_, _>>()
        .map_err(|e| AppError::data(format!("{name}: {e}")))?;
    if samples.is_empty() {
        return Err(AppError::data(format!("{name}: empty waveform")));
    }
    Ok(Waveform { samples })
}

/// Writes 16-bit PCM mono 16 kHz; values are clamped to [-1, 1] and rounded.
pub fn write_wav(path: &Path, samples: &[f64]) -> Result<(), AppError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)
        .map_err(|e| AppError::data(format!("{}: {e}", path.display())))?;
    for &x in samples {
        let v = (x.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(|e| AppError::data(format!("{}: {e}", path.display())))?;
    }
    writer.finalize().map_err(|e| AppError::data(format!("{}: {e}", path.display())))?;
    Ok(())
}

// ── log-mel frontend ────────────────────────────────────────────────────────

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Center frequencies of the triangular filters (the peak of each filter).
pub fn mel_center_frequencies(mel_bins: usize) -> Vec<f64> {
    let lo = hz_to_mel(0.0);
    let hi = hz_to_mel(SAMPLE_RATE as f64 / 2.0);
    (1..=mel_bins).map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (mel_bins + 1) as f64)).collect()
}

/// Triangular mel filterbank over the magnitude spectrum, [mel_bins ×
/// SPECTRUM_BINS] row-major.
fn filterbank(mel_bins: usize) -> Vec<f64> {
    let lo = hz_to_mel(0.0);
    let hi = hz_to_mel(SAMPLE_RATE as f64 / 2.0);
    let points: Vec<f64> = (0..mel_bins + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (mel_bins + 1) as f64))
        .collect();
    let bin_hz = SAMPLE_RATE as f64 / WINDOW as f64;
    let mut fb = vec![0.0; mel_bins * SPECTRUM_BINS];
    for m in 0..mel_bins {
        let (left, center, right) = (points[m], points[m + 1], points[m + 2]);
        for k in 0..SPECTRUM_BINS {
            let f = k as f64 * bin_hz;
            let w = if f <= center {
                (f - left) / (center - left)
            } else {
                (right - f) / (right - center)
            };
            if w > 0.0 {
                fb[m * SPECTRUM_BINS + k] = w;
            }
        }
    }
    fb
}

/// Log-mel features: periodic Hann window of 480 samples, 160-sample hop,
/// magnitude spectrum, triangular mel weights, ln(x + 1e-8). Signals shorter
/// than one window yield exactly one zero-padded frame.
pub fn log_mel(w: &Waveform, mel_bins: usize) -> Result<FeatureMatrix, AppError> {
    if w.samples.is_empty() {
        return Err(AppError::data("cannot extract features from an empty waveform"));
    }
    if mel_bins < 4 {
        return Err(AppError::usage(format!("mel_bins must be at least 4, got {mel_bins}")));
    }
    let timing = FrameTiming::default_16k();
    let t_frames = timing.num_frames(w.samples.len());
    let hann: Vec<f64> =
        (0..WINDOW).map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / WINDOW as f64).cos())).collect();
    let fb = filterbank(mel_bins);

    let mut planner = FftPlanner::<f64>::new();
    let fft: Arc<dyn Fft<f64>> = planner.plan_fft_forward(WINDOW);
    let mut data = Vec::with_capacity(t_frames * mel_bins);
    let mut frame = vec![Complex::new(0.0, 0.0); WINDOW];
    for t in 0..t_frames {
        let start = t * timing.hop;
        for (i, c) in frame.iter_mut().enumerate() {
            let x = w.samples.get(start + i).copied().unwrap_or(0.0);
            *c = Complex::new(x * hann[i], 0.0);
        }
        fft.process(&mut frame);
        let mags: Vec<f64> = frame[..SPECTRUM_BINS].iter().map(|c| c.norm()).collect();
        for m in 0..mel_bins {
            let row = &fb[m * SPECTRUM_BINS..(m + 1) * SPECTRUM_BINS];
            let energy: f64 = row.iter().zip(&mags).map(|(w_, x)| w_ * x).sum();
            data.push((energy + LOG_FLOOR).ln());
        }
    }
    let frames = Tensor::new(vec![t_frames, mel_bins], data)
        .map_err(|e| AppError::numeric(e.to_string()))?;
    FeatureMatrix::new(frames, timing).map_err(|e| AppError::data(e.to_string()))
}

// ── feature dump ────────────────────────────────────────────────────────────

/// Flat binary dump: magic, u32 T, u32 F, then T·F little-endian f32
/// row-major.
pub fn dump_features(path: &Path, fm: &FeatureMatrix) -> Result<(), AppError> {
    let (t, f) = (fm.num_frames(), fm.dim());
    let mut buf = Vec::with_capacity(16 + t * f * 4);
    buf.extend_from_slice(FEAT_MAGIC);
    buf.extend_from_slice(&(t as u32).to_le_bytes());
    buf.extend_from_slice(&(f as u32).to_le_bytes());
    for &v in fm.frames.data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    File::create(path)?.write_all(&buf)?;
    Ok(())
}

/// Reads a dump back as (T, F, values); the inverse of [`dump_features`] up
/// to f32 rounding.
pub fn read_features(path: &Path) -> Result<(usize, usize, Vec<f64>), AppError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let fail = |why: &str| AppError::data(format!("{}: {why}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != FEAT_MAGIC {
        return Err(fail("not a feature dump (bad magic)"));
    }
    let t = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let f = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if bytes.len() != 16 + t * f * 4 {
        return Err(fail("truncated feature dump"));
    }
    let values = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok((t, f, values))
}

// ── tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn write_pcm(path: &Path, spec: hound::WavSpec, samples: &[i16]) {
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for &s in samples {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }

    fn mono_spec(rate: u32) -> hound::WavSpec {
        hound::WavSpec {
            channels: 1,
            sample_rate: rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        }
    }

    #[test]
    fn pcm_scaling_is_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("x.wav");
        write_pcm(&path, mono_spec(16_000), &[0, 16384, -16384]);
        let w = read_wav(&path).unwrap();
        assert_eq!(w.samples, vec![0.0, 0.5, -0.5]);
    }

    #[test]
    fn format_mismatches_are_named() {
        let dir = tempdir().unwrap();
        let stereo = dir.path().join("stereo.wav");
        write_pcm(
            &stereo,
            hound::WavSpec { channels: 2, ..mono_spec(16_000) },
            &[0, 0, 1, 1],
        );
        let err = read_wav(&stereo).unwrap_err();
        assert!(err.msg.contains("2 channels"), "{}", err.msg);

        let fast = dir.path().join("fast.wav");
        write_pcm(&fast, mono_spec(44_100), &[0, 1, 2]);
        let err = read_wav(&fast).unwrap_err();
        assert!(err.msg.contains("44100 Hz"), "{}", err.msg);
    }

    #[test]
    fn wav_round_trip_preserves_quantized_samples() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("rt.wav");
        let samples: Vec<f64> = (0..480).map(|i| (i as f64 / 480.0) * 1.9 - 0.95).collect();
        write_wav(&path, &samples).unwrap();
        let back = read_wav(&path).unwrap();
        for (a, b) in samples.iter().zip(&back.samples) {
            assert!((a - b).abs() <= 0.5 / 32768.0 + 1e-12);
        }
    }

    #[test]
    fn frame_count_follows_the_framing_formula() {
        let w = Waveform { samples: vec![0.01; 1600] };
        assert_eq!(log_mel(&w, MEL_BINS).unwrap().num_frames(), 8);
        // Shorter than one window: exactly one zero-padded frame.
        let w = Waveform { samples: vec![0.01; 100] };
        assert_eq!(log_mel(&w, MEL_BINS).unwrap().num_frames(), 1);
    }

    #[test]
    fn silence_hits_the_constant_floor() {
        let w = Waveform { samples: vec![0.0; 1600] };
        let fm = log_mel(&w, MEL_BINS).unwrap();
        let floor = LOG_FLOOR.ln();
        for &v in fm.frames.data() {
            assert_eq!(v, floor);
        }
    }

    #[test]
    fn one_khz_sine_peaks_at_the_nearest_mel_center() {
        let n = 16_000;
        let samples: Vec<f64> =
            (0..n).map(|i| 0.5 * (2.0 * PI * 1000.0 * i as f64 / 16_000.0).sin()).collect();
        let fm = log_mel(&Waveform { samples }, MEL_BINS).unwrap();
        let centers = mel_center_frequencies(MEL_BINS);
        let expected = centers
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - 1000.0).abs().partial_cmp(&(b.1 - 1000.0).abs()).unwrap()
            })
            .unwrap()
            .0;
        // Middle frame, away from edge padding.
        let row = fm.frames.row(fm.num_frames() / 2);
        let argmax =
            row.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
        assert_eq!(argmax, expected, "centers near peak: {:?}", &centers[argmax.min(expected)..=argmax.max(expected)]);
    }

    #[test]
    fn scaling_the_waveform_shifts_features_by_a_constant() {
        let n = 4800;
        let samples: Vec<f64> = (0..n)
            .map(|i| {
                0.3 * (2.0 * PI * 700.0 * i as f64 / 16_000.0).sin()
                    + 0.2 * (2.0 * PI * 2500.0 * i as f64 / 16_000.0).sin()
            })
            .collect();
        let scaled: Vec<f64> = samples.iter().map(|x| 2.0 * x).collect();
        let a = log_mel(&Waveform { samples }, MEL_BINS).unwrap();
        let b = log_mel(&Waveform { samples: scaled }, MEL_BINS).unwrap();
        let floor = LOG_FLOOR.ln();
        let ln2 = 2f64.ln();
        for (x, y) in a.frames.data().iter().zip(b.frames.data()) {
            if *x > floor + 5.0 {
                assert!((y - x - ln2).abs() < 1e-6, "shift {} != ln 2", y - x);
            }
        }
    }

    #[test]
    fn feature_dump_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let w = Waveform { samples: (0..1600).map(|i| (i as f64 / 1600.0) - 0.5).collect() };
        let fm = log_mel(&w, 8).unwrap();
        dump_features(&path, &fm).unwrap();
        let (t, f, values) = read_features(&path).unwrap();
        assert_eq!((t, f), (8, 8));
        for (a, b) in fm.frames.data().iter().zip(&values) {
            assert_eq!(*a as f32, *b as f32);
        }
        // Corrupt the magic.
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(read_features(&path).unwrap_err().msg.contains("bad magic"));
    }
}
