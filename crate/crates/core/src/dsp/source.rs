//! Reference-signal generators. Every stochastic source is driven by a
//! ChaCha8 stream cipher RNG so that a seed fully determines the sequence
//! on every platform.

use super::{design_bandpass, DelayLine, DspError, TapVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;
use std::path::Path;

/// A single-channel sample generator.
#[derive(Debug, Clone)]
pub enum SignalSource {
    /// Zero-mean unit-variance Gaussian noise.
    WhiteGaussian { rng: ChaCha8Rng },
    /// `amplitude * sin(2*pi*freq_hz*n/fs)`, phase-accumulated so long runs
    /// do not lose precision.
    Sine {
        amplitude: f64,
        phase: f64,
        phase_step: f64,
    },
    /// White Gaussian noise shaped by a band-pass filter.
    BandpassNoise {
        rng: ChaCha8Rng,
        taps: TapVector,
        line: DelayLine,
    },
    /// Playback of a prerecorded signal, optionally looped.
    Playback {
        samples: std::sync::Arc<Vec<f64>>,
        pos: usize,
        looped: bool,
    },
}

impl SignalSource {
    pub fn white(seed: u64) -> Self {
        Self::WhiteGaussian {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sine(amplitude: f64, freq_hz: f64, fs: f64) -> Result<Self, DspError> {
        if !(fs > 0.0 && freq_hz > 0.0 && freq_hz < fs / 2.0) {
            return Err(DspError::InvalidParameter(format!(
                "sine frequency must lie in (0, fs/2), got {freq_hz} at fs {fs}"
            )));
        }
        if !amplitude.is_finite() {
            return Err(DspError::NonFinite { value: amplitude });
        }
        Ok(Self::Sine {
            amplitude,
            phase: 0.0,
            phase_step: 2.0 * PI * freq_hz / fs,
        })
    }

    pub fn bandpass_noise(
        seed: u64,
        low_hz: f64,
        high_hz: f64,
        fs: f64,
        n_taps: usize,
    ) -> Result<Self, DspError> {
        let taps = design_bandpass(low_hz, high_hz, fs, n_taps)?;
        let line = DelayLine::new(n_taps)?;
        Ok(Self::BandpassNoise {
            rng: ChaCha8Rng::seed_from_u64(seed),
            taps,
            line,
        })
    }

    pub fn playback(samples: Vec<f64>, looped: bool) -> Result<Self, DspError> {
        if samples.is_empty() {
            return Err(DspError::InvalidParameter(
                "playback source needs at least one sample".into(),
            ));
        }
        if let Some(&bad) = samples.iter().find(|s| !s.is_finite()) {
            return Err(DspError::NonFinite { value: bad });
        }
        Ok(Self::Playback {
            samples: std::sync::Arc::new(samples),
            pos: 0,
            looped,
        })
    }

    /// Loads a signal file (see [`load_signal`]) into a playback source.
    pub fn from_file(path: &Path, looped: bool) -> Result<Self, DspError> {
        Self::playback(load_signal(path)?, looped)
    }

    /// Produces the next sample. Only playback sources can fail mid-stream,
    /// and only with looping disabled.
    pub fn next_sample(&mut self) -> Result<f64, DspError> {
        match self {
            Self::WhiteGaussian { rng } => Ok(StandardNormal.sample(rng)),
            Self::Sine {
                amplitude,
                phase,
                phase_step,
            } => {
                let y = *amplitude * phase.sin();
                *phase += *phase_step;
                if *phase >= 2.0 * PI {
                    *phase -= 2.0 * PI;
                }
                Ok(y)
            }
            Self::BandpassNoise { rng, taps, line } => {
                let v: f64 = StandardNormal.sample(rng);
                super::fir_step(taps, line, v)
            }
            Self::Playback {
                samples,
                pos,
                looped,
            } => {
                if *pos >= samples.len() {
                    if *looped {
                        *pos = 0;
                    } else {
                        return Err(DspError::EndOfStream);
                    }
                }
                let y = samples[*pos];
                *pos += 1;
                Ok(y)
            }
        }
    }

    /// Number of samples the source can still produce, when bounded.
    pub fn remaining(&self) -> Option<usize> {
        match self {
            Self::Playback {
                samples,
                pos,
                looped: false,
            } => Some(samples.len().saturating_sub(*pos)),
            _ => None,
        }
    }
}

/// Reads a signal file. `.wav` files must be 16-bit mono PCM and are scaled
/// to `[-1, 1)`; any other extension is treated as a headerless stream of
/// little-endian 64-bit floats.
pub fn load_signal(path: &Path) -> Result<Vec<f64>, DspError> {
    let bytes = std::fs::read(path)?;
    let is_wav = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
    if is_wav {
        parse_wav_mono_16(&bytes)
    } else {
        parse_raw_f64(&bytes)
    }
}

fn parse_raw_f64(bytes: &[u8]) -> Result<Vec<f64>, DspError> {
    if bytes.len() % 8 != 0 {
        return Err(DspError::InvalidParameter(format!(
            "raw f64 stream length {} is not a multiple of 8 bytes",
            bytes.len()
        )));
    }
    let mut out = Vec::with_capacity(bytes.len() / 8);
    for chunk in bytes.chunks_exact(8) {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(DspError::NonFinite { value: v });
        }
        out.push(v);
    }
    Ok(out)
}

fn parse_wav_mono_16(bytes: &[u8]) -> Result<Vec<f64>, DspError> {
    let header_err = |msg: &str| DspError::UnsupportedWav(msg.to_string());
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(header_err("missing RIFF/WAVE header"));
    }
    let mut fmt: Option<(u16, u16, u16)> = None; // (format tag, channels, bits)
    let mut data: Option<&[u8]> = None;
    let mut off = 12;
    while off + 8 <= bytes.len() {
        let id = &bytes[off..off + 4];
        let size = u32::from_le_bytes(bytes[off + 4..off + 8].try_into().unwrap()) as usize;
        let body_end = off + 8 + size;
        if body_end > bytes.len() {
            return Err(header_err("chunk overruns file"));
        }
        let body = &bytes[off + 8..body_end];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(header_err("fmt chunk too short"));
                }
                let tag = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                fmt = Some((tag, channels, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are word-aligned.
        off = body_end + (size % 2);
    }
    let (tag, channels, bits) = fmt.ok_or_else(|| header_err("missing fmt chunk"))?;
    if tag != 1 {
        return Err(header_err("only PCM (format tag 1) is supported"));
    }
    if channels != 1 {
        return Err(header_err("only mono files are supported"));
    }
    if bits != 16 {
        return Err(header_err("only 16-bit samples are supported"));
    }
    let data = data.ok_or_else(|| header_err("missing data chunk"))?;
    if data.len() % 2 != 0 {
        return Err(header_err("data chunk has odd byte count"));
    }
    Ok(data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes(c.try_into().unwrap()) as f64 / 32768.0)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_white_noise_is_deterministic_per_seed() {
        let mut a = SignalSource::white(42);
        let mut b = SignalSource::white(42);
        let mut c = SignalSource::white(43);
        let mut differs = false;
        for _ in 0..1000 {
            let xa = a.next_sample().unwrap();
            let xb = b.next_sample().unwrap();
            assert_eq!(xa, xb, "same seed must replay bit-identically");
            if xa != c.next_sample().unwrap() {
                differs = true;
            }
        }
        assert!(differs, "different seeds should give different noise");
    }

    #[test]
    fn test_white_noise_has_unit_variance() {
        let mut src = SignalSource::white(7);
        let n = 1_000_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let x = src.next_sample().unwrap();
            sum += x;
            sq += x * x;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean} too far from zero");
        assert!((var - 1.0).abs() < 0.02, "variance {var} too far from one");
    }

    #[test]
    fn test_quarter_rate_sine_cycles_0_1_0_minus_1() {
        let fs = 16_000.0;
        let mut src = SignalSource::sine(1.0, fs / 4.0, fs).unwrap();
        let expected = [0.0, 1.0, 0.0, -1.0];
        for n in 0..64 {
            let y = src.next_sample().unwrap();
            assert!(
                (y - expected[n % 4]).abs() < 1e-12,
                "sample {n}: {y} != {}",
                expected[n % 4]
            );
        }
    }

    #[test]
    fn test_sine_rejects_out_of_band_frequency() {
        assert!(SignalSource::sine(1.0, 9000.0, 16_000.0).is_err());
        assert!(SignalSource::sine(1.0, 0.0, 16_000.0).is_err());
    }

    #[test]
    fn test_bandpass_noise_suppresses_dc() {
        let mut src = SignalSource::bandpass_noise(3, 100.0, 1000.0, 8000.0, 255).unwrap();
        let n = 200_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let x = src.next_sample().unwrap();
            sum += x;
            sq += x * x;
        }
        let mean = sum / n as f64;
        let power = sq / n as f64;
        assert!(mean.abs() < 1e-3, "shaped noise mean {mean} not near zero");
        assert!(power > 0.0, "shaped noise must carry energy");
    }

    #[test]
    fn test_playback_end_of_stream_and_loop() {
        let mut once = SignalSource::playback(vec![1.0, 2.0], false).unwrap();
        assert_eq!(once.next_sample().unwrap(), 1.0);
        assert_eq!(once.next_sample().unwrap(), 2.0);
        assert!(matches!(once.next_sample(), Err(DspError::EndOfStream)));

        let mut looped = SignalSource::playback(vec![1.0, 2.0], true).unwrap();
        let got: Vec<f64> = (0..5).map(|_| looped.next_sample().unwrap()).collect();
        assert_eq!(got, vec![1.0, 2.0, 1.0, 2.0, 1.0]);
    }

    #[test]
    fn test_raw_f64_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sig.f64");
        let samples: Vec<f64> = vec![0.25, -1.5, 3.0e-5, 123.456];
        let mut bytes = Vec::new();
        for s in &samples {
            bytes.extend_from_slice(&s.to_le_bytes());
        }
        std::fs::write(&path, bytes).unwrap();
        assert_eq!(load_signal(&path).unwrap(), samples);
    }

    #[test]
    fn test_wav_mono_16_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sig.wav");
        let samples: Vec<i16> = vec![0, 16384, -16384, 32767, -32768];
        let data_len = samples.len() * 2;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes()); // PCM
        bytes.extend_from_slice(&1u16.to_le_bytes()); // mono
        bytes.extend_from_slice(&16000u32.to_le_bytes());
        bytes.extend_from_slice(&32000u32.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&(data_len as u32).to_le_bytes());
        for s in &samples {
            bytes.extend_from_slice(&s.to_le_bytes());
        }
        std::fs::write(&path, bytes).unwrap();
        let got = load_signal(&path).unwrap();
        let expected: Vec<f64> = samples.iter().map(|&s| s as f64 / 32768.0).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn test_wav_rejects_stereo() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&36u32.to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes()); // stereo
        bytes.extend_from_slice(&16000u32.to_le_bytes());
        bytes.extend_from_slice(&64000u32.to_le_bytes());
        bytes.extend_from_slice(&4u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&0u32.to_le_bytes());
        assert!(matches!(
            parse_wav_mono_16(&bytes),
            Err(DspError::UnsupportedWav(_))
        ));
    }
}
