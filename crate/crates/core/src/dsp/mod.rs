//! Fixed-point-free FIR primitives shared by every layer of the simulator:
//! coefficient vectors, zero-initialized delay lines, and single-sample
//! filter stepping.
//!
//! Conventions used throughout the crate:
//! - histories are most-recent-first: lag `0` is the newest sample,
//! - pre-history reads as zero (delay lines start silent),
//! - all signals are `f64` and must stay finite.

mod design;
mod source;

pub use design::design_bandpass;
pub use source::{load_signal, SignalSource};

use thiserror::Error;

/// Errors produced by the signal-processing primitives.
#[derive(Debug, Error)]
pub enum DspError {
    /// A sample pushed into a filter or delay line was NaN or infinite.
    #[error("non-finite input sample ({value})")]
    NonFinite { value: f64 },
    /// A filter asked for more history than the delay line can hold.
    #[error("filter needs {needed} samples of history but the delay line capacity is {capacity}")]
    ShortLine { needed: usize, capacity: usize },
    /// A constructor or design routine was given an out-of-range argument.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// A playback source ran past the end of its data with looping disabled.
    #[error("playback source exhausted")]
    EndOfStream,
    /// File-backed sources failed to read their data.
    #[error("signal file error: {0}")]
    Io(#[from] std::io::Error),
    /// A WAV file was readable but not 16-bit mono PCM.
    #[error("unsupported wav format: {0}")]
    UnsupportedWav(String),
}

/// An immutable FIR coefficient vector: at least one tap, every tap finite.
#[derive(Debug, Clone, PartialEq)]
pub struct TapVector {
    taps: Vec<f64>,
}

impl TapVector {
    /// Wraps raw coefficients, rejecting empty or non-finite vectors.
    pub fn new(taps: Vec<f64>) -> Result<Self, DspError> {
        if taps.is_empty() {
            return Err(DspError::InvalidParameter(
                "tap vector must have at least one coefficient".into(),
            ));
        }
        if let Some(&bad) = taps.iter().find(|t| !t.is_finite()) {
            return Err(DspError::NonFinite { value: bad });
        }
        Ok(Self { taps })
    }

    /// A unit impulse delayed by `delay` samples, `len` taps long.
    pub fn delta(len: usize, delay: usize) -> Result<Self, DspError> {
        if delay >= len {
            return Err(DspError::InvalidParameter(format!(
                "impulse delay {delay} does not fit in {len} taps"
            )));
        }
        let mut taps = vec![0.0; len];
        taps[delay] = 1.0;
        Ok(Self { taps })
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.taps
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.taps
    }

    /// Index of the first nonzero coefficient (the filter's bulk delay),
    /// or `None` for an all-zero vector.
    pub fn leading_delay(&self) -> Option<usize> {
        self.taps.iter().position(|&t| t != 0.0)
    }

    /// Euclidean norm of the coefficients.
    pub fn energy_norm(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum::<f64>().sqrt()
    }
}

/// A fixed-capacity sample history. Lag 0 is the most recent write and
/// anything older than the oldest write (or the capacity) reads as zero.
#[derive(Debug, Clone)]
pub struct DelayLine {
    buf: Vec<f64>,
    head: usize,
}

impl DelayLine {
    /// A silent line holding up to `capacity` samples of history.
    pub fn new(capacity: usize) -> Result<Self, DspError> {
        if capacity == 0 {
            return Err(DspError::InvalidParameter(
                "delay line capacity must be at least one sample".into(),
            ));
        }
        Ok(Self {
            buf: vec![0.0; capacity],
            head: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.buf.len()
    }

    /// Pushes the newest sample, evicting the oldest.
    pub fn push(&mut self, x: f64) -> Result<(), DspError> {
        if !x.is_finite() {
            return Err(DspError::NonFinite { value: x });
        }
        let cap = self.buf.len();
        self.head = (self.head + cap - 1) % cap;
        self.buf[self.head] = x;
        Ok(())
    }

    /// Overwrites the newest sample in place without shifting history.
    /// The value must already be validated as finite by the caller's path.
    pub fn set_latest(&mut self, x: f64) {
        self.buf[self.head] = x;
    }

    /// The sample written `lag` pushes ago (`lag` 0 = newest). Lags at or
    /// beyond the capacity read as zero, matching silent pre-history.
    pub fn read(&self, lag: usize) -> f64 {
        if lag >= self.buf.len() {
            return 0.0;
        }
        self.buf[(self.head + lag) % self.buf.len()]
    }

    /// Dot product of `taps` against the newest `taps.len()` samples.
    /// The ring is walked as two contiguous slices to avoid per-sample
    /// modulo arithmetic in the hot loop.
    pub fn dot(&self, taps: &[f64]) -> f64 {
        let cap = self.buf.len();
        let n = taps.len().min(cap);
        let first = (cap - self.head).min(n);
        let mut acc = 0.0;
        for (t, s) in taps[..first].iter().zip(&self.buf[self.head..self.head + first]) {
            acc += t * s;
        }
        for (t, s) in taps[first..n].iter().zip(&self.buf[..n - first]) {
            acc += t * s;
        }
        acc
    }

    /// Adds `scale * x(n - i)` into `acc[i]` for the newest `acc.len()`
    /// lags, walking the ring as two contiguous slices. Lags beyond the
    /// capacity contribute zero, matching [`DelayLine::read`]. This is the
    /// gradient-accumulation kernel of every adaptive update.
    pub fn accumulate_scaled(&self, scale: f64, acc: &mut [f64]) {
        let cap = self.buf.len();
        let n = acc.len().min(cap);
        let first = (cap - self.head).min(n);
        for (a, s) in acc[..first]
            .iter_mut()
            .zip(&self.buf[self.head..self.head + first])
        {
            *a += scale * s;
        }
        for (a, s) in acc[first..n].iter_mut().zip(&self.buf[..n - first]) {
            *a += scale * s;
        }
    }

    /// Clears the history back to silence.
    pub fn reset(&mut self) {
        self.buf.fill(0.0);
        self.head = 0;
    }
}

/// Pushes `x` into `line` and returns the filter output
/// `sum_j taps[j] * x(n - j)` for the updated history.
pub fn fir_step(taps: &TapVector, line: &mut DelayLine, x: f64) -> Result<f64, DspError> {
    if taps.len() > line.capacity() {
        return Err(DspError::ShortLine {
            needed: taps.len(),
            capacity: line.capacity(),
        });
    }
    line.push(x)?;
    Ok(line.dot(taps.as_slice()))
}

/// The newest `n` samples of `line`, most-recent-first.
pub fn tap_history(line: &DelayLine, n: usize) -> Result<Vec<f64>, DspError> {
    if n > line.capacity() {
        return Err(DspError::ShortLine {
            needed: n,
            capacity: line.capacity(),
        });
    }
    Ok((0..n).map(|lag| line.read(lag)).collect())
}
