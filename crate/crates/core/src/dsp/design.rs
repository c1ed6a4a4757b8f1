//! Linear-phase FIR band-pass design used to shape broadband reference noise.

use super::{DspError, TapVector};
use std::f64::consts::PI;

/// Designs a windowed-sinc band-pass filter (Hamming window).
///
/// `n_taps` must be odd so the filter is symmetric about an integer center
/// (exact linear phase). The passband is `low_hz..high_hz` at sample rate
/// `fs` and both edges must sit strictly inside (0, fs/2).
pub fn design_bandpass(
    low_hz: f64,
    high_hz: f64,
    fs: f64,
    n_taps: usize,
) -> Result<TapVector, DspError> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(DspError::InvalidParameter(format!(
            "sample rate must be positive, got {fs}"
        )));
    }
    if !(low_hz.is_finite() && high_hz.is_finite()) || low_hz <= 0.0 || high_hz >= fs / 2.0 {
        return Err(DspError::InvalidParameter(format!(
            "band edges must satisfy 0 < low < high < fs/2, got {low_hz}..{high_hz} at fs {fs}"
        )));
    }
    if low_hz >= high_hz {
        return Err(DspError::InvalidParameter(format!(
            "band is empty or inverted: {low_hz}..{high_hz}"
        )));
    }
    if n_taps < 3 || n_taps % 2 == 0 {
        return Err(DspError::InvalidParameter(format!(
            "tap count must be odd and at least 3, got {n_taps}"
        )));
    }

    let center = (n_taps - 1) as f64 / 2.0;
    let wl = 2.0 * PI * low_hz / fs;
    let wh = 2.0 * PI * high_hz / fs;
    let mut taps = Vec::with_capacity(n_taps);
    for i in 0..n_taps {
        let t = i as f64 - center;
        // Difference of two low-pass sincs leaves the pass band.
        let ideal = if t == 0.0 {
            (wh - wl) / PI
        } else {
            ((wh * t).sin() - (wl * t).sin()) / (PI * t)
        };
        let window = 0.54 - 0.46 * (2.0 * PI * i as f64 / (n_taps - 1) as f64).cos();
        taps.push(ideal * window);
    }
    TapVector::new(taps)
}
