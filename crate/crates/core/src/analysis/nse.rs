//! Noise-suppression error: residual power relative to disturbance power,
//! in decibels. Negative values mean the control loop is helping; zero
//! means it does nothing; positive means it is amplifying.

use super::AnalysisError;

/// `10 log10(sum e^2 / sum d^2)` over paired slices.
///
/// Returns negative infinity for a perfectly cancelled (all-zero) residual,
/// and an error when the disturbance itself carries no power — the ratio is
/// meaningless without a baseline.
pub fn nse_db(e: &[f64], d: &[f64]) -> Result<f64, AnalysisError> {
    if e.len() != d.len() || e.is_empty() {
        return Err(AnalysisError::Dimension(format!(
            "nse needs equal non-empty slices, got {} and {}",
            e.len(),
            d.len()
        )));
    }
    let ep: f64 = e.iter().map(|v| v * v).sum();
    let dp: f64 = d.iter().map(|v| v * v).sum();
    if !(ep.is_finite() && dp.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    if dp == 0.0 {
        return Err(AnalysisError::SilentBaseline);
    }
    Ok(10.0 * (ep / dp).log10())
}

/// Per-sample trailing-window noise-suppression curve.
///
/// Entry `n` is [`nse_db`] over the last `window` samples ending at `n`
/// (fewer at the start, while the window fills). Samples where the window's
/// disturbance power is zero yield `None`.
#[derive(Debug, Clone)]
pub struct NseTrace {
    pub window: usize,
    pub values: Vec<Option<f64>>,
}

/// Computes the trailing-window suppression curve for one node.
pub fn nse_trace(e: &[f64], d: &[f64], window: usize) -> Result<NseTrace, AnalysisError> {
    if window == 0 {
        return Err(AnalysisError::Dimension("window must be positive".into()));
    }
    if e.len() != d.len() {
        return Err(AnalysisError::Dimension(format!(
            "nse trace needs equal slices, got {} and {}",
            e.len(),
            d.len()
        )));
    }
    let mut values = Vec::with_capacity(e.len());
    let mut ep = 0.0f64;
    let mut dp = 0.0f64;
    for n in 0..e.len() {
        ep += e[n] * e[n];
        dp += d[n] * d[n];
        if n >= window {
            ep -= e[n - window] * e[n - window];
            dp -= d[n - window] * d[n - window];
        }
        // Running subtraction can leave tiny negative dust; clamp it.
        ep = ep.max(0.0);
        dp = dp.max(0.0);
        if !(ep.is_finite() && dp.is_finite()) {
            return Err(AnalysisError::NonFinite);
        }
        values.push(if dp == 0.0 {
            None
        } else {
            Some(10.0 * (ep / dp).log10())
        });
    }
    Ok(NseTrace { window, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_equal_signals_give_zero_db() {
        let d = vec![1.0, -2.0, 0.5, 3.0];
        assert_eq!(nse_db(&d, &d).unwrap(), 0.0);
    }

    #[test]
    fn test_tenfold_power_reduction_is_minus_ten_db() {
        let d = vec![1.0; 100];
        let e = vec![0.1f64.sqrt(); 100];
        let db = nse_db(&e, &d).unwrap();
        assert!((db + 10.0).abs() < 1e-12, "got {db}");
    }

    #[test]
    fn test_perfect_cancellation_is_negative_infinity() {
        let d = vec![1.0, 2.0];
        let e = vec![0.0, 0.0];
        assert_eq!(nse_db(&e, &d).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn test_silent_disturbance_is_an_error() {
        assert!(matches!(
            nse_db(&[1.0], &[0.0]),
            Err(AnalysisError::SilentBaseline)
        ));
        assert!(nse_db(&[], &[]).is_err());
        assert!(nse_db(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn test_trace_matches_direct_windows() {
        let e: Vec<f64> = (0..50).map(|i| ((i * 7 % 13) as f64 - 6.0) * 0.2).collect();
        let d: Vec<f64> = (0..50).map(|i| ((i * 5 % 11) as f64 - 5.0) * 0.3 + 0.1).collect();
        let w = 8;
        let trace = nse_trace(&e, &d, w).unwrap();
        assert_eq!(trace.values.len(), 50);
        for n in 0..50usize {
            let start = (n + 1).saturating_sub(w);
            let direct = nse_db(&e[start..=n], &d[start..=n]).unwrap();
            let got = trace.values[n].unwrap();
            assert!(
                (got - direct).abs() < 1e-9,
                "window ending at {n}: trace {got} vs direct {direct}"
            );
        }
    }

    #[test]
    fn test_trace_flags_silent_windows() {
        let e = vec![1.0; 10];
        let mut d = vec![0.0; 10];
        d[9] = 1.0;
        let trace = nse_trace(&e, &d, 3).unwrap();
        assert!(trace.values[5].is_none(), "silent window must yield no value");
        assert!(trace.values[9].is_some());
    }
}
