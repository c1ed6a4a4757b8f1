//! Per-sample arithmetic cost of each control algorithm.
//!
//! Counts the real multiplications and additions one node performs during a
//! single sample tick: reference filtering, control output, gradient work,
//! and (where applicable) message combination. Counts are closed-form in the
//! system dimensions, so they serve as an exact cost model rather than a
//! benchmark.

use crate::analysis::AnalysisError;

/// Dimensions that determine per-sample cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystemDims {
    /// Number of nodes (one loudspeaker + one error microphone each).
    pub nodes: usize,
    /// Control filter taps per node.
    pub control_taps: usize,
    /// Secondary-path model taps.
    pub path_taps: usize,
    /// Gradient history depth kept per peer.
    pub history: usize,
}

impl SystemDims {
    /// Validates that every dimension is non-zero and that the gradient
    /// history fits inside the control filter length.
    pub fn new(
        nodes: usize,
        control_taps: usize,
        path_taps: usize,
        history: usize,
    ) -> Result<Self, AnalysisError> {
        if nodes == 0 || control_taps == 0 || path_taps == 0 || history == 0 {
            return Err(AnalysisError::Parameter(
                "system dimensions must all be non-zero".into(),
            ));
        }
        if history > control_taps {
            return Err(AnalysisError::Parameter(format!(
                "gradient history {history} exceeds control filter length {control_taps}"
            )));
        }
        Ok(Self {
            nodes,
            control_taps,
            path_taps,
            history,
        })
    }
}

/// Control algorithms covered by the cost model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Centralized multichannel filtered-reference LMS.
    Centralized,
    /// Decentralized single-channel filtered-reference LMS per node.
    Decentralized,
    /// Diffusion-based distributed FxLMS (adapt-then-combine).
    Diffusion,
    /// Mixed-gradient distributed FxLMS with compensation filters.
    MixedGradient,
    /// Mixed-gradient variant with the auto-shrink step size.
    MixedGradientAutoShrink,
}

impl Algorithm {
    /// All algorithms in presentation order.
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Centralized,
        Algorithm::Decentralized,
        Algorithm::Diffusion,
        Algorithm::MixedGradient,
        Algorithm::MixedGradientAutoShrink,
    ];

    /// Human-readable name used in reports.
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Centralized => "centralized-mcfxlms",
            Algorithm::Decentralized => "decentralized-fxlms",
            Algorithm::Diffusion => "diffusion-dfxlms",
            Algorithm::MixedGradient => "mixed-gradient-dfxlms",
            Algorithm::MixedGradientAutoShrink => "mixed-gradient-auto-shrink",
        }
    }
}

/// Exact per-sample operation counts for one algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComplexityRow {
    pub algorithm: Algorithm,
    pub multiplications: u64,
    pub additions: u64,
}

/// Computes the per-sample cost of `algorithm` at dimensions `dims`.
///
/// The centralized count is for the whole system (one processor serves all
/// nodes); the distributed counts are per node. The addition count for the
/// centralized algorithm follows from summing its update terms directly:
/// `K²(N + L − 1) + K(N − 1)`.
pub fn complexity_row(algorithm: Algorithm, dims: SystemDims) -> ComplexityRow {
    // Signed arithmetic: the history-dependent terms go negative for short
    // histories (H < 3) before the surrounding positives absorb them.
    let k = dims.nodes as i64;
    let n = dims.control_taps as i64;
    let l = dims.path_taps as i64;
    let h = dims.history as i64;

    let (multiplications, additions) = match algorithm {
        // K² reference filterings (L each) plus K outputs (N each) plus
        // K² gradient scalings and updates (2N each).
        Algorithm::Centralized => (k * k * (2 * n + l) + k * n, k * k * (n + l - 1) + k * (n - 1)),
        // One reference filtering, one output, one local gradient and update.
        Algorithm::Decentralized => ((k + 3) * n + l, (k + 1) * n + l - 2),
        // Decentralized work plus a K-wide weighted combination of length-N
        // filters each sample.
        Algorithm::Diffusion => ((k + 1) * (k + 1) * n + k * l, (k * k + 1) * n + k * (l - 1) - 1),
        // Local work plus translating each peer's latest gradient through an
        // H-tap compensation filter along the tap axis; the triangular tail
        // (taps within H of the end see fewer terms) gives the -H(H-3) term.
        Algorithm::MixedGradient => (
            l + (3 + h) * n - h * (h - 3) - 2,
            (k + 1) * n + l + (h - 1) * (n - h + 1) - 2,
        ),
        // Mixed-gradient cost plus the exponential step-size rescale: one
        // exp-argument product and one scaling, i.e. two extra
        // multiplications and no extra additions.
        Algorithm::MixedGradientAutoShrink => (
            l + (3 + h) * n - h * (h - 3),
            (k + 1) * n + l + (h - 1) * (n - h + 1) - 2,
        ),
    };

    ComplexityRow {
        algorithm,
        multiplications: multiplications as u64,
        additions: additions as u64,
    }
}

/// Computes the full cost table in presentation order.
pub fn complexity_table(dims: SystemDims) -> Vec<ComplexityRow> {
    Algorithm::ALL
        .iter()
        .map(|&algorithm| complexity_row(algorithm, dims))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_dims() -> SystemDims {
        SystemDims::new(6, 512, 256, 33).unwrap()
    }

    #[test]
    fn test_centralized_counts_at_reference_dims() {
        let row = complexity_row(Algorithm::Centralized, reference_dims());
        assert_eq!(row.multiplications, 49_152);
        assert_eq!(row.additions, 30_678);
    }

    #[test]
    fn test_decentralized_counts_at_reference_dims() {
        let row = complexity_row(Algorithm::Decentralized, reference_dims());
        assert_eq!(row.multiplications, 4_864);
        assert_eq!(row.additions, 3_838);
    }

    #[test]
    fn test_diffusion_counts_at_reference_dims() {
        let row = complexity_row(Algorithm::Diffusion, reference_dims());
        assert_eq!(row.multiplications, 26_624);
        assert_eq!(row.additions, 20_473);
    }

    #[test]
    fn test_mixed_gradient_counts_at_reference_dims() {
        let row = complexity_row(Algorithm::MixedGradient, reference_dims());
        assert_eq!(row.multiplications, 17_696);
        assert_eq!(row.additions, 19_198);
    }

    #[test]
    fn test_auto_shrink_adds_two_multiplications() {
        let dims = reference_dims();
        let base = complexity_row(Algorithm::MixedGradient, dims);
        let asss = complexity_row(Algorithm::MixedGradientAutoShrink, dims);
        assert_eq!(asss.multiplications, base.multiplications + 2);
        assert_eq!(asss.multiplications, 17_698);
        assert_eq!(asss.additions, base.additions);
    }

    #[test]
    fn test_single_node_centralized_reduces_to_one_channel() {
        let dims = SystemDims::new(1, 64, 32, 8).unwrap();
        let row = complexity_row(Algorithm::Centralized, dims);
        // One filtering (L), one output (N), one gradient scale + update (2N).
        assert_eq!(row.multiplications, (2 * 64 + 32) + 64);
        assert_eq!(row.additions, (64 + 32 - 1) + 63);
    }

    #[test]
    fn test_table_covers_all_algorithms_in_order() {
        let table = complexity_table(reference_dims());
        assert_eq!(table.len(), 5);
        for (row, &algorithm) in table.iter().zip(Algorithm::ALL.iter()) {
            assert_eq!(row.algorithm, algorithm);
            assert_eq!(*row, complexity_row(algorithm, reference_dims()));
        }
    }

    #[test]
    fn test_dims_validation() {
        assert!(SystemDims::new(0, 512, 256, 33).is_err());
        assert!(SystemDims::new(6, 0, 256, 33).is_err());
        assert!(SystemDims::new(6, 512, 0, 33).is_err());
        assert!(SystemDims::new(6, 512, 256, 0).is_err());
        assert!(SystemDims::new(6, 32, 256, 33).is_err());
    }

    #[test]
    fn test_short_histories_stay_well_defined() {
        // The -H(H-3) tail correction is positive below H = 3; the counts
        // must not wrap. At H = 1 the mixed-gradient scheme degenerates to
        // plain scalar rebroadcasting: L + 4N mults for the fixed step.
        for h in 1..=3 {
            let dims = SystemDims::new(4, 128, 64, h).unwrap();
            let table = complexity_table(dims);
            for row in &table {
                assert!(row.multiplications < 1 << 40, "{row:?} wrapped");
                assert!(row.additions < 1 << 40, "{row:?} wrapped");
            }
        }
        let h1 = complexity_row(
            Algorithm::MixedGradient,
            SystemDims::new(4, 128, 64, 1).unwrap(),
        );
        assert_eq!(h1.multiplications, 64 + 4 * 128);
        assert_eq!(h1.additions, 5 * 128 + 64 - 2);
    }
}
