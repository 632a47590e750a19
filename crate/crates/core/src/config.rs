//! Numerical tolerances and sampling budgets.
//!
//! Every threshold used by a verification routine lives here with its
//! default; manifests may override any field.

use serde::{Deserialize, Serialize};

/// Absolute tolerances for the verification routines.
///
/// All default to `1e-9` absolute unless a tighter or looser value is part
/// of an operation's contract (state normalization at `1e-12`, eigenvector
/// residuals at `1e-8` relative).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Generic absolute tolerance for certified inequalities.
    pub cert: f64,
    /// Metric-axiom validation slack (symmetry, triangle inequality).
    pub metric: f64,
    /// State normalization slack.
    pub state: f64,
    /// Gram-matrix defect allowed for an orthonormal eigenbasis.
    pub gram: f64,
    /// Eigenpair residual scale: `|D e - lambda e| <= eigen_residual * (1 + |lambda|)`.
    pub eigen_residual: f64,
    /// Self-adjointness defect allowed for operator input.
    pub self_adjoint: f64,
    /// Overlap margin below which a branch matching is reported ambiguous.
    pub ambiguity: f64,
    /// Relative gap under which eigenvalues are treated as one degenerate cluster.
    pub cluster_rel: f64,
    /// Spectral collision slack for truncation thresholds.
    pub collision: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            cert: 1e-9,
            metric: 1e-9,
            state: 1e-12,
            gram: 1e-9,
            eigen_residual: 1e-8,
            self_adjoint: 1e-10,
            ambiguity: 1e-6,
            cluster_rel: 1e-10,
            collision: 1e-9,
        }
    }
}

/// Declared per-step continuity moduli for tracked branches.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ContinuityModuli {
    /// Allowed `||e_n(t_{k+1}) - e_n(t_k)||` per grid step.
    pub vector_per_step: f64,
    /// Allowed `|lambda_n(t_{k+1}) - lambda_n(t_k)| / (1 + |lambda_n(t_k)|)` per grid step.
    pub lambda_rel_per_step: f64,
}

impl Default for ContinuityModuli {
    fn default() -> Self {
        Self {
            vector_per_step: 0.9,
            lambda_rel_per_step: 0.5,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_positive() {
        let tol = Tolerances::default();
        for v in [
            tol.cert,
            tol.metric,
            tol.state,
            tol.gram,
            tol.eigen_residual,
            tol.self_adjoint,
            tol.ambiguity,
            tol.cluster_rel,
            tol.collision,
        ] {
            assert!(v > 0.0);
        }
    }

    #[test]
    fn state_tolerance_is_tighter_than_cert() {
        let tol = Tolerances::default();
        assert!(tol.state < tol.cert);
    }
}
