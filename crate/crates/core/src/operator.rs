use std::fmt;

use crate::process::Process;

/// Which construction produced an operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    General,
    MeanVariance,
    Hedging,
    OpenLoop,
    /// Closed form for deterministic coefficients.
    ClosedForm,
    /// Read back from a dump or built by hand.
    External,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Provenance::General => "general",
            Provenance::MeanVariance => "mean-variance",
            Provenance::Hedging => "hedging",
            Provenance::OpenLoop => "open-loop",
            Provenance::ClosedForm => "closed-form",
            Provenance::External => "external",
        };
        f.write_str(s)
    }
}

/// Feedback law `u = theta * X + phi`.
#[derive(Clone, Debug)]
pub struct EquilibriumOperator {
    pub theta: Process,
    pub phi: Process,
    pub provenance: Provenance,
}

impl EquilibriumOperator {
    pub fn new(theta: Process, phi: Process, provenance: Provenance) -> Self {
        EquilibriumOperator {
            theta,
            phi,
            provenance,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.all_finite() && self.phi.all_finite()
    }

    /// Same operator with `phi` multiplied by `factor`.
    pub fn with_scaled_phi(&self, factor: f64) -> Self {
        EquilibriumOperator {
            theta: self.theta.clone(),
            phi: self.phi.map(|v| v * factor),
            provenance: Provenance::External,
        }
    }
}
