//! Monte Carlo checks of the equilibrium property: spike perturbations of
//! the feedback control, and the auxiliary pair behind the first-order term.

mod auxiliary;
mod objective;
mod quotient;

pub use auxiliary::{
    build_auxiliary_pair, diagonal_identity_check, recursion_residuals, tracked_drift, AuxiliaryPair, DiagonalReport,
    StepStat,
};
pub use objective::{cell_estimates, conditioning_cells, evaluate_objective, CellEstimate, Objective};
pub use quotient::{
    intercept_weights, perturbation_quotient, power_check, verify_operator, PowerReport, Probe, QuotientReport,
    QuotientTerms, VerificationReport, EPSILON_LADDER, PASS_SIGMAS, POWER_SIGMAS,
};
