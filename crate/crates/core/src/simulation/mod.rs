//! Monte-Carlo engine for the favorable superpopulation model: design
//! sensitivities, power curves, and numerical checks of the theory.

mod checks;
mod generative;
mod limits;
mod power;

pub use checks::{
    bounds_check, dominance_check_prop6, eta_j_curve, pathological_fixture,
    pathological_moments, DominanceGenerator, DominanceResult, EtaJRow, PathologicalMoments,
    LimitBounds,
};
pub use generative::{simulate_study, simulate_table, AlphaPolicy, ErrorFamily, GenerativeSpec};
pub use limits::{
    comparison_heuristic, design_cell, design_sensitivity_conventional, design_sensitivity_tilted,
    estimate_limits, DesignCell, DesignSensitivity, Estimate, Heuristic, LimitEstimates,
    MGammaPoint, CONVENTIONAL_GAMMA_MAX,
};
pub use power::{power_curve, power_curve_with_progress, PowerRow, PowerTable};
