//! Closed-form and numerical references for the two-agent game: Nash
//! equilibrium, TWAP Pareto optimum, the exact expected-cost model, the
//! Pareto front and region classification.

pub mod cost;
pub mod front;
pub mod nash;
pub mod region;

pub use crate::schedule::twap_schedule;
pub use cost::{
    best_response, discrete_nash_schedule, expected_is, joint_cost, realized_is, QuadraticCostModel,
};
pub use front::{
    convex_weight_range, default_weight_grid, dominates, fritz_john_residual, pareto_front,
    ParetoFrontPoint, FRONT_GRID_SIZE,
};
pub use nash::{nash_inventory, nash_paths, nash_schedule, NashInputs};
pub use region::{centroid, classify_point, EquilibriumRegion};
