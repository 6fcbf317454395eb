//! Classification of shortfall pairs relative to the Nash and Pareto points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quadrants are taken around the Nash shortfall point with agent 1's cost on
/// the x-axis. Boundaries belong to the better region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EquilibriumRegion {
    /// Both agents pay more than at Nash.
    Q1,
    /// Agent 1 better off, agent 2 worse: agent 1 predatory.
    Q2,
    /// Both agents better off, outside the collusive rectangle.
    Q3,
    /// Agent 2 better off, agent 1 worse: agent 2 predatory.
    Q4,
    /// Between the Pareto optimum and the Nash point for both agents.
    Collusive,
}

impl EquilibriumRegion {
    pub const ALL: [EquilibriumRegion; 5] = [
        EquilibriumRegion::Q1,
        EquilibriumRegion::Q2,
        EquilibriumRegion::Q3,
        EquilibriumRegion::Q4,
        EquilibriumRegion::Collusive,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EquilibriumRegion::Q1 => "Q1",
            EquilibriumRegion::Q2 => "Q2",
            EquilibriumRegion::Q3 => "Q3",
            EquilibriumRegion::Q4 => "Q4",
            EquilibriumRegion::Collusive => "collusive",
        }
    }

    pub fn is_predatory(self) -> bool {
        matches!(self, EquilibriumRegion::Q2 | EquilibriumRegion::Q4)
    }
}

impl std::fmt::Display for EquilibriumRegion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

pub fn classify_point(
    is: (f64, f64),
    nash_is: (f64, f64),
    pareto_is: (f64, f64),
) -> Result<EquilibriumRegion> {
    if !(pareto_is.0 <= nash_is.0 && pareto_is.1 <= nash_is.1) {
        return Err(Error::config(
            "references",
            format!("Pareto point {pareto_is:?} must not exceed Nash point {nash_is:?}"),
        ));
    }
    let better1 = is.0 <= nash_is.0;
    let better2 = is.1 <= nash_is.1;
    Ok(match (better1, better2) {
        (true, true) if is.0 >= pareto_is.0 && is.1 >= pareto_is.1 => EquilibriumRegion::Collusive,
        (true, true) => EquilibriumRegion::Q3,
        (true, false) => EquilibriumRegion::Q2,
        (false, true) => EquilibriumRegion::Q4,
        (false, false) => EquilibriumRegion::Q1,
    })
}

/// Component-wise mean.
pub fn centroid(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.is_empty() {
        return Err(Error::EmptyInput("centroid of no points"));
    }
    let n = points.len() as f64;
    let (a, b) = points
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    Ok((a / n, b / n))
}
