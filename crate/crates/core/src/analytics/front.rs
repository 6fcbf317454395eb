//! Pareto front of the two expected-shortfall objectives by weighted-sum
//! scalarisation, and the Fritz-John determinant test for front membership.
//!
//! Each objective is a quadratic form in the stacked schedules but is not
//! jointly convex: the bilinear cross-impact terms make `EIS_k` indefinite in
//! `(v1, v2)`. The scalarised objective `w EIS1 + (1 - w) EIS2` is strictly
//! convex on the admissible set only for `w` in an interval around 1/2;
//! outside it the objective is unbounded below and no front point exists for
//! that weight.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::cost::{expected_is, QuadraticCostModel};
use crate::error::{Error, Result};
use crate::schedule::{Schedule, SchedulePair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFrontPoint {
    pub weight: f64,
    pub schedules: SchedulePair,
    pub eis: (f64, f64),
}

/// Default number of weights on the front grid.
pub const FRONT_GRID_SIZE: usize = 101;

fn scalarised_hessian(model: &QuadraticCostModel, n: usize, w: f64) -> DMatrix<f64> {
    model.hessian(n, 0) * w + model.hessian(n, 1) * (1.0 - w)
}

/// Hessian projected on sum-preserving directions of both schedules.
fn reduced(q: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let dim = 2 * (n - 1);
    let mut basis = DMatrix::zeros(2 * n, dim);
    for block in 0..2 {
        for i in 0..n - 1 {
            let col = block * (n - 1) + i;
            basis[(block * n + i, col)] = 1.0;
            basis[(block * n + n - 1, col)] = -1.0;
        }
    }
    basis.transpose() * q * basis
}

/// True when `w EIS1 + (1 - w) EIS2` is strictly convex on admissible pairs.
pub fn has_minimiser(model: &QuadraticCostModel, n: usize, w: f64) -> bool {
    if n <= 1 {
        return true;
    }
    reduced(&scalarised_hessian(model, n, w), n)
        .cholesky()
        .is_some()
}

/// Closed interval of weights with a strictly convex scalarisation, found by
/// bisection. The model is symmetric in the agents, so the interval is
/// symmetric about 1/2.
pub fn convex_weight_range(model: &QuadraticCostModel, n: usize) -> Result<(f64, f64)> {
    if !has_minimiser(model, n, 0.5) {
        return Err(Error::Singular(
            "joint cost is not strictly convex on admissible schedules".into(),
        ));
    }
    if has_minimiser(model, n, 0.0) {
        return Ok((0.0, 1.0));
    }
    let (mut bad, mut good) = (0.0_f64, 0.5_f64);
    for _ in 0..64 {
        let mid = 0.5 * (bad + good);
        if has_minimiser(model, n, mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Ok((good, 1.0 - good))
}

/// `count` uniformly spaced weights (odd `count` puts one exactly at 1/2),
/// covering the convex interval shrunk by 10% toward 1/2.
pub fn default_weight_grid(model: &QuadraticCostModel, n: usize, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::EmptyInput("weight grid"));
    }
    if count == 1 {
        return Ok(vec![0.5]);
    }
    let (lo, _) = convex_weight_range(model, n)?;
    let lo = lo.max(1e-6);
    let half_width = 0.9 * (0.5 - lo);
    let mid = (count - 1) as f64 / 2.0;
    Ok((0..count)
        .map(|i| 0.5 + (i as f64 - mid) / mid * half_width)
        .collect())
}

/// Minimiser of `w EIS1 + (1 - w) EIS2` subject to both liquidation constraints.
pub fn scalarised_optimum(
    model: &QuadraticCostModel,
    n: usize,
    endowments: (f64, f64),
    w: f64,
) -> Result<ParetoFrontPoint> {
    if !(w > 0.0 && w < 1.0) {
        return Err(Error::config(
            "weights",
            format!("weight {w} outside (0, 1)"),
        ));
    }
    if !has_minimiser(model, n, w) {
        return Err(Error::Singular(format!(
            "weighted cost with w = {w} is unbounded below on admissible schedules"
        )));
    }
    let q = scalarised_hessian(model, n, w);
    let dim = 2 * n + 2;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (2 * n, 2 * n)).copy_from(&q);
    for t in 0..n {
        for (agent, row) in [(0, 2 * n), (1, 2 * n + 1)] {
            kkt[(row, agent * n + t)] = 1.0;
            kkt[(agent * n + t, row)] = 1.0;
        }
    }
    let mut rhs = DVector::zeros(dim);
    rhs[2 * n] = endowments.0;
    rhs[2 * n + 1] = endowments.1;
    let x = kkt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular(format!("scalarised system singular at w = {w}")))?;
    let mut first = Schedule(x.rows(0, n).iter().copied().collect());
    let mut second = Schedule(x.rows(n, n).iter().copied().collect());
    first.close_to(endowments.0);
    second.close_to(endowments.1);
    let eis = expected_is(model, &first, &second)?;
    Ok(ParetoFrontPoint {
        weight: w,
        schedules: SchedulePair::new(first, second)?,
        eis,
    })
}

/// One front point per weight, then filtered to the non-dominated subset.
pub fn pareto_front(
    model: &QuadraticCostModel,
    n: usize,
    endowments: (f64, f64),
    weights: &[f64],
) -> Result<Vec<ParetoFrontPoint>> {
    if weights.is_empty() {
        return Err(Error::EmptyInput("weight grid"));
    }
    let points = weights
        .iter()
        .map(|&w| scalarised_optimum(model, n, endowments, w))
        .collect::<Result<Vec<_>>>()?;
    let costs: Vec<(f64, f64)> = points.iter().map(|p| p.eis).collect();
    Ok(points
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !costs.iter().any(|c| dominates(*c, costs[*i])))
        .map(|(_, p)| p)
        .collect())
}

/// `a` weakly better in both costs and strictly better in one.
pub fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1)
}

/// `det(L' L)` for the Fritz-John matrix
///
/// ```text
/// L = [ grad EIS1   grad EIS2   grad g1   grad g2 ]
///     [    0           0        g1(v)      0      ]
///     [    0           0          0       g2(v)   ]
/// ```
///
/// with each column scaled to unit length, so the value is the squared volume
/// spanned by the normalised columns: 1 for orthogonal columns, 0 when a
/// non-trivial multiplier vector exists. Zero columns give 0.
pub fn fritz_john_residual(
    model: &QuadraticCostModel,
    pair: &SchedulePair,
    endowments: (f64, f64),
) -> Result<f64> {
    let n = pair.steps();
    let x = DVector::from_vec(pair.stacked());
    let rows = 2 * n + 2;
    let mut l = DMatrix::zeros(rows, 4);
    for agent in 0..2 {
        let grad = model.hessian(n, agent) * &x;
        l.view_mut((0, agent), (2 * n, 1)).copy_from(&grad);
        for t in 0..n {
            l[(agent * n + t, 2 + agent)] = 1.0;
        }
    }
    l[(2 * n, 2)] = pair.first.total() - endowments.0;
    l[(2 * n + 1, 3)] = pair.second.total() - endowments.1;
    for mut col in l.column_iter_mut() {
        let norm = col.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        col /= norm;
    }
    Ok((l.transpose() * l).determinant())
}
