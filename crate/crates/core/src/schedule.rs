//! Trading schedules: the decision variable of the game.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Per-step traded quantities for one agent. Positive sells, negative buys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule(pub Vec<f64>);

impl Schedule {
    pub fn new(v: Vec<f64>) -> Self {
        Self(v)
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Rewrites the last entry so the schedule liquidates exactly `target`.
    pub fn close_to(&mut self, target: f64) {
        if let Some((last, head)) = self.0.split_last_mut() {
            let prefix: f64 = head.iter().sum();
            *last = target - prefix;
        }
    }

    /// Remaining inventory `q[0..=N]` starting from `q0`.
    pub fn inventory_path(&self, q0: f64) -> InventoryPath {
        let mut q = Vec::with_capacity(self.0.len() + 1);
        let mut cur = q0;
        q.push(cur);
        for v in &self.0 {
            cur -= v;
            q.push(cur);
        }
        InventoryPath(q)
    }
}

impl Deref for Schedule {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Schedule {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Remaining inventory, `q[0]` initial and `q[N] = 0` for admissible paths.
#[derive(Debug, Clone, PartialEq)]
pub struct InventoryPath(pub Vec<f64>);

impl InventoryPath {
    /// `v_t = q[t-1] - q[t]`, with the last entry closed so the schedule sums
    /// to `q[0] - q[N]`.
    pub fn to_schedule(&self) -> Schedule {
        let q = &self.0;
        let mut s = Schedule(q.windows(2).map(|w| w[0] - w[1]).collect());
        if let (Some(first), Some(last)) = (q.first(), q.last()) {
            s.close_to(first - last);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulePair {
    pub first: Schedule,
    pub second: Schedule,
}

impl SchedulePair {
    pub fn new(first: Schedule, second: Schedule) -> Result<Self> {
        check_len(first.len(), second.len())?;
        Ok(Self { first, second })
    }

    pub fn swapped(&self) -> Self {
        Self {
            first: self.second.clone(),
            second: self.first.clone(),
        }
    }

    pub fn get(&self, agent: usize) -> &Schedule {
        if agent == 0 {
            &self.first
        } else {
            &self.second
        }
    }

    pub fn steps(&self) -> usize {
        self.first.len()
    }

    /// Both schedules stacked as `(v1, v2)`.
    pub fn stacked(&self) -> Vec<f64> {
        self.first
            .iter()
            .chain(self.second.iter())
            .copied()
            .collect()
    }
}

/// Constant schedule selling `q0 / N` each step, closed to sum to `q0`.
pub fn twap_schedule(q0: f64, n_steps: usize) -> Result<Schedule> {
    if n_steps == 0 {
        return Err(Error::config("n_steps", "must be >= 1"));
    }
    let mut s = Schedule(vec![q0 / n_steps as f64; n_steps]);
    s.close_to(q0);
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twap_table1() {
        let s = twap_schedule(100.0, 10).unwrap();
        assert_eq!(s.0, vec![10.0; 10]);
    }

    #[test]
    fn twap_single_step() {
        assert_eq!(twap_schedule(1.0, 1).unwrap().0, vec![1.0]);
    }

    #[test]
    fn twap_thirds_sum_exactly() {
        let s = twap_schedule(100.0, 3).unwrap();
        assert!(s.iter().all(|v| (v - 100.0 / 3.0).abs() < 1e-12));
        assert_eq!(s.total(), 100.0);
    }

    #[test]
    fn twap_zero_steps_rejected() {
        assert!(twap_schedule(100.0, 0).is_err());
    }

    #[test]
    fn inventory_round_trip() {
        let s = Schedule(vec![30.0, 20.0, 50.0]);
        let q = s.inventory_path(100.0);
        assert_eq!(q.0, vec![100.0, 70.0, 50.0, 0.0]);
        assert_eq!(q.to_schedule(), s);
    }
}
