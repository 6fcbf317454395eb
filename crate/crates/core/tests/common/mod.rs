#![allow(dead_code)]

use impact_game::market::{IntraStepMode, MarketParams, Order};
use rand::Rng;

pub const MODES: [IntraStepMode; 2] = [IntraStepMode::Sequential, IntraStepMode::Simultaneous];

/// Random schedule of `n` trades summing exactly to `q0`.
pub fn admissible<R: Rng>(rng: &mut R, q0: f64, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-0.3..0.5) * q0).collect();
    let head: f64 = v[..n - 1].iter().sum();
    v[n - 1] = q0 - head;
    v
}

pub fn all_orders(n: usize, order: Order) -> Vec<Order> {
    vec![order; n]
}

pub fn table_one() -> MarketParams {
    MarketParams::default()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
