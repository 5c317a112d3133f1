//! Analytic test functions, all minimized with optimum 0 at the origin.
//!
//! | id          | formula                                                                 | domain            |
//! |-------------|-------------------------------------------------------------------------|-------------------|
//! | `sphere`    | `Σ x_d²`                                                                | `[-5, 5]^D`       |
//! | `rastrigin` | `10 D + Σ (x_d² − 10 cos 2π x_d)`                                       | `[-5.12, 5.12]^D` |
//! | `ackley`    | `−20 exp(−0.2 √(Σ x_d² / D)) − exp(Σ cos(2π x_d) / D) + 20 + e`         | `[-32.768, 32.768]^D` |
//! | `griewank`  | `1 + Σ x_d² / 4000 − Π cos(x_d / √d)` (d counted from 1)                | `[-600, 600]^D`   |

use std::f64::consts::{E, PI};

pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn rastrigin(x: &[f64]) -> f64 {
    10.0 * x.len() as f64 + x.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum::<f64>()
}

pub fn ackley(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / n;
    let cs = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / n;
    -20.0 * (-0.2 * sq.sqrt()).exp() - cs.exp() + 20.0 + E
}

pub fn griewank(x: &[f64]) -> f64 {
    let sum = x.iter().map(|v| v * v).sum::<f64>() / 4000.0;
    let prod = x
        .iter()
        .enumerate()
        .map(|(d, v)| (v / ((d + 1) as f64).sqrt()).cos())
        .product::<f64>();
    1.0 + sum - prod
}
