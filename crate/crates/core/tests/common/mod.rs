//! Independent numerical oracles shared by the integration tests. Nothing
//! here calls into the closed forms it is used to check.

#![allow(dead_code, clippy::too_many_arguments)]

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [-1, 1] (Newton iteration on P_n).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre grid on [a, b]: (points, weights).
pub fn composite_grid(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (nodes, weights) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut xs = Vec::with_capacity(panels * order);
    let mut ws = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (x, w) in nodes.iter().zip(&weights) {
            xs.push(mid + 0.5 * h * x);
            ws.push(0.5 * h * w);
        }
    }
    (xs, ws)
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

fn axis_grid(ma: f64, va: f64, mb: f64, vb: f64) -> (Vec<f64>, Vec<f64>) {
    let sd_max = va.max(vb).sqrt();
    let sd_min = va.min(vb).sqrt();
    let lo = ma.min(mb) - 14.0 * sd_max;
    let hi = ma.max(mb) + 14.0 * sd_max;
    let panels = ((hi - lo) / (0.5 * sd_min)).ceil() as usize;
    composite_grid(lo, hi, panels.max(8), 12)
}

/// `-ln ∫ sqrt(p q) dx` for 1-D Gaussians by quadrature.
pub fn bhattacharyya_1d(ma: f64, va: f64, mb: f64, vb: f64) -> f64 {
    let (xs, ws) = axis_grid(ma, va, mb, vb);
    let coeff: f64 = xs
        .iter()
        .zip(&ws)
        .map(|(&x, w)| w * (normal_pdf(x, ma, va) * normal_pdf(x, mb, vb)).sqrt())
        .sum();
    -coeff.ln()
}

/// `-ln ∬ sqrt(p q) dx dy` for 2-D diagonal Gaussians on a full tensor grid.
pub fn bhattacharyya_2d(ma: [f64; 2], va: [f64; 2], mb: [f64; 2], vb: [f64; 2]) -> f64 {
    let (xs, wx) = axis_grid(ma[0], va[0], mb[0], vb[0]);
    let (ys, wy) = axis_grid(ma[1], va[1], mb[1], vb[1]);
    let pa_y: Vec<f64> = ys.iter().map(|&y| normal_pdf(y, ma[1], va[1])).collect();
    let pb_y: Vec<f64> = ys.iter().map(|&y| normal_pdf(y, mb[1], vb[1])).collect();
    let mut coeff = 0.0;
    for (&x, &w1) in xs.iter().zip(&wx) {
        let pa_x = normal_pdf(x, ma[0], va[0]);
        let pb_x = normal_pdf(x, mb[0], vb[0]);
        let mut row = 0.0;
        for j in 0..ys.len() {
            row += wy[j] * (pa_x * pa_y[j] * pb_x * pb_y[j]).sqrt();
        }
        coeff += w1 * row;
    }
    -coeff.ln()
}

/// Physicists' Gauss–Hermite rule via the Golub–Welsch-free recurrence +
/// Newton iteration; integrates `∫ e^{-x²} g(x) dx`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = PI.powf(-0.25);
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / j as f64).sqrt() * p2 - ((j - 1) as f64 / j as f64).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    (nodes, weights)
}

/// `E[f(X)]` for `X ~ N(mean, var)` by Gauss–Hermite quadrature.
pub fn gaussian_expectation(f: impl Fn(f64) -> f64, mean: f64, var: f64, n: usize) -> f64 {
    let (nodes, weights) = gauss_hermite(n);
    let s = (2.0 * var).sqrt();
    nodes.iter().zip(&weights).map(|(x, w)| w * f(mean + s * x)).sum::<f64>() / PI.sqrt()
}

/// Central finite difference of `f` at `x` with step `h`.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub fn relative_error(approx: &[f64], exact: &[f64]) -> f64 {
    let diff: f64 = approx.iter().zip(exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = exact.iter().map(|b| b * b).sum::<f64>().sqrt();
    if norm == 0.0 { diff } else { diff / norm }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) }
}

/// Minimal single-process separable NES written from the update equations,
/// sharing only the random-stream addressing and the objective with the
/// library. Returns (mean, variance) after each of `iterations` generations.
pub fn reference_separable_nes(
    f: fn(&[f64]) -> f64,
    minimize: bool,
    seed: u64,
    lower: &[f64],
    upper: &[f64],
    mu: usize,
    eta_m_init: f64,
    eta_v_init: f64,
    iterations: usize,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    use ncnes_core::stream::{Purpose, StreamId};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::E;

    let dim = lower.len();
    let t_max = (iterations * mu) as u64;
    let mut init = StreamId::new(seed, Purpose::Init).process(0).rng();
    let mut m: Vec<f64> = (0..dim).map(|d| init.random_range(lower[d]..upper[d])).collect();
    let mut v: Vec<f64> = (0..dim).map(|d| ((upper[d] - lower[d]) / 4.0).powi(2)).collect();
    let mut out = Vec::new();
    for g in 0..iterations {
        let frac = (g * mu) as f64 / t_max as f64;
        let eta_m = eta_m_init * (E - frac.exp()) / (E - 1.0);
        let eta_v = eta_v_init * (E - frac.exp()) / (E - 1.0);
        let xs: Vec<Vec<f64>> = (0..mu)
            .map(|k| {
                let mut rng = StreamId::new(seed, Purpose::Sample).iteration(g as u64).sample(k).rng();
                (0..dim)
                    .map(|d| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        m[d] + v[d].sqrt() * z
                    })
                    .collect()
            })
            .collect();
        let fs: Vec<f64> = xs.iter().map(|x| f(x)).collect();
        let mut order: Vec<usize> = (0..mu).collect();
        if minimize {
            order.sort_by(|&a, &b| fs[a].total_cmp(&fs[b]));
        } else {
            order.sort_by(|&a, &b| fs[b].total_cmp(&fs[a]));
        }
        let head = (mu as f64 / 2.0 + 1.0).ln();
        let raw: Vec<f64> = (1..=mu).map(|r| (head - (r as f64).ln()).max(0.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut u = vec![0.0; mu];
        for (r, &k) in order.iter().enumerate() {
            u[k] = raw[r] / total - 1.0 / mu as f64;
        }
        for d in 0..dim {
            let (mut gm, mut gv, mut fm, mut fv) = (0.0, 0.0, 0.0, 0.0);
            for k in 0..mu {
                let dx = xs[k][d] - m[d];
                gm += dx / v[d] * u[k];
                gv += (dx * dx / (2.0 * v[d] * v[d]) - 1.0 / (2.0 * v[d])) * u[k];
                let z2 = dx * dx / (v[d] * v[d]);
                fm += z2;
                fv += (z2 - 1.0 / v[d]) * (z2 - 1.0 / v[d]);
            }
            gm /= mu as f64;
            gv /= mu as f64;
            fm = (fm / mu as f64).max(1e-10);
            fv = (fv / (4.0 * mu as f64)).max(1e-10);
            m[d] += eta_m * gm / fm;
            v[d] = (v[d] + eta_v * gv / fv).max(1e-8);
        }
        out.push((m.clone(), v.clone()));
    }
    out
}
