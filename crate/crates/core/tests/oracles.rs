mod common;

use ncnes_core::gaussian::{bhattacharyya, diversity_value};
use ncnes_core::gradient::{fisher, fitness_grad, Utilities};
use ncnes_core::stream::{Purpose, StreamId};
use ncnes_core::{SampleBatch, SearchDistribution};

use common::*;

fn one_d(mean: f64, var: f64) -> SearchDistribution {
    SearchDistribution::new(vec![mean], vec![var]).unwrap()
}

#[test]
fn quadrature_oracle_recovers_known_distances() {
    assert!((bhattacharyya_1d(0.0, 1.0, 2.0, 1.0) - 0.5).abs() < 1e-12);
    assert!((bhattacharyya_1d(0.0, 1.0, 0.0, 4.0) - 0.5 * (2.5f64 / 2.0).ln()).abs() < 1e-12);
    assert!(bhattacharyya_1d(1.0, 2.0, 1.0, 2.0).abs() < 1e-12);
}

#[test]
fn closed_form_examples_agree_with_quadrature() {
    let cases = [(0.0, 1.0, 2.0, 1.0), (0.0, 1.0, 0.0, 4.0), (-1.5, 0.2, 3.0, 7.0)];
    for (ma, va, mb, vb) in cases {
        let closed = bhattacharyya(&one_d(ma, va), &one_d(mb, vb)).unwrap();
        let oracle = bhattacharyya_1d(ma, va, mb, vb);
        assert!((closed - oracle).abs() <= 1e-9 * oracle.max(1e-300), "{closed} vs {oracle}");
    }
    let a = SearchDistribution::new(vec![0.0, 1.0], vec![1.0, 0.5]).unwrap();
    let b = SearchDistribution::new(vec![2.0, -1.0], vec![3.0, 0.25]).unwrap();
    let oracle = bhattacharyya_2d([0.0, 1.0], [1.0, 0.5], [2.0, -1.0], [3.0, 0.25]);
    let closed = bhattacharyya(&a, &b).unwrap();
    assert!((closed - oracle).abs() <= 1e-9 * oracle);
}

#[test]
fn three_process_diversity_matches_quadrature_sum() {
    let dists = vec![one_d(0.0, 1.0), one_d(2.0, 1.0), one_d(4.0, 1.0)];
    let oracle = bhattacharyya_1d(0.0, 1.0, 2.0, 1.0) + bhattacharyya_1d(0.0, 1.0, 4.0, 1.0);
    let value = diversity_value(0, &dists).unwrap();
    assert!((value - 2.5).abs() < 1e-12);
    assert!((value - oracle).abs() < 1e-9);
}

#[test]
fn gauss_hermite_is_exact_on_polynomials() {
    // E[x^2] = m^2 + v, E[x^4] = m^4 + 6 m^2 v + 3 v^2
    let (m, v) = (0.7, 2.3);
    assert!((gaussian_expectation(|x| x * x, m, v, 20) - (m * m + v)).abs() < 1e-12);
    let e4 = m.powi(4) + 6.0 * m * m * v + 3.0 * v * v;
    assert!((gaussian_expectation(|x| x.powi(4), m, v, 20) - e4).abs() < 1e-10);
}

#[test]
fn fitness_gradient_matches_quadrature_finite_difference() {
    // estimator sd is sqrt(m^2/v + 2)/sqrt(mu), so keep |m|/sd small
    let mu = 100_000;
    for (n, (m, v)) in [(0.0, 1.0), (0.5, 1.0), (-0.5, 0.3), (1.5, 4.0)].into_iter().enumerate() {
        let dist = one_d(m, v);
        let xs = dist.sample(mu, StreamId::new(100 + n as u64, Purpose::Custom));
        let weights = Utilities { values: xs.iter().map(|x| x[0]).collect() };
        let batch = SampleBatch::new(0, xs, vec![0.0; mu]).unwrap();
        let grad = fitness_grad(&dist, &batch, &weights).unwrap();
        let h = 1e-4 * v.sqrt();
        let oracle = central_difference(|mm| gaussian_expectation(|x| x, mm, v, 30), m, h);
        let rel = (grad.wrt_mean[0] - oracle).abs() / oracle.abs();
        assert!(rel < 1e-2, "m={m} v={v}: estimate {} vs {oracle}, rel {rel}", grad.wrt_mean[0]);
    }
}

#[test]
fn fisher_scales_with_variance() {
    // scaling the coordinate by c scales v by c^2, F_m by c^-2 and F_v by c^-4
    let base = SearchDistribution::new(vec![0.3, -1.0], vec![1.5, 0.4]).unwrap();
    let xs = base.sample(20_000, StreamId::new(7, Purpose::Custom));
    let reference = fisher(&base, &SampleBatch::new(0, xs.clone(), vec![0.0; xs.len()]).unwrap()).unwrap();
    for c in [0.01, 100.0] {
        let scaled = SearchDistribution::new(
            base.mean().iter().map(|m| m * c).collect(),
            base.variance().iter().map(|v| v * c * c).collect(),
        )
        .unwrap();
        let sx: Vec<Vec<f64>> = xs.iter().map(|x| x.iter().map(|xi| xi * c).collect()).collect();
        let f = fisher(&scaled, &SampleBatch::new(0, sx, vec![0.0; xs.len()]).unwrap()).unwrap();
        for d in 0..2 {
            let em = f.for_mean[d] * c * c / reference.for_mean[d];
            let ev = f.for_variance[d] * c.powi(4) / reference.for_variance[d];
            assert!((em - 1.0).abs() < 1e-9 && (ev - 1.0).abs() < 1e-9, "c={c} d={d}: {em} {ev}");
        }
    }
}
