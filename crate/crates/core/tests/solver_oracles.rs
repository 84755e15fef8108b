use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use stabsel_core::data::standardize;
use stabsel_core::rng;
use stabsel_core::solver::{fit, lambda_max, soft_threshold, NetConfig};

fn problem(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut r = rng::stream(seed);
    let x = standardize(&DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut r))).unwrap();
    let y = DVector::from_fn(n, |i, _| {
        let e: f64 = StandardNormal.sample(&mut r);
        2.0 * x[(i, 0)] - 1.0 * x[(i, 1)] + 0.5 * x[(i, 2)] + e
    });
    (x, y)
}

/// Proximal gradient descent (ISTA) with step 1/L, L the largest eigenvalue
/// of X'X/n plus the ridge weight.
fn ista(x: &DMatrix<f64>, y: &DVector<f64>, cfg: &NetConfig, iters: usize) -> Vec<f64> {
    let n = x.nrows() as f64;
    let yc = y.add_scalar(-y.mean());
    let gram = x.transpose() * x / n;
    let l1 = cfg.lambda * cfg.alpha_mix;
    let l2 = cfg.lambda * (1.0 - cfg.alpha_mix);
    let lip = gram.symmetric_eigenvalues().max() + l2;
    let xty = x.transpose() * &yc / n;
    let mut b = DVector::zeros(x.ncols());
    for _ in 0..iters {
        let grad = &gram * &b - &xty + &b * l2;
        b = (&b - grad / lip).map(|v| soft_threshold(v, l1 / lip));
    }
    b.as_slice().to_vec()
}

#[test]
fn coordinate_descent_agrees_with_proximal_gradient() {
    for (k, &(n, p, alpha, frac)) in [(60, 10, 1.0, 0.1), (60, 10, 0.5, 0.05), (40, 30, 0.2, 0.2), (100, 5, 0.9, 0.01)]
        .iter()
        .enumerate()
    {
        let (x, y) = problem(n, p, 40 + k as u64);
        let lam = frac * lambda_max(&x, &y, alpha).unwrap();
        let cfg = NetConfig { tol: 1e-12, ..NetConfig::new(alpha, lam).unwrap() };
        let cd = fit(&x, &y, &cfg).unwrap();
        let pg = ista(&x, &y, &cfg, 200_000);
        for (a, b) in cd.beta.iter().zip(&pg) {
            assert!((a - b).abs() < 1e-6, "case {k}: {a} vs {b}");
        }
        assert!((cd.intercept - y.mean()).abs() < 1e-12);
    }
}

#[test]
fn active_set_solution_solves_its_normal_equations() {
    // On the support S with signs s, (X_S'X_S/n + l2 I) b_S = X_S'y/n - l1 s.
    let (x, y) = problem(80, 12, 5);
    let cfg = NetConfig { tol: 1e-12, ..NetConfig::new(0.6, 0.05).unwrap() };
    let res = fit(&x, &y, &cfg).unwrap();
    let s = &res.support;
    assert!(!s.is_empty());
    let n = x.nrows() as f64;
    let xs = x.select_columns(s.iter());
    let yc = y.add_scalar(-y.mean());
    let l1 = cfg.lambda * cfg.alpha_mix;
    let l2 = cfg.lambda * (1.0 - cfg.alpha_mix);
    let lhs = xs.transpose() * &xs / n + DMatrix::identity(s.len(), s.len()) * l2;
    let signs = DVector::from_iterator(s.len(), s.iter().map(|&j| res.beta[j].signum()));
    let rhs = xs.transpose() * &yc / n - signs * l1;
    let expected = lhs.lu().solve(&rhs).unwrap();
    for (k, &j) in s.iter().enumerate() {
        assert!((res.beta[j] - expected[k]).abs() < 1e-8, "{j}: {} vs {}", res.beta[j], expected[k]);
    }
}
