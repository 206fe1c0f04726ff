//! Shared test support: central finite-difference oracle, independent of the
//! tape's backward closures (it only re-evaluates forward passes).

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Central finite difference of `f` at `x[i]` with step `h`.
pub fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    xp[i] += h;
    let fp = f(&xp);
    xp[i] = x[i] - h;
    let fm = f(&xp);
    (fp - fm) / (2.0 * h)
}

/// Mixed relative/absolute comparison: passes when
/// `|a - b| <= tol * max(|a|, |b|, 1)`.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Checks every element of `analytic` against the finite-difference oracle.
pub fn assert_grad_matches(
    name: &str,
    f: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    h: f64,
    tol: f64,
) {
    assert_eq!(x.len(), analytic.len(), "{name}: gradient length");
    for i in 0..x.len() {
        let numeric = central_diff(f, x, i, h);
        assert!(
            rel_close(analytic[i], numeric, tol),
            "{name}: element {i}: analytic {} vs numeric {}",
            analytic[i],
            numeric
        );
    }
}

/// Same check restricted to a random sample of elements.
pub fn assert_grad_matches_sampled(
    name: &str,
    f: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    h: f64,
    tol: f64,
    samples: usize,
    rng: &mut ChaCha8Rng,
) {
    assert_eq!(x.len(), analytic.len(), "{name}: gradient length");
    for _ in 0..samples {
        let i = rng.random_range(0..x.len());
        let numeric = central_diff(f, x, i, h);
        assert!(
            rel_close(analytic[i], numeric, tol),
            "{name}: element {i}: analytic {} vs numeric {}",
            analytic[i],
            numeric
        );
    }
}
