//! Central finite-difference oracle for gradient tests.

/// Numeric gradient of `f` at `x` by central differences with step `h`.
pub(crate) fn central_difference(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Asserts `|a - n| <= rel * max(|a|, |n|) + 1e-9` entrywise.
pub(crate) fn assert_close_rel(analytic: &[f64], numeric: &[f64], rel: f64, what: &str) {
    assert_eq!(analytic.len(), numeric.len(), "{what}: length");
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let tol = rel * a.abs().max(n.abs()) + 1e-9;
        assert!(
            (a - n).abs() <= tol,
            "{what}[{i}]: analytic {a:e} vs numeric {n:e} (tol {tol:e})"
        );
    }
}
