use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Symmetry tolerance accepted by [`upper_tri_flatten`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-6;

/// Length of the strict upper triangle of an `n × n` matrix.
pub fn upper_tri_len(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Strict upper triangle of a symmetric matrix, row-major (`i < j`, `i`
/// ascending, then `j` ascending).
pub fn upper_tri_flatten<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let n = match x.shape() {
        [r, c] if r == c && *r >= 2 => *r,
        s => {
            return Err(Error::dim(format!(
                "upper-triangle flattening needs a square matrix with n >= 2, got {s:?}"
            )))
        }
    };
    let tol = T::lit(SYMMETRY_TOLERANCE);
    let mut out = Vec::with_capacity(upper_tri_len(n));
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (x.at2(i, j), x.at2(j, i));
            if !((a - b).abs() <= tol) {
                return Err(Error::DataIntegrity(format!(
                    "matrix not symmetric at ({i}, {j}): {a} vs {b}"
                )));
            }
            out.push(a);
        }
    }
    Ok(Tensor::vector(out))
}

/// Symmetric unit-diagonal matrix whose strict upper triangle is `v`.
pub fn upper_tri_unflatten<T: Scalar>(v: &Tensor<T>, n: usize) -> Result<Tensor<T>> {
    if v.rank() != 1 || n < 2 || v.len() != upper_tri_len(n) {
        return Err(Error::dim(format!(
            "vector of shape {:?} cannot fill the upper triangle of a {n}x{n} matrix (needs {})",
            v.shape(),
            upper_tri_len(n)
        )));
    }
    let mut m = vec![T::zero(); n * n];
    let mut it = v.data().iter();
    for i in 0..n {
        m[i * n + i] = T::one();
        for j in (i + 1)..n {
            let val = *it.next().expect("length checked");
            m[i * n + j] = val;
            m[j * n + i] = val;
        }
    }
    Tensor::matrix(n, n, m)
}
