//! Row-major dense matrix products on flat slices.

// Mirrors the BLAS gemm argument list.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    c: &mut [f64],
    accumulate: bool,
) {
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c[..m * n].fill(0.0);
        }
        return;
    }
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: callers pass slices whose lengths cover every index reachable
    // through the given dimensions and strides (checked by the debug asserts in
    // the public wrappers); `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c (m×n) = a (m×k) · b (k×n)`
pub(crate) fn matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], acc: bool) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n);
    gemm(m, k, n, a, (k as isize, 1), b, (n as isize, 1), c, acc);
}

/// `c (m×n) = aᵀ · b` with `a` stored as k×m and `b` as k×n.
pub(crate) fn matmul_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], acc: bool) {
    debug_assert!(a.len() >= k * m && b.len() >= k * n);
    gemm(m, k, n, a, (1, m as isize), b, (n as isize, 1), c, acc);
}

/// `c (m×n) = a · bᵀ` with `a` stored as m×k and `b` as n×k.
pub(crate) fn matmul_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], acc: bool) {
    debug_assert!(a.len() >= m * k && b.len() >= n * k);
    gemm(m, k, n, a, (k as isize, 1), b, (1, k as isize), c, acc);
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
