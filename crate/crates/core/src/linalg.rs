//! Small dense row-major Cholesky helpers.

/// Dense lower Cholesky, row-major, in place. Returns `false` on a
/// nonpositive pivot.
pub(crate) fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if !(diag > 0.0) {
            return false;
        }
        let ljj = diag.sqrt();
        a[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / ljj;
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            a[i * n + j] = 0.0;
        }
    }
    true
}

/// Cholesky that replaces tiny pivots by a huge value, which zeroes the
/// corresponding solution component instead of failing.
pub(crate) fn cholesky_regularized(a: &mut [f64], n: usize) {
    let max_diag = (0..n).map(|j| a[j * n + j].abs()).fold(0.0f64, f64::max);
    let tiny = 1e-14 * max_diag.max(f64::MIN_POSITIVE);
    for j in 0..n {
        let row_j = &mut a[j * n..(j + 1) * n];
        let mut diag = row_j[j];
        for k in 0..j {
            diag -= row_j[k] * row_j[k];
        }
        let ljj = if diag > tiny { diag.sqrt() } else { 1e64 };
        row_j[j] = ljj;
        let row_j: Vec<f64> = row_j[..j].to_vec();
        for i in (j + 1)..n {
            let row_i = &mut a[i * n..i * n + n];
            let mut v = row_i[j];
            for k in 0..j {
                v -= row_i[k] * row_j[k];
            }
            row_i[j] = v / ljj;
        }
    }
}

/// Solves `L x = b` in place.
pub(crate) fn forward(l: &[f64], n: usize, x: &mut [f64]) {
    for i in 0..n {
        let mut v = x[i];
        for k in 0..i {
            v -= l[i * n + k] * x[k];
        }
        x[i] = v / l[i * n + i];
    }
}

/// Solves `L^T x = b` in place.
pub(crate) fn backward(l: &[f64], n: usize, x: &mut [f64]) {
    for i in (0..n).rev() {
        let mut v = x[i];
        for k in (i + 1)..n {
            v -= l[k * n + i] * x[k];
        }
        x[i] = v / l[i * n + i];
    }
}
