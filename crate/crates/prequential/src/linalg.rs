//! Minimal dense least-squares kernel used by the grid reconstruction.

/// Solves `min ||A x - b||_2` by Householder QR for a row-major `A` with
/// `rows >= cols`. Near-singular pivots get their coefficient zeroed rather
/// than amplified; callers only see the residual grow.
pub fn lstsq(a: &[f64], rows: usize, cols: usize, b: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), rows * cols);
    assert_eq!(b.len(), rows);
    assert!(rows >= cols);

    let mut r = a.to_vec();
    let mut y = b.to_vec();
    let mut diag_ok = vec![true; cols];

    for k in 0..cols {
        // Householder vector for column k below the diagonal.
        let mut norm2 = 0.0;
        for i in k..rows {
            norm2 += r[i * cols + k] * r[i * cols + k];
        }
        let norm = norm2.sqrt();
        if norm <= f64::EPSILON * 16.0 {
            diag_ok[k] = false;
            continue;
        }
        let alpha = if r[k * cols + k] >= 0.0 { -norm } else { norm };
        let mut v = vec![0.0; rows - k];
        v[0] = r[k * cols + k] - alpha;
        for i in k + 1..rows {
            v[i - k] = r[i * cols + k];
        }
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        if vtv <= 0.0 {
            diag_ok[k] = false;
            continue;
        }
        // Apply H = I - 2 v v^T / (v^T v) to the trailing block and to y.
        for j in k..cols {
            let mut dot = 0.0;
            for i in k..rows {
                dot += v[i - k] * r[i * cols + j];
            }
            let scale = 2.0 * dot / vtv;
            for i in k..rows {
                r[i * cols + j] -= scale * v[i - k];
            }
        }
        let mut dot = 0.0;
        for i in k..rows {
            dot += v[i - k] * y[i];
        }
        let scale = 2.0 * dot / vtv;
        for i in k..rows {
            y[i] -= scale * v[i - k];
        }
        r[k * cols + k] = alpha;
    }

    // Back substitution on the upper-triangular factor.
    let mut x = vec![0.0; cols];
    for k in (0..cols).rev() {
        if !diag_ok[k] || r[k * cols + k].abs() <= f64::EPSILON * 16.0 {
            x[k] = 0.0;
            continue;
        }
        let mut s = y[k];
        for j in k + 1..cols {
            s -= r[k * cols + j] * x[j];
        }
        x[k] = s / r[k * cols + k];
    }
    x
}
