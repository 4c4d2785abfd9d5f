//! Orthogonal weight initialization.

use crate::rng::Rng;

/// Row-major `[rows, cols]` matrix with orthonormal rows or columns
/// (whichever is fewer), scaled by `gain`.
pub fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut Rng) -> Vec<f64> {
    let (n_vec, len) = if rows >= cols { (cols, rows) } else { (rows, cols) };
    // n_vec orthonormal vectors of length `len` by modified Gram-Schmidt
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n_vec);
    while basis.len() < n_vec {
        let mut v: Vec<f64> = (0..len).map(|_| rng.normal()).collect();
        for q in &basis {
            let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-8 {
            v.iter_mut().for_each(|a| *a /= n);
            basis.push(v);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = gain * if rows >= cols { basis[c][r] } else { basis[r][c] };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_orthonormal_tall() {
        let (r, c) = (7, 3);
        let m = orthogonal(r, c, 1.0, &mut Rng::new(1));
        for i in 0..c {
            for j in 0..c {
                let d: f64 = (0..r).map(|k| m[k * c + i] * m[k * c + j]).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rows_orthonormal_wide_with_gain() {
        let (r, c) = (2, 5);
        let m = orthogonal(r, c, 2.0, &mut Rng::new(2));
        for i in 0..r {
            let n: f64 = (0..c).map(|k| m[i * c + k].powi(2)).sum();
            assert!((n - 4.0).abs() < 1e-10);
        }
        let d: f64 = (0..c).map(|k| m[k] * m[c + k]).sum();
        assert!(d.abs() < 1e-10);
    }
}
