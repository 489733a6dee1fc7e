//! Small 2-D FFT helpers over `ndarray` arrays, shared by the periodic
//! random-field sampler and the pseudo-spectral Navier-Stokes solver.

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;

/// In-place 2-D DFT. `inverse = false` computes the unnormalized forward
/// transform, `inverse = true` the unnormalized inverse (so a round trip
/// multiplies by `rows * cols`).
pub fn fft2_inplace(a: &mut Array2<Complex64>, inverse: bool) {
    let (rows, cols) = a.dim();
    let mut planner = FftPlanner::new();
    let fft_cols = if inverse {
        planner.plan_fft_inverse(cols)
    } else {
        planner.plan_fft_forward(cols)
    };
    let fft_rows = if inverse {
        planner.plan_fft_inverse(rows)
    } else {
        planner.plan_fft_forward(rows)
    };
    // rows of the array are contiguous (row-major layout)
    for mut row in a.rows_mut() {
        fft_cols.process(row.as_slice_mut().expect("contiguous row"));
    }
    let mut col_buf = vec![Complex64::default(); rows];
    for j in 0..cols {
        for i in 0..rows {
            col_buf[i] = a[[i, j]];
        }
        fft_rows.process(&mut col_buf);
        for i in 0..rows {
            a[[i, j]] = col_buf[i];
        }
    }
}

/// Signed wavenumber index for DFT bin `i` of a length-`n` transform.
pub fn signed_freq(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_scales_by_size() {
        let mut a = Array2::from_shape_fn((6, 10), |(i, j)| {
            Complex64::new((i * 3 + j) as f64, (j as f64).cos())
        });
        let orig = a.clone();
        fft2_inplace(&mut a, false);
        fft2_inplace(&mut a, true);
        let n = 60.0;
        for (x, y) in a.iter().zip(orig.iter()) {
            assert!((x / n - y).norm() < 1e-12);
        }
    }

    #[test]
    fn forward_matches_direct_dft() {
        let n = 5;
        let mut a = Array2::from_shape_fn((n, n), |(i, j)| {
            Complex64::new((i as f64 * 0.7).sin(), (j as f64 * 1.3).cos())
        });
        let orig = a.clone();
        fft2_inplace(&mut a, false);
        let k = (1, 2);
        let mut direct = Complex64::default();
        for i in 0..n {
            for j in 0..n {
                let ph = -2.0 * std::f64::consts::PI * (k.0 * i + k.1 * j) as f64 / n as f64;
                direct += orig[[i, j]] * Complex64::from_polar(1.0, ph);
            }
        }
        assert!((a[[k.0, k.1]] - direct).norm() < 1e-10);
    }

    #[test]
    fn signed_freq_convention() {
        assert_eq!(signed_freq(0, 8), 0);
        assert_eq!(signed_freq(4, 8), 4);
        assert_eq!(signed_freq(5, 8), -3);
        assert_eq!(signed_freq(7, 8), -1);
        assert_eq!(signed_freq(3, 7), 3);
        assert_eq!(signed_freq(4, 7), -3);
    }
}
