//! Closed-form and brute-force references used only by tests.

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

/// `exp(a)` by scaling and squaring of a truncated Taylor series.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.iter().map(|v| v.abs()).sum::<f64>().max(1e-300);
    let squarings = (norm.log2().ceil() + 4.0).max(0.0) as u32;
    let scaled = a / 2f64.powi(squarings as i32);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..30 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Composite Simpson rule with `2 * half_intervals` panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, half_intervals: usize) -> f64 {
    let n = 2 * half_intervals;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn expm_of_rotation_generator() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let e = expm(&(a * 1.3));
        assert_relative_eq!(e[(0, 0)], 1.3f64.cos(), epsilon = 1e-13);
        assert_relative_eq!(e[(0, 1)], 1.3f64.sin(), epsilon = 1e-13);
    }

    #[test]
    fn simpson_integrates_exponential() {
        assert_relative_eq!(simpson(|t| (-2.0 * t).exp(), 0.0, 3.0, 500), (1.0 - (-6.0f64).exp()) / 2.0, epsilon = 1e-10);
    }
}
