//! Minimal dense matrix support for the block projections.
//!
//! Everything in the model is `[tokens, features] x [features, out]` products
//! over modest sizes, so a plain row-major buffer with an i-k-j loop is all
//! that is needed.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

// Float methods on f64 come from this trait under no_std; std builds shadow it.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub data: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            data: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn from_vec(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "matrix data length {} != {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix { data, rows, cols })
    }

    /// Kaiming-style fan-in uniform init: entries uniform on
    /// `[-1/sqrt(rows), 1/sqrt(rows)]` where `rows` is the fan-in.
    pub fn init_fan_in<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let bound = (1.0 / rows.max(1) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Matrix { data, rows, cols }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `x * self` for a single row vector `x` of length `rows`, written to `out`.
    pub fn vec_mul_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for o in out.iter_mut() {
            *o = 0.0;
        }
        for (k, &xv) in x.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let row = &self.data[k * self.cols..(k + 1) * self.cols];
            for (o, &w) in out.iter_mut().zip(row.iter()) {
                *o += xv * w;
            }
        }
    }

    /// `x * self` for a `[n, rows]` token block held row-major in `x`.
    pub fn tokens_mul(&self, x: &[f64], n: usize) -> Vec<f64> {
        debug_assert_eq!(x.len(), n * self.rows);
        let mut out = vec![0.0; n * self.cols];
        for i in 0..n {
            self.vec_mul_into(
                &x[i * self.rows..(i + 1) * self.rows],
                &mut out[i * self.cols..(i + 1) * self.cols],
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vec_mul_matches_hand_product() {
        // [1 2; 3 4; 5 6] with x = [1, 10, 100] -> [531, 642].
        let m = Matrix::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3, 2).unwrap();
        let mut out = [0.0; 2];
        m.vec_mul_into(&[1.0, 10.0, 100.0], &mut out);
        assert_eq!(out, [531.0, 642.0]);
    }

    #[test]
    fn fan_in_init_is_bounded() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let m = Matrix::init_fan_in(64, 16, &mut rng);
        let bound = (1.0f64 / 64.0).sqrt();
        assert!(m.data.iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(Matrix::from_vec(vec![0.0; 5], 2, 3).is_err());
    }
}
