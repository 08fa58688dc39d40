use crate::error::{Error, Result};
use crate::numerics::{Matrix, Real};

/// Column-wise mean over frames (accumulated in 64-bit).
pub fn pool_mean<T: Real>(frames: &Matrix<T>) -> Result<Matrix<T>> {
    if frames.rows() == 0 {
        return Err(Error::EmptyInput("pool_mean over zero frames"));
    }
    let mut acc = vec![0.0f64; frames.cols()];
    for r in 0..frames.rows() {
        for (a, &v) in acc.iter_mut().zip(frames.row(r)) {
            *a += v.as_f64();
        }
    }
    let n = frames.rows() as f64;
    let mean: Vec<T> = acc.into_iter().map(|a| T::of_f64(a / n)).collect();
    Ok(Matrix::row_vector(&mean))
}

/// First frame as the sequence representation.
pub fn pool_first<T: Real>(frames: &Matrix<T>) -> Result<Matrix<T>> {
    if frames.rows() == 0 {
        return Err(Error::EmptyInput("pool_first over zero frames"));
    }
    Ok(Matrix::row_vector(frames.row(0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn two_frame_mean_and_identity() {
        let m = Matrix::from_rows(&[[1.0f32, 3.0], [3.0, 5.0]]);
        assert_eq!(pool_mean(&m).unwrap().as_slice(), &[2.0, 4.0]);
        let single = Matrix::from_rows(&[[7.0f32, 8.0]]);
        assert_eq!(pool_mean(&single).unwrap(), single);
        assert!(pool_mean(&Matrix::<f32>::zeros(0, 3)).is_err());
    }

    #[test]
    fn mean_matches_f64_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let data: Vec<f32> = (0..100 * 8).map(|_| rng.random_range(-3.0..3.0)).collect();
        let m = Matrix::from_vec(100, 8, data.clone()).unwrap();
        let pooled = pool_mean(&m).unwrap();
        for c in 0..8 {
            let oracle: f64 = (0..100).map(|r| data[r * 8 + c] as f64).sum::<f64>() / 100.0;
            let got = pooled[(0, c)] as f64;
            assert!((got - oracle).abs() <= 1e-5 * oracle.abs().max(1e-3));
        }
    }

    #[test]
    fn first_frame() {
        let m = Matrix::from_rows(&[[7.0f32, 8.0], [9.0, 10.0]]);
        assert_eq!(pool_first(&m).unwrap().as_slice(), &[7.0, 8.0]);
        assert!(pool_first(&Matrix::<f32>::zeros(0, 2)).is_err());
    }

    proptest! {
        // pool_first depends on frame order by construction; only the mean
        // is order-free.
        #[test]
        fn mean_is_permutation_invariant(
            data in prop::collection::vec(-100.0f32..100.0, 12),
            rot in 0usize..4,
        ) {
            let m = Matrix::from_vec(4, 3, data).unwrap();
            let order: Vec<usize> = (0..4).map(|i| (i + rot) % 4).collect();
            let permuted = m.select_rows(&order);
            prop_assert_eq!(pool_mean(&m).unwrap(), pool_mean(&permuted).unwrap());
        }
    }
}
