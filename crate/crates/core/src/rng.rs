//! Seeded randomness shared by every generator in the crate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Tensor with entries drawn uniformly from `[-scale, scale)`.
pub fn uniform_tensor(rng: &mut SeededRng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::from_parts(shape.to_vec(), data)
}

/// Random `n x n` orthogonal matrix from Gram-Schmidt on a uniform draw.
pub fn orthogonal_matrix(rng: &mut SeededRng, n: usize) -> Tensor {
    loop {
        let raw = uniform_tensor(rng, &[n, n], 1.0);
        let mut rows: alloc::vec::Vec<alloc::vec::Vec<f64>> =
            raw.data().chunks(n).map(|r| r.to_vec()).collect();
        let mut ok = true;
        for i in 0..n {
            for j in 0..i {
                let (done, rest) = rows.split_at_mut(i);
                let (row, prev) = (&mut rest[0], &done[j]);
                let proj: f64 = row.iter().zip(prev).map(|(a, b)| a * b).sum();
                row.iter_mut().zip(prev).for_each(|(a, b)| *a -= proj * b);
            }
            let norm = libm::sqrt(rows[i].iter().map(|v| v * v).sum::<f64>());
            if norm < 1e-6 {
                ok = false;
                break;
            }
            rows[i].iter_mut().for_each(|v| *v /= norm);
        }
        if ok {
            return Tensor::from_parts(alloc::vec![n, n], rows.concat());
        }
    }
}
