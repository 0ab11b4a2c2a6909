//! Orthonormal fast Walsh–Hadamard transform.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("transform length {0} is not a power of two")]
pub struct LengthError(pub usize);

/// In-place `H v` with `H` the Sylvester Hadamard matrix scaled by
/// `n^{-1/2}`, so the transform is its own inverse.
pub fn fwht_in_place(v: &mut [f64]) -> Result<(), LengthError> {
    let n = v.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(LengthError(n));
    }
    let mut h = 1;
    while h < n {
        for block in v.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
    let s = 1.0 / (n as f64).sqrt();
    v.iter_mut().for_each(|x| *x *= s);
    Ok(())
}

pub fn fwht(v: &[f64]) -> Result<Vec<f64>, LengthError> {
    let mut out = v.to_vec();
    fwht_in_place(&mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_hadamard(n: usize) -> Vec<Vec<f64>> {
        // H_{ij} = (-1)^{popcount(i & j)} / sqrt(n)
        let s = 1.0 / (n as f64).sqrt();
        (0..n)
            .map(|i| (0..n).map(|j| if (i & j).count_ones() % 2 == 0 { s } else { -s }).collect())
            .collect()
    }

    #[test]
    fn unit_vector_k1() {
        let out = fwht(&[1.0, 0.0]).unwrap();
        let r = 1.0 / 2f64.sqrt();
        assert!((out[0] - r).abs() < 1e-15 && (out[1] - r).abs() < 1e-15);
    }

    #[test]
    fn involution_and_norm() {
        let v: Vec<f64> = (0..64).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.3).collect();
        let once = fwht(&v).unwrap();
        let n0: f64 = v.iter().map(|x| x * x).sum();
        let n1: f64 = once.iter().map(|x| x * x).sum();
        assert!((n0 - n1).abs() < 1e-12 * n0);
        let twice = fwht(&once).unwrap();
        for (a, b) in v.iter().zip(&twice) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_dense_matrix() {
        let n = 16;
        let h = dense_hadamard(n);
        let v: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let fast = fwht(&v).unwrap();
        for i in 0..n {
            let dense: f64 = h[i].iter().zip(&v).map(|(a, b)| a * b).sum();
            assert!((dense - fast[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_bad_length() {
        assert_eq!(fwht(&[1.0; 12]), Err(LengthError(12)));
        assert_eq!(fwht(&[]), Err(LengthError(0)));
    }
}
