//! Pfaffians of real antisymmetric matrices.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Pfaffian by skew-symmetric Gaussian elimination with partial pivoting.
/// Each row/column swap flips the sign.
pub fn pfaffian(a: &DMatrix<f64>) -> Result<f64> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Shape(format!("{}×{} matrix is not square", n, a.ncols())));
    }
    if n % 2 == 1 {
        return Err(Error::Shape(format!("odd dimension {n}")));
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let asym = (a + a.transpose()).amax();
    if asym > 1e-9 * scale {
        return Err(Error::Input(format!("matrix is not antisymmetric (defect {asym:e})")));
    }
    Ok(pfaffian_unchecked(a.clone()))
}

fn pfaffian_unchecked(mut a: DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut pf = 1.0;
    let mut k = 0;
    while k + 1 < n {
        let kp = (k + 1..n)
            .max_by(|&i, &j| a[(i, k)].abs().partial_cmp(&a[(j, k)].abs()).unwrap())
            .unwrap();
        if kp != k + 1 {
            a.swap_rows(k + 1, kp);
            a.swap_columns(k + 1, kp);
            pf = -pf;
        }
        let piv = a[(k, k + 1)];
        if piv == 0.0 {
            return 0.0;
        }
        pf *= piv;
        if k + 2 < n {
            let tau: Vec<f64> = (k + 2..n).map(|j| a[(k, j)] / piv).collect();
            let col: Vec<f64> = (k + 2..n).map(|i| a[(i, k + 1)]).collect();
            for (ii, i) in (k + 2..n).enumerate() {
                for (jj, j) in (k + 2..n).enumerate() {
                    a[(i, j)] += tau[ii] * col[jj] - col[ii] * tau[jj];
                }
            }
        }
        k += 2;
    }
    pf
}

/// Pfaffian of a small antisymmetric matrix given by a closure on `r < s`.
pub fn pfaffian_of(k: usize, entry: impl Fn(usize, usize) -> f64) -> Result<f64> {
    let mut m = DMatrix::zeros(k, k);
    for r in 0..k {
        for s in r + 1..k {
            let v = entry(r, s);
            m[(r, s)] = v;
            m[(s, r)] = -v;
        }
    }
    pfaffian(&m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_antisym(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let v = rng.random_range(-1.0..1.0);
                m[(i, j)] = v;
                m[(j, i)] = -v;
            }
        }
        m
    }

    #[test]
    fn two_by_two() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 3.5, -3.5, 0.0]);
        assert_eq!(pfaffian(&m).unwrap(), 3.5);
    }

    #[test]
    fn four_by_four_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let m = random_antisym(4, &mut rng);
            let (a, b, c, d, e, f) = (m[(0, 1)], m[(0, 2)], m[(0, 3)], m[(1, 2)], m[(1, 3)], m[(2, 3)]);
            assert!((pfaffian(&m).unwrap() - (a * f - b * e + c * d)).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_and_symmetry_errors() {
        assert!(matches!(pfaffian(&DMatrix::zeros(3, 3)), Err(Error::Shape(_))));
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(pfaffian(&m), Err(Error::Input(_))));
    }

    #[test]
    fn swap_flips_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_antisym(6, &mut rng);
        let mut p = m.clone();
        p.swap_rows(1, 4);
        p.swap_columns(1, 4);
        assert!((pfaffian(&m).unwrap() + pfaffian(&p).unwrap()).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn square_is_determinant(seed in 0u64..u64::MAX) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_antisym(8, &mut rng);
            let pf = pfaffian(&m).unwrap();
            let det = m.clone().determinant();
            prop_assert!((pf * pf - det).abs() <= 1e-9 * det.abs().max(1e-12));
        }
    }
}
