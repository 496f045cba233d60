//! Small dense kernels: LU solve with partial pivoting and the matrix
//! exponential via scaling-and-squaring with a degree-13 Pade approximant.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Solves A X = B for square A.
pub(crate) fn solve(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::Shape(format!(
            "solve needs square A and conforming B, got {:?} and {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let mut lu = a.clone();
    let mut x = b.clone();
    let mut piv: Vec<usize> = (0..n).collect();

    for k in 0..n {
        let mut p = k;
        let mut best = lu[[k, k]].abs();
        for i in (k + 1)..n {
            let v = lu[[i, k]].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return Err(Error::Numerical("singular matrix in linear solve".into()));
        }
        if p != k {
            piv.swap(p, k);
            for j in 0..n {
                lu.swap([p, j], [k, j]);
            }
            for j in 0..x.ncols() {
                x.swap([p, j], [k, j]);
            }
        }
        let pivot = lu[[k, k]];
        for i in (k + 1)..n {
            let factor = lu[[i, k]] / pivot;
            lu[[i, k]] = factor;
            if factor != 0.0 {
                for j in (k + 1)..n {
                    lu[[i, j]] -= factor * lu[[k, j]];
                }
            }
        }
    }

    // Forward substitution with the unit-lower factor.
    for k in 0..n {
        for i in (k + 1)..n {
            let factor = lu[[i, k]];
            if factor != 0.0 {
                for j in 0..x.ncols() {
                    let delta = factor * x[[k, j]];
                    x[[i, j]] -= delta;
                }
            }
        }
    }
    // Back substitution with the upper factor.
    for k in (0..n).rev() {
        let pivot = lu[[k, k]];
        for j in 0..x.ncols() {
            x[[k, j]] /= pivot;
        }
        for i in 0..k {
            let factor = lu[[i, k]];
            if factor != 0.0 {
                for j in 0..x.ncols() {
                    let delta = factor * x[[k, j]];
                    x[[i, j]] -= delta;
                }
            }
        }
    }
    Ok(x)
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Largest 1-norm the degree-13 approximant handles without scaling.
const THETA13: f64 = 5.371920351148152;

fn one_norm(a: &Array2<f64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        let s: f64 = a.column(j).iter().map(|v| v.abs()).sum();
        if s > best {
            best = s;
        }
    }
    best
}

/// Matrix exponential of a square matrix.
pub(crate) fn expm(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Shape(format!(
            "expm needs a square matrix, got {} x {}",
            n,
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite entry passed to expm".into()));
    }

    let norm = one_norm(a);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as u32
    } else {
        0
    };
    let a = a.mapv(|v| v / f64::powi(2.0, squarings as i32));

    let eye: Array2<f64> = Array2::eye(n);
    let a2 = a.dot(&a);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);
    let b = &PADE13;

    let u_poly = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u_inner = a6.dot(&u_poly) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &eye * b[1];
    let u = a.dot(&u_inner);
    let v_poly = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = a6.dot(&v_poly) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &eye * b[0];

    let mut r = solve(&(&v - &u), &(&v + &u))?;
    for _ in 0..squarings {
        r = r.dot(&r);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn solve_recovers_known_system() {
        let a = array![[2.0, 1.0], [1.0, 3.0]];
        let x_true = array![[1.0], [-2.0]];
        let b = a.dot(&x_true);
        let x = solve(&a, &b).unwrap();
        assert!(max_abs_diff(&x, &x_true) < 1e-12);
    }

    #[test]
    fn solve_rejects_singular() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        let b = Array2::eye(2);
        assert!(solve(&a, &b).is_err());
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let z = Array2::<f64>::zeros((4, 4));
        assert!(max_abs_diff(&expm(&z).unwrap(), &Array2::eye(4)) < 1e-15);
    }

    #[test]
    fn expm_of_diagonal() {
        let a = array![[1.0, 0.0], [0.0, -2.0]];
        let e = expm(&a).unwrap();
        let expect = array![[1.0f64.exp(), 0.0], [0.0, (-2.0f64).exp()]];
        assert!(max_abs_diff(&e, &expect) < 1e-12);
    }

    #[test]
    fn expm_of_nilpotent_truncates() {
        let a = array![[0.0, 0.0], [1.0, 0.0]];
        let e = expm(&a).unwrap();
        let expect = array![[1.0, 0.0], [1.0, 1.0]];
        assert!(max_abs_diff(&e, &expect) < 1e-14);
    }

    #[test]
    fn expm_of_skew_is_rotation() {
        let t = 0.7f64;
        let a = array![[0.0, -t], [t, 0.0]];
        let e = expm(&a).unwrap();
        let expect = array![[t.cos(), -t.sin()], [t.sin(), t.cos()]];
        assert!(max_abs_diff(&e, &expect) < 1e-13);
    }

    #[test]
    fn expm_scaling_path_handles_large_norms() {
        let a = Array2::eye(3) * 10.0;
        let e = expm(&a).unwrap();
        let expect = Array2::eye(3) * 10.0f64.exp();
        let rel = max_abs_diff(&e, &expect) / 10.0f64.exp();
        assert!(rel < 1e-12, "relative error {rel}");
    }

    #[test]
    fn expm_two_cycle_matches_cosh_sinh() {
        // For [[0, a], [a, 0]] the exponential is cosh/sinh in closed form.
        let a = 1.3f64;
        let m = array![[0.0, a], [a, 0.0]];
        let e = expm(&m).unwrap();
        let expect = array![[a.cosh(), a.sinh()], [a.sinh(), a.cosh()]];
        assert!(max_abs_diff(&e, &expect) < 1e-12);
    }

    #[test]
    fn expm_rejects_non_finite() {
        let a = array![[f64::NAN, 0.0], [0.0, 0.0]];
        assert!(expm(&a).is_err());
    }
}
