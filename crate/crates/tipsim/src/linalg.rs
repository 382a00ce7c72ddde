//! Dense complex linear algebra used throughout the crate.
//!
//! Everything here is sized for the problem at hand (matrices up to a few
//! hundred on a side, superoperators up to ~1000), so the routines favor
//! robustness and zero external dependencies over asymptotic tricks.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn identity(n: usize) -> Array2<C64> {
    Array2::from_shape_fn((n, n), |(i, j)| if i == j { ONE } else { ZERO })
}

/// Kronecker product a (x) b.
pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = Array2::zeros((ra * rb, ca * cb));
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[[i, j]];
            if aij == ZERO {
                continue;
            }
            for k in 0..rb {
                for l in 0..cb {
                    out[[i * rb + k, j * cb + l]] = aij * b[[k, l]];
                }
            }
        }
    }
    out
}

pub fn dagger(a: &Array2<C64>) -> Array2<C64> {
    let (r, c) = a.dim();
    Array2::from_shape_fn((c, r), |(i, j)| a[[j, i]].conj())
}

/// c = a * b for square complex matrices (row-major cache order).
pub fn matmul(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (n, m) = a.dim();
    let (m2, p) = b.dim();
    assert_eq!(m, m2, "matmul shape mismatch");
    let mut c = Array2::zeros((n, p));
    let (a_s, b_s) = (a.as_slice().unwrap(), b.as_slice().unwrap());
    let c_s = c.as_slice_mut().unwrap();
    for i in 0..n {
        for k in 0..m {
            let aik = a_s[i * m + k];
            if aik == ZERO {
                continue;
            }
            let brow = &b_s[k * p..(k + 1) * p];
            let crow = &mut c_s[i * p..(i + 1) * p];
            for j in 0..p {
                crow[j] += aik * brow[j];
            }
        }
    }
    c
}

pub fn matvec(a: &Array2<C64>, x: &Array1<C64>) -> Array1<C64> {
    let (n, m) = a.dim();
    let a_s = a.as_slice().unwrap();
    let x_s = x.as_slice().unwrap();
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let mut acc = ZERO;
        let row = &a_s[i * m..(i + 1) * m];
        for j in 0..m {
            acc += row[j] * x_s[j];
        }
        y[i] = acc;
    }
    y
}

pub fn frobenius(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Relative deviation from Hermiticity, ||A - A'||_F / ||A||_F.
pub fn hermiticity_defect(a: &Array2<C64>) -> f64 {
    let norm = frobenius(a);
    if norm == 0.0 {
        return 0.0;
    }
    let mut dev = 0.0;
    let n = a.nrows();
    for i in 0..n {
        for j in 0..n {
            dev += (a[[i, j]] - a[[j, i]].conj()).norm_sqr();
        }
    }
    dev.sqrt() / norm / std::f64::consts::SQRT_2
}

pub struct Eigh {
    /// Ascending eigenvalues.
    pub values: Array1<f64>,
    /// Eigenvectors as columns, matching `values` order.
    pub vectors: Array2<C64>,
}

/// Cyclic Jacobi diagonalization of a Hermitian matrix.
///
/// Converges quadratically; for the <=64-dimensional operators used here a
/// handful of sweeps reaches machine precision. Panics if the input is not
/// square.
pub fn eigh(h: &Array2<C64>) -> Eigh {
    let n = h.nrows();
    assert_eq!(n, h.ncols(), "eigh requires a square matrix");
    let mut a = h.clone();
    let mut v = identity(n);
    let norm = frobenius(&a).max(1e-300);
    let tol = 1e-15 * norm;

    for _sweep in 0..60 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[[i, j]].norm_sqr();
            }
        }
        if off.sqrt() < tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                let mag = apq.norm();
                if mag < 1e-300 {
                    continue;
                }
                let app = a[[p, p]].re;
                let aqq = a[[q, q]].re;
                let ph = apq / mag;
                let tau = (aqq - app) / (2.0 * mag);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // columns: col_p <- c col_p - s ph* col_q ; col_q <- s ph col_p + c col_q
                for i in 0..n {
                    let aip = a[[i, p]];
                    let aiq = a[[i, q]];
                    a[[i, p]] = c * aip - s * ph.conj() * aiq;
                    a[[i, q]] = s * ph * aip + c * aiq;
                }
                // rows: row_p <- c row_p - s ph row_q ; row_q <- s ph* row_p + c row_q
                for j in 0..n {
                    let apj = a[[p, j]];
                    let aqj = a[[q, j]];
                    a[[p, j]] = c * apj - s * ph * aqj;
                    a[[q, j]] = s * ph.conj() * apj + c * aqj;
                }
                for i in 0..n {
                    let vip = v[[i, p]];
                    let viq = v[[i, q]];
                    v[[i, p]] = c * vip - s * ph.conj() * viq;
                    v[[i, q]] = s * ph * vip + c * viq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[i, i]].re.partial_cmp(&a[[j, j]].re).unwrap());
    let values = Array1::from_iter(order.iter().map(|&i| a[[i, i]].re));
    let mut vectors = Array2::zeros((n, n));
    for (newcol, &oldcol) in order.iter().enumerate() {
        for i in 0..n {
            vectors[[i, newcol]] = v[[i, oldcol]];
        }
    }
    Eigh { values, vectors }
}

/// exp(i * theta * H) for Hermitian H, via diagonalization.
pub fn expi_hermitian(h: &Array2<C64>, theta: f64) -> Array2<C64> {
    let Eigh { values, vectors } = eigh(h);
    expi_from_eigh(&values, &vectors, theta)
}

/// exp(i * theta * H) from a precomputed eigendecomposition of H.
pub fn expi_from_eigh(values: &Array1<f64>, vectors: &Array2<C64>, theta: f64) -> Array2<C64> {
    let n = values.len();
    let mut scaled = vectors.clone();
    for j in 0..n {
        let phase = C64::from_polar(1.0, theta * values[j]);
        for i in 0..n {
            scaled[[i, j]] *= phase;
        }
    }
    matmul(&scaled, &dagger(vectors))
}

/// General dense matrix exponential by Pade approximation with scaling
/// and squaring. Used for Liouvillian superoperators, which are not normal.
pub fn expm(a: &Array2<C64>) -> Array2<C64> {
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| a[[i, j]].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let theta13 = 5.371920351148152;
    let s = if norm1 > theta13 {
        (norm1 / theta13).log2().ceil() as i32
    } else {
        0
    };
    let scale = C64::new(0.5f64.powi(s), 0.0);
    let a1 = a.mapv(|z| z * scale);

    const B: [f64; 14] = [
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

    let id = identity(n);
    let a2 = matmul(&a1, &a1);
    let a4 = matmul(&a2, &a2);
    let a6 = matmul(&a2, &a4);

    let mut w1 = a6.mapv(|z| z * B[13]);
    w1 = &w1 + &a4.mapv(|z| z * B[11]);
    w1 = &w1 + &a2.mapv(|z| z * B[9]);
    let w1 = matmul(&a6, &w1);
    let mut w2 = a6.mapv(|z| z * B[7]);
    w2 = &w2 + &a4.mapv(|z| z * B[5]);
    w2 = &w2 + &a2.mapv(|z| z * B[3]);
    w2 = &w2 + &id.mapv(|z| z * B[1]);
    let w = &w1 + &w2;
    let u = matmul(&a1, &w);

    let mut z1 = a6.mapv(|z| z * B[12]);
    z1 = &z1 + &a4.mapv(|z| z * B[10]);
    z1 = &z1 + &a2.mapv(|z| z * B[8]);
    let z1 = matmul(&a6, &z1);
    let mut z2 = a6.mapv(|z| z * B[6]);
    z2 = &z2 + &a4.mapv(|z| z * B[4]);
    z2 = &z2 + &a2.mapv(|z| z * B[2]);
    z2 = &z2 + &id.mapv(|z| z * B[0]);
    let v = &z1 + &z2;

    let p = &v + &u;
    let q = &v - &u;
    let mut r = lu_solve_matrix(&q, &p);
    for _ in 0..s {
        r = matmul(&r, &r);
    }
    r
}

/// Solve A X = B for X with partial-pivoted LU (complex, dense).
pub fn lu_solve_matrix(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let n = a.nrows();
    let mut lu = a.clone();
    let mut x = b.clone();
    let ncols = x.ncols();
    let mut piv: Vec<usize> = (0..n).collect();

    for k in 0..n {
        let mut pmax = k;
        let mut vmax = lu[[k, k]].norm();
        for i in (k + 1)..n {
            let v = lu[[i, k]].norm();
            if v > vmax {
                vmax = v;
                pmax = i;
            }
        }
        if vmax < 1e-300 {
            panic!("singular matrix in lu_solve");
        }
        if pmax != k {
            for j in 0..n {
                let t = lu[[k, j]];
                lu[[k, j]] = lu[[pmax, j]];
                lu[[pmax, j]] = t;
            }
            piv.swap(k, pmax);
            for j in 0..ncols {
                let t = x[[k, j]];
                x[[k, j]] = x[[pmax, j]];
                x[[pmax, j]] = t;
            }
        }
        let pivot = lu[[k, k]];
        for i in (k + 1)..n {
            let f = lu[[i, k]] / pivot;
            lu[[i, k]] = f;
            if f == ZERO {
                continue;
            }
            for j in (k + 1)..n {
                let lkj = lu[[k, j]];
                lu[[i, j]] -= f * lkj;
            }
            for j in 0..ncols {
                let xkj = x[[k, j]];
                x[[i, j]] -= f * xkj;
            }
        }
    }
    for k in (0..n).rev() {
        for j in 0..ncols {
            let mut acc = x[[k, j]];
            for m in (k + 1)..n {
                acc -= lu[[k, m]] * x[[m, j]];
            }
            x[[k, j]] = acc / lu[[k, k]];
        }
    }
    x
}

/// Solve the real linear system A x = b by Gaussian elimination with
/// partial pivoting. Used for small normal-equation and capacitance systems.
pub fn solve_real(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().cloned().collect();
    let mut rhs = b.to_vec();
    for k in 0..n {
        let mut pmax = k;
        let mut vmax = m[k][k].abs();
        for i in (k + 1)..n {
            if m[i][k].abs() > vmax {
                vmax = m[i][k].abs();
                pmax = i;
            }
        }
        if vmax < 1e-300 {
            return None;
        }
        m.swap(k, pmax);
        rhs.swap(k, pmax);
        for i in (k + 1)..n {
            let f = m[i][k] / m[k][k];
            for j in k..n {
                m[i][j] -= f * m[k][j];
            }
            rhs[i] -= f * rhs[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut acc = rhs[k];
        for j in (k + 1)..n {
            acc -= m[k][j] * x[j];
        }
        x[k] = acc / m[k][k];
    }
    Some(x)
}

/// Invert a small real matrix (Gaussian elimination, partial pivoting).
pub fn invert_real(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cols.push(solve_real(a, &e)?);
    }
    let mut inv = vec![vec![0.0; n]; n];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..n {
            inv[i][j] = col[i];
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_hermitian(n: usize, seed: u64) -> Array2<C64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut h: Array2<C64> = Array2::zeros((n, n));
        for i in 0..n {
            h[[i, i]] = C64::new(rng.gen_range(-1.0..1.0), 0.0);
            for j in (i + 1)..n {
                let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                h[[i, j]] = z;
                h[[j, i]] = z.conj();
            }
        }
        h
    }

    #[test]
    fn eigh_reconstructs() {
        for seed in 0..3 {
            let h = random_hermitian(24, seed);
            let Eigh { values, vectors } = eigh(&h);
            // residual ||H v - lambda v||
            for k in 0..24 {
                let col = vectors.column(k).to_owned();
                let hv = matvec(&h, &col);
                let mut res = 0.0;
                for i in 0..24 {
                    res += (hv[i] - C64::new(values[k], 0.0) * col[i]).norm_sqr();
                }
                assert!(res.sqrt() < 1e-12, "eigenpair residual {}", res.sqrt());
            }
            // orthonormality
            let g = matmul(&dagger(&vectors), &vectors);
            for i in 0..24 {
                for j in 0..24 {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((g[[i, j]] - C64::new(expect, 0.0)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn expm_matches_diagonal_exponential() {
        let h = random_hermitian(8, 7);
        let minus_i_h = h.mapv(|z| -I * z);
        let u1 = expm(&minus_i_h);
        let u2 = expi_hermitian(&h, -1.0);
        let diff = &u1 - &u2;
        assert!(frobenius(&diff) < 1e-11);
    }

    #[test]
    fn lu_solves() {
        let a = random_hermitian(10, 3);
        let b = random_hermitian(10, 4);
        let x = lu_solve_matrix(&a, &b);
        let r = &matmul(&a, &x) - &b;
        assert!(frobenius(&r) < 1e-10);
    }

    #[test]
    fn real_inverse() {
        let a = vec![
            vec![4.0, 1.0, 0.0],
            vec![1.0, 3.0, -1.0],
            vec![0.0, -1.0, 2.0],
        ];
        let inv = invert_real(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += a[i][k] * inv[k][j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((acc - expect).abs() < 1e-12);
            }
        }
    }
}
