#![allow(dead_code)]

use gsvd_core::matrix::{axpy, dot, norm2, scale, DenseMatrix, SparseMatrix, Vector};
use gsvd_core::MatrixPair;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Orthonormal basis (Euclidean) of the span of `cols`, dropping dependent
/// columns.
pub fn orth(cols: &[Vector]) -> Vec<Vector> {
    let mut out: Vec<Vector> = Vec::new();
    for c in cols {
        let mut v = c.clone();
        let n0 = norm2(&v);
        for _ in 0..2 {
            for q in &out {
                let d = dot(q, &v);
                axpy(-d, q, &mut v);
            }
        }
        let nv = norm2(&v);
        if nv > 1e-10 * n0 {
            scale(1.0 / nv, &mut v);
            out.push(v);
        }
    }
    out
}

/// Sine of the angle between `x` and the span of `cols`.
pub fn sin_to_span(x: &[f64], cols: &[Vector]) -> f64 {
    let q = orth(cols);
    let mut r = x.to_vec();
    for _ in 0..2 {
        for qi in &q {
            let d = dot(qi, &r);
            axpy(-d, qi, &mut r);
        }
    }
    (norm2(&r) / norm2(x)).min(1.0)
}

/// `max |P_X − P_Y|` for the orthogonal projectors onto two spans.
pub fn projector_distance(x: &[Vector], y: &[Vector]) -> f64 {
    let (qx, qy) = (orth(x), orth(y));
    let n = x[0].len();
    let proj = |q: &[Vector]| DenseMatrix::from_fn(n, n, |i, j| q.iter().map(|v| v[i] * v[j]).sum());
    proj(&qx).sub(&proj(&qy)).unwrap().max_abs()
}

/// Random pair with `shared_null` common null directions (so `r = n −
/// shared_null` generically), entries dropped with probability `1 − density`.
pub fn random_pair(seed: u64, m: usize, p: usize, n: usize, shared_null: usize, density: f64) -> MatrixPair {
    let mut rng = rng(seed);
    let nulls = orth(&(0..shared_null).map(|_| rand_vec(&mut rng, n)).collect::<Vec<_>>());
    let gen = |rows: usize, rng: &mut ChaCha8Rng| {
        let d = DenseMatrix::from_fn(rows, n, |_, _| {
            if rng.random::<f64>() < density {
                rng.random_range(-1.0..1.0)
            } else {
                0.0
            }
        });
        let d = DenseMatrix::from_fn(rows, n, |i, j| {
            let row = d.row(i);
            row[j] - nulls.iter().map(|q| dot(&row, q) * q[j]).sum::<f64>()
        });
        SparseMatrix::from_dense(&d)
    };
    let a = gen(m, &mut rng);
    let l = gen(p, &mut rng);
    MatrixPair::new(a, l).unwrap()
}

pub fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}
