//! The matrix pair `{A, L}` and the operator `M = AᵀA + LᵀL`, which is only
//! ever applied, never assembled (except by the dense paths).

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{GsvdError, Result};
use crate::matrix::{dot, norm2, scale, DenseMatrix, SparseMatrix, Vector};

/// Seed of the power-iteration start vector.
pub const NORM_ESTIMATE_SEED: u64 = 0x5eed_0f_4e57;
pub const DEFAULT_NORM_ITERS: usize = 100;

/// Which operator of the pair the Krylov process runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum Side {
    /// `v -> Av`, approximating the `c_i`.
    #[default]
    A,
    /// `v -> Lv`, approximating the `s_i`.
    L,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::A => "A",
            Side::L => "L",
        }
    }
}

impl std::str::FromStr for Side {
    type Err = GsvdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Side::A),
            "L" | "l" => Ok(Side::L),
            other => Err(GsvdError::invalid(format!("unknown side '{other}' (expected A or L)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MatrixPair {
    a: Arc<SparseMatrix>,
    l: Arc<SparseMatrix>,
    role_swap: bool,
}

impl MatrixPair {
    pub fn new(a: SparseMatrix, l: SparseMatrix) -> Result<Self> {
        if a.ncols() != l.ncols() {
            return Err(GsvdError::DimensionMismatch {
                op: "MatrixPair::new (A and L column counts)",
                expected: a.ncols(),
                got: l.ncols(),
            });
        }
        Ok(MatrixPair {
            a: Arc::new(a),
            l: Arc::new(l),
            role_swap: false,
        })
    }

    /// The same pair operated from the given side.
    pub fn on_side(&self, side: Side) -> MatrixPair {
        MatrixPair {
            a: Arc::clone(&self.a),
            l: Arc::clone(&self.l),
            role_swap: side == Side::L,
        }
    }

    pub fn side(&self) -> Side {
        if self.role_swap {
            Side::L
        } else {
            Side::A
        }
    }

    pub fn role_swap(&self) -> bool {
        self.role_swap
    }

    pub fn a(&self) -> &SparseMatrix {
        &self.a
    }

    pub fn l(&self) -> &SparseMatrix {
        &self.l
    }

    /// The matrix the process operates on (`A`, or `L` when swapped).
    pub fn op(&self) -> &SparseMatrix {
        if self.role_swap {
            &self.l
        } else {
            &self.a
        }
    }

    /// The complementary matrix.
    pub fn other(&self) -> &SparseMatrix {
        if self.role_swap {
            &self.a
        } else {
            &self.l
        }
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    fn check_len(&self, op: &'static str, v: &[f64]) -> Result<()> {
        if v.len() != self.n() {
            return Err(GsvdError::DimensionMismatch {
                op,
                expected: self.n(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// `Aᵀ(Av) + Lᵀ(Lv)`.
    pub fn apply_m(&self, v: &[f64]) -> Result<Vector> {
        self.check_len("apply_M", v)?;
        let mut y = self.a.tmul(&self.a.mul(v));
        let ly = self.l.tmul(&self.l.mul(v));
        for (yi, li) in y.iter_mut().zip(ly) {
            *yi += li;
        }
        Ok(y)
    }

    /// `<u, v>_M = (Au)·(Av) + (Lu)·(Lv)`.
    pub fn m_inner(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.check_len("m_inner", u)?;
        self.check_len("m_inner", v)?;
        let (au, av) = (self.a.mul(u), self.a.mul(v));
        let (lu, lv) = (self.l.mul(u), self.l.mul(v));
        Ok(dot(&au, &av) + dot(&lu, &lv))
    }

    /// `(||v||_M^2, Mv)` with two products per matrix.
    pub fn m_norm_sq_and_product(&self, v: &[f64]) -> Result<(f64, Vector)> {
        self.check_len("m_norm", v)?;
        let av = self.a.mul(v);
        let lv = self.l.mul(v);
        let nrm = dot(&av, &av) + dot(&lv, &lv);
        let mut mv = self.a.tmul(&av);
        for (yi, li) in mv.iter_mut().zip(self.l.tmul(&lv)) {
            *yi += li;
        }
        Ok((nrm, mv))
    }

    /// Densified `AᵀA + LᵀL`.
    pub fn dense_m(&self) -> DenseMatrix {
        let a = self.a.to_dense();
        let l = self.l.to_dense();
        let ata = a.tr_matmul(&a).expect("shapes agree");
        let ltl = l.tr_matmul(&l).expect("shapes agree");
        let n = self.n();
        // symmetric by construction; average to remove rounding asymmetry
        DenseMatrix::from_fn(n, n, |i, j| {
            0.5 * (ata[(i, j)] + ata[(j, i)] + ltl[(i, j)] + ltl[(j, i)])
        })
    }

    /// Power-iteration estimate of `||(Aᵀ, Lᵀ)ᵀ||_2 = λ_max(M)^{1/2}` from a
    /// fixed seeded start. Rayleigh quotients of a PSD operator only grow
    /// along the iteration, so the result never exceeds the true norm and is
    /// nondecreasing in `iters`.
    pub fn spectral_norm_estimate(&self, iters: usize) -> f64 {
        let n = self.n();
        if n == 0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(NORM_ESTIMATE_SEED);
        let mut x: Vector = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let nx = norm2(&x);
        scale(1.0 / nx, &mut x);
        let mut best: f64 = 0.0;
        for _ in 0..iters.max(1) {
            let (rq, mx) = self.m_norm_sq_and_product(&x).expect("length n");
            best = best.max(rq);
            let nm = norm2(&mx);
            if nm == 0.0 {
                break;
            }
            x = mx;
            scale(1.0 / nm, &mut x);
        }
        best.max(0.0).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_pair(seed: u64, m: usize, p: usize, n: usize) -> MatrixPair {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gen = |rows| {
            let mut t = Vec::new();
            for i in 0..rows {
                for j in 0..n {
                    if rng.random::<f64>() < 0.6 {
                        t.push((i, j, rng.random_range(-1.0..1.0)));
                    }
                }
            }
            SparseMatrix::from_triplets(rows, n, t).unwrap()
        };
        let a = gen(m);
        let l = gen(p);
        MatrixPair::new(a, l).unwrap()
    }

    fn rand_vec(seed: u64, n: usize) -> Vector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn rejects_mismatched_columns() {
        let r = MatrixPair::new(SparseMatrix::identity(2), SparseMatrix::identity(3));
        assert!(matches!(r, Err(GsvdError::DimensionMismatch { .. })));
    }

    #[test]
    fn apply_m_identity_and_diag() {
        let p = MatrixPair::new(SparseMatrix::identity(2), SparseMatrix::zeros(1, 2)).unwrap();
        assert_eq!(p.apply_m(&[3.0, -1.0]).unwrap(), vec![3.0, -1.0]);
        let p = MatrixPair::new(
            SparseMatrix::zeros(2, 2),
            SparseMatrix::from_diag(2, 2, &[1.0, 2.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(p.apply_m(&[1.0, 1.0]).unwrap(), vec![1.0, 4.0]);
        assert!(p.apply_m(&[1.0]).is_err());
    }

    #[test]
    fn apply_m_matches_dense() {
        let p = random_pair(1, 8, 6, 5);
        let v = rand_vec(2, 5);
        let mv = p.apply_m(&v).unwrap();
        let dense = p.dense_m().matvec(&v).unwrap();
        let s = norm2(&dense);
        for (x, y) in mv.iter().zip(&dense) {
            assert!((x - y).abs() <= 1e-13 * s);
        }
    }

    #[test]
    fn m_inner_cases() {
        let p = MatrixPair::new(SparseMatrix::identity(2), SparseMatrix::zeros(1, 2)).unwrap();
        assert_eq!(p.m_inner(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);

        // shared null vector e2
        let a = SparseMatrix::from_triplets(2, 2, [(0, 0, 1.0), (1, 0, 2.0)]).unwrap();
        let l = SparseMatrix::from_triplets(1, 2, [(0, 0, 3.0)]).unwrap();
        let p = MatrixPair::new(a, l).unwrap();
        assert_eq!(p.m_inner(&[0.0, 1.0], &[0.7, -2.0]).unwrap(), 0.0);

        let p = random_pair(3, 7, 4, 6);
        let (u, v) = (rand_vec(4, 6), rand_vec(5, 6));
        let dense = dot(&u, &p.dense_m().matvec(&v).unwrap());
        let got = p.m_inner(&u, &v).unwrap();
        assert!((got - dense).abs() <= 1e-13 * dense.abs().max(1.0));
    }

    #[test]
    fn norm_estimate_simple_pairs() {
        let p = MatrixPair::new(SparseMatrix::identity(2), SparseMatrix::zeros(2, 2)).unwrap();
        assert!((p.spectral_norm_estimate(50) - 1.0).abs() < 1e-10);
        let p = MatrixPair::new(SparseMatrix::zeros(2, 2), SparseMatrix::identity(2).scaled(2.0)).unwrap();
        assert!((p.spectral_norm_estimate(50) - 2.0).abs() < 1e-10);
        let z = MatrixPair::new(SparseMatrix::zeros(2, 3), SparseMatrix::zeros(1, 3)).unwrap();
        assert_eq!(z.spectral_norm_estimate(10), 0.0);
    }

    #[test]
    fn norm_estimate_is_monotone() {
        let p = random_pair(8, 9, 9, 9);
        let mut prev = 0.0;
        for it in 1..40 {
            let e = p.spectral_norm_estimate(it);
            assert!(e >= prev);
            prev = e;
        }
    }

    #[test]
    fn side_swap_exchanges_roles() {
        let p = random_pair(9, 3, 5, 4);
        let q = p.on_side(Side::L);
        assert_eq!(q.op().nrows(), 5);
        assert_eq!(q.other().nrows(), 3);
        assert_eq!(q.on_side(Side::A).op().nrows(), 3);
    }

    proptest! {
        #[test]
        fn apply_m_symmetric_and_null_space_consistent(seed in 0u64..300) {
            let p = random_pair(seed, 6, 3, 5);
            let (u, v) = (rand_vec(seed + 1, 5), rand_vec(seed + 2, 5));
            let lhs = dot(&p.apply_m(&u).unwrap(), &v);
            let rhs = dot(&u, &p.apply_m(&v).unwrap());
            let scale = p.dense_m().frobenius() * norm2(&u) * norm2(&v);
            prop_assert!((lhs - rhs).abs() <= 1e-13 * scale);
            prop_assert!(p.m_inner(&u, &u).unwrap() >= 0.0);
        }
    }
}
