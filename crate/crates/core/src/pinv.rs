//! Application of `M†`, either through a dense eigendecomposition of `M` or
//! through LSQR.

use serde::{Deserialize, Serialize};

use crate::dense::sym_eig;
use crate::error::{GsvdError, Result};
use crate::lsqr::lsqr_solve;
use crate::matrix::{axpy, dot, DenseMatrix, Vector};
use crate::pair::MatrixPair;

pub const DEFAULT_DENSE_LIMIT: usize = 2000;
pub const DENSE_LIMIT_ENV: &str = "GSVD_DENSE_LIMIT";

/// Largest `n` for which `M` may be densified; `GSVD_DENSE_LIMIT` overrides
/// the default of 2000.
pub fn dense_limit() -> usize {
    std::env::var(DENSE_LIMIT_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_DENSE_LIMIT)
}

/// How `M†` should be applied. Turned into a [`PinvApplier`] once the pair
/// is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum PinvMode {
    /// Eigenvalues at or below `rtol * λ_max` count as zero; `None` means
    /// `n * eps`.
    Direct { rtol: Option<f64> },
    /// LSQR with `atol = btol = tol`.
    Lsqr { tol: f64, max_inner_iters: usize },
}

impl Default for PinvMode {
    fn default() -> Self {
        PinvMode::Direct { rtol: None }
    }
}

impl PinvMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PinvMode::Direct { rtol: Some(r) } if !(r > 0.0) => {
                Err(GsvdError::invalid("pinv rtol must be positive"))
            }
            PinvMode::Lsqr { tol, max_inner_iters } if !(tol > 0.0) || max_inner_iters == 0 => {
                Err(GsvdError::invalid("lsqr tol must be positive and max_inner_iters >= 1"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DensePinv {
    /// Eigenvectors of `M` for the retained eigenvalues.
    basis: DenseMatrix,
    inv_eigenvalues: Vec<f64>,
    pub rtol: f64,
    pub rank: usize,
}

#[derive(Debug, Clone)]
pub enum PinvApplier {
    Direct(DensePinv),
    Lsqr { tol: f64, max_inner_iters: usize },
}

impl PinvApplier {
    pub fn new(mode: PinvMode, pair: &MatrixPair) -> Result<Self> {
        mode.validate()?;
        match mode {
            PinvMode::Direct { rtol } => Self::direct(pair, rtol, dense_limit()),
            PinvMode::Lsqr { tol, max_inner_iters } => Ok(PinvApplier::Lsqr { tol, max_inner_iters }),
        }
    }

    pub fn direct(pair: &MatrixPair, rtol: Option<f64>, limit: usize) -> Result<Self> {
        let n = pair.n();
        if n > limit {
            return Err(GsvdError::DenseLimit { n, limit });
        }
        let rtol = rtol.unwrap_or(n as f64 * f64::EPSILON);
        let eig = sym_eig(&pair.dense_m())?;
        let lmax = eig.eigenvalues.first().copied().unwrap_or(0.0);
        let rank = eig.eigenvalues.iter().take_while(|&&l| l > rtol * lmax && l > 0.0).count();
        Ok(PinvApplier::Direct(DensePinv {
            basis: eig.eigenvectors.leading_columns(rank),
            inv_eigenvalues: eig.eigenvalues[..rank].iter().map(|l| 1.0 / l).collect(),
            rtol,
            rank,
        }))
    }

    /// `M† rhs`. Either way the result lies in `R(M)`.
    pub fn apply(&self, pair: &MatrixPair, rhs: &[f64]) -> Result<Vector> {
        if rhs.len() != pair.n() {
            return Err(GsvdError::DimensionMismatch {
                op: "pinv_apply",
                expected: pair.n(),
                got: rhs.len(),
            });
        }
        match self {
            PinvApplier::Direct(d) => {
                let mut out = vec![0.0; rhs.len()];
                for (j, inv) in d.inv_eigenvalues.iter().enumerate() {
                    let q = d.basis.col(j);
                    axpy(dot(q, rhs) * inv, q, &mut out);
                }
                Ok(out)
            }
            PinvApplier::Lsqr { tol, max_inner_iters } => {
                Ok(lsqr_solve(pair, rhs, *tol, *max_inner_iters)?.solution)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{norm2, SparseMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_pinv() {
        let p = MatrixPair::new(SparseMatrix::identity(3), SparseMatrix::zeros(1, 3)).unwrap();
        for mode in [
            PinvMode::Direct { rtol: None },
            PinvMode::Lsqr { tol: 1e-12, max_inner_iters: 20 },
        ] {
            let ap = PinvApplier::new(mode, &p).unwrap();
            let out = ap.apply(&p, &[1.0, 2.0, 3.0]).unwrap();
            for (a, b) in out.iter().zip([1.0, 2.0, 3.0]) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rank_deficient_projection() {
        let a = SparseMatrix::from_triplets(1, 2, [(0, 0, 1.0)]).unwrap();
        let p = MatrixPair::new(a, SparseMatrix::zeros(1, 2)).unwrap();
        let ap = PinvApplier::new(PinvMode::Direct { rtol: None }, &p).unwrap();
        assert_eq!(ap.apply(&p, &[2.0, 3.0]).unwrap(), vec![2.0, 0.0]);
    }

    #[test]
    fn direct_mode_respects_dense_limit() {
        let p = MatrixPair::new(SparseMatrix::identity(5), SparseMatrix::zeros(1, 5)).unwrap();
        assert!(matches!(
            PinvApplier::direct(&p, None, 4),
            Err(GsvdError::DenseLimit { n: 5, limit: 4 })
        ));
    }

    #[test]
    fn invalid_modes_rejected() {
        assert!(PinvMode::Lsqr { tol: 0.0, max_inner_iters: 3 }.validate().is_err());
        assert!(PinvMode::Direct { rtol: Some(-1.0) }.validate().is_err());
    }

    #[test]
    fn direct_and_lsqr_agree_on_rank_deficient_pair() {
        // r = n - 2: two shared null directions
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 8;
        let null1: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let null2: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let q = crate::dense::orthonormalize_against(&[], null1).unwrap();
        let q2 = crate::dense::orthonormalize_against(std::slice::from_ref(&q), null2).unwrap();
        let proj = |d: DenseMatrix| {
            // d (I - q qᵀ - q2 q2ᵀ)
            DenseMatrix::from_fn(d.nrows(), n, |i, j| {
                let row = d.row(i);
                let rq = dot(&row, &q);
                let rq2 = dot(&row, &q2);
                row[j] - rq * q[j] - rq2 * q2[j]
            })
        };
        let a = proj(DenseMatrix::from_fn(7, n, |_, _| rng.random_range(-1.0..1.0)));
        let l = proj(DenseMatrix::from_fn(5, n, |_, _| rng.random_range(-1.0..1.0)));
        let p = MatrixPair::new(SparseMatrix::from_dense(&a), SparseMatrix::from_dense(&l)).unwrap();

        let direct = PinvApplier::new(PinvMode::Direct { rtol: None }, &p).unwrap();
        if let PinvApplier::Direct(d) = &direct {
            assert_eq!(d.rank, n - 2);
        }
        let iterative = PinvApplier::new(PinvMode::Lsqr { tol: 1e-12, max_inner_iters: 500 }, &p).unwrap();

        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rhs = p.apply_m(&z).unwrap();
        let x1 = direct.apply(&p, &rhs).unwrap();
        let x2 = iterative.apply(&p, &rhs).unwrap();
        let diff = x1.iter().zip(&x2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-9, "diff {diff}");

        // output has no component along N(M); M·w reproduces a consistent rhs
        for w in [&x1, &x2] {
            for nv in [&q, &q2] {
                assert!(dot(w, nv).abs() <= 1e-10 * norm2(w));
            }
            let mw = p.apply_m(w).unwrap();
            let res = mw.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(res <= 1e-9 * norm2(&rhs));
        }

        // an arbitrary rhs still maps into R(M)
        let any: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = direct.apply(&p, &any).unwrap();
        assert!(dot(&w, &q).abs() <= 1e-10 * norm2(&w));
    }
}
