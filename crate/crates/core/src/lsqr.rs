//! LSQR on the symmetric operator `M`, used to apply `M†` without forming it.

use crate::error::{GsvdError, Result};
use crate::matrix::{axpy, norm2, scale, Vector};
use crate::pair::MatrixPair;

#[derive(Debug, Clone)]
pub struct LsqrReport {
    pub solution: Vector,
    pub iterations: usize,
    /// `||M s - rhs|| / ||rhs||` as tracked by the recurrence.
    pub final_relative_residual: f64,
    pub converged: bool,
}

/// Solves `min_s ||M s - rhs||_2` from `s = 0`, so every iterate stays in
/// `R(M)` and a consistent right-hand side yields the minimum-norm solution
/// `M† rhs`.
///
/// Stops on the usual pair of tests with `atol = btol = tol`:
/// `||r|| <= tol (||rhs|| + ||M|| ||s||)` or
/// `||M r|| <= tol ||M|| ||r||`, where `||M||` is the running Frobenius-type
/// estimate from the bidiagonalization.
pub fn lsqr_solve(pair: &MatrixPair, rhs: &[f64], tol: f64, max_iters: usize) -> Result<LsqrReport> {
    let n = pair.n();
    if rhs.len() != n {
        return Err(GsvdError::DimensionMismatch {
            op: "lsqr_solve",
            expected: n,
            got: rhs.len(),
        });
    }
    if !(tol > 0.0) {
        return Err(GsvdError::invalid("lsqr tolerance must be positive"));
    }
    let tol = tol.max(f64::EPSILON);
    let mut x = vec![0.0; n];

    let bnorm = norm2(rhs);
    if bnorm == 0.0 {
        return Ok(LsqrReport {
            solution: x,
            iterations: 0,
            final_relative_residual: 0.0,
            converged: true,
        });
    }
    let mut u = rhs.to_vec();
    scale(1.0 / bnorm, &mut u);
    let mut beta = bnorm;
    let mut v = pair.apply_m(&u)?;
    let mut alpha = norm2(&v);
    if alpha == 0.0 {
        // rhs is orthogonal to R(M); zero is the minimum-norm solution
        return Ok(LsqrReport {
            solution: x,
            iterations: 0,
            final_relative_residual: 1.0,
            converged: true,
        });
    }
    scale(1.0 / alpha, &mut v);
    let mut w = v.clone();

    let mut phibar = beta;
    let mut rhobar = alpha;
    let mut anorm_sq = 0.0;
    let mut rnorm = bnorm;

    for it in 1..=max_iters {
        // u = M v - alpha u
        let mut mv = pair.apply_m(&v)?;
        axpy(-alpha, &u, &mut mv);
        u = mv;
        beta = norm2(&u);
        if beta > 0.0 {
            scale(1.0 / beta, &mut u);
        }
        anorm_sq += alpha * alpha + beta * beta;

        // v = M u - beta v
        let mut mu = pair.apply_m(&u)?;
        axpy(-beta, &v, &mut mu);
        v = mu;
        alpha = norm2(&v);
        if alpha > 0.0 {
            scale(1.0 / alpha, &mut v);
        }

        let rho = rhobar.hypot(beta);
        let c = rhobar / rho;
        let s = beta / rho;
        let theta = s * alpha;
        rhobar = -c * alpha;
        let phi = c * phibar;
        phibar *= s;
        let tau = s * phi;

        axpy(phi / rho, &w, &mut x);
        let mut wn = v.clone();
        axpy(-theta / rho, &w, &mut wn);
        w = wn;

        rnorm = phibar;
        let arnorm = alpha * tau.abs();
        let anorm = anorm_sq.sqrt();
        let xnorm = norm2(&x);

        let test1 = rnorm / bnorm;
        let rtol = tol + tol * anorm * xnorm / bnorm;
        let test2 = if rnorm > 0.0 { arnorm / (anorm * rnorm) } else { 0.0 };
        if test1 <= rtol || test2 <= tol || beta == 0.0 || alpha == 0.0 {
            return Ok(LsqrReport {
                solution: x,
                iterations: it,
                final_relative_residual: test1,
                converged: true,
            });
        }
    }
    Ok(LsqrReport {
        solution: x,
        iterations: max_iters,
        final_relative_residual: rnorm / bnorm,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::sym_eig;
    use crate::matrix::{dot, SparseMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_operator_one_iteration() {
        let p = MatrixPair::new(SparseMatrix::identity(4), SparseMatrix::zeros(1, 4)).unwrap();
        let rhs = vec![1.0, -2.0, 0.5, 3.0];
        let r = lsqr_solve(&p, &rhs, 1e-12, 10).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 1);
        for (a, b) in r.solution.iter().zip(&rhs) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_operator() {
        let p = MatrixPair::new(
            SparseMatrix::from_diag(2, 2, &[2.0, 1.0]).unwrap(),
            SparseMatrix::zeros(1, 2),
        )
        .unwrap();
        let tol = 1e-12;
        let r = lsqr_solve(&p, &[4.0, 1.0], tol, 50).unwrap();
        assert!(r.converged);
        assert!((r.solution[0] - 1.0).abs() < 10.0 * tol);
        assert!((r.solution[1] - 1.0).abs() < 10.0 * tol);
    }

    #[test]
    fn zero_rhs_short_circuits() {
        let p = MatrixPair::new(SparseMatrix::identity(3), SparseMatrix::zeros(1, 3)).unwrap();
        let r = lsqr_solve(&p, &[0.0; 3], 1e-10, 10).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.solution, vec![0.0; 3]);
    }

    #[test]
    fn singular_consistent_rhs_matches_dense_pseudoinverse() {
        // rank-deficient pair: columns 4 and 5 are combinations of the others
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 6;
        let base = |rng: &mut ChaCha8Rng, rows: usize| {
            let mut d = crate::matrix::DenseMatrix::from_fn(rows, n, |_, _| rng.random_range(-1.0..1.0));
            for i in 0..rows {
                d[(i, 4)] = d[(i, 0)] + d[(i, 1)];
                d[(i, 5)] = d[(i, 2)] - 2.0 * d[(i, 3)];
            }
            SparseMatrix::from_dense(&d)
        };
        let a = base(&mut rng, 5);
        let l = base(&mut rng, 4);
        let p = MatrixPair::new(a, l).unwrap();

        let eig = sym_eig(&p.dense_m()).unwrap();
        let lmax = eig.eigenvalues[0];
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rhs = p.apply_m(&z).unwrap();
        let mut expected = vec![0.0; n];
        for (j, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam > n as f64 * f64::EPSILON * lmax {
                let q = eig.eigenvectors.col(j);
                axpy(dot(q, &rhs) / lam, q, &mut expected);
            }
        }
        let tol = 1e-12;
        let r = lsqr_solve(&p, &rhs, tol, 500).unwrap();
        assert!(r.converged);
        let err = r.solution.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 10.0 * tol * norm2(&expected).max(1.0), "err {err}");
    }

    #[test]
    fn rejects_bad_arguments() {
        let p = MatrixPair::new(SparseMatrix::identity(3), SparseMatrix::zeros(1, 3)).unwrap();
        assert!(lsqr_solve(&p, &[1.0; 2], 1e-8, 5).is_err());
        assert!(lsqr_solve(&p, &[1.0; 3], 0.0, 5).is_err());
    }
}
