//! Small dense kernels: a cyclic Jacobi symmetric eigensolver, the compact
//! SVD built on top of it, and a bisection/inverse-iteration path for the
//! singular values of a lower bidiagonal matrix.

use crate::error::{GsvdError, Result};
use crate::matrix::{axpy, dot, norm2, scale, DenseMatrix, Vector};

const EPS: f64 = f64::EPSILON;
const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone)]
pub struct SymEigResult {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal columns, matching `eigenvalues`.
    pub eigenvectors: DenseMatrix,
}

#[derive(Debug, Clone)]
pub struct SmallSvdResult {
    /// Descending, nonnegative.
    pub singular_values: Vec<f64>,
    /// `nrows x ncols`, orthonormal columns.
    pub left: DenseMatrix,
    /// `ncols x ncols`, orthogonal.
    pub right: DenseMatrix,
}

/// Flips `v` so that its largest-magnitude entry (first one on ties) is
/// positive. Returns the sign applied.
pub(crate) fn normalize_sign(v: &mut [f64]) -> f64 {
    let mut best = 0.0;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = if x < 0.0 { -1.0 } else { 1.0 };
        }
    }
    if sign < 0.0 {
        scale(-1.0, v);
    }
    sign
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations,
/// run until the off-diagonal Frobenius norm is at most `1e-14 * ||S||_F`.
pub fn sym_eig(s: &DenseMatrix) -> Result<SymEigResult> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(GsvdError::invalid(format!(
            "sym_eig needs a square matrix, got {}x{}",
            n,
            s.ncols()
        )));
    }
    if !s.is_finite() {
        return Err(GsvdError::invalid("sym_eig: non-finite entries"));
    }
    let smax = s.max_abs();
    let asym = s.sub(&s.transpose())?.max_abs();
    if asym > 1e-12 * smax {
        return Err(GsvdError::NotSymmetric { asym, scale: smax });
    }

    // symmetrize exactly so rotations act on a truly symmetric matrix
    let mut a = DenseMatrix::from_fn(n, n, |i, j| 0.5 * (s[(i, j)] + s[(j, i)]));
    let mut v = DenseMatrix::identity(n);
    let target = 1e-14 * a.frobenius();

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
        }
        if off.sqrt() <= target {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                rotate_columns(&mut a, p, q, c, sn);
                rotate_rows(&mut a, p, q, c, sn);
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                rotate_columns(&mut v, p, q, c, sn);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eigenvectors.col_mut(dst);
        col.copy_from_slice(v.col(src));
        normalize_sign(col);
    }
    Ok(SymEigResult {
        eigenvalues,
        eigenvectors,
    })
}

fn rotate_columns(a: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..a.nrows() {
        let x = a[(k, p)];
        let y = a[(k, q)];
        a[(k, p)] = c * x - s * y;
        a[(k, q)] = s * x + c * y;
    }
}

fn rotate_rows(a: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..a.ncols() {
        let x = a[(p, k)];
        let y = a[(q, k)];
        a[(p, k)] = c * x - s * y;
        a[(q, k)] = s * x + c * y;
    }
}

/// Compact SVD `B = Y diag(sigma) Hᵀ` of a tall matrix, via [`sym_eig`] of
/// `BᵀB`. Left vectors for singular values at or below
/// `nrows * eps * sigma_max` are completed by Gram-Schmidt.
pub fn small_svd(b: &DenseMatrix) -> Result<SmallSvdResult> {
    let (m, n) = (b.nrows(), b.ncols());
    if m < n {
        return Err(GsvdError::invalid(format!(
            "small_svd needs nrows >= ncols, got {m}x{n}"
        )));
    }
    let eig = sym_eig(&b.tr_matmul(b)?)?;
    let sigma: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let cutoff = m as f64 * EPS * sigma.first().copied().unwrap_or(0.0);

    let mut left = DenseMatrix::zeros(m, n);
    let mut deficient = Vec::new();
    for j in 0..n {
        if sigma[j] > cutoff {
            let mut y = b.matvec(eig.eigenvectors.col(j))?;
            scale(1.0 / sigma[j], &mut y);
            left.col_mut(j).copy_from_slice(&y);
        } else {
            deficient.push(j);
        }
    }
    if !deficient.is_empty() {
        let mut basis: Vec<Vector> = (0..n)
            .filter(|j| !deficient.contains(j))
            .map(|j| left.col(j).to_vec())
            .collect();
        let mut candidate = 0;
        for j in deficient {
            loop {
                let mut e = vec![0.0; m];
                e[candidate % m] = 1.0;
                candidate += 1;
                if let Some(y) = orthonormalize_against(&basis, e) {
                    left.col_mut(j).copy_from_slice(&y);
                    basis.push(y);
                    break;
                }
            }
        }
    }
    Ok(SmallSvdResult {
        singular_values: sigma,
        left,
        right: eig.eigenvectors,
    })
}

/// Two passes of classical Gram-Schmidt against an orthonormal set. Returns
/// `None` when the candidate is (numerically) in their span.
pub(crate) fn orthonormalize_against(basis: &[Vector], mut v: Vector) -> Option<Vector> {
    let n0 = norm2(&v);
    if n0 == 0.0 {
        return None;
    }
    for _ in 0..2 {
        let coeffs: Vec<f64> = basis.iter().map(|q| dot(q, &v)).collect();
        for (q, c) in basis.iter().zip(coeffs) {
            axpy(-c, q, &mut v);
        }
    }
    let nv = norm2(&v);
    if nv <= 1e-8 * n0 {
        return None;
    }
    scale(1.0 / nv, &mut v);
    Some(v)
}

/// Singular values of the `(k+1) x k` lower bidiagonal matrix with diagonal
/// `alphas[..k]` and subdiagonal `betas[1..=k]`, with singular vectors only
/// for requested indices.
///
/// Works on the `(2k+1)`-order Golub-Kahan form, a zero-diagonal tridiagonal
/// with off-diagonals `alpha_1, beta_2, alpha_2, ..., alpha_k, beta_{k+1}`.
/// Bisection on its Sturm sequence gives every singular value to absolute
/// accuracy of order `eps * ||B||`, without squaring; one inverse-iteration
/// solve then recovers each requested `(y, h)` pair.
#[derive(Debug, Clone)]
pub struct BidiagSpectrum {
    /// Descending.
    pub values: Vec<f64>,
    off: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BidiagTriplet {
    pub sigma: f64,
    /// Length `k+1`.
    pub left: Vector,
    /// Length `k`.
    pub right: Vector,
}

impl BidiagSpectrum {
    pub fn new(alphas: &[f64], betas: &[f64], k: usize) -> Result<Self> {
        if k == 0 || alphas.len() < k || betas.len() < k + 1 {
            return Err(GsvdError::invalid("bidiagonal spectrum needs k >= 1 coefficients"));
        }
        let mut off = Vec::with_capacity(2 * k);
        for i in 0..k {
            off.push(alphas[i]);
            off.push(betas[i + 1]);
        }
        let bound = (0..=off.len())
            .map(|i| {
                let l = if i > 0 { off[i - 1].abs() } else { 0.0 };
                let r = if i < off.len() { off[i].abs() } else { 0.0 };
                l + r
            })
            .fold(0.0, f64::max);

        let order = 2 * k + 1;
        // eigenvalues sorted ascending: index order-1-j is the j-th largest
        let values = (0..k)
            .map(|j| bisect(&off, order - 1 - j, bound))
            .map(|v| v.max(0.0))
            .collect();
        Ok(BidiagSpectrum { values, off })
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    /// Singular triplet for the `j`-th largest singular value.
    pub fn triplet(&self, j: usize) -> BidiagTriplet {
        let sigma = self.values[j];
        let z = inverse_iteration(&self.off, sigma);
        let k = self.k();
        let mut left: Vector = (0..=k).map(|i| z[2 * i]).collect();
        let mut right: Vector = (0..k).map(|i| z[2 * i + 1]).collect();
        let nr = norm2(&right);
        if nr > 0.0 {
            scale(1.0 / nr, &mut right);
        }
        let sign = normalize_sign(&mut right);
        let nl = norm2(&left);
        if nl > 0.0 {
            scale(sign / nl, &mut left);
        }
        BidiagTriplet { sigma, left, right }
    }
}

/// Number of eigenvalues strictly less than `x` for the zero-diagonal
/// symmetric tridiagonal with off-diagonal `off`.
fn sturm_count(off: &[f64], x: f64) -> usize {
    let tiny = f64::MIN_POSITIVE.sqrt();
    let mut count = 0;
    let mut q = -x;
    if q == 0.0 {
        q = -tiny;
    }
    if q < 0.0 {
        count += 1;
    }
    for &e in off {
        q = -x - e * e / q;
        if q == 0.0 {
            q = -tiny;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Eigenvalue with ascending index `idx`.
fn bisect(off: &[f64], idx: usize, bound: f64) -> f64 {
    let mut lo = -bound - 1e-300;
    let mut hi = bound + 1e-300;
    let tol = 2.0 * EPS * bound.max(f64::MIN_POSITIVE);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid == lo || mid == hi {
            break;
        }
        if sturm_count(off, mid) > idx {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Eigenvector of the zero-diagonal tridiagonal for eigenvalue estimate
/// `shift`, by inverse iteration with partial-pivoting tridiagonal LU.
fn inverse_iteration(off: &[f64], shift: f64) -> Vector {
    let n = off.len() + 1;
    let norm = off.iter().fold(0.0f64, |m, e| m.max(e.abs())).max(f64::MIN_POSITIVE);
    let pivot_floor = EPS * norm;

    // factor T - shift I = P L U once
    let diag = vec![-shift; n];
    let lu = TridiagLu::factor(off, &diag, off, pivot_floor);

    // deterministic start vector with no special structure
    let mut z: Vector = (0..n).map(|i| 1.0 + 0.5 * ((i * 7919 % 97) as f64 / 97.0)).collect();
    for _ in 0..3 {
        lu.solve(&mut z);
        let nz = norm2(&z);
        if !nz.is_finite() || nz == 0.0 {
            break;
        }
        scale(1.0 / nz, &mut z);
    }
    z
}

struct TridiagLu {
    // U has up to two superdiagonals after pivoting
    u0: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    l: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    /// `sub[i]` is entry (i+1, i), `sup[i]` is entry (i, i+1).
    fn factor(sub: &[f64], diag: &[f64], sup: &[f64], floor: f64) -> Self {
        let n = diag.len();
        let mut u0 = diag.to_vec();
        let mut u1: Vec<f64> = sup.to_vec();
        u1.push(0.0);
        let mut u2 = vec![0.0; n];
        let mut l = vec![0.0; n];
        let mut swapped = vec![false; n];
        for i in 0..n.saturating_sub(1) {
            let below = sub[i];
            if below.abs() > u0[i].abs() {
                // swap rows i and i+1
                swapped[i] = true;
                let (r0, r1, r2) = (u0[i], u1[i], u2[i]);
                u0[i] = below;
                u1[i] = u0[i + 1];
                u2[i] = u1[i + 1];
                let m = r0 / below;
                l[i] = m;
                u0[i + 1] = r1 - m * u1[i];
                u1[i + 1] = r2 - m * u2[i];
            } else {
                if u0[i] == 0.0 {
                    u0[i] = floor;
                }
                let m = below / u0[i];
                l[i] = m;
                u0[i + 1] -= m * u1[i];
                u1[i + 1] -= m * u2[i];
            }
        }
        if n > 0 && u0[n - 1].abs() < floor {
            u0[n - 1] = if u0[n - 1] < 0.0 { -floor } else { floor };
        }
        for v in u0.iter_mut() {
            if *v == 0.0 {
                *v = floor;
            }
        }
        TridiagLu {
            u0,
            u1,
            u2,
            l,
            swapped,
        }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                b.swap(i, i + 1);
            }
            b[i + 1] -= self.l[i] * b[i];
        }
        for i in (0..n).rev() {
            let mut v = b[i];
            if i + 1 < n {
                v -= self.u1[i] * b[i + 1];
            }
            if i + 2 < n {
                v -= self.u2[i] * b[i + 2];
            }
            b[i] = v / self.u0[i];
        }
    }
}

/// Lower bidiagonal `(k+1) x k` matrix from diagonal `alphas[..k]` and
/// subdiagonal `betas[1..=k]`.
pub(crate) fn lower_bidiagonal(alphas: &[f64], betas: &[f64], k: usize) -> DenseMatrix {
    let mut b = DenseMatrix::zeros(k + 1, k);
    for i in 0..k {
        b[(i, i)] = alphas[i];
        b[(i + 1, i)] = betas[i + 1];
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DenseMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        DenseMatrix::from_fn(n, n, |i, j| g[(i, j)] + g[(j, i)])
    }

    fn orthonormality_defect(q: &DenseMatrix) -> f64 {
        q.tr_matmul(q).unwrap().sub(&DenseMatrix::identity(q.ncols())).unwrap().max_abs()
    }

    #[test]
    fn diagonal_input() {
        let s = DenseMatrix::from_rows(&[
            vec![3.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 2.0],
        ])
        .unwrap();
        let r = sym_eig(&s).unwrap();
        assert_eq!(r.eigenvalues, vec![3.0, 2.0, 1.0]);
        let expected = DenseMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        assert_eq!(r.eigenvectors, expected);
    }

    #[test]
    fn swap_matrix() {
        let s = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let r = sym_eig(&s).unwrap();
        assert!((r.eigenvalues[0] - 1.0).abs() < 1e-15);
        assert!((r.eigenvalues[1] + 1.0).abs() < 1e-15);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = r.eigenvectors.col(0);
        assert!((v0[0] - h).abs() < 1e-15 && (v0[1] - h).abs() < 1e-15);
        let v1 = r.eigenvectors.col(1);
        // sign convention: the first of two equal-magnitude entries is positive
        assert!((v1[0] - h).abs() < 1e-15 && (v1[1] + h).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonsymmetric() {
        let s = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&s), Err(GsvdError::NotSymmetric { .. })));
    }

    #[test]
    fn random_reconstruction() {
        let s = random_symmetric(6, 3);
        let r = sym_eig(&s).unwrap();
        let q = &r.eigenvectors;
        let ql = DenseMatrix::from_fn(6, 6, |i, j| q[(i, j)] * r.eigenvalues[j]);
        let rec = ql.matmul(&q.transpose()).unwrap();
        assert!(rec.sub(&s).unwrap().max_abs() <= 1e-12);
        assert!(orthonormality_defect(q) <= 1e-12);
        let sq = s.matmul(q).unwrap();
        assert!(sq.sub(&ql).unwrap().max_abs() <= 1e-10 * s.max_abs());
        assert!(r.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn svd_of_column() {
        let b = DenseMatrix::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        let r = small_svd(&b).unwrap();
        assert!((r.singular_values[0] - 5.0).abs() < 1e-14);
        assert_eq!(r.right[(0, 0)], 1.0);
        assert!((r.left[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((r.left[(1, 0)] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn svd_of_padded_diagonal() {
        let b = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let r = small_svd(&b).unwrap();
        assert_eq!(r.singular_values, vec![2.0, 1.0]);
    }

    #[test]
    fn svd_rejects_wide() {
        assert!(small_svd(&DenseMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn svd_completes_left_vectors_for_zero_singular_values() {
        let b = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let r = small_svd(&b).unwrap();
        assert_eq!(r.singular_values[1], 0.0);
        assert!(orthonormality_defect(&r.left) < 1e-14);
    }

    #[test]
    fn random_bidiagonal_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let alphas: Vec<f64> = (0..5).map(|_| rng.random_range(0.1..1.0)).collect();
        let betas: Vec<f64> = (0..6).map(|_| rng.random_range(0.1..1.0)).collect();
        let b = lower_bidiagonal(&alphas, &betas, 5);
        let r = small_svd(&b).unwrap();
        let smax = r.singular_values[0];
        let ys = DenseMatrix::from_fn(6, 5, |i, j| r.left[(i, j)] * r.singular_values[j]);
        let rec = ys.matmul(&r.right.transpose()).unwrap();
        assert!(rec.sub(&b).unwrap().max_abs() <= 1e-12 * smax);
        assert!(orthonormality_defect(&r.left) <= 1e-12);
        assert!(orthonormality_defect(&r.right) <= 1e-12);
    }

    #[test]
    fn bidiag_spectrum_matches_jacobi_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for k in [1usize, 2, 7, 30] {
            let alphas: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
            let betas: Vec<f64> = (0..=k).map(|_| rng.random_range(0.01..1.0)).collect();
            let b = lower_bidiagonal(&alphas, &betas, k);
            let svd = small_svd(&b).unwrap();
            let spec = BidiagSpectrum::new(&alphas, &betas, k).unwrap();
            for j in 0..k {
                assert!((spec.values[j] - svd.singular_values[j]).abs() < 1e-13);
                let t = spec.triplet(j);
                // B h = sigma y and Bᵀ y = sigma h
                let bh = b.matvec(&t.right).unwrap();
                let bty = b.tr_matvec(&t.left).unwrap();
                for i in 0..=k {
                    assert!((bh[i] - t.sigma * t.left[i]).abs() < 1e-12, "k={k} j={j}");
                }
                for i in 0..k {
                    assert!((bty[i] - t.sigma * t.right[i]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn bidiag_spectrum_with_zero_last_beta() {
        // exact termination: B has a zero last row
        let spec = BidiagSpectrum::new(&[1.0], &[0.0, 0.0], 1).unwrap();
        assert!((spec.values[0] - 1.0).abs() < 1e-15);
        let t = spec.triplet(0);
        assert!((t.right[0] - 1.0).abs() < 1e-15);
        assert!(t.left[1].abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn eigen_trace_and_svd_consistency(seed in 0u64..500, n in 1usize..8) {
            let s = random_symmetric(n, seed);
            let r = sym_eig(&s).unwrap();
            let trace: f64 = (0..n).map(|i| s[(i, i)]).sum();
            let sum: f64 = r.eigenvalues.iter().sum();
            prop_assert!((trace - sum).abs() <= 1e-12 * s.frobenius().max(1.0));

            let b = DenseMatrix::from_fn(n + 1, n, |i, j| s[(i % n, j)] + i as f64 * 0.1);
            let svd = small_svd(&b).unwrap();
            let gram = sym_eig(&b.tr_matmul(&b).unwrap()).unwrap();
            for (sv, l) in svd.singular_values.iter().zip(&gram.eigenvalues) {
                let root = l.max(0.0).sqrt();
                prop_assert!((sv - root).abs() <= 1e-10 * root.max(1e-300) + 1e-300);
            }
        }
    }
}
