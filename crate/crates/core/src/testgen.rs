//! Designed pairs with a known GSVD: `A = C_A Wᵀ D`, `L = S_L Wᵀ D` with `W`
//! orthogonal and `D` positive diagonal.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dense::orthonormalize_against;
use crate::error::{GsvdError, Result};
use crate::matrix::{dot, DenseMatrix, SparseMatrix, Vector};
use crate::mtx::write_matrix_market;
use crate::oracle::{GsvdReference, ZERO_CUTOFF};
use crate::pair::MatrixPair;

pub const DEFAULT_SEED: u64 = 2024;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthManifest {
    pub recipe: String,
    pub n: usize,
    pub r: usize,
    pub seed: u64,
    pub d_range: (f64, f64),
    /// How `W` was built.
    pub w_kind: String,
    pub c: Vec<f64>,
    pub s: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DesignedPair {
    pub pair: MatrixPair,
    pub truth: GsvdReference,
    pub w: DenseMatrix,
    pub d: Vec<f64>,
    pub manifest: TruthManifest,
}

impl DesignedPair {
    /// Writes `A.mtx`, `L.mtx` and `truth.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| GsvdError::io(dir, e))?;
        write_matrix_market(self.pair.a(), dir.join("A.mtx"))?;
        write_matrix_market(self.pair.l(), dir.join("L.mtx"))?;
        let path = dir.join("truth.json");
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&path, json).map_err(|e| GsvdError::io(&path, e))
    }
}

/// `k` evenly spaced values from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, k: usize) -> Vec<f64> {
    match k {
        0 => vec![],
        1 => vec![a],
        _ => (0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect(),
    }
}

/// Seeded random orthogonal matrix (Gram-Schmidt on Gaussian columns).
pub fn random_orthogonal(n: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: Vec<Vector> = Vec::with_capacity(n);
    while cols.len() < n {
        let cand: Vector = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        if let Some(q) = orthonormalize_against(&cols, cand) {
            cols.push(q);
        }
    }
    DenseMatrix::from_columns(n, &cols).expect("columns have length n")
}

pub fn make_designed_pair(
    n: usize,
    r: usize,
    c_spec: &[f64],
    d_range: (f64, f64),
    seed: u64,
) -> Result<DesignedPair> {
    make_designed_named("designed", n, r, c_spec, d_range, seed)
}

fn make_designed_named(
    recipe: &str,
    n: usize,
    r: usize,
    c_spec: &[f64],
    d_range: (f64, f64),
    seed: u64,
) -> Result<DesignedPair> {
    if r == 0 || r > n {
        return Err(GsvdError::invalid(format!("need 1 <= r <= n, got r = {r}, n = {n}")));
    }
    if c_spec.len() != r {
        return Err(GsvdError::invalid(format!(
            "c_spec has {} values, expected r = {r}",
            c_spec.len()
        )));
    }
    if c_spec.iter().any(|c| !(0.0..=1.0).contains(c)) || c_spec.windows(2).any(|w| w[1] > w[0]) {
        return Err(GsvdError::invalid("c_spec must be nonincreasing within [0, 1]"));
    }
    let (lo, hi) = d_range;
    if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
        return Err(GsvdError::invalid("d_range must satisfy 0 < lo <= hi"));
    }

    let c: Vec<f64> = c_spec.to_vec();
    let s: Vec<f64> = c.iter().map(|ci| (1.0 - ci * ci).max(0.0).sqrt()).collect();
    let w = random_orthogonal(n, seed);
    let d = linspace(lo, hi, n);

    // row i of A is c_i (W e_i)ᵀ D, row i of L is s_i (W e_i)ᵀ D
    let wtd = DenseMatrix::from_fn(n, n, |i, j| w[(j, i)] * d[j]);
    let a = DenseMatrix::from_fn(n, n, |i, j| if i < r { c[i] * wtd[(i, j)] } else { 0.0 });
    let l = DenseMatrix::from_fn(n, n, |i, j| if i < r { s[i] * wtd[(i, j)] } else { 0.0 });
    let pair = MatrixPair::new(SparseMatrix::from_dense(&a), SparseMatrix::from_dense(&l))?;

    // x_i = D⁻¹ W e_i, moved into R(M) = R(D W_r) when r < n
    let mut range_basis: Vec<Vector> = Vec::with_capacity(r);
    if r < n {
        for i in 0..r {
            let col: Vector = (0..n).map(|k| d[k] * w[(k, i)]).collect();
            range_basis.push(orthonormalize_against(&range_basis, col).expect("D W_r has full rank"));
        }
    }
    let xs: Vec<Vector> = (0..r)
        .map(|i| {
            let x: Vector = (0..n).map(|k| w[(k, i)] / d[k]).collect();
            if r < n {
                project(&range_basis, &x)
            } else {
                x
            }
        })
        .collect();

    let mut null_cols: Vec<Vector> = Vec::with_capacity(n - r);
    for i in r..n {
        let col: Vector = (0..n).map(|k| w[(k, i)] / d[k]).collect();
        null_cols.push(orthonormalize_against(&null_cols, col).expect("D⁻¹ W has full rank"));
    }

    let (tc, ts): (Vec<f64>, Vec<f64>) = c
        .iter()
        .zip(&s)
        .map(|(&ci, &si)| {
            if si <= ZERO_CUTOFF {
                (1.0, 0.0)
            } else if ci <= ZERO_CUTOFF {
                (0.0, 1.0)
            } else {
                (ci, si)
            }
        })
        .unzip();
    let q1 = ts.iter().filter(|&&v| v == 0.0).count();
    let q3 = tc.iter().filter(|&&v| v == 0.0).count();

    // p_{A,i} = e_i; P_L lists e_{q1}, ..., e_{r-1} first, then the rest
    let mut pl_order: Vec<usize> = (q1..r).collect();
    pl_order.extend(0..q1);
    pl_order.extend(r..n);
    let p_l = DenseMatrix::from_fn(n, n, |i, j| if pl_order[j] == i { 1.0 } else { 0.0 });

    let truth = GsvdReference {
        n,
        m: n,
        p: n,
        r,
        q1,
        q2: r - q1 - q3,
        q3,
        c: tc,
        s: ts,
        x1: DenseMatrix::from_columns(n, &xs)?,
        p_a: DenseMatrix::identity(n),
        p_l,
        null_basis: DenseMatrix::from_columns(n, &null_cols)?,
        rank_tol: n as f64 * f64::EPSILON,
        zero_cutoff: ZERO_CUTOFF,
    };
    let manifest = TruthManifest {
        recipe: recipe.to_string(),
        n,
        r,
        seed,
        d_range,
        w_kind: "seeded random orthogonal".to_string(),
        c: truth.c.clone(),
        s: truth.s.clone(),
    };
    Ok(DesignedPair {
        pair,
        truth,
        w,
        d,
        manifest,
    })
}

fn project(basis: &[Vector], x: &[f64]) -> Vector {
    let mut out = vec![0.0; x.len()];
    for q in basis {
        crate::matrix::axpy(dot(q, x), q, &mut out);
    }
    out
}

/// `c = (1, 0.95, 0.90, linspace(0.88, 0.12, n-6), 0.1, 0.05, 0.01)`,
/// `D = diag(linspace(1, 100, n))`.
pub fn make_example1(n: usize) -> Result<DesignedPair> {
    make_example1_seeded(n, DEFAULT_SEED)
}

pub fn make_example1_seeded(n: usize, seed: u64) -> Result<DesignedPair> {
    if n < 10 {
        return Err(GsvdError::invalid("example1 needs n >= 10"));
    }
    let mut c = vec![1.0, 0.95, 0.90];
    c.extend(linspace(0.88, 0.12, n - 6));
    c.extend([0.1, 0.05, 0.01]);
    make_designed_named("example1", n, n, &c, (1.0, 100.0), seed)
}

/// Nonregular: rank `r < n`,
/// `c = (0.99, 0.98, linspace(0.96, 0.06, r-4), 0.04, 0.02)`, `D` over `[1, 10]`.
pub fn make_example3(n: usize, r: usize) -> Result<DesignedPair> {
    make_example3_seeded(n, r, DEFAULT_SEED)
}

pub fn make_example3_seeded(n: usize, r: usize, seed: u64) -> Result<DesignedPair> {
    if r >= n {
        return Err(GsvdError::invalid("example3 needs r < n"));
    }
    if r < 6 {
        return Err(GsvdError::invalid("example3 needs r >= 6"));
    }
    let mut c = vec![0.99, 0.98];
    c.extend(linspace(0.96, 0.06, r - 4));
    c.extend([0.04, 0.02]);
    make_designed_named("example3", n, r, &c, (1.0, 10.0), seed)
}

/// `c = (0.99, 0.97, linspace(0.95, 0.15, n-4), 0.1, 0.05)`, `D` over `[1, 10]`.
pub fn make_example4(n: usize) -> Result<DesignedPair> {
    make_example4_seeded(n, DEFAULT_SEED)
}

pub fn make_example4_seeded(n: usize, seed: u64) -> Result<DesignedPair> {
    if n < 10 {
        return Err(GsvdError::invalid("example4 needs n >= 10"));
    }
    let mut c = vec![0.99, 0.97];
    c.extend(linspace(0.95, 0.15, n - 4));
    c.extend([0.1, 0.05]);
    make_designed_named("example4", n, n, &c, (1.0, 10.0), seed)
}

/// `(n-1) x n` upper bidiagonal with `diag` on the diagonal and `offdiag`
/// above it.
pub fn make_bidiag_l(n: usize, diag: f64, offdiag: f64) -> Result<SparseMatrix> {
    if n < 2 {
        return Err(GsvdError::invalid("bidiagonal L needs n >= 2"));
    }
    let mut t = Vec::with_capacity(2 * (n - 1));
    for i in 0..n - 1 {
        t.push((i, i, diag));
        t.push((i, i + 1, offdiag));
    }
    SparseMatrix::from_triplets(n - 1, n, t)
}
