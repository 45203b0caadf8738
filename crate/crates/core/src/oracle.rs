//! Dense reference GSVD from the SVE characterization: an `M`-orthonormal
//! basis `W` of `R(M)` turns the GSVD of `{A, L}` into the symmetric
//! eigenproblem of `Wᵀ(AᵀA)W`.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dense::{orthonormalize_against, sym_eig};
use crate::error::{GsvdError, Result};
use crate::matrix::{dot, norm2, scale, DenseMatrix, Vector};
use crate::mtx::{read_dense, write_array};
use crate::pair::{MatrixPair, Side, DEFAULT_NORM_ITERS};
use crate::pinv::{dense_limit, PinvApplier};

/// `c` or `s` at or below this value is treated as exactly zero.
pub const ZERO_CUTOFF: f64 = 1e-10;
/// Two `c` values closer than this belong to one eigenspace of `AM†Aᵀ`.
pub const GROUP_TOL: f64 = 1e-10;
const COMPLETION_SEED: u64 = 0x0_c0de;

#[derive(Debug, Clone)]
pub struct GsvdReference {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub r: usize,
    pub q1: usize,
    pub q2: usize,
    pub q3: usize,
    /// Descending.
    pub c: Vec<f64>,
    pub s: Vec<f64>,
    /// `n x r`, columns `x_i` with `X̃₁ᵀ M X̃₁ = I`.
    pub x1: DenseMatrix,
    /// `m x m`; column `i < q1 + q2` is `p_{A,i}`.
    pub p_a: DenseMatrix,
    /// `p x p`; column `k < q2 + q3` is `p_{L, q1 + k}`.
    pub p_l: DenseMatrix,
    /// `n x (n - r)`.
    pub null_basis: DenseMatrix,
    /// Relative eigenvalue cutoff used for the rank of `M`.
    pub rank_tol: f64,
    pub zero_cutoff: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    n: usize,
    m: usize,
    p: usize,
    r: usize,
    q1: usize,
    q2: usize,
    q3: usize,
    c: Vec<f64>,
    s: Vec<f64>,
    rank_tol: f64,
    zero_cutoff: f64,
}

impl GsvdReference {
    /// `γ_i = c_i / s_i`, infinite when `s_i = 0`.
    pub fn gamma(&self) -> Vec<f64> {
        self.c
            .iter()
            .zip(&self.s)
            .map(|(&c, &s)| if s == 0.0 { f64::INFINITY } else { c / s })
            .collect()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        self.x1.col(i)
    }

    pub fn p_a_col(&self, i: usize) -> Option<&[f64]> {
        (i < self.q1 + self.q2).then(|| self.p_a.col(i))
    }

    pub fn p_l_col(&self, i: usize) -> Option<&[f64]> {
        (i >= self.q1 && i < self.r).then(|| self.p_l.col(i - self.q1))
    }

    /// The generalized singular value of component `i` as seen from `side`
    /// (`c_i` for A, `s_i` for L).
    pub fn side_value(&self, side: Side, i: usize) -> f64 {
        match side {
            Side::A => self.c[i],
            Side::L => self.s[i],
        }
    }

    pub fn side_p_col(&self, side: Side, i: usize) -> Option<&[f64]> {
        match side {
            Side::A => self.p_a_col(i),
            Side::L => self.p_l_col(i),
        }
    }

    /// Component indices whose value on `side` is positive, ordered by that
    /// value descending. These are what a process on `side` can reach.
    pub fn side_components(&self, side: Side) -> Vec<usize> {
        match side {
            Side::A => (0..self.q1 + self.q2).collect(),
            Side::L => (self.q1..self.r).rev().collect(),
        }
    }

    /// Positive values on `side`, descending.
    pub fn side_values(&self, side: Side) -> Vec<f64> {
        self.side_components(side)
            .into_iter()
            .map(|i| self.side_value(side, i))
            .collect()
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| GsvdError::io(dir, e))?;
        let manifest = Manifest {
            n: self.n,
            m: self.m,
            p: self.p,
            r: self.r,
            q1: self.q1,
            q2: self.q2,
            q3: self.q3,
            c: self.c.clone(),
            s: self.s.clone(),
            rank_tol: self.rank_tol,
            zero_cutoff: self.zero_cutoff,
        };
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, json).map_err(|e| GsvdError::io(&path, e))?;
        write_array(&self.x1, dir.join("X1.mtx"))?;
        write_array(&self.p_a, dir.join("PA.mtx"))?;
        write_array(&self.p_l, dir.join("PL.mtx"))?;
        write_array(&self.null_basis, dir.join("null_basis.mtx"))?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| GsvdError::io(&path, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| GsvdError::Parse {
            path: path.clone(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        let reference = GsvdReference {
            n: m.n,
            m: m.m,
            p: m.p,
            r: m.r,
            q1: m.q1,
            q2: m.q2,
            q3: m.q3,
            c: m.c,
            s: m.s,
            x1: read_dense(dir.join("X1.mtx"))?,
            p_a: read_dense(dir.join("PA.mtx"))?,
            p_l: read_dense(dir.join("PL.mtx"))?,
            null_basis: read_dense(dir.join("null_basis.mtx"))?,
            rank_tol: m.rank_tol,
            zero_cutoff: m.zero_cutoff,
        };
        reference.check_shapes()?;
        Ok(reference)
    }

    fn check_shapes(&self) -> Result<()> {
        let ok = self.q1 + self.q2 + self.q3 == self.r
            && self.c.len() == self.r
            && self.s.len() == self.r
            && (self.x1.nrows(), self.x1.ncols()) == (self.n, self.r)
            && (self.p_a.nrows(), self.p_a.ncols()) == (self.m, self.m)
            && (self.p_l.nrows(), self.p_l.ncols()) == (self.p, self.p)
            && (self.null_basis.nrows(), self.null_basis.ncols()) == (self.n, self.n - self.r);
        if ok {
            Ok(())
        } else {
            Err(GsvdError::invalid("reference factors have inconsistent shapes"))
        }
    }
}

/// Dense GSVD of the pair. Fails with [`GsvdError::DenseLimit`] when `n`
/// exceeds [`dense_limit`].
pub fn dense_gsvd(pair: &MatrixPair) -> Result<GsvdReference> {
    dense_gsvd_with_limit(pair, dense_limit())
}

pub fn dense_gsvd_with_limit(pair: &MatrixPair, limit: usize) -> Result<GsvdReference> {
    let pair = pair.on_side(Side::A);
    let n = pair.n();
    if n > limit {
        return Err(GsvdError::DenseLimit { n, limit });
    }
    let (m, p) = (pair.a().nrows(), pair.l().nrows());
    let rank_tol = n as f64 * f64::EPSILON;

    let eig = sym_eig(&pair.dense_m())?;
    let lmax = eig.eigenvalues.first().copied().unwrap_or(0.0);
    let r = eig
        .eigenvalues
        .iter()
        .take_while(|&&l| l > rank_tol * lmax && l > 0.0)
        .count();
    let w = DenseMatrix::from_fn(n, r, |i, j| eig.eigenvectors[(i, j)] / eig.eigenvalues[j].sqrt());
    let null_basis = DenseMatrix::from_fn(n, n - r, |i, j| eig.eigenvectors[(i, r + j)]);

    let aw = pair.a().to_dense().matmul(&w)?;
    let g = aw.tr_matmul(&aw)?;
    let g = DenseMatrix::from_fn(r, r, |i, j| 0.5 * (g[(i, j)] + g[(j, i)]));
    let inner = sym_eig(&g)?;

    // c and s from the norms of Ax and Lx: accurate for both c ≈ 0 and s ≈ 0
    let mut comps: Vec<(f64, f64, Vector)> = (0..r)
        .map(|j| {
            let mut x = w.matvec(inner.eigenvectors.col(j)).expect("shapes agree");
            let c = norm2(&pair.a().mul(&x));
            let s = norm2(&pair.l().mul(&x));
            let h = c.hypot(s);
            scale(1.0 / h, &mut x);
            (c / h, s / h, x)
        })
        .collect();
    comps.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut c = Vec::with_capacity(r);
    let mut s = Vec::with_capacity(r);
    let mut xs = Vec::with_capacity(r);
    for (ci, si, x) in comps {
        let (ci, si) = if si <= ZERO_CUTOFF {
            (1.0, 0.0)
        } else if ci <= ZERO_CUTOFF {
            (0.0, 1.0)
        } else {
            (ci, si)
        };
        c.push(ci);
        s.push(si);
        xs.push(x);
    }
    let q1 = s.iter().filter(|&&v| v == 0.0).count();
    let q3 = c.iter().filter(|&&v| v == 0.0).count();
    let q2 = r - q1 - q3;

    let mut rng = ChaCha8Rng::seed_from_u64(COMPLETION_SEED);
    let pa_cols: Vec<Vector> = (0..q1 + q2)
        .map(|i| {
            let mut v = pair.a().mul(&xs[i]);
            scale(1.0 / c[i], &mut v);
            v
        })
        .collect();
    let pl_cols: Vec<Vector> = (q1..r)
        .map(|i| {
            let mut v = pair.l().mul(&xs[i]);
            scale(1.0 / s[i], &mut v);
            v
        })
        .collect();
    let p_a = DenseMatrix::from_columns(m, &complete_basis(pa_cols, m, &mut rng)?)?;
    let p_l = DenseMatrix::from_columns(p, &complete_basis(pl_cols, p, &mut rng)?)?;

    Ok(GsvdReference {
        n,
        m,
        p,
        r,
        q1,
        q2,
        q3,
        c,
        s,
        x1: DenseMatrix::from_columns(n, &xs)?,
        p_a,
        p_l,
        null_basis,
        rank_tol,
        zero_cutoff: ZERO_CUTOFF,
    })
}

/// Extends `cols` to an orthonormal basis of `R^dim` with Gram-Schmidt on
/// seeded random candidates.
fn complete_basis(mut cols: Vec<Vector>, dim: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vector>> {
    if cols.len() > dim {
        return Err(GsvdError::invalid("more left vectors than rows"));
    }
    let mut attempts = 0;
    while cols.len() < dim {
        let cand: Vector = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if let Some(q) = orthonormalize_against(&cols, cand) {
            cols.push(q);
        }
        attempts += 1;
        if attempts > 10 * dim + 10 {
            return Err(GsvdError::invalid("could not complete an orthonormal basis"));
        }
    }
    Ok(cols)
}

/// Largest 2-norm residuals of the defining relations, plus the structural
/// defects of the reference itself.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IdentityDiagnostics {
    /// `||A x_i − c_i p_{A,i}||`.
    pub a_relation: f64,
    /// `||L x_i − s_i p_{L,i}||`.
    pub l_relation: f64,
    /// `||s_i Aᵀp_{A,i} − c_i Lᵀp_{L,i}||`.
    pub cross_relation: f64,
    /// `||s_i² AᵀA x_i − c_i² LᵀL x_i||`.
    pub normal_relation: f64,
    /// `max |c_i² + s_i² − 1|`.
    pub unit_circle: f64,
    /// `max |X̃₁ᵀMX̃₁ − I|`.
    pub x_m_orthonormality: f64,
    /// `max |P_AᵀP_A − I|` and `max |P_LᵀP_L − I|`.
    pub p_orthogonality: f64,
    /// `max |M · null_basis|`.
    pub null_residual: f64,
    /// `||(Aᵀ, Lᵀ)ᵀ||₂` estimate used to scale the tolerances.
    pub nu: f64,
}

impl IdentityDiagnostics {
    pub fn relations_max(&self) -> f64 {
        self.a_relation
            .max(self.l_relation)
            .max(self.cross_relation)
            .max(self.normal_relation)
    }
}

pub fn verify_gsvd_identities(reference: &GsvdReference, pair: &MatrixPair) -> Result<IdentityDiagnostics> {
    let pair = pair.on_side(Side::A);
    if pair.n() != reference.n || pair.a().nrows() != reference.m || pair.l().nrows() != reference.p {
        return Err(GsvdError::invalid("reference does not belong to this pair"));
    }
    let (a, l) = (pair.a(), pair.l());
    let zeros_m = vec![0.0; reference.m];
    let zeros_p = vec![0.0; reference.p];
    let mut d = IdentityDiagnostics {
        a_relation: 0.0,
        l_relation: 0.0,
        cross_relation: 0.0,
        normal_relation: 0.0,
        unit_circle: 0.0,
        x_m_orthonormality: 0.0,
        p_orthogonality: 0.0,
        null_residual: 0.0,
        nu: pair.spectral_norm_estimate(DEFAULT_NORM_ITERS),
    };
    for i in 0..reference.r {
        let (c, s) = (reference.c[i], reference.s[i]);
        let x = reference.x(i);
        let pa = reference.p_a_col(i).unwrap_or(&zeros_m);
        let pl = reference.p_l_col(i).unwrap_or(&zeros_p);

        let ax = a.mul(x);
        let lx = l.mul(x);
        d.a_relation = d.a_relation.max(diff_norm(&ax, pa, c));
        d.l_relation = d.l_relation.max(diff_norm(&lx, pl, s));
        let mut cross = a.tmul(pa);
        scale(s, &mut cross);
        d.cross_relation = d.cross_relation.max(diff_norm(&cross, &l.tmul(pl), c));
        let mut normal = a.tmul(&ax);
        scale(s * s, &mut normal);
        d.normal_relation = d.normal_relation.max(diff_norm(&normal, &l.tmul(&lx), c * c));
        d.unit_circle = d.unit_circle.max((c * c + s * s - 1.0).abs());

        for j in 0..=i {
            let g = pair.m_inner(x, reference.x(j))?;
            let target = if i == j { 1.0 } else { 0.0 };
            d.x_m_orthonormality = d.x_m_orthonormality.max((g - target).abs());
        }
    }
    for p in [&reference.p_a, &reference.p_l] {
        let g = p.tr_matmul(p)?;
        d.p_orthogonality = d.p_orthogonality.max(g.sub(&DenseMatrix::identity(p.ncols()))?.max_abs());
    }
    for z in reference.null_basis.columns() {
        d.null_residual = d.null_residual.max(crate::matrix::max_abs(&pair.apply_m(z)?));
    }
    Ok(d)
}

/// `||x − a y||₂`.
fn diff_norm(x: &[f64], y: &[f64], a: f64) -> f64 {
    x.iter().zip(y).map(|(xi, yi)| (xi - a * yi).powi(2)).sum::<f64>().sqrt()
}

/// Number of distinct-value eigenspaces of `AM†Aᵀ` (or `LM†Lᵀ` for the L
/// side) on which `b` has a nonzero projection: the step at which the
/// bidiagonalization started from `b` terminates.
pub fn predict_kt(reference: &GsvdReference, side: Side, b: &[f64]) -> Result<usize> {
    let rows = match side {
        Side::A => reference.m,
        Side::L => reference.p,
    };
    if b.len() != rows {
        return Err(GsvdError::DimensionMismatch {
            op: "predict_kt",
            expected: rows,
            got: b.len(),
        });
    }
    let bnorm = norm2(b);
    let comps = reference.side_components(side);
    let mut count = 0;
    let mut start = 0;
    while start < comps.len() {
        let v0 = reference.side_value(side, comps[start]);
        let mut end = start + 1;
        while end < comps.len() && (reference.side_value(side, comps[end]) - v0).abs() <= GROUP_TOL {
            end += 1;
        }
        let proj_sq: f64 = comps[start..end]
            .iter()
            .map(|&i| dot(reference.side_p_col(side, i).expect("positive value has a left vector"), b).powi(2))
            .sum();
        if proj_sq.sqrt() > GROUP_TOL * bnorm {
            count += 1;
        }
        start = end;
    }
    Ok(count)
}

/// `max |A M† Aᵀ − P_A Σ_A Σ_Aᵀ P_Aᵀ|` with `M†` applied densely.
pub fn range_operator_defect(reference: &GsvdReference, pair: &MatrixPair) -> Result<f64> {
    let pair = pair.on_side(Side::A);
    let pinv = PinvApplier::direct(&pair, None, usize::MAX)?;
    let m = reference.m;
    let mut worst: f64 = 0.0;
    for j in 0..m {
        let mut e = vec![0.0; m];
        e[j] = 1.0;
        let col = pair.a().mul(&pinv.apply(&pair, &pair.a().tmul(&e))?);
        for (i, &v) in col.iter().enumerate() {
            let expected: f64 = (0..reference.q1 + reference.q2)
                .map(|k| reference.c[k].powi(2) * reference.p_a[(i, k)] * reference.p_a[(j, k)])
                .sum();
            worst = worst.max((v - expected).abs());
        }
    }
    Ok(worst)
}
