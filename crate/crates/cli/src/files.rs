//! On-disk layout of run and oracle directories.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use gsvd_core::mtx::{read_dense, read_matrix_market, write_array};
use gsvd_core::pinv::PinvMode;
use gsvd_core::solver::StopReason;
use gsvd_core::{DenseMatrix, GsvdReference, MatrixPair, Reorth, Side, SparseMatrix, Vector};

pub const SUMMARY_SCHEMA: &str = "gsvd-summary/1";
pub const SUMMARY_FILE: &str = "summary.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const ORACLE_FILE: &str = "oracle.json";

pub fn load_pair(a: &Path, l: &Path) -> Result<MatrixPair> {
    let a = read_matrix_market(a).with_context(|| format!("reading A from {}", a.display()))?;
    let l = read_matrix_market(l).with_context(|| format!("reading L from {}", l.display()))?;
    Ok(MatrixPair::new(a, l)?)
}

/// SHA-256 over the shapes and stored entries of `A` then `L`.
pub fn pair_hash(pair: &MatrixPair) -> String {
    let mut h = Sha256::new();
    for (tag, mat) in [("A", pair.a()), ("L", pair.l())] {
        feed(&mut h, tag, mat);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn feed(h: &mut Sha256, tag: &str, mat: &SparseMatrix) {
    h.update(tag.as_bytes());
    for d in [mat.nrows(), mat.ncols(), mat.nnz()] {
        h.update((d as u64).to_le_bytes());
    }
    for (i, j, v) in mat.triplets() {
        h.update((i as u64).to_le_bytes());
        h.update((j as u64).to_le_bytes());
        // -0.0 and 0.0 hash alike
        h.update((v + 0.0).to_bits().to_le_bytes());
    }
}

/// Everything that determines a run, echoed into its summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub a: PathBuf,
    pub l: PathBuf,
    pub side: Side,
    pub largest: usize,
    pub smallest: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub reorth: Reorth,
    pub pinv: PinvMode,
    pub breakdown_tol: f64,
    pub seed: u64,
    pub stop_on_convergence: bool,
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TupleSummary {
    pub target_id: String,
    pub ritz_index: usize,
    pub theta: f64,
    pub c: f64,
    pub s: f64,
    /// `None` for `γ = ∞`.
    pub gamma: Option<f64>,
    pub residual_bound: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema: String,
    pub config: RunConfig,
    pub seed: u64,
    pub pair_hash: String,
    pub m: usize,
    pub p: usize,
    pub n: usize,
    pub stop: StopReason,
    pub iterations: usize,
    pub terminated: bool,
    pub terminate_step: Option<usize>,
    pub breakdown_value: Option<f64>,
    pub breakdown_tol: f64,
    pub nu: f64,
    pub all_converged: bool,
    /// `None` without a reference.
    pub ghost_detected: Option<bool>,
    pub ghost_events: usize,
    pub first_ghost_k: Option<usize>,
    pub tuples: Vec<TupleSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleSummary {
    pub pair_hash: String,
    pub n: usize,
    pub r: usize,
    pub q: (usize, usize, usize),
    pub identities: gsvd_core::oracle::IdentityDiagnostics,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Columns with `None` entries are written as zeros.
pub fn write_columns(path: &Path, rows: usize, cols: &[Option<&Vector>]) -> Result<()> {
    let mut d = DenseMatrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        if let Some(c) = c {
            d.col_mut(j).copy_from_slice(c);
        }
    }
    Ok(write_array(&d, path)?)
}

/// A set of computed or reference components, seen from either kind of
/// directory.
pub struct ComponentSet {
    pub pair_hash: String,
    pub side: Option<Side>,
    pub ids: Vec<String>,
    pub c: Vec<f64>,
    pub s: Vec<f64>,
    pub converged: Vec<bool>,
    pub x: Vec<Vector>,
    pub p_a: Vec<Option<Vector>>,
    pub p_l: Vec<Option<Vector>>,
    pub reference: Option<GsvdReference>,
}

impl ComponentSet {
    pub fn load(dir: &Path) -> Result<Self> {
        if dir.join(SUMMARY_FILE).exists() {
            Self::from_run(dir)
        } else if dir.join(ORACLE_FILE).exists() {
            Self::from_oracle(dir)
        } else {
            bail!("{} is neither a run nor an oracle directory", dir.display())
        }
    }

    fn from_run(dir: &Path) -> Result<Self> {
        let sum: RunSummary = read_json(&dir.join(SUMMARY_FILE))?;
        let cols = |name: &str| -> Result<Vec<Option<Vector>>> {
            let d = read_dense(dir.join(name))?;
            Ok(d.columns()
                .map(|c| c.iter().any(|&v| v != 0.0).then(|| c.to_vec()))
                .collect())
        };
        let x: Vec<Vector> = cols("X.mtx")?.into_iter().map(Option::unwrap_or_default).collect();
        let p_a = cols("PA.mtx")?;
        let p_l = cols("PL.mtx")?;
        if x.len() != sum.tuples.len() || p_a.len() != x.len() || p_l.len() != x.len() {
            bail!("component files in {} do not match summary.json", dir.display());
        }
        Ok(ComponentSet {
            pair_hash: sum.pair_hash,
            side: Some(sum.config.side),
            ids: sum.tuples.iter().map(|t| t.target_id.clone()).collect(),
            c: sum.tuples.iter().map(|t| t.c).collect(),
            s: sum.tuples.iter().map(|t| t.s).collect(),
            converged: sum.tuples.iter().map(|t| t.converged).collect(),
            x,
            p_a,
            p_l,
            reference: None,
        })
    }

    fn from_oracle(dir: &Path) -> Result<Self> {
        let sum: OracleSummary = read_json(&dir.join(ORACLE_FILE))?;
        let r = GsvdReference::load(dir)?;
        Ok(ComponentSet {
            pair_hash: sum.pair_hash,
            side: None,
            ids: (1..=r.r).map(|i| format!("comp{i}")).collect(),
            c: r.c.clone(),
            s: r.s.clone(),
            converged: vec![true; r.r],
            x: (0..r.r).map(|i| r.x(i).to_vec()).collect(),
            p_a: (0..r.r).map(|i| r.p_a_col(i).map(<[f64]>::to_vec)).collect(),
            p_l: (0..r.r).map(|i| r.p_l_col(i).map(<[f64]>::to_vec)).collect(),
            reference: Some(r),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn p(&self, side: Side, i: usize) -> Option<&Vector> {
        match side {
            Side::A => self.p_a[i].as_ref(),
            Side::L => self.p_l[i].as_ref(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(a00: f64) -> MatrixPair {
        let a = SparseMatrix::from_diag(2, 2, &[a00, 1.0]).unwrap();
        MatrixPair::new(a, SparseMatrix::identity(2)).unwrap()
    }

    #[test]
    fn hash_depends_on_values_only() {
        assert_eq!(pair_hash(&pair(2.0)), pair_hash(&pair(2.0)));
        assert_ne!(pair_hash(&pair(2.0)), pair_hash(&pair(2.0 + 1e-15)));
        assert_eq!(pair_hash(&pair(2.0)).len(), 64);
    }

    #[test]
    fn hash_tells_a_from_l() {
        let a = SparseMatrix::from_diag(2, 2, &[2.0, 1.0]).unwrap();
        let l = SparseMatrix::identity(2);
        let p = MatrixPair::new(a.clone(), l.clone()).unwrap();
        let q = MatrixPair::new(l, a).unwrap();
        assert_ne!(pair_hash(&p), pair_hash(&q));
    }
}
