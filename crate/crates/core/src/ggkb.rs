//! Generalized Golub-Kahan bidiagonalization.
//!
//! Starting from `β₁u₁ = b`, the process alternates
//!
//! ```text
//! α_i v_i     = M† Aᵀ G u_i − β_i v_{i−1}
//! β_{i+1} u_{i+1} = A v_i − α_i u_i
//! ```
//!
//! producing `G`-orthonormal `u_i`, `M`-orthonormal `v_i ∈ R(M)` and the lower
//! bidiagonal `B_k` with `A V_k = U_{k+1} B_k`. "A" here is whichever matrix
//! the pair operates on (see [`MatrixPair::op`]).

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dense::lower_bidiagonal;
use crate::error::{GsvdError, Result};
use crate::matrix::{axpy, dot, max_abs, scale, DenseMatrix, Vector};
use crate::pair::MatrixPair;
use crate::pinv::{PinvApplier, PinvMode};

/// Absolute threshold below which α or β counts as zero. Both are bounded by one.
pub const DEFAULT_BREAKDOWN_TOL: f64 = 1e-6;
/// Seed of the default starting vector.
pub const DEFAULT_SEED: u64 = 2024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reorth {
    None,
    #[default]
    Full,
}

impl std::str::FromStr for Reorth {
    type Err = GsvdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Reorth::None),
            "full" => Ok(Reorth::Full),
            other => Err(GsvdError::invalid(format!("unknown reorth policy '{other}'"))),
        }
    }
}

/// A symmetric positive definite weight `G` on the left space.
pub trait WeightOperator: Send + Sync {
    fn apply(&self, x: &[f64]) -> Vector;
}

/// Diagonal SPD weight.
#[derive(Debug, Clone)]
pub struct DiagonalWeight(pub Vec<f64>);

impl WeightOperator for DiagonalWeight {
    fn apply(&self, x: &[f64]) -> Vector {
        x.iter().zip(&self.0).map(|(a, w)| a * w).collect()
    }
}

#[derive(Clone)]
pub struct GgkbConfig {
    pub max_iters: usize,
    pub reorth: Reorth,
    /// `α` or `β` at or below this value counts as zero. Both are invariant
    /// under a common scaling of `A` and `L`, so the threshold is absolute.
    pub breakdown_tol: f64,
    pub pinv: PinvMode,
    /// `None` means `G = I`.
    pub g_weight: Option<Arc<dyn WeightOperator>>,
    /// Seed for the starting vector when none is supplied.
    pub seed: u64,
}

impl Default for GgkbConfig {
    fn default() -> Self {
        GgkbConfig {
            max_iters: 500,
            reorth: Reorth::Full,
            breakdown_tol: DEFAULT_BREAKDOWN_TOL,
            pinv: PinvMode::default(),
            g_weight: None,
            seed: DEFAULT_SEED,
        }
    }
}

impl fmt::Debug for GgkbConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GgkbConfig")
            .field("max_iters", &self.max_iters)
            .field("reorth", &self.reorth)
            .field("breakdown_tol", &self.breakdown_tol)
            .field("pinv", &self.pinv)
            .field("g_weight", &self.g_weight.as_ref().map(|_| "custom"))
            .field("seed", &self.seed)
            .finish()
    }
}

impl GgkbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(GsvdError::invalid("max_iters must be at least 1"));
        }
        if !(self.breakdown_tol > 0.0) {
            return Err(GsvdError::invalid("breakdown_tol must be positive"));
        }
        self.pinv.validate()
    }
}

/// Standard-normal starting vector of length `len` from `seed`.
pub fn random_start(len: usize, seed: u64) -> Vector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// `alphas[i] = α_{i+1}`, `betas[i] = β_{i+1}`; both hold `k + 1` entries.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BidiagonalFactor {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub k: usize,
}

impl BidiagonalFactor {
    /// `α_{k+1} β_{k+1}`, the coupling to the unexplored part of the space.
    pub fn coupling(&self) -> f64 {
        self.alphas[self.k] * self.betas[self.k]
    }
}

/// The `(k+1) x k` lower bidiagonal `B_k`.
pub fn assemble_bk(factor: &BidiagonalFactor) -> Result<DenseMatrix> {
    if factor.k == 0 {
        return Err(GsvdError::invalid("B_k needs k >= 1"));
    }
    if factor.alphas.len() < factor.k || factor.betas.len() < factor.k + 1 {
        return Err(GsvdError::invalid("factor has too few coefficients"));
    }
    Ok(lower_bidiagonal(&factor.alphas, &factor.betas, factor.k))
}

#[derive(Debug, Clone, Default)]
pub struct KrylovBases {
    pub u: Vec<Vector>,
    pub v: Vec<Vector>,
    /// `M v_i`, reused by reorthogonalization.
    pub mv: Vec<Vector>,
    /// `G u_i` (equal to `u_i` for the identity weight).
    pub gu: Vec<Vector>,
    /// Coefficients with `v_i = M† opᵀ z_i`.
    pub z: Vec<Vector>,
    /// `op v_i`.
    pub ov: Vec<Vector>,
}

#[derive(Debug, Clone)]
pub struct GgkbState {
    pub factor: BidiagonalFactor,
    pub bases: KrylovBases,
    pub terminated: bool,
    /// `k_t`, the step after which `α_{k+1} β_{k+1}` vanished.
    pub terminate_step: Option<usize>,
    /// `β₁ = ||b||_G`.
    pub b_norm: f64,
    /// The raw value that triggered termination, before it was zeroed.
    pub breakdown_value: Option<f64>,
}

impl GgkbState {
    pub fn k(&self) -> usize {
        self.factor.k
    }
}

/// A running process: the pair, its configuration, the prepared `M†`
/// applier and the current state.
pub struct GgkbProcess {
    pair: MatrixPair,
    cfg: GgkbConfig,
    pinv: PinvApplier,
    state: GgkbState,
}

impl GgkbProcess {
    /// Lines 1-3 of the recurrence: `u₁ = b/β₁`, `v₁ = M†Aᵀ G u₁ / α₁`.
    /// `b` defaults to a seeded standard-normal vector.
    pub fn init(pair: &MatrixPair, b: Option<&[f64]>, cfg: &GgkbConfig) -> Result<Self> {
        let pinv = PinvApplier::new(cfg.pinv, pair)?;
        Self::with_applier(pair, b, cfg, pinv)
    }

    /// Like [`GgkbProcess::init`] with an already prepared `M†` applier.
    pub fn with_applier(
        pair: &MatrixPair,
        b: Option<&[f64]>,
        cfg: &GgkbConfig,
        pinv: PinvApplier,
    ) -> Result<Self> {
        cfg.validate()?;
        let m = pair.op().nrows();
        let b: Vector = match b {
            Some(b) => b.to_vec(),
            None => random_start(m, cfg.seed),
        };
        if b.len() != m {
            return Err(GsvdError::DimensionMismatch {
                op: "ggkb_init (starting vector)",
                expected: m,
                got: b.len(),
            });
        }
        let mut proc = GgkbProcess {
            pair: pair.clone(),
            cfg: cfg.clone(),
            pinv,
            state: GgkbState {
                factor: BidiagonalFactor::default(),
                bases: KrylovBases::default(),
                terminated: false,
                terminate_step: None,
                b_norm: 0.0,
                breakdown_value: None,
            },
        };

        let gb = proc.weight(&b);
        let beta1 = dot(&b, &gb).max(0.0).sqrt();
        if beta1 == 0.0 || !beta1.is_finite() {
            return Err(GsvdError::ZeroVector("starting vector b"));
        }
        let mut u1 = b;
        scale(1.0 / beta1, &mut u1);
        let mut gu1 = gb;
        scale(1.0 / beta1, &mut gu1);

        let sbar = proc.pair.op().tmul(&gu1);
        let s = proc.pinv.apply(&proc.pair, &sbar)?;
        let (alpha_sq, ms) = proc.pair.m_norm_sq_and_product(&s)?;
        let alpha1 = alpha_sq.max(0.0).sqrt();
        let z1 = gu1.clone();

        let st = &mut proc.state;
        st.b_norm = beta1;
        st.factor.betas.push(beta1);
        st.bases.u.push(u1);
        st.bases.gu.push(gu1);
        if alpha1 <= cfg.breakdown_tol {
            // b is orthogonal to every left singular direction with c > 0
            st.factor.alphas.push(0.0);
            st.bases.v.push(vec![0.0; s.len()]);
            st.bases.mv.push(vec![0.0; s.len()]);
            st.bases.z.push(vec![0.0; m]);
            st.terminated = true;
            st.terminate_step = Some(0);
            st.breakdown_value = Some(alpha1);
        } else {
            st.factor.alphas.push(alpha1);
            st.bases.v.push(scaled(s, 1.0 / alpha1));
            st.bases.mv.push(scaled(ms, 1.0 / alpha1));
            st.bases.z.push(scaled(z1, 1.0 / alpha1));
        }
        Ok(proc)
    }

    fn weight(&self, x: &[f64]) -> Vector {
        match &self.cfg.g_weight {
            Some(g) => g.apply(x),
            None => x.to_vec(),
        }
    }

    pub fn pair(&self) -> &MatrixPair {
        &self.pair
    }

    pub fn config(&self) -> &GgkbConfig {
        &self.cfg
    }

    pub fn state(&self) -> &GgkbState {
        &self.state
    }

    pub fn pinv(&self) -> &PinvApplier {
        &self.pinv
    }

    pub fn into_state(self) -> GgkbState {
        self.state
    }

    /// One loop iteration: computes `β_{k+2}, u_{k+2}, α_{k+2}, v_{k+2}` in
    /// 1-based terms, i.e. extends the factor from `k` to `k + 1`.
    pub fn step(&mut self) -> Result<()> {
        if self.state.terminated {
            return Err(GsvdError::invalid("ggkb_step called on a terminated process"));
        }
        if self.state.k() >= self.cfg.max_iters {
            return Err(GsvdError::invalid("ggkb_step called past max_iters"));
        }
        let i = self.state.k(); // 0-based index of the newest u, v
        let full = self.cfg.reorth == Reorth::Full;
        let thr = self.cfg.breakdown_tol;

        // q = A v_i - α_i u_i, reorthogonalized in the G-inner product
        let alpha_i = self.state.factor.alphas[i];
        let ov = self.pair.op().mul(&self.state.bases.v[i]);
        let mut q = ov.clone();
        axpy(-alpha_i, &self.state.bases.u[i], &mut q);
        self.state.bases.ov.push(ov);
        if full {
            let b = &self.state.bases;
            gram_schmidt_twice(&mut q, &b.u, &b.gu);
        }
        let gq = self.weight(&q);
        let beta = dot(&q, &gq).max(0.0).sqrt();
        if beta <= thr {
            self.finish_terminated(beta, true);
            return Ok(());
        }
        let u_next = scaled(q, 1.0 / beta);
        let gu_next = scaled(gq, 1.0 / beta);

        // s = M† Aᵀ G u_{i+1} - β_{i+1} v_i, reorthogonalized in the M-inner
        // product, evaluated as M† Aᵀ w with w = G u_{i+1} - β_{i+1} z_i
        let mut w = gu_next.clone();
        axpy(-beta, &self.state.bases.z[i], &mut w);
        if full {
            // <v_j, M† Aᵀ w>_M = (A v_j)·w
            let b = &self.state.bases;
            gram_schmidt_twice(&mut w, &b.z, &b.ov);
        }
        let s = self.pinv.apply(&self.pair, &self.pair.op().tmul(&w))?;
        let (alpha_sq, ms) = self.pair.m_norm_sq_and_product(&s)?;
        let alpha = alpha_sq.max(0.0).sqrt();

        let st = &mut self.state;
        st.factor.betas.push(beta);
        st.bases.u.push(u_next);
        st.bases.gu.push(gu_next);
        if alpha <= thr {
            self.finish_terminated(alpha, false);
            return Ok(());
        }
        st.factor.alphas.push(alpha);
        st.bases.v.push(scaled(s, 1.0 / alpha));
        st.bases.mv.push(scaled(ms, 1.0 / alpha));
        st.bases.z.push(scaled(w, 1.0 / alpha));
        st.factor.k += 1;
        Ok(())
    }

    /// Records a vanished `β_{k+1}` (`at_beta`) or `α_{k+1}`, storing exact
    /// zeros so that `α_{k+1} β_{k+1} = 0` holds in the factor. The
    /// recurrences then carry a residual of size `raw` in their last column.
    fn finish_terminated(&mut self, raw: f64, at_beta: bool) {
        let st = &mut self.state;
        let n = self.pair.n();
        let m = self.pair.op().nrows();
        if at_beta {
            st.factor.betas.push(0.0);
            st.bases.u.push(vec![0.0; m]);
            st.bases.gu.push(vec![0.0; m]);
        }
        st.factor.alphas.push(0.0);
        st.bases.v.push(vec![0.0; n]);
        st.bases.mv.push(vec![0.0; n]);
        st.bases.z.push(vec![0.0; m]);
        st.factor.k += 1;
        st.terminated = true;
        st.terminate_step = Some(st.factor.k);
        st.breakdown_value = Some(raw);
    }

    /// Steps until termination or `max_iters`. Returns the final `k`.
    pub fn run_to_end(&mut self) -> Result<usize> {
        while !self.state.terminated && self.state.k() < self.cfg.max_iters {
            self.step()?;
        }
        Ok(self.state.k())
    }
}

/// `x -= Σ_j <x, w_j> b_j` twice, where `w_j = W b_j` are the weighted basis
/// vectors (so `<x, w_j>` is the weighted inner product).
fn gram_schmidt_twice(x: &mut [f64], basis: &[Vector], weighted: &[Vector]) {
    for _ in 0..2 {
        let coeffs: Vec<f64> = weighted.iter().map(|w| dot(w, x)).collect();
        for (b, c) in basis.iter().zip(coeffs) {
            if c != 0.0 {
                axpy(-c, b, x);
            }
        }
    }
}

fn scaled(mut v: Vector, a: f64) -> Vector {
    scale(a, &mut v);
    v
}

/// Max-norm residuals of the matrix recurrences and the basis orthogonality
/// defects.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RecurrenceDiagnostics {
    /// `max |A V_k − U_{k+1} B_k|`.
    pub forward: f64,
    /// `max |M†AᵀG U_{k+1} − V_k B_kᵀ − α_{k+1} v_{k+1} e_{k+1}ᵀ|`.
    pub adjoint: f64,
    /// `max |UᵀGU − I|` over the nonzero `u_i`.
    pub u_orthogonality: f64,
    /// `max |VᵀMV − I|` over the nonzero `v_i`.
    pub v_orthogonality: f64,
}

pub fn verify_recurrences(proc: &GgkbProcess) -> Result<RecurrenceDiagnostics> {
    let st = proc.state();
    let k = st.k();
    if k == 0 {
        return Err(GsvdError::invalid("verify_recurrences needs k >= 1"));
    }
    let pair = proc.pair();
    let b = assemble_bk(&st.factor)?;
    let bases = &st.bases;

    let mut forward: f64 = 0.0;
    for j in 0..k {
        let mut r = pair.op().mul(&bases.v[j]);
        for i in 0..=k {
            let c = b[(i, j)];
            if c != 0.0 {
                axpy(-c, &bases.u[i], &mut r);
            }
        }
        forward = forward.max(max_abs(&r));
    }

    let mut adjoint: f64 = 0.0;
    for i in 0..=k {
        let mut r = proc.pinv().apply(pair, &pair.op().tmul(&bases.gu[i]))?;
        for j in 0..k {
            let c = b[(i, j)];
            if c != 0.0 {
                axpy(-c, &bases.v[j], &mut r);
            }
        }
        if i == k {
            axpy(-st.factor.alphas[k], &bases.v[k], &mut r);
        }
        adjoint = adjoint.max(max_abs(&r));
    }

    Ok(RecurrenceDiagnostics {
        forward,
        adjoint,
        u_orthogonality: gram_defect(&bases.u, &bases.gu),
        v_orthogonality: gram_defect(&bases.v, &bases.mv),
    })
}

fn gram_defect(basis: &[Vector], weighted: &[Vector]) -> f64 {
    let live: Vec<usize> = (0..basis.len()).filter(|&i| max_abs(&basis[i]) > 0.0).collect();
    let mut worst: f64 = 0.0;
    for &i in &live {
        for &j in &live {
            let g = dot(&basis[i], &weighted[j]);
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    worst
}
