//! Extreme GSVD components from the Ritz triplets of `B_k`.
//!
//! With `B_k = Y Θ Hᵀ`, each `(θ, y, h)` gives the approximation
//! `c̄ = θ`, `s̄ = (1 − θ²)^{1/2}`, `p̄ = U_{k+1} y`, `x̄ = V_k h` with the
//! computable residual bound `α_{k+1} β_{k+1} |e_kᵀ h|`.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use crate::dense::{small_svd, BidiagSpectrum};
use crate::error::{GsvdError, Result};
use crate::ggkb::{assemble_bk, GgkbConfig, GgkbProcess, GgkbState};
use crate::matrix::{axpy, dot, norm2, scale, Vector};
use crate::oracle::GsvdReference;
use crate::pair::{MatrixPair, Side, DEFAULT_NORM_ITERS};

pub const DEFAULT_TOL: f64 = 1e-10;
/// Two Ritz values this close to one reference value signal a ghost.
pub const GHOST_TOL: f64 = 1e-8;
/// Complementary left vectors are only reconstructed above this value.
pub const COMPLEMENT_CUTOFF: f64 = 1e-8;
pub const HISTORY_SCHEMA: &str = "gsvd-history/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GsvdTuple {
    pub side: Side,
    /// Position in the descending list of Ritz values.
    pub ritz_index: usize,
    pub theta: f64,
    pub c: f64,
    pub s: f64,
    /// `c / s`; `+inf` when `s = 0`.
    #[serde(with = "inf_as_null")]
    pub gamma: f64,
    pub x: Vector,
    pub p_a: Option<Vector>,
    pub p_l: Option<Vector>,
    pub residual_bound: f64,
    /// `e_kᵀ h`, the last entry of the right singular vector of `B_k`.
    pub h_last: f64,
    pub converged: bool,
}

impl GsvdTuple {
    /// The left vector of the operated side.
    pub fn p(&self) -> Option<&Vector> {
        match self.side {
            Side::A => self.p_a.as_ref(),
            Side::L => self.p_l.as_ref(),
        }
    }
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Largest,
    Smallest,
}

/// The `rank`-th (0-based) largest or smallest Ritz value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub kind: TargetKind,
    pub rank: usize,
}

impl Target {
    pub fn id(&self) -> String {
        match self.kind {
            TargetKind::Largest => format!("max{}", self.rank + 1),
            TargetKind::Smallest => format!("min{}", self.rank + 1),
        }
    }

    /// Index into the descending Ritz list of length `k`.
    pub fn ritz_index(&self, k: usize) -> Option<usize> {
        (self.rank < k).then(|| match self.kind {
            TargetKind::Largest => self.rank,
            TargetKind::Smallest => k - 1 - self.rank,
        })
    }

    /// The matching component of a reference, by position among the
    /// positive values of `side`.
    pub fn reference_component(&self, reference: &GsvdReference, side: Side) -> Option<usize> {
        let comps = reference.side_components(side);
        (self.rank < comps.len()).then(|| match self.kind {
            TargetKind::Largest => comps[self.rank],
            TargetKind::Smallest => comps[comps.len() - 1 - self.rank],
        })
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub n_largest: usize,
    pub n_smallest: usize,
    /// Tolerance on the residual bound.
    pub tol: f64,
    pub max_iters: usize,
    pub side: Side,
    pub ggkb: GgkbConfig,
    /// Stop once every target is converged. Off for studies that need the
    /// full trajectory.
    pub stop_on_convergence: bool,
    /// Power iterations for the `||(Aᵀ, Lᵀ)ᵀ||₂` estimate.
    pub norm_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n_largest: 1,
            n_smallest: 0,
            tol: DEFAULT_TOL,
            max_iters: 500,
            side: Side::A,
            ggkb: GgkbConfig::default(),
            stop_on_convergence: true,
            norm_iters: DEFAULT_NORM_ITERS,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_largest + self.n_smallest == 0 {
            return Err(GsvdError::invalid("request at least one largest or smallest target"));
        }
        if !(self.tol > 0.0) {
            return Err(GsvdError::invalid("tol must be positive"));
        }
        if self.max_iters == 0 {
            return Err(GsvdError::invalid("max_iters must be at least 1"));
        }
        self.ggkb.validate()
    }

    pub fn targets(&self) -> Vec<Target> {
        (0..self.n_largest)
            .map(|rank| Target {
                kind: TargetKind::Largest,
                rank,
            })
            .chain((0..self.n_smallest).map(|rank| Target {
                kind: TargetKind::Smallest,
                rank,
            }))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetRecord {
    pub target_id: String,
    pub theta: f64,
    pub c: f64,
    pub s: f64,
    pub bound: f64,
    pub err_value: Option<f64>,
    pub err_sin_x: Option<f64>,
    pub err_sin_p: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// All Ritz values, descending.
    pub ritz: Vec<f64>,
    pub targets: Vec<TargetRecord>,
}

/// Two or more Ritz values within [`GHOST_TOL`] of one reference value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GhostEvent {
    pub k: usize,
    pub reference_value: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConvergenceHistory {
    pub side: Side,
    pub records: Vec<IterationRecord>,
    pub ghosts: Vec<GhostEvent>,
}

impl ConvergenceHistory {
    pub fn ghost_detected(&self) -> bool {
        !self.ghosts.is_empty()
    }

    /// One row per iteration per target, after a schema comment line.
    pub fn to_csv(&self) -> String {
        let mut out = format!("#schema={HISTORY_SCHEMA}\n");
        out.push_str("k,target_id,side,theta,c,s,bound,err_value,err_sin_x,err_sin_p\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
        for rec in &self.records {
            for t in &rec.targets {
                let _ = writeln!(
                    out,
                    "{},{},{},{:.17e},{:.17e},{:.17e},{:.17e},{},{},{}",
                    rec.k,
                    t.target_id,
                    self.side.as_str(),
                    t.theta,
                    t.c,
                    t.s,
                    t.bound,
                    opt(t.err_value),
                    opt(t.err_sin_x),
                    opt(t.err_sin_p)
                );
            }
        }
        out
    }

    pub fn write_csv(&self, w: &mut impl io::Write) -> io::Result<()> {
        w.write_all(self.to_csv().as_bytes())
    }
}

/// `(c, s)` in GSVD orientation for a Ritz value of `side`.
fn oriented(side: Side, theta: f64) -> (f64, f64) {
    let theta = theta.clamp(0.0, 1.0);
    let comp = (1.0 - theta * theta).sqrt();
    match side {
        Side::A => (theta, comp),
        Side::L => (comp, theta),
    }
}

fn combine(basis: &[Vector], coeffs: &[f64]) -> Vector {
    let mut out = vec![0.0; basis[0].len()];
    for (b, &c) in basis.iter().zip(coeffs) {
        if c != 0.0 {
            axpy(c, b, &mut out);
        }
    }
    out
}

fn build_tuple(
    pair: &MatrixPair,
    state: &GgkbState,
    ritz_index: usize,
    theta: f64,
    y: &[f64],
    h: &[f64],
    tol: f64,
) -> GsvdTuple {
    let k = state.k();
    let side = pair.side();
    let (c, s) = oriented(side, theta);
    let x = combine(&state.bases.v[..k], h);
    let p = combine(&state.bases.u[..=k], y);
    let h_last = h[k - 1];
    let residual_bound = state.factor.coupling() * h_last.abs();

    // the complementary left vector from the other operator
    let comp_value = (1.0 - theta * theta).max(0.0).sqrt();
    let complement = (comp_value > COMPLEMENT_CUTOFF).then(|| {
        let mut q = pair.other().mul(&x);
        scale(1.0 / comp_value, &mut q);
        q
    });
    let (p_a, p_l) = match side {
        Side::A => (Some(p), complement),
        Side::L => (complement, Some(p)),
    };
    GsvdTuple {
        side,
        ritz_index,
        theta,
        c,
        s,
        gamma: if s == 0.0 { f64::INFINITY } else { c / s },
        x,
        p_a,
        p_l,
        residual_bound,
        h_last,
        converged: residual_bound < tol,
    }
}

/// Approximate tuples for the given positions in the descending Ritz list,
/// from a full SVD of `B_k`. `pair` must be oriented like the process.
pub fn extract_ritz(pair: &MatrixPair, state: &GgkbState, which: &[usize], tol: f64) -> Result<Vec<GsvdTuple>> {
    let k = state.k();
    if let Some(&bad) = which.iter().find(|&&j| j >= k) {
        return Err(GsvdError::invalid(format!("Ritz index {bad} out of range for k = {k}")));
    }
    if which.is_empty() {
        return Ok(vec![]);
    }
    let svd = small_svd(&assemble_bk(&state.factor)?)?;
    Ok(which
        .iter()
        .map(|&j| {
            build_tuple(
                pair,
                state,
                j,
                svd.singular_values[j],
                svd.left.col(j),
                svd.right.col(j),
                tol,
            )
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResidualCheck {
    /// `||op x̄ − θ p̄||`, zero in exact arithmetic.
    pub forward: f64,
    /// `||s̄² opᵀop x̄ − c̄² otherᵀother x̄ − α_{k+1}β_{k+1}(M v_{k+1}) e_kᵀh||`.
    pub normal_identity: f64,
    /// `(forward² + ||s̄² opᵀop x̄ − c̄² otherᵀother x̄||²)^{1/2}`.
    pub combined: f64,
}

/// Evaluates the residual identities of a tuple directly. Values are taken
/// in the orientation of the operated side (`c̄ = θ`).
pub fn residual_identity_check(tuple: &GsvdTuple, pair: &MatrixPair, state: &GgkbState) -> Result<ResidualCheck> {
    let pair = pair.on_side(tuple.side);
    let k = state.k();
    let p = tuple.p().ok_or_else(|| GsvdError::invalid("tuple has no left vector for its side"))?;
    let theta = tuple.theta;
    let comp_sq = (1.0 - theta * theta).max(0.0);

    let ox = pair.op().mul(&tuple.x);
    let mut fwd = ox.clone();
    axpy(-theta, p, &mut fwd);
    let forward = norm2(&fwd);

    let mut lhs = pair.op().tmul(&ox);
    scale(comp_sq, &mut lhs);
    axpy(-theta * theta, &pair.other().tmul(&pair.other().mul(&tuple.x)), &mut lhs);
    let lhs_norm = norm2(&lhs);
    axpy(-state.factor.coupling() * tuple.h_last, &state.bases.mv[k], &mut lhs);

    Ok(ResidualCheck {
        forward,
        normal_identity: norm2(&lhs),
        combined: forward.hypot(lhs_norm),
    })
}

/// `(1 − (x·y)² / (||x||² ||y||²))^{1/2}`, clamped to `[0, 1]`.
pub fn sin_angle(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(GsvdError::DimensionMismatch {
            op: "sin_angle",
            expected: x.len(),
            got: y.len(),
        });
    }
    let (nx, ny) = (norm2(x), norm2(y));
    if nx == 0.0 || ny == 0.0 {
        return Err(GsvdError::ZeroVector("sin_angle argument"));
    }
    // norm of the component of x̂ orthogonal to ŷ; accurate for tiny angles
    let cos = dot(x, y) / (nx * ny);
    let perp_sq: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| (xi / nx - cos * yi / ny).powi(2))
        .sum();
    Ok(perp_sq.sqrt().min(1.0))
}

/// Why the solver loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    /// `α_{k+1}β_{k+1}` vanished at step `k_t`.
    Terminated { k_t: usize },
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct SolverOutput {
    /// Largest group by θ descending, then smallest group by θ ascending.
    pub tuples: Vec<GsvdTuple>,
    pub history: ConvergenceHistory,
    pub state: GgkbState,
    /// `||(Aᵀ, Lᵀ)ᵀ||₂` estimate.
    pub nu: f64,
    pub stop: StopReason,
}

impl SolverOutput {
    pub fn all_converged(&self) -> bool {
        !self.tuples.is_empty() && self.tuples.iter().all(|t| t.converged)
    }
}

/// Counts reference values approached by two or more Ritz values.
pub fn detect_ghosts(k: usize, ritz: &[f64], reference_values: &[f64]) -> Vec<GhostEvent> {
    reference_values
        .iter()
        .filter_map(|&v| {
            let count = ritz.iter().filter(|&&t| (t - v).abs() <= GHOST_TOL).count();
            (count >= 2).then_some(GhostEvent {
                k,
                reference_value: v,
                count,
            })
        })
        .collect()
}

/// Runs the bidiagonalization on `cfg.side` and tracks the requested
/// extreme Ritz values until all have a residual bound below `cfg.tol`,
/// the process terminates, or `cfg.max_iters` steps were taken.
pub fn run_solver(
    pair: &MatrixPair,
    b: Option<&[f64]>,
    cfg: &SolverConfig,
    reference: Option<&GsvdReference>,
) -> Result<SolverOutput> {
    cfg.validate()?;
    let pair = pair.on_side(cfg.side);
    let side = cfg.side;
    let mut gcfg = cfg.ggkb.clone();
    gcfg.max_iters = cfg.max_iters;
    let mut proc = GgkbProcess::init(&pair, b, &gcfg)?;
    let nu = pair.spectral_norm_estimate(cfg.norm_iters);
    let targets = cfg.targets();
    let ref_values = reference.map(|r| r.side_values(side));

    let mut history = ConvergenceHistory {
        side,
        ..Default::default()
    };

    let stop = loop {
        let st = proc.state();
        if st.terminated {
            break StopReason::Terminated {
                k_t: st.terminate_step.unwrap_or(st.k()),
            };
        }
        if st.k() >= cfg.max_iters {
            break StopReason::MaxIters;
        }
        proc.step()?;
        let st = proc.state();
        let k = st.k();
        let spec = BidiagSpectrum::new(&st.factor.alphas, &st.factor.betas, k)?;
        let coupling = st.factor.coupling();

        let mut recs = Vec::with_capacity(targets.len());
        let mut all_converged = targets.iter().all(|t| t.ritz_index(k).is_some());
        for t in &targets {
            let Some(j) = t.ritz_index(k) else { continue };
            let trip = spec.triplet(j);
            let bound = coupling * trip.right[k - 1].abs();
            all_converged &= bound < cfg.tol;
            let (c, s) = oriented(side, trip.sigma);
            let mut rec = TargetRecord {
                target_id: t.id(),
                theta: trip.sigma,
                c,
                s,
                bound,
                err_value: None,
                err_sin_x: None,
                err_sin_p: None,
            };
            if let Some(r) = reference {
                if let Some(i) = t.reference_component(r, side) {
                    rec.err_value = Some((trip.sigma - r.side_value(side, i)).abs());
                    let x = combine(&st.bases.v[..k], &trip.right);
                    rec.err_sin_x = sin_angle(&x, r.x(i)).ok();
                    if let Some(pr) = r.side_p_col(side, i) {
                        let p = combine(&st.bases.u[..=k], &trip.left);
                        rec.err_sin_p = sin_angle(&p, pr).ok();
                    }
                }
            }
            recs.push(rec);
        }
        if let Some(vals) = &ref_values {
            history.ghosts.extend(detect_ghosts(k, &spec.values, vals));
        }
        history.records.push(IterationRecord {
            k,
            ritz: spec.values,
            targets: recs,
        });
        if cfg.stop_on_convergence && all_converged {
            break StopReason::Converged;
        }
    };

    let state = proc.into_state();
    let k = state.k();
    let mut tuples = Vec::new();
    if k > 0 {
        let which: Vec<usize> = targets.iter().filter_map(|t| t.ritz_index(k)).collect();
        tuples = extract_ritz(&pair, &state, &which, cfg.tol)?;
    }
    Ok(SolverOutput {
        tuples,
        history,
        state,
        nu,
        stop,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CbBoundReport {
    /// 1-based target index.
    pub i: usize,
    pub k: usize,
    /// Angle between `b` and the `i`-th left direction, weighted by `Σ`.
    pub angle: f64,
    /// Relative gap `(c_i² − c_{i+1}²)/(c_{i+1}² − c_r²)`.
    #[serde(with = "inf_as_null")]
    pub gap: f64,
    pub kappa: f64,
    pub chebyshev: f64,
    #[serde(with = "inf_as_null")]
    pub bound: f64,
}

/// `C_j(t) = ((t + (t²−1)^{1/2})^j + (t + (t²−1)^{1/2})^{−j}) / 2` for `t >= 1`.
pub fn chebyshev(j: usize, t: f64) -> f64 {
    let g = t + (t * t - 1.0).max(0.0).sqrt();
    let gj = g.powi(j as i32);
    0.5 * (gj + 1.0 / gj)
}

/// A priori bound on `c_i² − (θ_i^{(k)})²` for the `i`-th (1-based)
/// largest value on `side`:
/// `(c_1² − c_r²) · κ_i^{(k)} tan(angle_i) / C_{k−i}(1 + 2 gap_i)`.
/// `ritz` are the current Ritz values, descending. A zero gap gives `+inf`.
pub fn chebyshev_bound(
    reference: &GsvdReference,
    side: Side,
    b: &[f64],
    k: usize,
    i: usize,
    ritz: &[f64],
) -> Result<CbBoundReport> {
    let comps = reference.side_components(side);
    if i == 0 || i > comps.len() || i > k {
        return Err(GsvdError::invalid(format!(
            "target index {i} must satisfy 1 <= i <= min(k, {})",
            comps.len()
        )));
    }
    if ritz.len() < i - 1 {
        return Err(GsvdError::invalid("not enough Ritz values for the kappa factor"));
    }
    // all r values on this side, descending (zeros included)
    let all: Vec<f64> = match side {
        Side::A => reference.c.clone(),
        Side::L => reference.s.iter().rev().copied().collect(),
    };
    let cr2 = all.last().map_or(0.0, |v| v * v);
    let val = |idx: usize| reference.side_value(side, comps[idx]);

    let proj: Vec<f64> = comps
        .iter()
        .map(|&ci| {
            let p = reference.side_p_col(side, ci).expect("positive value has a left vector");
            reference.side_value(side, ci) * dot(p, b)
        })
        .collect();
    let total = norm2(&proj);
    if total == 0.0 {
        return Err(GsvdError::ZeroVector("weighted projection of b"));
    }
    let angle = (proj[i - 1].abs() / total).min(1.0).acos();

    let ci2 = val(i - 1).powi(2);
    let next2 = all.get(i).map_or(cr2, |v| v * v);
    let denom = next2 - cr2;
    let gap = if denom > 0.0 { (ci2 - next2) / denom } else { f64::INFINITY };

    let kappa: f64 = ritz[..i - 1]
        .iter()
        .map(|t| (t * t - cr2) / (t * t - ci2))
        .product();
    let (chebyshev_value, bound) = if gap.is_infinite() {
        (f64::INFINITY, f64::INFINITY)
    } else {
        let cv = chebyshev(k - i, 1.0 + 2.0 * gap);
        let c12 = val(0).powi(2);
        (cv, (c12 - cr2) * kappa * angle.tan() / cv)
    };
    Ok(CbBoundReport {
        i,
        k,
        angle,
        gap,
        kappa,
        chebyshev: chebyshev_value,
        bound,
    })
}
