use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use gsvd_core::ggkb::GgkbConfig;
use gsvd_core::oracle::verify_gsvd_identities;
use gsvd_core::pinv::PinvMode;
use gsvd_core::solver::{StopReason, Target, TargetKind};
use gsvd_core::testgen::{make_designed_pair, make_example1_seeded, make_example3_seeded, make_example4_seeded};
use gsvd_core::{dense_gsvd, run_solver, sin_angle, GsvdReference, Reorth, Side, SolverConfig};

use crate::files::*;
use crate::{CompareArgs, GenerateArgs, OracleArgs, PinvArg, Recipe, ReorthArg, RunArgs};

pub fn generate(args: GenerateArgs) -> Result<u8> {
    let dp = match args.recipe {
        Recipe::Example1 => make_example1_seeded(args.n, args.seed)?,
        Recipe::Example3 => {
            let r = args.r.context("example3 needs --r")?;
            make_example3_seeded(args.n, r, args.seed)?
        }
        Recipe::Example4 => make_example4_seeded(args.n, args.seed)?,
        Recipe::Designed => {
            if args.c.is_empty() {
                bail!("designed needs --c");
            }
            let r = args.r.unwrap_or(args.c.len());
            make_designed_pair(args.n, r, &args.c, (args.d_range[0], args.d_range[1]), args.seed)?
        }
    };
    dp.write(&args.out)?;
    println!(
        "wrote {} pair (n = {}, r = {}) to {}",
        dp.manifest.recipe,
        dp.manifest.n,
        dp.manifest.r,
        args.out.display()
    );
    Ok(0)
}

fn run_config(args: &RunArgs) -> RunConfig {
    RunConfig {
        a: args.a.clone(),
        l: args.l.clone(),
        side: args.side.into(),
        largest: args.largest,
        smallest: args.smallest,
        tol: args.tol,
        max_iters: args.max_iters,
        reorth: match args.reorth {
            ReorthArg::None => Reorth::None,
            ReorthArg::Full => Reorth::Full,
        },
        pinv: match args.pinv {
            PinvArg::Direct => PinvMode::Direct { rtol: None },
            PinvArg::Lsqr => PinvMode::Lsqr {
                tol: args.inner_tol,
                max_inner_iters: args.max_inner_iters,
            },
        },
        breakdown_tol: args.breakdown_tol,
        seed: args.seed,
        stop_on_convergence: !args.no_early_stop,
        reference: args.reference.clone(),
    }
}

fn solver_config(rc: &RunConfig) -> SolverConfig {
    SolverConfig {
        n_largest: rc.largest,
        n_smallest: rc.smallest,
        tol: rc.tol,
        max_iters: rc.max_iters,
        side: rc.side,
        ggkb: GgkbConfig {
            max_iters: rc.max_iters,
            reorth: rc.reorth,
            breakdown_tol: rc.breakdown_tol,
            pinv: rc.pinv,
            g_weight: None,
            seed: rc.seed,
        },
        stop_on_convergence: rc.stop_on_convergence,
        ..Default::default()
    }
}

pub fn run(args: RunArgs) -> Result<u8> {
    let rc = run_config(&args);
    let cfg = solver_config(&rc);
    cfg.validate()?;
    let pair = load_pair(&rc.a, &rc.l)?;
    let hash = pair_hash(&pair);
    let reference = match &rc.reference {
        Some(dir) => Some(load_reference(dir, &hash)?),
        None => None,
    };

    let out = run_solver(&pair, None, &cfg, reference.as_ref())?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let history = args.out.join(HISTORY_FILE);
    fs::write(&history, out.history.to_csv()).with_context(|| format!("writing {}", history.display()))?;

    let k = out.state.k();
    let ids: Vec<String> = cfg
        .targets()
        .iter()
        .filter(|t| t.ritz_index(k).is_some())
        .map(Target::id)
        .collect();
    let tuples: Vec<TupleSummary> = out
        .tuples
        .iter()
        .zip(&ids)
        .map(|(t, id)| TupleSummary {
            target_id: id.clone(),
            ritz_index: t.ritz_index,
            theta: t.theta,
            c: t.c,
            s: t.s,
            gamma: t.gamma.is_finite().then_some(t.gamma),
            residual_bound: t.residual_bound,
            converged: t.converged,
        })
        .collect();

    let xs: Vec<_> = out.tuples.iter().map(|t| Some(&t.x)).collect();
    let pas: Vec<_> = out.tuples.iter().map(|t| t.p_a.as_ref()).collect();
    let pls: Vec<_> = out.tuples.iter().map(|t| t.p_l.as_ref()).collect();
    write_columns(&args.out.join("X.mtx"), pair.n(), &xs)?;
    write_columns(&args.out.join("PA.mtx"), pair.a().nrows(), &pas)?;
    write_columns(&args.out.join("PL.mtx"), pair.l().nrows(), &pls)?;

    let all_converged = out.all_converged() && out.tuples.len() == cfg.targets().len();
    let summary = RunSummary {
        schema: SUMMARY_SCHEMA.into(),
        seed: rc.seed,
        pair_hash: hash,
        m: pair.a().nrows(),
        p: pair.l().nrows(),
        n: pair.n(),
        stop: out.stop,
        iterations: k,
        terminated: out.state.terminated,
        terminate_step: out.state.terminate_step,
        breakdown_value: out.state.breakdown_value,
        breakdown_tol: rc.breakdown_tol,
        nu: out.nu,
        all_converged,
        ghost_detected: reference.as_ref().map(|_| out.history.ghost_detected()),
        ghost_events: out.history.ghosts.len(),
        first_ghost_k: out.history.ghosts.iter().map(|g| g.k).min(),
        tuples,
        config: rc,
    };
    write_json(&args.out.join(SUMMARY_FILE), &summary)?;

    let stop = match out.stop {
        StopReason::Converged => "converged".to_string(),
        StopReason::Terminated { k_t } => format!("terminated at k_t = {k_t}"),
        StopReason::MaxIters => "max iterations reached".to_string(),
    };
    println!("{stop} after {k} iterations");
    for t in &summary.tuples {
        println!(
            "  {:<6} c = {:.15}  s = {:.15}  bound = {:.2e}{}",
            t.target_id,
            t.c,
            t.s,
            t.residual_bound,
            if t.converged { "" } else { "  (not converged)" }
        );
    }
    Ok(if all_converged { 0 } else { 2 })
}

fn load_reference(dir: &Path, hash: &str) -> Result<GsvdReference> {
    let sum: OracleSummary = read_json(&dir.join(ORACLE_FILE))?;
    if sum.pair_hash != hash {
        bail!("reference {} was computed for a different pair", dir.display());
    }
    Ok(GsvdReference::load(dir)?)
}

pub fn oracle(args: OracleArgs) -> Result<u8> {
    let pair = load_pair(&args.a, &args.l)?;
    let reference = dense_gsvd(&pair)?;
    let identities = verify_gsvd_identities(&reference, &pair)?;
    reference.save(&args.out)?;
    let summary = OracleSummary {
        pair_hash: pair_hash(&pair),
        n: reference.n,
        r: reference.r,
        q: (reference.q1, reference.q2, reference.q3),
        identities,
    };
    write_json(&args.out.join(ORACLE_FILE), &summary)?;
    println!(
        "r = {} (q1 = {}, q2 = {}, q3 = {}); identity residual / nu = {:.1e}",
        reference.r,
        reference.q1,
        reference.q2,
        reference.q3,
        identities.relations_max() / identities.nu.max(f64::MIN_POSITIVE)
    );
    Ok(0)
}

#[derive(Debug, Serialize)]
struct CompareRow {
    target_id: String,
    converged: bool,
    matched: Option<String>,
    c: f64,
    c_ref: Option<f64>,
    err_value: Option<f64>,
    err_gamma_rel: Option<f64>,
    err_sin_x: Option<f64>,
    err_sin_p: Option<f64>,
}

#[derive(Debug, Serialize)]
struct CompareReport {
    run: String,
    reference: String,
    pair_hash: String,
    rows: Vec<CompareRow>,
}

fn parse_target(id: &str) -> Option<Target> {
    let (kind, rest) = if let Some(r) = id.strip_prefix("max") {
        (TargetKind::Largest, r)
    } else {
        (TargetKind::Smallest, id.strip_prefix("min")?)
    };
    let rank = rest.parse::<usize>().ok()?.checked_sub(1)?;
    Some(Target { kind, rank })
}

fn gamma(c: f64, s: f64) -> f64 {
    if s == 0.0 {
        f64::INFINITY
    } else {
        c / s
    }
}

/// Largest `|c - c_ref|` at which runs on different sides are paired.
pub const CROSS_SIDE_MATCH_TOL: f64 = 1e-6;

/// Index in `other` matched to row `i` of `run`: by target for an oracle or
/// a run on the same side, by nearest `c` otherwise.
fn match_component(run: &ComponentSet, i: usize, other: &ComponentSet) -> Option<usize> {
    let side = run.side?;
    if let Some(r) = &other.reference {
        return parse_target(&run.ids[i])?.reference_component(r, side);
    }
    if other.side == Some(side) {
        return other.ids.iter().position(|id| *id == run.ids[i]);
    }
    // across sides only components present in both runs can be paired
    (0..other.len())
        .min_by(|&a, &b| {
            let da = (other.c[a] - run.c[i]).abs();
            let db = (other.c[b] - run.c[i]).abs();
            da.total_cmp(&db)
        })
        .filter(|&j| (other.c[j] - run.c[i]).abs() <= CROSS_SIDE_MATCH_TOL)
}

pub fn compare(args: CompareArgs) -> Result<u8> {
    let run = ComponentSet::load(&args.run)?;
    if run.side.is_none() {
        bail!("{} is not a run directory", args.run.display());
    }
    let other = ComponentSet::load(&args.reference)?;
    if run.pair_hash != other.pair_hash {
        bail!(
            "pair hashes differ: {} has {}, {} has {}",
            args.run.display(),
            run.pair_hash,
            args.reference.display(),
            other.pair_hash
        );
    }
    let side = run.side.unwrap_or(Side::A);

    let mut rows = Vec::with_capacity(run.len());
    for i in 0..run.len() {
        let j = match_component(&run, i, &other);
        let mut row = CompareRow {
            target_id: run.ids[i].clone(),
            converged: run.converged[i],
            matched: j.map(|j| other.ids[j].clone()),
            c: run.c[i],
            c_ref: j.map(|j| other.c[j]),
            err_value: None,
            err_gamma_rel: None,
            err_sin_x: None,
            err_sin_p: None,
        };
        if let Some(j) = j {
            row.err_value = Some((run.c[i] - other.c[j]).abs());
            let (g, gr) = (gamma(run.c[i], run.s[i]), gamma(other.c[j], other.s[j]));
            row.err_gamma_rel = if g == gr {
                Some(0.0)
            } else if gr.is_finite() && gr > 0.0 {
                Some((g - gr).abs() / gr)
            } else {
                None
            };
            row.err_sin_x = sin_angle(&run.x[i], &other.x[j]).ok();
            if let (Some(p), Some(q)) = (run.p(side, i), other.p(side, j)) {
                row.err_sin_p = sin_angle(p, q).ok();
            }
        }
        rows.push(row);
    }

    let out_dir = args.out.clone().unwrap_or_else(|| args.run.clone());
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
    let mut csv = String::from("target_id,converged,matched,c,c_ref,err_value,err_gamma_rel,err_sin_x,err_sin_p\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{:.17e},{},{},{},{},{}",
            r.target_id,
            r.converged,
            r.matched.as_deref().unwrap_or(""),
            r.c,
            opt(r.c_ref),
            opt(r.err_value),
            opt(r.err_gamma_rel),
            opt(r.err_sin_x),
            opt(r.err_sin_p)
        );
    }
    let csv_path = out_dir.join("compare.csv");
    fs::write(&csv_path, csv).with_context(|| format!("writing {}", csv_path.display()))?;
    let report = CompareReport {
        run: args.run.display().to_string(),
        reference: args.reference.display().to_string(),
        pair_hash: run.pair_hash.clone(),
        rows,
    };
    write_json(&out_dir.join("compare.json"), &report)?;
    for r in &report.rows {
        println!(
            "  {:<6} -> {:<6} |c - c_ref| = {:.1e}  sin x = {:.1e}",
            r.target_id,
            r.matched.as_deref().unwrap_or("-"),
            r.err_value.unwrap_or(f64::NAN),
            r.err_sin_x.unwrap_or(f64::NAN)
        );
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_ids_round_trip() {
        for t in [
            Target { kind: TargetKind::Largest, rank: 0 },
            Target { kind: TargetKind::Smallest, rank: 4 },
        ] {
            assert_eq!(parse_target(&t.id()), Some(t));
        }
        assert_eq!(parse_target("max0"), None);
        assert_eq!(parse_target("comp3"), None);
    }

    #[test]
    fn gamma_of_unit_pair() {
        assert!(gamma(1.0, 0.0).is_infinite());
        assert_eq!(gamma(0.5, 0.25), 2.0);
    }
}
