//! The built-in coin-toss experiment and deterministic CSV emission.
//!
//! For each requested radius the nominal and robust fixed points are
//! solved, the certificate bound is evaluated, and one row per initial
//! state is emitted. The value gap is symmetric about the middle state, so
//! by default only states 0 through 5 are reported.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::bellman::{value_iteration, Mode, ValueFunction};
use crate::certify::certify;
use crate::error::{Error, Result};
use crate::mdp::{coin_toss_problem, AmbiguityConfig};

/// One (radius, initial state) cell of the experiment.
#[derive(Debug, Clone)]
pub struct ExperimentRow {
    pub epsilon: f64,
    pub x0: usize,
    pub v_true: f64,
    pub v_robust: f64,
    /// `v_true - v_robust`.
    pub diff: f64,
    /// Certified upper bound on the difference.
    pub bound: f64,
    /// `diff / bound`, zero when the bound is zero.
    pub ratio: f64,
}

/// Iteration cap for the experiment's value-iteration runs; generous for
/// any discount factor this experiment accepts.
const MAX_SWEEPS: usize = 100_000;

/// Runs the coin-toss experiment over a radius grid, reporting initial
/// states 0..=5.
pub fn run_cointoss_experiment(
    alpha: f64,
    epsilons: &[f64],
    q: u32,
    tol: f64,
) -> Result<Vec<ExperimentRow>> {
    run_cointoss_experiment_states(alpha, epsilons, q, tol, false)
}

/// As [`run_cointoss_experiment`], with `all_states` lifting the
/// symmetric-half restriction.
pub fn run_cointoss_experiment_states(
    alpha: f64,
    epsilons: &[f64],
    q: u32,
    tol: f64,
    all_states: bool,
) -> Result<Vec<ExperimentRow>> {
    let mut epsilons = epsilons.to_vec();
    epsilons.sort_by(|a, b| a.partial_cmp(b).expect("finite radii"));

    let per_epsilon: Vec<Result<Vec<ExperimentRow>>> = epsilons
        .par_iter()
        .map(|&epsilon| {
            let problem = coin_toss_problem(alpha, AmbiguityConfig::new(q, epsilon)?)?;
            let n = problem.n_states();
            let nominal = value_iteration(
                &problem,
                Mode::Nominal,
                ValueFunction::zeros(n),
                tol,
                MAX_SWEEPS,
            )?;
            if !nominal.converged {
                return Err(Error::NonConvergence {
                    max_iter: MAX_SWEEPS,
                    residual: nominal.residual,
                });
            }
            let robust = value_iteration(
                &problem,
                Mode::Robust,
                ValueFunction::zeros(n),
                tol,
                MAX_SWEEPS,
            )?;
            if !robust.converged {
                return Err(Error::NonConvergence {
                    max_iter: MAX_SWEEPS,
                    residual: robust.residual,
                });
            }
            let bound = certify(&problem).bound;
            let last_state = if all_states { n - 1 } else { 5 };
            let rows = (0..=last_state)
                .map(|x0| {
                    let v_true = nominal.value.get(x0);
                    let v_robust = robust.value.get(x0);
                    let diff = v_true - v_robust;
                    ExperimentRow {
                        epsilon,
                        x0,
                        v_true,
                        v_robust,
                        diff,
                        bound,
                        ratio: if bound > 0.0 { diff / bound } else { 0.0 },
                    }
                })
                .collect();
            Ok(rows)
        })
        .collect();

    let mut rows = Vec::new();
    for result in per_epsilon {
        rows.extend(result?);
    }
    Ok(rows)
}

/// Formats a real number with the given count of significant digits in
/// plain decimal notation, never scientific.
pub fn format_significant(value: f64, digits: usize) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    let magnitude = value.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{value:.decimals$}")
}

/// Writes the experiment rows as CSV with 12 significant digits per real.
pub fn write_csv<W: Write>(rows: &[ExperimentRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "epsilon,x0,v_true,v_robust,diff,bound,ratio")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            format_significant(row.epsilon, 12),
            row.x0,
            format_significant(row.v_true, 12),
            format_significant(row.v_robust, 12),
            format_significant(row.diff, 12),
            format_significant(row.bound, 12),
            format_significant(row.ratio, 12),
        )?;
    }
    Ok(())
}

/// Writes the rows to a file, surfacing IO failures with the path.
pub fn emit_csv(rows: &[ExperimentRow], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut writer = BufWriter::new(file);
    write_csv(rows, &mut writer).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    writer.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
