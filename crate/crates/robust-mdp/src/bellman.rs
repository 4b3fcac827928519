//! One-step dynamic-programming operators and value iteration.
//!
//! Three operator modes share the sweep machinery: the nominal operator
//! integrates against a fixed kernel, the robust operator takes the inner
//! worst case over the Wasserstein ball around the reference kernel, and
//! the fixed mode evaluates any supplied kernel (typically an extracted
//! worst-case kernel). All three are alpha-contractions in the sup norm,
//! so value iteration converges geometrically from any start.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::{DiscreteDistribution, ProblemSpec, TransitionKernel};
use crate::transport::worst_case_expectation;

/// Vector of values over state indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub values: Vec<f64>,
}

impl ValueFunction {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
        }
    }

    pub fn constant(c: f64, n: usize) -> Self {
        Self { values: vec![c; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize) -> f64 {
        self.values[x]
    }

    /// Sup-norm distance to another value function.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Action-value table over states x actions.
#[derive(Debug, Clone, PartialEq)]
pub struct QFunction {
    pub values: Array2<f64>,
}

impl QFunction {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            values: Array2::zeros((n_states, n_actions)),
        }
    }

    pub fn n_states(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.values.ncols()
    }
}

/// Stationary deterministic policy: one action index per state.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub actions: Vec<usize>,
}

/// Result of iterating an operator to its fixed point.
#[derive(Debug, Clone)]
pub struct FixedPointReport {
    pub value: ValueFunction,
    pub iterations: usize,
    /// Sup norm of the last update.
    pub residual: f64,
    pub converged: bool,
    /// Residual after every sweep, for contraction diagnostics.
    pub residuals: Vec<f64>,
}

/// Which operator value iteration runs.
#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    /// Integrate against the problem's true kernel.
    Nominal,
    /// Inner worst case over the ambiguity ball around the center kernel.
    Robust,
    /// Integrate against the supplied kernel.
    Fixed(&'a TransitionKernel),
}

fn check_value_shape(problem: &ProblemSpec, v: &ValueFunction) -> Result<()> {
    if v.len() != problem.n_states() {
        return Err(Error::WrongCount {
            context: "value function",
            expected: problem.n_states(),
            got: v.len(),
        });
    }
    Ok(())
}

fn action_value(
    problem: &ProblemSpec,
    kernel: &TransitionKernel,
    v: &ValueFunction,
    x: usize,
    a: usize,
) -> f64 {
    let dist = kernel.get(x, a);
    let mut total = 0.0;
    for (next, &w) in dist.weights().iter().enumerate() {
        if w > 0.0 {
            total += w * (problem.reward.get(x, a, next) + problem.alpha * v.get(next));
        }
    }
    total
}

fn sweep_with_kernel(
    problem: &ProblemSpec,
    kernel: &TransitionKernel,
    v: &ValueFunction,
) -> ValueFunction {
    let values = (0..problem.n_states())
        .map(|x| {
            (0..problem.n_actions())
                .map(|a| action_value(problem, kernel, v, x, a))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    ValueFunction { values }
}

/// One application of the expected-value operator under the true kernel:
/// `output(x) = max_a sum_x' kernel(x,a)(x') (r(x,a,x') + alpha v(x'))`.
pub fn nominal_bellman_apply(
    problem: &ProblemSpec,
    kernel: &TransitionKernel,
    v: &ValueFunction,
) -> Result<ValueFunction> {
    check_value_shape(problem, v)?;
    if kernel.n_states() != problem.n_states() || kernel.n_actions() != problem.n_actions() {
        return Err(Error::WrongCount {
            context: "kernel",
            expected: problem.n_states() * problem.n_actions(),
            got: kernel.n_states() * kernel.n_actions(),
        });
    }
    Ok(sweep_with_kernel(problem, kernel, v))
}

/// Same one-step operator evaluated under an arbitrary supplied kernel,
/// e.g. an extracted worst-case kernel.
pub fn fixed_kernel_bellman_apply(
    problem: &ProblemSpec,
    kernel: &TransitionKernel,
    v: &ValueFunction,
) -> Result<ValueFunction> {
    nominal_bellman_apply(problem, kernel, v)
}

/// One application of the robust operator. Returns the new values and the
/// kernel of inner-minimizing distributions, one per (state, action) pair.
pub fn robust_bellman_apply(
    problem: &ProblemSpec,
    v: &ValueFunction,
) -> Result<(ValueFunction, TransitionKernel)> {
    check_value_shape(problem, v)?;
    let cost = problem.cost_matrix();
    let epsilon = problem.ambiguity.epsilon;
    let q = problem.ambiguity.q;
    let n = problem.n_states();
    let m = problem.n_actions();

    let per_state: Vec<(f64, Vec<DiscreteDistribution>)> = (0..n)
        .into_par_iter()
        .map(|x| {
            let mut best = f64::NEG_INFINITY;
            let mut dists = Vec::with_capacity(m);
            for a in 0..m {
                let payoff: Vec<f64> = (0..n)
                    .map(|next| problem.reward.get(x, a, next) + problem.alpha * v.get(next))
                    .collect();
                let inner =
                    worst_case_expectation(&payoff, problem.center.get(x, a), epsilon, q, cost)
                        .expect("validated shapes");
                best = best.max(inner.value);
                dists.push(inner.worst_case);
            }
            (best, dists)
        })
        .collect();

    let mut values = Vec::with_capacity(n);
    let mut table = Vec::with_capacity(n);
    for (value, dists) in per_state {
        values.push(value);
        table.push(dists);
    }
    let kernel = TransitionKernel::from_table(n, m, table)?;
    Ok((ValueFunction { values }, kernel))
}

fn apply(problem: &ProblemSpec, mode: Mode<'_>, v: &ValueFunction) -> Result<ValueFunction> {
    match mode {
        Mode::Nominal => {
            let kernel = problem
                .true_kernel
                .as_ref()
                .ok_or(Error::MissingTrueKernel)?;
            nominal_bellman_apply(problem, kernel, v)
        }
        Mode::Robust => robust_bellman_apply(problem, v).map(|(v, _)| v),
        Mode::Fixed(kernel) => fixed_kernel_bellman_apply(problem, kernel, v),
    }
}

/// Iterates the selected operator until the sup-norm residual drops to
/// `tol * (1 - alpha) / (2 alpha)`, which caps the fixed-point error at
/// `tol` by the standard contraction argument, or until `max_iter` sweeps.
/// Non-convergence is flagged on the report rather than raised.
pub fn value_iteration(
    problem: &ProblemSpec,
    mode: Mode<'_>,
    v0: ValueFunction,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointReport> {
    if tol <= 0.0 || !tol.is_finite() {
        return Err(Error::InvalidTolerance { tol });
    }
    check_value_shape(problem, &v0)?;
    let threshold = tol * (1.0 - problem.alpha) / (2.0 * problem.alpha);
    let mut v = v0;
    let mut residuals = Vec::new();
    for iteration in 1..=max_iter {
        let next = apply(problem, mode, &v)?;
        let residual = next.sup_distance(&v);
        if let Some(&prev) = residuals.last() {
            // Banach contraction, with allowance for inner-solver rounding.
            debug_assert!(
                residual <= problem.alpha * prev + 1e-9,
                "residual sequence not contracting: {prev} -> {residual}"
            );
        }
        residuals.push(residual);
        v = next;
        if residual <= threshold {
            return Ok(FixedPointReport {
                value: v,
                iterations: iteration,
                residual,
                converged: true,
                residuals,
            });
        }
    }
    let residual = residuals.last().copied().unwrap_or(f64::INFINITY);
    Ok(FixedPointReport {
        value: v,
        iterations: residuals.len(),
        residual,
        converged: false,
        residuals,
    })
}

/// Greedy policy with respect to a converged value function; ties break to
/// the lowest action index.
pub fn extract_policy(problem: &ProblemSpec, mode: Mode<'_>, v: &ValueFunction) -> Result<Policy> {
    check_value_shape(problem, v)?;
    let n = problem.n_states();
    let m = problem.n_actions();
    let mut actions = Vec::with_capacity(n);
    for x in 0..n {
        let mut best = f64::NEG_INFINITY;
        let mut best_action = 0;
        for a in 0..m {
            let value = match mode {
                Mode::Nominal => {
                    let kernel = problem
                        .true_kernel
                        .as_ref()
                        .ok_or(Error::MissingTrueKernel)?;
                    action_value(problem, kernel, v, x, a)
                }
                Mode::Fixed(kernel) => action_value(problem, kernel, v, x, a),
                Mode::Robust => {
                    let payoff: Vec<f64> = (0..n)
                        .map(|next| problem.reward.get(x, a, next) + problem.alpha * v.get(next))
                        .collect();
                    worst_case_expectation(
                        &payoff,
                        problem.center.get(x, a),
                        problem.ambiguity.epsilon,
                        problem.ambiguity.q,
                        problem.cost_matrix(),
                    )?
                    .value
                }
            };
            if value > best {
                best = value;
                best_action = a;
            }
        }
        actions.push(best_action);
    }
    Ok(Policy { actions })
}

/// The kernel of inner minimizers at the robust fixed point. Every entry
/// lies in the ambiguity ball, and re-applying the one-step operator under
/// this kernel leaves the fixed point invariant.
pub fn extract_worst_case_kernel(
    problem: &ProblemSpec,
    v_star: &ValueFunction,
) -> Result<TransitionKernel> {
    robust_bellman_apply(problem, v_star).map(|(_, kernel)| kernel)
}
