//! Constant estimation and the value-gap certificate.
//!
//! On finite problems every Lipschitz constant is an exact maximum over
//! finitely many difference quotients, so the estimators enumerate rather
//! than sample. The certificate bounds the gap between the nominal and the
//! robust value function by
//!
//! ```text
//! (2 - centered) * L_r * epsilon * (1 + alpha) * sum_i alpha^i sum_{j<=i} L_P^j
//! ```
//!
//! where `centered` drops the factor of two when the true kernel coincides
//! with the ball's center. The double series converges exactly when
//! `alpha * L_P < 1`; divergence is reported as a non-finite bound with a
//! failed flag so parameter sweeps keep running.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{ActionSpace, ProblemSpec, StateSpace, TransitionKernel};
use crate::transport::{wasserstein_distance, CostMatrix};

/// Exact Lipschitz constants estimated from problem data.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LipschitzEstimates {
    /// Reward constant `L_r`.
    pub reward: f64,
    /// True-kernel constant `L_P` (falls back to the center constant when
    /// no true kernel is present).
    pub true_kernel: f64,
    /// Center-kernel constant.
    pub center: f64,
}

/// Assumption verdicts and the certified bound for one problem instance.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub estimates: LipschitzEstimates,
    /// Growth constant gating admissible discount factors; 1 on problems
    /// with bounded rewards unless the full formula is forced.
    pub c_p: f64,
    /// `alpha < 1 / C_P`.
    pub alpha_ok: bool,
    /// `alpha * L_P < 1`, required for the bound's series.
    pub contraction_ok: bool,
    /// True kernel lies in the ball at every (state, action) pair.
    pub membership_ok: bool,
    pub max_membership_distance: f64,
    /// Upper bound on `V_nominal - V_robust`; infinite when the series
    /// diverges.
    pub bound: f64,
    /// Whether the halved centered-case bound applies.
    pub centered: bool,
    pub true_kernel_present: bool,
}

/// Optional overrides for [`certify_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct CertifyOptions {
    /// Evaluate the unbounded-reward growth formula instead of the
    /// bounded-reward constant 1.
    pub force_unbounded_formula: bool,
    /// Trust a caller-supplied reward constant instead of enumerating.
    pub override_reward_lipschitz: Option<f64>,
    /// Trust a caller-supplied kernel constant instead of enumerating.
    pub override_kernel_lipschitz: Option<f64>,
}

/// Exact reward Lipschitz constant: the maximum difference quotient
/// `|r(t) - r(t')| / (||x-x'|| + ||a-a'|| + ||y-y'||)` over all distinct
/// triples.
pub fn estimate_reward_lipschitz(problem: &ProblemSpec) -> f64 {
    let n = problem.n_states();
    let m = problem.n_actions();
    let total = n * m * n;
    let unpack = |t: usize| (t / (m * n), (t / n) % m, t % n);
    (0..total)
        .into_par_iter()
        .map(|t1| {
            let (x1, a1, y1) = unpack(t1);
            let r1 = problem.reward.get(x1, a1, y1);
            let mut worst = 0.0f64;
            for t2 in (t1 + 1)..total {
                let (x2, a2, y2) = unpack(t2);
                let denom = problem.states.distance(x1, x2)
                    + problem.actions.distance(a1, a2)
                    + problem.states.distance(y1, y2);
                let num = (r1 - problem.reward.get(x2, a2, y2)).abs();
                if num > worst * denom {
                    worst = num / denom;
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

/// Exact kernel Lipschitz constant: the maximum of
/// `d_Wq(k(x,a), k(x',a')) / (||x-x'|| + ||a-a'||)` over distinct pairs.
pub fn estimate_kernel_lipschitz(
    kernel: &TransitionKernel,
    q: u32,
    cost: &CostMatrix,
    states: &StateSpace,
    actions: &ActionSpace,
) -> f64 {
    let n = states.len();
    let m = actions.len();
    let total = n * m;
    let unpack = |t: usize| (t / m, t % m);
    (0..total)
        .into_par_iter()
        .map(|t1| {
            let (x1, a1) = unpack(t1);
            let d1 = kernel.get(x1, a1);
            let mut worst = 0.0f64;
            for t2 in (t1 + 1)..total {
                let (x2, a2) = unpack(t2);
                if kernel.get(x2, a2) == d1 {
                    continue;
                }
                let denom = states.distance(x1, x2) + actions.distance(a1, a2);
                let dist = wasserstein_distance(d1, kernel.get(x2, a2), q, cost)
                    .expect("kernel rows share the cost support");
                if dist > worst * denom {
                    worst = dist / denom;
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

/// Checks that the true kernel lies in the ambiguity ball at every
/// (state, action) pair; returns the verdict and the largest distance.
pub fn check_membership(problem: &ProblemSpec) -> Result<(bool, f64)> {
    let true_kernel = problem
        .true_kernel
        .as_ref()
        .ok_or(Error::MissingTrueKernel)?;
    let cost = problem.cost_matrix();
    let q = problem.ambiguity.q;
    let pairs: Vec<(usize, usize)> = (0..problem.n_states())
        .flat_map(|x| (0..problem.n_actions()).map(move |a| (x, a)))
        .collect();
    let max_distance = pairs
        .into_par_iter()
        .map(|(x, a)| {
            wasserstein_distance(true_kernel.get(x, a), problem.center.get(x, a), q, cost)
                .expect("kernels share the cost support")
        })
        .reduce(|| 0.0, f64::max);
    Ok((
        max_distance <= problem.ambiguity.epsilon + 1e-9,
        max_distance,
    ))
}

/// Growth constant gating the admissible discount factors. Finite state
/// spaces force bounded rewards, so the default branch returns 1; the
/// unbounded-reward formula
///
/// ```text
/// max{ 1 + epsilon + sup_a inf_x ( E_{center(x,a)}||z|| + L_center ||x|| ), L_center }
/// ```
///
/// stays available behind `force_unbounded_formula`.
pub fn compute_c_p(
    problem: &ProblemSpec,
    center_lipschitz: f64,
    force_unbounded_formula: bool,
) -> f64 {
    if !force_unbounded_formula {
        return 1.0;
    }
    let n = problem.n_states();
    let norms: Vec<f64> = (0..n).map(|i| problem.states.norm(i)).collect();
    let mut sup = f64::NEG_INFINITY;
    for a in 0..problem.n_actions() {
        let mut inf = f64::INFINITY;
        for x in 0..n {
            let mean_norm = problem.center.get(x, a).expectation(&norms);
            inf = inf.min(mean_norm + center_lipschitz * norms[x]);
        }
        sup = sup.max(inf);
    }
    (1.0 + problem.ambiguity.epsilon + sup).max(center_lipschitz)
}

/// Closed form of `sum_{i>=0} alpha^i sum_{j=0}^i L_P^j`, which converges
/// exactly when `alpha * L_P < 1`.
pub fn double_series_sum(alpha: f64, l_p: f64) -> Result<f64> {
    if !alpha.is_finite() || alpha <= 0.0 || alpha >= 1.0 {
        return Err(Error::InvalidDiscount { alpha });
    }
    if !l_p.is_finite() || l_p < 0.0 {
        return Err(Error::DivergentSeries { product: f64::NAN });
    }
    let product = alpha * l_p;
    if product >= 1.0 {
        return Err(Error::DivergentSeries { product });
    }
    if (l_p - 1.0).abs() < 1e-9 {
        // sum (i+1) alpha^i
        return Ok(1.0 / ((1.0 - alpha) * (1.0 - alpha)));
    }
    Ok((1.0 / (1.0 - alpha) - l_p / (1.0 - product)) / (1.0 - l_p))
}

/// The certified upper bound on the value gap:
/// `(2 - centered) * L_r * epsilon * (1 + alpha) * double_series_sum`.
pub fn theorem_bound(l_r: f64, l_p: f64, alpha: f64, epsilon: f64, centered: bool) -> Result<f64> {
    let series = double_series_sum(alpha, l_p)?;
    let factor = if centered { 1.0 } else { 2.0 };
    Ok(factor * l_r * epsilon * (1.0 + alpha) * series)
}

/// Runs every estimator and check and assembles the certificate.
///
/// Without a true kernel the center stands in for it: membership holds
/// trivially, the centered bound applies, and `true_kernel_present` is
/// cleared so downstream consumers can tell the difference.
pub fn certify(problem: &ProblemSpec) -> CertificateReport {
    certify_with(problem, &CertifyOptions::default())
}

pub fn certify_with(problem: &ProblemSpec, options: &CertifyOptions) -> CertificateReport {
    let cost = problem.cost_matrix();
    let q = problem.ambiguity.q;
    let center_l =
        estimate_kernel_lipschitz(&problem.center, q, cost, &problem.states, &problem.actions);
    let reward_l = options
        .override_reward_lipschitz
        .unwrap_or_else(|| estimate_reward_lipschitz(problem));
    let true_kernel_present = problem.true_kernel.is_some();
    let kernel_l =
        options
            .override_kernel_lipschitz
            .unwrap_or_else(|| match &problem.true_kernel {
                Some(kernel) => {
                    estimate_kernel_lipschitz(kernel, q, cost, &problem.states, &problem.actions)
                }
                None => center_l,
            });

    let (membership_ok, max_membership_distance) = check_membership(problem).unwrap_or((true, 0.0));
    let centered = match &problem.true_kernel {
        Some(kernel) => kernel == &problem.center || max_membership_distance <= 1e-12,
        None => true,
    };

    let c_p = compute_c_p(problem, center_l, options.force_unbounded_formula);
    let alpha_ok = problem.alpha < 1.0 / c_p;
    let contraction_ok = problem.alpha * kernel_l < 1.0;
    let bound = if contraction_ok {
        theorem_bound(
            reward_l,
            kernel_l,
            problem.alpha,
            problem.ambiguity.epsilon,
            centered,
        )
        .expect("series converges when contraction_ok")
    } else {
        f64::INFINITY
    };

    CertificateReport {
        estimates: LipschitzEstimates {
            reward: reward_l,
            true_kernel: kernel_l,
            center: center_l,
        },
        c_p,
        alpha_ok,
        contraction_ok,
        membership_ok,
        max_membership_distance,
        bound,
        centered,
        true_kernel_present,
    }
}
