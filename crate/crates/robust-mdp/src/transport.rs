//! Exact discrete optimal transport on a shared finite support.
//!
//! Two solvers live here. Marginal-to-marginal transport (Wasserstein
//! distances and optimal couplings) runs successive shortest augmenting
//! paths with node potentials on the dense bipartite graph, which is exact
//! and needs no external LP dependency at the instance sizes this crate
//! targets (a few hundred support points).
//!
//! The robust inner problem -- the worst-case expectation over a
//! Wasserstein ball around a reference measure -- is a linear program with
//! a single coupling-cost budget row. Its Lagrangian dual
//!
//! ```text
//! g(lambda) = sum_i p_i * min_j (f_j + lambda * c_ij) - lambda * budget
//! ```
//!
//! is concave and piecewise linear in `lambda`, so it is maximized by
//! bisection on the subgradient (transport cost used minus budget), and a
//! primal plan is recovered by mixing the tied argmin destinations so the
//! budget holds with equality when the constraint is active. Strong
//! duality makes this exact for the single-constraint LP.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::mdp::{DiscreteDistribution, StateSpace};

/// Ground costs `||x_i - x_j||^q` between all pairs of states.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    q: u32,
    entries: Array2<f64>,
}

impl CostMatrix {
    pub fn from_states(states: &StateSpace, q: u32) -> Self {
        let n = states.len();
        let mut entries = Array2::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                let c = states.distance(i, j).powi(q as i32);
                entries[[i, j]] = c;
                entries[[j, i]] = c;
            }
        }
        Self { q, entries }
    }

    pub fn order(&self) -> u32 {
        self.q
    }

    /// Number of support points.
    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.nrows() == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[[i, j]]
    }

    pub fn max_entry(&self) -> f64 {
        self.entries.iter().fold(0.0f64, |m, &c| m.max(c))
    }

    /// Smallest off-diagonal cost; strictly positive because support
    /// points are pairwise distinct.
    pub fn min_positive_entry(&self) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..self.len() {
            for j in 0..self.len() {
                let c = self.entries[[i, j]];
                if c > 0.0 && c < m {
                    m = c;
                }
            }
        }
        m
    }
}

/// A transport plan between two discrete distributions together with its
/// cost against the ground-cost matrix used to build it.
#[derive(Debug, Clone)]
pub struct Coupling {
    pub plan: Array2<f64>,
    pub cost: f64,
}

/// Outcome of the robust inner problem.
#[derive(Debug, Clone)]
pub struct RobustExpectationResult {
    /// Worst-case expected payoff over the ball.
    pub value: f64,
    /// A measure in the ball attaining the value.
    pub worst_case: DiscreteDistribution,
    /// Optimal dual variable of the budget constraint.
    pub multiplier: f64,
    /// Transport cost spent by the attaining plan.
    pub budget_used: f64,
}

/// Mass below this is treated as already routed.
const MASS_EPS: f64 = 1e-15;

fn check_pair(
    p1: &DiscreteDistribution,
    p2: &DiscreteDistribution,
    cost: &CostMatrix,
) -> Result<()> {
    if p1.len() != cost.len() {
        return Err(Error::SupportMismatch {
            expected: cost.len(),
            got: p1.len(),
        });
    }
    if p2.len() != cost.len() {
        return Err(Error::SupportMismatch {
            expected: cost.len(),
            got: p2.len(),
        });
    }
    Ok(())
}

/// Minimum-cost transport between `supply` and `demand` (equal totals) by
/// successive shortest augmenting paths with Johnson potentials.
fn min_cost_transport(supply: &[f64], demand: &[f64], cost: &CostMatrix) -> Result<Array2<f64>> {
    let n = supply.len();
    let mut plan = Array2::<f64>::zeros((n, n));
    let mut supply = supply.to_vec();
    let mut demand = demand.to_vec();
    let mut pot_src = vec![0.0f64; n];
    let mut pot_snk = vec![0.0f64; n];

    // Each augmentation exhausts a supply, a demand, or a plan entry, so
    // the round budget is generous; exceeding it means the arithmetic
    // went wrong, not the instance.
    let max_rounds = 16 * (2 * n + 2);
    for _ in 0..max_rounds {
        if !supply.iter().any(|&s| s > MASS_EPS) {
            return Ok(plan);
        }

        // Multi-source Dijkstra over the residual graph with reduced costs.
        let mut dist_src = vec![f64::INFINITY; n];
        let mut dist_snk = vec![f64::INFINITY; n];
        let mut done_src = vec![false; n];
        let mut done_snk = vec![false; n];
        // For a sink, the source that reached it; for a source, the sink
        // whose backward arc reached it (usize::MAX marks an origin).
        let mut parent_snk = vec![usize::MAX; n];
        let mut parent_src = vec![usize::MAX; n];
        for i in 0..n {
            if supply[i] > MASS_EPS {
                dist_src[i] = 0.0;
            }
        }

        loop {
            let mut best = f64::INFINITY;
            let mut node = None;
            for i in 0..n {
                if !done_src[i] && dist_src[i] < best {
                    best = dist_src[i];
                    node = Some((true, i));
                }
            }
            for j in 0..n {
                if !done_snk[j] && dist_snk[j] < best {
                    best = dist_snk[j];
                    node = Some((false, j));
                }
            }
            let Some((is_src, idx)) = node else { break };
            if is_src {
                done_src[idx] = true;
                for j in 0..n {
                    if done_snk[j] {
                        continue;
                    }
                    let w = (cost.get(idx, j) + pot_src[idx] - pot_snk[j]).max(0.0);
                    if dist_src[idx] + w < dist_snk[j] {
                        dist_snk[j] = dist_src[idx] + w;
                        parent_snk[j] = idx;
                    }
                }
            } else {
                done_snk[idx] = true;
                for i in 0..n {
                    if done_src[i] || plan[[i, idx]] <= MASS_EPS {
                        continue;
                    }
                    let w = (pot_snk[idx] - cost.get(i, idx) - pot_src[i]).max(0.0);
                    if dist_snk[idx] + w < dist_src[i] {
                        dist_src[i] = dist_snk[idx] + w;
                        parent_src[i] = idx;
                    }
                }
            }
        }

        let mut target = None;
        let mut best = f64::INFINITY;
        for j in 0..n {
            if demand[j] > MASS_EPS && dist_snk[j] < best {
                best = dist_snk[j];
                target = Some(j);
            }
        }
        let Some(target) = target else {
            return Err(Error::TransportFailure);
        };

        for i in 0..n {
            pot_src[i] += dist_src[i].min(best);
        }
        for j in 0..n {
            pot_snk[j] += dist_snk[j].min(best);
        }

        // Trace the path back and find the bottleneck.
        let mut path = Vec::new(); // forward arcs (i, j) in reverse order
        let mut bottleneck = demand[target];
        let mut sink = target;
        let origin = loop {
            let src = parent_snk[sink];
            path.push((src, sink));
            let back = parent_src[src];
            if back == usize::MAX {
                bottleneck = bottleneck.min(supply[src]);
                break src;
            }
            bottleneck = bottleneck.min(plan[[src, back]]);
            sink = back;
        };

        debug_assert!(bottleneck > 0.0);
        let mut sink = target;
        for &(src, snk) in &path {
            debug_assert_eq!(snk, sink);
            plan[[src, snk]] += bottleneck;
            let back = parent_src[src];
            if back != usize::MAX {
                plan[[src, back]] -= bottleneck;
                sink = back;
            }
        }
        supply[origin] -= bottleneck;
        demand[target] -= bottleneck;
    }
    Err(Error::TransportFailure)
}

fn plan_cost(plan: &Array2<f64>, cost: &CostMatrix) -> f64 {
    let n = cost.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mass = plan[[i, j]];
            if mass > 0.0 {
                total += mass * cost.get(i, j);
            }
        }
    }
    total
}

/// `q`-Wasserstein distance between two distributions on the shared
/// support: the `q`-th root of the minimal transport cost.
pub fn wasserstein_distance(
    p1: &DiscreteDistribution,
    p2: &DiscreteDistribution,
    q: u32,
    cost: &CostMatrix,
) -> Result<f64> {
    if q < 1 {
        return Err(Error::InvalidOrder { q });
    }
    if cost.order() != q {
        return Err(Error::OrderMismatch {
            built: cost.order(),
            used: q,
        });
    }
    check_pair(p1, p2, cost)?;
    if p1 == p2 {
        return Ok(0.0);
    }
    let plan = min_cost_transport(p1.weights(), p2.weights(), cost)?;
    let total = plan_cost(&plan, cost).max(0.0);
    Ok(match q {
        1 => total,
        2 => total.sqrt(),
        q => total.powf(1.0 / f64::from(q)),
    })
}

/// Optimal transport plan between two distributions.
pub fn optimal_coupling(
    p1: &DiscreteDistribution,
    p2: &DiscreteDistribution,
    cost: &CostMatrix,
) -> Result<Coupling> {
    check_pair(p1, p2, cost)?;
    let plan = min_cost_transport(p1.weights(), p2.weights(), cost)?;
    let cost_total = plan_cost(&plan, cost).max(0.0);
    Ok(Coupling {
        plan,
        cost: cost_total,
    })
}

/// Per-row argmin of `f_j + lambda * c_ij`, breaking exact ties by lowest
/// cost and then lowest index.
#[derive(Debug, Clone, Copy)]
struct RowChoice {
    min_value: f64,
    dest: usize,
    dest_cost: f64,
}

fn row_choice(payoff: &[f64], lambda: f64, row: usize, cost: &CostMatrix) -> RowChoice {
    let mut best = RowChoice {
        min_value: f64::INFINITY,
        dest: 0,
        dest_cost: f64::INFINITY,
    };
    for (j, &f) in payoff.iter().enumerate() {
        let c = cost.get(row, j);
        let v = f + lambda * c;
        if v < best.min_value
            || (v == best.min_value
                && (c < best.dest_cost || (c == best.dest_cost && j < best.dest)))
        {
            best = RowChoice {
                min_value: v,
                dest: j,
                dest_cost: c,
            };
        }
    }
    best
}

/// Transport cost of the cheapest-tie selection at a given multiplier.
fn selection_cost(
    payoff: &[f64],
    lambda: f64,
    reference: &DiscreteDistribution,
    cost: &CostMatrix,
) -> f64 {
    let mut total = 0.0;
    for (i, &p) in reference.weights().iter().enumerate() {
        if p > 0.0 {
            total += p * row_choice(payoff, lambda, i, cost).dest_cost;
        }
    }
    total
}

/// Smallest multiplier pinning every supported row's argmin to its own
/// index (where the marginal transport cost is zero).
fn pinning_multiplier(payoff: &[f64], reference: &DiscreteDistribution, cost: &CostMatrix) -> f64 {
    let mut lambda = 0.0f64;
    for (i, &p) in reference.weights().iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        for (j, &f) in payoff.iter().enumerate() {
            if j != i {
                lambda = lambda.max((payoff[i] - f) / cost.get(i, j));
            }
        }
    }
    lambda
}

struct DualSolution {
    lambda: f64,
    bracket_width: f64,
}

/// Bisects the concave dual on the subgradient sign. Requires the
/// constraint to be active at zero (`selection_cost(0) > budget`).
fn bisect_multiplier(
    payoff: &[f64],
    reference: &DiscreteDistribution,
    budget: f64,
    cost: &CostMatrix,
) -> DualSolution {
    let f_max = payoff.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let f_min = payoff.iter().cloned().fold(f64::INFINITY, f64::min);
    // Beyond this multiplier every row keeps its mass in place.
    let mut hi = (f_max - f_min) / cost.min_positive_entry() + 1.0;
    let mut lo = 0.0f64;
    for _ in 0..100 {
        if hi - lo <= 1e-16 * (1.0 + hi) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if selection_cost(payoff, mid, reference, cost) <= budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    DualSolution {
        lambda: hi,
        bracket_width: hi - lo,
    }
}

/// Dual objective `g(lambda)` at a fixed multiplier.
fn dual_objective(
    payoff: &[f64],
    lambda: f64,
    reference: &DiscreteDistribution,
    budget: f64,
    cost: &CostMatrix,
) -> f64 {
    let mut total = 0.0;
    for (i, &p) in reference.weights().iter().enumerate() {
        if p > 0.0 {
            total += p * row_choice(payoff, lambda, i, cost).min_value;
        }
    }
    total - lambda * budget
}

fn validate_inner(
    payoff: &[f64],
    reference: &DiscreteDistribution,
    cost: &CostMatrix,
) -> Result<()> {
    if payoff.len() != cost.len() {
        return Err(Error::SupportMismatch {
            expected: cost.len(),
            got: payoff.len(),
        });
    }
    if reference.len() != cost.len() {
        return Err(Error::SupportMismatch {
            expected: cost.len(),
            got: reference.len(),
        });
    }
    Ok(())
}

/// Worst-case expectation of `payoff` over all measures within
/// `q`-Wasserstein distance `epsilon` of `reference`.
pub fn worst_case_expectation(
    payoff: &[f64],
    reference: &DiscreteDistribution,
    epsilon: f64,
    q: u32,
    cost: &CostMatrix,
) -> Result<RobustExpectationResult> {
    if q < 1 {
        return Err(Error::InvalidOrder { q });
    }
    if cost.order() != q {
        return Err(Error::OrderMismatch {
            built: cost.order(),
            used: q,
        });
    }
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::InvalidRadius { epsilon });
    }
    validate_inner(payoff, reference, cost)?;

    let nominal = reference.expectation(payoff);
    if epsilon == 0.0 {
        return Ok(RobustExpectationResult {
            value: nominal,
            worst_case: reference.clone(),
            multiplier: pinning_multiplier(payoff, reference, cost),
            budget_used: 0.0,
        });
    }
    let budget = epsilon.powi(q as i32);
    let n = cost.len();

    // Unconstrained minimum: if its cheapest-tie plan fits the budget the
    // constraint is slack and the multiplier is zero.
    let free: Vec<RowChoice> = (0..n).map(|i| row_choice(payoff, 0.0, i, cost)).collect();
    let mut free_cost = 0.0;
    for (i, &p) in reference.weights().iter().enumerate() {
        if p > 0.0 {
            free_cost += p * free[i].dest_cost;
        }
    }
    if free_cost <= budget {
        let mut weights = vec![0.0; n];
        let mut value = 0.0;
        for (i, &p) in reference.weights().iter().enumerate() {
            if p > 0.0 {
                weights[free[i].dest] += p;
                value += p * payoff[free[i].dest];
            }
        }
        if value > nominal {
            return Ok(RobustExpectationResult {
                value: nominal,
                worst_case: reference.clone(),
                multiplier: 0.0,
                budget_used: 0.0,
            });
        }
        return Ok(RobustExpectationResult {
            value,
            worst_case: DiscreteDistribution::new(weights)?,
            multiplier: 0.0,
            budget_used: free_cost,
        });
    }

    let dual = bisect_multiplier(payoff, reference, budget, cost);
    let lambda = dual.lambda;
    let f_inf = payoff.iter().fold(0.0f64, |m, f| m.max(f.abs()));
    let c_max = cost.max_entry();
    // Tie window: wide enough to capture the kink straddled by the final
    // bisection bracket, narrow enough to keep the recovered value within
    // the solver's promised accuracy.
    let eta = (1e-12 * (1.0 + f_inf + lambda * c_max)).max(4.0 * dual.bracket_width * c_max);

    // Cheapest and priciest tied destination per supported row.
    let mut low = vec![(0usize, 0.0f64); n];
    let mut high = vec![(0usize, 0.0f64); n];
    let mut cost_low = 0.0;
    let mut cost_high = 0.0;
    for (i, &p) in reference.weights().iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let m = row_choice(payoff, lambda, i, cost).min_value;
        let mut lo: Option<(usize, f64)> = None;
        let mut hi: Option<(usize, f64)> = None;
        for (j, &f) in payoff.iter().enumerate() {
            let c = cost.get(i, j);
            if f + lambda * c <= m + eta {
                if lo.is_none_or(|(_, lc)| c < lc) {
                    lo = Some((j, c));
                }
                if hi.is_none_or(|(_, hc)| c > hc) {
                    hi = Some((j, c));
                }
            }
        }
        let lo = lo.expect("argmin nonempty");
        let hi = hi.expect("argmin nonempty");
        low[i] = lo;
        high[i] = hi;
        cost_low += p * lo.1;
        cost_high += p * hi.1;
    }

    let theta = if cost_high > cost_low {
        ((budget - cost_low) / (cost_high - cost_low)).clamp(0.0, 1.0)
    } else {
        0.0
    };

    let mut weights = vec![0.0; n];
    let mut value = 0.0;
    let mut budget_used = 0.0;
    for (i, &p) in reference.weights().iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let (jl, cl) = low[i];
        let (jh, ch) = high[i];
        weights[jl] += (1.0 - theta) * p;
        weights[jh] += theta * p;
        value += p * ((1.0 - theta) * payoff[jl] + theta * payoff[jh]);
        budget_used += p * ((1.0 - theta) * cl + theta * ch);
    }

    if value > nominal {
        return Ok(RobustExpectationResult {
            value: nominal,
            worst_case: reference.clone(),
            multiplier: lambda,
            budget_used: 0.0,
        });
    }
    Ok(RobustExpectationResult {
        value,
        worst_case: DiscreteDistribution::new(weights)?,
        multiplier: lambda,
        budget_used,
    })
}

/// Lagrangian dual of the inner problem at transport budget `epsilon^q`:
/// returns the maximizing multiplier and the dual value, which equals the
/// primal worst-case expectation by strong duality.
pub fn solve_inner_dual(
    payoff: &[f64],
    reference: &DiscreteDistribution,
    budget: f64,
    cost: &CostMatrix,
) -> Result<(f64, f64)> {
    if !budget.is_finite() || budget < 0.0 {
        return Err(Error::InvalidRadius { epsilon: budget });
    }
    validate_inner(payoff, reference, cost)?;
    if budget == 0.0 {
        // The supremum is approached as the multiplier grows and pins all
        // mass in place; report the smallest pinning multiplier.
        return Ok((
            pinning_multiplier(payoff, reference, cost),
            reference.expectation(payoff),
        ));
    }
    if selection_cost(payoff, 0.0, reference, cost) <= budget {
        return Ok((0.0, dual_objective(payoff, 0.0, reference, budget, cost)));
    }
    let dual = bisect_multiplier(payoff, reference, budget, cost);
    let value = dual_objective(payoff, dual.lambda, reference, budget, cost);
    Ok((dual.lambda, value))
}
