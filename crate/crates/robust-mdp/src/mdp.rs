//! Finite problem data model: state and action spaces as point sets in
//! Euclidean space, discrete distributions, transition kernels, reward
//! tables, and the assembled problem specification.
//!
//! Everything here is immutable after construction and safe to share
//! read-only across worker threads.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::transport::CostMatrix;

/// Absolute floor below which a weight is rejected as genuinely negative.
pub const WEIGHT_FLOOR: f64 = -1e-12;
/// Input distributions may deviate from unit mass by this much before
/// renormalization is refused.
pub const SUM_INPUT_TOLERANCE: f64 = 1e-9;

/// Finite set of states, each a point in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    points: Vec<Vec<f64>>,
    dim: usize,
}

/// Finite set of actions, each a point in `R^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpace {
    points: Vec<Vec<f64>>,
    dim: usize,
}

fn validate_points(points: &[Vec<f64>], empty: Error) -> Result<usize> {
    let Some(first) = points.first() else {
        return Err(empty);
    };
    let dim = first.len();
    if dim == 0 {
        return Err(Error::DimensionMismatch {
            index: 0,
            expected: 1,
            got: 0,
        });
    }
    for (index, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                index,
                expected: dim,
                got: p.len(),
            });
        }
        if p.iter().any(|c| !c.is_finite()) {
            return Err(Error::DimensionMismatch {
                index,
                expected: dim,
                got: p.len(),
            });
        }
    }
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            if euclidean(&points[i], &points[j]) == 0.0 {
                return Err(Error::DuplicatePoint { i, j });
            }
        }
    }
    Ok(dim)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

impl StateSpace {
    /// Builds a state space from distinct points of equal dimension.
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = validate_points(&points, Error::EmptyStateSpace)?;
        Ok(Self { points, dim })
    }

    /// The integers `0..=n` embedded in the real line.
    pub fn line(n: u32) -> Self {
        let points = (0..=n).map(|k| vec![f64::from(k)]).collect();
        Self { points, dim: 1 }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    /// Euclidean distance between states `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        euclidean(&self.points[i], &self.points[j])
    }

    /// Euclidean norm of state `i` as a vector.
    pub fn norm(&self, i: usize) -> f64 {
        self.points[i].iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Largest pairwise distance.
    pub fn diameter(&self) -> f64 {
        let mut d = 0.0f64;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                d = d.max(self.distance(i, j));
            }
        }
        d
    }
}

impl ActionSpace {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = validate_points(&points, Error::EmptyActionSpace)?;
        Ok(Self { points, dim })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, a: usize) -> &[f64] {
        &self.points[a]
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        euclidean(&self.points[a], &self.points[b])
    }
}

/// Probability weights over state indices. Weights are nonnegative and sum
/// to one within 1e-12 after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    weights: Vec<f64>,
}

impl DiscreteDistribution {
    /// Validates and renormalizes raw weights. Inputs whose sum deviates
    /// from one by 1e-9 or more are rejected, as is any weight below
    /// -1e-12; weights in `[-1e-12, 0)` are clamped to zero.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::SupportMismatch {
                expected: 1,
                got: 0,
            });
        }
        let mut weights = weights;
        for (index, w) in weights.iter_mut().enumerate() {
            if !w.is_finite() || *w < WEIGHT_FLOOR {
                return Err(Error::NegativeWeight { index, value: *w });
            }
            if *w < 0.0 {
                *w = 0.0;
            }
        }
        let sum: f64 = weights.iter().sum();
        if (1.0 - sum).abs() >= SUM_INPUT_TOLERANCE {
            return Err(Error::DistributionSum { sum });
        }
        for w in &mut weights {
            *w /= sum;
        }
        Ok(Self { weights })
    }

    /// Unit mass on a single state.
    pub fn point_mass(index: usize, len: usize) -> Self {
        let mut weights = vec![0.0; len];
        weights[index] = 1.0;
        Self { weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Expectation of a payoff vector under this distribution.
    pub fn expectation(&self, payoff: &[f64]) -> f64 {
        self.weights.iter().zip(payoff).map(|(w, f)| w * f).sum()
    }

    /// Inverse-CDF sample for a uniform draw `u` in `[0,1)`.
    pub fn sample(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.weights.len() - 1
    }
}

/// Total map from (state, action) to a distribution over next states.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    n_states: usize,
    n_actions: usize,
    rows: Vec<DiscreteDistribution>,
}

impl TransitionKernel {
    /// Assembles a kernel from a closure over (state, action) pairs.
    pub fn from_fn(
        n_states: usize,
        n_actions: usize,
        mut f: impl FnMut(usize, usize) -> DiscreteDistribution,
    ) -> Result<Self> {
        let mut rows = Vec::with_capacity(n_states * n_actions);
        for s in 0..n_states {
            for a in 0..n_actions {
                let dist = f(s, a);
                if dist.len() != n_states {
                    return Err(Error::SupportMismatch {
                        expected: n_states,
                        got: dist.len(),
                    });
                }
                rows.push(dist);
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            rows,
        })
    }

    /// Assembles a kernel from a dense `[state][action]` table, rejecting
    /// missing entries.
    pub fn from_table(
        n_states: usize,
        n_actions: usize,
        table: Vec<Vec<DiscreteDistribution>>,
    ) -> Result<Self> {
        if table.len() != n_states {
            return Err(Error::MissingKernelEntry {
                state: table.len().min(n_states.saturating_sub(1)),
                action: 0,
            });
        }
        let mut rows = Vec::with_capacity(n_states * n_actions);
        for (s, per_state) in table.into_iter().enumerate() {
            if per_state.len() != n_actions {
                return Err(Error::MissingKernelEntry {
                    state: s,
                    action: per_state.len().min(n_actions.saturating_sub(1)),
                });
            }
            for dist in per_state {
                if dist.len() != n_states {
                    return Err(Error::SupportMismatch {
                        expected: n_states,
                        got: dist.len(),
                    });
                }
                rows.push(dist);
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            rows,
        })
    }

    /// The same distribution at every (state, action) pair.
    pub fn constant(n_states: usize, n_actions: usize, dist: DiscreteDistribution) -> Result<Self> {
        Self::from_fn(n_states, n_actions, |_, _| dist.clone())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, state: usize, action: usize) -> &DiscreteDistribution {
        &self.rows[state * self.n_actions + action]
    }
}

/// Dense reward table over `X x A x X`, all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl RewardTable {
    pub fn from_fn(
        n_states: usize,
        n_actions: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(n_states * n_actions * n_states);
        for s in 0..n_states {
            for a in 0..n_actions {
                for next in 0..n_states {
                    let value = f(s, a, next);
                    if !value.is_finite() {
                        return Err(Error::NonFiniteReward {
                            state: s,
                            action: a,
                            next,
                            value,
                        });
                    }
                    values.push(value);
                }
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    /// Assembles from a dense `[state][action][next]` nested table.
    pub fn from_table(
        n_states: usize,
        n_actions: usize,
        table: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if table.len() != n_states {
            return Err(Error::WrongCount {
                context: "reward table states",
                expected: n_states,
                got: table.len(),
            });
        }
        let mut values = Vec::with_capacity(n_states * n_actions * n_states);
        for (s, per_state) in table.into_iter().enumerate() {
            if per_state.len() != n_actions {
                return Err(Error::WrongCount {
                    context: "reward table actions",
                    expected: n_actions,
                    got: per_state.len(),
                });
            }
            for (a, per_action) in per_state.into_iter().enumerate() {
                if per_action.len() != n_states {
                    return Err(Error::WrongCount {
                        context: "reward table next states",
                        expected: n_states,
                        got: per_action.len(),
                    });
                }
                for (next, value) in per_action.into_iter().enumerate() {
                    if !value.is_finite() {
                        return Err(Error::NonFiniteReward {
                            state: s,
                            action: a,
                            next,
                            value,
                        });
                    }
                    values.push(value);
                }
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    #[inline]
    pub fn get(&self, state: usize, action: usize, next: usize) -> f64 {
        self.values[(state * self.n_actions + action) * self.n_states + next]
    }

    /// Largest absolute reward; bounds every value function by
    /// `max_abs / (1 - alpha)`.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
}

/// Wasserstein order and ball radius of the ambiguity set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmbiguityConfig {
    pub q: u32,
    pub epsilon: f64,
}

impl AmbiguityConfig {
    pub fn new(q: u32, epsilon: f64) -> Result<Self> {
        if q < 1 {
            return Err(Error::InvalidOrder { q });
        }
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::InvalidRadius { epsilon });
        }
        Ok(Self { q, epsilon })
    }
}

/// A validated robust Markov decision problem instance.
///
/// `center` is the reference kernel the ambiguity ball is drawn around;
/// `true_kernel`, when present, is the kernel the environment actually
/// follows. The ground-cost matrix for the configured order is computed
/// once on first use and shared across all sweeps.
#[derive(Debug)]
pub struct ProblemSpec {
    pub states: StateSpace,
    pub actions: ActionSpace,
    pub center: TransitionKernel,
    pub true_kernel: Option<TransitionKernel>,
    pub reward: RewardTable,
    pub alpha: f64,
    pub ambiguity: AmbiguityConfig,
    cost_cache: OnceLock<CostMatrix>,
}

impl Clone for ProblemSpec {
    fn clone(&self) -> Self {
        Self {
            states: self.states.clone(),
            actions: self.actions.clone(),
            center: self.center.clone(),
            true_kernel: self.true_kernel.clone(),
            reward: self.reward.clone(),
            alpha: self.alpha,
            ambiguity: self.ambiguity,
            cost_cache: OnceLock::new(),
        }
    }
}

impl PartialEq for ProblemSpec {
    fn eq(&self, other: &Self) -> bool {
        self.states == other.states
            && self.actions == other.actions
            && self.center == other.center
            && self.true_kernel == other.true_kernel
            && self.reward == other.reward
            && self.alpha == other.alpha
            && self.ambiguity == other.ambiguity
    }
}

impl ProblemSpec {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    /// Ground costs `||x_i - x_j||^q` for the configured order, built once.
    pub fn cost_matrix(&self) -> &CostMatrix {
        self.cost_cache
            .get_or_init(|| CostMatrix::from_states(&self.states, self.ambiguity.q))
    }
}

fn check_kernel_shape(
    kernel: &TransitionKernel,
    n_states: usize,
    n_actions: usize,
    context: &'static str,
) -> Result<()> {
    if kernel.n_states() != n_states {
        return Err(Error::WrongCount {
            context,
            expected: n_states,
            got: kernel.n_states(),
        });
    }
    if kernel.n_actions() != n_actions {
        return Err(Error::WrongCount {
            context,
            expected: n_actions,
            got: kernel.n_actions(),
        });
    }
    Ok(())
}

/// Validates and assembles a problem instance from its components.
pub fn build_problem(
    states: StateSpace,
    actions: ActionSpace,
    center: TransitionKernel,
    true_kernel: Option<TransitionKernel>,
    reward: RewardTable,
    alpha: f64,
    ambiguity: AmbiguityConfig,
) -> Result<ProblemSpec> {
    if !alpha.is_finite() || alpha <= 0.0 || alpha >= 1.0 {
        return Err(Error::InvalidDiscount { alpha });
    }
    let n = states.len();
    let m = actions.len();
    check_kernel_shape(&center, n, m, "center kernel")?;
    if let Some(k) = &true_kernel {
        check_kernel_shape(k, n, m, "true kernel")?;
    }
    if reward.n_states() != n || reward.n_actions() != m {
        return Err(Error::WrongCount {
            context: "reward table",
            expected: n * m * n,
            got: reward.n_states() * reward.n_actions() * reward.n_states(),
        });
    }
    Ok(ProblemSpec {
        states,
        actions,
        center,
        true_kernel,
        reward,
        alpha,
        ambiguity,
        cost_cache: OnceLock::new(),
    })
}

/// Binomial distribution `Bin(n, p)` on a state space that is exactly the
/// integers `0..=n` on the line.
pub fn binomial_distribution(n: u32, p: f64, states: &StateSpace) -> Result<DiscreteDistribution> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::InvalidProbability { p });
    }
    if states.len() != (n as usize) + 1 || states.dim() != 1 {
        return Err(Error::BadBinomialSupport { n });
    }
    for k in 0..=n {
        if states.point(k as usize) != [f64::from(k)] {
            return Err(Error::BadBinomialSupport { n });
        }
    }
    let mut weights = Vec::with_capacity(n as usize + 1);
    let mut coeff = 1.0f64;
    for k in 0..=n {
        let w = coeff * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
        weights.push(w);
        if k < n {
            coeff = coeff * f64::from(n - k) / f64::from(k + 1);
        }
    }
    DiscreteDistribution::new(weights)
}

/// The ten-coin betting problem: states count heads in `{0,...,10}`,
/// actions bet on the next count being smaller (-1), unchanged (0 means no
/// bet), or larger (+1), and both the reference and the true kernel are
/// `Bin(10, 0.5)` regardless of state and action.
pub fn coin_toss_problem(alpha: f64, ambiguity: AmbiguityConfig) -> Result<ProblemSpec> {
    let states = StateSpace::line(10);
    let actions = ActionSpace::new(vec![vec![-1.0], vec![0.0], vec![1.0]])?;
    let bin = binomial_distribution(10, 0.5, &states)?;
    let center = TransitionKernel::constant(states.len(), actions.len(), bin)?;
    let true_kernel = center.clone();
    let action_values = [-1.0, 0.0, 1.0];
    let reward = RewardTable::from_fn(states.len(), actions.len(), |x, a, next| {
        let a = action_values[a];
        if x < next {
            a
        } else if x > next {
            -a
        } else {
            0.0
        }
    })?;
    build_problem(
        states,
        actions,
        center,
        Some(true_kernel),
        reward,
        alpha,
        ambiguity,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_weights_match_direct_evaluation() {
        let states = StateSpace::line(10);
        let bin = binomial_distribution(10, 0.5, &states).unwrap();
        // C(10,5) / 2^10 and C(10,0) / 2^10, both exact dyadic rationals.
        assert_eq!(bin.weight(5), 252.0 / 1024.0);
        assert_eq!(bin.weight(5), 0.24609375);
        assert_eq!(bin.weight(0), 1.0 / 1024.0);
        let sum: f64 = bin.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn binomial_degenerate_p_zero_is_point_mass() {
        let states = StateSpace::line(10);
        let bin = binomial_distribution(10, 0.0, &states).unwrap();
        assert_eq!(bin.weight(0), 1.0);
        assert!(bin.weights()[1..].iter().all(|&w| w == 0.0));
    }

    #[test]
    fn binomial_rejects_wrong_support() {
        let states = StateSpace::new(vec![vec![0.0], vec![2.0]]).unwrap();
        assert!(matches!(
            binomial_distribution(1, 0.5, &states),
            Err(Error::BadBinomialSupport { n: 1 })
        ));
    }

    #[test]
    fn coin_toss_rewards_follow_indicator_formula() {
        let ambiguity = AmbiguityConfig::new(1, 0.1).unwrap();
        let problem = coin_toss_problem(0.45, ambiguity).unwrap();
        // action index 2 is the +1 bet, index 1 no bet, index 0 the -1 bet
        assert_eq!(problem.reward.get(3, 2, 7), 1.0);
        assert_eq!(problem.reward.get(3, 1, 7), 0.0);
        assert_eq!(problem.reward.get(7, 2, 3), -1.0);
    }

    #[test]
    fn coin_toss_reward_is_antisymmetric_in_the_action() {
        let ambiguity = AmbiguityConfig::new(1, 0.1).unwrap();
        let problem = coin_toss_problem(0.45, ambiguity).unwrap();
        // actions are ordered -1, 0, +1, so negation maps index a to 2-a
        for x in 0..11 {
            for a in 0..3 {
                for next in 0..11 {
                    assert_eq!(
                        problem.reward.get(x, a, next),
                        -problem.reward.get(x, 2 - a, next)
                    );
                }
            }
        }
    }

    #[test]
    fn coin_toss_center_kernel_is_constant() {
        let ambiguity = AmbiguityConfig::new(1, 0.1).unwrap();
        let problem = coin_toss_problem(0.45, ambiguity).unwrap();
        let first = problem.center.get(0, 0);
        for x in 0..11 {
            for a in 0..3 {
                assert_eq!(problem.center.get(x, a), first);
            }
        }
        assert_eq!(problem.true_kernel.as_ref().unwrap(), &problem.center);
    }

    #[test]
    fn build_rejects_boundary_discount() {
        let ambiguity = AmbiguityConfig::new(1, 0.1).unwrap();
        assert!(matches!(
            coin_toss_problem(1.0, ambiguity),
            Err(Error::InvalidDiscount { .. })
        ));
        assert!(matches!(
            coin_toss_problem(0.0, ambiguity),
            Err(Error::InvalidDiscount { .. })
        ));
    }

    #[test]
    fn kernel_table_with_missing_entry_is_rejected() {
        let uniform = DiscreteDistribution::new(vec![0.5, 0.5]).unwrap();
        // state 0 has entries for one action only
        let table = vec![vec![uniform.clone()], vec![uniform.clone(), uniform]];
        assert!(matches!(
            TransitionKernel::from_table(2, 2, table),
            Err(Error::MissingKernelEntry {
                state: 0,
                action: 1
            })
        ));
    }

    #[test]
    fn distribution_construction_enforces_the_contract() {
        assert!(matches!(
            DiscreteDistribution::new(vec![0.5, 0.4]),
            Err(Error::DistributionSum { .. })
        ));
        assert!(matches!(
            DiscreteDistribution::new(vec![1.1, -0.1]),
            Err(Error::NegativeWeight { .. })
        ));
        // a tiny negative is clamped, and near-unit sums renormalize
        let d = DiscreteDistribution::new(vec![1.0 + 2e-10, -0.5e-12]).unwrap();
        assert_eq!(d.weight(1), 0.0);
        let sum: f64 = d.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_points_are_rejected() {
        assert!(matches!(
            StateSpace::new(vec![vec![1.0, 2.0], vec![1.0, 2.0]]),
            Err(Error::DuplicatePoint { i: 0, j: 1 })
        ));
    }

    #[test]
    fn sampling_inverts_the_cdf() {
        let d = DiscreteDistribution::new(vec![0.25, 0.5, 0.25]).unwrap();
        assert_eq!(d.sample(0.0), 0);
        assert_eq!(d.sample(0.249), 0);
        assert_eq!(d.sample(0.25), 1);
        assert_eq!(d.sample(0.7499), 1);
        assert_eq!(d.sample(0.75), 2);
        assert_eq!(d.sample(0.9999999), 2);
    }
}
