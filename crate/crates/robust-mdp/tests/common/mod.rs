//! Shared test support: a naive two-phase simplex used as an independent
//! oracle for the transport solvers, and seeded random instance
//! generators.
//!
//! The simplex here is deliberately written from the textbook (dense
//! tableau, Bland's rule) and shares no code with the solvers it checks.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use robust_mdp::mdp::{
    build_problem, ActionSpace, AmbiguityConfig, DiscreteDistribution, ProblemSpec, RewardTable,
    StateSpace, TransitionKernel,
};
use robust_mdp::transport::CostMatrix;

const PIVOT_EPS: f64 = 1e-9;

/// Minimize `objective . x` subject to `rows x = rhs`, `x >= 0`.
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

/// Bland-rule simplex over the given columns. Returns false on
/// unboundedness (never expected on transport polytopes).
fn simplex_core(
    tableau: &mut [Vec<f64>],
    rhs: &mut [f64],
    basis: &mut [usize],
    cost: &[f64],
    allowed_cols: usize,
) -> bool {
    let m = tableau.len();
    for _ in 0..20_000 {
        // reduced costs r_j = c_j - c_B . T[., j]
        let mut entering = None;
        for j in 0..allowed_cols {
            let mut r = cost[j];
            for i in 0..m {
                r -= cost[basis[i]] * tableau[i][j];
            }
            if r < -PIVOT_EPS {
                entering = Some(j);
                break; // Bland: smallest eligible index
            }
        }
        let Some(enter) = entering else {
            return true;
        };
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..m {
            if tableau[i][enter] > PIVOT_EPS {
                let ratio = rhs[i] / tableau[i][enter];
                match leave {
                    None => {
                        best_ratio = ratio;
                        leave = Some(i);
                    }
                    Some(l) => {
                        if ratio < best_ratio - PIVOT_EPS {
                            best_ratio = ratio;
                            leave = Some(i);
                        } else if ratio < best_ratio + PIVOT_EPS && basis[i] < basis[l] {
                            // Bland tie-break: smallest basic variable leaves
                            best_ratio = best_ratio.min(ratio);
                            leave = Some(i);
                        }
                    }
                }
            }
        }
        let Some(leave) = leave else {
            return false;
        };
        pivot(tableau, rhs, basis, leave, enter);
    }
    panic!("simplex oracle exceeded its iteration budget");
}

fn pivot(tableau: &mut [Vec<f64>], rhs: &mut [f64], basis: &mut [usize], row: usize, col: usize) {
    let scale = tableau[row][col];
    for v in tableau[row].iter_mut() {
        *v /= scale;
    }
    rhs[row] /= scale;
    for i in 0..tableau.len() {
        if i == row {
            continue;
        }
        let factor = tableau[i][col];
        if factor != 0.0 {
            for j in 0..tableau[i].len() {
                let delta = factor * tableau[row][j];
                tableau[i][j] -= delta;
            }
            rhs[i] -= factor * rhs[row];
        }
    }
    basis[row] = col;
}

/// Two-phase simplex. Returns the optimal objective and a solution
/// vector, or None when the program is infeasible.
pub fn solve_lp(lp: &LinearProgram) -> Option<(f64, Vec<f64>)> {
    let m = lp.rows.len();
    let n = lp.objective.len();
    let total = n + m;

    // phase-1 tableau [A | I] with nonnegative rhs
    let mut tableau: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    for i in 0..m {
        let mut row: Vec<f64> = lp.rows[i].clone();
        row.resize(total, 0.0);
        let mut b = lp.rhs[i];
        if b < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
            b = -b;
        }
        row[n + i] = 1.0;
        tableau.push(row);
        rhs.push(b);
    }
    let mut basis: Vec<usize> = (n..total).collect();
    let mut phase1_cost = vec![0.0; total];
    for c in phase1_cost.iter_mut().skip(n) {
        *c = 1.0;
    }
    if !simplex_core(&mut tableau, &mut rhs, &mut basis, &phase1_cost, total) {
        return None;
    }
    let infeasibility: f64 = basis
        .iter()
        .enumerate()
        .filter(|(_, &b)| b >= n)
        .map(|(i, _)| rhs[i])
        .sum();
    if infeasibility > 1e-7 {
        return None;
    }

    // drive basic artificials out; rows that cannot pivot are redundant
    let mut row = 0;
    while row < tableau.len() {
        if basis[row] >= n {
            let col = (0..n).find(|&j| tableau[row][j].abs() > 1e-7);
            match col {
                Some(col) => pivot(&mut tableau, &mut rhs, &mut basis, row, col),
                None => {
                    tableau.remove(row);
                    rhs.remove(row);
                    basis.remove(row);
                    continue;
                }
            }
        }
        row += 1;
    }

    if !simplex_core(&mut tableau, &mut rhs, &mut basis, &lp.objective, n) {
        return None;
    }
    let mut x = vec![0.0; n];
    for (i, &b) in basis.iter().enumerate() {
        x[b] = rhs[i];
    }
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>();
    Some((objective, x))
}

/// Optimal transport cost between two marginals by the oracle LP over the
/// full coupling polytope.
pub fn transport_cost_lp(p: &[f64], q: &[f64], cost: &CostMatrix) -> f64 {
    let n = p.len();
    let vars = n * n;
    let mut objective = vec![0.0; vars];
    for i in 0..n {
        for j in 0..n {
            objective[i * n + j] = cost.get(i, j);
        }
    }
    let mut rows = Vec::with_capacity(2 * n);
    let mut rhs = Vec::with_capacity(2 * n);
    for i in 0..n {
        let mut row = vec![0.0; vars];
        for j in 0..n {
            row[i * n + j] = 1.0;
        }
        rows.push(row);
        rhs.push(p[i]);
    }
    for j in 0..n {
        let mut row = vec![0.0; vars];
        for i in 0..n {
            row[i * n + j] = 1.0;
        }
        rows.push(row);
        rhs.push(q[j]);
    }
    let lp = LinearProgram {
        objective,
        rows,
        rhs,
    };
    solve_lp(&lp).expect("transport polytope is nonempty").0
}

/// Worst-case expectation by the oracle LP over the budgeted coupling
/// polytope: rows fixed to the reference marginal, one transport-cost
/// budget row with a slack variable.
pub fn budgeted_worst_case_lp(
    payoff: &[f64],
    reference: &[f64],
    budget: f64,
    cost: &CostMatrix,
) -> f64 {
    let n = reference.len();
    let vars = n * n + 1; // plan entries plus budget slack
    let mut objective = vec![0.0; vars];
    for i in 0..n {
        for j in 0..n {
            objective[i * n + j] = payoff[j];
        }
    }
    let mut rows = Vec::with_capacity(n + 1);
    let mut rhs = Vec::with_capacity(n + 1);
    for i in 0..n {
        let mut row = vec![0.0; vars];
        for j in 0..n {
            row[i * n + j] = 1.0;
        }
        rows.push(row);
        rhs.push(reference[i]);
    }
    let mut budget_row = vec![0.0; vars];
    for i in 0..n {
        for j in 0..n {
            budget_row[i * n + j] = cost.get(i, j);
        }
    }
    budget_row[n * n] = 1.0;
    rows.push(budget_row);
    rhs.push(budget);
    let lp = LinearProgram {
        objective,
        rows,
        rhs,
    };
    solve_lp(&lp).expect("budgeted polytope is nonempty").0
}

/// Distinct random points in `[-5, 5]^dim`.
pub fn random_states(rng: &mut ChaCha12Rng, n: usize, dim: usize) -> StateSpace {
    loop {
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect())
            .collect();
        let mut ok = true;
        'outer: for i in 0..n {
            for j in (i + 1)..n {
                let d: f64 = points[i]
                    .iter()
                    .zip(&points[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if d < 1e-3 {
                    ok = false;
                    break 'outer;
                }
            }
        }
        if ok {
            return StateSpace::new(points).expect("distinct by construction");
        }
    }
}

/// Random distribution over `n` states; roughly a third of the weights
/// are zeroed to exercise sparse supports.
pub fn random_distribution(rng: &mut ChaCha12Rng, n: usize) -> DiscreteDistribution {
    loop {
        let mut weights: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen::<f64>() < 0.3 {
                    0.0
                } else {
                    rng.gen::<f64>()
                }
            })
            .collect();
        let sum: f64 = weights.iter().sum();
        if sum < 1e-6 {
            continue;
        }
        for w in &mut weights {
            *w /= sum;
        }
        return DiscreteDistribution::new(weights).expect("normalized by construction");
    }
}

/// Random payoff vector with entries in `[-scale, scale]`.
pub fn random_payoff(rng: &mut ChaCha12Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// A random problem instance. The true kernel equals the center when
/// `perturbation` is zero, otherwise each center weight is jittered by a
/// relative factor of up to `perturbation` and renormalized.
pub fn random_problem(rng: &mut ChaCha12Rng, perturbation: f64) -> ProblemSpec {
    let n = rng.gen_range(2..=8);
    let m = rng.gen_range(1..=3);
    let dim = if rng.gen::<bool>() { 1 } else { 2 };
    let states = random_states(rng, n, dim);
    let actions_pts: Vec<Vec<f64>> = {
        loop {
            let pts: Vec<Vec<f64>> = (0..m).map(|_| vec![rng.gen_range(-2.0..2.0)]).collect();
            let mut ok = true;
            for i in 0..m {
                for j in (i + 1)..m {
                    if (pts[i][0] - pts[j][0]).abs() < 1e-3 {
                        ok = false;
                    }
                }
            }
            if ok {
                break pts;
            }
        }
    };
    let actions = ActionSpace::new(actions_pts).unwrap();
    let center = TransitionKernel::from_fn(n, m, |_, _| random_distribution(rng, n)).unwrap();
    let true_kernel = if perturbation == 0.0 {
        center.clone()
    } else {
        TransitionKernel::from_fn(n, m, |x, a| {
            let base = center.get(x, a).weights().to_vec();
            let mut weights: Vec<f64> = base
                .iter()
                .map(|w| w * (1.0 + perturbation * rng.gen_range(-1.0..1.0)))
                .collect();
            let sum: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= sum;
            }
            DiscreteDistribution::new(weights).unwrap()
        })
        .unwrap()
    };
    let reward = RewardTable::from_fn(n, m, |_, _, _| rng.gen_range(-2.0..2.0)).unwrap();
    let alpha = rng.gen_range(0.2..0.8);
    let q = if rng.gen::<bool>() { 1 } else { 2 };
    let epsilon = rng.gen_range(0.0..2.0);
    build_problem(
        states,
        actions,
        center,
        Some(true_kernel),
        reward,
        alpha,
        AmbiguityConfig::new(q, epsilon).unwrap(),
    )
    .unwrap()
}
