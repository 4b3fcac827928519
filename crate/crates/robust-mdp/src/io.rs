//! Problem-file ingestion and emission.
//!
//! A problem is a single JSON document: `states` and `actions` as arrays
//! of coordinate arrays, `alpha`, `ambiguity` with `q` and `epsilon`,
//! `center` (and optionally `true_kernel`) as dense `[state][action]`
//! weight arrays, and `reward` as a dense `[state][action][next_state]`
//! array.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{
    build_problem, ActionSpace, AmbiguityConfig, DiscreteDistribution, ProblemSpec, RewardTable,
    StateSpace, TransitionKernel,
};

#[derive(Debug, Serialize, Deserialize)]
struct AmbiguitySection {
    q: u32,
    epsilon: f64,
}

/// On-disk schema of a problem instance.
#[derive(Debug, Serialize, Deserialize)]
pub struct ProblemFile {
    states: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    alpha: f64,
    ambiguity: AmbiguitySection,
    center: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    true_kernel: Option<Vec<Vec<Vec<f64>>>>,
    reward: Vec<Vec<Vec<f64>>>,
}

fn kernel_from_weights(
    table: Vec<Vec<Vec<f64>>>,
    n_states: usize,
    n_actions: usize,
) -> Result<TransitionKernel> {
    let mut rows = Vec::with_capacity(n_states);
    for per_state in table {
        let mut per_state_dists = Vec::with_capacity(n_actions);
        for weights in per_state {
            per_state_dists.push(DiscreteDistribution::new(weights)?);
        }
        rows.push(per_state_dists);
    }
    TransitionKernel::from_table(n_states, n_actions, rows)
}

fn kernel_to_weights(kernel: &TransitionKernel) -> Vec<Vec<Vec<f64>>> {
    (0..kernel.n_states())
        .map(|x| {
            (0..kernel.n_actions())
                .map(|a| kernel.get(x, a).weights().to_vec())
                .collect()
        })
        .collect()
}

impl ProblemFile {
    pub fn from_spec(problem: &ProblemSpec) -> Self {
        let n = problem.n_states();
        let m = problem.n_actions();
        Self {
            states: (0..n).map(|i| problem.states.point(i).to_vec()).collect(),
            actions: (0..m).map(|a| problem.actions.point(a).to_vec()).collect(),
            alpha: problem.alpha,
            ambiguity: AmbiguitySection {
                q: problem.ambiguity.q,
                epsilon: problem.ambiguity.epsilon,
            },
            center: kernel_to_weights(&problem.center),
            true_kernel: problem.true_kernel.as_ref().map(kernel_to_weights),
            reward: (0..n)
                .map(|x| {
                    (0..m)
                        .map(|a| (0..n).map(|next| problem.reward.get(x, a, next)).collect())
                        .collect()
                })
                .collect(),
        }
    }

    pub fn into_spec(self) -> Result<ProblemSpec> {
        let states = StateSpace::new(self.states)?;
        let actions = ActionSpace::new(self.actions)?;
        let n = states.len();
        let m = actions.len();
        let center = kernel_from_weights(self.center, n, m)?;
        let true_kernel = self
            .true_kernel
            .map(|table| kernel_from_weights(table, n, m))
            .transpose()?;
        let reward = RewardTable::from_table(n, m, self.reward)?;
        let ambiguity = AmbiguityConfig::new(self.ambiguity.q, self.ambiguity.epsilon)?;
        build_problem(
            states,
            actions,
            center,
            true_kernel,
            reward,
            self.alpha,
            ambiguity,
        )
    }
}

/// Reads and validates a problem file.
pub fn load_problem(path: &Path) -> Result<ProblemSpec> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: ProblemFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    file.into_spec()
}

/// Writes a problem instance as pretty-printed JSON.
pub fn save_problem(problem: &ProblemSpec, path: &Path) -> Result<()> {
    let file = ProblemFile::from_spec(problem);
    let mut text = serde_json::to_string_pretty(&file).expect("problem files serialize");
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
