//! Exact solution of the truncated scheduling MDP.
//!
//! AoI is truncated at `τ_max` with an absorbing cap: a sensor already at the
//! cap stays there on failure. Value iteration exploits the factorization
//! `Pr(s⁺|s,a) = Pr(τ⁺|τ,H,a)·Pr(H⁺)`: each sweep first averages the value
//! over the next channel matrix, after which every (state, action) backup only
//! visits the `≤ 2^M` AoI branches.

mod actions;
mod evaluate;
mod export;
mod solver;
mod space;

pub use actions::{action_count, enumerate_actions, ActionSet, MAX_ACTIONS};
pub use evaluate::{evaluate_policy, evaluate_policy_with, Divergence, EvalResult, TabularPolicy, DIVERGED_AOI, DIVERGED_MSE};
pub use export::{meta_path, read_solution_csv, write_solution_csv, SolutionMeta, SolvedArtifact};
pub use solver::{
    greedy_policy, q_from_value, solve, Solution, transition_distribution, value_iteration, Mdp, Policy, QTable, SolverOptions,
    ValueTable,
};
pub use space::{StateSpace, MAX_STATES};
