//! Exact tabular MDP model: transitions, rewards, deterministic policies,
//! discounted occupancy measures, the Bellman optimality operator and
//! expected returns.
//!
//! Occupancies are obtained by a dense direct solve of
//!
//!   nu = (1 - gamma) d0 + gamma P_pi^T nu
//!
//! which is always nonsingular for `gamma < 1`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::table::{QFunction, Table};

/// Default cap on `|S| * |A|`; overridable through `BRL_MAX_STATE_ACTIONS`.
pub const DEFAULT_MAX_STATE_ACTIONS: usize = 10_000;

const ROW_SUM_TOL: f64 = 1e-12;
const OCCUPANCY_RESIDUAL_TOL: f64 = 1e-8;

pub fn max_state_actions() -> usize {
    std::env::var("BRL_MAX_STATE_ACTIONS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_MAX_STATE_ACTIONS)
}

/// Full tabular model `(S, A, P, R, gamma, d0)` together with the reward bound `r_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpFile", into = "MdpFile")]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    r_max: f64,
    /// `P[s][a][s']` flattened as `(s * A + a) * S + s'`.
    transition: Vec<f64>,
    reward: Table,
    init_dist: Vec<f64>,
}

/// On-disk JSON layout of an MDP.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MdpFile {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    r_max: f64,
    transition: Vec<Vec<Vec<f64>>>,
    reward: Vec<Vec<f64>>,
    init_dist: Vec<f64>,
}

impl TryFrom<MdpFile> for TabularMdp {
    type Error = Error;

    fn try_from(f: MdpFile) -> Result<Self> {
        let (s_n, a_n) = (f.num_states, f.num_actions);
        if f.transition.len() != s_n || f.transition.iter().any(|r| r.len() != a_n) {
            return Err(Error::Shape {
                expected: format!("transition of shape {s_n}x{a_n}x{s_n}"),
                actual: "mismatched outer dimensions".into(),
            });
        }
        let mut transition = Vec::with_capacity(s_n * a_n * s_n);
        for row in f.transition.iter().flatten() {
            if row.len() != s_n {
                return Err(Error::Shape {
                    expected: format!("next-state rows of length {s_n}"),
                    actual: format!("length {}", row.len()),
                });
            }
            transition.extend_from_slice(row);
        }
        let reward = Table::try_from(f.reward)?;
        TabularMdp::new(s_n, a_n, transition, reward, f.gamma, f.r_max, f.init_dist)
    }
}

impl From<TabularMdp> for MdpFile {
    fn from(m: TabularMdp) -> Self {
        let s_n = m.num_states;
        let transition = (0..s_n)
            .map(|s| {
                (0..m.num_actions)
                    .map(|a| m.next_dist(s, a).to_vec())
                    .collect()
            })
            .collect();
        MdpFile {
            num_states: s_n,
            num_actions: m.num_actions,
            gamma: m.gamma,
            r_max: m.r_max,
            transition,
            reward: m.reward.into(),
            init_dist: m.init_dist,
        }
    }
}

impl TabularMdp {
    /// Validates and builds a model. `transition` is flat, indexed `(s * A + a) * S + s'`.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        reward: Table,
        gamma: f64,
        r_max: f64,
        init_dist: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidModel(
                "state and action counts must be positive".into(),
            ));
        }
        let cap = max_state_actions();
        if num_states * num_actions > cap {
            return Err(Error::TooLarge {
                size: num_states * num_actions,
                cap,
            });
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidModel(format!("gamma {gamma} not in [0, 1)")));
        }
        if !(r_max.is_finite() && r_max >= 0.0) {
            return Err(Error::InvalidModel(format!("r_max {r_max} must be finite and >= 0")));
        }
        if transition.len() != num_states * num_actions * num_states {
            return Err(Error::Shape {
                expected: format!("{} transition entries", num_states * num_actions * num_states),
                actual: format!("{}", transition.len()),
            });
        }
        reward.check_shape(num_states, num_actions)?;
        if init_dist.len() != num_states {
            return Err(Error::Shape {
                expected: format!("init_dist of length {num_states}"),
                actual: format!("{}", init_dist.len()),
            });
        }
        for (row_idx, row) in transition.chunks(num_states).enumerate() {
            let (s, a) = (row_idx / num_actions, row_idx % num_actions);
            if row.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
                return Err(Error::InvalidModel(format!(
                    "P[{s}][{a}] has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidModel(format!("P[{s}][{a}] sums to {sum}")));
            }
        }
        for s in 0..num_states {
            for a in 0..num_actions {
                let r = reward.get(s, a);
                if !(0.0..=r_max).contains(&r) {
                    return Err(Error::InvalidModel(format!(
                        "R[{s}][{a}] = {r} outside [0, {r_max}]"
                    )));
                }
            }
        }
        if init_dist.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::InvalidModel("init_dist has a negative entry".into()));
        }
        let d0_sum: f64 = init_dist.iter().sum();
        if (d0_sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidModel(format!("init_dist sums to {d0_sum}")));
        }
        Ok(Self {
            num_states,
            num_actions,
            gamma,
            r_max,
            transition,
            reward,
            init_dist,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// `R_max / (1 - gamma)`.
    pub fn v_max(&self) -> f64 {
        self.r_max / (1.0 - self.gamma)
    }

    pub fn reward(&self) -> &Table {
        &self.reward
    }

    pub fn init_dist(&self) -> &[f64] {
        &self.init_dist
    }

    /// `P(. | s, a)`.
    pub fn next_dist(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    /// Transition matrix with one row per `(s, a)` pair (state-major).
    pub fn transition_matrix(&self) -> Matrix {
        Matrix::from_vec(
            self.num_states * self.num_actions,
            self.num_states,
            self.transition.clone(),
        )
        .expect("validated shape")
    }

    /// Returns a copy with a different reward table.
    pub fn with_reward(&self, reward: Table, r_max: f64) -> Result<Self> {
        Self::new(
            self.num_states,
            self.num_actions,
            self.transition.clone(),
            reward,
            self.gamma,
            r_max,
            self.init_dist.clone(),
        )
    }

    /// `E_{s' ~ P(.|s,a)}[v(s')]` for every pair.
    pub fn expected_next(&self, v: &[f64]) -> Table {
        debug_assert_eq!(v.len(), self.num_states);
        Table::from_fn(self.num_states, self.num_actions, |s, a| {
            linalg::dot(self.next_dist(s, a), v)
        })
    }

    fn check_q(&self, q: &Table) -> Result<()> {
        q.check_shape(self.num_states, self.num_actions)
    }

    fn check_policy(&self, policy: &DeterministicPolicy) -> Result<()> {
        if policy.actions.len() != self.num_states {
            return Err(Error::Shape {
                expected: format!("policy over {} states", self.num_states),
                actual: format!("{}", policy.actions.len()),
            });
        }
        if let Some(&a) = policy.actions.iter().find(|&&a| a >= self.num_actions) {
            return Err(Error::InvalidArgument(format!(
                "policy action {a} out of range for {} actions",
                self.num_actions
            )));
        }
        Ok(())
    }
}

/// Deterministic stationary policy: one action index per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeterministicPolicy {
    actions: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn new(actions: Vec<usize>, num_actions: usize) -> Result<Self> {
        if let Some(&a) = actions.iter().find(|&&a| a >= num_actions) {
            return Err(Error::InvalidArgument(format!(
                "action {a} out of range for {num_actions} actions"
            )));
        }
        Ok(Self { actions })
    }

    pub fn constant(num_states: usize, action: usize) -> Self {
        Self {
            actions: vec![action; num_states],
        }
    }

    pub fn action(&self, s: usize) -> usize {
        self.actions[s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn num_states(&self) -> usize {
        self.actions.len()
    }

    /// `Q(s, pi(s))` for every state.
    pub fn evaluate(&self, q: &Table) -> Vec<f64> {
        self.actions
            .iter()
            .enumerate()
            .map(|(s, &a)| q.get(s, a))
            .collect()
    }

    /// Lifts a state distribution to a state-action table `nu(s) * 1(a = pi(s))`.
    pub fn lift(&self, state_values: &[f64], num_actions: usize) -> Table {
        let mut t = Table::zeros(self.actions.len(), num_actions);
        for (s, &a) in self.actions.iter().enumerate() {
            t.set(s, a, state_values[s]);
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccupancyKind {
    StateAction,
    StateOnly,
}

/// Probability table over `(s, a)` pairs, or over states (stored `S x 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMeasure {
    pub dist: Table,
    pub kind: OccupancyKind,
}

impl OccupancyMeasure {
    pub fn total_mass(&self) -> f64 {
        self.dist.sum()
    }

    /// State marginal `sum_a d(s, a)`.
    pub fn state_marginal(&self) -> Vec<f64> {
        (0..self.dist.num_states())
            .map(|s| self.dist.row(s).iter().sum())
            .collect()
    }

    /// `E_d[f]` for a state-action function.
    pub fn expectation(&self, f: &Table) -> f64 {
        self.dist.inner(f)
    }
}

/// `P_pi[s][s'] = P(s' | s, pi(s))`.
pub fn policy_transition(mdp: &TabularMdp, policy: &DeterministicPolicy) -> Matrix {
    let n = mdp.num_states();
    let mut m = Matrix::zeros(n, n);
    for s in 0..n {
        m.row_mut(s)
            .copy_from_slice(mdp.next_dist(s, policy.action(s)));
    }
    m
}

/// Normalized discounted state occupancy `nu_pi`, by direct solve.
pub fn state_occupancy(mdp: &TabularMdp, policy: &DeterministicPolicy) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    let n = mdp.num_states();
    let gamma = mdp.gamma();
    let p_pi = policy_transition(mdp, policy);
    // (I - gamma P_pi^T) nu = (1 - gamma) d0
    let mut a = Matrix::identity(n);
    for s in 0..n {
        for s2 in 0..n {
            a[(s2, s)] -= gamma * p_pi[(s, s2)];
        }
    }
    let b: Vec<f64> = mdp.init_dist().iter().map(|d| (1.0 - gamma) * d).collect();
    let nu = linalg::solve(&a, &b)?;
    let resid = linalg::residual_inf(&a, &nu, &b);
    if resid > OCCUPANCY_RESIDUAL_TOL {
        return Err(Error::Numerical(format!(
            "occupancy solve residual {resid:e} exceeds {OCCUPANCY_RESIDUAL_TOL:e}"
        )));
    }
    Ok(nu)
}

/// State-action occupancy `d_pi(s, a) = nu_pi(s) * 1(a = pi(s))`.
pub fn compute_occupancy(mdp: &TabularMdp, policy: &DeterministicPolicy) -> Result<OccupancyMeasure> {
    let nu = state_occupancy(mdp, policy)?;
    Ok(OccupancyMeasure {
        dist: policy.lift(&nu, mdp.num_actions()),
        kind: OccupancyKind::StateAction,
    })
}

/// Same as [`state_occupancy`] but wrapped as a `StateOnly` measure.
pub fn compute_state_occupancy(
    mdp: &TabularMdp,
    policy: &DeterministicPolicy,
) -> Result<OccupancyMeasure> {
    let nu = state_occupancy(mdp, policy)?;
    Ok(OccupancyMeasure {
        dist: Table::from_vec(nu.len(), 1, nu)?,
        kind: OccupancyKind::StateOnly,
    })
}

/// Exact (undiscounted) marginal of `(s_t, a_t)` under `policy`.
pub fn compute_step_marginal(
    mdp: &TabularMdp,
    policy: &DeterministicPolicy,
    t: usize,
) -> Result<OccupancyMeasure> {
    mdp.check_policy(policy)?;
    let n = mdp.num_states();
    let mut nu = mdp.init_dist().to_vec();
    for _ in 0..t {
        let mut next = vec![0.0; n];
        for (s, &mass) in nu.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for (acc, p) in next.iter_mut().zip(mdp.next_dist(s, policy.action(s))) {
                *acc += mass * p;
            }
        }
        nu = next;
    }
    Ok(OccupancyMeasure {
        dist: policy.lift(&nu, mdp.num_actions()),
        kind: OccupancyKind::StateAction,
    })
}

/// `(TQ)(s,a) = R(s,a) + gamma * E_{s'}[max_a' q(s', a')]`.
pub fn bellman_optimality(mdp: &TabularMdp, q: &Table) -> QFunction {
    debug_assert!(mdp.check_q(q).is_ok());
    let v = q.max_per_state();
    let next = mdp.expected_next(&v);
    QFunction(mdp.reward().zip_map(&next, |r, ev| r + mdp.gamma() * ev))
}

/// `(T^pi Q)(s,a) = R(s,a) + gamma * E_{s'}[q(s', pi(s'))]`.
pub fn policy_bellman(mdp: &TabularMdp, policy: &DeterministicPolicy, q: &Table) -> QFunction {
    let v = policy.evaluate(q);
    let next = mdp.expected_next(&v);
    QFunction(mdp.reward().zip_map(&next, |r, ev| r + mdp.gamma() * ev))
}

/// Per-state argmax; ties go to the lowest action index.
pub fn greedy_policy(q: &Table) -> DeterministicPolicy {
    let actions = (0..q.num_states())
        .map(|s| {
            let row = q.row(s);
            let mut best = 0;
            for (a, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect();
    DeterministicPolicy { actions }
}

/// `J(pi) = E_{d_pi}[R] / (1 - gamma)`.
pub fn expected_return(mdp: &TabularMdp, policy: &DeterministicPolicy) -> Result<f64> {
    let d = compute_occupancy(mdp, policy)?;
    Ok(d.expectation(mdp.reward()) / (1.0 - mdp.gamma()))
}

/// `V^pi` by solving `(I - gamma P_pi) V = R_pi`.
pub fn policy_value(mdp: &TabularMdp, policy: &DeterministicPolicy) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    let n = mdp.num_states();
    let p_pi = policy_transition(mdp, policy);
    let mut a = Matrix::identity(n);
    for s in 0..n {
        for s2 in 0..n {
            a[(s, s2)] -= mdp.gamma() * p_pi[(s, s2)];
        }
    }
    let r_pi = policy.evaluate(mdp.reward());
    linalg::solve(&a, &r_pi)
}

/// `Q^pi = R + gamma P V^pi`.
pub fn policy_q(mdp: &TabularMdp, policy: &DeterministicPolicy) -> Result<QFunction> {
    let v = policy_value(mdp, policy)?;
    let next = mdp.expected_next(&v);
    Ok(QFunction(
        mdp.reward().zip_map(&next, |r, ev| r + mdp.gamma() * ev),
    ))
}

/// Value iteration from zero until successive iterates differ by at most `tol` in max-norm.
pub fn value_iteration(mdp: &TabularMdp, tol: f64, max_iters: usize) -> QFunction {
    let mut q = QFunction(Table::zeros(mdp.num_states(), mdp.num_actions()));
    for _ in 0..max_iters {
        let next = bellman_optimality(mdp, &q);
        let delta = next
            .as_slice()
            .iter()
            .zip(q.as_slice())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        q = next;
        if delta <= tol {
            break;
        }
    }
    q
}

/// `Q*`, computed by policy evaluation of the value-iteration greedy policy
/// followed by policy-iteration polishing, so the result is a fixed point to
/// solver precision.
pub fn optimal_q(mdp: &TabularMdp) -> Result<QFunction> {
    let mut policy = greedy_policy(&value_iteration(mdp, 1e-10, 100_000));
    for _ in 0..100 {
        let q = policy_q(mdp, &policy)?;
        let improved = greedy_policy(&q);
        // only switch on strict improvement to avoid cycling among ties
        let strictly_better = (0..mdp.num_states()).any(|s| {
            q.get(s, improved.action(s)) > q.get(s, policy.action(s)) + 1e-12
        });
        if !strictly_better {
            return Ok(q);
        }
        policy = improved;
    }
    Err(Error::Numerical("policy iteration did not stabilize".into()))
}

/// Left side minus right side of the evaluation-error identity
///
///   E_{d0}[Q(s, pi)] - J(pi) = E_{d_pi}[Q(s,a) - r - gamma Q(s', pi)] / (1 - gamma).
pub fn telescoping_residual(
    mdp: &TabularMdp,
    policy: &DeterministicPolicy,
    q: &Table,
) -> Result<f64> {
    mdp.check_q(q)?;
    let gamma = mdp.gamma();
    let d = compute_occupancy(mdp, policy)?;
    let j = d.expectation(mdp.reward()) / (1.0 - gamma);
    let start_value = linalg::dot(mdp.init_dist(), &policy.evaluate(q));
    let lhs = start_value - j;
    let backup = policy_bellman(mdp, policy, q);
    // Q - r - gamma E[Q(s', pi)] = Q - T^pi Q
    let rhs = d.expectation(&q.zip_map(&backup, |a, b| a - b)) / (1.0 - gamma);
    Ok(lhs - rhs)
}

/// `sum_{s,a} weights(s,a) * (q - Tq)(s,a)^2` for an arbitrary nonnegative weighting.
pub fn weighted_bellman_error_sq(mdp: &TabularMdp, weights: &Table, q: &Table) -> f64 {
    let tq = bellman_optimality(mdp, q);
    weights.inner(&q.zip_map(&tq, |a, b| (a - b).powi(2)))
}
