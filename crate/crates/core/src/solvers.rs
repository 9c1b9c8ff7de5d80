//! Batch algorithms over finite classes: fitted Q-iteration, the minimax
//! squared-Bellman objective (MSBO), the minimax average-Bellman objective
//! (MABO), and the certainty-equivalence reference solver.
//!
//! Every argmin/argmax is an exhaustive enumeration that keeps the lowest
//! index on ties. Objective matrices are filled in parallel and reduced
//! sequentially, so results do not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classes::{QClass, WClass};
use crate::data::{
    bellman_functional, population_sq_loss_parts, sq_loss_against, td_errors, td_targets,
    weighted_mean_td, BatchDataset, DataDistribution,
};
use crate::error::{Error, Result};
use crate::mdp::{optimal_q, TabularMdp};
use crate::table::{QFunction, Table};

/// Where the losses come from: a batch of samples, or the exact expectation
/// under `mu` (noise-free population mode).
#[derive(Debug, Clone, Copy)]
pub enum LossSource<'a> {
    Empirical {
        data: &'a BatchDataset,
        gamma: f64,
    },
    Population {
        mdp: &'a TabularMdp,
        mu: &'a DataDistribution,
    },
}

impl<'a> LossSource<'a> {
    pub fn empirical(data: &'a BatchDataset, gamma: f64) -> Self {
        LossSource::Empirical { data, gamma }
    }

    pub fn population(mdp: &'a TabularMdp, mu: &'a DataDistribution) -> Self {
        LossSource::Population { mdp, mu }
    }

    fn check(&self) -> Result<()> {
        match self {
            LossSource::Empirical { data, .. } if data.is_empty() => Err(Error::EmptyDataset),
            _ => Ok(()),
        }
    }

    /// `l(q; target)` for every candidate `q` in `candidates`.
    fn sq_losses(&self, candidates: &[QFunction], target: &Table) -> Result<Vec<f64>> {
        match *self {
            LossSource::Empirical { data, gamma } => {
                let targets = td_targets(data, target, gamma);
                Ok(candidates
                    .par_iter()
                    .map(|q| sq_loss_against(data, q, &targets))
                    .collect())
            }
            LossSource::Population { mdp, mu } => candidates
                .par_iter()
                .map(|q| population_sq_loss_parts(mdp, mu, q, target).map(|(b, v)| b + v))
                .collect(),
        }
    }

    /// `l(q; target)` for a single candidate.
    pub fn sq_loss(&self, q: &Table, target: &Table) -> Result<f64> {
        self.check()?;
        match *self {
            LossSource::Empirical { data, gamma } => {
                Ok(sq_loss_against(data, q, &td_targets(data, target, gamma)))
            }
            LossSource::Population { mdp, mu } => {
                population_sq_loss_parts(mdp, mu, q, target).map(|(b, v)| b + v)
            }
        }
    }

    /// `L(q, w)` for every member of `w_class`.
    fn avg_losses(&self, q: &QFunction, w_class: &WClass) -> Vec<f64> {
        match *self {
            LossSource::Empirical { data, gamma } => {
                let td = td_errors(data, q, gamma);
                w_class
                    .members()
                    .iter()
                    .map(|w| weighted_mean_td(data, w, &td))
                    .collect()
            }
            LossSource::Population { mdp, mu } => {
                let c = bellman_functional(mdp, mu, q);
                w_class.members().iter().map(|w| c.inner(w)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Fqi,
    Msbo,
    Mabo,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Fqi => "fqi",
            Algorithm::Msbo => "msbo",
            Algorithm::Mabo => "mabo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FqiStep {
    pub iteration: usize,
    pub chosen_index: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub algorithm: Algorithm,
    pub chosen_index: usize,
    pub chosen_q: QFunction,
    pub objective_value: f64,
    /// Adversarial `f` (MSBO) or `w` (MABO) for the chosen `Q`; the previous
    /// iterate's index for FQI.
    pub inner_argmax_index: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trace: Option<Vec<FqiStep>>,
}

impl SolverResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Lowest index attaining the minimum.
fn argmin(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

/// Lowest index attaining the maximum.
fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// `Q_t = argmin_{Q in class} l(Q; Q_{t-1})`, starting from member `init_index`.
pub fn fqi(
    source: LossSource<'_>,
    q_class: &QClass,
    iterations: usize,
    init_index: usize,
) -> Result<SolverResult> {
    source.check()?;
    if iterations == 0 {
        return Err(Error::InvalidArgument("fqi needs at least one iteration".into()));
    }
    if init_index >= q_class.len() {
        return Err(Error::InvalidArgument(format!(
            "init index {init_index} out of range for a class of {}",
            q_class.len()
        )));
    }
    let mut current = init_index;
    let mut previous = init_index;
    let mut trace = Vec::with_capacity(iterations);
    let mut loss = f64::NAN;
    for t in 1..=iterations {
        let losses = source.sq_losses(q_class.members(), q_class.get(current))?;
        let (next, value) = argmin(&losses);
        previous = current;
        current = next;
        loss = value;
        trace.push(FqiStep {
            iteration: t,
            chosen_index: next,
            loss: value,
        });
    }
    Ok(SolverResult {
        algorithm: Algorithm::Fqi,
        chosen_index: current,
        chosen_q: q_class.get(current).clone(),
        objective_value: loss,
        inner_argmax_index: previous,
        trace: Some(trace),
    })
}

/// `max_f [l(Q; Q) - l(f; Q)]` and the lowest maximizing `f` index.
pub fn msbo_objective(source: LossSource<'_>, q: &QFunction, f_class: &QClass) -> Result<(f64, usize)> {
    source.check()?;
    let own = source.sq_loss(q, q)?;
    let helpers = source.sq_losses(f_class.members(), q)?;
    let gaps: Vec<f64> = helpers.iter().map(|l| own - l).collect();
    let (j, v) = argmax(&gaps);
    Ok((v, j))
}

/// `max_w |L(Q, w)|` and the lowest maximizing `w` index.
pub fn mabo_objective(source: LossSource<'_>, q: &QFunction, w_class: &WClass) -> Result<(f64, usize)> {
    source.check()?;
    let abs: Vec<f64> = source.avg_losses(q, w_class).iter().map(|v| v.abs()).collect();
    let (j, v) = argmax(&abs);
    Ok((v, j))
}

fn minimax(
    algorithm: Algorithm,
    q_class: &QClass,
    inner: impl Fn(&QFunction) -> Result<(f64, usize)> + Sync,
) -> Result<SolverResult> {
    let rows: Vec<(f64, usize)> = q_class
        .members()
        .par_iter()
        .map(&inner)
        .collect::<Result<_>>()?;
    let outer: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let (i, value) = argmin(&outer);
    Ok(SolverResult {
        algorithm,
        chosen_index: i,
        chosen_q: q_class.get(i).clone(),
        objective_value: value,
        inner_argmax_index: rows[i].1,
        trace: None,
    })
}

/// `argmin_Q max_f [l(Q; Q) - l(f; Q)]`.
pub fn msbo(source: LossSource<'_>, q_class: &QClass, f_class: &QClass) -> Result<SolverResult> {
    source.check()?;
    minimax(Algorithm::Msbo, q_class, |q| msbo_objective(source, q, f_class))
}

/// `argmin_Q max_w |L(Q, w)|`.
pub fn mabo(source: LossSource<'_>, q_class: &QClass, w_class: &WClass) -> Result<SolverResult> {
    source.check()?;
    minimax(Algorithm::Mabo, q_class, |q| mabo_objective(source, q, w_class))
}

/// Output of [`certainty_equivalence`].
#[derive(Debug, Clone)]
pub struct CertaintyEquivalence {
    pub q: QFunction,
    /// Pairs absent from the data; their rows were set to a zero-reward self-loop.
    pub unobserved: Vec<(usize, usize)>,
    pub model: TabularMdp,
}

/// Optimal Q-function of the empirical MDP (frequency transitions, observed
/// rewards).
pub fn certainty_equivalence(
    data: &BatchDataset,
    num_states: usize,
    num_actions: usize,
    gamma: f64,
) -> Result<CertaintyEquivalence> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let sa = num_states * num_actions;
    let mut counts = vec![0.0; sa * num_states];
    let mut visits = vec![0usize; sa];
    let mut reward_sum = vec![0.0; sa];
    for t in &data.tuples {
        if t.s >= num_states || t.a >= num_actions || t.s_next >= num_states {
            return Err(Error::InvalidArgument(format!(
                "tuple ({}, {}, {}) outside a {num_states}x{num_actions} model",
                t.s, t.a, t.s_next
            )));
        }
        let i = t.s * num_actions + t.a;
        counts[i * num_states + t.s_next] += 1.0;
        visits[i] += 1;
        reward_sum[i] += t.r;
    }
    let mut unobserved = Vec::new();
    let mut reward = Table::zeros(num_states, num_actions);
    for s in 0..num_states {
        for a in 0..num_actions {
            let i = s * num_actions + a;
            let row = &mut counts[i * num_states..(i + 1) * num_states];
            if visits[i] == 0 {
                unobserved.push((s, a));
                row[s] = 1.0;
            } else {
                let n = visits[i] as f64;
                for p in row.iter_mut() {
                    *p /= n;
                }
                reward.set(s, a, reward_sum[i] / n);
            }
        }
    }
    let r_max = reward.as_slice().iter().fold(0.0f64, |m, &r| m.max(r));
    let init = vec![1.0 / num_states as f64; num_states];
    let model = TabularMdp::new(num_states, num_actions, counts, reward, gamma, r_max, init)?;
    let q = optimal_q(&model)?;
    Ok(CertaintyEquivalence {
        q,
        unobserved,
        model,
    })
}
