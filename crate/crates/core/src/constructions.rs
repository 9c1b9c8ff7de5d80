//! Builders for the reference instances: the deterministic chain whose
//! per-step coefficients blow up while its occupancy-based ones stay at 1,
//! the two-state instance on which FQI fails to control Bellman error,
//! random (low-rank) MDPs, and the weight classes that make `eps_W` vanish
//! on low-rank models via volume-maximizing row selection.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classes::{linear_q_members, LinearQClass, QClass, WClass};
use crate::data::{importance_weight, BatchDataset, DataDistribution, Transition};
use crate::error::{Error, Result};
use crate::linalg::{norm2, Matrix, RowBasis};
use crate::mdp::{state_occupancy, DeterministicPolicy, TabularMdp};
use crate::rng;
use crate::table::{QFunction, Table, WeightFunction};

/// Relative threshold on orthogonalization residuals for rank decisions.
pub const RANK_TOL: f64 = 1e-8;
/// A swap is accepted only if it grows the selected volume by more than this factor.
pub const SWAP_GAIN: f64 = 1.0 + 1e-9;
pub const COUNTEREXAMPLE_TUPLES: usize = 100;

/// Chain `s_0 -> s_1 -> ... -> s_L` (absorbing) with one action and zero
/// rewards, started at `s_0`, together with `mu = d_pi` of its only policy.
pub fn chain_mdp(length: usize, gamma: f64) -> Result<(TabularMdp, DataDistribution)> {
    if length == 0 {
        return Err(Error::InvalidArgument("chain length must be at least 1".into()));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("gamma {gamma} not in (0, 1)")));
    }
    let n = length + 1;
    let mut transition = vec![0.0; n * n];
    for s in 0..n {
        transition[s * n + (s + 1).min(length)] = 1.0;
    }
    let mut d0 = vec![0.0; n];
    d0[0] = 1.0;
    let mdp = TabularMdp::new(n, 1, transition, Table::zeros(n, 1), gamma, 0.0, d0)?;
    let mu: Vec<f64> = (0..n)
        .map(|t| {
            if t < length {
                (1.0 - gamma) * gamma.powi(t as i32)
            } else {
                gamma.powi(length as i32)
            }
        })
        .collect();
    let mu = DataDistribution::new(Table::from_vec(n, 1, mu)?)?;
    Ok((mdp, mu))
}

/// Closed-form per-step coefficient of the chain: `1/((1-g) g^t)` for
/// `t < L`, `1/g^L` afterwards.
pub fn chain_per_step_formula(length: usize, gamma: f64, t: usize) -> f64 {
    if t < length {
        1.0 / ((1.0 - gamma) * gamma.powi(t as i32))
    } else {
        1.0 / gamma.powi(length as i32)
    }
}

/// Two states, one action: `s_1 -> s_2`, `s_2` absorbing, zero reward; the
/// dataset repeats `(s_1, a, 0, s_2)` `count` times. `r_max` is set to 1 so
/// that `[0, V_max]` is a nontrivial range.
pub fn two_state_counterexample(count: usize, gamma: f64) -> Result<(TabularMdp, BatchDataset)> {
    let mdp = TabularMdp::new(
        2,
        1,
        vec![0.0, 1.0, 0.0, 1.0],
        Table::zeros(2, 1),
        gamma,
        1.0,
        vec![1.0, 0.0],
    )?;
    let tuples = vec![
        Transition {
            s: 0,
            a: 0,
            r: 0.0,
            s_next: 1,
        };
        count
    ];
    Ok((mdp, BatchDataset::new(tuples, 0)))
}

/// Tabular grid over `[0, V_max]^2` with spacing `step` for the two-state
/// instance. With a seed the members are shuffled, so lowest-index tie
/// breaking no longer favours small `Q(s_2)`.
pub fn counterexample_grid(mdp: &TabularMdp, step: f64, seed: Option<u64>) -> Result<QClass> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("grid step {step} must be positive")));
    }
    let v_max = mdp.v_max();
    let count = (v_max / step + 1e-9).floor() as usize + 1;
    let values: Vec<f64> = (0..count).map(|i| i as f64 * step).collect();
    let mut members = Vec::with_capacity(count * count);
    for &q1 in &values {
        for &q2 in &values {
            members.push(QFunction(Table::from_vec(2, 1, vec![q1, q2])?));
        }
    }
    if let Some(seed) = seed {
        members.shuffle(&mut rng::seeded(seed));
    }
    QClass::new(members, v_max)
}

/// Random model with transition rows and `d0` drawn uniformly from the
/// simplex and rewards uniform on `[0, 1]`.
pub fn random_mdp(num_states: usize, num_actions: usize, gamma: f64, seed: u64) -> Result<TabularMdp> {
    let mut r = rng::seeded(seed);
    let mut transition = Vec::with_capacity(num_states * num_actions * num_states);
    for _ in 0..num_states * num_actions {
        transition.extend(rng::random_simplex(&mut r, num_states));
    }
    let reward = Table::from_vec(
        num_states,
        num_actions,
        (0..num_states * num_actions).map(|_| r.random::<f64>()).collect(),
    )?;
    let d0 = rng::random_simplex(&mut r, num_states);
    TabularMdp::new(num_states, num_actions, transition, reward, gamma, 1.0, d0)
}

/// Factorization `P = Phi P'` of a low-rank model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowRankMdpSpec {
    pub latent_dim: usize,
    /// `Phi`, `(S*A) x k`, rows are distributions over latent indices.
    pub left_factor: Matrix,
    /// `P'`, `k x S`, rows are distributions over next states.
    pub right_factor: Matrix,
}

/// Random rank-`k` model with nonnegative stochastic factors.
pub fn random_lowrank_mdp(
    num_states: usize,
    num_actions: usize,
    k: usize,
    gamma: f64,
    seed: u64,
) -> Result<(LowRankMdpSpec, TabularMdp)> {
    if k == 0 || k > (num_states * num_actions).min(num_states) {
        return Err(Error::InvalidArgument(format!(
            "latent dimension {k} must lie in 1..={}",
            (num_states * num_actions).min(num_states)
        )));
    }
    let mut r = rng::seeded(seed);
    let sa = num_states * num_actions;
    let left: Vec<Vec<f64>> = (0..sa).map(|_| rng::random_simplex(&mut r, k)).collect();
    let right: Vec<Vec<f64>> = (0..k)
        .map(|_| rng::random_simplex(&mut r, num_states))
        .collect();
    let left = Matrix::from_rows(&left)?;
    let right = Matrix::from_rows(&right)?;
    let product = left.matmul(&right)?;
    // renormalize away rounding so rows pass the strict sum check
    let mut transition = Vec::with_capacity(sa * num_states);
    for i in 0..sa {
        let row = product.row(i);
        let sum: f64 = row.iter().sum();
        transition.extend(row.iter().map(|p| p / sum));
    }
    let reward = Table::from_vec(
        num_states,
        num_actions,
        (0..sa).map(|_| r.random::<f64>()).collect(),
    )?;
    let d0 = rng::random_simplex(&mut r, num_states);
    let mdp = TabularMdp::new(num_states, num_actions, transition, reward, gamma, 1.0, d0)?;
    Ok((
        LowRankMdpSpec {
            latent_dim: k,
            left_factor: left,
            right_factor: right,
        },
        mdp,
    ))
}

/// Rows are the state occupancies `nu_pi` of the given policies.
pub fn occupancy_matrix(mdp: &TabularMdp, policies: &[DeterministicPolicy]) -> Result<Matrix> {
    let rows = policies
        .iter()
        .map(|p| state_occupancy(mdp, p))
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, mdp.num_states()));
    }
    Matrix::from_rows(&rows)
}

/// Volume-maximizing subset of rows and the representation of every input
/// row in terms of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpannerSelection {
    pub row_indices: Vec<usize>,
    /// `coefficients[i][j]`: weight of selected row `j` in input row `i`.
    /// A locally volume-maximal selection keeps these in `[-1, 1]`.
    pub coefficients: Vec<Vec<f64>>,
    /// `max(1, max |coefficient|)`; 1 means the spanner bound holds exactly.
    pub approximation_ratio: f64,
    /// Largest reconstruction residual norm over input rows.
    pub max_residual: f64,
    pub requested_dim: usize,
    pub swaps: usize,
}

impl SpannerSelection {
    pub fn dim(&self) -> usize {
        self.row_indices.len()
    }

    /// Coefficients against the rescaled rows `k' * eta_j` (`k'` = selection
    /// size), bounded by `1/k'` in absolute value for an exact spanner.
    pub fn scaled_coefficients(&self) -> Vec<Vec<f64>> {
        let k = self.dim() as f64;
        self.coefficients
            .iter()
            .map(|c| c.iter().map(|v| v / k).collect())
            .collect()
    }

    pub fn reduced_rank(&self) -> bool {
        self.dim() < self.requested_dim
    }
}

/// Greedy volume-maximizing selection of at most `target_dim` rows followed
/// by single-swap refinement until no swap grows the volume by more than
/// [`SWAP_GAIN`]. Fewer rows are selected when the numerical rank is lower.
pub fn barycentric_select(rows: &[Vec<f64>], target_dim: usize) -> Result<SpannerSelection> {
    if rows.is_empty() || target_dim == 0 {
        return Err(Error::InvalidArgument(
            "row selection needs at least one row and a positive dimension".into(),
        ));
    }
    let dim = rows[0].len();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Shape {
            expected: format!("rows of length {dim}"),
            actual: "ragged rows".into(),
        });
    }
    let scale = rows.iter().map(|r| norm2(r)).fold(0.0f64, f64::max);
    if scale == 0.0 {
        return Err(Error::Numerical("all rows are zero".into()));
    }

    // greedy: repeatedly take the row with the largest residual
    let mut selected: Vec<usize> = Vec::new();
    let mut resid: Vec<Vec<f64>> = rows.to_vec();
    while selected.len() < target_dim {
        let (best, nrm) = resid
            .iter()
            .enumerate()
            .filter(|(i, _)| !selected.contains(i))
            .map(|(i, r)| (i, norm2(r)))
            .fold((usize::MAX, 0.0f64), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best == usize::MAX || nrm <= RANK_TOL * scale {
            break;
        }
        selected.push(best);
        let u: Vec<f64> = resid[best].iter().map(|v| v / nrm).collect();
        for (i, r) in resid.iter_mut().enumerate() {
            if selected.contains(&i) {
                continue;
            }
            for _ in 0..2 {
                let p: f64 = r.iter().zip(&u).map(|(a, b)| a * b).sum();
                for (ri, ui) in r.iter_mut().zip(&u) {
                    *ri -= p * ui;
                }
            }
        }
    }

    // swap refinement: replacing selected row j by row i scales the volume by |beta_ij|
    let mut swaps = 0;
    let max_swaps = 100 * rows.len() * target_dim;
    let (coefficients, max_residual) = loop {
        let refs: Vec<&[f64]> = selected.iter().map(|&i| rows[i].as_slice()).collect();
        let basis = RowBasis::new(&refs, 0.0)
            .ok_or_else(|| Error::Numerical("selected rows became dependent".into()))?;
        let reps: Vec<(Vec<f64>, f64)> = rows.iter().map(|r| basis.represent(r)).collect();
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, (beta, _)) in reps.iter().enumerate() {
            if selected.contains(&i) {
                continue;
            }
            for (j, b) in beta.iter().enumerate() {
                if b.abs() > SWAP_GAIN && best.is_none_or(|(_, _, v)| b.abs() > v) {
                    best = Some((i, j, b.abs()));
                }
            }
        }
        match best {
            Some((i, j, _)) if swaps < max_swaps => {
                selected[j] = i;
                swaps += 1;
            }
            _ => {
                let max_res = reps.iter().map(|r| r.1).fold(0.0, f64::max);
                break (reps.into_iter().map(|r| r.0).collect::<Vec<_>>(), max_res);
            }
        }
    };
    let max_coef = coefficients
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(SpannerSelection {
        row_indices: selected,
        coefficients,
        approximation_ratio: max_coef.max(1.0),
        max_residual,
        requested_dim: target_dim,
        swaps,
    })
}

/// `W = { diag(mu)^-1 (k' eta_j x pi) }` over selected occupancy rows `eta_j`
/// and greedy policies `pi` of the class, where `k'` is the number of
/// selected rows; `|W| <= k' |Pi_Q|`.
pub fn build_w_claim1(
    mdp: &TabularMdp,
    mu: &DataDistribution,
    q_class: &QClass,
) -> Result<(WClass, SpannerSelection)> {
    let policies = q_class.policies();
    let m_nu = occupancy_matrix(mdp, &policies)?;
    let rows = m_nu.to_rows();
    let target = rows.len().min(mdp.num_states());
    let selection = barycentric_select(&rows, target)?;
    let k = selection.dim() as f64;
    let mut members = Vec::with_capacity(selection.dim() * policies.len());
    for pi in &policies {
        for &j in &selection.row_indices {
            let eta: Vec<f64> = rows[j].iter().map(|v| k * v).collect();
            let lifted = pi.lift(&eta, mdp.num_actions());
            members.push(WeightFunction(lifted.zip_map(mu.table(), |d, m| d / m)));
        }
    }
    Ok((WClass::new(members)?, selection))
}

/// `d_pi^T Phi+` for each policy, the projection of `w_pi` that linear
/// classes over `Phi+` can detect.
pub fn projected_weight_rows(
    mdp: &TabularMdp,
    features: &Matrix,
    policies: &[DeterministicPolicy],
) -> Result<Vec<Vec<f64>>> {
    policies
        .iter()
        .map(|p| {
            let d = crate::mdp::compute_occupancy(mdp, p)?;
            Ok(features.transpose().matvec(d.dist.as_slice()))
        })
        .collect()
}

/// `W = { k' w_{pi_j} }` for policies whose projected rows `d_pi^T Phi+` were
/// selected; `|W| <= k + 1`.
pub fn build_w_claim2(
    spec: &LowRankMdpSpec,
    mdp: &TabularMdp,
    mu: &DataDistribution,
    linear_q: &LinearQClass,
) -> Result<(WClass, SpannerSelection)> {
    if spec.latent_dim != linear_q.latent_dim() {
        return Err(Error::Shape {
            expected: format!("linear class of latent dimension {}", spec.latent_dim),
            actual: format!("{}", linear_q.latent_dim()),
        });
    }
    let q_class = linear_q_members(linear_q, mdp)?;
    let policies = q_class.policies();
    let rows = projected_weight_rows(mdp, linear_q.features(), &policies)?;
    let target = rows.len().min(linear_q.latent_dim() + 1);
    let selection = barycentric_select(&rows, target)?;
    let k = selection.dim() as f64;
    let members = selection
        .row_indices
        .iter()
        .map(|&j| {
            let w = importance_weight(mdp, &policies[j], mu)?;
            Ok(WeightFunction(w.map(|v| k * v)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((WClass::new(members)?, selection))
}

/// `|S| - 1` context states with uniform `d0`, two actions, every pair moving
/// to the absorbing last state. Returns the model and the policies that take
/// action 0 in exactly one context and action 1 everywhere else.
pub fn contextual_bandit(num_states: usize, gamma: f64) -> Result<(TabularMdp, Vec<DeterministicPolicy>)> {
    if num_states < 2 {
        return Err(Error::InvalidArgument("need at least one context and the absorbing state".into()));
    }
    let n = num_states;
    let last = n - 1;
    let mut transition = vec![0.0; n * 2 * n];
    for row in 0..n * 2 {
        transition[row * n + last] = 1.0;
    }
    let reward = Table::from_fn(n, 2, |s, a| if s < last && a == 0 { 1.0 } else { 0.0 });
    let mut d0 = vec![1.0 / last as f64; n];
    d0[last] = 0.0;
    let mdp = TabularMdp::new(n, 2, transition, reward, gamma, 1.0, d0)?;
    let policies = (0..last)
        .map(|i| DeterministicPolicy::new((0..n).map(|s| usize::from(s != i)).collect(), 2))
        .collect::<Result<Vec<_>>>()?;
    Ok((mdp, policies))
}

/// Contextual bandit with stochastic outcomes: context `i` moves to an
/// absorbing rewarding state with probability `1/2 + gaps[i] / (2 gamma V)`
/// under action 0 and `1/2 - gaps[i] / (2 gamma V)` under action 1 (otherwise
/// to an absorbing zero-reward state), so `Q*(i, 0) - Q*(i, 1) = gaps[i]`.
/// States: contexts, then the rewarding and the zero-reward sink; `d0` is
/// uniform over contexts.
pub fn noisy_bandit(gaps: &[f64], gamma: f64) -> Result<TabularMdp> {
    let k = gaps.len();
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one context".into()));
    }
    let v_max = 1.0 / (1.0 - gamma);
    let n = k + 2;
    let (high, low) = (k, k + 1);
    let mut transition = vec![0.0; n * 2 * n];
    for (i, &g) in gaps.iter().enumerate() {
        let half = g / (2.0 * gamma * v_max);
        if !(0.0..=0.5).contains(&half) {
            return Err(Error::InvalidArgument(format!("gap {g} not attainable")));
        }
        for (a, p) in [(0, 0.5 + half), (1, 0.5 - half)] {
            let row = (i * 2 + a) * n;
            transition[row + high] = p;
            transition[row + low] = 1.0 - p;
        }
    }
    for a in 0..2 {
        transition[(high * 2 + a) * n + high] = 1.0;
        transition[(low * 2 + a) * n + low] = 1.0;
    }
    let reward = Table::from_fn(n, 2, |s, _| if s == high { 1.0 } else { 0.0 });
    let mut d0 = vec![1.0 / k as f64; n];
    d0[high] = 0.0;
    d0[low] = 0.0;
    TabularMdp::new(n, 2, transition, reward, gamma, 1.0, d0)
}

/// `{ base + c * direction : c in {0, step, -step, 2 step, -2 step, ...}, |c| <= c_max }`,
/// ordered by increasing `|c|` so that ties resolve toward `base`.
pub fn shift_class(
    base: &Table,
    direction: &Table,
    step: f64,
    c_max: f64,
    v_max: f64,
) -> Result<QClass> {
    if !(step > 0.0) || c_max < 0.0 {
        return Err(Error::InvalidArgument("shift grid needs step > 0 and c_max >= 0".into()));
    }
    let count = (c_max / step + 1e-9).floor() as i64;
    let mut members = vec![QFunction(base.clone())];
    for i in 1..=count {
        for sign in [1.0, -1.0] {
            let c = sign * i as f64 * step;
            members.push(QFunction(base.zip_map(direction, |b, d| b + c * d)));
        }
    }
    QClass::new(members, v_max)
}
