//! Logging distribution, i.i.d. batch generation, importance weights and the
//! squared / average Bellman losses in their empirical and population forms.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{compute_occupancy, DeterministicPolicy, OccupancyMeasure, TabularMdp};
use crate::rng;
use crate::table::{QFunction, Table, WeightFunction};

const MASS_TOL: f64 = 1e-12;

/// Fully supported distribution `mu` over state-action pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Table", into = "Table")]
pub struct DataDistribution {
    mu: Table,
}

impl TryFrom<Table> for DataDistribution {
    type Error = Error;

    fn try_from(t: Table) -> Result<Self> {
        Self::new(t)
    }
}

impl From<DataDistribution> for Table {
    fn from(d: DataDistribution) -> Self {
        d.mu
    }
}

impl DataDistribution {
    pub fn new(mu: Table) -> Result<Self> {
        for s in 0..mu.num_states() {
            for a in 0..mu.num_actions() {
                let v = mu.get(s, a);
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::NotFullySupported {
                        state: s,
                        action: a,
                        value: v,
                    });
                }
            }
        }
        let total = mu.sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidArgument(format!("mu sums to {total}")));
        }
        Ok(Self { mu })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / (num_states * num_actions) as f64;
        Self {
            mu: Table::constant(num_states, num_actions, p),
        }
    }

    /// Uses an occupancy measure directly as the logging distribution; fails
    /// if it does not cover every pair.
    pub fn from_occupancy(occ: &OccupancyMeasure) -> Result<Self> {
        Self::new(occ.dist.clone())
    }

    /// Random fully supported distribution (flat Dirichlet draw, floored so
    /// every entry is at least `floor` before renormalization).
    pub fn random(num_states: usize, num_actions: usize, floor: f64, seed: u64) -> Self {
        let mut r = rng::seeded(seed);
        let raw = rng::random_simplex(&mut r, num_states * num_actions);
        let floored: Vec<f64> = raw.iter().map(|p| p.max(floor)).collect();
        let sum: f64 = floored.iter().sum();
        let mu = Table::from_vec(
            num_states,
            num_actions,
            floored.iter().map(|p| p / sum).collect(),
        )
        .expect("shape");
        Self { mu }
    }

    pub fn table(&self) -> &Table {
        &self.mu
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.mu.get(s, a)
    }

    /// `E_mu[f]`.
    pub fn expectation(&self, f: &Table) -> f64 {
        self.mu.inner(f)
    }

    /// `||f||_{2,mu}^2`.
    pub fn sq_norm(&self, f: &Table) -> f64 {
        self.mu
            .as_slice()
            .iter()
            .zip(f.as_slice())
            .map(|(m, v)| m * v * v)
            .sum()
    }

    fn check(&self, mdp: &TabularMdp) -> Result<()> {
        self.mu.check_shape(mdp.num_states(), mdp.num_actions())
    }
}

/// One `(s, a, r, s')` tuple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
}

/// Batch of i.i.d. transitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchDataset {
    pub tuples: Vec<Transition>,
    pub seed: u64,
}

impl BatchDataset {
    pub fn new(tuples: Vec<Transition>, seed: u64) -> Self {
        Self { tuples, seed }
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    fn non_empty(&self) -> Result<()> {
        if self.tuples.is_empty() {
            Err(Error::EmptyDataset)
        } else {
            Ok(())
        }
    }

    /// Counts per `(s, a)` pair.
    pub fn counts(&self, num_states: usize, num_actions: usize) -> Table {
        let mut c = Table::zeros(num_states, num_actions);
        for t in &self.tuples {
            let v = c.get(t.s, t.a);
            c.set(t.s, t.a, v + 1.0);
        }
        c
    }

    /// Writes the dataset as CSV with header `s,a,r,s_next`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for t in &self.tuples {
            wtr.serialize(t)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a `s,a,r,s_next` CSV and validates indices against `mdp`.
    pub fn read_csv<R: Read>(r: R, mdp: &TabularMdp, seed: u64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut tuples = Vec::new();
        for (line, rec) in rdr.deserialize::<Transition>().enumerate() {
            let t = rec?;
            if t.s >= mdp.num_states() || t.s_next >= mdp.num_states() || t.a >= mdp.num_actions() {
                return Err(Error::InvalidArgument(format!(
                    "row {}: index out of range for a {}x{} model",
                    line + 1,
                    mdp.num_states(),
                    mdp.num_actions()
                )));
            }
            if !t.r.is_finite() {
                return Err(Error::InvalidArgument(format!("row {}: non-finite reward", line + 1)));
            }
            tuples.push(t);
        }
        Ok(Self { tuples, seed })
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load_csv(path: impl AsRef<Path>, mdp: &TabularMdp, seed: u64) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, mdp, seed)
    }
}

/// Draws `n` tuples with `(s, a) ~ mu`, `r = R(s, a)`, `s' ~ P(.|s, a)`.
pub fn generate_batch(
    mdp: &TabularMdp,
    mu: &DataDistribution,
    n: usize,
    seed: u64,
) -> Result<BatchDataset> {
    mu.check(mdp)?;
    if n == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let num_actions = mdp.num_actions();
    let mut r = rng::seeded(seed);
    let pair_dist = rng::categorical(mu.table().as_slice());
    let next_dists: Vec<_> = (0..mdp.num_states() * num_actions)
        .map(|i| rng::categorical(mdp.next_dist(i / num_actions, i % num_actions)))
        .collect();
    let tuples = (0..n)
        .map(|_| {
            let pair = rng::sample(&pair_dist, &mut r);
            let (s, a) = (pair / num_actions, pair % num_actions);
            let s_next = rng::sample(&next_dists[pair], &mut r);
            Transition {
                s,
                a,
                r: mdp.reward().get(s, a),
                s_next,
            }
        })
        .collect();
    Ok(BatchDataset { tuples, seed })
}

/// `w_{d_pi/mu}(s, a) = d_pi(s, a) / mu(s, a)`.
pub fn importance_weight(
    mdp: &TabularMdp,
    policy: &DeterministicPolicy,
    mu: &DataDistribution,
) -> Result<WeightFunction> {
    mu.check(mdp)?;
    let d = compute_occupancy(mdp, policy)?;
    Ok(WeightFunction(d.dist.zip_map(mu.table(), |p, m| p / m)))
}

/// Regression targets `r + gamma * max_a' q_target(s', a')` for each tuple.
pub fn td_targets(data: &BatchDataset, q_target: &Table, gamma: f64) -> Vec<f64> {
    let v = q_target.max_per_state();
    data.tuples
        .iter()
        .map(|t| t.r + gamma * v[t.s_next])
        .collect()
}

/// Mean of `(q(s_i, a_i) - y_i)^2` against precomputed targets.
pub fn sq_loss_against(data: &BatchDataset, q: &Table, targets: &[f64]) -> f64 {
    let total: f64 = data
        .tuples
        .iter()
        .zip(targets)
        .map(|(t, y)| (q.get(t.s, t.a) - y).powi(2))
        .sum();
    total / data.len() as f64
}

/// Single-sample TD errors `r + gamma * max_a' q(s', a') - q(s, a)`.
pub fn td_errors(data: &BatchDataset, q: &Table, gamma: f64) -> Vec<f64> {
    let v = q.max_per_state();
    data.tuples
        .iter()
        .map(|t| t.r + gamma * v[t.s_next] - q.get(t.s, t.a))
        .collect()
}

/// Mean of `w(s_i, a_i) * e_i` against precomputed TD errors.
pub fn weighted_mean_td(data: &BatchDataset, w: &Table, td: &[f64]) -> f64 {
    let total: f64 = data
        .tuples
        .iter()
        .zip(td)
        .map(|(t, e)| w.get(t.s, t.a) * e)
        .sum();
    total / data.len() as f64
}

/// `l_D(q; q_target) = (1/n) sum (q(s,a) - r - gamma max_a' q_target(s',a'))^2`.
pub fn empirical_sq_loss(
    data: &BatchDataset,
    q: &Table,
    q_target: &Table,
    gamma: f64,
) -> Result<f64> {
    data.non_empty()?;
    let targets = td_targets(data, q_target, gamma);
    Ok(sq_loss_against(data, q, &targets))
}

/// Exact `E_mu[(q - r - gamma max q_target(s', .))^2]`, split as the squared
/// distance to the backup mean plus `gamma^2 E_mu[Var_{s'}(max_a' q_target(s', a'))]`.
pub fn population_sq_loss(
    mdp: &TabularMdp,
    mu: &DataDistribution,
    q: &Table,
    q_target: &Table,
) -> Result<f64> {
    let (bias, variance) = population_sq_loss_parts(mdp, mu, q, q_target)?;
    Ok(bias + variance)
}

/// The two terms of [`population_sq_loss`]: `(||q - backup||^2_{2,mu}, gamma^2 E_mu[Var])`.
pub fn population_sq_loss_parts(
    mdp: &TabularMdp,
    mu: &DataDistribution,
    q: &Table,
    q_target: &Table,
) -> Result<(f64, f64)> {
    mu.check(mdp)?;
    q.check_shape(mdp.num_states(), mdp.num_actions())?;
    let gamma = mdp.gamma();
    let v = q_target.max_per_state();
    let mut bias = 0.0;
    let mut variance = 0.0;
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let p = mdp.next_dist(s, a);
            let mean: f64 = p.iter().zip(&v).map(|(pi, vi)| pi * vi).sum();
            let var: f64 = p.iter().zip(&v).map(|(pi, vi)| pi * (vi - mean).powi(2)).sum();
            let backup = mdp.reward().get(s, a) + gamma * mean;
            let m = mu.get(s, a);
            bias += m * (q.get(s, a) - backup).powi(2);
            variance += m * gamma * gamma * var;
        }
    }
    Ok((bias, variance))
}

/// `L_D(q, w) = (1/n) sum w(s,a) (r + gamma max_a' q(s',a') - q(s,a))`.
pub fn empirical_avg_loss(data: &BatchDataset, q: &Table, w: &Table, gamma: f64) -> Result<f64> {
    data.non_empty()?;
    let td = td_errors(data, q, gamma);
    Ok(weighted_mean_td(data, w, &td))
}

/// `L_mu(q, w) = E_mu[w (Tq - q)]`.
pub fn population_avg_loss(
    mdp: &TabularMdp,
    mu: &DataDistribution,
    q: &Table,
    w: &Table,
) -> Result<f64> {
    mu.check(mdp)?;
    q.check_shape(mdp.num_states(), mdp.num_actions())?;
    w.check_shape(mdp.num_states(), mdp.num_actions())?;
    let tq = crate::mdp::bellman_optimality(mdp, q);
    Ok(mu
        .table()
        .as_slice()
        .iter()
        .zip(w.as_slice())
        .zip(tq.as_slice().iter().zip(q.as_slice()))
        .map(|((m, wv), (t, qv))| m * wv * (t - qv))
        .sum())
}

/// `c_Q(s,a) = mu(s,a) (TQ - Q)(s,a)`: the linear functional through which
/// `L_mu(Q, .)` acts on weight functions.
pub fn bellman_functional(mdp: &TabularMdp, mu: &DataDistribution, q: &QFunction) -> Table {
    let tq = crate::mdp::bellman_optimality(mdp, q);
    let diff = tq.zip_map(q, |t, v| t - v);
    mu.table().zip_map(&diff, |m, d| m * d)
}
