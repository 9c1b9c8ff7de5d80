//! Finite function classes: Q/F classes of value-shaped tables, weight
//! classes, the unit-l1 span of a weight class, and linear-feature Q classes.
//!
//! `span(W)` is never materialized. For a linear functional `c`,
//! `sup_{w in span(W)} |<c, w>|` equals `max_i |<c, w_i>|`, so every span
//! query reduces to a scan over the members.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::{importance_weight, DataDistribution};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mdp::{greedy_policy, optimal_q, DeterministicPolicy, TabularMdp};
use crate::rng;
use crate::table::{QFunction, Table, WeightFunction};
use rand::Rng;

/// Slack allowed on the `[0, v_max]` box for values produced by floating point solves.
pub const RANGE_TOL: f64 = 1e-9;

const MAX_GRID_MEMBERS: usize = 1_000_000;

/// Finite class of Q-shaped functions, each entrywise in `[0, v_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QClass {
    members: Vec<QFunction>,
    v_max: f64,
}

impl QClass {
    pub fn new(members: Vec<QFunction>, v_max: f64) -> Result<Self> {
        let first = members.first().ok_or_else(|| Error::EmptyClass(String::new()))?;
        let (s_n, a_n) = (first.num_states(), first.num_actions());
        let tol = RANGE_TOL * v_max.max(1.0);
        for (index, q) in members.iter().enumerate() {
            q.check_shape(s_n, a_n)?;
            if let Some(&value) = q
                .as_slice()
                .iter()
                .find(|&&v| !(v >= -tol && v <= v_max + tol))
            {
                return Err(Error::OutOfRange {
                    index,
                    value,
                    v_max,
                });
            }
        }
        Ok(Self { members, v_max })
    }

    pub fn members(&self) -> &[QFunction] {
        &self.members
    }

    pub fn get(&self, i: usize) -> &QFunction {
        &self.members[i]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn num_states(&self) -> usize {
        self.members[0].num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.members[0].num_actions()
    }

    /// `Pi_Q`: greedy policies of the members, deduplicated by exact action
    /// table equality, in order of first appearance.
    pub fn policies(&self) -> Vec<DeterministicPolicy> {
        let mut seen = HashSet::new();
        self.members
            .iter()
            .map(|q| greedy_policy(q))
            .filter(|p| seen.insert(p.clone()))
            .collect()
    }

    /// Index of the first member equal to `q` within `tol` in max-norm.
    pub fn position(&self, q: &Table, tol: f64) -> Option<usize> {
        self.members.iter().position(|m| {
            m.same_shape(q)
                && m.as_slice()
                    .iter()
                    .zip(q.as_slice())
                    .all(|(a, b)| (a - b).abs() <= tol)
        })
    }

    pub fn check_mdp(&self, mdp: &TabularMdp) -> Result<()> {
        self.members[0].check_shape(mdp.num_states(), mdp.num_actions())
    }
}

/// Finite class of weight functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WClass {
    members: Vec<WeightFunction>,
}

impl WClass {
    pub fn new(members: Vec<WeightFunction>) -> Result<Self> {
        let first = members.first().ok_or_else(|| Error::EmptyClass(String::new()))?;
        let (s_n, a_n) = (first.num_states(), first.num_actions());
        for w in &members {
            w.check_shape(s_n, a_n)?;
            if !w.is_finite() {
                return Err(Error::InvalidArgument("weight function has non-finite entries".into()));
            }
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[WeightFunction] {
        &self.members
    }

    pub fn get(&self, i: usize) -> &WeightFunction {
        &self.members[i]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `{c w : w in W}`.
    pub fn scaled(&self, c: f64) -> WClass {
        WClass {
            members: self
                .members
                .iter()
                .map(|w| WeightFunction(w.map(|v| c * v)))
                .collect(),
        }
    }
}

/// Coefficients of an element of `span(W)`: at most unit l1 norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanCoefficients {
    alpha: Vec<f64>,
}

impl SpanCoefficients {
    pub const L1_TOL: f64 = 1e-12;

    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        let l1: f64 = alpha.iter().map(|a| a.abs()).sum();
        if !(l1 <= 1.0 + Self::L1_TOL) {
            return Err(Error::L1Violation(l1));
        }
        Ok(Self { alpha })
    }

    pub fn vertex(len: usize, i: usize) -> Self {
        let mut alpha = vec![0.0; len];
        alpha[i] = 1.0;
        Self { alpha }
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn l1_norm(&self) -> f64 {
        self.alpha.iter().map(|a| a.abs()).sum()
    }
}

/// `sum_i alpha_i w_i`.
pub fn span_evaluate(w_class: &WClass, alpha: &SpanCoefficients) -> Result<WeightFunction> {
    if alpha.alpha.len() != w_class.len() {
        return Err(Error::Shape {
            expected: format!("{} span coefficients", w_class.len()),
            actual: format!("{}", alpha.alpha.len()),
        });
    }
    let first = w_class.get(0);
    let mut out = Table::zeros(first.num_states(), first.num_actions());
    for (a, w) in alpha.alpha.iter().zip(w_class.members()) {
        if *a == 0.0 {
            continue;
        }
        for (o, v) in out.as_mut_slice().iter_mut().zip(w.as_slice()) {
            *o += a * v;
        }
    }
    Ok(WeightFunction(out))
}

/// `max_{w in span(W)} |<c, w>|`, attained at a vertex; returns the value and
/// the maximizing member index.
pub fn span_max_abs(w_class: &WClass, functional: &Table) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, w) in w_class.members().iter().enumerate() {
        let v = functional.inner(w).abs();
        if v > best.0 {
            best = (v, i);
        }
    }
    best
}

/// `|S||A|` indicators `1(s = s*, a = a*)`, optionally divided by `mu(s*, a*)`.
pub fn indicator_w_class(
    num_states: usize,
    num_actions: usize,
    mu: Option<&DataDistribution>,
    scaled: bool,
) -> Result<WClass> {
    if scaled && mu.is_none() {
        return Err(Error::InvalidArgument(
            "scaled indicators need a data distribution".into(),
        ));
    }
    let mut members = Vec::with_capacity(num_states * num_actions);
    for s in 0..num_states {
        for a in 0..num_actions {
            let height = match (scaled, mu) {
                (true, Some(mu)) => 1.0 / mu.get(s, a),
                _ => 1.0,
            };
            let mut t = Table::zeros(num_states, num_actions);
            t.set(s, a, height);
            members.push(WeightFunction(t));
        }
    }
    WClass::new(members)
}

/// Exact importance weights `{w_{d_pi/mu} : pi in policies}`.
pub fn importance_weight_class(
    mdp: &TabularMdp,
    mu: &DataDistribution,
    policies: &[DeterministicPolicy],
) -> Result<WClass> {
    let members = policies
        .iter()
        .map(|p| importance_weight(mdp, p, mu))
        .collect::<Result<Vec<_>>>()?;
    WClass::new(members)
}

/// All tables whose entries are drawn from `values`, enumerated with the last
/// `(s, a)` entry varying fastest.
pub fn tabular_grid(
    num_states: usize,
    num_actions: usize,
    values: &[f64],
    v_max: f64,
) -> Result<QClass> {
    let cells = num_states * num_actions;
    let count = (values.len() as f64).powi(cells as i32);
    if values.is_empty() || count > MAX_GRID_MEMBERS as f64 {
        return Err(Error::InvalidArgument(format!(
            "grid of {} values over {cells} cells has {count} members",
            values.len()
        )));
    }
    let count = count as usize;
    let mut members = Vec::with_capacity(count);
    let mut idx = vec![0usize; cells];
    for _ in 0..count {
        let entries = idx.iter().map(|&i| values[i]).collect();
        members.push(QFunction(Table::from_vec(num_states, num_actions, entries)?));
        for pos in (0..cells).rev() {
            idx[pos] += 1;
            if idx[pos] < values.len() {
                break;
            }
            idx[pos] = 0;
        }
    }
    QClass::new(members, v_max)
}

/// `size` members of the form `clip(Q* + U[-noise, noise], 0, v_max)`; with
/// `include_optimal` the first member is `Q*` itself.
pub fn perturbed_class(
    mdp: &TabularMdp,
    size: usize,
    noise: f64,
    include_optimal: bool,
    seed: u64,
) -> Result<QClass> {
    let q_star = optimal_q(mdp)?;
    let v_max = mdp.v_max();
    let mut r = rng::seeded(seed);
    let members = (0..size)
        .map(|i| {
            if include_optimal && i == 0 {
                return QFunction(q_star.map(|v| v.clamp(0.0, v_max)));
            }
            let values = q_star
                .as_slice()
                .iter()
                .map(|v| (v + noise * (2.0 * r.random::<f64>() - 1.0)).clamp(0.0, v_max))
                .collect();
            QFunction(
                Table::from_vec(q_star.num_states(), q_star.num_actions(), values)
                    .expect("shape"),
            )
        })
        .collect();
    QClass::new(members, v_max)
}

/// Q class linear in features: `Q(s,a) = R(s,a) + gamma * phi(s,a)^T theta`.
///
/// `features` is `Phi+ = [Phi R]`, shape `(S*A) x (k+1)`. Coefficient vectors
/// whose member leaves `[0, v_max]` are dropped at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearQClass {
    features: Matrix,
    theta_set: Vec<Vec<f64>>,
    gamma: f64,
    v_max: f64,
}

impl LinearQClass {
    pub fn new(
        phi: &Matrix,
        reward: &Table,
        theta_set: Vec<Vec<f64>>,
        gamma: f64,
        v_max: f64,
    ) -> Result<Self> {
        let rows = reward.num_states() * reward.num_actions();
        if phi.rows() != rows {
            return Err(Error::Shape {
                expected: format!("{rows} feature rows"),
                actual: format!("{}", phi.rows()),
            });
        }
        let k = phi.cols();
        let mut features = Matrix::zeros(rows, k + 1);
        for i in 0..rows {
            features.row_mut(i)[..k].copy_from_slice(phi.row(i));
            features[(i, k)] = reward.as_slice()[i];
        }
        let mut cls = Self {
            features,
            theta_set: Vec::new(),
            gamma,
            v_max,
        };
        let tol = RANGE_TOL * v_max.max(1.0);
        for theta in theta_set {
            if theta.len() != k {
                return Err(Error::Shape {
                    expected: format!("theta of length {k}"),
                    actual: format!("{}", theta.len()),
                });
            }
            let in_range = (0..rows).all(|i| {
                let v = cls.value(i, &theta);
                v >= -tol && v <= v_max + tol
            });
            if in_range {
                cls.theta_set.push(theta);
            }
        }
        if cls.theta_set.is_empty() {
            return Err(Error::EmptyClass(" after [0, v_max] filtering".into()));
        }
        Ok(cls)
    }

    /// Latent dimension `k`.
    pub fn latent_dim(&self) -> usize {
        self.features.cols() - 1
    }

    /// `Phi+ = [Phi R]`.
    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn theta_set(&self) -> &[Vec<f64>] {
        &self.theta_set
    }

    fn value(&self, row: usize, theta: &[f64]) -> f64 {
        let k = self.latent_dim();
        let f = self.features.row(row);
        f[k] + self.gamma * crate::linalg::dot(&f[..k], theta)
    }
}

/// Materializes the members of a linear class as a [`QClass`].
pub fn linear_q_members(cls: &LinearQClass, mdp: &TabularMdp) -> Result<QClass> {
    let rows = mdp.num_states() * mdp.num_actions();
    if cls.features.rows() != rows {
        return Err(Error::Shape {
            expected: format!("{rows} feature rows"),
            actual: format!("{}", cls.features.rows()),
        });
    }
    let members = cls
        .theta_set
        .iter()
        .map(|theta| {
            let values = (0..rows).map(|i| cls.value(i, theta)).collect();
            Table::from_vec(mdp.num_states(), mdp.num_actions(), values).map(QFunction)
        })
        .collect::<Result<Vec<_>>>()?;
    QClass::new(members, cls.v_max)
}

/// Generator spec for class files and experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClassSpec {
    /// Explicit member tables.
    Explicit { members: Vec<Table> },
    /// Every table with entries from `values`.
    Grid { values: Vec<f64> },
    /// `Q*` plus clipped uniform noise.
    Perturbed {
        size: usize,
        noise: f64,
        #[serde(default = "default_true")]
        include_optimal: bool,
        #[serde(default)]
        seed: u64,
    },
    /// `R + gamma Phi theta` over explicit features and coefficients.
    Linear {
        phi: Vec<Vec<f64>>,
        theta_set: Vec<Vec<f64>>,
    },
    /// Indicator weights, optionally scaled by `1/mu`.
    Indicator {
        #[serde(default)]
        scaled: bool,
    },
    /// Exact importance weights of the Q class's greedy policies.
    ImportanceWeights,
    /// A single constant weight function.
    Constant { value: f64 },
}

fn default_true() -> bool {
    true
}

impl ClassSpec {
    pub fn build_q(&self, mdp: &TabularMdp) -> Result<QClass> {
        let v_max = mdp.v_max();
        let q = match self {
            ClassSpec::Explicit { members } => {
                QClass::new(members.iter().cloned().map(QFunction).collect(), v_max)?
            }
            ClassSpec::Grid { values } => {
                tabular_grid(mdp.num_states(), mdp.num_actions(), values, v_max)?
            }
            ClassSpec::Perturbed {
                size,
                noise,
                include_optimal,
                seed,
            } => perturbed_class(mdp, *size, *noise, *include_optimal, *seed)?,
            ClassSpec::Linear { phi, theta_set } => {
                let phi = Matrix::from_rows(phi)?;
                let cls =
                    LinearQClass::new(&phi, mdp.reward(), theta_set.clone(), mdp.gamma(), v_max)?;
                linear_q_members(&cls, mdp)?
            }
            other => {
                return Err(Error::InvalidArgument(format!(
                    "{other:?} does not describe a Q class"
                )))
            }
        };
        q.check_mdp(mdp)?;
        Ok(q)
    }

    pub fn build_w(
        &self,
        mdp: &TabularMdp,
        mu: &DataDistribution,
        q_class: &QClass,
    ) -> Result<WClass> {
        let (s_n, a_n) = (mdp.num_states(), mdp.num_actions());
        match self {
            ClassSpec::Explicit { members } => {
                let w = WClass::new(members.iter().cloned().map(WeightFunction).collect())?;
                w.get(0).check_shape(s_n, a_n)?;
                Ok(w)
            }
            ClassSpec::Indicator { scaled } => indicator_w_class(s_n, a_n, Some(mu), *scaled),
            ClassSpec::ImportanceWeights => {
                importance_weight_class(mdp, mu, &q_class.policies())
            }
            ClassSpec::Constant { value } => {
                WClass::new(vec![WeightFunction(Table::constant(s_n, a_n, *value))])
            }
            other => Err(Error::InvalidArgument(format!(
                "{other:?} does not describe a weight class"
            ))),
        }
    }
}
