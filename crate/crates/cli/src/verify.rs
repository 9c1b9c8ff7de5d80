//! Named verification suites. Every check records the measured quantity and
//! the threshold it was held to.

use brl_core::classes::{
    importance_weight_class, indicator_w_class, linear_q_members, perturbed_class, span_evaluate,
    span_max_abs,
};
use brl_core::constructions::{
    build_w_claim1, build_w_claim2, chain_mdp, chain_per_step_formula, contextual_bandit,
    counterexample_grid, noisy_bandit, random_lowrank_mdp, random_mdp, shift_class,
    two_state_counterexample, COUNTEREXAMPLE_TUPLES, RANK_TOL,
};
use brl_core::data::generate_batch;
use brl_core::diagnostics::{
    bellman_residual_sq, bound_report, c_eff, c_inf, default_beta, eps_q_avg, eps_q_sq, eps_w,
    per_step_coefficients, per_step_combined, suboptimality, ReportRequest,
};
use brl_core::linalg::numerical_rank;
use brl_core::mdp::{
    bellman_optimality, compute_occupancy, expected_return, greedy_policy, optimal_q,
    telescoping_residual, weighted_bellman_error_sq,
};
use brl_core::rng::{seeded, SeededRng};
use brl_core::solvers::{fqi, mabo, msbo, LossSource};
use brl_core::{
    DataDistribution, DeterministicPolicy, LinearQClass, QClass, QFunction, SpanCoefficients,
    Table, TabularMdp, WClass, WeightFunction,
};
use rand::Rng;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    All,
    Telescoping,
    Bounds,
    Counterexamples,
    Lowrank,
    Span,
    Rates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub check_name: String,
    pub status: Status,
    pub measured: f64,
    pub threshold: f64,
}

impl Check {
    /// Passes when `measured <= threshold`.
    fn at_most(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self::new(name, measured, threshold, measured <= threshold)
    }

    /// Passes when `measured >= threshold`.
    fn at_least(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self::new(name, measured, threshold, measured >= threshold)
    }

    fn new(name: impl Into<String>, measured: f64, threshold: f64, pass: bool) -> Self {
        Self {
            check_name: name.into(),
            status: if pass { Status::Pass } else { Status::Fail },
            measured,
            threshold,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

type Outcome = brl_core::Result<Vec<Check>>;

pub fn run_suite(suite: Suite, seed: u64) -> Outcome {
    match suite {
        Suite::All => {
            let mut checks = Vec::new();
            for s in [
                Suite::Telescoping,
                Suite::Bounds,
                Suite::Counterexamples,
                Suite::Lowrank,
                Suite::Span,
                Suite::Rates,
            ] {
                checks.extend(run_suite(s, seed)?);
            }
            Ok(checks)
        }
        Suite::Telescoping => telescoping(seed),
        Suite::Bounds => bounds(seed),
        Suite::Counterexamples => counterexamples(),
        Suite::Lowrank => lowrank(seed),
        Suite::Span => span(seed),
        Suite::Rates => rates(seed),
    }
}

const GAMMAS: [f64; 3] = [0.5, 0.9, 0.99];
const SLACK: f64 = 1e-9;

fn random_policy(r: &mut SeededRng, num_states: usize, num_actions: usize) -> DeterministicPolicy {
    let actions = (0..num_states).map(|_| r.random_range(0..num_actions)).collect();
    DeterministicPolicy::new(actions, num_actions).expect("actions drawn in range")
}

fn random_table(r: &mut SeededRng, num_states: usize, num_actions: usize, hi: f64) -> Table {
    Table::from_fn(num_states, num_actions, |_, _| hi * r.random::<f64>())
}

fn avg_bellman_error(mdp: &TabularMdp, pi: &DeterministicPolicy, q: &Table) -> brl_core::Result<f64> {
    let d = compute_occupancy(mdp, pi)?;
    let tq = bellman_optimality(mdp, q);
    Ok(d.expectation(&tq.zip_map(q, |t, v| t - v)))
}

fn telescoping(seed: u64) -> Outcome {
    let mut r = seeded(seed);
    let mut residual = 0.0f64;
    let mut difference = f64::NEG_INFINITY;
    for i in 0..100 {
        let gamma = GAMMAS[i % 3];
        let s = r.random_range(2..=10);
        let a = r.random_range(1..=4);
        let mdp = random_mdp(s, a, gamma, r.random())?;
        let pi = random_policy(&mut r, s, a);
        let q = random_table(&mut r, s, a, mdp.v_max());
        residual = residual.max(telescoping_residual(&mdp, &pi, &q)?.abs());

        let pi_q = greedy_policy(&q);
        let lhs = expected_return(&mdp, &pi)? - expected_return(&mdp, &pi_q)?;
        let rhs = (avg_bellman_error(&mdp, &pi, &q)? - avg_bellman_error(&mdp, &pi_q, &q)?)
            / (1.0 - gamma);
        difference = difference.max(lhs - rhs);
    }
    Ok(vec![
        Check::at_most("telescoping_residual_max_abs", residual, 1e-9),
        Check::at_most("performance_difference_max_violation", difference, SLACK),
    ])
}

fn bound_instance(r: &mut SeededRng) -> brl_core::Result<(TabularMdp, DataDistribution, QClass)> {
    let s = r.random_range(3..=6);
    let a = r.random_range(2..=3);
    let mdp = random_mdp(s, a, 0.9, r.random())?;
    let mu = DataDistribution::random(s, a, 0.02, r.random());
    let include_optimal = r.random::<bool>();
    let q = perturbed_class(&mdp, 8, 1.5, include_optimal, r.random())?;
    Ok((mdp, mu, q))
}

fn bounds(seed: u64) -> Outcome {
    let mut r = seeded(seed);
    let runs = 20;
    let mut bound_holds = 0;
    let mut population_holds = 0;
    let mut msbo_violation = f64::NEG_INFINITY;
    let mut avg_violation = f64::NEG_INFINITY;
    let mut coef_violation = f64::NEG_INFINITY;
    for _ in 0..runs {
        let (mdp, mu, q_class) = bound_instance(&mut r)?;
        let w_class = importance_weight_class(&mdp, &mu, &q_class.policies())?;
        let data = generate_batch(&mdp, &mu, 2000, r.random())?;
        let out = mabo(LossSource::empirical(&data, mdp.gamma()), &q_class, &w_class)?;
        let report = bound_report(&ReportRequest {
            mdp: &mdp,
            mu: &mu,
            q_class: &q_class,
            f_class: None,
            w_class: &w_class,
            chosen_q: &out.chosen_q,
            n: Some(2000),
            delta: 0.05,
            t_max: 20,
        })?;
        if report.suboptimality <= report.thm5_rhs {
            bound_holds += 1;
        }
        coef_violation = coef_violation.max(report.c_eff - report.c_inf);

        let population = LossSource::population(&mdp, &mu);
        let pop = mabo(population, &q_class, &w_class)?;
        let sub = suboptimality(&mdp, &q_class, &pop.chosen_q)?;
        let rhs = 2.0 * (eps_q_avg(&mdp, &mu, &q_class, &w_class) + eps_w(&mdp, &mu, &q_class, &w_class)?)
            / (1.0 - mdp.gamma());
        if sub <= rhs + SLACK {
            population_holds += 1;
        }

        let ms = msbo(population, &q_class, &q_class)?;
        let sub = suboptimality(&mdp, &q_class, &ms.chosen_q)?;
        let ceff = c_eff(&mdp, &mu, &q_class)?;
        let rhs = 2.0 * ceff.sqrt() * bellman_residual_sq(&mdp, &mu, &ms.chosen_q).sqrt()
            / (1.0 - mdp.gamma());
        msbo_violation = msbo_violation.max(sub - rhs);

        let lhs = eps_q_avg(&mdp, &mu, &q_class, &w_class);
        let rhs = (ceff * eps_q_sq(&mdp, &mu, &q_class)).sqrt();
        avg_violation = avg_violation.max(lhs - rhs);
    }
    let runs = runs as f64;
    Ok(vec![
        Check::at_least("mabo_empirical_bound_fraction", bound_holds as f64 / runs, 0.96 - 1e-12),
        Check::at_least("mabo_population_bound_fraction", population_holds as f64 / runs, 1.0),
        Check::at_most("msbo_population_bound_max_violation", msbo_violation, SLACK),
        Check::at_most("average_vs_squared_error_max_violation", avg_violation, 1e-12),
        Check::at_most("c_eff_minus_c_inf_max", coef_violation, 1e-12),
    ])
}

/// Largest relative gap between computed and closed-form per-step
/// coefficients on the chain, plus `max(|c_eff - 1|, |c_inf - 1|)`.
pub fn chain_errors(length: usize, gamma: f64) -> brl_core::Result<(Vec<(f64, f64)>, f64, f64)> {
    let (mdp, mu) = chain_mdp(length, gamma)?;
    let class = QClass::new(vec![QFunction(Table::zeros(length + 1, 1))], 0.0)?;
    let per_step = per_step_coefficients(&mdp, &mu, &class.policies(), length)?;
    let rows = per_step
        .iter()
        .enumerate()
        .map(|(t, c)| (*c, chain_per_step_formula(length, gamma, t)))
        .collect();
    Ok((rows, c_eff(&mdp, &mu, &class)?, c_inf(&mdp, &mu, &class)?))
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

pub const COUNTEREXAMPLE_SEED: u64 = 2;
pub const GRID_STEP: f64 = 0.5;

/// Per-iteration FQI trace on the two-state instance: `(chosen index, Q, squared Bellman error)`.
pub fn fqi_gap_trace(gamma: f64, iterations: usize, seed: u64) -> brl_core::Result<Vec<(usize, QFunction, f64)>> {
    let (mdp, data) = two_state_counterexample(COUNTEREXAMPLE_TUPLES, gamma)?;
    let class = counterexample_grid(&mdp, GRID_STEP, Some(seed))?;
    let mut point_mass = Table::zeros(2, 1);
    point_mass.set(0, 0, 1.0);
    let run = fqi(LossSource::empirical(&data, gamma), &class, iterations, 0)?;
    Ok(run
        .trace
        .unwrap_or_default()
        .iter()
        .map(|step| {
            let q = class.get(step.chosen_index).clone();
            let err = weighted_bellman_error_sq(&mdp, &point_mass, &q);
            (step.chosen_index, q, err)
        })
        .collect())
}

fn counterexamples() -> Outcome {
    let mut checks = Vec::new();
    for (length, gamma) in [(2usize, 0.5), (5, 0.9), (50, 0.9)] {
        let (rows, ceff, cinf) = chain_errors(length, gamma)?;
        let worst = rows.iter().map(|(a, b)| relative_gap(*a, *b)).fold(0.0, f64::max);
        checks.push(Check::at_most(format!("chain_L{length}_per_step_rel_error"), worst, 1e-12));
        checks.push(Check::at_most(
            format!("chain_L{length}_c_eff_c_inf_deviation"),
            (ceff - 1.0).abs().max((cinf - 1.0).abs()),
            1e-12,
        ));
        if gamma.powi(length as i32) <= 1.0 - gamma {
            let (mdp, mu) = chain_mdp(length, gamma)?;
            let policies = vec![DeterministicPolicy::constant(length + 1, 0)];
            let t_max = length + 10;
            let per_step = per_step_coefficients(&mdp, &mu, &policies, t_max)?;
            let combined = per_step_combined(&per_step, &default_beta(gamma, t_max))?;
            checks.push(Check::at_least(
                format!("chain_L{length}_combined_coefficient"),
                combined,
                1.0 / (1.0 - gamma) * (1.0 - 1e-12),
            ));
        }
    }

    let gamma = 0.9;
    let trace = fqi_gap_trace(gamma, 20, COUNTEREXAMPLE_SEED)?;
    let min_error = trace.iter().map(|t| t.2).fold(f64::INFINITY, f64::min);
    checks.push(Check::at_least("fqi_min_bellman_error", min_error, 0.01));

    let (mdp, data) = two_state_counterexample(COUNTEREXAMPLE_TUPLES, gamma)?;
    let class = counterexample_grid(&mdp, GRID_STEP, Some(COUNTEREXAMPLE_SEED))?;
    let f_class = counterexample_grid(&mdp, GRID_STEP, None)?;
    let source = LossSource::empirical(&data, gamma);
    let gap = |q: &QFunction| (q.get(0, 0) - gamma * q.get(1, 0)).abs();
    let ms = msbo(source, &class, &f_class)?;
    checks.push(Check::at_most("msbo_consistency_gap", gap(&ms.chosen_q), GRID_STEP));
    let w_class = indicator_w_class(2, 1, None, false)?;
    let ma = mabo(source, &class, &w_class)?;
    checks.push(Check::at_most("mabo_consistency_gap", gap(&ma.chosen_q), GRID_STEP));
    Ok(checks)
}

fn lowrank(seed: u64) -> Outcome {
    let mut r = seeded(seed);
    let mut occ_worst = 0.0f64;
    let mut feat_worst = 0.0f64;
    let mut size1_excess = f64::NEG_INFINITY;
    let mut size2_excess = f64::NEG_INFINITY;
    for k in 1..=3usize {
        for _ in 0..3 {
            let (spec, mdp) = random_lowrank_mdp(6, 3, k, 0.9, r.random())?;
            let mu = DataDistribution::random(6, 3, 0.01, r.random());
            let q_class = perturbed_class(&mdp, 8, 3.0, true, r.random())?;
            let (w1, _) = build_w_claim1(&mdp, &mu, &q_class)?;
            occ_worst = occ_worst.max(eps_w(&mdp, &mu, &q_class, &w1)?);
            size1_excess = size1_excess
                .max(w1.len() as f64 - ((k + 1) * q_class.policies().len()) as f64);

            let thetas: Vec<Vec<f64>> = (0..8)
                .map(|_| (0..k).map(|_| mdp.v_max() * r.random::<f64>()).collect())
                .collect();
            let lin = LinearQClass::new(&spec.left_factor, mdp.reward(), thetas, 0.9, mdp.v_max())?;
            let lin_q = linear_q_members(&lin, &mdp)?;
            let (w2, _) = build_w_claim2(&spec, &mdp, &mu, &lin)?;
            feat_worst = feat_worst.max(eps_w(&mdp, &mu, &lin_q, &w2)?);
            size2_excess = size2_excess.max(w2.len() as f64 - (k + 1) as f64);
        }
    }
    let (bandit, policies) = contextual_bandit(6, 0.9)?;
    let stack = policies
        .iter()
        .map(|p| Ok(compute_occupancy(&bandit, p)?.dist.as_slice().to_vec()))
        .collect::<brl_core::Result<Vec<_>>>()?;
    let occ_rank = numerical_rank(&stack, RANK_TOL) as f64;
    let p_rank = numerical_rank(&bandit.transition_matrix().to_rows(), RANK_TOL) as f64;
    Ok(vec![
        Check::at_most("occupancy_spanner_eps_w_max", occ_worst, 1e-8),
        Check::at_most("occupancy_spanner_size_excess", size1_excess, 0.0),
        Check::at_most("feature_spanner_eps_w_max", feat_worst, 1e-8),
        Check::at_most("feature_spanner_size_excess", size2_excess, 0.0),
        Check::at_least("bandit_occupancy_rank", occ_rank, 5.0),
        Check::at_most("bandit_transition_rank", p_rank, 1.0),
    ])
}

fn l1_ball_sample(r: &mut SeededRng, m: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..=m).map(|_| -(1.0 - r.random::<f64>()).ln()).collect();
    let total: f64 = e.iter().sum();
    e[..m]
        .iter()
        .map(|x| if r.random::<bool>() { x / total } else { -x / total })
        .collect()
}

fn span(seed: u64) -> Outcome {
    let mut r = seeded(seed);
    let mut worst_excess = f64::NEG_INFINITY;
    let mut vertex_gap = 0.0f64;
    for _ in 0..100 {
        let (s, a) = (r.random_range(1..=5), r.random_range(1..=3));
        let m = r.random_range(1..=6);
        let members = (0..m)
            .map(|_| WeightFunction(Table::from_fn(s, a, |_, _| 10.0 * r.random::<f64>() - 5.0)))
            .collect();
        let w_class = WClass::new(members)?;
        let c = Table::from_fn(s, a, |_, _| 2.0 * r.random::<f64>() - 1.0);
        let (bound, best) = span_max_abs(&w_class, &c);
        for _ in 0..10_000 {
            let alpha = SpanCoefficients::new(l1_ball_sample(&mut r, m))?;
            let w = span_evaluate(&w_class, &alpha)?;
            worst_excess = worst_excess.max((c.inner(&w).abs() - bound) / bound.max(1.0));
        }
        let vertex = span_evaluate(&w_class, &SpanCoefficients::vertex(m, best))?;
        vertex_gap = vertex_gap.max((c.inner(&vertex).abs() - bound).abs());
    }
    Ok(vec![
        Check::at_most("span_sample_relative_excess", worst_excess, 1e-12),
        Check::at_most("span_vertex_attainment_gap", vertex_gap, 0.0),
    ])
}

/// Medians of MABO suboptimality at each sample size on the fixed realizable
/// noisy-bandit instance.
pub fn rate_medians(seed: u64, sizes: &[usize], runs: u64) -> brl_core::Result<Vec<f64>> {
    let gaps = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4];
    let gamma = 0.9;
    let mdp = noisy_bandit(&gaps, gamma)?;
    let q_star = optimal_q(&mdp)?;
    let mut direction = Table::zeros(mdp.num_states(), 2);
    for i in 0..gaps.len() {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        direction.set(i, 0, -sign);
        direction.set(i, 1, sign);
    }
    let q_class = shift_class(&q_star, &direction, 0.01, 1.0, mdp.v_max())?;
    let mu = DataDistribution::uniform(mdp.num_states(), 2);
    let w_class = indicator_w_class(mdp.num_states(), 2, Some(&mu), true)?;
    sizes
        .iter()
        .map(|&n| {
            let mut subs = (0..runs)
                .map(|i| {
                    let data = generate_batch(&mdp, &mu, n, seed.wrapping_mul(runs).wrapping_add(i))?;
                    let out = mabo(LossSource::empirical(&data, gamma), &q_class, &w_class)?;
                    suboptimality(&mdp, &q_class, &out.chosen_q)
                })
                .collect::<brl_core::Result<Vec<f64>>>()?;
            subs.sort_by(f64::total_cmp);
            let mid = subs.len() / 2;
            Ok(if subs.len() % 2 == 0 {
                0.5 * (subs[mid - 1] + subs[mid])
            } else {
                subs[mid]
            })
        })
        .collect()
}

fn rates(seed: u64) -> Outcome {
    let medians = rate_medians(seed, &[500, 2000, 8000], 50)?;
    let increase = medians
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let ratio = if medians[2] > 0.0 {
        medians[0] / medians[2]
    } else if medians[0] > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(vec![
        Check::at_most("rate_median_max_increase", increase, 0.0),
        Check::at_least("rate_median_ratio_500_to_8000", ratio, 2.0),
    ])
}
