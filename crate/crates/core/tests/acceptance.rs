//! End-to-end acceptance checks. Each test prints one PASS/FAIL line and
//! then asserts on the same verdict.

mod common;

use std::time::Instant;

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
    bellman_residual_sq, bound_report, c_eff, default_beta, eps_q_avg, eps_q_sq, eps_w,
    per_step_coefficients, per_step_combined, suboptimality, ReportRequest,
};
use brl_core::linalg::numerical_rank;
use brl_core::mdp::{
    bellman_optimality, compute_occupancy, expected_return, greedy_policy, optimal_q,
    telescoping_residual, weighted_bellman_error_sq,
};
use brl_core::solvers::{certainty_equivalence, fqi, mabo, mabo_objective, msbo, LossSource};
use brl_core::{
    DataDistribution, LinearQClass, QClass, QFunction, SpanCoefficients, Table, TabularMdp,
    WClass, WeightFunction,
};
use common::{perturb, random_instance, random_policy, random_table, rng, verdict};
use rand::Rng;

const IDENTITY_TOL: f64 = 1e-9;
const INEQUALITY_SLACK: f64 = 1e-9;
const CHAIN_REL_TOL: f64 = 1e-12;
const CE_OBJECTIVE_TOL: f64 = 1e-10;
const FQI_GAP_FLOOR: f64 = 0.01;
const GRID_STEP: f64 = 0.5;
const COUNTEREXAMPLE_SEED: u64 = 2;
const EPS_W_TOL: f64 = 1e-8;
const SPAN_TOL: f64 = 1e-12;
const GAMMAS: [f64; 3] = [0.5, 0.9, 0.99];

fn close_rel(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

/// Average Bellman error `E_d[TQ - Q]` under the occupancy of `pi`.
fn avg_bellman_error(mdp: &TabularMdp, pi: &brl_core::DeterministicPolicy, q: &Table) -> f64 {
    let d = compute_occupancy(mdp, pi).unwrap();
    let tq = bellman_optimality(mdp, q);
    d.expectation(&tq.zip_map(q, |t, v| t - v))
}

#[test]
fn criterion_01_telescoping_identity() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..100u64 {
        let gamma = GAMMAS[(i % 3) as usize];
        let mdp = random_instance(1000 + i, 10, 4, gamma);
        let mut r = rng(i);
        let pi = random_policy(&mut r, mdp.num_states(), mdp.num_actions());
        let q = random_table(&mut r, mdp.num_states(), mdp.num_actions(), mdp.v_max());
        worst = worst.max(telescoping_residual(&mdp, &pi, &q).unwrap().abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst < IDENTITY_TOL && elapsed < 5.0;
    verdict(
        1,
        "telescoping identity",
        pass,
        &format!("max |residual| = {worst:.3e} (< {IDENTITY_TOL:e}), {elapsed:.2}s (< 5s)"),
    );
    assert!(pass);
}

#[test]
fn criterion_02_performance_difference_inequalities() {
    let mut worst = f64::NEG_INFINITY;
    let mut checks = 0;
    for i in 0..100u64 {
        let gamma = GAMMAS[(i % 3) as usize];
        let mdp = random_instance(1000 + i, 10, 4, gamma);
        let h = 1.0 / (1.0 - gamma);
        let mut r = rng(5000 + i);
        let (s, a, v) = (mdp.num_states(), mdp.num_actions(), mdp.v_max());
        let q_star = optimal_q(&mdp).unwrap();
        // half the draws are near Q*, where the bounds are nearly tight
        let draw = |r: &mut rand_chacha::ChaCha8Rng, k: u64| -> Table {
            if k % 2 == 0 {
                random_table(r, s, a, v)
            } else {
                perturb(r, &q_star, 0.05 * v, v).into_table()
            }
        };
        let q = draw(&mut r, i);
        let f = draw(&mut r, i + 1);
        let pi = random_policy(&mut r, s, a);
        let pi_q = greedy_policy(&q);
        let pi_f = greedy_policy(&f);
        let j = |p: &brl_core::DeterministicPolicy| expected_return(&mdp, p).unwrap();

        // performance difference
        let lhs = j(&pi) - j(&pi_q);
        let rhs = h * (avg_bellman_error(&mdp, &pi, &q) - avg_bellman_error(&mdp, &pi_q, &q));
        worst = worst.max(lhs - rhs);
        checks += 1;

        // two-sided version
        let lhs = (j(&pi_f) - j(&pi_q)).abs();
        let b1 = h * (avg_bellman_error(&mdp, &pi_f, &q) - avg_bellman_error(&mdp, &pi_q, &q));
        let b2 = h * (avg_bellman_error(&mdp, &pi_q, &f) - avg_bellman_error(&mdp, &pi_f, &f));
        worst = worst.max(lhs - 2.0 * b1.max(b2));
        checks += 1;

        // loss relative to a class
        let members: Vec<QFunction> = (0..5).map(|k| QFunction(draw(&mut r, k))).collect();
        let class = QClass::new(members, v).unwrap();
        let policies = class.policies();
        let best = policies.iter().map(|p| j(p)).fold(f64::NEG_INFINITY, f64::max);
        for member in class.members() {
            let lhs = best - j(&greedy_policy(member));
            let rhs = 2.0 * h
                * policies
                    .iter()
                    .map(|p| avg_bellman_error(&mdp, p, member).abs())
                    .fold(0.0, f64::max);
            worst = worst.max(lhs - rhs);
            checks += 1;
        }
    }
    let pass = worst <= INEQUALITY_SLACK;
    verdict(
        2,
        "performance-difference inequalities",
        pass,
        &format!("{checks} checks, max (lhs - rhs) = {worst:.3e} (<= {INEQUALITY_SLACK:e})"),
    );
    assert!(pass);
}

#[test]
fn criterion_03_chain_per_step_coefficients() {
    let mut pass = true;
    let mut details = Vec::new();
    for (length, gamma) in [(2usize, 0.5), (5, 0.9), (50, 0.9)] {
        let (mdp, mu) = chain_mdp(length, gamma).unwrap();
        let q_class = QClass::new(vec![QFunction(Table::zeros(length + 1, 1))], 0.0).unwrap();
        let policies = q_class.policies();
        let t_max = length + 10;
        let computed = per_step_coefficients(&mdp, &mu, &policies, t_max).unwrap();
        let table_ok = computed
            .iter()
            .enumerate()
            .all(|(t, c)| close_rel(*c, chain_per_step_formula(length, gamma, t), CHAIN_REL_TOL));
        let ceff = c_eff(&mdp, &mu, &q_class).unwrap();
        let cinf = brl_core::diagnostics::c_inf(&mdp, &mu, &q_class).unwrap();
        let ones = (ceff - 1.0).abs() <= 1e-12 && (cinf - 1.0).abs() <= 1e-12;
        let mut dominance = "n/a".to_string();
        let mut dom_ok = true;
        if gamma.powi(length as i32) <= 1.0 - gamma {
            let floor = 1.0 / (1.0 - gamma);
            let mut r = rng(length as u64);
            let mut lowest = per_step_combined(&computed, &default_beta(gamma, t_max)).unwrap();
            for _ in 0..10 {
                let beta: Vec<f64> = (0..=t_max).map(|_| r.random::<f64>()).collect();
                lowest = lowest.min(per_step_combined(&computed, &beta).unwrap());
            }
            dom_ok = lowest >= floor * (1.0 - CHAIN_REL_TOL);
            dominance = format!("min C_ps {lowest:.4} >= {floor:.4}");
        }
        pass &= table_ok && ones && dom_ok;
        details.push(format!(
            "(L={length}, g={gamma}) table {} c_eff={ceff} c_inf={cinf} {dominance}",
            if table_ok { "ok" } else { "MISMATCH" }
        ));
    }
    verdict(3, "chain per-step vs occupancy coefficients", pass, &details.join("; "));
    assert!(pass);
}

#[test]
fn criterion_04_fqi_does_not_control_bellman_error() {
    let gamma = 0.9;
    let (mdp, data) = two_state_counterexample(COUNTEREXAMPLE_TUPLES, gamma).unwrap();
    let class = counterexample_grid(&mdp, GRID_STEP, Some(COUNTEREXAMPLE_SEED)).unwrap();
    // data only covers s_1, so the data distribution is a point mass there
    let mut data_dist = Table::zeros(2, 1);
    data_dist.set(0, 0, 1.0);

    let run = fqi(LossSource::empirical(&data, gamma), &class, 20, 0).unwrap();
    let trace = run.trace.unwrap();
    let errors: Vec<f64> = trace
        .iter()
        .map(|s| weighted_bellman_error_sq(&mdp, &data_dist, class.get(s.chosen_index)))
        .collect();
    let min_error = errors.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut prev = class.get(0).clone();
    let mut update_rule = true;
    for step in &trace {
        let q = class.get(step.chosen_index);
        update_rule &= (q.get(0, 0) - gamma * prev.get(1, 0)).abs() <= GRID_STEP / 2.0 + 1e-12;
        prev = q.clone();
    }

    let f_class = counterexample_grid(&mdp, GRID_STEP, None).unwrap();
    let ms = msbo(LossSource::empirical(&data, gamma), &class, &f_class).unwrap();
    let w_class = indicator_w_class(2, 1, None, false).unwrap();
    let ma = mabo(LossSource::empirical(&data, gamma), &class, &w_class).unwrap();
    let gap = |q: &QFunction| (q.get(0, 0) - gamma * q.get(1, 0)).abs();
    let (ms_gap, ma_gap) = (gap(&ms.chosen_q), gap(&ma.chosen_q));

    let pass = min_error >= FQI_GAP_FLOOR
        && update_rule
        && ms_gap <= GRID_STEP
        && ma_gap <= GRID_STEP;
    verdict(
        4,
        "FQI Bellman-error gap on the two-state instance",
        pass,
        &format!(
            "min_t ||Q_t - TQ_t||^2 = {min_error:.4} (>= {FQI_GAP_FLOOR}), update rule {}, \
             |Q(s1) - g Q(s2)|: msbo {ms_gap:.3}, mabo {ma_gap:.3} (<= {GRID_STEP})",
            if update_rule { "holds" } else { "VIOLATED" }
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_mabo_recovers_certainty_equivalence() {
    let mut worst_objective = 0.0f64;
    let mut selected = 0;
    for i in 0..20u64 {
        let mut r = rng(700 + i);
        let s = r.random_range(2..=5);
        let a = r.random_range(1..=3);
        let mdp = random_mdp(s, a, 0.9, 700 + i).unwrap();
        let mu = DataDistribution::random(s, a, 0.02, 900 + i);
        let mut seed = 0;
        let data = loop {
            let d = generate_batch(&mdp, &mu, 100 * s * a, 31 * i + seed).unwrap();
            if d.counts(s, a).as_slice().iter().all(|&c| c > 0.0) {
                break d;
            }
            seed += 1;
        };
        let ce = certainty_equivalence(&data, s, a, mdp.gamma()).unwrap();
        assert!(ce.unobserved.is_empty());
        let q_star = optimal_q(&mdp).unwrap();
        let mut members: Vec<QFunction> = (0..6)
            .map(|_| perturb(&mut r, &q_star, 0.5, mdp.v_max()))
            .collect();
        let at = r.random_range(0..=members.len());
        members.insert(at, QFunction(ce.q.map(|v| v.clamp(0.0, mdp.v_max()))));
        let class = QClass::new(members, mdp.v_max()).unwrap();
        let w_class = indicator_w_class(s, a, Some(&mu), true).unwrap();
        let source = LossSource::empirical(&data, mdp.gamma());
        let (objective, _) = mabo_objective(source, class.get(at), &w_class).unwrap();
        let result = mabo(source, &class, &w_class).unwrap();
        worst_objective = worst_objective.max(objective);
        if result.chosen_index == at {
            selected += 1;
        }
    }
    let pass = worst_objective <= CE_OBJECTIVE_TOL && selected == 20;
    verdict(
        5,
        "MABO with scaled indicators selects the certainty-equivalence solution",
        pass,
        &format!(
            "max objective at the CE member = {worst_objective:.3e} (<= {CE_OBJECTIVE_TOL:e}), \
             selected {selected}/20"
        ),
    );
    assert!(pass);
}

fn bound_instance(seed: u64) -> (TabularMdp, DataDistribution, QClass) {
    let mut r = rng(seed);
    let s = r.random_range(3..=6);
    let a = r.random_range(2..=3);
    let mdp = random_mdp(s, a, 0.9, seed).unwrap();
    let mu = DataDistribution::random(s, a, 0.02, seed + 1);
    let q = perturbed_class(&mdp, 8, 1.5, seed % 2 == 0, seed).unwrap();
    (mdp, mu, q)
}

#[test]
fn criterion_06_mabo_bound_validity() {
    let (n, delta) = (2000, 0.05);
    let mut empirical_ok = 0;
    let mut population_ok = 0;
    let mut tightest = f64::INFINITY;
    for i in 0..50u64 {
        let (mdp, mu, q_class) = bound_instance(3000 + i);
        let w_class = if i % 2 == 0 {
            importance_weight_class(&mdp, &mu, &q_class.policies()).unwrap()
        } else {
            indicator_w_class(mdp.num_states(), mdp.num_actions(), Some(&mu), true).unwrap()
        };
        let data = generate_batch(&mdp, &mu, n, 4000 + i).unwrap();
        let emp = mabo(LossSource::empirical(&data, mdp.gamma()), &q_class, &w_class).unwrap();
        let report = bound_report(&ReportRequest {
            mdp: &mdp,
            mu: &mu,
            q_class: &q_class,
            f_class: None,
            w_class: &w_class,
            chosen_q: &emp.chosen_q,
            n: Some(n),
            delta,
            t_max: 20,
        })
        .unwrap();
        assert_eq!(
            report.thm5_rhs,
            2.0 * (report.eps_q_avg + report.eps_w + report.eps_stat) / (1.0 - mdp.gamma())
        );
        if report.suboptimality <= report.thm5_rhs {
            empirical_ok += 1;
        }
        tightest = tightest.min(report.thm5_rhs - report.suboptimality);

        let pop = mabo(LossSource::population(&mdp, &mu), &q_class, &w_class).unwrap();
        let sub = suboptimality(&mdp, &q_class, &pop.chosen_q).unwrap();
        let eq = eps_q_avg(&mdp, &mu, &q_class, &w_class);
        let ew = eps_w(&mdp, &mu, &q_class, &w_class).unwrap();
        if sub <= 2.0 * (eq + ew) / (1.0 - mdp.gamma()) + INEQUALITY_SLACK {
            population_ok += 1;
        }
    }
    let pass = empirical_ok >= 48 && population_ok == 50;
    verdict(
        6,
        "MABO suboptimality bound",
        pass,
        &format!(
            "empirical {empirical_ok}/50 (>= 48, smallest margin {tightest:.3}), \
             population {population_ok}/50"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_msbo_core_inequality() {
    let mut ok = 0;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..50u64 {
        let (mdp, mu, q_class) = bound_instance(6000 + i);
        let out = msbo(LossSource::population(&mdp, &mu), &q_class, &q_class).unwrap();
        let sub = suboptimality(&mdp, &q_class, &out.chosen_q).unwrap();
        let ceff = c_eff(&mdp, &mu, &q_class).unwrap();
        let rhs = 2.0 * ceff.sqrt() * bellman_residual_sq(&mdp, &mu, &out.chosen_q).sqrt()
            / (1.0 - mdp.gamma());
        if sub <= rhs + INEQUALITY_SLACK {
            ok += 1;
        }
        worst = worst.max(sub - rhs);
    }
    let pass = ok == 50;
    verdict(
        7,
        "MSBO residual-based bound (population mode)",
        pass,
        &format!("{ok}/50 hold, max (lhs - rhs) = {worst:.3e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_08_mabo_rate() {
    let gaps = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4];
    let gamma = 0.9;
    let mdp = noisy_bandit(&gaps, gamma).unwrap();
    let q_star = optimal_q(&mdp).unwrap();
    let mut direction = Table::zeros(mdp.num_states(), 2);
    for i in 0..gaps.len() {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        direction.set(i, 0, -sign);
        direction.set(i, 1, sign);
    }
    let q_class = shift_class(&q_star, &direction, 0.01, 1.0, mdp.v_max()).unwrap();
    let mu = DataDistribution::uniform(mdp.num_states(), 2);
    let w_class = indicator_w_class(mdp.num_states(), 2, Some(&mu), true).unwrap();
    let mut medians = Vec::new();
    for n in [500usize, 2000, 8000] {
        let mut subs: Vec<f64> = (0..50u64)
            .map(|seed| {
                let data = generate_batch(&mdp, &mu, n, seed).unwrap();
                let out = mabo(LossSource::empirical(&data, gamma), &q_class, &w_class).unwrap();
                suboptimality(&mdp, &q_class, &out.chosen_q).unwrap()
            })
            .collect();
        subs.sort_by(f64::total_cmp);
        medians.push(0.5 * (subs[24] + subs[25]));
    }
    let monotone = medians.windows(2).all(|w| w[1] <= w[0]);
    let ratio = medians[0] / medians[2];
    let pass = monotone && medians[0] > 0.0 && ratio >= 2.0;
    verdict(
        8,
        "MABO suboptimality rate",
        pass,
        &format!(
            "medians at n=500/2000/8000: {:.4}/{:.4}/{:.4}, ratio {ratio:.2} (>= 2)",
            medians[0], medians[1], medians[2]
        ),
    );
    assert!(pass);
}

/// Uniform draw from the unit l1 ball in `m` dimensions.
fn l1_ball_sample(r: &mut impl Rng, m: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..=m).map(|_| -(1.0 - r.random::<f64>()).ln()).collect();
    let total: f64 = e.iter().sum();
    e[..m]
        .iter()
        .map(|x| {
            let sign = if r.random::<bool>() { 1.0 } else { -1.0 };
            sign * x / total
        })
        .collect()
}

#[test]
fn criterion_09_spanner_reconstruction() {
    let mut exceed = 0usize;
    let mut vertex_exact = 0usize;
    for i in 0..100u64 {
        let mut r = rng(8000 + i);
        let (s, a) = (r.random_range(1..=5), r.random_range(1..=3));
        let m = r.random_range(1..=6);
        let members: Vec<WeightFunction> = (0..m)
            .map(|_| WeightFunction(Table::from_fn(s, a, |_, _| 10.0 * r.random::<f64>() - 5.0)))
            .collect();
        let w_class = WClass::new(members).unwrap();
        let c = Table::from_fn(s, a, |_, _| 2.0 * r.random::<f64>() - 1.0);
        let (bound, best) = span_max_abs(&w_class, &c);
        let tol = SPAN_TOL * bound.max(1.0);
        for _ in 0..10_000 {
            let alpha = SpanCoefficients::new(l1_ball_sample(&mut r, m)).unwrap();
            let w = span_evaluate(&w_class, &alpha).unwrap();
            if c.inner(&w).abs() > bound + tol {
                exceed += 1;
            }
        }
        let vertex = span_evaluate(&w_class, &SpanCoefficients::vertex(m, best)).unwrap();
        if c.inner(&vertex).abs() == bound {
            vertex_exact += 1;
        }
    }
    let pass = exceed == 0 && vertex_exact == 100;
    verdict(
        9,
        "spanner reconstruction",
        pass,
        &format!("{exceed} of 10^6 samples exceed the vertex maximum; attained exactly {vertex_exact}/100"),
    );
    assert!(pass);
}

#[test]
fn criterion_10_low_rank_weight_classes() {
    let start = Instant::now();
    let mut occ = (0usize, 0usize, 0.0f64);
    let mut feat = (0usize, 0usize, 0.0f64);
    for k in 1..=3usize {
        for seed in 0..5u64 {
            let (spec, mdp) = random_lowrank_mdp(6, 3, k, 0.9, 100 * k as u64 + seed).unwrap();
            let mu = DataDistribution::random(6, 3, 0.01, 200 + seed);

            let q_class = perturbed_class(&mdp, 8, 3.0, true, seed).unwrap();
            let (w1, _) = build_w_claim1(&mdp, &mu, &q_class).unwrap();
            let e1 = eps_w(&mdp, &mu, &q_class, &w1).unwrap();
            occ.0 += 1;
            if e1 <= EPS_W_TOL && w1.len() <= (k + 1) * q_class.policies().len() {
                occ.1 += 1;
            }
            occ.2 = occ.2.max(e1);

            let mut r = rng(300 + seed);
            let thetas: Vec<Vec<f64>> = (0..8)
                .map(|_| (0..k).map(|_| mdp.v_max() * r.random::<f64>()).collect())
                .collect();
            let lin = LinearQClass::new(&spec.left_factor, mdp.reward(), thetas, 0.9, mdp.v_max())
                .unwrap();
            let lin_q = linear_q_members(&lin, &mdp).unwrap();
            let (w2, _) = build_w_claim2(&spec, &mdp, &mu, &lin).unwrap();
            let e2 = eps_w(&mdp, &mu, &lin_q, &w2).unwrap();
            feat.0 += 1;
            if e2 <= EPS_W_TOL && w2.len() <= k + 1 {
                feat.1 += 1;
            }
            feat.2 = feat.2.max(e2);
        }
    }
    let (bandit, policies) = contextual_bandit(6, 0.9).unwrap();
    let stack: Vec<Vec<f64>> = policies
        .iter()
        .map(|p| compute_occupancy(&bandit, p).unwrap().dist.as_slice().to_vec())
        .collect();
    let occ_rank = numerical_rank(&stack, RANK_TOL);
    let p_rank = numerical_rank(&bandit.transition_matrix().to_rows(), RANK_TOL);
    let elapsed = start.elapsed().as_secs_f64();
    let pass = occ.0 == occ.1
        && feat.0 == feat.1
        && occ_rank == 5
        && p_rank == 1
        && elapsed < 60.0;
    verdict(
        10,
        "low-rank weight-class constructions",
        pass,
        &format!(
            "occupancy spanner {}/{} (max eps_W {:.2e}), feature spanner {}/{} (max eps_W {:.2e}), \
             bandit occupancy rank {occ_rank} with transition rank {p_rank}, {elapsed:.2}s",
            occ.1, occ.0, occ.2, feat.1, feat.0, feat.2
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_11_average_vs_squared_approximation_error() {
    let mut ok = 0;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..50u64 {
        let (mdp, mu, q_class) = bound_instance(9000 + i);
        let w_class = importance_weight_class(&mdp, &mu, &q_class.policies()).unwrap();
        let lhs = eps_q_avg(&mdp, &mu, &q_class, &w_class);
        let rhs = (c_eff(&mdp, &mu, &q_class).unwrap() * eps_q_sq(&mdp, &mu, &q_class)).sqrt();
        if lhs <= rhs + 1e-12 {
            ok += 1;
        }
        worst = worst.max(lhs - rhs);
    }
    let pass = ok == 50;
    verdict(
        11,
        "average-error vs squared-error approximation",
        pass,
        &format!("{ok}/50 hold, max (lhs - rhs) = {worst:.3e}"),
    );
    assert!(pass);
}
