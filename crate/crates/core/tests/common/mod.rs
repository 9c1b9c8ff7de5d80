#![allow(dead_code)]

use std::io::Write;

use brl_core::constructions::random_mdp;
use brl_core::{DeterministicPolicy, QFunction, Table, TabularMdp};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Writes past the test harness's output capture so result lines always
/// show up in the log.
pub fn emit(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

pub fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    emit(&format!("acceptance [{id:>2}] {status} {name}: {detail}"));
}

pub fn random_policy(r: &mut impl Rng, num_states: usize, num_actions: usize) -> DeterministicPolicy {
    DeterministicPolicy::new(
        (0..num_states).map(|_| r.random_range(0..num_actions)).collect(),
        num_actions,
    )
    .unwrap()
}

pub fn random_table(r: &mut impl Rng, num_states: usize, num_actions: usize, hi: f64) -> Table {
    Table::from_fn(num_states, num_actions, |_, _| hi * r.random::<f64>())
}

pub fn perturb(r: &mut impl Rng, q: &Table, noise: f64, v_max: f64) -> QFunction {
    QFunction(Table::from_fn(q.num_states(), q.num_actions(), |s, a| {
        (q.get(s, a) + noise * (2.0 * r.random::<f64>() - 1.0)).clamp(0.0, v_max)
    }))
}

/// Random model with `|S| <= max_s`, `|A| <= max_a`.
pub fn random_instance(seed: u64, max_s: usize, max_a: usize, gamma: f64) -> TabularMdp {
    let mut r = rng(seed ^ 0x9e37_79b9);
    let s = r.random_range(2..=max_s);
    let a = r.random_range(1..=max_a);
    random_mdp(s, a, gamma, seed).unwrap()
}
