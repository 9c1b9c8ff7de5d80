//! Benchmark fixtures shared by the criterion targets.

use brl_core::classes::{importance_weight_class, perturbed_class};
use brl_core::constructions::random_mdp;
use brl_core::{DataDistribution, QClass, TabularMdp, WClass};

pub struct Fixture {
    pub mdp: TabularMdp,
    pub mu: DataDistribution,
    pub q_class: QClass,
    pub w_class: WClass,
}

/// Random model with a perturbed-`Q*` class and its importance-weight class.
pub fn fixture(num_states: usize, num_actions: usize, class_size: usize, seed: u64) -> Fixture {
    let mdp = random_mdp(num_states, num_actions, 0.9, seed).expect("valid sizes");
    let mu = DataDistribution::random(num_states, num_actions, 0.01, seed + 1);
    let q_class = perturbed_class(&mdp, class_size, 1.0, true, seed + 2).expect("nonempty class");
    let w_class =
        importance_weight_class(&mdp, &mu, &q_class.policies()).expect("fully supported mu");
    Fixture {
        mdp,
        mu,
        q_class,
        w_class,
    }
}
