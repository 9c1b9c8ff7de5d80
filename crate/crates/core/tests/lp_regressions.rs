//! Degenerate programs that once tripped the simplex.

use brl_core::lp::{solve, LinearProgram};

/// The eps_W program for a target that equals one weight member exactly:
/// optimum 0 with massive degeneracy in phase one.
#[test]
fn target_inside_the_weight_class() {
    let text = include_str!("data/degenerate_eps_w.json");
    let (a, b): (Vec<Vec<f64>>, Vec<f64>) = serde_json::from_str(text).unwrap();
    let m = a[0].len();
    let width = 2 * m + 1;
    let mut constraints = Vec::new();
    let mut rhs = Vec::new();
    for (row, &bq) in a.iter().zip(&b) {
        let mut lo = vec![0.0; width];
        let mut hi = vec![0.0; width];
        for i in 0..m {
            lo[i] = -row[i];
            lo[m + i] = row[i];
            hi[i] = row[i];
            hi[m + i] = -row[i];
        }
        lo[2 * m] = -1.0;
        hi[2 * m] = -1.0;
        constraints.push(lo);
        rhs.push(-bq);
        constraints.push(hi);
        rhs.push(bq);
    }
    let mut budget = vec![1.0; width];
    budget[2 * m] = 0.0;
    constraints.push(budget);
    rhs.push(1.0);
    let mut objective = vec![0.0; width];
    objective[2 * m] = 1.0;
    let sol = solve(&LinearProgram {
        objective,
        constraints,
        rhs,
    })
    .unwrap();
    assert!(sol.objective.abs() < 1e-9);
    assert!(sol.duality_gap < 1e-9);
    assert!(sol.dual_infeasibility < 1e-9);
}
