//! Closed-form evaluation of the quantities entering the MSBO and MABO
//! performance bounds: concentrability coefficients (occupancy-based and
//! per-step), approximation errors, the statistical term, the bound
//! right-hand sides, and the measured suboptimality they control.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classes::{QClass, SpanCoefficients, WClass};
use crate::data::{bellman_functional, importance_weight, DataDistribution};
use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram};
use crate::mdp::{
    bellman_optimality, compute_step_marginal, expected_return, greedy_policy, DeterministicPolicy,
    TabularMdp,
};
use crate::table::{Table, WeightFunction};

/// Required optimality certificate for the `eps_W` linear programs.
pub const LP_GAP_TOL: f64 = 1e-9;

fn policy_weights(
    mdp: &TabularMdp,
    mu: &DataDistribution,
    policies: &[DeterministicPolicy],
) -> Result<Vec<WeightFunction>> {
    policies
        .par_iter()
        .map(|p| importance_weight(mdp, p, mu))
        .collect()
}

/// `(C_eff, C_inf)` over an explicit policy list: the largest
/// `||w_{d_pi/mu}||^2_{2,mu}` and `||w_{d_pi/mu}||_inf`.
pub fn concentrability(
    mdp: &TabularMdp,
    mu: &DataDistribution,
    policies: &[DeterministicPolicy],
) -> Result<(f64, f64)> {
    let weights = policy_weights(mdp, mu, policies)?;
    let ceff = weights.iter().map(|w| mu.sq_norm(w)).fold(0.0, f64::max);
    let cinf = weights.iter().map(|w| w.max_abs()).fold(0.0, f64::max);
    Ok((ceff, cinf))
}

/// `C_eff = max_{pi in Pi_Q} ||w_{d_pi/mu}||^2_{2,mu}`.
pub fn c_eff(mdp: &TabularMdp, mu: &DataDistribution, q_class: &QClass) -> Result<f64> {
    Ok(concentrability(mdp, mu, &q_class.policies())?.0)
}

/// `C_inf = max_{pi in Pi_Q} ||w_{d_pi/mu}||_inf`.
pub fn c_inf(mdp: &TabularMdp, mu: &DataDistribution, q_class: &QClass) -> Result<f64> {
    Ok(concentrability(mdp, mu, &q_class.policies())?.1)
}

/// `C_t = max_pi ||d_{pi,t} / mu||_inf` for `t = 0..=t_max`.
pub fn per_step_coefficients(
    mdp: &TabularMdp,
    mu: &DataDistribution,
    policies: &[DeterministicPolicy],
    t_max: usize,
) -> Result<Vec<f64>> {
    if policies.is_empty() {
        return Err(Error::InvalidArgument("no policies supplied".into()));
    }
    (0..=t_max)
        .map(|t| {
            let mut best = 0.0f64;
            for p in policies {
                let d = compute_step_marginal(mdp, p, t)?;
                let ratio = d.dist.zip_map(mu.table(), |x, m| x / m);
                best = best.max(ratio.max_abs());
            }
            Ok(best)
        })
        .collect()
}

/// `beta(t) = (1 - gamma) gamma^t` for `t = 0..=t_max`, renormalized to sum to one.
pub fn default_beta(gamma: f64, t_max: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..=t_max)
        .map(|t| (1.0 - gamma) * gamma.powi(t as i32))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|b| b / total).collect()
}

/// `C_ps = sum_t beta(t) C_t`, with `beta` renormalized over the supplied horizon.
pub fn per_step_combined(per_step: &[f64], beta: &[f64]) -> Result<f64> {
    if per_step.len() != beta.len() {
        return Err(Error::Shape {
            expected: format!("{} weights", per_step.len()),
            actual: format!("{}", beta.len()),
        });
    }
    if let Some(b) = beta.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
        return Err(Error::InvalidArgument(format!("negative or non-finite weight {b}")));
    }
    let total: f64 = beta.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("weights sum to zero".into()));
    }
    Ok(per_step.iter().zip(beta).map(|(c, b)| c * b).sum::<f64>() / total)
}

/// `(C_eff,W, C_inf,W) = (max_w ||w||^2_{2,mu}, max_w ||w||_inf)`.
pub fn c_w_coefficients(w_class: &WClass, mu: &DataDistribution) -> (f64, f64) {
    let ceff = w_class
        .members()
        .iter()
        .map(|w| mu.sq_norm(w))
        .fold(0.0, f64::max);
    let cinf = w_class
        .members()
        .iter()
        .map(|w| w.max_abs())
        .fold(0.0, f64::max);
    (ceff, cinf)
}

/// `||q - Tq||^2_{2,mu}`.
pub fn bellman_residual_sq(mdp: &TabularMdp, mu: &DataDistribution, q: &Table) -> f64 {
    let tq = bellman_optimality(mdp, q);
    mu.sq_norm(&q.zip_map(&tq, |a, b| a - b))
}

/// `min_Q ||Q - TQ||^2_{2,mu}`.
pub fn eps_q_sq(mdp: &TabularMdp, mu: &DataDistribution, q_class: &QClass) -> f64 {
    q_class
        .members()
        .par_iter()
        .map(|q| bellman_residual_sq(mdp, mu, q))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// `max_Q min_f ||f - TQ||^2_{2,mu}`.
pub fn eps_qf_sq(
    mdp: &TabularMdp,
    mu: &DataDistribution,
    q_class: &QClass,
    f_class: &QClass,
) -> f64 {
    q_class
        .members()
        .par_iter()
        .map(|q| {
            let tq = bellman_optimality(mdp, q);
            f_class
                .members()
                .iter()
                .map(|f| mu.sq_norm(&f.zip_map(&tq, |a, b| a - b)))
                .fold(f64::INFINITY, f64::min)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max)
}

/// `min_Q max_w |E_mu[w (TQ - Q)]|`.
pub fn eps_q_avg(
    mdp: &TabularMdp,
    mu: &DataDistribution,
    q_class: &QClass,
    w_class: &WClass,
) -> f64 {
    q_class
        .members()
        .par_iter()
        .map(|q| {
            let c = bellman_functional(mdp, mu, q);
            w_class
                .members()
                .iter()
                .map(|w| c.inner(w).abs())
                .fold(0.0, f64::max)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Solution of the `eps_W` program for one policy.
#[derive(Debug, Clone)]
pub struct EpsWSolution {
    pub value: f64,
    pub alpha: SpanCoefficients,
    pub duality_gap: f64,
}

/// `inf_{w in span(W)} max_Q |E_mu[(w_pi - w)(TQ - Q)]|` for the given
/// policy, as a linear program over `alpha = alpha+ - alpha-` with
/// `sum alpha+ + sum alpha- <= 1`.
///
/// The reported value is the objective re-evaluated at the returned `alpha`.
pub fn eps_w_lp(
    mdp: &TabularMdp,
    mu: &DataDistribution,
    q_class: &QClass,
    w_class: &WClass,
    policy: &DeterministicPolicy,
) -> Result<EpsWSolution> {
    let target = importance_weight(mdp, policy, mu)?;
    let functionals: Vec<Table> = q_class
        .members()
        .iter()
        .map(|q| bellman_functional(mdp, mu, q))
        .collect();
    eps_w_from_functionals(&functionals, w_class, &target)
}

fn eps_w_from_functionals(
    functionals: &[Table],
    w_class: &WClass,
    target: &Table,
) -> Result<EpsWSolution> {
    let m = w_class.len();
    let b: Vec<f64> = functionals.iter().map(|c| c.inner(target)).collect();
    let a: Vec<Vec<f64>> = functionals
        .iter()
        .map(|c| w_class.members().iter().map(|w| c.inner(w)).collect())
        .collect();

    // variables: alpha+ (m), alpha- (m), t
    let width = 2 * m + 1;
    let mut objective = vec![0.0; width];
    objective[2 * m] = 1.0;
    let mut constraints = Vec::with_capacity(2 * functionals.len() + 1);
    let mut rhs = Vec::with_capacity(2 * functionals.len() + 1);
    for (row, &bq) in a.iter().zip(&b) {
        // b - a.(alpha+ - alpha-) <= t
        let mut lo = vec![0.0; width];
        // a.(alpha+ - alpha-) - b <= t
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

    let sol = lp::solve(&LinearProgram {
        objective,
        constraints,
        rhs,
    })?;
    if sol.duality_gap > LP_GAP_TOL || sol.dual_infeasibility > LP_GAP_TOL {
        return Err(Error::Lp(format!(
            "optimality not certified: duality gap {:e}, dual infeasibility {:e}",
            sol.duality_gap, sol.dual_infeasibility
        )));
    }
    let mut alpha: Vec<f64> = (0..m).map(|i| sol.x[i] - sol.x[m + i]).collect();
    let l1: f64 = alpha.iter().map(|v| v.abs()).sum();
    if l1 > 1.0 {
        for v in &mut alpha {
            *v /= l1;
        }
    }
    let value = a
        .iter()
        .zip(&b)
        .map(|(row, bq)| (bq - row.iter().zip(&alpha).map(|(x, y)| x * y).sum::<f64>()).abs())
        .fold(0.0, f64::max);
    Ok(EpsWSolution {
        value,
        alpha: SpanCoefficients::new(alpha)?,
        duality_gap: sol.duality_gap,
    })
}

/// `eps_W = max_{pi in Pi_Q} inf_{w in span(W)} max_Q |E_mu[(w_pi - w)(TQ - Q)]|`.
pub fn eps_w(
    mdp: &TabularMdp,
    mu: &DataDistribution,
    q_class: &QClass,
    w_class: &WClass,
) -> Result<f64> {
    let functionals: Vec<Table> = q_class
        .members()
        .iter()
        .map(|q| bellman_functional(mdp, mu, q))
        .collect();
    let targets = policy_weights(mdp, mu, &q_class.policies())?;
    let values = targets
        .par_iter()
        .map(|t| eps_w_from_functionals(&functionals, w_class, t).map(|s| s.value))
        .collect::<Result<Vec<_>>>()?;
    Ok(values.into_iter().fold(0.0, f64::max))
}

fn check_stat_args(n: usize, delta: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta {delta} not in (0, 1)")));
    }
    Ok(())
}

/// `2 V sqrt(2 C_eff,W ln(2|Q||W|/delta) / n) + 4 C_inf,W V ln(2|Q||W|/delta) / (3n)`.
pub fn eps_stat(
    c_eff_w: f64,
    c_inf_w: f64,
    v_max: f64,
    n: usize,
    delta: f64,
    q_size: usize,
    w_size: usize,
) -> Result<f64> {
    check_stat_args(n, delta)?;
    let n = n as f64;
    let log = (2.0 * q_size as f64 * w_size as f64 / delta).ln();
    Ok(2.0 * v_max * (2.0 * c_eff_w * log / n).sqrt() + 4.0 * c_inf_w * v_max * log / (3.0 * n))
}

/// High-probability bound on `||Q_hat - T Q_hat||^2_{2,mu}` for the MSBO output.
pub fn msbo_residual_bound_sq(
    v_max: f64,
    n: usize,
    delta: f64,
    q_size: usize,
    f_size: usize,
    eps_q_sq: f64,
    eps_qf_sq: f64,
) -> Result<f64> {
    check_stat_args(n, delta)?;
    let n = n as f64;
    let v2 = v_max * v_max;
    let (q, f) = (q_size as f64, f_size as f64);
    let lq = (2.0 * q / delta).ln();
    let lqf = (8.0 * q * f / delta).ln();
    let lf = (2.0 * f / delta).ln();
    let e2 = 43.0 * v2 * lqf / n + (239.0 * v2 * lqf / n * eps_qf_sq).sqrt() + eps_qf_sq;
    let e3 = eps_q_sq + (8.0 * v2 * lf / n * eps_q_sq).sqrt() + 4.0 * v2 * lq / (3.0 * n);
    Ok(16.0 * v2 * lq / (3.0 * n)
        + 2.0 * e2
        + e3
        + (8.0 * v2 * lq / n * (10.0 * v2 * lq / (3.0 * n) + 2.0 * e2 + e3)).sqrt())
}

/// Components required by the two bound right-hand sides. `n = None`
/// denotes population mode, where statistical terms vanish.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BoundInputs {
    pub gamma: Option<f64>,
    pub v_max: Option<f64>,
    pub c_eff: Option<f64>,
    pub eps_q_sq: Option<f64>,
    pub eps_qf_sq: Option<f64>,
    pub eps_q_avg: Option<f64>,
    pub eps_w: Option<f64>,
    pub eps_stat: Option<f64>,
    pub n: Option<usize>,
    pub delta: Option<f64>,
    pub q_size: Option<usize>,
    pub f_size: Option<usize>,
}

fn need<T: Copy>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::InvalidArgument(format!("missing bound component `{name}`")))
}

/// MSBO bound with explicit constants:
///
/// ```text
/// 2 sqrt(C)/(1-g) * [ sqrt(2 eQ) + sqrt(2 eQF)
///                   + sqrt(24 V^2 ln(2|Q|/d)/n) + sqrt(172 V^2 ln(8|Q||F|/d)/n)
///                   + (32 V^2 ln(2|Q|/d)/n * eQ)^(1/4) + (3824 V^2 ln(8|Q||F|/d)/n * eQF)^(1/4) ]
/// ```
pub fn thm3_rhs(inputs: &BoundInputs) -> Result<f64> {
    let gamma = need(inputs.gamma, "gamma")?;
    let c = need(inputs.c_eff, "c_eff")?;
    let eq = need(inputs.eps_q_sq, "eps_q_sq")?;
    let eqf = need(inputs.eps_qf_sq, "eps_qf_sq")?;
    let lead = 2.0 * c.sqrt() / (1.0 - gamma);
    let mut total = (2.0 * eq).sqrt() + (2.0 * eqf).sqrt();
    if let Some(n) = inputs.n {
        let delta = need(inputs.delta, "delta")?;
        check_stat_args(n, delta)?;
        let v2 = need(inputs.v_max, "v_max")?.powi(2);
        let q = need(inputs.q_size, "q_size")? as f64;
        let f = need(inputs.f_size, "f_size")? as f64;
        let n = n as f64;
        let lq = (2.0 * q / delta).ln();
        let lqf = (8.0 * q * f / delta).ln();
        total += (24.0 * v2 * lq / n).sqrt() + (172.0 * v2 * lqf / n).sqrt();
        total += (32.0 * v2 * lq / n * eq).powf(0.25) + (3824.0 * v2 * lqf / n * eqf).powf(0.25);
    }
    Ok(lead * total)
}

/// `2 (eps_Q + eps_W + eps_stat) / (1 - gamma)`.
pub fn thm5_rhs(eps_q_avg: f64, eps_w: f64, eps_stat: f64, gamma: f64) -> f64 {
    2.0 * (eps_q_avg + eps_w + eps_stat) / (1.0 - gamma)
}

/// Both right-hand sides from one set of components.
pub fn thm_rhs(inputs: &BoundInputs) -> Result<(f64, f64)> {
    let thm3 = thm3_rhs(inputs)?;
    let eps_stat = match inputs.n {
        Some(_) => need(inputs.eps_stat, "eps_stat")?,
        None => inputs.eps_stat.unwrap_or(0.0),
    };
    let thm5 = thm5_rhs(
        need(inputs.eps_q_avg, "eps_q_avg")?,
        need(inputs.eps_w, "eps_w")?,
        eps_stat,
        need(inputs.gamma, "gamma")?,
    );
    Ok((thm3, thm5))
}

/// `max_{pi in Pi_Q} J(pi) - J(pi_{chosen_q})`.
pub fn suboptimality(mdp: &TabularMdp, q_class: &QClass, chosen_q: &Table) -> Result<f64> {
    let returns = q_class
        .policies()
        .par_iter()
        .map(|p| expected_return(mdp, p))
        .collect::<Result<Vec<_>>>()?;
    let best = returns.into_iter().fold(f64::NEG_INFINITY, f64::max);
    let chosen = expected_return(mdp, &greedy_policy(chosen_q))?;
    Ok((best - chosen).max(0.0))
}

/// Every bound quantity for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub c_eff: f64,
    pub c_inf: f64,
    pub per_step: Vec<f64>,
    pub c_ps: f64,
    pub c_eff_w: f64,
    pub c_inf_w: f64,
    pub eps_q_sq: f64,
    pub eps_qf_sq: f64,
    pub eps_q_avg: f64,
    pub eps_w: f64,
    pub eps_stat: f64,
    pub thm3_rhs: f64,
    pub thm5_rhs: f64,
    pub delta: f64,
    pub n: Option<usize>,
    pub suboptimality: f64,
    /// `||Q_hat - T Q_hat||^2_{2,mu}` of the evaluated output.
    pub residual_sq: f64,
}

/// Inputs for [`bound_report`]. `f_class = None` reuses the Q-class as the
/// helper class; `n = None` is population mode.
#[derive(Debug, Clone, Copy)]
pub struct ReportRequest<'a> {
    pub mdp: &'a TabularMdp,
    pub mu: &'a DataDistribution,
    pub q_class: &'a QClass,
    pub f_class: Option<&'a QClass>,
    pub w_class: &'a WClass,
    pub chosen_q: &'a Table,
    pub n: Option<usize>,
    pub delta: f64,
    pub t_max: usize,
}

pub fn bound_report(req: &ReportRequest<'_>) -> Result<BoundReport> {
    let mdp = req.mdp;
    let mu = req.mu;
    let f_class = req.f_class.unwrap_or(req.q_class);
    let policies = req.q_class.policies();
    let (c_eff, c_inf) = concentrability(mdp, mu, &policies)?;
    let per_step = per_step_coefficients(mdp, mu, &policies, req.t_max)?;
    let c_ps = per_step_combined(&per_step, &default_beta(mdp.gamma(), req.t_max))?;
    let (c_eff_w, c_inf_w) = c_w_coefficients(req.w_class, mu);
    let eps_q_sq = eps_q_sq(mdp, mu, req.q_class);
    let eps_qf_sq = eps_qf_sq(mdp, mu, req.q_class, f_class);
    let eps_q_avg = eps_q_avg(mdp, mu, req.q_class, req.w_class);
    let eps_w = eps_w(mdp, mu, req.q_class, req.w_class)?;
    let eps_stat = match req.n {
        Some(n) => eps_stat(
            c_eff_w,
            c_inf_w,
            mdp.v_max(),
            n,
            req.delta,
            req.q_class.len(),
            req.w_class.len(),
        )?,
        None => 0.0,
    };
    let inputs = BoundInputs {
        gamma: Some(mdp.gamma()),
        v_max: Some(mdp.v_max()),
        c_eff: Some(c_eff),
        eps_q_sq: Some(eps_q_sq),
        eps_qf_sq: Some(eps_qf_sq),
        eps_q_avg: Some(eps_q_avg),
        eps_w: Some(eps_w),
        eps_stat: Some(eps_stat),
        n: req.n,
        delta: Some(req.delta),
        q_size: Some(req.q_class.len()),
        f_size: Some(f_class.len()),
    };
    let (thm3_rhs, thm5_rhs) = thm_rhs(&inputs)?;
    Ok(BoundReport {
        c_eff,
        c_inf,
        per_step,
        c_ps,
        c_eff_w,
        c_inf_w,
        eps_q_sq,
        eps_qf_sq,
        eps_q_avg,
        eps_w,
        eps_stat,
        thm3_rhs,
        thm5_rhs,
        delta: req.delta,
        n: req.n,
        suboptimality: suboptimality(mdp, req.q_class, req.chosen_q)?,
        residual_sq: bellman_residual_sq(mdp, mu, req.chosen_q),
    })
}

/// Round-trip-safe rendering with 17 significant digits.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

impl BoundReport {
    pub const CSV_FIELDS: [&'static str; 17] = [
        "c_eff",
        "c_inf",
        "per_step",
        "c_ps",
        "c_eff_w",
        "c_inf_w",
        "eps_q_sq",
        "eps_qf_sq",
        "eps_q_avg",
        "eps_w",
        "eps_stat",
        "thm3_rhs",
        "thm5_rhs",
        "delta",
        "n",
        "suboptimality",
        "residual_sq",
    ];

    /// Field values in [`Self::CSV_FIELDS`] order; `per_step` is `;`-joined
    /// and a population-mode `n` is empty.
    pub fn csv_values(&self) -> Vec<String> {
        let per_step = self
            .per_step
            .iter()
            .map(|c| format_f64(*c))
            .collect::<Vec<_>>()
            .join(";");
        vec![
            format_f64(self.c_eff),
            format_f64(self.c_inf),
            per_step,
            format_f64(self.c_ps),
            format_f64(self.c_eff_w),
            format_f64(self.c_inf_w),
            format_f64(self.eps_q_sq),
            format_f64(self.eps_qf_sq),
            format_f64(self.eps_q_avg),
            format_f64(self.eps_w),
            format_f64(self.eps_stat),
            format_f64(self.thm3_rhs),
            format_f64(self.thm5_rhs),
            format_f64(self.delta),
            self.n.map(|n| n.to_string()).unwrap_or_default(),
            format_f64(self.suboptimality),
            format_f64(self.residual_sq),
        ]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes a header and one row per report.
    pub fn write_csv<W: Write>(reports: &[BoundReport], w: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        writer.write_record(Self::CSV_FIELDS)?;
        for r in reports {
            writer.write_record(r.csv_values())?;
        }
        writer.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mabo_bound_worked_example() {
        assert_eq!(thm5_rhs(1.0, 2.0, 3.0, 0.5), 24.0);
    }

    #[test]
    fn eps_stat_scaling_and_domain() {
        let a = eps_stat(2.0, 0.0, 1.0, 100, 0.1, 3, 4).unwrap();
        let b = eps_stat(2.0, 0.0, 1.0, 400, 0.1, 3, 4).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
        assert!(eps_stat(1.0, 1.0, 1.0, 0, 0.1, 1, 1).is_err());
        assert!(eps_stat(1.0, 1.0, 1.0, 10, 1.0, 1, 1).is_err());
        assert!(eps_stat(1.0, 1.0, 1.0, 10, 0.0, 1, 1).is_err());
    }

    #[test]
    fn per_step_combined_rules() {
        assert!((per_step_combined(&[3.0; 4], &default_beta(0.7, 3)).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(per_step_combined(&[1.0, 5.0, 2.0], &[0.0, 1.0, 0.0]).unwrap(), 5.0);
        assert!(per_step_combined(&[1.0, 2.0], &[1.5, -0.5]).is_err());
    }

    #[test]
    fn missing_component_is_reported() {
        let err = thm_rhs(&BoundInputs::default()).unwrap_err();
        assert!(err.to_string().contains("gamma"));
    }

    #[test]
    fn population_limits_vanish() {
        let inputs = BoundInputs {
            gamma: Some(0.9),
            c_eff: Some(4.0),
            eps_q_sq: Some(0.0),
            eps_qf_sq: Some(0.0),
            eps_q_avg: Some(0.0),
            eps_w: Some(0.0),
            ..Default::default()
        };
        assert_eq!(thm_rhs(&inputs).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn csv_numbers_round_trip() {
        let x = 0.1 + 0.2;
        assert_eq!(format_f64(x).parse::<f64>().unwrap(), x);
    }
}
