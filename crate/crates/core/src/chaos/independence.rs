//! Conditional exchangeability and conditional independence given the common
//! noise, on terminal values of the first coordinate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ExperimentSettings;
use crate::error::{Error, Result};
use crate::integrator::{
    simulate_conditioned_particle, simulate_finite_system, simulate_reference, ParticleBias, REFERENCE_OFFSET,
};
use crate::model::CoefficientSet;
use crate::noise::common_base_field;
use crate::stats::{ks_two_sample, pearson, wilcoxon_signed_rank, Estimate, KsResult};
use crate::wasserstein::w2_sq_sorted_1d;

const LEVEL: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeabilityReport {
    pub n: usize,
    pub replications: usize,
    /// Two-sample KS of `X_T¹` against `X_T²` pooled over replications.
    pub ks: KsResult,
    /// Signed-rank test of `X_T¹ - X_T²` for symmetry about zero, i.e. of
    /// `(X_T¹, X_T²)` against `(X_T², X_T¹)`.
    pub swap: KsResult,
    pub pass: bool,
}

/// `R` independent systems of size `n`; particle indices 0 and 1 are compared.
/// `bias` injects an asymmetric drift as a negative control.
pub fn test_exchangeability(
    model: &CoefficientSet,
    n: usize,
    s: &ExperimentSettings,
    bias: Option<ParticleBias>,
) -> Result<ExchangeabilityReport> {
    if n < 2 {
        return Err(Error::config("exchangeability needs n >= 2"));
    }
    s.check_replications(2)?;
    let pairs: Vec<Result<(f64, f64)>> = (0..s.replications as u64)
        .into_par_iter()
        .map(|r| {
            let base = common_base_field(&s.seeds, r, s.horizon, &model.marks, model.intensity.bound())?;
            let cfg = crate::integrator::SimConfig { bias, ..s.sim(n, r) };
            let (traj, _) = simulate_finite_system(model, &cfg, &base)?;
            Ok((traj.terminal(0)[0], traj.terminal(1)[0]))
        })
        .collect();
    let pairs = pairs.into_iter().collect::<Result<Vec<_>>>()?;
    let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let diffs: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
    let ks = ks_two_sample(&a, &b);
    let swap = wilcoxon_signed_rank(&diffs);
    let pass = ks.p_value > LEVEL && swap.p_value > LEVEL;
    Ok(ExchangeabilityReport { n, replications: s.replications, ks, swap, pass })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceReport {
    pub common_draws: usize,
    pub inner: usize,
    /// Mean over common draws of the within-draw correlation of `(X¹, X²)`.
    pub conditional: Estimate,
    /// Mean over common draws of `(X¹ - M)(X² - M)` with `M` the grand mean;
    /// standard error clustered by common draw.
    pub unconditional: Estimate,
    /// Mean over common draws of `W₂²` between the inner laws of `X¹` and `X²`.
    pub half_sample_w2_sq: f64,
    pub conditional_pass: bool,
    pub unconditional_pass: bool,
    pub pass: bool,
}

/// For each of `R_common = s.replications` common draws, run a reference
/// population and `R_inner` pairs of conditioned particles (entities `2m`,
/// `2m + 1`) in its environment. PASS iff the conditional correlation is
/// within 3 s.e. of 0 and the unconditional covariance is positive at 3 s.e.
/// (`expect_common_correlation`) or within 3 s.e. of 0 (otherwise).
pub fn test_conditional_independence(
    model: &CoefficientSet,
    inner: usize,
    s: &ExperimentSettings,
    expect_common_correlation: bool,
) -> Result<IndependenceReport> {
    s.check_replications(2)?;
    if inner < 2 {
        return Err(Error::config("at least 2 inner pairs required"));
    }
    let draws: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..s.replications as u64)
        .into_par_iter()
        .map(|r| {
            let base = common_base_field(&s.seeds, r, s.horizon, &model.marks, model.intensity.bound())?;
            let cfg = s.sim(2 * inner, r);
            let proxy = simulate_reference(model, &cfg, s.n_ref.max(2 * inner), REFERENCE_OFFSET, &base)?;
            let mut x1 = Vec::with_capacity(inner);
            let mut x2 = Vec::with_capacity(inner);
            for m in 0..inner as u64 {
                x1.push(simulate_conditioned_particle(model, &proxy.path, 2 * m, &base, &cfg)?.terminal(0)[0]);
                x2.push(simulate_conditioned_particle(model, &proxy.path, 2 * m + 1, &base, &cfg)?.terminal(0)[0]);
            }
            Ok((x1, x2))
        })
        .collect();
    let draws = draws.into_iter().collect::<Result<Vec<_>>>()?;

    let corr: Vec<f64> = draws
        .iter()
        .map(|(a, b)| {
            let m = (a.iter().sum::<f64>() + b.iter().sum::<f64>()) / (2 * inner) as f64;
            let ca: Vec<f64> = a.iter().map(|v| v - m).collect();
            let cb: Vec<f64> = b.iter().map(|v| v - m).collect();
            let c = pearson(&ca, &cb);
            if c.is_finite() { c } else { 0.0 }
        })
        .collect();
    let total = (2 * inner * draws.len()) as f64;
    let grand = draws.iter().map(|(a, b)| a.iter().sum::<f64>() + b.iter().sum::<f64>()).sum::<f64>() / total;
    let cov: Vec<f64> = draws
        .iter()
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - grand) * (y - grand)).sum::<f64>() / inner as f64)
        .collect();
    let half: Vec<f64> = draws
        .iter()
        .map(|(a, b)| {
            let (mut a, mut b) = (a.clone(), b.clone());
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            w2_sq_sorted_1d(&a, &b)
        })
        .collect();

    let conditional = Estimate::from_samples(&corr);
    let unconditional = Estimate::from_samples(&cov);
    let conditional_pass = conditional.within(0.0, 3.0);
    let unconditional_pass = if expect_common_correlation {
        unconditional.mean > 3.0 * unconditional.std_err
    } else {
        unconditional.within(0.0, 3.0)
    };
    Ok(IndependenceReport {
        common_draws: draws.len(),
        inner,
        conditional,
        unconditional,
        half_sample_w2_sq: Estimate::from_samples(&half).mean,
        conditional_pass,
        unconditional_pass,
        pass: conditional_pass && unconditional_pass,
    })
}
