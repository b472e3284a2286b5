//! Synchronous coupling of the `n`-particle system with conditioned particles
//! living in the reference environment.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ExperimentSettings;
use crate::error::{Error, Result};
use crate::integrator::{
    simulate_conditioned_particle, simulate_finite_system, simulate_reference, TrajectorySet, REFERENCE_OFFSET,
    SECONDARY_REFERENCE_OFFSET,
};
use crate::model::CoefficientSet;
use crate::noise::{common_base_field, derive_stream, entity, Purpose, StreamKey};
use crate::stats::{linear_fit, Estimate, LinearFit};
use crate::wasserstein::population_w2_sq;
use crate::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingRunResult {
    pub n: usize,
    pub replications: usize,
    /// `Ê[sup_{s ≤ T} |X^{i,n}_s - X^i_s|²]`, averaged over `i ∈ I`.
    pub path_err_sq: f64,
    pub path_err_se: f64,
    /// `sup_t Ê[W₂(μ̄ⁿ_t, proxy_t)²]` over the base grid.
    pub w2_err_sq: f64,
    /// Standard error at the maximising time.
    pub w2_err_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub horizon: f64,
    pub n_ref: usize,
    pub rows: Vec<CouplingRunResult>,
    /// Least-squares fit of `ln path_err_sq` on `ln n`; `None` when not applicable.
    pub slope_path: Option<LinearFit>,
    pub slope_w2: Option<LinearFit>,
    /// `sup_t Ê[W₂(proxy_t, proxy'_t)²]` against an independent reference of
    /// size `N_ref / 2`.
    pub proxy_sensitivity: Option<CouplingRunResult>,
    /// Consecutive-row differences with paired standard errors.
    pub contrasts: Vec<RowContrast>,
}

/// `row[k] - row[k+1]` for both errors. Rows share random numbers, so the
/// standard errors are those of the per-replication differences (the path
/// term at `T`, the W₂ term at each row's maximising time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowContrast {
    pub n_from: usize,
    pub n_to: usize,
    pub path_diff: f64,
    pub path_diff_se: f64,
    pub w2_diff: f64,
    pub w2_diff_se: f64,
}

impl RowContrast {
    /// Decrease beyond `k` paired standard errors in both errors.
    pub fn decreases(&self, k: f64) -> bool {
        self.path_diff > k * self.path_diff_se && self.w2_diff > k * self.w2_diff_se
    }
}

struct Replicate {
    path: Vec<f64>,
    w2: Vec<Vec<f64>>,
    proxy: Option<Vec<f64>>,
}

/// `sup_s |a(s) - b(s)|²` over the union of both grids, step interpolation.
fn sup_distance_sq(a: &TrajectorySet, ia: usize, b: &TrajectorySet, ib: usize) -> f64 {
    let mut sup: f64 = 0.0;
    let mut eval = |t: f64| {
        let d: f64 = a.value_at(t, ia).iter().zip(b.value_at(t, ib)).map(|(x, y)| (x - y) * (x - y)).sum();
        sup = sup.max(d);
    };
    a.grid.iter().for_each(|t| eval(*t));
    b.grid.iter().for_each(|t| eval(*t));
    sup
}

fn w2_series(
    small: &Path,
    large: &Path,
    times: &[f64],
    cap: usize,
    rng: &mut crate::noise::NoiseStream,
) -> Result<Vec<f64>> {
    times.iter().map(|t| population_w2_sq(small.at(*t), large.at(*t), cap, rng)).collect()
}

fn replicate(
    model: &CoefficientSet,
    n_grid: &[usize],
    s: &ExperimentSettings,
    r: u64,
) -> Result<Replicate> {
    let n_max = *n_grid.iter().max().expect("non-empty");
    let base = common_base_field(&s.seeds, r, s.horizon, &model.marks, model.intensity.bound())?;
    let proxy = simulate_reference(model, &s.sim(n_max, r), s.n_ref, REFERENCE_OFFSET, &base)?;
    let times = s.sim(n_max, r).base_grid();
    let mut rng = derive_stream(&s.seeds, StreamKey::new(r, entity::SUBSAMPLE, Purpose::Aux))?;

    let mut path = Vec::with_capacity(n_grid.len());
    let mut w2 = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let cfg = s.sim(n, r);
        let (traj, mu) = simulate_finite_system(model, &cfg, &base)?;
        let m = s.coupled.unwrap_or(n).min(n);
        let mut acc = 0.0;
        for i in 0..m {
            let limit = simulate_conditioned_particle(model, &proxy.path, i as u64, &base, &cfg)?;
            acc += sup_distance_sq(&traj, i, &limit, 0);
        }
        path.push(acc / m as f64);
        w2.push(w2_series(&mu, &proxy.path, &times, s.exact_cap, &mut rng)?);
    }

    let proxy_w2 = if s.proxy_sensitivity {
        let half = simulate_reference(model, &s.sim(n_max, r), s.n_ref / 2, SECONDARY_REFERENCE_OFFSET, &base)?;
        Some(w2_series(&half.path, &proxy.path, &times, s.exact_cap, &mut rng)?)
    } else {
        None
    };
    Ok(Replicate { path, w2, proxy: proxy_w2 })
}

/// `(sup_t mean_t, std_err at the argmax, argmax)` of per-replication series.
fn sup_of_means(series: &[&Vec<f64>]) -> (f64, f64, usize) {
    let len = series[0].len();
    let mut best = (f64::NEG_INFINITY, f64::NAN, 0);
    for t in 0..len {
        let col: Vec<f64> = series.iter().map(|s| s[t]).collect();
        let e = Estimate::from_samples(&col);
        if e.mean > best.0 {
            best = (e.mean, e.std_err, t);
        }
    }
    best
}

fn fit(rows: &[CouplingRunResult], pick: impl Fn(&CouplingRunResult) -> f64) -> Option<LinearFit> {
    if rows.iter().any(|r| !(pick(r) > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| pick(r).ln()).collect();
    linear_fit(&xs, &ys)
}

fn study(model: &CoefficientSet, n_grid: &[usize], s: &ExperimentSettings) -> Result<ConvergenceStudy> {
    s.check_replications(2)?;
    if n_grid.is_empty() || n_grid.contains(&0) {
        return Err(Error::config("n grid must be non-empty with positive entries"));
    }
    if let Some(m) = s.coupled {
        if m == 0 || n_grid.iter().any(|n| m > *n) {
            return Err(Error::config("coupled index set must satisfy 1 <= |I| <= n"));
        }
    }
    // Replications in parallel; results collected and reduced in index order.
    let reps: Vec<Result<Replicate>> =
        (0..s.replications as u64).into_par_iter().map(|r| replicate(model, n_grid, s, r)).collect();
    let reps = reps.into_iter().collect::<Result<Vec<_>>>()?;

    let mut argmax = Vec::with_capacity(n_grid.len());
    let rows = n_grid
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let path: Vec<f64> = reps.iter().map(|r| r.path[k]).collect();
            let pe = Estimate::from_samples(&path);
            let series: Vec<&Vec<f64>> = reps.iter().map(|r| &r.w2[k]).collect();
            let (w, wse, at) = sup_of_means(&series);
            argmax.push(at);
            CouplingRunResult {
                n,
                replications: s.replications,
                path_err_sq: pe.mean,
                path_err_se: pe.std_err,
                w2_err_sq: w,
                w2_err_se: wse,
            }
        })
        .collect::<Vec<_>>();
    let contrasts = (1..n_grid.len())
        .map(|k| {
            let dp: Vec<f64> = reps.iter().map(|r| r.path[k - 1] - r.path[k]).collect();
            let dw: Vec<f64> = reps.iter().map(|r| r.w2[k - 1][argmax[k - 1]] - r.w2[k][argmax[k]]).collect();
            let (ep, ew) = (Estimate::from_samples(&dp), Estimate::from_samples(&dw));
            RowContrast {
                n_from: n_grid[k - 1],
                n_to: n_grid[k],
                path_diff: ep.mean,
                path_diff_se: ep.std_err,
                w2_diff: ew.mean,
                w2_diff_se: ew.std_err,
            }
        })
        .collect();

    let proxy_sensitivity = s.proxy_sensitivity.then(|| {
        let series: Vec<&Vec<f64>> = reps.iter().map(|r| r.proxy.as_ref().expect("computed")).collect();
        let (w, wse, _) = sup_of_means(&series);
        CouplingRunResult {
            n: s.n_ref / 2,
            replications: s.replications,
            path_err_sq: 0.0,
            path_err_se: 0.0,
            w2_err_sq: w,
            w2_err_se: wse,
        }
    });

    Ok(ConvergenceStudy {
        horizon: s.horizon,
        n_ref: s.n_ref,
        slope_path: fit(&rows, |r| r.path_err_sq),
        slope_w2: fit(&rows, |r| r.w2_err_sq),
        rows,
        proxy_sensitivity,
        contrasts,
    })
}

/// One coupling experiment at population size `n`.
pub fn run_synchronous_coupling(model: &CoefficientSet, n: usize, s: &ExperimentSettings) -> Result<CouplingRunResult> {
    if n > s.n_ref {
        return Err(Error::config(format!("n = {n} exceeds N_ref = {}", s.n_ref)));
    }
    Ok(study(model, &[n], s)?.rows.remove(0))
}

/// Coupling errors over an increasing `n_grid` with common random numbers:
/// replication `r` uses the same base field, reference population and
/// Brownian motions for every `n`.
pub fn convergence_study(model: &CoefficientSet, n_grid: &[usize], s: &ExperimentSettings) -> Result<ConvergenceStudy> {
    if n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("n grid must be strictly increasing"));
    }
    if n_grid.last().is_some_and(|n| n * 4 > s.n_ref) {
        return Err(Error::config(format!("max n must be at most N_ref / 4 = {}", s.n_ref / 4)));
    }
    study(model, n_grid, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dims, InitialLaw};
    use crate::noise::SeedSpec;

    #[test]
    fn zero_model_has_zero_errors() {
        let m = CoefficientSet::zero(Dims { d: 1, k: 1, l: 1 }, InitialLaw::Constant { value: vec![1.0] }).unwrap();
        let mut s = ExperimentSettings::new(1.0, SeedSpec::new(1, 2));
        s.dt = 0.1;
        s.n_ref = 64;
        s.replications = 4;
        let st = convergence_study(&m, &[2, 4, 8, 16], &s).unwrap();
        for r in &st.rows {
            assert_eq!((r.path_err_sq, r.w2_err_sq), (0.0, 0.0));
        }
        assert!(st.slope_path.is_none() && st.slope_w2.is_none());
    }

    #[test]
    fn guards() {
        let m = CoefficientSet::zero(Dims { d: 1, k: 1, l: 1 }, InitialLaw::Constant { value: vec![1.0] }).unwrap();
        let mut s = ExperimentSettings::new(1.0, SeedSpec::new(1, 2));
        s.n_ref = 16;
        s.replications = 1;
        assert!(run_synchronous_coupling(&m, 4, &s).is_err());
        s.replications = 2;
        assert!(convergence_study(&m, &[2, 8], &s).is_err());
        assert!(convergence_study(&m, &[4, 2], &s).is_err());
    }
}
