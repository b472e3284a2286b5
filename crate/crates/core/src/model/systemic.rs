//! Systemic-risk style model: agents mean-revert towards the population
//! average, and common shocks with Gaussian marks hit everyone at a rate that
//! grows with the dispersion of the population.
//!
//! ```text
//! b(ν, x)    = a (mean(ν) - x)
//! σ          = vol · I_d
//! γ(ν, r, x) = jump_scale · r,              r ~ N(0, I_d)
//! λ(ν)       = min(λ₀ + λ₁ Var(ν), λ̄)
//! ```

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{CoefficientSet, DeclaredConstants, Dims, InitialLaw};
use crate::error::{Error, Result};
use crate::noise::MarkMeasure;
use crate::poisson::IntensityCandidate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemicRiskParams {
    /// Mean-reversion rate `a` (1/time).
    pub mean_reversion: f64,
    pub vol: f64,
    pub jump_scale: f64,
    /// Baseline intensity `λ₀`.
    pub base_intensity: f64,
    /// Variance sensitivity `λ₁`.
    pub variance_sensitivity: f64,
    /// State dimension.
    pub dim: usize,
}

impl Default for SystemicRiskParams {
    fn default() -> Self {
        SystemicRiskParams {
            mean_reversion: 1.0,
            vol: 1.0,
            jump_scale: 0.5,
            base_intensity: 1.0,
            variance_sensitivity: 0.5,
            dim: 1,
        }
    }
}

impl SystemicRiskParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [self.mean_reversion, self.vol, self.base_intensity, self.variance_sensitivity];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !self.jump_scale.is_finite() {
            return Err(Error::input("systemic-risk parameters a, vol, λ₀, λ₁ must be finite and nonnegative"));
        }
        if self.dim == 0 {
            return Err(Error::input("state dimension must be positive"));
        }
        Ok(())
    }
}

/// Build the model with its derived constants:
///
/// * `K = K⁰ = 2a²`, from `|a(δm - δx)|² ≤ 2a²|δm|² + 2a²|δx|²` and `|δm| ≤ W₂`;
/// * `β = max(a, vol √d + |jump_scale| √(d λ̄))` for the affine growth form
///   `β (1 + W₂(ν, δ₀) + |x|)`;
/// * `γ* = 3 jump_scale⁴` (fourth moment of a standard Gaussian coordinate);
/// * `K* = 2 √(λ₁ (λ̄ - λ₀))`, the W₂-Lipschitz constant of the capped intensity
///   (`√Var` is 1-Lipschitz in W₂ and the cap confines `λ₁ Var` below `λ̄ - λ₀`).
pub fn build_systemic_risk(params: SystemicRiskParams, bound: f64, initial: InitialLaw) -> Result<CoefficientSet> {
    params.validate()?;
    if !(bound.is_finite() && bound > 0.0) {
        return Err(Error::input("intensity bound λ̄ must be positive and finite"));
    }
    let SystemicRiskParams {
        mean_reversion: a,
        vol,
        jump_scale,
        base_intensity,
        variance_sensitivity,
        dim: d,
    } = params;

    let headroom = (bound - base_intensity).max(0.0);
    let intensity = IntensityCandidate::new(
        vec![bound],
        2.0 * (variance_sensitivity * headroom).sqrt(),
        false,
        move |_, nu, _, _| (base_intensity + variance_sensitivity * nu.variance()).min(bound),
    )?;
    let df = d as f64;
    let constants = DeclaredConstants {
        lipschitz_state: 2.0 * a * a,
        lipschitz_measure: 2.0 * a * a,
        growth: a.max(vol * df.sqrt() + jump_scale.abs() * (df * bound).sqrt()),
        fourth_moment: 3.0 * jump_scale.powi(4),
    };
    let set = CoefficientSet {
        name: "systemic_risk".into(),
        dims: Dims { d, k: d, l: 1 },
        drift: Arc::new(move |_, nu, x, out: &mut [f64]| {
            for ((o, m), xi) in out.iter_mut().zip(nu.mean()).zip(x) {
                *o = a * (m - xi);
            }
        }),
        diffusion: Arc::new(move |_, _, _, out: &mut [f64]| {
            out.fill(0.0);
            for c in 0..d {
                out[c * d + c] = vol;
            }
        }),
        jump: Arc::new(move |_, _, r, _, _, out: &mut [f64]| {
            for (o, ri) in out.iter_mut().zip(r) {
                *o = jump_scale * ri;
            }
        }),
        intensity,
        marks: vec![MarkMeasure::gaussian(d)?],
        initial,
        common_initial: false,
        constants,
        // Centered Gaussian marks and a mark-independent linear γ: ∫ γ λ dQ = 0.
        compensator: Some(Arc::new(|_, _, _, out: &mut [f64]| out.fill(0.0))),
    };
    set.validate()?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Measure;

    fn init() -> InitialLaw {
        InitialLaw::Gaussian { mean: vec![0.0], std: 1.0 }
    }

    #[test]
    fn degenerate_parameters_give_zero_maps() {
        let p = SystemicRiskParams { mean_reversion: 0.0, vol: 0.0, jump_scale: 0.0, ..Default::default() };
        let m = build_systemic_risk(p, 4.0, init()).unwrap();
        let nu = Measure::from_scalars(&[1.0, 5.0]).unwrap();
        let mut o = [1.0];
        (m.drift)(0.0, &nu, &[2.0], &mut o);
        assert_eq!(o, [0.0]);
        (m.diffusion)(0.0, &nu, &[2.0], &mut o);
        assert_eq!(o, [0.0]);
        (m.jump)(0.0, &nu, &[0.7], &[2.0], 0, &mut o);
        assert_eq!(o, [0.0]);
    }

    #[test]
    fn drift_reverts_to_mean() {
        let p = SystemicRiskParams { mean_reversion: 1.0, ..Default::default() };
        let m = build_systemic_risk(p, 4.0, init()).unwrap();
        let mut o = [0.0];
        (m.drift)(0.0, &Measure::dirac(&[0.0]).unwrap(), &[2.0], &mut o);
        assert_eq!(o, [-2.0]);
    }

    #[test]
    fn intensity_tracks_variance_and_cap() {
        let p = SystemicRiskParams { base_intensity: 0.5, variance_sensitivity: 2.0, ..Default::default() };
        let m = build_systemic_risk(p, 4.0, init()).unwrap();
        let nu = Measure::from_scalars(&[-1.0, 1.0]).unwrap();
        assert_eq!(m.intensity.evaluate(0.0, &nu, &[0.0], 0), 2.5);
        let wide = Measure::from_scalars(&[-10.0, 10.0]).unwrap();
        assert_eq!(m.intensity.evaluate(0.0, &wide, &[0.0], 0), 4.0);
    }

    #[test]
    fn rejects_negative_rates() {
        let p = SystemicRiskParams { mean_reversion: -1.0, ..Default::default() };
        assert!(build_systemic_risk(p, 4.0, init()).is_err());
        assert!(build_systemic_risk(SystemicRiskParams::default(), 0.0, init()).is_err());
    }
}
