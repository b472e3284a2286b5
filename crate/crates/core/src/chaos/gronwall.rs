//! `G(u) = 2 ln(√u + 1) - 2 ln(√ε + 1)`, the primitive of `1 / (s + √s)` from
//! `ε`, and the envelope `G⁻¹(G(a) + k t)`.

use serde::{Deserialize, Serialize};

use super::coupling::ConvergenceStudy;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn two<S: Scalar>() -> S {
    S::lit(2.0)
}

pub fn gronwall_g<S: Scalar>(u: S, eps: S) -> S {
    two::<S>() * (u.sqrt().ln_1p() - eps.sqrt().ln_1p())
}

pub fn gronwall_g_inv<S: Scalar>(y: S, eps: S) -> S {
    let e = eps.sqrt();
    let v = (S::one() + e) * (y / two::<S>()).exp_m1() + e;
    v * v
}

/// `G⁻¹(G(a) + k t)`. `a = 0` is the trivial branch and returns 0;
/// `0 < a < ε` is outside the domain of `G`.
pub fn gronwall_envelope<S: Scalar>(a: S, k: S, t: S, eps: S) -> Result<S> {
    if !(eps.is_finite() && eps > S::zero()) {
        return Err(Error::Domain(format!("ε = {eps} must be positive")));
    }
    if !(k.is_finite() && k >= S::zero() && t.is_finite() && t >= S::zero()) {
        return Err(Error::Domain("k and t must be finite and nonnegative".into()));
    }
    if !(a.is_finite() && a >= S::zero()) {
        return Err(Error::Domain(format!("a = {a} must be finite and nonnegative")));
    }
    if a == S::zero() {
        return Ok(S::zero());
    }
    if a < eps {
        return Err(Error::Domain(format!("a = {a} lies in (0, ε = {eps})")));
    }
    if k * t == S::zero() {
        return Ok(a);
    }
    Ok(gronwall_g_inv(gronwall_g(a, eps) + k * t, eps))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub n: usize,
    /// `a(T) = k T g(sup_t ŵ₂²)`, `g(x) = x + √x`.
    pub a_t: f64,
    pub envelope: Option<f64>,
    pub path_err_sq: f64,
    pub holds: Option<bool>,
    pub domain_error: Option<String>,
}

/// Diagnostic only: `k` is not identifiable from data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub k: f64,
    pub eps: f64,
    pub rows: Vec<EnvelopeRow>,
}

impl EnvelopeReport {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(|r| r.holds == Some(true))
    }
}

pub fn envelope_check(study: &ConvergenceStudy, k: f64, eps: f64) -> EnvelopeReport {
    let t = study.horizon;
    let rows = study
        .rows
        .iter()
        .map(|row| {
            let w = row.w2_err_sq.max(0.0);
            let a_t = k * t * (w + w.sqrt());
            match gronwall_envelope(a_t, k, t, eps) {
                Ok(env) => EnvelopeRow {
                    n: row.n,
                    a_t,
                    envelope: Some(env),
                    path_err_sq: row.path_err_sq,
                    holds: Some(row.path_err_sq <= env),
                    domain_error: None,
                },
                Err(e) => EnvelopeRow {
                    n: row.n,
                    a_t,
                    envelope: None,
                    path_err_sq: row.path_err_sq,
                    holds: None,
                    domain_error: Some(e.to_string()),
                },
            }
        })
        .collect();
    EnvelopeReport { k, eps, rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_at_zero_time() {
        assert_eq!(gronwall_envelope(0.5, 3.0, 0.0, 0.01).unwrap(), 0.5);
        assert_eq!(gronwall_envelope(0.0, 3.0, 1.0, 0.01).unwrap(), 0.0);
    }

    #[test]
    fn worked_value() {
        let v = gronwall_envelope(0.04, 2.0, 1.0, 0.01).unwrap();
        // ((√0.04 + 1) e - 1)²
        let expect = (1.2 * std::f64::consts::E - 1.0).powi(2);
        assert!((v - expect).abs() < 1e-12);
        assert!((v - 5.117).abs() < 1e-3);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(gronwall_envelope(0.001, 1.0, 1.0, 0.01), Err(Error::Domain(_))));
        assert!(gronwall_envelope(1.0, 1.0, 1.0, 0.0).is_err());
        assert!(gronwall_envelope(1.0f32, 1.0, 1.0, 0.5).unwrap() > 1.0);
    }
}
