//! Numerical falsifiers for the Lipschitz, growth and fourth-moment
//! conditions. Pairs `(ν, x)` are drawn with atom measures of support at most
//! 16 and coordinates in `[-10, 10]`; a PASS only means no counterexample was
//! found.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CoefficientSet;
use crate::error::{Error, Result};
use crate::poisson::random_norm_sq_quadrature;
use crate::wasserstein::{population_w2_sq, DEFAULT_EXACT_CAP};
use crate::Measure;

const MAX_SUPPORT: usize = 16;
const BOX: f64 = 10.0;
const RATIO_TOL: f64 = 1e-6;

/// Right-hand side of the growth condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrowthForm {
    /// `β (W₂(ν, δ₀) + |x|)`.
    Strict,
    /// `β (c + W₂(ν, δ₀) + |x|)`.
    Affine { c: f64 },
}

impl Default for GrowthForm {
    fn default() -> Self {
        GrowthForm::Affine { c: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub check: String,
    pub samples: usize,
    /// Largest observed LHS / RHS.
    pub max_ratio: f64,
    /// Largest ratio per coefficient (`drift`, `diffusion`, `jump`, `intensity`, ...).
    pub per_coefficient: Vec<(String, f64)>,
    /// Monte Carlo standard error of the estimate, when one was used.
    pub std_err: f64,
    pub pass: bool,
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs <= 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn sample_measure(rng: &mut ChaCha8Rng, d: usize) -> Measure {
    let n = rng.random_range(1..=MAX_SUPPORT);
    let atoms = (0..n * d).map(|_| rng.random_range(-BOX..=BOX)).collect();
    Measure::from_flat(d, atoms).expect("finite atoms")
}

fn sample_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-BOX..=BOX)).collect()
}

fn small(rng: &mut ChaCha8Rng) -> f64 {
    let scale = 10f64.powf(rng.random_range(-4.0..0.0));
    scale * rng.random_range(-1.0..1.0)
}

/// A pair `((ν, x), (ν', x'))`; the mode cycles through independent pairs,
/// translated measures, state-only and single-atom perturbations.
fn sample_pair(rng: &mut ChaCha8Rng, d: usize, mode: usize) -> (Measure, Vec<f64>, Measure, Vec<f64>) {
    let nu = sample_measure(rng, d);
    let x = sample_point(rng, d);
    match mode % 4 {
        0 => {
            let nu2 = sample_measure(rng, d);
            let x2 = sample_point(rng, d);
            (nu, x, nu2, x2)
        }
        1 => {
            let h: Vec<f64> = (0..d).map(|_| small(rng)).collect();
            let atoms = nu.flat().iter().enumerate().map(|(i, a)| a + h[i % d]).collect();
            let nu2 = Measure::from_flat(d, atoms).expect("finite");
            let x2 = x.iter().map(|v| v + small(rng)).collect();
            (nu, x, nu2, x2)
        }
        2 => {
            let x2 = x.iter().map(|v| v + small(rng)).collect();
            (nu.clone(), x, nu, x2)
        }
        _ => {
            let k = rng.random_range(0..nu.len());
            let mut atoms = nu.flat().to_vec();
            for c in 0..d {
                atoms[k * d + c] += small(rng);
            }
            let nu2 = Measure::from_flat(d, atoms).expect("finite");
            (nu, x.clone(), nu2, x)
        }
    }
}

fn sample_rng(master: u64, index: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(master);
    r.set_stream(index as u64);
    r
}

fn check_samples(samples: usize) -> Result<()> {
    if samples < 2 {
        return Err(Error::input("validators need at least 2 samples"));
    }
    Ok(())
}

fn fold_max(rows: Vec<Vec<f64>>, names: &[&str]) -> Vec<(String, f64)> {
    names
        .iter()
        .enumerate()
        .map(|(c, n)| (n.to_string(), rows.iter().map(|r| r[c]).fold(0.0, f64::max)))
        .collect()
}

/// Check `|δb|² + ‖δσ‖²_F + ‖δγ‖²_{λ(ν)} ≤ K⁰ W₂(ν, ν')² + K |x - x'|²` and
/// `|δλ| ≤ K* W₂(ν, ν')` on sampled pairs.
pub fn validate_lipschitz<R: Rng + ?Sized>(model: &CoefficientSet, samples: usize, rng: &mut R) -> Result<ValidationReport> {
    check_samples(samples)?;
    model.validate()?;
    let master: u64 = rng.random();
    let dims = model.dims;
    let (d, k) = (dims.d, dims.k);
    let kc = model.constants;
    let k_star = model.intensity.lipschitz_w2();

    let rows: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = sample_rng(master, s);
            let (nu, x, nu2, x2) = sample_pair(&mut rng, d, s);
            let t: f64 = rng.random_range(0.0..=1.0);
            let w2sq = population_w2_sq(&nu, &nu2, DEFAULT_EXACT_CAP, &mut rng).expect("same dimension");
            let dx2: f64 = x.iter().zip(&x2).map(|(a, b)| (a - b) * (a - b)).sum();

            let (mut b1, mut b2) = (vec![0.0; d], vec![0.0; d]);
            (model.drift)(t, &nu, &x, &mut b1);
            (model.drift)(t, &nu2, &x2, &mut b2);
            let db: f64 = b1.iter().zip(&b2).map(|(a, b)| (a - b) * (a - b)).sum();

            let (mut s1, mut s2) = (vec![0.0; d * k], vec![0.0; d * k]);
            (model.diffusion)(t, &nu, &x, &mut s1);
            (model.diffusion)(t, &nu2, &x2, &mut s2);
            let ds: f64 = s1.iter().zip(&s2).map(|(a, b)| (a - b) * (a - b)).sum();

            let mut g2 = vec![0.0; d];
            let dg = random_norm_sq_quadrature(
                d,
                |t, r, j, out| {
                    (model.jump)(t, &nu, r, &x, j, out);
                    (model.jump)(t, &nu2, r, &x2, j, &mut g2);
                    out.iter_mut().zip(&g2).for_each(|(o, g)| *o -= g);
                },
                &model.intensity,
                &nu,
                t,
                &model.marks,
            );

            let rhs = kc.lipschitz_measure * w2sq + kc.lipschitz_state * dx2;
            let w = w2sq.sqrt();
            let mut dl: f64 = 0.0;
            for (j, q) in model.marks.iter().enumerate() {
                for (r, _) in q.nodes() {
                    dl = dl.max((model.intensity.evaluate(t, &nu, r, j) - model.intensity.evaluate(t, &nu2, r, j)).abs());
                }
            }
            vec![ratio(db + ds + dg, rhs), ratio(db, rhs), ratio(ds, rhs), ratio(dg, rhs), ratio(dl, k_star * w)]
        })
        .collect();

    let per = fold_max(rows, &["total", "drift", "diffusion", "jump", "intensity"]);
    let max_ratio = per[0].1;
    let pass = max_ratio <= 1.0 + RATIO_TOL && per[4].1 <= 1.0 + RATIO_TOL;
    Ok(ValidationReport { check: "lipschitz".into(), samples, max_ratio, per_coefficient: per, std_err: 0.0, pass })
}

/// Check `|b| + ‖σ‖_F + ‖γ‖_{λ(ν)} ≤ β (c + W₂(ν, δ₀) + |x|)`. The first sample
/// is the origin `ν = δ₀`, `x = 0`.
pub fn validate_growth<R: Rng + ?Sized>(
    model: &CoefficientSet,
    samples: usize,
    form: GrowthForm,
    rng: &mut R,
) -> Result<ValidationReport> {
    check_samples(samples)?;
    model.validate()?;
    let c = match form {
        GrowthForm::Strict => 0.0,
        GrowthForm::Affine { c } if c.is_finite() && c >= 0.0 => c,
        GrowthForm::Affine { .. } => return Err(Error::input("affine growth offset must be nonnegative")),
    };
    let master: u64 = rng.random();
    let (d, k) = (model.dims.d, model.dims.k);
    let beta = model.constants.growth;

    let rows: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = sample_rng(master, s);
            let (nu, x) = if s == 0 {
                (Measure::dirac(&vec![0.0; d]).expect("finite"), vec![0.0; d])
            } else {
                (sample_measure(&mut rng, d), sample_point(&mut rng, d))
            };
            let t: f64 = rng.random_range(0.0..=1.0);
            let mut b = vec![0.0; d];
            (model.drift)(t, &nu, &x, &mut b);
            let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut sg = vec![0.0; d * k];
            (model.diffusion)(t, &nu, &x, &mut sg);
            let ns = sg.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ng = random_norm_sq_quadrature(d, |t, r, j, out| (model.jump)(t, &nu, r, &x, j, out), &model.intensity, &nu, t, &model.marks)
                .sqrt();
            let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let rhs = beta * (c + nu.second_moment().sqrt() + nx);
            vec![ratio(nb + ns + ng, rhs), ratio(nb, rhs), ratio(ns, rhs), ratio(ng, rhs)]
        })
        .collect();

    let per = fold_max(rows, &["total", "drift", "diffusion", "jump"]);
    let max_ratio = per[0].1;
    Ok(ValidationReport {
        check: "growth".into(),
        samples,
        max_ratio,
        per_coefficient: per,
        std_err: 0.0,
        pass: max_ratio <= 1.0 + RATIO_TOL,
    })
}

/// Check `max_i Σ_j ∫ |γ^{(i,j)}(t, ν, r, x)|⁴ Q^{(j)}(dr) ≤ γ*` over sampled
/// `(t, ν, x)`. The mark integral uses the deterministic quadrature of each
/// mark measure, so the standard error is zero and PASS is
/// `estimate ≤ γ* (1 + 1e-9)`.
pub fn validate_fourth_moment<R: Rng + ?Sized>(
    model: &CoefficientSet,
    samples: usize,
    rng: &mut R,
) -> Result<ValidationReport> {
    check_samples(samples)?;
    model.validate()?;
    let master: u64 = rng.random();
    let d = model.dims.d;

    let worst: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = sample_rng(master, s);
            let nu = sample_measure(&mut rng, d);
            let x = sample_point(&mut rng, d);
            let t: f64 = rng.random_range(0.0..=1.0);
            let mut col = vec![0.0; d];
            let mut rows = vec![0.0; d];
            for (j, q) in model.marks.iter().enumerate() {
                for (r, w) in q.nodes() {
                    (model.jump)(t, &nu, r, &x, j, &mut col);
                    rows.iter_mut().zip(&col).for_each(|(acc, g)| *acc += w * g.powi(4));
                }
            }
            rows.into_iter().fold(0.0, f64::max)
        })
        .collect();

    let est = worst.into_iter().fold(0.0, f64::max);
    let declared = model.constants.fourth_moment;
    let pass = est <= declared * (1.0 + 1e-9);
    Ok(ValidationReport {
        check: "fourth_moment".into(),
        samples,
        max_ratio: ratio(est, declared),
        per_coefficient: vec![("jump".into(), est)],
        std_err: 0.0,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_systemic_risk, DeclaredConstants, Dims, InitialLaw, SystemicRiskParams};
    use crate::noise::MarkMeasure;
    use crate::poisson::IntensityCandidate;
    use std::sync::Arc;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(5)
    }

    fn zero() -> CoefficientSet {
        CoefficientSet::zero(Dims { d: 1, k: 1, l: 1 }, InitialLaw::Constant { value: vec![0.0] }).unwrap()
    }

    #[test]
    fn zero_model_passes_everything() {
        let m = zero();
        let l = validate_lipschitz(&m, 200, &mut rng()).unwrap();
        assert!(l.pass && l.max_ratio == 0.0);
        assert!(validate_growth(&m, 200, GrowthForm::Strict, &mut rng()).unwrap().pass);
        assert!(validate_fourth_moment(&m, 200, &mut rng()).unwrap().pass);
    }

    #[test]
    fn r_fourth_moment_on_unit_interval() {
        let mut m = zero();
        m.marks = vec![MarkMeasure::uniform(1).unwrap()];
        m.jump = Arc::new(|_, _, r: &[f64], _, _, out: &mut [f64]| out[0] = r[0]);
        m.intensity = IntensityCandidate::constant(vec![1.0], vec![1.0]).unwrap();
        m.constants = DeclaredConstants { fourth_moment: 0.25, ..DeclaredConstants::ZERO };
        let rep = validate_fourth_moment(&m, 20, &mut rng()).unwrap();
        assert!(rep.pass);
        assert!((rep.per_coefficient[0].1 - 0.2).abs() < 1e-12);
        m.constants.fourth_moment = 0.1;
        assert!(!validate_fourth_moment(&m, 20, &mut rng()).unwrap().pass);
    }

    #[test]
    fn systemic_risk_constants() {
        let m = build_systemic_risk(SystemicRiskParams::default(), 4.0, InitialLaw::Constant { value: vec![0.0] }).unwrap();
        assert!(validate_lipschitz(&m, 2000, &mut rng()).unwrap().pass);
        assert!(validate_growth(&m, 2000, GrowthForm::default(), &mut rng()).unwrap().pass);
        assert!(!validate_growth(&m, 2000, GrowthForm::Strict, &mut rng()).unwrap().pass);
        assert!(validate_fourth_moment(&m, 200, &mut rng()).unwrap().pass);
        let halved = m.clone().with_constants(DeclaredConstants { lipschitz_state: 1.0, lipschitz_measure: 2.0, ..m.constants });
        assert!(!validate_lipschitz(&halved, 2000, &mut rng()).unwrap().pass);
    }
}
