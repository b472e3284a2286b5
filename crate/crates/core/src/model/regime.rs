//! Regime-switching diffusions whose regime is a conditional Markov chain with
//! measure-dependent generator, driven by the common Poisson noise through
//! consecutive rate intervals.

use std::fmt;
use std::sync::Arc;

use super::{CoefficientSet, DeclaredConstants, Dims, InitialLaw};
use crate::error::{Error, Result};
use crate::noise::MarkMeasure;
use crate::poisson::IntensityCandidate;
use crate::scalar::Scalar;
use crate::Measure;

/// `Γ^{(from,to)} = [low, high)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeInterval<S> {
    pub from: usize,
    pub to: usize,
    pub low: S,
    pub high: S,
}

/// Lay the intervals `Γ^{(i,j)}`, `i ≠ j`, consecutively from 0 in
/// lexicographic order of `(i, j)`, each of length `Q^{(i,j)}`.
/// `qmat` is the `n × n` generator, row-major.
pub fn regime_intervals<S: Scalar>(qmat: &[S], n: usize) -> Result<Vec<RegimeInterval<S>>> {
    if qmat.len() != n * n {
        return Err(Error::input("generator must be n × n"));
    }
    let mut out = Vec::with_capacity(n * n.saturating_sub(1));
    let mut offset = S::zero();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let q = qmat[i * n + j];
            if !(q.is_finite() && q >= S::zero()) {
                return Err(Error::input(format!("off-diagonal rate Q[{i}][{j}] = {q} must be nonnegative")));
            }
            out.push(RegimeInterval { from: i, to: j, low: offset, high: offset + q });
            offset = offset + q;
        }
    }
    Ok(out)
}

/// Target of the transition out of `from` triggered by a point at height `u`.
pub fn transition_target<S: Scalar>(intervals: &[RegimeInterval<S>], from: usize, u: S) -> Option<usize> {
    intervals
        .iter()
        .filter(|iv| iv.from == from)
        .find(|iv| iv.low <= u && u < iv.high)
        .map(|iv| iv.to)
}

type GeneratorFn = dyn Fn(&Measure) -> Vec<f64> + Send + Sync;

/// Finite state set with a measure-dependent generator bounded by `H₀`.
#[derive(Clone)]
pub struct RegimeSpec {
    states: Vec<f64>,
    generator: Arc<GeneratorFn>,
    h0: f64,
}

impl fmt::Debug for RegimeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegimeSpec").field("states", &self.states).field("h0", &self.h0).finish_non_exhaustive()
    }
}

impl RegimeSpec {
    /// `generator(ν)` returns the full row-major `n × n` matrix.
    pub fn new(
        states: Vec<f64>,
        h0: f64,
        generator: impl Fn(&Measure) -> Vec<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if states.is_empty() || states.iter().any(|s| !s.is_finite()) {
            return Err(Error::input("regime states must be finite and non-empty"));
        }
        if states.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::input("regime states must be strictly increasing"));
        }
        if !(h0.is_finite() && h0 > 0.0) {
            return Err(Error::input("H₀ must be positive and finite"));
        }
        Ok(RegimeSpec { states, generator: Arc::new(generator), h0 })
    }

    /// Constant generator from off-diagonal rates; the diagonal is ignored and
    /// set to minus the off-diagonal row sum. `H₀` is the largest row sum.
    pub fn constant(states: Vec<f64>, rates: Vec<Vec<f64>>) -> Result<Self> {
        let n = states.len();
        if rates.len() != n || rates.iter().any(|r| r.len() != n) {
            return Err(Error::input("rate matrix must be n × n"));
        }
        let mut q = vec![0.0; n * n];
        let mut h0: f64 = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                if i != j {
                    q[i * n + j] = rates[i][j];
                    row += rates[i][j];
                }
            }
            q[i * n + i] = -row;
            h0 = h0.max(row);
        }
        let spec = RegimeSpec::new(states, if h0 > 0.0 { h0 } else { 1.0 }, move |_| q.clone())?;
        spec.evaluate(&Measure::dirac(&[0.0])?)?;
        Ok(spec)
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn h0(&self) -> f64 {
        self.h0
    }

    /// Height bound covering every interval: `|𝓔| · H₀`.
    pub fn interval_axis_bound(&self) -> f64 {
        self.states.len() as f64 * self.h0
    }

    /// Generator at `ν`, checked: nonnegative off-diagonals, zero row sums to
    /// 1e-12 and off-diagonal row sums at most `H₀`.
    pub fn evaluate(&self, nu: &Measure) -> Result<Vec<f64>> {
        let n = self.states.len();
        let q = (self.generator)(nu);
        if q.len() != n * n {
            return Err(Error::input("generator returned a matrix of the wrong size"));
        }
        for i in 0..n {
            let row = &q[i * n..(i + 1) * n];
            let mut off = 0.0;
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::input("generator entries must be finite"));
                }
                if i != j {
                    if *v < 0.0 {
                        return Err(Error::input(format!("negative off-diagonal rate Q[{i}][{j}] = {v}")));
                    }
                    off += v;
                }
            }
            if (off + row[i]).abs() > 1e-12 {
                return Err(Error::input(format!("generator row {i} sums to {}", off + row[i])));
            }
            if off > self.h0 {
                return Err(Error::IntensityBound { dim: i, time: f64::NAN, value: off, bound: self.h0 });
            }
        }
        Ok(q)
    }
}

type RegimeDriftFn = dyn Fn(&Measure, &[f64], f64, &mut [f64]) + Send + Sync;

/// Regime-modulated diffusion `dX = b(ν, X, Y) dt + σ dW`, `γ ≡ 0`, with the
/// regime `Y` switching through the common Poisson noise.
#[derive(Clone)]
pub struct RegimeModel {
    pub d: usize,
    pub spec: RegimeSpec,
    pub drift: Arc<RegimeDriftFn>,
    pub vol: f64,
    pub initial: InitialLaw,
    /// Index into the state set at time 0.
    pub initial_regime: usize,
    pub constants: DeclaredConstants,
}

impl fmt::Debug for RegimeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegimeModel")
            .field("d", &self.d)
            .field("spec", &self.spec)
            .field("vol", &self.vol)
            .field("initial_regime", &self.initial_regime)
            .finish_non_exhaustive()
    }
}

pub fn build_regime_switching(
    spec: RegimeSpec,
    d: usize,
    drift: impl Fn(&Measure, &[f64], f64, &mut [f64]) + Send + Sync + 'static,
    vol: f64,
    initial: InitialLaw,
    initial_regime: usize,
    constants: DeclaredConstants,
) -> Result<RegimeModel> {
    if d == 0 || initial.dim() != d {
        return Err(Error::input("state dimension mismatch"));
    }
    if !vol.is_finite() {
        return Err(Error::input("σ must be finite"));
    }
    if initial_regime >= spec.len() {
        return Err(Error::input("initial regime out of range"));
    }
    initial.validate()?;
    Ok(RegimeModel { d, spec, drift: Arc::new(drift), vol, initial, initial_regime, constants })
}

/// Built-in bounded Lipschitz drift `b(ν, x, e) = e + κ tanh(mean(ν) - x)`,
/// coordinatewise, with constants `K = K⁰ = 2κ²` and
/// `β = √d (max|e| + κ + |σ|)`.
pub fn build_tanh_regime(spec: RegimeSpec, d: usize, kappa: f64, vol: f64, initial: InitialLaw) -> Result<RegimeModel> {
    if !(kappa.is_finite() && kappa >= 0.0) {
        return Err(Error::input("κ must be nonnegative"));
    }
    let emax = spec.states().iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let df = (d as f64).sqrt();
    let constants = DeclaredConstants {
        lipschitz_state: 2.0 * kappa * kappa,
        lipschitz_measure: 2.0 * kappa * kappa,
        growth: df * (emax + kappa + vol.abs()),
        fourth_moment: 0.0,
    };
    build_regime_switching(
        spec,
        d,
        move |nu, x, e, out| {
            for ((o, m), xi) in out.iter_mut().zip(nu.mean()).zip(x) {
                *o = e + kappa * (m - xi).tanh();
            }
        },
        vol,
        initial,
        0,
        constants,
    )
}

impl RegimeModel {
    /// The diffusion seen while the regime sits in state `index`, as a
    /// coefficient set (for the validators).
    pub fn coefficients_for(&self, index: usize) -> Result<CoefficientSet> {
        let e = *self.spec.states().get(index).ok_or_else(|| Error::input("regime index out of range"))?;
        let d = self.d;
        let vol = self.vol;
        let drift = self.drift.clone();
        let mut set = CoefficientSet::zero(Dims { d, k: d, l: 1 }, self.initial.clone())?;
        set.name = format!("regime[{index}]");
        set.drift = Arc::new(move |_, nu, x, out: &mut [f64]| drift(nu, x, e, out));
        set.diffusion = Arc::new(move |_, _, _, out: &mut [f64]| {
            out.fill(0.0);
            for c in 0..d {
                out[c * d + c] = vol;
            }
        });
        set.intensity = IntensityCandidate::zero(1);
        set.marks = vec![MarkMeasure::gaussian(1)?];
        set.constants = self.constants;
        Ok(set)
    }
}
