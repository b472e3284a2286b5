//! Coefficient sets `(b, σ, γ, λ, Q)` with declared regularity constants.

pub mod regime;
pub mod systemic;
pub mod validate;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{MarkMeasure, NoiseStream};
use crate::poisson::IntensityCandidate;
use crate::Measure;

pub use regime::{build_regime_switching, regime_intervals, RegimeInterval, RegimeModel, RegimeSpec};
pub use systemic::{build_systemic_risk, SystemicRiskParams};

/// Drift `b(t, ν, x)` written into a `d`-vector.
pub type DriftFn = dyn Fn(f64, &Measure, &[f64], &mut [f64]) + Send + Sync;
/// Diffusion `σ(t, ν, x)` written row-major into a `d × k` buffer.
pub type DiffusionFn = dyn Fn(f64, &Measure, &[f64], &mut [f64]) + Send + Sync;
/// Column `j` of the jump coefficient `γ(t, ν, r, x)` written into a `d`-vector.
pub type JumpFn = dyn Fn(f64, &Measure, &[f64], &[f64], usize, &mut [f64]) + Send + Sync;
/// Closed-form compensator rate `Σ_j ∫ γ^{(·,j)} λ^{(j)} Q^{(j)}(dr)`.
pub type CompensatorFn = dyn Fn(f64, &Measure, &[f64], &mut [f64]) + Send + Sync;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// State dimension.
    pub d: usize,
    /// Brownian dimension.
    pub k: usize,
    /// Number of Poisson noise components.
    pub l: usize,
}

/// Law of the i.i.d. initial conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialLaw {
    Constant { value: Vec<f64> },
    Gaussian { mean: Vec<f64>, std: f64 },
    Uniform { low: f64, high: f64, dim: usize },
}

impl InitialLaw {
    pub fn dim(&self) -> usize {
        match self {
            InitialLaw::Constant { value } => value.len(),
            InitialLaw::Gaussian { mean, .. } => mean.len(),
            InitialLaw::Uniform { dim, .. } => *dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            InitialLaw::Constant { value } => value.iter().all(|v| v.is_finite()),
            InitialLaw::Gaussian { mean, std } => mean.iter().all(|v| v.is_finite()) && std.is_finite() && *std >= 0.0,
            InitialLaw::Uniform { low, high, .. } => low.is_finite() && high.is_finite() && low <= high,
        };
        if !ok || self.dim() == 0 {
            return Err(Error::input("invalid initial law"));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut NoiseStream, out: &mut [f64]) {
        match self {
            InitialLaw::Constant { value } => out.copy_from_slice(value),
            InitialLaw::Gaussian { mean, std } => {
                for (o, m) in out.iter_mut().zip(mean) {
                    *o = m + std * rng.normal();
                }
            }
            InitialLaw::Uniform { low, high, .. } => {
                for o in out.iter_mut() {
                    *o = low + (high - low) * rng.uniform();
                }
            }
        }
    }
}

/// Declared constants of the Lipschitz, growth and fourth-moment conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeclaredConstants {
    /// `K`: Lipschitz constant in the state.
    pub lipschitz_state: f64,
    /// `K⁰`: Lipschitz constant in the measure (W₂).
    pub lipschitz_measure: f64,
    /// `β`: linear growth constant.
    pub growth: f64,
    /// `γ*`: bound on the fourth moment of the jump rows.
    pub fourth_moment: f64,
}

impl DeclaredConstants {
    pub const ZERO: DeclaredConstants =
        DeclaredConstants { lipschitz_state: 0.0, lipschitz_measure: 0.0, growth: 0.0, fourth_moment: 0.0 };
}

/// One model: coefficient maps, intensity candidate, mark measures, initial
/// law and declared constants.
#[derive(Clone)]
pub struct CoefficientSet {
    pub name: String,
    pub dims: Dims,
    pub drift: Arc<DriftFn>,
    pub diffusion: Arc<DiffusionFn>,
    pub jump: Arc<JumpFn>,
    pub intensity: IntensityCandidate,
    pub marks: Vec<MarkMeasure>,
    pub initial: InitialLaw,
    /// Draw initial conditions on the common seed instead of the idiosyncratic one.
    pub common_initial: bool,
    pub constants: DeclaredConstants,
    /// Optional closed form for the compensator drift; quadrature otherwise.
    pub compensator: Option<Arc<CompensatorFn>>,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .field("intensity", &self.intensity)
            .field("initial", &self.initial)
            .field("constants", &self.constants)
            .finish_non_exhaustive()
    }
}

impl CoefficientSet {
    /// All coefficients and the intensity identically zero; Gaussian marks.
    pub fn zero(dims: Dims, initial: InitialLaw) -> Result<Self> {
        let marks = (0..dims.l).map(|_| MarkMeasure::gaussian(1)).collect::<Result<Vec<_>>>()?;
        let set = CoefficientSet {
            name: "zero".into(),
            dims,
            drift: Arc::new(|_, _, _, out: &mut [f64]| out.fill(0.0)),
            diffusion: Arc::new(|_, _, _, out: &mut [f64]| out.fill(0.0)),
            jump: Arc::new(|_, _, _, _, _, out: &mut [f64]| out.fill(0.0)),
            intensity: IntensityCandidate::zero(dims.l),
            marks,
            initial,
            common_initial: false,
            constants: DeclaredConstants::ZERO,
            compensator: Some(Arc::new(|_, _, _, out: &mut [f64]| out.fill(0.0))),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let Dims { d, k, l } = self.dims;
        if d == 0 || k == 0 || l == 0 {
            return Err(Error::input("model dimensions d, k, l must be positive"));
        }
        if self.intensity.dims() != l || self.marks.len() != l {
            return Err(Error::input("intensity and mark measures must have l components"));
        }
        self.initial.validate()?;
        if self.initial.dim() != d {
            return Err(Error::input("initial law dimension differs from d"));
        }
        let c = &self.constants;
        if [c.lipschitz_state, c.lipschitz_measure, c.growth, c.fourth_moment]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::input("declared constants must be finite and nonnegative"));
        }
        Ok(())
    }

    pub fn with_constants(mut self, constants: DeclaredConstants) -> Self {
        self.constants = constants;
        self
    }

    pub fn with_initial(mut self, initial: InitialLaw) -> Self {
        self.initial = initial;
        self
    }

    /// Compensator drift `Σ_j ∫ γ^{(·,j)}(t, ν, r, x) λ^{(j)}_t(ν, r) Q^{(j)}(dr)`.
    ///
    /// `lambda_nodes[j][q]` must hold `λ^{(j)}` at the `q`-th quadrature node of
    /// `marks[j]` (see [`CoefficientSet::intensity_at_nodes`]).
    pub fn compensator_rate(
        &self,
        t: f64,
        nu: &Measure,
        x: &[f64],
        lambda_nodes: &[Vec<f64>],
        scratch: &mut [f64],
        out: &mut [f64],
    ) {
        if let Some(c) = &self.compensator {
            c(t, nu, x, out);
            return;
        }
        out.fill(0.0);
        for (j, q) in self.marks.iter().enumerate() {
            for ((r, w), lam) in q.nodes().iter().zip(&lambda_nodes[j]) {
                if *lam == 0.0 {
                    continue;
                }
                (self.jump)(t, nu, r, x, j, scratch);
                out.iter_mut().zip(scratch.iter()).for_each(|(o, g)| *o += w * lam * g);
            }
        }
    }

    /// `λ^{(j)}_t(ν, r)` at every quadrature node, or empty when a closed-form
    /// compensator makes them unnecessary.
    pub fn intensity_at_nodes(&self, t: f64, nu: &Measure) -> Vec<Vec<f64>> {
        if self.compensator.is_some() {
            return Vec::new();
        }
        self.marks
            .iter()
            .enumerate()
            .map(|(j, q)| q.nodes().iter().map(|(r, _)| self.intensity.evaluate(t, nu, r, j)).collect())
            .collect()
    }
}

/// Measure-independent Ornstein–Uhlenbeck particles `dX = -a X dt + vol dW`,
/// no jumps. Constants `K = a²`, `K⁰ = 0`, `β = max(a, vol √d)`, `γ* = 0`.
pub fn build_independent_ou(a: f64, vol: f64, d: usize, initial: InitialLaw) -> Result<CoefficientSet> {
    if !(a.is_finite() && a >= 0.0 && vol.is_finite() && vol >= 0.0) {
        return Err(Error::input("OU parameters must be finite and nonnegative"));
    }
    let mut set = CoefficientSet::zero(Dims { d, k: d, l: 1 }, initial)?;
    set.name = "independent_ou".into();
    set.drift = Arc::new(move |_, _, x, out: &mut [f64]| {
        out.iter_mut().zip(x).for_each(|(o, xi)| *o = -a * xi);
    });
    set.diffusion = Arc::new(move |_, _, _, out: &mut [f64]| {
        out.fill(0.0);
        for c in 0..d {
            out[c * d + c] = vol;
        }
    });
    set.constants = DeclaredConstants {
        lipschitz_state: a * a,
        lipschitz_measure: 0.0,
        growth: a.max(vol * (d as f64).sqrt()),
        fourth_moment: 0.0,
    };
    Ok(set)
}
