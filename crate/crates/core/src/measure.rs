//! Uniform-weight empirical measures and their piecewise-constant paths.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `(1/n) Σ δ_{x_i}` over `n ≥ 1` finite atoms in `R^d`, stored row-major.
/// Mean and variance are computed once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure<S: Scalar> {
    dim: usize,
    atoms: Vec<S>,
    mean: Vec<S>,
    variance: S,
}

impl<S: Scalar> EmpiricalMeasure<S> {
    /// Measure from `n * dim` row-major coordinates.
    pub fn from_flat(dim: usize, atoms: Vec<S>) -> Result<Self> {
        if dim == 0 || atoms.is_empty() || atoms.len() % dim != 0 {
            return Err(Error::input("empirical measure needs n >= 1 atoms of a positive dimension"));
        }
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("empirical measure atoms must be finite"));
        }
        Ok(Self::from_flat_unchecked(dim, atoms))
    }

    pub(crate) fn from_flat_unchecked(dim: usize, atoms: Vec<S>) -> Self {
        let n = atoms.len() / dim;
        let inv_n = S::one() / S::count(n);
        let mut mean = vec![S::zero(); dim];
        for x in atoms.chunks_exact(dim) {
            for (m, v) in mean.iter_mut().zip(x) {
                *m = *m + *v;
            }
        }
        for m in &mut mean {
            *m = *m * inv_n;
        }
        let mut variance = S::zero();
        for x in atoms.chunks_exact(dim) {
            for (m, v) in mean.iter().zip(x) {
                let c = *v - *m;
                variance = variance + c * c;
            }
        }
        variance = variance * inv_n;
        EmpiricalMeasure { dim, atoms, mean, variance }
    }

    pub fn from_points(points: &[Vec<S>]) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::input("atoms must share a dimension"));
        }
        Self::from_flat(dim, points.concat())
    }

    /// One-dimensional measure from scalar atoms.
    pub fn from_scalars(values: &[S]) -> Result<Self> {
        Self::from_flat(1, values.to_vec())
    }

    pub fn dirac(x: &[S]) -> Result<Self> {
        Self::from_flat(x.len(), x.to_vec())
    }

    pub fn len(&self) -> usize {
        self.atoms.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atom(&self, i: usize) -> &[S] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    pub fn atoms(&self) -> impl Iterator<Item = &[S]> {
        self.atoms.chunks_exact(self.dim)
    }

    pub fn flat(&self) -> &[S] {
        &self.atoms
    }

    pub fn mean(&self) -> &[S] {
        &self.mean
    }

    /// `∫ |x - m|² dν`, the trace of the covariance (population normalisation).
    pub fn variance(&self) -> S {
        self.variance
    }

    /// `∫ |x|² dν`.
    pub fn second_moment(&self) -> S {
        self.atoms.iter().map(|v| *v * *v).sum::<S>() / S::count(self.len())
    }

    /// Each atom repeated `times` times; the measure is unchanged.
    pub fn replicate(&self, times: usize) -> Self {
        let mut atoms = Vec::with_capacity(self.atoms.len() * times);
        for x in self.atoms() {
            for _ in 0..times {
                atoms.extend_from_slice(x);
            }
        }
        EmpiricalMeasure { dim: self.dim, atoms, mean: self.mean.clone(), variance: self.variance }
    }

    /// Sub-measure over the selected atom indices.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut atoms = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            atoms.extend_from_slice(self.atom(i));
        }
        Self::from_flat_unchecked(self.dim, atoms)
    }
}

/// Càdlàg piecewise-constant measure-valued path: `measures[i]` holds on
/// `[breakpoints[i], breakpoints[i+1])`.
///
/// A breakpoint may carry an explicit left limit. The integrator uses this at
/// event times, where the pre-event measure is the one reached by the last
/// drift-diffusion step rather than the previous segment's value.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurePath<S: Scalar> {
    breakpoints: Vec<f64>,
    measures: Vec<EmpiricalMeasure<S>>,
    lefts: Vec<Option<EmpiricalMeasure<S>>>,
}

impl<S: Scalar> MeasurePath<S> {
    pub fn new(initial: EmpiricalMeasure<S>) -> Self {
        MeasurePath { breakpoints: vec![0.0], measures: vec![initial], lefts: vec![None] }
    }

    /// A path constant in time.
    pub fn constant(measure: EmpiricalMeasure<S>) -> Self {
        Self::new(measure)
    }

    pub fn from_parts(breakpoints: Vec<f64>, measures: Vec<EmpiricalMeasure<S>>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != measures.len() {
            return Err(Error::input("one measure per breakpoint required"));
        }
        if breakpoints[0] != 0.0 || breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::input("breakpoints must start at 0 and strictly increase"));
        }
        let lefts = vec![None; breakpoints.len()];
        Ok(MeasurePath { breakpoints, measures, lefts })
    }

    /// Append a new segment starting at `t`.
    pub fn push(&mut self, t: f64, measure: EmpiricalMeasure<S>) -> Result<()> {
        self.push_inner(t, None, measure)
    }

    /// Append a segment starting at `t` whose left limit at `t` is `left`.
    pub fn push_event(&mut self, t: f64, left: EmpiricalMeasure<S>, measure: EmpiricalMeasure<S>) -> Result<()> {
        self.push_inner(t, Some(left), measure)
    }

    fn push_inner(&mut self, t: f64, left: Option<EmpiricalMeasure<S>>, measure: EmpiricalMeasure<S>) -> Result<()> {
        if !(t > *self.breakpoints.last().expect("non-empty")) {
            return Err(Error::input("breakpoints must strictly increase"));
        }
        self.breakpoints.push(t);
        self.measures.push(measure);
        self.lefts.push(left);
        Ok(())
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn measures(&self) -> &[EmpiricalMeasure<S>] {
        &self.measures
    }

    /// Index of the segment containing `t` (right-continuous).
    pub fn segment_at(&self, t: f64) -> usize {
        self.breakpoints.partition_point(|b| *b <= t).saturating_sub(1)
    }

    /// Value at `t`.
    pub fn at(&self, t: f64) -> &EmpiricalMeasure<S> {
        &self.measures[self.segment_at(t)]
    }

    /// Left limit at `t` (the initial value at `t = 0`): the explicit left
    /// limit if `t` is a breakpoint carrying one, the previous segment otherwise.
    pub fn left_limit(&self, t: f64) -> &EmpiricalMeasure<S> {
        let i = self.breakpoints.partition_point(|b| *b < t);
        if let Some(Some(left)) = (self.breakpoints.get(i) == Some(&t)).then(|| self.lefts[i].as_ref()) {
            return left;
        }
        &self.measures[i.saturating_sub(1)]
    }
}
