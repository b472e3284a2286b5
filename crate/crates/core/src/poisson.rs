//! State-dependent marked Poisson noise realised by thinning a shared
//! dominating field, and integrals against the lifted and compensated
//! random measures.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::noise::{BasePointField, MarkMeasure, NoiseStream};
use crate::stats::Estimate;
use crate::{Measure, Path};

type IntensityFn = dyn Fn(f64, &Measure, &[f64], usize) -> f64 + Send + Sync;

/// `λ_t(ν, r)` per noise dimension, with its declared supremum `λ̄` and W₂
/// Lipschitz constant `K*`.
#[derive(Clone)]
pub struct IntensityCandidate {
    bound: Vec<f64>,
    lipschitz_w2: f64,
    mark_dependent: bool,
    eval: Arc<IntensityFn>,
}

impl fmt::Debug for IntensityCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IntensityCandidate")
            .field("bound", &self.bound)
            .field("lipschitz_w2", &self.lipschitz_w2)
            .field("mark_dependent", &self.mark_dependent)
            .finish_non_exhaustive()
    }
}

impl IntensityCandidate {
    /// `eval(t, ν, r, j)` must be deterministic and lie in `[0, bound[j]]`.
    pub fn new(
        bound: Vec<f64>,
        lipschitz_w2: f64,
        mark_dependent: bool,
        eval: impl Fn(f64, &Measure, &[f64], usize) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if bound.is_empty() || bound.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::input("intensity bounds must be positive and finite"));
        }
        if !(lipschitz_w2.is_finite() && lipschitz_w2 >= 0.0) {
            return Err(Error::input("intensity Lipschitz constant must be nonnegative"));
        }
        Ok(IntensityCandidate { bound, lipschitz_w2, mark_dependent, eval: Arc::new(eval) })
    }

    /// Constant intensity `λ ≡ values` with bound `bound`.
    pub fn constant(values: Vec<f64>, bound: Vec<f64>) -> Result<Self> {
        if values.len() != bound.len() {
            return Err(Error::input("one constant per noise dimension"));
        }
        IntensityCandidate::new(bound, 0.0, false, move |_, _, _, j| values[j])
    }

    /// `λ ≡ 0` over `l` dimensions (bound 1).
    pub fn zero(l: usize) -> Self {
        IntensityCandidate::new(vec![1.0; l], 0.0, false, |_, _, _, _| 0.0).expect("valid")
    }

    pub fn dims(&self) -> usize {
        self.bound.len()
    }

    pub fn bound(&self) -> &[f64] {
        &self.bound
    }

    pub fn lipschitz_w2(&self) -> f64 {
        self.lipschitz_w2
    }

    pub fn is_mark_dependent(&self) -> bool {
        self.mark_dependent
    }

    pub fn evaluate(&self, t: f64, nu: &Measure, r: &[f64], j: usize) -> f64 {
        (self.eval)(t, nu, r, j)
    }

    /// Evaluate and enforce `0 ≤ λ ≤ height_bound`.
    pub fn checked(&self, t: f64, nu: &Measure, r: &[f64], j: usize, height_bound: f64) -> Result<f64> {
        let v = self.evaluate(t, nu, r, j);
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::input(format!("intensity evaluated to {v} at t = {t}")));
        }
        if v > height_bound {
            return Err(Error::IntensityBound { dim: j, time: t, value: v, bound: height_bound });
        }
        Ok(v)
    }

    pub(crate) fn check_against(&self, base: &BasePointField) -> Result<()> {
        if base.dims() != self.dims() {
            return Err(Error::config(format!(
                "intensity has {} noise dimensions, base field has {}",
                self.dims(),
                base.dims()
            )));
        }
        for (j, (b, h)) in self.bound.iter().zip(&base.height_bound).enumerate() {
            if b > h {
                return Err(Error::config(format!(
                    "declared intensity bound {b} exceeds base height bound {h} in dimension {j}"
                )));
            }
        }
        Ok(())
    }
}

/// An accepted point of the marked process.
#[derive(Debug, Clone, PartialEq)]
pub struct Jump {
    pub time: f64,
    pub dim: usize,
    pub mark: Vec<f64>,
}

/// Accepted jumps per noise dimension, each list time-sorted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AcceptedJumps {
    pub per_dim: Vec<Vec<Jump>>,
}

impl AcceptedJumps {
    pub fn empty(l: usize) -> Self {
        AcceptedJumps { per_dim: vec![Vec::new(); l] }
    }

    pub fn push(&mut self, jump: Jump) {
        self.per_dim[jump.dim].push(jump);
    }

    pub fn total(&self) -> usize {
        self.per_dim.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// All jumps merged in time order (ties by dimension).
    pub fn sorted(&self) -> Vec<&Jump> {
        let mut all: Vec<&Jump> = self.per_dim.iter().flatten().collect();
        all.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.dim.cmp(&b.dim)));
        all
    }

    pub fn times(&self) -> Vec<f64> {
        self.sorted().iter().map(|j| j.time).collect()
    }
}

/// Accept the base point `(t, r, s)` iff `s ≤ λ_t(env_{t-}, r)`.
///
/// The environment is an input here, so there is no feedback; the integrator
/// interleaves the same rule with stepping when the environment is endogenous.
pub fn thin(base: &BasePointField, lambda: &IntensityCandidate, env: &Path) -> Result<AcceptedJumps> {
    lambda.check_against(base)?;
    let mut out = AcceptedJumps::empty(base.dims());
    for p in &base.points {
        let nu = env.left_limit(p.time);
        let v = lambda.checked(p.time, nu, &p.mark, p.dim, base.height_bound[p.dim])?;
        if p.height <= v {
            out.push(Jump { time: p.time, dim: p.dim, mark: p.mark.clone() });
        }
    }
    Ok(out)
}

/// Per-dimension `K_t^λ(R) = ∫ λ_t(ν, r) Q(dr)` with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMass {
    pub mass: Vec<f64>,
    pub std_err: Vec<f64>,
}

/// Estimate the kernel mass. Exact (zero standard error) when `λ` does not
/// depend on the mark or the mark law is discrete; otherwise Monte Carlo with
/// `budget` draws from `Q / Q(R)`.
pub fn kernel_mass(
    lambda: &IntensityCandidate,
    t: f64,
    nu: &Measure,
    marks: &[MarkMeasure],
    budget: usize,
    rng: &mut NoiseStream,
) -> Result<KernelMass> {
    if marks.len() != lambda.dims() {
        return Err(Error::input("one mark measure per noise dimension required"));
    }
    let mut mass = Vec::with_capacity(marks.len());
    let mut std_err = Vec::with_capacity(marks.len());
    for (j, q) in marks.iter().enumerate() {
        let (m, se) = mark_expectation(q, budget, rng, lambda.is_mark_dependent(), |r| lambda.evaluate(t, nu, r, j))?;
        mass.push(m);
        std_err.push(se);
    }
    Ok(KernelMass { mass, std_err })
}

fn mark_expectation(
    q: &MarkMeasure,
    budget: usize,
    rng: &mut NoiseStream,
    mark_dependent: bool,
    mut f: impl FnMut(&[f64]) -> f64,
) -> Result<(f64, f64)> {
    if !mark_dependent {
        let r = &q.nodes()[0].0;
        return Ok((q.mass() * f(r), 0.0));
    }
    if q.is_discrete() {
        return Ok((q.integrate(f), 0.0));
    }
    if budget == 0 {
        return Err(Error::input("Monte Carlo budget must be at least 1"));
    }
    let mut r = Vec::new();
    let samples: Vec<f64> = (0..budget)
        .map(|_| {
            q.sample(rng, &mut r);
            f(&r)
        })
        .collect();
    let e = Estimate::from_samples(&samples);
    let se = if budget < 2 { f64::INFINITY } else { e.std_err };
    Ok((q.mass() * e.mean, q.mass() * se))
}

/// `‖U_t‖²_{λ_t(ν)} = Σ_j ∫ |U^{(·,j)}(t, r)|² λ^{(j)}_t(ν, r) Q^{(j)}(dr)`,
/// the trace form of the random inner product, by Monte Carlo over the mark
/// law (exact for discrete laws). Returns `(value, std_err)`.
///
/// `u(t, r, j, out)` writes the `d`-vector column `j` of `U` at mark `r`.
#[allow(clippy::too_many_arguments)]
pub fn random_norm_sq(
    d: usize,
    u: impl Fn(f64, &[f64], usize, &mut [f64]),
    lambda: &IntensityCandidate,
    nu: &Measure,
    t: f64,
    marks: &[MarkMeasure],
    budget: usize,
    rng: &mut NoiseStream,
) -> Result<(f64, f64)> {
    if marks.len() != lambda.dims() {
        return Err(Error::input("one mark measure per noise dimension required"));
    }
    let mut col = vec![0.0; d];
    let mut value = 0.0;
    let mut var = 0.0;
    for (j, q) in marks.iter().enumerate() {
        let (m, se) = mark_expectation(q, budget, rng, true, |r| {
            u(t, r, j, &mut col);
            col.iter().map(|c| c * c).sum::<f64>() * lambda.evaluate(t, nu, r, j)
        })?;
        value += m;
        var += se * se;
    }
    Ok((value, var.sqrt()))
}

/// [`random_norm_sq`] computed with the deterministic quadrature of each mark
/// measure (exact for discrete laws and polynomial integrands of moderate
/// degree).
pub fn random_norm_sq_quadrature(
    d: usize,
    mut u: impl FnMut(f64, &[f64], usize, &mut [f64]),
    lambda: &IntensityCandidate,
    nu: &Measure,
    t: f64,
    marks: &[MarkMeasure],
) -> f64 {
    let mut col = vec![0.0; d];
    marks
        .iter()
        .enumerate()
        .map(|(j, q)| {
            q.integrate(|r| {
                u(t, r, j, &mut col);
                col.iter().map(|c| c * c).sum::<f64>() * lambda.evaluate(t, nu, r, j)
            })
        })
        .sum()
}

/// `Σ_j Σ_i U^{(·,j)}(τ_i^{(j)}, ξ_i^{(j)}) 1{τ_i^{(j)} ≤ up_to}`.
pub fn integrate_marked(
    d: usize,
    u: impl Fn(f64, &[f64], usize, &mut [f64]),
    jumps: &AcceptedJumps,
    up_to: f64,
) -> Vec<f64> {
    let mut total = vec![0.0; d];
    let mut col = vec![0.0; d];
    for (j, list) in jumps.per_dim.iter().enumerate() {
        for jump in list.iter().take_while(|jp| jp.time <= up_to) {
            u(jump.time, &jump.mark, j, &mut col);
            total.iter_mut().zip(&col).for_each(|(a, c)| *a += c);
        }
    }
    total
}

/// Integral against the compensated measure: [`integrate_marked`] up to the
/// last grid time minus `∫∫ U_t(r) diag(λ_t(env_{t-}, r) Q(dr)) dt`, the time
/// integral by left-endpoint quadrature on `grid ∪ jump times ∪ env breakpoints`.
pub fn integrate_compensated(
    d: usize,
    u: impl Fn(f64, &[f64], usize, &mut [f64]),
    jumps: &AcceptedJumps,
    lambda: &IntensityCandidate,
    env: &Path,
    marks: &[MarkMeasure],
    grid: &[f64],
) -> Result<Vec<f64>> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::input("compensator grid must be strictly increasing"));
    }
    if marks.len() != lambda.dims() {
        return Err(Error::input("one mark measure per noise dimension required"));
    }
    let up_to = *grid.last().expect("non-empty");
    let mut times: Vec<f64> = grid.to_vec();
    times.extend(jumps.times().into_iter().filter(|t| *t > grid[0] && *t < up_to));
    times.extend(env.breakpoints().iter().copied().filter(|t| *t > grid[0] && *t < up_to));
    times.sort_by(f64::total_cmp);
    times.dedup();

    let mut total = integrate_marked(d, &u, jumps, up_to);
    let mut col = vec![0.0; d];
    let mut rate = vec![0.0; d];
    for w in times.windows(2) {
        let (t, dt) = (w[0], w[1] - w[0]);
        let nu = env.at(t);
        rate.iter_mut().for_each(|v| *v = 0.0);
        for (j, q) in marks.iter().enumerate() {
            for (r, weight) in q.nodes() {
                let lam = lambda.evaluate(t, nu, r, j);
                if lam == 0.0 {
                    continue;
                }
                u(t, r, j, &mut col);
                rate.iter_mut().zip(&col).for_each(|(a, c)| *a += weight * lam * c);
            }
        }
        total.iter_mut().zip(&rate).for_each(|(a, r)| *a -= r * dt);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{common_base_field, derive_stream, entity, Purpose, SeedSpec, StreamKey};

    fn env0() -> Path {
        Path::constant(Measure::dirac(&[0.0]).unwrap())
    }

    fn field(rep: u64, horizon: f64, bound: f64) -> BasePointField {
        let q = [MarkMeasure::uniform(1).unwrap()];
        common_base_field(&SeedSpec::new(3, 4), rep, horizon, &q, &[bound]).unwrap()
    }

    fn aux() -> NoiseStream {
        derive_stream(&SeedSpec::new(1, 2), StreamKey::new(0, entity::INITIAL, Purpose::Aux)).unwrap()
    }

    #[test]
    fn zero_intensity_accepts_nothing() {
        let base = field(0, 10.0, 2.0);
        let l = IntensityCandidate::constant(vec![0.0], vec![2.0]).unwrap();
        assert!(thin(&base, &l, &env0()).unwrap().is_empty());
    }

    #[test]
    fn intensity_at_bound_accepts_all() {
        let base = field(1, 10.0, 2.0);
        let l = IntensityCandidate::constant(vec![2.0], vec![2.0]).unwrap();
        assert_eq!(thin(&base, &l, &env0()).unwrap().total(), base.points.len());
    }

    #[test]
    fn bound_violation_aborts() {
        let base = field(2, 10.0, 2.0);
        assert!(!base.points.is_empty());
        let sneaky = IntensityCandidate::new(vec![2.0], 0.0, false, |_, _, _, _| 3.0).unwrap();
        assert!(matches!(thin(&base, &sneaky, &env0()), Err(Error::IntensityBound { .. })));
        let declared = IntensityCandidate::constant(vec![1.0], vec![5.0]).unwrap();
        assert!(matches!(thin(&base, &declared, &env0()), Err(Error::Config(_))));
    }

    #[test]
    fn thinning_is_monotone_in_intensity() {
        let base = field(3, 20.0, 3.0);
        let low = IntensityCandidate::new(vec![3.0], 0.0, true, |_, _, r, _| 2.0 * r[0]).unwrap();
        let high = IntensityCandidate::new(vec![3.0], 0.0, true, |_, _, r, _| 1.0 + 2.0 * r[0]).unwrap();
        let a = thin(&base, &low, &env0()).unwrap();
        let b = thin(&base, &high, &env0()).unwrap();
        assert!(a.per_dim[0].iter().all(|j| b.per_dim[0].contains(j)));
    }

    #[test]
    fn thinning_uses_left_limit() {
        // Environment switches at t = 0.5 from mean 0 to mean 1; the intensity
        // is 2 * mean, so only points after the switch can be accepted.
        let mut env = Path::new(Measure::dirac(&[0.0]).unwrap());
        env.push(0.5, Measure::dirac(&[1.0]).unwrap()).unwrap();
        let l = IntensityCandidate::new(vec![2.0], 2.0, false, |_, nu, _, _| 2.0 * nu.mean()[0]).unwrap();
        let base = field(4, 1.0, 2.0);
        let acc = thin(&base, &l, &env).unwrap();
        assert!(acc.per_dim[0].iter().all(|j| j.time > 0.5));
        assert_eq!(acc.total(), base.points.iter().filter(|p| p.time > 0.5).count());
    }

    #[test]
    fn kernel_mass_cases() {
        let nu = Measure::dirac(&[0.0]).unwrap();
        let mut rng = aux();
        let c = IntensityCandidate::constant(vec![1.7], vec![2.0]).unwrap();
        let km = kernel_mass(&c, 0.0, &nu, &[MarkMeasure::gaussian(1).unwrap()], 10, &mut rng).unwrap();
        assert_eq!(km.mass, vec![1.7]);
        assert_eq!(km.std_err, vec![0.0]);

        let disc = MarkMeasure::discrete(vec![vec![1.0], vec![2.0]], vec![0.5, 0.5]).unwrap();
        let l = IntensityCandidate::new(vec![3.0], 0.0, true, |_, _, r, _| if r[0] == 1.0 { 1.0 } else { 3.0 }).unwrap();
        let km = kernel_mass(&l, 0.0, &nu, &[disc], 1, &mut rng).unwrap();
        assert_eq!(km.mass, vec![2.0]);

        let sq = IntensityCandidate::new(vec![1.0], 0.0, true, |_, _, r, _| r[0] * r[0]).unwrap();
        let km = kernel_mass(&sq, 0.0, &nu, &[MarkMeasure::uniform(1).unwrap()], 100_000, &mut rng).unwrap();
        assert!((km.mass[0] - 1.0 / 3.0).abs() < 3.0 * km.std_err[0], "{km:?}");
    }

    #[test]
    fn random_norm_cases() {
        let nu = Measure::dirac(&[0.0]).unwrap();
        let mut rng = aux();
        let q = [MarkMeasure::uniform(1).unwrap()];
        let one = IntensityCandidate::constant(vec![1.0], vec![1.0]).unwrap();
        let (z, _) = random_norm_sq(1, |_, _, _, o: &mut [f64]| o[0] = 0.0, &one, &nu, 0.0, &q, 100, &mut rng).unwrap();
        assert_eq!(z, 0.0);
        let c = IntensityCandidate::constant(vec![2.5], vec![3.0]).unwrap();
        let v = random_norm_sq_quadrature(1, |_, _, _, o: &mut [f64]| o[0] = 1.5, &c, &nu, 0.0, &q);
        assert!((v - 1.5 * 1.5 * 2.5).abs() < 1e-12);
        let (est, se) =
            random_norm_sq(1, |_, r: &[f64], _, o: &mut [f64]| o[0] = r[0], &one, &nu, 0.0, &q, 100_000, &mut rng).unwrap();
        assert!((est - 1.0 / 3.0).abs() < 3.0 * se);
        let exact = random_norm_sq_quadrature(1, |_, r: &[f64], _, o: &mut [f64]| o[0] = r[0], &one, &nu, 0.0, &q);
        assert!((exact - 1.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn marked_integral_examples() {
        let mut jumps = AcceptedJumps::empty(1);
        assert_eq!(integrate_marked(1, |_, _, _, o: &mut [f64]| o[0] = 1.0, &jumps, 1.0), vec![0.0]);
        for (t, r) in [(0.1, 0.2), (0.4, 0.5), (0.7, 0.9)] {
            jumps.push(Jump { time: t, dim: 0, mark: vec![r] });
        }
        assert_eq!(integrate_marked(1, |_, _, _, o: &mut [f64]| o[0] = 1.0, &jumps, 1.0), vec![3.0]);
        let s = integrate_marked(1, |_, r: &[f64], _, o: &mut [f64]| o[0] = r[0], &jumps, 0.5);
        assert!((s[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn compensated_trivial_cases() {
        let base = field(5, 5.0, 2.0);
        let env = env0();
        let q = [MarkMeasure::uniform(1).unwrap()];
        let grid: Vec<f64> = (0..=50).map(|i| i as f64 * 0.1).collect();
        let one = IntensityCandidate::constant(vec![1.0], vec![2.0]).unwrap();
        let jumps = thin(&base, &one, &env).unwrap();
        let z = integrate_compensated(1, |_, _, _, o: &mut [f64]| o[0] = 0.0, &jumps, &one, &env, &q, &grid).unwrap();
        assert_eq!(z, vec![0.0]);
        let zero = IntensityCandidate::constant(vec![0.0], vec![2.0]).unwrap();
        let none = thin(&base, &zero, &env).unwrap();
        let v = integrate_compensated(1, |_, _, _, o: &mut [f64]| o[0] = 1.0, &none, &zero, &env, &q, &grid).unwrap();
        assert_eq!(v, vec![0.0]);
        let c = integrate_compensated(1, |_, _, _, o: &mut [f64]| o[0] = 1.0, &jumps, &one, &env, &q, &grid).unwrap();
        assert!((c[0] - (jumps.total() as f64 - 5.0)).abs() < 1e-9);
    }
}
