//! Euler–Maruyama stepping with exactly placed common jumps.
//!
//! Steps run on the base grid `{0, dt, 2dt, ..., T}` augmented by accepted jump
//! times (and, for a frozen environment, the environment's breakpoints). On a
//! step starting at `t` the coefficients, the compensator and the thinning of
//! every base point in `(t, t']` use the measure at `t`; an accepted point at
//! `τ` ends the step early, applies its jump to all particles and restarts at
//! `τ` with the post-jump measure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CoefficientSet, RegimeModel};
use crate::model::regime::{regime_intervals, transition_target};
use crate::noise::{
    derive_stream, derive_stream_on, entity, sample_base_field, BasePointField, BrownianPath, Coordinate,
    MarkMeasure, Purpose, SeedSpec, StreamKey, MAX_PARTICLE,
};
use crate::poisson::{AcceptedJumps, Jump};
use crate::stats::Estimate;
use crate::{Measure, Path};

/// Entity offset of the reference population's streams.
pub const REFERENCE_OFFSET: u64 = 1 << 40;
/// Entity offset of the secondary (half-size) reference population.
pub const SECONDARY_REFERENCE_OFFSET: u64 = 1 << 44;

/// Extra constant drift on one particle; breaks exchangeability on purpose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleBias {
    pub particle: usize,
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub dt: f64,
    /// Width of the Brownian noise grid; `dt` when unset.
    pub noise_dt: Option<f64>,
    pub n: usize,
    pub replication: u64,
    pub seeds: SeedSpec,
    /// Stream entity of the first particle.
    pub particle_offset: u64,
    pub bias: Option<ParticleBias>,
}

impl SimConfig {
    /// `dt = T / 1000`, particles keyed from 0.
    pub fn new(horizon: f64, n: usize, seeds: SeedSpec) -> Self {
        SimConfig {
            horizon,
            dt: horizon / 1000.0,
            noise_dt: None,
            n,
            replication: 0,
            seeds,
            particle_offset: 0,
            bias: None,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_replication(mut self, replication: u64) -> Self {
        self.replication = replication;
        self
    }

    pub fn noise_cell(&self) -> f64 {
        self.noise_dt.unwrap_or(self.dt)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::config("horizon T must be positive and finite"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0 && self.dt <= self.horizon) {
            return Err(Error::config("dt must satisfy 0 < dt <= T"));
        }
        if let Some(c) = self.noise_dt {
            if !(c.is_finite() && c > 0.0 && c <= self.horizon) {
                return Err(Error::config("noise_dt must satisfy 0 < noise_dt <= T"));
            }
        }
        if self.n == 0 {
            return Err(Error::config("population size n must be at least 1"));
        }
        if self.particle_offset.checked_add(self.n as u64).is_none_or(|end| end > MAX_PARTICLE) {
            return Err(Error::config("particle stream range exceeds 2^48"));
        }
        if let Some(b) = self.bias {
            if !b.drift.is_finite() {
                return Err(Error::config("bias drift must be finite"));
            }
        }
        Ok(())
    }

    /// `{0, dt, 2dt, ..., T}`, the last step shortened to land on `T`.
    pub fn base_grid(&self) -> Vec<f64> {
        base_grid(self.horizon, self.dt)
    }
}

pub fn base_grid(horizon: f64, dt: f64) -> Vec<f64> {
    let steps = ((horizon / dt) - 1e-9).ceil().max(1.0) as usize;
    let mut g: Vec<f64> = (0..steps).map(|k| k as f64 * dt).collect();
    g.push(horizon);
    g
}

/// Piecewise-constant regime path; `states[i]` holds on `[times[i], times[i+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimePath {
    pub times: Vec<f64>,
    /// Indices into the state set.
    pub states: Vec<usize>,
    pub horizon: f64,
}

impl RegimePath {
    pub fn state_at(&self, t: f64) -> usize {
        self.states[self.times.partition_point(|s| *s <= t).saturating_sub(1)]
    }

    pub fn switches(&self) -> usize {
        self.states.len() - 1
    }

    fn segments(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        self.times.iter().enumerate().map(move |(i, &a)| {
            let b = self.times.get(i + 1).copied().unwrap_or(self.horizon);
            (a, b, self.states[i])
        })
    }

    /// Row-major `m × m` transition counts.
    pub fn transition_counts(&self, m: usize) -> Vec<usize> {
        let mut c = vec![0; m * m];
        for w in self.states.windows(2) {
            c[w[0] * m + w[1]] += 1;
        }
        c
    }

    pub fn occupation_times(&self, m: usize) -> Vec<f64> {
        let mut occ = vec![0.0; m];
        for (a, b, s) in self.segments() {
            occ[s] += b - a;
        }
        occ
    }

    /// Maximum-likelihood rates `count(i → j) / time in i`; NaN for unvisited states.
    pub fn empirical_rates(&self, m: usize) -> Vec<f64> {
        let counts = self.transition_counts(m);
        let occ = self.occupation_times(m);
        (0..m * m)
            .map(|ij| if ij / m == ij % m { 0.0 } else { counts[ij] as f64 / occ[ij / m] })
            .collect()
    }

    /// Fraction of time spent in `state`, with a batch-means standard error over
    /// `batches` equal time blocks.
    pub fn occupation_fraction(&self, state: usize, batches: usize) -> Estimate {
        let batches = batches.max(2);
        let width = self.horizon / batches as f64;
        let mut frac = vec![0.0; batches];
        for (a, b, s) in self.segments() {
            if s != state {
                continue;
            }
            let first = ((a / width) as usize).min(batches - 1);
            let last = ((b / width) as usize).min(batches - 1);
            for (k, f) in frac.iter_mut().enumerate().take(last + 1).skip(first) {
                let lo = a.max(k as f64 * width);
                let hi = b.min((k + 1) as f64 * width);
                if hi > lo {
                    *f += (hi - lo) / width;
                }
            }
        }
        Estimate::from_samples(&frac)
    }
}

/// Simulated paths on the event-augmented grid. The stored value at a jump
/// time is post-jump; the pre-jump value is kept separately.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub grid: Vec<f64>,
    pub dim: usize,
    /// Stream entities of the simulated particles.
    pub particle_ids: Vec<u64>,
    /// `states[(g * particles + i) * dim + c]`.
    pub states: Vec<f64>,
    /// Grid points that carry a jump (state jump or regime switch).
    pub is_jump: Vec<bool>,
    /// `(grid index, pre-jump states of all particles)` at state jumps.
    pub pre_jump: Vec<(usize, Vec<f64>)>,
    pub jumps: AcceptedJumps,
    pub regime_path: Option<RegimePath>,
}

impl TrajectorySet {
    pub fn particles(&self) -> usize {
        self.particle_ids.len()
    }

    pub fn state(&self, g: usize, i: usize) -> &[f64] {
        let p = self.particles();
        &self.states[(g * p + i) * self.dim..(g * p + i + 1) * self.dim]
    }

    /// `X_{t-}` at grid point `g`.
    pub fn left_limit(&self, g: usize, i: usize) -> &[f64] {
        match self.pre_jump.binary_search_by_key(&g, |(k, _)| *k) {
            Ok(pos) => &self.pre_jump[pos].1[i * self.dim..(i + 1) * self.dim],
            Err(_) => self.state(g, i),
        }
    }

    pub fn terminal(&self, i: usize) -> &[f64] {
        self.state(self.grid.len() - 1, i)
    }

    /// Value at `t` of the càdlàg step interpolation.
    pub fn value_at(&self, t: f64, i: usize) -> &[f64] {
        let g = self.grid.partition_point(|s| *s <= t).saturating_sub(1);
        self.state(g, i)
    }
}

/// The reference population's measure path, standing in for the conditional law.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldProxy {
    pub n_ref: usize,
    pub offset: u64,
    pub path: Path,
}

enum Env<'a> {
    Own,
    Frozen(&'a Path),
}

struct Population {
    d: usize,
    k: usize,
    x: Vec<f64>,
    w: Vec<f64>,
    brownian: Vec<BrownianPath>,
}

impl Population {
    fn new(model: &CoefficientSet, cfg: &SimConfig, ids: &[u64]) -> Result<Self> {
        let (d, k) = (model.dims.d, model.dims.k);
        let mut x = vec![0.0; ids.len() * d];
        let mut brownian = Vec::with_capacity(ids.len());
        for (i, &e) in ids.iter().enumerate() {
            let key = StreamKey::particle(cfg.replication, e, Purpose::Init);
            let mut init = if model.common_initial {
                derive_stream_on(&cfg.seeds, Coordinate::Common, key)?
            } else {
                derive_stream(&cfg.seeds, key)?
            };
            model.initial.sample(&mut init, &mut x[i * d..(i + 1) * d]);
            brownian.push(brownian_path(&cfg.seeds, cfg.replication, e, k, cfg.noise_cell())?);
        }
        Ok(Population { d, k, x, w: vec![0.0; ids.len() * k], brownian })
    }
}

fn brownian_path(seeds: &SeedSpec, replication: u64, e: u64, k: usize, cell: f64) -> Result<BrownianPath> {
    let inc = derive_stream(seeds, StreamKey::particle(replication, e, Purpose::Brownian))?;
    let bridge = derive_stream(seeds, StreamKey::particle(replication, e, Purpose::Aux))?;
    Ok(BrownianPath::new(k, cell, inc, bridge))
}

fn check_finite(x: &[f64], t: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { time: t })
    }
}

fn check_base(model: &CoefficientSet, cfg: &SimConfig, base: &BasePointField) -> Result<()> {
    model.validate()?;
    cfg.validate()?;
    model.intensity.check_against(base)?;
    if (base.horizon - cfg.horizon).abs() > 1e-12 * cfg.horizon {
        return Err(Error::config("base field horizon differs from T"));
    }
    Ok(())
}

struct Output {
    traj: Option<TrajectorySet>,
    path: Option<Path>,
}

/// The common engine. `Env::Own` recomputes the empirical measure after every
/// step; `Env::Frozen` reads the given path and also stops at its breakpoints.
fn run(
    model: &CoefficientSet,
    cfg: &SimConfig,
    base: &BasePointField,
    ids: &[u64],
    env: Env<'_>,
    store_states: bool,
) -> Result<Output> {
    let mut pop = Population::new(model, cfg, ids)?;
    let (d, k, n) = (pop.d, pop.k, ids.len());
    let grid_base = cfg.base_grid();
    let horizon = cfg.horizon;

    let own = matches!(env, Env::Own);
    let mut own_nu = Measure::from_flat(d, pop.x.clone())?;
    if let Env::Frozen(p) = env {
        if p.measures()[0].dim() != d {
            return Err(Error::input("environment dimension differs from d"));
        }
    }
    check_finite(&pop.x, 0.0)?;
    let mut path = own.then(|| Path::new(own_nu.clone()));

    let mut grid = vec![0.0];
    let mut is_jump = vec![false];
    let mut pre_jump = Vec::new();
    let mut states = if store_states { pop.x.clone() } else { Vec::new() };
    let mut jumps = AcceptedJumps::empty(model.dims.l);

    let mut b = vec![0.0; d];
    let mut sigma = vec![0.0; d * k];
    let mut comp = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut wnew = vec![0.0; k];
    let mut g = vec![0.0; d];

    let mut t = 0.0;
    let mut gi = 1;
    let mut pi = base.points.partition_point(|p| p.time <= 0.0);
    while gi < grid_base.len() {
        let mut next = grid_base[gi];
        if let Env::Frozen(p) = env {
            let bp = p.breakpoints();
            let pos = bp.partition_point(|s| *s <= t);
            if pos < bp.len() && bp[pos] < next {
                next = bp[pos];
            }
        }
        // Every candidate point ends a substep, so thinning sees the pre-jump state.
        let candidate = base.points.get(pi).filter(|p| p.time <= next);
        let stop = candidate.map_or(next, |p| p.time);

        let nu = match env {
            Env::Own => &own_nu,
            Env::Frozen(p) => p.at(t),
        };
        let h = stop - t;
        let lambda_nodes = model.intensity_at_nodes(t, nu);
        for i in 0..n {
            let xi = &mut pop.x[i * d..(i + 1) * d];
            pop.brownian[i].value_at(stop, &mut wnew);
            let wi = &mut pop.w[i * k..(i + 1) * k];
            (model.drift)(t, nu, xi, &mut b);
            (model.diffusion)(t, nu, xi, &mut sigma);
            model.compensator_rate(t, nu, xi, &lambda_nodes, &mut scratch, &mut comp);
            if let Some(bias) = cfg.bias {
                if bias.particle == i && own {
                    b.iter_mut().for_each(|v| *v += bias.drift);
                }
            }
            for c in 0..d {
                let mut noise = 0.0;
                for (q, (wn, wo)) in wnew.iter().zip(wi.iter()).enumerate() {
                    noise += sigma[c * k + q] * (wn - wo);
                }
                xi[c] += (b[c] - comp[c]) * h + noise;
            }
            wi.copy_from_slice(&wnew);
        }
        check_finite(&pop.x, stop)?;

        let mut accepted = false;
        match candidate {
            Some(p) => {
                pi += 1;
                let pre = match env {
                    Env::Own => Measure::from_flat(d, pop.x.clone())?,
                    Env::Frozen(e) => e.left_limit(stop).clone(),
                };
                let v = model.intensity.checked(stop, &pre, &p.mark, p.dim, base.height_bound[p.dim])?;
                if p.height <= v {
                    accepted = true;
                    pre_jump.push((grid.len(), pop.x.clone()));
                    for i in 0..n {
                        let xi = &mut pop.x[i * d..(i + 1) * d];
                        (model.jump)(stop, &pre, &p.mark, xi, p.dim, &mut g);
                        xi.iter_mut().zip(&g).for_each(|(x, gv)| *x += gv);
                    }
                    check_finite(&pop.x, stop)?;
                    jumps.push(Jump { time: stop, dim: p.dim, mark: p.mark.clone() });
                }
                if let Some(path) = path.as_mut() {
                    own_nu = if accepted { Measure::from_flat(d, pop.x.clone())? } else { pre.clone() };
                    path.push_event(stop, pre, own_nu.clone())?;
                }
            }
            None => {
                if let Some(path) = path.as_mut() {
                    own_nu = Measure::from_flat(d, pop.x.clone())?;
                    path.push(stop, own_nu.clone())?;
                }
            }
        }

        t = stop;
        let on_grid = t >= grid_base[gi];
        if on_grid {
            gi += 1;
        }
        if on_grid || accepted {
            grid.push(t);
            is_jump.push(accepted);
            if store_states {
                states.extend_from_slice(&pop.x);
            }
        }
    }
    debug_assert_eq!(*grid.last().expect("non-empty"), horizon);

    let traj = store_states.then(|| TrajectorySet {
        grid,
        dim: d,
        particle_ids: ids.to_vec(),
        states,
        is_jump,
        pre_jump,
        jumps,
        regime_path: None,
    });
    Ok(Output { traj, path })
}

fn particle_ids(cfg: &SimConfig) -> Vec<u64> {
    (0..cfg.n as u64).map(|i| cfg.particle_offset + i).collect()
}

/// Simulate the `n`-particle system driven by `base`; returns the paths and
/// the empirical measure path on the same grid.
pub fn simulate_finite_system(
    model: &CoefficientSet,
    cfg: &SimConfig,
    base: &BasePointField,
) -> Result<(TrajectorySet, Path)> {
    check_base(model, cfg, base)?;
    let out = run(model, cfg, base, &particle_ids(cfg), Env::Own, true)?;
    Ok((out.traj.expect("stored"), out.path.expect("own path")))
}

/// Simulate a reference population of `n_ref` particles keyed from `offset`
/// on the same base field. Its stream range must not meet the finite system's
/// range `[cfg.particle_offset, cfg.particle_offset + cfg.n)`.
pub fn simulate_reference(
    model: &CoefficientSet,
    cfg: &SimConfig,
    n_ref: usize,
    offset: u64,
    base: &BasePointField,
) -> Result<MeanFieldProxy> {
    check_base(model, cfg, base)?;
    if n_ref < cfg.n {
        return Err(Error::config(format!("N_ref = {n_ref} must be at least n = {}", cfg.n)));
    }
    let (a0, a1) = (cfg.particle_offset, cfg.particle_offset + cfg.n as u64);
    let b1 = offset.checked_add(n_ref as u64).ok_or_else(|| Error::config("reference range overflows"))?;
    if offset < a1 && a0 < b1 {
        return Err(Error::config(
            "reference population streams overlap the finite system's; the reference must be distinguishable",
        ));
    }
    let rcfg = SimConfig { n: n_ref, particle_offset: offset, bias: None, ..cfg.clone() };
    rcfg.validate()?;
    let ids: Vec<u64> = (0..n_ref as u64).map(|i| offset + i).collect();
    let out = run(model, &rcfg, base, &ids, Env::Own, false)?;
    Ok(MeanFieldProxy { n_ref, offset, path: out.path.expect("own path") })
}

/// A single particle with the environment frozen to `env`, its own Brownian
/// motion and initial condition (entity `particle`) and jumps thinned from the
/// shared `base` at `λ_t(env_t, r)`.
pub fn simulate_conditioned_particle(
    model: &CoefficientSet,
    env: &Path,
    particle: u64,
    base: &BasePointField,
    cfg: &SimConfig,
) -> Result<TrajectorySet> {
    let one = SimConfig { n: 1, particle_offset: particle, bias: None, ..cfg.clone() };
    check_base(model, &one, base)?;
    let out = run(model, &one, base, &[particle], Env::Frozen(env), true)?;
    Ok(out.traj.expect("stored"))
}

/// The base field driving the regime: one noise dimension, unit-mass marks
/// (unused) and heights on `[0, |𝓔| H₀]`, on its own common stream.
pub fn regime_base_field(seeds: &SeedSpec, replication: u64, horizon: f64, model: &RegimeModel) -> Result<BasePointField> {
    let mut pts = derive_stream(seeds, StreamKey::new(replication, entity::REGIME_FIELD, Purpose::BasePoints))?;
    let mut mks = derive_stream(seeds, StreamKey::new(replication, entity::REGIME_FIELD, Purpose::Marks))?;
    let q = [MarkMeasure::uniform(1)?];
    sample_base_field(&mut pts, &mut mks, horizon, &q, &[model.spec.interval_axis_bound()])
}

/// Regime-switching population: the common regime `Y` jumps `i → j` at a base
/// point `(τ, u)` iff `u ∈ Γ^{(i,j)}(μ̄_t)`; between events each particle
/// follows `dX = b(μ̄, X, Y) dt + σ dW`.
pub fn simulate_regime_switching(model: &RegimeModel, cfg: &SimConfig, base: &BasePointField) -> Result<TrajectorySet> {
    cfg.validate()?;
    let m = model.spec.len();
    if base.dims() != 1 || (base.q_mass[0] - 1.0).abs() > 1e-12 {
        return Err(Error::config("regime base field must have one dimension with unit mark mass"));
    }
    if base.height_bound[0] < model.spec.interval_axis_bound() * (1.0 - 1e-12) {
        return Err(Error::config(format!(
            "regime base field height bound {} is below |E| H0 = {}",
            base.height_bound[0],
            model.spec.interval_axis_bound()
        )));
    }
    if (base.horizon - cfg.horizon).abs() > 1e-12 * cfg.horizon {
        return Err(Error::config("base field horizon differs from T"));
    }
    let d = model.d;
    let ids = particle_ids(cfg);
    let mut x = vec![0.0; cfg.n * d];
    let mut brownian = Vec::with_capacity(cfg.n);
    for (i, &e) in ids.iter().enumerate() {
        let mut init = derive_stream(&cfg.seeds, StreamKey::particle(cfg.replication, e, Purpose::Init))?;
        model.initial.sample(&mut init, &mut x[i * d..(i + 1) * d]);
        brownian.push(brownian_path(&cfg.seeds, cfg.replication, e, d, cfg.noise_cell())?);
    }
    check_finite(&x, 0.0)?;
    let mut w = vec![0.0; cfg.n * d];
    let mut wnew = vec![0.0; d];
    let mut b = vec![0.0; d];

    let states_set = model.spec.states();
    let mut y = model.initial_regime;
    let mut regime = RegimePath { times: vec![0.0], states: vec![y], horizon: cfg.horizon };
    let grid_base = cfg.base_grid();
    let mut grid = vec![0.0];
    let mut is_jump = vec![false];
    let mut states = x.clone();
    let mut nu = Measure::from_flat(d, x.clone())?;

    let mut t = 0.0;
    let mut gi = 1;
    let mut pi = base.points.partition_point(|p| p.time <= 0.0);
    while gi < grid_base.len() {
        let next = grid_base[gi];
        let candidate = base.points.get(pi).filter(|p| p.time <= next);
        let stop = candidate.map_or(next, |p| p.time);

        let h = stop - t;
        let e = states_set[y];
        for i in 0..cfg.n {
            let xi = &mut x[i * d..(i + 1) * d];
            brownian[i].value_at(stop, &mut wnew);
            let wi = &mut w[i * d..(i + 1) * d];
            (model.drift)(&nu, xi, e, &mut b);
            for c in 0..d {
                xi[c] += b[c] * h + model.vol * (wnew[c] - wi[c]);
            }
            wi.copy_from_slice(&wnew);
        }
        check_finite(&x, stop)?;
        nu = Measure::from_flat(d, x.clone())?;

        let mut switched = false;
        if let Some(p) = candidate {
            pi += 1;
            let q = model.spec.evaluate(&nu).map_err(|e| match e {
                Error::IntensityBound { dim, value, bound, .. } => Error::IntensityBound { dim, time: stop, value, bound },
                other => other,
            })?;
            if let Some(j) = transition_target(&regime_intervals(&q, m)?, y, p.height) {
                y = j;
                regime.times.push(stop);
                regime.states.push(j);
                switched = true;
            }
        }

        t = stop;
        let on_grid = t >= grid_base[gi];
        if on_grid {
            gi += 1;
        }
        if on_grid || switched {
            grid.push(t);
            is_jump.push(switched);
            states.extend_from_slice(&x);
        }
    }

    Ok(TrajectorySet {
        grid,
        dim: d,
        particle_ids: ids,
        states,
        is_jump,
        pre_jump: Vec::new(),
        jumps: AcceptedJumps::empty(1),
        regime_path: Some(regime),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_systemic_risk, Dims, InitialLaw, SystemicRiskParams};
    use crate::noise::common_base_field;

    fn seeds() -> SeedSpec {
        SeedSpec::new(3, 4)
    }

    fn systemic() -> CoefficientSet {
        build_systemic_risk(SystemicRiskParams::default(), 4.0, InitialLaw::Gaussian { mean: vec![0.0], std: 1.0 }).unwrap()
    }

    fn field(m: &CoefficientSet, t: f64, rep: u64) -> BasePointField {
        common_base_field(&seeds(), rep, t, &m.marks, m.intensity.bound()).unwrap()
    }

    #[test]
    fn grid_lands_on_horizon() {
        assert_eq!(base_grid(1.0, 0.25), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(base_grid(1.0, 0.3).last(), Some(&1.0));
        assert_eq!(base_grid(1.0, 0.3).len(), 5);
        assert_eq!(base_grid(1.0, 1.0), vec![0.0, 1.0]);
    }

    #[test]
    fn zero_model_is_constant() {
        let m = CoefficientSet::zero(Dims { d: 1, k: 1, l: 1 }, InitialLaw::Gaussian { mean: vec![0.0], std: 1.0 }).unwrap();
        let cfg = SimConfig::new(1.0, 5, seeds()).with_dt(0.1);
        let base = field(&m, 1.0, 0);
        let (traj, path) = simulate_finite_system(&m, &cfg, &base).unwrap();
        assert!(traj.jumps.is_empty());
        for g in 0..traj.grid.len() {
            for i in 0..5 {
                assert_eq!(traj.state(g, i), traj.state(0, i));
            }
        }
        assert_eq!(path.measures().len(), traj.grid.len());
    }

    #[test]
    fn jumps_are_common_and_placed_exactly() {
        let m = systemic();
        let cfg = SimConfig::new(2.0, 6, seeds()).with_dt(0.05);
        let base = field(&m, 2.0, 1);
        let (traj, _) = simulate_finite_system(&m, &cfg, &base).unwrap();
        assert!(!traj.jumps.is_empty());
        let jt: Vec<f64> = traj.jumps.times();
        let flagged: Vec<f64> = traj.grid.iter().zip(&traj.is_jump).filter(|(_, j)| **j).map(|(t, _)| *t).collect();
        assert_eq!(jt, flagged);
        for (g, pre) in &traj.pre_jump {
            for i in 0..6 {
                assert_eq!(traj.left_limit(*g, i), &pre[i..i + 1]);
                assert_ne!(traj.state(*g, i), traj.left_limit(*g, i));
            }
        }
    }

    #[test]
    fn conditioned_particle_reproduces_system_particle() {
        let m = systemic();
        let cfg = SimConfig::new(1.0, 8, seeds()).with_dt(0.02);
        let base = field(&m, 1.0, 2);
        let (traj, path) = simulate_finite_system(&m, &cfg, &base).unwrap();
        for i in [0usize, 3, 7] {
            let one = simulate_conditioned_particle(&m, &path, i as u64, &base, &cfg).unwrap();
            assert_eq!(one.grid, traj.grid);
            for g in 0..traj.grid.len() {
                assert_eq!(one.state(g, 0), traj.state(g, i));
            }
        }
    }

    #[test]
    fn reference_guard() {
        let m = systemic();
        let cfg = SimConfig::new(1.0, 8, seeds()).with_dt(0.1);
        let base = field(&m, 1.0, 0);
        assert!(matches!(simulate_reference(&m, &cfg, 8, 0, &base), Err(Error::Config(_))));
        assert!(matches!(simulate_reference(&m, &cfg, 4, REFERENCE_OFFSET, &base), Err(Error::Config(_))));
        let proxy = simulate_reference(&m, &cfg, 32, REFERENCE_OFFSET, &base).unwrap();
        assert_eq!(proxy.path.measures()[0].len(), 32);
    }

    #[test]
    fn divergence_is_reported() {
        let mut m = CoefficientSet::zero(Dims { d: 1, k: 1, l: 1 }, InitialLaw::Constant { value: vec![1.0] }).unwrap();
        m.drift = std::sync::Arc::new(|_, _, x: &[f64], out: &mut [f64]| out[0] = x[0] * x[0] * 1e30);
        let cfg = SimConfig::new(1.0, 1, seeds()).with_dt(0.1);
        let base = field(&m, 1.0, 0);
        assert!(matches!(simulate_finite_system(&m, &cfg, &base), Err(Error::Divergence { .. })));
    }

    #[test]
    fn regime_slopes_flip_at_switches() {
        use crate::model::{build_regime_switching, DeclaredConstants, RegimeSpec};
        let spec = RegimeSpec::constant(vec![-1.0, 1.0], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let model = build_regime_switching(
            spec,
            1,
            |_, _, e, out: &mut [f64]| out[0] = e,
            0.0,
            InitialLaw::Constant { value: vec![0.0] },
            0,
            DeclaredConstants::ZERO,
        )
        .unwrap();
        let cfg = SimConfig::new(10.0, 1, seeds()).with_dt(0.5);
        let base = regime_base_field(&seeds(), 0, 10.0, &model).unwrap();
        let traj = simulate_regime_switching(&model, &cfg, &base).unwrap();
        let rp = traj.regime_path.as_ref().unwrap();
        assert!(rp.switches() > 0);
        for g in 1..traj.grid.len() {
            let slope = (traj.state(g, 0)[0] - traj.state(g - 1, 0)[0]) / (traj.grid[g] - traj.grid[g - 1]);
            let e = if rp.state_at(traj.grid[g - 1]) == 0 { -1.0 } else { 1.0 };
            assert!((slope - e).abs() < 1e-9);
        }
    }
}
