//! Reproducible randomness with an explicit common / idiosyncratic split.
//!
//! Every stream is a ChaCha8 keystream whose 256-bit key is the concatenation
//! of one of the two seeds with the [`StreamKey`] fields, so streams are a pure
//! function of `(seed, key)`: no state is shared between replications,
//! particles or threads and nothing depends on the order in which streams are
//! requested. Base Poisson points and marks live on the common seed; Brownian
//! increments, bridge refinements and (by default) initial conditions live on
//! the idiosyncratic seed.

use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_hermite_normal, gauss_legendre_unit};

/// The two seeds of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub common_seed: u64,
    pub idiosyncratic_seed: u64,
}

impl SeedSpec {
    pub fn new(common_seed: u64, idiosyncratic_seed: u64) -> Self {
        SeedSpec { common_seed, idiosyncratic_seed }
    }
}

/// Parse a 64-bit seed written in decimal or `0x`-prefixed hexadecimal.
pub fn parse_seed(text: &str) -> Result<u64> {
    let t = text.trim();
    let parsed = if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16)
    } else {
        t.parse::<u64>()
    };
    parsed.map_err(|_| Error::input(format!("invalid 64-bit seed `{text}`")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Brownian,
    BasePoints,
    Marks,
    Init,
    Aux,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Brownian => 1,
            Purpose::BasePoints => 2,
            Purpose::Marks => 3,
            Purpose::Init => 4,
            Purpose::Aux => 5,
        }
    }

    /// Seed coordinate a purpose draws from unless overridden.
    pub fn default_coordinate(self) -> Coordinate {
        match self {
            Purpose::BasePoints | Purpose::Marks => Coordinate::Common,
            Purpose::Brownian | Purpose::Init | Purpose::Aux => Coordinate::Idiosyncratic,
        }
    }
}

/// Which factor of the product probability space a stream belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinate {
    Common,
    Idiosyncratic,
}

/// Largest replication index accepted by [`derive_stream`].
pub const MAX_REPLICATION: u64 = 1 << 48;
/// Particle entities must lie below this value; the top of the range is
/// reserved for the sentinels below.
pub const MAX_PARTICLE: u64 = 1 << 48;

/// Reserved entity identifiers.
pub mod entity {
    pub const BASE_FIELD: u64 = u64::MAX;
    pub const MARKS: u64 = u64::MAX - 1;
    pub const INITIAL: u64 = u64::MAX - 2;
    pub const REGIME_FIELD: u64 = u64::MAX - 3;
    pub const SUBSAMPLE: u64 = u64::MAX - 4;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub replication: u64,
    pub entity: u64,
    pub purpose: Purpose,
}

impl StreamKey {
    pub fn new(replication: u64, entity: u64, purpose: Purpose) -> Self {
        StreamKey { replication, entity, purpose }
    }

    pub fn particle(replication: u64, particle: u64, purpose: Purpose) -> Self {
        StreamKey::new(replication, particle, purpose)
    }

    fn validate(&self) -> Result<()> {
        if self.replication >= MAX_REPLICATION {
            return Err(Error::config(format!(
                "replication index {} out of range (< 2^48)",
                self.replication
            )));
        }
        let sentinel = matches!(
            self.entity,
            entity::BASE_FIELD | entity::MARKS | entity::INITIAL | entity::REGIME_FIELD | entity::SUBSAMPLE
        );
        if !sentinel && self.entity >= MAX_PARTICLE {
            return Err(Error::config(format!(
                "entity {} is neither a particle index (< 2^48) nor a reserved sentinel",
                self.entity
            )));
        }
        Ok(())
    }
}

/// A deterministic random stream. Cheap to re-derive; confined to one thread.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    /// Uniform draw on `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

impl RngCore for NoiseStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Derive the stream for `key` on the coordinate its purpose belongs to.
pub fn derive_stream(spec: &SeedSpec, key: StreamKey) -> Result<NoiseStream> {
    derive_stream_on(spec, key.purpose.default_coordinate(), key)
}

/// Derive the stream for `key` on an explicit seed coordinate.
pub fn derive_stream_on(spec: &SeedSpec, coordinate: Coordinate, key: StreamKey) -> Result<NoiseStream> {
    key.validate()?;
    let (seed, ctag) = match coordinate {
        Coordinate::Common => (spec.common_seed, 0u64),
        Coordinate::Idiosyncratic => (spec.idiosyncratic_seed, 1u64),
    };
    let mut bytes = [0u8; 32];
    bytes[0..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&key.replication.to_le_bytes());
    bytes[16..24].copy_from_slice(&key.entity.to_le_bytes());
    bytes[24..32].copy_from_slice(&(key.purpose.tag() | (ctag << 8)).to_le_bytes());
    Ok(NoiseStream { rng: ChaCha8Rng::from_seed(bytes) })
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid[0] != 0.0 {
        return Err(Error::input("time grid must start at 0"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::input("time grid must be strictly increasing"));
    }
    Ok(())
}

/// Independent `N(0, (t_{i+1} - t_i) I_k)` increments over `grid`.
pub fn brownian_increments(stream: &mut NoiseStream, grid: &[f64], k: usize) -> Result<Vec<Vec<f64>>> {
    check_grid(grid)?;
    Ok(grid
        .windows(2)
        .map(|w| {
            let s = (w[1] - w[0]).sqrt();
            (0..k).map(|_| s * stream.normal()).collect()
        })
        .collect())
}

/// A `k`-dimensional Brownian path sampled on a uniform noise grid of width
/// `cell`, refined by Brownian bridges at off-grid times.
///
/// Values at multiples of `cell` depend only on the stream, so simulations at
/// different step sizes that are multiples of `cell` see the same path.
/// Queries must be non-decreasing in time.
#[derive(Debug, Clone)]
pub struct BrownianPath {
    k: usize,
    cell: f64,
    increments: NoiseStream,
    bridge: NoiseStream,
    cell_index: u64,
    w_cell_start: Vec<f64>,
    w_cell_end: Vec<f64>,
    last_time: f64,
    w_last: Vec<f64>,
}

impl BrownianPath {
    pub fn new(k: usize, cell: f64, increments: NoiseStream, bridge: NoiseStream) -> Self {
        let mut path = BrownianPath {
            k,
            cell,
            increments,
            bridge,
            cell_index: 0,
            w_cell_start: vec![0.0; k],
            w_cell_end: vec![0.0; k],
            last_time: 0.0,
            w_last: vec![0.0; k],
        };
        path.draw_cell_end();
        path
    }

    fn draw_cell_end(&mut self) {
        let s = self.cell.sqrt();
        for c in 0..self.k {
            self.w_cell_end[c] = self.w_cell_start[c] + s * self.increments.normal();
        }
    }

    fn cell_end_time(&self) -> f64 {
        (self.cell_index + 1) as f64 * self.cell
    }

    /// Write `W(t)` into `out`.
    pub fn value_at(&mut self, t: f64, out: &mut [f64]) {
        debug_assert!(t + 1e-12 * self.cell >= self.last_time, "non-monotone Brownian query");
        let snap = (t / self.cell).round();
        let on_grid = (t - snap * self.cell).abs() <= 1e-9 * self.cell;
        let target_cell = if on_grid { snap as u64 } else { (t / self.cell).floor() as u64 };
        while self.cell_index < target_cell {
            self.w_cell_start.copy_from_slice(&self.w_cell_end);
            self.cell_index += 1;
            self.last_time = self.cell_index as f64 * self.cell;
            self.w_last.copy_from_slice(&self.w_cell_start);
            self.draw_cell_end();
        }
        if on_grid {
            // t is the start of the current cell.
            self.last_time = t;
            self.w_last.copy_from_slice(&self.w_cell_start);
            out.copy_from_slice(&self.w_cell_start);
            return;
        }
        let (a, b) = (self.last_time, self.cell_end_time());
        if t <= a {
            out.copy_from_slice(&self.w_last);
            return;
        }
        let frac = (t - a) / (b - a);
        let sd = ((t - a) * (b - t) / (b - a)).max(0.0).sqrt();
        for c in 0..self.k {
            let mean = self.w_last[c] + frac * (self.w_cell_end[c] - self.w_last[c]);
            self.w_last[c] = mean + sd * self.bridge.normal();
        }
        self.last_time = t;
        out.copy_from_slice(&self.w_last);
    }
}

/// Built-in probability laws for marks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarkLaw {
    /// Uniform on `[0, 1]^dim`.
    Uniform { dim: usize },
    /// Standard Gaussian on `R^dim`.
    Gaussian { dim: usize },
    /// Finitely many atoms with normalised weights.
    Discrete { atoms: Vec<Vec<f64>>, weights: Vec<f64> },
}

/// Gauss points per coordinate for tensor quadrature, by mark dimension.
const QUADRATURE_POINTS: [usize; 4] = [24, 12, 8, 6];

/// A finite mark measure `Q = mass · law`.
#[derive(Debug, Clone)]
pub struct MarkMeasure {
    law: MarkLaw,
    mass: f64,
    nodes: Arc<Vec<(Vec<f64>, f64)>>,
}

impl MarkMeasure {
    pub fn uniform(dim: usize) -> Result<Self> {
        Self::build(MarkLaw::Uniform { dim }, 1.0)
    }

    pub fn gaussian(dim: usize) -> Result<Self> {
        Self::build(MarkLaw::Gaussian { dim }, 1.0)
    }

    /// Discrete measure with the given (unnormalised) atom masses.
    pub fn discrete(atoms: Vec<Vec<f64>>, masses: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != masses.len() {
            return Err(Error::input("discrete mark law needs one mass per atom"));
        }
        let dim = atoms[0].len();
        if atoms.iter().any(|a| a.len() != dim) {
            return Err(Error::input("discrete mark atoms must share a dimension"));
        }
        if masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::input("discrete mark masses must be finite and nonnegative"));
        }
        let total: f64 = masses.iter().sum();
        if total <= 0.0 {
            return Err(Error::input("discrete mark law has zero total mass"));
        }
        let weights = masses.iter().map(|m| m / total).collect();
        Self::build(MarkLaw::Discrete { atoms, weights }, total)
    }

    pub fn from_law(law: MarkLaw) -> Result<Self> {
        match law {
            MarkLaw::Discrete { atoms, weights } => Self::discrete(atoms, weights),
            other => Self::build(other, 1.0),
        }
    }

    /// Rescale the total mass `Q(R)`.
    pub fn with_mass(mut self, mass: f64) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::input("mark measure mass must be positive and finite"));
        }
        let factor = mass / self.mass;
        self.nodes = Arc::new(self.nodes.iter().map(|(r, w)| (r.clone(), w * factor)).collect());
        self.mass = mass;
        Ok(self)
    }

    fn build(law: MarkLaw, mass: f64) -> Result<Self> {
        let nodes = match &law {
            MarkLaw::Uniform { dim } | MarkLaw::Gaussian { dim } => {
                if *dim == 0 || *dim > QUADRATURE_POINTS.len() {
                    return Err(Error::input(format!(
                        "continuous mark dimension must be in 1..={}",
                        QUADRATURE_POINTS.len()
                    )));
                }
                let p = QUADRATURE_POINTS[*dim - 1];
                let rule = if matches!(law, MarkLaw::Uniform { .. }) {
                    gauss_legendre_unit(p)
                } else {
                    gauss_hermite_normal(p)
                };
                tensor_rule(&rule, *dim, mass)
            }
            MarkLaw::Discrete { atoms, weights } => {
                atoms.iter().cloned().zip(weights.iter().map(|w| w * mass)).collect()
            }
        };
        Ok(MarkMeasure { law, mass, nodes: Arc::new(nodes) })
    }

    pub fn law(&self) -> &MarkLaw {
        &self.law
    }

    /// Total mass `Q(R)`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn dim(&self) -> usize {
        match &self.law {
            MarkLaw::Uniform { dim } | MarkLaw::Gaussian { dim } => *dim,
            MarkLaw::Discrete { atoms, .. } => atoms[0].len(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.law, MarkLaw::Discrete { .. })
    }

    /// Quadrature nodes `(r, w)` with `Σ w f(r) ≈ ∫ f dQ`; exact for discrete laws.
    pub fn nodes(&self) -> &[(Vec<f64>, f64)] {
        &self.nodes
    }

    /// `∫ f dQ` by the stored quadrature rule.
    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.nodes.iter().map(|(r, w)| w * f(r)).sum()
    }

    /// Draw one mark from the normalised law `Q / Q(R)`.
    pub fn sample(&self, rng: &mut NoiseStream, out: &mut Vec<f64>) {
        out.clear();
        match &self.law {
            MarkLaw::Uniform { dim } => out.extend((0..*dim).map(|_| rng.uniform())),
            MarkLaw::Gaussian { dim } => out.extend((0..*dim).map(|_| rng.normal())),
            MarkLaw::Discrete { atoms, weights } => {
                let u = rng.uniform();
                let mut acc = 0.0;
                let mut chosen = atoms.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        chosen = i;
                        break;
                    }
                }
                out.extend_from_slice(&atoms[chosen]);
            }
        }
    }
}

fn tensor_rule(rule: &[(f64, f64)], dim: usize, mass: f64) -> Vec<(Vec<f64>, f64)> {
    let mut nodes: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), mass)];
    for _ in 0..dim {
        nodes = nodes
            .into_iter()
            .flat_map(|(r, w)| {
                rule.iter().map(move |(x, wx)| {
                    let mut r2 = r.clone();
                    r2.push(*x);
                    (r2, w * wx)
                })
            })
            .collect();
    }
    nodes
}

/// One point of the dominating Poisson field on `[0,T] × R × [0, λ̄]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasePoint {
    pub time: f64,
    /// Noise dimension `j`.
    pub dim: usize,
    pub mark: Vec<f64>,
    pub height: f64,
}

/// Time-sorted points of the `l` independent dominating Poisson fields with
/// intensity `dt ⊗ Q^{(j)}(dr) ⊗ ds` restricted to heights `s ≤ λ̄^{(j)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasePointField {
    pub points: Vec<BasePoint>,
    pub horizon: f64,
    pub height_bound: Vec<f64>,
    pub q_mass: Vec<f64>,
}

impl BasePointField {
    pub fn dims(&self) -> usize {
        self.height_bound.len()
    }

    pub fn count_in_dim(&self, j: usize) -> usize {
        self.points.iter().filter(|p| p.dim == j).count()
    }

    /// Points with time in `(from, to]`, as an index range.
    pub fn range_between(&self, from: f64, to: f64) -> std::ops::Range<usize> {
        let lo = self.points.partition_point(|p| p.time <= from);
        let hi = self.points.partition_point(|p| p.time <= to);
        lo..hi
    }
}

/// Sample the dominating field: for each dimension `j` a Poisson number of
/// points with mean `T · λ̄^{(j)} · Q^{(j)}(R)`, uniform times, marks from the
/// normalised `Q^{(j)}` and heights uniform on `[0, λ̄^{(j)}]`.
///
/// Times and heights come from `points`; marks from `marks`.
pub fn sample_base_field(
    points: &mut NoiseStream,
    marks: &mut NoiseStream,
    horizon: f64,
    q: &[MarkMeasure],
    height_bound: &[f64],
) -> Result<BasePointField> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::input("horizon T must be positive and finite"));
    }
    if q.len() != height_bound.len() {
        return Err(Error::input("one mark measure per noise dimension required"));
    }
    if let Some(b) = height_bound.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
        return Err(Error::input(format!(
            "height bound {b} must be positive and finite for thinning"
        )));
    }
    let mut out = Vec::new();
    let mut mark = Vec::new();
    for (j, (qj, &bound)) in q.iter().zip(height_bound).enumerate() {
        let mean = horizon * bound * qj.mass();
        let count = Poisson::new(mean)
            .map_err(|e| Error::input(format!("Poisson mean {mean}: {e}")))?
            .sample(points) as usize;
        for _ in 0..count {
            let time = horizon * points.uniform();
            let height = bound * points.uniform();
            qj.sample(marks, &mut mark);
            out.push(BasePoint { time, dim: j, mark: mark.clone(), height });
        }
    }
    // Stable sort keeps per-dimension insertion order for (improbable) ties.
    out.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.dim.cmp(&b.dim)));
    Ok(BasePointField {
        points: out,
        horizon,
        height_bound: height_bound.to_vec(),
        q_mass: q.iter().map(MarkMeasure::mass).collect(),
    })
}

/// The common base field of replication `replication`.
pub fn common_base_field(
    seeds: &SeedSpec,
    replication: u64,
    horizon: f64,
    q: &[MarkMeasure],
    height_bound: &[f64],
) -> Result<BasePointField> {
    let mut pts = derive_stream(seeds, StreamKey::new(replication, entity::BASE_FIELD, Purpose::BasePoints))?;
    let mut mks = derive_stream(seeds, StreamKey::new(replication, entity::MARKS, Purpose::Marks))?;
    sample_base_field(&mut pts, &mut mks, horizon, q, height_bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{pearson, sample_variance, variance_std_err, Estimate};

    fn spec() -> SeedSpec {
        SeedSpec::new(7, 11)
    }

    #[test]
    fn same_key_same_bytes() {
        let key = StreamKey::particle(3, 5, Purpose::Brownian);
        let mut a = derive_stream(&spec(), key).unwrap();
        let mut b = derive_stream(&spec(), key).unwrap();
        let xs: Vec<u64> = (0..64).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..64).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn distinct_keys_uncorrelated() {
        let mut a = derive_stream(&spec(), StreamKey::particle(0, 0, Purpose::Brownian)).unwrap();
        let mut b = derive_stream(&spec(), StreamKey::particle(0, 1, Purpose::Brownian)).unwrap();
        let n = 10_000;
        let xs: Vec<f64> = (0..n).map(|_| a.uniform()).collect();
        let ys: Vec<f64> = (0..n).map(|_| b.uniform()).collect();
        // Under independence the sample correlation has standard error 1/√n.
        let r = pearson(&xs, &ys);
        assert!(r.abs() < 3.0 / (n as f64).sqrt(), "correlation {r}");
    }

    #[test]
    fn distinct_seeds_differ_early() {
        let key = StreamKey::particle(0, 0, Purpose::Brownian);
        let mut a = derive_stream(&SeedSpec::new(1, 1), key).unwrap();
        let mut b = derive_stream(&SeedSpec::new(1, 2), key).unwrap();
        let xs: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn out_of_range_key_rejected() {
        let bad = StreamKey::particle(0, MAX_PARTICLE, Purpose::Brownian);
        assert!(matches!(derive_stream(&spec(), bad), Err(Error::Config(_))));
        let bad_rep = StreamKey::particle(MAX_REPLICATION, 0, Purpose::Brownian);
        assert!(matches!(derive_stream(&spec(), bad_rep), Err(Error::Config(_))));
        let sentinel = StreamKey::new(0, entity::BASE_FIELD, Purpose::BasePoints);
        assert!(derive_stream(&spec(), sentinel).is_ok());
    }

    #[test]
    fn seeds_parse_decimal_and_hex() {
        assert_eq!(parse_seed("42").unwrap(), 42);
        assert_eq!(parse_seed("0xff").unwrap(), 255);
        assert_eq!(parse_seed("0xFFFFFFFFFFFFFFFF").unwrap(), u64::MAX);
        assert!(parse_seed("-1").is_err());
        assert!(parse_seed("0x1g").is_err());
    }

    #[test]
    fn increments_on_trivial_grid_are_empty() {
        let mut s = derive_stream(&spec(), StreamKey::particle(0, 0, Purpose::Brownian)).unwrap();
        assert!(brownian_increments(&mut s, &[0.0], 2).unwrap().is_empty());
        assert!(brownian_increments(&mut s, &[0.0, 0.5, 0.5], 1).is_err());
        assert!(brownian_increments(&mut s, &[0.1, 0.5], 1).is_err());
    }

    #[test]
    fn unit_increment_moments() {
        let reps = 100_000;
        let xs: Vec<f64> = (0..reps)
            .map(|r| {
                let mut s = derive_stream(&spec(), StreamKey::particle(r, 0, Purpose::Brownian)).unwrap();
                brownian_increments(&mut s, &[0.0, 1.0], 1).unwrap()[0][0]
            })
            .collect();
        let e = Estimate::from_samples(&xs);
        assert!(e.mean.abs() < 3.0 / (reps as f64).sqrt(), "mean {}", e.mean);
        let v = sample_variance(&xs);
        assert!((v - 1.0).abs() < 3.0 * variance_std_err(&xs), "variance {v}");
    }

    #[test]
    fn summed_increments_have_additive_variance() {
        let reps = 20_000;
        let xs: Vec<f64> = (0..reps)
            .map(|r| {
                let mut s = derive_stream(&spec(), StreamKey::particle(r, 1, Purpose::Brownian)).unwrap();
                let inc = brownian_increments(&mut s, &[0.0, 0.25, 0.5], 1).unwrap();
                inc[0][0] + inc[1][0]
            })
            .collect();
        let v = sample_variance(&xs);
        assert!((v - 0.5).abs() < 3.0 * variance_std_err(&xs), "variance {v}");
    }

    #[test]
    fn brownian_path_grid_values_independent_of_queries() {
        let mk = || {
            BrownianPath::new(
                2,
                0.125,
                derive_stream(&spec(), StreamKey::particle(0, 0, Purpose::Brownian)).unwrap(),
                derive_stream(&spec(), StreamKey::particle(0, 0, Purpose::Aux)).unwrap(),
            )
        };
        let mut coarse = mk();
        let mut fine = mk();
        let mut a = [0.0; 2];
        let mut b = [0.0; 2];
        for (i, t) in [0.3, 0.5, 0.51, 0.75, 1.0].iter().enumerate() {
            fine.value_at(*t, &mut b);
            if i == 1 {
                coarse.value_at(0.5, &mut a);
                assert_eq!(a, b);
            }
        }
        coarse.value_at(1.0, &mut a);
        assert_eq!(a, b);
    }

    #[test]
    fn bridge_increment_variance() {
        let reps = 20_000;
        let xs: Vec<f64> = (0..reps)
            .map(|r| {
                let mut p = BrownianPath::new(
                    1,
                    1.0,
                    derive_stream(&spec(), StreamKey::particle(r, 0, Purpose::Brownian)).unwrap(),
                    derive_stream(&spec(), StreamKey::particle(r, 0, Purpose::Aux)).unwrap(),
                );
                let mut w = [0.0];
                p.value_at(0.3, &mut w);
                w[0]
            })
            .collect();
        let v = sample_variance(&xs);
        assert!((v - 0.3).abs() < 3.0 * variance_std_err(&xs), "variance {v}");
    }

    #[test]
    fn base_field_rejects_bad_inputs() {
        let q = [MarkMeasure::uniform(1).unwrap()];
        let mut a = derive_stream(&spec(), StreamKey::new(0, entity::BASE_FIELD, Purpose::BasePoints)).unwrap();
        let mut b = a.clone();
        assert!(sample_base_field(&mut a, &mut b, 0.0, &q, &[2.0]).is_err());
        assert!(sample_base_field(&mut a, &mut b, 1.0, &q, &[f64::INFINITY]).is_err());
        assert!(sample_base_field(&mut a, &mut b, 1.0, &q, &[0.0]).is_err());
    }

    #[test]
    fn base_field_count_law() {
        let q = [MarkMeasure::uniform(1).unwrap()];
        let reps = 10_000u64;
        let counts: Vec<f64> = (0..reps)
            .map(|r| common_base_field(&spec(), r, 1.0, &q, &[2.0]).unwrap().points.len() as f64)
            .collect();
        let e = Estimate::from_samples(&counts);
        assert!(e.within(2.0, 3.0), "mean {:?}", e);
        let v = sample_variance(&counts);
        assert!((v - 2.0).abs() < 3.0 * variance_std_err(&counts), "variance {v}");
    }

    #[test]
    fn base_field_sorted_heights_bounded() {
        let q = [MarkMeasure::gaussian(1).unwrap(), MarkMeasure::uniform(2).unwrap()];
        let f = common_base_field(&spec(), 4, 5.0, &q, &[3.0, 1.5]).unwrap();
        assert!(f.points.windows(2).all(|w| w[0].time <= w[1].time));
        for p in &f.points {
            assert!(p.height >= 0.0 && p.height <= f.height_bound[p.dim]);
            assert_eq!(p.mark.len(), q[p.dim].dim());
            assert!(p.time >= 0.0 && p.time <= 5.0);
        }
    }

    #[test]
    fn base_field_depends_only_on_common_seed() {
        let q = [MarkMeasure::gaussian(1).unwrap()];
        let a = common_base_field(&SeedSpec::new(5, 1), 0, 3.0, &q, &[2.0]).unwrap();
        let b = common_base_field(&SeedSpec::new(5, 999), 0, 3.0, &q, &[2.0]).unwrap();
        assert_eq!(a, b);
        let c = common_base_field(&SeedSpec::new(6, 1), 0, 3.0, &q, &[2.0]).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn discrete_marks_follow_weights() {
        let q = MarkMeasure::discrete(vec![vec![0.0], vec![1.0]], vec![1.0, 3.0]).unwrap();
        assert_eq!(q.mass(), 4.0);
        let mut s = derive_stream(&spec(), StreamKey::new(0, entity::MARKS, Purpose::Marks)).unwrap();
        let mut m = Vec::new();
        let n = 20_000;
        let ones = (0..n)
            .filter(|_| {
                q.sample(&mut s, &mut m);
                m[0] == 1.0
            })
            .count() as f64
            / n as f64;
        let se = (0.75f64 * 0.25 / n as f64).sqrt();
        assert!((ones - 0.75).abs() < 3.0 * se);
        assert!((q.integrate(|r| r[0]) - 3.0).abs() < 1e-12);
    }
}
